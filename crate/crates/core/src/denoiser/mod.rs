//! The noise-prediction contract ε_θ(x_t, c, t) and its two implementations:
//! an exact analytic denoiser for Gaussian source models (the oracle) and a
//! tiny trainable conditional denoiser.

mod analytic;
mod tiny;
mod train;

pub use analytic::GaussianSourceModel;
pub use tiny::TinyDenoiser;
pub use train::{train, TrainConfig, TrainReport};

use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};

use crate::error::Error;
use crate::grid::{FeatureGrid, GridDims};
use crate::Result;

/// Conditioning signal: null, a source label, a composite of labels, or a
/// surrogate for an unrelated random prompt.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Condition {
    Null,
    Label(u32),
    /// Sorted, deduplicated, non-empty label set.
    Composite(Vec<u32>),
    /// Carries its own seed so the surrogate embedding is reproducible.
    Random(u64),
}

impl Condition {
    /// Composite condition over a label set; sorts and deduplicates.
    pub fn composite(mut ids: Vec<u32>) -> Result<Condition> {
        ids.sort_unstable();
        ids.dedup();
        if ids.is_empty() {
            return Err(Error::Model("composite condition needs at least one label".into()));
        }
        Ok(Condition::Composite(ids))
    }

    pub fn pair(a: u32, b: u32) -> Result<Condition> {
        Self::composite(vec![a, b])
    }

    pub fn is_null(&self) -> bool {
        matches!(self, Condition::Null)
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Condition::Null => write!(f, "null"),
            Condition::Label(id) => write!(f, "label:{id}"),
            Condition::Composite(ids) => {
                write!(f, "mix:")?;
                for (i, id) in ids.iter().enumerate() {
                    if i > 0 {
                        write!(f, "+")?;
                    }
                    write!(f, "{id}")?;
                }
                Ok(())
            }
            Condition::Random(seed) => write!(f, "random:{seed}"),
        }
    }
}

/// Conditional noise predictor. Implementations must be deterministic:
/// repeated calls with identical arguments are bit-identical.
pub trait Denoiser {
    fn predict_eps(&self, x_t: &FeatureGrid, c: &Condition, t: usize) -> Result<FeatureGrid>;

    /// Grid shape the model operates on.
    fn grid_dims(&self) -> GridDims;

    /// Largest valid timestep index.
    fn step_count(&self) -> usize;
}

impl<D: Denoiser + ?Sized> Denoiser for &D {
    fn predict_eps(&self, x_t: &FeatureGrid, c: &Condition, t: usize) -> Result<FeatureGrid> {
        (**self).predict_eps(x_t, c, t)
    }

    fn grid_dims(&self) -> GridDims {
        (**self).grid_dims()
    }

    fn step_count(&self) -> usize {
        (**self).step_count()
    }
}

/// Wrapper that counts null-condition and conditioned calls; used to prove
/// that guidance at ω ∈ {0, 1} never evaluates the skipped branch.
pub struct CountingDenoiser<D> {
    inner: D,
    null_calls: AtomicUsize,
    cond_calls: AtomicUsize,
}

impl<D: Denoiser> CountingDenoiser<D> {
    pub fn new(inner: D) -> Self {
        CountingDenoiser {
            inner,
            null_calls: AtomicUsize::new(0),
            cond_calls: AtomicUsize::new(0),
        }
    }

    pub fn null_calls(&self) -> usize {
        self.null_calls.load(Ordering::Relaxed)
    }

    pub fn cond_calls(&self) -> usize {
        self.cond_calls.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.null_calls.store(0, Ordering::Relaxed);
        self.cond_calls.store(0, Ordering::Relaxed);
    }

    pub fn into_inner(self) -> D {
        self.inner
    }
}

impl<D: Denoiser> Denoiser for CountingDenoiser<D> {
    fn predict_eps(&self, x_t: &FeatureGrid, c: &Condition, t: usize) -> Result<FeatureGrid> {
        if c.is_null() {
            self.null_calls.fetch_add(1, Ordering::Relaxed);
        } else {
            self.cond_calls.fetch_add(1, Ordering::Relaxed);
        }
        self.inner.predict_eps(x_t, c, t)
    }

    fn grid_dims(&self) -> GridDims {
        self.inner.grid_dims()
    }

    fn step_count(&self) -> usize {
        self.inner.step_count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn composite_sorts_and_dedups() {
        let c = Condition::composite(vec![3, 1, 3]).unwrap();
        assert_eq!(c, Condition::Composite(vec![1, 3]));
        assert!(Condition::composite(vec![]).is_err());
    }

    #[test]
    fn display_forms() {
        assert_eq!(Condition::Null.to_string(), "null");
        assert_eq!(Condition::Label(2).to_string(), "label:2");
        assert_eq!(Condition::pair(2, 0).unwrap().to_string(), "mix:0+2");
        assert_eq!(Condition::Random(9).to_string(), "random:9");
    }
}
