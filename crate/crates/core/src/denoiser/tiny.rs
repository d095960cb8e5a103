//! Tiny trainable conditional denoiser.
//!
//! Two fully-connected layers with a tanh nonlinearity. The input is the
//! flattened grid concatenated with a sinusoidal time embedding and a learned
//! condition embedding (row 0 of the table is the null condition). The width
//! knob `hidden` is the capacity axis of the sweep experiments.

use std::ops::Range;

use crate::denoiser::{Condition, Denoiser};
use crate::error::Error;
use crate::grid::{FeatureGrid, GridDims};
use crate::rng::Prng;
use crate::Result;

/// Offsets of each tensor inside the flat parameter vector.
#[derive(Debug, Clone)]
pub struct TinyLayout {
    pub w1: Range<usize>,
    pub b1: Range<usize>,
    pub w2: Range<usize>,
    pub b2: Range<usize>,
    pub embed: Range<usize>,
}

#[derive(Debug, Clone)]
pub struct TinyDenoiser {
    dims: GridDims,
    step_count: usize,
    hidden: usize,
    time_dim: usize,
    cond_dim: usize,
    uncond_dropout: f64,
    /// Row 0 is always `Condition::Null`.
    registry: Vec<Condition>,
    /// Flat parameters: [w1 | b1 | w2 | b2 | embed], row-major matrices.
    pub params: Vec<f64>,
}

impl TinyDenoiser {
    /// Fresh model with N(0, 1/√fan_in) weights, zero biases, and one
    /// embedding row per condition (plus the null row). `conditions` may not
    /// contain `Null` or `Random` variants.
    pub fn new(
        dims: GridDims,
        step_count: usize,
        hidden: usize,
        time_dim: usize,
        cond_dim: usize,
        conditions: &[Condition],
        uncond_dropout: f64,
        seed: u64,
    ) -> Result<Self> {
        if step_count == 0 {
            return Err(Error::Model("step count must be positive".into()));
        }
        if hidden == 0 || cond_dim == 0 || time_dim == 0 || time_dim % 2 != 0 {
            return Err(Error::Model(
                "hidden and cond_dim must be positive, time_dim positive and even".into(),
            ));
        }
        if !(0.0..1.0).contains(&uncond_dropout) {
            return Err(Error::Model(format!(
                "uncond_dropout must be in [0,1), got {uncond_dropout}"
            )));
        }
        let mut registry = vec![Condition::Null];
        let mut extra: Vec<Condition> = conditions.to_vec();
        extra.sort();
        extra.dedup();
        for c in extra {
            match c {
                Condition::Null => continue,
                Condition::Random(_) => {
                    return Err(Error::Model(
                        "random-prompt surrogates are not trainable rows".into(),
                    ))
                }
                other => registry.push(other),
            }
        }
        let mut model = TinyDenoiser {
            dims,
            step_count,
            hidden,
            time_dim,
            cond_dim,
            uncond_dropout,
            registry,
            params: Vec::new(),
        };
        let layout = model.layout();
        let total = layout.embed.end;
        let mut params = vec![0.0; total];
        let mut rng = Prng::from_seed(seed).child_tagged("tiny-init", 0);
        let in_scale = 1.0 / (model.in_dim() as f64).sqrt();
        for p in &mut params[layout.w1.clone()] {
            *p = rng.next_normal() * in_scale;
        }
        let h_scale = 1.0 / (hidden as f64).sqrt();
        for p in &mut params[layout.w2.clone()] {
            *p = rng.next_normal() * h_scale;
        }
        let e_scale = 1.0 / (cond_dim as f64).sqrt();
        for p in &mut params[layout.embed.clone()] {
            *p = rng.next_normal() * e_scale;
        }
        model.params = params;
        Ok(model)
    }

    /// Rebuild from stored parts (checkpoint loading).
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        dims: GridDims,
        step_count: usize,
        hidden: usize,
        time_dim: usize,
        cond_dim: usize,
        registry: Vec<Condition>,
        uncond_dropout: f64,
        params: Vec<f64>,
    ) -> Result<Self> {
        if registry.first() != Some(&Condition::Null) {
            return Err(Error::Model("registry row 0 must be the null condition".into()));
        }
        let model = TinyDenoiser {
            dims,
            step_count,
            hidden,
            time_dim,
            cond_dim,
            uncond_dropout,
            registry,
            params,
        };
        let expected = model.layout().embed.end;
        if model.params.len() != expected {
            return Err(Error::Model(format!(
                "parameter vector has {} entries, expected {expected}",
                model.params.len()
            )));
        }
        if model.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Model("non-finite parameter".into()));
        }
        Ok(model)
    }

    pub fn in_dim(&self) -> usize {
        self.dims.len() + self.time_dim + self.cond_dim
    }

    pub fn out_dim(&self) -> usize {
        self.dims.len()
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn time_dim(&self) -> usize {
        self.time_dim
    }

    pub fn cond_dim(&self) -> usize {
        self.cond_dim
    }

    pub fn uncond_dropout(&self) -> f64 {
        self.uncond_dropout
    }

    pub fn registry(&self) -> &[Condition] {
        &self.registry
    }

    pub fn layout(&self) -> TinyLayout {
        let w1 = self.hidden * self.in_dim();
        let b1 = self.hidden;
        let w2 = self.out_dim() * self.hidden;
        let b2 = self.out_dim();
        let embed = self.registry.len() * self.cond_dim;
        let o1 = w1;
        let o2 = o1 + b1;
        let o3 = o2 + w2;
        let o4 = o3 + b2;
        TinyLayout {
            w1: 0..o1,
            b1: o1..o2,
            w2: o2..o3,
            b2: o3..o4,
            embed: o4..o4 + embed,
        }
    }

    /// Embedding-table row for a condition; `Random` has no row.
    pub fn row_of(&self, c: &Condition) -> Option<usize> {
        self.registry.iter().position(|r| r == c)
    }

    /// The embedding vector a condition selects: a learned table row, or a
    /// reproducible pseudo-random vector for `Random(seed)` surrogates.
    pub fn embedding_for(&self, c: &Condition) -> Result<Vec<f64>> {
        if let Condition::Random(seed) = c {
            let mut rng = Prng::from_seed(*seed).child_tagged("random-prompt", 0);
            let scale = 1.0 / (self.cond_dim as f64).sqrt();
            return Ok((0..self.cond_dim).map(|_| rng.next_normal() * scale).collect());
        }
        let row = self
            .row_of(c)
            .ok_or_else(|| Error::UnknownCondition(c.to_string()))?;
        let layout = self.layout();
        let start = layout.embed.start + row * self.cond_dim;
        Ok(self.params[start..start + self.cond_dim].to_vec())
    }

    /// Standard sinusoidal embedding of the integer timestep.
    pub fn time_embedding(&self, t: usize) -> Vec<f64> {
        let half = self.time_dim / 2;
        let mut out = Vec::with_capacity(self.time_dim);
        for i in 0..half {
            let freq = (10_000f64).powf(-(i as f64) / half as f64);
            let arg = t as f64 * freq;
            out.push(arg.sin());
            out.push(arg.cos());
        }
        out
    }

    /// Assemble the network input [flattened x_t | time emb | cond emb].
    pub(crate) fn input_vector(
        &self,
        x_t: &FeatureGrid,
        c: &Condition,
        t: usize,
    ) -> Result<Vec<f64>> {
        let mut z = Vec::with_capacity(self.in_dim());
        z.extend_from_slice(x_t.as_slice());
        z.extend_from_slice(&self.time_embedding(t));
        z.extend_from_slice(&self.embedding_for(c)?);
        Ok(z)
    }

    /// Forward pass returning the output plus the hidden activations needed
    /// for backprop.
    pub(crate) fn forward_from_input(&self, z: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let layout = self.layout();
        let in_dim = self.in_dim();
        let w1 = &self.params[layout.w1];
        let b1 = &self.params[layout.b1];
        let w2 = &self.params[layout.w2];
        let b2 = &self.params[layout.b2];
        let mut h = vec![0.0; self.hidden];
        for (i, hv) in h.iter_mut().enumerate() {
            let row = &w1[i * in_dim..(i + 1) * in_dim];
            let mut acc = b1[i];
            for (w, x) in row.iter().zip(z) {
                acc += w * x;
            }
            *hv = acc.tanh();
        }
        let mut y = vec![0.0; self.out_dim()];
        for (o, yv) in y.iter_mut().enumerate() {
            let row = &w2[o * self.hidden..(o + 1) * self.hidden];
            let mut acc = b2[o];
            for (w, hv) in row.iter().zip(&h) {
                acc += w * hv;
            }
            *yv = acc;
        }
        (y, h)
    }

    fn check_inputs(&self, x_t: &FeatureGrid, t: usize) -> Result<()> {
        if x_t.dims() != self.dims {
            return Err(Error::DimMismatch {
                expected: self.dims,
                got: x_t.dims(),
            });
        }
        if t == 0 || t > self.step_count {
            return Err(Error::Model(format!(
                "timestep {t} outside schedule [1, {}]",
                self.step_count
            )));
        }
        Ok(())
    }
}

impl Denoiser for TinyDenoiser {
    fn predict_eps(&self, x_t: &FeatureGrid, c: &Condition, t: usize) -> Result<FeatureGrid> {
        self.check_inputs(x_t, t)?;
        let z = self.input_vector(x_t, c, t)?;
        let (y, _) = self.forward_from_input(&z);
        FeatureGrid::from_values(self.dims, y)
    }

    fn grid_dims(&self) -> GridDims {
        self.dims
    }

    fn step_count(&self) -> usize {
        self.step_count
    }
}
