//! The C×T×F latent array that mixing, inversion, and denoising act on.

use crate::error::Error;
use crate::Result;

/// Grid shape: channels × time frames × frequency bins.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridDims {
    pub channels: usize,
    pub frames: usize,
    pub bins: usize,
}

impl GridDims {
    pub fn new(channels: usize, frames: usize, bins: usize) -> Result<Self> {
        if channels == 0 || frames == 0 || bins == 0 {
            return Err(Error::Grid(format!(
                "dimensions must be positive, got {channels}x{frames}x{bins}"
            )));
        }
        Ok(GridDims {
            channels,
            frames,
            bins,
        })
    }

    pub fn len(&self) -> usize {
        self.channels * self.frames * self.bins
    }

    pub fn is_empty(&self) -> bool {
        false // dimensions are positive by construction
    }
}

/// Dense row-major (c, t, f) array of finite reals.
///
/// Dimensions are fixed at construction; constructors reject non-finite
/// values so downstream arithmetic can assume finiteness.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGrid {
    dims: GridDims,
    values: Vec<f64>,
}

impl FeatureGrid {
    pub fn zeros(dims: GridDims) -> Self {
        FeatureGrid {
            dims,
            values: vec![0.0; dims.len()],
        }
    }

    pub fn from_values(dims: GridDims, values: Vec<f64>) -> Result<Self> {
        if values.len() != dims.len() {
            return Err(Error::Grid(format!(
                "value count {} does not match dims {:?}",
                values.len(),
                dims
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Grid("non-finite value in grid".into()));
        }
        Ok(FeatureGrid { dims, values })
    }

    /// Element-wise construction from a function of (channel, frame, bin).
    pub fn from_fn(dims: GridDims, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(dims.len());
        for c in 0..dims.channels {
            for t in 0..dims.frames {
                for b in 0..dims.bins {
                    values.push(f(c, t, b));
                }
            }
        }
        FeatureGrid { dims, values }
    }

    pub fn dims(&self) -> GridDims {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    #[inline]
    pub fn at(&self, c: usize, t: usize, b: usize) -> f64 {
        self.values[(c * self.dims.frames + t) * self.dims.bins + b]
    }

    #[inline]
    pub fn set(&mut self, c: usize, t: usize, b: usize, v: f64) {
        self.values[(c * self.dims.frames + t) * self.dims.bins + b] = v;
    }

    pub fn check_same_dims(&self, other: &FeatureGrid) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::DimMismatch {
                expected: self.dims,
                got: other.dims,
            });
        }
        Ok(())
    }

    /// self + other, element-wise.
    pub fn add(&self, other: &FeatureGrid) -> Result<FeatureGrid> {
        self.check_same_dims(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + b)
            .collect();
        Ok(FeatureGrid {
            dims: self.dims,
            values,
        })
    }

    /// self - other, element-wise.
    pub fn sub(&self, other: &FeatureGrid) -> Result<FeatureGrid> {
        self.check_same_dims(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a - b)
            .collect();
        Ok(FeatureGrid {
            dims: self.dims,
            values,
        })
    }

    pub fn scale(&self, k: f64) -> FeatureGrid {
        FeatureGrid {
            dims: self.dims,
            values: self.values.iter().map(|v| v * k).collect(),
        }
    }

    /// self + k * other.
    pub fn axpy(&self, k: f64, other: &FeatureGrid) -> Result<FeatureGrid> {
        self.check_same_dims(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + k * b)
            .collect();
        Ok(FeatureGrid {
            dims: self.dims,
            values,
        })
    }

    pub fn dot(&self, other: &FeatureGrid) -> Result<f64> {
        self.check_same_dims(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum())
    }

    pub fn sq_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn l2_norm(&self) -> f64 {
        self.sq_norm().sqrt()
    }

    pub fn max_abs_diff(&self, other: &FeatureGrid) -> Result<f64> {
        self.check_same_dims(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// Relative L2 distance ‖a−b‖ / ‖b‖ (0 when both are zero).
    pub fn rel_l2(&self, other: &FeatureGrid) -> Result<f64> {
        self.check_same_dims(other)?;
        let diff = self.sub(other)?.l2_norm();
        let denom = other.l2_norm();
        Ok(if denom == 0.0 {
            if diff == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            diff / denom
        })
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Grid of i.i.d. standard normals from the given stream.
    pub fn standard_normal(dims: GridDims, rng: &mut crate::rng::Prng) -> FeatureGrid {
        let mut values = vec![0.0; dims.len()];
        rng.fill_normal(&mut values);
        FeatureGrid { dims, values }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims() -> GridDims {
        GridDims::new(1, 2, 3).unwrap()
    }

    #[test]
    fn rejects_zero_dims() {
        assert!(GridDims::new(0, 2, 3).is_err());
    }

    #[test]
    fn rejects_non_finite() {
        assert!(FeatureGrid::from_values(dims(), vec![0.0, 1.0, f64::NAN, 0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn rejects_wrong_length() {
        assert!(FeatureGrid::from_values(dims(), vec![0.0; 5]).is_err());
    }

    #[test]
    fn indexing_is_row_major() {
        let g = FeatureGrid::from_fn(dims(), |c, t, b| (c * 100 + t * 10 + b) as f64);
        assert_eq!(g.at(0, 1, 2), 12.0);
        assert_eq!(g.as_slice()[5], 12.0);
    }

    #[test]
    fn add_checks_dims() {
        let a = FeatureGrid::zeros(dims());
        let b = FeatureGrid::zeros(GridDims::new(1, 3, 2).unwrap());
        assert!(a.add(&b).is_err());
    }

    #[test]
    fn axpy_matches_manual() {
        let a = FeatureGrid::from_values(dims(), vec![1.0; 6]).unwrap();
        let b = FeatureGrid::from_values(dims(), vec![2.0; 6]).unwrap();
        let c = a.axpy(0.5, &b).unwrap();
        assert!(c.as_slice().iter().all(|v| (*v - 2.0).abs() < 1e-15));
    }
}
