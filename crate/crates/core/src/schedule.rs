//! Diffusion noise schedules and the derived step coefficients.
//!
//! The schedule owns the β_t ladder and the cumulative products ᾱ_t that
//! every sampler and inversion operator reads. ᾱ is stored with an ᾱ_0 = 1
//! sentinel so t = 1 needs no special casing, and the recurrence
//! ᾱ_t = ᾱ_{t−1}·(1−β_t) holds exactly by construction.

use crate::error::Error;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleKind {
    Linear,
    Cosine,
}

/// The β_t / ᾱ_t ladder shared by all samplers.
///
/// Immutable after construction; safe to share across concurrent readers.
#[derive(Debug, Clone)]
pub struct NoiseSchedule {
    kind: ScheduleKind,
    betas: Vec<f64>,
    alphas: Vec<f64>,
    /// Length T+1 with alpha_bars[0] = 1.
    alpha_bars: Vec<f64>,
}

impl NoiseSchedule {
    /// Linear β ladder, endpoints inclusive.
    pub fn linear(step_count: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if step_count == 0 {
            return Err(Error::Schedule("step count must be at least 1".into()));
        }
        if !beta_start.is_finite() || !beta_end.is_finite() {
            return Err(Error::Schedule("non-finite beta bound".into()));
        }
        if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
            return Err(Error::Schedule(format!(
                "need 0 < beta_start <= beta_end < 1, got [{beta_start}, {beta_end}]"
            )));
        }
        let betas: Vec<f64> = if step_count == 1 {
            vec![beta_start]
        } else {
            (0..step_count)
                .map(|i| {
                    beta_start + (beta_end - beta_start) * i as f64 / (step_count - 1) as f64
                })
                .collect()
        };
        Self::from_betas(ScheduleKind::Linear, betas)
    }

    /// Cosine ᾱ profile: ᾱ_t = f(t)/f(0) with
    /// f(u) = cos²(((u/T + offset)/(1 + offset))·π/2), β back-derived from
    /// consecutive ratios and clipped to ≤ 0.999. ᾱ is recomputed from the
    /// clipped βs so the recurrence invariant survives clipping.
    pub fn cosine(step_count: usize, offset: f64) -> Result<Self> {
        if step_count == 0 {
            return Err(Error::Schedule("step count must be at least 1".into()));
        }
        if !(offset.is_finite() && offset > 0.0) {
            return Err(Error::Schedule(format!(
                "offset must be a small positive real, got {offset}"
            )));
        }
        let t_total = step_count as f64;
        let f = |u: f64| {
            let angle = ((u / t_total + offset) / (1.0 + offset)) * std::f64::consts::FRAC_PI_2;
            angle.cos().powi(2)
        };
        let betas: Vec<f64> = (1..=step_count)
            .map(|t| (1.0 - f(t as f64) / f(t as f64 - 1.0)).min(0.999))
            .collect();
        Self::from_betas(ScheduleKind::Cosine, betas)
    }

    fn from_betas(kind: ScheduleKind, betas: Vec<f64>) -> Result<Self> {
        let mut alphas = Vec::with_capacity(betas.len());
        let mut alpha_bars = Vec::with_capacity(betas.len() + 1);
        alpha_bars.push(1.0);
        let mut product = 1.0;
        for (i, beta) in betas.iter().enumerate() {
            if !(beta.is_finite() && *beta > 0.0 && *beta < 1.0) {
                return Err(Error::Schedule(format!("beta[{i}] = {beta} out of (0,1)")));
            }
            let alpha = 1.0 - beta;
            product *= alpha;
            if product <= 0.0 {
                return Err(Error::Schedule(format!("alpha_bar underflowed at t={}", i + 1)));
            }
            alphas.push(alpha);
            alpha_bars.push(product);
        }
        Ok(NoiseSchedule {
            kind,
            betas,
            alphas,
            alpha_bars,
        })
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn step_count(&self) -> usize {
        self.betas.len()
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alphas[t - 1]
    }

    /// ᾱ_t for t in 0..=T (ᾱ_0 = 1).
    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bars[t]
    }

    /// Coefficients of the forward marginal x_t = c₀·x_0 + c₁·ε.
    pub fn forward_coeffs(&self, t: usize) -> (f64, f64) {
        let ab = self.alpha_bar(t);
        (ab.sqrt(), (1.0 - ab).sqrt())
    }

    /// Whether the terminal marginal is close enough to the prior for
    /// generation from pure noise to make sense. Test schedules with small T
    /// legitimately fail this; the CLI warns on it.
    pub fn terminal_is_noisy(&self) -> bool {
        let last = *self.alpha_bars.last().unwrap();
        last > 0.0 && last < 0.05
    }

    fn check_step_index(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.step_count() {
            return Err(Error::Schedule(format!(
                "step index {t} outside [1, {}]",
                self.step_count()
            )));
        }
        Ok(())
    }

    /// DDPM reverse-step coefficients for the (possibly strided) transition
    /// t → t_prev, generalized through the ᾱ ratio ᾱ_t/ᾱ_{t_prev}:
    ///
    ///   μ = mean_x_coef·x_t − mean_eps_coef·ε,   x_{t_prev} = μ + σ·z
    ///
    /// with mean_x_coef = 1/√α̃, mean_eps_coef = β̃/(√α̃·√(1−ᾱ_t)) and
    /// σ² = ((1−ᾱ_{t_prev})/(1−ᾱ_t))·β̃ where α̃ = ᾱ_t/ᾱ_{t_prev},
    /// β̃ = 1−α̃ (the posterior variance convention). σ is exactly 0 for
    /// t_prev = 0, making the final step deterministic.
    pub fn reverse_coeffs(&self, t: usize, t_prev: usize) -> Result<ReverseCoeffs> {
        self.check_step_index(t)?;
        if t_prev >= t {
            return Err(Error::Schedule(format!(
                "reverse step needs t_prev < t, got {t_prev} >= {t}"
            )));
        }
        let ab_t = self.alpha_bar(t);
        let ab_prev = self.alpha_bar(t_prev);
        let alpha_tilde = ab_t / ab_prev;
        let beta_tilde = 1.0 - alpha_tilde;
        let sqrt_alpha_tilde = alpha_tilde.sqrt();
        let one_minus_ab_t = 1.0 - ab_t;
        let sigma_sq = (1.0 - ab_prev) / one_minus_ab_t * beta_tilde;
        Ok(ReverseCoeffs {
            mean_x_coef: 1.0 / sqrt_alpha_tilde,
            mean_eps_coef: beta_tilde / (sqrt_alpha_tilde * one_minus_ab_t.sqrt()),
            sigma: sigma_sq.max(0.0).sqrt(),
        })
    }
}

/// Coefficients of one DDPM posterior step.
#[derive(Debug, Clone, Copy)]
pub struct ReverseCoeffs {
    pub mean_x_coef: f64,
    pub mean_eps_coef: f64,
    pub sigma: f64,
}

/// Strictly decreasing timestep indices in [1, T]; the final listed index
/// steps down to 0 and produces x_0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepPlan {
    indices: Vec<usize>,
}

impl StepPlan {
    pub fn from_indices(indices: Vec<usize>, step_count: usize) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::StepPlan("plan must contain at least one step".into()));
        }
        for w in indices.windows(2) {
            if w[1] >= w[0] {
                return Err(Error::StepPlan(format!(
                    "indices must be strictly decreasing, got {} then {}",
                    w[0], w[1]
                )));
            }
        }
        let first = indices[0];
        let last = *indices.last().unwrap();
        if last == 0 || first > step_count {
            return Err(Error::StepPlan(format!(
                "indices must lie in [1, {step_count}], got range [{last}, {first}]"
            )));
        }
        Ok(StepPlan { indices })
    }

    /// All T steps: [T, T−1, …, 1].
    pub fn full(step_count: usize) -> Result<Self> {
        if step_count == 0 {
            return Err(Error::StepPlan("schedule has no steps".into()));
        }
        Ok(StepPlan {
            indices: (1..=step_count).rev().collect(),
        })
    }

    /// `n_steps` indices evenly spread over [1, T], starting at T.
    pub fn strided(step_count: usize, n_steps: usize) -> Result<Self> {
        if n_steps == 0 || n_steps > step_count {
            return Err(Error::StepPlan(format!(
                "need 1 <= n_steps <= {step_count}, got {n_steps}"
            )));
        }
        let mut indices: Vec<usize> = (0..n_steps)
            .map(|i| {
                let frac = (n_steps - i) as f64 / n_steps as f64;
                (frac * step_count as f64).round().max(1.0) as usize
            })
            .collect();
        indices.dedup();
        StepPlan::from_indices(indices, step_count)
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn first(&self) -> usize {
        self.indices[0]
    }

    /// Descending reverse transitions (t, t_prev), ending at (…, 0).
    pub fn transitions(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let next = self.indices.iter().skip(1).copied().chain(std::iter::once(0));
        self.indices.iter().copied().zip(next)
    }

    /// Ascending hops (from_level, to_level) for inversion, starting at
    /// (0, t_last) and ending at (…, t_first).
    pub fn ascents(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let from = std::iter::once(0).chain(self.indices.iter().rev().copied());
        from.zip(self.indices.iter().rev().copied())
    }
}
