//! Exact analytic denoiser for diagonal-Gaussian source models.
//!
//! Each condition k owns N(μ_k, diag(s_k²)) over clean grids. The forward
//! marginal at step t is then N(√ᾱ_t·μ_k, ᾱ_t·s_k² + (1−ᾱ_t)) per element,
//! so the posterior mean of x_0 — and with it the optimal noise prediction —
//! has a closed form. Composite conditions are sums of independent label
//! Gaussians and are derived on construction; the null condition is the
//! prior-weighted mixture with responsibilities computed in log space.

use crate::denoiser::{Condition, Denoiser};
use crate::error::Error;
use crate::grid::{FeatureGrid, GridDims};
use crate::schedule::NoiseSchedule;
use crate::Result;

const LN_TAU: f64 = 1.8378770664093453; // ln(2π)

#[derive(Debug, Clone)]
struct Component {
    condition: Condition,
    mean: FeatureGrid,
    var: Vec<f64>,
    log_prior: f64,
    prior: f64,
}

/// Mixture of per-condition diagonal Gaussians with a prior over conditions.
#[derive(Debug, Clone)]
pub struct GaussianSourceModel {
    sched: NoiseSchedule,
    dims: GridDims,
    components: Vec<Component>,
}

impl GaussianSourceModel {
    /// Build from per-label (id, mean, std) entries. When `include_pairs` is
    /// set, every unordered label pair becomes a composite component with
    /// mean μ_i+μ_j and variance s_i²+s_j². `weights`, if given, must align
    /// with the component order (labels in input order, then pairs in
    /// lexicographic order) and is normalized to sum to 1; otherwise the
    /// prior is uniform.
    pub fn new(
        sched: NoiseSchedule,
        labels: &[(u32, FeatureGrid, FeatureGrid)],
        include_pairs: bool,
        weights: Option<&[f64]>,
    ) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Model("source model needs at least one label".into()));
        }
        let dims = labels[0].1.dims();
        let mut raw: Vec<(Condition, FeatureGrid, Vec<f64>)> = Vec::new();
        for (id, mean, std) in labels {
            mean.check_same_dims(&labels[0].1)?;
            std.check_same_dims(mean)?;
            if std.as_slice().iter().any(|s| *s <= 0.0) {
                return Err(Error::Model(format!("label {id}: std must be positive")));
            }
            if raw.iter().any(|(c, _, _)| *c == Condition::Label(*id)) {
                return Err(Error::Model(format!("duplicate label id {id}")));
            }
            let var = std.as_slice().iter().map(|s| s * s).collect();
            raw.push((Condition::Label(*id), mean.clone(), var));
        }
        if include_pairs {
            for i in 0..labels.len() {
                for j in (i + 1)..labels.len() {
                    let cond = Condition::pair(labels[i].0, labels[j].0)?;
                    let mean = labels[i].1.add(&labels[j].1)?;
                    let var = labels[i]
                        .2
                        .as_slice()
                        .iter()
                        .zip(labels[j].2.as_slice())
                        .map(|(a, b)| a * a + b * b)
                        .collect();
                    raw.push((cond, mean, var));
                }
            }
        }
        let weights: Vec<f64> = match weights {
            Some(w) => {
                if w.len() != raw.len() {
                    return Err(Error::Model(format!(
                        "{} prior weights for {} components",
                        w.len(),
                        raw.len()
                    )));
                }
                if w.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                    return Err(Error::Model("prior weights must be positive".into()));
                }
                let total: f64 = w.iter().sum();
                w.iter().map(|x| x / total).collect()
            }
            None => vec![1.0 / raw.len() as f64; raw.len()],
        };
        let components = raw
            .into_iter()
            .zip(weights)
            .map(|((condition, mean, var), prior)| Component {
                condition,
                mean,
                var,
                log_prior: prior.ln(),
                prior,
            })
            .collect();
        Ok(GaussianSourceModel {
            sched,
            dims,
            components,
        })
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.sched
    }

    pub fn conditions(&self) -> impl Iterator<Item = &Condition> {
        self.components.iter().map(|c| &c.condition)
    }

    pub fn prior(&self, c: &Condition) -> Option<f64> {
        self.component(c).map(|k| self.components[k].prior)
    }

    /// Mean and std of component `c` (as stored; composite entries already
    /// carry the summed statistics).
    pub fn component_stats(&self, c: &Condition) -> Option<(&FeatureGrid, Vec<f64>)> {
        self.component(c)
            .map(|k| (&self.components[k].mean, self.components[k].var.iter().map(|v| v.sqrt()).collect()))
    }

    fn component(&self, c: &Condition) -> Option<usize> {
        self.components.iter().position(|k| k.condition == *c)
    }

    fn check_step(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.sched.step_count() {
            return Err(Error::Model(format!(
                "timestep {t} outside schedule [1, {}]",
                self.sched.step_count()
            )));
        }
        Ok(())
    }

    /// E[x_0 | x_t, k] for a single component.
    fn conditional_x0(&self, k: usize, x_t: &FeatureGrid, t: usize) -> FeatureGrid {
        let comp = &self.components[k];
        let ab = self.sched.alpha_bar(t);
        let sqrt_ab = ab.sqrt();
        let one_minus = 1.0 - ab;
        let mut out = comp.mean.clone();
        for ((o, x), (m, v)) in out
            .as_mut_slice()
            .iter_mut()
            .zip(x_t.as_slice())
            .zip(comp.mean.as_slice().iter().zip(&comp.var))
        {
            let marginal_var = ab * v + one_minus;
            let gain = sqrt_ab * v / marginal_var;
            *o = m + gain * (x - sqrt_ab * m);
        }
        out
    }

    fn eps_from_x0(&self, x_t: &FeatureGrid, x0: &FeatureGrid, t: usize) -> FeatureGrid {
        let ab = self.sched.alpha_bar(t);
        let sqrt_ab = ab.sqrt();
        let inv = 1.0 / (1.0 - ab).sqrt();
        let mut out = x_t.clone();
        for (o, e) in out.as_mut_slice().iter_mut().zip(x0.as_slice()) {
            *o = (*o - sqrt_ab * e) * inv;
        }
        out
    }

    /// log N(x_t; √ᾱ·μ_k, ᾱ·s_k² + (1−ᾱ)) summed over elements.
    fn log_marginal(&self, k: usize, x_t: &FeatureGrid, t: usize) -> f64 {
        let comp = &self.components[k];
        let ab = self.sched.alpha_bar(t);
        let sqrt_ab = ab.sqrt();
        let one_minus = 1.0 - ab;
        let mut ll = 0.0;
        for (x, (m, v)) in x_t
            .as_slice()
            .iter()
            .zip(comp.mean.as_slice().iter().zip(&comp.var))
        {
            let marginal_var = ab * v + one_minus;
            let d = x - sqrt_ab * m;
            ll -= 0.5 * (d * d / marginal_var + marginal_var.ln() + LN_TAU);
        }
        ll
    }

    /// Posterior responsibilities r_k ∝ π_k·N(x_t; m_k, v_k), normalized in
    /// log space so underflow cannot zero them all out.
    pub fn responsibilities(&self, x_t: &FeatureGrid, t: usize) -> Result<Vec<f64>> {
        self.check_step(t)?;
        let logs: Vec<f64> = (0..self.components.len())
            .map(|k| self.components[k].log_prior + self.log_marginal(k, x_t, t))
            .collect();
        let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut rs: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = rs.iter().sum();
        for r in rs.iter_mut() {
            *r /= total;
        }
        Ok(rs)
    }
}

impl Denoiser for GaussianSourceModel {
    fn predict_eps(&self, x_t: &FeatureGrid, c: &Condition, t: usize) -> Result<FeatureGrid> {
        self.check_step(t)?;
        if x_t.dims() != self.dims {
            return Err(Error::DimMismatch {
                expected: self.dims,
                got: x_t.dims(),
            });
        }
        match c {
            Condition::Null => {
                let rs = self.responsibilities(x_t, t)?;
                let mut x0 = FeatureGrid::zeros(self.dims);
                for (k, r) in rs.iter().enumerate() {
                    x0 = x0.axpy(*r, &self.conditional_x0(k, x_t, t))?;
                }
                Ok(self.eps_from_x0(x_t, &x0, t))
            }
            Condition::Label(_) | Condition::Composite(_) => {
                let k = self
                    .component(c)
                    .ok_or_else(|| Error::UnknownCondition(c.to_string()))?;
                let x0 = self.conditional_x0(k, x_t, t);
                Ok(self.eps_from_x0(x_t, &x0, t))
            }
            Condition::Random(_) => Err(Error::Model(
                "analytic model defines no density for random-prompt surrogates".into(),
            )),
        }
    }

    fn grid_dims(&self) -> GridDims {
        self.dims
    }

    fn step_count(&self) -> usize {
        self.sched.step_count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims() -> GridDims {
        GridDims::new(1, 1, 4).unwrap()
    }

    fn const_grid(v: f64) -> FeatureGrid {
        FeatureGrid::from_values(dims(), vec![v; 4]).unwrap()
    }

    fn single_label_model(mu: f64, s: f64, sched: NoiseSchedule) -> GaussianSourceModel {
        GaussianSourceModel::new(sched, &[(0, const_grid(mu), const_grid(s))], false, None)
            .unwrap()
    }

    #[test]
    fn centered_input_gives_zero_eps() {
        let sched = NoiseSchedule::linear(10, 0.02, 0.2).unwrap();
        let model = single_label_model(1.5, 0.3, sched.clone());
        for t in [1, 5, 10] {
            let x_t = const_grid(1.5 * sched.alpha_bar(t).sqrt());
            let eps = model.predict_eps(&x_t, &Condition::Label(0), t).unwrap();
            assert!(eps.l2_norm() < 1e-12, "t={t}");
        }
    }

    #[test]
    fn standard_normal_source_closed_form() {
        // μ=0, s=1: the marginal is standard normal at every t, so
        // ε*(x_t) = √(1−ᾱ_t)·x_t. Evaluated at ᾱ_1 = 0.5 via a T=1 schedule.
        let sched = NoiseSchedule::linear(1, 0.5, 0.5).unwrap();
        let model = single_label_model(0.0, 1.0, sched);
        let x_t = FeatureGrid::from_values(dims(), vec![0.3, -1.2, 2.0, 0.0]).unwrap();
        let eps = model.predict_eps(&x_t, &Condition::Label(0), 1).unwrap();
        let expected = x_t.scale(0.5f64.sqrt());
        assert!(eps.max_abs_diff(&expected).unwrap() < 1e-12);
    }

    #[test]
    fn point_mass_limit_recovers_mean() {
        let sched = NoiseSchedule::linear(10, 0.02, 0.2).unwrap();
        let model = single_label_model(2.0, 1e-9, sched.clone());
        let x_t = const_grid(0.7);
        let t = 4;
        // ε* must equal the noise that explains x_t around √ᾱ·μ exactly.
        let eps = model.predict_eps(&x_t, &Condition::Label(0), t).unwrap();
        let ab = sched.alpha_bar(t);
        let expected = (0.7 - ab.sqrt() * 2.0) / (1.0 - ab).sqrt();
        for v in eps.as_slice() {
            assert!((v - expected).abs() < 1e-6);
        }
    }

    #[test]
    fn symmetric_labels_cancel_at_origin() {
        let sched = NoiseSchedule::linear(10, 0.02, 0.2).unwrap();
        let model = GaussianSourceModel::new(
            sched,
            &[
                (0, const_grid(1.0), const_grid(0.4)),
                (1, const_grid(-1.0), const_grid(0.4)),
            ],
            false,
            None,
        )
        .unwrap();
        let eps = model
            .predict_eps(&FeatureGrid::zeros(dims()), &Condition::Null, 5)
            .unwrap();
        assert!(eps.l2_norm() < 1e-12);
    }

    #[test]
    fn responsibilities_normalize_under_extreme_inputs() {
        let sched = NoiseSchedule::linear(10, 0.02, 0.2).unwrap();
        let model = GaussianSourceModel::new(
            sched,
            &[
                (0, const_grid(100.0), const_grid(0.01)),
                (1, const_grid(-100.0), const_grid(0.01)),
            ],
            true,
            None,
        )
        .unwrap();
        // Far from every component: raw densities underflow, log-sum-exp
        // normalization must still produce a unit sum.
        let x_t = const_grid(1e6);
        let rs = model.responsibilities(&x_t, 1).unwrap();
        let total: f64 = rs.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(rs.iter().all(|r| r.is_finite()));
    }

    #[test]
    fn composite_stats_are_sums() {
        let sched = NoiseSchedule::linear(10, 0.02, 0.2).unwrap();
        let model = GaussianSourceModel::new(
            sched,
            &[
                (0, const_grid(1.0), const_grid(0.3)),
                (1, const_grid(2.0), const_grid(0.4)),
            ],
            true,
            None,
        )
        .unwrap();
        let (mean, std) = model.component_stats(&Condition::pair(0, 1).unwrap()).unwrap();
        assert!((mean.as_slice()[0] - 3.0).abs() < 1e-15);
        assert!((std[0] - 0.25f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn unknown_label_is_rejected() {
        let sched = NoiseSchedule::linear(10, 0.02, 0.2).unwrap();
        let model = single_label_model(0.0, 1.0, sched);
        let x = FeatureGrid::zeros(dims());
        assert!(matches!(
            model.predict_eps(&x, &Condition::Label(9), 1),
            Err(Error::UnknownCondition(_))
        ));
        assert!(model.predict_eps(&x, &Condition::Random(1), 1).is_err());
        assert!(model.predict_eps(&x, &Condition::Null, 0).is_err());
        assert!(model.predict_eps(&x, &Condition::Null, 11).is_err());
    }

    /// Brute-force check of the closed form against numerical integration of
    /// the posterior over x_0 on 1-element grids.
    #[test]
    fn matches_quadrature_on_scalar_grids() {
        let d1 = GridDims::new(1, 1, 1).unwrap();
        let g = |v: f64| FeatureGrid::from_values(d1, vec![v]).unwrap();
        let sched = NoiseSchedule::linear(8, 0.05, 0.4).unwrap();
        let labels = [(0u32, g(1.2), g(0.5)), (1u32, g(-0.8), g(0.25))];
        let model = GaussianSourceModel::new(sched.clone(), &labels, true, None).unwrap();

        // p(x0) = Σ_k π_k N(x0; μ_k, s_k²), composite included.
        let comps: Vec<(f64, f64, f64)> = model
            .conditions()
            .map(|c| {
                let (m, s) = model.component_stats(c).unwrap();
                (model.prior(c).unwrap(), m.as_slice()[0], s[0])
            })
            .collect();

        let normal = |x: f64, m: f64, var: f64| {
            (-0.5 * (x - m) * (x - m) / var).exp() / (std::f64::consts::TAU * var).sqrt()
        };

        for &t in &[1usize, 4, 8] {
            let ab = sched.alpha_bar(t);
            for &xv in &[-2.0, -0.3, 0.0, 0.9, 2.5] {
                // E[x0 | x_t] by trapezoid over x0 ∈ [-12, 12].
                let n = 48_000;
                let (lo, hi) = (-12.0, 12.0);
                let h = (hi - lo) / n as f64;
                let (mut num, mut den) = (0.0, 0.0);
                for i in 0..=n {
                    let x0 = lo + h * i as f64;
                    let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                    let prior: f64 = comps
                        .iter()
                        .map(|(p, m, s)| p * normal(x0, *m, s * s))
                        .sum();
                    let lik = normal(xv, ab.sqrt() * x0, 1.0 - ab);
                    num += w * x0 * prior * lik;
                    den += w * prior * lik;
                }
                let e_x0 = num / den;
                let expected_eps = (xv - ab.sqrt() * e_x0) / (1.0 - ab).sqrt();
                let eps = model.predict_eps(&g(xv), &Condition::Null, t).unwrap();
                assert!(
                    (eps.as_slice()[0] - expected_eps).abs() < 1e-6,
                    "t={t} x={xv}: {} vs {}",
                    eps.as_slice()[0],
                    expected_eps
                );
            }
        }
    }
}
