//! Gaussian-process surrogate with a squared-exponential kernel and the
//! expected-improvement acquisition.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{DseError, Result};

const LENGTH_SCALES: [f64; 9] = [0.05, 0.1, 0.15, 0.2, 0.3, 0.5, 0.8, 1.2, 2.0];
const SIGNAL_VARIANCES: [f64; 5] = [0.25, 0.5, 1.0, 2.0, 4.0];
pub const NOISE_FLOOR: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hyper {
    pub length_scale: f64,
    pub signal_var: f64,
    pub noise_var: f64,
}

fn se_kernel(a: &[f64], b: &[f64], h: &Hyper) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    h.signal_var * (-d2 / (2.0 * h.length_scale * h.length_scale)).exp()
}

/// Targets are standardised internally; predictions are returned in the
/// original units.
#[derive(Clone, Debug)]
pub struct GpModel {
    pub hyper: Hyper,
    xs: Vec<Vec<f64>>,
    y_mean: f64,
    y_scale: f64,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    z: DVector<f64>,
    alpha: DVector<f64>,
}

impl GpModel {
    pub fn fit_with(xs: &[Vec<f64>], ys: &[f64], hyper: Hyper) -> Result<Self> {
        if xs.is_empty() || xs.len() != ys.len() {
            return Err(DseError::UndefinedInput(
                "GP needs matching, non-empty training data".into(),
            ));
        }
        let n = ys.len();
        let y_mean = ys.iter().sum::<f64>() / n as f64;
        let var = ys.iter().map(|y| (y - y_mean).powi(2)).sum::<f64>() / n as f64;
        let y_scale = if var > 1e-24 { var.sqrt() } else { 1.0 };
        let z = DVector::from_iterator(n, ys.iter().map(|y| (y - y_mean) / y_scale));
        let k = DMatrix::from_fn(n, n, |i, j| {
            se_kernel(&xs[i], &xs[j], &hyper) + if i == j { hyper.noise_var } else { 0.0 }
        });
        let chol = k
            .cholesky()
            .ok_or_else(|| DseError::Internal("kernel matrix is not positive definite".into()))?;
        let alpha = chol.solve(&z);
        Ok(GpModel {
            hyper,
            xs: xs.to_vec(),
            y_mean,
            y_scale,
            chol,
            z,
            alpha,
        })
    }

    /// Grid search over length-scale and signal variance by log marginal likelihood.
    pub fn fit(xs: &[Vec<f64>], ys: &[f64]) -> Result<Self> {
        let mut best: Option<(f64, GpModel)> = None;
        for &l in &LENGTH_SCALES {
            for &s in &SIGNAL_VARIANCES {
                let h = Hyper {
                    length_scale: l,
                    signal_var: s,
                    noise_var: NOISE_FLOOR,
                };
                let Ok(m) = GpModel::fit_with(xs, ys, h) else {
                    continue;
                };
                let lml = m.log_marginal_likelihood();
                if best.as_ref().is_none_or(|(b, _)| lml > *b) {
                    best = Some((lml, m));
                }
            }
        }
        best.map(|(_, m)| m)
            .ok_or_else(|| DseError::Internal("no GP hyperparameter produced a valid fit".into()))
    }

    /// In standardised target units.
    pub fn log_marginal_likelihood(&self) -> f64 {
        let n = self.xs.len() as f64;
        let fit = -0.5 * self.z.dot(&self.alpha);
        let logdet: f64 = self.chol.l().diagonal().iter().map(|d| d.ln()).sum();
        fit - logdet - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
    }

    /// Posterior mean and standard deviation.
    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        let kx = DVector::from_iterator(
            self.xs.len(),
            self.xs.iter().map(|xi| se_kernel(xi, x, &self.hyper)),
        );
        let mu = kx.dot(&self.alpha);
        let v = self
            .chol
            .l()
            .solve_lower_triangular(&kx)
            .expect("triangular solve");
        let var = (self.hyper.signal_var - v.dot(&v)).max(0.0);
        (self.y_mean + self.y_scale * mu, self.y_scale * var.sqrt())
    }

    pub fn prior_mean(&self) -> f64 {
        self.y_mean
    }

    pub fn prior_std(&self) -> f64 {
        self.y_scale * self.hyper.signal_var.sqrt()
    }
}

/// EI for minimisation: σ[γΦ(γ) + φ(γ)], γ = (f_best − μ)/σ.
pub fn expected_improvement(mu: f64, sigma: f64, f_best: f64) -> f64 {
    if sigma <= 0.0 || !sigma.is_finite() {
        return (f_best - mu).max(0.0);
    }
    let n = Normal::standard();
    let g = (f_best - mu) / sigma;
    (sigma * (g * n.cdf(g) + n.pdf(g))).max(0.0)
}

pub fn expected_improvement_at(gp: &GpModel, x: &[f64], f_best: f64) -> f64 {
    let (mu, sigma) = gp.predict(x);
    expected_improvement(mu, sigma, f_best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ei_closed_forms() {
        assert_eq!(expected_improvement(3.0, 0.0, 3.0), 0.0);
        assert_eq!(expected_improvement(2.0, 0.0, 3.0), 1.0);
        let ei = expected_improvement(-1.0, 1.0, 0.0);
        assert!((ei - 1.0833).abs() < 1e-4, "{ei}");
        // Monte-Carlo cross-check of E[max(f_best − Y, 0)], Y ~ N(μ, σ²)
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 400_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let (u1, u2): (f64, f64) = (rng.gen::<f64>().max(1e-300), rng.gen());
            let y = -1.0 + (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
            acc += (0.0 - y).max(0.0);
        }
        assert!((acc / n as f64 - ei).abs() < 0.01);
    }

    #[test]
    fn interpolates_training_points() {
        let xs: Vec<Vec<f64>> = (0..6)
            .map(|i| vec![i as f64 / 5.0, (i * i) as f64 / 25.0])
            .collect();
        let ys: Vec<f64> = xs.iter().map(|x| (3.0 * x[0]).sin() + x[1]).collect();
        let h = Hyper {
            length_scale: 0.4,
            signal_var: 1.0,
            noise_var: 1e-12,
        };
        let gp = GpModel::fit_with(&xs, &ys, h).unwrap();
        for (x, y) in xs.iter().zip(&ys) {
            let (mu, sd) = gp.predict(x);
            assert!((mu - y).abs() < 1e-6, "{mu} vs {y}");
            assert!((0.0..1e-3).contains(&sd));
        }
        let fitted = GpModel::fit(&xs, &ys).unwrap();
        assert!(fitted.hyper.noise_var == NOISE_FLOOR);
    }

    #[test]
    fn reverts_to_prior_far_away() {
        let xs = vec![vec![0.0], vec![0.3], vec![0.6]];
        let ys = vec![1.0, 2.0, 0.5];
        let gp = GpModel::fit(&xs, &ys).unwrap();
        let (mu, sd) = gp.predict(&[1e3]);
        assert!((mu - gp.prior_mean()).abs() < 1e-9);
        assert!((sd - gp.prior_std()).abs() < 1e-9);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn ei_non_negative(mu in -10.0f64..10.0, sigma in 0.0f64..5.0, best in -10.0f64..10.0) {
                prop_assert!(expected_improvement(mu, sigma, best) >= 0.0);
            }

            #[test]
            fn posterior_variance_non_negative(
                pts in proptest::collection::vec((0.0f64..1.0, -3.0f64..3.0), 1..10),
                q in 0.0f64..1.0,
            ) {
                let xs: Vec<Vec<f64>> = pts.iter().map(|p| vec![p.0]).collect();
                let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
                if let Ok(gp) = GpModel::fit(&xs, &ys) {
                    let (_, sd) = gp.predict(&[q]);
                    prop_assert!(sd >= 0.0);
                }
            }
        }
    }
}
