//! Target distributions with closed-form smoothed scores.
//!
//! The smoothing operator maps `P*` to the law of `sqrt(t) X + sqrt(1 - t) Z`
//! with `X ~ P*` and `Z` standard normal. For spherical Gaussian components
//! the result stays Gaussian with mean `sqrt(t) m` and variance
//! `t sigma^2 + 1 - t`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profiles::{LipschitzProfile, ScoreErrorProfile};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphericalGaussian {
    pub mean: Vec<f64>,
    pub variance: f64,
}

impl SphericalGaussian {
    pub fn new(mean: Vec<f64>, variance: f64) -> Result<Self> {
        let g = SphericalGaussian { mean, variance };
        g.validate()?;
        Ok(g)
    }

    pub fn standard(d: usize) -> Self {
        SphericalGaussian {
            mean: vec![0.0; d],
            variance: 1.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.mean.is_empty() {
            return Err(Error::validation("target dimension must be >= 1"));
        }
        if !(self.variance > 0.0 && self.variance.is_finite()) {
            return Err(Error::validation(format!(
                "variance must be positive and finite (got {})",
                self.variance
            )));
        }
        if self.mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::validation("mean has non-finite entries"));
        }
        Ok(())
    }

    pub fn trace_cov(&self) -> f64 {
        self.dim() as f64 * self.variance
    }

    pub fn op_norm_cov(&self) -> f64 {
        self.variance
    }
}

/// Finite mixture of spherical Gaussians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixture {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<f64>,
}

impl GaussianMixture {
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, variances: Vec<f64>) -> Result<Self> {
        let m = GaussianMixture {
            weights,
            means,
            variances,
        };
        m.validate()?;
        Ok(m)
    }

    /// Two equally weighted components at `+m` and `-m` with a shared variance.
    pub fn symmetric_pair(m: Vec<f64>, variance: f64) -> Result<Self> {
        let neg = m.iter().map(|x| -x).collect();
        Self::new(vec![0.5, 0.5], vec![m, neg], vec![variance, variance])
    }

    pub fn dim(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.weights.len();
        if k == 0 {
            return Err(Error::validation("mixture needs at least one component"));
        }
        if self.means.len() != k || self.variances.len() != k {
            return Err(Error::validation(format!(
                "mixture arrays disagree: {k} weights, {} means, {} variances",
                self.means.len(),
                self.variances.len()
            )));
        }
        let d = self.dim();
        if d == 0 || self.means.iter().any(|m| m.len() != d) {
            return Err(Error::validation("mixture means must share a dimension >= 1"));
        }
        if self.weights.iter().any(|&w| !(w >= 0.0 && w.is_finite())) {
            return Err(Error::validation("mixture weights must be nonnegative"));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::validation(format!(
                "invariant violated: weights sum to 1 (sum = {total})"
            )));
        }
        if self.variances.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::validation("component variances must be positive"));
        }
        Ok(())
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for (w, m) in self.weights.iter().zip(&self.means) {
            for (o, x) in out.iter_mut().zip(m) {
                *o += w * x;
            }
        }
        out
    }

    /// Covariance of the mixture (law of total variance).
    pub fn covariance(&self) -> Vec<Vec<f64>> {
        let d = self.dim();
        let mu = self.mean();
        let mut cov = vec![vec![0.0; d]; d];
        for ((w, m), v) in self.weights.iter().zip(&self.means).zip(&self.variances) {
            for i in 0..d {
                cov[i][i] += w * v;
                for j in 0..d {
                    cov[i][j] += w * (m[i] - mu[i]) * (m[j] - mu[j]);
                }
            }
        }
        cov
    }

    pub fn trace_cov(&self) -> f64 {
        let cov = self.covariance();
        (0..self.dim()).map(|i| cov[i][i]).sum()
    }

    /// Largest eigenvalue of the covariance, by power iteration.
    pub fn op_norm_cov(&self) -> f64 {
        let cov = self.covariance();
        let d = self.dim();
        let mut v = vec![1.0 / (d as f64).sqrt(); d];
        let mut lambda = 0.0;
        for _ in 0..500 {
            let w: Vec<f64> = (0..d)
                .map(|i| (0..d).map(|j| cov[i][j] * v[j]).sum())
                .collect();
            let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            let next = norm;
            v = w.into_iter().map(|x| x / norm).collect();
            if (next - lambda).abs() <= 1e-15 * next {
                return next;
            }
            lambda = next;
        }
        lambda
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Target {
    Gaussian(SphericalGaussian),
    Mixture(GaussianMixture),
}

fn check_open_unit(t: f64, what: &str) -> Result<()> {
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::domain(format!("{what}: t = {t} is outside (0, 1)")));
    }
    Ok(())
}

fn log_gaussian_density(y: &[f64], mean: &[f64], scale: f64, variance: f64) -> f64 {
    let d = y.len() as f64;
    let sq: f64 = y
        .iter()
        .zip(mean)
        .map(|(a, m)| {
            let r = a - scale * m;
            r * r
        })
        .sum();
    -0.5 * sq / variance - 0.5 * d * (2.0 * std::f64::consts::PI * variance).ln()
}

impl Target {
    pub fn dim(&self) -> usize {
        match self {
            Target::Gaussian(g) => g.dim(),
            Target::Mixture(m) => m.dim(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Target::Gaussian(g) => g.validate(),
            Target::Mixture(m) => m.validate(),
        }
    }

    pub fn mean(&self) -> Vec<f64> {
        match self {
            Target::Gaussian(g) => g.mean.clone(),
            Target::Mixture(m) => m.mean(),
        }
    }

    pub fn trace_cov(&self) -> f64 {
        match self {
            Target::Gaussian(g) => g.trace_cov(),
            Target::Mixture(m) => m.trace_cov(),
        }
    }

    pub fn op_norm_cov(&self) -> f64 {
        match self {
            Target::Gaussian(g) => g.op_norm_cov(),
            Target::Mixture(m) => m.op_norm_cov(),
        }
    }

    /// Parameters of the smoothed law at time `t in [0, 1)`.
    pub fn smoothed(&self, t: f64) -> Result<Target> {
        if !(0.0..1.0).contains(&t) {
            return Err(Error::domain(format!(
                "smoothed law: t = {t} is outside [0, 1)"
            )));
        }
        let scale = t.sqrt();
        let smooth_var = |v: f64| t * v + 1.0 - t;
        Ok(match self {
            Target::Gaussian(g) => Target::Gaussian(SphericalGaussian {
                mean: g.mean.iter().map(|m| scale * m).collect(),
                variance: smooth_var(g.variance),
            }),
            Target::Mixture(m) => Target::Mixture(GaussianMixture {
                weights: m.weights.clone(),
                means: m
                    .means
                    .iter()
                    .map(|c| c.iter().map(|x| scale * x).collect())
                    .collect(),
                variances: m.variances.iter().map(|&v| smooth_var(v)).collect(),
            }),
        })
    }

    /// Exact smoothed score `grad log pi_t(y)`, written into `out`.
    pub fn score_into(&self, t: f64, y: &[f64], out: &mut [f64]) -> Result<()> {
        check_open_unit(t, "score")?;
        if y.len() != self.dim() || out.len() != self.dim() {
            return Err(Error::domain(format!(
                "score: point has dimension {} but target has {}",
                y.len(),
                self.dim()
            )));
        }
        let scale = t.sqrt();
        match self {
            Target::Gaussian(g) => {
                let v = t * g.variance + 1.0 - t;
                for ((o, a), m) in out.iter_mut().zip(y).zip(&g.mean) {
                    *o = -(a - scale * m) / v;
                }
            }
            Target::Mixture(m) => {
                let k = m.n_components();
                let mut logw = Vec::with_capacity(k);
                for ((w, c), &v) in m.weights.iter().zip(&m.means).zip(&m.variances) {
                    let sv = t * v + 1.0 - t;
                    logw.push(if *w > 0.0 {
                        w.ln() + log_gaussian_density(y, c, scale, sv)
                    } else {
                        f64::NEG_INFINITY
                    });
                }
                let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let resp: Vec<f64> = logw.iter().map(|l| (l - max).exp()).collect();
                let total: f64 = resp.iter().sum();
                out.fill(0.0);
                for ((r, c), &v) in resp.iter().zip(&m.means).zip(&m.variances) {
                    let sv = t * v + 1.0 - t;
                    let weight = r / total;
                    for ((o, a), x) in out.iter_mut().zip(y).zip(c) {
                        *o -= weight * (a - scale * x) / sv;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn score(&self, t: f64, y: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim()];
        self.score_into(t, y, &mut out)?;
        Ok(out)
    }

    /// Smoothed density `pi_t(y)` evaluated directly (no log-sum-exp).
    pub fn smoothed_density(&self, t: f64, y: &[f64]) -> Result<f64> {
        check_open_unit(t, "density")?;
        let scale = t.sqrt();
        let dens = match self {
            Target::Gaussian(g) => {
                log_gaussian_density(y, &g.mean, scale, t * g.variance + 1.0 - t).exp()
            }
            Target::Mixture(m) => m
                .weights
                .iter()
                .zip(&m.means)
                .zip(&m.variances)
                .map(|((w, c), &v)| w * log_gaussian_density(y, c, scale, t * v + 1.0 - t).exp())
                .sum(),
        };
        Ok(dens)
    }

    /// Central finite difference of `log pi_t` with step `h`. Independent of
    /// [`Target::score`]; intended as a test oracle for `d <= 3`.
    pub fn score_fd_oracle(&self, t: f64, y: &[f64], h: f64) -> Result<Vec<f64>> {
        let d = self.dim();
        if d > 3 {
            return Err(Error::domain(format!(
                "finite-difference oracle supports d <= 3 (got {d})"
            )));
        }
        if !(1e-7..=1e-3).contains(&h) {
            return Err(Error::domain(format!("step h = {h} outside [1e-7, 1e-3]")));
        }
        let log_density = |p: &[f64]| -> Result<f64> {
            let v = self.smoothed_density(t, p)?;
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Numerical(format!(
                    "density underflow at |y| = {:.3}; use a point closer to the bulk",
                    p.iter().map(|x| x * x).sum::<f64>().sqrt()
                )));
            }
            Ok(v.ln())
        };
        let mut grad = vec![0.0; d];
        let mut p = y.to_vec();
        for j in 0..d {
            p[j] = y[j] + h;
            let up = log_density(&p)?;
            p[j] = y[j] - h;
            let down = log_density(&p)?;
            p[j] = y[j];
            grad[j] = (up - down) / (2.0 * h);
        }
        Ok(grad)
    }

    /// `n` i.i.d. draws, row-major `n x d`, deterministic in `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<f64> {
        let d = self.dim();
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(n * d);
        match self {
            Target::Gaussian(g) => {
                let sd = g.variance.sqrt();
                for _ in 0..n {
                    for m in &g.mean {
                        let z: f64 = rng.sample(StandardNormal);
                        out.push(m + sd * z);
                    }
                }
            }
            Target::Mixture(m) => {
                for _ in 0..n {
                    let u: f64 = rng.gen();
                    let mut acc = 0.0;
                    let mut k = m.n_components() - 1;
                    for (i, w) in m.weights.iter().enumerate() {
                        acc += w;
                        if u < acc {
                            k = i;
                            break;
                        }
                    }
                    let sd = m.variances[k].sqrt();
                    for x in &m.means[k] {
                        let z: f64 = rng.sample(StandardNormal);
                        out.push(x + sd * z);
                    }
                }
            }
        }
        out
    }
}

/// Regularity constants consumed by the bound evaluators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityProfile {
    /// Two-sided envelope: `-t L(t) <= Hess log f_t <= t L(t)`.
    pub lipschitz: LipschitzProfile,
    /// One-sided envelope: `Hess log f_t <= t L(t)`.
    pub lipschitz_upper: LipschitzProfile,
    pub score_error: ScoreErrorProfile,
    /// semi-log-convexity parameter
    pub beta_slc: f64,
    pub alpha: f64,
    pub m: f64,
    pub lambda: f64,
    pub l0: f64,
}

/// `max{beta - 1, ((1 - alpha) v 0) / alpha + 2M / (alpha^2 ^ 1)}`.
pub fn lambda_semi_log_convex(alpha: f64, m: f64, beta: f64) -> f64 {
    (beta - 1.0).max(lambda_weakly_log_concave(alpha, m))
}

/// `((1 - alpha) v 0) / alpha + 2M / (alpha^2 ^ 1)`.
pub fn lambda_weakly_log_concave(alpha: f64, m: f64) -> f64 {
    (1.0 - alpha).max(0.0) / alpha + 2.0 * m / (alpha * alpha).min(1.0)
}

/// Regularity of `N(mu, sigma^2 I)`.
///
/// The exact Hessian `t (sigma^2 - 1) / (t sigma^2 + 1 - t)` would give an `L`
/// decreasing in `t` when `sigma > 1`; the profiles here are the constant
/// envelopes `max{sigma^2 - 1, 1/sigma^2 - 1}` (two-sided) and
/// `max{sigma^2 - 1, 0}` (upper), which are non-decreasing as required.
pub fn gaussian_regularity(target: &SphericalGaussian) -> RegularityProfile {
    let s2 = target.variance;
    let alpha = 1.0 / s2;
    let beta_slc = 1.0 / s2;
    RegularityProfile {
        lipschitz: LipschitzProfile::Constant {
            value: (s2 - 1.0).max(1.0 / s2 - 1.0).max(0.0),
        },
        lipschitz_upper: LipschitzProfile::Constant {
            value: (s2 - 1.0).max(0.0),
        },
        score_error: ScoreErrorProfile::Zero,
        beta_slc,
        alpha,
        m: 0.0,
        lambda: lambda_semi_log_convex(alpha, 0.0, beta_slc),
        l0: 1.0,
    }
}
