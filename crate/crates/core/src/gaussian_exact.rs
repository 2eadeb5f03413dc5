//! Closed-form law of the sampler for spherical Gaussian targets.
//!
//! For `P* = N(mu, sigma^2 I)` and exact score, `sqrt(t_i) Y_i ~ N(mu_i, s_i^2 I)` with
//!
//! ```text
//! mu_{i+1}  = (g_{i+1} / g_i) mu_i + (h_i / g_i) mu + (h_i / sqrt(t_i)) eps(t_i) u
//! s_{i+1}^2 = (g_{i+1} / g_i)^2 s_i^2 + h_i
//! ```
//!
//! where `g(t) = (sigma^2 - 1) t + 1`, `mu_0 = t_0 mu_hat`, `s_0^2 = t_0`. The last
//! mean term comes from a constant score shift `eps(t) u` and vanishes for the
//! exact score.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::sampler::{PerturbationMode, ScoreModel};
use crate::schedules::VarianceSchedule;
use crate::targets::SphericalGaussian;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GaussianPipelineState {
    /// Means of `sqrt(t_i) Y_i`.
    pub mu_seq: Vec<Vec<f64>>,
    /// Per-coordinate variances of `sqrt(t_i) Y_i`.
    pub var_seq: Vec<f64>,
    pub g_values: Vec<f64>,
    pub times: Vec<f64>,
}

impl GaussianPipelineState {
    pub fn n_steps(&self) -> usize {
        self.var_seq.len() - 1
    }

    /// Mean and per-coordinate variance of `Y_N`.
    pub fn terminal_law(&self) -> (Vec<f64>, f64) {
        let n = self.n_steps();
        let t = self.times[n];
        let r = t.sqrt();
        (self.mu_seq[n].iter().map(|m| m / r).collect(), self.var_seq[n] / t)
    }

    /// CSV with columns `step, t, mu_gap, var, g` where `mu_gap = |mu_i - mu|`.
    pub fn write_csv<W: Write>(&self, w: W, target_mean: &[f64]) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["step", "t", "mu_gap", "var", "g"])?;
        for i in 0..=self.n_steps() {
            let gap = dist(&self.mu_seq[i], target_mean);
            wr.write_record(&[
                i.to_string(),
                self.times[i].to_string(),
                gap.to_string(),
                self.var_seq[i].to_string(),
                self.g_values[i].to_string(),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Exact moments of the sampler driven by the exact score, or the exact score
/// plus a constant-vector shift when `perturbation` is such a model.
pub fn moment_recursion(
    schedule: &VarianceSchedule,
    target: &SphericalGaussian,
    mu_hat: &[f64],
    perturbation: Option<&ScoreModel>,
) -> Result<GaussianPipelineState> {
    target.validate()?;
    let d = target.dim();
    if mu_hat.len() != d {
        return Err(Error::validation(format!(
            "mu_hat has dimension {}, target has {d}",
            mu_hat.len()
        )));
    }
    let shift_model = match perturbation {
        None | Some(ScoreModel::Exact) => None,
        Some(
            m @ ScoreModel::Perturbed {
                mode: PerturbationMode::ConstantVector { u },
                ..
            },
        ) => {
            if u.len() != d {
                return Err(Error::validation("perturbation direction has the wrong dimension"));
            }
            Some(m)
        }
        Some(_) => {
            return Err(Error::domain(
                "closed-form moments need the exact score or a constant-vector perturbation",
            ))
        }
    };
    let times = schedule.times();
    let n = schedule.n_steps();
    let s2 = target.variance;
    let g = |t: f64| (s2 - 1.0) * t + 1.0;
    let g_values: Vec<f64> = times.iter().map(|&t| g(t)).collect();
    let mut mu_seq = Vec::with_capacity(n + 1);
    let mut var_seq = Vec::with_capacity(n + 1);
    let t0 = times[0];
    mu_seq.push(mu_hat.iter().map(|m| t0 * m).collect::<Vec<f64>>());
    var_seq.push(t0);
    for i in 0..n {
        let h = times[i + 1] - times[i];
        let ratio = g_values[i + 1] / g_values[i];
        let pull = h / g_values[i];
        let prev = &mu_seq[i];
        let mut next: Vec<f64> = prev
            .iter()
            .zip(&target.mean)
            .map(|(m, mu)| ratio * m + pull * mu)
            .collect();
        if let Some(model) = shift_model {
            let c = model.constant_shift(times[i]).expect("constant shift");
            let k = h / times[i].sqrt();
            for (x, ci) in next.iter_mut().zip(&c) {
                *x += k * ci;
            }
        }
        mu_seq.push(next);
        var_seq.push(ratio * ratio * var_seq[i] + h);
    }
    if var_seq.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::Numerical("moment recursion produced a non-positive variance".into()));
    }
    Ok(GaussianPipelineState {
        mu_seq,
        var_seq,
        g_values,
        times: times.to_vec(),
    })
}

/// `W2(N(mu1, var1 I), N(mu2, var2 I))` in dimension `d = mu1.len()`.
pub fn w2_spherical_gaussians(mu1: &[f64], var1: f64, mu2: &[f64], var2: f64) -> Result<f64> {
    if !(var1 >= 0.0 && var2 >= 0.0) {
        return Err(Error::domain(format!("variances must be >= 0, got {var1} and {var2}")));
    }
    if mu1.len() != mu2.len() {
        return Err(Error::validation("mean vectors have different dimensions"));
    }
    let d = mu1.len() as f64;
    let ds = var1.sqrt() - var2.sqrt();
    let m = dist(mu1, mu2);
    Ok((m * m + d * ds * ds).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExactW2 {
    /// `W2(law Y_N, P*)`.
    pub to_target: f64,
    /// `W2(law Y_N, S_{t_N} P*)`; equals `to_target` when `delta = 0`.
    pub to_smoothed: f64,
    /// `sqrt(tr(Sigma) delta^2 + d delta)`.
    pub early_stopping_bound: f64,
    pub delta: f64,
}

/// Exact W2 between the sampler output and the target (and its smoothed
/// version at `t_N`).
pub fn exact_sampler_w2(
    schedule: &VarianceSchedule,
    target: &SphericalGaussian,
    mu_hat: &[f64],
    perturbation: Option<&ScoreModel>,
) -> Result<ExactW2> {
    let state = moment_recursion(schedule, target, mu_hat, perturbation)?;
    let (m, v) = state.terminal_law();
    let to_target = w2_spherical_gaussians(&m, v, &target.mean, target.variance)?;
    let (sm, sv) = smoothed_params(target, schedule.t_n());
    let to_smoothed = w2_spherical_gaussians(&m, v, &sm, sv)?;
    let delta = schedule.delta();
    let early = (target.trace_cov() * delta * delta + target.dim() as f64 * delta).sqrt();
    Ok(ExactW2 {
        to_target,
        to_smoothed,
        early_stopping_bound: early,
        delta,
    })
}

/// Mean and per-coordinate variance of `S_t P* = law(sqrt(t) X + sqrt(1 - t) Z)`.
pub fn smoothed_params(target: &SphericalGaussian, t: f64) -> (Vec<f64>, f64) {
    let r = t.sqrt();
    (
        target.mean.iter().map(|m| r * m).collect(),
        t * target.variance + 1.0 - t,
    )
}

/// Lower bound on `W2(law Y_N, P*)` for Gaussian targets when every
/// `beta_i >= eta`:
///
/// `(s2 / (s2 v 1)) min{ t0 |mu_hat - mu|, (s2 |s2 - 1| / (2 (s^3 v 1))) (sqrt(d) t0^2 + ((1 - t0^2) / (2 (s2 v 1))) sqrt(d) eta) }`
pub fn w2_lower_bound(t0: f64, eta: f64, target: &SphericalGaussian, mu_hat: &[f64]) -> Result<f64> {
    if !(t0 > 0.0 && t0 <= 1.0) {
        return Err(Error::domain(format!("t0 = {t0} outside (0, 1]")));
    }
    if !(eta >= 0.0) {
        return Err(Error::domain(format!("eta = {eta} must be >= 0")));
    }
    let s2 = target.variance;
    let s = s2.sqrt();
    let sd = (target.dim() as f64).sqrt();
    let gap = dist(mu_hat, &target.mean);
    let first = t0 * gap;
    let second = s2 * (s2 - 1.0).abs() / (2.0 * (s * s2).max(1.0))
        * (sd * t0 * t0 + (1.0 - t0 * t0) / (2.0 * s2.max(1.0)) * sd * eta);
    Ok(s2 / s2.max(1.0) * first.min(second))
}

/// `W2(S_t P*, P*)` for a spherical Gaussian:
/// `sqrt((1 - sqrt(t))^2 |mu|^2 + d (sqrt(t s2 + 1 - t) - s)^2)`.
pub fn smoothing_w2_gaussian(target: &SphericalGaussian, t: f64) -> Result<f64> {
    if !(t > 0.0 && t <= 1.0) {
        return Err(Error::domain(format!("t = {t} outside (0, 1]")));
    }
    let (m, v) = smoothed_params(target, t);
    w2_spherical_gaussians(&m, v, &target.mean, target.variance)
}

/// `KL(N(m1, v1 I) || N(m2, v2 I))`.
pub fn kl_spherical_gaussians(m1: &[f64], v1: f64, m2: &[f64], v2: f64) -> Result<f64> {
    if !(v1 > 0.0 && v2 > 0.0 && v1.is_finite() && v2.is_finite()) {
        return Err(Error::domain(format!("degenerate variances {v1}, {v2}")));
    }
    let d = m1.len() as f64;
    // r - 1 - ln r with r = v1 / v2, accurate near r = 1
    let x = (v1 - v2) / v2;
    let shape = if x.abs() < 1e-3 {
        let mut acc = 0.0;
        let mut p = x * x;
        for k in 2..12 {
            let term = p / k as f64;
            acc += if k % 2 == 0 { term } else { -term };
            p *= x;
        }
        acc
    } else {
        x - x.ln_1p()
    };
    let gap = dist(m1, m2);
    Ok(0.5 * (d * shape + gap * gap / v2))
}

/// `KL(S_{t_N} P* || law Y_N)` for the exact or constant-shift score.
pub fn kl_pipeline_gaussian(
    schedule: &VarianceSchedule,
    target: &SphericalGaussian,
    mu_hat: &[f64],
    perturbation: Option<&ScoreModel>,
) -> Result<f64> {
    let state = moment_recursion(schedule, target, mu_hat, perturbation)?;
    let (m, v) = state.terminal_law();
    let (sm, sv) = smoothed_params(target, schedule.t_n());
    kl_spherical_gaussians(&sm, sv, &m, v)
}

/// `|mu_hat - mu|`
pub fn mean_gap(target: &SphericalGaussian, mu_hat: &[f64]) -> f64 {
    dist(mu_hat, &target.mean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::ScoreErrorProfile;
    use approx::assert_relative_eq;

    fn g(mean: Vec<f64>, var: f64) -> SphericalGaussian {
        SphericalGaussian::new(mean, var).unwrap()
    }

    #[test]
    fn unit_variance_is_preserved() {
        let s = VarianceSchedule::harmonic(20).unwrap();
        let t = g(vec![1.0, -2.0], 1.0);
        let st = moment_recursion(&s, &t, &[1.0, -2.0], None).unwrap();
        let (m, v) = st.terminal_law();
        assert_relative_eq!(v, 1.0, epsilon = 1e-14);
        assert_relative_eq!(m[0], 1.0, epsilon = 1e-14);
        assert_relative_eq!(m[1], -2.0, epsilon = 1e-14);
    }

    #[test]
    fn unit_variance_mean_telescopes() {
        let s = VarianceSchedule::harmonic(20).unwrap();
        let t = g(vec![0.0, 0.0], 1.0);
        let mu_hat = [3.0, 4.0];
        let w = exact_sampler_w2(&s, &t, &mu_hat, None).unwrap();
        assert_relative_eq!(w.to_target, s.t0() * 5.0, epsilon = 1e-14);
        let st = moment_recursion(&s, &t, &mu_hat, None).unwrap();
        assert_relative_eq!(st.mu_seq[20][0], s.t0() * 3.0, epsilon = 1e-14);
    }

    #[test]
    fn w2_gaussian_cases() {
        assert_eq!(w2_spherical_gaussians(&[1.0], 2.0, &[1.0], 2.0).unwrap(), 0.0);
        assert_relative_eq!(w2_spherical_gaussians(&[0.0, 3.0], 2.0, &[4.0, 0.0], 2.0).unwrap(), 5.0);
        assert_relative_eq!(w2_spherical_gaussians(&[0.0], 1.0, &[0.0], 4.0).unwrap(), 1.0);
        assert!(w2_spherical_gaussians(&[0.0], -1.0, &[0.0], 4.0).is_err());
    }

    #[test]
    fn lower_bound_zero_cases() {
        let t = g(vec![0.0; 4], 1.0);
        assert_eq!(w2_lower_bound(0.1, 0.05, &t, &[1.0, 0.0, 0.0, 0.0]).unwrap(), 0.0);
        let t = g(vec![0.0; 4], 4.0);
        assert_eq!(w2_lower_bound(0.1, 0.05, &t, &[0.0; 4]).unwrap(), 0.0);
    }

    #[test]
    fn smoothing_cases() {
        let t = g(vec![1.0, 2.0], 4.0);
        assert_eq!(smoothing_w2_gaussian(&t, 1.0).unwrap(), 0.0);
        let t = g(vec![0.0; 3], 1.0);
        assert_eq!(smoothing_w2_gaussian(&t, 0.3).unwrap(), 0.0);
        let t = g(vec![0.0; 8], 4.0);
        let delta: f64 = 0.01;
        let lhs = smoothing_w2_gaussian(&t, 1.0 - delta).unwrap();
        assert!(lhs <= (t.trace_cov() * delta * delta + 8.0 * delta).sqrt());
    }

    #[test]
    fn kl_cases() {
        assert_eq!(kl_spherical_gaussians(&[1.0], 2.0, &[1.0], 2.0).unwrap(), 0.0);
        assert_relative_eq!(kl_spherical_gaussians(&[0.0, 0.0], 1.0, &[3.0, 4.0], 1.0).unwrap(), 12.5);
        // series branch agrees with the direct formula just outside its range
        let v: f64 = 1.0 + 9.9e-4;
        let direct = 0.5 * (v - 1.0 - v.ln());
        assert_relative_eq!(kl_spherical_gaussians(&[0.0], v, &[0.0], 1.0).unwrap(), direct, max_relative = 1e-8);
        assert!(kl_spherical_gaussians(&[0.0], 0.0, &[0.0], 1.0).is_err());
    }

    #[test]
    fn constant_shift_moves_mean_only() {
        let s = VarianceSchedule::harmonic(8).unwrap();
        let t = g(vec![0.0, 0.0], 2.0);
        let model = ScoreModel::Perturbed {
            profile: ScoreErrorProfile::Constant { eps: 0.1 },
            mode: PerturbationMode::ConstantVector { u: vec![1.0, 0.0] },
        };
        let a = moment_recursion(&s, &t, &[0.0, 0.0], None).unwrap();
        let b = moment_recursion(&s, &t, &[0.0, 0.0], Some(&model)).unwrap();
        assert_eq!(a.var_seq, b.var_seq);
        assert!(b.mu_seq[8][0] > 0.0);
        assert_eq!(b.mu_seq[8][1], 0.0);
        let rd = ScoreModel::Perturbed {
            profile: ScoreErrorProfile::Constant { eps: 0.1 },
            mode: PerturbationMode::RandomDirection,
        };
        assert!(moment_recursion(&s, &t, &[0.0, 0.0], Some(&rd)).is_err());
    }

    #[test]
    fn csv_dump_has_one_row_per_step() {
        let s = VarianceSchedule::harmonic(3).unwrap();
        let t = g(vec![1.0], 2.0);
        let st = moment_recursion(&s, &t, &[0.0], None).unwrap();
        let mut buf = Vec::new();
        st.write_csv(&mut buf, &t.mean).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert!(text.starts_with("step,t,mu_gap,var,g"));
    }
}
