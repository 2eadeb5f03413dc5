//! The acceptance gate: thirteen numerical checks, each reported as one
//! PASS/FAIL/SKIP line.

use std::fmt;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::bounds::{self, BoundId, BoundInputs};
use crate::error::{Error, Result};
use crate::gaussian_exact::{
    exact_sampler_w2, kl_pipeline_gaussian, moment_recursion, smoothing_w2_gaussian, w2_lower_bound,
};
use crate::harness::output::log_log_slope;
use crate::ot::{w2_exact_assignment, w2_permutation_oracle, SampleCloud};
use crate::profiles::ScoreErrorProfile;
use crate::sampler::{ddpm_run, follmer_run, PerturbationMode, SamplerConfig, ScoreModel};
use crate::schedules::{approx_le, audit_schedule, VarianceSchedule};
use crate::targets::{GaussianMixture, SphericalGaussian, Target};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    Skip,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skip => "SKIP",
        })
    }
}

#[derive(Debug, Clone)]
pub struct CriterionResult {
    pub id: usize,
    pub name: &'static str,
    pub status: Status,
    pub detail: String,
    pub seconds: f64,
}

impl fmt::Display for CriterionResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} AC{:02} {} ({:.2} s): {}",
            self.status, self.id, self.name, self.seconds, self.detail
        )
    }
}

type Outcome = Result<(bool, String)>;

pub struct Criterion {
    pub id: usize,
    pub name: &'static str,
    /// Included in the quick subset.
    pub quick: bool,
    run: fn() -> Outcome,
}

pub const CRITERIA: [Criterion; 13] = [
    Criterion { id: 1, name: "null consistency", quick: true, run: null_consistency },
    Criterion { id: 2, name: "pathwise sampler/Follmer equivalence", quick: true, run: pathwise_equivalence },
    Criterion { id: 3, name: "lower-bound domination", quick: true, run: lower_bound_domination },
    Criterion { id: 4, name: "upper-bound domination", quick: true, run: upper_bound_domination },
    Criterion { id: 5, name: "dimension scaling", quick: true, run: dimension_scaling },
    Criterion { id: 6, name: "step scaling", quick: true, run: step_scaling },
    Criterion { id: 7, name: "cosine schedule assertions", quick: true, run: cosine_assertions },
    Criterion { id: 8, name: "Monte Carlo law agreement", quick: false, run: monte_carlo_law },
    Criterion { id: 9, name: "mixture score oracle", quick: true, run: mixture_score_oracle },
    Criterion { id: 10, name: "OT oracle equivalence", quick: true, run: ot_oracle },
    Criterion { id: 11, name: "early stopping", quick: true, run: early_stopping },
    Criterion { id: 12, name: "step-sum inequality", quick: true, run: step_sum },
    Criterion { id: 13, name: "KL scaling", quick: true, run: kl_scaling },
];

impl Criterion {
    pub fn evaluate(&self) -> CriterionResult {
        let start = Instant::now();
        let (status, detail) = match (self.run)() {
            Ok((true, d)) => (Status::Pass, d),
            Ok((false, d)) => (Status::Fail, d),
            Err(e) => (Status::Fail, format!("error: {e}")),
        };
        CriterionResult {
            id: self.id,
            name: self.name,
            status,
            detail,
            seconds: start.elapsed().as_secs_f64(),
        }
    }

    fn skipped(&self) -> CriterionResult {
        CriterionResult {
            id: self.id,
            name: self.name,
            status: Status::Skip,
            detail: "not part of the quick subset".into(),
            seconds: 0.0,
        }
    }
}

/// Runs every criterion (or the quick subset), calling `report` after each.
pub fn verify_all(quick: bool, mut report: impl FnMut(&CriterionResult)) -> Vec<CriterionResult> {
    CRITERIA
        .iter()
        .map(|c| {
            let r = if quick && !c.quick { c.skipped() } else { c.evaluate() };
            report(&r);
            r
        })
        .collect()
}

/// Re-validates a schedule fixture, naming the violated invariant on failure.
pub fn verify_schedule_fixture(json: &str) -> CriterionResult {
    let start = Instant::now();
    let (status, detail) = match VarianceSchedule::from_json(json) {
        Ok(s) => (Status::Pass, format!("{} steps, all invariants hold", s.n_steps())),
        Err(e) => (Status::Fail, e.to_string()),
    };
    CriterionResult {
        id: 0,
        name: "schedule fixture",
        status,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn e1(d: usize, scale: f64) -> Vec<f64> {
    let mut v = vec![0.0; d];
    v[0] = scale;
    v
}

fn max_rel_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(1.0))
        .fold(0.0, f64::max)
}

fn null_consistency() -> Outcome {
    let schedules = [
        VarianceSchedule::constant(64, 0.05, 0.0)?,
        VarianceSchedule::harmonic(64)?,
        VarianceSchedule::cosine(64, 0.0, None)?,
    ];
    let mut worst: f64 = 0.0;
    for s in &schedules {
        for d in [1, 16, 256] {
            let t = SphericalGaussian::standard(d);
            worst = worst.max(exact_sampler_w2(s, &t, &vec![0.0; d], None)?.to_target);
        }
    }
    Ok((worst <= 1e-12, format!("max exact W2 = {worst:.3e} (tol 1e-12)")))
}

fn pathwise_equivalence() -> Outcome {
    let targets = [
        Target::Gaussian(SphericalGaussian::new(vec![1.0, -0.5, 2.0], 4.0)?),
        Target::Mixture(GaussianMixture::symmetric_pair(vec![1.5, 0.0, -0.5], 0.5)?),
    ];
    let schedules = [VarianceSchedule::harmonic(64)?, VarianceSchedule::cosine(64, 0.008, None)?];
    let mut worst: f64 = 0.0;
    for t in &targets {
        for s in &schedules {
            let config = SamplerConfig::new(vec![0.3, 0.0, -0.2], 1000, 11);
            let a = ddpm_run(s, t, &config)?;
            let b = follmer_run(s, t, &config)?;
            worst = worst.max(max_rel_diff(&a.data, &b.data));
        }
    }
    Ok((worst <= 1e-10, format!("max relative discrepancy = {worst:.3e} (tol 1e-10)")))
}

fn lower_bound_domination() -> Outcome {
    let mut worst = f64::INFINITY;
    let mut count = 0;
    for sigma in [0.5f64, 2.0, 4.0] {
        for d in [1, 4, 64] {
            let target = SphericalGaussian::new(vec![0.0; d], sigma * sigma)?;
            for k in 3..=10 {
                let s = VarianceSchedule::harmonic(1 << k)?;
                for gap in [0.0, 1.0, 10.0] {
                    let mu_hat = e1(d, gap);
                    let exact = exact_sampler_w2(&s, &target, &mu_hat, None)?.to_target;
                    let lower = w2_lower_bound(s.t0(), s.min_beta(), &target, &mu_hat)?;
                    worst = worst.min(exact - lower);
                    count += 1;
                }
            }
        }
    }
    Ok((
        worst >= -1e-9,
        format!("{count} grid points, min(exact - lower) = {worst:.3e} (tol -1e-9)"),
    ))
}

fn upper_bound_domination() -> Outcome {
    // (bound, schedule family) pairs whose hypotheses the schedules satisfy.
    let checks: [(BoundId, fn(usize) -> Result<VarianceSchedule>); 4] = [
        (BoundId::TwoSidedLipschitz, VarianceSchedule::harmonic),
        (BoundId::SemiLogConvex, VarianceSchedule::harmonic),
        (BoundId::OneSidedLipschitz, |n| VarianceSchedule::cosine(n, 0.008, None)),
        (BoundId::WeaklyLogConcave, |n| VarianceSchedule::cosine(n, 0.008, None)),
    ];
    let mut count = 0;
    let mut skipped = Vec::new();
    let mut worst = f64::INFINITY;
    let mut failures = Vec::new();
    for (id, build) in checks {
        let mut evaluated = 0;
        for n in [16, 64, 256] {
            let s = build(n)?;
            for sigma2 in [0.5, 0.8, 1.25, 2.0] {
                for d in [1, 16] {
                    let target = SphericalGaussian::new(vec![0.0; d], sigma2)?;
                    let mu_hat = vec![0.0; d];
                    for eps in [0.0, 0.05] {
                        let profile = if eps == 0.0 {
                            ScoreErrorProfile::Zero
                        } else {
                            ScoreErrorProfile::InvSqrtOneMinus { eps }
                        };
                        let model = if eps == 0.0 {
                            ScoreModel::Exact
                        } else {
                            ScoreModel::Perturbed {
                                profile: profile.clone(),
                                mode: PerturbationMode::ConstantVector { u: e1(d, 1.0) },
                            }
                        };
                        let exact = exact_sampler_w2(&s, &target, &mu_hat, Some(&model))?.to_target;
                        let inp = BoundInputs::gaussian(s.clone(), &target, &mu_hat, profile);
                        match bounds::evaluate(id, &inp) {
                            Ok(v) => {
                                count += 1;
                                evaluated += 1;
                                let margin = v.value - exact;
                                worst = worst.min(margin / exact.max(1e-300));
                                if margin < 0.0 {
                                    failures.push(format!(
                                        "{id} N={n} s2={sigma2} d={d} eps={eps}: {} < {exact}",
                                        v.value
                                    ));
                                }
                            }
                            Err(Error::HypothesisViolation { condition, .. }) => {
                                skipped.push(format!("{id} N={n}: {condition}"));
                            }
                            Err(e) => return Err(e),
                        }
                    }
                }
            }
        }
        if evaluated == 0 {
            failures.push(format!("{id}: no grid point satisfied its hypotheses"));
        }
    }
    let mut detail = format!(
        "{count} comparisons, min relative margin = {worst:.3e}, {} skipped for hypotheses",
        skipped.len()
    );
    if let Some(f) = failures.first() {
        detail.push_str(&format!("; {} failures, first: {f}", failures.len()));
    }
    Ok((failures.is_empty(), detail))
}

fn dimension_scaling() -> Outcome {
    let mut worst: f64 = 0.0;
    for s in [VarianceSchedule::harmonic(64)?, VarianceSchedule::cosine(64, 0.008, None)?] {
        for sigma2 in [0.5, 2.0, 4.0] {
            let mean1 = vec![0.7];
            let base = exact_sampler_w2(&s, &SphericalGaussian::new(mean1.clone(), sigma2)?, &mean1, None)?.to_target;
            for d in [4usize, 16, 64, 256] {
                let mean = vec![0.7; d];
                let t = SphericalGaussian::new(mean.clone(), sigma2)?;
                let w = exact_sampler_w2(&s, &t, &mean, None)?.to_target;
                let rel = (w / base - (d as f64).sqrt()).abs() / (d as f64).sqrt();
                worst = worst.max(rel);
            }
        }
    }
    Ok((worst <= 1e-12, format!("max relative deviation from sqrt(d) = {worst:.3e} (tol 1e-12)")))
}

fn step_scaling() -> Outcome {
    let target = SphericalGaussian::new(vec![0.0], 4.0)?;
    let mut eta = Vec::new();
    let mut w = Vec::new();
    for k in 4..=12 {
        let s = VarianceSchedule::harmonic(1 << k)?;
        eta.push(s.max_step());
        w.push(exact_sampler_w2(&s, &target, &[0.0], None)?.to_target);
    }
    match log_log_slope(&eta, &w) {
        Some(slope) => Ok(((0.9..=1.1).contains(&slope), format!("slope = {slope:.4} (band [0.9, 1.1])"))),
        None => Ok((false, "slope undefined (non-positive values)".into())),
    }
}

fn cosine_assertions() -> Outcome {
    let mut checked = 0;
    let mut failures = Vec::new();
    for n in 4..=2048usize {
        for s_off in [0.5 / n as f64, 0.008, 0.05] {
            let s = VarianceSchedule::cosine(n, s_off, None)?;
            let flags = audit_schedule(&s)
                .cosine
                .ok_or_else(|| Error::Numerical("cosine flags missing".into()))?;
            checked += 1;
            if !(flags.a && flags.b && flags.c) {
                failures.push(format!("N={n} s={s_off}: a={} b={} c={}", flags.a, flags.b, flags.c));
            }
        }
    }
    let mut detail = format!("{checked} schedules checked");
    if let Some(f) = failures.first() {
        detail.push_str(&format!("; {} failures, first: {f}", failures.len()));
    }
    Ok((failures.is_empty(), detail))
}

/// Asymptotic Kolmogorov p-value with Stephens' small-sample correction.
pub fn ks_p_value(stat: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * stat;
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = (-2.0 * k * k * lambda * lambda).exp();
        sum += if k as i64 % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample Kolmogorov-Smirnov statistic against `N(mean, sd^2)`.
pub fn ks_statistic(mut xs: Vec<f64>, mean: f64, sd: f64) -> Result<f64> {
    let dist = Normal::new(mean, sd).map_err(|e| Error::Numerical(e.to_string()))?;
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    Ok(xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = dist.cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max))
}

fn monte_carlo_law() -> Outcome {
    let mu = vec![1.0, -1.0, 0.5, 0.0];
    let target = SphericalGaussian::new(mu, 4.0)?;
    let s = VarianceSchedule::harmonic(128)?;
    let mu_hat = vec![0.0; 4];
    let (m, v) = moment_recursion(&s, &target, &mu_hat, None)?.terminal_law();
    let n = 100_000;
    let samples = ddpm_run(&s, &Target::Gaussian(target), &SamplerConfig::new(mu_hat, n, 2024))?;
    let mom = samples.moments();
    let mut z_max: f64 = 0.0;
    for j in 0..4 {
        z_max = z_max.max((mom.mean[j] - m[j]).abs() / mom.mean_se[j]);
        z_max = z_max.max((mom.var[j] - v).abs() / mom.var_se[j]);
    }
    let r14 = 14f64.sqrt();
    let projections = [
        vec![1.0, 0.0, 0.0, 0.0],
        vec![0.5, 0.5, 0.5, 0.5],
        vec![1.0 / r14, -2.0 / r14, 0.0, 3.0 / r14],
    ];
    let mut p_min: f64 = 1.0;
    for u in &projections {
        let pm: f64 = u.iter().zip(&m).map(|(a, b)| a * b).sum();
        let stat = ks_statistic(samples.project(u), pm, v.sqrt())?;
        p_min = p_min.min(ks_p_value(stat, n));
    }
    Ok((
        z_max <= 5.0 && p_min > 1e-3,
        format!("max |z| of means/variances = {z_max:.3} (tol 5), min KS p = {p_min:.4} (> 0.001)"),
    ))
}

fn mixture_score_oracle() -> Outcome {
    let mixtures = [
        GaussianMixture::new(vec![0.3, 0.7], vec![vec![-1.0], vec![1.5]], vec![0.5, 2.0])?,
        GaussianMixture::new(
            vec![0.2, 0.5, 0.3],
            vec![vec![1.0, 0.0], vec![-1.0, 1.0], vec![0.0, -2.0]],
            vec![0.3, 1.0, 0.7],
        )?,
        GaussianMixture::symmetric_pair(vec![1.0, -0.5, 0.8], 0.6)?,
    ];
    let mut rng = ChaCha12Rng::seed_from_u64(9);
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let target = Target::Mixture(mixtures[i % 3].clone());
        let t: f64 = rng.gen_range(0.05..0.95);
        let y: Vec<f64> = (0..target.dim()).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let exact = target.score(t, &y)?;
        let fd = target.score_fd_oracle(t, &y, 1e-5)?;
        let norm = exact.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-3);
        let err = exact.iter().zip(&fd).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() / norm;
        worst = worst.max(err);
    }
    Ok((worst <= 1e-5, format!("100 points, max relative error = {worst:.3e} (tol 1e-5)")))
}

fn ot_oracle() -> Outcome {
    let mut rng = ChaCha12Rng::seed_from_u64(10);
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for n in 1..=7usize {
        for _ in 0..200 {
            let d = rng.gen_range(1..=3);
            let mut cloud = || -> Result<SampleCloud> {
                SampleCloud::new((0..n * d).map(|_| rng.gen_range(-3.0..3.0)).collect(), d)
            };
            let x = cloud()?;
            let y = cloud()?;
            let a = w2_exact_assignment(&x, &y)?;
            let b = w2_permutation_oracle(&x, &y)?;
            worst = worst.max((a - b).abs() / b.max(1.0));
            count += 1;
        }
    }
    Ok((worst <= 1e-12, format!("{count} instances, max discrepancy = {worst:.3e} (tol 1e-12)")))
}

fn early_stopping() -> Outcome {
    let mut worst = f64::INFINITY;
    for sigma in [0.5f64, 1.0, 2.0] {
        for d in [1usize, 8, 64] {
            let target = SphericalGaussian::new(vec![0.0; d], sigma * sigma)?;
            for delta in [1e-4, 1e-2, 0.1] {
                let w = smoothing_w2_gaussian(&target, 1.0 - delta)?;
                let bound = bounds::early_stopping_value(target.trace_cov(), d, delta);
                worst = worst.min(bound - w);
            }
        }
    }
    Ok((worst >= 0.0, format!("27 cases, min(bound - W2) = {worst:.3e}")))
}

fn step_sum() -> Outcome {
    let mut battery = Vec::new();
    for n in [4, 16, 64, 256, 1024, 4096] {
        battery.push(VarianceSchedule::harmonic(n)?);
        battery.push(VarianceSchedule::cosine(n, 0.008, None)?);
        battery.push(VarianceSchedule::cosine(n, 0.5 / n as f64, None)?);
        battery.push(VarianceSchedule::constant(n, 0.02, 1e-3)?);
    }
    for n in [100, 1000] {
        battery.push(VarianceSchedule::geometric(n, 2.0, 2.0, 1e-4)?);
        battery.push(VarianceSchedule::geometric(n, 1.0, 1.0, 1e-3)?);
    }
    let mut audited = 0;
    let mut worst = f64::INFINITY;
    for s in &battery {
        let r = audit_schedule(s);
        if r.beta_ok && r.eta_balanced.is_feasible() {
            audited += 1;
            worst = worst.min(r.min_stepsum_margin());
        }
    }
    let ok = audited > 0 && approx_le(0.0, worst);
    Ok((
        ok,
        format!("{audited} of {} schedules meet the premises, min margin = {worst:.4}", battery.len()),
    ))
}

fn kl_scaling() -> Outcome {
    let mu = vec![0.5, -0.5];
    let target = SphericalGaussian::new(mu.clone(), 1.0)?;
    let mut eta = Vec::new();
    let mut kl = Vec::new();
    for n in [64, 128, 256, 512, 1024, 2048] {
        let s = VarianceSchedule::geometric(n, 2.0, 2.0, 1e-3)?;
        let r = audit_schedule(&s);
        eta.push(r.eta_relative.eta().unwrap_or(r.max_step));
        kl.push(kl_pipeline_gaussian(&s, &target, &mu, None)?);
    }
    let decreasing = kl.windows(2).all(|w| w[1] < w[0]);
    let slope = log_log_slope(&eta, &kl);
    let in_band = slope.is_some_and(|s| (1.6..=2.4).contains(&s));
    let kl_max = kl.iter().copied().fold(0.0, f64::max);
    let slope_txt = slope.map_or("undefined".to_string(), |s| format!("{s:.4}"));
    Ok((
        decreasing && in_band,
        format!("max KL = {kl_max:.3e}, strictly decreasing = {decreasing}, slope = {slope_txt} (band [1.6, 2.4])"),
    ))
}
