//! The DDPM recursion, its Föllmer-discretization twin, and score perturbations.
//!
//! Every chain owns one ChaCha12 stream selected by `(seed, chain)`. The
//! initial point consumes the first `d` normals and step `i` the next `d`, so
//! the two samplers see identical noise and a chain's output does not depend
//! on how chains are scheduled across threads.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profiles::ScoreErrorProfile;
use crate::schedules::VarianceSchedule;
use crate::targets::Target;

/// Stream offset for the random-direction perturbation draws, kept disjoint
/// from the noise streams.
const DIRECTION_STREAM: u64 = 1 << 63;

/// How a perturbed score picks its error direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum PerturbationMode {
    /// The same unit vector `u` at every point and step.
    ConstantVector { u: Vec<f64> },
    /// A fresh uniform unit vector per chain and step.
    RandomDirection,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScoreModel {
    #[default]
    Exact,
    /// `s_i = 0`; only useful as a test stub.
    Zero,
    /// `s_i(y) = score(t_i, y) + eps(t_i) v` with `|v| = 1`.
    Perturbed {
        profile: ScoreErrorProfile,
        #[serde(flatten)]
        mode: PerturbationMode,
    },
}

impl ScoreModel {
    /// The constant perturbation vector `eps(t) u`, if this model has one.
    pub fn constant_shift(&self, t: f64) -> Option<Vec<f64>> {
        match self {
            ScoreModel::Perturbed {
                profile,
                mode: PerturbationMode::ConstantVector { u },
            } => {
                let e = profile.eval(t);
                Some(u.iter().map(|x| e * x).collect())
            }
            _ => None,
        }
    }

    pub fn error_profile(&self) -> ScoreErrorProfile {
        match self {
            ScoreModel::Perturbed { profile, .. } => profile.clone(),
            _ => ScoreErrorProfile::Zero,
        }
    }
}

/// Builds a score model whose error has norm exactly `profile(t_i)` at every
/// grid time. A zero profile gives [`ScoreModel::Exact`].
pub fn make_perturbed_score(
    target: &Target,
    profile: ScoreErrorProfile,
    mode: PerturbationMode,
    grid: &[f64],
) -> Result<ScoreModel> {
    profile.validate()?;
    profile.check_nondecreasing(grid)?;
    if profile.is_zero() {
        return Ok(ScoreModel::Exact);
    }
    if let PerturbationMode::ConstantVector { u } = &mode {
        if u.len() != target.dim() {
            return Err(Error::validation(format!(
                "perturbation direction has dimension {}, target has {}",
                u.len(),
                target.dim()
            )));
        }
        let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::validation(format!("perturbation direction has norm {norm}, expected 1")));
        }
    }
    Ok(ScoreModel::Perturbed { profile, mode })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub mu_hat: Vec<f64>,
    pub n_chains: usize,
    pub seed: u64,
    #[serde(default)]
    pub score_model: ScoreModel,
}

impl SamplerConfig {
    pub fn new(mu_hat: Vec<f64>, n_chains: usize, seed: u64) -> Self {
        SamplerConfig {
            mu_hat,
            n_chains,
            seed,
            score_model: ScoreModel::Exact,
        }
    }

    pub fn with_score_model(mut self, model: ScoreModel) -> Self {
        self.score_model = model;
        self
    }

    pub fn validate(&self, target: &Target) -> Result<()> {
        if self.n_chains == 0 {
            return Err(Error::validation("n_chains must be >= 1"));
        }
        if self.mu_hat.len() != target.dim() {
            return Err(Error::validation(format!(
                "mu_hat has dimension {}, target has {}",
                self.mu_hat.len(),
                target.dim()
            )));
        }
        if self.mu_hat.iter().any(|x| !x.is_finite()) {
            return Err(Error::validation("mu_hat must be finite"));
        }
        if let ScoreModel::Perturbed { profile, mode } = &self.score_model {
            profile.validate()?;
            if let PerturbationMode::ConstantVector { u } = mode {
                if u.len() != target.dim() {
                    return Err(Error::validation("perturbation direction has the wrong dimension"));
                }
            }
        }
        Ok(())
    }
}

/// Row-major `rows x cols` matrix of samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

/// Per-coordinate sample moments with standard errors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentSummary {
    pub n: usize,
    pub mean: Vec<f64>,
    /// Unbiased per-coordinate variance.
    pub var: Vec<f64>,
    pub mean_se: Vec<f64>,
    /// Standard error of the variance estimate, from the fourth central moment.
    pub var_se: Vec<f64>,
}

impl SampleMatrix {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols.max(1))
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.iter_rows().map(|r| r[j]).collect()
    }

    /// Projections `<row, v>` of every row.
    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        self.iter_rows()
            .map(|r| r.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn moments(&self) -> MomentSummary {
        let n = self.rows as f64;
        let mut mean = vec![0.0; self.cols];
        for r in self.iter_rows() {
            for (m, x) in mean.iter_mut().zip(r) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut m2 = vec![0.0; self.cols];
        let mut m4 = vec![0.0; self.cols];
        for r in self.iter_rows() {
            for j in 0..self.cols {
                let c = r[j] - mean[j];
                m2[j] += c * c;
                m4[j] += c * c * c * c;
            }
        }
        let var: Vec<f64> = m2.iter().map(|s| s / (n - 1.0)).collect();
        let mean_se = var.iter().map(|v| (v / n).sqrt()).collect();
        let var_se = (0..self.cols)
            .map(|j| {
                let mu2 = m2[j] / n;
                let mu4 = m4[j] / n;
                ((mu4 - mu2 * mu2).max(0.0) / n).sqrt()
            })
            .collect();
        MomentSummary {
            n: self.rows,
            mean,
            var,
            mean_se,
            var_se,
        }
    }

    /// CSV with columns `<index_name>, x0, .., x{d-1}`.
    pub fn write_csv<W: Write>(&self, w: W, index_name: &str) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec![index_name.to_string()];
        header.extend((0..self.cols).map(|j| format!("x{j}")));
        wr.write_record(&header)?;
        for (i, r) in self.iter_rows().enumerate() {
            let mut rec = vec![i.to_string()];
            rec.extend(r.iter().map(|x| x.to_string()));
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }
}

fn noise_rng(seed: u64, chain: usize) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(chain as u64);
    rng
}

fn direction_rng(seed: u64, chain: usize) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(DIRECTION_STREAM | chain as u64);
    rng
}

fn fill_normal(rng: &mut ChaCha12Rng, z: &mut [f64]) {
    for v in z.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
}

/// Evaluates `s_i(y)` into `out`, checking for non-finite values.
struct ScoreEval<'a> {
    target: &'a Target,
    model: &'a ScoreModel,
    dir_rng: Option<ChaCha12Rng>,
    dir: Vec<f64>,
    chain: usize,
}

impl<'a> ScoreEval<'a> {
    fn new(target: &'a Target, model: &'a ScoreModel, seed: u64, chain: usize) -> Self {
        let dir_rng = match model {
            ScoreModel::Perturbed {
                mode: PerturbationMode::RandomDirection,
                ..
            } => Some(direction_rng(seed, chain)),
            _ => None,
        };
        ScoreEval {
            target,
            model,
            dir_rng,
            dir: vec![0.0; target.dim()],
            chain,
        }
    }

    fn eval(&mut self, step: usize, t: f64, y: &[f64], out: &mut [f64]) -> Result<()> {
        let non_finite = || Error::NonFiniteScore {
            chain: self.chain,
            step,
            t,
        };
        match self.model {
            ScoreModel::Zero => out.iter_mut().for_each(|v| *v = 0.0),
            ScoreModel::Exact => self.target.score_into(t, y, out)?,
            ScoreModel::Perturbed { profile, mode } => {
                self.target.score_into(t, y, out)?;
                let e = profile.eval(t);
                let u: &[f64] = match mode {
                    PerturbationMode::ConstantVector { u } => u,
                    PerturbationMode::RandomDirection => {
                        let rng = self.dir_rng.as_mut().expect("direction stream");
                        loop {
                            fill_normal(rng, &mut self.dir);
                            let n = self.dir.iter().map(|x| x * x).sum::<f64>().sqrt();
                            if n > 0.0 {
                                self.dir.iter_mut().for_each(|x| *x /= n);
                                break;
                            }
                        }
                        &self.dir
                    }
                };
                for (o, ui) in out.iter_mut().zip(u) {
                    *o += e * ui;
                }
            }
        }
        if out.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(non_finite())
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Scheme {
    Ddpm,
    Follmer,
}

/// Runs one chain; `path` receives `Y_0..Y_N` (in the DDPM scale) when given.
fn run_chain(
    scheme: Scheme,
    schedule: &VarianceSchedule,
    target: &Target,
    config: &SamplerConfig,
    chain: usize,
    mut path: Option<&mut Vec<f64>>,
) -> Result<Vec<f64>> {
    let d = target.dim();
    let times = schedule.times();
    let betas = schedule.betas();
    let t0 = times[0];
    let mut rng = noise_rng(config.seed, chain);
    let mut score = ScoreEval::new(target, &config.score_model, config.seed, chain);
    let mut z = vec![0.0; d];
    let mut s = vec![0.0; d];
    let mut y = vec![0.0; d];
    let mut x = vec![0.0; d];

    fill_normal(&mut rng, &mut z);
    match scheme {
        Scheme::Ddpm => {
            let r = t0.sqrt();
            for j in 0..d {
                y[j] = r * config.mu_hat[j] + z[j];
            }
        }
        Scheme::Follmer => {
            let r = t0.sqrt();
            for j in 0..d {
                x[j] = t0 * config.mu_hat[j] + r * z[j];
                y[j] = x[j] / r;
            }
        }
    }
    if let Some(p) = path.as_deref_mut() {
        p.extend_from_slice(&y);
    }

    for (i, &beta) in betas.iter().enumerate() {
        let ti = times[i];
        let tn = times[i + 1];
        match scheme {
            Scheme::Ddpm => {
                score.eval(i, ti, &y, &mut s)?;
                fill_normal(&mut rng, &mut z);
                let a = 1.0 / (1.0 - beta).sqrt();
                let b = beta.sqrt();
                for j in 0..d {
                    y[j] = (y[j] + beta * s[j]) * a + b * z[j];
                }
            }
            Scheme::Follmer => {
                let h = tn - ti;
                let rt = ti.sqrt();
                for j in 0..d {
                    y[j] = x[j] / rt;
                }
                score.eval(i, ti, &y, &mut s)?;
                fill_normal(&mut rng, &mut z);
                let grow = 1.0 + h / ti;
                let drift = h / rt;
                let sh = h.sqrt();
                for j in 0..d {
                    x[j] = grow * x[j] + drift * s[j] + sh * z[j];
                }
                let rn = tn.sqrt();
                for j in 0..d {
                    y[j] = x[j] / rn;
                }
            }
        }
        if let Some(p) = path.as_deref_mut() {
            p.extend_from_slice(&y);
        }
    }
    Ok(y)
}

/// Runs `f` on a pool capped by `W2LAB_THREADS` when that is set.
pub fn with_thread_cap<R: Send>(f: impl FnOnce() -> R + Send) -> R {
    match std::env::var("W2LAB_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        Some(n) if n > 0 => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        },
        _ => f(),
    }
}

fn run_all(scheme: Scheme, schedule: &VarianceSchedule, target: &Target, config: &SamplerConfig) -> Result<SampleMatrix> {
    schedule.validate()?;
    target.validate()?;
    config.validate(target)?;
    let d = target.dim();
    let rows: Vec<Result<Vec<f64>>> = with_thread_cap(|| {
        (0..config.n_chains)
            .into_par_iter()
            .map(|c| run_chain(scheme, schedule, target, config, c, None))
            .collect()
    });
    let mut data = Vec::with_capacity(config.n_chains * d);
    for r in rows {
        data.extend(r?);
    }
    Ok(SampleMatrix {
        rows: config.n_chains,
        cols: d,
        data,
    })
}

/// Terminal points `Y_N` of `n_chains` independent DDPM chains.
pub fn ddpm_run(schedule: &VarianceSchedule, target: &Target, config: &SamplerConfig) -> Result<SampleMatrix> {
    run_all(Scheme::Ddpm, schedule, target, config)
}

/// Terminal points `X_{t_N} / sqrt(t_N)` of the Föllmer discretization,
/// driven by the same noise as [`ddpm_run`].
pub fn follmer_run(schedule: &VarianceSchedule, target: &Target, config: &SamplerConfig) -> Result<SampleMatrix> {
    run_all(Scheme::Follmer, schedule, target, config)
}

/// The full DDPM path `Y_0..Y_N` of one chain, as an `(N + 1) x d` matrix.
pub fn run_trajectory(
    schedule: &VarianceSchedule,
    target: &Target,
    config: &SamplerConfig,
    chain_index: usize,
) -> Result<SampleMatrix> {
    schedule.validate()?;
    target.validate()?;
    config.validate(target)?;
    if chain_index >= config.n_chains {
        return Err(Error::validation(format!(
            "chain index {chain_index} out of range for {} chains",
            config.n_chains
        )));
    }
    let mut path = Vec::with_capacity((schedule.n_steps() + 1) * target.dim());
    run_chain(Scheme::Ddpm, schedule, target, config, chain_index, Some(&mut path))?;
    Ok(SampleMatrix {
        rows: schedule.n_steps() + 1,
        cols: target.dim(),
        data: path,
    })
}

/// Trajectory CSV: `step, t, y0, .., y{d-1}`.
pub fn write_trajectory_csv<W: Write>(w: W, schedule: &VarianceSchedule, path: &SampleMatrix) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let mut header = vec!["step".to_string(), "t".to_string()];
    header.extend((0..path.cols).map(|j| format!("y{j}")));
    wr.write_record(&header)?;
    for (i, r) in path.iter_rows().enumerate() {
        let mut rec = vec![i.to_string(), schedule.times()[i].to_string()];
        rec.extend(r.iter().map(|x| x.to_string()));
        wr.write_record(&rec)?;
    }
    wr.flush()?;
    Ok(())
}
