//! Grid experiments: a spec enumerates schedule families, step counts,
//! dimensions, variances, initialization offsets and score errors; each grid
//! point yields one CSV row.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{self, BoundId, BoundInputs};
use crate::error::{Error, Result};
use crate::gaussian_exact::{exact_sampler_w2, kl_pipeline_gaussian, w2_lower_bound};
use crate::harness::output::{cell, json_hash, log_log_slope, write_with_metadata};
use crate::harness::svg::{LinePlot, Series};
use crate::ot::{w2_exact_assignment, w2_sliced, SampleCloud, MAX_ASSIGNMENT_SIZE};
use crate::profiles::ScoreErrorProfile;
use crate::sampler::{ddpm_run, follmer_run, with_thread_cap, PerturbationMode, SamplerConfig, ScoreModel};
use crate::schedules::{audit_schedule, VarianceSchedule};
use crate::targets::{GaussianMixture, SphericalGaussian, Target};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FamilySpec {
    Constant { beta0: f64, delta: f64 },
    Geometric { c0: f64, c1: f64, delta: f64 },
    /// `s = None` means `s = 1 / (2N)`.
    Cosine { s: Option<f64> },
    Harmonic,
}

impl FamilySpec {
    pub fn build(&self, n: usize) -> Result<VarianceSchedule> {
        match *self {
            FamilySpec::Constant { beta0, delta } => VarianceSchedule::constant(n, beta0, delta),
            FamilySpec::Geometric { c0, c1, delta } => VarianceSchedule::geometric(n, c0, c1, delta),
            FamilySpec::Cosine { s } => VarianceSchedule::cosine(n, s.unwrap_or(0.5 / n as f64), None),
            FamilySpec::Harmonic => VarianceSchedule::harmonic(n),
        }
    }

    pub fn label(&self) -> String {
        match self {
            FamilySpec::Constant { beta0, delta } => format!("constant(beta0={beta0},delta={delta})"),
            FamilySpec::Geometric { c0, c1, delta } => format!("geometric(c0={c0},c1={c1},delta={delta})"),
            FamilySpec::Cosine { s: Some(s) } => format!("cosine(s={s})"),
            FamilySpec::Cosine { s: None } => "cosine(s=1/(2N))".to_string(),
            FamilySpec::Harmonic => "harmonic".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetSpec {
    /// `N(0, sigma^2 I_d)`.
    Gaussian,
    /// Equal-weight pair at `+-separation/2 e_1` with component variance sigma^2.
    Mixture { separation: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsShape {
    #[default]
    Constant,
    InvSqrtOneMinus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Outputs {
    #[serde(default)]
    pub exact: bool,
    #[serde(default)]
    pub monte_carlo: bool,
    #[serde(default)]
    pub bounds: bool,
    #[serde(default)]
    pub empirical_ot: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotSpec {
    pub x: String,
    pub y: Vec<String>,
    #[serde(default)]
    pub log_x: bool,
    #[serde(default)]
    pub log_y: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub id: String,
    #[serde(default)]
    pub description: String,
    pub families: Vec<FamilySpec>,
    pub n_list: Vec<usize>,
    pub d_list: Vec<usize>,
    pub sigma2_list: Vec<f64>,
    pub mu_offsets: Vec<f64>,
    pub eps_list: Vec<f64>,
    #[serde(default)]
    pub eps_shape: EpsShape,
    pub target: TargetSpec,
    pub n_chains: usize,
    pub seed: u64,
    pub outputs: Outputs,
    #[serde(default)]
    pub plot: Option<PlotSpec>,
    /// Columns whose log-log slope against `plot.x` is reported.
    #[serde(default)]
    pub slope_of: Vec<String>,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        let axes = [
            ("families", self.families.len()),
            ("n_list", self.n_list.len()),
            ("d_list", self.d_list.len()),
            ("sigma2_list", self.sigma2_list.len()),
            ("mu_offsets", self.mu_offsets.len()),
            ("eps_list", self.eps_list.len()),
        ];
        for (name, len) in axes {
            if len == 0 {
                return Err(Error::validation(format!("experiment axis {name} is empty")));
            }
        }
        if self.n_list.contains(&0) || self.d_list.contains(&0) {
            return Err(Error::validation("n_list and d_list entries must be >= 1"));
        }
        if self.sigma2_list.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::validation("sigma2_list entries must be > 0"));
        }
        if self.eps_list.iter().any(|e| !(*e >= 0.0)) {
            return Err(Error::validation("eps_list entries must be >= 0"));
        }
        if (self.outputs.monte_carlo || self.outputs.empirical_ot) && self.n_chains == 0 {
            return Err(Error::validation("n_chains must be >= 1 for sampling outputs"));
        }
        if let Some(p) = &self.plot {
            for c in std::iter::once(&p.x).chain(&p.y) {
                if !COLUMNS.contains(&c.as_str()) {
                    return Err(Error::validation(format!("unknown plot column '{c}'")));
                }
            }
        }
        Ok(())
    }

    pub fn hash(&self) -> String {
        json_hash(self)
    }

    fn grid(&self) -> Vec<GridPoint> {
        let mut out = Vec::new();
        for f in &self.families {
            for &n in &self.n_list {
                for &d in &self.d_list {
                    for &sigma2 in &self.sigma2_list {
                        for &offset in &self.mu_offsets {
                            for &eps in &self.eps_list {
                                out.push(GridPoint {
                                    family: f.clone(),
                                    n,
                                    d,
                                    sigma2,
                                    offset,
                                    eps,
                                });
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
struct GridPoint {
    family: FamilySpec,
    n: usize,
    d: usize,
    sigma2: f64,
    offset: f64,
    eps: f64,
}

pub const COLUMNS: [&str; 26] = [
    "family",
    "n_steps",
    "d",
    "sigma2",
    "mu_offset",
    "eps",
    "t0",
    "delta",
    "max_step",
    "eta_tail",
    "min_beta",
    "exact_w2",
    "exact_w2_smoothed",
    "kl_smoothed",
    "lower_bound",
    "bound_two_sided_lipschitz",
    "bound_semi_log_convex",
    "bound_one_sided_lipschitz",
    "bound_weakly_log_concave",
    "mc_max_mean_z",
    "mc_mean_var",
    "follmer_max_rel_diff",
    "empirical_w2",
    "empirical_w2_baseline",
    "sliced_w2",
    "error",
];

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ExperimentRow {
    pub family: String,
    pub n_steps: usize,
    pub d: usize,
    pub sigma2: f64,
    pub mu_offset: f64,
    pub eps: f64,
    pub t0: Option<f64>,
    pub delta: Option<f64>,
    pub max_step: Option<f64>,
    pub eta_tail: Option<f64>,
    pub min_beta: Option<f64>,
    pub exact_w2: Option<f64>,
    pub exact_w2_smoothed: Option<f64>,
    pub kl_smoothed: Option<f64>,
    pub lower_bound: Option<f64>,
    pub bound_two_sided_lipschitz: Option<f64>,
    pub bound_semi_log_convex: Option<f64>,
    pub bound_one_sided_lipschitz: Option<f64>,
    pub bound_weakly_log_concave: Option<f64>,
    pub mc_max_mean_z: Option<f64>,
    pub mc_mean_var: Option<f64>,
    pub follmer_max_rel_diff: Option<f64>,
    pub empirical_w2: Option<f64>,
    pub empirical_w2_baseline: Option<f64>,
    pub sliced_w2: Option<f64>,
    pub error: String,
}

impl ExperimentRow {
    /// Numeric value of a column by name.
    pub fn get(&self, column: &str) -> Option<f64> {
        Some(match column {
            "n_steps" => self.n_steps as f64,
            "d" => self.d as f64,
            "sigma2" => self.sigma2,
            "mu_offset" => self.mu_offset,
            "eps" => self.eps,
            "t0" => return self.t0,
            "delta" => return self.delta,
            "max_step" => return self.max_step,
            "eta_tail" => return self.eta_tail,
            "min_beta" => return self.min_beta,
            "exact_w2" => return self.exact_w2,
            "exact_w2_smoothed" => return self.exact_w2_smoothed,
            "kl_smoothed" => return self.kl_smoothed,
            "lower_bound" => return self.lower_bound,
            "bound_two_sided_lipschitz" => return self.bound_two_sided_lipschitz,
            "bound_semi_log_convex" => return self.bound_semi_log_convex,
            "bound_one_sided_lipschitz" => return self.bound_one_sided_lipschitz,
            "bound_weakly_log_concave" => return self.bound_weakly_log_concave,
            "mc_max_mean_z" => return self.mc_max_mean_z,
            "mc_mean_var" => return self.mc_mean_var,
            "follmer_max_rel_diff" => return self.follmer_max_rel_diff,
            "empirical_w2" => return self.empirical_w2,
            "empirical_w2_baseline" => return self.empirical_w2_baseline,
            "sliced_w2" => return self.sliced_w2,
            _ => return None,
        })
    }

    fn record(&mut self, stage: &str, e: Error) {
        if !self.error.is_empty() {
            self.error.push_str("; ");
        }
        self.error.push_str(&format!("{stage}: {e}"));
    }

    fn cells(&self) -> Vec<String> {
        let mut v = vec![
            self.family.clone(),
            self.n_steps.to_string(),
            self.d.to_string(),
            self.sigma2.to_string(),
            self.mu_offset.to_string(),
            self.eps.to_string(),
        ];
        for c in &COLUMNS[6..COLUMNS.len() - 1] {
            v.push(cell(self.get(c)));
        }
        v.push(self.error.clone());
        v
    }
}

fn eps_profile(shape: EpsShape, eps: f64) -> ScoreErrorProfile {
    if eps == 0.0 {
        return ScoreErrorProfile::Zero;
    }
    match shape {
        EpsShape::Constant => ScoreErrorProfile::Constant { eps },
        EpsShape::InvSqrtOneMinus => ScoreErrorProfile::InvSqrtOneMinus { eps },
    }
}

fn unit(d: usize) -> Vec<f64> {
    let mut u = vec![0.0; d];
    u[0] = 1.0;
    u
}

fn bound_or_none(row: &mut ExperimentRow, id: BoundId, inp: &BoundInputs) -> Option<f64> {
    match bounds::evaluate(id, inp) {
        Ok(v) => Some(v.value),
        Err(Error::HypothesisViolation { .. }) => None,
        Err(e) => {
            row.record(id.as_str(), e);
            None
        }
    }
}

fn run_point(spec: &ExperimentSpec, p: &GridPoint, index: usize) -> ExperimentRow {
    let mut row = ExperimentRow {
        family: p.family.label(),
        n_steps: p.n,
        d: p.d,
        sigma2: p.sigma2,
        mu_offset: p.offset,
        eps: p.eps,
        ..Default::default()
    };
    let schedule = match p.family.build(p.n) {
        Ok(s) => s,
        Err(e) => {
            row.record("schedule", e);
            return row;
        }
    };
    let audit = audit_schedule(&schedule);
    row.t0 = Some(audit.t0);
    row.delta = Some(audit.delta);
    row.max_step = Some(audit.max_step);
    row.eta_tail = audit.eta_tail.eta();
    row.min_beta = Some(audit.min_beta);

    let mu_hat: Vec<f64> = unit(p.d).into_iter().map(|x| x * p.offset).collect();
    let profile = eps_profile(spec.eps_shape, p.eps);
    let model = if profile.is_zero() {
        ScoreModel::Exact
    } else {
        ScoreModel::Perturbed {
            profile: profile.clone(),
            mode: PerturbationMode::ConstantVector { u: unit(p.d) },
        }
    };

    let target = match &spec.target {
        TargetSpec::Gaussian => SphericalGaussian::new(vec![0.0; p.d], p.sigma2).map(Target::Gaussian),
        TargetSpec::Mixture { separation } => {
            let mut m = vec![0.0; p.d];
            m[0] = separation / 2.0;
            GaussianMixture::symmetric_pair(m, p.sigma2).map(Target::Mixture)
        }
    };
    let target = match target {
        Ok(t) => t,
        Err(e) => {
            row.record("target", e);
            return row;
        }
    };

    let mut exact_law: Option<(Vec<f64>, f64)> = None;
    if let Target::Gaussian(g) = &target {
        if spec.outputs.exact {
            match exact_sampler_w2(&schedule, g, &mu_hat, Some(&model)) {
                Ok(w) => {
                    row.exact_w2 = Some(w.to_target);
                    row.exact_w2_smoothed = Some(w.to_smoothed);
                }
                Err(e) => row.record("exact", e),
            }
            match kl_pipeline_gaussian(&schedule, g, &mu_hat, Some(&model)) {
                Ok(k) => row.kl_smoothed = Some(k),
                Err(e) => row.record("kl", e),
            }
            if schedule.delta() == 0.0 && profile.is_zero() {
                match w2_lower_bound(audit.t0, audit.min_beta, g, &mu_hat) {
                    Ok(v) => row.lower_bound = Some(v),
                    Err(e) => row.record("lower_bound", e),
                }
            }
        }
        if spec.outputs.monte_carlo {
            match crate::gaussian_exact::moment_recursion(&schedule, g, &mu_hat, Some(&model)) {
                Ok(st) => exact_law = Some(st.terminal_law()),
                Err(e) => row.record("moments", e),
            }
        }
        if spec.outputs.bounds {
            let inp = BoundInputs::gaussian(schedule.clone(), g, &mu_hat, profile.clone());
            row.bound_two_sided_lipschitz = bound_or_none(&mut row, BoundId::TwoSidedLipschitz, &inp);
            row.bound_semi_log_convex = bound_or_none(&mut row, BoundId::SemiLogConvex, &inp);
            row.bound_one_sided_lipschitz = bound_or_none(&mut row, BoundId::OneSidedLipschitz, &inp);
            row.bound_weakly_log_concave = bound_or_none(&mut row, BoundId::WeaklyLogConcave, &inp);
        }
    }

    if spec.outputs.monte_carlo || spec.outputs.empirical_ot {
        let seed = spec.seed.wrapping_add(index as u64);
        let config = SamplerConfig::new(mu_hat.clone(), spec.n_chains, seed).with_score_model(model.clone());
        match ddpm_run(&schedule, &target, &config) {
            Ok(samples) => {
                if spec.outputs.monte_carlo {
                    let m = samples.moments();
                    row.mc_mean_var = Some(m.var.iter().sum::<f64>() / m.var.len() as f64);
                    if let Some((mean, _)) = &exact_law {
                        let z = m
                            .mean
                            .iter()
                            .zip(mean)
                            .zip(&m.mean_se)
                            .map(|((a, b), se)| (a - b).abs() / se)
                            .fold(0.0, f64::max);
                        row.mc_max_mean_z = Some(z);
                    }
                    match follmer_run(&schedule, &target, &config) {
                        Ok(f) => {
                            let diff = samples
                                .data
                                .iter()
                                .zip(&f.data)
                                .map(|(a, b)| (a - b).abs() / a.abs().max(1.0))
                                .fold(0.0, f64::max);
                            row.follmer_max_rel_diff = Some(diff);
                        }
                        Err(e) => row.record("follmer", e),
                    }
                }
                if spec.outputs.empirical_ot {
                    empirical_ot(&mut row, &samples, &target, spec.n_chains, seed);
                }
            }
            Err(e) => row.record("sampler", e),
        }
    }
    row
}

fn empirical_ot(row: &mut ExperimentRow, samples: &crate::sampler::SampleMatrix, target: &Target, n: usize, seed: u64) {
    let d = target.dim();
    let reference = target.sample(n, seed ^ 0x5eed_0001);
    let baseline = target.sample(n, seed ^ 0x5eed_0002);
    let clouds = (|| -> Result<(SampleCloud, SampleCloud, SampleCloud)> {
        Ok((
            SampleCloud::try_from(samples)?,
            SampleCloud::new(reference, d)?,
            SampleCloud::new(baseline, d)?,
        ))
    })();
    let (x, r, b) = match clouds {
        Ok(c) => c,
        Err(e) => {
            row.record("ot", e);
            return;
        }
    };
    if n <= MAX_ASSIGNMENT_SIZE {
        match w2_exact_assignment(&x, &r) {
            Ok(v) => row.empirical_w2 = Some(v),
            Err(e) => row.record("ot", e),
        }
        match w2_exact_assignment(&b, &r) {
            Ok(v) => row.empirical_w2_baseline = Some(v),
            Err(e) => row.record("ot", e),
        }
    }
    match w2_sliced(&x, &r, 64, seed) {
        Ok(v) => row.sliced_w2 = Some(v),
        Err(e) => row.record("ot", e),
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub rows: Vec<ExperimentRow>,
    /// Metadata comment, header and rows.
    pub csv: String,
    pub svg: Option<String>,
    /// Derived one-line findings such as fitted slopes.
    pub summary: Vec<String>,
}

/// Runs every grid point (in parallel) and assembles the outputs in spec order.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    spec.validate()?;
    let grid = spec.grid();
    let rows: Vec<ExperimentRow> = with_thread_cap(|| {
        grid.par_iter()
            .enumerate()
            .map(|(i, p)| run_point(spec, p, i))
            .collect()
    });

    let mut body = Vec::new();
    {
        let mut wr = csv::Writer::from_writer(&mut body);
        wr.write_record(COLUMNS)?;
        for r in &rows {
            wr.write_record(r.cells())?;
        }
        wr.flush()?;
    }
    let mut csv_bytes = Vec::new();
    write_with_metadata(&mut csv_bytes, spec.seed, &spec.hash(), &body)?;
    let csv = String::from_utf8(csv_bytes).map_err(|e| Error::Numerical(e.to_string()))?;

    let mut summary = Vec::new();
    let mut svg = None;
    if let Some(plot) = &spec.plot {
        let families: Vec<String> = spec.families.iter().map(FamilySpec::label).collect();
        let mut series = Vec::new();
        for y in &plot.y {
            for fam in &families {
                let pts: Vec<(f64, f64)> = rows
                    .iter()
                    .filter(|r| &r.family == fam)
                    .filter_map(|r| Some((r.get(&plot.x)?, r.get(y)?)))
                    .collect();
                let name = if families.len() > 1 { format!("{y} [{fam}]") } else { y.clone() };
                series.push(Series { name, points: pts });
            }
        }
        for col in &spec.slope_of {
            for fam in &families {
                let (xs, ys): (Vec<f64>, Vec<f64>) = rows
                    .iter()
                    .filter(|r| &r.family == fam)
                    .filter_map(|r| Some((r.get(&plot.x)?, r.get(col)?)))
                    .unzip();
                if let Some(s) = log_log_slope(&xs, &ys) {
                    summary.push(format!("slope of log {col} vs log {} [{fam}] = {s:.4}", plot.x));
                }
            }
        }
        svg = Some(
            LinePlot {
                title: format!("{} {}", spec.id, spec.description),
                x_label: plot.x.clone(),
                y_label: plot.y.join(", "),
                log_x: plot.log_x,
                log_y: plot.log_y,
                series,
            }
            .render(),
        );
    }
    Ok(ExperimentOutput { rows, csv, svg, summary })
}

fn exact_bounds() -> Outputs {
    Outputs {
        exact: true,
        bounds: true,
        ..Outputs::default()
    }
}

fn plot(x: &str, y: &[&str], log_x: bool, log_y: bool) -> Option<PlotSpec> {
    Some(PlotSpec {
        x: x.into(),
        y: y.iter().map(|s| s.to_string()).collect(),
        log_x,
        log_y,
    })
}

/// The pre-registered experiments E1-E6.
pub fn preset(id: &str) -> Result<ExperimentSpec> {
    let base = ExperimentSpec {
        id: id.to_string(),
        description: String::new(),
        families: vec![FamilySpec::Harmonic],
        n_list: vec![256],
        d_list: vec![1],
        sigma2_list: vec![4.0],
        mu_offsets: vec![0.0],
        eps_list: vec![0.0],
        eps_shape: EpsShape::Constant,
        target: TargetSpec::Gaussian,
        n_chains: 0,
        seed: 7,
        outputs: exact_bounds(),
        plot: None,
        slope_of: Vec::new(),
    };
    let spec = match id.to_ascii_uppercase().as_str() {
        "E1" => ExperimentSpec {
            description: "dimension scaling".into(),
            d_list: vec![1, 2, 4, 8, 16, 32, 64, 128, 256],
            plot: plot("d", &["exact_w2", "lower_bound", "bound_two_sided_lipschitz"], true, true),
            slope_of: vec!["exact_w2".into()],
            ..base
        },
        "E2" => ExperimentSpec {
            description: "step scaling".into(),
            n_list: (4..=12).map(|k| 1usize << k).collect(),
            plot: plot("max_step", &["exact_w2", "lower_bound", "bound_semi_log_convex"], true, true),
            slope_of: vec!["exact_w2".into(), "lower_bound".into()],
            ..base
        },
        "E3" => ExperimentSpec {
            description: "initialization sweep".into(),
            n_list: vec![64],
            d_list: vec![4],
            sigma2_list: vec![1.0],
            mu_offsets: vec![0.0, 0.5, 1.0, 2.0, 5.0, 10.0],
            plot: plot("mu_offset", &["exact_w2", "bound_two_sided_lipschitz"], false, false),
            ..base
        },
        "E4" => ExperimentSpec {
            description: "score error sweep".into(),
            d_list: vec![4],
            sigma2_list: vec![2.0],
            eps_list: vec![0.0, 0.01, 0.02, 0.05, 0.1, 0.2],
            eps_shape: EpsShape::InvSqrtOneMinus,
            plot: plot("eps", &["exact_w2", "bound_two_sided_lipschitz"], false, false),
            ..base
        },
        "E5" => ExperimentSpec {
            description: "schedule comparison".into(),
            families: vec![
                FamilySpec::Constant { beta0: 0.02, delta: 0.0 },
                FamilySpec::Geometric {
                    c0: 2.0,
                    c1: 2.0,
                    delta: 1e-3,
                },
                FamilySpec::Cosine { s: Some(0.008) },
                FamilySpec::Harmonic,
            ],
            n_list: vec![64, 256, 1024],
            d_list: vec![4],
            plot: plot("n_steps", &["exact_w2"], true, true),
            ..base
        },
        "E6" => ExperimentSpec {
            description: "mixture sanity".into(),
            families: vec![FamilySpec::Cosine { s: Some(0.008) }],
            n_list: vec![16, 64, 256],
            d_list: vec![2],
            sigma2_list: vec![0.5],
            target: TargetSpec::Mixture { separation: 3.0 },
            n_chains: 1000,
            outputs: Outputs {
                monte_carlo: true,
                empirical_ot: true,
                ..Outputs::default()
            },
            plot: plot("n_steps", &["empirical_w2", "empirical_w2_baseline", "sliced_w2"], true, false),
            ..base
        },
        other => {
            return Err(Error::validation(format!(
                "unknown experiment '{other}', expected E1..E6"
            )))
        }
    };
    Ok(spec)
}
