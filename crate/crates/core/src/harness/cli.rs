//! Command-line front end. Exit codes: 0 ok, 1 failed acceptance criterion,
//! 2 validation, 3 hypothesis infeasibility, 4 numerical failure.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::bounds::{evaluate_row, write_rows_csv, BoundId, BoundInputs};
use crate::error::{Error, Result};
use crate::gaussian_exact::{exact_sampler_w2, kl_pipeline_gaussian, mean_gap, moment_recursion};
use crate::harness::acceptance::{verify_all, verify_schedule_fixture, Status};
use crate::harness::experiments::{preset, run_experiment, ExperimentSpec, FamilySpec};
use crate::harness::output::{json_hash, write_with_metadata};
use crate::profiles::ScoreErrorProfile;
use crate::sampler::{ddpm_run, PerturbationMode, SamplerConfig, ScoreModel};
use crate::schedules::{audit_schedule, VarianceSchedule};
use crate::targets::{GaussianMixture, SphericalGaussian, Target};

#[derive(Parser, Debug)]
#[command(name = "w2lab", version = crate::harness::output::VERSION, about = "DDPM sampling error laboratory")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build or audit a variance schedule.
    #[command(subcommand)]
    Schedule(ScheduleCmd),
    /// Run the sampler, or evaluate the closed-form Gaussian pipeline.
    Run(RunArgs),
    /// Evaluate bound right-hand sides from a JSON parameter file.
    Bounds(BoundsArgs),
    /// Run a pre-registered or custom grid experiment.
    Experiment(ExperimentArgs),
    /// Run the acceptance criteria.
    Verify(VerifyArgs),
}

#[derive(Subcommand, Debug)]
enum ScheduleCmd {
    /// Print a schedule as JSON.
    Build(BuildArgs),
    /// Print one CSV row per step-size condition.
    Audit {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Family {
    Constant,
    Geometric,
    Cosine,
    Harmonic,
}

#[derive(Args, Debug)]
struct BuildArgs {
    #[arg(long, value_enum)]
    family: Family,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0.05)]
    beta0: f64,
    #[arg(long, default_value_t = 2.0)]
    c0: f64,
    #[arg(long, default_value_t = 2.0)]
    c1: f64,
    #[arg(long, default_value_t = 0.0)]
    delta: f64,
    /// Cosine offset; defaults to 1/(2N).
    #[arg(long)]
    s: Option<f64>,
    /// Cosine t0; defaults to t1/4.
    #[arg(long)]
    t0: Option<f64>,
}

impl BuildArgs {
    fn build(&self) -> Result<VarianceSchedule> {
        match self.family {
            Family::Cosine => VarianceSchedule::cosine(self.n, self.s.unwrap_or(0.5 / self.n as f64), self.t0),
            Family::Constant => FamilySpec::Constant {
                beta0: self.beta0,
                delta: self.delta,
            }
            .build(self.n),
            Family::Geometric => FamilySpec::Geometric {
                c0: self.c0,
                c1: self.c1,
                delta: self.delta,
            }
            .build(self.n),
            Family::Harmonic => VarianceSchedule::harmonic(self.n),
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TargetKind {
    Gauss,
    Mixture,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EpsShapeArg {
    Constant,
    InvSqrtOneMinus,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long, value_enum, default_value_t = TargetKind::Gauss)]
    target: TargetKind,
    #[arg(long, default_value_t = 1.0)]
    sigma2: f64,
    #[arg(long, default_value_t = 1)]
    d: usize,
    /// Target mean (Gaussian) is `mu_offset * e_1`.
    #[arg(long, default_value_t = 0.0)]
    mu_offset: f64,
    /// Mixture components sit at `+-separation/2 * e_1`.
    #[arg(long, default_value_t = 3.0)]
    separation: f64,
    /// Initialization mean is `mu_hat_offset * e_1`.
    #[arg(long, default_value_t = 0.0)]
    mu_hat_offset: f64,
    #[arg(long, default_value_t = 1000)]
    chains: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Schedule JSON; defaults to the harmonic schedule with `--n` steps.
    #[arg(long)]
    schedule: Option<PathBuf>,
    #[arg(long, default_value_t = 64)]
    n: usize,
    /// Score error magnitude, applied along e_1.
    #[arg(long, default_value_t = 0.0)]
    eps: f64,
    #[arg(long, value_enum, default_value_t = EpsShapeArg::Constant)]
    eps_shape: EpsShapeArg,
    /// Sampler config JSON (mu_hat, n_chains, seed, score_model); overrides the flags above.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Closed-form Gaussian row only, no sampling.
    #[arg(long)]
    exact_only: bool,
    /// Sample CSV path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Moment summary CSV path; stderr when omitted.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false, id = "selection")]
struct BoundSelection {
    /// Bound id, e.g. two_sided_lipschitz.
    #[arg(long)]
    which: Option<BoundId>,
    /// Every main bound.
    #[arg(long)]
    all: bool,
}

#[derive(Args, Debug)]
struct BoundsArgs {
    #[command(flatten)]
    selection: BoundSelection,
    #[arg(long)]
    params: PathBuf,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    /// E1..E6
    #[arg(long, required_unless_present = "spec")]
    id: Option<String>,
    /// Custom experiment spec JSON.
    #[arg(long, conflicts_with = "id")]
    spec: Option<PathBuf>,
    /// Writes `<id>.csv` (and `<id>.svg`) here; CSV goes to stdout otherwise.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    svg: bool,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// Skip the long-running criteria.
    #[arg(long)]
    quick: bool,
    /// Re-validate a schedule JSON file instead of running the criteria.
    #[arg(long)]
    fixture: Option<PathBuf>,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::validation(format!("cannot read {}: {e}", path.display())))
}

fn sink(path: Option<&PathBuf>, fallback: &mut dyn Write, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) => fs::write(p, bytes)?,
        None => fallback.write_all(bytes)?,
    }
    Ok(())
}

fn csv_bytes(rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    {
        let mut wr = csv::Writer::from_writer(&mut buf);
        for r in rows {
            wr.write_record(r)?;
        }
        wr.flush()?;
    }
    Ok(buf)
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = if code == 0 {
                write!(out, "{}", e.render())
            } else {
                write!(err, "{}", e.render())
            };
            return code;
        }
    };
    match dispatch(cli.command, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    match cmd {
        Command::Schedule(ScheduleCmd::Build(a)) => {
            writeln!(out, "{}", a.build()?.to_json()?)?;
            Ok(0)
        }
        Command::Schedule(ScheduleCmd::Audit { input }) => schedule_audit(&input, out),
        Command::Run(a) => run_cmd(a, out, err),
        Command::Bounds(a) => bounds_cmd(a, out),
        Command::Experiment(a) => experiment_cmd(a, out),
        Command::Verify(a) => verify_cmd(a, out),
    }
}

fn schedule_audit(input: &Path, out: &mut dyn Write) -> Result<i32> {
    let text = read(input)?;
    let schedule = VarianceSchedule::from_json(&text)?;
    let report = audit_schedule(&schedule);
    let mut rows = vec![vec!["condition".into(), "holds".into(), "value".into(), "detail".into()]];
    for r in report.rows() {
        rows.push(vec![
            r.condition,
            r.holds.to_string(),
            r.value.map(|v| v.to_string()).unwrap_or_default(),
            r.detail,
        ]);
    }
    let mut buf = Vec::new();
    write_with_metadata(&mut buf, 0, &json_hash(&schedule), &csv_bytes(&rows)?)?;
    out.write_all(&buf)?;
    Ok(if report.any_infeasible() { 3 } else { 0 })
}

fn run_cmd(a: RunArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    if a.d == 0 {
        return Err(Error::validation("--d must be >= 1"));
    }
    let schedule = match &a.schedule {
        Some(p) => VarianceSchedule::from_json(&read(p)?)?,
        None => VarianceSchedule::harmonic(a.n)?,
    };
    let mut e1 = vec![0.0; a.d];
    e1[0] = 1.0;
    let scaled = |k: f64| e1.iter().map(|x| x * k).collect::<Vec<f64>>();
    let target = match a.target {
        TargetKind::Gauss => Target::Gaussian(SphericalGaussian::new(scaled(a.mu_offset), a.sigma2)?),
        TargetKind::Mixture => Target::Mixture(GaussianMixture::symmetric_pair(scaled(a.separation / 2.0), a.sigma2)?),
    };
    let config = match &a.config {
        Some(p) => serde_json::from_str::<SamplerConfig>(&read(p)?)?,
        None => {
            let profile = match (a.eps, a.eps_shape) {
                (e, _) if e == 0.0 => ScoreErrorProfile::Zero,
                (eps, EpsShapeArg::Constant) => ScoreErrorProfile::Constant { eps },
                (eps, EpsShapeArg::InvSqrtOneMinus) => ScoreErrorProfile::InvSqrtOneMinus { eps },
            };
            let model = crate::sampler::make_perturbed_score(
                &target,
                profile,
                PerturbationMode::ConstantVector { u: e1.clone() },
                schedule.times(),
            )?;
            SamplerConfig::new(scaled(a.mu_hat_offset), a.chains, a.seed).with_score_model(model)
        }
    };
    config.validate(&target)?;
    let hash = json_hash(&(&schedule, &target, &config));

    let exact = match &target {
        Target::Gaussian(g) => {
            let model: &ScoreModel = &config.score_model;
            let w = exact_sampler_w2(&schedule, g, &config.mu_hat, Some(model))?;
            let kl = kl_pipeline_gaussian(&schedule, g, &config.mu_hat, Some(model))?;
            let (m, v) = moment_recursion(&schedule, g, &config.mu_hat, Some(model))?.terminal_law();
            Some((w, kl, m, v, mean_gap(g, &config.mu_hat)))
        }
        Target::Mixture(_) => None,
    };

    if a.exact_only {
        let (w, kl, m, v, gap) = exact.ok_or_else(|| Error::validation("--exact-only needs a Gaussian target"))?;
        let rows = vec![
            [
                "n_steps", "d", "sigma2", "mu_gap", "t0", "delta", "exact_w2", "exact_w2_smoothed",
                "early_stopping_bound", "kl_smoothed", "terminal_mean_0", "terminal_var",
            ]
            .map(String::from)
            .to_vec(),
            vec![
                schedule.n_steps().to_string(),
                a.d.to_string(),
                target_variance(&target).to_string(),
                gap.to_string(),
                schedule.t0().to_string(),
                schedule.delta().to_string(),
                w.to_target.to_string(),
                w.to_smoothed.to_string(),
                w.early_stopping_bound.to_string(),
                kl.to_string(),
                m[0].to_string(),
                v.to_string(),
            ],
        ];
        let mut buf = Vec::new();
        write_with_metadata(&mut buf, config.seed, &hash, &csv_bytes(&rows)?)?;
        sink(a.out.as_ref(), out, &buf)?;
        return Ok(0);
    }

    let samples = ddpm_run(&schedule, &target, &config)?;
    let mut body = Vec::new();
    samples.write_csv(&mut body, "chain")?;
    let mut buf = Vec::new();
    write_with_metadata(&mut buf, config.seed, &hash, &body)?;
    sink(a.out.as_ref(), out, &buf)?;

    let mom = samples.moments();
    let mut rows = vec![["coord", "mean", "mean_se", "var", "var_se", "exact_mean", "exact_var"]
        .map(String::from)
        .to_vec()];
    for j in 0..a.d {
        let (em, ev) = match &exact {
            Some((_, _, m, v, _)) => (m[j].to_string(), v.to_string()),
            None => (String::new(), String::new()),
        };
        rows.push(vec![
            j.to_string(),
            mom.mean[j].to_string(),
            mom.mean_se[j].to_string(),
            mom.var[j].to_string(),
            mom.var_se[j].to_string(),
            em,
            ev,
        ]);
    }
    let mut sbuf = Vec::new();
    write_with_metadata(&mut sbuf, config.seed, &hash, &csv_bytes(&rows)?)?;
    sink(a.summary.as_ref(), err, &sbuf)?;
    Ok(0)
}

fn target_variance(t: &Target) -> f64 {
    match t {
        Target::Gaussian(g) => g.variance,
        Target::Mixture(m) => m.variances[0],
    }
}

fn bounds_cmd(a: BoundsArgs, out: &mut dyn Write) -> Result<i32> {
    let inp: BoundInputs = serde_json::from_str(&read(&a.params)?)?;
    inp.validate()?;
    let ids: Vec<BoundId> = match a.selection.which {
        Some(id) => vec![id],
        None => BoundId::MAIN.to_vec(),
    };
    let rows = ids
        .into_iter()
        .map(|id| evaluate_row(id, &inp))
        .collect::<Result<Vec<_>>>()?;
    let mut body = Vec::new();
    write_rows_csv(&mut body, &rows)?;
    let mut buf = Vec::new();
    write_with_metadata(&mut buf, 0, &inp.params_hash(), &body)?;
    out.write_all(&buf)?;
    Ok(if rows.iter().any(|r| r.is_violation()) { 3 } else { 0 })
}

fn experiment_cmd(a: ExperimentArgs, out: &mut dyn Write) -> Result<i32> {
    let spec: ExperimentSpec = match (&a.id, &a.spec) {
        (_, Some(p)) => serde_json::from_str(&read(p)?)?,
        (Some(id), None) => preset(id)?,
        (None, None) => return Err(Error::validation("either --id or --spec is required")),
    };
    let result = run_experiment(&spec)?;
    match &a.out_dir {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            fs::write(dir.join(format!("{}.csv", spec.id)), &result.csv)?;
            if a.svg {
                if let Some(svg) = &result.svg {
                    fs::write(dir.join(format!("{}.svg", spec.id)), svg)?;
                }
            }
        }
        None => out.write_all(result.csv.as_bytes())?,
    }
    for line in &result.summary {
        // summary lines go to stdout only when the CSV went to a file
        if a.out_dir.is_some() {
            writeln!(out, "{line}")?;
        }
    }
    let failed = result.rows.iter().filter(|r| !r.error.is_empty()).count();
    if failed > 0 && a.out_dir.is_some() {
        writeln!(out, "{failed} of {} rows recorded errors", result.rows.len())?;
    }
    Ok(0)
}

fn verify_cmd(a: VerifyArgs, out: &mut dyn Write) -> Result<i32> {
    if let Some(path) = &a.fixture {
        let r = verify_schedule_fixture(&read(path)?);
        writeln!(out, "{r}")?;
        return Ok(if r.status == Status::Fail { 2 } else { 0 });
    }
    let mut io_err = None;
    let results = verify_all(a.quick, |r| {
        if let Err(e) = writeln!(out, "{r}").and_then(|_| out.flush()) {
            io_err.get_or_insert(e);
        }
    });
    if let Some(e) = io_err {
        return Err(e.into());
    }
    let failed = results.iter().filter(|r| r.status == Status::Fail).count();
    let passed = results.iter().filter(|r| r.status == Status::Pass).count();
    writeln!(out, "{passed} passed, {failed} failed, {} skipped", results.len() - passed - failed)?;
    Ok(if failed > 0 { 1 } else { 0 })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(std::iter::once("w2lab").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn schedule_build_harmonic() {
        let (code, out, _) = call(&["schedule", "build", "--family", "harmonic", "--n", "3"]);
        assert_eq!(code, 0);
        let s = VarianceSchedule::from_json(&out).unwrap();
        assert_eq!(s.betas(), &[0.5, 1.0 / 3.0, 0.25]);
    }

    #[test]
    fn bad_arguments_exit_2() {
        assert_eq!(call(&["schedule", "build", "--family", "nope", "--n", "3"]).0, 2);
        assert_eq!(call(&["schedule", "build", "--family", "constant", "--n", "3", "--beta0", "1.5"]).0, 2);
        assert_eq!(call(&["bounds", "--params", "x.json"]).0, 2);
    }

    #[test]
    fn help_exits_0() {
        let (code, out, _) = call(&["--help"]);
        assert_eq!(code, 0);
        assert!(out.contains("schedule"));
    }

    #[test]
    fn exact_only_is_closed_form() {
        let (code, out, _) = call(&[
            "run", "--sigma2", "1", "--d", "2", "--mu-hat-offset", "3", "--n", "9", "--exact-only",
        ]);
        assert_eq!(code, 0);
        let row: Vec<&str> = out.lines().nth(2).unwrap().split(',').collect();
        let w: f64 = row[6].parse().unwrap();
        assert!((w - 0.3).abs() < 1e-12, "{out}");
    }
}
