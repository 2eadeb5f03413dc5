//! Variance schedules, the time grids they induce, and the step-size audit.
//!
//! Indexing runs from noise to data: `times[0] = t_0` is the smallest time and
//! `times[N] = 1 - delta`. The two descriptions are tied together by
//! `beta_i = 1 - t_i / t_{i+1}`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Componentwise tolerance for `beta_i = 1 - t_i / t_{i+1}`.
pub const CONSISTENCY_TOL: f64 = 1e-12;

/// Relative slack used when checking inequalities that hold with equality
/// at boundary cases (for example `beta_0 = 3/4` when `t_0 = t_1 / 4`).
pub const COMPARE_SLACK: f64 = 1e-12;

/// `a <= b` up to [`COMPARE_SLACK`] relative to the larger magnitude.
pub fn approx_le(a: f64, b: f64) -> bool {
    a <= b + COMPARE_SLACK * a.abs().max(b.abs())
}

/// Builder parameters recorded alongside a schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScheduleFamily {
    Constant { beta0: f64 },
    Geometric { c0: f64, c1: f64 },
    Cosine { s: f64 },
    Harmonic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScheduleRepr", into = "ScheduleRepr")]
pub struct VarianceSchedule {
    betas: Vec<f64>,
    times: Vec<f64>,
    delta: f64,
    family: Option<ScheduleFamily>,
}

#[derive(Serialize, Deserialize)]
struct ScheduleRepr {
    betas: Vec<f64>,
    times: Vec<f64>,
    delta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    family: Option<ScheduleFamily>,
}

impl TryFrom<ScheduleRepr> for VarianceSchedule {
    type Error = Error;

    fn try_from(r: ScheduleRepr) -> Result<Self> {
        let s = VarianceSchedule {
            betas: r.betas,
            times: r.times,
            delta: r.delta,
            family: r.family,
        };
        s.validate()?;
        Ok(s)
    }
}

impl From<VarianceSchedule> for ScheduleRepr {
    fn from(s: VarianceSchedule) -> Self {
        ScheduleRepr {
            betas: s.betas,
            times: s.times,
            delta: s.delta,
            family: s.family,
        }
    }
}

fn check_beta(i: usize, b: f64) -> Result<()> {
    if !b.is_finite() || b <= 0.0 || b >= 1.0 {
        return Err(Error::validation(format!(
            "beta[{i}] = {b} is outside (0, 1)"
        )));
    }
    Ok(())
}

fn check_delta(delta: f64) -> Result<()> {
    if !delta.is_finite() || !(0.0..1.0).contains(&delta) {
        return Err(Error::validation(format!(
            "delta = {delta} is outside [0, 1)"
        )));
    }
    Ok(())
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.len() < 2 {
        return Err(Error::validation(
            "a schedule needs at least one step (two time points)",
        ));
    }
    for (i, &t) in times.iter().enumerate() {
        if !t.is_finite() || t <= 0.0 || t > 1.0 {
            return Err(Error::validation(format!(
                "invariant violated: times in (0, 1] (t[{i}] = {t})"
            )));
        }
    }
    for (i, w) in times.windows(2).enumerate() {
        if w[0] >= w[1] {
            return Err(Error::validation(format!(
                "invariant violated: times strictly increasing (t[{i}] = {} >= t[{}] = {})",
                w[0],
                i + 1,
                w[1]
            )));
        }
    }
    Ok(())
}

impl VarianceSchedule {
    /// Times from `t_i = (1 - delta) * prod_{j >= i} (1 - beta_j)`, accumulated
    /// in the log domain.
    pub fn from_betas(betas: &[f64], delta: f64) -> Result<Self> {
        Self::from_betas_with_family(betas.to_vec(), delta, None)
    }

    fn from_betas_with_family(
        betas: Vec<f64>,
        delta: f64,
        family: Option<ScheduleFamily>,
    ) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::validation("empty beta sequence"));
        }
        for (i, &b) in betas.iter().enumerate() {
            check_beta(i, b)?;
        }
        check_delta(delta)?;
        let n = betas.len();
        let mut times = vec![0.0; n + 1];
        times[n] = 1.0 - delta;
        let mut log_t = (-delta).ln_1p();
        for i in (0..n).rev() {
            log_t += (-betas[i]).ln_1p();
            times[i] = log_t.exp();
        }
        if !times[0].is_normal() {
            return Err(Error::validation(format!(
                "t_0 = exp({log_t}) underflows double precision"
            )));
        }
        check_times(&times)?;
        let s = VarianceSchedule {
            betas,
            times,
            delta,
            family,
        };
        s.check_consistency()?;
        Ok(s)
    }

    /// Betas from `beta_i = 1 - t_i / t_{i+1}` and `delta = 1 - t_N`.
    pub fn from_times(times: &[f64]) -> Result<Self> {
        Self::from_times_with_family(times.to_vec(), None)
    }

    fn from_times_with_family(times: Vec<f64>, family: Option<ScheduleFamily>) -> Result<Self> {
        check_times(&times)?;
        let betas: Vec<f64> = times.windows(2).map(|w| 1.0 - w[0] / w[1]).collect();
        for (i, &b) in betas.iter().enumerate() {
            check_beta(i, b)?;
        }
        let delta = 1.0 - times[times.len() - 1];
        Ok(VarianceSchedule {
            betas,
            times,
            delta,
            family,
        })
    }

    /// Constant schedule: every `beta_i = beta0`.
    pub fn constant(n: usize, beta0: f64, delta: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::validation("n_steps must be at least 1"));
        }
        check_beta(0, beta0)?;
        Self::from_betas_with_family(
            vec![beta0; n],
            delta,
            Some(ScheduleFamily::Constant { beta0 }),
        )
    }

    /// Geometric schedule: `beta_0 = N^{-c0}` and for `i >= 1`
    /// `beta_i = r * min(beta_0 (1 + r)^{N - i}, 1)` with `r = c1 log N / N`.
    /// `t_0` follows from the product formula.
    pub fn geometric(n: usize, c0: f64, c1: f64, delta: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::validation("n_steps must be at least 1"));
        }
        if !(c0 > 0.0 && c1 > 0.0 && c0.is_finite() && c1.is_finite()) {
            return Err(Error::validation(format!(
                "geometric schedule needs c0, c1 > 0 (got c0 = {c0}, c1 = {c1})"
            )));
        }
        let nf = n as f64;
        let beta0 = nf.powf(-c0);
        let r = c1 * nf.ln() / nf;
        let log_beta0 = -c0 * nf.ln();
        let log_growth = r.ln_1p();
        let mut betas = Vec::with_capacity(n);
        betas.push(beta0);
        for i in 1..n {
            let log_inner = log_beta0 + (n - i) as f64 * log_growth;
            let inner = if log_inner >= 0.0 { 1.0 } else { log_inner.exp() };
            betas.push(r * inner);
        }
        for (i, &b) in betas.iter().enumerate() {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::validation(format!(
                    "geometric schedule (N = {n}, c0 = {c0}, c1 = {c1}) gives beta[{i}] = {b}, outside (0, 1)"
                )));
            }
        }
        Self::from_betas_with_family(betas, delta, Some(ScheduleFamily::Geometric { c0, c1 }))
    }

    /// Cosine schedule `t_i = sin^2(i eta_N)`, `eta_N = pi / (2 N (1 + s))`,
    /// for `i = 1..=N`. `t_0` defaults to `t_1 / 4`.
    pub fn cosine(n: usize, s: f64, t0: Option<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::validation("n_steps must be at least 1"));
        }
        if !(s >= 0.0 && s.is_finite()) {
            return Err(Error::validation(format!("cosine offset s = {s} must be >= 0")));
        }
        let eta = cosine_eta(n, s);
        let mut times = vec![0.0; n + 1];
        for (i, t) in times.iter_mut().enumerate().skip(1) {
            *t = (i as f64 * eta).sin().powi(2);
        }
        if s == 0.0 {
            // N * eta_N = pi / 2 exactly.
            times[n] = 1.0;
        }
        let t1 = times[1];
        let t0 = t0.unwrap_or(t1 / 4.0);
        if !(t0 > 0.0 && t0 < t1) {
            return Err(Error::validation(format!(
                "cosine t0 = {t0} must lie in (0, t_1 = {t1})"
            )));
        }
        times[0] = t0;
        Self::from_times_with_family(times, Some(ScheduleFamily::Cosine { s }))
    }

    /// Harmonic schedule `t_i = (i + 1) / (N + 1)`, `beta_i = 1 / (i + 2)`.
    pub fn harmonic(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::validation("n_steps must be at least 1"));
        }
        let denom = (n + 1) as f64;
        let times: Vec<f64> = (0..=n).map(|i| (i + 1) as f64 / denom).collect();
        let betas: Vec<f64> = (0..n).map(|i| 1.0 / (i + 2) as f64).collect();
        let s = VarianceSchedule {
            betas,
            times,
            delta: 0.0,
            family: Some(ScheduleFamily::Harmonic),
        };
        s.check_consistency()?;
        Ok(s)
    }

    /// Re-checks every invariant. Deserialized schedules pass through here.
    pub fn validate(&self) -> Result<()> {
        if self.betas.is_empty() {
            return Err(Error::validation("empty beta sequence"));
        }
        if self.times.len() != self.betas.len() + 1 {
            return Err(Error::validation(format!(
                "invariant violated: len(times) = len(betas) + 1 (got {} and {})",
                self.times.len(),
                self.betas.len()
            )));
        }
        for (i, &b) in self.betas.iter().enumerate() {
            check_beta(i, b)?;
        }
        check_delta(self.delta)?;
        check_times(&self.times)?;
        let t_n = self.t_n();
        if (t_n - (1.0 - self.delta)).abs() > 4.0 * f64::EPSILON {
            return Err(Error::validation(format!(
                "invariant violated: t_N = 1 - delta (t_N = {t_n}, delta = {})",
                self.delta
            )));
        }
        self.check_consistency()
    }

    fn check_consistency(&self) -> Result<()> {
        for (i, (w, &b)) in self.times.windows(2).zip(&self.betas).enumerate() {
            let implied = 1.0 - w[0] / w[1];
            if (implied - b).abs() > CONSISTENCY_TOL {
                return Err(Error::validation(format!(
                    "invariant violated: beta_i = 1 - t_i/t_(i+1) at i = {i} (beta = {b}, implied = {implied})"
                )));
            }
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        self.betas.len()
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn family(&self) -> Option<&ScheduleFamily> {
        self.family.as_ref()
    }

    pub fn t0(&self) -> f64 {
        self.times[0]
    }

    pub fn t_n(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    /// Step `h_i = t_{i+1} - t_i`.
    pub fn step(&self, i: usize) -> f64 {
        self.times[i + 1] - self.times[i]
    }

    pub fn steps(&self) -> impl Iterator<Item = f64> + '_ {
        self.times.windows(2).map(|w| w[1] - w[0])
    }

    pub fn max_beta(&self) -> f64 {
        self.betas.iter().copied().fold(f64::MIN, f64::max)
    }

    pub fn min_beta(&self) -> f64 {
        self.betas.iter().copied().fold(f64::MAX, f64::min)
    }

    /// Largest step `max_i h_i`.
    pub fn max_step(&self) -> f64 {
        self.steps().fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let sched: VarianceSchedule = serde_json::from_str(s).map_err(|e| {
            if e.is_data() {
                // try_from failures surface as data errors carrying our message
                Error::validation(e.to_string())
            } else {
                Error::Json(e)
            }
        })?;
        Ok(sched)
    }
}

/// `eta_N = pi / (2 N (1 + s))`.
pub fn cosine_eta(n: usize, s: f64) -> f64 {
    PI / (2.0 * n as f64 * (1.0 + s))
}

/// Outcome of computing the smallest admissible step-size constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Feasibility {
    Feasible { eta: f64 },
    Infeasible { reason: String },
}

impl Feasibility {
    pub fn eta(&self) -> Option<f64> {
        match self {
            Feasibility::Feasible { eta } => Some(*eta),
            Feasibility::Infeasible { .. } => None,
        }
    }

    pub fn is_feasible(&self) -> bool {
        matches!(self, Feasibility::Feasible { .. })
    }
}

/// Cosine-schedule step-size assertions. `a` and `c` are implications and
/// hold vacuously when their premise fails.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CosineFlags {
    pub eta_n: f64,
    /// `t_1 <= 4 t_0`
    pub a_premise: bool,
    /// premise implies `t_0 >= eta_N^2 / 16` and `max beta <= 3/4`
    pub a: bool,
    /// `h_i <= 2 eta_N sqrt(t_{i+1})` for all i
    pub b: bool,
    /// `s >= 1 / (2N)`
    pub c_premise: bool,
    /// premise implies `h_i <= 4 eta_N sqrt(1 - t_{i+1})` for all i
    pub c: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub n_steps: usize,
    pub t0: f64,
    pub t_n: f64,
    pub delta: f64,
    pub max_beta: f64,
    pub min_beta: f64,
    /// `max beta_i <= 3/4`
    pub beta_ok: bool,
    /// `t_0 <= 1/2` and `delta <= 1/2`
    pub t0_delta_ok: bool,
    /// `max_i h_i`, the step constant of the two-sided Lipschitz bound.
    pub max_step: f64,
    /// smallest eta with `h_i <= eta sqrt(1 - t_{i+1})`
    pub eta_tail: Feasibility,
    /// smallest eta < 1 with `h_i <= eta min(t_i, 1 - t_{i+1})`
    pub eta_relative: Feasibility,
    /// smallest eta with `h_i <= eta min(sqrt(t_{i+1}), sqrt(1 - t_{i+1}))`
    /// that also satisfies `t_0 >= eta^2 / 256`
    pub eta_balanced: Feasibility,
    /// `(128 + log(1/t_i)) - sum_{j >= i} h_j / t_j`
    pub stepsum_margins: Vec<f64>,
    pub cosine: Option<CosineFlags>,
}

impl ConditionReport {
    pub fn min_stepsum_margin(&self) -> f64 {
        self.stepsum_margins.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// True when any reported condition fails.
    pub fn any_infeasible(&self) -> bool {
        !self.beta_ok
            || !self.eta_tail.is_feasible()
            || !self.eta_relative.is_feasible()
            || !self.eta_balanced.is_feasible()
    }

    /// One row per condition: `(condition, holds, value, detail)`.
    pub fn rows(&self) -> Vec<ConditionRow> {
        let mut rows = vec![
            ConditionRow::new("max_beta_le_3_4", self.beta_ok, Some(self.max_beta), ""),
            ConditionRow::new(
                "t0_delta_le_1_2",
                self.t0_delta_ok,
                Some(self.t0.max(self.delta)),
                "",
            ),
            ConditionRow::new("eta_max_step", true, Some(self.max_step), ""),
            ConditionRow::from_feasibility("eta_tail", &self.eta_tail),
            ConditionRow::from_feasibility("eta_relative", &self.eta_relative),
            ConditionRow::from_feasibility("eta_balanced", &self.eta_balanced),
        ];
        let m = self.min_stepsum_margin();
        rows.push(ConditionRow::new("stepsum_min_margin", m >= 0.0, Some(m), ""));
        if let Some(c) = &self.cosine {
            rows.push(ConditionRow::new(
                "cosine_a",
                c.a,
                None,
                if c.a_premise { "premise holds" } else { "premise fails" },
            ));
            rows.push(ConditionRow::new("cosine_b", c.b, None, ""));
            rows.push(ConditionRow::new(
                "cosine_c",
                c.c,
                None,
                if c.c_premise { "premise holds" } else { "premise fails" },
            ));
        }
        rows
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionRow {
    pub condition: String,
    pub holds: bool,
    pub value: Option<f64>,
    pub detail: String,
}

impl ConditionRow {
    fn new(condition: &str, holds: bool, value: Option<f64>, detail: &str) -> Self {
        ConditionRow {
            condition: condition.to_string(),
            holds,
            value,
            detail: detail.to_string(),
        }
    }

    fn from_feasibility(condition: &str, f: &Feasibility) -> Self {
        match f {
            Feasibility::Feasible { eta } => Self::new(condition, true, Some(*eta), ""),
            Feasibility::Infeasible { reason } => Self::new(condition, false, None, reason),
        }
    }
}

/// Max over i of `h_i / denom_i`, or infeasible when some `denom_i` is zero.
fn max_ratio(
    s: &VarianceSchedule,
    denom: impl Fn(usize) -> f64,
    what: &str,
) -> std::result::Result<f64, String> {
    let mut eta: f64 = 0.0;
    for i in 0..s.n_steps() {
        let d = denom(i);
        if !(d > 0.0) {
            return Err(format!("{what} vanishes at i = {i}"));
        }
        eta = eta.max(s.step(i) / d);
    }
    Ok(eta)
}

/// Audits a schedule against every step-size condition. Always completes.
pub fn audit_schedule(s: &VarianceSchedule) -> ConditionReport {
    let t = s.times();
    let n = s.n_steps();
    let max_beta = s.max_beta();

    let eta_tail = match max_ratio(s, |i| (1.0 - t[i + 1]).sqrt(), "sqrt(1 - t_(i+1))") {
        Ok(eta) => Feasibility::Feasible { eta },
        Err(reason) => Feasibility::Infeasible { reason },
    };

    let eta_relative = match max_ratio(s, |i| t[i].min(1.0 - t[i + 1]), "min(t_i, 1 - t_(i+1))") {
        Ok(eta) if eta < 1.0 => Feasibility::Feasible { eta },
        Ok(eta) => Feasibility::Infeasible {
            reason: format!("smallest admissible eta = {eta} is not < 1"),
        },
        Err(reason) => Feasibility::Infeasible { reason },
    };

    let eta_balanced = match max_ratio(
        s,
        |i| t[i + 1].sqrt().min((1.0 - t[i + 1]).sqrt()),
        "min(sqrt(t_(i+1)), sqrt(1 - t_(i+1)))",
    ) {
        Ok(eta) if approx_le(eta * eta / 256.0, t[0]) => Feasibility::Feasible { eta },
        Ok(eta) => Feasibility::Infeasible {
            reason: format!("t_0 = {} < eta^2 / 256 = {}", t[0], eta * eta / 256.0),
        },
        Err(reason) => Feasibility::Infeasible { reason },
    };

    let mut stepsum_margins = vec![0.0; n];
    let mut tail = 0.0;
    for i in (0..n).rev() {
        tail += s.step(i) / t[i];
        stepsum_margins[i] = 128.0 + (1.0 / t[i]).ln() - tail;
    }

    let cosine = match s.family() {
        Some(ScheduleFamily::Cosine { s: offset }) => Some(cosine_flags(s, *offset)),
        _ => None,
    };

    ConditionReport {
        n_steps: n,
        t0: s.t0(),
        t_n: s.t_n(),
        delta: s.delta(),
        max_beta,
        min_beta: s.min_beta(),
        beta_ok: approx_le(max_beta, 0.75),
        t0_delta_ok: s.t0() <= 0.5 && s.delta() <= 0.5,
        max_step: s.max_step(),
        eta_tail,
        eta_relative,
        eta_balanced,
        stepsum_margins,
        cosine,
    }
}

fn cosine_flags(s: &VarianceSchedule, offset: f64) -> CosineFlags {
    let n = s.n_steps();
    let t = s.times();
    let eta_n = cosine_eta(n, offset);

    let a_premise = approx_le(t[1], 4.0 * t[0]);
    let a_conclusion =
        approx_le(eta_n * eta_n / 16.0, t[0]) && approx_le(s.max_beta(), 0.75);
    let b = (0..n).all(|i| approx_le(s.step(i), 2.0 * eta_n * t[i + 1].sqrt()));
    let c_premise = offset >= 1.0 / (2.0 * n as f64);
    let c_conclusion =
        (0..n).all(|i| approx_le(s.step(i), 4.0 * eta_n * (1.0 - t[i + 1]).sqrt()));

    CosineFlags {
        eta_n,
        a_premise,
        a: !a_premise || a_conclusion,
        b,
        c_premise,
        c: !c_premise || c_conclusion,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn assert_slice_close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn from_betas_direct_products() {
        let s = VarianceSchedule::from_betas(&[0.5, 0.5], 0.0).unwrap();
        assert_slice_close(s.times(), &[0.25, 0.5, 1.0], 1e-15);
        let s = VarianceSchedule::from_betas(&[0.75], 0.0).unwrap();
        assert_slice_close(s.times(), &[0.25, 1.0], 1e-15);
    }

    #[test]
    fn from_betas_rejects_out_of_range() {
        for bad in [0.0, 1.0, -0.1, 1.5, f64::NAN, f64::INFINITY] {
            let err = VarianceSchedule::from_betas(&[0.3, bad], 0.0).unwrap_err();
            assert!(matches!(err, Error::Validation(_)), "{bad}: {err}");
        }
        assert!(VarianceSchedule::from_betas(&[0.3], 1.0).is_err());
        assert!(VarianceSchedule::from_betas(&[], 0.0).is_err());
    }

    #[test]
    fn from_times_examples() {
        let s = VarianceSchedule::from_times(&[0.25, 0.5, 1.0]).unwrap();
        assert_slice_close(s.betas(), &[0.5, 0.5], 1e-15);
        let s = VarianceSchedule::from_times(&[0.5, 1.0]).unwrap();
        assert_slice_close(s.betas(), &[0.5], 1e-15);
        assert_eq!(s.delta(), 0.0);
        let s = VarianceSchedule::from_times(&[0.1, 0.2, 0.4, 0.9]).unwrap();
        assert_slice_close(s.betas(), &[0.5, 0.5, 5.0 / 9.0], 1e-15);
        assert_relative_eq!(s.delta(), 0.1, epsilon = 1e-15);
    }

    #[test]
    fn from_times_rejects_non_monotone() {
        let err = VarianceSchedule::from_times(&[0.2, 0.1, 1.0]).unwrap_err();
        assert!(err.to_string().contains("strictly increasing"), "{err}");
        assert!(VarianceSchedule::from_times(&[0.0, 0.5]).is_err());
        assert!(VarianceSchedule::from_times(&[0.5, 1.2]).is_err());
        assert!(VarianceSchedule::from_times(&[0.5]).is_err());
    }

    #[test]
    fn constant_examples() {
        let s = VarianceSchedule::constant(2, 0.5, 0.0).unwrap();
        assert_slice_close(s.times(), &[0.25, 0.5, 1.0], 1e-15);
        let s = VarianceSchedule::constant(1, 0.9, 0.0).unwrap();
        assert_slice_close(s.times(), &[0.1, 1.0], 1e-15);
        assert!(s.betas().iter().all(|&b| b == 0.9));
        assert!(VarianceSchedule::constant(3, 1.0, 0.0).is_err());
    }

    #[test]
    fn geometric_beta0() {
        let s = VarianceSchedule::geometric(4, 2.0, 1.0, 0.0).unwrap();
        assert_eq!(s.betas()[0], 1.0 / 16.0);
    }

    #[test]
    fn geometric_rejects_unit_beta() {
        // N = 1 gives beta_0 = 1^{-c0} = 1.
        let err = VarianceSchedule::geometric(1, 2.0, 1.0, 0.0).unwrap_err();
        assert!(err.to_string().contains("beta[0]"), "{err}");
        // r = c1 log N / N >= 1 pushes the capped betas to >= 1.
        let err = VarianceSchedule::geometric(3, 0.5, 5.0, 0.0).unwrap_err();
        assert!(err.to_string().contains("beta["), "{err}");
    }

    #[test]
    fn cosine_small_example() {
        let s = VarianceSchedule::cosine(2, 0.0, Some(0.125)).unwrap();
        assert_slice_close(s.times(), &[0.125, 0.5, 1.0], 1e-15);
        assert_slice_close(s.betas(), &[0.75, 0.5], 1e-15);
        assert_eq!(s.delta(), 0.0);
        assert_relative_eq!(cosine_eta(2, 0.0), PI / 4.0);
    }

    #[test]
    fn cosine_default_t0_is_quarter_t1() {
        let s = VarianceSchedule::cosine(2, 0.0, None).unwrap();
        assert_eq!(s.t0(), s.times()[1] / 4.0);
        // 0.125 >= pi^2 / 256
        assert!(s.t0() >= cosine_eta(2, 0.0).powi(2) / 16.0);
        let flags = audit_schedule(&s).cosine.unwrap();
        assert!(flags.a_premise && flags.a);
    }

    #[test]
    fn cosine_rejects_bad_t0() {
        assert!(VarianceSchedule::cosine(4, 0.0, Some(0.0)).is_err());
        let t1 = (PI / 8.0).sin().powi(2);
        assert!(VarianceSchedule::cosine(4, 0.0, Some(t1)).is_err());
        assert!(VarianceSchedule::cosine(4, -0.1, None).is_err());
    }

    #[test]
    fn cosine_large_n_condition_c() {
        let n = 256;
        let s = VarianceSchedule::cosine(n, 1.0 / (2.0 * n as f64), None).unwrap();
        let eta = cosine_eta(n, 1.0 / (2.0 * n as f64));
        let t = s.times();
        for i in 0..n {
            assert!(approx_le(s.step(i), 4.0 * eta * (1.0 - t[i + 1]).sqrt()), "i = {i}");
        }
        let flags = audit_schedule(&s).cosine.unwrap();
        assert!(flags.c_premise && flags.c);
    }

    #[test]
    fn harmonic_examples() {
        let s = VarianceSchedule::harmonic(3).unwrap();
        assert_slice_close(s.times(), &[0.25, 0.5, 0.75, 1.0], 1e-15);
        assert_slice_close(s.betas(), &[0.5, 1.0 / 3.0, 0.25], 1e-15);
        for n in [1, 2, 7, 100, 1000] {
            let s = VarianceSchedule::harmonic(n).unwrap();
            assert_eq!(s.max_beta(), 0.5);
            for h in s.steps() {
                assert_relative_eq!(h, 1.0 / (n + 1) as f64, max_relative = 1e-12);
            }
        }
        assert!(VarianceSchedule::harmonic(0).is_err());
    }

    #[test]
    fn audit_harmonic_eta14_infeasible() {
        let r = audit_schedule(&VarianceSchedule::harmonic(3).unwrap());
        assert!(!r.eta_tail.is_feasible());
        assert!(!r.eta_relative.is_feasible());
        assert!(!r.eta_balanced.is_feasible());
        assert!(r.beta_ok);
        assert_eq!(r.max_step, 0.25);
    }

    #[test]
    fn audit_constant_max_beta() {
        let r = audit_schedule(&VarianceSchedule::constant(2, 0.5, 0.0).unwrap());
        assert_eq!(r.max_beta, 0.5);
        assert!(r.beta_ok);
    }

    #[test]
    fn audit_reports_exact_maxima() {
        let s = VarianceSchedule::from_times(&[0.1, 0.2, 0.4, 0.9]).unwrap();
        let r = audit_schedule(&s);
        let t = s.times();
        let e14 = (0..3)
            .map(|i| (t[i + 1] - t[i]) / (1.0 - t[i + 1]).sqrt())
            .fold(0.0, f64::max);
        assert_eq!(r.eta_tail.eta(), Some(e14));
        // h_2 / min(t_2, 1 - t_3) = 0.5 / 0.1 = 5 >= 1
        assert!(!r.eta_relative.is_feasible());
    }

    #[test]
    fn json_roundtrip_and_validation() {
        let s = VarianceSchedule::cosine(8, 0.008, None).unwrap();
        let json = s.to_json().unwrap();
        let back = VarianceSchedule::from_json(&json).unwrap();
        assert_eq!(s, back);

        let raw = r#"{"betas":[0.5,0.5],"times":[0.25,0.5,1.0],"delta":0.0}"#;
        let s = VarianceSchedule::from_json(raw).unwrap();
        assert_eq!(s.n_steps(), 2);

        let bad = r#"{"betas":[0.5,0.4],"times":[0.25,0.5,1.0],"delta":0.0}"#;
        let err = VarianceSchedule::from_json(bad).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
        assert!(err.to_string().contains("beta_i = 1 - t_i/t_(i+1)"), "{err}");

        let bad = r#"{"betas":[0.5,0.5],"times":[0.25,0.5,1.0],"delta":0.2}"#;
        assert!(VarianceSchedule::from_json(bad).is_err());
        assert!(VarianceSchedule::from_json("{not json").is_err());
    }
}
