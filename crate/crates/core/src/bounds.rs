//! Right-hand sides of the W2 (and one KL) error bounds for the sampler.
//!
//! Every evaluator re-audits the schedule, checks the hypotheses its bound
//! needs and refuses with [`Error::HypothesisViolation`] when one fails. Bounds
//! carrying an unnamed universal constant are evaluated with that constant set
//! to 1 and reported with `constant_known = false`.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::profiles::{IntegralMode, LipschitzProfile, ScoreErrorProfile};
use crate::schedules::{approx_le, audit_schedule, ConditionReport, Feasibility, VarianceSchedule};
use crate::targets::{
    gaussian_regularity, lambda_semi_log_convex, lambda_weakly_log_concave, RegularityProfile, SphericalGaussian,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundId {
    /// Two-sided Hessian envelope, no early stopping, `h_i <= eta`.
    TwoSidedLipschitz,
    /// One-sided envelope with early stopping, `h_i <= eta sqrt(1 - t_{i+1})`.
    OneSidedLipschitz,
    /// Lipschitz learned score with population score error.
    LearnedScoreLipschitz,
    /// Semi-log-convex and weakly log-concave target, no early stopping.
    SemiLogConvex,
    /// Weakly log-concave target with early stopping.
    WeaklyLogConcave,
    /// Log-concave target, initialization close to the mean.
    LogConcave,
    /// Log-concave target, arbitrary initialization.
    LogConcaveFarInit,
    /// KL to the smoothed target under a one-sided Hessian bound.
    KlOneSided,
    /// Cost of stopping at `1 - delta`.
    EarlyStopping,
}

impl BoundId {
    /// The eight headline bounds (early stopping enters them as a term).
    pub const MAIN: [BoundId; 8] = [
        BoundId::TwoSidedLipschitz,
        BoundId::OneSidedLipschitz,
        BoundId::LearnedScoreLipschitz,
        BoundId::SemiLogConvex,
        BoundId::WeaklyLogConcave,
        BoundId::LogConcave,
        BoundId::LogConcaveFarInit,
        BoundId::KlOneSided,
    ];

    pub const ALL: [BoundId; 9] = [
        BoundId::TwoSidedLipschitz,
        BoundId::OneSidedLipschitz,
        BoundId::LearnedScoreLipschitz,
        BoundId::SemiLogConvex,
        BoundId::WeaklyLogConcave,
        BoundId::LogConcave,
        BoundId::LogConcaveFarInit,
        BoundId::KlOneSided,
        BoundId::EarlyStopping,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BoundId::TwoSidedLipschitz => "two_sided_lipschitz",
            BoundId::OneSidedLipschitz => "one_sided_lipschitz",
            BoundId::LearnedScoreLipschitz => "learned_score_lipschitz",
            BoundId::SemiLogConvex => "semi_log_convex",
            BoundId::WeaklyLogConcave => "weakly_log_concave",
            BoundId::LogConcave => "log_concave",
            BoundId::LogConcaveFarInit => "log_concave_far_init",
            BoundId::KlOneSided => "kl_one_sided",
            BoundId::EarlyStopping => "early_stopping",
        }
    }
}

impl fmt::Display for BoundId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BoundId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BoundId::ALL
            .iter()
            .copied()
            .find(|b| b.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = BoundId::ALL.iter().map(|b| b.as_str()).collect();
                Error::validation(format!("unknown bound '{s}', expected one of {}", names.join(", ")))
            })
    }
}

/// Optional caller-supplied step constants. Each must be at least the value
/// the audit computes; larger values loosen the bound.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EtaOverrides {
    #[serde(default)]
    pub max_step: Option<f64>,
    #[serde(default)]
    pub eta_tail: Option<f64>,
    #[serde(default)]
    pub eta_relative: Option<f64>,
    #[serde(default)]
    pub eta_balanced: Option<f64>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub d: usize,
    pub schedule: VarianceSchedule,
    /// Two-sided Hessian envelope.
    pub lipschitz: LipschitzProfile,
    /// One-sided (upper) Hessian envelope; also the learned-score envelope.
    pub lipschitz_upper: LipschitzProfile,
    #[serde(default)]
    pub score_error: ScoreErrorProfile,
    /// `|mu - mu_hat|`
    pub mu_gap: f64,
    pub trace_sigma: f64,
    pub sigma_op: f64,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub m: Option<f64>,
    /// semi-log-convexity parameter
    #[serde(default)]
    pub beta_slc: Option<f64>,
    #[serde(default = "one")]
    pub l0: f64,
    #[serde(default)]
    pub log_concave: bool,
    #[serde(default)]
    pub eta: EtaOverrides,
    #[serde(default)]
    pub integral_mode: IntegralMode,
}

impl BoundInputs {
    pub fn from_regularity(
        schedule: VarianceSchedule,
        d: usize,
        reg: &RegularityProfile,
        mu_gap: f64,
        trace_sigma: f64,
        sigma_op: f64,
        log_concave: bool,
    ) -> Self {
        BoundInputs {
            d,
            schedule,
            lipschitz: reg.lipschitz.clone(),
            lipschitz_upper: reg.lipschitz_upper.clone(),
            score_error: reg.score_error.clone(),
            mu_gap,
            trace_sigma,
            sigma_op,
            alpha: Some(reg.alpha),
            m: Some(reg.m),
            beta_slc: Some(reg.beta_slc),
            l0: reg.l0,
            log_concave,
            eta: EtaOverrides::default(),
            integral_mode: IntegralMode::UpperSum,
        }
    }

    /// Inputs for `N(mu, sigma^2 I)` started from `mu_hat`.
    pub fn gaussian(
        schedule: VarianceSchedule,
        target: &SphericalGaussian,
        mu_hat: &[f64],
        score_error: ScoreErrorProfile,
    ) -> Self {
        let gap = mu_hat
            .iter()
            .zip(&target.mean)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let mut reg = gaussian_regularity(target);
        reg.score_error = score_error;
        BoundInputs::from_regularity(
            schedule,
            target.dim(),
            &reg,
            gap,
            target.trace_cov(),
            target.op_norm_cov(),
            true,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::validation("d must be >= 1"));
        }
        self.schedule.validate()?;
        self.lipschitz.validate()?;
        self.lipschitz_upper.validate()?;
        self.score_error.validate()?;
        self.score_error.check_nondecreasing(self.schedule.times())?;
        for (name, v) in [
            ("mu_gap", self.mu_gap),
            ("trace_sigma", self.trace_sigma),
            ("sigma_op", self.sigma_op),
            ("l0", self.l0),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::validation(format!("{name} = {v} must be finite and >= 0")));
            }
        }
        if let Some(a) = self.alpha {
            if !(a > 0.0 && a.is_finite()) {
                return Err(Error::validation(format!("alpha = {a} must be > 0")));
            }
        }
        if let Some(m) = self.m {
            if !(m >= 0.0 && m.is_finite()) {
                return Err(Error::validation(format!("M = {m} must be >= 0")));
            }
        }
        if let Some(b) = self.beta_slc {
            if !(b > 0.0 && b.is_finite()) {
                return Err(Error::validation(format!("beta = {b} must be > 0")));
            }
        }
        for (name, v) in [
            ("max_step", self.eta.max_step),
            ("eta_tail", self.eta.eta_tail),
            ("eta_relative", self.eta.eta_relative),
            ("eta_balanced", self.eta.eta_balanced),
        ] {
            if let Some(v) = v {
                if !(v.is_finite() && v > 0.0) {
                    return Err(Error::validation(format!("eta override {name} = {v} must be > 0")));
                }
            }
        }
        Ok(())
    }

    /// `1 v |Sigma|_op`
    pub fn big_lambda(&self) -> f64 {
        self.sigma_op.max(1.0)
    }

    /// Multiplies the score error profile by `k`.
    pub fn with_score_error_scaled(&self, k: f64) -> Self {
        BoundInputs {
            score_error: self.score_error.scaled(k),
            ..self.clone()
        }
    }

    /// Short stable hash of the serialized inputs.
    pub fn params_hash(&self) -> String {
        let json = serde_json::to_string(self).unwrap_or_default();
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundFlag {
    pub name: String,
    /// `None` when the condition involves a constant that is not specified.
    pub holds: Option<bool>,
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundValue {
    pub id: BoundId,
    pub value: f64,
    /// False when the bound has an unnamed universal constant, set to 1 here.
    pub constant_known: bool,
    /// Hypotheses checked, side conditions and quadrature accuracy.
    pub flags: Vec<BoundFlag>,
}

impl BoundValue {
    pub fn flags_string(&self) -> String {
        self.flags
            .iter()
            .map(|f| {
                let h = match f.holds {
                    Some(true) => "true",
                    Some(false) => "false",
                    None => "unknown",
                };
                match f.value {
                    Some(v) => format!("{}={}({})", f.name, h, v),
                    None => format!("{}={}", f.name, h),
                }
            })
            .collect::<Vec<_>>()
            .join(";")
    }
}

/// Collects hypothesis checks for one evaluation.
struct Checks {
    id: BoundId,
    flags: Vec<BoundFlag>,
}

impl Checks {
    fn new(id: BoundId) -> Self {
        Checks { id, flags: Vec::new() }
    }

    fn require(&mut self, name: &str, holds: bool, value: Option<f64>) -> Result<()> {
        self.flags.push(BoundFlag {
            name: name.to_string(),
            holds: Some(holds),
            value,
        });
        if holds {
            Ok(())
        } else {
            let detail = match value {
                Some(v) => format!("{name} fails (value {v})"),
                None => format!("{name} fails"),
            };
            Err(Error::hypothesis(self.id.as_str(), detail))
        }
    }

    fn record(&mut self, name: &str, holds: Option<bool>, value: Option<f64>) {
        self.flags.push(BoundFlag {
            name: name.to_string(),
            holds,
            value,
        });
    }

    fn max_beta(&mut self, audit: &ConditionReport) -> Result<()> {
        self.require("max_beta_le_3_4", audit.beta_ok, Some(audit.max_beta))
    }

    fn no_early_stopping(&mut self, s: &VarianceSchedule) -> Result<()> {
        self.require("delta_eq_0", s.delta() == 0.0, Some(s.delta()))
    }

    fn early_stopping(&mut self, s: &VarianceSchedule) -> Result<()> {
        self.require("delta_gt_0", s.delta() > 0.0, Some(s.delta()))
    }

    fn t0_delta(&mut self, audit: &ConditionReport) -> Result<()> {
        self.require("t0_delta_le_1_2", audit.t0_delta_ok, Some(audit.t0.max(audit.delta)))
    }

    fn eta(&mut self, name: &str, audited: &Feasibility, supplied: Option<f64>) -> Result<f64> {
        let a = match audited {
            Feasibility::Feasible { eta } => *eta,
            Feasibility::Infeasible { reason } => {
                self.record(name, Some(false), None);
                return Err(Error::hypothesis(self.id.as_str(), format!("{name} infeasible: {reason}")));
            }
        };
        let eta = match supplied {
            Some(e) if !approx_le(a, e) => {
                return Err(Error::validation(format!(
                    "{name} = {e} is below the audited value {a}"
                )))
            }
            Some(e) => e,
            None => a,
        };
        self.record(name, Some(true), Some(eta));
        Ok(eta)
    }

    fn quadrature(&mut self, name: &str, q: &crate::quad::Quadrature) {
        self.record(name, Some(q.converged), Some(q.rel_change));
    }

    fn finish(self, value: f64, constant_known: bool) -> Result<BoundValue> {
        if !(value.is_finite() && value >= 0.0) {
            return Err(Error::Numerical(format!("{} evaluated to {value}", self.id)));
        }
        Ok(BoundValue {
            id: self.id,
            value,
            constant_known,
            flags: self.flags,
        })
    }
}

fn log_inv_delta(id: BoundId, delta: f64) -> Result<f64> {
    if delta > 0.0 {
        Ok((1.0 / delta).ln())
    } else {
        Err(Error::hypothesis(id.as_str(), "log(1/delta) undefined at delta = 0"))
    }
}

/// `sqrt(delta^2 tr(Sigma) + d delta)`
pub fn early_stopping_value(trace_sigma: f64, d: usize, delta: f64) -> f64 {
    (delta * delta * trace_sigma + d as f64 * delta).sqrt()
}

fn eps_half(c: &mut Checks, inp: &BoundInputs) -> Result<f64> {
    let s = &inp.schedule;
    let q = inp.score_error.weighted_integral(0.5, s.t0(), s.t_n(), s.times())?;
    c.quadrature("quad_eps_over_sqrt_s", &q);
    Ok(q.value)
}

fn eps_three_halves(c: &mut Checks, inp: &BoundInputs) -> Result<f64> {
    let s = &inp.schedule;
    let q = inp.score_error.weighted_integral(1.5, s.t0(), s.t_n(), s.times())?;
    c.quadrature("quad_eps_over_s_3_2", &q);
    Ok(q.value)
}

struct LInts {
    /// `int_{t0}^{tN} L`
    l: f64,
    /// `int_{t0}^{tN} L^2`
    l2: f64,
    /// `int_0^{t0} L^2`
    l2_head: f64,
}

fn l_integrals(inp: &BoundInputs, l: &LipschitzProfile) -> Result<LInts> {
    let s = &inp.schedule;
    let (t0, tn) = (s.t0(), s.t_n());
    let mode = inp.integral_mode;
    Ok(LInts {
        l: l.integral(t0, tn, s.times(), mode)?,
        l2: l.integral_sq(t0, tn, s.times(), mode)?,
        l2_head: l.integral_sq(0.0, t0, &[0.0, t0], mode)?,
    })
}

/// Two-sided envelope bound, `delta = 0`.
pub fn two_sided_lipschitz(inp: &BoundInputs) -> Result<BoundValue> {
    inp.validate()?;
    let mut c = Checks::new(BoundId::TwoSidedLipschitz);
    let audit = audit_schedule(&inp.schedule);
    c.no_early_stopping(&inp.schedule)?;
    c.max_beta(&audit)?;
    let eta = c.eta("max_step", &Feasibility::Feasible { eta: audit.max_step }, inp.eta.max_step)?;
    let li = l_integrals(inp, &inp.lipschitz)?;
    let e = eps_half(&mut c, inp)?;
    let d = inp.d as f64;
    let t0 = inp.schedule.t0();
    let v = li.l.exp()
        * (t0 * (inp.mu_gap + (d * li.l2_head).sqrt()) + d.sqrt() * eta * li.l2.sqrt() + 2.0 * e);
    c.finish(v, true)
}

fn tail_eta_term(d: f64, log_inv_delta: f64, trace_sigma: f64) -> f64 {
    (d * log_inv_delta + trace_sigma.max(d)).sqrt()
}

/// One-sided envelope bound with early stopping.
pub fn one_sided_lipschitz(inp: &BoundInputs) -> Result<BoundValue> {
    inp.validate()?;
    let id = BoundId::OneSidedLipschitz;
    let mut c = Checks::new(id);
    let audit = audit_schedule(&inp.schedule);
    c.max_beta(&audit)?;
    c.t0_delta(&audit)?;
    c.early_stopping(&inp.schedule)?;
    let eta = c.eta("eta_tail", &audit.eta_tail, inp.eta.eta_tail)?;
    let lid = log_inv_delta(id, inp.schedule.delta())?;
    let li = l_integrals(inp, &inp.lipschitz_upper)?;
    let e = eps_half(&mut c, inp)?;
    let d = inp.d as f64;
    let t0 = inp.schedule.t0();
    let inner = t0 * inp.mu_gap
        + d.sqrt() * t0 * (2.0 * t0.sqrt()).max(li.l2_head.sqrt())
        + tail_eta_term(d, lid, inp.trace_sigma) * eta
        + 2.0 * e;
    let v = 2f64.sqrt() * li.l.exp() * inner + early_stopping_value(inp.trace_sigma, inp.d, inp.schedule.delta());
    c.finish(v, true)
}

/// Bound for a learned score that is itself Lipschitz with envelope
/// `lipschitz_upper`, under the population score error.
pub fn learned_score_lipschitz(inp: &BoundInputs) -> Result<BoundValue> {
    inp.validate()?;
    let id = BoundId::LearnedScoreLipschitz;
    let mut c = Checks::new(id);
    let audit = audit_schedule(&inp.schedule);
    c.max_beta(&audit)?;
    c.t0_delta(&audit)?;
    c.early_stopping(&inp.schedule)?;
    let eta = c.eta("eta_tail", &audit.eta_tail, inp.eta.eta_tail)?;
    let lid = log_inv_delta(id, inp.schedule.delta())?;
    let li = l_integrals(inp, &inp.lipschitz_upper)?;
    let e = eps_half(&mut c, inp)?;
    let d = inp.d as f64;
    let t0 = inp.schedule.t0();
    let inner = t0 * (inp.mu_gap + (inp.trace_sigma + d).sqrt()) + tail_eta_term(d, lid, inp.trace_sigma) * eta + 2.0 * e;
    let v = 2f64.sqrt() * li.l.exp() * inner + early_stopping_value(inp.trace_sigma, inp.d, inp.schedule.delta());
    c.finish(v, true)
}

fn need(id: BoundId, v: Option<f64>, name: &str) -> Result<f64> {
    v.ok_or_else(|| Error::hypothesis(id.as_str(), format!("{name} not supplied")))
}

/// Semi-log-convex, weakly log-concave target, `delta = 0`.
pub fn semi_log_convex(inp: &BoundInputs) -> Result<BoundValue> {
    inp.validate()?;
    let id = BoundId::SemiLogConvex;
    let mut c = Checks::new(id);
    let audit = audit_schedule(&inp.schedule);
    c.no_early_stopping(&inp.schedule)?;
    c.max_beta(&audit)?;
    let alpha = need(id, inp.alpha, "alpha")?;
    let m = need(id, inp.m, "M")?;
    let beta = need(id, inp.beta_slc, "semi-log-convexity beta")?;
    let lambda = lambda_semi_log_convex(alpha, m, beta);
    c.record("lambda", None, Some(lambda));
    let eta = c.eta("max_step", &Feasibility::Feasible { eta: audit.max_step }, inp.eta.max_step)?;
    let e = eps_half(&mut c, inp)?;
    let d = inp.d as f64;
    let t0 = inp.schedule.t0();
    let v = lambda.exp() * (t0 * (inp.mu_gap + lambda * (d * t0).sqrt()) + lambda * d.sqrt() * eta + 2.0 * e);
    c.finish(v, true)
}

/// Weakly log-concave target with early stopping.
pub fn weakly_log_concave(inp: &BoundInputs) -> Result<BoundValue> {
    inp.validate()?;
    let id = BoundId::WeaklyLogConcave;
    let mut c = Checks::new(id);
    let audit = audit_schedule(&inp.schedule);
    c.max_beta(&audit)?;
    let t0 = inp.schedule.t0();
    c.require("t0_le_1_2", approx_le(t0, 0.5), Some(t0))?;
    c.early_stopping(&inp.schedule)?;
    let eta = c.eta("eta_tail", &audit.eta_tail, inp.eta.eta_tail)?;
    let lid = log_inv_delta(id, inp.schedule.delta())?;
    let alpha = need(id, inp.alpha, "alpha")?;
    let m = need(id, inp.m, "M")?;
    let lambda = lambda_weakly_log_concave(alpha, m);
    c.record("lambda", None, Some(lambda));
    let e = eps_half(&mut c, inp)?;
    let d = inp.d as f64;
    let inner = t0 * inp.mu_gap
        + lambda.max(2.0) * d.sqrt() * t0.powf(1.5)
        + tail_eta_term(d, lid, inp.trace_sigma) * eta
        + 2.0 * e;
    let v = 2f64.sqrt() * lambda.exp() * inner + early_stopping_value(inp.trace_sigma, inp.d, inp.schedule.delta());
    c.finish(v, true)
}

fn log_concave_checks(c: &mut Checks, inp: &BoundInputs) -> Result<(f64, f64)> {
    c.require("log_concave", inp.log_concave, None)?;
    let audit = audit_schedule(&inp.schedule);
    c.max_beta(&audit)?;
    c.t0_delta(&audit)?;
    c.early_stopping(&inp.schedule)?;
    let eta = c.eta("eta_balanced", &audit.eta_balanced, inp.eta.eta_balanced)?;
    let lid = log_inv_delta(c.id, inp.schedule.delta())?;
    Ok((eta, lid))
}

/// Log-concave target; universal constant set to 1.
pub fn log_concave(inp: &BoundInputs) -> Result<BoundValue> {
    inp.validate()?;
    let mut c = Checks::new(BoundId::LogConcave);
    let (eta, lid) = log_concave_checks(&mut c, inp)?;
    let e3 = eps_three_halves(&mut c, inp)?;
    let d = inp.d as f64;
    let t0 = inp.schedule.t0();
    let lam = inp.big_lambda();
    let v = inp.mu_gap
        + lam * (d * t0).sqrt()
        + (lam * (d * (1.0 / t0).ln()).sqrt() + (d * lid).sqrt()) * eta
        + e3
        + early_stopping_value(inp.trace_sigma, inp.d, inp.schedule.delta());
    c.finish(v, false)
}

/// Log-concave target with arbitrary initialization; universal constant set
/// to 1. The smallness conditions are recorded as flags, not enforced.
pub fn log_concave_far_init(inp: &BoundInputs) -> Result<BoundValue> {
    inp.validate()?;
    let mut c = Checks::new(BoundId::LogConcaveFarInit);
    let (eta, lid) = log_concave_checks(&mut c, inp)?;
    let d = inp.d as f64;
    let t0 = inp.schedule.t0();
    let lam = inp.big_lambda();
    let log_inv_t0 = (1.0 / t0).ln();
    c.record("t0_le_inv_lambda_d2", Some(t0 <= 1.0 / (lam * d * d)), Some(t0 * lam * d * d));
    let step = (lam * d * log_inv_t0).sqrt() * eta;
    c.record("sqrt_lambda_d_log_eta_le_1", Some(step <= 1.0), Some(step));
    // the threshold constant is unspecified: report t0 * Lambda * log^4(d + 1)
    c.record("t0_lambda_log4", None, Some(t0 * lam * (d + 1.0).ln().powi(4)));
    let e3 = eps_three_halves(&mut c, inp)?;
    let gap = inp.mu_gap;
    let v = (lam * t0).sqrt() * gap
        + lam.powf(-0.25) * t0.powf(0.25) * gap * gap
        + lam.powf(1.5) * d.sqrt() * t0
        + (lam * (d * log_inv_t0).sqrt() + (d * lid).sqrt()) * eta
        + 4.0 * e3
        + early_stopping_value(inp.trace_sigma, inp.d, inp.schedule.delta());
    c.finish(v, false)
}

/// The KL bound split into its explicit part and the term multiplied by the
/// unnamed constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KlBoundParts {
    /// `t0/2 (|mu - mu_hat|^2 + tr Sigma) + 2 t0^2 d + 2 int eps^2 / s`
    pub explicit: f64,
    /// `L0^2 d eta^2 log(1 / (t0 delta))`
    pub constant_term: f64,
}

impl KlBoundParts {
    /// Smallest constant making `explicit + C constant_term >= kl`.
    pub fn smallest_constant(&self, kl: f64) -> f64 {
        let need = kl - self.explicit;
        if need <= 0.0 {
            0.0
        } else if self.constant_term > 0.0 {
            need / self.constant_term
        } else {
            f64::INFINITY
        }
    }
}

fn kl_parts(c: &mut Checks, inp: &BoundInputs) -> Result<KlBoundParts> {
    let id = c.id;
    let audit = audit_schedule(&inp.schedule);
    c.max_beta(&audit)?;
    c.t0_delta(&audit)?;
    c.early_stopping(&inp.schedule)?;
    c.require("l0_ge_1", inp.l0 >= 1.0, Some(inp.l0))?;
    let eta = c.eta("eta_relative", &audit.eta_relative, inp.eta.eta_relative)?;
    c.require("eta_relative_lt_1_6", eta < 1.0 / 6.0, Some(eta))?;
    let s = &inp.schedule;
    let (t0, delta) = (s.t0(), s.delta());
    let lid = log_inv_delta(id, t0 * delta)?;
    let q = inp.score_error.squared_over_s_integral(t0, s.t_n(), s.times())?;
    c.quadrature("quad_eps2_over_s", &q);
    let d = inp.d as f64;
    Ok(KlBoundParts {
        explicit: 0.5 * t0 * (inp.mu_gap * inp.mu_gap + inp.trace_sigma) + 2.0 * t0 * t0 * d + 2.0 * q.value,
        constant_term: inp.l0 * inp.l0 * d * eta * eta * lid,
    })
}

/// KL bound with the universal constant set to 1.
pub fn kl_one_sided(inp: &BoundInputs) -> Result<BoundValue> {
    inp.validate()?;
    let mut c = Checks::new(BoundId::KlOneSided);
    let p = kl_parts(&mut c, inp)?;
    c.finish(p.explicit + p.constant_term, false)
}

/// Both parts of the KL bound, for fitting the unnamed constant.
pub fn kl_bound_parts(inp: &BoundInputs) -> Result<KlBoundParts> {
    inp.validate()?;
    let mut c = Checks::new(BoundId::KlOneSided);
    kl_parts(&mut c, inp)
}

pub fn early_stopping(inp: &BoundInputs) -> Result<BoundValue> {
    inp.validate()?;
    Checks::new(BoundId::EarlyStopping).finish(
        early_stopping_value(inp.trace_sigma, inp.d, inp.schedule.delta()),
        true,
    )
}

pub fn evaluate(id: BoundId, inp: &BoundInputs) -> Result<BoundValue> {
    match id {
        BoundId::TwoSidedLipschitz => two_sided_lipschitz(inp),
        BoundId::OneSidedLipschitz => one_sided_lipschitz(inp),
        BoundId::LearnedScoreLipschitz => learned_score_lipschitz(inp),
        BoundId::SemiLogConvex => semi_log_convex(inp),
        BoundId::WeaklyLogConcave => weakly_log_concave(inp),
        BoundId::LogConcave => log_concave(inp),
        BoundId::LogConcaveFarInit => log_concave_far_init(inp),
        BoundId::KlOneSided => kl_one_sided(inp),
        BoundId::EarlyStopping => early_stopping(inp),
    }
}

/// One CSV row; hypothesis violations become rows with no value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundRow {
    pub bound_id: String,
    pub params_hash: String,
    pub value: Option<f64>,
    pub constant_known: bool,
    pub flags: String,
    pub violation: String,
}

impl BoundRow {
    pub fn is_violation(&self) -> bool {
        !self.violation.is_empty()
    }
}

/// Evaluates `id`, turning a hypothesis violation into a flagged row. Other
/// errors propagate.
pub fn evaluate_row(id: BoundId, inp: &BoundInputs) -> Result<BoundRow> {
    let hash = inp.params_hash();
    let constant_known = !matches!(
        id,
        BoundId::LogConcave | BoundId::LogConcaveFarInit | BoundId::KlOneSided
    );
    match evaluate(id, inp) {
        Ok(v) => Ok(BoundRow {
            bound_id: id.to_string(),
            params_hash: hash,
            value: Some(v.value),
            constant_known: v.constant_known,
            flags: v.flags_string(),
            violation: String::new(),
        }),
        Err(Error::HypothesisViolation { condition, .. }) => Ok(BoundRow {
            bound_id: id.to_string(),
            params_hash: hash,
            value: None,
            constant_known,
            flags: String::new(),
            violation: condition,
        }),
        Err(e) => Err(e),
    }
}

pub fn write_rows_csv<W: Write>(w: W, rows: &[BoundRow]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["bound_id", "params_hash", "value", "constant_known", "flags", "violation"])?;
    for r in rows {
        wr.write_record(&[
            r.bound_id.clone(),
            r.params_hash.clone(),
            r.value.map(|v| v.to_string()).unwrap_or_default(),
            r.constant_known.to_string(),
            r.flags.clone(),
            r.violation.clone(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}
