//! Time profiles: the Hessian envelope `L(t)` and the score error `eps(t)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::{self, panel_breaks, Quadrature};

/// How integrals of a non-decreasing `L` are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegralMode {
    /// Right-endpoint sums on the grid; never below the true integral.
    #[default]
    UpperSum,
    Simpson,
}

fn interp(knots: &[f64], values: &[f64], t: f64) -> f64 {
    if t <= knots[0] {
        return values[0];
    }
    let last = knots.len() - 1;
    if t >= knots[last] {
        return values[last];
    }
    let k = knots.partition_point(|&x| x <= t) - 1;
    let w = (t - knots[k]) / (knots[k + 1] - knots[k]);
    values[k] + w * (values[k + 1] - values[k])
}

fn validate_table(knots: &[f64], values: &[f64], what: &str) -> Result<()> {
    if knots.is_empty() || knots.len() != values.len() {
        return Err(Error::validation(format!(
            "{what}: table needs matching, non-empty knots and values"
        )));
    }
    if knots.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::validation(format!("{what}: knots must increase")));
    }
    if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::validation(format!("{what}: values must be finite and >= 0")));
    }
    if values.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::validation(format!("{what}: values must be non-decreasing")));
    }
    Ok(())
}

/// Non-decreasing envelope `L : (0, 1) -> [0, inf)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LipschitzProfile {
    Constant { value: f64 },
    /// Piecewise-linear through the knots, flat outside them.
    Tabulated { knots: Vec<f64>, values: Vec<f64> },
}

impl LipschitzProfile {
    pub fn validate(&self) -> Result<()> {
        match self {
            LipschitzProfile::Constant { value } => {
                if !(value.is_finite() && *value >= 0.0) {
                    return Err(Error::validation(format!("L = {value} must be >= 0")));
                }
                Ok(())
            }
            LipschitzProfile::Tabulated { knots, values } => validate_table(knots, values, "L"),
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            LipschitzProfile::Constant { value } => *value,
            LipschitzProfile::Tabulated { knots, values } => interp(knots, values, t),
        }
    }

    fn breaks(&self, a: f64, b: f64, grid: &[f64]) -> Vec<f64> {
        let mut pts = panel_breaks(a, b, grid);
        if let LipschitzProfile::Tabulated { knots, .. } = self {
            pts.extend(knots.iter().copied().filter(|&x| x > a && x < b));
            pts.sort_by(f64::total_cmp);
            pts.dedup();
        }
        pts
    }

    fn integrate_power(&self, power: i32, a: f64, b: f64, grid: &[f64], mode: IntegralMode) -> Result<f64> {
        if b <= a {
            return Ok(0.0);
        }
        match self {
            LipschitzProfile::Constant { value } => Ok(value.powi(power) * (b - a)),
            LipschitzProfile::Tabulated { .. } => {
                let pts = self.breaks(a, b, grid);
                match mode {
                    IntegralMode::UpperSum => Ok(quad::upper_sum(|s| self.eval(s).powi(power), &pts)),
                    IntegralMode::Simpson => {
                        Ok(quad::quad(|s| self.eval(s).powi(power), &pts, quad::DEFAULT_REFINEMENT)?.value)
                    }
                }
            }
        }
    }

    /// `int_a^b L(s) ds`
    pub fn integral(&self, a: f64, b: f64, grid: &[f64], mode: IntegralMode) -> Result<f64> {
        self.integrate_power(1, a, b, grid, mode)
    }

    /// `int_a^b L(s)^2 ds`
    pub fn integral_sq(&self, a: f64, b: f64, grid: &[f64], mode: IntegralMode) -> Result<f64> {
        self.integrate_power(2, a, b, grid, mode)
    }
}

/// Score-error magnitude `eps(t)`, non-decreasing on `(0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScoreErrorProfile {
    Zero,
    Constant { eps: f64 },
    /// `eps / sqrt(1 - t)`
    InvSqrtOneMinus { eps: f64 },
    Tabulated { knots: Vec<f64>, values: Vec<f64> },
}

impl Default for ScoreErrorProfile {
    fn default() -> Self {
        ScoreErrorProfile::Zero
    }
}

impl ScoreErrorProfile {
    pub fn validate(&self) -> Result<()> {
        match self {
            ScoreErrorProfile::Zero => Ok(()),
            ScoreErrorProfile::Constant { eps } | ScoreErrorProfile::InvSqrtOneMinus { eps } => {
                if !(eps.is_finite() && *eps >= 0.0) {
                    return Err(Error::validation(format!("eps = {eps} must be >= 0")));
                }
                Ok(())
            }
            ScoreErrorProfile::Tabulated { knots, values } => validate_table(knots, values, "eps"),
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            ScoreErrorProfile::Zero => 0.0,
            ScoreErrorProfile::Constant { eps } => *eps,
            ScoreErrorProfile::InvSqrtOneMinus { eps } => eps / (1.0 - t).sqrt(),
            ScoreErrorProfile::Tabulated { knots, values } => interp(knots, values, t),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            ScoreErrorProfile::Zero => true,
            ScoreErrorProfile::Constant { eps } | ScoreErrorProfile::InvSqrtOneMinus { eps } => *eps == 0.0,
            ScoreErrorProfile::Tabulated { values, .. } => values.iter().all(|&v| v == 0.0),
        }
    }

    /// Multiplies the magnitude by `k >= 0`.
    pub fn scaled(&self, k: f64) -> Self {
        match self {
            ScoreErrorProfile::Zero => ScoreErrorProfile::Zero,
            ScoreErrorProfile::Constant { eps } => ScoreErrorProfile::Constant { eps: eps * k },
            ScoreErrorProfile::InvSqrtOneMinus { eps } => ScoreErrorProfile::InvSqrtOneMinus { eps: eps * k },
            ScoreErrorProfile::Tabulated { knots, values } => ScoreErrorProfile::Tabulated {
                knots: knots.clone(),
                values: values.iter().map(|v| v * k).collect(),
            },
        }
    }

    /// Checks monotonicity by sampling on `grid` (points with `t >= 1` skipped).
    pub fn check_nondecreasing(&self, grid: &[f64]) -> Result<()> {
        let vals: Vec<(f64, f64)> = grid
            .iter()
            .filter(|&&t| t < 1.0)
            .map(|&t| (t, self.eval(t)))
            .collect();
        for w in vals.windows(2) {
            if w[1].1 < w[0].1 {
                return Err(Error::validation(format!(
                    "score error profile decreases between t = {} and t = {}",
                    w[0].0, w[1].0
                )));
            }
        }
        Ok(())
    }

    /// `int_a^b eps(s) s^{-power} ds` for `power` in {1/2, 3/2}.
    ///
    /// For `eps / sqrt(1 - s)` the substitution `w = sqrt(1 - s)` removes the
    /// endpoint singularity, so `b = 1` is allowed.
    pub fn weighted_integral(&self, power: f64, a: f64, b: f64, grid: &[f64]) -> Result<Quadrature> {
        if !(a > 0.0) || b > 1.0 || a > b {
            return Err(Error::domain(format!("integral over [{a}, {b}] not in (0, 1]")));
        }
        if a == b || self.is_zero() {
            return Ok(Quadrature::exact(0.0));
        }
        let refinement = quad::DEFAULT_REFINEMENT;
        match self {
            ScoreErrorProfile::InvSqrtOneMinus { eps } => {
                let eps = *eps;
                let mut wgrid: Vec<f64> = panel_breaks(a, b, grid)
                    .into_iter()
                    .map(|s| (1.0 - s).max(0.0).sqrt())
                    .collect();
                wgrid.reverse();
                wgrid.dedup();
                quad::quad(
                    move |w| 2.0 * eps * (1.0 - w * w).powf(-power),
                    &wgrid,
                    refinement,
                )
            }
            _ => quad::quad(|s| self.eval(s) * s.powf(-power), &self.breaks(a, b, grid), refinement),
        }
    }

    /// `int_a^b eps(s)^2 / s ds`. For `eps / sqrt(1 - s)` this diverges at 1,
    /// so `b < 1` is required; the substitution `u = log sqrt(1 - s)` keeps
    /// the integrand smooth.
    pub fn squared_over_s_integral(&self, a: f64, b: f64, grid: &[f64]) -> Result<Quadrature> {
        if !(a > 0.0) || b > 1.0 || a > b {
            return Err(Error::domain(format!("integral over [{a}, {b}] not in (0, 1]")));
        }
        if a == b || self.is_zero() {
            return Ok(Quadrature::exact(0.0));
        }
        let refinement = quad::DEFAULT_REFINEMENT;
        match self {
            ScoreErrorProfile::InvSqrtOneMinus { eps } => {
                if b >= 1.0 {
                    return Err(Error::domain(
                        "int eps(s)^2/s diverges at s = 1 for eps(1-s)^(-1/2); needs delta > 0",
                    ));
                }
                let e2 = eps * eps;
                let mut ugrid: Vec<f64> = panel_breaks(a, b, grid)
                    .into_iter()
                    .map(|s| 0.5 * (1.0 - s).ln())
                    .collect();
                ugrid.reverse();
                ugrid.dedup();
                quad::quad(move |u| 2.0 * e2 / -(2.0 * u).exp_m1(), &ugrid, refinement)
            }
            _ => quad::quad(|s| self.eval(s).powi(2) / s, &self.breaks(a, b, grid), refinement),
        }
    }

    fn breaks(&self, a: f64, b: f64, grid: &[f64]) -> Vec<f64> {
        let mut pts = panel_breaks(a, b, grid);
        if let ScoreErrorProfile::Tabulated { knots, .. } = self {
            pts.extend(knots.iter().copied().filter(|&x| x > a && x < b));
            pts.sort_by(f64::total_cmp);
            pts.dedup();
        }
        pts
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid(n: usize, a: f64, b: f64) -> Vec<f64> {
        (0..=n).map(|i| a + (b - a) * i as f64 / n as f64).collect()
    }

    #[test]
    fn constant_l_integrals_exact() {
        let l = LipschitzProfile::Constant { value: 3.0 };
        let g = grid(10, 0.1, 1.0);
        assert_relative_eq!(l.integral(0.1, 1.0, &g, IntegralMode::UpperSum).unwrap(), 2.7, epsilon = 1e-14);
        assert_relative_eq!(l.integral_sq(0.0, 0.1, &g, IntegralMode::Simpson).unwrap(), 0.9, epsilon = 1e-14);
    }

    #[test]
    fn tabulated_upper_sum_dominates_simpson() {
        let l = LipschitzProfile::Tabulated {
            knots: vec![0.0, 0.5, 1.0],
            values: vec![0.0, 1.0, 4.0],
        };
        l.validate().unwrap();
        let g = grid(7, 0.05, 0.95);
        let up = l.integral(0.05, 0.95, &g, IntegralMode::UpperSum).unwrap();
        let si = l.integral(0.05, 0.95, &g, IntegralMode::Simpson).unwrap();
        assert!(up >= si);
        assert!(LipschitzProfile::Tabulated { knots: vec![0.0, 1.0], values: vec![2.0, 1.0] }
            .validate()
            .is_err());
    }

    #[test]
    fn inv_sqrt_weighted_integral_matches_antiderivative() {
        // int eps (1-s)^{-1/2} s^{-1/2} ds = 2 eps [asin sqrt(s)]
        let eps = 0.3;
        let p = ScoreErrorProfile::InvSqrtOneMinus { eps };
        let t0 = 0.01;
        let g = grid(64, t0, 1.0);
        let q = p.weighted_integral(0.5, t0, 1.0, &g).unwrap();
        let exact = 2.0 * eps * (1f64.asin() - t0.sqrt().asin());
        assert_relative_eq!(q.value, exact, max_relative = 1e-9);
        assert!(q.value <= 4.0 * eps);

        // int eps (1-s)^{-1/2} s^{-3/2} ds = 2 eps sqrt((1 - t0) / t0) at b = 1
        let q = p.weighted_integral(1.5, t0, 1.0, &g).unwrap();
        let exact = 2.0 * eps * ((1.0 - t0) / t0).sqrt();
        assert_relative_eq!(q.value, exact, max_relative = 1e-8);
        assert!(q.value <= (2.0 * 2f64.sqrt() / t0.sqrt() + 4.0) * eps);
    }

    #[test]
    fn squared_integral_matches_log_antiderivative() {
        let eps = 0.2;
        let p = ScoreErrorProfile::InvSqrtOneMinus { eps };
        let (a, b) = (0.05, 1.0 - 1e-3);
        let g = grid(40, a, b);
        let q = p.squared_over_s_integral(a, b, &g).unwrap();
        let anti = |s: f64| (s / (1.0 - s)).ln();
        assert_relative_eq!(q.value, eps * eps * (anti(b) - anti(a)), max_relative = 1e-8);
        assert!(p.squared_over_s_integral(a, 1.0, &g).is_err());
    }

    #[test]
    fn constant_eps_integrals() {
        let p = ScoreErrorProfile::Constant { eps: 0.1 };
        let g = grid(32, 0.04, 1.0);
        let q = p.weighted_integral(0.5, 0.04, 1.0, &g).unwrap();
        assert_relative_eq!(q.value, 0.1 * 2.0 * (1.0 - 0.2), max_relative = 1e-9);
        let q = p.squared_over_s_integral(0.04, 1.0, &g).unwrap();
        assert_relative_eq!(q.value, 0.01 * (1.0 / 0.04f64).ln(), max_relative = 1e-7);
    }

    #[test]
    fn monotone_check() {
        let g = grid(20, 0.01, 0.99);
        ScoreErrorProfile::InvSqrtOneMinus { eps: 0.1 }.check_nondecreasing(&g).unwrap();
        ScoreErrorProfile::Constant { eps: 0.1 }.check_nondecreasing(&g).unwrap();
        let bad = ScoreErrorProfile::Tabulated { knots: vec![0.0, 1.0], values: vec![1.0, 0.5] };
        assert!(bad.check_nondecreasing(&g).is_err());
    }

    #[test]
    fn zero_profile_integrates_to_zero() {
        let g = grid(4, 0.1, 1.0);
        assert_eq!(ScoreErrorProfile::Zero.weighted_integral(0.5, 0.1, 1.0, &g).unwrap().value, 0.0);
    }
}
