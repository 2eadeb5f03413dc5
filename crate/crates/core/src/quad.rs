//! Composite Simpson quadrature over a panel grid, with a refinement check.

use crate::error::{Error, Result};

/// Relative change between successive refinements below which a result is
/// accepted as converged.
pub const QUAD_REL_TOL: f64 = 1e-9;

pub const DEFAULT_REFINEMENT: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    /// Two successive refinements agreed to [`QUAD_REL_TOL`].
    pub converged: bool,
    pub rel_change: f64,
}

impl Quadrature {
    pub fn exact(value: f64) -> Self {
        Quadrature {
            value,
            converged: true,
            rel_change: 0.0,
        }
    }
}

fn simpson_panel<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, m: usize) -> Result<f64> {
    debug_assert!(m % 2 == 0 && m > 0);
    let h = (b - a) / m as f64;
    let eval = |x: f64| -> Result<f64> {
        let v = f(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFiniteIntegrand { abscissa: x })
        }
    };
    let mut acc = eval(a)? + eval(b)?;
    for k in 1..m {
        let x = a + k as f64 * h;
        acc += if k % 2 == 1 { 4.0 } else { 2.0 } * eval(x)?;
    }
    Ok(acc * h / 3.0)
}

/// Composite Simpson with each panel split into `2 * subdivisions` pieces.
pub fn simpson<F: Fn(f64) -> f64>(f: &F, breakpoints: &[f64], subdivisions: usize) -> Result<f64> {
    let m = 2 * subdivisions.max(1);
    breakpoints
        .windows(2)
        .map(|w| simpson_panel(f, w[0], w[1], m))
        .sum()
}

/// Upper limit on integrand evaluations spent by [`quad`].
pub const QUAD_MAX_EVALS: usize = 1 << 22;

/// Integrates `f` over `[breakpoints[0], breakpoints[last]]`. Starting at
/// `refinement` subdivisions per panel, the subdivision count is doubled until
/// two successive estimates agree to [`QUAD_REL_TOL`] relative or the
/// evaluation budget runs out; in the latter case `converged` is false. The
/// finer estimate is returned.
pub fn quad<F: Fn(f64) -> f64>(f: F, breakpoints: &[f64], refinement: usize) -> Result<Quadrature> {
    if breakpoints.len() < 2 {
        return Err(Error::domain("quadrature needs at least two breakpoints"));
    }
    if breakpoints.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::domain("quadrature breakpoints must be strictly increasing"));
    }
    let panels = breakpoints.len() - 1;
    let mut sub = refinement.max(1);
    let mut coarse = simpson(&f, breakpoints, sub)?;
    loop {
        sub *= 2;
        let fine = simpson(&f, breakpoints, sub)?;
        let scale = fine.abs().max(coarse.abs());
        let rel_change = if scale == 0.0 { 0.0 } else { (fine - coarse).abs() / scale };
        let converged = rel_change <= QUAD_REL_TOL;
        if converged || 4 * sub * panels > QUAD_MAX_EVALS {
            return Ok(Quadrature { value: fine, converged, rel_change });
        }
        coarse = fine;
    }
}

/// `quad` over a single interval `[a, b]`, or zero when `a == b`.
pub fn quad_interval<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, refinement: usize) -> Result<Quadrature> {
    if a == b {
        return Ok(Quadrature::exact(0.0));
    }
    if !(a < b) {
        return Err(Error::domain(format!("quadrature interval [{a}, {b}] is empty")));
    }
    quad(f, &[a, b], refinement)
}

/// Right-endpoint sum. An upper bound on the integral when `f` is non-decreasing.
pub fn upper_sum<F: Fn(f64) -> f64>(f: F, breakpoints: &[f64]) -> f64 {
    breakpoints.windows(2).map(|w| (w[1] - w[0]) * f(w[1])).sum()
}

/// `a`, the interior points of `grid` strictly between `a` and `b`, then `b`.
pub fn panel_breaks(a: f64, b: f64, grid: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(grid.len() + 2);
    out.push(a);
    out.extend(grid.iter().copied().filter(|&x| x > a && x < b));
    out.push(b);
    out.dedup();
    out
}
