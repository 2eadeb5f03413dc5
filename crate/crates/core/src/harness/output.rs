//! CSV metadata and small numeric helpers shared by the harness.

use std::io::Write;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::Result;

/// `git describe` of the build, or `unknown` outside a checkout.
pub const VERSION: &str = env!("W2LAB_GIT_DESCRIBE");

/// First 16 hex digits of the SHA-256 of the JSON encoding of `value`.
pub fn json_hash<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_string(value).unwrap_or_default();
    Sha256::digest(json.as_bytes())
        .iter()
        .take(8)
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// `# seed=.., version=.., spec_hash=..`
pub fn metadata_line(seed: u64, spec_hash: &str) -> String {
    format!("# seed={seed}, version={VERSION}, spec_hash={spec_hash}")
}

/// Writes the metadata comment, then `body` (which carries its own header).
pub fn write_with_metadata<W: Write>(mut w: W, seed: u64, spec_hash: &str, body: &[u8]) -> Result<()> {
    writeln!(w, "{}", metadata_line(seed, spec_hash))?;
    w.write_all(body)?;
    Ok(())
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 || x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return None;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        None
    } else {
        Some(sxy / sxx)
    }
}

/// Formats an optional value for a CSV cell.
pub fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}
