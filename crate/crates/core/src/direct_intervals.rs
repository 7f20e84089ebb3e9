//! Direct intervals that use only a group's own data.

use crate::error::{Error, Result};
use crate::grouped_data::GroupSummary;
use crate::interval::{check_alpha, Interval, Method};
use crate::numerics::special::{std_quantile, t_quantile_unchecked};

/// UMAU interval for `Z ~ N(μ, σ²)` with known `σ`.
pub fn umau_z(z: f64, sigma: f64, alpha: f64) -> Result<Interval> {
    check_alpha(alpha)?;
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::domain(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    if !z.is_finite() {
        return Err(Error::domain(format!("z must be finite, got {z}")));
    }
    Interval::new(
        z + std_quantile(alpha / 2.0) * sigma,
        z + std_quantile(1.0 - alpha / 2.0) * sigma,
        1.0 - alpha,
        Method::UmauZ,
    )
}

/// Direct t-interval `mean ± t_{1−α/2, n−1}·sd/√n`.
pub fn umau_t(summary: &GroupSummary, alpha: f64) -> Result<Interval> {
    check_alpha(alpha)?;
    let sd = match summary.sd {
        Some(sd) if summary.n >= 2 => sd,
        _ => {
            return Err(Error::InsufficientData(format!(
                "t-interval for group `{}` needs n >= 2 (n = {})",
                summary.group_id, summary.n
            )))
        }
    };
    if !(sd > 0.0) {
        return Err(Error::InsufficientData(format!(
            "t-interval for group `{}` needs a positive sd",
            summary.group_id
        )));
    }
    let se = sd / (summary.n as f64).sqrt();
    let q = t_quantile_unchecked(1.0 - alpha / 2.0, (summary.n - 1) as f64);
    Interval::new(
        summary.mean - q * se,
        summary.mean + q * se,
        1.0 - alpha,
        Method::UmauT,
    )
}
