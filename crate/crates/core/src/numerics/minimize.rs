use super::ToleranceConfig;
use crate::error::{Error, Result};

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Minimize `f` on `[lo, hi]`: scan `grid_points` equally spaced points, then
/// golden-section refine between the neighbours of the best grid point.
///
/// Returns `(argmin, min_value)`. The scan makes the result robust to
/// objectives that are not unimodal at grid resolution.
pub fn minimize_scalar<F>(
    mut f: F,
    domain: (f64, f64),
    grid_points: usize,
    tol: &ToleranceConfig,
) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> f64,
{
    let (lo, hi) = domain;
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::domain(format!("invalid domain ({lo}, {hi})")));
    }
    if grid_points < 3 {
        return Err(Error::domain(format!(
            "grid_points must be at least 3, got {grid_points}"
        )));
    }
    let mut eval = |x: f64| -> Result<f64> {
        let v = f(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Evaluation { at: x })
        }
    };

    let last = grid_points - 1;
    let step = (hi - lo) / last as f64;
    let node = |k: usize| if k == last { hi } else { lo + step * k as f64 };
    let mut best_k = 0;
    let mut best_v = f64::INFINITY;
    for k in 0..grid_points {
        let v = eval(node(k))?;
        if v < best_v {
            best_v = v;
            best_k = k;
        }
    }
    let best_x = node(best_k);

    let mut a = node(best_k.saturating_sub(1));
    let mut b = node((best_k + 1).min(last));
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = eval(x1)?;
    let mut f2 = eval(x2)?;
    for _ in 0..tol.max_iter {
        let mid = 0.5 * (a + b);
        if (b - a) <= tol.rel_tol * mid.abs() + tol.abs_tol {
            break;
        }
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = eval(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = eval(x2)?;
        }
    }
    let (gx, gv) = if f1 <= f2 { (x1, f1) } else { (x2, f2) };
    if gv <= best_v {
        Ok((gx, gv))
    } else {
        Ok((best_x, best_v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic() {
        let (x, v) = minimize_scalar(
            |w| (w - 0.5).powi(2),
            (0.0, 1.0),
            33,
            &ToleranceConfig::default(),
        )
        .unwrap();
        assert!((x - 0.5).abs() < 1e-8, "{x}");
        assert!(v < 1e-16);
    }

    #[test]
    fn off_grid_quadratic() {
        let (x, _) = minimize_scalar(
            |w| (w - 0.123_456_7).powi(2),
            (0.0, 1.0),
            41,
            &ToleranceConfig::default(),
        )
        .unwrap();
        assert!((x - 0.123_456_7).abs() < 1e-8, "{x}");
    }

    #[test]
    fn monotone_hits_lower_boundary() {
        let (x, _) = minimize_scalar(|w| w, (0.0, 1.0), 41, &ToleranceConfig::default()).unwrap();
        assert!(x < 1e-9, "{x}");
    }

    #[test]
    fn bimodal_prefers_global() {
        // Local min near 0.2 (value 0.1), global near 0.8 (value 0).
        let f = |w: f64| ((w - 0.2).powi(2) + 0.1).min((w - 0.8).powi(2) * 4.0);
        let (x, _) = minimize_scalar(f, (0.0, 1.0), 41, &ToleranceConfig::default()).unwrap();
        assert!((x - 0.8).abs() < 1e-7, "{x}");
    }

    #[test]
    fn errors() {
        let tol = ToleranceConfig::default();
        assert!(minimize_scalar(|w| w, (1.0, 0.0), 41, &tol).is_err());
        assert!(minimize_scalar(|w| w, (0.0, 1.0), 2, &tol).is_err());
        match minimize_scalar(|w| if w > 0.5 { f64::NAN } else { w }, (0.0, 1.0), 11, &tol) {
            Err(Error::Evaluation { at }) => assert!(at > 0.5),
            other => panic!("expected evaluation error, got {other:?}"),
        }
    }
}
