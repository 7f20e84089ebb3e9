use super::ToleranceConfig;
use crate::error::{Error, Result};

/// Bracketing root finder (Brent's bisection / secant / inverse-quadratic
/// hybrid).
///
/// Requires `f(lo)·f(hi) ≤ 0`. Stops when `|f(x)| ≤ abs_tol` or when the
/// bracket has shrunk below `rel_tol·|x| + abs_tol`.
pub fn find_root<F>(mut f: F, bracket: (f64, f64), tol: &ToleranceConfig) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    let (mut a, mut b) = bracket;
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::domain(format!(
            "bracket endpoints must be finite, got ({a}, {b})"
        )));
    }
    let mut fa = f(a);
    let mut fb = f(b);
    if !fa.is_finite() {
        return Err(Error::Evaluation { at: a });
    }
    if !fb.is_finite() {
        return Err(Error::Evaluation { at: b });
    }
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::Bracket {
            lo: a,
            hi: b,
            f_lo: fa,
            f_hi: fb,
        });
    }

    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for _ in 0..tol.max_iter {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 0.5 * (tol.rel_tol * b.abs() + tol.abs_tol);
        let half = 0.5 * (c - b);
        if fb.abs() <= tol.abs_tol || half.abs() <= tol1 {
            return Ok(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q) = if a == c {
                (2.0 * half * s, 1.0 - s)
            } else {
                let q = fa / fc;
                let r = fb / fc;
                (
                    s * (2.0 * half * q * (q - r) - (b - a) * (r - 1.0)),
                    (q - 1.0) * (r - 1.0) * (s - 1.0),
                )
            };
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            let min1 = 3.0 * half * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = half;
                e = d;
            }
        } else {
            d = half;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 {
            d
        } else {
            tol1.copysign(half)
        };
        fb = f(b);
        if !fb.is_finite() {
            return Err(Error::Evaluation { at: b });
        }
    }
    Err(Error::Convergence {
        iterations: tol.max_iter,
        best: b,
    })
}
