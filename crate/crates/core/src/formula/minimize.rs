//! Bounded scalar minimization: a uniform grid scan to find the best basin, then
//! Brent's parabolic/golden-section search inside the neighbouring grid cells.

use super::Expr;
use crate::error::{Error, EvalError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinimizeOptions {
    /// Grid points, endpoints included. At least 2.
    pub grid: usize,
    /// Relative x-tolerance of the refinement.
    pub xtol: f64,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self { grid: 256, xtol: 1e-9 }
    }
}

/// Minimizes `f` on `[lo, hi]`, returning `(argmin, min)`.
pub fn minimize_fn<F>(mut f: F, lo: f64, hi: f64, opts: MinimizeOptions) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64, EvalError>,
{
    if !lo.is_finite() || !hi.is_finite() {
        return Err(Error::Parameter(format!("bounds must be finite, got [{lo}, {hi}]")));
    }
    if lo > hi {
        return Err(Error::Parameter(format!("lower bound {lo} exceeds upper bound {hi}")));
    }
    if lo == hi {
        return Ok((lo, f(lo)?));
    }
    let n = opts.grid.max(2);
    let step = (hi - lo) / (n - 1) as f64;
    let at = |i: usize| if i + 1 == n { hi } else { lo + step * i as f64 };

    let mut best_i = 0;
    let mut best = f64::INFINITY;
    for i in 0..n {
        let v = f(at(i))?;
        if v < best {
            best = v;
            best_i = i;
        }
    }
    let a = at(best_i.saturating_sub(1));
    let b = at((best_i + 1).min(n - 1));
    let (x, fx) = brent(&mut f, a, b, opts.xtol, hi - lo)?;
    if fx < best {
        Ok((x, fx))
    } else {
        Ok((at(best_i), best))
    }
}

fn brent<F>(f: &mut F, mut a: f64, mut b: f64, xtol: f64, scale: f64) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64, EvalError>,
{
    const GOLDEN: f64 = 0.381_966_011_250_105_1;
    const MAX_ITER: usize = 200;

    let abs_tol = xtol * scale + 1e-300;
    let mut x = a + GOLDEN * (b - a);
    let mut w = x;
    let mut v = x;
    let mut fx = f(x)?;
    let mut fw = fx;
    let mut fv = fx;
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;

    for _ in 0..MAX_ITER {
        let m = 0.5 * (a + b);
        let tol1 = xtol * x.abs() + abs_tol;
        let tol2 = 2.0 * tol1;
        if (x - m).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut use_golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            } else {
                q = -q;
            }
            let e_prev = e;
            if p.abs() < (0.5 * q * e_prev).abs() && p > q * (a - x) && p < q * (b - x) {
                e = d;
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if x < m { tol1 } else { -tol1 };
                }
                use_golden = false;
            }
        }
        if use_golden {
            e = if x < m { b - x } else { a - x };
            d = GOLDEN * e;
        }
        let u = if d.abs() >= tol1 {
            x + d
        } else if d > 0.0 {
            x + tol1
        } else {
            x - tol1
        };
        let fu = f(u)?;
        if fu <= fx {
            if u < x {
                b = x;
            } else {
                a = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    Ok((x, fx))
}

pub fn minimize_expr_with(e: &Expr, lo: f64, hi: f64, opts: MinimizeOptions) -> Result<(f64, f64)> {
    minimize_fn(|x| e.eval(x), lo, hi, opts)
}

pub fn maximize_expr_with(e: &Expr, lo: f64, hi: f64, opts: MinimizeOptions) -> Result<(f64, f64)> {
    let (x, v) = minimize_fn(|x| e.eval(x).map(|y| -y), lo, hi, opts)?;
    Ok((x, -v))
}

/// `(argmin, min)` of `e` over `[lo, hi]` with default options.
pub fn minimize_expr(e: &Expr, lo: f64, hi: f64) -> Result<(f64, f64)> {
    minimize_expr_with(e, lo, hi, MinimizeOptions::default())
}

/// `(argmax, max)` of `e` over `[lo, hi]`, computed as the negated minimum of `-e`.
pub fn maximize_expr(e: &Expr, lo: f64, hi: f64) -> Result<(f64, f64)> {
    maximize_expr_with(e, lo, hi, MinimizeOptions::default())
}
