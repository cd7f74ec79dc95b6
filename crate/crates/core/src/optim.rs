//! Low-dimensional minimization used by the gauge evaluators and the solver.
//!
//! BFGS with a weak Wolfe bracketing line search. On convex functions with
//! kinks this still makes steady progress (the line search never requires
//! a gradient zero), which is all the callers need: dimensions are at most
//! a dozen and the objectives are convex.

pub(crate) struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
}

#[derive(Clone, Copy)]
pub(crate) struct BfgsOptions {
    pub max_iters: usize,
    /// Stop when the gradient norm drops below `grad_tol * (1 + |f|)`.
    pub grad_tol: f64,
    /// Stop when a full iteration improves `f` by less than `f_tol * (1 + |f|)`
    /// several times in a row.
    pub f_tol: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            max_iters: 200,
            grad_tol: 1e-12,
            f_tol: 1e-15,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimize `f`, which writes its (sub)gradient into the second argument.
pub(crate) fn bfgs<F>(mut f: F, x0: &[f64], opts: BfgsOptions) -> Minimum
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let m = x0.len();
    let mut x = x0.to_vec();
    let mut g = vec![0.0; m];
    let mut fx = f(&x, &mut g);
    if m == 0 || !fx.is_finite() {
        return Minimum { x, f: fx };
    }
    let mut h = identity(m);
    let mut scaled = false;
    let mut d = vec![0.0; m];
    let mut x_new = vec![0.0; m];
    let mut g_new = vec![0.0; m];
    let mut stalls = 0;
    for _ in 0..opts.max_iters {
        let gn = dot(&g, &g).sqrt();
        if gn <= opts.grad_tol * (1.0 + fx.abs()) {
            break;
        }
        for i in 0..m {
            d[i] = -(0..m).map(|j| h[i * m + j] * g[j]).sum::<f64>();
        }
        let mut slope = dot(&g, &d);
        if slope >= 0.0 {
            h = identity(m);
            d.iter_mut().zip(&g).for_each(|(di, gi)| *di = -gi);
            slope = -gn * gn;
        }
        let Some((t, f_new)) = weak_wolfe(&mut f, &x, fx, slope, &d, &mut x_new, &mut g_new)
        else {
            break;
        };
        let s: Vec<f64> = d.iter().map(|di| t * di).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let improvement = fx - f_new;
        x.copy_from_slice(&x_new);
        g.copy_from_slice(&g_new);
        fx = f_new;
        if improvement <= opts.f_tol * (1.0 + fx.abs()) {
            stalls += 1;
            if stalls >= 3 {
                break;
            }
        } else {
            stalls = 0;
        }
        let sy = dot(&s, &y);
        if sy > 1e-300 {
            if !scaled {
                let gamma = sy / dot(&y, &y);
                h.iter_mut().for_each(|v| *v = 0.0);
                for i in 0..m {
                    h[i * m + i] = gamma;
                }
                scaled = true;
            }
            bfgs_update(&mut h, &s, &y, sy);
        }
    }
    Minimum { x, f: fx }
}

fn identity(m: usize) -> Vec<f64> {
    let mut h = vec![0.0; m * m];
    for i in 0..m {
        h[i * m + i] = 1.0;
    }
    h
}

fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64) {
    let m = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..m)
        .map(|i| (0..m).map(|j| h[i * m + j] * y[j]).sum())
        .collect();
    let yhy = dot(y, &hy);
    for i in 0..m {
        for j in 0..m {
            h[i * m + j] += -rho * (hy[i] * s[j] + s[i] * hy[j])
                + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}

/// Weak Wolfe line search by bracketing and bisection.
///
/// Returns the step and the new value with `x_new`, `g_new` filled, or
/// `None` when no decrease was found.
fn weak_wolfe<F>(
    f: &mut F,
    x: &[f64],
    fx: f64,
    slope: f64,
    d: &[f64],
    x_new: &mut [f64],
    g_new: &mut [f64],
) -> Option<(f64, f64)>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    const C1: f64 = 1e-4;
    const C2: f64 = 0.9;
    let mut lo = 0.0;
    let mut hi = f64::INFINITY;
    let mut t = 1.0;
    let mut best: Option<(f64, f64)> = None;
    for _ in 0..60 {
        for i in 0..x.len() {
            x_new[i] = x[i] + t * d[i];
        }
        let ft = f(x_new, g_new);
        if !ft.is_finite() || ft > fx + C1 * t * slope {
            hi = t;
        } else {
            if best.is_none_or(|(_, fb)| ft < fb) {
                best = Some((t, ft));
            }
            if dot(g_new, d) < C2 * slope {
                lo = t;
            } else {
                return Some((t, ft));
            }
        }
        t = if hi.is_finite() { 0.5 * (lo + hi) } else { 2.0 * lo };
        if hi.is_finite() && hi - lo < 1e-16 * hi.max(1.0) {
            break;
        }
    }
    let (t, ft) = best?;
    if ft >= fx {
        return None;
    }
    for i in 0..x.len() {
        x_new[i] = x[i] + t * d[i];
    }
    let ft = f(x_new, g_new);
    Some((t, ft))
}

/// Root of a nondecreasing function on `[lo, hi]` with `g(lo) <= 0 <= g(hi)`,
/// by bisection.
pub(crate) fn bisect<G: FnMut(f64) -> f64>(mut g: G, mut lo: f64, mut hi: f64, iters: usize) -> f64 {
    for _ in 0..iters {
        let mid = 0.5 * (lo + hi);
        if g(mid) <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-16 * hi.abs().max(1e-300) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Maximize a function of one variable on `[a, b]` by golden-section search.
/// Returns `(argmax, max)`.
pub(crate) fn golden_max<G: FnMut(f64) -> f64>(mut g: G, a: f64, b: f64, iters: usize) -> (f64, f64) {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (a, b);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let mut fc = g(c);
    let mut fd = g(d);
    for _ in 0..iters {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = g(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = g(d);
        }
    }
    if fc >= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}
