//! Velocity-space formulation of the dual problem.
//!
//! A path is stored through its scaled velocities `w_j = -J N (x_{j+1} - x_j)`.
//! The endpoint and mean conditions then reduce to `sum_j w_j` having no
//! `R^{n,k}` component, and `x_0` is recovered from the mean condition.
//! In these variables
//!
//! * action `A(w) = 1/(2N^2) sum_{i<j} <w_j, J w_i>` (a quadratic form),
//! * dual functional `I(w) = 1/N sum_j (h(w_j) / 2)^p`,
//!
//! and the capacity is `1 / max A / I^(2/p)`.

use super::{Method, SolveConfig, SolveError};
use crate::convex_bodies::{BodyError, BodyExpr};
use crate::optim::{bfgs, golden_max, BfgsOptions};
use crate::symplectic_core::{Frame, Subspace};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub(crate) struct Problem<'a> {
    pub body: &'a BodyExpr,
    pub frame: Frame,
    /// Interior point of the body on `R^{n,k}`; all evaluations are of the
    /// body translated by `-z0`.
    pub z0: Vec<f64>,
    pub segments: usize,
    pub p: f64,
    d: usize,
    rnk: Vec<usize>,
}

const MAX_POLISHES: usize = 20;
const POLISH_ITERS: usize = 400;

pub(crate) struct Run {
    pub w: Vec<f64>,
    pub multiplier: Vec<f64>,
    pub ratio: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `<a, J b>` with `J(q, p) = (-p, q)`.
#[inline]
fn dot_j(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() / 2;
    (0..n).map(|i| -a[i] * b[n + i] + a[n + i] * b[i]).sum()
}

impl<'a> Problem<'a> {
    pub fn new(body: &'a BodyExpr, frame: Frame, z0: Vec<f64>, segments: usize, p: f64) -> Self {
        Self {
            body,
            frame,
            z0,
            segments,
            p,
            d: frame.dim(),
            rnk: frame.indices(Subspace::Rnk),
        }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Support of the translated body; `s` receives a supporting point.
    pub fn support(&self, w: &[f64], s: &mut [f64]) -> Result<f64, BodyError> {
        let h = self.body.support_into(w, s)? - dot(&self.z0, w);
        s.iter_mut().zip(&self.z0).for_each(|(si, zi)| *si -= zi);
        Ok(h)
    }

    /// Gauge of the translated body with its gradient in `g`.
    pub fn gauge(&self, v: &[f64], g: &mut [f64]) -> Result<f64, BodyError> {
        self.body.gauge_about_into(&self.z0, v, g)
    }

    /// Remove the `R^{n,k}` part of the velocity sum.
    pub fn project(&self, w: &mut [f64]) {
        let d = self.d;
        let n_seg = self.segments as f64;
        for &c in &self.rnk {
            let mean = w.iter().skip(c).step_by(d).sum::<f64>() / n_seg;
            w.iter_mut().skip(c).step_by(d).for_each(|x| *x -= mean);
        }
    }

    pub fn action(&self, w: &[f64]) -> f64 {
        let d = self.d;
        let mut s = vec![0.0; d];
        let mut acc = 0.0;
        for wj in w.chunks(d) {
            acc += dot_j(wj, &s);
            s.iter_mut().zip(wj).for_each(|(a, b)| *a += b);
        }
        acc / (2.0 * (self.segments * self.segments) as f64)
    }

    pub fn action_gradient(&self, w: &[f64], out: &mut [f64]) {
        let d = self.d;
        let n = d / 2;
        let mut total = vec![0.0; d];
        for wj in w.chunks(d) {
            total.iter_mut().zip(wj).for_each(|(a, b)| *a += b);
        }
        let c = 1.0 / (2.0 * (self.segments * self.segments) as f64);
        let mut before = vec![0.0; d];
        let mut v = vec![0.0; d];
        for (wj, oj) in w.chunks(d).zip(out.chunks_mut(d)) {
            for i in 0..d {
                v[i] = 2.0 * before[i] + wj[i] - total[i];
            }
            for i in 0..n {
                oj[i] = -c * v[n + i];
                oj[n + i] = c * v[i];
            }
            before.iter_mut().zip(wj).for_each(|(a, b)| *a += b);
        }
    }

    /// Dual functional, with its gradient when `grad` is given.
    pub fn dual(&self, w: &[f64], mut grad: Option<&mut [f64]>) -> Result<f64, BodyError> {
        let d = self.d;
        let mut s = vec![0.0; d];
        let mut acc = 0.0;
        let n_seg = self.segments as f64;
        for (j, wj) in w.chunks(d).enumerate() {
            let h = 0.5 * self.support(wj, &mut s)?.max(0.0);
            acc += h.powf(self.p);
            if let Some(g) = grad.as_deref_mut() {
                let c = 0.5 * self.p * h.powf(self.p - 1.0) / n_seg;
                for i in 0..d {
                    g[j * d + i] = c * s[i];
                }
            }
        }
        Ok(acc / n_seg)
    }

    pub fn ratio(&self, w: &[f64]) -> Result<f64, BodyError> {
        let i = self.dual(w, None)?;
        if i <= 0.0 {
            return Ok(0.0);
        }
        Ok(self.action(w) / i.powf(2.0 / self.p))
    }

    /// Rescale so that `I(w) = 1`.
    pub fn normalize(&self, w: &mut [f64]) -> Result<(), BodyError> {
        let i = self.dual(w, None)?;
        if i > 0.0 {
            let s = i.powf(-1.0 / self.p);
            w.iter_mut().for_each(|x| *x *= s);
        }
        Ok(())
    }

    /// Maximize `<g, u>` over `u` in the constraint space with `I(u) <= 1`.
    ///
    /// Solved through its dual in the multiplier `a` of the sum constraint:
    /// minimize `sum_j j(N g_j - a)^q` over `a` in `R^{n,k}`, then take
    /// `u_j` along the gauge gradient with Hoelder weights.
    pub fn linear_max(&self, g: &[f64], warm: &[f64]) -> Result<(Vec<f64>, Vec<f64>), BodyError> {
        let d = self.d;
        let q = self.p / (self.p - 1.0);
        let n_seg = self.segments as f64;
        let y: Vec<f64> = g.iter().map(|x| n_seg * x).collect();
        let mut err: Option<BodyError> = None;
        let mut v = vec![0.0; d];
        let mut gg = vec![0.0; d];
        let scale = 1.0 / self.segments as f64;
        let obj = |a: &[f64], grad: &mut [f64]| -> f64 {
            grad.iter_mut().for_each(|x| *x = 0.0);
            let mut f = 0.0;
            for yj in y.chunks(d) {
                v.copy_from_slice(yj);
                for (slot, &c) in self.rnk.iter().enumerate() {
                    v[c] -= a[slot];
                }
                let jv = match self.gauge(&v, &mut gg) {
                    Ok(x) => x,
                    Err(e) => {
                        err.get_or_insert(e);
                        return f64::NAN;
                    }
                };
                f += jv.powf(q);
                let c = q * jv.powf(q - 1.0);
                for (slot, &i) in self.rnk.iter().enumerate() {
                    grad[slot] -= c * gg[i] * scale;
                }
            }
            f * scale
        };
        let opts = BfgsOptions { max_iters: 100, grad_tol: 1e-11, f_tol: 1e-15 };
        let best = bfgs(obj, warm, opts);
        if let Some(e) = err {
            return Err(e);
        }
        let a = best.x;
        let mut u = vec![0.0; y.len()];
        for (yj, uj) in y.chunks(d).zip(u.chunks_mut(d)) {
            v.copy_from_slice(yj);
            for (slot, &c) in self.rnk.iter().enumerate() {
                v[c] -= a[slot];
            }
            let jv = self.gauge(&v, &mut gg)?;
            let c = jv.powf(q - 1.0);
            for i in 0..d {
                uj[i] = c * gg[i];
            }
        }
        self.project(&mut u);
        self.normalize(&mut u)?;
        Ok((u, a))
    }

    /// Initial multiplier guess: the `R^{n,k}` part of the mean of `N g`.
    pub fn multiplier_guess(&self, g: &[f64]) -> Vec<f64> {
        let d = self.d;
        self.rnk
            .iter()
            .map(|&c| g.iter().skip(c).step_by(d).sum::<f64>())
            .collect()
    }

    /// Power-type iteration: linearize the action, maximize over the dual
    /// ball, line search between old and new iterate.
    pub fn dual_power(&self, mut w: Vec<f64>, cfg: &SolveConfig) -> Result<Run, BodyError> {
        self.project(&mut w);
        self.normalize(&mut w)?;
        let mut r = self.ratio(&w)?;
        let mut g = vec![0.0; w.len()];
        self.action_gradient(&w, &mut g);
        let mut a = self.multiplier_guess(&g);
        let stop = cfg.tol_rel * 1e-6;
        let mut stalls = 0;
        let mut polishes = 0;
        let mut converged = false;
        let mut iterations = 0;
        while iterations < cfg.max_iters {
            iterations += 1;
            self.action_gradient(&w, &mut g);
            let (u, a_new) = self.linear_max(&g, &a)?;
            a = a_new;
            let ru = self.ratio(&u)?;
            let (next, r_next) = if ru > r {
                (u, ru)
            } else {
                let mix = |t: f64| -> Vec<f64> { w.iter().zip(&u).map(|(x, y)| (1.0 - t) * x + t * y).collect() };
                let (t, rt) = golden_max(|t| self.ratio(&mix(t)).unwrap_or(f64::NEG_INFINITY), 0.0, 1.0, 40);
                if rt > r {
                    (mix(t), rt)
                } else {
                    // the vertex-type linear maximizer is not an ascent
                    // direction at kinks of the gauge: polish with
                    // subgradient steps and resume from there
                    polishes += 1;
                    if polishes > MAX_POLISHES {
                        converged = true;
                        break;
                    }
                    let (mut wp, used, _) = self.descend(w.clone(), POLISH_ITERS, stop)?;
                    iterations += used;
                    self.normalize(&mut wp)?;
                    let rp = self.ratio(&wp)?;
                    if rp <= r * (1.0 + stop) {
                        converged = true;
                        break;
                    }
                    (wp, rp)
                }
            };
            let gain = (r_next - r) / r.abs().max(1e-300);
            w = next;
            self.normalize(&mut w)?;
            r = r_next;
            if gain < stop {
                stalls += 1;
                if stalls >= 3 {
                    converged = true;
                    break;
                }
            } else {
                stalls = 0;
            }
        }
        self.action_gradient(&w, &mut g);
        let (_, multiplier) = self.linear_max(&g, &a)?;
        Ok(Run { w, multiplier, ratio: r, iterations, converged })
    }

    /// Projected subgradient descent on `I^(2/p) / A`, renormalized to
    /// `A = 1`, with Polyak steps against a receding target. Returns the
    /// best iterate, the iteration count and whether progress stalled.
    fn descend(&self, mut w: Vec<f64>, max_iters: usize, tol: f64) -> Result<(Vec<f64>, usize, bool), BodyError> {
        self.project(&mut w);
        let m = w.len();
        let mut gi = vec![0.0; m];
        let mut ga = vec![0.0; m];
        let mut best_w = w.clone();
        let mut best = f64::INFINITY;
        let mut last_check = f64::INFINITY;
        for it in 0..max_iters {
            let act = self.action(&w);
            if act <= 0.0 {
                break;
            }
            w.iter_mut().for_each(|x| *x /= act.sqrt());
            let i = self.dual(&w, Some(&mut gi))?;
            self.action_gradient(&w, &mut ga);
            let f = i.powf(2.0 / self.p);
            if f < best {
                best = f;
                best_w.copy_from_slice(&w);
            }
            let c = (2.0 / self.p) * i.powf(2.0 / self.p - 1.0);
            let mut step: Vec<f64> = gi.iter().zip(&ga).map(|(x, y)| c * x - f * y).collect();
            self.project(&mut step);
            let gn2 = dot(&step, &step);
            if gn2 <= 1e-300 {
                return Ok((best_w, it + 1, true));
            }
            let target = best * (1.0 - 0.01 / ((it + 1) as f64).sqrt());
            let t = ((f - target) / gn2).min(1.0 / ((it + 1) as f64).sqrt());
            w.iter_mut().zip(&step).for_each(|(x, s)| *x -= t * s);
            if (it + 1) % 100 == 0 {
                if last_check - best < tol * best {
                    return Ok((best_w, it + 1, true));
                }
                last_check = best;
            }
        }
        Ok((best_w, max_iters, false))
    }

    pub fn subgradient(&self, w: Vec<f64>, cfg: &SolveConfig) -> Result<Run, BodyError> {
        let (mut best_w, iterations, converged) = self.descend(w, cfg.max_iters, cfg.tol_rel * 1e-3)?;
        self.normalize(&mut best_w)?;
        let mut g = vec![0.0; best_w.len()];
        self.action_gradient(&best_w, &mut g);
        let guess = self.multiplier_guess(&g);
        let (_, multiplier) = self.linear_max(&g, &guess)?;
        let ratio = self.ratio(&best_w)?;
        Ok(Run { w: best_w, multiplier, ratio, iterations, converged })
    }

    pub fn run(&self, w: Vec<f64>, cfg: &SolveConfig) -> Result<Run, BodyError> {
        match cfg.method {
            Method::DualPower => self.dual_power(w, cfg),
            Method::Subgradient => self.subgradient(w, cfg),
        }
    }

    /// Node positions `x_0..x_N` for velocities `w`, with `x_0` fixed by the
    /// mean condition.
    pub fn positions(&self, w: &[f64]) -> Vec<Vec<f64>> {
        let d = self.d;
        let n = d / 2;
        let n_seg = self.segments as f64;
        let mut xs = vec![vec![0.0; d]; self.segments + 1];
        for (j, wj) in w.chunks(d).enumerate() {
            // x_{j+1} - x_j = J w_j / N
            for i in 0..n {
                xs[j + 1][i] = xs[j][i] - wj[n + i] / n_seg;
                xs[j + 1][n + i] = xs[j][n + i] + wj[i] / n_seg;
            }
        }
        let mut mean = vec![0.0; d];
        for (j, x) in xs.iter().enumerate() {
            let c = if j == 0 || j == self.segments { 0.5 } else { 1.0 };
            mean.iter_mut().zip(x).for_each(|(m, v)| *m += c * v / n_seg);
        }
        for x in xs.iter_mut() {
            for &c in &self.rnk {
                x[c] -= mean[c];
            }
        }
        xs
    }

    /// Stationarity residual `|P(grad I - mu grad A)| / |P grad I|` with the
    /// multiplier `mu = p I / (2 A)` of a critical point of the ratio.
    pub fn stationarity(&self, w: &[f64]) -> Result<f64, BodyError> {
        let m = w.len();
        let mut gi = vec![0.0; m];
        let mut ga = vec![0.0; m];
        let i = self.dual(w, Some(&mut gi))?;
        self.action_gradient(w, &mut ga);
        let mu = self.p * i / (2.0 * self.action(w));
        self.project(&mut gi);
        self.project(&mut ga);
        let num: f64 = gi.iter().zip(&ga).map(|(x, y)| (x - mu * y).powi(2)).sum();
        Ok((num / dot(&gi, &gi).max(1e-300)).sqrt())
    }
}

/// Velocities of a sampled path.
pub(crate) fn velocities(samples: &[Vec<f64>]) -> Vec<f64> {
    let d = samples[0].len();
    let n = d / 2;
    let n_seg = (samples.len() - 1) as f64;
    let mut w = Vec::with_capacity((samples.len() - 1) * d);
    for pair in samples.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        // -J(dq, dp) = (dp, -dq)
        for i in 0..n {
            w.push(n_seg * (b[n + i] - a[n + i]));
        }
        for i in 0..n {
            w.push(-n_seg * (b[i] - a[i]));
        }
    }
    w
}

/// Reverse the time direction, which flips the sign of the action.
pub(crate) fn reversed(w: &[f64], d: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(w.len());
    for c in w.chunks(d).rev() {
        out.extend(c.iter().map(|x| -x));
    }
    out
}

/// Deterministic starting paths: one closed or half loop per symplectic
/// plane, then smooth random paths.
pub(crate) fn starting_paths(frame: &Frame, segments: usize, random: usize, seed: u64) -> Vec<Vec<f64>> {
    let d = frame.dim();
    let n = frame.n();
    let mut out = Vec::new();
    let ts: Vec<f64> = (0..=segments).map(|j| j as f64 / segments as f64).collect();
    for plane in 0..n {
        // chord planes get one half-turn on each side of the q-axis
        let (turns, phases) = if plane < frame.k() { (2.0, &[0.0][..]) } else { (1.0, &[0.0, 1.0][..]) };
        for phase in phases {
            let samples: Vec<Vec<f64>> = ts
                .iter()
                .map(|t| {
                    let mut x = vec![0.0; d];
                    let th = (turns * t + phase) * std::f64::consts::PI;
                    x[plane] = th.cos();
                    x[n + plane] = th.sin();
                    x
                })
                .collect();
            out.push(velocities(&samples));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..random {
        let modes = 4;
        let coef: Vec<(Vec<f64>, Vec<f64>)> = (1..=modes)
            .map(|m| {
                let s = 1.0 / (m * m) as f64;
                let mut draw = || -> Vec<f64> { (0..d).map(|_| { let z: f64 = StandardNormal.sample(&mut rng); s * z }).collect() };
                (draw(), draw())
            })
            .collect();
        let samples: Vec<Vec<f64>> = ts
            .iter()
            .map(|t| {
                let mut x = vec![0.0; d];
                for (m, (c, s)) in coef.iter().enumerate() {
                    let th = (m + 1) as f64 * std::f64::consts::PI * t;
                    for i in 0..d {
                        x[i] += c[i] * th.cos() + s[i] * th.sin();
                    }
                }
                x
            })
            .collect();
        out.push(velocities(&samples));
    }
    out
}

/// Resample a path at a new segment count by linear interpolation.
pub(crate) fn resample(samples: &[Vec<f64>], segments: usize) -> Vec<Vec<f64>> {
    let old = samples.len() - 1;
    (0..=segments)
        .map(|j| {
            let t = j as f64 * old as f64 / segments as f64;
            let i = (t.floor() as usize).min(old - 1);
            let f = t - i as f64;
            samples[i].iter().zip(&samples[i + 1]).map(|(a, b)| (1.0 - f) * a + f * b).collect()
        })
        .collect()
}

pub(crate) fn check_config(cfg: &SolveConfig) -> Result<(), SolveError> {
    if cfg.segments < 16 {
        return Err(SolveError::InvalidConfig(format!("need at least 16 segments, got {}", cfg.segments)));
    }
    if !(cfg.tol_rel > 0.0 && cfg.tol_rel <= 1e-2) {
        return Err(SolveError::InvalidConfig(format!("tol_rel must lie in (0, 1e-2], got {}", cfg.tol_rel)));
    }
    if !(cfg.p > 1.0 && cfg.p.is_finite()) {
        return Err(SolveError::InvalidConfig(format!("p must exceed 1, got {}", cfg.p)));
    }
    if cfg.max_iters == 0 {
        return Err(SolveError::InvalidConfig("max_iters must be positive".into()));
    }
    Ok(())
}

/// Velocities of a path resampled to `segments` segments.
pub(crate) fn positions_to_start(samples: &[Vec<f64>], segments: usize) -> Vec<f64> {
    velocities(&resample(samples, segments))
}
