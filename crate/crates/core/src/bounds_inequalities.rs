//! Numerical checks of comparison inequalities between capacities,
//! volumes, widths and norms.
//!
//! Every check returns an [`InequalityReport`] whose `slack` is oriented so
//! that the inequality holds exactly when `slack >= -tol`. Quantities that
//! come from the solver carry a relative tolerance of [`SOLVER_REL_TOL`];
//! Monte Carlo quantities add three standard errors.

use crate::closed_forms::{closed_form_capacity, ClosedFormError};
use crate::convex_bodies::{
    mean_width_symmetrized, sample_directions, BodyError, BodyExpr, HalfSpace, VolumeEstimate, VolumeMode,
};
use crate::dual_solver::{solve, SolveConfig, SolveError};
use crate::symplectic_core::{apply_j_into, Frame, Subspace, SymplecticError};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

/// Relative error budget for capacities computed by the solver.
pub const SOLVER_REL_TOL: f64 = 0.01;
/// Relative error budget for finite-difference derivatives of solver
/// capacities.
pub const DK_REL_TOL: f64 = 0.02;
/// Relative error budget for closed-form capacities (rounding only).
pub const EXACT_REL_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum BoundsError {
    #[error("the body is not centrally symmetric")]
    NotSymmetric,
    #[error("the body is not invariant under (q, p) -> (q, -p)")]
    NotInvariant,
    #[error("the body does not meet R^{{n,k}} in its interior")]
    EmptyIntersection,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Body(#[from] BodyError),
    #[error(transparent)]
    ClosedForm(#[from] ClosedFormError),
    #[error(transparent)]
    Frame(#[from] SymplecticError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    /// `lhs <= rhs`
    AtMost,
    /// `lhs >= rhs`
    AtLeast,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InequalityReport {
    pub formula_id: String,
    pub relation: Relation,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs - lhs` for `AtMost`, `lhs - rhs` for `AtLeast`.
    pub slack: f64,
    pub tol: f64,
    pub holds: bool,
    pub inputs: serde_json::Value,
}

impl InequalityReport {
    pub fn new(
        formula_id: impl Into<String>,
        relation: Relation,
        lhs: f64,
        rhs: f64,
        tol: f64,
        inputs: serde_json::Value,
    ) -> Self {
        let slack = match relation {
            Relation::AtMost => rhs - lhs,
            Relation::AtLeast => lhs - rhs,
        };
        Self { formula_id: formula_id.into(), relation, lhs, rhs, slack, tol, holds: slack >= -tol, inputs }
    }
}

/// Flat CSV `formula_id,lhs,rhs,slack,holds`.
pub fn reports_csv(reports: &[InequalityReport]) -> String {
    use crate::cli_io::format_real;
    let mut s = String::from("formula_id,lhs,rhs,slack,holds\n");
    for r in reports {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            r.formula_id,
            format_real(r.lhs),
            format_real(r.rhs),
            format_real(r.slack),
            r.holds
        ));
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CapacityMethod {
    ClosedForm,
    Solver,
    /// Closed form when one is known, solver otherwise.
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityOptions {
    pub method: CapacityMethod,
    pub solver: SolveConfig,
}

impl Default for CapacityOptions {
    fn default() -> Self {
        Self { method: CapacityMethod::Auto, solver: SolveConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CapacityValue {
    pub value: f64,
    pub source: &'static str,
    /// Absolute error budget.
    pub tol: f64,
}

pub fn capacity(body: &BodyExpr, frame: &Frame, opts: &CapacityOptions) -> Result<CapacityValue, BoundsError> {
    let closed = || -> Result<CapacityValue, BoundsError> {
        let v = closed_form_capacity(body, frame)?.value;
        Ok(CapacityValue { value: v, source: "closed_form", tol: EXACT_REL_TOL * v.abs().max(1.0) })
    };
    let solver = || -> Result<CapacityValue, BoundsError> {
        let v = solve(body, frame, &opts.solver)?.capacity;
        Ok(CapacityValue { value: v, source: "dual-solver", tol: SOLVER_REL_TOL * v })
    };
    match opts.method {
        CapacityMethod::ClosedForm => closed(),
        CapacityMethod::Solver => solver(),
        CapacityMethod::Auto => match closed() {
            Ok(v) => Ok(v),
            Err(BoundsError::ClosedForm(ClosedFormError::Unsupported(_))) => solver(),
            Err(e) => Err(e),
        },
    }
}

fn body_json(body: &BodyExpr) -> serde_json::Value {
    serde_json::to_value(body).unwrap_or(serde_json::Value::Null)
}

fn frame_json(frame: &Frame) -> serde_json::Value {
    json!({"n": frame.n(), "k": frame.k()})
}

fn check_dim(body: &BodyExpr, frame: &Frame) -> Result<(), BoundsError> {
    if body.dim() != frame.dim() {
        return Err(BodyError::DimensionMismatch { expected: frame.dim(), got: body.dim() }.into());
    }
    body.validate()?;
    Ok(())
}

/// Largest ball about a point of the subspace `R^{n,k}`; returns `(centre,
/// radius)`. A linear program over sampled normals proposes a centre, a
/// local minimization of `h(u) - <z, u>` on the sphere measures the true
/// radius there, and the minimizing normals are fed back as cuts.
pub fn inscribed_ball(body: &BodyExpr, frame: &Frame) -> Result<(Vec<f64>, f64), BoundsError> {
    check_dim(body, frame)?;
    let d = frame.dim();
    let mut dirs = sample_directions(d, 200 * d, 0xba11);
    let mut hs = dirs.iter().map(|u| Ok(body.support(u)?.value)).collect::<Result<Vec<f64>, BoundsError>>()?;
    let mut best: Option<(Vec<f64>, f64)> = None;
    for _ in 0..30 {
        let (centre, upper) = inscribed_lp(frame, &dirs, &hs)?;
        let (r, cuts) = measure_radius(body, &centre, &dirs, &hs)?;
        if best.as_ref().is_none_or(|(_, b)| r > *b) {
            best = Some((centre, r));
        }
        if upper - r <= 1e-10 * upper.max(1.0) {
            break;
        }
        for u in cuts {
            hs.push(body.support(&u)?.value);
            dirs.push(u);
        }
    }
    match best {
        Some((c, r)) if r > 0.0 => Ok((c, r)),
        _ => Err(BoundsError::EmptyIntersection),
    }
}

/// Maximize `r` subject to `<z, u> + r <= h(u)` over the given normals with
/// `z` on the subspace.
fn inscribed_lp(frame: &Frame, dirs: &[Vec<f64>], hs: &[f64]) -> Result<(Vec<f64>, f64), BoundsError> {
    use minilp::{ComparisonOp, OptimizationDirection, Problem as Lp};
    let idx = frame.indices(Subspace::Rnk);
    let mut lp = Lp::new(OptimizationDirection::Maximize);
    let z: Vec<_> = idx.iter().map(|_| lp.add_var(0.0, (f64::NEG_INFINITY, f64::INFINITY))).collect();
    let s = lp.add_var(1.0, (f64::NEG_INFINITY, f64::INFINITY));
    for (u, h) in dirs.iter().zip(hs) {
        let mut row: Vec<_> = z.iter().zip(&idx).map(|(v, &c)| (*v, u[c])).collect();
        row.push((s, 1.0));
        lp.add_constraint(&row[..], ComparisonOp::Le, *h);
    }
    let sol = lp.solve().map_err(|_| BoundsError::EmptyIntersection)?;
    if sol[s] <= 0.0 {
        return Err(BoundsError::EmptyIntersection);
    }
    let mut centre = vec![0.0; frame.dim()];
    for (v, &c) in z.iter().zip(&idx) {
        centre[c] = sol[*v];
    }
    Ok((centre, sol[s]))
}

/// Distance from `centre` to the boundary, by projected subgradient descent
/// on the sphere from the six tightest sampled normals. Also returns the
/// minimizing normals.
fn measure_radius(
    body: &BodyExpr,
    centre: &[f64],
    dirs: &[Vec<f64>],
    hs: &[f64],
) -> Result<(f64, Vec<Vec<f64>>), BoundsError> {
    let margin = |u: &[f64]| -> Result<(f64, Vec<f64>), BoundsError> {
        let g = body.support(u)?;
        let m = g.value - u.iter().zip(centre).map(|(a, b)| a * b).sum::<f64>();
        let grad = g.subgradient.iter().zip(centre).map(|(a, b)| a - b).collect();
        Ok((m, grad))
    };
    let margins: Vec<f64> = dirs
        .iter()
        .zip(hs)
        .map(|(u, h)| h - u.iter().zip(centre).map(|(a, b)| a * b).sum::<f64>())
        .collect();
    let mut order: Vec<usize> = (0..dirs.len()).collect();
    order.sort_by(|a, b| margins[*a].total_cmp(&margins[*b]));
    let mut best = margins[order[0]];
    let mut cuts = Vec::new();
    for &i in order.iter().take(6) {
        let mut u = dirs[i].clone();
        let (mut m, mut g) = margin(&u)?;
        let mut step = 0.2;
        while step > 1e-10 {
            let dot: f64 = g.iter().zip(&u).map(|(a, b)| a * b).sum();
            let mut cand: Vec<f64> = u.iter().zip(&g).map(|(ui, gi)| ui - step * (gi - dot * ui)).collect();
            let nc = cand.iter().map(|x| x * x).sum::<f64>().sqrt();
            cand.iter_mut().for_each(|x| *x /= nc);
            let (mc, gc) = margin(&cand)?;
            if mc < m {
                u = cand;
                m = mc;
                g = gc;
                step *= 1.5;
            } else {
                step *= 0.5;
            }
        }
        best = best.min(m);
        cuts.push(u);
    }
    Ok((best, cuts))
}

/// Half the relative width of the largest ball centred on the subspace
/// bounds the capacity from below: `pi r^2 / 2 <= c`.
pub fn inscribed_ball_lower_bound(
    body: &BodyExpr,
    frame: &Frame,
    opts: &CapacityOptions,
) -> Result<InequalityReport, BoundsError> {
    if frame.is_periodic() {
        return Err(BoundsError::InvalidParameter("the ball bound needs k < n".into()));
    }
    let (centre, r) = inscribed_ball(body, frame)?;
    let c = capacity(body, frame, opts)?;
    let lhs = std::f64::consts::PI * r * r / 2.0;
    Ok(InequalityReport::new(
        "inscribed_ball",
        Relation::AtMost,
        lhs,
        c.value,
        c.tol + 1e-9 * lhs,
        json!({"body": body_json(body), "frame": frame_json(frame), "centre": centre, "radius": r, "capacity_source": c.source}),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormSearch {
    /// Random directions in addition to the signed axes.
    pub samples: usize,
    pub seed: u64,
}

impl Default for NormSearch {
    fn default() -> Self {
        Self { samples: 400, seed: 7 }
    }
}

/// Operator norm of `J` restricted to the characteristic directions `J V0`
/// (the p-coordinates `p_{k..n}`), measured from the dual norm `h_D` to the
/// gauge `j_D`: `sup j_D(J v) / h_D(v)`.
pub fn j_norm(body: &BodyExpr, frame: &Frame, search: &NormSearch) -> Result<f64, BoundsError> {
    check_dim(body, frame)?;
    if frame.is_periodic() {
        return Err(BoundsError::InvalidParameter("k = n leaves no characteristic directions".into()));
    }
    let (n, k) = (frame.n(), frame.k());
    match body.simplified() {
        BodyExpr::Ellipsoid { radii } => {
            // sup over unit v of sum v_i^2 / r_i^2 over sum r_i^2 v_i^2
            let m = radii[k..].iter().cloned().fold(f64::INFINITY, f64::min);
            return Ok(1.0 / (m * m));
        }
        BodyExpr::Ball { center, radius } if center.iter().all(|c| *c == 0.0) => return Ok(1.0 / (radius * radius)),
        _ => {}
    }
    let m = n - k;
    let d = frame.dim();
    let embed = |v: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; d];
        out[n + k..].copy_from_slice(v);
        out
    };
    let ratio = |v: &[f64]| -> Result<f64, BoundsError> {
        let x = embed(v);
        let mut jx = vec![0.0; d];
        apply_j_into(&x, &mut jx);
        Ok(body.gauge(&jx)?.value / body.support(&x)?.value)
    };
    let dirs = sample_directions(m, if m == 1 { 0 } else { search.samples }, search.seed);
    let mut vals: Vec<(f64, Vec<f64>)> =
        dirs.into_iter().map(|v| Ok((ratio(&v)?, v))).collect::<Result<_, BoundsError>>()?;
    vals.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut best = vals[0].0;
    if m > 1 {
        for (val, v0) in vals.into_iter().take(4) {
            // compass search on the sphere
            let (mut v, mut f, mut step) = (v0, val, 0.1);
            while step > 1e-8 {
                let mut improved = false;
                for i in 0..m {
                    for s in [step, -step] {
                        let mut c = v.clone();
                        c[i] += s;
                        let nc = c.iter().map(|x| x * x).sum::<f64>().sqrt();
                        c.iter_mut().for_each(|x| *x /= nc);
                        let fc = ratio(&c)?;
                        if fc > f {
                            v = c;
                            f = fc;
                            improved = true;
                        }
                    }
                }
                if !improved {
                    step *= 0.5;
                }
            }
            best = best.max(f);
        }
    }
    Ok(best)
}

/// `c <= 2 / |J|` for centrally symmetric bodies. With `symmetrize`, a
/// non-symmetric body is compared through its difference body `D - D`,
/// which contains it.
pub fn j_norm_upper_bound(
    body: &BodyExpr,
    frame: &Frame,
    search: &NormSearch,
    opts: &CapacityOptions,
    symmetrize: bool,
) -> Result<InequalityReport, BoundsError> {
    check_dim(body, frame)?;
    let symmetric = body.is_centrally_symmetric()?;
    let (norm_body, id) = match (symmetric, symmetrize) {
        (true, _) => (body.clone(), "j_norm"),
        (false, true) => (BodyExpr::symm_diff(body.clone()), "j_norm_symmdiff"),
        (false, false) => return Err(BoundsError::NotSymmetric),
    };
    let norm = j_norm(&norm_body, frame, search)?;
    let c = capacity(body, frame, opts)?;
    let rhs = 2.0 / norm;
    Ok(InequalityReport::new(
        id,
        Relation::AtMost,
        c.value,
        rhs,
        c.tol + 1e-6 * rhs,
        json!({"body": body_json(body), "frame": frame_json(frame), "norm": norm, "capacity_source": c.source}),
    ))
}

/// `c(D +_p K)^{p/2} >= c(D)^{p/2} + c(K)^{p/2}`.
pub fn brunn_minkowski_check(
    d: &BodyExpr,
    k: &BodyExpr,
    p: f64,
    frame: &Frame,
    opts: &CapacityOptions,
) -> Result<InequalityReport, BoundsError> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(BoundsError::InvalidParameter(format!("p must be at least 1, got {p}")));
    }
    let sum = BodyExpr::psum(p, d.clone(), k.clone())?;
    check_dim(&sum, frame)?;
    let cs = capacity(&sum, frame, opts)?;
    let cd = capacity(d, frame, opts)?;
    let ck = capacity(k, frame, opts)?;
    let e = p / 2.0;
    let lhs = cs.value.powf(e);
    let rhs = cd.value.powf(e) + ck.value.powf(e);
    // first-order propagation of the capacity budgets
    let tol = e * (cs.value.powf(e - 1.0) * cs.tol + cd.value.powf(e - 1.0) * cd.tol + ck.value.powf(e - 1.0) * ck.tol);
    Ok(InequalityReport::new(
        "brunn_minkowski",
        Relation::AtLeast,
        lhs,
        rhs,
        tol,
        json!({"left": body_json(d), "right": body_json(k), "p": p, "frame": frame_json(frame),
               "sources": [cs.source, cd.source, ck.source]}),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DkEstimate {
    /// Extrapolated `d/de c(D + e K)` at `e = 0`.
    pub estimate: f64,
    /// `2 sqrt(c(D) c(K))`.
    pub lower: f64,
    /// `sum h_K(-J dz)` along the carrier of `D`.
    pub upper: f64,
    /// `(e, (sqrt c(D + e K) - sqrt c(D)) / e)` over the ladder.
    pub sqrt_quotients: Vec<(f64, f64)>,
    /// Whether the square-root quotients are non-increasing in `e`.
    pub monotone: bool,
    pub tol: f64,
    pub bracket_holds: bool,
}

/// One-sided derivative of the capacity along Minkowski sums `D + e K`.
///
/// `e -> sqrt c(D + e K)` is concave, so its difference quotients are
/// monotone and extrapolate linearly to `e = 0`; the derivative of `c` is
/// `2 sqrt c(D)` times that limit.
pub fn dk_derivative(
    d: &BodyExpr,
    k: &BodyExpr,
    frame: &Frame,
    eps: &[f64],
    opts: &CapacityOptions,
) -> Result<DkEstimate, BoundsError> {
    if eps.len() < 2 || eps.iter().any(|e| !(*e > 0.0)) || eps.windows(2).any(|w| w[1] >= w[0]) {
        return Err(BoundsError::InvalidParameter("eps ladder must be positive and decreasing, length >= 2".into()));
    }
    check_dim(d, frame)?;
    check_dim(k, frame)?;
    let cd = capacity(d, frame, opts)?;
    let ck = capacity(k, frame, opts)?;
    let carrier = solve(d, frame, &opts.solver)?.carrier;
    let dim = frame.dim();
    let (mut jv, mut s) = (vec![0.0; dim], vec![0.0; dim]);
    let mut upper = 0.0;
    for w in carrier.path.samples.windows(2) {
        let step: Vec<f64> = w[1].iter().zip(&w[0]).map(|(a, b)| b - a).collect();
        apply_j_into(&step, &mut jv);
        upper += k.support_into(&jv, &mut s)?;
    }
    let sums: Vec<CapacityValue> = eps
        .par_iter()
        .map(|&e| {
            let body = BodyExpr::psum(1.0, d.clone(), BodyExpr::scale(e, k.clone())?)?;
            capacity(&body, frame, opts)
        })
        .collect::<Result<_, _>>()?;
    let sd = cd.value.sqrt();
    let sqrt_quotients: Vec<(f64, f64)> = eps.iter().zip(&sums).map(|(e, c)| (*e, (c.value.sqrt() - sd) / e)).collect();
    // Discretization errors of nearby bodies largely cancel in the
    // differences, so solver-based quotients get a fixed relative budget
    // instead of the worst-case 1/e amplification.
    let exact = cd.source == "closed_form" && sums.iter().all(|c| c.source == "closed_form");
    let rel = if exact { EXACT_REL_TOL } else { DK_REL_TOL };
    let monotone = sqrt_quotients.windows(2).all(|w| w[1].1 >= w[0].1 - rel * w[0].1.abs());
    let (e1, q1) = sqrt_quotients[sqrt_quotients.len() - 2];
    let (e2, q2) = sqrt_quotients[sqrt_quotients.len() - 1];
    let limit = q2 + (q2 - q1) * e2 / (e1 - e2);
    let estimate = 2.0 * sd * limit;
    let lower = 2.0 * sd * ck.value.sqrt();
    // the carrier sum is a polygon inscribed in the true chord
    let tol = rel * estimate.abs().max(upper) + SOLVER_REL_TOL * 0.1 * upper;
    let bracket_holds = lower <= estimate + tol && estimate <= upper + tol;
    Ok(DkEstimate { estimate, lower, upper, sqrt_quotients, monotone, tol, bracket_holds })
}

/// `(q, p) -> (q, -p)` invariance, tested on support values.
pub fn is_reflection_invariant(body: &BodyExpr) -> Result<bool, BoundsError> {
    let d = body.dim();
    let n = d / 2;
    let mut s = vec![0.0; d];
    for w in sample_directions(d, 60, 0x7a0) {
        let mut r = w.clone();
        r[n..].iter_mut().for_each(|x| *x = -*x);
        let a = body.support_into(&w, &mut s)?;
        let b = body.support_into(&r, &mut s)?;
        if (a - b).abs() > 1e-9 * (1.0 + a.abs()) {
            return Ok(false);
        }
    }
    Ok(true)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Tight {
    Lower,
    Upper,
    Neither,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SandwichReport {
    /// `c_HZ / 2 <= c`
    pub lower: InequalityReport,
    /// `c <= c_HZ`
    pub upper: InequalityReport,
    pub tight: Tight,
}

/// Reflection-invariant bodies satisfy `c_HZ / 2 <= c <= c_HZ`.
pub fn sandwich_check(body: &BodyExpr, frame: &Frame, opts: &CapacityOptions) -> Result<SandwichReport, BoundsError> {
    check_dim(body, frame)?;
    if !is_reflection_invariant(body)? {
        return Err(BoundsError::NotInvariant);
    }
    let full = Frame::new(frame.n(), frame.n())?;
    let hz = capacity(body, &full, opts)?;
    let c = capacity(body, frame, opts)?;
    let inputs = json!({"body": body_json(body), "frame": frame_json(frame), "sources": [c.source, hz.source]});
    let tol = c.tol + hz.tol;
    let lower = InequalityReport::new("sandwich_lower", Relation::AtLeast, c.value, hz.value / 2.0, tol, inputs.clone());
    let upper = InequalityReport::new("sandwich_upper", Relation::AtMost, c.value, hz.value, tol, inputs);
    let tight = if lower.slack.abs() <= tol {
        Tight::Lower
    } else if upper.slack.abs() <= tol {
        Tight::Upper
    } else {
        Tight::Neither
    };
    Ok(SandwichReport { lower, upper, tight })
}

/// `c(D, k) <= c(D, k + 1)` for every consecutive pair up to `k = n`.
pub fn k_monotonicity(body: &BodyExpr, n: usize, opts: &CapacityOptions) -> Result<Vec<InequalityReport>, BoundsError> {
    let values: Vec<CapacityValue> =
        (0..=n).map(|k| capacity(body, &Frame::new(n, k)?, opts)).collect::<Result<_, _>>()?;
    Ok(values
        .windows(2)
        .enumerate()
        .map(|(k, w)| {
            InequalityReport::new(
                "k_monotonicity",
                Relation::AtMost,
                w[0].value,
                w[1].value,
                w[0].tol + w[1].tol,
                json!({"body": body_json(body), "n": n, "k": k, "sources": [w[0].source, w[1].source]}),
            )
        })
        .collect())
}

fn half_volume(body: &BodyExpr, side: HalfSpace, mode: VolumeMode) -> Result<VolumeEstimate, BoundsError> {
    match body.volume_half(side, mode) {
        Err(BodyError::Unsupported(_)) if mode == VolumeMode::Exact => {
            Ok(body.volume_half(side, VolumeMode::MonteCarlo { seed: 0x5eed, samples: 400_000 })?)
        }
        other => Ok(other?),
    }
}

/// Empirical check of `c^n <= n! min(Vol D^+, Vol D^-)` at `k = n - 1`,
/// reported as the ratio `c^n / (n! min Vol D^±)` against 1. `Exact` falls
/// back to Monte Carlo where no closed-form half volume exists.
pub fn viterbo_ratio(
    body: &BodyExpr,
    frame: &Frame,
    mode: VolumeMode,
    opts: &CapacityOptions,
) -> Result<InequalityReport, BoundsError> {
    check_dim(body, frame)?;
    let n = frame.n();
    if frame.k() + 1 != n {
        return Err(BoundsError::InvalidParameter("the ratio is defined at k = n - 1".into()));
    }
    let c = capacity(body, frame, opts)?;
    let plus = half_volume(body, HalfSpace::Plus, mode)?;
    let minus = half_volume(body, HalfSpace::Minus, mode)?;
    let half = if plus.value <= minus.value { plus } else { minus };
    let nfact: f64 = (1..=n).map(|i| i as f64).product();
    let ratio = c.value.powi(n as i32) / (nfact * half.value);
    let tol = ratio * (n as f64 * c.tol / c.value + 3.0 * half.stderr / half.value) + 1e-12;
    Ok(InequalityReport::new(
        "viterbo_ratio",
        Relation::AtMost,
        ratio,
        1.0,
        tol,
        json!({"body": body_json(body), "frame": frame_json(frame), "capacity": c.value,
               "half_volume": half.value, "half_volume_stderr": half.stderr}),
    ))
}

/// `c(Q x P) <= 2 r_Q r_P` at `k = 0`, with `r` the mean width of the
/// symmetrized factor.
pub fn mean_width_bound(
    q: &BodyExpr,
    p: &BodyExpr,
    seed: u64,
    samples: usize,
    opts: &CapacityOptions,
) -> Result<InequalityReport, BoundsError> {
    if !p.is_centrally_symmetric()? {
        return Err(BoundsError::NotSymmetric);
    }
    let body = BodyExpr::lagrangian_product(q.clone(), p.clone())?;
    let frame = Frame::new(q.dim(), 0)?;
    check_dim(&body, &frame)?;
    let rq = mean_width_symmetrized(q, seed, samples)?;
    let rp = mean_width_symmetrized(p, seed.wrapping_add(1), samples)?;
    let c = capacity(&body, &frame, opts)?;
    let rhs = 2.0 * rq.value * rp.value;
    let tol = c.tol + 6.0 * (rq.stderr * rp.value + rq.value * rp.stderr);
    Ok(InequalityReport::new(
        "mean_width",
        Relation::AtMost,
        c.value,
        rhs,
        tol,
        json!({"q": body_json(q), "p": body_json(p), "r_q": rq.value, "r_p": rp.value, "capacity_source": c.source}),
    ))
}

/// A named inequality check, as accepted by the command line.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CheckSpec {
    JNorm { body: BodyExpr, k: usize, symmetrize: bool },
    BrunnMinkowski { left: BodyExpr, right: BodyExpr, p: f64, k: usize },
    DkDerivative { left: BodyExpr, right: BodyExpr, k: usize, eps: Vec<f64> },
    Sandwich { body: BodyExpr, k: usize },
    InscribedBall { body: BodyExpr, k: usize },
    KMonotonicity { body: BodyExpr },
    Viterbo { body: BodyExpr },
    MeanWidth { q: BodyExpr, p: BodyExpr, seed: u64, samples: usize },
}

fn frame_of(body: &BodyExpr, k: usize) -> Result<Frame, BoundsError> {
    let d = body.dim();
    if !d.is_multiple_of(2) {
        return Err(BoundsError::InvalidParameter("body dimension must be even".into()));
    }
    Ok(Frame::new(d / 2, k)?)
}

/// Run a check; most produce one report, monotonicity one per step and
/// the sandwich two.
pub fn run_check(spec: &CheckSpec, opts: &CapacityOptions) -> Result<Vec<InequalityReport>, BoundsError> {
    Ok(match spec {
        CheckSpec::JNorm { body, k, symmetrize } => {
            vec![j_norm_upper_bound(body, &frame_of(body, *k)?, &NormSearch::default(), opts, *symmetrize)?]
        }
        CheckSpec::BrunnMinkowski { left, right, p, k } => {
            vec![brunn_minkowski_check(left, right, *p, &frame_of(left, *k)?, opts)?]
        }
        CheckSpec::DkDerivative { left, right, k, eps } => {
            let f = frame_of(left, *k)?;
            let est = dk_derivative(left, right, &f, eps, opts)?;
            let inputs = json!({"left": body_json(left), "right": body_json(right), "frame": frame_json(&f), "eps": eps});
            vec![
                InequalityReport::new("dk_lower", Relation::AtLeast, est.estimate, est.lower, est.tol, inputs.clone()),
                InequalityReport::new("dk_upper", Relation::AtMost, est.estimate, est.upper, est.tol, inputs),
            ]
        }
        CheckSpec::Sandwich { body, k } => {
            let s = sandwich_check(body, &frame_of(body, *k)?, opts)?;
            vec![s.lower, s.upper]
        }
        CheckSpec::InscribedBall { body, k } => vec![inscribed_ball_lower_bound(body, &frame_of(body, *k)?, opts)?],
        CheckSpec::KMonotonicity { body } => k_monotonicity(body, frame_of(body, 0)?.n(), opts)?,
        CheckSpec::Viterbo { body } => {
            let n = frame_of(body, 0)?.n();
            vec![viterbo_ratio(body, &Frame::new(n, n - 1)?, VolumeMode::Exact, opts)?]
        }
        CheckSpec::MeanWidth { q, p, seed, samples } => vec![mean_width_bound(q, p, *seed, *samples, opts)?],
    })
}

/// The regression corpus of inequality checks over the catalog bodies and
/// a few sums; every report must hold.
pub fn inequality_corpus() -> Vec<CheckSpec> {
    use crate::closed_forms::{ellipse_disc_example, example_bodies_catalog};
    let mut bodies: Vec<BodyExpr> = Vec::new();
    for e in example_bodies_catalog() {
        if !bodies.contains(&e.body) {
            bodies.push(e.body);
        }
    }
    let mut out = Vec::new();
    for b in &bodies {
        let n = b.dim() / 2;
        out.push(CheckSpec::KMonotonicity { body: b.clone() });
        let invariant = is_reflection_invariant(b).unwrap_or(false);
        let symmetric = b.is_centrally_symmetric().unwrap_or(false);
        for k in 0..n {
            if invariant && (*b != ellipse_disc_example() || k == 1) {
                out.push(CheckSpec::Sandwich { body: b.clone(), k });
            }
            if symmetric {
                out.push(CheckSpec::JNorm { body: b.clone(), k, symmetrize: false });
            }
            out.push(CheckSpec::InscribedBall { body: b.clone(), k });
        }
    }
    let ball4 = BodyExpr::unit_ball(4);
    let e12 = BodyExpr::Ellipsoid { radii: vec![1.0, 2.0] };
    let square = BodyExpr::cube(2);
    let disc = BodyExpr::unit_ball(2);
    let pairs = [(ball4.clone(), ball4.clone()), (ball4.clone(), e12.clone()), (square.clone(), disc.clone())];
    for (l, r) in pairs {
        for p in [1.0, 2.0] {
            out.push(CheckSpec::BrunnMinkowski { left: l.clone(), right: r.clone(), p, k: 0 });
        }
    }
    out
}

/// Run every corpus check concurrently.
pub fn run_corpus(specs: &[CheckSpec], opts: &CapacityOptions) -> Vec<Result<Vec<InequalityReport>, BoundsError>> {
    specs.par_iter().map(|s| run_check(s, opts)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn closed() -> CapacityOptions {
        CapacityOptions { method: CapacityMethod::ClosedForm, ..Default::default() }
    }

    #[test]
    fn j_norm_ellipsoid_matches_search() {
        // an affine image defeats the structural shortcut, so the search runs
        let e = BodyExpr::Ellipsoid { radii: vec![1.0, 2.0, 1.5] };
        let f = Frame::new(3, 1).unwrap();
        let exact = j_norm(&e, &f, &NormSearch::default()).unwrap();
        assert!((exact - 1.0 / 2.25).abs() < 1e-15);
        let polar_twice = BodyExpr::Polar(Box::new(BodyExpr::Polar(Box::new(BodyExpr::AxisEllipsoid {
            semi_axes: vec![1.0, 2.0, 1.5, 1.0, 2.0, 1.5],
        }))));
        let searched = j_norm(&polar_twice, &f, &NormSearch::default()).unwrap();
        assert!((searched - exact).abs() < 1e-6, "{searched} vs {exact}");
    }

    #[test]
    fn inscribed_box() {
        let b = BodyExpr::boxes(vec![[0.0, 2.0, 1.0, 3.0]]).unwrap();
        let f = Frame::new(1, 0).unwrap();
        let (c, r) = inscribed_ball(&b, &f).unwrap();
        assert!((r - 1.0).abs() < 1e-9 && (c[0] - 1.0).abs() < 1e-6, "{c:?} {r}");
        let rep = inscribed_ball_lower_bound(&b, &f, &closed()).unwrap();
        assert!(rep.holds && (rep.rhs - 2.0).abs() < 1e-12);
    }

    #[test]
    fn viterbo_equality_cases() {
        let e = BodyExpr::Ellipsoid { radii: vec![1.0, 2f64.sqrt()] };
        let r = viterbo_ratio(&e, &Frame::new(2, 1).unwrap(), VolumeMode::Exact, &closed()).unwrap();
        assert!((r.lhs - 1.0).abs() < 1e-12);
        let d = BodyExpr::unit_ball(2);
        let r = viterbo_ratio(&d, &Frame::new(1, 0).unwrap(), VolumeMode::Exact, &closed()).unwrap();
        assert!((r.lhs - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sandwich_ball() {
        let s = sandwich_check(&BodyExpr::unit_ball(4), &Frame::new(2, 1).unwrap(), &closed()).unwrap();
        assert_eq!(s.tight, Tight::Lower);
        assert!((s.lower.lhs - PI / 2.0).abs() < 1e-12 && (s.upper.rhs - PI).abs() < 1e-12);
        let off = BodyExpr::offcenter_ball(4, 0.5, 1.0).unwrap();
        assert!(matches!(sandwich_check(&off, &Frame::new(2, 1).unwrap(), &closed()), Err(BoundsError::NotInvariant)));
    }

    #[test]
    fn csv_layout() {
        let r = InequalityReport::new("x", Relation::AtMost, 1.0, 2.0, 0.0, json!({}));
        assert_eq!(
            reports_csv(&[r]),
            "formula_id,lhs,rhs,slack,holds\nx,1.0000000000000000,2.0000000000000000,1.0000000000000000,true\n"
        );
    }
}
