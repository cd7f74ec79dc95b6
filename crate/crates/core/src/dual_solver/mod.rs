//! Capacity by minimizing the discretized dual action functional, with
//! reconstruction of a minimizing chord on the boundary.
//!
//! The capacity is `(min I_p)^(2/p)` over admissible paths of action one.
//! Both `I_p^(2/p)` and the action are 2-homogeneous, so the solver works
//! with their ratio and never enforces the normalization as a constraint.

mod engine;
mod space;

pub use space::ConstraintSpace;

use crate::convex_bodies::{sample_directions, BodyError, BodyExpr};
use crate::optim::bisect;
use crate::symplectic_core::{action_of_samples, off_rnk_residual, DiscretePath, Frame, Subspace, SymplecticError};
use engine::{check_config, positions_to_start, reversed, starting_paths, Problem, Run};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Frame(#[from] SymplecticError),
    #[error(transparent)]
    Body(#[from] BodyError),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("no starting path has positive action")]
    DegenerateStart,
    #[error("no convergence within the iteration budget; best upper bound {best_upper_bound}")]
    NoConvergence { best_upper_bound: f64, partial: Box<SolveResult> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Linearize the action and maximize over the dual unit ball, with a
    /// line search. Converges in tens of iterations on smooth bodies.
    DualPower,
    /// Projected subgradient descent on the ratio with Polyak steps.
    Subgradient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    /// Number of path segments `N`.
    pub segments: usize,
    pub max_iters: usize,
    pub tol_rel: f64,
    /// Random starts in addition to one structured start per plane.
    pub restarts: usize,
    pub seed: u64,
    /// Dual exponent.
    pub p: f64,
    pub method: Method,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            segments: 256,
            max_iters: 4000,
            tol_rel: 1e-3,
            restarts: 2,
            seed: 0,
            p: 2.0,
            method: Method::DualPower,
        }
    }
}

/// A chord on the boundary that starts and ends on `R^{n,k}` on one leaf.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Chord {
    pub frame: Frame,
    pub path: DiscretePath,
    pub action: f64,
    pub return_time: f64,
    pub residuals: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    pub method: Method,
    pub iterations: usize,
    pub converged: bool,
    /// Capacity estimate from each start, in start order.
    pub per_start: Vec<f64>,
    pub stationarity: f64,
    /// Interior point of the body on `R^{n,k}` used as gauge centre.
    pub interior_point: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveResult {
    pub capacity: f64,
    /// Minimizing path in the admissible class, scaled to action one.
    pub minimizer: DiscretePath,
    pub carrier: Chord,
    /// Multiplier of the sum constraint, a vector in `R^{n,k}`.
    pub multiplier_a0: Vec<f64>,
    pub diagnostics: Diagnostics,
}

/// The discrete admissible class as an explicit subspace.
pub fn build_constraint_space(frame: Frame, segments: usize) -> Result<ConstraintSpace, SolveError> {
    ConstraintSpace::build(frame, segments)
}

/// Dual functional `1/N sum (H*(-J N (x_{j+1} - x_j)))^(p/2)` of a path, and
/// its gradient with respect to the samples.
pub fn objective(body: &BodyExpr, path: &DiscretePath, p: f64) -> Result<(f64, Vec<Vec<f64>>), SolveError> {
    if body.dim() != path.frame.dim() {
        return Err(BodyError::DimensionMismatch { expected: path.frame.dim(), got: body.dim() }.into());
    }
    if !body.contains_interior(&vec![0.0; body.dim()])? {
        return Err(BodyError::OriginNotInterior.into());
    }
    let n_seg = path.segments();
    let d = path.frame.dim();
    let problem = Problem::new(body, path.frame, vec![0.0; d], n_seg, p);
    let w = engine::velocities(&path.samples);
    let mut gw = vec![0.0; w.len()];
    let value = problem.dual(&w, Some(&mut gw))?;
    // w_j = -J N (x_{j+1} - x_j), so dI/dx_{j+1} += N J g_j, dI/dx_j -= N J g_j
    let n = d / 2;
    let mut grad = vec![vec![0.0; d]; n_seg + 1];
    for (j, gj) in gw.chunks(d).enumerate() {
        for i in 0..n {
            let jq = -gj[n + i] * n_seg as f64;
            let jp = gj[i] * n_seg as f64;
            grad[j + 1][i] += jq;
            grad[j + 1][n + i] += jp;
            grad[j][i] -= jq;
            grad[j][n + i] -= jp;
        }
    }
    Ok((value, grad))
}

/// A point of `body ∩ R^{n,k}` deep inside the body: the centre of the
/// largest ball inside a polyhedral outer approximation, restricted to the
/// subspace.
pub fn interior_point(body: &BodyExpr, frame: &Frame) -> Result<Vec<f64>, SolveError> {
    use minilp::{ComparisonOp, OptimizationDirection, Problem as Lp};
    let d = frame.dim();
    let idx = frame.indices(Subspace::Rnk);
    let mut lp = Lp::new(OptimizationDirection::Maximize);
    let z: Vec<_> = idx.iter().map(|_| lp.add_var(0.0, (f64::NEG_INFINITY, f64::INFINITY))).collect();
    let s = lp.add_var(1.0, (f64::NEG_INFINITY, f64::INFINITY));
    let mut scale: f64 = 0.0;
    for u in sample_directions(d, 40 * d, 0x1e7) {
        let h = body.support(&u)?.value;
        scale = scale.max(h.abs());
        let mut row: Vec<_> = z.iter().zip(&idx).map(|(v, &c)| (*v, u[c])).collect();
        row.push((s, 1.0));
        lp.add_constraint(&row[..], ComparisonOp::Le, h);
    }
    let sol = lp.solve().map_err(|e| SolveError::Domain(format!("interior point search failed: {e}")))?;
    if sol[s] <= 1e-9 * scale.max(1.0) {
        return Err(SolveError::Domain("the body does not meet R^{n,k} in its interior".into()));
    }
    let mut out = vec![0.0; d];
    for (v, &c) in z.iter().zip(&idx) {
        out[c] = sol[*v];
    }
    if !body.contains_interior(&out)? {
        return Err(SolveError::Domain("no interior point of the body found on R^{n,k}".into()));
    }
    Ok(out)
}

fn prepare<'a>(body: &'a BodyExpr, frame: &Frame, cfg: &SolveConfig) -> Result<Problem<'a>, SolveError> {
    check_config(cfg)?;
    if body.dim() != frame.dim() {
        return Err(BodyError::DimensionMismatch { expected: frame.dim(), got: body.dim() }.into());
    }
    body.validate()?;
    let z0 = interior_point(body, frame)?;
    Ok(Problem::new(body, *frame, z0, cfg.segments, cfg.p))
}

/// Capacity of `body` relative to `R^{n,k}`.
pub fn solve(body: &BodyExpr, frame: &Frame, cfg: &SolveConfig) -> Result<SolveResult, SolveError> {
    let problem = prepare(body, frame, cfg)?;
    let starts = starting_paths(frame, cfg.segments, cfg.restarts, cfg.seed);
    run_starts(&problem, starts, cfg)
}

/// Solve from a given path, resampled to `cfg.segments` and projected onto
/// the admissible class.
pub fn solve_from(
    body: &BodyExpr,
    frame: &Frame,
    cfg: &SolveConfig,
    start: &DiscretePath,
) -> Result<SolveResult, SolveError> {
    let problem = prepare(body, frame, cfg)?;
    let w = positions_to_start(&start.samples, cfg.segments);
    run_starts(&problem, vec![w], cfg)
}

fn run_starts(problem: &Problem, starts: Vec<Vec<f64>>, cfg: &SolveConfig) -> Result<SolveResult, SolveError> {
    let d = problem.dim();
    let oriented: Vec<Vec<f64>> = starts
        .into_iter()
        .filter_map(|mut w| {
            problem.project(&mut w);
            let a = problem.action(&w);
            let norm2: f64 = w.iter().map(|x| x * x).sum::<f64>() / (problem.segments * problem.segments) as f64;
            if a.abs() <= 1e-12 * norm2 {
                None
            } else if a < 0.0 {
                Some(reversed(&w, d))
            } else {
                Some(w)
            }
        })
        .collect();
    if oriented.is_empty() {
        return Err(SolveError::DegenerateStart);
    }
    let runs: Vec<Result<Run, BodyError>> = oriented.into_par_iter().map(|w| problem.run(w, cfg)).collect();
    let runs: Vec<Run> = runs.into_iter().collect::<Result<_, _>>()?;
    let per_start: Vec<f64> = runs.iter().map(|r| 1.0 / r.ratio).collect();
    let best = runs
        .into_iter()
        .enumerate()
        .max_by(|(i, a), (j, b)| a.ratio.total_cmp(&b.ratio).then(j.cmp(i)))
        .map(|(_, r)| r)
        .ok_or(SolveError::DegenerateStart)?;
    if !(best.ratio > 0.0) {
        return Err(SolveError::DegenerateStart);
    }
    let result = assemble(problem, best, per_start, cfg)?;
    if !result.diagnostics.converged {
        return Err(SolveError::NoConvergence { best_upper_bound: result.capacity, partial: Box::new(result) });
    }
    Ok(result)
}

fn assemble(problem: &Problem, run: Run, per_start: Vec<f64>, cfg: &SolveConfig) -> Result<SolveResult, SolveError> {
    let frame = problem.frame;
    let d = problem.dim();
    let capacity = 1.0 / run.ratio;
    let stationarity = problem.stationarity(&run.w)?;
    let act = problem.action(&run.w);
    let unit: Vec<f64> = run.w.iter().map(|x| x / act.sqrt()).collect();
    let minimizer = DiscretePath::new(frame, problem.positions(&unit))?;

    let xs = problem.positions(&run.w);
    let big_n = problem.segments;
    let rnk = frame.indices(Subspace::Rnk);
    let mut b: Vec<f64> = xs[0].iter().zip(&xs[big_n]).map(|(a, c)| 0.5 * (a + c)).collect();
    for (slot, &c) in rnk.iter().enumerate() {
        b[c] += run.multiplier[slot];
    }
    let mut g = vec![0.0; d];
    let mut carrier: Vec<Vec<f64>> = xs
        .iter()
        .map(|x| {
            let v: Vec<f64> = x.iter().zip(&b).map(|(a, c)| a - c).collect();
            let j = problem.gauge(&v, &mut g)?;
            Ok(v.iter().map(|t| t / j).collect())
        })
        .collect::<Result<_, BodyError>>()?;

    let mut residuals = BTreeMap::new();
    let off_leaf = |a: &[f64], c: &[f64]| -> f64 {
        a.iter()
            .zip(c)
            .enumerate()
            .filter(|(i, _)| !frame.in_subspace(Subspace::V0, *i))
            .map(|(_, (x, y))| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    };
    residuals.insert("leaf_offset_raw".to_string(), off_leaf(&carrier[0], &carrier[big_n]));
    snap_endpoint(problem, &mut carrier)?;
    residuals.insert("leaf_offset".to_string(), off_leaf(&carrier[0], &carrier[big_n]));

    let mut on_boundary: f64 = 0.0;
    for x in &carrier {
        on_boundary = on_boundary.max((problem.gauge(x, &mut g)? - 1.0).abs());
    }
    residuals.insert("on_boundary".to_string(), on_boundary);
    let mut return_time = 0.0;
    for pair in carrier.windows(2) {
        let mid: Vec<f64> = pair[0].iter().zip(&pair[1]).map(|(a, c)| 0.5 * (a + c)).collect();
        problem.gauge(&mid, &mut g)?;
        let speed = 2.0 * g.iter().map(|x| x * x).sum::<f64>().sqrt();
        let step = pair[0].iter().zip(&pair[1]).map(|(a, c)| (a - c) * (a - c)).sum::<f64>().sqrt();
        return_time += step / speed;
    }
    for x in carrier.iter_mut() {
        x.iter_mut().zip(&problem.z0).for_each(|(a, z)| *a += z);
    }
    residuals.insert("endpoint_start".to_string(), off_rnk_residual(&frame, &carrier[0]));
    residuals.insert("endpoint_end".to_string(), off_rnk_residual(&frame, &carrier[big_n]));
    let carrier_action = action_of_samples(&carrier);
    residuals.insert("action_gap".to_string(), (carrier_action - capacity).abs() / capacity);
    residuals.insert("stationarity".to_string(), stationarity);

    let mu = cfg.p * problem.dual(&run.w, None)? / (2.0 * act);
    let multiplier_a0: Vec<f64> = b.iter().map(|x| -0.5 * cfg.p * mu * x).collect();
    Ok(SolveResult {
        capacity,
        minimizer,
        carrier: Chord {
            frame,
            path: DiscretePath::new(frame, carrier)?,
            action: carrier_action,
            return_time,
            residuals,
        },
        multiplier_a0,
        diagnostics: Diagnostics {
            method: cfg.method,
            iterations: run.iterations,
            converged: run.converged,
            per_start,
            stationarity,
            interior_point: problem.z0.clone(),
        },
    })
}

/// Move the last carrier sample onto the leaf of the first: along the `V0`
/// line through the start for `k < n`, onto the start itself for `k = n`.
fn snap_endpoint(problem: &Problem, carrier: &mut [Vec<f64>]) -> Result<(), BodyError> {
    let frame = problem.frame;
    let last = carrier.len() - 1;
    if frame.is_periodic() {
        carrier[last] = carrier[0].clone();
        return Ok(());
    }
    let start = carrier[0].clone();
    let mut dir: Vec<f64> = carrier[last].iter().zip(&start).map(|(a, b)| a - b).collect();
    for (i, x) in dir.iter_mut().enumerate() {
        if !frame.in_subspace(Subspace::V0, i) {
            *x = 0.0;
        }
    }
    if dir.iter().all(|x| x.abs() < 1e-300) {
        return Ok(());
    }
    let mut g = vec![0.0; frame.dim()];
    let mut excess = |t: f64| -> f64 {
        let x: Vec<f64> = start.iter().zip(&dir).map(|(a, b)| a + t * b).collect();
        problem.gauge(&x, &mut g).map(|j| j - 1.0).unwrap_or(f64::INFINITY)
    };
    let mut lo = 1.0;
    let mut tries = 0;
    while excess(lo) >= 0.0 && tries < 60 {
        lo *= 0.5;
        tries += 1;
    }
    let mut hi = 1.0;
    while excess(hi) < 0.0 {
        hi *= 2.0;
    }
    if tries == 60 {
        return Ok(());
    }
    let t = bisect(excess, lo, hi, 200);
    carrier[last] = start.iter().zip(&dir).map(|(a, b)| a + t * b).collect();
    Ok(())
}

/// Run the solver at each `p`; the returned capacities should agree.
pub fn capacity_p_consistency(
    body: &BodyExpr,
    frame: &Frame,
    cfg: &SolveConfig,
    p_list: &[f64],
) -> Result<Vec<(f64, f64)>, SolveError> {
    p_list
        .iter()
        .map(|&p| {
            let c = SolveConfig { p, ..cfg.clone() };
            solve(body, frame, &c).map(|r| (p, r.capacity))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Refinement {
    pub levels: Vec<SolveResult>,
    /// Richardson extrapolation of the last two levels under `O(N^-2)` error.
    pub extrapolated: f64,
    pub error_estimate: f64,
}

/// Solve along an increasing ladder of segment counts, warm-starting each
/// level from the previous minimizer.
pub fn refine(body: &BodyExpr, frame: &Frame, cfg: &SolveConfig, ladder: &[usize]) -> Result<Refinement, SolveError> {
    if ladder.is_empty() || ladder.windows(2).any(|w| w[1] <= w[0]) {
        return Err(SolveError::InvalidConfig("ladder must be nonempty and increasing".into()));
    }
    let mut levels: Vec<SolveResult> = Vec::new();
    for &n in ladder {
        let c = SolveConfig { segments: n, ..cfg.clone() };
        let r = match levels.last() {
            None => solve(body, frame, &c)?,
            Some(prev) => solve_from(body, frame, &c, &prev.minimizer)?,
        };
        levels.push(r);
    }
    let last = levels[levels.len() - 1].capacity;
    let (extrapolated, error_estimate) = if levels.len() >= 2 {
        let prev = levels[levels.len() - 2].capacity;
        let r = ladder[ladder.len() - 1] as f64 / ladder[ladder.len() - 2] as f64;
        let ext = (r * r * last - prev) / (r * r - 1.0);
        (ext, (ext - last).abs())
    } else {
        (last, f64::NAN)
    };
    Ok(Refinement { levels, extrapolated, error_estimate })
}

#[cfg(test)]
mod tests;
