//! Acceptance suite: one line per criterion, nonzero exit on any failure.

use cochord::bounds_inequalities::{inequality_corpus, run_corpus, viterbo_ratio, CapacityOptions, SOLVER_REL_TOL};
use cochord::chord_flow::{ball_chord, level_capacity, min_chord_return_time, return_spectrum, QuadraticSurface};
use cochord::closed_forms::{
    box_capacity, ellipse_disc_example, ellipsoid_capacity, example_bodies_catalog, offcenter_ball_capacity,
};
use cochord::convex_bodies::{BodyExpr, VolumeMode};
use cochord::dual_solver::{build_constraint_space, capacity_p_consistency, solve, SolveConfig};
use cochord::symplectic_core::{action, project, DiscretePath, Frame, Subspace};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::f64::consts::PI;
use std::time::Instant;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn frame(n: usize, k: usize) -> Frame {
    Frame::new(n, k).unwrap()
}

fn cfg(segments: usize) -> SolveConfig {
    SolveConfig { segments, ..Default::default() }
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

fn capacity(body: &BodyExpr, f: &Frame, c: &SolveConfig) -> Result<f64, String> {
    solve(body, f, c).map(|r| r.capacity).map_err(|e| e.to_string())
}

/// Collect per-case errors; the first few go into the failure message.
fn verdict(failures: Vec<String>, cases: usize, summary: String) -> Outcome {
    if failures.is_empty() {
        Ok(format!("{cases} cases; {summary}"))
    } else {
        Err(format!("{}/{cases} failed: {}", failures.len(), failures.iter().take(3).cloned().collect::<Vec<_>>().join("; ")))
    }
}

fn ball_normalization() -> Outcome {
    let (mut fails, mut worst, mut slowest, mut cases) = (Vec::new(), 0.0f64, 0.0f64, 0);
    for n in 1..=3 {
        for k in 0..n {
            cases += 1;
            let t = Instant::now();
            let c = capacity(&BodyExpr::unit_ball(2 * n), &frame(n, k), &cfg(512))?;
            let secs = t.elapsed().as_secs_f64();
            let e = rel(c, PI / 2.0);
            worst = worst.max(e);
            slowest = slowest.max(secs);
            if e > 0.02 || secs > 30.0 {
                fails.push(format!("n={n} k={k}: {c:.6} in {secs:.1}s"));
            }
        }
    }
    verdict(fails, cases, format!("max rel err {worst:.2e}, slowest {slowest:.1}s"))
}

fn ellipsoid_formula() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let cases: Vec<(Frame, Vec<f64>)> = (0..20)
        .map(|_| {
            let n = rng.gen_range(1..=3);
            let k = rng.gen_range(0..=n);
            (frame(n, k), (0..n).map(|_| rng.gen_range(0.4..2.0)).collect())
        })
        .collect();
    let errs: Vec<Result<f64, String>> = cases
        .par_iter()
        .map(|(f, r)| {
            let exact = ellipsoid_capacity(f, r).map_err(|e| e.to_string())?.value;
            let c = capacity(&BodyExpr::Ellipsoid { radii: r.clone() }, f, &cfg(256))?;
            let e = rel(c, exact);
            if e > 0.02 { Err(format!("{r:?} k={}: {c:.5} vs {exact:.5}", f.k())) } else { Ok(e) }
        })
        .collect();
    let worst = errs.iter().filter_map(|e| e.as_ref().ok()).fold(0.0f64, |a, b| a.max(*b));
    verdict(errs.into_iter().filter_map(Result::err).collect(), cases.len(), format!("max rel err {worst:.2e}"))
}

fn offcenter_ball() -> Outcome {
    let mut fails = Vec::new();
    let (mut worst, mut chord_gap, mut cases) = (0.0f64, 0.0f64, 0);
    for n in 1..=2 {
        for k in 0..n {
            for a in [0.0, 0.5, -0.5] {
                cases += 1;
                let f = frame(n, k);
                let exact = offcenter_ball_capacity(&f, a, 1.0).map_err(|e| e.to_string())?.value;
                let c = capacity(&BodyExpr::offcenter_ball(2 * n, a, 1.0).unwrap(), &f, &cfg(256))?;
                let chord = ball_chord(&f, a, 1.0).map_err(|e| e.to_string())?;
                let gap = (chord.action - exact).abs();
                worst = worst.max(rel(c, exact));
                chord_gap = chord_gap.max(gap);
                if rel(c, exact) > 0.02 || gap > 1e-10 {
                    fails.push(format!("n={n} k={k} a={a}: solver {c:.5}, chord {:.12}, exact {exact:.12}", chord.action));
                }
            }
        }
    }
    verdict(fails, cases, format!("solver max rel err {worst:.2e}, chord gap {chord_gap:.1e}"))
}

fn box_formula() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let cases: Vec<(Frame, Vec<[f64; 4]>)> = (0..20)
        .map(|_| {
            let n = rng.gen_range(1..=3);
            let k = rng.gen_range(0..=n);
            let iv = (0..n)
                .map(|_| {
                    let a = rng.gen_range(-1.0..0.5);
                    [a, a + rng.gen_range(0.5..2.0), rng.gen_range(0.3..1.5), rng.gen_range(0.3..1.5)]
                })
                .collect();
            (frame(n, k), iv)
        })
        .collect();
    let errs: Vec<Result<f64, String>> = cases
        .par_iter()
        .map(|(f, iv)| {
            let exact = box_capacity(f, iv).map_err(|e| e.to_string())?.value;
            let c = capacity(&BodyExpr::Box { intervals: iv.clone() }, f, &cfg(256))?;
            let e = rel(c, exact);
            if e > 0.02 { Err(format!("{iv:?} k={}: {c:.5} vs {exact:.5}", f.k())) } else { Ok(e) }
        })
        .collect();
    let worst = errs.iter().filter_map(|e| e.as_ref().ok()).fold(0.0f64, |a, b| a.max(*b));
    verdict(errs.into_iter().filter_map(Result::err).collect(), cases.len(), format!("max rel err {worst:.2e}"))
}

fn lagrangian_product() -> Outcome {
    let cube = BodyExpr::cube(2);
    let body = BodyExpr::LagrangianProduct { q: Box::new(cube.clone()), p: Box::new(BodyExpr::Polar(Box::new(cube))) };
    let mut fails = Vec::new();
    let mut got = Vec::new();
    for (k, want) in [(0, 2.0), (1, 2.0), (2, 4.0)] {
        let c = capacity(&body, &frame(2, k), &cfg(512))?;
        got.push(format!("k={k}: {c:.4}"));
        if rel(c, want) > 0.03 {
            fails.push(format!("k={k}: {c:.5} vs {want}"));
        }
    }
    verdict(fails, 3, got.join(", "))
}

fn worked_example() -> Outcome {
    let body = ellipse_disc_example();
    let mut fails = Vec::new();
    let mut got = Vec::new();
    for (k, want) in [(0, 2.0), (2, 4.0)] {
        let c = capacity(&body, &frame(2, k), &cfg(512))?;
        got.push(format!("k={k}: {c:.4}"));
        if rel(c, want) > 0.03 {
            fails.push(format!("k={k}: {c:.5} vs {want}"));
        }
    }
    let c = capacity(&body, &frame(2, 1), &cfg(512))?;
    got.push(format!("k=1: {c:.4} (bound pi)"));
    if c < PI * (1.0 - SOLVER_REL_TOL) {
        fails.push(format!("k=1: {c:.5} < pi"));
    }
    verdict(fails, 3, got.join(", "))
}

fn flow_cross_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let cases: Vec<(Frame, Vec<f64>)> = (0..10)
        .map(|_| {
            let n = rng.gen_range(1..=3);
            let k = rng.gen_range(0..=n);
            (frame(n, k), (0..n).map(|_| rng.gen_range(0.5..2.0)).collect())
        })
        .collect();
    let errs: Vec<Result<f64, String>> = cases
        .par_iter()
        .map(|(f, r)| {
            let top = r.iter().map(|x| PI * x * x).fold(0.0, f64::max);
            let spec = return_spectrum(f, r, top).map_err(|e| e.to_string())?;
            let c = capacity(&BodyExpr::Ellipsoid { radii: r.clone() }, f, &cfg(256))?;
            let e = rel(c, spec[0].action);
            if e > SOLVER_REL_TOL { Err(format!("{r:?} k={}: {c:.5} vs {:.5}", f.k(), spec[0].action)) } else { Ok(e) }
        })
        .collect();
    let worst = errs.iter().filter_map(|e| e.as_ref().ok()).fold(0.0f64, |a, b| a.max(*b));
    verdict(errs.into_iter().filter_map(Result::err).collect(), cases.len(), format!("max rel err {worst:.2e}"))
}

fn p_independence() -> Outcome {
    let cases = [
        ("disc", BodyExpr::unit_ball(2), frame(1, 0)),
        ("square", BodyExpr::boxes(vec![[-1.0, 1.0, 1.0, 1.0]]).unwrap(), frame(1, 0)),
        ("E(1,2)", BodyExpr::Ellipsoid { radii: vec![1.0, 2.0] }, frame(2, 1)),
    ];
    let mut fails = Vec::new();
    let mut spread = Vec::new();
    for (label, body, f) in &cases {
        let vals = capacity_p_consistency(body, f, &cfg(256), &[2.0, 3.0, 4.0]).map_err(|e| e.to_string())?;
        let (lo, hi) = vals.iter().fold((f64::MAX, f64::MIN), |(l, h), (_, c)| (l.min(*c), h.max(*c)));
        let s = (hi - lo) / lo;
        spread.push(format!("{label} {s:.1e}"));
        if s > 2.0 * SOLVER_REL_TOL {
            fails.push(format!("{label}: {vals:?}"));
        }
    }
    verdict(fails, cases.len(), format!("relative spread {}", spread.join(", ")))
}

fn inequality_corpus_check() -> Outcome {
    let specs = inequality_corpus();
    let mut fails = Vec::new();
    let mut count = 0;
    for (spec, out) in specs.iter().zip(run_corpus(&specs, &CapacityOptions::default())) {
        match out {
            Ok(reps) => {
                for r in reps {
                    count += 1;
                    if !r.holds {
                        fails.push(format!("{} lhs {:.5} rhs {:.5} slack {:.2e}", r.formula_id, r.lhs, r.rhs, r.slack));
                    }
                }
            }
            Err(e) => fails.push(format!("{spec:?}: {e}")),
        }
    }
    if count < 50 {
        fails.push(format!("only {count} instances"));
    }
    verdict(fails, count, "zero violations".into())
}

fn return_time_derivative() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut fails = Vec::new();
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let n = rng.gen_range(1..=3);
        let f = frame(n, rng.gen_range(0..=n));
        let radii: Vec<f64> = (0..n).map(|_| rng.gen_range(0.3..2.0)).collect();
        let s = QuadraticSurface::ellipsoid(&radii).map_err(|e| e.to_string())?;
        let e = rng.gen_range(0.5..3.0);
        let h = 1e-2 * e;
        let fd = (level_capacity(&s, e + h, &f).map_err(|x| x.to_string())?
            - level_capacity(&s, e - h, &f).map_err(|x| x.to_string())?)
            / (2.0 * h);
        let t = min_chord_return_time(&s, e, &f).map_err(|x| x.to_string())?;
        worst = worst.max((fd - t).abs());
        if (fd - t).abs() > 1e-6 {
            fails.push(format!("{radii:?} e={e}: {fd} vs {t}"));
        }
    }
    verdict(fails, 20, format!("max gap {worst:.1e}"))
}

fn viterbo_ratios() -> Outcome {
    let opts = CapacityOptions::default();
    let mut fails = Vec::new();
    for (label, body, f) in [
        ("E(1,sqrt2)", BodyExpr::Ellipsoid { radii: vec![1.0, 2f64.sqrt()] }, frame(2, 1)),
        ("disc", BodyExpr::unit_ball(2), frame(1, 0)),
    ] {
        let r = viterbo_ratio(&body, &f, VolumeMode::Exact, &opts).map_err(|e| e.to_string())?;
        if (r.lhs - 1.0).abs() > 0.01 {
            fails.push(format!("{label}: ratio {}", r.lhs));
        }
    }
    let entries: Vec<_> = example_bodies_catalog().into_iter().filter(|e| e.frame.k() + 1 == e.frame.n()).collect();
    let out: Vec<Result<f64, String>> = entries
        .par_iter()
        .map(|e| {
            let r = viterbo_ratio(&e.body, &e.frame, VolumeMode::Exact, &opts).map_err(|x| format!("{}: {x}", e.label))?;
            if r.holds { Ok(r.lhs) } else { Err(format!("{}: ratio {:.4}", e.label, r.lhs)) }
        })
        .collect();
    let top = out.iter().filter_map(|r| r.as_ref().ok()).fold(0.0f64, |a, b| a.max(*b));
    fails.extend(out.into_iter().filter_map(Result::err));
    verdict(fails, 2 + entries.len(), format!("largest catalog ratio {top:.4}"))
}

/// Largest `<xi, w> - j(xi)^2` over a square grid, refined twice around the
/// best node.
fn grid_conjugate(body: &BodyExpr, w: &[f64]) -> f64 {
    let eval = |x: f64, y: f64| {
        let j = body.gauge(&[x, y]).unwrap().value;
        x * w[0] + y * w[1] - j * j
    };
    let (mut cx, mut cy, mut half) = (0.0, 0.0, 6.0);
    let mut best = f64::MIN;
    for _ in 0..4 {
        let steps = 200;
        let (mut bx, mut by) = (cx, cy);
        for i in 0..=steps {
            for j in 0..=steps {
                let x = cx - half + 2.0 * half * i as f64 / steps as f64;
                let y = cy - half + 2.0 * half * j as f64 / steps as f64;
                let v = eval(x, y);
                if v > best {
                    best = v;
                    bx = x;
                    by = y;
                }
            }
        }
        cx = bx;
        cy = by;
        half *= 0.05;
    }
    best
}

fn property_suites() -> Outcome {
    let mut fails = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(12);

    // action homogeneity and translation invariance on constrained paths
    for _ in 0..200 {
        let n = rng.gen_range(1..=3);
        let f = frame(n, rng.gen_range(0..=n));
        let m = rng.gen_range(2..20);
        let mut samples: Vec<Vec<f64>> = (0..=m).map(|_| (0..2 * n).map(|_| rng.gen_range(-3.0..3.0)).collect()).collect();
        samples[0] = project(&f, Subspace::Rnk, &samples[0]).unwrap();
        let step: Vec<f64> = (0..2 * n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let step = project(&f, Subspace::V0, &step).unwrap();
        samples[m] = samples[0].iter().zip(&step).map(|(a, b)| a + b).collect();
        let b: Vec<f64> = (0..2 * n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let b = project(&f, Subspace::Rnk, &b).unwrap();
        let path = DiscretePath::new(f, samples).unwrap();
        let a = action(&path);
        let lam = rng.gen_range(-4.0..4.0);
        if (action(&path.scaled(lam)) - lam * lam * a).abs() > 1e-10 * (1.0 + a.abs()) * (1.0 + lam * lam) {
            fails.push("action homogeneity".to_string());
        }
        if (action(&path.translated(&b)) - a).abs() > 1e-10 * 100.0 {
            fails.push("action translation".to_string());
        }
    }

    // gauge-support duality
    let bodies = [
        BodyExpr::Ellipsoid { radii: vec![0.7, 1.9] },
        BodyExpr::Polydisc { radii: vec![1.0, 0.6] },
        BodyExpr::boxes(vec![[-1.0, 0.5, 0.4, 1.2], [-0.3, 2.0, 1.0, 0.7]]).unwrap(),
        BodyExpr::LagrangianProduct { q: Box::new(BodyExpr::cube(2)), p: Box::new(BodyExpr::Polar(Box::new(BodyExpr::cube(2)))) },
        BodyExpr::psum(2.0, BodyExpr::cube(4), BodyExpr::unit_ball(4)).unwrap(),
    ];
    for body in &bodies {
        let polar = BodyExpr::Polar(Box::new(body.clone()));
        for _ in 0..50 {
            let z: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let w: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let j = body.gauge(&z).unwrap().value;
            let hp = polar.support(&z).unwrap().value;
            if (j - hp).abs() > 1e-8 * (1.0 + j) {
                fails.push(format!("j_D = h_polar: {j} vs {hp}"));
            }
            let zw: f64 = z.iter().zip(&w).map(|(a, b)| a * b).sum();
            if zw > j * body.support(&w).unwrap().value + 1e-9 {
                fails.push("gauge-support inequality".to_string());
            }
        }
    }

    // Legendre dual against a grid conjugate in the plane
    let planar = [
        BodyExpr::unit_ball(2),
        BodyExpr::Ellipsoid { radii: vec![1.5] },
        BodyExpr::boxes(vec![[-0.5, 1.0, 0.7, 1.1]]).unwrap(),
        BodyExpr::vertex_polytope(vec![vec![1.0, 0.0], vec![-0.5, 1.0], vec![-0.5, -1.0]]).unwrap(),
    ];
    let mut legendre_gap = 0.0f64;
    for body in &planar {
        for w in [[1.0, 0.0], [0.3, -1.2], [-1.5, 0.8]] {
            let exact = body.legendre_dual(&w).unwrap().value;
            let brute = grid_conjugate(body, &w);
            legendre_gap = legendre_gap.max((exact - brute).abs());
        }
    }
    if legendre_gap > 1e-4 {
        fails.push(format!("Legendre gap {legendre_gap:.1e}"));
    }

    // constraint-space dimensions
    for n in 1..=3 {
        for k in 0..=n {
            let s = build_constraint_space(frame(n, k), 32).unwrap();
            if s.codimension() != 3 * n + k || s.basis_residual(&s.basis()) > 1e-12 {
                fails.push(format!("constraint space n={n} k={k}: codim {}", s.codimension()));
            }
        }
    }

    // conformality of solver output
    let body = BodyExpr::boxes(vec![[-1.0, 0.5, 0.7, 1.0], [-0.5, 1.0, 1.0, 0.8]]).unwrap();
    let f = frame(2, 1);
    let base = capacity(&body, &f, &cfg(256))?;
    for lam in [0.5, 2.0] {
        let c = capacity(&BodyExpr::scale(lam, body.clone()).unwrap(), &f, &cfg(256))?;
        if rel(c, lam * lam * base) > 2.0 * SOLVER_REL_TOL {
            fails.push(format!("conformality lambda={lam}: {c} vs {}", lam * lam * base));
        }
    }
    fails.dedup();
    verdict(fails, 5, format!("Legendre gap {legendre_gap:.1e}"))
}

fn main() {
    let criteria: [Criterion; 12] = [
        ("ball normalization", ball_normalization),
        ("ellipsoid formula", ellipsoid_formula),
        ("off-centre ball", offcenter_ball),
        ("box formula", box_formula),
        ("Lagrangian product", lagrangian_product),
        ("ellipse x disc example", worked_example),
        ("flow vs variational", flow_cross_oracle),
        ("p-independence", p_independence),
        ("inequality corpus", inequality_corpus_check),
        ("return-time derivative", return_time_derivative),
        ("volume ratios", viterbo_ratios),
        ("property suites", property_suites),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(msg) => println!("[PASS] {:>2} {name}: {msg} ({secs:.1}s)", i + 1),
            Err(msg) => {
                failed += 1;
                println!("[FAIL] {:>2} {name}: {msg} ({secs:.1}s)", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
