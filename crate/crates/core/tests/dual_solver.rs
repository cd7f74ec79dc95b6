use cochord::closed_forms::{box_capacity, ellipsoid_capacity};
use cochord::convex_bodies::BodyExpr;
use cochord::dual_solver::{
    build_constraint_space, capacity_p_consistency, objective, refine, solve, solve_from, Method, SolveConfig,
    SolveError,
};
use cochord::symplectic_core::{action, DiscretePath, Frame, Subspace};
use std::f64::consts::PI;

fn cfg(segments: usize) -> SolveConfig {
    SolveConfig { segments, ..Default::default() }
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

fn circle(frame: Frame, segments: usize, turns: f64) -> DiscretePath {
    let n = frame.n();
    let samples = (0..=segments)
        .map(|j| {
            let t = 2.0 * PI * turns * j as f64 / segments as f64;
            let mut x = vec![0.0; 2 * n];
            x[0] = t.cos();
            x[n] = t.sin();
            x
        })
        .collect();
    DiscretePath::new(frame, samples).unwrap()
}

#[test]
fn constraint_space_dimensions() {
    // rank of the constraint matrix, counted independently
    for (n, k) in [(1, 0), (1, 1), (2, 0), (2, 1), (2, 2), (3, 1)] {
        let f = Frame::new(n, k).unwrap();
        let s = build_constraint_space(f, 16).unwrap();
        let endpoint_p = 2 * (n - k);
        let periodic = 2 * k;
        let mean = n + k;
        assert_eq!(s.codimension(), endpoint_p + periodic + mean, "n={n} k={k}");
        assert_eq!(s.dimension(), 17 * 2 * n - s.codimension());
        let basis = s.basis();
        assert_eq!(basis.ncols(), s.dimension());
        assert!(s.basis_residual(&basis) <= 1e-12);
        let gram = basis.transpose() * &basis;
        let eye = nalgebra_identity(gram.nrows());
        assert!((gram - eye).amax() < 1e-10);
    }
    let s = build_constraint_space(Frame::new(1, 1).unwrap(), 16).unwrap();
    assert_eq!(s.dimension(), 2 * 16 - 2);
    assert!(build_constraint_space(Frame::new(1, 0).unwrap(), 15).is_err());
}

fn nalgebra_identity(m: usize) -> nalgebra::DMatrix<f64> {
    nalgebra::DMatrix::identity(m, m)
}

#[test]
fn basis_paths_have_mean_in_characteristic_directions() {
    let f = Frame::new(2, 1).unwrap();
    let s = build_constraint_space(f, 16).unwrap();
    let b = s.basis();
    for c in 0..b.ncols() {
        let samples: Vec<Vec<f64>> = b.column(c).as_slice().chunks(4).map(|x| x.to_vec()).collect();
        let p = DiscretePath::new(f, samples).unwrap();
        let mean = p.trapezoid_mean();
        for i in f.indices(Subspace::Rnk) {
            assert!(mean[i].abs() < 1e-12);
        }
    }
}

#[test]
fn objective_examples() {
    let disc = BodyExpr::unit_ball(2);
    let f = Frame::new(1, 1).unwrap();
    let constant = DiscretePath::new(f, vec![vec![0.3, -0.1]; 33]).unwrap();
    assert_eq!(objective(&disc, &constant, 2.0).unwrap().0, 0.0);
    // polygon speed N * 2 sin(pi / N) tends to 2 pi
    let n = 4096;
    let c = circle(f, n, 1.0);
    let (v, _) = objective(&disc, &c, 2.0).unwrap();
    let speed = n as f64 * 2.0 * (PI / n as f64).sin();
    assert!((v - speed * speed / 4.0).abs() < 1e-9);
    assert!((v - PI * PI).abs() < 1e-5);
    let (v2, _) = objective(&disc, &c.scaled(2.0), 2.0).unwrap();
    assert!((v2 / v - 4.0).abs() < 1e-12);
    let (v4, _) = objective(&disc, &c.scaled(2.0), 4.0).unwrap();
    let (v4_1, _) = objective(&disc, &c, 4.0).unwrap();
    assert!((v4 / v4_1 - 16.0).abs() < 1e-12);
}

#[test]
fn objective_gradient_matches_finite_differences() {
    let body = BodyExpr::Ellipsoid { radii: vec![1.0, 1.7] };
    let f = Frame::new(2, 1).unwrap();
    let mut p = circle(f, 32, 0.5);
    for (j, x) in p.samples.iter_mut().enumerate() {
        x[1] = 0.2 * (j as f64 * 0.3).sin();
        x[3] = 0.1 * (j as f64 * 0.2).cos();
    }
    let (v, g) = objective(&body, &p, 2.0).unwrap();
    let h = 1e-6;
    for (j, i) in [(0, 0), (5, 1), (17, 2), (32, 3)] {
        let mut q = p.clone();
        q.samples[j][i] += h;
        let (vp, _) = objective(&body, &q, 2.0).unwrap();
        q.samples[j][i] -= 2.0 * h;
        let (vm, _) = objective(&body, &q, 2.0).unwrap();
        let fd = (vp - vm) / (2.0 * h);
        assert!((fd - g[j][i]).abs() < 1e-5 * (1.0 + v), "({j},{i}): {fd} vs {}", g[j][i]);
    }
}

#[test]
fn reference_values() {
    let disc = BodyExpr::unit_ball(2);
    let r = solve(&disc, &Frame::new(1, 0).unwrap(), &cfg(256)).unwrap();
    assert!(rel(r.capacity, PI / 2.0) < 0.01);
    let r = solve(&disc, &Frame::new(1, 1).unwrap(), &cfg(256)).unwrap();
    assert!(rel(r.capacity, PI) < 0.01);
    let square = BodyExpr::boxes(vec![[-1.0, 1.0, 1.0, 1.0]]).unwrap();
    let r = solve(&square, &Frame::new(1, 0).unwrap(), &cfg(256)).unwrap();
    assert!(rel(r.capacity, 2.0) < 0.01);
}

#[test]
fn result_invariants() {
    let e = BodyExpr::Ellipsoid { radii: vec![1.0, 1.4] };
    let f = Frame::new(2, 1).unwrap();
    let r = solve(&e, &f, &cfg(256)).unwrap();
    assert!(r.capacity > 0.0);
    assert!((action(&r.minimizer) - 1.0).abs() < 1e-9);
    let space = build_constraint_space(f, 256).unwrap();
    assert!(space.residual(&r.minimizer).unwrap() < 1e-10);
    // multiplier lies in R^{n,k}
    for i in f.indices(Subspace::JV0) {
        assert!(r.multiplier_a0[i].abs() < 1e-12);
    }
    let c = &r.carrier;
    for key in ["leaf_offset", "on_boundary", "endpoint_start", "endpoint_end"] {
        assert!(c.residuals[key] <= 1e-6, "{key} = {}", c.residuals[key]);
    }
    assert!((c.action - r.capacity).abs() <= 1e-3 * r.capacity);
    assert!((c.return_time - c.action).abs() <= 1e-3 * c.action);
    for x in &c.path.samples {
        assert!((e.gauge(x).unwrap().value - 1.0).abs() <= 1e-6);
    }
    // smooth body: the stationarity residual ends small
    assert!(r.diagnostics.stationarity < 1e-2, "{}", r.diagnostics.stationarity);
}

#[test]
fn conformality() {
    let f = Frame::new(2, 1).unwrap();
    let base = BodyExpr::boxes(vec![[-1.0, 0.5, 0.7, 1.0], [-0.5, 1.0, 1.0, 0.8]]).unwrap();
    let c1 = solve(&base, &f, &cfg(256)).unwrap().capacity;
    for lambda in [0.5, 2.0] {
        let scaled = BodyExpr::scale(lambda, base.clone()).unwrap();
        let c = solve(&scaled, &f, &cfg(256)).unwrap().capacity;
        assert!(rel(c, lambda * lambda * c1) < 2e-3, "lambda {lambda}: {c} vs {}", lambda * lambda * c1);
    }
}

#[test]
fn inclusion_monotonicity() {
    let f = Frame::new(2, 0).unwrap();
    let small = BodyExpr::Ellipsoid { radii: vec![0.9, 1.1] };
    let big = BodyExpr::Polydisc { radii: vec![0.9, 1.1] };
    let a = solve(&small, &f, &cfg(256)).unwrap().capacity;
    let b = solve(&big, &f, &cfg(256)).unwrap().capacity;
    assert!(a <= b * (1.0 + 2e-3), "{a} > {b}");
}

#[test]
fn translation_along_the_subspace() {
    let f = Frame::new(2, 1).unwrap();
    let e = BodyExpr::Ellipsoid { radii: vec![1.0, 1.3] };
    let base = solve(&e, &f, &cfg(256)).unwrap().capacity;
    let moved = BodyExpr::translate(vec![0.3, -0.2, 0.4, 0.0], e).unwrap();
    let c = solve(&moved, &f, &cfg(256)).unwrap().capacity;
    assert!(rel(c, base) < 1e-3, "{c} vs {base}");
}

#[test]
fn k_monotonicity() {
    let body = BodyExpr::boxes(vec![[-1.0, 1.0, 0.5, 1.0], [-0.8, 0.7, 1.0, 1.2]]).unwrap();
    let values: Vec<f64> =
        (0..=2).map(|k| solve(&body, &Frame::new(2, k).unwrap(), &cfg(256)).unwrap().capacity).collect();
    for k in 0..2 {
        assert!(values[k] <= values[k + 1] * (1.0 + 1e-3), "{values:?}");
        let exact = box_capacity(&Frame::new(2, k).unwrap(), &[[-1.0, 1.0, 0.5, 1.0], [-0.8, 0.7, 1.0, 1.2]]).unwrap();
        assert!(rel(values[k], exact.value) < 0.02, "k={k}: {} vs {}", values[k], exact.value);
    }
}

#[test]
fn p_independence() {
    let f = Frame::new(1, 0).unwrap();
    let disc = BodyExpr::unit_ball(2);
    for (p, c) in capacity_p_consistency(&disc, &f, &cfg(256), &[2.0, 4.0]).unwrap() {
        assert!(rel(c, PI / 2.0) < 0.02, "p={p}: {c}");
    }
    let e = BodyExpr::Ellipsoid { radii: vec![1.0, 2.0] };
    let f2 = Frame::new(2, 1).unwrap();
    for (p, c) in capacity_p_consistency(&e, &f2, &cfg(256), &[2.0, 3.0]).unwrap() {
        assert!(rel(c, PI) < 0.02, "p={p}: {c}");
    }
    let b = BodyExpr::boxes(vec![[-1.0, 1.0, 1.0, 1.0]]).unwrap();
    for (p, c) in capacity_p_consistency(&b, &f, &cfg(256), &[2.0, 4.0]).unwrap() {
        assert!(rel(c, 2.0) < 0.02, "p={p}: {c}");
    }
}

#[test]
fn refinement_ladder() {
    let disc = BodyExpr::unit_ball(2);
    let f = Frame::new(1, 0).unwrap();
    let r = refine(&disc, &f, &cfg(64), &[64, 128, 256, 512]).unwrap();
    let exact = PI / 2.0;
    let errs: Vec<f64> = r.levels.iter().map(|l| (l.capacity - exact).abs()).collect();
    for w in errs.windows(2) {
        assert!(w[1] <= w[0] + 1e-6, "{errs:?}");
    }
    assert!(rel(r.levels[3].capacity, exact) < 0.01);
    assert!((r.extrapolated - exact).abs() <= errs[3]);
    assert!(refine(&disc, &f, &cfg(64), &[128, 64]).is_err());
}

#[test]
fn warm_start_is_projected() {
    let f = Frame::new(2, 1).unwrap();
    let e = BodyExpr::Ellipsoid { radii: vec![1.0, 1.2] };
    let coarse = solve(&e, &f, &cfg(64)).unwrap();
    let fine = solve_from(&e, &f, &cfg(256), &coarse.minimizer).unwrap();
    let space = build_constraint_space(f, 256).unwrap();
    assert!(space.residual(&fine.minimizer).unwrap() < 1e-10);
    let exact = ellipsoid_capacity(&f, &[1.0, 1.2]).unwrap().value;
    assert!(rel(fine.capacity, exact) < 0.01);
}

#[test]
fn subgradient_method_on_the_disc() {
    let disc = BodyExpr::unit_ball(2);
    let c = SolveConfig { method: Method::Subgradient, ..cfg(128) };
    let r = solve(&disc, &Frame::new(1, 0).unwrap(), &c).unwrap();
    assert!(rel(r.capacity, PI / 2.0) < 0.02, "{}", r.capacity);
}

#[test]
fn error_classes() {
    let f = Frame::new(1, 0).unwrap();
    let far = BodyExpr::offcenter_ball(2, 2.0, 1.0).unwrap();
    assert!(matches!(solve(&far, &f, &cfg(64)), Err(SolveError::Domain(_))));
    let disc = BodyExpr::unit_ball(2);
    let bad = SolveConfig { tol_rel: 0.5, ..cfg(64) };
    assert!(matches!(solve(&disc, &f, &bad), Err(SolveError::InvalidConfig(_))));
    let wrong_dim = BodyExpr::unit_ball(4);
    assert!(solve(&wrong_dim, &f, &cfg(64)).is_err());
}
