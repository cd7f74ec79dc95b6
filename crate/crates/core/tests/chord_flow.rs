use cochord::chord_flow::{
    ball_chord, flow, generator_orbit, level_capacity, min_chord_return_time, return_spectrum, spectrum_csv,
    ModeClass, QuadraticSurface,
};
use cochord::closed_forms::{ellipsoid_capacity, offcenter_ball_capacity};
use cochord::convex_bodies::BodyExpr;
use cochord::dual_solver::{solve, SolveConfig};
use cochord::symplectic_core::{leaf_equivalent, off_rnk_residual, Frame};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

fn random_case(rng: &mut ChaCha8Rng) -> (Frame, Vec<f64>) {
    let n = rng.gen_range(1..=3);
    let k = rng.gen_range(0..=n);
    let radii = (0..n).map(|_| rng.gen_range(0.3..2.5)).collect();
    (Frame::new(n, k).unwrap(), radii)
}

#[test]
fn spectrum_minimum_is_the_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    for _ in 0..100 {
        let (f, radii) = random_case(&mut rng);
        let exact = ellipsoid_capacity(&f, &radii).unwrap().value;
        let spec = return_spectrum(&f, &radii, 4.0 * exact).unwrap();
        assert!((spec[0].action - exact).abs() <= 1e-12 * exact, "{radii:?} {f:?}");
        for w in spec.windows(2) {
            assert!(w[0].action < w[1].action);
        }
        assert!(spec.iter().all(|e| e.action <= 4.0 * exact));
    }
}

#[test]
fn spectrum_entries_return_to_the_subspace() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for _ in 0..30 {
        let (f, radii) = random_case(&mut rng);
        let surface = QuadraticSurface::ellipsoid(&radii).unwrap();
        let cutoff = 3.0 * radii.iter().map(|r| PI * r * r).fold(0.0, f64::max);
        for entry in return_spectrum(&f, &radii, cutoff).unwrap() {
            for g in &entry.generators {
                let r = radii[g.plane];
                let want = match g.class {
                    ModeClass::V1Mode => g.multiple as f64 * PI * r * r,
                    ModeClass::V0Mode => g.multiple as f64 * PI * r * r / 2.0,
                };
                assert!((entry.action - want).abs() <= 1e-12 * want);
                assert_eq!(g.class == ModeClass::V1Mode, g.plane < f.k());
                let (z, t) = generator_orbit(&f, &radii, g);
                assert!((surface.energy(&z) - 1.0).abs() < 1e-12);
                let end = flow(&surface, &z, t).unwrap();
                assert!(off_rnk_residual(&f, &z) < 1e-9);
                assert!(off_rnk_residual(&f, &end) < 1e-9);
                assert!(leaf_equivalent(&f, &z, &end, 1e-9).unwrap());
            }
        }
    }
}

#[test]
fn spectrum_example_with_ties() {
    let f = Frame::new(2, 1).unwrap();
    let spec = return_spectrum(&f, &[1.0, 1.0], 4.0).unwrap();
    let actions: Vec<f64> = spec.iter().map(|e| e.action).collect();
    assert_eq!(actions.len(), 2);
    assert!((actions[0] - PI / 2.0).abs() < 1e-15);
    assert!((actions[1] - PI).abs() < 1e-15);
    // pi is reached by the first periodic mode and the doubled chord
    assert_eq!(spec[1].generators.len(), 2);
    let csv = spectrum_csv(&spec);
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("action,class,j,m"));
    assert_eq!(csv.lines().count(), 1 + 3);

    let periodic = return_spectrum(&Frame::new(2, 2).unwrap(), &[1.0, 1.5], 10.0).unwrap();
    assert!(periodic.iter().all(|e| e.generators.iter().all(|g| g.class == ModeClass::V1Mode)));
    assert!((periodic[0].action - PI).abs() < 1e-15);
    assert!(return_spectrum(&f, &[1.0, 1.0], 0.0).is_err());
}

proptest! {
    #[test]
    fn flow_conserves_energy(
        radii in prop::collection::vec(0.2f64..3.0, 1..=3),
        raw in prop::collection::vec(-2.0f64..2.0, 6),
        tau in 0.0f64..(10.0 * PI),
    ) {
        let n = radii.len();
        let surface = QuadraticSurface::ellipsoid(&radii).unwrap();
        let z = &raw[..2 * n];
        let h = surface.energy(z);
        let moved = flow(&surface, z, tau).unwrap();
        prop_assert!((surface.energy(&moved) - h).abs() <= 1e-10 * (1.0 + h));
    }

    #[test]
    fn general_flow_conserves_energy(
        entries in prop::collection::vec(-1.0f64..1.0, 16),
        raw in prop::collection::vec(-2.0f64..2.0, 4),
        tau in 0.0f64..(10.0 * PI),
    ) {
        // A^T A + I is symmetric positive definite
        let a = nalgebra::DMatrix::from_row_slice(4, 4, &entries);
        let s = a.transpose() * &a + nalgebra::DMatrix::identity(4, 4);
        let rows: Vec<f64> = (0..4).flat_map(|i| (0..4).map(move |j| (i, j))).map(|(i, j)| s[(i, j)]).collect();
        let surface = QuadraticSurface::general(rows, vec![0.0; 4]).unwrap();
        let h = surface.energy(&raw);
        let moved = flow(&surface, &raw, tau).unwrap();
        prop_assert!((surface.energy(&moved) - h).abs() <= 1e-9 * (1.0 + h));
    }
}

#[test]
fn flow_identity_and_quarter_turn() {
    let e = QuadraticSurface::ellipsoid(&[1.0, 2.0]).unwrap();
    let z = [0.3, -0.2, 0.5, 0.1];
    assert_eq!(flow(&e, &z, 0.0).unwrap(), z.to_vec());
    let disc = QuadraticSurface::ellipsoid(&[1.0]).unwrap();
    let w = flow(&disc, &[1.0, 0.0], PI / 4.0).unwrap();
    assert!(w[0].abs() < 1e-15 && (w[1] - 1.0).abs() < 1e-15);
    assert!(QuadraticSurface::general(vec![1.0, 2.0, 0.0, 1.0], vec![0.0; 2]).is_err());
    assert!(QuadraticSurface::general(vec![-1.0, 0.0, 0.0, 1.0], vec![0.0; 2]).is_err());
}

#[test]
fn ball_chords_match_the_closed_form() {
    for n in 1..=3 {
        for k in 0..n {
            let f = Frame::new(n, k).unwrap();
            for a in [-0.9, -0.5, 0.0, 0.5, 0.9] {
                let chord = ball_chord(&f, a, 1.0).unwrap();
                let exact = offcenter_ball_capacity(&f, a, 1.0).unwrap().value;
                assert!((chord.action - exact).abs() <= 1e-10, "a={a}: {} vs {exact}", chord.action);
                assert!(chord.residuals["endpoint_start"] < 1e-12);
                assert!(chord.residuals["endpoint_end"] < 1e-12);
                assert!(chord.residuals["leaf_offset"] < 1e-12);
                assert!(chord.residuals["polyline_action_gap"] < 1e-5);
                let first = &chord.path.samples[0];
                let last = chord.path.samples.last().unwrap();
                assert!(leaf_equivalent(&f, first, last, 1e-12).unwrap());
                for x in &chord.path.samples {
                    let r2 = x[n - 1].powi(2) + (x[2 * n - 1] - a).powi(2);
                    assert!((r2 - 1.0).abs() < 1e-12);
                }
            }
        }
    }
    let half = ball_chord(&Frame::new(1, 0).unwrap(), 0.0, 1.0).unwrap();
    assert!((half.action - PI / 2.0).abs() < 1e-12);
    let cap = ball_chord(&Frame::new(1, 0).unwrap(), 0.6, 1.0).unwrap();
    assert!((cap.action - 0.4472952).abs() < 1e-7);
    assert!(ball_chord(&Frame::new(1, 0).unwrap(), 1.0, 1.0).is_err());
    assert!(ball_chord(&Frame::new(1, 1).unwrap(), 0.0, 1.0).is_err());
}

#[test]
fn return_time_is_the_capacity_derivative() {
    let cases = [(vec![1.0, 1.0], PI / 2.0), (vec![1.0, 2f64.sqrt()], PI)];
    let f = Frame::new(2, 1).unwrap();
    for (radii, expected) in cases {
        let s = QuadraticSurface::ellipsoid(&radii).unwrap();
        for e in [0.5, 1.0, 3.0] {
            assert!((min_chord_return_time(&s, e, &f).unwrap() - expected).abs() < 1e-12);
        }
        let fd = (level_capacity(&s, 1.01, &f).unwrap() - level_capacity(&s, 0.99, &f).unwrap()) / 0.02;
        assert!((fd - min_chord_return_time(&s, 1.0, &f).unwrap()).abs() < 1e-8);
    }
    let off = QuadraticSurface::ball(vec![0.0, 0.0, 0.0, 0.3], 1.0).unwrap();
    assert!(min_chord_return_time(&off, 1.0, &f).is_err());
    let s = QuadraticSurface::ellipsoid(&[1.0, 1.0]).unwrap();
    assert!(min_chord_return_time(&s, 0.0, &f).is_err());
}

#[test]
fn solver_agrees_with_the_flow() {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let cfg = SolveConfig { segments: 256, ..Default::default() };
    for _ in 0..6 {
        let n = rng.gen_range(1..=2);
        let k = rng.gen_range(0..=n);
        let f = Frame::new(n, k).unwrap();
        let radii: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..2.0)).collect();
        let spec = return_spectrum(&f, &radii, 10.0 * PI).unwrap();
        let c = solve(&BodyExpr::Ellipsoid { radii: radii.clone() }, &f, &cfg).unwrap().capacity;
        assert!(((c - spec[0].action) / spec[0].action).abs() < 0.01, "{radii:?} k={k}: {c} vs {}", spec[0].action);
    }
}
