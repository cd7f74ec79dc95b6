use super::*;
use std::f64::consts::PI;

fn frame(n: usize, k: usize) -> Frame {
    Frame::new(n, k).unwrap()
}

fn quick(segments: usize) -> SolveConfig {
    SolveConfig { segments, ..Default::default() }
}

#[test]
fn disc_values() {
    let disc = BodyExpr::unit_ball(2);
    let r = solve(&disc, &frame(1, 0), &quick(256)).unwrap();
    assert!((r.capacity / (PI / 2.0) - 1.0).abs() < 1e-2, "{}", r.capacity);
    let r = solve(&disc, &frame(1, 1), &quick(256)).unwrap();
    assert!((r.capacity / PI - 1.0).abs() < 1e-2, "{}", r.capacity);
}
