//! Hamiltonian flows of quadratic energies and the chords they produce.
//!
//! On an ellipsoid the flow of `H(z) = sum |z_i|^2 / r_i^2` rotates each
//! plane `(q_i, p_i)` by the angle `2 tau / r_i^2`, so every chord and its
//! action are explicit.

use crate::closed_forms::{ellipsoid_capacity, offcenter_ball_capacity, ClosedFormError};
use crate::dual_solver::Chord;
use crate::symplectic_core::{action_of_samples, off_rnk_residual, DiscretePath, Frame, Subspace, SymplecticError};
use nalgebra::DMatrix;
use serde::Serialize;
use std::collections::BTreeMap;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("matrix is not symmetric positive definite")]
    NotPositiveDefinite,
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Frame(#[from] SymplecticError),
    #[error(transparent)]
    ClosedForm(#[from] ClosedFormError),
}

/// Level set `H = 1` of `H(z) = 1/2 <S (z - c), z - c>`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticSurface {
    matrix: DMatrix<f64>,
    center: Vec<f64>,
    /// Plane radii when `S = diag(2 / r_i^2)` on both `q_i` and `p_i`.
    radii: Option<Vec<f64>>,
}

impl QuadraticSurface {
    /// The ellipsoid `sum (q_i^2 + p_i^2) / r_i^2 = 1`.
    pub fn ellipsoid(radii: &[f64]) -> Result<Self, FlowError> {
        if radii.is_empty() || radii.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(FlowError::InvalidParameter("radii must be positive".into()));
        }
        let n = radii.len();
        let diag: Vec<f64> = (0..2 * n).map(|i| 2.0 / radii[i % n].powi(2)).collect();
        Ok(Self {
            matrix: DMatrix::from_diagonal(&nalgebra::DVector::from_vec(diag)),
            center: vec![0.0; 2 * n],
            radii: Some(radii.to_vec()),
        })
    }

    /// The sphere of radius `radius` about `center`.
    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self, FlowError> {
        if center.is_empty() || !center.len().is_multiple_of(2) {
            return Err(FlowError::InvalidParameter("centre must have even length".into()));
        }
        let mut s = Self::ellipsoid(&vec![radius; center.len() / 2])?;
        s.center = center;
        Ok(s)
    }

    /// General quadratic surface; `matrix` is row-major `2n x 2n`.
    pub fn general(matrix: Vec<f64>, center: Vec<f64>) -> Result<Self, FlowError> {
        let d = center.len();
        if d == 0 || !d.is_multiple_of(2) || matrix.len() != d * d {
            return Err(FlowError::InvalidParameter("matrix must be 2n x 2n".into()));
        }
        let m = DMatrix::from_row_slice(d, d, &matrix);
        if (&m - m.transpose()).amax() > 1e-12 * m.amax().max(1.0) {
            return Err(FlowError::NotPositiveDefinite);
        }
        if m.clone().cholesky().is_none() {
            return Err(FlowError::NotPositiveDefinite);
        }
        Ok(Self { matrix: m, center, radii: None })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn radii(&self) -> Option<&[f64]> {
        self.radii.as_deref()
    }

    pub fn energy(&self, z: &[f64]) -> f64 {
        let v = nalgebra::DVector::from_iterator(z.len(), z.iter().zip(&self.center).map(|(a, c)| a - c));
        0.5 * v.dot(&(&self.matrix * &v))
    }
}

/// `J` as a matrix.
fn j_matrix(d: usize) -> DMatrix<f64> {
    let n = d / 2;
    let mut j = DMatrix::zeros(d, d);
    for i in 0..n {
        j[(i, n + i)] = -1.0;
        j[(n + i, i)] = 1.0;
    }
    j
}

/// Time-`tau` map `z -> c + exp(tau J S)(z - c)` of the Hamiltonian flow.
pub fn flow(surface: &QuadraticSurface, z: &[f64], tau: f64) -> Result<Vec<f64>, FlowError> {
    let d = surface.dim();
    if z.len() != d {
        return Err(SymplecticError::DimensionMismatch { expected: d, got: z.len() }.into());
    }
    let c = &surface.center;
    let rel: Vec<f64> = z.iter().zip(c).map(|(a, b)| a - b).collect();
    let out = match &surface.radii {
        Some(radii) => {
            let n = d / 2;
            let mut out = vec![0.0; d];
            for i in 0..n {
                let (s, co) = (2.0 * tau / (radii[i] * radii[i])).sin_cos();
                out[i] = co * rel[i] - s * rel[n + i];
                out[n + i] = s * rel[i] + co * rel[n + i];
            }
            out
        }
        None => {
            let gen = j_matrix(d) * &surface.matrix * tau;
            let e = gen.exp();
            (e * nalgebra::DVector::from_vec(rel)).iter().copied().collect()
        }
    };
    Ok(out.iter().zip(c).map(|(a, b)| a + b).collect())
}

/// How a chord of the ellipsoid closes up.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeClass {
    /// A closed orbit in a plane of the symplectic part; period `m pi r^2`.
    V1Mode,
    /// A chord in a characteristic plane returning to the subspace after
    /// `m` half turns; action `m pi r^2 / 2`.
    V0Mode,
}

impl ModeClass {
    fn label(self) -> &'static str {
        match self {
            ModeClass::V1Mode => "v1",
            ModeClass::V0Mode => "v0",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Generator {
    pub class: ModeClass,
    /// Plane index, zero-based.
    pub plane: usize,
    pub multiple: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumEntry {
    pub action: f64,
    /// Every (class, plane, multiple) producing this action.
    pub generators: Vec<Generator>,
}

fn generator_action(g: &Generator, radii: &[f64]) -> f64 {
    let r2 = radii[g.plane] * radii[g.plane];
    match g.class {
        ModeClass::V1Mode => g.multiple as f64 * PI * r2,
        ModeClass::V0Mode => 0.5 * g.multiple as f64 * PI * r2,
    }
}

/// Initial point on the ellipsoid of the chord for `g`, together with its
/// return time (equal to the action for this normalization of `H`).
pub fn generator_orbit(frame: &Frame, radii: &[f64], g: &Generator) -> (Vec<f64>, f64) {
    let mut z = vec![0.0; frame.dim()];
    z[g.plane] = radii[g.plane];
    (z, generator_action(g, radii))
}

/// All chord actions up to `cutoff`, ascending, with equal actions merged.
pub fn return_spectrum(frame: &Frame, radii: &[f64], cutoff: f64) -> Result<Vec<SpectrumEntry>, FlowError> {
    if radii.len() != frame.n() || radii.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
        return Err(FlowError::InvalidParameter(format!("need {} positive radii", frame.n())));
    }
    if !(cutoff > 0.0 && cutoff.is_finite()) {
        return Err(FlowError::InvalidParameter("cutoff must be positive and finite".into()));
    }
    let mut gens: Vec<(f64, Generator)> = Vec::new();
    for (plane, r) in radii.iter().enumerate() {
        let class = if plane < frame.k() { ModeClass::V1Mode } else { ModeClass::V0Mode };
        let unit = generator_action(&Generator { class, plane, multiple: 1 }, radii);
        let count = (cutoff / unit * (1.0 + 1e-12)).floor() as u32;
        debug_assert!(*r > 0.0);
        for multiple in 1..=count {
            let g = Generator { class, plane, multiple };
            gens.push((generator_action(&g, radii), g));
        }
    }
    gens.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.plane.cmp(&b.1.plane)));
    let mut out: Vec<SpectrumEntry> = Vec::new();
    for (action, g) in gens {
        match out.last_mut() {
            Some(last) if (action - last.action).abs() <= 1e-12 * action => last.generators.push(g),
            _ => out.push(SpectrumEntry { action, generators: vec![g] }),
        }
    }
    Ok(out)
}

/// CSV with one row per generator: `action,class,j,m` (plane `j` zero-based).
pub fn spectrum_csv(entries: &[SpectrumEntry]) -> String {
    let mut s = String::from("action,class,j,m\n");
    for e in entries {
        for g in &e.generators {
            s.push_str(&format!(
                "{},{},{},{}\n",
                crate::cli_io::format_real(e.action),
                g.class.label(),
                g.plane,
                g.multiple
            ));
        }
    }
    s
}

/// Samples on the chord of the ball of radius `radius` centred at
/// `a e_{p_n}` that cuts off the smaller cap below or above `{p_n = 0}`.
const BALL_CHORD_SAMPLES: usize = 1024;

/// The minimal chord of the off-centre ball: an arc in the last plane from
/// one intersection with `{p_n = 0}` counterclockwise to the other.
pub fn ball_chord(frame: &Frame, a: f64, radius: f64) -> Result<Chord, FlowError> {
    // validates |a| < R, R > 0 and k < n
    let exact = offcenter_ball_capacity(frame, a, radius)?.value;
    let n = frame.n();
    let r = (radius * radius - a * a).sqrt();
    let q_start = if a <= 0.0 { r } else { -r };
    let phi0 = (-a).atan2(q_start);
    let mut phi1 = (-a).atan2(-q_start);
    if phi1 <= phi0 {
        phi1 += 2.0 * PI;
    }
    let samples: Vec<Vec<f64>> = (0..=BALL_CHORD_SAMPLES)
        .map(|i| {
            let phi = phi0 + (phi1 - phi0) * i as f64 / BALL_CHORD_SAMPLES as f64;
            let mut z = vec![0.0; 2 * n];
            z[n - 1] = radius * phi.cos();
            z[2 * n - 1] = a + radius * phi.sin();
            z
        })
        .collect();
    let last = samples.len() - 1;
    // exact action of the arc: 1/2 int (q dp - p dq) = 1/2 (R^2 dphi - a R (cos phi1 - cos phi0))
    let action = 0.5 * (radius * radius * (phi1 - phi0) - a * radius * (phi1.cos() - phi0.cos()));
    let mut residuals = BTreeMap::new();
    residuals.insert("endpoint_start".to_string(), off_rnk_residual(frame, &samples[0]));
    residuals.insert("endpoint_end".to_string(), off_rnk_residual(frame, &samples[last]));
    let off_leaf: f64 = (0..2 * n)
        .filter(|i| !frame.in_subspace(Subspace::V0, *i))
        .map(|i| (samples[last][i] - samples[0][i]).powi(2))
        .sum::<f64>()
        .sqrt();
    residuals.insert("leaf_offset".to_string(), off_leaf);
    residuals.insert("action_gap".to_string(), (action - exact).abs());
    residuals.insert("polyline_action_gap".to_string(), (action_of_samples(&samples) - action).abs());
    Ok(Chord {
        frame: *frame,
        path: DiscretePath::new(*frame, samples)?,
        action,
        return_time: action,
        residuals,
    })
}

/// Return time of the minimal chord on the level `{H = e}` of the
/// ellipsoid energy `H(z) = sum |z_i|^2 / r_i^2`.
///
/// Along the level set `<grad H, z> = 2e`, so the time equals the action
/// divided by `e`; the level set is the ellipsoid with radii `r_i sqrt(e)`.
pub fn min_chord_return_time(surface: &QuadraticSurface, e: f64, frame: &Frame) -> Result<f64, FlowError> {
    let radii = surface
        .radii()
        .ok_or_else(|| FlowError::Unsupported("return time for non-diagonal energies".into()))?;
    if surface.center.iter().any(|c| *c != 0.0) {
        return Err(FlowError::Unsupported("return time for centred energies only".into()));
    }
    if !(e > 0.0 && e.is_finite()) {
        return Err(FlowError::InvalidParameter("energy level must be positive".into()));
    }
    let scaled: Vec<f64> = radii.iter().map(|r| r * e.sqrt()).collect();
    Ok(ellipsoid_capacity(frame, &scaled)?.value / e)
}

/// Capacity of the sublevel set `{H <= e}`.
pub fn level_capacity(surface: &QuadraticSurface, e: f64, frame: &Frame) -> Result<f64, FlowError> {
    Ok(min_chord_return_time(surface, e, frame)? * e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symplectic_core::leaf_equivalent;
    use approx::assert_abs_diff_eq;

    #[test]
    fn flow_examples() {
        let disc = QuadraticSurface::ellipsoid(&[1.0]).unwrap();
        let z = flow(&disc, &[1.0, 0.0], PI / 4.0).unwrap();
        assert_abs_diff_eq!(z[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(z[1], 1.0, epsilon = 1e-15);
        let e = QuadraticSurface::ellipsoid(&[1.0, 2.0]).unwrap();
        let p = [0.3, -0.2, 0.5, 0.1];
        assert_eq!(flow(&e, &p, 0.0).unwrap(), p.to_vec());
    }

    #[test]
    fn general_matches_diagonal() {
        let e = QuadraticSurface::ellipsoid(&[1.0, 1.5]).unwrap();
        let d = 4;
        let m: Vec<f64> = e.matrix.transpose().iter().copied().collect();
        let g = QuadraticSurface::general(m, vec![0.0; d]).unwrap();
        let z = [0.3, -0.2, 0.5, 0.1];
        for tau in [0.1, 1.0, 7.0] {
            let a = flow(&e, &z, tau).unwrap();
            let b = flow(&g, &z, tau).unwrap();
            for i in 0..d {
                assert_abs_diff_eq!(a[i], b[i], epsilon = 1e-10);
            }
        }
        assert_eq!(
            QuadraticSurface::general(vec![1.0, 0.0, 0.0, -1.0], vec![0.0; 2]),
            Err(FlowError::NotPositiveDefinite)
        );
    }

    #[test]
    fn spectrum_examples() {
        let f = Frame::new(2, 1).unwrap();
        let s = return_spectrum(&f, &[1.0, 1.0], 4.0).unwrap();
        let actions: Vec<f64> = s.iter().map(|e| e.action).collect();
        assert_abs_diff_eq!(actions[0], PI / 2.0);
        assert_abs_diff_eq!(actions[1], PI);
        assert_eq!(s[1].generators.len(), 2);
        assert_eq!(s[0].generators[0], Generator { class: ModeClass::V0Mode, plane: 1, multiple: 1 });
        let s = return_spectrum(&Frame::new(1, 0).unwrap(), &[1.0], 10.0).unwrap();
        assert_abs_diff_eq!(s[0].action, PI / 2.0);
        let s = return_spectrum(&Frame::new(2, 2).unwrap(), &[1.0, 1.2], 20.0).unwrap();
        assert_abs_diff_eq!(s[0].action, PI);
        assert!(s.iter().all(|e| e.generators.iter().all(|g| g.class == ModeClass::V1Mode)));
        let csv = spectrum_csv(&s[..1]);
        assert!(csv.starts_with("action,class,j,m\n3.1415926535897931,v1,0,1"));
    }

    #[test]
    fn generators_return() {
        let f = Frame::new(3, 1).unwrap();
        let radii = [0.8, 1.3, 1.1];
        let surf = QuadraticSurface::ellipsoid(&radii).unwrap();
        for e in return_spectrum(&f, &radii, 12.0).unwrap() {
            for g in &e.generators {
                let (z, t) = generator_orbit(&f, &radii, g);
                assert_abs_diff_eq!(surf.energy(&z), 1.0, epsilon = 1e-12);
                let end = flow(&surf, &z, t).unwrap();
                assert!(leaf_equivalent(&f, &z, &end, 1e-9).unwrap(), "{g:?}");
            }
        }
    }

    #[test]
    fn ball_chords() {
        let f = Frame::new(2, 1).unwrap();
        for a in [-0.9, -0.5, 0.0, 0.5, 0.9] {
            let c = ball_chord(&f, a, 1.0).unwrap();
            let exact = offcenter_ball_capacity(&f, a, 1.0).unwrap().value;
            assert!((c.action - exact).abs() < 1e-10, "a={a}: {} vs {exact}", c.action);
            assert!(c.residuals["polyline_action_gap"] < 1e-5);
            let first = &c.path.samples[0];
            let last = c.path.samples.last().unwrap();
            assert!(leaf_equivalent(&f, first, last, 1e-12).unwrap());
        }
        assert!(ball_chord(&f, 1.0, 1.0).is_err());
    }

    #[test]
    fn return_time_is_capacity_derivative() {
        let f = Frame::new(2, 1).unwrap();
        for radii in [[1.0, 1.0], [1.0, 2f64.sqrt()]] {
            let s = QuadraticSurface::ellipsoid(&radii).unwrap();
            let t = min_chord_return_time(&s, 1.0, &f).unwrap();
            let fd = (level_capacity(&s, 1.01, &f).unwrap() - level_capacity(&s, 0.99, &f).unwrap()) / 0.02;
            assert!((fd - t).abs() < 1e-8);
        }
        let s = QuadraticSurface::ellipsoid(&[1.0, 1.0]).unwrap();
        assert_abs_diff_eq!(min_chord_return_time(&s, 3.0, &f).unwrap(), PI / 2.0, epsilon = 1e-14);
    }
}
