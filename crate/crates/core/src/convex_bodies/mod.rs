//! Convex bodies as expression trees.
//!
//! Every node can evaluate its support function `h` (with a supporting point
//! as subgradient) and the exit distance of a ray started at an interior
//! point. The Minkowski gauge about any interior point follows from the
//! exit distance, so translated leaves keep closed-form gauges. Bodies that
//! are only known through `h` (p-sums, difference bodies) fall back to a
//! small convex minimization over a hyperplane of normals.

mod eval;
mod volume;

pub use volume::{
    half_ball_volume, mean_width_symmetrized, unit_ball_volume, HalfSpace, VolumeEstimate, VolumeMode,
};

use serde::{Deserialize, Serialize};

#[derive(thiserror::Error, Debug, Clone, PartialEq)]
pub enum BodyError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid body parameter: {0}")]
    InvalidParameter(String),
    #[error("the origin is not an interior point of the body")]
    OriginNotInterior,
    #[error("reference point is not an interior point of the body")]
    NotInterior,
    #[error("{0} is not available for this body")]
    Unsupported(String),
    #[error("Monte Carlo estimates need at least 1000 samples, got {0}")]
    TooFewSamples(usize),
    #[error("linear program failed: {0}")]
    Lp(String),
}

/// Value of a 1-homogeneous convex function with one subgradient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaugeEval {
    pub value: f64,
    pub subgradient: Vec<f64>,
}

/// Convex body expression.
///
/// Symplectic leaves (`Ellipsoid`, `Box`, `Polydisc`) carry one parameter
/// per `(q_i, p_i)` plane. `Ball`, `Cuboid`, `AxisEllipsoid` and
/// `VertexPolytope` live in any dimension, which lets them serve as factors
/// of a [`BodyExpr::LagrangianProduct`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BodyExpr {
    /// `sum (q_i^2 + p_i^2) / r_i^2 <= 1`.
    Ellipsoid { radii: Vec<f64> },
    /// `q_i in [a_i, b_i]`, `p_i in [-c_i, d_i]`, stored as `[a, b, c, d]`.
    Box { intervals: Vec<[f64; 4]> },
    /// `q_i^2 + p_i^2 <= r_i^2` for every `i`.
    Polydisc { radii: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
    /// Convex hull of the vertices.
    VertexPolytope { vertices: Vec<Vec<f64>>, symmetric: bool },
    /// Axis-aligned box `lower <= x <= upper`.
    Cuboid { lower: Vec<f64>, upper: Vec<f64> },
    /// `sum (x_i / s_i)^2 <= 1`.
    AxisEllipsoid { semi_axes: Vec<f64> },
    /// Symplectic product: the left factor owns `(q_1..q_{n1}, p_1..p_{n1})`.
    Product { left: Box<BodyExpr>, right: Box<BodyExpr> },
    /// `Q x P` with `Q` in the q-block and `P` in the p-block.
    LagrangianProduct { q: Box<BodyExpr>, p: Box<BodyExpr> },
    Polar(Box<BodyExpr>),
    /// Firey p-sum, support `(h_l^p + h_r^p)^(1/p)`.
    PSum { p: f64, left: Box<BodyExpr>, right: Box<BodyExpr> },
    Scale { factor: f64, body: Box<BodyExpr> },
    Translate { shift: Vec<f64>, body: Box<BodyExpr> },
    /// Difference body `D - D`.
    SymmDiff(Box<BodyExpr>),
}

fn positive_all(xs: &[f64], what: &str) -> Result<(), BodyError> {
    if xs.is_empty() {
        return Err(BodyError::InvalidParameter(format!("{what} must be nonempty")));
    }
    if let Some(x) = xs.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
        return Err(BodyError::InvalidParameter(format!("{what} must be positive, got {x}")));
    }
    Ok(())
}

fn finite_all(xs: &[f64], what: &str) -> Result<(), BodyError> {
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(BodyError::InvalidParameter(format!("{what} must be finite")));
    }
    Ok(())
}

impl BodyExpr {
    pub fn ellipsoid(radii: Vec<f64>) -> Result<Self, BodyError> {
        positive_all(&radii, "ellipsoid radii")?;
        Ok(Self::Ellipsoid { radii })
    }

    pub fn polydisc(radii: Vec<f64>) -> Result<Self, BodyError> {
        positive_all(&radii, "polydisc radii")?;
        Ok(Self::Polydisc { radii })
    }

    /// Product of rectangles `[a, b] x [-c, d]`.
    pub fn boxes(intervals: Vec<[f64; 4]>) -> Result<Self, BodyError> {
        let b = Self::Box { intervals };
        b.validate()?;
        Ok(b)
    }

    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self, BodyError> {
        let b = Self::Ball { center, radius };
        b.validate()?;
        Ok(b)
    }

    pub fn unit_ball(dim: usize) -> Self {
        Self::Ball { center: vec![0.0; dim], radius: 1.0 }
    }

    /// Ball of radius `radius` centred at `(0, .., 0, a)` in `R^dim`.
    pub fn offcenter_ball(dim: usize, a: f64, radius: f64) -> Result<Self, BodyError> {
        let mut center = vec![0.0; dim];
        if let Some(last) = center.last_mut() {
            *last = a;
        }
        Self::ball(center, radius)
    }

    pub fn cuboid(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, BodyError> {
        let b = Self::Cuboid { lower, upper };
        b.validate()?;
        Ok(b)
    }

    /// `[-1, 1]^dim`.
    pub fn cube(dim: usize) -> Self {
        Self::Cuboid { lower: vec![-1.0; dim], upper: vec![1.0; dim] }
    }

    pub fn axis_ellipsoid(semi_axes: Vec<f64>) -> Result<Self, BodyError> {
        positive_all(&semi_axes, "semi-axes")?;
        Ok(Self::AxisEllipsoid { semi_axes })
    }

    /// Polytope from its vertex list; the symmetry flag is detected.
    pub fn vertex_polytope(vertices: Vec<Vec<f64>>) -> Result<Self, BodyError> {
        let symmetric = eval::vertices_symmetric(&vertices);
        let b = Self::VertexPolytope { vertices, symmetric };
        b.validate()?;
        Ok(b)
    }

    pub fn product(left: Self, right: Self) -> Result<Self, BodyError> {
        let b = Self::Product { left: Box::new(left), right: Box::new(right) };
        b.validate()?;
        Ok(b)
    }

    pub fn lagrangian_product(q: Self, p: Self) -> Result<Self, BodyError> {
        let b = Self::LagrangianProduct { q: Box::new(q), p: Box::new(p) };
        b.validate()?;
        Ok(b)
    }

    pub fn polar(body: Self) -> Result<Self, BodyError> {
        let b = Self::Polar(Box::new(body));
        b.validate()?;
        Ok(b)
    }

    pub fn psum(p: f64, left: Self, right: Self) -> Result<Self, BodyError> {
        let b = Self::PSum { p, left: Box::new(left), right: Box::new(right) };
        b.validate()?;
        Ok(b)
    }

    pub fn scale(factor: f64, body: Self) -> Result<Self, BodyError> {
        let b = Self::Scale { factor, body: Box::new(body) };
        b.validate()?;
        Ok(b)
    }

    pub fn translate(shift: Vec<f64>, body: Self) -> Result<Self, BodyError> {
        let b = Self::Translate { shift, body: Box::new(body) };
        b.validate()?;
        Ok(b)
    }

    pub fn symm_diff(body: Self) -> Self {
        Self::SymmDiff(Box::new(body))
    }

    /// Ambient dimension.
    pub fn dim(&self) -> usize {
        match self {
            Self::Ellipsoid { radii } | Self::Polydisc { radii } => 2 * radii.len(),
            Self::Box { intervals } => 2 * intervals.len(),
            Self::Ball { center, .. } => center.len(),
            Self::VertexPolytope { vertices, .. } => vertices.first().map_or(0, Vec::len),
            Self::Cuboid { lower, .. } => lower.len(),
            Self::AxisEllipsoid { semi_axes } => semi_axes.len(),
            Self::Product { left, right } => left.dim() + right.dim(),
            Self::LagrangianProduct { q, p } => q.dim() + p.dim(),
            Self::Polar(b) | Self::SymmDiff(b) => b.dim(),
            Self::PSum { left, .. } => left.dim(),
            Self::Scale { body, .. } | Self::Translate { body, .. } => body.dim(),
        }
    }

    /// Check parameters, dimensions, and the interior-origin requirement of
    /// `Polar` and `PSum`.
    pub fn validate(&self) -> Result<(), BodyError> {
        match self {
            Self::Ellipsoid { radii } => positive_all(radii, "ellipsoid radii"),
            Self::Polydisc { radii } => positive_all(radii, "polydisc radii"),
            Self::Box { intervals } => {
                if intervals.is_empty() {
                    return Err(BodyError::InvalidParameter("box needs at least one factor".into()));
                }
                for [a, b, c, d] in intervals {
                    finite_all(&[*a, *b, *c, *d], "box interval")?;
                    if !(a < b && *c > 0.0 && *d > 0.0) {
                        return Err(BodyError::InvalidParameter(format!(
                            "box factor needs a < b, c > 0, d > 0 (got {a}, {b}, {c}, {d})"
                        )));
                    }
                }
                Ok(())
            }
            Self::Ball { center, radius } => {
                if center.is_empty() {
                    return Err(BodyError::InvalidParameter("ball center is empty".into()));
                }
                finite_all(center, "ball center")?;
                positive_all(&[*radius], "ball radius")
            }
            Self::VertexPolytope { vertices, symmetric } => {
                let d = vertices.first().map_or(0, Vec::len);
                if d == 0 || vertices.len() < d + 1 {
                    return Err(BodyError::InvalidParameter(
                        "polytope needs at least dim + 1 vertices".into(),
                    ));
                }
                for v in vertices {
                    if v.len() != d {
                        return Err(BodyError::DimensionMismatch { expected: d, got: v.len() });
                    }
                    finite_all(v, "vertex")?;
                }
                if *symmetric && !eval::vertices_symmetric(vertices) {
                    return Err(BodyError::InvalidParameter(
                        "polytope flagged symmetric but its vertex set is not".into(),
                    ));
                }
                Ok(())
            }
            Self::Cuboid { lower, upper } => {
                if lower.is_empty() || lower.len() != upper.len() {
                    return Err(BodyError::DimensionMismatch { expected: lower.len(), got: upper.len() });
                }
                finite_all(lower, "cuboid bound")?;
                finite_all(upper, "cuboid bound")?;
                if lower.iter().zip(upper).any(|(l, u)| l >= u) {
                    return Err(BodyError::InvalidParameter("cuboid needs lower < upper".into()));
                }
                Ok(())
            }
            Self::AxisEllipsoid { semi_axes } => positive_all(semi_axes, "semi-axes"),
            Self::Product { left, right } => {
                left.validate()?;
                right.validate()?;
                for d in [left.dim(), right.dim()] {
                    if d % 2 != 0 {
                        return Err(BodyError::InvalidParameter(format!(
                            "symplectic product factors need even dimension, got {d}"
                        )));
                    }
                }
                Ok(())
            }
            Self::LagrangianProduct { q, p } => {
                q.validate()?;
                p.validate()?;
                if q.dim() != p.dim() {
                    return Err(BodyError::DimensionMismatch { expected: q.dim(), got: p.dim() });
                }
                Ok(())
            }
            Self::Polar(b) => {
                b.validate()?;
                if !b.inside(&vec![0.0; b.dim()], true)? {
                    return Err(BodyError::OriginNotInterior);
                }
                Ok(())
            }
            Self::PSum { p, left, right } => {
                if !(p.is_finite() && *p >= 1.0) {
                    return Err(BodyError::InvalidParameter(format!("p-sum needs p >= 1, got {p}")));
                }
                left.validate()?;
                right.validate()?;
                if left.dim() != right.dim() {
                    return Err(BodyError::DimensionMismatch { expected: left.dim(), got: right.dim() });
                }
                let zero = vec![0.0; left.dim()];
                if !left.inside(&zero, true)? || !right.inside(&zero, true)? {
                    return Err(BodyError::OriginNotInterior);
                }
                Ok(())
            }
            Self::Scale { factor, body } => {
                positive_all(&[*factor], "scale factor")?;
                body.validate()
            }
            Self::Translate { shift, body } => {
                body.validate()?;
                if shift.len() != body.dim() {
                    return Err(BodyError::DimensionMismatch { expected: body.dim(), got: shift.len() });
                }
                finite_all(shift, "shift")
            }
            Self::SymmDiff(b) => b.validate(),
        }
    }

    fn check_dim(&self, v: &[f64]) -> Result<(), BodyError> {
        if v.len() != self.dim() {
            return Err(BodyError::DimensionMismatch { expected: self.dim(), got: v.len() });
        }
        Ok(())
    }

    /// Support function `h(w)` with a supporting point as subgradient.
    pub fn support(&self, w: &[f64]) -> Result<GaugeEval, BodyError> {
        self.check_dim(w)?;
        let mut s = vec![0.0; w.len()];
        let value = self.support_into(w, &mut s)?;
        Ok(GaugeEval { value, subgradient: s })
    }

    /// Minkowski gauge about the origin.
    pub fn gauge(&self, z: &[f64]) -> Result<GaugeEval, BodyError> {
        let o = vec![0.0; self.dim()];
        self.gauge_about(&o, z).map_err(|e| match e {
            BodyError::NotInterior => BodyError::OriginNotInterior,
            other => other,
        })
    }

    /// Gauge of `body - origin` at `z`; `origin` must be interior.
    pub fn gauge_about(&self, origin: &[f64], z: &[f64]) -> Result<GaugeEval, BodyError> {
        self.check_dim(origin)?;
        self.check_dim(z)?;
        let mut g = vec![0.0; z.len()];
        let value = self.gauge_about_into(origin, z, &mut g)?;
        Ok(GaugeEval { value, subgradient: g })
    }

    /// Squared gauge `H = j^2` about the origin.
    pub fn squared_gauge(&self, z: &[f64]) -> Result<GaugeEval, BodyError> {
        let GaugeEval { value, subgradient } = self.gauge(z)?;
        Ok(GaugeEval {
            value: value * value,
            subgradient: subgradient.iter().map(|g| 2.0 * value * g).collect(),
        })
    }

    /// Legendre dual of the squared gauge, `H*(w) = (h(w) / 2)^2`.
    pub fn legendre_dual(&self, w: &[f64]) -> Result<GaugeEval, BodyError> {
        if !self.inside(&vec![0.0; self.dim()], true)? {
            return Err(BodyError::OriginNotInterior);
        }
        let GaugeEval { value, subgradient } = self.support(w)?;
        let half = 0.5 * value;
        Ok(GaugeEval {
            value: half * half,
            subgradient: subgradient.iter().map(|s| half * s).collect(),
        })
    }

    /// Membership of `x`; `strict` asks for the interior.
    pub fn contains(&self, x: &[f64]) -> Result<bool, BodyError> {
        self.check_dim(x)?;
        self.inside(x, false)
    }

    pub fn contains_interior(&self, x: &[f64]) -> Result<bool, BodyError> {
        self.check_dim(x)?;
        self.inside(x, true)
    }

    /// Whether `h(w) = h(-w)` holds on a fixed set of sample directions.
    pub fn is_centrally_symmetric(&self) -> Result<bool, BodyError> {
        if let Self::VertexPolytope { symmetric, .. } = self {
            return Ok(*symmetric);
        }
        let d = self.dim();
        for w in sample_directions(d, 64, 0x5eed) {
            let a = self.support(&w)?.value;
            let neg: Vec<f64> = w.iter().map(|x| -x).collect();
            let b = self.support(&neg)?.value;
            if (a - b).abs() > 1e-9 * (1.0 + a.abs()) {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Structural rewrites that keep the body and shorten evaluation.
    pub fn simplified(&self) -> Self {
        use BodyExpr as B;
        match self {
            B::Polar(inner) => match inner.simplified() {
                B::Ball { center, radius } if center.iter().all(|c| *c == 0.0) => {
                    B::Ball { center, radius: 1.0 / radius }
                }
                B::Ellipsoid { radii } => B::Ellipsoid { radii: radii.iter().map(|r| 1.0 / r).collect() },
                B::AxisEllipsoid { semi_axes } => {
                    B::AxisEllipsoid { semi_axes: semi_axes.iter().map(|r| 1.0 / r).collect() }
                }
                B::Polar(k) => *k,
                B::Scale { factor, body } => B::Scale { factor: 1.0 / factor, body: Box::new(B::Polar(body)) },
                other => B::Polar(Box::new(other)),
            },
            B::Scale { factor, body } => match body.simplified() {
                B::Ball { center, radius } => B::Ball {
                    center: center.iter().map(|c| factor * c).collect(),
                    radius: factor * radius,
                },
                B::Ellipsoid { radii } => B::Ellipsoid { radii: radii.iter().map(|r| factor * r).collect() },
                B::Scale { factor: f2, body } => B::Scale { factor: factor * f2, body },
                other => B::Scale { factor: *factor, body: Box::new(other) },
            },
            B::Translate { shift, body } => match body.simplified() {
                B::Ball { center, radius } => B::Ball {
                    center: center.iter().zip(shift).map(|(c, s)| c + s).collect(),
                    radius,
                },
                B::Cuboid { lower, upper } => B::Cuboid {
                    lower: lower.iter().zip(shift).map(|(c, s)| c + s).collect(),
                    upper: upper.iter().zip(shift).map(|(c, s)| c + s).collect(),
                },
                B::Translate { shift: s2, body } => B::Translate {
                    shift: shift.iter().zip(&s2).map(|(a, b)| a + b).collect(),
                    body,
                },
                other => B::Translate { shift: shift.clone(), body: Box::new(other) },
            },
            B::PSum { p, left, right } => {
                let (l, r) = (left.simplified(), right.simplified());
                let (lf, lb) = split_scale(&l);
                let (rf, rb) = split_scale(&r);
                if lb == rb {
                    let factor = (lf.powf(*p) + rf.powf(*p)).powf(1.0 / p);
                    return B::Scale { factor, body: Box::new(lb) }.simplified();
                }
                B::PSum { p: *p, left: Box::new(l), right: Box::new(r) }
            }
            B::Product { left, right } => B::Product {
                left: Box::new(left.simplified()),
                right: Box::new(right.simplified()),
            },
            B::LagrangianProduct { q, p } => B::LagrangianProduct {
                q: Box::new(q.simplified()),
                p: Box::new(p.simplified()),
            },
            B::SymmDiff(b) => {
                let inner = b.simplified();
                if inner.is_centrally_symmetric().unwrap_or(false) && inner.is_origin_symmetric_leaf() {
                    return B::Scale { factor: 2.0, body: Box::new(inner) };
                }
                B::SymmDiff(Box::new(inner))
            }
            other => other.clone(),
        }
    }

    fn is_origin_symmetric_leaf(&self) -> bool {
        match self {
            Self::Ellipsoid { .. } | Self::Polydisc { .. } | Self::AxisEllipsoid { .. } => true,
            Self::Ball { center, .. } => center.iter().all(|c| *c == 0.0),
            Self::Cuboid { lower, upper } => lower.iter().zip(upper).all(|(l, u)| *l == -u),
            Self::VertexPolytope { symmetric, .. } => *symmetric,
            _ => false,
        }
    }

    /// Whether every gauge evaluation has a closed form (no inner
    /// minimization or linear program).
    pub fn has_fast_gauge(&self) -> bool {
        match self {
            Self::VertexPolytope { .. } | Self::PSum { .. } | Self::SymmDiff(_) => false,
            Self::Polar(b) => b.has_fast_gauge() && b.has_fast_support(),
            Self::Product { left, right } => left.has_fast_gauge() && right.has_fast_gauge(),
            Self::LagrangianProduct { q, p } => q.has_fast_gauge() && p.has_fast_gauge(),
            Self::Scale { body, .. } | Self::Translate { body, .. } => body.has_fast_gauge(),
            _ => true,
        }
    }

    fn has_fast_support(&self) -> bool {
        match self {
            Self::Polar(b) => b.has_fast_gauge(),
            Self::Product { left, right } | Self::PSum { left, right, .. } => {
                left.has_fast_support() && right.has_fast_support()
            }
            Self::LagrangianProduct { q, p } => q.has_fast_support() && p.has_fast_support(),
            Self::Scale { body, .. } | Self::Translate { body, .. } | Self::SymmDiff(body) => {
                body.has_fast_support()
            }
            _ => true,
        }
    }
}

fn split_scale(b: &BodyExpr) -> (f64, BodyExpr) {
    match b {
        BodyExpr::Scale { factor, body } => {
            let (f, inner) = split_scale(body);
            (factor * f, inner)
        }
        // centred balls are dilates of the unit ball
        BodyExpr::Ball { center, radius } if center.iter().all(|c| *c == 0.0) => {
            (*radius, BodyExpr::Ball { center: center.clone(), radius: 1.0 })
        }
        other => (1.0, other.clone()),
    }
}

/// Deterministic unit directions: the signed axes followed by Gaussian
/// samples.
pub(crate) fn sample_directions(dim: usize, extra: usize, seed: u64) -> Vec<Vec<f64>> {
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};
    let mut out = Vec::with_capacity(2 * dim + extra);
    for i in 0..dim {
        for s in [1.0, -1.0] {
            let mut e = vec![0.0; dim];
            e[i] = s;
            out.push(e);
        }
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    while out.len() < 2 * dim + extra {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            out.push(v.iter().map(|x| x / n).collect());
        }
    }
    out
}
