//! Linear-symplectic primitives on `R^{2n}`.
//!
//! Vectors are stored in `(q_1..q_n, p_1..p_n)` order. A [`Frame`] fixes the
//! coisotropic subspace `R^{n,k} = {p_{k+1} = .. = p_n = 0}` together with its
//! characteristic directions `V0 = span(q_{k+1}..q_n)` and the symplectic
//! part `V1 = span(q_1..q_k, p_1..p_k)`. Every projection below is a
//! coordinate mask in this order.

use serde::{Deserialize, Serialize};

/// Relative tolerance used by membership predicates.
pub const DEFAULT_TOL: f64 = 1e-9;

#[derive(thiserror::Error, Debug, Clone, PartialEq)]
pub enum SymplecticError {
    #[error("invalid frame: need n >= 1 and 0 <= k <= n (got n={n}, k={k})")]
    InvalidFrame { n: usize, k: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("vector lies off R^{{n,k}} (residual {residual:.3e})")]
    OffSubspace { residual: f64 },
    #[error("path needs at least 2 samples, got {0}")]
    TooFewSamples(usize),
}

/// Half-dimension `n` and coisotropic index `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Frame {
    n: usize,
    k: usize,
}

impl Frame {
    pub fn new(n: usize, k: usize) -> Result<Self, SymplecticError> {
        if n == 0 || k > n {
            return Err(SymplecticError::InvalidFrame { n, k });
        }
        Ok(Self { n, k })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Ambient dimension `2n`.
    pub fn dim(&self) -> usize {
        2 * self.n
    }

    /// `k = n`: closed characteristics, the Hofer-Zehnder case.
    pub fn is_periodic(&self) -> bool {
        self.k == self.n
    }

    pub fn subspace_dim(&self, s: Subspace) -> usize {
        match s {
            Subspace::Rnk => self.n + self.k,
            Subspace::V0 | Subspace::JV0 => self.n - self.k,
            Subspace::V1 => 2 * self.k,
        }
    }

    /// Coordinate indices spanning `s`.
    pub fn indices(&self, s: Subspace) -> Vec<usize> {
        let (n, k) = (self.n, self.k);
        match s {
            Subspace::Rnk => (0..n).chain(n..n + k).collect(),
            Subspace::V0 => (k..n).collect(),
            Subspace::V1 => (0..k).chain(n..n + k).collect(),
            Subspace::JV0 => (n + k..2 * n).collect(),
        }
    }

    /// Whether coordinate `i` belongs to `s`.
    #[inline]
    pub fn in_subspace(&self, s: Subspace, i: usize) -> bool {
        let (n, k) = (self.n, self.k);
        match s {
            Subspace::Rnk => i < n + k,
            Subspace::V0 => i >= k && i < n,
            Subspace::V1 => i < k || (i >= n && i < n + k),
            Subspace::JV0 => i >= n + k && i < 2 * n,
        }
    }

    pub fn check_len(&self, v: &[f64]) -> Result<(), SymplecticError> {
        if v.len() != self.dim() {
            return Err(SymplecticError::DimensionMismatch {
                expected: self.dim(),
                got: v.len(),
            });
        }
        Ok(())
    }
}

/// Coordinate subspaces attached to a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Subspace {
    Rnk,
    V0,
    V1,
    JV0,
}

/// `J(q, p) = (-p, q)` written into `out`.
#[inline]
pub fn apply_j_into(v: &[f64], out: &mut [f64]) {
    let n = v.len() / 2;
    for i in 0..n {
        out[i] = -v[n + i];
        out[n + i] = v[i];
    }
}

/// `J(q, p) = (-p, q)`.
pub fn apply_j(v: &[f64]) -> Result<Vec<f64>, SymplecticError> {
    if v.is_empty() || !v.len().is_multiple_of(2) {
        return Err(SymplecticError::DimensionMismatch {
            expected: v.len() + v.len() % 2,
            got: v.len(),
        });
    }
    let mut out = vec![0.0; v.len()];
    apply_j_into(v, &mut out);
    Ok(out)
}

/// Standard symplectic form `omega(u, v) = <Ju, v>`.
pub fn omega(u: &[f64], v: &[f64]) -> f64 {
    let n = u.len() / 2;
    (0..n).map(|i| -u[n + i] * v[i] + u[i] * v[n + i]).sum()
}

/// Orthogonal projection onto `s`, in place.
#[inline]
pub fn project_in_place(frame: &Frame, s: Subspace, v: &mut [f64]) {
    for (i, x) in v.iter_mut().enumerate() {
        if !frame.in_subspace(s, i) {
            *x = 0.0;
        }
    }
}

/// Orthogonal projection onto `s`.
pub fn project(frame: &Frame, s: Subspace, v: &[f64]) -> Result<Vec<f64>, SymplecticError> {
    frame.check_len(v)?;
    let mut out = v.to_vec();
    project_in_place(frame, s, &mut out);
    Ok(out)
}

/// Projection onto the orthogonal complement of `s`.
pub fn project_complement(
    frame: &Frame,
    s: Subspace,
    v: &[f64],
) -> Result<Vec<f64>, SymplecticError> {
    frame.check_len(v)?;
    Ok(v
        .iter()
        .enumerate()
        .map(|(i, &x)| if frame.in_subspace(s, i) { 0.0 } else { x })
        .collect())
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Distance from `v` to `R^{n,k}`, i.e. the norm of its `J V0` part.
pub fn off_rnk_residual(frame: &Frame, v: &[f64]) -> f64 {
    v.iter()
        .enumerate()
        .filter(|(i, _)| frame.in_subspace(Subspace::JV0, *i))
        .map(|(_, x)| x * x)
        .sum::<f64>()
        .sqrt()
}

/// Leaf relation on `R^{n,k}`: `y` lies in `x + V0`.
///
/// `tol` is relative to `max(1, |x|, |y|)`. Both points must lie on
/// `R^{n,k}` within the same tolerance.
pub fn leaf_equivalent(
    frame: &Frame,
    x: &[f64],
    y: &[f64],
    tol: f64,
) -> Result<bool, SymplecticError> {
    frame.check_len(x)?;
    frame.check_len(y)?;
    let scale = norm(x).max(norm(y)).max(1.0);
    for v in [x, y] {
        let r = off_rnk_residual(frame, v);
        if r > tol * scale {
            return Err(SymplecticError::OffSubspace { residual: r });
        }
    }
    let diff: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    let off = project_complement(frame, Subspace::V0, &diff)?;
    Ok(norm(&off) <= tol * scale)
}

/// Samples `x_0..x_N` of a path on `[0, 1]` at `t_j = j / N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretePath {
    pub frame: Frame,
    pub samples: Vec<Vec<f64>>,
}

impl DiscretePath {
    pub fn new(frame: Frame, samples: Vec<Vec<f64>>) -> Result<Self, SymplecticError> {
        if samples.len() < 2 {
            return Err(SymplecticError::TooFewSamples(samples.len()));
        }
        for s in &samples {
            frame.check_len(s)?;
        }
        Ok(Self { frame, samples })
    }

    /// Number of segments `N`.
    pub fn segments(&self) -> usize {
        self.samples.len() - 1
    }

    /// Velocity `N (x_{j+1} - x_j)` of segment `j`.
    pub fn velocity(&self, j: usize) -> Vec<f64> {
        let n = self.segments() as f64;
        self.samples[j + 1]
            .iter()
            .zip(&self.samples[j])
            .map(|(b, a)| n * (b - a))
            .collect()
    }

    /// Trapezoid-rule mean of the samples.
    pub fn trapezoid_mean(&self) -> Vec<f64> {
        let big_n = self.segments();
        let d = self.frame.dim();
        let mut m = vec![0.0; d];
        for (j, s) in self.samples.iter().enumerate() {
            let w = if j == 0 || j == big_n { 0.5 } else { 1.0 };
            for i in 0..d {
                m[i] += w * s[i];
            }
        }
        m.iter_mut().for_each(|x| *x /= big_n as f64);
        m
    }

    pub fn scaled(&self, lambda: f64) -> Self {
        Self {
            frame: self.frame,
            samples: self
                .samples
                .iter()
                .map(|s| s.iter().map(|x| lambda * x).collect())
                .collect(),
        }
    }

    pub fn translated(&self, b: &[f64]) -> Self {
        Self {
            frame: self.frame,
            samples: self
                .samples
                .iter()
                .map(|s| s.iter().zip(b).map(|(x, y)| x + y).collect())
                .collect(),
        }
    }

    /// Largest violation of the endpoint and mean conditions that cut out
    /// the admissible path class.
    pub fn constraint_residual(&self) -> f64 {
        let f = &self.frame;
        let first = &self.samples[0];
        let last = &self.samples[self.segments()];
        let diff: Vec<f64> = last.iter().zip(first).map(|(a, b)| a - b).collect();
        let mut mean = self.trapezoid_mean();
        project_in_place(f, Subspace::Rnk, &mut mean);
        let off_leaf = project_complement(f, Subspace::V0, &diff).unwrap_or_default();
        off_rnk_residual(f, first)
            .max(off_rnk_residual(f, last))
            .max(norm(&off_leaf))
            .max(norm(&mean))
    }
}

/// Discrete action `1/2 sum <-J(x_{j+1} - x_j), (x_j + x_{j+1}) / 2>`.
///
/// Exact on polylines.
pub fn action(path: &DiscretePath) -> f64 {
    action_of_samples(&path.samples)
}

pub(crate) fn action_of_samples(samples: &[Vec<f64>]) -> f64 {
    let d = samples[0].len();
    let n = d / 2;
    let mut acc = 0.0;
    for w in samples.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        for i in 0..n {
            let dq = b[i] - a[i];
            let dp = b[n + i] - a[n + i];
            let mq = 0.5 * (a[i] + b[i]);
            let mp = 0.5 * (a[n + i] + b[n + i]);
            // -J(dq, dp) = (dp, -dq)
            acc += dp * mq - dq * mp;
        }
    }
    0.5 * acc
}
