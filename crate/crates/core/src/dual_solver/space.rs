//! The linear path class as an explicit subspace of `R^{(N+1) 2n}`.

use super::SolveError;
use crate::symplectic_core::{DiscretePath, Frame, Subspace};
use nalgebra::{DMatrix, DVector};

/// Paths `x_0..x_N` with both endpoints on `R^{n,k}`, endpoint offset in
/// `V0` and trapezoid mean in `J V0`.
///
/// The constraints are stored as a short dense matrix (one row per scalar
/// condition), so projection stays cheap for large `N`; an orthonormal
/// basis is only formed on request.
#[derive(Debug, Clone)]
pub struct ConstraintSpace {
    frame: Frame,
    segments: usize,
    rows: DMatrix<f64>,
    gram_inv: DMatrix<f64>,
}

impl ConstraintSpace {
    pub fn build(frame: Frame, segments: usize) -> Result<Self, SolveError> {
        if segments < 16 {
            return Err(SolveError::InvalidConfig(format!("need at least 16 segments, got {segments}")));
        }
        let d = frame.dim();
        let m = (segments + 1) * d;
        let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
        let at = |j: usize, c: usize| j * d + c;
        for c in frame.indices(Subspace::JV0) {
            rows.push(vec![(at(0, c), 1.0)]);
            rows.push(vec![(at(segments, c), 1.0)]);
        }
        for c in frame.indices(Subspace::V1) {
            rows.push(vec![(at(segments, c), 1.0), (at(0, c), -1.0)]);
        }
        for c in frame.indices(Subspace::Rnk) {
            rows.push(
                (0..=segments)
                    .map(|j| {
                        let w = if j == 0 || j == segments { 0.5 } else { 1.0 };
                        (at(j, c), w / segments as f64)
                    })
                    .collect(),
            );
        }
        let mut mat = DMatrix::zeros(rows.len(), m);
        for (r, row) in rows.iter().enumerate() {
            for &(c, v) in row {
                mat[(r, c)] = v;
            }
        }
        let gram = &mat * mat.transpose();
        let rank = gram.clone().svd(false, false).singular_values.iter().filter(|s| **s > 1e-12).count();
        let expected = 3 * frame.n() + frame.k();
        if rank != expected || rows.len() != expected {
            return Err(SolveError::InvalidConfig(format!(
                "constraint audit failed: rank {rank}, expected {expected}"
            )));
        }
        let gram_inv = gram
            .try_inverse()
            .ok_or_else(|| SolveError::InvalidConfig("singular constraint Gram matrix".into()))?;
        Ok(Self { frame, segments, rows: mat, gram_inv })
    }

    pub fn frame(&self) -> Frame {
        self.frame
    }

    pub fn segments(&self) -> usize {
        self.segments
    }

    pub fn ambient_dimension(&self) -> usize {
        self.rows.ncols()
    }

    pub fn codimension(&self) -> usize {
        self.rows.nrows()
    }

    pub fn dimension(&self) -> usize {
        self.ambient_dimension() - self.codimension()
    }

    fn flatten(&self, path: &DiscretePath) -> Result<DVector<f64>, SolveError> {
        if path.frame != self.frame || path.segments() != self.segments {
            return Err(SolveError::InvalidConfig("path does not match the constraint space".into()));
        }
        Ok(DVector::from_iterator(self.ambient_dimension(), path.samples.iter().flatten().copied()))
    }

    /// Largest violated constraint.
    pub fn residual(&self, path: &DiscretePath) -> Result<f64, SolveError> {
        let x = self.flatten(path)?;
        Ok((&self.rows * x).amax())
    }

    /// Orthogonal projection onto the subspace.
    pub fn project(&self, path: &DiscretePath) -> Result<DiscretePath, SolveError> {
        let x = self.flatten(path)?;
        let lam = &self.gram_inv * (&self.rows * &x);
        let y = x - self.rows.transpose() * lam;
        let d = self.frame.dim();
        let samples = y.as_slice().chunks(d).map(|c| c.to_vec()).collect();
        Ok(DiscretePath { frame: self.frame, samples })
    }

    /// Orthonormal basis as matrix columns. Costs `O(m^3)` for ambient
    /// dimension `m`, so meant for audits at small `N`.
    pub fn basis(&self) -> DMatrix<f64> {
        let m = self.ambient_dimension();
        let r = self.codimension();
        let row_space = self.rows.transpose().qr().q();
        let mut cols: Vec<DVector<f64>> = Vec::with_capacity(m - r);
        for i in 0..m {
            if cols.len() == m - r {
                break;
            }
            let mut v = DVector::zeros(m);
            v[i] = 1.0;
            for _ in 0..2 {
                let c = row_space.transpose() * &v;
                v -= &row_space * c;
                for b in &cols {
                    let c = b.dot(&v);
                    v.axpy(-c, b, 1.0);
                }
            }
            let nv = v.norm();
            if nv > 1e-6 {
                cols.push(v / nv);
            }
        }
        DMatrix::from_columns(&cols)
    }

    /// Largest constraint value over the basis columns.
    pub fn basis_residual(&self, basis: &DMatrix<f64>) -> f64 {
        (&self.rows * basis).amax()
    }
}
