//! Subspace algebra on orthonormal bases.
//!
//! Every subspace is stored as an `ambient_dim x dim` matrix with
//! orthonormal columns. Zero-dimensional subspaces are ordinary values
//! (an `n x 0` basis), so chains of intersections never need special
//! casing by the caller.
//!
//! Rank decisions on raw matrices use the usual numerical-rank rule
//! (`max(rows, cols) * eps * sigma_max`) unless an explicit absolute
//! tolerance is supplied. Operations that combine subspaces, or map them
//! through a matrix, use [`SUBSPACE_RTOL`] relative to the scale of the
//! operands, since their inputs already carry rounding noise.

use nalgebra::SymmetricEigen;

use crate::error::{Error, Result};
use crate::linalg::{hstack, norm2, svd, vstack, Mat, Vector};

/// Relative tolerance for rank decisions between already-computed subspaces.
pub const SUBSPACE_RTOL: f64 = 1e-10;
/// Default largest principal angle (radians) accepted by [`Subspace::equals`].
pub const DEFAULT_ANGLE_TOL: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct Subspace {
    basis: Mat,
    tol: f64,
}

fn check_finite(m: &Mat, what: &'static str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

fn default_rank_tol(m: &Mat) -> f64 {
    let smax = norm2(m);
    (m.nrows().max(m.ncols()) as f64) * f64::EPSILON * smax
}

impl Subspace {
    pub fn zero(n: usize) -> Self {
        Subspace { basis: Mat::zeros(n, 0), tol: 0.0 }
    }

    pub fn full(n: usize) -> Self {
        Subspace { basis: Mat::identity(n, n), tol: 0.0 }
    }

    /// `im m` with the default numerical-rank tolerance.
    pub fn column_space(m: &Mat) -> Result<Self> {
        check_finite(m, "column_space input")?;
        Self::column_space_tol(m, default_rank_tol(m))
    }

    /// `im m`, treating singular values `<= tol` as zero.
    pub fn column_space_tol(m: &Mat, tol: f64) -> Result<Self> {
        check_finite(m, "column_space input")?;
        let n = m.nrows();
        if m.ncols() == 0 || n == 0 {
            return Ok(Subspace { basis: Mat::zeros(n, 0), tol });
        }
        let d = svd(m);
        let keep = d.s.iter().take_while(|s| **s > tol).count();
        let basis = d.u.columns(0, keep).into_owned();
        Ok(Subspace { basis, tol })
    }

    /// `ker m` with the default numerical-rank tolerance.
    pub fn kernel(m: &Mat) -> Result<Self> {
        check_finite(m, "kernel input")?;
        Self::kernel_tol(m, default_rank_tol(m))
    }

    pub fn kernel_tol(m: &Mat, tol: f64) -> Result<Self> {
        check_finite(m, "kernel input")?;
        let mut k = Self::column_space_tol(&m.transpose(), tol)?.complement();
        k.tol = tol;
        Ok(k)
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> &Mat {
        &self.basis
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn is_zero(&self) -> bool {
        self.dim() == 0
    }

    pub fn is_full(&self) -> bool {
        self.dim() == self.ambient_dim()
    }

    /// Orthogonal projector onto the subspace.
    pub fn projector(&self) -> Mat {
        &self.basis * self.basis.transpose()
    }

    pub fn project(&self, v: &Vector) -> Vector {
        &self.basis * (self.basis.transpose() * v)
    }

    /// Orthogonal complement, from the eigenvectors of `I - B B^T`.
    pub fn complement(&self) -> Subspace {
        let n = self.ambient_dim();
        if self.dim() == 0 {
            return Subspace { basis: Mat::identity(n, n), tol: self.tol };
        }
        if self.dim() == n {
            return Subspace { basis: Mat::zeros(n, 0), tol: self.tol };
        }
        let p = Mat::identity(n, n) - self.projector();
        let eig = SymmetricEigen::new(p);
        let keep: Vec<usize> = eig
            .eigenvalues
            .iter()
            .enumerate()
            .filter(|(_, l)| **l > 0.5)
            .map(|(i, _)| i)
            .collect();
        let mut basis = Mat::zeros(n, keep.len());
        for (j, &i) in keep.iter().enumerate() {
            basis.set_column(j, &eig.eigenvectors.column(i));
        }
        Subspace { basis, tol: self.tol }
    }

    fn check_same_ambient(&self, other: &Subspace) -> Result<()> {
        if self.ambient_dim() != other.ambient_dim() {
            return Err(Error::Dimension(format!(
                "subspaces live in R^{} and R^{}",
                self.ambient_dim(),
                other.ambient_dim()
            )));
        }
        Ok(())
    }

    pub fn sum(&self, other: &Subspace) -> Result<Subspace> {
        self.check_same_ambient(other)?;
        let n = self.ambient_dim();
        let stacked = hstack(n, &[&self.basis, &other.basis]);
        Self::column_space_tol(&stacked, SUBSPACE_RTOL)
    }

    /// Intersection as the common kernel of both complement projections.
    pub fn intersect(&self, other: &Subspace) -> Result<Subspace> {
        self.check_same_ambient(other)?;
        let n = self.ambient_dim();
        if self.is_zero() || other.is_full() {
            return Ok(self.clone());
        }
        if other.is_zero() || self.is_full() {
            return Ok(other.clone());
        }
        let c1 = self.complement();
        let c2 = other.complement();
        let stacked = vstack(n, &[&c1.basis.transpose(), &c2.basis.transpose()]);
        Self::kernel_tol(&stacked, SUBSPACE_RTOL)
    }

    /// `{x : m x in s}`.
    pub fn preimage(m: &Mat, s: &Subspace) -> Result<Subspace> {
        check_finite(m, "preimage map")?;
        if m.nrows() != s.ambient_dim() {
            return Err(Error::Dimension(format!(
                "preimage of subspace of R^{} under {}x{} map",
                s.ambient_dim(),
                m.nrows(),
                m.ncols()
            )));
        }
        let n = m.ncols();
        if s.is_full() {
            return Ok(Subspace::full(n));
        }
        let scale = norm2(m);
        if scale == 0.0 {
            return Ok(Subspace::full(n));
        }
        let perp = s.complement();
        let constraint = perp.basis.transpose() * m;
        Self::kernel_tol(&constraint, SUBSPACE_RTOL * scale)
    }

    /// `m * self`.
    pub fn image(&self, m: &Mat) -> Result<Subspace> {
        check_finite(m, "image map")?;
        if m.ncols() != self.ambient_dim() {
            return Err(Error::Dimension(format!(
                "image of subspace of R^{} under {}x{} map",
                self.ambient_dim(),
                m.nrows(),
                m.ncols()
            )));
        }
        let scale = norm2(m);
        Self::column_space_tol(&(m * &self.basis), SUBSPACE_RTOL * scale.max(f64::MIN_POSITIVE))
    }

    /// Largest principal angle, or `None` when dimensions differ.
    pub fn max_angle(&self, other: &Subspace) -> Option<f64> {
        if self.ambient_dim() != other.ambient_dim() || self.dim() != other.dim() {
            return None;
        }
        if self.dim() == 0 {
            return Some(0.0);
        }
        let resid = &other.basis - &self.basis * (self.basis.transpose() * &other.basis);
        Some(norm2(&resid).min(1.0).asin())
    }

    pub fn equals(&self, other: &Subspace, angle_tol: f64) -> bool {
        matches!(self.max_angle(other), Some(a) if a < angle_tol)
    }

    /// `|v - P v| <= tol * |v|`.
    pub fn contains(&self, v: &Vector, tol: f64) -> bool {
        if v.len() != self.ambient_dim() {
            return false;
        }
        let r = v - self.project(v);
        r.norm() <= tol * v.norm()
    }

    /// `self` contained in `other` (every basis vector within `tol`).
    pub fn is_subspace_of(&self, other: &Subspace, tol: f64) -> bool {
        self.basis
            .column_iter()
            .all(|c| other.contains(&c.into_owned(), tol))
    }
}
