//! Half-integer Matérn radial basis functions and their rescaled variants.
//!
//! Profiles are normalized to 1 at the origin. With `beta` the smoothness
//! index, the radial profiles are
//!
//! | family     | beta | profile                   |
//! |------------|------|---------------------------|
//! | `matern12` | 1/2  | `exp(-r)`                 |
//! | `matern32` | 3/2  | `(1 + r) exp(-r)`         |
//! | `matern52` | 5/2  | `(1 + r + r^2/3) exp(-r)` |
//!
//! A [`KernelSpec`] adds the length scale `delta` and evaluates
//! `delta^-d * profile(|x - y| / delta)`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PointSet;
use crate::linalg::Matrix;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum KernelFamily {
    #[serde(rename = "matern12")]
    Matern12,
    #[serde(rename = "matern32")]
    Matern32,
    #[serde(rename = "matern52")]
    Matern52,
}

impl KernelFamily {
    pub const ALL: [KernelFamily; 3] = [Self::Matern12, Self::Matern32, Self::Matern52];

    pub fn from_smoothness(beta: f64) -> Result<Self> {
        match beta {
            b if b == 0.5 => Ok(Self::Matern12),
            b if b == 1.5 => Ok(Self::Matern32),
            b if b == 2.5 => Ok(Self::Matern52),
            b => Err(Error::UnsupportedSmoothness(b)),
        }
    }

    pub fn smoothness(self) -> f64 {
        match self {
            Self::Matern12 => 0.5,
            Self::Matern32 => 1.5,
            Self::Matern52 => 2.5,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Matern12 => "matern12",
            Self::Matern32 => "matern32",
            Self::Matern52 => "matern52",
        }
    }

    #[inline]
    pub fn profile<T: Scalar>(self, r: T) -> T {
        let e = (-r).exp();
        match self {
            Self::Matern12 => e,
            Self::Matern32 => (T::one() + r) * e,
            Self::Matern52 => (T::one() + r + r * r / T::of(3.0)) * e,
        }
    }

    /// Smallest `r` (up to bisection accuracy) with `profile(r) <= tol`.
    pub fn tail_radius<T: Scalar>(self, tol: T) -> T {
        if tol >= T::one() {
            return T::zero();
        }
        let mut hi = T::one();
        while self.profile(hi) > tol {
            hi = hi + hi;
        }
        let mut lo = T::zero();
        for _ in 0..200 {
            let mid = T::of(0.5) * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.profile(mid) > tol {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    }
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "matern12" => Ok(Self::Matern12),
            "matern32" => Ok(Self::Matern32),
            "matern52" => Ok(Self::Matern52),
            other => Err(Error::UnknownKernel(other.to_string())),
        }
    }
}

/// Normalized half-integer Matérn profile for smoothness index `beta`.
pub fn matern_profile<T: Scalar>(beta: f64, r: T) -> Result<T> {
    Ok(KernelFamily::from_smoothness(beta)?.profile(r))
}

/// A Matérn family with length scale and spatial dimension.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelSpec<T> {
    family: KernelFamily,
    scale: T,
    dim: usize,
    inv_scale: T,
    prefactor: T,
}

impl<T: Scalar> KernelSpec<T> {
    pub fn new(family: KernelFamily, scale: T, dim: usize) -> Result<Self> {
        if !(scale > T::zero() && scale.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "kernel scale {scale} must be positive"
            )));
        }
        if dim == 0 {
            return Err(Error::InvalidInput(
                "kernel dimension must be positive".into(),
            ));
        }
        Ok(Self {
            family,
            scale,
            dim,
            inv_scale: T::one() / scale,
            prefactor: scale.powi(-(dim as i32)),
        })
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn scale(&self) -> T {
        self.scale
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Same family and scale multiplied by a constant (`alpha * Phi`).
    pub fn scaled_by(&self, alpha: T) -> Self {
        Self {
            prefactor: self.prefactor * alpha,
            ..*self
        }
    }

    /// Kernel value for two points at Euclidean distance `r`.
    #[inline]
    pub fn at_distance(&self, r: T) -> T {
        self.prefactor * self.family.profile(r * self.inv_scale)
    }

    pub fn eval(&self, x: &[T], y: &[T]) -> Result<T> {
        for p in [x, y] {
            if p.len() != self.dim {
                return Err(Error::DimensionMismatch {
                    expected: self.dim,
                    found: p.len(),
                });
            }
        }
        Ok(self.eval_unchecked(x, y))
    }

    #[inline]
    pub fn eval_unchecked(&self, x: &[T], y: &[T]) -> T {
        self.at_distance(crate::scalar::distance(x, y))
    }

    /// Distance beyond which the kernel is below `tol` times its peak value.
    pub fn tail_radius(&self, tol: T) -> T {
        self.scale * self.family.tail_radius(tol)
    }

    /// Fills `out` (row-major, `rows.len()/d x cols.len()/d`) with kernel values
    /// between two flat coordinate buffers.
    pub(crate) fn fill_block(&self, rows: &[T], cols: &[T], out: &mut [T]) {
        let d = self.dim;
        let nc = cols.len() / d;
        for (i, x) in rows.chunks_exact(d).enumerate() {
            let dst = &mut out[i * nc..(i + 1) * nc];
            for (o, y) in dst.iter_mut().zip(cols.chunks_exact(d)) {
                *o = self.eval_unchecked(x, y);
            }
        }
    }
}

/// Dense generalized Vandermonde matrix `[Phi(x_i - y_j)]`.
pub fn vandermonde_dense<T: Scalar>(
    spec: &KernelSpec<T>,
    rows: &PointSet<T>,
    cols: &PointSet<T>,
) -> Result<Matrix<T>> {
    for set in [rows, cols] {
        if set.dim() != spec.dim() {
            return Err(Error::DimensionMismatch {
                expected: spec.dim(),
                found: set.dim(),
            });
        }
    }
    let mut data = vec![T::zero(); rows.len() * cols.len()];
    spec.fill_block(rows.coords(), cols.coords(), &mut data);
    Ok(Matrix::from_row_major(rows.len(), cols.len(), data))
}
