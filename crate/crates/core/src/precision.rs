//! Working precisions and the scalar abstraction shared by every kernel.
//!
//! All master data lives in `f64`. Kernels that can run in single precision
//! are generic over [`Scalar`], which is implemented for `f32` and `f64` only.

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use serde::{Deserialize, Serialize};

use crate::sparse::CsrMatrix;

/// IEEE-754 storage format of a vector or kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    /// binary32
    Single,
    /// binary64
    Double,
}

impl Precision {
    /// Unit roundoff `u = 2^-p` for round-to-nearest.
    pub fn unit_roundoff(self) -> f64 {
        match self {
            Precision::Single => f32::UNIT_ROUNDOFF,
            Precision::Double => f64::UNIT_ROUNDOFF,
        }
    }
}

/// Which parts of a solve may run in single precision.
///
/// `Hybrid` runs the Krylov basis construction (operator application and
/// orthogonalization) in binary32; residuals, least squares and the solution
/// update always run in binary64.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrecisionPolicy {
    #[default]
    #[serde(rename = "double")]
    DoubleOnly,
    Hybrid,
}

impl PrecisionPolicy {
    pub fn low(self) -> Precision {
        Precision::Single
    }

    pub fn high(self) -> Precision {
        Precision::Double
    }

    /// Precision of the Arnoldi loop under this policy.
    pub fn working(self) -> Precision {
        match self {
            PrecisionPolicy::DoubleOnly => Precision::Double,
            PrecisionPolicy::Hybrid => Precision::Single,
        }
    }
}

/// Floating-point element type a kernel can run in.
pub trait Scalar:
    num_traits::Float
    + Default
    + Debug
    + Send
    + Sync
    + AddAssign
    + SubAssign
    + MulAssign
    + Sum
    + 'static
{
    const PRECISION: Precision;
    const UNIT_ROUNDOFF: f64;

    /// Round-to-nearest-even conversion from binary64.
    fn narrow(v: f64) -> Self;
    /// Exact widening (or identity) to binary64.
    fn widen(self) -> f64;
    /// Matrix values in this precision, materializing the binary32 cache if needed.
    fn matrix_values(a: &CsrMatrix) -> &[Self];
}

impl Scalar for f32 {
    const PRECISION: Precision = Precision::Single;
    const UNIT_ROUNDOFF: f64 = 5.960_464_477_539_063e-8; // 2^-24

    #[inline]
    fn narrow(v: f64) -> Self {
        v as f32
    }

    #[inline]
    fn widen(self) -> f64 {
        self as f64
    }

    fn matrix_values(a: &CsrMatrix) -> &[Self] {
        a.values_low()
    }
}

impl Scalar for f64 {
    const PRECISION: Precision = Precision::Double;
    const UNIT_ROUNDOFF: f64 = 1.110_223_024_625_156_5e-16; // 2^-53

    #[inline]
    fn narrow(v: f64) -> Self {
        v
    }

    #[inline]
    fn widen(self) -> f64 {
        self
    }

    fn matrix_values(a: &CsrMatrix) -> &[Self] {
        a.values()
    }
}

/// Converts a slice between precisions, entry by entry.
pub fn cast_slice<S: Scalar, T: Scalar>(x: &[S]) -> Vec<T> {
    x.iter().map(|&v| T::narrow(v.widen())).collect()
}

/// A vector tagged with its storage precision.
#[derive(Debug, Clone, PartialEq)]
pub enum DenseVector {
    Single(Vec<f32>),
    Double(Vec<f64>),
}

impl DenseVector {
    pub fn len(&self) -> usize {
        match self {
            DenseVector::Single(v) => v.len(),
            DenseVector::Double(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn precision(&self) -> Precision {
        match self {
            DenseVector::Single(_) => Precision::Single,
            DenseVector::Double(_) => Precision::Double,
        }
    }

    /// Round-to-nearest-even on narrowing; widening is exact.
    pub fn cast(&self, target: Precision) -> DenseVector {
        match (self, target) {
            (DenseVector::Single(v), Precision::Single) => DenseVector::Single(v.clone()),
            (DenseVector::Double(v), Precision::Double) => DenseVector::Double(v.clone()),
            (DenseVector::Single(v), Precision::Double) => DenseVector::Double(cast_slice(v)),
            (DenseVector::Double(v), Precision::Single) => DenseVector::Single(cast_slice(v)),
        }
    }

    /// Entries widened to binary64.
    pub fn to_f64(&self) -> Vec<f64> {
        match self {
            DenseVector::Single(v) => cast_slice(v),
            DenseVector::Double(v) => v.clone(),
        }
    }
}

impl From<Vec<f64>> for DenseVector {
    fn from(v: Vec<f64>) -> Self {
        DenseVector::Double(v)
    }
}

impl From<Vec<f32>> for DenseVector {
    fn from(v: Vec<f32>) -> Self {
        DenseVector::Single(v)
    }
}
