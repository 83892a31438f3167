//! Floating-point scalar abstraction shared by every numeric module.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real scalar usable throughout the pipeline.
///
/// The tolerances are per-precision because the PSD and symmetry checks in
/// the eigensolver must scale with machine epsilon.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + Default
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Send
    + Sync
    + 'static
{
    /// Largest allowed |a_ij - a_ji| for a matrix accepted as symmetric.
    const SYMMETRY_TOL: f64;
    /// Eigenvalues in [-PSD_TOL, 0] are clamped to zero; below is rejected.
    const PSD_TOL: f64;
    /// Variance offset inside layer normalization.
    const LAYER_NORM_EPS: f64 = 1e-5;

    /// Lossless for f64, rounding for f32.
    #[inline]
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 is representable in every Scalar")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("Scalar converts to f64")
    }

    fn usize(v: usize) -> Self {
        Self::of(v as f64)
    }
}

impl Scalar for f64 {
    const SYMMETRY_TOL: f64 = 1e-10;
    const PSD_TOL: f64 = 1e-10;
}

impl Scalar for f32 {
    const SYMMETRY_TOL: f64 = 1e-5;
    const PSD_TOL: f64 = 1e-4;
}
