//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Real floating-point scalar the solvers are generic over.
///
/// Implemented for `f32` and `f64`. The associated tolerances let checks that
/// are stated for double precision scale sensibly to single precision.
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + Default + Debug + Display + Send + Sync + 'static
{
    /// Slack used for orthonormality and symmetry checks.
    const CHECK_TOL: f64;
    /// Slack used for monotonicity and inequality checks, relative to magnitude.
    const ORDER_TOL: f64;

    /// Lossy conversion from `f64`.
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 is representable in every Real")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("Real converts to f64")
    }
}

impl Real for f64 {
    const CHECK_TOL: f64 = 1e-8;
    const ORDER_TOL: f64 = 1e-9;
}

impl Real for f32 {
    const CHECK_TOL: f64 = 1e-3;
    const ORDER_TOL: f64 = 1e-5;
}
