//! One-variable analytic transforms and free convolutions.
//!
//! On the line: the Cauchy transform `G`, its compositional inverse `K` and
//! the R-transform, free additive convolution by subordination, and density
//! recovery by Stieltjes inversion. On the circle: the `ψ`, `η` and `S`
//! transforms, free multiplicative convolution, and Poisson-integral recovery.

mod additive;
mod cauchy;
mod circle;
mod inversion;

pub use additive::{
    free_add_convolve_on, free_add_convolve_with, DEFAULT_N1D,
    free_add_convolve, subordinators, subordinators_with, FreeAdditiveConvolution, SubordinationOptions,
    SubordinationResult,
};
pub use cauchy::{cauchy_g, inverse_k, inverse_k_numeric, r_coefficients, r_transform, CauchyTransform};
pub use circle::{
    eta, free_mult_convolve, psi, psi_inverse, recover_circle_density, recover_circle_density_with, s_transform,
    CircleRecovery, FreeMultConvolution, PsiTransform, DEFAULT_N_CIRCLE,
};
pub use inversion::{
    atom_mass_at, recover_density_1d, recover_density_1d_with_atoms, sample_density_1d, DensitySample,
    RecoveryOptions, WindowPolicy,
};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Imaginary offsets used when taking boundary values on the real line.
pub const EPSILON_SCHEDULE: [f64; 4] = [1e-2, 5e-3, 2.5e-3, 1.25e-3];

/// Distances `1 − r` used when taking radial limits on the circle.
pub const RADIAL_SCHEDULE: [f64; 4] = [4e-2, 2e-2, 1e-2, 5e-3];

/// Newton iteration cap for all inversions.
pub const NEWTON_MAX_STEPS: usize = 100;

/// Newton stopping tolerance.
pub const NEWTON_TOL: f64 = 1e-12;

/// A point off the real axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfPlanePoint(Complex64);

impl HalfPlanePoint {
    pub fn new(z: Complex64) -> Result<Self> {
        if !(z.re.is_finite() && z.im.is_finite()) || z.im == 0.0 {
            return Err(Error::InvalidArgument(format!("{z} is not off the real axis")));
        }
        Ok(Self(z))
    }

    pub fn value(self) -> Complex64 {
        self.0
    }
}

/// A point off the unit circle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscPoint(Complex64);

impl DiscPoint {
    pub fn new(z: Complex64) -> Result<Self> {
        if !(z.re.is_finite() && z.im.is_finite()) || z.norm() == 1.0 {
            return Err(Error::InvalidArgument(format!("{z} is not off the unit circle")));
        }
        Ok(Self(z))
    }

    pub fn value(self) -> Complex64 {
        self.0
    }

    pub fn is_interior(self) -> bool {
        self.0.norm() < 1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_types_reject_boundary() {
        assert!(HalfPlanePoint::new(Complex64::new(1.0, 0.0)).is_err());
        assert!(HalfPlanePoint::new(Complex64::new(f64::NAN, 1.0)).is_err());
        assert_eq!(HalfPlanePoint::new(Complex64::new(0.0, -1.0)).unwrap().value().im, -1.0);
        assert!(DiscPoint::new(Complex64::new(0.0, 1.0)).is_err());
        assert!(DiscPoint::new(Complex64::new(0.5, 0.0)).unwrap().is_interior());
        assert!(!DiscPoint::new(Complex64::new(2.0, 0.0)).unwrap().is_interior());
    }
}
