//! Galerkin boundary elements for the single-layer operator of the
//! Laplacian, `V phi(x) = int G(x - y) phi(y) dy` with `G(z) = 1/(4 pi |z|)`.

mod assembly;
pub mod duffy;
mod panel;
mod potential;
mod solve;
mod surface;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point;

pub use assembly::{assemble_matrix, assemble_rhs, PairCache, RhsCache};
pub use potential::{
    eval_double_layer, eval_single_layer, BoundaryPoint, DoubleLayer, SingleLayer,
};
pub use solve::{read_matrix, solve, write_matrix};

const INV_FOUR_PI: f64 = 0.25 * std::f64::consts::FRAC_1_PI;

/// Fundamental solution `G(z) = 1/(4 pi |z|)`.
pub fn laplace_kernel(z: &Point) -> Result<f64> {
    let r = z.norm();
    if r == 0.0 {
        return Err(Error::CoincidentPoints);
    }
    Ok(kernel_r(r))
}

/// `G(z)` without the coincidence check.
#[inline]
pub fn kernel_value(z: &Point) -> f64 {
    kernel_r(z.norm())
}

#[inline]
pub(crate) fn kernel_r(r: f64) -> f64 {
    INV_FOUR_PI / r
}

/// `d G(x - y) / d n(y) = (x - y) . n / (4 pi |x - y|^3)`.
#[inline]
pub(crate) fn double_layer_kernel(x: &Point, y: &Point, n: &Point) -> f64 {
    let d = x - y;
    let r2 = d.norm_squared();
    INV_FOUR_PI * d.dot(n) / (r2 * r2.sqrt())
}

/// Quadrature orders and separation thresholds.
///
/// Pairs of panels (or a point and a panel) are classified by the gap
/// between enclosing balls relative to the larger diameter: at least
/// `rho_far` uses `n_far` Gauss points per direction, at least `rho_near`
/// uses `n_reg`, closer pairs use `n_sing` after subdivision or a singular
/// transformation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadConfig {
    pub n_far: usize,
    pub n_reg: usize,
    pub n_sing: usize,
    pub rho_near: f64,
    pub rho_far: f64,
    /// Gauss points per direction for right-hand sides.
    pub n_rhs: usize,
}

impl Default for QuadConfig {
    fn default() -> Self {
        QuadConfig { n_far: 3, n_reg: 4, n_sing: 8, rho_near: 1.0, rho_far: 3.0, n_rhs: 5 }
    }
}

impl QuadConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, n) in [("n_far", self.n_far), ("n_reg", self.n_reg), ("n_sing", self.n_sing), ("n_rhs", self.n_rhs)] {
            if !(1..=64).contains(&n) {
                return Err(Error::Config(format!("{name} = {n} is outside 1..=64")));
            }
        }
        if !(self.rho_near > 0.0 && self.rho_far >= self.rho_near) {
            return Err(Error::Config("need 0 < rho_near <= rho_far".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_values() {
        let g = laplace_kernel(&Point::new(0.0, 3.0, 4.0)).unwrap();
        assert!((g - 1.0 / (20.0 * std::f64::consts::PI)).abs() < 1e-16);
        assert!(matches!(laplace_kernel(&Point::zeros()), Err(Error::CoincidentPoints)));
    }

    #[test]
    fn config_validation() {
        assert!(QuadConfig::default().validate().is_ok());
        assert!(QuadConfig { n_sing: 0, ..Default::default() }.validate().is_err());
        assert!(QuadConfig { rho_far: 0.5, ..Default::default() }.validate().is_err());
    }
}
