//! Right-hand sides of the model problems.

use crate::adaptivity::RightHandSide;
use crate::bem::{kernel_value, BoundaryPoint, DoubleLayer, QuadConfig};
use crate::error::Result;
use crate::geometry::{BoundaryGeometry, Point};

/// Source point of the shifted fundamental solution used with the quarter
/// pipe; it lies in the hole of the pipe, close to the inner wall.
pub fn quarter_pipe_source() -> Point {
    let a = 0.95 * 2f64.powf(-1.5);
    Point::new(a, a, 0.5) * 0.1
}

/// `u(x) = G(x - y0)`, harmonic in the pipe.
pub fn shifted_fundamental(x: &Point) -> f64 {
    kernel_value(&(x - quarter_pipe_source()))
}

/// Normal derivative of [`shifted_fundamental`], the exact density for the
/// right-hand side `(K + 1/2) u`.
pub fn shifted_fundamental_flux(x: &Point, normal: &Point) -> f64 {
    let d = x - quarter_pipe_source();
    -d.dot(normal) / (4.0 * std::f64::consts::PI * d.norm().powi(3))
}

/// The model right-hand side for a geometry: `(K + 1/2) u` on the quarter
/// pipe, `f = 1` otherwise.
pub fn model_rhs<'a>(geom: &'a BoundaryGeometry, cfg: &QuadConfig) -> Result<Box<RightHandSide<'a>>> {
    if geom.name() == "quarter_pipe" {
        let dl = DoubleLayer::new(geom, cfg, shifted_fundamental, &[quarter_pipe_source()])?;
        Ok(Box::new(move |p: &BoundaryPoint| Ok(0.5 * shifted_fundamental(&p.x) + dl.eval_point(p)?)))
    } else {
        Ok(Box::new(|_: &BoundaryPoint| Ok(1.0)))
    }
}
