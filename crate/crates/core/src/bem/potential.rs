//! Single- and double-layer potentials evaluated at boundary points.

use crate::basis::SplineSpace;
use crate::bem::panel::{basis_values, num_local};
use crate::bem::surface::{background_cells, Kernel, SurfaceIntegrator};
use crate::bem::QuadConfig;
use crate::error::{Error, Result};
use crate::geometry::{BoundaryGeometry, Point};

/// A point of the boundary with its parameter location.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryPoint {
    pub patch: usize,
    pub t: [f64; 2],
    pub x: Point,
}

impl BoundaryPoint {
    pub fn new(geom: &BoundaryGeometry, patch: usize, t: [f64; 2]) -> Result<Self> {
        if patch >= geom.num_patches() || !t.iter().all(|c| (0.0..=1.0).contains(c)) {
            return Err(Error::PointNotLocatable);
        }
        Ok(BoundaryPoint { patch, t, x: geom.eval(patch, t) })
    }

    fn on_patch_boundary(&self) -> bool {
        self.t.iter().any(|&c| c <= 1e-12 || c >= 1.0 - 1e-12)
    }
}

/// `V Phi` for a discrete density `Phi = sum_i c_i psi_i`.
pub struct SingleLayer<'a> {
    geom: &'a BoundaryGeometry,
    integ: SurfaceIntegrator<'a>,
}

impl<'a> SingleLayer<'a> {
    pub fn new(space: &'a SplineSpace, geom: &'a BoundaryGeometry, coeffs: &[f64], cfg: &QuadConfig) -> Result<Self> {
        cfg.validate()?;
        if coeffs.len() != space.dim() {
            return Err(Error::InvalidArgument(format!(
                "{} coefficients for a space of dimension {}",
                coeffs.len(),
                space.dim()
            )));
        }
        let mesh = space.mesh().clone();
        let local: Vec<Vec<f64>> = mesh
            .elements()
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let mut v = vec![0.0; num_local(&mesh, e)];
                for lf in space.element_functions(i) {
                    for (a, b) in v.iter_mut().zip(&lf.coeffs) {
                        *a += coeffs[lf.dof] * b;
                    }
                }
                v
            })
            .collect();
        let cells = mesh.elements().iter().map(|e| (e.patch, mesh.rect(e), 0)).collect();
        let density = Box::new(move |i: usize, t: [f64; 2], _: &_| {
            let e = &mesh.elements()[i];
            let mut b = [0.0; 64];
            let b = &mut b[..local[i].len()];
            basis_values(&mesh, e, t, b);
            b.iter().zip(&local[i]).map(|(x, y)| x * y).sum()
        });
        Ok(SingleLayer { geom, integ: SurfaceIntegrator::new(geom, cfg, Kernel::Single, cells, density) })
    }

    pub fn eval(&self, patch: usize, t: [f64; 2]) -> Result<f64> {
        let p = BoundaryPoint::new(self.geom, patch, t)?;
        Ok(self.eval_point(&p))
    }

    pub fn eval_point(&self, p: &BoundaryPoint) -> f64 {
        self.integ.eval(&p.x, Some((p.patch, p.t)))
    }
}

/// `K g(x) = int dG(x - y)/dn(y) g(y) dy` for a function `g` given in space.
pub struct DoubleLayer<'a> {
    geom: &'a BoundaryGeometry,
    integ: SurfaceIntegrator<'a>,
}

impl<'a> DoubleLayer<'a> {
    /// `centers` are points near which `g` varies quickly (e.g. its
    /// singularities); the integration cells are refined towards them.
    pub fn new(
        geom: &'a BoundaryGeometry,
        cfg: &QuadConfig,
        g: impl Fn(&Point) -> f64 + Sync + 'a,
        centers: &[Point],
    ) -> Result<Self> {
        cfg.validate()?;
        let cells = background_cells(geom, cfg, 2, centers);
        let density = Box::new(move |_: usize, _: [f64; 2], sp: &crate::geometry::SurfacePoint| g(&sp.x));
        Ok(DoubleLayer { geom, integ: SurfaceIntegrator::new(geom, cfg, Kernel::Double, cells, density) })
    }

    /// Value at a point in the interior of a patch.
    pub fn eval(&self, patch: usize, t: [f64; 2]) -> Result<f64> {
        let p = BoundaryPoint::new(self.geom, patch, t)?;
        self.eval_point(&p)
    }

    pub fn eval_point(&self, p: &BoundaryPoint) -> Result<f64> {
        if p.on_patch_boundary() {
            return Err(Error::NonSmoothPoint);
        }
        Ok(self.integ.eval(&p.x, Some((p.patch, p.t))))
    }
}

/// `(V Phi)(gamma_patch(t))`.
pub fn eval_single_layer(
    space: &SplineSpace,
    geom: &BoundaryGeometry,
    coeffs: &[f64],
    patch: usize,
    t: [f64; 2],
    cfg: &QuadConfig,
) -> Result<f64> {
    SingleLayer::new(space, geom, coeffs, cfg)?.eval(patch, t)
}

/// `(K g)(gamma_patch(t))`.
pub fn eval_double_layer(
    geom: &BoundaryGeometry,
    g: impl Fn(&Point) -> f64 + Sync,
    patch: usize,
    t: [f64; 2],
    cfg: &QuadConfig,
) -> Result<f64> {
    DoubleLayer::new(geom, cfg, g, &[])?.eval(patch, t)
}
