//! Galerkin matrix and load vector.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::basis::SplineSpace;
use crate::bem::panel::{basis_values, num_local, ElementData, PairIntegrator};
use crate::bem::potential::BoundaryPoint;
use crate::bem::surface::tensor_points;
use crate::bem::QuadConfig;
use crate::error::Result;
use crate::geometry::BoundaryGeometry;
use crate::mesh::{Element, MultiPatchMesh};
use crate::spline::{cached_gauss, Rect};

/// Elements processed per parallel batch.
const BATCH: usize = 64;

/// Near-field element-pair matrices kept across assemblies on nested meshes.
/// A cache must only be reused with the same geometry, degree and
/// quadrature configuration.
#[derive(Clone, Debug, Default)]
pub struct PairCache {
    near: HashMap<(Element, Element), Vec<f64>>,
}

impl PairCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.near.len()
    }

    pub fn is_empty(&self) -> bool {
        self.near.is_empty()
    }
}

/// Per-element data derived from an expensive right-hand side (local
/// moments, samples), reused across nested meshes.
#[derive(Clone, Debug, Default)]
pub struct RhsCache {
    values: HashMap<Element, Vec<f64>>,
}

impl RhsCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Data of element `e`, computed on first use.
    pub fn get_or_insert(
        &mut self,
        e: &Element,
        compute: impl FnOnce() -> Result<Vec<f64>>,
    ) -> Result<&[f64]> {
        if !self.values.contains_key(e) {
            let v = compute()?;
            self.values.insert(*e, v);
        }
        Ok(&self.values[e])
    }

    pub fn get(&self, e: &Element) -> Option<&[f64]> {
        self.values.get(e).map(Vec::as_slice)
    }

    pub fn insert(&mut self, e: Element, v: Vec<f64>) {
        self.values.insert(e, v);
    }
}

/// Symmetric Galerkin matrix `V[i][j] = <V psi_j, psi_i>`.
pub fn assemble_matrix(
    space: &SplineSpace,
    geom: &BoundaryGeometry,
    cfg: &QuadConfig,
    mut cache: Option<&mut PairCache>,
) -> Result<DMatrix<f64>> {
    cfg.validate()?;
    let mesh = space.mesh();
    let els = mesh.elements();
    let ne = els.len();
    let ndof = space.dim();
    let data: Vec<ElementData> = els.par_iter().map(|e| ElementData::new(geom, mesh, e, cfg)).collect();
    let integ = PairIntegrator { geom, mesh, cfg, data: &data };
    let empty = HashMap::new();

    // Upper part S with V = S + S^T; diagonal blocks enter with weight 1/2.
    let mut s = vec![0.0; ndof * ndof];
    let order: Vec<usize> = (0..ne).collect();
    for batch in order.chunks(BATCH) {
        let known = cache.as_deref().map_or(&empty, |c| &c.near);
        type Row = (usize, Vec<f64>, Vec<((Element, Element), Vec<f64>)>);
        let rows: Vec<Result<Row>> = batch
            .par_iter()
            .map(|&a| {
                let fa = space.element_functions(a);
                let mut buf = vec![0.0; fa.len() * ndof];
                let mut fresh = Vec::new();
                let mut tmp = Vec::new();
                for b in a..ne {
                    let key = (els[a], els[b]);
                    let computed;
                    let m: &[f64] = match integ.is_near(a, b).then(|| known.get(&key)).flatten() {
                        Some(m) => m,
                        None => {
                            let (m, near) = integ.element_pair(a, b)?;
                            if near {
                                fresh.push((key, m.clone()));
                            }
                            computed = m;
                            &computed
                        }
                    };
                    let fb = space.element_functions(b);
                    let nb = data[b].tiers[0].nloc;
                    let scale = if a == b { 0.5 } else { 1.0 };
                    for (r, la) in fa.iter().enumerate() {
                        tmp.clear();
                        tmp.resize(nb, 0.0);
                        for (x, row) in la.coeffs.iter().zip(m.chunks_exact(nb)) {
                            if *x != 0.0 {
                                for (t, y) in tmp.iter_mut().zip(row) {
                                    *t += x * y;
                                }
                            }
                        }
                        let out = &mut buf[r * ndof..(r + 1) * ndof];
                        for lb in fb {
                            let v: f64 = tmp.iter().zip(&lb.coeffs).map(|(x, y)| x * y).sum();
                            out[lb.dof] += scale * v;
                        }
                    }
                }
                Ok((a, buf, fresh))
            })
            .collect();
        let mut fresh_all = Vec::new();
        for row in rows {
            let (a, buf, fresh) = row?;
            for (r, la) in space.element_functions(a).iter().enumerate() {
                let dst = &mut s[la.dof * ndof..(la.dof + 1) * ndof];
                for (d, v) in dst.iter_mut().zip(&buf[r * ndof..(r + 1) * ndof]) {
                    *d += v;
                }
            }
            fresh_all.extend(fresh);
        }
        if let Some(c) = cache.as_deref_mut() {
            c.near.extend(fresh_all);
        }
    }
    Ok(DMatrix::from_fn(ndof, ndof, |i, j| s[i * ndof + j] + s[j * ndof + i]))
}

/// Halvings allowed per direction when integrating a right-hand side.
const RHS_MAX_DEPTH: usize = 12;
/// Largest relative size of the top-degree Legendre coefficients of `f`
/// in one direction that still counts as resolved.
const RHS_TAIL: f64 = 1e-3;
/// Cells whose unresolved part is below this fraction of the element's
/// magnitude are accepted as they are.
const RHS_NEGLIGIBLE: f64 = 1e-8;

/// Load vector `b[i] = int f psi_i`. Each element is integrated with
/// `n_rhs` Gauss points per direction on cells that are halved in every
/// direction in which the samples of `f` are not resolved by polynomials. With a cache, the local
/// moments of elements seen before are reused.
pub fn assemble_rhs(
    space: &SplineSpace,
    geom: &BoundaryGeometry,
    cfg: &QuadConfig,
    f: &(dyn Fn(&BoundaryPoint) -> Result<f64> + Sync),
    cache: Option<&mut RhsCache>,
) -> Result<DVector<f64>> {
    cfg.validate()?;
    let mesh = space.mesh();
    let els = mesh.elements();
    let moments = |e: &Element| -> Result<Vec<f64>> {
        let mut out = vec![0.0; num_local(mesh, e)];
        let cell = Cell { rect: mesh.rect(e), depth: [0, 0], fraction: 1.0 };
        element_moments(geom, mesh, e, cell, cfg.n_rhs, f, None, &mut out)?;
        Ok(out)
    };
    let values: Vec<Vec<f64>> = match cache {
        Some(c) => {
            let missing: Vec<Element> = els.iter().filter(|e| c.get(e).is_none()).copied().collect();
            let fresh: Vec<Result<Vec<f64>>> = missing.par_iter().map(&moments).collect();
            for (e, v) in missing.into_iter().zip(fresh) {
                c.insert(e, v?);
            }
            els.iter().map(|e| c.get(e).map(<[f64]>::to_vec).unwrap_or_default()).collect()
        }
        None => els.par_iter().map(&moments).collect::<Result<_>>()?,
    };
    let mut b = DVector::zeros(space.dim());
    for (i, m) in values.iter().enumerate() {
        for lf in space.element_functions(i) {
            b[lf.dof] += lf.coeffs.iter().zip(m).map(|(x, y)| x * y).sum::<f64>();
        }
    }
    Ok(b)
}

#[derive(Clone, Copy)]
struct Cell {
    rect: Rect,
    depth: [usize; 2],
    /// Parameter area relative to the element.
    fraction: f64,
}

/// Adds `int_cell f B_k` for the tensor B-splines `B_k` of `owner` to `out`.
/// `root` is the coefficient magnitude on the whole element.
#[allow(clippy::too_many_arguments)]
fn element_moments(
    geom: &BoundaryGeometry,
    mesh: &MultiPatchMesh,
    owner: &Element,
    cell: Cell,
    n: usize,
    f: &(dyn Fn(&BoundaryPoint) -> Result<f64> + Sync),
    root: Option<f64>,
    out: &mut [f64],
) -> Result<()> {
    let mut pts = Vec::with_capacity(n * n);
    tensor_points(geom, owner.patch, &cell.rect, n, |t, sp, w, _| {
        pts.push((BoundaryPoint { patch: owner.patch, t, x: sp.x }, w))
    });
    let vals: Vec<f64> = pts.iter().map(|(p, _)| f(p)).collect::<Result<_>>()?;
    let (scale, tail) = legendre_tails(&vals, n);
    let root = root.unwrap_or(scale);
    let split: Vec<usize> = (0..2)
        .filter(|&d| {
            cell.depth[d] < RHS_MAX_DEPTH
                && tail[d] > RHS_TAIL * scale
                && tail[d] * cell.fraction > RHS_NEGLIGIBLE * root
        })
        .collect();
    if !split.is_empty() {
        let mut cells = vec![cell];
        for d in split {
            cells = cells.into_iter().flat_map(|c| halve(c, d)).collect();
        }
        for c in cells {
            element_moments(geom, mesh, owner, c, n, f, Some(root), out)?;
        }
        return Ok(());
    }
    let mut basis = vec![0.0; out.len()];
    for ((p, w), v) in pts.iter().zip(&vals) {
        basis_values(mesh, owner, p.t, &mut basis);
        for (o, bk) in out.iter_mut().zip(&basis) {
            *o += w * v * bk;
        }
    }
    Ok(())
}

fn halve(c: Cell, d: usize) -> [Cell; 2] {
    let mid = 0.5 * (c.rect.lo[d] + c.rect.hi[d]);
    let (mut a, mut b) = (c, c);
    a.rect.hi[d] = mid;
    b.rect.lo[d] = mid;
    a.depth[d] += 1;
    b.depth[d] += 1;
    a.fraction *= 0.5;
    b.fraction *= 0.5;
    [a, b]
}

/// Largest tensor Legendre coefficient of samples at the `n x n` Gauss
/// points, and per direction the largest coefficient of top degree in that
/// direction.
fn legendre_tails(vals: &[f64], n: usize) -> (f64, [f64; 2]) {
    let g = cached_gauss(n);
    // legendre[i][a] = P_i(2 x_a - 1)
    let s: Vec<f64> = g.nodes.iter().map(|x| 2.0 * x - 1.0).collect();
    let mut legendre = vec![vec![1.0; n]];
    if n > 1 {
        legendre.push(s.clone());
    }
    for i in 2..n {
        let row = (0..n)
            .map(|a| ((2 * i - 1) as f64 * s[a] * legendre[i - 1][a] - (i - 1) as f64 * legendre[i - 2][a]) / i as f64)
            .collect();
        legendre.push(row);
    }
    let mut scale = 0.0f64;
    let mut tail = [0.0f64; 2];
    for j in 0..n {
        for i in 0..n {
            let mut c = 0.0;
            for b in 0..n {
                for a in 0..n {
                    c += g.weights[a] * g.weights[b] * vals[a + n * b] * legendre[i][a] * legendre[j][b];
                }
            }
            let c = ((2 * i + 1) * (2 * j + 1)) as f64 * c.abs();
            scale = scale.max(c);
            if n > 1 && i == n - 1 {
                tail[0] = tail[0].max(c);
            }
            if n > 1 && j == n - 1 {
                tail[1] = tail[1].max(c);
            }
        }
    }
    (scale, tail)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_tails_detect_unresolved_directions() {
        let g = cached_gauss(5);
        let sample = |f: &dyn Fn(f64, f64) -> f64| {
            let mut v = Vec::new();
            for y in &g.nodes {
                for x in &g.nodes {
                    v.push(f(*x, *y));
                }
            }
            legendre_tails(&v, 5)
        };
        let (s, t) = sample(&|x, y| 1.0 + x * y * y - 3.0 * x * x * x);
        assert!(t[0] < 1e-12 * s && t[1] < 1e-12 * s);
        let (s, t) = sample(&|x, _| x.powi(4));
        assert!(t[0] > 1e-3 * s && t[1] < 1e-12 * s);
        let (s, t) = sample(&|x, y| 1.0 / ((x - 0.5).powi(2) + (y - 0.5).powi(2) + 1e-4));
        assert!(t[0] > 1e-3 * s && t[1] > 1e-3 * s);
        assert_eq!(sample(&|_, _| 0.0), (0.0, [0.0, 0.0]));
    }
}
