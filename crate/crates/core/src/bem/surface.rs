//! Integration of kernels `k(x, y)` against surface densities for a fixed
//! target point `x`, with adaptive subdivision near `x`.

use rayon::prelude::*;

use crate::bem::panel::{tier, Sphere};
use crate::bem::{double_layer_kernel, kernel_r, QuadConfig};
use crate::geometry::{BoundaryGeometry, Point, SurfacePoint};
use crate::spline::{cached_gauss, Rect};

const MAX_DEPTH: usize = 60;
/// Parameter distance below which a host point is moved onto a cell edge.
/// Closer points would put the double-layer kernel into cancellation.
fn snap_tol(width: f64) -> f64 {
    1e-6 * width
}

fn near_contains(rect: &Rect, t: [f64; 2]) -> bool {
    (0..2).all(|d| {
        let tol = snap_tol(rect.width(d));
        t[d] >= rect.lo[d] - tol && t[d] <= rect.hi[d] + tol
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Kernel {
    Single,
    Double,
}

/// Density on leaf `i` at parameter `t`.
pub(crate) type Density<'a> = dyn Fn(usize, [f64; 2], &SurfacePoint) -> f64 + Sync + 'a;

#[derive(Clone, Debug, Default)]
struct TierPoints {
    x: Vec<Point>,
    n: Vec<Point>,
    /// Weight times measure times density.
    wd: Vec<f64>,
}

#[derive(Clone, Debug)]
struct Leaf {
    patch: usize,
    rect: Rect,
    sphere: Sphere,
    min_tier: usize,
    tiers: [TierPoints; 3],
}

/// Partition of the boundary into parameter cells (leaves) on which the
/// density is smooth, with precomputed quadrature.
pub(crate) struct SurfaceIntegrator<'a> {
    geom: &'a BoundaryGeometry,
    cfg: QuadConfig,
    kernel: Kernel,
    leaves: Vec<Leaf>,
    density: Box<Density<'a>>,
}

impl<'a> SurfaceIntegrator<'a> {
    /// `cells[i] = (patch, rect, min_tier)`; `min_tier` forces more points
    /// on cells where the density itself varies quickly.
    pub fn new(
        geom: &'a BoundaryGeometry,
        cfg: &QuadConfig,
        kernel: Kernel,
        cells: Vec<(usize, Rect, usize)>,
        density: Box<Density<'a>>,
    ) -> Self {
        let orders = [cfg.n_far, cfg.n_reg, cfg.n_sing];
        let leaves = cells
            .into_par_iter()
            .enumerate()
            .map(|(i, (patch, rect, min_tier))| Leaf {
                patch,
                rect,
                sphere: Sphere::of(geom, patch, &rect),
                min_tier,
                tiers: orders.map(|n| {
                    let mut tp = TierPoints::default();
                    tensor_points(geom, patch, &rect, n, |t, sp, w, nrm| {
                        tp.x.push(sp.x);
                        tp.n.push(nrm);
                        tp.wd.push(w * density(i, t, sp));
                    });
                    tp
                }),
            })
            .collect();
        SurfaceIntegrator { geom, cfg: *cfg, kernel, leaves, density }
    }

    #[inline]
    fn k(&self, x: &Point, y: &Point, n: &Point) -> f64 {
        match self.kernel {
            Kernel::Single => kernel_r((x - y).norm()),
            Kernel::Double => double_layer_kernel(x, y, n),
        }
    }

    /// Integral of `k(x, .) * density` over the boundary. `host` is the
    /// parameter location of `x` when it lies on the boundary.
    pub fn eval(&self, x: &Point, host: Option<(usize, [f64; 2])>) -> f64 {
        let mut acc = 0.0;
        for (i, leaf) in self.leaves.iter().enumerate() {
            if let Some((patch, t0)) = host {
                if patch == leaf.patch && near_contains(&leaf.rect, t0) {
                    acc += self.host_cell(i, &leaf.rect, x, t0);
                    continue;
                }
            }
            let ratio = leaf.sphere.point_ratio(x);
            if ratio >= self.cfg.rho_near {
                let tp = &leaf.tiers[tier(&self.cfg, ratio).max(leaf.min_tier)];
                let mut s = 0.0;
                for ((y, n), wd) in tp.x.iter().zip(&tp.n).zip(&tp.wd) {
                    s += wd * self.k(x, y, n);
                }
                acc += s;
            } else {
                acc += self.adaptive(i, &leaf.rect, x, 0);
            }
        }
        acc
    }

    fn on_the_fly(&self, i: usize, rect: &Rect, x: &Point, n: usize) -> f64 {
        let leaf = &self.leaves[i];
        let mut s = 0.0;
        tensor_points(self.geom, leaf.patch, rect, n, |t, sp, w, nrm| {
            s += w * (self.density)(i, t, sp) * self.k(x, &sp.x, &nrm);
        });
        s
    }

    fn adaptive(&self, i: usize, rect: &Rect, x: &Point, depth: usize) -> f64 {
        let leaf = &self.leaves[i];
        let sphere = Sphere::of_coarse(self.geom, leaf.patch, rect);
        let ratio = sphere.point_ratio(x);
        if ratio >= self.cfg.rho_near || depth >= MAX_DEPTH {
            let t = tier(&self.cfg, ratio).max(leaf.min_tier);
            let n = [self.cfg.n_far, self.cfg.n_reg, self.cfg.n_sing][t];
            return self.on_the_fly(i, rect, x, n);
        }
        split(self.geom, leaf.patch, rect).iter().map(|r| self.adaptive(i, r, x, depth + 1)).sum()
    }

    /// Cell containing the parameter point of `x`: split at `t0` into
    /// rectangles having `t0` as a corner.
    fn host_cell(&self, i: usize, rect: &Rect, x: &Point, mut t0: [f64; 2]) -> f64 {
        for d in 0..2 {
            let tol = snap_tol(rect.width(d));
            if t0[d] - rect.lo[d] <= tol {
                t0[d] = rect.lo[d];
            } else if rect.hi[d] - t0[d] <= tol {
                t0[d] = rect.hi[d];
            }
        }
        let xs = [rect.lo[0], t0[0], rect.hi[0]];
        let ys = [rect.lo[1], t0[1], rect.hi[1]];
        let mut acc = 0.0;
        for a in 0..2 {
            for b in 0..2 {
                let q = Rect::new([xs[a], ys[b]], [xs[a + 1], ys[b + 1]]);
                if q.width(0) <= 0.0 || q.width(1) <= 0.0 {
                    continue;
                }
                // Corner of q at t0, as signs of the directions away from it.
                let dir = [if a == 0 { -1.0 } else { 1.0 }, if b == 0 { -1.0 } else { 1.0 }];
                acc += self.corner_rect(i, &q, x, t0, dir);
            }
        }
        acc
    }

    /// `q` has corner `t0`; integrate the physically square part at `t0` in
    /// polar coordinates and the remaining strip adaptively.
    fn corner_rect(&self, i: usize, q: &Rect, x: &Point, t0: [f64; 2], dir: [f64; 2]) -> f64 {
        let patch = self.leaves[i].patch;
        let sp = self.geom.eval_full(patch, t0);
        let speed = [sp.du.norm(), sp.dv.norm()];
        let len = [speed[0] * q.width(0), speed[1] * q.width(1)];
        let side = len[0].min(len[1]);
        let w = [(side / speed[0]).min(q.width(0)), (side / speed[1]).min(q.width(1))];
        let far = [t0[0] + dir[0] * w[0], t0[1] + dir[1] * w[1]];
        let mut acc = self.polar_square(i, x, t0, far);
        let d = if len[0] > len[1] { 0 } else { 1 };
        if q.width(d) - w[d] > 1e-14 * q.width(d) {
            let mut lo = [t0[0].min(far[0]), t0[1].min(far[1])];
            let mut hi = [t0[0].max(far[0]), t0[1].max(far[1])];
            if dir[d] > 0.0 {
                lo[d] = far[d];
                hi[d] = q.hi[d];
            } else {
                lo[d] = q.lo[d];
                hi[d] = far[d];
            }
            acc += self.adaptive(i, &Rect::new(lo, hi), x, 0);
        }
        acc
    }

    /// Square with opposite corners `p` (the singular point) and `o`, as two
    /// triangles with apex `p` in Duffy coordinates.
    fn polar_square(&self, i: usize, x: &Point, p: [f64; 2], o: [f64; 2]) -> f64 {
        let patch = self.leaves[i].patch;
        let g = cached_gauss(self.cfg.n_sing);
        let mut acc = 0.0;
        for (q1, q2) in [([o[0], p[1]], o), (o, [p[0], o[1]])] {
            let e1 = [q1[0] - p[0], q1[1] - p[1]];
            let e2 = [q2[0] - q1[0], q2[1] - q1[1]];
            let det = (e1[0] * e2[1] - e1[1] * e2[0]).abs();
            for (r, wr) in g.nodes.iter().zip(&g.weights) {
                for (s, ws) in g.nodes.iter().zip(&g.weights) {
                    let t = [p[0] + r * (e1[0] + s * e2[0]), p[1] + r * (e1[1] + s * e2[1])];
                    let sp = self.geom.eval_full(patch, t);
                    let an = sp.area_normal();
                    let meas = an.norm();
                    let nrm = self.geom.oriented_normal(patch, &sp).unwrap_or(an);
                    acc += wr * ws * r * det * meas * (self.density)(i, t, &sp) * self.k(x, &sp.x, &nrm);
                }
            }
        }
        acc
    }
}

/// Visits tensor Gauss points of `rect` with weight times surface measure
/// and the outward unit normal.
pub(crate) fn tensor_points(
    geom: &BoundaryGeometry,
    patch: usize,
    rect: &Rect,
    n: usize,
    mut f: impl FnMut([f64; 2], &SurfacePoint, f64, Point),
) {
    let g = cached_gauss(n);
    let area = rect.area();
    for (b, wb) in g.nodes.iter().zip(&g.weights) {
        for (a, wa) in g.nodes.iter().zip(&g.weights) {
            let t = rect.map([*a, *b]);
            let sp = geom.eval_full(patch, t);
            let an = sp.area_normal();
            let nrm = geom.oriented_normal(patch, &sp).unwrap_or(an);
            f(t, &sp, wa * wb * area * an.norm(), nrm);
        }
    }
}

/// Splits a rectangle in halves along a physically long side, or in four.
pub(crate) fn split(geom: &BoundaryGeometry, patch: usize, rect: &Rect) -> Vec<Rect> {
    let sp = geom.eval_full(patch, rect.center());
    let len = [sp.du.norm() * rect.width(0), sp.dv.norm() * rect.width(1)];
    let c = rect.center();
    if len[0] > 2.0 * len[1] {
        vec![Rect::new(rect.lo, [c[0], rect.hi[1]]), Rect::new([c[0], rect.lo[1]], rect.hi)]
    } else if len[1] > 2.0 * len[0] {
        vec![Rect::new(rect.lo, [rect.hi[0], c[1]]), Rect::new([rect.lo[0], c[1]], rect.hi)]
    } else {
        rect.quadrants().to_vec()
    }
}

/// Cells covering every patch, refined until each is separated from all
/// `centers` by at least `rho_near`; the returned tier forces enough points
/// for densities singular at the centers.
pub(crate) fn background_cells(
    geom: &BoundaryGeometry,
    cfg: &QuadConfig,
    base: usize,
    centers: &[Point],
) -> Vec<(usize, Rect, usize)> {
    let mut out = Vec::new();
    let n = 1usize << base;
    for patch in 0..geom.num_patches() {
        let mut stack = Vec::new();
        for i in (0..n).rev() {
            for j in (0..n).rev() {
                let h = 1.0 / n as f64;
                stack.push((Rect::new([j as f64 * h, i as f64 * h], [(j + 1) as f64 * h, (i + 1) as f64 * h]), 0));
            }
        }
        while let Some((rect, depth)) = stack.pop() {
            let sphere = Sphere::of_coarse(geom, patch, &rect);
            let ratio = centers.iter().map(|c| sphere.point_ratio(c)).fold(f64::INFINITY, f64::min);
            if ratio < cfg.rho_near && depth < MAX_DEPTH {
                for r in split(geom, patch, &rect).into_iter().rev() {
                    stack.push((r, depth + 1));
                }
            } else {
                out.push((patch, rect, if centers.is_empty() { 0 } else { tier(cfg, ratio) }));
            }
        }
    }
    out
}
