//! Element data and element-pair integrals of the single-layer kernel.

use crate::basis::local_basis;
use crate::bem::duffy::{singular_rule, SingularCase};
use crate::bem::{kernel_r, QuadConfig};
use crate::error::{Error, Result};
use crate::geometry::{BoundaryGeometry, Point};
use crate::mesh::{Element, MultiPatchMesh};
use crate::spline::{cached_gauss, Rect};

/// Ball enclosing the image of a parameter rectangle.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Sphere {
    pub c: Point,
    pub r: f64,
}

impl Sphere {
    pub fn of(geom: &BoundaryGeometry, patch: usize, rect: &Rect) -> Self {
        Self::sampled(geom, patch, rect, 4)
    }

    /// Cheaper variant from a 3 x 3 sample.
    pub fn of_coarse(geom: &BoundaryGeometry, patch: usize, rect: &Rect) -> Self {
        Self::sampled(geom, patch, rect, 2)
    }

    fn sampled(geom: &BoundaryGeometry, patch: usize, rect: &Rect, n: usize) -> Self {
        let c = geom.eval(patch, rect.center());
        let mut r: f64 = 0.0;
        for i in 0..=n {
            for j in 0..=n {
                let x = geom.eval(patch, rect.map([i as f64 / n as f64, j as f64 / n as f64]));
                r = r.max((x - c).norm());
            }
        }
        Sphere { c, r: 1.1 * r }
    }

    /// Gap between the balls relative to the larger diameter.
    pub fn ratio(&self, o: &Sphere) -> f64 {
        let gap = ((self.c - o.c).norm() - self.r - o.r).max(0.0);
        if gap == 0.0 {
            return 0.0;
        }
        gap / (2.0 * self.r.max(o.r))
    }

    /// Distance of `x` from the ball relative to its diameter.
    pub fn point_ratio(&self, x: &Point) -> f64 {
        let gap = ((x - self.c).norm() - self.r).max(0.0);
        if gap == 0.0 {
            return 0.0;
        }
        gap / (2.0 * self.r)
    }
}

/// Number of tensor B-splines of an element's level.
pub(crate) fn num_local(mesh: &MultiPatchMesh, e: &Element) -> usize {
    let sp = &mesh.level_space(e.patch, e.level).space;
    (sp.dirs[0].degree() + 1) * (sp.dirs[1].degree() + 1)
}

/// Tensor B-spline values of `owner`'s level at `t`, index `r1 + (p1+1) r2`.
pub(crate) fn basis_values(mesh: &MultiPatchMesh, owner: &Element, t: [f64; 2], out: &mut [f64]) {
    if out.len() == 1 {
        out[0] = 1.0;
        return;
    }
    let lb = local_basis(mesh, owner, t);
    let n1 = lb.degree[0] + 1;
    for r2 in 0..=lb.degree[1] {
        for r1 in 0..n1 {
            out[r1 + n1 * r2] = lb.values[0][r1] * lb.values[1][r2];
        }
    }
}

/// Tensor Gauss points on a rectangle with measure-scaled weights and the
/// owner element's basis values.
#[derive(Clone, Debug)]
pub(crate) struct QuadPoints {
    pub x: Vec<Point>,
    pub w: Vec<f64>,
    pub t: Vec<[f64; 2]>,
    pub basis: Vec<f64>,
    pub nloc: usize,
}

impl QuadPoints {
    pub fn new(geom: &BoundaryGeometry, mesh: &MultiPatchMesh, owner: &Element, rect: &Rect, n: usize) -> Self {
        let g = cached_gauss(n);
        let nloc = num_local(mesh, owner);
        let mut q = QuadPoints {
            x: Vec::with_capacity(n * n),
            w: Vec::with_capacity(n * n),
            t: Vec::with_capacity(n * n),
            basis: vec![0.0; n * n * nloc],
            nloc,
        };
        let area = rect.area();
        for (b, wb) in g.nodes.iter().zip(&g.weights) {
            for (a, wa) in g.nodes.iter().zip(&g.weights) {
                let t = rect.map([*a, *b]);
                let sp = geom.eval_full(owner.patch, t);
                let k = q.x.len();
                basis_values(mesh, owner, t, &mut q.basis[k * nloc..(k + 1) * nloc]);
                q.x.push(sp.x);
                q.w.push(wa * wb * area * sp.area_normal().norm());
                q.t.push(t);
            }
        }
        q
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }
}

/// Quadrature data of an active element at the three regular orders.
#[derive(Clone, Debug)]
pub(crate) struct ElementData {
    pub rect: Rect,
    pub sphere: Sphere,
    pub tiers: [QuadPoints; 3],
}

impl ElementData {
    pub fn new(geom: &BoundaryGeometry, mesh: &MultiPatchMesh, e: &Element, cfg: &QuadConfig) -> Self {
        let rect = mesh.rect(e);
        ElementData {
            rect,
            sphere: Sphere::of(geom, e.patch, &rect),
            tiers: [cfg.n_far, cfg.n_reg, cfg.n_sing].map(|n| QuadPoints::new(geom, mesh, e, &rect, n)),
        }
    }
}

/// Tier index for a separation ratio: 0 far, 1 regular, 2 near.
pub(crate) fn tier(cfg: &QuadConfig, ratio: f64) -> usize {
    if ratio >= cfg.rho_far {
        0
    } else if ratio >= cfg.rho_near {
        1
    } else {
        2
    }
}

/// Affine map of the unit square onto a rectangle placing corner `origin`
/// at `0` and the adjacent corner `toward` at `(1, 0)`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct LocalMap {
    origin: [f64; 2],
    e1: [f64; 2],
    e2: [f64; 2],
}

impl LocalMap {
    pub fn new(rect: &Rect, origin: usize, toward: usize) -> Self {
        let c = [rect.lo, [rect.hi[0], rect.lo[1]], rect.hi, [rect.lo[0], rect.hi[1]]];
        let other = if toward == (origin + 1) % 4 { (origin + 3) % 4 } else { (origin + 1) % 4 };
        let o = c[origin];
        LocalMap {
            origin: o,
            e1: [c[toward][0] - o[0], c[toward][1] - o[1]],
            e2: [c[other][0] - o[0], c[other][1] - o[1]],
        }
    }

    #[inline]
    pub fn map(&self, u: [f64; 2]) -> [f64; 2] {
        [
            self.origin[0] + u[0] * self.e1[0] + u[1] * self.e2[0],
            self.origin[1] + u[0] * self.e1[1] + u[1] * self.e2[1],
        ]
    }
}

fn adjacent(a: usize, b: usize) -> bool {
    (a + 1) % 4 == b || (b + 1) % 4 == a
}

/// Computes local Galerkin matrices `M[r][s] = int int G(x - y) B_r(x) B'_s(y)`
/// for pairs of active elements.
pub(crate) struct PairIntegrator<'a> {
    pub geom: &'a BoundaryGeometry,
    pub mesh: &'a MultiPatchMesh,
    pub cfg: &'a QuadConfig,
    pub data: &'a [ElementData],
}

impl PairIntegrator<'_> {
    /// Local matrix of elements `a` and `b` (row-major, `nloc(a) x nloc(b)`)
    /// and whether the pair needed near-field treatment.
    pub fn element_pair(&self, a: usize, b: usize) -> Result<(Vec<f64>, bool)> {
        let els = self.mesh.elements();
        let (ea, eb) = (els[a], els[b]);
        let mut m = vec![0.0; self.data[a].tiers[0].nloc * self.data[b].tiers[0].nloc];
        let near = if a == b {
            let map = LocalMap::new(&self.data[a].rect, 0, 1);
            self.singular(SingularCase::Identical, (&ea, &map, a), (&ea, &map, b), &mut m)?;
            let n = self.data[a].tiers[0].nloc;
            for r in 0..n {
                for s in 0..r {
                    let v = 0.5 * (m[r * n + s] + m[s * n + r]);
                    m[r * n + s] = v;
                    m[s * n + r] = v;
                }
            }
            true
        } else {
            self.cell_pair(ea, a, eb, b, &mut m)?
        };
        Ok((m, near))
    }

    /// Whether elements `a` and `b` are close enough to need near-field rules.
    pub fn is_near(&self, a: usize, b: usize) -> bool {
        a == b || self.data[a].sphere.ratio(&self.data[b].sphere) < self.cfg.rho_near
    }

    fn cell_info(&self, c: &Element, owner: usize) -> (Rect, Sphere) {
        if *c == self.mesh.elements()[owner] {
            (self.data[owner].rect, self.data[owner].sphere)
        } else {
            let rect = self.mesh.rect(c);
            (rect, Sphere::of(self.geom, c.patch, &rect))
        }
    }

    fn cell_pair(&self, ca: Element, oa: usize, cb: Element, ob: usize, m: &mut [f64]) -> Result<bool> {
        let (ra, sa) = self.cell_info(&ca, oa);
        let (rb, sb) = self.cell_info(&cb, ob);
        let ratio = sa.ratio(&sb);
        let els = self.mesh.elements();
        if ratio < self.cfg.rho_near {
            if ca.level < cb.level {
                for ch in ca.children() {
                    self.cell_pair(ch, oa, cb, ob, m)?;
                }
                return Ok(true);
            }
            if cb.level < ca.level {
                for ch in cb.children() {
                    self.cell_pair(ca, oa, ch, ob, m)?;
                }
                return Ok(true);
            }
            let ka = self.mesh.corner_keys(&ca);
            let kb = self.mesh.corner_keys(&cb);
            let mut shared = Vec::new();
            for (i, x) in ka.iter().enumerate() {
                for (j, y) in kb.iter().enumerate() {
                    if x == y {
                        shared.push((i, j));
                    }
                }
            }
            let (oea, oeb) = (&els[oa], &els[ob]);
            match shared[..] {
                [] => {}
                [(i, j)] => {
                    let ma = LocalMap::new(&ra, i, (i + 1) % 4);
                    let mb = LocalMap::new(&rb, j, (j + 1) % 4);
                    self.singular(SingularCase::CommonVertex, (oea, &ma, oa), (oeb, &mb, ob), m)?;
                    return Ok(true);
                }
                [(i0, j0), (i1, j1)] if adjacent(i0, i1) && adjacent(j0, j1) => {
                    let ma = LocalMap::new(&ra, i0, i1);
                    let mb = LocalMap::new(&rb, j0, j1);
                    self.singular(SingularCase::CommonEdge, (oea, &ma, oa), (oeb, &mb, ob), m)?;
                    return Ok(true);
                }
                _ => {
                    return Err(Error::Adjacency(format!("cells {ca:?} and {cb:?} share {} vertices", shared.len())))
                }
            }
        }
        let tier = tier(self.cfg, ratio);
        let n = [self.cfg.n_far, self.cfg.n_reg, self.cfg.n_sing][tier];
        let qa_own;
        let qa = if ca == els[oa] {
            &self.data[oa].tiers[tier]
        } else {
            qa_own = QuadPoints::new(self.geom, self.mesh, &els[oa], &ra, n);
            &qa_own
        };
        let qb_own;
        let qb = if cb == els[ob] {
            &self.data[ob].tiers[tier]
        } else {
            qb_own = QuadPoints::new(self.geom, self.mesh, &els[ob], &rb, n);
            &qb_own
        };
        regular(qa, qb, m);
        Ok(ratio < self.cfg.rho_near)
    }

    fn singular(
        &self,
        case: SingularCase,
        a: (&Element, &LocalMap, usize),
        b: (&Element, &LocalMap, usize),
        m: &mut [f64],
    ) -> Result<()> {
        let (ea, ma, ia) = a;
        let (eb, mb, ib) = b;
        let na = self.data[ia].tiers[0].nloc;
        let nb = self.data[ib].tiers[0].nloc;
        let (pa, pb) = (&self.geom.patches()[ea.patch], &self.geom.patches()[eb.patch]);
        let area = {
            let det = |lm: &LocalMap| (lm.e1[0] * lm.e2[1] - lm.e1[1] * lm.e2[0]).abs();
            det(ma) * det(mb)
        };
        let mut ba = vec![0.0; na];
        let mut bb = vec![0.0; nb];
        for p in singular_rule(case, self.cfg.n_sing).iter() {
            let (ta, tb) = (ma.map(p.u), mb.map(p.v));
            let (xa, xb) = (pa.eval_full(ta), pb.eval_full(tb));
            let r = (xa.x - xb.x).norm();
            if r == 0.0 {
                return Err(Error::CoincidentPoints);
            }
            let val = p.w * area * xa.area_normal().norm() * xb.area_normal().norm() * kernel_r(r);
            if na == 1 && nb == 1 {
                m[0] += val;
                continue;
            }
            basis_values(self.mesh, ea, ta, &mut ba);
            basis_values(self.mesh, eb, tb, &mut bb);
            for (r, x) in ba.iter().enumerate() {
                let row = &mut m[r * nb..(r + 1) * nb];
                for (slot, y) in row.iter_mut().zip(&bb) {
                    *slot += val * x * y;
                }
            }
        }
        Ok(())
    }
}

/// Tensor-product quadrature of a separated pair.
pub(crate) fn regular(qa: &QuadPoints, qb: &QuadPoints, m: &mut [f64]) {
    let (na, nb) = (qa.nloc, qb.nloc);
    if na == 1 && nb == 1 {
        let mut acc = 0.0;
        for (xa, wa) in qa.x.iter().zip(&qa.w) {
            let mut row = 0.0;
            for (xb, wb) in qb.x.iter().zip(&qb.w) {
                row += wb * kernel_r((xa - xb).norm());
            }
            acc += wa * row;
        }
        m[0] += acc;
        return;
    }
    let mut tmp = vec![0.0; nb];
    for i in 0..qa.len() {
        tmp.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..qb.len() {
            let k = qb.w[j] * kernel_r((qa.x[i] - qb.x[j]).norm());
            for (t, b) in tmp.iter_mut().zip(&qb.basis[j * nb..(j + 1) * nb]) {
                *t += k * b;
            }
        }
        let wa = qa.w[i];
        for (r, a) in qa.basis[i * na..(i + 1) * na].iter().enumerate() {
            let f = wa * a;
            for (slot, t) in m[r * nb..(r + 1) * nb].iter_mut().zip(&tmp) {
                *slot += f * t;
            }
        }
    }
}
