//! Multi-patch NURBS boundaries and their metric quantities.

use std::f64::consts::FRAC_1_SQRT_2;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, Matrix2, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::MultiPatchMesh;
use crate::spline::{KnotVector, Rect, TensorSplineSpace};
use crate::topology::{side_point, Interface, Topology};

pub type Point = Vector3<f64>;

/// Tensor-product NURBS surface over `[0,1]^2`. Control points are stored
/// with the first parameter direction running fastest.
#[derive(Clone, Debug)]
pub struct NurbsPatch {
    knots: [KnotVector; 2],
    control_points: Vec<Point>,
    weights: Vec<f64>,
    segments: Vec<Segment>,
}

/// Homogeneous coordinates `(w x, w)` on one knot span in the monomial
/// basis of the local coordinates `s = (t - lo) / width`.
#[derive(Clone, Debug)]
struct Segment {
    lo: [f64; 2],
    inv_width: [f64; 2],
    /// Index `a + (p1 + 1) b` for the monomial `s1^a s2^b`.
    coeffs: Vec<[f64; 4]>,
}

/// Position and parameter derivatives of a patch at one point.
#[derive(Clone, Copy, Debug)]
pub struct SurfacePoint {
    pub x: Point,
    pub du: Point,
    pub dv: Point,
}

impl SurfacePoint {
    /// `du x dv`, whose length is the surface element.
    pub fn area_normal(&self) -> Point {
        self.du.cross(&self.dv)
    }

    pub fn gram_det(&self) -> f64 {
        let g = self.first_form();
        g[(0, 0)] * g[(1, 1)] - g[(0, 1)] * g[(1, 0)]
    }

    pub fn first_form(&self) -> Matrix2<f64> {
        Matrix2::new(self.du.dot(&self.du), self.du.dot(&self.dv), self.dv.dot(&self.du), self.dv.dot(&self.dv))
    }
}

impl NurbsPatch {
    pub fn new(knots: [KnotVector; 2], control_points: Vec<Point>, weights: Option<Vec<f64>>) -> Result<Self> {
        let n = knots[0].num_basis() * knots[1].num_basis();
        if control_points.len() != n {
            return Err(Error::Geometry(format!("expected {n} control points, got {}", control_points.len())));
        }
        let weights = weights.unwrap_or_else(|| vec![1.0; n]);
        if weights.len() != n || weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::Geometry("weights must be positive, one per control point".into()));
        }
        let mut patch = NurbsPatch { knots, control_points, weights, segments: Vec::new() };
        patch.segments = patch.build_segments();
        Ok(patch)
    }

    fn build_segments(&self) -> Vec<Segment> {
        let p = [self.knots[0].degree(), self.knots[1].degree()];
        let n = [p[0] + 1, p[1] + 1];
        let nodes = |k: usize| -> Vec<f64> {
            (0..k).map(|i| if k == 1 { 0.5 } else { i as f64 / (k - 1) as f64 }).collect()
        };
        let (s1, s2) = (nodes(n[0]), nodes(n[1]));
        let vandermonde_inv = |s: &[f64]| {
            DMatrix::from_fn(s.len(), s.len(), |i, j| s[i].powi(j as i32))
                .try_inverse()
                .expect("Vandermonde matrix on distinct nodes")
        };
        let (v1, v2) = (vandermonde_inv(&s1), vandermonde_inv(&s2));
        let mut out = Vec::new();
        for b in 0..self.knots[1].num_spans() {
            for a in 0..self.knots[0].num_spans() {
                let (lo1, hi1) = self.knots[0].span_bounds(a);
                let (lo2, hi2) = self.knots[1].span_bounds(b);
                let mut coeffs = vec![[0.0; 4]; n[0] * n[1]];
                for comp in 0..4 {
                    let h = DMatrix::from_fn(n[0], n[1], |i, j| {
                        let t = [lo1 + (hi1 - lo1) * s1[i], lo2 + (hi2 - lo2) * s2[j]];
                        self.homogeneous([a, b], t)[comp]
                    });
                    let c = &v1 * h * v2.transpose();
                    for j in 0..n[1] {
                        for i in 0..n[0] {
                            coeffs[i + n[0] * j][comp] = c[(i, j)];
                        }
                    }
                }
                out.push(Segment { lo: [lo1, lo2], inv_width: [1.0 / (hi1 - lo1), 1.0 / (hi2 - lo2)], coeffs });
            }
        }
        out
    }

    /// `(w x, w)` on the given spans by the Cox-de Boor recursion.
    fn homogeneous(&self, span: [usize; 2], t: [f64; 2]) -> [f64; 4] {
        let n = [self.knots[0].basis_on_span(span[0], t[0]), self.knots[1].basis_on_span(span[1], t[1])];
        let f = [self.knots[0].first_basis_on_span(span[0]), self.knots[1].first_basis_on_span(span[1])];
        let n1 = self.knots[0].num_basis();
        let mut out = [0.0; 4];
        for b in 0..=self.knots[1].degree() {
            for a in 0..=self.knots[0].degree() {
                let idx = f[0] + a + n1 * (f[1] + b);
                let v = n[0][a] * n[1][b] * self.weights[idx];
                let p = &self.control_points[idx];
                out[0] += v * p[0];
                out[1] += v * p[1];
                out[2] += v * p[2];
                out[3] += v;
            }
        }
        out
    }

    /// Bilinear patch through four corners given in corner order
    /// `(0,0), (1,0), (0,1), (1,1)`.
    pub fn bilinear(corners: [Point; 4]) -> Self {
        let kv = KnotVector::single_span(1);
        NurbsPatch::new([kv.clone(), kv], corners.to_vec(), None).expect("bilinear patch")
    }

    pub fn knots(&self) -> &[KnotVector; 2] {
        &self.knots
    }

    pub fn control_points(&self) -> &[Point] {
        &self.control_points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn eval(&self, t: [f64; 2]) -> Point {
        self.eval_full(t).x
    }

    pub fn eval_full(&self, t: [f64; 2]) -> SurfacePoint {
        let s = [self.knots[0].find_span(t[0]), self.knots[1].find_span(t[1])];
        let seg = &self.segments[s[0] + self.knots[0].num_spans() * s[1]];
        let u = (t[0] - seg.lo[0]) * seg.inv_width[0];
        let v = (t[1] - seg.lo[1]) * seg.inv_width[1];
        let n1 = self.knots[0].degree() + 1;
        let mut h = [0.0; 4];
        let mut hu = [0.0; 4];
        let mut hv = [0.0; 4];
        for row in seg.coeffs.chunks_exact(n1).rev() {
            let mut r = [0.0; 4];
            let mut dr = [0.0; 4];
            for c in row.iter().rev() {
                for k in 0..4 {
                    dr[k] = dr[k] * u + r[k];
                    r[k] = r[k] * u + c[k];
                }
            }
            for k in 0..4 {
                hv[k] = hv[k] * v + h[k];
                h[k] = h[k] * v + r[k];
                hu[k] = hu[k] * v + dr[k];
            }
        }
        let w = h[3];
        let x = Point::new(h[0], h[1], h[2]) / w;
        let du = (Point::new(hu[0], hu[1], hu[2]) - x * hu[3]) * (seg.inv_width[0] / w);
        let dv = (Point::new(hv[0], hv[1], hv[2]) - x * hv[3]) * (seg.inv_width[1] / w);
        SurfacePoint { x, du, dv }
    }

    /// Columns `d gamma / d t1` and `d gamma / d t2`.
    pub fn jacobian(&self, t: [f64; 2]) -> [Point; 2] {
        let sp = self.eval_full(t);
        [sp.du, sp.dv]
    }
}

/// Closed or open boundary made of glued NURBS patches.
#[derive(Clone, Debug)]
pub struct BoundaryGeometry {
    name: String,
    patches: Vec<NurbsPatch>,
    topology: Arc<Topology>,
    orientation: Vec<f64>,
    interior_point: Point,
    diameter: f64,
}

impl BoundaryGeometry {
    /// Builds a geometry; interfaces are detected from coinciding patch
    /// edges when not given. Normals are oriented away from `interior_point`.
    pub fn new(
        name: &str,
        patches: Vec<NurbsPatch>,
        interfaces: Option<Vec<Interface>>,
        interior_point: Point,
    ) -> Result<Self> {
        if patches.is_empty() {
            return Err(Error::Geometry("no patches".into()));
        }
        let diameter = sampled_diameter(&patches);
        let interfaces = match interfaces {
            Some(i) => i,
            None => detect_interfaces(&patches, 1e-10 * diameter)?,
        };
        let topology = Topology::new(patches.len(), interfaces)?;
        let mut orientation = Vec::with_capacity(patches.len());
        for (m, p) in patches.iter().enumerate() {
            let sp = p.eval_full([0.5, 0.5]);
            let n = sp.area_normal();
            if n.norm() <= 0.0 {
                return Err(Error::DegenerateJacobian { patch: m, t: [0.5, 0.5] });
            }
            orientation.push(if n.dot(&(sp.x - interior_point)) >= 0.0 { 1.0 } else { -1.0 });
        }
        let geom = BoundaryGeometry {
            name: name.to_string(),
            patches,
            topology: Arc::new(topology),
            orientation,
            interior_point,
            diameter,
        };
        geom.check_interfaces(1e-10 * diameter.max(f64::MIN_POSITIVE))?;
        Ok(geom)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn patches(&self) -> &[NurbsPatch] {
        &self.patches
    }

    pub fn num_patches(&self) -> usize {
        self.patches.len()
    }

    pub fn topology(&self) -> &Arc<Topology> {
        &self.topology
    }

    pub fn interior_point(&self) -> Point {
        self.interior_point
    }

    /// Diameter of the boundary, from a dense sample of every patch.
    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    pub fn eval(&self, patch: usize, t: [f64; 2]) -> Point {
        self.patches[patch].eval(t)
    }

    pub fn eval_full(&self, patch: usize, t: [f64; 2]) -> SurfacePoint {
        self.patches[patch].eval_full(t)
    }

    pub fn jacobian(&self, patch: usize, t: [f64; 2]) -> [Point; 2] {
        self.patches[patch].jacobian(t)
    }

    pub fn gram_det(&self, patch: usize, t: [f64; 2]) -> Result<f64> {
        let g = self.patches[patch].eval_full(t).gram_det();
        if g > 0.0 {
            Ok(g)
        } else {
            Err(Error::DegenerateJacobian { patch, t })
        }
    }

    /// Outward unit normal.
    pub fn unit_normal(&self, patch: usize, t: [f64; 2]) -> Result<Point> {
        self.oriented_normal(patch, &self.patches[patch].eval_full(t))
            .ok_or(Error::DegenerateJacobian { patch, t })
    }

    /// Outward unit normal from precomputed derivatives.
    pub fn oriented_normal(&self, patch: usize, sp: &SurfacePoint) -> Option<Point> {
        let n = sp.area_normal();
        let len = n.norm();
        (len > 0.0).then(|| n * (self.orientation[patch] / len))
    }

    /// `|grad_Gamma v|^2` from the parameter gradient of `v o gamma`.
    pub fn surface_gradient_sq(&self, patch: usize, t: [f64; 2], grad: [f64; 2]) -> Result<f64> {
        surface_gradient_sq(&self.patches[patch].eval_full(t), grad).ok_or(Error::DegenerateJacobian { patch, t })
    }

    /// Level-0 spline spaces of degree `p` whose breakpoints are those of
    /// the geometry knot vectors.
    pub fn discrete_spaces(&self, p: usize) -> Result<Vec<TensorSplineSpace>> {
        self.patches
            .iter()
            .map(|patch| {
                let dirs = patch.knots.clone().map(|kv| {
                    let mut knots = vec![0.0; p + 1];
                    knots.extend(kv.breaks()[1..kv.breaks().len() - 1].iter().copied());
                    knots.extend(std::iter::repeat_n(1.0, p + 1));
                    KnotVector::new(p, knots)
                });
                let [u, v] = dirs;
                Ok(TensorSplineSpace::new(u?, v?))
            })
            .collect()
    }

    /// Initial hierarchical mesh for splines of degree `p`.
    pub fn initial_mesh(&self, p: usize) -> Result<MultiPatchMesh> {
        MultiPatchMesh::initial(self.discrete_spaces(p)?, self.topology.clone())
    }

    /// Surface area of a parameter rectangle by tensor Gauss quadrature.
    pub fn area(&self, patch: usize, rect: &Rect, order: usize) -> f64 {
        let rule = crate::spline::cached_gauss(order);
        let mut acc = 0.0;
        for (&x, &wx) in rule.nodes.iter().zip(&rule.weights) {
            for (&y, &wy) in rule.nodes.iter().zip(&rule.weights) {
                let sp = self.patches[patch].eval_full(rect.map([x, y]));
                acc += wx * wy * sp.area_normal().norm();
            }
        }
        acc * rect.area()
    }

    fn check_interfaces(&self, tol: f64) -> Result<()> {
        for itf in self.topology.interfaces() {
            for k in 0..=8 {
                let s = k as f64 / 8.0;
                let sb = if itf.reversed { 1.0 - s } else { s };
                let xa = self.eval(itf.patch_a, side_point(itf.side_a, s));
                let xb = self.eval(itf.patch_b, side_point(itf.side_b, sb));
                if (xa - xb).norm() > tol {
                    return Err(Error::Geometry(format!("interface {itf:?} does not match at s = {s}")));
                }
            }
        }
        Ok(())
    }

    /// The axis-parallel cube `(0, 1/10)^3`, one bilinear patch per face.
    pub fn cube() -> Self {
        let s = 0.1;
        let p = |x: f64, y: f64, z: f64| Point::new(x, y, z);
        let face = |o: Point, a: Point, b: Point| NurbsPatch::bilinear([o, o + a, o + b, o + a + b]);
        let (ex, ey, ez) = (p(s, 0.0, 0.0), p(0.0, s, 0.0), p(0.0, 0.0, s));
        let o = Point::zeros();
        let patches = vec![
            face(o, ex, ey),
            face(ez, ex, ey),
            face(o, ex, ez),
            face(ey, ex, ez),
            face(o, ey, ez),
            face(ex, ey, ez),
        ];
        BoundaryGeometry::new("cube", patches, None, p(0.05, 0.05, 0.05)).expect("cube fixture")
    }

    /// The quarter pipe `{(r cos b, r sin b, z) / 10 : r in (1/2, 1), b in (0, pi/2), z in (0, 1)}`.
    pub fn quarter_pipe() -> Self {
        let scale = 0.1;
        let quad = KnotVector::single_span(2);
        let lin = KnotVector::single_span(1);
        let arc = |r: f64| [(r, 0.0), (r, r), (0.0, r)];
        let arc_w = [1.0, FRAC_1_SQRT_2, 1.0];
        let wall = |r: f64| {
            let mut cps = Vec::new();
            let mut w = Vec::new();
            for z in [0.0, 1.0] {
                for (k, (x, y)) in arc(r).into_iter().enumerate() {
                    cps.push(Point::new(x, y, z) * scale);
                    w.push(arc_w[k]);
                }
            }
            NurbsPatch::new([quad.clone(), lin.clone()], cps, Some(w)).expect("wall patch")
        };
        let lid = |z: f64| {
            let mut cps = Vec::new();
            let mut w = Vec::new();
            for r in [0.5, 1.0] {
                for (k, (x, y)) in arc(r).into_iter().enumerate() {
                    cps.push(Point::new(x, y, z) * scale);
                    w.push(arc_w[k]);
                }
            }
            NurbsPatch::new([quad.clone(), lin.clone()], cps, Some(w)).expect("lid patch")
        };
        let p = |x: f64, y: f64, z: f64| Point::new(x, y, z) * scale;
        let patches = vec![
            wall(0.5),
            NurbsPatch::bilinear([p(0.5, 0.0, 0.0), p(1.0, 0.0, 0.0), p(0.5, 0.0, 1.0), p(1.0, 0.0, 1.0)]),
            wall(1.0),
            NurbsPatch::bilinear([p(0.0, 0.5, 0.0), p(0.0, 1.0, 0.0), p(0.0, 0.5, 1.0), p(0.0, 1.0, 1.0)]),
            lid(0.0),
            lid(1.0),
        ];
        let c = 0.75 * FRAC_1_SQRT_2;
        BoundaryGeometry::new("quarter_pipe", patches, None, p(c, c, 0.5)).expect("quarter pipe fixture")
    }

    /// Geometry by fixture name or from a JSON file.
    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "cube" => Ok(Self::cube()),
            "quarter_pipe" => Ok(Self::quarter_pipe()),
            other => {
                let path = Path::new(other);
                if path.exists() {
                    Self::from_json_file(path)
                } else {
                    Err(Error::Config(format!("unknown geometry '{other}'")))
                }
            }
        }
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: GeometryFile = serde_json::from_str(text)?;
        let patches = file
            .patches
            .into_iter()
            .map(|p| {
                let [k1, k2] = p.knots;
                let knots = [KnotVector::new(p.degrees[0], k1)?, KnotVector::new(p.degrees[1], k2)?];
                let cps = p.control_points.into_iter().map(Point::from).collect();
                NurbsPatch::new(knots, cps, p.weights)
            })
            .collect::<Result<Vec<_>>>()?;
        BoundaryGeometry::new(
            file.name.as_deref().unwrap_or("custom"),
            patches,
            file.interfaces,
            Point::from(file.interior_point),
        )
    }
}

/// JSON description of a user-supplied boundary.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryFile {
    #[serde(default)]
    pub name: Option<String>,
    pub patches: Vec<PatchFile>,
    #[serde(default)]
    pub interfaces: Option<Vec<Interface>>,
    pub interior_point: [f64; 3],
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatchFile {
    pub degrees: [usize; 2],
    pub knots: [Vec<f64>; 2],
    pub control_points: Vec<[f64; 3]>,
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
}

/// `grad^T (D^T D)^{-1} grad` at a surface point.
pub fn surface_gradient_sq(sp: &SurfacePoint, grad: [f64; 2]) -> Option<f64> {
    let g = sp.first_form();
    let det = g[(0, 0)] * g[(1, 1)] - g[(0, 1)] * g[(1, 0)];
    if !(det > 0.0) {
        return None;
    }
    let v = Vector2::new(grad[0], grad[1]);
    let inv = Matrix2::new(g[(1, 1)], -g[(0, 1)], -g[(1, 0)], g[(0, 0)]) / det;
    Some(v.dot(&(inv * v)))
}

fn sampled_diameter(patches: &[NurbsPatch]) -> f64 {
    let n = 16;
    let mut pts = Vec::new();
    for p in patches {
        for i in 0..=n {
            for j in 0..=n {
                pts.push(p.eval([i as f64 / n as f64, j as f64 / n as f64]));
            }
        }
    }
    let mut d: f64 = 0.0;
    for (i, a) in pts.iter().enumerate() {
        for b in &pts[i + 1..] {
            d = d.max((a - b).norm());
        }
    }
    d
}

fn detect_interfaces(patches: &[NurbsPatch], tol: f64) -> Result<Vec<Interface>> {
    let samples = [0.0, 0.25, 0.5, 0.75, 1.0];
    let edge = |m: usize, side: usize| -> Vec<Point> {
        samples.iter().map(|&s| patches[m].eval(side_point(side, s))).collect()
    };
    let mut used = vec![[false; 4]; patches.len()];
    let mut out = Vec::new();
    for a in 0..patches.len() {
        for sa in 0..4 {
            if used[a][sa] {
                continue;
            }
            let ea = edge(a, sa);
            if (ea[0] - ea[4]).norm() <= tol && (ea[0] - ea[2]).norm() <= tol {
                continue; // collapsed edge
            }
            for b in a + 1..patches.len() {
                for sb in 0..4 {
                    let eb = edge(b, sb);
                    let forward = ea.iter().zip(&eb).all(|(x, y)| (x - y).norm() <= tol);
                    let reversed = ea.iter().zip(eb.iter().rev()).all(|(x, y)| (x - y).norm() <= tol);
                    if !(forward || reversed) {
                        continue;
                    }
                    if used[a][sa] || used[b][sb] {
                        return Err(Error::Geometry(format!(
                            "edge {sa} of patch {a} matches more than one other edge"
                        )));
                    }
                    used[a][sa] = true;
                    used[b][sb] = true;
                    out.push(Interface { patch_a: a, side_a: sa, patch_b: b, side_b: sb, reversed: !forward });
                }
            }
        }
    }
    Ok(out)
}

/// Whether `x` lies strictly inside the cube `(0, 1/10)^3`.
pub fn inside_cube(x: &Point) -> bool {
    x.iter().all(|c| *c > 0.0 && *c < 0.1)
}

/// Whether `x` lies strictly inside the quarter pipe.
pub fn inside_quarter_pipe(x: &Point) -> bool {
    let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
    x[0] > 0.0 && x[1] > 0.0 && r > 0.05 && r < 0.1 && x[2] > 0.0 && x[2] < 0.1
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn cube_fixture() {
        let g = BoundaryGeometry::cube();
        assert_eq!(g.num_patches(), 6);
        assert_eq!(g.topology().interfaces().len(), 12);
        assert!(g.topology().is_closed());
        assert_eq!(g.eval(0, [0.0, 0.0]), Point::zeros());
        let area: f64 = (0..6).map(|m| g.area(m, &Rect::UNIT, 2)).sum();
        assert_abs_diff_eq!(area, 0.06, epsilon = 1e-15);
        assert_abs_diff_eq!(g.diameter(), 3f64.sqrt() / 10.0, epsilon = 1e-15);
        for m in 0..6 {
            assert_abs_diff_eq!(g.gram_det(m, [0.3, 0.7]).unwrap(), 1e-4, epsilon = 1e-18);
        }
    }

    #[test]
    fn quarter_pipe_walls_are_circular() {
        let g = BoundaryGeometry::quarter_pipe();
        assert_eq!(g.topology().interfaces().len(), 12);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..100 {
            let t = [rng.gen::<f64>(), rng.gen::<f64>()];
            let x = g.eval(0, t);
            assert!((x.xy().norm() - 0.05).abs() <= 1e-14);
            let x = g.eval(2, t);
            assert!((x.xy().norm() - 0.1).abs() <= 1e-14);
            assert_abs_diff_eq!(g.eval(4, t)[2], 0.0);
            assert_abs_diff_eq!(g.eval(5, t)[2], 0.1);
        }
        let x = g.eval(0, [0.5, 0.5]);
        assert_abs_diff_eq!(x.xy().norm(), 0.05, epsilon = 1e-15);
    }

    #[test]
    fn normals_point_outward() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let eps = 1e-4;
        for (g, inside) in [
            (BoundaryGeometry::cube(), inside_cube as fn(&Point) -> bool),
            (BoundaryGeometry::quarter_pipe(), inside_quarter_pipe),
        ] {
            for _ in 0..100 {
                let m = rng.gen_range(0..g.num_patches());
                let t = [rng.gen_range(0.01..0.99), rng.gen_range(0.01..0.99)];
                let x = g.eval(m, t);
                let n = g.unit_normal(m, t).unwrap();
                assert!(!inside(&(x + n * eps)), "{} patch {m}", g.name());
                assert!(inside(&(x - n * eps)), "{} patch {m}", g.name());
            }
        }
        let g = BoundaryGeometry::quarter_pipe();
        let n = g.unit_normal(1, [0.4, 0.6]).unwrap();
        assert_abs_diff_eq!((n - Point::new(0.0, -1.0, 0.0)).norm(), 0.0, epsilon = 1e-15);
        for _ in 0..20 {
            let t = [rng.gen::<f64>(), rng.gen::<f64>()];
            let x = g.eval(0, t);
            let radial = Point::new(x[0], x[1], 0.0).normalize();
            assert!((g.unit_normal(0, t).unwrap().dot(&radial) + 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn surface_gradient_scaling() {
        let unit = NurbsPatch::bilinear([
            Point::new(0.0, 0.0, 0.0),
            Point::new(1.0, 0.0, 0.0),
            Point::new(0.0, 1.0, 0.0),
            Point::new(1.0, 1.0, 0.0),
        ]);
        let sp = unit.eval_full([0.2, 0.3]);
        assert_eq!(surface_gradient_sq(&sp, [0.0, 0.0]).unwrap(), 0.0);
        assert_abs_diff_eq!(surface_gradient_sq(&sp, [3.0, 4.0]).unwrap(), 25.0, epsilon = 1e-14);
        let s = 0.1;
        let scaled = NurbsPatch::bilinear(
            [Point::new(0.0, 0.0, 0.0), Point::new(s, 0.0, 0.0), Point::new(0.0, s, 0.0), Point::new(s, s, 0.0)],
        );
        let sp = scaled.eval_full([0.2, 0.3]);
        assert_abs_diff_eq!(surface_gradient_sq(&sp, [3.0, 4.0]).unwrap(), 25.0 / (s * s), epsilon = 1e-10);
    }

    #[test]
    fn monomial_segments_match_recursion() {
        let kv = KnotVector::new(2, vec![0.0, 0.0, 0.0, 0.3, 0.7, 1.0, 1.0, 1.0]).unwrap();
        let lin = KnotVector::new(1, vec![0.0, 0.0, 0.5, 1.0, 1.0]).unwrap();
        let n = kv.num_basis() * lin.num_basis();
        let cps: Vec<Point> = (0..n).map(|i| Point::new(i as f64, (i * i % 7) as f64, (i % 3) as f64)).collect();
        let w: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * (i % 4) as f64).collect();
        let patch = NurbsPatch::new([kv, lin], cps, Some(w)).unwrap();
        for i in 0..=20 {
            for j in 0..=20 {
                let t = [i as f64 / 20.0, j as f64 / 20.0];
                let spans = [patch.knots[0].find_span(t[0]), patch.knots[1].find_span(t[1])];
                let h = patch.homogeneous(spans, t);
                let x = Point::new(h[0], h[1], h[2]) / h[3];
                assert!((patch.eval(t) - x).norm() < 1e-12, "{t:?}");
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let g = BoundaryGeometry::quarter_pipe();
        let h = 1e-6;
        for m in 0..6 {
            let t = [0.37, 0.61];
            let sp = g.eval_full(m, t);
            let fd0 = (g.eval(m, [t[0] + h, t[1]]) - g.eval(m, [t[0] - h, t[1]])) / (2.0 * h);
            let fd1 = (g.eval(m, [t[0], t[1] + h]) - g.eval(m, [t[0], t[1] - h])) / (2.0 * h);
            assert!((sp.du - fd0).norm() < 1e-8);
            assert!((sp.dv - fd1).norm() < 1e-8);
        }
    }

    #[test]
    fn json_roundtrip_of_a_square() {
        let json = r#"{
            "patches": [{"degrees": [1, 1], "knots": [[0,0,1,1],[0,0,1,1]],
                         "control_points": [[0,0,0],[1,0,0],[0,1,0],[1,1,0]]}],
            "interior_point": [0.5, 0.5, -1.0]
        }"#;
        let g = BoundaryGeometry::from_json(json).unwrap();
        assert_eq!(g.num_patches(), 1);
        let n = g.unit_normal(0, [0.5, 0.5]).unwrap();
        assert_abs_diff_eq!(n[2], 1.0);
        assert!(BoundaryGeometry::from_json(r#"{"patches": [], "interior_point": [0,0,0], "extra": 1}"#).is_err());
        assert!(BoundaryGeometry::by_name("no_such_fixture").is_err());
    }

    #[test]
    fn initial_meshes() {
        assert_eq!(BoundaryGeometry::cube().initial_mesh(0).unwrap().num_elements(), 6);
        let m = BoundaryGeometry::quarter_pipe().initial_mesh(2).unwrap();
        assert_eq!(m.num_elements(), 6);
        assert_eq!(m.uniform_refine().uniform_refine().num_elements(), 96);
    }
}
