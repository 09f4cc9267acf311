//! Hierarchical B-spline spaces with truncated (THB) basis functions.
//!
//! The span of the truncated functions equals the span of the plain
//! hierarchical B-splines, so either can serve as a basis of the same
//! discrete space; the truncated ones form a partition of unity and are
//! what the solver uses as degrees of freedom.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{Element, MultiPatchMesh};
use crate::spline::{cached_gauss, DualFunction, Rect, TensorSplineSpace, MAX_DEGREE};

/// A tensor B-spline of level `level` on patch `patch`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HierFn {
    pub patch: usize,
    pub level: usize,
    pub j1: usize,
    pub j2: usize,
}

/// One term `coeff * B_{level, index}` of a truncated function.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Term {
    pub level: usize,
    pub index: [usize; 2],
    pub coeff: f64,
}

/// Truncated hierarchical B-spline, stored stage by stage: stage `k`
/// holds the level-`k` terms obtained after the truncation steps up to
/// level `k`. Terms marked `expanded` were pushed to the next level.
#[derive(Clone, Debug)]
pub struct THBRep {
    pub fun: HierFn,
    stages: Vec<Vec<(Term, bool)>>,
}

impl THBRep {
    /// Terms of the fully truncated function.
    pub fn terms(&self) -> Vec<Term> {
        self.stages.iter().flatten().filter(|(_, expanded)| !expanded).map(|(t, _)| *t).collect()
    }

    /// Terms describing the function on elements of level `level`.
    fn terms_at(&self, level: usize) -> Vec<Term> {
        let mut out = Vec::new();
        for (s, stage) in self.stages.iter().enumerate() {
            let k = self.fun.level + s;
            if k > level {
                break;
            }
            for (t, expanded) in stage {
                if k == level || !expanded {
                    out.push(*t);
                }
            }
        }
        out
    }

    /// Whether no truncation took place.
    pub fn is_untruncated(&self) -> bool {
        self.stages.len() == 1 && self.stages[0].len() == 1 && !self.stages[0][0].1
    }
}

/// Truncation of `f` against the finer domains of `mesh`.
pub fn truncate(mesh: &MultiPatchMesh, f: &HierFn) -> THBRep {
    let pm = mesh.patch(f.patch);
    let mut stages = Vec::new();
    let mut cur: BTreeMap<[usize; 2], f64> = BTreeMap::new();
    cur.insert([f.j1, f.j2], 1.0);
    let mut k = f.level;
    loop {
        let mut next: BTreeMap<[usize; 2], f64> = BTreeMap::new();
        let mut stage = Vec::with_capacity(cur.len());
        let deeper = pm.domain(k + 1).is_some_and(|d| !d.is_empty());
        for (&j, &c) in &cur {
            let fun = HierFn { patch: f.patch, level: k, j1: j[0], j2: j[1] };
            let expand = deeper && overlaps_next_domain(mesh, &fun);
            if expand {
                let ts = mesh.level_space(f.patch, k + 1).from_coarse.as_ref().expect("two-scale data");
                for &(a, ca) in ts[0].row(j[0]) {
                    for &(b, cb) in ts[1].row(j[1]) {
                        *next.entry([a, b]).or_insert(0.0) += c * ca * cb;
                    }
                }
            }
            stage.push((Term { level: k, index: j, coeff: c }, expand));
        }
        stages.push(stage);
        next.retain(|j, c| {
            *c > 0.0 && !support_in_domain(mesh, &HierFn { patch: f.patch, level: k + 1, j1: j[0], j2: j[1] }, k + 1)
        });
        if next.is_empty() {
            break;
        }
        cur = next;
        k += 1;
    }
    THBRep { fun: *f, stages }
}

/// Whether some cell of the support of `f` has children in `Omega^{level+1}`.
fn overlaps_next_domain(mesh: &MultiPatchMesh, f: &HierFn) -> bool {
    let pm = mesh.patch(f.patch);
    let (lo, hi) = mesh.support_cells(f);
    (lo[0]..hi[0]).any(|i| (lo[1]..hi[1]).any(|j| pm.in_domain(f.level + 1, [2 * i, 2 * j])))
}

fn support_in_domain(mesh: &MultiPatchMesh, f: &HierFn, level: usize) -> bool {
    let pm = mesh.patch(f.patch);
    let (lo, hi) = mesh.support_cells(f);
    (lo[0]..hi[0]).all(|i| (lo[1]..hi[1]).all(|j| pm.in_domain(level, [i, j])))
}

/// Local representation of a basis function on one element: coefficients
/// with respect to the `(p1+1)(p2+1)` tensor B-splines of the element's
/// level, index `r1 + (p1+1) * r2`.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalFn {
    pub dof: usize,
    pub coeffs: Vec<f64>,
}

/// Values (and parameter gradients) of the element's tensor B-splines.
#[derive(Clone, Debug)]
pub struct LocalBasis {
    pub degree: [usize; 2],
    pub values: [[f64; MAX_DEGREE + 1]; 2],
    pub derivs: [[f64; MAX_DEGREE + 1]; 2],
}

impl LocalBasis {
    #[inline]
    pub fn value(&self, coeffs: &[f64]) -> f64 {
        let n1 = self.degree[0] + 1;
        let mut acc = 0.0;
        for r2 in 0..=self.degree[1] {
            let mut row = 0.0;
            for r1 in 0..n1 {
                row += coeffs[r1 + n1 * r2] * self.values[0][r1];
            }
            acc += row * self.values[1][r2];
        }
        acc
    }

    pub fn gradient(&self, coeffs: &[f64]) -> [f64; 2] {
        let n1 = self.degree[0] + 1;
        let mut g = [0.0; 2];
        for r2 in 0..=self.degree[1] {
            for r1 in 0..n1 {
                let c = coeffs[r1 + n1 * r2];
                g[0] += c * self.derivs[0][r1] * self.values[1][r2];
                g[1] += c * self.values[0][r1] * self.derivs[1][r2];
            }
        }
        g
    }
}

/// Hierarchical spline space on a mesh with its truncated basis.
#[derive(Clone, Debug)]
pub struct SplineSpace {
    mesh: Arc<MultiPatchMesh>,
    functions: Vec<HierFn>,
    index: HashMap<HierFn, usize>,
    thb: Vec<THBRep>,
    element_index: HashMap<Element, usize>,
    element_fns: Vec<Vec<LocalFn>>,
}

impl SplineSpace {
    pub fn new(mesh: Arc<MultiPatchMesh>) -> Self {
        let mut set = BTreeSet::new();
        let mut per_element = Vec::with_capacity(mesh.num_elements());
        for e in mesh.elements() {
            let fns = mesh.functions_on(e);
            set.extend(fns.iter().copied());
            per_element.push(fns);
        }
        let functions: Vec<HierFn> = set.into_iter().collect();
        let index: HashMap<HierFn, usize> = functions.iter().enumerate().map(|(i, f)| (*f, i)).collect();
        let thb: Vec<THBRep> = functions.iter().map(|f| truncate(&mesh, f)).collect();
        let element_index = mesh.elements().iter().enumerate().map(|(i, e)| (*e, i)).collect();
        let element_fns = mesh
            .elements()
            .iter()
            .zip(&per_element)
            .map(|(e, fns)| {
                fns.iter()
                    .filter_map(|f| {
                        let dof = index[f];
                        let coeffs = local_coefficients(&mesh, &thb[dof], e);
                        coeffs.iter().any(|c| c.abs() > 1e-14).then_some(LocalFn { dof, coeffs })
                    })
                    .collect()
            })
            .collect();
        SplineSpace { mesh, functions, index, thb, element_index, element_fns }
    }

    /// Like [`SplineSpace::new`] but rejects non-admissible meshes.
    pub fn new_strict(mesh: Arc<MultiPatchMesh>) -> Result<Self> {
        if !mesh.is_admissible() {
            return Err(Error::NotAdmissible);
        }
        Ok(Self::new(mesh))
    }

    pub fn mesh(&self) -> &Arc<MultiPatchMesh> {
        &self.mesh
    }

    pub fn dim(&self) -> usize {
        self.functions.len()
    }

    pub fn functions(&self) -> &[HierFn] {
        &self.functions
    }

    pub fn dof_of(&self, f: &HierFn) -> Option<usize> {
        self.index.get(f).copied()
    }

    pub fn thb(&self, dof: usize) -> &THBRep {
        &self.thb[dof]
    }

    pub fn element_index(&self, e: &Element) -> Option<usize> {
        self.element_index.get(e).copied()
    }

    /// Basis functions nonzero on the `i`-th active element.
    pub fn element_functions(&self, i: usize) -> &[LocalFn] {
        &self.element_fns[i]
    }

    /// Tensor B-spline values of the element's level at parameter `t`.
    pub fn local_basis(&self, e: &Element, t: [f64; 2]) -> LocalBasis {
        local_basis(&self.mesh, e, t)
    }

    /// Evaluates `sum_i coeffs[i] * basis_i` at a parameter point.
    pub fn eval(&self, coeffs: &[f64], patch: usize, t: [f64; 2]) -> Result<f64> {
        let e = self.mesh.locate(patch, t)?;
        Ok(self.eval_on_element(coeffs, self.element_index[&e], t))
    }

    pub fn eval_on_element(&self, coeffs: &[f64], elem: usize, t: [f64; 2]) -> f64 {
        let e = &self.mesh.elements()[elem];
        let lb = local_basis(&self.mesh, e, t);
        self.element_fns[elem].iter().map(|lf| coeffs[lf.dof] * lb.value(&lf.coeffs)).sum()
    }

    /// Value of basis function `dof` at a parameter point.
    pub fn eval_basis(&self, dof: usize, patch: usize, t: [f64; 2]) -> Result<f64> {
        let e = self.mesh.locate(patch, t)?;
        let i = self.element_index[&e];
        let lb = local_basis(&self.mesh, &e, t);
        Ok(self.element_fns[i].iter().find(|lf| lf.dof == dof).map_or(0.0, |lf| lb.value(&lf.coeffs)))
    }

    /// Value of the untruncated hierarchical B-spline `dof` at `t`.
    pub fn eval_untruncated(&self, dof: usize, t: [f64; 2]) -> f64 {
        let f = &self.functions[dof];
        self.mesh.level_space(f.patch, f.level).space.eval([f.j1, f.j2], t).unwrap_or(0.0)
    }

    /// Dual element of `dof`: the smallest active element of the
    /// function's level inside its support.
    pub fn dual_element(&self, dof: usize) -> Element {
        let f = &self.functions[dof];
        self.mesh
            .support_elements(f)
            .into_iter()
            .find(|e| e.level == f.level)
            .expect("hierarchical B-spline has an active element of its level")
    }

    /// Quasi-interpolant built from dual functionals; only functions whose
    /// support is covered by `subset` contribute.
    pub fn quasi_interpolate(&self, subset: &[Element], g: &dyn Fn(usize, [f64; 2]) -> f64) -> Result<Vec<f64>> {
        let chosen: BTreeSet<Element> = subset.iter().copied().collect();
        for e in &chosen {
            if !self.mesh.is_active(e) {
                return Err(Error::StaleElement(*e));
            }
        }
        let mut out = vec![0.0; self.dim()];
        for (dof, f) in self.functions.iter().enumerate() {
            if !self.mesh.support_elements(f).iter().all(|e| chosen.contains(e)) {
                continue;
            }
            let de = self.dual_element(dof);
            let sp = &self.mesh.level_space(f.patch, f.level).space;
            let dual = DualFunction::new(sp, de.cell(), [f.j1, f.j2])?;
            let order = sp.dirs[0].degree().max(sp.dirs[1].degree()) + 4;
            out[dof] = dual.pair(sp, |t| g(f.patch, t), order);
        }
        Ok(out)
    }

    /// Coefficients in `fine` of the function given by `coeffs` in `self`.
    pub fn coarse_to_fine(&self, fine: &SplineSpace, coeffs: &[f64]) -> Result<Vec<f64>> {
        if !fine.mesh.is_finer_than(&self.mesh) {
            return Err(Error::NotNested);
        }
        if coeffs.len() != self.dim() {
            return Err(Error::InvalidArgument(format!("{} coefficients for {} functions", coeffs.len(), self.dim())));
        }
        let mut out = vec![0.0; fine.dim()];
        for (dof, f) in fine.functions.iter().enumerate() {
            let de = fine.dual_element(dof);
            let coarse_elem = self.mesh.locate(f.patch, fine.mesh.rect(&de).center())?;
            let ci = self.element_index[&coarse_elem];
            let sp = &fine.mesh.level_space(f.patch, f.level).space;
            let dual = DualFunction::new(sp, de.cell(), [f.j1, f.j2])?;
            let order = sp.dirs[0].degree().max(sp.dirs[1].degree()) + 1;
            out[dof] = dual.pair(sp, |t| self.eval_on_element(coeffs, ci, t), order);
        }
        Ok(out)
    }
}

pub(crate) fn local_basis(mesh: &MultiPatchMesh, e: &Element, t: [f64; 2]) -> LocalBasis {
    let sp = &mesh.level_space(e.patch, e.level).space;
    let spans = e.cell();
    LocalBasis {
        degree: [sp.dirs[0].degree(), sp.dirs[1].degree()],
        values: [sp.dirs[0].basis_on_span(spans[0], t[0]), sp.dirs[1].basis_on_span(spans[1], t[1])],
        derivs: [sp.dirs[0].derivs_on_span(spans[0], t[0]), sp.dirs[1].derivs_on_span(spans[1], t[1])],
    }
}

/// Coefficients of `rep` on element `e` by collocation at tensor Gauss
/// points (exact, since the function is a polynomial there).
fn local_coefficients(mesh: &MultiPatchMesh, rep: &THBRep, e: &Element) -> Vec<f64> {
    let sp: &TensorSplineSpace = &mesh.level_space(e.patch, e.level).space;
    let p = [sp.dirs[0].degree(), sp.dirs[1].degree()];
    let n = [p[0] + 1, p[1] + 1];
    if e.level < rep.fun.level {
        return vec![0.0; n[0] * n[1]];
    }
    let terms = rep.terms_at(e.level);
    let rect: Rect = mesh.rect(e);
    let nodes = [&cached_gauss(n[0]).nodes, &cached_gauss(n[1]).nodes];
    let mut coll = [DMatrix::<f64>::zeros(n[0], n[0]), DMatrix::<f64>::zeros(n[1], n[1])];
    for d in 0..2 {
        for (q, &x) in nodes[d].iter().enumerate() {
            let t = rect.lo[d] + rect.width(d) * x;
            let vals = sp.dirs[d].basis_on_span(e.cell()[d], t);
            for r in 0..n[d] {
                coll[d][(q, r)] = vals[r];
            }
        }
    }
    // Sample the function at the tensor points.
    let mut g = DMatrix::<f64>::zeros(n[0], n[1]);
    for term in &terms {
        let lsp = &mesh.level_space(e.patch, term.level).space;
        let anc = e.ancestor(term.level);
        let mut vals = [[0.0; MAX_DEGREE + 1]; 2];
        let mut nonzero = true;
        for d in 0..2 {
            let kv = &lsp.dirs[d];
            let first = kv.first_basis_on_span(anc.cell()[d]);
            let j = term.index[d];
            if j < first || j > first + kv.degree() {
                nonzero = false;
                break;
            }
            for (q, &x) in nodes[d].iter().enumerate() {
                let t = rect.lo[d] + rect.width(d) * x;
                vals[d][q] = kv.basis_on_span(anc.cell()[d], t)[j - first];
            }
        }
        if !nonzero {
            continue;
        }
        for q1 in 0..n[0] {
            for q2 in 0..n[1] {
                g[(q1, q2)] += term.coeff * vals[0][q1] * vals[1][q2];
            }
        }
    }
    let c0 = coll[0].clone().try_inverse().expect("collocation matrix is invertible");
    let c1 = coll[1].clone().try_inverse().expect("collocation matrix is invertible");
    let a = c0 * g * c1.transpose();
    let mut out = vec![0.0; n[0] * n[1]];
    for r2 in 0..n[1] {
        for r1 in 0..n[0] {
            out[r1 + n[0] * r2] = a[(r1, r2)];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spline::KnotVector;
    use crate::topology::Topology;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn patch_mesh(p: usize) -> MultiPatchMesh {
        let kv = KnotVector::single_span(p);
        MultiPatchMesh::initial(
            vec![TensorSplineSpace::new(kv.clone(), kv)],
            Arc::new(Topology::new(1, vec![]).unwrap()),
        )
        .unwrap()
    }

    /// Two refinement levels concentrated at the lower-left corner.
    fn corner_mesh(p: usize) -> MultiPatchMesh {
        let mut m = patch_mesh(p).uniform_refine().uniform_refine();
        for _ in 0..2 {
            let e = m.locate(0, [0.01, 0.01]).unwrap();
            m = m.refine(&[e]).unwrap();
        }
        m
    }

    /// Textbook truncation with dense level coefficient vectors.
    fn dense_truncated_eval(mesh: &MultiPatchMesh, f: &HierFn, t: [f64; 2]) -> f64 {
        let pm = mesh.patch(0);
        let mut level = f.level;
        let sp = &mesh.level_space(0, level).space;
        let n = [sp.dirs[0].num_basis(), sp.dirs[1].num_basis()];
        let mut c = vec![0.0; n[0] * n[1]];
        c[f.j1 + n[0] * f.j2] = 1.0;
        let mut n = n;
        while level + 1 < pm.num_levels() {
            let fine = mesh.level_space(0, level + 1);
            let ts = fine.from_coarse.as_ref().unwrap();
            let nf = [fine.space.dirs[0].num_basis(), fine.space.dirs[1].num_basis()];
            let mut cf = vec![0.0; nf[0] * nf[1]];
            for j2 in 0..n[1] {
                for j1 in 0..n[0] {
                    let v = c[j1 + n[0] * j2];
                    if v == 0.0 {
                        continue;
                    }
                    for &(a, ca) in ts[0].row(j1) {
                        for &(b, cb) in ts[1].row(j2) {
                            cf[a + nf[0] * b] += v * ca * cb;
                        }
                    }
                }
            }
            level += 1;
            for j2 in 0..nf[1] {
                for j1 in 0..nf[0] {
                    let g = HierFn { patch: 0, level, j1, j2 };
                    if support_in_domain(mesh, &g, level) {
                        cf[j1 + nf[0] * j2] = 0.0;
                    }
                }
            }
            c = cf;
            n = nf;
        }
        let sp = &mesh.level_space(0, level).space;
        let mut acc = 0.0;
        for j2 in 0..n[1] {
            for j1 in 0..n[0] {
                if c[j1 + n[0] * j2] != 0.0 {
                    acc += c[j1 + n[0] * j2] * sp.eval([j1, j2], t).unwrap();
                }
            }
        }
        acc
    }

    #[test]
    fn tensor_mesh_gives_tensor_basis() {
        let m = patch_mesh(1).uniform_refine();
        let s = SplineSpace::new(Arc::new(m));
        assert_eq!(s.dim(), 9);
        assert!((0..9).all(|i| s.thb(i).is_untruncated()));
        let s = SplineSpace::new(Arc::new(patch_mesh(2)));
        assert_eq!(s.dim(), 9);
        assert!(s.functions().iter().all(|f| f.level == 0));
    }

    #[test]
    fn bounded_number_of_functions_per_element() {
        for p in 1..=2 {
            let s = SplineSpace::new(Arc::new(corner_mesh(p)));
            let bound = 2 * (p + 1) * (p + 1);
            for e in s.mesh().elements() {
                assert!(s.mesh().functions_on(e).len() <= bound);
            }
        }
    }

    #[test]
    fn truncated_evaluation_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for p in 0..=2 {
            let s = SplineSpace::new(Arc::new(corner_mesh(p)));
            for _ in 0..200 {
                let t = [rng.gen::<f64>(), rng.gen::<f64>()];
                let mut sum = 0.0;
                for dof in 0..s.dim() {
                    let v = s.eval_basis(dof, 0, t).unwrap();
                    let oracle = dense_truncated_eval(s.mesh(), &s.functions()[dof], t);
                    assert_abs_diff_eq!(v, oracle, epsilon = 1e-12);
                    assert!(v >= -1e-12 && v <= s.eval_untruncated(dof, t) + 1e-12);
                    sum += v;
                }
                assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn nested_transfer_reproduces_function() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let coarse_mesh = corner_mesh(2);
        let e = coarse_mesh.elements()[coarse_mesh.num_elements() / 2];
        let fine_mesh = coarse_mesh.refine(&[e]).unwrap();
        let coarse = SplineSpace::new(Arc::new(coarse_mesh));
        let fine = SplineSpace::new(Arc::new(fine_mesh));
        let c: Vec<f64> = (0..coarse.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let cf = coarse.coarse_to_fine(&fine, &c).unwrap();
        for _ in 0..300 {
            let t = [rng.gen::<f64>(), rng.gen::<f64>()];
            assert_abs_diff_eq!(coarse.eval(&c, 0, t).unwrap(), fine.eval(&cf, 0, t).unwrap(), epsilon = 1e-10);
        }
        assert!(matches!(fine.coarse_to_fine(&coarse, &cf), Err(Error::NotNested)));
        let ones = coarse.coarse_to_fine(&fine, &vec![1.0; coarse.dim()]).unwrap();
        assert!(ones.iter().all(|v| (v - 1.0).abs() < 1e-10));
    }

    #[test]
    fn quasi_interpolant_reproduces_space() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = SplineSpace::new(Arc::new(corner_mesh(2)));
        let c: Vec<f64> = (0..s.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let all = s.mesh().elements().to_vec();
        let q = s.quasi_interpolate(&all, &|_, t| s.eval(&c, 0, t).unwrap()).unwrap();
        for (a, b) in q.iter().zip(&c) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
        let zero = s.quasi_interpolate(&all, &|_, _| 0.0).unwrap();
        assert!(zero.iter().all(|v| *v == 0.0));
    }
}
