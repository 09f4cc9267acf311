//! Hierarchical meshes on multi-patch parameter domains.
//!
//! Each patch stores the nested domains `Omega^0 ⊇ Omega^1 ⊇ ...` as sets
//! of level-`k` cells. Active elements are derived: a cell of level `k` is
//! active if it lies in `Omega^k` and its children do not lie in
//! `Omega^{k+1}`.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::basis::HierFn;
use crate::error::{Error, Result};
use crate::spline::{two_scale_matrix, Rect, TensorSplineSpace, TwoScale};
use crate::topology::{side_dir, side_is_upper, Topology};

/// Bits of the integer coordinate used to compare cells across levels.
const SCALE_BITS: u32 = 32;

/// Deepest level a mesh may reach.
pub const MAX_LEVEL: usize = 30;

/// A cell of the level-`level` tensor mesh of a patch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Element {
    pub patch: usize,
    pub level: usize,
    pub i1: usize,
    pub i2: usize,
}

impl Element {
    pub fn new(patch: usize, level: usize, i1: usize, i2: usize) -> Self {
        Element { patch, level, i1, i2 }
    }

    pub fn cell(&self) -> [usize; 2] {
        [self.i1, self.i2]
    }

    /// Children ordered `(0,0), (1,0), (0,1), (1,1)`.
    pub fn children(&self) -> [Element; 4] {
        let (a, b) = (2 * self.i1, 2 * self.i2);
        let l = self.level + 1;
        [
            Element::new(self.patch, l, a, b),
            Element::new(self.patch, l, a + 1, b),
            Element::new(self.patch, l, a, b + 1),
            Element::new(self.patch, l, a + 1, b + 1),
        ]
    }

    pub fn parent(&self) -> Option<Element> {
        (self.level > 0).then(|| Element::new(self.patch, self.level - 1, self.i1 / 2, self.i2 / 2))
    }

    /// The cell of level `level <= self.level` containing this one.
    pub fn ancestor(&self, level: usize) -> Element {
        let s = self.level - level;
        Element::new(self.patch, level, self.i1 >> s, self.i2 >> s)
    }

    pub(crate) fn srect(&self) -> SRect {
        let s = SCALE_BITS - self.level as u32;
        SRect {
            lo: [(self.i1 as u64) << s, (self.i2 as u64) << s],
            hi: [((self.i1 + 1) as u64) << s, ((self.i2 + 1) as u64) << s],
        }
    }

    /// Whether `other` lies inside this cell (or equals it).
    pub fn contains(&self, other: &Element) -> bool {
        self.patch == other.patch && other.level >= self.level && other.ancestor(self.level) == *self
    }
}

/// Closed rectangle in integer coordinates shared by all levels of a patch.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct SRect {
    pub lo: [u64; 2],
    pub hi: [u64; 2],
}

impl SRect {
    pub fn overlaps(&self, o: &SRect) -> bool {
        (0..2).all(|d| self.lo[d] < o.hi[d] && o.lo[d] < self.hi[d])
    }

    pub fn touches(&self, o: &SRect) -> bool {
        (0..2).all(|d| self.lo[d] <= o.hi[d] && o.lo[d] <= self.hi[d])
    }
}

/// Neighbor relation used by admissibility and refinement closure.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NeighborMode {
    /// Elements sharing the support of a hierarchical B-spline.
    Support,
    /// Shared support or nonempty intersection (lowest-order variant).
    SupportOrTouching,
}

/// Tensor spline space of one level with the two-scale relation from the
/// level below.
#[derive(Debug)]
pub struct LevelSpace {
    pub space: TensorSplineSpace,
    pub from_coarse: Option<[TwoScale; 2]>,
}

#[derive(Clone, Debug)]
pub struct PatchHierMesh {
    levels: Vec<Arc<LevelSpace>>,
    domains: Vec<BTreeSet<[usize; 2]>>,
    n0: [usize; 2],
}

impl PatchHierMesh {
    fn new(space: TensorSplineSpace) -> Self {
        let n0 = [space.dirs[0].num_spans(), space.dirs[1].num_spans()];
        let mut all = BTreeSet::new();
        for i in 0..n0[0] {
            for j in 0..n0[1] {
                all.insert([i, j]);
            }
        }
        let mut mesh = PatchHierMesh {
            levels: vec![Arc::new(LevelSpace { space, from_coarse: None })],
            domains: vec![all],
            n0,
        };
        mesh.ensure_levels();
        mesh
    }

    /// Keeps spline data for every level up to one beyond the deepest domain.
    fn ensure_levels(&mut self) {
        while self.levels.len() < self.domains.len() + 1 {
            let coarse = &self.levels.last().unwrap().space;
            let fine = coarse.dyadic_refine();
            let ts = [
                two_scale_matrix(&coarse.dirs[0], &fine.dirs[0]).expect("dyadic refinement"),
                two_scale_matrix(&coarse.dirs[1], &fine.dirs[1]).expect("dyadic refinement"),
            ];
            self.levels.push(Arc::new(LevelSpace { space: fine, from_coarse: Some(ts) }));
        }
    }

    pub fn num_cells(&self, level: usize) -> [usize; 2] {
        [self.n0[0] << level, self.n0[1] << level]
    }

    pub fn level_space(&self, level: usize) -> &LevelSpace {
        &self.levels[level]
    }

    pub fn num_levels(&self) -> usize {
        self.domains.len()
    }

    /// Cells of `Omega^level`.
    pub fn domain(&self, level: usize) -> Option<&BTreeSet<[usize; 2]>> {
        self.domains.get(level)
    }

    pub fn in_domain(&self, level: usize, cell: [usize; 2]) -> bool {
        self.domains.get(level).is_some_and(|d| d.contains(&cell))
    }

    pub fn is_active_cell(&self, level: usize, cell: [usize; 2]) -> bool {
        self.in_domain(level, cell) && !self.in_domain(level + 1, [2 * cell[0], 2 * cell[1]])
    }

    fn max_coord(&self) -> [u64; 2] {
        [(self.n0[0] as u64) << SCALE_BITS, (self.n0[1] as u64) << SCALE_BITS]
    }
}

/// Hierarchical mesh on all patches of a boundary.
#[derive(Clone, Debug)]
pub struct MultiPatchMesh {
    patches: Vec<PatchHierMesh>,
    topology: Arc<Topology>,
    mode: NeighborMode,
    active: Vec<Element>,
}

impl PartialEq for MultiPatchMesh {
    fn eq(&self, other: &Self) -> bool {
        self.patches.len() == other.patches.len()
            && self
                .patches
                .iter()
                .zip(&other.patches)
                .all(|(a, b)| a.domains == b.domains && a.levels[0].space == b.levels[0].space)
    }
}

impl MultiPatchMesh {
    /// Level-0 mesh from the knot spans of each patch.
    pub fn initial(spaces: Vec<TensorSplineSpace>, topology: Arc<Topology>) -> Result<Self> {
        if spaces.len() != topology.num_patches() {
            return Err(Error::InvalidArgument(format!(
                "{} spline spaces for {} patches",
                spaces.len(),
                topology.num_patches()
            )));
        }
        for itf in topology.interfaces() {
            let a = spaces[itf.patch_a].dirs[side_dir(itf.side_a)].breaks();
            let b = spaces[itf.patch_b].dirs[side_dir(itf.side_b)].breaks();
            let n = a.len();
            let matches = n == b.len()
                && (0..n).all(|i| {
                    let other = if itf.reversed { 1.0 - b[n - 1 - i] } else { b[i] };
                    (a[i] - other).abs() <= 1e-12
                });
            if !matches {
                return Err(Error::InterfaceMismatch(format!(
                    "knot lines of patch {} side {} and patch {} side {} disagree",
                    itf.patch_a, itf.side_a, itf.patch_b, itf.side_b
                )));
            }
        }
        let min_degree = spaces
            .iter()
            .flat_map(|s| s.dirs.iter().map(|k| k.degree()))
            .min()
            .unwrap_or(0);
        let mode = if min_degree == 0 { NeighborMode::SupportOrTouching } else { NeighborMode::Support };
        let patches = spaces.into_iter().map(PatchHierMesh::new).collect();
        let mut mesh = MultiPatchMesh { patches, topology, mode, active: Vec::new() };
        mesh.rebuild_active();
        Ok(mesh)
    }

    pub fn with_neighbor_mode(mut self, mode: NeighborMode) -> Self {
        self.mode = mode;
        self
    }

    fn rebuild_active(&mut self) {
        let mut active = Vec::new();
        for (m, pm) in self.patches.iter().enumerate() {
            for (k, dom) in pm.domains.iter().enumerate() {
                for &c in dom {
                    if pm.is_active_cell(k, c) {
                        active.push(Element::new(m, k, c[0], c[1]));
                    }
                }
            }
        }
        active.sort();
        self.active = active;
    }

    pub fn topology(&self) -> &Arc<Topology> {
        &self.topology
    }

    pub fn neighbor_mode(&self) -> NeighborMode {
        self.mode
    }

    pub fn num_patches(&self) -> usize {
        self.patches.len()
    }

    pub fn patch(&self, m: usize) -> &PatchHierMesh {
        &self.patches[m]
    }

    /// Active elements in lexicographic order.
    pub fn elements(&self) -> &[Element] {
        &self.active
    }

    pub fn num_elements(&self) -> usize {
        self.active.len()
    }

    pub fn max_level(&self) -> usize {
        self.patches.iter().map(|p| p.domains.len() - 1).max().unwrap_or(0)
    }

    pub fn is_active(&self, e: &Element) -> bool {
        e.patch < self.patches.len() && self.patches[e.patch].is_active_cell(e.level, e.cell())
    }

    fn check_active(&self, e: &Element) -> Result<()> {
        if self.is_active(e) {
            Ok(())
        } else {
            Err(Error::StaleElement(*e))
        }
    }

    pub fn level_space(&self, patch: usize, level: usize) -> &LevelSpace {
        &self.patches[patch].levels[level]
    }

    /// Number of spline levels available on `patch`.
    pub fn num_level_spaces(&self, patch: usize) -> usize {
        self.patches[patch].levels.len()
    }

    /// Parameter rectangle of any cell (active or not).
    pub fn rect(&self, e: &Element) -> Rect {
        let pm = &self.patches[e.patch];
        if e.level < pm.levels.len() {
            return pm.levels[e.level].space.cell_rect(e.cell());
        }
        let top = pm.levels.len() - 1;
        let anc = e.ancestor(top);
        let r = pm.levels[top].space.cell_rect(anc.cell());
        let k = e.level - top;
        let n = (1u64 << k) as f64;
        let off = [(e.i1 - (anc.i1 << k)) as f64, (e.i2 - (anc.i2 << k)) as f64];
        Rect::new(
            [r.lo[0] + r.width(0) * off[0] / n, r.lo[1] + r.width(1) * off[1] / n],
            [r.lo[0] + r.width(0) * (off[0] + 1.0) / n, r.lo[1] + r.width(1) * (off[1] + 1.0) / n],
        )
    }

    /// Active elements of `patch` whose integer rectangle satisfies `pred`;
    /// `pred` must fail on every descendant of a cell on which it fails.
    fn collect_active(&self, patch: usize, pred: &dyn Fn(&SRect) -> bool, out: &mut BTreeSet<Element>) {
        let pm = &self.patches[patch];
        let mut stack: Vec<Element> = Vec::new();
        for i in 0..pm.n0[0] {
            for j in 0..pm.n0[1] {
                stack.push(Element::new(patch, 0, i, j));
            }
        }
        while let Some(e) = stack.pop() {
            if !pred(&e.srect()) {
                continue;
            }
            if pm.is_active_cell(e.level, e.cell()) {
                out.insert(e);
            } else if pm.in_domain(e.level + 1, [2 * e.i1, 2 * e.i2]) {
                stack.extend(e.children());
            }
        }
    }

    /// Active elements of `patch` overlapping the cell `c` with positive area.
    pub fn active_overlapping(&self, c: &Element) -> Vec<Element> {
        let r = c.srect();
        let mut out = BTreeSet::new();
        self.collect_active(c.patch, &|s| s.overlaps(&r), &mut out);
        out.into_iter().collect()
    }

    /// The active element containing parameter point `t` of `patch`;
    /// points on element boundaries resolve to the upper-right element.
    pub fn locate(&self, patch: usize, t: [f64; 2]) -> Result<Element> {
        if patch >= self.patches.len() {
            return Err(Error::IndexOutOfRange { index: patch, count: self.patches.len() });
        }
        if !Rect::UNIT.contains(t) {
            return Err(Error::ParameterOutOfRange(if (0.0..=1.0).contains(&t[0]) { t[1] } else { t[0] }));
        }
        let pm = &self.patches[patch];
        let sp = &pm.levels[0].space;
        let mut e = Element::new(patch, 0, sp.dirs[0].find_span(t[0]), sp.dirs[1].find_span(t[1]));
        while !pm.is_active_cell(e.level, e.cell()) {
            let c = self.rect(&e).center();
            let a = usize::from(t[0] >= c[0]);
            let b = usize::from(t[1] >= c[1]);
            e = e.children()[a + 2 * b];
        }
        Ok(e)
    }

    // ----- hierarchical B-spline selection -----

    /// Level-`f.level` cell ranges `[lo, hi)` covering the support of `f`.
    pub fn support_cells(&self, f: &HierFn) -> ([usize; 2], [usize; 2]) {
        let sp = &self.patches[f.patch].levels[f.level].space;
        let (a0, b0) = sp.dirs[0].basis_span_range(f.j1);
        let (a1, b1) = sp.dirs[1].basis_span_range(f.j2);
        ([a0, a1], [b0, b1])
    }

    fn support_srect(&self, f: &HierFn) -> SRect {
        let (lo, hi) = self.support_cells(f);
        let s = SCALE_BITS - f.level as u32;
        SRect {
            lo: [(lo[0] as u64) << s, (lo[1] as u64) << s],
            hi: [(hi[0] as u64) << s, (hi[1] as u64) << s],
        }
    }

    /// Whether `f` is a hierarchical B-spline of this mesh: its support lies
    /// in `Omega^k` but not in `Omega^{k+1}`.
    pub fn is_selected(&self, f: &HierFn) -> bool {
        let pm = &self.patches[f.patch];
        if f.level >= pm.domains.len() {
            return false;
        }
        let (lo, hi) = self.support_cells(f);
        let mut escapes = false;
        for i in lo[0]..hi[0] {
            for j in lo[1]..hi[1] {
                if !pm.in_domain(f.level, [i, j]) {
                    return false;
                }
                if !pm.in_domain(f.level + 1, [2 * i, 2 * j]) {
                    escapes = true;
                }
            }
        }
        escapes
    }

    /// Hierarchical B-splines whose support overlaps `e` with positive area.
    pub fn functions_on(&self, e: &Element) -> Vec<HierFn> {
        let mut out = Vec::new();
        for l in 0..=e.level {
            let a = e.ancestor(l);
            let sp = &self.patches[e.patch].levels[l].space;
            let f0 = sp.dirs[0].first_basis_on_span(a.i1);
            let f1 = sp.dirs[1].first_basis_on_span(a.i2);
            for j2 in f1..=f1 + sp.dirs[1].degree() {
                for j1 in f0..=f0 + sp.dirs[0].degree() {
                    let f = HierFn { patch: e.patch, level: l, j1, j2 };
                    if self.is_selected(&f) {
                        out.push(f);
                    }
                }
            }
        }
        out
    }

    /// Active elements overlapping the support of `f` with positive area.
    pub fn support_elements(&self, f: &HierFn) -> Vec<Element> {
        let r = self.support_srect(f);
        let mut out = BTreeSet::new();
        self.collect_active(f.patch, &|s| s.overlaps(&r), &mut out);
        out.into_iter().collect()
    }

    // ----- neighbors -----

    fn touching_in_patch(&self, e: &Element, out: &mut BTreeSet<Element>) {
        let r = e.srect();
        self.collect_active(e.patch, &|s| s.touches(&r), out);
    }

    fn in_patch_neighbors(&self, e: &Element) -> BTreeSet<Element> {
        let mut out = BTreeSet::new();
        let mut rects: Vec<SRect> = self.functions_on(e).iter().map(|f| self.support_srect(f)).collect();
        rects.sort_unstable_by_key(|r| (r.lo, r.hi));
        rects.dedup();
        self.collect_active(e.patch, &|s| rects.iter().any(|r| s.overlaps(r)), &mut out);
        if self.mode == NeighborMode::SupportOrTouching {
            self.touching_in_patch(e, &mut out);
        }
        out.insert(*e);
        out
    }

    /// Elements on other patches meeting `e`; with `positive_length`, only
    /// those sharing a segment of an interface edge.
    fn cross_patch(&self, e: &Element, positive_length: bool) -> BTreeSet<Element> {
        let mut out = BTreeSet::new();
        let pm = &self.patches[e.patch];
        let r = e.srect();
        let max = pm.max_coord();
        for side in 0..4 {
            let Some(link) = self.topology.link(e.patch, side) else { continue };
            let fixed = 1 - side_dir(side);
            let on_side = if side_is_upper(side) { r.hi[fixed] == max[fixed] } else { r.lo[fixed] == 0 };
            if !on_side {
                continue;
            }
            let d = side_dir(side);
            let (mut a0, mut a1) = (r.lo[d], r.hi[d]);
            if link.reversed {
                (a0, a1) = (max[d] - a1, max[d] - a0);
            }
            let qm = &self.patches[link.patch];
            let qmax = qm.max_coord();
            let qd = side_dir(link.side);
            let qfixed = 1 - qd;
            let upper = side_is_upper(link.side);
            let pred = |s: &SRect| {
                let touching_side = if upper { s.hi[qfixed] == qmax[qfixed] } else { s.lo[qfixed] == 0 };
                touching_side
                    && if positive_length {
                        s.lo[qd] < a1 && a0 < s.hi[qd]
                    } else {
                        s.lo[qd] <= a1 && a0 <= s.hi[qd]
                    }
            };
            self.collect_active(link.patch, &pred, &mut out);
        }
        if !positive_length {
            for corner in 0..4 {
                let cp = corner_coord(corner, max);
                if !(r.lo[0] <= cp[0] && cp[0] <= r.hi[0] && r.lo[1] <= cp[1] && cp[1] <= r.hi[1]) {
                    continue;
                }
                for (q, c) in self.topology.corner_mates(e.patch, corner) {
                    if q == e.patch {
                        continue;
                    }
                    let qp = corner_coord(c, self.patches[q].max_coord());
                    let pred = |s: &SRect| s.lo[0] <= qp[0] && qp[0] <= s.hi[0] && s.lo[1] <= qp[1] && qp[1] <= s.hi[1];
                    self.collect_active(q, &pred, &mut out);
                }
            }
        }
        out.retain(|x| x.patch != e.patch);
        out
    }

    /// Neighbors of an active element: shared-support (or touching, in the
    /// lowest-order mode) elements on its patch and touching elements on
    /// other patches. Contains `e`.
    pub fn neighbors(&self, e: &Element) -> Result<BTreeSet<Element>> {
        self.check_active(e)?;
        let mut out = self.in_patch_neighbors(e);
        out.extend(self.cross_patch(e, false));
        Ok(out)
    }

    /// Elements that must be refined along with `e`: coarser in-patch
    /// neighbors one level up, and elements on other patches sharing a
    /// segment of an interface edge.
    pub fn bad_neighbors(&self, e: &Element) -> Result<BTreeSet<Element>> {
        self.check_active(e)?;
        let mut out: BTreeSet<Element> = if e.level == 0 {
            BTreeSet::new()
        } else {
            self.in_patch_neighbors(e).into_iter().filter(|n| n.level + 1 == e.level).collect()
        };
        out.extend(self.cross_patch(e, true));
        Ok(out)
    }

    /// Elements touching `e` (on any patch), including `e`.
    pub fn touching(&self, e: &Element) -> Result<BTreeSet<Element>> {
        self.check_active(e)?;
        let mut out = BTreeSet::new();
        self.touching_in_patch(e, &mut out);
        out.extend(self.cross_patch(e, false));
        Ok(out)
    }

    // ----- refinement -----

    /// Refinement with closure: marked elements and, recursively, their bad
    /// neighbors are bisected.
    pub fn refine(&self, marked: &[Element]) -> Result<MultiPatchMesh> {
        for e in marked {
            self.check_active(e)?;
        }
        let mut all: BTreeSet<Element> = marked.iter().copied().collect();
        let mut frontier: Vec<Element> = all.iter().copied().collect();
        while !frontier.is_empty() {
            let mut added = BTreeSet::new();
            for e in &frontier {
                for n in self.bad_neighbors(e)? {
                    if !all.contains(&n) {
                        added.insert(n);
                    }
                }
            }
            all.extend(added.iter().copied());
            frontier = added.into_iter().collect();
        }
        self.bisect(&all)
    }

    fn bisect(&self, cells: &BTreeSet<Element>) -> Result<MultiPatchMesh> {
        let mut out = self.clone();
        if cells.is_empty() {
            return Ok(out);
        }
        for e in cells {
            if e.level + 1 > MAX_LEVEL {
                return Err(Error::InvalidArgument(format!("refinement beyond level {MAX_LEVEL}")));
            }
            let pm = &mut out.patches[e.patch];
            while pm.domains.len() <= e.level + 1 {
                pm.domains.push(BTreeSet::new());
            }
            for c in e.children() {
                pm.domains[c.level].insert(c.cell());
            }
        }
        for pm in &mut out.patches {
            pm.ensure_levels();
        }
        out.rebuild_active();
        Ok(out)
    }

    /// Bisects every active element.
    pub fn uniform_refine(&self) -> MultiPatchMesh {
        let all: BTreeSet<Element> = self.active.iter().copied().collect();
        self.bisect(&all).expect("uniform refinement of a valid mesh")
    }

    /// Whether neighbor levels differ by at most one and no hanging nodes
    /// occur across interfaces.
    pub fn is_admissible(&self) -> bool {
        for e in &self.active {
            if self.in_patch_neighbors(e).iter().any(|n| n.level.abs_diff(e.level) > 1) {
                return false;
            }
            if !self.interface_conforming(e) {
                return false;
            }
        }
        true
    }

    /// Whether every element across an interface edge of `e` covers exactly
    /// the same edge segment.
    fn interface_conforming(&self, e: &Element) -> bool {
        let pm = &self.patches[e.patch];
        let r = e.srect();
        let max = pm.max_coord();
        for side in 0..4 {
            let Some(link) = self.topology.link(e.patch, side) else { continue };
            let fixed = 1 - side_dir(side);
            let on_side = if side_is_upper(side) { r.hi[fixed] == max[fixed] } else { r.lo[fixed] == 0 };
            if !on_side {
                continue;
            }
            let d = side_dir(side);
            let (mut a0, mut a1) = (r.lo[d], r.hi[d]);
            if link.reversed {
                (a0, a1) = (max[d] - a1, max[d] - a0);
            }
            let qd = side_dir(link.side);
            let mut across = BTreeSet::new();
            let qmax = self.patches[link.patch].max_coord();
            let qfixed = 1 - qd;
            let upper = side_is_upper(link.side);
            self.collect_active(
                link.patch,
                &|s: &SRect| {
                    (if upper { s.hi[qfixed] == qmax[qfixed] } else { s.lo[qfixed] == 0 })
                        && s.lo[qd] < a1
                        && a0 < s.hi[qd]
                },
                &mut across,
            );
            if across.iter().any(|o| {
                let s = o.srect();
                s.lo[qd] != a0 || s.hi[qd] != a1
            }) {
                return false;
            }
        }
        true
    }

    /// Common refinement: union of the level domains of both meshes.
    pub fn overlay(&self, other: &MultiPatchMesh) -> Result<MultiPatchMesh> {
        if self.topology != other.topology
            || self.patches.len() != other.patches.len()
            || self.patches.iter().zip(&other.patches).any(|(a, b)| a.levels[0].space != b.levels[0].space)
        {
            return Err(Error::IncompatibleMeshes);
        }
        let mut out = self.clone();
        for (pm, po) in out.patches.iter_mut().zip(&other.patches) {
            for (k, dom) in po.domains.iter().enumerate() {
                if k >= pm.domains.len() {
                    pm.domains.push(BTreeSet::new());
                }
                pm.domains[k].extend(dom.iter().copied());
            }
            if po.levels.len() > pm.levels.len() {
                pm.levels = po.levels.clone();
            }
            pm.ensure_levels();
        }
        out.rebuild_active();
        Ok(out)
    }

    /// Whether `self` is obtained from `coarse` by bisections.
    pub fn is_finer_than(&self, coarse: &MultiPatchMesh) -> bool {
        self.patches.len() == coarse.patches.len()
            && self.patches.iter().zip(&coarse.patches).all(|(f, c)| {
                f.levels[0].space == c.levels[0].space
                    && c.domains.iter().enumerate().all(|(k, dom)| {
                        dom.is_empty() || f.domains.get(k).is_some_and(|fd| dom.is_subset(fd))
                    })
            })
    }

    /// One `patch level i1 i2` line per active element.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        for e in &self.active {
            let _ = writeln!(s, "{} {} {} {}", e.patch, e.level, e.i1, e.i2);
        }
        s
    }
}

/// Topological identity of a mesh vertex, independent of the patch used to
/// reach it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VertexKey {
    Corner(usize),
    Edge { patch: usize, side: usize, pos: u64 },
    Interior { patch: usize, s: [u64; 2] },
}

impl MultiPatchMesh {
    /// Keys of the four corners of a cell, in corner order
    /// `(lo,lo), (hi,lo), (hi,hi), (lo,hi)`.
    pub fn corner_keys(&self, e: &Element) -> [VertexKey; 4] {
        let r = e.srect();
        let pts = [[r.lo[0], r.lo[1]], [r.hi[0], r.lo[1]], [r.hi[0], r.hi[1]], [r.lo[0], r.hi[1]]];
        pts.map(|s| self.vertex_key(e.patch, s))
    }

    fn vertex_key(&self, patch: usize, s: [u64; 2]) -> VertexKey {
        let max = self.patches[patch].max_coord();
        for corner in 0..4 {
            if corner_coord(corner, max) == s {
                return VertexKey::Corner(self.topology.corner_class(patch, corner));
            }
        }
        let side = if s[1] == 0 {
            0
        } else if s[0] == max[0] {
            1
        } else if s[1] == max[1] {
            2
        } else if s[0] == 0 {
            3
        } else {
            return VertexKey::Interior { patch, s };
        };
        let d = side_dir(side);
        let own = VertexKey::Edge { patch, side, pos: s[d] };
        match self.topology.link(patch, side) {
            Some(link) => {
                let qmax = self.patches[link.patch].max_coord()[side_dir(link.side)];
                let pos = if link.reversed { qmax - s[d] } else { s[d] };
                own.min(VertexKey::Edge { patch: link.patch, side: link.side, pos })
            }
            None => own,
        }
    }
}

fn corner_coord(corner: usize, max: [u64; 2]) -> [u64; 2] {
    match corner {
        0 => [0, 0],
        1 => [max[0], 0],
        2 => [max[0], max[1]],
        _ => [0, max[1]],
    }
}
