//! Randomized property checks over meshes, bases, marking and the
//! Galerkin system, runnable from the command line.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::adaptivity::{doerfler_mark, EstimatorReport};
use crate::basis::SplineSpace;
use crate::bem::{assemble_matrix, assemble_rhs, eval_single_layer, solve, QuadConfig};
use crate::error::{Error, Result};
use crate::geometry::{BoundaryGeometry, NurbsPatch, Point};
use crate::mesh::{Element, MultiPatchMesh};
use crate::problem::{model_rhs, shifted_fundamental};

pub const SUITES: [&str; 9] = [
    "thb-partition",
    "trunc-bounds",
    "admissibility",
    "children",
    "overlay",
    "doerfler",
    "galerkin",
    "quasi-interpolant",
    "quadrature-oracle",
];

#[derive(Clone, Debug)]
pub struct CheckReport {
    pub suite: String,
    pub passed: bool,
    pub lines: Vec<String>,
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", if self.passed { "PASS" } else { "FAIL" }, self.suite)?;
        for l in &self.lines {
            write!(f, "\n  {l}")?;
        }
        Ok(())
    }
}

/// Runs one suite, or all of them for `"all"`.
pub fn run_check(name: &str, seed: u64) -> Result<Vec<CheckReport>> {
    if name == "all" {
        return SUITES.iter().map(|s| run_suite(s, seed)).collect();
    }
    Ok(vec![run_suite(name, seed)?])
}

fn run_suite(name: &str, seed: u64) -> Result<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (passed, lines) = match name {
        "thb-partition" => thb_partition(&mut rng)?,
        "trunc-bounds" => trunc_bounds(&mut rng)?,
        "admissibility" => admissibility(&mut rng)?,
        "children" => children(&mut rng)?,
        "overlay" => overlay(&mut rng)?,
        "doerfler" => doerfler(&mut rng)?,
        "galerkin" => galerkin(&mut rng)?,
        "quasi-interpolant" => quasi_interpolant(&mut rng)?,
        "quadrature-oracle" => quadrature_oracle()?,
        other => return Err(Error::Config(format!("unknown check suite '{other}'"))),
    };
    Ok(CheckReport { suite: name.to_string(), passed, lines })
}

type Outcome = (bool, Vec<String>);

/// Refines `marks` random active elements (with closure).
pub fn random_refine(mesh: &MultiPatchMesh, rng: &mut impl Rng, marks: usize) -> Result<MultiPatchMesh> {
    let els = mesh.elements();
    let picked: Vec<Element> = (0..marks).map(|_| els[rng.gen_range(0..els.len())]).collect();
    mesh.refine(&picked)
}

/// Randomly refined meshes of both fixtures for degrees 1 and 2.
fn fixture_meshes(rng: &mut impl Rng, steps: usize) -> Result<Vec<(String, MultiPatchMesh)>> {
    let mut out = Vec::new();
    for geom in [BoundaryGeometry::cube(), BoundaryGeometry::quarter_pipe()] {
        for p in [1, 2] {
            let mut m = geom.initial_mesh(p)?;
            for _ in 0..steps {
                m = random_refine(&m, rng, 2)?;
            }
            out.push((format!("{} p={p}", geom.name()), m));
        }
    }
    Ok(out)
}

fn random_param(rng: &mut impl Rng) -> [f64; 2] {
    [rng.gen::<f64>(), rng.gen::<f64>()]
}

fn thb_partition(rng: &mut impl Rng) -> Result<Outcome> {
    let mut lines = Vec::new();
    let mut worst = 0.0f64;
    for (name, mesh) in fixture_meshes(rng, 6)? {
        let space = SplineSpace::new(Arc::new(mesh));
        let ones = vec![1.0; space.dim()];
        let mut dev = 0.0f64;
        for patch in 0..space.mesh().num_patches() {
            for _ in 0..1000 {
                dev = dev.max((space.eval(&ones, patch, random_param(rng))? - 1.0).abs());
            }
        }
        lines.push(format!("{name}: {} elements, max |sum - 1| = {dev:.2e}", space.mesh().num_elements()));
        worst = worst.max(dev);
    }
    Ok((worst <= 1e-10, lines))
}

fn trunc_bounds(rng: &mut impl Rng) -> Result<Outcome> {
    let mut lines = Vec::new();
    let mut ok = true;
    for (name, mesh) in fixture_meshes(rng, 6)? {
        let space = SplineSpace::new(Arc::new(mesh));
        let mesh = space.mesh().clone();
        let (mut below, mut above) = (0.0f64, 0.0f64);
        let mut truncated = 0;
        for patch in 0..mesh.num_patches() {
            for _ in 0..1000 {
                let t = random_param(rng);
                let e = mesh.locate(patch, t)?;
                let i = space.element_index(&e).expect("located element is active");
                let lb = space.local_basis(&e, t);
                for lf in space.element_functions(i) {
                    let v = lb.value(&lf.coeffs);
                    let full = space.eval_untruncated(lf.dof, t);
                    below = below.min(v);
                    above = above.max(v - full);
                    if !space.thb(lf.dof).is_untruncated() {
                        truncated += 1;
                    }
                }
            }
        }
        ok &= below >= -1e-12 && above <= 1e-12;
        lines.push(format!(
            "{name}: min Trunc = {below:.2e}, max Trunc - B = {above:.2e}, {truncated} truncated samples"
        ));
    }
    Ok((ok, lines))
}

fn admissibility(rng: &mut impl Rng) -> Result<Outcome> {
    let mut lines = Vec::new();
    let mut ok = true;
    for (geom, p) in [(BoundaryGeometry::cube(), 0), (BoundaryGeometry::quarter_pipe(), 2)] {
        let mut m = geom.initial_mesh(p)?;
        let mut failures = 0;
        for _ in 0..200 {
            m = random_refine(&m, rng, 1)?;
            if !m.is_admissible() {
                failures += 1;
            }
        }
        ok &= failures == 0;
        lines.push(format!(
            "{} p={p}: 200 steps, {} elements, max level {}, {failures} non-admissible",
            geom.name(),
            m.num_elements(),
            m.max_level()
        ));
    }
    Ok((ok, lines))
}

fn children(rng: &mut impl Rng) -> Result<Outcome> {
    let mut ok = true;
    let mut checked = 0;
    let mut closure_ratio = 0.0f64;
    for (geom, p) in [(BoundaryGeometry::cube(), 0), (BoundaryGeometry::quarter_pipe(), 1)] {
        let initial = geom.initial_mesh(p)?;
        let mut m = initial.clone();
        let mut marked_total = 0;
        for _ in 0..40 {
            let els = m.elements();
            let marked: Vec<Element> = (0..2).map(|_| els[rng.gen_range(0..els.len())]).collect();
            marked_total += marked.iter().collect::<BTreeSet<_>>().len();
            let next = m.refine(&marked)?;
            let old: BTreeSet<Element> = m.elements().iter().copied().collect();
            let new: BTreeSet<Element> = next.elements().iter().copied().collect();
            ok &= next.num_elements() <= 4 * m.num_elements();
            for parent in old.difference(&new) {
                let kids = parent.children();
                let distinct: BTreeSet<Element> = kids.iter().copied().collect();
                ok &= distinct.len() == 4 && kids.iter().all(|k| new.contains(k) && k.parent() == Some(*parent));
                let pr = m.rect(parent);
                let area: f64 = kids.iter().map(|k| next.rect(k).area()).sum();
                ok &= area == pr.area();
                ok &= kids.iter().all(|k| {
                    let r = next.rect(k);
                    r.area() == pr.area() / 4.0 && (0..2).all(|d| r.lo[d] >= pr.lo[d] && r.hi[d] <= pr.hi[d])
                });
                checked += 1;
            }
            for e in new.difference(&old) {
                ok &= e.parent().is_some_and(|p| old.contains(&p) && !new.contains(&p));
            }
            m = next;
        }
        closure_ratio =
            closure_ratio.max((m.num_elements() - initial.num_elements()) as f64 / marked_total as f64);
    }
    Ok((ok, vec![format!("{checked} refined parents checked, closure constant {closure_ratio:.2}")]))
}

/// Overlay by definition: elements of either mesh lying inside an element
/// of the other one.
fn brute_force_overlay(a: &MultiPatchMesh, b: &MultiPatchMesh) -> BTreeSet<Element> {
    let mut out = BTreeSet::new();
    for (x, y) in [(a, b), (b, a)] {
        for e in x.elements() {
            if y.elements().iter().any(|f| f.contains(e)) {
                out.insert(*e);
            }
        }
    }
    out
}

fn overlay(rng: &mut impl Rng) -> Result<Outcome> {
    let mut ok = true;
    let mut constant = 0.0f64;
    let mut trials = 0;
    for (geom, p) in [(BoundaryGeometry::cube(), 0), (BoundaryGeometry::cube(), 1), (BoundaryGeometry::quarter_pipe(), 0)] {
        let t0 = geom.initial_mesh(p)?;
        for _ in 0..20 {
            let grow = |rng: &mut ChaCha8Rng| -> Result<MultiPatchMesh> {
                let mut m = t0.clone();
                let steps = rng.gen_range(0..4);
                for _ in 0..steps {
                    let next = random_refine(&m, rng, 1)?;
                    if next.num_elements() > 64 {
                        break;
                    }
                    m = next;
                }
                Ok(m)
            };
            let mut local = ChaCha8Rng::seed_from_u64(rng.gen());
            let a = grow(&mut local)?;
            let b = grow(&mut local)?;
            let o = a.overlay(&b)?;
            let got: BTreeSet<Element> = o.elements().iter().copied().collect();
            ok &= got == brute_force_overlay(&a, &b);
            let bound = a.num_elements() + b.num_elements() - t0.num_elements();
            ok &= o.num_elements() <= bound;
            constant = constant.max(o.num_elements() as f64 / bound as f64);
            trials += 1;
        }
    }
    Ok((ok && constant <= 1.0, vec![format!("{trials} pairs, empirical overlay constant {constant:.3}")]))
}

/// Size of the smallest subset with `theta * sum <= subset sum`.
fn brute_force_minimal(ind: &[f64], theta: f64) -> usize {
    let total: f64 = ind.iter().map(|v| v * v).sum();
    let n = ind.len();
    let mut best = n;
    for mask in 0u32..(1 << n) {
        let k = mask.count_ones() as usize;
        if k >= best {
            continue;
        }
        let s: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ind[i] * ind[i]).sum();
        if s >= theta * total {
            best = k;
        }
    }
    best
}

fn doerfler(rng: &mut impl Rng) -> Result<Outcome> {
    let mut ok = true;
    let mut trials = 0;
    for _ in 0..300 {
        let n = rng.gen_range(1..=12);
        let theta = rng.gen_range(0.05..=1.0);
        let ind: Vec<f64> = if rng.gen_bool(0.3) {
            (0..n).map(|_| *[0.5, 1.0, 2.0].choose(rng).expect("nonempty")).collect()
        } else {
            (0..n).map(|_| rng.gen::<f64>()).collect()
        };
        let report = EstimatorReport {
            elements: (0..n).map(|i| Element::new(0, 0, i, 0)).collect(),
            indicators: ind.clone(),
        };
        let marked = doerfler_mark(&report, theta)?;
        ok &= marked.len() == brute_force_minimal(&ind, theta);
        trials += 1;
    }
    Ok((ok, vec![format!("{trials} random indicator vectors with n <= 12")]))
}

fn galerkin(rng: &mut impl Rng) -> Result<Outcome> {
    let cfg = QuadConfig::default();
    let mut ok = true;
    let mut lines = Vec::new();
    let cube = BoundaryGeometry::cube();
    let pipe = BoundaryGeometry::quarter_pipe();
    let g = |p: &crate::bem::BoundaryPoint| Ok(shifted_fundamental(&p.x));
    let one = model_rhs(&cube, &cfg)?;
    let cases: Vec<(&str, &BoundaryGeometry, usize, usize, &(dyn Fn(&crate::bem::BoundaryPoint) -> Result<f64> + Sync))> = vec![
        ("cube p=0", &cube, 0, 3, &*one),
        ("cube p=1", &cube, 1, 2, &*one),
        ("quarter_pipe p=0", &pipe, 0, 3, &g),
        ("quarter_pipe p=2", &pipe, 2, 1, &g),
    ];
    for (name, geom, p, steps, f) in cases {
        let mut mesh = geom.initial_mesh(p)?;
        for _ in 0..steps {
            mesh = random_refine(&mesh, rng, 3)?;
        }
        let space = SplineSpace::new(Arc::new(mesh));
        let v = assemble_matrix(&space, geom, &cfg, None)?;
        let b = assemble_rhs(&space, geom, &cfg, f, None)?;
        let vmax = v.amax();
        let asym = (&v - v.transpose()).amax();
        let spd = solve(&v, &b);
        let orth = match &spd {
            Ok(c) => (&b - &v * c).amax(),
            Err(_) => f64::INFINITY,
        };
        ok &= asym <= 1e-10 * vmax && spd.is_ok() && orth <= 1e-9;
        lines.push(format!(
            "{name}: {} dofs, asymmetry {:.1e} x max|V|, Cholesky {}, max |<f,psi> - (Vc)_psi| {orth:.1e}",
            space.dim(),
            asym / vmax,
            if spd.is_ok() { "ok" } else { "failed" }
        ));
    }
    Ok((ok, lines))
}

fn quasi_interpolant(rng: &mut impl Rng) -> Result<Outcome> {
    let mut ok = true;
    let mut lines = Vec::new();
    for (name, mesh) in fixture_meshes(rng, 4)? {
        let space = SplineSpace::new(Arc::new(mesh));
        let mesh = space.mesh().clone();
        let c: Vec<f64> = (0..space.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let g = |patch: usize, t: [f64; 2]| space.eval(&c, patch, t).unwrap_or(f64::NAN);

        let zero = space.quasi_interpolate(mesh.elements(), &|_, _| 0.0)?;
        ok &= zero.iter().all(|v| *v == 0.0);

        let full = space.quasi_interpolate(mesh.elements(), &g)?;
        let coeff_err = full.iter().zip(&c).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);

        // Oracle support of each function: active elements whose centre it
        // does not vanish at.
        let support = |dof: usize| -> BTreeSet<Element> {
            mesh.elements()
                .iter()
                .filter(|e| space.eval_untruncated(dof, mesh.rect(e).center()) > 0.0)
                .copied()
                .collect()
        };
        // Subset: elements with centre u < 1/2 plus the joint support of the
        // functions living on one random element.
        let mut chosen: BTreeSet<Element> =
            mesh.elements().iter().filter(|e| mesh.rect(e).center()[0] < 0.5).copied().collect();
        let seed_el = rng.gen_range(0..mesh.num_elements());
        for lf in space.element_functions(seed_el) {
            chosen.extend(support(lf.dof));
        }
        let subset: Vec<Element> = chosen.iter().copied().collect();
        let local = space.quasi_interpolate(&subset, &g)?;
        let (mut outside, mut inside_err, mut exact_elems) = (0.0f64, 0.0f64, 0);
        for (i, e) in mesh.elements().iter().enumerate() {
            let rect = mesh.rect(e);
            let pts: Vec<[f64; 2]> = (0..4).map(|_| rect.map(random_param(rng))).collect();
            if !chosen.contains(e) {
                for t in &pts {
                    outside = outside.max(space.eval_on_element(&local, i, *t).abs());
                }
            } else if space.element_functions(i).iter().all(|lf| support(lf.dof).is_subset(&chosen)) {
                exact_elems += 1;
                for t in &pts {
                    inside_err = inside_err.max((space.eval_on_element(&local, i, *t) - g(e.patch, *t)).abs());
                }
            }
        }
        ok &= coeff_err <= 1e-10 && outside <= 1e-12 && inside_err <= 1e-10 && exact_elems > 0;
        lines.push(format!(
            "{name}: reproduction {coeff_err:.1e}, outside subset {outside:.1e}, \
             local reproduction {inside_err:.1e} on {exact_elems} elements"
        ));
    }
    Ok((ok, lines))
}

/// `int_Q int_Q 1/|x - y|` over the unit square `Q`.
fn unit_square_self_integral() -> f64 {
    4.0 / 3.0 * (1.0 - 2f64.sqrt()) + 4.0 * (1.0 + 2f64.sqrt()).ln()
}

fn quadrature_oracle() -> Result<Outcome> {
    let p = |x: f64, y: f64| Point::new(x, y, 0.0);
    let patch = NurbsPatch::bilinear([p(0.0, 0.0), p(1.0, 0.0), p(0.0, 1.0), p(1.0, 1.0)]);
    let geom = BoundaryGeometry::new("unit_square", vec![patch], None, Point::new(0.5, 0.5, -1.0))?;
    let space = SplineSpace::new(Arc::new(geom.initial_mesh(0)?));
    let exact = unit_square_self_integral() / (4.0 * PI);
    let mut lines = vec!["n_sing  identical-panel error".to_string()];
    let mut errors = Vec::new();
    for n in [4, 6, 8, 10, 12] {
        let cfg = QuadConfig { n_sing: n, ..Default::default() };
        let v = assemble_matrix(&space, &geom, &cfg, None)?;
        let err = (v[(0, 0)] - exact).abs();
        lines.push(format!("{n:>6}  {err:.3e}"));
        errors.push(err);
    }
    let cfg = QuadConfig { n_sing: 12, ..Default::default() };
    let centre = eval_single_layer(&space, &geom, &[1.0], 0, [0.5, 0.5], &cfg)?;
    let centre_err = (centre - (1.0 + 2f64.sqrt()).ln() / PI).abs();
    lines.push(format!("centre potential error {centre_err:.3e}"));
    let ok = errors[errors.len() - 1] <= 1e-6 && centre_err <= 1e-6;
    Ok((ok, lines))
}
