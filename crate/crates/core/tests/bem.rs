use std::f64::consts::PI;
use std::sync::Arc;

use hibem::basis::SplineSpace;
use hibem::bem::{
    assemble_matrix, assemble_rhs, solve, DoubleLayer, PairCache, QuadConfig, SingleLayer,
};
use hibem::geometry::{BoundaryGeometry, NurbsPatch, Point};
use hibem::mesh::Element;
use hibem::spline::gauss_rule;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `int_R int_R 1/|x - y|` for a flat `a x b` rectangle, written as the
/// autocorrelation integral `4 int_0^a int_0^b (a-s)(b-t)/|(s,t)|` and
/// integrated in polar-type coordinates from the origin.
fn rectangle_self_integral(a: f64, b: f64) -> f64 {
    let g = gauss_rule(40).unwrap();
    let mut acc = 0.0;
    for (xi, wx) in g.nodes.iter().zip(&g.weights) {
        for (eta, we) in g.nodes.iter().zip(&g.weights) {
            for (s, t) in [(xi * a, xi * eta * b), (xi * eta * a, xi * b)] {
                acc += wx * we * xi * a * b * (a - s) * (b - t) / (s * s + t * t).sqrt();
            }
        }
    }
    4.0 * acc
}

fn flat_square(side: f64) -> BoundaryGeometry {
    let p = |x: f64, y: f64| Point::new(x, y, 0.0);
    let patch = NurbsPatch::bilinear([p(0.0, 0.0), p(side, 0.0), p(0.0, side), p(side, side)]);
    BoundaryGeometry::new("square", vec![patch], None, Point::new(0.5, 0.5, -1.0)).unwrap()
}

fn space(geom: &BoundaryGeometry, p: usize, refinements: usize) -> SplineSpace {
    let mut mesh = geom.initial_mesh(p).unwrap();
    for _ in 0..refinements {
        mesh = mesh.uniform_refine();
    }
    SplineSpace::new(Arc::new(mesh))
}

#[test]
fn oracle_matches_closed_form() {
    let closed = 4.0 / 3.0 * (1.0 - 2f64.sqrt()) + 4.0 * (1.0 + 2f64.sqrt()).ln();
    assert!((rectangle_self_integral(1.0, 1.0) - closed).abs() < 1e-12);
}

#[test]
fn identical_panel_matches_oracle() {
    let geom = flat_square(1.0);
    let s = space(&geom, 0, 0);
    let cfg = QuadConfig { n_sing: 12, ..Default::default() };
    let v = assemble_matrix(&s, &geom, &cfg, None).unwrap();
    let exact = rectangle_self_integral(1.0, 1.0) / (4.0 * PI);
    assert!((v[(0, 0)] - exact).abs() < 1e-6, "{} vs {exact}", v[(0, 0)]);
}

#[test]
fn identical_panel_error_decreases_with_order() {
    // A curved panel: quarter-pipe inner wall, one element.
    let geom = BoundaryGeometry::quarter_pipe();
    let s = space(&geom, 0, 0);
    let entry = |n: usize| {
        let cfg = QuadConfig { n_sing: n, ..Default::default() };
        assemble_matrix(&s, &geom, &cfg, None).unwrap()[(0, 0)]
    };
    let reference = entry(16);
    let errors: Vec<f64> = (4..=12).step_by(2).map(|n| (entry(n) - reference).abs()).collect();
    for w in errors.windows(2) {
        assert!(w[1] <= w[0], "{errors:?}");
    }
    assert!(errors[errors.len() - 1] < 1e-7 * reference, "{errors:?}");
}

#[test]
fn common_edge_and_vertex_entries() {
    let geom = flat_square(2.0);
    let s = space(&geom, 0, 1);
    let v = assemble_matrix(&s, &geom, &QuadConfig::default(), None).unwrap();
    let j1 = rectangle_self_integral(1.0, 1.0);
    let edge = (rectangle_self_integral(2.0, 1.0) - 2.0 * j1) / 2.0;
    let vertex = j1 - 2.0 * edge;
    let els = s.mesh().elements();
    let dof = |e: &Element| s.dof_of(&hibem::basis::HierFn { patch: 0, level: e.level, j1: e.i1, j2: e.i2 }).unwrap();
    for a in els {
        for b in els {
            let d = (a.i1 as i64 - b.i1 as i64).abs() + (a.i2 as i64 - b.i2 as i64).abs();
            let exact = match (a == b, d) {
                (true, _) => j1,
                (false, 1) => edge,
                _ => vertex,
            } / (4.0 * PI);
            let got = v[(dof(a), dof(b))];
            assert!((got - exact).abs() < 1e-7 * exact, "{a:?} {b:?}: {got} vs {exact}");
        }
    }
}

#[test]
fn center_potential_of_unit_square() {
    let geom = flat_square(1.0);
    let s = space(&geom, 0, 0);
    let sl = SingleLayer::new(&s, &geom, &[1.0], &QuadConfig::default()).unwrap();
    let exact = (1.0 + 2f64.sqrt()).ln() / PI;
    let got = sl.eval(0, [0.5, 0.5]).unwrap();
    assert!((got - exact).abs() < 1e-6, "{got} vs {exact}");
    // Off-center: compare with four corner rectangles, each integrated in
    // polar coordinates from its corner.
    let t = [0.3, 0.8];
    let corner = |a: f64, b: f64| {
        let g = gauss_rule(40).unwrap();
        let mut acc = 0.0;
        for wx in &g.weights {
            for (eta, we) in g.nodes.iter().zip(&g.weights) {
                for (x, y) in [(a, eta * b), (eta * a, b)] {
                    acc += wx * we * a * b / (x * x + y * y).sqrt();
                }
            }
        }
        acc
    };
    let exact = (corner(t[0], t[1]) + corner(1.0 - t[0], t[1]) + corner(t[0], 1.0 - t[1])
        + corner(1.0 - t[0], 1.0 - t[1]))
        / (4.0 * PI);
    let got = sl.eval(0, t).unwrap();
    assert!((got - exact).abs() < 1e-9, "{got} vs {exact}");
}

#[test]
fn cube_lowest_order_matrix_structure() {
    let geom = BoundaryGeometry::cube();
    let s = space(&geom, 0, 0);
    let v = assemble_matrix(&s, &geom, &QuadConfig::default(), None).unwrap();
    assert_eq!(v.nrows(), 6);
    let d = v[(0, 0)];
    let mut off = Vec::new();
    for i in 0..6 {
        assert!((v[(i, i)] - d).abs() < 1e-12 * d);
        for j in 0..6 {
            assert_eq!(v[(i, j)], v[(j, i)]);
            if i != j {
                off.push(v[(i, j)]);
            }
        }
    }
    off.sort_by(f64::total_cmp);
    off.dedup_by(|a, b| (*a - *b).abs() < 1e-10 * d);
    assert_eq!(off.len(), 2, "{off:?}");
    // Faces 0 and 1 are opposite, faces 0 and 2 share an edge.
    assert!(v[(0, 1)] < v[(0, 2)]);
    let approx = 0.01 * 0.01 / (4.0 * PI * 0.1);
    assert!((v[(0, 1)] - approx).abs() < 0.15 * approx);
    assert!(v.clone().cholesky().is_some());
}

#[test]
fn far_entries_match_midpoint_approximation() {
    let geom = BoundaryGeometry::cube();
    let s = space(&geom, 0, 3);
    let v = assemble_matrix(&s, &geom, &QuadConfig::default(), None).unwrap();
    let els = s.mesh().elements();
    let mut checked = 0;
    for (i, a) in els.iter().enumerate().step_by(7) {
        for (j, b) in els.iter().enumerate().step_by(11) {
            let ca = geom.eval(a.patch, s.mesh().rect(a).center());
            let cb = geom.eval(b.patch, s.mesh().rect(b).center());
            let dist = (ca - cb).norm();
            let h = 0.1 / 8.0;
            if dist < 4.0 * h {
                continue;
            }
            let (da, db) = (s.element_functions(i)[0].dof, s.element_functions(j)[0].dof);
            let approx = h * h * h * h / (4.0 * PI * dist);
            assert!((v[(da, db)] - approx).abs() < 0.1 * approx);
            checked += 1;
        }
    }
    assert!(checked > 100);
}

#[test]
fn matrix_is_exactly_symmetric_and_positive() {
    let geom = BoundaryGeometry::quarter_pipe();
    for p in [0, 1] {
        let s = space(&geom, p, 1);
        let v = assemble_matrix(&s, &geom, &QuadConfig::default(), None).unwrap();
        assert_eq!(v, v.transpose());
        assert!(v.clone().cholesky().is_some());
    }
}

#[test]
fn rhs_of_constant_function() {
    let geom = BoundaryGeometry::cube();
    let one = |_: &hibem::bem::BoundaryPoint| Ok(1.0);
    let s = space(&geom, 0, 0);
    let b = assemble_rhs(&s, &geom, &QuadConfig::default(), &one, None).unwrap();
    assert!(b.iter().all(|v| (v - 0.01).abs() < 1e-15));
    for p in [1, 2] {
        let s = space(&geom, p, 1);
        let b = assemble_rhs(&s, &geom, &QuadConfig::default(), &one, None).unwrap();
        assert!((b.sum() - 0.06).abs() < 1e-14, "{}", b.sum());
    }
    let qp = BoundaryGeometry::quarter_pipe();
    let s = space(&qp, 2, 1);
    let b = assemble_rhs(&s, &qp, &QuadConfig::default(), &one, None).unwrap();
    let area: f64 = (0..6).map(|m| qp.area(m, &hibem::spline::Rect::UNIT, 20)).sum();
    assert!((b.sum() - area).abs() < 1e-8 * area, "{} vs {area}", b.sum());
}

#[test]
fn unequal_levels_are_consistent_with_parent() {
    // Rows of a refined element's children sum to the row of the parent.
    let geom = flat_square(1.0);
    let coarse = space(&geom, 0, 1);
    let e = coarse.mesh().elements()[0];
    let fine = SplineSpace::new(Arc::new(coarse.mesh().refine(&[e]).unwrap()));
    let cfg = QuadConfig::default();
    let vc = assemble_matrix(&coarse, &geom, &cfg, None).unwrap();
    let vf = assemble_matrix(&fine, &geom, &cfg, None).unwrap();
    let dof = |s: &SplineSpace, e: &Element| s.element_functions(s.element_index(e).unwrap())[0].dof;
    for other in &coarse.mesh().elements()[1..] {
        let sum: f64 = e.children().iter().map(|c| vf[(dof(&fine, c), dof(&fine, other))]).sum();
        let parent = vc[(dof(&coarse, &e), dof(&coarse, other))];
        assert!((sum - parent).abs() < 1e-8 * parent, "{other:?}: {sum} vs {parent}");
    }
}

#[test]
fn pair_cache_reproduces_fresh_assembly() {
    let geom = BoundaryGeometry::cube();
    let s0 = space(&geom, 0, 1);
    let cfg = QuadConfig::default();
    let mut cache = PairCache::new();
    assemble_matrix(&s0, &geom, &cfg, Some(&mut cache)).unwrap();
    assert!(!cache.is_empty());
    let e = s0.mesh().elements()[5];
    let s1 = SplineSpace::new(Arc::new(s0.mesh().refine(&[e]).unwrap()));
    let cached = assemble_matrix(&s1, &geom, &cfg, Some(&mut cache)).unwrap();
    let fresh = assemble_matrix(&s1, &geom, &cfg, None).unwrap();
    assert_eq!(cached, fresh);
}

#[test]
fn double_layer_of_one_is_minus_half_on_cube() {
    let geom = BoundaryGeometry::cube();
    let dl = DoubleLayer::new(&geom, &QuadConfig::default(), |_| 1.0, &[]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..20 {
        let patch = rng.gen_range(0..6);
        let t = [rng.gen_range(0.05..0.95), rng.gen_range(0.05..0.95)];
        let k = dl.eval(patch, t).unwrap();
        assert!((k + 0.5).abs() < 1e-3, "{patch} {t:?}: {k}");
    }
    assert!(matches!(dl.eval(0, [0.0, 0.5]), Err(hibem::Error::NonSmoothPoint)));
    assert!(matches!(dl.eval(9, [0.5, 0.5]), Err(hibem::Error::PointNotLocatable)));
}

#[test]
fn solved_density_reproduces_constant_potential() {
    // Capacitance problem on the cube: V phi = 1. Galerkin orthogonality
    // makes the residual vanish against the discrete space.
    let geom = BoundaryGeometry::cube();
    let s = space(&geom, 0, 2);
    let cfg = QuadConfig::default();
    let v = assemble_matrix(&s, &geom, &cfg, None).unwrap();
    let b = assemble_rhs(&s, &geom, &cfg, &|_| Ok(1.0), None).unwrap();
    let c = solve(&v, &b).unwrap();
    assert!((&v * &c - &b).norm() <= 1e-10 * b.norm());
    assert!(c.iter().all(|x| *x > 0.0));
    let sl = SingleLayer::new(&s, &geom, c.as_slice(), &cfg).unwrap();
    let u = sl.eval(0, [0.5, 0.5]).unwrap();
    assert!((u - 1.0).abs() < 0.05, "{u}");
}
