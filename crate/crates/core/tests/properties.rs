use std::sync::Arc;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use hibem::adaptivity::{aitken_limit, doerfler_mark, fit_rate, EstimatorReport};
use hibem::basis::SplineSpace;
use hibem::checks::random_refine;
use hibem::geometry::BoundaryGeometry;
use hibem::mesh::{Element, MultiPatchMesh};

fn report(indicators: &[f64]) -> EstimatorReport {
    EstimatorReport {
        elements: (0..indicators.len()).map(|i| Element::new(0, 0, i, 0)).collect(),
        indicators: indicators.to_vec(),
    }
}

fn refined(geometry: &str, p: usize, seed: u64, steps: usize) -> MultiPatchMesh {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = BoundaryGeometry::by_name(geometry).unwrap().initial_mesh(p).unwrap();
    for _ in 0..steps {
        m = random_refine(&m, &mut rng, 2).unwrap();
    }
    m
}

fn fine_cube() -> MultiPatchMesh {
    let mut m = BoundaryGeometry::cube().initial_mesh(0).unwrap();
    for _ in 0..3 {
        m = m.uniform_refine();
    }
    m
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn doerfler_set_is_a_minimum_cardinality_bulk_set(
        eta in prop::collection::vec(0.0f64..1.0, 1..=12),
        theta in 0.05f64..=1.0,
    ) {
        prop_assume!(eta.iter().any(|e| *e > 0.0));
        let r = report(&eta);
        let marked = doerfler_mark(&r, theta).unwrap();
        let total: f64 = eta.iter().map(|e| e * e).sum();
        let sum = |set: &[usize]| set.iter().map(|&i| eta[i] * eta[i]).sum::<f64>();
        let chosen: Vec<usize> = marked.iter().map(|e| e.i1).collect();
        prop_assert!(sum(&chosen) >= theta * total * (1.0 - 1e-14));
        // No smaller subset reaches the bulk.
        let n = eta.len();
        let best = (0u32..1 << n)
            .filter(|mask| {
                let set: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
                sum(&set) >= theta * total
            })
            .map(u32::count_ones)
            .min()
            .unwrap() as usize;
        prop_assert_eq!(chosen.len(), best);
    }

    #[test]
    fn rate_fit_recovers_power_laws(c in 0.1f64..10.0, s in -2.0f64..0.5, n0 in 1.0f64..50.0) {
        let x: Vec<f64> = (0..6).map(|k| n0 * 3f64.powi(k)).collect();
        let y: Vec<f64> = x.iter().map(|n| c * n.powf(s)).collect();
        prop_assert!((fit_rate(&x, &y, 4).unwrap() - s).abs() < 1e-10);
    }

    #[test]
    fn aitken_is_exact_on_geometric_sequences(a in -5.0f64..5.0, b in 0.1f64..3.0, q in 0.1f64..0.9) {
        let seq: Vec<f64> = (0..5).map(|k| a + b * q.powi(k)).collect();
        prop_assert!((aitken_limit(&seq).unwrap() - a).abs() < 1e-9 * (1.0 + a.abs()));
    }

    #[test]
    fn children_tile_their_parent(patch in 0usize..6, level in 0usize..3, i in 0usize..4, j in 0usize..4) {
        let mesh = fine_cube();
        let n = 1usize << level;
        let e = Element::new(patch, level, i % n, j % n);
        let pr = mesh.rect(&e);
        let kids = e.children();
        let area: f64 = kids.iter().map(|c| mesh.rect(c).area()).sum();
        prop_assert!((area - pr.area()).abs() < 1e-15);
        for c in kids {
            let r = mesh.rect(&c);
            prop_assert!((0..2).all(|d| pr.lo[d] <= r.lo[d] && r.hi[d] <= pr.hi[d]));
            prop_assert_eq!(c.parent(), Some(e));
            prop_assert!(e.contains(&c));
        }
        let mut distinct = kids.to_vec();
        distinct.sort();
        distinct.dedup();
        prop_assert_eq!(distinct.len(), 4);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn random_refinement_stays_admissible_and_nested(seed in any::<u64>(), p in 0usize..=2) {
        let geometry = if seed % 2 == 0 { "cube" } else { "quarter_pipe" };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = BoundaryGeometry::by_name(geometry).unwrap().initial_mesh(p).unwrap();
        for _ in 0..15 {
            let next = random_refine(&m, &mut rng, 1).unwrap();
            prop_assert!(next.is_admissible());
            prop_assert!(next.is_finer_than(&m));
            prop_assert!(next.num_elements() >= m.num_elements() + 3);
            m = next;
        }
    }

    #[test]
    fn thb_functions_sum_to_one(seed in any::<u64>(), p in 1usize..=2) {
        let mesh = refined("quarter_pipe", p, seed, 5);
        let space = SplineSpace::new(Arc::new(mesh));
        let ones = vec![1.0; space.dim()];
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        for _ in 0..200 {
            let t = [rand::Rng::gen::<f64>(&mut rng), rand::Rng::gen::<f64>(&mut rng)];
            let patch = rand::Rng::gen_range(&mut rng, 0..space.mesh().num_patches());
            prop_assert!((space.eval(&ones, patch, t).unwrap() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn overlay_is_finer_than_both(seed in any::<u64>()) {
        let a = refined("cube", 1, seed, 4);
        let b = refined("cube", 1, seed.wrapping_add(1), 4);
        let o = a.overlay(&b).unwrap();
        prop_assert!(o.is_finer_than(&a) && o.is_finer_than(&b));
        prop_assert!(o.num_elements() <= a.num_elements() + b.num_elements());
        let same = a.overlay(&a).unwrap();
        prop_assert_eq!(same.elements(), a.elements());
    }
}
