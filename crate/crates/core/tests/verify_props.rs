use adjset::verify::{convex_hull_2d, hull_contains_2d, polytope_volume_2d};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn rectangle_area_matches_product(a in 0.0f64..50.0, b in 0.0f64..50.0, cx in -10.0f64..10.0, cy in -10.0f64..10.0) {
        let corners = [[cx - a, cy - b], [cx + a, cy - b], [cx + a, cy + b], [cx - a, cy + b]];
        let area = polytope_volume_2d(&corners).unwrap();
        prop_assert!((area - 4.0 * a * b).abs() <= 1e-9 * (1.0 + 4.0 * a * b));
    }

    #[test]
    fn hull_contains_convex_combinations(
        pts in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 3..20),
        weights in prop::collection::vec(0.0f64..1.0, 20),
    ) {
        let pts: Vec<[f64; 2]> = pts.into_iter().map(|(x, y)| [x, y]).collect();
        let hull = convex_hull_2d(&pts);
        let total: f64 = weights.iter().take(pts.len()).sum::<f64>().max(1e-12);
        let mut p = [0.0, 0.0];
        for (q, w) in pts.iter().zip(&weights) {
            p[0] += q[0] * w / total;
            p[1] += q[1] * w / total;
        }
        if weights.iter().take(pts.len()).sum::<f64>() > 1e-9 {
            prop_assert!(hull_contains_2d(&hull, &p, 1e-9));
        }
        for q in &pts {
            prop_assert!(hull_contains_2d(&hull, q, 1e-9));
        }
    }

    #[test]
    fn hull_area_is_permutation_invariant(pts in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 3..15)) {
        let pts: Vec<[f64; 2]> = pts.into_iter().map(|(x, y)| [x, y]).collect();
        let mut rev = pts.clone();
        rev.reverse();
        let a = polytope_volume_2d(&pts).unwrap();
        let b = polytope_volume_2d(&rev).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a));
    }
}
