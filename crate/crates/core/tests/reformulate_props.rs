mod common;

use adjset::conic::{SolveOptions, SolveStatus};
use adjset::model::{CausalityMask, StackedProblem};
use adjset::reformulate::{
    build_analysis, build_synthesis, build_synthesis_pinned, solve_optimal, Pins,
};
use adjset::uncertainty::{
    circle_anchors, make_ball, make_ellipsoid, make_polytope, make_rectangle, BallNorm,
    ObjectiveKind, UncertaintyFamily,
};
use adjset::verify::{exact_solve_enumeration, exact_solve_enumeration_with};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn polygon_problem(rng: &mut ChaCha8Rng) -> StackedProblem {
    let rows = rng.gen_range(5..10);
    let mut dmat = DMatrix::zeros(rows, 2);
    let mut d = DVector::zeros(rows);
    for i in 0..rows {
        let a = std::f64::consts::TAU * (i as f64 + rng.gen_range(-0.3..0.3)) / rows as f64;
        dmat[(i, 0)] = a.cos();
        dmat[(i, 1)] = a.sin();
        d[i] = rng.gen_range(0.5..4.0);
    }
    StackedProblem::from_parts(
        1,
        DVector::zeros(1),
        DMatrix::zeros(rows, 1),
        dmat,
        d,
        CausalityMask::causal(1),
    )
    .unwrap()
}

fn planar_families() -> Vec<UncertaintyFamily> {
    vec![
        make_rectangle(2).unwrap(),
        make_ellipsoid(2).unwrap(),
        make_ball(BallNorm::One, 2).unwrap(),
        make_ball(BallNorm::Two, 2).unwrap(),
        make_polytope(
            2,
            6,
            ObjectiveKind::VertexPulling {
                anchors: circle_anchors(6, 5.0),
            },
        )
        .unwrap(),
    ]
}

/// Direct check of `D(Ys + y) <= d` (inputs fixed at zero) on samples and
/// extreme points of the primitive.
fn max_direct_violation(
    sp: &StackedProblem,
    fam: &UncertaintyFamily,
    y: &DMatrix<f64>,
    yv: &DVector<f64>,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let prim = &fam.stages[0].primitive;
    let u = DVector::zeros(sp.cmat.ncols());
    let mut pts: Vec<DVector<f64>> = (0..10_000).map(|_| prim.sample(rng).unwrap()).collect();
    if let Some(ext) = prim.extreme_points() {
        pts.extend(ext);
    }
    pts.iter()
        .map(|s| sp.residual(&u, &(y * s + yv)).max())
        .fold(f64::NEG_INFINITY, f64::max)
}

#[test]
fn analysis_certificates_hold_pointwise() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let opts = SolveOptions::default();
    for case in 0..4 {
        let sp = polygon_problem(&mut rng);
        for fam in planar_families() {
            let sol = solve_optimal(&build_analysis(&sp, &fam, None).unwrap(), &opts).unwrap();
            let v = max_direct_violation(&sp, &fam, &sol.y_mats[0], &sol.y_vecs[0], &mut rng);
            assert!(v <= 1e-6, "case {case} {:?}: violation {v:e}", fam.template);
        }
    }
}

#[test]
fn pinned_counterpart_recovers_the_exact_worst_case_cost() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let opts = SolveOptions::default();
    for case in 0..20 {
        let (sp, fam, lambda) = common::random_box_instance(&mut rng);
        let sol = solve_optimal(&build_synthesis(&sp, &fam, lambda).unwrap(), &opts).unwrap();
        let pol = sol.policy.clone().unwrap();
        let pins = Pins {
            shaping: Some((sol.y_mats.clone(), sol.y_vecs.clone())),
            policy: Some((pol.p_mat.clone(), pol.p_vec.clone())),
        };
        let pinned = build_synthesis_pinned(&sp, &fam, 0.0, &pins).unwrap();
        let rep = pinned.solve(&opts).unwrap();
        assert!(
            matches!(rep.status, SolveStatus::Optimal),
            "case {case}: pinned status {:?}",
            rep.status
        );
        // max over box vertices of cᵀ(P s + p), by enumeration.
        let n_s = pol.p_mat.ncols();
        let mut worst = f64::NEG_INFINITY;
        for mask in 0..(1u32 << n_s) {
            let s = DVector::from_fn(n_s, |i, _| if mask >> i & 1 == 1 { 1.0 } else { -1.0 });
            worst = worst.max(sp.c.dot(&(&pol.p_mat * s + &pol.p_vec)));
        }
        let tau = rep.tau.unwrap();
        assert!(
            (tau - worst).abs() <= 1e-6 * (1.0 + worst.abs()),
            "case {case}: τ {tau} vs {worst}"
        );
    }
}

#[test]
fn set_size_grows_with_lambda() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let opts = SolveOptions::default();
    let grid: Vec<f64> = (0..10).map(|i| 0.05 * 1.7f64.powi(i)).collect();
    for case in 0..4 {
        let (sp, fam, _) = common::random_box_instance(&mut rng);
        let mut last = f64::NEG_INFINITY;
        for &lambda in &grid {
            let sol = solve_optimal(&build_synthesis(&sp, &fam, lambda).unwrap(), &opts).unwrap();
            let size: f64 = sol.size_terms.iter().sum();
            assert!(
                size >= last - 1e-6 * (1.0 + last.abs()),
                "case {case}: λ={lambda}: {size} < {last}"
            );
            last = size;
        }
    }
}

#[test]
fn counterpart_never_beats_the_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let opts = SolveOptions::default();
    for case in 0..20 {
        let (sp, fam, lambda) = common::random_box_instance(&mut rng);
        let affine = solve_optimal(&build_synthesis(&sp, &fam, lambda).unwrap(), &opts).unwrap();
        let oracle = exact_solve_enumeration(&sp, &fam, lambda).unwrap();
        assert_eq!(oracle.status, SolveStatus::Optimal);
        assert!(
            affine.objective >= oracle.value - 1e-6,
            "case {case}: {} < {}",
            affine.objective,
            oracle.value
        );

        // Same comparison with the set held at the affine optimum.
        let pins = Pins {
            shaping: Some((affine.y_mats.clone(), affine.y_vecs.clone())),
            policy: None,
        };
        let fixed = exact_solve_enumeration_with(&sp, &fam, lambda, &pins, &opts).unwrap();
        assert!(
            affine.objective >= fixed.value - 1e-6,
            "case {case} pinned: {} < {}",
            affine.objective,
            fixed.value
        );
    }
}
