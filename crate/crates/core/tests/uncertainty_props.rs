use adjset::conic::SolveOptions;
use adjset::conic::{Cone, ConeKind};
use adjset::model::{CausalityMask, StackedProblem};
use adjset::reformulate::{build_analysis, solve_optimal};
use adjset::uncertainty::{
    make_ball, make_ellipsoid, make_polytope, make_rectangle, BallNorm, ObjectiveKind,
    SizeObjective,
};
use adjset::verify::{convex_hull_2d, hull_contains_2d};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-9;

fn norm_p(v: &DVector<f64>, p: BallNorm) -> f64 {
    match p {
        BallNorm::One => v.lp_norm(1),
        BallNorm::Two => v.norm(),
        BallNorm::Inf => v.amax(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn rectangle_images(seed in any::<u64>(), n_w in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fam = make_rectangle(n_w).unwrap();
        let prim = &fam.stages[0].primitive;
        let gam = DVector::from_fn(n_w, |_, _| rng.gen_range(0.0..4.0));
        let y = DMatrix::from_diagonal(&gam);
        let yv = DVector::from_fn(n_w, |_, _| rng.gen_range(-3.0..3.0));
        for _ in 0..1000 {
            let w = &y * prim.sample(&mut rng).unwrap() + &yv;
            for i in 0..n_w {
                prop_assert!((w[i] - yv[i]).abs() <= gam[i] + TOL);
            }
        }
        for v in prim.extreme_points().unwrap() {
            let w = &y * v + &yv;
            for i in 0..n_w {
                prop_assert!(((w[i] - yv[i]).abs() - gam[i]).abs() <= TOL);
            }
        }
    }

    #[test]
    fn ellipsoid_images(seed in any::<u64>(), n_w in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fam = make_ellipsoid(n_w).unwrap();
        let prim = &fam.stages[0].primitive;
        let m = DMatrix::from_fn(n_w, n_w, |_, _| rng.gen_range(-2.0..2.0));
        let y = &m * m.transpose() + DMatrix::identity(n_w, n_w) * 0.2;
        let yv = DVector::from_fn(n_w, |_, _| rng.gen_range(-3.0..3.0));
        let inv = y.clone().try_inverse().unwrap();
        for _ in 0..1000 {
            let w = &y * prim.sample(&mut rng).unwrap() + &yv;
            prop_assert!((&inv * (&w - &yv)).norm() <= 1.0 + TOL);
        }
        for _ in 0..100 {
            let w = &y * prim.sample_boundary(&mut rng).unwrap() + &yv;
            prop_assert!(((&inv * (&w - &yv)).norm() - 1.0).abs() <= 1e-8);
        }
    }

    #[test]
    fn ball_images(seed in any::<u64>(), n_w in 1usize..4, which in 0usize..3) {
        let p = [BallNorm::One, BallNorm::Two, BallNorm::Inf][which];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fam = make_ball(p, n_w).unwrap();
        let prim = &fam.stages[0].primitive;
        let r = rng.gen_range(0.1..5.0);
        let y = DMatrix::identity(n_w, n_w) * r;
        let yv = DVector::from_fn(n_w, |_, _| rng.gen_range(-3.0..3.0));
        for _ in 0..1000 {
            let w = &y * prim.sample(&mut rng).unwrap() + &yv;
            prop_assert!(norm_p(&(&w - &yv), p) <= r + TOL);
        }
        if let Some(ext) = prim.extreme_points() {
            for v in ext {
                let w = &y * v + &yv;
                prop_assert!((norm_p(&(&w - &yv), p) - r).abs() <= TOL * (1.0 + r));
            }
        }
    }

    #[test]
    fn polytope_images(seed in any::<u64>(), m in 3usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dirs = (0..m).map(|_| DVector::from_fn(2, |_, _| rng.gen_range(-1.0..1.0))).collect();
        let fam = make_polytope(2, m, ObjectiveKind::VertexPushing { directions: dirs }).unwrap();
        let prim = &fam.stages[0].primitive;
        let y = DMatrix::from_fn(2, m, |_, _| rng.gen_range(-3.0..3.0));
        let cols: Vec<[f64; 2]> = (0..m).map(|j| [y[(0, j)], y[(1, j)]]).collect();
        let hull = convex_hull_2d(&cols);
        for _ in 0..1000 {
            let w = &y * prim.sample(&mut rng).unwrap();
            prop_assert!(hull_contains_2d(&hull, &[w[0], w[1]], TOL));
        }
        // Hull vertices are images of extreme points.
        let images: Vec<DVector<f64>> = prim.extreme_points().unwrap().into_iter().map(|v| &y * v).collect();
        for h in &hull {
            prop_assert!(images.iter().any(|w| (w[0] - h[0]).abs() <= TOL && (w[1] - h[1]).abs() <= TOL));
        }
    }

    #[test]
    fn dual_cone_pairing(seed in any::<u64>(), dim in 3usize..7, which in 0usize..3) {
        let kind = [ConeKind::Nonnegative, ConeKind::SecondOrder, ConeKind::RotatedSecondOrder][which];
        let cone = Cone::new(kind, dim).unwrap();
        let dual = cone.dual();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            let mut x: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
            match kind {
                ConeKind::Nonnegative => x.iter_mut().for_each(|v| *v = v.abs()),
                ConeKind::SecondOrder => {
                    x[0] = x[1..].iter().map(|v| v * v).sum::<f64>().sqrt() + rng.gen_range(0.0..1.0);
                }
                ConeKind::RotatedSecondOrder => {
                    x[0] = rng.gen_range(0.01..2.0);
                    let r2: f64 = x[2..].iter().map(|v| v * v).sum();
                    x[1] = r2 / (2.0 * x[0]) + rng.gen_range(0.0..1.0);
                }
            }
            x
        };
        for _ in 0..1000 {
            let a = draw(&mut rng);
            let b = draw(&mut rng);
            prop_assert!(cone.contains(&a, 1e-12));
            prop_assert!(dual.contains(&b, 1e-12));
            let ip: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
            prop_assert!(ip >= -1e-12, "inner product {}", ip);
        }
    }
}

/// Random bounded polygon `{w : D w <= d}` around the origin, as a one-stage
/// problem with a single idle input.
fn random_polygon_problem(rng: &mut ChaCha8Rng) -> StackedProblem {
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

#[test]
fn geometric_mean_keeps_the_log_volume_maximizer() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let opts = SolveOptions::default();
    for _ in 0..10 {
        let sp = random_polygon_problem(&mut rng);
        let base = make_rectangle(2).unwrap();
        let geo = base
            .clone()
            .with_objective(SizeObjective::new(ObjectiveKind::GeoMeanDiagonal));
        let a = solve_optimal(&build_analysis(&sp, &base, None).unwrap(), &opts).unwrap();
        let b = solve_optimal(&build_analysis(&sp, &geo, None).unwrap(), &opts).unwrap();
        let (ya, yb) = (&a.y_mats[0], &b.y_mats[0]);
        for i in 0..2 {
            assert!(
                (ya[(i, i)] - yb[(i, i)]).abs() <= 1e-5 * (1.0 + ya[(i, i)].abs()),
                "{ya} vs {yb}"
            );
        }
    }
}
