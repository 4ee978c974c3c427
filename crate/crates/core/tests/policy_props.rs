mod common;

use adjset::apps::{build_robustness, RobustnessProblem, RobustnessSet};
use adjset::conic::SolveOptions;
use adjset::model::{CausalityMask, InputCausality};
use adjset::policy::{recover, recover_solution, AffinePolicy, LiftingOperator, RecoveryMode};
use adjset::reformulate::{build_synthesis, solve_optimal};
use adjset::uncertainty::{make_polytope, make_rectangle, ObjectiveKind};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const LAW_TOL: f64 = 1e-6;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(25))]

    /// Stage-wise lifting, membership in the primitive and exact
    /// reconstruction, on every lifting path.
    #[test]
    fn lifting_laws(seed in any::<u64>(), which in 0usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (fam, y_mats, y_vecs) = common::random_lifting_instance(&mut rng, which);
        let n = y_mats.len();
        let n_w = fam.n_w;
        let lop = LiftingOperator::new(&fam, &y_mats, &y_vecs).unwrap();
        for _ in 0..100 {
            let s = common::sample_primitive(&fam, n, &mut rng);
            let w = lop.embed(&s);
            let l = lop.lift(&w).unwrap();
            let mut off = 0;
            for k in 0..n {
                let prim = &fam.stage(k).primitive;
                prop_assert!(prim.violation(&l.rows(off, prim.dim()).into_owned()) <= LAW_TOL);
                off += prim.dim();
            }
            prop_assert!((lop.embed(&l) - &w).amax() <= LAW_TOL * (1.0 + w.amax()));
            if n > 1 {
                let mut w2 = lop.embed(&common::sample_primitive(&fam, n, &mut rng));
                w2.rows_mut(0, n_w).copy_from(&w.rows(0, n_w));
                let l2 = lop.lift(&w2).unwrap();
                let d0 = fam.stage(0).primitive.dim();
                prop_assert!((l.rows(0, d0) - l2.rows(0, d0)).amax() <= LAW_TOL);
            }
        }
    }

    /// For any valid inequality `aᵀs <= h_𝒮(a)`, the lifted point obeys it.
    #[test]
    fn lifted_points_keep_valid_inequalities(seed in any::<u64>(), which in 0usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (fam, y_mats, y_vecs) = common::random_lifting_instance(&mut rng, which);
        let n = y_mats.len();
        let lop = LiftingOperator::new(&fam, &y_mats, &y_vecs).unwrap();
        let dims: Vec<usize> = (0..n).map(|k| fam.stage(k).primitive.dim()).collect();
        let a = DVector::from_fn(dims.iter().sum(), |_, _| rng.gen_range(-1.0..1.0));
        let mut bound = 0.0;
        let mut off = 0;
        for (k, d) in dims.iter().enumerate() {
            bound += fam.stage(k).primitive.support(&a.rows(off, *d).into_owned()).unwrap();
            off += d;
        }
        for _ in 0..100 {
            let w = lop.embed(&common::sample_primitive(&fam, n, &mut rng));
            let l = lop.lift(&w).unwrap();
            prop_assert!(a.dot(&l) <= bound + LAW_TOL);
        }
    }

    /// Masked entries are rejected, and a recovered causal policy ignores
    /// the disturbances it may not observe.
    #[test]
    fn causality_is_enforced(seed in any::<u64>(), strict0 in any::<bool>(), strict1 in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, nu) = (3usize, 2usize);
        let kind = |s: bool| if s { InputCausality::StrictlyCausal } else { InputCausality::Causal };
        let mask = CausalityMask::new(vec![kind(strict0), kind(strict1)]);
        let mut p_mat = DMatrix::zeros(n * nu, n);
        for t in 0..n {
            for a in 0..nu {
                for k in 0..n {
                    if mask.allows(t, a, k) {
                        p_mat[(t * nu + a, k)] = rng.gen_range(-2.0..2.0);
                    }
                }
            }
        }
        let p_vec = DVector::from_fn(n * nu, |_, _| rng.gen_range(-1.0..1.0));
        let pol = AffinePolicy::new(n, nu, vec![1; n], p_mat.clone(), p_vec.clone(), mask.clone()).unwrap();

        for t in 0..n {
            for a in 0..nu {
                for k in 0..n {
                    if !mask.allows(t, a, k) {
                        let mut bad = p_mat.clone();
                        bad[(t * nu + a, k)] = 0.5;
                        prop_assert!(AffinePolicy::new(n, nu, vec![1; n], bad, p_vec.clone(), mask.clone()).is_err());
                    }
                }
            }
        }

        let fam = make_rectangle(1).unwrap();
        let y_mats: Vec<DMatrix<f64>> = (0..n).map(|_| DMatrix::from_element(1, 1, rng.gen_range(0.5..2.0))).collect();
        let y_vecs: Vec<DVector<f64>> = (0..n).map(|_| DVector::from_element(1, rng.gen_range(-1.0..1.0))).collect();
        let rp = recover(&pol, &y_mats, &y_vecs, &fam).unwrap();
        prop_assert_eq!(rp.mode(), RecoveryMode::AffineInverse);
        let lop = rp.lifting();
        let w = lop.embed(&common::sample_primitive(&fam, n, &mut rng));
        let u = rp.evaluate(&w).unwrap();
        for k in 0..n {
            // Change w_k only; inputs that may not see stage k must not move.
            let mut w2 = w.clone();
            w2[k] = y_vecs[k][0] + y_mats[k][(0, 0)] * rng.gen_range(-1.0..1.0);
            let u2 = rp.evaluate(&w2).unwrap();
            for t in 0..n {
                for a in 0..nu {
                    if !mask.allows(t, a, k) {
                        prop_assert_eq!(u[t * nu + a], u2[t * nu + a]);
                    }
                }
            }
        }
    }
}

/// The worst case of the recovered policy over the extreme points of 𝒲
/// reproduces the counterpart's objective.
#[test]
fn worst_case_over_vertices_matches_the_objective() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let opts = SolveOptions::default();
    for case in 0..15 {
        let (sp, fam, lambda) = common::random_box_instance(&mut rng);
        let sol = solve_optimal(&build_synthesis(&sp, &fam, lambda).unwrap(), &opts).unwrap();
        let rp = recover_solution(&sol, &fam).unwrap();
        let n = sp.horizon;
        let mut worst = f64::NEG_INFINITY;
        for mask in 0..(1u32 << n) {
            let s = DVector::from_fn(n, |i, _| if mask >> i & 1 == 1 { 1.0 } else { -1.0 });
            let w = rp.lifting().embed(&s);
            let u = rp.evaluate(&w).unwrap();
            assert!(
                sp.residual(&u, &w).max() <= 1e-6,
                "case {case}: infeasible at a vertex"
            );
            worst = worst.max(sp.c.dot(&u));
        }
        let value = worst - lambda * sol.size_terms.iter().sum::<f64>();
        assert!(
            (value - sol.objective).abs() <= 1e-7 * (1.0 + sol.objective.abs()),
            "case {case}: {value} vs {}",
            sol.objective
        );
    }
}

/// A simplex lifting with a general `Y` (2×5) and its policy.
fn simplex_policy(
    rng: &mut ChaCha8Rng,
) -> (adjset::policy::RecoveredPolicy, DMatrix<f64>, DMatrix<f64>) {
    let m = 5;
    let dirs = (0..m)
        .map(|_| DVector::from_fn(2, |_, _| rng.gen_range(-1.0..1.0)))
        .collect();
    let fam = make_polytope(2, m, ObjectiveKind::VertexPushing { directions: dirs }).unwrap();
    let y = DMatrix::from_fn(2, m, |_, _| rng.gen_range(-3.0..3.0));
    let yv = DVector::from_fn(2, |_, _| rng.gen_range(-1.0..1.0));
    let p_mat = DMatrix::from_fn(1, m, |_, _| rng.gen_range(-2.0..2.0));
    let pol = AffinePolicy::new(
        1,
        1,
        vec![m],
        p_mat.clone(),
        DVector::from_element(1, 0.3),
        CausalityMask::causal(1),
    )
    .unwrap();
    let rp = recover(&pol, std::slice::from_ref(&y), &[yv], &fam).unwrap();
    assert_eq!(rp.mode(), RecoveryMode::LiftedPwa);
    (rp, y, p_mat)
}

fn simplex_point(rng: &mut ChaCha8Rng, m: usize) -> DVector<f64> {
    let e: Vec<f64> = (0..m).map(|_| -rng.gen_range(1e-12f64..1.0).ln()).collect();
    let t: f64 = e.iter().sum();
    DVector::from_iterator(m, e.iter().map(|v| v / t))
}

#[test]
fn lifted_policy_is_piecewise_affine_along_segments() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let (rp, _, _) = simplex_policy(&mut rng);
    let lop = rp.lifting();
    let wa = lop.embed(&simplex_point(&mut rng, 5));
    let wb = lop.embed(&simplex_point(&mut rng, 5));
    let steps = 10_000;
    let vals: Vec<f64> = (0..=steps)
        .map(|i| {
            let t = i as f64 / steps as f64;
            rp.evaluate(&(&wa * (1.0 - t) + &wb * t)).unwrap()[0]
        })
        .collect();
    let scale = 1.0 + vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let kinks = (1..steps)
        .filter(|&i| (vals[i + 1] - 2.0 * vals[i] + vals[i - 1]).abs() > 1e-6 * scale)
        .count();
    // Finitely many active-set changes, each touching a couple of stencils.
    assert!(kinks <= 60, "{kinks} non-affine stencils out of {steps}");
}

#[test]
fn lifted_policy_respects_its_lipschitz_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let (rp, y, p_mat) = simplex_policy(&mut rng);
    let m = y.ncols();
    // On a region with support F the lifting is s_F = M_F⁺ (w - y, 1),
    // M_F = [Y_F; 1ᵀ]; the bound is the largest gradient over supports.
    let mut k_lift = 0.0f64;
    for mask in 1u32..(1 << m) {
        let f: Vec<usize> = (0..m).filter(|j| mask >> j & 1 == 1).collect();
        if f.len() < 3 {
            continue;
        }
        let mf = DMatrix::from_fn(3, f.len(), |i, j| if i < 2 { y[(i, f[j])] } else { 1.0 });
        let svd = mf.clone().svd(true, true);
        if svd.rank(1e-10) < 3 {
            continue;
        }
        let pinv = svd.pseudo_inverse(1e-12).unwrap();
        let grad = pinv.columns(0, 2).into_owned();
        k_lift = k_lift.max(grad.norm());
    }
    let k = p_mat.norm() * k_lift;
    let lop = rp.lifting();
    for _ in 0..1000 {
        let w1 = lop.embed(&simplex_point(&mut rng, m));
        let w2 = lop.embed(&simplex_point(&mut rng, m));
        let wb = &w1 + (&w2 - &w1) * 1e-3;
        let du = (rp.evaluate(&w1).unwrap() - rp.evaluate(&wb).unwrap()).norm();
        let dw = (&w1 - &wb).norm();
        assert!(
            du <= k * dw * (1.0 + 1e-6) + 1e-7,
            "ratio {} above bound {k}",
            du / dw
        );
    }
}

#[test]
fn polytope_policy_is_feasible_on_random_disturbances() {
    let rb = RobustnessProblem::planar(RobustnessSet::Polytope {
        m: 30,
        radius: 40.0,
    });
    let (sp, fam, lambda) = build_robustness(&rb).unwrap();
    let sol = solve_optimal(
        &build_synthesis(&sp, &fam, lambda).unwrap(),
        &SolveOptions::default(),
    )
    .unwrap();
    let rp = recover_solution(&sol, &fam).unwrap();
    assert_eq!(rp.mode(), RecoveryMode::LiftedPwa);
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..10_000 {
        let w = rp.lifting().embed(&simplex_point(&mut rng, 30));
        let u = rp.evaluate(&w).unwrap();
        worst = worst.max(sp.residual(&u, &w).max());
    }
    assert!(worst <= 1e-6, "worst residual {worst:e}");
}
