use adjset::model::{
    build_stacked, simulate, split_blocks, stack_blocks, LinearSystem, PolytopicSet, StageCost,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Case {
    sys: LinearSystem,
    x_set: PolytopicSet,
    u_set: PolytopicSet,
    cost: StageCost,
    x0: DVector<f64>,
    n: usize,
}

fn random_case(seed: u64) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (nx, nu, nw) = (
        rng.gen_range(1..=3),
        rng.gen_range(1..=2),
        rng.gen_range(1..=2),
    );
    let mut m = |r, c| DMatrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0));
    let sys = LinearSystem::new(m(nx, nx), m(nx, nu), m(nx, nw)).unwrap();
    let fx = m(2 * nx, nx);
    let fu = m(2 * nu, nu);
    let x_set =
        PolytopicSet::new(fx, DVector::from_fn(2 * nx, |_, _| rng.gen_range(0.5..3.0))).unwrap();
    let u_set =
        PolytopicSet::new(fu, DVector::from_fn(2 * nu, |_, _| rng.gen_range(0.5..3.0))).unwrap();
    let mut v = |k| DVector::from_fn(k, |_, _| rng.gen_range(-1.0..1.0));
    let cost = StageCost {
        state: v(nx),
        input: v(nu),
        terminal: v(nx),
    };
    let x0 = v(nx);
    let n = rng.gen_range(1..=4);
    Case {
        sys,
        x_set,
        u_set,
        cost,
        x0,
        n,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn stacked_rows_match_simulated_constraints(seed in any::<u64>(), scale in 0.1f64..3.0) {
        let c = random_case(seed);
        let sp = build_stacked(&c.sys, &c.x_set, &c.u_set, &c.cost, &c.x0, c.n).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let u = DVector::from_fn(c.n * c.sys.nu(), |_, _| scale * rng.gen_range(-1.0..1.0));
        let w = DVector::from_fn(c.n * c.sys.nw(), |_, _| scale * rng.gen_range(-1.0..1.0));
        let us = split_blocks(&u, c.sys.nu());
        let ws = split_blocks(&w, c.sys.nw());
        let xs = simulate(&c.sys, &c.x0, &us, &ws).unwrap();

        // Per stage: state rows on x_{k+1}, then input rows on u_k.
        let mut direct = Vec::new();
        for k in 0..c.n {
            direct.extend((c.x_set.matrix() * &xs[k] - c.x_set.rhs()).iter().copied());
            direct.extend((c.u_set.matrix() * &us[k] - c.u_set.rhs()).iter().copied());
        }
        let stacked = sp.residual(&u, &w);
        prop_assert_eq!(stacked.len(), direct.len());
        for (a, b) in stacked.iter().zip(&direct) {
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()), "{} vs {}", a, b);
        }
        let feasible_stacked = stacked.iter().all(|r| *r <= 0.0);
        let feasible_direct = xs.iter().all(|x| c.x_set.contains(x, 0.0))
            && us.iter().all(|uk| c.u_set.contains(uk, 0.0));
        if stacked.iter().all(|r| r.abs() > 1e-9) {
            prop_assert_eq!(feasible_stacked, feasible_direct);
        }
    }

    #[test]
    fn linear_cost_matches_nominal_trajectory(seed in any::<u64>()) {
        let c = random_case(seed);
        let sp = build_stacked(&c.sys, &c.x_set, &c.u_set, &c.cost, &c.x0, c.n).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed.rotate_left(7));
        let u = DVector::from_fn(c.n * c.sys.nu(), |_, _| rng.gen_range(-2.0..2.0));
        let us = split_blocks(&u, c.sys.nu());
        let ws = vec![DVector::zeros(c.sys.nw()); c.n];
        let xs = simulate(&c.sys, &c.x0, &us, &ws).unwrap();
        let direct = c.cost.evaluate(&xs, &us);
        let stacked = sp.c.dot(&u) + sp.cost_constant;
        prop_assert!((direct - stacked).abs() <= 1e-9 * (1.0 + direct.abs()), "{} vs {}", direct, stacked);
    }

    #[test]
    fn block_split_round_trip(len in 1usize..5, blocks in 1usize..6, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = DVector::from_fn(len * blocks, |_, _| rng.gen::<f64>());
        prop_assert_eq!(stack_blocks(&split_blocks(&v, len)), v);
    }
}
