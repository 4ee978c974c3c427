use std::path::PathBuf;

use adjset::apps::{
    bid_curve, build_reserve, capacities, ingest_prices, reserve_counterpart, CapacityMode,
    ReserveProblem,
};
use adjset::conic::SolveOptions;
use adjset::exec::Execution;
use adjset::policy::recover_solution;
use adjset::reformulate::{solve_optimal, Solution};
use adjset::uncertainty::UncertaintyFamily;
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn weekday_prices() -> Vec<f64> {
    ingest_prices(&PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/prices_weekday.csv"))
        .unwrap()
}

fn solve_reserve(lambda: f64, mode: CapacityMode) -> (ReserveProblem, Solution, UncertaintyFamily) {
    let rp = ReserveProblem::surrogate(weekday_prices(), lambda, mode).unwrap();
    let (_, fam, _) = build_reserve(&rp).unwrap();
    let sol = solve_optimal(&reserve_counterpart(&rp).unwrap(), &SolveOptions::default()).unwrap();
    (rp, sol, fam)
}

/// A random point of the reserve set, stage by stage.
fn sample_call(sol: &Solution, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_iterator(
        sol.y_mats.len(),
        sol.y_mats
            .iter()
            .zip(&sol.y_vecs)
            .map(|(y, yv)| yv[0] + y[(0, 0)] * rng.gen_range(lo..=hi)),
    )
}

#[test]
fn deviations_match_every_call() {
    let (rp, sol, fam) = solve_reserve(80.0, CapacityMode::Symmetric);
    let rec = recover_solution(&sol, &fam).unwrap();
    let (sp, _, _) = build_reserve(&rp).unwrap();
    let m = rp.eta.len();
    let nu = 2 * m;
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let mut worst_match = 0.0f64;
    let mut worst_row = f64::NEG_INFINITY;
    for _ in 0..1000 {
        let w = sample_call(&sol, -1.0, 1.0, &mut rng);
        let u = rec.evaluate(&w).unwrap();
        for k in 0..rp.horizon() {
            let delivered: f64 = (0..m).map(|i| rp.eta[i] * u[k * nu + m + i]).sum();
            worst_match = worst_match.max((delivered - w[k]).abs());
        }
        worst_row = worst_row.max(sp.residual(&u, &w).max());
    }
    assert!(worst_match <= 1e-6, "matching error {worst_match:e}");
    assert!(worst_row <= 1e-6, "constraint violation {worst_row:e}");
}

#[test]
fn nominal_energy_rises_with_the_reserve() {
    let rp = ReserveProblem::surrogate(weekday_prices(), 0.0, CapacityMode::Symmetric).unwrap();
    let lambda_bar = 80.0;
    let pts = bid_curve(
        &rp,
        &[0.0, lambda_bar],
        &SolveOptions::default(),
        Execution::Parallel,
    )
    .unwrap();
    assert!(pts.iter().all(|p| p.error.is_none()), "{pts:?}");
    let increase = pts[1].nominal_energy - pts[0].nominal_energy;
    let reserve = pts[1].total_reserve;
    assert!(reserve > 1.0, "no reserve offered at λ = {lambda_bar}");
    assert!(
        (increase - reserve).abs() <= 0.05 * reserve,
        "nominal increase {increase} vs total reserve {reserve}"
    );
}

#[test]
fn positive_only_offers_upward_calls() {
    let (rp, sol, fam) = solve_reserve(80.0, CapacityMode::PositiveOnly);
    let caps = capacities(&sol);
    assert!(caps.iter().all(|c| *c >= -1e-7), "{caps:?}");
    assert!(caps.iter().sum::<f64>() > 1.0);
    let rec = recover_solution(&sol, &fam).unwrap();
    let (sp, _, _) = build_reserve(&rp).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    for _ in 0..200 {
        let w = sample_call(&sol, 0.0, 1.0, &mut rng);
        assert!(w.iter().all(|v| *v >= -1e-9));
        let u = rec.evaluate(&w).unwrap();
        assert!(sp.residual(&u, &w).max() <= 1e-6);
    }
    // Downward calls lie outside the offered set.
    let mut w = DVector::zeros(rp.horizon());
    if let Some(k) = caps.iter().position(|c| *c > 1e-3) {
        w[k] = -caps[k];
        assert!(rec.evaluate(&w).is_err());
    }
}
