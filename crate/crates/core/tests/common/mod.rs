#![allow(dead_code)]

use adjset::model::{build_stacked, LinearSystem, PolytopicSet, StackedProblem, StageCost};
use adjset::uncertainty::{
    make_ball, make_ellipsoid, make_polytope, make_rectangle, BallNorm, ObjectiveKind,
    UncertaintyFamily,
};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Random single-disturbance instance with a box family: `N <= 3`,
/// `n_x <= 2`, one input, `x0 = 0` so `Y = 0`, `u = 0` is feasible.
pub fn random_box_instance<R: Rng>(rng: &mut R) -> (StackedProblem, UncertaintyFamily, f64) {
    let n = rng.gen_range(1..=3);
    let nx = rng.gen_range(1..=2);
    let a = DMatrix::from_fn(nx, nx, |i, j| {
        let off = rng.gen_range(-0.4..0.4);
        if i == j {
            0.6 + off
        } else {
            off
        }
    });
    let b = DMatrix::from_fn(nx, 1, |_, _| {
        let v: f64 = rng.gen_range(0.3..1.2);
        if rng.gen_bool(0.5) {
            v
        } else {
            -v
        }
    });
    let e = DMatrix::from_fn(nx, 1, |_, _| rng.gen_range(-1.0..1.0));
    let sys = LinearSystem::new(a, b, e).unwrap();
    let xb: Vec<f64> = (0..nx).map(|_| rng.gen_range(2.0..5.0)).collect();
    let lo: Vec<f64> = xb.iter().map(|v| -v).collect();
    let x_set = PolytopicSet::boxed(&lo, &xb).unwrap();
    let ub = rng.gen_range(1.0..3.0);
    let u_set = PolytopicSet::boxed(&[-ub], &[ub]).unwrap();
    let cost = StageCost {
        state: DVector::from_fn(nx, |_, _| rng.gen_range(-1.0..1.0)),
        input: DVector::from_fn(1, |_, _| rng.gen_range(-1.0..1.0)),
        terminal: DVector::zeros(nx),
    };
    let sp = build_stacked(&sys, &x_set, &u_set, &cost, &DVector::zeros(nx), n).unwrap();
    let fam = make_rectangle(1).unwrap();
    (sp, fam, rng.gen_range(0.1..2.0))
}

/// A family with shaping drawn at random, exercising every lifting path:
/// inverse, interval clamp and the min-norm program.
pub fn random_lifting_instance<R: Rng>(
    rng: &mut R,
    which: usize,
) -> (UncertaintyFamily, Vec<DMatrix<f64>>, Vec<DVector<f64>>) {
    let horizon = rng.gen_range(1..=2);
    let (fam, n_s, n_w) = match which % 5 {
        0 => {
            let n_w = rng.gen_range(1..=3);
            (make_rectangle(n_w).unwrap(), n_w, n_w)
        }
        1 => (make_ellipsoid(2).unwrap(), 2, 2),
        2 => (make_ball(BallNorm::One, 2).unwrap(), 2, 2),
        3 => {
            let m = rng.gen_range(3..=5);
            let dirs = (0..m)
                .map(|_| DVector::from_fn(2, |_, _| rng.gen_range(-1.0..1.0)))
                .collect();
            (
                make_polytope(2, m, ObjectiveKind::VertexPushing { directions: dirs }).unwrap(),
                m,
                2,
            )
        }
        _ => (make_ball(BallNorm::Two, 3).unwrap(), 3, 3),
    };
    let mut y_mats = Vec::new();
    let mut y_vecs = Vec::new();
    for _ in 0..horizon {
        let y = match which % 5 {
            0 => DMatrix::from_fn(n_w, n_s, |i, j| {
                if i != j || rng.gen_bool(0.25) {
                    0.0
                } else {
                    rng.gen_range(0.1..3.0)
                }
            }),
            1 => {
                let m = DMatrix::from_fn(2, 2, |_, _| rng.gen_range(-2.0..2.0));
                if rng.gen_bool(0.4) {
                    // Rank one: a degenerate ellipse.
                    let v = m.column(0).into_owned();
                    &v * v.transpose()
                } else {
                    &m * m.transpose()
                }
            }
            2 | 4 => DMatrix::identity(n_w, n_s) * rng.gen_range(0.1..3.0),
            _ => DMatrix::from_fn(n_w, n_s, |_, _| rng.gen_range(-3.0..3.0)),
        };
        y_mats.push(y);
        y_vecs.push(DVector::from_fn(n_w, |_, _| rng.gen_range(-2.0..2.0)));
    }
    (fam, y_mats, y_vecs)
}

/// A random point of `𝒮 = 𝕊_0 × .. × 𝕊_{N-1}`.
pub fn sample_primitive<R: Rng>(
    fam: &UncertaintyFamily,
    horizon: usize,
    rng: &mut R,
) -> DVector<f64> {
    let parts: Vec<DVector<f64>> = (0..horizon)
        .map(|k| {
            fam.stage(k)
                .primitive
                .sample(rng)
                .expect("built-in primitives can be sampled")
        })
        .collect();
    adjset::model::stack_blocks(&parts)
}
