//! Exact scenario-tree oracle, feasibility certificates and planar geometry.

use std::collections::HashMap;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::conic::{BackendRegistry, ProgramBuilder, SolveOptions, SolveStatus};
use crate::error::{dim_check, Error, Result};
use crate::exec::{map_indices, Execution};
use crate::model::{InputCausality, StackedProblem};
use crate::policy::{recover_solution, LiftingOperator, RecoveredPolicy};
use crate::reformulate::{add_shaping, add_size_objective, Pins, Solution, StageShapingVars};
use crate::serde_mat;
use crate::uncertainty::UncertaintyFamily;

/// Hard cap on oracle scenarios.
pub const ORACLE_SCENARIO_CAP: u128 = 1 << 16;
/// Cap on extreme points checked by `certify_feasibility`.
pub const CERTIFY_VERTEX_CAP: u128 = 1 << 12;
pub const CERTIFY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertexOracleResult {
    pub status: SolveStatus,
    /// Optimal `τ - λ Σ ϱ`, comparable to a synthesis counterpart objective.
    pub value: f64,
    pub tau: f64,
    /// Disturbance sequence of each scenario.
    #[serde(with = "serde_mat::vectors")]
    pub scenarios: Vec<DVector<f64>>,
    /// Optimal input sequence of each scenario.
    #[serde(with = "serde_mat::vectors")]
    pub inputs: Vec<DVector<f64>>,
    #[serde(with = "serde_mat::matrices")]
    pub y_mats: Vec<DMatrix<f64>>,
    #[serde(with = "serde_mat::vectors")]
    pub y_vecs: Vec<DVector<f64>>,
    pub vertex_count: usize,
    pub enumeration_time: f64,
}

/// Exact optimum over the family with per-scenario inputs, coupled by
/// non-anticipativity: scenarios that agree on the disturbance vertices an
/// input may observe share that input.
pub fn exact_solve_enumeration(
    sp: &StackedProblem,
    fam: &UncertaintyFamily,
    lambda: f64,
) -> Result<VertexOracleResult> {
    exact_solve_enumeration_with(sp, fam, lambda, &Pins::default(), &SolveOptions::default())
}

pub fn exact_solve_enumeration_with(
    sp: &StackedProblem,
    fam: &UncertaintyFamily,
    lambda: f64,
    pins: &Pins,
    opts: &SolveOptions,
) -> Result<VertexOracleResult> {
    let started = Instant::now();
    let n = sp.horizon;
    fam.check_horizon(n)?;
    let fam = fam.clone().for_horizon(n)?;
    dim_check("family disturbance dimension", sp.nw, fam.n_w)?;
    if pins.policy.is_some() {
        return Err(Error::InvalidArgument(
            "the oracle has no affine policy to pin".into(),
        ));
    }
    let mut ext = Vec::with_capacity(n);
    let mut count: u128 = 1;
    for st in &fam.stages {
        if !st.primitive.is_polyhedral() {
            return Err(Error::InvalidArgument(
                "oracle needs a polyhedral primitive".into(),
            ));
        }
        let c = st
            .primitive
            .extreme_point_count()
            .ok_or_else(|| Error::InvalidArgument("primitive extreme points unavailable".into()))?;
        count = count.saturating_mul(c);
        if count > ORACLE_SCENARIO_CAP {
            return Err(Error::CapExceeded {
                count,
                cap: ORACLE_SCENARIO_CAP,
            });
        }
    }
    for st in &fam.stages {
        ext.push(st.primitive.extreme_points().expect("counted above"));
    }
    let count = count as usize;
    let radix: Vec<usize> = ext.iter().map(|e| e.len()).collect();
    let digits = |mut idx: usize| -> Vec<usize> {
        let mut d = vec![0; n];
        for k in (0..n).rev() {
            d[k] = idx % radix[k];
            idx /= radix[k];
        }
        d
    };

    let mut b = ProgramBuilder::new();
    let shaping: Vec<StageShapingVars> = fam
        .stages
        .iter()
        .enumerate()
        .map(|(k, st)| add_shaping(&mut b, st, fam.n_w, k))
        .collect::<Result<_>>()?;
    let tau = b.add_named("tau", 1).start;
    b.add_objective(tau, 1.0);

    // Input variables keyed by (stage, input, observed prefix).
    let mut groups: HashMap<(usize, usize, Vec<usize>), usize> = HashMap::new();
    let mut scen_inputs: Vec<Vec<usize>> = Vec::with_capacity(count);
    for sc in 0..count {
        let dg = digits(sc);
        let mut vars = Vec::with_capacity(n * sp.nu);
        for t in 0..n {
            for a in 0..sp.nu {
                let len = match sp.causality.inputs()[a] {
                    InputCausality::Causal => t + 1,
                    InputCausality::StrictlyCausal => t,
                };
                let key = (t, a, dg[..len].to_vec());
                let v = *groups.entry(key).or_insert_with(|| b.add_free(1).start);
                vars.push(v);
            }
        }
        scen_inputs.push(vars);
    }

    let c_nz: Vec<Vec<(usize, f64)>> = (0..sp.rows())
        .map(|i| {
            (0..sp.cmat.ncols())
                .filter(|&j| sp.cmat[(i, j)] != 0.0)
                .map(|j| (j, sp.cmat[(i, j)]))
                .collect()
        })
        .collect();
    let d_nz: Vec<Vec<(usize, f64)>> = (0..sp.rows())
        .map(|i| {
            (0..sp.dmat.ncols())
                .filter(|&j| sp.dmat[(i, j)] != 0.0)
                .map(|j| (j, sp.dmat[(i, j)]))
                .collect()
        })
        .collect();
    for (sc, vars) in scen_inputs.iter().enumerate() {
        let dg = digits(sc);
        for i in 0..sp.rows() {
            let mut terms: Vec<(usize, f64)> = c_nz[i].iter().map(|&(j, v)| (vars[j], v)).collect();
            // D (Y v + y), linear in the shaping variables.
            for &(col, dij) in &d_nz[i] {
                let (k, a) = (col / fam.n_w, col % fam.n_w);
                let v = &ext[k][dg[k]];
                for e in 0..v.len() {
                    if v[e] != 0.0 {
                        if let Some(yv) = shaping[k].y_mat[a][e] {
                            terms.push((yv, dij * v[e]));
                        }
                    }
                }
                if let Some(yv) = shaping[k].y_vec[a] {
                    terms.push((yv, dij));
                }
            }
            b.add_ineq(terms, sp.d[i]);
        }
        let mut terms: Vec<(usize, f64)> = (0..vars.len())
            .filter(|&j| sp.c[j] != 0.0)
            .map(|j| (vars[j], sp.c[j]))
            .collect();
        terms.push((tau, -1.0));
        b.add_ineq(terms, 0.0);
    }
    if lambda != 0.0 {
        for (k, st) in fam.stages.iter().enumerate() {
            add_size_objective(
                &mut b,
                &fam.objective.kind,
                lambda,
                st,
                &shaping[k],
                fam.n_w,
            )?;
        }
    }
    if let Some((ys, yv)) = &pins.shaping {
        dim_check("pinned shaping stages", n, ys.len())?;
        for k in 0..n {
            let mut seen = std::collections::HashSet::new();
            for (i, row) in shaping[k].y_mat.iter().enumerate() {
                for (j, var) in row.iter().enumerate() {
                    if let Some(v) = var {
                        if seen.insert(*v) {
                            b.add_eq([(*v, 1.0)], ys[k][(i, j)]);
                        }
                    }
                }
            }
            for (i, var) in shaping[k].y_vec.iter().enumerate() {
                if let Some(v) = var {
                    b.add_eq([(*v, 1.0)], yv[k][i]);
                }
            }
        }
    }
    let mut prog = b.build();
    prog.requires_sdp |= fam.requires_sdp();
    let rep = BackendRegistry::default().solve(&prog, opts, None)?;
    if rep.x.is_empty() {
        return Err(Error::Solver(format!(
            "oracle solve ended with {:?}",
            rep.status
        )));
    }
    let x = &rep.x;
    let read = |v: Option<usize>| v.map_or(0.0, |i| x[i]);
    let y_mats: Vec<DMatrix<f64>> = shaping
        .iter()
        .map(|s| DMatrix::from_fn(s.y_mat.len(), s.y_mat[0].len(), |i, j| read(s.y_mat[i][j])))
        .collect();
    let y_vecs: Vec<DVector<f64>> = shaping
        .iter()
        .map(|s| DVector::from_iterator(s.y_vec.len(), s.y_vec.iter().map(|v| read(*v))))
        .collect();
    let scenarios = (0..count)
        .map(|sc| {
            let dg = digits(sc);
            let parts: Vec<DVector<f64>> = (0..n)
                .map(|k| &y_mats[k] * &ext[k][dg[k]] + &y_vecs[k])
                .collect();
            crate::model::stack_blocks(&parts)
        })
        .collect();
    let inputs = scen_inputs
        .iter()
        .map(|vars| DVector::from_iterator(vars.len(), vars.iter().map(|&v| x[v])))
        .collect();
    Ok(VertexOracleResult {
        status: rep.status,
        value: rep.objective,
        tau: x[tau],
        scenarios,
        inputs,
        y_mats,
        y_vecs,
        vertex_count: count,
        enumeration_time: started.elapsed().as_secs_f64(),
    })
}

/// `(affine - exact) / |exact|`; the absolute difference when `exact` is 0.
pub fn suboptimality_gap(affine_value: f64, oracle: &VertexOracleResult) -> Result<f64> {
    if oracle.status != SolveStatus::Optimal {
        return Err(Error::Solver(format!(
            "oracle unavailable: status {:?}",
            oracle.status
        )));
    }
    Ok(relative_gap(affine_value, oracle.value))
}

pub fn relative_gap(value: f64, exact: f64) -> f64 {
    let diff = value - exact;
    if diff == 0.0 {
        0.0
    } else if exact == 0.0 {
        diff
    } else {
        diff / exact.abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub verdict: Verdict,
    pub max_violation: f64,
    pub tolerance: f64,
    /// Extreme points of `𝒲` checked (0 when skipped).
    pub vertex_count: usize,
    pub probe_count: usize,
    pub seed: u64,
    /// Disturbance sequence attaining `max_violation`.
    pub worst_point: Vec<f64>,
    pub worst_row: Option<usize>,
    /// Points whose lifting failed; each counts as a failure.
    pub lift_failures: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct CertifyOptions {
    pub probes: usize,
    pub seed: u64,
    pub tol: f64,
    pub exec: Execution,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self {
            probes: 1000,
            seed: 0,
            tol: CERTIFY_TOL,
            exec: Execution::default(),
        }
    }
}

enum Evaluator {
    Policy(RecoveredPolicy),
    Fixed(DVector<f64>, LiftingOperator),
}

impl Evaluator {
    fn embed(&self, s: &DVector<f64>) -> DVector<f64> {
        match self {
            Evaluator::Policy(rp) => rp.lifting().embed(s),
            Evaluator::Fixed(_, l) => l.embed(s),
        }
    }

    fn inputs(&self, w: &DVector<f64>) -> Result<DVector<f64>> {
        match self {
            Evaluator::Policy(rp) => rp.evaluate(w),
            Evaluator::Fixed(u, _) => Ok(u.clone()),
        }
    }
}

struct Probe {
    violation: f64,
    row: Option<usize>,
    w: DVector<f64>,
    failed: bool,
}

/// Checks `C π(w) + D w <= d` at the extreme points of `𝒲` (when few enough)
/// and at seeded random points of `𝒲`.
pub fn certify_feasibility(
    sol: &Solution,
    sp: &StackedProblem,
    fam: &UncertaintyFamily,
    probes: usize,
) -> Result<FeasibilityReport> {
    certify_feasibility_with(
        sol,
        sp,
        fam,
        &CertifyOptions {
            probes,
            ..CertifyOptions::default()
        },
    )
}

pub fn certify_feasibility_with(
    sol: &Solution,
    sp: &StackedProblem,
    fam: &UncertaintyFamily,
    opts: &CertifyOptions,
) -> Result<FeasibilityReport> {
    let n = sp.horizon;
    let fam = fam.clone().for_horizon(n)?;
    dim_check("solution stages", n, sol.y_mats.len())?;
    let eval = if sol.policy.is_some() {
        Evaluator::Policy(recover_solution(sol, &fam)?)
    } else {
        let u = sol
            .fixed_inputs
            .as_ref()
            .map(|v| DVector::from_vec(v.clone()))
            .unwrap_or_else(|| DVector::zeros(sp.cmat.ncols()));
        Evaluator::Fixed(u, LiftingOperator::new(&fam, &sol.y_mats, &sol.y_vecs)?)
    };
    let check =
        |s: DVector<f64>| -> Probe {
            let w = eval.embed(&s);
            match eval.inputs(&w) {
                Ok(u) => {
                    let r = sp.residual(&u, &w);
                    let (row, v) = r.iter().copied().enumerate().fold(
                        (None, f64::NEG_INFINITY),
                        |acc, (i, v)| if v > acc.1 { (Some(i), v) } else { acc },
                    );
                    Probe {
                        violation: v.max(0.0),
                        row,
                        w,
                        failed: false,
                    }
                }
                Err(_) => Probe {
                    violation: f64::INFINITY,
                    row: None,
                    w,
                    failed: true,
                },
            }
        };

    // Extreme points of 𝒲 = images of the primitive's extreme points.
    let mut results = Vec::new();
    let mut vertex_count = 0;
    let counts: Option<Vec<u128>> = fam
        .stages
        .iter()
        .map(|s| s.primitive.extreme_point_count())
        .collect();
    if let Some(counts) = counts {
        let total = counts.iter().try_fold(1u128, |acc, c| acc.checked_mul(*c));
        if let Some(total) = total.filter(|t| *t <= CERTIFY_VERTEX_CAP) {
            let ext: Vec<Vec<DVector<f64>>> = fam
                .stages
                .iter()
                .map(|s| s.primitive.extreme_points().expect("counted"))
                .collect();
            vertex_count = total as usize;
            results.extend(map_indices(vertex_count, opts.exec, |mut idx| {
                let mut parts = vec![DVector::zeros(0); n];
                for k in (0..n).rev() {
                    parts[k] = ext[k][idx % ext[k].len()].clone();
                    idx /= ext[k].len();
                }
                check(crate::model::stack_blocks(&parts))
            }));
        }
    }

    let sampled = map_indices(opts.probes, opts.exec, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        rng.set_stream(i as u64);
        let parts: Option<Vec<DVector<f64>>> = fam
            .stages
            .iter()
            .map(|s| s.primitive.sample(&mut rng))
            .collect();
        parts.map(|p| check(crate::model::stack_blocks(&p)))
    });
    let probe_count = sampled.iter().filter(|p| p.is_some()).count();
    results.extend(sampled.into_iter().flatten());

    let lift_failures = results.iter().filter(|p| p.failed).count();
    let worst = results
        .iter()
        .max_by(|a, b| a.violation.total_cmp(&b.violation));
    let (max_violation, worst_point, worst_row) = match worst {
        Some(p) => (p.violation, p.w.as_slice().to_vec(), p.row),
        None => (0.0, Vec::new(), None),
    };
    let verdict = if max_violation <= opts.tol && lift_failures == 0 {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    Ok(FeasibilityReport {
        verdict,
        max_violation,
        tolerance: opts.tol,
        vertex_count,
        probe_count,
        seed: opts.seed,
        worst_point,
        worst_row,
        lift_failures,
    })
}

fn cross(o: &[f64; 2], a: &[f64; 2], b: &[f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Convex hull, counter-clockwise, without collinear points.
pub fn convex_hull_2d(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut pts: Vec<[f64; 2]> = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &[f64; 2]>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for p in iter {
            while hull.len() >= start + 2
                && cross(&hull[hull.len() - 2], &hull[hull.len() - 1], p) <= 0.0
            {
                hull.pop();
            }
            hull.push(*p);
        }
        hull.pop();
    }
    hull
}

/// Area of the convex hull of the points.
pub fn polytope_volume_2d(points: &[[f64; 2]]) -> Result<f64> {
    if points.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "need at least 3 points, got {}",
            points.len()
        )));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("polygon vertices".into()));
    }
    let hull = convex_hull_2d(points);
    if hull.len() < 3 {
        return Ok(0.0);
    }
    let twice: f64 = (0..hull.len())
        .map(|i| {
            let (p, q) = (hull[i], hull[(i + 1) % hull.len()]);
            p[0] * q[1] - q[0] * p[1]
        })
        .sum();
    Ok(0.5 * twice.abs())
}

/// Is `p` inside the convex hull of `points` (with tolerance)?
pub fn hull_contains_2d(points: &[[f64; 2]], p: &[f64; 2], tol: f64) -> bool {
    let hull = convex_hull_2d(points);
    if hull.len() < 3 {
        return false;
    }
    (0..hull.len()).all(|i| {
        let (a, b) = (hull[i], hull[(i + 1) % hull.len()]);
        let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
        cross(&a, &b, p) >= -tol * len
    })
}

/// Columns of `Y` as planar points, for sets whose primitive is the simplex.
pub fn columns_2d(y: &DMatrix<f64>) -> Result<Vec<[f64; 2]>> {
    dim_check("planar set rows", 2, y.nrows())?;
    Ok((0..y.ncols()).map(|j| [y[(0, j)], y[(1, j)]]).collect())
}
