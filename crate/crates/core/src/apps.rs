//! Problem builders for reserve provision and robustness analysis.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::conic::SolveOptions;
use crate::error::{dim_check, Error, Result};
use crate::exec::{map_slice, Execution};
use crate::model::{
    build_stacked, build_stacked_with, CausalityMask, InputCausality, LinearSystem, OcpData,
    PolytopicSet, StackedProblem, StageCost,
};
use crate::reformulate::{build_synthesis, Counterpart, Solution};
use crate::serde_mat;
use crate::uncertainty::{
    circle_anchors, make_ellipsoid, make_polytope, make_rectangle, ObjectiveKind, OffsetRule,
    PrimitiveSet, ShapingFamily, ShapingStructure, SizeObjective, StageSet, Template,
    UncertaintyFamily,
};

/// Reserve capacity shape offered per stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CapacityMode {
    /// `[-Y_k, Y_k]`.
    Symmetric,
    /// `[y_k - Y_k, y_k + Y_k]` with `|y_k| <= Y_k`.
    Asymmetric,
    /// `[0, Y_k]`.
    PositiveOnly,
    /// `[-Y_k, 0]`.
    NegativeOnly,
}

/// Reserve provision by a building: nominal inputs `u` (strictly causal) plus
/// deviations `Δu` (causal) that track the reserve call, `ηᵀΔu_k = w_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReserveProblem {
    pub building: LinearSystem,
    pub eta: Vec<f64>,
    pub prices: Vec<f64>,
    pub lambda: f64,
    /// Known per-stage state offsets (weather, occupancy).
    #[serde(with = "serde_mat::vectors")]
    pub exogenous: Vec<DVector<f64>>,
    #[serde(with = "serde_mat::vector")]
    pub x0: DVector<f64>,
    /// Index of the comfort-constrained state.
    pub comfort_state: usize,
    pub comfort_lo: Vec<f64>,
    pub comfort_hi: Vec<f64>,
    pub input_max: f64,
    pub mode: CapacityMode,
}

/// Parameters of the 3-state thermal surrogate (kWh/K, K/kW, hours).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalParams {
    pub c_room: f64,
    pub c_inner: f64,
    pub c_outer: f64,
    pub r_room_inner: f64,
    pub r_room_outer: f64,
    pub r_outer_ambient: f64,
    /// Heat delivered to the room per kW of each electrical input.
    pub gains: [f64; 4],
    pub dt: f64,
}

impl Default for ThermalParams {
    fn default() -> Self {
        Self {
            c_room: 3.0,
            c_inner: 20.0,
            c_outer: 30.0,
            r_room_inner: 0.5,
            r_room_outer: 1.0,
            r_outer_ambient: 0.5,
            gains: [1.0, 0.8, 0.6, 0.5],
            dt: 1.0,
        }
    }
}

/// Zero-order-hold discretization; returns `(A, B, B_ambient)`.
pub fn thermal_surrogate(p: &ThermalParams) -> (DMatrix<f64>, DMatrix<f64>, DVector<f64>) {
    let (cr, ci, co) = (p.c_room, p.c_inner, p.c_outer);
    let (g_ri, g_ro, g_oa) = (
        1.0 / p.r_room_inner,
        1.0 / p.r_room_outer,
        1.0 / p.r_outer_ambient,
    );
    #[rustfmt::skip]
    let ac = DMatrix::from_row_slice(3, 3, &[
        -(g_ri + g_ro) / cr, g_ri / cr, g_ro / cr,
        g_ri / ci, -g_ri / ci, 0.0,
        g_ro / co, 0.0, -(g_ro + g_oa) / co,
    ]);
    // Columns: four heat inputs, then ambient temperature.
    let mut bc = DMatrix::zeros(3, 5);
    for (j, g) in p.gains.iter().enumerate() {
        bc[(0, j)] = g / cr;
    }
    bc[(2, 4)] = g_oa / co;
    let mut aug = DMatrix::zeros(8, 8);
    aug.view_mut((0, 0), (3, 3)).copy_from(&(&ac * p.dt));
    aug.view_mut((0, 3), (3, 5)).copy_from(&(&bc * p.dt));
    let ex = aug.exp();
    let a = ex.view((0, 0), (3, 3)).into_owned();
    let b = ex.view((0, 3), (3, 4)).into_owned();
    let ba = ex.view((0, 7), (3, 1)).column(0).into_owned();
    (a, b, ba)
}

/// Ambient temperature profile used by the surrogate, mild enough that the
/// building stays comfortable without heating.
pub fn ambient_profile(n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| 22.0 + (std::f64::consts::TAU * (k as f64 - 9.0) / 24.0).sin())
        .collect()
}

impl ReserveProblem {
    /// The surrogate building with the given prices, comfort 21–25 °C and
    /// inputs in `[0, 2]` kW.
    pub fn surrogate(prices: Vec<f64>, lambda: f64, mode: CapacityMode) -> Result<Self> {
        let n = prices.len();
        let params = ThermalParams::default();
        let (a, b, ba) = thermal_surrogate(&params);
        // Inputs (u, Δu) act identically on the dynamics; w enters only
        // through the matching rows.
        let mut b2 = DMatrix::zeros(3, 8);
        b2.view_mut((0, 0), (3, 4)).copy_from(&b);
        b2.view_mut((0, 4), (3, 4)).copy_from(&b);
        let building = LinearSystem::new(a, b2, DMatrix::zeros(3, 1))?;
        let exogenous = ambient_profile(n).into_iter().map(|t| &ba * t).collect();
        Ok(Self {
            building,
            eta: vec![1.0; 4],
            prices,
            lambda,
            exogenous,
            x0: DVector::from_element(3, 22.0),
            comfort_state: 0,
            comfort_lo: vec![21.0; n],
            comfort_hi: vec![25.0; n],
            input_max: 2.0,
            mode,
        })
    }

    pub fn horizon(&self) -> usize {
        self.prices.len()
    }

    /// Relaxes comfort bounds on the given stages (night setback).
    pub fn with_relaxed_comfort(mut self, stages: &[usize], lo: f64, hi: f64) -> Self {
        for &k in stages {
            if k < self.comfort_lo.len() {
                self.comfort_lo[k] = lo;
                self.comfort_hi[k] = hi;
            }
        }
        self
    }
}

/// Per-mode rectangle family with a linear reward on `Y_k`.
pub fn reserve_family(mode: CapacityMode) -> Result<UncertaintyFamily> {
    let (primitive, offset) = match mode {
        CapacityMode::Symmetric => (PrimitiveSet::unit_box(1), OffsetRule::Zero),
        CapacityMode::Asymmetric => (PrimitiveSet::unit_box(1), OffsetRule::BoxBoundedByY),
        CapacityMode::PositiveOnly => (
            PrimitiveSet::intervals(vec![0.0], vec![1.0])?,
            OffsetRule::Zero,
        ),
        CapacityMode::NegativeOnly => (
            PrimitiveSet::intervals(vec![-1.0], vec![0.0])?,
            OffsetRule::Zero,
        ),
    };
    Ok(UncertaintyFamily {
        template: Template::Rectangle,
        n_w: 1,
        stages: vec![StageSet {
            primitive,
            shaping: ShapingStructure::new(ShapingFamily::Diagonal, offset),
        }],
        objective: SizeObjective::new(ObjectiveKind::LinearWeights { weights: vec![1.0] }),
    })
}

/// Stacked reserve problem, its family and the reward weight.
pub fn build_reserve(rp: &ReserveProblem) -> Result<(StackedProblem, UncertaintyFamily, f64)> {
    let n = rp.horizon();
    if n == 0 {
        return Err(Error::InvalidArgument("empty price series".into()));
    }
    let sys = &rp.building;
    let m = rp.eta.len();
    dim_check("inputs (nominal and deviation)", 2 * m, sys.nu())?;
    dim_check("disturbance dimension", 1, sys.nw())?;
    dim_check("exogenous stages", n, rp.exogenous.len())?;
    dim_check("comfort lower bounds", n, rp.comfort_lo.len())?;
    dim_check("comfort upper bounds", n, rp.comfort_hi.len())?;
    if rp.eta.iter().all(|v| *v == 0.0) {
        return Err(Error::InvalidArgument("η must be nonzero".into()));
    }
    if rp.comfort_state >= sys.nx() {
        return Err(Error::InvalidArgument("comfort state out of range".into()));
    }
    if !(rp.lambda >= 0.0) {
        return Err(Error::InvalidArgument("λ must be >= 0".into()));
    }

    // Comfort rows with zero bounds; the per-stage bounds are added below.
    let mut fx = DMatrix::zeros(2, sys.nx());
    fx[(0, rp.comfort_state)] = 1.0;
    fx[(1, rp.comfort_state)] = -1.0;
    let state_set = PolytopicSet::new(fx, DVector::zeros(2))?;
    // u + Δu ∈ [0, u_max] and u ∈ [0, u_max].
    let mut fu = DMatrix::zeros(4 * m, 2 * m);
    let mut fu_rhs = DVector::zeros(4 * m);
    for i in 0..m {
        fu[(i, i)] = 1.0;
        fu[(i, m + i)] = 1.0;
        fu_rhs[i] = rp.input_max;
        fu[(m + i, i)] = -1.0;
        fu[(m + i, m + i)] = -1.0;
        fu[(2 * m + i, i)] = 1.0;
        fu_rhs[2 * m + i] = rp.input_max;
        fu[(3 * m + i, i)] = -1.0;
    }
    let input_set = PolytopicSet::new(fu, fu_rhs)?;
    let cost = StageCost::zero(sys.nx(), sys.nu());
    let mut sp = build_stacked_with(&OcpData {
        system: sys,
        state_set: &state_set,
        input_set: &input_set,
        cost: &cost,
        x0: &rp.x0,
        horizon: n,
        offsets: Some(&rp.exogenous),
    })?;
    let per_stage = 2 + 4 * m;
    for k in 0..n {
        sp.d[k * per_stage] += rp.comfort_hi[k];
        sp.d[k * per_stage + 1] -= rp.comfort_lo[k];
    }

    // Energy cost Σ c_k ηᵀ(u_k + Δu_k).
    let nu = 2 * m;
    for k in 0..n {
        for i in 0..m {
            sp.c[k * nu + i] = rp.prices[k] * rp.eta[i];
            sp.c[k * nu + m + i] = rp.prices[k] * rp.eta[i];
        }
    }
    sp.cost_constant = 0.0;

    // ηᵀΔu_k = w_k as two inequalities.
    let mut cm = DMatrix::zeros(2 * n, n * nu);
    let mut dm = DMatrix::zeros(2 * n, n);
    for k in 0..n {
        for i in 0..m {
            cm[(2 * k, k * nu + m + i)] = rp.eta[i];
            cm[(2 * k + 1, k * nu + m + i)] = -rp.eta[i];
        }
        dm[(2 * k, k)] = -1.0;
        dm[(2 * k + 1, k)] = 1.0;
    }
    sp.append_rows(&cm, &dm, &DVector::zeros(2 * n))?;

    let mut mask = vec![InputCausality::StrictlyCausal; m];
    mask.extend(vec![InputCausality::Causal; m]);
    let sp = sp.with_causality(CausalityMask::new(mask))?;
    Ok((sp, reserve_family(rp.mode)?, rp.lambda))
}

/// Set shape examined by a robustness study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "set", rename_all = "kebab-case")]
pub enum RobustnessSet {
    Rectangle,
    Ellipsoid,
    /// `m` vertices pulled toward anchors on a circle of the given radius.
    Polytope {
        m: usize,
        radius: f64,
    },
    /// Any family, as given.
    Custom {
        family: Box<UncertaintyFamily>,
    },
}

/// Largest tolerable disturbance set of a constrained system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessProblem {
    pub system: LinearSystem,
    pub state_set: PolytopicSet,
    pub input_set: PolytopicSet,
    #[serde(with = "serde_mat::vector")]
    pub x0: DVector<f64>,
    pub horizon: usize,
    #[serde(flatten)]
    pub set: RobustnessSet,
}

impl RobustnessProblem {
    /// The planar one-step instance: `A = I`, `B = [1, 0.7]ᵀ`, `E = -I`,
    /// an octagonal state set and `|u| <= 5`.
    pub fn planar(set: RobustnessSet) -> Self {
        let system = LinearSystem::new(
            DMatrix::identity(2, 2),
            DMatrix::from_column_slice(2, 1, &[1.0, 0.7]),
            -DMatrix::identity(2, 2),
        )
        .expect("valid planar system");
        #[rustfmt::skip]
        let fx = DMatrix::from_row_slice(8, 2, &[
            1.0, 0.0, -1.0, 0.0,
            0.0, 1.0, 0.0, -1.0,
            -1.0, 1.0, 1.0, -1.0,
            1.0, 1.0, -1.0, -1.0,
        ]);
        let fx_rhs = DVector::from_vec(vec![10.0, 10.0, 10.0, 10.0, 15.0, 15.0, 15.0, 15.0]);
        Self {
            system,
            state_set: PolytopicSet::new(fx, fx_rhs).expect("valid state set"),
            input_set: PolytopicSet::boxed(&[-5.0], &[5.0]).expect("valid input set"),
            x0: DVector::zeros(2),
            horizon: 1,
            set,
        }
    }

    pub fn family(&self) -> Result<UncertaintyFamily> {
        let nw = self.system.nw();
        match &self.set {
            RobustnessSet::Rectangle => make_rectangle(nw),
            RobustnessSet::Ellipsoid => make_ellipsoid(nw),
            RobustnessSet::Polytope { m, radius } => {
                if nw != 2 {
                    return Err(Error::InvalidArgument("circle anchors need n_w = 2".into()));
                }
                make_polytope(
                    nw,
                    *m,
                    ObjectiveKind::VertexPulling {
                        anchors: circle_anchors(*m, *radius),
                    },
                )
            }
            RobustnessSet::Custom { family } => Ok((**family).clone()),
        }
    }
}

/// Pure set maximization: zero nominal cost, so `τ = 0` at the optimum and
/// any positive weight yields the same sets; weight 1 is returned.
pub fn build_robustness(
    rb: &RobustnessProblem,
) -> Result<(StackedProblem, UncertaintyFamily, f64)> {
    let cost = StageCost::zero(rb.system.nx(), rb.system.nu());
    let mut sp = build_stacked(
        &rb.system,
        &rb.state_set,
        &rb.input_set,
        &cost,
        &rb.x0,
        rb.horizon,
    )?;
    sp.c.fill(0.0);
    sp.cost_constant = 0.0;
    Ok((sp, rb.family()?, 1.0))
}

/// Vertices of `{x : F x <= f}` for `dim <= 3` by brute force over row
/// subsets. Only meant for small exact baselines.
pub fn small_polytope_vertices(set: &PolytopicSet) -> Result<Vec<DVector<f64>>> {
    let n = set.dim();
    if n == 0 || n > 3 {
        return Err(Error::InvalidArgument(
            "vertex brute force supports dimension 1 to 3".into(),
        ));
    }
    let f = set.matrix();
    let r = set.rows();
    let mut out: Vec<DVector<f64>> = Vec::new();
    let mut idx: Vec<usize> = (0..n).collect();
    loop {
        let m = DMatrix::from_fn(n, n, |i, j| f[(idx[i], j)]);
        let rhs = DVector::from_fn(n, |i, _| set.rhs()[idx[i]]);
        if let Some(x) = m.lu().solve(&rhs) {
            if set.contains(&x, 1e-9) && !out.iter().any(|v| (v - &x).amax() < 1e-9) {
                out.push(x);
            }
        }
        // Next combination.
        let mut i = n;
        loop {
            if i == 0 {
                return Ok(out);
            }
            i -= 1;
            if idx[i] < r - n + i {
                idx[i] += 1;
                for j in i + 1..n {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Points whose hull is the exact one-step tolerable set
/// `{w : ∃u ∈ U, A x0 + B u + E w ∈ X}` for invertible `E`.
pub fn one_step_maximal_set(rb: &RobustnessProblem) -> Result<Vec<DVector<f64>>> {
    if rb.horizon != 1 {
        return Err(Error::InvalidArgument(
            "exact set is implemented for one step".into(),
        ));
    }
    let e_inv = rb
        .system
        .e()
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidArgument("E must be invertible".into()))?;
    let xs = small_polytope_vertices(&rb.state_set)?;
    let us = small_polytope_vertices(&rb.input_set)?;
    let ax0 = rb.system.a() * &rb.x0;
    Ok(xs
        .iter()
        .flat_map(|x| {
            let e_inv = &e_inv;
            let ax0 = &ax0;
            us.iter()
                .map(move |u| e_inv * (x - ax0 - rb.system.b() * u))
        })
        .collect())
}

/// One row of the planar set-family comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessRow {
    pub family: String,
    pub volume: f64,
    /// `volume / vol(W*)` with `W*` the exact tolerable set.
    pub ratio: f64,
    pub solve_time: f64,
    pub status: crate::conic::SolveStatus,
    /// Boundary points for plotting (corners, sampled ellipse, hull).
    pub boundary: Vec<[f64; 2]>,
    pub solution: Solution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessStudy {
    pub exact_volume: f64,
    pub exact_boundary: Vec<[f64; 2]>,
    pub rows: Vec<RobustnessRow>,
}

/// Area and boundary of a planar set `Y 𝕊 + y` for the built-in templates.
pub fn planar_set_geometry(
    fam: &UncertaintyFamily,
    y: &DMatrix<f64>,
    yv: &DVector<f64>,
) -> Result<(f64, Vec<[f64; 2]>)> {
    dim_check("planar set rows", 2, y.nrows())?;
    let shift = |p: DVector<f64>| [p[0] + yv[0], p[1] + yv[1]];
    match fam.template {
        Template::Ellipsoid => {
            let pts = (0..128)
                .map(|i| {
                    let a = std::f64::consts::TAU * i as f64 / 128.0;
                    shift(y * DVector::from_vec(vec![a.cos(), a.sin()]))
                })
                .collect();
            Ok((std::f64::consts::PI * y.determinant().abs(), pts))
        }
        _ => {
            let ext = fam.stages[0]
                .primitive
                .extreme_points()
                .ok_or_else(|| Error::InvalidArgument("set has no finite vertex list".into()))?;
            let pts: Vec<[f64; 2]> = ext.into_iter().map(|s| shift(y * s)).collect();
            let hull = crate::verify::convex_hull_2d(&pts);
            let area = if hull.len() >= 3 {
                crate::verify::polytope_volume_2d(&hull)?
            } else {
                0.0
            };
            Ok((area, hull))
        }
    }
}

/// Solves the planar instance for the rectangle, ellipsoid and polytope
/// families and compares each area with the exact tolerable set.
pub fn robustness_study(sets: &[RobustnessSet], opts: &SolveOptions) -> Result<RobustnessStudy> {
    let base = RobustnessProblem::planar(RobustnessSet::Rectangle);
    let exact_pts: Vec<[f64; 2]> = one_step_maximal_set(&base)?
        .iter()
        .map(|v| [v[0], v[1]])
        .collect();
    let exact_volume = crate::verify::polytope_volume_2d(&exact_pts)?;
    let exact_boundary = crate::verify::convex_hull_2d(&exact_pts);
    let mut rows = Vec::new();
    for set in sets {
        let rb = RobustnessProblem::planar(set.clone());
        let started = std::time::Instant::now();
        let (sp, fam, lambda) = build_robustness(&rb)?;
        let sol = crate::reformulate::solve_optimal(&build_synthesis(&sp, &fam, lambda)?, opts)?;
        let solve_time = started.elapsed().as_secs_f64();
        let (volume, boundary) = planar_set_geometry(&fam, &sol.y_mats[0], &sol.y_vecs[0])?;
        let family = match set {
            RobustnessSet::Rectangle => "rectangle".to_string(),
            RobustnessSet::Ellipsoid => "ellipsoid".to_string(),
            RobustnessSet::Polytope { m, .. } => format!("polytope-{m}"),
            RobustnessSet::Custom { .. } => "custom".to_string(),
        };
        rows.push(RobustnessRow {
            family,
            volume,
            ratio: volume / exact_volume,
            solve_time,
            status: sol.status,
            boundary,
            solution: sol,
        });
    }
    Ok(RobustnessStudy {
        exact_volume,
        exact_boundary,
        rows,
    })
}

/// The three families compared in the planar study.
pub fn standard_robustness_sets() -> Vec<RobustnessSet> {
    vec![
        RobustnessSet::Rectangle,
        RobustnessSet::Ellipsoid,
        RobustnessSet::Polytope {
            m: 30,
            radius: 40.0,
        },
    ]
}

#[derive(Debug, Clone, Deserialize)]
struct PriceRecord {
    hour: i64,
    price: f64,
}

/// Reads a `hour,price` CSV. Hours must increase by one from the first row.
pub fn ingest_prices(path: &Path) -> Result<Vec<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)?;
    parse_prices(&mut rdr)
}

pub fn parse_prices_str(text: &str) -> Result<Vec<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    parse_prices(&mut rdr)
}

fn parse_prices<R: std::io::Read>(rdr: &mut csv::Reader<R>) -> Result<Vec<f64>> {
    let headers = rdr.headers()?.clone();
    if headers.len() != 2 || &headers[0] != "hour" || &headers[1] != "price" {
        return Err(Error::PriceRow {
            row: 1,
            message: format!(
                "expected header `hour,price`, found {:?}",
                headers.iter().collect::<Vec<_>>()
            ),
        });
    }
    let mut prices = Vec::new();
    let mut prev: Option<i64> = None;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let row = e.position().map_or(0, |p| p.line() as usize);
            Error::PriceRow {
                row,
                message: e.to_string(),
            }
        })?;
        let row = rec.position().map_or(0, |p| p.line() as usize);
        let r: PriceRecord = rec
            .deserialize(Some(&headers))
            .map_err(|e| Error::PriceRow {
                row,
                message: e.to_string(),
            })?;
        if !r.price.is_finite() {
            return Err(Error::PriceRow {
                row,
                message: "price is not finite".into(),
            });
        }
        if let Some(p) = prev {
            if r.hour != p + 1 {
                return Err(Error::PriceRow {
                    row,
                    message: format!("hour {} follows hour {p}; expected {}", r.hour, p + 1),
                });
            }
        }
        prev = Some(r.hour);
        prices.push(r.price);
    }
    if prices.is_empty() {
        return Err(Error::PriceRow {
            row: 2,
            message: "no price rows".into(),
        });
    }
    Ok(prices)
}

/// One point of the bid curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BidPoint {
    pub lambda: f64,
    pub total_reserve: f64,
    /// Energy at zero reserve call.
    pub nominal_energy: f64,
    pub min_energy: f64,
    pub max_energy: f64,
    pub capacities: Vec<f64>,
    pub error: Option<String>,
}

/// Reserve capacity `Y_k` per stage of a reserve solution.
pub fn capacities(sol: &Solution) -> Vec<f64> {
    sol.y_mats.iter().map(|y| y[(0, 0)]).collect()
}

/// Energy range `Σ_k ηᵀ(u_k + Δu_k)` over the reserve set, and its value at
/// `w = 0`.
pub fn energy_summary(
    rp: &ReserveProblem,
    sol: &Solution,
    fam: &UncertaintyFamily,
) -> Result<(f64, f64, f64)> {
    let pol = sol
        .policy
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("solution has no policy".into()))?;
    let n = rp.horizon();
    let m = rp.eta.len();
    let nu = 2 * m;
    // energy(s) = aᵀ s + b.
    let mut a = DVector::zeros(pol.p_mat.ncols());
    let mut b = 0.0;
    for k in 0..n {
        for i in 0..nu {
            let row = k * nu + i;
            let eta = rp.eta[i % m];
            a += pol.p_mat.row(row).transpose() * eta;
            b += pol.p_vec[row] * eta;
        }
    }
    let fam = fam.clone().for_horizon(n)?;
    // Energy at w = 0: lift the origin (center of a symmetric set).
    let mut lo = b;
    let mut hi = b;
    let mut off = 0;
    for k in 0..n {
        let prim = &fam.stages[k].primitive;
        let ak = a.rows(off, prim.dim()).into_owned();
        hi += prim.support(&ak)?;
        lo -= prim.support(&(-&ak))?;
        off += prim.dim();
    }
    let rec = crate::policy::recover_solution(sol, &fam)?;
    let nominal = match rec.evaluate(&DVector::zeros(n)) {
        Ok(u) => (0..n * nu).map(|j| u[j] * rp.eta[(j % nu) % m]).sum(),
        Err(_) => b,
    };
    Ok((nominal, lo, hi))
}

/// Weight on the nominal energy `Σ ηᵀp_u` added to reserve programs. The
/// worst-case cost alone leaves the nominal schedule degenerate (raising
/// nominal consumption and cutting it back after calls cost the same); this
/// picks the least-consumption schedule among those ties.
pub const NOMINAL_TIE_BREAK: f64 = 1e-3;

/// Synthesis counterpart of a reserve problem, with the nominal tie-break.
pub fn reserve_counterpart(rp: &ReserveProblem) -> Result<Counterpart> {
    let (sp, fam, lambda) = build_reserve(rp)?;
    reserve_counterpart_for(rp, &sp, &fam, lambda)
}

fn reserve_counterpart_for(
    rp: &ReserveProblem,
    sp: &StackedProblem,
    fam: &UncertaintyFamily,
    lambda: f64,
) -> Result<Counterpart> {
    let mut cp = build_synthesis(sp, fam, lambda)?;
    let m = rp.eta.len();
    for k in 0..rp.horizon() {
        for i in 0..m {
            let v = cp.vars.p_vec[k * 2 * m + i];
            cp.program
                .objective
                .push((v, NOMINAL_TIE_BREAK * rp.eta[i]));
        }
    }
    Ok(cp)
}

/// One synthesis solve per `λ`; failures are recorded per row.
pub fn bid_curve(
    rp: &ReserveProblem,
    lambdas: &[f64],
    opts: &SolveOptions,
    exec: Execution,
) -> Result<Vec<BidPoint>> {
    if lambdas.is_empty() {
        return Err(Error::InvalidArgument("λ grid is empty".into()));
    }
    let mut grid = lambdas.to_vec();
    grid.sort_by(f64::total_cmp);
    let (sp, fam, _) = build_reserve(rp)?;
    let rows = map_slice(&grid, exec, |&lambda| {
        let run = || -> Result<BidPoint> {
            let cp = reserve_counterpart_for(rp, &sp, &fam, lambda)?;
            let sol = crate::reformulate::solve_optimal(&cp, opts)?;
            let caps = capacities(&sol);
            let (nominal, lo, hi) = energy_summary(rp, &sol, &fam)?;
            Ok(BidPoint {
                lambda,
                total_reserve: caps.iter().sum(),
                nominal_energy: nominal,
                min_energy: lo,
                max_energy: hi,
                capacities: caps,
                error: None,
            })
        };
        run().unwrap_or_else(|e| BidPoint {
            lambda,
            total_reserve: f64::NAN,
            nominal_energy: f64::NAN,
            min_energy: f64::NAN,
            max_energy: f64::NAN,
            capacities: Vec::new(),
            error: Some(e.to_string()),
        })
    });
    Ok(rows)
}
