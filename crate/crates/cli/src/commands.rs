use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use adjset::apps::{
    self, build_reserve, build_robustness, reserve_counterpart, CapacityMode, ReserveProblem,
    RobustnessProblem,
};
use adjset::conic::{
    BackendCapability, BackendRegistry, ConeKind, ExternalBackend, SolveOptions, SolveStatus,
};
use adjset::model::{
    build_stacked, CausalityMask, LinearSystem, PolytopicSet, StackedProblem, StageCost,
};
use adjset::policy::{recover, recover_solution, AffinePolicy, PolicyFile, RecoveredPolicy};
use adjset::reformulate::{
    build_analysis, build_synthesis, Counterpart, CounterpartKind, Solution,
};
use adjset::uncertainty::{
    circle_anchors, make_ball, make_ellipsoid, make_polytope, make_rectangle, BallNorm,
    ObjectiveKind, UncertaintyFamily,
};
use adjset::verify::{certify_feasibility_with, hull_contains_2d, CertifyOptions, Verdict};
use adjset::Execution;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::schema::{FamilySpec, Mode, Preset, ProblemFile, ResultFile, Timing, SCHEMA_VERSION};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY_FAIL: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_UNSUPPORTED: i32 = 4;
pub const EXIT_OUTSIDE: i32 = 5;

pub const BRIDGE_BACKEND: &str = "external";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("{0}")]
    Usage(String),
    #[error("solver status {status:?}: {message}")]
    NotSolved {
        status: SolveStatus,
        message: String,
    },
    #[error(transparent)]
    Core(#[from] adjset::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use adjset::Error as E;
        match self {
            CliError::Parse { .. } | CliError::Usage(_) | CliError::Io(_) => EXIT_INPUT,
            CliError::NotSolved { status, .. } => match status {
                SolveStatus::UnsupportedCone => EXIT_UNSUPPORTED,
                _ => EXIT_SOLVER,
            },
            CliError::Core(e) => match e {
                E::UnsupportedCone(_) => EXIT_UNSUPPORTED,
                E::Solver(_) | E::CapExceeded { .. } => EXIT_SOLVER,
                E::NotInSet { .. } => EXIT_OUTSIDE,
                _ => EXIT_INPUT,
            },
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Shared solver flags.
#[derive(Debug, Clone, Default)]
pub struct SolverFlags {
    pub tol: Option<f64>,
    pub backend: Option<String>,
    /// External command for an SDP-capable backend, split on whitespace.
    pub bridge_command: Option<String>,
}

impl SolverFlags {
    pub fn options(&self) -> CliResult<SolveOptions> {
        let mut opts = SolveOptions::default();
        if let Some(t) = self.tol {
            if !(t.is_finite() && t > 0.0) {
                return Err(CliError::Usage(format!("--tol must be positive, got {t}")));
            }
            opts.tol = t;
        }
        Ok(opts)
    }

    pub fn registry(&self) -> CliResult<BackendRegistry> {
        let mut reg = BackendRegistry::default();
        if let Some(cmd) = &self.bridge_command {
            let mut parts = cmd.split_whitespace();
            let program = parts
                .next()
                .ok_or_else(|| CliError::Usage("--bridge-command is empty".into()))?;
            let cap = BackendCapability {
                cones: vec![
                    ConeKind::Nonnegative,
                    ConeKind::SecondOrder,
                    ConeKind::RotatedSecondOrder,
                ],
                log_objective: true,
                sdp: true,
            };
            reg.register(Arc::new(ExternalBackend::new(
                BRIDGE_BACKEND,
                cap,
                program,
                parts.map(str::to_string).collect(),
            )))?;
        }
        Ok(reg)
    }
}

/// Serializes with sorted keys.
pub fn to_sorted_json<T: Serialize>(v: &T) -> CliResult<String> {
    let value = serde_json::to_value(v).map_err(adjset::Error::from)?;
    Ok(serde_json::to_string_pretty(&value).map_err(adjset::Error::from)?)
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|source| CliError::Parse {
        path: path.to_path_buf(),
        source,
    })
}

/// A problem file turned into a stacked problem and family.
#[derive(Debug, Clone)]
pub struct LoadedProblem {
    pub problem: StackedProblem,
    pub family: UncertaintyFamily,
    pub lambda: f64,
    pub mode: Mode,
    pub reserve: Option<ReserveProblem>,
}

impl LoadedProblem {
    pub fn counterpart(&self) -> CliResult<Counterpart> {
        let cp = match (self.mode, &self.reserve) {
            (Mode::Analysis, _) => build_analysis(&self.problem, &self.family, None)?,
            (Mode::Synthesis, Some(rp)) => reserve_counterpart(rp)?,
            (Mode::Synthesis, None) => build_synthesis(&self.problem, &self.family, self.lambda)?,
        };
        Ok(cp)
    }
}

fn require<T>(v: Option<T>, what: &str) -> CliResult<T> {
    v.ok_or_else(|| CliError::Usage(format!("problem file is missing `{what}`")))
}

fn family_from_spec(
    spec: &FamilySpec,
    n_w: usize,
    pf: &ProblemFile,
) -> CliResult<UncertaintyFamily> {
    let fam = match spec {
        FamilySpec::Rectangle => make_rectangle(n_w)?,
        FamilySpec::Ellipsoid => make_ellipsoid(n_w)?,
        FamilySpec::Ball { p } => make_ball(BallNorm::from_p(*p)?, n_w)?,
        FamilySpec::Polytope { m, radius } => {
            let kind = match &pf.objective {
                Some(o) => o.kind.clone(),
                None => {
                    if n_w != 2 {
                        return Err(CliError::Usage(
                            "polytope family without a vertex objective needs n_w = 2".into(),
                        ));
                    }
                    ObjectiveKind::VertexPulling {
                        anchors: circle_anchors(*m, radius.unwrap_or(1.0)),
                    }
                }
            };
            make_polytope(n_w, *m, kind)?
        }
        FamilySpec::Custom { family } => {
            if family.n_w != n_w {
                return Err(CliError::Usage(format!(
                    "custom family has n_w = {}, system has {n_w}",
                    family.n_w
                )));
            }
            (**family).clone()
        }
    };
    Ok(match &pf.objective {
        Some(o) => fam.with_objective(o.clone()),
        None => fam,
    })
}

fn check_generic_absent(pf: &ProblemFile) -> CliResult<()> {
    let present = [
        ("system", pf.system.is_some()),
        ("constraints", pf.constraints.is_some()),
        ("x0", pf.x0.is_some()),
        ("horizon", pf.horizon.is_some()),
        ("cost", pf.cost.is_some()),
        ("family", pf.family.is_some()),
        ("causality", pf.causality.is_some()),
    ];
    if let Some((k, _)) = present.iter().find(|(_, p)| *p) {
        return Err(CliError::Usage(format!(
            "`{k}` cannot be combined with a preset"
        )));
    }
    Ok(())
}

/// Parses and validates a problem file.
pub fn load_problem(path: &Path) -> CliResult<LoadedProblem> {
    let pf: ProblemFile = read_json(path)?;
    if pf.schema_version != SCHEMA_VERSION {
        return Err(CliError::Usage(format!(
            "unsupported schema_version {} (expected {SCHEMA_VERSION})",
            pf.schema_version
        )));
    }
    let mode = pf.mode.unwrap_or(Mode::Synthesis);
    if let Some(preset) = &pf.preset {
        check_generic_absent(&pf)?;
        return match preset {
            Preset::Robustness { set, m, radius } => {
                let rb = RobustnessProblem::planar(set.to_set(*m, *radius));
                let (sp, mut fam, lambda) = build_robustness(&rb)?;
                if let Some(o) = &pf.objective {
                    fam = fam.with_objective(o.clone());
                }
                Ok(LoadedProblem {
                    problem: sp,
                    family: fam,
                    lambda: pf.lambda.unwrap_or(lambda),
                    mode,
                    reserve: None,
                })
            }
            Preset::Reserve {
                prices,
                prices_csv,
                lambda,
                capacity,
            } => {
                if pf.objective.is_some() || pf.lambda.is_some() {
                    return Err(CliError::Usage(
                        "the reserve preset takes `lambda` inside the preset and no `objective`"
                            .into(),
                    ));
                }
                let prices = match (prices, prices_csv) {
                    (Some(p), None) => p.clone(),
                    (None, Some(csv)) => {
                        let base = path.parent().unwrap_or(Path::new("."));
                        apps::ingest_prices(&base.join(csv))?
                    }
                    _ => {
                        return Err(CliError::Usage(
                            "reserve preset needs exactly one of `prices` and `prices_csv`".into(),
                        ))
                    }
                };
                let rp = ReserveProblem::surrogate(prices, *lambda, *capacity)?;
                let (sp, fam, lambda) = build_reserve(&rp)?;
                Ok(LoadedProblem {
                    problem: sp,
                    family: fam,
                    lambda,
                    mode,
                    reserve: Some(rp),
                })
            }
        };
    }

    let sys = require(pf.system.as_ref(), "system")?;
    let cons = require(pf.constraints.as_ref(), "constraints")?;
    let horizon = require(pf.horizon, "horizon")?;
    let system = LinearSystem::new(sys.a.clone(), sys.b.clone(), sys.e.clone())?;
    let (nx, nu, nw) = (system.nx(), system.nu(), system.nw());
    let state_set = PolytopicSet::new(cons.f_x.clone(), cons.f_x_rhs.clone())?;
    let input_set = PolytopicSet::new(cons.f_u.clone(), cons.f_u_rhs.clone())?;
    let x0 = pf
        .x0
        .clone()
        .map_or_else(|| DVector::zeros(nx), DVector::from_vec);
    let mut cost = StageCost::zero(nx, nu);
    if let Some(c) = &pf.cost {
        if let Some(v) = &c.state {
            cost.state = DVector::from_vec(v.clone());
        }
        if let Some(v) = &c.input {
            cost.input = DVector::from_vec(v.clone());
        }
        if let Some(v) = &c.terminal {
            cost.terminal = DVector::from_vec(v.clone());
        }
    }
    let mut sp = build_stacked(&system, &state_set, &input_set, &cost, &x0, horizon)?;
    if let Some(c) = &pf.causality {
        sp = sp.with_causality(CausalityMask::new(c.clone()))?;
    }
    let spec = require(pf.family.as_ref(), "family")?;
    let family = family_from_spec(spec, nw, &pf)?;
    family.check_horizon(horizon)?;
    let lambda = pf.lambda.unwrap_or(1.0);
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(CliError::Usage(format!(
            "lambda must be finite and >= 0, got {lambda}"
        )));
    }
    Ok(LoadedProblem {
        problem: sp,
        family,
        lambda,
        mode,
        reserve: None,
    })
}

fn planar_volume(fam: &UncertaintyFamily, sol: &Solution) -> Option<f64> {
    if fam.n_w != 2 || sol.y_mats.is_empty() {
        return None;
    }
    apps::planar_set_geometry(fam, &sol.y_mats[0], &sol.y_vecs[0])
        .ok()
        .map(|(v, _)| v)
}

pub fn result_file(loaded: &LoadedProblem, sol: &Solution) -> ResultFile {
    let fam = &loaded.family;
    let policy = match sol.kind {
        CounterpartKind::Synthesis => recover_solution(sol, fam).ok().map(PolicyFile::from),
        CounterpartKind::Analysis => None,
    };
    let (p_mat, p_vec) = match &sol.policy {
        Some(p) => (
            Some(adjset::serde_mat::to_rows(&p.p_mat)),
            Some(p.p_vec.iter().copied().collect()),
        ),
        None => (None, None),
    };
    ResultFile {
        schema_version: SCHEMA_VERSION,
        kind: sol.kind,
        status: sol.status,
        objective: sol.objective,
        cost_constant: loaded.problem.cost_constant,
        lambda: loaded.lambda,
        tau: sol.tau,
        y_mats: sol.y_mats.clone(),
        y_vecs: sol.y_vecs.clone(),
        p_mat,
        p_vec,
        fixed_inputs: sol.fixed_inputs.clone(),
        size_terms: sol.size_terms.clone(),
        volume: planar_volume(fam, sol),
        residuals: sol.kkt,
        timing: Timing {
            solve_time: sol.solve_time,
            iterations: sol.iterations,
        },
        backend: sol.backend.clone(),
        policy,
    }
}

/// `solve`: returns the JSON document to print and the exit code.
pub fn cmd_solve(
    problem: &Path,
    flags: &SolverFlags,
    out: Option<&Path>,
) -> CliResult<(String, i32)> {
    let loaded = load_problem(problem)?;
    let opts = flags.options()?;
    let registry = flags.registry()?;
    let cp = loaded.counterpart()?;
    let sol = cp.solve_with(&registry, &opts, flags.backend.as_deref())?;
    if !sol.is_optimal() {
        let code = CliError::NotSolved {
            status: sol.status,
            message: String::new(),
        }
        .exit_code();
        let doc = json!({
            "schema_version": SCHEMA_VERSION,
            "status": sol.status,
            "backend": sol.backend,
            "timing": {"solve_time": sol.solve_time, "iterations": sol.iterations},
        });
        return Ok((to_sorted_json(&doc)?, code));
    }
    let text = to_sorted_json(&result_file(&loaded, &sol))?;
    if let Some(p) = out {
        fs::write(p, &text)?;
    }
    Ok((text, EXIT_OK))
}

fn result_to_solution(res: &ResultFile, loaded: &LoadedProblem) -> CliResult<Solution> {
    let sp = &loaded.problem;
    let n = sp.horizon;
    if res.y_mats.len() != n || res.y_vecs.len() != n {
        return Err(CliError::Usage(format!(
            "result has {} shaping stages, problem horizon is {n}",
            res.y_mats.len()
        )));
    }
    let fam = loaded.family.clone().for_horizon(n)?;
    for (k, (ym, yv)) in res.y_mats.iter().zip(&res.y_vecs).enumerate() {
        let ns = fam.stages[k].primitive.dim();
        if ym.nrows() != sp.nw || ym.ncols() != ns || yv.len() != sp.nw {
            return Err(CliError::Usage(format!(
                "stage {k} shaping is {}x{}, expected {}x{ns}",
                ym.nrows(),
                ym.ncols(),
                sp.nw
            )));
        }
    }
    let policy = match (res.kind, &res.p_mat, &res.p_vec) {
        (CounterpartKind::Synthesis, Some(pm), Some(pv)) => {
            let n_s: Vec<usize> = fam.stages.iter().map(|s| s.primitive.dim()).collect();
            let cols: usize = n_s.iter().sum();
            if pm.len() != n * sp.nu || pm.iter().any(|r| r.len() != cols) {
                return Err(CliError::Usage(format!("P must be {}x{cols}", n * sp.nu)));
            }
            let pm = adjset::serde_mat::from_rows(pm, cols).map_err(CliError::Usage)?;
            Some(AffinePolicy::new(
                n,
                sp.nu,
                n_s,
                pm,
                DVector::from_vec(pv.clone()),
                sp.causality.clone(),
            )?)
        }
        (CounterpartKind::Synthesis, _, _) => {
            return Err(CliError::Usage("synthesis result lacks `P`/`p`".into()))
        }
        (CounterpartKind::Analysis, _, _) => None,
    };
    Ok(Solution {
        kind: res.kind,
        status: res.status,
        objective: res.objective,
        tau: res.tau,
        policy,
        y_mats: res.y_mats.clone(),
        y_vecs: res.y_vecs.clone(),
        lambda_mat: DMatrix::zeros(0, 0),
        mu: DVector::zeros(0),
        size_terms: res.size_terms.clone(),
        kkt: res.residuals,
        iterations: res.timing.iterations,
        solve_time: res.timing.solve_time,
        backend: res.backend.clone(),
        fixed_inputs: res.fixed_inputs.clone(),
    })
}

/// `verify`: certifies the stored policy (or fixed inputs) over the stored set.
pub fn cmd_verify(
    result: &Path,
    problem: &Path,
    probes: usize,
    seed: u64,
    tol: Option<f64>,
) -> CliResult<(String, i32)> {
    let loaded = load_problem(problem)?;
    let res: ResultFile = read_json(result)?;
    let sol = result_to_solution(&res, &loaded)?;
    let mut opts = CertifyOptions {
        probes,
        seed,
        ..CertifyOptions::default()
    };
    if let Some(t) = tol {
        opts.tol = t;
    }
    let report = certify_feasibility_with(&sol, &loaded.problem, &loaded.family, &opts)?;
    let code = match report.verdict {
        Verdict::Pass => EXIT_OK,
        Verdict::Fail => EXIT_VERIFY_FAIL,
    };
    Ok((to_sorted_json(&report)?, code))
}

/// Reads a policy from a policy file or a result file with a `policy` key.
pub fn load_policy(path: &Path) -> CliResult<RecoveredPolicy> {
    let value: serde_json::Value = read_json(path)?;
    let inner = match value.get("policy") {
        Some(p) if value.get("mode").is_none() => p.clone(),
        _ => value,
    };
    let file: PolicyFile = serde_json::from_value(inner).map_err(|source| CliError::Parse {
        path: path.to_path_buf(),
        source,
    })?;
    let rp = recover(&file.policy, &file.y_mats, &file.y_vecs, &file.family)?;
    if rp.mode() != file.mode {
        return Err(CliError::Usage(format!(
            "policy file declares {} but the shaping implies {}",
            file.mode,
            rp.mode()
        )));
    }
    Ok(rp)
}

/// Parses `1,2,3`, whitespace-separated numbers, or a JSON array.
pub fn parse_vector(text: &str) -> CliResult<DVector<f64>> {
    let t = text.trim();
    let vals: Vec<f64> = if t.starts_with('[') {
        serde_json::from_str(t)
            .map_err(|e| CliError::Usage(format!("bad disturbance vector: {e}")))?
    } else {
        t.split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|e| CliError::Usage(format!("bad number `{s}`: {e}")))
            })
            .collect::<CliResult<_>>()?
    };
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(CliError::Usage("disturbance entries must be finite".into()));
    }
    Ok(DVector::from_vec(vals))
}

/// `evaluate`: prints `π(w)`.
pub fn cmd_evaluate(policy: &Path, w: &DVector<f64>) -> CliResult<(String, i32)> {
    let rp = load_policy(policy)?;
    let u = rp.evaluate(w)?;
    let doc = json!({
        "schema_version": SCHEMA_VERSION,
        "mode": rp.mode(),
        "w": w.iter().copied().collect::<Vec<f64>>(),
        "u": u.iter().copied().collect::<Vec<f64>>(),
    });
    Ok((to_sorted_json(&doc)?, EXIT_OK))
}

fn out_dir(out: Option<&Path>) -> CliResult<PathBuf> {
    let dir = out.map_or_else(|| PathBuf::from("."), Path::to_path_buf);
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn write_csv(path: &Path, header: &str, rows: &[String]) -> CliResult<()> {
    let mut text = String::from(header);
    text.push('\n');
    for r in rows {
        text.push_str(r);
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

/// `demo robustness`: volume table, set geometry and a containment check.
pub fn cmd_demo_robustness(flags: &SolverFlags, out: Option<&Path>) -> CliResult<(String, i32)> {
    let opts = flags.options()?;
    let study = apps::robustness_study(&apps::standard_robustness_sets(), &opts)?;
    let dir = out_dir(out)?;

    let table: Vec<String> = study
        .rows
        .iter()
        .map(|r| {
            format!(
                "{},{:?},{:?},{:?}",
                r.family,
                r.volume,
                100.0 * r.ratio,
                r.solve_time
            )
        })
        .collect();
    let table_path = dir.join("robustness_volumes.csv");
    write_csv(
        &table_path,
        "family,volume,ratio_percent,solve_time_s",
        &table,
    )?;

    let mut boundary = Vec::new();
    for r in &study.rows {
        for (i, p) in r.boundary.iter().enumerate() {
            boundary.push(format!("{},{i},{:?},{:?}", r.family, p[0], p[1]));
        }
    }
    for (i, p) in study.exact_boundary.iter().enumerate() {
        boundary.push(format!("exact,{i},{:?},{:?}", p[0], p[1]));
    }
    let boundary_path = dir.join("robustness_sets.csv");
    write_csv(&boundary_path, "family,index,w1,w2", &boundary)?;

    let sets: Vec<serde_json::Value> = study
        .rows
        .iter()
        .map(|r| {
            json!({
                "family": r.family,
                "status": r.status,
                "volume": r.volume,
                "Y": adjset::serde_mat::to_rows(&r.solution.y_mats[0]),
                "y": r.solution.y_vecs[0].iter().copied().collect::<Vec<f64>>(),
                "boundary": r.boundary,
            })
        })
        .collect();
    let sets_path = dir.join("robustness_sets.json");
    fs::write(&sets_path, to_sorted_json(&sets)?)?;

    // Every rectangle vertex must lie in the polytope hull.
    let rect = study.rows.iter().find(|r| r.family == "rectangle");
    let poly = study.rows.iter().find(|r| r.family.starts_with("polytope"));
    let contained = match (rect, poly) {
        (Some(r), Some(p)) => r
            .boundary
            .iter()
            .all(|v| hull_contains_2d(&p.boundary, v, 1e-6 * (1.0 + v[0].abs() + v[1].abs()))),
        _ => false,
    };
    let doc = json!({
        "schema_version": SCHEMA_VERSION,
        "exact_volume": study.exact_volume,
        "rows": study.rows.iter().map(|r| json!({
            "family": r.family,
            "volume": r.volume,
            "ratio_percent": 100.0 * r.ratio,
            "solve_time_s": r.solve_time,
            "status": r.status,
        })).collect::<Vec<_>>(),
        "rectangle_in_polytope": contained,
        "files": [table_path, boundary_path, sets_path],
    });
    let code = if contained { EXIT_OK } else { EXIT_SOLVER };
    Ok((to_sorted_json(&doc)?, code))
}

pub const DEFAULT_LAMBDAS: [f64; 10] =
    [0.0, 30.0, 50.0, 58.0, 62.0, 70.0, 90.0, 110.0, 140.0, 200.0];

pub struct ReserveDemo<'a> {
    pub prices: Option<&'a Path>,
    pub lambdas: Option<Vec<f64>>,
    pub capacity: CapacityMode,
    pub sequential: bool,
}

const DEFAULT_PRICES: &str = include_str!("../../../data/prices_weekday.csv");

/// `demo reserve`: capacity per stage and bid curve over a λ grid.
pub fn cmd_demo_reserve(
    demo: &ReserveDemo<'_>,
    flags: &SolverFlags,
    out: Option<&Path>,
) -> CliResult<(String, i32)> {
    let opts = flags.options()?;
    let prices = match demo.prices {
        Some(p) => apps::ingest_prices(p)?,
        None => apps::parse_prices_str(DEFAULT_PRICES)?,
    };
    let lambdas = demo
        .lambdas
        .clone()
        .unwrap_or_else(|| DEFAULT_LAMBDAS.to_vec());
    let rp = ReserveProblem::surrogate(prices, 0.0, demo.capacity)?;
    let exec = if demo.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    let curve = apps::bid_curve(&rp, &lambdas, &opts, exec)?;
    let dir = out_dir(out)?;

    let mut cap_rows = Vec::new();
    for b in &curve {
        for (k, y) in b.capacities.iter().enumerate() {
            cap_rows.push(format!("{:?},{k},{:?},{y:?}", b.lambda, rp.prices[k]));
        }
    }
    let cap_path = dir.join("reserve_capacity.csv");
    write_csv(&cap_path, "lambda,stage,price,capacity", &cap_rows)?;

    let bid_rows: Vec<String> = curve
        .iter()
        .map(|b| {
            format!(
                "{:?},{:?},{:?},{:?},{:?}",
                b.lambda, b.total_reserve, b.nominal_energy, b.min_energy, b.max_energy
            )
        })
        .collect();
    let bid_path = dir.join("reserve_bid_curve.csv");
    write_csv(
        &bid_path,
        "lambda,total_reserve,nominal_energy,min_energy,max_energy",
        &bid_rows,
    )?;

    let failures: Vec<_> = curve
        .iter()
        .filter_map(|b| {
            b.error
                .as_ref()
                .map(|e| json!({"lambda": b.lambda, "error": e}))
        })
        .collect();
    let monotone = curve.windows(2).all(|w| {
        w[1].total_reserve >= w[0].total_reserve - 1e-6 * (1.0 + w[0].total_reserve.abs())
    });
    let doc = json!({
        "schema_version": SCHEMA_VERSION,
        "lambdas": curve.iter().map(|b| b.lambda).collect::<Vec<_>>(),
        "total_reserve": curve.iter().map(|b| b.total_reserve).collect::<Vec<_>>(),
        "monotone": monotone,
        "failures": failures,
        "files": [cap_path, bid_path],
    });
    let code = if failures.is_empty() {
        EXIT_OK
    } else {
        EXIT_SOLVER
    };
    Ok((to_sorted_json(&doc)?, code))
}
