//! LTI system data, polytopic constraints, linear stage costs and the
//! horizon-stacked problem matrices `(c, C, D, d)`.
//!
//! The stacked form encodes, for an input sequence `u` and disturbance
//! sequence `w`, all stage constraints as `C u + D w <= d`. Rows are grouped
//! per stage: stage `k` holds the state rows on `x_{k+1}` followed by the
//! input rows on `u_k`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::conic::{self, ProgramBuilder, SolveOptions, SolveStatus};
use crate::error::{dim_check, Error, Result};
use crate::serde_mat;

fn check_finite_mat(name: &str, m: &DMatrix<f64>) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(name.to_string()))
    }
}

fn check_finite_vec(name: &str, v: &DVector<f64>) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(name.to_string()))
    }
}

/// `x+ = A x + B u + E w`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSystem {
    #[serde(with = "serde_mat::matrix")]
    a: DMatrix<f64>,
    #[serde(with = "serde_mat::matrix")]
    b: DMatrix<f64>,
    #[serde(with = "serde_mat::matrix")]
    e: DMatrix<f64>,
}

impl LinearSystem {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, e: DMatrix<f64>) -> Result<Self> {
        let nx = a.nrows();
        if nx == 0 {
            return Err(Error::InvalidArgument(
                "state dimension must be positive".into(),
            ));
        }
        dim_check("A columns", nx, a.ncols())?;
        dim_check("B rows", nx, b.nrows())?;
        dim_check("E rows", nx, e.nrows())?;
        check_finite_mat("A", &a)?;
        check_finite_mat("B", &b)?;
        check_finite_mat("E", &e)?;
        Ok(Self { a, b, e })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
    pub fn e(&self) -> &DMatrix<f64> {
        &self.e
    }
    pub fn nx(&self) -> usize {
        self.a.nrows()
    }
    pub fn nu(&self) -> usize {
        self.b.ncols()
    }
    pub fn nw(&self) -> usize {
        self.e.ncols()
    }

    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b * u + &self.e * w
    }
}

/// `{z : F z <= f}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolytopicSet {
    #[serde(with = "serde_mat::matrix")]
    f: DMatrix<f64>,
    #[serde(with = "serde_mat::vector")]
    rhs: DVector<f64>,
}

impl PolytopicSet {
    pub fn new(f: DMatrix<f64>, rhs: DVector<f64>) -> Result<Self> {
        dim_check("polytope rows", f.nrows(), rhs.len())?;
        check_finite_mat("F", &f)?;
        check_finite_vec("f", &rhs)?;
        Ok(Self { f, rhs })
    }

    /// Axis-aligned box `lo <= z <= hi`.
    pub fn boxed(lo: &[f64], hi: &[f64]) -> Result<Self> {
        dim_check("box bounds", lo.len(), hi.len())?;
        let n = lo.len();
        let mut f = DMatrix::zeros(2 * n, n);
        let mut rhs = DVector::zeros(2 * n);
        for i in 0..n {
            f[(2 * i, i)] = 1.0;
            rhs[2 * i] = hi[i];
            f[(2 * i + 1, i)] = -1.0;
            rhs[2 * i + 1] = -lo[i];
        }
        Self::new(f, rhs)
    }

    /// The whole space in `dim` dimensions (no rows).
    pub fn unconstrained(dim: usize) -> Self {
        Self {
            f: DMatrix::zeros(0, dim),
            rhs: DVector::zeros(0),
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.f
    }
    pub fn rhs(&self) -> &DVector<f64> {
        &self.rhs
    }
    pub fn dim(&self) -> usize {
        self.f.ncols()
    }
    pub fn rows(&self) -> usize {
        self.f.nrows()
    }

    /// Largest row violation `max_i (F z - f)_i`, or `-inf` with no rows.
    pub fn max_violation(&self, z: &DVector<f64>) -> f64 {
        (&self.f * z - &self.rhs)
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn contains(&self, z: &DVector<f64>, tol: f64) -> bool {
        self.max_violation(z) <= tol
    }

    /// Nonemptiness via a feasibility LP.
    pub fn is_nonempty(&self) -> Result<bool> {
        let n = self.dim();
        let mut b = ProgramBuilder::new();
        let z = b.add_free(n);
        for i in 0..self.rows() {
            let terms: Vec<_> = (0..n)
                .filter(|&j| self.f[(i, j)] != 0.0)
                .map(|j| (z.start + j, self.f[(i, j)]))
                .collect();
            b.add_ineq(terms, self.rhs[i]);
        }
        let prog = b.build();
        let report = conic::solve_builtin(&prog, &SolveOptions::default())?;
        Ok(report.status == SolveStatus::Optimal)
    }
}

/// Linear stage cost `q_xᵀ x_{k+1} + q_uᵀ u_k` and terminal cost `q_fᵀ x_N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageCost {
    #[serde(with = "serde_mat::vector")]
    pub state: DVector<f64>,
    #[serde(with = "serde_mat::vector")]
    pub input: DVector<f64>,
    #[serde(with = "serde_mat::vector")]
    pub terminal: DVector<f64>,
}

impl StageCost {
    pub fn zero(nx: usize, nu: usize) -> Self {
        Self {
            state: DVector::zeros(nx),
            input: DVector::zeros(nu),
            terminal: DVector::zeros(nx),
        }
    }

    /// `J` evaluated on a trajectory `x_1..x_N` and inputs `u_0..u_{N-1}`.
    pub fn evaluate(&self, states: &[DVector<f64>], inputs: &[DVector<f64>]) -> f64 {
        let running: f64 = states
            .iter()
            .zip(inputs)
            .map(|(x, u)| self.state.dot(x) + self.input.dot(u))
            .sum();
        running + states.last().map_or(0.0, |x| self.terminal.dot(x))
    }
}

/// Whether an input may react to the disturbance of its own stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputCausality {
    Causal,
    StrictlyCausal,
}

/// Per-input dependency pattern, shared by all stages.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CausalityMask {
    inputs: Vec<InputCausality>,
}

impl CausalityMask {
    pub fn causal(nu: usize) -> Self {
        Self {
            inputs: vec![InputCausality::Causal; nu],
        }
    }

    pub fn new(inputs: Vec<InputCausality>) -> Self {
        Self { inputs }
    }

    pub fn inputs(&self) -> &[InputCausality] {
        &self.inputs
    }

    pub fn nu(&self) -> usize {
        self.inputs.len()
    }

    /// Can input `input` applied at stage `input_stage` depend on the
    /// disturbance of stage `dist_stage`?
    pub fn allows(&self, input_stage: usize, input: usize, dist_stage: usize) -> bool {
        match self.inputs[input] {
            InputCausality::Causal => dist_stage <= input_stage,
            InputCausality::StrictlyCausal => dist_stage < input_stage,
        }
    }
}

/// The robust OCP in stacked form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackedProblem {
    pub horizon: usize,
    pub nu: usize,
    pub nw: usize,
    #[serde(with = "serde_mat::vector")]
    pub c: DVector<f64>,
    #[serde(with = "serde_mat::matrix")]
    pub cmat: DMatrix<f64>,
    #[serde(with = "serde_mat::matrix")]
    pub dmat: DMatrix<f64>,
    #[serde(with = "serde_mat::vector")]
    pub d: DVector<f64>,
    pub causality: CausalityMask,
    /// Cost contribution of `x0` and known affine terms, not part of `cᵀu`.
    pub cost_constant: f64,
}

impl StackedProblem {
    /// Builds a stacked problem directly from its matrices.
    pub fn from_parts(
        horizon: usize,
        c: DVector<f64>,
        cmat: DMatrix<f64>,
        dmat: DMatrix<f64>,
        d: DVector<f64>,
        causality: CausalityMask,
    ) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::InvalidArgument("horizon must be at least 1".into()));
        }
        let rows = d.len();
        dim_check("C rows", rows, cmat.nrows())?;
        dim_check("D rows", rows, dmat.nrows())?;
        dim_check("c length", cmat.ncols(), c.len())?;
        if !cmat.ncols().is_multiple_of(horizon) || !dmat.ncols().is_multiple_of(horizon) {
            return Err(Error::InvalidArgument(
                "input/disturbance columns must be a multiple of the horizon".into(),
            ));
        }
        let nu = cmat.ncols() / horizon;
        let nw = dmat.ncols() / horizon;
        dim_check("causality mask", nu, causality.nu())?;
        check_finite_mat("C", &cmat)?;
        check_finite_mat("D", &dmat)?;
        check_finite_vec("d", &d)?;
        check_finite_vec("c", &c)?;
        Ok(Self {
            horizon,
            nu,
            nw,
            c,
            cmat,
            dmat,
            d,
            causality,
            cost_constant: 0.0,
        })
    }

    pub fn rows(&self) -> usize {
        self.d.len()
    }

    pub fn with_causality(mut self, mask: CausalityMask) -> Result<Self> {
        dim_check("causality mask", self.nu, mask.nu())?;
        self.causality = mask;
        Ok(self)
    }

    /// Appends rows `C_new u + D_new w <= d_new`.
    pub fn append_rows(
        &mut self,
        cmat: &DMatrix<f64>,
        dmat: &DMatrix<f64>,
        d: &DVector<f64>,
    ) -> Result<()> {
        dim_check("appended C columns", self.cmat.ncols(), cmat.ncols())?;
        dim_check("appended D columns", self.dmat.ncols(), dmat.ncols())?;
        dim_check("appended C rows", d.len(), cmat.nrows())?;
        dim_check("appended D rows", d.len(), dmat.nrows())?;
        let old = self.rows();
        let new = old + d.len();
        let mut c2 = DMatrix::zeros(new, self.cmat.ncols());
        let mut d2 = DMatrix::zeros(new, self.dmat.ncols());
        c2.rows_mut(0, old).copy_from(&self.cmat);
        c2.rows_mut(old, d.len()).copy_from(cmat);
        d2.rows_mut(0, old).copy_from(&self.dmat);
        d2.rows_mut(old, d.len()).copy_from(dmat);
        let mut rhs = DVector::zeros(new);
        rhs.rows_mut(0, old).copy_from(&self.d);
        rhs.rows_mut(old, d.len()).copy_from(d);
        self.cmat = c2;
        self.dmat = d2;
        self.d = rhs;
        Ok(())
    }

    /// `C u + D w - d`.
    pub fn residual(&self, u: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        &self.cmat * u + &self.dmat * w - &self.d
    }

    /// Feasibility of the zero-disturbance problem `C u <= d`.
    pub fn nominal_feasible(&self) -> Result<bool> {
        let n = self.cmat.ncols();
        let mut b = ProgramBuilder::new();
        let u = b.add_free(n);
        for i in 0..self.rows() {
            let terms: Vec<_> = (0..n)
                .filter(|&j| self.cmat[(i, j)] != 0.0)
                .map(|j| (u.start + j, self.cmat[(i, j)]))
                .collect();
            b.add_ineq(terms, self.d[i]);
        }
        let prog = b.build();
        let report = conic::solve_builtin(&prog, &SolveOptions::default())?;
        Ok(report.status == SolveStatus::Optimal)
    }
}

/// All data for a stacked build. `offsets`, when present, adds a known term
/// `e_k` to the dynamics: `x_{k+1} = A x_k + B u_k + E w_k + e_k`.
#[derive(Debug, Clone)]
pub struct OcpData<'a> {
    pub system: &'a LinearSystem,
    pub state_set: &'a PolytopicSet,
    pub input_set: &'a PolytopicSet,
    pub cost: &'a StageCost,
    pub x0: &'a DVector<f64>,
    pub horizon: usize,
    pub offsets: Option<&'a [DVector<f64>]>,
}

/// Stacks constraints `x_k ∈ X (k=1..N)`, `u_k ∈ U (k=0..N-1)` and the
/// linear cost into `(c, C, D, d)`. All inputs start out causal.
pub fn build_stacked(
    system: &LinearSystem,
    state_set: &PolytopicSet,
    input_set: &PolytopicSet,
    cost: &StageCost,
    x0: &DVector<f64>,
    horizon: usize,
) -> Result<StackedProblem> {
    build_stacked_with(&OcpData {
        system,
        state_set,
        input_set,
        cost,
        x0,
        horizon,
        offsets: None,
    })
}

pub fn build_stacked_with(data: &OcpData<'_>) -> Result<StackedProblem> {
    let sys = data.system;
    let (nx, nu, nw) = (sys.nx(), sys.nu(), sys.nw());
    let n = data.horizon;
    if n == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    dim_check("state constraint dimension", nx, data.state_set.dim())?;
    dim_check("input constraint dimension", nu, data.input_set.dim())?;
    dim_check("x0", nx, data.x0.len())?;
    dim_check("stage state cost", nx, data.cost.state.len())?;
    dim_check("stage input cost", nu, data.cost.input.len())?;
    dim_check("terminal cost", nx, data.cost.terminal.len())?;
    check_finite_vec("x0", data.x0)?;
    if let Some(off) = data.offsets {
        dim_check("offset sequence", n, off.len())?;
        for e in off {
            dim_check("offset", nx, e.len())?;
            check_finite_vec("offset", e)?;
        }
    }

    // powers[k] = A^k
    let mut powers = Vec::with_capacity(n + 1);
    powers.push(DMatrix::identity(nx, nx));
    for k in 1..=n {
        powers.push(sys.a() * &powers[k - 1]);
    }

    // Free response x_{k+1} without inputs or disturbances.
    let mut free = Vec::with_capacity(n);
    let mut x = data.x0.clone();
    for k in 0..n {
        x = sys.a() * &x;
        if let Some(off) = data.offsets {
            x += &off[k];
        }
        free.push(x.clone());
    }

    let fx = data.state_set.matrix();
    let fu = data.input_set.matrix();
    let (nf, ng) = (fx.nrows(), fu.nrows());
    let rows_per_stage = nf + ng;
    let rows = n * rows_per_stage;
    let mut cmat = DMatrix::zeros(rows, n * nu);
    let mut dmat = DMatrix::zeros(rows, n * nw);
    let mut d = DVector::zeros(rows);

    for k in 0..n {
        let r0 = k * rows_per_stage;
        for j in 0..=k {
            let ab = fx * &powers[k - j] * sys.b();
            let ae = fx * &powers[k - j] * sys.e();
            cmat.view_mut((r0, j * nu), (nf, nu)).copy_from(&ab);
            dmat.view_mut((r0, j * nw), (nf, nw)).copy_from(&ae);
        }
        let rhs = data.state_set.rhs() - fx * &free[k];
        d.rows_mut(r0, nf).copy_from(&rhs);
        cmat.view_mut((r0 + nf, k * nu), (ng, nu)).copy_from(fu);
        d.rows_mut(r0 + nf, ng).copy_from(data.input_set.rhs());
    }

    // c_j = q_u + Σ_{k>=j} (A^{k-j} B)ᵀ q_x + (A^{N-1-j} B)ᵀ q_f
    let mut c = DVector::zeros(n * nu);
    for j in 0..n {
        let mut cj = data.cost.input.clone();
        for k in j..n {
            cj += (&powers[k - j] * sys.b()).transpose() * &data.cost.state;
        }
        cj += (&powers[n - 1 - j] * sys.b()).transpose() * &data.cost.terminal;
        c.rows_mut(j * nu, nu).copy_from(&cj);
    }
    let cost_constant = free.iter().map(|x| data.cost.state.dot(x)).sum::<f64>()
        + data.cost.terminal.dot(&free[n - 1]);

    let mut sp = StackedProblem::from_parts(n, c, cmat, dmat, d, CausalityMask::causal(nu))?;
    sp.cost_constant = cost_constant;
    Ok(sp)
}

/// Forward recursion; returns `x_1..x_N`.
pub fn simulate(
    system: &LinearSystem,
    x0: &DVector<f64>,
    inputs: &[DVector<f64>],
    disturbances: &[DVector<f64>],
) -> Result<Vec<DVector<f64>>> {
    simulate_with_offsets(system, x0, inputs, disturbances, None)
}

pub fn simulate_with_offsets(
    system: &LinearSystem,
    x0: &DVector<f64>,
    inputs: &[DVector<f64>],
    disturbances: &[DVector<f64>],
    offsets: Option<&[DVector<f64>]>,
) -> Result<Vec<DVector<f64>>> {
    dim_check(
        "disturbance sequence length",
        inputs.len(),
        disturbances.len(),
    )?;
    if let Some(off) = offsets {
        dim_check("offset sequence length", inputs.len(), off.len())?;
    }
    dim_check("x0", system.nx(), x0.len())?;
    let mut x = x0.clone();
    let mut out = Vec::with_capacity(inputs.len());
    for (k, (u, w)) in inputs.iter().zip(disturbances).enumerate() {
        dim_check("input", system.nu(), u.len())?;
        dim_check("disturbance", system.nw(), w.len())?;
        x = system.step(&x, u, w);
        if let Some(off) = offsets {
            x += &off[k];
        }
        out.push(x.clone());
    }
    Ok(out)
}

/// Splits a stacked vector into `n` blocks of length `block`.
pub fn split_blocks(v: &DVector<f64>, block: usize) -> Vec<DVector<f64>> {
    if block == 0 {
        return Vec::new();
    }
    v.as_slice()
        .chunks(block)
        .map(DVector::from_column_slice)
        .collect()
}

/// Concatenates per-stage blocks.
pub fn stack_blocks(blocks: &[DVector<f64>]) -> DVector<f64> {
    DVector::from_iterator(
        blocks.iter().map(|b| b.len()).sum(),
        blocks.iter().flat_map(|b| b.iter().copied()),
    )
}
