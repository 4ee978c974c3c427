//! Solver-independent conic program representation, KKT residual checks and
//! the backend registry.
//!
//! A [`ConicProgram`] minimizes
//!
//! ```text
//! cᵀx - Σ w_i φ_i(x)
//! s.t. Aeq x = beq,  Ain x <= bin,  x[slice_j] ∈ K_j
//! ```
//!
//! where each `φ_i` is a concave term (`log x_i`, the square root of a 2×2
//! determinant, or a symbolic `log det` that only SDP-capable backends take).
//!
//! The builtin backend lowers programs onto the Clarabel interior-point
//! solver. Other backends run as external processes exchanging JSON files.

use std::collections::BTreeMap;
use std::ops::Range;
use std::path::PathBuf;
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};
use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BUILTIN_BACKEND: &str = "builtin";
pub const PROGRAM_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConeKind {
    /// `x >= 0` componentwise.
    Nonnegative,
    /// `x_0 >= ‖x_{1..}‖₂`.
    SecondOrder,
    /// `2 x_0 x_1 >= ‖x_{2..}‖₂²`, `x_0, x_1 >= 0`.
    RotatedSecondOrder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cone {
    pub kind: ConeKind,
    pub dim: usize,
}

impl Cone {
    pub fn new(kind: ConeKind, dim: usize) -> Result<Self> {
        let min = match kind {
            ConeKind::Nonnegative => 1,
            ConeKind::SecondOrder => 2,
            ConeKind::RotatedSecondOrder => 3,
        };
        if dim < min {
            return Err(Error::InvalidArgument(format!(
                "{kind:?} cone needs dimension >= {min}, got {dim}"
            )));
        }
        Ok(Self { kind, dim })
    }

    pub fn nonnegative(dim: usize) -> Self {
        Self {
            kind: ConeKind::Nonnegative,
            dim: dim.max(1),
        }
    }

    pub fn second_order(dim: usize) -> Self {
        Self {
            kind: ConeKind::SecondOrder,
            dim: dim.max(2),
        }
    }

    pub fn rotated(dim: usize) -> Self {
        Self {
            kind: ConeKind::RotatedSecondOrder,
            dim: dim.max(3),
        }
    }

    /// All three kinds are self-dual (the rotated cone with the factor 2).
    pub fn dual(&self) -> Cone {
        *self
    }

    /// Amount by which `x` leaves the cone; zero inside.
    pub fn violation(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        match self.kind {
            ConeKind::Nonnegative => x.iter().fold(0.0, |m, v| m.max(-v)),
            ConeKind::SecondOrder => soc_violation(x[0], &x[1..]),
            ConeKind::RotatedSecondOrder => {
                let mut u = x.to_vec();
                rsoc_to_soc(&mut u);
                soc_violation(u[0], &u[1..])
            }
        }
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        self.violation(x) <= tol
    }

    pub fn dual_contains(&self, z: &[f64], tol: f64) -> bool {
        self.dual().contains(z, tol)
    }
}

fn soc_violation(t: f64, rest: &[f64]) -> f64 {
    let n = rest.iter().map(|v| v * v).sum::<f64>().sqrt();
    (n - t).max(0.0)
}

/// In-place change of coordinates mapping the rotated cone onto the standard
/// second-order cone. The map is symmetric and its own inverse.
fn rsoc_to_soc(x: &mut [f64]) {
    let (a, b) = (x[0], x[1]);
    x[0] = (a + b) / std::f64::consts::SQRT_2;
    x[1] = (a - b) / std::f64::consts::SQRT_2;
}

/// A cone membership on a contiguous variable slice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConeBlock {
    pub start: usize,
    #[serde(flatten)]
    pub cone: Cone,
}

impl ConeBlock {
    pub fn range(&self) -> Range<usize> {
        self.start..self.start + self.cone.dim
    }
}

/// A symmetric matrix variable given by the indices of its entries, required
/// to be positive semidefinite. Only SDP-capable backends accept these.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsdBlock {
    pub indices: Vec<Vec<usize>>,
}

/// Concave objective terms; the program maximizes `weight * term`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ConcaveTerm {
    /// `log x[index]`.
    Log { index: usize, weight: f64 },
    /// `sqrt(x[a] x[b] - x[c]²)`, the square root of det `[[a, c], [c, b]]`.
    /// Its domain also forces the matrix to be positive semidefinite.
    RootDet2x2 {
        a: usize,
        b: usize,
        c: usize,
        weight: f64,
    },
    /// `log det` of a symmetric matrix of variables.
    LogDet {
        indices: Vec<Vec<usize>>,
        weight: f64,
    },
}

impl ConcaveTerm {
    pub fn weight(&self) -> f64 {
        match self {
            ConcaveTerm::Log { weight, .. }
            | ConcaveTerm::RootDet2x2 { weight, .. }
            | ConcaveTerm::LogDet { weight, .. } => *weight,
        }
    }

    /// Value at `x`; `-inf` outside the domain.
    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            ConcaveTerm::Log { index, .. } => {
                let v = x[*index];
                if v > 0.0 {
                    v.ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            ConcaveTerm::RootDet2x2 { a, b, c, .. } => {
                let (a, b, c) = (x[*a], x[*b], x[*c]);
                let det = a * b - c * c;
                if a >= 0.0 && b >= 0.0 && det >= 0.0 {
                    det.sqrt()
                } else {
                    f64::NEG_INFINITY
                }
            }
            ConcaveTerm::LogDet { indices, .. } => {
                let m = gather_sym(indices, x);
                match m.cholesky() {
                    Some(ch) => 2.0 * ch.l().diagonal().iter().map(|d| d.ln()).sum::<f64>(),
                    None => f64::NEG_INFINITY,
                }
            }
        }
    }

    /// Adds `weight * ∇term(x)` into `grad`. Returns false if the gradient
    /// does not exist at `x`.
    fn add_gradient(&self, x: &[f64], grad: &mut [f64]) -> bool {
        let w = self.weight();
        match self {
            ConcaveTerm::Log { index, .. } => {
                let v = x[*index];
                if v <= 0.0 {
                    return w == 0.0;
                }
                grad[*index] += w / v;
                true
            }
            ConcaveTerm::RootDet2x2 { a, b, c, .. } => {
                let (va, vb, vc) = (x[*a], x[*b], x[*c]);
                let s = (va * vb - vc * vc).max(0.0).sqrt();
                if s <= 0.0 {
                    return w == 0.0;
                }
                grad[*a] += w * vb / (2.0 * s);
                grad[*b] += w * va / (2.0 * s);
                grad[*c] -= w * vc / s;
                true
            }
            ConcaveTerm::LogDet { indices, .. } => {
                let m = gather_sym(indices, x);
                let Some(inv) = m.clone().cholesky().map(|c| c.inverse()) else {
                    return w == 0.0;
                };
                let n = indices.len();
                for i in 0..n {
                    for j in 0..n {
                        grad[indices[i][j]] += w * inv[(i, j)];
                    }
                }
                true
            }
        }
    }

    /// Contribution of this term's cone lifting at `x` with hypograph
    /// variable `t = φ(x)` and cone multipliers `z`: adds `-(Mᵀz)` restricted
    /// to the original variables into `neg_grad` (with sign so that it plays
    /// the role of the concave gradient), and returns the stationarity
    /// residual of `t`, `⟨s, z⟩` and the dual cone violation of `z`.
    fn lifted_terms(&self, x: &[f64], z: &[f64], neg_grad: &mut [f64]) -> LiftedTerms {
        let w = self.weight();
        match self {
            ConcaveTerm::Log { index, .. } => {
                let t = self.value(x);
                let t = if t.is_finite() { t } else { 0.0 };
                neg_grad[*index] += z[2];
                LiftedTerms {
                    aux_stationarity: -w - z[0],
                    complementarity: t * z[0] + z[1] + x[*index] * z[2],
                    dual_violation: exp_dual_violation(z),
                }
            }
            ConcaveTerm::RootDet2x2 { a, b, c, .. } => {
                let r = std::f64::consts::FRAC_1_SQRT_2;
                let t = self.value(x);
                let t = if t.is_finite() { t } else { 0.0 };
                neg_grad[*a] += r * (z[0] + z[1]);
                neg_grad[*b] += 0.5 * r * (z[0] - z[1]);
                neg_grad[*c] += z[2];
                let s = [
                    r * (x[*a] + 0.5 * x[*b]),
                    r * (x[*a] - 0.5 * x[*b]),
                    x[*c],
                    t,
                ];
                LiftedTerms {
                    aux_stationarity: -w - z[3],
                    complementarity: s.iter().zip(z).map(|(p, q)| p * q).sum(),
                    dual_violation: Cone::second_order(4).violation(z),
                }
            }
            ConcaveTerm::LogDet { .. } => LiftedTerms {
                aux_stationarity: f64::INFINITY,
                complementarity: 0.0,
                dual_violation: 0.0,
            },
        }
    }

    fn indices(&self) -> Vec<usize> {
        match self {
            ConcaveTerm::Log { index, .. } => vec![*index],
            ConcaveTerm::RootDet2x2 { a, b, c, .. } => vec![*a, *b, *c],
            ConcaveTerm::LogDet { indices, .. } => indices.iter().flatten().copied().collect(),
        }
    }
}

struct LiftedTerms {
    aux_stationarity: f64,
    complementarity: f64,
    dual_violation: f64,
}

/// Violation of the dual exponential cone
/// `{z : z1 < 0, -z1 exp(z2/z1 - 1) <= z3} ∪ {z1 = 0, z2, z3 >= 0}`.
fn exp_dual_violation(z: &[f64]) -> f64 {
    if z[0] < 0.0 {
        (-z[0] * (z[1] / z[0] - 1.0).exp() - z[2]).max(0.0)
    } else {
        z[0].max(-z[1]).max(-z[2]).max(0.0)
    }
}

fn gather_sym(indices: &[Vec<usize>], x: &[f64]) -> DMatrix<f64> {
    let n = indices.len();
    DMatrix::from_fn(n, n, |i, j| 0.5 * (x[indices[i][j]] + x[indices[j][i]]))
}

/// Sparse rows `A x (=|<=) rhs` stored as triplets.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseRows {
    pub rows: usize,
    pub triplets: Vec<(usize, usize, f64)>,
    pub rhs: Vec<f64>,
}

impl SparseRows {
    pub fn push(&mut self, terms: impl IntoIterator<Item = (usize, f64)>, rhs: f64) -> usize {
        let r = self.rows;
        self.triplets.extend(
            terms
                .into_iter()
                .filter(|t| t.1 != 0.0)
                .map(|(c, v)| (r, c, v)),
        );
        self.rhs.push(rhs);
        self.rows += 1;
        r
    }

    /// `A x` (duplicates summed).
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows];
        for &(r, c, v) in &self.triplets {
            out[r] += v * x[c];
        }
        out
    }

    /// Adds `Aᵀ y` into `out`.
    pub fn apply_transpose_into(&self, y: &[f64], out: &mut [f64]) {
        for &(r, c, v) in &self.triplets {
            out[c] += v * y[r];
        }
    }
}

/// Named variable range, kept for census dumps and debugging.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VarLabel {
    pub name: String,
    pub start: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConicProgram {
    pub schema_version: u32,
    pub n: usize,
    /// Linear objective as `(index, coefficient)` pairs.
    pub objective: Vec<(usize, f64)>,
    pub concave: Vec<ConcaveTerm>,
    pub equalities: SparseRows,
    pub inequalities: SparseRows,
    pub cones: Vec<ConeBlock>,
    pub psd: Vec<PsdBlock>,
    pub requires_sdp: bool,
    #[serde(default)]
    pub labels: Vec<VarLabel>,
}

impl ConicProgram {
    pub fn objective_vector(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.n];
        for &(i, v) in &self.objective {
            c[i] += v;
        }
        c
    }

    /// Objective value `cᵀx - Σ w φ(x)`.
    pub fn objective_value(&self, x: &[f64]) -> f64 {
        let lin: f64 = self.objective.iter().map(|&(i, v)| v * x[i]).sum();
        let conc: f64 = self
            .concave
            .iter()
            .filter(|t| t.weight() != 0.0)
            .map(|t| t.weight() * t.value(x))
            .sum();
        lin - conc
    }

    /// Structural checks: indices in range, disjoint cone slices, row counts.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        for rows in [&self.equalities, &self.inequalities] {
            if rows.rhs.len() != rows.rows {
                return bad("row count differs from rhs length".into());
            }
            for &(r, c, v) in &rows.triplets {
                if r >= rows.rows || c >= self.n {
                    return bad(format!("triplet ({r}, {c}) out of range"));
                }
                if !v.is_finite() {
                    return Err(Error::NonFinite("constraint coefficient".into()));
                }
            }
            if rows.rhs.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("constraint right-hand side".into()));
            }
        }
        if self
            .objective
            .iter()
            .any(|&(i, v)| i >= self.n || !v.is_finite())
        {
            return bad("objective entry out of range or non-finite".into());
        }
        let mut owner = vec![false; self.n];
        for b in &self.cones {
            Cone::new(b.cone.kind, b.cone.dim)?;
            if b.start + b.cone.dim > self.n {
                return bad(format!("cone block at {} exceeds variable count", b.start));
            }
            for i in b.range() {
                if owner[i] {
                    return bad(format!("variable {i} belongs to two cone blocks"));
                }
                owner[i] = true;
            }
        }
        for t in &self.concave {
            if t.indices().iter().any(|&i| i >= self.n) {
                return bad("concave term index out of range".into());
            }
        }
        for p in &self.psd {
            if p.indices.iter().flatten().any(|&i| i >= self.n) {
                return bad("psd block index out of range".into());
            }
        }
        Ok(())
    }

    pub fn census(&self) -> ProgramCensus {
        let mut cones: BTreeMap<String, usize> = BTreeMap::new();
        for b in &self.cones {
            let key = match b.cone.kind {
                ConeKind::Nonnegative => "nonnegative",
                ConeKind::SecondOrder => "second-order",
                ConeKind::RotatedSecondOrder => "rotated-second-order",
            };
            *cones.entry(key.to_string()).or_default() += 1;
        }
        ProgramCensus {
            variables: self.n,
            equality_rows: self.equalities.rows,
            inequality_rows: self.inequalities.rows,
            cone_blocks: cones,
            concave_terms: self.concave.len(),
            psd_blocks: self.psd.len(),
            requires_sdp: self.requires_sdp,
            blocks: self.labels.clone(),
        }
    }
}

/// Size summary of a program.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProgramCensus {
    pub variables: usize,
    pub equality_rows: usize,
    pub inequality_rows: usize,
    pub cone_blocks: BTreeMap<String, usize>,
    pub concave_terms: usize,
    pub psd_blocks: usize,
    pub requires_sdp: bool,
    pub blocks: Vec<VarLabel>,
}

/// Incremental construction of a [`ConicProgram`]. Variables placed in a cone
/// are created together with their block, so slices can never overlap.
#[derive(Debug, Default)]
pub struct ProgramBuilder {
    n: usize,
    objective: Vec<(usize, f64)>,
    concave: Vec<ConcaveTerm>,
    eq: SparseRows,
    ineq: SparseRows,
    cones: Vec<ConeBlock>,
    psd: Vec<PsdBlock>,
    requires_sdp: bool,
    labels: Vec<VarLabel>,
}

impl ProgramBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.n
    }

    pub fn add_free(&mut self, len: usize) -> Range<usize> {
        let r = self.n..self.n + len;
        self.n += len;
        r
    }

    pub fn add_named(&mut self, name: &str, len: usize) -> Range<usize> {
        let r = self.add_free(len);
        self.label(name, r.clone());
        r
    }

    pub fn label(&mut self, name: &str, r: Range<usize>) {
        if !r.is_empty() {
            self.labels.push(VarLabel {
                name: name.to_string(),
                start: r.start,
                len: r.len(),
            });
        }
    }

    /// New variables constrained to `cone`.
    pub fn add_cone_vars(&mut self, cone: Cone) -> Range<usize> {
        let r = self.add_free(cone.dim);
        self.cones.push(ConeBlock {
            start: r.start,
            cone,
        });
        r
    }

    pub fn add_nonneg(&mut self, len: usize) -> Range<usize> {
        if len == 0 {
            return self.n..self.n;
        }
        self.add_cone_vars(Cone::nonnegative(len))
    }

    pub fn add_objective(&mut self, index: usize, coeff: f64) {
        if coeff != 0.0 {
            self.objective.push((index, coeff));
        }
    }

    pub fn add_concave(&mut self, term: ConcaveTerm) {
        if matches!(term, ConcaveTerm::LogDet { .. }) {
            self.requires_sdp = true;
        }
        self.concave.push(term);
    }

    pub fn add_eq(&mut self, terms: impl IntoIterator<Item = (usize, f64)>, rhs: f64) -> usize {
        self.eq.push(terms, rhs)
    }

    pub fn add_ineq(&mut self, terms: impl IntoIterator<Item = (usize, f64)>, rhs: f64) -> usize {
        self.ineq.push(terms, rhs)
    }

    pub fn add_psd(&mut self, indices: Vec<Vec<usize>>) {
        self.requires_sdp = true;
        self.psd.push(PsdBlock { indices });
    }

    pub fn build(self) -> ConicProgram {
        ConicProgram {
            schema_version: PROGRAM_SCHEMA_VERSION,
            n: self.n,
            objective: self.objective,
            concave: self.concave,
            equalities: self.eq,
            inequalities: self.ineq,
            cones: self.cones,
            psd: self.psd,
            requires_sdp: self.requires_sdp,
            labels: self.labels,
        }
    }
}

/// Lagrange multipliers in program coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Duals {
    pub eq: Vec<f64>,
    pub ineq: Vec<f64>,
    /// One vector per cone block, in the dual cone.
    pub cones: Vec<Vec<f64>>,
    /// Multipliers of each concave term's cone lifting: `(t, 1, x)` in the
    /// exponential cone for `Log`, `((a + b/2)/√2, (a - b/2)/√2, c, t)` in the
    /// second-order cone for `RootDet2x2`.
    #[serde(default)]
    pub concave: Vec<Vec<f64>>,
}

/// Residual summary. Relative values divide by `max(1, scale)` of the
/// corresponding data; absolute values are the raw violations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktResiduals {
    pub primal_abs: f64,
    pub primal: f64,
    pub dual: Option<f64>,
    pub complementarity: Option<f64>,
}

impl KktResiduals {
    pub fn max_residual(&self) -> f64 {
        self.primal
            .max(self.dual.unwrap_or(0.0))
            .max(self.complementarity.unwrap_or(0.0))
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Primal feasibility, stationarity and complementarity residuals of `x`
/// (and, when given, of the multipliers).
pub fn check_kkt(prog: &ConicProgram, x: &[f64], duals: Option<&Duals>) -> KktResiduals {
    assert_eq!(x.len(), prog.n, "point dimension");
    let eq_val = prog.equalities.apply(x);
    let ineq_val = prog.inequalities.apply(x);
    let mut viol: f64 = 0.0;
    for (v, b) in eq_val.iter().zip(&prog.equalities.rhs) {
        viol = viol.max((v - b).abs());
    }
    let slack: Vec<f64> = ineq_val
        .iter()
        .zip(&prog.inequalities.rhs)
        .map(|(v, b)| b - v)
        .collect();
    for s in &slack {
        viol = viol.max(-s);
    }
    for b in &prog.cones {
        viol = viol.max(b.cone.violation(&x[b.range()]));
    }
    for p in &prog.psd {
        let m = gather_sym(&p.indices, x);
        let min_eig = SymmetricEigen::new(m).eigenvalues.min();
        viol = viol.max(-min_eig);
    }
    for t in &prog.concave {
        if t.weight() != 0.0 && !t.value(x).is_finite() {
            viol = f64::INFINITY;
        }
    }
    let primal_scale = 1f64
        .max(inf_norm(&prog.equalities.rhs))
        .max(inf_norm(&prog.inequalities.rhs))
        .max(inf_norm(x));
    let primal = viol / primal_scale;

    let (dual, complementarity) = match duals {
        None => (None, None),
        Some(d) => {
            let mut grad = prog.objective_vector();
            let c_norm = inf_norm(&grad);
            // Concave terms enter either through the multipliers of their
            // cone lifting or, when those are absent, through the gradient.
            let lifted = d.concave.len() == prog.concave.len();
            let mut conc = vec![0.0; prog.n];
            let mut ok = true;
            let mut aux_stat: f64 = 0.0;
            let mut aux_comp = 0.0;
            let mut dual_cone_viol: f64 = 0.0;
            for (k, t) in prog.concave.iter().enumerate() {
                if lifted {
                    let l = t.lifted_terms(x, &d.concave[k], &mut conc);
                    aux_stat = aux_stat.max(l.aux_stationarity.abs());
                    aux_comp += l.complementarity;
                    dual_cone_viol = dual_cone_viol.max(l.dual_violation);
                } else {
                    ok &= t.add_gradient(x, &mut conc);
                }
            }
            for (g, h) in grad.iter_mut().zip(&conc) {
                *g -= h;
            }
            let mut aeq = vec![0.0; prog.n];
            prog.equalities.apply_transpose_into(&d.eq, &mut aeq);
            let mut ain = vec![0.0; prog.n];
            prog.inequalities.apply_transpose_into(&d.ineq, &mut ain);
            let mut zfull = vec![0.0; prog.n];
            for (b, z) in prog.cones.iter().zip(&d.cones) {
                for (k, i) in b.range().enumerate() {
                    zfull[i] += z[k];
                }
                dual_cone_viol = dual_cone_viol.max(b.cone.dual().violation(z));
            }
            for eta in &d.ineq {
                dual_cone_viol = dual_cone_viol.max(-eta);
            }
            let stat: Vec<f64> = (0..prog.n)
                .map(|i| grad[i] + aeq[i] + ain[i] - zfull[i])
                .collect();
            let dual_scale = 1f64
                .max(c_norm)
                .max(inf_norm(&conc))
                .max(inf_norm(&aeq))
                .max(inf_norm(&ain))
                .max(inf_norm(&zfull));
            let dual = if ok && !prog.requires_sdp {
                inf_norm(&stat).max(aux_stat).max(dual_cone_viol) / dual_scale
            } else {
                f64::INFINITY
            };
            let comp: f64 = d.ineq.iter().zip(&slack).map(|(e, s)| e * s).sum::<f64>()
                + prog
                    .cones
                    .iter()
                    .zip(&d.cones)
                    .map(|(b, z)| x[b.range()].iter().zip(z).map(|(a, b)| a * b).sum::<f64>())
                    .sum::<f64>()
                + aux_comp;
            let obj = prog.objective_value(x);
            let comp_scale = 1f64.max(obj.abs());
            (Some(dual), Some(comp.abs() / comp_scale))
        }
    };
    KktResiduals {
        primal_abs: viol,
        primal,
        dual,
        complementarity,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Feasibility and relative gap tolerance.
    pub tol: f64,
    pub max_iter: u32,
    /// Seconds; `None` for no limit.
    pub time_limit: Option<f64>,
    pub verbose: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 200,
            time_limit: None,
            verbose: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIterations,
    UnsupportedCone,
    /// The solver stopped without reaching the requested accuracy.
    Inaccurate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub kkt: KktResiduals,
    pub iterations: u32,
    /// Seconds.
    pub solve_time: f64,
    pub backend: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub duals: Option<Duals>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub message: Option<String>,
}

impl SolveReport {
    fn without_solution(
        prog: &ConicProgram,
        status: SolveStatus,
        backend: &str,
        msg: String,
    ) -> Self {
        Self {
            status,
            x: vec![f64::NAN; prog.n],
            objective: f64::NAN,
            kkt: KktResiduals {
                primal_abs: f64::INFINITY,
                primal: f64::INFINITY,
                dual: None,
                complementarity: None,
            },
            iterations: 0,
            solve_time: 0.0,
            backend: backend.to_string(),
            duals: None,
            message: Some(msg),
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendCapability {
    pub cones: Vec<ConeKind>,
    pub log_objective: bool,
    pub sdp: bool,
}

impl BackendCapability {
    pub fn builtin() -> Self {
        Self {
            cones: vec![
                ConeKind::Nonnegative,
                ConeKind::SecondOrder,
                ConeKind::RotatedSecondOrder,
            ],
            log_objective: true,
            sdp: false,
        }
    }

    pub fn accepts(&self, prog: &ConicProgram) -> std::result::Result<(), String> {
        if prog.requires_sdp && !self.sdp {
            return Err("program requires a semidefinite cone".into());
        }
        if let Some(b) = prog
            .cones
            .iter()
            .find(|b| !self.cones.contains(&b.cone.kind))
        {
            return Err(format!("{:?} cone not supported", b.cone.kind));
        }
        if !prog.concave.is_empty() && !self.log_objective {
            return Err("concave objective terms not supported".into());
        }
        Ok(())
    }
}

pub trait Backend: Send + Sync {
    fn id(&self) -> &str;
    fn capability(&self) -> &BackendCapability;
    fn solve(&self, prog: &ConicProgram, opts: &SolveOptions) -> Result<SolveReport>;
}

/// Clarabel-backed reference backend.
#[derive(Debug, Clone)]
pub struct BuiltinBackend {
    cap: BackendCapability,
}

impl Default for BuiltinBackend {
    fn default() -> Self {
        Self {
            cap: BackendCapability::builtin(),
        }
    }
}

impl Backend for BuiltinBackend {
    fn id(&self) -> &str {
        BUILTIN_BACKEND
    }
    fn capability(&self) -> &BackendCapability {
        &self.cap
    }
    fn solve(&self, prog: &ConicProgram, opts: &SolveOptions) -> Result<SolveReport> {
        solve_builtin(prog, opts)
    }
}

/// Where each program row landed in the lowered problem.
struct Lowered {
    a: CscMatrix<f64>,
    b: Vec<f64>,
    q: Vec<f64>,
    cones: Vec<SupportedConeT<f64>>,
    n_total: usize,
    ineq_offset: usize,
    cone_offsets: Vec<usize>,
    concave_offsets: Vec<usize>,
}

fn lower(prog: &ConicProgram) -> Lowered {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut n_total = prog.n;
    let mut q = prog.objective_vector();
    let (mut ri, mut ci, mut vi) = (Vec::new(), Vec::new(), Vec::new());
    let mut b = Vec::new();
    let mut cones: Vec<SupportedConeT<f64>> = Vec::new();
    let mut row = 0usize;

    let push_cone = |cones: &mut Vec<SupportedConeT<f64>>, c: SupportedConeT<f64>| {
        use SupportedConeT::*;
        match (cones.last_mut(), &c) {
            (Some(NonnegativeConeT(k)), NonnegativeConeT(m)) => *k += m,
            (Some(ZeroConeT(k)), ZeroConeT(m)) => *k += m,
            _ => cones.push(c),
        }
    };

    for &(r, c, v) in &prog.equalities.triplets {
        ri.push(row + r);
        ci.push(c);
        vi.push(v);
    }
    b.extend_from_slice(&prog.equalities.rhs);
    row += prog.equalities.rows;
    if prog.equalities.rows > 0 {
        push_cone(&mut cones, SupportedConeT::ZeroConeT(prog.equalities.rows));
    }

    let ineq_offset = row;
    for &(r, c, v) in &prog.inequalities.triplets {
        ri.push(row + r);
        ci.push(c);
        vi.push(v);
    }
    b.extend_from_slice(&prog.inequalities.rhs);
    row += prog.inequalities.rows;
    if prog.inequalities.rows > 0 {
        push_cone(
            &mut cones,
            SupportedConeT::NonnegativeConeT(prog.inequalities.rows),
        );
    }

    // Cone slices: -x + s = 0, s ∈ K (rotated blocks through the symmetric map).
    let mut cone_offsets = Vec::with_capacity(prog.cones.len());
    for blk in &prog.cones {
        cone_offsets.push(row);
        let d = blk.cone.dim;
        match blk.cone.kind {
            ConeKind::RotatedSecondOrder => {
                let (x0, x1) = (blk.start, blk.start + 1);
                ri.extend([row, row, row + 1, row + 1]);
                ci.extend([x0, x1, x0, x1]);
                vi.extend([-s, -s, -s, s]);
                for k in 2..d {
                    ri.push(row + k);
                    ci.push(blk.start + k);
                    vi.push(-1.0);
                }
            }
            _ => {
                for k in 0..d {
                    ri.push(row + k);
                    ci.push(blk.start + k);
                    vi.push(-1.0);
                }
            }
        }
        b.extend(std::iter::repeat_n(0.0, d));
        row += d;
        let c = match blk.cone.kind {
            ConeKind::Nonnegative => SupportedConeT::NonnegativeConeT(d),
            _ => SupportedConeT::SecondOrderConeT(d),
        };
        push_cone(&mut cones, c);
    }

    let mut concave_offsets = Vec::with_capacity(prog.concave.len());
    for term in &prog.concave {
        concave_offsets.push(row);
        match term {
            ConcaveTerm::Log { index, weight } => {
                // (t, 1, x) ∈ K_exp  ⇔  t <= log x
                let t = n_total;
                n_total += 1;
                q.push(-weight);
                ri.extend([row, row + 2]);
                ci.extend([t, *index]);
                vi.extend([-1.0, -1.0]);
                b.extend([0.0, 1.0, 0.0]);
                row += 3;
                cones.push(SupportedConeT::ExponentialConeT());
            }
            ConcaveTerm::RootDet2x2 {
                a,
                b: bb,
                c,
                weight,
            } => {
                // (a, b/2, c, t) rotated  ⇔  a b >= c² + t²
                let t = n_total;
                n_total += 1;
                q.push(-weight);
                ri.extend([row, row, row + 1, row + 1, row + 2, row + 3]);
                ci.extend([*a, *bb, *a, *bb, *c, t]);
                vi.extend([-s, -s * 0.5, -s, s * 0.5, -1.0, -1.0]);
                b.extend([0.0; 4]);
                row += 4;
                cones.push(SupportedConeT::SecondOrderConeT(4));
            }
            ConcaveTerm::LogDet { .. } => unreachable!("rejected by capability check"),
        }
    }

    let a = CscMatrix::new_from_triplets(row, n_total, ri, ci, vi);
    Lowered {
        a,
        b,
        q,
        cones,
        n_total,
        ineq_offset,
        cone_offsets,
        concave_offsets,
    }
}

/// Solves with the builtin backend. Programs outside its capability return a
/// report with status `UnsupportedCone` rather than an error.
pub fn solve_builtin(prog: &ConicProgram, opts: &SolveOptions) -> Result<SolveReport> {
    prog.validate()?;
    if let Err(msg) = BackendCapability::builtin().accepts(prog) {
        return Ok(SolveReport::without_solution(
            prog,
            SolveStatus::UnsupportedCone,
            BUILTIN_BACKEND,
            msg,
        ));
    }
    let start = Instant::now();
    let low = lower(prog);
    // Clarabel's stopping rule is measured on its own scaled residuals; when
    // the unscaled check misses the requested tolerance, retry tighter.
    let mut best: Option<SolveReport> = None;
    for factor in [1e-1, 1e-3] {
        let mut rep = clarabel_attempt(prog, &low, opts, factor)?;
        rep.solve_time = start.elapsed().as_secs_f64();
        let done = rep.status != SolveStatus::Inaccurate;
        let better = match &best {
            None => true,
            Some(b) => {
                b.status == SolveStatus::Inaccurate
                    && (done || rep.kkt.max_residual() < b.kkt.max_residual())
            }
        };
        if better {
            best = Some(rep);
        }
        if done {
            break;
        }
    }
    Ok(best.expect("at least one attempt"))
}

fn clarabel_attempt(
    prog: &ConicProgram,
    low: &Lowered,
    opts: &SolveOptions,
    factor: f64,
) -> Result<SolveReport> {
    let p = CscMatrix::<f64>::zeros((low.n_total, low.n_total));
    let settings = DefaultSettings::<f64> {
        verbose: opts.verbose,
        max_iter: opts.max_iter,
        time_limit: opts.time_limit.unwrap_or(f64::INFINITY),
        tol_feas: opts.tol * factor,
        tol_gap_abs: opts.tol * factor,
        tol_gap_rel: opts.tol * factor,
        ..DefaultSettings::default()
    };
    let mut solver = DefaultSolver::new(&p, &low.q, &low.a, &low.b, &low.cones, settings)
        .map_err(|e| Error::Solver(e.to_string()))?;
    solver.solve();
    let sol = &solver.solution;
    let x: Vec<f64> = sol.x[..prog.n].to_vec();
    let z = &sol.z;
    let duals = Duals {
        eq: z[..prog.equalities.rows].to_vec(),
        ineq: z[low.ineq_offset..low.ineq_offset + prog.inequalities.rows].to_vec(),
        cones: prog
            .cones
            .iter()
            .zip(&low.cone_offsets)
            .map(|(blk, &off)| {
                let mut v = z[off..off + blk.cone.dim].to_vec();
                if blk.cone.kind == ConeKind::RotatedSecondOrder {
                    rsoc_to_soc(&mut v);
                }
                v
            })
            .collect(),
        concave: prog
            .concave
            .iter()
            .zip(&low.concave_offsets)
            .map(|(t, &off)| {
                let len = if matches!(t, ConcaveTerm::Log { .. }) {
                    3
                } else {
                    4
                };
                z[off..off + len].to_vec()
            })
            .collect(),
    };
    let status = match sol.status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => None,
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
            Some(SolveStatus::Infeasible)
        }
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => {
            Some(SolveStatus::Unbounded)
        }
        SolverStatus::MaxIterations | SolverStatus::MaxTime => Some(SolveStatus::MaxIterations),
        _ => Some(SolveStatus::Inaccurate),
    };
    let kkt = check_kkt(prog, &x, Some(&duals));
    let status = status.unwrap_or(if kkt.max_residual() <= opts.tol {
        SolveStatus::Optimal
    } else {
        SolveStatus::Inaccurate
    });
    Ok(SolveReport {
        status,
        objective: prog.objective_value(&x),
        x,
        kkt,
        iterations: sol.iterations,
        solve_time: 0.0,
        backend: BUILTIN_BACKEND.to_string(),
        duals: Some(duals),
        message: (status != SolveStatus::Optimal).then(|| format!("{:?}", sol.status)),
    })
}

/// Result file written by an external backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BridgeResult {
    pub status: SolveStatus,
    pub primal: Vec<f64>,
    #[serde(default)]
    pub iterations: u32,
}

/// A backend running as an external process:
/// `program [args..] <program.json> <result.json>`.
#[derive(Debug, Clone)]
pub struct ExternalBackend {
    id: String,
    cap: BackendCapability,
    program: PathBuf,
    args: Vec<String>,
}

impl ExternalBackend {
    pub fn new(
        id: impl Into<String>,
        cap: BackendCapability,
        program: impl Into<PathBuf>,
        args: Vec<String>,
    ) -> Self {
        Self {
            id: id.into(),
            cap,
            program: program.into(),
            args,
        }
    }
}

impl Backend for ExternalBackend {
    fn id(&self) -> &str {
        &self.id
    }
    fn capability(&self) -> &BackendCapability {
        &self.cap
    }
    fn solve(&self, prog: &ConicProgram, opts: &SolveOptions) -> Result<SolveReport> {
        prog.validate()?;
        if let Err(msg) = self.cap.accepts(prog) {
            return Ok(SolveReport::without_solution(
                prog,
                SolveStatus::UnsupportedCone,
                &self.id,
                msg,
            ));
        }
        let dir = tempfile::tempdir()?;
        let prog_path = dir.path().join("program.json");
        let result_path = dir.path().join("result.json");
        std::fs::write(&prog_path, serde_json::to_vec(prog)?)?;
        let start = Instant::now();
        let out = Command::new(&self.program)
            .args(&self.args)
            .arg(&prog_path)
            .arg(&result_path)
            .output()?;
        if !out.status.success() {
            return Err(Error::Solver(format!(
                "backend `{}` exited with {}: {}",
                self.id,
                out.status,
                String::from_utf8_lossy(&out.stderr).trim()
            )));
        }
        let res: BridgeResult = serde_json::from_slice(&std::fs::read(&result_path)?)?;
        if res.primal.len() != prog.n {
            return Err(Error::DimensionMismatch {
                context: format!("primal vector from backend `{}`", self.id),
                expected: prog.n,
                found: res.primal.len(),
            });
        }
        let kkt = check_kkt(prog, &res.primal, None);
        let status = if res.status == SolveStatus::Optimal && kkt.primal > opts.tol.max(1e-6) {
            SolveStatus::Inaccurate
        } else {
            res.status
        };
        Ok(SolveReport {
            status,
            objective: prog.objective_value(&res.primal),
            x: res.primal,
            kkt,
            iterations: res.iterations,
            solve_time: start.elapsed().as_secs_f64(),
            backend: self.id.clone(),
            duals: None,
            message: None,
        })
    }
}

/// Backends by id; `builtin` is always present.
#[derive(Clone)]
pub struct BackendRegistry {
    backends: Vec<Arc<dyn Backend>>,
}

impl Default for BackendRegistry {
    fn default() -> Self {
        Self {
            backends: vec![Arc::new(BuiltinBackend::default())],
        }
    }
}

impl std::fmt::Debug for BackendRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list()
            .entries(self.backends.iter().map(|b| b.id().to_string()))
            .finish()
    }
}

impl BackendRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, backend: Arc<dyn Backend>) -> Result<String> {
        let id = backend.id().to_string();
        if self.get(&id).is_some() {
            return Err(Error::DuplicateBackend(id));
        }
        self.backends.push(backend);
        Ok(id)
    }

    pub fn get(&self, id: &str) -> Option<&Arc<dyn Backend>> {
        self.backends.iter().find(|b| b.id() == id)
    }

    pub fn ids(&self) -> Vec<String> {
        self.backends.iter().map(|b| b.id().to_string()).collect()
    }

    /// Solves on `backend` if given, else on the first registered backend
    /// whose capability covers the program. Without a capable backend the
    /// report carries status `UnsupportedCone`.
    pub fn solve(
        &self,
        prog: &ConicProgram,
        opts: &SolveOptions,
        backend: Option<&str>,
    ) -> Result<SolveReport> {
        let chosen = match backend {
            Some(id) => Some(
                self.get(id)
                    .ok_or_else(|| Error::UnknownBackend(id.to_string()))?,
            ),
            None => self
                .backends
                .iter()
                .find(|b| b.capability().accepts(prog).is_ok()),
        };
        match chosen {
            Some(b) => b.solve(prog, opts),
            None => Ok(SolveReport::without_solution(
                prog,
                SolveStatus::UnsupportedCone,
                "none",
                BackendCapability::builtin()
                    .accepts(prog)
                    .err()
                    .unwrap_or_default(),
            )),
        }
    }
}

/// Builtin solve with default routing.
pub fn solve(prog: &ConicProgram, opts: &SolveOptions) -> Result<SolveReport> {
    solve_builtin(prog, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn lp_x_le_3() -> ConicProgram {
        let mut b = ProgramBuilder::new();
        let x = b.add_nonneg(1);
        b.add_objective(x.start, -1.0);
        b.add_ineq([(x.start, 1.0)], 3.0);
        b.build()
    }

    #[test]
    fn simple_lp() {
        let prog = lp_x_le_3();
        let r = solve(&prog, &SolveOptions::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.x[0] - 3.0).abs() < 1e-7);
        assert!(r.kkt.max_residual() <= 1e-8);
    }

    #[test]
    fn kkt_of_perturbed_point() {
        let prog = lp_x_le_3();
        let k = check_kkt(&prog, &[3.1], None);
        assert!((k.primal_abs - 0.1).abs() < 1e-12);
        let k = check_kkt(&prog, &[-0.5], None);
        assert!((k.primal_abs - 0.5).abs() < 1e-12);
    }

    #[test]
    fn kkt_matches_hand_violations() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut b = ProgramBuilder::new();
        let x = b.add_free(3);
        b.add_eq([(x.start, 1.0), (x.start + 1, 2.0)], 1.0);
        b.add_ineq([(x.start + 2, 1.0)], 0.5);
        let prog = b.build();
        for _ in 0..20 {
            let p: Vec<f64> = (0..3).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let expect = (p[0] + 2.0 * p[1] - 1.0).abs().max((p[2] - 0.5).max(0.0));
            let k = check_kkt(&prog, &p, None);
            assert!((k.primal_abs - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn log_objective() {
        let mut b = ProgramBuilder::new();
        let x = b.add_nonneg(2);
        b.add_concave(ConcaveTerm::Log {
            index: x.start,
            weight: 1.0,
        });
        b.add_concave(ConcaveTerm::Log {
            index: x.start + 1,
            weight: 1.0,
        });
        b.add_ineq([(x.start, 1.0), (x.start + 1, 1.0)], 2.0);
        let prog = b.build();
        let r = solve(&prog, &SolveOptions::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal, "{r:?}");
        assert!(
            (r.x[0] - 1.0).abs() < 1e-5 && (r.x[1] - 1.0).abs() < 1e-5,
            "{:?}",
            r.x
        );
        assert!(r.x.iter().all(|v| *v > 0.0));
    }

    #[test]
    fn soc_three_four_five() {
        // smallest t with (t, 3, 4) in the cone is the norm
        let mut b = ProgramBuilder::new();
        let v = b.add_cone_vars(Cone::second_order(3));
        b.add_objective(v.start, 1.0);
        b.add_eq([(v.start + 1, 1.0)], 3.0);
        b.add_eq([(v.start + 2, 1.0)], 4.0);
        let r = solve(&b.build(), &SolveOptions::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.x[0] - 5.0).abs() < 1e-7);
    }

    #[test]
    fn rotated_cone_and_rootdet() {
        // min a + b over 2ab >= 1 gives a = b = 1/√2.
        let mut b = ProgramBuilder::new();
        let v = b.add_cone_vars(Cone::rotated(3));
        b.add_objective(v.start, 1.0);
        b.add_objective(v.start + 1, 1.0);
        b.add_eq([(v.start + 2, 1.0)], 1.0);
        let r = solve(&b.build(), &SolveOptions::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.x[0] - 0.5f64.sqrt()).abs() < 1e-6);

        // max sqrt(ab - c²) with a + b <= 2 and c = 0.5: a = b = 1.
        let mut b = ProgramBuilder::new();
        let v = b.add_free(3);
        b.add_concave(ConcaveTerm::RootDet2x2 {
            a: v.start,
            b: v.start + 1,
            c: v.start + 2,
            weight: 1.0,
        });
        b.add_ineq([(v.start, 1.0), (v.start + 1, 1.0)], 2.0);
        b.add_eq([(v.start + 2, 1.0)], 0.5);
        let prog = b.build();
        let r = solve(&prog, &SolveOptions::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal, "{r:?}");
        assert!((r.objective + 0.75f64.sqrt()).abs() < 1e-6);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut b = ProgramBuilder::new();
        let x = b.add_nonneg(1);
        b.add_ineq([(x.start, 1.0)], -1.0);
        let r = solve(&b.build(), &SolveOptions::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Infeasible);

        let mut b = ProgramBuilder::new();
        let x = b.add_nonneg(1);
        b.add_objective(x.start, -1.0);
        let r = solve(&b.build(), &SolveOptions::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Unbounded);
    }

    #[test]
    fn deterministic() {
        let mut b = ProgramBuilder::new();
        let x = b.add_nonneg(4);
        for i in 0..4 {
            b.add_concave(ConcaveTerm::Log {
                index: x.start + i,
                weight: 1.0 + i as f64,
            });
        }
        b.add_ineq(x.clone().map(|i| (i, 1.0)), 3.0);
        let prog = b.build();
        let r1 = solve(&prog, &SolveOptions::default()).unwrap();
        let r2 = solve(&prog, &SolveOptions::default()).unwrap();
        assert_eq!(r1.iterations, r2.iterations);
        assert_eq!(r1.x, r2.x);
    }

    #[test]
    fn cone_duality_pairing() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for cone in [
            Cone::nonnegative(4),
            Cone::second_order(4),
            Cone::rotated(4),
        ] {
            for _ in 0..1000 {
                let a = random_in_cone(&cone, &mut rng);
                let b = random_in_cone(&cone.dual(), &mut rng);
                assert!(cone.contains(&a, 1e-12) && cone.dual_contains(&b, 1e-12));
                let ip: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
                assert!(ip >= -1e-12, "{cone:?} {a:?} {b:?}");
            }
        }
    }

    fn random_in_cone(cone: &Cone, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let d = cone.dim;
        match cone.kind {
            ConeKind::Nonnegative => (0..d).map(|_| rng.gen_range(0.0..2.0)).collect(),
            ConeKind::SecondOrder => {
                let rest: Vec<f64> = (1..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let n = rest.iter().map(|v| v * v).sum::<f64>().sqrt();
                let mut v = vec![n + rng.gen_range(0.0..0.5)];
                v.extend(rest);
                v
            }
            ConeKind::RotatedSecondOrder => {
                let rest: Vec<f64> = (2..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let n2 = rest.iter().map(|v| v * v).sum::<f64>();
                let a = rng.gen_range(0.1..2.0);
                let b = n2 / (2.0 * a) + rng.gen_range(0.0..0.5);
                let mut v = vec![a, b];
                v.extend(rest);
                v
            }
        }
    }

    #[test]
    fn registry_routing() {
        let mut reg = BackendRegistry::new();
        assert_eq!(reg.ids(), vec!["builtin".to_string()]);
        let mut b = ProgramBuilder::new();
        let v = b.add_free(4);
        b.add_psd(vec![
            vec![v.start, v.start + 1],
            vec![v.start + 1, v.start + 2],
        ]);
        let prog = b.build();
        let r = reg.solve(&prog, &SolveOptions::default(), None).unwrap();
        assert_eq!(r.status, SolveStatus::UnsupportedCone);
        let dup = Arc::new(BuiltinBackend::default());
        assert!(matches!(reg.register(dup), Err(Error::DuplicateBackend(_))));
        assert!(matches!(
            reg.solve(&prog, &SolveOptions::default(), Some("nope")),
            Err(Error::UnknownBackend(_))
        ));
    }

    #[test]
    fn program_json_round_trip() {
        let prog = lp_x_le_3();
        let s = serde_json::to_string(&prog).unwrap();
        let back: ConicProgram = serde_json::from_str(&s).unwrap();
        assert_eq!(prog, back);
    }

    #[test]
    fn validate_rejects_overlap() {
        let mut prog = lp_x_le_3();
        prog.cones.push(ConeBlock {
            start: 0,
            cone: Cone::nonnegative(1),
        });
        assert!(prog.validate().is_err());
    }
}
