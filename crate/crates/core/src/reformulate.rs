//! Conic counterparts of the robust problem.
//!
//! Every semi-infinite row `aᵀs + b <= 0 ∀ s ∈ S` is replaced by a multiplier
//! `λ ∈ K*` with `Gᵀλ = a`, `gᵀλ + b <= 0`. Applied to all constraint rows
//! this gives `Λ ⪰ 0` row-wise with `Λ 𝐆 = C P + D Y` and
//! `C p + D y + Λ 𝐠 <= d`; applied to the cost it gives the epigraph
//! `cᵀp + μᵀ𝐠 <= τ`, `𝐆ᵀμ = Pᵀc`.
//!
//! The analysis counterpart has no policy (inputs fixed), the synthesis
//! counterpart optimizes an affine policy `u = P s + p` jointly with the set.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::conic::{
    self, BackendCapability, BackendRegistry, ConcaveTerm, Cone, ConicProgram, KktResiduals,
    ProgramBuilder, ProgramCensus, SolveOptions, SolveStatus,
};
use crate::error::{dim_check, Error, Result};
use crate::model::StackedProblem;
use crate::policy::AffinePolicy;
use crate::serde_mat;
use crate::uncertainty::{
    evaluate_objective, ObjectiveKind, OffsetRule, ShapingFamily, StageSet, UncertaintyFamily,
};

/// Lower bound on shaping diagonals under log-type objectives.
pub const DIAGONAL_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CounterpartKind {
    Analysis,
    Synthesis,
}

/// Variable indices of one stage's `(Y_k, y_k)`; `None` marks a structural
/// zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageShapingVars {
    pub y_mat: Vec<Vec<Option<usize>>>,
    pub y_vec: Vec<Option<usize>>,
}

/// Map from program variables back to named blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarMap {
    pub tau: Option<usize>,
    /// `(N n_u) × (N n_s)`; `None` where causality pins the entry to zero.
    pub p_mat: Vec<Vec<Option<usize>>>,
    pub p_vec: Vec<usize>,
    pub shaping: Vec<StageShapingVars>,
    /// `lambda[i][k]` is the start of row `i`'s multiplier for stage `k`
    /// (length `l_k`).
    pub lambda: Vec<Vec<usize>>,
    /// Start of `μ_k`.
    pub mu: Vec<usize>,
    /// Row `i` enters the program divided by `row_scale[i]`, so the stored
    /// multipliers are `Λ_i / row_scale[i]`.
    pub row_scale: Vec<f64>,
}

/// Values pinned by equality rows, for fixed-set or fixed-policy variants.
#[derive(Debug, Clone, Default)]
pub struct Pins {
    pub shaping: Option<(Vec<DMatrix<f64>>, Vec<DVector<f64>>)>,
    pub policy: Option<(DMatrix<f64>, DVector<f64>)>,
}

/// A counterpart program with everything needed to read back its solution.
#[derive(Debug, Clone)]
pub struct Counterpart {
    pub kind: CounterpartKind,
    pub program: ConicProgram,
    pub vars: VarMap,
    pub problem: StackedProblem,
    /// Family broadcast to the horizon.
    pub family: UncertaintyFamily,
    /// Weight on the size objective.
    pub lambda: f64,
    /// Inputs held fixed in an analysis counterpart.
    pub fixed_inputs: Option<DVector<f64>>,
}

/// Analysis counterpart: maximize the set size with inputs fixed
/// (`None` fixes them at zero).
pub fn build_analysis(
    sp: &StackedProblem,
    fam: &UncertaintyFamily,
    fixed_inputs: Option<&DVector<f64>>,
) -> Result<Counterpart> {
    build(
        sp,
        fam,
        CounterpartKind::Analysis,
        fam.objective.weight,
        fixed_inputs,
        &Pins::default(),
    )
}

/// Synthesis counterpart: minimize `τ - λ Σ ϱ(W_k)` over policies and sets.
pub fn build_synthesis(
    sp: &StackedProblem,
    fam: &UncertaintyFamily,
    lambda: f64,
) -> Result<Counterpart> {
    build_synthesis_pinned(sp, fam, lambda, &Pins::default())
}

pub fn build_synthesis_pinned(
    sp: &StackedProblem,
    fam: &UncertaintyFamily,
    lambda: f64,
    pins: &Pins,
) -> Result<Counterpart> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "λ must be finite and >= 0, got {lambda}"
        )));
    }
    build(sp, fam, CounterpartKind::Synthesis, lambda, None, pins)
}

/// The counterpart's program and variable map, checked against a backend's
/// capability.
pub fn lower_to_conic<'a>(
    cp: &'a Counterpart,
    cap: &BackendCapability,
) -> Result<(&'a ConicProgram, &'a VarMap)> {
    cap.accepts(&cp.program).map_err(Error::UnsupportedCone)?;
    Ok((&cp.program, &cp.vars))
}

struct SparseRow {
    entries: Vec<(usize, f64)>,
}

fn sparse_rows(m: &DMatrix<f64>) -> Vec<SparseRow> {
    (0..m.nrows())
        .map(|i| SparseRow {
            entries: (0..m.ncols())
                .filter(|&j| m[(i, j)] != 0.0)
                .map(|j| (j, m[(i, j)]))
                .collect(),
        })
        .collect()
}

fn build(
    sp: &StackedProblem,
    fam: &UncertaintyFamily,
    kind: CounterpartKind,
    weight: f64,
    fixed_inputs: Option<&DVector<f64>>,
    pins: &Pins,
) -> Result<Counterpart> {
    let n = sp.horizon;
    fam.check_horizon(n)?;
    let fam = fam.clone().for_horizon(n)?;
    dim_check("family disturbance dimension", sp.nw, fam.n_w)?;
    let n_s: Vec<usize> = fam.stages.iter().map(|s| s.primitive.dim()).collect();
    let s_off: Vec<usize> = n_s
        .iter()
        .scan(0, |acc, d| {
            let o = *acc;
            *acc += d;
            Some(o)
        })
        .collect();
    let total_s: usize = n_s.iter().sum();
    let nu_tot = n * sp.nu;
    let rows = sp.rows();

    let mut d = sp.d.clone();
    if let Some(u) = fixed_inputs {
        dim_check("fixed inputs", nu_tot, u.len())?;
        d -= &sp.cmat * u;
    }
    let synth = kind == CounterpartKind::Synthesis;

    let mut b = ProgramBuilder::new();

    // Shaping parameters.
    let mut shaping = Vec::with_capacity(n);
    for (k, st) in fam.stages.iter().enumerate() {
        shaping.push(add_shaping(&mut b, st, fam.n_w, k)?);
    }

    // Policy.
    let (tau, p_mat, p_vec) = if synth {
        let tau = b.add_named("tau", 1).start;
        let p_vec = b.add_named("p", nu_tot);
        let mut p_mat = vec![vec![None; total_s]; nu_tot];
        let start = b.num_vars();
        for t in 0..n {
            for a in 0..sp.nu {
                for k in 0..n {
                    if sp.causality.allows(t, a, k) {
                        for e in 0..n_s[k] {
                            p_mat[t * sp.nu + a][s_off[k] + e] = Some(b.add_free(1).start);
                        }
                    }
                }
            }
        }
        b.label("P", start..b.num_vars());
        (Some(tau), p_mat, p_vec.collect::<Vec<_>>())
    } else {
        (None, Vec::new(), Vec::new())
    };

    // Λ: one multiplier per (row, stage), in the dual of the stage cone.
    let lam_start = b.num_vars();
    let mut lambda = vec![vec![0usize; n]; rows];
    for row in lambda.iter_mut() {
        for (k, slot) in row.iter_mut().enumerate() {
            *slot = add_dual_vars(&mut b, &fam.stages[k]);
        }
    }
    b.label("Lambda", lam_start..b.num_vars());

    let mu_start = b.num_vars();
    let mu: Vec<usize> = if synth {
        (0..n)
            .map(|k| add_dual_vars(&mut b, &fam.stages[k]))
            .collect()
    } else {
        Vec::new()
    };
    b.label("mu", mu_start..b.num_vars());

    // Rows are normalized by their largest coefficient so the program does
    // not depend on how the constraints were scaled.
    let row_scale: Vec<f64> = (0..rows)
        .map(|i| {
            let m = sp
                .cmat
                .row(i)
                .amax()
                .max(sp.dmat.row(i).amax())
                .max(d[i].abs());
            if m > 0.0 && m.is_finite() {
                m
            } else {
                1.0
            }
        })
        .collect();
    let mut c_rows = sparse_rows(&sp.cmat);
    let mut d_rows = sparse_rows(&sp.dmat);
    for i in 0..rows {
        c_rows[i]
            .entries
            .iter_mut()
            .for_each(|e| e.1 /= row_scale[i]);
        d_rows[i]
            .entries
            .iter_mut()
            .for_each(|e| e.1 /= row_scale[i]);
    }
    let g_cols: Vec<Vec<Vec<(usize, f64)>>> = fam
        .stages
        .iter()
        .map(|st| {
            let g = st.primitive.g_mat();
            (0..g.ncols())
                .map(|e| {
                    (0..g.nrows())
                        .filter(|&r| g[(r, e)] != 0.0)
                        .map(|r| (r, g[(r, e)]))
                        .collect()
                })
                .collect()
        })
        .collect();

    // Λ 𝐆 = C P + D Y and C p + D y + Λ 𝐠 <= d.
    for i in 0..rows {
        for k in 0..n {
            for e in 0..n_s[k] {
                let mut terms: Vec<(usize, f64)> = g_cols[k][e]
                    .iter()
                    .map(|&(r, v)| (lambda[i][k] + r, v))
                    .collect();
                if synth {
                    for &(j, cij) in &c_rows[i].entries {
                        if let Some(pv) = p_mat[j][s_off[k] + e] {
                            terms.push((pv, -cij));
                        }
                    }
                }
                for &(col, dij) in &d_rows[i].entries {
                    if col / fam.n_w == k {
                        let a = col % fam.n_w;
                        if let Some(yv) = shaping[k].y_mat[a][e] {
                            terms.push((yv, -dij));
                        }
                    }
                }
                b.add_eq(terms, 0.0);
            }
        }
        let mut terms: Vec<(usize, f64)> = Vec::new();
        if synth {
            terms.extend(c_rows[i].entries.iter().map(|&(j, v)| (p_vec[j], v)));
        }
        for &(col, dij) in &d_rows[i].entries {
            let (k, a) = (col / fam.n_w, col % fam.n_w);
            if let Some(yv) = shaping[k].y_vec[a] {
                terms.push((yv, dij));
            }
        }
        for k in 0..n {
            let g = fam.stages[k].primitive.g_vec();
            terms.extend(
                (0..g.len())
                    .filter(|&r| g[r] != 0.0)
                    .map(|r| (lambda[i][k] + r, g[r])),
            );
        }
        b.add_ineq(terms, d[i] / row_scale[i]);
    }

    // Epigraph: cᵀp + μᵀ𝐠 <= τ, 𝐆ᵀμ = Pᵀc.
    if synth {
        let tau = tau.expect("synthesis has τ");
        let c_nz: Vec<(usize, f64)> = (0..nu_tot)
            .filter(|&j| sp.c[j] != 0.0)
            .map(|j| (j, sp.c[j]))
            .collect();
        for k in 0..n {
            for e in 0..n_s[k] {
                let mut terms: Vec<(usize, f64)> =
                    g_cols[k][e].iter().map(|&(r, v)| (mu[k] + r, v)).collect();
                for &(j, cj) in &c_nz {
                    if let Some(pv) = p_mat[j][s_off[k] + e] {
                        terms.push((pv, -cj));
                    }
                }
                b.add_eq(terms, 0.0);
            }
        }
        let mut terms: Vec<(usize, f64)> = c_nz.iter().map(|&(j, cj)| (p_vec[j], cj)).collect();
        for k in 0..n {
            let g = fam.stages[k].primitive.g_vec();
            terms.extend(
                (0..g.len())
                    .filter(|&r| g[r] != 0.0)
                    .map(|r| (mu[k] + r, g[r])),
            );
        }
        terms.push((tau, -1.0));
        b.add_ineq(terms, 0.0);
        b.add_objective(tau, 1.0);
    }

    // Size objective, summed over stages.
    if weight != 0.0 {
        for (k, st) in fam.stages.iter().enumerate() {
            add_size_objective(
                &mut b,
                &fam.objective.kind,
                weight,
                st,
                &shaping[k],
                fam.n_w,
            )?;
        }
    }

    // Pins.
    if let Some((ys, yv)) = &pins.shaping {
        dim_check("pinned shaping stages", n, ys.len())?;
        dim_check("pinned offset stages", n, yv.len())?;
        for k in 0..n {
            pin_stage(&mut b, &shaping[k], &ys[k], &yv[k])?;
        }
    }
    if let Some((pm, pv)) = &pins.policy {
        if !synth {
            return Err(Error::InvalidArgument(
                "analysis counterpart has no policy to pin".into(),
            ));
        }
        dim_check("pinned P rows", nu_tot, pm.nrows())?;
        dim_check("pinned P columns", total_s, pm.ncols())?;
        dim_check("pinned p", nu_tot, pv.len())?;
        for j in 0..nu_tot {
            b.add_eq([(p_vec[j], 1.0)], pv[j]);
            for e in 0..total_s {
                match p_mat[j][e] {
                    Some(v) => {
                        b.add_eq([(v, 1.0)], pm[(j, e)]);
                    }
                    None if pm[(j, e)] != 0.0 => {
                        return Err(Error::InvalidArgument(format!(
                            "pinned P entry ({j}, {e}) violates causality"
                        )))
                    }
                    None => {}
                }
            }
        }
    }

    let mut program = b.build();
    if fam.requires_sdp() {
        program.requires_sdp = true;
    }
    Ok(Counterpart {
        kind,
        program,
        vars: VarMap {
            tau,
            p_mat,
            p_vec,
            shaping,
            lambda,
            mu,
            row_scale,
        },
        problem: sp.clone(),
        family: fam,
        lambda: weight,
        fixed_inputs: fixed_inputs.cloned(),
    })
}

fn add_dual_vars(b: &mut ProgramBuilder, st: &StageSet) -> usize {
    let start = b.num_vars();
    for c in st.primitive.cones() {
        b.add_cone_vars(c.dual());
    }
    start
}

pub(crate) fn add_shaping(
    b: &mut ProgramBuilder,
    st: &StageSet,
    n_w: usize,
    k: usize,
) -> Result<StageShapingVars> {
    let n_s = st.primitive.dim();
    let square = n_s == n_w;
    let mut y_mat = vec![vec![None; n_s]; n_w];
    let start = b.num_vars();
    match st.shaping.family {
        ShapingFamily::ScaledIdentity | ShapingFamily::Diagonal | ShapingFamily::SymmetricPsd
            if !square =>
        {
            return Err(Error::InvalidArgument(format!(
                "{:?} shaping needs a square Y (n_w = {n_w}, n_s = {n_s})",
                st.shaping.family
            )))
        }
        ShapingFamily::ScaledIdentity => {
            let r = b.add_nonneg(1).start;
            for (i, row) in y_mat.iter_mut().enumerate() {
                row[i] = Some(r);
            }
        }
        ShapingFamily::Diagonal => {
            let r = b.add_nonneg(n_w);
            for (i, row) in y_mat.iter_mut().enumerate() {
                row[i] = Some(r.start + i);
            }
        }
        ShapingFamily::SymmetricPsd => {
            if n_w == 1 {
                y_mat[0][0] = Some(b.add_nonneg(1).start);
            } else {
                for i in 0..n_w {
                    for j in i..n_w {
                        let v = b.add_free(1).start;
                        y_mat[i][j] = Some(v);
                        y_mat[j][i] = Some(v);
                    }
                }
                if n_w == 2 {
                    // [[a, c], [c, b]] ⪰ 0  ⇔  (a, b/2, c) in the rotated cone.
                    let h = b.add_cone_vars(Cone::rotated(3));
                    let (a, bb, c) = (
                        y_mat[0][0].unwrap(),
                        y_mat[1][1].unwrap(),
                        y_mat[0][1].unwrap(),
                    );
                    b.add_eq([(h.start, 1.0), (a, -1.0)], 0.0);
                    b.add_eq([(h.start + 1, 1.0), (bb, -0.5)], 0.0);
                    b.add_eq([(h.start + 2, 1.0), (c, -1.0)], 0.0);
                } else {
                    b.add_psd(
                        y_mat
                            .iter()
                            .map(|r| r.iter().map(|v| v.unwrap()).collect())
                            .collect(),
                    );
                }
            }
        }
        ShapingFamily::FreeColumnsZeroOffset | ShapingFamily::Free => {
            for row in y_mat.iter_mut() {
                for v in row.iter_mut() {
                    *v = Some(b.add_free(1).start);
                }
            }
        }
    }
    b.label(&format!("Y[{k}]"), start..b.num_vars());
    let y_vec = match st.shaping.offset {
        OffsetRule::Zero => vec![None; n_w],
        OffsetRule::Free | OffsetRule::BoxBoundedByY => {
            let r = b.add_named(&format!("y[{k}]"), n_w);
            let v: Vec<Option<usize>> = r.clone().map(Some).collect();
            if st.shaping.offset == OffsetRule::BoxBoundedByY {
                for i in 0..n_w {
                    let yi = y_mat[i].get(i).copied().flatten().ok_or_else(|| {
                        Error::InvalidArgument("box-bounded offset needs a diagonal Y".into())
                    })?;
                    b.add_ineq([(r.start + i, 1.0), (yi, -1.0)], 0.0);
                    b.add_ineq([(r.start + i, -1.0), (yi, -1.0)], 0.0);
                }
            }
            v
        }
    };
    Ok(StageShapingVars { y_mat, y_vec })
}

fn diag_var(v: &StageShapingVars, i: usize) -> Result<usize> {
    v.y_mat[i]
        .get(i)
        .copied()
        .flatten()
        .ok_or_else(|| Error::InvalidArgument("objective needs a diagonal shaping entry".into()))
}

pub(crate) fn add_size_objective(
    b: &mut ProgramBuilder,
    kind: &ObjectiveKind,
    weight: f64,
    st: &StageSet,
    v: &StageShapingVars,
    n_w: usize,
) -> Result<()> {
    let n_s = st.primitive.dim();
    let eps_diag = |b: &mut ProgramBuilder, v: &StageShapingVars| -> Result<()> {
        for i in 0..n_w {
            b.add_ineq([(diag_var(v, i)?, -1.0)], -DIAGONAL_EPS);
        }
        Ok(())
    };
    match kind {
        ObjectiveKind::LogDetDiagonal => {
            eps_diag(b, v)?;
            for i in 0..n_w {
                b.add_concave(ConcaveTerm::Log {
                    index: diag_var(v, i)?,
                    weight,
                });
            }
        }
        ObjectiveKind::GeoMeanDiagonal => match n_w {
            1 => b.add_objective(diag_var(v, 0)?, -weight),
            2 => {
                let zero = b.add_free(1).start;
                b.add_eq([(zero, 1.0)], 0.0);
                b.add_concave(ConcaveTerm::RootDet2x2 {
                    a: diag_var(v, 0)?,
                    b: diag_var(v, 1)?,
                    c: zero,
                    weight,
                });
            }
            _ => {
                return Err(Error::UnsupportedCone(
                    "geometric-mean objective beyond two dimensions".into(),
                ))
            }
        },
        ObjectiveKind::RootDet2x2 => {
            if n_w != 2 || n_s != 2 {
                return Err(Error::InvalidArgument(
                    "root-det objective needs a 2×2 Y".into(),
                ));
            }
            eps_diag(b, v)?;
            let c = v.y_mat[0][1].or(v.y_mat[1][0]);
            let c = match c {
                Some(c) => c,
                None => {
                    let z = b.add_free(1).start;
                    b.add_eq([(z, 1.0)], 0.0);
                    z
                }
            };
            b.add_concave(ConcaveTerm::RootDet2x2 {
                a: diag_var(v, 0)?,
                b: diag_var(v, 1)?,
                c,
                weight,
            });
        }
        ObjectiveKind::LogDet => {
            let indices = v
                .y_mat
                .iter()
                .map(|r| {
                    r.iter()
                        .map(|x| x.expect("symmetric Y has all entries"))
                        .collect()
                })
                .collect();
            b.add_concave(ConcaveTerm::LogDet { indices, weight });
        }
        ObjectiveKind::Radius => b.add_objective(diag_var(v, 0)?, -weight),
        ObjectiveKind::LinearWeights { weights } => {
            dim_check("linear size weights", n_w, weights.len())?;
            for (i, c) in weights.iter().enumerate() {
                b.add_objective(diag_var(v, i)?, -weight * c);
            }
        }
        ObjectiveKind::VertexPushing { directions } => {
            dim_check("vertex directions", n_s, directions.len())?;
            for (j, c) in directions.iter().enumerate() {
                for i in 0..n_w {
                    if let Some(y) = v.y_mat[i][j] {
                        b.add_objective(y, -weight * c[i]);
                    }
                }
            }
        }
        ObjectiveKind::VertexPulling { anchors } => {
            dim_check("vertex anchors", n_s, anchors.len())?;
            // t_j >= ‖d_j - Y_j‖² via (t_j, 1/2, d_j - Y_j) in the rotated cone.
            for (j, dj) in anchors.iter().enumerate() {
                let r = b.add_cone_vars(Cone::rotated(n_w + 2));
                b.add_eq([(r.start + 1, 1.0)], 0.5);
                for i in 0..n_w {
                    let y = v.y_mat[i][j].ok_or_else(|| {
                        Error::InvalidArgument("vertex pulling needs free Y columns".into())
                    })?;
                    b.add_eq([(r.start + 2 + i, 1.0), (y, 1.0)], dj[i]);
                }
                b.add_objective(r.start, weight);
            }
        }
    }
    Ok(())
}

fn pin_stage(
    b: &mut ProgramBuilder,
    v: &StageShapingVars,
    y: &DMatrix<f64>,
    yv: &DVector<f64>,
) -> Result<()> {
    dim_check("pinned Y rows", v.y_mat.len(), y.nrows())?;
    dim_check("pinned y", v.y_vec.len(), yv.len())?;
    let mut seen = std::collections::HashSet::new();
    for (i, row) in v.y_mat.iter().enumerate() {
        dim_check("pinned Y columns", row.len(), y.ncols())?;
        for (j, var) in row.iter().enumerate() {
            match var {
                Some(idx) => {
                    if seen.insert(*idx) {
                        b.add_eq([(*idx, 1.0)], y[(i, j)]);
                    }
                }
                None if y[(i, j)].abs() > 1e-12 => {
                    return Err(Error::InvalidArgument(format!(
                        "pinned Y entry ({i}, {j}) is structurally zero"
                    )))
                }
                None => {}
            }
        }
    }
    for (i, var) in v.y_vec.iter().enumerate() {
        match var {
            Some(idx) => {
                b.add_eq([(*idx, 1.0)], yv[i]);
            }
            None if yv[i].abs() > 1e-12 => {
                return Err(Error::InvalidArgument("pinned offset must be zero".into()))
            }
            None => {}
        }
    }
    Ok(())
}

/// Optimizers of a solved counterpart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub kind: CounterpartKind,
    pub status: SolveStatus,
    /// Program objective (`τ - λ Σ ϱ` or `-Σ ϱ`), without the problem's
    /// constant cost offset.
    pub objective: f64,
    pub tau: Option<f64>,
    pub policy: Option<AffinePolicy>,
    #[serde(with = "serde_mat::matrices")]
    pub y_mats: Vec<DMatrix<f64>>,
    #[serde(with = "serde_mat::vectors")]
    pub y_vecs: Vec<DVector<f64>>,
    /// `Λ`, rows × (Σ_k l_k).
    #[serde(with = "serde_mat::matrix")]
    pub lambda_mat: DMatrix<f64>,
    #[serde(with = "serde_mat::vector")]
    pub mu: DVector<f64>,
    /// `ϱ(W_k)` per stage (unweighted).
    pub size_terms: Vec<f64>,
    pub kkt: KktResiduals,
    pub iterations: u32,
    pub solve_time: f64,
    pub backend: String,
    /// Inputs held fixed by an analysis counterpart.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_inputs: Option<Vec<f64>>,
}

impl Solution {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    /// Stacked `𝐘 = diag(Y_k)` and `𝐲`.
    pub fn stacked_shaping(&self) -> (DMatrix<f64>, DVector<f64>) {
        let rows: usize = self.y_mats.iter().map(|m| m.nrows()).sum();
        let cols: usize = self.y_mats.iter().map(|m| m.ncols()).sum();
        let mut y = DMatrix::zeros(rows, cols);
        let (mut r, mut c) = (0, 0);
        for m in &self.y_mats {
            y.view_mut((r, c), (m.nrows(), m.ncols())).copy_from(m);
            r += m.nrows();
            c += m.ncols();
        }
        let yv = crate::model::stack_blocks(&self.y_vecs);
        (y, yv)
    }
}

fn read(x: &[f64], idx: Option<usize>) -> f64 {
    idx.map_or(0.0, |i| x[i])
}

impl Counterpart {
    pub fn census(&self) -> CounterpartCensus {
        CounterpartCensus {
            kind: self.kind,
            horizon: self.problem.horizon,
            constraint_rows: self.problem.rows(),
            n_u: self.problem.nu,
            n_w: self.problem.nw,
            n_s: self
                .family
                .stages
                .iter()
                .map(|s| s.primitive.dim())
                .collect(),
            policy_entries: self
                .vars
                .p_mat
                .iter()
                .flatten()
                .filter(|v| v.is_some())
                .count(),
            program: self.program.census(),
        }
    }

    /// Solves on the builtin backend.
    pub fn solve(&self, opts: &SolveOptions) -> Result<Solution> {
        self.solve_with(&BackendRegistry::default(), opts, None)
    }

    pub fn solve_with(
        &self,
        registry: &BackendRegistry,
        opts: &SolveOptions,
        backend: Option<&str>,
    ) -> Result<Solution> {
        let rep = registry.solve(&self.program, opts, backend)?;
        Ok(self.extract(
            &rep.x,
            rep.status,
            rep.objective,
            rep.kkt,
            rep.iterations,
            rep.solve_time,
            &rep.backend,
        ))
    }

    fn extract(
        &self,
        x: &[f64],
        status: SolveStatus,
        objective: f64,
        kkt: KktResiduals,
        iterations: u32,
        solve_time: f64,
        backend: &str,
    ) -> Solution {
        let fam = &self.family;
        let n = self.problem.horizon;
        let y_mats: Vec<DMatrix<f64>> = self
            .vars
            .shaping
            .iter()
            .map(|v| {
                DMatrix::from_fn(
                    v.y_mat.len(),
                    v.y_mat.first().map_or(0, |r| r.len()),
                    |i, j| read(x, v.y_mat[i][j]),
                )
            })
            .collect();
        let y_vecs: Vec<DVector<f64>> = self
            .vars
            .shaping
            .iter()
            .map(|v| DVector::from_iterator(v.y_vec.len(), v.y_vec.iter().map(|i| read(x, *i))))
            .collect();
        let l: Vec<usize> = fam.stages.iter().map(|s| s.primitive.rows()).collect();
        let l_tot: usize = l.iter().sum();
        let rows = self.vars.lambda.len();
        let mut lambda_mat = DMatrix::zeros(rows, l_tot);
        for i in 0..rows {
            let mut off = 0;
            for k in 0..n {
                for r in 0..l[k] {
                    lambda_mat[(i, off + r)] =
                        x[self.vars.lambda[i][k] + r] * self.vars.row_scale[i];
                }
                off += l[k];
            }
        }
        let mu = if self.vars.mu.is_empty() {
            DVector::zeros(0)
        } else {
            let mut mu = DVector::zeros(l_tot);
            let mut off = 0;
            for k in 0..n {
                for r in 0..l[k] {
                    mu[off + r] = x[self.vars.mu[k] + r];
                }
                off += l[k];
            }
            mu
        };
        let policy = if self.kind == CounterpartKind::Synthesis {
            let rows = self.vars.p_vec.len();
            let cols = self.vars.p_mat.first().map_or(0, |r| r.len());
            let pm = DMatrix::from_fn(rows, cols, |i, j| read(x, self.vars.p_mat[i][j]));
            let pv = DVector::from_iterator(rows, self.vars.p_vec.iter().map(|&i| x[i]));
            Some(AffinePolicy::from_parts(
                n,
                self.problem.nu,
                fam.stages.iter().map(|s| s.primitive.dim()).collect(),
                pm,
                pv,
                self.problem.causality.clone(),
            ))
        } else {
            None
        };
        let size_terms = y_mats
            .iter()
            .zip(&y_vecs)
            .map(|(y, yv)| evaluate_objective(&fam.objective, y, yv))
            .collect();
        Solution {
            kind: self.kind,
            status,
            objective,
            tau: self.vars.tau.map(|t| x[t]),
            policy,
            y_mats,
            y_vecs,
            lambda_mat,
            mu,
            size_terms,
            kkt,
            iterations,
            solve_time,
            backend: backend.to_string(),
            fixed_inputs: self.fixed_inputs.as_ref().map(|u| u.as_slice().to_vec()),
        }
    }
}

/// Diagnostic size summary of a counterpart.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CounterpartCensus {
    pub kind: CounterpartKind,
    pub horizon: usize,
    pub constraint_rows: usize,
    pub n_u: usize,
    pub n_w: usize,
    pub n_s: Vec<usize>,
    pub policy_entries: usize,
    pub program: ProgramCensus,
}

/// Ranges of the stage blocks of a stacked primitive vector.
pub fn stage_ranges(fam: &UncertaintyFamily, n: usize) -> Vec<Range<usize>> {
    let mut off = 0;
    (0..n)
        .map(|k| {
            let d = fam.stage(k).primitive.dim();
            let r = off..off + d;
            off += d;
            r
        })
        .collect()
}

/// Solves a counterpart and fails unless the status is optimal.
pub fn solve_optimal(cp: &Counterpart, opts: &SolveOptions) -> Result<Solution> {
    let sol = cp.solve(opts)?;
    match sol.status {
        SolveStatus::Optimal => Ok(sol),
        SolveStatus::UnsupportedCone => Err(Error::UnsupportedCone(
            "no backend supports this program".into(),
        )),
        other => Err(Error::Solver(format!(
            "counterpart solve ended with {other:?} (residuals {:?})",
            sol.kkt
        ))),
    }
}

#[allow(unused)]
fn _assert_send_sync() {
    fn is<T: Send + Sync>() {}
    is::<Counterpart>();
    is::<conic::ConicProgram>();
}
