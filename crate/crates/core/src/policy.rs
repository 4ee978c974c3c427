//! Affine policies in primitive coordinates and their recovery in
//! disturbance coordinates.
//!
//! A counterpart solution gives `u = P s + p` with `s ∈ 𝒮`. To act on a
//! measured `w ∈ 𝒲` we need some `s` with `Y s + y = w`: the inverse when
//! every `Y_k` is invertible, otherwise the stage-wise minimum-norm lifting
//! `L_k(w) = argmin {‖z‖² : z ∈ 𝕊_k, Y_k z + y_k = w}`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::conic::{self, Cone, ConeKind, ProgramBuilder, SolveOptions, SolveStatus};
use crate::error::{dim_check, Error, Result};
use crate::model::{split_blocks, stack_blocks, CausalityMask};
use crate::serde_mat;
use crate::uncertainty::{PrimitiveSet, PrimitiveShape, UncertaintyFamily};

/// Largest condition number for which `Y⁻¹` is used directly.
pub const MAX_CONDITION: f64 = 1e12;
/// Membership and reconstruction tolerance of the lifting.
pub const LIFT_TOL: f64 = 1e-6;
/// Slack below which a primitive row counts as active when polishing a lift.
const POLISH_ACTIVE_TOL: f64 = 1e-7;
/// Membership tolerance for primitive-coordinate evaluation.
pub const PRIMITIVE_TOL: f64 = 1e-9;

pub const POLICY_SCHEMA_VERSION: u32 = 1;

/// `u = P s + p` with `P` zero wherever causality forbids a dependency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffinePolicy {
    pub horizon: usize,
    pub nu: usize,
    /// Primitive dimension per stage.
    pub n_s: Vec<usize>,
    #[serde(rename = "P", with = "serde_mat::matrix")]
    pub p_mat: DMatrix<f64>,
    #[serde(rename = "p", with = "serde_mat::vector")]
    pub p_vec: DVector<f64>,
    pub causality: CausalityMask,
}

impl AffinePolicy {
    /// Validates shapes and that masked blocks are exactly zero.
    pub fn new(
        horizon: usize,
        nu: usize,
        n_s: Vec<usize>,
        p_mat: DMatrix<f64>,
        p_vec: DVector<f64>,
        causality: CausalityMask,
    ) -> Result<Self> {
        dim_check("stage primitive dimensions", horizon, n_s.len())?;
        dim_check("causality mask inputs", nu, causality.nu())?;
        dim_check("P rows", horizon * nu, p_mat.nrows())?;
        dim_check("P columns", n_s.iter().sum(), p_mat.ncols())?;
        dim_check("p", horizon * nu, p_vec.len())?;
        if p_mat.iter().chain(p_vec.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("policy".into()));
        }
        let pol = Self::from_parts(horizon, nu, n_s, p_mat, p_vec, causality);
        for t in 0..horizon {
            for a in 0..nu {
                let mut off = 0;
                for k in 0..horizon {
                    let w = pol.n_s[k];
                    if !pol.causality.allows(t, a, k)
                        && (off..off + w).any(|c| pol.p_mat[(t * nu + a, c)] != 0.0)
                    {
                        return Err(Error::InvalidArgument(format!(
                            "input {a} at stage {t} depends on stage {k} against its causality"
                        )));
                    }
                    off += w;
                }
            }
        }
        Ok(pol)
    }

    pub(crate) fn from_parts(
        horizon: usize,
        nu: usize,
        n_s: Vec<usize>,
        p_mat: DMatrix<f64>,
        p_vec: DVector<f64>,
        causality: CausalityMask,
    ) -> Self {
        Self {
            horizon,
            nu,
            n_s,
            p_mat,
            p_vec,
            causality,
        }
    }

    /// The constant policy `u = p`.
    pub fn constant(
        horizon: usize,
        nu: usize,
        n_s: Vec<usize>,
        p_vec: DVector<f64>,
    ) -> Result<Self> {
        let cols = n_s.iter().sum();
        Self::new(
            horizon,
            nu,
            n_s,
            DMatrix::zeros(horizon * nu, cols),
            p_vec,
            CausalityMask::causal(nu),
        )
    }

    /// `P s + p` without a membership check.
    pub fn apply(&self, s: &DVector<f64>) -> DVector<f64> {
        &self.p_mat * s + &self.p_vec
    }

    /// `P s + p` for `s ∈ 𝒮`.
    pub fn evaluate_primitive(
        &self,
        fam: &UncertaintyFamily,
        s: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        dim_check("primitive vector", self.p_mat.ncols(), s.len())?;
        let mut off = 0;
        for k in 0..self.horizon {
            let prim = &fam.stage(k).primitive;
            dim_check("stage primitive dimension", self.n_s[k], prim.dim())?;
            let sk = s.rows(off, self.n_s[k]).into_owned();
            let v = prim.violation(&sk);
            if v > PRIMITIVE_TOL {
                return Err(Error::NotInSet { distance: v });
            }
            off += self.n_s[k];
        }
        Ok(self.apply(s))
    }
}

fn condition_number(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 1.0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let hi = sv.max();
    let lo = sv.min();
    if lo <= 0.0 || !lo.is_finite() {
        f64::INFINITY
    } else {
        hi / lo
    }
}

#[derive(Debug, Clone)]
enum StageMap {
    Inverse(DMatrix<f64>),
    /// Interval primitive and diagonal `Y`: coordinate-wise closed form.
    Intervals {
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
    Program,
}

#[derive(Debug, Clone)]
struct StageLift {
    primitive: PrimitiveSet,
    y_mat: DMatrix<f64>,
    y_vec: DVector<f64>,
    map: StageMap,
}

/// Stage-wise minimum-norm lifting `𝒲 → 𝒮`.
#[derive(Debug, Clone)]
pub struct LiftingOperator {
    stages: Vec<StageLift>,
}

fn is_diagonal(m: &DMatrix<f64>) -> bool {
    m.is_square() && (0..m.nrows()).all(|i| (0..m.ncols()).all(|j| i == j || m[(i, j)] == 0.0))
}

impl LiftingOperator {
    /// Builds the operator for per-stage `(Y_k, y_k)`.
    pub fn new(
        fam: &UncertaintyFamily,
        y_mats: &[DMatrix<f64>],
        y_vecs: &[DVector<f64>],
    ) -> Result<Self> {
        dim_check("shaping offsets", y_mats.len(), y_vecs.len())?;
        fam.check_horizon(y_mats.len())?;
        let stages = y_mats
            .iter()
            .zip(y_vecs)
            .enumerate()
            .map(|(k, (y, yv))| {
                let primitive = fam.stage(k).primitive.clone();
                dim_check("Y rows", fam.n_w, y.nrows())?;
                dim_check("Y columns", primitive.dim(), y.ncols())?;
                dim_check("y", fam.n_w, yv.len())?;
                if y.iter().chain(yv.iter()).any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite("shaping parameters".into()));
                }
                let map = if y.is_square() && condition_number(y) <= MAX_CONDITION {
                    StageMap::Inverse(y.clone().try_inverse().ok_or_else(|| {
                        Error::Solver("well-conditioned Y failed to invert".into())
                    })?)
                } else if let (PrimitiveShape::Intervals { lo, hi }, true) =
                    (primitive.shape(), is_diagonal(y))
                {
                    StageMap::Intervals {
                        lo: lo.clone(),
                        hi: hi.clone(),
                    }
                } else {
                    StageMap::Program
                };
                Ok(StageLift {
                    primitive,
                    y_mat: y.clone(),
                    y_vec: yv.clone(),
                    map,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { stages })
    }

    pub fn horizon(&self) -> usize {
        self.stages.len()
    }

    /// True iff every stage uses `Y_k⁻¹`.
    pub fn is_bijective(&self) -> bool {
        self.stages
            .iter()
            .all(|s| matches!(s.map, StageMap::Inverse(_)))
    }

    /// `L(w)`; fails with `NotInSet` if `w ∉ 𝒲` beyond tolerance.
    pub fn lift(&self, w: &DVector<f64>) -> Result<DVector<f64>> {
        let n_w = self.stages.first().map_or(0, |s| s.y_mat.nrows());
        dim_check("disturbance sequence", n_w * self.stages.len(), w.len())?;
        let blocks = split_blocks(w, n_w);
        let parts = self
            .stages
            .iter()
            .zip(&blocks)
            .map(|(st, wk)| st.lift(wk))
            .collect::<Result<Vec<_>>>()?;
        Ok(stack_blocks(&parts))
    }

    /// `𝐘 s + 𝐲`.
    pub fn embed(&self, s: &DVector<f64>) -> DVector<f64> {
        let mut off = 0;
        let parts: Vec<DVector<f64>> = self
            .stages
            .iter()
            .map(|st| {
                let d = st.y_mat.ncols();
                let v = &st.y_mat * s.rows(off, d) + &st.y_vec;
                off += d;
                v
            })
            .collect();
        stack_blocks(&parts)
    }
}

impl StageLift {
    fn scale(&self, w: &DVector<f64>) -> f64 {
        1.0_f64.max(w.amax()).max(self.y_vec.amax())
    }

    fn accept(&self, z: DVector<f64>, w: &DVector<f64>) -> Result<DVector<f64>> {
        let recon = (&self.y_mat * &z + &self.y_vec - w).amax();
        let viol = self.primitive.violation(&z);
        if recon <= LIFT_TOL * self.scale(w) && viol <= LIFT_TOL {
            Ok(z)
        } else {
            Err(Error::NotInSet {
                distance: recon.max(viol),
            })
        }
    }

    fn lift(&self, w: &DVector<f64>) -> Result<DVector<f64>> {
        match &self.map {
            StageMap::Inverse(inv) => {
                let z = inv * (w - &self.y_vec);
                let viol = self.primitive.violation(&z);
                if viol <= LIFT_TOL {
                    Ok(z)
                } else {
                    Err(Error::NotInSet { distance: viol })
                }
            }
            StageMap::Intervals { lo, hi } => {
                let z = DVector::from_fn(w.len(), |i, _| {
                    let yi = self.y_mat[(i, i)];
                    let rhs = w[i] - self.y_vec[i];
                    if yi.abs() > LIFT_TOL * 1e-3 {
                        rhs / yi
                    } else {
                        0.0_f64.clamp(lo[i], hi[i])
                    }
                });
                self.accept(z, w)
            }
            StageMap::Program => self.lift_program(w),
        }
    }

    /// Adds `G z ⪯_K g` for the primitive on variables `z`.
    fn add_membership(&self, b: &mut ProgramBuilder, z: &[usize]) {
        let g = self.primitive.g_mat();
        let gv = self.primitive.g_vec();
        let mut row = 0;
        for cone in self.primitive.cones() {
            let rows = row..row + cone.dim;
            let terms = |r: usize| -> Vec<(usize, f64)> {
                (0..z.len())
                    .filter(|&j| g[(r, j)] != 0.0)
                    .map(|j| (z[j], g[(r, j)]))
                    .collect()
            };
            if cone.kind == ConeKind::Nonnegative {
                for r in rows {
                    b.add_ineq(terms(r), gv[r]);
                }
            } else {
                let sl = b.add_cone_vars(*cone);
                for (i, r) in rows.enumerate() {
                    let mut t = terms(r);
                    t.push((sl.start + i, 1.0));
                    b.add_eq(t, gv[r]);
                }
            }
            row += cone.dim;
        }
    }

    fn lift_program(&self, w: &DVector<f64>) -> Result<DVector<f64>> {
        let n_s = self.primitive.dim();
        let opts = SolveOptions::default();
        // min t  s.t. (t, 1/2, z) rotated, Y z = w - y, z ∈ 𝕊.
        let mut b = ProgramBuilder::new();
        let r = b.add_cone_vars(Cone::rotated(n_s + 2));
        let z: Vec<usize> = (0..n_s).map(|j| r.start + 2 + j).collect();
        b.add_eq([(r.start + 1, 1.0)], 0.5);
        b.add_objective(r.start, 1.0);
        self.add_fit(&mut b, &z, w, None);
        self.add_membership(&mut b, &z);
        let rep = conic::solve(&b.build(), &opts)?;
        if matches!(
            rep.status,
            SolveStatus::Optimal | SolveStatus::Inaccurate | SolveStatus::MaxIterations
        ) && !rep.x.is_empty()
        {
            let zv = DVector::from_iterator(n_s, z.iter().map(|&i| rep.x[i]));
            let zv = self.polish(zv, w);
            if let Ok(z) = self.accept(zv, w) {
                return Ok(z);
            }
        }
        // Phase 1: distance of w from the set, for the error report or a
        // boundary point the main solve could not certify.
        let mut b = ProgramBuilder::new();
        let zr = b.add_free(n_s);
        let z: Vec<usize> = zr.collect();
        let e = b.add_cone_vars(Cone::second_order(w.len() + 1));
        b.add_objective(e.start, 1.0);
        self.add_fit(&mut b, &z, w, Some(e.start + 1));
        self.add_membership(&mut b, &z);
        let rep = conic::solve(&b.build(), &opts)?;
        if rep.x.is_empty() {
            return Err(Error::Solver(format!(
                "lifting phase 1 ended with {:?}",
                rep.status
            )));
        }
        let zv = DVector::from_iterator(n_s, z.iter().map(|&i| rep.x[i]));
        let distance = rep.x[e.start];
        self.accept(zv, w).map_err(|_| Error::NotInSet { distance })
    }

    /// Interior-point iterates pin a min-norm point only to about the square
    /// root of the duality gap. On a polyhedral primitive, re-solve exactly on
    /// the detected active set and keep the result if it stays feasible and
    /// no longer.
    fn polish(&self, z: DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        if !self.primitive.is_polyhedral() {
            return z;
        }
        let g = self.primitive.g_mat();
        let gv = self.primitive.g_vec();
        let slack = gv - g * &z;
        let active: Vec<usize> = (0..gv.len())
            .filter(|&r| slack[r] <= POLISH_ACTIVE_TOL * (1.0 + gv[r].abs()))
            .collect();
        let rows = w.len() + active.len();
        let m = DMatrix::from_fn(rows, z.len(), |i, j| {
            if i < w.len() {
                self.y_mat[(i, j)]
            } else {
                g[(active[i - w.len()], j)]
            }
        });
        let rhs = DVector::from_fn(rows, |i, _| {
            if i < w.len() {
                w[i] - self.y_vec[i]
            } else {
                gv[active[i - w.len()]]
            }
        });
        let Ok(pinv) = m.svd(true, true).pseudo_inverse(1e-12) else {
            return z;
        };
        let zp = pinv * rhs;
        let fits = (&self.y_mat * &zp + &self.y_vec - w).amax() <= 1e-10 * self.scale(w);
        if fits && self.primitive.violation(&zp) <= 1e-10 && zp.norm() <= z.norm() + 1e-9 {
            zp
        } else {
            z
        }
    }

    /// `Y z (+ e) = w - y`.
    fn add_fit(&self, b: &mut ProgramBuilder, z: &[usize], w: &DVector<f64>, slack: Option<usize>) {
        for i in 0..w.len() {
            let mut t: Vec<(usize, f64)> = (0..z.len())
                .filter(|&j| self.y_mat[(i, j)] != 0.0)
                .map(|j| (z[j], self.y_mat[(i, j)]))
                .collect();
            if let Some(e) = slack {
                t.push((e + i, 1.0));
            }
            b.add_eq(t, w[i] - self.y_vec[i]);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecoveryMode {
    AffineInverse,
    LiftedPwa,
}

/// A policy in disturbance coordinates, `π(w) = P L(w) + p`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "PolicyFile", into = "PolicyFile")]
pub struct RecoveredPolicy {
    mode: RecoveryMode,
    policy: AffinePolicy,
    y_mats: Vec<DMatrix<f64>>,
    y_vecs: Vec<DVector<f64>>,
    family: UncertaintyFamily,
    lifting: LiftingOperator,
}

/// Serialized form of a recovered policy.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyFile {
    pub schema_version: u32,
    pub mode: RecoveryMode,
    pub policy: AffinePolicy,
    #[serde(rename = "Y", with = "serde_mat::matrices")]
    pub y_mats: Vec<DMatrix<f64>>,
    #[serde(rename = "y", with = "serde_mat::vectors")]
    pub y_vecs: Vec<DVector<f64>>,
    pub family: UncertaintyFamily,
}

impl TryFrom<PolicyFile> for RecoveredPolicy {
    type Error = Error;

    fn try_from(f: PolicyFile) -> Result<Self> {
        if f.schema_version != POLICY_SCHEMA_VERSION {
            return Err(Error::InvalidArgument(format!(
                "unsupported policy schema_version {}",
                f.schema_version
            )));
        }
        let policy = AffinePolicy::new(
            f.policy.horizon,
            f.policy.nu,
            f.policy.n_s,
            f.policy.p_mat,
            f.policy.p_vec,
            f.policy.causality,
        )?;
        let rp = recover(&policy, &f.y_mats, &f.y_vecs, &f.family)?;
        if rp.mode != f.mode {
            return Err(Error::InvalidArgument(format!(
                "policy file declares {:?} but the shaping implies {:?}",
                f.mode, rp.mode
            )));
        }
        Ok(rp)
    }
}

impl From<RecoveredPolicy> for PolicyFile {
    fn from(r: RecoveredPolicy) -> Self {
        PolicyFile {
            schema_version: POLICY_SCHEMA_VERSION,
            mode: r.mode,
            policy: r.policy,
            y_mats: r.y_mats,
            y_vecs: r.y_vecs,
            family: r.family,
        }
    }
}

impl std::fmt::Display for RecoveryMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RecoveryMode::AffineInverse => "affine-inverse",
            RecoveryMode::LiftedPwa => "lifted-pwa",
        })
    }
}

/// Picks the inverse path when every `Y_k` is square and well conditioned,
/// the lifted path otherwise.
pub fn recover(
    pol: &AffinePolicy,
    y_mats: &[DMatrix<f64>],
    y_vecs: &[DVector<f64>],
    fam: &UncertaintyFamily,
) -> Result<RecoveredPolicy> {
    dim_check("shaping stages", pol.horizon, y_mats.len())?;
    for k in 0..pol.horizon {
        dim_check(
            "stage primitive dimension",
            pol.n_s[k],
            fam.stage(k).primitive.dim(),
        )?;
    }
    let lifting = LiftingOperator::new(fam, y_mats, y_vecs)?;
    let mode = if lifting.is_bijective() {
        RecoveryMode::AffineInverse
    } else {
        RecoveryMode::LiftedPwa
    };
    Ok(RecoveredPolicy {
        mode,
        policy: pol.clone(),
        y_mats: y_mats.to_vec(),
        y_vecs: y_vecs.to_vec(),
        family: fam.clone().for_horizon(pol.horizon)?,
        lifting,
    })
}

/// Recovers the policy of a solved synthesis counterpart.
pub fn recover_solution(
    sol: &crate::reformulate::Solution,
    fam: &UncertaintyFamily,
) -> Result<RecoveredPolicy> {
    let pol = sol
        .policy
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("solution has no policy".into()))?;
    recover(pol, &sol.y_mats, &sol.y_vecs, fam)
}

impl RecoveredPolicy {
    pub fn mode(&self) -> RecoveryMode {
        self.mode
    }

    pub fn policy(&self) -> &AffinePolicy {
        &self.policy
    }

    pub fn shaping(&self) -> (&[DMatrix<f64>], &[DVector<f64>]) {
        (&self.y_mats, &self.y_vecs)
    }

    pub fn family(&self) -> &UncertaintyFamily {
        &self.family
    }

    pub fn lifting(&self) -> &LiftingOperator {
        &self.lifting
    }

    /// `π(w)`; fails with `NotInSet` for `w ∉ 𝒲`.
    pub fn evaluate(&self, w: &DVector<f64>) -> Result<DVector<f64>> {
        let s = self.lifting.lift(w)?;
        Ok(self.policy.apply(&s))
    }
}

pub fn evaluate_recovered(rp: &RecoveredPolicy, w: &DVector<f64>) -> Result<DVector<f64>> {
    rp.evaluate(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::InputCausality;
    use crate::uncertainty::{make_ellipsoid, make_polytope, make_rectangle, ObjectiveKind};
    use approx::assert_abs_diff_eq;

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_vec(v.to_vec())
    }

    #[test]
    fn zero_gain_is_constant() {
        let fam = make_rectangle(1).unwrap();
        let pol = AffinePolicy::constant(2, 1, vec![1, 1], dv(&[3.0, -1.0])).unwrap();
        for s in [[-1.0, 1.0], [0.3, 0.2], [1.0, -1.0]] {
            assert_eq!(
                pol.evaluate_primitive(&fam, &dv(&s)).unwrap(),
                dv(&[3.0, -1.0])
            );
        }
        assert!(matches!(
            pol.evaluate_primitive(&fam, &dv(&[1.5, 0.0])),
            Err(Error::NotInSet { .. })
        ));
    }

    #[test]
    fn strict_causality_rejects_diagonal_block() {
        let mask = CausalityMask::new(vec![InputCausality::StrictlyCausal]);
        let bad = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 1.0]);
        assert!(AffinePolicy::new(2, 1, vec![1, 1], bad, dv(&[0.0, 0.0]), mask.clone()).is_err());
        let ok = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0]);
        let pol = AffinePolicy::new(2, 1, vec![1, 1], ok, dv(&[0.0, 0.0]), mask).unwrap();
        let fam = make_rectangle(1).unwrap();
        let a = pol.evaluate_primitive(&fam, &dv(&[0.2, 0.1])).unwrap();
        let b = pol.evaluate_primitive(&fam, &dv(&[0.2, -0.9])).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invertible_lifting_is_inverse() {
        let fam = make_ellipsoid(2).unwrap();
        let y = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let yv = dv(&[1.0, -1.0]);
        let lop = LiftingOperator::new(&fam, std::slice::from_ref(&y), std::slice::from_ref(&yv)).unwrap();
        assert!(lop.is_bijective());
        let s = dv(&[0.3, -0.4]);
        let w = &y * &s + &yv;
        assert_abs_diff_eq!(lop.lift(&w).unwrap(), s, epsilon = 1e-12);
        assert!(lop.lift(&(&y * dv(&[1.0, 1.0]) + &yv)).is_err());
    }

    #[test]
    fn simplex_centroid_lifts_to_uniform_weights() {
        let fam = make_polytope(
            2,
            3,
            ObjectiveKind::VertexPushing {
                directions: vec![dv(&[0.0, 0.0]); 3],
            },
        )
        .unwrap();
        let y = DMatrix::from_row_slice(2, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let lop = LiftingOperator::new(&fam, &[y], &[dv(&[0.0, 0.0])]).unwrap();
        let s = lop.lift(&dv(&[1.0 / 3.0, 1.0 / 3.0])).unwrap();
        assert_abs_diff_eq!(s, dv(&[1.0 / 3.0; 3]), epsilon = 1e-6);
        match lop.lift(&dv(&[1.0, 1.0])) {
            Err(Error::NotInSet { distance }) => assert!(distance > 0.1),
            other => panic!("expected NotInSet, got {other:?}"),
        }
    }

    #[test]
    fn degenerate_rectangle_uses_lifting() {
        let fam = make_rectangle(2).unwrap();
        let y = DMatrix::from_diagonal(&dv(&[1.0, 0.0]));
        let pol = AffinePolicy::constant(1, 1, vec![2], dv(&[0.0])).unwrap();
        let rp = recover(&pol, &[y], &[dv(&[0.0, 2.0])], &fam).unwrap();
        assert_eq!(rp.mode(), RecoveryMode::LiftedPwa);
        let s = rp.lifting().lift(&dv(&[0.5, 2.0])).unwrap();
        assert_abs_diff_eq!(s, dv(&[0.5, 0.0]), epsilon = 1e-12);
        assert!(rp.evaluate(&dv(&[0.5, 2.1])).is_err());
    }

    #[test]
    fn center_maps_to_offset() {
        let fam = make_rectangle(1).unwrap();
        let pol = AffinePolicy::new(
            1,
            1,
            vec![1],
            DMatrix::from_element(1, 1, 2.0),
            dv(&[0.7]),
            CausalityMask::causal(1),
        )
        .unwrap();
        let rp = recover(
            &pol,
            &[DMatrix::from_element(1, 1, 3.0)],
            &[dv(&[1.0])],
            &fam,
        )
        .unwrap();
        assert_eq!(rp.mode(), RecoveryMode::AffineInverse);
        assert_abs_diff_eq!(rp.evaluate(&dv(&[1.0])).unwrap()[0], 0.7, epsilon = 1e-15);
        assert_abs_diff_eq!(rp.evaluate(&dv(&[4.0])).unwrap()[0], 2.7, epsilon = 1e-12);
    }

    #[test]
    fn policy_file_round_trip() {
        let fam = make_rectangle(1).unwrap();
        let pol = AffinePolicy::constant(1, 1, vec![1], dv(&[0.25])).unwrap();
        let rp = recover(
            &pol,
            &[DMatrix::from_element(1, 1, 2.0)],
            &[dv(&[0.0])],
            &fam,
        )
        .unwrap();
        let text = serde_json::to_string(&rp).unwrap();
        let back: RecoveredPolicy = serde_json::from_str(&text).unwrap();
        assert_eq!(back.policy(), rp.policy());
        assert_eq!(back.mode(), rp.mode());
    }
}
