//! Primitive sets `S = {s : G s ⪯_K g}`, shaping structures for `(Y, y)`,
//! the set families built from them and their size objectives.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::conic::{self, ProgramBuilder, SolveOptions, SolveStatus};
pub use crate::conic::{Cone, ConeKind};
use crate::error::{Error, Result};
use crate::serde_mat;

/// Tolerance used by structural membership tests.
pub const STRUCTURE_TOL: f64 = 1e-9;

/// Recognized primitive shapes. Shapes other than `Custom` get closed-form
/// support functions, samplers and extreme points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case")]
pub enum PrimitiveShape {
    /// Product of intervals `lo_i <= s_i <= hi_i` (the unit ∞-ball when all
    /// intervals are `[-1, 1]`).
    Intervals {
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
    /// Unit 1-norm ball.
    CrossPolytope {
        dim: usize,
    },
    /// Unit Euclidean ball.
    Euclidean {
        dim: usize,
    },
    /// Probability simplex in `R^m`.
    Simplex {
        dim: usize,
    },
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimitiveSet {
    #[serde(with = "serde_mat::matrix")]
    g_mat: DMatrix<f64>,
    #[serde(with = "serde_mat::vector")]
    g_vec: DVector<f64>,
    cones: Vec<Cone>,
    shape: PrimitiveShape,
}

impl PrimitiveSet {
    /// General conic description; `cones` must cover the rows of `G` in order.
    pub fn new(g_mat: DMatrix<f64>, g_vec: DVector<f64>, cones: Vec<Cone>) -> Result<Self> {
        Self::with_shape(g_mat, g_vec, cones, PrimitiveShape::Custom)
    }

    fn with_shape(
        g_mat: DMatrix<f64>,
        g_vec: DVector<f64>,
        cones: Vec<Cone>,
        shape: PrimitiveShape,
    ) -> Result<Self> {
        if g_mat.nrows() != g_vec.len() {
            return Err(Error::DimensionMismatch {
                context: "primitive set rows".into(),
                expected: g_mat.nrows(),
                found: g_vec.len(),
            });
        }
        let total: usize = cones.iter().map(|c| c.dim).sum();
        if total != g_vec.len() {
            return Err(Error::DimensionMismatch {
                context: "primitive cone dimensions".into(),
                expected: g_vec.len(),
                found: total,
            });
        }
        for c in &cones {
            Cone::new(c.kind, c.dim)?;
        }
        if g_mat.iter().chain(g_vec.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("primitive set".into()));
        }
        Ok(Self {
            g_mat,
            g_vec,
            cones,
            shape,
        })
    }

    pub fn intervals(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch {
                context: "interval bounds".into(),
                expected: lo.len(),
                found: hi.len(),
            });
        }
        if lo.iter().zip(&hi).any(|(l, h)| l > h) {
            return Err(Error::InvalidArgument("interval with lo > hi".into()));
        }
        let n = lo.len();
        let mut g = DMatrix::zeros(2 * n, n);
        let mut h = DVector::zeros(2 * n);
        for i in 0..n {
            g[(2 * i, i)] = 1.0;
            h[2 * i] = hi[i];
            g[(2 * i + 1, i)] = -1.0;
            h[2 * i + 1] = -lo[i];
        }
        Self::with_shape(
            g,
            h,
            vec![Cone::nonnegative(2 * n)],
            PrimitiveShape::Intervals { lo, hi },
        )
    }

    /// `[-1, 1]^n`.
    pub fn unit_box(n: usize) -> Self {
        Self::intervals(vec![-1.0; n], vec![1.0; n]).expect("valid box")
    }

    /// `{‖s‖₁ <= 1}` as `2^n` sign-pattern rows.
    pub fn cross_polytope(n: usize) -> Result<Self> {
        if n > 20 {
            return Err(Error::InvalidArgument(format!(
                "1-norm ball in {n} dimensions needs 2^{n} rows"
            )));
        }
        let rows = 1usize << n;
        let g = DMatrix::from_fn(rows, n, |r, i| if r >> i & 1 == 1 { -1.0 } else { 1.0 });
        Self::with_shape(
            g,
            DVector::from_element(rows, 1.0),
            vec![Cone::nonnegative(rows)],
            PrimitiveShape::CrossPolytope { dim: n },
        )
    }

    /// `{‖s‖₂ <= 1}`: `(1, s)` in the second-order cone.
    pub fn euclidean(n: usize) -> Self {
        let mut g = DMatrix::zeros(n + 1, n);
        for i in 0..n {
            g[(i + 1, i)] = -1.0;
        }
        let mut h = DVector::zeros(n + 1);
        h[0] = 1.0;
        Self::with_shape(
            g,
            h,
            vec![Cone::second_order(n + 1)],
            PrimitiveShape::Euclidean { dim: n },
        )
        .expect("valid ball")
    }

    /// `{s >= 0, 1ᵀs = 1}` with the equality as two opposing rows.
    pub fn simplex(m: usize) -> Self {
        let mut g = DMatrix::zeros(m + 2, m);
        for i in 0..m {
            g[(i, i)] = -1.0;
            g[(m, i)] = 1.0;
            g[(m + 1, i)] = -1.0;
        }
        let mut h = DVector::zeros(m + 2);
        h[m] = 1.0;
        h[m + 1] = -1.0;
        Self::with_shape(
            g,
            h,
            vec![Cone::nonnegative(m + 2)],
            PrimitiveShape::Simplex { dim: m },
        )
        .expect("valid simplex")
    }

    pub fn g_mat(&self) -> &DMatrix<f64> {
        &self.g_mat
    }
    pub fn g_vec(&self) -> &DVector<f64> {
        &self.g_vec
    }
    pub fn cones(&self) -> &[Cone] {
        &self.cones
    }
    pub fn shape(&self) -> &PrimitiveShape {
        &self.shape
    }
    pub fn dim(&self) -> usize {
        self.g_mat.ncols()
    }
    pub fn rows(&self) -> usize {
        self.g_mat.nrows()
    }

    pub fn is_polyhedral(&self) -> bool {
        self.cones.iter().all(|c| c.kind == ConeKind::Nonnegative)
    }

    /// Largest cone violation of `g - G s`.
    pub fn violation(&self, s: &DVector<f64>) -> f64 {
        let r = &self.g_vec - &self.g_mat * s;
        let mut off = 0;
        let mut worst: f64 = 0.0;
        for c in &self.cones {
            worst = worst.max(c.violation(&r.as_slice()[off..off + c.dim]));
            off += c.dim;
        }
        worst
    }

    pub fn contains(&self, s: &DVector<f64>, tol: f64) -> bool {
        self.violation(s) <= tol
    }

    /// Number of extreme points, if the set is polyhedral with a known shape.
    pub fn extreme_point_count(&self) -> Option<u128> {
        match &self.shape {
            PrimitiveShape::Intervals { lo, hi } => {
                let free = lo.iter().zip(hi).filter(|(l, h)| l < h).count();
                Some(1u128.checked_shl(free as u32).unwrap_or(u128::MAX))
            }
            PrimitiveShape::CrossPolytope { dim } => Some(2 * *dim as u128),
            PrimitiveShape::Simplex { dim } => Some(*dim as u128),
            _ => None,
        }
    }

    /// Extreme points for known polyhedral shapes.
    pub fn extreme_points(&self) -> Option<Vec<DVector<f64>>> {
        match &self.shape {
            PrimitiveShape::Intervals { lo, hi } => {
                let free: Vec<usize> = (0..lo.len()).filter(|&i| lo[i] < hi[i]).collect();
                if free.len() > 24 {
                    return None;
                }
                Some(
                    (0..1usize << free.len())
                        .map(|mask| {
                            let mut v = DVector::from_column_slice(lo);
                            for (bit, &i) in free.iter().enumerate() {
                                if mask >> bit & 1 == 1 {
                                    v[i] = hi[i];
                                }
                            }
                            v
                        })
                        .collect(),
                )
            }
            PrimitiveShape::CrossPolytope { dim } => Some(
                (0..2 * dim)
                    .map(|k| {
                        let mut v = DVector::zeros(*dim);
                        v[k / 2] = if k % 2 == 0 { 1.0 } else { -1.0 };
                        v
                    })
                    .collect(),
            ),
            PrimitiveShape::Simplex { dim } => Some(
                (0..*dim)
                    .map(|j| {
                        let mut v = DVector::zeros(*dim);
                        v[j] = 1.0;
                        v
                    })
                    .collect(),
            ),
            _ => None,
        }
    }

    /// `max_{s∈S} cᵀs`.
    pub fn support(&self, c: &DVector<f64>) -> Result<f64> {
        Ok(match &self.shape {
            PrimitiveShape::Intervals { lo, hi } => (0..lo.len())
                .map(|i| (c[i] * lo[i]).max(c[i] * hi[i]))
                .sum(),
            PrimitiveShape::CrossPolytope { .. } => c.amax(),
            PrimitiveShape::Euclidean { .. } => c.norm(),
            PrimitiveShape::Simplex { .. } => c.max(),
            PrimitiveShape::Custom => {
                let (prog, s) = self.membership_program();
                let mut prog = prog;
                for i in 0..self.dim() {
                    prog.objective.push((s.start + i, -c[i]));
                }
                let r = conic::solve(&prog, &SolveOptions::default())?;
                if r.status != SolveStatus::Optimal {
                    return Err(Error::Solver(format!(
                        "support function: {:?} ({:?}, {:?})",
                        r.status, r.kkt, r.message
                    )));
                }
                -r.objective
            }
        })
    }

    /// Program over `(s, r)` with `r = g - G s`, `r ∈ K` and no objective.
    fn membership_program(&self) -> (conic::ConicProgram, std::ops::Range<usize>) {
        let mut b = ProgramBuilder::new();
        let s = b.add_free(self.dim());
        let mut row = 0;
        for c in &self.cones {
            let r = b.add_cone_vars(*c);
            for k in 0..c.dim {
                let i = row + k;
                let mut terms = vec![(r.start + k, 1.0)];
                terms.extend((0..self.dim()).map(|j| (s.start + j, self.g_mat[(i, j)])));
                b.add_eq(terms, self.g_vec[i]);
            }
            row += c.dim;
        }
        (b.build(), s)
    }

    /// Checks boundedness by maximizing and minimizing each coordinate.
    pub fn is_compact(&self) -> Result<bool> {
        for i in 0..self.dim() {
            for sign in [1.0, -1.0] {
                let (mut prog, s) = self.membership_program();
                prog.objective.push((s.start + i, -sign));
                let r = conic::solve(&prog, &SolveOptions::default())?;
                match r.status {
                    SolveStatus::Optimal => {}
                    SolveStatus::Unbounded => return Ok(false),
                    other => return Err(Error::Solver(format!("compactness probe: {other:?}"))),
                }
            }
        }
        Ok(true)
    }

    /// Uniform sample from the set (known shapes only).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<DVector<f64>> {
        Some(match &self.shape {
            PrimitiveShape::Intervals { lo, hi } => DVector::from_fn(lo.len(), |i, _| {
                if lo[i] < hi[i] {
                    rng.gen_range(lo[i]..=hi[i])
                } else {
                    lo[i]
                }
            }),
            PrimitiveShape::CrossPolytope { dim } => {
                // Uniform on the simplex of dim+1 points, drop the slack, random signs.
                let e: Vec<f64> = (0..=*dim)
                    .map(|_| {
                        let e: f64 = Exp1.sample(rng);
                        e
                    })
                    .collect();
                let sum: f64 = e.iter().sum();
                DVector::from_fn(*dim, |i, _| {
                    let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
                    sign * e[i] / sum
                })
            }
            PrimitiveShape::Euclidean { dim } => {
                let dir = self.sample_boundary(rng)?;
                let r = rng.gen::<f64>().powf(1.0 / *dim as f64);
                dir * r
            }
            PrimitiveShape::Simplex { dim } => {
                let e: Vec<f64> = (0..*dim)
                    .map(|_| {
                        let e: f64 = Exp1.sample(rng);
                        e
                    })
                    .collect();
                let sum: f64 = e.iter().sum();
                DVector::from_iterator(*dim, e.into_iter().map(|v| v / sum))
            }
            PrimitiveShape::Custom => return None,
        })
    }

    /// Random boundary point (Euclidean ball: uniform on the sphere; other
    /// known shapes: a random extreme point).
    pub fn sample_boundary<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<DVector<f64>> {
        match &self.shape {
            PrimitiveShape::Euclidean { dim } => loop {
                let v = DVector::from_fn(*dim, |_, _| {
                    let z: f64 = StandardNormal.sample(rng);
                    z
                });
                let n = v.norm();
                if n > 1e-12 {
                    return Some(v / n);
                }
            },
            PrimitiveShape::Custom => None,
            _ => {
                let pts = self.extreme_points()?;
                Some(pts[rng.gen_range(0..pts.len())].clone())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShapingFamily {
    /// `Y = r I`, `r >= 0`.
    ScaledIdentity,
    /// `Y = diag(γ)`, `γ >= 0`.
    Diagonal,
    /// `Y = Yᵀ ⪰ 0`.
    SymmetricPsd,
    /// Any `Y`; offset pinned to zero.
    FreeColumnsZeroOffset,
    Free,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OffsetRule {
    Free,
    Zero,
    /// `-Y_ii <= y_i <= Y_ii`.
    BoxBoundedByY,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShapingStructure {
    pub family: ShapingFamily,
    pub offset: OffsetRule,
}

impl ShapingStructure {
    pub fn new(family: ShapingFamily, offset: OffsetRule) -> Self {
        let offset = if family == ShapingFamily::FreeColumnsZeroOffset {
            OffsetRule::Zero
        } else {
            offset
        };
        Self { family, offset }
    }
}

/// Does `(Y, y)` satisfy the structure's parameterization?
pub fn shaping_feasible(
    structure: &ShapingStructure,
    y_mat: &DMatrix<f64>,
    y_vec: &DVector<f64>,
) -> bool {
    let tol = STRUCTURE_TOL;
    if y_mat.nrows() != y_vec.len() {
        return false;
    }
    let square = y_mat.is_square();
    let offdiag_zero = || {
        (0..y_mat.nrows()).all(|i| (0..y_mat.ncols()).all(|j| i == j || y_mat[(i, j)].abs() <= tol))
    };
    let ok = match structure.family {
        ShapingFamily::ScaledIdentity => {
            square
                && offdiag_zero()
                && (y_mat.nrows() == 0 || {
                    let r = y_mat[(0, 0)];
                    r >= -tol && y_mat.diagonal().iter().all(|v| (v - r).abs() <= tol)
                })
        }
        ShapingFamily::Diagonal => {
            square && offdiag_zero() && y_mat.diagonal().iter().all(|v| *v >= -tol)
        }
        ShapingFamily::SymmetricPsd => {
            square
                && (y_mat - y_mat.transpose()).amax() <= tol
                && SymmetricEigen::new(y_mat.clone()).eigenvalues.min() >= -tol
        }
        ShapingFamily::FreeColumnsZeroOffset | ShapingFamily::Free => true,
    };
    ok && match structure.offset {
        OffsetRule::Free => true,
        OffsetRule::Zero => y_vec.amax() <= tol,
        OffsetRule::BoxBoundedByY => {
            square && (0..y_vec.len()).all(|i| y_vec[i].abs() <= y_mat[(i, i)] + tol)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ObjectiveKind {
    /// `Σ log Y_ii`.
    LogDetDiagonal,
    /// `(Π Y_ii)^(1/n)`; supported for `n <= 2`.
    GeoMeanDiagonal,
    /// `sqrt(det Y)` for symmetric 2×2 `Y`.
    RootDet2x2,
    /// `log det Y`; needs an SDP-capable backend.
    LogDet,
    /// `r` for `Y = r I`.
    Radius,
    /// `Σ c_i Y_ii`.
    LinearWeights { weights: Vec<f64> },
    /// `Σ c_jᵀ Y_j` over columns `Y_j`.
    VertexPushing {
        #[serde(with = "serde_mat::vectors")]
        directions: Vec<DVector<f64>>,
    },
    /// `-Σ ‖d_j - Y_j‖²` over columns `Y_j`.
    VertexPulling {
        #[serde(with = "serde_mat::vectors")]
        anchors: Vec<DVector<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeObjective {
    #[serde(flatten)]
    pub kind: ObjectiveKind,
    pub weight: f64,
}

impl SizeObjective {
    pub fn new(kind: ObjectiveKind) -> Self {
        Self { kind, weight: 1.0 }
    }

    pub fn weighted(kind: ObjectiveKind, weight: f64) -> Self {
        Self { kind, weight }
    }
}

/// Unweighted `ϱ(Y S + y)`; `-inf` outside the objective's domain.
pub fn evaluate_objective(obj: &SizeObjective, y_mat: &DMatrix<f64>, _y_vec: &DVector<f64>) -> f64 {
    let diag = || y_mat.diagonal();
    match &obj.kind {
        ObjectiveKind::LogDetDiagonal => {
            let d = diag();
            if d.iter().all(|v| *v > 0.0) {
                d.iter().map(|v| v.ln()).sum()
            } else {
                f64::NEG_INFINITY
            }
        }
        ObjectiveKind::GeoMeanDiagonal => {
            let d = diag();
            if d.iter().all(|v| *v >= 0.0) {
                d.iter().product::<f64>().powf(1.0 / d.len().max(1) as f64)
            } else {
                f64::NEG_INFINITY
            }
        }
        ObjectiveKind::RootDet2x2 => {
            let (a, b, c) = (y_mat[(0, 0)], y_mat[(1, 1)], y_mat[(0, 1)]);
            let det = a * b - c * c;
            if a >= 0.0 && b >= 0.0 && det >= 0.0 {
                det.sqrt()
            } else {
                f64::NEG_INFINITY
            }
        }
        ObjectiveKind::LogDet => match y_mat.clone().cholesky() {
            Some(ch) => 2.0 * ch.l().diagonal().iter().map(|d| d.ln()).sum::<f64>(),
            None => f64::NEG_INFINITY,
        },
        ObjectiveKind::Radius => {
            if y_mat.nrows() == 0 {
                0.0
            } else {
                y_mat[(0, 0)]
            }
        }
        ObjectiveKind::LinearWeights { weights } => {
            weights.iter().zip(diag().iter()).map(|(c, v)| c * v).sum()
        }
        ObjectiveKind::VertexPushing { directions } => directions
            .iter()
            .enumerate()
            .map(|(j, c)| c.dot(&y_mat.column(j)))
            .sum(),
        ObjectiveKind::VertexPulling { anchors } => -anchors
            .iter()
            .enumerate()
            .map(|(j, d)| (d - y_mat.column(j)).norm_squared())
            .sum::<f64>(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BallNorm {
    #[serde(rename = "1")]
    One,
    #[serde(rename = "2")]
    Two,
    #[serde(rename = "inf")]
    Inf,
}

impl BallNorm {
    pub fn from_p(p: f64) -> Result<Self> {
        if p == 1.0 {
            Ok(BallNorm::One)
        } else if p == 2.0 {
            Ok(BallNorm::Two)
        } else if p.is_infinite() && p > 0.0 {
            Ok(BallNorm::Inf)
        } else {
            Err(Error::InvalidArgument(format!(
                "unsupported ball norm p = {p}"
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "template", rename_all = "kebab-case")]
pub enum Template {
    Ball { p: BallNorm },
    Ellipsoid,
    Rectangle,
    Polytope { m: usize },
    Custom,
}

/// Primitive set and shaping structure of one stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSet {
    pub primitive: PrimitiveSet,
    pub shaping: ShapingStructure,
}

/// A set family: per-stage `(S_k, 𝕐_k)` plus the size objective, summed over
/// stages. A family with one stage is broadcast to any horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyFamily {
    #[serde(flatten)]
    pub template: Template,
    pub n_w: usize,
    pub stages: Vec<StageSet>,
    pub objective: SizeObjective,
}

impl UncertaintyFamily {
    pub fn n_s(&self) -> usize {
        self.stages[0].primitive.dim()
    }

    /// Stage `k`'s set, broadcasting a single-stage family.
    pub fn stage(&self, k: usize) -> &StageSet {
        if self.stages.len() == 1 {
            &self.stages[0]
        } else {
            &self.stages[k]
        }
    }

    /// Replicates a single-stage family over `n` stages.
    pub fn for_horizon(mut self, n: usize) -> Result<Self> {
        match self.stages.len() {
            1 => {
                self.stages = vec![self.stages[0].clone(); n];
                Ok(self)
            }
            k if k == n => Ok(self),
            k => Err(Error::DimensionMismatch {
                context: "family stage count".into(),
                expected: n,
                found: k,
            }),
        }
    }

    /// Accepts a horizon if the family has one stage or exactly `n`.
    pub fn check_horizon(&self, n: usize) -> Result<()> {
        if self.stages.len() == 1 || self.stages.len() == n {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                context: "family stage count".into(),
                expected: n,
                found: self.stages.len(),
            })
        }
    }

    pub fn requires_sdp(&self) -> bool {
        matches!(self.objective.kind, ObjectiveKind::LogDet)
            || (self.n_w > 2
                && self
                    .stages
                    .iter()
                    .any(|s| s.shaping.family == ShapingFamily::SymmetricPsd))
    }

    pub fn with_objective(mut self, objective: SizeObjective) -> Self {
        self.objective = objective;
        self
    }

    pub fn with_weight(mut self, weight: f64) -> Self {
        self.objective.weight = weight;
        self
    }

    pub fn with_offset(mut self, offset: OffsetRule) -> Self {
        for s in &mut self.stages {
            s.shaping = ShapingStructure::new(s.shaping.family, offset);
        }
        self
    }

    pub fn with_primitive(mut self, primitive: PrimitiveSet) -> Result<Self> {
        if primitive.dim() != self.n_s() {
            return Err(Error::DimensionMismatch {
                context: "replacement primitive dimension".into(),
                expected: self.n_s(),
                found: primitive.dim(),
            });
        }
        for s in &mut self.stages {
            s.primitive = primitive.clone();
        }
        Ok(self)
    }
}

fn single(
    template: Template,
    n_w: usize,
    primitive: PrimitiveSet,
    shaping: ShapingStructure,
    objective: SizeObjective,
) -> UncertaintyFamily {
    UncertaintyFamily {
        template,
        n_w,
        stages: vec![StageSet { primitive, shaping }],
        objective,
    }
}

/// `{y + r s : ‖s‖_p <= 1}` with the radius as objective.
pub fn make_ball(p: BallNorm, n_w: usize) -> Result<UncertaintyFamily> {
    if n_w == 0 {
        return Err(Error::InvalidArgument("n_w must be positive".into()));
    }
    let primitive = match p {
        BallNorm::One => PrimitiveSet::cross_polytope(n_w)?,
        BallNorm::Two => PrimitiveSet::euclidean(n_w),
        BallNorm::Inf => PrimitiveSet::unit_box(n_w),
    };
    Ok(single(
        Template::Ball { p },
        n_w,
        primitive,
        ShapingStructure::new(ShapingFamily::ScaledIdentity, OffsetRule::Free),
        SizeObjective::new(ObjectiveKind::Radius),
    ))
}

/// `{y + Y s : ‖s‖₂ <= 1}`, `Y` symmetric PSD. Root-det objective for
/// `n_w <= 2`, symbolic log-det otherwise.
pub fn make_ellipsoid(n_w: usize) -> Result<UncertaintyFamily> {
    if n_w == 0 {
        return Err(Error::InvalidArgument("n_w must be positive".into()));
    }
    let kind = match n_w {
        1 => ObjectiveKind::LogDetDiagonal,
        2 => ObjectiveKind::RootDet2x2,
        _ => ObjectiveKind::LogDet,
    };
    Ok(single(
        Template::Ellipsoid,
        n_w,
        PrimitiveSet::euclidean(n_w),
        ShapingStructure::new(ShapingFamily::SymmetricPsd, OffsetRule::Free),
        SizeObjective::new(kind),
    ))
}

/// Axis-aligned box `{y + diag(γ) s : ‖s‖_∞ <= 1}` with log-volume objective.
pub fn make_rectangle(n_w: usize) -> Result<UncertaintyFamily> {
    if n_w == 0 {
        return Err(Error::InvalidArgument("n_w must be positive".into()));
    }
    Ok(single(
        Template::Rectangle,
        n_w,
        PrimitiveSet::unit_box(n_w),
        ShapingStructure::new(ShapingFamily::Diagonal, OffsetRule::Free),
        SizeObjective::new(ObjectiveKind::LogDetDiagonal),
    ))
}

/// `conv(Y_1..Y_m)`, the image of the simplex. The objective must be
/// `VertexPushing` or `VertexPulling` with `m` vectors of length `n_w`.
pub fn make_polytope(n_w: usize, m: usize, objective: ObjectiveKind) -> Result<UncertaintyFamily> {
    if n_w == 0 || m < n_w {
        return Err(Error::InvalidArgument(format!(
            "polytope needs m >= n_w >= 1 (m = {m}, n_w = {n_w})"
        )));
    }
    let vecs = match &objective {
        ObjectiveKind::VertexPushing { directions } => directions,
        ObjectiveKind::VertexPulling { anchors } => anchors,
        other => {
            return Err(Error::InvalidArgument(format!(
                "polytope objective must place vertices, got {other:?}"
            )))
        }
    };
    if vecs.len() != m || vecs.iter().any(|v| v.len() != n_w) {
        return Err(Error::InvalidArgument(format!(
            "polytope objective needs {m} vectors of length {n_w}"
        )));
    }
    Ok(single(
        Template::Polytope { m },
        n_w,
        PrimitiveSet::simplex(m),
        ShapingStructure::new(ShapingFamily::FreeColumnsZeroOffset, OffsetRule::Zero),
        SizeObjective::new(objective),
    ))
}

/// `m` anchors evenly spaced on a centered circle.
pub fn circle_anchors(m: usize, radius: f64) -> Vec<DVector<f64>> {
    (0..m)
        .map(|j| {
            let a = std::f64::consts::TAU * j as f64 / m as f64;
            DVector::from_vec(vec![radius * a.cos(), radius * a.sin()])
        })
        .collect()
}
