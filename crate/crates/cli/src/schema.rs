//! Problem, result and policy file formats.

use adjset::apps::{CapacityMode, RobustnessSet};
use adjset::conic::{KktResiduals, SolveStatus};
use adjset::model::InputCausality;
use adjset::policy::PolicyFile;
use adjset::reformulate::CounterpartKind;
use adjset::serde_mat;
use adjset::uncertainty::{SizeObjective, UncertaintyFamily};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    #[serde(rename = "A", with = "serde_mat::matrix")]
    pub a: DMatrix<f64>,
    #[serde(rename = "B", with = "serde_mat::matrix")]
    pub b: DMatrix<f64>,
    #[serde(rename = "E", with = "serde_mat::matrix")]
    pub e: DMatrix<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintSection {
    #[serde(rename = "F_x", with = "serde_mat::matrix")]
    pub f_x: DMatrix<f64>,
    #[serde(rename = "f_x", with = "serde_mat::vector")]
    pub f_x_rhs: DVector<f64>,
    #[serde(rename = "F_u", with = "serde_mat::matrix")]
    pub f_u: DMatrix<f64>,
    #[serde(rename = "f_u", with = "serde_mat::vector")]
    pub f_u_rhs: DVector<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSection {
    #[serde(default)]
    pub state: Option<Vec<f64>>,
    #[serde(default)]
    pub input: Option<Vec<f64>>,
    #[serde(default)]
    pub terminal: Option<Vec<f64>>,
}

/// Family selection: a template or a full family.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "template", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FamilySpec {
    Rectangle,
    Ellipsoid,
    Ball {
        p: f64,
    },
    /// Simplex image with `m` vertices. Without an explicit vertex-placing
    /// `objective` the vertices are pulled toward anchors on a circle of
    /// `radius` (planar disturbances only).
    Polytope {
        m: usize,
        #[serde(default)]
        radius: Option<f64>,
    },
    Custom {
        family: Box<UncertaintyFamily>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Synthesis,
    Analysis,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Preset {
    /// The planar robustness instance. `m` and `radius` apply to the
    /// polytope set (defaults 30 and 40).
    Robustness {
        set: RobustnessKind,
        #[serde(default)]
        m: Option<usize>,
        #[serde(default)]
        radius: Option<f64>,
    },
    /// The surrogate reserve problem.
    Reserve {
        #[serde(default)]
        prices: Option<Vec<f64>>,
        /// CSV path, relative to the problem file.
        #[serde(default)]
        prices_csv: Option<String>,
        lambda: f64,
        #[serde(default = "default_capacity_mode")]
        capacity: CapacityMode,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RobustnessKind {
    Rectangle,
    Ellipsoid,
    Polytope,
}

impl RobustnessKind {
    pub fn to_set(self, m: Option<usize>, radius: Option<f64>) -> RobustnessSet {
        match self {
            RobustnessKind::Rectangle => RobustnessSet::Rectangle,
            RobustnessKind::Ellipsoid => RobustnessSet::Ellipsoid,
            RobustnessKind::Polytope => RobustnessSet::Polytope {
                m: m.unwrap_or(30),
                radius: radius.unwrap_or(40.0),
            },
        }
    }
}

fn default_capacity_mode() -> CapacityMode {
    CapacityMode::Symmetric
}

/// A problem file: either a preset or the generic sections.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub schema_version: u32,
    #[serde(default)]
    pub preset: Option<Preset>,
    #[serde(default)]
    pub system: Option<SystemSection>,
    #[serde(default)]
    pub constraints: Option<ConstraintSection>,
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    #[serde(default)]
    pub horizon: Option<usize>,
    #[serde(default)]
    pub cost: Option<CostSection>,
    #[serde(default)]
    pub family: Option<FamilySpec>,
    #[serde(default)]
    pub objective: Option<SizeObjective>,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub causality: Option<Vec<InputCausality>>,
    #[serde(default)]
    pub mode: Option<Mode>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Timing {
    pub solve_time: f64,
    pub iterations: u32,
}

/// Output of `solve`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultFile {
    pub schema_version: u32,
    pub kind: CounterpartKind,
    pub status: SolveStatus,
    /// Counterpart objective (`τ - λ Σ ϱ`, or `-Σ ϱ` for analysis).
    pub objective: f64,
    /// Constant cost offset of the problem, not included in `objective`.
    pub cost_constant: f64,
    pub lambda: f64,
    pub tau: Option<f64>,
    #[serde(rename = "Y", with = "serde_mat::matrices")]
    pub y_mats: Vec<DMatrix<f64>>,
    #[serde(rename = "y", with = "serde_mat::vectors")]
    pub y_vecs: Vec<DVector<f64>>,
    #[serde(rename = "P", default, skip_serializing_if = "Option::is_none")]
    pub p_mat: Option<Vec<Vec<f64>>>,
    #[serde(rename = "p", default, skip_serializing_if = "Option::is_none")]
    pub p_vec: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_inputs: Option<Vec<f64>>,
    pub size_terms: Vec<f64>,
    /// Area of the first-stage set for planar families.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub volume: Option<f64>,
    pub residuals: KktResiduals,
    pub timing: Timing,
    pub backend: String,
    /// Replayable policy for `evaluate`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<PolicyFile>,
}
