//! Config-file schemas (all carry `"schema_version": 1`) and construction of
//! library objects from them.

use serde::{Deserialize, Serialize};

use bmkam::fourier::{Domain, FourierTaylor};
use bmkam::singular::{ActionAngleForm, BmFunction, SingularPart};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

fn default_schema() -> u32 {
    SCHEMA_VERSION
}

/// A system is given inline or as a path to a system JSON file; a couple of
/// named builtins are available for the mechanics charts.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SystemSource {
    Path { path: String },
    Builtin(BuiltinSystem),
    Inline(SystemSpec),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BuiltinSystem {
    pub builtin: String,
    #[serde(default)]
    pub mass_ratio: Option<f64>,
}

/// `{n, m, c[], q0, q[], k_mod?, smooth_part}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SystemSpec {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    pub n: usize,
    pub m: usize,
    pub c: Vec<f64>,
    #[serde(default)]
    pub q0: f64,
    #[serde(default)]
    pub q: Vec<f64>,
    #[serde(default)]
    pub k_mod: Option<f64>,
    pub smooth_part: FourierTaylor,
}

impl SystemSpec {
    pub fn build(&self) -> Result<(ActionAngleForm, BmFunction), CliError> {
        let sing = SingularPart::new(self.m, self.q0, self.q.clone())
            .map_err(CliError::config)?;
        let form = match self.k_mod {
            Some(k) => ActionAngleForm::new(self.n, self.m, self.c.clone(), k)
                .map_err(CliError::config)?,
            None => ActionAngleForm::paired_with(self.n, self.c.clone(), &sing)
                .map_err(CliError::config)?,
        };
        Ok((
            form,
            BmFunction::with_singular(sing, self.smooth_part.clone()),
        ))
    }
}

pub fn load_system(src: &SystemSource) -> Result<(ActionAngleForm, BmFunction), CliError> {
    match src {
        SystemSource::Path { path } => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::config(format!("cannot read {path}: {e}")))?;
            let spec: SystemSpec = serde_json::from_str(&text)
                .map_err(|e| CliError::config(format!("bad system file {path}: {e}")))?;
            spec.build()
        }
        SystemSource::Inline(spec) => spec.build(),
        SystemSource::Builtin(_) => Err(CliError::config(
            "builtin systems are only valid for `simulate`".to_string(),
        )),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PointSpec {
    pub phi: Vec<f64>,
    #[serde(rename = "I")]
    pub actions: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulateConfig {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    pub system: SystemSource,
    pub p0: PointSpec,
    pub t_end: f64,
    pub dt: f64,
    #[serde(default)]
    pub i1_floor: Option<f64>,
    #[serde(default)]
    pub energy_tol: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DomainSpecJson {
    pub g_lo: Vec<f64>,
    pub g_hi: Vec<f64>,
    pub rho1: f64,
    pub rho2: f64,
}

impl DomainSpecJson {
    pub fn build(&self) -> Result<Domain, CliError> {
        Domain::new(
            self.g_lo.clone(),
            self.g_hi.clone(),
            self.rho1,
            self.rho2,
        )
        .map_err(CliError::config)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerturbationSpec {
    #[serde(default)]
    pub q0: f64,
    #[serde(default)]
    pub q: Vec<f64>,
    pub smooth_part: FourierTaylor,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScheduleSpec {
    pub tau: f64,
    pub gamma: f64,
    pub nu: f64,
    #[serde(default = "default_qmax")]
    pub q_max: usize,
}

fn default_qmax() -> usize {
    8
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KamConfig {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    pub system: SystemSource,
    pub domain: DomainSpecJson,
    pub perturbation: PerturbationSpec,
    pub schedule: ScheduleSpec,
    #[serde(default)]
    pub i0: Option<Vec<f64>>,
    /// Early-stop factor (0 disables early stopping).
    #[serde(default)]
    pub stop_factor: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoxSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DioSpec {
    pub tau: f64,
    pub gamma: f64,
    #[serde(default = "default_k_scan")]
    pub k_scan: i32,
}

fn default_k_scan() -> i32 {
    50
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResonancesConfig {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    pub system: SystemSource,
    #[serde(rename = "box")]
    pub sample_box: BoxSpec,
    pub dio: DioSpec,
    pub n_samples: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub compare_bounds: bool,
    /// Evaluate the predicates at the critical set (limit scaling factors)
    /// instead of at each sample's radial coordinate.
    #[serde(default)]
    pub at_z: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DesingConfig {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    pub n: usize,
    pub m: usize,
    pub eps_list: Vec<f64>,
    #[serde(default)]
    pub core_coef: Option<f64>,
    #[serde(default)]
    pub core_radius: Option<f64>,
    pub n_samples: usize,
    #[serde(default)]
    pub seed: u64,
    /// "residual" (vector-field comparison) or "transport" (trajectory
    /// round-trip through the tilde chart).
    #[serde(default = "default_desing_mode")]
    pub mode: String,
    #[serde(default)]
    pub t_end: Option<f64>,
    #[serde(default)]
    pub dt: Option<f64>,
}

fn default_desing_mode() -> String {
    "residual".to_string()
}

pub fn read_config<T: serde::de::DeserializeOwned>(path: &str) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read {path}: {e}")))?;
    let v: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| CliError::config(format!("bad JSON in {path}: {e}")))?;
    if let Some(sv) = v.get("schema_version") {
        if sv.as_u64() != Some(SCHEMA_VERSION as u64) {
            return Err(CliError::config(format!(
                "unsupported schema_version {sv} (expected {SCHEMA_VERSION})"
            )));
        }
    }
    serde_json::from_value(v).map_err(|e| CliError::config(format!("bad config {path}: {e}")))
}
