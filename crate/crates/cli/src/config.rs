//! Run configuration, schema version 1. All rates in units of kappa, all
//! lengths in emitter wavelengths.

use antiresonance::geometry::{build_coupling_matrices_with, make_chain, make_grid, EmitterArray, Vec3};
use antiresonance::modes::{coupling_vector_eigenmode, coupling_vector_pattern, coupling_vector_tem};
use antiresonance::oracle::OracleMethod;
use antiresonance::steady_state::CavityParams;
use antiresonance::{CouplingPattern, DipoleKernel, SystemModel, TemMode};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: u32,
    pub geometry: Geometry,
    #[serde(default = "default_dipole")]
    pub dipole: [f64; 3],
    #[serde(default)]
    pub kernel: DipoleKernel,
    pub gamma: f64,
    /// `false` drops the coherent dipole-dipole shifts.
    #[serde(default = "default_true")]
    pub coherent: bool,
    pub coupling: Coupling,
    pub cavity: Cavity,
    #[serde(default)]
    pub scan: Option<Scan>,
    #[serde(default)]
    pub oracle: Option<OracleBlock>,
    #[serde(default)]
    pub cooperativity: Option<CooperativityBlock>,
    #[serde(default)]
    pub output: Output,
}

fn default_dipole() -> [f64; 3] {
    [0.0, 1.0, 0.0]
}

fn default_true() -> bool {
    true
}

fn default_axis() -> [f64; 3] {
    [1.0, 0.0, 0.0]
}

fn default_one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Geometry {
    Chain {
        n: usize,
        spacing: f64,
        #[serde(default = "default_axis")]
        axis: [f64; 3],
    },
    Grid {
        rows: usize,
        cols: usize,
        spacing: f64,
    },
    Explicit {
        positions: Vec<[f64; 3]>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Coupling {
    Pattern {
        pattern: CouplingPattern,
        g: f64,
    },
    Tem {
        m: u32,
        n: u32,
        waist: f64,
        #[serde(default)]
        offset: [f64; 2],
        g_ref: f64,
    },
    Eigenmode {
        g: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cavity {
    #[serde(default = "default_one")]
    pub kappa: f64,
    /// Cavity detuning from the bare emitters, `omega_c - omega_e`.
    #[serde(default)]
    pub delta_c: Option<f64>,
    #[serde(default)]
    pub auto_tune: Option<AutoTune>,
    /// Drive amplitude; only the oracle depends on it.
    #[serde(default = "default_one")]
    pub eta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AutoTune {
    /// Interval of emitter detunings searched for `delta_eff = 0`.
    pub bracket: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scan {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleBlock {
    pub etas: Vec<f64>,
    /// Overrides the scan's point count.
    #[serde(default)]
    pub points: Option<usize>,
    /// Fixed photon cutoff; chosen per drive strength when absent.
    #[serde(default)]
    pub n_max: Option<usize>,
    #[serde(default)]
    pub method: OracleMethod,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "sweep", rename_all = "snake_case", deny_unknown_fields)]
pub enum CooperativityBlock {
    Spacing {
        min: f64,
        max: f64,
        points: usize,
        #[serde(default = "default_samples")]
        samples: usize,
    },
    TemOrder {
        orders: Vec<u32>,
        #[serde(default = "default_samples")]
        samples: usize,
    },
}

fn default_samples() -> usize {
    4001
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Output {
    /// File name stem for every artifact of this run.
    #[serde(default = "default_stem")]
    pub stem: String,
    /// Also write two-column `.dat` files.
    #[serde(default = "default_true")]
    pub dat: bool,
}

fn default_stem() -> String {
    "spectrum".into()
}

impl Default for Output {
    fn default() -> Self {
        Self { stem: default_stem(), dat: true }
    }
}

/// Parsed configuration plus the hash of its source text.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn parse(text: &str) -> Result<LoadedConfig, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let config: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let inner = e.inner();
        CliError::Config(format!(
            "at `{}` (line {}, column {}): {}",
            e.path(),
            inner.line(),
            inner.column(),
            inner
        ))
    })?;
    config.validate()?;
    Ok(LoadedConfig { config, sha256: sha256_hex(text.as_bytes()) })
}

fn positive(field: &str, x: f64) -> Result<(), CliError> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(CliError::Config(format!("`{field}` must be positive and finite, got {x}")))
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.schema != SCHEMA_VERSION {
            return Err(CliError::Config(format!("unsupported schema {} (expected {SCHEMA_VERSION})", self.schema)));
        }
        positive("gamma", self.gamma)?;
        positive("cavity.kappa", self.cavity.kappa)?;
        if !(self.cavity.eta >= 0.0) {
            return Err(CliError::Config("`cavity.eta` must be non-negative".into()));
        }
        match (&self.cavity.delta_c, &self.cavity.auto_tune) {
            (Some(_), Some(_)) | (None, None) => {
                return Err(CliError::Config("`cavity` needs exactly one of `delta_c` and `auto_tune`".into()));
            }
            (_, Some(t)) if !(t.bracket[0] < t.bracket[1]) => {
                return Err(CliError::Config("`cavity.auto_tune.bracket` must be increasing".into()));
            }
            _ => {}
        }
        if let Some(scan) = &self.scan {
            if scan.points < 2 || !(scan.min < scan.max) {
                return Err(CliError::Config("`scan` needs min < max and at least 2 points".into()));
            }
        }
        if let Some(oracle) = &self.oracle {
            if self.scan.is_none() {
                return Err(CliError::Config("`oracle` needs a `scan` block for its grid".into()));
            }
            if oracle.etas.is_empty() || oracle.etas.iter().any(|&e| !(e > 0.0)) {
                return Err(CliError::Config("`oracle.etas` must be a non-empty list of positive drives".into()));
            }
        }
        match &self.cooperativity {
            Some(CooperativityBlock::Spacing { min, max, points, .. }) => {
                if matches!(self.geometry, Geometry::Explicit { .. }) {
                    return Err(CliError::Config("a spacing sweep needs a chain or grid geometry".into()));
                }
                if *points < 1 || !(*min > 0.0 && min <= max) {
                    return Err(CliError::Config("`cooperativity` spacing range is invalid".into()));
                }
            }
            Some(CooperativityBlock::TemOrder { orders, .. }) => {
                if !matches!(self.coupling, Coupling::Tem { .. }) {
                    return Err(CliError::Config("a TEM order sweep needs `coupling.kind = tem`".into()));
                }
                if orders.is_empty() {
                    return Err(CliError::Config("`cooperativity.orders` is empty".into()));
                }
            }
            None => {}
        }
        if self.output.stem.is_empty() || self.output.stem.contains(['/', '\\']) {
            return Err(CliError::Config("`output.stem` must be a plain file name".into()));
        }
        Ok(())
    }

    pub fn array(&self, spacing: Option<f64>) -> Result<EmitterArray, CliError> {
        let dipole = Vec3::from(self.dipole);
        let array = match &self.geometry {
            Geometry::Chain { n, spacing: d, axis } => make_chain(*n, spacing.unwrap_or(*d), Vec3::from(*axis), self.gamma)?,
            Geometry::Grid { rows, cols, spacing: d } => make_grid(*rows, *cols, spacing.unwrap_or(*d), self.gamma)?,
            Geometry::Explicit { positions } => {
                EmitterArray::new(positions.iter().map(|&p| Vec3::from(p)).collect(), dipole, self.gamma)?
            }
        };
        Ok(array.with_dipole(dipole)?)
    }

    /// Model at zero detunings; `spacing` and `tem_order` override the
    /// configured values for sweeps.
    pub fn model(&self, spacing: Option<f64>, tem_order: Option<u32>) -> Result<SystemModel, CliError> {
        let array = self.array(spacing)?;
        let mut couplings = build_coupling_matrices_with(&array, self.kernel)?;
        if !self.coherent {
            couplings = couplings.without_coherent();
        }
        let g = match &self.coupling {
            Coupling::Pattern { pattern, g } => coupling_vector_pattern(array.len(), *g, pattern)?,
            Coupling::Tem { m, n, waist, offset, g_ref } => {
                let mode = TemMode::new(tem_order.unwrap_or(*m), *n, *waist, *offset)?;
                coupling_vector_tem(&array, &mode, *g_ref)?
            }
            Coupling::Eigenmode { g } => coupling_vector_eigenmode(&couplings, *g)?,
        };
        let cavity = CavityParams::new(self.cavity.kappa, 0.0, self.cavity.eta)?;
        Ok(SystemModel::new(cavity, couplings, g, 0.0)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "schema": 1,
        "geometry": {"kind": "chain", "n": 2, "spacing": 0.1},
        "gamma": 0.025,
        "coupling": {"kind": "pattern", "pattern": "alternating", "g": 0.02},
        "cavity": {"delta_c": 0.0}
    }"#;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let loaded = parse(MINIMAL).unwrap();
        assert_eq!(loaded.config.dipole, [0.0, 1.0, 0.0]);
        assert_eq!(loaded.config.cavity.kappa, 1.0);
        assert_eq!(loaded.config.output.stem, "spectrum");
        assert_eq!(loaded.sha256.len(), 64);
        let model = loaded.config.model(None, None).unwrap();
        assert_eq!(model.len(), 2);
        assert_eq!(model.g_vec().as_slice(), &[-0.02, 0.02]);
    }

    #[test]
    fn error_names_the_field() {
        let bad = MINIMAL.replace("\"gamma\": 0.025", "\"gamma\": \"fast\"");
        let CliError::Config(msg) = parse(&bad).unwrap_err() else { panic!() };
        assert!(msg.contains("gamma"), "{msg}");
        assert!(msg.contains("line 4"), "{msg}");
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let bad = MINIMAL.replace("\"schema\": 1,", "\"schema\": 1, \"gama\": 1,");
        assert!(matches!(parse(&bad), Err(CliError::Config(_))));
    }

    #[test]
    fn cavity_needs_exactly_one_source() {
        let both = MINIMAL.replace("{\"delta_c\": 0.0}", "{\"delta_c\": 0.0, \"auto_tune\": {\"bracket\": [-1, 1]}}");
        assert!(matches!(parse(&both), Err(CliError::Config(_))));
        let neither = MINIMAL.replace("{\"delta_c\": 0.0}", "{}");
        assert!(matches!(parse(&neither), Err(CliError::Config(_))));
    }

    #[test]
    fn schema_version_checked() {
        let bad = MINIMAL.replace("\"schema\": 1", "\"schema\": 2");
        assert!(matches!(parse(&bad), Err(CliError::Config(_))));
    }

    #[test]
    fn hash_is_sha256() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
