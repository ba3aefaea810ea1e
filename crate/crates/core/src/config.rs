//! Run configuration: a versioned JSON schema with documented defaults.
//! Unknown keys are rejected, and the fully resolved form (defaults
//! applied) is echoed into every report so any report reproduces its run.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::booth::{calibrate_bn_model, BnModel, MblmConfig};
use crate::mips::MipsThresholds;
use crate::sim::{ArchConfig, EngineOptions, FeatureToggles, MipsSettings, ModelDims};
use crate::workload::TraceSpec;

pub const CONFIG_VERSION: u32 = 1;

/// Trace shape without the seed; the run seed feeds the generator.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TraceParams {
    pub length: usize,
    pub d_model: usize,
    pub rho: f64,
    pub duplicate_rate: f64,
    pub near_zero_rate: f64,
}

impl Default for TraceParams {
    fn default() -> TraceParams {
        TraceParams {
            length: 64,
            d_model: 64,
            rho: 0.9,
            duplicate_rate: 0.0,
            near_zero_rate: 0.0,
        }
    }
}

/// All thresholds in one place, with the documented defaults.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct Thresholds {
    /// Early-Skip bound on the hash distance, in bits.
    pub t_zero: u32,
    /// Diff-Reuse band upper bound, in bits.
    pub s_th: u32,
    /// Gate Early-Skip on integrity-hash equality.
    pub integrity_gate: bool,
    /// Near-zero weight cut, in posit-pattern magnitude units.
    pub r_zero_wgt: u8,
    /// Near-zero activation cut, same units.
    pub r_zero_act: u8,
    /// Booth-LUT replay tolerance, in bits.
    pub t_match: u32,
    /// Redundancy score at or above this takes the radix-8 path.
    pub score_threshold: f64,
}

impl Default for Thresholds {
    fn default() -> Thresholds {
        Thresholds {
            t_zero: 1,
            s_th: 4,
            integrity_gate: false,
            r_zero_wgt: 0,
            r_zero_act: 0,
            t_match: 0,
            score_threshold: 0.8,
        }
    }
}

impl Thresholds {
    /// Settings under which no feature may change a value.
    pub fn exact() -> Thresholds {
        Thresholds {
            t_zero: 0,
            s_th: 0,
            integrity_gate: true,
            r_zero_wgt: 0,
            r_zero_act: 0,
            t_match: 0,
            score_threshold: 0.8,
        }
    }

    pub fn mips(&self) -> MipsThresholds {
        MipsThresholds {
            t_zero: self.t_zero,
            s_th: self.s_th,
            integrity_gate: self.integrity_gate,
        }
    }
}

/// MBLM knobs beyond the thresholds.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct MblmSettings {
    /// Booth-LUT entries per triangle slot.
    pub lut_capacity: usize,
    /// Classifier file; absent means a seeded calibration fit.
    pub bn_model_path: Option<String>,
    /// Batches used for the calibration fit.
    pub calibration_batches: usize,
    /// Comparator weight per digit flip.
    pub flip_weight: f64,
    /// Comparator weight per partial-product row.
    pub pp_row_weight: f64,
}

impl Default for MblmSettings {
    fn default() -> MblmSettings {
        MblmSettings {
            lut_capacity: 4,
            bn_model_path: None,
            calibration_batches: 512,
            flip_weight: 1.0,
            pp_row_weight: 2.0,
        }
    }
}

/// The complete run configuration.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub version: u32,
    pub seed: u64,
    pub trace: TraceParams,
    pub model: ModelDims,
    pub arch: ArchConfig,
    pub features: FeatureToggles,
    pub thresholds: Thresholds,
    pub mips: MipsSettings,
    pub mblm: MblmSettings,
    /// Probability a pruning decision is retained for the offline audit.
    pub audit_sample_rate: f64,
    /// Emit decision and batch trace CSVs.
    pub trace_dumps: bool,
}

impl Default for RunConfig {
    fn default() -> RunConfig {
        RunConfig {
            version: CONFIG_VERSION,
            seed: 0,
            trace: TraceParams::default(),
            model: ModelDims::default(),
            arch: ArchConfig::default(),
            features: FeatureToggles::default(),
            thresholds: Thresholds::default(),
            mips: MipsSettings::default(),
            mblm: MblmSettings::default(),
            audit_sample_rate: 0.0,
            trace_dumps: false,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported config version {version} (expected {CONFIG_VERSION})")]
    Version { version: u32 },
    #[error("trace model width {trace} does not match model d_model {model}")]
    DimMismatch { trace: usize, model: usize },
    #[error("audit_sample_rate {rate} outside [0, 1]")]
    AuditRate { rate: f64 },
    #[error(transparent)]
    Trace(#[from] crate::workload::TraceError),
    #[error(transparent)]
    Arch(#[from] crate::sim::ArchError),
    #[error("bn model: {0}")]
    BnModel(#[from] crate::booth::BnError),
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let config: RunConfig = serde_json::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.version != CONFIG_VERSION {
            return Err(ConfigError::Version {
                version: self.version,
            });
        }
        if self.trace.d_model != self.model.d_model {
            return Err(ConfigError::DimMismatch {
                trace: self.trace.d_model,
                model: self.model.d_model,
            });
        }
        if !(0.0..=1.0).contains(&self.audit_sample_rate) {
            return Err(ConfigError::AuditRate {
                rate: self.audit_sample_rate,
            });
        }
        self.trace_spec().validate()?;
        self.arch.validate()?;
        Ok(())
    }

    pub fn trace_spec(&self) -> TraceSpec {
        TraceSpec {
            seed: self.seed,
            length: self.trace.length,
            d_model: self.trace.d_model,
            rho: self.trace.rho,
            duplicate_rate: self.trace.duplicate_rate,
            near_zero_rate: self.trace.near_zero_rate,
        }
    }

    /// Load or calibrate the Booth classifier.
    pub fn bn_model(&self) -> Result<BnModel, ConfigError> {
        let model = match &self.mblm.bn_model_path {
            Some(path) => {
                let text =
                    std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
                        path: path.clone(),
                        source,
                    })?;
                serde_json::from_str(&text)?
            }
            None => {
                let base = MblmConfig {
                    flip_weight: self.mblm.flip_weight,
                    pp_row_weight: self.mblm.pp_row_weight,
                    ..MblmConfig::default()
                };
                calibrate_bn_model(self.seed, self.mblm.calibration_batches, &base)
            }
        };
        model.validate()?;
        Ok(model)
    }

    /// Engine options with every default resolved.
    pub fn engine_options(&self, features: FeatureToggles) -> Result<EngineOptions, ConfigError> {
        Ok(EngineOptions {
            features,
            mips: self.mips.clone(),
            thresholds: self.thresholds.mips(),
            mblm: MblmConfig {
                r_zero_wgt: self.thresholds.r_zero_wgt,
                r_zero_act: self.thresholds.r_zero_act,
                t_match: self.thresholds.t_match,
                score_threshold: self.thresholds.score_threshold,
                model: self.bn_model()?,
                flip_weight: self.mblm.flip_weight,
                pp_row_weight: self.mblm.pp_row_weight,
            },
            lut_capacity: self.mblm.lut_capacity,
            seed: self.seed,
            audit_sample_rate: self.audit_sample_rate,
            trace: self.trace_dumps,
        })
    }

    /// Canonical serialized form and its digest; reports embed both.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn config_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(serde_json::to_string(self).expect("config serializes"));
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
