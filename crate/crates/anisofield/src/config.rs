//! Experiment configuration: TOML (or JSON) files with a `[model]` block
//! plus per-experiment sections, and the named presets reproducing each
//! theorem's regime.

use crate::params::ModelParams;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Exponents,
    Simulate,
    ScalingScan,
    LimitCheck,
    Axis,
    Sigma,
}

impl std::str::FromStr for Experiment {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "exponents" => Experiment::Exponents,
            "simulate" => Experiment::Simulate,
            "scaling-scan" => Experiment::ScalingScan,
            "limit-check" => Experiment::LimitCheck,
            "axis" => Experiment::Axis,
            "sigma" => Experiment::Sigma,
            other => {
                return Err(Error::Config(format!(
                    "unknown experiment '{other}' (expected exponents|simulate|scaling-scan|limit-check|axis|sigma)"
                )))
            }
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    pub gammas: Vec<f64>,
    pub lambdas: Vec<f64>,
    #[serde(default = "default_x")]
    pub x: [f64; 2],
    /// Rescale x2 per gamma to tame floor quantization of the rectangle
    /// side; the effective x is recorded per cell.
    #[serde(default = "default_true")]
    pub auto_x2: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitCheckConfig {
    pub gamma: f64,
    /// Ascending; the pass verdict uses the largest, the trend compares
    /// the largest against the smallest.
    pub lambdas: Vec<f64>,
    pub x_points: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub lambda: f64,
    pub gamma: f64,
    #[serde(default = "default_x")]
    pub x: [f64; 2],
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    /// Export the first replicate as flat binary + JSON sidecar.
    #[serde(default)]
    pub export_binary: bool,
    /// Export the first replicate as CSV (small grids).
    #[serde(default)]
    pub export_csv: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisConfig {
    #[serde(default = "default_directions")]
    pub n_directions: usize,
    #[serde(default = "default_radii")]
    pub radii: Vec<f64>,
    /// Also estimate decay exponents of the covariance along/off the
    /// predicted axis (heavier: effectively untruncated lattice sums).
    #[serde(default = "default_true")]
    pub check_covariance: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SigmaConfig {
    /// Family labels, e.g. "V~22", "V11", "V~00".
    pub families: Vec<String>,
    #[serde(default = "default_sigma_points")]
    pub x_points: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Max |H^(gamma) - H(gamma)| over the scan grid.
    #[serde(default = "d_slope")]
    pub slope: f64,
    /// Half-width of the accepted window around the theoretical gamma0.
    #[serde(default = "d_gamma0")]
    pub gamma0_window: f64,
    /// Entrywise relative deviation of normalized covariances.
    #[serde(default = "d_limit")]
    pub limit_rel: f64,
    /// Fraction of entries that must improve from the smallest to the
    /// largest lambda.
    #[serde(default = "d_trend")]
    pub trend_fraction: f64,
    #[serde(default = "d_axis_deg")]
    pub axis_degrees: f64,
    #[serde(default = "d_axis_exp")]
    pub axis_exponent: f64,
    /// Relative spread of the power-law ratio across sigma x-points.
    #[serde(default = "d_sigma_ratio")]
    pub sigma_ratio: f64,
}

fn d_slope() -> f64 {
    0.07
}
fn d_gamma0() -> f64 {
    0.15
}
fn d_limit() -> f64 {
    0.10
}
fn d_trend() -> f64 {
    7.0 / 9.0
}
fn d_axis_deg() -> f64 {
    2.0
}
fn d_axis_exp() -> f64 {
    0.05
}
fn d_sigma_ratio() -> f64 {
    0.01
}

impl Default for Tolerances {
    fn default() -> Self {
        toml::from_str("").unwrap()
    }
}

fn default_x() -> [f64; 2] {
    [1.0, 1.0]
}
fn default_true() -> bool {
    true
}
fn default_replicates() -> usize {
    500
}
fn default_directions() -> usize {
    24
}
fn default_radii() -> Vec<f64> {
    vec![100.0, 200.0, 400.0, 800.0, 1600.0, 3200.0]
}
fn default_sigma_points() -> Vec<[f64; 2]> {
    vec![[1.0, 1.0], [2.0, 3.0], [0.5, 2.0]]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Optional here; the CLI positional takes precedence.
    #[serde(default)]
    pub experiment: Option<Experiment>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// 0 = all available cores.
    #[serde(default)]
    pub threads: usize,
    pub model: ModelParams,
    #[serde(default)]
    pub scan: Option<ScanConfig>,
    #[serde(default)]
    pub limit_check: Option<LimitCheckConfig>,
    #[serde(default)]
    pub simulate: Option<SimulateConfig>,
    #[serde(default)]
    pub axis: Option<AxisConfig>,
    #[serde(default)]
    pub sigma: Option<SigmaConfig>,
    #[serde(default)]
    pub tolerances: Tolerances,
}

fn default_seed() -> u64 {
    0x414e49534f
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let is_json = path.extension().is_some_and(|e| e == "json");
        Self::from_str_format(&text, is_json)
    }

    pub fn from_str_format(text: &str, json: bool) -> Result<Self> {
        let cfg: ExperimentConfig = if json {
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?
        } else {
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?
        };
        cfg.model.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }
}

/// Named presets, one per theorem regime.
pub const PRESET_NAMES: [&str; 6] = [
    "thm22-incongruous",
    "thm22-congruous",
    "thm23-incongruous",
    "thm24-congruous",
    "thm25-small-q",
    "thm25-large-q",
];

/// Resolve a preset name to its embedded config.
pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let (q, b): ((f64, f64), [[f64; 2]; 2]) = match name {
        "thm22-incongruous" => ((1.2, 1.6), [[1.0, 0.5], [0.7, 1.0]]),
        "thm22-congruous" => ((1.2, 1.6), [[1.0, 0.5], [0.0, 1.0]]),
        "thm23-incongruous" => ((1.15, 2.2), [[1.0, 0.5], [0.7, 1.0]]),
        "thm24-congruous" => ((1.3, 4.0), [[1.0, 0.5], [0.0, 1.0]]),
        "thm25-small-q" => ((1.25, 1.25), [[1.0, 0.5], [0.7, 1.0]]),
        "thm25-large-q" => ((1.75, 1.75), [[1.0, 0.5], [0.7, 1.0]]),
        other => {
            return Err(Error::Config(format!(
                "unknown preset '{other}' (known: {})",
                PRESET_NAMES.join(", ")
            )))
        }
    };
    let mut model = ModelParams::new(q.0, q.1, b);
    model.m = 512;
    Ok(ExperimentConfig {
        experiment: None,
        seed: default_seed(),
        output: None,
        threads: 0,
        model,
        scan: Some(ScanConfig {
            gammas: (0..9).map(|i| 0.4 + 0.15 * i as f64).collect(),
            lambdas: vec![48.0, 68.0, 96.0, 136.0, 192.0],
            x: [1.0, 1.0],
            auto_x2: true,
        }),
        limit_check: Some(LimitCheckConfig {
            gamma: 2.0,
            lambdas: vec![64.0, 256.0],
            x_points: vec![
                [0.5, 0.5],
                [0.5, 1.0],
                [0.5, 1.5],
                [1.0, 0.5],
                [1.0, 1.0],
                [1.0, 1.5],
                [1.5, 0.5],
                [1.5, 1.0],
                [1.5, 1.5],
            ],
        }),
        simulate: Some(SimulateConfig {
            lambda: 64.0,
            gamma: 1.3,
            x: [1.0, 1.0],
            replicates: 500,
            export_binary: false,
            export_csv: false,
        }),
        axis: Some(AxisConfig {
            n_directions: default_directions(),
            radii: default_radii(),
            check_covariance: true,
        }),
        sigma: Some(SigmaConfig {
            families: vec!["V~22".into()],
            x_points: default_sigma_points(),
        }),
        tolerances: Tolerances::default(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_minimal_toml() {
        let cfg = ExperimentConfig::from_str_format(
            r#"
            experiment = "exponents"
            [model]
            q1 = 1.2
            q2 = 1.6
            b = [[1.0, 0.5], [0.7, 1.0]]
            "#,
            false,
        )
        .unwrap();
        assert_eq!(cfg.experiment, Some(Experiment::Exponents));
        assert_eq!(cfg.model.q1, 1.2);
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = ExperimentConfig::from_str_format(
            r#"
            experiment = "exponents"
            surprise = 1
            [model]
            q1 = 1.2
            q2 = 1.6
            b = [[1.0, 0.5], [0.7, 1.0]]
            "#,
            false,
        );
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn invalid_q_rejected_at_parse() {
        let err = ExperimentConfig::from_str_format(
            r#"
            [model]
            q1 = 3.0
            q2 = 4.0
            b = [[1.0, 0.0], [0.0, 1.0]]
            "#,
            false,
        );
        assert!(err.is_err());
    }

    #[test]
    fn presets_resolve_and_validate() {
        for name in PRESET_NAMES {
            let cfg = preset(name).unwrap();
            cfg.model.validate().unwrap();
        }
        assert!(preset("thm99").is_err());
    }
}
