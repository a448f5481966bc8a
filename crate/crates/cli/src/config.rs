//! Run configuration: TOML or JSON file, then command-line overrides.

use std::fs;
use std::path::{Path, PathBuf};

use phasesync::simharness::SimConfig;
use phasesync::states::Init;
use phasesync::{BandSpec, Metric};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Everything a run needs; also the `config` entry of every emitted manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    /// Overrides the per-section seeds when set.
    pub seed: Option<u64>,
    pub simulate: SimConfig,
    pub analyze: AnalyzeConfig,
    pub states: StatesConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum TensorFormat {
    #[default]
    Csv,
    Bin,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyzeConfig {
    pub manifest: Option<PathBuf>,
    pub band: BandSpec,
    pub metrics: Vec<Metric>,
    /// Window lengths for the windowed metrics.
    pub windows: Vec<usize>,
    pub format: TensorFormat,
    /// Also write each subject's phase matrix.
    pub write_phases: bool,
}

impl Default for AnalyzeConfig {
    fn default() -> Self {
        Self {
            manifest: None,
            band: BandSpec::default(),
            metrics: Metric::ALL.to_vec(),
            windows: vec![28],
            format: TensorFormat::Csv,
            write_phases: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatesConfig {
    /// Directory of per-subject tensor files.
    pub input: Option<PathBuf>,
    /// Number of states reported unless `select_by_dbi` is set.
    pub k: usize,
    pub select_by_dbi: bool,
    pub k_min: usize,
    pub k_max: usize,
    pub restarts: usize,
    pub init: Init,
    pub seed: u64,
}

impl Default for StatesConfig {
    fn default() -> Self {
        Self { input: None, k: 2, select_by_dbi: false, k_min: 2, k_max: 6, restarts: 200, init: Init::Uniform, seed: 0 }
    }
}

impl FileConfig {
    /// Reads a TOML or JSON config. A run manifest (a JSON object with a
    /// `config` entry) is accepted too, so that any output directory can be
    /// regenerated from its manifest.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        let is_json = path.extension().is_some_and(|e| e == "json") || text.trim_start().starts_with('{');
        let value: serde_json::Value = if is_json {
            serde_json::from_str(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?
        };
        let value = match value {
            serde_json::Value::Object(mut map) if map.contains_key("config") && map.contains_key("command") => {
                map.remove("config").unwrap_or_default()
            }
            other => other,
        };
        let mut config: Self =
            serde_json::from_value(value).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        // Relative data paths are relative to the config file.
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut config.analyze.manifest, &mut config.states.input].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(config)
    }

    pub fn apply_seed(&mut self, seed: Option<u64>) {
        if let Some(s) = seed.or(self.seed) {
            self.seed = Some(s);
            self.simulate.seed = s;
            self.states.seed = s;
        }
    }
}

pub fn parse_band(text: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = text.split_once(',').ok_or("expected <low,high> in Hz")?;
    let parse = |s: &str| s.trim().parse::<f64>().map_err(|_| format!("'{s}' is not a number"));
    Ok((parse(lo)?, parse(hi)?))
}

pub fn parse_k_range(text: &str) -> Result<(usize, usize), String> {
    let (lo, hi) = text
        .split_once("..=")
        .or_else(|| text.split_once(".."))
        .ok_or("expected <a..b>")?;
    let parse = |s: &str| s.trim().parse::<usize>().map_err(|_| format!("'{s}' is not a count"));
    Ok((parse(lo)?, parse(hi)?))
}

pub fn parse_metric(text: &str) -> Result<Metric, String> {
    text.parse::<Metric>().map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_and_json_agree() {
        let dir = tempfile::tempdir().unwrap();
        let t = dir.path().join("c.toml");
        fs::write(&t, "seed = 9\n[simulate]\nsim = \"ramp\"\nwindows = [30]\n[states]\nk = 3\n").unwrap();
        let j = dir.path().join("c.json");
        fs::write(&j, r#"{"seed": 9, "simulate": {"sim": "ramp", "windows": [30]}, "states": {"k": 3}}"#).unwrap();
        let a = FileConfig::load(&t).unwrap();
        assert_eq!(a, FileConfig::load(&j).unwrap());
        assert_eq!(a.simulate.windows, vec![30]);
        assert_eq!(a.states.k, 3);
    }

    #[test]
    fn manifest_config_entry_is_accepted() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = FileConfig::default();
        cfg.apply_seed(Some(4));
        let m = dir.path().join("manifest.json");
        let doc = serde_json::json!({"command": "simulate", "config": cfg, "wall_time_s": 1.0});
        fs::write(&m, serde_json::to_string(&doc).unwrap()).unwrap();
        assert_eq!(FileConfig::load(&m).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let t = dir.path().join("c.toml");
        fs::write(&t, "[simulate]\nwindow = 30\n").unwrap();
        assert!(FileConfig::load(&t).is_err());
    }

    #[test]
    fn flag_parsers() {
        assert_eq!(parse_band("0.03,0.07").unwrap(), (0.03, 0.07));
        assert!(parse_band("0.03").is_err());
        assert_eq!(parse_k_range("2..6").unwrap(), (2, 6));
        assert_eq!(parse_k_range("2..=6").unwrap(), (2, 6));
        assert!(parse_k_range("2-6").is_err());
        assert_eq!(parse_metric("pw-csw").unwrap(), Metric::PwCsw);
    }
}
