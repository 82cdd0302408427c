//! Flat TOML config files, flag merging and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Every key any subcommand accepts. Keys a subcommand does not use are
/// ignored by it; unknown keys are an error.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,

    pub input: Option<PathBuf>,
    pub chunk_size: Option<usize>,
    pub n_hop_bins: Option<usize>,
    pub n_distance_bins: Option<usize>,
    pub alpha_zero: Option<f64>,
    pub zero_hop_epsilon: Option<f64>,
    pub samples_per_cell: Option<usize>,
    pub view_subsets: Option<String>,

    pub suite: Option<String>,
    pub mutation: Option<String>,
    pub boundedness_cases: Option<usize>,
    pub telescoping_cases: Option<usize>,
    pub mdp_cases: Option<usize>,

    pub variant: Option<String>,
    pub algorithm: Option<String>,
    pub seeds: Option<usize>,
    pub estimator: Option<String>,
    pub sigma: Option<f64>,
    pub tracker: Option<String>,
    pub episode_cap: Option<usize>,
    pub learning_rate: Option<f64>,
    pub epsilon: Option<f64>,
    pub gamma: Option<f64>,
    pub delta: Option<f64>,
    pub alpha: Option<f64>,

    pub density: Option<String>,
    pub xi: Option<f64>,
    pub scorer: Option<String>,

    pub honeypot_potential: Option<f64>,
    pub path_risk: Option<f64>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

/// Flag, then config file, then default.
pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

/// Flag, then config file, then `DOPAMINE_SEED`, then 0.
pub fn resolve_seed(flag: Option<u64>, file: Option<u64>) -> Result<u64, CliError> {
    if let Some(s) = flag.or(file) {
        return Ok(s);
    }
    match std::env::var("DOPAMINE_SEED") {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Config(format!("DOPAMINE_SEED `{v}` is not an unsigned integer"))),
        Err(_) => Ok(0),
    }
}

pub fn split_list(s: &str) -> Vec<String> {
    s.split(',')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(String::from)
        .collect()
}

/// Written next to every run's outputs.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config_path: Option<PathBuf>,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub tool_version: String,
    /// sha256 of the canonical JSON of `settings`.
    pub config_hash: String,
    pub settings: serde_json::Value,
}

impl RunManifest {
    pub fn new<S: Serialize>(
        subcommand: &str,
        config_path: Option<&Path>,
        seed: u64,
        out_dir: &Path,
        settings: &S,
    ) -> Result<Self, CliError> {
        let settings = serde_json::to_value(settings).map_err(|e| CliError::Config(e.to_string()))?;
        let canonical = serde_json::to_vec(&serde_json::json!({
            "subcommand": subcommand,
            "seed": seed,
            "settings": settings,
        }))
        .map_err(|e| CliError::Config(e.to_string()))?;
        Ok(Self {
            subcommand: subcommand.to_string(),
            config_path: config_path.map(Path::to_path_buf),
            seed,
            out_dir: out_dir.to_path_buf(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: hex::encode(Sha256::digest(&canonical)),
            settings,
        })
    }

    pub fn write(&self) -> Result<(), CliError> {
        let path = self.out_dir.join("manifest.json");
        let text = serde_json::to_string_pretty(self).map_err(|e| CliError::Io(e.to_string()))?;
        fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<FileConfig>("seed = 3\nchunk_size = 5").is_ok());
        assert!(toml::from_str::<FileConfig>("chunk = 5").is_err());
    }

    #[test]
    fn flags_win_over_file() {
        assert_eq!(pick(Some(1), Some(2), 3), 1);
        assert_eq!(pick(None, Some(2), 3), 2);
        assert_eq!(pick(None, None, 3), 3);
    }

    #[test]
    fn hash_depends_on_settings_and_seed() {
        let dir = Path::new("out");
        let a = RunManifest::new("trap", None, 1, dir, &serde_json::json!({"gamma": 0.98})).unwrap();
        let b = RunManifest::new("trap", None, 1, dir, &serde_json::json!({"gamma": 0.98})).unwrap();
        let c = RunManifest::new("trap", None, 2, dir, &serde_json::json!({"gamma": 0.98})).unwrap();
        let d = RunManifest::new("trap", None, 1, dir, &serde_json::json!({"gamma": 0.9})).unwrap();
        assert_eq!(a.config_hash, b.config_hash);
        assert_ne!(a.config_hash, c.config_hash);
        assert_ne!(a.config_hash, d.config_hash);
        assert_eq!(a.config_hash.len(), 64);
    }

    #[test]
    fn list_splitting() {
        assert_eq!(split_list("sparse, medium,,dense"), ["sparse", "medium", "dense"]);
    }
}
