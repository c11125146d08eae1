use std::path::{Path, PathBuf};

use serde::Deserialize;

use nonlocality_core::corrmodel::DEFAULT_SCAN_LIMIT;
use nonlocality_core::ghz::CountMode;
use nonlocality_core::lhv::{LhvLimits, DEFAULT_MAX_STRATEGIES};
use nonlocality_core::rectangles::DEFAULT_MAX_NODES;

/// Only consulted for the default output directory.
pub const OUT_DIR_ENV: &str = "NONLOCALITY_OUT_DIR";

/// Optional TOML config. Keys mirror the global flags.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ConfigFile {
    pub mode: Option<CountMode>,
    pub scan_limit: Option<u64>,
    pub max_nodes: Option<u64>,
    pub max_strategies: Option<u64>,
    pub tolerance: Option<f64>,
    pub out_dir: Option<PathBuf>,
    /// Accepted for sampling tools; no command's output depends on it.
    #[allow(dead_code)]
    pub seed: Option<u64>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }
}

/// Flags layered over the config file.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub mode: Option<CountMode>,
    pub scan_limit: u128,
    pub max_nodes: u64,
    pub max_strategies: u128,
    pub tolerance: f64,
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default)]
pub struct FlagOverrides {
    pub scan_limit: Option<u128>,
    pub max_nodes: Option<u64>,
    pub max_strategies: Option<u128>,
    pub tolerance: Option<f64>,
    pub out_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn resolve(file: ConfigFile, flags: FlagOverrides, env_out_dir: Option<PathBuf>) -> Result<Self, String> {
        let cfg = RunConfig {
            mode: file.mode,
            scan_limit: flags
                .scan_limit
                .or(file.scan_limit.map(u128::from))
                .unwrap_or(DEFAULT_SCAN_LIMIT),
            max_nodes: flags.max_nodes.or(file.max_nodes).unwrap_or(DEFAULT_MAX_NODES),
            max_strategies: flags
                .max_strategies
                .or(file.max_strategies.map(u128::from))
                .unwrap_or(DEFAULT_MAX_STRATEGIES),
            tolerance: flags.tolerance.or(file.tolerance).unwrap_or(1e-12),
            out_dir: flags.out_dir.or(file.out_dir).or(env_out_dir),
        };
        if cfg.scan_limit == 0 || cfg.max_nodes == 0 || cfg.max_strategies == 0 {
            return Err("budgets must be positive".into());
        }
        if !(cfg.tolerance >= 0.0) {
            return Err(format!("tolerance must be non-negative, got {}", cfg.tolerance));
        }
        Ok(cfg)
    }

    /// Command flag, then config file, then the command's default.
    pub fn mode_or(&self, flag: Option<CountMode>, default: CountMode) -> CountMode {
        flag.or(self.mode).unwrap_or(default)
    }

    pub fn lhv_limits(&self) -> LhvLimits {
        LhvLimits {
            scan_limit: self.scan_limit,
            max_strategies: self.max_strategies,
        }
    }

    /// Relative output paths land in the configured output directory.
    pub fn output_path(&self, path: &Path) -> PathBuf {
        match &self.out_dir {
            Some(dir) if path.is_relative() => dir.join(path),
            _ => path.to_path_buf(),
        }
    }
}
