//! Run configuration. Every run writes its resolved configuration to
//! `manifest.toml` in the output directory; `fsc run <manifest>` replays it.

use std::path::{Path, PathBuf};

use fsc::FscConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CommandKind {
    #[default]
    Fit,
    Path,
    Complete,
    Synth,
    Eval,
    RankSweep,
}

/// Parameters for synthetic data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub d: usize,
    pub subspaces: usize,
    pub rank: usize,
    pub per_cluster: usize,
    pub sigma: f64,
    /// Probability that an entry is observed.
    pub p: f64,
    /// Columns with fewer observed entries are redrawn.
    pub min_observed: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            d: 100,
            subspaces: 4,
            rank: 5,
            per_cluster: 20,
            sigma: 0.0,
            p: 1.0,
            min_observed: 1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct RunConfig {
    pub command: CommandKind,
    /// Version of the tool that wrote the file; informational.
    pub version: Option<String>,
    pub input: Option<PathBuf>,
    pub mask: Option<PathBuf>,
    /// `complete`: labels to use instead of clustering. `eval`: predicted labels.
    pub labels: Option<PathBuf>,
    /// `eval`: reference labels.
    pub truth: Option<PathBuf>,
    /// `eval`: completed matrix to score.
    pub completed: Option<PathBuf>,
    /// `eval`: fully observed reference matrix.
    pub reference: Option<PathBuf>,
    pub out: Option<PathBuf>,
    /// Fixed number of clusters; chosen by fit score when absent.
    pub k: Option<usize>,
    /// `complete`: keep the model reconstruction on observed entries too.
    pub smooth: bool,
    /// `path`: λ values; the default grid when absent.
    pub grid: Option<Vec<f64>>,
    /// `path`: keep doubling λ past the grid until everything fuses.
    pub to_single: bool,
    /// `rank-sweep`: ranks to try, ascending.
    pub ranks: Vec<usize>,
    pub threads: Option<usize>,
    pub solver: FscConfig,
    pub synth: SynthConfig,
}

impl RunConfig {
    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Usage(format!("cannot serialize config: {e}")))
    }

    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Usage(m) => CliError::Parse {
                path: path.display().to_string(),
                message: m,
            },
            other => other,
        })
    }

    /// Input paths made absolute so the manifest can be replayed from anywhere.
    pub fn with_absolute_inputs(&self) -> Self {
        let abs = |p: &Option<PathBuf>| {
            p.as_ref()
                .map(|p| std::fs::canonicalize(p).unwrap_or_else(|_| p.clone()))
        };
        Self {
            input: abs(&self.input),
            mask: abs(&self.mask),
            labels: abs(&self.labels),
            truth: abs(&self.truth),
            completed: abs(&self.completed),
            reference: abs(&self.reference),
            ..self.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let mut cfg = RunConfig {
            command: CommandKind::Path,
            input: Some("data/x.csv".into()),
            grid: Some(vec![0.0, 1.25e-8, 0.1, 1.0 / 3.0]),
            k: Some(4),
            ranks: vec![1, 2],
            ..Default::default()
        };
        cfg.solver.lambda = 1e-3;
        cfg.solver.rank = 5;
        cfg.solver.seed = 1 << 62;
        cfg.solver.init = fsc::InitStrategy::ColumnSeeded;
        cfg.synth.sigma = 0.1;
        let text = cfg.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_config_uses_defaults() {
        let cfg = RunConfig::from_toml("command = \"synth\"\n[synth]\nd = 10\n").unwrap();
        assert_eq!(cfg.command, CommandKind::Synth);
        assert_eq!(cfg.synth.d, 10);
        assert_eq!(cfg.synth.subspaces, 4);
        assert_eq!(cfg.solver, FscConfig::default());
    }
}
