//! TOML configuration file schema. Every table is optional.

use std::path::Path;

use hyperpinn::bench::Method;
use hyperpinn::doe::{full_factorial, orthogonal_design, TaskDesign, FF315_LEVELS};
use hyperpinn::fd::{FieldSelection, SolverSettings};
use hyperpinn::hypernet::HypernetConfig;
use hyperpinn::model::ModelConfig;
use hyperpinn::pinn::TrainConfig;
use hyperpinn::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Base seed; `--seed` overrides it.
    pub seed: u64,
    /// Nodes per axis for FD solves and field evaluation.
    pub grid: usize,
    pub model: ModelConfig,
    pub solver: SolverSettings,
    pub train: TrainConfig,
    pub hypernet: HypernetConfig,
    pub design: DesignConfig,
    pub benchmark: BenchSection,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 0,
            grid: 60,
            model: ModelConfig::default(),
            solver: SolverSettings::default(),
            train: TrainConfig::default(),
            hypernet: HypernetConfig::default(),
            design: DesignConfig::default(),
            benchmark: BenchSection::default(),
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.span().map(|s| 1 + text[..s.start].matches('\n').count()).unwrap_or(0),
            message: e.message().to_string(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.solver.validate()?;
        self.train.validate()?;
        self.hypernet.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DesignChoice {
    Orthogonal,
    FullFactorial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignConfig {
    pub kind: DesignChoice,
    /// Number of runs of an orthogonal design.
    pub size: usize,
    /// Levels per variable of an orthogonal design.
    pub levels: usize,
    /// Levels per variable of a full factorial.
    pub factorial_levels: [usize; 4],
}

impl Default for DesignConfig {
    fn default() -> Self {
        Self {
            kind: DesignChoice::Orthogonal,
            size: 25,
            levels: 5,
            factorial_levels: FF315_LEVELS,
        }
    }
}

impl DesignConfig {
    pub fn generate(&self, model: &ModelConfig, seed: u64) -> Result<TaskDesign> {
        match self.kind {
            DesignChoice::Orthogonal => orthogonal_design(&model.ranges, self.size, self.levels, seed),
            DesignChoice::FullFactorial => full_factorial(&model.ranges, self.factorial_levels),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub methods: Vec<Method>,
    pub selection: FieldSelection,
    pub timing_runs: usize,
}

impl Default for BenchSection {
    fn default() -> Self {
        Self {
            methods: vec![Method::Hypernet, Method::NearestNeighbor],
            selection: FieldSelection::FluidAndMetal,
            timing_runs: 3,
        }
    }
}
