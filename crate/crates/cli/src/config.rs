//! Declarative run configuration. One JSON document describes the model,
//! grid, ensemble, generator, terminal condition, scheme and experiment;
//! unknown keys are rejected everywhere.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use levy_bsde::checks::SamplerConfig;
use levy_bsde::{JumpAtom, LevyModel, RhoFunction, SchemeConfig, TimeGrid};

use crate::CliError;

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub grid: GridConfig,
    pub ensemble: EnsembleConfig,
    pub generator: GeneratorConfig,
    pub terminal: TerminalConfig,
    #[serde(default)]
    pub scheme: SchemeConfig,
    pub experiment: ExperimentConfig,
    pub output_dir: String,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub dim: usize,
    pub brownian_dim: usize,
    pub drift: Vec<f64>,
    /// Row-major rows of the diffusion matrix (dim rows, brownian_dim each).
    #[serde(default)]
    pub diffusion: Vec<Vec<f64>>,
    #[serde(default)]
    pub atoms: Vec<AtomConfig>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct AtomConfig {
    pub mark: Vec<f64>,
    pub intensity: f64,
}

impl ModelConfig {
    pub fn build(&self) -> Result<LevyModel, CliError> {
        let mut diffusion = Vec::with_capacity(self.dim * self.brownian_dim);
        if self.diffusion.len() != self.dim && !(self.diffusion.is_empty() && self.brownian_dim == 0)
        {
            return Err(CliError::Config(format!(
                "model.diffusion needs {} rows, found {}",
                self.dim,
                self.diffusion.len()
            )));
        }
        for (i, row) in self.diffusion.iter().enumerate() {
            if row.len() != self.brownian_dim {
                return Err(CliError::Config(format!(
                    "model.diffusion row {i} has {} entries, expected {}",
                    row.len(),
                    self.brownian_dim
                )));
            }
            diffusion.extend_from_slice(row);
        }
        let atoms = self
            .atoms
            .iter()
            .map(|a| JumpAtom {
                mark: a.mark.clone(),
                intensity: a.intensity,
            })
            .collect();
        LevyModel::new(
            self.dim,
            self.brownian_dim,
            self.drift.clone(),
            diffusion,
            atoms,
        )
        .map_err(|e| CliError::Config(format!("model: {e}")))
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub horizon: f64,
    pub steps: usize,
}

impl GridConfig {
    pub fn build(&self) -> Result<TimeGrid, CliError> {
        // the negated form also rejects NaN horizons
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(self.horizon > 0.0) || self.steps == 0 {
            return Err(CliError::Config(
                "grid.horizon must be positive and grid.steps >= 1".into(),
            ));
        }
        Ok(TimeGrid::uniform(self.horizon, self.steps))
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub paths: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub id: String,
    #[serde(default)]
    pub overrides: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TerminalConfig {
    pub id: String,
    #[serde(default)]
    pub overrides: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RhoConfig {
    pub family: String,
    #[serde(default)]
    pub slope: Option<f64>,
    #[serde(default)]
    pub knee: Option<f64>,
}

impl RhoConfig {
    pub fn build(&self) -> Result<RhoFunction, CliError> {
        match self.family.as_str() {
            "linear" => Ok(RhoFunction::linear(self.slope.unwrap_or(1.0))),
            "log_osgood" => Ok(RhoFunction::log_osgood(self.knee.unwrap_or(1.0))),
            other => Err(CliError::Config(format!(
                "rho.family '{other}' unknown (linear | log_osgood)"
            ))),
        }
    }
}

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerOverrides {
    #[serde(default)]
    pub samples: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub y_radius: Option<f64>,
    #[serde(default)]
    pub z_radius: Option<f64>,
    #[serde(default)]
    pub u_radius: Option<f64>,
}

impl SamplerOverrides {
    pub fn build(&self, horizon: f64, first_dt: f64) -> SamplerConfig {
        let mut cfg = SamplerConfig {
            horizon,
            t_floor: (first_dt / 2.0).min(horizon / 2.0),
            ..SamplerConfig::default()
        };
        if let Some(s) = self.samples {
            cfg.samples = s;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(v) = self.y_radius {
            cfg.y_radius = v;
        }
        if let Some(v) = self.z_radius {
            cfg.z_radius = v;
        }
        if let Some(v) = self.u_radius {
            cfg.u_radius = v;
        }
        cfg
    }
}

fn default_scales() -> Vec<f64> {
    vec![1.0, 0.5, 0.25, 0.1, 0.0]
}

fn default_levels() -> Vec<u32> {
    vec![1, 2, 4, 8]
}

fn default_radius() -> f64 {
    3.0
}

fn default_checks() -> Vec<String> {
    vec![
        "monotonicity".into(),
        "growth".into(),
        "rho_bounds".into(),
        "gamma".into(),
    ]
}

fn default_tolerance() -> f64 {
    1e-9
}

fn default_c() -> f64 {
    1.0
}

fn default_k() -> f64 {
    1.0
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExperimentConfig {
    /// Solve once and dump the solution table.
    Solve {
        #[serde(default)]
        dump_ensemble: bool,
    },
    /// Data-scaling stability sweep.
    Sweep {
        #[serde(default = "default_scales")]
        scales: Vec<f64>,
    },
    /// Paired comparison run against a primed generator/terminal.
    Compare {
        generator_prime: GeneratorConfig,
        terminal_prime: TerminalConfig,
        /// Absolute tolerance; omitted means 3 pooled regression SEs.
        #[serde(default)]
        tolerance: Option<f64>,
        #[serde(default)]
        posthoc: bool,
        #[serde(default)]
        sampler: SamplerOverrides,
    },
    /// Truncation convergence study.
    Truncate {
        #[serde(default = "default_levels")]
        levels: Vec<u32>,
        #[serde(default = "default_radius")]
        radius: f64,
        #[serde(default)]
        sampler: SamplerOverrides,
    },
    /// Assumption audit of the configured generator.
    Check {
        #[serde(default = "default_checks")]
        checks: Vec<String>,
        #[serde(default = "default_tolerance")]
        tolerance: f64,
        #[serde(default = "default_radius")]
        growth_radius: f64,
        #[serde(default)]
        sampler: SamplerOverrides,
    },
    /// Backward integral-inequality bound table.
    Bihari {
        rho: RhoConfig,
        #[serde(default = "default_c")]
        c: f64,
        #[serde(default = "default_k")]
        k_constant: f64,
        #[serde(default)]
        k_values: Option<Vec<f64>>,
        #[serde(default = "default_true")]
        compare_gronwall: bool,
    },
}

impl ExperimentConfig {
    pub fn kind_name(&self) -> &'static str {
        match self {
            ExperimentConfig::Solve { .. } => "solve",
            ExperimentConfig::Sweep { .. } => "sweep",
            ExperimentConfig::Compare { .. } => "compare",
            ExperimentConfig::Truncate { .. } => "truncate",
            ExperimentConfig::Check { .. } => "check",
            ExperimentConfig::Bihari { .. } => "bihari",
        }
    }
}

/// Parse a config document, mapping syntax errors to line/column
/// diagnostics.
pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    serde_json::from_str(text).map_err(|e| {
        CliError::Config(format!(
            "config parse error at line {}, column {}: {e}",
            e.line(),
            e.column()
        ))
    })
}
