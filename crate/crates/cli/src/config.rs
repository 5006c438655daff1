use std::path::Path;

use funcanova::inference::TestMethod;
use funcanova::pipeline::AnalysisConfig;
use funcanova::simulate::{FixtureConfig, SimulationConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const DEFAULT_SD_LEVELS: [f64; 6] = [0.05, 0.5, 1.0, 2.0, 3.0, 4.0];

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSettings {
    pub sd_levels: Vec<f64>,
    pub reps: usize,
    pub methods: Vec<TestMethod>,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            sd_levels: DEFAULT_SD_LEVELS.to_vec(),
            reps: 20,
            methods: vec![TestMethod::Classic, TestMethod::Permutation],
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestSettings {
    pub control_group: Option<String>,
    pub grid_len: Option<usize>,
    pub variates: Option<Vec<String>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifySettings {
    pub train_fraction: f64,
    pub on_train: bool,
}

impl Default for ClassifySettings {
    fn default() -> Self {
        Self {
            train_fraction: 0.7,
            on_train: false,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct HeatmapSettings {
    pub neutral: Option<String>,
    pub bins: Option<usize>,
}

/// Everything a run can be configured with. File values are overridden by flags.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub analysis: AnalysisConfig,
    pub simulation: SimulationConfig,
    pub sweep: SweepSettings,
    pub ingest: IngestSettings,
    pub classify: ClassifySettings,
    pub heatmap: HeatmapSettings,
    pub fixture: FixtureConfig,
}

impl RunConfig {
    /// JSON, or TOML when the file name ends in `.toml`.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read config {}: {e}", path.display())))?;
        let is_toml = path.extension().is_some_and(|e| e == "toml");
        if is_toml {
            toml::from_str(&text).map_err(|e| CliError::Input(format!("bad config {}: {e}", path.display())))
        } else {
            serde_json::from_str(&text).map_err(|e| CliError::Input(format!("bad config {}: {e}", path.display())))
        }
    }
}
