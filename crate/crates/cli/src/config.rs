use std::path::{Path as FsPath, PathBuf};

use clap::ValueEnum;
use robpcr::pipeline::PipelineConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum, Default)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Robust,
    Normal,
    Both,
}

impl Mode {
    pub fn paths(self) -> Vec<robpcr::pca::Path> {
        use robpcr::pca::Path;
        match self {
            Mode::Robust => vec![Path::Robust],
            Mode::Normal => vec![Path::Normal],
            Mode::Both => vec![Path::Robust, Path::Normal],
        }
    }
}

/// Everything that determines a run. Echoed verbatim into the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub mode: Mode,
    pub train: Option<PathBuf>,
    pub predict: Option<PathBuf>,
    pub out_dir: PathBuf,
    #[serde(flatten)]
    pub pipeline: PipelineConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: Mode::default(),
            train: None,
            predict: None,
            out_dir: PathBuf::from("robpcr-out"),
            pipeline: PipelineConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &FsPath) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Input(format!("config {}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.train.is_none() {
            return Err(CliError::Input("no training file given (--train or \"train\" in the config)".into()));
        }
        self.pipeline.validate().map_err(|e| CliError::Input(e.to_string()))
    }
}
