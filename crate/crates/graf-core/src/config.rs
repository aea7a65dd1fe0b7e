//! Experiment configuration: JSON file with strict field checking.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{GrafError, Result};
use crate::hyper::Hyperparams;

fn default_attention_repeats() -> usize {
    10
}
fn default_eval_repeats() -> usize {
    10
}
fn default_hidden_sizes() -> Vec<usize> {
    vec![16, 32, 64, 128]
}
fn default_learning_rates() -> Vec<f64> {
    vec![0.01, 0.005, 0.001]
}
fn default_heads() -> usize {
    8
}
fn default_dropout() -> f64 {
    0.5
}
fn default_semantic_hidden() -> usize {
    128
}
fn default_patience() -> usize {
    30
}
fn default_min_epochs() -> usize {
    200
}
fn default_max_epochs() -> usize {
    1000
}
fn default_kmeans_restarts() -> usize {
    10
}
fn default_attention_dropout() -> f64 {
    0.6
}
fn default_weight_decay() -> f64 {
    1e-3
}
fn default_train_fraction() -> f64 {
    0.6
}

/// Edge-elimination toggle: `auto` picks on/off by validation score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Elimination {
    On,
    Off,
    #[default]
    Auto,
}

/// Which pipeline to run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Variant {
    Graf,
    GrafAtt,
    GrafNode,
    GrafAsc,
    GcnSingle(String),
    Han,
}

impl Variant {
    pub fn parse(s: &str) -> Result<Variant> {
        match s {
            "graf" => Ok(Variant::Graf),
            "graf_att" => Ok(Variant::GrafAtt),
            "graf_node" => Ok(Variant::GrafNode),
            "graf_asc" => Ok(Variant::GrafAsc),
            "han" => Ok(Variant::Han),
            other => {
                if let Some(name) = other.strip_prefix("gcn_single:") {
                    if name.is_empty() {
                        return Err(GrafError::Config(
                            "gcn_single needs an association name".into(),
                        ));
                    }
                    Ok(Variant::GcnSingle(name.to_string()))
                } else {
                    Err(GrafError::Config(format!(
                        "unknown variant {other:?} (expected graf, graf_att, graf_node, graf_asc, gcn_single:<association>, han)"
                    )))
                }
            }
        }
    }

    pub fn as_string(&self) -> String {
        match self {
            Variant::Graf => "graf".into(),
            Variant::GrafAtt => "graf_att".into(),
            Variant::GrafNode => "graf_node".into(),
            Variant::GrafAsc => "graf_asc".into(),
            Variant::GcnSingle(name) => format!("gcn_single:{name}"),
            Variant::Han => "han".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SplitMode {
    #[default]
    Original,
    Fraction,
}

/// Full experiment description; unknown JSON keys are rejected.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset_dir: PathBuf,
    pub variant: String,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub split_mode: SplitMode,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default = "default_attention_repeats")]
    pub attention_repeats: usize,
    #[serde(default = "default_eval_repeats")]
    pub eval_repeats: usize,
    #[serde(default = "default_hidden_sizes")]
    pub hidden_sizes: Vec<usize>,
    #[serde(default = "default_learning_rates")]
    pub learning_rates: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub elimination: Elimination,
    #[serde(default = "default_heads")]
    pub heads: usize,
    #[serde(default = "default_dropout")]
    pub dropout: f64,
    #[serde(default = "default_attention_dropout")]
    pub attention_dropout: f64,
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
    #[serde(default = "default_semantic_hidden")]
    pub semantic_hidden: usize,
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default = "default_min_epochs")]
    pub min_epochs: usize,
    #[serde(default = "default_max_epochs")]
    pub max_epochs: usize,
    #[serde(default = "default_kmeans_restarts")]
    pub kmeans_restarts: usize,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GrafError::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| GrafError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        Variant::parse(&self.variant)?;
        if self.hidden_sizes.is_empty() || self.learning_rates.is_empty() {
            return Err(GrafError::Config("hyperparameter grid is empty".into()));
        }
        if self.attention_repeats == 0 || self.eval_repeats == 0 {
            return Err(GrafError::Config("repeat counts must be at least 1".into()));
        }
        if self.split_mode == SplitMode::Fraction
            && !(self.train_fraction > 0.0 && self.train_fraction < 1.0)
        {
            return Err(GrafError::Config(format!(
                "train fraction {} outside (0, 1)",
                self.train_fraction
            )));
        }
        for &h in &self.hidden_sizes {
            if self.heads == 0 || h % self.heads != 0 {
                return Err(GrafError::Config(format!(
                    "hidden size {h} is not divisible by {} heads",
                    self.heads
                )));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(GrafError::Config(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        if !(0.0..1.0).contains(&self.attention_dropout) {
            return Err(GrafError::Config(format!(
                "attention dropout {} outside [0, 1)",
                self.attention_dropout
            )));
        }
        Ok(())
    }

    pub fn parsed_variant(&self) -> Result<Variant> {
        Variant::parse(&self.variant)
    }

    /// Grid cells in a fixed order: hidden-major, then learning rate.
    pub fn grid(&self) -> Vec<(usize, f64)> {
        let mut cells = Vec::new();
        for &h in &self.hidden_sizes {
            for &lr in &self.learning_rates {
                cells.push((h, lr));
            }
        }
        cells
    }

    pub fn hyperparams(&self, hidden: usize, learning_rate: f64) -> Hyperparams {
        Hyperparams {
            hidden,
            learning_rate,
            heads: self.heads,
            dropout: self.dropout,
            attention_dropout: self.attention_dropout,
            weight_decay: self.weight_decay,
            semantic_hidden: self.semantic_hidden,
            patience: self.patience,
            min_epochs: self.min_epochs,
            max_epochs: self.max_epochs,
            leaky_slope: 0.2,
        }
    }

    pub fn split_label(&self) -> String {
        match self.split_mode {
            SplitMode::Original => "original".into(),
            SplitMode::Fraction => format!("fraction:{}", self.train_fraction),
        }
    }
}
