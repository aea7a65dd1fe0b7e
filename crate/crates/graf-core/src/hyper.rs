//! Training hyperparameters shared by the attention and convolution models.

use crate::error::{GrafError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparams {
    /// Total embedding width; the attention model splits it across heads.
    pub hidden: usize,
    pub learning_rate: f64,
    pub heads: usize,
    /// Dropout rate for the first convolution layer's input.
    pub dropout: f64,
    /// Dropout rate on attention coefficients while training the attention model.
    pub attention_dropout: f64,
    /// L2 coefficient for the Adam updates.
    pub weight_decay: f64,
    /// Width of the association-scoring transform.
    pub semantic_hidden: usize,
    pub patience: usize,
    pub min_epochs: usize,
    pub max_epochs: usize,
    pub leaky_slope: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            hidden: 64,
            learning_rate: 0.005,
            heads: 8,
            dropout: 0.5,
            attention_dropout: 0.6,
            weight_decay: 1e-3,
            semantic_hidden: 128,
            patience: 30,
            min_epochs: 200,
            max_epochs: 1000,
            leaky_slope: 0.2,
        }
    }
}

impl Hyperparams {
    pub fn with_cell(mut self, hidden: usize, learning_rate: f64) -> Self {
        self.hidden = hidden;
        self.learning_rate = learning_rate;
        self
    }

    /// Per-head width; the head count must divide the hidden size.
    pub fn head_dim(&self) -> Result<usize> {
        if self.heads == 0 || !self.hidden.is_multiple_of(self.heads) {
            return Err(GrafError::Parameter(format!(
                "{} heads do not divide hidden size {}",
                self.heads, self.hidden
            )));
        }
        Ok(self.hidden / self.heads)
    }
}
