//! Shared view of one training task: features, labels, split node ids.

use std::sync::Arc;

use crate::dataset::{DatasetBundle, Splits};

/// Sentinel for a label that the current pipeline phase may not read.
pub const REDACTED_LABEL: u32 = u32::MAX;

/// Immutable inputs for one supervised training run. `labels` may be redacted
/// outside the splits a phase is allowed to see; redacted entries hold
/// [`REDACTED_LABEL`], which any legitimate read path rejects as out of range.
#[derive(Debug, Clone)]
pub struct TaskView {
    pub n: usize,
    pub feature_dim: usize,
    pub classes: usize,
    pub features: Arc<Vec<f64>>,
    pub labels: Arc<Vec<u32>>,
    pub train_ids: Arc<Vec<u32>>,
    pub val_ids: Arc<Vec<u32>>,
}

impl TaskView {
    /// Unredacted view over a dataset, for direct library use.
    pub fn full(bundle: &DatasetBundle, splits: &Splits) -> Self {
        TaskView {
            n: bundle.n,
            feature_dim: bundle.feature_dim,
            classes: bundle.classes,
            features: Arc::clone(&bundle.features),
            labels: Arc::clone(&bundle.labels),
            train_ids: Arc::new(splits.train.clone()),
            val_ids: Arc::new(splits.val.clone()),
        }
    }
}

/// Row-wise argmax over an n×c logit buffer for the given rows.
pub fn argmax_rows(values: &[f64], classes: usize, rows: &[u32]) -> Vec<u32> {
    rows.iter()
        .map(|&r| {
            let row = &values[r as usize * classes..(r as usize + 1) * classes];
            let mut best = 0u32;
            let mut best_v = f64::NEG_INFINITY;
            for (j, &v) in row.iter().enumerate() {
                if v > best_v {
                    best_v = v;
                    best = j as u32;
                }
            }
            best
        })
        .collect()
}

/// Labels gathered for the given node ids.
pub fn gather_labels(labels: &[u32], ids: &[u32]) -> Vec<u32> {
    ids.iter().map(|&i| labels[i as usize]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_picks_first_max() {
        let logits = vec![0.0, 1.0, 1.0, 5.0, -1.0, 2.0];
        assert_eq!(argmax_rows(&logits, 3, &[0, 1]), vec![1, 0]);
    }
}
