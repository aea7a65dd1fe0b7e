//! Two-layer graph convolutional classifier on a weighted directed graph.
//!
//! The adjacency is degree-normalized once (`A'[i,j] = A[i,j] / sqrt(D_i D_j)`
//! with `D_i` the row sum), then the forward pass is
//! `A' ReLU(A' X W1) W2`, with dropout on the first layer's input during
//! training and the final softmax folded into the loss. Training uses Adam
//! with early stopping on validation macro F1 and restores the
//! best-validation parameters.

use std::sync::Arc;

use crate::autodiff::{AdamState, ParamSet, Tape, Tensor, ValueId};
use crate::error::{GrafError, Result};
use crate::eval::macro_f1;
use crate::hyper::Hyperparams;
use crate::rng::{derive, rng_from, stage};
use crate::sparse::ArcSet;
use crate::stopping::EarlyStopping;
use crate::task::{argmax_rows, gather_labels, TaskView};

/// Symmetric degree scaling of a weighted adjacency. Every row sum must be
/// strictly positive (retained self-loops guarantee that for fused graphs).
pub fn normalize_adjacency(arcs: &ArcSet, weights: &[f64]) -> Result<Vec<f64>> {
    if weights.len() != arcs.len() {
        return Err(GrafError::Shape(format!(
            "{} weights for {} arcs",
            weights.len(),
            arcs.len()
        )));
    }
    let mut degree = vec![0.0; arcs.n()];
    for (e, &w) in weights.iter().enumerate() {
        degree[arcs.rows()[e] as usize] += w;
    }
    for (i, &d) in degree.iter().enumerate() {
        if d.is_nan() || d <= 0.0 {
            return Err(GrafError::Normalization { node: i });
        }
    }
    Ok(weights
        .iter()
        .enumerate()
        .map(|(e, &w)| {
            let (r, c) = arcs.arc(e);
            w / (degree[r as usize] * degree[c as usize]).sqrt()
        })
        .collect())
}

/// Trained two-layer model plus the cached normalized adjacency.
#[derive(Debug, Clone)]
pub struct GcnModel {
    pub params: ParamSet,
    pub arcs: Arc<ArcSet>,
    pub norm_weights: Arc<Vec<f64>>,
    pub dropout: f64,
    pub hidden: usize,
}

/// Recorded two-layer forward pass, optionally with the training loss.
pub struct GcnGraph {
    pub tape: Tape,
    pub hidden: ValueId,
    pub logits: ValueId,
    pub loss: Option<ValueId>,
    pub w1: ValueId,
    pub w2: ValueId,
}

/// Build `A' ReLU(A' X W1) W2` on a fresh tape, with dropout on the first
/// layer's activations while training, plus the masked cross-entropy when
/// `with_loss`.
#[allow(clippy::too_many_arguments)]
pub fn gcn_loss_tape(
    arcs: &Arc<ArcSet>,
    norm_weights: &[f64],
    view: &TaskView,
    w1: &Tensor,
    w2: &Tensor,
    dropout: f64,
    training: bool,
    dropout_seed: u64,
    with_loss: bool,
) -> Result<GcnGraph> {
    let mut tape = Tape::new();
    let x = tape.constant(&[view.n, view.feature_dim], view.features.as_ref().clone());
    let w1_id = tape.input(w1);
    let w2_id = tape.input(w2);
    let norm = tape.constant(&[arcs.len()], norm_weights.to_vec());
    let xw = tape.matmul(x, w1_id)?;
    let h_pre = tape.sparse_aggregate(arcs, norm, xw)?;
    let hidden = tape.relu(h_pre);
    let h_dropped = tape.dropout(hidden, dropout, training, dropout_seed)?;
    let hw = tape.matmul(h_dropped, w2_id)?;
    let logits = tape.sparse_aggregate(arcs, norm, hw)?;
    let loss = if with_loss {
        Some(tape.cross_entropy(logits, &view.labels, &view.train_ids)?)
    } else {
        None
    };
    Ok(GcnGraph {
        tape,
        hidden,
        logits,
        loss,
        w1: w1_id,
        w2: w2_id,
    })
}

impl GcnModel {
    pub fn new(
        arcs: Arc<ArcSet>,
        weights: &[f64],
        view: &TaskView,
        hp: &Hyperparams,
        seed: u64,
    ) -> Result<Self> {
        let norm = normalize_adjacency(&arcs, weights)?;
        let mut params = ParamSet::new();
        let mut rng = rng_from(derive(seed, &[stage::PARAM_INIT, 0]));
        params.insert("w1", Tensor::glorot(view.feature_dim, hp.hidden, &mut rng));
        let mut rng = rng_from(derive(seed, &[stage::PARAM_INIT, 1]));
        params.insert("w2", Tensor::glorot(hp.hidden, view.classes, &mut rng));
        Ok(GcnModel {
            params,
            arcs,
            norm_weights: Arc::new(norm),
            dropout: hp.dropout,
            hidden: hp.hidden,
        })
    }

    /// Forward to (hidden activations, logits). Dropout applies to the first
    /// layer input only while training.
    fn forward(
        &self,
        x: &[f64],
        n: usize,
        f: usize,
        training: bool,
        dropout_seed: u64,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let view = TaskView {
            n,
            feature_dim: f,
            classes: 0,
            features: Arc::new(x.to_vec()),
            labels: Arc::new(vec![]),
            train_ids: Arc::new(vec![]),
            val_ids: Arc::new(vec![]),
        };
        let g = gcn_loss_tape(
            &self.arcs,
            &self.norm_weights,
            &view,
            self.params.get("w1").unwrap(),
            self.params.get("w2").unwrap(),
            self.dropout,
            training,
            dropout_seed,
            false,
        )?;
        Ok((
            g.tape.value(g.hidden).to_vec(),
            g.tape.value(g.logits).to_vec(),
        ))
    }

    /// Hidden-layer activations for all nodes, dropout off.
    pub fn export_embeddings(&self, x: &[f64], n: usize, f: usize) -> Result<Vec<f64>> {
        Ok(self.forward(x, n, f, false, 0)?.0)
    }

    pub fn logits(&self, x: &[f64], n: usize, f: usize) -> Result<Vec<f64>> {
        Ok(self.forward(x, n, f, false, 0)?.1)
    }
}

/// Trained model with everything evaluated at the best-validation epoch.
#[derive(Debug)]
pub struct GcnOutcome {
    pub model: GcnModel,
    pub best_val_f1: f64,
    pub best_epoch: usize,
    /// Hidden activations at the retained parameters, n x hidden.
    pub embeddings: Vec<f64>,
    pub logits: Vec<f64>,
    pub train_losses: Vec<f64>,
}

/// Train on the weighted graph with Adam and validation early stopping.
pub fn train_gcn(
    arcs: Arc<ArcSet>,
    weights: &[f64],
    view: &TaskView,
    hp: &Hyperparams,
    seed: u64,
) -> Result<GcnOutcome> {
    if view.train_ids.is_empty() || view.val_ids.is_empty() {
        return Err(GrafError::Split("empty train or validation split".into()));
    }
    let mut model = GcnModel::new(arcs, weights, view, hp, seed)?;
    let mut adam =
        AdamState::new(hp.learning_rate, &model.params).with_weight_decay(hp.weight_decay);
    let mut stopper = EarlyStopping::new(hp.patience, hp.min_epochs);
    let mut best_snapshot = model.params.snapshot();
    let val_truth = gather_labels(&view.labels, &view.val_ids);
    let mut train_losses = Vec::new();

    for epoch in 0..hp.max_epochs {
        let mut g = gcn_loss_tape(
            &model.arcs,
            &model.norm_weights,
            view,
            model.params.get("w1").unwrap(),
            model.params.get("w2").unwrap(),
            model.dropout,
            true,
            derive(seed, &[stage::DROPOUT, epoch as u64]),
            true,
        )?;
        let loss = g.loss.unwrap();
        let loss_value = g.tape.value(loss)[0];
        if !loss_value.is_finite() {
            return Err(GrafError::Training {
                epoch,
                message: format!("loss diverged to {loss_value}"),
            });
        }
        train_losses.push(loss_value);

        // Validation on a dropout-free forward at the current parameters.
        let (_, eval_logits) = model.forward(&view.features, view.n, view.feature_dim, false, 0)?;
        let val_pred = argmax_rows(&eval_logits, view.classes, &view.val_ids);
        let score = macro_f1(&val_truth, &val_pred, view.classes)?;
        let (improved, stop) = stopper.observe(epoch, score);
        if improved {
            best_snapshot = model.params.snapshot();
        }
        if stop {
            break;
        }

        g.tape.backward(loss)?;
        for (tensor, id) in model.params.tensors_mut().zip([g.w1, g.w2]) {
            tensor.grad = Some(g.tape.grad_or_zeros(id));
        }
        adam.step(&mut model.params)?;
    }

    model.params.restore(&best_snapshot);
    let (embeddings, logits) = model.forward(&view.features, view.n, view.feature_dim, false, 0)?;
    Ok(GcnOutcome {
        best_val_f1: stopper.best_score(),
        best_epoch: stopper.best_epoch(),
        embeddings,
        logits,
        train_losses,
        model,
    })
}
