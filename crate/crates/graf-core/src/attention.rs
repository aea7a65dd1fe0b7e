//! Hierarchical attention over multiple association networks.
//!
//! Per association, node-level attention scores each directed arc with a
//! LeakyReLU of the attention vector applied to the attending and neighbor
//! projections, softmax-normalized over each node's neighborhood, and
//! aggregates neighbor projections into per-head embeddings that are
//! concatenated. Association-level attention then scores each association
//! embedding through a shared tanh transform, softmax-normalizes across
//! associations, and mixes the association embeddings into one representation
//! that feeds a linear classifier. Everything trains end to end on the
//! cross-entropy of the training nodes.
//!
//! The attention values exported for fusion are taken at the best-validation
//! epoch; node-level values are averaged over heads, and the whole training
//! can be repeated and averaged arc-wise across repeats.

use std::path::Path;
use std::sync::Arc;

use serde_json::{json, Map, Value};

use crate::autodiff::{AdamState, ParamSet, Tape, Tensor, ValueId};
use crate::error::{GrafError, Result};
use crate::eval::macro_f1;
use crate::graph::AssociationNetwork;
use crate::hyper::Hyperparams;
use crate::parallel::par_map_indexed;
use crate::rng::{derive, hash_name, rng_from, stage};
use crate::sparse::ArcSet;
use crate::stopping::EarlyStopping;
use crate::task::{argmax_rows, gather_labels, TaskView};

/// Initialize the trainable parameters: one projection for the anchor node
/// type, one attention vector per association and head (seeded by
/// association name, so listing order is irrelevant), and the shared
/// association scoring transform plus classifier. Associations are taken in
/// name order.
pub fn init_attention_params(
    view: &TaskView,
    networks: &[AssociationNetwork],
    hp: &Hyperparams,
    seed: u64,
) -> Result<ParamSet> {
    let d = hp.head_dim()?;
    let mut names: Vec<&str> = networks.iter().map(|n| n.name.as_str()).collect();
    names.sort_unstable();
    let mut params = ParamSet::new();
    let mut rng = rng_from(derive(seed, &[stage::PARAM_INIT, 0]));
    params.insert("proj", Tensor::glorot(view.feature_dim, d, &mut rng));
    for name in names {
        for k in 0..hp.heads {
            let mut rng = rng_from(derive(
                seed,
                &[stage::PARAM_INIT, hash_name(name), k as u64],
            ));
            params.insert(format!("att:{name}:{k}"), Tensor::glorot(d, 2, &mut rng));
        }
    }
    let mut rng = rng_from(derive(seed, &[stage::PARAM_INIT, 1]));
    params.insert(
        "sem_m0",
        Tensor::glorot(hp.hidden, hp.semantic_hidden, &mut rng),
    );
    let mut rng = rng_from(derive(seed, &[stage::PARAM_INIT, 2]));
    params.insert("sem_q", Tensor::glorot(hp.semantic_hidden, 1, &mut rng));
    let mut rng = rng_from(derive(seed, &[stage::PARAM_INIT, 3]));
    params.insert(
        "classifier",
        Tensor::glorot(hp.hidden, view.classes, &mut rng),
    );
    Ok(params)
}

/// Recorded forward pass plus the training loss. Per-association ids follow
/// name order regardless of how the networks were listed.
pub struct AttentionGraph {
    pub tape: Tape,
    pub loss: ValueId,
    pub logits: ValueId,
    pub fused: ValueId,
    pub beta: ValueId,
    /// Per association (name order), per head.
    pub alpha: Vec<Vec<ValueId>>,
    /// Leaf ids aligned with the parameter set's entry order.
    pub param_ids: Vec<ValueId>,
}

/// Build the full forward pass and cross-entropy loss on a fresh tape at the
/// given parameters (as produced by [`init_attention_params`]). While
/// training, attention coefficients are dropped at `hp.attention_dropout`
/// with masks derived from `dropout_seed`; pass `None` for a clean
/// evaluation pass.
pub fn attention_loss_tape(
    view: &TaskView,
    networks: &[AssociationNetwork],
    hp: &Hyperparams,
    params: &ParamSet,
    dropout_seed: Option<u64>,
) -> Result<AttentionGraph> {
    if networks.is_empty() {
        return Err(GrafError::Config(
            "no association networks to attend over".into(),
        ));
    }
    let mut order: Vec<usize> = (0..networks.len()).collect();
    order.sort_by(|&a, &b| networks[a].name.cmp(&networks[b].name));

    let mut tape = Tape::new();
    let param_ids: Vec<ValueId> = params.iter().map(|(_, t)| tape.input(t)).collect();
    let heads = hp.heads;
    let att_id = |ai: usize, k: usize| param_ids[1 + ai * heads + k];
    let base = 1 + networks.len() * heads;
    let (sem_m0, sem_q, classifier) = (param_ids[base], param_ids[base + 1], param_ids[base + 2]);

    let x = tape.constant(&[view.n, view.feature_dim], view.features.as_ref().clone());
    let h = tape.matmul(x, param_ids[0])?;
    let mut alpha = Vec::with_capacity(networks.len());
    let mut zphis = Vec::with_capacity(networks.len());
    let mut scores = Vec::with_capacity(networks.len());
    for (ai, &ni) in order.iter().enumerate() {
        let net = &networks[ni];
        let segments = net.arcs.row_segments();
        let mut heads_out = Vec::with_capacity(heads);
        let mut alpha_heads = Vec::with_capacity(heads);
        for k in 0..heads {
            let sp = tape.matmul(h, att_id(ai, k))?;
            let e = tape.edge_pair_leaky(sp, &net.arcs, hp.leaky_slope)?;
            let a = tape.segment_softmax(e, &segments, net.n)?;
            alpha_heads.push(a);
            let a = match dropout_seed {
                Some(seed) => {
                    let site = derive(seed, &[ai as u64, k as u64]);
                    tape.dropout(a, hp.attention_dropout, true, site)?
                }
                None => a,
            };
            let agg = tape.sparse_aggregate(&net.arcs, a, h)?;
            heads_out.push(tape.elu(agg));
        }
        let zphi = tape.concat_cols(&heads_out)?;
        let t = tape.matmul(zphi, sem_m0)?;
        let t = tape.tanh(t);
        let s = tape.matmul(t, sem_q)?;
        scores.push(tape.mean_all(s));
        zphis.push(zphi);
        alpha.push(alpha_heads);
    }
    let f_vec = tape.stack_scalars(&scores)?;
    let flat = Arc::new(vec![0u32; networks.len()]);
    let beta = tape.segment_softmax(f_vec, &flat, 1)?;
    let mixed = tape.weighted_sum(&zphis, beta)?;
    let fused = tape.elu(mixed);
    let logits = tape.matmul(fused, classifier)?;
    let loss = tape.cross_entropy(logits, &view.labels, &view.train_ids)?;
    Ok(AttentionGraph {
        tape,
        loss,
        logits,
        fused,
        beta,
        alpha,
        param_ids,
    })
}

/// Node-level attention for one association, evaluated standalone: per-head
/// arc attentions, their mean, and the concatenated per-head embeddings.
pub struct NodeAttentionOut {
    pub alpha_heads: Vec<Vec<f64>>,
    pub alpha_mean: Vec<f64>,
    pub z: Vec<f64>,
}

pub fn node_attention_forward(
    net: &AssociationNetwork,
    h: &Tensor,
    att: &[Tensor],
    slope: f64,
) -> Result<NodeAttentionOut> {
    let mut tape = Tape::new();
    let hid = tape.constant(&h.shape, h.values.clone());
    let segments = net.arcs.row_segments();
    let mut alpha_heads = Vec::with_capacity(att.len());
    let mut heads_out = Vec::with_capacity(att.len());
    for a in att {
        let aid = tape.constant(&a.shape, a.values.clone());
        let sp = tape.matmul(hid, aid)?;
        let e = tape.edge_pair_leaky(sp, &net.arcs, slope)?;
        let al = tape.segment_softmax(e, &segments, net.n)?;
        alpha_heads.push(tape.value(al).to_vec());
        let agg = tape.sparse_aggregate(&net.arcs, al, hid)?;
        let z = tape.elu(agg);
        heads_out.push(z);
    }
    let z = tape.concat_cols(&heads_out)?;
    let m = net.arcs.len();
    let mut alpha_mean = vec![0.0; m];
    for head in &alpha_heads {
        for (o, &v) in alpha_mean.iter_mut().zip(head) {
            *o += v;
        }
    }
    for v in &mut alpha_mean {
        *v /= att.len() as f64;
    }
    Ok(NodeAttentionOut {
        alpha_heads,
        alpha_mean,
        z: tape.value(z).to_vec(),
    })
}

/// Association-level attention evaluated standalone over per-association
/// embeddings: raw scores, their softmax, and the mixed representation.
pub struct AssociationAttentionOut {
    pub scores: Vec<f64>,
    pub beta: Vec<f64>,
    pub z: Vec<f64>,
}

pub fn association_attention_forward(
    zphis: &[Tensor],
    m0: &Tensor,
    q: &Tensor,
) -> Result<AssociationAttentionOut> {
    if zphis.is_empty() {
        return Err(GrafError::Config("no association embeddings".into()));
    }
    let mut tape = Tape::new();
    let m0_id = tape.constant(&m0.shape, m0.values.clone());
    let q_id = tape.constant(&q.shape, q.values.clone());
    let mut score_ids = Vec::with_capacity(zphis.len());
    let mut z_ids = Vec::with_capacity(zphis.len());
    for z in zphis {
        let zid = tape.constant(&z.shape, z.values.clone());
        let t = tape.matmul(zid, m0_id)?;
        let t = tape.tanh(t);
        let s = tape.matmul(t, q_id)?;
        score_ids.push(tape.mean_all(s));
        z_ids.push(zid);
    }
    let f_vec = tape.stack_scalars(&score_ids)?;
    let beta = beta_from_scores(tape.value(f_vec));
    let beta_id = tape.constant(&[zphis.len()], beta.clone());
    let mixed = tape.weighted_sum(&z_ids, beta_id)?;
    let fused = tape.elu(mixed);
    Ok(AssociationAttentionOut {
        scores: score_ids.iter().map(|&s| tape.value(s)[0]).collect(),
        beta,
        z: tape.value(fused).to_vec(),
    })
}

/// Softmax over association scores.
pub fn beta_from_scores(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|&s| (s - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// One trained attention model with everything extracted at the
/// best-validation epoch.
#[derive(Debug, Clone)]
pub struct AttentionOutput {
    pub params: ParamSet,
    pub best_val_f1: f64,
    pub best_epoch: usize,
    /// Head-averaged per-arc attention, aligned with each network's arc list
    /// (networks in caller order).
    pub alpha: Vec<Vec<f64>>,
    pub beta: Vec<f64>,
    /// Mixed representation, n x hidden.
    pub embedding: Vec<f64>,
    pub logits: Vec<f64>,
}

/// Train end to end on the training split, retain the parameters of the best
/// validation epoch, and extract attention values at those parameters.
pub fn train_attention_model(
    view: &TaskView,
    networks: &[AssociationNetwork],
    hp: &Hyperparams,
    seed: u64,
) -> Result<AttentionOutput> {
    if networks.is_empty() {
        return Err(GrafError::Config(
            "no association networks to attend over".into(),
        ));
    }
    if view.train_ids.is_empty() || view.val_ids.is_empty() {
        return Err(GrafError::Split("empty train or validation split".into()));
    }
    // Results are keyed by association name, not listing position.
    let mut order: Vec<usize> = (0..networks.len()).collect();
    order.sort_by(|&a, &b| networks[a].name.cmp(&networks[b].name));

    let mut params = init_attention_params(view, networks, hp, seed)?;
    let mut adam = AdamState::new(hp.learning_rate, &params).with_weight_decay(hp.weight_decay);
    let mut stopper = EarlyStopping::new(hp.patience, hp.min_epochs);
    let mut best_snapshot = params.snapshot();
    let val_truth = gather_labels(&view.labels, &view.val_ids);

    for epoch in 0..hp.max_epochs {
        let dropout_seed = Some(derive(seed, &[stage::DROPOUT, epoch as u64]));
        let mut g = attention_loss_tape(view, networks, hp, &params, dropout_seed)?;
        let loss_value = g.tape.value(g.loss)[0];
        if !loss_value.is_finite() {
            return Err(GrafError::Training {
                epoch,
                message: format!("loss diverged to {loss_value}"),
            });
        }

        // Validation on a dropout-free forward at the current parameters.
        let eval_graph = attention_loss_tape(view, networks, hp, &params, None)?;
        let val_pred = argmax_rows(
            eval_graph.tape.value(eval_graph.logits),
            view.classes,
            &view.val_ids,
        );
        let score = macro_f1(&val_truth, &val_pred, view.classes)?;
        let (improved, stop) = stopper.observe(epoch, score);
        if improved {
            best_snapshot = params.snapshot();
        }
        if stop {
            break;
        }

        g.tape.backward(g.loss)?;
        for (tensor, id) in params.tensors_mut().zip(&g.param_ids) {
            tensor.grad = Some(g.tape.grad_or_zeros(*id));
        }
        adam.step(&mut params)?;
    }

    params.restore(&best_snapshot);

    // Evaluate once at the retained parameters to extract attention values.
    let g = attention_loss_tape(view, networks, hp, &params, None)?;
    let mut alpha_sorted: Vec<Vec<f64>> = Vec::with_capacity(networks.len());
    for (ai, &ni) in order.iter().enumerate() {
        let mut mean = vec![0.0; networks[ni].arcs.len()];
        for &head in &g.alpha[ai] {
            for (o, &v) in mean.iter_mut().zip(g.tape.value(head)) {
                *o += v;
            }
        }
        for v in &mut mean {
            *v /= hp.heads as f64;
        }
        alpha_sorted.push(mean);
    }
    let beta_sorted = g.tape.value(g.beta).to_vec();

    // Back to caller order.
    let mut alpha = vec![Vec::new(); networks.len()];
    let mut beta = vec![0.0; networks.len()];
    for (si, &orig) in order.iter().enumerate() {
        alpha[orig] = std::mem::take(&mut alpha_sorted[si]);
        beta[orig] = beta_sorted[si];
    }

    Ok(AttentionOutput {
        best_val_f1: stopper.best_score(),
        best_epoch: stopper.best_epoch(),
        alpha,
        beta,
        embedding: g.tape.value(g.fused).to_vec(),
        logits: g.tape.value(g.logits).to_vec(),
        params,
    })
}

/// Classify the given nodes straight from the attention model (no fusion).
pub fn han_predict(
    view: &TaskView,
    networks: &[AssociationNetwork],
    hp: &Hyperparams,
    seed: u64,
    node_ids: &[u32],
) -> Result<(Vec<u32>, AttentionOutput)> {
    let out = train_attention_model(view, networks, hp, seed)?;
    let preds = argmax_rows(&out.logits, view.classes, node_ids);
    Ok((preds, out))
}

/// Per-arc and per-association attention, averaged over repeats.
#[derive(Debug, Clone)]
pub struct AssociationAttention {
    pub name: String,
    pub arcs: Arc<ArcSet>,
    pub alpha: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct AttentionBundle {
    pub associations: Vec<AssociationAttention>,
    pub beta: Vec<f64>,
    pub repeats: usize,
}

impl AttentionBundle {
    pub fn association(&self, name: &str) -> Option<(&AssociationAttention, f64)> {
        self.associations
            .iter()
            .position(|a| a.name == name)
            .map(|i| (&self.associations[i], self.beta[i]))
    }

    /// Check the structural invariants: one weight per arc, everything finite
    /// and positive, neighborhood sums 1, beta on the simplex.
    pub fn validate(&self) -> Result<()> {
        if self.associations.is_empty() {
            return Err(GrafError::Config(
                "attention bundle covers no associations".into(),
            ));
        }
        if self.beta.len() != self.associations.len() {
            return Err(GrafError::Consistency(
                "one beta per association required".into(),
            ));
        }
        let beta_sum: f64 = self.beta.iter().sum();
        if (beta_sum - 1.0).abs() > 1e-6 || self.beta.iter().any(|&b| b.is_nan() || b <= 0.0) {
            return Err(GrafError::Consistency(format!(
                "beta {:?} is not a probability vector",
                self.beta
            )));
        }
        for assoc in &self.associations {
            if assoc.alpha.len() != assoc.arcs.len() {
                return Err(GrafError::Consistency(format!(
                    "association {} has {} weights for {} arcs",
                    assoc.name,
                    assoc.alpha.len(),
                    assoc.arcs.len()
                )));
            }
            if assoc
                .alpha
                .iter()
                .any(|&a| !a.is_finite() || a <= 0.0 || a > 1.0 + 1e-9)
            {
                return Err(GrafError::Consistency(format!(
                    "association {} has weights outside (0, 1]",
                    assoc.name
                )));
            }
            for i in 0..assoc.arcs.n() {
                let range = assoc.arcs.row_range(i);
                if range.is_empty() {
                    continue;
                }
                let sum: f64 = assoc.alpha[range].iter().sum();
                if (sum - 1.0).abs() > 1e-6 {
                    return Err(GrafError::Consistency(format!(
                        "association {} neighborhood of node {i} sums to {sum}",
                        assoc.name
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Value {
        let mut beta = Map::new();
        let mut alpha = Map::new();
        for (assoc, &b) in self.associations.iter().zip(&self.beta) {
            beta.insert(assoc.name.clone(), json!(b));
            let arcs: Vec<Value> = assoc
                .arcs
                .iter()
                .zip(&assoc.alpha)
                .map(|((i, j), &v)| json!([i, j, v]))
                .collect();
            alpha.insert(assoc.name.clone(), Value::Array(arcs));
        }
        json!({ "beta": beta, "alpha": alpha, "repeats": self.repeats })
    }

    pub fn from_json(value: &Value) -> Result<Self> {
        let beta_map = value
            .get("beta")
            .and_then(Value::as_object)
            .ok_or_else(|| GrafError::Data("attention json lacks a beta object".into()))?;
        let alpha_map = value
            .get("alpha")
            .and_then(Value::as_object)
            .ok_or_else(|| GrafError::Data("attention json lacks an alpha object".into()))?;
        let repeats = value.get("repeats").and_then(Value::as_u64).unwrap_or(1) as usize;
        let mut associations = Vec::new();
        let mut beta = Vec::new();
        for (name, b) in beta_map {
            let b = b
                .as_f64()
                .ok_or_else(|| GrafError::Data(format!("beta for {name} is not a number")))?;
            let arcs_json = alpha_map
                .get(name)
                .and_then(Value::as_array)
                .ok_or_else(|| GrafError::Data(format!("no alpha list for association {name}")))?;
            let mut pairs = Vec::with_capacity(arcs_json.len());
            let mut weights = Vec::with_capacity(arcs_json.len());
            let mut max_node = 0u32;
            for entry in arcs_json {
                let triple = entry
                    .as_array()
                    .filter(|t| t.len() == 3)
                    .ok_or_else(|| GrafError::Data(format!("bad alpha entry for {name}")))?;
                let i = triple[0]
                    .as_u64()
                    .ok_or_else(|| GrafError::Data("bad arc source".into()))?
                    as u32;
                let j = triple[1]
                    .as_u64()
                    .ok_or_else(|| GrafError::Data("bad arc target".into()))?
                    as u32;
                let v = triple[2]
                    .as_f64()
                    .ok_or_else(|| GrafError::Data("bad arc weight".into()))?;
                max_node = max_node.max(i).max(j);
                pairs.push((i, j));
                weights.push(v);
            }
            if pairs.is_empty() {
                return Err(GrafError::Data(format!("association {name} lists no arcs")));
            }
            let n = max_node as usize + 1;
            let arcs = ArcSet::from_pairs(n, &pairs)?;
            if arcs.len() != pairs.len() {
                return Err(GrafError::Data(format!(
                    "association {name} lists duplicate arcs"
                )));
            }
            // Weights arrive in file order; realign to the sorted arc order.
            let mut alpha = vec![0.0; arcs.len()];
            for ((i, j), v) in pairs.iter().zip(weights) {
                let idx = arcs.find(*i, *j).ok_or_else(|| {
                    GrafError::Consistency(format!("arc ({i}, {j}) missing after sort"))
                })?;
                alpha[idx] = v;
            }
            associations.push(AssociationAttention {
                name: name.clone(),
                arcs: Arc::new(arcs),
                alpha,
            });
            beta.push(b);
        }
        Ok(AttentionBundle {
            associations,
            beta,
            repeats,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(&self.to_json())?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GrafError::Data(format!("cannot read {}: {e}", path.display())))?;
        let value: Value = serde_json::from_str(&text)?;
        Self::from_json(&value)
    }
}

/// Train the attention model once per seed and average the attention values
/// arc-wise and association-wise.
pub fn extract_averaged_attention(
    view: &TaskView,
    networks: &[AssociationNetwork],
    hp: &Hyperparams,
    seeds: &[u64],
) -> Result<AttentionBundle> {
    if seeds.is_empty() {
        return Err(GrafError::Config(
            "attention extraction needs at least one repeat".into(),
        ));
    }
    let runs = par_map_indexed(seeds.len(), |r| {
        train_attention_model(view, networks, hp, seeds[r])
    });
    let mut outputs = Vec::with_capacity(runs.len());
    for (r, run) in runs.into_iter().enumerate() {
        outputs.push(run.map_err(|e| GrafError::Training {
            epoch: 0,
            message: format!("attention repeat {r} failed: {e}"),
        })?);
    }
    let c = outputs.len() as f64;
    let mut associations = Vec::with_capacity(networks.len());
    let mut beta = vec![0.0; networks.len()];
    for (ai, net) in networks.iter().enumerate() {
        let mut alpha = vec![0.0; net.arcs.len()];
        for out in &outputs {
            for (o, &v) in alpha.iter_mut().zip(&out.alpha[ai]) {
                *o += v;
            }
            beta[ai] += out.beta[ai] / c;
        }
        for v in &mut alpha {
            *v /= c;
        }
        associations.push(AssociationAttention {
            name: net.name.clone(),
            arcs: Arc::clone(&net.arcs),
            alpha,
        });
    }
    let bundle = AttentionBundle {
        associations,
        beta,
        repeats: seeds.len(),
    };
    bundle.validate()?;
    Ok(bundle)
}
