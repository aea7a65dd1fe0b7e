//! Experiment orchestration: grid search, repeated evaluation, reports.
//!
//! One run follows a fixed protocol: build the association networks, and for
//! every hyperparameter cell run the whole process — attention extraction
//! (averaged over repeats), fusion, elimination arm(s), and repeated
//! classifier training — scoring each cell by the median validation macro F1.
//! The winning combination is then retrained from fresh seeds and the test
//! split is touched only at that point; a label guard fails the run if
//! anything requests test labels earlier.

use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicU8, Ordering};
use std::sync::Arc;

use serde::Serialize;

use crate::attention::{extract_averaged_attention, train_attention_model, AttentionBundle};
use crate::config::{Elimination, ExperimentConfig, SplitMode, Variant};
use crate::dataset::{generate_splits, load_dataset, load_original_splits, DatasetBundle, Splits};
use crate::error::{GrafError, Result};
use crate::eval::{ari, classification_metrics, kmeans, nmi, MetricReport};
use crate::fusion::{eliminate_edges, score_variant, FusedGraph, ScoreVariant};
use crate::gcn::train_gcn;
use crate::parallel::par_map_indexed;
use crate::rng::{derive, stage};
use crate::task::{argmax_rows, TaskView, REDACTED_LABEL};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Selection,
    Final,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitKind {
    Train,
    Val,
    Test,
}

/// Gatekeeper for label reads. Training sees labels redacted to the train and
/// validation splits; test labels are released only in the final phase, and a
/// read attempt during selection fails the run.
pub struct LabelGuard {
    labels: Arc<Vec<u32>>,
    splits: Splits,
    phase: AtomicU8,
    test_read: AtomicBool,
}

impl LabelGuard {
    pub fn new(labels: Arc<Vec<u32>>, splits: Splits) -> Self {
        LabelGuard {
            labels,
            splits,
            phase: AtomicU8::new(0),
            test_read: AtomicBool::new(false),
        }
    }

    pub fn set_phase(&self, phase: Phase) {
        self.phase
            .store(if phase == Phase::Final { 1 } else { 0 }, Ordering::SeqCst);
    }

    pub fn phase(&self) -> Phase {
        if self.phase.load(Ordering::SeqCst) == 1 {
            Phase::Final
        } else {
            Phase::Selection
        }
    }

    pub fn splits(&self) -> &Splits {
        &self.splits
    }

    /// Training view with test labels replaced by an out-of-range sentinel.
    pub fn training_view(&self, bundle: &DatasetBundle) -> TaskView {
        let mut labels = vec![REDACTED_LABEL; bundle.n];
        for &id in self.splits.train.iter().chain(self.splits.val.iter()) {
            labels[id as usize] = self.labels[id as usize];
        }
        TaskView {
            n: bundle.n,
            feature_dim: bundle.feature_dim,
            classes: bundle.classes,
            features: Arc::clone(&bundle.features),
            labels: Arc::new(labels),
            train_ids: Arc::new(self.splits.train.clone()),
            val_ids: Arc::new(self.splits.val.clone()),
        }
    }

    /// Labels of one split, in split order. Test labels are refused during
    /// selection.
    pub fn labels_for(&self, kind: SplitKind) -> Result<Vec<u32>> {
        if kind == SplitKind::Test {
            self.test_read.store(true, Ordering::SeqCst);
            if self.phase() == Phase::Selection {
                return Err(GrafError::Consistency(
                    "test labels requested during model selection".into(),
                ));
            }
        }
        let ids = match kind {
            SplitKind::Train => &self.splits.train,
            SplitKind::Val => &self.splits.val,
            SplitKind::Test => &self.splits.test,
        };
        Ok(ids.iter().map(|&i| self.labels[i as usize]).collect())
    }

    pub fn test_was_read(&self) -> bool {
        self.test_read.load(Ordering::SeqCst)
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct MetricTriple {
    pub macro_f1: f64,
    pub weighted_f1: f64,
    pub accuracy: f64,
}

/// Median of a sample; even-length samples average the middle pair.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Sample standard deviation; 0 for fewer than two values.
pub fn sample_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let var =
        values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (values.len() - 1) as f64;
    var.sqrt()
}

/// Outcome of one configured run.
#[derive(Debug, Serialize)]
pub struct RunSummary {
    pub variant: String,
    pub dataset: String,
    pub split: String,
    pub seed: u64,
    pub chosen_hidden: usize,
    pub chosen_learning_rate: f64,
    pub elimination_used: bool,
    pub repeats: usize,
    pub per_repeat: Vec<MetricReport>,
    pub median: MetricTriple,
    pub std: MetricTriple,
    pub attention_beta: Option<std::collections::BTreeMap<String, f64>>,
    #[serde(skip)]
    pub attention: Option<AttentionBundle>,
    #[serde(skip)]
    pub fused: Option<FusedGraph>,
    /// Per-repeat node embeddings (n x embed_dim each).
    #[serde(skip)]
    pub embeddings: Vec<Vec<f64>>,
    #[serde(skip)]
    pub embed_dim: usize,
    /// (node, truth, prediction) over the test split, from the first repeat.
    #[serde(skip)]
    pub predictions: Vec<(u32, u32, u32)>,
}

fn summarize(reports: &[MetricReport]) -> (MetricTriple, MetricTriple) {
    let macro_f1: Vec<f64> = reports.iter().map(|r| r.macro_f1).collect();
    let weighted: Vec<f64> = reports.iter().map(|r| r.weighted_f1).collect();
    let acc: Vec<f64> = reports.iter().map(|r| r.accuracy).collect();
    (
        MetricTriple {
            macro_f1: median(&macro_f1),
            weighted_f1: median(&weighted),
            accuracy: median(&acc),
        },
        MetricTriple {
            macro_f1: sample_std(&macro_f1),
            weighted_f1: sample_std(&weighted),
            accuracy: sample_std(&acc),
        },
    )
}

fn collect_results<T>(results: Vec<Result<T>>) -> Result<Vec<T>> {
    let mut out = Vec::with_capacity(results.len());
    for r in results {
        out.push(r?);
    }
    Ok(out)
}

struct FinalRun {
    report: MetricReport,
    embeddings: Vec<f64>,
    predictions: Vec<u32>,
}

fn score_kind_of(variant: &Variant) -> Option<ScoreVariant> {
    match variant {
        Variant::Graf | Variant::GrafAtt => Some(ScoreVariant::Full),
        Variant::GrafNode => Some(ScoreVariant::NodeOnly),
        Variant::GrafAsc => Some(ScoreVariant::AssocOnly),
        _ => None,
    }
}

/// Run the full protocol for one configuration over an already-loaded
/// dataset.
pub fn run_pipeline_on(cfg: &ExperimentConfig, bundle: &DatasetBundle) -> Result<RunSummary> {
    cfg.validate()?;
    let variant = cfg.parsed_variant()?;
    let splits = match cfg.split_mode {
        SplitMode::Original => load_original_splits(&cfg.dataset_dir, bundle.n)?,
        SplitMode::Fraction => {
            generate_splits(&bundle.labels, bundle.classes, cfg.train_fraction, cfg.seed)?
        }
    };
    if splits.train.is_empty() || splits.val.is_empty() || splits.test.is_empty() {
        return Err(GrafError::Split("every split must be non-empty".into()));
    }
    let guard = LabelGuard::new(Arc::clone(&bundle.labels), splits);
    let view = guard.training_view(bundle);
    let grid = cfg.grid();
    let classes = bundle.classes;
    let test_ids: Vec<u32> = guard.splits().test.clone();

    // Selection and final runs per variant family.
    let (chosen_cell, elimination_used, attention, fused, finals): (
        usize,
        bool,
        Option<AttentionBundle>,
        Option<FusedGraph>,
        Vec<FinalRun>,
    ) = match &variant {
        Variant::Han => {
            let cell_scores = collect_results(par_map_indexed(grid.len(), |ci| {
                let hp = cfg.hyperparams(grid[ci].0, grid[ci].1);
                let vals = collect_results(par_map_indexed(cfg.eval_repeats, |r| {
                    let seed = derive(
                        cfg.seed,
                        &[stage::GRID_CELL, ci as u64, stage::EVAL_REPEAT, r as u64],
                    );
                    Ok(train_attention_model(&view, &bundle.networks, &hp, seed)?.best_val_f1)
                }))?;
                Ok(median(&vals))
            }))?;
            let best = best_index(&cell_scores);
            let hp = cfg.hyperparams(grid[best].0, grid[best].1);
            guard.set_phase(Phase::Final);
            let truth = guard.labels_for(SplitKind::Test)?;
            let finals = collect_results(par_map_indexed(cfg.eval_repeats, |r| {
                let seed = derive(cfg.seed, &[stage::FINAL, r as u64]);
                let out = train_attention_model(&view, &bundle.networks, &hp, seed)?;
                let predictions = argmax_rows(&out.logits, classes, &test_ids);
                let report = classification_metrics(&truth, &predictions, classes)?;
                Ok(FinalRun {
                    report,
                    embeddings: out.embedding,
                    predictions,
                })
            }))?;
            (best, false, None, None, finals)
        }
        Variant::GcnSingle(name) => {
            let net = bundle.network(name).ok_or_else(|| {
                GrafError::Config(format!("dataset has no association named {name}"))
            })?;
            let weights = vec![1.0; net.arcs.len()];
            let cell_scores = collect_results(par_map_indexed(grid.len(), |ci| {
                let hp = cfg.hyperparams(grid[ci].0, grid[ci].1);
                let vals = collect_results(par_map_indexed(cfg.eval_repeats, |r| {
                    let seed = derive(
                        cfg.seed,
                        &[stage::GRID_CELL, ci as u64, stage::EVAL_REPEAT, r as u64],
                    );
                    Ok(train_gcn(Arc::clone(&net.arcs), &weights, &view, &hp, seed)?.best_val_f1)
                }))?;
                Ok(median(&vals))
            }))?;
            let best = best_index(&cell_scores);
            let hp = cfg.hyperparams(grid[best].0, grid[best].1);
            guard.set_phase(Phase::Final);
            let truth = guard.labels_for(SplitKind::Test)?;
            let finals = collect_results(par_map_indexed(cfg.eval_repeats, |r| {
                let seed = derive(cfg.seed, &[stage::FINAL, r as u64]);
                let out = train_gcn(Arc::clone(&net.arcs), &weights, &view, &hp, seed)?;
                let predictions = argmax_rows(&out.logits, classes, &test_ids);
                let report = classification_metrics(&truth, &predictions, classes)?;
                Ok(FinalRun {
                    report,
                    embeddings: out.embeddings,
                    predictions,
                })
            }))?;
            (best, false, None, None, finals)
        }
        fusion_variant => {
            let kind = score_kind_of(fusion_variant).expect("fusion variant");
            let arms: Vec<bool> = match (fusion_variant, cfg.elimination) {
                (Variant::GrafAtt, _) => vec![false],
                (_, Elimination::On) => vec![true],
                (_, Elimination::Off) => vec![false],
                (_, Elimination::Auto) => vec![false, true],
            };

            struct CellOutcome {
                bundle: AttentionBundle,
                fused: Vec<(bool, FusedGraph)>,
                medians: Vec<f64>,
            }
            let cells: Vec<CellOutcome> = collect_results(par_map_indexed(grid.len(), |ci| {
                let hp = cfg.hyperparams(grid[ci].0, grid[ci].1);
                let att_seeds: Vec<u64> = (0..cfg.attention_repeats)
                    .map(|r| {
                        derive(
                            cfg.seed,
                            &[
                                stage::GRID_CELL,
                                ci as u64,
                                stage::ATTENTION_REPEAT,
                                r as u64,
                            ],
                        )
                    })
                    .collect();
                let att = extract_averaged_attention(&view, &bundle.networks, &hp, &att_seeds)?;
                let base = score_variant(&att, &bundle.networks, kind)?;
                let mut fused_arms = Vec::new();
                let mut medians = Vec::new();
                for &arm in &arms {
                    let fused = if arm {
                        eliminate_edges(&base, derive(cfg.seed, &[stage::ELIMINATION, ci as u64]))?
                    } else {
                        base.clone()
                    };
                    let vals = collect_results(par_map_indexed(cfg.eval_repeats, |r| {
                        let seed = derive(
                            cfg.seed,
                            &[stage::GRID_CELL, ci as u64, stage::EVAL_REPEAT, r as u64],
                        );
                        Ok(
                            train_gcn(Arc::clone(&fused.arcs), &fused.scores, &view, &hp, seed)?
                                .best_val_f1,
                        )
                    }))?;
                    medians.push(median(&vals));
                    fused_arms.push((arm, fused));
                }
                Ok(CellOutcome {
                    bundle: att,
                    fused: fused_arms,
                    medians,
                })
            }))?;

            // Best (cell, arm) by median validation score; earliest wins ties.
            let mut best_cell = 0usize;
            let mut best_arm = 0usize;
            let mut best_score = f64::NEG_INFINITY;
            for (ci, cell) in cells.iter().enumerate() {
                for (ai, &m) in cell.medians.iter().enumerate() {
                    if m > best_score {
                        best_score = m;
                        best_cell = ci;
                        best_arm = ai;
                    }
                }
            }
            let mut cells = cells;
            let chosen = cells.swap_remove(best_cell);
            drop(cells);
            let (elim_used, fused) = chosen
                .fused
                .into_iter()
                .nth(best_arm)
                .expect("chosen arm exists");
            let hp = cfg.hyperparams(grid[best_cell].0, grid[best_cell].1);
            guard.set_phase(Phase::Final);
            let truth = guard.labels_for(SplitKind::Test)?;
            let finals = collect_results(par_map_indexed(cfg.eval_repeats, |r| {
                let seed = derive(cfg.seed, &[stage::FINAL, r as u64]);
                let out = train_gcn(Arc::clone(&fused.arcs), &fused.scores, &view, &hp, seed)?;
                let predictions = argmax_rows(&out.logits, classes, &test_ids);
                let report = classification_metrics(&truth, &predictions, classes)?;
                Ok(FinalRun {
                    report,
                    embeddings: out.embeddings,
                    predictions,
                })
            }))?;
            (
                best_cell,
                elim_used,
                Some(chosen.bundle),
                Some(fused),
                finals,
            )
        }
    };

    let reports: Vec<MetricReport> = finals.iter().map(|f| f.report.clone()).collect();
    let (median_triple, std_triple) = summarize(&reports);
    let embed_dim = grid[chosen_cell].0;
    let predictions: Vec<(u32, u32, u32)> = {
        let truth = guard.labels_for(SplitKind::Test)?;
        test_ids
            .iter()
            .zip(&truth)
            .zip(&finals[0].predictions)
            .map(|((&node, &t), &p)| (node, t, p))
            .collect()
    };
    let attention_beta = attention.as_ref().map(|b| {
        b.associations
            .iter()
            .zip(&b.beta)
            .map(|(a, &v)| (a.name.clone(), v))
            .collect()
    });

    Ok(RunSummary {
        variant: cfg.variant.clone(),
        dataset: bundle.name.clone(),
        split: cfg.split_label(),
        seed: cfg.seed,
        chosen_hidden: grid[chosen_cell].0,
        chosen_learning_rate: grid[chosen_cell].1,
        elimination_used,
        repeats: cfg.eval_repeats,
        per_repeat: reports,
        median: median_triple,
        std: std_triple,
        attention_beta,
        attention,
        fused,
        embeddings: finals.into_iter().map(|f| f.embeddings).collect(),
        embed_dim,
        predictions,
    })
}

fn best_index(scores: &[f64]) -> usize {
    let mut best = 0usize;
    let mut best_score = f64::NEG_INFINITY;
    for (i, &s) in scores.iter().enumerate() {
        if s > best_score {
            best_score = s;
            best = i;
        }
    }
    best
}

/// Load the dataset and run one configured pipeline.
pub fn run_pipeline(cfg: &ExperimentConfig) -> Result<RunSummary> {
    let bundle = load_dataset(&cfg.dataset_dir)?;
    run_pipeline_on(cfg, &bundle)
}

/// One pipeline per training fraction, sharing the dataset and (through the
/// common seed) the identical test split.
pub fn run_split_sweep(cfg: &ExperimentConfig, fractions: &[f64]) -> Result<Vec<RunSummary>> {
    if cfg.split_mode != SplitMode::Fraction {
        return Err(GrafError::Config(
            "split sweep requires fraction split mode".into(),
        ));
    }
    let bundle = load_dataset(&cfg.dataset_dir)?;
    let mut out = Vec::with_capacity(fractions.len());
    for &f in fractions {
        let mut sub = cfg.clone();
        sub.train_fraction = f;
        out.push(run_pipeline_on(&sub, &bundle)?);
    }
    Ok(out)
}

/// Median and spread of clustering agreement over per-repeat embeddings.
#[derive(Debug, Serialize)]
pub struct ClusteringSummary {
    pub variant: String,
    pub dataset: String,
    pub seed: u64,
    pub k: usize,
    pub repeats: usize,
    pub node_subset: String,
    pub per_repeat_ari: Vec<f64>,
    pub per_repeat_nmi: Vec<f64>,
    pub ari_median: f64,
    pub ari_std: f64,
    pub nmi_median: f64,
    pub nmi_std: f64,
}

/// K-means (k = class count) on each repeat's exported embeddings.
pub fn run_clustering_eval(cfg: &ExperimentConfig) -> Result<ClusteringSummary> {
    cfg.validate()?;
    let bundle = load_dataset(&cfg.dataset_dir)?;
    let k = bundle.classes;
    let mut aris = Vec::with_capacity(cfg.eval_repeats);
    let mut nmis = Vec::with_capacity(cfg.eval_repeats);
    let runs = collect_results(par_map_indexed(cfg.eval_repeats, |r| {
        let path = cfg.output_dir.join(format!("embeddings_rep{r}.csv"));
        if !path.exists() {
            return Err(GrafError::Usage(format!(
                "no exported embeddings at {} (run the pipeline first)",
                path.display()
            )));
        }
        let (n, dim, data) = read_embeddings_csv(&path)?;
        if n != bundle.n {
            return Err(GrafError::Usage(format!(
                "embeddings at {} cover {n} nodes, dataset has {}",
                path.display(),
                bundle.n
            )));
        }
        let assignments = kmeans(
            &data,
            n,
            dim,
            k,
            derive(cfg.seed, &[stage::KMEANS, r as u64]),
            cfg.kmeans_restarts,
        )?;
        Ok((
            ari(&bundle.labels, &assignments)?,
            nmi(&bundle.labels, &assignments)?,
        ))
    }))?;
    for (a, m) in runs {
        aris.push(a);
        nmis.push(m);
    }
    Ok(ClusteringSummary {
        variant: cfg.variant.clone(),
        dataset: bundle.name.clone(),
        seed: cfg.seed,
        k,
        repeats: cfg.eval_repeats,
        node_subset: "all_labeled".into(),
        ari_median: median(&aris),
        ari_std: sample_std(&aris),
        nmi_median: median(&nmis),
        nmi_std: sample_std(&nmis),
        per_repeat_ari: aris,
        per_repeat_nmi: nmis,
    })
}

pub fn write_embeddings_csv(path: &Path, data: &[f64], n: usize, dim: usize) -> Result<()> {
    let mut out = String::new();
    for i in 0..n {
        let row: Vec<String> = data[i * dim..(i + 1) * dim]
            .iter()
            .map(|v| format!("{v}"))
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_embeddings_csv(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| GrafError::Usage(format!("cannot read {}: {e}", path.display())))?;
    let mut data = Vec::new();
    let mut dim = None;
    let mut rows = 0;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut count = 0;
        for token in line.split(',') {
            let v: f64 = token.trim().parse().map_err(|_| {
                GrafError::Data(format!(
                    "{} line {}: bad float {token:?}",
                    path.display(),
                    i + 1
                ))
            })?;
            data.push(v);
            count += 1;
        }
        match dim {
            None => dim = Some(count),
            Some(d) if d != count => {
                return Err(GrafError::Data(format!(
                    "{} line {}: ragged row",
                    path.display(),
                    i + 1
                )))
            }
            _ => {}
        }
        rows += 1;
    }
    let dim = dim.ok_or_else(|| GrafError::Data(format!("{} is empty", path.display())))?;
    Ok((rows, dim, data))
}

/// Write `results.tsv`, `results.json`, and the run artifacts (attention,
/// fused edges, per-repeat embeddings, test predictions, metric detail).
pub fn emit_report(summaries: &[RunSummary], out_dir: &Path) -> Result<()> {
    if summaries.is_empty() {
        return Err(GrafError::Usage("nothing to report".into()));
    }
    std::fs::create_dir_all(out_dir)?;

    let mut tsv = String::from("variant\tdataset\tsplit\tmetric\tmedian\tstd\n");
    for s in summaries {
        for (metric, med, std) in [
            ("macro_f1", s.median.macro_f1, s.std.macro_f1),
            ("weighted_f1", s.median.weighted_f1, s.std.weighted_f1),
            ("accuracy", s.median.accuracy, s.std.accuracy),
        ] {
            tsv.push_str(&format!(
                "{}\t{}\t{}\t{}\t{:.6}\t{:.6}\n",
                s.variant, s.dataset, s.split, metric, med, std
            ));
        }
    }
    std::fs::write(out_dir.join("results.tsv"), tsv)?;

    let mut json = serde_json::to_string_pretty(&summaries)?;
    json.push('\n');
    std::fs::write(out_dir.join("results.json"), json)?;

    if let Some(s) = summaries.iter().find(|s| s.attention.is_some()) {
        s.attention
            .as_ref()
            .unwrap()
            .write(&out_dir.join("attention.json"))?;
    }
    if let Some(s) = summaries.iter().find(|s| s.fused.is_some()) {
        let fused = s.fused.as_ref().unwrap();
        fused.write_edges(&out_dir.join("fused_edges.tsv"))?;
        fused.write_meta(&out_dir.join("fused_meta.json"))?;
    }
    if summaries.len() == 1 {
        let s = &summaries[0];
        for (r, emb) in s.embeddings.iter().enumerate() {
            let n = emb.len() / s.embed_dim;
            write_embeddings_csv(
                &out_dir.join(format!("embeddings_rep{r}.csv")),
                emb,
                n,
                s.embed_dim,
            )?;
        }
        let mut preds = String::new();
        for &(node, truth, pred) in &s.predictions {
            preds.push_str(&format!("{node}\t{truth}\t{pred}\n"));
        }
        std::fs::write(out_dir.join("predictions.tsv"), preds)?;

        let detail = serde_json::json!({
            "variant": s.variant,
            "dataset": s.dataset,
            "split": s.split,
            "seed": s.seed,
            "chosen_hidden": s.chosen_hidden,
            "chosen_learning_rate": s.chosen_learning_rate,
            "elimination_used": s.elimination_used,
            "median": s.median,
            "std": s.std,
            "per_repeat": s.per_repeat,
        });
        let mut text = serde_json::to_string_pretty(&detail)?;
        text.push('\n');
        std::fs::write(out_dir.join("metrics.json"), text)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_and_std_basics() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(sample_std(&[1.0]), 0.0);
        let s = sample_std(&[1.0, 2.0, 3.0]);
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn guard_refuses_test_labels_during_selection() {
        let labels = Arc::new(vec![0u32, 1, 0, 1]);
        let splits = Splits {
            train: vec![0],
            val: vec![1],
            test: vec![2, 3],
        };
        let guard = LabelGuard::new(labels, splits);
        assert!(guard.labels_for(SplitKind::Train).is_ok());
        assert!(guard.labels_for(SplitKind::Val).is_ok());
        assert!(guard.labels_for(SplitKind::Test).is_err());
        assert!(guard.test_was_read());
        guard.set_phase(Phase::Final);
        assert_eq!(guard.labels_for(SplitKind::Test).unwrap(), vec![0, 1]);
    }

    #[test]
    fn training_view_redacts_test_labels() {
        let labels = Arc::new(vec![0u32, 1, 0, 1]);
        let splits = Splits {
            train: vec![0],
            val: vec![1],
            test: vec![2, 3],
        };
        let guard = LabelGuard::new(Arc::clone(&labels), splits);
        let bundle = DatasetBundle {
            name: "t".into(),
            n: 4,
            feature_dim: 1,
            classes: 2,
            features: Arc::new(vec![0.0; 4]),
            labels,
            networks: vec![],
        };
        let view = guard.training_view(&bundle);
        assert_eq!(view.labels[0], 0);
        assert_eq!(view.labels[1], 1);
        assert_eq!(view.labels[2], REDACTED_LABEL);
        assert_eq!(view.labels[3], REDACTED_LABEL);
    }
}
