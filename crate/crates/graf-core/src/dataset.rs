//! Dataset directory loading and train/validation/test splits.
//!
//! A dataset directory holds UTF-8 text files:
//!
//! - `features.csv` — n rows of f comma-separated floats,
//! - `labels.tsv` — `node_id<TAB>class_id`, one line per node,
//! - `edges_<REL>.tsv` — `src_id<TAB>dst_id` per typed relation, where `<REL>`
//!   is the concatenated pair of type names (e.g. `edges_PA.tsv`),
//! - `meta_paths.json` — list of type sequences to compose, e.g.
//!   `[["P","A","P"],["P","S","P"]]` (a single flat sequence is also accepted),
//! - optional `split_train.txt` / `split_val.txt` / `split_test.txt` with one
//!   node id per line.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::error::{GrafError, Result};
use crate::graph::{compose_meta_path, AssociationNetwork, TypedGraph};
use crate::rng::{derive, rng_from, stage};

/// Immutable dataset: features, labels, and the composed association
/// networks, shared read-only across parallel runs.
#[derive(Debug, Clone)]
pub struct DatasetBundle {
    pub name: String,
    pub n: usize,
    pub feature_dim: usize,
    pub classes: usize,
    pub features: Arc<Vec<f64>>,
    pub labels: Arc<Vec<u32>>,
    pub networks: Vec<AssociationNetwork>,
}

impl DatasetBundle {
    pub fn network(&self, name: &str) -> Option<&AssociationNetwork> {
        self.networks.iter().find(|n| n.name == name)
    }

    /// Directed-arc and undirected-pair counts per network, for reporting.
    pub fn network_counts(&self) -> Vec<(String, usize, usize)> {
        self.networks
            .iter()
            .map(|net| {
                (
                    net.name.clone(),
                    net.arc_count(),
                    net.undirected_pair_count(),
                )
            })
            .collect()
    }
}

/// Disjoint train/validation/test node-id sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Splits {
    pub train: Vec<u32>,
    pub val: Vec<u32>,
    pub test: Vec<u32>,
}

impl Splits {
    pub fn validate(&self, n: usize) -> Result<()> {
        let mut seen = BTreeSet::new();
        for (name, ids) in [
            ("train", &self.train),
            ("val", &self.val),
            ("test", &self.test),
        ] {
            for &id in ids.iter() {
                if id as usize >= n {
                    return Err(GrafError::Split(format!(
                        "{name} id {id} out of range for {n} nodes"
                    )));
                }
                if !seen.insert(id) {
                    return Err(GrafError::Split(format!(
                        "node {id} appears in more than one split"
                    )));
                }
            }
        }
        Ok(())
    }
}

fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| GrafError::Data(format!("missing or unreadable {}: {e}", path.display())))
}

fn parse_id(token: &str, path: &Path, line_no: usize) -> Result<u32> {
    token.trim().parse::<u32>().map_err(|_| {
        GrafError::Data(format!(
            "{} line {}: bad id {token:?}",
            path.display(),
            line_no + 1
        ))
    })
}

fn load_features(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let text = read_to_string(path)?;
    let mut values = Vec::new();
    let mut width = None;
    let mut rows = 0usize;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut count = 0usize;
        for token in line.split(',') {
            let v: f64 = token.trim().parse().map_err(|_| {
                GrafError::Data(format!(
                    "{} line {}: bad float {token:?}",
                    path.display(),
                    i + 1
                ))
            })?;
            values.push(v);
            count += 1;
        }
        match width {
            None => width = Some(count),
            Some(w) if w != count => {
                return Err(GrafError::Data(format!(
                    "{} line {}: ragged row ({count} values, expected {w})",
                    path.display(),
                    i + 1
                )))
            }
            _ => {}
        }
        rows += 1;
    }
    let width = width.ok_or_else(|| GrafError::Data(format!("{} is empty", path.display())))?;
    Ok((rows, width, values))
}

fn load_labels(path: &Path, n: usize) -> Result<(Vec<u32>, usize)> {
    let text = read_to_string(path)?;
    let mut labels = vec![u32::MAX; n];
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut it = line.split('\t');
        let (a, b) = (it.next().unwrap_or(""), it.next().unwrap_or(""));
        let node = parse_id(a, path, i)?;
        let class = parse_id(b, path, i)?;
        if node as usize >= n {
            return Err(GrafError::Data(format!(
                "{} line {}: node {node} out of range for {n} nodes",
                path.display(),
                i + 1
            )));
        }
        if labels[node as usize] != u32::MAX {
            return Err(GrafError::Data(format!(
                "{}: duplicate label for node {node}",
                path.display()
            )));
        }
        labels[node as usize] = class;
    }
    if let Some(missing) = labels.iter().position(|&l| l == u32::MAX) {
        return Err(GrafError::Data(format!(
            "{}: node {missing} has no label",
            path.display()
        )));
    }
    let classes = labels.iter().copied().max().unwrap_or(0) as usize + 1;
    for c in 0..classes as u32 {
        if !labels.contains(&c) {
            return Err(GrafError::Data(format!("label class {c} has no members")));
        }
    }
    Ok((labels, classes))
}

fn load_edge_file(path: &Path) -> Result<Vec<(u32, u32)>> {
    let text = read_to_string(path)?;
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut it = line.split('\t');
        let src = parse_id(it.next().unwrap_or(""), path, i)?;
        let dst = parse_id(it.next().unwrap_or(""), path, i)?;
        pairs.push((src, dst));
    }
    Ok(pairs)
}

fn load_meta_paths(path: &Path) -> Result<Vec<Vec<String>>> {
    let text = read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| GrafError::Data(format!("{}: {e}", path.display())))?;
    let as_path = |v: &serde_json::Value| -> Option<Vec<String>> {
        v.as_array()?
            .iter()
            .map(|s| s.as_str().map(str::to_string))
            .collect::<Option<Vec<_>>>()
    };
    let paths: Option<Vec<Vec<String>>> = match &value {
        serde_json::Value::Array(items) if items.iter().all(|i| i.is_array()) => {
            items.iter().map(as_path).collect()
        }
        serde_json::Value::Array(_) => as_path(&value).map(|p| vec![p]),
        _ => None,
    };
    let paths = paths.ok_or_else(|| {
        GrafError::Data(format!(
            "{}: expected a list of type sequences",
            path.display()
        ))
    })?;
    if paths.is_empty() {
        return Err(GrafError::Data(format!(
            "{}: no meta-paths listed",
            path.display()
        )));
    }
    Ok(paths)
}

/// Load and validate a dataset directory, composing one association network
/// per listed meta-path. Networks come back sorted by name so downstream
/// results do not depend on listing order.
pub fn load_dataset(dir: &Path) -> Result<DatasetBundle> {
    let dir = dir.to_path_buf();
    let (n, feature_dim, features) = load_features(&dir.join("features.csv"))?;
    let (labels, classes) = load_labels(&dir.join("labels.tsv"), n)?;
    let meta_paths = load_meta_paths(&dir.join("meta_paths.json"))?;

    let anchor = meta_paths[0][0].clone();
    for p in &meta_paths {
        if p.first() != Some(&anchor) || p.last() != Some(&anchor) {
            return Err(GrafError::Data(format!(
                "meta-path {p:?} does not start and end at anchor type {anchor}"
            )));
        }
    }

    // Resolve every needed relation to an edge file, reading each file once.
    let mut graph = TypedGraph::new();
    graph.add_type(&anchor, n);
    let mut relation_files: BTreeMap<(String, String), PathBuf> = BTreeMap::new();
    for p in &meta_paths {
        for step in p.windows(2) {
            let fwd = dir.join(format!("edges_{}{}.tsv", step[0], step[1]));
            let rev = dir.join(format!("edges_{}{}.tsv", step[1], step[0]));
            let (key, path) = if fwd.exists() {
                ((step[0].clone(), step[1].clone()), fwd)
            } else if rev.exists() {
                ((step[1].clone(), step[0].clone()), rev)
            } else {
                return Err(GrafError::Data(format!(
                    "no edge file for relation {}-{} (expected {} or {})",
                    step[0],
                    step[1],
                    fwd.display(),
                    rev.display()
                )));
            };
            relation_files.entry(key).or_insert(path);
        }
    }

    let mut relation_pairs: BTreeMap<(String, String), Vec<(u32, u32)>> = BTreeMap::new();
    let mut type_max: BTreeMap<String, u32> = BTreeMap::new();
    for ((src, dst), path) in &relation_files {
        let pairs = load_edge_file(path)?;
        for &(a, b) in &pairs {
            if src != &anchor {
                let m = type_max.entry(src.clone()).or_insert(0);
                *m = (*m).max(a);
            }
            if dst != &anchor {
                let m = type_max.entry(dst.clone()).or_insert(0);
                *m = (*m).max(b);
            }
        }
        relation_pairs.insert((src.clone(), dst.clone()), pairs);
    }
    for (ty, max_id) in &type_max {
        graph.add_type(ty, *max_id as usize + 1);
    }
    // Types that appear in a meta-path but have no edges at all.
    for p in &meta_paths {
        for ty in p {
            if ty != &anchor && graph.type_count(ty).is_none() {
                graph.add_type(ty, 0);
            }
        }
    }
    for ((src, dst), pairs) in relation_pairs {
        graph.add_relation(&src, &dst, pairs)?;
    }

    let mut networks = Vec::with_capacity(meta_paths.len());
    for p in &meta_paths {
        let net = compose_meta_path(&graph, p)?;
        if networks
            .iter()
            .any(|existing: &AssociationNetwork| existing.name == net.name)
        {
            return Err(GrafError::Data(format!(
                "meta-path {} listed twice",
                net.name
            )));
        }
        networks.push(net);
    }
    networks.sort_by(|a, b| a.name.cmp(&b.name));

    let name = dir
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_string());
    Ok(DatasetBundle {
        name,
        n,
        feature_dim,
        classes,
        features: Arc::new(features),
        labels: Arc::new(labels),
        networks,
    })
}

/// Largest-remainder apportionment of `total` across weights.
fn apportion(weights: &[f64], total: usize) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    if sum <= 0.0 {
        return vec![0; weights.len()];
    }
    let shares: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut counts: Vec<usize> = shares.iter().map(|s| s.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = shares[a] - shares[a].floor();
        let fb = shares[b] - shares[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &i in order.iter().take(total - assigned) {
        counts[i] += 1;
    }
    counts
}

/// Stratified splits: 20% of nodes held out for test, then `train_fraction`
/// of the remainder as train and the rest as validation, class proportions
/// preserved in every split. Deterministic in the seed.
pub fn generate_splits(
    labels: &[u32],
    classes: usize,
    train_fraction: f64,
    seed: u64,
) -> Result<Splits> {
    if !(0.0..1.0).contains(&train_fraction) || train_fraction == 0.0 {
        return Err(GrafError::Split(format!(
            "train fraction {train_fraction} outside (0, 1)"
        )));
    }
    let n = labels.len();
    let mut members: Vec<Vec<u32>> = vec![Vec::new(); classes];
    for (i, &l) in labels.iter().enumerate() {
        if (l as usize) >= classes {
            return Err(GrafError::Split(format!("label {l} out of range")));
        }
        members[l as usize].push(i as u32);
    }
    if let Some(small) = members.iter().position(|m| m.len() < 3) {
        return Err(GrafError::Split(format!(
            "class {small} has {} members, need at least 3 to stratify",
            members[small].len()
        )));
    }

    use rand::seq::SliceRandom;
    let mut rng = rng_from(derive(seed, &[stage::SPLITS]));
    for m in &mut members {
        m.shuffle(&mut rng);
    }

    let sizes: Vec<f64> = members.iter().map(|m| m.len() as f64).collect();
    let total_test = (0.2 * n as f64).round() as usize;
    let test_counts = apportion(&sizes, total_test);

    let remain: Vec<f64> = sizes
        .iter()
        .zip(&test_counts)
        .map(|(s, t)| s - *t as f64)
        .collect();
    let total_train = (train_fraction * (n - total_test) as f64).round() as usize;
    let train_counts = apportion(&remain, total_train);

    let mut splits = Splits {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for (c, m) in members.iter().enumerate() {
        let t = test_counts[c];
        let tr = train_counts[c];
        if t == 0 || tr == 0 || t + tr >= m.len() {
            return Err(GrafError::Split(format!(
                "class {c} too small to stratify into non-empty splits"
            )));
        }
        splits.test.extend_from_slice(&m[..t]);
        splits.train.extend_from_slice(&m[t..t + tr]);
        splits.val.extend_from_slice(&m[t + tr..]);
    }
    splits.train.sort_unstable();
    splits.val.sort_unstable();
    splits.test.sort_unstable();
    Ok(splits)
}

fn load_id_file(path: &Path) -> Result<Vec<u32>> {
    let text = read_to_string(path)?;
    let mut ids = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        ids.push(parse_id(line, path, i)?);
    }
    Ok(ids)
}

/// Load the published split files from a dataset directory.
pub fn load_original_splits(dir: &Path, n: usize) -> Result<Splits> {
    let splits = Splits {
        train: load_id_file(&dir.join("split_train.txt"))?,
        val: load_id_file(&dir.join("split_val.txt"))?,
        test: load_id_file(&dir.join("split_test.txt"))?,
    };
    splits.validate(n)?;
    Ok(splits)
}
