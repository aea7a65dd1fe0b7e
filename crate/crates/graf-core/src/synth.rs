//! Synthetic heterogeneous datasets with planted label structure, written in
//! the standard dataset directory layout. Used by integration tests and the
//! benchmark suite.

use std::path::Path;

use rand::Rng;

use crate::error::Result;
use crate::rng::{derive, rng_from, stage};

/// Planted generator: anchor type `P`, a class-pure bridge type `A` (each
/// bridge node touches anchors of a single class, so `PAP` connects
/// within-class) and a noise bridge type `B` wired uniformly at random.
#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub anchors: usize,
    pub classes: usize,
    pub feature_dim: usize,
    /// Anchors per pure bridge node.
    pub bridge_arity: usize,
    pub noise_edges: usize,
    /// Feature noise half-width around the class signal.
    pub feature_noise: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            anchors: 48,
            classes: 3,
            feature_dim: 10,
            bridge_arity: 4,
            noise_edges: 60,
            feature_noise: 0.6,
            seed: 1,
        }
    }
}

/// Write a planted dataset directory (features, labels, two bridge relations,
/// meta-paths `PAP` and `PBP`).
pub fn write_synth_dataset(dir: &Path, spec: &SynthSpec) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut rng = rng_from(derive(spec.seed, &[stage::SYNTH]));
    let n = spec.anchors;
    let labels: Vec<u32> = (0..n).map(|i| (i % spec.classes) as u32).collect();

    let mut features = String::new();
    for &l in &labels {
        let row: Vec<String> = (0..spec.feature_dim)
            .map(|d| {
                let signal = if d == l as usize { 1.0 } else { 0.0 };
                let v: f64 = signal + spec.feature_noise * (rng.random::<f64>() * 2.0 - 1.0);
                format!("{v:.6}")
            })
            .collect();
        features.push_str(&row.join(","));
        features.push('\n');
    }
    std::fs::write(dir.join("features.csv"), features)?;

    let mut label_lines = String::new();
    for (i, &l) in labels.iter().enumerate() {
        label_lines.push_str(&format!("{i}\t{l}\n"));
    }
    std::fs::write(dir.join("labels.tsv"), label_lines)?;

    // Pure bridges: consecutive same-class anchors share a bridge node.
    let mut pa = String::new();
    let mut bridge = 0u32;
    for c in 0..spec.classes as u32 {
        let members: Vec<u32> = (0..n as u32).filter(|&i| labels[i as usize] == c).collect();
        for chunk in members.chunks(spec.bridge_arity) {
            for &m in chunk {
                pa.push_str(&format!("{m}\t{bridge}\n"));
            }
            bridge += 1;
        }
    }
    std::fs::write(dir.join("edges_PA.tsv"), pa)?;

    // Noise bridges: random anchor pairs share a bridge node.
    let mut pb = String::new();
    for noise_bridge in 0..spec.noise_edges {
        let a = rng.random_range(0..n as u32);
        let b = rng.random_range(0..n as u32);
        pb.push_str(&format!("{a}\t{noise_bridge}\n"));
        pb.push_str(&format!("{b}\t{noise_bridge}\n"));
    }
    std::fs::write(dir.join("edges_PB.tsv"), pb)?;

    std::fs::write(
        dir.join("meta_paths.json"),
        "[[\"P\",\"A\",\"P\"],[\"P\",\"B\",\"P\"]]\n",
    )?;
    Ok(())
}

/// Also write published-style split files covering every node.
pub fn write_synth_splits(dir: &Path, spec: &SynthSpec) -> Result<()> {
    let (mut train, mut val, mut test) = (String::new(), String::new(), String::new());
    for i in 0..spec.anchors {
        match i % 4 {
            0 => train.push_str(&format!("{i}\n")),
            1 => val.push_str(&format!("{i}\n")),
            _ => test.push_str(&format!("{i}\n")),
        }
    }
    std::fs::write(dir.join("split_train.txt"), train)?;
    std::fs::write(dir.join("split_val.txt"), val)?;
    std::fs::write(dir.join("split_test.txt"), test)?;
    Ok(())
}
