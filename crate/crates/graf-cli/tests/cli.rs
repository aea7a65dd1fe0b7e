//! End-to-end command line tests: exit codes and emitted files.

use std::path::{Path, PathBuf};
use std::process::Command;

use graf_core::synth::{write_synth_dataset, write_synth_splits, SynthSpec};

fn graf() -> Command {
    Command::new(env!("CARGO_BIN_EXE_graf"))
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("graf-cli-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn synth_dataset(tag: &str) -> PathBuf {
    let dir = temp_dir(tag);
    let spec = SynthSpec::default();
    write_synth_dataset(&dir, &spec).unwrap();
    write_synth_splits(&dir, &spec).unwrap();
    dir
}

fn write_config(dir: &Path, dataset: &Path, out: &Path, extra: &str) -> PathBuf {
    let path = dir.join("config.json");
    let body = format!(
        r#"{{
            "dataset_dir": {:?},
            "variant": "graf",
            "output_dir": {:?},
            "split_mode": "fraction",
            "train_fraction": 0.6,
            "attention_repeats": 1,
            "eval_repeats": 2,
            "hidden_sizes": [8],
            "learning_rates": [0.05],
            "seed": 3,
            "heads": 2,
            "semantic_hidden": 8,
            "dropout": 0.1,
            "patience": 5,
            "min_epochs": 15,
            "max_epochs": 30{extra}
        }}"#,
        dataset.display().to_string(),
        out.display().to_string(),
    );
    std::fs::write(&path, body).unwrap();
    path
}

#[test]
fn run_emits_reports_and_exits_zero() {
    let data = synth_dataset("run");
    let out = temp_dir("run-out");
    let cfg = write_config(&data, &data, &out, "");
    let status = graf().args(["run", "--config"]).arg(&cfg).output().unwrap();
    assert!(
        status.status.success(),
        "{}",
        String::from_utf8_lossy(&status.stderr)
    );
    for file in [
        "results.tsv",
        "results.json",
        "attention.json",
        "fused_edges.tsv",
        "predictions.tsv",
    ] {
        assert!(out.join(file).exists(), "{file} missing");
    }
    let stdout = String::from_utf8_lossy(&status.stdout);
    assert!(stdout.contains("association PAP"), "{stdout}");

    // Clustering consumes the run's embeddings.
    let cluster = graf()
        .args(["cluster", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert!(
        cluster.status.success(),
        "{}",
        String::from_utf8_lossy(&cluster.stderr)
    );
    assert!(out.join("clustering.json").exists());

    let _ = std::fs::remove_dir_all(&data);
    let _ = std::fs::remove_dir_all(&out);
}

#[test]
fn config_errors_exit_2() {
    let dir = temp_dir("badcfg");
    let cfg = dir.join("config.json");
    std::fs::write(
        &cfg,
        r#"{"dataset_dir": "x", "variant": "graf", "output_dir": "y", "bogus": 1}"#,
    )
    .unwrap();
    let out = graf().args(["run", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(
        out.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    // Unknown variant override is rejected as configuration too.
    let data = synth_dataset("badvariant");
    let out_dir = temp_dir("badvariant-out");
    let cfg = write_config(&data, &data, &out_dir, "");
    let out = graf()
        .args(["run", "--variant", "nonsense", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let _ = std::fs::remove_dir_all(&data);
    let _ = std::fs::remove_dir_all(&out_dir);
}

#[test]
fn data_errors_exit_3() {
    let dir = temp_dir("nodata");
    let out_dir = temp_dir("nodata-out");
    let missing = dir.join("not-there");
    let cfg = write_config(&dir, &missing, &out_dir, "");
    let out = graf().args(["run", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let _ = std::fs::remove_dir_all(&dir);
    let _ = std::fs::remove_dir_all(&out_dir);
}

#[test]
fn cluster_without_embeddings_exits_3() {
    let data = synth_dataset("nocluster");
    let out_dir = temp_dir("nocluster-out");
    let cfg = write_config(&data, &data, &out_dir, "");
    let out = graf()
        .args(["cluster", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let _ = std::fs::remove_dir_all(&data);
    let _ = std::fs::remove_dir_all(&out_dir);
}

#[test]
fn sweep_requires_fraction_mode() {
    let data = synth_dataset("sweepmode");
    let out_dir = temp_dir("sweepmode-out");
    let cfg = write_config(&data, &data, &out_dir, "");
    // Rewrite split mode to original.
    let body = std::fs::read_to_string(&cfg)
        .unwrap()
        .replace("\"fraction\"", "\"original\"");
    std::fs::write(&cfg, body).unwrap();
    let out = graf()
        .args(["sweep-splits", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let _ = std::fs::remove_dir_all(&data);
    let _ = std::fs::remove_dir_all(&out_dir);
}

#[test]
fn fuse_builds_weighted_edges_from_attention_file() {
    let data = synth_dataset("fuse");
    let out_dir = temp_dir("fuse-out");
    let cfg = write_config(&data, &data, &out_dir, "");
    let run = graf().args(["run", "--config"]).arg(&cfg).output().unwrap();
    assert!(run.status.success());

    let fused_path = out_dir.join("refused_edges.tsv");
    let out = graf()
        .args(["fuse", "--attention"])
        .arg(out_dir.join("attention.json"))
        .args(["--variant", "graf_node", "--out"])
        .arg(&fused_path)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = std::fs::read_to_string(&fused_path).unwrap();
    let first = text.lines().next().unwrap();
    assert_eq!(first.split('\t').count(), 3);
    assert!(out_dir.join("fused_meta.json").exists());

    // Elimination keeps self-loops and stays reproducible.
    let kept_path = out_dir.join("eliminated_edges.tsv");
    let elim = graf()
        .args(["fuse", "--attention"])
        .arg(out_dir.join("attention.json"))
        .args(["--eliminate", "--seed", "9", "--out"])
        .arg(&kept_path)
        .output()
        .unwrap();
    assert!(elim.status.success());
    let kept = std::fs::read_to_string(&kept_path).unwrap();
    let self_loops = kept
        .lines()
        .filter(|l| {
            let mut it = l.split('\t');
            let src = it.next();
            let dst = it.next();
            src == dst
        })
        .count();
    let spec = SynthSpec::default();
    assert_eq!(self_loops, spec.anchors);

    let _ = std::fs::remove_dir_all(&data);
    let _ = std::fs::remove_dir_all(&out_dir);
}
