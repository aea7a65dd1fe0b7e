#![allow(dead_code)]

pub mod gradcheck;

use std::path::PathBuf;

use graf_core::synth::{write_synth_dataset, write_synth_splits, SynthSpec};

/// Fresh scratch directory under the system temp dir.
pub fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("graf-it-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

/// Planted dataset with published-style splits, written under a scratch dir.
pub fn synth_dataset(tag: &str, spec: &SynthSpec) -> PathBuf {
    let dir = temp_dir(tag);
    write_synth_dataset(&dir, spec).unwrap();
    write_synth_splits(&dir, spec).unwrap();
    dir
}
