//! `graf` command line: run experiments, sweep training fractions, cluster
//! exported embeddings, and fuse attention files into weighted edge lists.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use graf_core::attention::AttentionBundle;
use graf_core::config::{ExperimentConfig, SplitMode, Variant};
use graf_core::dataset::load_dataset;
use graf_core::error::{GrafError, Result};
use graf_core::experiment::{emit_report, run_clustering_eval, run_pipeline_on, run_split_sweep};
use graf_core::fusion::{eliminate_edges, score_variant, ScoreVariant};
use graf_core::graph::AssociationNetwork;

#[derive(Parser)]
#[command(
    name = "graf",
    version,
    about = "Attention-weighted network fusion and graph classification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment end to end and write reports.
    Run(RunArgs),
    /// Run the pipeline at training fractions 20/40/60/80% over a shared test split.
    SweepSplits(RunArgs),
    /// K-means over the embeddings exported by a completed run.
    Cluster(RunArgs),
    /// Turn an attention file into a fused weighted edge list.
    Fuse(FuseArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the evaluation repeat count.
    #[arg(long)]
    repeats: Option<usize>,
    /// Override the variant.
    #[arg(long)]
    variant: Option<String>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FuseArgs {
    /// Attention file produced by a run (attention.json).
    #[arg(long)]
    attention: PathBuf,
    /// Path for the fused edge list (TSV).
    #[arg(long)]
    out: PathBuf,
    /// Scoring variant: graf, graf_att, graf_node, or graf_asc.
    #[arg(long, default_value = "graf")]
    variant: String,
    /// Apply stochastic edge elimination.
    #[arg(long)]
    eliminate: bool,
    /// Seed for elimination.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn load_config(args: &RunArgs) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(repeats) = args.repeats {
        cfg.eval_repeats = repeats;
    }
    if let Some(variant) = &args.variant {
        cfg.variant = variant.clone();
    }
    if let Some(out) = &args.out {
        cfg.output_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_run(args: &RunArgs) -> Result<()> {
    let cfg = load_config(args)?;
    let bundle = load_dataset(&cfg.dataset_dir)?;
    println!(
        "dataset {}: {} nodes, {} features, {} classes",
        bundle.name, bundle.n, bundle.feature_dim, bundle.classes
    );
    for (name, arcs, pairs) in bundle.network_counts() {
        println!("  association {name}: {arcs} directed arcs, {pairs} undirected pairs (self-loops included)");
    }
    let summary = run_pipeline_on(&cfg, &bundle)?;
    emit_report(&[summary], &cfg.output_dir)?;
    let summary = &cfg.output_dir.join("results.tsv");
    println!("wrote {}", summary.display());
    Ok(())
}

fn cmd_sweep(args: &RunArgs) -> Result<()> {
    let cfg = load_config(args)?;
    if cfg.split_mode != SplitMode::Fraction {
        return Err(GrafError::Config(
            "sweep-splits needs \"split_mode\": \"fraction\"".into(),
        ));
    }
    let summaries = run_split_sweep(&cfg, &[0.2, 0.4, 0.6, 0.8])?;
    emit_report(&summaries, &cfg.output_dir)?;
    for s in &summaries {
        println!(
            "{} {}: median macro F1 {:.4} (+/- {:.4})",
            s.split, s.variant, s.median.macro_f1, s.std.macro_f1
        );
    }
    Ok(())
}

fn cmd_cluster(args: &RunArgs) -> Result<()> {
    let cfg = load_config(args)?;
    let summary = run_clustering_eval(&cfg)?;
    std::fs::create_dir_all(&cfg.output_dir)?;
    let path = cfg.output_dir.join("clustering.json");
    let mut text = serde_json::to_string_pretty(&summary).map_err(GrafError::from)?;
    text.push('\n');
    std::fs::write(&path, text)?;
    println!(
        "clustering over {} repeats (k = {}): ARI {:.4} (+/- {:.4}), NMI {:.4} (+/- {:.4})",
        summary.repeats,
        summary.k,
        summary.ari_median,
        summary.ari_std,
        summary.nmi_median,
        summary.nmi_std
    );
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_fuse(args: &FuseArgs) -> Result<()> {
    let bundle = AttentionBundle::read(&args.attention)?;
    bundle.validate()?;
    let kind = match Variant::parse(&args.variant)? {
        Variant::Graf | Variant::GrafAtt => ScoreVariant::Full,
        Variant::GrafNode => ScoreVariant::NodeOnly,
        Variant::GrafAsc => ScoreVariant::AssocOnly,
        other => {
            return Err(GrafError::Config(format!(
                "variant {} has no fusion scoring",
                other.as_string()
            )))
        }
    };
    let nets: Vec<AssociationNetwork> = bundle
        .associations
        .iter()
        .map(|a| AssociationNetwork {
            name: a.name.clone(),
            n: a.arcs.n(),
            arcs: a.arcs.clone(),
        })
        .collect();
    let mut fused = score_variant(&bundle, &nets, kind)?;
    if args.eliminate {
        fused = eliminate_edges(&fused, args.seed)?;
    }
    fused.write_edges(&args.out)?;
    let meta = match args.out.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => dir.join("fused_meta.json"),
        _ => PathBuf::from("fused_meta.json"),
    };
    fused.write_meta(&meta)?;
    println!(
        "wrote {} ({} arcs over {} nodes)",
        args.out.display(),
        fused.arcs.len(),
        fused.n
    );
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::SweepSplits(args) => cmd_sweep(args),
        Command::Cluster(args) => cmd_cluster(args),
        Command::Fuse(args) => cmd_fuse(args),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
