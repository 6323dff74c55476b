use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::{info, warn};
use privse_core::io::{
    fmt_sig9, read_graph_tsv, read_partition_csv, write_graph_tsv, write_json, write_partition_csv,
};
use privse_core::metrics::spearman;
use privse_core::privacy::sensitivity_report as block_report;
use privse_core::{
    build_block_graph, cluster_graph, evaluate as score, generate, run_block, BlockGraph,
    BlockView, ClusterOptions, ClusterRun, Corpus, Epsilon, Grouping, Partition, PrivacyParams,
    SynthConfig, DEFAULT_Q0, DEFAULT_Q0_POOLED,
};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::{BuildArgs, ClusterArgs, EvaluateArgs, ReportArgs, SweepArgs, SynthArgs};

const VERSION: &str = env!("CARGO_PKG_VERSION");

fn config_hash(config: &Value) -> String {
    hex::encode(Sha256::digest(config.to_string().as_bytes()))
}

/// The run configuration with the tool version and its hash.
fn manifest(command: &str, config: Value) -> Value {
    json!({
        "command": command,
        "version": VERSION,
        "config_hash": config_hash(&config),
        "config": config,
    })
}

fn blocks(corpus: &Corpus, pooled: bool) -> Vec<BlockView<'_>> {
    if pooled {
        vec![corpus.pooled()]
    } else {
        corpus.split_blocks()
    }
}

fn default_q0(q0: Option<usize>, pooled: bool) -> usize {
    q0.unwrap_or(if pooled {
        DEFAULT_Q0_POOLED
    } else {
        DEFAULT_Q0
    })
}

fn grouping(sequential: bool) -> Grouping {
    if sequential {
        Grouping::Sequential
    } else {
        Grouping::OptimalSubgraphs
    }
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).with_context(|| format!("cannot create {}", path.display()))
}

/// Runs `f` on every block with at least two records. Failures are logged and
/// turn into an error once all blocks have been attempted.
fn each_block<'a>(
    blocks: &[BlockView<'a>],
    mut f: impl FnMut(&BlockView<'a>) -> Result<()>,
) -> Result<()> {
    let mut failed = Vec::new();
    for block in blocks {
        if block.len() < 2 {
            warn!("{}: skipped, {} record(s)", block.name(), block.len());
            continue;
        }
        if let Err(err) = f(block) {
            log::error!("{}: {err:#}", block.name());
            failed.push(block.name());
        }
    }
    if !failed.is_empty() {
        bail!("{} block(s) failed: {}", failed.len(), failed.join(", "));
    }
    Ok(())
}

pub fn synth(args: &SynthArgs) -> Result<()> {
    let mut config = SynthConfig::new(args.events, args.per_event, args.dim, args.seed);
    config.intra_concentration = args.concentration;
    config.attribute_sharing_prob = args.attr_prob;
    config.num_blocks = args.blocks;
    let corpus = generate(&config)?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    corpus.export(&args.out)?;
    let mut manifest_path = args.out.clone().into_os_string();
    manifest_path.push(".manifest.json");
    let mut record = manifest("synth", serde_json::to_value(&config)?);
    record["seed"] = json!(config.seed);
    record["records"] = json!(corpus.len());
    write_json(PathBuf::from(manifest_path), &record)?;
    info!("wrote {} records to {}", corpus.len(), args.out.display());
    Ok(())
}

pub fn build_graph(args: &BuildArgs) -> Result<()> {
    let params =
        PrivacyParams::new(args.privacy.epsilon, args.privacy.seed).with_mode(args.privacy.mode);
    params.validate()?;
    if args.kmax == 0 {
        bail!("--kmax must be at least 1");
    }
    let corpus = Corpus::ingest(&args.input)?;
    create_dir(&args.out)?;
    let config = json!({
        "input": args.input,
        "out": args.out,
        "privacy": params,
        "k_max": args.kmax,
        "pooled": args.pooled,
    });
    write_json(
        args.out.join("config.json"),
        &manifest("build-graph", config),
    )?;
    each_block(&blocks(&corpus, args.pooled), |block| {
        let built = build_block_graph(block, &params, args.kmax)?;
        let dir = args.out.join(&built.name);
        write_graph_tsv(dir.join("graph.tsv"), built.graph()?, &built.ids)?;
        write_json(dir.join("graph.json"), &built)?;
        Ok(())
    })
}

/// Subdirectories of `root` that contain `marker`, sorted by name.
fn block_dirs(root: &Path, marker: &str) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(root).with_context(|| format!("cannot read {}", root.display()))?;
    let mut dirs = Vec::new();
    for entry in entries {
        let path = entry?.path();
        if path.is_dir() && path.join(marker).exists() {
            dirs.push(path);
        }
    }
    dirs.sort();
    if dirs.is_empty() {
        bail!("no block directory with {marker} under {}", root.display());
    }
    Ok(dirs)
}

fn dir_name(dir: &Path) -> String {
    dir.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

#[derive(Serialize)]
struct RunSummary<'a> {
    block: &'a str,
    grouping: Grouping,
    q0: usize,
    q: usize,
    communities: usize,
    initial_h2: f64,
    final_h2: f64,
    converged: bool,
    rounds: &'a [privse_core::partition::RoundLog],
}

impl<'a> RunSummary<'a> {
    fn new(block: &'a str, grouping: Grouping, run: &'a ClusterRun) -> Self {
        RunSummary {
            block,
            grouping,
            q0: run.q0,
            q: run.q,
            communities: run.partition.num_communities(),
            initial_h2: run.initial_h2,
            final_h2: run.final_h2,
            converged: run.converged,
            rounds: &run.rounds,
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text =
        fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("malformed {}", path.display()))
}

pub fn cluster(args: &ClusterArgs) -> Result<()> {
    let out = args.out.clone().unwrap_or_else(|| args.input.clone());
    let dirs = block_dirs(&args.input, "graph.json")?;
    create_dir(&out)?;
    let config = json!({
        "input": args.input,
        "out": out,
        "q0": args.q0,
        "grouping": grouping(args.sequential_split),
    });
    write_json(
        out.join("cluster_config.json"),
        &manifest("cluster", config),
    )?;

    let mut failed = Vec::new();
    for dir in dirs {
        let name = dir_name(&dir);
        let result = (|| -> Result<()> {
            let meta: BlockGraph = read_json(&dir.join("graph.json"))?;
            let graph = read_graph_tsv(dir.join("graph.tsv"), &meta.ids)?;
            let options = ClusterOptions {
                grouping: grouping(args.sequential_split),
                ..ClusterOptions::new(default_q0(args.q0, meta.block.is_none()))
            };
            let run = cluster_graph(&graph, &options)?;
            let target = out.join(&name);
            write_partition_csv(target.join("partition.csv"), &run.partition, &meta.ids)?;
            write_json(
                target.join("run.json"),
                &RunSummary::new(&name, options.grouping, &run),
            )?;
            info!(
                "{name}: {} communities, H2 {:.6}",
                run.partition.num_communities(),
                run.final_h2
            );
            Ok(())
        })();
        if let Err(err) = result {
            log::error!("{name}: {err:#}");
            failed.push(name);
        }
    }
    if !failed.is_empty() {
        bail!("{} block(s) failed: {}", failed.len(), failed.join(", "));
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
struct BlockMetrics {
    block: String,
    ami: f64,
    ari: f64,
    n: usize,
    num_true: usize,
    num_pred: usize,
}

pub fn evaluate(args: &EvaluateArgs) -> Result<()> {
    let corpus = Corpus::ingest(&args.corpus)?;
    let labels: HashMap<&str, Option<&str>> = corpus
        .records()
        .iter()
        .map(|r| (r.id.as_str(), r.label.as_deref()))
        .collect();
    let mut scored = Vec::new();
    for dir in block_dirs(&args.input, "partition.csv")? {
        let name = dir_name(&dir);
        let rows = read_partition_csv(dir.join("partition.csv"))?;
        let truth: Option<Vec<String>> = rows
            .iter()
            .map(|(id, _)| {
                labels
                    .get(id.as_str())
                    .copied()
                    .flatten()
                    .map(str::to_string)
            })
            .collect();
        let Some(truth) = truth else {
            warn!("{name}: gold labels missing, evaluation skipped");
            continue;
        };
        if truth.len() < 2 {
            warn!("{name}: fewer than two records, evaluation skipped");
            continue;
        }
        let partition = Partition::from_labels(rows.iter().map(|(_, c)| *c));
        let eval = score(&truth, &partition)?;
        let metrics = BlockMetrics {
            block: name,
            ami: eval.ami,
            ari: eval.ari,
            n: eval.n,
            num_true: eval.true_classes,
            num_pred: eval.clusters,
        };
        write_json(dir.join("metrics.json"), &metrics)?;
        scored.push(metrics);
    }
    let mean = |f: fn(&BlockMetrics) -> f64| {
        (!scored.is_empty()).then(|| scored.iter().map(f).sum::<f64>() / scored.len() as f64)
    };
    let report = json!({
        "blocks": scored,
        "mean": { "ami": mean(|m| m.ami), "ari": mean(|m| m.ari), "blocks": scored.len() },
    });
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| args.input.join("metrics.json"));
    write_json(&out, &report)?;
    println!("{}", serde_json::to_string_pretty(&report["mean"])?);
    Ok(())
}

fn with_off(epsilons: &[Epsilon]) -> Vec<Epsilon> {
    let mut all: Vec<Epsilon> = epsilons.iter().copied().filter(|e| !e.is_off()).collect();
    all.push(Epsilon::Off);
    all
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_sig9).unwrap_or_default()
}

pub fn sweep(args: &SweepArgs) -> Result<()> {
    let corpus = Corpus::ingest(&args.input)?;
    let epsilons = with_off(&args.epsilons);
    let options = ClusterOptions {
        grouping: grouping(args.sequential_split),
        ..ClusterOptions::new(default_q0(args.q0, args.pooled))
    };
    create_dir(&args.out)?;
    let config = json!({
        "input": args.input,
        "out": args.out,
        "epsilons": epsilons,
        "mode": args.mode,
        "seed": args.seed,
        "k_max": args.kmax,
        "cluster": options,
        "pooled": args.pooled,
    });
    write_json(args.out.join("config.json"), &manifest("sweep", config))?;

    let views = blocks(&corpus, args.pooled);
    let mut csv = String::from("epsilon,block,ami,ari,s_mixed,noise_scale,chosen_k,clusters\n");
    let mut means = Vec::new();
    for &eps in &epsilons {
        let params = PrivacyParams::new(eps, args.seed).with_mode(args.mode);
        let mut aris = Vec::new();
        let mut amis = Vec::new();
        each_block(&views, |block| {
            let out = run_block(block, &params, args.kmax, &options)?;
            let eval = out.evaluation;
            csv.push_str(&format!(
                "{eps},{},{},{},{},{},{},{}\n",
                block.name(),
                opt(eval.map(|e| e.ami)),
                opt(eval.map(|e| e.ari)),
                fmt_sig9(out.graph.report.s_mixed),
                fmt_sig9(out.graph.report.noise_scale),
                out.graph.trace.chosen_k,
                out.run.partition.num_communities(),
            ));
            if let Some(e) = eval {
                aris.push(e.ari);
                amis.push(e.ami);
            }
            Ok(())
        })?;
        let avg = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
        info!("epsilon {eps}: mean ARI {:?}", avg(&aris));
        means.push((eps, avg(&amis), avg(&aris)));
    }
    fs::write(args.out.join("sweep.csv"), csv).context("cannot write sweep.csv")?;

    let budgeted: Vec<(f64, f64)> = means
        .iter()
        .filter_map(|&(eps, _, ari)| Some((eps.value()?, ari?)))
        .collect();
    let rho = if budgeted.len() >= 2 {
        let (x, y): (Vec<f64>, Vec<f64>) = budgeted.into_iter().unzip();
        spearman(&x, &y)?
    } else {
        None
    };
    let summary = json!({
        "mean": means
            .iter()
            .map(|(eps, ami, ari)| json!({ "epsilon": eps, "ami": ami, "ari": ari }))
            .collect::<Vec<_>>(),
        "spearman_epsilon_ari": rho,
    });
    write_json(args.out.join("summary.json"), &summary)?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

pub fn sensitivity_report(args: &ReportArgs) -> Result<()> {
    let corpus = Corpus::ingest(&args.input)?;
    let mut reports = Vec::new();
    each_block(&blocks(&corpus, args.pooled), |block| {
        for &eps in &args.epsilons {
            let params = PrivacyParams::new(eps, 0).with_mode(args.mode);
            reports.push(block_report(block, &params)?);
        }
        Ok(())
    })?;
    let config = json!({
        "input": args.input,
        "epsilons": args.epsilons,
        "mode": args.mode,
        "pooled": args.pooled,
    });
    let mut out = manifest("sensitivity-report", config);
    out["reports"] = serde_json::to_value(&reports)?;
    write_json(&args.out, &out)?;
    Ok(())
}
