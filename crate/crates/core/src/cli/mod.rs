//! The `covnet` command line: gen-data, train, eval, search, project.

mod config;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::data::{self, dataset_hash, load_csv, load_idx, save_csv, split, Standardizer};
use crate::mapping::LabeledDataset;
use crate::error::{Error, Result};
use crate::eval::{
    embed_dataset, load_embeddings_csv, pca_project, save_embeddings_csv, save_projection_csv, topk_search,
    CorrelationMode, EmbeddingTable, EvalReport, Query,
};
use crate::model::{SiameseMode, VariantName};
use crate::training::{load_checkpoint, save_checkpoint, train_with, Checkpoint};

pub use config::{EvalConfig, InputConfig, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "covnet", version, about = "Covariance-merged metric learning on tabular data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic blob dataset.
    GenData(GenDataArgs),
    /// Split, standardize and train a model variant.
    Train(TrainArgs),
    /// k-NN accuracy and class correlation of a trained model.
    Eval(EvalArgs),
    /// Rank the stored samples most similar to a query.
    Search(SearchArgs),
    /// Export a 2-D PCA projection of the embeddings.
    Project(ProjectArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// Config document; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "covnet-data")]
    pub out: PathBuf,
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub per_class: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub spread: Option<f64>,
    #[arg(long)]
    pub center_scale: Option<f64>,
    /// Superclass of each class, e.g. `0,0,1,1`; makes the data hierarchical.
    #[arg(long, value_delimiter = ',')]
    pub superclasses: Option<Vec<usize>>,
    #[arg(long)]
    pub super_ratio: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Labelled CSV with header `label,f0,...`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, requires = "idx_labels")]
    pub idx_images: Option<PathBuf>,
    #[arg(long, requires = "idx_images")]
    pub idx_labels: Option<PathBuf>,
    #[arg(long, default_value = "covnet-run")]
    pub out: PathBuf,
    /// One of covnet-v1, covnet-v2, covnet-v3, siamese, triplet, npair.
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub margin: Option<f64>,
    /// sigmoid-head or contrastive.
    #[arg(long)]
    pub siamese_mode: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    #[arg(long)]
    pub embedding_dim: Option<usize>,
    #[arg(long)]
    pub batch_norm: Option<bool>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub resample_per_epoch: Option<bool>,
    #[arg(long)]
    pub standardize: Option<bool>,
    #[arg(long)]
    pub train_frac: Option<f64>,
    #[arg(long)]
    pub val_frac: Option<f64>,
    #[arg(long)]
    pub test_frac: Option<f64>,
    #[arg(long)]
    pub split_seed: Option<u64>,
    /// Suppress per-epoch log lines.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "covnet-eval")]
    pub out: PathBuf,
    #[arg(long, value_delimiter = ',')]
    pub ks: Option<Vec<usize>>,
    /// centroid or sample.
    #[arg(long)]
    pub correlation: Option<String>,
}

/// Where embeddings come from: an export, or a checkpoint applied to a dataset.
#[derive(Debug, Args)]
pub struct TableSource {
    #[arg(long, conflicts_with_all = ["checkpoint", "data"])]
    pub embeddings: Option<PathBuf>,
    #[arg(long, requires = "data")]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, requires = "checkpoint")]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[command(flatten)]
    pub source: TableSource,
    #[arg(long, conflicts_with = "query_vector")]
    pub query_id: Option<u64>,
    /// Comma-separated embedding vector.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub query_vector: Option<Vec<f64>>,
    /// External label of a vector query, used for the relevance flag.
    #[arg(long, allow_hyphen_values = true)]
    pub query_label: Option<i64>,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    /// Write the ranking here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ProjectArgs {
    #[command(flatten)]
    pub source: TableSource,
    #[arg(long)]
    pub out: PathBuf,
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

pub fn cmd_gen_data(args: &GenDataArgs) -> Result<()> {
    let mut cfg = RunConfig::load_or_default(args.config.as_deref())?;
    let spec = &mut cfg.data;
    set(&mut spec.classes, args.classes);
    set(&mut spec.per_class, args.per_class);
    set(&mut spec.dim, args.dim);
    set(&mut spec.spread, args.spread);
    set(&mut spec.center_scale, args.center_scale);
    set(&mut spec.super_ratio, args.super_ratio);
    set(&mut spec.seed, args.seed);
    if args.superclasses.is_some() {
        spec.superclass_map = args.superclasses.clone();
    }
    let ds = data::generate(spec)?;
    ensure_dir(&args.out)?;
    save_csv(&ds, args.out.join("data.csv"))?;

    #[derive(serde::Serialize)]
    struct Manifest<'a> {
        rows: usize,
        dataset_hash: String,
        spec: &'a data::BlobSpec,
    }
    let manifest = Manifest {
        rows: ds.len(),
        dataset_hash: dataset_hash(&ds),
        spec,
    };
    write_file(
        &args.out.join("manifest.toml"),
        &toml::to_string(&manifest).expect("manifest serializes"),
    )?;
    println!("wrote {} rows to {}", ds.len(), args.out.join("data.csv").display());
    Ok(())
}

/// Apply train flags over the config document.
pub fn resolve_train(args: &TrainArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::load_or_default(args.config.as_deref())?;
    if args.data.is_some() {
        cfg.input = InputConfig {
            data: args.data.clone(),
            ..InputConfig::default()
        };
    }
    if args.idx_images.is_some() {
        cfg.input = InputConfig {
            data: None,
            idx_images: args.idx_images.clone(),
            idx_labels: args.idx_labels.clone(),
        };
    }
    let t = &mut cfg.train;
    if let Some(v) = &args.variant {
        t.variant = v.parse::<VariantName>()?;
    }
    if let Some(m) = &args.siamese_mode {
        t.siamese_mode = m.parse::<SiameseMode>()?;
    }
    set(&mut t.epochs, args.epochs);
    set(&mut t.batch_size, args.batch_size);
    set(&mut t.lr, args.lr);
    set(&mut t.seed, args.seed);
    set(&mut t.patience, args.patience);
    set(&mut t.resample_per_epoch, args.resample_per_epoch);
    if args.margin.is_some() {
        t.margin = args.margin;
    }
    set(&mut t.network.hidden, args.hidden.clone());
    set(&mut t.network.embedding_dim, args.embedding_dim);
    set(&mut t.network.batch_norm, args.batch_norm);
    set(&mut t.network.dropout, args.dropout);
    set(&mut cfg.standardize, args.standardize);
    set(&mut cfg.split.train, args.train_frac);
    set(&mut cfg.split.val, args.val_frac);
    set(&mut cfg.split.test, args.test_frac);
    set(&mut cfg.split.seed, args.split_seed);
    cfg.train.validate()?;
    cfg.split.validate()?;
    Ok(cfg)
}

fn load_input(input: &InputConfig) -> Result<LabeledDataset> {
    match (&input.data, &input.idx_images, &input.idx_labels) {
        (Some(p), None, None) => load_csv(p),
        (None, Some(i), Some(l)) => load_idx(i, l),
        _ => Err(Error::Usage(
            "give either --data or both --idx-images and --idx-labels".into(),
        )),
    }
}

pub fn cmd_train(args: &TrainArgs) -> Result<()> {
    let cfg = resolve_train(args)?;
    let ds = load_input(&cfg.input)?;
    let (tr, va, te) = split(&ds, &cfg.split)?;
    let (tr_n, va_n, standardizer) = if cfg.standardize {
        let s = Standardizer::fit(&tr)?;
        (s.apply(&tr)?, s.apply(&va)?, Some(s))
    } else {
        (tr.clone(), va.clone(), None)
    };
    let quiet = args.quiet;
    let (model, history) = train_with(&tr_n, &va_n, &cfg.train, |r| {
        if !quiet {
            println!(
                "epoch {:>4}  train {:.6}  val {:.6}",
                r.epoch, r.train_loss, r.val_loss
            );
        }
    })?;

    ensure_dir(&args.out)?;
    let ck = Checkpoint::new(&model, &cfg.train, history.best_epoch, standardizer);
    save_checkpoint(&ck, args.out.join("checkpoint.json"))?;
    write_file(&args.out.join("history.jsonl"), &history.to_jsonl())?;
    write_file(&args.out.join("resolved_config.toml"), &cfg.to_toml())?;
    save_csv(&tr, args.out.join("train.csv"))?;
    save_csv(&va, args.out.join("val.csv"))?;
    save_csv(&te, args.out.join("test.csv"))?;
    println!(
        "best epoch {} (val loss {:.6}); wrote {}",
        history.best_epoch,
        history.best_val_loss,
        args.out.join("checkpoint.json").display()
    );
    Ok(())
}

/// Embed `data` with a checkpoint, applying its stored feature standardization.
fn table_from_checkpoint(ck: &Checkpoint, data: &Path) -> Result<EmbeddingTable> {
    let ds = load_csv(data)?;
    let ds = match &ck.standardizer {
        Some(s) => s.apply(&ds)?,
        None => ds,
    };
    embed_dataset(&ck.model()?, &ds)
}

pub fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let mut cfg = RunConfig::load_or_default(args.config.as_deref())?;
    set(&mut cfg.eval.ks, args.ks.clone());
    if let Some(c) = &args.correlation {
        cfg.eval.correlation = c.parse::<CorrelationMode>()?;
    }
    if cfg.eval.ks.is_empty() {
        return Err(Error::Usage("--ks needs at least one value".into()));
    }
    let ck = load_checkpoint(&args.checkpoint)?;
    let raw = load_csv(&args.data)?;
    let table = table_from_checkpoint(&ck, &args.data)?;
    let report = EvalReport::build(
        &table,
        &cfg.eval.ks,
        cfg.eval.correlation,
        ck.variant.name.as_str(),
        ck.seed,
        dataset_hash(&raw),
    )?;
    ensure_dir(&args.out)?;
    write_file(&args.out.join("report.json"), &report.to_json())?;
    save_embeddings_csv(&table, args.out.join("embeddings.csv"))?;
    cfg.input = InputConfig {
        data: Some(args.data.clone()),
        ..InputConfig::default()
    };
    write_file(&args.out.join("resolved_config.toml"), &cfg.to_toml())?;
    for (k, a) in report.ks.iter().zip(&report.accuracies) {
        println!("k={k:<4} accuracy {a:.4}");
    }
    Ok(())
}

fn load_table(source: &TableSource) -> Result<EmbeddingTable> {
    match (&source.embeddings, &source.checkpoint, &source.data) {
        (Some(e), None, None) => load_embeddings_csv(e),
        (None, Some(c), Some(d)) => table_from_checkpoint(&load_checkpoint(c)?, d),
        _ => Err(Error::Usage(
            "give either --embeddings or both --checkpoint and --data".into(),
        )),
    }
}

pub fn cmd_search(args: &SearchArgs) -> Result<()> {
    if args.k == 0 {
        return Err(Error::Usage("--k must be >= 1".into()));
    }
    let table = load_table(&args.source)?;
    let query = match (&args.query_id, &args.query_vector) {
        (Some(id), None) => Query::Id(*id),
        (None, Some(z)) => Query::Vector {
            z: z.clone(),
            label: match args.query_label {
                Some(l) => Some(
                    table
                        .label_names()
                        .iter()
                        .position(|&n| n == l)
                        .ok_or_else(|| Error::Usage(format!("unknown query label {l}")))?,
                ),
                None => None,
            },
        },
        _ => return Err(Error::Usage("give exactly one of --query-id or --query-vector".into())),
    };
    let hits = topk_search(&table, &query, args.k)?;
    let mut text = String::from("rank,id,label,similarity,relevant\n");
    for (r, h) in hits.iter().enumerate() {
        let rel = h.relevant.map_or(String::new(), |b| b.to_string());
        text.push_str(&format!("{},{},{},{},{}\n", r + 1, h.id, h.label, h.similarity, rel));
    }
    match &args.out {
        Some(p) => write_file(p, &text),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Error::io("<stdout>", e)),
    }
}

pub fn cmd_project(args: &ProjectArgs) -> Result<()> {
    let table = load_table(&args.source)?;
    let coords = pca_project(&table, 2)?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        ensure_dir(dir)?;
    }
    save_projection_csv(&table, &coords, &args.out)?;
    println!("wrote {} rows to {}", table.len(), args.out.display());
    Ok(())
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::GenData(a) => cmd_gen_data(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Search(a) => cmd_search(a),
        Command::Project(a) => cmd_project(a),
    }
}

/// Process exit status for an error: 2 for usage problems, 1 otherwise.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Usage(_) => 2,
        _ => 1,
    }
}
