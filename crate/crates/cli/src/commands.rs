use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use uda_core::autodiff::{grad_check_many, primitive_suite, Tape, CheckResult};
use uda_core::data::{next_batch, write_csv, BatchRng};
use uda_core::losses::{ce_loss, Predictions};
use uda_core::model::{classify, extract, init_params, BoundMlp, Checkpoint};
use uda_core::train::{ablate, derived_seeds, evaluate, train_on, write_ablation_csv, write_embeddings_csv, Evaluation, MetricsWriter, RunHeader, TrainConfig};
use uda_core::{Error, Result};

use crate::resolve::{resolve_config, snapshot};
use crate::{Cli, Command, ConfigArgs};

/// Largest relative error `gradcheck` accepts.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

pub const SNAPSHOT_FILE: &str = "config.toml";

/// Runs one subcommand, printing a short report to `log`.
pub fn run(cli: &Cli, log: &mut impl Write) -> Result<()> {
    match &cli.command {
        Command::Train(args) => train(args, log),
        Command::Evaluate { args, checkpoint } => evaluate_checkpoint(args, checkpoint, log),
        Command::Ablate(args) => ablation(args, log),
        Command::Gradcheck { args, seed, eps } => gradcheck(args, *seed, *eps, log),
        Command::GenData(args) => gen_data(args, log),
        Command::ExportEmbeddings { args, checkpoint } => export_embeddings(args, checkpoint, log),
    }
}

/// Resolves the config, creates the output directory and writes the snapshot.
fn prepare(args: &ConfigArgs) -> Result<(TrainConfig, RunHeader)> {
    let config = resolve_config(args.config.as_deref(), &args.overrides)?;
    fs::create_dir_all(&args.out)?;
    fs::write(args.out.join(SNAPSHOT_FILE), snapshot(&config)?)?;
    let header = RunHeader {
        seed: config.seed,
        config_hash: config.content_hash(),
    };
    Ok((config, header))
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn train(args: &ConfigArgs, log: &mut impl Write) -> Result<()> {
    let (config, header) = prepare(args)?;
    let (source, target) = config.data.load(config.seed)?;
    let mut metrics = MetricsWriter::new(create(&args.out, "metrics.jsonl")?, &header)?;
    let out = train_on(&config, &source, &target, |r| metrics.write(r))?;
    out.checkpoint.save(&args.out.join("checkpoint.json"))?;
    if let Some(last) = out.metrics.last() {
        writeln!(
            log,
            "epoch {}: source acc {:.4}, target acc {:.4}, loss {:.6}",
            last.epoch, last.source_acc, last.target_acc, last.loss.total
        )?;
    }
    writeln!(log, "wrote {}", args.out.display())?;
    Ok(())
}

#[derive(Serialize)]
struct EvaluationReport {
    seed: u64,
    config_hash: String,
    checkpoint_config_hash: String,
    source: Evaluation,
    target: Evaluation,
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::load(path).map_err(|e| match e {
        Error::Io(io) => Error::Data(format!("cannot read checkpoint {}: {io}", path.display())),
        other => other,
    })
}

fn evaluate_checkpoint(args: &ConfigArgs, checkpoint: &Path, log: &mut impl Write) -> Result<()> {
    let (config, header) = prepare(args)?;
    let ck = load_checkpoint(checkpoint)?;
    let (source, target) = config.data.load(config.seed)?;
    let report = EvaluationReport {
        seed: header.seed,
        config_hash: header.config_hash,
        checkpoint_config_hash: ck.config_hash.clone(),
        source: evaluate(&ck.extractor, &ck.classifier, &source)?,
        target: evaluate(&ck.extractor, &ck.classifier, &target)?,
    };
    let mut w = create(&args.out, "evaluation.json")?;
    serde_json::to_writer_pretty(&mut w, &report)?;
    writeln!(w)?;
    w.flush()?;
    writeln!(
        log,
        "source acc {:.4}, target acc {:.4}",
        report.source.accuracy, report.target.accuracy
    )?;
    Ok(())
}

fn ablation(args: &ConfigArgs, log: &mut impl Write) -> Result<()> {
    let (config, header) = prepare(args)?;
    let (source, target) = config.data.load(config.seed)?;
    let rows = ablate(&config, &source, &target)?;
    let mut w = create(&args.out, "ablation.csv")?;
    write_ablation_csv(&mut w, &header, &rows)?;
    w.flush()?;
    writeln!(log, "{:<12} {:>10} {:>10}", "variant", "source", "target")?;
    for r in &rows {
        writeln!(
            log,
            "{:<12} {:>10.4} {:>10.4}",
            r.variant, r.metrics.source_acc, r.metrics.target_acc
        )?;
    }
    Ok(())
}

/// Cross-entropy through the configured extractor and classifier at their
/// initial weights, on one source batch.
fn model_check(config: &TrainConfig, eps: f64) -> Result<CheckResult> {
    let (source, target) = config.data.load(config.seed)?;
    let (g_spec, c_spec) = config.model.specs(source.dim(), source.num_classes())?;
    let (g_seed, c_seed, batch_seed) = derived_seeds(config.seed);
    let (g, c) = (init_params(&g_spec, g_seed), init_params(&c_spec, c_seed));
    let bs = config.schedule.batch_size.min(source.len()).min(target.len()).min(16);
    let (batch, _, _) = next_batch(&source, target.unlabeled(), bs, BatchRng::new(batch_seed))?;
    let n_g = g.tensors().count();
    let inputs: Vec<_> = g.tensors().chain(c.tensors()).cloned().collect();
    let err = grad_check_many(
        |tape: &Tape, vars| {
            let gb = BoundMlp::from_vars(&g_spec, &vars[..n_g])?;
            let cb = BoundMlp::from_vars(&c_spec, &vars[n_g..])?;
            let f = extract(&gb, tape.constant(batch.features.clone()))?;
            let p: Predictions<'_> = classify(&cb, f, None)?;
            ce_loss(p, &batch.labels)
        },
        &inputs,
        eps,
    )?;
    Ok(CheckResult {
        name: "model_cross_entropy",
        max_rel_error: err,
    })
}

fn gradcheck(args: &ConfigArgs, seed: u64, eps: f64, log: &mut impl Write) -> Result<()> {
    let (config, _) = prepare(args)?;
    let mut results = primitive_suite(seed, eps)?;
    results.push(model_check(&config, eps)?);
    let mut worst: Option<&CheckResult> = None;
    for r in &results {
        writeln!(log, "{:<20} {:.3e}", r.name, r.max_rel_error)?;
        if worst.is_none_or(|w| r.max_rel_error > w.max_rel_error) {
            worst = Some(r);
        }
    }
    match worst {
        Some(w) if !(w.max_rel_error < GRADCHECK_TOLERANCE) => Err(Error::Contract(format!(
            "gradient check failed: {} has relative error {:.3e} >= {GRADCHECK_TOLERANCE:e}",
            w.name, w.max_rel_error
        ))),
        _ => Ok(()),
    }
}

fn gen_data(args: &ConfigArgs, log: &mut impl Write) -> Result<()> {
    let (config, header) = prepare(args)?;
    let (source, target) = config.data.load(config.seed)?;
    let mut w = create(&args.out, "data.csv")?;
    write_csv(&mut w, &source, &target, &[header.comment()])?;
    w.flush()?;
    writeln!(log, "wrote {} source and {} target rows", source.len(), target.len())?;
    Ok(())
}

fn export_embeddings(args: &ConfigArgs, checkpoint: &Path, log: &mut impl Write) -> Result<()> {
    let (config, header) = prepare(args)?;
    let ck = load_checkpoint(checkpoint)?;
    let (source, target) = config.data.load(config.seed)?;
    let mut w = create(&args.out, "embeddings.csv")?;
    write_embeddings_csv(&mut w, &header, &ck.extractor, &ck.classifier, &[&source, &target])?;
    w.flush()?;
    writeln!(log, "wrote {} rows", source.len() + target.len())?;
    Ok(())
}
