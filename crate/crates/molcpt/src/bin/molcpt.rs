//! Command-line front end for the molcpt library.
//!
//! Five subcommands cover the pipeline: `vocab` builds a motif vocabulary,
//! `pretrain` trains the encoder self-supervised, `finetune` adapts prompts
//! (and optionally the encoder) to a labeled dataset, `zeroshot` evaluates
//! prompts without any fine-tuning, and `sweep` searches hyperparameters.
//! Every run is deterministic for fixed flags; `MOLCPT_THREADS` controls
//! evaluation parallelism without changing any result.

use std::error::Error;
use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use molcpt::encoder::EncoderConfig;
use molcpt::fragment::{CleavageRules, MotifVocabulary};
use molcpt::pipeline::{
    finetune_run, load_checkpoint, load_dataset, save_checkpoint, scaffold_split, sweep,
    sweep_tsv, write_metrics, zeroshot_run, Checkpoint, PromptModel, Regime, RunConfig,
    RunOutcome, SweepConfig, TaskDataset,
};
use molcpt::pretrain::{pretrain_run, AugmentKind, PretrainConfig, PretrainTask};
use molcpt::smiles::MolGraph;

#[derive(Parser)]
#[command(
    name = "molcpt",
    version,
    about = "Motif-prompted molecular property prediction"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build a motif vocabulary from a molecule CSV.
    Vocab(VocabArgs),
    /// Self-supervised encoder pretraining.
    Pretrain(PretrainArgs),
    /// Fine-tune prompts (and optionally the encoder) on labels.
    Finetune(FinetuneArgs),
    /// Evaluate prompts with no fine-tuning.
    Zeroshot(ZeroshotArgs),
    /// Hyperparameter grid search.
    Sweep(SweepArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum RulesArg {
    Simple,
    Brics16,
}

impl From<RulesArg> for CleavageRules {
    fn from(r: RulesArg) -> CleavageRules {
        match r {
            RulesArg::Simple => CleavageRules::Simple,
            RulesArg::Brics16 => CleavageRules::Brics16,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    Contrastive,
    Attrmask,
}

#[derive(clap::Args)]
struct VocabArgs {
    /// CSV with a `smiles` column; every parseable molecule counts.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value = "simple")]
    rules: RulesArg,
    /// Frequency threshold: keep motifs found in more than `t` molecules.
    #[arg(long, default_value_t = 1)]
    t: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct PretrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value = "contrastive")]
    task: TaskArg,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 5)]
    layers: usize,
    #[arg(long, default_value_t = 64)]
    dim: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct DataVocabCkpt {
    /// Labeled CSV: `smiles` column plus one column per binary task.
    #[arg(long)]
    data: PathBuf,
    /// Checkpoint supplying the pretrained encoder and head.
    #[arg(long)]
    ckpt: PathBuf,
    /// Vocabulary file from the `vocab` subcommand.
    #[arg(long)]
    vocab: PathBuf,
    /// Rule set the vocabulary was built with.
    #[arg(long, value_enum, default_value = "simple")]
    rules: RulesArg,
    /// Threshold the vocabulary was built with (metadata only).
    #[arg(long, default_value_t = 1)]
    t: usize,
    /// Where to write the per-epoch metrics TSV.
    #[arg(long)]
    metrics: Option<PathBuf>,
}

#[derive(clap::Args)]
struct FinetuneArgs {
    #[command(flatten)]
    common: DataVocabCkpt,
    #[arg(long, default_value_t = Regime::Molcpt)]
    regime: Regime,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    /// Cross-attention heads; must divide the embedding width.
    #[arg(long, default_value_t = 4)]
    heads: usize,
    /// Answer rows per label.
    #[arg(long, default_value_t = 1)]
    ensemble: usize,
    /// Orthogonality penalty weight on the answer rows.
    #[arg(long, default_value_t = 1e-5)]
    orth: f64,
    /// Answer temperature.
    #[arg(long, default_value_t = 1.0)]
    tau: f64,
    /// Comma-separated list of run seeds.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    seeds: Vec<u64>,
    /// Let the empty motif participate in attention.
    #[arg(long)]
    include_empty: bool,
    /// Add the position-wise feed-forward block after attention.
    #[arg(long)]
    ffn: bool,
    /// Keep the pretraining output head frozen even when the encoder trains.
    #[arg(long)]
    freeze_head: bool,
    /// Where to save the best fine-tuned checkpoint.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct ZeroshotArgs {
    #[command(flatten)]
    common: DataVocabCkpt,
    #[arg(long, default_value_t = 4)]
    heads: usize,
    #[arg(long, default_value_t = 1)]
    ensemble: usize,
    #[arg(long, default_value_t = 1.0)]
    tau: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    include_empty: bool,
}

#[derive(clap::Args)]
struct SweepArgs {
    #[command(flatten)]
    common: DataVocabCkpt,
    #[arg(long, default_value_t = Regime::Frozen)]
    regime: Regime,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    seeds: Vec<u64>,
    /// Vocabulary thresholds to try.
    #[arg(long, value_delimiter = ',', default_value = "0,10,20,50,100")]
    t_values: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "2,4,8")]
    head_values: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "1,2,5,10")]
    ensemble_values: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0,0.000005,0.00001,0.0001")]
    lambda_values: Vec<f64>,
    /// Maximum configurations to run; larger grids are subsampled.
    #[arg(long, default_value_t = 50)]
    budget: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Vocab(a) => cmd_vocab(a),
        Cmd::Pretrain(a) => cmd_pretrain(a),
        Cmd::Finetune(a) => cmd_finetune(a),
        Cmd::Zeroshot(a) => cmd_zeroshot(a),
        Cmd::Sweep(a) => cmd_sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

/// Loads the dataset and applies the standard 80/10/10 scaffold split.
fn load_split_dataset(path: &PathBuf) -> Result<TaskDataset, Box<dyn Error>> {
    let mut ds = load_dataset(path)?;
    ds.split = scaffold_split(&ds, (0.8, 0.1, 0.1));
    println!(
        "dataset {}: {} molecules, {} task(s), split {}/{}/{} (skipped {})",
        ds.name,
        ds.records.len(),
        ds.task_count,
        ds.split.train.len(),
        ds.split.valid.len(),
        ds.split.test.len(),
        ds.skipped
    );
    Ok(ds)
}

fn cmd_vocab(a: VocabArgs) -> Result<(), Box<dyn Error>> {
    let ds = load_dataset(&a.data)?;
    let graphs: Vec<MolGraph> = ds.all_graphs().into_iter().cloned().collect();
    let vocab = MotifVocabulary::build(&graphs, a.rules.into(), a.t);
    vocab.save(&a.out)?;
    println!(
        "vocabulary: {} motifs at threshold {} from {} molecules -> {}",
        vocab.len(),
        a.t,
        graphs.len(),
        a.out.display()
    );
    Ok(())
}

fn cmd_pretrain(a: PretrainArgs) -> Result<(), Box<dyn Error>> {
    let ds = load_dataset(&a.data)?;
    let corpus: Vec<MolGraph> = ds.all_graphs().into_iter().cloned().collect();
    let task = match a.task {
        TaskArg::Contrastive => PretrainTask::Contrastive,
        TaskArg::Attrmask => PretrainTask::AttrMask,
    };
    let cfg = PretrainConfig {
        encoder: EncoderConfig {
            layers: a.layers,
            dim: a.dim,
        },
        lr: a.lr,
        batch_size: a.batch_size,
        augment_kind: AugmentKind::NodeDrop,
        seed: a.seed,
        ..PretrainConfig::default()
    };
    let out = pretrain_run(&corpus, task, a.epochs, &cfg)?;
    for (i, loss) in out.epoch_losses.iter().enumerate() {
        println!("epoch {}/{}: loss {loss:.6}", i + 1, a.epochs);
    }

    // The vocabulary is chosen at fine-tuning time, so the checkpoint binds
    // no vocabulary and carries a placeholder prompt side.
    let placeholder = MotifVocabulary::build(&[], CleavageRules::Simple, 0);
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let model = PromptModel::new(out.params, out.head, &placeholder, 1, false, 0, &mut rng)?;
    let ck = Checkpoint::unbound(model, a.seed);
    save_checkpoint(&ck, CleavageRules::Simple, &a.out)?;
    println!("checkpoint -> {}", a.out.display());
    Ok(())
}

/// Rebuilds a fine-tunable model from a checkpoint's encoder and head.
fn assemble(
    common: &DataVocabCkpt,
    ds: &TaskDataset,
    heads: usize,
    with_ffn: bool,
    seed: u64,
) -> Result<(MotifVocabulary, PromptModel), Box<dyn Error>> {
    let vocab = MotifVocabulary::load(&common.vocab, common.rules.into(), common.t)?;
    let (ck, _) = load_checkpoint(&common.ckpt, Some(&vocab))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = PromptModel::new(
        ck.model.encoder,
        ck.model.head,
        &vocab,
        heads,
        with_ffn,
        ds.task_count,
        &mut rng,
    )?;
    Ok((vocab, model))
}

fn report(out: &RunOutcome) {
    for s in &out.per_seed {
        println!(
            "seed {}: best epoch {}, valid roc-auc {:.4}, test roc-auc {:.4}",
            s.seed, s.best_epoch, s.best_valid_auc, s.test_auc
        );
    }
    println!("test roc-auc: {:.4} ± {:.4}", out.test_mean, out.test_std);
}

fn write_metrics_file(path: &PathBuf, rows: &[molcpt::pipeline::MetricsRow]) -> Result<(), Box<dyn Error>> {
    let mut w = BufWriter::new(File::create(path)?);
    write_metrics(&mut w, rows)?;
    println!("metrics -> {}", path.display());
    Ok(())
}

fn cmd_finetune(a: FinetuneArgs) -> Result<(), Box<dyn Error>> {
    let ds = load_split_dataset(&a.common.data)?;
    let first_seed = a.seeds.first().copied().unwrap_or(0);
    let (vocab, model) = assemble(&a.common, &ds, a.heads, a.ffn, first_seed)?;
    let cfg = RunConfig {
        regime: a.regime,
        epochs: a.epochs,
        lr: a.lr,
        batch_size: a.batch_size,
        heads: a.heads,
        ensemble: a.ensemble,
        lambda_orth: a.orth,
        tau_ans: a.tau,
        seeds: a.seeds.clone(),
        include_empty: a.include_empty,
        tune_output_head: !a.freeze_head,
        with_ffn: a.ffn,
    };
    let out = finetune_run(&ds, &vocab, &model, &cfg)?;
    report(&out);
    if let Some(path) = &a.common.metrics {
        write_metrics_file(path, &out.metrics)?;
    }
    if let Some(path) = &a.out {
        let winner = out
            .per_seed
            .iter()
            .max_by(|x, y| x.best_valid_auc.total_cmp(&y.best_valid_auc))
            .map(|s| s.seed)
            .unwrap_or(first_seed);
        let ck = Checkpoint::bound(out.model, &vocab, winner);
        save_checkpoint(&ck, a.common.rules.into(), path)?;
        println!("checkpoint -> {}", path.display());
    }
    Ok(())
}

fn cmd_zeroshot(a: ZeroshotArgs) -> Result<(), Box<dyn Error>> {
    let ds = load_split_dataset(&a.common.data)?;
    let (vocab, model) = assemble(&a.common, &ds, a.heads, false, a.seed)?;
    let cfg = RunConfig {
        epochs: 0,
        heads: a.heads,
        ensemble: a.ensemble,
        tau_ans: a.tau,
        seeds: vec![a.seed],
        include_empty: a.include_empty,
        ..RunConfig::default()
    };
    let out = zeroshot_run(&ds, &vocab, &model, &cfg)?;
    report(&out);
    if let Some(path) = &a.common.metrics {
        write_metrics_file(path, &out.metrics)?;
    }
    Ok(())
}

fn cmd_sweep(a: SweepArgs) -> Result<(), Box<dyn Error>> {
    let ds = load_split_dataset(&a.common.data)?;
    // The sweep rebuilds vocabularies per threshold; the vocab file is only
    // used to sanity-check a bound checkpoint.
    let vocab = MotifVocabulary::load(&a.common.vocab, a.common.rules.into(), a.common.t)?;
    let (ck, _) = load_checkpoint(&a.common.ckpt, Some(&vocab))?;
    let base = RunConfig {
        regime: a.regime,
        epochs: a.epochs,
        lr: a.lr,
        batch_size: a.batch_size,
        seeds: a.seeds.clone(),
        ..RunConfig::default()
    };
    let sc = SweepConfig {
        t_values: a.t_values.clone(),
        head_values: a.head_values.clone(),
        ensemble_values: a.ensemble_values.clone(),
        lambda_values: a.lambda_values.clone(),
        budget: a.budget,
        seed: a.seed,
    };
    let rows = sweep(
        &ds,
        &ck.model.encoder,
        &ck.model.head,
        a.common.rules.into(),
        &base,
        &sc,
    )?;
    println!("ran {} configuration(s)", rows.len());
    if let Some(best) = rows.first() {
        println!(
            "best: t={} heads={} ensemble={} lambda={:e} valid {:.4} test {:.4}",
            best.t, best.heads, best.ensemble, best.lambda_orth, best.valid_auc, best.test_auc
        );
    }
    let tsv = sweep_tsv(&rows);
    if let Some(path) = &a.common.metrics {
        std::fs::write(path, &tsv)?;
        println!("results -> {}", path.display());
    } else {
        print!("{tsv}");
    }
    Ok(())
}
