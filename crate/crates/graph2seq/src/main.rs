//! Command-line surface over the library: graph construction,
//! training, evaluation, ablation, SWAP perturbation, robustness
//! sweeps and the gradient-check suite. All heavy lifting lives in the
//! library; this binary only parses arguments, wires files and writes
//! reports.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use graph2seq::adversarial::{perturb_example, SwapConfig};
use graph2seq::corpus::{
    attach_parses, load_constituency_file, load_dependency_file, load_parallel_corpus,
    write_corpus, Example,
};
use graph2seq::gradcheck::run_suite;
use graph2seq::graph::{build_syntactic_graph, serialize_graph, FeatureFlags};
use graph2seq::harness::{
    ablation_csv, evaluate_exact_match, predict_lines, robustness_sweep, run_ablation, sweep_csv,
    train, TrainConfig,
};
use graph2seq::model::Model;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "graph2seq", version, about = "Graph-to-sequence semantic parsing")]
struct Cli {
    /// Root directory all relative paths are resolved against.
    #[arg(long, global = true, default_value = ".")]
    workdir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
#[allow(clippy::large_enum_variant)]
enum Command {
    /// Build syntactic graphs for a corpus and emit one JSON object
    /// per line.
    Graphify(GraphifyArgs),
    /// Train a model and write the checkpoint, report and manifest.
    Train(TrainArgs),
    /// Evaluate a checkpoint with exact-match accuracy.
    Eval(EvalArgs),
    /// Train once per feature set and emit a CSV ablation table.
    Ablate(AblateArgs),
    /// Apply SWAP noise to a corpus and write the perturbed copy plus
    /// an audit manifest.
    Perturb(PerturbArgs),
    /// Robustness sweep over swapped-word counts.
    Sweep(SweepArgs),
    /// Run the finite-difference gradient suite.
    Gradcheck,
}

#[derive(Args)]
struct CorpusArgs {
    /// Tab-separated question/logical-form file.
    #[arg(long)]
    corpus: PathBuf,
    /// CoNLL-U-style dependency blocks aligned with the corpus.
    #[arg(long)]
    dep: Option<PathBuf>,
    /// Bracketed constituent trees aligned with the corpus.
    #[arg(long)]
    cons: Option<PathBuf>,
}

#[derive(Args)]
struct GraphifyArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    /// Drop word-order chain edges.
    #[arg(long)]
    no_word_order: bool,
    /// Output path for the JSON-lines graphs.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// JSON training configuration; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    dep: Option<PathBuf>,
    #[arg(long)]
    cons: Option<PathBuf>,
    #[arg(long)]
    dev_corpus: Option<PathBuf>,
    #[arg(long)]
    dev_dep: Option<PathBuf>,
    #[arg(long)]
    dev_cons: Option<PathBuf>,
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Where to write the trained model.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Where to write the run report (default `report.json`).
    #[arg(long)]
    report: Option<PathBuf>,
    /// Held-out test corpus evaluated once with the best checkpoint.
    #[arg(long)]
    test_corpus: Option<PathBuf>,
    #[arg(long)]
    test_dep: Option<PathBuf>,
    #[arg(long)]
    test_cons: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    corpus: CorpusArgs,
    /// Evaluate on paraphrased questions (one per line, aligned 1:1
    /// with the corpus) while keeping the original logical forms. Any
    /// --dep/--cons files are treated as parses of the paraphrases.
    #[arg(long)]
    paraphrases: Option<PathBuf>,
    /// Override the checkpoint's beam width.
    #[arg(long)]
    beam: Option<usize>,
    /// Write decoded token lines aligned with the corpus.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated feature sets: all, no-word-order,
    /// no-dependency, no-constituency, word-order-only.
    #[arg(long, default_value = "all,no-word-order,no-dependency,no-constituency,word-order-only")]
    feature_sets: String,
    /// Output CSV path.
    #[arg(long, default_value = "ablation.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct PerturbArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Number of words to swap per question (1..=5 unless --any-m).
    #[arg(long)]
    m: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Allow m outside the standard 1..=5 sweep range.
    #[arg(long)]
    any_m: bool,
    /// Perturbed corpus output path.
    #[arg(long)]
    out: PathBuf,
    /// Audit manifest path (default: `<out>.manifest.json`).
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    corpus: CorpusArgs,
    /// Comma-separated swapped-word counts.
    #[arg(long, default_value = "0,1,2,3,4,5")]
    m_values: String,
    #[arg(long, default_value_t = 3)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV path.
    #[arg(long, default_value = "sweep.csv")]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let workdir = cli.workdir;
    match cli.command {
        Command::Graphify(args) => graphify(&workdir, args),
        Command::Train(args) => train_cmd(&workdir, args),
        Command::Eval(args) => eval_cmd(&workdir, args),
        Command::Ablate(args) => ablate_cmd(&workdir, args),
        Command::Perturb(args) => perturb_cmd(&workdir, args),
        Command::Sweep(args) => sweep_cmd(&workdir, args),
        Command::Gradcheck => gradcheck_cmd(&workdir),
    }
}

fn resolve(workdir: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        workdir.join(path)
    }
}

/// Load a corpus and attach whichever parse side files were given.
fn load_examples(workdir: &Path, args: &CorpusArgs) -> Result<Vec<Example>> {
    let mut examples = load_parallel_corpus(&resolve(workdir, &args.corpus))?;
    let deps = args
        .dep
        .as_ref()
        .map(|p| load_dependency_file(&resolve(workdir, p)))
        .transpose()?;
    let cons = args
        .cons
        .as_ref()
        .map(|p| load_constituency_file(&resolve(workdir, p)))
        .transpose()?;
    attach_parses(&mut examples, deps, cons)?;
    Ok(examples)
}

#[derive(Serialize)]
struct Manifest<'a, C: Serialize> {
    command: &'a str,
    version: String,
    seed: u64,
    config: C,
}

fn write_manifest<C: Serialize>(workdir: &Path, command: &str, seed: u64, config: C) -> Result<()> {
    let manifest = Manifest {
        command,
        version: format!("graph2seq-{}", env!("CARGO_PKG_VERSION")),
        seed,
        config,
    };
    let path = workdir.join(format!("{command}_manifest.json"));
    fs::write(&path, serde_json::to_string_pretty(&manifest)?)
        .with_context(|| format!("writing manifest {}", path.display()))?;
    Ok(())
}

fn graphify(workdir: &Path, args: GraphifyArgs) -> Result<ExitCode> {
    let examples = load_examples(workdir, &args.corpus)?;
    let flags = FeatureFlags {
        word_order: !args.no_word_order,
        dependency: args.corpus.dep.is_some(),
        constituency: args.corpus.cons.is_some(),
    };
    let mut out = String::new();
    for ex in &examples {
        let g = build_syntactic_graph(ex, flags)?;
        out.push_str(&serialize_graph(&g));
        out.push('\n');
    }
    let out_path = resolve(workdir, &args.out);
    fs::write(&out_path, out).with_context(|| format!("writing {}", out_path.display()))?;
    write_manifest(workdir, "graphify", 0, flags)?;
    println!("wrote {} graphs to {}", examples.len(), out_path.display());
    Ok(ExitCode::SUCCESS)
}

fn load_train_config(workdir: &Path, path: Option<&PathBuf>) -> Result<TrainConfig> {
    match path {
        None => Ok(TrainConfig::default()),
        Some(p) => {
            let full = resolve(workdir, p);
            let text =
                fs::read_to_string(&full).with_context(|| format!("reading {}", full.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", full.display()))
        }
    }
}

fn train_cmd(workdir: &Path, args: TrainArgs) -> Result<ExitCode> {
    let mut cfg = load_train_config(workdir, args.config.as_ref())?;
    // Flag overrides beat the config file.
    macro_rules! override_path {
        ($($field:ident),*) => {
            $(if let Some(v) = args.$field { cfg.$field = Some(v); })*
        };
    }
    override_path!(corpus, dep, cons, dev_corpus, dev_dep, dev_cons, embeddings, checkpoint);
    if let Some(v) = args.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.lr {
        cfg.lr = v;
    }
    if let Some(v) = args.batch {
        cfg.batch = v;
    }

    let corpus = cfg
        .corpus
        .clone()
        .context("no training corpus given (config `corpus` or --corpus)")?;
    let dev_corpus = cfg
        .dev_corpus
        .clone()
        .context("no dev corpus given (config `dev_corpus` or --dev-corpus)")?;
    let train_set = load_examples(
        workdir,
        &CorpusArgs {
            corpus,
            dep: cfg.dep.clone(),
            cons: cfg.cons.clone(),
        },
    )?;
    let dev_set = load_examples(
        workdir,
        &CorpusArgs {
            corpus: dev_corpus,
            dep: cfg.dev_dep.clone(),
            cons: cfg.dev_cons.clone(),
        },
    )?;
    // Resolve the embeddings path now; `train` reads it directly.
    if let Some(p) = &cfg.embeddings {
        cfg.embeddings = Some(resolve(workdir, p));
    }

    write_manifest(workdir, "train", cfg.seed, &cfg)?;
    let (model, mut report) = train(&cfg, &train_set, &dev_set)?;

    if let Some(test_corpus) = args.test_corpus {
        let test_set = load_examples(
            workdir,
            &CorpusArgs {
                corpus: test_corpus,
                dep: args.test_dep,
                cons: args.test_cons,
            },
        )?;
        report.final_test_accuracy = Some(evaluate_exact_match(&model, &test_set)?);
    }

    let ckpt = resolve(workdir, cfg.checkpoint.as_deref().unwrap_or(Path::new("model.json")));
    model.save(&ckpt)?;
    let report_path = resolve(workdir, args.report.as_deref().unwrap_or(Path::new("report.json")));
    fs::write(&report_path, serde_json::to_string_pretty(&report)?)
        .with_context(|| format!("writing {}", report_path.display()))?;
    println!(
        "best dev accuracy {:.4} at epoch {} ({} epochs run, {:.1}s); checkpoint: {}",
        report.best_dev_accuracy,
        report.best_epoch,
        report.epochs.len(),
        report.wall_time_secs,
        ckpt.display()
    );
    if let Some(acc) = report.final_test_accuracy {
        println!("test exact_match_accuracy {acc}");
    }
    Ok(ExitCode::SUCCESS)
}

fn eval_cmd(workdir: &Path, args: EvalArgs) -> Result<ExitCode> {
    let mut model = Model::load(&resolve(workdir, &args.checkpoint))?;
    if let Some(beam) = args.beam {
        model.config.decoder.beam = beam;
    }
    let dataset = match &args.paraphrases {
        None => load_examples(workdir, &args.corpus)?,
        Some(para) => {
            // Original corpus supplies the gold logical forms; the
            // paraphrase file supplies the questions; parse side files
            // describe the paraphrased sentences.
            let originals = load_parallel_corpus(&resolve(workdir, &args.corpus.corpus))?;
            let mut examples =
                graph2seq::adversarial::load_paraphrase_set(&resolve(workdir, para), &originals)?;
            let deps = args
                .corpus
                .dep
                .as_ref()
                .map(|p| load_dependency_file(&resolve(workdir, p)))
                .transpose()?;
            let cons = args
                .corpus
                .cons
                .as_ref()
                .map(|p| load_constituency_file(&resolve(workdir, p)))
                .transpose()?;
            attach_parses(&mut examples, deps, cons)?;
            examples
        }
    };
    let accuracy = evaluate_exact_match(&model, &dataset)?;
    if let Some(out) = &args.out {
        let lines = predict_lines(&model, &dataset)?;
        let out_path = resolve(workdir, out);
        fs::write(&out_path, lines.join("\n") + "\n")
            .with_context(|| format!("writing {}", out_path.display()))?;
    }
    write_manifest(workdir, "eval", 0, model.config)?;
    println!("exact_match_accuracy {accuracy}");
    Ok(ExitCode::SUCCESS)
}

fn parse_feature_sets(list: &str) -> Result<Vec<FeatureFlags>> {
    list.split(',')
        .map(|name| match name.trim() {
            "all" => Ok(FeatureFlags::all()),
            "no-word-order" => Ok(FeatureFlags {
                word_order: false,
                ..FeatureFlags::all()
            }),
            "no-dependency" => Ok(FeatureFlags {
                dependency: false,
                ..FeatureFlags::all()
            }),
            "no-constituency" => Ok(FeatureFlags {
                constituency: false,
                ..FeatureFlags::all()
            }),
            "word-order-only" => Ok(FeatureFlags::word_order_only()),
            other => bail!("unknown feature set `{other}`"),
        })
        .collect()
}

fn ablate_cmd(workdir: &Path, args: AblateArgs) -> Result<ExitCode> {
    let cfg = load_train_config(workdir, args.config.as_ref())?;
    let feature_sets = parse_feature_sets(&args.feature_sets)?;
    let corpus = cfg.corpus.clone().context("config must set `corpus`")?;
    let dev_corpus = cfg.dev_corpus.clone().context("config must set `dev_corpus`")?;
    let train_set = load_examples(
        workdir,
        &CorpusArgs {
            corpus,
            dep: cfg.dep.clone(),
            cons: cfg.cons.clone(),
        },
    )?;
    let dev_set = load_examples(
        workdir,
        &CorpusArgs {
            corpus: dev_corpus,
            dep: cfg.dev_dep.clone(),
            cons: cfg.dev_cons.clone(),
        },
    )?;
    write_manifest(workdir, "ablate", cfg.seed, &cfg)?;
    let rows = run_ablation(&cfg, &feature_sets, &train_set, &dev_set)?;
    let csv = ablation_csv(&rows);
    let out_path = resolve(workdir, &args.out);
    fs::write(&out_path, &csv).with_context(|| format!("writing {}", out_path.display()))?;
    print!("{csv}");
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct PerturbRecord {
    line: usize,
    token_index: usize,
    char_pos: usize,
}

#[derive(Serialize)]
struct PerturbManifest {
    m: usize,
    seed: u64,
    swaps: Vec<PerturbRecord>,
    shortfalls: usize,
}

fn perturb_cmd(workdir: &Path, args: PerturbArgs) -> Result<ExitCode> {
    let cfg = if args.any_m {
        SwapConfig::unrestricted(args.m, args.seed)
    } else {
        SwapConfig::new(args.m, args.seed)?
    };
    let examples = load_parallel_corpus(&resolve(workdir, &args.corpus))?;
    let mut perturbed = Vec::with_capacity(examples.len());
    let mut swaps = Vec::new();
    let mut shortfalls = 0usize;
    for (index, ex) in examples.iter().enumerate() {
        // Per-example seeds derive from the base seed and line index
        // so parallel regeneration stays reproducible.
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ index as u64);
        let (out, outcome) = perturb_example(ex, &cfg, &mut rng);
        for s in &outcome.swaps {
            swaps.push(PerturbRecord {
                line: index + 1,
                token_index: s.token_index,
                char_pos: s.char_pos,
            });
        }
        shortfalls += outcome.shortfall;
        perturbed.push(out);
    }
    let out_path = resolve(workdir, &args.out);
    fs::write(&out_path, write_corpus(&perturbed))
        .with_context(|| format!("writing {}", out_path.display()))?;
    let manifest_path = args
        .manifest
        .map(|p| resolve(workdir, &p))
        .unwrap_or_else(|| out_path.with_extension("manifest.json"));
    let manifest = PerturbManifest {
        m: args.m,
        seed: args.seed,
        swaps,
        shortfalls,
    };
    fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)?)
        .with_context(|| format!("writing {}", manifest_path.display()))?;
    write_manifest(workdir, "perturb", args.seed, args.m)?;
    println!(
        "perturbed {} questions -> {} (audit: {})",
        perturbed.len(),
        out_path.display(),
        manifest_path.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn sweep_cmd(workdir: &Path, args: SweepArgs) -> Result<ExitCode> {
    let model = Model::load(&resolve(workdir, &args.checkpoint))?;
    let dataset = load_examples(workdir, &args.corpus)?;
    let m_values: Vec<usize> = args
        .m_values
        .split(',')
        .map(|v| v.trim().parse().context("m values must be integers"))
        .collect::<Result<_>>()?;
    let report = robustness_sweep(&model, &dataset, &m_values, args.trials, args.seed)?;
    let csv = sweep_csv(&report);
    let out_path = resolve(workdir, &args.out);
    fs::write(&out_path, &csv).with_context(|| format!("writing {}", out_path.display()))?;
    write_manifest(workdir, "sweep", args.seed, &report)?;
    print!("{csv}");
    Ok(ExitCode::SUCCESS)
}

fn gradcheck_cmd(workdir: &Path) -> Result<ExitCode> {
    let results = run_suite();
    let mut all_passed = true;
    for r in &results {
        let status = if r.passed() { "PASS" } else { "FAIL" };
        println!(
            "[{status}] {:<42} max rel err {:.3e} (tol {:.0e})",
            r.name, r.max_rel_err, r.tolerance
        );
        all_passed &= r.passed();
    }
    write_manifest(
        workdir,
        "gradcheck",
        0,
        results.iter().map(|r| r.max_rel_err).collect::<Vec<_>>(),
    )?;
    Ok(if all_passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}
