//! End-to-end harness: mini-batch training with best-dev
//! checkpointing, exact-match evaluation, the feature-ablation runner
//! and the SWAP-noise robustness sweep.

use crate::adversarial::{perturb_example, SwapConfig};
use crate::corpus::{build_vocab, load_pretrained_embeddings, CorpusError, Example};
use crate::decoder::DecoderConfig;
use crate::encoder::{EncoderConfig, Pooling};
use crate::graph::{build_syntactic_graph, FeatureFlags, GraphError, SyntacticGraph};
use crate::model::{example_loss_on_tape, BoundModel, Model, ModelConfig, ModelError};
use crate::tensor::{Adam, DropoutMode, Tape, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Adversarial(#[from] crate::adversarial::AdversarialError),
    #[error("training diverged: non-finite loss at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },
    #[error("{0} dataset is empty")]
    EmptyDataset(&'static str),
}

/// Full training configuration; defaults follow the reference recipe
/// (Adam at lr 0.001, batch 30, dropout 0.5, K = 10, 300-wide
/// embeddings and hidden states, beam 3). Serializes flat for config
/// files and run manifests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch: usize,
    pub dropout: f64,
    pub k_hops: usize,
    pub embed_dim: usize,
    pub hidden: usize,
    pub beam: usize,
    pub max_len: usize,
    pub layers: usize,
    pub pooling: Pooling,
    pub epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub min_freq: usize,
    #[serde(flatten)]
    pub flags: FeatureFlags,
    // Paths are resolved by the CLI relative to --workdir; only the
    // embeddings path is consumed inside `train` itself.
    pub corpus: Option<PathBuf>,
    pub dep: Option<PathBuf>,
    pub cons: Option<PathBuf>,
    pub dev_corpus: Option<PathBuf>,
    pub dev_dep: Option<PathBuf>,
    pub dev_cons: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.001,
            batch: 30,
            dropout: 0.5,
            k_hops: 10,
            embed_dim: 300,
            hidden: 300,
            beam: 3,
            max_len: 150,
            layers: 1,
            pooling: Pooling::Max,
            epochs: 100,
            patience: 15,
            seed: 0,
            min_freq: 1,
            flags: FeatureFlags::all(),
            corpus: None,
            dep: None,
            cons: None,
            dev_corpus: None,
            dev_dep: None,
            dev_cons: None,
            embeddings: None,
            checkpoint: None,
        }
    }
}

impl TrainConfig {
    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            encoder: EncoderConfig {
                k_hops: self.k_hops,
                embed_dim: self.embed_dim,
                hidden: self.hidden,
                pooling: self.pooling,
            },
            decoder: DecoderConfig {
                hidden: self.hidden,
                embed_dim: self.embed_dim,
                layers: self.layers,
                beam: self.beam,
                max_len: self.max_len,
                dropout: self.dropout,
            },
            flags: self.flags,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_accuracy: f64,
}

/// Per-run report. Wall time is informational and excluded from the
/// serialized form so reports stay byte-identical across reruns of the
/// same seed/config/data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub epochs: Vec<EpochReport>,
    pub best_dev_accuracy: f64,
    pub best_epoch: usize,
    pub final_test_accuracy: Option<f64>,
    pub config: TrainConfig,
    #[serde(skip, default)]
    pub wall_time_secs: f64,
}

fn build_graphs(
    examples: &[Example],
    flags: FeatureFlags,
) -> Result<Vec<SyntacticGraph>, HarnessError> {
    examples
        .iter()
        .map(|ex| build_syntactic_graph(ex, flags).map_err(HarnessError::from))
        .collect()
}

/// Mini-batch Adam training with teacher forcing. Evaluates dev
/// exact-match after every epoch, keeps the best-dev parameters, and
/// stops early after `patience` epochs without improvement. Fully
/// deterministic for a fixed (seed, config, data) triple.
pub fn train(
    cfg: &TrainConfig,
    train_set: &[Example],
    dev_set: &[Example],
) -> Result<(Model, RunReport), HarnessError> {
    if train_set.is_empty() {
        return Err(HarnessError::EmptyDataset("train"));
    }
    if dev_set.is_empty() {
        return Err(HarnessError::EmptyDataset("dev"));
    }
    let started = Instant::now();
    let model_cfg = cfg.model_config();
    let (src_vocab, tgt_vocab) = build_vocab(train_set, cfg.min_freq);

    let train_graphs = build_graphs(train_set, cfg.flags)?;
    let targets: Vec<Vec<u32>> = train_set
        .iter()
        .map(|ex| ex.logic.iter().map(|t| tgt_vocab.id(t)).collect())
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = Model::init(model_cfg, src_vocab, tgt_vocab, &mut rng);
    if let Some(path) = &cfg.embeddings {
        let (embed, _covered) =
            load_pretrained_embeddings(path, &model.src_vocab, cfg.embed_dim, &mut rng)?;
        model.params.src_embed = embed.weights;
    }

    let mut adam = Adam::new(cfg.lr);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut best: Option<(f64, usize, Model)> = None;
    let mut epochs = Vec::new();
    let mut stale = 0usize;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (batch_idx, batch) in order.chunks(cfg.batch).enumerate() {
            let tape = Tape::new();
            let bound = BoundModel::bind(&tape, &model.params);
            let losses: Vec<_> = batch
                .iter()
                .map(|&i| {
                    example_loss_on_tape(
                        &tape,
                        &bound,
                        &train_graphs[i],
                        &model.src_vocab,
                        &targets[i],
                        &model.config,
                        DropoutMode::Train,
                        &mut rng,
                    )
                })
                .collect();
            let loss = tape.mean_scalars(&losses);
            let loss_value = tape.scalar_value(loss);
            if !loss_value.is_finite() {
                return Err(HarnessError::Diverged {
                    epoch,
                    batch: batch_idx,
                });
            }
            epoch_loss += loss_value * batch.len() as f64;
            let grads = tape.backward(loss);
            let grad_map: BTreeMap<String, Tensor> = bound
                .named_vars()
                .into_iter()
                .map(|(name, var)| (name, grads.get(var).clone()))
                .collect();
            let mut params = model.params.named_mut();
            adam.step(&mut params, &grad_map);
        }
        let train_loss = epoch_loss / train_set.len() as f64;
        let dev_accuracy = evaluate_exact_match(&model, dev_set)?;
        epochs.push(EpochReport {
            epoch,
            train_loss,
            dev_accuracy,
        });
        if best.as_ref().is_none_or(|(acc, _, _)| dev_accuracy > *acc) {
            best = Some((dev_accuracy, epoch, model.clone()));
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }

    let (best_dev_accuracy, best_epoch, best_model) = best.expect("at least one epoch ran");
    let report = RunReport {
        epochs,
        best_dev_accuracy,
        best_epoch,
        final_test_accuracy: None,
        config: cfg.clone(),
        wall_time_secs: started.elapsed().as_secs_f64(),
    };
    Ok((best_model, report))
}

/// Exact-match accuracy: a prediction counts iff its token sequence
/// equals the gold logical form's after whitespace normalization
/// (token-level comparison of whitespace-split sequences).
pub fn evaluate_exact_match(model: &Model, dataset: &[Example]) -> Result<f64, HarnessError> {
    if dataset.is_empty() {
        return Err(HarnessError::EmptyDataset("evaluation"));
    }
    let mut correct = 0usize;
    for ex in dataset {
        let g = build_syntactic_graph(ex, model.config.flags)?;
        let predicted = model.predict_tokens(&g);
        if predicted == ex.logic {
            correct += 1;
        }
    }
    Ok(correct as f64 / dataset.len() as f64)
}

/// Decode the whole dataset to whitespace-joined token lines, aligned
/// 1:1 with the input.
pub fn predict_lines(model: &Model, dataset: &[Example]) -> Result<Vec<String>, HarnessError> {
    dataset
        .iter()
        .map(|ex| {
            let g = build_syntactic_graph(ex, model.config.flags)?;
            Ok(model.predict_tokens(&g).join(" "))
        })
        .collect()
}

/// One ablation row: the feature set, its dev accuracy, and the
/// trained model (kept so callers can reuse it without retraining).
pub struct AblationOutcome {
    pub name: String,
    pub flags: FeatureFlags,
    pub accuracy: f64,
    pub model: Model,
    pub report: RunReport,
}

/// Train and evaluate once per feature set with a shared seed.
/// Requesting a feature whose parse files are absent is a hard error,
/// never a silent substitution.
pub fn run_ablation(
    cfg: &TrainConfig,
    feature_sets: &[FeatureFlags],
    train_set: &[Example],
    dev_set: &[Example],
) -> Result<Vec<AblationOutcome>, HarnessError> {
    let mut rows = Vec::with_capacity(feature_sets.len());
    for flags in feature_sets {
        let mut run_cfg = cfg.clone();
        run_cfg.flags = *flags;
        let (model, report) = train(&run_cfg, train_set, dev_set)?;
        rows.push(AblationOutcome {
            name: flags.describe(),
            flags: *flags,
            accuracy: report.best_dev_accuracy,
            model,
            report,
        });
    }
    Ok(rows)
}

/// CSV rendering of an ablation table: `features,accuracy`.
pub fn ablation_csv(rows: &[AblationOutcome]) -> String {
    let mut out = String::from("features,accuracy\n");
    for row in rows {
        out.push_str(&format!("{},{}\n", row.name, row.accuracy));
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub m: usize,
    pub accuracy: f64,
}

/// Robustness sweep results; the `m = 0` row is the unperturbed
/// accuracy, bit-for-bit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub features: String,
    pub trials: usize,
    pub seed: u64,
    pub rows: Vec<SweepRow>,
}

/// Evaluate the model on SWAP-perturbed copies of the dev set. For
/// each `m > 0` the accuracy averages `trials` independently perturbed
/// copies; per-example RNG seeds derive as `trial_seed XOR index` so
/// results are reproducible and order-independent.
pub fn robustness_sweep(
    model: &Model,
    dev_set: &[Example],
    m_values: &[usize],
    trials: usize,
    seed: u64,
) -> Result<SweepReport, HarnessError> {
    assert!(trials >= 1, "sweep needs at least one trial");
    let clean = evaluate_exact_match(model, dev_set)?;
    let mut rows = Vec::with_capacity(m_values.len());
    for &m in m_values {
        if m == 0 {
            rows.push(SweepRow { m, accuracy: clean });
            continue;
        }
        let cfg = SwapConfig::unrestricted(m, seed);
        let mut total = 0.0;
        for trial in 0..trials {
            let trial_seed = seed.wrapping_add(trial as u64);
            let perturbed: Vec<Example> = dev_set
                .iter()
                .enumerate()
                .map(|(index, ex)| {
                    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed ^ index as u64);
                    perturb_example(ex, &cfg, &mut rng).0
                })
                .collect();
            total += evaluate_exact_match(model, &perturbed)?;
        }
        rows.push(SweepRow {
            m,
            accuracy: total / trials as f64,
        });
    }
    Ok(SweepReport {
        features: model.config.flags.describe(),
        trials,
        seed,
        rows,
    })
}

/// CSV rendering of a sweep: `m,accuracy`.
pub fn sweep_csv(report: &SweepReport) -> String {
    let mut out = String::from("m,accuracy\n");
    for row in &report.rows {
        out.push_str(&format!("{},{}\n", row.m, row.accuracy));
    }
    out
}
