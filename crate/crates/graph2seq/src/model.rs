//! The full graph-to-sequence model: source embeddings, graph encoder
//! and attention decoder, with a versioned on-disk format bundling
//! parameters, vocabularies and configuration.

use crate::corpus::Vocab;
use crate::decoder::{
    beam_search, greedy_decode, teacher_forced_loss, BoundDecoder, DecoderConfig, DecoderParams,
};
use crate::encoder::{
    encode_on_tape, init_node_features, BoundEncoder, EncodedGraph, EncoderConfig, EncoderParams,
};
use crate::graph::{FeatureFlags, SyntacticGraph};
use crate::tensor::{DropoutMode, Tape, Tensor, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

pub const MODEL_FILE_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("cannot read/write model file `{path}`: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed model file: {0}")]
    Malformed(#[from] serde_json::Error),
    #[error("unsupported model file version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("checkpoint is missing parameter `{0}`")]
    MissingParam(String),
    #[error("checkpoint parameter `{name}` has shape {found:?}, expected {expected:?}")]
    ShapeMismatch {
        name: String,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("checkpoint contains unknown parameter `{0}`")]
    UnknownParam(String),
}

/// Architecture and feature configuration, stored with checkpoints.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub decoder: DecoderConfig,
    pub flags: FeatureFlags,
}

/// Every trainable tensor of the model.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    /// Source-side embedding matrix over words plus dependency and
    /// constituent labels.
    pub src_embed: Tensor,
    pub encoder: EncoderParams,
    pub decoder: DecoderParams,
}

impl ModelParams {
    pub fn init<R: Rng>(cfg: &ModelConfig, src_vocab: usize, tgt_vocab: usize, rng: &mut R) -> Self {
        let src_embed =
            Tensor::rand_uniform(rng, src_vocab, cfg.encoder.embed_dim, -0.08, 0.08);
        let encoder = EncoderParams::init(&cfg.encoder, rng);
        let decoder = DecoderParams::init(
            &cfg.decoder,
            tgt_vocab,
            cfg.encoder.node_embedding_dim(),
            cfg.encoder.hidden,
            rng,
        );
        ModelParams {
            src_embed,
            encoder,
            decoder,
        }
    }

    pub fn named(&self) -> Vec<(String, &Tensor)> {
        let mut out = vec![("embed.src".to_string(), &self.src_embed)];
        out.extend(self.encoder.named());
        out.extend(self.decoder.named());
        out
    }

    pub fn named_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = vec![("embed.src".to_string(), &mut self.src_embed)];
        out.extend(self.encoder.named_mut());
        out.extend(self.decoder.named_mut());
        out
    }

    /// Flat name -> tensor map, the checkpoint wire format.
    pub fn to_map(&self) -> BTreeMap<String, Tensor> {
        self.named()
            .into_iter()
            .map(|(n, t)| (n, t.clone()))
            .collect()
    }

    /// Rebuild from a flat map, validating coverage and shapes against
    /// a freshly shaped parameter set.
    pub fn from_map(
        cfg: &ModelConfig,
        src_vocab: usize,
        tgt_vocab: usize,
        mut map: BTreeMap<String, Tensor>,
    ) -> Result<Self, ModelError> {
        // Shapes come from a zero-seeded init; values are overwritten.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        use rand::SeedableRng;
        let mut params = ModelParams::init(cfg, src_vocab, tgt_vocab, &mut rng);
        for (name, slot) in params.named_mut() {
            let tensor = map
                .remove(&name)
                .ok_or_else(|| ModelError::MissingParam(name.clone()))?;
            if tensor.shape() != slot.shape() {
                return Err(ModelError::ShapeMismatch {
                    name,
                    expected: slot.shape(),
                    found: tensor.shape(),
                });
            }
            *slot = tensor;
        }
        if let Some((name, _)) = map.into_iter().next() {
            return Err(ModelError::UnknownParam(name));
        }
        Ok(params)
    }
}

/// Model parameters bound onto a tape for one forward/backward pass.
pub struct BoundModel {
    pub src_embed: Var,
    pub encoder: BoundEncoder,
    pub decoder: BoundDecoder,
}

impl BoundModel {
    pub fn bind(tape: &Tape, params: &ModelParams) -> Self {
        BoundModel {
            src_embed: tape.var(params.src_embed.clone()),
            encoder: BoundEncoder::bind(tape, &params.encoder),
            decoder: BoundDecoder::bind(tape, &params.decoder),
        }
    }

    /// Vars in the same order and under the same names as
    /// [`ModelParams::named`], for gradient extraction.
    pub fn named_vars(&self) -> Vec<(String, Var)> {
        let mut out = vec![("embed.src".to_string(), self.src_embed)];
        for (dir, hops) in [("fwd", &self.encoder.forward), ("bwd", &self.encoder.backward)] {
            for (k, hop) in hops.iter().enumerate() {
                out.push((format!("enc.{dir}.h{k}.pool_w"), hop.pool_w));
                out.push((format!("enc.{dir}.h{k}.pool_b"), hop.pool_b));
                out.push((format!("enc.{dir}.h{k}.upd_w"), hop.upd_w));
                out.push((format!("enc.{dir}.h{k}.upd_b"), hop.upd_b));
            }
        }
        out.push(("enc.graph_w".to_string(), self.encoder.graph_w));
        out.push(("enc.graph_b".to_string(), self.encoder.graph_b));
        out.push(("dec.embed".to_string(), self.decoder.embed));
        for l in 0..self.decoder.lstm.len() {
            out.push((format!("dec.init{l}.w"), self.decoder.init_w[l]));
            out.push((format!("dec.init{l}.b"), self.decoder.init_b[l]));
            out.push((format!("dec.lstm{l}.w"), self.decoder.lstm[l].w));
            out.push((format!("dec.lstm{l}.u"), self.decoder.lstm[l].u));
            out.push((format!("dec.lstm{l}.b"), self.decoder.lstm[l].b));
        }
        out.push(("dec.attn.s".to_string(), self.decoder.attn_s));
        out.push(("dec.attn.h".to_string(), self.decoder.attn_h));
        out.push(("dec.attn.v".to_string(), self.decoder.attn_v));
        out.push(("dec.out.w".to_string(), self.decoder.out_w));
        out.push(("dec.out.b".to_string(), self.decoder.out_b));
        out
    }
}

/// Teacher-forced loss of one example on an existing tape: encode the
/// graph and average per-position cross-entropies against the target.
#[allow(clippy::too_many_arguments)]
pub fn example_loss_on_tape<R: Rng>(
    tape: &Tape,
    bound: &BoundModel,
    g: &SyntacticGraph,
    src_vocab: &Vocab,
    target: &[u32],
    cfg: &ModelConfig,
    mode: DropoutMode,
    rng: &mut R,
) -> Var {
    let features = init_node_features(tape, bound.src_embed, g, src_vocab);
    let encoded = encode_on_tape(tape, &bound.encoder, g, features, &cfg.encoder);
    teacher_forced_loss(
        tape,
        &bound.decoder,
        &encoded,
        target,
        cfg.decoder.dropout,
        mode,
        rng,
    )
}

/// A trained (or freshly initialized) model with everything needed for
/// inference.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub src_vocab: Vocab,
    pub tgt_vocab: Vocab,
    pub params: ModelParams,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    config: ModelConfig,
    src_vocab: Vocab,
    tgt_vocab: Vocab,
    params: BTreeMap<String, Tensor>,
}

impl Model {
    pub fn init<R: Rng>(config: ModelConfig, src_vocab: Vocab, tgt_vocab: Vocab, rng: &mut R) -> Self {
        let params = ModelParams::init(&config, src_vocab.len(), tgt_vocab.len(), rng);
        Model {
            config,
            src_vocab,
            tgt_vocab,
            params,
        }
    }

    /// Encode one graph for inference.
    pub fn encode(&self, g: &SyntacticGraph) -> EncodedGraph {
        crate::encoder::encode(
            &self.params.encoder,
            &self.params.src_embed,
            g,
            &self.src_vocab,
            &self.config.encoder,
        )
    }

    /// Beam-search prediction as target-vocab ids.
    pub fn predict_ids(&self, g: &SyntacticGraph) -> Vec<u32> {
        let encoded = self.encode(g);
        beam_search(&self.params.decoder, &encoded, &self.config.decoder)
    }

    /// Beam-search prediction rendered as tokens.
    pub fn predict_tokens(&self, g: &SyntacticGraph) -> Vec<String> {
        self.predict_ids(g)
            .into_iter()
            .map(|id| self.tgt_vocab.token(id).to_string())
            .collect()
    }

    /// Greedy prediction as target-vocab ids.
    pub fn greedy_ids(&self, g: &SyntacticGraph) -> Vec<u32> {
        let encoded = self.encode(g);
        greedy_decode(&self.params.decoder, &encoded, &self.config.decoder)
    }

    /// Map logical-form tokens to target ids (UNK fallback).
    pub fn target_ids(&self, logic: &[String]) -> Vec<u32> {
        logic.iter().map(|t| self.tgt_vocab.id(t)).collect()
    }

    /// Serialize to a versioned JSON file: config, vocabularies and
    /// the flat name -> tensor parameter map.
    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let file = ModelFile {
            version: MODEL_FILE_VERSION,
            config: self.config,
            src_vocab: self.src_vocab.clone(),
            tgt_vocab: self.tgt_vocab.clone(),
            params: self.params.to_map(),
        };
        let json = serde_json::to_string(&file)?;
        fs::write(path, json).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let text = fs::read_to_string(path).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let file: ModelFile = serde_json::from_str(&text)?;
        if file.version != MODEL_FILE_VERSION {
            return Err(ModelError::Version {
                found: file.version,
                expected: MODEL_FILE_VERSION,
            });
        }
        let params = ModelParams::from_map(
            &file.config,
            file.src_vocab.len(),
            file.tgt_vocab.len(),
            file.params,
        )?;
        Ok(Model {
            config: file.config,
            src_vocab: file.src_vocab,
            tgt_vocab: file.tgt_vocab,
            params,
        })
    }
}
