//! Sequence decoder: an LSTM with additive attention over node
//! embeddings, teacher-forced training loss, greedy decoding and beam
//! search.
//!
//! The initial hidden state is a learned affine map of the graph
//! embedding. Each step consumes the previous token's embedding
//! concatenated with the previous context vector (input feeding), runs
//! the recurrent cell, attends over the node embeddings with additive
//! scoring `e_v = w^T tanh(W_s s + W_h h_v)`, and predicts the next
//! token from `[s_i; c_i]` through the output layer. Dropout applies
//! to the output-layer input in train mode only.

use crate::corpus::Vocab;
use crate::encoder::EncodedGraph;
use crate::tensor::{DropoutMode, Tape, Tensor, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecoderConfig {
    /// Recurrent hidden state size.
    pub hidden: usize,
    /// Target-token embedding size.
    pub embed_dim: usize,
    /// Stacked LSTM layers.
    pub layers: usize,
    /// Beam width used by [`beam_search`].
    pub beam: usize,
    /// Maximum number of emitted tokens before decoding stops.
    pub max_len: usize,
    /// Dropout rate on the output-layer input.
    pub dropout: f64,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        DecoderConfig {
            hidden: 300,
            embed_dim: 300,
            layers: 1,
            beam: 3,
            max_len: 150,
            dropout: 0.5,
        }
    }
}

impl DecoderConfig {
    pub fn validate(&self) {
        assert!(self.beam >= 1, "beam width must be at least 1");
        assert!(self.max_len >= 1, "max_len must be at least 1");
        assert!(self.layers >= 1, "decoder needs at least one layer");
        assert!(self.hidden > 0 && self.embed_dim > 0, "dimensions must be positive");
        assert!((0.0..1.0).contains(&self.dropout), "dropout must be in [0, 1)");
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    /// Input weights `[in x 4*hidden]`, gate order i, f, g, o.
    pub w: Tensor,
    /// Recurrent weights `[hidden x 4*hidden]`.
    pub u: Tensor,
    /// Gate bias `[1 x 4*hidden]`.
    pub b: Tensor,
}

/// All decoder weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecoderParams {
    /// Target-token embeddings `[tgt_vocab x embed_dim]`.
    pub embed: Tensor,
    /// Per-layer affine map from the graph embedding to the initial
    /// hidden state.
    pub init_w: Vec<Tensor>,
    pub init_b: Vec<Tensor>,
    pub lstm: Vec<LstmParams>,
    /// Additive attention: `W_s [hidden x hidden]`,
    /// `W_h [node_dim x hidden]`, `w [hidden x 1]`.
    pub attn_s: Tensor,
    pub attn_h: Tensor,
    pub attn_v: Tensor,
    /// Output layer over `[s_i; c_i]`.
    pub out_w: Tensor,
    pub out_b: Tensor,
}

impl DecoderParams {
    /// `node_dim` is the encoder's per-node embedding width,
    /// `graph_dim` the graph-embedding width.
    pub fn init<R: Rng>(
        cfg: &DecoderConfig,
        tgt_vocab: usize,
        node_dim: usize,
        graph_dim: usize,
        rng: &mut R,
    ) -> Self {
        cfg.validate();
        let h = cfg.hidden;
        let mut init_w = Vec::new();
        let mut init_b = Vec::new();
        let mut lstm = Vec::new();
        for layer in 0..cfg.layers {
            init_w.push(Tensor::rand_uniform(rng, graph_dim, h, -0.08, 0.08));
            init_b.push(Tensor::zeros(1, h));
            let in_dim = if layer == 0 { cfg.embed_dim + node_dim } else { h };
            lstm.push(LstmParams {
                w: Tensor::rand_uniform(rng, in_dim, 4 * h, -0.08, 0.08),
                u: Tensor::rand_uniform(rng, h, 4 * h, -0.08, 0.08),
                b: Tensor::zeros(1, 4 * h),
            });
        }
        DecoderParams {
            embed: Tensor::rand_uniform(rng, tgt_vocab, cfg.embed_dim, -0.08, 0.08),
            init_w,
            init_b,
            lstm,
            attn_s: Tensor::rand_uniform(rng, h, h, -0.08, 0.08),
            attn_h: Tensor::rand_uniform(rng, node_dim, h, -0.08, 0.08),
            attn_v: Tensor::rand_uniform(rng, h, 1, -0.08, 0.08),
            out_w: Tensor::rand_uniform(rng, h + node_dim, tgt_vocab, -0.08, 0.08),
            out_b: Tensor::zeros(1, tgt_vocab),
        }
    }

    pub fn named(&self) -> Vec<(String, &Tensor)> {
        let mut out = vec![("dec.embed".to_string(), &self.embed)];
        for l in 0..self.lstm.len() {
            out.push((format!("dec.init{l}.w"), &self.init_w[l]));
            out.push((format!("dec.init{l}.b"), &self.init_b[l]));
            out.push((format!("dec.lstm{l}.w"), &self.lstm[l].w));
            out.push((format!("dec.lstm{l}.u"), &self.lstm[l].u));
            out.push((format!("dec.lstm{l}.b"), &self.lstm[l].b));
        }
        out.push(("dec.attn.s".to_string(), &self.attn_s));
        out.push(("dec.attn.h".to_string(), &self.attn_h));
        out.push(("dec.attn.v".to_string(), &self.attn_v));
        out.push(("dec.out.w".to_string(), &self.out_w));
        out.push(("dec.out.b".to_string(), &self.out_b));
        out
    }

    pub fn named_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = vec![("dec.embed".to_string(), &mut self.embed)];
        for (l, ((iw, ib), lstm)) in self
            .init_w
            .iter_mut()
            .zip(self.init_b.iter_mut())
            .zip(self.lstm.iter_mut())
            .enumerate()
        {
            out.push((format!("dec.init{l}.w"), iw));
            out.push((format!("dec.init{l}.b"), ib));
            out.push((format!("dec.lstm{l}.w"), &mut lstm.w));
            out.push((format!("dec.lstm{l}.u"), &mut lstm.u));
            out.push((format!("dec.lstm{l}.b"), &mut lstm.b));
        }
        out.push(("dec.attn.s".to_string(), &mut self.attn_s));
        out.push(("dec.attn.h".to_string(), &mut self.attn_h));
        out.push(("dec.attn.v".to_string(), &mut self.attn_v));
        out.push(("dec.out.w".to_string(), &mut self.out_w));
        out.push(("dec.out.b".to_string(), &mut self.out_b));
        out
    }
}

pub struct BoundLstm {
    pub w: Var,
    pub u: Var,
    pub b: Var,
}

/// Decoder weights bound onto a tape.
pub struct BoundDecoder {
    pub embed: Var,
    pub init_w: Vec<Var>,
    pub init_b: Vec<Var>,
    pub lstm: Vec<BoundLstm>,
    pub attn_s: Var,
    pub attn_h: Var,
    pub attn_v: Var,
    pub out_w: Var,
    pub out_b: Var,
}

impl BoundDecoder {
    pub fn bind(tape: &Tape, params: &DecoderParams) -> Self {
        BoundDecoder {
            embed: tape.var(params.embed.clone()),
            init_w: params.init_w.iter().map(|t| tape.var(t.clone())).collect(),
            init_b: params.init_b.iter().map(|t| tape.var(t.clone())).collect(),
            lstm: params
                .lstm
                .iter()
                .map(|l| BoundLstm {
                    w: tape.var(l.w.clone()),
                    u: tape.var(l.u.clone()),
                    b: tape.var(l.b.clone()),
                })
                .collect(),
            attn_s: tape.var(params.attn_s.clone()),
            attn_h: tape.var(params.attn_h.clone()),
            attn_v: tape.var(params.attn_v.clone()),
            out_w: tape.var(params.out_w.clone()),
            out_b: tape.var(params.out_b.clone()),
        }
    }
}

/// Recurrent state: per-layer hidden and cell states plus the previous
/// context vector fed back into the next input.
#[derive(Clone)]
pub struct DecodeState {
    pub h: Vec<Var>,
    pub c: Vec<Var>,
    pub ctx: Var,
}

/// Everything constant across the steps of one decoded sequence.
pub struct DecodeRun {
    /// Node embeddings `[V x node_dim]`.
    pub nodes: Var,
    /// Cached `nodes * W_h`, reused by every attention call.
    wh: Var,
    node_dim: usize,
}

impl DecodeRun {
    pub fn new(tape: &Tape, dec: &BoundDecoder, node_embeddings: Var) -> Self {
        let (_, node_dim) = tape.shape(node_embeddings);
        DecodeRun {
            nodes: node_embeddings,
            wh: tape.matmul(node_embeddings, dec.attn_h),
            node_dim,
        }
    }
}

/// Initial decoder state: each layer's hidden state is an affine map
/// of the graph embedding; cell states and the context start at zero.
pub fn init_state(
    tape: &Tape,
    dec: &BoundDecoder,
    graph_embedding: Var,
    run: &DecodeRun,
) -> DecodeState {
    let hidden = tape.shape(dec.attn_s).0;
    let mut h = Vec::new();
    let mut c = Vec::new();
    for l in 0..dec.lstm.len() {
        h.push(tape.add(tape.matmul(graph_embedding, dec.init_w[l]), dec.init_b[l]));
        c.push(tape.zeros(1, hidden));
    }
    DecodeState {
        h,
        c,
        ctx: tape.zeros(1, run.node_dim),
    }
}

/// Additive attention over node embeddings: scores
/// `e_v = w^T tanh(W_s s + W_h h_v)`, softmax weights, and the
/// weighted context vector. Returns `(context, weights)`.
pub fn attention(tape: &Tape, dec: &BoundDecoder, s: Var, node_embeddings: Var) -> (Var, Var) {
    let wh = tape.matmul(node_embeddings, dec.attn_h);
    attention_cached(tape, dec, s, node_embeddings, wh)
}

fn attention_cached(tape: &Tape, dec: &BoundDecoder, s: Var, nodes: Var, wh: Var) -> (Var, Var) {
    let (v_count, _) = tape.shape(nodes);
    assert!(v_count >= 1, "attention over an empty node set");
    let ws = tape.matmul(s, dec.attn_s); // 1 x hidden
    let scores = tape.matmul(tape.tanh(tape.add_row(wh, ws)), dec.attn_v); // V x 1
    let alpha = tape.softmax_row(tape.reshape(scores, 1, v_count)); // 1 x V
    let ctx = tape.matmul(alpha, nodes); // 1 x node_dim
    (ctx, alpha)
}

fn lstm_cell(tape: &Tape, cell: &BoundLstm, x: Var, h: Var, c: Var, hidden: usize) -> (Var, Var) {
    let z = tape.add_row(
        tape.add(tape.matmul(x, cell.w), tape.matmul(h, cell.u)),
        cell.b,
    );
    let i = tape.sigmoid(tape.slice_cols(z, 0, hidden));
    let f = tape.sigmoid(tape.slice_cols(z, hidden, hidden));
    let g = tape.tanh(tape.slice_cols(z, 2 * hidden, hidden));
    let o = tape.sigmoid(tape.slice_cols(z, 3 * hidden, hidden));
    let c_new = tape.add(tape.mul(f, c), tape.mul(i, g));
    let h_new = tape.mul(o, tape.tanh(c_new));
    (h_new, c_new)
}

/// One decoding step: embed the previous token, run the recurrent
/// stack with input feeding, attend over the nodes, and emit a
/// distribution over the target vocabulary.
#[allow(clippy::too_many_arguments)]
pub fn decode_step<R: Rng>(
    tape: &Tape,
    dec: &BoundDecoder,
    prev_token: u32,
    state: &DecodeState,
    run: &DecodeRun,
    dropout: f64,
    mode: DropoutMode,
    rng: &mut R,
) -> (Var, DecodeState) {
    let (vocab_rows, _) = tape.shape(dec.embed);
    assert!(
        (prev_token as usize) < vocab_rows,
        "token {prev_token} out of vocabulary"
    );
    let hidden = tape.shape(dec.attn_s).0;
    let emb = tape.gather_rows(dec.embed, &[prev_token as usize]);
    let mut x = tape.concat_cols(&[emb, state.ctx]);
    let mut h_next = Vec::with_capacity(dec.lstm.len());
    let mut c_next = Vec::with_capacity(dec.lstm.len());
    for (l, cell) in dec.lstm.iter().enumerate() {
        let (h, c) = lstm_cell(tape, cell, x, state.h[l], state.c[l], hidden);
        h_next.push(h);
        c_next.push(c);
        x = h;
    }
    let top = *h_next.last().expect("at least one layer");
    let (ctx, _alpha) = attention_cached(tape, dec, top, run.nodes, run.wh);
    let out_in = tape.dropout(tape.concat_cols(&[top, ctx]), dropout, mode, rng);
    let logits = tape.add_row(tape.matmul(out_in, dec.out_w), dec.out_b);
    let dist = tape.softmax_row(logits);
    (
        dist,
        DecodeState {
            h: h_next,
            c: c_next,
            ctx,
        },
    )
}

/// Teacher-forced loss: feed gold previous tokens starting from SOS,
/// append EOS, and average the per-position cross-entropies.
pub fn teacher_forced_loss<R: Rng>(
    tape: &Tape,
    dec: &BoundDecoder,
    encoded: &crate::encoder::EncodedVars,
    target: &[u32],
    dropout: f64,
    mode: DropoutMode,
    rng: &mut R,
) -> Var {
    assert!(!target.is_empty(), "teacher_forced_loss needs a non-empty target");
    let run = DecodeRun::new(tape, dec, encoded.node_embeddings);
    let mut state = init_state(tape, dec, encoded.graph_embedding, &run);
    let mut losses = Vec::with_capacity(target.len() + 1);
    let mut prev = Vocab::SOS;
    for &gold in target.iter().chain(std::iter::once(&Vocab::EOS)) {
        let (dist, next) = decode_step(tape, dec, prev, &state, &run, dropout, mode, rng);
        losses.push(tape.cross_entropy(dist, gold as usize));
        state = next;
        prev = gold;
    }
    tape.mean_scalars(&losses)
}

/// A partial decode: emitted prefix, cumulative log-probability and
/// termination status. The prefix of a terminated hypothesis ends with
/// EOS.
#[derive(Clone, Debug)]
pub struct Hypothesis {
    pub tokens: Vec<u32>,
    pub log_prob: f64,
    pub terminated: bool,
}

struct LiveHypothesis {
    tokens: Vec<u32>,
    log_prob: f64,
    state: DecodeState,
}

/// Standard beam search: every live hypothesis expands over the full
/// vocabulary, the top-`beam` candidates by cumulative log-probability
/// survive, EOS retires a hypothesis into the pool, and decoding stops
/// when nothing is live or `max_len` tokens have been emitted (live
/// hypotheses then join the pool unterminated). No length
/// normalization is applied. Returns the pool's best token sequence
/// with the trailing EOS stripped.
pub fn beam_search(dec: &DecoderParams, encoded: &EncodedGraph, cfg: &DecoderConfig) -> Vec<u32> {
    let hyp = beam_search_full(dec, encoded, cfg);
    let mut tokens = hyp.tokens;
    if tokens.last() == Some(&Vocab::EOS) {
        tokens.pop();
    }
    tokens
}

/// Beam search returning the winning [`Hypothesis`] unstripped.
pub fn beam_search_full(
    dec: &DecoderParams,
    encoded: &EncodedGraph,
    cfg: &DecoderConfig,
) -> Hypothesis {
    cfg.validate();
    let tape = Tape::new();
    let bound = BoundDecoder::bind(&tape, dec);
    let nodes = tape.var(encoded.node_embeddings.clone());
    let graph = tape.var(encoded.graph_embedding.clone());
    let run = DecodeRun::new(&tape, &bound, nodes);
    let state = init_state(&tape, &bound, graph, &run);
    // Dropout never fires in eval mode; the RNG is inert.
    let mut rng = rand::rngs::mock::StepRng::new(0, 0);

    let mut live = vec![LiveHypothesis {
        tokens: Vec::new(),
        log_prob: 0.0,
        state,
    }];
    let mut pool: Vec<Hypothesis> = Vec::new();

    for _ in 0..cfg.max_len {
        if live.is_empty() {
            break;
        }
        let mut candidates: Vec<LiveHypothesis> = Vec::new();
        for hyp in &live {
            let prev = *hyp.tokens.last().unwrap_or(&Vocab::SOS);
            let (dist, next_state) = decode_step(
                &tape,
                &bound,
                prev,
                &hyp.state,
                &run,
                0.0,
                DropoutMode::Eval,
                &mut rng,
            );
            let probs = tape.value(dist);
            for (tok, &p) in probs.data().iter().enumerate() {
                let mut tokens = hyp.tokens.clone();
                tokens.push(tok as u32);
                candidates.push(LiveHypothesis {
                    tokens,
                    log_prob: hyp.log_prob + p.ln(),
                    state: next_state.clone(),
                });
            }
        }
        // Highest cumulative log-probability first; the sort is stable
        // so ties keep expansion order and beam=1 matches greedy.
        candidates.sort_by(|a, b| b.log_prob.partial_cmp(&a.log_prob).expect("no NaN scores"));
        candidates.truncate(cfg.beam);
        live = Vec::new();
        for cand in candidates {
            if *cand.tokens.last().expect("candidates are non-empty") == Vocab::EOS {
                pool.push(Hypothesis {
                    tokens: cand.tokens,
                    log_prob: cand.log_prob,
                    terminated: true,
                });
            } else {
                live.push(cand);
            }
        }
    }
    // Length cap reached: unterminated survivors compete in the pool.
    for hyp in live {
        pool.push(Hypothesis {
            tokens: hyp.tokens,
            log_prob: hyp.log_prob,
            terminated: false,
        });
    }
    pool.into_iter()
        .max_by(|a, b| a.log_prob.partial_cmp(&b.log_prob).expect("no NaN scores"))
        .expect("pool holds at least one hypothesis")
}

/// Argmax decoding until EOS or the length cap.
pub fn greedy_decode(dec: &DecoderParams, encoded: &EncodedGraph, cfg: &DecoderConfig) -> Vec<u32> {
    let tape = Tape::new();
    let bound = BoundDecoder::bind(&tape, dec);
    let nodes = tape.var(encoded.node_embeddings.clone());
    let graph = tape.var(encoded.graph_embedding.clone());
    let run = DecodeRun::new(&tape, &bound, nodes);
    let mut state = init_state(&tape, &bound, graph, &run);
    let mut rng = rand::rngs::mock::StepRng::new(0, 0);

    let mut tokens = Vec::new();
    let mut prev = Vocab::SOS;
    for _ in 0..cfg.max_len {
        let (dist, next) = decode_step(
            &tape,
            &bound,
            prev,
            &state,
            &run,
            0.0,
            DropoutMode::Eval,
            &mut rng,
        );
        let probs = tape.value(dist);
        let (best, _) = probs
            .data()
            .iter()
            .enumerate()
            .fold((0usize, f64::NEG_INFINITY), |acc, (i, &p)| {
                if p > acc.1 {
                    (i, p)
                } else {
                    acc
                }
            });
        if best as u32 == Vocab::EOS {
            break;
        }
        tokens.push(best as u32);
        state = next;
        prev = best as u32;
    }
    tokens
}
