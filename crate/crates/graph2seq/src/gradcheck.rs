//! Finite-difference verification suite covering every differentiable
//! operation and the full encoder+decoder loss on a small graph.
//! Backs the `gradcheck` CLI subcommand and the acceptance tests.

use crate::corpus::{build_vocab, parse_bracketed_tree, parse_conllu, parse_parallel_corpus};
use crate::decoder::{teacher_forced_loss, BoundDecoder, BoundLstm, DecoderConfig, DecoderParams};
use crate::encoder::{
    encode_on_tape, init_node_features, BoundEncoder, BoundHop, EncoderConfig, EncoderParams,
    Pooling,
};
use crate::graph::{build_syntactic_graph, FeatureFlags};
use crate::model::{example_loss_on_tape, BoundModel, ModelConfig, ModelParams};
use crate::tensor::{finite_difference_check, DropoutMode, Tape, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Outcome of one named check.
#[derive(Clone, Debug)]
pub struct CheckResult {
    pub name: String,
    pub max_rel_err: f64,
    pub tolerance: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.tolerance
    }
}

const TOL: f64 = 1e-4;
const EPS: f64 = 1e-5;

fn sum_to_scalar(tape: &Tape, v: Var) -> Var {
    let (r, c) = tape.shape(v);
    let flat = tape.reshape(v, 1, r * c);
    // A fixed non-uniform weighting exposes sign errors that a plain
    // sum could mask.
    let weights: Vec<f64> = (0..r * c).map(|i| 0.5 + 0.1 * i as f64).collect();
    let w = tape.var(Tensor::from_vec(r * c, 1, weights));
    tape.matmul(flat, w)
}

fn check<F>(name: &str, params: Vec<Tensor>, build: F) -> CheckResult
where
    F: Fn(&Tape, &[Var]) -> Var,
{
    CheckResult {
        name: name.to_string(),
        max_rel_err: finite_difference_check(build, &params, EPS),
        tolerance: TOL,
    }
}

fn rand_t(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
    Tensor::rand_uniform(rng, r, c, -0.9, 0.9)
}

/// Replace zero biases with offsets so no pre-activation sits exactly
/// on a ReLU kink during perturbation.
fn offset_biases(named: Vec<(String, &mut Tensor)>, rng: &mut ChaCha8Rng) {
    for (name, t) in named {
        if name.ends_with('b') && !name.contains("embed") {
            *t = Tensor::rand_uniform(rng, t.rows(), t.cols(), 0.05, 0.25);
        }
    }
}

/// Run every per-operation check plus the full-model check on a
/// five-node syntactic graph.
pub fn run_suite() -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0FFEE);
    let mut results = vec![check(
        "matmul",
        vec![rand_t(&mut rng, 3, 4), rand_t(&mut rng, 4, 2)],
        |tape, vars| sum_to_scalar(tape, tape.matmul(vars[0], vars[1])),
    )];
    results.push(check(
        "add_row_broadcast",
        vec![rand_t(&mut rng, 3, 4), rand_t(&mut rng, 1, 4)],
        |tape, vars| sum_to_scalar(tape, tape.add_row(vars[0], vars[1])),
    ));
    results.push(check(
        "elementwise_mul",
        vec![rand_t(&mut rng, 2, 5), rand_t(&mut rng, 2, 5)],
        |tape, vars| sum_to_scalar(tape, tape.mul(vars[0], vars[1])),
    ));
    results.push(check(
        "add_and_scale",
        vec![rand_t(&mut rng, 2, 3), rand_t(&mut rng, 2, 3)],
        |tape, vars| sum_to_scalar(tape, tape.scale(tape.add(vars[0], vars[1]), -1.7)),
    ));
    // Inputs bounded away from zero keep central differences off the
    // ReLU kink.
    let relu_in = {
        let mut t = rand_t(&mut rng, 2, 6);
        for v in t.data_mut() {
            if v.abs() < 0.05 {
                *v += 0.1;
            }
        }
        t
    };
    results.push(check("relu", vec![relu_in], |tape, vars| {
        sum_to_scalar(tape, tape.relu(vars[0]))
    }));
    results.push(check("sigmoid", vec![rand_t(&mut rng, 2, 6)], |tape, vars| {
        sum_to_scalar(tape, tape.sigmoid(vars[0]))
    }));
    results.push(check("tanh", vec![rand_t(&mut rng, 2, 6)], |tape, vars| {
        sum_to_scalar(tape, tape.tanh(vars[0]))
    }));
    results.push(check(
        "concat_cols_slice_cols",
        vec![rand_t(&mut rng, 2, 3), rand_t(&mut rng, 2, 2)],
        |tape, vars| {
            let cat = tape.concat_cols(&[vars[0], vars[1]]);
            sum_to_scalar(tape, tape.slice_cols(cat, 1, 3))
        },
    ));
    results.push(check(
        "concat_rows_gather_rows",
        vec![rand_t(&mut rng, 2, 3), rand_t(&mut rng, 3, 3)],
        |tape, vars| {
            let cat = tape.concat_rows(&[vars[0], vars[1]]);
            sum_to_scalar(tape, tape.gather_rows(cat, &[4, 0, 0, 2]))
        },
    ));
    // Well-separated entries avoid max-pool argmax flips under
    // perturbation.
    let pool_in = Tensor::from_rows(&[
        vec![0.9, -0.4, 0.1, 0.7],
        vec![0.2, 0.5, -0.8, -0.1],
        vec![-0.6, 0.9, 0.4, 0.3],
    ]);
    results.push(check("max_pool_rows", vec![pool_in], |tape, vars| {
        sum_to_scalar(tape, tape.max_pool_rows(vars[0]))
    }));
    results.push(check(
        "mean_pool_rows",
        vec![rand_t(&mut rng, 4, 3)],
        |tape, vars| sum_to_scalar(tape, tape.mean_pool_rows(vars[0])),
    ));
    results.push(check(
        "softmax_row",
        vec![rand_t(&mut rng, 1, 6)],
        |tape, vars| sum_to_scalar(tape, tape.softmax_row(vars[0])),
    ));
    results.push(check(
        "cross_entropy_of_softmax",
        vec![rand_t(&mut rng, 1, 5)],
        |tape, vars| tape.cross_entropy(tape.softmax_row(vars[0]), 2),
    ));
    results.push(check(
        "dropout_fixed_mask",
        vec![rand_t(&mut rng, 2, 8)],
        |tape, vars| {
            // The same seed per evaluation fixes the mask, making the
            // perturbed function deterministic.
            let mut mask_rng = ChaCha8Rng::seed_from_u64(42);
            let dropped = tape.dropout(vars[0], 0.4, DropoutMode::Train, &mut mask_rng);
            sum_to_scalar(tape, dropped)
        },
    ));

    results.push(encoder_check(&mut rng));
    results.push(decoder_check(&mut rng));
    results.push(full_model_check(&mut rng));
    results
}

fn five_node_example() -> crate::corpus::Example {
    // "the jobs" + one dependency arc + a two-level tree gives exactly
    // 2 word + 1 edge-label + 2 constituent nodes.
    let mut ex = parse_parallel_corpus("the jobs\tanswer ( J )")
        .unwrap()
        .remove(0);
    ex.dep = Some(parse_conllu("1 the 2 det\n2 jobs 0 root").unwrap());
    ex.cons = Some(parse_bracketed_tree("(NP (DT the) jobs)").unwrap());
    ex
}

fn encoder_check(rng: &mut ChaCha8Rng) -> CheckResult {
    let cfg = EncoderConfig {
        k_hops: 2,
        embed_dim: 4,
        hidden: 4,
        pooling: Pooling::Max,
    };
    let mut params = EncoderParams::init(&cfg, rng);
    offset_biases(params.named_mut(), rng);
    let ex = five_node_example();
    let (vocab, _) = build_vocab(std::slice::from_ref(&ex), 1);
    let g = build_syntactic_graph(&ex, FeatureFlags::all()).unwrap();
    assert_eq!(g.node_count(), 5, "the fixture must be a five-node graph");
    let embed = rand_t(rng, vocab.len(), cfg.embed_dim);

    let mut tensors = vec![embed];
    tensors.extend(params.named().iter().map(|(_, t)| (*t).clone()));
    let k = cfg.k_hops;
    CheckResult {
        name: "encoder_full".to_string(),
        max_rel_err: finite_difference_check(
            |tape, vars| {
                let hop = |base: usize| BoundHop {
                    pool_w: vars[base],
                    pool_b: vars[base + 1],
                    upd_w: vars[base + 2],
                    upd_b: vars[base + 3],
                };
                let bound = BoundEncoder {
                    forward: (0..k).map(|i| hop(1 + 4 * i)).collect(),
                    backward: (0..k).map(|i| hop(1 + 4 * (k + i))).collect(),
                    graph_w: vars[vars.len() - 2],
                    graph_b: vars[vars.len() - 1],
                };
                let feats = init_node_features(tape, vars[0], &g, &vocab);
                let enc = encode_on_tape(tape, &bound, &g, feats, &cfg);
                let nodes = sum_to_scalar(tape, enc.node_embeddings);
                let graph = sum_to_scalar(tape, enc.graph_embedding);
                tape.add(nodes, graph)
            },
            &tensors,
            EPS,
        ),
        tolerance: TOL,
    }
}

fn bind_decoder_vars(vars: &[Var], offset: usize, layers: usize) -> BoundDecoder {
    let mut i = offset;
    let mut next = || {
        let v = vars[i];
        i += 1;
        v
    };
    let embed = next();
    let mut init_w = Vec::new();
    let mut init_b = Vec::new();
    let mut lstm = Vec::new();
    for _ in 0..layers {
        init_w.push(next());
        init_b.push(next());
        lstm.push(BoundLstm {
            w: next(),
            u: next(),
            b: next(),
        });
    }
    BoundDecoder {
        embed,
        init_w,
        init_b,
        lstm,
        attn_s: next(),
        attn_h: next(),
        attn_v: next(),
        out_w: next(),
        out_b: next(),
    }
}

fn decoder_check(rng: &mut ChaCha8Rng) -> CheckResult {
    let cfg = DecoderConfig {
        hidden: 4,
        embed_dim: 3,
        layers: 1,
        beam: 1,
        max_len: 4,
        dropout: 0.0,
    };
    let params = DecoderParams::init(&cfg, 6, 5, 4, rng);
    let nodes = rand_t(rng, 4, 5);
    let graph = rand_t(rng, 1, 4);
    let tensors: Vec<Tensor> = params.named().iter().map(|(_, t)| (*t).clone()).collect();
    let target = vec![4u32, 5, 4];
    CheckResult {
        name: "decoder_attention_lstm_loss".to_string(),
        max_rel_err: finite_difference_check(
            |tape, vars| {
                let dec = bind_decoder_vars(vars, 0, 1);
                let encoded = crate::encoder::EncodedVars {
                    node_embeddings: tape.var(nodes.clone()),
                    graph_embedding: tape.var(graph.clone()),
                };
                let mut mask_rng = ChaCha8Rng::seed_from_u64(0);
                teacher_forced_loss(
                    tape,
                    &dec,
                    &encoded,
                    &target,
                    0.0,
                    DropoutMode::Eval,
                    &mut mask_rng,
                )
            },
            &tensors,
            EPS,
        ),
        tolerance: TOL,
    }
}

fn full_model_check(rng: &mut ChaCha8Rng) -> CheckResult {
    let cfg = ModelConfig {
        encoder: EncoderConfig {
            k_hops: 2,
            embed_dim: 4,
            hidden: 4,
            pooling: Pooling::Max,
        },
        decoder: DecoderConfig {
            hidden: 4,
            embed_dim: 4,
            layers: 1,
            beam: 1,
            max_len: 6,
            dropout: 0.0,
        },
        flags: FeatureFlags::all(),
    };
    let ex = five_node_example();
    let (src_vocab, tgt_vocab) = build_vocab(std::slice::from_ref(&ex), 1);
    let g = build_syntactic_graph(&ex, cfg.flags).unwrap();
    assert_eq!(g.node_count(), 5);
    let mut params = ModelParams::init(&cfg, src_vocab.len(), tgt_vocab.len(), rng);
    offset_biases(params.encoder.named_mut(), rng);
    let target: Vec<u32> = ex.logic.iter().map(|t| tgt_vocab.id(t)).collect();

    let named = params.named();
    let layers = cfg.decoder.layers;
    let k = cfg.encoder.k_hops;
    let tensors: Vec<Tensor> = named.iter().map(|(_, t)| (*t).clone()).collect();
    CheckResult {
        name: "full_encoder_decoder_loss_5_node_graph".to_string(),
        max_rel_err: finite_difference_check(
            |tape, vars| {
                let hop = |base: usize| BoundHop {
                    pool_w: vars[base],
                    pool_b: vars[base + 1],
                    upd_w: vars[base + 2],
                    upd_b: vars[base + 3],
                };
                let bound = BoundModel {
                    src_embed: vars[0],
                    encoder: BoundEncoder {
                        forward: (0..k).map(|i| hop(1 + 4 * i)).collect(),
                        backward: (0..k).map(|i| hop(1 + 4 * (k + i))).collect(),
                        graph_w: vars[1 + 8 * k],
                        graph_b: vars[2 + 8 * k],
                    },
                    decoder: bind_decoder_vars(vars, 3 + 8 * k, layers),
                };
                let mut mask_rng = ChaCha8Rng::seed_from_u64(0);
                example_loss_on_tape(
                    tape,
                    &bound,
                    &g,
                    &src_vocab,
                    &target,
                    &cfg,
                    DropoutMode::Eval,
                    &mut mask_rng,
                )
            },
            &tensors,
            EPS,
        ),
        tolerance: TOL,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes_within_tolerance() {
        for result in run_suite() {
            assert!(
                result.passed(),
                "{} failed: {} >= {}",
                result.name,
                result.max_rel_err,
                result.tolerance
            );
        }
    }

    #[test]
    fn suite_covers_the_ops_and_the_full_model() {
        let names: Vec<String> = run_suite().into_iter().map(|r| r.name).collect();
        for expected in [
            "matmul",
            "max_pool_rows",
            "softmax_row",
            "cross_entropy_of_softmax",
            "dropout_fixed_mask",
            "encoder_full",
            "decoder_attention_lstm_loss",
            "full_encoder_decoder_loss_5_node_graph",
        ] {
            assert!(names.iter().any(|n| n == expected), "missing check {expected}");
        }
    }
}
