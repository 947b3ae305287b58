//! Acceptance suite: one test per criterion, each printing a
//! `[PASS]` line with the measured quantity.
//!
//! Run with:
//!   cargo test --test acceptance -- --nocapture --test-threads=1
//!
//! The end-to-end criteria (5 and 6) share one training run; the
//! first of them to execute trains the models.

use graph2seq::adversarial::SwapConfig;
use graph2seq::corpus::{parse_parallel_corpus, Example};
use graph2seq::decoder::{
    beam_search, beam_search_full, decode_step, greedy_decode, init_state, BoundDecoder,
    DecodeRun, DecodeState, DecoderConfig, DecoderParams,
};
use graph2seq::encoder::{encode, EncodedGraph, EncoderConfig, EncoderParams, Pooling};
use graph2seq::gradcheck::run_suite;
use graph2seq::graph::{build_syntactic_graph, deserialize_graph, FeatureFlags};
use graph2seq::harness::{
    evaluate_exact_match, robustness_sweep, run_ablation, train, AblationOutcome, TrainConfig,
};
use graph2seq::tensor::{DropoutMode, Tape, Tensor};
use graph2seq::toy;
use graph2seq::Vocab;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;
use std::sync::OnceLock;
use std::time::Instant;

// ---------------------------------------------------------------------------
// Criterion 1: gradient fidelity
// ---------------------------------------------------------------------------

#[test]
fn criterion_1_gradient_fidelity() {
    let started = Instant::now();
    let results = run_suite();
    let elapsed = started.elapsed().as_secs_f64();
    let worst = results
        .iter()
        .map(|r| r.max_rel_err)
        .fold(0.0_f64, f64::max);
    for r in &results {
        assert!(
            r.passed(),
            "[FAIL] criterion 1: {} rel err {} >= {}",
            r.name,
            r.max_rel_err,
            r.tolerance
        );
    }
    assert!(
        elapsed < 60.0,
        "[FAIL] criterion 1: suite took {elapsed:.1}s (>= 60s)"
    );
    println!(
        "[PASS] criterion 1: gradient fidelity — {} checks, max rel err {:.3e} < 1e-4, {:.1}s < 60s",
        results.len(),
        worst,
        elapsed
    );
}

// ---------------------------------------------------------------------------
// Criterion 2: graph-construction oracle
// ---------------------------------------------------------------------------

/// Random projective dependency tree over `n` tokens: pick a subroot
/// per span, attach, recurse on both sides. Returns (head, label) per
/// token with 1-based heads (0 = ROOT).
fn random_projective_tree(n: usize, rng: &mut ChaCha8Rng) -> Vec<(usize, String)> {
    const LABELS: [&str; 6] = ["det", "nsubj", "obj", "nmod", "case", "amod"];
    fn gen(lo: usize, hi: usize, head: usize, out: &mut Vec<(usize, usize)>, rng: &mut ChaCha8Rng) {
        if lo >= hi {
            return;
        }
        let sub = rng.gen_range(lo..hi);
        out.push((sub, head));
        gen(lo, sub, sub, out, rng);
        gen(sub + 1, hi, sub, out, rng);
    }
    let root = rng.gen_range(0..n);
    let mut arcs = vec![(root, usize::MAX)];
    gen(0, root, root, &mut arcs, rng);
    gen(root + 1, n, root, &mut arcs, rng);
    let mut heads = vec![(0usize, String::new()); n];
    for (dep, head) in arcs {
        let h = if head == usize::MAX { 0 } else { head + 1 };
        heads[dep] = (h, LABELS[rng.gen_range(0..LABELS.len())].to_string());
    }
    heads
}

/// Random constituent tree over `n` tokens; returns the bracketed
/// string plus independently counted non-terminals and tree edges.
fn random_constituent_tree(n: usize, rng: &mut ChaCha8Rng) -> (String, usize, usize) {
    const LABELS: [&str; 5] = ["S", "NP", "VP", "PP", "X"];
    fn gen(
        lo: usize,
        hi: usize,
        rng: &mut ChaCha8Rng,
        nts: &mut usize,
        edges: &mut usize,
        out: &mut String,
    ) {
        *nts += 1;
        out.push('(');
        out.push_str(LABELS[rng.gen_range(0..LABELS.len())]);
        let span = hi - lo;
        if span == 1 {
            *edges += 1;
            out.push_str(&format!(" tok{lo}"));
        } else {
            let parts = rng.gen_range(2..=span.min(4));
            // Random contiguous partition into `parts` blocks.
            let mut cuts: Vec<usize> = (lo + 1..hi).collect();
            cuts.shuffle(rng);
            let mut cuts: Vec<usize> = cuts.into_iter().take(parts - 1).collect();
            cuts.sort_unstable();
            let mut start = lo;
            for cut in cuts.into_iter().chain(std::iter::once(hi)) {
                *edges += 1;
                if cut - start == 1 && rng.gen_bool(0.5) {
                    // Plain leaf child.
                    out.push_str(&format!(" tok{start}"));
                } else {
                    out.push(' ');
                    gen(start, cut, rng, nts, edges, out);
                }
                start = cut;
            }
        }
        out.push(')');
    }
    let mut s = String::new();
    let (mut nts, mut edges) = (0, 0);
    gen(0, n, rng, &mut nts, &mut edges, &mut s);
    (s, nts, edges)
}

#[test]
fn criterion_2_graph_construction_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..200 {
        let n = rng.gen_range(1..=18);
        let tokens: Vec<String> = (0..n).map(|i| format!("tok{i}")).collect();
        let question = tokens.join(" ");
        let mut ex = parse_parallel_corpus(&format!("{question}\tanswer ( x )"))
            .unwrap()
            .remove(0);

        let heads = random_projective_tree(n, &mut rng);
        let conllu: String = heads
            .iter()
            .enumerate()
            .map(|(i, (h, l))| format!("{}\t{}\t{}\t{}\n", i + 1, tokens[i], h, l))
            .collect();
        ex.dep = Some(graph2seq::corpus::parse_conllu(&conllu).unwrap());
        let (bracket, nts, tree_edges) = random_constituent_tree(n, &mut rng);
        ex.cons = Some(graph2seq::corpus::parse_bracketed_tree(&bracket).unwrap());

        let arcs = n - 1; // every non-root token has exactly one head
        let g = build_syntactic_graph(&ex, FeatureFlags::all()).unwrap();
        assert_eq!(
            g.node_count(),
            n + arcs + nts,
            "[FAIL] criterion 2: node count, case {case} (n={n}, arcs={arcs}, nts={nts})"
        );
        let expected_edges = if n > 1 { 2 * (n - 1) } else { 0 } + 2 * arcs + tree_edges;
        assert_eq!(
            g.edge_count(),
            expected_edges,
            "[FAIL] criterion 2: edge count, case {case}"
        );
    }

    // The 18-token flagship sentence under word-order-only flags.
    let sentence = "what are the jobs for programmer that has salary 50000 \
                    that uses c++ and not related with AI";
    let ex = parse_parallel_corpus(&format!("{sentence}\tanswer ( x )"))
        .unwrap()
        .remove(0);
    assert_eq!(ex.tokens.len(), 18);
    let g = build_syntactic_graph(&ex, FeatureFlags::word_order_only()).unwrap();
    assert_eq!(g.node_count(), 18, "[FAIL] criterion 2: word node count");
    assert_eq!(g.edge_count(), 34, "[FAIL] criterion 2: word-order edge count");
    println!(
        "[PASS] criterion 2: graph-construction oracle — 200 random sentences match the count \
         formulas exactly; 18-token sentence gives 18 nodes / 34 edges"
    );
}

// ---------------------------------------------------------------------------
// Criterion 3: beam-search oracle
// ---------------------------------------------------------------------------

/// Exhaustive argmax over the beam search space: non-EOS prefixes up
/// to `max_len`, each position optionally terminated by EOS.
fn exhaustive_argmax(
    dec: &DecoderParams,
    enc: &EncodedGraph,
    max_len: usize,
) -> (Vec<u32>, f64) {
    let tape = Tape::new();
    let bound = BoundDecoder::bind(&tape, dec);
    let nodes = tape.var(enc.node_embeddings.clone());
    let graph = tape.var(enc.graph_embedding.clone());
    let run = DecodeRun::new(&tape, &bound, nodes);
    let init = init_state(&tape, &bound, graph, &run);
    let vocab = dec.embed.rows() as u32;

    #[allow(clippy::too_many_arguments)]
    fn walk(
        tape: &Tape,
        bound: &BoundDecoder,
        run: &DecodeRun,
        state: &DecodeState,
        prefix: &mut Vec<u32>,
        lp: f64,
        vocab: u32,
        max_len: usize,
        best: &mut Option<(Vec<u32>, f64)>,
    ) {
        let consider = |tokens: &[u32], lp: f64, best: &mut Option<(Vec<u32>, f64)>| {
            if best.as_ref().is_none_or(|(_, b)| lp > *b) {
                *best = Some((tokens.to_vec(), lp));
            }
        };
        if prefix.len() == max_len {
            consider(prefix, lp, best);
            return;
        }
        let prev = *prefix.last().unwrap_or(&Vocab::SOS);
        let mut rng = rand::rngs::mock::StepRng::new(0, 0);
        let (dist, next) =
            decode_step(tape, bound, prev, state, run, 0.0, DropoutMode::Eval, &mut rng);
        let probs = tape.value(dist);
        for tok in 0..vocab {
            let step_lp = probs.get(0, tok as usize).ln();
            prefix.push(tok);
            if tok == Vocab::EOS {
                consider(prefix, lp + step_lp, best);
            } else {
                walk(tape, bound, run, &next, prefix, lp + step_lp, vocab, max_len, best);
            }
            prefix.pop();
        }
    }

    let mut best = None;
    let mut prefix = Vec::new();
    walk(
        &tape, &bound, &run, &init, &mut prefix, 0.0, vocab, max_len, &mut best,
    );
    best.expect("non-empty search space")
}

#[test]
fn criterion_3_beam_search_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3003);
    for draw in 0..50 {
        let cfg = DecoderConfig {
            hidden: 4,
            embed_dim: 3,
            layers: 1,
            beam: 27, // larger than the widest expansion frontier
            max_len: 4,
            dropout: 0.0,
        };
        let params = DecoderParams::init(&cfg, 3, 5, 4, &mut rng);
        let enc = EncodedGraph {
            node_embeddings: Tensor::rand_uniform(&mut rng, 3, 5, -1.0, 1.0),
            graph_embedding: Tensor::rand_uniform(&mut rng, 1, 4, -1.0, 1.0),
        };
        let got = beam_search_full(&params, &enc, &cfg);
        let (want, want_lp) = exhaustive_argmax(&params, &enc, cfg.max_len);
        assert_eq!(
            got.tokens, want,
            "[FAIL] criterion 3: beam != exhaustive argmax on draw {draw}"
        );
        assert!(
            (got.log_prob - want_lp).abs() < 1e-12,
            "[FAIL] criterion 3: log-prob mismatch on draw {draw}"
        );

        let greedy_cfg = DecoderConfig { beam: 1, max_len: 6, ..cfg };
        assert_eq!(
            beam_search(&params, &enc, &greedy_cfg),
            greedy_decode(&params, &enc, &greedy_cfg),
            "[FAIL] criterion 3: beam=1 != greedy on draw {draw}"
        );
    }
    println!(
        "[PASS] criterion 3: beam-search oracle — full-width beam equals exhaustive argmax and \
         beam=1 equals greedy on 50 random parameter draws"
    );
}

// ---------------------------------------------------------------------------
// Criterion 4: encoder invariances
// ---------------------------------------------------------------------------

fn graph_json(
    texts: &[String],
    edges: &[(usize, usize)],
) -> String {
    let nodes: Vec<serde_json::Value> = texts
        .iter()
        .enumerate()
        .map(|(id, text)| {
            serde_json::json!({
                "id": id, "text": text, "kind": "word", "word_index": id,
            })
        })
        .collect();
    serde_json::json!({
        "nodes": nodes,
        "edges": edges,
        "flags": {"word_order": true, "dependency": false, "constituency": false},
    })
    .to_string()
}

#[test]
fn criterion_4_encoder_invariances() {
    let mut rng = ChaCha8Rng::seed_from_u64(4004);
    let cfg = EncoderConfig {
        k_hops: 2,
        embed_dim: 6,
        hidden: 6,
        pooling: Pooling::Max,
    };
    let params = EncoderParams::init(&cfg, &mut rng);
    let word_pool: Vec<String> = (0..12).map(|i| format!("w{i}")).collect();
    let ex = parse_parallel_corpus(&format!("{}\tanswer ( x )", word_pool.join(" ")))
        .unwrap()
        .remove(0);
    let (vocab, _) = graph2seq::corpus::build_vocab(&[ex], 1);
    let embed = Tensor::rand_uniform(&mut rng, vocab.len(), cfg.embed_dim, -1.0, 1.0);

    for case in 0..100 {
        let n = rng.gen_range(2..=10);
        let texts: Vec<String> = (0..n)
            .map(|_| word_pool[rng.gen_range(0..word_pool.len())].clone())
            .collect();
        let mut edges = Vec::new();
        for a in 0..n {
            for b in 0..n {
                if a != b && rng.gen_bool(0.3) {
                    edges.push((a, b));
                }
            }
        }

        let g = deserialize_graph(&graph_json(&texts, &edges)).unwrap();
        let base = encode(&params, &embed, &g, &vocab, &cfg);

        // Neighbour-order shuffle: same edge set, different insertion
        // order; the encoding must be bit-identical.
        let mut shuffled = edges.clone();
        shuffled.shuffle(&mut rng);
        let g2 = deserialize_graph(&graph_json(&texts, &shuffled)).unwrap();
        let shuffled_enc = encode(&params, &embed, &g2, &vocab, &cfg);
        assert_eq!(
            base, shuffled_enc,
            "[FAIL] criterion 4: neighbour-order shuffle changed the encoding (case {case})"
        );

        // Node-id permutation: graph embedding identical, node rows
        // permuted correspondingly. Tolerance is exactly zero.
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let mut perm_texts = vec![String::new(); n];
        for (old, &new) in perm.iter().enumerate() {
            perm_texts[new] = texts[old].clone();
        }
        let perm_edges: Vec<(usize, usize)> =
            edges.iter().map(|&(a, b)| (perm[a], perm[b])).collect();
        let g3 = deserialize_graph(&graph_json(&perm_texts, &perm_edges)).unwrap();
        let perm_enc = encode(&params, &embed, &g3, &vocab, &cfg);
        assert_eq!(
            base.graph_embedding, perm_enc.graph_embedding,
            "[FAIL] criterion 4: permutation changed the graph embedding (case {case})"
        );
        for (v, &target) in perm.iter().enumerate() {
            assert_eq!(
                base.node_embeddings.row(v),
                perm_enc.node_embeddings.row(target),
                "[FAIL] criterion 4: node {v} row not permuted correspondingly (case {case})"
            );
        }
    }
    println!(
        "[PASS] criterion 4: encoder invariances — neighbour-order shuffles and node-id \
         permutations leave outputs unchanged on 100 random graphs (tolerance 0)"
    );
}

// ---------------------------------------------------------------------------
// Criteria 5 and 6 share one toy training run.
// ---------------------------------------------------------------------------

struct ToyRun {
    rows: Vec<AblationOutcome>,
    dev: Vec<Example>,
    train_secs: f64,
}

fn toy_config() -> TrainConfig {
    TrainConfig {
        // Pinned by the acceptance experiment: d=64, hidden=64, K=3,
        // beam=3, 500 train / 100 dev examples.
        k_hops: 3,
        embed_dim: 64,
        hidden: 64,
        beam: 3,
        // Free choices: at this scale a hotter learning rate, smaller
        // batches and milder dropout converge in a few minutes.
        lr: 0.005,
        batch: 10,
        dropout: 0.3,
        max_len: 40,
        epochs: 50,
        patience: 8,
        seed: 1,
        flags: FeatureFlags::all(),
        ..TrainConfig::default()
    }
}

fn toy_run() -> &'static ToyRun {
    static RUN: OnceLock<ToyRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let data = toy::generate(500, 100, 1);
        let started = Instant::now();
        let rows = run_ablation(
            &toy_config(),
            &[FeatureFlags::all(), FeatureFlags::word_order_only()],
            &data.train.examples,
            &data.dev.examples,
        )
        .expect("toy ablation trains");
        ToyRun {
            rows,
            dev: data.dev.examples,
            train_secs: started.elapsed().as_secs_f64(),
        }
    })
}

#[test]
fn criterion_5_toy_end_to_end() {
    let run = toy_run();
    let all = &run.rows[0];
    let word_order_only = &run.rows[1];
    assert_eq!(all.name, "word_order+dependency+constituency");
    assert!(
        run.train_secs < 1800.0,
        "[FAIL] criterion 5: training took {:.0}s (>= 30 minutes)",
        run.train_secs
    );
    assert!(
        all.accuracy >= 0.9,
        "[FAIL] criterion 5: all-features dev accuracy {:.3} < 0.9",
        all.accuracy
    );
    assert!(
        all.accuracy >= word_order_only.accuracy - 0.05,
        "[FAIL] criterion 5: all-features row {:.3} more than 5 points below word-order-only {:.3}",
        all.accuracy,
        word_order_only.accuracy
    );
    println!(
        "[PASS] criterion 5: toy end-to-end — all-features dev accuracy {:.3} >= 0.9 within \
         {:.0}s; word-order-only row {:.3} (non-degradation holds)",
        all.accuracy, run.train_secs, word_order_only.accuracy
    );
}

#[test]
fn criterion_6_robustness_harness() {
    // (a) SWAP preservation over 10^4 randomized runs.
    let ex = parse_parallel_corpus(
        "what are the jobs for programmer that has salary related with ai\tanswer ( J , job ( J ) )",
    )
    .unwrap()
    .remove(0);
    let protected = graph2seq::adversarial::ProtectedSet::complement_of_eligible(&ex);
    let multiset = |w: &str| {
        let mut m = HashMap::new();
        for c in w.chars() {
            *m.entry(c).or_insert(0usize) += 1;
        }
        m
    };
    let mut rng = ChaCha8Rng::seed_from_u64(6006);
    let mut violations = 0usize;
    for run_idx in 0..10_000 {
        let m = 1 + (run_idx % 5);
        let cfg = SwapConfig::unrestricted(m, 0);
        let out = graph2seq::adversarial::swap_noise(&ex.tokens, &cfg, &protected, &mut rng);
        if out.tokens.len() != ex.tokens.len() {
            violations += 1;
            continue;
        }
        for (orig, new) in ex.tokens.iter().zip(&out.tokens) {
            let changed = orig.surface != new.surface;
            let bad_protected = changed && protected.contains(orig.index);
            let bad_length = orig.surface.chars().count() != new.surface.chars().count();
            let bad_multiset = multiset(&orig.surface) != multiset(&new.surface);
            if bad_protected || bad_length || bad_multiset {
                violations += 1;
            }
        }
    }
    assert_eq!(violations, 0, "[FAIL] criterion 6: {violations} SWAP violations");

    // (b) + (c) on the trained toy model.
    let run = toy_run();
    let model = &run.rows[0].model;
    let clean = evaluate_exact_match(model, &run.dev).unwrap();
    let sweep = robustness_sweep(model, &run.dev, &[0, 5], 3, 77).unwrap();
    assert_eq!(sweep.rows[0].m, 0);
    assert!(
        sweep.rows[0].accuracy == clean,
        "[FAIL] criterion 6: m=0 sweep row {} != clean accuracy {}",
        sweep.rows[0].accuracy,
        clean
    );
    let at5 = sweep.rows[1].accuracy;
    assert!(
        at5 <= clean,
        "[FAIL] criterion 6: accuracy at m=5 ({at5:.3}) exceeds clean accuracy ({clean:.3})"
    );
    println!(
        "[PASS] criterion 6: robustness harness — zero violations in 10^4 SWAP runs; m=0 row \
         equals clean accuracy ({clean:.3}); m=5 accuracy {at5:.3} <= clean"
    );
}

// ---------------------------------------------------------------------------
// Criterion 7: determinism
// ---------------------------------------------------------------------------

#[test]
fn criterion_7_determinism() {
    let data = toy::generate(40, 10, 5);
    let cfg = TrainConfig {
        k_hops: 2,
        embed_dim: 16,
        hidden: 16,
        max_len: 40,
        epochs: 3,
        patience: 3,
        seed: 9,
        flags: FeatureFlags::all(),
        ..TrainConfig::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for run in 0..2 {
        let (model, report) = train(&cfg, &data.train.examples, &data.dev.examples).unwrap();
        let ckpt = dir.path().join(format!("ckpt{run}.json"));
        model.save(&ckpt).unwrap();
        let report_path = dir.path().join(format!("report{run}.json"));
        std::fs::write(&report_path, serde_json::to_string_pretty(&report).unwrap()).unwrap();
        files.push((ckpt, report_path));
    }
    let ckpt_a = std::fs::read(&files[0].0).unwrap();
    let ckpt_b = std::fs::read(&files[1].0).unwrap();
    assert_eq!(ckpt_a, ckpt_b, "[FAIL] criterion 7: checkpoints differ");
    let rep_a = std::fs::read(&files[0].1).unwrap();
    let rep_b = std::fs::read(&files[1].1).unwrap();
    assert_eq!(rep_a, rep_b, "[FAIL] criterion 7: reports differ");
    println!(
        "[PASS] criterion 7: determinism — identical seed/config/data produce byte-identical \
         checkpoints ({} bytes) and reports ({} bytes)",
        ckpt_a.len(),
        rep_a.len()
    );
}

