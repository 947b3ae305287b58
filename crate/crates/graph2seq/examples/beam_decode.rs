//! Decode from an untrained model to show the beam-search machinery:
//! beam=1 matches greedy, and wider beams explore alternatives.

use graph2seq::corpus::{build_vocab, parse_parallel_corpus};
use graph2seq::decoder::{beam_search_full, greedy_decode};
use graph2seq::graph::{build_syntactic_graph, FeatureFlags};
use graph2seq::harness::TrainConfig;
use graph2seq::model::Model;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let examples =
        parse_parallel_corpus("list jobs using java\tanswer ( J , job ( J ) )").unwrap();
    let (src, tgt) = build_vocab(&examples, 1);
    let cfg = TrainConfig {
        k_hops: 2,
        embed_dim: 8,
        hidden: 8,
        max_len: 6,
        flags: FeatureFlags::word_order_only(),
        ..TrainConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let model = Model::init(cfg.model_config(), src, tgt, &mut rng);

    let g = build_syntactic_graph(&examples[0], model.config.flags).unwrap();
    let encoded = model.encode(&g);

    let greedy = greedy_decode(&model.params.decoder, &encoded, &model.config.decoder);
    println!("greedy : {:?}", render(&model, &greedy));

    for beam in [1, 3, 8] {
        let mut dec_cfg = model.config.decoder;
        dec_cfg.beam = beam;
        let hyp = beam_search_full(&model.params.decoder, &encoded, &dec_cfg);
        println!(
            "beam={beam}: {:?} (log-prob {:.4}, terminated: {})",
            render(&model, &hyp.tokens),
            hyp.log_prob,
            hyp.terminated
        );
    }
}

fn render(model: &Model, ids: &[u32]) -> Vec<String> {
    ids.iter()
        .map(|&id| model.tgt_vocab.token(id).to_string())
        .collect()
}
