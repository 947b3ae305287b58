//! Encode a syntactic graph with a randomly initialized encoder and
//! inspect the node and graph embeddings, including the permutation
//! invariance of the pooled graph embedding.

use graph2seq::corpus::{build_vocab, parse_parallel_corpus};
use graph2seq::encoder::{encode, EncoderConfig, EncoderParams, Pooling};
use graph2seq::graph::{build_syntactic_graph, FeatureFlags};
use graph2seq::tensor::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let examples = parse_parallel_corpus("what jobs use java\tanswer ( J )").unwrap();
    let ex = &examples[0];
    let (vocab, _) = build_vocab(&examples, 1);

    let cfg = EncoderConfig {
        k_hops: 3,
        embed_dim: 8,
        hidden: 8,
        pooling: Pooling::Max,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let params = EncoderParams::init(&cfg, &mut rng);
    let embed = Tensor::rand_uniform(&mut rng, vocab.len(), cfg.embed_dim, -0.08, 0.08);

    let g = build_syntactic_graph(ex, FeatureFlags::word_order_only()).unwrap();
    let encoded = encode(&params, &embed, &g, &vocab, &cfg);
    println!(
        "graph: {} nodes, {} edges; node embeddings {}x{}",
        g.node_count(),
        g.edge_count(),
        encoded.node_embeddings.rows(),
        encoded.node_embeddings.cols()
    );
    for node in g.nodes() {
        let row = encoded.node_embeddings.row(node.id);
        println!("  {:<6} -> [{:+.3e} {:+.3e} ...]", node.text, row[0], row[1]);
    }
    println!(
        "graph embedding: [{:+.3e} {:+.3e} {:+.3e} ...]",
        encoded.graph_embedding.get(0, 0),
        encoded.graph_embedding.get(0, 1),
        encoded.graph_embedding.get(0, 2)
    );

    // Reversing the sentence relabels every node; the pooled graph
    // embedding of an isomorphic graph is bit-identical.
    let reversed = parse_parallel_corpus("java use jobs what\tanswer ( J )").unwrap();
    let g2 = build_syntactic_graph(&reversed[0], FeatureFlags::word_order_only()).unwrap();
    let encoded2 = encode(&params, &embed, &g2, &vocab, &cfg);
    println!(
        "reversed-sentence graph embedding identical: {}",
        encoded.graph_embedding == encoded2.graph_embedding
    );
}
