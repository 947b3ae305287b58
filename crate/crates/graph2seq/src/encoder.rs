//! Graph encoder: bidirectional K-hop neighbour aggregation with
//! max-pooling aggregators, plus the pooled graph embedding.
//!
//! Each node starts from its text-attribute embedding. At every hop a
//! node's forward state aggregates the previous forward states of its
//! forward neighbours (a fully-connected layer followed by an
//! element-wise max), is concatenated with the node's own previous
//! state and passed through an update layer; backward states mirror
//! the procedure over backward neighbours with a disjoint parameter
//! bank. Aggregators are distinct per hop and per direction. The final
//! node embedding concatenates both directions, and the graph
//! embedding pools fully-connected outputs over all nodes.

use crate::corpus::Vocab;
use crate::graph::SyntacticGraph;
use crate::tensor::{Tape, Tensor, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Pooling used for the graph embedding; node aggregation always uses
/// element-wise max.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    Max,
    Mean,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    /// Number of aggregation iterations K.
    pub k_hops: usize,
    /// Word-embedding dimension d.
    pub embed_dim: usize,
    /// Aggregator and update width; also the per-direction state size.
    pub hidden: usize,
    /// Graph-embedding pooling variant.
    pub pooling: Pooling,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            k_hops: 10,
            embed_dim: 300,
            hidden: 300,
            pooling: Pooling::Max,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) {
        assert!(self.k_hops >= 1, "k_hops must be at least 1");
        assert!(self.embed_dim > 0 && self.hidden > 0, "dimensions must be positive");
    }

    /// Input width of hop `k` (0-based): node features at the first
    /// hop, the hidden state afterwards.
    fn hop_input_dim(&self, k: usize) -> usize {
        if k == 0 {
            self.embed_dim
        } else {
            self.hidden
        }
    }

    /// Width of the final per-node embedding (both directions).
    pub fn node_embedding_dim(&self) -> usize {
        2 * self.hidden
    }
}

/// Weights for one hop of one direction: the pooling layer applied to
/// each neighbour and the update layer applied to the concatenation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HopParams {
    pub pool_w: Tensor,
    pub pool_b: Tensor,
    pub upd_w: Tensor,
    pub upd_b: Tensor,
}

impl HopParams {
    fn init<R: Rng>(cfg: &EncoderConfig, k: usize, rng: &mut R) -> Self {
        let din = cfg.hop_input_dim(k);
        let h = cfg.hidden;
        HopParams {
            pool_w: Tensor::rand_uniform(rng, din, h, -0.08, 0.08),
            pool_b: Tensor::zeros(1, h),
            upd_w: Tensor::rand_uniform(rng, din + h, h, -0.08, 0.08),
            upd_b: Tensor::zeros(1, h),
        }
    }
}

/// All encoder weights: one [`HopParams`] per hop per direction
/// (never shared) plus the graph-embedding layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    pub forward: Vec<HopParams>,
    pub backward: Vec<HopParams>,
    pub graph_w: Tensor,
    pub graph_b: Tensor,
}

impl EncoderParams {
    pub fn init<R: Rng>(cfg: &EncoderConfig, rng: &mut R) -> Self {
        cfg.validate();
        let forward = (0..cfg.k_hops).map(|k| HopParams::init(cfg, k, rng)).collect();
        let backward = (0..cfg.k_hops).map(|k| HopParams::init(cfg, k, rng)).collect();
        EncoderParams {
            forward,
            backward,
            graph_w: Tensor::rand_uniform(rng, cfg.node_embedding_dim(), cfg.hidden, -0.08, 0.08),
            graph_b: Tensor::zeros(1, cfg.hidden),
        }
    }

    pub fn named(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (dir, hops) in [("fwd", &self.forward), ("bwd", &self.backward)] {
            for (k, hop) in hops.iter().enumerate() {
                out.push((format!("enc.{dir}.h{k}.pool_w"), &hop.pool_w));
                out.push((format!("enc.{dir}.h{k}.pool_b"), &hop.pool_b));
                out.push((format!("enc.{dir}.h{k}.upd_w"), &hop.upd_w));
                out.push((format!("enc.{dir}.h{k}.upd_b"), &hop.upd_b));
            }
        }
        out.push(("enc.graph_w".to_string(), &self.graph_w));
        out.push(("enc.graph_b".to_string(), &self.graph_b));
        out
    }

    pub fn named_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = Vec::new();
        for (dir, hops) in [("fwd", &mut self.forward), ("bwd", &mut self.backward)] {
            for (k, hop) in hops.iter_mut().enumerate() {
                out.push((format!("enc.{dir}.h{k}.pool_w"), &mut hop.pool_w));
                out.push((format!("enc.{dir}.h{k}.pool_b"), &mut hop.pool_b));
                out.push((format!("enc.{dir}.h{k}.upd_w"), &mut hop.upd_w));
                out.push((format!("enc.{dir}.h{k}.upd_b"), &mut hop.upd_b));
            }
        }
        out.push(("enc.graph_w".to_string(), &mut self.graph_w));
        out.push(("enc.graph_b".to_string(), &mut self.graph_b));
        out
    }
}

/// Encoder weights bound onto a tape.
pub struct BoundHop {
    pub pool_w: Var,
    pub pool_b: Var,
    pub upd_w: Var,
    pub upd_b: Var,
}

pub struct BoundEncoder {
    pub forward: Vec<BoundHop>,
    pub backward: Vec<BoundHop>,
    pub graph_w: Var,
    pub graph_b: Var,
}

impl BoundEncoder {
    pub fn bind(tape: &Tape, params: &EncoderParams) -> Self {
        let bind_hop = |hop: &HopParams| BoundHop {
            pool_w: tape.var(hop.pool_w.clone()),
            pool_b: tape.var(hop.pool_b.clone()),
            upd_w: tape.var(hop.upd_w.clone()),
            upd_b: tape.var(hop.upd_b.clone()),
        };
        BoundEncoder {
            forward: params.forward.iter().map(bind_hop).collect(),
            backward: params.backward.iter().map(bind_hop).collect(),
            graph_w: tape.var(params.graph_w.clone()),
            graph_b: tape.var(params.graph_b.clone()),
        }
    }
}

/// Per-node feature vectors `a_v`: the embedding row of each node's
/// text attribute (word surface, dependency label or constituent
/// label), with UNK fallback. Output is `|V| x d` in node-id order.
pub fn init_node_features(tape: &Tape, embed: Var, g: &SyntacticGraph, vocab: &Vocab) -> Var {
    let ids: Vec<usize> = g
        .nodes()
        .iter()
        .map(|n| vocab.id(&n.text) as usize)
        .collect();
    tape.gather_rows(embed, &ids)
}

/// Aggregate a neighbour set into a single vector: each neighbour
/// state goes through the hop's fully-connected pooling layer with
/// ReLU, followed by an element-wise max. `None` (an empty neighbour
/// set) aggregates to the zero vector.
pub fn aggregate_neighbors(
    tape: &Tape,
    hop: &BoundHop,
    neighbor_states: Option<Var>,
    hidden: usize,
) -> Var {
    match neighbor_states {
        None => tape.zeros(1, hidden),
        Some(states) => {
            let pooled = tape.relu(tape.add_row(tape.matmul(states, hop.pool_w), hop.pool_b));
            tape.max_pool_rows(pooled)
        }
    }
}

/// Update node states: ReLU of the update layer applied to the
/// concatenation of the previous state and the aggregated
/// neighbourhood. Works row-wise, so it accepts the whole `|V| x din`
/// state matrix at once.
pub fn update_node_state(tape: &Tape, hop: &BoundHop, prev: Var, aggregated: Var) -> Var {
    let cat = tape.concat_cols(&[prev, aggregated]);
    tape.relu(tape.add_row(tape.matmul(cat, hop.upd_w), hop.upd_b))
}

#[derive(Clone, Copy)]
enum Direction {
    Forward,
    Backward,
}

/// One hop of one direction over every node. The pooling layer is
/// applied to the full state matrix once; each node then max-pools its
/// neighbours' rows. Row-wise this computes exactly what
/// [`aggregate_neighbors`] computes per node.
fn hop_all_nodes(
    tape: &Tape,
    hop: &BoundHop,
    g: &SyntacticGraph,
    states: Var,
    dir: Direction,
    hidden: usize,
) -> Var {
    let pooled = tape.relu(tape.add_row(tape.matmul(states, hop.pool_w), hop.pool_b));
    let mut rows = Vec::with_capacity(g.node_count());
    for v in 0..g.node_count() {
        let neighbors = match dir {
            Direction::Forward => g.neighbors_forward(v),
            Direction::Backward => g.neighbors_backward(v),
        };
        if neighbors.is_empty() {
            rows.push(tape.zeros(1, hidden));
        } else {
            rows.push(tape.max_pool_rows(tape.gather_rows(pooled, neighbors)));
        }
    }
    let aggregated = tape.concat_rows(&rows);
    update_node_state(tape, hop, states, aggregated)
}

/// Node and graph embeddings produced on a tape.
pub struct EncodedVars {
    /// `|V| x 2*hidden`: concatenated final forward/backward states.
    pub node_embeddings: Var,
    /// `1 x hidden` pooled graph embedding.
    pub graph_embedding: Var,
}

/// Run the full K-hop encoder over a graph whose initial features are
/// already on the tape. Forward and backward directions never mix
/// until the final concatenation.
pub fn encode_on_tape(
    tape: &Tape,
    enc: &BoundEncoder,
    g: &SyntacticGraph,
    features: Var,
    cfg: &EncoderConfig,
) -> EncodedVars {
    assert!(g.node_count() >= 1, "cannot encode an empty graph");
    assert_eq!(enc.forward.len(), cfg.k_hops, "hop parameter count mismatch");
    let mut fwd = features;
    let mut bwd = features;
    for k in 0..cfg.k_hops {
        fwd = hop_all_nodes(tape, &enc.forward[k], g, fwd, Direction::Forward, cfg.hidden);
        bwd = hop_all_nodes(tape, &enc.backward[k], g, bwd, Direction::Backward, cfg.hidden);
    }
    let node_embeddings = tape.concat_cols(&[fwd, bwd]);
    let graph_embedding = graph_embedding_on_tape(tape, enc, node_embeddings, cfg.pooling);
    EncodedVars {
        node_embeddings,
        graph_embedding,
    }
}

/// Pool node embeddings into one graph vector: a fully-connected layer
/// with ReLU per node, then element-wise max (or mean) over nodes.
pub fn graph_embedding_on_tape(
    tape: &Tape,
    enc: &BoundEncoder,
    node_embeddings: Var,
    pooling: Pooling,
) -> Var {
    let h = tape.relu(tape.add_row(tape.matmul(node_embeddings, enc.graph_w), enc.graph_b));
    match pooling {
        Pooling::Max => tape.max_pool_rows(h),
        Pooling::Mean => tape.mean_pool_rows(h),
    }
}

/// Concrete (value-level) encoding of one graph, for inference.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedGraph {
    pub node_embeddings: Tensor,
    pub graph_embedding: Tensor,
}

/// Encode a graph outside any training tape.
pub fn encode(
    params: &EncoderParams,
    embed: &Tensor,
    g: &SyntacticGraph,
    vocab: &Vocab,
    cfg: &EncoderConfig,
) -> EncodedGraph {
    let tape = Tape::new();
    let bound = BoundEncoder::bind(&tape, params);
    let embed_var = tape.var(embed.clone());
    let features = init_node_features(&tape, embed_var, g, vocab);
    let encoded = encode_on_tape(&tape, &bound, g, features, cfg);
    EncodedGraph {
        node_embeddings: tape.value(encoded.node_embeddings),
        graph_embedding: tape.value(encoded.graph_embedding),
    }
}
