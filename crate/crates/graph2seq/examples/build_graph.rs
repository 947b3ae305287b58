//! Build a syntactic graph from an in-memory example and print it as
//! JSON, showing how word-order, dependency and constituency features
//! combine and how labeled edges become label nodes.

use graph2seq::corpus::{attach_parses, parse_bracketed_tree, parse_conllu, parse_parallel_corpus};
use graph2seq::graph::{build_syntactic_graph, serialize_graph, FeatureFlags};

fn main() {
    let mut examples =
        parse_parallel_corpus("list jobs using java\tanswer ( J , job ( J ) , language ( J , java ) )")
            .unwrap();
    let dep = parse_conllu("1 list 0 root\n2 jobs 1 obj\n3 using 2 acl\n4 java 3 obj").unwrap();
    let cons = parse_bracketed_tree("(S (VB list) (NP (NNS jobs) (VP (VBG using) (NN java))))").unwrap();
    attach_parses(&mut examples, Some(vec![dep]), Some(vec![cons])).unwrap();
    let ex = &examples[0];

    for flags in [
        FeatureFlags::word_order_only(),
        FeatureFlags {
            word_order: true,
            dependency: true,
            constituency: false,
        },
        FeatureFlags::all(),
    ] {
        let g = build_syntactic_graph(ex, flags).unwrap();
        println!(
            "# {}: {} nodes, {} edges",
            flags.describe(),
            g.node_count(),
            g.edge_count()
        );
        println!("{}", serialize_graph(&g));
        println!();
    }

    let g = build_syntactic_graph(ex, FeatureFlags::all()).unwrap();
    println!("# forward/backward neighbourhoods");
    for node in g.nodes() {
        println!(
            "node {:>2} {:12} ({:?}): forward {:?}, backward {:?}",
            node.id,
            node.text,
            node.kind,
            g.neighbors_forward(node.id),
            g.neighbors_backward(node.id)
        );
    }
}
