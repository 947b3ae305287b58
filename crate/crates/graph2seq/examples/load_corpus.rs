//! Exercise the corpus loaders: parallel pairs, CoNLL-U dependency
//! blocks, bracketed trees, vocabulary construction and pretrained
//! embedding ingestion.

use graph2seq::corpus::{
    build_vocab, parse_bracketed_tree, parse_conllu, parse_parallel_corpus,
    parse_pretrained_embeddings, attach_parses,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let corpus = "list jobs\tanswer ( J , job ( J ) )\n\
                  what jobs use java\tanswer ( J , job ( J ) , language ( J , java ) )\n";
    let mut examples = parse_parallel_corpus(corpus).unwrap();
    println!("loaded {} examples", examples.len());

    let deps = vec![
        parse_conllu("1 list 0 root\n2 jobs 1 obj").unwrap(),
        parse_conllu("1 what 2 det\n2 jobs 3 nsubj\n3 use 0 root\n4 java 3 obj").unwrap(),
    ];
    let cons = vec![
        parse_bracketed_tree("(S (VB list) (NP (NNS jobs)))").unwrap(),
        parse_bracketed_tree("(S (NP (WP what) (NNS jobs)) (VP (VBP use) (NN java)))").unwrap(),
    ];
    attach_parses(&mut examples, Some(deps), Some(cons)).unwrap();
    for ex in &examples {
        println!(
            "  {:?} | {} arcs, {} non-terminals",
            ex.surfaces().join(" "),
            ex.dep.as_ref().unwrap().arcs().len(),
            ex.cons.as_ref().unwrap().non_terminal_count()
        );
    }

    let (src, tgt) = build_vocab(&examples, 1);
    println!(
        "source vocab {} entries (words + dependency labels + constituent labels), target vocab {}",
        src.len(),
        tgt.len()
    );
    println!("  id(\"jobs\") = {}, id(\"det\") = {}, id(\"NP\") = {}",
        src.id("jobs"), src.id("det"), src.id("NP"));

    // Pretrained vectors: rows found in the file are copied, the rest
    // stay at their uniform initialization.
    let vectors = "jobs 0.1 0.2 0.3\njava -0.5 0.5 0.0\nunrelated 9 9 9\n";
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (embed, covered) = parse_pretrained_embeddings(vectors, &src, 3, &mut rng).unwrap();
    println!(
        "embedding matrix {}x{}, {covered} vocab tokens covered by the file",
        embed.vocab_size(),
        embed.dim()
    );
    println!("  row(\"jobs\") = {:?}", embed.weights.row(src.id("jobs") as usize));
}
