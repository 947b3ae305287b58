//! SWAP-noise walkthrough: eligibility against a logical form, the
//! perturbation itself, and its reproducibility under a fixed seed.

use graph2seq::adversarial::{eligible_words, perturb_example, SwapConfig};
use graph2seq::corpus::parse_parallel_corpus;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let ex = parse_parallel_corpus(
        "what are the jobs for programmer that uses c++ and not related with ai\t\
         answer ( J , job ( J ) , language ( J , 'c++' ) , not ( area ( J , ai ) ) )",
    )
    .unwrap()
    .remove(0);

    let eligible = eligible_words(&ex.tokens, &ex.logic);
    println!("question: {}", ex.surfaces().join(" "));
    println!("eligible token indices (safe to perturb): {eligible:?}");
    for tok in &ex.tokens {
        let mark = if eligible.contains(&tok.index) { " " } else { "*" };
        println!("  {mark} {:>2} {}", tok.index, tok.surface);
    }
    println!("(* = protected: appears in the logical form or too short to swap)\n");

    for m in 1..=3 {
        let cfg = SwapConfig::new(m, 42).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let (perturbed, outcome) = perturb_example(&ex, &cfg, &mut rng);
        println!("m={m}: {}", perturbed.surfaces().join(" "));
        for swap in &outcome.swaps {
            println!(
                "      token {} letters {}-{} transposed",
                swap.token_index,
                swap.char_pos,
                swap.char_pos + 1
            );
        }
    }

    // Identical seeds reproduce identical perturbations.
    let cfg = SwapConfig::new(2, 7).unwrap();
    let mut r1 = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut r2 = ChaCha8Rng::seed_from_u64(cfg.seed);
    let a = perturb_example(&ex, &cfg, &mut r1).0;
    let b = perturb_example(&ex, &cfg, &mut r2).0;
    println!("\nseeded reproducibility: {}", a == b);
}
