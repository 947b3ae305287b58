//! Train on the toy grammar end to end and report dev exact-match
//! accuracy. Small dimensions keep this to roughly a minute.
//!
//! Usage: cargo run --release --example train_toy -- [train] [dev] [epochs]

use graph2seq::graph::FeatureFlags;
use graph2seq::harness::{evaluate_exact_match, train, TrainConfig};
use graph2seq::toy;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let n_train: usize = args.get(1).map(|v| v.parse().unwrap()).unwrap_or(200);
    let n_dev: usize = args.get(2).map(|v| v.parse().unwrap()).unwrap_or(50);
    let epochs: usize = args.get(3).map(|v| v.parse().unwrap()).unwrap_or(60);

    let data = toy::generate(n_train, n_dev, 1);
    let cfg = TrainConfig {
        k_hops: 3,
        embed_dim: 48,
        hidden: 48,
        max_len: 40,
        epochs,
        patience: 12,
        seed: 1,
        flags: FeatureFlags::all(),
        ..TrainConfig::default()
    };

    println!(
        "training on {} examples, validating on {} (K={}, d={}, beam={})",
        n_train, n_dev, cfg.k_hops, cfg.embed_dim, cfg.beam
    );
    let (model, report) = train(&cfg, &data.train.examples, &data.dev.examples).unwrap();
    for e in report.epochs.iter().filter(|e| e.epoch % 5 == 0 || e.epoch == 1) {
        println!(
            "epoch {:>3}: train loss {:.4}, dev accuracy {:.3}",
            e.epoch, e.train_loss, e.dev_accuracy
        );
    }
    println!(
        "best dev accuracy {:.3} at epoch {} ({:.0}s)",
        report.best_dev_accuracy, report.best_epoch, report.wall_time_secs
    );

    let final_acc = evaluate_exact_match(&model, &data.dev.examples).unwrap();
    println!("reloaded-best dev accuracy: {final_acc:.3}");

    // Show a decode next to its gold logical form.
    let ex = &data.dev.examples[0];
    let g = graph2seq::build_syntactic_graph(ex, model.config.flags).unwrap();
    println!("\nquestion : {}", ex.surfaces().join(" "));
    println!("gold     : {}", ex.logic.join(" "));
    println!("predicted: {}", model.predict_tokens(&g).join(" "));
}
