//! Generate the in-repo toy grammar dataset (corpus + dependency +
//! constituency files) into a directory.
//!
//! Usage: cargo run --example generate_toy_data -- [outdir] [train] [dev] [seed]

use graph2seq::toy;

fn main() -> std::io::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let outdir = args.get(1).map(String::as_str).unwrap_or("toy_data");
    let train: usize = args.get(2).map(|v| v.parse().unwrap()).unwrap_or(500);
    let dev: usize = args.get(3).map(|v| v.parse().unwrap()).unwrap_or(100);
    let seed: u64 = args.get(4).map(|v| v.parse().unwrap()).unwrap_or(1);

    let data = toy::generate(train, dev, seed);
    let dir = std::path::Path::new(outdir);
    data.train.write_files(dir, "train")?;
    data.dev.write_files(dir, "dev")?;
    println!(
        "wrote {} train / {} dev examples to {}/",
        data.train.examples.len(),
        data.dev.examples.len(),
        outdir
    );
    println!("files: train.tsv train.dep train.cons dev.tsv dev.dep dev.cons");
    Ok(())
}
