//! A small self-contained job-search grammar for end-to-end runs:
//! templated questions paired with compositional logical forms, plus
//! synthetic dependency and constituency parses emitted in the same
//! file formats the loaders accept. No external data needed.

use crate::corpus::{
    attach_parses, parse_bracketed_tree, parse_conllu, parse_parallel_corpus, Example,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use std::fs;
use std::io;
use std::path::Path;

const LANGS: &[&str] = &[
    "java", "c++", "python", "cobol", "prolog", "lisp", "haskell", "fortran",
];
const AREAS: &[&str] = &["ai", "databases", "networking", "graphics", "security", "robotics"];
const SALARIES: &[&str] = &["30000", "40000", "50000", "60000"];
const CITIES: &[&str] = &["boston", "austin", "seattle", "denver"];

/// One generated record: aligned question/logic, CoNLL-U block and
/// bracketed tree, all as text in the standard file formats.
struct Record {
    pair: String,
    conllu: String,
    bracket: String,
}

fn record(question: &str, logic: &str, heads: &[(usize, &str)], bracket: &str) -> Record {
    // heads[i] = (1-based head, label) for token i.
    let conllu: String = question
        .split_whitespace()
        .enumerate()
        .map(|(i, form)| format!("{}\t{}\t{}\t{}\n", i + 1, form, heads[i].0, heads[i].1))
        .collect();
    Record {
        pair: format!("{question}\t{logic}"),
        conllu,
        bracket: bracket.to_string(),
    }
}

fn sample_record<R: Rng>(rng: &mut R) -> Record {
    let lang = LANGS[rng.gen_range(0..LANGS.len())];
    let area = AREAS[rng.gen_range(0..AREAS.len())];
    let salary = SALARIES[rng.gen_range(0..SALARIES.len())];
    let city = CITIES[rng.gen_range(0..CITIES.len())];
    match rng.gen_range(0..7) {
        0 => record(
            &format!("list jobs using {lang}"),
            &format!("answer ( J , job ( J ) , language ( J , {lang} ) )"),
            &[(0, "root"), (1, "obj"), (2, "acl"), (3, "obj")],
            &format!("(S (VB list) (NP (NNS jobs) (VP (VBG using) (NN {lang}))))"),
        ),
        1 => record(
            &format!("list jobs in {area}"),
            &format!("answer ( J , job ( J ) , area ( J , {area} ) )"),
            &[(0, "root"), (1, "obj"), (4, "case"), (2, "nmod")],
            &format!("(S (VB list) (NP (NNS jobs) (PP (IN in) (NN {area}))))"),
        ),
        2 => record(
            &format!("what jobs use {lang} in {area}"),
            &format!("answer ( J , job ( J ) , language ( J , {lang} ) , area ( J , {area} ) )"),
            &[
                (2, "det"),
                (3, "nsubj"),
                (0, "root"),
                (3, "obj"),
                (6, "case"),
                (3, "nmod"),
            ],
            &format!(
                "(S (NP (WP what) (NNS jobs)) (VP (VBP use) (NN {lang}) (PP (IN in) (NN {area}))))"
            ),
        ),
        3 => record(
            &format!("list jobs using {lang} not in {area}"),
            &format!(
                "answer ( J , job ( J ) , language ( J , {lang} ) , not ( area ( J , {area} ) ) )"
            ),
            &[
                (0, "root"),
                (1, "obj"),
                (2, "acl"),
                (3, "obj"),
                (7, "advmod"),
                (7, "case"),
                (2, "nmod"),
            ],
            &format!(
                "(S (VB list) (NP (NNS jobs) (VP (VBG using) (NN {lang})) (PP (RB not) (IN in) (NN {area}))))"
            ),
        ),
        4 => record(
            &format!("what jobs pay {salary}"),
            &format!("answer ( J , job ( J ) , salary ( J , {salary} ) )"),
            &[(2, "det"), (3, "nsubj"), (0, "root"), (3, "obj")],
            &format!("(S (NP (WP what) (NNS jobs)) (VP (VBP pay) (CD {salary})))"),
        ),
        5 => record(
            &format!("list jobs located in {city}"),
            &format!("answer ( J , job ( J ) , loc ( J , {city} ) )"),
            &[(0, "root"), (1, "obj"), (2, "acl"), (5, "case"), (3, "obl")],
            &format!("(S (VB list) (NP (NNS jobs) (VP (VBN located) (PP (IN in) (NN {city})))))"),
        ),
        _ => record(
            &format!("what jobs use {lang} and pay {salary}"),
            &format!(
                "answer ( J , job ( J ) , language ( J , {lang} ) , salary ( J , {salary} ) )"
            ),
            &[
                (2, "det"),
                (3, "nsubj"),
                (0, "root"),
                (3, "obj"),
                (6, "cc"),
                (3, "conj"),
                (6, "obj"),
            ],
            &format!(
                "(S (NP (WP what) (NNS jobs)) (VP (VP (VBP use) (NN {lang})) (CC and) (VP (VBP pay) (CD {salary}))))"
            ),
        ),
    }
}

/// The rendered dataset files for one split.
pub struct SplitFiles {
    /// Tab-separated question/logic pairs, one per line.
    pub corpus: String,
    /// Blank-line-separated CoNLL-U blocks, aligned 1:1.
    pub dependencies: String,
    /// One bracketed tree per line, aligned 1:1.
    pub constituencies: String,
}

/// A generated split, both as parsed examples and as file text.
pub struct ToySplit {
    pub examples: Vec<Example>,
    pub files: SplitFiles,
}

pub struct ToyDataset {
    pub train: ToySplit,
    pub dev: ToySplit,
}

fn build_split(records: Vec<Record>) -> ToySplit {
    let corpus_text: String = records.iter().map(|r| format!("{}\n", r.pair)).collect();
    let dep_text: String = records
        .iter()
        .map(|r| format!("{}\n", r.conllu))
        .collect::<Vec<_>>()
        .join("");
    let cons_text: String = records.iter().map(|r| format!("{}\n", r.bracket)).collect();

    let mut examples = parse_parallel_corpus(&corpus_text).expect("generated corpus is well-formed");
    let deps = records
        .iter()
        .map(|r| parse_conllu(&r.conllu).expect("generated parse is well-formed"))
        .collect();
    let cons = records
        .iter()
        .map(|r| parse_bracketed_tree(&r.bracket).expect("generated tree is well-formed"))
        .collect();
    attach_parses(&mut examples, Some(deps), Some(cons)).expect("generated data is aligned");

    ToySplit {
        examples,
        files: SplitFiles {
            corpus: corpus_text,
            dependencies: dep_text,
            constituencies: cons_text,
        },
    }
}

/// Generate `train` + `dev` examples with a seeded RNG. Dev examples
/// come from the same template distribution.
pub fn generate(train: usize, dev: usize, seed: u64) -> ToyDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let train_records: Vec<Record> = (0..train).map(|_| sample_record(&mut rng)).collect();
    let dev_records: Vec<Record> = (0..dev).map(|_| sample_record(&mut rng)).collect();
    ToyDataset {
        train: build_split(train_records),
        dev: build_split(dev_records),
    }
}

impl ToySplit {
    /// Write `<name>.tsv`, `<name>.dep` and `<name>.cons` under `dir`.
    pub fn write_files(&self, dir: &Path, name: &str) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(format!("{name}.tsv")), &self.files.corpus)?;
        fs::write(dir.join(format!("{name}.dep")), &self.files.dependencies)?;
        fs::write(dir.join(format!("{name}.cons")), &self.files.constituencies)?;
        Ok(())
    }
}
