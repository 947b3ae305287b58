//! Corpus ingestion: parallel (question, logical form) files,
//! CoNLL-U-style dependency blocks, bracketed constituent trees,
//! pretrained word vectors and vocabulary construction.
//!
//! Parses are always ingested from files, never computed, which keeps
//! the pipeline self-contained; the expected file layouts are
//! documented on each loader.

use crate::tensor::Tensor;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("cannot read `{path}`: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: expected 2 tab-separated fields, found {found}")]
    FieldCount { line: usize, found: usize },
    #[error("line {line}: empty logical form")]
    EmptyLogic { line: usize },
    #[error("line {line}: expected {expected} columns, found {found}")]
    ColumnCount {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: non-numeric {what} `{text}`")]
    NonNumeric {
        line: usize,
        what: &'static str,
        text: String,
    },
    #[error("line {line}: head index {head} out of range for sentence of length {len}")]
    HeadOutOfRange { line: usize, head: usize, len: usize },
    #[error("line {line}: duplicate dependent index {index}")]
    DuplicateDependent { line: usize, index: usize },
    #[error("line {line}: token indices must be consecutive from 1, found {found}")]
    NonConsecutiveIndex { line: usize, found: usize },
    #[error("unbalanced parentheses in bracketed tree")]
    UnbalancedParens,
    #[error("empty non-terminal in bracketed tree")]
    EmptyNonTerminal,
    #[error("trailing input after bracketed tree: `{0}`")]
    TrailingInput(String),
    #[error("sentence {index}: {source}")]
    Sentence {
        index: usize,
        #[source]
        source: Box<CorpusError>,
    },
    #[error("{what}: expected {expected} entries aligned with the corpus, found {found}")]
    Misaligned {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("sentence {index}: parse covers {parse_len} tokens but the sentence has {sentence_len}")]
    ParseLengthMismatch {
        index: usize,
        parse_len: usize,
        sentence_len: usize,
    },
    #[error("line {line}: embedding row has {found} values, expected {expected}")]
    DimensionMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },
}

fn read(path: &Path) -> Result<String, CorpusError> {
    fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })
}

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

/// One word of a question, with its 0-based position.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub index: usize,
}

/// One dependency arc; `head = None` marks the ROOT sentinel.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DepArc {
    pub head: Option<usize>,
    pub dependent: usize,
    pub label: String,
}

/// A dependency parse as a list of arcs over 0-based token indices.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DependencyParse {
    arcs: Vec<DepArc>,
    len: usize,
}

impl DependencyParse {
    /// Validates that every dependent appears at most once, indices are
    /// in range and labels are non-empty.
    pub fn new(arcs: Vec<DepArc>, len: usize) -> Result<Self, CorpusError> {
        let mut seen = HashSet::new();
        for (i, arc) in arcs.iter().enumerate() {
            if !seen.insert(arc.dependent) {
                return Err(CorpusError::DuplicateDependent {
                    line: i + 1,
                    index: arc.dependent,
                });
            }
            if arc.dependent >= len || arc.head.is_some_and(|h| h >= len) {
                return Err(CorpusError::HeadOutOfRange {
                    line: i + 1,
                    head: arc.head.unwrap_or(arc.dependent),
                    len,
                });
            }
            assert!(!arc.label.is_empty(), "dependency labels must be non-empty");
        }
        Ok(DependencyParse { arcs, len })
    }

    pub fn arcs(&self) -> &[DepArc] {
        &self.arcs
    }

    /// Sentence length the parse was built over.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Arcs whose head is a word (ROOT arcs excluded).
    pub fn non_root_arcs(&self) -> impl Iterator<Item = &DepArc> {
        self.arcs.iter().filter(|a| a.head.is_some())
    }
}

/// Child of a constituent-tree node: either another non-terminal or a
/// token index at the leaf frontier.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TreeChild {
    NonTerminal(usize),
    Leaf(usize),
}

/// A phrase-structure tree. Non-terminals are stored in post-order;
/// leaves are 0-based token indices in left-to-right order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstituentTree {
    labels: Vec<String>,
    children: Vec<Vec<TreeChild>>,
    root: usize,
    leaf_count: usize,
}

impl ConstituentTree {
    /// Validates the single-root / non-empty-children / leaf-coverage
    /// invariants for a hand-built tree.
    pub fn new(
        labels: Vec<String>,
        children: Vec<Vec<TreeChild>>,
        root: usize,
    ) -> Result<Self, CorpusError> {
        assert_eq!(labels.len(), children.len(), "labels/children length mismatch");
        assert!(root < labels.len(), "root index out of range");
        if labels.iter().any(|l| l.is_empty()) || children.iter().any(|c| c.is_empty()) {
            return Err(CorpusError::EmptyNonTerminal);
        }
        let mut tree = ConstituentTree {
            labels,
            children,
            root,
            leaf_count: 0,
        };
        let leaves = tree.leaves_in_order();
        for (expect, got) in leaves.iter().enumerate() {
            assert_eq!(*got, expect, "leaves must be consecutive token indices");
        }
        tree.leaf_count = leaves.len();
        Ok(tree)
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn label(&self, nt: usize) -> &str {
        &self.labels[nt]
    }

    pub fn children(&self, nt: usize) -> &[TreeChild] {
        &self.children[nt]
    }

    pub fn non_terminal_count(&self) -> usize {
        self.labels.len()
    }

    /// Total number of parent->child links.
    pub fn tree_edge_count(&self) -> usize {
        self.children.iter().map(Vec::len).sum()
    }

    pub fn leaf_count(&self) -> usize {
        self.leaf_count
    }

    /// Token indices in left-to-right traversal order.
    pub fn leaves_in_order(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.collect_leaves(self.root, &mut out);
        out
    }

    fn collect_leaves(&self, nt: usize, out: &mut Vec<usize>) {
        for child in &self.children[nt] {
            match child {
                TreeChild::Leaf(tok) => out.push(*tok),
                TreeChild::NonTerminal(c) => self.collect_leaves(*c, out),
            }
        }
    }
}

/// One parallel training example.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub tokens: Vec<Token>,
    pub logic: Vec<String>,
    pub dep: Option<DependencyParse>,
    pub cons: Option<ConstituentTree>,
}

impl Example {
    pub fn surfaces(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.surface.as_str()).collect()
    }
}

// ---------------------------------------------------------------------------
// Parallel corpus
// ---------------------------------------------------------------------------

/// Parse corpus text: one example per line, TAB between the
/// whitespace-tokenized question and logical form.
pub fn parse_parallel_corpus(text: &str) -> Result<Vec<Example>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 2 {
            return Err(CorpusError::FieldCount {
                line: i + 1,
                found: fields.len(),
            });
        }
        let tokens: Vec<Token> = fields[0]
            .split_whitespace()
            .enumerate()
            .map(|(index, surface)| Token {
                surface: surface.to_string(),
                index,
            })
            .collect();
        let logic: Vec<String> = fields[1].split_whitespace().map(str::to_string).collect();
        if logic.is_empty() {
            return Err(CorpusError::EmptyLogic { line: i + 1 });
        }
        out.push(Example {
            tokens,
            logic,
            dep: None,
            cons: None,
        });
    }
    Ok(out)
}

pub fn load_parallel_corpus(path: &Path) -> Result<Vec<Example>, CorpusError> {
    parse_parallel_corpus(&read(path)?)
}

/// Inverse of [`parse_parallel_corpus`] up to whitespace normalization.
pub fn write_corpus(examples: &[Example]) -> String {
    let mut out = String::new();
    for ex in examples {
        out.push_str(&ex.surfaces().join(" "));
        out.push('\t');
        out.push_str(&ex.logic.join(" "));
        out.push('\n');
    }
    out
}

// ---------------------------------------------------------------------------
// Dependency parses (CoNLL-U-like, 4 columns)
// ---------------------------------------------------------------------------

/// Parse one sentence block: `index form head label` per line with
/// 1-based indices and head 0 marking ROOT. Output indices are 0-based.
pub fn parse_conllu(text: &str) -> Result<DependencyParse, CorpusError> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            break;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() != 4 {
            return Err(CorpusError::ColumnCount {
                line: i + 1,
                expected: 4,
                found: cols.len(),
            });
        }
        let index: usize = cols[0].parse().map_err(|_| CorpusError::NonNumeric {
            line: i + 1,
            what: "index",
            text: cols[0].to_string(),
        })?;
        let head: usize = cols[2].parse().map_err(|_| CorpusError::NonNumeric {
            line: i + 1,
            what: "head",
            text: cols[2].to_string(),
        })?;
        rows.push((i + 1, index, head, cols[3].to_string()));
    }
    let len = rows.len();
    let mut seen = HashSet::new();
    let mut arcs = Vec::with_capacity(len);
    for (line, index, head, label) in rows {
        if !seen.insert(index) {
            return Err(CorpusError::DuplicateDependent { line, index });
        }
        if index == 0 || index > len {
            return Err(CorpusError::NonConsecutiveIndex { line, found: index });
        }
        if head > len {
            return Err(CorpusError::HeadOutOfRange { line, head, len });
        }
        arcs.push(DepArc {
            head: if head == 0 { None } else { Some(head - 1) },
            dependent: index - 1,
            label,
        });
    }
    DependencyParse::new(arcs, len)
}

/// Re-emit a parse in the 4-column format accepted by
/// [`parse_conllu`], with token forms supplied by the caller.
pub fn write_conllu(parse: &DependencyParse, forms: &[&str]) -> String {
    assert_eq!(forms.len(), parse.len(), "form count must match parse length");
    let mut by_dependent: Vec<Option<&DepArc>> = vec![None; parse.len()];
    for arc in parse.arcs() {
        by_dependent[arc.dependent] = Some(arc);
    }
    let mut out = String::new();
    for (i, slot) in by_dependent.iter().enumerate() {
        let arc = slot.expect("every token needs an arc to re-emit");
        let head = arc.head.map_or(0, |h| h + 1);
        out.push_str(&format!("{}\t{}\t{}\t{}\n", i + 1, forms[i], head, arc.label));
    }
    out
}

/// Load blank-line-separated dependency blocks, aligned 1:1 with
/// corpus lines.
pub fn load_dependency_file(path: &Path) -> Result<Vec<DependencyParse>, CorpusError> {
    let text = read(path)?;
    let mut parses = Vec::new();
    for (index, block) in text.split("\n\n").enumerate() {
        if block.trim().is_empty() {
            continue;
        }
        let parse = parse_conllu(block).map_err(|source| CorpusError::Sentence {
            index: index + 1,
            source: Box::new(source),
        })?;
        parses.push(parse);
    }
    Ok(parses)
}

// ---------------------------------------------------------------------------
// Constituent trees (bracketed notation)
// ---------------------------------------------------------------------------

#[derive(Debug, PartialEq)]
enum Lexeme<'a> {
    Open,
    Close,
    Atom(&'a str),
}

fn lex_brackets(text: &str) -> Vec<Lexeme<'_>> {
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    for (i, ch) in text.char_indices() {
        if ch == '(' || ch == ')' || ch.is_whitespace() {
            if let Some(s) = start.take() {
                out.push(Lexeme::Atom(&text[s..i]));
            }
            if ch == '(' {
                out.push(Lexeme::Open);
            } else if ch == ')' {
                out.push(Lexeme::Close);
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        out.push(Lexeme::Atom(&text[s..]));
    }
    out
}

/// Parse standard bracketed notation, e.g. `(NP (DT the) (NNS jobs))`.
/// Pre-terminal POS nodes are kept as ordinary non-terminals.
pub fn parse_bracketed_tree(text: &str) -> Result<ConstituentTree, CorpusError> {
    let lexemes = lex_brackets(text);
    let mut pos = 0;
    let mut labels = Vec::new();
    let mut children = Vec::new();
    let mut next_leaf = 0;
    let root = parse_nt(&lexemes, &mut pos, &mut labels, &mut children, &mut next_leaf)?;
    if pos != lexemes.len() {
        return Err(CorpusError::TrailingInput(format!(
            "{} unconsumed lexemes",
            lexemes.len() - pos
        )));
    }
    ConstituentTree::new(labels, children, root)
}

fn parse_nt<'a>(
    lexemes: &[Lexeme<'a>],
    pos: &mut usize,
    labels: &mut Vec<String>,
    children: &mut Vec<Vec<TreeChild>>,
    next_leaf: &mut usize,
) -> Result<usize, CorpusError> {
    match lexemes.get(*pos) {
        Some(Lexeme::Open) => *pos += 1,
        _ => return Err(CorpusError::UnbalancedParens),
    }
    let label = match lexemes.get(*pos) {
        Some(Lexeme::Atom(a)) => {
            *pos += 1;
            a.to_string()
        }
        _ => return Err(CorpusError::EmptyNonTerminal),
    };
    let mut kids = Vec::new();
    loop {
        match lexemes.get(*pos) {
            Some(Lexeme::Close) => {
                *pos += 1;
                break;
            }
            Some(Lexeme::Open) => {
                let child = parse_nt(lexemes, pos, labels, children, next_leaf)?;
                kids.push(TreeChild::NonTerminal(child));
            }
            Some(Lexeme::Atom(_)) => {
                *pos += 1;
                kids.push(TreeChild::Leaf(*next_leaf));
                *next_leaf += 1;
            }
            None => return Err(CorpusError::UnbalancedParens),
        }
    }
    if kids.is_empty() {
        return Err(CorpusError::EmptyNonTerminal);
    }
    labels.push(label);
    children.push(kids);
    Ok(labels.len() - 1)
}

/// Re-emit a tree in bracketed notation with leaf surfaces supplied by
/// the caller.
pub fn write_bracketed_tree(tree: &ConstituentTree, forms: &[&str]) -> String {
    fn emit(tree: &ConstituentTree, nt: usize, forms: &[&str], out: &mut String) {
        out.push('(');
        out.push_str(tree.label(nt));
        for child in tree.children(nt) {
            out.push(' ');
            match child {
                TreeChild::Leaf(tok) => out.push_str(forms[*tok]),
                TreeChild::NonTerminal(c) => emit(tree, *c, forms, out),
            }
        }
        out.push(')');
    }
    let mut out = String::new();
    emit(tree, tree.root(), forms, &mut out);
    out
}

/// Load one bracketed tree per line, aligned 1:1 with corpus lines.
pub fn load_constituency_file(path: &Path) -> Result<Vec<ConstituentTree>, CorpusError> {
    let text = read(path)?;
    let mut trees = Vec::new();
    for (index, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let tree = parse_bracketed_tree(line).map_err(|source| CorpusError::Sentence {
            index: index + 1,
            source: Box::new(source),
        })?;
        trees.push(tree);
    }
    Ok(trees)
}

/// Attach side-file parses to a loaded corpus, enforcing 1:1 alignment
/// and per-sentence length agreement.
pub fn attach_parses(
    examples: &mut [Example],
    deps: Option<Vec<DependencyParse>>,
    cons: Option<Vec<ConstituentTree>>,
) -> Result<(), CorpusError> {
    if let Some(deps) = deps {
        if deps.len() != examples.len() {
            return Err(CorpusError::Misaligned {
                what: "dependency file",
                expected: examples.len(),
                found: deps.len(),
            });
        }
        for (i, (ex, dep)) in examples.iter_mut().zip(deps).enumerate() {
            if dep.len() != ex.tokens.len() {
                return Err(CorpusError::ParseLengthMismatch {
                    index: i + 1,
                    parse_len: dep.len(),
                    sentence_len: ex.tokens.len(),
                });
            }
            ex.dep = Some(dep);
        }
    }
    if let Some(cons) = cons {
        if cons.len() != examples.len() {
            return Err(CorpusError::Misaligned {
                what: "constituency file",
                expected: examples.len(),
                found: cons.len(),
            });
        }
        for (i, (ex, tree)) in examples.iter_mut().zip(cons).enumerate() {
            if tree.leaf_count() != ex.tokens.len() {
                return Err(CorpusError::ParseLengthMismatch {
                    index: i + 1,
                    parse_len: tree.leaf_count(),
                    sentence_len: ex.tokens.len(),
                });
            }
            ex.cons = Some(tree);
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Vocabulary
// ---------------------------------------------------------------------------

/// Token-to-id map with dense ids and reserved PAD/UNK/SOS/EOS slots.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";
pub const SOS_TOKEN: &str = "<s>";
pub const EOS_TOKEN: &str = "</s>";

impl Vocab {
    pub const PAD: u32 = 0;
    pub const UNK: u32 = 1;
    pub const SOS: u32 = 2;
    pub const EOS: u32 = 3;

    /// Build from already-deduplicated non-reserved tokens, in order.
    pub fn from_items<I: IntoIterator<Item = String>>(items: I) -> Self {
        let mut tokens: Vec<String> = vec![
            PAD_TOKEN.to_string(),
            UNK_TOKEN.to_string(),
            SOS_TOKEN.to_string(),
            EOS_TOKEN.to_string(),
        ];
        tokens.extend(items);
        let mut index = HashMap::new();
        for (i, t) in tokens.iter().enumerate() {
            let prev = index.insert(t.clone(), i as u32);
            assert!(prev.is_none(), "duplicate vocab token `{t}`");
        }
        Vocab { tokens, index }
    }

    /// Id for a token, falling back to UNK.
    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(Self::UNK)
    }

    pub fn lookup(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false // reserved tokens are always present
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.tokens
    }
}

impl TryFrom<Vec<String>> for Vocab {
    type Error = String;

    fn try_from(tokens: Vec<String>) -> Result<Self, String> {
        let reserved = [PAD_TOKEN, UNK_TOKEN, SOS_TOKEN, EOS_TOKEN];
        if tokens.len() < reserved.len()
            || tokens[..reserved.len()] != reserved.map(str::to_string)
        {
            return Err("vocab must start with the reserved tokens".to_string());
        }
        let mut index = HashMap::new();
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(format!("duplicate vocab token `{t}`"));
            }
        }
        Ok(Vocab { tokens, index })
    }
}

fn count_into(counts: &mut BTreeMap<String, usize>, token: &str) {
    *counts.entry(token.to_string()).or_insert(0) += 1;
}

fn finish_vocab(counts: BTreeMap<String, usize>, min_freq: usize) -> Vocab {
    let mut entries: Vec<(String, usize)> = counts
        .into_iter()
        .filter(|(_, c)| *c >= min_freq)
        .collect();
    // Frequency descending, ties broken lexicographically.
    entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Vocab::from_items(entries.into_iter().map(|(t, _)| t))
}

/// Build the source and target vocabularies. The source side covers
/// word surfaces plus dependency and constituent labels, since all of
/// them become graph-node text attributes needing embeddings; tokens
/// below `min_freq` fall back to UNK.
pub fn build_vocab(examples: &[Example], min_freq: usize) -> (Vocab, Vocab) {
    let mut src = BTreeMap::new();
    let mut tgt = BTreeMap::new();
    for ex in examples {
        for tok in &ex.tokens {
            count_into(&mut src, &tok.surface);
        }
        if let Some(dep) = &ex.dep {
            for arc in dep.non_root_arcs() {
                count_into(&mut src, &arc.label);
            }
        }
        if let Some(cons) = &ex.cons {
            for nt in 0..cons.non_terminal_count() {
                count_into(&mut src, cons.label(nt));
            }
        }
        for tok in &ex.logic {
            count_into(&mut tgt, tok);
        }
    }
    (finish_vocab(src, min_freq), finish_vocab(tgt, min_freq))
}

// ---------------------------------------------------------------------------
// Pretrained embeddings
// ---------------------------------------------------------------------------

/// Word-embedding matrix with one row per vocab entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingMatrix {
    pub weights: Tensor,
}

impl EmbeddingMatrix {
    pub fn dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn vocab_size(&self) -> usize {
        self.weights.rows()
    }
}

/// Range used to initialize rows for tokens missing from the
/// pretrained file (including dependency/constituent labels).
pub const UNSEEN_EMBED_RANGE: f64 = 0.08;

/// Load pretrained vectors in `token v1 ... vd` text rows. Rows for
/// vocab tokens found in the file are copied verbatim; everything else
/// keeps a uniform init in `[-0.08, 0.08]`. Returns the matrix and the
/// number of vocab tokens covered by the file.
pub fn load_pretrained_embeddings<R: Rng>(
    path: &Path,
    vocab: &Vocab,
    d: usize,
    rng: &mut R,
) -> Result<(EmbeddingMatrix, usize), CorpusError> {
    let text = read(path)?;
    parse_pretrained_embeddings(&text, vocab, d, rng)
}

pub fn parse_pretrained_embeddings<R: Rng>(
    text: &str,
    vocab: &Vocab,
    d: usize,
    rng: &mut R,
) -> Result<(EmbeddingMatrix, usize), CorpusError> {
    let mut weights = Tensor::rand_uniform(
        rng,
        vocab.len(),
        d,
        -UNSEEN_EMBED_RANGE,
        UNSEEN_EMBED_RANGE,
    );
    let mut covered = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let token = fields.next().expect("non-empty line has a first field");
        let values: Vec<f64> = fields
            .map(|v| {
                v.parse().map_err(|_| CorpusError::NonNumeric {
                    line: i + 1,
                    what: "embedding value",
                    text: v.to_string(),
                })
            })
            .collect::<Result<_, _>>()?;
        if values.len() != d {
            return Err(CorpusError::DimensionMismatch {
                line: i + 1,
                expected: d,
                found: values.len(),
            });
        }
        if let Some(id) = vocab.lookup(token) {
            for (j, v) in values.into_iter().enumerate() {
                weights.set(id as usize, j, v);
            }
            covered.insert(id);
        }
    }
    Ok((EmbeddingMatrix { weights }, covered.len()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_record_parses() {
        let examples = parse_parallel_corpus("list jobs\tanswer(J,job(J))").unwrap();
        assert_eq!(examples.len(), 1);
        assert_eq!(examples[0].surfaces(), vec!["list", "jobs"]);
        assert_eq!(examples[0].logic, vec!["answer(J,job(J))"]);
        assert_eq!(examples[0].tokens[1].index, 1);
    }

    #[test]
    fn empty_corpus_is_empty_list() {
        assert!(parse_parallel_corpus("").unwrap().is_empty());
    }

    #[test]
    fn corpus_roundtrip_is_identity() {
        let text = "list jobs\tanswer ( J , job ( J ) )\n\
                    what are these\tanswer ( X )\n\
                    one\tq ( A )\n";
        let examples = parse_parallel_corpus(text).unwrap();
        assert_eq!(examples.len(), 3);
        assert_eq!(write_corpus(&examples), text);
    }

    #[test]
    fn missing_field_reports_line_number() {
        let err = parse_parallel_corpus("good q\tf(x)\nbad line no tab").unwrap_err();
        assert!(matches!(err, CorpusError::FieldCount { line: 2, found: 1 }));
    }

    #[test]
    fn empty_logic_is_an_error() {
        let err = parse_parallel_corpus("a question\t \n").unwrap_err();
        assert!(matches!(err, CorpusError::EmptyLogic { line: 1 }));
    }

    #[test]
    fn conllu_single_token_root() {
        let parse = parse_conllu("1 jobs 0 root").unwrap();
        assert_eq!(parse.len(), 1);
        assert_eq!(
            parse.arcs(),
            &[DepArc {
                head: None,
                dependent: 0,
                label: "root".into()
            }]
        );
    }

    #[test]
    fn conllu_converts_one_based_to_zero_based() {
        let parse = parse_conllu("1 the 2 det\n2 jobs 0 root").unwrap();
        assert_eq!(
            parse.arcs(),
            &[
                DepArc {
                    head: Some(1),
                    dependent: 0,
                    label: "det".into()
                },
                DepArc {
                    head: None,
                    dependent: 1,
                    label: "root".into()
                },
            ]
        );
    }

    #[test]
    fn conllu_rejects_non_numeric_head() {
        let err = parse_conllu("1 the X det").unwrap_err();
        assert!(matches!(
            err,
            CorpusError::NonNumeric { what: "head", .. }
        ));
    }

    #[test]
    fn conllu_rejects_out_of_range_head_and_duplicates() {
        assert!(matches!(
            parse_conllu("1 a 5 x").unwrap_err(),
            CorpusError::HeadOutOfRange { head: 5, len: 1, .. }
        ));
        assert!(matches!(
            parse_conllu("1 a 0 r\n1 b 0 r").unwrap_err(),
            CorpusError::DuplicateDependent { index: 1, .. }
        ));
    }

    #[test]
    fn conllu_reemit_preserves_arc_set() {
        let text = "1\tthe\t2\tdet\n2\tjobs\t0\troot\n3\there\t2\tadvmod\n";
        let parse = parse_conllu(text).unwrap();
        let emitted = write_conllu(&parse, &["the", "jobs", "here"]);
        let reparsed = parse_conllu(&emitted).unwrap();
        let set_a: HashSet<_> = parse.arcs().iter().cloned().collect();
        let set_b: HashSet<_> = reparsed.arcs().iter().cloned().collect();
        assert_eq!(set_a, set_b);
    }

    #[test]
    fn bracketed_two_leaf_tree() {
        let tree = parse_bracketed_tree("(NP (DT the) (NNS jobs))").unwrap();
        assert_eq!(tree.label(tree.root()), "NP");
        assert_eq!(tree.non_terminal_count(), 3);
        assert_eq!(tree.leaves_in_order(), vec![0, 1]);
        assert_eq!(tree.tree_edge_count(), 4); // NP->DT, NP->NNS, DT->the, NNS->jobs
    }

    #[test]
    fn bracketed_unbalanced_is_error() {
        assert!(matches!(
            parse_bracketed_tree("(X a").unwrap_err(),
            CorpusError::UnbalancedParens
        ));
        assert!(matches!(
            parse_bracketed_tree("(X a))").unwrap_err(),
            CorpusError::TrailingInput(_)
        ));
    }

    #[test]
    fn bracketed_empty_non_terminal_is_error() {
        assert!(matches!(
            parse_bracketed_tree("(NP)").unwrap_err(),
            CorpusError::EmptyNonTerminal
        ));
        assert!(matches!(
            parse_bracketed_tree("(NP () x)").unwrap_err(),
            CorpusError::EmptyNonTerminal
        ));
    }

    // Independent leaf-count oracle: a leaf is an atom that does not
    // directly follow an opening parenthesis.
    fn count_leaves_oracle(text: &str) -> usize {
        let lexemes = lex_brackets(text);
        let mut count = 0;
        for (i, lx) in lexemes.iter().enumerate() {
            let follows_open = i > 0 && matches!(lexemes[i - 1], Lexeme::Open);
            if matches!(lx, Lexeme::Atom(_)) && !follows_open {
                count += 1;
            }
        }
        count
    }

    #[test]
    fn nested_tree_leaf_order_matches_oracle() {
        let text = "(S (NP (DT the) (NN cat)) (VP (VBD sat) (PP (IN down))))";
        let tree = parse_bracketed_tree(text).unwrap();
        let n = count_leaves_oracle(text);
        assert_eq!(n, 4);
        assert_eq!(tree.leaves_in_order(), (0..n).collect::<Vec<_>>());
        let rendered = write_bracketed_tree(&tree, &["the", "cat", "sat", "down"]);
        assert_eq!(parse_bracketed_tree(&rendered).unwrap(), tree);
    }

    fn example(q: &str, l: &str) -> Example {
        parse_parallel_corpus(&format!("{q}\t{l}"))
            .unwrap()
            .remove(0)
    }

    #[test]
    fn vocab_basics_and_threshold() {
        let ex = example("list jobs", "job");
        let (src, tgt) = build_vocab(std::slice::from_ref(&ex), 1);
        assert!(src.contains("list") && src.contains("jobs"));
        assert_eq!(src.len(), 6); // 4 reserved + 2 words
        assert!(tgt.contains("job"));

        let (src2, _) = build_vocab(&[ex], 2);
        assert_eq!(src2.len(), 4); // everything fell below min_freq
        assert_eq!(src2.id("list"), Vocab::UNK);
    }

    #[test]
    fn vocab_includes_dependency_and_constituent_labels() {
        let mut ex = example("the jobs", "job");
        ex.dep = Some(parse_conllu("1 the 2 det\n2 jobs 0 root").unwrap());
        ex.cons = Some(parse_bracketed_tree("(NP (DT the) (NNS jobs))").unwrap());
        let (src, _) = build_vocab(&[ex], 1);
        assert!(src.contains("det"), "dependency labels need embeddings");
        assert!(src.contains("NP") && src.contains("DT") && src.contains("NNS"));
        // The "root" label never becomes a node, so it gets no entry.
        assert!(!src.contains("root"));
    }

    #[test]
    fn vocab_is_deterministic_with_lexicographic_ties() {
        let ex = example("b a c a", "z y z");
        let (src1, tgt1) = build_vocab(std::slice::from_ref(&ex), 1);
        let (src2, tgt2) = build_vocab(&[ex], 1);
        assert_eq!(src1, src2);
        assert_eq!(tgt1, tgt2);
        // "a" occurs twice, then "b"/"c" tie at one and sort lexically.
        assert_eq!(src1.id("a"), 4);
        assert_eq!(src1.id("b"), 5);
        assert_eq!(src1.id("c"), 6);
        assert_eq!(tgt1.id("z"), 4);
    }

    #[test]
    fn vocab_serde_roundtrip() {
        let (src, _) = build_vocab(&[example("some words here", "f ( x )")], 1);
        let json = serde_json::to_string(&src).unwrap();
        let back: Vocab = serde_json::from_str(&json).unwrap();
        assert_eq!(src, back);
    }

    #[test]
    fn embeddings_copy_known_rows_and_randomize_missing() {
        let (src, _) = build_vocab(&[example("list jobs", "job")], 1);
        let file = "list 1.0 2.0 3.0\nsomethingelse 9.0 9.0 9.0\n";
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (embed, covered) = parse_pretrained_embeddings(file, &src, 3, &mut rng).unwrap();
        assert_eq!(covered, 1);
        let list_row = src.id("list") as usize;
        assert_eq!(embed.weights.row(list_row), &[1.0, 2.0, 3.0]);
        let jobs_row = src.id("jobs") as usize;
        for v in embed.weights.row(jobs_row) {
            assert!((-UNSEEN_EMBED_RANGE..UNSEEN_EMBED_RANGE).contains(v));
        }
    }

    #[test]
    fn embeddings_dimension_mismatch_is_error() {
        let (src, _) = build_vocab(&[example("list", "f")], 1);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let err = parse_pretrained_embeddings("list 1.0 2.0", &src, 300, &mut rng).unwrap_err();
        assert!(matches!(
            err,
            CorpusError::DimensionMismatch {
                expected: 300,
                found: 2,
                ..
            }
        ));
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn arb_word() -> impl Strategy<Value = String> {
            "[a-z0-9+'()_,-]{1,8}"
        }

        prop_compose! {
            fn arb_corpus()(examples in proptest::collection::vec(
                (
                    proptest::collection::vec(arb_word(), 1..8),
                    proptest::collection::vec(arb_word(), 1..12),
                ),
                0..10,
            )) -> String {
                examples
                    .into_iter()
                    .map(|(q, l)| format!("{}\t{}\n", q.join(" "), l.join(" ")))
                    .collect()
            }
        }

        proptest! {
            #[test]
            fn corpus_roundtrip(text in arb_corpus()) {
                let examples = parse_parallel_corpus(&text).unwrap();
                prop_assert_eq!(write_corpus(&examples), text);
            }

            #[test]
            fn conllu_reemit_preserves_arcs(
                heads in proptest::collection::vec(0usize..6, 1..6)
            ) {
                // Clamp heads into range; head == own index becomes ROOT.
                let n = heads.len();
                let text: String = heads
                    .iter()
                    .enumerate()
                    .map(|(i, &h)| {
                        let head = if h > n || h == i + 1 { 0 } else { h };
                        format!("{}\tw{}\t{}\tl{}\n", i + 1, i, head, i)
                    })
                    .collect();
                let parse = parse_conllu(&text).unwrap();
                let forms: Vec<String> = (0..n).map(|i| format!("w{i}")).collect();
                let form_refs: Vec<&str> = forms.iter().map(String::as_str).collect();
                let reparsed = parse_conllu(&write_conllu(&parse, &form_refs)).unwrap();
                let a: HashSet<_> = parse.arcs().iter().cloned().collect();
                let b: HashSet<_> = reparsed.arcs().iter().cloned().collect();
                prop_assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn attach_parses_validates_alignment() {
        let mut examples = parse_parallel_corpus("a b\tf\nc\tg").unwrap();
        let deps = vec![parse_conllu("1 a 2 x\n2 b 0 root").unwrap()];
        let err = attach_parses(&mut examples, Some(deps), None).unwrap_err();
        assert!(matches!(err, CorpusError::Misaligned { .. }));

        let deps = vec![
            parse_conllu("1 a 2 x\n2 b 0 root").unwrap(),
            parse_conllu("1 c 0 root\n2 d 1 y").unwrap(),
        ];
        let err = attach_parses(&mut examples, Some(deps), None).unwrap_err();
        assert!(matches!(err, CorpusError::ParseLengthMismatch { index: 2, .. }));
    }
}
