//! Adversarial inputs: SWAP noise (one adjacent-letter transposition
//! per perturbed word, e.g. noise -> nosie) and ingestion of
//! precomputed back-translation paraphrase sets.
//!
//! Words that correspond to operators or arguments of the logical form
//! must keep their meaning, approximated here by a case-insensitive
//! substring match against the logical-form tokens. Words shorter than
//! two letters, or whose every adjacent swap is a no-op (all repeated
//! letters), cannot be visibly perturbed and are never eligible.

use crate::corpus::{parse_parallel_corpus, Example, Token};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum AdversarialError {
    #[error("swap count m={0} is outside the supported sweep range 1..=5 (use unrestricted() to override)")]
    SwapCountOutOfRange(usize),
    #[error("paraphrase file has {found} lines but the corpus has {expected}")]
    LineCountMismatch { expected: usize, found: usize },
    #[error("cannot read `{path}`: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// How many words to perturb, plus the RNG seed for reproducibility.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwapConfig {
    pub m: usize,
    pub seed: u64,
}

impl SwapConfig {
    /// Sweep-faithful configuration with `m` in 1..=5.
    pub fn new(m: usize, seed: u64) -> Result<Self, AdversarialError> {
        if !(1..=5).contains(&m) {
            return Err(AdversarialError::SwapCountOutOfRange(m));
        }
        Ok(SwapConfig { m, seed })
    }

    /// Any `m`, including 0 (identity).
    pub fn unrestricted(m: usize, seed: u64) -> Self {
        SwapConfig { m, seed }
    }
}

/// Token indices that must not be perturbed.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ProtectedSet {
    indices: BTreeSet<usize>,
}

impl ProtectedSet {
    pub fn new(indices: impl IntoIterator<Item = usize>) -> Self {
        ProtectedSet {
            indices: indices.into_iter().collect(),
        }
    }

    /// Everything outside the eligible set of an example.
    pub fn complement_of_eligible(ex: &Example) -> Self {
        let eligible = eligible_words(&ex.tokens, &ex.logic);
        ProtectedSet {
            indices: (0..ex.tokens.len()).filter(|i| !eligible.contains(i)).collect(),
        }
    }

    pub fn contains(&self, index: usize) -> bool {
        self.indices.contains(&index)
    }
}

/// Whether a word admits a visible adjacent transposition.
fn can_swap(word: &str) -> bool {
    let chars: Vec<char> = word.chars().collect();
    chars.len() >= 2 && chars.windows(2).any(|w| w[0] != w[1])
}

/// Token indices that may be perturbed without touching the logical
/// form: the lowercased surface must not occur as a substring of any
/// logical-form token, and the word must admit a visible swap.
pub fn eligible_words(tokens: &[Token], logic: &[String]) -> BTreeSet<usize> {
    let lowered_logic: Vec<String> = logic.iter().map(|t| t.to_lowercase()).collect();
    tokens
        .iter()
        .filter(|tok| {
            if !can_swap(&tok.surface) {
                return false;
            }
            let needle = tok.surface.to_lowercase();
            !lowered_logic.iter().any(|lf| lf.contains(&needle))
        })
        .map(|tok| tok.index)
        .collect()
}

/// One applied perturbation: which token changed and at which letter
/// position the adjacent pair was transposed.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwapRecord {
    pub token_index: usize,
    pub char_pos: usize,
}

/// Result of [`swap_noise`]: the perturbed tokens, the applied swaps,
/// and how many requested swaps could not be placed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SwapOutcome {
    pub tokens: Vec<Token>,
    pub swaps: Vec<SwapRecord>,
    pub shortfall: usize,
}

/// Transpose the adjacent pair at `pos` (chars `pos` and `pos + 1`).
fn apply_swap(word: &str, pos: usize) -> String {
    let mut chars: Vec<char> = word.chars().collect();
    chars.swap(pos, pos + 1);
    chars.into_iter().collect()
}

/// Perturb `cfg.m` distinct eligible words, chosen uniformly; each
/// gets one uniformly chosen adjacent transposition that visibly
/// changes it. Protected and unswappable tokens are never touched. If
/// fewer than `m` candidates exist, all of them are perturbed and the
/// shortfall is reported.
pub fn swap_noise<R: Rng>(
    tokens: &[Token],
    cfg: &SwapConfig,
    protected: &ProtectedSet,
    rng: &mut R,
) -> SwapOutcome {
    let mut candidates: Vec<usize> = tokens
        .iter()
        .filter(|t| can_swap(&t.surface) && !protected.contains(t.index))
        .map(|t| t.index)
        .collect();
    let take = cfg.m.min(candidates.len());
    let shortfall = cfg.m - take;
    candidates.shuffle(rng);
    let mut chosen: Vec<usize> = candidates.into_iter().take(take).collect();
    chosen.sort_unstable();

    let mut out = tokens.to_vec();
    let mut swaps = Vec::with_capacity(take);
    for index in chosen {
        let word = &tokens[index].surface;
        let chars: Vec<char> = word.chars().collect();
        let positions: Vec<usize> = (0..chars.len() - 1)
            .filter(|&j| chars[j] != chars[j + 1])
            .collect();
        let pos = *positions.choose(rng).expect("candidates admit a visible swap");
        out[index].surface = apply_swap(word, pos);
        swaps.push(SwapRecord {
            token_index: index,
            char_pos: pos,
        });
    }
    SwapOutcome {
        tokens: out,
        swaps,
        shortfall,
    }
}

/// Perturb a whole example, protecting everything outside its eligible
/// set. Parses are inherited unchanged: only word surfaces differ, so
/// the syntactic structure of the clean sentence still applies.
pub fn perturb_example<R: Rng>(ex: &Example, cfg: &SwapConfig, rng: &mut R) -> (Example, SwapOutcome) {
    let protected = ProtectedSet::complement_of_eligible(ex);
    let outcome = swap_noise(&ex.tokens, cfg, &protected, rng);
    let perturbed = Example {
        tokens: outcome.tokens.clone(),
        logic: ex.logic.clone(),
        dep: ex.dep.clone(),
        cons: ex.cons.clone(),
    };
    (perturbed, outcome)
}

/// Load a paraphrase evaluation set: one paraphrased question per
/// line, aligned 1:1 with the original corpus; logical forms are
/// copied from the originals. Parses for the paraphrases, when needed,
/// arrive through the standard side files.
pub fn load_paraphrase_set(path: &Path, original: &[Example]) -> Result<Vec<Example>, AdversarialError> {
    let text = fs::read_to_string(path).map_err(|source| AdversarialError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_paraphrase_set(&text, original)
}

pub fn parse_paraphrase_set(text: &str, original: &[Example]) -> Result<Vec<Example>, AdversarialError> {
    let lines: Vec<&str> = text.lines().collect();
    if lines.len() != original.len() {
        return Err(AdversarialError::LineCountMismatch {
            expected: original.len(),
            found: lines.len(),
        });
    }
    let mut out = Vec::with_capacity(lines.len());
    for (line, orig) in lines.iter().zip(original) {
        let logic = orig.logic.join(" ");
        let ex = parse_parallel_corpus(&format!("{line}\t{logic}"))
            .expect("paraphrase line with original logic always parses")
            .remove(0);
        out.push(ex);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashMap;

    fn example(q: &str, l: &str) -> Example {
        parse_parallel_corpus(&format!("{q}\t{l}")).unwrap().remove(0)
    }

    #[test]
    fn logical_form_words_are_ineligible() {
        let ex = example(
            "list jobs using c++",
            "answer ( J , ( job ( J ) , language ( J , 'c++' ) ) )",
        );
        let eligible = eligible_words(&ex.tokens, &ex.logic);
        // "c++" occurs inside 'c++' and "job" is a substring of jobs'
        // lowercase? No: "jobs" is not a substring of "job", but "job"
        // being a logic token makes "jobs" eligible only if "jobs" is
        // not a substring of any token; it is not. "using"/"list" are
        // free. "c++" must be protected.
        assert!(!eligible.contains(&3), "c++ appears in the logical form");
        assert!(eligible.contains(&0) && eligible.contains(&2));
    }

    #[test]
    fn fully_covered_question_has_no_eligible_words() {
        let ex = example("job salary", "list ( job , salary )");
        assert!(eligible_words(&ex.tokens, &ex.logic).is_empty());
    }

    #[test]
    fn short_and_uniform_words_are_ineligible() {
        let ex = example("a bb what", "answer ( x )");
        let eligible = eligible_words(&ex.tokens, &ex.logic);
        assert!(!eligible.contains(&0), "one-letter word");
        assert!(!eligible.contains(&1), "every adjacent swap of `bb` is a no-op");
        assert!(eligible.contains(&2));
    }

    #[test]
    fn eligibility_is_case_insensitive() {
        let ex = example("Programmer jobs", "const ( P , 'programmer' )");
        let eligible = eligible_words(&ex.tokens, &ex.logic);
        assert!(!eligible.contains(&0));
    }

    #[test]
    fn swap_transposes_adjacent_letters() {
        // "noise" with the transposition at position 2 gives "nosie".
        assert_eq!(apply_swap("noise", 2), "nosie");
    }

    #[test]
    fn m_zero_is_identity() {
        let ex = example("what are the jobs", "answer ( J )");
        let cfg = SwapConfig::unrestricted(0, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let out = swap_noise(&ex.tokens, &cfg, &ProtectedSet::default(), &mut rng);
        assert_eq!(out.tokens, ex.tokens);
        assert!(out.swaps.is_empty());
        assert_eq!(out.shortfall, 0);
    }

    #[test]
    fn swap_config_validates_sweep_range() {
        assert!(SwapConfig::new(0, 1).is_err());
        assert!(SwapConfig::new(6, 1).is_err());
        assert!(SwapConfig::new(5, 1).is_ok());
    }

    fn letter_multiset(word: &str) -> HashMap<char, usize> {
        let mut m = HashMap::new();
        for c in word.chars() {
            *m.entry(c).or_insert(0) += 1;
        }
        m
    }

    #[test]
    fn swaps_preserve_multisets_and_change_exactly_m_words() {
        // 10^4 randomized runs: every output word is an anagram of its
        // original with equal length, exactly m tokens differ, and
        // protected tokens never change.
        let ex = example(
            "what are the jobs for programmer that has salary related with ai",
            "answer ( J , job ( J ) )",
        );
        let protected = ProtectedSet::new([3usize, 5]);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for run in 0..10_000 {
            let m = 1 + (run % 5);
            let cfg = SwapConfig::unrestricted(m, 0);
            let out = swap_noise(&ex.tokens, &cfg, &protected, &mut rng);
            assert_eq!(out.shortfall, 0, "enough candidates exist");
            let mut differing = 0;
            for (orig, new) in ex.tokens.iter().zip(&out.tokens) {
                if orig.surface != new.surface {
                    differing += 1;
                    assert_eq!(orig.surface.chars().count(), new.surface.chars().count());
                    assert_eq!(
                        letter_multiset(&orig.surface),
                        letter_multiset(&new.surface),
                        "run {run}: not an anagram"
                    );
                    assert!(!protected.contains(orig.index), "protected token changed");
                }
            }
            assert_eq!(differing, m, "run {run}: wrong perturbation count");
            assert_eq!(out.swaps.len(), m);
        }
    }

    #[test]
    fn fixed_seed_reproduces_byte_for_byte() {
        let ex = example(
            "what are the jobs for programmer",
            "answer ( J )",
        );
        let cfg = SwapConfig::new(2, 1234).unwrap();
        let protected = ProtectedSet::complement_of_eligible(&ex);
        let mut r1 = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut r2 = ChaCha8Rng::seed_from_u64(cfg.seed);
        let a = swap_noise(&ex.tokens, &cfg, &protected, &mut r1);
        let b = swap_noise(&ex.tokens, &cfg, &protected, &mut r2);
        assert_eq!(a, b);
    }

    #[test]
    fn eligible_indices_are_chosen_uniformly() {
        // With m = 2 over 5 candidates each index should be hit with
        // frequency 2/5, within 3 sigma over N runs.
        let ex = example("alpha bravo candle delta echo", "answer ( x )");
        let cfg = SwapConfig::unrestricted(2, 0);
        let protected = ProtectedSet::default();
        let n = 10_000;
        let mut hits = [0usize; 5];
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..n {
            let out = swap_noise(&ex.tokens, &cfg, &protected, &mut rng);
            for s in &out.swaps {
                hits[s.token_index] += 1;
            }
        }
        let p = 2.0 / 5.0;
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        for (i, h) in hits.iter().enumerate() {
            let freq = *h as f64 / n as f64;
            assert!(
                (freq - p).abs() < 3.0 * sigma,
                "index {i} frequency {freq} outside 3 sigma of {p}"
            );
        }
    }

    #[test]
    fn shortfall_perturbs_everything_available() {
        let ex = example("aa b candle", "answer ( x )");
        // Only "candle" is swappable.
        let cfg = SwapConfig::unrestricted(3, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let out = swap_noise(&ex.tokens, &cfg, &ProtectedSet::default(), &mut rng);
        assert_eq!(out.swaps.len(), 1);
        assert_eq!(out.shortfall, 2);
        assert_ne!(out.tokens[2].surface, "candle");
    }

    #[test]
    fn identity_paraphrase_set_reproduces_originals() {
        let originals = parse_parallel_corpus("list jobs\tanswer ( J )\nshow all\tanswer ( A )")
            .unwrap();
        let text = "list jobs\nshow all";
        let set = parse_paraphrase_set(text, &originals).unwrap();
        assert_eq!(set, originals);
    }

    #[test]
    fn paraphrase_alignment_and_logic_copying() {
        let originals =
            parse_parallel_corpus("list jobs\tanswer ( J )\nshow all\tanswer ( A )\nthird one\tq ( C )")
                .unwrap();
        let set = parse_paraphrase_set("display the jobs\nshow everything\na third", &originals)
            .unwrap();
        assert_eq!(set.len(), 3);
        assert_eq!(set[0].logic, originals[0].logic);
        assert_eq!(set[2].logic, originals[2].logic);
        assert_eq!(set[0].surfaces(), vec!["display", "the", "jobs"]);

        let err = parse_paraphrase_set("only one line", &originals).unwrap_err();
        assert!(matches!(
            err,
            AdversarialError::LineCountMismatch {
                expected: 3,
                found: 1
            }
        ));
    }
}
