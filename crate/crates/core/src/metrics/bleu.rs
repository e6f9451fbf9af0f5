use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::decoding::GenerationRecord;
use crate::error::{Error, Result};
use crate::exec::{par_map, KahanSum};
use crate::lm::TokenId;
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelfBleuConfig {
    pub n_max: usize,
    pub sample_size: usize,
    pub seed: u64,
    /// Add-one smoothing of the precisions for n >= 2.
    pub smoothing: bool,
}

impl Default for SelfBleuConfig {
    fn default() -> Self {
        Self {
            n_max: 4,
            sample_size: 1000,
            seed: 0,
            smoothing: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelfBleu {
    pub value: f64,
    /// Hypotheses scored.
    pub sampled: usize,
    /// Documents in the reference pool (each hypothesis excludes itself).
    pub documents: usize,
}

/// Self-BLEU over record continuations (without the trailing `</s>`).
/// Records are put in id order first so input order never matters.
pub fn self_bleu(records: &[GenerationRecord], eod: TokenId, config: &SelfBleuConfig) -> Result<SelfBleu> {
    let mut sorted: Vec<&GenerationRecord> = records.iter().collect();
    sorted.sort_by_key(|r| r.id);
    let docs: Vec<&[TokenId]> = sorted.iter().map(|r| r.text_tokens(eod)).collect();
    self_bleu_documents(&docs, config)
}

/// Self-BLEU over documents already in canonical order.
pub fn self_bleu_documents(docs: &[&[TokenId]], config: &SelfBleuConfig) -> Result<SelfBleu> {
    if docs.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "Self-BLEU needs at least 2 documents, got {}",
            docs.len()
        )));
    }
    if config.n_max == 0 {
        return Err(Error::param("Self-BLEU n_max must be at least 1"));
    }
    if config.sample_size == 0 {
        return Err(Error::param("Self-BLEU sample size must be at least 1"));
    }
    let hyps = sample_indices(docs.len(), config);
    let index = ReferenceIndex::build(docs, config.n_max);
    let scores = par_map(&hyps, |_, &h| index.bleu(h, config.smoothing));
    let mut sum = KahanSum::default();
    for s in &scores {
        sum.add(*s);
    }
    Ok(SelfBleu {
        value: sum.value() / scores.len() as f64,
        sampled: scores.len(),
        documents: docs.len(),
    })
}

fn sample_indices(n: usize, config: &SelfBleuConfig) -> Vec<usize> {
    if config.sample_size >= n {
        if config.sample_size > n {
            log::warn!(
                "Self-BLEU sample size {} exceeds the {} available documents; using all",
                config.sample_size,
                n
            );
        }
        return (0..n).collect();
    }
    // Partial Fisher-Yates, then back to canonical order.
    let mut rng = RngStream::derived(config.seed, "self-bleu", 0);
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..config.sample_size {
        let j = i + rng.below((n - i) as u64) as usize;
        idx.swap(i, j);
    }
    idx.truncate(config.sample_size);
    idx.sort_unstable();
    idx
}

/// The two largest per-document counts of one n-gram.
#[derive(Debug, Clone, Copy, Default)]
struct Top2 {
    best: (usize, u32),
    second: u32,
}

impl Top2 {
    fn push(&mut self, doc: usize, count: u32) {
        if count > self.best.1 {
            self.second = self.best.1;
            self.best = (doc, count);
        } else if count > self.second {
            self.second = count;
        }
    }

    fn max_excluding(&self, doc: usize) -> u32 {
        if self.best.0 == doc {
            self.second
        } else {
            self.best.1
        }
    }
}

/// Per-order n-gram index over all documents, so a hypothesis can be
/// clipped against "every other document" without rescanning them.
struct ReferenceIndex<'a> {
    docs: &'a [&'a [TokenId]],
    n_max: usize,
    grams: Vec<HashMap<&'a [TokenId], Top2>>,
    sorted_lens: Vec<usize>,
}

impl<'a> ReferenceIndex<'a> {
    fn build(docs: &'a [&'a [TokenId]], n_max: usize) -> Self {
        let mut grams: Vec<HashMap<&[TokenId], Top2>> = vec![HashMap::new(); n_max];
        for (d, doc) in docs.iter().enumerate() {
            for (n, table) in grams.iter_mut().enumerate() {
                for (g, c) in ngram_counts(doc, n + 1) {
                    table.entry(g).or_default().push(d, c);
                }
            }
        }
        let mut sorted_lens: Vec<usize> = docs.iter().map(|d| d.len()).collect();
        sorted_lens.sort_unstable();
        Self {
            docs,
            n_max,
            grams,
            sorted_lens,
        }
    }

    /// Reference length closest to `len` among all documents but one copy
    /// of `len` itself; ties go to the shorter length.
    fn closest_other_len(&self, len: usize) -> usize {
        let lo = self.sorted_lens.partition_point(|&l| l < len);
        let hi = self.sorted_lens.partition_point(|&l| l <= len);
        if hi - lo >= 2 {
            return len;
        }
        let below = lo.checked_sub(1).map(|i| self.sorted_lens[i]);
        let above = self.sorted_lens.get(hi).copied();
        match (below, above) {
            (Some(b), Some(a)) => {
                if len - b <= a - len {
                    b
                } else {
                    a
                }
            }
            (Some(b), None) => b,
            (None, Some(a)) => a,
            (None, None) => unreachable!("at least two documents"),
        }
    }

    fn bleu(&self, h: usize, smoothing: bool) -> f64 {
        let hyp = self.docs[h];
        let c = hyp.len();
        if c == 0 {
            return 0.0;
        }
        let mut log_sum = 0.0;
        for n in 1..=self.n_max {
            let total = (c + 1).saturating_sub(n);
            let mut matched = 0u64;
            for (g, cnt) in ngram_counts(hyp, n) {
                let r = self.grams[n - 1][g].max_excluding(h);
                matched += cnt.min(r) as u64;
            }
            let p = if smoothing && n > 1 {
                (matched as f64 + 1.0) / (total as f64 + 1.0)
            } else if total == 0 || matched == 0 {
                return 0.0;
            } else {
                matched as f64 / total as f64
            };
            log_sum += p.ln();
        }
        let r = self.closest_other_len(c);
        let bp = if c > r {
            1.0
        } else {
            (1.0 - r as f64 / c as f64).exp()
        };
        bp * (log_sum / self.n_max as f64).exp()
    }
}

fn ngram_counts(doc: &[TokenId], n: usize) -> HashMap<&[TokenId], u32> {
    let mut counts = HashMap::new();
    if doc.len() >= n {
        for g in doc.windows(n) {
            *counts.entry(g).or_insert(0) += 1;
        }
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(docs: &[Vec<TokenId>]) -> f64 {
        let refs: Vec<&[TokenId]> = docs.iter().map(Vec::as_slice).collect();
        self_bleu_documents(&refs, &SelfBleuConfig::default()).unwrap().value
    }

    #[test]
    fn identical_documents_score_one() {
        let d: Vec<TokenId> = vec![5, 6, 7, 8, 9, 5];
        assert!((run(&[d.clone(), d.clone(), d]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn disjoint_vocabularies_score_zero() {
        assert_eq!(run(&[vec![1, 2, 3, 4], vec![5, 6, 7, 8], vec![9, 10, 11, 12]]), 0.0);
    }

    #[test]
    fn closest_length_excludes_self_and_prefers_shorter() {
        let docs: Vec<Vec<TokenId>> = vec![vec![0; 4], vec![0; 6], vec![0; 5], vec![0; 9]];
        let refs: Vec<&[TokenId]> = docs.iter().map(Vec::as_slice).collect();
        let idx = ReferenceIndex::build(&refs, 1);
        assert_eq!(idx.closest_other_len(5), 4);
        assert_eq!(idx.closest_other_len(9), 6);
        assert_eq!(idx.closest_other_len(4), 5);
    }

    #[test]
    fn top2_excludes_the_owner() {
        let mut t = Top2::default();
        t.push(0, 3);
        t.push(1, 5);
        t.push(2, 4);
        assert_eq!(t.max_excluding(1), 4);
        assert_eq!(t.max_excluding(0), 5);
    }

    #[test]
    fn sampling_is_clamped_and_deterministic() {
        let cfg = SelfBleuConfig {
            sample_size: 3,
            seed: 9,
            ..SelfBleuConfig::default()
        };
        let a = sample_indices(10, &cfg);
        assert_eq!(a, sample_indices(10, &cfg));
        assert_eq!(a.len(), 3);
        assert!(a.windows(2).all(|w| w[0] < w[1]));
        let big = SelfBleuConfig {
            sample_size: 50,
            ..cfg
        };
        assert_eq!(sample_indices(10, &big), (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn too_few_documents() {
        let d: Vec<TokenId> = vec![1, 2];
        assert!(self_bleu_documents(&[&d], &SelfBleuConfig::default()).is_err());
    }
}
