//! Interpolated n-gram language model.
//!
//! For order `n`, lower-order weight `λ` and floor mass `φ`:
//!
//! ```text
//! P_1(w)   = c(w) / N
//! P_k(w|h) = (1-λ)·c(h,w)/c(h) + λ·P_{k-1}(w|h')   if c(h) > 0
//!          = P_{k-1}(w|h')                          otherwise
//! P(w|h)   = (1-φ)·P_n(w|h) + φ/|V|
//! ```
//!
//! where `h'` drops the oldest token of `h`. Histories shorter than `k-1`
//! tokens count as unseen at order `k`. The floor gives every token non-zero
//! probability in every context.

use std::collections::HashMap;

use super::corpus::Corpus;
use super::vocab::{Tokenizer, Vocabulary};
use super::{DistributionProvider, TokenDistribution, TokenId};
use crate::error::{Error, Result};

/// Next-token counts per history, for one history length.
type HistoryCounts = HashMap<Box<[TokenId]>, HashMap<TokenId, u64>>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothingConfig {
    /// Weight `λ` given to the next-lower order when a history was seen.
    pub lower_order_weight: f64,
    /// Mass `φ` spread uniformly over the vocabulary.
    pub floor_mass: f64,
    /// Replace the fixed `λ` by the Witten-Bell weight
    /// `λ(h) = T(h) / (T(h) + c(h))`, `T(h)` being the number of distinct
    /// followers of `h`.
    pub witten_bell: bool,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        Self {
            lower_order_weight: 0.2,
            floor_mass: 1e-4,
            witten_bell: false,
        }
    }
}

impl SmoothingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.lower_order_weight) {
            return Err(Error::param(format!(
                "lower-order weight must be in [0, 1), got {}",
                self.lower_order_weight
            )));
        }
        if !(self.floor_mass > 0.0 && self.floor_mass < 1.0) {
            return Err(Error::param(format!(
                "floor mass must be in (0, 1), got {}",
                self.floor_mass
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub order: usize,
    pub smoothing: SmoothingConfig,
    /// Words seen fewer times than this map to `<unk>`.
    pub min_count: u32,
    /// Append `</s>` to every document.
    pub append_eod: bool,
    pub tokenizer: Tokenizer,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            order: 3,
            smoothing: SmoothingConfig::default(),
            min_count: 1,
            append_eod: true,
            tokenizer: Tokenizer::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Followers {
    pub(crate) total: u64,
    /// Sorted by token id.
    pub(crate) next: Vec<(TokenId, u64)>,
}

pub(crate) type HistoryTable = HashMap<Box<[TokenId]>, Followers>;

#[derive(Debug, Clone)]
pub struct NgramModel {
    pub(crate) config: TrainConfig,
    pub(crate) vocab: Vocabulary,
    pub(crate) unigram_counts: Vec<u64>,
    pub(crate) unigram_total: u64,
    /// `tables[k - 2]` holds order-`k` histories of length `k - 1`.
    pub(crate) tables: Vec<HistoryTable>,
    unigram_ml: Vec<f64>,
}

impl PartialEq for NgramModel {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config
            && self.vocab == other.vocab
            && self.unigram_counts == other.unigram_counts
            && self.unigram_total == other.unigram_total
            && self.tables == other.tables
    }
}

impl NgramModel {
    pub fn train(corpus: &Corpus, config: TrainConfig) -> Result<Self> {
        if config.order < 1 {
            return Err(Error::param("n-gram order must be at least 1"));
        }
        config.smoothing.validate()?;
        if corpus.is_empty() {
            return Err(Error::EmptyCorpus);
        }

        let vocab = build_vocabulary(corpus, config.min_count)?;
        let mut unigram_counts = vec![0u64; vocab.len()];
        let mut raw: Vec<HistoryCounts> =
            vec![HashMap::new(); config.order.saturating_sub(1)];

        for doc in &corpus.documents {
            let ids = encode_document(&vocab, doc, config.append_eod);
            for i in 1..ids.len() {
                let w = ids[i];
                unigram_counts[w as usize] += 1;
                for k in 2..=config.order {
                    if i < k - 1 {
                        break;
                    }
                    let hist: Box<[TokenId]> = ids[i + 1 - k..i].into();
                    *raw[k - 2].entry(hist).or_default().entry(w).or_default() += 1;
                }
            }
        }
        let unigram_total = unigram_counts.iter().sum();
        let tables = raw
            .into_iter()
            .map(|t| {
                t.into_iter()
                    .map(|(h, m)| {
                        let mut next: Vec<(TokenId, u64)> = m.into_iter().collect();
                        next.sort_unstable();
                        let total = next.iter().map(|&(_, c)| c).sum();
                        (h, Followers { total, next })
                    })
                    .collect()
            })
            .collect();
        Ok(Self::from_parts(config, vocab, unigram_counts, unigram_total, tables))
    }

    pub(crate) fn from_parts(
        config: TrainConfig,
        vocab: Vocabulary,
        unigram_counts: Vec<u64>,
        unigram_total: u64,
        tables: Vec<HistoryTable>,
    ) -> Self {
        let unigram_ml = unigram_counts
            .iter()
            .map(|&c| c as f64 / unigram_total as f64)
            .collect();
        Self {
            config,
            vocab,
            unigram_counts,
            unigram_total,
            tables,
            unigram_ml,
        }
    }

    pub fn order(&self) -> usize {
        self.config.order
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn tokenizer(&self) -> &Tokenizer {
        &self.config.tokenizer
    }

    /// `<s> w_1 .. w_n </s>` (the trailing `</s>` only if the model was
    /// trained with it).
    pub fn encode_document(&self, words: &[String]) -> Vec<TokenId> {
        encode_document(&self.vocab, words, self.config.append_eod)
    }

    /// Unsmoothed relative frequency `c(h, w) / c(h)` with `h` of length
    /// `order - 1` (empty history means the unigram estimate).
    pub fn maximum_likelihood(&self, history: &[TokenId], token: TokenId) -> Option<f64> {
        if history.is_empty() {
            return Some(self.unigram_ml[token as usize]);
        }
        let f = self.tables.get(history.len() - 1)?.get(history)?;
        let c = f
            .next
            .binary_search_by_key(&token, |&(t, _)| t)
            .map(|i| f.next[i].1)
            .unwrap_or(0);
        Some(c as f64 / f.total as f64)
    }

    /// Number of distinct histories stored at order `k >= 2`.
    pub fn history_count(&self, k: usize) -> usize {
        self.tables.get(k.wrapping_sub(2)).map_or(0, HashMap::len)
    }

    /// Token-weighted perplexity over held-out documents (every token after
    /// `<s>`, including `</s>`).
    pub fn perplexity(&self, corpus: &Corpus) -> Result<f64> {
        let per_doc = crate::exec::try_par_map(&corpus.documents, |_, doc| {
            let ids = self.encode_document(doc);
            let mut nll = crate::exec::KahanSum::default();
            for i in 1..ids.len() {
                nll.add(-self.token_prob(&ids[..i], ids[i])?.ln());
            }
            Ok::<_, Error>((nll.value(), ids.len().saturating_sub(1)))
        })?;
        let mut nll = crate::exec::KahanSum::default();
        let mut n = 0usize;
        for (v, c) in per_doc {
            nll.add(v);
            n += c;
        }
        if n == 0 {
            return Err(Error::EmptyCorpus);
        }
        Ok((nll.value() / n as f64).exp())
    }

    /// Probability of one token; bit-identical to the matching entry of
    /// `next_distribution`.
    pub fn token_prob(&self, context: &[TokenId], token: TokenId) -> Result<f64> {
        if token as usize >= self.vocab.len() {
            return Err(Error::InvalidToken {
                id: token,
                size: self.vocab.len(),
            });
        }
        let (weight, seen) = self.mixture(context)?;
        let base = self.config.smoothing.floor_mass / self.vocab.len() as f64;
        let mut p = weight * self.unigram_ml[token as usize] + base;
        for (coef, f) in seen {
            if let Ok(i) = f.next.binary_search_by_key(&token, |&(t, _)| t) {
                p += coef * f.next[i].1 as f64;
            }
        }
        Ok(p)
    }

    pub fn set_smoothing(&mut self, smoothing: SmoothingConfig) -> Result<()> {
        smoothing.validate()?;
        self.config.smoothing = smoothing;
        Ok(())
    }

    /// Picks the fixed lower-order weight with the lowest perplexity on `dev`
    /// (first on ties) and installs it. Returns `(weight, perplexity)` per
    /// grid point.
    pub fn tune_lower_order_weight(&mut self, dev: &Corpus, grid: &[f64]) -> Result<Vec<(f64, f64)>> {
        if grid.is_empty() {
            return Err(Error::param("empty tuning grid"));
        }
        let original = self.config.smoothing;
        let mut table = Vec::with_capacity(grid.len());
        for &w in grid {
            let trial = SmoothingConfig {
                lower_order_weight: w,
                witten_bell: false,
                ..original
            };
            if let Err(e) = self.set_smoothing(trial) {
                self.config.smoothing = original;
                return Err(e);
            }
            match self.perplexity(dev) {
                Ok(ppl) => table.push((w, ppl)),
                Err(e) => {
                    self.config.smoothing = original;
                    return Err(e);
                }
            }
        }
        let best = table
            .iter()
            .fold(table[0], |b, &x| if x.1 < b.1 { x } else { b });
        self.config.smoothing = SmoothingConfig {
            lower_order_weight: best.0,
            witten_bell: false,
            ..original
        };
        log::info!("tuned lower-order weight {} (dev perplexity {:.3})", best.0, best.1);
        Ok(table)
    }

    fn mixture(&self, context: &[TokenId]) -> Result<(f64, Vec<(f64, &Followers)>)> {
        if context.is_empty() {
            return Err(Error::EmptyContext);
        }
        let lambda = self.config.smoothing.lower_order_weight;
        let mut weight = 1.0 - self.config.smoothing.floor_mass;
        let mut seen: Vec<(f64, &Followers)> = Vec::with_capacity(self.tables.len());
        for k in (2..=self.config.order).rev() {
            if context.len() < k - 1 {
                continue;
            }
            let hist = &context[context.len() + 1 - k..];
            if let Some(f) = self.tables[k - 2].get(hist) {
                let lambda = if self.config.smoothing.witten_bell {
                    let distinct = f.next.len() as f64;
                    distinct / (distinct + f.total as f64)
                } else {
                    lambda
                };
                seen.push((weight * (1.0 - lambda) / f.total as f64, f));
                weight *= lambda;
            }
        }
        Ok((weight, seen))
    }
}

impl DistributionProvider for NgramModel {
    fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    fn next_distribution(&self, context: &[TokenId]) -> Result<TokenDistribution> {
        let (weight, seen) = self.mixture(context)?;
        let base = self.config.smoothing.floor_mass / self.vocab.len() as f64;
        let mut probs: Vec<f64> = self.unigram_ml.iter().map(|&u| weight * u + base).collect();
        for (coef, f) in seen {
            for &(t, c) in &f.next {
                probs[t as usize] += coef * c as f64;
            }
        }
        Ok(TokenDistribution::from_probs_unchecked(probs))
    }
}

fn build_vocabulary(corpus: &Corpus, min_count: u32) -> Result<Vocabulary> {
    let mut counts: HashMap<&str, u32> = HashMap::new();
    let mut order: Vec<&str> = Vec::new();
    for doc in &corpus.documents {
        for w in doc {
            let c = counts.entry(w.as_str()).or_insert_with(|| {
                order.push(w.as_str());
                0
            });
            *c += 1;
        }
    }
    let reserved = [super::BOD_TOKEN, super::EOD_TOKEN, super::UNK_TOKEN];
    Vocabulary::with_specials(
        order
            .into_iter()
            .filter(|w| counts[w] >= min_count && !reserved.contains(w))
            .map(str::to_string),
    )
}

pub(crate) fn encode_document(vocab: &Vocabulary, words: &[String], append_eod: bool) -> Vec<TokenId> {
    let mut ids = Vec::with_capacity(words.len() + 2);
    ids.push(vocab.bod());
    ids.extend(words.iter().map(|w| vocab.id_or_unk(w)));
    if append_eod {
        ids.push(vocab.eod());
    }
    ids
}
