//! Next-token distribution providers.

mod corpus;
mod model_file;
mod ngram;
mod trace;
mod vocab;

use std::cmp::Ordering;

pub use corpus::{read_corpus, split_documents, Corpus};
pub use ngram::{NgramModel, SmoothingConfig, TrainConfig};
pub use trace::{write_binary_trace, write_json_trace, TraceProvider};
pub use vocab::{Tokenizer, TokenizerMode, Vocabulary, BOD_TOKEN, EOD_TOKEN, UNK_TOKEN};

use crate::error::{Error, Result};

pub type TokenId = u32;

/// Absolute tolerance on `sum(probs) == 1`.
pub const NORMALIZATION_TOL: f64 = 1e-9;

/// A full probability vector over the vocabulary for one generation step.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenDistribution {
    probs: Vec<f64>,
    logits: Option<Vec<f64>>,
}

impl TokenDistribution {
    /// Validates non-negativity and normalization.
    pub fn from_probs(probs: Vec<f64>) -> Result<Self> {
        validate_probs(&probs)?;
        Ok(Self {
            probs,
            logits: None,
        })
    }

    /// Softmax of `logits`, keeping the logits alongside.
    pub fn from_logits(logits: Vec<f64>) -> Result<Self> {
        if logits.is_empty() {
            return Err(Error::InvalidDistribution("empty logits".into()));
        }
        if logits.iter().any(|u| u.is_nan() || *u == f64::INFINITY) {
            return Err(Error::InvalidDistribution("logits contain NaN or +inf".into()));
        }
        let probs = softmax(&logits, 1.0);
        if probs.iter().any(|p| p.is_nan()) {
            return Err(Error::InvalidDistribution("all logits are -inf".into()));
        }
        Ok(Self {
            probs,
            logits: Some(logits),
        })
    }

    /// Skips validation. Callers guarantee the invariants (used on hot paths
    /// whose construction already normalizes).
    pub(crate) fn from_probs_unchecked(probs: Vec<f64>) -> Self {
        debug_assert!(validate_probs(&probs).is_ok(), "{:?}", validate_probs(&probs));
        Self {
            probs,
            logits: None,
        }
    }

    pub fn uniform(size: usize) -> Self {
        Self::from_probs_unchecked(vec![1.0 / size as f64; size])
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn logits(&self) -> Option<&[f64]> {
        self.logits.as_deref()
    }

    pub fn into_probs(self) -> Vec<f64> {
        self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn prob(&self, token: TokenId) -> f64 {
        self.probs[token as usize]
    }

    /// Natural log of the probability of `token`. Generation and scoring both
    /// go through this, so recorded and rescored values agree exactly.
    #[inline]
    pub fn log_prob(&self, token: TokenId) -> f64 {
        self.probs[token as usize].ln()
    }

    /// Highest-probability token, lowest id on ties.
    pub fn argmax(&self) -> TokenId {
        let mut best = 0usize;
        for (i, &p) in self.probs.iter().enumerate().skip(1) {
            if p > self.probs[best] {
                best = i;
            }
        }
        best as TokenId
    }

    /// Token ids sorted by descending probability, ascending id on ties.
    pub fn descending_order(&self) -> Vec<TokenId> {
        let mut order: Vec<TokenId> = (0..self.probs.len() as TokenId).collect();
        sort_descending(&self.probs, &mut order);
        order
    }

    /// Number of entries with non-zero probability.
    pub fn support_size(&self) -> usize {
        self.probs.iter().filter(|&&p| p > 0.0).count()
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        -self
            .probs
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| p * p.ln())
            .sum::<f64>()
    }
}

/// Ranking comparator shared by every truncation rule: probability
/// descending, then token id ascending. It is a total order.
#[inline]
pub(crate) fn rank_cmp(probs: &[f64], a: TokenId, b: TokenId) -> Ordering {
    probs[b as usize]
        .total_cmp(&probs[a as usize])
        .then(a.cmp(&b))
}

pub(crate) fn sort_descending(probs: &[f64], ids: &mut [TokenId]) {
    ids.sort_unstable_by(|&a, &b| rank_cmp(probs, a, b));
}

/// Yields token ids in ranking order without sorting the whole vocabulary:
/// each refill selects the next block of top-ranked ids (block size doubles)
/// and sorts only that block. Walking a short prefix costs O(|V|).
pub(crate) struct RankedIter<'a> {
    probs: &'a [f64],
    rest: Vec<TokenId>,
    block: Vec<TokenId>,
    pos: usize,
    next_block: usize,
}

impl<'a> RankedIter<'a> {
    pub(crate) fn new(probs: &'a [f64], ids: Vec<TokenId>) -> Self {
        Self {
            probs,
            rest: ids,
            block: Vec::new(),
            pos: 0,
            next_block: 32,
        }
    }

    fn refill(&mut self) -> bool {
        let take = self.next_block.min(self.rest.len());
        if take == 0 {
            return false;
        }
        let probs = self.probs;
        if take < self.rest.len() {
            self.rest
                .select_nth_unstable_by(take, |&a, &b| rank_cmp(probs, a, b));
            let tail = self.rest.split_off(take);
            self.block = std::mem::replace(&mut self.rest, tail);
        } else {
            self.block = std::mem::take(&mut self.rest);
        }
        sort_descending(probs, &mut self.block);
        self.pos = 0;
        self.next_block = self.next_block.saturating_mul(4);
        true
    }
}

impl Iterator for RankedIter<'_> {
    type Item = TokenId;

    fn next(&mut self) -> Option<TokenId> {
        if self.pos == self.block.len() && !self.refill() {
            return None;
        }
        let t = self.block[self.pos];
        self.pos += 1;
        Some(t)
    }
}

pub(crate) fn softmax(logits: &[f64], temperature: f64) -> Vec<f64> {
    let max = logits
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits
        .iter()
        .map(|&u| ((u - max) / temperature).exp())
        .collect();
    let z: f64 = out.iter().sum();
    for v in &mut out {
        *v /= z;
    }
    out
}

fn validate_probs(probs: &[f64]) -> Result<()> {
    if probs.is_empty() {
        return Err(Error::InvalidDistribution("empty probability vector".into()));
    }
    if let Some((i, p)) = probs
        .iter()
        .enumerate()
        .find(|(_, p)| !(p.is_finite() && **p >= 0.0))
    {
        return Err(Error::InvalidDistribution(format!(
            "entry {i} is {p}, expected a finite non-negative value"
        )));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::InvalidDistribution(format!(
            "probabilities sum to {sum}, expected 1"
        )));
    }
    Ok(())
}

/// The conditioning prefix `x_1 .. x_m`. Always holds at least one token
/// (the begin-of-document marker at minimum).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextWindow {
    tokens: Vec<TokenId>,
}

impl ContextWindow {
    pub fn new(tokens: Vec<TokenId>, vocab_size: usize) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::EmptyContext);
        }
        check_ids(&tokens, vocab_size)?;
        Ok(Self { tokens })
    }

    /// Context consisting of the begin-of-document token only.
    pub fn start(vocab: &Vocabulary) -> Self {
        Self {
            tokens: vec![vocab.bod()],
        }
    }

    pub fn tokens(&self) -> &[TokenId] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn into_tokens(self) -> Vec<TokenId> {
        self.tokens
    }
}

pub(crate) fn check_ids(tokens: &[TokenId], vocab_size: usize) -> Result<()> {
    match tokens.iter().find(|&&t| t as usize >= vocab_size) {
        Some(&id) => Err(Error::InvalidToken {
            id,
            size: vocab_size,
        }),
        None => Ok(()),
    }
}

/// Anything that yields `P(x | x_1 .. x_{i-1})` over a fixed vocabulary.
///
/// Implementations must be deterministic for a fixed provider state and
/// context. The n-gram model is immutable and `Sync`; the trace replayer
/// advances an internal cursor and is deliberately `!Sync`.
pub trait DistributionProvider {
    fn vocabulary(&self) -> &Vocabulary;

    /// Full conditional distribution for the next token. `context` holds every
    /// token so far (context window plus anything already generated).
    fn next_distribution(&self, context: &[TokenId]) -> Result<TokenDistribution>;

    fn vocab_size(&self) -> usize {
        self.vocabulary().len()
    }

    fn eod(&self) -> TokenId {
        self.vocabulary().eod()
    }
}

impl<P: DistributionProvider + ?Sized> DistributionProvider for &P {
    fn vocabulary(&self) -> &Vocabulary {
        (**self).vocabulary()
    }

    fn next_distribution(&self, context: &[TokenId]) -> Result<TokenDistribution> {
        (**self).next_distribution(context)
    }
}

/// Per-token `log P(x_i | x_1 .. x_{i-1})` of `tokens` following `context`.
pub fn score<P: DistributionProvider + ?Sized>(
    provider: &P,
    context: &ContextWindow,
    tokens: &[TokenId],
) -> Result<Vec<f64>> {
    let size = provider.vocab_size();
    check_ids(context.tokens(), size)?;
    check_ids(tokens, size)?;
    let mut history = context.tokens().to_vec();
    history.reserve(tokens.len());
    let mut out = Vec::with_capacity(tokens.len());
    for &t in tokens {
        let dist = provider.next_distribution(&history)?;
        out.push(dist.log_prob(t));
        history.push(t);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_unnormalized() {
        assert!(TokenDistribution::from_probs(vec![0.5, 0.4]).is_err());
        assert!(TokenDistribution::from_probs(vec![1.5, -0.5]).is_err());
        assert!(TokenDistribution::from_probs(vec![]).is_err());
        assert!(TokenDistribution::from_probs(vec![0.5, 0.5]).is_ok());
    }

    #[test]
    fn logits_softmax_matches_probs() {
        let d = TokenDistribution::from_logits(vec![2.0, 1.0, 0.0]).unwrap();
        let z = 1.0f64.exp() + 2.0f64.exp() + 1.0;
        assert!((d.probs()[0] - 2.0f64.exp() / z).abs() < 1e-12);
        assert!((d.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(d.logits().unwrap(), &[2.0, 1.0, 0.0]);
    }

    #[test]
    fn ordering_breaks_ties_by_id() {
        let d = TokenDistribution::from_probs(vec![0.2, 0.3, 0.2, 0.3]).unwrap();
        assert_eq!(d.descending_order(), vec![1, 3, 0, 2]);
        assert_eq!(d.argmax(), 1);
    }

    #[test]
    fn ranked_iter_matches_full_sort() {
        let probs: Vec<f64> = (0..1000u32).map(|i| ((i * 7919) % 97) as f64).collect();
        let z: f64 = probs.iter().sum();
        let d = TokenDistribution::from_probs(probs.iter().map(|p| p / z).collect()).unwrap();
        let lazy: Vec<TokenId> = RankedIter::new(d.probs(), (0..1000).collect()).collect();
        assert_eq!(lazy, d.descending_order());
    }

    #[test]
    fn empty_context_rejected() {
        assert!(matches!(
            ContextWindow::new(vec![], 4),
            Err(Error::EmptyContext)
        ));
        assert!(matches!(
            ContextWindow::new(vec![9], 4),
            Err(Error::InvalidToken { id: 9, .. })
        ));
    }

    #[test]
    fn entropy_bounds() {
        let u = TokenDistribution::uniform(8);
        assert!((u.entropy() - 8f64.ln()).abs() < 1e-12);
        let one = TokenDistribution::from_probs(vec![0.0, 1.0, 0.0]).unwrap();
        assert_eq!(one.entropy(), 0.0);
    }
}
