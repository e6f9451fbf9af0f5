use serde::{Deserialize, Serialize};

use super::ProbeSeries;
use crate::error::{Error, Result};
use crate::exec::{try_par_map, KahanSum};
use crate::lm::{check_ids, score, ContextWindow, DistributionProvider, TokenId, Vocabulary};
use crate::rng::RngStream;

/// How the per-token probabilities of one copy are averaged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CopyAggregate {
    #[default]
    Arithmetic,
    Geometric,
}

/// `y[j]` is the mean probability of the tokens of copy `j + 1` of `phrase`
/// given `<s>` followed by `j` copies, for `j = 1..=num_copies`.
pub fn repetition_feedback_probe<P>(
    provider: &P,
    phrase: &[TokenId],
    num_copies: usize,
    aggregate: CopyAggregate,
) -> Result<ProbeSeries>
where
    P: DistributionProvider + Sync + ?Sized,
{
    if phrase.is_empty() {
        return Err(Error::param("phrase must contain at least one token"));
    }
    if num_copies < 2 {
        return Err(Error::param(format!("num_copies must be at least 2, got {num_copies}")));
    }
    let v = provider.vocab_size();
    check_ids(phrase, v)?;
    let bod = provider.vocabulary().bod();
    let copies: Vec<usize> = (1..=num_copies).collect();
    let ys = try_par_map(&copies, |_, &j| {
        let mut ctx = Vec::with_capacity(1 + j * phrase.len());
        ctx.push(bod);
        for _ in 0..j {
            ctx.extend_from_slice(phrase);
        }
        let lps = score(provider, &ContextWindow::new(ctx, v)?, phrase)?;
        let mut s = KahanSum::default();
        for &lp in &lps {
            s.add(match aggregate {
                CopyAggregate::Arithmetic => lp.exp(),
                CopyAggregate::Geometric => lp,
            });
        }
        let mean = s.value() / lps.len() as f64;
        Ok::<_, Error>(match aggregate {
            CopyAggregate::Arithmetic => mean,
            CopyAggregate::Geometric => mean.exp(),
        })
    })?;
    let x = copies.iter().map(|&j| j as f64).collect();
    Ok(ProbeSeries::new("repetition_feedback", "copies_in_context", x)?
        .with_column("mean_probability", ys)?
        .with_meta("phrase_len", phrase.len())
        .with_meta("aggregate", format!("{aggregate:?}").to_lowercase()))
}

/// A phrase of `len` tokens drawn uniformly from the non-special vocabulary.
pub fn sample_phrase(vocab: &Vocabulary, len: usize, rng: &mut RngStream) -> Result<Vec<TokenId>> {
    let pool: Vec<TokenId> = (0..vocab.len() as TokenId).filter(|&t| !vocab.is_special(t)).collect();
    if pool.is_empty() {
        return Err(Error::param("vocabulary has no ordinary tokens"));
    }
    Ok((0..len).map(|_| pool[rng.below(pool.len() as u64) as usize]).collect())
}
