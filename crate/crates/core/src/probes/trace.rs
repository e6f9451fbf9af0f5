use serde::Serialize;

use super::ProbeSeries;
use crate::decoding::{generate, human_record, DecoderConfig};
use crate::error::{Error, Result};
use crate::exec::{try_par_map, KahanSum};
use crate::lm::{score, ContextWindow, DistributionProvider, TokenId};

/// Per-step `P(x_i | x_<i)` of `continuation` after `context`.
pub fn token_probability_trace<P>(provider: &P, context: &ContextWindow, continuation: &[TokenId]) -> Result<ProbeSeries>
where
    P: DistributionProvider + ?Sized,
{
    let probs: Vec<f64> = score(provider, context, continuation)?.into_iter().map(f64::exp).collect();
    let x = (1..=probs.len()).map(|i| i as f64).collect();
    ProbeSeries::new("token_probability", "step", x)?
        .with_column("probability", probs)
        .map(|s| s.with_meta("context_len", context.len()))
}

/// Pooled per-token probability statistics of one kind of text.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceSummary {
    pub mean: f64,
    /// Population variance over all pooled tokens.
    pub variance: f64,
    pub tokens: usize,
    pub sequences: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceComparison {
    pub decoded: TraceSummary,
    pub human: TraceSummary,
}

/// Decodes every context with `decoder` and compares the per-token model
/// probabilities of the result with those of the gold continuations.
pub fn compare_probability_traces<P>(
    provider: &P,
    items: &[(ContextWindow, Vec<TokenId>)],
    decoder: &DecoderConfig,
) -> Result<TraceComparison>
where
    P: DistributionProvider + Sync + ?Sized,
{
    let pairs = try_par_map(items, |i, (ctx, gold)| {
        let decoded = generate(provider, ctx, decoder, i as u64)?;
        let human = human_record(provider, i as u64, ctx, gold, decoder.max_len)?;
        Ok::<_, Error>((decoded.model_logprobs, human.model_logprobs))
    })?;
    let decoded = summarize(pairs.iter().map(|p| p.0.as_slice()))?;
    let human = summarize(pairs.iter().map(|p| p.1.as_slice()))?;
    Ok(TraceComparison { decoded, human })
}

fn summarize<'a>(seqs: impl Iterator<Item = &'a [f64]> + Clone) -> Result<TraceSummary> {
    let mut sum = KahanSum::default();
    let mut tokens = 0usize;
    let mut sequences = 0usize;
    for s in seqs.clone() {
        sequences += 1;
        for &lp in s {
            sum.add(lp.exp());
            tokens += 1;
        }
    }
    if tokens == 0 {
        return Err(Error::InsufficientData("no tokens to summarize".into()));
    }
    let mean = sum.value() / tokens as f64;
    let mut sq = KahanSum::default();
    for s in seqs {
        for &lp in s {
            let d = lp.exp() - mean;
            sq.add(d * d);
        }
    }
    Ok(TraceSummary {
        mean,
        variance: sq.value() / tokens as f64,
        tokens,
        sequences,
    })
}
