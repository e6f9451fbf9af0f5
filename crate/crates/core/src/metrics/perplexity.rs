use crate::decoding::GenerationRecord;
use crate::error::{Error, Result};
use crate::exec::{try_par_map, KahanSum};
use crate::lm::{score, ContextWindow, DistributionProvider};

/// Token-weighted perplexity of the continuations, rescored under `provider`.
/// Context tokens are excluded; a trailing `</s>` counts as a token.
pub fn generation_perplexity<P>(records: &[GenerationRecord], provider: &P) -> Result<f64>
where
    P: DistributionProvider + Sync + ?Sized,
{
    let size = provider.vocab_size();
    let scored = try_par_map(records, |_, r| {
        let ctx = ContextWindow::new(r.context.clone(), size)?;
        score(provider, &ctx, &r.continuation)
    })?;
    perplexity_from_logprobs(scored.iter().map(Vec::as_slice))
}

/// Same aggregation over the model log-probabilities stored in the records.
pub fn recorded_perplexity(records: &[GenerationRecord]) -> Result<f64> {
    perplexity_from_logprobs(records.iter().map(|r| r.model_logprobs.as_slice()))
}

/// `exp(-sum / count)` with a compensated sum per record, then across
/// records in the given order.
pub fn perplexity_from_logprobs<'a>(per_record: impl IntoIterator<Item = &'a [f64]>) -> Result<f64> {
    let mut total = KahanSum::default();
    let mut count = 0usize;
    for lps in per_record {
        let mut s = KahanSum::default();
        for &lp in lps {
            s.add(lp);
        }
        total.add(s.value());
        count += lps.len();
    }
    if count == 0 {
        return Err(Error::InsufficientData("no continuation tokens to score".into()));
    }
    Ok((-total.value() / count as f64).exp())
}
