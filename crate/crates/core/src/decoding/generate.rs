use std::borrow::Cow;

use super::beam::{beam_search_with, stochastic_beam_search_with};
use super::config::{DecoderConfig, Strategy};
use super::record::{GenerationRecord, Termination};
use super::truncate::{
    apply_temperature, interpolate_with_original, sample_token, truncate_nucleus, truncate_topk,
};
use crate::error::Result;
use crate::lm::{check_ids, ContextWindow, DistributionProvider, TokenDistribution};
use crate::rng::RngStream;

/// The distribution a sampling strategy draws from at one step:
/// temperature first, then truncation, then (optionally) interpolation with
/// the untouched model distribution.
pub fn decoding_distribution<'a>(
    model: &'a TokenDistribution,
    config: &DecoderConfig,
) -> Result<Cow<'a, TokenDistribution>> {
    let shaped = if config.temperature != 1.0 {
        Cow::Owned(apply_temperature(model, config.temperature)?)
    } else {
        Cow::Borrowed(model)
    };
    let truncated = match config.strategy {
        Strategy::TopK => Cow::Owned(truncate_topk(&shaped, config.k)?.dist),
        Strategy::Nucleus => Cow::Owned(truncate_nucleus(&shaped, config.p)?.dist),
        _ => shaped,
    };
    if config.interpolation_mass > 0.0 {
        return Ok(Cow::Owned(interpolate_with_original(
            &truncated,
            model,
            config.interpolation_mass,
        )?));
    }
    Ok(truncated)
}

/// Generates one continuation of `context`. `id` selects the random stream
/// (`stream(config.seed, id)`), so the output depends only on
/// (provider, context, config, id).
pub fn generate<P: DistributionProvider + ?Sized>(
    provider: &P,
    context: &ContextWindow,
    config: &DecoderConfig,
    id: u64,
) -> Result<GenerationRecord> {
    config.validate(provider.vocab_size())?;
    check_ids(context.tokens(), provider.vocab_size())?;
    let mut record = match config.strategy {
        Strategy::Beam => beam_search_with(provider, context, config.beam_width, config.max_len)?,
        Strategy::StochasticBeam => {
            let mut rng = RngStream::new(config.seed, id);
            stochastic_beam_search_with(
                provider,
                context,
                config.beam_width,
                config.max_len,
                config.noise_scale,
                &mut rng,
            )?
        }
        _ => sampling_loop(provider, context, config, id)?,
    };
    record.id = id;
    record.config = Some(config.clone());
    Ok(record)
}

fn sampling_loop<P: DistributionProvider + ?Sized>(
    provider: &P,
    context: &ContextWindow,
    config: &DecoderConfig,
    id: u64,
) -> Result<GenerationRecord> {
    let eod = provider.eod();
    let mut rng = RngStream::new(config.seed, id);
    let mut history = context.tokens().to_vec();
    let mut continuation = Vec::new();
    let mut model_lp = Vec::new();
    let mut decoder_lp = Vec::new();
    let mut terminated_by = Termination::MaxLen;

    for _ in 0..config.max_len {
        let model = provider.next_distribution(&history)?;
        let (token, lp) = if config.strategy == Strategy::Greedy {
            (model.argmax(), 0.0)
        } else {
            let dec = decoding_distribution(&model, config)?;
            let t = sample_token(&dec, &mut rng);
            (t, dec.log_prob(t))
        };
        continuation.push(token);
        model_lp.push(model.log_prob(token));
        decoder_lp.push(lp);
        history.push(token);
        if token == eod {
            terminated_by = Termination::Eod;
            break;
        }
    }
    Ok(GenerationRecord {
        id,
        context: context.tokens().to_vec(),
        continuation,
        model_logprobs: model_lp,
        decoder_logprobs: decoder_lp,
        config: Some(config.clone()),
        terminated_by,
    })
}

/// Human reference record: the gold continuation scored under `provider`.
/// Truncated to `max_len` tokens; terminates on `</s>` if the gold text
/// reaches it within the limit.
pub fn human_record<P: DistributionProvider + ?Sized>(
    provider: &P,
    id: u64,
    context: &ContextWindow,
    gold: &[crate::lm::TokenId],
    max_len: usize,
) -> Result<GenerationRecord> {
    let eod = provider.eod();
    let end = gold
        .iter()
        .position(|&t| t == eod)
        .map_or(gold.len(), |i| i + 1)
        .min(max_len);
    let continuation = gold[..end].to_vec();
    let lps = crate::lm::score(provider, context, &continuation)?;
    let terminated_by = if continuation.last() == Some(&eod) {
        Termination::Eod
    } else {
        Termination::MaxLen
    };
    Ok(GenerationRecord {
        id,
        context: context.tokens().to_vec(),
        continuation,
        model_logprobs: lps.clone(),
        decoder_logprobs: lps,
        config: None,
        terminated_by,
    })
}
