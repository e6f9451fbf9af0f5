//! Beam search and Gumbel-top-k stochastic beam search.
//!
//! Both keep at most `b` hypotheses. A hypothesis that emits `</s>` is frozen:
//! it stays in the beam with its score and competes with the expansions of
//! the still-open hypotheses. Scores are raw sequence log-probabilities
//! (no length normalization).

use std::cmp::Ordering;

use super::config::DecoderConfig;
use super::record::{GenerationRecord, Termination};
use crate::error::{Error, Result};
use crate::lm::{rank_cmp, ContextWindow, DistributionProvider, TokenId};
use crate::rng::RngStream;

#[derive(Debug, Clone)]
pub struct Hypothesis {
    pub tokens: Vec<TokenId>,
    pub logprobs: Vec<f64>,
    /// Sequence log-probability.
    pub score: f64,
    /// Selection key: the score for beam search, the perturbed and
    /// conditioned Gumbel value for stochastic beam search.
    pub key: f64,
    pub finished: bool,
}

struct Candidate {
    key: f64,
    score: f64,
    token: TokenId,
    parent: usize,
    logprob: f64,
    /// Frozen hypothesis carried over unchanged.
    carried: bool,
}

fn candidate_cmp(a: &Candidate, b: &Candidate) -> Ordering {
    b.key
        .total_cmp(&a.key)
        .then(a.token.cmp(&b.token))
        .then(a.parent.cmp(&b.parent))
}

enum Noise<'r> {
    None,
    Gumbel { scale: f64, rng: &'r mut RngStream },
}

/// Runs the search and returns the final beam ordered by key (descending).
fn search<P: DistributionProvider + ?Sized>(
    provider: &P,
    context: &ContextWindow,
    b: usize,
    max_len: usize,
    mut noise: Noise<'_>,
) -> Result<Vec<Hypothesis>> {
    if b < 1 {
        return Err(Error::param("beam width must be at least 1"));
    }
    let eod = provider.eod();
    let mut beam = vec![Hypothesis {
        tokens: Vec::new(),
        logprobs: Vec::new(),
        score: 0.0,
        key: 0.0,
        finished: false,
    }];
    let mut history = context.tokens().to_vec();
    let ctx_len = history.len();

    for _ in 0..max_len {
        if beam.iter().all(|h| h.finished) {
            break;
        }
        let mut cands: Vec<Candidate> = Vec::new();
        for (hi, h) in beam.iter().enumerate() {
            if h.finished {
                cands.push(Candidate {
                    key: h.key,
                    score: h.score,
                    token: *h.tokens.last().unwrap_or(&eod),
                    parent: hi,
                    logprob: 0.0,
                    carried: true,
                });
                continue;
            }
            history.truncate(ctx_len);
            history.extend_from_slice(&h.tokens);
            let dist = provider.next_distribution(&history)?;
            let probs = dist.probs();
            match &mut noise {
                Noise::None => {
                    let mut ids: Vec<TokenId> = (0..probs.len() as TokenId).collect();
                    if b < ids.len() {
                        ids.select_nth_unstable_by(b, |&x, &y| rank_cmp(probs, x, y));
                        ids.truncate(b);
                    }
                    for t in ids {
                        let lp = dist.log_prob(t);
                        let s = h.score + lp;
                        cands.push(Candidate {
                            key: s,
                            score: s,
                            token: t,
                            parent: hi,
                            logprob: lp,
                            carried: false,
                        });
                    }
                }
                Noise::Gumbel { scale, rng } => {
                    let start = cands.len();
                    let mut z = f64::NEG_INFINITY;
                    for (t, &p) in probs.iter().enumerate() {
                        if p <= 0.0 {
                            continue;
                        }
                        let lp = p.ln();
                        let s = h.score + lp;
                        let g = s + *scale * rng.gumbel();
                        z = z.max(g);
                        cands.push(Candidate {
                            key: g,
                            score: s,
                            token: t as TokenId,
                            parent: hi,
                            logprob: lp,
                            carried: false,
                        });
                    }
                    for c in &mut cands[start..] {
                        c.key = conditioned_gumbel(h.key, z, c.key);
                    }
                }
            }
        }

        let keep = b.min(cands.len());
        if keep < cands.len() {
            cands.select_nth_unstable_by(keep, candidate_cmp);
            cands.truncate(keep);
        }
        cands.sort_unstable_by(candidate_cmp);

        beam = cands
            .into_iter()
            .map(|c| {
                let parent = &beam[c.parent];
                if c.carried {
                    return parent.clone();
                }
                let mut tokens = parent.tokens.clone();
                tokens.push(c.token);
                let mut logprobs = parent.logprobs.clone();
                logprobs.push(c.logprob);
                Hypothesis {
                    tokens,
                    logprobs,
                    score: c.score,
                    key: c.key,
                    finished: c.token == eod,
                }
            })
            .collect();
    }
    Ok(beam)
}

/// Gumbel value of a child conditioned on its parent's value `parent`,
/// given the child's unconditioned perturbed score `g` and the maximum `z`
/// over all siblings: `-ln(exp(-parent) - exp(-z) + exp(-g))`, evaluated
/// stably.
fn conditioned_gumbel(parent: f64, z: f64, g: f64) -> f64 {
    let v = parent - g + log1mexp(g - z);
    parent - v.max(0.0) - (-v.abs()).exp().ln_1p()
}

/// `ln(1 - exp(a))` for `a <= 0`.
fn log1mexp(a: f64) -> f64 {
    if a > -std::f64::consts::LN_2 {
        (-a.exp_m1()).ln()
    } else {
        (-a.exp()).ln_1p()
    }
}

fn to_record(context: &ContextWindow, h: Hypothesis) -> GenerationRecord {
    GenerationRecord {
        id: 0,
        context: context.tokens().to_vec(),
        terminated_by: if h.finished {
            Termination::Eod
        } else {
            Termination::MaxLen
        },
        decoder_logprobs: h.logprobs.clone(),
        model_logprobs: h.logprobs,
        continuation: h.tokens,
        config: None,
    }
}

/// Best finished hypothesis in the final beam, else the best one overall.
fn pick_best(beam: Vec<Hypothesis>) -> Hypothesis {
    let best_of = |it: &mut dyn Iterator<Item = Hypothesis>| {
        it.reduce(|a, b| if b.score > a.score { b } else { a })
    };
    let has_finished = beam.iter().any(|h| h.finished);
    let mut it = beam.into_iter().filter(|h| h.finished || !has_finished);
    best_of(&mut it).expect("beam is never empty")
}

pub(crate) fn beam_search_with<P: DistributionProvider + ?Sized>(
    provider: &P,
    context: &ContextWindow,
    b: usize,
    max_len: usize,
) -> Result<GenerationRecord> {
    let beam = search(provider, context, b, max_len, Noise::None)?;
    Ok(to_record(context, pick_best(beam)))
}

pub(crate) fn stochastic_beam_search_with<P: DistributionProvider + ?Sized>(
    provider: &P,
    context: &ContextWindow,
    b: usize,
    max_len: usize,
    noise_scale: f64,
    rng: &mut RngStream,
) -> Result<GenerationRecord> {
    if noise_scale == 0.0 {
        return beam_search_with(provider, context, b, max_len);
    }
    let mut beam = search(
        provider,
        context,
        b,
        max_len,
        Noise::Gumbel {
            scale: noise_scale,
            rng,
        },
    )?;
    let pick = rng.below(beam.len() as u64) as usize;
    Ok(to_record(context, beam.swap_remove(pick)))
}

/// Deterministic beam search maximizing sequence log-probability.
pub fn beam_search<P: DistributionProvider + ?Sized>(
    provider: &P,
    context: &ContextWindow,
    b: usize,
    max_len: usize,
) -> Result<GenerationRecord> {
    let mut r = beam_search_with(provider, context, b, max_len)?;
    r.config = Some(DecoderConfig::beam(b).with_max_len(max_len));
    Ok(r)
}

/// Stochastic beam search: Gumbel-top-b sampling of sequences without
/// replacement, returning one of the sampled sequences uniformly. The
/// random stream is `stream(seed, id)`.
pub fn stochastic_beam_search<P: DistributionProvider + ?Sized>(
    provider: &P,
    context: &ContextWindow,
    b: usize,
    max_len: usize,
    seed: u64,
    id: u64,
) -> Result<GenerationRecord> {
    let cfg = DecoderConfig::stochastic_beam(b)
        .with_max_len(max_len)
        .with_seed(seed);
    super::generate(provider, context, &cfg, id)
}

/// All sequences in the final stochastic beam (distinct by construction),
/// ordered by their Gumbel keys.
pub fn stochastic_beam_samples<P: DistributionProvider + ?Sized>(
    provider: &P,
    context: &ContextWindow,
    b: usize,
    max_len: usize,
    seed: u64,
    id: u64,
) -> Result<Vec<Hypothesis>> {
    let mut rng = RngStream::new(seed, id);
    search(
        provider,
        context,
        b,
        max_len,
        Noise::Gumbel {
            scale: 1.0,
            rng: &mut rng,
        },
    )
}
