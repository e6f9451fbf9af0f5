//! Pure transformations over [`TokenDistribution`]: nucleus and top-k
//! truncation, temperature, interpolation, and inverse-CDF sampling.

use crate::error::{Error, Result};
use crate::exec::KahanSum;
use crate::lm::{rank_cmp, softmax, sort_descending, RankedIter, TokenDistribution, TokenId};
use crate::rng::RngStream;

/// A truncated distribution together with the kept mass `p'` and the
/// number of tokens kept.
#[derive(Debug, Clone, PartialEq)]
pub struct Truncated {
    pub dist: TokenDistribution,
    pub kept_mass: f64,
    pub support: usize,
}

/// Restricts `dist` to its top-p vocabulary: the shortest prefix of the
/// descending ranking whose cumulative mass reaches `p`, renormalized by
/// that mass. Every other entry is exactly zero.
pub fn truncate_nucleus(dist: &TokenDistribution, p: f64) -> Result<Truncated> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::param(format!("nucleus p must be in (0, 1], got {p}")));
    }
    if p >= 1.0 {
        return Ok(identity(dist));
    }
    let order = nucleus_prefix(dist.probs(), p);
    if order.len() == dist.len() {
        return Ok(identity(dist));
    }
    Ok(keep(dist, &order))
}

/// Shortest ranked prefix with compensated cumulative mass `>= p` (the whole
/// ranking if rounding keeps the total below `p`).
fn nucleus_prefix(probs: &[f64], p: f64) -> Vec<TokenId> {
    let mut acc = KahanSum::default();
    let mut out = Vec::new();
    for t in RankedIter::new(probs, (0..probs.len() as TokenId).collect()) {
        out.push(t);
        acc.add(probs[t as usize]);
        if acc.value() >= p {
            break;
        }
    }
    out
}

/// Size of the top-p vocabulary without materializing the truncated vector.
/// At `p = 1` this is the support, not the vocabulary.
pub fn nucleus_size(dist: &TokenDistribution, p: f64) -> usize {
    if p >= 1.0 {
        return dist.support_size();
    }
    nucleus_prefix(dist.probs(), p).len()
}

/// Keeps the `k` most probable tokens (ascending id among equals at the
/// boundary) and renormalizes.
pub fn truncate_topk(dist: &TokenDistribution, k: usize) -> Result<Truncated> {
    if k < 1 || k > dist.len() {
        return Err(Error::param(format!(
            "top-k requires 1 <= k <= {}, got {k}",
            dist.len()
        )));
    }
    if k == dist.len() {
        return Ok(identity(dist));
    }
    let order = ranked_prefix(dist.probs(), k);
    Ok(keep(dist, &order))
}

/// Softmax of `logits / t`, using `ln(probs)` when the distribution carries
/// no logits. `t = 1` returns the input unchanged.
pub fn apply_temperature(dist: &TokenDistribution, t: f64) -> Result<TokenDistribution> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::param(format!("temperature must be positive, got {t}")));
    }
    if t == 1.0 {
        return Ok(dist.clone());
    }
    let logits: Vec<f64> = match dist.logits() {
        Some(u) => u.to_vec(),
        None => dist.probs().iter().map(|p| p.ln()).collect(),
    };
    let probs = softmax(&logits, t);
    Ok(TokenDistribution::from_probs_unchecked(probs))
}

/// `mass * original + (1 - mass) * truncated`.
pub fn interpolate_with_original(
    truncated: &TokenDistribution,
    original: &TokenDistribution,
    mass: f64,
) -> Result<TokenDistribution> {
    if !(0.0..=1.0).contains(&mass) {
        return Err(Error::param(format!("interpolation mass must be in [0, 1], got {mass}")));
    }
    if truncated.len() != original.len() {
        return Err(Error::InvalidDistribution(format!(
            "length mismatch: {} vs {}",
            truncated.len(),
            original.len()
        )));
    }
    if mass == 0.0 {
        return Ok(truncated.clone());
    }
    let probs = truncated
        .probs()
        .iter()
        .zip(original.probs())
        .map(|(&t, &o)| mass * o + (1.0 - mass) * t)
        .collect();
    Ok(TokenDistribution::from_probs_unchecked(probs))
}

/// Inverse-CDF draw over the descending ranking. Consumes exactly one
/// uniform from `rng`.
pub fn sample_token(dist: &TokenDistribution, rng: &mut RngStream) -> TokenId {
    let u = rng.next_f64();
    sample_with_uniform(dist, u)
}

/// Deterministic core of [`sample_token`] for a given uniform `u` in `[0, 1)`.
pub fn sample_with_uniform(dist: &TokenDistribution, u: f64) -> TokenId {
    let probs = dist.probs();
    let ids: Vec<TokenId> = (0..probs.len() as TokenId)
        .filter(|&t| probs[t as usize] > 0.0)
        .collect();
    let mut cum = 0.0;
    let mut last = None;
    for t in RankedIter::new(probs, ids) {
        cum += probs[t as usize];
        if u < cum {
            return t;
        }
        last = Some(t);
    }
    // u landed in the rounding gap above the accumulated total
    last.expect("distribution has no positive entry")
}

/// The `n` top-ranked ids, in ranking order.
fn ranked_prefix(probs: &[f64], n: usize) -> Vec<TokenId> {
    let mut ids: Vec<TokenId> = (0..probs.len() as TokenId).collect();
    if n < ids.len() {
        ids.select_nth_unstable_by(n, |&a, &b| rank_cmp(probs, a, b));
        ids.truncate(n);
    }
    sort_descending(probs, &mut ids);
    ids
}

fn keep(dist: &TokenDistribution, ranked: &[TokenId]) -> Truncated {
    let probs = dist.probs();
    let mut acc = KahanSum::default();
    for &t in ranked {
        acc.add(probs[t as usize]);
    }
    let mass = acc.value();
    let mut out = vec![0.0; probs.len()];
    for &t in ranked {
        out[t as usize] = probs[t as usize] / mass;
    }
    Truncated {
        dist: TokenDistribution::from_probs_unchecked(out),
        kept_mass: mass,
        support: ranked.len(),
    }
}

fn identity(dist: &TokenDistribution) -> Truncated {
    Truncated {
        dist: dist.clone(),
        kept_mass: crate::exec::compensated_sum(dist.probs().iter().copied()),
        support: dist.len(),
    }
}
