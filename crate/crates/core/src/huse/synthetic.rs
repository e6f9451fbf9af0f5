use std::cmp::Ordering;

use super::annotations::{generation_key, Annotation, AnnotationSet, SCORE_MAX, SCORE_MIN};
use crate::decoding::GenerationRecord;
use crate::error::{Error, Result};
use crate::exec::{try_par_map, KahanSum};
use crate::lm::{score, ContextWindow, DistributionProvider};
use crate::rng::RngStream;

/// Simulated crowd: each annotator maps the per-token log-probability of a
/// text to a 1..=5 bucket, shifts it by a fixed personal bias and adds
/// bounded noise.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatorConfig {
    pub annotators: usize,
    /// Ascending per-token log-probability thresholds; a text above `i` of
    /// them gets base score `1 + i`.
    pub thresholds: [f64; 4],
    /// Biases are uniform in `[-max_bias, max_bias]`.
    pub max_bias: f64,
    /// Noise is uniform in `[-max_noise, max_noise]`.
    pub max_noise: f64,
}

impl Default for AnnotatorConfig {
    fn default() -> Self {
        Self {
            annotators: 20,
            thresholds: [-7.0, -5.5, -4.5, -3.5],
            max_bias: 0.5,
            max_noise: 1.0,
        }
    }
}

pub fn synthetic_annotator<P>(
    records: &[GenerationRecord],
    reference: &P,
    seed: u64,
    config: &AnnotatorConfig,
) -> Result<AnnotationSet>
where
    P: DistributionProvider + Sync + ?Sized,
{
    if config.annotators == 0 {
        return Err(Error::param("at least one annotator is required"));
    }
    if config.thresholds.windows(2).any(|w| !w[0].partial_cmp(&w[1]).is_some_and(Ordering::is_le)) {
        return Err(Error::param("annotator thresholds must be ascending"));
    }
    let biases: Vec<f64> = (0..config.annotators as u64)
        .map(|a| {
            let mut rng = RngStream::derived(seed, "annotator-bias", a);
            (2.0 * rng.next_f64() - 1.0) * config.max_bias
        })
        .collect();
    let v = reference.vocab_size();
    let per_record = try_par_map(records, |_, r| {
        let lps = score(reference, &ContextWindow::new(r.context.clone(), v)?, &r.continuation)?;
        let mut s = KahanSum::default();
        lps.iter().for_each(|&x| s.add(x));
        let lp = if lps.is_empty() { f64::NEG_INFINITY } else { s.value() / lps.len() as f64 };
        let base = 1 + config.thresholds.iter().filter(|&&t| lp > t).count();
        let key = generation_key(r);
        let mut noise = RngStream::derived(seed, &format!("annotation/{key}"), 0);
        let rows: Vec<Annotation> = biases
            .iter()
            .enumerate()
            .map(|(a, &bias)| {
                let e = (2.0 * noise.next_f64() - 1.0) * config.max_noise;
                let raw = (base as f64 + bias + e).round();
                Annotation {
                    generation_id: key.clone(),
                    annotator_id: format!("a{a:02}"),
                    score: raw.clamp(SCORE_MIN as f64, SCORE_MAX as f64) as u8,
                }
            })
            .collect();
        Ok::<_, Error>(rows)
    })?;
    let mut set = AnnotationSet::new();
    for a in per_record.into_iter().flatten() {
        set.add(a)?;
    }
    Ok(set)
}
