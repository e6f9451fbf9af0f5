use serde::Serialize;

use super::annotations::{generation_key, AnnotationSet};
use crate::decoding::GenerationRecord;
use crate::error::{Error, Result};
use crate::exec::{try_par_map, KahanSum};
use crate::lm::{score, ContextWindow, DistributionProvider};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Human,
    Model,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HuseInstance {
    pub generation_id: String,
    /// z-normalized (per-token log-probability, mean typicality).
    pub features: [f64; 2],
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HuseFeatures {
    pub instances: Vec<HuseInstance>,
    /// Raw feature means and population standard deviations before
    /// normalization.
    pub means: [f64; 2],
    pub sds: [f64; 2],
}

/// Builds one instance per record: the per-token log-probability of the
/// continuation rescored under `provider`, and the mean typicality score.
/// Human records are labelled by `GenerationRecord::is_human`.
pub fn extract_features<P>(records: &[GenerationRecord], provider: &P, annotations: &AnnotationSet) -> Result<HuseFeatures>
where
    P: DistributionProvider + Sync + ?Sized,
{
    let v = provider.vocab_size();
    let raw = try_par_map(records, |_, r| {
        let key = generation_key(r);
        let typicality = annotations
            .mean_score(&key)
            .ok_or_else(|| Error::Annotations(format!("no annotations for generation '{key}'")))?;
        let lps = score(provider, &ContextWindow::new(r.context.clone(), v)?, &r.continuation)?;
        let mut s = KahanSum::default();
        lps.iter().for_each(|&x| s.add(x));
        let lp = s.value() / lps.len() as f64;
        if !lp.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "generation '{key}' has a non-finite per-token log-probability"
            )));
        }
        Ok((key, [lp, typicality]))
    })?;

    let mut means = [0.0; 2];
    let mut sds = [0.0; 2];
    for f in 0..2 {
        let mut s = KahanSum::default();
        raw.iter().for_each(|(_, x)| s.add(x[f]));
        means[f] = s.value() / raw.len().max(1) as f64;
        let mut q = KahanSum::default();
        raw.iter().for_each(|(_, x)| q.add((x[f] - means[f]).powi(2)));
        sds[f] = (q.value() / raw.len().max(1) as f64).sqrt();
    }
    let instances = raw
        .into_iter()
        .zip(records)
        .map(|((key, x), r)| {
            let mut features = [0.0; 2];
            for f in 0..2 {
                // A constant feature carries no information; keep it at 0.
                if sds[f] > 0.0 {
                    features[f] = (x[f] - means[f]) / sds[f];
                }
            }
            HuseInstance {
                generation_id: key,
                features,
                label: if r.is_human() { Label::Human } else { Label::Model },
            }
        })
        .collect();
    Ok(HuseFeatures { instances, means, sds })
}
