//! HUSE: how well a nearest-neighbour discriminator over (model
//! log-probability, human typicality) separates human from model text.

mod annotations;
mod features;
mod knn;
mod synthetic;

use serde::Serialize;

pub use annotations::{generation_key, Annotation, AnnotationSet, SCORE_MAX, SCORE_MIN};
pub use features::{extract_features, HuseFeatures, HuseInstance, Label};
pub use knn::{huse_score, loo_predictions, HuseScore, DEFAULT_K};
pub use synthetic::{synthetic_annotator, AnnotatorConfig};

use crate::decoding::{generate, human_record, DecoderConfig, GenerationRecord, Strategy, HUSE_INTERPOLATION_MASS};
use crate::error::{Error, Result};
use crate::exec::try_par_map;
use crate::lm::{ContextWindow, DistributionProvider, TokenId};

/// Generates one record per context (id = index) from `config` with the
/// untruncated distribution mixed back in with weight `mass`.
pub fn generate_for_huse<P>(
    provider: &P,
    contexts: &[ContextWindow],
    config: &DecoderConfig,
    mass: f64,
) -> Result<Vec<GenerationRecord>>
where
    P: DistributionProvider + Sync + ?Sized,
{
    if !matches!(config.strategy, Strategy::TopK | Strategy::Nucleus) {
        return Err(Error::param(format!(
            "HUSE generation needs a top-k or nucleus decoder, got '{}'",
            config.spec()
        )));
    }
    let cfg = config.clone().with_interpolation(mass);
    try_par_map(contexts, |i, ctx| generate(provider, ctx, &cfg, i as u64))
}

#[derive(Debug, Clone, PartialEq)]
pub struct HuseRunConfig {
    pub k: usize,
    pub mass: f64,
    pub annotator_seed: u64,
    pub annotator: AnnotatorConfig,
}

impl Default for HuseRunConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            mass: HUSE_INTERPOLATION_MASS,
            annotator_seed: 0,
            annotator: AnnotatorConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HuseReport {
    pub method: String,
    pub interpolation_mass: f64,
    pub score: f64,
    pub k: usize,
    pub instances: usize,
    pub loo_error: f64,
    /// Raw (log-probability, typicality) means and standard deviations.
    pub feature_means: [f64; 2],
    pub feature_sds: [f64; 2],
}

pub struct HuseRun {
    pub report: HuseReport,
    /// Gold records first, then model records.
    pub records: Vec<GenerationRecord>,
    pub annotations: AnnotationSet,
}

/// Full pipeline: interpolated generation, gold continuations as the human
/// side, synthetic annotation under `reference`, features under `provider`,
/// and the leave-one-out score.
pub fn run_huse<P, R>(
    provider: &P,
    reference: &R,
    items: &[(ContextWindow, Vec<TokenId>)],
    decoder: &DecoderConfig,
    config: &HuseRunConfig,
) -> Result<HuseRun>
where
    P: DistributionProvider + Sync + ?Sized,
    R: DistributionProvider + Sync + ?Sized,
{
    let contexts: Vec<ContextWindow> = items.iter().map(|(c, _)| c.clone()).collect();
    let model = generate_for_huse(provider, &contexts, decoder, config.mass)?;
    let mut records = try_par_map(items, |i, (ctx, gold)| human_record(provider, i as u64, ctx, gold, decoder.max_len))?;
    records.extend(model);
    let annotations = synthetic_annotator(&records, reference, config.annotator_seed, &config.annotator)?;
    let features = extract_features(&records, provider, &annotations)?;
    let s = huse_score(&features.instances, config.k)?;
    Ok(HuseRun {
        report: HuseReport {
            method: decoder.spec(),
            interpolation_mass: config.mass,
            score: s.score,
            k: s.k,
            instances: s.instances,
            loo_error: s.loo_error,
            feature_means: features.means,
            feature_sds: features.sds,
        },
        records,
        annotations,
    })
}
