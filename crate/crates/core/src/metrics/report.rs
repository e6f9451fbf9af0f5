use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::bleu::{self_bleu, SelfBleuConfig};
use super::perplexity::{generation_perplexity, recorded_perplexity};
use super::repetition::repetition_pct;
use super::zipf::{zipf_fit_records, ZipfConfig};
use crate::decoding::GenerationRecord;
use crate::error::{Error, Result};
use crate::lm::{DistributionProvider, TokenId};

pub const CSV_COLUMNS: [&str; 6] = ["method", "perplexity", "self_bleu4", "zipf", "repetition_pct", "huse"];

/// A metric value and the number of items it was computed from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measured {
    pub value: f64,
    pub sample_size: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    pub method: String,
    pub generations: usize,
    /// Continuation tokens, `</s>` included.
    pub tokens: usize,
    /// Sample size is the token count.
    pub perplexity: Option<Measured>,
    /// Sample size is the number of hypotheses scored.
    pub self_bleu4: Option<Measured>,
    /// Sample size is the number of ranks fitted.
    pub zipf: Option<Measured>,
    pub zipf_r2: Option<f64>,
    /// Sample size is the number of records.
    pub repetition_pct: Option<Measured>,
    /// Sample size is the number of instances classified.
    pub huse: Option<Measured>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsConfig {
    pub perplexity: bool,
    pub self_bleu: Option<SelfBleuConfig>,
    pub zipf: Option<ZipfConfig>,
    pub repetition: bool,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            perplexity: true,
            self_bleu: Some(SelfBleuConfig::default()),
            zipf: Some(ZipfConfig::default()),
            repetition: true,
        }
    }
}

/// Computes the enabled metrics. Perplexity is rescored under `provider`
/// when given, else taken from the stored model log-probabilities. A metric
/// without enough data is left missing rather than failing the report.
pub fn evaluate<P>(
    method: &str,
    records: &[GenerationRecord],
    provider: Option<&P>,
    eod: TokenId,
    config: &MetricsConfig,
) -> Result<MetricsReport>
where
    P: DistributionProvider + Sync + ?Sized,
{
    let tokens: usize = records.iter().map(|r| r.continuation.len()).sum();
    let mut report = MetricsReport {
        method: method.to_string(),
        generations: records.len(),
        tokens,
        ..MetricsReport::default()
    };
    if config.perplexity {
        let ppl = match provider {
            Some(p) => generation_perplexity(records, p),
            None => recorded_perplexity(records),
        };
        report.perplexity = missing_if_short(ppl, "perplexity")?.map(|value| Measured {
            value,
            sample_size: tokens,
        });
    }
    if let Some(cfg) = &config.self_bleu {
        report.self_bleu4 = missing_if_short(self_bleu(records, eod, cfg), "Self-BLEU")?.map(|b| Measured {
            value: b.value,
            sample_size: b.sampled,
        });
    }
    if let Some(cfg) = &config.zipf {
        if let Some(fit) = missing_if_short(zipf_fit_records(records, eod, cfg), "Zipf")? {
            report.zipf = Some(Measured {
                value: fit.s,
                sample_size: fit.range.1,
            });
            report.zipf_r2 = Some(fit.r2);
        }
    }
    if config.repetition && !records.is_empty() {
        report.repetition_pct = Some(Measured {
            value: repetition_pct(records, eod),
            sample_size: records.len(),
        });
    }
    Ok(report)
}

fn missing_if_short<T>(r: Result<T>, what: &str) -> Result<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::InsufficientData(msg)) => {
            log::warn!("{what} left missing: {msg}");
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

impl MetricsReport {
    /// One CSV row in `CSV_COLUMNS` order; missing values are empty cells.
    pub fn csv_row(&self) -> [String; 6] {
        let cell = |m: &Option<Measured>| m.map_or_else(String::new, |m| m.value.to_string());
        [
            self.method.clone(),
            cell(&self.perplexity),
            cell(&self.self_bleu4),
            cell(&self.zipf),
            cell(&self.repetition_pct),
            cell(&self.huse),
        ]
    }
}

pub fn write_metrics_csv<W: Write>(out: W, reports: &[MetricsReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_COLUMNS)?;
    for r in reports {
        w.write_record(r.csv_row())?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_metrics_files(csv_path: &Path, json_path: &Path, reports: &[MetricsReport]) -> Result<()> {
    let f = std::fs::File::create(csv_path).map_err(|e| Error::at_path(csv_path, e))?;
    write_metrics_csv(f, reports)?;
    let json = serde_json::to_string_pretty(reports)?;
    std::fs::write(json_path, json + "\n").map_err(|e| Error::at_path(json_path, e))?;
    Ok(())
}
