use std::collections::HashMap;
use std::hash::Hash;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::decoding::GenerationRecord;
use crate::error::{Error, Result};
use crate::exec::KahanSum;
use crate::lm::{Corpus, TokenId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZipfConfig {
    /// Highest rank included in the fit.
    pub max_rank: usize,
    /// Fewer distinct types than this is an error.
    pub min_types: usize,
}

impl Default for ZipfConfig {
    fn default() -> Self {
        Self {
            max_rank: 5000,
            min_types: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZipfFit {
    /// Negated slope of log-frequency on log-rank.
    pub s: f64,
    pub r2: f64,
    /// Inclusive rank range of the fit.
    pub range: (usize, usize),
    #[serde(skip)]
    pub pairs: Vec<(usize, u64)>,
}

/// Type frequencies in descending order; ties keep first-occurrence order.
pub fn rank_frequencies<T: Hash + Eq>(tokens: impl IntoIterator<Item = T>) -> Vec<u64> {
    let mut index: HashMap<T, usize> = HashMap::new();
    let mut counts: Vec<u64> = Vec::new();
    for t in tokens {
        let next = counts.len();
        let i = *index.entry(t).or_insert(next);
        if i == counts.len() {
            counts.push(0);
        }
        counts[i] += 1;
    }
    // Stable sort keeps first-occurrence order among equal counts.
    counts.sort_by(|a, b| b.cmp(a));
    counts
}

/// Fits `log f = c - s log r` by least squares over ranks `1..=min(max_rank, types)`.
pub fn zipf_fit(frequencies: &[u64], config: &ZipfConfig) -> Result<ZipfFit> {
    let types = frequencies.iter().take_while(|&&f| f > 0).count();
    if types < config.min_types.max(2) {
        return Err(Error::InsufficientData(format!(
            "Zipf fit needs at least {} distinct types, got {}",
            config.min_types.max(2),
            types
        )));
    }
    if config.max_rank < 2 {
        return Err(Error::param("Zipf max_rank must be at least 2"));
    }
    let m = types.min(config.max_rank);
    let pairs: Vec<(usize, u64)> = (1..=m).map(|r| (r, frequencies[r - 1])).collect();

    // Centered sums; y is shifted by its first value so that a flat line
    // gives an exactly zero slope.
    let xs: Vec<f64> = pairs.iter().map(|&(r, _)| (r as f64).ln()).collect();
    let y0 = (pairs[0].1 as f64).ln();
    let ys: Vec<f64> = pairs.iter().map(|&(_, f)| (f as f64).ln() - y0).collect();
    let mean = |v: &[f64]| {
        let mut s = KahanSum::default();
        v.iter().for_each(|&x| s.add(x));
        s.value() / v.len() as f64
    };
    let (mx, my) = (mean(&xs), mean(&ys));
    let (mut sxx, mut sxy, mut syy) = (KahanSum::default(), KahanSum::default(), KahanSum::default());
    for (&x, &y) in xs.iter().zip(&ys) {
        let (dx, dy) = (x - mx, y - my);
        sxx.add(dx * dx);
        sxy.add(dx * dy);
        syy.add(dy * dy);
    }
    let (sxx, sxy, syy) = (sxx.value(), sxy.value(), syy.value());
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok(ZipfFit {
        s: if slope == 0.0 { 0.0 } else { -slope },
        r2,
        range: (1, m),
        pairs,
    })
}

/// Zipf fit over the continuation tokens of `records` (no `</s>`).
pub fn zipf_fit_records(records: &[GenerationRecord], eod: TokenId, config: &ZipfConfig) -> Result<ZipfFit> {
    let mut sorted: Vec<&GenerationRecord> = records.iter().collect();
    sorted.sort_by_key(|r| r.id);
    let freqs = rank_frequencies(sorted.iter().flat_map(|r| r.text_tokens(eod).iter().copied()));
    zipf_fit(&freqs, config)
}

pub fn zipf_fit_corpus(corpus: &Corpus, config: &ZipfConfig) -> Result<ZipfFit> {
    let freqs = rank_frequencies(corpus.documents.iter().flatten().map(String::as_str));
    zipf_fit(&freqs, config)
}

/// `rank,frequency` rows for every type.
pub fn write_rank_frequency_csv(path: &Path, frequencies: &[u64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(Error::Csv)?;
    w.write_record(["rank", "frequency"])?;
    for (i, f) in frequencies.iter().enumerate() {
        w.write_record([(i + 1).to_string(), f.to_string()])?;
    }
    w.flush().map_err(|e| Error::at_path(path, e))?;
    Ok(())
}
