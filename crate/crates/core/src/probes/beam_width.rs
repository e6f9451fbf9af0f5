use std::collections::HashSet;

use serde::Serialize;

use super::ProbeSeries;
use crate::decoding::{beam_search, human_record, GenerationRecord, HUMAN_LABEL};
use crate::error::{Error, Result};
use crate::exec::try_par_map;
use crate::lm::{ContextWindow, DistributionProvider, TokenId};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BeamWidthRow {
    pub label: String,
    /// `None` for the gold-continuation row.
    pub width: Option<usize>,
    pub generations: usize,
    /// Continuation tokens up to and excluding `</s>`.
    pub mean_length: f64,
    /// Distinct trigrams over all continuations.
    pub distinct_trigrams: usize,
}

/// Number of distinct token trigrams inside the given sequences.
pub fn distinct_trigrams<'a>(seqs: impl IntoIterator<Item = &'a [TokenId]>) -> usize {
    let mut set = HashSet::new();
    for s in seqs {
        for w in s.windows(3) {
            set.insert([w[0], w[1], w[2]]);
        }
    }
    set.len()
}

/// One beam-search row per width plus a final row for the gold continuations.
pub fn beam_width_effect<P>(
    provider: &P,
    items: &[(ContextWindow, Vec<TokenId>)],
    widths: &[usize],
    max_len: usize,
) -> Result<Vec<BeamWidthRow>>
where
    P: DistributionProvider + Sync + ?Sized,
{
    if widths.contains(&0) {
        return Err(Error::param("beam widths must be at least 1"));
    }
    if items.is_empty() {
        return Err(Error::param("beam-width probe needs at least one context"));
    }
    let eod = provider.eod();
    let mut rows = Vec::with_capacity(widths.len() + 1);
    for &b in widths {
        let records = try_par_map(items, |_, (ctx, _)| beam_search(provider, ctx, b, max_len))?;
        rows.push(row(format!("beam:b={b}"), Some(b), &records, eod));
    }
    let human = try_par_map(items, |i, (ctx, gold)| human_record(provider, i as u64, ctx, gold, max_len))?;
    rows.push(row(HUMAN_LABEL.to_string(), None, &human, eod));
    Ok(rows)
}

fn row(label: String, width: Option<usize>, records: &[GenerationRecord], eod: TokenId) -> BeamWidthRow {
    let total: usize = records.iter().map(|r| r.text_tokens(eod).len()).sum();
    BeamWidthRow {
        label,
        width,
        generations: records.len(),
        mean_length: total as f64 / records.len() as f64,
        distinct_trigrams: distinct_trigrams(records.iter().map(|r| r.text_tokens(eod))),
    }
}

/// Beam rows as a series over width (sorted); the human row goes into the
/// metadata.
pub fn beam_width_series(rows: &[BeamWidthRow]) -> Result<ProbeSeries> {
    let mut beams: Vec<&BeamWidthRow> = rows.iter().filter(|r| r.width.is_some()).collect();
    beams.sort_by_key(|r| r.width);
    beams.dedup_by_key(|r| r.width);
    let x = beams.iter().map(|r| r.width.unwrap() as f64).collect();
    let mut s = ProbeSeries::new("beam_width", "beam_width", x)?
        .with_column("mean_length", beams.iter().map(|r| r.mean_length).collect())?
        .with_column("distinct_trigrams", beams.iter().map(|r| r.distinct_trigrams as f64).collect())?;
    if let Some(h) = rows.iter().find(|r| r.width.is_none()) {
        s = s
            .with_meta("human_mean_length", h.mean_length)
            .with_meta("human_distinct_trigrams", h.distinct_trigrams);
    }
    Ok(s)
}
