use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::DecoderConfig;
use crate::error::{Error, Result};
use crate::lm::{TokenId, Tokenizer, Vocabulary};

pub const RECORD_SCHEMA_VERSION: u32 = 1;
pub const HUMAN_LABEL: &str = "human";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Eod,
    MaxLen,
}

/// One context and its continuation. The continuation includes the final
/// `</s>` when generation stopped on it.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRecord {
    pub id: u64,
    pub context: Vec<TokenId>,
    pub continuation: Vec<TokenId>,
    /// `log P(x_i | x_<i)` under the unmodified model.
    pub model_logprobs: Vec<f64>,
    /// Log-probability under the distribution actually sampled from.
    pub decoder_logprobs: Vec<f64>,
    /// `None` for human reference continuations.
    pub config: Option<DecoderConfig>,
    pub terminated_by: Termination,
}

impl GenerationRecord {
    pub fn label(&self) -> String {
        self.config
            .as_ref()
            .map_or_else(|| HUMAN_LABEL.to_string(), DecoderConfig::spec)
    }

    pub fn is_human(&self) -> bool {
        self.config.is_none()
    }

    /// Continuation without the trailing `</s>`.
    pub fn text_tokens(&self, eod: TokenId) -> &[TokenId] {
        match self.continuation.last() {
            Some(&t) if t == eod => &self.continuation[..self.continuation.len() - 1],
            _ => &self.continuation,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct RecordLine {
    v: u32,
    id: u64,
    strategy: String,
    config: Option<DecoderConfig>,
    context: Vec<TokenId>,
    continuation: Vec<TokenId>,
    model_logprobs: Vec<Option<f64>>,
    decoder_logprobs: Vec<Option<f64>>,
    terminated_by: Termination,
    #[serde(default)]
    context_text: String,
    #[serde(default)]
    text: String,
}

/// Renders token ids back to text for the human-readable JSONL fields.
#[derive(Debug, Clone, Copy)]
pub struct Detokenizer<'a> {
    pub vocab: &'a Vocabulary,
    pub tokenizer: Tokenizer,
}

impl Detokenizer<'_> {
    pub fn text(&self, ids: &[TokenId]) -> String {
        let words = ids
            .iter()
            .filter(|&&t| t != self.vocab.bod() && t != self.vocab.eod())
            .map(|&t| self.vocab.token(t).unwrap_or("<?>"));
        self.tokenizer.detokenize(words)
    }
}

fn finite_or_none(v: &[f64]) -> Vec<Option<f64>> {
    v.iter().map(|x| x.is_finite().then_some(*x)).collect()
}

fn none_as_neg_inf(v: Vec<Option<f64>>) -> Vec<f64> {
    v.into_iter().map(|x| x.unwrap_or(f64::NEG_INFINITY)).collect()
}

pub fn record_to_json(record: &GenerationRecord, detok: Option<&Detokenizer<'_>>) -> Result<String> {
    let line = RecordLine {
        v: RECORD_SCHEMA_VERSION,
        id: record.id,
        strategy: record.label(),
        config: record.config.clone(),
        context: record.context.clone(),
        continuation: record.continuation.clone(),
        model_logprobs: finite_or_none(&record.model_logprobs),
        decoder_logprobs: finite_or_none(&record.decoder_logprobs),
        terminated_by: record.terminated_by,
        context_text: detok.map(|d| d.text(&record.context)).unwrap_or_default(),
        text: detok.map(|d| d.text(&record.continuation)).unwrap_or_default(),
    };
    Ok(serde_json::to_string(&line)?)
}

/// Parses one JSONL line. Returns `Ok(None)` for header lines.
pub fn record_from_json(line: &str) -> Result<Option<GenerationRecord>> {
    let value: serde_json::Value = serde_json::from_str(line)?;
    if value.get("kind").and_then(|k| k.as_str()) == Some("header") {
        return Ok(None);
    }
    let l: RecordLine = serde_json::from_value(value)?;
    if l.v != RECORD_SCHEMA_VERSION {
        return Err(Error::Config(format!("unsupported record schema version {}", l.v)));
    }
    let n = l.continuation.len();
    if l.model_logprobs.len() != n || l.decoder_logprobs.len() != n {
        return Err(Error::InvalidParameter(format!(
            "record {}: log-prob lists do not match continuation length",
            l.id
        )));
    }
    Ok(Some(GenerationRecord {
        id: l.id,
        context: l.context,
        continuation: l.continuation,
        model_logprobs: none_as_neg_inf(l.model_logprobs),
        decoder_logprobs: none_as_neg_inf(l.decoder_logprobs),
        config: l.config,
        terminated_by: l.terminated_by,
    }))
}

/// Writes a header line (free-form metadata, e.g. a timestamp) followed by
/// one record per line, sorted by id.
pub fn write_jsonl(
    path: &Path,
    records: &[GenerationRecord],
    header: &serde_json::Value,
    detok: Option<&Detokenizer<'_>>,
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::at_path(path, e))?;
    let mut w = BufWriter::new(file);
    let mut head = header.clone();
    if let Some(obj) = head.as_object_mut() {
        obj.insert("kind".into(), "header".into());
        obj.insert("v".into(), RECORD_SCHEMA_VERSION.into());
    }
    writeln!(w, "{head}")?;
    let mut sorted: Vec<&GenerationRecord> = records.iter().collect();
    sorted.sort_by_key(|r| r.id);
    for r in sorted {
        writeln!(w, "{}", record_to_json(r, detok)?)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_jsonl(path: &Path) -> Result<Vec<GenerationRecord>> {
    let file = File::open(path).map_err(|e| Error::at_path(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = record_from_json(&line).map_err(|e| {
            Error::MalformedRecords(format!("{}:{}: {e}", path.display(), n + 1))
        })?;
        out.extend(rec);
    }
    out.sort_by_key(|r| r.id);
    Ok(out)
}

/// Ids already present in a (possibly partial) generations file.
pub fn existing_ids(path: &Path) -> Result<BTreeSet<u64>> {
    if !path.exists() {
        return Ok(BTreeSet::new());
    }
    Ok(read_jsonl(path)?.into_iter().map(|r| r.id).collect())
}
