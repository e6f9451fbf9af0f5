//! Replays probability vectors dumped by an external model.
//!
//! Text format: a JSON header line `{"vocab": [...], "steps": N}` (optionally
//! with `"bod"`, `"eod"`, `"unk"` ids; otherwise `<s>`, `</s>`, `<unk>` are
//! looked up by name), then one JSON array of probabilities per step.
//!
//! Binary format: `"NTDL1"`, a `u32` byte length and the same JSON header,
//! then per step a `u32` element count followed by that many `f32` values.
//! Everything little-endian.

use std::cell::Cell;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::vocab::{Vocabulary, BOD_TOKEN, EOD_TOKEN, UNK_TOKEN};
use super::{DistributionProvider, TokenDistribution, TokenId};
use crate::error::{Error, Result};

const BINARY_MAGIC: &[u8; 5] = b"NTDL1";
/// Vectors off by more than this are flagged; all are renormalized.
const LOAD_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Serialize, Deserialize)]
struct TraceHeader {
    vocab: Vec<String>,
    steps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bod: Option<TokenId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    eod: Option<TokenId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    unk: Option<TokenId>,
}

/// Stateful replayer: each `next_distribution` call returns the next stored
/// step regardless of the context passed in. Not `Sync`; use one per consumer.
#[derive(Debug)]
pub struct TraceProvider {
    vocab: Vocabulary,
    steps: Vec<TokenDistribution>,
    cursor: Cell<usize>,
    renormalized: Vec<usize>,
}

impl TraceProvider {
    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::at_path(path, e))?;
        let mut r = BufReader::new(file);
        let is_binary = r.fill_buf()?.starts_with(BINARY_MAGIC);
        if is_binary {
            Self::read_binary(&mut r)
        } else {
            Self::read_json(r)
        }
    }

    pub fn read_json<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header_line = lines
            .next()
            .ok_or_else(|| bad("missing header line"))??;
        let header: TraceHeader =
            serde_json::from_str(&header_line).map_err(|e| bad(format!("header: {e}")))?;
        let mut raw = Vec::with_capacity(header.steps);
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let v: Vec<f64> =
                serde_json::from_str(&line).map_err(|e| bad(format!("step {i}: {e}")))?;
            raw.push(v);
        }
        Self::from_parts(header, raw)
    }

    pub fn read_binary<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 5];
        r.read_exact(&mut magic).map_err(|_| bad("truncated magic"))?;
        if &magic != BINARY_MAGIC {
            return Err(bad("missing NTDL1 magic"));
        }
        let len = read_u32(r)? as usize;
        let mut buf = vec![0u8; len];
        r.read_exact(&mut buf).map_err(|_| bad("truncated header"))?;
        let header: TraceHeader =
            serde_json::from_slice(&buf).map_err(|e| bad(format!("header: {e}")))?;
        let mut raw = Vec::with_capacity(header.steps);
        for _ in 0..header.steps {
            let n = read_u32(r)? as usize;
            let mut bytes = vec![0u8; n * 4];
            r.read_exact(&mut bytes).map_err(|_| bad("truncated vector"))?;
            raw.push(
                bytes
                    .chunks_exact(4)
                    .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
                    .collect(),
            );
        }
        Self::from_parts(header, raw)
    }

    fn from_parts(header: TraceHeader, raw: Vec<Vec<f64>>) -> Result<Self> {
        let find = |explicit: Option<TokenId>, name: &str| -> Result<TokenId> {
            explicit
                .or_else(|| header.vocab.iter().position(|t| t == name).map(|i| i as TokenId))
                .ok_or_else(|| bad(format!("header does not identify the {name} token")))
        };
        let bod = find(header.bod, BOD_TOKEN)?;
        let eod = find(header.eod, EOD_TOKEN)?;
        let unk = find(header.unk, UNK_TOKEN)?;
        let vocab = Vocabulary::new(header.vocab.clone(), bod, eod, unk)
            .map_err(|e| bad(e.to_string()))?;
        if raw.len() != header.steps {
            return Err(bad(format!(
                "header declares {} steps, found {}",
                header.steps,
                raw.len()
            )));
        }
        let mut steps = Vec::with_capacity(raw.len());
        let mut renormalized = Vec::new();
        for (i, probs) in raw.into_iter().enumerate() {
            if probs.len() != vocab.len() {
                return Err(bad(format!(
                    "step {i} has {} entries, vocabulary has {}",
                    probs.len(),
                    vocab.len()
                )));
            }
            if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(bad(format!("step {i} has a negative or non-finite entry")));
            }
            let sum: f64 = probs.iter().sum();
            if sum <= 0.0 {
                return Err(bad(format!("step {i} has zero total mass")));
            }
            if (sum - 1.0).abs() > LOAD_TOLERANCE {
                renormalized.push(i);
            }
            steps.push(TokenDistribution::from_probs_unchecked(
                probs.into_iter().map(|p| p / sum).collect(),
            ));
        }
        if !renormalized.is_empty() {
            log::warn!(
                "trace: renormalized {} step(s) off by more than {LOAD_TOLERANCE}",
                renormalized.len()
            );
        }
        Ok(Self {
            vocab,
            steps,
            cursor: Cell::new(0),
            renormalized,
        })
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Steps whose stored mass deviated from 1 by more than 1e-6.
    pub fn renormalized_steps(&self) -> &[usize] {
        &self.renormalized
    }

    pub fn position(&self) -> usize {
        self.cursor.get()
    }

    pub fn rewind(&self) {
        self.cursor.set(0);
    }
}

impl DistributionProvider for TraceProvider {
    fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    fn next_distribution(&self, context: &[TokenId]) -> Result<TokenDistribution> {
        if context.is_empty() {
            return Err(Error::EmptyContext);
        }
        let i = self.cursor.get();
        let d = self.steps.get(i).ok_or(Error::TraceExhausted {
            steps: self.steps.len(),
        })?;
        self.cursor.set(i + 1);
        Ok(d.clone())
    }
}

fn header_for(vocab: &Vocabulary, steps: usize) -> TraceHeader {
    TraceHeader {
        vocab: vocab.tokens().to_vec(),
        steps,
        bod: Some(vocab.bod()),
        eod: Some(vocab.eod()),
        unk: Some(vocab.unk()),
    }
}

pub fn write_json_trace(path: &Path, vocab: &Vocabulary, steps: &[Vec<f64>]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::at_path(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer(&mut w, &header_for(vocab, steps.len()))?;
    w.write_all(b"\n")?;
    for s in steps {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_binary_trace(path: &Path, vocab: &Vocabulary, steps: &[Vec<f64>]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::at_path(path, e))?;
    let mut w = BufWriter::new(file);
    let header = serde_json::to_vec(&header_for(vocab, steps.len()))?;
    w.write_all(BINARY_MAGIC)?;
    w.write_all(&(header.len() as u32).to_le_bytes())?;
    w.write_all(&header)?;
    for s in steps {
        w.write_all(&(s.len() as u32).to_le_bytes())?;
        for &p in s {
            w.write_all(&(p as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|_| bad("truncated length prefix"))?;
    Ok(u32::from_le_bytes(b))
}

fn bad(msg: impl Into<String>) -> Error {
    Error::MalformedTrace(msg.into())
}
