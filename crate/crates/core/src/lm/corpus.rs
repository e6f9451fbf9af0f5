use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use flate2::read::GzDecoder;

use super::vocab::Tokenizer;
use crate::error::{Error, Result};

/// Tokenized documents. Documents are separated by blank lines in the source.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub documents: Vec<Vec<String>>,
}

impl Corpus {
    pub fn from_text(text: &str, tokenizer: &Tokenizer) -> Self {
        let documents = split_documents(text)
            .into_iter()
            .map(|d| tokenizer.tokenize(&d))
            .filter(|d| !d.is_empty())
            .collect();
        Self { documents }
    }

    pub fn token_count(&self) -> usize {
        self.documents.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.token_count() == 0
    }

    /// Splits into (train, held-out): every `every`-th document is held out.
    pub fn split_every(self, every: usize) -> (Corpus, Corpus) {
        let mut train = Vec::new();
        let mut held = Vec::new();
        for (i, d) in self.documents.into_iter().enumerate() {
            if every > 0 && i % every == every - 1 {
                held.push(d);
            } else {
                train.push(d);
            }
        }
        (Corpus { documents: train }, Corpus { documents: held })
    }
}

/// Reads a UTF-8 corpus file (optionally gzip-compressed, by `.gz` suffix).
pub fn read_corpus(path: &Path, tokenizer: &Tokenizer) -> Result<Corpus> {
    let file = File::open(path).map_err(|e| Error::at_path(path, e))?;
    let mut text = String::new();
    let is_gz = path.extension().is_some_and(|e| e == "gz");
    let res = if is_gz {
        GzDecoder::new(BufReader::new(file)).read_to_string(&mut text)
    } else {
        BufReader::new(file).read_to_string(&mut text)
    };
    res.map_err(|e| Error::at_path(path, e))?;
    Ok(Corpus::from_text(&text, tokenizer))
}

/// Documents are separated by one or more blank (whitespace-only) lines;
/// lines within a document are joined with a space.
pub fn split_documents(text: &str) -> Vec<String> {
    let mut docs = Vec::new();
    let mut cur: Vec<&str> = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            if !cur.is_empty() {
                docs.push(cur.join(" "));
                cur.clear();
            }
        } else {
            cur.push(line.trim());
        }
    }
    if !cur.is_empty() {
        docs.push(cur.join(" "));
    }
    docs
}
