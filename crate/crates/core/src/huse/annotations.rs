use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::decoding::GenerationRecord;
use crate::error::{Error, Result};

pub const SCORE_MIN: u8 = 1;
pub const SCORE_MAX: u8 = 5;

/// Key under which a record's judgments are stored: `human:<id>` for gold
/// continuations and `model:<id>` for generations.
pub fn generation_key(record: &GenerationRecord) -> String {
    if record.is_human() {
        format!("human:{}", record.id)
    } else {
        format!("model:{}", record.id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub generation_id: String,
    pub annotator_id: String,
    pub score: u8,
}

/// Typicality judgments grouped by generation.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AnnotationSet {
    by_generation: BTreeMap<String, Vec<(String, u8)>>,
}

impl AnnotationSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, a: Annotation) -> Result<()> {
        if !(SCORE_MIN..=SCORE_MAX).contains(&a.score) {
            return Err(Error::Annotations(format!(
                "score {} for generation '{}' is outside {SCORE_MIN}..={SCORE_MAX}",
                a.score, a.generation_id
            )));
        }
        self.by_generation
            .entry(a.generation_id)
            .or_default()
            .push((a.annotator_id, a.score));
        Ok(())
    }

    pub fn get(&self, generation_id: &str) -> Option<&[(String, u8)]> {
        self.by_generation.get(generation_id).map(Vec::as_slice)
    }

    pub fn mean_score(&self, generation_id: &str) -> Option<f64> {
        let v = self.get(generation_id)?;
        if v.is_empty() {
            return None;
        }
        Some(v.iter().map(|&(_, s)| s as f64).sum::<f64>() / v.len() as f64)
    }

    pub fn generations(&self) -> usize {
        self.by_generation.len()
    }

    pub fn len(&self) -> usize {
        self.by_generation.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.by_generation.is_empty()
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut set = Self::new();
        let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let headers = r.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["generation_id", "annotator_id", "score"] {
            return Err(Error::Annotations(
                "expected header generation_id,annotator_id,score".into(),
            ));
        }
        for row in r.deserialize::<Annotation>() {
            let row = row.map_err(|e| Error::Annotations(e.to_string()))?;
            set.add(row)?;
        }
        Ok(set)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::at_path(path, e))?;
        Self::read_csv(std::io::BufReader::new(f))
    }

    /// Rows sorted by generation id, then in insertion order.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["generation_id", "annotator_id", "score"])?;
        for (g, judgments) in &self.by_generation {
            for (a, s) in judgments {
                w.write_record([g.as_str(), a.as_str(), &s.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::at_path(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let text = "generation_id,annotator_id,score\nmodel:1,a0,4\nhuman:1,a0,5\nmodel:1,a1,2\n";
        let set = AnnotationSet::read_csv(text.as_bytes()).unwrap();
        assert_eq!(set.len(), 3);
        assert_eq!(set.mean_score("model:1"), Some(3.0));
        let mut out = Vec::new();
        set.write_csv(&mut out).unwrap();
        assert_eq!(AnnotationSet::read_csv(out.as_slice()).unwrap(), set);
    }

    #[test]
    fn rejects_bad_rows() {
        assert!(AnnotationSet::read_csv("generation_id,annotator_id,score\nm,a,6\n".as_bytes()).is_err());
        assert!(AnnotationSet::read_csv("generation_id,annotator_id,score\nm,a,x\n".as_bytes()).is_err());
        assert!(AnnotationSet::read_csv("id,annotator,score\nm,a,3\n".as_bytes()).is_err());
    }
}
