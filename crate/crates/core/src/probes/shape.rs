use serde::Serialize;

use super::ProbeSeries;
use crate::decoding::{nucleus_size, truncate_topk};
use crate::error::{Error, Result};
use crate::exec::try_par_map;
use crate::lm::{ContextWindow, DistributionProvider, TokenId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShapeStep {
    pub sequence: usize,
    /// Prefix length the distribution was conditioned on.
    pub position: usize,
    /// Natural-log Shannon entropy.
    pub entropy: f64,
    pub nucleus_size: usize,
    /// Mass of the `k` most probable tokens.
    pub topk_mass: f64,
}

/// Counts per bin; bin `i` is `[edges[i], edges[i + 1])`, the last one closed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn from_values(edges: Vec<f64>, values: impl IntoIterator<Item = f64>) -> Self {
        let bins = edges.len() - 1;
        let mut counts = vec![0u64; bins];
        for v in values {
            let i = edges.partition_point(|&e| e <= v);
            counts[i.clamp(1, bins) - 1] += 1;
        }
        Self { edges, counts }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShapeProbe {
    pub p: f64,
    pub k: usize,
    pub steps: Vec<ShapeStep>,
    pub entropy_hist: Histogram,
    /// Powers-of-two bins.
    pub nucleus_hist: Histogram,
    pub topk_mass_hist: Histogram,
}

const BINS: usize = 20;

/// Shape statistics of the next-token distribution after every prefix
/// `seq[..i]`, `i = 1..=len`, of every sequence.
pub fn distribution_shape_probe<P>(provider: &P, sequences: &[Vec<TokenId>], p: f64, k: usize) -> Result<ShapeProbe>
where
    P: DistributionProvider + Sync + ?Sized,
{
    let v = provider.vocab_size();
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::param(format!("nucleus p must be in (0, 1], got {p}")));
    }
    if k < 1 || k > v {
        return Err(Error::param(format!("k must be in [1, {v}], got {k}")));
    }
    let per_seq = try_par_map(sequences, |s, seq| {
        ContextWindow::new(seq.clone(), v)?;
        (1..=seq.len())
            .map(|i| {
                let d = provider.next_distribution(&seq[..i])?;
                Ok(ShapeStep {
                    sequence: s,
                    position: i,
                    entropy: d.entropy(),
                    nucleus_size: nucleus_size(&d, p),
                    topk_mass: truncate_topk(&d, k)?.kept_mass,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let steps: Vec<ShapeStep> = per_seq.into_iter().flatten().collect();

    let max_h = (v as f64).ln().max(f64::MIN_POSITIVE);
    let entropy_edges = (0..=BINS).map(|i| max_h * i as f64 / BINS as f64).collect();
    let mut pow2 = vec![1.0];
    while *pow2.last().unwrap() <= v as f64 {
        pow2.push(pow2.last().unwrap() * 2.0);
    }
    let unit_edges = (0..=BINS).map(|i| i as f64 / BINS as f64).collect();
    Ok(ShapeProbe {
        p,
        k,
        entropy_hist: Histogram::from_values(entropy_edges, steps.iter().map(|s| s.entropy)),
        nucleus_hist: Histogram::from_values(pow2, steps.iter().map(|s| s.nucleus_size as f64)),
        topk_mass_hist: Histogram::from_values(unit_edges, steps.iter().map(|s| s.topk_mass)),
        steps,
    })
}

impl ShapeProbe {
    /// One row per step, x = global step index.
    pub fn series(&self) -> Result<ProbeSeries> {
        let x = (0..self.steps.len()).map(|i| i as f64).collect();
        let col = |f: fn(&ShapeStep) -> f64| self.steps.iter().map(f).collect::<Vec<f64>>();
        Ok(ProbeSeries::new("distribution_shape", "step", x)?
            .with_column("sequence", col(|s| s.sequence as f64))?
            .with_column("position", col(|s| s.position as f64))?
            .with_column("entropy", col(|s| s.entropy))?
            .with_column("nucleus_size", col(|s| s.nucleus_size as f64))?
            .with_column("topk_mass", col(|s| s.topk_mass))?
            .with_meta("p", self.p)
            .with_meta("k", self.k))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_bins() {
        let h = Histogram::from_values(vec![0.0, 1.0, 2.0], [0.0, 0.5, 1.0, 2.0, 5.0, -1.0]);
        assert_eq!(h.counts, vec![3, 3]);
    }
}
