#![allow(dead_code)]

use nucleus_core::lm::{Corpus, NgramModel, Tokenizer, TrainConfig};
use nucleus_core::rng::splitmix64;
use nucleus_core::{DistributionProvider, Result, TokenDistribution, TokenId, Vocabulary};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Gamma};

/// Random Dirichlet(alpha) vector of length `n`.
pub fn dirichlet(rng: &mut impl Rng, n: usize, alpha: f64) -> Vec<f64> {
    let g = Gamma::new(alpha, 1.0).unwrap();
    loop {
        let v: Vec<f64> = (0..n).map(|_| g.sample(rng)).collect();
        let s: f64 = v.iter().sum();
        if s > 0.0 && s.is_finite() {
            return v.into_iter().map(|x| x / s).collect();
        }
    }
}

/// A context-hashed random language model: every distinct context gets its
/// own Dirichlet draw, reproducibly.
pub struct ToyProvider {
    pub vocab: Vocabulary,
    pub seed: u64,
    pub alpha: f64,
}

impl ToyProvider {
    pub fn new(words: usize, seed: u64, alpha: f64) -> Self {
        let vocab = Vocabulary::with_specials((0..words).map(|i| format!("w{i}"))).unwrap();
        Self { vocab, seed, alpha }
    }
}

impl DistributionProvider for ToyProvider {
    fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    fn next_distribution(&self, context: &[TokenId]) -> Result<TokenDistribution> {
        let mut h = splitmix64(self.seed);
        for &t in context {
            h = splitmix64(h ^ u64::from(t));
        }
        let mut rng = StdRng::seed_from_u64(h);
        TokenDistribution::from_probs(renorm(dirichlet(&mut rng, self.vocab.len(), self.alpha)))
    }
}

/// Renormalizes with a plain sum so the vector passes the 1e-9 check.
pub fn renorm(mut v: Vec<f64>) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    v
}

/// Random word documents over a small vocabulary with Zipf-ish word choice.
pub fn random_corpus(seed: u64, docs: usize, len: std::ops::Range<usize>, words: usize) -> Corpus {
    let mut rng = StdRng::seed_from_u64(seed);
    let documents = (0..docs)
        .map(|_| {
            let n = rng.random_range(len.clone());
            (0..n)
                .map(|_| {
                    let r: f64 = rng.random();
                    format!("w{}", ((r * r * words as f64) as usize).min(words - 1))
                })
                .collect()
        })
        .collect();
    Corpus { documents }
}

pub fn text_corpus(text: &str) -> Corpus {
    Corpus::from_text(text, &Tokenizer::default())
}

pub fn train(corpus: &Corpus, order: usize) -> NgramModel {
    NgramModel::train(
        corpus,
        TrainConfig {
            order,
            ..TrainConfig::default()
        },
    )
    .unwrap()
}

pub mod oracles;

/// Twenty small document sets for the BLEU oracle: duplicates, disjoint
/// vocabularies, shared prefixes, length mismatches, very short documents,
/// and a few denser seeded sets over tiny alphabets.
pub fn bleu_sets() -> Vec<Vec<Vec<TokenId>>> {
    let mut sets: Vec<Vec<Vec<TokenId>>> = vec![
        vec![vec![1, 2, 3, 4], vec![1, 2, 3, 5]],
        vec![vec![1, 2, 3, 4, 5, 6], vec![1, 2, 3, 4, 5, 6], vec![1, 2, 3, 4, 5, 6]],
        vec![vec![1, 2, 3, 4], vec![5, 6, 7, 8], vec![9, 10, 11, 12]],
        vec![vec![1, 1, 1, 1, 1, 1], vec![1, 1, 1], vec![1, 1, 1, 1, 1, 1, 1, 1, 1]],
        vec![vec![3, 4, 5, 6, 7, 8, 9], vec![3, 4, 5, 6], vec![6, 7, 8, 9, 10, 11], vec![1, 3, 4, 5, 6, 7, 8, 9, 2]],
        vec![vec![1, 2], vec![1, 2, 3], vec![2, 3, 1, 2]],
        vec![vec![7], vec![7, 7], vec![7, 7, 7], vec![7, 7, 7, 7]],
        vec![vec![1, 2, 1, 2, 1, 2, 1, 2], vec![2, 1, 2, 1, 2, 1], vec![1, 2, 3, 1, 2, 3, 1, 2, 3]],
        vec![vec![10, 11, 12, 13, 14], vec![10, 11, 12, 13, 15], vec![10, 11, 12, 16, 14], vec![10, 11, 17, 13, 14]],
        vec![vec![4, 5, 6, 7, 8, 9, 10, 11, 12, 13], vec![4, 5, 6, 7], vec![10, 11, 12, 13]],
        vec![vec![], vec![1, 2, 3, 4, 5], vec![1, 2, 3, 4, 5]],
        vec![vec![1, 2, 3, 4, 5, 6, 7, 8], vec![8, 7, 6, 5, 4, 3, 2, 1]],
    ];
    let mut rng = StdRng::seed_from_u64(2024);
    for (alphabet, docs, max_len) in [(2, 5, 12), (3, 6, 20), (3, 4, 8), (4, 8, 30), (5, 10, 25), (2, 3, 40), (6, 12, 15), (4, 20, 10)] {
        let set = (0..docs)
            .map(|_| {
                let n = rng.random_range(1..=max_len);
                (0..n).map(|_| rng.random_range(3..3 + alphabet)).collect()
            })
            .collect();
        sets.push(set);
    }
    sets
}
