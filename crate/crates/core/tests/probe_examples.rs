mod common;

use nucleus_core::decoding::{generate, DecoderConfig};
use nucleus_core::lm::{Corpus, NgramModel, TrainConfig};
use nucleus_core::probes::{
    beam_width_effect, distinct_trigrams, distribution_shape_probe, repetition_feedback_probe, sample_phrase,
    token_probability_trace, CopyAggregate,
};
use nucleus_core::rng::RngStream;
use nucleus_core::{ContextWindow, DistributionProvider, Result, TokenDistribution, TokenId, Vocabulary};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

/// Always continues with the next id (mod |V|) with certainty.
struct Chain(Vocabulary);

impl DistributionProvider for Chain {
    fn vocabulary(&self) -> &Vocabulary {
        &self.0
    }

    fn next_distribution(&self, context: &[TokenId]) -> Result<TokenDistribution> {
        let n = self.0.len();
        let mut p = vec![0.0; n];
        p[(*context.last().unwrap() as usize + 1) % n] = 1.0;
        TokenDistribution::from_probs(p)
    }
}

/// Provider returning one fixed distribution everywhere.
struct Fixed(Vocabulary, Vec<f64>);

impl DistributionProvider for Fixed {
    fn vocabulary(&self) -> &Vocabulary {
        &self.0
    }

    fn next_distribution(&self, _: &[TokenId]) -> Result<TokenDistribution> {
        TokenDistribution::from_probs(self.1.clone())
    }
}

fn vocab(words: usize) -> Vocabulary {
    Vocabulary::with_specials((0..words).map(|i| format!("w{i}"))).unwrap()
}

/// Documents made of short phrases each repeated several times.
fn loop_heavy_corpus(seed: u64) -> Corpus {
    let mut rng = StdRng::seed_from_u64(seed);
    let documents = (0..400)
        .map(|_| {
            let mut d = Vec::new();
            for _ in 0..rng.random_range(2..5) {
                let phrase: Vec<String> = (0..rng.random_range(2..5))
                    .map(|_| format!("w{}", rng.random_range(0..40)))
                    .collect();
                for _ in 0..rng.random_range(3..8) {
                    d.extend(phrase.iter().cloned());
                }
            }
            d
        })
        .collect();
    Corpus { documents }
}

#[test]
fn chain_model_trace_is_flat_at_one() {
    let p = Chain(vocab(7));
    let ctx = ContextWindow::new(vec![3], p.vocab_size()).unwrap();
    let rec = generate(&p, &ctx, &DecoderConfig::greedy().with_max_len(25), 0).unwrap();
    let s = token_probability_trace(&p, &ctx, &rec.continuation).unwrap();
    assert_eq!(s.len(), rec.continuation.len());
    assert!(s.column("probability").unwrap().iter().all(|&x| x == 1.0));
}

#[test]
fn uniform_nucleus_and_one_hot() {
    let v = vocab(97);
    let uniform = Fixed(v.clone(), vec![0.01; 100]);
    let shape = distribution_shape_probe(&uniform, &[vec![0, 5]], 0.9, 10).unwrap();
    assert!(shape.steps.iter().all(|s| s.nucleus_size == 90));
    assert!(shape.steps.iter().all(|s| (s.topk_mass - 0.1).abs() < 1e-12));

    let mut one_hot = vec![0.0; 100];
    one_hot[42] = 1.0;
    let peaked = Fixed(v, one_hot);
    for p in [0.1, 0.5, 0.99, 1.0] {
        let shape = distribution_shape_probe(&peaked, &[vec![0]], p, 3).unwrap();
        assert_eq!(shape.steps[0].nucleus_size, 1);
        assert_eq!(shape.steps[0].entropy, 0.0);
    }
}

#[test]
fn nucleus_size_grows_with_p() {
    for seed in 0..100 {
        let p = common::ToyProvider::new(60, seed, 0.3);
        let seq = vec![p.vocabulary().bod()];
        let sizes: Vec<usize> = [0.5, 0.7, 0.9, 0.99]
            .iter()
            .map(|&q| distribution_shape_probe(&p, std::slice::from_ref(&seq), q, 5).unwrap().steps[0].nucleus_size)
            .collect();
        assert!(sizes.windows(2).all(|w| w[0] <= w[1]), "{sizes:?}");
    }
}

#[test]
fn unigram_feedback_is_flat() {
    let corpus = loop_heavy_corpus(1);
    let model = NgramModel::train(
        &corpus,
        TrainConfig {
            order: 1,
            ..TrainConfig::default()
        },
    )
    .unwrap();
    let mut rng = RngStream::new(0, 0);
    for _ in 0..10 {
        let phrase = sample_phrase(model.vocabulary(), 3, &mut rng).unwrap();
        for agg in [CopyAggregate::Arithmetic, CopyAggregate::Geometric] {
            let s = repetition_feedback_probe(&model, &phrase, 12, agg).unwrap();
            assert_eq!(s.len(), 12);
            let y = s.column("mean_probability").unwrap();
            assert!(y.iter().all(|&v| v == y[0]), "{y:?}");
        }
    }
}

#[test]
fn trigram_feedback_on_loop_heavy_text_does_not_decay() {
    let corpus = loop_heavy_corpus(2);
    let model = common::train(&corpus, 3);
    let mut rng = RngStream::new(1, 0);
    let mut monotone = 0;
    for _ in 0..50 {
        let phrase = sample_phrase(model.vocabulary(), 3, &mut rng).unwrap();
        let s = repetition_feedback_probe(&model, &phrase, 10, CopyAggregate::Arithmetic).unwrap();
        let y = s.column("mean_probability").unwrap();
        if y[1..].windows(2).all(|w| w[1] >= w[0]) {
            monotone += 1;
        }
    }
    assert!(monotone >= 40, "{monotone} of 50");
}

#[test]
fn width_one_row_is_greedy() {
    let corpus = loop_heavy_corpus(3);
    let model = common::train(&corpus, 3);
    let items: Vec<(ContextWindow, Vec<TokenId>)> = corpus.documents[..30]
        .iter()
        .map(|d| {
            let ids = model.encode_document(d);
            (ContextWindow::new(ids[..3].to_vec(), model.vocab_size()).unwrap(), ids[3..].to_vec())
        })
        .collect();
    let rows = beam_width_effect(&model, &items, &[1], 50).unwrap();
    let greedy: Vec<_> = items
        .iter()
        .map(|(c, _)| generate(&model, c, &DecoderConfig::greedy().with_max_len(50), 0).unwrap())
        .collect();
    let eod = model.eod();
    let mean = greedy.iter().map(|r| r.text_tokens(eod).len()).sum::<usize>() as f64 / greedy.len() as f64;
    assert_eq!(rows[0].mean_length, mean);
    assert_eq!(rows[0].distinct_trigrams, distinct_trigrams(greedy.iter().map(|r| r.text_tokens(eod))));
    assert_eq!(rows.last().unwrap().label, "human");
}

#[test]
fn identical_generations_share_trigrams() {
    let g: Vec<TokenId> = vec![4, 5, 6, 7, 4, 5, 9];
    let many = vec![g.as_slice(); 25];
    assert_eq!(distinct_trigrams(many), distinct_trigrams([g.as_slice()]));
}
