mod common;

use std::collections::HashMap;

use nucleus_core::lm::{Corpus, NgramModel, SmoothingConfig, TrainConfig};
use nucleus_core::{DistributionProvider, TokenId};

/// Straight counting of every n-gram, then the interpolation written
/// recursively: `P_k = (1 - λ) ML_k + λ P_{k-1}` for seen histories,
/// `P_k = P_{k-1}` otherwise, and finally the uniform floor.
struct Oracle {
    order: usize,
    vocab: usize,
    counts: HashMap<Vec<TokenId>, u64>,
    hist: HashMap<Vec<TokenId>, (u64, u64)>,
    tokens: u64,
}

impl Oracle {
    fn new(model: &NgramModel, corpus: &Corpus, order: usize) -> Self {
        let mut counts = HashMap::new();
        let mut tokens = 0;
        for doc in &corpus.documents {
            let ids = model.encode_document(doc);
            for i in 1..ids.len() {
                tokens += 1;
                for k in 1..=order.min(i + 1) {
                    *counts.entry(ids[i + 1 - k..=i].to_vec()).or_insert(0u64) += 1;
                }
            }
        }
        // (total count, distinct followers) per history
        let mut hist: HashMap<Vec<TokenId>, (u64, u64)> = HashMap::new();
        for (g, &c) in &counts {
            if g.len() >= 2 {
                let e = hist.entry(g[..g.len() - 1].to_vec()).or_default();
                e.0 += c;
                e.1 += 1;
            }
        }
        Self {
            order,
            vocab: model.vocab_size(),
            counts,
            hist,
            tokens,
        }
    }

    fn prob(&self, ctx: &[TokenId], w: TokenId, s: &SmoothingConfig) -> f64 {
        let uni = self.counts.get(&vec![w]).copied().unwrap_or(0) as f64 / self.tokens as f64;
        let mut p = uni;
        for k in 2..=self.order {
            if ctx.len() < k - 1 {
                break;
            }
            let h = &ctx[ctx.len() + 1 - k..];
            if let Some(&(total, distinct)) = self.hist.get(h) {
                let mut g = h.to_vec();
                g.push(w);
                let ml = self.counts.get(&g).copied().unwrap_or(0) as f64 / total as f64;
                let lambda = if s.witten_bell {
                    distinct as f64 / (distinct + total) as f64
                } else {
                    s.lower_order_weight
                };
                p = (1.0 - lambda) * ml + lambda * p;
            }
        }
        s.floor_mass / self.vocab as f64 + (1.0 - s.floor_mass) * p
    }
}

fn check(order: usize, smoothing: SmoothingConfig, seed: u64) {
    let corpus = common::random_corpus(seed, 60, 3..40, 25);
    let model = NgramModel::train(
        &corpus,
        TrainConfig {
            order,
            smoothing,
            ..TrainConfig::default()
        },
    )
    .unwrap();
    let oracle = Oracle::new(&model, &corpus, order);
    let probe = common::random_corpus(seed + 1000, 10, 1..12, 30);
    for doc in corpus.documents.iter().take(10).chain(&probe.documents) {
        let ids = model.encode_document(doc);
        for i in 1..=ids.len() {
            let ctx = &ids[..i];
            let dist = model.next_distribution(ctx).unwrap();
            for w in 0..model.vocab_size() as TokenId {
                let want = oracle.prob(ctx, w, &smoothing);
                let got = dist.prob(w);
                assert!((got - want).abs() < 1e-12, "order {order} ctx {ctx:?} w {w}: {got} vs {want}");
            }
        }
    }
}

#[test]
fn fixed_weight_matches_counting_oracle() {
    for order in 1..=4 {
        check(order, SmoothingConfig::default(), order as u64);
        check(
            order,
            SmoothingConfig {
                lower_order_weight: 0.55,
                floor_mass: 0.01,
                witten_bell: false,
            },
            10 + order as u64,
        );
    }
}

#[test]
fn witten_bell_matches_counting_oracle() {
    for order in 2..=3 {
        check(
            order,
            SmoothingConfig {
                witten_bell: true,
                ..SmoothingConfig::default()
            },
            20 + order as u64,
        );
    }
}

#[test]
fn perplexity_matches_summed_oracle() {
    let corpus = common::random_corpus(5, 50, 5..30, 20);
    let held = common::random_corpus(6, 8, 2..20, 22);
    let model = common::train(&corpus, 3);
    let oracle = Oracle::new(&model, &corpus, 3);
    let s = model.config().smoothing;
    let mut nll = 0.0;
    let mut n = 0;
    for doc in &held.documents {
        let ids = model.encode_document(doc);
        for i in 1..ids.len() {
            nll -= oracle.prob(&ids[..i], ids[i], &s).ln();
            n += 1;
        }
    }
    let want = (nll / n as f64).exp();
    let got = model.perplexity(&held).unwrap();
    assert!((got - want).abs() / want < 1e-10, "{got} vs {want}");
}

#[test]
fn distributions_are_normalized_everywhere() {
    let corpus = common::random_corpus(7, 40, 2..25, 15);
    let model = common::train(&corpus, 3);
    for doc in &corpus.documents {
        let ids = model.encode_document(doc);
        for i in 1..=ids.len() {
            let d = model.next_distribution(&ids[..i]).unwrap();
            let s: f64 = d.probs().iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
            assert!(d.probs().iter().all(|&p| p > 0.0));
        }
    }
}
