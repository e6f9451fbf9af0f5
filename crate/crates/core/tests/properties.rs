mod common;

use nucleus_core::decoding::{
    apply_temperature, generate, nucleus_size, truncate_nucleus, truncate_topk, DecoderConfig, GenerationRecord,
    Termination,
};
use nucleus_core::huse::{huse_score, HuseInstance, Label};
use nucleus_core::lm::score;
use nucleus_core::metrics::{
    generation_perplexity, is_repetitive, perplexity_from_logprobs, rank_frequencies, self_bleu, trailing_loop,
    zipf_fit, SelfBleuConfig, ZipfConfig, MAX_PHRASE_LEN,
};
use nucleus_core::probes::distribution_shape_probe;
use nucleus_core::{ContextWindow, DistributionProvider, TokenDistribution, TokenId};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::SeedableRng;

fn dist_strategy() -> impl Strategy<Value = TokenDistribution> {
    (2usize..150, any::<u64>(), prop::sample::select(vec![0.05, 0.3, 1.0, 4.0])).prop_map(|(n, seed, alpha)| {
        let mut rng = StdRng::seed_from_u64(seed);
        TokenDistribution::from_probs(common::renorm(common::dirichlet(&mut rng, n, alpha))).unwrap()
    })
}

fn record(id: u64, continuation: Vec<TokenId>) -> GenerationRecord {
    GenerationRecord {
        id,
        context: vec![0],
        model_logprobs: vec![-1.0; continuation.len()],
        decoder_logprobs: vec![-1.0; continuation.len()],
        continuation,
        config: Some(DecoderConfig::sample()),
        terminated_by: Termination::MaxLen,
    }
}

fn docs_strategy() -> impl Strategy<Value = Vec<Vec<TokenId>>> {
    prop::collection::vec(prop::collection::vec(3u32..9, 0..25), 2..14)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn nucleus_is_minimal_and_normalized(d in dist_strategy(), p in 0.01f64..0.999) {
        let t = truncate_nucleus(&d, p).unwrap();
        let kept: Vec<usize> = (0..d.len()).filter(|&i| t.dist.probs()[i] > 0.0).collect();
        let min = kept.iter().map(|&i| d.probs()[i]).fold(f64::INFINITY, f64::min);
        prop_assert!(t.kept_mass >= p);
        prop_assert!(t.kept_mass - min < p);
        prop_assert!((t.dist.probs().iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        prop_assert_eq!(kept.len(), t.support);
    }

    #[test]
    fn nucleus_support_grows_with_p(d in dist_strategy(), a in 0.01f64..1.0, b in 0.01f64..1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(nucleus_size(&d, lo) <= nucleus_size(&d, hi));
    }

    #[test]
    fn topk_support_is_min_k_v(d in dist_strategy(), k in 1usize..200) {
        let t = truncate_topk(&d, k.min(d.len())).unwrap();
        prop_assert_eq!(t.dist.support_size(), k.min(d.len()));
        prop_assert!((t.dist.probs().iter().sum::<f64>() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn low_temperature_sharpens(d in dist_strategy(), t in 0.05f64..1.0) {
        let s = apply_temperature(&d, t).unwrap();
        prop_assert!(s.entropy() <= d.entropy() + 1e-9);
        prop_assert_eq!(s.argmax(), d.argmax());
    }

    #[test]
    fn argmax_survives_any_temperature(d in dist_strategy(), t in 0.05f64..20.0) {
        prop_assert_eq!(apply_temperature(&d, t).unwrap().argmax(), d.argmax());
    }

    #[test]
    fn recorded_logprobs_equal_rescoring(seed in 0u64..1000, id in 0u64..50) {
        let p = common::ToyProvider::new(15, seed, 0.5);
        let ctx = ContextWindow::start(p.vocabulary());
        let r = generate(&p, &ctx, &DecoderConfig::top_k(6).with_seed(seed).with_max_len(20), id).unwrap();
        let lps = score(&p, &ctx, &r.continuation).unwrap();
        for (a, b) in lps.iter().zip(&r.model_logprobs) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn perplexity_stays_in_the_hull(lps in prop::collection::vec(prop::collection::vec(-8.0f64..0.0, 1..20), 2..10), drop in 0usize..10) {
        let drop = drop % lps.len();
        let per: Vec<f64> = lps.iter().map(|l| perplexity_from_logprobs([l.as_slice()]).unwrap()).collect();
        let rest: Vec<&[f64]> = lps.iter().enumerate().filter(|&(i, _)| i != drop).map(|(_, l)| l.as_slice()).collect();
        let p = perplexity_from_logprobs(rest).unwrap();
        let lo = per.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = per.iter().cloned().fold(0.0, f64::max);
        prop_assert!(p >= lo * (1.0 - 1e-12) && p <= hi * (1.0 + 1e-12));
    }

    #[test]
    fn self_bleu_ignores_record_order(docs in docs_strategy(), seed in any::<u64>(), sample in 1usize..16) {
        let recs: Vec<GenerationRecord> = docs.iter().enumerate().map(|(i, d)| record(i as u64, d.clone())).collect();
        let mut shuffled = recs.clone();
        let mut rng = StdRng::seed_from_u64(seed);
        rand::seq::SliceRandom::shuffle(shuffled.as_mut_slice(), &mut rng);
        let cfg = SelfBleuConfig { sample_size: sample, seed, ..SelfBleuConfig::default() };
        let a = self_bleu(&recs, 1, &cfg).unwrap();
        let b = self_bleu(&shuffled, 1, &cfg).unwrap();
        prop_assert_eq!(a, b);
        prop_assert!((0.0..=1.0).contains(&a.value));
    }

    #[test]
    fn duplicating_every_document_never_lowers_self_bleu(docs in docs_strategy(), smoothing in any::<bool>()) {
        let cfg = SelfBleuConfig { smoothing, ..SelfBleuConfig::default() };
        let recs: Vec<GenerationRecord> = docs.iter().enumerate().map(|(i, d)| record(i as u64, d.clone())).collect();
        let n = recs.len() as u64;
        let mut doubled = recs.clone();
        doubled.extend(recs.iter().map(|r| GenerationRecord { id: r.id + n, ..r.clone() }));
        let a = self_bleu(&recs, 1, &cfg).unwrap().value;
        let b = self_bleu(&doubled, 1, &cfg).unwrap().value;
        prop_assert!(b >= a - 1e-12, "{} < {}", b, a);
    }

    #[test]
    fn zipf_is_scale_free(freqs in prop::collection::vec(1u64..10_000, 10..300), c in 2u64..50) {
        let mut f = freqs;
        f.sort_unstable_by(|a, b| b.cmp(a));
        let scaled: Vec<u64> = f.iter().map(|&x| x * c).collect();
        let a = zipf_fit(&f, &ZipfConfig::default()).unwrap();
        let b = zipf_fit(&scaled, &ZipfConfig::default()).unwrap();
        prop_assert!((a.s - b.s).abs() < 1e-9);
    }

    #[test]
    fn zipf_ignores_corpus_duplication(tokens in prop::collection::vec(0u32..40, 50..400)) {
        let once = rank_frequencies(tokens.iter().copied());
        prop_assume!(once.len() >= 10);
        let twice = rank_frequencies(tokens.iter().chain(&tokens).copied());
        let a = zipf_fit(&once, &ZipfConfig::default()).unwrap();
        let b = zipf_fit(&twice, &ZipfConfig::default()).unwrap();
        prop_assert!((a.s - b.s).abs() < 1e-9);
    }

    #[test]
    fn repetition_survives_prefix_and_extra_copy(prefix in prop::collection::vec(0u32..4, 0..30), body in prop::collection::vec(0u32..4, 0..80)) {
        let flagged = trailing_loop(&body, MAX_PHRASE_LEN);
        let mut longer = prefix.clone();
        longer.extend_from_slice(&body);
        // A prefix can only complete a loop the body was too short to hold.
        if flagged.is_some() || body.len() >= 3 * MAX_PHRASE_LEN {
            prop_assert_eq!(trailing_loop(&longer, MAX_PHRASE_LEN).is_some(), flagged.is_some());
        }
        if let Some(l) = flagged {
            let mut more = body.clone();
            more.extend_from_slice(&body[body.len() - l..]);
            prop_assert!(is_repetitive(&record(0, more), 1));
        }
    }

    #[test]
    fn huse_ignores_label_swap(pts in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 30..80)) {
        let n = pts.len() / 2 * 2;
        let make = |swap: bool| -> Vec<HuseInstance> {
            pts[..n].iter().enumerate().map(|(i, &(x, y))| {
                let human = (i % 2 == 0) != swap;
                HuseInstance { generation_id: i.to_string(), features: [x, y], label: if human { Label::Human } else { Label::Model } }
            }).collect()
        };
        let a = huse_score(&make(false), 7).unwrap();
        let b = huse_score(&make(true), 7).unwrap();
        prop_assert_eq!(a.score, b.score);
        prop_assert!((0.0..=1.0).contains(&a.score));
    }

    #[test]
    fn huse_absorbs_affine_maps(pts in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 30..80), a in 0.1f64..10.0, b in -5.0f64..5.0) {
        let n = pts.len() / 2 * 2;
        let znorm = |v: Vec<[f64; 2]>| -> Vec<[f64; 2]> {
            let mut out = v.clone();
            for j in 0..2 {
                let m = v.iter().map(|x| x[j]).sum::<f64>() / v.len() as f64;
                let sd = (v.iter().map(|x| (x[j] - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt();
                for (o, x) in out.iter_mut().zip(&v) { o[j] = (x[j] - m) / sd; }
            }
            out
        };
        let raw: Vec<[f64; 2]> = pts[..n].iter().map(|&(x, y)| [x, y]).collect();
        let mapped: Vec<[f64; 2]> = raw.iter().map(|f| [a * f[0] + b, f[1]]).collect();
        let inst = |f: Vec<[f64; 2]>| -> Vec<HuseInstance> {
            f.into_iter().enumerate().map(|(i, features)| HuseInstance {
                generation_id: i.to_string(), features, label: if i % 2 == 0 { Label::Human } else { Label::Model },
            }).collect()
        };
        let s1 = huse_score(&inst(znorm(raw)), 5).unwrap();
        let s2 = huse_score(&inst(znorm(mapped)), 5).unwrap();
        prop_assert!((s1.score - s2.score).abs() <= 2.0 / n as f64 + 1e-12);
    }

    #[test]
    fn shape_statistics_stay_in_bounds(seed in 0u64..500, p in 0.05f64..=1.0, k in 1usize..20) {
        let prov = common::ToyProvider::new(17, seed, 0.2);
        let v = prov.vocab_size();
        let shape = distribution_shape_probe(&prov, &[vec![0, 3, 4, 5]], p, k).unwrap();
        for s in &shape.steps {
            prop_assert!(s.entropy >= 0.0 && s.entropy <= (v as f64).ln() + 1e-12);
            prop_assert!(s.nucleus_size >= 1 && s.nucleus_size <= v);
            prop_assert!(s.topk_mass > 0.0 && s.topk_mass <= 1.0 + 1e-12);
        }
    }
}

#[test]
fn generation_perplexity_matches_recorded() {
    let p = common::ToyProvider::new(10, 4, 0.5);
    let ctx = ContextWindow::start(p.vocabulary());
    let recs: Vec<GenerationRecord> = (0..20)
        .map(|i| generate(&p, &ctx, &DecoderConfig::sample().with_seed(2).with_max_len(15), i).unwrap())
        .collect();
    let a = generation_perplexity(&recs, &p).unwrap();
    let b = nucleus_core::metrics::recorded_perplexity(&recs).unwrap();
    assert!((a - b).abs() / b < 1e-12);
}
