//! Brute-force reference implementations, written as plainly as possible
//! and sharing no code with the crate.

use std::collections::HashMap;

use nucleus_core::{DistributionProvider, TokenId};

fn counts(doc: &[TokenId], n: usize) -> HashMap<Vec<TokenId>, usize> {
    let mut m = HashMap::new();
    if doc.len() >= n {
        for i in 0..=doc.len() - n {
            *m.entry(doc[i..i + n].to_vec()).or_insert(0) += 1;
        }
    }
    m
}

/// Sentence BLEU of `hyp` against `refs`: clipped n-gram precisions up to
/// `n_max`, uniform geometric mean, brevity penalty from the closest
/// reference length (shorter on ties).
pub fn bleu(hyp: &[TokenId], refs: &[&[TokenId]], n_max: usize, smoothing: bool) -> f64 {
    if hyp.is_empty() {
        return 0.0;
    }
    let mut logp = 0.0;
    for n in 1..=n_max {
        let h = counts(hyp, n);
        let rc: Vec<HashMap<Vec<TokenId>, usize>> = refs.iter().map(|r| counts(r, n)).collect();
        let mut matched = 0usize;
        let mut total = 0usize;
        for (g, c) in &h {
            let best = rc.iter().map(|m| m.get(g).copied().unwrap_or(0)).max().unwrap_or(0);
            matched += (*c).min(best);
            total += c;
        }
        let p = if smoothing && n > 1 {
            (matched as f64 + 1.0) / (total as f64 + 1.0)
        } else {
            if matched == 0 {
                return 0.0;
            }
            matched as f64 / total as f64
        };
        logp += p.ln() / n_max as f64;
    }
    let c = hyp.len();
    let mut r = usize::MAX;
    for rf in refs {
        let l = rf.len();
        let d = l.abs_diff(c);
        if r == usize::MAX || d < r.abs_diff(c) || (d == r.abs_diff(c) && l < r) {
            r = l;
        }
    }
    let bp = if c > r { 1.0 } else { (1.0 - r as f64 / c as f64).exp() };
    bp * logp.exp()
}

/// Mean BLEU of every document against all the others.
pub fn self_bleu(docs: &[Vec<TokenId>], n_max: usize, smoothing: bool) -> f64 {
    let mut s = 0.0;
    for i in 0..docs.len() {
        let refs: Vec<&[TokenId]> = docs
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, d)| d.as_slice())
            .collect();
        s += bleu(&docs[i], &refs, n_max, smoothing);
    }
    s / docs.len() as f64
}

/// Shortest `L` in `2..=20` such that the last `3L` tokens are three copies
/// of one phrase, checked element by element.
pub fn suffix_loop(s: &[TokenId]) -> Option<usize> {
    let n = s.len();
    for l in 2..=20 {
        if 3 * l > n {
            return None;
        }
        let start = n - 3 * l;
        if (0..3 * l).all(|i| s[start + i] == s[n - l + i % l]) {
            return Some(l);
        }
    }
    None
}

/// Descending order with ascending id among equal probabilities; the first
/// prefix whose plain running sum reaches `p`, returned in id order.
pub fn nucleus_prefix(probs: &[f64], p: f64) -> Vec<TokenId> {
    let mut ids: Vec<TokenId> = (0..probs.len() as TokenId).collect();
    ids.sort_by(|&a, &b| probs[b as usize].total_cmp(&probs[a as usize]).then(a.cmp(&b)));
    let mut acc = 0.0;
    for m in 0..ids.len() {
        acc += probs[ids[m] as usize];
        if acc >= p {
            ids.truncate(m + 1);
            break;
        }
    }
    ids.sort_unstable();
    ids
}

/// Best EOD-terminated continuation of at most `max_len` tokens by
/// enumerating every sequence (assumes one exists, true whenever EOD has
/// non-zero probability).
pub fn exhaustive_best<P: DistributionProvider>(p: &P, ctx: &[TokenId], max_len: usize) -> (Vec<TokenId>, f64) {
    fn walk<P: DistributionProvider>(
        p: &P,
        hist: &mut Vec<TokenId>,
        cont: &mut Vec<TokenId>,
        score: f64,
        max_len: usize,
        best: &mut Option<(Vec<TokenId>, f64)>,
    ) {
        let d = p.next_distribution(hist).unwrap();
        for t in 0..p.vocab_size() as TokenId {
            let s = score + d.prob(t).ln();
            cont.push(t);
            if t == p.eod() {
                if best.as_ref().is_none_or(|b| s > b.1) {
                    *best = Some((cont.clone(), s));
                }
            } else if cont.len() < max_len {
                hist.push(t);
                walk(p, hist, cont, s, max_len, best);
                hist.pop();
            }
            cont.pop();
        }
    }
    let mut best = None;
    walk(p, &mut ctx.to_vec(), &mut Vec::new(), 0.0, max_len, &mut best);
    best.expect("some sequence ends in EOD")
}
