use serde::Serialize;

use super::features::{HuseInstance, Label};
use crate::error::{Error, Result};
use crate::exec::par_map;

pub const DEFAULT_K: usize = 13;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HuseScore {
    pub score: f64,
    pub loo_error: f64,
    pub k: usize,
    pub instances: usize,
}

/// Leave-one-out prediction for every instance: majority label among the
/// `k` nearest others (squared Euclidean distance, ties by lower index).
pub fn loo_predictions(instances: &[HuseInstance], k: usize) -> Result<Vec<Label>> {
    let n = instances.len();
    if k == 0 || k.is_multiple_of(2) || k >= n {
        return Err(Error::param(format!("k must be odd and in [1, {}), got {k}", n)));
    }
    Ok(par_map(instances, |i, a| {
        let mut d: Vec<(f64, usize)> = instances
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(j, b)| {
                let dx = a.features[0] - b.features[0];
                let dy = a.features[1] - b.features[1];
                (dx * dx + dy * dy, j)
            })
            .collect();
        let cmp = |x: &(f64, usize), y: &(f64, usize)| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1));
        d.select_nth_unstable_by(k - 1, cmp);
        let human = d[..k].iter().filter(|&&(_, j)| instances[j].label == Label::Human).count();
        if 2 * human > k {
            Label::Human
        } else {
            Label::Model
        }
    }))
}

/// `min(1, 2 * leave-one-out error)` of a KNN discriminator between human
/// and model instances.
pub fn huse_score(instances: &[HuseInstance], k: usize) -> Result<HuseScore> {
    let humans = instances.iter().filter(|x| x.label == Label::Human).count();
    let models = instances.len() - humans;
    if humans == 0 || humans != models {
        return Err(Error::InsufficientData(format!(
            "HUSE needs balanced labels, got {humans} human and {models} model instances"
        )));
    }
    let preds = loo_predictions(instances, k)?;
    let wrong = preds.iter().zip(instances).filter(|(p, x)| **p != x.label).count();
    let loo_error = wrong as f64 / instances.len() as f64;
    Ok(HuseScore {
        score: (2.0 * loo_error).min(1.0),
        loo_error,
        k,
        instances: instances.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inst(x: f64, y: f64, label: Label) -> HuseInstance {
        HuseInstance {
            generation_id: String::new(),
            features: [x, y],
            label,
        }
    }

    #[test]
    fn separated_clusters_score_zero() {
        let mut v = Vec::new();
        for i in 0..100 {
            let j = i as f64 * 0.01;
            v.push(inst(10.0 + j, 10.0 - j, Label::Human));
            v.push(inst(-10.0 - j, -10.0 + j, Label::Model));
        }
        let s = huse_score(&v, DEFAULT_K).unwrap();
        assert_eq!(s.score, 0.0);
        assert_eq!(s.loo_error, 0.0);
    }

    #[test]
    fn six_point_nearest_neighbour_table() {
        // Hand-tabulated 1-NN:
        // 0 H (0,0)   -> 1 (dist 1)       H  correct
        // 1 H (1,0)   -> 0 (1), 2 (1): index 0 wins  H  correct
        // 2 M (2,0)   -> 1 (1), 3 (1): index 1 wins  H  wrong
        // 3 M (3,0)   -> 2 (1)            M  correct
        // 4 H (10,0)  -> 5 (1)            M  wrong
        // 5 M (11,0)  -> 4 (1)            H  wrong
        let v = vec![
            inst(0.0, 0.0, Label::Human),
            inst(1.0, 0.0, Label::Human),
            inst(2.0, 0.0, Label::Model),
            inst(3.0, 0.0, Label::Model),
            inst(10.0, 0.0, Label::Human),
            inst(11.0, 0.0, Label::Model),
        ];
        let p = loo_predictions(&v, 1).unwrap();
        use Label::*;
        assert_eq!(p, vec![Human, Human, Human, Model, Model, Human]);
        let s = huse_score(&v, 1).unwrap();
        assert!((s.loo_error - 0.5).abs() < 1e-15);
        assert_eq!(s.score, 1.0);
    }

    #[test]
    fn parameter_errors() {
        let v = vec![inst(0.0, 0.0, Label::Human), inst(1.0, 0.0, Label::Model)];
        assert!(huse_score(&v, 2).is_err());
        assert!(huse_score(&v, 3).is_err());
        let unbalanced = vec![inst(0.0, 0.0, Label::Human), inst(1.0, 0.0, Label::Human)];
        assert!(huse_score(&unbalanced, 1).is_err());
    }
}
