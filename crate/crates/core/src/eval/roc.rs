use serde::{Deserialize, Serialize};

use super::Level;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    pub threshold: f64,
}

/// ROC points for "positive iff score >= threshold", one per distinct score,
/// starting at `(0, 0)` with an infinite threshold.
pub fn roc_curve(labels: &[bool], scores: &[f64]) -> Vec<RocPoint> {
    assert_eq!(labels.len(), scores.len(), "labels and scores must align");
    let pos = labels.iter().filter(|&&l| l).count() as f64;
    let neg = labels.len() as f64 - pos;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![RocPoint { fpr: 0.0, tpr: 0.0, threshold: f64::INFINITY }];
    let (mut tp, mut fp) = (0.0, 0.0);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            i += 1;
        }
        points.push(RocPoint {
            fpr: if neg > 0.0 { fp / neg } else { 0.0 },
            tpr: if pos > 0.0 { tp / pos } else { 0.0 },
            threshold: s,
        });
    }
    points
}

/// Trapezoidal area under the ROC curve; tied scores form one diagonal step,
/// which counts each tied positive-negative pair as one half.
/// `None` unless both classes are present.
pub fn roc_auc(labels: &[bool], scores: &[f64]) -> Option<f64> {
    let pos = labels.iter().filter(|&&l| l).count();
    if pos == 0 || pos == labels.len() {
        return None;
    }
    let pts = roc_curve(labels, scores);
    Some(pts.windows(2).map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0).sum())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassAuc {
    pub level: Level,
    /// `None` when the level has no positives or no negatives.
    pub auc: Option<f64>,
    pub positives: usize,
    pub negatives: usize,
}

/// One-vs-rest AUC per level, scoring each prediction by its affinity to the level.
pub fn roc_auc_ovr(truth: &[Level], predicted: &[f64]) -> Vec<ClassAuc> {
    Level::ALL
        .into_iter()
        .map(|level| {
            let labels: Vec<bool> = truth.iter().map(|&t| t == level).collect();
            let scores: Vec<f64> = predicted.iter().map(|&p| level.affinity(p)).collect();
            let positives = labels.iter().filter(|&&l| l).count();
            ClassAuc { level, auc: roc_auc(&labels, &scores), positives, negatives: labels.len() - positives }
        })
        .collect()
}

/// `level,fpr,tpr,threshold` rows for every level.
pub fn roc_csv(truth: &[Level], predicted: &[f64]) -> String {
    let mut out = String::from("level,fpr,tpr,threshold\n");
    for level in Level::ALL {
        let labels: Vec<bool> = truth.iter().map(|&t| t == level).collect();
        let scores: Vec<f64> = predicted.iter().map(|&p| level.affinity(p)).collect();
        let name = serde_json::to_value(level).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
        for p in roc_curve(&labels, &scores) {
            out.push_str(&format!("{name},{},{},{}\n", p.fpr, p.tpr, p.threshold));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pair_oracle(labels: &[bool], scores: &[f64]) -> f64 {
        let (mut wins, mut pairs) = (0.0, 0.0);
        for i in 0..labels.len() {
            for j in 0..labels.len() {
                if labels[i] && !labels[j] {
                    pairs += 1.0;
                    if scores[i] > scores[j] {
                        wins += 1.0;
                    } else if scores[i] == scores[j] {
                        wins += 0.5;
                    }
                }
            }
        }
        wins / pairs
    }

    #[test]
    fn auc_examples() {
        assert_eq!(roc_auc(&[true, true, false, false], &[0.9, 0.8, 0.2, 0.1]), Some(1.0));
        assert_eq!(roc_auc(&[true, false, true, false], &[0.3; 4]), Some(0.5));
        assert_eq!(roc_auc(&[true, true], &[0.1, 0.2]), None);
        let labels = [true, false, true, true, false, false];
        let scores = [0.8, 0.8, 0.3, 0.6, 0.1, 0.35];
        let auc = roc_auc(&labels, &scores).unwrap();
        assert!((auc - pair_oracle(&labels, &scores)).abs() < 1e-12);
        // hand count: 5.5 of 9 pairs
        assert!((auc - 5.5 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn ovr_uses_affinity() {
        let truth = [Level::Healthy, Level::Good, Level::Severe, Level::VerySevere];
        let per = roc_auc_ovr(&truth, &[0.5, 3.0, 7.0, 12.0]);
        assert!(per.iter().all(|c| c.auc == Some(1.0)));
        let csv = roc_csv(&truth, &[0.5, 3.0, 7.0, 12.0]);
        assert!(csv.starts_with("level,fpr,tpr,threshold\nhealthy,0,0,inf\n"));
    }

    proptest! {
        #[test]
        fn matches_pair_counting(
            data in proptest::collection::vec((any::<bool>(), 0u8..6), 2..14)
        ) {
            let labels: Vec<bool> = data.iter().map(|d| d.0).collect();
            let scores: Vec<f64> = data.iter().map(|d| d.1 as f64 / 2.0).collect();
            match roc_auc(&labels, &scores) {
                Some(a) => prop_assert!((a - pair_oracle(&labels, &scores)).abs() < 1e-9),
                None => prop_assert!(labels.iter().all(|&l| l) || labels.iter().all(|&l| !l)),
            }
        }

        #[test]
        fn invariant_under_monotone_transform(
            data in proptest::collection::vec((any::<bool>(), -5.0f64..5.0), 2..20)
        ) {
            let labels: Vec<bool> = data.iter().map(|d| d.0).collect();
            let scores: Vec<f64> = data.iter().map(|d| d.1).collect();
            let warped: Vec<f64> = scores.iter().map(|s| (s * 0.7).exp() + 3.0).collect();
            prop_assert_eq!(roc_auc(&labels, &scores), roc_auc(&labels, &warped));
        }
    }
}
