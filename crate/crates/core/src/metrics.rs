//! Evaluation metrics: ROC AUC from anomaly scores, classification accuracy
//! from routed classes, and standardised loss traces.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{OdlError, Result};

/// Area under the ROC curve, as the Mann-Whitney statistic
/// `P(anomalous > normal) + P(equal) / 2`.
///
/// Uses midranks over the sorted scores, so it is `O(n log n)` and exact
/// under ties.
pub fn auc(scores: &[f64], is_anomalous: &[bool]) -> Result<f64> {
    if scores.len() != is_anomalous.len() {
        return Err(OdlError::invalid("scores and labels differ in length"));
    }
    if let Some(s) = scores.iter().find(|s| s.is_nan()) {
        return Err(OdlError::invalid(format!("score {s} is not comparable")));
    }
    let pos = is_anomalous.iter().filter(|&&a| a).count();
    let neg = scores.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(OdlError::invalid(
            "AUC needs at least one normal and one anomalous sample",
        ));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // midrank of positions i..j (1-based)
        let rank = (i + j + 1) as f64 / 2.0;
        let anomalies = order[i..j].iter().filter(|&&k| is_anomalous[k]).count();
        rank_sum += rank * anomalies as f64;
        i = j;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Instance-to-class mapping built by greedy majority vote.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMapping {
    map: BTreeMap<usize, u32>,
}

impl ClassMapping {
    /// Repeatedly takes the largest (instance, class) co-occurrence count on
    /// the reference segment, maps that instance to that class and removes
    /// both from further consideration. Count ties go to the lowest instance,
    /// then the lowest class. Not an optimal assignment.
    pub fn greedy(predicted: &[usize], truth: &[u32]) -> Result<Self> {
        if predicted.len() != truth.len() {
            return Err(OdlError::invalid("predicted and truth differ in length"));
        }
        let mut counts: BTreeMap<(usize, u32), usize> = BTreeMap::new();
        for (&k, &c) in predicted.iter().zip(truth) {
            *counts.entry((k, c)).or_default() += 1;
        }
        let mut map = BTreeMap::new();
        let mut used_classes = Vec::new();
        loop {
            let best = counts
                .iter()
                .filter(|((k, c), _)| !map.contains_key(k) && !used_classes.contains(c))
                .max_by(|a, b| a.1.cmp(b.1).then_with(|| b.0.cmp(a.0)));
            match best {
                Some((&(k, c), _)) => {
                    map.insert(k, c);
                    used_classes.push(c);
                }
                None => break,
            }
        }
        Ok(Self { map })
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, u32)>) -> Self {
        Self {
            map: pairs.into_iter().collect(),
        }
    }

    pub fn identity(classes: &[u32]) -> Self {
        Self::from_pairs(classes.iter().enumerate().map(|(i, &c)| (i, c)))
    }

    pub fn get(&self, instance: usize) -> Option<u32> {
        self.map.get(&instance).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
    /// Samples routed to an instance without a mapped class (counted wrong).
    pub unmapped: usize,
}

pub fn classification_accuracy(
    predicted: &[usize],
    truth: &[u32],
    mapping: &ClassMapping,
) -> Result<AccuracyReport> {
    if predicted.len() != truth.len() {
        return Err(OdlError::invalid("predicted and truth differ in length"));
    }
    if predicted.is_empty() {
        return Err(OdlError::invalid("accuracy of an empty set"));
    }
    let mut correct = 0;
    let mut unmapped = 0;
    for (&k, &c) in predicted.iter().zip(truth) {
        match mapping.get(k) {
            Some(m) if m == c => correct += 1,
            Some(_) => {}
            None => unmapped += 1,
        }
    }
    Ok(AccuracyReport {
        accuracy: correct as f64 / predicted.len() as f64,
        correct,
        total: predicted.len(),
        unmapped,
    })
}

/// Z-scores `trace` with the mean and (population) standard deviation of
/// `trace[reference]`.
pub fn standardized_loss(trace: &[f64], reference: std::ops::Range<usize>) -> Result<Vec<f64>> {
    if trace.len() < 2 {
        return Err(OdlError::invalid("trace needs at least two values"));
    }
    if reference.end > trace.len() || reference.len() < 2 {
        return Err(OdlError::invalid(format!(
            "reference segment {reference:?} must hold at least two points of a {}-point trace",
            trace.len()
        )));
    }
    let r = &trace[reference];
    let mean = r.iter().sum::<f64>() / r.len() as f64;
    let var = r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / r.len() as f64;
    let sd = var.sqrt();
    if !(sd > 1e-300) || sd <= 1e-12 * mean.abs() {
        return Err(OdlError::config(
            "reference segment has zero variance; use a longer reference segment",
        ));
    }
    Ok(trace.iter().map(|v| (v - mean) / sd).collect())
}

/// Standardise each instance's trace against the same reference segment.
pub fn standardized_traces(traces: &[Vec<f64>], reference: std::ops::Range<usize>) -> Result<Vec<Vec<f64>>> {
    traces
        .iter()
        .map(|t| standardized_loss(t, reference.clone()))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub task: String,
    pub method: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub auc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    pub n_train: usize,
    pub n_eval: usize,
    pub seed: u64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_auc(scores: &[f64], labels: &[bool]) -> f64 {
        let mut num = 0.0;
        let mut pairs = 0.0;
        for (i, &a) in scores.iter().enumerate() {
            if !labels[i] {
                continue;
            }
            for (j, &b) in scores.iter().enumerate() {
                if labels[j] {
                    continue;
                }
                pairs += 1.0;
                if a > b {
                    num += 1.0;
                } else if a == b {
                    num += 0.5;
                }
            }
        }
        num / pairs
    }

    #[test]
    fn auc_simple_cases() {
        assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]).unwrap(), 1.0);
        assert_eq!(auc(&[0.5; 6], &[true, false, true, false, true, false]).unwrap(), 0.5);
        assert_eq!(auc(&[0.9, 0.8, 0.1], &[false, false, true]).unwrap(), 0.0);
        let v = auc(&[3.0, 5.0, 1.0, 2.0, 4.0], &[true, true, false, false, false]).unwrap();
        assert!((v - 5.0 / 6.0).abs() < 1e-15);
        assert!(auc(&[1.0, 2.0], &[true, true]).is_err());
        assert!(auc(&[1.0, 2.0], &[true]).is_err());
        assert!(auc(&[f64::NAN, 2.0], &[true, false]).is_err());
    }

    #[test]
    fn auc_matches_pairwise_oracle_with_ties() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        for _ in 0..200 {
            let scores: Vec<f64> = (0..50).map(|_| (rng.random_range(0..12) as f64) * 0.25).collect();
            let mut labels: Vec<bool> = (0..50).map(|_| rng.random_bool(0.4)).collect();
            labels[0] = true;
            labels[1] = false;
            let a = auc(&scores, &labels).unwrap();
            assert!((a - brute_auc(&scores, &labels)).abs() < 1e-12);
        }
    }

    #[test]
    fn greedy_mapping_and_accuracy() {
        let truth = [2500, 2500, 2000, 2000, 1500, 0];
        let identity = ClassMapping::identity(&[2500, 2000, 1500, 0]);
        let pred = [0, 0, 1, 1, 2, 3];
        let r = classification_accuracy(&pred, &truth, &identity).unwrap();
        assert_eq!(r.accuracy, 1.0);

        // relabel instances: 0->3, 1->2, 2->1, 3->0
        let relabeled: Vec<usize> = pred.iter().map(|&k| 3 - k).collect();
        let m1 = ClassMapping::greedy(&pred, &truth).unwrap();
        let m2 = ClassMapping::greedy(&relabeled, &truth).unwrap();
        let a1 = classification_accuracy(&pred, &truth, &m1).unwrap();
        let a2 = classification_accuracy(&relabeled, &truth, &m2).unwrap();
        assert_eq!(a1.accuracy, a2.accuracy);
        assert_eq!(a1.accuracy, 1.0);
    }

    #[test]
    fn unmapped_instances_count_as_errors() {
        // Two instances both see class 7 on the reference segment; only one
        // can map to it.
        let m = ClassMapping::greedy(&[0, 0, 0, 1], &[7, 7, 7, 7]).unwrap();
        assert_eq!(m.get(0), Some(7));
        assert_eq!(m.get(1), None);
        let r = classification_accuracy(&[0, 1, 1], &[7, 7, 7], &m).unwrap();
        assert_eq!(r.unmapped, 2);
        assert!((r.accuracy - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn standardized_loss_cases() {
        assert!(matches!(
            standardized_loss(&[2.0; 10], 0..5),
            Err(OdlError::Config(_))
        ));
        assert!(standardized_loss(&[1.0], 0..1).is_err());
        let x = [1.0, 2.0, 4.0, 3.0, 10.0, 12.0];
        let z = standardized_loss(&x, 0..4).unwrap();
        let mean_ref: f64 = z[..4].iter().sum::<f64>() / 4.0;
        assert!(mean_ref.abs() < 1e-9);
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v - 7.0).collect();
        let zy = standardized_loss(&y, 0..4).unwrap();
        for (a, b) in z.iter().zip(&zy) {
            assert!((a - b).abs() < 1e-12);
        }
        let traces = standardized_traces(&[x.to_vec(), y], 0..4).unwrap();
        assert_eq!(traces.len(), 2);
    }

    proptest! {
        #[test]
        fn auc_is_rank_invariant(seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let scores: Vec<f64> = (0..40).map(|_| rng.random_range(-3.0..3.0)).collect();
            let mut labels: Vec<bool> = (0..40).map(|_| rng.random_bool(0.5)).collect();
            labels[0] = true;
            labels[1] = false;
            let base = auc(&scores, &labels).unwrap();
            let transformed: Vec<f64> = scores.iter().map(|s| s.exp() * 2.0 + 1.0).collect();
            prop_assert!((auc(&transformed, &labels).unwrap() - base).abs() < 1e-12);
            // continuous scores: ties have probability zero
            let flipped: Vec<bool> = labels.iter().map(|l| !l).collect();
            prop_assert!((auc(&scores, &flipped).unwrap() - (1.0 - base)).abs() < 1e-12);
        }
    }
}
