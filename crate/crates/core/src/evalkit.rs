//! Classification-based evaluation of alignment: a k-nearest-neighbor
//! classifier on sample vectors, stratified folds, and paired runs with and
//! without alignment.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::congeal::{align_per_class, congeal, CongealConfig, EnabledTransforms};
use crate::curves::{Curve, CurveSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EvalMode {
    /// Align each class separately (train and test members together).
    Supervised,
    /// Align train and test curves together without labels, time warp only.
    Unsupervised,
    NoAlignment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub k_neighbors: usize,
    pub folds: usize,
    pub mode: EvalMode,
    pub congeal_config: CongealConfig,
    pub rng_seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            k_neighbors: 10,
            folds: 10,
            mode: EvalMode::Unsupervised,
            congeal_config: CongealConfig {
                transforms: EnabledTransforms::only(crate::congeal::TransformFamily::TimeWarp),
                ..CongealConfig::default()
            },
            rng_seed: 0,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_neighbors == 0 {
            return Err(Error::Config("k_neighbors must be at least 1".into()));
        }
        if self.folds < 2 {
            return Err(Error::Config(format!(
                "folds must be at least 2, got {}",
                self.folds
            )));
        }
        if self.mode == EvalMode::Unsupervised && !self.congeal_config.transforms.is_warp_only() {
            return Err(Error::ProtocolViolation(
                "unsupervised alignment is restricted to the time-warp transform".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    /// Correct predictions over all test curves.
    pub accuracy: f64,
    /// Accuracy of each fold, or a single entry for a fixed split.
    pub per_fold: Vec<f64>,
    /// Class ids indexing the confusion matrix, ascending.
    pub classes: Vec<i64>,
    /// `confusion[true][predicted]` counts.
    pub confusion: Vec<Vec<usize>>,
}

impl EvalResult {
    pub fn mean_fold_accuracy(&self) -> f64 {
        self.per_fold.iter().sum::<f64>() / self.per_fold.len() as f64
    }

    fn from_predictions(
        classes: &[i64],
        truth_and_pred: &[(i64, i64)],
        per_fold: Vec<f64>,
    ) -> EvalResult {
        let index: BTreeMap<i64, usize> =
            classes.iter().enumerate().map(|(i, c)| (*c, i)).collect();
        let mut confusion = vec![vec![0; classes.len()]; classes.len()];
        let mut correct = 0;
        for &(t, p) in truth_and_pred {
            confusion[index[&t]][index[&p]] += 1;
            if t == p {
                correct += 1;
            }
        }
        EvalResult {
            accuracy: correct as f64 / truth_and_pred.len() as f64,
            per_fold,
            classes: classes.to_vec(),
            confusion,
        }
    }
}

/// Aligned-mode result with its no-alignment baseline on identical splits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedEval {
    pub mode: EvalMode,
    pub aligned: EvalResult,
    pub baseline: EvalResult,
}

impl PairedEval {
    /// Mean fold accuracy with alignment minus without. Negative values mean
    /// alignment hurt classification.
    pub fn improvement(&self) -> f64 {
        self.aligned.mean_fold_accuracy() - self.baseline.mean_fold_accuracy()
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Majority vote among the `k` training curves nearest in Euclidean
/// distance. Distance ties go to the lower training index, vote ties to the
/// lower class id.
pub fn knn_classify(
    train: &[Curve],
    train_labels: &[i64],
    test: &[Curve],
    k: usize,
) -> Result<Vec<i64>> {
    if train.is_empty() {
        return Err(Error::InsufficientData("empty training set".into()));
    }
    if train.len() != train_labels.len() {
        return Err(Error::Config(format!(
            "{} training curves but {} labels",
            train.len(),
            train_labels.len()
        )));
    }
    if k == 0 || k > train.len() {
        return Err(Error::Config(format!(
            "k = {k} must lie in 1..={} (training set size)",
            train.len()
        )));
    }
    let m = train[0].len();
    if train.iter().chain(test).any(|c| c.len() != m) {
        return Err(Error::InvalidCurve(
            "train and test curves differ in length".into(),
        ));
    }
    let mut order: Vec<(f64, usize)> = Vec::with_capacity(train.len());
    Ok(test
        .iter()
        .map(|query| {
            order.clear();
            order.extend(
                train
                    .iter()
                    .enumerate()
                    .map(|(i, c)| (squared_distance(query.samples(), c.samples()), i)),
            );
            order.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut votes: BTreeMap<i64, usize> = BTreeMap::new();
            for &(_, i) in &order[..k] {
                *votes.entry(train_labels[i]).or_default() += 1;
            }
            // BTreeMap iterates ascending, so max_by keeps the last maximum;
            // reverse to keep the lowest class id among ties.
            votes
                .into_iter()
                .rev()
                .max_by_key(|&(_, n)| n)
                .map(|(label, _)| label)
                .expect("k >= 1")
        })
        .collect())
}

/// Classifies the curves of `test` using the labeled curves of `train`.
pub fn knn_classify_sets(train: &CurveSet, test: &[Curve], k: usize) -> Result<Vec<i64>> {
    let labels = train
        .labels()
        .ok_or_else(|| Error::Config("training set has no labels".into()))?;
    knn_classify(train.curves(), labels, test, k)
}

/// Assignment of every item to one of `folds` cross-validation folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub folds: usize,
    /// Fold index of each item.
    pub fold_of: Vec<usize>,
    /// Set when the requested fold count was reduced to fit the smallest
    /// class.
    pub reduced_from: Option<usize>,
}

impl FoldAssignment {
    /// Item indices in fold `f`, ascending.
    pub fn members(&self, f: usize) -> Vec<usize> {
        (0..self.fold_of.len())
            .filter(|&i| self.fold_of[i] == f)
            .collect()
    }

    /// Item indices outside fold `f`, ascending.
    pub fn complement(&self, f: usize) -> Vec<usize> {
        (0..self.fold_of.len())
            .filter(|&i| self.fold_of[i] != f)
            .collect()
    }
}

/// Stratified fold assignment. Within each class (ascending id) members are
/// shuffled with the seeded generator and dealt round-robin; dealing
/// continues where the previous class stopped so fold sizes stay balanced.
pub fn stratified_folds(labels: &[i64], folds: usize, rng_seed: u64) -> Result<FoldAssignment> {
    if folds < 2 {
        return Err(Error::Config(format!(
            "folds must be at least 2, got {folds}"
        )));
    }
    let mut classes: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        classes.entry(l).or_default().push(i);
    }
    let smallest = classes
        .iter()
        .min_by_key(|(_, m)| m.len())
        .map(|(l, m)| (*l, m.len()))
        .ok_or_else(|| Error::InsufficientData("no labels to stratify".into()))?;
    if smallest.1 < 2 {
        return Err(Error::ClassTooSmall {
            label: smallest.0,
            count: smallest.1,
            required: 2,
        });
    }
    let (folds, reduced_from) = if smallest.1 < folds {
        log::warn!(
            "class {} has only {} members; reducing folds from {folds} to {}",
            smallest.0,
            smallest.1,
            smallest.1
        );
        (smallest.1, Some(folds))
    } else {
        (folds, None)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut fold_of = vec![0; labels.len()];
    let mut next = 0;
    for members in classes.values_mut() {
        members.shuffle(&mut rng);
        for &i in members.iter() {
            fold_of[i] = next;
            next = (next + 1) % folds;
        }
    }
    Ok(FoldAssignment {
        folds,
        fold_of,
        reduced_from,
    })
}

fn sorted_classes(labels: &[i64]) -> Vec<i64> {
    let mut classes = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    classes
}

/// Produces the representations classified in `mode` for one train/test
/// split: the aligned (or raw) train curves followed by the test curves.
fn represent(
    train: &[Curve],
    train_labels: &[i64],
    test: &[Curve],
    test_labels: &[i64],
    mode: EvalMode,
    config: &CongealConfig,
) -> Result<(Vec<Curve>, Vec<Curve>)> {
    let all: Vec<Curve> = train.iter().chain(test).cloned().collect();
    let aligned = match mode {
        EvalMode::NoAlignment => return Ok((train.to_vec(), test.to_vec())),
        EvalMode::Supervised => {
            let labels: Vec<i64> = train_labels.iter().chain(test_labels).copied().collect();
            let set = CurveSet::labeled(all, labels)?;
            align_per_class(&set, config)?.aligned.into_parts().0
        }
        EvalMode::Unsupervised => {
            // label-blind: the optimizer only ever sees an unlabeled set
            let set = CurveSet::new(all)?;
            congeal(&set, config)?.final_set.into_parts().0
        }
    };
    let mut aligned = aligned;
    let test_part = aligned.split_off(train.len());
    Ok((aligned, test_part))
}

fn run_split(
    train: &[Curve],
    train_labels: &[i64],
    test: &[Curve],
    test_labels: &[i64],
    mode: EvalMode,
    config: &EvalConfig,
) -> Result<Vec<(i64, i64)>> {
    let (tr, te) = represent(
        train,
        train_labels,
        test,
        test_labels,
        mode,
        &config.congeal_config,
    )?;
    let predicted = knn_classify(&tr, train_labels, &te, config.k_neighbors)?;
    Ok(test_labels.iter().copied().zip(predicted).collect())
}

fn labels_of(set: &CurveSet, what: &str) -> Result<Vec<i64>> {
    set.labels()
        .map(<[i64]>::to_vec)
        .ok_or_else(|| Error::Config(format!("{what} set has no class labels")))
}

/// Evaluates `config.mode` on a fixed train/test split together with the
/// no-alignment baseline on the same split.
pub fn evaluate_split(
    train: &CurveSet,
    test: &CurveSet,
    config: &EvalConfig,
) -> Result<PairedEval> {
    config.validate()?;
    let train_labels = labels_of(train, "training")?;
    let test_labels = labels_of(test, "test")?;
    let classes = sorted_classes(&[train_labels.clone(), test_labels.clone()].concat());
    let run = |mode| -> Result<EvalResult> {
        let pairs = run_split(
            train.curves(),
            &train_labels,
            test.curves(),
            &test_labels,
            mode,
            config,
        )?;
        let acc = pairs.iter().filter(|(t, p)| t == p).count() as f64 / pairs.len() as f64;
        Ok(EvalResult::from_predictions(&classes, &pairs, vec![acc]))
    };
    let baseline = run(EvalMode::NoAlignment)?;
    let aligned = if config.mode == EvalMode::NoAlignment {
        baseline.clone()
    } else {
        run(config.mode)?
    };
    Ok(PairedEval {
        mode: config.mode,
        aligned,
        baseline,
    })
}

/// Stratified k-fold evaluation of `config.mode` with the paired
/// no-alignment baseline on identical folds.
pub fn evaluate_cv(set: &CurveSet, config: &EvalConfig) -> Result<PairedEval> {
    config.validate()?;
    let labels = labels_of(set, "input")?;
    let assignment = stratified_folds(&labels, config.folds, config.rng_seed)?;
    let classes = sorted_classes(&labels);
    let curves = set.curves();
    let pick = |idx: &[usize]| -> (Vec<Curve>, Vec<i64>) {
        (
            idx.iter().map(|&i| curves[i].clone()).collect(),
            idx.iter().map(|&i| labels[i]).collect(),
        )
    };

    let modes: Vec<EvalMode> = if config.mode == EvalMode::NoAlignment {
        vec![EvalMode::NoAlignment]
    } else {
        vec![EvalMode::NoAlignment, config.mode]
    };
    let mut results = Vec::new();
    for mode in modes {
        let mut pairs = Vec::new();
        let mut per_fold = Vec::with_capacity(assignment.folds);
        for f in 0..assignment.folds {
            let (train, train_labels) = pick(&assignment.complement(f));
            let (test, test_labels) = pick(&assignment.members(f));
            let fold_pairs = run_split(&train, &train_labels, &test, &test_labels, mode, config)?;
            let correct = fold_pairs.iter().filter(|(t, p)| t == p).count();
            per_fold.push(correct as f64 / fold_pairs.len() as f64);
            pairs.extend(fold_pairs);
        }
        results.push(EvalResult::from_predictions(&classes, &pairs, per_fold));
    }
    let baseline = results.remove(0);
    let aligned = results.pop().unwrap_or_else(|| baseline.clone());
    Ok(PairedEval {
        mode: config.mode,
        aligned,
        baseline,
    })
}

/// Supervised protocol: per-class alignment of train and test curves, then
/// classification on the given split.
///
/// Test labels decide which class a test curve is aligned with, so the
/// aligned representation can carry label information into the classifier.
/// [`eval_unsupervised`] avoids this.
pub fn eval_supervised(
    train: &CurveSet,
    test: &CurveSet,
    config: &EvalConfig,
) -> Result<PairedEval> {
    evaluate_split(
        train,
        test,
        &EvalConfig {
            mode: EvalMode::Supervised,
            ..config.clone()
        },
    )
}

/// Unsupervised protocol: label-blind joint time-warp alignment of every
/// fold's train and test curves, then classification.
pub fn eval_unsupervised(set: &CurveSet, config: &EvalConfig) -> Result<PairedEval> {
    evaluate_cv(
        set,
        &EvalConfig {
            mode: EvalMode::Unsupervised,
            ..config.clone()
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::congeal::TransformFamily;
    use crate::objective::ObjectiveKind;

    fn curve(v: &[f64]) -> Curve {
        Curve::new(v.to_vec()).unwrap()
    }

    #[test]
    fn knn_exact_match() {
        let train = vec![curve(&[0.0; 4]), curve(&[1.0; 4]), curve(&[5.0; 4])];
        let pred = knn_classify(&train, &[3, 1, 2], &[curve(&[1.0; 4])], 1).unwrap();
        assert_eq!(pred, vec![1]);
    }

    #[test]
    fn knn_vote_tie_goes_to_lowest_class() {
        let train = vec![curve(&[2.0; 4]), curve(&[0.0; 4])];
        let pred = knn_classify(&train, &[5, 4], &[curve(&[1.0; 4])], 2).unwrap();
        assert_eq!(pred, vec![4]);
    }

    #[test]
    fn knn_distance_tie_goes_to_lowest_index() {
        let train = vec![curve(&[2.0; 4]), curve(&[0.0; 4])];
        let pred = knn_classify(&train, &[5, 4], &[curve(&[1.0; 4])], 1).unwrap();
        assert_eq!(pred, vec![5]);
    }

    #[test]
    fn knn_matches_exhaustive_oracle() {
        // 3 classes x 3 curves, offsets chosen so the neighborhoods overlap
        let mut train = Vec::new();
        let mut labels = Vec::new();
        for (c, base) in [(0i64, 0.0), (1, 1.0), (2, 2.5)] {
            for j in 0..3 {
                let off = base + 0.3 * j as f64;
                train.push(curve(&[off, off * 0.5, -off, off + 0.1 * j as f64]));
                labels.push(c);
            }
        }
        let queries: Vec<Curve> = (0..12)
            .map(|q| {
                let x = q as f64 * 0.27 - 0.3;
                curve(&[x, 0.4 * x, -x, x + 0.05])
            })
            .collect();
        let pred = knn_classify(&train, &labels, &queries, 3).unwrap();
        for (q, p) in queries.iter().zip(&pred) {
            // brute force: all-pairs distances, stable selection of 3 nearest
            let mut d: Vec<(f64, usize)> = train
                .iter()
                .enumerate()
                .map(|(i, t)| {
                    let s: f64 = t
                        .samples()
                        .iter()
                        .zip(q.samples())
                        .map(|(a, b)| (a - b).powi(2))
                        .sum();
                    (s.sqrt(), i)
                })
                .collect();
            d.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mut counts = [0usize; 3];
            for &(_, i) in &d[..3] {
                counts[labels[i] as usize] += 1;
            }
            let best = *counts.iter().max().unwrap();
            let expected = counts.iter().position(|&c| c == best).unwrap() as i64;
            assert_eq!(*p, expected);
        }
    }

    #[test]
    fn knn_errors() {
        assert!(knn_classify(&[], &[], &[curve(&[0.0; 4])], 1).is_err());
        let train = vec![curve(&[0.0; 4])];
        assert!(knn_classify(&train, &[0], &[curve(&[0.0; 4])], 2).is_err());
        assert!(knn_classify(&train, &[0], &[curve(&[0.0; 5])], 1).is_err());
    }

    #[test]
    fn self_classification_is_perfect() {
        let train: Vec<Curve> = (0..8).map(|i| curve(&[i as f64, 0.0, 1.0, 2.0])).collect();
        let labels: Vec<i64> = (0..8).map(|i| i % 3).collect();
        assert_eq!(knn_classify(&train, &labels, &train, 1).unwrap(), labels);
    }

    #[test]
    fn folds_exact_divisibility() {
        let labels: Vec<i64> = (0..20).map(|i| i % 2).collect();
        let a = stratified_folds(&labels, 10, 3).unwrap();
        for f in 0..10 {
            let m = a.members(f);
            assert_eq!(m.len(), 2);
            assert_eq!(m.iter().filter(|&&i| labels[i] == 0).count(), 1);
        }
        assert_eq!(a, stratified_folds(&labels, 10, 3).unwrap());
    }

    #[test]
    fn folds_pigeonhole() {
        let labels: Vec<i64> = (0..21).map(|i| if i < 11 { 1 } else { 2 }).collect();
        let a = stratified_folds(&labels, 10, 8).unwrap();
        let class1: Vec<usize> = (0..10)
            .map(|f| a.members(f).iter().filter(|&&i| labels[i] == 1).count())
            .collect();
        assert_eq!(class1.iter().filter(|&&c| c == 2).count(), 1);
        assert_eq!(class1.iter().filter(|&&c| c == 1).count(), 9);
        for f in 0..10 {
            let n = a.members(f).len();
            assert!((2..=3).contains(&n));
        }
    }

    #[test]
    fn folds_reduce_or_fail() {
        let labels = vec![0, 0, 0, 1, 1, 1, 1, 1];
        let a = stratified_folds(&labels, 5, 1).unwrap();
        assert_eq!(a.folds, 3);
        assert_eq!(a.reduced_from, Some(5));
        assert!(matches!(
            stratified_folds(&[0, 0, 0, 1], 2, 1),
            Err(Error::ClassTooSmall { label: 1, .. })
        ));
    }

    fn identical_two_class() -> CurveSet {
        let a = curve(&[0.0, 1.0, 0.0, -1.0, 0.0, 0.5]);
        let b = curve(&[1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
        let mut curves = vec![a; 12];
        curves.extend(vec![b; 8]);
        let labels = [vec![0; 12], vec![1; 8]].concat();
        CurveSet::labeled(curves, labels).unwrap()
    }

    #[test]
    fn unsupervised_rejects_amplitude_transforms() {
        let config = EvalConfig {
            congeal_config: CongealConfig {
                transforms: EnabledTransforms::only(TransformFamily::AmplitudeScale),
                ..CongealConfig::default()
            },
            ..EvalConfig::default()
        };
        assert!(matches!(
            eval_unsupervised(&identical_two_class(), &config),
            Err(Error::ProtocolViolation(_))
        ));
    }

    #[test]
    fn identical_curves_give_majority_rate() {
        // every curve identical: all distances zero, the 10 lowest training
        // indices vote
        let c = curve(&[0.0, 1.0, 0.0, -1.0, 0.0, 0.5]);
        let labels = [vec![0; 14], vec![1; 6]].concat();
        let set = CurveSet::labeled(vec![c; 20], labels.clone()).unwrap();
        let config = EvalConfig {
            congeal_config: CongealConfig {
                transforms: EnabledTransforms::only(TransformFamily::TimeWarp),
                ..CongealConfig::default()
            },
            rng_seed: 4,
            ..EvalConfig::default()
        };
        let out = eval_unsupervised(&set, &config).unwrap();
        // the 6-member class caps the fold count at 6
        let folds = stratified_folds(&labels, 10, 4).unwrap();
        assert_eq!(folds.folds, 6);
        assert_eq!(out.aligned.per_fold.len(), 6);
        for f in 0..folds.folds {
            let train = folds.complement(f);
            let ones = train[..10].iter().filter(|&&i| labels[i] == 1).count();
            let predicted = if ones > 5 { 1 } else { 0 };
            let test = folds.members(f);
            let expected =
                test.iter().filter(|&&i| labels[i] == predicted).count() as f64 / test.len() as f64;
            assert_eq!(out.aligned.per_fold[f], expected);
            assert_eq!(out.baseline.per_fold[f], expected);
        }
    }

    #[test]
    fn supervised_identical_classes_are_perfect() {
        let set = identical_two_class();
        let (curves, _, labels) = set.clone().into_parts();
        let labels = labels.unwrap();
        let train_idx: Vec<usize> = (0..20).filter(|i| i % 2 == 0).collect();
        let test_idx: Vec<usize> = (0..20).filter(|i| i % 2 == 1).collect();
        let sub = |idx: &[usize]| {
            CurveSet::labeled(
                idx.iter().map(|&i| curves[i].clone()).collect(),
                idx.iter().map(|&i| labels[i]).collect(),
            )
            .unwrap()
        };
        let config = EvalConfig {
            k_neighbors: 1,
            congeal_config: CongealConfig {
                objective_kind: ObjectiveKind::VarianceSum,
                ..CongealConfig::default()
            },
            ..EvalConfig::default()
        };
        let out = eval_supervised(&sub(&train_idx), &sub(&test_idx), &config).unwrap();
        assert_eq!(out.aligned.accuracy, 1.0);
        assert_eq!(out.aligned.confusion, vec![vec![6, 0], vec![0, 4]]);
        assert_eq!(out.baseline.accuracy, 1.0);
    }

    #[test]
    fn confusion_rows_match_class_counts() {
        let set = identical_two_class();
        let config = EvalConfig {
            mode: EvalMode::NoAlignment,
            k_neighbors: 3,
            folds: 4,
            ..EvalConfig::default()
        };
        let out = evaluate_cv(&set, &config).unwrap();
        let rows: Vec<usize> = out
            .baseline
            .confusion
            .iter()
            .map(|r| r.iter().sum())
            .collect();
        assert_eq!(rows, vec![12, 8]);
        assert_eq!(out.aligned, out.baseline);
        assert!((0.0..=1.0).contains(&out.baseline.accuracy));
    }
}
