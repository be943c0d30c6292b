//! Split and K-fold conformal set prediction over the classifier.
//!
//! The nonconformity score of a (frame, label) pair is the log loss of the
//! model on that pair. Split CP compares a test score against an
//! order-statistic threshold of held-out calibration scores; the K-fold
//! predictor instead pools, over all folds and all held-out calibration
//! samples, the count of stored scores that are at least the test score,
//! and includes a label when that count reaches floor(alpha*(N+1)).
//!
//! Calibration score lists are stored sorted so counting is a binary
//! search; the counting semantics are identical to a naive scan (ties count
//! as conforming).

use rayon::prelude::*;

use crate::classifier::{forward, loss, train_on_frames, ClassProbabilities, NetworkParams, TrainConfig, PROB_CLAMP};
use crate::error::{Error, Result};
use crate::labels::{ModulationLabel, NUM_LABELS};
use crate::seed::{config_digest, derive_seed};
use crate::signal::{Dataset, IqFrame, SplitTag};

/// Nonconformity score: the clamped log loss of the model on (x, y).
pub fn ncs(probs: &ClassProbabilities, label: ModulationLabel) -> f64 {
    loss(probs, label)
}

/// The ceil((1-alpha)(N+1))-th smallest element of `scores ∪ {+inf}`
/// (1-indexed, duplicates counted). An empty list returns +inf.
pub fn quantile_alpha(scores: &[f64], alpha: f64) -> f64 {
    let n = scores.len();
    let k = ((1.0 - alpha) * (n as f64 + 1.0)).ceil() as usize;
    if k == 0 {
        // alpha >= 1 degenerates to the smallest element
        return scores.iter().cloned().fold(f64::INFINITY, f64::min);
    }
    if k > n {
        return f64::INFINITY;
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("NCS values are finite"));
    sorted[k - 1]
}

/// Inclusion threshold floor(alpha*(N+1)) shared by the K-fold rank test.
pub fn inclusion_threshold(alpha: f64, n: usize) -> usize {
    (alpha * (n as f64 + 1.0)).floor() as usize
}

/// Number of entries in the ascending-sorted `scores` that are >= `s`.
/// Equality counts (a tied score conforms).
pub fn count_at_or_above(sorted_scores: &[f64], s: f64) -> usize {
    sorted_scores.len() - sorted_scores.partition_point(|v| *v < s)
}

/// Set-valued prediction with the pooled pass counts that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    /// Included labels in code order.
    pub labels: Vec<ModulationLabel>,
    /// Pass count N(y') per label code.
    pub pass_counts: Vec<usize>,
    /// Inclusion threshold the counts were compared against.
    pub threshold: usize,
}

impl PredictionSet {
    /// Build from pass counts: label included iff count >= threshold.
    pub fn from_counts(pass_counts: Vec<usize>, threshold: usize) -> PredictionSet {
        let labels = ModulationLabel::ALL
            .iter()
            .copied()
            .filter(|l| pass_counts[l.code()] >= threshold)
            .collect();
        PredictionSet { labels, pass_counts, threshold }
    }

    pub fn contains(&self, label: ModulationLabel) -> bool {
        self.pass_counts[label.code()] >= self.threshold
    }

    pub fn size(&self) -> usize {
        self.labels.len()
    }
}

/// A trained model plus the sorted calibration scores for split CP.
#[derive(Debug, Clone)]
pub struct SplitCalibration {
    pub params: NetworkParams,
    /// Ascending NCS values, one per calibration sample.
    pub scores: Vec<f64>,
    pub alpha: f64,
}

impl SplitCalibration {
    pub fn new(params: NetworkParams, mut scores: Vec<f64>, alpha: f64) -> Result<SplitCalibration> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        if scores.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::Domain("calibration NCS values must be finite and >= 0".into()));
        }
        scores.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        Ok(SplitCalibration { params, scores, alpha })
    }

    /// Train on the train split and score the cal split of `dataset`.
    pub fn from_dataset(dataset: &Dataset, train_cfg: &TrainConfig, alpha: f64) -> Result<SplitCalibration> {
        let params = crate::classifier::train(dataset, train_cfg)?;
        let cal = dataset.split_frames(SplitTag::Cal);
        if cal.is_empty() {
            return Err(Error::Config("calibration split is empty".into()));
        }
        let scores = cal
            .par_iter()
            .map(|f| -> Result<f64> {
                let label = f.label.ok_or_else(|| Error::Config("unlabeled calibration frame".into()))?;
                Ok(ncs(&forward(&params, f)?, label))
            })
            .collect::<Result<Vec<_>>>()?;
        SplitCalibration::new(params, scores, alpha)
    }
}

/// Split-CP prediction set: include y' iff NCS((x, y')) <= Q_alpha(scores).
pub fn split_cp_set(cal: &SplitCalibration, frame: &IqFrame) -> Result<PredictionSet> {
    let probs = forward(&cal.params, frame)?;
    let test_scores: Vec<f64> = ModulationLabel::ALL.iter().map(|&y| ncs(&probs, y)).collect();
    Ok(split_set_from_scores(&test_scores, &cal.scores, cal.alpha))
}

/// Score-level split-CP kernel (the `forward`-free core, also used by the
/// brute-force oracle tests). `cal_sorted` must be ascending.
pub fn split_set_from_scores(test_scores: &[f64], cal_sorted: &[f64], alpha: f64) -> PredictionSet {
    let n = cal_sorted.len();
    let q = quantile_alpha(cal_sorted, alpha);
    // s <= q is equivalent to the rank condition #{cal >= s} >= N+1-k with
    // k = ceil((1-alpha)(N+1)); expose the counts so the invariant
    // "included iff count >= threshold" holds for split sets too.
    let k = ((1.0 - alpha) * (n as f64 + 1.0)).ceil() as usize;
    let threshold = (n + 1).saturating_sub(k);
    let pass_counts: Vec<usize> = test_scores.iter().map(|&s| count_at_or_above(cal_sorted, s)).collect();
    let labels = ModulationLabel::ALL
        .iter()
        .copied()
        .filter(|l| test_scores[l.code()] <= q)
        .collect();
    PredictionSet { labels, pass_counts, threshold }
}

/// One cross-validation fold: the model trained without S_k and the sorted
/// NCS values of S_k under that model.
#[derive(Debug, Clone)]
pub struct CalibrationFold {
    pub index: usize,
    pub params: NetworkParams,
    /// Ascending held-out NCS values.
    pub scores: Vec<f64>,
}

/// Provenance recorded into SHIELD artifacts.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Provenance {
    pub master_seed: u64,
    pub config_digest: String,
}

/// K fold predictors with their calibration tables: the deployable shield.
#[derive(Debug, Clone)]
pub struct ShieldModel {
    pub folds: Vec<CalibrationFold>,
    pub alpha: f64,
    pub label_names: Vec<String>,
    /// Pooled calibration count N (sum of fold held-out counts).
    pub total_calibration: usize,
    pub provenance: Provenance,
}

impl ShieldModel {
    pub fn validate(&self) -> Result<()> {
        if self.folds.len() < 2 {
            return Err(Error::Config(format!("K must be >= 2, got {}", self.folds.len())));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        let n: usize = self.folds.iter().map(|f| f.scores.len()).sum();
        if n != self.total_calibration {
            return Err(Error::Integrity(format!(
                "pooled count {} does not match fold scores {n}",
                self.total_calibration
            )));
        }
        Ok(())
    }

    /// floor(alpha*(N+1)) for this shield.
    pub fn threshold(&self) -> usize {
        inclusion_threshold(self.alpha, self.total_calibration)
    }
}

/// Deal the calibration pool's segments to K folds, stratified per label.
///
/// Whole segments are assigned (a fold must never train on frames from a
/// segment it holds out, since frames of one segment share a carrier phase
/// and stream). A single rotating counter keeps fold sizes near-equal while
/// spreading every label over all folds. Returns per-fold frame indices
/// into `pool`.
pub fn assign_folds(pool: &[&IqFrame], k: usize) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::Config(format!("K must be >= 2, got {k}")));
    }
    if pool.len() < k {
        return Err(Error::Config(format!(
            "calibration pool of {} frames cannot fill {k} folds",
            pool.len()
        )));
    }
    // Group pool indices by (label, segment), keeping first-seen order.
    let mut order: Vec<(Option<ModulationLabel>, u32)> = Vec::new();
    let mut groups: std::collections::HashMap<(Option<ModulationLabel>, u32), Vec<usize>> =
        std::collections::HashMap::new();
    for (i, frame) in pool.iter().enumerate() {
        let key = (frame.label, frame.segment_id);
        let entry = groups.entry(key).or_default();
        if entry.is_empty() {
            order.push(key);
        }
        entry.push(i);
    }
    // Label-major pass with a shared rotating fold counter.
    order.sort_by_key(|(label, seg)| (label.map(|l| l.code()), *seg));
    let mut folds = vec![Vec::new(); k];
    for (counter, key) in order.iter().enumerate() {
        folds[counter % k].extend(groups.remove(key).expect("grouped above"));
    }
    for fold in &mut folds {
        fold.sort_unstable();
    }
    if folds.iter().any(|f| f.is_empty()) {
        return Err(Error::Config(format!(
            "{k} folds cannot all be filled from {} segments",
            order.len()
        )));
    }
    Ok(folds)
}

/// Build a [`ShieldModel`]: partition the cal split into K stratified folds,
/// train one model per fold on the other K-1 folds, and store each fold's
/// held-out NCS values.
pub fn kfold_calibrate(
    dataset: &Dataset,
    k: usize,
    train_cfg: &TrainConfig,
    alpha: f64,
) -> Result<ShieldModel> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    train_cfg.validate()?;
    let pool = dataset.split_frames(SplitTag::Cal);
    if pool.iter().any(|f| f.label.is_none()) {
        return Err(Error::Config("calibration pool contains unlabeled frames".into()));
    }
    let fold_indices = assign_folds(&pool, k)?;

    // Every fold's training set must contain every label present in the pool.
    let pool_labels: std::collections::BTreeSet<ModulationLabel> =
        pool.iter().filter_map(|f| f.label).collect();
    for (fold_k, held_out) in fold_indices.iter().enumerate() {
        let held: std::collections::HashSet<usize> = held_out.iter().copied().collect();
        let train_labels: std::collections::BTreeSet<ModulationLabel> = pool
            .iter()
            .enumerate()
            .filter(|(i, _)| !held.contains(i))
            .filter_map(|(_, f)| f.label)
            .collect();
        if train_labels != pool_labels {
            let missing: Vec<&str> = pool_labels
                .difference(&train_labels)
                .map(|l| l.name())
                .collect();
            return Err(Error::Config(format!(
                "label(s) {} absent from fold {fold_k}'s training data; increase the pool or reduce K",
                missing.join(", ")
            )));
        }
    }

    let mut folds = Vec::with_capacity(k);
    for (fold_k, held_out) in fold_indices.iter().enumerate() {
        let held: std::collections::HashSet<usize> = held_out.iter().copied().collect();
        let train_frames: Vec<&IqFrame> = pool
            .iter()
            .enumerate()
            .filter(|(i, _)| !held.contains(i))
            .map(|(_, f)| *f)
            .collect();
        let mut fold_cfg = train_cfg.clone();
        fold_cfg.seed = derive_seed(train_cfg.seed, "fold", fold_k as u64, 0);
        let params = train_on_frames(&train_frames, &fold_cfg)?;

        let mut scores = held_out
            .par_iter()
            .map(|&i| -> Result<f64> {
                let frame = pool[i];
                let label = frame.label.expect("checked above");
                Ok(ncs(&forward(&params, frame)?, label))
            })
            .collect::<Result<Vec<_>>>()?;
        scores.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        folds.push(CalibrationFold { index: fold_k, params, scores });
    }

    let total_calibration = pool.len();
    let shield = ShieldModel {
        folds,
        alpha,
        label_names: dataset.label_names.clone(),
        total_calibration,
        provenance: Provenance {
            master_seed: train_cfg.seed,
            config_digest: config_digest(&format!(
                "k={k} alpha={alpha} epochs={} batch={} lr={} momentum={} seed={} pool={}",
                train_cfg.epochs,
                train_cfg.batch_size,
                train_cfg.learning_rate,
                train_cfg.momentum,
                train_cfg.seed,
                total_calibration,
            )),
        },
    };
    shield.validate()?;
    Ok(shield)
}

/// Pooled pass counts N(y') for one frame: over all folds k and all stored
/// calibration scores of fold k, count [NCS((x,y')|fold k) <= stored].
pub fn pass_counts(shield: &ShieldModel, frame: &IqFrame) -> Result<Vec<usize>> {
    let mut counts = vec![0usize; NUM_LABELS];
    for fold in &shield.folds {
        let probs = forward(&fold.params, frame)?;
        for label in ModulationLabel::ALL {
            let s = ncs(&probs, label);
            counts[label.code()] += count_at_or_above(&fold.scores, s);
        }
    }
    Ok(counts)
}

/// K-fold CP prediction set for one frame.
pub fn kfold_cp_set(shield: &ShieldModel, frame: &IqFrame) -> Result<PredictionSet> {
    let counts = pass_counts(shield, frame)?;
    Ok(PredictionSet::from_counts(counts, shield.threshold()))
}

/// Score-level K-fold kernel: `fold_test_scores[k][y]` is the test NCS of
/// label y under fold k, `fold_cal_sorted[k]` that fold's ascending stored
/// scores. Used directly by the brute-force oracle tests.
pub fn kfold_set_from_scores(
    fold_test_scores: &[Vec<f64>],
    fold_cal_sorted: &[Vec<f64>],
    alpha: f64,
) -> PredictionSet {
    let n: usize = fold_cal_sorted.iter().map(|f| f.len()).sum();
    let mut counts = vec![0usize; NUM_LABELS];
    for (test, cal) in fold_test_scores.iter().zip(fold_cal_sorted) {
        for (code, &s) in test.iter().enumerate() {
            counts[code] += count_at_or_above(cal, s);
        }
    }
    PredictionSet::from_counts(counts, inclusion_threshold(alpha, n))
}

/// Fraction of instances whose true label lies in its prediction set.
pub fn coverage(sets: &[PredictionSet], truths: &[ModulationLabel]) -> Result<f64> {
    if sets.is_empty() || sets.len() != truths.len() {
        return Err(Error::Domain(format!(
            "coverage needs equal non-empty lists, got {} sets and {} truths",
            sets.len(),
            truths.len()
        )));
    }
    let hits = sets.iter().zip(truths).filter(|(s, t)| s.contains(**t)).count();
    Ok(hits as f64 / sets.len() as f64)
}

/// Mean prediction-set cardinality.
pub fn inefficiency(sets: &[PredictionSet]) -> Result<f64> {
    if sets.is_empty() {
        return Err(Error::Domain("inefficiency of an empty list".into()));
    }
    Ok(sets.iter().map(|s| s.size()).sum::<usize>() as f64 / sets.len() as f64)
}

/// Clamped log score used when fabricating probability tables in tests.
pub fn ncs_from_probability(p: f64) -> f64 {
    -p.max(PROB_CLAMP).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ncs_matches_trivial_values() {
        let mut p = vec![0.0; NUM_LABELS];
        p[3] = 1.0;
        let probs = ClassProbabilities::new(p).unwrap();
        assert_eq!(ncs(&probs, ModulationLabel::Qam16), 0.0);
        assert!((ncs_from_probability(0.1) - 2.302585).abs() < 1e-6);
        assert!((ncs_from_probability(0.0) - 27.631021).abs() < 1e-6);
    }

    #[test]
    fn quantile_examples_from_direct_formula() {
        let scores: Vec<f64> = (1..=9).map(|v| v as f64).collect();
        assert_eq!(quantile_alpha(&scores, 0.1), 9.0); // ceil(0.9*10) = 9
        assert_eq!(quantile_alpha(&[5.0, 1.0, 3.0], 0.5), 3.0); // ceil(0.5*4) = 2
        assert_eq!(quantile_alpha(&[], 0.1), f64::INFINITY);
    }

    #[test]
    fn quantile_tiny_alpha_overflows_to_infinity() {
        let scores = [1.0, 2.0, 3.0];
        assert_eq!(quantile_alpha(&scores, 0.01), f64::INFINITY); // ceil(0.99*4) = 4 > 3
    }

    #[test]
    fn count_at_or_above_counts_ties() {
        let sorted = [1.0, 2.0, 2.0, 3.0];
        assert_eq!(count_at_or_above(&sorted, 2.0), 3);
        assert_eq!(count_at_or_above(&sorted, 2.5), 1);
        assert_eq!(count_at_or_above(&sorted, 0.0), 4);
        assert_eq!(count_at_or_above(&sorted, 3.5), 0);
    }

    #[test]
    fn split_threshold_examples() {
        // calibration scores {1..9}, alpha 0.1: quantile 9
        let cal: Vec<f64> = (1..=9).map(|v| v as f64).collect();
        let mut test = vec![100.0; NUM_LABELS];
        test[0] = 8.5; // included
        test[1] = 9.5; // excluded
        let set = split_set_from_scores(&test, &cal, 0.1);
        assert!(set.contains(ModulationLabel::Bpsk));
        assert!(!set.contains(ModulationLabel::Qpsk));
        assert_eq!(set.labels.len(), 1);

        // alpha tiny enough that the index exceeds N: everything included
        let set = split_set_from_scores(&test, &cal, 0.01);
        assert_eq!(set.size(), NUM_LABELS);
    }

    #[test]
    fn split_invariant_included_iff_count_reaches_threshold() {
        let cal: Vec<f64> = (1..=9).map(|v| v as f64).collect();
        let test: Vec<f64> = (0..NUM_LABELS).map(|i| i as f64 * 1.3).collect();
        let set = split_set_from_scores(&test, &cal, 0.2);
        for label in ModulationLabel::ALL {
            assert_eq!(
                set.labels.contains(&label),
                set.pass_counts[label.code()] >= set.threshold
            );
        }
    }

    #[test]
    fn kfold_direct_count_example() {
        // N = 4, K = 2, alpha = 0.5: threshold floor(0.5*5) = 2.
        let cal = vec![vec![1.0, 2.0], vec![1.5, 2.5]];
        // label 0 scores exactly at/below 2 of the 4 stored values
        let mut test0 = vec![f64::INFINITY; NUM_LABELS];
        test0[0] = 2.0; // fold 0: {2.0 >= 2.0} = 1
        let mut test1 = vec![f64::INFINITY; NUM_LABELS];
        test1[0] = 2.5; // fold 1: {2.5 >= 2.5} = 1
        let set = kfold_set_from_scores(&[test0, test1], &cal, 0.5);
        assert_eq!(set.threshold, 2);
        assert_eq!(set.pass_counts[0], 2);
        assert!(set.contains(ModulationLabel::Bpsk));
        assert_eq!(set.size(), 1);
    }

    #[test]
    fn kfold_vacuous_threshold_includes_everything() {
        // alpha -> 0+ gives floor(alpha*(N+1)) = 0: counts >= 0 always.
        let cal = vec![vec![0.1, 0.2], vec![0.3]];
        let test = vec![vec![f64::MAX; NUM_LABELS], vec![f64::MAX; NUM_LABELS]];
        let set = kfold_set_from_scores(&test, &cal, 0.001);
        assert_eq!(set.threshold, 0);
        assert_eq!(set.size(), NUM_LABELS);
    }

    #[test]
    fn coverage_and_inefficiency_trivial() {
        let all = PredictionSet::from_counts(vec![1; NUM_LABELS], 0);
        let none = PredictionSet::from_counts(vec![0; NUM_LABELS], 1);
        let truths = vec![ModulationLabel::Qpsk; 4];
        assert_eq!(coverage(&vec![all.clone(); 4], &truths).unwrap(), 1.0);
        assert_eq!(coverage(&vec![none.clone(); 4], &truths).unwrap(), 0.0);
        assert!(coverage(&[], &[]).is_err());

        let singleton = PredictionSet::from_counts(
            {
                let mut c = vec![0; NUM_LABELS];
                c[2] = 5;
                c
            },
            1,
        );
        assert_eq!(inefficiency(&vec![singleton; 3]).unwrap(), 1.0);
        assert_eq!(inefficiency(&[none, all]).unwrap(), 5.5);
        assert!(inefficiency(&[]).is_err());
    }

    #[test]
    fn alpha_bounds_are_enforced() {
        assert!(SplitCalibration::new(NetworkParams::zeros(), vec![1.0], 0.0).is_err());
        assert!(SplitCalibration::new(NetworkParams::zeros(), vec![1.0], 1.0).is_err());
        assert!(SplitCalibration::new(NetworkParams::zeros(), vec![-1.0], 0.1).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn quantile_is_monotone_in_alpha_and_a_member(
            scores in proptest::collection::vec(0.0f64..50.0, 0..40),
            a1 in 0.01f64..0.99,
            a2 in 0.01f64..0.99,
        ) {
            let (lo, hi) = if a1 <= a2 { (a1, a2) } else { (a2, a1) };
            let q_lo = quantile_alpha(&scores, lo);
            let q_hi = quantile_alpha(&scores, hi);
            // smaller alpha -> larger (or equal) quantile
            prop_assert!(q_lo >= q_hi);
            for alpha in [lo, hi] {
                let q = quantile_alpha(&scores, alpha);
                prop_assert!(q == f64::INFINITY || scores.contains(&q));
            }
        }

        #[test]
        fn cp_sets_shrink_as_alpha_grows(
            cal in proptest::collection::vec(0.0f64..10.0, 1..30),
            test in proptest::collection::vec(0.0f64..10.0, NUM_LABELS),
            a1 in 0.05f64..0.95,
            a2 in 0.05f64..0.95,
        ) {
            let (lo, hi) = if a1 <= a2 { (a1, a2) } else { (a2, a1) };
            let mut sorted = cal.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let set_lo = split_set_from_scores(&test, &sorted, lo);
            let set_hi = split_set_from_scores(&test, &sorted, hi);
            for label in &set_hi.labels {
                prop_assert!(set_lo.labels.contains(label), "split set not monotone");
            }
            // K-fold: same counts, threshold non-decreasing in alpha
            let folds = vec![sorted.clone()];
            let ktest = vec![test.clone()];
            let kset_lo = kfold_set_from_scores(&ktest, &folds, lo);
            let kset_hi = kfold_set_from_scores(&ktest, &folds, hi);
            for label in &kset_hi.labels {
                prop_assert!(kset_lo.labels.contains(label), "k-fold set not monotone");
            }
        }

        #[test]
        fn duplicating_a_calibration_score_never_decreases_counts(
            cal in proptest::collection::vec(0.0f64..10.0, 1..30),
            test in proptest::collection::vec(0.0f64..10.0, NUM_LABELS),
            pick in 0usize..30,
        ) {
            let mut sorted = cal.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let base = kfold_set_from_scores(&[test.clone()], &[sorted.clone()], 0.2);
            let mut dup = sorted.clone();
            dup.push(sorted[pick % sorted.len()]);
            dup.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let grown = kfold_set_from_scores(&[test.clone()], &[dup], 0.2);
            for code in 0..NUM_LABELS {
                prop_assert!(grown.pass_counts[code] >= base.pass_counts[code]);
            }
        }
    }
}
