//! Segment-level attack detection: the Inconsistency Soft-solution Set and
//! the verdict rule combining it with set-size inefficiency.
//!
//! For each label, the clipped K-fold CP pass margins of a segment's slices
//! are aggregated and minmax-normalized across labels. A clean segment puts
//! ISS mass on one label; under attack the margin of the true label
//! collapses and the normalized profile flattens or spreads. The verdict
//! combines three triggers: mean set size above a calibrated ceiling, too
//! many labels with high ISS, and a degenerate (all-equal) ISS profile.

use rayon::prelude::*;

use crate::attacks::{attack_dataset, AttackConfig, AttackMethod};
use crate::classifier::NetworkParams;
use crate::conformal::{coverage, pass_counts, PredictionSet, ShieldModel};
use crate::error::{Error, Result};
use crate::labels::{ModulationLabel, NUM_LABELS};
use crate::seed::derive_seed;
use crate::signal::{slice_segments, Dataset, IqFrame, SignalSegment};

/// Per-label ISS values for one segment, with the raw clipped-margin
/// aggregates they were normalized from.
#[derive(Debug, Clone, PartialEq)]
pub struct IssVector {
    /// Normalized values in [0, 1], one per label code.
    pub values: Vec<f64>,
    /// Clipped margin sums before normalization.
    pub raw: Vec<f64>,
    pub segment_id: u32,
}

impl IssVector {
    /// True when minmax normalization degenerated (all raw aggregates equal).
    pub fn degenerate(&self) -> bool {
        self.values.iter().all(|v| *v == 0.0)
    }

    pub fn argmax(&self) -> ModulationLabel {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = i;
            }
        }
        ModulationLabel::from_code(best).expect("valid code")
    }
}

/// Detection rule parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionThresholds {
    /// Mean prediction-set size above which a segment is flagged.
    pub theta_ineff: f64,
    /// ISS level counting as a "soft inclusion".
    pub tau_iss: f64,
    /// Maximum number of labels allowed at or above `tau_iss`.
    pub m_iss: usize,
}

impl DetectionThresholds {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta_ineff >= 0.0 && self.theta_ineff.is_finite()) {
            return Err(Error::Config(format!("theta_ineff must be >= 0, got {}", self.theta_ineff)));
        }
        if !(self.tau_iss > 0.0 && self.tau_iss < 1.0) {
            return Err(Error::Config(format!("tau_iss must lie in (0, 1), got {}", self.tau_iss)));
        }
        if self.m_iss < 1 {
            return Err(Error::Config("m_iss must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Clean,
    Adversarial,
}

impl Verdict {
    pub fn name(self) -> &'static str {
        match self {
            Verdict::Clean => "clean",
            Verdict::Adversarial => "adversarial",
        }
    }
}

/// Which detection rule fired.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TriggerReason {
    /// Mean set size exceeded theta_ineff.
    Inefficiency,
    /// More than m_iss labels at or above tau_iss.
    IssSpread,
    /// Degenerate ISS: no label consistently conforms.
    IssDegenerate,
}

impl TriggerReason {
    pub fn name(self) -> &'static str {
        match self {
            TriggerReason::Inefficiency => "inefficiency",
            TriggerReason::IssSpread => "iss_spread",
            TriggerReason::IssDegenerate => "iss_degenerate",
        }
    }
}

/// Per-segment detection outcome.
#[derive(Debug, Clone)]
pub struct DetectionReport {
    pub segment_id: u32,
    pub n_slices: usize,
    pub mean_set_size: f64,
    pub iss: IssVector,
    pub labels_above_tau: Vec<ModulationLabel>,
    pub verdict: Verdict,
    pub triggers: Vec<TriggerReason>,
    pub thresholds: DetectionThresholds,
}

/// Signed margin N(y') - floor(alpha*(N+1)) for one (frame, label) pair:
/// non-negative exactly when the label is in the frame's K-fold CP set.
pub fn slice_pass_margin(
    shield: &ShieldModel,
    frame: &IqFrame,
    label: ModulationLabel,
) -> Result<i64> {
    let counts = pass_counts(shield, frame)?;
    Ok(counts[label.code()] as i64 - shield.threshold() as i64)
}

fn margins_from_counts(counts: &[usize], threshold: usize) -> Vec<i64> {
    counts.iter().map(|&c| c as i64 - threshold as i64).collect()
}

/// Clip negatives to zero (the paper's g).
#[inline]
fn g_clip(margin: i64) -> f64 {
    if margin > 0 {
        margin as f64
    } else {
        0.0
    }
}

/// Minmax normalization to [0, 1]; an all-equal input maps to all zeros.
pub fn minmax_normalize(raw: &[f64]) -> Vec<f64> {
    let min = raw.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == min {
        return vec![0.0; raw.len()];
    }
    raw.iter().map(|&v| (v - min) / (max - min)).collect()
}

fn iss_from_raw(raw: Vec<f64>, segment_id: u32) -> IssVector {
    let values = minmax_normalize(&raw);
    IssVector { values, raw, segment_id }
}

/// Per-slice pass counts for a whole segment, in slice order.
fn segment_counts(shield: &ShieldModel, segment: &SignalSegment) -> Result<Vec<Vec<usize>>> {
    if segment.frames.is_empty() {
        return Err(Error::Domain(format!("segment {} is empty", segment.segment_id)));
    }
    segment
        .frames
        .par_iter()
        .map(|f| pass_counts(shield, f))
        .collect()
}

fn iss_from_counts(counts: &[Vec<usize>], threshold: usize, segment_id: u32) -> IssVector {
    let mut raw = vec![0.0; NUM_LABELS];
    for slice in counts {
        for (code, m) in margins_from_counts(slice, threshold).into_iter().enumerate() {
            raw[code] += g_clip(m);
        }
    }
    iss_from_raw(raw, segment_id)
}

/// Inconsistency Soft-solution Set of a segment: per label, the sum over
/// slices of the clipped CP pass margin, minmax-normalized across labels.
pub fn iss(shield: &ShieldModel, segment: &SignalSegment) -> Result<IssVector> {
    let counts = segment_counts(shield, segment)?;
    Ok(iss_from_counts(&counts, shield.threshold(), segment.segment_id))
}

/// Detection verdict for one segment plus the per-slice prediction sets the
/// decision was computed from.
pub fn detect_with_sets(
    shield: &ShieldModel,
    segment: &SignalSegment,
    thr: &DetectionThresholds,
) -> Result<(DetectionReport, Vec<PredictionSet>)> {
    thr.validate()?;
    let counts = segment_counts(shield, segment)?;
    let threshold = shield.threshold();
    let sets: Vec<PredictionSet> = counts
        .iter()
        .map(|c| PredictionSet::from_counts(c.clone(), threshold))
        .collect();
    let mean_set_size =
        sets.iter().map(|s| s.size()).sum::<usize>() as f64 / sets.len() as f64;
    let iss = iss_from_counts(&counts, threshold, segment.segment_id);

    let labels_above_tau: Vec<ModulationLabel> = ModulationLabel::ALL
        .iter()
        .copied()
        .filter(|l| iss.values[l.code()] >= thr.tau_iss)
        .collect();

    let mut triggers = Vec::new();
    if mean_set_size > thr.theta_ineff {
        triggers.push(TriggerReason::Inefficiency);
    }
    if labels_above_tau.len() > thr.m_iss {
        triggers.push(TriggerReason::IssSpread);
    }
    if iss.degenerate() {
        triggers.push(TriggerReason::IssDegenerate);
    }
    let verdict = if triggers.is_empty() { Verdict::Clean } else { Verdict::Adversarial };

    let report = DetectionReport {
        segment_id: segment.segment_id,
        n_slices: segment.frames.len(),
        mean_set_size,
        iss,
        labels_above_tau,
        verdict,
        triggers,
        thresholds: *thr,
    };
    Ok((report, sets))
}

/// Detection verdict for one segment.
pub fn detect(
    shield: &ShieldModel,
    segment: &SignalSegment,
    thr: &DetectionThresholds,
) -> Result<DetectionReport> {
    detect_with_sets(shield, segment, thr).map(|(report, _)| report)
}

/// Calibrate thresholds on clean segments: theta_ineff is the
/// (1 - target_fpr) empirical quantile of clean mean set sizes;
/// tau_iss = 0.5 and m_iss = 1 unless the combined false-positive rate on
/// the calibration segments exceeds target_fpr + 1/n, in which case the ISS
/// knobs are relaxed until it fits.
pub fn calibrate_thresholds(
    shield: &ShieldModel,
    clean_segments: &[SignalSegment],
    target_fpr: f64,
) -> Result<DetectionThresholds> {
    if clean_segments.len() < 50 {
        return Err(Error::Config(format!(
            "threshold calibration needs >= 50 clean segments, got {}",
            clean_segments.len()
        )));
    }
    if !(target_fpr > 0.0 && target_fpr < 1.0) {
        return Err(Error::Config(format!("target_fpr must lie in (0, 1), got {target_fpr}")));
    }

    let outcomes: Vec<(f64, IssVector)> = clean_segments
        .iter()
        .map(|seg| -> Result<(f64, IssVector)> {
            let counts = segment_counts(shield, seg)?;
            let threshold = shield.threshold();
            let mean = counts
                .iter()
                .map(|c| PredictionSet::from_counts(c.clone(), threshold).size())
                .sum::<usize>() as f64
                / counts.len() as f64;
            Ok((mean, iss_from_counts(&counts, threshold, seg.segment_id)))
        })
        .collect::<Result<Vec<_>>>()?;

    let n = outcomes.len();
    let mut sizes: Vec<f64> = outcomes.iter().map(|(m, _)| *m).collect();
    sizes.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let idx = ((1.0 - target_fpr) * n as f64).ceil().max(1.0) as usize;
    let theta_ineff = sizes[idx.min(n) - 1];

    let fpr_with = |thr: &DetectionThresholds| -> f64 {
        let fired = outcomes
            .iter()
            .filter(|(mean, iss)| {
                let above = iss.values.iter().filter(|v| **v >= thr.tau_iss).count();
                *mean > thr.theta_ineff || above > thr.m_iss || iss.degenerate()
            })
            .count();
        fired as f64 / n as f64
    };

    let budget = target_fpr + 1.0 / n as f64;
    let mut thr = DetectionThresholds { theta_ineff, tau_iss: 0.5, m_iss: 1 };
    while fpr_with(&thr) > budget && thr.m_iss < NUM_LABELS {
        thr.m_iss += 1;
    }
    while fpr_with(&thr) > budget && thr.tau_iss < 0.95 {
        thr.tau_iss += 0.05;
    }
    Ok(thr)
}

/// One row of the PSR sweep table. `method: None` is the clean baseline row
/// (its TPR is undefined; attack rows leave FPR undefined).
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub method: Option<AttackMethod>,
    pub psr_db: Option<f64>,
    pub mean_inefficiency: f64,
    pub coverage: f64,
    pub tpr: Option<f64>,
    pub fpr: Option<f64>,
    pub n_segments: usize,
}

fn evaluate_cell(
    shield: &ShieldModel,
    dataset: &Dataset,
    thresholds: &DetectionThresholds,
) -> Result<(f64, f64, f64, usize)> {
    let segments = slice_segments(dataset)?;
    if segments.is_empty() {
        return Err(Error::Domain("no segments to evaluate".into()));
    }
    let per_segment: Vec<(Verdict, Vec<PredictionSet>, Option<ModulationLabel>)> = segments
        .iter()
        .map(|seg| {
            detect_with_sets(shield, seg, thresholds)
                .map(|(report, sets)| (report.verdict, sets, seg.label))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut all_sets = Vec::new();
    let mut truths = Vec::new();
    let mut flagged = 0usize;
    for (verdict, sets, label) in &per_segment {
        if *verdict == Verdict::Adversarial {
            flagged += 1;
        }
        let label = label.ok_or_else(|| Error::Domain("sweep needs labeled segments".into()))?;
        for set in sets {
            all_sets.push(set.clone());
            truths.push(label);
        }
    }
    let ineff = all_sets.iter().map(|s| s.size()).sum::<usize>() as f64 / all_sets.len() as f64;
    let cov = coverage(&all_sets, &truths)?;
    Ok((ineff, cov, flagged as f64 / per_segment.len() as f64, per_segment.len()))
}

/// Sweep attack methods over a PSR grid: craft, detect, and tabulate one row
/// per (method, PSR) cell plus a clean baseline row.
pub fn evaluate_sweep(
    shield: &ShieldModel,
    params: &NetworkParams,
    dataset: &Dataset,
    methods: &[AttackMethod],
    psr_grid_db: &[f64],
    thresholds: &DetectionThresholds,
    master_seed: u64,
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::with_capacity(methods.len() * psr_grid_db.len() + 1);

    let (ineff, cov, detect_rate, n_segments) = evaluate_cell(shield, dataset, thresholds)?;
    rows.push(SweepRow {
        method: None,
        psr_db: None,
        mean_inefficiency: ineff,
        coverage: cov,
        tpr: None,
        fpr: Some(detect_rate),
        n_segments,
    });

    for &method in methods {
        for &psr in psr_grid_db {
            let psr_key = (psr * 1000.0).round() as i64 as u64;
            let mut cfg = AttackConfig::new(method, psr, 0);
            cfg.seed = derive_seed(master_seed, method.name(), psr_key, 0);
            let attacked = attack_dataset(params, dataset, &cfg)?;
            let (ineff, cov, detect_rate, n_segments) =
                evaluate_cell(shield, &attacked.dataset, thresholds)?;
            rows.push(SweepRow {
                method: Some(method),
                psr_db: Some(psr),
                mean_inefficiency: ineff,
                coverage: cov,
                tpr: Some(detect_rate),
                fpr: None,
                n_segments,
            });
        }
    }
    Ok(rows)
}
