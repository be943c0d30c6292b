//! Synthetic labeled I/Q data: frames, segments, datasets, and AWGN.
//!
//! A *segment* is one continuous modulated emission; it is sliced into
//! fixed-length frames that share a segment id and carry consecutive slice
//! indices. Datasets are pure functions of their generation config (seed
//! included): each segment synthesizes on its own child RNG, so parallel and
//! serial generation produce identical bytes.

pub mod modem;

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::labels::{label_names, ModulationLabel};
use crate::seed::{derive_seed, rng_from};

pub use modem::{constellation, modulate, rrc_taps, SynthConfig};

/// Which role a frame plays in the experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SplitTag {
    Train = 0,
    Cal = 1,
    Test = 2,
}

impl SplitTag {
    pub const ALL: [SplitTag; 3] = [SplitTag::Train, SplitTag::Cal, SplitTag::Test];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Result<SplitTag> {
        match code {
            0 => Ok(SplitTag::Train),
            1 => Ok(SplitTag::Cal),
            2 => Ok(SplitTag::Test),
            other => Err(Error::Format(format!("invalid split tag {other}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SplitTag::Train => "train",
            SplitTag::Cal => "cal",
            SplitTag::Test => "test",
        }
    }

    pub fn from_name(name: &str) -> Result<SplitTag> {
        match name.to_ascii_lowercase().as_str() {
            "train" => Ok(SplitTag::Train),
            "cal" => Ok(SplitTag::Cal),
            "test" => Ok(SplitTag::Test),
            other => Err(Error::Config(format!("unknown split {other:?}"))),
        }
    }
}

/// One 2×L slice of I/Q samples with its metadata.
///
/// `samples` is flat: the first `frame_len` values are the in-phase rail,
/// the next `frame_len` the quadrature rail.
#[derive(Debug, Clone, PartialEq)]
pub struct IqFrame {
    pub samples: Vec<f64>,
    pub frame_len: usize,
    pub snr_db: f64,
    pub label: Option<ModulationLabel>,
    pub segment_id: u32,
    pub slice_index: u16,
    pub split: SplitTag,
}

impl IqFrame {
    pub fn in_phase(&self) -> &[f64] {
        &self.samples[..self.frame_len]
    }

    pub fn quadrature(&self) -> &[f64] {
        &self.samples[self.frame_len..]
    }

    pub fn validate(&self) -> Result<()> {
        if self.frame_len < 8 {
            return Err(Error::Config(format!("frame_len must be >= 8, got {}", self.frame_len)));
        }
        if self.samples.len() != 2 * self.frame_len {
            return Err(Error::Shape(format!(
                "frame has {} samples, expected {}",
                self.samples.len(),
                2 * self.frame_len
            )));
        }
        if !self.samples.iter().all(|v| v.is_finite()) {
            return Err(Error::Numeric("frame contains non-finite samples".into()));
        }
        Ok(())
    }
}

/// Frames of one continuous emission, ordered by slice index.
#[derive(Debug, Clone)]
pub struct SignalSegment {
    pub segment_id: u32,
    pub frames: Vec<IqFrame>,
    pub label: Option<ModulationLabel>,
}

/// A labeled frame collection with split tags and the seed that generated it.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub frames: Vec<IqFrame>,
    pub label_names: Vec<String>,
    pub frame_len: usize,
    pub seed: u64,
}

impl Dataset {
    /// Frames carrying `tag`, in dataset order.
    pub fn split_frames(&self, tag: SplitTag) -> Vec<&IqFrame> {
        self.frames.iter().filter(|f| f.split == tag).collect()
    }

    /// A new dataset containing only the frames tagged `tag`.
    pub fn filter_split(&self, tag: SplitTag) -> Dataset {
        Dataset {
            frames: self.frames.iter().filter(|f| f.split == tag).cloned().collect(),
            label_names: self.label_names.clone(),
            frame_len: self.frame_len,
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for frame in &self.frames {
            frame.validate()?;
            if frame.frame_len != self.frame_len {
                return Err(Error::Shape("mixed frame lengths in dataset".into()));
            }
            if let Some(label) = frame.label {
                if label.code() >= self.label_names.len() {
                    return Err(Error::Integrity(format!(
                        "frame label code {} outside label table",
                        label.code()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Mean-square amplitude of a flat 2×L stream: sum of I²+Q² over time,
/// divided by the number of time samples.
pub fn measure_power(stream: &[f64]) -> Result<f64> {
    if stream.is_empty() {
        return Err(Error::Domain("cannot measure power of an empty stream".into()));
    }
    let time_len = stream.len() / 2;
    Ok(stream.iter().map(|v| v * v).sum::<f64>() / time_len as f64)
}

/// Add white Gaussian noise so the noise power equals
/// `P_sig / 10^(snr_db/10)`, split equally between the I and Q rails.
pub fn apply_awgn(stream: &[f64], snr_db: f64, rng: &mut rand_chacha::ChaCha12Rng) -> Result<Vec<f64>> {
    let p_sig = measure_power(stream)?;
    if p_sig <= 0.0 {
        return Err(Error::Domain("cannot add noise to a zero-power stream".into()));
    }
    let noise_power = p_sig / 10f64.powf(snr_db / 10.0);
    let sigma = (noise_power / 2.0).sqrt();
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::Numeric(e.to_string()))?;

    let time_len = stream.len() / 2;
    let mut out = stream.to_vec();
    for t in 0..time_len {
        out[t] += normal.sample(rng);
        out[time_len + t] += normal.sample(rng);
    }
    Ok(out)
}

/// Generation recipe for a synthetic dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig {
    pub labels: Vec<ModulationLabel>,
    /// Frames generated per (label, SNR) pair.
    pub frames_per_label: usize,
    pub frame_len: usize,
    pub snr_levels_db: Vec<f64>,
    pub frames_per_segment: usize,
    /// Train / calibration / test fractions; must sum to 1.
    pub split_fractions: [f64; 3],
    pub synth: SynthConfig,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            labels: ModulationLabel::ALL.to_vec(),
            frames_per_label: 960,
            frame_len: 128,
            snr_levels_db: vec![16.0],
            frames_per_segment: 16,
            split_fractions: [0.4, 0.3, 0.3],
            synth: SynthConfig::default(),
            seed: 1,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        if self.labels.is_empty() {
            return Err(Error::Config("labels must be non-empty".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for l in &self.labels {
            if !seen.insert(*l) {
                return Err(Error::Config(format!("duplicate label {}", l.name())));
            }
        }
        if self.frames_per_label == 0 {
            return Err(Error::Config("frames_per_label must be >= 1".into()));
        }
        if self.frame_len < 8 {
            return Err(Error::Config(format!("frame_len must be >= 8, got {}", self.frame_len)));
        }
        if self.snr_levels_db.is_empty() {
            return Err(Error::Config("snr_levels_db must be non-empty".into()));
        }
        if self.frames_per_segment == 0 {
            return Err(Error::Config("frames_per_segment must be >= 1".into()));
        }
        let sum: f64 = self.split_fractions.iter().sum();
        if self.split_fractions.iter().any(|f| *f < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "split_fractions must be non-negative and sum to 1, got {:?}",
                self.split_fractions
            )));
        }
        Ok(())
    }
}

/// Exact per-split counts for `n` items under the given fractions
/// (largest-remainder rounding, ties to the earlier split).
pub fn split_counts(n: usize, fractions: [f64; 3]) -> [usize; 3] {
    let targets: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut counts: Vec<usize> = targets.iter().map(|t| t.floor() as usize).collect();
    let mut remaining = n - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let fa = targets[a] - targets[a].floor();
        let fb = targets[b] - targets[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &i in &order {
        if remaining == 0 {
            break;
        }
        counts[i] += 1;
        remaining -= 1;
    }
    [counts[0], counts[1], counts[2]]
}

/// Synthesize a full dataset from `config`.
///
/// Frames of one segment come from one continuous stream (with a shared
/// random carrier phase), noise is applied per segment, and split tags are
/// assigned per (label, SNR) group with exact stratified counts.
pub fn make_dataset(config: &GenConfig) -> Result<Dataset> {
    config.validate()?;
    let fps = config.frames_per_segment;
    let n_segments_per_group = config.frames_per_label.div_ceil(fps);

    // Fixed segment numbering: label-major, then SNR, then segment.
    struct SegmentPlan {
        segment_id: u32,
        label: ModulationLabel,
        snr_db: f64,
        n_frames: usize,
    }
    let mut plans = Vec::new();
    let mut next_id: u32 = 0;
    for &label in &config.labels {
        for &snr in &config.snr_levels_db {
            let mut left = config.frames_per_label;
            for _ in 0..n_segments_per_group {
                let n_frames = left.min(fps);
                plans.push(SegmentPlan { segment_id: next_id, label, snr_db: snr, n_frames });
                next_id += 1;
                left -= n_frames;
            }
        }
    }

    let frame_len = config.frame_len;
    let sps = config.synth.sps;
    let mut segments: Vec<Vec<IqFrame>> = plans
        .par_iter()
        .map(|plan| -> Result<Vec<IqFrame>> {
            let mut rng = rng_from(derive_seed(config.seed, "segment", plan.segment_id as u64, 0));
            let n_samples = plan.n_frames * frame_len;
            let n_symbols = n_samples.div_ceil(sps);
            let mut stream = modulate(plan.label, n_symbols, &config.synth, &mut rng)?;
            let stream_len = stream.len() / 2;

            // Shared carrier phase for the whole segment.
            let phi = rng.gen_range(0.0..2.0 * PI);
            let (c, s) = (phi.cos(), phi.sin());
            for t in 0..stream_len {
                let (i, q) = (stream[t], stream[stream_len + t]);
                stream[t] = i * c - q * s;
                stream[stream_len + t] = i * s + q * c;
            }

            let noisy = apply_awgn(&stream, plan.snr_db, &mut rng)?;
            let mut frames = Vec::with_capacity(plan.n_frames);
            for slice in 0..plan.n_frames {
                let start = slice * frame_len;
                let mut samples = Vec::with_capacity(2 * frame_len);
                samples.extend_from_slice(&noisy[start..start + frame_len]);
                samples.extend_from_slice(&noisy[stream_len + start..stream_len + start + frame_len]);
                frames.push(IqFrame {
                    samples,
                    frame_len,
                    snr_db: plan.snr_db,
                    label: Some(plan.label),
                    segment_id: plan.segment_id,
                    slice_index: slice as u16,
                    split: SplitTag::Train, // assigned below
                });
            }
            Ok(frames)
        })
        .collect::<Result<Vec<_>>>()?;

    // Stratified split tags: within each (label, SNR) group the frames are
    // ordered by (segment, slice); the first n_train go to train, then cal,
    // then test. Counts are exact per group.
    let group_size = config.frames_per_label;
    let counts = split_counts(group_size, config.split_fractions);
    let mut frames = Vec::with_capacity(plans.len() * fps);
    let mut in_group = 0usize;
    for segment in &mut segments {
        for frame in segment.drain(..) {
            let mut f = frame;
            f.split = if in_group < counts[0] {
                SplitTag::Train
            } else if in_group < counts[0] + counts[1] {
                SplitTag::Cal
            } else {
                SplitTag::Test
            };
            in_group += 1;
            if in_group == group_size {
                in_group = 0;
            }
            frames.push(f);
        }
    }

    let dataset = Dataset { frames, label_names: label_names(), frame_len, seed: config.seed };
    dataset.validate()?;
    Ok(dataset)
}

/// Group frames by segment id, ordered by slice index.
///
/// Input order does not matter. Duplicate (segment, slice) pairs and mixed
/// labels within one segment are integrity errors.
pub fn slice_segments(dataset: &Dataset) -> Result<Vec<SignalSegment>> {
    let mut by_segment: BTreeMap<u32, Vec<&IqFrame>> = BTreeMap::new();
    for frame in &dataset.frames {
        by_segment.entry(frame.segment_id).or_default().push(frame);
    }
    let mut segments = Vec::with_capacity(by_segment.len());
    for (segment_id, mut frames) in by_segment {
        frames.sort_by_key(|f| f.slice_index);
        for pair in frames.windows(2) {
            if pair[0].slice_index == pair[1].slice_index {
                return Err(Error::Integrity(format!(
                    "duplicate slice_index {} in segment {}",
                    pair[0].slice_index, segment_id
                )));
            }
        }
        let label = frames[0].label;
        if frames.iter().any(|f| f.label != label) {
            return Err(Error::Integrity(format!("segment {segment_id} mixes labels")));
        }
        segments.push(SignalSegment {
            segment_id,
            frames: frames.into_iter().cloned().collect(),
            label,
        });
    }
    Ok(segments)
}
