//! The residual 1-D CNN classifier and its hand-derived gradients.
//!
//! Architecture (fixed):
//!   conv1d(2 -> 16, k=7, same) + ReLU
//!   residual block: r1 + conv1d(16 -> 16, k=5)(ReLU(conv1d(16 -> 16, k=5)(r1)))
//!   global average pool over time
//!   dense(16 -> 11) + softmax
//!
//! Global average pooling keeps the network agnostic to frame length.
//! All training and gradient math is double precision; a single-precision
//! forward path exists for bulk inference.

pub mod layers;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::labels::{ModulationLabel, NUM_LABELS};
use crate::seed::{derive_seed, rng_from};
use crate::signal::{Dataset, IqFrame, SplitTag};

use layers::{relu_inplace, softmax, Conv1d, Dense};

/// Input channels (I and Q rails).
pub const IN_CH: usize = 2;
/// Hidden channel width.
pub const HIDDEN: usize = 16;
/// First conv kernel size.
pub const K1: usize = 7;
/// Residual block kernel size.
pub const K2: usize = 5;
/// Output classes.
pub const N_CLASSES: usize = NUM_LABELS;

/// Probabilities are clamped here before any logarithm.
pub const PROB_CLAMP: f64 = 1e-12;

/// Floor on the input RMS used by the ingestion gain stage.
pub const NORM_FLOOR: f64 = 1e-9;

/// All weights of the classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub conv1: Conv1d,
    pub conv2: Conv1d,
    pub conv3: Conv1d,
    pub dense: Dense,
}

impl NetworkParams {
    /// Zero-initialized network (useful for tests; softmax of zero logits is
    /// exactly uniform).
    pub fn zeros() -> NetworkParams {
        NetworkParams {
            conv1: Conv1d::zeros(HIDDEN, IN_CH, K1),
            conv2: Conv1d::zeros(HIDDEN, HIDDEN, K2),
            conv3: Conv1d::zeros(HIDDEN, HIDDEN, K2),
            dense: Dense::zeros(N_CLASSES, HIDDEN),
        }
    }

    /// Glorot-uniform weights from `seed`; zero biases.
    pub fn init(seed: u64) -> NetworkParams {
        let mut params = Self::zeros();
        let mut rng = rng_from(derive_seed(seed, "init", 0, 0));
        for conv in [&mut params.conv1, &mut params.conv2, &mut params.conv3] {
            let bound = (6.0 / ((conv.in_ch * conv.k + conv.out_ch * conv.k) as f64)).sqrt();
            for w in &mut conv.w {
                *w = rng.gen_range(-bound..bound);
            }
        }
        let bound = (6.0 / ((params.dense.in_d + params.dense.out_d) as f64)).sqrt();
        for w in &mut params.dense.w {
            *w = rng.gen_range(-bound..bound);
        }
        params
    }

    pub fn param_count(&self) -> usize {
        self.conv1.weight_count()
            + self.conv1.out_ch
            + self.conv2.weight_count()
            + self.conv2.out_ch
            + self.conv3.weight_count()
            + self.conv3.out_ch
            + self.dense.weight_count()
            + self.dense.out_d
    }

    /// Flatten all parameters in the fixed order
    /// conv1.w, conv1.b, conv2.w, conv2.b, conv3.w, conv3.b, dense.w, dense.b.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.param_count());
        for conv in [&self.conv1, &self.conv2, &self.conv3] {
            flat.extend_from_slice(&conv.w);
            flat.extend_from_slice(&conv.b);
        }
        flat.extend_from_slice(&self.dense.w);
        flat.extend_from_slice(&self.dense.b);
        flat
    }

    pub fn from_flat(flat: &[f64]) -> Result<NetworkParams> {
        let mut params = Self::zeros();
        if flat.len() != params.param_count() {
            return Err(Error::Shape(format!(
                "flat parameter vector has {} entries, expected {}",
                flat.len(),
                params.param_count()
            )));
        }
        let mut pos = 0;
        {
            let mut take = |n: usize| {
                let s = &flat[pos..pos + n];
                pos += n;
                s.to_vec()
            };
            for conv in [&mut params.conv1, &mut params.conv2, &mut params.conv3] {
                conv.w = take(conv.weight_count());
                conv.b = take(conv.out_ch);
            }
            params.dense.w = take(params.dense.weight_count());
            params.dense.b = take(params.dense.out_d);
        }
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        let flat = self.to_flat();
        if !flat.iter().all(|v| v.is_finite()) {
            return Err(Error::Numeric("network parameters contain non-finite values".into()));
        }
        Ok(())
    }
}

/// Normalized class probability vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassProbabilities {
    probs: Vec<f64>,
}

impl ClassProbabilities {
    pub fn new(probs: Vec<f64>) -> Result<ClassProbabilities> {
        if probs.len() != N_CLASSES {
            return Err(Error::Shape(format!("expected {N_CLASSES} probabilities, got {}", probs.len())));
        }
        let sum: f64 = probs.iter().sum();
        if !(sum.is_finite() && (sum - 1.0).abs() <= 1e-9) {
            return Err(Error::Numeric(format!("probabilities sum to {sum}, expected 1")));
        }
        Ok(ClassProbabilities { probs })
    }

    pub fn get(&self, label: ModulationLabel) -> f64 {
        self.probs[label.code()]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    /// Argmax class; ties break to the lowest class code.
    pub fn argmax(&self) -> ModulationLabel {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        ModulationLabel::from_code(best).expect("N_CLASSES codes are valid")
    }
}

/// Intermediate activations kept for backpropagation.
pub struct ForwardCache {
    pub l: usize,
    /// Input RMS used by the ingestion gain stage.
    pub rms: f64,
    /// Gain-normalized input (unit mean-square amplitude).
    pub xn: Vec<f64>,
    pub z1: Vec<f64>,
    pub r1: Vec<f64>,
    pub z2: Vec<f64>,
    pub r2: Vec<f64>,
    pub y: Vec<f64>,
    pub pooled: Vec<f64>,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
}

fn forward_cached(params: &NetworkParams, x: &[f64], l: usize) -> Result<ForwardCache> {
    if x.len() != IN_CH * l {
        return Err(Error::Shape(format!("input has {} samples, expected {}", x.len(), IN_CH * l)));
    }
    // Ingestion gain stage (receiver AGC): scale the frame to unit
    // mean-square amplitude so classification depends on waveform shape,
    // not received power.
    let power = x.iter().map(|v| v * v).sum::<f64>() / l as f64;
    let rms = power.sqrt().max(NORM_FLOOR);
    let xn: Vec<f64> = x.iter().map(|v| v / rms).collect();

    let mut z1 = vec![0.0; HIDDEN * l];
    params.conv1.forward(&xn, l, &mut z1);
    let mut r1 = vec![0.0; HIDDEN * l];
    relu_inplace(&z1, &mut r1);
    let mut z2 = vec![0.0; HIDDEN * l];
    params.conv2.forward(&r1, l, &mut z2);
    let mut r2 = vec![0.0; HIDDEN * l];
    relu_inplace(&z2, &mut r2);
    let mut y = vec![0.0; HIDDEN * l];
    params.conv3.forward(&r2, l, &mut y);
    // additive skip
    for (y, &r) in y.iter_mut().zip(&r1) {
        *y += r;
    }
    let mut pooled = vec![0.0; HIDDEN];
    for h in 0..HIDDEN {
        pooled[h] = y[h * l..(h + 1) * l].iter().sum::<f64>() / l as f64;
    }
    let mut logits = vec![0.0; N_CLASSES];
    params.dense.forward(&pooled, &mut logits);
    if !logits.iter().all(|v| v.is_finite()) {
        return Err(Error::Numeric("non-finite logits".into()));
    }
    let mut probs = vec![0.0; N_CLASSES];
    softmax(&logits, &mut probs);
    Ok(ForwardCache { l, rms, xn, z1, r1, z2, r2, y, pooled, logits, probs })
}

/// Run the classifier on one frame.
pub fn forward(params: &NetworkParams, frame: &IqFrame) -> Result<ClassProbabilities> {
    frame.validate()?;
    let cache = forward_cached(params, &frame.samples, frame.frame_len)?;
    ClassProbabilities::new(cache.probs)
}

/// Single-precision forward pass for bulk inference. Weights and arithmetic
/// are rounded to f32; gradients are never computed in this mode.
pub fn forward_single(params: &NetworkParams, frame: &IqFrame) -> Result<ClassProbabilities> {
    frame.validate()?;
    let l = frame.frame_len;
    let power = frame.samples.iter().map(|v| v * v).sum::<f64>() / l as f64;
    let rms = power.sqrt().max(NORM_FLOOR);
    let to32 = |v: &[f64]| v.iter().map(|&x| x as f32).collect::<Vec<f32>>();
    let x32: Vec<f32> = frame.samples.iter().map(|&x| (x / rms) as f32).collect();

    let conv32 = |conv: &Conv1d, x: &[f32], out: &mut [f32]| {
        let w = to32(&conv.w);
        let pad = (conv.k / 2) as isize;
        for oc in 0..conv.out_ch {
            let row = &mut out[oc * l..(oc + 1) * l];
            row.fill(conv.b[oc] as f32);
            for ic in 0..conv.in_ch {
                let taps = &w[(oc * conv.in_ch + ic) * conv.k..][..conv.k];
                let xr = &x[ic * l..(ic + 1) * l];
                for (j, &wj) in taps.iter().enumerate() {
                    let d = j as isize - pad;
                    let t0 = if d < 0 { (-d) as usize } else { 0 };
                    let t1 = if d > 0 { l - d as usize } else { l };
                    let src = &xr[(t0 as isize + d) as usize..(t1 as isize + d) as usize];
                    for (o, &s) in row[t0..t1].iter_mut().zip(src) {
                        *o += wj * s;
                    }
                }
            }
        }
    };

    let mut z1 = vec![0f32; HIDDEN * l];
    conv32(&params.conv1, &x32, &mut z1);
    let r1: Vec<f32> = z1.iter().map(|&v| v.max(0.0)).collect();
    let mut z2 = vec![0f32; HIDDEN * l];
    conv32(&params.conv2, &r1, &mut z2);
    let r2: Vec<f32> = z2.iter().map(|&v| v.max(0.0)).collect();
    let mut y = vec![0f32; HIDDEN * l];
    conv32(&params.conv3, &r2, &mut y);
    for (y, &r) in y.iter_mut().zip(&r1) {
        *y += r;
    }
    let pooled: Vec<f64> = (0..HIDDEN)
        .map(|h| (y[h * l..(h + 1) * l].iter().sum::<f32>() / l as f32) as f64)
        .collect();
    let mut logits = vec![0.0; N_CLASSES];
    params.dense.forward(&pooled, &mut logits);
    if !logits.iter().all(|v| v.is_finite()) {
        return Err(Error::Numeric("non-finite logits".into()));
    }
    let mut probs = vec![0.0; N_CLASSES];
    softmax(&logits, &mut probs);
    ClassProbabilities::new(probs)
}

/// Cross-entropy on the clamped probability of the true label.
pub fn loss(probs: &ClassProbabilities, label: ModulationLabel) -> f64 {
    -probs.get(label).max(PROB_CLAMP).ln()
}

/// Backward pass. Fills `param_grads` (flat layout of `to_flat`) when given,
/// and returns the gradient with respect to the raw (pre-gain) input when
/// `want_input`.
fn backward(
    params: &NetworkParams,
    cache: &ForwardCache,
    label: ModulationLabel,
    mut param_grads: Option<&mut [f64]>,
    want_input: bool,
) -> Option<Vec<f64>> {
    let l = cache.l;

    // d loss / d logits. When the true-class probability sits at the clamp,
    // the loss is locally constant and the exact gradient is zero.
    let mut dlogits = vec![0.0; N_CLASSES];
    if cache.probs[label.code()] > PROB_CLAMP {
        dlogits.copy_from_slice(&cache.probs);
        dlogits[label.code()] -= 1.0;
    } else if want_input {
        return Some(vec![0.0; IN_CH * l]);
    } else {
        return None;
    }

    let layout = FlatLayout::new(params);
    let mut dpooled = vec![0.0; HIDDEN];
    params.dense.backward_input(&dlogits, &mut dpooled);
    if let Some(grads) = param_grads.as_deref_mut() {
        let (gw, gb) = layout.dense(grads);
        params.dense.accumulate_grads(&cache.pooled, &dlogits, gw, gb);
    }

    // GAP spreads each channel gradient uniformly over time.
    let mut dy = vec![0.0; HIDDEN * l];
    for h in 0..HIDDEN {
        let g = dpooled[h] / l as f64;
        dy[h * l..(h + 1) * l].fill(g);
    }

    // y = r1 + conv3(r2): dz3 = dy
    let mut dr2 = vec![0.0; HIDDEN * l];
    params.conv3.backward_input(&dy, l, &mut dr2);
    if let Some(grads) = param_grads.as_deref_mut() {
        let (gw, gb) = layout.conv3(grads);
        params.conv3.accumulate_grads(&cache.r2, &dy, l, gw, gb);
    }

    let mut dz2 = dr2;
    for (g, &z) in dz2.iter_mut().zip(&cache.z2) {
        if z <= 0.0 {
            *g = 0.0;
        }
    }

    let mut dr1 = vec![0.0; HIDDEN * l];
    params.conv2.backward_input(&dz2, l, &mut dr1);
    if let Some(grads) = param_grads.as_deref_mut() {
        let (gw, gb) = layout.conv2(grads);
        params.conv2.accumulate_grads(&cache.r1, &dz2, l, gw, gb);
    }
    // skip connection feeds r1 into y directly
    for (g, &d) in dr1.iter_mut().zip(&dy) {
        *g += d;
    }

    let mut dz1 = dr1;
    for (g, &z) in dz1.iter_mut().zip(&cache.z1) {
        if z <= 0.0 {
            *g = 0.0;
        }
    }

    if let Some(grads) = param_grads {
        let (gw, gb) = layout.conv1(grads);
        params.conv1.accumulate_grads(&cache.xn, &dz1, l, gw, gb);
    }
    if want_input {
        let mut dxn = vec![0.0; IN_CH * l];
        params.conv1.backward_input(&dz1, l, &mut dxn);
        // Pull back through the gain stage y = x / r with r = max(rms, floor):
        // dL/dx = (g - ((g.y)/L) * y) / r, and just g/r on the floored branch.
        let r = cache.rms;
        let mut dx = vec![0.0; IN_CH * l];
        if r <= NORM_FLOOR {
            for (o, &g) in dx.iter_mut().zip(&dxn) {
                *o = g / r;
            }
        } else {
            let g_dot_y: f64 = dxn.iter().zip(&cache.xn).map(|(g, y)| g * y).sum();
            let c = g_dot_y / l as f64;
            for ((o, &g), &y) in dx.iter_mut().zip(&dxn).zip(&cache.xn) {
                *o = (g - c * y) / r;
            }
        }
        Some(dx)
    } else {
        None
    }
}

/// Offsets of each layer inside the flat parameter vector.
struct FlatLayout {
    c1: (usize, usize), // (w offset, b offset)
    c2: (usize, usize),
    c3: (usize, usize),
    d: (usize, usize),
    end: usize,
}

impl FlatLayout {
    fn new(p: &NetworkParams) -> FlatLayout {
        let c1 = (0, p.conv1.weight_count());
        let c2w = c1.1 + p.conv1.out_ch;
        let c2 = (c2w, c2w + p.conv2.weight_count());
        let c3w = c2.1 + p.conv2.out_ch;
        let c3 = (c3w, c3w + p.conv3.weight_count());
        let dw = c3.1 + p.conv3.out_ch;
        let d = (dw, dw + p.dense.weight_count());
        FlatLayout { c1, c2, c3, d, end: d.1 + p.dense.out_d }
    }

    fn split<'a>(&self, grads: &'a mut [f64], at: (usize, usize), next: usize) -> (&'a mut [f64], &'a mut [f64]) {
        debug_assert!(self.end <= grads.len());
        let (_, rest) = grads.split_at_mut(at.0);
        let (w, rest) = rest.split_at_mut(at.1 - at.0);
        let (b, _) = rest.split_at_mut(next - at.1);
        (w, b)
    }

    fn conv1<'a>(&self, g: &'a mut [f64]) -> (&'a mut [f64], &'a mut [f64]) {
        self.split(g, self.c1, self.c2.0)
    }
    fn conv2<'a>(&self, g: &'a mut [f64]) -> (&'a mut [f64], &'a mut [f64]) {
        self.split(g, self.c2, self.c3.0)
    }
    fn conv3<'a>(&self, g: &'a mut [f64]) -> (&'a mut [f64], &'a mut [f64]) {
        self.split(g, self.c3, self.d.0)
    }
    fn dense<'a>(&self, g: &'a mut [f64]) -> (&'a mut [f64], &'a mut [f64]) {
        self.split(g, self.d, self.end)
    }
}

/// Exact gradient of `loss(forward(params, frame), label)` with respect to
/// every input sample, as a flat 2×L buffer.
pub fn input_gradient(
    params: &NetworkParams,
    frame: &IqFrame,
    label: ModulationLabel,
) -> Result<Vec<f64>> {
    frame.validate()?;
    let cache = forward_cached(params, &frame.samples, frame.frame_len)?;
    let dx = backward(params, &cache, label, None, true).expect("input gradient requested");
    if !dx.iter().all(|v| v.is_finite()) {
        return Err(Error::Numeric("non-finite input gradient".into()));
    }
    Ok(dx)
}

/// Loss and parameter gradient for one (frame, label) example.
fn example_gradient(
    params: &NetworkParams,
    samples: &[f64],
    l: usize,
    label: ModulationLabel,
) -> Result<(f64, Vec<f64>)> {
    let cache = forward_cached(params, samples, l)?;
    let loss_v = -cache.probs[label.code()].max(PROB_CLAMP).ln();
    let mut grads = vec![0.0; params.param_count()];
    backward(params, &cache, label, Some(&mut grads), false);
    Ok((loss_v, grads))
}

/// Numeric precision selector for bulk inference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Precision {
    #[default]
    Double,
    Single,
}

impl Precision {
    pub fn from_name(name: &str) -> Result<Precision> {
        match name.to_ascii_lowercase().as_str() {
            "double" | "f64" => Ok(Precision::Double),
            "single" | "f32" => Ok(Precision::Single),
            other => Err(Error::Config(format!("unknown precision {other:?}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Precision::Double => "double",
            Precision::Single => "single",
        }
    }
}

/// Training hyperparameters. Gradient computation is always double
/// precision; `precision` selects the inference path used when evaluating
/// the finished model in bulk. `weight_decay` adds the usual L2 pull toward
/// zero, which keeps logit magnitudes (and therefore softmax confidence on
/// inputs far from the training manifold) bounded.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub precision: Precision,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 40,
            batch_size: 32,
            learning_rate: 0.02,
            momentum: 0.9,
            weight_decay: 1e-4,
            seed: 1,
            precision: Precision::Double,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum must lie in [0, 1), got {}", self.momentum)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config(format!(
                "weight_decay must be >= 0, got {}",
                self.weight_decay
            )));
        }
        Ok(())
    }
}

/// One SGD-with-momentum update: v <- momentum*v - lr*g; w <- w + v.
///
/// With a zero learning rate this is the identity on the parameters
/// (starting from zero velocity), regardless of the gradient.
pub fn momentum_step(params: &mut [f64], velocity: &mut [f64], grads: &[f64], lr: f64, momentum: f64) {
    for ((w, v), &g) in params.iter_mut().zip(velocity.iter_mut()).zip(grads) {
        *v = momentum * *v - lr * g;
        *w += *v;
    }
}

/// Mean cross-entropy over (samples, label) pairs. Per-example losses are
/// computed in parallel and reduced in index order, so the result does not
/// depend on thread count.
fn mean_loss(params: &NetworkParams, examples: &[(&[f64], usize, ModulationLabel)]) -> Result<f64> {
    let losses: Vec<f64> = examples
        .par_iter()
        .map(|(samples, l, label)| -> Result<f64> {
            let cache = forward_cached(params, samples, *l)?;
            Ok(-cache.probs[label.code()].max(PROB_CLAMP).ln())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(losses.iter().sum::<f64>() / examples.len() as f64)
}

/// Train on the train-tagged frames of `dataset` with seeded mini-batch
/// SGD + momentum. Deterministic: the batch order is a pure function of the
/// seed, and per-example gradients are summed in batch order.
pub fn train(dataset: &Dataset, cfg: &TrainConfig) -> Result<NetworkParams> {
    train_on_frames(&dataset.split_frames(SplitTag::Train), cfg)
}

/// Same as [`train`] but over an explicit frame list (used for per-fold
/// training where the fold pool is not a split tag).
pub fn train_on_frames(frames: &[&IqFrame], cfg: &TrainConfig) -> Result<NetworkParams> {
    cfg.validate()?;
    if frames.is_empty() {
        return Err(Error::Config("training split is empty".into()));
    }
    let examples: Vec<(&[f64], usize, ModulationLabel)> = frames
        .iter()
        .map(|f| {
            let label = f
                .label
                .ok_or_else(|| Error::Config(format!("unlabeled frame in training data (segment {})", f.segment_id)))?;
            Ok((f.samples.as_slice(), f.frame_len, label))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut flat = NetworkParams::init(cfg.seed).to_flat();
    let mut velocity = vec![0.0; flat.len()];
    let initial_loss = mean_loss(&NetworkParams::from_flat(&flat)?, &examples)?;

    let n = examples.len();
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = rng_from(derive_seed(cfg.seed, "shuffle", epoch as u64, 0));
        // Fisher-Yates
        for i in (1..n).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }

        for batch in order.chunks(cfg.batch_size) {
            let params = NetworkParams::from_flat(&flat)?;
            let per_item: Vec<Vec<f64>> = batch
                .par_iter()
                .map(|&i| {
                    let (samples, l, label) = examples[i];
                    example_gradient(&params, samples, l, label).map(|(_, g)| g)
                })
                .collect::<Result<Vec<_>>>()?;
            let mut grads = vec![0.0; flat.len()];
            for item in &per_item {
                for (g, &v) in grads.iter_mut().zip(item) {
                    *g += v;
                }
            }
            let scale = 1.0 / batch.len() as f64;
            for (g, &w) in grads.iter_mut().zip(flat.iter()) {
                *g = *g * scale + cfg.weight_decay * w;
            }
            momentum_step(&mut flat, &mut velocity, &grads, cfg.learning_rate, cfg.momentum);
        }
    }

    let params = NetworkParams::from_flat(&flat)?;
    params.validate()?;
    let final_loss = mean_loss(&params, &examples)?;
    if final_loss >= initial_loss {
        return Err(Error::Numeric(format!(
            "training did not reduce the loss ({initial_loss:.6} -> {final_loss:.6})"
        )));
    }
    Ok(params)
}

/// Fraction of `tag` frames whose argmax class equals the true label
/// (ties break to the lowest class code).
pub fn accuracy(params: &NetworkParams, dataset: &Dataset, tag: SplitTag) -> Result<f64> {
    accuracy_with_precision(params, dataset, tag, Precision::Double)
}

pub fn accuracy_with_precision(
    params: &NetworkParams,
    dataset: &Dataset,
    tag: SplitTag,
    precision: Precision,
) -> Result<f64> {
    let frames = dataset.split_frames(tag);
    if frames.is_empty() {
        return Err(Error::Domain(format!("no frames tagged {}", tag.name())));
    }
    let hits: Vec<bool> = frames
        .par_iter()
        .map(|f| -> Result<bool> {
            let label = f
                .label
                .ok_or_else(|| Error::Domain("accuracy needs labeled frames".into()))?;
            let probs = match precision {
                Precision::Double => forward(params, f)?,
                Precision::Single => forward_single(params, f)?,
            };
            Ok(probs.argmax() == label)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(hits.iter().filter(|h| **h).count() as f64 / hits.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{make_dataset, GenConfig, SynthConfig};

    fn frame_from(samples: Vec<f64>, label: ModulationLabel) -> IqFrame {
        let l = samples.len() / 2;
        IqFrame {
            samples,
            frame_len: l,
            snr_db: 10.0,
            label: Some(label),
            segment_id: 0,
            slice_index: 0,
            split: SplitTag::Test,
        }
    }

    fn random_frame(seed: u64, l: usize) -> IqFrame {
        let mut rng = rng_from(seed);
        let samples: Vec<f64> = (0..2 * l).map(|_| rng.gen_range(-1.0..1.0)).collect();
        frame_from(samples, ModulationLabel::Bpsk)
    }

    #[test]
    fn zero_network_outputs_exact_uniform() {
        let params = NetworkParams::zeros();
        let frame = random_frame(4, 32);
        let probs = forward(&params, &frame).unwrap();
        for label in ModulationLabel::ALL {
            assert_eq!(probs.get(label), 1.0 / 11.0);
        }
    }

    #[test]
    fn loss_trivial_values() {
        let mut p = vec![0.0; N_CLASSES];
        p[0] = 1.0;
        let probs = ClassProbabilities::new(p).unwrap();
        assert_eq!(loss(&probs, ModulationLabel::Bpsk), 0.0);

        let uniform = ClassProbabilities::new(vec![1.0 / 11.0; N_CLASSES]).unwrap();
        assert!((loss(&uniform, ModulationLabel::Qpsk) - 11f64.ln()).abs() < 1e-12);
        assert!((loss(&uniform, ModulationLabel::Qpsk) - 2.397895).abs() < 1e-6);

        // zero probability hits the clamp
        let mut q = vec![0.0; N_CLASSES];
        q[1] = 1.0;
        let probs = ClassProbabilities::new(q).unwrap();
        let clamped = loss(&probs, ModulationLabel::Bpsk);
        assert!((clamped - (-(1e-12f64).ln())).abs() < 1e-9);
        assert!((clamped - 27.631021).abs() < 1e-6);
    }

    #[test]
    fn forward_is_deterministic_bitwise() {
        let params = NetworkParams::init(9);
        let frame = random_frame(5, 64);
        let a = forward(&params, &frame).unwrap();
        let b = forward(&params, &frame).unwrap();
        assert_eq!(a.as_slice(), b.as_slice());
    }

    #[test]
    fn forward_probs_sum_to_one_for_random_nets() {
        for seed in 0..8 {
            let params = NetworkParams::init(seed);
            let frame = random_frame(seed + 100, 48);
            let probs = forward(&params, &frame).unwrap();
            let sum: f64 = probs.as_slice().iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn single_precision_path_tracks_double() {
        let params = NetworkParams::init(3);
        let frame = random_frame(17, 128);
        let d = forward(&params, &frame).unwrap();
        let s = forward_single(&params, &frame).unwrap();
        for (a, b) in d.as_slice().iter().zip(s.as_slice()) {
            assert!((a - b).abs() < 1e-4, "double {a} vs single {b}");
        }
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let params = NetworkParams::init(21);
        for seed in 0..3u64 {
            let frame = random_frame(seed + 40, 24);
            let label = ModulationLabel::from_code((seed as usize) % N_CLASSES).unwrap();
            let grad = input_gradient(&params, &frame, label).unwrap();
            let h = 1e-5;
            for idx in [0usize, 7, 23, 24, 31, 47] {
                let mut plus = frame.clone();
                plus.samples[idx] += h;
                let mut minus = frame.clone();
                minus.samples[idx] -= h;
                let fd = (loss(&forward(&params, &plus).unwrap(), label)
                    - loss(&forward(&params, &minus).unwrap(), label))
                    / (2.0 * h);
                let g = grad[idx];
                if fd.abs() < 1e-8 && g.abs() < 1e-8 {
                    assert!((fd - g).abs() < 1e-8);
                } else {
                    assert!(
                        ((fd - g) / fd.abs().max(g.abs())).abs() < 1e-4,
                        "idx {idx}: fd {fd} vs analytic {g}"
                    );
                }
            }
        }
    }

    /// Configure the network to act as a pure linear map + softmax and check
    /// the input gradient against the closed form W^T (softmax(z) - onehot).
    #[test]
    fn input_gradient_matches_linear_surrogate_closed_form() {
        let l = 16usize;
        let mut params = NetworkParams::zeros();
        // conv1 channel 0 passes I through (plus a bias to stay in the
        // linear region of ReLU), channel 1 passes Q through.
        let center = K1 / 2;
        params.conv1.w[(0 * IN_CH + 0) * K1 + center] = 1.0;
        params.conv1.w[(1 * IN_CH + 1) * K1 + center] = 1.0;
        params.conv1.b[0] = 10.0;
        params.conv1.b[1] = 10.0;
        // conv2/conv3 stay zero: the residual block is the identity.
        let mut rng = rng_from(77);
        for w in &mut params.dense.w {
            *w = rng.gen_range(-0.5..0.5);
        }

        let frame = random_frame(123, l);
        let label = ModulationLabel::Qam16;
        let probs = forward(&params, &frame).unwrap();
        let analytic = input_gradient(&params, &frame, label).unwrap();

        // After the gain stage xn = x/r the network is linear:
        // logits_c = W[c][0]*(mean(In)+10) + W[c][1]*(mean(Qn)+10) + b,
        // so dL/dxn[t] = (1/L) * sum_c (p_c - onehot_c) * W[c][rail] and the
        // raw-input gradient is the gain-stage pullback of that.
        let mut coeff = [0.0; 2];
        for (ch, c) in coeff.iter_mut().enumerate() {
            for cls in 0..N_CLASSES {
                let e = if cls == label.code() { 1.0 } else { 0.0 };
                *c += (probs.as_slice()[cls] - e) * params.dense.w[cls * HIDDEN + ch];
            }
            *c /= l as f64;
        }
        let power = frame.samples.iter().map(|v| v * v).sum::<f64>() / l as f64;
        let r = power.sqrt();
        let xn: Vec<f64> = frame.samples.iter().map(|v| v / r).collect();
        let g: Vec<f64> = (0..2 * l)
            .map(|i| if i < l { coeff[0] } else { coeff[1] })
            .collect();
        let g_dot_y: f64 = g.iter().zip(&xn).map(|(a, b)| a * b).sum();
        for i in 0..2 * l {
            let expected = (g[i] - g_dot_y / l as f64 * xn[i]) / r;
            assert!(
                (analytic[i] - expected).abs() < 1e-12,
                "element {i}: {} vs {expected}",
                analytic[i]
            );
        }
    }

    #[test]
    fn momentum_step_with_zero_lr_is_identity() {
        let mut params = vec![1.0, -2.0, 3.0];
        let mut velocity = vec![0.0; 3];
        let before = params.clone();
        for _ in 0..10 {
            momentum_step(&mut params, &mut velocity, &[5.0, -1.0, 0.5], 0.0, 0.9);
        }
        assert_eq!(params, before);
    }

    fn toy_two_class_dataset() -> Dataset {
        // Constant I = +1 vs I = -1: linearly separable.
        let mut frames = Vec::new();
        for seg in 0..8u32 {
            for slice in 0..4u16 {
                let label = if seg % 2 == 0 { ModulationLabel::Bpsk } else { ModulationLabel::Qpsk };
                let v = if seg % 2 == 0 { 1.0 } else { -1.0 };
                let mut samples = vec![v; 16];
                samples.extend(vec![0.0; 16]);
                frames.push(IqFrame {
                    samples,
                    frame_len: 16,
                    snr_db: 10.0,
                    label: Some(label),
                    segment_id: seg,
                    slice_index: slice,
                    split: SplitTag::Train,
                });
            }
        }
        Dataset { frames, label_names: crate::labels::label_names(), frame_len: 16, seed: 0 }
    }

    #[test]
    fn training_solves_separable_toy_task_within_five_epochs() {
        let ds = toy_two_class_dataset();
        let cfg = TrainConfig {
            epochs: 5,
            batch_size: 8,
            learning_rate: 0.05,
            momentum: 0.9,
            weight_decay: 1e-4,
            seed: 3,
            precision: Precision::Double,
        };
        let params = train(&ds, &cfg).unwrap();
        let acc = accuracy(&params, &ds, SplitTag::Train).unwrap();
        assert_eq!(acc, 1.0);
    }

    #[test]
    fn training_is_deterministic() {
        let ds = toy_two_class_dataset();
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 8,
            learning_rate: 0.05,
            momentum: 0.9,
            weight_decay: 1e-4,
            seed: 3,
            precision: Precision::Double,
        };
        let a = train(&ds, &cfg).unwrap();
        let b = train(&ds, &cfg).unwrap();
        let fa = a.to_flat();
        let fb = b.to_flat();
        assert_eq!(fa.len(), fb.len());
        for (x, y) in fa.iter().zip(&fb) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn empty_training_split_is_a_config_error() {
        let mut ds = toy_two_class_dataset();
        for f in &mut ds.frames {
            f.split = SplitTag::Test;
        }
        assert!(matches!(train(&ds, &TrainConfig::default()), Err(Error::Config(_))));
    }

    #[test]
    fn uniform_predictor_accuracy_is_label0_fraction() {
        let params = NetworkParams::zeros();
        let mut cfg = GenConfig {
            labels: vec![ModulationLabel::Bpsk, ModulationLabel::Qpsk],
            frames_per_label: 8,
            frame_len: 32,
            snr_levels_db: vec![10.0],
            frames_per_segment: 4,
            split_fractions: [0.0, 0.0, 1.0],
            synth: SynthConfig::default(),
            seed: 5,
        };
        cfg.validate().unwrap();
        let ds = make_dataset(&cfg).unwrap();
        // argmax ties break to code 0 = BPSK
        let acc = accuracy(&params, &ds, SplitTag::Test).unwrap();
        assert_eq!(acc, 0.5);
        assert!(matches!(
            accuracy(&params, &ds, SplitTag::Train),
            Err(Error::Domain(_))
        ));
    }
}
