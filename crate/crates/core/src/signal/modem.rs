//! Baseband waveform synthesis for the eleven modulation schemes.
//!
//! Digital linear schemes draw unit-average-power constellation symbols and
//! shape them with a root-raised-cosine pulse. CPFSK/GFSK integrate a
//! (Gaussian-filtered) rectangular frequency pulse with modulation index 0.5.
//! The analog schemes modulate a bank of four random audio tones.
//!
//! Samples are returned as a flat `2×N` buffer: the first `N` values are the
//! in-phase rail, the next `N` the quadrature rail.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::labels::ModulationLabel;

/// Waveform synthesis parameters shared by all schemes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    /// Samples per symbol (digital schemes). Must be >= 2.
    pub sps: usize,
    /// Root-raised-cosine rolloff in [0, 1].
    pub rolloff: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig { sps: 8, rolloff: 0.35 }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sps < 2 {
            return Err(Error::Config(format!("sps must be >= 2, got {}", self.sps)));
        }
        if !(0.0..=1.0).contains(&self.rolloff) || !self.rolloff.is_finite() {
            return Err(Error::Config(format!(
                "rolloff must lie in [0, 1], got {}",
                self.rolloff
            )));
        }
        Ok(())
    }
}

/// RRC filter span on each side of the peak, in symbols.
const RRC_SPAN: usize = 8;
/// CPFSK / GFSK modulation index.
const FSK_MOD_INDEX: f64 = 0.5;
/// GFSK Gaussian filter bandwidth-time product.
const GFSK_BT: f64 = 0.25;
/// Number of tones in the analog message bank.
const TONE_COUNT: usize = 4;
/// Analog tone frequency range in Hz, interpreted against this sample rate.
const TONE_FREQ_HZ: (f64, f64) = (300.0, 3000.0);
const TONE_SAMPLE_RATE_HZ: f64 = 48_000.0;
/// WBFM peak frequency deviation in cycles/sample.
const FM_DEVIATION: f64 = 0.125;
/// AM-DSB modulation depth.
const AM_DEPTH: f64 = 0.5;

/// Unit-average-power constellation for a digital linear scheme, or `None`
/// for the frequency/analog schemes that have no symbol constellation.
pub fn constellation(label: ModulationLabel) -> Option<Vec<(f64, f64)>> {
    match label {
        ModulationLabel::Bpsk => Some(vec![(1.0, 0.0), (-1.0, 0.0)]),
        ModulationLabel::Qpsk => {
            let a = 1.0 / 2f64.sqrt();
            Some(vec![(a, a), (-a, a), (-a, -a), (a, -a)])
        }
        ModulationLabel::Psk8 => Some(
            (0..8)
                .map(|k| {
                    let phi = 2.0 * PI * k as f64 / 8.0;
                    (phi.cos(), phi.sin())
                })
                .collect(),
        ),
        ModulationLabel::Qam16 => Some(square_qam(&[-3.0, -1.0, 1.0, 3.0])),
        ModulationLabel::Qam64 => {
            Some(square_qam(&[-7.0, -5.0, -3.0, -1.0, 1.0, 3.0, 5.0, 7.0]))
        }
        ModulationLabel::Pam4 => {
            let s = 5f64.sqrt();
            Some(vec![(-3.0 / s, 0.0), (-1.0 / s, 0.0), (1.0 / s, 0.0), (3.0 / s, 0.0)])
        }
        _ => None,
    }
}

fn square_qam(levels: &[f64]) -> Vec<(f64, f64)> {
    let mean_sq: f64 = levels.iter().map(|v| v * v).sum::<f64>() / levels.len() as f64;
    let norm = (2.0 * mean_sq).sqrt();
    let mut points = Vec::with_capacity(levels.len() * levels.len());
    for &i in levels {
        for &q in levels {
            points.push((i / norm, q / norm));
        }
    }
    points
}

/// Root-raised-cosine taps for `sps` samples/symbol, normalized so that a
/// unit-power impulse train at symbol rate keeps unit average power after
/// shaping (sum of squared taps equals `sps`).
pub fn rrc_taps(sps: usize, rolloff: f64) -> Vec<f64> {
    let half = RRC_SPAN * sps;
    let mut taps = Vec::with_capacity(2 * half + 1);
    for n in -(half as isize)..=(half as isize) {
        let t = n as f64 / sps as f64;
        taps.push(rrc_at(t, rolloff));
    }
    let energy: f64 = taps.iter().map(|h| h * h).sum();
    let scale = (sps as f64 / energy).sqrt();
    for h in &mut taps {
        *h *= scale;
    }
    taps
}

fn rrc_at(t: f64, beta: f64) -> f64 {
    if t == 0.0 {
        return 1.0 + beta * (4.0 / PI - 1.0);
    }
    if beta > 0.0 {
        let singular = 1.0 / (4.0 * beta);
        if (t.abs() - singular).abs() < 1e-9 {
            let a = (PI / (4.0 * beta)).sin() * (1.0 + 2.0 / PI);
            let b = (PI / (4.0 * beta)).cos() * (1.0 - 2.0 / PI);
            return beta / 2f64.sqrt() * (a + b);
        }
    }
    let num = (PI * t * (1.0 - beta)).sin() + 4.0 * beta * t * (PI * t * (1.0 + beta)).cos();
    let den = PI * t * (1.0 - (4.0 * beta * t) * (4.0 * beta * t));
    num / den
}

/// Synthesize one baseband stream for `label`.
///
/// Returns a flat 2×(n_symbols*sps) buffer (I rail then Q rail). The stream
/// carries no carrier phase offset; callers rotate it if desired.
pub fn modulate(
    label: ModulationLabel,
    n_symbols: usize,
    params: &SynthConfig,
    rng: &mut ChaCha12Rng,
) -> Result<Vec<f64>> {
    params.validate()?;
    if n_symbols < 1 {
        return Err(Error::Config("n_symbols must be >= 1".into()));
    }
    let n = n_symbols * params.sps;
    let stream = match label {
        ModulationLabel::Cpfsk => fsk_stream(n_symbols, params.sps, None, rng),
        ModulationLabel::Gfsk => fsk_stream(n_symbols, params.sps, Some(GFSK_BT), rng),
        ModulationLabel::Wbfm => wbfm_stream(n, rng),
        ModulationLabel::AmSsb => am_ssb_stream(n, rng),
        ModulationLabel::AmDsb => am_dsb_stream(n, rng),
        _ => linear_stream(label, n_symbols, params, rng),
    };
    debug_assert_eq!(stream.len(), 2 * n);
    Ok(stream)
}

/// Constellation symbols, upsampled and RRC-shaped. Guard symbols on both
/// sides are synthesized and trimmed so the returned span has steady-state
/// inter-symbol interference rather than filter ramp-up.
fn linear_stream(
    label: ModulationLabel,
    n_symbols: usize,
    params: &SynthConfig,
    rng: &mut ChaCha12Rng,
) -> Vec<f64> {
    let sps = params.sps;
    let points = constellation(label).expect("linear scheme has a constellation");
    let taps = rrc_taps(sps, params.rolloff);
    let total_syms = n_symbols + 2 * RRC_SPAN;

    let mut sym_i = Vec::with_capacity(total_syms);
    let mut sym_q = Vec::with_capacity(total_syms);
    for _ in 0..total_syms {
        let (i, q) = points[rng.gen_range(0..points.len())];
        sym_i.push(i);
        sym_q.push(q);
    }

    // Pulse superposition: symbol k peaks at sample k*sps + taps.len()/2.
    let full = total_syms * sps + taps.len();
    let mut full_i = vec![0.0; full];
    let mut full_q = vec![0.0; full];
    for k in 0..total_syms {
        let base = k * sps;
        for (j, &h) in taps.iter().enumerate() {
            full_i[base + j] += sym_i[k] * h;
            full_q[base + j] += sym_q[k] * h;
        }
    }

    let start = RRC_SPAN * sps + taps.len() / 2;
    let n = n_symbols * sps;
    let mut out = Vec::with_capacity(2 * n);
    out.extend_from_slice(&full_i[start..start + n]);
    out.extend_from_slice(&full_q[start..start + n]);
    out
}

/// Continuous-phase FSK. `bt: None` gives a rectangular frequency pulse
/// (CPFSK); `Some(bt)` Gaussian-filters it (GFSK). Constant envelope.
fn fsk_stream(n_symbols: usize, sps: usize, bt: Option<f64>, rng: &mut ChaCha12Rng) -> Vec<f64> {
    let pulse = match bt {
        None => vec![1.0 / sps as f64; sps],
        Some(bt) => gfsk_pulse(sps, bt),
    };
    // Guard symbols cover the pulse spill-over at both ends.
    let guard = pulse.len() / sps + 1;
    let total_syms = n_symbols + 2 * guard;
    let bits: Vec<f64> = (0..total_syms)
        .map(|_| if rng.gen_range(0..2) == 0 { 1.0 } else { -1.0 })
        .collect();

    let full = total_syms * sps + pulse.len();
    let mut freq = vec![0.0; full];
    for (k, &a) in bits.iter().enumerate() {
        let base = k * sps;
        for (j, &p) in pulse.iter().enumerate() {
            freq[base + j] += a * p;
        }
    }

    let start = guard * sps + pulse.len() / 2;
    let n = n_symbols * sps;
    let mut phase = 0.0;
    let mut out = vec![0.0; 2 * n];
    for t in 0..n {
        phase += PI * FSK_MOD_INDEX * freq[start + t];
        out[t] = phase.cos();
        out[n + t] = phase.sin();
    }
    out
}

/// Rectangular frequency pulse convolved with the GMSK Gaussian, normalized
/// to unit integral so each symbol advances the phase by ±π·h.
fn gfsk_pulse(sps: usize, bt: f64) -> Vec<f64> {
    let sigma = (2f64.ln()).sqrt() / (2.0 * PI * bt) * sps as f64;
    let half = (4.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-half..=half)
        .map(|n| (-(n as f64) * (n as f64) / (2.0 * sigma * sigma)).exp())
        .collect();

    let mut pulse = vec![0.0; sps + kernel.len() - 1];
    for t in 0..sps {
        for (j, &g) in kernel.iter().enumerate() {
            pulse[t + j] += g;
        }
    }
    let total: f64 = pulse.iter().sum();
    for p in &mut pulse {
        *p /= total;
    }
    pulse
}

/// Bank of random audio tones, normalized to peak amplitude <= 1.
fn tone_bank(n: usize, rng: &mut ChaCha12Rng) -> Vec<f64> {
    let mut freqs = [0.0; TONE_COUNT];
    let mut phases = [0.0; TONE_COUNT];
    for k in 0..TONE_COUNT {
        let f_hz = rng.gen_range(TONE_FREQ_HZ.0..TONE_FREQ_HZ.1);
        freqs[k] = f_hz / TONE_SAMPLE_RATE_HZ;
        phases[k] = rng.gen_range(0.0..2.0 * PI);
    }
    (0..n)
        .map(|t| {
            let mut m = 0.0;
            for k in 0..TONE_COUNT {
                m += (2.0 * PI * freqs[k] * t as f64 + phases[k]).cos();
            }
            m / TONE_COUNT as f64
        })
        .collect()
}

fn wbfm_stream(n: usize, rng: &mut ChaCha12Rng) -> Vec<f64> {
    let message = tone_bank(n, rng);
    let mut out = vec![0.0; 2 * n];
    let mut phase = 0.0;
    for t in 0..n {
        phase += 2.0 * PI * FM_DEVIATION * message[t];
        out[t] = phase.cos();
        out[n + t] = phase.sin();
    }
    out
}

/// Upper-sideband SSB: the analytic signal of the tone bank. Tone amplitudes
/// are chosen so the stream has unit average power.
fn am_ssb_stream(n: usize, rng: &mut ChaCha12Rng) -> Vec<f64> {
    let mut freqs = [0.0; TONE_COUNT];
    let mut phases = [0.0; TONE_COUNT];
    for k in 0..TONE_COUNT {
        let f_hz = rng.gen_range(TONE_FREQ_HZ.0..TONE_FREQ_HZ.1);
        freqs[k] = f_hz / TONE_SAMPLE_RATE_HZ;
        phases[k] = rng.gen_range(0.0..2.0 * PI);
    }
    let amp = (1.0 / TONE_COUNT as f64).sqrt();
    let mut out = vec![0.0; 2 * n];
    for t in 0..n {
        let mut i = 0.0;
        let mut q = 0.0;
        for k in 0..TONE_COUNT {
            let arg = 2.0 * PI * freqs[k] * t as f64 + phases[k];
            i += amp * arg.cos();
            q += amp * arg.sin();
        }
        out[t] = i;
        out[n + t] = q;
    }
    out
}

fn am_dsb_stream(n: usize, rng: &mut ChaCha12Rng) -> Vec<f64> {
    let message = tone_bank(n, rng);
    let mut out = vec![0.0; 2 * n];
    for t in 0..n {
        out[t] = 1.0 + AM_DEPTH * message[t];
        // quadrature rail stays zero
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from;

    fn mean_symbol_power(points: &[(f64, f64)]) -> f64 {
        points.iter().map(|(i, q)| i * i + q * q).sum::<f64>() / points.len() as f64
    }

    #[test]
    fn bpsk_symbols_are_real_antipodal() {
        let points = constellation(ModulationLabel::Bpsk).unwrap();
        assert_eq!(points.len(), 2);
        for (i, q) in points {
            assert!(i == 1.0 || i == -1.0);
            assert_eq!(q, 0.0);
        }
    }

    #[test]
    fn qpsk_points_are_diagonal_with_unit_power() {
        let points = constellation(ModulationLabel::Qpsk).unwrap();
        let a = 1.0 / 2f64.sqrt();
        for (i, q) in &points {
            assert!((i.abs() - a).abs() < 1e-15);
            assert!((q.abs() - a).abs() < 1e-15);
        }
        assert!((mean_symbol_power(&points) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pam4_levels_are_scaled_by_sqrt5() {
        let points = constellation(ModulationLabel::Pam4).unwrap();
        let s = 5f64.sqrt();
        let expect = [-3.0 / s, -1.0 / s, 1.0 / s, 3.0 / s];
        for ((i, q), e) in points.iter().zip(expect) {
            assert!((i - e).abs() < 1e-15);
            assert_eq!(*q, 0.0);
        }
        assert!((mean_symbol_power(&points) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn every_digital_constellation_has_unit_mean_power() {
        for label in ModulationLabel::ALL {
            if let Some(points) = constellation(label) {
                assert!(
                    (mean_symbol_power(&points) - 1.0).abs() < 1e-12,
                    "{} constellation power off",
                    label.name()
                );
            }
        }
    }

    #[test]
    fn modulate_returns_requested_length_for_all_schemes() {
        let cfg = SynthConfig::default();
        for label in ModulationLabel::ALL {
            let mut rng = rng_from(42);
            let s = modulate(label, 13, &cfg, &mut rng).unwrap();
            assert_eq!(s.len(), 2 * 13 * cfg.sps, "{}", label.name());
            assert!(s.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn fsk_streams_have_constant_envelope() {
        let cfg = SynthConfig::default();
        for label in [ModulationLabel::Cpfsk, ModulationLabel::Gfsk, ModulationLabel::Wbfm] {
            let mut rng = rng_from(3);
            let s = modulate(label, 32, &cfg, &mut rng).unwrap();
            let n = s.len() / 2;
            for t in 0..n {
                let env = s[t] * s[t] + s[n + t] * s[n + t];
                assert!((env - 1.0).abs() < 1e-9, "{} envelope {env}", label.name());
            }
        }
    }

    #[test]
    fn shaped_stream_power_is_near_unity() {
        let cfg = SynthConfig::default();
        for label in [ModulationLabel::Qpsk, ModulationLabel::Qam16, ModulationLabel::Qam64] {
            let mut rng = rng_from(9);
            let s = modulate(label, 4096, &cfg, &mut rng).unwrap();
            let n = s.len() / 2;
            let p = s.iter().map(|v| v * v).sum::<f64>() / n as f64;
            assert!((p - 1.0).abs() < 0.05, "{} power {p}", label.name());
        }
    }

    #[test]
    fn invalid_params_are_rejected() {
        let mut rng = rng_from(1);
        let bad_sps = SynthConfig { sps: 1, rolloff: 0.35 };
        assert!(modulate(ModulationLabel::Bpsk, 4, &bad_sps, &mut rng).is_err());
        let bad_rolloff = SynthConfig { sps: 8, rolloff: 1.5 };
        assert!(modulate(ModulationLabel::Bpsk, 4, &bad_rolloff, &mut rng).is_err());
    }

    #[test]
    fn rrc_taps_are_symmetric_and_energy_normalized() {
        let taps = rrc_taps(8, 0.35);
        assert_eq!(taps.len(), 2 * RRC_SPAN * 8 + 1);
        for (a, b) in taps.iter().zip(taps.iter().rev()) {
            assert!((a - b).abs() < 1e-12);
        }
        let energy: f64 = taps.iter().map(|h| h * h).sum();
        assert!((energy - 8.0).abs() < 1e-9);
    }
}
