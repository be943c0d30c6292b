// Scratch micro-benchmark for the hot numeric paths. Not part of the
// deliverable surface.

use std::time::Instant;

use cshield_core::classifier::{forward, input_gradient, NetworkParams};
use cshield_core::labels::ModulationLabel;
use cshield_core::seed::rng_from;
use cshield_core::signal::{IqFrame, SplitTag};
use rand::Rng;

fn main() {
    let params = NetworkParams::init(1);
    let l = 128;
    let mut rng = rng_from(2);
    let frame = IqFrame {
        samples: (0..2 * l).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        frame_len: l,
        snr_db: 16.0,
        label: Some(ModulationLabel::Bpsk),
        segment_id: 0,
        slice_index: 0,
        split: SplitTag::Test,
    };

    let n = 2000;
    let t0 = Instant::now();
    let mut acc = 0.0;
    for _ in 0..n {
        acc += forward(&params, &frame).unwrap().as_slice()[0];
    }
    let dt = t0.elapsed().as_secs_f64();
    println!("forward: {:.3} ms/call ({acc:.3})", dt / n as f64 * 1e3);

    let t0 = Instant::now();
    let mut acc = 0.0;
    for _ in 0..n {
        acc += input_gradient(&params, &frame, ModulationLabel::Bpsk).unwrap()[0];
    }
    let dt = t0.elapsed().as_secs_f64();
    println!("input_gradient: {:.3} ms/call ({acc:.3})", dt / n as f64 * 1e3);
}
