// Scratch harness for sizing the desk-scale training recipe. Not part of
// the deliverable surface; run with:
//   cargo run -p cshield-core --example tune --release -- <epochs> <lr> <batch>

use std::time::Instant;

use cshield_core::classifier::{accuracy, train, Precision, TrainConfig};
use cshield_core::labels::ModulationLabel;
use cshield_core::signal::{make_dataset, GenConfig, SplitTag, SynthConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let epochs: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(12);
    let lr: f64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(0.02);
    let batch: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(32);
    let snr: f64 = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(16.0);

    let labels = vec![
        ModulationLabel::Bpsk,
        ModulationLabel::Qpsk,
        ModulationLabel::Psk8,
        ModulationLabel::Qam16,
        ModulationLabel::Cpfsk,
        ModulationLabel::Gfsk,
        ModulationLabel::Pam4,
    ];
    let gen = GenConfig {
        labels: labels.clone(),
        frames_per_label: 960,
        frame_len: 128,
        snr_levels_db: vec![snr],
        frames_per_segment: 16,
        split_fractions: [0.4, 0.3, 0.3],
        synth: SynthConfig::default(),
        seed: 7,
    };
    let t0 = Instant::now();
    let ds = make_dataset(&gen).unwrap();
    println!("gen: {} frames in {:.1}s", ds.frames.len(), t0.elapsed().as_secs_f64());

    let cfg = TrainConfig {
        epochs,
        batch_size: batch,
        learning_rate: lr,
        momentum: 0.9,
        weight_decay: 1e-4,
        seed: 101,
        precision: Precision::Double,
    };
    let t0 = Instant::now();
    let params = train(&ds, &cfg).unwrap();
    println!("train: {:.1}s (epochs={epochs} lr={lr} batch={batch})", t0.elapsed().as_secs_f64());

    let train_acc = accuracy(&params, &ds, SplitTag::Train).unwrap();
    let test_acc = accuracy(&params, &ds, SplitTag::Test).unwrap();
    println!("train acc {train_acc:.4}  test acc {test_acc:.4}");

    // confusion by true label
    use cshield_core::classifier::forward;
    let mut confusion = vec![vec![0usize; 11]; 11];
    for f in ds.frames.iter().filter(|f| f.split == SplitTag::Test) {
        let p = forward(&params, f).unwrap();
        confusion[f.label.unwrap().code()][p.argmax().code()] += 1;
    }
    for label in &labels {
        let row = &confusion[label.code()];
        let total: usize = row.iter().sum();
        let correct = row[label.code()];
        let tops: Vec<String> = row
            .iter()
            .enumerate()
            .filter(|(_, c)| **c > 0)
            .map(|(i, c)| format!("{}:{}", ModulationLabel::from_code(i).unwrap().name(), c))
            .collect();
        println!("{:>6} {:>5.3}  {}", label.name(), correct as f64 / total as f64, tops.join(" "));
    }
}
