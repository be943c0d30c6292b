// Scratch probe: what do fold models output on attacked frames?
// Not part of the deliverable surface.

use cshield_core::attacks::{attack_dataset, AttackConfig, AttackMethod};
use cshield_core::classifier::{accuracy, forward, train, Precision, TrainConfig};
use cshield_core::conformal::kfold_calibrate;
use cshield_core::labels::ModulationLabel;
use cshield_core::signal::{make_dataset, GenConfig, SplitTag, SynthConfig};

fn main() {
    let fold_epochs: usize = std::env::args().nth(1).map(|s| s.parse().unwrap()).unwrap_or(40);

    let gen = GenConfig {
        labels: vec![
            ModulationLabel::Bpsk,
            ModulationLabel::Qpsk,
            ModulationLabel::Psk8,
            ModulationLabel::Qam16,
            ModulationLabel::Cpfsk,
            ModulationLabel::Gfsk,
            ModulationLabel::Pam4,
        ],
        frames_per_label: 960,
        frame_len: 128,
        snr_levels_db: vec![0.0, 16.0],
        frames_per_segment: 16,
        split_fractions: [0.40, 0.25, 0.35],
        synth: SynthConfig::default(),
        seed: 7,
    };
    let ds = make_dataset(&gen).unwrap();
    let main_cfg = TrainConfig {
        epochs: 60,
        batch_size: 32,
        learning_rate: 0.02,
        momentum: 0.9,
        weight_decay: 1e-4,
        seed: 101,
        precision: Precision::Double,
    };
    let params = train(&ds, &main_cfg).unwrap();
    let mut eval16 = ds.filter_split(SplitTag::Test);
    eval16.frames.retain(|f| f.snr_db == 16.0 && f.label.unwrap().is_digital() && f.label.unwrap() != ModulationLabel::Qam64);
    println!("main digital7 16dB acc: {:.4}", accuracy(&params, &eval16, SplitTag::Test).unwrap());

    let fold_cfg = TrainConfig { epochs: fold_epochs, seed: 202, ..main_cfg.clone() };
    let shield = kfold_calibrate(&ds, 10, &fold_cfg, 0.1).unwrap();

    for (steps, beta) in [(10usize, 0.25f64), (10, 0.05), (3, 0.25), (2, 0.5), (1, 0.25)] {
    println!("=== steps={steps} beta={beta}");
    for psr in [-6.0, 0.0] {
        let mut cfg = AttackConfig::new(AttackMethod::Pgd, psr, 79);
        cfg.steps = steps;
        cfg.step_size_beta = beta;
        let attacked = attack_dataset(&params, &eval16, &cfg).unwrap();
        let sets: Vec<_> = attacked.dataset.frames.iter().take(400)
            .map(|f| cshield_core::conformal::kfold_cp_set(&shield, f).unwrap().size())
            .collect();
        let mean_size = sets.iter().sum::<usize>() as f64 / sets.len() as f64;
        println!("  mean attacked set size (400 frames): {mean_size:.3}");
        println!(
            "pgd@{psr}: main attacked acc {:.4}",
            accuracy(&params, &attacked.dataset, SplitTag::Test).unwrap()
        );

        // fold-model behavior on the first 400 attacked frames
        let mut top_p = Vec::new();
        let mut class_hist = vec![0usize; 11];
        let mut entropy = Vec::new();
        for f in attacked.dataset.frames.iter().take(400) {
            for fold in &shield.folds {
                let p = forward(&fold.params, f).unwrap();
                let arg = p.argmax();
                class_hist[arg.code()] += 1;
                top_p.push(p.get(arg));
                entropy.push(-p.as_slice().iter().filter(|v| **v > 0.0).map(|v| v * v.ln()).sum::<f64>());
            }
        }
        top_p.sort_by(|a, b| a.partial_cmp(b).unwrap());
        entropy.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = top_p.len();
        println!(
            "  fold top-p: p25={:.3} p50={:.3} p75={:.3} | entropy p50={:.3} (ln7={:.3}) | argmax class hist {:?}",
            top_p[n / 4], top_p[n / 2], top_p[3 * n / 4], entropy[n / 2], 7f64.ln(), class_hist
        );
    }
    }
}
