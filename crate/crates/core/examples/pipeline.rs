// Scratch end-to-end probe for the desk-scale pipeline numbers. Not part
// of the deliverable surface.

use std::time::Instant;

use cshield_core::attacks::{attack_dataset, AttackConfig, AttackMethod};
use cshield_core::classifier::{accuracy, train, Precision, TrainConfig};
use cshield_core::conformal::{coverage, inefficiency, kfold_calibrate, kfold_cp_set};
use cshield_core::labels::ModulationLabel;
use cshield_core::shield::{calibrate_thresholds, detect, evaluate_sweep, iss, DetectionThresholds};
use cshield_core::signal::{make_dataset, slice_segments, GenConfig, SplitTag, SynthConfig};

fn main() {
    let fold_epochs: usize = std::env::args().nth(1).map(|s| s.parse().unwrap()).unwrap_or(32);
    let digital7_labels = vec![
        ModulationLabel::Bpsk,
        ModulationLabel::Qpsk,
        ModulationLabel::Psk8,
        ModulationLabel::Qam16,
        ModulationLabel::Cpfsk,
        ModulationLabel::Gfsk,
        ModulationLabel::Pam4,
    ];
    let gen = GenConfig {
        labels: digital7_labels,
        frames_per_label: 960,
        frame_len: 128,
        snr_levels_db: vec![0.0, 16.0],
        frames_per_segment: 16,
        split_fractions: [0.40, 0.25, 0.35],
        synth: SynthConfig::default(),
        seed: 7,
    };
    let ds = make_dataset(&gen).unwrap();
    println!(
        "dataset: {} frames (train {}, cal {}, test {})",
        ds.frames.len(),
        ds.split_frames(SplitTag::Train).len(),
        ds.split_frames(SplitTag::Cal).len(),
        ds.split_frames(SplitTag::Test).len()
    );

    let main_epochs: usize = std::env::args().nth(2).map(|s| s.parse().unwrap()).unwrap_or(60);
    let main_cfg = TrainConfig {
        epochs: main_epochs,
        batch_size: 32,
        learning_rate: 0.02,
        momentum: 0.9,
        weight_decay: 1e-4,
        seed: 101,
        precision: Precision::Double,
    };
    let t0 = Instant::now();
    let params = train(&ds, &main_cfg).unwrap();
    let mut eval16 = ds.filter_split(SplitTag::Test);
    eval16.frames.retain(|f| f.snr_db == 16.0);
    let digital7 = |l: ModulationLabel| l.is_digital() && l != ModulationLabel::Qam64;
    let mut eval7 = eval16.clone();
    eval7.frames.retain(|f| digital7(f.label.unwrap()));
    let clean_acc = accuracy(&params, &eval7, SplitTag::Test).unwrap();
    println!(
        "main model: {:.1}s, digital7 16dB acc {clean_acc:.4}, all-11 16dB acc {:.4}",
        t0.elapsed().as_secs_f64(),
        accuracy(&params, &eval16, SplitTag::Test).unwrap()
    );

    let fold_cfg = TrainConfig { epochs: fold_epochs, seed: 202, ..main_cfg.clone() };
    let t0 = Instant::now();
    let shield = kfold_calibrate(&ds, 10, &fold_cfg, 0.1).unwrap();
    println!(
        "shield: {:.1}s, N={} threshold={}",
        t0.elapsed().as_secs_f64(),
        shield.total_calibration,
        shield.threshold()
    );

    // evaluation set = digital7 at 16 dB
    let test = eval7.clone();
    println!("digital7 16 dB test frames: {}", test.frames.len());
    let t0 = Instant::now();
    let sets: Vec<_> = test.frames.iter().map(|f| kfold_cp_set(&shield, f).unwrap()).collect();
    let truths: Vec<_> = test.frames.iter().map(|f| f.label.unwrap()).collect();
    println!(
        "clean: coverage {:.4}, inefficiency {:.4} ({:.1}s, {} frames)",
        coverage(&sets, &truths).unwrap(),
        inefficiency(&sets).unwrap(),
        t0.elapsed().as_secs_f64(),
        sets.len()
    );

    // ISS argmax on clean test segments
    let test_segments = slice_segments(&test).unwrap();
    let hit = test_segments
        .iter()
        .filter(|seg| iss(&shield, seg).unwrap().argmax() == seg.label.unwrap())
        .count();
    println!(
        "ISS argmax hit rate: {:.4} over {} segments",
        hit as f64 / test_segments.len() as f64,
        test_segments.len()
    );

    // stored NCS distribution across folds
    let mut pooled: Vec<f64> = shield.folds.iter().flat_map(|f| f.scores.iter().copied()).collect();
    pooled.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pct = |p: f64| pooled[((p * pooled.len() as f64) as usize).min(pooled.len() - 1)];
    println!(
        "stored NCS percentiles: p50={:.3} p80={:.3} p90={:.3} p95={:.3} (ln7={:.3})",
        pct(0.50), pct(0.80), pct(0.90), pct(0.95), 7f64.ln()
    );

    // set-size histogram clean vs attacked 0dB, fold-argmax diversity
    let hist = |sets: &[cshield_core::conformal::PredictionSet]| {
        let mut h = vec![0usize; 8];
        for s in sets {
            h[s.size().min(7)] += 1;
        }
        h
    };
    println!("clean set-size hist: {:?}", hist(&sets));
    {
        use cshield_core::classifier::forward;
        let cfg = AttackConfig::new(AttackMethod::Pgd, -6.0, 77);
        let attacked6 = attack_dataset(&params, &eval7, &cfg).unwrap();
        let sets6: Vec<_> =
            attacked6.dataset.frames.iter().map(|f| kfold_cp_set(&shield, f).unwrap()).collect();
        println!("pgd@-6 set-size hist: {:?}", hist(&sets6));
        // distinct fold argmaxes per attacked frame
        let mut distinct_hist = vec![0usize; 11];
        for f in attacked6.dataset.frames.iter().take(300) {
            let mut labels: Vec<usize> = shield
                .folds
                .iter()
                .map(|fold| forward(&fold.params, f).unwrap().argmax().code())
                .collect();
            labels.sort_unstable();
            labels.dedup();
            distinct_hist[labels.len()] += 1;
        }
        println!("pgd@-6 distinct fold argmaxes per frame (300 frames): {:?}", distinct_hist);
    }

    // thresholds on clean digital7 16 dB cal segments
    let mut cal = ds.filter_split(SplitTag::Cal);
    cal.frames.retain(|f| f.snr_db == 16.0 && digital7(f.label.unwrap()));
    let cal_segments = slice_segments(&cal).unwrap();
    let thr = calibrate_thresholds(&shield, &cal_segments, 0.1).unwrap();
    println!("thresholds: theta={:.4} tau={} m={}", thr.theta_ineff, thr.tau_iss, thr.m_iss);

    // FPR on clean test segments
    let fp = test_segments
        .iter()
        .filter(|seg| detect(&shield, seg, &thr).unwrap().verdict == cshield_core::shield::Verdict::Adversarial)
        .count();
    println!("clean test FPR: {:.4}", fp as f64 / test_segments.len() as f64);

    // trigger breakdown at -6 dB PGD
    {
        let cfg = AttackConfig::new(AttackMethod::Pgd, -6.0, 78);
        let attacked6 = attack_dataset(&params, &eval7, &cfg).unwrap();
        let segs = slice_segments(&attacked6.dataset).unwrap();
        let mut by = [0usize; 3];
        let mut fired = 0usize;
        let mut mean_sizes = Vec::new();
        for seg in &segs {
            let r = detect(&shield, seg, &thr).unwrap();
            mean_sizes.push(r.mean_set_size);
            if r.verdict == cshield_core::shield::Verdict::Adversarial { fired += 1; }
            for t in &r.triggers {
                use cshield_core::shield::TriggerReason::*;
                match t { Inefficiency => by[0] += 1, IssSpread => by[1] += 1, IssDegenerate => by[2] += 1 }
            }
        }
        mean_sizes.sort_by(|a, b| a.partial_cmp(b).unwrap());
        println!(
            "pgd@-6 segments: TPR {:.3}, triggers ineff={} spread={} degen={}, seg mean-set-size p10={:.2} p50={:.2} p90={:.2} (theta {:.2})",
            fired as f64 / segs.len() as f64, by[0], by[1], by[2],
            mean_sizes[segs.len()/10], mean_sizes[segs.len()/2], mean_sizes[9*segs.len()/10], thr.theta_ineff
        );
    }

    // attack efficacy at PSR 0 for PGD
    let cfg = AttackConfig::new(AttackMethod::Pgd, 0.0, 40);
    let attacked = attack_dataset(&params, &eval7, &cfg).unwrap();
    let adv_acc = accuracy(&params, &attacked.dataset, SplitTag::Test).unwrap();
    println!("PGD@0dB attacked accuracy: {adv_acc:.4} (clean {clean_acc:.4})");

    // sweep
    let thresholds = DetectionThresholds { ..thr };
    let t0 = Instant::now();
    let rows = evaluate_sweep(
        &shield,
        &params,
        &eval7,
        &[AttackMethod::Pgd, AttackMethod::Cw, AttackMethod::Fgsm],
        &[-20.0, -10.0, -6.0, 0.0],
        &thresholds,
        999,
    )
    .unwrap();
    println!("sweep: {:.1}s", t0.elapsed().as_secs_f64());
    println!("method  psr    ineff   cover   tpr     fpr");
    for row in &rows {
        println!(
            "{:>6} {:>6} {:.4} {:.4} {:>7} {:>7}",
            row.method.map(|m| m.name()).unwrap_or("clean"),
            row.psr_db.map(|p| format!("{p:.0}")).unwrap_or_default(),
            row.mean_inefficiency,
            row.coverage,
            row.tpr.map(|v| format!("{v:.4}")).unwrap_or_default(),
            row.fpr.map(|v| format!("{v:.4}")).unwrap_or_default(),
        );
    }
}
