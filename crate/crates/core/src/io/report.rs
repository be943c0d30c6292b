//! CSV and line-record renderings of detection reports and sweep tables.
//!
//! Column orders are fixed and all floats print with six decimals, so equal
//! inputs give byte-identical files.

use crate::labels::ModulationLabel;
use crate::shield::{DetectionReport, SweepRow};

fn fmt(v: f64) -> String {
    format!("{v:.6}")
}

/// Sweep CSV: `method,psr_db,mean_inefficiency,coverage,tpr,fpr,n_segments`.
/// The clean baseline row has method `clean` and empty psr/tpr cells; attack
/// rows leave fpr empty.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("method,psr_db,mean_inefficiency,coverage,tpr,fpr,n_segments\n");
    for row in rows {
        let method = row.method.map(|m| m.name()).unwrap_or("clean");
        let psr = row.psr_db.map(|p| format!("{p:.2}")).unwrap_or_default();
        let tpr = row.tpr.map(fmt).unwrap_or_default();
        let fpr = row.fpr.map(fmt).unwrap_or_default();
        out.push_str(&format!(
            "{method},{psr},{},{},{tpr},{fpr},{}\n",
            fmt(row.mean_inefficiency),
            fmt(row.coverage),
            row.n_segments,
        ));
    }
    out
}

/// Detection CSV: one row per segment with the full ISS vector.
pub fn detect_csv(reports: &[DetectionReport]) -> String {
    let mut header = String::from("segment_id,n_slices,mean_set_size,verdict,triggers,labels_above_tau");
    for label in ModulationLabel::ALL {
        header.push_str(&format!(",iss_{}", label.name().to_ascii_lowercase().replace('-', "_")));
    }
    header.push('\n');

    let mut out = header;
    for r in reports {
        let triggers: Vec<&str> = r.triggers.iter().map(|t| t.name()).collect();
        let above: Vec<&str> = r.labels_above_tau.iter().map(|l| l.name()).collect();
        out.push_str(&format!(
            "{},{},{},{},{},{}",
            r.segment_id,
            r.n_slices,
            fmt(r.mean_set_size),
            r.verdict.name(),
            triggers.join(";"),
            above.join(";"),
        ));
        for v in &r.iss.values {
            out.push(',');
            out.push_str(&fmt(*v));
        }
        out.push('\n');
    }
    out
}

/// Line-delimited structured records mirroring `detect_csv`.
pub fn detect_records(reports: &[DetectionReport]) -> String {
    let mut out = String::new();
    for r in reports {
        let triggers: Vec<&str> = r.triggers.iter().map(|t| t.name()).collect();
        let iss: Vec<String> = r.iss.values.iter().map(|v| fmt(*v)).collect();
        out.push_str(&format!(
            "segment={} slices={} mean_set_size={} verdict={} triggers={} theta_ineff={} tau_iss={} m_iss={} iss={}\n",
            r.segment_id,
            r.n_slices,
            fmt(r.mean_set_size),
            r.verdict.name(),
            if triggers.is_empty() { "none".to_string() } else { triggers.join(";") },
            fmt(r.thresholds.theta_ineff),
            fmt(r.thresholds.tau_iss),
            r.thresholds.m_iss,
            iss.join(","),
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attacks::AttackMethod;

    #[test]
    fn sweep_csv_has_fixed_header_and_clean_row_shape() {
        let rows = vec![
            SweepRow {
                method: None,
                psr_db: None,
                mean_inefficiency: 1.0,
                coverage: 0.9,
                tpr: None,
                fpr: Some(0.05),
                n_segments: 10,
            },
            SweepRow {
                method: Some(AttackMethod::Pgd),
                psr_db: Some(-10.0),
                mean_inefficiency: 2.5,
                coverage: 0.4,
                tpr: Some(0.9),
                fpr: None,
                n_segments: 10,
            },
        ];
        let csv = sweep_csv(&rows);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "method,psr_db,mean_inefficiency,coverage,tpr,fpr,n_segments");
        assert_eq!(lines[1], "clean,,1.000000,0.900000,,0.050000,10");
        assert_eq!(lines[2], "pgd,-10.00,2.500000,0.400000,0.900000,,10");
    }
}
