//! Self-contained SVG line chart of mean inefficiency vs PSR.
//!
//! One polyline per attack method plus a dashed clean-baseline rule; the x
//! axis spans exactly the swept PSR range. No external renderer is needed.

use crate::attacks::AttackMethod;
use crate::shield::SweepRow;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_L: f64 = 60.0;
const MARGIN_R: f64 = 120.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 50.0;

fn color(method: AttackMethod) -> &'static str {
    match method {
        AttackMethod::Fgsm => "#1f77b4",
        AttackMethod::Pgd => "#d62728",
        AttackMethod::Cw => "#2ca02c",
    }
}

fn f(v: f64) -> String {
    format!("{v:.2}")
}

/// Render the sweep as an SVG document string.
pub fn sweep_chart(rows: &[SweepRow]) -> String {
    let x_min = rows.iter().filter_map(|r| r.psr_db).fold(f64::INFINITY, f64::min);
    let x_max = rows.iter().filter_map(|r| r.psr_db).fold(f64::NEG_INFINITY, f64::max);
    let (x_min, x_max) = if x_min.is_finite() && x_max > x_min { (x_min, x_max) } else { (-20.0, 0.0) };
    let y_max = rows
        .iter()
        .map(|r| r.mean_inefficiency)
        .fold(1.0f64, f64::max)
        .ceil()
        .max(2.0);

    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let sx = |x: f64| MARGIN_L + (x - x_min) / (x_max - x_min) * plot_w;
    let sy = |y: f64| MARGIN_T + (1.0 - y / y_max) * plot_h;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"22\" font-family=\"sans-serif\" font-size=\"15\" text-anchor=\"middle\">Mean prediction-set size vs PSR</text>\n",
        f(MARGIN_L + plot_w / 2.0)
    ));

    // axes
    svg.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        f(MARGIN_L), f(MARGIN_T + plot_h), f(MARGIN_L + plot_w), f(MARGIN_T + plot_h)
    ));
    svg.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        f(MARGIN_L), f(MARGIN_T), f(MARGIN_L), f(MARGIN_T + plot_h)
    ));

    // x ticks every 4 dB, y ticks at integers
    let mut x = x_min;
    while x <= x_max + 1e-9 {
        svg.push_str(&format!(
            "<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"black\"/>\n<text x=\"{0}\" y=\"{3}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{4}</text>\n",
            f(sx(x)), f(MARGIN_T + plot_h), f(MARGIN_T + plot_h + 5.0), f(MARGIN_T + plot_h + 20.0), f(x)
        ));
        x += 4.0;
    }
    let mut y = 0.0;
    while y <= y_max + 1e-9 {
        svg.push_str(&format!(
            "<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"black\"/>\n<text x=\"{3}\" y=\"{4}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{5}</text>\n",
            f(MARGIN_L - 5.0), f(sy(y)), f(MARGIN_L), f(MARGIN_L - 9.0), f(sy(y) + 4.0), f(y)
        ));
        y += 1.0;
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">PSR (dB)</text>\n",
        f(MARGIN_L + plot_w / 2.0), f(HEIGHT - 12.0)
    ));

    // clean baseline
    if let Some(clean) = rows.iter().find(|r| r.method.is_none()) {
        svg.push_str(&format!(
            "<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"#777777\" stroke-dasharray=\"6,4\"/>\n",
            f(MARGIN_L), f(sy(clean.mean_inefficiency)), f(MARGIN_L + plot_w)
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#777777\">clean</text>\n",
            f(MARGIN_L + plot_w + 8.0), f(sy(clean.mean_inefficiency) + 4.0)
        ));
    }

    // one polyline per method, points in PSR order
    let mut methods: Vec<AttackMethod> = Vec::new();
    for row in rows {
        if let Some(m) = row.method {
            if !methods.contains(&m) {
                methods.push(m);
            }
        }
    }
    for (mi, method) in methods.iter().enumerate() {
        let mut points: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| r.method == Some(*method))
            .filter_map(|r| r.psr_db.map(|p| (p, r.mean_inefficiency)))
            .collect();
        points.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite PSR"));
        let path: Vec<String> = points.iter().map(|(x, y)| format!("{},{}", f(sx(*x)), f(sy(*y)))).collect();
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"2\" points=\"{}\"/>\n",
            color(*method),
            path.join(" ")
        ));
        for (x, y) in &points {
            svg.push_str(&format!(
                "<circle cx=\"{}\" cy=\"{}\" r=\"3\" fill=\"{}\"/>\n",
                f(sx(*x)), f(sy(*y)), color(*method)
            ));
        }
        // legend
        let ly = MARGIN_T + 14.0 + 18.0 * mi as f64;
        svg.push_str(&format!(
            "<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"{3}\" stroke-width=\"2\"/>\n<text x=\"{4}\" y=\"{5}\" font-family=\"sans-serif\" font-size=\"12\">{6}</text>\n",
            f(MARGIN_L + plot_w + 8.0), f(ly), f(MARGIN_L + plot_w + 28.0), color(*method),
            f(MARGIN_L + plot_w + 34.0), f(ly + 4.0), method.name()
        ));
    }

    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chart_has_one_polyline_per_method_and_full_x_range() {
        let mut rows = vec![SweepRow {
            method: None,
            psr_db: None,
            mean_inefficiency: 1.0,
            coverage: 0.9,
            tpr: None,
            fpr: Some(0.1),
            n_segments: 5,
        }];
        for method in [AttackMethod::Fgsm, AttackMethod::Pgd, AttackMethod::Cw] {
            for psr in [-20.0, -10.0, 0.0] {
                rows.push(SweepRow {
                    method: Some(method),
                    psr_db: Some(psr),
                    mean_inefficiency: 2.0 + psr / 10.0,
                    coverage: 0.5,
                    tpr: Some(0.8),
                    fpr: None,
                    n_segments: 5,
                });
            }
        }
        let svg = sweep_chart(&rows);
        assert_eq!(svg.matches("<polyline").count(), 3);
        assert!(svg.contains("-20"));
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
    }
}
