//! Report emission: per-run forecast CSV + JSON summary, the cross-run
//! comparison table, and self-contained SVG error charts.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use kia_core::eval::{ForecastReport, KDayTable, MeanStd};

use crate::format::FormatError;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MeanStdJson {
    pub mean: f64,
    pub std: f64,
}

impl From<MeanStd> for MeanStdJson {
    fn from(m: MeanStd) -> Self {
        MeanStdJson {
            mean: m.mean,
            std: m.std,
        }
    }
}

/// JSON companion of the per-run report CSV.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Summary {
    pub model: String,
    pub label: String,
    pub seed: u64,
    pub noise_std: f64,
    pub horizon: usize,
    pub n_inits: usize,
    pub anchors: Vec<usize>,
    pub excluded: usize,
    pub all: MeanStdJson,
    pub first100: MeanStdJson,
    pub last100: MeanStdJson,
}

impl Summary {
    pub fn from_report(report: &ForecastReport) -> Self {
        Summary {
            model: report.meta.model.clone(),
            label: report.meta.label.clone(),
            seed: report.meta.seed,
            noise_std: report.meta.noise_std,
            horizon: report.horizon,
            n_inits: report.anchors.len(),
            anchors: report.anchors.clone(),
            excluded: report.excluded,
            all: report.all.into(),
            first100: report.first100.into(),
            last100: report.last100.into(),
        }
    }

    /// Three-column console table in the style of the pendulum results.
    pub fn console_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<12} {:<14} {:<18} {:<18} {:<18}\n",
            "Model", "Run", "All Value", "First 100", "Last 100"
        ));
        out.push_str(&format!(
            "{:<12} {:<14} {:<18} {:<18} {:<18}\n",
            self.model,
            self.label,
            format_mean_std(&self.all),
            format_mean_std(&self.first100),
            format_mean_std(&self.last100),
        ));
        out
    }
}

pub fn format_mean_std(m: &MeanStdJson) -> String {
    format!("{:.3}±{:.3}", m.mean, m.std)
}

/// One row per initial condition per step: init, anchor, step, error.
pub fn write_report_csv(report: &ForecastReport, path: &Path) -> Result<(), FormatError> {
    let mut out = String::from("init,anchor,step,error\n");
    for (i, series) in report.errors.iter().enumerate() {
        let anchor = report.anchors[i];
        for (l, e) in series.iter().enumerate() {
            out.push_str(&format!("{},{},{},{}\n", i, anchor, l + 1, e));
        }
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn write_summary_json(summary: &Summary, path: &Path) -> Result<(), FormatError> {
    let mut text = serde_json::to_string_pretty(summary)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_summary_json(path: &Path) -> Result<Summary, FormatError> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// K-day-ahead table as CSV: lead, mean Celsius MAE, evaluated days, skipped.
pub fn write_kday_csv(table: &KDayTable, path: &Path) -> Result<(), FormatError> {
    let mut out = String::from("lead_days,mean_mae,days,skipped\n");
    for entry in &table.entries {
        out.push_str(&format!(
            "{},{},{},{}\n",
            entry.lead, entry.mean_mae, entry.days, entry.skipped
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Combined comparison table: one row per run, mean±std per column.
pub fn write_comparison_csv(summaries: &[Summary], path: &Path) -> Result<(), FormatError> {
    let mut out = String::from("model,label,all,first100,last100\n");
    for s in summaries {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            s.model,
            s.label,
            format_mean_std(&s.all),
            format_mean_std(&s.first100),
            format_mean_std(&s.last100),
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Mean error per step parsed back from a report CSV.
pub fn read_mean_curve(path: &Path) -> Result<Vec<f64>, FormatError> {
    let text = fs::read_to_string(path)?;
    let mut sums: Vec<f64> = Vec::new();
    let mut counts: Vec<usize> = Vec::new();
    for line in text.lines().skip(1) {
        let mut fields = line.split(',');
        let (_init, _anchor) = (fields.next(), fields.next());
        let step: usize = match fields.next().and_then(|s| s.parse().ok()) {
            Some(s) => s,
            None => continue,
        };
        let error: f64 = match fields.next().and_then(|s| s.parse().ok()) {
            Some(e) => e,
            None => continue,
        };
        if sums.len() < step {
            sums.resize(step, 0.0);
            counts.resize(step, 0);
        }
        if error.is_finite() {
            sums[step - 1] += error;
            counts[step - 1] += 1;
        }
    }
    Ok(sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| if c > 0 { s / c as f64 } else { f64::NAN })
        .collect())
}

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

/// Self-contained SVG line chart of error-over-horizon curves, one polyline
/// per run, optionally with a log₁₀ vertical axis.
pub fn error_chart_svg(curves: &[(String, Vec<f64>)], log_scale: bool) -> String {
    let (width, height) = (800.0, 480.0);
    let (left, right, top, bottom) = (70.0, 20.0, 30.0, 50.0);
    let plot_w = width - left - right;
    let plot_h = height - top - bottom;

    let transform = |v: f64| -> f64 {
        if log_scale {
            v.max(1e-12).log10()
        } else {
            v
        }
    };
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    let mut x_max = 1usize;
    for (_, curve) in curves {
        x_max = x_max.max(curve.len());
        for &v in curve {
            if v.is_finite() {
                let t = transform(v);
                y_min = y_min.min(t);
                y_max = y_max.max(t);
            }
        }
    }
    if !y_min.is_finite() || !y_max.is_finite() {
        y_min = 0.0;
        y_max = 1.0;
    }
    if (y_max - y_min).abs() < 1e-12 {
        y_max = y_min + 1.0;
    }
    let pad = 0.05 * (y_max - y_min);
    y_min -= pad;
    y_max += pad;

    let x_of = |step: usize| left + step as f64 / x_max as f64 * plot_w;
    let y_of = |v: f64| top + (y_max - transform(v)) / (y_max - y_min) * plot_h;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {width} {height}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    ));
    svg.push_str(&format!(
        "<rect x=\"0\" y=\"0\" width=\"{width}\" height=\"{height}\" fill=\"white\"/>\n"
    ));
    // axes
    svg.push_str(&format!(
        "<line x1=\"{left}\" y1=\"{top}\" x2=\"{left}\" y2=\"{}\" stroke=\"black\"/>\n",
        top + plot_h
    ));
    svg.push_str(&format!(
        "<line x1=\"{left}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        top + plot_h,
        left + plot_w,
        top + plot_h
    ));
    // horizontal ticks
    for i in 0..=4 {
        let frac = i as f64 / 4.0;
        let y = top + plot_h - frac * plot_h;
        let value = y_min + frac * (y_max - y_min);
        let label = if log_scale {
            format!("1e{value:.1}")
        } else {
            format!("{value:.3}")
        };
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{y}\" x2=\"{left}\" y2=\"{y}\" stroke=\"black\"/>\n",
            left - 4.0
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{label}</text>\n",
            left - 8.0,
            y + 4.0
        ));
    }
    for i in 0..=4 {
        let frac = i as f64 / 4.0;
        let x = left + frac * plot_w;
        let step = (frac * x_max as f64).round() as usize;
        svg.push_str(&format!(
            "<line x1=\"{x}\" y1=\"{}\" x2=\"{x}\" y2=\"{}\" stroke=\"black\"/>\n",
            top + plot_h,
            top + plot_h + 4.0
        ));
        svg.push_str(&format!(
            "<text x=\"{x}\" y=\"{}\" text-anchor=\"middle\">{step}</text>\n",
            top + plot_h + 18.0
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">prediction step</text>\n",
        left + plot_w / 2.0,
        height - 12.0
    ));
    svg.push_str(&format!(
        "<text x=\"16\" y=\"{}\" transform=\"rotate(-90 16 {})\" text-anchor=\"middle\">{}error</text>\n",
        top + plot_h / 2.0,
        top + plot_h / 2.0,
        if log_scale { "log " } else { "" }
    ));

    for (c, (name, curve)) in curves.iter().enumerate() {
        let color = PALETTE[c % PALETTE.len()];
        // NaN gaps split the curve into separate polylines
        let mut segments: Vec<Vec<(f64, f64)>> = vec![Vec::new()];
        for (i, &v) in curve.iter().enumerate() {
            if v.is_finite() {
                segments
                    .last_mut()
                    .expect("nonempty")
                    .push((x_of(i + 1), y_of(v)));
            } else if !segments.last().expect("nonempty").is_empty() {
                segments.push(Vec::new());
            }
        }
        for segment in segments.iter().filter(|s| s.len() > 1) {
            let points: Vec<String> = segment
                .iter()
                .map(|(x, y)| format!("{x:.2},{y:.2}"))
                .collect();
            svg.push_str(&format!(
                "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
                points.join(" ")
            ));
        }
        let ly = top + 16.0 + 16.0 * c as f64;
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
            left + plot_w - 150.0,
            left + plot_w - 120.0
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\">{name}</text>\n",
            left + plot_w - 112.0,
            ly + 4.0
        ));
    }
    svg.push_str("</svg>\n");
    svg
}
