//! Atomic file output: monitor CSV, plain-text report and SVG line plots.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::monitors::MonitorSample;

/// Column order of `monitors.csv`.
pub const MONITOR_COLUMNS: [&str; 18] = [
    "t",
    "osc_theta",
    "theta_dot_sup",
    "theta_dot_inf",
    "tau_max",
    "vartheta_max",
    "rho_max",
    "bigtheta_max",
    "upsilon_max",
    "q_max",
    "branch_residual",
    "lambda_max",
    "hessian_eigen_product_max",
    "res_theta",
    "res_tau",
    "res_vartheta",
    "res_rho",
    "res_bigtheta",
];

/// Writes to a sibling temp file, then renames over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp_name = path.file_name().unwrap_or_default().to_owned();
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Shortest round-trip representation.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:e}")
}

/// Generic numeric table with a header row.
pub fn table_csv(header: &[&str], rows: &[Vec<Option<f64>>]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r.iter().map(|x| x.map(fmt_f64).unwrap_or_default()))?;
    }
    w.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))
}

pub fn sample_row(s: &MonitorSample) -> Vec<Option<f64>> {
    let mut row: Vec<Option<f64>> = [
        s.t,
        s.osc_theta,
        s.theta_dot_sup,
        s.theta_dot_inf,
        s.tau_max,
        s.vartheta_max,
        s.rho_max,
        s.bigtheta_max,
        s.upsilon_max,
        s.q_max,
        s.branch_residual,
        s.lambda_max,
        s.eigen_product_max,
    ]
    .into_iter()
    .map(Some)
    .collect();
    row.extend(s.residuals.as_array());
    row
}

pub fn monitors_csv(samples: &[MonitorSample]) -> Result<Vec<u8>> {
    if samples.is_empty() {
        return Err(Error::NoSamples);
    }
    let rows: Vec<_> = samples.iter().map(sample_row).collect();
    table_csv(&MONITOR_COLUMNS, &rows)
}

/// One curve of a plot.
pub struct Series<'a> {
    pub label: &'a str,
    pub points: Vec<(f64, f64)>,
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Static SVG polyline plot. With `log_y`, non-positive values are dropped.
pub fn svg_plot(title: &str, xlabel: &str, ylabel: &str, series: &[Series<'_>], log_y: bool) -> String {
    let (w, h, ml, mr, mt, mb) = (640.0, 400.0, 70.0, 20.0, 40.0, 50.0);
    let tf = |y: f64| if log_y { y.log10() } else { y };
    let pts: Vec<Vec<(f64, f64)>> = series
        .iter()
        .map(|s| {
            s.points
                .iter()
                .filter(|(x, y)| x.is_finite() && y.is_finite() && (!log_y || *y > 0.0))
                .map(|&(x, y)| (x, tf(y)))
                .collect()
        })
        .collect();
    let all = pts.iter().flatten();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        let pad = if y0 == 0.0 { 1.0 } else { y0.abs() * 0.1 };
        y0 -= pad;
        y1 += pad;
    }
    let px = |x: f64| ml + (x - x0) / (x1 - x0) * (w - ml - mr);
    let py = |y: f64| h - mb - (y - y0) / (y1 - y0) * (h - mt - mb);
    let ylab = |y: f64| if log_y { format!("1e{y:.1}") } else { format!("{y:.3e}") };

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" font-size="16" text-anchor="middle">{}</text>"#, w / 2.0, escape(title));
    let _ = writeln!(
        s,
        r#"<rect x="{ml}" y="{mt}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        w - ml - mr,
        h - mt - mb
    );
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{}" font-size="11" text-anchor="middle">{:.3}</text>"#,
            px(xv),
            h - mb + 16.0,
            xv
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.1}" font-size="11" text-anchor="end">{}</text>"#,
            ml - 4.0,
            py(yv) + 4.0,
            ylab(yv)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="13" text-anchor="middle">{}</text>"#,
        (ml + w - mr) / 2.0,
        h - 10.0,
        escape(xlabel)
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" font-size="13" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        h / 2.0,
        h / 2.0,
        escape(ylabel)
    );
    for (k, (ser, p)) in series.iter().zip(&pts).enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let coords: Vec<String> = p.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            coords.join(" ")
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="11" fill="{color}">{}</text>"#,
            ml + 8.0,
            mt + 14.0 + 14.0 * k as f64,
            escape(ser.label)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Standard plots of one trajectory: `(file name, svg)`.
pub fn trajectory_plots(samples: &[MonitorSample]) -> Vec<(&'static str, String)> {
    let col = |f: fn(&MonitorSample) -> f64| samples.iter().map(|s| (s.t, f(s))).collect::<Vec<_>>();
    let one = |label, f| [Series { label, points: col(f) }];
    vec![
        ("osc_theta.svg", svg_plot("oscillation of theta", "t", "osc theta", &one("osc theta", |s| s.osc_theta), false)),
        (
            "log_osc_theta_dot.svg",
            svg_plot(
                "oscillation of theta dot (log scale)",
                "t",
                "log10 osc theta dot",
                &one("sup - inf theta dot", |s| s.theta_dot_sup - s.theta_dot_inf),
                true,
            ),
        ),
        ("rho.svg", svg_plot("rho = |D^2 u|^2", "t", "sup rho", &one("sup rho", |s| s.rho_max), false)),
        ("q.svg", svg_plot("Q = rho + K1 vartheta + K2 tau", "t", "sup Q", &one("sup Q", |s| s.q_max), false)),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_header_and_empty_residuals() {
        let s = MonitorSample {
            t: 0.5,
            rho_max: 1e-3,
            ..Default::default()
        };
        let text = String::from_utf8(monitors_csv(&[s]).unwrap()).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), MONITOR_COLUMNS.join(","));
        let row = lines.next().unwrap();
        assert!(row.starts_with("5e-1,0e0,"));
        assert!(row.ends_with(",,,,"));
    }

    #[test]
    fn empty_trajectory_is_an_error() {
        assert!(matches!(monitors_csv(&[]), Err(Error::NoSamples)));
    }

    #[test]
    fn atomic_write_replaces_contents() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub/a.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }

    #[test]
    fn svg_has_polyline_and_labels() {
        let svg = svg_plot(
            "t<1",
            "time",
            "value",
            &[Series {
                label: "a",
                points: vec![(0.0, 1.0), (1.0, 0.1), (2.0, 0.0)],
            }],
            true,
        );
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("<polyline"));
        assert!(svg.contains("t&lt;1"));
        assert!(svg.matches(',').count() >= 2);
    }
}
