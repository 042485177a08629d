//! Result tables and charts.
//!
//! The CSV has one row per grid cell and variant:
//! `cell,value,recipient,variant,mean_f1,fold_1..fold_k,seed,error`.
//! Failed cells keep their rows with empty scores and the error message.
//! Numbers use shortest round-trip formatting, so reading the file back
//! gives the exact in-memory values.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{CliError, Result};
use crate::experiment::CellResult;
use crate::io::write_bytes;

#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub cell: String,
    pub value: usize,
    pub recipient: String,
    pub variant: String,
    pub mean_f1: Option<f64>,
    pub folds: Vec<f64>,
    pub seed: u64,
    pub error: String,
}

pub fn rows(results: &[CellResult]) -> Vec<ReportRow> {
    let mut out = Vec::new();
    for r in results {
        for s in &r.scores {
            out.push(ReportRow {
                cell: r.id.clone(),
                value: r.cell.value,
                recipient: format!("{:?}", r.cell.recipient),
                variant: s.arm.name().into(),
                mean_f1: (!s.fold_f1.is_empty()).then(|| s.mean()),
                folds: s.fold_f1.clone(),
                seed: r.cell.seed,
                error: r.error.clone().unwrap_or_default(),
            });
        }
    }
    out
}

pub fn to_csv(rows: &[ReportRow]) -> String {
    let folds = rows.iter().map(|r| r.folds.len()).max().unwrap_or(0);
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    let mut header: Vec<String> = ["cell", "value", "recipient", "variant", "mean_f1"].map(String::from).to_vec();
    header.extend((1..=folds).map(|k| format!("fold_{k}")));
    header.extend(["seed".into(), "error".into()]);
    w.write_record(&header).expect("in-memory write");
    for r in rows {
        let mut rec = vec![
            r.cell.clone(),
            r.value.to_string(),
            r.recipient.clone(),
            r.variant.clone(),
            r.mean_f1.map(|v| v.to_string()).unwrap_or_default(),
        ];
        rec.extend((0..folds).map(|k| r.folds.get(k).map(|v| v.to_string()).unwrap_or_default()));
        rec.extend([r.seed.to_string(), r.error.clone()]);
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}

pub fn write_csv(path: &Path, rows: &[ReportRow]) -> Result<()> {
    write_bytes(path, to_csv(rows).as_bytes())
}

pub fn read_csv(path: &Path) -> Result<Vec<ReportRow>> {
    let bad = |line: usize, message: String| CliError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut r = csv::Reader::from_path(path).map_err(|e| bad(0, e.to_string()))?;
    let header = r.headers().map_err(|e| bad(1, e.to_string()))?.clone();
    let fixed = ["cell", "value", "recipient", "variant", "mean_f1"];
    let folds = header.len().saturating_sub(fixed.len() + 2);
    if header.len() < fixed.len() + 2
        || header.iter().take(5).ne(fixed)
        || header.get(header.len() - 2) != Some("seed")
        || header.get(header.len() - 1) != Some("error")
    {
        return Err(bad(1, "not a results table header".into()));
    }
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| bad(line, e.to_string()))?;
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(line, format!("`{s}` is not a number")));
        let mean_f1 = match &rec[4] {
            "" => None,
            s => Some(num(s)?),
        };
        let fold_vals = (0..folds)
            .map(|k| &rec[5 + k])
            .filter(|s| !s.is_empty())
            .map(num)
            .collect::<Result<Vec<_>>>()?;
        out.push(ReportRow {
            cell: rec[0].into(),
            value: rec[1].parse().map_err(|_| bad(line, format!("`{}` is not a grid value", &rec[1])))?,
            recipient: rec[2].into(),
            variant: rec[3].into(),
            mean_f1,
            folds: fold_vals,
            seed: rec[5 + folds].parse().map_err(|_| bad(line, format!("`{}` is not a seed", &rec[5 + folds])))?,
            error: rec[6 + folds].into(),
        });
    }
    Ok(out)
}

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Line chart of mean F1 against the grid value, one series per variant
/// (and recipient, when both directions ran), averaged over seeds. Grid
/// values are spaced evenly so donor counts on a log-like ladder stay
/// readable.
pub fn to_svg(rows: &[ReportRow], x_label: &str) -> String {
    let mut xs: Vec<usize> = rows.iter().map(|r| r.value).collect();
    xs.sort_unstable();
    xs.dedup();
    let directions: std::collections::BTreeSet<&str> = rows.iter().map(|r| r.recipient.as_str()).collect();
    let mut series: BTreeMap<String, BTreeMap<usize, (f64, usize)>> = BTreeMap::new();
    for r in rows {
        let name = if directions.len() > 1 { format!("{} ({})", r.variant, r.recipient) } else { r.variant.clone() };
        let entry = series.entry(name).or_default();
        if let Some(m) = r.mean_f1 {
            let e = entry.entry(r.value).or_insert((0.0, 0));
            e.0 += m;
            e.1 += 1;
        }
    }
    let points: Vec<(String, Vec<(usize, f64)>)> = series
        .into_iter()
        .map(|(name, m)| (name, m.into_iter().map(|(x, (s, n))| (x, s / n as f64)).collect()))
        .collect();
    let values: Vec<f64> = points.iter().flat_map(|(_, p)| p.iter().map(|&(_, y)| y)).collect();
    let (mut lo, mut hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    let pad = ((hi - lo) * 0.1).max(0.005);
    let (lo, hi) = ((lo - pad).max(0.0), (hi + pad).min(1.0));

    let (w, h) = (640.0, 400.0);
    let (left, right, top, bottom) = (70.0, 150.0, 30.0, 50.0);
    let pw = w - left - right;
    let ph = h - top - bottom;
    let x_at = |x: usize| {
        let i = xs.iter().position(|&v| v == x).unwrap_or(0);
        if xs.len() == 1 {
            left + pw / 2.0
        } else {
            left + pw * i as f64 / (xs.len() - 1) as f64
        }
    };
    let y_at = |y: f64| top + ph * (1.0 - (y - lo) / (hi - lo).max(1e-12));

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for &x in &xs {
        let px = x_at(x);
        let _ = writeln!(
            s,
            r#"<line class="xtick" x1="{px:.2}" y1="{y0:.2}" x2="{px:.2}" y2="{y1:.2}" stroke="black"/>"#,
            y0 = top + ph,
            y1 = top + ph + 5.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle">{x}</text>"#,
            top + ph + 18.0
        );
    }
    for k in 0..=4 {
        let y = lo + (hi - lo) * k as f64 / 4.0;
        let py = y_at(y);
        let _ = writeln!(
            s,
            r##"<line class="ytick" x1="{:.2}" y1="{py:.2}" x2="{left}" y2="{py:.2}" stroke="black"/><line x1="{left}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="#ddd"/>"##,
            left - 5.0,
            left + pw
        );
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{y:.3}</text>"#, left - 8.0, py + 4.0);
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        left + pw / 2.0,
        h - 12.0,
        esc(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text transform="translate(18 {:.2}) rotate(-90)" text-anchor="middle">F1</text>"#,
        top + ph / 2.0
    );
    for (i, (name, pts)) in points.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", x_at(x), y_at(y))).collect();
        let _ = writeln!(
            s,
            r#"<polyline class="series" fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            path.join(" ")
        );
        for &(x, y) in pts {
            let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, x_at(x), y_at(y));
        }
        let ly = top + 10.0 + 18.0 * i as f64;
        let lx = left + pw + 15.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            esc(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

pub fn write_svg(path: &Path, rows: &[ReportRow], x_label: &str) -> Result<()> {
    write_bytes(path, to_svg(rows, x_label).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(value: usize, variant: &str, folds: Vec<f64>) -> ReportRow {
        ReportRow {
            cell: format!("n={value}/A"),
            value,
            recipient: "A".into(),
            variant: variant.into(),
            mean_f1: Some(folds.iter().sum::<f64>() / folds.len() as f64),
            folds,
            seed: 7,
            error: String::new(),
        }
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        let mut rows = vec![row(8, "baseline", vec![0.9, 1.0 / 3.0, 0.1 + 0.2]), row(8, "ae", vec![0.95, 0.5, 0.7])];
        rows.push(ReportRow {
            mean_f1: None,
            folds: vec![],
            error: "partition error: \"x\", y".into(),
            ..row(8, "vae", vec![1.0])
        });
        write_csv(&p, &rows).unwrap();
        assert_eq!(read_csv(&p).unwrap(), rows);
        assert_eq!(std::fs::read_to_string(&p).unwrap().lines().count(), 4);
    }

    #[test]
    fn svg_ticks_follow_grid() {
        let rows: Vec<ReportRow> = (1..=13)
            .flat_map(|k| ["baseline", "ae", "vae"].map(|v| row(2 * k, v, vec![0.9 + 0.001 * k as f64])))
            .collect();
        let svg = to_svg(&rows, "common columns");
        assert_eq!(svg.matches(r#"class="xtick""#).count(), 13);
        assert_eq!(svg.matches(r#"class="series""#).count(), 3);
        for k in 1..=13 {
            assert!(svg.contains(&format!(">{}</text>", 2 * k)));
        }
        assert!(!svg.contains("href"));
    }

    #[test]
    fn rejects_foreign_csv() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        std::fs::write(&p, "a,b\n1,2\n").unwrap();
        assert!(matches!(read_csv(&p), Err(CliError::Parse { line: 1, .. })));
    }
}
