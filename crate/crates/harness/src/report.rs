//! SVG plots and a markdown summary from a records CSV.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::records::{read_records, summarize, SummaryRow};

const WIDTH: f64 = 820.0;
const HEIGHT: f64 = 520.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 230.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2",
];

#[derive(Debug, Clone)]
pub struct ReportFiles {
    pub svg: PathBuf,
    pub markdown: PathBuf,
}

struct Curve {
    n_tr: usize,
    n_cal: usize,
    /// Sorted by 1 − α.
    rows: Vec<SummaryRow>,
}

fn curves(rows: &[SummaryRow]) -> Vec<Curve> {
    let mut out: Vec<Curve> = Vec::new();
    for r in rows {
        match out.iter_mut().find(|c| c.n_tr == r.n_tr && c.n_cal == r.n_cal) {
            Some(c) => c.rows.push(r.clone()),
            None => out.push(Curve {
                n_tr: r.n_tr,
                n_cal: r.n_cal,
                rows: vec![r.clone()],
            }),
        }
    }
    for c in &mut out {
        c.rows.sort_by(|a, b| b.alpha.total_cmp(&a.alpha));
    }
    out.sort_by_key(|c| (c.n_tr, c.n_cal));
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Normalized set size and the bound against 1 − α: one colour per
/// `(n_tr, n_cal)`, empirical means with ±1 SE bars, bounds dashed.
pub fn render_svg(rows: &[SummaryRow], title: &str) -> String {
    let cs = curves(rows);
    let xs: Vec<f64> = rows.iter().map(|r| 1.0 - r.alpha).collect();
    let (mut x0, mut x1) = xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    if x1 - x0 < 1e-9 {
        x0 -= 0.05;
        x1 += 0.05;
    }
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + (1.0 - y.clamp(0.0, 1.0)) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        LEFT + pw / 2.0,
        escape(title)
    );
    // Axes and grid.
    for i in 0..=5 {
        let y = i as f64 / 5.0;
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT:.1}" y1="{0:.1}" x2="{1:.1}" y2="{0:.1}" stroke="#ddd"/><text x="{2:.1}" y="{3:.1}" text-anchor="end">{y:.1}</text>"##,
            sy(y),
            LEFT + pw,
            LEFT - 6.0,
            sy(y) + 4.0
        );
    }
    for i in 0..=5 {
        let x = x0 + (x1 - x0) * i as f64 / 5.0;
        let _ = writeln!(
            s,
            r##"<line x1="{0:.1}" y1="{1:.1}" x2="{0:.1}" y2="{2:.1}" stroke="#ddd"/><text x="{0:.1}" y="{3:.1}" text-anchor="middle">{x:.3}</text>"##,
            sx(x),
            TOP,
            TOP + ph,
            TOP + ph + 18.0
        );
    }
    let _ = writeln!(
        s,
        r##"<rect x="{LEFT:.1}" y="{TOP:.1}" width="{pw:.1}" height="{ph:.1}" fill="none" stroke="#333"/>"##
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">1 − α</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 15.0
    );
    let _ = writeln!(
        s,
        r#"<text transform="translate(18 {:.1}) rotate(-90)" text-anchor="middle">normalized set size</text>"#,
        TOP + ph / 2.0
    );

    for (i, c) in cs.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let pts = |f: fn(&SummaryRow) -> f64| {
            c.rows
                .iter()
                .map(|r| format!("{:.2},{:.2}", sx(1.0 - r.alpha), sy(f(r))))
                .collect::<Vec<_>>()
                .join(" ")
        };
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="1.8"/>"#,
            pts(|r| r.mean_size_norm)
        );
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="1.4" stroke-dasharray="6 4"/>"#,
            pts(|r| r.bound_thm1)
        );
        for r in &c.rows {
            let x = sx(1.0 - r.alpha);
            let _ = writeln!(
                s,
                r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="{colour}"/><circle cx="{x:.2}" cy="{:.2}" r="2.5" fill="{colour}"/>"#,
                sy(r.mean_size_norm - r.size_se),
                sy(r.mean_size_norm + r.size_se),
                sy(r.mean_size_norm)
            );
        }
        let ly = TOP + 10.0 + 36.0 * i as f64;
        let lx = WIDTH - RIGHT + 20.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{colour}" stroke-width="1.8"/><text x="{:.1}" y="{:.1}">n_tr={} n_cal={}</text>"#,
            lx + 24.0,
            lx + 30.0,
            ly + 4.0,
            c.n_tr,
            c.n_cal
        );
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="{colour}" stroke-dasharray="6 4"/><text x="{:.1}" y="{:.1}">bound</text>"#,
            ly + 16.0,
            lx + 24.0,
            ly + 16.0,
            lx + 30.0,
            ly + 20.0
        );
    }
    s.push_str("</svg>\n");
    s
}

pub fn render_markdown(rows: &[SummaryRow], title: &str) -> String {
    let mut s = format!("# {title}\n\n");
    s.push_str("| n_tr | n_cal | alpha | trials | coverage | size | bound (thm1) | bound (closed form) | bound (doubly empirical) | clamped |\n");
    s.push_str("|---:|---:|---:|---:|---|---|---:|---:|---:|---:|\n");
    for r in rows {
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} | {:.4} ± {:.4} | {:.4} ± {:.4} | {:.4} | {:.4} | {:.4} | {:.2} |",
            r.n_tr,
            r.n_cal,
            r.alpha,
            r.n_trials,
            r.coverage,
            r.coverage_se,
            r.mean_size_norm,
            r.size_se,
            r.bound_thm1,
            r.bound_cls_or_reg,
            r.bound_cor1,
            r.clamped_fraction
        );
    }
    s
}

/// Reads `records`, writes `<stem>.svg` and `<stem>.md` into `out_dir`.
pub fn render_report(records: &Path, out_dir: &Path, title: &str) -> Result<ReportFiles> {
    if fs::metadata(records)?.len() == 0 {
        return Err(Error::Report(format!("{} is empty", records.display())));
    }
    let recs = read_records(records)?;
    if recs.is_empty() {
        return Err(Error::Report(format!("{} has no records", records.display())));
    }
    let rows = summarize(&recs);
    fs::create_dir_all(out_dir)?;
    let stem = records.file_stem().and_then(|s| s.to_str()).unwrap_or("records");
    let svg = out_dir.join(format!("{stem}.svg"));
    let markdown = out_dir.join(format!("{stem}.md"));
    fs::write(&svg, render_svg(&rows, title))?;
    fs::write(&markdown, render_markdown(&rows, title))?;
    Ok(ReportFiles { svg, markdown })
}
