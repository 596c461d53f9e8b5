use std::fmt::Write as _;
use std::io::Write;

use super::pr::{BenchSummary, PrCurve};
use crate::error::{Error, Result};

/// `threshold,tp_pred,n_pred,tp_gt,n_gt`, one row per threshold.
pub fn write_curve_csv(curve: &PrCurve, mut out: impl Write) -> Result<()> {
    writeln!(out, "threshold,tp_pred,n_pred,tp_gt,n_gt")?;
    for p in &curve.points {
        let c = p.counts;
        writeln!(out, "{:.2},{},{},{},{}", p.threshold, c.tp_pred, c.n_pred, c.tp_gt, c.n_gt)?;
    }
    Ok(())
}

/// `name,ODS,ODS_thr,OIS,AP`, one row per run in the given order.
pub fn write_summary_csv(runs: &[(String, BenchSummary)], mut out: impl Write) -> Result<()> {
    writeln!(out, "name,ODS,ODS_thr,OIS,AP")?;
    for (name, s) in runs {
        writeln!(
            out,
            "{},{:.6},{:.2},{:.6},{:.6}",
            name, s.ods_f, s.ods_threshold, s.ois_f, s.ap
        )?;
    }
    Ok(())
}

/// Markdown table of ODS/OIS/AP, rows in the given order.
pub fn ablation_report(runs: &[(String, BenchSummary)]) -> Result<String> {
    if runs.is_empty() {
        return Err(Error::InvalidArgument("ablation report needs at least one run".into()));
    }
    let mut s = String::from("| configuration | ODS | OIS | AP |\n|---|---|---|---|\n");
    for (name, r) in runs {
        writeln!(s, "| {} | {:.4} | {:.4} | {:.4} |", name, r.ods_f, r.ois_f, r.ap).expect("string write");
    }
    Ok(s)
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Precision-recall plot with F-measure iso-contours and one curve per run.
pub fn pr_svg(runs: &[(String, BenchSummary)]) -> String {
    let (size, pad) = (400.0, 40.0);
    let px = |r: f64| pad + r * size;
    let py = |p: f64| pad + (1.0 - p) * size;
    let mut s = String::new();
    let total = size + 2.0 * pad;
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{total}" height="{total}" viewBox="0 0 {total} {total}">"#
    )
    .expect("string write");
    writeln!(
        s,
        r#"<rect x="{pad}" y="{pad}" width="{size}" height="{size}" fill="white" stroke="black"/>"#
    )
    .expect("string write");
    for f in [0.2, 0.4, 0.6, 0.8] {
        // points with 2pr/(p+r) = f, r from f/2 to 1
        let mut d = String::new();
        for k in 0..=50 {
            let r = f / 2.0 + (1.0 - f / 2.0) * k as f64 / 50.0;
            let p = f * r / (2.0 * r - f);
            if (0.0..=1.0).contains(&p) {
                let cmd = if d.is_empty() { 'M' } else { 'L' };
                write!(d, "{cmd}{:.2},{:.2} ", px(r), py(p)).expect("string write");
            }
        }
        writeln!(s, r##"<path d="{}" fill="none" stroke="#8c8" stroke-width="0.8"/>"##, d.trim_end())
            .expect("string write");
    }
    for (k, (name, run)) in runs.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let mut d = String::new();
        for p in &run.dataset.points {
            let (pp, rr) = (p.counts.precision(), p.counts.recall());
            let cmd = if d.is_empty() { 'M' } else { 'L' };
            write!(d, "{cmd}{:.2},{:.2} ", px(rr), py(pp)).expect("string write");
        }
        writeln!(s, r#"<path d="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, d.trim_end())
            .expect("string write");
        writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-size="11" fill="{color}">{} [F={:.3}]</text>"#,
            pad + 8.0,
            pad + size - 10.0 - 14.0 * (runs.len() - 1 - k) as f64,
            escape(name),
            run.ods_f
        )
        .expect("string write");
    }
    writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="middle">Recall</text>"#,
        pad + size / 2.0,
        total - 10.0
    )
    .expect("string write");
    writeln!(
        s,
        r#"<text x="12" y="{:.1}" font-size="12" text-anchor="middle" transform="rotate(-90 12 {:.1})">Precision</text>"#,
        pad + size / 2.0,
        pad + size / 2.0
    )
    .expect("string write");
    s.push_str("</svg>\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
