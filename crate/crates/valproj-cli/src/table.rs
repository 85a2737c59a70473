//! Side-by-side comparison of recorded run traces.

use std::path::{Path, PathBuf};

use valproj::trace::{RunTrace, TraceRecord};

use crate::run::CliError;

struct Row {
    trace: String,
    row: &'static str,
    iter: usize,
    psnr: String,
    ssim: String,
    rel_meas_err: String,
}

fn fmt_opt(v: Option<f64>, prec: usize) -> String {
    match v {
        Some(v) => format!("{v:.prec$}"),
        None => "-".into(),
    }
}

fn row(trace: &str, label: &'static str, rec: &TraceRecord) -> Row {
    Row {
        trace: trace.to_string(),
        row: label,
        iter: rec.iter,
        psnr: fmt_opt(rec.psnr, 2),
        ssim: fmt_opt(rec.ssim, 4),
        rel_meas_err: fmt_opt(rec.rel_meas_err, 6),
    }
}

fn load_trace(path: &Path) -> Result<RunTrace, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    let trace = RunTrace::from_csv(&text)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    if trace.is_empty() {
        return Err(CliError::Input(format!(
            "{}: trace has no records",
            path.display()
        )));
    }
    Ok(trace)
}

/// Best-PSNR, best-SSIM, and final rows for each trace file. Returns the
/// aligned text table and its CSV form.
pub fn compare_table(paths: &[PathBuf]) -> Result<(String, String), CliError> {
    if paths.is_empty() {
        return Err(CliError::Input("compare needs at least one trace".into()));
    }
    let mut rows = Vec::new();
    for path in paths {
        let trace = load_trace(path)?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        let best_psnr = trace.best_by_psnr().ok_or_else(|| {
            CliError::Input(format!("{}: no PSNR values to rank", path.display()))
        })?;
        rows.push(row(&name, "best-psnr", best_psnr));
        if let Some(best_ssim) = trace.best_by_ssim() {
            rows.push(row(&name, "best-ssim", best_ssim));
        }
        let last = trace.last().expect("non-empty trace has a last record");
        rows.push(row(&name, "last", last));
    }

    const HEADERS: [&str; 6] = ["trace", "row", "iter", "psnr", "ssim", "rel_meas_err"];
    let cells: Vec<[String; 6]> = rows
        .iter()
        .map(|r| {
            [
                r.trace.clone(),
                r.row.to_string(),
                r.iter.to_string(),
                r.psnr.clone(),
                r.ssim.clone(),
                r.rel_meas_err.clone(),
            ]
        })
        .collect();
    let mut widths: Vec<usize> = HEADERS.iter().map(|h| h.len()).collect();
    for row in &cells {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }

    let mut text = String::new();
    let fmt_line = |cols: &[&str], widths: &[usize]| -> String {
        let mut line = String::new();
        for (i, (c, w)) in cols.iter().zip(widths).enumerate() {
            if i > 0 {
                line.push_str("  ");
            }
            line.push_str(&format!("{c:<w$}"));
        }
        line.trim_end().to_string()
    };
    text.push_str(&fmt_line(&HEADERS, &widths));
    text.push('\n');
    for row in &cells {
        let cols: Vec<&str> = row.iter().map(String::as_str).collect();
        text.push_str(&fmt_line(&cols, &widths));
        text.push('\n');
    }

    let mut csv = HEADERS.join(",");
    csv.push('\n');
    for row in &cells {
        csv.push_str(&row.join(","));
        csv.push('\n');
    }
    Ok((text, csv))
}
