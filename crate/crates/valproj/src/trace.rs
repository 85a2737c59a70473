//! Per-iteration run records and their CSV form.
//!
//! Every solver emits a [`RunTrace`]: one [`TraceRecord`] per recorded
//! iteration with reconstruction quality (when ground truth is known) and
//! projection diagnostics. The CSV encoding uses the shortest roundtrip
//! float representation, so `from_csv(to_csv(t)) == t` bit for bit; absent
//! optional metrics serialize as empty fields.

use std::path::Path;

use crate::error::{Error, Result};

pub const TRACE_HEADER: &str = "iter,wall_seconds,psnr,ssim,rel_meas_err,mu,outer_iters,residual_gap";

/// One recorded iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub iter: usize,
    /// Elapsed wall time since the start of the run. Informational only;
    /// determinism checks must ignore it.
    pub wall_seconds: f64,
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
    /// `||y - A x_k|| / ||y||` against the clean measurement.
    pub rel_meas_err: Option<f64>,
    /// Multiplier used at this iteration (projection's or RED's fixed one).
    pub mu: f64,
    /// Multiplier evaluations spent by the projection at this iteration.
    pub outer_iters: usize,
    /// `| ||A x_k - y_delta|| - delta | / delta` at this iterate.
    pub residual_gap: f64,
}

impl TraceRecord {
    fn validate(&self) -> Result<()> {
        let finite = self.wall_seconds.is_finite()
            && self.mu.is_finite()
            && self.residual_gap.is_finite()
            && [self.psnr, self.ssim, self.rel_meas_err]
                .iter()
                .all(|o| o.is_none_or(f64::is_finite));
        if !finite {
            return Err(Error::NonFinite {
                context: "trace record",
            });
        }
        Ok(())
    }
}

/// An append-only run history with strictly increasing iteration numbers.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunTrace {
    records: Vec<TraceRecord>,
}

impl RunTrace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, record: TraceRecord) -> Result<()> {
        record.validate()?;
        if let Some(last) = self.records.last() {
            if record.iter <= last.iter {
                return Err(Error::InvalidParameter {
                    name: "trace iter",
                    reason: format!(
                        "iterations must be strictly increasing: {} after {}",
                        record.iter, last.iter
                    ),
                });
            }
        }
        self.records.push(record);
        Ok(())
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    /// Record with the highest PSNR; `None` if no record carries one.
    pub fn best_by_psnr(&self) -> Option<&TraceRecord> {
        self.records
            .iter()
            .filter(|r| r.psnr.is_some())
            .max_by(|a, b| a.psnr.partial_cmp(&b.psnr).unwrap())
    }

    /// Record with the highest SSIM; `None` if no record carries one.
    pub fn best_by_ssim(&self) -> Option<&TraceRecord> {
        self.records
            .iter()
            .filter(|r| r.ssim.is_some())
            .max_by(|a, b| a.ssim.partial_cmp(&b.ssim).unwrap())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.records.len() + 1));
        out.push_str(TRACE_HEADER);
        out.push('\n');
        for r in &self.records {
            let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.iter,
                r.wall_seconds,
                opt(r.psnr),
                opt(r.ssim),
                opt(r.rel_meas_err),
                r.mu,
                r.outer_iters,
                r.residual_gap
            ));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h == TRACE_HEADER => {}
            other => {
                return Err(Error::Format {
                    format: "trace csv",
                    reason: format!("bad header: {other:?}"),
                });
            }
        }
        let field_err = |line_no: usize, what: &str| Error::Format {
            format: "trace csv",
            reason: format!("line {line_no}: {what}"),
        };
        let mut trace = RunTrace::new();
        for (idx, line) in lines.enumerate() {
            let line_no = idx + 2;
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 8 {
                return Err(field_err(line_no, "expected 8 fields"));
            }
            let req = |s: &str, what: &str| -> Result<f64> {
                s.parse().map_err(|_| field_err(line_no, what))
            };
            let opt = |s: &str, what: &str| -> Result<Option<f64>> {
                if s.is_empty() {
                    Ok(None)
                } else {
                    req(s, what).map(Some)
                }
            };
            let record = TraceRecord {
                iter: fields[0]
                    .parse()
                    .map_err(|_| field_err(line_no, "bad iter"))?,
                wall_seconds: req(fields[1], "bad wall_seconds")?,
                psnr: opt(fields[2], "bad psnr")?,
                ssim: opt(fields[3], "bad ssim")?,
                rel_meas_err: opt(fields[4], "bad rel_meas_err")?,
                mu: req(fields[5], "bad mu")?,
                outer_iters: fields[6]
                    .parse()
                    .map_err(|_| field_err(line_no, "bad outer_iters"))?,
                residual_gap: req(fields[7], "bad residual_gap")?,
            };
            trace.push(record)?;
        }
        Ok(trace)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text).map_err(|e| match e {
            Error::Format { format, reason } => Error::Format {
                format,
                reason: format!("{}: {reason}", path.display()),
            },
            other => other,
        })
    }
}
