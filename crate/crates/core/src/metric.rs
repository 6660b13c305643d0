//! Growth-rate comparison between two runs of the same scenario.
//!
//! Two runs agree when, for every aligned time in `[t_start, t_end]` and
//! every selected quantity and mode, the relative difference of their growth
//! rates stays strictly below `thr`.

use std::cmp::Ordering;
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::timeseries::{extract_window, write_extract, MacroscopicSeries, Quantity, TimeseriesError};

/// Default threshold: runs may differ by less than one percent.
pub const DEFAULT_THRESHOLD: f64 = 0.01;
pub const DEFAULT_TIME_MATCH_TOL: f64 = 1e-9;
/// Violations listed by [`render_report`] before truncation.
pub const MAX_LISTED_VIOLATIONS: usize = 10;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("invalid metric spec: {0}")]
    InvalidSpec(String),
    #[error("no aligned time falls inside the comparison window")]
    EmptyWindow,
    #[error("mode {0} requested by the metric is missing from a series")]
    SpecModeMissing(u32),
    #[error(transparent)]
    Timeseries(#[from] TimeseriesError),
}

/// `2|a - b| / (|a| + |b|)`, in `[0, 2]`, with `(0, 0) -> 0`.
///
/// Both arguments are divided by the larger magnitude first so that the sum
/// in the denominator cannot overflow.
pub fn relative_difference(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        return 0.0;
    }
    if scale.is_infinite() {
        return if a == b { 0.0 } else { f64::NAN };
    }
    let (a, b) = (a / scale, b / scale);
    2.0 * ((a - b).abs() / (a.abs() + b.abs()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricSpec {
    pub t_start: f64,
    pub t_end: f64,
    pub thr: f64,
    pub quantities: Vec<Quantity>,
    pub modes: Vec<u32>,
    /// Relative tolerance for matching the time grids of two runs.
    pub time_match_tol: f64,
}

impl MetricSpec {
    pub fn new(
        t_start: f64,
        t_end: f64,
        thr: f64,
        quantities: Vec<Quantity>,
        modes: Vec<u32>,
    ) -> Result<Self, MetricError> {
        let spec = MetricSpec {
            t_start,
            t_end,
            thr,
            quantities,
            modes,
            time_match_tol: DEFAULT_TIME_MATCH_TOL,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), MetricError> {
        let bad = |msg: &str| Err(MetricError::InvalidSpec(msg.to_string()));
        if !(self.t_start < self.t_end) {
            return bad("t_start must be below t_end");
        }
        if !(self.thr > 0.0 && self.thr <= 2.0) {
            return bad("thr must lie in (0, 2]");
        }
        if self.modes.is_empty() {
            return bad("at least one mode is required");
        }
        if self.quantities.is_empty() {
            return bad("at least one quantity is required");
        }
        if !(self.time_match_tol >= 0.0) {
            return bad("time_match_tol must be nonnegative");
        }
        Ok(())
    }

    pub fn contains(&self, t: f64) -> bool {
        self.t_start <= t && t <= self.t_end
    }

    pub fn with_threshold(&self, thr: f64) -> Result<Self, MetricError> {
        let spec = MetricSpec { thr, ..self.clone() };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_window(&self, t_start: f64, t_end: f64) -> Result<Self, MetricError> {
        let spec = MetricSpec {
            t_start,
            t_end,
            ..self.clone()
        };
        spec.validate()?;
        Ok(spec)
    }

    fn times_match(&self, ta: f64, tb: f64) -> bool {
        (ta - tb).abs() <= self.time_match_tol * ta.abs().max(1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Ok,
    Fail,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Ok => "OK",
            Verdict::Fail => "FAIL",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    /// Relative difference at or above the threshold.
    Threshold,
    /// NaN or infinite growth rate in either run.
    NonFinite,
    /// Growth rate present in one run only.
    Missing,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub time: f64,
    pub quantity: Quantity,
    pub mode: u32,
    pub s_a: Option<f64>,
    pub s_b: Option<f64>,
    /// Infinite for [`ViolationKind::NonFinite`] and [`ViolationKind::Missing`].
    pub relative_difference: f64,
    pub kind: ViolationKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub verdict: Verdict,
    pub compared_lines: usize,
    pub total_lines: usize,
    pub violations: Vec<Violation>,
    pub max_relative_difference: f64,
    /// Number of growth-rate columns per extract (quantities x modes).
    pub columns: usize,
    pub extract_paths: (PathBuf, PathBuf),
}

/// Compares run `b` against reference `a`.
///
/// `total_lines` counts the times of `a` inside the window; `compared_lines`
/// those that have a partner in `b`. A run that is still in progress thus
/// reports `compared < total` without failing.
pub fn compare(
    a: &MacroscopicSeries,
    b: &MacroscopicSeries,
    spec: &MetricSpec,
) -> Result<ComparisonReport, MetricError> {
    spec.validate()?;
    let mut mode_pairs = Vec::with_capacity(spec.modes.len());
    for &mode in &spec.modes {
        let ka = a.mode_index(mode).ok_or(MetricError::SpecModeMissing(mode))?;
        let kb = b.mode_index(mode).ok_or(MetricError::SpecModeMissing(mode))?;
        mode_pairs.push((mode, ka, kb));
    }

    let mut total = 0;
    let mut compared = 0;
    let mut max_rd: f64 = 0.0;
    let mut violations = Vec::new();

    for (i, &ta) in a.times.iter().enumerate() {
        if !spec.contains(ta) {
            continue;
        }
        total += 1;
        let Some(j) = match_time(&b.times, ta, spec) else {
            continue;
        };
        compared += 1;
        for &quantity in &spec.quantities {
            for &(mode, ka, kb) in &mode_pairs {
                let s_a = a.growth(quantity)[i][ka];
                let s_b = b.growth(quantity)[j][kb];
                let violation = |kind, rd| Violation {
                    time: ta,
                    quantity,
                    mode,
                    s_a,
                    s_b,
                    relative_difference: rd,
                    kind,
                };
                match (s_a, s_b) {
                    (None, None) => {}
                    (Some(_), None) | (None, Some(_)) => {
                        violations.push(violation(ViolationKind::Missing, f64::INFINITY))
                    }
                    (Some(x), Some(y)) if !x.is_finite() || !y.is_finite() => {
                        violations.push(violation(ViolationKind::NonFinite, f64::INFINITY))
                    }
                    (Some(x), Some(y)) => {
                        let rd = relative_difference(x, y);
                        max_rd = max_rd.max(rd);
                        if !(rd < spec.thr) {
                            violations.push(violation(ViolationKind::Threshold, rd));
                        }
                    }
                }
            }
        }
    }

    if compared == 0 {
        return Err(MetricError::EmptyWindow);
    }
    violations.sort_by(|x, y| {
        x.time
            .partial_cmp(&y.time)
            .unwrap_or(Ordering::Equal)
            .then(x.quantity.cmp(&y.quantity))
            .then(x.mode.cmp(&y.mode))
    });
    Ok(ComparisonReport {
        verdict: if violations.is_empty() {
            Verdict::Ok
        } else {
            Verdict::Fail
        },
        compared_lines: compared,
        total_lines: total,
        violations,
        max_relative_difference: max_rd,
        columns: spec.quantities.len() * spec.modes.len(),
        extract_paths: (PathBuf::from("f1"), PathBuf::from("f2")),
    })
}

/// Index of the time in sorted `times` matching `t` within the metric tolerance.
fn match_time(times: &[f64], t: f64, spec: &MetricSpec) -> Option<usize> {
    let pos = times.partition_point(|&x| x < t);
    [pos.checked_sub(1), Some(pos)]
        .into_iter()
        .flatten()
        .filter(|&j| j < times.len() && spec.times_match(t, times[j]))
        .min_by(|&x, &y| {
            (times[x] - t)
                .abs()
                .partial_cmp(&(times[y] - t).abs())
                .unwrap_or(Ordering::Equal)
        })
}

/// [`compare`], then writes the in-window growth rates of `a` and `b` to the
/// two extract files referenced by the report.
pub fn compare_and_extract(
    a: &MacroscopicSeries,
    b: &MacroscopicSeries,
    spec: &MetricSpec,
    extract_a: &Path,
    extract_b: &Path,
) -> Result<ComparisonReport, MetricError> {
    let mut report = compare(a, b, spec)?;
    write_extract(&extract_window(a, spec)?, extract_a)?;
    write_extract(&extract_window(b, spec)?, extract_b)?;
    report.extract_paths = (extract_a.to_path_buf(), extract_b.to_path_buf());
    Ok(report)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| x.to_string())
}

/// The verdict line, up to [`MAX_LISTED_VIOLATIONS`] violations, and the
/// gnuplot commands for viewing the two extracts.
pub fn render_report(report: &ComparisonReport) -> String {
    let mut out = String::new();
    let tag = match report.verdict {
        Verdict::Ok => "OK  ",
        Verdict::Fail => "FAIL ",
    };
    let _ = writeln!(
        out,
        "{tag}(nb lines compared: {}/{})",
        report.compared_lines, report.total_lines
    );
    for v in report.violations.iter().take(MAX_LISTED_VIOLATIONS) {
        let _ = writeln!(
            out,
            "t={} {} mode={} sA={} sB={} reldiff={}",
            v.time,
            v.quantity,
            v.mode,
            fmt_opt(v.s_a),
            fmt_opt(v.s_b),
            v.relative_difference
        );
    }
    if report.violations.len() > MAX_LISTED_VIOLATIONS {
        let _ = writeln!(
            out,
            "... {} more violations",
            report.violations.len() - MAX_LISTED_VIOLATIONS
        );
    }
    out.push('\n');
    out.push_str(&gnuplot_commands(
        &report.extract_paths.0,
        &report.extract_paths.1,
        report.columns,
    ));
    out
}

/// One `plot` line per growth-rate column; all but the last pause.
pub fn gnuplot_commands(f1: &Path, f2: &Path, columns: usize) -> String {
    let (f1, f2) = (f1.display(), f2.display());
    let mut out = String::from("# gnuplot commands to look at growth rates that have been compared :\n");
    out.push_str("    set key autotitle columnhead;\n");
    for k in 0..columns {
        let col = k + 2;
        let _ = write!(
            out,
            "    set auto; plot '{f1}' u 1:{col} ls {}, '{f2}' u 1:{col} ls {}",
            2 * k + 1,
            2 * k + 4
        );
        if k + 1 < columns {
            out.push_str("; pause -1");
        }
        out.push('\n');
    }
    out
}
