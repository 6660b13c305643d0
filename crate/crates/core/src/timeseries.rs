//! Macroscopic-variables time series: per-mode magnetic and kinetic energies
//! and their growth rates, as written by the simulation at every time step.
//!
//! The canonical on-disk layout is whitespace-separated columns:
//! time, then `M` magnetic energies, `M` kinetic energies, `M` magnetic
//! growth rates and `M` kinetic growth rates. Other orderings are described
//! with a [`ColumnLayout`]. An absent growth rate (first record of a derived
//! series) is written as `-`.

use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::kv::{Document, KvError};
use crate::metric::MetricSpec;
use crate::numfmt::{format_real, parse_real};

/// Token used in data files for a growth rate that is not defined.
pub const ABSENT: &str = "-";

#[derive(Debug, Error)]
pub enum TimeseriesError {
    #[error("file not found: {0}")]
    MissingFile(PathBuf),
    #[error("I/O failure on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {0}: malformed row")]
    MalformedRow(usize),
    #[error("line {0}: time is not strictly increasing")]
    NonMonotonicTime(usize),
    #[error("line {0}: unexpected number of columns")]
    ColumnCountMismatch(usize),
    #[error("line {0}: negative energy, or zero energy after the first record")]
    InvalidEnergy(usize),
    #[error("invalid column layout: {0}")]
    Layout(String),
    #[error("nonpositive {quantity} energy at t={time} for mode {mode}")]
    NonpositiveEnergy {
        time: f64,
        mode: u32,
        quantity: Quantity,
    },
    #[error("zero-length time step at record {0}")]
    DegenerateStep(usize),
    #[error("no sample falls inside the comparison window")]
    EmptyWindow,
    #[error("mode {0} is not present in the series")]
    UnknownMode(u32),
    #[error("windows do not share a common time grid")]
    TimeGridMismatch,
}

impl From<KvError> for TimeseriesError {
    fn from(e: KvError) -> Self {
        TimeseriesError::Layout(e.to_string())
    }
}

fn io_err(path: &Path, source: std::io::Error) -> TimeseriesError {
    if source.kind() == std::io::ErrorKind::NotFound {
        TimeseriesError::MissingFile(path.to_path_buf())
    } else {
        TimeseriesError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Quantity {
    Magnetic,
    Kinetic,
}

impl Quantity {
    pub const ALL: [Quantity; 2] = [Quantity::Magnetic, Quantity::Kinetic];

    pub fn as_str(self) -> &'static str {
        match self {
            Quantity::Magnetic => "magnetic",
            Quantity::Kinetic => "kinetic",
        }
    }
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Quantity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "magnetic" => Ok(Quantity::Magnetic),
            "kinetic" => Ok(Quantity::Kinetic),
            other => Err(format!("unknown quantity `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GrowthProvenance {
    /// Growth rates were read from the file.
    File,
    /// Growth rates were reconstructed from energies.
    Derived,
}

/// The per-time-step signature of a simulation run.
#[derive(Debug, Clone, PartialEq)]
pub struct MacroscopicSeries {
    pub times: Vec<f64>,
    pub modes: Vec<u32>,
    pub magnetic_energy: Vec<Vec<f64>>,
    pub kinetic_energy: Vec<Vec<f64>>,
    pub magnetic_growth: Vec<Vec<Option<f64>>>,
    pub kinetic_growth: Vec<Vec<Option<f64>>>,
    pub growth_provenance: GrowthProvenance,
}

impl MacroscopicSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn mode_index(&self, mode: u32) -> Option<usize> {
        self.modes.iter().position(|&m| m == mode)
    }

    pub fn energy(&self, quantity: Quantity) -> &[Vec<f64>] {
        match quantity {
            Quantity::Magnetic => &self.magnetic_energy,
            Quantity::Kinetic => &self.kinetic_energy,
        }
    }

    pub fn growth(&self, quantity: Quantity) -> &[Vec<Option<f64>>] {
        match quantity {
            Quantity::Magnetic => &self.magnetic_growth,
            Quantity::Kinetic => &self.kinetic_growth,
        }
    }

    pub fn growth_mut(&mut self, quantity: Quantity) -> &mut Vec<Vec<Option<f64>>> {
        match quantity {
            Quantity::Magnetic => &mut self.magnetic_growth,
            Quantity::Kinetic => &mut self.kinetic_growth,
        }
    }

    /// True when at least one growth value of `quantity` is present.
    pub fn has_growth(&self, quantity: Quantity) -> bool {
        self.growth(quantity).iter().flatten().any(Option::is_some)
    }

    /// Checks the structural invariants: strictly increasing times, `M`
    /// entries per row and quantity, nonnegative energies with zeros only in
    /// the first record.
    pub fn validate(&self) -> Result<(), TimeseriesError> {
        let m = self.modes.len();
        let n = self.times.len();
        for q in Quantity::ALL {
            if self.energy(q).len() != n || self.growth(q).len() != n {
                return Err(TimeseriesError::ColumnCountMismatch(0));
            }
        }
        for i in 0..n {
            if !self.times[i].is_finite() {
                return Err(TimeseriesError::MalformedRow(i + 1));
            }
            if i > 0 && self.times[i] <= self.times[i - 1] {
                return Err(TimeseriesError::NonMonotonicTime(i + 1));
            }
            for q in Quantity::ALL {
                if self.energy(q)[i].len() != m || self.growth(q)[i].len() != m {
                    return Err(TimeseriesError::ColumnCountMismatch(i + 1));
                }
                if self.energy(q)[i].iter().any(|&e| !energy_ok(e, i == 0)) {
                    return Err(TimeseriesError::InvalidEnergy(i + 1));
                }
            }
        }
        Ok(())
    }

    /// Fills the growth rates of `quantity` from its energies with the
    /// backward log-difference `(ln E(t_i) - ln E(t_{i-1})) / (2 (t_i - t_{i-1}))`.
    ///
    /// The factor 2 converts an energy rate into an amplitude rate. The first
    /// record has no growth rate; neither does a record whose predecessor
    /// holds the zero seed energy.
    pub fn derive_growth_rates(&self, quantity: Quantity) -> Result<Self, TimeseriesError> {
        let mut out = self.clone();
        let energy = self.energy(quantity);
        let growth = out.growth_mut(quantity);
        for i in 0..self.times.len() {
            for (k, &mode) in self.modes.iter().enumerate() {
                let e = energy[i][k];
                if i == 0 {
                    if !(e >= 0.0) {
                        return Err(TimeseriesError::NonpositiveEnergy {
                            time: self.times[i],
                            mode,
                            quantity,
                        });
                    }
                    growth[i][k] = None;
                    continue;
                }
                if !(e > 0.0) {
                    return Err(TimeseriesError::NonpositiveEnergy {
                        time: self.times[i],
                        mode,
                        quantity,
                    });
                }
                let dt = self.times[i] - self.times[i - 1];
                if dt == 0.0 {
                    return Err(TimeseriesError::DegenerateStep(i));
                }
                let prev = energy[i - 1][k];
                growth[i][k] = if prev == 0.0 {
                    None
                } else {
                    Some((e.ln() - prev.ln()) / (2.0 * dt))
                };
            }
        }
        out.growth_provenance = GrowthProvenance::Derived;
        Ok(out)
    }

    /// Derives both quantities.
    pub fn derive_all_growth_rates(&self) -> Result<Self, TimeseriesError> {
        self.derive_growth_rates(Quantity::Magnetic)?
            .derive_growth_rates(Quantity::Kinetic)
    }

    /// Serializes in the canonical layout, with a column-name header comment.
    pub fn to_canonical_text(&self) -> String {
        let mut out = String::new();
        out.push_str("# time");
        for prefix in [
            "magnetic_energy",
            "kinetic_energy",
            "magnetic_growth",
            "kinetic_growth",
        ] {
            for m in &self.modes {
                let _ = write!(out, " {prefix}_{m}");
            }
        }
        out.push('\n');
        for i in 0..self.times.len() {
            out.push_str(&format_real(self.times[i]));
            for q in Quantity::ALL {
                for &e in &self.energy(q)[i] {
                    out.push(' ');
                    out.push_str(&format_real(e));
                }
            }
            for q in Quantity::ALL {
                for g in &self.growth(q)[i] {
                    out.push(' ');
                    match g {
                        Some(v) => out.push_str(&format_real(*v)),
                        None => out.push_str(ABSENT),
                    }
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<(), TimeseriesError> {
        fs::write(path, self.to_canonical_text()).map_err(|e| io_err(path, e))
    }
}

fn energy_ok(e: f64, first: bool) -> bool {
    e.is_finite() && (e > 0.0 || (first && e == 0.0))
}

/// Which 1-based columns of a data file hold which quantity.
///
/// Each quantity occupies `n_modes` consecutive columns starting at its
/// start column. Growth columns are optional; without them the series is
/// returned with absent growth rates, to be derived from energies.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnLayout {
    pub time_col: usize,
    pub n_modes: usize,
    pub mode_labels: Vec<u32>,
    pub magnetic_energy_col: usize,
    pub kinetic_energy_col: usize,
    pub magnetic_growth_col: Option<usize>,
    pub kinetic_growth_col: Option<usize>,
}

impl ColumnLayout {
    pub fn canonical(n_modes: usize) -> Self {
        ColumnLayout {
            time_col: 1,
            n_modes,
            mode_labels: (1..=n_modes as u32).collect(),
            magnetic_energy_col: 2,
            kinetic_energy_col: 2 + n_modes,
            magnetic_growth_col: Some(2 + 2 * n_modes),
            kinetic_growth_col: Some(2 + 3 * n_modes),
        }
    }

    /// Parses `key=value` text:
    /// `time_col`, `n_modes`, `magnetic_energy_col`, `kinetic_energy_col`,
    /// optional `magnetic_growth_col` / `kinetic_growth_col` (or `none`) and
    /// optional `modes` labels. Missing start columns default to the
    /// canonical ordering.
    pub fn parse(text: &str) -> Result<Self, TimeseriesError> {
        let doc = Document::parse(text)?;
        let root = doc.root();
        let n_modes: usize = root.require("n_modes")?.int()?;
        if n_modes == 0 {
            return Err(TimeseriesError::Layout("n_modes must be at least 1".into()));
        }
        let mut layout = ColumnLayout::canonical(n_modes);
        if let Some(e) = root.get("time_col") {
            layout.time_col = e.int()?;
        }
        if let Some(e) = root.get("magnetic_energy_col") {
            layout.magnetic_energy_col = e.int()?;
        }
        if let Some(e) = root.get("kinetic_energy_col") {
            layout.kinetic_energy_col = e.int()?;
        }
        for (key, slot) in [
            ("magnetic_growth_col", &mut layout.magnetic_growth_col),
            ("kinetic_growth_col", &mut layout.kinetic_growth_col),
        ] {
            if let Some(e) = root.get(key) {
                *slot = if e.value == "none" { None } else { Some(e.int()?) };
            }
        }
        if let Some(e) = root.get("modes") {
            layout.mode_labels = e.ints()?;
        }
        layout.check()?;
        Ok(layout)
    }

    pub fn from_file(path: &Path) -> Result<Self, TimeseriesError> {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        Self::parse(&text)
    }

    fn check(&self) -> Result<(), TimeseriesError> {
        if self.mode_labels.len() != self.n_modes {
            return Err(TimeseriesError::Layout(format!(
                "{} mode labels for {} modes",
                self.mode_labels.len(),
                self.n_modes
            )));
        }
        let starts = [
            Some(self.time_col),
            Some(self.magnetic_energy_col),
            Some(self.kinetic_energy_col),
            self.magnetic_growth_col,
            self.kinetic_growth_col,
        ];
        if starts.iter().flatten().any(|&c| c == 0) {
            return Err(TimeseriesError::Layout("columns are 1-based".into()));
        }
        Ok(())
    }

    /// Highest 1-based column index the layout reads.
    fn max_col(&self) -> usize {
        let block = |start: usize| start + self.n_modes - 1;
        [
            self.time_col,
            block(self.magnetic_energy_col),
            block(self.kinetic_energy_col),
            self.magnetic_growth_col.map_or(0, block),
            self.kinetic_growth_col.map_or(0, block),
        ]
        .into_iter()
        .max()
        .unwrap_or(0)
    }
}

/// Reads a macroscopic-variables file. With `layout = None` the canonical
/// layout is assumed and the mode count is inferred from the first data row.
pub fn parse_macroscopic(
    path: &Path,
    layout: Option<&ColumnLayout>,
) -> Result<MacroscopicSeries, TimeseriesError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    parse_macroscopic_text(&text, layout)
}

/// [`parse_macroscopic`] on in-memory text.
pub fn parse_macroscopic_text(
    text: &str,
    layout: Option<&ColumnLayout>,
) -> Result<MacroscopicSeries, TimeseriesError> {
    let mut resolved: Option<ColumnLayout> = layout.cloned();
    let mut header_labels: Option<Vec<u32>> = None;
    let mut width: Option<usize> = None;

    let mut series = MacroscopicSeries {
        times: Vec::new(),
        modes: Vec::new(),
        magnetic_energy: Vec::new(),
        kinetic_energy: Vec::new(),
        magnetic_growth: Vec::new(),
        kinetic_growth: Vec::new(),
        growth_provenance: GrowthProvenance::File,
    };

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(comment) = trimmed.strip_prefix('#') {
            if series.times.is_empty() && header_labels.is_none() {
                header_labels = canonical_header_labels(comment);
            }
            continue;
        }
        let tokens: Vec<&str> = trimmed.split_whitespace().collect();
        match width {
            None => width = Some(tokens.len()),
            Some(w) if w != tokens.len() => {
                return Err(TimeseriesError::ColumnCountMismatch(line_no))
            }
            _ => {}
        }
        if resolved.is_none() {
            if tokens.len() < 5 || !(tokens.len() - 1).is_multiple_of(4) {
                return Err(TimeseriesError::ColumnCountMismatch(line_no));
            }
            let mut canon = ColumnLayout::canonical((tokens.len() - 1) / 4);
            if let Some(labels) = header_labels.take() {
                if labels.len() == canon.n_modes {
                    canon.mode_labels = labels;
                }
            }
            resolved = Some(canon);
        }
        let lay = resolved.as_ref().expect("layout resolved");
        if series.modes.is_empty() {
            series.modes = lay.mode_labels.clone();
        }
        if tokens.len() < lay.max_col() {
            return Err(TimeseriesError::ColumnCountMismatch(line_no));
        }

        let num = |col: usize| parse_real(tokens[col - 1]).ok_or(TimeseriesError::MalformedRow(line_no));
        let block = |start: usize| -> Result<Vec<f64>, TimeseriesError> {
            (0..lay.n_modes).map(|k| num(start + k)).collect()
        };
        let growth_block = |start: Option<usize>| -> Result<Vec<Option<f64>>, TimeseriesError> {
            match start {
                None => Ok(vec![None; lay.n_modes]),
                Some(s) => (0..lay.n_modes)
                    .map(|k| {
                        let tok = tokens[s + k - 1];
                        if tok == ABSENT {
                            Ok(None)
                        } else {
                            parse_real(tok)
                                .map(Some)
                                .ok_or(TimeseriesError::MalformedRow(line_no))
                        }
                    })
                    .collect(),
            }
        };

        let t = num(lay.time_col)?;
        if !t.is_finite() {
            return Err(TimeseriesError::MalformedRow(line_no));
        }
        let first = series.times.is_empty();
        if let Some(&prev) = series.times.last() {
            if t <= prev {
                return Err(TimeseriesError::NonMonotonicTime(line_no));
            }
        }
        let me = block(lay.magnetic_energy_col)?;
        let ke = block(lay.kinetic_energy_col)?;
        if me.iter().chain(&ke).any(|&e| !energy_ok(e, first)) {
            return Err(TimeseriesError::InvalidEnergy(line_no));
        }
        series.times.push(t);
        series.magnetic_energy.push(me);
        series.kinetic_energy.push(ke);
        series.magnetic_growth.push(growth_block(lay.magnetic_growth_col)?);
        series.kinetic_growth.push(growth_block(lay.kinetic_growth_col)?);
    }
    if series.modes.is_empty() {
        if let Some(lay) = resolved {
            series.modes = lay.mode_labels;
        }
    }
    Ok(series)
}

/// Recovers mode labels from a header written by
/// [`MacroscopicSeries::to_canonical_text`].
fn canonical_header_labels(comment: &str) -> Option<Vec<u32>> {
    let names: Vec<&str> = comment.split_whitespace().collect();
    if names.first() != Some(&"time") || names.len() < 5 || !(names.len() - 1).is_multiple_of(4) {
        return None;
    }
    let m = (names.len() - 1) / 4;
    let labels: Vec<u32> = names[1..=m]
        .iter()
        .map(|n| n.strip_prefix("magnetic_energy_")?.parse().ok())
        .collect::<Option<_>>()?;
    let expected = ["magnetic_energy", "kinetic_energy", "magnetic_growth", "kinetic_growth"];
    for (block, prefix) in expected.iter().enumerate() {
        for (k, label) in labels.iter().enumerate() {
            if names[1 + block * m + k] != format!("{prefix}_{label}") {
                return None;
            }
        }
    }
    Some(labels)
}

/// Growth-rate samples of one (quantity, mode) pair restricted to a window.
#[derive(Debug, Clone, PartialEq)]
pub struct GrowthRateWindow {
    pub quantity: Quantity,
    pub mode: u32,
    /// `(time, growth rate)` pairs, times strictly increasing.
    pub samples: Vec<(f64, f64)>,
}

impl GrowthRateWindow {
    pub fn column_name(&self) -> String {
        format!("{}_{}", self.quantity, self.mode)
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.0)
    }
}

/// One window per selected (quantity, mode), in `MetricSpec` order (quantities
/// outer, modes inner). Samples are the series times `t` with
/// `t_start <= t <= t_end`; records without a growth rate are skipped.
pub fn extract_window(
    series: &MacroscopicSeries,
    spec: &MetricSpec,
) -> Result<Vec<GrowthRateWindow>, TimeseriesError> {
    let mut windows = Vec::with_capacity(spec.quantities.len() * spec.modes.len());
    for &quantity in &spec.quantities {
        let growth = series.growth(quantity);
        for &mode in &spec.modes {
            let k = series
                .mode_index(mode)
                .ok_or(TimeseriesError::UnknownMode(mode))?;
            let samples: Vec<(f64, f64)> = series
                .times
                .iter()
                .enumerate()
                .filter(|(_, &t)| spec.contains(t))
                .filter_map(|(i, &t)| growth[i][k].map(|g| (t, g)))
                .collect();
            if samples.is_empty() {
                return Err(TimeseriesError::EmptyWindow);
            }
            windows.push(GrowthRateWindow {
                quantity,
                mode,
                samples,
            });
        }
    }
    Ok(windows)
}

/// Renders windows as an extract: a header row of column names, then
/// `time g1 g2 ...` per sample time.
pub fn extract_text(windows: &[GrowthRateWindow]) -> Result<String, TimeseriesError> {
    let first = windows.first().ok_or(TimeseriesError::TimeGridMismatch)?;
    for w in &windows[1..] {
        if w.samples.len() != first.samples.len()
            || w.times().zip(first.times()).any(|(a, b)| a != b)
        {
            return Err(TimeseriesError::TimeGridMismatch);
        }
    }
    let mut out = String::from("time");
    for w in windows {
        out.push(' ');
        out.push_str(&w.column_name());
    }
    out.push('\n');
    for (i, &(t, _)) in first.samples.iter().enumerate() {
        out.push_str(&format_real(t));
        for w in windows {
            out.push(' ');
            out.push_str(&format_real(w.samples[i].1));
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn write_extract(windows: &[GrowthRateWindow], path: &Path) -> Result<(), TimeseriesError> {
    let text = extract_text(windows)?;
    fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Reads an extract back as (column names, rows).
pub fn read_extract(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>), TimeseriesError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = text.lines().enumerate();
    let header = match lines.next() {
        Some((_, h)) => h.split_whitespace().map(str::to_string).collect::<Vec<_>>(),
        None => return Ok((Vec::new(), Vec::new())),
    };
    let mut rows = Vec::new();
    for (idx, line) in lines {
        let row: Vec<f64> = line
            .split_whitespace()
            .map(|t| parse_real(t).ok_or(TimeseriesError::MalformedRow(idx + 1)))
            .collect::<Result<_, _>>()?;
        if row.len() != header.len() {
            return Err(TimeseriesError::ColumnCountMismatch(idx + 1));
        }
        rows.push(row);
    }
    Ok((header, rows))
}
