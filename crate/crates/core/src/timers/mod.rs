//! Timer extraction from run logs.
//!
//! Timer lines look like
//!
//! ```text
//!   0              # Elapsed time ITERATION :          22.4025180
//!   0                ## Elapsed time, facto :          36.4806480
//! ```
//!
//! i.e. a reporting rank, one or more `#`, the marker `Elapsed time` with an
//! optional comma, the timer name, a colon and the elapsed seconds.

mod scaling;

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::benchstore::load_machine_metadata;

pub use scaling::{scaling_report, scaling_table_from_logs, RunConfig, ScalingTable, SCALING_KEYWORDS};

pub const ELAPSED_MARKER: &str = "Elapsed time";

/// Phases of one temporal iteration, in the order they are reported.
pub const TAXONOMY: [&str; 8] = [
    "construct_matrix",
    "distribute",
    "coicsr",
    "analysis",
    "facto",
    "first_solve",
    "gmres/solve",
    "ITER",
];

#[derive(Debug, Error)]
pub enum TimerError {
    #[error("log file {} not found", .0.display())]
    MissingLog(PathBuf),
    #[error("no timer line for `{keyword}` in {}", log.display())]
    NoMatches { keyword: String, log: PathBuf },
    #[error("{}:{line}: matching line is not a timer line", log.display())]
    MalformedTimer { log: PathBuf, line: usize },
    #[error("invalid timer keyword `{0}`")]
    InvalidKeyword(String),
    #[error("run {} has no `{keyword}` timer for iteration {iteration}", dir.display())]
    IncompleteRun {
        dir: PathBuf,
        keyword: String,
        iteration: usize,
    },
    #[error("invalid run configuration `{0}`, expected cores,nodes,procs,threads[,pathological]")]
    InvalidConfig(String),
    #[error("a scaling report needs at least two runs")]
    TooFewRuns,
    #[error("I/O failure on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

/// Substring matched against timer lines. Free-form names must be nonempty
/// and contain no whitespace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimerKeyword(String);

impl TimerKeyword {
    pub fn new(name: &str) -> Result<Self, TimerError> {
        if name.is_empty() || name.contains(char::is_whitespace) {
            return Err(TimerError::InvalidKeyword(name.to_string()));
        }
        Ok(TimerKeyword(name.to_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_taxonomy(&self) -> bool {
        TAXONOMY.contains(&self.0.as_str())
    }
}

/// The fields of one parsed timer line.
#[derive(Debug, Clone, PartialEq)]
pub struct TimerLine {
    pub rank: u32,
    pub name: String,
    /// Elapsed seconds exactly as printed.
    pub elapsed_text: String,
    pub elapsed: f64,
}

/// Parses a timer line; `None` if the line does not follow the grammar.
pub fn parse_timer_line(line: &str) -> Option<TimerLine> {
    let rest = line.trim_start();
    let digits = rest.find(|c: char| !c.is_ascii_digit())?;
    let rank: u32 = rest[..digits].parse().ok()?;
    let rest = rest[digits..].trim_start();
    let rest = rest.strip_prefix('#')?.trim_start_matches('#').trim_start();
    let rest = rest.strip_prefix(ELAPSED_MARKER)?;
    let rest = rest.strip_prefix(',').unwrap_or(rest);
    let colon = rest.rfind(':')?;
    let name = rest[..colon].trim();
    let elapsed_text = rest[colon + 1..].trim();
    if name.is_empty() || elapsed_text.contains(char::is_whitespace) {
        return None;
    }
    let elapsed: f64 = elapsed_text.parse().ok()?;
    if !(elapsed >= 0.0) {
        return None;
    }
    Some(TimerLine {
        rank,
        name: name.to_string(),
        elapsed_text: elapsed_text.to_string(),
        elapsed,
    })
}

/// Formats a timer line in the layout the simulation prints: the label is
/// right-aligned so that every colon falls in the same column, and the
/// seconds are printed with seven decimals in a 20-wide field.
pub fn format_timer_line(rank: u32, name: &str, seconds: f64) -> String {
    let label = if name == "facto" {
        format!("## {ELAPSED_MARKER}, {name} :")
    } else {
        format!("# {ELAPSED_MARKER} {name} :")
    };
    format!("{rank:>3}{label:>40}{seconds:>20.7}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimerRecord {
    /// Timer name as printed (e.g. `ITERATION` for keyword `ITER`).
    pub keyword: String,
    pub rank: u32,
    pub elapsed_text: String,
    pub elapsed: f64,
    pub log_file: String,
    pub run_dir: PathBuf,
    /// 1-based.
    pub line_no: usize,
    /// The log line, verbatim.
    pub line: String,
}

fn read_log(run_dir: &Path, log_file: &str) -> Result<String, TimerError> {
    let path = run_dir.join(log_file);
    fs::read_to_string(&path).map_err(|source| {
        if source.kind() == io::ErrorKind::NotFound {
            TimerError::MissingLog(path)
        } else {
            TimerError::Io { path, source }
        }
    })
}

/// `(line number, line)` for every line holding both the keyword and the
/// elapsed-time marker, in file order.
pub fn matching_lines<'a>(text: &'a str, keyword: &'a str) -> impl Iterator<Item = (usize, &'a str)> + 'a {
    text.lines()
        .enumerate()
        .filter(move |(_, l)| l.contains(ELAPSED_MARKER) && l.contains(keyword))
        .map(|(i, l)| (i + 1, l))
}

/// Timer records for `keyword` in `<run_dir>/<log_file>`, truncated to the
/// first `limit` when given.
pub fn scan_log(
    run_dir: &Path,
    log_file: &str,
    keyword: &TimerKeyword,
    limit: Option<usize>,
) -> Result<Vec<TimerRecord>, TimerError> {
    let text = read_log(run_dir, log_file)?;
    let mut found = matching_lines(&text, keyword.as_str()).peekable();
    if found.peek().is_none() {
        return Err(TimerError::NoMatches {
            keyword: keyword.as_str().to_string(),
            log: run_dir.join(log_file),
        });
    }
    found
        .take(limit.unwrap_or(usize::MAX))
        .map(|(line_no, line)| {
            let parsed = parse_timer_line(line).ok_or_else(|| TimerError::MalformedTimer {
                log: run_dir.join(log_file),
                line: line_no,
            })?;
            Ok(TimerRecord {
                keyword: parsed.name,
                rank: parsed.rank,
                elapsed_text: parsed.elapsed_text,
                elapsed: parsed.elapsed,
                log_file: log_file.to_string(),
                run_dir: run_dir.to_path_buf(),
                line_no,
                line: line.to_string(),
            })
        })
        .collect()
}

/// Grouped report over several run directories: for each, a header
/// `== <dir> ( <Comment from README.txt> )` followed by the matching log
/// lines verbatim. A missing log or an empty match is noted, not fatal.
pub fn timing_bench(keyword: &TimerKeyword, log_file: &str, limit: Option<usize>, dirs: &[PathBuf]) -> String {
    let mut out = String::new();
    for dir in dirs {
        let comment = load_machine_metadata(dir)
            .map(|m| m.comment)
            .unwrap_or_else(|_| "-".to_string());
        let _ = writeln!(out, "== {} ( {} )", dir.display(), comment);
        match read_log(dir, log_file) {
            Ok(text) => {
                let mut any = false;
                for (_, line) in matching_lines(&text, keyword.as_str()).take(limit.unwrap_or(usize::MAX)) {
                    out.push_str(line);
                    out.push('\n');
                    any = true;
                }
                if !any {
                    out.push_str("no matches\n");
                }
            }
            Err(TimerError::MissingLog(_)) => {
                let _ = writeln!(out, "missing log {log_file}");
            }
            Err(e) => {
                let _ = writeln!(out, "unreadable log {log_file}: {e}");
            }
        }
    }
    out
}
