use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::{parse_timer_line, TimerError, TimerLine};

/// Rows of a scaling table, in report order.
pub const SCALING_KEYWORDS: [&str; 7] = [
    "construct_matrix",
    "coicsr",
    "distribute",
    "analysis",
    "facto",
    "gmres/solve",
    "ITER",
];

const ITERATION_KEYWORD: &str = "ITER";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunConfig {
    pub cores: u32,
    pub nodes: u32,
    pub mpi_procs: u32,
    pub threads: u32,
    /// Known-bad placement; can be left out of the speedup baseline.
    pub pathological: bool,
}

impl FromStr for RunConfig {
    type Err = TimerError;

    /// `cores,nodes,procs,threads` with an optional trailing `,pathological`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || TimerError::InvalidConfig(s.to_string());
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let pathological = match parts.len() {
            4 => false,
            5 if parts[4] == "pathological" => true,
            _ => return Err(bad()),
        };
        let mut n = [0u32; 4];
        for (slot, p) in n.iter_mut().zip(&parts) {
            *slot = p.parse().map_err(|_| bad())?;
            if *slot == 0 {
                return Err(bad());
            }
        }
        Ok(RunConfig {
            cores: n[0],
            nodes: n[1],
            mpi_procs: n[2],
            threads: n[3],
            pathological,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingTable {
    pub iteration: usize,
    pub configs: Vec<RunConfig>,
    pub run_dirs: Vec<PathBuf>,
    pub keywords: Vec<String>,
    /// `elapsed[row][column]`, rows following `keywords`.
    pub elapsed: Vec<Vec<f64>>,
}

impl ScalingTable {
    pub fn row(&self, keyword: &str) -> Option<&[f64]> {
        let i = self.keywords.iter().position(|k| k == keyword)?;
        Some(&self.elapsed[i])
    }

    /// Column used as the speedup reference.
    pub fn baseline(&self, exclude_pathological: bool) -> Option<usize> {
        if exclude_pathological {
            self.configs.iter().position(|c| !c.pathological)
        } else if self.configs.is_empty() {
            None
        } else {
            Some(0)
        }
    }

    /// `t_baseline / t_i`; undefined where either time is zero or the
    /// column is excluded.
    pub fn speedup(&self, keyword: &str, exclude_pathological: bool) -> Vec<Option<f64>> {
        let (Some(row), Some(b)) = (self.row(keyword), self.baseline(exclude_pathological)) else {
            return vec![None; self.configs.len()];
        };
        row.iter()
            .zip(&self.configs)
            .enumerate()
            .map(|(i, (&t, c))| {
                if exclude_pathological && c.pathological {
                    None
                } else if i == b {
                    Some(1.0)
                } else if t > 0.0 && row[b] > 0.0 {
                    Some(row[b] / t)
                } else {
                    None
                }
            })
            .collect()
    }

    /// Speedup divided by the core ratio to the baseline.
    pub fn efficiency(&self, keyword: &str, exclude_pathological: bool) -> Vec<Option<f64>> {
        let Some(b) = self.baseline(exclude_pathological) else {
            return vec![None; self.configs.len()];
        };
        let base_cores = f64::from(self.configs[b].cores);
        self.speedup(keyword, exclude_pathological)
            .into_iter()
            .zip(&self.configs)
            .map(|(s, c)| s.map(|s| s * base_cores / f64::from(c.cores)))
            .collect()
    }

    /// `(column, keyword)` pairs where a phase took longer than the whole
    /// iteration.
    pub fn iteration_violations(&self, tolerance: f64) -> Vec<(usize, String)> {
        let Some(iter) = self.row(ITERATION_KEYWORD) else {
            return Vec::new();
        };
        let mut out = Vec::new();
        for (k, row) in self.keywords.iter().zip(&self.elapsed) {
            if k == ITERATION_KEYWORD {
                continue;
            }
            for (j, (&t, &total)) in row.iter().zip(iter).enumerate() {
                if t > total + tolerance {
                    out.push((j, k.clone()));
                }
            }
        }
        out
    }

    pub fn render_text(&self, exclude_pathological: bool) -> String {
        let mut out = String::new();
        let header = |out: &mut String, label: &str, f: &dyn Fn(&RunConfig) -> String| {
            let _ = write!(out, "{label:<20}");
            for c in &self.configs {
                let _ = write!(out, "{:>10}", f(c));
            }
            out.push('\n');
        };
        header(&mut out, "Nb cores", &|c| c.cores.to_string());
        header(&mut out, "Nb nodes", &|c| c.nodes.to_string());
        header(&mut out, "Nb MPI proc.", &|c| c.mpi_procs.to_string());
        header(&mut out, "Nb threads", &|c| c.threads.to_string());
        if self.configs.iter().any(|c| c.pathological) {
            header(&mut out, "pathological", &|c| {
                if c.pathological { "*" } else { "" }.to_string()
            });
        }
        let _ = writeln!(out, "elapsed time (s), iteration {}", self.iteration);
        for (k, row) in self.keywords.iter().zip(&self.elapsed) {
            let _ = write!(out, "{k:<20}");
            for t in row {
                let _ = write!(out, "{t:>10.2}");
            }
            out.push('\n');
        }
        let opt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.2}"));
        for label in ["speedup", "efficiency"] {
            let _ = writeln!(out, "{label}");
            for k in &self.keywords {
                let values = if label == "speedup" {
                    self.speedup(k, exclude_pathological)
                } else {
                    self.efficiency(k, exclude_pathological)
                };
                let _ = write!(out, "{k:<20}");
                for v in values {
                    let _ = write!(out, "{:>10}", opt(v));
                }
                out.push('\n');
            }
        }
        out
    }

    /// Whitespace-separated rows, one value per column, `-` where undefined.
    pub fn render_machine(&self, exclude_pathological: bool) -> String {
        let mut out = String::new();
        let mut line = |label: &str, values: Vec<String>| {
            out.push_str(label);
            for v in values {
                out.push(' ');
                out.push_str(&v);
            }
            out.push('\n');
        };
        line(
            "row",
            self.run_dirs.iter().map(|d| d.display().to_string().replace(char::is_whitespace, "_")).collect(),
        );
        line("iteration", vec![self.iteration.to_string(); self.configs.len()]);
        line("cores", self.configs.iter().map(|c| c.cores.to_string()).collect());
        line("nodes", self.configs.iter().map(|c| c.nodes.to_string()).collect());
        line("mpi_procs", self.configs.iter().map(|c| c.mpi_procs.to_string()).collect());
        line("threads", self.configs.iter().map(|c| c.threads.to_string()).collect());
        line(
            "pathological",
            self.configs.iter().map(|c| u8::from(c.pathological).to_string()).collect(),
        );
        let opt = |v: Option<f64>| v.map_or("-".to_string(), |v| v.to_string());
        for (k, row) in self.keywords.iter().zip(&self.elapsed) {
            line(k, row.iter().map(f64::to_string).collect());
        }
        for k in &self.keywords {
            line(
                &format!("speedup:{k}"),
                self.speedup(k, exclude_pathological).into_iter().map(opt).collect(),
            );
        }
        for k in &self.keywords {
            line(
                &format!("efficiency:{k}"),
                self.efficiency(k, exclude_pathological).into_iter().map(opt).collect(),
            );
        }
        out
    }
}

/// Timer lines of the `iteration`-th iteration (1-based): everything after
/// the previous iteration total up to and including this one.
fn iteration_segment(text: &str, iteration: usize) -> Option<Vec<TimerLine>> {
    let mut seen = 0;
    let mut segment = Vec::new();
    for line in text.lines().filter_map(parse_timer_line) {
        let closes = line.name.contains(ITERATION_KEYWORD);
        if seen + 1 == iteration {
            segment.push(line);
        }
        if closes {
            seen += 1;
            if seen == iteration {
                return Some(segment);
            }
        }
    }
    None
}

fn column(dir: &Path, text: &str, iteration: usize) -> Result<Vec<f64>, TimerError> {
    let incomplete = |keyword: &str| TimerError::IncompleteRun {
        dir: dir.to_path_buf(),
        keyword: keyword.to_string(),
        iteration,
    };
    let segment = iteration_segment(text, iteration).ok_or_else(|| incomplete(ITERATION_KEYWORD))?;
    SCALING_KEYWORDS
        .iter()
        .map(|k| {
            segment
                .iter()
                .find(|l| l.name.contains(k))
                .map(|l| l.elapsed)
                .ok_or_else(|| incomplete(k))
        })
        .collect()
}

/// Builds a table from log texts already in memory, one per configuration.
pub fn scaling_table_from_logs(
    runs: &[(RunConfig, PathBuf, String)],
    iteration: usize,
) -> Result<ScalingTable, TimerError> {
    if runs.len() < 2 {
        return Err(TimerError::TooFewRuns);
    }
    let mut elapsed = vec![Vec::with_capacity(runs.len()); SCALING_KEYWORDS.len()];
    for (_, dir, text) in runs {
        for (row, t) in elapsed.iter_mut().zip(column(dir, text, iteration)?) {
            row.push(t);
        }
    }
    Ok(ScalingTable {
        iteration,
        configs: runs.iter().map(|r| r.0).collect(),
        run_dirs: runs.iter().map(|r| r.1.clone()).collect(),
        keywords: SCALING_KEYWORDS.iter().map(|k| k.to_string()).collect(),
        elapsed,
    })
}

/// Reads `<dir>/<log_file>` for each configuration and tabulates the timers
/// of one iteration.
pub fn scaling_report(
    runs: &[(RunConfig, PathBuf)],
    log_file: &str,
    iteration: usize,
) -> Result<ScalingTable, TimerError> {
    let mut loaded = Vec::with_capacity(runs.len());
    for (config, dir) in runs {
        let path = dir.join(log_file);
        let text = fs::read_to_string(&path).map_err(|source| {
            if source.kind() == io::ErrorKind::NotFound {
                TimerError::MissingLog(path)
            } else {
                TimerError::Io { path, source }
            }
        })?;
        loaded.push((*config, dir.clone(), text));
    }
    scaling_table_from_logs(&loaded, iteration)
}

#[cfg(test)]
mod tests {
    use super::super::format_timer_line;
    use super::*;

    fn log(iterations: &[[f64; 7]]) -> String {
        let names = ["construct_matrix", "distribute", "coicsr", "analysis", "facto", "gmres/solve", "ITERATION"];
        let order = [0, 2, 1, 3, 4, 5, 6];
        let mut out = String::from(" starting\n");
        for it in iterations {
            for (slot, name) in order.iter().zip(names) {
                out.push_str(&format_timer_line(0, name, it[*slot]));
                out.push('\n');
            }
        }
        out
    }

    fn cfg(s: &str) -> RunConfig {
        s.parse().unwrap()
    }

    #[test]
    fn config_parsing() {
        assert_eq!(
            cfg("48,4,16,3"),
            RunConfig { cores: 48, nodes: 4, mpi_procs: 16, threads: 3, pathological: false }
        );
        assert!(cfg("12,1,4,3,pathological").pathological);
        for bad in ["12,1,4", "12,1,4,3,slow", "0,1,1,1", "a,1,1,1"] {
            assert!(bad.parse::<RunConfig>().is_err(), "{bad}");
        }
    }

    #[test]
    fn selects_requested_iteration() {
        let text = log(&[[10.0, 1.0, 2.0, 3.0, 4.0, 5.0, 30.0], [8.0, 1.0, 1.0, 0.0, 0.0, 5.0, 20.0]]);
        let runs = vec![
            (cfg("12,1,4,3"), PathBuf::from("a"), text.clone()),
            (cfg("24,2,8,3"), PathBuf::from("b"), text),
        ];
        let t2 = scaling_table_from_logs(&runs, 2).unwrap();
        assert_eq!(t2.row("construct_matrix").unwrap(), &[8.0, 8.0]);
        assert_eq!(t2.row("ITER").unwrap(), &[20.0, 20.0]);
        assert_eq!(t2.speedup("facto", false), vec![Some(1.0), None]);
        assert_eq!(t2.efficiency("ITER", false), vec![Some(1.0), Some(0.5)]);
        assert!(matches!(
            scaling_table_from_logs(&runs, 3),
            Err(TimerError::IncompleteRun { keyword, .. }) if keyword == "ITER"
        ));
    }

    #[test]
    fn missing_phase_is_incomplete() {
        let text = format!("{}\n{}\n", format_timer_line(0, "construct_matrix", 1.0), format_timer_line(0, "ITERATION", 2.0));
        let runs = vec![
            (cfg("12,1,4,3"), PathBuf::from("a"), text.clone()),
            (cfg("24,2,8,3"), PathBuf::from("b"), text),
        ];
        assert!(matches!(
            scaling_table_from_logs(&runs, 1),
            Err(TimerError::IncompleteRun { keyword, .. }) if keyword == "coicsr"
        ));
    }

    #[test]
    fn too_few_runs() {
        let runs = vec![(cfg("12,1,4,3"), PathBuf::from("a"), log(&[[1.0; 7]]))];
        assert!(matches!(scaling_table_from_logs(&runs, 1), Err(TimerError::TooFewRuns)));
    }

    #[test]
    fn pathological_baseline_exclusion() {
        let runs = vec![
            (cfg("12,1,4,3,pathological"), PathBuf::from("a"), log(&[[1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 40.0]])),
            (cfg("12,1,4,3"), PathBuf::from("b"), log(&[[1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 30.0]])),
            (cfg("24,2,8,3"), PathBuf::from("c"), log(&[[1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 15.0]])),
        ];
        let t = scaling_table_from_logs(&runs, 1).unwrap();
        assert_eq!(t.baseline(false), Some(0));
        assert_eq!(t.baseline(true), Some(1));
        let s = t.speedup("ITER", true);
        assert_eq!(s, vec![None, Some(1.0), Some(2.0)]);
        assert_eq!(t.efficiency("ITER", true), vec![None, Some(1.0), Some(1.0)]);
        assert!(t.iteration_violations(1e-6).is_empty());
        let text = t.render_text(true);
        assert!(text.contains("pathological"));
        assert!(text.contains("\nspeedup\n"));
        assert!(text.lines().any(|l| l.starts_with("ITER") && l.ends_with("-      1.00      2.00")));
        let machine = t.render_machine(true);
        assert!(machine.starts_with("row a b c\niteration 1 1 1\n"));
        assert!(machine.contains("\nITER 40 30 15\n"));
        assert!(machine.contains("\nspeedup:ITER - 1 2\n"));
    }
}
