//! Runs an execution plan as a chain of external processes inside one run
//! directory, or writes the equivalent shell script in dry-run mode.

use std::fmt::Write as _;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use thiserror::Error;

use super::plan::{plan_executions, ExecutionPlan, ExecutionStep};
use super::{Scenario, ScenarioError};
use crate::kv::Document;

pub const SCRIPT_FILE: &str = "launch_script.sh";
pub const META_FILE: &str = "run_meta.txt";
const LOCK_FILE: &str = ".simregress.lock";
const DEFAULT_COMPILE_COMMAND: &str = "compile_test.sh";

#[derive(Debug, Error)]
pub enum LaunchError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("invalid launch environment: {0}")]
    InvalidEnvironment(String),
    #[error("run directory {0} already exists")]
    DirectoryExists(PathBuf),
    #[error("run directory {0} does not exist, nothing to resume")]
    MissingRunDirectory(PathBuf),
    #[error("run directory {0} is locked by another launch")]
    Locked(PathBuf),
    #[error("compilation failed:\n{0}")]
    CompileFailed(String),
    #[error("step {step} exited with code {exit_code}, see {}", log.display())]
    StepFailed {
        step: usize,
        exit_code: i32,
        log: PathBuf,
    },
    #[error("I/O failure on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> LaunchError + '_ {
    move |source| LaunchError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Machine-side settings of a launch (the environment category of
/// parameters). Nothing here is stored in scenario files.
#[derive(Debug, Clone, PartialEq)]
pub struct LaunchEnvironment {
    /// Shell command run before the launcher, e.g. `export OMP_NUM_THREADS=8`.
    pub prerun: String,
    /// Parallel launcher, e.g. `mpirun -np 4`. May be empty.
    pub mpirun: String,
    /// Directory under which the run directory is created.
    pub basedir: PathBuf,
    pub compile_first: bool,
    pub dry_run: bool,
    /// Continue a previously interrupted run at its first incomplete step.
    pub resume: bool,
    /// Simulation executable; required unless `dry_run`.
    pub executable: Option<String>,
    /// Invoked as `<compile_command> <MODEL>` when `compile_first` is set.
    pub compile_command: String,
}

impl Default for LaunchEnvironment {
    fn default() -> Self {
        LaunchEnvironment {
            prerun: String::new(),
            mpirun: String::new(),
            basedir: PathBuf::from("."),
            compile_first: true,
            dry_run: false,
            resume: false,
            executable: None,
            compile_command: DEFAULT_COMPILE_COMMAND.to_string(),
        }
    }
}

impl LaunchEnvironment {
    /// Reads `PRERUN`, `MPIRUN`, `BASEDIR`, plus `SIMREGRESS_EXE` and
    /// `SIMREGRESS_COMPILE` for the executable and compile command.
    pub fn from_env() -> Self {
        let var = |k: &str| std::env::var(k).ok().filter(|v| !v.is_empty());
        let mut env = LaunchEnvironment::default();
        if let Some(v) = var("PRERUN") {
            env.prerun = v;
        }
        if let Some(v) = var("MPIRUN") {
            env.mpirun = v;
        }
        if let Some(v) = var("BASEDIR") {
            env.basedir = PathBuf::from(v);
        }
        env.executable = var("SIMREGRESS_EXE");
        if let Some(v) = var("SIMREGRESS_COMPILE") {
            env.compile_command = v;
        }
        env
    }

    /// `<prerun> && <mpirun> <executable>`, omitting empty parts.
    pub fn step_command(&self, model_id: u32) -> String {
        let exe = self
            .executable
            .clone()
            .unwrap_or_else(|| format!("jorek_model{model_id}"));
        let run = if self.mpirun.trim().is_empty() {
            exe
        } else {
            format!("{} {exe}", self.mpirun.trim())
        };
        if self.prerun.trim().is_empty() {
            run
        } else {
            format!("{} && {run}", self.prerun.trim())
        }
    }

    pub fn compile_line(&self, model_id: u32) -> String {
        format!("{} {model_id}", self.compile_command)
    }
}

/// Outcome of [`launch`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunDirectory {
    pub path: PathBuf,
    pub steps_total: usize,
    pub steps_completed: usize,
    pub dry_run: bool,
}

impl RunDirectory {
    pub fn script(&self) -> PathBuf {
        self.path.join(SCRIPT_FILE)
    }

    pub fn log(&self, step: usize) -> PathBuf {
        self.path.join(format!("out_loop{step}"))
    }

    pub fn macroscopic(&self) -> PathBuf {
        self.path.join("macroscopic_vars.dat")
    }
}

/// Progress record kept in `run_meta.txt`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMeta {
    pub model_id: u32,
    pub executions: usize,
    pub completed: usize,
    pub compile_first: bool,
    pub compiled: bool,
}

impl RunMeta {
    fn render(&self, env: &LaunchEnvironment) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "model = {}", self.model_id);
        let _ = writeln!(out, "executions = {}", self.executions);
        let _ = writeln!(out, "completed = {}", self.completed);
        let _ = writeln!(out, "compile_first = {}", self.compile_first);
        let _ = writeln!(out, "compiled = {}", self.compiled);
        let note = if self.compile_first {
            "compiled inside the launch"
        } else {
            "left to the user before launch"
        };
        let _ = writeln!(out, "compilation = {note}");
        let _ = writeln!(out, "prerun = {}", env.prerun);
        let _ = writeln!(out, "mpirun = {}", env.mpirun);
        let _ = writeln!(out, "executable = {}", env.executable.as_deref().unwrap_or("-"));
        out
    }

    pub fn read(dir: &Path) -> Result<Self, LaunchError> {
        let path = dir.join(META_FILE);
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        let parse = || -> Result<RunMeta, crate::kv::KvError> {
            let doc = Document::parse(&text)?;
            let root = doc.root();
            Ok(RunMeta {
                model_id: root.require("model")?.int()?,
                executions: root.require("executions")?.int()?,
                completed: root.require("completed")?.int()?,
                compile_first: root.require("compile_first")?.boolean()?,
                compiled: root.require("compiled")?.boolean()?,
            })
        };
        parse().map_err(|e| LaunchError::InvalidEnvironment(format!("{}: {e}", path.display())))
    }
}

/// Removes the lock file when the launch ends, successfully or not.
struct LockGuard(PathBuf);

impl LockGuard {
    fn acquire(dir: &Path) -> Result<Self, LaunchError> {
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(LockGuard(path)),
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => {
                Err(LaunchError::Locked(dir.to_path_buf()))
            }
            Err(e) => Err(io_err(&path)(e)),
        }
    }
}

impl Drop for LockGuard {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

/// Name of the run directory: `<prefix><model>`, unless the prefix already
/// ends with the model id (`run new302 302` creates `new302`).
pub fn run_dir_name(prefix: &str, model_id: u32) -> String {
    let id = model_id.to_string();
    if prefix.ends_with(&id) {
        prefix.to_string()
    } else {
        format!("{prefix}{id}")
    }
}

/// Namelist-style standard input for one execution.
pub fn step_input(scenario: &Scenario, step: &ExecutionStep) -> String {
    let mut out = String::from("&in1\n");
    let _ = writeln!(out, "  step_kind = '{}'", step.kind);
    let restart = if step.restart_from.is_some() { ".t." } else { ".f." };
    let _ = writeln!(out, "  restart = {restart}");
    let _ = writeln!(out, "  n_tor = {}", step.n_tor);
    for (k, v) in &scenario.input_params {
        let _ = writeln!(out, "  {k} = {v}");
    }
    match &step.subsequence {
        Some(sub) => {
            let join = |v: Vec<String>| v.join(", ");
            let _ = writeln!(
                out,
                "  tstep_n = {}",
                join(sub.tstep_n.iter().map(|t| t.to_string()).collect())
            );
            let _ = writeln!(
                out,
                "  nstep_n = {}",
                join(sub.nstep_n.iter().map(|n| n.to_string()).collect())
            );
        }
        None => out.push_str("  nstep = 0\n"),
    }
    out.push_str("/\n");
    out
}

fn shell_quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', r"'\''"))
}

/// The shell script equivalent to running the plan in `dir`.
pub fn render_script(
    scenario: &Scenario,
    plan: &ExecutionPlan,
    env: &LaunchEnvironment,
    dir: &Path,
) -> String {
    let mut out = String::from("#!/bin/sh\n");
    let _ = writeln!(
        out,
        "# model {}: {} chained executions",
        scenario.model_id,
        plan.len()
    );
    let _ = writeln!(out, "# PRERUN={}", env.prerun);
    let _ = writeln!(out, "# MPIRUN={}", env.mpirun);
    let _ = writeln!(out, "# BASEDIR={}", env.basedir.display());
    out.push_str("set -e\n");
    let _ = writeln!(out, "cd {}", shell_quote(&dir.display().to_string()));
    if env.compile_first {
        let _ = writeln!(out, "{}", env.compile_line(scenario.model_id));
    }
    let command = env.step_command(scenario.model_id);
    for step in &plan.steps {
        let _ = writeln!(
            out,
            "{command} > out_loop{} 2>&1 <<'EOF_SIMREGRESS'",
            step.index
        );
        out.push_str(&step_input(scenario, step));
        out.push_str("EOF_SIMREGRESS\n");
    }
    out
}

fn run_shell(command: &str, dir: &Path, input: &str, log: File) -> io::Result<i32> {
    let err = log.try_clone()?;
    let mut child = Command::new("sh")
        .arg("-c")
        .arg(command)
        .current_dir(dir)
        .stdin(Stdio::piped())
        .stdout(log)
        .stderr(err)
        .spawn()?;
    if let Some(mut stdin) = child.stdin.take() {
        // a child that never reads its input closes the pipe early
        match stdin.write_all(input.as_bytes()) {
            Err(e) if e.kind() != io::ErrorKind::BrokenPipe => return Err(e),
            _ => {}
        }
    }
    let status = child.wait()?;
    Ok(status.code().unwrap_or(-1))
}

/// Creates `<basedir>/<prefix><model>` and runs the scenario's executions in
/// order, each as `<prerun> && <mpirun> <executable>` with its input on
/// standard input and its output in `out_loop<k>`.
///
/// In dry-run mode only the directory and its `launch_script.sh` are
/// written. A failed step leaves the outputs of completed steps in place;
/// launching again with `resume` starts at the failed step.
pub fn launch(
    scenario: &Scenario,
    env: &LaunchEnvironment,
    prefix: &str,
) -> Result<RunDirectory, LaunchError> {
    let plan = plan_executions(scenario)?;
    if !env.basedir.is_dir() {
        return Err(LaunchError::InvalidEnvironment(format!(
            "BASEDIR {} is not a directory",
            env.basedir.display()
        )));
    }
    let dir = env.basedir.join(run_dir_name(prefix, scenario.model_id));

    if env.dry_run {
        if env.resume {
            return Err(LaunchError::InvalidEnvironment(
                "dry run and resume are mutually exclusive".into(),
            ));
        }
        create_run_dir(&dir)?;
        let script = dir.join(SCRIPT_FILE);
        fs::write(&script, render_script(scenario, &plan, env, &dir)).map_err(io_err(&script))?;
        return Ok(RunDirectory {
            path: dir,
            steps_total: plan.len(),
            steps_completed: 0,
            dry_run: true,
        });
    }

    if env.executable.is_none() {
        return Err(LaunchError::InvalidEnvironment(
            "no simulation executable configured".into(),
        ));
    }
    let mut meta = if env.resume {
        if !dir.is_dir() {
            return Err(LaunchError::MissingRunDirectory(dir));
        }
        let meta = RunMeta::read(&dir)?;
        if meta.model_id != scenario.model_id || meta.executions != plan.len() {
            return Err(LaunchError::InvalidEnvironment(format!(
                "{} belongs to a different scenario",
                dir.display()
            )));
        }
        meta
    } else {
        create_run_dir(&dir)?;
        RunMeta {
            model_id: scenario.model_id,
            executions: plan.len(),
            completed: 0,
            compile_first: env.compile_first,
            compiled: false,
        }
    };
    let _lock = LockGuard::acquire(&dir)?;

    let script = dir.join(SCRIPT_FILE);
    fs::write(&script, render_script(scenario, &plan, env, &dir)).map_err(io_err(&script))?;
    let meta_path = dir.join(META_FILE);
    let save = |meta: &RunMeta| fs::write(&meta_path, meta.render(env)).map_err(io_err(&meta_path));
    meta.compile_first = env.compile_first;
    save(&meta)?;

    if env.compile_first && !meta.compiled {
        let output = Command::new("sh")
            .arg("-c")
            .arg(env.compile_line(scenario.model_id))
            .current_dir(&dir)
            .output()
            .map_err(io_err(&dir))?;
        if !output.status.success() {
            let mut log = String::from_utf8_lossy(&output.stdout).into_owned();
            log.push_str(&String::from_utf8_lossy(&output.stderr));
            return Err(LaunchError::CompileFailed(log));
        }
        meta.compiled = true;
        save(&meta)?;
    }

    let command = env.step_command(scenario.model_id);
    for step in plan.steps.iter().skip(meta.completed) {
        let log_path = dir.join(format!("out_loop{}", step.index));
        let log = File::create(&log_path).map_err(io_err(&log_path))?;
        let code = run_shell(&command, &dir, &step_input(scenario, step), log)
            .map_err(io_err(&log_path))?;
        if code != 0 {
            return Err(LaunchError::StepFailed {
                step: step.index,
                exit_code: code,
                log: log_path,
            });
        }
        meta.completed = step.index;
        save(&meta)?;
    }

    Ok(RunDirectory {
        path: dir,
        steps_total: plan.len(),
        steps_completed: meta.completed,
        dry_run: false,
    })
}

fn create_run_dir(dir: &Path) -> Result<(), LaunchError> {
    match fs::create_dir(dir) {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == io::ErrorKind::AlreadyExists => {
            Err(LaunchError::DirectoryExists(dir.to_path_buf()))
        }
        Err(e) => Err(io_err(dir)(e)),
    }
}
