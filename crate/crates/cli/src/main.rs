use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};

use simregress::benchstore::{self, DEFAULT_STORE_ROOT};
use simregress::metric::{compare_and_extract, render_report, Verdict};
use simregress::scenario::{launch, load_scenario, LaunchEnvironment, Registry, ScenarioSource};
use simregress::timers::{scaling_report, timing_bench, RunConfig, TimerKeyword};
use simregress::timeseries::{parse_macroscopic, ColumnLayout, MacroscopicSeries, Quantity};
use simregress::toysim::{self, ToyConfig};

#[derive(Parser)]
#[command(name = "simregress", version, about = "Non-regression testing for simulation runs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compare the growth rates of a run against a reference run.
    Compare {
        /// Model id of a registered scenario, or a scenario file.
        model: String,
        run_dir: PathBuf,
        ref_dir: PathBuf,
        /// Override the scenario threshold.
        #[arg(long)]
        thr: Option<f64>,
        /// Override the comparison window, as `START:END`.
        #[arg(long)]
        window: Option<String>,
        /// Column layout file for non-canonical macroscopic files.
        #[arg(long)]
        layout: Option<PathBuf>,
        /// Where the f1/f2 extracts go.
        #[arg(long, default_value = ".")]
        extract_dir: PathBuf,
    },
    /// Launch a scenario into `<PREFIX><MODEL>`.
    Run {
        prefix: String,
        model: String,
        /// Only write the launch script.
        #[arg(long)]
        dry_run: bool,
        /// Continue an interrupted run.
        #[arg(long)]
        resume: bool,
        /// Simulation executable (default: $SIMREGRESS_EXE).
        #[arg(long)]
        exe: Option<String>,
        /// Compile command, invoked as `<cmd> <MODEL>`.
        #[arg(long)]
        compile_cmd: Option<String>,
        /// Skip compilation; the executable is assumed up to date.
        #[arg(long)]
        no_compile: bool,
    },
    /// Print matching timer lines from the logs of several runs.
    Timing {
        keyword: String,
        log_file: String,
        /// Keep only the first N matches per directory.
        #[arg(long)]
        limit: Option<usize>,
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
    },
    /// Strong-scaling table from runs at different core counts.
    ScaleReport {
        #[arg(long)]
        log: String,
        /// 1-based iteration index.
        #[arg(long, default_value_t = 1)]
        iter: usize,
        /// Leave configurations marked pathological out of the baseline.
        #[arg(long)]
        exclude_pathological: bool,
        /// Whitespace-separated output instead of the aligned table.
        #[arg(long)]
        machine: bool,
        /// `cores,nodes,procs,threads[,pathological]:<run_dir>`
        #[arg(required = true)]
        runs: Vec<String>,
    },
    /// Store the reduced file set of a run as a reference.
    Store {
        run_dir: PathBuf,
        /// `model<id>/<label>`
        dest: String,
        /// Store root (default: $SIMREGRESS_STORE or ./benchmark).
        #[arg(long)]
        store: Option<PathBuf>,
    },
    /// List stored references.
    List {
        #[arg(long)]
        model: Option<u32>,
        #[arg(long)]
        store: Option<PathBuf>,
    },
    /// Generate a synthetic run with the toy simulator.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Act as a simulation executable: read a step namelist on standard input
    /// and extend macroscopic_vars.dat in the current directory.
    ToyStep {
        /// Toy config (default: $SIMREGRESS_TOY_CONFIG or built-in).
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn store_root(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os("SIMREGRESS_STORE").filter(|v| !v.is_empty()).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_STORE_ROOT))
}

fn load_series(dir: &Path, layout: Option<&ColumnLayout>) -> Result<MacroscopicSeries> {
    let series = parse_macroscopic(&dir.join(benchstore::MACROSCOPIC_FILE), layout)
        .with_context(|| format!("reading run {}", dir.display()))?;
    if Quantity::ALL.iter().all(|&q| series.has_growth(q)) {
        Ok(series)
    } else {
        Ok(series.derive_all_growth_rates()?)
    }
}

fn parse_window(s: &str) -> Result<(f64, f64)> {
    let (a, b) = s.split_once(':').ok_or_else(|| anyhow!("window must be START:END"))?;
    Ok((a.trim().parse()?, b.trim().parse()?))
}

fn toy_config(path: Option<PathBuf>) -> Result<ToyConfig> {
    let path = path.or_else(|| std::env::var_os("SIMREGRESS_TOY_CONFIG").filter(|v| !v.is_empty()).map(PathBuf::from));
    Ok(match path {
        Some(p) => ToyConfig::from_file(&p)?,
        None => ToyConfig::default(),
    })
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Compare {
            model,
            run_dir,
            ref_dir,
            thr,
            window,
            layout,
            extract_dir,
        } => {
            let scenario = load_scenario(&ScenarioSource::parse(&model), &Registry::from_env())?;
            let mut spec = scenario.metric_defaults.clone();
            if let Some(thr) = thr {
                spec = spec.with_threshold(thr)?;
            }
            if let Some(w) = window {
                let (a, b) = parse_window(&w)?;
                spec = spec.with_window(a, b)?;
            }
            let layout = layout.map(|p| ColumnLayout::from_file(&p)).transpose()?;
            let reference = load_series(&ref_dir, layout.as_ref())?;
            let candidate = load_series(&run_dir, layout.as_ref())?;
            let (f1, f2) = if extract_dir == Path::new(".") {
                (PathBuf::from("f1"), PathBuf::from("f2"))
            } else {
                (extract_dir.join("f1"), extract_dir.join("f2"))
            };
            let report = compare_and_extract(&reference, &candidate, &spec, &f1, &f2)?;
            print!("{}", render_report(&report));
            Ok(match report.verdict {
                Verdict::Ok => ExitCode::SUCCESS,
                Verdict::Fail => ExitCode::from(1),
            })
        }
        Command::Run {
            prefix,
            model,
            dry_run,
            resume,
            exe,
            compile_cmd,
            no_compile,
        } => {
            let scenario = load_scenario(&ScenarioSource::parse(&model), &Registry::from_env())?;
            let mut env = LaunchEnvironment::from_env();
            env.dry_run = dry_run;
            env.resume = resume;
            if exe.is_some() {
                env.executable = exe;
            }
            if let Some(c) = compile_cmd {
                env.compile_command = c;
            }
            if no_compile {
                env.compile_first = false;
            }
            let dir = launch(&scenario, &env, &prefix)?;
            if dir.dry_run {
                println!("wrote {}", dir.script().display());
            } else {
                println!(
                    "{}: {}/{} executions completed",
                    dir.path.display(),
                    dir.steps_completed,
                    dir.steps_total
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Timing {
            keyword,
            log_file,
            limit,
            dirs,
        } => {
            let keyword = TimerKeyword::new(&keyword)?;
            print!("{}", timing_bench(&keyword, &log_file, limit, &dirs));
            Ok(ExitCode::SUCCESS)
        }
        Command::ScaleReport {
            log,
            iter,
            exclude_pathological,
            machine,
            runs,
        } => {
            let mut parsed = Vec::with_capacity(runs.len());
            for r in &runs {
                let (config, dir) = r
                    .split_once(':')
                    .ok_or_else(|| anyhow!("`{r}`: expected <config>:<run_dir>"))?;
                parsed.push((config.parse::<RunConfig>()?, PathBuf::from(dir)));
            }
            let table = scaling_report(&parsed, &log, iter)?;
            if machine {
                print!("{}", table.render_machine(exclude_pathological));
            } else {
                print!("{}", table.render_text(exclude_pathological));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Store { run_dir, dest, store } => {
            let (model, label) = benchstore::parse_destination(&dest)?;
            let entry = benchstore::store_reference(&store_root(store), &run_dir, model, &label)?;
            println!("stored {} ({})", entry.path.display(), entry.files.join(" "));
            println!("fill in {} to describe the machine", entry.path.join(benchstore::README_FILE).display());
            Ok(ExitCode::SUCCESS)
        }
        Command::List { model, store } => {
            for e in benchstore::list_references(&store_root(store), model)? {
                println!("model{}/{}  ( {} )", e.model_id, e.label, e.metadata.comment);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Simulate { config, out, seed } => {
            let mut cfg = toy_config(config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let run = toysim::write_run(&cfg, &out)?;
            println!("wrote {}", run.macroscopic().display());
            Ok(ExitCode::SUCCESS)
        }
        Command::ToyStep { config } => {
            let cfg = toy_config(config)?;
            let mut input = String::new();
            std::io::stdin().read_to_string(&mut input)?;
            if input.trim().is_empty() {
                bail!("no step input on standard input");
            }
            let cwd = std::env::current_dir()?;
            print!("{}", toysim::stub_step(&cfg, &input, &cwd)?);
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("simregress: {e:#}");
            ExitCode::from(2)
        }
    }
}
