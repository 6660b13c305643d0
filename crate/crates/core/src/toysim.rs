//! Synthetic stand-in for the simulation code: per-mode energies with a
//! noisy start, an exponential linear phase and a logistic saturation.
//!
//! Noise is multiplicative and drawn from a SplitMix64 stream, so a given
//! config and seed always produce the same bytes, on any platform.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::kv::{Document, KvError};
use crate::scenario::{RunDirectory, Subsequence};
use crate::timeseries::{GrowthProvenance, MacroscopicSeries};
use crate::timers::format_timer_line;

/// Startup noise is this many times larger before `noise_window_end`.
pub const STARTUP_NOISE_FACTOR: f64 = 10.0;
pub const DEFAULT_KINETIC_SCALE: f64 = 0.5;

#[derive(Debug, Error)]
pub enum ToySimError {
    #[error("invalid toy config: {0}")]
    InvalidConfig(String),
    #[error("I/O failure on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl From<KvError> for ToySimError {
    fn from(e: KvError) -> Self {
        ToySimError::InvalidConfig(e.to_string())
    }
}

/// SplitMix64 (Steele, Lea & Flood), the 64-bit mixer used for noise.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)` from the top 53 bits.
    pub fn next_unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[-amp, amp)`.
    pub fn next_symmetric(&mut self, amp: f64) -> f64 {
        amp * (2.0 * self.next_unit() - 1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyConfig {
    /// Linear growth rate of each mode's amplitude, per Alfven time.
    pub gamma: Vec<f64>,
    /// Magnetic energy at t = 0.
    pub e0: Vec<f64>,
    /// Magnetic saturation energy.
    pub e_sat: Vec<f64>,
    /// Kinetic energy = `kinetic_scale` x magnetic model, per mode.
    pub kinetic_scale: Vec<f64>,
    pub noise_amp: f64,
    pub noise_window_end: f64,
    pub seed: u64,
    pub subsequence: Subsequence,
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig {
            gamma: vec![0.03, 0.07],
            e0: vec![1e-12, 1e-12],
            e_sat: vec![1e-2, 1e-2],
            kinetic_scale: vec![DEFAULT_KINETIC_SCALE; 2],
            noise_amp: 1e-3,
            noise_window_end: 20.0,
            seed: 7,
            subsequence: Subsequence {
                tstep_n: vec![1.0, 10.0],
                nstep_n: vec![20, 48],
            },
        }
    }
}

impl ToyConfig {
    pub fn modes(&self) -> usize {
        self.gamma.len()
    }

    /// Parses the `key = value` config format. `tstep_n`/`nstep_n` may sit at
    /// top level or in repeated `[subsequence]` sections, which are chained.
    pub fn parse(text: &str) -> Result<Self, ToySimError> {
        let doc = Document::parse(text)?;
        let root = doc.root();
        let gamma = root.require("gamma")?.reals()?;
        let m = gamma.len();
        if let Some(e) = root.get("modes") {
            let declared: usize = e.int()?;
            if declared != m {
                return Err(ToySimError::InvalidConfig(format!(
                    "modes = {declared} but {m} growth rates given"
                )));
            }
        }
        let per_mode = |key: &str, default: Option<f64>| -> Result<Vec<f64>, ToySimError> {
            match (root.get(key), default) {
                (Some(e), _) => {
                    let v = e.reals()?;
                    Ok(if v.len() == 1 { vec![v[0]; m] } else { v })
                }
                (None, Some(d)) => Ok(vec![d; m]),
                (None, None) => Err(KvError::MissingKey {
                    section: String::new(),
                    key: key.to_string(),
                }
                .into()),
            }
        };
        let mut parts: Vec<Subsequence> = Vec::new();
        if root.get("tstep_n").is_some() || root.get("nstep_n").is_some() {
            parts.push(Subsequence::from_section(root)?);
        }
        for section in doc.sections_named("subsequence") {
            parts.push(Subsequence::from_section(section)?);
        }
        let config = ToyConfig {
            e0: per_mode("e0", None)?,
            e_sat: per_mode("e_sat", None)?,
            kinetic_scale: per_mode("kinetic_scale", Some(DEFAULT_KINETIC_SCALE))?,
            gamma,
            noise_amp: root.get("noise_amp").map(|e| e.real()).transpose()?.unwrap_or(0.0),
            noise_window_end: root
                .get("noise_window_end")
                .map(|e| e.real())
                .transpose()?
                .unwrap_or(0.0),
            seed: root.get("seed").map(|e| e.int()).transpose()?.unwrap_or(0),
            subsequence: Subsequence::concat(&parts),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self, ToySimError> {
        let text = fs::read_to_string(path).map_err(|source| ToySimError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<(), ToySimError> {
        let bad = |msg: String| Err(ToySimError::InvalidConfig(msg));
        let m = self.modes();
        if m == 0 {
            return bad("at least one mode is required".into());
        }
        for (name, len) in [
            ("e0", self.e0.len()),
            ("e_sat", self.e_sat.len()),
            ("kinetic_scale", self.kinetic_scale.len()),
        ] {
            if len != m {
                return bad(format!("{name} has {len} entries for {m} modes"));
            }
        }
        for k in 0..m {
            if !(self.gamma[k] > 0.0 && self.gamma[k].is_finite()) {
                return bad(format!("gamma[{k}] must be positive"));
            }
            if !(self.e0[k] > 0.0 && self.e0[k].is_finite()) {
                return bad(format!("e0[{k}] must be positive"));
            }
            if !(self.e_sat[k] > self.e0[k] && self.e_sat[k].is_finite()) {
                return bad(format!("e_sat[{k}] must exceed e0[{k}]"));
            }
            if !(self.kinetic_scale[k] > 0.0 && self.kinetic_scale[k].is_finite()) {
                return bad(format!("kinetic_scale[{k}] must be positive"));
            }
        }
        if !(self.noise_amp >= 0.0 && self.noise_amp < 1.0) {
            return bad("noise_amp must lie in [0, 1)".into());
        }
        if self.noise_window_end > 0.0 && self.noise_amp * STARTUP_NOISE_FACTOR >= 1.0 {
            return bad("amplified startup noise must stay below 1".into());
        }
        if !self.noise_window_end.is_finite() {
            return bad("noise_window_end must be finite".into());
        }
        self.subsequence.validate().or_else(bad)
    }

    /// Noiseless magnetic energy of mode `k` at time `t`:
    /// `e_sat e0 e^{2 gamma t} / (e_sat + e0 (e^{2 gamma t} - 1))`, evaluated
    /// in the overflow-free form `e_sat / (1 + (e_sat / e0 - 1) e^{-2 gamma t})`.
    pub fn energy(&self, k: usize, t: f64) -> f64 {
        let ratio = self.e_sat[k] / self.e0[k] - 1.0;
        self.e_sat[k] / (1.0 + ratio * (-2.0 * self.gamma[k] * t).exp())
    }

    /// Conservative bound on the in-window relative difference of growth
    /// rates between two seeds: `4 (10 a) / (2 min|gamma| min dt)`.
    pub fn reldiff_bound(&self) -> f64 {
        let min_gamma = self.gamma.iter().cloned().fold(f64::INFINITY, f64::min);
        let min_dt = self
            .subsequence
            .tstep_n
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        4.0 * (STARTUP_NOISE_FACTOR * self.noise_amp) / (min_gamma * min_dt * 2.0)
    }

    pub fn final_time(&self) -> f64 {
        self.subsequence.time_grid().last().copied().unwrap_or(0.0)
    }
}

/// Generates the series: noisy logistic energies, growth rates derived with
/// the backward log-difference.
pub fn simulate(config: &ToyConfig) -> Result<MacroscopicSeries, ToySimError> {
    config.validate()?;
    let m = config.modes();
    let times = config.subsequence.time_grid();
    let mut rng = SplitMix64::new(config.seed);
    let mut magnetic_energy = Vec::with_capacity(times.len());
    let mut kinetic_energy = Vec::with_capacity(times.len());
    for &t in &times {
        let amp = if t < config.noise_window_end {
            config.noise_amp * STARTUP_NOISE_FACTOR
        } else {
            config.noise_amp
        };
        let mut mag = Vec::with_capacity(m);
        let mut kin = Vec::with_capacity(m);
        for k in 0..m {
            let base = config.energy(k, t);
            let eta_mag = rng.next_symmetric(amp);
            let eta_kin = rng.next_symmetric(amp);
            mag.push(base * (1.0 + eta_mag));
            kin.push(config.kinetic_scale[k] * base * (1.0 + eta_kin));
        }
        magnetic_energy.push(mag);
        kinetic_energy.push(kin);
    }
    let series = MacroscopicSeries {
        magnetic_growth: vec![vec![None; m]; times.len()],
        kinetic_growth: vec![vec![None; m]; times.len()],
        times,
        modes: (1..=m as u32).collect(),
        magnetic_energy,
        kinetic_energy,
        growth_provenance: GrowthProvenance::File,
    };
    series
        .derive_all_growth_rates()
        .map_err(|e| ToySimError::InvalidConfig(e.to_string()))
}

/// Fake per-iteration timings written to `out_loop1`.
const FAKE_TIMINGS: [(&str, f64); 7] = [
    ("construct_matrix", 1.25),
    ("distribute", 0.125),
    ("coicsr", 0.0625),
    ("analysis", 0.5),
    ("facto", 2.0),
    ("gmres/solve", 0.75),
    ("ITERATION", 4.75),
];

/// `out_loop1` contents: a few iterations of timer lines in log grammar.
pub fn fake_log(config: &ToyConfig) -> String {
    let mut out = String::new();
    let _ = writeln!(out, " toy simulator, {} modes, seed {}", config.modes(), config.seed);
    for it in 1..=3 {
        let _ = writeln!(out, " time step {it}");
        for (name, secs) in FAKE_TIMINGS {
            // analysis and factorisation happen on the first iteration only
            let secs = if it > 1 && matches!(name, "analysis" | "facto") {
                0.0
            } else {
                secs
            };
            out.push_str(&format_timer_line(0, name, secs));
            out.push('\n');
        }
    }
    out
}

/// Writes `macroscopic_vars.dat` and `out_loop1` into `dir` (created if
/// needed).
pub fn write_run(config: &ToyConfig, dir: &Path) -> Result<RunDirectory, ToySimError> {
    let series = simulate(config)?;
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| ToySimError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    let run = RunDirectory {
        path: dir.to_path_buf(),
        steps_total: 1,
        steps_completed: 1,
        dry_run: false,
    };
    let macro_path = run.macroscopic();
    fs::write(&macro_path, series.to_canonical_text()).map_err(io(&macro_path))?;
    let log_path = run.log(1);
    fs::write(&log_path, fake_log(config)).map_err(io(&log_path))?;
    Ok(run)
}

/// Values of a `&name ... /` namelist, keyed by lower-case name, with
/// quotes stripped and list items split on commas.
fn parse_namelist(input: &str) -> Vec<(String, Vec<String>)> {
    let mut out = Vec::new();
    for line in input.lines() {
        let line = line.trim();
        if line.starts_with('&') || line == "/" {
            continue;
        }
        if let Some((k, v)) = line.split_once('=') {
            let items = v
                .split(',')
                .map(|x| x.trim().trim_matches('\'').to_string())
                .filter(|x| !x.is_empty())
                .collect();
            out.push((k.trim().to_ascii_lowercase(), items));
        }
    }
    out
}

/// One execution of a stand-in for the simulation executable, driven by the
/// namelist a launch feeds on standard input. Evolve steps append records to
/// `macroscopic_vars.dat` in `dir`, continuing from its last time, and the
/// growth rates of the whole file are re-derived. Returns the log text.
pub fn stub_step(config: &ToyConfig, input: &str, dir: &Path) -> Result<String, ToySimError> {
    config.validate()?;
    let bad = |msg: String| ToySimError::InvalidConfig(msg);
    let nl = parse_namelist(input);
    let get = |key: &str| nl.iter().find(|(k, _)| k == key).map(|(_, v)| v.clone());
    let kind = get("step_kind").and_then(|v| v.first().cloned()).unwrap_or_default();
    let mut log = format!(" toy step: {kind}\n");
    if kind != "evolve" {
        log.push_str(&fake_log(config));
        return Ok(log);
    }
    let tstep_n = get("tstep_n")
        .ok_or_else(|| bad("evolve step without tstep_n".into()))?
        .iter()
        .map(|x| crate::numfmt::parse_real(x).ok_or_else(|| bad(format!("bad tstep_n value {x}"))))
        .collect::<Result<Vec<f64>, _>>()?;
    let nstep_n = get("nstep_n")
        .ok_or_else(|| bad("evolve step without nstep_n".into()))?
        .iter()
        .map(|x| x.parse().map_err(|_| bad(format!("bad nstep_n value {x}"))))
        .collect::<Result<Vec<u64>, _>>()?;
    let sub = Subsequence::new(tstep_n, nstep_n).map_err(bad)?;

    let path = dir.join(crate::benchstore::MACROSCOPIC_FILE);
    let m = config.modes();
    let mut series = if path.is_file() {
        crate::timeseries::parse_macroscopic(&path, None).map_err(|e| bad(e.to_string()))?
    } else {
        MacroscopicSeries {
            times: Vec::new(),
            modes: (1..=m as u32).collect(),
            magnetic_energy: Vec::new(),
            kinetic_energy: Vec::new(),
            magnetic_growth: Vec::new(),
            kinetic_growth: Vec::new(),
            growth_provenance: GrowthProvenance::File,
        }
    };
    if series.n_modes() != m {
        return Err(bad(format!("{} has {} modes, config has {m}", path.display(), series.n_modes())));
    }
    let (start, skip) = match series.times.last() {
        Some(&t) => (t, 1),
        None => (0.0, 0),
    };
    let mut rng = SplitMix64::new(config.seed ^ (series.len() as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    for t in sub.time_grid().into_iter().skip(skip).map(|dt| start + dt) {
        let amp = if t < config.noise_window_end {
            config.noise_amp * STARTUP_NOISE_FACTOR
        } else {
            config.noise_amp
        };
        let mut mag = Vec::with_capacity(m);
        let mut kin = Vec::with_capacity(m);
        for k in 0..m {
            let base = config.energy(k, t);
            mag.push(base * (1.0 + rng.next_symmetric(amp)));
            kin.push(config.kinetic_scale[k] * base * (1.0 + rng.next_symmetric(amp)));
        }
        series.times.push(t);
        series.magnetic_energy.push(mag);
        series.kinetic_energy.push(kin);
        series.magnetic_growth.push(vec![None; m]);
        series.kinetic_growth.push(vec![None; m]);
    }
    let series = series.derive_all_growth_rates().map_err(|e| bad(e.to_string()))?;
    series.write(&path).map_err(|e| bad(e.to_string()))?;
    log.push_str(&fake_log(config));
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::{compare, MetricSpec, Verdict};
    use crate::timeseries::{parse_macroscopic, Quantity};
    use proptest::prelude::*;

    #[test]
    fn splitmix_reference_values() {
        // first outputs for seed 0 published with the reference implementation
        let mut rng = SplitMix64::new(0);
        assert_eq!(rng.next_u64(), 0xE220_A839_7B1D_CDAF);
        assert_eq!(rng.next_u64(), 0x6E78_9E6A_A1B9_65F4);
        assert_eq!(rng.next_u64(), 0x06C4_5D18_8009_454F);
    }

    #[test]
    fn unit_draws_in_range() {
        let mut rng = SplitMix64::new(42);
        for _ in 0..10_000 {
            let u = rng.next_unit();
            assert!((0.0..1.0).contains(&u));
            let s = rng.next_symmetric(0.3);
            assert!((-0.3..0.3).contains(&s));
        }
    }

    fn noiseless(gamma: Vec<f64>) -> ToyConfig {
        let m = gamma.len();
        ToyConfig {
            gamma,
            e0: vec![1e-30; m],
            e_sat: vec![1.0; m],
            kinetic_scale: vec![0.5; m],
            noise_amp: 0.0,
            noise_window_end: 0.0,
            seed: 1,
            subsequence: Subsequence::new(vec![1.0], vec![400]).unwrap(),
        }
    }

    #[test]
    fn early_growth_equals_configured_rate() {
        let cfg = noiseless(vec![0.03, 0.07]);
        let s = simulate(&cfg).unwrap();
        assert_eq!(s.growth_provenance, GrowthProvenance::Derived);
        // E/e_sat < 1e-14 up to t = 100 for both modes
        for i in 1..=100 {
            for (k, &g) in cfg.gamma.iter().enumerate() {
                for q in Quantity::ALL {
                    let d = s.growth(q)[i][k].unwrap();
                    assert!((d - g).abs() < 1e-12, "t={} mode {k}: {d}", s.times[i]);
                }
            }
        }
    }

    #[test]
    fn late_growth_decays() {
        let s = simulate(&noiseless(vec![0.5])).unwrap();
        let last = s.magnetic_growth.last().unwrap()[0].unwrap();
        assert!(last.abs() < 1e-12);
    }

    #[test]
    fn same_seed_same_output() {
        let cfg = ToyConfig::default();
        assert_eq!(
            simulate(&cfg).unwrap().to_canonical_text(),
            simulate(&cfg).unwrap().to_canonical_text()
        );
        let other = ToyConfig { seed: 8, ..cfg.clone() };
        assert_ne!(simulate(&cfg).unwrap(), simulate(&other).unwrap());
    }

    #[test]
    fn config_validation() {
        let ok = ToyConfig::default();
        assert!(ok.validate().is_ok());
        let cases = [
            ToyConfig { gamma: vec![0.1], ..ok.clone() },
            ToyConfig { e_sat: vec![1e-13, 1e-2], ..ok.clone() },
            ToyConfig { noise_amp: 1.0, noise_window_end: 0.0, ..ok.clone() },
            ToyConfig { noise_amp: 0.2, ..ok.clone() },
            ToyConfig { gamma: vec![-0.1, 0.1], ..ok.clone() },
        ];
        for c in cases {
            assert!(matches!(simulate(&c), Err(ToySimError::InvalidConfig(_))));
        }
    }

    #[test]
    fn config_text() {
        let cfg = ToyConfig::parse(
            "modes = 2\ngamma = 0.03 0.07\ne0 = 1e-12\ne_sat = 1.0D-2\nnoise_amp = 1e-3\n\
             noise_window_end = 20\nseed = 7\n[subsequence]\ntstep_n = 1\nnstep_n = 20\n\
             [subsequence]\ntstep_n = 10\nnstep_n = 48\n",
        )
        .unwrap();
        assert_eq!(cfg, ToyConfig::default());
        assert!(ToyConfig::parse("modes = 3\ngamma = 0.1\ne0 = 1\ne_sat = 2\ntstep_n = 1\nnstep_n = 1\n").is_err());
        assert!(ToyConfig::parse("gamma = 0.1\ne_sat = 2\ntstep_n = 1\nnstep_n = 1\n").is_err());
    }

    #[test]
    fn write_run_round_trips_through_parser() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ToyConfig::default();
        let run = write_run(&cfg, &dir.path().join("run")).unwrap();
        let text = fs::read_to_string(run.macroscopic()).unwrap();
        let parsed = parse_macroscopic(&run.macroscopic(), None).unwrap();
        parsed.validate().unwrap();
        assert_eq!(parsed.to_canonical_text(), text);
        let log = fs::read_to_string(run.log(1)).unwrap();
        assert!(log.contains("# Elapsed time ITERATION :"));

        let again = write_run(&cfg, &dir.path().join("again")).unwrap();
        assert_eq!(fs::read(again.macroscopic()).unwrap(), text.as_bytes());
        assert_eq!(fs::read_to_string(again.log(1)).unwrap(), log);
    }

    #[test]
    fn stub_steps_extend_the_series() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ToyConfig::default();
        let eq = "&in1\n  step_kind = 'equilibrium'\n  nstep = 0\n/\n";
        stub_step(&cfg, eq, dir.path()).unwrap();
        assert!(!dir.path().join("macroscopic_vars.dat").exists());
        let ev = "&in1\n  step_kind = 'evolve'\n  tstep_n = 1, 10\n  nstep_n = 20, 4\n/\n";
        let log = stub_step(&cfg, ev, dir.path()).unwrap();
        assert!(log.contains("Elapsed time ITERATION"));
        stub_step(&cfg, ev, dir.path()).unwrap();
        let s = parse_macroscopic(&dir.path().join("macroscopic_vars.dat"), None).unwrap();
        assert_eq!(s.len(), 1 + 24 + 24);
        assert_eq!(*s.times.last().unwrap(), 120.0);
        assert!(s.growth(Quantity::Magnetic)[25][0].is_some());
    }

    #[test]
    fn seeds_agree_at_one_percent_but_not_one_ppm() {
        let cfg = ToyConfig::default();
        let a = simulate(&cfg).unwrap();
        let b = simulate(&ToyConfig { seed: 8, ..cfg.clone() }).unwrap();
        // linear phase of both modes, after the startup noise
        let spec = MetricSpec::new(30.0, 120.0, 0.01, Quantity::ALL.to_vec(), vec![1, 2]).unwrap();
        let r = compare(&a, &b, &spec).unwrap();
        assert_eq!(r.verdict, Verdict::Ok, "max {}", r.max_relative_difference);
        assert!(r.max_relative_difference <= cfg.reldiff_bound());
        let strict = spec.with_threshold(1e-6).unwrap();
        assert_eq!(compare(&a, &b, &strict).unwrap().verdict, Verdict::Fail);
    }

    proptest! {
        #[test]
        fn noiseless_envelope(
            gamma in 0.01..1.0f64,
            log_ratio in 5.0..60.0f64,
            dt in 0.05..2.0f64,
            n in 10u64..300,
        ) {
            let cfg = ToyConfig {
                gamma: vec![gamma],
                e0: vec![1.0],
                e_sat: vec![log_ratio.exp()],
                kinetic_scale: vec![1.0],
                noise_amp: 0.0,
                noise_window_end: 0.0,
                seed: 0,
                subsequence: Subsequence::new(vec![dt], vec![n]).unwrap(),
            };
            let s = simulate(&cfg).unwrap();
            let e_sat = cfg.e_sat[0];
            for i in 1..s.len() {
                let (prev, cur) = (s.magnetic_energy[i - 1][0], s.magnetic_energy[i][0]);
                prop_assert!(cur <= e_sat);
                prop_assert!(cur >= prev);
                if cur < e_sat * (1.0 - 1e-9) {
                    prop_assert!(cur > prev);
                }
                let g = s.magnetic_growth[i][0].unwrap();
                prop_assert!(g <= gamma * (1.0 + 1e-9));
                prop_assert!(g >= -1e-12);
                if i >= 2 {
                    let before = s.magnetic_growth[i - 1][0].unwrap();
                    prop_assert!(g <= before + 1e-9 * gamma);
                }
            }
        }
    }
}
