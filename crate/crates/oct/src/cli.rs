//! Subcommands of the `jc-oct` binary.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use jc_core::ensemble::{build_ensemble, integrated_infidelity, CopyKey, Effect, EnsembleProblem, EnsembleSpec};
use jc_core::krotov::{optimize_copies, IterationRecord, OptimizationRecord, StopReason};
use jc_core::model::dressed_spectrum;
use jc_core::observables::{atom_populations, label_peaks_with, photon_moments, photon_statistics, PEAK_THRESHOLD};
use jc_core::{final_time_infidelity, Channel, ControlSet, Dynamics, SystemParams, TimeGrid};
use serde_json::json;

use crate::config::{check_pulse_grid, load_pulse, ConfigError, Resolved, RunConfig};
use crate::formats::{
    log_header, log_line, write_peaks, write_per_copy, write_pulse, write_series, write_spectrum, write_state,
    TOOL_VERSION,
};
use crate::parallel::{Parallel, WallClock};
use crate::spectrum::{pulse_spectrum, DEFAULT_PADDING};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "JC_OCT_OUT";

#[derive(Debug, Parser)]
#[command(
    name = "jc-oct",
    version,
    about = "Krotov pulse optimization for an atom coupled to a cavity mode"
)]
pub struct Cli {
    /// Worker threads for ensemble runs (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimize the pulse described by a run config.
    Optimize(RunArgs),
    /// Propagate a pulse file and write populations and photon statistics.
    Propagate {
        #[command(flatten)]
        run: RunArgs,
        /// Pulse file to propagate.
        #[arg(long)]
        pulse: PathBuf,
    },
    /// Spectrum and labeled peaks of a pulse file.
    Analyze(AnalyzeArgs),
    /// Robust optimization over the ensemble of perturbed systems in a run config.
    Ensemble {
        #[command(flatten)]
        run: RunArgs,
        /// Optimize each effect separately and print the per-effect summary.
        #[arg(long)]
        per_effect: bool,
        /// Only evaluate a pulse on the ensemble. Without a file, the nominal
        /// optimum of the config is computed first.
        #[arg(long, value_name = "PULSE", num_args = 0..=1)]
        evaluate: Option<Option<PathBuf>>,
    },
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Run config (TOML).
    #[arg(value_name = "CONFIG", required_unless_present = "config")]
    pub config_pos: Option<PathBuf>,
    #[arg(long, conflicts_with = "config_pos")]
    pub config: Option<PathBuf>,
    /// Output directory (default: [output] dir, else $JC_OCT_OUT/<config name>).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Pulse file.
    #[arg(value_name = "PULSE", required_unless_present = "pulse")]
    pub pulse_pos: Option<PathBuf>,
    #[arg(long, conflicts_with = "pulse_pos")]
    pub pulse: Option<PathBuf>,
    /// Run config supplying g, detuning and n_max for the dressed levels.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Zero-padding factor of the transform.
    #[arg(long, default_value_t = DEFAULT_PADDING)]
    pub padding: usize,
    /// Largest distance between a peak and a dressed transition, kHz.
    #[arg(long, default_value_t = 0.1)]
    pub tolerance: f64,
    /// Peaks below this fraction of the maximum are ignored.
    #[arg(long, default_value_t = PEAK_THRESHOLD)]
    pub threshold: f64,
    /// Coupling used without a config, kHz.
    #[arg(long, default_value_t = 50.0)]
    pub g_khz: f64,
    /// Fock truncation used without a config.
    #[arg(long, default_value_t = 10)]
    pub n_max: usize,
}

/// Failure carrying its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Model(m) => m.into(),
            other => Failure::input(other.to_string()),
        }
    }
}

impl From<jc_core::Error> for Failure {
    fn from(e: jc_core::Error) -> Self {
        use jc_core::Error::*;
        let code = match e {
            InvalidParameter(_) | DimensionMismatch { .. } => EXIT_INPUT,
            Truncation { .. } | ShapeDivision { .. } | NonFiniteUpdate { .. } | NonMonotonic { .. } => {
                EXIT_NOT_CONVERGED
            }
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

type CmdResult = Result<i32, Failure>;

/// Parses `args` (including the program name) and runs the command; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    if let Some(n) = cli.threads {
        if rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
            eprintln!("warning: thread pool already initialized; --threads ignored");
        }
    }
    let result = match cli.command {
        Command::Optimize(run) => cmd_optimize(&run),
        Command::Propagate { run, pulse } => cmd_propagate(&run, &pulse),
        Command::Analyze(args) => cmd_analyze(&args),
        Command::Ensemble {
            run,
            per_effect,
            evaluate,
        } => cmd_ensemble(&run, per_effect, evaluate.as_ref().map(|e| e.as_deref())),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn config_path(run: &RunArgs) -> &Path {
    run.config
        .as_deref()
        .or(run.config_pos.as_deref())
        .expect("clap requires a config")
}

fn load(run: &RunArgs) -> Result<(Resolved, PathBuf), Failure> {
    let path = config_path(run);
    let mut config = RunConfig::load(path)?;
    if let Some(seed) = run.seed {
        config.seed = seed;
    }
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let out = output_dir(run.out.as_deref(), config.output.dir.as_deref(), &base, path);
    let resolved = config.resolve(&base)?;
    Ok((resolved, out))
}

fn output_dir(flag: Option<&Path>, configured: Option<&Path>, base: &Path, config: &Path) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Some(p) = configured {
        return base.join(p);
    }
    let root = std::env::var_os(OUT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("jc-oct-out"));
    let stem = config
        .file_stem()
        .map(|s| s.to_os_string())
        .unwrap_or_else(|| "run".into());
    root.join(stem)
}

struct Writer {
    dir: PathBuf,
}

impl Writer {
    fn new(dir: &Path) -> Result<Self, Failure> {
        std::fs::create_dir_all(dir).map_err(|e| Failure::input(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf() })
    }

    fn write(&self, name: &str, contents: &str) -> Result<(), Failure> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)
                .map_err(|e| Failure::input(format!("cannot create {}: {e}", parent.display())))?;
        }
        std::fs::write(&path, contents).map_err(|e| Failure::input(format!("cannot write {}: {e}", path.display())))
    }

    fn json(&self, name: &str, value: &serde_json::Value) -> Result<(), Failure> {
        let mut text = serde_json::to_string_pretty(value).expect("json values serialize");
        text.push('\n');
        self.write(name, &text)
    }
}

fn stop_name(reason: StopReason) -> &'static str {
    match reason {
        StopReason::Converged => "converged",
        StopReason::Stalled => "stalled",
        StopReason::MaxIterations => "max_iterations",
    }
}

/// Krotov run over `copies`, logging every iteration to `log` and to stderr every 100 iterations.
fn run_krotov(
    resolved: &Resolved,
    copies: &[Dynamics],
    guess: &ControlSet,
    hold_steps: usize,
    robust: bool,
    label: &str,
) -> (Result<OptimizationRecord, jc_core::Error>, String) {
    let mut config = resolved.optimization_config();
    config.guess = guess.clone();
    config.hold_steps = hold_steps;
    if let (true, Some(e)) = (robust, &resolved.config.ensemble) {
        config.stop_delta_j = e.stop_delta_j;
    }
    let mut log = log_header(&resolved.config_sha256);
    let mut monitor = WallClock::new(|r: &IterationRecord| {
        log.push_str(&log_line(r));
        if r.iteration.is_multiple_of(100) {
            eprintln!(
                "{label} iter {:>5}  J_tau {:.6e}  {:.0} ms",
                r.iteration, r.j_tau, r.wall_ms
            );
        }
    });
    let record = optimize_copies(
        copies,
        &resolved.initial,
        &resolved.target,
        &config,
        &Parallel,
        &mut monitor,
    );
    (record, log)
}

fn nominal_dynamics(resolved: &Resolved) -> Result<Vec<Dynamics>, Failure> {
    Ok(vec![resolved.dynamics()?])
}

fn record_json(record: &OptimizationRecord) -> serde_json::Value {
    json!({
        "final_infidelity": record.final_infidelity(),
        "iterations": record.iteration_count(),
        "stop_reason": stop_name(record.stop_reason),
        "initial_infidelity": record.iterations.first().map(|r| r.j_tau),
    })
}

fn cmd_optimize(run: &RunArgs) -> CmdResult {
    let (resolved, out) = load(run)?;
    if resolved.guess.active_directions().is_empty() {
        return Err(Failure::input("[channels] enables no control channel"));
    }
    let copies = nominal_dynamics(&resolved)?;
    let w = Writer::new(&out)?;
    let (record, log) = run_krotov(&resolved, &copies, &resolved.guess, 1, false, "optimize");
    w.write("log.csv", &log)?;
    let record = match record {
        Ok(r) => r,
        Err(e) => {
            w.json(
                "summary.json",
                &json!({"tool": TOOL_VERSION, "config_sha256": resolved.config_sha256, "command": "optimize", "error": e.to_string()}),
            )?;
            return Err(e.into());
        }
    };
    let sha = &resolved.config_sha256;
    w.write("pulse.csv", &write_pulse(&record.controls, &resolved.grid, sha))?;
    let d = &copies[0];
    let fin = jc_core::StateVector::from_amplitudes(
        d.n_max(),
        d.final_state(resolved.initial.amplitudes(), &record.controls)?,
    )?;
    w.write("final_state.csv", &write_state(&fin, sha))?;
    let (mean_n, delta_n) = photon_moments(&fin.photon_distribution());
    let j = final_time_infidelity(&fin, &resolved.target);
    let met = j <= resolved.config.stopping.stop_infidelity;
    let mut summary = record_json(&record);
    let extra = json!({
        "tool": TOOL_VERSION,
        "config_sha256": sha,
        "command": "optimize",
        "target": resolved.config.target.name,
        "mean_n": mean_n,
        "delta_n": delta_n,
        "stop_infidelity_met": met,
    });
    merge(&mut summary, extra);
    w.json("summary.json", &summary)?;
    println!(
        "final J_tau = {:.6e} after {} iterations ({}); <n> = {mean_n:.6}, dn = {delta_n:.3e}",
        record.final_infidelity(),
        record.iteration_count(),
        stop_name(record.stop_reason)
    );
    println!("artifacts in {}", out.display());
    Ok(if met { EXIT_OK } else { EXIT_NOT_CONVERGED })
}

fn merge(into: &mut serde_json::Value, from: serde_json::Value) {
    if let (Some(a), serde_json::Value::Object(b)) = (into.as_object_mut(), from) {
        a.extend(b);
    }
}

fn pulse_controls(resolved: &Resolved, path: &Path) -> Result<ControlSet, Failure> {
    let data = load_pulse(path)?;
    check_pulse_grid(&data, &resolved.grid)?;
    Ok(data.controls(data.inferred_layout())?)
}

fn cmd_propagate(run: &RunArgs, pulse: &Path) -> CmdResult {
    let (resolved, out) = load(run)?;
    let controls = pulse_controls(&resolved, pulse)?;
    let d = resolved.dynamics()?;
    let traj = d.forward(resolved.initial.amplitudes(), &controls)?;
    let sha = &resolved.config_sha256;
    let times: Vec<f64> = (0..traj.len()).map(|j| resolved.grid.state_time(j)).collect();
    let pops: Vec<Vec<f64>> = atom_populations(&traj).into_iter().map(|(g, e)| vec![g, e]).collect();
    let photons: Vec<Vec<f64>> = photon_statistics(&traj).into_iter().map(|(m, s)| vec![m, s]).collect();
    let w = Writer::new(&out)?;
    w.write(
        "populations.csv",
        &write_series(&times, &["rho_gg", "rho_ee"], &pops, sha),
    )?;
    w.write(
        "photons.csv",
        &write_series(&times, &["mean_n", "delta_n"], &photons, sha),
    )?;
    let fin = traj.final_state();
    w.write("final_state.csv", &write_state(&fin, sha))?;
    let j = final_time_infidelity(&fin, &resolved.target);
    let (mean_n, delta_n) = photon_moments(&fin.photon_distribution());
    w.json(
        "summary.json",
        &json!({
            "tool": TOOL_VERSION,
            "config_sha256": sha,
            "command": "propagate",
            "target": resolved.config.target.name,
            "final_infidelity": j,
            "mean_n": mean_n,
            "delta_n": delta_n,
        }),
    )?;
    println!("final J_tau = {j:.6e}; <n> = {mean_n:.6}, dn = {delta_n:.3e}");
    Ok(EXIT_OK)
}

fn cmd_analyze(args: &AnalyzeArgs) -> CmdResult {
    let path = args
        .pulse
        .as_deref()
        .or(args.pulse_pos.as_deref())
        .expect("clap requires a pulse");
    let data = load_pulse(path)?;
    let (params, sha) = match &args.config {
        Some(c) => {
            let config = RunConfig::load(c)?;
            (config.system_params()?, config.sha256())
        }
        None => (SystemParams::new(args.g_khz, 0.0, args.n_max)?, String::from("none")),
    };
    if !(args.tolerance >= 0.0) || !(args.threshold >= 0.0) || args.padding == 0 {
        return Err(Failure::input("tolerance and threshold must be >= 0 and padding >= 1"));
    }
    let grid = TimeGrid::with_dt(data.duration(), data.dt)?;
    let dressed = dressed_spectrum(&params);
    let out = match &args.out {
        Some(o) => o.clone(),
        None => {
            let root = std::env::var_os(OUT_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("jc-oct-out"));
            root.join(
                path.file_stem()
                    .map(|s| s.to_os_string())
                    .unwrap_or_else(|| "pulse".into()),
            )
        }
    };
    let w = Writer::new(&out)?;
    let layout = data.inferred_layout();
    let mut report = String::new();
    for ch in Channel::ALL {
        if layout[ch.index()].is_none() {
            continue;
        }
        let mut spec = pulse_spectrum(&data.samples(ch), &grid, 0.0, args.padding);
        spec.labeled_peaks = label_peaks_with(&spec, &dressed, args.tolerance, args.threshold);
        w.write(&format!("spectrum_{}.csv", ch.name()), &write_spectrum(&spec, &sha))?;
        w.write(
            &format!("peaks_{}.csv", ch.name()),
            &write_peaks(&spec.labeled_peaks, &sha),
        )?;
        writeln!(report, "{} channel: {} peaks", ch.name(), spec.labeled_peaks.len()).unwrap();
        for p in &spec.labeled_peaks {
            let label = p.transition.map(|t| t.to_string()).unwrap_or_else(|| "-".into());
            writeln!(report, "  {:>12.4} kHz  {:.4e}  {label}", p.frequency, p.intensity).unwrap();
        }
    }
    if report.is_empty() {
        report.push_str("pulse drives no channel\n");
    }
    print!("{report}");
    Ok(EXIT_OK)
}

fn ensemble_copies(resolved: &Resolved, spec: &EnsembleSpec) -> Result<(Vec<CopyKey>, Vec<Dynamics>), Failure> {
    let copies = build_ensemble(spec, &resolved.params, &resolved.grid)?;
    let keys = copies.iter().map(|c| c.key).collect();
    let dynamics = jc_core::ensemble::compile(&copies, resolved.grid, &Parallel)?
        .into_iter()
        .map(|d| d.with_leakage_limit(resolved.leakage_limit))
        .collect();
    Ok((keys, dynamics))
}

fn ensemble_problem(resolved: &Resolved, spec: &EnsembleSpec) -> EnsembleProblem {
    EnsembleProblem {
        initial: resolved.initial.clone(),
        target: resolved.target.clone(),
        params: resolved.params,
        grid: resolved.grid,
        spec: spec.clone(),
    }
}

struct EnsembleOutcome {
    record: OptimizationRecord,
    integrated: jc_core::ensemble::IntegratedInfidelity,
}

/// Robust optimization of one ensemble, writing pulse, log and per-copy results under `prefix`.
fn robust_run(
    resolved: &Resolved,
    spec: &EnsembleSpec,
    guess: &ControlSet,
    w: &Writer,
    prefix: &str,
    label: &str,
) -> Result<EnsembleOutcome, Failure> {
    let resolved = &resolved.for_ensemble(spec)?;
    let (keys, dynamics) = ensemble_copies(resolved, spec)?;
    let hold = spec.hold_steps(&resolved.grid)?;
    eprintln!("{label}: {} copies", dynamics.len());
    let (record, log) = run_krotov(resolved, &dynamics, guess, hold, true, label);
    w.write(&format!("{prefix}log.csv"), &log)?;
    let record = record?;
    let sha = &resolved.config_sha256;
    w.write(
        &format!("{prefix}pulse.csv"),
        &write_pulse(&record.controls, &resolved.grid, sha),
    )?;
    w.write(
        &format!("{prefix}per_copy.csv"),
        &write_per_copy(&keys, &record.per_copy, sha),
    )?;
    let integrated = integrated_infidelity(
        &record.controls,
        &ensemble_problem(resolved, spec),
        &resolved.config.quadrature(),
        &Parallel,
    )?;
    Ok(EnsembleOutcome { record, integrated })
}

fn nominal_pulse(resolved: &Resolved, w: &Writer) -> Result<ControlSet, Failure> {
    if resolved.guess.active_directions().is_empty() {
        return Err(Failure::input("[channels] enables no control channel"));
    }
    let copies = nominal_dynamics(resolved)?;
    let (record, log) = run_krotov(resolved, &copies, &resolved.guess, 1, false, "nominal");
    w.write("nominal_log.csv", &log)?;
    let record = record?;
    w.write(
        "nominal_pulse.csv",
        &write_pulse(&record.controls, &resolved.grid, &resolved.config_sha256),
    )?;
    eprintln!(
        "nominal: J_tau = {:.6e} after {} iterations",
        record.final_infidelity(),
        record.iteration_count()
    );
    Ok(record.controls)
}

fn evaluate_on(
    resolved: &Resolved,
    spec: &EnsembleSpec,
    controls: &ControlSet,
) -> Result<(Vec<CopyKey>, f64, Vec<f64>), Failure> {
    let resolved = &resolved.for_ensemble(spec)?;
    let (keys, dynamics) = ensemble_copies(resolved, spec)?;
    let held = controls.block_averaged(spec.hold_steps(&resolved.grid)?);
    let (mean, per_copy) =
        jc_core::ensemble::ensemble_infidelity(&held, &dynamics, &resolved.target, &resolved.initial, &Parallel)?;
    Ok((keys, mean, per_copy))
}

/// The part of `spec` that belongs to one effect.
fn restrict(spec: &EnsembleSpec, effect: Effect) -> EnsembleSpec {
    let mut out = EnsembleSpec::nominal();
    out.geometry = spec.geometry;
    match effect {
        Effect::Coupling => out.positions = spec.positions.clone(),
        Effect::CrossTalk => out.crosstalk = spec.crosstalk.clone(),
        Effect::CavityFrequency => out.frequency_offsets = spec.frequency_offsets.clone(),
        Effect::Digitization => out.noise = spec.noise.clone(),
    }
    out
}

fn cmd_ensemble(run: &RunArgs, per_effect: bool, evaluate: Option<Option<&Path>>) -> CmdResult {
    let (resolved, out) = load(run)?;
    let spec = resolved
        .config
        .ensemble_spec()?
        .ok_or_else(|| Failure::input("ensemble runs need an [ensemble] section"))?;
    let sha = resolved.config_sha256.clone();
    let w = Writer::new(&out)?;

    if let Some(pulse) = evaluate {
        let controls = match pulse {
            Some(p) => pulse_controls(&resolved, p)?,
            None => nominal_pulse(&resolved, &w)?,
        };
        let (keys, mean, per_copy) = evaluate_on(&resolved, &spec, &controls)?;
        w.write("per_copy.csv", &write_per_copy(&keys, &per_copy, &sha))?;
        let d = resolved.dynamics()?;
        let fin =
            jc_core::StateVector::from_amplitudes(d.n_max(), d.final_state(resolved.initial.amplitudes(), &controls)?)?;
        let nominal = final_time_infidelity(&fin, &resolved.target);
        w.json(
            "summary.json",
            &json!({
                "tool": TOOL_VERSION,
                "config_sha256": sha,
                "command": "ensemble --evaluate",
                "copies": keys.len(),
                "nominal_infidelity": nominal,
                "ensemble_mean_infidelity": mean,
            }),
        )?;
        println!("nominal J_tau = {nominal:.6e}");
        println!("ensemble mean J_tau over {} copies = {mean:.6e}", keys.len());
        return Ok(EXIT_OK);
    }

    if per_effect {
        let nominal = nominal_pulse(&resolved, &w)?;
        let mut table = format!(
            "# {TOOL_VERSION}; config_sha256={sha}\neffect,copies,start,nominal_mean_J,robust_mean_J,integrated_J,integrated_std_error,iterations,stop_reason\n"
        );
        let mut rows = Vec::new();
        let mut all_converged = true;
        for effect in spec.effects() {
            let sub = restrict(&spec, effect);
            let (_, nominal_mean, _) = evaluate_on(&resolved, &sub, &nominal)?;
            let (_, guess_mean, _) = evaluate_on(&resolved, &sub, &resolved.guess)?;
            let (start, start_name) = if guess_mean < nominal_mean {
                (&resolved.guess, "guess")
            } else {
                (&nominal, "nominal")
            };
            let dir = format!("effect_{}/", effect_slug(effect));
            let o = robust_run(&resolved, &sub, start, &w, &dir, effect.label())?;
            all_converged &= o.record.stop_reason != StopReason::MaxIterations;
            writeln!(
                table,
                "{},{},{},{:.6e},{:.6e},{:.6e},{:.3e},{},{}",
                effect.label(),
                sub.copy_count(),
                start_name,
                nominal_mean,
                o.record.final_infidelity(),
                o.integrated.mean,
                o.integrated.std_error,
                o.record.iteration_count(),
                stop_name(o.record.stop_reason)
            )
            .unwrap();
            rows.push(json!({
                "effect": effect.label(),
                "copies": sub.copy_count(),
                "start": start_name,
                "guess_mean_infidelity": guess_mean,
                "nominal_mean_infidelity": nominal_mean,
                "robust_mean_infidelity": o.record.final_infidelity(),
                "integrated_infidelity": o.integrated.mean,
                "integrated_std_error": o.integrated.std_error,
                "integrated_evaluations": o.integrated.evaluations,
                "iterations": o.record.iteration_count(),
                "stop_reason": stop_name(o.record.stop_reason),
            }));
        }
        w.write("per_effect.csv", &table)?;
        w.json(
            "summary.json",
            &json!({"tool": TOOL_VERSION, "config_sha256": sha, "command": "ensemble --per-effect", "effects": rows}),
        )?;
        println!(
            "{:<10} {:>6} {:>14} {:>14} {:>14}",
            "effect", "copies", "nominal J", "robust J", "integrated J"
        );
        for r in &rows {
            println!(
                "{:<10} {:>6} {:>14.4e} {:>14.4e} {:>14.4e}",
                r["effect"].as_str().unwrap_or(""),
                r["copies"],
                r["nominal_mean_infidelity"].as_f64().unwrap_or(f64::NAN),
                r["robust_mean_infidelity"].as_f64().unwrap_or(f64::NAN),
                r["integrated_infidelity"].as_f64().unwrap_or(f64::NAN),
            );
        }
        return Ok(if all_converged { EXIT_OK } else { EXIT_NOT_CONVERGED });
    }

    if resolved.guess.active_directions().is_empty() {
        return Err(Failure::input("[channels] enables no control channel"));
    }
    let o = robust_run(&resolved, &spec, &resolved.guess, &w, "", "ensemble")?;
    let mut summary = record_json(&o.record);
    merge(
        &mut summary,
        json!({
            "tool": TOOL_VERSION,
            "config_sha256": sha,
            "command": "ensemble",
            "copies": spec.copy_count(),
            "effects": spec.effects().iter().map(|e| e.label()).collect::<Vec<_>>(),
            "integrated_infidelity": o.integrated.mean,
            "integrated_std_error": o.integrated.std_error,
            "integrated_evaluations": o.integrated.evaluations,
        }),
    );
    w.json("summary.json", &summary)?;
    println!(
        "ensemble mean J_tau = {:.6e} over {} copies after {} iterations ({}); integrated {:.6e} +- {:.1e}",
        o.record.final_infidelity(),
        spec.copy_count(),
        o.record.iteration_count(),
        stop_name(o.record.stop_reason),
        o.integrated.mean,
        o.integrated.std_error
    );
    Ok(if o.record.stop_reason == StopReason::MaxIterations {
        EXIT_NOT_CONVERGED
    } else {
        EXIT_OK
    })
}

fn effect_slug(effect: Effect) -> &'static str {
    match effect {
        Effect::Coupling => "coupling",
        Effect::CrossTalk => "crosstalk",
        Effect::CavityFrequency => "frequency",
        Effect::Digitization => "digitization",
    }
}
