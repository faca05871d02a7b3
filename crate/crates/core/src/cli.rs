//! Command-line driver: argument parsing, dispatch, output files and the
//! run manifest.

use std::ffi::OsString;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::json;
use serde_json::ser::{Formatter, PrettyFormatter};
use sha2::{Digest, Sha256};

use crate::analysis::{
    c_kpp, critical_speed_no_road, critical_speeds, diffusion_threshold, enlarged_grid, homogeneous_speed_c_h, sweep, SpeedPair,
};
use crate::config::{parse_range, RunConfig};
use crate::discretization::{fmt_f64, OperatorKind};
use crate::dynamics::{evolve_classify, State, Stepper, FIELD_HEADER, ROAD_HEADER};
use crate::eigen::{exhaust_lambda, ExhaustionResult};
use crate::error::{Error, Result};
use crate::model::ReactionTerm;
use crate::verify::verify_suite;

#[derive(Debug, Parser)]
#[command(name = "roadfield", version, about = "Road–field reaction-diffusion with a moving niche")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML configuration file, or a JSON run manifest to reproduce that run.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Maximum number of concurrent evaluations.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Seed for randomized test pairs in `verify`.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Configuration override, e.g. `--set numerics.h=0.5`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Exhausted principal eigenvalue of the coupled system.
    Eigen,
    /// Exhausted principal eigenvalue without the road.
    EigenNoRoad,
    /// Bracketing simulation and persistence/extinction verdict.
    Simulate,
    /// Lower and upper critical speeds, with and without the road.
    CriticalSpeed,
    /// Field-diffusivity threshold at c = 0.
    ThresholdD,
    /// Eigenvalues along one parameter axis.
    Sweep {
        /// One of c, L, d, D, mu, nu.
        #[arg(long)]
        axis: Option<String>,
        /// Values as start:stop:count.
        #[arg(long, allow_hyphen_values = true)]
        values: Option<String>,
        /// Also classify each point by simulation.
        #[arg(long)]
        verdicts: bool,
        /// Skip the road-free eigenvalue column.
        #[arg(long)]
        no_neumann: bool,
    },
    /// Road-enhanced spreading speed of the homogeneous system.
    HomogeneousSpeed,
    /// Built-in battery of identities and bounds.
    Verify {
        /// Run only this check; repeatable.
        #[arg(long)]
        check: Vec<String>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Eigen => "eigen",
            Command::EigenNoRoad => "eigen-no-road",
            Command::Simulate => "simulate",
            Command::CriticalSpeed => "critical-speed",
            Command::ThresholdD => "threshold-d",
            Command::Sweep { .. } => "sweep",
            Command::HomogeneousSpeed => "homogeneous-speed",
            Command::Verify { .. } => "verify",
        }
    }
}

#[derive(Debug, Serialize)]
struct OutputEntry {
    path: String,
    sha256: String,
    bytes: usize,
}

#[derive(Debug, Serialize)]
struct Stage {
    stage: String,
    converged: bool,
    #[serde(flatten)]
    detail: serde_json::Value,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    seed: u64,
    jobs: Option<usize>,
    config: &'a RunConfig,
    wall_clock_seconds: f64,
    stages: &'a [Stage],
    outputs: &'a [OutputEntry],
}

/// Collects output files under the run directory with their digests.
struct Outputs {
    root: PathBuf,
    files: Vec<OutputEntry>,
    stages: Vec<Stage>,
}

impl Outputs {
    fn new(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root)?;
        Ok(Outputs {
            root: root.to_path_buf(),
            files: Vec::new(),
            stages: Vec::new(),
        })
    }

    fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        let path = self.root.join(rel);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(&path, bytes)?;
        self.files.push(OutputEntry {
            path: rel.to_string(),
            sha256: hex(&Sha256::digest(bytes)),
            bytes: bytes.len(),
        });
        Ok(())
    }

    fn json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<()> {
        let mut bytes = json_bytes(value)?;
        bytes.push(b'\n');
        self.write(rel, &bytes)
    }

    fn stage(&mut self, stage: &str, converged: bool, detail: serde_json::Value) {
        self.stages.push(Stage {
            stage: stage.to_string(),
            converged,
            detail,
        });
    }

    fn exhaustion_stage(&mut self, stage: &str, r: &ExhaustionResult) {
        self.stage(stage, r.converged, json!({ "rungs": r.ladder.len(), "lambda_inf": r.lambda_inf }));
    }

    /// Writes `manifest.json` via a temporary file and rename.
    fn finish(self, command: &str, seed: u64, jobs: Option<usize>, config: &RunConfig, started: Instant) -> Result<()> {
        let manifest = Manifest {
            tool: "roadfield",
            version: env!("CARGO_PKG_VERSION"),
            command,
            seed,
            jobs,
            config,
            wall_clock_seconds: started.elapsed().as_secs_f64(),
            stages: &self.stages,
            outputs: &self.files,
        };
        let mut bytes = json_bytes(&manifest)?;
        bytes.push(b'\n');
        let tmp = self.root.join("manifest.json.tmp");
        std::fs::write(&tmp, bytes)?;
        std::fs::rename(tmp, self.root.join("manifest.json"))?;
        Ok(())
    }
}

/// Pretty-printed JSON whose floats carry 17 significant digits, like the
/// CSV outputs.
struct Digits17(PrettyFormatter<'static>);

impl Formatter for Digits17 {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, v: f64) -> io::Result<()> {
        w.write_all(fmt_f64(v).as_bytes())
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, w: &mut W, v: f32) -> io::Result<()> {
        self.write_f64(w, f64::from(v))
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }

    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }

    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

fn json_bytes<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Digits17(PrettyFormatter::new()));
    value.serialize(&mut ser)?;
    Ok(buf)
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn ladder_json(r: &ExhaustionResult) -> serde_json::Value {
    json!({
        "lambda_inf": r.lambda_inf,
        "converged": r.converged,
        "ladder": r.ladder,
        "residual": r.last.residual,
        "iterations": r.last.iterations,
        "grid": r.last_grid,
    })
}

fn run_eigen(cfg: &RunConfig, out: &mut Outputs, kind: OperatorKind) -> Result<bool> {
    let profile = cfg.profile()?;
    let r = exhaust_lambda(&cfg.parameters, &profile, kind, &cfg.numerics.exhaust())?;
    out.exhaustion_stage("exhaustion", &r);
    let mut report = ladder_json(&r);
    report["kind"] = json!(kind);
    out.json("tables/eigen.json", &report)?;
    if kind.has_road() {
        let phi = csv_bytes(|b| r.last.write_road_csv(&r.last_grid, b))?;
        out.write("fields/phi.csv", &phi)?;
    }
    let psi = csv_bytes(|b| r.last.write_field_csv(&r.last_grid, b))?;
    out.write("fields/psi.csv", &psi)?;
    Ok(true)
}

fn write_frame(road: &mut Vec<u8>, field: &mut Vec<u8>, s: &State) -> Result<()> {
    s.write_road_rows(road)?;
    s.write_field_rows(field)
}

fn run_simulate(cfg: &RunConfig, out: &mut Outputs) -> Result<bool> {
    let profile = cfg.profile()?;
    let n = &cfg.numerics;
    let r = exhaust_lambda(&cfg.parameters, &profile, OperatorKind::Coupled, &n.exhaust())?;
    out.exhaustion_stage("exhaustion", &r);
    let grid = enlarged_grid(&r.last_grid, n.enlarge)?;
    let term = ReactionTerm::new(profile);
    let class = evolve_classify(&cfg.parameters, &term, &grid, n.horizon, n.dt, n.steady_tol)?;
    out.stage(
        "classification",
        class.verdict != crate::dynamics::Verdict::Undetermined,
        json!({ "verdict": class.verdict, "t_end": class.t_end, "lambda": class.lambda }),
    );
    let mut report = serde_json::to_value(&class)?;
    report["grid"] = json!(grid);
    out.json("tables/classification.json", &report)?;
    if let Some(s) = &class.steady_state {
        let (mut road, mut field) = (format!("{ROAD_HEADER}\n").into_bytes(), format!("{FIELD_HEADER}\n").into_bytes());
        write_frame(&mut road, &mut field, s)?;
        out.write("fields/steady_road.csv", &road)?;
        out.write("fields/steady_field.csv", &field)?;
    }

    // Trajectory from a Gaussian bump at the niche center.
    let stepper = Stepper::new(&grid, &cfg.parameters, &term, n.dt)?;
    let mut state = State::bump(&grid, 0.0, grid.h / 2.0, 1.0, 1.0);
    state.v.iter_mut().for_each(|v| {
        if *v < (-9.0f64).exp() {
            *v = 0.0;
        }
    });
    let (mut road, mut field) = (format!("{ROAD_HEADER}\n").into_bytes(), format!("{FIELD_HEADER}\n").into_bytes());
    write_frame(&mut road, &mut field, &state)?;
    let steps = (n.horizon / n.dt).ceil() as usize;
    let stride = ((n.snapshot_every / n.dt).round() as usize).max(1);
    for k in 1..=steps {
        state = stepper.step(&state)?;
        if k % stride == 0 || k == steps {
            write_frame(&mut road, &mut field, &state)?;
        }
    }
    out.write("fields/trajectory_road.csv", &road)?;
    out.write("fields/trajectory_field.csv", &field)?;
    Ok(true)
}

fn speed_rows(rows: &[(&str, &SpeedPair)]) -> Vec<u8> {
    let mut s = format!("system,{}\n", SpeedPair::CSV_HEADER);
    for (name, p) in rows {
        s += &format!(
            "{name},{},{},{},{},{}\n",
            fmt_f64(p.c_star),
            fmt_f64(p.c_star_upper),
            fmt_f64(p.bound),
            fmt_f64(p.bracket_width),
            p.provisional
        );
    }
    s.into_bytes()
}

fn run_critical_speed(cfg: &RunConfig, out: &mut Outputs) -> Result<bool> {
    let profile = cfg.profile()?;
    let n = &cfg.numerics;
    let ex = n.exhaust();
    let coupled = critical_speeds(&cfg.parameters, &profile, &ex, n.speed_tol)?;
    out.stage(
        "critical-speeds",
        !coupled.provisional,
        json!({ "bracket_width": coupled.bracket_width }),
    );
    let no_road = critical_speed_no_road(cfg.parameters.field_diffusion, &profile, &ex, n.speed_tol)?;
    out.stage(
        "critical-speed-no-road",
        !no_road.provisional,
        json!({ "bracket_width": no_road.bracket_width }),
    );
    out.json("tables/critical_speeds.json", &json!({ "coupled": coupled, "no_road": no_road }))?;
    out.write(
        "tables/critical_speeds.csv",
        &speed_rows(&[("coupled", &coupled), ("no_road", &no_road)]),
    )?;
    Ok(true)
}

fn run_threshold(cfg: &RunConfig, out: &mut Outputs) -> Result<bool> {
    let profile = cfg.profile()?;
    let n = &cfg.numerics;
    let t = diffusion_threshold(&cfg.parameters, &profile, &n.exhaust(), n.d_min, n.d_max, n.threshold_tol)?;
    out.stage("diffusion-threshold", !t.provisional, json!({ "bracket_width": t.bracket_width }));
    out.json("tables/threshold.json", &t)?;
    Ok(true)
}

fn run_sweep(cfg: &RunConfig, out: &mut Outputs) -> Result<bool> {
    let profile = cfg.profile()?;
    let axis = cfg
        .command
        .axis
        .ok_or_else(|| Error::config("`command.axis` (or --axis) is required for sweep"))?;
    let values = parse_range(
        cfg.command
            .values
            .as_deref()
            .ok_or_else(|| Error::config("`command.values` (or --values) is required for sweep"))?,
    )?;
    let n = &cfg.numerics;
    let settings = n.dynamics();
    let table = sweep(
        axis,
        &values,
        &cfg.parameters,
        &profile,
        &n.exhaust(),
        cfg.command.neumann,
        cfg.command.verdicts.then_some(&settings),
    )?;
    let all = table.rows.iter().all(|r| r.converged);
    out.stage(
        "sweep",
        all,
        json!({ "rows": table.rows.len(), "half_width": table.half_width, "height": table.height }),
    );
    let csv = csv_bytes(|b| table.write_csv(b))?;
    out.write("tables/sweep.csv", &csv)?;
    out.json("tables/sweep.json", &table)?;
    Ok(true)
}

fn run_homogeneous(cfg: &RunConfig, out: &mut Outputs) -> Result<bool> {
    let n = &cfg.numerics;
    let ex = crate::eigen::ExhaustConfig {
        max_steps: n.homogeneous_max_steps,
        ..n.exhaust()
    };
    let s = homogeneous_speed_c_h(&cfg.parameters, &ex, n.speed_tol)?;
    out.stage("homogeneous-speed", !s.provisional, json!({ "bracket_width": s.bracket_width }));
    out.json(
        "tables/homogeneous_speed.json",
        &json!({ "c_h": s.c_star, "c_kpp": c_kpp(cfg.parameters.field_diffusion), "speeds": s }),
    )?;
    Ok(true)
}

fn run_verify(cfg: &RunConfig, out: &mut Outputs, seed: u64) -> Result<bool> {
    let report = verify_suite(&cfg.command.check, seed)?;
    out.stage("verify", report.passed, json!({ "checks": report.checks.len() }));
    let summary = report.summary();
    print!("{summary}");
    out.json("tables/verify.json", &report)?;
    out.write("tables/verify.txt", summary.as_bytes())?;
    Ok(report.passed)
}

fn parse_overrides(cli: &Cli) -> Result<Vec<(String, String)>> {
    let mut o = Vec::new();
    for s in &cli.set {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| Error::config(format!("override `{s}` is not of the form KEY=VALUE")))?;
        o.push((k.trim().to_string(), v.trim().to_string()));
    }
    // Dedicated flags win over both the file and --set.
    match &cli.command {
        Command::Sweep {
            axis,
            values,
            verdicts,
            no_neumann,
        } => {
            if let Some(a) = axis {
                o.push(("command.axis".into(), format!("\"{a}\"")));
            }
            if let Some(v) = values {
                o.push(("command.values".into(), format!("\"{v}\"")));
            }
            if *verdicts {
                o.push(("command.verdicts".into(), "true".into()));
            }
            if *no_neumann {
                o.push(("command.neumann".into(), "false".into()));
            }
        }
        Command::Verify { check } if !check.is_empty() => {
            let list: Vec<String> = check.iter().map(|c| format!("\"{c}\"")).collect();
            o.push(("command.check".into(), format!("[{}]", list.join(", "))));
        }
        _ => {}
    }
    if let Some(d) = &cli.out {
        o.push((
            "out".into(),
            format!("\"{}\"", d.display().to_string().replace('\\', "\\\\").replace('"', "\\\"")),
        ));
    }
    Ok(o)
}

fn execute(cli: &Cli) -> Result<bool> {
    let started = Instant::now();
    let overrides = parse_overrides(cli)?;
    let cfg = RunConfig::load(cli.config.as_deref(), &overrides)?;
    if cli.jobs == Some(0) {
        return Err(Error::config("--jobs must be >= 1"));
    }
    let mut out = Outputs::new(&cfg.out)?;
    let body = |out: &mut Outputs| -> Result<bool> {
        match &cli.command {
            Command::Eigen => run_eigen(&cfg, out, OperatorKind::Coupled),
            Command::EigenNoRoad => run_eigen(&cfg, out, OperatorKind::Neumann),
            Command::Simulate => run_simulate(&cfg, out),
            Command::CriticalSpeed => run_critical_speed(&cfg, out),
            Command::ThresholdD => run_threshold(&cfg, out),
            Command::Sweep { .. } => run_sweep(&cfg, out),
            Command::HomogeneousSpeed => run_homogeneous(&cfg, out),
            Command::Verify { .. } => run_verify(&cfg, out, cli.seed),
        }
    };
    let ok = match cli.jobs {
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build()
            .map_err(|e| Error::config(format!("--jobs: {e}")))?
            .install(|| body(&mut out))?,
        None => body(&mut out)?,
    };
    out.finish(cli.command.name(), cli.seed, cli.jobs, &cfg, started)?;
    Ok(ok)
}

/// Runs the CLI on `args` (program name first) and returns the exit status:
/// 0 on success, 1 on computation failure or failed checks, 2 on
/// configuration errors.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("roadfield {}: {e}", cli.command.name());
            if e.is_config() {
                2
            } else {
                1
            }
        }
    }
}
