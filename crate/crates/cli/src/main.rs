use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use r2f2::adjuster::write_events_csv;
use r2f2::pde::{
    compare_snapshots, read_snapshots_csv, write_metrics_csv, BumpInit, HeatConfig, HeatInit, SimConfig, SimRun, Snapshot, Storage,
    SweConfig,
};
use r2f2::profiler::{
    config_grid_search, distribution_histogram, empirical_exponent_bits, error_reduction, sweep_error, write_grid_csv,
    HistogramOptions, Spacing, SweepSpec,
};
use r2f2::{selftest, Backend, Execution};
use serde_json::json;

/// Flexible floating point multiplier toolkit: error sweeps, exponent-width
/// exploration and PDE case studies.
#[derive(Parser, Debug)]
#[command(name = "r2f2", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Seed for every random draw; recorded in the outputs.
    #[arg(long, global = true, default_value_t = 2024)]
    seed: u64,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Per-interval multiplication error against binary32.
    ProfileSweep(SweepArgs),
    /// Rank every ExMy of a total width on one operand range.
    GridSearch(GridArgs),
    /// Closed-form exponent width for a largest operand magnitude.
    Eq1 {
        #[arg(long)]
        vmax: f64,
    },
    /// Histograms of heat-equation field values by simulation stage.
    Distribution(DistributionArgs),
    /// 1D heat equation, explicit finite differences.
    SimHeat(HeatArgs),
    /// 2D shallow water equations, Lax-Wendroff.
    SimSwe(SweArgs),
    /// Compare two runs given as snapshot CSVs or JSON configs.
    Compare {
        /// Candidate run.
        a: PathBuf,
        /// Reference run.
        b: PathBuf,
    },
    /// Exhaustive oracle and property checks.
    Selftest,
}

#[derive(Args, Debug)]
struct BackendArgs {
    /// binary64, binary32, ExMy (e.g. E5M10) or a descriptor <EB,MB,FX>[@k].
    #[arg(long, alias = "format", default_value = "binary32")]
    backend: String,
    /// Let a descriptor backend adjust its exponent width at runtime.
    #[arg(long)]
    adaptive: bool,
    /// Use the full-width mantissa product instead of the truncated schedule.
    #[arg(long)]
    exact: bool,
}

impl BackendArgs {
    fn parse(&self) -> anyhow::Result<Backend> {
        Ok(Backend::parse_with(&self.backend, self.adaptive, self.exact)?)
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SpacingArg {
    Log,
    Linear,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    backend: BackendArgs,
    #[arg(long, default_value_t = 1e-4)]
    lo: f64,
    #[arg(long, default_value_t = 1e4)]
    hi: f64,
    #[arg(long, default_value_t = 1000)]
    intervals: usize,
    /// Operand pairs per interval.
    #[arg(long, default_value_t = 100)]
    pairs: usize,
    /// 10 000 intervals x 1000 pairs.
    #[arg(long)]
    full_scale: bool,
    #[arg(long, value_enum, default_value = "log")]
    spacing: SpacingArg,
    /// Second backend to compute the error reduction against.
    #[arg(long)]
    baseline: Option<String>,
    #[arg(long)]
    sequential: bool,
}

#[derive(Args, Debug)]
struct GridArgs {
    #[arg(long)]
    lo: f64,
    #[arg(long)]
    hi: f64,
    #[arg(long, default_value_t = 16)]
    bits: u32,
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum InitArg {
    Sin,
    Exp,
}

impl From<InitArg> for HeatInit {
    fn from(i: InitArg) -> Self {
        match i {
            InitArg::Sin => HeatInit::Sin,
            InitArg::Exp => HeatInit::Exp,
        }
    }
}

#[derive(Args, Debug)]
struct HeatArgs {
    /// JSON config; flags below are ignored when given.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    backend: BackendArgs,
    #[arg(long, value_enum, default_value = "sin")]
    init: InitArg,
    #[arg(long, default_value_t = 512)]
    n: usize,
    #[arg(long, default_value_t = 2000)]
    steps: u64,
    #[arg(long, default_value_t = 0.25)]
    r: f64,
    #[arg(long, default_value_t = r2f2::pde::DEFAULT_AMPLITUDE)]
    amplitude: f64,
    #[arg(long, default_value_t = r2f2::pde::DEFAULT_WIDTH)]
    width: f64,
    /// Keep the field and stencil sums in binary64.
    #[arg(long)]
    binary64_storage: bool,
    /// Comma-separated snapshot steps; the final step is always kept.
    #[arg(long, value_delimiter = ',')]
    snapshots: Vec<u64>,
}

impl HeatArgs {
    fn config(&self, seed: u64) -> anyhow::Result<SimConfig> {
        if let Some(path) = &self.config {
            return read_config(path, "heat");
        }
        let storage = if self.binary64_storage { Storage::Binary64 } else { Storage::Binary32 };
        let cfg = HeatConfig {
            n: self.n,
            steps: self.steps,
            r: self.r,
            init: self.init.into(),
            amplitude: self.amplitude,
            width: self.width,
            backend: self.backend.parse()?,
            storage,
            snapshots: self.snapshots.clone(),
            seed,
        };
        let cfg = SimConfig::Heat(cfg);
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
struct DistributionArgs {
    #[command(flatten)]
    heat: HeatArgs,
    /// Record the field every this many steps.
    #[arg(long, default_value_t = 20)]
    every: u64,
    #[arg(long, default_value_t = 4)]
    stages: usize,
    #[arg(long, default_value_t = 50)]
    bins: usize,
    /// Magnitude separating the small and large views.
    #[arg(long, default_value_t = 1.0)]
    threshold: f64,
}

#[derive(Args, Debug)]
struct SweArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    backend: BackendArgs,
    #[arg(long, default_value_t = 64)]
    nx: usize,
    #[arg(long, default_value_t = 64)]
    ny: usize,
    #[arg(long, default_value_t = 500)]
    steps: u64,
    #[arg(long, default_value_t = 9.81)]
    g: f64,
    #[arg(long, default_value_t = 0.5)]
    dt: f64,
    #[arg(long, default_value_t = 100.0)]
    dx: f64,
    #[arg(long, default_value_t = 100.0)]
    dy: f64,
    #[arg(long, default_value_t = 100.0)]
    depth: f64,
    #[arg(long, default_value_t = 30.0)]
    amplitude: f64,
    /// Bump standard deviation in cells.
    #[arg(long, default_value_t = 5.0)]
    sigma: f64,
    #[arg(long, value_delimiter = ',')]
    snapshots: Vec<u64>,
}

impl SweArgs {
    fn config(&self, seed: u64) -> anyhow::Result<SimConfig> {
        if let Some(path) = &self.config {
            return read_config(path, "swe");
        }
        let cfg = SweConfig {
            nx: self.nx,
            ny: self.ny,
            steps: self.steps,
            g: self.g,
            dt: self.dt,
            dx: self.dx,
            dy: self.dy,
            init: BumpInit { depth: self.depth, amplitude: self.amplitude, sigma: self.sigma, ..BumpInit::default() },
            backend: self.backend.parse()?,
            snapshots: self.snapshots.clone(),
            seed,
        };
        let cfg = SimConfig::Swe(cfg);
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Failure split by exit status: bad input before any computation, or a
/// fault while computing and writing results.
enum Failure {
    Validation(anyhow::Error),
    Internal(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Validation(e.into())
    }
}

fn read_config(path: &Path, equation: &str) -> anyhow::Result<SimConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let cfg = SimConfig::from_json(&text)?;
    let found = match cfg {
        SimConfig::Heat(_) => "heat",
        SimConfig::Swe(_) => "swe",
    };
    if found != equation {
        return Err(r2f2::Error::InvalidConfig(format!("expected equation \"{equation}\", got \"{found}\"")).into());
    }
    Ok(cfg)
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> anyhow::Result<()> {
    serde_json::to_writer_pretty(create(path)?, value)?;
    Ok(())
}

fn write_run(run: &SimRun, out: &Path, seed: u64) -> anyhow::Result<()> {
    run.write_snapshots_csv(create(&out.join("snapshots.csv"))?)?;
    write_events_csv(&run.events, create(&out.join("events.csv"))?)?;
    write_json(
        &out.join("run.json"),
        &json!({
            "equation": run.equation,
            "backend": run.backend,
            "steps": run.steps,
            "seed": seed,
            "mult_count": run.mult_count,
            "overflow_count": run.overflow_count,
            "underflow_count": run.underflow_count,
            "adjustment_events": run.events.len(),
        }),
    )
}

fn run_summary(run: &SimRun) -> String {
    use r2f2::AdjustKind::*;
    format!(
        "{} {}: {} steps, {} multiplications, {} overflowed, events overflow {} underflow {} redundancy {}",
        run.equation,
        run.backend,
        run.steps,
        run.mult_count,
        run.overflow_count,
        run.count_events(OverflowWiden),
        run.count_events(UnderflowWiden),
        run.count_events(RedundancyNarrow)
    )
}

/// A snapshot CSV is read as-is; a JSON config is run first.
fn load_snapshots(path: &Path) -> anyhow::Result<Vec<Snapshot>> {
    if path.extension().is_some_and(|e| e == "json") {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        return Ok(SimConfig::from_json(&text)?.run()?.snapshots);
    }
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(read_snapshots_csv(file)?)
}

enum Plan {
    Sweep(SweepSpec, Backend, Option<Backend>, Execution),
    Grid(f64, f64, u32, usize),
    Eq1(u32),
    Distribution(SimConfig, u64, HistogramOptions),
    Sim(SimConfig),
    Compare(Vec<Snapshot>, Vec<Snapshot>),
    Selftest,
}

/// Checks flags and inputs; nothing is computed or written yet.
fn plan(command: &Command, seed: u64) -> anyhow::Result<Plan> {
    Ok(match command {
        Command::ProfileSweep(a) => {
            let backend = a.backend.parse()?;
            let baseline = a.baseline.as_deref().map(str::parse::<Backend>).transpose()?;
            let spacing = match a.spacing {
                SpacingArg::Log => Spacing::Log,
                SpacingArg::Linear => Spacing::Linear,
            };
            let (intervals, pairs) = if a.full_scale { (10_000, 1000) } else { (a.intervals, a.pairs) };
            let spec = SweepSpec::new(a.lo, a.hi, intervals, pairs, seed)?.with_spacing(spacing);
            let exec = if a.sequential { Execution::Sequential } else { Execution::Parallel };
            Plan::Sweep(spec, backend, baseline, exec)
        }
        Command::GridSearch(a) => {
            SweepSpec::new(a.lo, a.hi, 1, a.samples, seed)?;
            if a.bits < 6 {
                bail!("--bits must be at least 6");
            }
            Plan::Grid(a.lo, a.hi, a.bits, a.samples)
        }
        Command::Eq1 { vmax } => Plan::Eq1(empirical_exponent_bits(*vmax)?),
        Command::Distribution(a) => {
            if a.every == 0 || a.stages == 0 || a.bins == 0 {
                bail!("--every, --stages and --bins must be at least 1");
            }
            let mut cfg = a.heat.config(seed)?;
            if let SimConfig::Heat(h) = &mut cfg {
                h.snapshots = (0..=h.steps).step_by(a.every as usize).collect();
            }
            let opts = HistogramOptions { stages: a.stages, bins: a.bins, threshold: a.threshold };
            Plan::Distribution(cfg, a.every, opts)
        }
        Command::SimHeat(a) => Plan::Sim(a.config(seed)?),
        Command::SimSwe(a) => Plan::Sim(a.config(seed)?),
        Command::Compare { a, b } => Plan::Compare(load_snapshots(a)?, load_snapshots(b)?),
        Command::Selftest => Plan::Selftest,
    })
}

fn execute(plan: Plan, out: &Path, seed: u64) -> anyhow::Result<()> {
    match plan {
        Plan::Sweep(spec, backend, baseline, exec) => {
            let report = sweep_error(&spec, backend, exec)?;
            report.write_csv(create(&out.join("errors.csv"))?)?;
            let mut line = format!(
                "{}: mean error {:.4}%, max {:.4}%, {} overflow intervals, {} adjustment events",
                report.backend,
                report.mean_err_pct,
                report.max_err_pct,
                report.overflow_intervals(),
                report.total_events()
            );
            if let Some(b) = baseline {
                let base = sweep_error(&spec, b, exec)?;
                base.write_csv(create(&out.join("baseline_errors.csv"))?)?;
                let r = error_reduction(&report, &base)?;
                write_json(&out.join("reduction.json"), &r)?;
                line += &format!(
                    "; vs {}: mean reduction {:.2}%, max {:.2}%, {} overflow intervals",
                    base.backend,
                    r.mean_pct,
                    r.max_pct,
                    base.overflow_intervals()
                );
            }
            println!("{line}");
        }
        Plan::Grid(lo, hi, bits, samples) => {
            let entries = config_grid_search(lo, hi, bits, samples, seed, Execution::Parallel)?;
            write_grid_csv(&entries, create(&out.join("grid.csv"))?)?;
            let best = entries[0];
            println!(
                "({lo}, {hi}), {bits} bits: best {} with mean error {:.4}%; closed form suggests {} exponent bits",
                best.format,
                best.mean_err_pct,
                empirical_exponent_bits(hi)?
            );
        }
        Plan::Eq1(bits) => println!("{bits}"),
        Plan::Distribution(cfg, every, opts) => {
            let run = cfg.run()?;
            let d = distribution_histogram(&run.trace(), opts)?;
            d.write_csv(create(&out.join("histogram.csv"))?)?;
            let ranges: Vec<String> = d.stage_ranges.iter().map(|(lo, hi)| format!("({lo:.4}, {hi:.4})")).collect();
            println!("{} values sampled every {every} steps; stage ranges {}", d.whole.total(), ranges.join(" "));
        }
        Plan::Sim(cfg) => {
            let run = cfg.run()?;
            write_run(&run, out, seed)?;
            println!("{}", run_summary(&run));
        }
        Plan::Compare(a, b) => {
            let metrics = compare_snapshots(&a, &b)?;
            write_metrics_csv(&metrics, create(&out.join("compare.csv"))?)?;
            let last = metrics.last().expect("non-empty");
            println!(
                "{} common snapshots; final step {}: RMSE {:.6e}, L-inf relative {:.6e}",
                metrics.len(),
                last.step,
                last.rmse,
                last.linf_rel
            );
        }
        Plan::Selftest => {
            let results = selftest::run_all(seed);
            for c in &results {
                println!("{} {}: {}", if c.passed { "ok  " } else { "FAIL" }, c.name, c.detail);
            }
            write_json(&out.join("selftest.json"), &results)?;
            let failed = results.iter().filter(|c| !c.passed).count();
            if failed > 0 {
                bail!("{failed} of {} checks failed", results.len());
            }
            println!("{} checks passed", results.len());
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    let threads = match std::env::var("R2F2_THREADS") {
        Ok(v) => v.trim().parse::<usize>().map_err(|_| anyhow!("R2F2_THREADS must be an integer, got {v:?}"))?,
        Err(_) => 0,
    };
    r2f2::par::configure_threads(threads);
    let plan = plan(&cli.command, cli.seed)?;
    let out = cli.out.as_path();
    fs::create_dir_all(out).with_context(|| format!("creating output directory {}", out.display()))?;
    let mut invocation: Vec<String> = std::env::args().collect();
    if !invocation.iter().any(|a| a == "--seed" || a.starts_with("--seed=")) {
        invocation.extend(["--seed".into(), cli.seed.to_string()]);
    }
    fs::write(out.join("invocation.txt"), invocation.join(" ") + "\n")
        .with_context(|| format!("writing into {}", out.display()))?;
    execute(plan, out, cli.seed).map_err(Failure::Internal)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Internal(e)) => {
            eprintln!("internal error: {e:#}");
            ExitCode::from(2)
        }
    }
}
