use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dynres::plotdata::{self, Figure};
use dynres::sim::{self, Simulation};
use dynres::sweep::{self, SweepParameter, SweepSpec};
use dynres::{selftest, trace_io, Error, Policy, PolicyKind, Result, ScenarioConfig};

#[derive(Parser)]
#[command(
    name = "dynres",
    version,
    about = "Delay-aware power control and packet allocation simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one scenario and write its trace and summary.
    Run {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Also track per-packet FIFO delays and report them.
        #[arg(long)]
        packet_delays: bool,
    },
    /// Sweep one parameter over several policies and replications.
    Sweep {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Sweep specification (TOML).
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, default_value_t = 0)]
        workers: usize,
    },
    /// Emit plot-ready data for one of the reference figures.
    Plotdata {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long)]
        figure: String,
        /// Replace the figure's default sweep.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// First slot of the fig3 window.
        #[arg(long, default_value_t = 0)]
        window_start: u64,
        #[arg(long, default_value_t = 0)]
        workers: usize,
    },
    /// Run the built-in oracle and property checks.
    Selftest {
        #[command(flatten)]
        scenario: ScenarioArgs,
    },
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario file; defaults apply to anything it leaves out.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    policy: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    horizon: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl ScenarioArgs {
    fn resolve(&self) -> Result<ScenarioConfig> {
        let mut cfg = match &self.config {
            Some(path) => dynres::load_config(path)?,
            None => ScenarioConfig::default(),
        };
        if let Some(p) = &self.policy {
            cfg.policy = p.parse()?;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(h) = self.horizon {
            cfg.horizon = h;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn out_dir(&self) -> Result<&Path> {
        fs::create_dir_all(&self.out).map_err(|e| Error::io(&self.out, e))?;
        Ok(&self.out)
    }
}

fn write_text(path: PathBuf, text: &str) -> Result<()> {
    fs::write(&path, text).map_err(|e| Error::io(path, e))
}

fn cmd_run(args: &ScenarioArgs, packet_delays: bool) -> Result<ExitCode> {
    let cfg = args.resolve()?;
    let policy = Policy::build(cfg.policy, &cfg)?;
    let mut simulation = Simulation::new(&cfg, &policy, cfg.seed);
    if packet_delays {
        simulation = simulation.track_packets();
    }
    let mut trace = Vec::with_capacity(cfg.horizon as usize);
    while !simulation.is_finished() {
        trace.push(simulation.step()?);
    }
    let summary = sim::summarize(&trace, &cfg)?;

    let out = args.out_dir()?;
    trace_io::write_trace(&trace, out.join("trace.csv"))?;
    trace_io::write_summary(&summary, out.join("summary.json"))?;
    write_text(out.join("scenario.toml"), &cfg.to_toml_string())?;

    println!("policy        {}", cfg.policy);
    println!("slots         {}", summary.slots);
    println!(
        "avg power     {:.4} W (budget {} W, ok={})",
        summary.avg_power, cfg.traffic.avg_power, summary.power_ok
    );
    for (k, d) in summary.avg_delay.iter().enumerate() {
        println!(
            "service {}     delay {:.4} slots (bound {}, ok={}), drops {}",
            k + 1,
            d,
            cfg.traffic.delay_bounds[k],
            summary.delay_ok[k],
            summary.total_drops[k]
        );
    }
    if let Some(p) = simulation.packet_delays() {
        println!("fifo delays   {:?}", p.mean());
    }
    Ok(ExitCode::SUCCESS)
}

fn partial(table: &sweep::SweepTable) -> ExitCode {
    if table.failures() > 0 {
        eprintln!("{} of {} cells failed", table.failures(), table.rows.len());
        ExitCode::from(3)
    } else {
        ExitCode::SUCCESS
    }
}

fn cmd_sweep(args: &ScenarioArgs, spec: &Path, workers: usize) -> Result<ExitCode> {
    let cfg = args.resolve()?;
    let spec = SweepSpec::load(spec)?;
    let table = sweep::run_sweep(&spec, &cfg, workers)?;
    let out = args.out_dir()?;
    write_text(out.join("sweep_long.csv"), &table.render_long())?;
    write_text(out.join("sweep_aggregate.csv"), &table.render_aggregate())?;
    print!("{}", table.render_aggregate());
    Ok(partial(&table))
}

/// Scenario and sweep used by each summary figure unless overridden.
fn figure_preset(figure: Figure, base: &ScenarioConfig) -> (ScenarioConfig, SweepSpec) {
    let mut cfg = base.clone();
    cfg.set_delay_bound(15.0);
    cfg.radio.max_power = 100.0;
    let (parameter, values, policies) = match figure {
        Figure::Fig4 => {
            cfg.omega = 0.8;
            (
                SweepParameter::Lambda,
                vec![15.0, 17.0, 19.0, 21.0, 23.0, 25.0],
                PolicyKind::ALL.to_vec(),
            )
        }
        Figure::Fig5 => {
            cfg.set_arrival_rate(23.0);
            (
                SweepParameter::Omega,
                vec![0.2, 0.4, 0.6, 0.8, 1.0, 1.2],
                vec![PolicyKind::Proposed],
            )
        }
        _ => {
            cfg.set_arrival_rate(23.0);
            cfg.omega = 0.6;
            (
                SweepParameter::Pmax,
                vec![40.0, 60.0, 80.0, 100.0],
                vec![PolicyKind::Proposed],
            )
        }
    };
    let spec = SweepSpec {
        parameter,
        values,
        policies,
        replications: 1,
        base_seed: None,
    };
    (cfg, spec)
}

fn cmd_plotdata(
    args: &ScenarioArgs,
    figure: &str,
    spec: Option<&Path>,
    window_start: u64,
    workers: usize,
) -> Result<ExitCode> {
    let figure: Figure = figure.parse()?;
    let base = args.resolve()?;
    let path = args.out_dir()?.join(format!("{figure}.csv"));

    if figure == Figure::Fig3 {
        let len = base.geometry.period_slots();
        let cfg = ScenarioConfig {
            horizon: base.horizon.max(window_start + len),
            ..base
        };
        let mut traces = Vec::new();
        for kind in PolicyKind::ALL {
            let policy = Policy::build(kind, &cfg)?;
            traces.push((kind, sim::run(&cfg, &policy, cfg.seed)?.0));
        }
        let refs: Vec<(PolicyKind, &[sim::SlotTrace])> =
            traces.iter().map(|(k, t)| (*k, t.as_slice())).collect();
        plotdata::emit(plotdata::render_fig3(&refs, window_start, len), &path)?;
        println!("wrote {}", path.display());
        return Ok(ExitCode::SUCCESS);
    }

    let (cfg, preset) = figure_preset(figure, &base);
    let spec = match spec {
        Some(p) => SweepSpec::load(p)?,
        None => preset,
    };
    let table = sweep::run_sweep(&spec, &cfg, workers)?;
    plotdata::emit(plotdata::render_summary_figure(figure, &table, &cfg), &path)?;
    println!("wrote {}", path.display());
    Ok(partial(&table))
}

fn cmd_selftest(args: &ScenarioArgs) -> Result<ExitCode> {
    let cfg = args.resolve()?;
    let results = selftest::run_all(&cfg, cfg.seed);
    for r in &results {
        println!(
            "{} {:<24} {}",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.detail
        );
    }
    Ok(if results.iter().all(|r| r.passed) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run {
            scenario,
            packet_delays,
        } => cmd_run(scenario, *packet_delays),
        Command::Sweep {
            scenario,
            spec,
            workers,
        } => cmd_sweep(scenario, spec, *workers),
        Command::Plotdata {
            scenario,
            figure,
            spec,
            window_start,
            workers,
        } => cmd_plotdata(scenario, figure, spec.as_deref(), *window_start, *workers),
        Command::Selftest { scenario } => cmd_selftest(scenario),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
