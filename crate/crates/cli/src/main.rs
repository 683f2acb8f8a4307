use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use orbit_consensus::consensus::Protocol;
use orbit_consensus::scenario::{DelayMode, ScenarioFile, PAPER_PRESET};
use orbit_consensus::sim::{run, RunOptions};
use orbit_consensus::{Error, Scenario};
use serde_json::json;

/// Constrained output consensus on periodic references.
#[derive(Parser)]
#[command(name = "orbitcons", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// Scenario JSON file or preset name.
    #[arg(long, short, default_value = PAPER_PRESET)]
    config: String,
}

#[derive(Args)]
struct OutArg {
    /// Output directory.
    #[arg(long, short, env = "ORBITCONS_OUT", default_value = "orbitcons-out")]
    out: PathBuf,
}

#[derive(Args)]
struct Overrides {
    /// Number of steps (defaults to the scenario's).
    #[arg(long)]
    steps: Option<usize>,
    /// RNG seed (defaults to the scenario's).
    #[arg(long)]
    seed: Option<u64>,
    /// Run every phase on the calling thread.
    #[arg(long)]
    serial: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write its trace.
    Run {
        #[command(flatten)]
        config: ConfigArg,
        /// cp0, cp1, cp2, cp3, cp0-ti or cp1-tau (defaults to the scenario's).
        #[arg(long, short)]
        protocol: Option<Protocol>,
        /// Communication delays: auto, on or off.
        #[arg(long, value_parser = parse_delay_mode)]
        delays: Option<DelayMode>,
        #[command(flatten)]
        overrides: Overrides,
        #[command(flatten)]
        out: OutArg,
    },
    /// Check the exosystem period, graph connectivity and initial feasibility.
    Validate {
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Compute and export the admissible sets of every agent.
    Sets {
        #[command(flatten)]
        config: ConfigArg,
        #[command(flatten)]
        out: OutArg,
    },
    /// Run several protocols on one scenario and tabulate δ(t).
    Compare {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, value_delimiter = ',', default_value = "cp1,cp2,cp3,cp0-ti,cp1-tau")]
        protocols: Vec<Protocol>,
        #[command(flatten)]
        overrides: Overrides,
        #[command(flatten)]
        out: OutArg,
    },
    /// Print a preset scenario as JSON.
    Preset {
        #[arg(default_value = PAPER_PRESET)]
        name: String,
    },
}

fn parse_delay_mode(s: &str) -> Result<DelayMode, String> {
    serde_json::from_value(json!(s)).map_err(|_| format!("expected auto, on or off, got '{s}'"))
}

fn load(config: &str) -> anyhow::Result<Scenario> {
    let file = ScenarioFile::resolve(config)?;
    eprintln!("building scenario '{}' ({} agents)", file.name, file.agents.len());
    Ok(Scenario::build(file)?)
}

fn options(sc: &Scenario, o: &Overrides) -> RunOptions {
    let mut opts = RunOptions::from_scenario(sc);
    if let Some(s) = o.steps {
        opts.steps = s;
    }
    if let Some(s) = o.seed {
        opts.seed = s;
    }
    opts.parallel = !o.serial;
    opts
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("n/a".into(), |x| format!("{x:.3e}"))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> anyhow::Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")
        .with_context(|| format!("writing {}", path.display()))
}

fn cmd_run(
    config: &str,
    protocol: Option<Protocol>,
    delays: Option<DelayMode>,
    overrides: &Overrides,
    out: &Path,
) -> anyhow::Result<()> {
    let sc = load(config)?;
    let mut opts = options(&sc, overrides);
    if let Some(p) = protocol {
        opts = RunOptions {
            delays: sc.file.delays.resolve(p),
            protocol: p,
            ..opts
        };
    }
    if let Some(d) = delays {
        opts.delays = d.resolve(opts.protocol);
    }
    eprintln!(
        "running {} for {} steps (seed {}, delays {})",
        opts.protocol,
        opts.steps,
        opts.seed,
        if opts.delays { "on" } else { "off" }
    );
    let trace = run(&sc, opts)?;
    trace.write_dir(out)?;
    let s = &trace.summary;
    println!("protocol            {}", s.protocol);
    println!("final delta         {}", fmt_opt(s.final_delta));
    println!("window delta max    {}", fmt_opt(s.final_window_delta));
    println!("window tracking max {}", fmt_opt(s.final_window_tracking));
    println!("window periodicity  {}", fmt_opt(s.final_window_periodicity));
    println!("constraint excess   {:.3e}", s.max_constraint_violation);
    println!("converged           {}", s.converged);
    println!("as expected         {}", s.outcome_as_expected);
    println!("trace written to    {}", out.display());
    Ok(())
}

fn cmd_validate(config: &str) -> anyhow::Result<bool> {
    let sc = load(config)?;
    let rho = sc.exo.rho();
    let s_rho = sc.exo.s().pow(rho as u64)?;
    let err = s_rho.max_abs_diff(&orbit_consensus::Matrix::identity(sc.exo.n_w()));
    println!("period rho          {rho}");
    println!("|S^rho - I|max      {err:.3e}");
    let r = &sc.report;
    println!(
        "graph schedule      {} graphs, union strongly connected: {}, window: {}",
        r.graphs,
        r.union_strongly_connected,
        r.t_union.map_or("random".into(), |t| t.to_string())
    );
    for ((decl, a), moved) in sc.file.agents.iter().zip(&sc.agents).zip(&sc.w0_projected) {
        println!(
            "agent {:<14} radius(A+BK) {:.4}  regulator {:.1e}  lyapunov {:.1e}  k* {}  O_inf rows {}  w0 projected {}",
            decl.name,
            a.closed_loop_radius,
            a.regulator_residual,
            a.lyapunov_residual,
            a.sets.k_star,
            a.sets.o_infty.rows(),
            moved
        );
    }
    let ok = err <= 1e-9 && r.pass;
    println!("{}", if ok { "valid" } else { "INVALID" });
    Ok(ok)
}

fn cmd_sets(config: &str, out: &Path) -> anyhow::Result<()> {
    let sc = load(config)?;
    fs::create_dir_all(out)?;
    for (decl, a) in sc.file.agents.iter().zip(&sc.agents) {
        let path = out.join(format!("{}-sets.json", decl.name));
        write_json(
            &path,
            &json!({
                "agent": decl.name,
                "k_star": a.sets.k_star,
                "epsilon": a.sets.epsilon,
                "n_x": a.sets.n_x,
                "n_w": a.sets.n_w,
                "o_infty": a.sets.o_infty,
                "L": a.l,
                "Pi": a.pi,
                "Gamma": a.gamma,
                "P": a.p,
                "T": a.t,
            }),
        )?;
        println!(
            "{:<14} k* = {:<4} rows = {:<5} -> {}",
            decl.name,
            a.sets.k_star,
            a.sets.o_infty.rows(),
            path.display()
        );
    }
    Ok(())
}

fn cmd_compare(config: &str, protocols: &[Protocol], overrides: &Overrides, out: &Path) -> anyhow::Result<()> {
    let sc = load(config)?;
    let base = options(&sc, overrides);
    fs::create_dir_all(out)?;
    let mut deltas = Vec::new();
    let mut summaries = Vec::new();
    for &p in protocols {
        let opts = base.with_protocol(p);
        eprintln!("running {p} (delays {})", if opts.delays { "on" } else { "off" });
        let trace = run(&sc, opts)?;
        trace.write_dir(out.join(p.name()))?;
        let d = trace.deltas();
        let first = d.iter().position(|&x| x <= sc.file.thresholds.consensus);
        println!(
            "{:<8} delays {:<3} first δ ≤ {}: {:<6} window δ {}  min δ (failure window) {}  converged {}  as expected {}",
            p.name(),
            if opts.delays { "on" } else { "off" },
            sc.file.thresholds.consensus,
            first.map_or("never".into(), |t| t.to_string()),
            fmt_opt(trace.summary.final_window_delta),
            fmt_opt(trace.summary.failure_window_min_delta),
            trace.summary.converged,
            trace.summary.outcome_as_expected
        );
        deltas.push(d);
        summaries.push(trace.summary);
    }
    let path = out.join("delta.csv");
    let mut wr = csv::Writer::from_path(&path)?;
    let header: Vec<String> = std::iter::once("t".to_string())
        .chain(protocols.iter().map(|p| p.name().to_string()))
        .collect();
    wr.write_record(&header)?;
    let len = deltas.iter().map(Vec::len).max().unwrap_or(0);
    for t in 0..len {
        let row: Vec<String> = std::iter::once(t.to_string())
            .chain(deltas.iter().map(|d| d.get(t).map_or(String::new(), |v| v.to_string())))
            .collect();
        wr.write_record(&row)?;
    }
    wr.flush()?;
    write_json(&out.join("compare.json"), &summaries)?;
    println!("comparison written to {}", path.display());
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(e) if e.is_validation() => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run {
            config,
            protocol,
            delays,
            overrides,
            out,
        } => cmd_run(&config.config, *protocol, *delays, overrides, &out.out),
        Command::Validate { config } => match cmd_validate(&config.config) {
            Ok(true) => Ok(()),
            Ok(false) => return ExitCode::from(1),
            Err(e) => Err(e),
        },
        Command::Sets { config, out } => cmd_sets(&config.config, &out.out),
        Command::Compare {
            config,
            protocols,
            overrides,
            out,
        } => cmd_compare(&config.config, protocols, overrides, &out.out),
        Command::Preset { name } => ScenarioFile::preset(name)
            .and_then(|f| f.to_json())
            .map(|j| println!("{j}"))
            .map_err(Into::into),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = exit_code(&e);
            eprintln!("error: {e:#}");
            if let Some(Error::Aborted { context, .. }) = e.downcast_ref::<Error>() {
                eprintln!("step context: {context}");
            }
            ExitCode::from(code)
        }
    }
}
