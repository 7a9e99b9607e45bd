//! `suture`: headless runs, benchmarks, trajectory comparison and the live
//! session server.
//!
//! Exit codes: 0 success, 2 usage, 3 load/parse failure, 4 unsafe initial
//! state, 5 runtime failure.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use suture_core::scenario_io::{
    format_script, load_record, load_scenario_file, parse_script, preset, save_record, NeedleScript, Scenario,
    ScenarioError, TrajectoryRecord, PRESET_NAMES,
};
use suture_core::service::{serve_replay, serve_session, SessionOptions};
use suture_core::sim::{frame_after, initial_frame, mean_error, script_from_inputs};

const EXIT_PARSE: u8 = 3;
const EXIT_SAFETY: u8 = 4;
const EXIT_RUNTIME: u8 = 5;

#[derive(Parser)]
#[command(name = "suture", version, about = "Suture thread simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Play a needle script and write the trajectory.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Script file (`t vx vy` lines); defaults to the scenario's script.
        #[arg(long)]
        script: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Tick count; defaults to the script duration.
        #[arg(long)]
        ticks: Option<usize>,
    },
    /// Time ticks of a scenario, or of the built-in presets.
    Bench {
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        ticks: Option<usize>,
    },
    /// Mean node error of a trajectory against a reference, in percent of
    /// the thread length.
    Compare {
        #[arg(long)]
        sim: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        length: f64,
    },
    /// Host a live session on ws://HOST:PORT/session.
    Serve {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Stop after this many ticks.
        #[arg(long)]
        ticks: Option<u64>,
        /// Write the applied needle commands as a script file on exit.
        #[arg(long)]
        input_log: Option<PathBuf>,
        /// Write the served trajectory on exit.
        #[arg(long)]
        record: Option<PathBuf>,
    },
    /// Stream a recorded trajectory to every client that connects.
    Replay {
        #[arg(long)]
        record: PathBuf,
        /// Scenario providing obstacle outlines for the viewer.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
    /// Write a built-in scenario as TOML.
    Preset {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(PRESET_NAMES))]
        name: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn parse(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_PARSE,
            message: message.into(),
        }
    }

    fn runtime(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_RUNTIME,
            message: message.into(),
        }
    }
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        let code = match e {
            ScenarioError::Safety(_) => EXIT_SAFETY,
            _ => EXIT_PARSE,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::parse(format!("reading {}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::runtime(format!("writing {}: {e}", path.display())))
}

fn load_trajectory(path: &Path) -> Result<TrajectoryRecord, Failure> {
    load_record(&read(path)?).map_err(|e| Failure::parse(format!("{}: {e}", path.display())))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            scenario,
            script,
            out,
            ticks,
        } => run(&scenario, script.as_deref(), &out, ticks),
        Command::Bench { scenario, ticks } => bench(scenario.as_deref(), ticks),
        Command::Compare { sim, reference, length } => compare(&sim, &reference, length),
        Command::Serve {
            scenario,
            port,
            host,
            ticks,
            input_log,
            record,
        } => serve(&scenario, &host, port, ticks, input_log.as_deref(), record.as_deref()),
        Command::Replay {
            record,
            scenario,
            port,
            host,
        } => replay(&record, scenario.as_deref(), &host, port),
        Command::Preset { name, out } => write_preset(&name, out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(scenario_path: &Path, script_path: Option<&Path>, out: &Path, ticks: Option<usize>) -> Result<(), Failure> {
    let scenario = load_scenario_file(scenario_path)?;
    let script = match script_path {
        Some(p) => parse_script(&read(p)?).map_err(|e| Failure::parse(format!("{}: {e}", p.display())))?,
        None => scenario.script().cloned().unwrap_or_default(),
    };
    let ticks = ticks.unwrap_or_else(|| script.ticks(scenario.sim.rate_hz));
    let mut sim = scenario.simulator().map_err(|e| Failure::runtime(e.to_string()))?;
    let mut record = TrajectoryRecord::new(scenario.record_header());
    record
        .frames
        .push(initial_frame(&sim).map_err(|e| Failure::runtime(e.to_string()))?);
    let started = Instant::now();
    for _ in 0..ticks {
        let out = sim
            .step(script.velocity_at(sim.time()))
            .map_err(|e| Failure::runtime(format!("tick {}: {e}", sim.ticks())))?;
        record.frames.push(frame_after(&sim, &out));
    }
    let wall = started.elapsed().as_secs_f64();
    let text = save_record(&record).map_err(|e| Failure::runtime(e.to_string()))?;
    write(out, &text)?;
    println!("{}", summary(&record, ticks, wall, sim.degraded_ticks()));
    Ok(())
}

fn summary(record: &TrajectoryRecord, ticks: usize, wall: f64, degraded: u64) -> String {
    let frames = &record.frames;
    let min = |f: &dyn Fn(&suture_core::scenario_io::Frame) -> f64| frames.iter().map(f).fold(f64::INFINITY, f64::min);
    let min_obs: Vec<String> = (0..record.header.m)
        .map(|o| format!("{:.3e}", min(&|f| f.min_h_obs[o])))
        .collect();
    let ticked = &frames[1.min(frames.len())..];
    let mean = |f: &dyn Fn(&suture_core::scenario_io::Frame) -> f64| {
        if ticked.is_empty() {
            0.0
        } else {
            ticked.iter().map(f).sum::<f64>() / ticked.len() as f64
        }
    };
    format!(
        "ticks={ticks} min_h_obs=[{}] min_h_con={:.3e} min_h_enh={:.3e} mean_slack_con={:.3e} mean_slack_enh={:.3e} \
         mean_slack_stiff={:.3e} degraded={degraded} achieved_hz={:.1}",
        min_obs.join(","),
        min(&|f| f.min_h_con),
        min(&|f| f.min_h_enh),
        mean(&|f| f.slack_con),
        mean(&|f| f.slack_enh),
        mean(&|f| f.slack_stiff),
        if wall > 0.0 { ticks as f64 / wall } else { f64::INFINITY },
    )
}

fn bench(scenario_path: Option<&Path>, ticks: Option<usize>) -> Result<(), Failure> {
    let scenarios: Vec<Scenario> = match scenario_path {
        Some(p) => vec![load_scenario_file(p)?],
        None => ["straight", "hernia", "silk"]
            .iter()
            .map(|name| Scenario::from_file(preset(name).expect("preset exists"), None))
            .collect::<Result<_, _>>()?,
    };
    println!(
        "{:<12} {:>4} {:>3} {:>6} {:>10} {:>10} {:>10} {:>10} {:>9} {:>8} {:>8}",
        "scenario", "n", "M", "ticks", "mean_ms", "p99_ms", "max_ms", "budget_ms", "qp_mean", "qp_max", "degraded"
    );
    for scenario in &scenarios {
        let script = scenario.script().cloned().unwrap_or_else(NeedleScript::default);
        let ticks = ticks.unwrap_or_else(|| script.ticks(scenario.sim.rate_hz).max(1));
        let mut sim = scenario.simulator().map_err(|e| Failure::runtime(e.to_string()))?;
        let mut times = Vec::with_capacity(ticks);
        let mut iters = Vec::with_capacity(ticks);
        for _ in 0..ticks {
            let v0 = script.velocity_at(sim.time());
            let started = Instant::now();
            let out = sim.step(v0).map_err(|e| Failure::runtime(e.to_string()))?;
            times.push(started.elapsed().as_secs_f64() * 1e3);
            iters.push(out.stats.qp_iterations);
        }
        let mean = times.iter().sum::<f64>() / ticks as f64;
        let mut sorted = times.clone();
        sorted.sort_by(f64::total_cmp);
        let p99 = sorted[((0.99 * ticks as f64).ceil() as usize).clamp(1, ticks) - 1];
        let max = sorted[ticks - 1];
        let qp_mean = iters.iter().sum::<usize>() as f64 / ticks as f64;
        println!(
            "{:<12} {:>4} {:>3} {:>6} {:>10.3} {:>10.3} {:>10.3} {:>10.3} {:>9.2} {:>8} {:>8}",
            scenario.name,
            scenario.params.n,
            scenario.obstacles.len(),
            ticks,
            mean,
            p99,
            max,
            1e3 / scenario.sim.rate_hz,
            qp_mean,
            iters.iter().max().copied().unwrap_or(0),
            sim.degraded_ticks()
        );
    }
    Ok(())
}

fn compare(sim: &Path, reference: &Path, length: f64) -> Result<(), Failure> {
    let a = load_trajectory(sim)?;
    let b = load_trajectory(reference)?;
    let e = mean_error(&a, &b, length).map_err(|e| Failure::runtime(e.to_string()))?;
    println!("mean_error_percent={e:.6}");
    Ok(())
}

fn socket_addr(host: &str, port: u16) -> Result<SocketAddr, Failure> {
    format!("{host}:{port}")
        .parse()
        .map_err(|e| Failure::parse(format!("bad address {host}:{port}: {e}")))
}

fn tokio_runtime() -> Result<tokio::runtime::Runtime, Failure> {
    tokio::runtime::Runtime::new().map_err(|e| Failure::runtime(e.to_string()))
}

fn serve(
    scenario_path: &Path,
    host: &str,
    port: u16,
    ticks: Option<u64>,
    input_log: Option<&Path>,
    record_path: Option<&Path>,
) -> Result<(), Failure> {
    let scenario = load_scenario_file(scenario_path)?;
    let rate = scenario.sim.rate_hz;
    let options = SessionOptions {
        addr: socket_addr(host, port)?,
        max_ticks: ticks,
    };
    let log = tokio_runtime()?.block_on(async {
        let handle = serve_session(scenario, options)
            .await
            .map_err(|e| Failure::runtime(e.to_string()))?;
        eprintln!(
            "serving ws://{}/session at {rate} Hz (ctrl-c to stop)",
            handle.local_addr()
        );
        loop {
            tokio::select! {
                _ = tokio::signal::ctrl_c() => break,
                _ = tokio::time::sleep(std::time::Duration::from_millis(100)) => {
                    if handle.is_finished() {
                        break;
                    }
                }
            }
        }
        handle.finish().await.map_err(|e| Failure::runtime(e.to_string()))
    })?;
    eprintln!("{} ticks at {:.2} Hz", log.inputs.len(), log.achieved_hz);
    if let Some(p) = input_log {
        write(p, &format_script(&script_from_inputs(&log.inputs, rate)))?;
    }
    if let Some(p) = record_path {
        write(
            p,
            &save_record(&log.record).map_err(|e| Failure::runtime(e.to_string()))?,
        )?;
    }
    Ok(())
}

fn replay(record_path: &Path, scenario_path: Option<&Path>, host: &str, port: u16) -> Result<(), Failure> {
    let record = load_trajectory(record_path)?;
    let scenario = scenario_path.map(load_scenario_file).transpose()?;
    let addr = socket_addr(host, port)?;
    tokio_runtime()?.block_on(async {
        let handle = serve_replay(&record, scenario.as_ref(), addr)
            .await
            .map_err(|e| Failure::runtime(e.to_string()))?;
        eprintln!(
            "replaying {} frames on ws://{}/session (ctrl-c to stop)",
            record.frames.len(),
            handle.local_addr()
        );
        let _ = tokio::signal::ctrl_c().await;
        handle.stop().await;
        Ok(())
    })
}

fn write_preset(name: &str, out: Option<&Path>) -> Result<(), Failure> {
    let file = preset(name).ok_or_else(|| Failure::parse(format!("unknown preset {name}")))?;
    let scenario = Scenario::from_file(file, None)?;
    let text = format!("# {name} (hash {})\n{}", scenario.hash(), scenario.to_toml());
    match out {
        Some(p) => write(p, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
