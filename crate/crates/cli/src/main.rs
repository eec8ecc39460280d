use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use gasman::graph::build_initial_graph;
use gasman::sim::{
    check_trace, format_trace, run_scenario, Churn, Connectivity, Geometric, MessageClass, Outcome, ScenarioConfig,
};
use gasman::zkp::{run_proof, HonestProver, OneBranchCheater, ProofOutcome};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(
    name = "gasman",
    version,
    about = "Shared-graph membership simulator and proof tools"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its trace and traffic metrics.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Replaces the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        metrics: PathBuf,
    },
    /// Run an honest proof and a cheating one on a fresh graph.
    Prove {
        #[arg(long)]
        nodes: usize,
        #[arg(long)]
        edges: usize,
        #[arg(long, default_value_t = 20)]
        rounds: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Measure the cheater's acceptance rate over many proofs.
        #[arg(long)]
        cheat: bool,
        #[arg(long, default_value_t = 1000, requires = "cheat")]
        trials: u32,
    },
    /// Check that every cycle snapshot in a trace follows from the one before.
    TraceCheck { path: PathBuf },
    /// Write a sweep of scenario files.
    GenScenario {
        #[arg(long, value_enum)]
        preset: Preset,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    /// Nodes 15 to 100, churn 5 to 25%, areas of 250, 500 and 750 m.
    #[value(name = "paperV")]
    PaperV,
}

const EXIT_TERMINATED: u8 = 2;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::FAILURE
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Run {
            scenario,
            seed,
            trace,
            metrics,
        } => cmd_run(&scenario, seed, &trace, &metrics),
        Command::Prove {
            nodes,
            edges,
            rounds,
            seed,
            cheat,
            trials,
        } => cmd_prove(nodes, edges, rounds, seed, cheat.then_some(trials)),
        Command::TraceCheck { path } => cmd_trace_check(&path),
        Command::GenScenario { preset, out } => cmd_gen_scenario(preset, &out),
    };
    result.unwrap_or_else(|msg| {
        eprintln!("error: {msg}");
        ExitCode::FAILURE
    })
}

fn read(path: &Path) -> Result<String, String> {
    fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn write(path: &Path, contents: &str) -> Result<(), String> {
    fs::write(path, contents).map_err(|e| format!("{}: {e}", path.display()))
}

fn cmd_run(scenario: &Path, seed: Option<u64>, trace: &Path, metrics: &Path) -> Result<ExitCode, String> {
    let mut cfg = ScenarioConfig::from_json(&read(scenario)?).map_err(|e| e.to_string())?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let report = run_scenario(&cfg).map_err(|e| e.to_string())?;
    write(trace, &format_trace(&report.trace))?;
    write(metrics, &report.metrics.to_json())?;
    let shares = format!(
        "zkp {:.4}, proof_of_life {:.4}",
        report.metrics.share(MessageClass::Zkp),
        report.metrics.share(MessageClass::ProofOfLife)
    );
    match report.outcome {
        Outcome::Completed => {
            println!(
                "completed: {} events, {} online; {shares}",
                report.trace.len(),
                report.online_at_end
            );
            Ok(ExitCode::SUCCESS)
        }
        Outcome::Terminated { at } => {
            println!("terminated at {at}: {} events; {shares}", report.trace.len());
            Ok(ExitCode::from(EXIT_TERMINATED))
        }
    }
}

fn cmd_prove(nodes: usize, edges: usize, rounds: u32, seed: u64, trials: Option<u32>) -> Result<ExitCode, String> {
    if rounds == 0 {
        return Err("--rounds must be at least 1".into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (graph, cycle) = build_initial_graph(nodes, edges, &mut rng).map_err(|e| e.to_string())?;
    let mut honest =
        HonestProver::new(graph.clone(), cycle, ChaCha8Rng::seed_from_u64(rng.gen())).map_err(|e| e.to_string())?;
    let outcome = run_proof(&graph, &mut honest, rounds, &mut rng).map_err(|e| e.to_string())?;
    println!("honest: {}", describe(outcome));

    let mut cheater = OneBranchCheater::new(graph.clone(), ChaCha8Rng::seed_from_u64(rng.gen()));
    let expected = 0.5f64.powi(rounds as i32);
    let mut cheater_ok = true;
    match trials {
        None => {
            let c = run_proof(&graph, &mut cheater, rounds, &mut rng).map_err(|e| e.to_string())?;
            println!("cheater: {} (acceptance probability {expected:e})", describe(c));
        }
        Some(k) => {
            let accepted = (0..k)
                .filter(|_| run_proof(&graph, &mut cheater, rounds, &mut rng).is_ok_and(|o| o.is_accepted()))
                .count();
            let rate = accepted as f64 / k as f64;
            let sigma = (expected * (1.0 - expected) / k as f64).sqrt();
            cheater_ok = (rate - expected).abs() <= 4.0 * sigma + f64::EPSILON;
            println!("cheater: accepted {accepted} of {k}, rate {rate:.4}, expected {expected:.4}");
            if !cheater_ok {
                println!("cheater: rate is more than 4 standard deviations from expected");
            }
        }
    }
    Ok(if outcome.is_accepted() && cheater_ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn describe(o: ProofOutcome) -> String {
    match o {
        ProofOutcome::Accepted { rounds } => format!("accept ({rounds} rounds)"),
        ProofOutcome::Rejected { round, reason } => format!("reject in round {round}: {reason}"),
        ProofOutcome::Aborted { round } => format!("aborted in round {round}"),
    }
}

fn cmd_trace_check(path: &Path) -> Result<ExitCode, String> {
    match check_trace(&read(path)?) {
        Ok(r) => {
            println!("consistent: {} events, {} cycle snapshots", r.events, r.snapshots);
            Ok(ExitCode::SUCCESS)
        }
        Err(e) => {
            eprintln!("{}: {e}", path.display());
            Ok(ExitCode::FAILURE)
        }
    }
}

fn cmd_gen_scenario(preset: Preset, out: &Path) -> Result<ExitCode, String> {
    let Preset::PaperV = preset;
    fs::create_dir_all(out).map_err(|e| format!("{}: {e}", out.display()))?;
    let mut count = 0;
    for n in [15usize, 30, 50, 100] {
        for churn in [5u32, 10, 25] {
            for area in [250u32, 500, 750] {
                let cfg = ScenarioConfig {
                    churn: Churn::uniform(churn as f64 / 100.0),
                    connectivity: Connectivity::Geometric(Geometric {
                        area_side: area as f64,
                        speed_max: 20.0,
                        pause: 0.5,
                        data_range: 250.0,
                        secure_range: 5.0,
                    }),
                    ..ScenarioConfig::full_mesh(n, 10.0, 0.0, 200.0, 1)
                };
                let name = format!("n{n:03}_churn{churn:02}_area{area}.json");
                write(&out.join(name), &cfg.to_json())?;
                count += 1;
            }
        }
    }
    println!("wrote {count} scenarios to {}", out.display());
    Ok(ExitCode::SUCCESS)
}
