use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use votedag::dynamics::TieRule;
use votedag::harness::{
    run_dual_experiment, run_duality_experiment, run_forward_experiment, run_reduce_check,
    run_sprinkle_check, ExperimentSpec, GraphSpec,
};
use votedag::recursion::{delta_trajectory, ideal_trajectory, phase_plan, sprinkled_trajectory};
use votedag::reduction::{verify_lemma2_exhaustive, verify_lemma2_sampled};
use votedag::{Error, Result};

const EXIT_USAGE: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_VERIFY: u8 = 3;

#[derive(Parser)]
#[command(
    name = "votedag",
    version,
    about = "Best-of-k voting dynamics and voting-DAG analysis"
)]
struct Cli {
    /// Size of the worker pool; results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the forward process until consensus.
    Simulate(SimulateArgs),
    /// Estimate the root colour probability of random voting-DAGs.
    Dual(DualArgs),
    /// Compare forward and dual estimates of P(xi_T(v0) = B).
    DualityCheck(DualityArgs),
    /// Sprinkle random voting-DAGs and check majorisation and disjointness.
    SprinkleDemo(SprinkleArgs),
    /// Reduce random coloured DAGs to ternary trees and check the certificate.
    ReduceCheck(ReduceArgs),
    /// Iterate one of the probability recursions.
    Recursion(RecursionArgs),
    /// Verify a combinatorial lemma.
    Verify {
        #[command(subcommand)]
        what: VerifyCommand,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum GraphKind {
    Complete,
    Cycle,
    Regular,
    Gnp,
    File,
}

#[derive(Args)]
struct GraphArgs {
    #[arg(long, value_enum)]
    graph: GraphKind,
    #[arg(long)]
    n: Option<usize>,
    /// Degree for `regular`, minimum degree for `gnp`.
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    path: Option<PathBuf>,
}

impl GraphArgs {
    fn spec(&self) -> Result<GraphSpec> {
        let need_n = || {
            self.n
                .ok_or_else(|| Error::InvalidParameter("--n is required for this graph".into()))
        };
        let need_d = || {
            self.d
                .ok_or_else(|| Error::InvalidParameter("--d is required for this graph".into()))
        };
        Ok(match self.graph {
            GraphKind::Complete => GraphSpec::Complete { n: need_n()? },
            GraphKind::Cycle => GraphSpec::Cycle { n: need_n()? },
            GraphKind::Regular => GraphSpec::Regular {
                n: need_n()?,
                d: need_d()?,
            },
            GraphKind::Gnp => GraphSpec::Gnp {
                n: need_n()?,
                p: self
                    .p
                    .ok_or_else(|| Error::InvalidParameter("--p is required for gnp".into()))?,
                d_min: self.d.unwrap_or(1),
            },
            GraphKind::File => GraphSpec::File {
                path: self
                    .path
                    .clone()
                    .ok_or_else(|| Error::InvalidParameter("--path is required for file".into()))?,
            },
        })
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum Tie {
    Keep,
    Random,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    graph: GraphArgs,
    #[arg(long)]
    delta: f64,
    #[arg(long, default_value_t = 3)]
    k: u8,
    #[arg(long, value_enum, default_value = "keep")]
    tie: Tie,
    #[arg(long)]
    trials: u64,
    #[arg(long)]
    max_steps: u64,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Wall-clock budget in seconds; trials not started in time are skipped.
    #[arg(long)]
    time_budget: Option<f64>,
}

#[derive(Args)]
struct DualArgs {
    #[command(flatten)]
    graph: GraphArgs,
    #[arg(long)]
    root: usize,
    #[arg(long)]
    height: usize,
    #[arg(long)]
    delta: f64,
    #[arg(long)]
    trials: u64,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Args)]
struct DualityArgs {
    #[command(flatten)]
    graph: GraphArgs,
    #[arg(long)]
    root: usize,
    #[arg(long)]
    height: usize,
    #[arg(long)]
    delta: f64,
    #[arg(long)]
    trials: u64,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SprinkleArgs {
    #[command(flatten)]
    graph: GraphArgs,
    #[arg(long)]
    root: usize,
    #[arg(long)]
    height: usize,
    #[arg(long)]
    cut: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    instances: u64,
    #[arg(long, default_value_t = 0.5)]
    leaf_blue_prob: f64,
    /// Writes the sprinkled DAG of instance 0.
    #[arg(long)]
    dump: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReduceArgs {
    #[command(flatten)]
    graph: GraphArgs,
    #[arg(long)]
    root: usize,
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    height: Vec<usize>,
    #[arg(long)]
    trials: u64,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 0.5)]
    leaf_blue_prob: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum RecursionKind {
    Ideal,
    Sprinkled,
    Delta,
    Plan,
}

#[derive(Args)]
struct RecursionArgs {
    #[arg(value_enum)]
    kind: RecursionKind,
    #[arg(long)]
    delta: f64,
    /// Minimum degree; required except for `ideal`.
    #[arg(long)]
    d: Option<u64>,
    #[arg(long, default_value_t = 1.0)]
    a: f64,
    #[arg(long, default_value_t = 10)]
    steps: usize,
    /// Graph size for `plan`; defaults to `d + 1`.
    #[arg(long)]
    n: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum VerifyCommand {
    /// Fewer than 2^h blue leaves never make a blue root.
    Lemma2 {
        #[arg(long)]
        height: usize,
        #[arg(long, default_value_t = 100_000)]
        samples: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

enum Outcome {
    Ok,
    Failed,
}

fn emit(out: &Option<PathBuf>, bytes: Vec<u8>) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, bytes)?,
        None => std::io::stdout().write_all(&bytes)?,
    }
    Ok(())
}

fn json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut s = serde_json::to_vec_pretty(value).map_err(|e| Error::Resource(e.to_string()))?;
    s.push(b'\n');
    Ok(s)
}

fn verdict(ok: bool) -> Outcome {
    if ok {
        Outcome::Ok
    } else {
        Outcome::Failed
    }
}

fn run(cmd: Command) -> Result<Outcome> {
    match cmd {
        Command::Simulate(a) => {
            let spec = ExperimentSpec {
                graph: a.graph.spec()?,
                k: a.k,
                tie_rule: match a.tie {
                    Tie::Keep => TieRule::KeepOwn,
                    Tie::Random => TieRule::RandomPick,
                },
                delta: a.delta,
                trials: a.trials,
                max_steps: a.max_steps,
                seed: a.seed,
                time_budget: match a.time_budget {
                    Some(s) if !(s >= 0.0 && s.is_finite()) => {
                        return Err(Error::InvalidParameter(format!("invalid time budget {s}")))
                    }
                    s => s.map(Duration::from_secs_f64),
                },
            };
            let summary = run_forward_experiment(&spec)?;
            let bytes = match a.format {
                Format::Csv => {
                    let mut buf = Vec::new();
                    summary.write_csv(&mut buf)?;
                    buf
                }
                Format::Json => json(&summary)?,
            };
            emit(&a.out, bytes)?;
            if !summary.complete {
                eprintln!(
                    "time budget expired: {} of {} trials completed",
                    summary.trials_completed, spec.trials
                );
                return Err(Error::Resource("experiment incomplete".into()));
            }
            Ok(Outcome::Ok)
        }
        Command::Dual(a) => {
            let g = a.graph.spec()?.build(a.seed)?;
            let r = run_dual_experiment(&g, a.root, a.height, a.delta, a.trials, a.seed)?;
            let bytes = match a.format {
                Format::Json => json(&r)?,
                Format::Csv => {
                    let mut buf = Vec::new();
                    writeln!(buf, "metric,value")?;
                    writeln!(buf, "root,{}", r.root)?;
                    writeln!(buf, "height,{}", r.height)?;
                    writeln!(buf, "leaf_blue_prob,{}", r.leaf_blue_prob)?;
                    writeln!(buf, "trials,{}", r.estimate.trials)?;
                    writeln!(buf, "root_blue,{}", r.estimate.successes)?;
                    writeln!(buf, "root_blue_fraction,{}", r.estimate.mean)?;
                    writeln!(buf, "ci_low,{}", r.estimate.ci_low)?;
                    writeln!(buf, "ci_high,{}", r.estimate.ci_high)?;
                    writeln!(buf, "mean_collision_levels,{}", r.mean_collision_levels)?;
                    writeln!(buf)?;
                    writeln!(buf, "level,mean_size")?;
                    for (t, m) in r.mean_level_sizes.iter().enumerate() {
                        writeln!(buf, "{t},{m}")?;
                    }
                    buf
                }
            };
            emit(&a.out, bytes)?;
            Ok(Outcome::Ok)
        }
        Command::DualityCheck(a) => {
            let g = a.graph.spec()?.build(a.seed)?;
            let r = run_duality_experiment(&g, a.root, a.height, a.delta, a.trials, a.seed)?;
            let mut buf = Vec::new();
            writeln!(buf, "estimate,mean,ci_low,ci_high")?;
            writeln!(
                buf,
                "forward,{},{},{}",
                r.forward.mean, r.forward.ci_low, r.forward.ci_high
            )?;
            writeln!(
                buf,
                "dual,{},{},{}",
                r.dual.mean, r.dual.ci_low, r.dual.ci_high
            )?;
            writeln!(buf, "overlap,{}", r.overlap)?;
            emit(&a.out, buf)?;
            Ok(verdict(r.overlap))
        }
        Command::SprinkleDemo(a) => {
            let g = a.graph.spec()?.build(a.seed)?;
            if let Some(path) = &a.dump {
                use votedag::dual_dag::build_voting_dag;
                use votedag::rng::stream_rng;
                let dag = build_voting_dag(&g, a.root, a.height, &mut stream_rng(a.seed, 0))?;
                let s = votedag::sprinkling::sprinkle(&dag, a.cut)?;
                let mut buf = Vec::new();
                s.dag().write_dump(&mut buf)?;
                std::fs::write(path, buf)?;
            }
            let r = run_sprinkle_check(
                &g,
                a.root,
                a.height,
                Some(a.cut),
                a.leaf_blue_prob,
                a.instances,
                a.seed,
            )?;
            let mut buf = Vec::new();
            writeln!(buf, "instances,{}", r.instances)?;
            writeln!(buf, "redirected_edges,{}", r.redirected_edges)?;
            writeln!(buf, "majorisation_failures,{}", r.majorisation_failures)?;
            writeln!(buf, "disjointness_failures,{}", r.disjointness_failures)?;
            writeln!(buf, "majorised,{}", r.majorisation_failures == 0)?;
            emit(&a.out, buf)?;
            Ok(verdict(r.passed()))
        }
        Command::ReduceCheck(a) => {
            let g = a.graph.spec()?.build(a.seed)?;
            let r = run_reduce_check(&g, a.root, &a.height, a.leaf_blue_prob, a.trials, a.seed)?;
            let mut buf = Vec::new();
            writeln!(buf, "instances,{}", r.instances)?;
            writeln!(buf, "root_colour_preserved,{}", r.root_colour_preserved)?;
            writeln!(buf, "within_budget,{}", r.within_budget)?;
            writeln!(buf, "over_budget_blue_root,{}", r.over_budget_blue_root)?;
            if let Some((i, f)) = &r.first_failure {
                writeln!(
                    buf,
                    "first_failure,{i},blue_in={},blue_out={},collision_levels={},bound={},root_in={},root_out={}",
                    f.blue_leaves_in, f.blue_leaves_out, f.collision_levels, f.bound, f.root_colour_in, f.root_colour_out
                )?;
            }
            emit(&a.out, buf)?;
            Ok(verdict(r.passed()))
        }
        Command::Recursion(a) => {
            let need_d = || {
                a.d.ok_or_else(|| Error::InvalidParameter("--d is required".into()))
            };
            let bytes = match a.kind {
                RecursionKind::Ideal => {
                    let mut buf = Vec::new();
                    ideal_trajectory(a.delta, a.steps)?.write_csv(&mut buf)?;
                    buf
                }
                RecursionKind::Sprinkled => {
                    let mut buf = Vec::new();
                    sprinkled_trajectory(0.5 - a.delta, need_d()?, a.steps)?.write_csv(&mut buf)?;
                    buf
                }
                RecursionKind::Delta => {
                    let mut buf = Vec::new();
                    delta_trajectory(a.delta, need_d()?, a.steps)?.write_csv(&mut buf)?;
                    buf
                }
                RecursionKind::Plan => {
                    let d = need_d()?;
                    json(&phase_plan(
                        a.n.unwrap_or(d.saturating_add(1)),
                        d,
                        a.delta,
                        a.a,
                    )?)?
                }
            };
            emit(&a.out, bytes)?;
            Ok(Outcome::Ok)
        }
        Command::Verify {
            what:
                VerifyCommand::Lemma2 {
                    height,
                    samples,
                    seed,
                },
        } => {
            let r = if height <= 2 {
                verify_lemma2_exhaustive(height)?
            } else {
                verify_lemma2_sampled(height, samples, seed)?
            };
            println!(
                "height={} mode={} checked={} violations={}",
                r.height,
                if r.exhaustive {
                    "exhaustive"
                } else {
                    "sampled"
                },
                r.checked,
                r.violations
            );
            Ok(verdict(r.violations == 0))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = cli.workers {
        if w == 0 {
            eprintln!("error: --workers must be at least 1");
            return ExitCode::from(EXIT_USAGE);
        }
        pool = pool.num_threads(w);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_RUNTIME);
        }
    };
    match pool.install(|| run(cli.command)) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Failed) => {
            eprintln!("verification failed");
            ExitCode::from(EXIT_VERIFY)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage_error() {
                EXIT_USAGE
            } else {
                EXIT_RUNTIME
            })
        }
    }
}
