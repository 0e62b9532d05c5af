//! Seeded experiments over the forward process and its dual.
//!
//! Trial `i` of an experiment with seed `s` draws from ChaCha stream `i` of
//! a key derived from `s`, and per-trial results are collected in trial
//! order, so every report is a pure function of its inputs regardless of
//! the size of the rayon pool it runs on.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dual_dag::{
    build_voting_dag, collision_stats, colour_dag, random_leaf_colours, root_colour_probability,
};
use crate::dynamics::{
    init_random, run_until_consensus, step_best_of_k, BestOfK, Outcome, TieRule,
};
use crate::graph::{
    gen_complete, gen_cycle, gen_gnp_min_degree, gen_random_regular, load_edge_list, Graph,
};
use crate::recursion::ideal_horizon;
use crate::reduction::{reduce_to_ternary, ReductionReport};
use crate::rng::{derive_seed, stream_rng};
use crate::sprinkling::{coupled_colouring, independence_certificate, majorises, sprinkle};
use crate::stats::{lower_median, quantile_sorted, Estimate, Z_95, Z_99};
use crate::{Error, Result};

/// Stream indices reserved under an experiment seed.
const GRAPH_KEY: u64 = u64::MAX;
const FORWARD_KEY: u64 = 0;
const DUAL_KEY: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GraphSpec {
    Complete { n: usize },
    Cycle { n: usize },
    Regular { n: usize, d: usize },
    Gnp { n: usize, p: f64, d_min: usize },
    File { path: PathBuf },
}

impl GraphSpec {
    /// Builds the graph; random families draw from a stream reserved for
    /// graph generation under `seed`.
    pub fn build(&self, seed: u64) -> Result<Graph> {
        let graph_seed = derive_seed(seed, GRAPH_KEY);
        match self {
            GraphSpec::Complete { n } => gen_complete(*n),
            GraphSpec::Cycle { n } => gen_cycle(*n),
            GraphSpec::Regular { n, d } => gen_random_regular(*n, *d, graph_seed),
            GraphSpec::Gnp { n, p, d_min } => {
                gen_gnp_min_degree(*n, *p, *d_min, graph_seed).map(|(g, _)| g)
            }
            GraphSpec::File { path } => load_edge_list(path),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub graph: GraphSpec,
    pub k: u8,
    pub tie_rule: TieRule,
    pub delta: f64,
    pub trials: u64,
    pub max_steps: u64,
    pub seed: u64,
    /// Trials not started before this much wall-clock time has passed are
    /// skipped and the summary is marked incomplete.
    #[serde(skip)]
    pub time_budget: Option<Duration>,
}

impl ExperimentSpec {
    fn validate(&self) -> Result<BestOfK> {
        if self.trials == 0 {
            return Err(Error::param("trials must be at least 1"));
        }
        crate::dynamics::check_delta(self.delta)?;
        BestOfK::new(self.k, self.tie_rule)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: u64,
    pub outcome: Outcome,
    pub steps: u64,
    pub final_blue_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Quantiles {
    pub min: u64,
    pub median: u64,
    pub p95: u64,
    pub max: u64,
}

impl Quantiles {
    pub fn of(mut values: Vec<u64>) -> Option<Quantiles> {
        values.sort_unstable();
        Some(Quantiles {
            min: *values.first()?,
            median: lower_median(&values)?,
            p95: quantile_sorted(&values, 0.95)?,
            max: *values.last()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub spec: ExperimentSpec,
    pub n: usize,
    pub trials_completed: u64,
    pub complete: bool,
    pub red_wins: u64,
    pub blue_wins: u64,
    pub timeouts: u64,
    pub red_win: Estimate,
    /// Quantiles of the consensus time over trials that reached consensus.
    pub consensus_time: Option<Quantiles>,
    /// Mean blue fraction per step; finished trials hold their final value.
    pub mean_trajectory: Vec<f64>,
    pub trials: Vec<TrialRecord>,
}

pub fn run_forward_experiment(spec: &ExperimentSpec) -> Result<ExperimentSummary> {
    let rule = spec.validate()?;
    let g = spec.graph.build(spec.seed)?;
    let key = derive_seed(spec.seed, FORWARD_KEY);
    let deadline = spec.time_budget.map(|b| Instant::now() + b);
    let runs: Vec<Option<(u64, crate::dynamics::RunResult)>> = (0..spec.trials)
        .into_par_iter()
        .map(|trial| -> Result<_> {
            if deadline.is_some_and(|d| Instant::now() >= d) {
                return Ok(None);
            }
            let mut rng = stream_rng(key, trial);
            let cfg = init_random(g.n(), spec.delta, &mut rng)?;
            let run = run_until_consensus(&g, cfg, rule, spec.max_steps, &mut rng)
                .map_err(|e| Error::InvalidInput(format!("trial {trial}: {e}")))?;
            Ok(Some((trial, run)))
        })
        .collect::<Result<_>>()?;
    let runs: Vec<_> = runs.into_iter().flatten().collect();
    let completed = runs.len() as u64;
    if completed == 0 {
        return Err(Error::Resource(
            "time budget expired before any trial ran".into(),
        ));
    }

    let count = |o: Outcome| runs.iter().filter(|(_, r)| r.outcome == o).count() as u64;
    let (red_wins, blue_wins, timeouts) = (
        count(Outcome::ConsensusRed),
        count(Outcome::ConsensusBlue),
        count(Outcome::Timeout),
    );
    let times = runs
        .iter()
        .filter(|(_, r)| r.outcome != Outcome::Timeout)
        .map(|(_, r)| r.steps_taken)
        .collect();
    let longest = runs
        .iter()
        .map(|(_, r)| r.blue_counts.len())
        .max()
        .unwrap_or(0);
    let mean_trajectory = (0..longest)
        .map(|t| {
            let total: f64 = runs
                .iter()
                .map(|(_, r)| {
                    *r.blue_counts
                        .get(t)
                        .unwrap_or(r.blue_counts.last().unwrap()) as f64
                        / r.n as f64
                })
                .sum();
            total / completed as f64
        })
        .collect();
    let trials = runs
        .iter()
        .map(|(trial, r)| TrialRecord {
            trial: *trial,
            outcome: r.outcome,
            steps: r.steps_taken,
            final_blue_fraction: *r.blue_counts.last().unwrap() as f64 / r.n as f64,
        })
        .collect();
    Ok(ExperimentSummary {
        spec: spec.clone(),
        n: g.n(),
        trials_completed: completed,
        complete: completed == spec.trials,
        red_wins,
        blue_wins,
        timeouts,
        red_win: Estimate::wilson(red_wins, completed, Z_95),
        consensus_time: Quantiles::of(times),
        mean_trajectory,
        trials,
    })
}

impl ExperimentSummary {
    /// One row per trial, then a `metric,value` block, then the mean
    /// trajectory, blocks separated by blank lines.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "trial,outcome,steps,final_blue_fraction")?;
        for t in &self.trials {
            writeln!(
                out,
                "{},{},{},{}",
                t.trial,
                t.outcome.label(),
                t.steps,
                t.final_blue_fraction
            )?;
        }
        writeln!(out)?;
        writeln!(out, "metric,value")?;
        let mut kv = |k: &str, v: String| writeln!(out, "{k},{v}");
        kv("n", self.n.to_string())?;
        kv("trials_requested", self.spec.trials.to_string())?;
        kv("trials_completed", self.trials_completed.to_string())?;
        kv("complete", self.complete.to_string())?;
        kv("red_wins", self.red_wins.to_string())?;
        kv("blue_wins", self.blue_wins.to_string())?;
        kv("timeouts", self.timeouts.to_string())?;
        kv("red_win_fraction", self.red_win.mean.to_string())?;
        kv("red_win_ci_low", self.red_win.ci_low.to_string())?;
        kv("red_win_ci_high", self.red_win.ci_high.to_string())?;
        let q = self.consensus_time;
        let show =
            |f: fn(&Quantiles) -> u64| q.as_ref().map_or("NA".to_string(), |q| f(q).to_string());
        kv("consensus_time_min", show(|q| q.min))?;
        kv("consensus_time_median", show(|q| q.median))?;
        kv("consensus_time_p95", show(|q| q.p95))?;
        kv("consensus_time_max", show(|q| q.max))?;
        writeln!(out)?;
        writeln!(out, "step,mean_blue_fraction")?;
        for (t, f) in self.mean_trajectory.iter().enumerate() {
            writeln!(out, "{t},{f}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub n: usize,
    pub median_consensus_time: Option<u64>,
    pub red_win_fraction: f64,
    /// Ideal-recursion steps from `1/2 - delta` to below `1/n`.
    pub predicted_steps: Option<usize>,
}

/// Median consensus time of Best-of-k on `K_n` for each `n`.
pub fn run_scaling_experiment(
    n_list: &[usize],
    delta: f64,
    k: u8,
    trials: u64,
    seed: u64,
) -> Result<Vec<ScalingRow>> {
    n_list
        .iter()
        .map(|&n| {
            let summary = run_forward_experiment(&ExperimentSpec {
                graph: GraphSpec::Complete { n },
                k,
                tie_rule: TieRule::KeepOwn,
                delta,
                trials,
                max_steps: 1000,
                seed: derive_seed(seed, n as u64),
                time_budget: None,
            })?;
            Ok(ScalingRow {
                n,
                median_consensus_time: summary.consensus_time.map(|q| q.median),
                red_win_fraction: summary.red_win.mean,
                predicted_steps: ideal_horizon(n as u64, delta)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualityReport {
    /// `P(xi_T(v0) = B)` from the forward process.
    pub forward: Estimate,
    /// `P(root = B)` from random voting-DAGs.
    pub dual: Estimate,
    pub confidence: f64,
    pub overlap: bool,
}

/// Runs the forward process for `height` rounds and, independently, colours
/// random voting-DAGs of the same height; both estimates carry 99% Wilson
/// intervals.
pub fn run_duality_experiment(
    g: &Graph,
    v0: usize,
    height: usize,
    delta: f64,
    trials: u64,
    seed: u64,
) -> Result<DualityReport> {
    crate::dynamics::check_delta(delta)?;
    if trials == 0 {
        return Err(Error::param("trials must be at least 1"));
    }
    if v0 >= g.n() {
        return Err(Error::param(format!("root {v0} out of range")));
    }
    let key = derive_seed(seed, FORWARD_KEY);
    let rule = BestOfK::three();
    let blue = (0..trials)
        .into_par_iter()
        .map(|trial| -> Result<u64> {
            let mut rng = stream_rng(key, trial);
            let mut cfg = init_random(g.n(), delta, &mut rng)?;
            for _ in 0..height {
                cfg = step_best_of_k(g, &cfg, rule, &mut rng)?;
            }
            Ok(cfg.colour(v0).is_blue() as u64)
        })
        .try_reduce(|| 0, |a, b| Ok(a + b))?;
    let dual = root_colour_probability(
        g,
        v0,
        height,
        0.5 - delta,
        trials,
        derive_seed(seed, DUAL_KEY),
    )?;
    let forward = Estimate::wilson(blue, trials, Z_99);
    let dual = Estimate::wilson(dual.successes, dual.trials, Z_99);
    Ok(DualityReport {
        overlap: forward.overlaps(&dual),
        forward,
        dual,
        confidence: 0.99,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualReport {
    pub root: usize,
    pub height: usize,
    pub leaf_blue_prob: f64,
    pub estimate: Estimate,
    /// Mean `m_t` per level.
    pub mean_level_sizes: Vec<f64>,
    /// Mean number of levels with a collision.
    pub mean_collision_levels: f64,
}

pub fn run_dual_experiment(
    g: &Graph,
    v0: usize,
    height: usize,
    delta: f64,
    trials: u64,
    seed: u64,
) -> Result<DualReport> {
    crate::dynamics::check_delta(delta)?;
    if trials == 0 {
        return Err(Error::param("trials must be at least 1"));
    }
    if v0 >= g.n() {
        return Err(Error::param(format!("root {v0} out of range")));
    }
    let p = 0.5 - delta;
    let per_trial: Vec<(bool, Vec<usize>, usize)> = (0..trials)
        .into_par_iter()
        .map(|trial| -> Result<_> {
            let mut rng = stream_rng(seed, trial);
            let dag = build_voting_dag(g, v0, height, &mut rng)?;
            let leaves = random_leaf_colours(&dag, p, &mut rng);
            let colours = colour_dag(&dag, &leaves)?;
            let st = collision_stats(&dag);
            Ok((
                colours[dag.root().index()].is_blue(),
                st.level_sizes,
                st.total_levels_with_collision,
            ))
        })
        .collect::<Result<_>>()?;
    let blue = per_trial.iter().filter(|t| t.0).count() as u64;
    let mean_level_sizes = (0..=height)
        .map(|t| per_trial.iter().map(|r| r.1[t] as f64).sum::<f64>() / trials as f64)
        .collect();
    Ok(DualReport {
        root: v0,
        height,
        leaf_blue_prob: p,
        estimate: Estimate::wilson(blue, trials, Z_95),
        mean_level_sizes,
        mean_collision_levels: per_trial.iter().map(|r| r.2 as f64).sum::<f64>() / trials as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SprinkleCheck {
    pub instances: u64,
    pub redirected_edges: u64,
    /// Instances where some node of `H` was bluer than in `H'`.
    pub majorisation_failures: u64,
    /// Instances where leaf supports at the cut level overlapped.
    pub disjointness_failures: u64,
}

impl SprinkleCheck {
    pub fn passed(&self) -> bool {
        self.majorisation_failures == 0 && self.disjointness_failures == 0
    }
}

/// Builds `instances` DAGs, sprinkles each at `cut` (or at a uniformly
/// random cut when `None`), colours leaves i.i.d. with probability
/// `leaf_blue_prob` and checks majorisation at every node and disjointness
/// of leaf supports at the cut.
pub fn run_sprinkle_check(
    g: &Graph,
    v0: usize,
    height: usize,
    cut: Option<usize>,
    leaf_blue_prob: f64,
    instances: u64,
    seed: u64,
) -> Result<SprinkleCheck> {
    if let Some(c) = cut {
        if c > height {
            return Err(Error::param(format!(
                "cut level {c} exceeds height {height}"
            )));
        }
    }
    if !(0.0..=1.0).contains(&leaf_blue_prob) {
        return Err(Error::param(format!(
            "leaf_blue_prob must lie in [0, 1], got {leaf_blue_prob}"
        )));
    }
    let per: Vec<(u64, bool, bool)> = (0..instances)
        .into_par_iter()
        .map(|i| -> Result<_> {
            use rand::Rng;
            let mut rng = stream_rng(seed, i);
            let dag = build_voting_dag(g, v0, height, &mut rng)?;
            let cut = cut.unwrap_or_else(|| rng.gen_range(0..=height));
            let s = sprinkle(&dag, cut)?;
            let leaves = random_leaf_colours(&dag, leaf_blue_prob, &mut rng);
            let (h, hp) = coupled_colouring(&s, &leaves)?;
            let disjoint = independence_certificate(&s, cut)?.pairwise_disjoint;
            Ok((
                s.redirected_edges().len() as u64,
                majorises(&h, &hp),
                disjoint,
            ))
        })
        .collect::<Result<_>>()?;
    Ok(SprinkleCheck {
        instances,
        redirected_edges: per.iter().map(|p| p.0).sum(),
        majorisation_failures: per.iter().filter(|p| !p.1).count() as u64,
        disjointness_failures: per.iter().filter(|p| !p.2).count() as u64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReduceCheck {
    pub instances: u64,
    pub root_colour_preserved: u64,
    pub within_budget: u64,
    /// Over-budget instances whose root is blue.
    pub over_budget_blue_root: u64,
    /// The first instance, in trial order, that broke either property.
    pub first_failure: Option<(u64, ReductionReport)>,
}

impl ReduceCheck {
    pub fn passed(&self) -> bool {
        self.root_colour_preserved == self.instances && self.within_budget == self.instances
    }
}

/// Random DAG plus i.i.d. colouring per instance, rewritten by
/// [`reduce_to_ternary`]. `heights` is cycled through by instance index.
pub fn run_reduce_check(
    g: &Graph,
    v0: usize,
    heights: &[usize],
    leaf_blue_prob: f64,
    instances: u64,
    seed: u64,
) -> Result<ReduceCheck> {
    if heights.is_empty() {
        return Err(Error::param("at least one height is required"));
    }
    let reports: Vec<ReductionReport> = (0..instances)
        .into_par_iter()
        .map(|i| -> Result<_> {
            let mut rng = stream_rng(seed, i);
            let height = heights[(i % heights.len() as u64) as usize];
            let dag = build_voting_dag(g, v0, height, &mut rng)?;
            let leaves = random_leaf_colours(&dag, leaf_blue_prob, &mut rng);
            Ok(reduce_to_ternary(&dag, &leaves)?.1)
        })
        .collect::<Result<_>>()?;
    Ok(ReduceCheck {
        instances,
        root_colour_preserved: reports.iter().filter(|r| r.root_preserved()).count() as u64,
        within_budget: reports.iter().filter(|r| r.within_budget()).count() as u64,
        over_budget_blue_root: reports
            .iter()
            .filter(|r| !r.within_budget() && r.root_colour_in.is_blue())
            .count() as u64,
        first_failure: reports
            .iter()
            .enumerate()
            .find(|(_, r)| !r.root_preserved() || !r.within_budget())
            .map(|(i, r)| (i as u64, *r)),
    })
}

/// Collision indicator counts bucketed by `(level, m_level)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollisionBucket {
    pub level: usize,
    pub level_size: usize,
    pub dags: u64,
    pub with_collision: u64,
}

/// Builds `dags` voting-DAGs on `g` and tallies `C_i` by level and level size.
pub fn run_collision_profile(
    g: &Graph,
    v0: usize,
    height: usize,
    dags: u64,
    seed: u64,
) -> Result<Vec<CollisionBucket>> {
    let stats: Vec<_> = (0..dags)
        .into_par_iter()
        .map(|i| -> Result<_> {
            let mut rng = stream_rng(seed, i);
            Ok(collision_stats(&build_voting_dag(g, v0, height, &mut rng)?))
        })
        .collect::<Result<_>>()?;
    let mut buckets: BTreeMap<(usize, usize), (u64, u64)> = BTreeMap::new();
    for st in &stats {
        for level in 1..=height {
            let e = buckets.entry((level, st.level_sizes[level])).or_default();
            e.0 += 1;
            e.1 += st.indicator(level) as u64;
        }
    }
    Ok(buckets
        .into_iter()
        .map(
            |((level, level_size), (dags, with_collision))| CollisionBucket {
                level,
                level_size,
                dags,
                with_collision,
            },
        )
        .collect())
}
