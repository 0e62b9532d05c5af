//! Acceptance runner: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails or overruns its time limit.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::seq::index::sample;
use rand::Rng;

use votedag::dynamics::{step_best_of_k, BestOfK, OpinionConfig, TieRule};
use votedag::graph::{gen_complete, gen_cycle, gen_random_regular};
use votedag::harness::{
    run_collision_profile, run_duality_experiment, run_forward_experiment, run_reduce_check,
    run_sprinkle_check, ExperimentSpec, GraphSpec,
};
use votedag::recursion::{ideal_step, sprinkled_step};
use votedag::reduction::{verify_lemma2_exhaustive, verify_lemma2_sampled};
use votedag::rng::stream_rng;
use votedag::stats::{lower_median, Estimate, Z_95};

type Criterion = (&'static str, &'static str, u64, fn() -> Verdict);

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn recursion_kernel() -> Verdict {
    let fixed = [0.0, 0.5, 1.0].iter().all(|&b| ideal_step(b).unwrap() == b);
    let at_04 = ideal_step(0.4).unwrap();
    let close = (at_04 - 0.352).abs() <= 1e-12;
    let grid_bad = (1..=99)
        .map(|i| i as f64 / 100.0)
        .filter(|&p| sprinkled_step(p, 0.0).unwrap() != ideal_step(p).unwrap())
        .count();
    verdict(
        fixed && close && grid_bad == 0,
        format!("fixed points ok={fixed}, ideal_step(0.4)={at_04}, grid mismatches={grid_bad}/99"),
    )
}

/// Majority of three samples drawn with replacement from the three
/// neighbours of a `K_4` vertex, leaves blue with probability `p`.
fn k4_height1_exact(p: f64) -> f64 {
    let mut total = 0.0;
    for triple in 0..27u32 {
        let picks = [triple % 3, triple / 3 % 3, triple / 9];
        for mask in 0..8u32 {
            let blue = mask.count_ones() as i32;
            let weight = p.powi(blue) * (1.0 - p).powi(3 - blue);
            let votes = picks.iter().filter(|&&v| mask >> v & 1 == 1).count();
            if votes >= 2 {
                total += weight;
            }
        }
    }
    total / 27.0
}

fn duality() -> Verdict {
    let k4 = gen_complete(4).unwrap();
    let c5 = gen_cycle(5).unwrap();
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, g, height) in [("K4", &k4, 1), ("C5", &c5, 2)] {
        for delta in [0.0, 0.1] {
            let r = run_duality_experiment(g, 0, height, delta, 100_000, 0xD0A1 + height as u64)
                .unwrap();
            let mut line_ok = r.overlap;
            let mut extra = String::new();
            if name == "K4" {
                let exact = k4_height1_exact(0.5 - delta);
                line_ok &= r.forward.contains(exact) && r.dual.contains(exact);
                extra = format!(" exact={exact:.6}");
            }
            ok &= line_ok;
            parts.push(format!(
                "{name}/T={height}/delta={delta}: fwd={:.4} [{:.4},{:.4}] dual={:.4} [{:.4},{:.4}]{extra} {}",
                r.forward.mean,
                r.forward.ci_low,
                r.forward.ci_high,
                r.dual.mean,
                r.dual.ci_low,
                r.dual.ci_high,
                if line_ok { "ok" } else { "MISMATCH" }
            ));
        }
    }
    verdict(ok, parts.join("; "))
}

fn sprinkling() -> Verdict {
    let k5 = gen_complete(5).unwrap();
    let reg = gen_random_regular(20, 4, 0x5EED).unwrap();
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, g) in [("K5", &k5), ("20-vertex 4-regular", &reg)] {
        let (mut inst, mut redirected, mut maj, mut disj) = (0, 0, 0, 0);
        for (i, height) in [2usize, 3, 4, 5].into_iter().enumerate() {
            let r = run_sprinkle_check(g, 0, height, None, 0.5, 2500, 0x59 + i as u64).unwrap();
            inst += r.instances;
            redirected += r.redirected_edges;
            maj += r.majorisation_failures;
            disj += r.disjointness_failures;
        }
        ok &= maj == 0 && disj == 0 && inst == 10_000;
        parts.push(format!(
            "{name}: {inst} instances, {redirected} redirected edges, majorisation failures={maj}, disjointness failures={disj}"
        ));
    }
    verdict(ok, parts.join("; "))
}

fn ternary_root(leaves: &[bool]) -> bool {
    if leaves.len() == 1 {
        return leaves[0];
    }
    let k = leaves.len() / 3;
    let votes = (0..3)
        .filter(|&i| ternary_root(&leaves[i * k..(i + 1) * k]))
        .count();
    votes >= 2
}

fn blue_leaf_threshold() -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for (h, expect) in [(1u32, 4u64), (2, 130)] {
        let leaves = 3usize.pow(h);
        let (mut checked, mut blue_roots) = (0u64, 0u64);
        for mask in 0u32..1 << leaves {
            if mask.count_ones() < 1 << h {
                checked += 1;
                let colouring: Vec<bool> = (0..leaves).map(|i| mask >> i & 1 == 1).collect();
                blue_roots += ternary_root(&colouring) as u64;
            }
        }
        let lib = verify_lemma2_exhaustive(h as usize).unwrap();
        let line_ok =
            checked == expect && blue_roots == 0 && lib.checked == expect && lib.violations == 0;
        ok &= line_ok;
        parts.push(format!(
            "h={h}: {checked} colourings, {blue_roots} blue roots (library: {} / {})",
            lib.checked, lib.violations
        ));
    }
    let mut rng = stream_rng(0x1E44A2, 0);
    let mut blue_roots = 0;
    for _ in 0..100_000 {
        let blue = rng.gen_range(0..8);
        let mut colouring = vec![false; 27];
        for i in sample(&mut rng, 27, blue) {
            colouring[i] = true;
        }
        blue_roots += ternary_root(&colouring) as u64;
    }
    let lib = verify_lemma2_sampled(3, 100_000, 0x1E44A2).unwrap();
    ok &= blue_roots == 0 && lib.violations == 0;
    parts.push(format!(
        "h=3: 100000 colourings with <8 blue leaves, {blue_roots} blue roots (library sampled {} / {})",
        lib.checked, lib.violations
    ));
    verdict(ok, parts.join("; "))
}

fn reduction() -> Verdict {
    let k6 = gen_complete(6).unwrap();
    let r = run_reduce_check(&k6, 0, &[2, 3], 0.5, 10_000, 0x4ED).unwrap();
    let mut detail = format!(
        "{} instances: root colour preserved {}, within B0*2^C {} (over budget with blue root {})",
        r.instances, r.root_colour_preserved, r.within_budget, r.over_budget_blue_root
    );
    if let Some((i, f)) = r.first_failure {
        detail += &format!(
            "; first failure #{i}: B0={} C={} bound={} blue_out={} root={}",
            f.blue_leaves_in, f.collision_levels, f.bound, f.blue_leaves_out, f.root_colour_in
        );
    }
    verdict(r.passed(), detail)
}

fn collision_bound() -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for d in [50usize, 200] {
        let g = gen_complete(d + 1).unwrap();
        let buckets = run_collision_profile(&g, 0, 3, 10_000, 0xC011 + d as u64).unwrap();
        let mut violations = Vec::new();
        let mut over_union = 0;
        for b in &buckets {
            let m = b.level_size as f64;
            let bound = m * m / d as f64;
            let est = Estimate::wilson(b.with_collision, b.dags, Z_95);
            if est.ci_low > bound {
                violations.push((
                    b.dags,
                    format!(
                        "level {} m={}: {}/{} = {:.4} (CI low {:.4}) > {:.4}",
                        b.level,
                        b.level_size,
                        b.with_collision,
                        b.dags,
                        est.mean,
                        est.ci_low,
                        bound
                    ),
                ));
            }
            // Union bound over the 3m samples of the level, for reference only.
            if est.ci_low > 3.0 * m * (3.0 * m - 1.0) / (2.0 * d as f64) {
                over_union += 1;
            }
        }
        violations.sort_by_key(|v| std::cmp::Reverse(v.0));
        ok &= violations.is_empty();
        parts.push(format!(
            "d={d}: {} buckets, {} exceed m^2/d{}, {} exceed 3m(3m-1)/(2d)",
            buckets.len(),
            violations.len(),
            violations
                .first()
                .map(|v| format!(" (e.g. {})", v.1))
                .unwrap_or_default(),
            over_union
        ));
    }
    verdict(ok, parts.join("; "))
}

fn median_time(n: usize, delta: f64, seed: u64) -> (u64, u64, u64) {
    let s = run_forward_experiment(&ExperimentSpec {
        graph: GraphSpec::Complete { n },
        k: 3,
        tie_rule: TieRule::KeepOwn,
        delta,
        trials: 100,
        max_steps: 1000,
        seed,
        time_budget: None,
    })
    .unwrap();
    let mut times: Vec<u64> = s.trials.iter().map(|t| t.steps).collect();
    times.sort_unstable();
    (
        lower_median(&times).unwrap(),
        s.red_wins,
        s.trials_completed,
    )
}

fn consensus_trend() -> Verdict {
    let ns = [1_000usize, 10_000, 100_000];
    let mut ok = true;
    let mut medians = Vec::new();
    let mut parts = Vec::new();
    for &n in &ns {
        let (m, red, total) = median_time(n, 0.1, 0x7E + n as u64);
        let (m_half, _, _) = median_time(n, 0.05, 0x7F + n as u64);
        let red_ok = red * 100 >= 99 * total;
        let halving_ok = m_half <= m + 3;
        ok &= red_ok && halving_ok;
        medians.push(m);
        parts.push(format!(
            "n={n}: red {red}/{total}, median {m}, median at delta/2 {m_half}"
        ));
    }
    let monotone = medians.windows(2).all(|w| w[0] <= w[1]);
    let mut distinct = medians.clone();
    distinct.dedup();
    ok &= monotone && distinct.len() <= 3;
    parts.push(format!(
        "medians non-decreasing={monotone}, distinct={}",
        distinct.len()
    ));
    verdict(ok, parts.join("; "))
}

fn mean_field() -> Verdict {
    let n = 100_000usize;
    let g = gen_complete(n).unwrap();
    let mut ok = true;
    let mut parts = Vec::new();
    for (qi, q) in [0.1, 0.3, 0.4].into_iter().enumerate() {
        let q_next = 3.0 * q * q - 2.0 * q * q * q;
        let tol = 5.0 * (q_next * (1.0 - q_next) / n as f64).sqrt();
        let mut hits = 0;
        for trial in 0..100u64 {
            let mut rng = stream_rng(0x3F + qi as u64, trial);
            let cfg = OpinionConfig::with_blue_count(n, (q * n as f64).round() as usize, &mut rng)
                .unwrap();
            let next = step_best_of_k(&g, &cfg, BestOfK::three(), &mut rng).unwrap();
            hits += ((next.blue_fraction() - q_next).abs() <= tol) as u32;
        }
        ok &= hits >= 95;
        parts.push(format!("q={q}: {hits}/100 within {tol:.5} of {q_next:.4}"));
    }
    verdict(ok, parts.join("; "))
}

fn run_cli(args: &[&str], workers: &str) -> (i32, Vec<u8>) {
    let out = Command::new(env!("CARGO_BIN_EXE_votedag"))
        .arg("--workers")
        .arg(workers)
        .args(args)
        .output()
        .expect("spawn votedag");
    (out.status.code().unwrap_or(-1), out.stdout)
}

fn determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let edges = dir.path().join("ring.txt");
    std::fs::write(
        &edges,
        "# ring with chords\n0 1\n1 2\n2 3\n3 4\n4 5\n5 0\n0 3\n1 4\n2 5\n",
    )
    .unwrap();
    let edges = edges.to_str().unwrap().to_string();
    let commands: Vec<(&str, Vec<String>)> = vec![
        ("simulate-csv", "simulate --graph regular --n 300 --d 5 --delta 0.1 --k 3 --trials 40 --max-steps 200 --seed 7 --format csv"),
        ("simulate-json", "simulate --graph gnp --n 200 --p 0.05 --d 2 --delta 0.05 --k 2 --tie random --trials 30 --max-steps 300 --seed 8 --format json"),
        ("simulate-file", &*format!("simulate --graph file --path {edges} --delta 0.2 --k 1 --trials 25 --max-steps 100 --seed 9")),
        ("dual", "dual --graph complete --n 30 --root 3 --height 4 --delta 0.1 --trials 2000 --seed 10"),
        ("duality-check", "duality-check --graph cycle --n 5 --root 0 --height 2 --delta 0.1 --trials 5000 --seed 11"),
        ("sprinkle-demo", "sprinkle-demo --graph complete --n 5 --root 0 --height 4 --cut 3 --seed 12 --instances 500"),
        ("reduce-check", "reduce-check --graph complete --n 6 --root 0 --height 2,3 --trials 500 --seed 13"),
        ("recursion-ideal", "recursion ideal --delta 0.1 --steps 12"),
        ("recursion-sprinkled", "recursion sprinkled --delta 0.1 --d 1000000 --steps 8"),
        ("recursion-delta", "recursion delta --delta 0.01 --d 1000000 --steps 20"),
        ("recursion-plan", "recursion plan --delta 0.1 --d 1000000"),
    ]
    .into_iter()
    .map(|(name, cmd)| (name, cmd.split_whitespace().map(str::to_string).collect()))
    .collect();

    let mut ok = true;
    let mut bad = Vec::new();
    let mut files = 0;
    for (name, args) in &commands {
        let mut outputs = Vec::new();
        for (rep, workers) in ["1", "4", "1", "4"].into_iter().enumerate() {
            let out = dir.path().join(format!("{name}-{rep}.out"));
            let mut full = args.clone();
            full.push("--out".into());
            full.push(out.to_str().unwrap().into());
            if *name == "sprinkle-demo" {
                full.push("--dump".into());
                full.push(
                    dir.path()
                        .join(format!("{name}-{rep}.dump"))
                        .to_str()
                        .unwrap()
                        .into(),
                );
            }
            let full: Vec<&str> = full.iter().map(String::as_str).collect();
            let (code, _) = run_cli(&full, workers);
            let mut bytes = read(&out);
            if *name == "sprinkle-demo" {
                bytes.extend(read(&dir.path().join(format!("{name}-{rep}.dump"))));
            }
            outputs.push((code, bytes));
        }
        files += 1;
        let code = outputs[0].0;
        let same = outputs.iter().all(|o| *o == outputs[0]);
        if !same || code == 1 || code == 2 || outputs[0].1.is_empty() {
            ok = false;
            bad.push(format!("{name} (exit {code}, identical={same})"));
        }
    }
    for h in ["2", "3"] {
        let runs: Vec<_> = ["1", "4"]
            .into_iter()
            .map(|w| run_cli(&["verify", "lemma2", "--height", h], w))
            .collect();
        files += 1;
        if runs[0] != runs[1] || runs[0].0 != 0 {
            ok = false;
            bad.push(format!("verify lemma2 --height {h}"));
        }
    }
    verdict(
        ok,
        if bad.is_empty() {
            format!("{files} commands byte-identical across 4 runs with 1 and 4 workers")
        } else {
            format!("differences or errors: {}", bad.join(", "))
        },
    )
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_default()
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("1", "recursion kernel exactness", 1, recursion_kernel),
        ("2", "forward/dual duality", 120, duality),
        (
            "3",
            "sprinkling majorisation and independence",
            60,
            sprinkling,
        ),
        (
            "4",
            "fewer than 2^h blue leaves give a red root",
            60,
            blue_leaf_threshold,
        ),
        ("5", "ternary-tree reduction certificate", 120, reduction),
        ("6", "per-level collision bound m^2/d", 60, collision_bound),
        (
            "7",
            "consensus-time trend on complete graphs",
            600,
            consensus_trend,
        ),
        ("8", "mean-field one-step accuracy", 120, mean_field),
        ("9", "CLI determinism across worker counts", 60, determinism),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (id, name, limit, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| f == id) {
            continue;
        }
        let start = Instant::now();
        let v = run();
        let elapsed = start.elapsed();
        let in_time = elapsed <= Duration::from_secs(limit);
        let pass = v.pass && in_time;
        failed += !pass as u32;
        println!(
            "{} criterion {id}: {name} ({:.2}s / {limit}s{}) {}",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            if in_time { "" } else { ", over time limit" },
            v.detail
        );
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
