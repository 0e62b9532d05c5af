//! The forward synchronous Best-of-k process.
//!
//! Each round every vertex draws `k` neighbours uniformly with replacement
//! and adopts the majority colour among them, all vertices reading the
//! previous configuration. For `k = 2` a split sample is resolved by the
//! [`TieRule`].
//!
//! Randomness is consumed in vertex order `0..n`, `k` neighbour draws per
//! vertex followed by one tie draw when `k = 2` under
//! [`TieRule::RandomPick`]. The draw count never depends on colours, so two
//! configurations stepped with clones of one generator see identical samples.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::graph::Graph;
use crate::rng::{derive_seed, stream_rng};
use crate::{Colour, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieRule {
    /// The vertex keeps its current colour.
    #[default]
    KeepOwn,
    /// The vertex adopts one of its two samples chosen by a fair coin.
    RandomPick,
}

/// Sample size and tie rule of a Best-of-k update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BestOfK {
    k: u8,
    tie: TieRule,
}

impl BestOfK {
    pub fn new(k: u8, tie: TieRule) -> Result<BestOfK> {
        if !(1..=3).contains(&k) {
            return Err(Error::param(format!("k must be 1, 2 or 3, got {k}")));
        }
        Ok(BestOfK { k, tie })
    }

    pub fn three() -> BestOfK {
        BestOfK {
            k: 3,
            tie: TieRule::KeepOwn,
        }
    }

    pub fn k(&self) -> u8 {
        self.k
    }

    pub fn tie_rule(&self) -> TieRule {
        self.tie
    }

    fn update<R: Rng + ?Sized>(
        &self,
        g: &Graph,
        v: usize,
        colours: &[Colour],
        rng: &mut R,
    ) -> Colour {
        let mut draw = || colours[g.sample_neighbor(v, rng)];
        match self.k {
            1 => draw(),
            2 => {
                let (a, b) = (draw(), draw());
                match self.tie {
                    TieRule::KeepOwn if a != b => colours[v],
                    TieRule::KeepOwn => a,
                    TieRule::RandomPick => {
                        if rng.gen::<bool>() {
                            a
                        } else {
                            b
                        }
                    }
                }
            }
            _ => {
                let (a, b, c) = (draw(), draw(), draw());
                Colour::majority3(a, b, c)
            }
        }
    }
}

/// Colours of all vertices at time `step`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpinionConfig {
    colours: Vec<Colour>,
    step: u64,
    blue: usize,
}

impl OpinionConfig {
    pub fn new(colours: Vec<Colour>) -> OpinionConfig {
        let blue = colours.iter().filter(|c| c.is_blue()).count();
        OpinionConfig {
            colours,
            step: 0,
            blue,
        }
    }

    pub fn monochrome(n: usize, colour: Colour) -> OpinionConfig {
        OpinionConfig::new(vec![colour; n])
    }

    /// Exactly `blue` blue vertices placed uniformly at random.
    pub fn with_blue_count<R: Rng + ?Sized>(
        n: usize,
        blue: usize,
        rng: &mut R,
    ) -> Result<OpinionConfig> {
        if blue > n {
            return Err(Error::param(format!("blue count {blue} exceeds n={n}")));
        }
        let mut colours = vec![Colour::Red; n];
        for v in rand::seq::index::sample(rng, n, blue) {
            colours[v] = Colour::Blue;
        }
        Ok(OpinionConfig::new(colours))
    }

    pub fn colours(&self) -> &[Colour] {
        &self.colours
    }

    pub fn colour(&self, v: usize) -> Colour {
        self.colours[v]
    }

    pub fn len(&self) -> usize {
        self.colours.len()
    }

    pub fn is_empty(&self) -> bool {
        self.colours.is_empty()
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn blue_count(&self) -> usize {
        self.blue
    }

    pub fn blue_fraction(&self) -> f64 {
        self.blue as f64 / self.colours.len() as f64
    }

    /// `Some(colour)` when every vertex holds `colour`.
    pub fn consensus(&self) -> Option<Colour> {
        if self.blue == self.colours.len() {
            Some(Colour::Blue)
        } else if self.blue == 0 {
            Some(Colour::Red)
        } else {
            None
        }
    }

    pub fn flipped(&self) -> OpinionConfig {
        OpinionConfig {
            colours: self.colours.iter().map(|c| c.flip()).collect(),
            step: self.step,
            blue: self.colours.len() - self.blue,
        }
    }

    /// Entrywise `self <= other` under `Red < Blue`.
    pub fn dominated_by(&self, other: &OpinionConfig) -> bool {
        self.colours.len() == other.colours.len()
            && self.colours.iter().zip(&other.colours).all(|(a, b)| a <= b)
    }
}

/// Each vertex independently blue with probability `1/2 - delta`.
pub fn init_random<R: Rng + ?Sized>(n: usize, delta: f64, rng: &mut R) -> Result<OpinionConfig> {
    check_delta(delta)?;
    let p_blue = 0.5 - delta;
    let colours = (0..n)
        .map(|_| {
            if rng.gen_bool(p_blue) {
                Colour::Blue
            } else {
                Colour::Red
            }
        })
        .collect();
    Ok(OpinionConfig::new(colours))
}

pub(crate) fn check_delta(delta: f64) -> Result<()> {
    if !(0.0..=0.5).contains(&delta) {
        return Err(Error::param(format!(
            "delta must lie in [0, 1/2], got {delta}"
        )));
    }
    Ok(())
}

fn check_len(g: &Graph, cfg: &OpinionConfig) -> Result<()> {
    if cfg.len() != g.n() {
        return Err(Error::param(format!(
            "configuration has {} entries but graph has {} vertices",
            cfg.len(),
            g.n()
        )));
    }
    Ok(())
}

/// One synchronous round drawing from a single generator in vertex order.
pub fn step_best_of_k<R: Rng + ?Sized>(
    g: &Graph,
    cfg: &OpinionConfig,
    rule: BestOfK,
    rng: &mut R,
) -> Result<OpinionConfig> {
    check_len(g, cfg)?;
    let colours: Vec<Colour> = (0..g.n())
        .map(|v| rule.update(g, v, &cfg.colours, rng))
        .collect();
    let mut next = OpinionConfig::new(colours);
    next.step = cfg.step + 1;
    Ok(next)
}

/// One synchronous round where vertex `v` draws from its own stream keyed
/// by `(seed, step)`. The result is the same whether or not `parallel` is
/// set and whatever the size of the rayon pool.
pub fn step_best_of_k_keyed(
    g: &Graph,
    cfg: &OpinionConfig,
    rule: BestOfK,
    seed: u64,
    parallel: bool,
) -> Result<OpinionConfig> {
    check_len(g, cfg)?;
    let key = derive_seed(seed, cfg.step);
    let update = |v: usize| rule.update(g, v, &cfg.colours, &mut stream_rng(key, v as u64));
    let colours: Vec<Colour> = if parallel {
        (0..g.n()).into_par_iter().map(update).collect()
    } else {
        (0..g.n()).map(update).collect()
    };
    let mut next = OpinionConfig::new(colours);
    next.step = cfg.step + 1;
    Ok(next)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    ConsensusRed,
    ConsensusBlue,
    Timeout,
}

impl Outcome {
    pub fn label(&self) -> &'static str {
        match self {
            Outcome::ConsensusRed => "red",
            Outcome::ConsensusBlue => "blue",
            Outcome::Timeout => "timeout",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunResult {
    pub outcome: Outcome,
    pub steps_taken: u64,
    pub n: usize,
    /// Blue vertex count at every step, starting with `t = 0`.
    pub blue_counts: Vec<usize>,
}

impl RunResult {
    pub fn blue_fraction_trajectory(&self) -> Vec<f64> {
        self.blue_counts
            .iter()
            .map(|&b| b as f64 / self.n as f64)
            .collect()
    }

    /// CSV with header `step,blue_count,blue_fraction`.
    pub fn write_trajectory_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "step,blue_count,blue_fraction")?;
        for (t, &b) in self.blue_counts.iter().enumerate() {
            writeln!(out, "{t},{b},{}", b as f64 / self.n as f64)?;
        }
        Ok(())
    }
}

/// Steps until the configuration is monochromatic or `max_steps` rounds
/// have run.
pub fn run_until_consensus<R: Rng + ?Sized>(
    g: &Graph,
    cfg: OpinionConfig,
    rule: BestOfK,
    max_steps: u64,
    rng: &mut R,
) -> Result<RunResult> {
    check_len(g, &cfg)?;
    let n = cfg.len();
    let mut cfg = cfg;
    let mut blue_counts = vec![cfg.blue_count()];
    let mut steps = 0;
    let outcome = loop {
        match cfg.consensus() {
            Some(Colour::Red) => break Outcome::ConsensusRed,
            Some(Colour::Blue) => break Outcome::ConsensusBlue,
            None if steps >= max_steps => break Outcome::Timeout,
            None => {}
        }
        cfg = step_best_of_k(g, &cfg, rule, rng)?;
        steps += 1;
        blue_counts.push(cfg.blue_count());
    };
    Ok(RunResult {
        outcome,
        steps_taken: steps,
        n,
        blue_counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{gen_complete, gen_cycle, gen_random_regular};
    use crate::rng::rng_from_seed;
    use proptest::prelude::*;

    #[test]
    fn init_random_extremes_and_concentration() {
        let mut rng = rng_from_seed(1);
        let cfg = init_random(1000, 0.5, &mut rng).unwrap();
        assert_eq!(cfg.consensus(), Some(Colour::Red));
        assert_eq!(cfg.step(), 0);

        let n = 100_000;
        for (delta, q) in [(0.0, 0.5), (0.1, 0.4)] {
            let cfg = init_random(n, delta, &mut rng).unwrap();
            let tol = 5.0 * (q * (1.0 - q) / n as f64).sqrt();
            assert!((cfg.blue_fraction() - q).abs() <= tol, "delta={delta}");
        }
        assert!(init_random(10, 0.6, &mut rng).is_err());
        assert!(init_random(10, -0.1, &mut rng).is_err());
    }

    #[test]
    fn rejects_bad_k_and_length() {
        assert!(BestOfK::new(0, TieRule::KeepOwn).is_err());
        assert!(BestOfK::new(4, TieRule::KeepOwn).is_err());
        let g = gen_complete(5).unwrap();
        let cfg = OpinionConfig::monochrome(4, Colour::Red);
        assert!(matches!(
            step_best_of_k(&g, &cfg, BestOfK::three(), &mut rng_from_seed(0)),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn monochrome_is_absorbing() {
        let g = gen_random_regular(30, 3, 2).unwrap();
        let mut rng = rng_from_seed(3);
        for k in 1..=3 {
            for tie in [TieRule::KeepOwn, TieRule::RandomPick] {
                let rule = BestOfK::new(k, tie).unwrap();
                for colour in [Colour::Red, Colour::Blue] {
                    let cfg = OpinionConfig::monochrome(30, colour);
                    let next = step_best_of_k(&g, &cfg, rule, &mut rng).unwrap();
                    assert_eq!(next.consensus(), Some(colour));
                    assert_eq!(next.step(), 1);
                }
            }
        }
    }

    #[test]
    fn keep_own_resolves_split_sample() {
        // Vertex 1 on the path 0-1-2 with 0 blue and 2 red: a split sample
        // must leave it red under KeepOwn.
        let g = Graph::from_adjacency(vec![vec![1], vec![0, 2], vec![1]]).unwrap();
        let cfg = OpinionConfig::new(vec![Colour::Blue, Colour::Red, Colour::Red]);
        let rule = BestOfK::new(2, TieRule::KeepOwn).unwrap();
        let mut rng = rng_from_seed(9);
        let mut blue = 0;
        for _ in 0..2000 {
            if step_best_of_k(&g, &cfg, rule, &mut rng)
                .unwrap()
                .colour(1)
                .is_blue()
            {
                blue += 1;
            }
        }
        // Only a (B,B) sample turns it blue: probability 1/4.
        let p = blue as f64 / 2000.0;
        assert!(
            (p - 0.25).abs() < 5.0 * (0.25f64 * 0.75 / 2000.0).sqrt(),
            "{p}"
        );
    }

    #[test]
    fn best_of_three_mean_field_step() {
        let n = 100_000;
        let g = gen_complete(n).unwrap();
        let mut rng = rng_from_seed(21);
        let cfg = OpinionConfig::with_blue_count(n, 40_000, &mut rng).unwrap();
        let next = step_best_of_k(&g, &cfg, BestOfK::three(), &mut rng).unwrap();
        let q = 3.0 * 0.16 - 2.0 * 0.064;
        assert!((q - 0.352f64).abs() < 1e-12);
        let tol = 5.0 * (q * (1.0 - q) / n as f64).sqrt();
        assert!(
            (next.blue_fraction() - q).abs() <= tol,
            "{}",
            next.blue_fraction()
        );
    }

    #[test]
    fn one_step_matches_cubic_on_grid() {
        let n = 100_000;
        let g = gen_complete(n).unwrap();
        let mut rng = rng_from_seed(77);
        for i in 1..=9 {
            let q = i as f64 / 10.0;
            let cfg = OpinionConfig::with_blue_count(n, (q * n as f64).round() as usize, &mut rng)
                .unwrap();
            let next = step_best_of_k(&g, &cfg, BestOfK::three(), &mut rng).unwrap();
            let qn = 3.0 * q * q - 2.0 * q * q * q;
            let tol = 5.0 * (qn * (1.0 - qn) / n as f64).sqrt();
            assert!((next.blue_fraction() - qn).abs() <= tol, "q={q}");
        }
    }

    #[test]
    fn run_trivial_starts() {
        let g = gen_complete(10).unwrap();
        let mut rng = rng_from_seed(0);
        let r = run_until_consensus(
            &g,
            OpinionConfig::monochrome(10, Colour::Red),
            BestOfK::three(),
            5,
            &mut rng,
        )
        .unwrap();
        assert_eq!(
            (r.outcome, r.steps_taken, r.blue_counts.len()),
            (Outcome::ConsensusRed, 0, 1)
        );
        let r = run_until_consensus(
            &g,
            OpinionConfig::monochrome(10, Colour::Blue),
            BestOfK::three(),
            5,
            &mut rng,
        )
        .unwrap();
        assert_eq!((r.outcome, r.steps_taken), (Outcome::ConsensusBlue, 0));
    }

    #[test]
    fn run_timeout_records_trajectory() {
        let g = gen_cycle(40).unwrap();
        let cfg = OpinionConfig::new(
            (0..40)
                .map(|v| {
                    if v % 2 == 0 {
                        Colour::Blue
                    } else {
                        Colour::Red
                    }
                })
                .collect(),
        );
        let r = run_until_consensus(&g, cfg, BestOfK::three(), 0, &mut rng_from_seed(1)).unwrap();
        assert_eq!((r.outcome, r.steps_taken), (Outcome::Timeout, 0));
        assert_eq!(r.blue_fraction_trajectory(), vec![0.5]);
        let mut buf = Vec::new();
        r.write_trajectory_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "step,blue_count,blue_fraction\n0,20,0.5\n"
        );
    }

    #[test]
    fn complete_graph_reaches_red_consensus_quickly() {
        let n = 10_000;
        let g = gen_complete(n).unwrap();
        let quick = (0..100u64)
            .filter(|&s| {
                let mut rng = rng_from_seed(s);
                let cfg = init_random(n, 0.1, &mut rng).unwrap();
                let r = run_until_consensus(&g, cfg, BestOfK::three(), 50, &mut rng).unwrap();
                assert_eq!(r.blue_counts.len() as u64, r.steps_taken + 1);
                r.outcome == Outcome::ConsensusRed && r.steps_taken <= 15
            })
            .count();
        assert!(quick >= 95, "{quick}");
    }

    #[test]
    fn keyed_step_is_schedule_independent() {
        let g = gen_random_regular(2000, 6, 4).unwrap();
        let cfg = init_random(2000, 0.05, &mut rng_from_seed(4)).unwrap();
        for k in 1..=3 {
            let rule = BestOfK::new(k, TieRule::RandomPick).unwrap();
            let seq = step_best_of_k_keyed(&g, &cfg, rule, 99, false).unwrap();
            let par = step_best_of_k_keyed(&g, &cfg, rule, 99, true).unwrap();
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(3)
                .build()
                .unwrap();
            let par3 = pool.install(|| step_best_of_k_keyed(&g, &cfg, rule, 99, true).unwrap());
            assert_eq!(seq, par);
            assert_eq!(seq, par3);
        }
    }

    fn arb_rule() -> impl Strategy<Value = BestOfK> {
        (
            1u8..=3,
            prop_oneof![Just(TieRule::KeepOwn), Just(TieRule::RandomPick)],
        )
            .prop_map(|(k, t)| BestOfK::new(k, t).unwrap())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn coupled_step_is_monotone(
            bits in prop::collection::vec((any::<bool>(), any::<bool>()), 24),
            rule in arb_rule(),
            seed: u64,
        ) {
            let g = gen_random_regular(24, 3, seed ^ 1).unwrap();
            let lo: Vec<Colour> = bits.iter().map(|&(a, b)| if a && b { Colour::Blue } else { Colour::Red }).collect();
            let hi: Vec<Colour> = bits.iter().map(|&(a, _)| if a { Colour::Blue } else { Colour::Red }).collect();
            let (a, b) = (OpinionConfig::new(lo), OpinionConfig::new(hi));
            prop_assert!(a.dominated_by(&b));
            let rng = rng_from_seed(seed);
            let na = step_best_of_k(&g, &a, rule, &mut rng.clone()).unwrap();
            let nb = step_best_of_k(&g, &b, rule, &mut rng.clone()).unwrap();
            prop_assert!(na.dominated_by(&nb));
        }

        #[test]
        fn colour_exchange_symmetry(
            bits in prop::collection::vec(any::<bool>(), 20),
            rule in arb_rule(),
            seed: u64,
        ) {
            let g = gen_random_regular(20, 4, seed).unwrap();
            let cfg = OpinionConfig::new(bits.iter().map(|&b| if b { Colour::Blue } else { Colour::Red }).collect());
            let rng = rng_from_seed(seed);
            let mut r1 = rng.clone();
            let mut r2 = rng;
            let (mut x, mut y) = (cfg.clone(), cfg.flipped());
            for _ in 0..5 {
                x = step_best_of_k(&g, &x, rule, &mut r1).unwrap();
                y = step_best_of_k(&g, &y, rule, &mut r2).unwrap();
                prop_assert_eq!(&x.flipped(), &y);
            }
        }
    }
}
