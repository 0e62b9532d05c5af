//! Scalar recursions for the probability that a voting-DAG node is blue.
//!
//! * ideal: `b -> 3b^2 - 2b^3`, exact when the DAG is a ternary tree;
//! * sprinkled: the same plus the collision error terms, an upper bound for
//!   the sprinkled DAG;
//! * squared decay: the `4p^2` envelope of the sprinkled step, valid while
//!   `p > 12 eps`;
//! * delta: a lower bound on the imbalance `1/2 - p`.
//!
//! Along a DAG of height `T` the error term for the step entering level `t`
//! is `3^(T-t+1)/d`: it is largest next to the leaves and shrinks towards
//! the root.
//!
//! All values are `f64`. Anything below [`UNDERFLOW_FLOOR`] is clamped to
//! zero and the trajectory is flagged.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const UNDERFLOW_FLOOR: f64 = 1e-300;

/// Multiplier of `ln(1/delta)` in the cap on the imbalance phase:
/// `ceil(10 / ln(5/4)) + 1`.
pub const DELTA_PHASE_CONSTANT: u32 = 46;

/// `1 / (2 sqrt 3)`, where `x/2 - 2x^3` peaks.
pub fn imbalance_threshold() -> f64 {
    0.5 / 3f64.sqrt()
}

pub fn ideal_step(b: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&b) {
        return Err(Error::param(format!(
            "probability must lie in [0, 1], got {b}"
        )));
    }
    Ok(b * b * (3.0 - 2.0 * b))
}

/// Error term for the step entering level `t` of a height-`height` DAG:
/// `3^(height - t + 1) / d`.
pub fn epsilon(t: usize, height: usize, d: u64) -> Result<f64> {
    if t < 1 || t > height {
        return Err(Error::param(format!("level {t} outside 1..={height}")));
    }
    if d == 0 {
        return Err(Error::param("minimum degree must be positive"));
    }
    pow3_over(height - t + 1, d)
}

/// `3^exp / d`.
fn pow3_over(exp: usize, d: u64) -> Result<f64> {
    let e = i32::try_from(exp).map_err(|_| Error::Resource(format!("3^{exp} overflows")))?;
    let v = 3f64.powi(e);
    if !v.is_finite() {
        return Err(Error::Resource(format!("3^{exp} overflows f64")));
    }
    Ok(v / d as f64)
}

/// Upper bound after one sprinkled step, clamped to 1.
pub fn sprinkled_step(p: f64, eps: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::param(format!(
            "probability must lie in [0, 1], got {p}"
        )));
    }
    if eps.is_nan() || eps < 0.0 {
        return Err(Error::param(format!(
            "error term must be non-negative, got {eps}"
        )));
    }
    let ideal = p * p * (3.0 - 2.0 * p);
    Ok((ideal + 6.0 * p * eps + 3.0 * eps * eps + eps * eps * eps).min(1.0))
}

/// `4p^2`. Only an upper bound for the sprinkled step when
/// [`valid_window`] holds.
pub fn squared_decay_step(p: f64) -> f64 {
    4.0 * p * p
}

pub fn valid_window(p: f64, eps: f64) -> bool {
    p > 12.0 * eps
}

/// `4 (1/2 - 1/(2 sqrt 3))`: the base of the doubly exponential envelope
/// `p_t <= (4 p_0)^(2^t)` started at the end of the imbalance phase.
pub fn envelope_base() -> f64 {
    4.0 * (0.5 - imbalance_threshold())
}

/// Asserts the envelope base is at most 0.85.
pub fn assert_envelope_constant() {
    let base = envelope_base();
    assert!(base <= 0.85, "envelope base {base} exceeds 0.85");
}

/// Lower bound on the next imbalance: `delta + delta/2 - 2 delta^3 - 4 eps`.
pub fn delta_step(delta: f64, eps: f64) -> f64 {
    delta + (0.5 * delta - 2.0 * delta * delta * delta - 4.0 * eps)
}

/// Region where [`delta_step`] grows the imbalance by at least a factor 5/4.
pub fn growth_window(delta: f64, eps: f64) -> bool {
    delta >= 12.0 * eps && delta < imbalance_threshold()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SequenceKind {
    Ideal,
    SprinkledP,
    DeltaLower,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecursionParams {
    pub d: Option<u64>,
    pub height: usize,
    pub delta0: f64,
}

/// A trajectory `values[0..=height]`. `eps[t]` is the error term of the step
/// leaving level `t`, i.e. `3^(height - t)/d`; empty for the ideal sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecursionState {
    pub kind: SequenceKind,
    pub values: Vec<f64>,
    pub eps: Vec<f64>,
    pub params: RecursionParams,
    pub underflow: bool,
}

fn clamp_tiny(prev: f64, x: f64, flag: &mut bool) -> f64 {
    if prev != 0.0 && x.abs() < UNDERFLOW_FLOOR {
        *flag = true;
        0.0
    } else {
        x
    }
}

fn eps_schedule(d: u64, height: usize) -> Result<Vec<f64>> {
    if d == 0 {
        return Err(Error::param("minimum degree must be positive"));
    }
    (0..=height).map(|t| pow3_over(height - t, d)).collect()
}

/// `b_0 = 1/2 - delta`, iterated `steps` times.
pub fn ideal_trajectory(delta: f64, steps: usize) -> Result<RecursionState> {
    crate::dynamics::check_delta(delta)?;
    let mut underflow = false;
    let mut values = vec![0.5 - delta];
    for _ in 0..steps {
        let next = ideal_step(*values.last().unwrap())?;
        values.push(clamp_tiny(*values.last().unwrap(), next, &mut underflow));
    }
    Ok(RecursionState {
        kind: SequenceKind::Ideal,
        values,
        eps: Vec::new(),
        params: RecursionParams {
            d: None,
            height: steps,
            delta0: delta,
        },
        underflow,
    })
}

/// Sprinkled upper bounds along a height-`height` DAG with leaves blue with
/// probability `p0`.
pub fn sprinkled_trajectory(p0: f64, d: u64, height: usize) -> Result<RecursionState> {
    let eps = eps_schedule(d, height)?;
    let mut underflow = false;
    let mut values = vec![p0];
    for t in 1..=height {
        let next = sprinkled_step(values[t - 1], eps[t - 1])?;
        values.push(clamp_tiny(*values.last().unwrap(), next, &mut underflow));
    }
    Ok(RecursionState {
        kind: SequenceKind::SprinkledP,
        values,
        eps,
        params: RecursionParams {
            d: Some(d),
            height,
            delta0: 0.5 - p0,
        },
        underflow,
    })
}

/// Imbalance lower bounds along a height-`height` DAG, clamped to
/// `[-1/2, 1/2]`.
pub fn delta_trajectory(delta0: f64, d: u64, height: usize) -> Result<RecursionState> {
    crate::dynamics::check_delta(delta0)?;
    let eps = eps_schedule(d, height)?;
    let mut underflow = false;
    let mut values = vec![delta0];
    for t in 1..=height {
        let next = delta_step(values[t - 1], eps[t - 1]).clamp(-0.5, 0.5);
        values.push(clamp_tiny(*values.last().unwrap(), next, &mut underflow));
    }
    Ok(RecursionState {
        kind: SequenceKind::DeltaLower,
        values,
        eps,
        params: RecursionParams {
            d: Some(d),
            height,
            delta0,
        },
        underflow,
    })
}

impl RecursionState {
    /// `t,b_t`, `t,p_t,eps_t,valid` or `t,delta_t,eps_t,growth_ok`
    /// depending on the sequence kind.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        match self.kind {
            SequenceKind::Ideal => {
                writeln!(out, "t,b_t")?;
                for (t, b) in self.values.iter().enumerate() {
                    writeln!(out, "{t},{b}")?;
                }
            }
            SequenceKind::SprinkledP => {
                writeln!(out, "t,p_t,eps_t,valid")?;
                for (t, (p, e)) in self.values.iter().zip(&self.eps).enumerate() {
                    writeln!(out, "{t},{p},{e},{}", valid_window(*p, *e))?;
                }
            }
            SequenceKind::DeltaLower => {
                writeln!(out, "t,delta_t,eps_t,growth_ok")?;
                for (t, (x, e)) in self.values.iter().zip(&self.eps).enumerate() {
                    writeln!(out, "{t},{x},{e},{}", growth_window(*x, *e))?;
                }
            }
        }
        Ok(())
    }
}

/// Steps of the ideal recursion from `1/2 - delta` until `b_t < 1/n`.
/// `None` when `delta = 0`, where `1/2` is a fixed point.
pub fn ideal_horizon(n: u64, delta: f64) -> Result<Option<usize>> {
    crate::dynamics::check_delta(delta)?;
    if n == 0 {
        return Err(Error::param("n must be positive"));
    }
    let target = 1.0 / n as f64;
    let mut b = 0.5 - delta;
    for t in 0..10_000 {
        if b < target {
            return Ok(Some(t));
        }
        b = ideal_step(b)?;
    }
    Ok(None)
}

/// Three-phase schedule: grow the imbalance to `1/(2 sqrt 3)`, collapse the
/// blue probability quadratically to the collision floor, then take one last
/// sprinkled step. Each phase evaluates its error terms on a DAG made of its
/// own levels only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePlan {
    pub n: u64,
    pub d: u64,
    pub delta: f64,
    pub a: f64,
    /// Levels needed to grow the imbalance to the threshold.
    pub t3: usize,
    pub t3_cap: usize,
    pub t3_capped: bool,
    /// Levels of quadratic decay.
    pub t2: usize,
    pub t2_cap: usize,
    pub t2_capped: bool,
    /// `floor(a ln log2 d) + 1`.
    pub h1: usize,
    pub total: usize,
    pub delta_trajectory: Vec<f64>,
    pub p_trajectory: Vec<f64>,
    /// Squared-decay envelope `4 p^2` iterated from the same start.
    pub envelope_trajectory: Vec<f64>,
    /// Leaf probability handed to the last phase.
    pub final_p0: f64,
    pub final_eps: f64,
    /// Bound after the last sprinkled step.
    pub final_p1: f64,
    pub underflow: bool,
    /// Ideal recursion steps from `1/2 - delta` to below `1/n`.
    pub ideal_horizon: Option<usize>,
}

pub fn phase_plan(n: u64, d: u64, delta: f64, a: f64) -> Result<PhasePlan> {
    if d < 2 {
        return Err(Error::param(format!(
            "minimum degree must be at least 2, got {d}"
        )));
    }
    if !(delta > 0.0 && delta <= 0.5) {
        return Err(Error::param(format!(
            "delta must lie in (0, 1/2], got {delta}"
        )));
    }
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::param(format!("a must be positive, got {a}")));
    }
    if n < 2 {
        return Err(Error::param(format!("n must be at least 2, got {n}")));
    }
    let log2d = (d as f64).log2();
    let h1 = (a * log2d.ln()).floor().max(0.0) as usize + 1;
    let threshold = imbalance_threshold();

    let t3_cap = (DELTA_PHASE_CONSTANT as f64 * (1.0 / delta).ln())
        .ceil()
        .max(0.0) as usize;
    let mut t3 = None;
    let mut delta_traj = vec![delta];
    for c in 0..=t3_cap {
        let traj = delta_trajectory(delta.min(0.5), d, c)?;
        if *traj.values.last().unwrap() >= threshold {
            t3 = Some(c);
            delta_traj = traj.values;
            break;
        }
        if c == t3_cap {
            delta_traj = traj.values;
        }
    }

    let p_start = 0.5 - threshold;
    let t2_cap = (2.0 * log2d.log2()).floor().max(0.0) as usize;
    let mut t2 = None;
    let mut p_traj = vec![p_start];
    let mut underflow = false;
    for c in 0..=t2_cap {
        let traj = sprinkled_trajectory(p_start, d, c)?;
        underflow |= traj.underflow;
        let (p, e) = (*traj.values.last().unwrap(), *traj.eps.last().unwrap());
        if p <= 12.0 * e {
            t2 = Some(c);
            p_traj = traj.values;
            break;
        }
        if c == t2_cap {
            p_traj = traj.values;
        }
    }
    let mut envelope = vec![p_start];
    for _ in 1..p_traj.len() {
        envelope.push(squared_decay_step(*envelope.last().unwrap()));
    }

    let final_p0 = *p_traj.last().unwrap();
    let final_eps = pow3_over(h1, d)?;
    let final_p1 = sprinkled_step(final_p0, final_eps)?;
    let (t3_val, t2_val) = (t3.unwrap_or(t3_cap), t2.unwrap_or(t2_cap));
    Ok(PhasePlan {
        n,
        d,
        delta,
        a,
        t3: t3_val,
        t3_cap,
        t3_capped: t3.is_none(),
        t2: t2_val,
        t2_cap,
        t2_capped: t2.is_none(),
        h1,
        total: h1 + t2_val + t3_val,
        delta_trajectory: delta_traj,
        p_trajectory: p_traj,
        envelope_trajectory: envelope,
        final_p0,
        final_eps,
        final_p1,
        underflow,
        ideal_horizon: ideal_horizon(n, delta)?,
    })
}
