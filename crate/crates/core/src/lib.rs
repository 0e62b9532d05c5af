//! Synchronous Best-of-k voting dynamics on graphs and the tooling around
//! its time-reversed dual: random voting-DAGs, the sprinkling coupling,
//! ternary-tree reduction and the analytic probability recursions.
//!
//! Colours are encoded as `Blue = 1`, `Red = 0`, so "more blue" is the
//! entrywise order used by every majorisation check in this crate.

pub mod dual_dag;
pub mod dynamics;
mod error;
pub mod graph;
pub mod harness;
pub mod recursion;
pub mod reduction;
pub mod rng;
pub mod sprinkling;
pub mod stats;

pub use error::{Error, Result};

use serde::{Deserialize, Serialize};

/// Opinion of a vertex. `Red < Blue`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum Colour {
    #[serde(rename = "R")]
    Red = 0,
    #[serde(rename = "B")]
    Blue = 1,
}

impl Colour {
    pub fn is_blue(self) -> bool {
        self == Colour::Blue
    }

    pub fn flip(self) -> Colour {
        match self {
            Colour::Red => Colour::Blue,
            Colour::Blue => Colour::Red,
        }
    }

    /// Majority of three colours, counting multiplicity.
    pub fn majority3(a: Colour, b: Colour, c: Colour) -> Colour {
        if (a as u8 + b as u8 + c as u8) >= 2 {
            Colour::Blue
        } else {
            Colour::Red
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Colour::Red => 'R',
            Colour::Blue => 'B',
        }
    }
}

impl std::fmt::Display for Colour {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.symbol())
    }
}
