//! Selection of classical branches during a protocol round.
//!
//! Round logic is written once against [`BranchChooser`]. A
//! [`SamplingChooser`] draws each branch from a per-round random stream; the
//! exact enumerator in `analysis` replays the same logic along every path.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::fockstate::BranchSet;

pub trait BranchChooser {
    /// Picks an index into `weights`. Weights are non-negative and sum to one;
    /// zero-weight entries are never picked.
    fn choose(&mut self, weights: &[f64]) -> usize;

    /// `true` with probability `p`.
    fn coin(&mut self, p: f64) -> bool {
        self.choose(&[p, 1.0 - p]) == 0
    }

    /// Consumes a measurement and returns the selected branch.
    fn pick<O: Copy + PartialEq>(&mut self, set: BranchSet<O>) -> (O, crate::fockstate::StateVector) {
        let idx = self.choose(&set.probabilities());
        let branch = set.into_branches().swap_remove(idx);
        (branch.outcome, branch.state)
    }
}

/// Random stream for round `index` of a run seeded with `seed`.
///
/// Streams depend only on `(seed, index)`, so rounds can run in any order.
pub fn round_stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Draws branches from a random number generator.
pub struct SamplingChooser<R> {
    rng: R,
}

impl<R: Rng> SamplingChooser<R> {
    pub fn new(rng: R) -> Self {
        Self { rng }
    }
}

impl SamplingChooser<ChaCha8Rng> {
    pub fn for_round(seed: u64, index: u64) -> Self {
        Self::new(round_stream(seed, index))
    }
}

impl<R: Rng> BranchChooser for SamplingChooser<R> {
    fn choose(&mut self, weights: &[f64]) -> usize {
        let live = weights.iter().filter(|w| **w > 0.0).count();
        let last_live = weights
            .iter()
            .rposition(|w| *w > 0.0)
            .expect("at least one branch has positive weight");
        // degenerate choices do not consume randomness
        if live == 1 {
            return last_live;
        }
        let u: f64 = self.rng.random();
        let mut acc = 0.0;
        for (i, w) in weights.iter().enumerate() {
            if *w > 0.0 {
                acc += w;
                if u < acc {
                    return i;
                }
            }
        }
        last_live
    }
}

/// Replays a fixed prefix of choices, then takes the first live branch,
/// recording the path and its probability.
#[derive(Debug, Default)]
pub(crate) struct ReplayChooser {
    path: Vec<usize>,
    weights: Vec<Vec<f64>>,
    pos: usize,
    probability: f64,
}

impl ReplayChooser {
    pub(crate) fn start() -> Self {
        Self {
            probability: 1.0,
            ..Self::default()
        }
    }

    pub(crate) fn probability(&self) -> f64 {
        self.probability
    }

    /// Rewinds to the next unexplored path; `None` once every path was visited.
    pub(crate) fn advance(mut self) -> Option<Self> {
        self.path.truncate(self.pos);
        self.weights.truncate(self.pos);
        while let Some(last) = self.path.pop() {
            let w = self.weights.pop().expect("weights track the path");
            if let Some(next) = (last + 1..w.len()).find(|i| w[*i] > 0.0) {
                self.path.push(next);
                self.weights.push(w);
                self.pos = 0;
                self.probability = 1.0;
                return Some(self);
            }
        }
        None
    }
}

impl BranchChooser for ReplayChooser {
    fn choose(&mut self, weights: &[f64]) -> usize {
        let idx = if self.pos < self.path.len() {
            debug_assert_eq!(self.weights[self.pos].len(), weights.len(), "replay diverged");
            self.path[self.pos]
        } else {
            let first = weights
                .iter()
                .position(|w| *w > 0.0)
                .expect("at least one branch has positive weight");
            self.path.push(first);
            self.weights.push(weights.to_vec());
            first
        };
        self.weights[self.pos] = weights.to_vec();
        self.pos += 1;
        self.probability *= weights[idx];
        idx
    }
}
