//! K-Medoids over a precomputed square dissimilarity matrix.
//!
//! The solver starts from the first `k` points, assigns every point to its
//! nearest medoid, and then walks (medoid, point) swap candidates in a seeded
//! order, pass after pass, until a whole pass accepts nothing.
//!
//! Two acceptance rules are available:
//!
//! * [`SwapMode::GlobalSwap`] (default) accepts a swap only when the weighted
//!   objective after global reassignment drops by more than `epsilon`. The
//!   objective is strictly decreasing, so the search always terminates, and a
//!   converged result is single-swap locally optimal.
//! * [`SwapMode::PaperLiteral`] only considers swapping a medoid for a member
//!   of its own cluster, screens the candidate by the cluster's own total
//!   distance, and then commits it if the global objective does not rise. A
//!   medoid set is never revisited, which rules out cycling between
//!   equal-objective configurations.
//!
//! Points that coincide (zero distance both ways and identical rows and
//! columns) are merged into their first occurrence with summed weight before
//! the search. Duplicating a point `w` times is therefore the same instance
//! as giving it weight `w`, and the initial medoids are the first `k`
//! *distinct* points.

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::{SquareMatrix, SquareView};
use crate::numeric::compensated_sum;
use crate::rng::{permutation, SplitMix64};

/// Candidate count × point count above which a batch is scored in parallel.
const PARALLEL_WORK: usize = 1 << 16;
const BATCH: usize = 64;

/// Largest number of subsets [`brute_force_solve`] will enumerate.
pub const BRUTE_FORCE_LIMIT: u64 = 1_000_000;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("k = {k} is out of range for {n} points")]
    KOutOfRange { k: usize, n: usize },
    #[error("expected {expected} weights, got {actual}")]
    WeightCount { expected: usize, actual: usize },
    #[error("weight {value} at index {index} is not a positive finite number")]
    Weight { index: usize, value: f64 },
    #[error("epsilon must be positive and finite")]
    Epsilon,
    #[error("no convergence within {passes} passes (best objective {})", .best.objective)]
    MaxPasses { passes: usize, best: Box<Clustering> },
    #[error("C({n}, {k}) subsets exceeds the brute-force limit")]
    TooLarge { n: usize, k: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwapMode {
    #[default]
    GlobalSwap,
    PaperLiteral,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveParams {
    pub k: usize,
    pub weights: Vec<f64>,
    pub mode: SwapMode,
    pub seed: u64,
    pub epsilon: f64,
    pub max_passes: Option<usize>,
}

impl SolveParams {
    pub fn new(k: usize, weights: Vec<f64>) -> Self {
        Self {
            k,
            weights,
            mode: SwapMode::GlobalSwap,
            seed: 0,
            epsilon: 1e-6,
            max_passes: None,
        }
    }

    /// Unit weights for `n` points.
    pub fn unweighted(k: usize, n: usize) -> Self {
        Self::new(k, vec![1.0; n])
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_mode(mut self, mode: SwapMode) -> Self {
        self.mode = mode;
        self
    }

    fn validate(&self, n: usize) -> Result<(), SolveError> {
        validate_k(self.k, n)?;
        validate_weights(&self.weights, n)?;
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(SolveError::Epsilon);
        }
        Ok(())
    }
}

fn validate_k(k: usize, n: usize) -> Result<(), SolveError> {
    if k < 1 || k > n {
        return Err(SolveError::KOutOfRange { k, n });
    }
    Ok(())
}

fn validate_weights(weights: &[f64], n: usize) -> Result<(), SolveError> {
    if weights.len() != n {
        return Err(SolveError::WeightCount {
            expected: n,
            actual: weights.len(),
        });
    }
    if let Some(index) = weights.iter().position(|w| !(*w > 0.0 && w.is_finite())) {
        return Err(SolveError::Weight {
            index,
            value: weights[index],
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clustering {
    /// Sorted, distinct point indices.
    pub medoids: Vec<usize>,
    /// Medoid point index for each point.
    pub assignment: Vec<usize>,
    /// Weighted sum of distances to the assigned medoid.
    pub objective: f64,
    pub passes: usize,
    pub swaps: usize,
}

impl Clustering {
    /// Point indices grouped by medoid, in medoid order.
    pub fn clusters(&self) -> Vec<Vec<usize>> {
        self.medoids
            .iter()
            .map(|&m| {
                (0..self.assignment.len())
                    .filter(|&i| self.assignment[i] == m)
                    .collect()
            })
            .collect()
    }
}

/// One accepted swap, reported in original point indices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwapEvent {
    pub pass: usize,
    pub out_index: usize,
    pub in_index: usize,
    pub objective: f64,
}

/// The first `k` indices.
pub fn initialize(n: usize, k: usize) -> Result<Vec<usize>, SolveError> {
    validate_k(k, n)?;
    Ok((0..k).collect())
}

/// Nearest-medoid assignment (ties to the lowest medoid index; a medoid
/// always serves itself) and the weighted objective.
pub fn assign(m: SquareView<'_>, medoids: &[usize], weights: &[f64]) -> (Vec<usize>, f64) {
    let mut sorted = medoids.to_vec();
    sorted.sort_unstable();
    let is_medoid = medoid_mask(m.len(), &sorted);
    let assignment: Vec<usize> = (0..m.len())
        .map(|i| {
            if is_medoid[i] {
                return i;
            }
            let row = m.row(i);
            let mut best = sorted[0];
            for &md in &sorted[1..] {
                if row[md] < row[best] {
                    best = md;
                }
            }
            best
        })
        .collect();
    let obj = objective(m, &sorted, &assignment, weights);
    (assignment, obj)
}

/// Recomputes `Σ w_i · d(i, assignment[i])`.
pub fn objective(m: SquareView<'_>, _medoids: &[usize], assignment: &[usize], weights: &[f64]) -> f64 {
    compensated_sum(
        assignment
            .iter()
            .enumerate()
            .map(|(i, &a)| weights[i] * m.get(i, a)),
    )
}

fn medoid_mask(n: usize, medoids: &[usize]) -> Vec<bool> {
    let mut mask = vec![false; n];
    for &md in medoids {
        mask[md] = true;
    }
    mask
}

/// Coincident points merged into their first occurrence.
struct Collapsed {
    /// Original index of each representative, ascending.
    reps: Vec<usize>,
    weights: Vec<f64>,
    matrix: SquareMatrix,
}

fn coincident(m: SquareView<'_>, a: usize, b: usize) -> bool {
    if m.get(a, b) != 0.0 || m.get(b, a) != 0.0 || m.row(a) != m.row(b) {
        return false;
    }
    (0..m.len()).all(|r| m.get(r, a) == m.get(r, b))
}

fn collapse(m: SquareView<'_>, weights: &[f64]) -> Option<Collapsed> {
    let mut reps: Vec<usize> = Vec::new();
    let mut rep_weights: Vec<Vec<f64>> = Vec::new();
    for j in 0..m.len() {
        match reps.iter().position(|&r| coincident(m, r, j)) {
            Some(pos) => rep_weights[pos].push(weights[j]),
            None => {
                reps.push(j);
                rep_weights.push(vec![weights[j]]);
            }
        }
    }
    if reps.len() == m.len() {
        return None;
    }
    Some(Collapsed {
        matrix: m.restrict(&reps),
        weights: rep_weights.into_iter().map(compensated_sum).collect(),
        reps,
    })
}

/// Search state over a (possibly collapsed) instance.
struct State<'a> {
    m: SquareView<'a>,
    weights: &'a [f64],
    /// Medoid point per slot.
    slots: Vec<usize>,
    is_medoid: Vec<bool>,
    nearest_slot: Vec<usize>,
    nearest: Vec<f64>,
    second: Vec<f64>,
    objective: f64,
}

impl<'a> State<'a> {
    fn new(m: SquareView<'a>, weights: &'a [f64], slots: Vec<usize>) -> Self {
        let n = m.len();
        let mut s = Self {
            m,
            weights,
            is_medoid: vec![false; n],
            slots,
            nearest_slot: vec![0; n],
            nearest: vec![0.0; n],
            second: vec![f64::INFINITY; n],
            objective: 0.0,
        };
        s.refresh();
        s
    }

    fn refresh(&mut self) {
        self.is_medoid.iter_mut().for_each(|b| *b = false);
        for &md in &self.slots {
            self.is_medoid[md] = true;
        }
        for i in 0..self.m.len() {
            let row = self.m.row(i);
            let (mut best, mut best_d, mut second_d) = (0, f64::INFINITY, f64::INFINITY);
            for (s, &md) in self.slots.iter().enumerate() {
                let d = row[md];
                if d < best_d {
                    second_d = best_d;
                    best = s;
                    best_d = d;
                } else if d < second_d {
                    second_d = d;
                }
            }
            self.nearest_slot[i] = best;
            self.nearest[i] = best_d;
            self.second[i] = second_d;
        }
        self.objective =
            compensated_sum((0..self.m.len()).map(|i| self.weights[i] * self.nearest[i]));
    }

    /// Objective after replacing the medoid in `slot` with point `c` and reassigning globally.
    fn swap_objective(&self, slot: usize, c: usize) -> f64 {
        compensated_sum((0..self.m.len()).map(|i| {
            let dc = self.m.get(i, c);
            let kept = if self.nearest_slot[i] == slot {
                self.second[i]
            } else {
                self.nearest[i]
            };
            self.weights[i] * kept.min(dc)
        }))
    }

    /// Total distance of `slot`'s current cluster to point `center`.
    fn cluster_cost(&self, slot: usize, center: usize) -> f64 {
        compensated_sum(
            (0..self.m.len())
                .filter(|&i| self.nearest_slot[i] == slot)
                .map(|i| self.weights[i] * self.m.get(i, center)),
        )
    }

    fn apply(&mut self, slot: usize, c: usize) {
        self.slots[slot] = c;
        self.refresh();
    }

    fn sorted_medoids(&self) -> Vec<usize> {
        let mut v = self.slots.clone();
        v.sort_unstable();
        v
    }
}

/// Runs the swap search on an instance without coincident points.
fn search(
    m: SquareView<'_>,
    weights: &[f64],
    params: &SolveParams,
    trace: &mut dyn FnMut(SwapEvent),
) -> (Vec<usize>, usize, usize, bool) {
    let n = m.len();
    let k = params.k;
    let mut state = State::new(m, weights, (0..k).collect());
    let mut rng = SplitMix64::new(params.seed);
    let mut visited: HashSet<Vec<usize>> = HashSet::new();
    if params.mode == SwapMode::PaperLiteral {
        visited.insert(state.sorted_medoids());
    }
    let parallel = n * BATCH >= PARALLEL_WORK;
    let (mut passes, mut swaps) = (0, 0);

    loop {
        if params.max_passes.is_some_and(|cap| passes >= cap) {
            return (state.slots, passes, swaps, false);
        }
        passes += 1;
        let order = permutation(k * n, &mut rng);
        let mut accepted = false;
        match params.mode {
            SwapMode::GlobalSwap => {
                let mut pos = 0;
                while pos < order.len() {
                    let end = (pos + BATCH).min(order.len());
                    let batch: Vec<(usize, usize)> = order[pos..end]
                        .iter()
                        .map(|&p| (p / n, p % n))
                        .collect();
                    let threshold = state.objective - params.epsilon;
                    let score = |&(slot, c): &(usize, usize)| {
                        if state.is_medoid[c] {
                            f64::INFINITY
                        } else {
                            state.swap_objective(slot, c)
                        }
                    };
                    let scores: Vec<f64> = if parallel {
                        batch.par_iter().map(score).collect()
                    } else {
                        batch.iter().map(score).collect()
                    };
                    match scores.iter().position(|&s| s < threshold) {
                        Some(t) => {
                            let (slot, c) = batch[t];
                            let out = state.slots[slot];
                            state.apply(slot, c);
                            swaps += 1;
                            accepted = true;
                            trace(SwapEvent {
                                pass: passes,
                                out_index: out,
                                in_index: c,
                                objective: state.objective,
                            });
                            pos += t + 1;
                        }
                        None => pos = end,
                    }
                }
            }
            SwapMode::PaperLiteral => {
                for &p in &order {
                    let (slot, c) = (p / n, p % n);
                    if state.is_medoid[c] || state.nearest_slot[c] != slot {
                        continue;
                    }
                    let current = state.cluster_cost(slot, state.slots[slot]);
                    if state.cluster_cost(slot, c) >= current - params.epsilon {
                        continue;
                    }
                    if state.swap_objective(slot, c) > state.objective {
                        continue;
                    }
                    let mut next = state.slots.clone();
                    next[slot] = c;
                    next.sort_unstable();
                    if !visited.insert(next) {
                        continue;
                    }
                    let out = state.slots[slot];
                    state.apply(slot, c);
                    swaps += 1;
                    accepted = true;
                    trace(SwapEvent {
                        pass: passes,
                        out_index: out,
                        in_index: c,
                        objective: state.objective,
                    });
                }
            }
        }
        if !accepted {
            return (state.slots, passes, swaps, true);
        }
    }
}

pub fn solve(m: SquareView<'_>, params: &SolveParams) -> Result<Clustering, SolveError> {
    solve_with_trace(m, params, &mut |e| {
        log::debug!(
            "pass {} swap out {} in {} objective {}",
            e.pass,
            e.out_index,
            e.in_index,
            e.objective
        )
    })
}

/// [`solve`], reporting every accepted swap to `trace`.
pub fn solve_with_trace(
    m: SquareView<'_>,
    params: &SolveParams,
    trace: &mut dyn FnMut(SwapEvent),
) -> Result<Clustering, SolveError> {
    let n = m.len();
    params.validate(n)?;

    let collapsed = collapse(m, &params.weights);
    let (slots, passes, swaps, converged) = match &collapsed {
        None => search(m, &params.weights, params, trace),
        Some(c) if params.k > c.reps.len() => {
            // More medoids than distinct locations: every location is covered.
            let mut chosen = c.reps.clone();
            chosen.extend((0..n).filter(|i| c.reps.binary_search(i).is_err()).take(params.k - c.reps.len()));
            (chosen, 0, 0, true)
        }
        Some(c) => {
            let mut translate = |e: SwapEvent| {
                trace(SwapEvent {
                    out_index: c.reps[e.out_index],
                    in_index: c.reps[e.in_index],
                    ..e
                })
            };
            let (slots, passes, swaps, converged) =
                search(c.matrix.view(), &c.weights, params, &mut translate);
            (slots.into_iter().map(|s| c.reps[s]).collect(), passes, swaps, converged)
        }
    };

    let mut medoids = slots;
    medoids.sort_unstable();
    let (assignment, objective) = assign(m, &medoids, &params.weights);
    let clustering = Clustering {
        medoids,
        assignment,
        objective,
        passes,
        swaps,
    };
    if converged {
        Ok(clustering)
    } else {
        Err(SolveError::MaxPasses {
            passes,
            best: Box::new(clustering),
        })
    }
}

fn binomial_capped(n: usize, k: usize, cap: u64) -> Option<u64> {
    let k = k.min(n - k) as u64;
    let mut acc: u64 = 1;
    for i in 0..k {
        acc = acc.checked_mul(n as u64 - i)? / (i + 1);
        if acc > cap {
            return None;
        }
    }
    Some(acc)
}

/// Exact optimum by enumerating every `k`-subset in lexicographic order;
/// the first subset reaching the minimum wins.
pub fn brute_force_solve(m: SquareView<'_>, k: usize, weights: &[f64]) -> Result<Clustering, SolveError> {
    let n = m.len();
    validate_k(k, n)?;
    validate_weights(weights, n)?;
    if binomial_capped(n, k, BRUTE_FORCE_LIMIT).is_none() {
        return Err(SolveError::TooLarge { n, k });
    }

    let mut subset: Vec<usize> = (0..k).collect();
    let mut best = subset.clone();
    let mut best_obj = f64::INFINITY;
    loop {
        let obj = compensated_sum((0..n).map(|i| {
            let row = m.row(i);
            weights[i] * subset.iter().map(|&s| row[s]).fold(f64::INFINITY, f64::min)
        }));
        if obj < best_obj {
            best_obj = obj;
            best.clone_from(&subset);
        }
        // Next combination in lexicographic order.
        let Some(i) = (0..k).rev().find(|&i| subset[i] < n - k + i) else {
            break;
        };
        subset[i] += 1;
        for j in i + 1..k {
            subset[j] = subset[j - 1] + 1;
        }
    }
    let (assignment, objective) = assign(m, &best, weights);
    Ok(Clustering {
        medoids: best,
        assignment,
        objective,
        passes: 0,
        swaps: 0,
    })
}
