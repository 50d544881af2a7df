//! Pilot assignment.
//!
//! The main routine, [`refine_assignment`], starts from a random assignment
//! and repeatedly visits the cells in index order. In each cell the users are
//! ranked by their weighted sum SE `f` and, separately, by their NMSE `g`;
//! the user ranked `r` by `f` takes the pilot currently held by the user
//! ranked `r` by `g`, so the weakest user gets the least contaminated pilot.
//! The reshuffle is kept only if the network-wide minimum of `f` does not
//! drop below the last accepted value. A pass ends with the variation
//! `sum_l |h_l(n) - h_l(n-1)|`, where `h_l(n)` is the accepted minimum after
//! cell `l`'s decision in pass `n`; the search stops once it is at most
//! `epsilon`.
//!
//! All assigners here need `tau_p == K`.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{Direction, Weights};
use crate::correlation::ChannelStatistics;
use crate::error::{Error, Result};
use crate::estimation::PilotAssignment;
use crate::linalg::trace_product;
use crate::se::{Evaluator, PowerAllocation};

/// Largest number of candidates the exhaustive search will enumerate.
pub const EXHAUSTIVE_LIMIT: u128 = 10_000;

fn require_square_pilots(users_per_cell: usize, tau_p: usize) -> Result<()> {
    if tau_p != users_per_cell {
        return Err(Error::InvalidInput(format!(
            "pilot assignment needs tau_p == K (tau_p = {tau_p}, K = {users_per_cell})"
        )));
    }
    Ok(())
}

/// Independent uniform permutation of the `K` pilots in every cell.
pub fn random_assignment(cells: usize, users_per_cell: usize, tau_p: usize, seed: u64) -> Result<PilotAssignment> {
    require_square_pilots(users_per_cell, tau_p)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pilots = (0..cells)
        .map(|_| {
            let mut p: Vec<usize> = (0..users_per_cell).collect();
            p.shuffle(&mut rng);
            p
        })
        .collect();
    PilotAssignment::new(tau_p, pilots)
}

/// Normalized trace inner product `tr(A B) / (|A|_F |B|_F)`.
pub fn covariance_similarity(a: &crate::linalg::CMatrix, b: &crate::linalg::CMatrix) -> f64 {
    let denom = a.norm() * b.norm();
    if denom == 0.0 {
        0.0
    } else {
        trace_product(a, b).re / denom
    }
}

/// Covariance-similarity greedy baseline.
///
/// Cell 0 keeps the identity assignment. Each later cell assigns its users in
/// descending order of `tr(R)` at their own base station; each user takes the
/// free pilot whose already-assigned holders in earlier cells are least
/// similar to it, measured at this cell's base station.
pub fn greedy_assignment(stats: &ChannelStatistics, tau_p: usize) -> Result<PilotAssignment> {
    let (cells, k) = (stats.cells(), stats.users_per_cell());
    require_square_pilots(k, tau_p)?;
    let mut pilots: Vec<Vec<usize>> = vec![(0..k).collect()];
    for l in 1..cells {
        let users: Vec<usize> = (0..k).map(|t| l * k + t).collect();
        let mut order = users.clone();
        let gain = |u: usize| crate::linalg::trace_re(stats.r(u, l));
        order.sort_by(|&a, &b| gain(b).total_cmp(&gain(a)).then(a.cmp(&b)));

        let mut cell = vec![usize::MAX; k];
        let mut free = vec![true; tau_p];
        for u in order {
            let mut best: Option<(f64, usize)> = None;
            for p in (0..tau_p).filter(|&p| free[p]) {
                let cost: f64 = pilots
                    .iter()
                    .enumerate()
                    .flat_map(|(i, row)| row.iter().enumerate().map(move |(t, &q)| (i * k + t, q)))
                    .filter(|&(_, q)| q == p)
                    .map(|(v, _)| covariance_similarity(stats.r(u, l), stats.r(v, l)))
                    .sum();
                if best.is_none_or(|(c, _)| cost < c) {
                    best = Some((cost, p));
                }
            }
            let (_, p) = best.expect("a free pilot remains");
            free[p] = false;
            cell[u - l * k] = p;
        }
        pilots.push(cell);
    }
    PilotAssignment::new(tau_p, pilots)
}

/// Ascending order of `values`, ties by index.
fn ascending(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    idx
}

/// Reshuffles cell `l`: the user with the `r`-th smallest `f` receives the
/// pilot of the user with the `r`-th smallest `g`. `f_values` and `g_values`
/// are indexed by flat user index.
pub fn reassign_cell(
    l: usize,
    assignment: &PilotAssignment,
    f_values: &[f64],
    g_values: &[f64],
) -> Result<PilotAssignment> {
    let k = assignment.users_per_cell();
    let range = l * k..(l + 1) * k;
    if f_values.len() < range.end || g_values.len() < range.end {
        return Err(Error::InvalidInput("f/g values do not cover the cell".into()));
    }
    let f_order = ascending(&f_values[range.clone()]);
    let g_order = ascending(&g_values[range]);
    let current = assignment.cell(l);
    let mut next = current.to_vec();
    for (&weak, &clean) in f_order.iter().zip(&g_order) {
        next[weak] = current[clean];
    }
    assignment.with_cell(l, next)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointOptions {
    pub epsilon: f64,
    pub max_iters: usize,
}

impl Default for JointOptions {
    fn default() -> Self {
        Self {
            epsilon: 1e-3,
            max_iters: 50,
        }
    }
}

/// One cell decision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    /// Outer iteration, from 1.
    pub iteration: usize,
    pub cell: usize,
    pub accepted: bool,
    /// Accepted network minimum after this decision.
    pub h_star: f64,
    /// Variation of the whole pass this decision belongs to.
    pub variation: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AssignmentTrace {
    pub initial: f64,
    pub records: Vec<TraceRecord>,
}

impl AssignmentTrace {
    /// Accepted objective after every pass, starting with the initial value.
    pub fn per_iteration(&self) -> Vec<f64> {
        let mut out = vec![self.initial];
        let mut last = None;
        for r in &self.records {
            if last.is_some_and(|(n, _)| n != r.iteration) {
                out.push(last.unwrap().1);
            }
            last = Some((r.iteration, r.h_star));
        }
        if let Some((_, h)) = last {
            out.push(h);
        }
        out
    }

    /// CSV with header `n,cell,accepted,h_star,variation`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "n,cell,accepted,h_star,variation")?;
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{},{}",
                r.iteration, r.cell, r.accepted, r.h_star, r.variation
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssignmentStatus {
    Converged {
        iterations: usize,
    },
    /// The pass limit was hit before the variation fell below epsilon.
    CapReached {
        iterations: usize,
    },
}

impl AssignmentStatus {
    pub fn iterations(self) -> usize {
        match self {
            AssignmentStatus::Converged { iterations } | AssignmentStatus::CapReached { iterations } => iterations,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentOutcome {
    pub initial_assignment: PilotAssignment,
    pub assignment: PilotAssignment,
    pub trace: AssignmentTrace,
    pub status: AssignmentStatus,
    pub initial_objective: f64,
    pub objective: f64,
}

/// Cell-by-cell reassignment with backtracking, from a given start.
pub fn refine_assignment(
    eval: &mut Evaluator<'_>,
    initial: PilotAssignment,
    powers: &PowerAllocation,
    weights: &Weights,
    options: JointOptions,
) -> Result<AssignmentOutcome> {
    let cfg = eval.config;
    require_square_pilots(cfg.users_per_cell, cfg.tau_p)?;
    if !(options.epsilon >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "epsilon = {} must be nonnegative",
            options.epsilon
        )));
    }
    let cells = cfg.cells;
    let mut current = initial.clone();
    let mut state = eval.evaluate(&current, powers, weights)?;
    let initial_objective = state.report.min_f;
    let mut accepted_h = initial_objective;
    let mut previous = vec![initial_objective; cells];
    let mut trace = AssignmentTrace {
        initial: initial_objective,
        records: Vec::new(),
    };

    for n in 1..=options.max_iters.max(1) {
        let mut this_pass = vec![0.0; cells];
        let first = trace.records.len();
        for l in 0..cells {
            let candidate = reassign_cell(l, &current, &state.report.f, &state.estimation.nmse_all())?;
            let accepted = if candidate == current {
                true
            } else {
                let tentative = eval.evaluate(&candidate, powers, weights)?;
                if tentative.report.min_f >= accepted_h {
                    accepted_h = tentative.report.min_f;
                    current = candidate;
                    state = tentative;
                    true
                } else {
                    false
                }
            };
            this_pass[l] = accepted_h;
            trace.records.push(TraceRecord {
                iteration: n,
                cell: l,
                accepted,
                h_star: accepted_h,
                variation: f64::NAN,
            });
        }
        let variation: f64 = this_pass.iter().zip(&previous).map(|(a, b)| (a - b).abs()).sum();
        for r in &mut trace.records[first..] {
            r.variation = variation;
        }
        previous = this_pass;
        if variation <= options.epsilon {
            return Ok(AssignmentOutcome {
                initial_assignment: initial,
                assignment: current,
                trace,
                status: AssignmentStatus::Converged { iterations: n },
                initial_objective,
                objective: accepted_h,
            });
        }
    }
    Ok(AssignmentOutcome {
        initial_assignment: initial,
        assignment: current,
        trace,
        status: AssignmentStatus::CapReached {
            iterations: options.max_iters.max(1),
        },
        initial_objective,
        objective: accepted_h,
    })
}

/// Joint uplink/downlink assignment started from `random_assignment(seed)`.
pub fn joint_assignment(
    eval: &mut Evaluator<'_>,
    weights: &Weights,
    powers: &PowerAllocation,
    seed: u64,
    options: JointOptions,
) -> Result<AssignmentOutcome> {
    let cfg = eval.config;
    let initial = random_assignment(cfg.cells, cfg.users_per_cell, cfg.tau_p, seed)?;
    refine_assignment(eval, initial, powers, weights, options)
}

/// Same search driven by one direction's SE only.
pub fn single_direction_assignment(
    eval: &mut Evaluator<'_>,
    powers: &PowerAllocation,
    direction: Direction,
    seed: u64,
    options: JointOptions,
) -> Result<AssignmentOutcome> {
    let weights = Weights::single(eval.config.num_users(), direction);
    joint_assignment(eval, &weights, powers, seed, options)
}

/// `(K!)^(L-1)`, saturating.
pub fn exhaustive_count(cells: usize, users_per_cell: usize) -> u128 {
    let fact = (1..=users_per_cell as u128).try_fold(1u128, |acc, x| acc.checked_mul(x));
    let Some(fact) = fact else { return u128::MAX };
    (1..cells)
        .try_fold(1u128, |acc, _| acc.checked_mul(fact))
        .unwrap_or(u128::MAX)
}

/// All permutations of `0..k` in lexicographic order.
fn permutations(k: usize) -> Vec<Vec<usize>> {
    let mut current: Vec<usize> = (0..k).collect();
    let mut out = vec![current.clone()];
    loop {
        let Some(i) = (1..k).rev().find(|&i| current[i - 1] < current[i]) else {
            return out;
        };
        let j = (i..k)
            .rev()
            .find(|&j| current[j] > current[i - 1])
            .expect("pivot exists");
        current.swap(i - 1, j);
        current[i..].reverse();
        out.push(current.clone());
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExhaustiveOutcome {
    pub assignment: PilotAssignment,
    pub objective: f64,
    pub candidates: usize,
}

/// Enumerates every assignment with cell 0 fixed to the identity and returns
/// the first (lexicographic) maximizer of the network minimum.
pub fn exhaustive_assignment(
    eval: &mut Evaluator<'_>,
    powers: &PowerAllocation,
    weights: &Weights,
) -> Result<ExhaustiveOutcome> {
    let cfg = eval.config;
    require_square_pilots(cfg.users_per_cell, cfg.tau_p)?;
    let count = exhaustive_count(cfg.cells, cfg.users_per_cell);
    if count > EXHAUSTIVE_LIMIT {
        return Err(Error::TooLarge {
            count,
            limit: EXHAUSTIVE_LIMIT,
        });
    }
    let perms = permutations(cfg.users_per_cell);
    let free_cells = cfg.cells - 1;
    let mut digits = vec![0usize; free_cells];
    let mut best: Option<(f64, PilotAssignment)> = None;
    let mut candidates = 0;
    loop {
        let mut rows = vec![perms[0].clone()];
        rows.extend(digits.iter().map(|&d| perms[d].clone()));
        let candidate = PilotAssignment::new(cfg.tau_p, rows)?;
        let objective = eval.evaluate(&candidate, powers, weights)?.report.min_f;
        candidates += 1;
        if best.as_ref().is_none_or(|(b, _)| objective > *b) {
            best = Some((objective, candidate));
        }
        // odometer, last cell varies fastest
        let mut pos = free_cells;
        loop {
            if pos == 0 {
                let (objective, assignment) = best.expect("at least one candidate");
                return Ok(ExhaustiveOutcome {
                    assignment,
                    objective,
                    candidates,
                });
            }
            pos -= 1;
            digits[pos] += 1;
            if digits[pos] < perms.len() {
                break;
            }
            digits[pos] = 0;
        }
    }
}
