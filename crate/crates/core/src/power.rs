//! Max-min weighted SE data power control, one direction at a time.
//!
//! Bisection runs over the objective level `xi`. Each probe converts `xi`
//! into per-user SINR targets and asks whether some power vector within the
//! budgets meets them all. Because every SINR is `a_u p_u` over an affine
//! function of the powers, the map
//!
//! ```text
//! I_u(p) = gamma_u (sum_{v != u} b_uv p_v + sigma^2) / (a_u - gamma_u b_uu)
//! ```
//!
//! is a standard interference function. Its fixed-point iteration from zero
//! is componentwise nondecreasing and converges to the minimal power vector
//! meeting the targets whenever one exists. The set of achievable `xi` is an
//! interval starting at zero, so bisection finds the global max-min optimum.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::config::{Direction, SystemConfig};
use crate::error::{Error, Result};
use crate::se::{se_from_sinr, LinkGains};

/// Relative slack accepted on power budgets.
const BUDGET_SLACK: f64 = 1e-12;

/// Bisection also stops only once the bracket is this small relative to its
/// upper end, so optima far below the absolute tolerance are still resolved.
const RELATIVE_BRACKET: f64 = 1e-3;

/// SINR needed for `w * prelog * log2(1 + sinr) = xi`.
pub fn sinr_target(xi: f64, weight: f64, prelog: f64) -> Result<f64> {
    if !(weight > 0.0) {
        return Err(Error::InvalidInput(format!(
            "weight {weight} must be positive for an included user"
        )));
    }
    if !(xi >= 0.0) {
        return Err(Error::InvalidInput(format!("objective level {xi} must be nonnegative")));
    }
    if xi == 0.0 {
        return Ok(0.0);
    }
    if !(prelog > 0.0) {
        return Ok(f64::INFINITY);
    }
    Ok((xi / (weight * prelog) * std::f64::consts::LN_2).exp_m1())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityOptions {
    pub max_iters: usize,
    /// Relative change between sweeps that counts as converged.
    pub tol: f64,
}

impl Default for FeasibilityOptions {
    fn default() -> Self {
        Self {
            max_iters: 1000,
            tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Feasibility {
    pub feasible: bool,
    /// Minimal powers meeting the targets when feasible; last iterate otherwise.
    pub powers: Vec<f64>,
    pub iterations: usize,
}

/// Budgets of one direction: per-user caps (uplink) or per-cell sums (downlink).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Budgets {
    pub direction: Direction,
    pub users_per_cell: usize,
    pub per_user: f64,
    pub per_cell: f64,
}

impl Budgets {
    pub fn from_config(config: &SystemConfig, direction: Direction) -> Self {
        Self {
            direction,
            users_per_cell: config.users_per_cell,
            per_user: config.p_max_ul,
            per_cell: config.p_max_dl,
        }
    }

    /// Largest power a single user can get in this direction.
    pub fn own_max(&self) -> f64 {
        match self.direction {
            Direction::Uplink => self.per_user,
            Direction::Downlink => self.per_cell,
        }
    }

    pub fn satisfied(&self, powers: &[f64], slack: f64) -> bool {
        match self.direction {
            Direction::Uplink => powers.iter().all(|&p| p <= self.per_user * (1.0 + slack)),
            Direction::Downlink => powers
                .chunks(self.users_per_cell)
                .all(|c| c.iter().sum::<f64>() <= self.per_cell * (1.0 + slack)),
        }
    }
}

/// One Jacobi sweep `p -> I(p)`. Users with a zero target get zero power.
/// Returns `None` if some target cannot be met at any power, i.e.
/// `a_u <= gamma_u b_uu`.
pub fn interference_map(targets: &[f64], gains: &LinkGains, p: &[f64]) -> Option<Vec<f64>> {
    let n = gains.num_users();
    (0..n)
        .map(|u| {
            let gamma = targets[u];
            if gamma == 0.0 {
                return Some(0.0);
            }
            let row = &gains.interference[u];
            let self_gain = gains.signal[u] - gamma * row[u];
            if !(self_gain > 0.0) || !gamma.is_finite() {
                return None;
            }
            let others: f64 = (0..n).filter(|&v| v != u).map(|v| row[v] * p[v]).sum();
            Some(gamma * (others + gains.noise) / self_gain)
        })
        .collect()
}

/// Fixed-point iteration of the standard interference function from zero.
///
/// The iterates never decrease, so the test stops as soon as an iterate
/// needs more than the budget allows.
pub fn feasibility(
    targets: &[f64],
    gains: &LinkGains,
    budgets: &Budgets,
    options: FeasibilityOptions,
) -> Result<Feasibility> {
    let n = gains.num_users();
    if targets.len() != n {
        return Err(Error::InvalidInput(format!("{} targets for {n} users", targets.len())));
    }
    if targets.iter().any(|&t| !(t >= 0.0)) {
        return Err(Error::InvalidInput("SINR targets must be nonnegative".into()));
    }
    let mut p = vec![0.0; n];
    if targets.iter().all(|&t| t == 0.0) {
        return Ok(Feasibility {
            feasible: true,
            powers: p,
            iterations: 0,
        });
    }
    let mut residual = f64::INFINITY;
    for iteration in 1..=options.max_iters {
        let next = match interference_map(targets, gains, &p) {
            Some(next) if next.iter().all(|x| x.is_finite()) && budgets.satisfied(&next, BUDGET_SLACK) => next,
            other => {
                return Ok(Feasibility {
                    feasible: false,
                    powers: other.unwrap_or(p),
                    iterations: iteration,
                })
            }
        };
        let scale = next.iter().copied().fold(0.0f64, f64::max).max(f64::MIN_POSITIVE);
        residual = next.iter().zip(&p).map(|(a, b)| (a - b).abs()).fold(0.0f64, f64::max) / scale;
        p = next;
        if residual <= options.tol {
            return Ok(Feasibility {
                feasible: true,
                powers: p,
                iterations: iteration,
            });
        }
    }
    if !(residual.is_finite()) {
        return Err(Error::NonConvergence {
            iterations: options.max_iters,
            residual,
        });
    }
    // A bounded nondecreasing sequence converges, so without a fixed point
    // above the last iterate the powers grow past any budget.
    Ok(match fixed_point(targets, gains, &p) {
        Some(exact) => Feasibility {
            feasible: budgets.satisfied(&exact, BUDGET_SLACK),
            powers: exact,
            iterations: options.max_iters,
        },
        None => Feasibility {
            feasible: false,
            powers: p,
            iterations: options.max_iters,
        },
    })
}

/// Solves `p = I(p)` directly once the sweeps are slow, i.e. near the edge of
/// the feasible set. The sweeps rise monotonically to the least fixed point,
/// so a solution is accepted only if it is finite and dominates the last
/// iterate `floor`; `None` means no such fixed point exists.
fn fixed_point(targets: &[f64], gains: &LinkGains, floor: &[f64]) -> Option<Vec<f64>> {
    let n = gains.num_users();
    let mut system = nalgebra::DMatrix::<f64>::identity(n, n);
    let mut rhs = nalgebra::DVector::<f64>::zeros(n);
    for u in (0..n).filter(|&u| targets[u] > 0.0) {
        let row = &gains.interference[u];
        let scale = targets[u] / (gains.signal[u] - targets[u] * row[u]);
        for v in (0..n).filter(|&v| v != u) {
            system[(u, v)] = -scale * row[v];
        }
        rhs[u] = scale * gains.noise;
    }
    let p = system.lu().solve(&rhs)?;
    let dominates = p
        .iter()
        .zip(floor)
        .all(|(x, f)| x.is_finite() && *x >= f * (1.0 - 1e-9));
    dominates.then(|| p.iter().copied().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaxMinOptions {
    /// Final bracket width on the objective, b/s/Hz. The bracket is also
    /// narrowed to a relative width of `1e-3`.
    pub tol: f64,
    pub feasibility: FeasibilityOptions,
}

impl Default for MaxMinOptions {
    fn default() -> Self {
        Self {
            tol: 1e-4,
            feasibility: FeasibilityOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub xi: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerControlResult {
    pub direction: Direction,
    /// Powers of this direction per user (flat index), mW.
    pub powers: Vec<f64>,
    /// Smallest `w * SE` over included users at the returned powers.
    pub xi_star: f64,
    pub iterations: usize,
    /// Final bracket width.
    pub residual: f64,
    pub probes: Vec<Probe>,
}

impl PowerControlResult {
    /// Header `direction,xi_star,iterations,residual,p_0,...`.
    pub fn csv_header(num_users: usize) -> String {
        let mut s = String::from("direction,xi_star,iterations,residual");
        for u in 0..num_users {
            s.push_str(&format!(",p_{u}"));
        }
        s
    }

    pub fn csv_row(&self) -> String {
        let mut s = format!(
            "{},{},{},{}",
            self.direction, self.xi_star, self.iterations, self.residual
        );
        for p in &self.powers {
            s.push_str(&format!(",{p}"));
        }
        s
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}", Self::csv_header(self.powers.len()))?;
        writeln!(out, "{}", self.csv_row())
    }
}

impl PowerControlResult {
    /// Checks the returned powers against the budgets, the probe history
    /// against a downward-closed feasible set, and the max-min balance: every
    /// included user sits within `tol` of `xi_star` unless its own budget
    /// binds and it does better.
    pub fn verify(&self, config: &SystemConfig, gains: &LinkGains, weights: &[f64], tol: f64) -> Result<()> {
        let budgets = Budgets::from_config(config, self.direction);
        if !budgets.satisfied(&self.powers, BUDGET_SLACK) {
            return Err(Error::Invariant(format!("{} power budgets", self.direction)));
        }
        let max_feasible = self
            .probes
            .iter()
            .filter(|p| p.feasible)
            .map(|p| p.xi)
            .fold(0.0, f64::max);
        let min_infeasible = self
            .probes
            .iter()
            .filter(|p| !p.feasible)
            .map(|p| p.xi)
            .fold(f64::INFINITY, f64::min);
        if max_feasible >= min_infeasible {
            return Err(Error::Invariant(format!(
                "feasible-level monotonicity ({max_feasible} feasible above infeasible {min_infeasible})"
            )));
        }
        let achieved = weighted_se(gains, &self.powers, weights, config);
        for (u, &value) in achieved.iter().enumerate().filter(|(u, _)| weights[*u] > 0.0) {
            let binding = match self.direction {
                Direction::Uplink => self.powers[u] >= budgets.per_user * (1.0 - 1e-9),
                Direction::Downlink => {
                    let k = budgets.users_per_cell;
                    let cell = u / k;
                    self.powers[cell * k..(cell + 1) * k].iter().sum::<f64>() >= budgets.per_cell * (1.0 - 1e-9)
                }
            };
            if (value - self.xi_star).abs() > tol && !(binding && value > self.xi_star) {
                return Err(Error::Invariant(format!(
                    "max-min balance: {} user {u} at {value}, xi_star {}",
                    self.direction, self.xi_star
                )));
            }
        }
        Ok(())
    }
}

/// Weighted SE `w_u * SE_u` of every user at the given powers.
pub fn weighted_se(gains: &LinkGains, powers: &[f64], weights: &[f64], config: &SystemConfig) -> Vec<f64> {
    gains
        .sinrs(powers)
        .into_iter()
        .zip(weights)
        .map(|(s, w)| w * se_from_sinr(s, gains.direction, config))
        .collect()
}

/// Maximizes the minimum of `w_u * SE_u` over users with `w_u > 0`.
pub fn maxmin_power(
    config: &SystemConfig,
    gains: &LinkGains,
    weights: &[f64],
    options: MaxMinOptions,
) -> Result<PowerControlResult> {
    let direction = gains.direction;
    let n = gains.num_users();
    if weights.len() != n {
        return Err(Error::InvalidInput(format!("{} weights for {n} users", weights.len())));
    }
    if !(options.tol > 0.0) {
        return Err(Error::InvalidInput(format!(
            "tolerance {} must be positive",
            options.tol
        )));
    }
    let included: Vec<usize> = (0..n).filter(|&u| weights[u] > 0.0).collect();
    if included.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no user has a positive {direction} weight"
        )));
    }
    let budgets = Budgets::from_config(config, direction);
    let prelog = config.prelog(direction);
    let xi_hi = included
        .iter()
        .map(|&u| {
            let sinr = gains.signal[u] * budgets.own_max() / gains.noise;
            weights[u] * se_from_sinr(sinr, direction, config)
        })
        .fold(0.0f64, f64::max);

    let (mut lo, mut hi) = (0.0, xi_hi);
    let mut best = vec![0.0; n];
    let mut probes = Vec::new();
    let mut iterations = 0;
    while hi - lo > options.tol.min(RELATIVE_BRACKET * hi) {
        let mid = 0.5 * (lo + hi);
        let targets = (0..n)
            .map(|u| {
                if weights[u] > 0.0 {
                    sinr_target(mid, weights[u], prelog)
                } else {
                    Ok(0.0)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let probe = feasibility(&targets, gains, &budgets, options.feasibility)?;
        iterations += 1;
        probes.push(Probe {
            xi: mid,
            feasible: probe.feasible,
        });
        if probe.feasible {
            lo = mid;
            best = probe.powers;
        } else {
            hi = mid;
        }
    }
    let achieved = weighted_se(gains, &best, weights, config);
    let xi_star = included.iter().map(|&u| achieved[u]).fold(f64::INFINITY, f64::min);
    Ok(PowerControlResult {
        direction,
        powers: best,
        xi_star,
        iterations,
        residual: hi - lo,
        probes,
    })
}
