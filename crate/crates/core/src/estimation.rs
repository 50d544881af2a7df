//! MMSE channel estimation statistics.
//!
//! Pilots are orthogonal sequences of length `tau_p` with unit symbol power,
//! so `|psi_a^H psi_b|^2` is `tau_p^2` when two users share a pilot index and
//! zero otherwise. Only pilot indices are stored; the sequences themselves
//! never need to be materialized.
//!
//! For user `u` in cell `l` the received-pilot covariance is
//!
//! ```text
//! F_u = tau_p^2 * sum_{v shares u's pilot} R_v^l + sigma_ul^2 * tau_p * I
//! ```
//!
//! and the estimate `h_hat_u ~ CN(0, tau_p^2 R_u^l F_u^{-1} R_u^l)`.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::correlation::ChannelStatistics;
use crate::error::{Error, Result};
use crate::linalg::{trace_re, CMatrix, HermitianFactor};
use crate::par;

/// Pilot index of every user; indices are distinct within each cell.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PilotAssignment {
    tau_p: usize,
    /// `pilots[l][k]` in `0..tau_p`.
    pilots: Vec<Vec<usize>>,
}

impl PilotAssignment {
    pub fn new(tau_p: usize, pilots: Vec<Vec<usize>>) -> Result<Self> {
        let assignment = Self { tau_p, pilots };
        assignment.check()?;
        Ok(assignment)
    }

    /// User `k` of every cell gets pilot `k`.
    pub fn identity(cells: usize, users_per_cell: usize, tau_p: usize) -> Result<Self> {
        Self::new(tau_p, vec![(0..users_per_cell).collect(); cells])
    }

    fn check(&self) -> Result<()> {
        let k = self.pilots.first().map_or(0, Vec::len);
        if self.pilots.is_empty() || k == 0 {
            return Err(Error::InvalidInput("assignment must cover at least one user".into()));
        }
        for (l, cell) in self.pilots.iter().enumerate() {
            if cell.len() != k {
                return Err(Error::InvalidInput(format!(
                    "cell {l} has {} users, expected {k}",
                    cell.len()
                )));
            }
            let mut seen = vec![false; self.tau_p];
            for &p in cell {
                if p >= self.tau_p {
                    return Err(Error::InvalidInput(format!("pilot {p} out of range 0..{}", self.tau_p)));
                }
                if std::mem::replace(&mut seen[p], true) {
                    return Err(Error::InvalidInput(format!("pilot {p} used twice in cell {l}")));
                }
            }
        }
        Ok(())
    }

    pub fn tau_p(&self) -> usize {
        self.tau_p
    }

    pub fn cells(&self) -> usize {
        self.pilots.len()
    }

    pub fn users_per_cell(&self) -> usize {
        self.pilots[0].len()
    }

    pub fn num_users(&self) -> usize {
        self.cells() * self.users_per_cell()
    }

    pub fn pilot(&self, u: usize) -> usize {
        let k = self.users_per_cell();
        self.pilots[u / k][u % k]
    }

    pub fn cell(&self, l: usize) -> &[usize] {
        &self.pilots[l]
    }

    pub fn rows(&self) -> &[Vec<usize>] {
        &self.pilots
    }

    /// Replaces the pilots of cell `l`; they must stay distinct.
    pub fn with_cell(&self, l: usize, pilots: Vec<usize>) -> Result<Self> {
        let mut next = self.clone();
        next.pilots[l] = pilots;
        next.check()?;
        Ok(next)
    }

    /// Users (including `u`) that share `u`'s pilot, in ascending order.
    pub fn co_pilots(&self, u: usize) -> Vec<usize> {
        let p = self.pilot(u);
        (0..self.num_users()).filter(|&v| self.pilot(v) == p).collect()
    }

    /// `|psi_u^H psi_v|^2`.
    pub fn overlap(&self, u: usize, v: usize) -> f64 {
        if self.pilot(u) == self.pilot(v) {
            (self.tau_p * self.tau_p) as f64
        } else {
            0.0
        }
    }

    /// Applies a global pilot relabeling `p -> perm[p]`.
    pub fn relabeled(&self, perm: &[usize]) -> Result<Self> {
        Self::new(
            self.tau_p,
            self.pilots
                .iter()
                .map(|c| c.iter().map(|&p| perm[p]).collect())
                .collect(),
        )
    }

    pub(crate) fn check_against(&self, stats: &ChannelStatistics) -> Result<()> {
        if self.cells() != stats.cells() || self.users_per_cell() != stats.users_per_cell() {
            return Err(Error::InvalidInput(format!(
                "assignment is {} x {} but statistics are {} x {}",
                self.cells(),
                self.users_per_cell(),
                stats.cells(),
                stats.users_per_cell()
            )));
        }
        Ok(())
    }
}

/// `F_u` of the given user under the given assignment.
pub fn f_matrix(u: usize, stats: &ChannelStatistics, assignment: &PilotAssignment) -> CMatrix {
    f_from_copilots(u, stats, &assignment.co_pilots(u), assignment.tau_p())
}

fn f_from_copilots(u: usize, stats: &ChannelStatistics, copilots: &[usize], tau_p: usize) -> CMatrix {
    let bs = stats.cell_of(u);
    let m = stats.antennas();
    let tp = tau_p as f64;
    let mut f = CMatrix::identity(m, m) * Complex64::new(stats.sigma2_ul * tp, 0.0);
    let weight = Complex64::new(tp * tp, 0.0);
    for &v in copilots {
        f += stats.r(v, bs) * weight;
    }
    f
}

/// Estimation quantities of one user.
#[derive(Debug, Clone)]
pub struct UserEstimate {
    copilots: Vec<usize>,
    /// `F^{-1} R` with `R` the user's own-cell correlation.
    pub a: CMatrix,
    /// `R F^{-1} R`.
    pub b: CMatrix,
    /// `tr(R F^{-1} R)`.
    pub tr_b: f64,
    /// Normalized mean square error.
    pub nmse: f64,
    pub condition: f64,
}

fn compute_user(u: usize, stats: &ChannelStatistics, copilots: Vec<usize>, tau_p: usize) -> Result<UserEstimate> {
    let f = f_from_copilots(u, stats, &copilots, tau_p);
    let factor = HermitianFactor::new(&f, u)?;
    let r = stats.r_home(u);
    let a = factor.solve(r);
    let rb = r * &a;
    let b = (&rb + rb.adjoint()) * Complex64::new(0.5, 0.0);
    let tr_b = trace_re(&b).max(0.0);
    let tr_r = trace_re(r);
    let tp2 = (tau_p * tau_p) as f64;
    let nmse = if tr_r > 0.0 {
        (1.0 - tp2 * tr_b / tr_r).clamp(0.0, 1.0)
    } else {
        1.0
    };
    Ok(UserEstimate {
        copilots,
        a,
        b,
        tr_b,
        nmse,
        condition: factor.condition(),
    })
}

/// `tau_p^2 R F^{-1} R`, the covariance of the channel estimate.
pub fn estimate_covariance(u: usize, stats: &ChannelStatistics, assignment: &PilotAssignment) -> Result<CMatrix> {
    let est = compute_user(u, stats, assignment.co_pilots(u), assignment.tau_p())?;
    let tp = assignment.tau_p() as f64;
    Ok(est.b * Complex64::new(tp * tp, 0.0))
}

/// `1 - tau_p^2 tr(R F^{-1} R) / tr(R)`.
pub fn nmse(u: usize, stats: &ChannelStatistics, assignment: &PilotAssignment) -> Result<f64> {
    Ok(compute_user(u, stats, assignment.co_pilots(u), assignment.tau_p())?.nmse)
}

/// Estimation statistics of every user under one assignment.
#[derive(Debug, Clone)]
pub struct EstimationStats {
    tau_p: usize,
    users: Vec<Arc<UserEstimate>>,
}

impl EstimationStats {
    pub fn compute(stats: &ChannelStatistics, assignment: &PilotAssignment) -> Result<Self> {
        assignment.check_against(stats)?;
        let tau_p = assignment.tau_p();
        let users = par::try_map_indexed(stats.num_users(), |u| {
            compute_user(u, stats, assignment.co_pilots(u), tau_p).map(Arc::new)
        })?;
        Ok(Self { tau_p, users })
    }

    pub fn tau_p(&self) -> usize {
        self.tau_p
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn user(&self, u: usize) -> &UserEstimate {
        &self.users[u]
    }

    pub fn nmse(&self, u: usize) -> f64 {
        self.users[u].nmse
    }

    pub fn nmse_all(&self) -> Vec<f64> {
        self.users.iter().map(|e| e.nmse).collect()
    }

    /// `tau_p^2 R F^{-1} R` of user `u`.
    pub fn estimate_covariance(&self, u: usize) -> CMatrix {
        let tp = self.tau_p as f64;
        &self.users[u].b * Complex64::new(tp * tp, 0.0)
    }
}

/// Per-user memo of estimation results keyed by the co-pilot set.
///
/// Each user keeps its two most recent entries, which covers the
/// propose-then-revert pattern of the assignment search. A cache belongs to
/// one [`ChannelStatistics`]; reusing it with different statistics returns
/// stale results.
#[derive(Debug, Default, Clone)]
pub struct EstimationCache {
    slots: Vec<[Option<Arc<UserEstimate>>; 2]>,
    hits: usize,
    misses: usize,
}

impl EstimationCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn hits(&self) -> usize {
        self.hits
    }

    pub fn misses(&self) -> usize {
        self.misses
    }

    pub fn stats_for(&mut self, stats: &ChannelStatistics, assignment: &PilotAssignment) -> Result<EstimationStats> {
        assignment.check_against(stats)?;
        let n = stats.num_users();
        if self.slots.len() != n {
            self.slots = vec![[None, None]; n];
        }
        let keys: Vec<Vec<usize>> = (0..n).map(|u| assignment.co_pilots(u)).collect();
        let found: Vec<Option<Arc<UserEstimate>>> = (0..n)
            .map(|u| self.slots[u].iter().flatten().find(|e| e.copilots == keys[u]).cloned())
            .collect();
        let missing: Vec<usize> = (0..n).filter(|&u| found[u].is_none()).collect();
        let tau_p = assignment.tau_p();
        let fresh = par::try_map_indexed(missing.len(), |i| {
            let u = missing[i];
            compute_user(u, stats, keys[u].clone(), tau_p).map(Arc::new)
        })?;
        self.hits += n - missing.len();
        self.misses += missing.len();
        let mut users = found;
        for (u, est) in missing.into_iter().zip(fresh) {
            let slot = &mut self.slots[u];
            slot[1] = slot[0].take();
            slot[0] = Some(est.clone());
            users[u] = Some(est);
        }
        Ok(EstimationStats {
            tau_p,
            users: users.into_iter().map(|e| e.expect("filled")).collect(),
        })
    }
}
