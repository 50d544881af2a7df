//! System constants shared by every module.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Transmission direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    #[serde(rename = "ul")]
    Uplink,
    #[serde(rename = "dl")]
    Downlink,
}

impl Direction {
    pub fn label(self) -> &'static str {
        match self {
            Direction::Uplink => "ul",
            Direction::Downlink => "dl",
        }
    }
}

impl std::fmt::Display for Direction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Noise power of -96 dBm expressed in mW.
pub const NOISE_MINUS_96_DBM_MW: f64 = 2.511_886_431_509_582e-10;

/// Network dimensions, budgets and propagation constants.
///
/// Powers and noise variances are in mW, distances in km. Empty weight tables
/// mean "weight 1 for every user in both directions".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// Number of cells `L`.
    #[serde(alias = "L")]
    pub cells: usize,
    /// Users per cell `K`.
    #[serde(alias = "K")]
    pub users_per_cell: usize,
    /// Antennas per base station `M`.
    #[serde(alias = "M")]
    pub antennas: usize,
    pub tau_c: usize,
    pub tau_p: usize,
    pub gamma_ul: f64,
    pub gamma_dl: f64,
    pub sigma2_ul: f64,
    pub sigma2_dl: f64,
    pub p_max_ul: f64,
    pub p_max_dl: f64,
    pub mu: f64,
    pub area_km2: f64,
    pub min_dist_km: f64,
    pub shadow_std_db: f64,
    #[serde(default)]
    pub w_ul: Vec<Vec<f64>>,
    #[serde(default)]
    pub w_dl: Vec<Vec<f64>>,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self::desk_scale(4)
    }
}

impl SystemConfig {
    /// Four cells over 0.5 km², 32 antennas, `tau_p = K`, 200 mW per user and
    /// `200 K` mW per base station.
    pub fn desk_scale(users_per_cell: usize) -> Self {
        Self {
            cells: 4,
            users_per_cell,
            antennas: 32,
            tau_c: 200,
            tau_p: users_per_cell,
            gamma_ul: 0.5,
            gamma_dl: 0.5,
            sigma2_ul: NOISE_MINUS_96_DBM_MW,
            sigma2_dl: NOISE_MINUS_96_DBM_MW,
            p_max_ul: 200.0,
            p_max_dl: 200.0 * users_per_cell as f64,
            mu: 0.5,
            area_km2: 0.5,
            min_dist_km: 0.035,
            shadow_std_db: 7.0,
            w_ul: Vec::new(),
            w_dl: Vec::new(),
        }
    }

    /// Same as [`SystemConfig::desk_scale`] with 200 antennas per base station.
    pub fn full_scale(users_per_cell: usize) -> Self {
        Self {
            antennas: 200,
            ..Self::desk_scale(users_per_cell)
        }
    }

    pub fn num_users(&self) -> usize {
        self.cells * self.users_per_cell
    }

    /// Serving cell of flat user index `u`.
    pub fn cell_of(&self, u: usize) -> usize {
        u / self.users_per_cell
    }

    pub fn user_index(&self, cell: usize, user: usize) -> usize {
        cell * self.users_per_cell + user
    }

    /// `1 - tau_p / tau_c`.
    pub fn pilot_overhead_factor(&self) -> f64 {
        1.0 - self.tau_p as f64 / self.tau_c as f64
    }

    /// Prelog factor of the given direction.
    pub fn prelog(&self, direction: Direction) -> f64 {
        let gamma = match direction {
            Direction::Uplink => self.gamma_ul,
            Direction::Downlink => self.gamma_dl,
        };
        gamma * self.pilot_overhead_factor()
    }

    pub fn noise(&self, direction: Direction) -> f64 {
        match direction {
            Direction::Uplink => self.sigma2_ul,
            Direction::Downlink => self.sigma2_dl,
        }
    }

    /// Checks every invariant except the square cell-grid requirement, which
    /// only the topology generator needs.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.cells == 0 || self.users_per_cell == 0 || self.antennas == 0 {
            return bad("cells, users_per_cell and antennas must be positive".into());
        }
        let (k, l) = (self.users_per_cell, self.cells);
        if self.tau_p < k || self.tau_p > k * l {
            return bad(format!(
                "tau_p = {} must lie in [K, K L] = [{k}, {}]",
                self.tau_p,
                k * l
            ));
        }
        if self.tau_p >= self.tau_c {
            return bad(format!("tau_p = {} must be below tau_c = {}", self.tau_p, self.tau_c));
        }
        if !(self.gamma_ul >= 0.0 && self.gamma_dl >= 0.0) || (self.gamma_ul + self.gamma_dl - 1.0).abs() > 1e-12 {
            return bad(format!(
                "gamma_ul + gamma_dl must equal 1 with both nonnegative (got {} + {})",
                self.gamma_ul, self.gamma_dl
            ));
        }
        if !(0.0..1.0).contains(&self.mu) {
            return bad(format!("mu = {} must lie in [0, 1)", self.mu));
        }
        for (name, value) in [
            ("sigma2_ul", self.sigma2_ul),
            ("sigma2_dl", self.sigma2_dl),
            ("p_max_ul", self.p_max_ul),
            ("p_max_dl", self.p_max_dl),
            ("area_km2", self.area_km2),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return bad(format!("{name} = {value} must be positive and finite"));
            }
        }
        if !(self.min_dist_km >= 0.0) || !(self.shadow_std_db >= 0.0) {
            return bad("min_dist_km and shadow_std_db must be nonnegative".into());
        }
        self.weights()?;
        Ok(())
    }

    /// Additionally requires `L` to be a perfect square.
    pub fn validate_for_topology(&self) -> Result<()> {
        self.validate()?;
        if grid_side(self.cells).is_none() {
            return Err(Error::InvalidConfig(format!(
                "cells = {} is not a perfect square",
                self.cells
            )));
        }
        let cell_side = self.area_km2.sqrt() / grid_side(self.cells).unwrap() as f64;
        if self.min_dist_km >= cell_side / 2.0 {
            return Err(Error::InvalidConfig(format!(
                "min_dist_km = {} leaves no room inside a cell of side {cell_side:.4} km",
                self.min_dist_km
            )));
        }
        Ok(())
    }

    /// Per-user weights, flattened by user index.
    pub fn weights(&self) -> Result<Weights> {
        let n = self.num_users();
        let flatten = |table: &Vec<Vec<f64>>, name: &str| -> Result<Vec<f64>> {
            if table.is_empty() {
                return Ok(vec![1.0; n]);
            }
            if table.len() != self.cells || table.iter().any(|row| row.len() != self.users_per_cell) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be an L x K table ({} x {})",
                    self.cells, self.users_per_cell
                )));
            }
            Ok(table.iter().flatten().copied().collect())
        };
        let weights = Weights {
            ul: flatten(&self.w_ul, "w_ul")?,
            dl: flatten(&self.w_dl, "w_dl")?,
        };
        weights.check(n).map_err(|e| match e {
            Error::InvalidInput(m) => Error::InvalidConfig(m),
            e => e,
        })?;
        Ok(weights)
    }
}

/// Side of the square cell grid, if `cells` is a perfect square.
pub fn grid_side(cells: usize) -> Option<usize> {
    let side = (cells as f64).sqrt().round() as usize;
    (side * side == cells).then_some(side)
}

/// Uplink and downlink weights per user (flat index).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub ul: Vec<f64>,
    pub dl: Vec<f64>,
}

impl Weights {
    pub fn uniform(num_users: usize, w_ul: f64, w_dl: f64) -> Self {
        Self {
            ul: vec![w_ul; num_users],
            dl: vec![w_dl; num_users],
        }
    }

    /// Both directions count equally.
    pub fn joint(num_users: usize) -> Self {
        Self::uniform(num_users, 1.0, 1.0)
    }

    /// Only the given direction counts.
    pub fn single(num_users: usize, direction: Direction) -> Self {
        match direction {
            Direction::Uplink => Self::uniform(num_users, 1.0, 0.0),
            Direction::Downlink => Self::uniform(num_users, 0.0, 1.0),
        }
    }

    pub fn len(&self) -> usize {
        self.ul.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ul.is_empty()
    }

    pub fn get(&self, direction: Direction) -> &[f64] {
        match direction {
            Direction::Uplink => &self.ul,
            Direction::Downlink => &self.dl,
        }
    }

    pub(crate) fn check(&self, num_users: usize) -> Result<()> {
        if self.ul.len() != num_users || self.dl.len() != num_users {
            return Err(Error::InvalidInput(format!(
                "weights cover {}/{} users, expected {num_users}",
                self.ul.len(),
                self.dl.len()
            )));
        }
        for (u, (&a, &b)) in self.ul.iter().zip(&self.dl).enumerate() {
            if !(a >= 0.0 && b >= 0.0) || a + b == 0.0 || !(a + b).is_finite() {
                return Err(Error::InvalidInput(format!(
                    "user {u} has invalid weights (w_ul = {a}, w_dl = {b})"
                )));
            }
        }
        Ok(())
    }
}
