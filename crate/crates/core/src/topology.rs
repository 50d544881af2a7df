//! Square cell grid on a wrap-around torus.
//!
//! Base stations sit at the centers of a `sqrt(L) x sqrt(L)` grid of equal
//! square cells tiling the configured area. Users are dropped uniformly in
//! their serving cell and redrawn until they are at least `min_dist_km` from
//! the serving base station. Every distance and angle uses the shortest
//! displacement on the torus, so each base station sees the same interference
//! geometry.
//!
//! Incidence angles are measured from the array boresight, taken along the
//! `+x` axis for every base station.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::config::{grid_side, SystemConfig};
use crate::error::{Error, Result};

/// Point in the plane, km.
pub type Point = [f64; 2];

/// Pathloss at 1 km, dB.
pub const PATHLOSS_INTERCEPT_DB: f64 = -148.1;
/// Pathloss slope, dB per decade of distance.
pub const PATHLOSS_SLOPE_DB: f64 = 37.6;

/// One drop of users with its large-scale statistics.
///
/// `beta[l][k][j]` and `theta[l][k][j]` describe the link between user `k` of
/// cell `l` and base station `j`; `beta` is linear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkScenario {
    pub config: SystemConfig,
    pub bs_pos: Vec<Point>,
    pub user_pos: Vec<Vec<Point>>,
    pub beta: Vec<Vec<Vec<f64>>>,
    pub theta: Vec<Vec<Vec<f64>>>,
    pub seed: u64,
}

impl NetworkScenario {
    /// Side of the whole torus, km.
    pub fn torus_side_km(&self) -> f64 {
        self.config.area_km2.sqrt()
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::format("scenario", e))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let scenario: Self = serde_json::from_str(text).map_err(|e| Error::format("scenario", e))?;
        scenario.check_shape()?;
        Ok(scenario)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    fn check_shape(&self) -> Result<()> {
        self.config.validate()?;
        let (l, k) = (self.config.cells, self.config.users_per_cell);
        let ok = self.bs_pos.len() == l
            && self.user_pos.len() == l
            && self.user_pos.iter().all(|c| c.len() == k)
            && [&self.beta, &self.theta]
                .iter()
                .all(|t| t.len() == l && t.iter().all(|c| c.len() == k && c.iter().all(|u| u.len() == l)));
        if !ok {
            return Err(Error::InvalidInput(format!(
                "scenario arrays do not match L = {l}, K = {k}"
            )));
        }
        if self
            .beta
            .iter()
            .flatten()
            .flatten()
            .any(|&b| !(b > 0.0 && b.is_finite()))
        {
            return Err(Error::InvalidInput("scenario contains a nonpositive beta".into()));
        }
        Ok(())
    }
}

/// Shortest displacement `b - a` on a torus of the given side, and its length.
pub fn torus_displacement(a: Point, b: Point, side_km: f64) -> Point {
    let wrap = |d: f64| d - side_km * (d / side_km).round();
    [wrap(b[0] - a[0]), wrap(b[1] - a[1])]
}

/// Distance between two points on a torus of side `side_km`.
pub fn torus_distance(a: Point, b: Point, side_km: f64) -> f64 {
    let d = torus_displacement(a, b, side_km);
    d[0].hypot(d[1])
}

/// Large-scale fading in dB at distance `d_km` with shadowing `z_db`.
pub fn pathloss_db(d_km: f64, z_db: f64) -> Result<f64> {
    if !(d_km > 0.0) {
        return Err(Error::InvalidInput(format!("distance {d_km} km must be positive")));
    }
    Ok(PATHLOSS_INTERCEPT_DB - PATHLOSS_SLOPE_DB * d_km.log10() + z_db)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Normal shadowing sampler with the given standard deviation in dB.
pub fn shadowing(std_db: f64) -> Result<Normal<f64>> {
    Normal::new(0.0, std_db).map_err(|e| Error::InvalidConfig(format!("shadowing: {e}")))
}

/// Maps an angle into `[-pi, pi)`.
fn wrap_angle(theta: f64) -> f64 {
    if theta >= PI {
        theta - 2.0 * PI
    } else {
        theta
    }
}

/// Draws a reproducible scenario for `(config, seed)`.
pub fn generate_scenario(config: &SystemConfig, seed: u64) -> Result<NetworkScenario> {
    config.validate_for_topology()?;
    let grid = grid_side(config.cells).expect("validated square grid");
    let (l_count, k_count) = (config.cells, config.users_per_cell);
    let side = config.area_km2.sqrt();
    let cell = side / grid as f64;

    let bs_pos: Vec<Point> = (0..l_count)
        .map(|l| {
            let (row, col) = (l / grid, l % grid);
            [(col as f64 + 0.5) * cell, (row as f64 + 0.5) * cell]
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let user_pos: Vec<Vec<Point>> = (0..l_count)
        .map(|l| {
            let origin = [bs_pos[l][0] - cell / 2.0, bs_pos[l][1] - cell / 2.0];
            (0..k_count)
                .map(|_| loop {
                    let p = [
                        origin[0] + rng.random::<f64>() * cell,
                        origin[1] + rng.random::<f64>() * cell,
                    ];
                    if torus_distance(p, bs_pos[l], side) >= config.min_dist_km {
                        break p;
                    }
                })
                .collect()
        })
        .collect();

    let shadow = shadowing(config.shadow_std_db)?;
    let mut beta = vec![vec![vec![0.0; l_count]; k_count]; l_count];
    let mut theta = beta.clone();
    for l in 0..l_count {
        for k in 0..k_count {
            for j in 0..l_count {
                let d = torus_displacement(bs_pos[j], user_pos[l][k], side);
                let dist = d[0].hypot(d[1]);
                let z = shadow.sample(&mut rng);
                beta[l][k][j] = db_to_linear(pathloss_db(dist, z)?);
                theta[l][k][j] = wrap_angle(d[1].atan2(d[0]));
            }
        }
    }

    Ok(NetworkScenario {
        config: config.clone(),
        bs_pos,
        user_pos,
        beta,
        theta,
        seed,
    })
}
