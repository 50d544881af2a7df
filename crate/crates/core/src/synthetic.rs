//! Geometry-free random instances for any number of cells.
//!
//! The topology generator needs a square cell grid, but small test instances
//! such as two cells do not fit one. These instances draw large-scale gains
//! directly: home links are strong, cross links weaker, and every link gets
//! an exponential correlation matrix with random `mu` and `theta`. Units are
//! normalized so that the noise variance is one.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::SystemConfig;
use crate::correlation::{exp_correlation, ChannelStatistics};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub cells: usize,
    pub users_per_cell: usize,
    pub antennas: usize,
    /// Range of home-link SNR `beta * p_max_ul / sigma2`, dB.
    pub home_snr_db: (f64, f64),
    /// Range of cross-link gain relative to the home range, dB.
    pub cross_db: (f64, f64),
    /// `mu` is drawn uniformly from this range.
    pub mu: (f64, f64),
}

impl SyntheticSpec {
    pub fn new(cells: usize, users_per_cell: usize, antennas: usize) -> Self {
        Self {
            cells,
            users_per_cell,
            antennas,
            home_snr_db: (-5.0, 10.0),
            cross_db: (-20.0, -3.0),
            mu: (0.0, 0.9),
        }
    }

    /// System parameters matching the instance: unit noise, unit uplink
    /// budget, `K` downlink budget, `tau_p = K`.
    pub fn config(&self) -> SystemConfig {
        let k = self.users_per_cell;
        SystemConfig {
            cells: self.cells,
            users_per_cell: k,
            antennas: self.antennas,
            tau_p: k,
            sigma2_ul: 1.0,
            sigma2_dl: 1.0,
            p_max_ul: 1.0,
            p_max_dl: k as f64,
            ..SystemConfig::desk_scale(k)
        }
    }

    pub fn generate(&self, seed: u64) -> Result<ChannelStatistics> {
        let (lo, hi) = self.home_snr_db;
        let (clo, chi) = self.cross_db;
        if !(lo <= hi && clo <= chi && self.mu.0 <= self.mu.1 && self.mu.0 >= 0.0 && self.mu.1 < 1.0) {
            return Err(Error::InvalidInput(
                "synthetic ranges must be ordered and mu within [0, 1)".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |a: f64, b: f64| if a < b { rng.random_range(a..b) } else { a };
        let (l_n, k_n, m) = (self.cells, self.users_per_cell, self.antennas);
        let mut mats = Vec::with_capacity(l_n * k_n * l_n);
        for l in 0..l_n {
            for _ in 0..k_n {
                for j in 0..l_n {
                    let mut db = draw(lo, hi);
                    if j != l {
                        db += draw(clo, chi);
                    }
                    let beta = 10f64.powf(db / 10.0);
                    let mu = draw(self.mu.0, self.mu.1);
                    let theta = draw(-std::f64::consts::PI, std::f64::consts::PI);
                    mats.push(exp_correlation(beta, mu, theta, m)?);
                }
            }
        }
        ChannelStatistics::new(l_n, k_n, m, mats, 1.0, 1.0)
    }
}
