//! Independent reference implementations shared by the integration tests.
//!
//! The SINR oracle transcribes the closed forms literally: explicit DFT pilot
//! sequences, pilot overlaps from inner products, dense inverses of `F`, and
//! sums over every user. The power oracle maximizes the weighted minimum SE by
//! a zooming grid search over the power box.

#![allow(dead_code, clippy::needless_range_loop)]

pub mod props;

use mmimo::linalg::CMatrix;
use mmimo::synthetic::SyntheticSpec;
use mmimo::{ChannelStatistics, Direction, PilotAssignment, SystemConfig};
use num_complex::Complex64;

/// `a_u` and `b_uv` of one direction, computed from the transcription.
#[derive(Debug, Clone)]
pub struct OracleGains {
    pub signal: Vec<f64>,
    pub interference: Vec<Vec<f64>>,
    pub noise: f64,
}

impl OracleGains {
    pub fn sinr(&self, u: usize, p: &[f64]) -> f64 {
        let num = self.signal[u] * p[u];
        if num <= 0.0 {
            return 0.0;
        }
        let den: f64 = self.interference[u].iter().zip(p).map(|(b, q)| b * q).sum::<f64>() + self.noise;
        num / den
    }

    pub fn sinrs(&self, p: &[f64]) -> Vec<f64> {
        (0..self.signal.len()).map(|u| self.sinr(u, p)).collect()
    }
}

fn pilot_vector(index: usize, tau_p: usize) -> Vec<Complex64> {
    (0..tau_p)
        .map(|n| Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * (index * n) as f64 / tau_p as f64))
        .collect()
}

fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn trace(m: &CMatrix) -> Complex64 {
    (0..m.nrows()).map(|i| m[(i, i)]).sum()
}

struct Transcription<'a> {
    stats: &'a ChannelStatistics,
    psi: Vec<Vec<Complex64>>,
    f_inv: Vec<CMatrix>,
}

impl<'a> Transcription<'a> {
    fn new(stats: &'a ChannelStatistics, assignment: &PilotAssignment) -> Self {
        let n = stats.num_users();
        let m = stats.antennas();
        let psi: Vec<_> = (0..n)
            .map(|u| pilot_vector(assignment.pilot(u), assignment.tau_p()))
            .collect();
        let f_inv = (0..n)
            .map(|u| {
                let l = stats.cell_of(u);
                let norm2 = inner(&psi[u], &psi[u]).re;
                let mut f = CMatrix::identity(m, m) * Complex64::new(stats.sigma2_ul * norm2, 0.0);
                for v in 0..n {
                    let ov = inner(&psi[v], &psi[u]).norm_sqr();
                    f += stats.r(v, l) * Complex64::new(ov, 0.0);
                }
                f.try_inverse().expect("F is positive definite")
            })
            .collect();
        Self { stats, psi, f_inv }
    }

    fn norm4(&self, u: usize) -> f64 {
        inner(&self.psi[u], &self.psi[u]).re.powi(2)
    }

    fn overlap(&self, u: usize, v: usize) -> f64 {
        inner(&self.psi[u], &self.psi[v]).norm_sqr()
    }

    /// `tr(R_u^l F_u^-1 R_u^l)` at the serving cell `l`.
    fn own_trace(&self, u: usize) -> f64 {
        let l = self.stats.cell_of(u);
        trace(&(self.stats.r(u, l) * &self.f_inv[u] * self.stats.r(u, l))).re
    }

    fn uplink(&self) -> OracleGains {
        let s = self.stats;
        let n = s.num_users();
        let mut signal = vec![0.0; n];
        let mut interference = vec![vec![0.0; n]; n];
        for u in 0..n {
            let l = s.cell_of(u);
            let r_u = s.r(u, l);
            let own = self.own_trace(u);
            signal[u] = self.norm4(u) * own;
            for v in 0..n {
                let r_v = s.r(v, l);
                let mut b = trace(&(r_v * r_u * &self.f_inv[u] * r_u)).re / own;
                if v != u {
                    b += self.overlap(u, v) * trace(&(r_v * &self.f_inv[u] * r_u)).norm_sqr() / own;
                }
                interference[u][v] = b;
            }
        }
        OracleGains {
            signal,
            interference,
            noise: s.sigma2_ul,
        }
    }

    fn downlink(&self) -> OracleGains {
        let s = self.stats;
        let n = s.num_users();
        let mut signal = vec![0.0; n];
        let mut interference = vec![vec![0.0; n]; n];
        for u in 0..n {
            signal[u] = self.norm4(u) * self.own_trace(u);
            for v in 0..n {
                let i = s.cell_of(v);
                let r_v = s.r(v, i);
                let r_u = s.r(u, i);
                let own_v = self.own_trace(v);
                let mut b = trace(&(r_v * &self.f_inv[v] * r_v * r_u)).re / own_v;
                if v != u {
                    b += self.overlap(u, v) * trace(&(r_v * &self.f_inv[v] * r_u)).norm_sqr() / own_v;
                }
                interference[u][v] = b;
            }
        }
        OracleGains {
            signal,
            interference,
            noise: s.sigma2_dl,
        }
    }
}

pub fn oracle_gains(stats: &ChannelStatistics, assignment: &PilotAssignment, direction: Direction) -> OracleGains {
    let t = Transcription::new(stats, assignment);
    match direction {
        Direction::Uplink => t.uplink(),
        Direction::Downlink => t.downlink(),
    }
}

/// Uplink and downlink SINRs of every user.
pub fn oracle_sinrs(
    stats: &ChannelStatistics,
    assignment: &PilotAssignment,
    p_ul: &[f64],
    p_dl: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let t = Transcription::new(stats, assignment);
    (t.uplink().sinrs(p_ul), t.downlink().sinrs(p_dl))
}

/// Literal NMSE `1 - ||psi||^4 tr(R F^-1 R) / tr(R)`.
pub fn oracle_nmse(stats: &ChannelStatistics, assignment: &PilotAssignment) -> Vec<f64> {
    let t = Transcription::new(stats, assignment);
    (0..stats.num_users())
        .map(|u| 1.0 - t.norm4(u) * t.own_trace(u) / trace(stats.r_home(u)).re)
        .collect()
}

fn weighted_min(gains: &OracleGains, p: &[f64], weights: &[f64], prelog: f64) -> f64 {
    gains
        .sinrs(p)
        .iter()
        .zip(weights)
        .filter(|(_, w)| **w > 0.0)
        .map(|(s, w)| w * prelog * s.ln_1p() / std::f64::consts::LN_2)
        .fold(f64::INFINITY, f64::min)
}

/// Best weighted minimum SE found by a zooming grid over log powers.
/// Uplink powers live in `(0, p_max_ul]^n`; downlink powers must also keep
/// every cell's total within `p_max_dl`. In log coordinates every SINR
/// constraint is convex, so the minimum SINR is concave and zooming in on the
/// best grid point does not get trapped.
pub fn grid_maxmin(
    config: &SystemConfig,
    gains: &OracleGains,
    weights: &[f64],
    direction: Direction,
    points: usize,
    rounds: usize,
) -> (f64, Vec<f64>) {
    let n = gains.signal.len();
    let k = config.users_per_cell;
    let cap = match direction {
        Direction::Uplink => config.p_max_ul,
        Direction::Downlink => config.p_max_dl,
    };
    let prelog = config.prelog(direction);
    let feasible = |p: &[f64]| match direction {
        Direction::Uplink => true,
        Direction::Downlink => p.chunks(k).all(|c| c.iter().sum::<f64>() <= cap * (1.0 + 1e-12)),
    };
    let top = cap.ln();
    let mut lo = vec![top - 6.0 * std::f64::consts::LN_10; n];
    let mut hi = vec![top; n];
    let mut best = (f64::NEG_INFINITY, vec![0.0; n]);
    let mut best_x = hi.clone();
    for _ in 0..rounds {
        let mut idx = vec![0usize; n];
        let mut x = vec![0.0; n];
        loop {
            for d in 0..n {
                x[d] = lo[d] + (hi[d] - lo[d]) * idx[d] as f64 / (points - 1) as f64;
            }
            let p: Vec<f64> = x.iter().map(|v| v.exp()).collect();
            if feasible(&p) {
                let value = weighted_min(gains, &p, weights, prelog);
                if value > best.0 {
                    best = (value, p);
                    best_x.clone_from(&x);
                }
            }
            let mut d = 0;
            while d < n {
                idx[d] += 1;
                if idx[d] < points {
                    break;
                }
                idx[d] = 0;
                d += 1;
            }
            if d == n {
                break;
            }
        }
        for d in 0..n {
            let half = (hi[d] - lo[d]) / (points - 1) as f64 * 3.0;
            lo[d] = best_x[d] - half;
            hi[d] = (best_x[d] + half).min(top);
        }
    }
    best
}

/// Random synthetic instance with a random assignment.
pub fn synthetic_instance(
    cells: usize,
    users_per_cell: usize,
    antennas: usize,
    seed: u64,
) -> (SystemConfig, ChannelStatistics, PilotAssignment) {
    let spec = SyntheticSpec::new(cells, users_per_cell, antennas);
    let stats = spec.generate(seed).expect("valid synthetic instance");
    let assignment = mmimo::assignment::random_assignment(cells, users_per_cell, users_per_cell, seed ^ 0x5eed)
        .expect("valid assignment");
    (spec.config(), stats, assignment)
}

/// Outcome of comparing bisection power control with the grid oracle on one
/// instance and direction.
#[derive(Debug, Clone)]
pub struct PowerCase {
    pub direction: Direction,
    pub xi_star: f64,
    /// The oracle's own evaluation of the bisection powers.
    pub xi_recomputed: f64,
    pub grid: f64,
    /// Spread `max - min` of the weighted SE over users at the bisection powers.
    pub spread: f64,
    /// Largest budget usage, as a fraction of the cap.
    pub budget_use: f64,
}

impl PowerCase {
    pub fn gap(&self) -> f64 {
        (self.xi_star - self.grid).abs()
    }
}

/// Runs max-min power control on a synthetic instance and the grid oracle on
/// the transcribed gains of the same instance.
pub fn power_case(cells: usize, users_per_cell: usize, antennas: usize, seed: u64) -> Vec<PowerCase> {
    let (config, stats, assignment) = synthetic_instance(cells, users_per_cell, antennas, seed);
    let weights = config.weights().unwrap();
    let est = mmimo::EstimationStats::compute(&stats, &assignment).unwrap();
    [Direction::Uplink, Direction::Downlink]
        .into_iter()
        .map(|direction| {
            let gains = mmimo::se::LinkGains::compute(direction, &stats, &est, &assignment);
            let w = weights.get(direction);
            let r = mmimo::power::maxmin_power(&config, &gains, w, Default::default()).unwrap();
            let achieved = mmimo::power::weighted_se(&gains, &r.powers, w, &config);
            let hi = achieved.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lo = achieved.iter().cloned().fold(f64::INFINITY, f64::min);
            let budget_use = match direction {
                Direction::Uplink => r.powers.iter().cloned().fold(0.0, f64::max) / config.p_max_ul,
                Direction::Downlink => {
                    r.powers
                        .chunks(users_per_cell)
                        .map(|c| c.iter().sum::<f64>())
                        .fold(0.0, f64::max)
                        / config.p_max_dl
                }
            };
            let oracle = oracle_gains(&stats, &assignment, direction);
            let (grid, _) = grid_maxmin(&config, &oracle, w, direction, 13, 40);
            PowerCase {
                direction,
                xi_star: r.xi_star,
                xi_recomputed: weighted_min(&oracle, &r.powers, w, config.prelog(direction)),
                grid,
                spread: hi - lo,
                budget_use,
            }
        })
        .collect()
}
