//! Closed-form uplink and downlink SINR and spectral efficiency with MMSE
//! estimates and maximum-ratio combining/precoding.
//!
//! Every SINR has the form
//!
//! ```text
//! SINR_u = a_u p_u / (sum_v b_uv p_v + sigma^2)
//! ```
//!
//! where `b_uv` collects the coherent (co-pilot, `v != u`) and noncoherent
//! (all `v`, including `u`) interference coefficients. [`LinkGains`] stores
//! `a`, `b` and the noise so SINRs can be re-evaluated for any power vector,
//! which is what the power control works on.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::config::{Direction, SystemConfig, Weights};
use crate::correlation::ChannelStatistics;
use crate::error::{Error, Result};
use crate::estimation::{EstimationCache, EstimationStats, PilotAssignment};
use crate::linalg::{trace_product, CMatrix};
use crate::par;

/// Uplink and downlink data powers per user (flat index), mW.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerAllocation {
    pub p_ul: Vec<f64>,
    pub p_dl: Vec<f64>,
}

impl PowerAllocation {
    /// Full uplink power and an equal split of each base station's budget.
    pub fn fixed(config: &SystemConfig) -> Self {
        let n = config.num_users();
        Self {
            p_ul: vec![config.p_max_ul; n],
            p_dl: vec![config.p_max_dl / config.users_per_cell as f64; n],
        }
    }

    pub fn get(&self, direction: Direction) -> &[f64] {
        match direction {
            Direction::Uplink => &self.p_ul,
            Direction::Downlink => &self.p_dl,
        }
    }

    pub fn get_mut(&mut self, direction: Direction) -> &mut Vec<f64> {
        match direction {
            Direction::Uplink => &mut self.p_ul,
            Direction::Downlink => &mut self.p_dl,
        }
    }

    /// Checks nonnegativity and the per-user / per-BS budgets, allowing
    /// `rel_tol` relative slack.
    pub fn check_budgets(&self, config: &SystemConfig, rel_tol: f64) -> Result<()> {
        let n = config.num_users();
        if self.p_ul.len() != n || self.p_dl.len() != n {
            return Err(Error::InvalidInput(format!("power vectors must cover {n} users")));
        }
        if self
            .p_ul
            .iter()
            .chain(&self.p_dl)
            .any(|&p| !(p >= 0.0 && p.is_finite()))
        {
            return Err(Error::InvalidInput("powers must be finite and nonnegative".into()));
        }
        if let Some(p) = self.p_ul.iter().find(|&&p| p > config.p_max_ul * (1.0 + rel_tol)) {
            return Err(Error::InvalidInput(format!(
                "uplink power {p} exceeds {}",
                config.p_max_ul
            )));
        }
        for (l, chunk) in self.p_dl.chunks(config.users_per_cell).enumerate() {
            let total: f64 = chunk.iter().sum();
            if total > config.p_max_dl * (1.0 + rel_tol) {
                return Err(Error::InvalidInput(format!(
                    "downlink power of cell {l} sums to {total}, budget {}",
                    config.p_max_dl
                )));
            }
        }
        Ok(())
    }
}

/// `tr(X^H Y)`.
fn trace_adjoint_product(x: &CMatrix, y: &CMatrix) -> num_complex::Complex64 {
    x.iter().zip(y.iter()).map(|(a, b)| a.conj() * b).sum()
}

/// SINR coefficients of every user in one direction.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkGains {
    pub direction: Direction,
    /// `a_u`.
    pub signal: Vec<f64>,
    /// `b_uv`, row `u` is the victim.
    pub interference: Vec<Vec<f64>>,
    pub noise: f64,
}

/// Coherent and noncoherent coefficients of one victim, kept separate.
#[derive(Debug, Clone, PartialEq)]
pub struct GainRow {
    pub signal: f64,
    pub coherent: Vec<f64>,
    pub noncoherent: Vec<f64>,
}

impl GainRow {
    fn combined(&self) -> Vec<f64> {
        self.coherent
            .iter()
            .zip(&self.noncoherent)
            .map(|(c, n)| c + n)
            .collect()
    }
}

/// Uplink coefficients of user `u` at its serving base station.
pub fn ul_gain_row(
    u: usize,
    stats: &ChannelStatistics,
    est: &EstimationStats,
    assignment: &PilotAssignment,
) -> GainRow {
    let n = stats.num_users();
    let bs = stats.cell_of(u);
    let me = est.user(u);
    let tp2 = (est.tau_p() * est.tau_p()) as f64;
    let mut row = GainRow {
        signal: 0.0,
        coherent: vec![0.0; n],
        noncoherent: vec![0.0; n],
    };
    if me.tr_b <= 0.0 {
        return row;
    }
    row.signal = tp2 * me.tr_b;
    for v in 0..n {
        let r_v = stats.r(v, bs);
        if v != u && assignment.pilot(v) == assignment.pilot(u) {
            row.coherent[v] = tp2 * trace_product(r_v, &me.a).norm_sqr() / me.tr_b;
        }
        row.noncoherent[v] = trace_product(r_v, &me.b).re / me.tr_b;
    }
    row
}

/// Downlink coefficients of user `u`; interferer `v`'s precoder is built
/// from its own estimate at its serving base station.
pub fn dl_gain_row(
    u: usize,
    stats: &ChannelStatistics,
    est: &EstimationStats,
    assignment: &PilotAssignment,
) -> GainRow {
    let n = stats.num_users();
    let tp2 = (est.tau_p() * est.tau_p()) as f64;
    let mut row = GainRow {
        signal: tp2 * est.user(u).tr_b.max(0.0),
        coherent: vec![0.0; n],
        noncoherent: vec![0.0; n],
    };
    for v in 0..n {
        let other = est.user(v);
        if other.tr_b <= 0.0 {
            continue;
        }
        let r_u = stats.r(u, stats.cell_of(v));
        if v != u && assignment.pilot(v) == assignment.pilot(u) {
            // tr(R_v F_v^{-1} R_u) = tr(A_v^H R_u)
            row.coherent[v] = tp2 * trace_adjoint_product(&other.a, r_u).norm_sqr() / other.tr_b;
        }
        row.noncoherent[v] = trace_product(&other.b, r_u).re / other.tr_b;
    }
    row
}

fn sinr_from_row(row: &[f64], signal: f64, noise: f64, u: usize, powers: &[f64]) -> f64 {
    let num = signal * powers[u];
    if num <= 0.0 {
        return 0.0;
    }
    let den: f64 = row.iter().zip(powers).map(|(b, p)| b * p).sum::<f64>() + noise;
    num / den
}

/// Uplink SINR of user `u`.
pub fn ul_sinr(
    u: usize,
    stats: &ChannelStatistics,
    est: &EstimationStats,
    assignment: &PilotAssignment,
    powers: &PowerAllocation,
) -> f64 {
    let row = ul_gain_row(u, stats, est, assignment);
    sinr_from_row(&row.combined(), row.signal, stats.sigma2_ul, u, &powers.p_ul)
}

/// Downlink SINR of user `u`.
pub fn dl_sinr(
    u: usize,
    stats: &ChannelStatistics,
    est: &EstimationStats,
    assignment: &PilotAssignment,
    powers: &PowerAllocation,
) -> f64 {
    let row = dl_gain_row(u, stats, est, assignment);
    sinr_from_row(&row.combined(), row.signal, stats.sigma2_dl, u, &powers.p_dl)
}

impl LinkGains {
    pub fn compute(
        direction: Direction,
        stats: &ChannelStatistics,
        est: &EstimationStats,
        assignment: &PilotAssignment,
    ) -> Self {
        let rows = par::map_indexed(stats.num_users(), |u| match direction {
            Direction::Uplink => ul_gain_row(u, stats, est, assignment),
            Direction::Downlink => dl_gain_row(u, stats, est, assignment),
        });
        Self {
            direction,
            signal: rows.iter().map(|r| r.signal).collect(),
            interference: rows.iter().map(GainRow::combined).collect(),
            noise: match direction {
                Direction::Uplink => stats.sigma2_ul,
                Direction::Downlink => stats.sigma2_dl,
            },
        }
    }

    pub fn num_users(&self) -> usize {
        self.signal.len()
    }

    pub fn sinr(&self, u: usize, powers: &[f64]) -> f64 {
        sinr_from_row(&self.interference[u], self.signal[u], self.noise, u, powers)
    }

    pub fn sinrs(&self, powers: &[f64]) -> Vec<f64> {
        (0..self.num_users()).map(|u| self.sinr(u, powers)).collect()
    }
}

/// `gamma (1 - tau_p / tau_c) log2(1 + sinr)`.
pub fn se_from_sinr(sinr: f64, direction: Direction, config: &SystemConfig) -> f64 {
    config.prelog(direction) * sinr.max(0.0).ln_1p() / std::f64::consts::LN_2
}

/// Per-user SINR, SE and weighted sum SE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SEReport {
    pub cells: usize,
    pub users_per_cell: usize,
    pub sinr_ul: Vec<f64>,
    pub sinr_dl: Vec<f64>,
    pub se_ul: Vec<f64>,
    pub se_dl: Vec<f64>,
    /// `w_ul se_ul + w_dl se_dl`.
    pub f: Vec<f64>,
    pub min_f: f64,
}

impl SEReport {
    pub fn from_sinrs(config: &SystemConfig, sinr_ul: Vec<f64>, sinr_dl: Vec<f64>, weights: &Weights) -> Self {
        let se_ul: Vec<f64> = sinr_ul
            .iter()
            .map(|&s| se_from_sinr(s, Direction::Uplink, config))
            .collect();
        let se_dl: Vec<f64> = sinr_dl
            .iter()
            .map(|&s| se_from_sinr(s, Direction::Downlink, config))
            .collect();
        let f: Vec<f64> = (0..se_ul.len())
            .map(|u| weights.ul[u] * se_ul[u] + weights.dl[u] * se_dl[u])
            .collect();
        let min_f = network_min(&f);
        Self {
            cells: config.cells,
            users_per_cell: config.users_per_cell,
            sinr_ul,
            sinr_dl,
            se_ul,
            se_dl,
            f,
            min_f,
        }
    }

    pub fn weighted_sum_se(&self, u: usize) -> f64 {
        self.f[u]
    }

    /// CSV with header `cell,user,pilot,sinr_ul,sinr_dl,se_ul,se_dl,f`.
    pub fn write_csv<W: Write>(&self, assignment: &PilotAssignment, mut out: W) -> std::io::Result<()> {
        writeln!(out, "cell,user,pilot,sinr_ul,sinr_dl,se_ul,se_dl,f")?;
        for u in 0..self.f.len() {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                u / self.users_per_cell,
                u % self.users_per_cell,
                assignment.pilot(u),
                self.sinr_ul[u],
                self.sinr_dl[u],
                self.se_ul[u],
                self.se_dl[u],
                self.f[u]
            )?;
        }
        Ok(())
    }
}

/// Smallest entry, `+inf` for an empty slice.
pub fn network_min(values: &[f64]) -> f64 {
    values.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Everything computed for one (assignment, powers) pair.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub estimation: EstimationStats,
    pub gains_ul: LinkGains,
    pub gains_dl: LinkGains,
    pub report: SEReport,
}

/// Evaluates assignments against fixed statistics, memoizing estimation
/// results across calls.
#[derive(Debug, Clone)]
pub struct Evaluator<'a> {
    pub config: &'a SystemConfig,
    pub stats: &'a ChannelStatistics,
    cache: EstimationCache,
}

impl<'a> Evaluator<'a> {
    pub fn new(config: &'a SystemConfig, stats: &'a ChannelStatistics) -> Result<Self> {
        config.validate()?;
        if stats.cells() != config.cells
            || stats.users_per_cell() != config.users_per_cell
            || stats.antennas() != config.antennas
        {
            return Err(Error::InvalidInput("statistics do not match the configuration".into()));
        }
        Ok(Self {
            config,
            stats,
            cache: EstimationCache::new(),
        })
    }

    pub fn estimation(&mut self, assignment: &PilotAssignment) -> Result<EstimationStats> {
        self.cache.stats_for(self.stats, assignment)
    }

    pub fn cache(&self) -> &EstimationCache {
        &self.cache
    }

    pub fn evaluate(
        &mut self,
        assignment: &PilotAssignment,
        powers: &PowerAllocation,
        weights: &Weights,
    ) -> Result<Evaluation> {
        weights.check(self.config.num_users())?;
        if assignment.tau_p() != self.config.tau_p {
            return Err(Error::InvalidInput(format!(
                "assignment uses tau_p = {}, configuration has {}",
                assignment.tau_p(),
                self.config.tau_p
            )));
        }
        let estimation = self.estimation(assignment)?;
        let gains_ul = LinkGains::compute(Direction::Uplink, self.stats, &estimation, assignment);
        let gains_dl = LinkGains::compute(Direction::Downlink, self.stats, &estimation, assignment);
        let report = SEReport::from_sinrs(
            self.config,
            gains_ul.sinrs(&powers.p_ul),
            gains_dl.sinrs(&powers.p_dl),
            weights,
        );
        Ok(Evaluation {
            estimation,
            gains_ul,
            gains_dl,
            report,
        })
    }
}

/// One-shot evaluation without a cache.
pub fn evaluate(
    config: &SystemConfig,
    stats: &ChannelStatistics,
    assignment: &PilotAssignment,
    powers: &PowerAllocation,
    weights: &Weights,
) -> Result<SEReport> {
    Ok(Evaluator::new(config, stats)?
        .evaluate(assignment, powers, weights)?
        .report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correlation::exp_correlation;

    fn scalar_setup(beta: f64, sigma2: f64, tau_p: usize) -> (ChannelStatistics, PilotAssignment) {
        let r = exp_correlation(beta, 0.0, 0.0, 1).unwrap();
        let stats = ChannelStatistics::new(1, 1, 1, vec![r], sigma2, sigma2).unwrap();
        (stats, PilotAssignment::new(tau_p, vec![vec![0]]).unwrap())
    }

    #[test]
    fn se_from_sinr_values() {
        let cfg = SystemConfig {
            tau_c: 200,
            tau_p: 4,
            ..SystemConfig::desk_scale(4)
        };
        assert_eq!(se_from_sinr(0.0, Direction::Uplink, &cfg), 0.0);
        assert!((se_from_sinr(1.0, Direction::Uplink, &cfg) - 0.49).abs() < 1e-14);
        assert!((se_from_sinr(3.0, Direction::Downlink, &cfg) - 0.98).abs() < 1e-14);
        let no_data = SystemConfig { tau_c: 4, ..cfg };
        assert_eq!(se_from_sinr(10.0, Direction::Uplink, &no_data), 0.0);
    }

    #[test]
    fn scalar_single_user_sinr() {
        let (beta, s2, tau_p, p) = (0.9, 0.2, 2usize, 3.0);
        let (stats, a) = scalar_setup(beta, s2, tau_p);
        let est = EstimationStats::compute(&stats, &a).unwrap();
        let powers = PowerAllocation {
            p_ul: vec![p],
            p_dl: vec![p],
        };
        // phi = tau_p beta^2 / (tau_p beta + s2); SINR = p phi / (p beta + s2)
        let tp = tau_p as f64;
        let phi = tp * beta * beta / (tp * beta + s2);
        let expected = p * phi / (p * beta + s2);
        assert!((ul_sinr(0, &stats, &est, &a, &powers) - expected).abs() < 1e-13);
        assert!((dl_sinr(0, &stats, &est, &a, &powers) - expected).abs() < 1e-13);
        let off = PowerAllocation {
            p_ul: vec![0.0],
            p_dl: vec![0.0],
        };
        assert_eq!(ul_sinr(0, &stats, &est, &a, &off), 0.0);
        assert_eq!(dl_sinr(0, &stats, &est, &a, &off), 0.0);
    }

    #[test]
    fn weighted_sum_and_min() {
        let cfg = SystemConfig {
            cells: 1,
            users_per_cell: 2,
            tau_p: 2,
            ..SystemConfig::desk_scale(2)
        };
        let ul_only = SEReport::from_sinrs(
            &cfg,
            vec![1.0, 3.0],
            vec![7.0, 0.5],
            &Weights::single(2, Direction::Uplink),
        );
        assert_eq!(ul_only.f, ul_only.se_ul);
        let joint = SEReport::from_sinrs(&cfg, vec![1.0, 3.0], vec![7.0, 0.5], &Weights::joint(2));
        for u in 0..2 {
            assert_eq!(joint.weighted_sum_se(u), joint.se_ul[u] + joint.se_dl[u]);
        }
        assert_eq!(joint.min_f, joint.f[0].min(joint.f[1]));
    }

    #[test]
    fn csv_header_and_rows() {
        let cfg = SystemConfig {
            cells: 1,
            users_per_cell: 2,
            tau_p: 2,
            ..SystemConfig::desk_scale(2)
        };
        let report = SEReport::from_sinrs(&cfg, vec![1.0, 3.0], vec![7.0, 0.5], &Weights::joint(2));
        let a = PilotAssignment::new(2, vec![vec![1, 0]]).unwrap();
        let mut buf = Vec::new();
        report.write_csv(&a, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "cell,user,pilot,sinr_ul,sinr_dl,se_ul,se_dl,f");
        assert!(lines[1].starts_with("0,0,1,1,7,"));
        assert_eq!(lines.len(), 3);
    }

    #[test]
    fn fixed_powers_meet_budgets() {
        let cfg = SystemConfig::desk_scale(4);
        let p = PowerAllocation::fixed(&cfg);
        p.check_budgets(&cfg, 0.0).unwrap();
        let mut over = p.clone();
        over.p_dl[0] += 1.0;
        assert!(over.check_budgets(&cfg, 1e-12).is_err());
    }
}
