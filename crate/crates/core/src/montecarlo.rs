//! Monte Carlo sampling of correlated Rayleigh channels and empirical checks
//! of the estimation statistics and the closed-form SINR terms.
//!
//! Draw `d` of a run with seed `s` uses ChaCha8 stream `d` of key `s`, so a
//! draw is the same no matter how draws are split across threads. Draws are
//! reduced in fixed-size chunks whose partial sums are combined in chunk
//! order, which keeps every reported number bit-identical across thread
//! counts.

use std::io::Write;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::config::{Direction, SystemConfig};
use crate::correlation::ChannelStatistics;
use crate::error::{Error, Result};
use crate::estimation::{EstimationStats, PilotAssignment};
use crate::linalg::{psd_factor, trace_product, CMatrix, CVector};
use crate::par;
use crate::se::{se_from_sinr, PowerAllocation};

/// Eigenvalues above `-PSD_TOL * beta` are clipped to zero.
pub const PSD_TOL: f64 = 1e-10;

/// Draws per reduction chunk.
const CHUNK: usize = 512;

/// Generator of draw `draw` under `seed`.
pub fn draw_rng(seed: u64, draw: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(draw);
    rng
}

/// Circularly-symmetric complex Gaussian vector with covariance `variance * I`.
fn complex_gaussian<R: Rng>(rng: &mut R, m: usize, variance: f64) -> CVector {
    let s = (variance / 2.0).sqrt();
    CVector::from_fn(m, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(s * re, s * im)
    })
}

/// One realization of every user-to-BS channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    cells: usize,
    /// `h[u * L + j]`.
    h: Vec<CVector>,
}

impl ChannelRealization {
    /// Channel from user `u` to base station `bs`.
    pub fn h(&self, u: usize, bs: usize) -> &CVector {
        &self.h[u * self.cells + bs]
    }
}

/// Holds one factor `A` with `A A^H = R` per link.
#[derive(Debug, Clone)]
pub struct ChannelSampler {
    cells: usize,
    antennas: usize,
    factors: Vec<CMatrix>,
}

impl ChannelSampler {
    pub fn new(stats: &ChannelStatistics) -> Result<Self> {
        let (cells, n) = (stats.cells(), stats.num_users());
        let factors = par::try_map_indexed(n * cells, |i| psd_factor(stats.r(i / cells, i % cells), PSD_TOL))?;
        Ok(Self {
            cells,
            antennas: stats.antennas(),
            factors,
        })
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> ChannelRealization {
        let h = self
            .factors
            .iter()
            .map(|a| a * complex_gaussian(rng, self.antennas, 1.0))
            .collect();
        ChannelRealization { cells: self.cells, h }
    }

    /// Realization number `draw` under `seed`.
    pub fn draw(&self, seed: u64, draw: u64) -> ChannelRealization {
        self.sample(&mut draw_rng(seed, draw))
    }
}

/// Realizations `0..n_draws` under `seed`.
pub fn sample_channels(stats: &ChannelStatistics, seed: u64, n_draws: usize) -> Result<Vec<ChannelRealization>> {
    if n_draws == 0 {
        return Err(Error::InvalidInput("at least one draw is required".into()));
    }
    let sampler = ChannelSampler::new(stats)?;
    Ok(par::map_indexed(n_draws, |d| sampler.draw(seed, d as u64)))
}

/// Simulates pilot transmission and applies the MMSE estimator.
///
/// The received pilot signal at BS `l` projected on pilot `p` is
/// `tau_p * sum_{v on p} h_v^l + n` with `n ~ CN(0, sigma^2 tau_p I)`, and
/// the estimate of user `u` is `tau_p A_u^H y` with `A_u = F_u^{-1} R_u`.
#[derive(Debug, Clone)]
pub struct PilotEstimator {
    assignment: PilotAssignment,
    cells: usize,
    antennas: usize,
    noise_variance: f64,
    /// `tau_p A_u^H` per user.
    filters: Vec<CMatrix>,
}

impl PilotEstimator {
    pub fn new(stats: &ChannelStatistics, assignment: &PilotAssignment) -> Result<Self> {
        let est = EstimationStats::compute(stats, assignment)?;
        let tp = Complex64::new(assignment.tau_p() as f64, 0.0);
        Ok(Self {
            assignment: assignment.clone(),
            cells: stats.cells(),
            antennas: stats.antennas(),
            noise_variance: stats.sigma2_ul * assignment.tau_p() as f64,
            filters: (0..stats.num_users()).map(|u| est.user(u).a.adjoint() * tp).collect(),
        })
    }

    /// Estimates of every user's channel to its own base station. Noise is
    /// drawn from `rng` for every (cell, pilot) pair in order.
    pub fn estimate<R: Rng>(&self, real: &ChannelRealization, rng: &mut R) -> Vec<CVector> {
        let tau_p = self.assignment.tau_p();
        let n = self.assignment.num_users();
        let k = self.assignment.users_per_cell();
        let tp = Complex64::new(tau_p as f64, 0.0);
        let mut received = Vec::with_capacity(self.cells * tau_p);
        for _ in 0..self.cells * tau_p {
            received.push(complex_gaussian(rng, self.antennas, self.noise_variance));
        }
        for l in 0..self.cells {
            for v in 0..n {
                received[l * tau_p + self.assignment.pilot(v)].axpy(tp, real.h(v, l), Complex64::new(1.0, 0.0));
            }
        }
        (0..n)
            .map(|u| &self.filters[u] * &received[(u / k) * tau_p + self.assignment.pilot(u)])
            .collect()
    }
}

/// Estimates of every user's channel for one realization.
pub fn mc_estimate<R: Rng>(
    stats: &ChannelStatistics,
    assignment: &PilotAssignment,
    realization: &ChannelRealization,
    rng: &mut R,
) -> Result<Vec<CVector>> {
    Ok(PilotEstimator::new(stats, assignment)?.estimate(realization, rng))
}

/// Runs `n_draws` draws in chunks and sums the per-chunk accumulators in order.
fn reduce_draws<A, F>(n_draws: usize, zero: impl Fn() -> A + Sync + Send, f: F) -> A
where
    A: Send + Merge,
    F: Fn(&mut A, u64) + Sync + Send,
{
    let chunks = n_draws.div_ceil(CHUNK);
    let partial = par::map_indexed(chunks, |c| {
        let mut acc = zero();
        for d in c * CHUNK..((c + 1) * CHUNK).min(n_draws) {
            f(&mut acc, d as u64);
        }
        acc
    });
    let mut total = zero();
    for p in partial {
        total.merge(p);
    }
    total
}

trait Merge {
    fn merge(&mut self, other: Self);
}

struct EstimationSums {
    phi: Vec<CMatrix>,
    cross: Vec<CMatrix>,
    err: Vec<f64>,
    chan: Vec<f64>,
}

impl Merge for EstimationSums {
    fn merge(&mut self, o: Self) {
        for (a, b) in self.phi.iter_mut().zip(o.phi) {
            *a += b;
        }
        for (a, b) in self.cross.iter_mut().zip(o.cross) {
            *a += b;
        }
        for (a, b) in self.err.iter_mut().zip(o.err) {
            *a += b;
        }
        for (a, b) in self.chan.iter_mut().zip(o.chan) {
            *a += b;
        }
    }
}

/// Empirical versus closed-form estimation statistics of one user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserEstimationCheck {
    /// `||Phi_mc - Phi|| / ||Phi||` in Frobenius norm.
    pub phi_rel_frobenius: f64,
    pub nmse_closed_form: f64,
    /// `E||h - h_hat||^2 / E||h||^2`.
    pub nmse_mc: f64,
    /// `||E{h_hat e^H}|| / sqrt(E||h_hat||^2 E||e||^2)`.
    pub orthogonality: f64,
}

impl UserEstimationCheck {
    pub fn nmse_rel_err(&self) -> f64 {
        (self.nmse_mc - self.nmse_closed_form).abs() / self.nmse_closed_form
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationCheck {
    pub n_draws: usize,
    pub users: Vec<UserEstimationCheck>,
}

/// Compares sample statistics of MMSE estimates with their closed forms.
pub fn estimation_check(
    stats: &ChannelStatistics,
    assignment: &PilotAssignment,
    seed: u64,
    n_draws: usize,
) -> Result<EstimationCheck> {
    if n_draws == 0 {
        return Err(Error::InvalidInput("at least one draw is required".into()));
    }
    let sampler = ChannelSampler::new(stats)?;
    let estimator = PilotEstimator::new(stats, assignment)?;
    let est = EstimationStats::compute(stats, assignment)?;
    let (n, m) = (stats.num_users(), stats.antennas());
    let zero = || EstimationSums {
        phi: vec![CMatrix::zeros(m, m); n],
        cross: vec![CMatrix::zeros(m, m); n],
        err: vec![0.0; n],
        chan: vec![0.0; n],
    };
    let sums = reduce_draws(n_draws, zero, |acc, d| {
        let mut rng = draw_rng(seed, d);
        let real = sampler.sample(&mut rng);
        let hats = estimator.estimate(&real, &mut rng);
        for (u, hat) in hats.iter().enumerate() {
            let h = real.h(u, stats.cell_of(u));
            let e = h - hat;
            acc.phi[u] += hat * hat.adjoint();
            acc.cross[u] += hat * e.adjoint();
            acc.err[u] += e.norm_squared();
            acc.chan[u] += h.norm_squared();
        }
    });
    let scale = Complex64::new(1.0 / n_draws as f64, 0.0);
    let users = (0..n)
        .map(|u| {
            let phi = est.estimate_covariance(u);
            let phi_mc = &sums.phi[u] * scale;
            let hat_power = phi_mc.diagonal().iter().map(|z| z.re).sum::<f64>();
            let err_power = sums.err[u] / n_draws as f64;
            UserEstimationCheck {
                phi_rel_frobenius: (&phi_mc - &phi).norm() / phi.norm(),
                nmse_closed_form: est.nmse(u),
                nmse_mc: sums.err[u] / sums.chan[u],
                orthogonality: (&sums.cross[u] * scale).norm() / (hat_power * err_power).sqrt(),
            }
        })
        .collect();
    Ok(EstimationCheck { n_draws, users })
}

/// Running first and second moments of a complex sample.
#[derive(Debug, Clone, Copy, Default)]
struct Moment {
    sum: Complex64,
    sum_sq: f64,
    sum_quad: f64,
}

impl Moment {
    fn push(&mut self, x: Complex64) {
        let p = x.norm_sqr();
        self.sum += x;
        self.sum_sq += p;
        self.sum_quad += p * p;
    }

    fn add(&mut self, o: Moment) {
        self.sum += o.sum;
        self.sum_sq += o.sum_sq;
        self.sum_quad += o.sum_quad;
    }
}

struct TermSums {
    gain: Vec<Moment>,
    ul: Vec<Moment>,
    dl: Vec<Moment>,
}

impl Merge for TermSums {
    fn merge(&mut self, o: Self) {
        for (a, b) in self.gain.iter_mut().zip(o.gain) {
            a.add(b);
        }
        for (a, b) in self.ul.iter_mut().zip(o.ul) {
            a.add(b);
        }
        for (a, b) in self.dl.iter_mut().zip(o.dl) {
            a.add(b);
        }
    }
}

/// Kind of expectation a report row compares.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TermKind {
    /// `E||h_hat_u||^2`.
    Gain,
    /// `|E{x}|^2` of a combiner/channel inner product.
    MeanSquare,
    /// `E{|x|^2}`.
    Power,
    /// Spectral efficiency built from the terms.
    SpectralEfficiency,
}

/// One closed-form versus Monte Carlo comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermComparison {
    pub term: String,
    pub kind: TermKind,
    pub closed_form: f64,
    pub mc_estimate: f64,
    /// Standard error of the sample mean behind `mc_estimate`.
    pub std_error: f64,
    pub n_draws: usize,
}

impl TermComparison {
    /// `|mc - cf| / |cf|`, or `None` when the closed form is zero.
    pub fn rel_err(&self) -> Option<f64> {
        (self.closed_form != 0.0).then(|| (self.mc_estimate - self.closed_form).abs() / self.closed_form.abs())
    }

    /// Deviation from the closed form in standard errors of `mc_estimate`.
    /// A mean-square estimate is `|m|^2` of a sample mean `m`, so its standard
    /// error is propagated to first order as `2|m| se(m)`.
    pub fn z_score(&self) -> f64 {
        let se = match self.kind {
            TermKind::MeanSquare => 2.0 * self.mc_estimate.sqrt() * self.std_error,
            _ => self.std_error,
        };
        (self.mc_estimate - self.closed_form).abs() / se
    }

    /// Within `rel_tol` of a nonzero closed form; for a zero closed form the
    /// sample mean must lie within four standard errors of zero.
    pub fn agrees(&self, rel_tol: f64) -> bool {
        match self.rel_err() {
            Some(e) => e <= rel_tol,
            None => self.mc_estimate.sqrt() <= 4.0 * self.std_error,
        }
    }
}

/// Term-by-term comparison plus the SE built from each side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub n_draws: usize,
    pub terms: Vec<TermComparison>,
}

impl ValidationReport {
    pub fn of_kind(&self, kind: TermKind) -> impl Iterator<Item = &TermComparison> {
        self.terms.iter().filter(move |t| t.kind == kind)
    }

    /// Largest relative error over rows of the given kinds with a nonzero
    /// closed form.
    pub fn max_rel_err(&self, kinds: &[TermKind]) -> f64 {
        self.terms
            .iter()
            .filter(|t| kinds.contains(&t.kind))
            .filter_map(TermComparison::rel_err)
            .fold(0.0, f64::max)
    }

    /// CSV with header `term,closed_form,mc_estimate,rel_err,n_draws`; the
    /// relative error is empty for zero closed forms.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "term,closed_form,mc_estimate,rel_err,n_draws")?;
        for t in &self.terms {
            let rel = t.rel_err().map(|e| e.to_string()).unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{}",
                t.term, t.closed_form, t.mc_estimate, rel, t.n_draws
            )?;
        }
        Ok(())
    }
}

/// Closed-form values of the expectation terms of every user pair.
struct ClosedTerms {
    gain: Vec<f64>,
    ul_mean_sq: Vec<f64>,
    ul_power: Vec<f64>,
    dl_mean_sq: Vec<f64>,
    dl_power: Vec<f64>,
}

fn closed_terms(stats: &ChannelStatistics, est: &EstimationStats, assignment: &PilotAssignment) -> ClosedTerms {
    let n = stats.num_users();
    let tp2 = (assignment.tau_p() * assignment.tau_p()) as f64;
    let mut t = ClosedTerms {
        gain: (0..n).map(|u| tp2 * est.user(u).tr_b).collect(),
        ul_mean_sq: vec![0.0; n * n],
        ul_power: vec![0.0; n * n],
        dl_mean_sq: vec![0.0; n * n],
        dl_power: vec![0.0; n * n],
    };
    for u in 0..n {
        for v in 0..n {
            let shared = assignment.pilot(u) == assignment.pilot(v);
            // uplink: x = h_hat_u^H h_v at u's base station
            let r_v = stats.r(v, stats.cell_of(u));
            let me = est.user(u);
            let mean = if shared {
                tp2 * tp2 * trace_product(r_v, &me.a).norm_sqr()
            } else {
                0.0
            };
            t.ul_mean_sq[u * n + v] = mean;
            t.ul_power[u * n + v] = tp2 * trace_product(r_v, &me.b).re + mean;
            // downlink: x = (h_u at v's base station)^H h_hat_v
            let r_u = stats.r(u, stats.cell_of(v));
            let other = est.user(v);
            let mean = if shared {
                tp2 * tp2 * trace_product(r_u, &other.a).norm_sqr()
            } else {
                0.0
            };
            t.dl_mean_sq[u * n + v] = mean;
            t.dl_power[u * n + v] = tp2 * trace_product(&other.b, r_u).re + mean;
        }
    }
    t
}

/// SINR of every user from expectation terms, for either side of the
/// comparison.
fn sinr_from_terms(
    direction: Direction,
    gain: &[f64],
    mean_sq: &[f64],
    power: &[f64],
    powers: &[f64],
    noise: f64,
) -> Vec<f64> {
    let n = gain.len();
    (0..n)
        .map(|u| {
            if gain[u] <= 0.0 || powers[u] <= 0.0 {
                return 0.0;
            }
            let signal = powers[u] * mean_sq[u * n + u] / gain[u];
            let total: f64 = (0..n)
                .map(|v| {
                    let norm = match direction {
                        Direction::Uplink => gain[u],
                        Direction::Downlink => gain[v],
                    };
                    if norm > 0.0 {
                        powers[v] * power[u * n + v] / norm
                    } else {
                        0.0
                    }
                })
                .sum();
            signal / (total - signal + noise).max(f64::MIN_POSITIVE)
        })
        .collect()
}

/// Estimates every expectation term behind the closed-form SINRs from
/// `n_draws` channel draws and compares them, along with the resulting SE.
pub fn mc_validate_sinr_terms(
    config: &SystemConfig,
    stats: &ChannelStatistics,
    assignment: &PilotAssignment,
    powers: &PowerAllocation,
    seed: u64,
    n_draws: usize,
) -> Result<ValidationReport> {
    if n_draws == 0 {
        return Err(Error::InvalidInput("at least one draw is required".into()));
    }
    let n = stats.num_users();
    let sampler = ChannelSampler::new(stats)?;
    let estimator = PilotEstimator::new(stats, assignment)?;
    let est = EstimationStats::compute(stats, assignment)?;
    let zero = || TermSums {
        gain: vec![Moment::default(); n],
        ul: vec![Moment::default(); n * n],
        dl: vec![Moment::default(); n * n],
    };
    let sums = reduce_draws(n_draws, zero, |acc, d| {
        let mut rng = draw_rng(seed, d);
        let real = sampler.sample(&mut rng);
        let hats = estimator.estimate(&real, &mut rng);
        for u in 0..n {
            acc.gain[u].push(Complex64::new(hats[u].norm_squared(), 0.0));
            for v in 0..n {
                acc.ul[u * n + v].push(hats[u].dotc(real.h(v, stats.cell_of(u))));
                acc.dl[u * n + v].push(real.h(u, stats.cell_of(v)).dotc(&hats[v]));
            }
        }
    });

    let nd = n_draws as f64;
    let mean = |m: &Moment| m.sum / nd;
    let var_of_mean = |m: &Moment| ((m.sum_sq / nd - mean(m).norm_sqr()).max(0.0) / nd).sqrt();
    let var_of_power = |m: &Moment| ((m.sum_quad / nd - (m.sum_sq / nd).powi(2)).max(0.0) / nd).sqrt();
    let closed = closed_terms(stats, &est, assignment);
    let mut terms = Vec::new();
    let mut mc_gain = vec![0.0; n];
    let mut mc = [vec![0.0; n * n], vec![0.0; n * n], vec![0.0; n * n], vec![0.0; n * n]];

    for u in 0..n {
        let g = &sums.gain[u];
        mc_gain[u] = g.sum.re / nd;
        terms.push(TermComparison {
            term: format!("gain_{u}"),
            kind: TermKind::Gain,
            closed_form: closed.gain[u],
            mc_estimate: mc_gain[u],
            std_error: var_of_power(&Moment {
                sum: Complex64::new(0.0, 0.0),
                sum_sq: g.sum.re,
                sum_quad: g.sum_sq,
            }),
            n_draws,
        });
    }
    for (prefix, moments, cf_mean, cf_power, slot) in [
        ("ul", &sums.ul, &closed.ul_mean_sq, &closed.ul_power, 0),
        ("dl", &sums.dl, &closed.dl_mean_sq, &closed.dl_power, 2),
    ] {
        for u in 0..n {
            for v in 0..n {
                let m = &moments[u * n + v];
                let i = u * n + v;
                mc[slot][i] = mean(m).norm_sqr();
                mc[slot + 1][i] = m.sum_sq / nd;
                terms.push(TermComparison {
                    term: format!("{prefix}_mean_sq_{u}_{v}"),
                    kind: TermKind::MeanSquare,
                    closed_form: cf_mean[i],
                    mc_estimate: mc[slot][i],
                    std_error: var_of_mean(m),
                    n_draws,
                });
                terms.push(TermComparison {
                    term: format!("{prefix}_power_{u}_{v}"),
                    kind: TermKind::Power,
                    closed_form: cf_power[i],
                    mc_estimate: mc[slot + 1][i],
                    std_error: var_of_power(m),
                    n_draws,
                });
            }
        }
    }

    for (direction, mean_slot, cf_mean, cf_power) in [
        (Direction::Uplink, 0, &closed.ul_mean_sq, &closed.ul_power),
        (Direction::Downlink, 2, &closed.dl_mean_sq, &closed.dl_power),
    ] {
        let p = powers.get(direction);
        let noise = config.noise(direction);
        let cf = sinr_from_terms(direction, &closed.gain, cf_mean, cf_power, p, noise);
        let emp = sinr_from_terms(direction, &mc_gain, &mc[mean_slot], &mc[mean_slot + 1], p, noise);
        for u in 0..n {
            terms.push(TermComparison {
                term: format!("se_{}_{u}", direction.label()),
                kind: TermKind::SpectralEfficiency,
                closed_form: se_from_sinr(cf[u], direction, config),
                mc_estimate: se_from_sinr(emp[u], direction, config),
                std_error: 0.0,
                n_draws,
            });
        }
    }
    Ok(ValidationReport { n_draws, terms })
}
