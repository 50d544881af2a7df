//! Exponential spatial correlation of a uniform linear array.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{hermitian_defect, trace_re, CMatrix};
use crate::par;
use crate::topology::NetworkScenario;

/// Hermitian PSD correlation matrix of one user-to-base-station link. The
/// large-scale gain is absorbed, so every diagonal entry equals `beta`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix(CMatrix);

impl CorrelationMatrix {
    /// Wraps an arbitrary Hermitian matrix (for hand-built statistics).
    pub fn from_matrix(m: CMatrix) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(Error::InvalidInput("correlation matrix must be square".into()));
        }
        let scale = m.iter().map(|z| z.norm()).fold(0.0f64, f64::max);
        if hermitian_defect(&m) > 1e-12 * scale {
            return Err(Error::InvalidInput("correlation matrix is not Hermitian".into()));
        }
        Ok(Self(m))
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn antennas(&self) -> usize {
        self.0.nrows()
    }

    /// Average gain per antenna, `tr(R) / M`.
    pub fn beta(&self) -> f64 {
        trace_re(&self.0) / self.antennas() as f64
    }

    pub fn into_inner(self) -> CMatrix {
        self.0
    }
}

/// `R[m][n] = beta (mu e^{j theta})^{m-n}` for `m >= n`, conjugate above the
/// diagonal.
pub fn exp_correlation(beta: f64, mu: f64, theta: f64, antennas: usize) -> Result<CorrelationMatrix> {
    if !(0.0..1.0).contains(&mu) {
        return Err(Error::InvalidInput(format!(
            "correlation magnitude {mu} must lie in [0, 1)"
        )));
    }
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidInput(format!("beta = {beta} must be positive")));
    }
    if antennas == 0 {
        return Err(Error::InvalidInput("antenna count must be positive".into()));
    }
    let powers: Vec<Complex64> = (0..antennas)
        .map(|p| Complex64::from_polar(beta * mu.powi(p as i32), theta * p as f64))
        .collect();
    let m = CMatrix::from_fn(antennas, antennas, |row, col| {
        if row >= col {
            powers[row - col]
        } else {
            powers[col - row].conj()
        }
    });
    Ok(CorrelationMatrix(m))
}

/// Correlation matrices for every user/base-station pair plus noise variances.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelStatistics {
    cells: usize,
    users_per_cell: usize,
    antennas: usize,
    /// Indexed `u * L + j`.
    matrices: Vec<CorrelationMatrix>,
    pub sigma2_ul: f64,
    pub sigma2_dl: f64,
}

impl ChannelStatistics {
    /// `matrices` is indexed by `u * cells + bs` with `u = cell * K + user`.
    pub fn new(
        cells: usize,
        users_per_cell: usize,
        antennas: usize,
        matrices: Vec<CorrelationMatrix>,
        sigma2_ul: f64,
        sigma2_dl: f64,
    ) -> Result<Self> {
        if matrices.len() != cells * users_per_cell * cells {
            return Err(Error::InvalidInput(format!(
                "expected {} correlation matrices, got {}",
                cells * users_per_cell * cells,
                matrices.len()
            )));
        }
        if matrices.iter().any(|r| r.antennas() != antennas) {
            return Err(Error::InvalidInput(format!(
                "every matrix must be {antennas} x {antennas}"
            )));
        }
        if !(sigma2_ul >= 0.0 && sigma2_dl >= 0.0) {
            return Err(Error::InvalidInput("noise variances must be nonnegative".into()));
        }
        Ok(Self {
            cells,
            users_per_cell,
            antennas,
            matrices,
            sigma2_ul,
            sigma2_dl,
        })
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn users_per_cell(&self) -> usize {
        self.users_per_cell
    }

    pub fn antennas(&self) -> usize {
        self.antennas
    }

    pub fn num_users(&self) -> usize {
        self.cells * self.users_per_cell
    }

    pub fn cell_of(&self, u: usize) -> usize {
        u / self.users_per_cell
    }

    /// Correlation of user `u`'s channel to base station `bs`.
    pub fn r(&self, u: usize, bs: usize) -> &CMatrix {
        self.matrices[u * self.cells + bs].matrix()
    }

    /// Correlation of user `u`'s channel to its own base station.
    pub fn r_home(&self, u: usize) -> &CMatrix {
        self.r(u, self.cell_of(u))
    }

    pub fn correlation(&self, u: usize, bs: usize) -> &CorrelationMatrix {
        &self.matrices[u * self.cells + bs]
    }

    /// Multiplies every matrix and both noise variances by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            matrices: self
                .matrices
                .iter()
                .map(|r| CorrelationMatrix(r.matrix() * Complex64::new(c, 0.0)))
                .collect(),
            sigma2_ul: self.sigma2_ul * c,
            sigma2_dl: self.sigma2_dl * c,
            ..self.clone()
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(&StatisticsDoc::from(self)).map_err(|e| Error::format("statistics", e))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: StatisticsDoc = serde_json::from_str(text).map_err(|e| Error::format("statistics", e))?;
        doc.try_into()
    }
}

/// Builds the statistics of every link of a scenario.
pub fn build_statistics(scenario: &NetworkScenario) -> Result<ChannelStatistics> {
    let cfg = &scenario.config;
    let (l_count, k_count) = (cfg.cells, cfg.users_per_cell);
    let matrices = par::try_map_indexed(l_count * k_count * l_count, |idx| {
        let (u, j) = (idx / l_count, idx % l_count);
        let (l, k) = (u / k_count, u % k_count);
        exp_correlation(scenario.beta[l][k][j], cfg.mu, scenario.theta[l][k][j], cfg.antennas)
    })?;
    ChannelStatistics::new(l_count, k_count, cfg.antennas, matrices, cfg.sigma2_ul, cfg.sigma2_dl)
}

/// Serialized form: each matrix is an interleaved `[re, im, re, im, ...]`
/// row-major array, nested as `R[l][k][j]`.
#[derive(Serialize, Deserialize)]
struct StatisticsDoc {
    cells: usize,
    users_per_cell: usize,
    antennas: usize,
    sigma2_ul: f64,
    sigma2_dl: f64,
    #[serde(rename = "R")]
    r: Vec<Vec<Vec<Vec<f64>>>>,
}

fn interleave(m: &CMatrix) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * m.len());
    for row in 0..m.nrows() {
        for col in 0..m.ncols() {
            out.push(m[(row, col)].re);
            out.push(m[(row, col)].im);
        }
    }
    out
}

impl From<&ChannelStatistics> for StatisticsDoc {
    fn from(s: &ChannelStatistics) -> Self {
        let r = (0..s.cells)
            .map(|l| {
                (0..s.users_per_cell)
                    .map(|k| {
                        let u = l * s.users_per_cell + k;
                        (0..s.cells).map(|j| interleave(s.r(u, j))).collect()
                    })
                    .collect()
            })
            .collect();
        Self {
            cells: s.cells,
            users_per_cell: s.users_per_cell,
            antennas: s.antennas,
            sigma2_ul: s.sigma2_ul,
            sigma2_dl: s.sigma2_dl,
            r,
        }
    }
}

impl TryFrom<StatisticsDoc> for ChannelStatistics {
    type Error = Error;

    fn try_from(doc: StatisticsDoc) -> Result<Self> {
        let m = doc.antennas;
        let mut matrices = Vec::new();
        for cell in &doc.r {
            for user in cell {
                for flat in user {
                    if flat.len() != 2 * m * m {
                        return Err(Error::format("statistics", "matrix has the wrong length"));
                    }
                    let mat = CMatrix::from_fn(m, m, |row, col| {
                        let i = 2 * (row * m + col);
                        Complex64::new(flat[i], flat[i + 1])
                    });
                    matrices.push(CorrelationMatrix::from_matrix(mat)?);
                }
            }
        }
        ChannelStatistics::new(doc.cells, doc.users_per_cell, m, matrices, doc.sigma2_ul, doc.sigma2_dl)
    }
}

/// Scenario JSON document extended with an `R` key holding the correlation
/// matrices in interleaved form.
pub fn scenario_json_with_statistics(scenario: &NetworkScenario, stats: &ChannelStatistics) -> Result<String> {
    let mut value = serde_json::to_value(scenario).map_err(|e| Error::format("scenario", e))?;
    let doc = serde_json::to_value(StatisticsDoc::from(stats)).map_err(|e| Error::format("statistics", e))?;
    value["R"] = doc["R"].clone();
    serde_json::to_string_pretty(&value).map_err(|e| Error::format("scenario", e))
}
