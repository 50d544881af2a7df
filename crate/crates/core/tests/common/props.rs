//! Randomized invariants, shared by the property tests and the acceptance run.

use mmimo::assignment::{greedy_assignment, random_assignment, refine_assignment};
use mmimo::harness::{run_drop, AssignerKind, ExperimentConfig, InstanceSource};
use mmimo::se::LinkGains;
use mmimo::synthetic::SyntheticSpec;
use mmimo::{ChannelStatistics, Direction, EstimationStats, Evaluator, PilotAssignment, PowerAllocation, SystemConfig};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

/// Number of cases every property runs.
pub const CASES: u32 = 1000;

pub fn config() -> ProptestConfig {
    ProptestConfig {
        cases: CASES,
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

#[derive(Debug, Clone)]
pub struct Case {
    pub cells: usize,
    pub users_per_cell: usize,
    pub antennas: usize,
    pub seed: u64,
    /// Extra pilots beyond `K`.
    pub spare_pilots: usize,
    pub p_ul: Vec<f64>,
    pub p_dl: Vec<f64>,
    pub user: usize,
    pub other: usize,
    /// Log10 of a scale factor.
    pub scale_exp: f64,
}

impl Case {
    pub fn config(&self) -> SystemConfig {
        SyntheticSpec::new(self.cells, self.users_per_cell, self.antennas).config()
    }

    pub fn stats(&self) -> ChannelStatistics {
        SyntheticSpec::new(self.cells, self.users_per_cell, self.antennas)
            .generate(self.seed)
            .unwrap()
    }

    /// Random square assignment, or rotated blocks of pilots when there are
    /// spare pilots.
    pub fn assignment(&self) -> PilotAssignment {
        let k = self.users_per_cell;
        if self.spare_pilots == 0 {
            return random_assignment(self.cells, k, k, self.seed ^ 0xa5).unwrap();
        }
        let tau_p = k + self.spare_pilots;
        let rows = (0..self.cells)
            .map(|l| {
                let offset = (self.seed >> (8 * l)) as usize % tau_p;
                (0..k).map(|j| (offset + j) % tau_p).collect()
            })
            .collect();
        PilotAssignment::new(tau_p, rows).unwrap()
    }

    pub fn powers(&self, direction: Direction) -> &[f64] {
        match direction {
            Direction::Uplink => &self.p_ul,
            Direction::Downlink => &self.p_dl,
        }
    }
}

pub fn case_strategy() -> impl Strategy<Value = Case> {
    (1usize..=3, 1usize..=3, 1usize..=6, 0usize..=2)
        .prop_flat_map(|(cells, k, m, spare)| {
            let n = cells * k;
            (
                Just((cells, k, m, spare)),
                any::<u64>(),
                prop::collection::vec(0.0f64..1.0, n),
                prop::collection::vec(0.0f64..1.0, n),
                0..n,
                0..n,
                -12.0f64..12.0,
            )
        })
        .prop_map(
            |((cells, users_per_cell, antennas, spare_pilots), seed, p_ul, p_dl, user, other, scale_exp)| Case {
                cells,
                users_per_cell,
                antennas,
                seed,
                spare_pilots,
                p_ul,
                p_dl,
                user,
                other,
                scale_exp,
            },
        )
}

fn gains(stats: &ChannelStatistics, assignment: &PilotAssignment) -> [LinkGains; 2] {
    let est = EstimationStats::compute(stats, assignment).unwrap();
    [Direction::Uplink, Direction::Downlink].map(|d| LinkGains::compute(d, stats, &est, assignment))
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()) + 1e-300
}

/// Scaling every correlation matrix and both noise variances by one factor
/// leaves every SINR unchanged.
pub fn scale_invariance(case: &Case) -> Result<(), TestCaseError> {
    let stats = case.stats();
    let assignment = case.assignment();
    let scaled = stats.scaled(10f64.powf(case.scale_exp));
    let before = gains(&stats, &assignment);
    let after = gains(&scaled, &assignment);
    for (g0, g1) in before.iter().zip(&after) {
        let p = case.powers(g0.direction);
        for (u, (a, b)) in g0.sinrs(p).into_iter().zip(g1.sinrs(p)).enumerate() {
            prop_assert!(close(a, b, 1e-8), "{} user {u}: {a} vs {b}", g0.direction);
        }
    }
    Ok(())
}

/// Raising one user's power never lowers its own SINR and never raises
/// anyone else's.
pub fn own_power_monotonicity(case: &Case) -> Result<(), TestCaseError> {
    let stats = case.stats();
    let assignment = case.assignment();
    for g in gains(&stats, &assignment) {
        let p = case.powers(g.direction).to_vec();
        let mut q = p.clone();
        q[case.user] = q[case.user] * 1.5 + 0.1;
        let (before, after) = (g.sinrs(&p), g.sinrs(&q));
        let u = case.user;
        prop_assert!(after[u] >= before[u] * (1.0 - 1e-12), "{} own SINR fell", g.direction);
        prop_assert!(before[u] == 0.0 || after[u] > before[u] || g.signal[u] == 0.0);
        for v in (0..p.len()).filter(|&v| v != u) {
            prop_assert!(after[v] <= before[v] * (1.0 + 1e-12), "{} user {v} gained", g.direction);
        }
    }
    Ok(())
}

/// Silencing an interferer never lowers a user's SINR.
pub fn interferer_removal(case: &Case) -> Result<(), TestCaseError> {
    if case.user == case.other {
        return Ok(());
    }
    let stats = case.stats();
    let assignment = case.assignment();
    for g in gains(&stats, &assignment) {
        let p = case.powers(g.direction).to_vec();
        let mut q = p.clone();
        q[case.other] = 0.0;
        prop_assert!(g.sinr(case.user, &q) >= g.sinr(case.user, &p) * (1.0 - 1e-12));
    }
    Ok(())
}

/// NMSE of every user lies in `[0, 1]`, both as reported and as computed
/// without clamping.
pub fn nmse_in_unit_interval(case: &Case) -> Result<(), TestCaseError> {
    let stats = case.stats();
    let assignment = case.assignment();
    let est = EstimationStats::compute(&stats, &assignment).unwrap();
    for (u, raw) in super::oracle_nmse(&stats, &assignment).into_iter().enumerate() {
        let g = est.nmse(u);
        prop_assert!((0.0..=1.0).contains(&g), "user {u}: {g}");
        prop_assert!((-1e-9..=1.0 + 1e-9).contains(&raw), "user {u}: unclamped {raw}");
    }
    Ok(())
}

fn check_distinct(a: &PilotAssignment) -> Result<(), TestCaseError> {
    for (l, row) in a.rows().iter().enumerate() {
        let mut seen = vec![false; a.tau_p()];
        for &p in row {
            prop_assert!(p < a.tau_p(), "cell {l}: pilot {p} out of range");
            prop_assert!(!std::mem::replace(&mut seen[p], true), "cell {l}: pilot {p} repeated");
        }
    }
    Ok(())
}

/// Every assigner hands out distinct pilots within each cell.
pub fn pilot_distinctness(case: &Case) -> Result<(), TestCaseError> {
    let config = case.config();
    let stats = case.stats();
    let k = case.users_per_cell;
    check_distinct(&case.assignment())?;
    check_distinct(&random_assignment(case.cells, k, k, case.seed).unwrap())?;
    check_distinct(&greedy_assignment(&stats, k).unwrap())?;
    let mut eval = Evaluator::new(&config, &stats).unwrap();
    let start = random_assignment(case.cells, k, k, case.seed).unwrap();
    let out = refine_assignment(
        &mut eval,
        start,
        &PowerAllocation::fixed(&config),
        &config.weights().unwrap(),
        Default::default(),
    )
    .unwrap();
    check_distinct(&out.assignment)
}

/// Two runs of the same drop produce identical results.
pub fn end_to_end_determinism(case: &Case) -> Result<(), TestCaseError> {
    let k = case.users_per_cell;
    let system = SystemConfig {
        cells: case.cells,
        antennas: case.antennas,
        ..SystemConfig::desk_scale(k)
    };
    let config = ExperimentConfig {
        system,
        seed: case.seed,
        n_drops: 1,
        instances: InstanceSource::Synthetic,
        power_control: true,
        assigners: vec![AssignerKind::Random, AssignerKind::Greedy, AssignerKind::Joint],
        ..ExperimentConfig::default()
    };
    let drop = case.user % 3;
    let a = run_drop(&config, drop);
    let b = run_drop(&config, drop);
    prop_assert!(a.failure.is_none(), "{:?}", a.failure);
    prop_assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    prop_assert_eq!(a, b);
    Ok(())
}

pub type Property = fn(&Case) -> Result<(), TestCaseError>;

pub const PROPERTIES: [(&str, Property); 6] = [
    ("scale invariance of SINR", scale_invariance),
    ("monotonicity in own power", own_power_monotonicity),
    ("interferer-removal monotonicity", interferer_removal),
    ("NMSE in [0, 1]", nmse_in_unit_interval),
    ("within-cell pilot distinctness", pilot_distinctness),
    ("end-to-end determinism", end_to_end_determinism),
];
