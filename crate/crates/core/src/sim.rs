//! Monte Carlo comparison of equilibrium and optimal welfare in the task
//! selection game.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mcs::solver::{nash_equilibrium, social_optimum, SolverConfig};
use crate::mcs::{Execution, McsScenario, McsUser, Point, Task};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_tasks: usize,
    pub user_counts: Vec<usize>,
    pub reward_levels: Vec<f64>,
    /// Execution costs are drawn uniformly from this range.
    pub exec_cost_range: (f64, f64),
    pub travel_cost: f64,
    pub trials_per_cell: usize,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_tasks: 10,
            user_counts: (1..=10).map(|k| 2 * k).collect(),
            reward_levels: vec![0.2, 0.4, 0.6, 0.8, 1.0],
            exec_cost_range: (0.0, 1.0),
            travel_cost: 0.0,
            trials_per_cell: 200,
            seed: 2016,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_tasks == 0 || self.trials_per_cell == 0 {
            return Err(Error::Domain(
                "n_tasks and trials_per_cell must be positive".into(),
            ));
        }
        if self.user_counts.iter().any(|&n| n < 2) {
            return Err(Error::Domain("every user count must be at least 2".into()));
        }
        if self
            .reward_levels
            .iter()
            .any(|v| !(v.is_finite() && *v >= 0.0))
        {
            return Err(Error::Domain(
                "reward levels must be finite and >= 0".into(),
            ));
        }
        let (lo, hi) = self.exec_cost_range;
        if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi) {
            return Err(Error::Domain(
                "execution cost range must satisfy 0 <= lo <= hi".into(),
            ));
        }
        if !(self.travel_cost.is_finite() && self.travel_cost >= 0.0) {
            return Err(Error::Domain("travel cost must be finite and >= 0".into()));
        }
        Ok(())
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Independent seed for one trial of one cell.
pub fn trial_seed(seed: u64, reward_level: f64, n_users: usize, trial: usize) -> u64 {
    [reward_level.to_bits(), n_users as u64, trial as u64]
        .into_iter()
        .fold(splitmix64(seed), |h, v| splitmix64(h ^ v))
}

/// Random scenario with open windows, instant execution, every task
/// available to every user and unbounded budgets; only execution costs vary.
pub fn generate_mcs(
    config: &SimConfig,
    reward_level: f64,
    n_users: usize,
    seed: u64,
) -> Result<McsScenario> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tasks = (0..config.n_tasks)
        .map(|id| Task {
            id,
            reward: reward_level,
            location: Point::default(),
            window_open: 0.0,
            window_close: f64::INFINITY,
        })
        .collect();
    let (lo, hi) = config.exec_cost_range;
    let users = (0..n_users)
        .map(|id| McsUser {
            id,
            initial_location: Point::default(),
            travel_cost_rate: config.travel_cost,
            speed: 1.0,
            resource_budget: f64::INFINITY,
            available: (0..config.n_tasks)
                .map(|task| Execution {
                    task,
                    exec_time: 0.0,
                    exec_cost: if hi > lo { rng.gen_range(lo..=hi) } else { lo },
                })
                .collect(),
        })
        .collect();
    McsScenario::new(tasks, users)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub reward_level: f64,
    pub n_users: usize,
    pub trial: usize,
    /// `(ne_welfare, se_welfare)`, or `None` when a solver failed.
    pub welfare: Option<(f64, f64)>,
}

impl TrialRecord {
    pub fn gain(&self) -> Option<f64> {
        self.welfare.map(|(ne, se)| gain_ratio(ne, se))
    }
}

fn gain_ratio(ne: f64, se: f64) -> f64 {
    if ne > 0.0 {
        (se - ne) / ne
    } else if se > 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub reward_level: f64,
    pub n_users: usize,
    pub trials: usize,
    pub failed: usize,
    pub ne_welfare: f64,
    pub se_welfare: f64,
    /// `(mean SE - mean NE) / mean NE`.
    pub gain: f64,
    /// Means divided by the largest SE mean at the same reward level.
    pub ne_normalized: f64,
    pub se_normalized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub cells: Vec<CellResult>,
    pub trials: Vec<TrialRecord>,
}

impl SimResult {
    pub fn cell(&self, reward_level: f64, n_users: usize) -> Option<&CellResult> {
        self.cells
            .iter()
            .find(|c| c.reward_level == reward_level && c.n_users == n_users)
    }

    /// `reward_level,n_users,trial,ne_welfare,se_welfare,gain`; failed
    /// trials carry `failed` in the numeric columns.
    pub fn trials_csv(&self) -> String {
        let mut out = String::from("reward_level,n_users,trial,ne_welfare,se_welfare,gain\n");
        for t in &self.trials {
            match t.welfare {
                Some((ne, se)) => out.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    t.reward_level,
                    t.n_users,
                    t.trial,
                    ne,
                    se,
                    gain_ratio(ne, se)
                )),
                None => out.push_str(&format!(
                    "{},{},{},failed,failed,failed\n",
                    t.reward_level, t.n_users, t.trial
                )),
            }
        }
        out
    }

    pub fn cells_csv(&self) -> String {
        let mut out =
            String::from("reward_level,n_users,trials,failed,ne_welfare,se_welfare,gain,ne_normalized,se_normalized\n");
        for c in &self.cells {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                c.reward_level,
                c.n_users,
                c.trials,
                c.failed,
                c.ne_welfare,
                c.se_welfare,
                c.gain,
                c.ne_normalized,
                c.se_normalized
            ));
        }
        out
    }
}

/// Solver settings used by the harness: subset search only, since every
/// visiting order is feasible in generated scenarios.
pub fn harness_solver() -> SolverConfig {
    SolverConfig {
        order_free: true,
        ..SolverConfig::default()
    }
}

fn run_trial(
    config: &SimConfig,
    solver: &SolverConfig,
    v: f64,
    n: usize,
    trial: usize,
) -> TrialRecord {
    let outcome = generate_mcs(config, v, n, trial_seed(config.seed, v, n, trial)).and_then(|s| {
        let ne = nash_equilibrium(&s, solver)?;
        let se = social_optimum(&s, solver)?;
        Ok((ne.welfare, se.welfare))
    });
    TrialRecord {
        reward_level: v,
        n_users: n,
        trial,
        welfare: outcome.ok(),
    }
}

/// Runs every (reward level, user count) cell. Trials are independent and
/// aggregated in a fixed order, so results do not depend on scheduling.
pub fn run_simulation(config: &SimConfig) -> Result<SimResult> {
    run_simulation_with(config, &harness_solver())
}

pub fn run_simulation_with(config: &SimConfig, solver: &SolverConfig) -> Result<SimResult> {
    config.validate()?;
    let mut trials = Vec::new();
    let mut cells = Vec::new();
    for &v in &config.reward_levels {
        let first = cells.len();
        for &n in &config.user_counts {
            let records: Vec<TrialRecord> = (0..config.trials_per_cell)
                .map(|t| run_trial(config, solver, v, n, t))
                .collect();
            let ok: Vec<(f64, f64)> = records.iter().filter_map(|r| r.welfare).collect();
            let k = ok.len() as f64;
            let (ne, se) = if ok.is_empty() {
                (f64::NAN, f64::NAN)
            } else {
                (
                    ok.iter().map(|w| w.0).sum::<f64>() / k,
                    ok.iter().map(|w| w.1).sum::<f64>() / k,
                )
            };
            cells.push(CellResult {
                reward_level: v,
                n_users: n,
                trials: ok.len(),
                failed: records.len() - ok.len(),
                ne_welfare: ne,
                se_welfare: se,
                gain: gain_ratio(ne, se),
                ne_normalized: f64::NAN,
                se_normalized: f64::NAN,
            });
            trials.extend(records);
        }
        let top = cells[first..]
            .iter()
            .map(|c| c.se_welfare)
            .filter(|x| x.is_finite())
            .fold(f64::NEG_INFINITY, f64::max);
        for c in &mut cells[first..] {
            if top > 0.0 {
                c.ne_normalized = c.ne_welfare / top;
                c.se_normalized = c.se_welfare / top;
            }
        }
    }
    Ok(SimResult { cells, trials })
}
