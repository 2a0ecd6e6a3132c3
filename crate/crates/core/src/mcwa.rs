//! Channel selection and power allocation game.
//!
//! Each user spreads a power budget over its available channels and earns
//! the Shannon capacity of those channels under the interference of the
//! other users. Best responses are water-filling; equilibria are sought by
//! iterative water-filling and welfare optima by multistart projected
//! gradient ascent.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{schema, Error, Result};
use crate::mechanism::{taxed_payoffs, BudgetPlan, TaxingRule};

/// Powers at or below this count as zero.
pub const POWER_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSpec {
    pub id: usize,
    pub bandwidth: f64,
    pub noise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McwaUser {
    pub power_budget: f64,
    /// Channel ids the user may transmit on.
    pub available: Vec<usize>,
}

fn default_log_base() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScenarioRepr", into = "ScenarioRepr")]
pub struct McwaScenario {
    users: Vec<McwaUser>,
    channels: Vec<ChannelSpec>,
    gains: Vec<Vec<Vec<f64>>>,
    log_base: f64,
    /// `mask[i][k]`: channel position `k` is available to user `i`.
    mask: Vec<Vec<bool>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioRepr {
    users: Vec<McwaUser>,
    channels: Vec<ChannelSpec>,
    /// `gains[receiver][transmitter][channel]`.
    gains: Vec<Vec<Vec<f64>>>,
    #[serde(default = "default_log_base")]
    log_base: f64,
}

impl TryFrom<ScenarioRepr> for McwaScenario {
    type Error = Error;
    fn try_from(r: ScenarioRepr) -> Result<Self> {
        McwaScenario::new(r.users, r.channels, r.gains, r.log_base)
    }
}

impl From<McwaScenario> for ScenarioRepr {
    fn from(s: McwaScenario) -> Self {
        ScenarioRepr {
            users: s.users,
            channels: s.channels,
            gains: s.gains,
            log_base: s.log_base,
        }
    }
}

impl McwaScenario {
    /// `gains[j][i][k]` is the gain from transmitter `i` to receiver `j` on
    /// the channel at position `k`.
    pub fn new(
        users: Vec<McwaUser>,
        channels: Vec<ChannelSpec>,
        gains: Vec<Vec<Vec<f64>>>,
        log_base: f64,
    ) -> Result<Self> {
        if users.is_empty() {
            return Err(schema("users", "at least one user is required"));
        }
        if channels.is_empty() {
            return Err(schema("channels", "at least one channel is required"));
        }
        if !(log_base.is_finite() && log_base > 1.0) {
            return Err(schema("log_base", "must be finite and > 1"));
        }
        let mut pos = HashMap::new();
        for (k, c) in channels.iter().enumerate() {
            if pos.insert(c.id, k).is_some() {
                return Err(schema(
                    format!("channels[{k}].id"),
                    "channel ids must be unique",
                ));
            }
            if !(c.bandwidth.is_finite() && c.bandwidth > 0.0) {
                return Err(schema(
                    format!("channels[{k}].bandwidth"),
                    "must be finite and > 0",
                ));
            }
            if !(c.noise.is_finite() && c.noise > 0.0) {
                return Err(schema(
                    format!("channels[{k}].noise"),
                    "must be finite and > 0",
                ));
            }
        }
        let (n, kc) = (users.len(), channels.len());
        if gains.len() != n {
            return Err(Error::Dimension {
                what: "gain receivers",
                expected: n,
                got: gains.len(),
            });
        }
        for (j, row) in gains.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Dimension {
                    what: "gain transmitters",
                    expected: n,
                    got: row.len(),
                });
            }
            for (i, per_channel) in row.iter().enumerate() {
                if per_channel.len() != kc {
                    return Err(Error::Dimension {
                        what: "gain channels",
                        expected: kc,
                        got: per_channel.len(),
                    });
                }
                for (k, g) in per_channel.iter().enumerate() {
                    if !(g.is_finite() && *g >= 0.0) {
                        return Err(schema(
                            format!("gains[{j}][{i}][{k}]"),
                            "must be finite and >= 0",
                        ));
                    }
                }
            }
        }
        let mut mask = vec![vec![false; kc]; n];
        for (i, u) in users.iter().enumerate() {
            if !(u.power_budget.is_finite() && u.power_budget > 0.0) {
                return Err(schema(
                    format!("users[{i}].power_budget"),
                    "must be finite and > 0",
                ));
            }
            for &id in &u.available {
                let k = *pos.get(&id).ok_or(Error::UnknownId {
                    kind: "channel",
                    id,
                })?;
                if mask[i][k] {
                    return Err(schema(
                        format!("users[{i}].available"),
                        "channel ids must be unique",
                    ));
                }
                if gains[i][i][k] <= 0.0 {
                    return Err(schema(
                        format!("gains[{i}][{i}][{k}]"),
                        "direct gain must be > 0 on available channels",
                    ));
                }
                mask[i][k] = true;
            }
        }
        Ok(McwaScenario {
            users,
            channels,
            gains,
            log_base,
            mask,
        })
    }

    pub fn users(&self) -> &[McwaUser] {
        &self.users
    }

    pub fn channels(&self) -> &[ChannelSpec] {
        &self.channels
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn log_base(&self) -> f64 {
        self.log_base
    }

    /// Gain from transmitter `tx` to receiver `rx` on channel position `k`.
    pub fn gain(&self, rx: usize, tx: usize, k: usize) -> f64 {
        self.gains[rx][tx][k]
    }

    pub fn gains(&self) -> &[Vec<Vec<f64>>] {
        &self.gains
    }

    pub fn is_available(&self, user: usize, k: usize) -> bool {
        self.mask[user][k]
    }

    /// Copy with a different capacity logarithm base.
    pub fn with_log_base(&self, log_base: f64) -> Result<Self> {
        McwaScenario::new(
            self.users.clone(),
            self.channels.clone(),
            self.gains.clone(),
            log_base,
        )
    }

    /// Copy with one gain replaced.
    pub fn with_gain(&self, rx: usize, tx: usize, k: usize, value: f64) -> Result<Self> {
        let mut gains = self.gains.clone();
        gains[rx][tx][k] = value;
        McwaScenario::new(
            self.users.clone(),
            self.channels.clone(),
            gains,
            self.log_base,
        )
    }

    fn check(&self, alloc: &PowerAllocation) -> Result<()> {
        if alloc.p.len() != self.n_users() {
            return Err(Error::Dimension {
                what: "allocation users",
                expected: self.n_users(),
                got: alloc.p.len(),
            });
        }
        for row in &alloc.p {
            if row.len() != self.n_channels() {
                return Err(Error::Dimension {
                    what: "allocation channels",
                    expected: self.n_channels(),
                    got: row.len(),
                });
            }
        }
        Ok(())
    }
}

/// Transmit powers, `p[user][channel position]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PowerAllocation {
    pub p: Vec<Vec<f64>>,
}

impl PowerAllocation {
    pub fn zeros(n_users: usize, n_channels: usize) -> Self {
        PowerAllocation {
            p: vec![vec![0.0; n_channels]; n_users],
        }
    }

    /// Channel positions with positive power.
    pub fn selection(&self, user: usize) -> Vec<usize> {
        self.p[user]
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > POWER_EPS)
            .map(|(k, _)| k)
            .collect()
    }

    pub fn spend(&self, user: usize) -> f64 {
        self.p[user].iter().sum()
    }

    /// Checks non-negativity, availability and budgets.
    pub fn validate(&self, scn: &McwaScenario, tolerance: f64) -> Result<()> {
        scn.check(self)?;
        for (i, row) in self.p.iter().enumerate() {
            for (k, &p) in row.iter().enumerate() {
                if !(p.is_finite() && p >= 0.0) {
                    return Err(schema(format!("p[{i}][{k}]"), "must be finite and >= 0"));
                }
                if p > 0.0 && !scn.is_available(i, k) {
                    return Err(schema(
                        format!("p[{i}][{k}]"),
                        "power on an unavailable channel",
                    ));
                }
            }
            if self.spend(i) > scn.users[i].power_budget + tolerance {
                return Err(schema(format!("p[{i}]"), "total power exceeds the budget"));
            }
        }
        Ok(())
    }
}

/// Noise plus interference seen by `user` on every channel.
pub fn interference(scn: &McwaScenario, alloc: &PowerAllocation, user: usize) -> Vec<f64> {
    (0..scn.n_channels())
        .map(|k| {
            scn.channels[k].noise
                + (0..scn.n_users())
                    .filter(|&j| j != user)
                    .map(|j| scn.gains[user][j][k] * alloc.p[j][k])
                    .sum::<f64>()
        })
        .collect()
}

pub fn user_capacity(scn: &McwaScenario, alloc: &PowerAllocation, user: usize) -> Result<f64> {
    scn.check(alloc)?;
    let i_k = interference(scn, alloc, user);
    Ok((0..scn.n_channels())
        .filter(|&k| alloc.p[user][k] > 0.0)
        .map(|k| {
            let sinr = scn.gains[user][user][k] * alloc.p[user][k] / i_k[k];
            scn.channels[k].bandwidth * sinr.ln_1p() / scn.log_base.ln()
        })
        .sum())
}

pub fn capacities(scn: &McwaScenario, alloc: &PowerAllocation) -> Result<Vec<f64>> {
    (0..scn.n_users())
        .map(|i| user_capacity(scn, alloc, i))
        .collect()
}

pub fn social_welfare(scn: &McwaScenario, alloc: &PowerAllocation) -> Result<f64> {
    Ok(capacities(scn, alloc)?.iter().sum())
}

/// Capacity of `user` on every channel, for reporting.
pub fn channel_capacities(
    scn: &McwaScenario,
    alloc: &PowerAllocation,
    user: usize,
) -> Result<Vec<f64>> {
    scn.check(alloc)?;
    let i_k = interference(scn, alloc, user);
    Ok((0..scn.n_channels())
        .map(|k| {
            let sinr = scn.gains[user][user][k] * alloc.p[user][k] / i_k[k];
            scn.channels[k].bandwidth * sinr.ln_1p() / scn.log_base.ln()
        })
        .collect())
}

/// Derivative of `user`'s capacity with respect to its own power on each
/// channel.
pub fn capacity_gradient(
    scn: &McwaScenario,
    alloc: &PowerAllocation,
    user: usize,
) -> Result<Vec<f64>> {
    scn.check(alloc)?;
    let i_k = interference(scn, alloc, user);
    let ln_b = scn.log_base.ln();
    Ok((0..scn.n_channels())
        .map(|k| {
            let g = scn.gains[user][user][k];
            scn.channels[k].bandwidth * g / ((i_k[k] + g * alloc.p[user][k]) * ln_b)
        })
        .collect())
}

/// Gradient of `Σ_j weights[j] · u_j` with respect to every power.
pub fn weighted_gradient(
    scn: &McwaScenario,
    alloc: &PowerAllocation,
    weights: &[f64],
) -> Result<Vec<Vec<f64>>> {
    scn.check(alloc)?;
    let n = scn.n_users();
    if weights.len() != n {
        return Err(Error::Dimension {
            what: "gradient weights",
            expected: n,
            got: weights.len(),
        });
    }
    let ln_b = scn.log_base.ln();
    let ints: Vec<Vec<f64>> = (0..n).map(|j| interference(scn, alloc, j)).collect();
    let mut grad = vec![vec![0.0; scn.n_channels()]; n];
    for k in 0..scn.n_channels() {
        let b = scn.channels[k].bandwidth;
        // d u_j / d I_j for every receiver j.
        let du_di: Vec<f64> = (0..n)
            .map(|j| {
                let (g, p, i) = (scn.gains[j][j][k], alloc.p[j][k], ints[j][k]);
                -b * g * p / (i * (i + g * p) * ln_b)
            })
            .collect();
        for t in 0..n {
            let (g, i) = (scn.gains[t][t][k], ints[t][k]);
            let own = b * g / ((i + g * alloc.p[t][k]) * ln_b);
            let cross: f64 = (0..n)
                .filter(|&j| j != t)
                .map(|j| weights[j] * du_di[j] * scn.gains[j][t][k])
                .sum();
            grad[t][k] = weights[t] * own + cross;
        }
    }
    Ok(grad)
}

pub fn welfare_gradient(scn: &McwaScenario, alloc: &PowerAllocation) -> Result<Vec<Vec<f64>>> {
    weighted_gradient(scn, alloc, &vec![1.0; scn.n_users()])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaterFill {
    /// Power per channel position.
    pub powers: Vec<f64>,
    /// Budget multiplier in natural-log units: the common marginal
    /// `B·g / (I + g·p)` on active channels. Zero when nothing is allocated.
    pub lambda: f64,
}

impl WaterFill {
    /// Worst violation of the water-level conditions: equal marginals on
    /// active channels, no larger marginal on idle available channels.
    /// Relative to `lambda`.
    pub fn kkt_residual(&self, scn: &McwaScenario, user: usize, interference: &[f64]) -> f64 {
        if self.lambda == 0.0 {
            return 0.0;
        }
        let mut worst: f64 = 0.0;
        for k in 0..scn.n_channels() {
            if !scn.is_available(user, k) {
                continue;
            }
            let g = scn.gains[user][user][k];
            let marginal = scn.channels[k].bandwidth * g / (interference[k] + g * self.powers[k]);
            let r = if self.powers[k] > POWER_EPS {
                (marginal - self.lambda).abs()
            } else {
                (marginal - self.lambda).max(0.0)
            };
            worst = worst.max(r / self.lambda);
        }
        worst
    }
}

/// Exact water-filling over weights `b` and floors `f` with total `budget`:
/// maximizes `Σ b_k ln(f_k + p_k)`. Returns powers and the water level
/// `mu = 1 / lambda`.
fn fill(b: &[f64], f: &[f64], budget: f64) -> (Vec<f64>, f64) {
    let mut order: Vec<usize> = (0..b.len()).collect();
    order.sort_by(|&x, &y| (f[x] / b[x]).total_cmp(&(f[y] / b[y])));
    let (mut sum_b, mut sum_f) = (0.0, 0.0);
    let mut mu = 0.0;
    for (m, &k) in order.iter().enumerate() {
        sum_b += b[k];
        sum_f += f[k];
        mu = (budget + sum_f) / sum_b;
        let next = order.get(m + 1).map(|&n| f[n] / b[n]);
        if next.map_or(true, |t| mu <= t) {
            break;
        }
    }
    let p = b
        .iter()
        .zip(f)
        .map(|(&bk, &fk)| {
            let v = bk * mu - fk;
            if v > POWER_EPS {
                v
            } else {
                0.0
            }
        })
        .collect();
    (p, mu)
}

/// Best power allocation of `user` given the noise plus interference on
/// every channel: water-filling over the available channels, spending the
/// whole budget.
pub fn water_fill(scn: &McwaScenario, user: usize, interference: &[f64]) -> Result<WaterFill> {
    if user >= scn.n_users() {
        return Err(Error::UnknownId {
            kind: "user",
            id: user,
        });
    }
    if interference.len() != scn.n_channels() {
        return Err(Error::Dimension {
            what: "interference channels",
            expected: scn.n_channels(),
            got: interference.len(),
        });
    }
    let ks: Vec<usize> = (0..scn.n_channels())
        .filter(|&k| scn.is_available(user, k))
        .collect();
    let mut powers = vec![0.0; scn.n_channels()];
    if ks.is_empty() {
        return Ok(WaterFill {
            powers,
            lambda: 0.0,
        });
    }
    for &k in &ks {
        if !(interference[k].is_finite() && interference[k] > 0.0) {
            return Err(Error::Domain(format!(
                "interference on channel {k} must be finite and > 0"
            )));
        }
    }
    let b: Vec<f64> = ks.iter().map(|&k| scn.channels[k].bandwidth).collect();
    let f: Vec<f64> = ks
        .iter()
        .map(|&k| interference[k] / scn.gains[user][user][k])
        .collect();
    let budget = scn.users[user].power_budget;
    let (p, mu) = fill(&b, &f, budget);
    for (&k, v) in ks.iter().zip(p) {
        powers[k] = v;
    }
    // Remove rounding drift so the budget is met exactly on active channels.
    let spent: f64 = powers.iter().sum();
    if let Some(k) = (0..powers.len()).max_by(|&x, &y| powers[x].total_cmp(&powers[y])) {
        powers[k] = (powers[k] + budget - spent).max(0.0);
    }
    Ok(WaterFill {
        powers,
        lambda: 1.0 / mu,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IwfConfig {
    pub max_rounds: usize,
    pub tolerance: f64,
    /// Step towards the water-filling response, in (0, 1].
    pub damping: f64,
}

impl Default for IwfConfig {
    fn default() -> Self {
        IwfConfig {
            max_rounds: 1000,
            tolerance: 1e-9,
            damping: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IwfResult {
    pub allocation: PowerAllocation,
    pub converged: bool,
    /// Passes that moved some power by at least the tolerance.
    pub rounds: usize,
    /// Largest power change in the last pass; the oscillation amplitude
    /// when not converged.
    pub max_change: f64,
}

/// Round-robin (Gauss-Seidel) water-filling from zero power.
pub fn iterative_water_filling(scn: &McwaScenario, config: &IwfConfig) -> Result<IwfResult> {
    if !(config.damping > 0.0 && config.damping <= 1.0) {
        return Err(Error::Domain("damping must lie in (0, 1]".into()));
    }
    if !(config.tolerance > 0.0) || config.max_rounds == 0 {
        return Err(Error::Domain(
            "tolerance and max_rounds must be positive".into(),
        ));
    }
    let mut alloc = PowerAllocation::zeros(scn.n_users(), scn.n_channels());
    let mut rounds = 0;
    let mut max_change;
    loop {
        max_change = 0.0;
        for i in 0..scn.n_users() {
            let wf = water_fill(scn, i, &interference(scn, &alloc, i))?;
            for (k, target) in wf.powers.into_iter().enumerate() {
                let old = alloc.p[i][k];
                let new = old + config.damping * (target - old);
                max_change = f64::max(max_change, (new - old).abs());
                alloc.p[i][k] = new;
            }
        }
        if max_change < config.tolerance {
            return Ok(IwfResult {
                allocation: alloc,
                converged: true,
                rounds,
                max_change,
            });
        }
        rounds += 1;
        if rounds >= config.max_rounds {
            break;
        }
    }
    Ok(IwfResult {
        allocation: alloc,
        converged: false,
        rounds,
        max_change,
    })
}

/// Euclidean projection onto `{p ≥ 0, p_k = 0 off mask, Σ p ≤ budget}`.
fn project_row(v: &mut [f64], mask: &[bool], budget: f64) {
    for (x, &m) in v.iter_mut().zip(mask) {
        if !m {
            *x = 0.0;
        }
    }
    let clamped: f64 = v.iter().map(|x| x.max(0.0)).sum();
    if clamped <= budget {
        v.iter_mut().for_each(|x| *x = x.max(0.0));
        return;
    }
    // Projection onto the simplex of radius `budget` over the masked entries.
    let mut u: Vec<f64> = v
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&x, _)| x)
        .collect();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (j, &x) in u.iter().enumerate() {
        cum += x;
        let t = (cum - budget) / (j + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        }
    }
    for (x, &m) in v.iter_mut().zip(mask) {
        *x = if m { (*x - theta).max(0.0) } else { 0.0 };
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeConfig {
    /// Random starting points in addition to the structured ones.
    pub restarts: usize,
    pub seed: u64,
    pub max_iters: usize,
    /// Stop when a step moves no power by more than this.
    pub tolerance: f64,
}

impl Default for SeConfig {
    fn default() -> Self {
        SeConfig {
            restarts: 32,
            seed: 0x5eed,
            max_iters: 5000,
            tolerance: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeResult {
    pub allocation: PowerAllocation,
    pub welfare: f64,
    /// True only where the search is provably exhaustive (two users on a
    /// single channel); otherwise the best local optimum found.
    pub global: bool,
    pub starts: usize,
}

/// Projected gradient ascent with Armijo backtracking on
/// `Σ_j weights[j] u_j`, restricted to the users in `free`.
fn ascend(
    scn: &McwaScenario,
    start: PowerAllocation,
    weights: &[f64],
    free: &[usize],
    config: &SeConfig,
) -> Result<(PowerAllocation, f64)> {
    let value = |a: &PowerAllocation| -> Result<f64> {
        Ok(capacities(scn, a)?
            .iter()
            .zip(weights)
            .map(|(u, w)| u * w)
            .sum())
    };
    let mut x = start;
    for &i in free {
        project_row(&mut x.p[i], &scn.mask[i], scn.users[i].power_budget);
    }
    let mut fx = value(&x)?;
    let mut step = 1.0;
    for _ in 0..config.max_iters {
        let g = weighted_gradient(scn, &x, weights)?;
        let mut accepted = None;
        let mut t = step;
        while t > 1e-16 {
            let mut y = x.clone();
            let mut ascent = 0.0;
            for &i in free {
                for k in 0..scn.n_channels() {
                    y.p[i][k] += t * g[i][k];
                }
                project_row(&mut y.p[i], &scn.mask[i], scn.users[i].power_budget);
                for k in 0..scn.n_channels() {
                    ascent += g[i][k] * (y.p[i][k] - x.p[i][k]);
                }
            }
            let fy = value(&y)?;
            if fy >= fx + 1e-4 * ascent {
                accepted = Some((y, fy));
                break;
            }
            t *= 0.5;
        }
        let Some((y, fy)) = accepted else { break };
        let moved = free
            .iter()
            .flat_map(|&i| x.p[i].iter().zip(&y.p[i]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        x = y;
        fx = fy;
        step = (t * 2.0).min(1e6);
        if moved <= config.tolerance {
            break;
        }
    }
    Ok((x, fx))
}

/// Allocation in which only `user` transmits, water-filled against noise.
fn solo(scn: &McwaScenario, user: usize) -> Result<PowerAllocation> {
    let mut a = PowerAllocation::zeros(scn.n_users(), scn.n_channels());
    let noise: Vec<f64> = scn.channels.iter().map(|c| c.noise).collect();
    a.p[user] = water_fill(scn, user, &noise)?.powers;
    Ok(a)
}

fn random_start(scn: &McwaScenario, rng: &mut ChaCha8Rng) -> PowerAllocation {
    let mut a = PowerAllocation::zeros(scn.n_users(), scn.n_channels());
    for i in 0..scn.n_users() {
        let w: Vec<f64> = (0..scn.n_channels())
            .map(|k| {
                if scn.mask[i][k] {
                    -rng.gen::<f64>().max(1e-300).ln()
                } else {
                    0.0
                }
            })
            .collect();
        let total: f64 = w.iter().sum();
        if total > 0.0 {
            let spend = scn.users[i].power_budget * rng.gen::<f64>();
            for k in 0..scn.n_channels() {
                a.p[i][k] = spend * w[k] / total;
            }
        }
    }
    a
}

/// Welfare-maximizing power allocation (best found).
///
/// Multistart projected gradient ascent from the iterative water-filling
/// point, every single-user water-filled allocation and `restarts` seeded
/// random points. With a single channel every on/off corner is also
/// evaluated, which is exhaustive for two users.
pub fn social_optimum(scn: &McwaScenario, config: &SeConfig) -> Result<SeResult> {
    let n = scn.n_users();
    let ones = vec![1.0; n];
    let all: Vec<usize> = (0..n).collect();
    let mut starts = vec![iterative_water_filling(scn, &IwfConfig::default())?.allocation];
    for i in 0..n {
        starts.push(solo(scn, i)?);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for _ in 0..config.restarts {
        starts.push(random_start(scn, &mut rng));
    }
    let mut corners = Vec::new();
    if scn.n_channels() == 1 && n <= 16 {
        for bits in 0u32..(1 << n) {
            let mut a = PowerAllocation::zeros(n, 1);
            for i in 0..n {
                if bits >> i & 1 == 1 && scn.mask[i][0] {
                    a.p[i][0] = scn.users[i].power_budget;
                }
            }
            corners.push(a);
        }
    }
    let n_starts = starts.len() + corners.len();
    let mut best: Option<(PowerAllocation, f64)> = None;
    let mut consider = |a: PowerAllocation, w: f64| {
        if best.as_ref().map_or(true, |(_, bw)| w > *bw) {
            best = Some((a, w));
        }
    };
    for a in corners {
        let w = social_welfare(scn, &a)?;
        consider(a, w);
    }
    for s in starts {
        let (a, w) = ascend(scn, s, &ones, &all, config)?;
        consider(a, w);
    }
    let (allocation, welfare) = best.expect("at least one start");
    Ok(SeResult {
        allocation,
        welfare,
        global: scn.n_channels() == 1 && n == 2,
        starts: n_starts,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaxedOutcome {
    pub allocation: PowerAllocation,
    pub capacities: Vec<f64>,
    pub welfare: f64,
    pub taxed_payoffs: Vec<f64>,
    pub converged: bool,
    pub rounds: usize,
    pub global: bool,
}

/// Outcome of the game taxed at the efficient flat rate with zero
/// exemptions and a balanced budget: the welfare optimum, with every user
/// receiving an equal share of welfare.
pub fn taxed_equilibrium(scn: &McwaScenario, config: &SeConfig) -> Result<TaxedOutcome> {
    let plan = BudgetPlan::balanced();
    let rule = TaxingRule::efficient(vec![0.0; scn.n_users()], plan)?;
    taxed_equilibrium_with(scn, &rule, plan, config, &IwfConfig::default())
}

/// Taxed outcome under an arbitrary rule. The efficient flat rate reduces
/// to the welfare optimum; other rules run round-robin best responses on
/// taxed payoffs, each a projected gradient ascent over the user's powers.
pub fn taxed_equilibrium_with(
    scn: &McwaScenario,
    rule: &TaxingRule,
    plan: BudgetPlan,
    se: &SeConfig,
    iwf: &IwfConfig,
) -> Result<TaxedOutcome> {
    let n = scn.n_users();
    if rule.n_players() != n {
        return Err(Error::Dimension {
            what: "taxing rule players",
            expected: n,
            got: rule.n_players(),
        });
    }
    let (allocation, converged, rounds, global) = if rule.is_efficient(plan) {
        let r = social_optimum(scn, se)?;
        (r.allocation, true, 0, r.global)
    } else {
        let a = plan.beta() / (n - 1) as f64;
        let rates = rule.rates();
        let mut alloc = PowerAllocation::zeros(n, scn.n_channels());
        let mut converged = false;
        let mut rounds = 0;
        while rounds < iwf.max_rounds {
            let mut change: f64 = 0.0;
            for i in 0..n {
                let weights: Vec<f64> = (0..n)
                    .map(|j| if j == i { 1.0 - rates[i] } else { a * rates[j] })
                    .collect();
                let (next, _) = ascend(scn, alloc.clone(), &weights, &[i], se)?;
                for k in 0..scn.n_channels() {
                    change = change.max((next.p[i][k] - alloc.p[i][k]).abs());
                }
                alloc = next;
            }
            if change < iwf.tolerance.max(1e-8) {
                converged = true;
                break;
            }
            rounds += 1;
        }
        (alloc, converged, rounds, false)
    };
    let caps = capacities(scn, &allocation)?;
    let taxed = taxed_payoffs(&caps, rule, plan)?.taxed_payoffs;
    Ok(TaxedOutcome {
        welfare: caps.iter().sum(),
        capacities: caps,
        allocation,
        taxed_payoffs: taxed,
        converged,
        rounds,
        global,
    })
}

/// One row per (user, channel) in `user,channel,power,capacity` order.
pub fn allocation_csv(scn: &McwaScenario, alloc: &PowerAllocation) -> Result<String> {
    let mut out = String::from("user,channel,power,capacity\n");
    for i in 0..scn.n_users() {
        let caps = channel_capacities(scn, alloc, i)?;
        for k in 0..scn.n_channels() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                i, scn.channels[k].id, alloc.p[i][k], caps[k]
            ));
        }
    }
    Ok(out)
}

/// One channel, two users, unit gains everywhere, noise 0.2, budgets 2,
/// capacities in base 10.
pub fn worked_example() -> McwaScenario {
    let users = vec![
        McwaUser {
            power_budget: 2.0,
            available: vec![0],
        };
        2
    ];
    let channels = vec![ChannelSpec {
        id: 0,
        bandwidth: 1.0,
        noise: 0.2,
    }];
    McwaScenario::new(users, channels, vec![vec![vec![1.0]; 2]; 2], 10.0).expect("valid example")
}

/// Random scenario: bandwidths in [0.5, 2], noise in [0.05, 0.5], direct
/// gains in [0.5, 1.5], cross gains in `[0, cross_scale]` times the
/// receiver's direct gain, budgets in [0.5, 3], every channel available.
pub fn random_scenario<R: Rng>(
    rng: &mut R,
    n_users: usize,
    n_channels: usize,
    cross_scale: f64,
) -> Result<McwaScenario> {
    let channels = (0..n_channels)
        .map(|id| ChannelSpec {
            id,
            bandwidth: rng.gen_range(0.5..=2.0),
            noise: rng.gen_range(0.05..=0.5),
        })
        .collect();
    let users = (0..n_users)
        .map(|_| McwaUser {
            power_budget: rng.gen_range(0.5..=3.0),
            available: (0..n_channels).collect(),
        })
        .collect();
    let mut gains = vec![vec![vec![0.0; n_channels]; n_users]; n_users];
    for j in 0..n_users {
        for k in 0..n_channels {
            gains[j][j][k] = rng.gen_range(0.5..=1.5);
        }
    }
    for j in 0..n_users {
        for i in 0..n_users {
            if i != j {
                for k in 0..n_channels {
                    gains[j][i][k] = rng.gen::<f64>() * cross_scale * gains[j][j][k];
                }
            }
        }
    }
    McwaScenario::new(users, channels, gains, 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_channel(cross: f64) -> McwaScenario {
        let users = vec![
            McwaUser {
                power_budget: 1.0,
                available: vec![10, 20],
            };
            2
        ];
        let channels = vec![
            ChannelSpec {
                id: 10,
                bandwidth: 1.0,
                noise: 0.1,
            },
            ChannelSpec {
                id: 20,
                bandwidth: 1.0,
                noise: 0.1,
            },
        ];
        let gains = vec![
            vec![vec![1.0, 1.0], vec![cross, cross]],
            vec![vec![cross, cross], vec![1.0, 1.0]],
        ];
        McwaScenario::new(users, channels, gains, 2.0).unwrap()
    }

    #[test]
    fn worked_example_capacities() {
        let s = worked_example();
        let solo = PowerAllocation {
            p: vec![vec![2.0], vec![0.0]],
        };
        assert!((user_capacity(&s, &solo, 0).unwrap() - 11f64.log10()).abs() < 1e-12);
        assert!((11f64.log10() - 1.0414).abs() < 1e-4);
        let both = PowerAllocation {
            p: vec![vec![2.0], vec![2.0]],
        };
        let each = user_capacity(&s, &both, 0).unwrap();
        assert!((each - (1.0 + 2.0 / 2.2f64).log10()).abs() < 1e-12);
        assert!((each - 0.2810).abs() < 1e-3);
        let zero = PowerAllocation::zeros(2, 1);
        assert_eq!(social_welfare(&s, &zero).unwrap(), 0.0);
    }

    #[test]
    fn single_channel_fill_uses_whole_budget() {
        let s = worked_example();
        for i_k in [0.01, 0.2, 50.0] {
            let wf = water_fill(&s, 0, &[i_k]).unwrap();
            assert_eq!(wf.powers, vec![2.0]);
        }
    }

    #[test]
    fn symmetric_channels_split_evenly() {
        let s = two_channel(0.0);
        let wf = water_fill(&s, 0, &[0.3, 0.3]).unwrap();
        assert!((wf.powers[0] - 0.5).abs() < 1e-12);
        assert!((wf.powers[1] - 0.5).abs() < 1e-12);
        assert!(wf.kkt_residual(&s, 0, &[0.3, 0.3]) < 1e-12);
    }

    #[test]
    fn noisy_channel_left_dry() {
        let s = two_channel(0.0);
        let wf = water_fill(&s, 0, &[0.1, 5.0]).unwrap();
        assert_eq!(wf.powers, vec![1.0, 0.0]);
        assert!(wf.kkt_residual(&s, 0, &[0.1, 5.0]) < 1e-12);
    }

    #[test]
    fn empty_availability_spends_nothing() {
        let mut users = worked_example().users().to_vec();
        users[1].available.clear();
        let s = McwaScenario::new(
            users,
            worked_example().channels().to_vec(),
            vec![vec![vec![1.0]; 2]; 2],
            10.0,
        )
        .unwrap();
        let wf = water_fill(&s, 1, &[0.2]).unwrap();
        assert_eq!(wf.powers, vec![0.0]);
        assert_eq!(wf.lambda, 0.0);
    }

    #[test]
    fn iwf_on_worked_example_is_full_power() {
        let r = iterative_water_filling(&worked_example(), &IwfConfig::default()).unwrap();
        assert!(r.converged);
        assert_eq!(r.allocation.p, vec![vec![2.0], vec![2.0]]);
        let w = social_welfare(&worked_example(), &r.allocation).unwrap();
        assert!((w - 2.0 * (1.0 + 2.0 / 2.2f64).log10()).abs() < 1e-12);
    }

    #[test]
    fn decoupled_iwf_converges_in_one_round() {
        let r = iterative_water_filling(&two_channel(0.0), &IwfConfig::default()).unwrap();
        assert!(r.converged);
        assert_eq!(r.rounds, 1);
    }

    #[test]
    fn se_on_worked_example_is_one_transmitter() {
        let s = worked_example();
        let r = social_optimum(&s, &SeConfig::default()).unwrap();
        assert!(r.global);
        assert!((r.welfare - 11f64.log10()).abs() < 1e-9);
        let t = taxed_equilibrium(&s, &SeConfig::default()).unwrap();
        for p in &t.taxed_payoffs {
            assert!((p - 11f64.log10() / 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn se_matches_iwf_when_decoupled() {
        let s = two_channel(0.0);
        let ne = iterative_water_filling(&s, &IwfConfig::default()).unwrap();
        let se = social_optimum(&s, &SeConfig::default()).unwrap();
        let w = social_welfare(&s, &ne.allocation).unwrap();
        assert!((se.welfare - w).abs() < 1e-9);
    }

    #[test]
    fn projection_lands_on_capped_simplex() {
        let mut v = vec![3.0, -1.0, 1.0, 9.0];
        project_row(&mut v, &[true, true, true, false], 2.0);
        assert_eq!(v, vec![2.0, 0.0, 0.0, 0.0]);
        let mut w = vec![0.2, 0.3];
        project_row(&mut w, &[true, true], 2.0);
        assert_eq!(w, vec![0.2, 0.3]);
        let mut z = vec![1.5, 1.5];
        project_row(&mut z, &[true, true], 2.0);
        assert_eq!(z, vec![1.0, 1.0]);
    }

    #[test]
    fn validation_errors() {
        let c = vec![ChannelSpec {
            id: 0,
            bandwidth: 1.0,
            noise: 0.0,
        }];
        let u = vec![McwaUser {
            power_budget: 1.0,
            available: vec![0],
        }];
        assert!(McwaScenario::new(u.clone(), c, vec![vec![vec![1.0]]], 2.0).is_err());
        let c = worked_example().channels().to_vec();
        assert!(McwaScenario::new(u.clone(), c.clone(), vec![vec![vec![0.0]]], 2.0).is_err());
        assert!(McwaScenario::new(u.clone(), c.clone(), vec![vec![vec![1.0]]], 1.0).is_err());
        let bad = vec![McwaUser {
            power_budget: 1.0,
            available: vec![7],
        }];
        assert!(matches!(
            McwaScenario::new(bad, c.clone(), vec![vec![vec![1.0]]], 2.0),
            Err(Error::UnknownId { .. })
        ));
        let s = McwaScenario::new(u, c, vec![vec![vec![1.0]]], 2.0).unwrap();
        let over = PowerAllocation { p: vec![vec![1.5]] };
        assert!(over.validate(&s, 1e-9).is_err());
    }

    #[test]
    fn json_defaults_log_base() {
        let json = r#"{"users":[{"power_budget":1,"available":[0]}],
            "channels":[{"id":0,"bandwidth":1,"noise":0.1}],"gains":[[[1]]]}"#;
        let s: McwaScenario = serde_json::from_str(json).unwrap();
        assert_eq!(s.log_base(), 2.0);
    }
}
