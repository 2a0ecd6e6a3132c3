//! Equilibria and welfare optima of the task selection game.
//!
//! A user's best response is a prize-collecting route with time windows and
//! a budget. Given the other users' selections every task has a fixed
//! marginal value for the deciding user, so the best response is found by
//! depth-first branch and bound over ordered task sequences.

use serde::{Deserialize, Serialize};

use super::{McsProfile, McsScenario, OrderedSelection, Point, TaskId};
use crate::error::{Error, Result};
use crate::mechanism::{BudgetPlan, TaxingRule};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Largest number of candidate tasks an exact best response will search.
    pub max_subset_size: usize,
    pub max_br_rounds: usize,
    pub tolerance: f64,
    /// Largest joint profile count enumerated in exhaustive mode.
    pub brute_force_cap: usize,
    /// Search unordered subsets only (ascending task id). Exact whenever
    /// [`McsScenario::is_order_free`] holds.
    pub order_free: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_subset_size: 10,
            max_br_rounds: 1000,
            tolerance: 1e-9,
            brute_force_cap: 1_000_000,
            order_free: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_subset_size == 0 || self.max_br_rounds == 0 || self.brute_force_cap == 0 {
            return Err(Error::Domain("solver caps must be positive".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Domain("solver tolerance must be > 0".into()));
        }
        Ok(())
    }
}

/// What a best response maximizes.
#[derive(Debug, Clone, PartialEq)]
pub enum Objective {
    OwnPayoff,
    SocialWelfare,
    /// The user's payoff after taxation.
    Taxed {
        rule: TaxingRule,
        plan: BudgetPlan,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    BestResponseDynamics,
    Exhaustive,
    /// Per-task decomposition; exact for separable scenarios.
    Separable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumReport {
    pub profile: McsProfile,
    pub payoffs: Vec<f64>,
    pub welfare: f64,
    pub potential: f64,
    pub converged: bool,
    /// Passes of the dynamics in which at least one user moved.
    pub rounds: usize,
    pub method: Method,
    /// Objective value after every improving step, starting from the
    /// initial profile: the potential for equilibria, welfare for optima.
    pub trace: Vec<f64>,
    /// Number of maximizers found, exhaustive mode only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimal_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub taxed_payoffs: Option<Vec<f64>>,
}

impl EquilibriumReport {
    fn build(
        scn: &McsScenario,
        profile: McsProfile,
        method: Method,
        dynamics: &Dynamics,
    ) -> Result<Self> {
        Ok(EquilibriumReport {
            payoffs: scn.user_payoffs(&profile)?,
            welfare: scn.social_welfare(&profile)?,
            potential: scn.potential(&profile)?,
            profile,
            converged: dynamics.converged,
            rounds: dynamics.rounds,
            method,
            trace: dynamics.trace.clone(),
            optimal_count: None,
            taxed_payoffs: None,
        })
    }

    /// Header plus one line: `welfare,potential,rounds`.
    pub fn csv_summary(&self) -> String {
        format!(
            "welfare,potential,rounds\n{},{},{}\n",
            self.welfare, self.potential, self.rounds
        )
    }
}

#[derive(Debug, Clone)]
struct Candidate {
    id: TaskId,
    gain: f64,
    exec_time: f64,
    exec_cost: f64,
    location: Point,
    open: f64,
    close: f64,
}

/// Marginal task values for `user` given everyone else, plus the weight on
/// the user's own costs.
fn candidates(
    scn: &McsScenario,
    profile: &McsProfile,
    user: usize,
    objective: &Objective,
    tol: f64,
) -> Result<(Vec<Candidate>, f64)> {
    let n_tasks = scn.tasks().len();
    let mut others = vec![0usize; n_tasks];
    let mut holder_rates = vec![0.0; n_tasks];
    let rates = match objective {
        Objective::Taxed { rule, .. } => {
            if rule.n_players() != scn.n_users() {
                return Err(Error::Dimension {
                    what: "taxing rule players",
                    expected: scn.n_users(),
                    got: rule.n_players(),
                });
            }
            Some(rule.rates())
        }
        _ => None,
    };
    for (j, sel) in profile.0.iter().enumerate() {
        if j == user {
            continue;
        }
        for pos in scn.resolve(j, sel)? {
            others[pos] += 1;
            if let Some(r) = rates {
                holder_rates[pos] += r[j];
            }
        }
    }
    let cost_weight = match objective {
        Objective::Taxed { rule, .. } => 1.0 - rule.rates()[user],
        _ => 1.0,
    };
    let budget = scn.users()[user].resource_budget;
    let mut out = Vec::new();
    for (&id, a) in scn.avail(user) {
        let task = &scn.tasks()[a.pos];
        let v = task.reward;
        let m = others[a.pos] as f64;
        let value = match objective {
            Objective::OwnPayoff => v / (m + 1.0),
            Objective::SocialWelfare => {
                if m == 0.0 {
                    v
                } else {
                    0.0
                }
            }
            Objective::Taxed { rule, plan } => {
                let own = (1.0 - rule.rates()[user]) * v / (m + 1.0);
                if m == 0.0 {
                    own
                } else {
                    let a_share = plan.beta() / (scn.n_users() - 1) as f64;
                    own - a_share * holder_rates[a.pos] * (v / m - v / (m + 1.0))
                }
            }
        };
        let gain = value - cost_weight * a.exec_cost;
        // Non-positive tasks never help: they add cost, time and distance.
        if gain > tol && a.exec_cost <= budget {
            out.push(Candidate {
                id,
                gain,
                exec_time: a.exec_time,
                exec_cost: a.exec_cost,
                location: task.location,
                open: task.window_open,
                close: task.window_close,
            });
        }
    }
    Ok((out, cost_weight))
}

struct Search<'a> {
    cands: &'a [Candidate],
    speed: f64,
    travel_weight: f64,
    budget: f64,
    order_free: bool,
    tol: f64,
    used: Vec<bool>,
    seq: Vec<usize>,
    best_value: f64,
    best_seq: Vec<usize>,
}

impl Search<'_> {
    fn run(&mut self, ready: f64, here: Point, spent: f64, value: f64, from: usize) {
        // Sequences are visited in lexicographic id order, so the first
        // maximizer found is the canonical one.
        if value > self.best_value + self.tol {
            self.best_value = value;
            self.best_seq = self.seq.clone();
        }
        let lo = if self.order_free { from } else { 0 };
        let optimistic: f64 = (lo..self.cands.len())
            .filter(|&c| !self.used[c])
            .map(|c| self.cands[c].gain)
            .sum();
        if value + optimistic <= self.best_value + self.tol {
            return;
        }
        for c in lo..self.cands.len() {
            if self.used[c] {
                continue;
            }
            let cand = &self.cands[c];
            if spent + cand.exec_cost > self.budget {
                continue;
            }
            let dist = here.distance(&cand.location);
            let start = (ready + dist / self.speed).max(cand.open);
            if start > cand.close {
                continue;
            }
            self.used[c] = true;
            self.seq.push(c);
            self.run(
                start + cand.exec_time,
                cand.location,
                spent + cand.exec_cost,
                value + cand.gain - self.travel_weight * dist,
                c + 1,
            );
            self.seq.pop();
            self.used[c] = false;
        }
    }
}

/// Exact best response of `user` to the other selections in `profile`
/// (the user's own entry is ignored).
///
/// Ties are broken towards the lexicographically smallest id sequence;
/// tasks with non-positive marginal gain are never selected.
pub fn best_response(
    scn: &McsScenario,
    profile: &McsProfile,
    user: usize,
    objective: &Objective,
    config: &SolverConfig,
) -> Result<OrderedSelection> {
    if profile.n_users() != scn.n_users() {
        return Err(Error::Dimension {
            what: "profile users",
            expected: scn.n_users(),
            got: profile.n_users(),
        });
    }
    if user >= scn.n_users() {
        return Err(Error::UnknownId {
            kind: "user",
            id: user,
        });
    }
    let (cands, cost_weight) = candidates(scn, profile, user, objective, config.tolerance)?;
    if cands.len() > config.max_subset_size {
        return Err(Error::TooLarge {
            what: "best-response candidate tasks",
            size: cands.len(),
            cap: config.max_subset_size,
        });
    }
    let u = &scn.users()[user];
    let mut search = Search {
        cands: &cands,
        speed: u.speed,
        travel_weight: cost_weight * u.travel_cost_rate,
        budget: u.resource_budget,
        order_free: config.order_free,
        tol: config.tolerance,
        used: vec![false; cands.len()],
        seq: Vec::new(),
        best_value: f64::NEG_INFINITY,
        best_seq: Vec::new(),
    };
    search.run(0.0, u.initial_location, 0.0, 0.0, 0);
    Ok(OrderedSelection(
        search.best_seq.iter().map(|&c| cands[c].id).collect(),
    ))
}

/// Value of `objective` for `user` at `profile`.
pub fn objective_value(
    scn: &McsScenario,
    profile: &McsProfile,
    user: usize,
    objective: &Objective,
) -> Result<f64> {
    match objective {
        Objective::OwnPayoff => scn.user_payoff(profile, user),
        Objective::SocialWelfare => scn.social_welfare(profile),
        Objective::Taxed { rule, plan } => {
            Ok(scn.tax_breakdown(profile, rule, *plan)?.taxed_payoffs[user])
        }
    }
}

/// First user (by index) whose exact best response improves `objective` by
/// more than the tolerance, with the improving selection and the gain.
pub fn improving_deviation(
    scn: &McsScenario,
    profile: &McsProfile,
    objective: &Objective,
    config: &SolverConfig,
) -> Result<Option<(usize, OrderedSelection, f64)>> {
    for user in 0..scn.n_users() {
        let br = best_response(scn, profile, user, objective, config)?;
        if &br == profile.selection(user) {
            continue;
        }
        let now = objective_value(scn, profile, user, objective)?;
        let then = objective_value(
            scn,
            &profile.with_selection(user, br.clone()),
            user,
            objective,
        )?;
        if then > now + config.tolerance {
            return Ok(Some((user, br, then - now)));
        }
    }
    Ok(None)
}

#[derive(Debug, Clone)]
struct Dynamics {
    profile: McsProfile,
    converged: bool,
    rounds: usize,
    trace: Vec<f64>,
}

fn trace_value(scn: &McsScenario, profile: &McsProfile, objective: &Objective) -> Result<f64> {
    match objective {
        Objective::SocialWelfare => scn.social_welfare(profile),
        _ => scn.potential(profile),
    }
}

/// Round-robin best-response dynamics from the all-empty profile.
fn dynamics(scn: &McsScenario, objective: &Objective, config: &SolverConfig) -> Result<Dynamics> {
    config.validate()?;
    let mut profile = McsProfile::empty(scn.n_users());
    let mut trace = vec![trace_value(scn, &profile, objective)?];
    let mut rounds = 0;
    for _ in 0..config.max_br_rounds {
        let mut moved = false;
        for user in 0..scn.n_users() {
            let br = best_response(scn, &profile, user, objective, config)?;
            if &br == profile.selection(user) {
                continue;
            }
            let candidate = profile.with_selection(user, br);
            let now = objective_value(scn, &profile, user, objective)?;
            let then = objective_value(scn, &candidate, user, objective)?;
            if then > now + config.tolerance {
                profile = candidate;
                trace.push(trace_value(scn, &profile, objective)?);
                moved = true;
            }
        }
        if !moved {
            return Ok(Dynamics {
                profile,
                converged: true,
                rounds,
                trace,
            });
        }
        rounds += 1;
    }
    Ok(Dynamics {
        profile,
        converged: false,
        rounds,
        trace,
    })
}

/// Every feasible selection of `user` in lexicographic order, failing once
/// more than `limit` exist.
pub fn feasible_selections(
    scn: &McsScenario,
    user: usize,
    order_free: bool,
    limit: usize,
) -> Result<Vec<OrderedSelection>> {
    struct Enum<'a> {
        scn: &'a McsScenario,
        ids: Vec<TaskId>,
        user: usize,
        order_free: bool,
        limit: usize,
        seq: Vec<TaskId>,
        used: Vec<bool>,
        out: Vec<OrderedSelection>,
    }
    impl Enum<'_> {
        fn go(&mut self, ready: f64, here: Point, spent: f64, from: usize) -> Result<()> {
            self.out.push(OrderedSelection(self.seq.clone()));
            if self.out.len() > self.limit {
                return Err(Error::TooLarge {
                    what: "feasible selections of one user",
                    size: self.out.len(),
                    cap: self.limit,
                });
            }
            let u = &self.scn.users()[self.user];
            let lo = if self.order_free { from } else { 0 };
            for c in lo..self.ids.len() {
                if self.used[c] {
                    continue;
                }
                let id = self.ids[c];
                let a = self.scn.avail(self.user)[&id];
                let t = &self.scn.tasks()[a.pos];
                if spent + a.exec_cost > u.resource_budget {
                    continue;
                }
                let start = (ready + here.distance(&t.location) / u.speed).max(t.window_open);
                if start > t.window_close {
                    continue;
                }
                self.used[c] = true;
                self.seq.push(id);
                self.go(start + a.exec_time, t.location, spent + a.exec_cost, c + 1)?;
                self.seq.pop();
                self.used[c] = false;
            }
            Ok(())
        }
    }
    let ids = scn.available_ids(user);
    let mut e = Enum {
        scn,
        used: vec![false; ids.len()],
        ids,
        user,
        order_free,
        limit,
        seq: Vec::new(),
        out: Vec::new(),
    };
    let start = scn.users()[user].initial_location;
    e.go(0.0, start, 0.0, 0)?;
    Ok(e.out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Target {
    Potential,
    Welfare,
}

struct Exhaustive {
    profile: McsProfile,
    count: usize,
}

/// Maximizes the potential or welfare over all joint feasible profiles.
fn exhaustive(scn: &McsScenario, target: Target, config: &SolverConfig) -> Result<Exhaustive> {
    let cap = config.brute_force_cap;
    let mut per_user = Vec::with_capacity(scn.n_users());
    let mut size: usize = 1;
    for user in 0..scn.n_users() {
        let sels = feasible_selections(scn, user, config.order_free, cap)?;
        size = size.saturating_mul(sels.len());
        if size > cap {
            return Err(Error::TooLarge {
                what: "joint profile count",
                size,
                cap,
            });
        }
        // Precompute task positions and own cost of each selection.
        let u = &scn.users()[user];
        let mut rows = Vec::with_capacity(sels.len());
        for sel in sels {
            let positions = scn.resolve(user, &sel)?;
            let cost = sel
                .tasks()
                .iter()
                .map(|id| scn.avail(user)[id].exec_cost)
                .sum::<f64>()
                + scn.route_length(user, &sel)? * u.travel_cost_rate;
            rows.push((sel, positions, cost));
        }
        per_user.push(rows);
    }

    let n_tasks = scn.tasks().len();
    let mut digits = vec![0usize; scn.n_users()];
    let mut counts = vec![0usize; n_tasks];
    let mut best = f64::NEG_INFINITY;
    let mut best_digits = digits.clone();
    let mut count = 0;
    loop {
        counts.iter_mut().for_each(|c| *c = 0);
        let mut cost = 0.0;
        for (u, &d) in digits.iter().enumerate() {
            let (_, positions, c) = &per_user[u][d];
            cost += c;
            for &p in positions {
                counts[p] += 1;
            }
        }
        let reward: f64 = scn
            .tasks()
            .iter()
            .zip(&counts)
            .map(|(t, &m)| match target {
                Target::Welfare => {
                    if m > 0 {
                        t.reward
                    } else {
                        0.0
                    }
                }
                Target::Potential => (1..=m).map(|j| t.reward / j as f64).sum(),
            })
            .sum();
        let value = reward - cost;
        if value > best + config.tolerance {
            best = value;
            best_digits.clone_from(&digits);
            count = 1;
        } else if (value - best).abs() <= config.tolerance {
            count += 1;
        }

        // Mixed-radix increment, last user fastest.
        let mut u = scn.n_users();
        loop {
            if u == 0 {
                let profile = McsProfile(
                    best_digits
                        .iter()
                        .enumerate()
                        .map(|(u, &d)| per_user[u][d].0.clone())
                        .collect(),
                );
                return Ok(Exhaustive { profile, count });
            }
            u -= 1;
            digits[u] += 1;
            if digits[u] < per_user[u].len() {
                break;
            }
            digits[u] = 0;
        }
    }
}

/// Welfare optimum of a separable scenario: every task goes to its cheapest
/// user (lowest index on ties) when that user's cost is below the reward.
fn separable_optimum(scn: &McsScenario, config: &SolverConfig) -> McsProfile {
    let mut selections = vec![Vec::new(); scn.n_users()];
    for task in scn.tasks() {
        let mut best: Option<(usize, f64)> = None;
        for user in 0..scn.n_users() {
            if let Some(e) = scn.execution(user, task.id) {
                if best.map_or(true, |(_, c)| e.exec_cost < c) {
                    best = Some((user, e.exec_cost));
                }
            }
        }
        if let Some((user, cost)) = best {
            if task.reward - cost > config.tolerance {
                selections[user].push(task.id);
            }
        }
    }
    for s in &mut selections {
        s.sort_unstable();
    }
    McsProfile::from_ids(selections)
}

/// A pure equilibrium via best-response dynamics on own payoffs from the
/// empty profile, falling back to exhaustive potential maximization if the
/// dynamics hit the round cap.
pub fn nash_equilibrium(scn: &McsScenario, config: &SolverConfig) -> Result<EquilibriumReport> {
    let dyn_ = dynamics(scn, &Objective::OwnPayoff, config)?;
    if dyn_.converged {
        return EquilibriumReport::build(
            scn,
            dyn_.profile.clone(),
            Method::BestResponseDynamics,
            &dyn_,
        );
    }
    match exhaustive(scn, Target::Potential, config) {
        Ok(ex) => {
            let fixed = Dynamics {
                converged: true,
                ..dyn_
            };
            let mut report = EquilibriumReport::build(scn, ex.profile, Method::Exhaustive, &fixed)?;
            report.optimal_count = Some(ex.count);
            Ok(report)
        }
        Err(Error::TooLarge { .. }) => EquilibriumReport::build(
            scn,
            dyn_.profile.clone(),
            Method::BestResponseDynamics,
            &dyn_,
        ),
        Err(e) => Err(e),
    }
}

/// Maximizes a user's potential over all joint profiles; every maximizer
/// is an equilibrium.
pub fn potential_maximizer(scn: &McsScenario, config: &SolverConfig) -> Result<EquilibriumReport> {
    let ex = exhaustive(scn, Target::Potential, config)?;
    let none = Dynamics {
        profile: ex.profile.clone(),
        converged: true,
        rounds: 0,
        trace: Vec::new(),
    };
    let mut report = EquilibriumReport::build(scn, ex.profile, Method::Exhaustive, &none)?;
    report.optimal_count = Some(ex.count);
    Ok(report)
}

/// Welfare-maximizing profile.
///
/// Runs best-response dynamics on welfare (each user maximizing its taxed
/// payoff, an equal welfare share under the efficient rule), then upgrades
/// to the exact optimum by exhaustive search when within the cap, or by
/// per-task decomposition when the scenario is separable.
pub fn social_optimum(scn: &McsScenario, config: &SolverConfig) -> Result<EquilibriumReport> {
    let dyn_ = dynamics(scn, &Objective::SocialWelfare, config)?;
    let mut report = match exhaustive(scn, Target::Welfare, config) {
        Ok(ex) => {
            let mut r = EquilibriumReport::build(scn, ex.profile, Method::Exhaustive, &dyn_)?;
            r.optimal_count = Some(ex.count);
            r
        }
        Err(Error::TooLarge { .. }) if scn.is_separable() => {
            let profile = separable_optimum(scn, config);
            EquilibriumReport::build(scn, profile, Method::Separable, &dyn_)?
        }
        Err(Error::TooLarge { .. }) => EquilibriumReport::build(
            scn,
            dyn_.profile.clone(),
            Method::BestResponseDynamics,
            &dyn_,
        )?,
        Err(e) => return Err(e),
    };
    report.taxed_payoffs = Some(vec![report.welfare / scn.n_users() as f64; scn.n_users()]);
    Ok(report)
}

/// Equilibrium of the taxed game under an arbitrary taxing rule.
///
/// The efficient flat rate aligns every user with welfare, so that case is
/// delegated to [`social_optimum`]; other rules run best-response dynamics
/// on taxed payoffs, which need not converge.
pub fn taxed_equilibrium(
    scn: &McsScenario,
    rule: &TaxingRule,
    plan: BudgetPlan,
    config: &SolverConfig,
) -> Result<EquilibriumReport> {
    if rule.n_players() != scn.n_users() {
        return Err(Error::Dimension {
            what: "taxing rule players",
            expected: scn.n_users(),
            got: rule.n_players(),
        });
    }
    let mut report = if rule.is_efficient(plan) {
        social_optimum(scn, config)?
    } else {
        let objective = Objective::Taxed {
            rule: rule.clone(),
            plan,
        };
        let dyn_ = dynamics(scn, &objective, config)?;
        EquilibriumReport::build(
            scn,
            dyn_.profile.clone(),
            Method::BestResponseDynamics,
            &dyn_,
        )?
    };
    report.taxed_payoffs = Some(
        scn.tax_breakdown(&report.profile, rule, plan)?
            .taxed_payoffs,
    );
    Ok(report)
}
