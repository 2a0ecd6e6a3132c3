use serde::{Deserialize, Serialize};

use super::{McsProfile, McsScenario, OrderedSelection};
use crate::error::{Error, Result};
use crate::mechanism::{taxed_payoffs, BudgetPlan, PayoffGame, TaxBreakdown, TaxingRule};

/// Start time of every selected task under the earliest schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub execution_times: Vec<f64>,
    pub feasible: bool,
}

/// Reward, execution cost and travel cost of one user.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PayoffParts {
    pub reward: f64,
    pub exec_cost: f64,
    pub travel_cost: f64,
}

impl PayoffParts {
    pub fn payoff(&self) -> f64 {
        self.reward - self.exec_cost - self.travel_cost
    }
}

impl McsScenario {
    /// Resolves a selection to task positions, checking availability and
    /// uniqueness.
    pub(crate) fn resolve(&self, user: usize, sel: &OrderedSelection) -> Result<Vec<usize>> {
        self.check_user(user)?;
        let mut out = Vec::with_capacity(sel.len());
        for &id in sel.tasks() {
            let pos = self.task_position(id)?;
            if !self.avail(user).contains_key(&id) {
                return Err(Error::Infeasible {
                    user,
                    reason: format!("task {id} is not available to this user"),
                });
            }
            if out.contains(&pos) {
                return Err(Error::Infeasible {
                    user,
                    reason: format!("task {id} selected twice"),
                });
            }
            out.push(pos);
        }
        Ok(out)
    }

    fn check_user(&self, user: usize) -> Result<()> {
        if user >= self.n_users() {
            return Err(Error::UnknownId {
                kind: "user",
                id: user,
            });
        }
        Ok(())
    }

    /// Greedy earliest schedule: travel straight to each task and wait for
    /// its window to open if early.
    pub fn schedule_earliest(&self, user: usize, sel: &OrderedSelection) -> Result<Schedule> {
        let positions = self.resolve(user, sel)?;
        let u = &self.users()[user];
        let mut times = Vec::with_capacity(positions.len());
        let mut feasible = true;
        let mut ready = 0.0;
        let mut here = u.initial_location;
        for (&pos, &id) in positions.iter().zip(sel.tasks()) {
            let t = &self.tasks()[pos];
            let arrive = ready + here.distance(&t.location) / u.speed;
            let start = arrive.max(t.window_open);
            if start > t.window_close {
                feasible = false;
            }
            times.push(start);
            ready = start + self.avail(user)[&id].exec_time;
            here = t.location;
        }
        Ok(Schedule {
            execution_times: times,
            feasible,
        })
    }

    pub fn is_feasible(&self, user: usize, sel: &OrderedSelection) -> Result<bool> {
        if !self.schedule_earliest(user, sel)?.feasible {
            return Ok(false);
        }
        Ok(self.exec_cost(user, sel) <= self.users()[user].resource_budget)
    }

    fn exec_cost(&self, user: usize, sel: &OrderedSelection) -> f64 {
        sel.tasks()
            .iter()
            .map(|id| self.avail(user)[id].exec_cost)
            .sum()
    }

    /// Route length from the user's start through the selected tasks.
    pub fn route_length(&self, user: usize, sel: &OrderedSelection) -> Result<f64> {
        let positions = self.resolve(user, sel)?;
        let mut here = self.users()[user].initial_location;
        let mut total = 0.0;
        for pos in positions {
            let next = self.tasks()[pos].location;
            total += here.distance(&next);
            here = next;
        }
        Ok(total)
    }

    /// Errors unless the profile has one feasible selection per user.
    pub fn check_profile(&self, profile: &McsProfile) -> Result<()> {
        if profile.n_users() != self.n_users() {
            return Err(Error::Dimension {
                what: "profile users",
                expected: self.n_users(),
                got: profile.n_users(),
            });
        }
        for (i, sel) in profile.0.iter().enumerate() {
            if !self.schedule_earliest(i, sel)?.feasible {
                return Err(Error::Infeasible {
                    user: i,
                    reason: "a time window cannot be met".into(),
                });
            }
            if self.exec_cost(i, sel) > self.users()[i].resource_budget {
                return Err(Error::Infeasible {
                    user: i,
                    reason: "resource budget exceeded".into(),
                });
            }
        }
        Ok(())
    }

    /// Number of users executing each task, indexed like [`Self::tasks`].
    pub fn coverage_counts(&self, profile: &McsProfile) -> Result<Vec<usize>> {
        if profile.n_users() != self.n_users() {
            return Err(Error::Dimension {
                what: "profile users",
                expected: self.n_users(),
                got: profile.n_users(),
            });
        }
        let mut counts = vec![0; self.tasks().len()];
        for (i, sel) in profile.0.iter().enumerate() {
            for pos in self.resolve(i, sel)? {
                counts[pos] += 1;
            }
        }
        Ok(counts)
    }

    /// Payoff components of every user; the profile must be feasible.
    pub fn payoff_parts(&self, profile: &McsProfile) -> Result<Vec<PayoffParts>> {
        self.check_profile(profile)?;
        let counts = self.coverage_counts(profile)?;
        let mut out = Vec::with_capacity(self.n_users());
        for (i, sel) in profile.0.iter().enumerate() {
            let reward = sel
                .tasks()
                .iter()
                .map(|&id| {
                    let pos = self.task_position(id).expect("resolved above");
                    self.tasks()[pos].reward / counts[pos] as f64
                })
                .sum();
            out.push(PayoffParts {
                reward,
                exec_cost: self.exec_cost(i, sel),
                travel_cost: self.route_length(i, sel)? * self.users()[i].travel_cost_rate,
            });
        }
        Ok(out)
    }

    pub fn user_payoff(&self, profile: &McsProfile, user: usize) -> Result<f64> {
        self.check_user(user)?;
        Ok(self.payoff_parts(profile)?[user].payoff())
    }

    pub fn user_payoffs(&self, profile: &McsProfile) -> Result<Vec<f64>> {
        Ok(self
            .payoff_parts(profile)?
            .iter()
            .map(PayoffParts::payoff)
            .collect())
    }

    fn total_cost(&self, profile: &McsProfile) -> Result<f64> {
        Ok(self
            .payoff_parts(profile)?
            .iter()
            .map(|p| p.exec_cost + p.travel_cost)
            .sum())
    }

    /// Exact potential: harmonic-weighted rewards minus all costs.
    pub fn potential(&self, profile: &McsProfile) -> Result<f64> {
        let cost = self.total_cost(profile)?;
        let counts = self.coverage_counts(profile)?;
        let rewards: f64 = self
            .tasks()
            .iter()
            .zip(&counts)
            .map(|(t, &m)| (1..=m).map(|j| t.reward / j as f64).sum::<f64>())
            .sum();
        Ok(rewards - cost)
    }

    /// Rewards of covered tasks minus all costs.
    pub fn social_welfare(&self, profile: &McsProfile) -> Result<f64> {
        let cost = self.total_cost(profile)?;
        let counts = self.coverage_counts(profile)?;
        let rewards: f64 = self
            .tasks()
            .iter()
            .zip(&counts)
            .filter(|(_, &m)| m >= 1)
            .map(|(t, _)| t.reward)
            .sum();
        Ok(rewards - cost)
    }

    /// Payoff of `user` under the balanced efficient rule with zero
    /// exemptions, which is an equal share of welfare.
    pub fn taxed_user_payoff(&self, profile: &McsProfile, user: usize) -> Result<f64> {
        self.check_user(user)?;
        Ok(self.social_welfare(profile)? / self.n_users() as f64)
    }

    /// Tax pipeline applied to the users' payoffs at `profile`.
    pub fn tax_breakdown(
        &self,
        profile: &McsProfile,
        rule: &TaxingRule,
        plan: BudgetPlan,
    ) -> Result<TaxBreakdown> {
        taxed_payoffs(&self.user_payoffs(profile)?, rule, plan)
    }
}

impl PayoffGame for McsScenario {
    type Profile = McsProfile;

    fn n_players(&self) -> usize {
        self.n_users()
    }

    fn payoffs(&self, profile: &McsProfile) -> Result<Vec<f64>> {
        self.user_payoffs(profile)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mcs::{single_task_example, three_user_example, Execution, McsUser, Point, Task};

    fn sel(ids: &[usize]) -> OrderedSelection {
        OrderedSelection(ids.to_vec())
    }

    #[test]
    fn empty_selection_is_feasible() {
        let (s, _) = three_user_example();
        let sch = s.schedule_earliest(0, &sel(&[])).unwrap();
        assert!(sch.feasible);
        assert!(sch.execution_times.is_empty());
        assert!(s.is_feasible(0, &sel(&[])).unwrap());
    }

    #[test]
    fn task_at_own_location_starts_at_zero() {
        let s = single_task_example();
        let sch = s.schedule_earliest(0, &sel(&[1])).unwrap();
        assert_eq!(sch.execution_times, vec![0.0]);
        assert!(sch.feasible);
    }

    #[test]
    fn budget_blocks_expensive_task() {
        let mut users = single_task_example().users().to_vec();
        users[0].resource_budget = 1.0;
        let s = McsScenario::new(single_task_example().tasks().to_vec(), users).unwrap();
        assert!(!s.is_feasible(0, &sel(&[1])).unwrap());
        assert!(s.is_feasible(1, &sel(&[1])).unwrap());
        let zero_budget = McsUser {
            resource_budget: 0.0,
            ..s.users()[0].clone()
        };
        let s =
            McsScenario::new(s.tasks().to_vec(), vec![zero_budget, s.users()[1].clone()]).unwrap();
        assert!(s.is_feasible(0, &sel(&[])).unwrap());
    }

    #[test]
    fn three_user_routes_feasible_and_rewards_match() {
        let (s, p) = three_user_example();
        for i in 0..3 {
            assert!(s.is_feasible(i, p.selection(i)).unwrap(), "user {i}");
        }
        let counts = s.coverage_counts(&p).unwrap();
        let pos3 = s.task_position(3).unwrap();
        for (k, &m) in counts.iter().enumerate() {
            assert_eq!(m, if k == pos3 { 2 } else { 1 });
        }
        let parts = s.payoff_parts(&p).unwrap();
        assert!((parts[0].reward - 4.6).abs() < 1e-12);
        assert!((parts[1].reward - 5.8).abs() < 1e-12);
        assert!((parts[2].reward - 4.8).abs() < 1e-12);
    }

    #[test]
    fn late_task_first_breaks_morning_windows() {
        let (s, _) = three_user_example();
        assert!(!s.is_feasible(0, &sel(&[4, 1, 2, 3])).unwrap());
        assert!(s.is_feasible(0, &sel(&[4])).unwrap());
    }

    #[test]
    fn single_task_welfare_and_potential() {
        let s = single_task_example();
        let both = McsProfile::from_ids(vec![vec![1], vec![1]]);
        let first = McsProfile::from_ids(vec![vec![1], vec![]]);
        assert!((s.social_welfare(&both).unwrap() - 0.3).abs() < 1e-12);
        assert!((s.social_welfare(&first).unwrap() - 5.2).abs() < 1e-12);
        assert!((s.potential(&both).unwrap() - 5.3).abs() < 1e-12);
        assert!((s.taxed_user_payoff(&first, 0).unwrap() - 2.6).abs() < 1e-12);
        let empty = McsProfile::empty(2);
        assert_eq!(s.potential(&empty).unwrap(), 0.0);
        assert_eq!(s.social_welfare(&empty).unwrap(), 0.0);
        assert_eq!(s.user_payoff(&empty, 1).unwrap(), 0.0);
        assert_eq!(s.taxed_user_payoff(&empty, 1).unwrap(), 0.0);
        assert_eq!(s.coverage_counts(&empty).unwrap(), vec![0]);
    }

    #[test]
    fn selection_errors() {
        let (s, _) = three_user_example();
        assert!(matches!(
            s.schedule_earliest(0, &sel(&[42])),
            Err(Error::UnknownId { .. })
        ));
        assert!(matches!(
            s.schedule_earliest(0, &sel(&[7])),
            Err(Error::Infeasible { .. })
        ));
        assert!(matches!(
            s.schedule_earliest(0, &sel(&[1, 1])),
            Err(Error::Infeasible { .. })
        ));
        let bad = McsProfile::from_ids(vec![vec![4, 1], vec![], vec![]]);
        assert!(matches!(
            s.user_payoff(&bad, 0),
            Err(Error::Infeasible { .. })
        ));
    }

    #[test]
    fn scenario_validation() {
        let t = Task {
            id: 0,
            reward: 1.0,
            location: Point::default(),
            window_open: 5.0,
            window_close: 1.0,
        };
        let u = McsUser {
            id: 0,
            initial_location: Point::default(),
            travel_cost_rate: 0.0,
            speed: 1.0,
            resource_budget: f64::INFINITY,
            available: vec![],
        };
        assert!(McsScenario::new(vec![t.clone()], vec![u.clone(), u.clone()]).is_err());
        let t = Task {
            window_close: 6.0,
            ..t
        };
        assert!(McsScenario::new(vec![t.clone()], vec![u.clone()]).is_err());
        let slow = McsUser {
            speed: 0.0,
            ..u.clone()
        };
        assert!(McsScenario::new(vec![t.clone()], vec![u.clone(), slow]).is_err());
        let unknown = McsUser {
            available: vec![Execution {
                task: 9,
                exec_time: 0.0,
                exec_cost: 0.0,
            }],
            ..u.clone()
        };
        assert!(McsScenario::new(vec![t], vec![u, unknown]).is_err());
    }

    #[test]
    fn order_free_detection() {
        assert!(single_task_example().is_order_free());
        assert!(single_task_example().is_separable());
        let (s, _) = three_user_example();
        assert!(!s.is_order_free());
    }
}
