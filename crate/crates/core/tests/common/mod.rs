//! Independent reference implementations used as test oracles.
//!
//! Task selection instances here live on a line with integer coordinates,
//! unit speed and integer times, so feasibility can be decided by explicit
//! reachability over a discrete time grid instead of the earliest-start
//! recursion used by the library.

#![allow(dead_code)]

use rand::Rng;
use taxmech::mcs::{Execution, McsProfile, McsScenario, McsUser, Point, Task};

#[derive(Debug, Clone)]
pub struct TinyTask {
    pub id: usize,
    pub reward: f64,
    pub x: i64,
    pub open: i64,
    pub close: Option<i64>,
}

#[derive(Debug, Clone)]
pub struct TinyUser {
    pub x: i64,
    pub travel_rate: f64,
    pub budget: Option<f64>,
    /// `(task id, exec time, exec cost)`.
    pub avail: Vec<(usize, i64, f64)>,
}

#[derive(Debug, Clone)]
pub struct Tiny {
    pub tasks: Vec<TinyTask>,
    pub users: Vec<TinyUser>,
}

impl Tiny {
    pub fn scenario(&self) -> McsScenario {
        let tasks = self
            .tasks
            .iter()
            .map(|t| Task {
                id: t.id,
                reward: t.reward,
                location: Point::new(t.x as f64, 0.0),
                window_open: t.open as f64,
                window_close: t.close.map_or(f64::INFINITY, |c| c as f64),
            })
            .collect();
        let users = self
            .users
            .iter()
            .enumerate()
            .map(|(id, u)| McsUser {
                id,
                initial_location: Point::new(u.x as f64, 0.0),
                travel_cost_rate: u.travel_rate,
                speed: 1.0,
                resource_budget: u.budget.unwrap_or(f64::INFINITY),
                available: u
                    .avail
                    .iter()
                    .map(|&(task, t, c)| Execution {
                        task,
                        exec_time: t as f64,
                        exec_cost: c,
                    })
                    .collect(),
            })
            .collect();
        McsScenario::new(tasks, users).expect("tiny instance is valid")
    }

    fn task(&self, id: usize) -> &TinyTask {
        self.tasks.iter().find(|t| t.id == id).unwrap()
    }

    fn exec(&self, user: usize, id: usize) -> (i64, f64) {
        let &(_, t, c) = self.users[user].avail.iter().find(|a| a.0 == id).unwrap();
        (t, c)
    }

    fn horizon(&self) -> i64 {
        let mut h = 0;
        for t in &self.tasks {
            h = h.max(t.open).max(t.close.unwrap_or(0));
        }
        let span: i64 = self.tasks.iter().map(|t| t.x.abs()).sum::<i64>()
            + self.users.iter().map(|u| u.x.abs()).max().unwrap_or(0);
        let exec: i64 = self
            .users
            .iter()
            .flat_map(|u| u.avail.iter().map(|a| a.1))
            .sum();
        h + 4 * span + exec + 2
    }

    /// Reachability of every task in order over the integer time grid.
    pub fn feasible(&self, user: usize, seq: &[usize]) -> bool {
        let h = self.horizon() as usize;
        let u = &self.users[user];
        let cost: f64 = seq.iter().map(|&id| self.exec(user, id).1).sum();
        if cost > u.budget.unwrap_or(f64::INFINITY) {
            return false;
        }
        // ready[t]: the user can be free at position `here` at time t.
        let mut ready = vec![false; h + 1];
        ready[0] = true;
        let mut here = u.x;
        for &id in seq {
            let task = self.task(id);
            let (dur, _) = self.exec(user, id);
            let d = (task.x - here).abs() as usize;
            let mut next = vec![false; h + 1];
            let mut can_arrive = false;
            for t in 0..=h {
                if t >= d && ready[t - d] {
                    can_arrive = true;
                }
                let in_window = t as i64 >= task.open && task.close.map_or(true, |c| t as i64 <= c);
                if can_arrive && in_window {
                    let f = t + dur as usize;
                    if f <= h {
                        next[f] = true;
                    }
                }
            }
            if !next.iter().any(|&b| b) {
                return false;
            }
            ready = next;
            here = task.x;
        }
        true
    }

    /// Every feasible ordered selection of `user`.
    pub fn selections(&self, user: usize) -> Vec<Vec<usize>> {
        fn go(
            t: &Tiny,
            user: usize,
            ids: &[usize],
            seq: &mut Vec<usize>,
            out: &mut Vec<Vec<usize>>,
        ) {
            out.push(seq.clone());
            for &id in ids {
                if seq.contains(&id) {
                    continue;
                }
                seq.push(id);
                if t.feasible(user, seq) {
                    go(t, user, ids, seq, out);
                }
                seq.pop();
            }
        }
        let ids: Vec<usize> = self.users[user].avail.iter().map(|a| a.0).collect();
        let mut out = Vec::new();
        go(self, user, &ids, &mut Vec::new(), &mut out);
        out
    }

    fn counts(&self, profile: &[Vec<usize>]) -> Vec<usize> {
        self.tasks
            .iter()
            .map(|t| profile.iter().filter(|s| s.contains(&t.id)).count())
            .collect()
    }

    fn cost(&self, user: usize, seq: &[usize]) -> f64 {
        let u = &self.users[user];
        let mut here = u.x;
        let mut dist = 0;
        let mut exec = 0.0;
        for &id in seq {
            let x = self.task(id).x;
            dist += (x - here).abs();
            here = x;
            exec += self.exec(user, id).1;
        }
        exec + u.travel_rate * dist as f64
    }

    pub fn payoffs(&self, profile: &[Vec<usize>]) -> Vec<f64> {
        let counts = self.counts(profile);
        profile
            .iter()
            .enumerate()
            .map(|(i, seq)| {
                let reward: f64 = seq
                    .iter()
                    .map(|&id| {
                        let k = self.tasks.iter().position(|t| t.id == id).unwrap();
                        self.tasks[k].reward / counts[k] as f64
                    })
                    .sum();
                reward - self.cost(i, seq)
            })
            .collect()
    }

    pub fn welfare(&self, profile: &[Vec<usize>]) -> f64 {
        self.payoffs(profile).iter().sum()
    }

    pub fn potential(&self, profile: &[Vec<usize>]) -> f64 {
        let counts = self.counts(profile);
        let shares: f64 = self
            .tasks
            .iter()
            .zip(&counts)
            .map(|(t, &m)| (1..=m).map(|j| t.reward / j as f64).sum::<f64>())
            .sum();
        let cost: f64 = profile
            .iter()
            .enumerate()
            .map(|(i, s)| self.cost(i, s))
            .sum();
        shares - cost
    }

    /// Every joint profile of feasible selections.
    pub fn profiles(&self) -> Vec<Vec<Vec<usize>>> {
        let per_user: Vec<Vec<Vec<usize>>> =
            (0..self.users.len()).map(|i| self.selections(i)).collect();
        let mut out = vec![Vec::new()];
        for options in &per_user {
            let mut next = Vec::new();
            for partial in &out {
                for s in options {
                    let mut p = partial.clone();
                    p.push(s.clone());
                    next.push(p);
                }
            }
            out = next;
        }
        out
    }

    pub fn max_of(&self, f: impl Fn(&[Vec<usize>]) -> f64) -> f64 {
        self.profiles()
            .iter()
            .map(|p| f(p))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest unilateral gain available at `profile`.
    pub fn best_deviation_gain(&self, profile: &[Vec<usize>]) -> f64 {
        let base = self.payoffs(profile);
        let mut best: f64 = 0.0;
        for i in 0..self.users.len() {
            for s in self.selections(i) {
                let mut p = profile.to_vec();
                p[i] = s;
                best = best.max(self.payoffs(&p)[i] - base[i]);
            }
        }
        best
    }
}

pub fn to_ids(profile: &McsProfile) -> Vec<Vec<usize>> {
    profile.0.iter().map(|s| s.0.clone()).collect()
}

/// Random instance with 2..=3 users and 1..=3 tasks.
pub fn random_tiny<R: Rng>(rng: &mut R) -> Tiny {
    let n_tasks = rng.gen_range(1..=3);
    let n_users = rng.gen_range(2..=3);
    let tasks: Vec<TinyTask> = (0..n_tasks)
        .map(|k| {
            let open = rng.gen_range(0..8);
            TinyTask {
                id: 10 + k,
                reward: rng.gen_range(0..=40) as f64 / 4.0,
                x: rng.gen_range(-6..=6),
                open,
                close: if rng.gen_bool(0.3) {
                    None
                } else {
                    Some(open + rng.gen_range(0..10))
                },
            }
        })
        .collect();
    let users = (0..n_users)
        .map(|_| TinyUser {
            x: rng.gen_range(-6..=6),
            travel_rate: rng.gen_range(0..=4) as f64 / 10.0,
            budget: if rng.gen_bool(0.5) {
                None
            } else {
                Some(rng.gen_range(0..=12) as f64 / 2.0)
            },
            avail: tasks
                .iter()
                .filter_map(|t| {
                    rng.gen_bool(0.8).then(|| {
                        (
                            t.id,
                            rng.gen_range(0..=3),
                            rng.gen_range(0..=20) as f64 / 4.0,
                        )
                    })
                })
                .collect(),
        })
        .collect();
    Tiny { tasks, users }
}
