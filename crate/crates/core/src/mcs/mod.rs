//! Location-dependent, time-sensitive task selection game for mobile crowd
//! sensing.
//!
//! Each user picks an ordered sequence of the tasks available to it, walks
//! (or drives) from task to task, and must start every task inside its
//! time window. A task's reward is split equally among all users that
//! execute it.

mod game;
pub mod solver;

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{schema, Error, Result};

pub use game::Schedule;

pub type TaskId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Serializes `f64::INFINITY` as JSON `null` and back.
pub(crate) mod open_ended {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() && *v > 0.0 {
            s.serialize_none()
        } else {
            s.serialize_some(v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }

    pub fn unbounded() -> f64 {
        f64::INFINITY
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Task {
    pub id: TaskId,
    pub reward: f64,
    pub location: Point,
    /// Earliest start time, seconds.
    #[serde(default)]
    pub window_open: f64,
    /// Latest start time, seconds; `null` in JSON for no deadline.
    #[serde(with = "open_ended", default = "open_ended::unbounded")]
    pub window_close: f64,
}

/// Time and resource cost of one user executing one task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Execution {
    pub task: TaskId,
    pub exec_time: f64,
    pub exec_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McsUser {
    pub id: usize,
    pub initial_location: Point,
    /// Money per meter travelled.
    pub travel_cost_rate: f64,
    /// Meters per second.
    pub speed: f64,
    /// Total execution cost the user can afford; `null` for unconstrained.
    #[serde(with = "open_ended", default = "open_ended::unbounded")]
    pub resource_budget: f64,
    pub available: Vec<Execution>,
}

/// A user's tasks in execution order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Default, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OrderedSelection(pub Vec<TaskId>);

impl OrderedSelection {
    pub fn empty() -> Self {
        OrderedSelection(Vec::new())
    }

    pub fn tasks(&self) -> &[TaskId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl From<Vec<TaskId>> for OrderedSelection {
    fn from(v: Vec<TaskId>) -> Self {
        OrderedSelection(v)
    }
}

/// One ordered selection per user.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct McsProfile(pub Vec<OrderedSelection>);

impl McsProfile {
    pub fn empty(n_users: usize) -> Self {
        McsProfile(vec![OrderedSelection::empty(); n_users])
    }

    pub fn from_ids(selections: Vec<Vec<TaskId>>) -> Self {
        McsProfile(selections.into_iter().map(OrderedSelection).collect())
    }

    pub fn selection(&self, user: usize) -> &OrderedSelection {
        &self.0[user]
    }

    pub fn n_users(&self) -> usize {
        self.0.len()
    }

    pub fn with_selection(&self, user: usize, sel: OrderedSelection) -> Self {
        let mut p = self.clone();
        p.0[user] = sel;
        p
    }
}

/// Same syntax the CLI parses: `1,2;3;`.
impl fmt::Display for McsProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let users: Vec<String> = self
            .0
            .iter()
            .map(|s| {
                s.0.iter()
                    .map(|t| t.to_string())
                    .collect::<Vec<_>>()
                    .join(",")
            })
            .collect();
        f.write_str(&users.join(";"))
    }
}

/// A user's view of one available task, resolved to positions.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Avail {
    pub pos: usize,
    pub exec_time: f64,
    pub exec_cost: f64,
}

/// Tasks and users of one task selection game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScenarioRepr", into = "ScenarioRepr")]
pub struct McsScenario {
    tasks: Vec<Task>,
    users: Vec<McsUser>,
    #[serde(skip)]
    index: Index,
}

#[derive(Debug, Clone, Default, PartialEq)]
struct Index {
    task_pos: HashMap<TaskId, usize>,
    /// Per user, available tasks keyed by id.
    avail: Vec<BTreeMap<TaskId, Avail>>,
}

impl PartialEq for Avail {
    fn eq(&self, o: &Self) -> bool {
        self.pos == o.pos && self.exec_time == o.exec_time && self.exec_cost == o.exec_cost
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioRepr {
    tasks: Vec<Task>,
    users: Vec<McsUser>,
}

impl TryFrom<ScenarioRepr> for McsScenario {
    type Error = Error;
    fn try_from(r: ScenarioRepr) -> Result<Self> {
        McsScenario::new(r.tasks, r.users)
    }
}

impl From<McsScenario> for ScenarioRepr {
    fn from(s: McsScenario) -> Self {
        ScenarioRepr {
            tasks: s.tasks,
            users: s.users,
        }
    }
}

impl McsScenario {
    pub fn new(tasks: Vec<Task>, users: Vec<McsUser>) -> Result<Self> {
        if users.len() < 2 {
            return Err(schema(
                "users",
                format!("need at least 2 users, got {}", users.len()),
            ));
        }
        let mut task_pos = HashMap::new();
        for (k, t) in tasks.iter().enumerate() {
            let f = |name: &str| format!("tasks[{k}].{name}");
            if task_pos.insert(t.id, k).is_some() {
                return Err(schema(f("id"), format!("duplicate task id {}", t.id)));
            }
            if !(t.reward.is_finite() && t.reward >= 0.0) {
                return Err(schema(f("reward"), "must be finite and >= 0"));
            }
            if !t.location.is_finite() {
                return Err(schema(f("location"), "must be finite"));
            }
            if !t.window_open.is_finite() {
                return Err(schema(f("window_open"), "must be finite"));
            }
            if t.window_close.is_nan() || t.window_close < t.window_open {
                return Err(schema(f("window_close"), "must be >= window_open"));
            }
        }
        let mut avail = Vec::with_capacity(users.len());
        for (i, u) in users.iter().enumerate() {
            let f = |name: &str| format!("users[{i}].{name}");
            if !(u.speed.is_finite() && u.speed > 0.0) {
                return Err(schema(f("speed"), "must be finite and > 0"));
            }
            if !(u.travel_cost_rate.is_finite() && u.travel_cost_rate >= 0.0) {
                return Err(schema(f("travel_cost_rate"), "must be finite and >= 0"));
            }
            if u.resource_budget.is_nan() || u.resource_budget < 0.0 {
                return Err(schema(f("resource_budget"), "must be >= 0"));
            }
            if !u.initial_location.is_finite() {
                return Err(schema(f("initial_location"), "must be finite"));
            }
            let mut map = BTreeMap::new();
            for (j, e) in u.available.iter().enumerate() {
                let g = |name: &str| format!("users[{i}].available[{j}].{name}");
                let pos = *task_pos
                    .get(&e.task)
                    .ok_or_else(|| schema(g("task"), format!("unknown task id {}", e.task)))?;
                if !(e.exec_time.is_finite() && e.exec_time >= 0.0) {
                    return Err(schema(g("exec_time"), "must be finite and >= 0"));
                }
                if !(e.exec_cost.is_finite() && e.exec_cost >= 0.0) {
                    return Err(schema(g("exec_cost"), "must be finite and >= 0"));
                }
                let a = Avail {
                    pos,
                    exec_time: e.exec_time,
                    exec_cost: e.exec_cost,
                };
                if map.insert(e.task, a).is_some() {
                    return Err(schema(g("task"), format!("task {} listed twice", e.task)));
                }
            }
            avail.push(map);
        }
        Ok(McsScenario {
            tasks,
            users,
            index: Index { task_pos, avail },
        })
    }

    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    pub fn users(&self) -> &[McsUser] {
        &self.users
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn task(&self, id: TaskId) -> Result<&Task> {
        self.task_position(id).map(|k| &self.tasks[k])
    }

    pub fn task_position(&self, id: TaskId) -> Result<usize> {
        self.index
            .task_pos
            .get(&id)
            .copied()
            .ok_or(Error::UnknownId { kind: "task", id })
    }

    /// Execution record of `user` for task `id`, if available to it.
    pub fn execution(&self, user: usize, id: TaskId) -> Option<Execution> {
        self.index.avail[user].get(&id).map(|a| Execution {
            task: id,
            exec_time: a.exec_time,
            exec_cost: a.exec_cost,
        })
    }

    /// Ids of the tasks available to `user`, ascending.
    pub fn available_ids(&self, user: usize) -> Vec<TaskId> {
        self.index.avail[user].keys().copied().collect()
    }

    pub(crate) fn avail(&self, user: usize) -> &BTreeMap<TaskId, Avail> {
        &self.index.avail[user]
    }

    /// True if execution order never matters: no travel cost and no task
    /// deadlines on any available task.
    pub fn is_order_free(&self) -> bool {
        self.users.iter().enumerate().all(|(i, u)| {
            u.travel_cost_rate == 0.0
                && self.index.avail[i]
                    .values()
                    .all(|a| self.tasks[a.pos].window_close == f64::INFINITY)
        })
    }

    /// True if every subset of every user's tasks is feasible and costs add
    /// up per task, so welfare decomposes into independent per-task terms.
    pub fn is_separable(&self) -> bool {
        self.is_order_free()
            && self.users.iter().enumerate().all(|(i, u)| {
                let total: f64 = self.index.avail[i].values().map(|a| a.exec_cost).sum();
                total <= u.resource_budget
            })
    }
}

/// One task, two users, zero travel: reward 10, execution costs 4.8 and 4.9.
pub fn single_task_example() -> McsScenario {
    let user = |id: usize, cost: f64| McsUser {
        id,
        initial_location: Point::default(),
        travel_cost_rate: 0.0,
        speed: 1.0,
        resource_budget: f64::INFINITY,
        available: vec![Execution {
            task: 1,
            exec_time: 0.0,
            exec_cost: cost,
        }],
    };
    McsScenario::new(
        vec![Task {
            id: 1,
            reward: 10.0,
            location: Point::default(),
            window_open: 0.0,
            window_close: f64::INFINITY,
        }],
        vec![user(1, 4.8), user(2, 4.9)],
    )
    .expect("fixture is valid")
}

/// Three users and nine tasks over a 10:00-18:00 day (time 0 is 10:00).
///
/// Rewards and the chosen routes match the worked crowd-sensing example;
/// coordinates, windows, speeds and costs are a consistent instantiation.
/// Returns the scenario and the routes (1,2,3,4), (3,5,6) and (7,8,9).
pub fn three_user_example() -> (McsScenario, McsProfile) {
    let hour = 3600.0;
    let task = |id, reward, x, y, open: f64, close: f64| Task {
        id,
        reward,
        location: Point::new(x, y),
        window_open: open * hour,
        window_close: close * hour,
    };
    let tasks = vec![
        task(1, 1.0, 400.0, 300.0, 0.0, 1.0),
        task(2, 1.3, 900.0, 300.0, 0.5, 2.0),
        task(3, 3.0, 1300.0, 700.0, 1.0, 3.0),
        task(4, 0.8, 2000.0, 1500.0, 4.0, 8.0),
        task(5, 1.5, 1800.0, 200.0, 2.0, 5.0),
        task(6, 2.8, 2400.0, 600.0, 3.0, 7.0),
        task(7, 1.0, 300.0, 1800.0, 0.0, 4.0),
        task(8, 1.8, 800.0, 2300.0, 1.0, 5.0),
        task(9, 2.0, 1500.0, 2600.0, 2.0, 8.0),
    ];
    let exec = |task, cost| Execution {
        task,
        exec_time: 900.0,
        exec_cost: cost,
    };
    let users = vec![
        McsUser {
            id: 1,
            initial_location: Point::new(0.0, 0.0),
            travel_cost_rate: 0.0002,
            speed: 1.4,
            resource_budget: 2.0,
            available: vec![
                exec(1, 0.2),
                exec(2, 0.3),
                exec(3, 0.4),
                exec(4, 0.2),
                exec(5, 0.5),
            ],
        },
        McsUser {
            id: 2,
            initial_location: Point::new(1000.0, 1000.0),
            travel_cost_rate: 0.0005,
            speed: 4.0,
            resource_budget: 2.0,
            available: vec![exec(2, 0.3), exec(3, 0.3), exec(5, 0.4), exec(6, 0.6)],
        },
        McsUser {
            id: 3,
            initial_location: Point::new(0.0, 2200.0),
            travel_cost_rate: 0.001,
            speed: 10.0,
            resource_budget: 2.0,
            available: vec![exec(4, 0.3), exec(7, 0.2), exec(8, 0.4), exec(9, 0.5)],
        },
    ];
    let scenario = McsScenario::new(tasks, users).expect("fixture is valid");
    let profile = McsProfile::from_ids(vec![vec![1, 2, 3, 4], vec![3, 5, 6], vec![7, 8, 9]]);
    (scenario, profile)
}
