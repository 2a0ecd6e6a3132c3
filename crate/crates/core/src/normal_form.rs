//! Finite normal-form games with exhaustive pure-strategy equilibrium and
//! welfare-optimum enumeration.
//!
//! Profiles are stored in lexicographic order with the last player's
//! strategy varying fastest; every returned [`ProfileSet`] uses that order.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{schema, Error, Result};
use crate::mechanism::{apply_taxation, BudgetPlan, PayoffGame, TaxingRule};

/// Absolute tolerance for payoff and welfare comparisons.
pub const TOLERANCE: f64 = 1e-9;

/// Largest profile count a game may have unless a custom cap is given.
pub const DEFAULT_PROFILE_CAP: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GameRepr", into = "GameRepr")]
pub struct FiniteGame {
    strategy_counts: Vec<usize>,
    /// `payoffs[profile_index][player]`.
    payoffs: Vec<Vec<f64>>,
    labels: Option<Vec<Vec<String>>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GameRepr {
    n_players: usize,
    strategy_counts: Vec<usize>,
    payoffs: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    strategy_labels: Option<Vec<Vec<String>>>,
}

impl TryFrom<GameRepr> for FiniteGame {
    type Error = Error;
    fn try_from(r: GameRepr) -> Result<Self> {
        if r.n_players != r.strategy_counts.len() {
            return Err(schema(
                "n_players",
                format!(
                    "must equal the length of strategy_counts ({})",
                    r.strategy_counts.len()
                ),
            ));
        }
        let mut g = FiniteGame::new(r.strategy_counts, r.payoffs)?;
        if let Some(labels) = r.strategy_labels {
            g = g.with_labels(labels)?;
        }
        Ok(g)
    }
}

impl From<FiniteGame> for GameRepr {
    fn from(g: FiniteGame) -> Self {
        GameRepr {
            n_players: g.strategy_counts.len(),
            strategy_counts: g.strategy_counts,
            payoffs: g.payoffs,
            strategy_labels: g.labels,
        }
    }
}

impl FiniteGame {
    pub fn new(strategy_counts: Vec<usize>, payoffs: Vec<Vec<f64>>) -> Result<Self> {
        Self::with_cap(strategy_counts, payoffs, DEFAULT_PROFILE_CAP)
    }

    pub fn with_cap(
        strategy_counts: Vec<usize>,
        payoffs: Vec<Vec<f64>>,
        cap: usize,
    ) -> Result<Self> {
        let n = strategy_counts.len();
        if n < 2 {
            return Err(schema("strategy_counts", "a game needs at least 2 players"));
        }
        if let Some(i) = strategy_counts.iter().position(|&c| c == 0) {
            return Err(schema(format!("strategy_counts[{i}]"), "must be >= 1"));
        }
        let size = profile_count(&strategy_counts, cap)?;
        if payoffs.len() != size {
            return Err(schema(
                "payoffs",
                format!("expected {size} profiles, got {}", payoffs.len()),
            ));
        }
        for (p, row) in payoffs.iter().enumerate() {
            if row.len() != n {
                return Err(schema(
                    format!("payoffs[{p}]"),
                    format!("expected {n} entries"),
                ));
            }
            if row.iter().any(|u| !u.is_finite()) {
                return Err(schema(format!("payoffs[{p}]"), "entries must be finite"));
            }
        }
        Ok(FiniteGame {
            strategy_counts,
            payoffs,
            labels: None,
        })
    }

    /// Builds a game by evaluating `f` at every profile.
    pub fn from_fn(
        strategy_counts: Vec<usize>,
        mut f: impl FnMut(&[usize]) -> Vec<f64>,
    ) -> Result<Self> {
        let size = profile_count(&strategy_counts, DEFAULT_PROFILE_CAP)?;
        let mut payoffs = Vec::with_capacity(size);
        let mut profile = vec![0; strategy_counts.len()];
        for idx in 0..size {
            decode(idx, &strategy_counts, &mut profile);
            payoffs.push(f(&profile));
        }
        FiniteGame::new(strategy_counts, payoffs)
    }

    /// Random game with integer payoffs drawn uniformly from `lo..=hi`.
    pub fn random_integer<R: Rng + ?Sized>(
        rng: &mut R,
        strategy_counts: Vec<usize>,
        lo: i32,
        hi: i32,
    ) -> Result<Self> {
        let n = strategy_counts.len();
        FiniteGame::from_fn(strategy_counts, |_| {
            (0..n).map(|_| rng.gen_range(lo..=hi) as f64).collect()
        })
    }

    pub fn with_labels(mut self, labels: Vec<Vec<String>>) -> Result<Self> {
        if labels.len() != self.n_players()
            || labels
                .iter()
                .zip(&self.strategy_counts)
                .any(|(l, &c)| l.len() != c)
        {
            return Err(schema(
                "strategy_labels",
                "must name every strategy of every player",
            ));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn n_players(&self) -> usize {
        self.strategy_counts.len()
    }

    pub fn strategy_counts(&self) -> &[usize] {
        &self.strategy_counts
    }

    pub fn n_profiles(&self) -> usize {
        self.payoffs.len()
    }

    pub fn label(&self, player: usize, strategy: usize) -> String {
        match &self.labels {
            Some(l) => l[player][strategy].clone(),
            None => strategy.to_string(),
        }
    }

    pub fn profile_index(&self, profile: &[usize]) -> Result<usize> {
        if profile.len() != self.n_players() {
            return Err(Error::Dimension {
                what: "profile",
                expected: self.n_players(),
                got: profile.len(),
            });
        }
        let mut idx = 0;
        for (p, (&s, &c)) in profile.iter().zip(&self.strategy_counts).enumerate() {
            if s >= c {
                return Err(Error::Domain(format!("player {p} has no strategy {s}")));
            }
            idx = idx * c + s;
        }
        Ok(idx)
    }

    pub fn profile_at(&self, index: usize) -> Vec<usize> {
        let mut out = vec![0; self.n_players()];
        decode(index, &self.strategy_counts, &mut out);
        out
    }

    /// Payoff vector at a profile index.
    pub fn payoff_row(&self, index: usize) -> &[f64] {
        &self.payoffs[index]
    }

    pub fn payoff(&self, profile: &[usize], player: usize) -> Result<f64> {
        Ok(self.payoffs[self.profile_index(profile)?][player])
    }

    fn welfare_at(&self, index: usize) -> f64 {
        self.payoffs[index].iter().sum()
    }

    /// Materializes the taxed game.
    pub fn taxed(&self, rule: &TaxingRule, plan: BudgetPlan) -> Result<FiniteGame> {
        let taxed = apply_taxation(self, rule.clone(), plan)?;
        let mut payoffs = Vec::with_capacity(self.n_profiles());
        for idx in 0..self.n_profiles() {
            payoffs.push(taxed.payoffs(&self.profile_at(idx))?);
        }
        Ok(FiniteGame {
            strategy_counts: self.strategy_counts.clone(),
            payoffs,
            labels: self.labels.clone(),
        })
    }

    /// Index of the profile reached when `player` switches to `strategy`.
    fn deviate(&self, index: usize, player: usize, strategy: usize) -> usize {
        let stride: usize = self.strategy_counts[player + 1..].iter().product();
        let current = (index / stride) % self.strategy_counts[player];
        index - current * stride + strategy * stride
    }
}

impl PayoffGame for FiniteGame {
    type Profile = [usize];

    fn n_players(&self) -> usize {
        self.strategy_counts.len()
    }

    fn payoffs(&self, profile: &[usize]) -> Result<Vec<f64>> {
        Ok(self.payoffs[self.profile_index(profile)?].clone())
    }
}

fn profile_count(counts: &[usize], cap: usize) -> Result<usize> {
    let mut size: usize = 1;
    for &c in counts {
        size = size
            .checked_mul(c)
            .filter(|&s| s <= cap)
            .ok_or(Error::TooLarge {
                what: "profile count",
                size: counts.iter().fold(1usize, |a, &c| a.saturating_mul(c)),
                cap,
            })?;
    }
    Ok(size)
}

fn decode(mut index: usize, counts: &[usize], out: &mut [usize]) {
    for p in (0..counts.len()).rev() {
        out[p] = index % counts[p];
        index /= counts[p];
    }
}

/// Strategy profiles together with their welfare.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSet {
    pub profiles: Vec<Vec<usize>>,
    pub welfare: Vec<f64>,
}

impl ProfileSet {
    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }

    pub fn contains(&self, profile: &[usize]) -> bool {
        self.profiles.iter().any(|p| p == profile)
    }

    fn from_indices(game: &FiniteGame, indices: Vec<usize>) -> Self {
        let welfare = indices.iter().map(|&i| game.welfare_at(i)).collect();
        ProfileSet {
            profiles: indices.into_iter().map(|i| game.profile_at(i)).collect(),
            welfare,
        }
    }
}

/// True if no player gains more than [`TOLERANCE`] by deviating alone.
pub fn is_pure_nash(game: &FiniteGame, index: usize) -> bool {
    let row = game.payoff_row(index);
    (0..game.n_players()).all(|p| {
        (0..game.strategy_counts[p]).all(|s| {
            let alt = game.deviate(index, p, s);
            game.payoffs[alt][p] <= row[p] + TOLERANCE
        })
    })
}

/// All pure Nash equilibria, possibly none.
pub fn pure_nash(game: &FiniteGame) -> ProfileSet {
    let idx = (0..game.n_profiles())
        .filter(|&i| is_pure_nash(game, i))
        .collect();
    ProfileSet::from_indices(game, idx)
}

/// All welfare-maximizing profiles.
pub fn social_optima(game: &FiniteGame) -> ProfileSet {
    let best = (0..game.n_profiles())
        .map(|i| game.welfare_at(i))
        .fold(f64::NEG_INFINITY, f64::max);
    let idx = (0..game.n_profiles())
        .filter(|&i| game.welfare_at(i) >= best - TOLERANCE)
        .collect();
    ProfileSet::from_indices(game, idx)
}

/// The classic two-player dilemma; strategy 0 is Cooperate, 1 is Defect.
pub fn prisoners_dilemma() -> FiniteGame {
    FiniteGame::new(
        vec![2, 2],
        vec![
            vec![2.0, 2.0],
            vec![0.0, 3.0],
            vec![3.0, 0.0],
            vec![1.0, 1.0],
        ],
    )
    .and_then(|g| {
        g.with_labels(vec![
            vec!["C".to_string(), "D".to_string()],
            vec!["C".to_string(), "D".to_string()],
        ])
    })
    .expect("fixed fixture is valid")
}

/// True if the taxed game has at least one equilibrium that is also a
/// welfare optimum of `game`.
pub fn taxation_reaches_optimum(
    game: &FiniteGame,
    rule: &TaxingRule,
    plan: BudgetPlan,
) -> Result<bool> {
    let taxed = game.taxed(rule, plan)?;
    let optima = social_optima(game);
    Ok(pure_nash(&taxed)
        .profiles
        .iter()
        .any(|p| optima.contains(p)))
}

/// Searches random games with integer payoffs in `0..=9` for one whose
/// taxed version (flat `rate`, zero exemptions) has no equilibrium that is
/// welfare optimal. Returns the first such game found.
pub fn find_inefficient_game<R: Rng + ?Sized>(
    rng: &mut R,
    strategy_counts: &[usize],
    rate: f64,
    plan: BudgetPlan,
    attempts: usize,
) -> Result<Option<FiniteGame>> {
    let rule = TaxingRule::flat(vec![0.0; strategy_counts.len()], rate)?;
    for _ in 0..attempts {
        let game = FiniteGame::random_integer(rng, strategy_counts.to_vec(), 0, 9)?;
        if !taxation_reaches_optimum(&game, &rule, plan)? {
            return Ok(Some(game));
        }
    }
    Ok(None)
}
