//! Income-tax style payoff redistribution.
//!
//! Every player is taxed on the part of its payoff above an exemption
//! threshold, the platform scales the collected tax by a budget factor, and
//! each player's scaled tax is split equally among the other players.
//!
//! With a flat rate `(N - 1) / (N - 1 + beta)` every player's taxed payoff
//! becomes an affine function of social welfare, which is what makes the
//! welfare maximizers equilibria of the taxed game. The exemptions then only
//! decide how that welfare is split.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-player tax exemptions and tax rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RuleRepr", into = "RuleRepr")]
pub struct TaxingRule {
    exemptions: Vec<f64>,
    rates: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RuleRepr {
    exemptions: Vec<f64>,
    rates: Vec<f64>,
}

impl TryFrom<RuleRepr> for TaxingRule {
    type Error = Error;
    fn try_from(r: RuleRepr) -> Result<Self> {
        TaxingRule::new(r.exemptions, r.rates)
    }
}

impl From<TaxingRule> for RuleRepr {
    fn from(r: TaxingRule) -> Self {
        RuleRepr {
            exemptions: r.exemptions,
            rates: r.rates,
        }
    }
}

impl TaxingRule {
    pub fn new(exemptions: Vec<f64>, rates: Vec<f64>) -> Result<Self> {
        if exemptions.len() != rates.len() {
            return Err(Error::Dimension {
                what: "taxing rule rates",
                expected: exemptions.len(),
                got: rates.len(),
            });
        }
        if exemptions.len() < 2 {
            return Err(Error::Domain(format!(
                "a taxing rule needs at least 2 players, got {}",
                exemptions.len()
            )));
        }
        for (i, e) in exemptions.iter().enumerate() {
            if !e.is_finite() {
                return Err(crate::error::schema(
                    format!("exemptions[{i}]"),
                    "must be finite",
                ));
            }
        }
        for (i, r) in rates.iter().enumerate() {
            if !(r.is_finite() && (0.0..=1.0).contains(r)) {
                return Err(crate::error::schema(
                    format!("rates[{i}]"),
                    "must lie in [0, 1]",
                ));
            }
        }
        Ok(TaxingRule { exemptions, rates })
    }

    /// Same rate for every player.
    pub fn flat(exemptions: Vec<f64>, rate: f64) -> Result<Self> {
        let n = exemptions.len();
        TaxingRule::new(exemptions, vec![rate; n])
    }

    /// The efficient flat rate for `plan`, with the given exemptions.
    pub fn efficient(exemptions: Vec<f64>, plan: BudgetPlan) -> Result<Self> {
        let rate = efficient_flat_rate(exemptions.len(), plan)?;
        TaxingRule::flat(exemptions, rate)
    }

    /// Zero rates: the taxed game is the original game.
    pub fn untaxed(n_players: usize) -> Result<Self> {
        TaxingRule::flat(vec![0.0; n_players], 0.0)
    }

    pub fn n_players(&self) -> usize {
        self.rates.len()
    }

    pub fn exemptions(&self) -> &[f64] {
        &self.exemptions
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    /// The common rate if all rates are equal.
    pub fn flat_rate(&self) -> Option<f64> {
        let r = self.rates[0];
        self.rates.iter().all(|&x| x == r).then_some(r)
    }

    /// True if this rule uses the efficient flat rate for `plan` (to 1e-12).
    pub fn is_efficient(&self, plan: BudgetPlan) -> bool {
        match (
            self.flat_rate(),
            efficient_flat_rate(self.n_players(), plan),
        ) {
            (Some(r), Ok(target)) => (r - target).abs() <= 1e-12,
            _ => false,
        }
    }
}

/// Budget factor: the ratio of redistributed tax to collected tax.
///
/// `beta < 1` leaves revenue with the platform, `beta > 1` is a subsidy and
/// `beta == 1` is strict budget balance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct BudgetPlan {
    beta: f64,
}

impl TryFrom<f64> for BudgetPlan {
    type Error = Error;
    fn try_from(beta: f64) -> Result<Self> {
        BudgetPlan::new(beta)
    }
}

impl From<BudgetPlan> for f64 {
    fn from(p: BudgetPlan) -> f64 {
        p.beta
    }
}

impl Default for BudgetPlan {
    fn default() -> Self {
        BudgetPlan::balanced()
    }
}

impl BudgetPlan {
    pub fn new(beta: f64) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(crate::error::schema("beta", "must be finite and > 0"));
        }
        Ok(BudgetPlan { beta })
    }

    pub fn balanced() -> Self {
        BudgetPlan { beta: 1.0 }
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn is_balanced(&self) -> bool {
        self.beta == 1.0
    }
}

/// Result of taxing one payoff vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaxBreakdown {
    pub taxes: Vec<f64>,
    pub redistributed_income: Vec<f64>,
    pub taxed_payoffs: Vec<f64>,
    /// Revenue kept by the platform; negative when it pays a subsidy.
    pub platform_net: f64,
}

fn check_payoffs(payoffs: &[f64], n: usize) -> Result<()> {
    if payoffs.len() != n {
        return Err(Error::Dimension {
            what: "payoff vector",
            expected: n,
            got: payoffs.len(),
        });
    }
    if let Some(i) = payoffs.iter().position(|u| !u.is_finite()) {
        return Err(crate::error::schema(
            format!("payoffs[{i}]"),
            "must be finite",
        ));
    }
    Ok(())
}

/// Tax owed by each player: `(payoff - exemption) * rate`.
///
/// Payoffs below the exemption produce a negative tax, i.e. a subsidy.
pub fn income_tax(payoffs: &[f64], rule: &TaxingRule) -> Result<Vec<f64>> {
    check_payoffs(payoffs, rule.n_players())?;
    Ok(payoffs
        .iter()
        .zip(rule.exemptions.iter().zip(&rule.rates))
        .map(|(u, (e, r))| (u - e) * r)
        .collect())
}

/// Income each player receives from the other players' scaled taxes.
pub fn redistribute(taxes: &[f64], plan: BudgetPlan) -> Result<Vec<f64>> {
    let n = taxes.len();
    if n < 2 {
        return Err(Error::Domain(format!(
            "redistribution needs at least 2 players, got {n}"
        )));
    }
    let share = plan.beta / (n - 1) as f64;
    Ok((0..n)
        .map(|i| {
            let others: f64 = taxes
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, t)| t)
                .sum();
            share * others
        })
        .collect())
}

/// Full tax pipeline for one payoff vector.
pub fn taxed_payoffs(payoffs: &[f64], rule: &TaxingRule, plan: BudgetPlan) -> Result<TaxBreakdown> {
    let taxes = income_tax(payoffs, rule)?;
    let redistributed_income = redistribute(&taxes, plan)?;
    let taxed_payoffs = payoffs
        .iter()
        .zip(&taxes)
        .zip(&redistributed_income)
        .map(|((u, t), g)| u - t + g)
        .collect();
    let platform_net = (1.0 - plan.beta) * taxes.iter().sum::<f64>();
    Ok(TaxBreakdown {
        taxes,
        redistributed_income,
        taxed_payoffs,
        platform_net,
    })
}

/// Constants of the flat-rate closed form and of the welfare split.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatRateConstants {
    /// `beta / (N - 1)`: weight of each other player's payoff per unit rate.
    pub a: f64,
    /// Per-player offset `e_i - a * sum_{j != i} e_j`.
    pub b: Vec<f64>,
    /// `beta / (N - 1 + beta)`: welfare share under the efficient rate.
    pub c: f64,
    /// Sum of all exemptions.
    pub delta: f64,
}

impl FlatRateConstants {
    pub fn new(exemptions: &[f64], plan: BudgetPlan) -> Result<Self> {
        let n = exemptions.len();
        if n < 2 {
            return Err(Error::Domain(format!("need at least 2 players, got {n}")));
        }
        let a = plan.beta / (n - 1) as f64;
        let delta: f64 = exemptions.iter().sum();
        let b = exemptions.iter().map(|&e| e - a * (delta - e)).collect();
        let c = plan.beta / ((n - 1) as f64 + plan.beta);
        Ok(FlatRateConstants { a, b, c, delta })
    }
}

/// Flat-rate taxed payoffs from the closed form
/// `(1 - rate) u_i + rate * a * sum_{j != i} u_j + rate * b_i`.
///
/// Independent of [`taxed_payoffs`]; the two must agree.
pub fn flat_rate_payoffs(
    payoffs: &[f64],
    exemptions: &[f64],
    rate: f64,
    plan: BudgetPlan,
) -> Result<Vec<f64>> {
    check_payoffs(payoffs, exemptions.len())?;
    let k = FlatRateConstants::new(exemptions, plan)?;
    let total: f64 = payoffs.iter().sum();
    Ok(payoffs
        .iter()
        .zip(&k.b)
        .map(|(&u, &b)| (1.0 - rate) * u + rate * k.a * (total - u) + rate * b)
        .collect())
}

/// The flat rate that aligns every player's taxed payoff with welfare.
pub fn efficient_flat_rate(n_players: usize, plan: BudgetPlan) -> Result<f64> {
    if n_players < 2 {
        return Err(Error::Domain(format!(
            "efficient rate needs at least 2 players, got {n_players}"
        )));
    }
    let m = (n_players - 1) as f64;
    Ok(m / (m + plan.beta))
}

/// Equal exemptions: under the efficient rate every player ends up with the
/// same share `W / N` of welfare (for a balanced budget).
pub fn maxmin_exemptions(n_players: usize, omega: f64) -> Vec<f64> {
    vec![omega; n_players]
}

/// Taxed payoffs under the efficient flat rate written as a function of
/// welfare: `c W - c Delta + e_i`.
pub fn efficient_split(welfare: f64, exemptions: &[f64], plan: BudgetPlan) -> Result<Vec<f64>> {
    let k = FlatRateConstants::new(exemptions, plan)?;
    Ok(exemptions
        .iter()
        .map(|&e| k.c * welfare - k.c * k.delta + e)
        .collect())
}

/// A game whose payoffs can be evaluated at a profile.
pub trait PayoffGame {
    type Profile: ?Sized;

    fn n_players(&self) -> usize;

    fn payoffs(&self, profile: &Self::Profile) -> Result<Vec<f64>>;

    fn welfare(&self, profile: &Self::Profile) -> Result<f64> {
        Ok(self.payoffs(profile)?.iter().sum())
    }
}

impl<G: PayoffGame + ?Sized> PayoffGame for &G {
    type Profile = G::Profile;

    fn n_players(&self) -> usize {
        (**self).n_players()
    }

    fn payoffs(&self, profile: &Self::Profile) -> Result<Vec<f64>> {
        (**self).payoffs(profile)
    }
}

/// The taxed version of a game: same players and strategies, payoffs passed
/// through the tax pipeline.
#[derive(Debug, Clone)]
pub struct TaxedGame<G> {
    game: G,
    rule: TaxingRule,
    plan: BudgetPlan,
}

impl<G: PayoffGame> TaxedGame<G> {
    pub fn inner(&self) -> &G {
        &self.game
    }

    pub fn rule(&self) -> &TaxingRule {
        &self.rule
    }

    pub fn plan(&self) -> BudgetPlan {
        self.plan
    }

    pub fn breakdown(&self, profile: &G::Profile) -> Result<TaxBreakdown> {
        taxed_payoffs(&self.game.payoffs(profile)?, &self.rule, self.plan)
    }
}

impl<G: PayoffGame> PayoffGame for TaxedGame<G> {
    type Profile = G::Profile;

    fn n_players(&self) -> usize {
        self.game.n_players()
    }

    fn payoffs(&self, profile: &Self::Profile) -> Result<Vec<f64>> {
        Ok(self.breakdown(profile)?.taxed_payoffs)
    }
}

/// Wraps `game` with a taxing rule and budget plan.
pub fn apply_taxation<G: PayoffGame>(
    game: G,
    rule: TaxingRule,
    plan: BudgetPlan,
) -> Result<TaxedGame<G>> {
    if game.n_players() != rule.n_players() {
        return Err(Error::Dimension {
            what: "taxing rule players",
            expected: game.n_players(),
            got: rule.n_players(),
        });
    }
    Ok(TaxedGame { game, rule, plan })
}
