//! Worked examples as structured reports with plain-text rendering.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::Result;
use crate::mcs::solver::{
    nash_equilibrium, social_optimum, taxed_equilibrium, EquilibriumReport, SolverConfig,
};
use crate::mcs::{single_task_example, three_user_example, McsProfile};
use crate::mcwa::{self, IwfConfig, SeConfig};
use crate::mechanism::{efficient_flat_rate, BudgetPlan, TaxingRule};
use crate::normal_form::{prisoners_dilemma, pure_nash, social_optima, FiniteGame, ProfileSet};

#[derive(Debug, Clone, Serialize)]
pub struct PdReport {
    pub rate: f64,
    pub original: Vec<Vec<f64>>,
    pub original_nash: ProfileSet,
    pub social_optima: ProfileSet,
    pub taxed: Vec<Vec<f64>>,
    pub taxed_nash: ProfileSet,
    #[serde(skip)]
    labels: Vec<Vec<String>>,
}

fn payoff_rows(game: &FiniteGame) -> Vec<Vec<f64>> {
    (0..game.n_profiles())
        .map(|i| game.payoff_row(i).to_vec())
        .collect()
}

fn name(labels: &[Vec<String>], profile: &[usize]) -> String {
    let parts: Vec<&str> = profile
        .iter()
        .enumerate()
        .map(|(p, &s)| labels[p][s].as_str())
        .collect();
    format!("({})", parts.join(","))
}

fn table(out: &mut String, labels: &[Vec<String>], rows: &[Vec<f64>]) {
    let _ = writeln!(out, "        {:>10} {:>10}", labels[1][0], labels[1][1]);
    for a in 0..2 {
        let cell = |b: usize| {
            let r = &rows[a * 2 + b];
            format!("({},{})", r[0], r[1])
        };
        let _ = writeln!(out, "  {:<5} {:>10} {:>10}", labels[0][a], cell(0), cell(1));
    }
}

impl PdReport {
    pub fn render(&self) -> String {
        let mut out = String::new();
        let names = |set: &ProfileSet| -> String {
            set.profiles
                .iter()
                .map(|p| name(&self.labels, p))
                .collect::<Vec<_>>()
                .join(" ")
        };
        out.push_str("Prisoner's dilemma\n");
        table(&mut out, &self.labels, &self.original);
        let _ = writeln!(out, "  nash equilibria: {}", names(&self.original_nash));
        let _ = writeln!(
            out,
            "  social optima: {} (welfare {})",
            names(&self.social_optima),
            self.social_optima.welfare[0]
        );
        let _ = writeln!(
            out,
            "Taxed at flat rate {} (zero exemptions, balanced budget)",
            self.rate
        );
        table(&mut out, &self.labels, &self.taxed);
        let _ = writeln!(out, "  nash equilibria: {}", names(&self.taxed_nash));
        out
    }
}

pub fn pd() -> Result<PdReport> {
    let plan = BudgetPlan::balanced();
    let game = prisoners_dilemma();
    let rule = TaxingRule::efficient(vec![0.0, 0.0], plan)?;
    let taxed = game.taxed(&rule, plan)?;
    Ok(PdReport {
        rate: efficient_flat_rate(2, plan)?,
        original: payoff_rows(&game),
        original_nash: pure_nash(&game),
        social_optima: social_optima(&game),
        taxed: payoff_rows(&taxed),
        taxed_nash: pure_nash(&taxed),
        labels: (0..2)
            .map(|p| (0..2).map(|s| game.label(p, s)).collect())
            .collect(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct McsExampleReport {
    pub single_task_nash: EquilibriumReport,
    pub single_task_optimum: EquilibriumReport,
    pub single_task_taxed: EquilibriumReport,
    pub three_user_profile: McsProfile,
    pub three_user_payoffs: Vec<f64>,
    pub three_user_nash: EquilibriumReport,
    pub three_user_optimum: EquilibriumReport,
}

impl McsExampleReport {
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str("One task, two users\n");
        let _ = writeln!(
            out,
            "  nash: {} welfare {:.4}",
            self.single_task_nash.profile, self.single_task_nash.welfare
        );
        let _ = writeln!(
            out,
            "  optimum: {} welfare {:.4}",
            self.single_task_optimum.profile, self.single_task_optimum.welfare
        );
        let _ = writeln!(
            out,
            "  optimum over equilibrium welfare gain: {:.0}%",
            100.0 * (self.single_task_optimum.welfare - self.single_task_nash.welfare)
                / self.single_task_nash.welfare
        );
        if let Some(t) = &self.single_task_taxed.taxed_payoffs {
            let _ = writeln!(out, "  taxed payoffs: {t:?}");
        }
        out.push_str("Three users, nine tasks\n");
        let _ = writeln!(
            out,
            "  given profile {}: payoffs {:?}",
            self.three_user_profile, self.three_user_payoffs
        );
        let _ = writeln!(
            out,
            "  nash: {} welfare {:.4}",
            self.three_user_nash.profile, self.three_user_nash.welfare
        );
        let _ = writeln!(
            out,
            "  optimum: {} welfare {:.4}",
            self.three_user_optimum.profile, self.three_user_optimum.welfare
        );
        out
    }
}

pub fn mcs_example(config: &SolverConfig) -> Result<McsExampleReport> {
    let one = single_task_example();
    let plan = BudgetPlan::balanced();
    let rule = TaxingRule::efficient(vec![0.0; one.n_users()], plan)?;
    let (three, profile) = three_user_example();
    Ok(McsExampleReport {
        single_task_nash: nash_equilibrium(&one, config)?,
        single_task_optimum: social_optimum(&one, config)?,
        single_task_taxed: taxed_equilibrium(&one, &rule, plan, config)?,
        three_user_payoffs: three.user_payoffs(&profile)?,
        three_user_profile: profile,
        three_user_nash: nash_equilibrium(&three, config)?,
        three_user_optimum: social_optimum(&three, config)?,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct McwaExampleReport {
    pub nash: mcwa::IwfResult,
    pub nash_welfare: f64,
    pub optimum: mcwa::SeResult,
    pub taxed: mcwa::TaxedOutcome,
}

impl McwaExampleReport {
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str("One channel, two users (log base 10)\n");
        let _ = writeln!(
            out,
            "  nash powers {:?}: welfare {:.4}",
            self.nash.allocation.p, self.nash_welfare
        );
        let _ = writeln!(
            out,
            "  optimum powers {:?}: welfare {:.4}",
            self.optimum.allocation.p, self.optimum.welfare
        );
        let _ = writeln!(
            out,
            "  welfare loss at equilibrium: {:.0}%",
            100.0 * (self.optimum.welfare - self.nash_welfare) / self.optimum.welfare
        );
        let shares: Vec<String> = self
            .taxed
            .taxed_payoffs
            .iter()
            .map(|p| format!("{p:.4}"))
            .collect();
        let _ = writeln!(out, "  taxed payoffs: {}", shares.join(" "));
        out
    }
}

pub fn mcwa_example(iwf: &IwfConfig, se: &SeConfig) -> Result<McwaExampleReport> {
    let s = mcwa::worked_example();
    let nash = mcwa::iterative_water_filling(&s, iwf)?;
    let nash_welfare = mcwa::social_welfare(&s, &nash.allocation)?;
    Ok(McwaExampleReport {
        nash,
        nash_welfare,
        optimum: mcwa::social_optimum(&s, se)?,
        taxed: mcwa::taxed_equilibrium(&s, se)?,
    })
}
