use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use taxmech::mcs::solver::{self, SolverConfig};
use taxmech::mcwa::{self, IwfConfig, SeConfig};
use taxmech::mechanism::{
    efficient_flat_rate, taxed_payoffs, BudgetPlan, TaxBreakdown, TaxingRule,
};
use taxmech::normal_form::{pure_nash, social_optima, FiniteGame};
use taxmech::scenario::{
    load_scenario, parse_mcs_profile, parse_power_allocation, parse_strategy_profile, Meta,
    ScenarioBody, ScenarioFile,
};
use taxmech::{reproduce, sim};

#[derive(Parser)]
#[command(
    name = "taxmech",
    version,
    about = "Taxation mechanism and game solvers"
)]
struct Cli {
    /// Solver tolerance.
    #[arg(long, global = true)]
    tolerance: Option<f64>,
    /// Round cap for best-response and water-filling dynamics.
    #[arg(long, global = true)]
    max_rounds: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(clap::Args)]
struct RuleArgs {
    /// Flat tax rate; defaults to the efficient rate.
    #[arg(long)]
    rate: Option<f64>,
    /// Per-player exemptions; defaults to zero.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    exemptions: Option<Vec<f64>>,
    /// Budget factor.
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
}

impl RuleArgs {
    fn build(&self, n: usize) -> Result<(TaxingRule, BudgetPlan)> {
        let plan = BudgetPlan::new(self.beta)?;
        let exemptions = self.exemptions.clone().unwrap_or_else(|| vec![0.0; n]);
        if exemptions.len() != n {
            bail!("expected {n} exemptions, got {}", exemptions.len());
        }
        let rate = match self.rate {
            Some(r) => r,
            None => efficient_flat_rate(n, plan)?,
        };
        Ok((TaxingRule::flat(exemptions, rate)?, plan))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Solve a scenario file and print the equilibrium report.
    Solve {
        scenario: PathBuf,
        /// Solve the taxed game instead of the original.
        #[arg(long)]
        taxed: bool,
        /// Report the welfare optimum instead of an equilibrium.
        #[arg(long, conflicts_with = "taxed")]
        optimum: bool,
        #[command(flatten)]
        rule: RuleArgs,
    },
    /// Tax the payoffs of one profile.
    Tax {
        scenario: PathBuf,
        /// Normal form "0,1"; task selection "1,2;3;"; powers "2;0".
        #[arg(long)]
        profile: String,
        #[command(flatten)]
        rule: RuleArgs,
    },
    /// Reproduce a worked example or the welfare simulation.
    Reproduce {
        #[arg(value_enum)]
        which: Example,
        #[arg(long)]
        seed: Option<u64>,
        /// Directory for CSV and JSON outputs.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Trials per cell for the simulation.
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Print a random scenario file.
    Generate {
        #[arg(value_enum)]
        kind: GenKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        users: Option<usize>,
        /// Tasks (task selection) or channels (power allocation).
        #[arg(long)]
        size: Option<usize>,
        /// Task reward for task selection scenarios.
        #[arg(long, default_value_t = 1.0)]
        reward: f64,
        /// Cross gain scale relative to direct gains.
        #[arg(long, default_value_t = 0.3)]
        cross: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Example {
    Pd,
    McsExample,
    McwaExample,
    Fig7,
}

#[derive(Clone, Copy, ValueEnum)]
enum GenKind {
    Mcs,
    Mcwa,
}

struct Settings {
    mcs: SolverConfig,
    iwf: IwfConfig,
    se: SeConfig,
}

impl Settings {
    fn from_cli(cli: &Cli) -> Self {
        let mut mcs = SolverConfig::default();
        let mut iwf = IwfConfig::default();
        let se = SeConfig::default();
        if let Some(t) = cli.tolerance {
            mcs.tolerance = t;
            iwf.tolerance = t;
        }
        if let Some(r) = cli.max_rounds {
            mcs.max_br_rounds = r;
            iwf.max_rounds = r;
        }
        Settings { mcs, iwf, se }
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

#[derive(Serialize)]
struct NormalFormReport {
    nash: taxmech::normal_form::ProfileSet,
    social_optima: taxmech::normal_form::ProfileSet,
    #[serde(skip_serializing_if = "Option::is_none")]
    rule: Option<TaxingRule>,
}

#[derive(Serialize)]
struct McwaReport {
    allocation: mcwa::PowerAllocation,
    capacities: Vec<f64>,
    welfare: f64,
    converged: bool,
    rounds: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_change: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    global: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    taxed_payoffs: Option<Vec<f64>>,
}

fn solve_normal_form(
    game: &FiniteGame,
    rule: Option<(TaxingRule, BudgetPlan)>,
    fmt: Format,
) -> Result<()> {
    let played = match &rule {
        Some((r, plan)) => game.taxed(r, *plan)?,
        None => game.clone(),
    };
    let report = NormalFormReport {
        nash: pure_nash(&played),
        social_optima: social_optima(game),
        rule: rule.map(|(r, _)| r),
    };
    match fmt {
        Format::Json => print_json(&report),
        Format::Csv => {
            println!("profile,welfare");
            for (p, w) in report.nash.profiles.iter().zip(&report.nash.welfare) {
                let s: Vec<String> = p.iter().map(|x| x.to_string()).collect();
                println!("{},{}", s.join(" "), w);
            }
            Ok(())
        }
    }
}

fn solve(
    settings: &Settings,
    fmt: Format,
    file: &ScenarioFile,
    taxed: bool,
    optimum: bool,
    rule: &RuleArgs,
) -> Result<()> {
    match &file.body {
        ScenarioBody::NormalForm(game) => {
            let r = if taxed {
                Some(rule.build(game.n_players())?)
            } else {
                None
            };
            solve_normal_form(game, r, fmt)
        }
        ScenarioBody::Mcs(s) => {
            let report = if taxed {
                let (r, plan) = rule.build(s.n_users())?;
                solver::taxed_equilibrium(s, &r, plan, &settings.mcs)?
            } else if optimum {
                solver::social_optimum(s, &settings.mcs)?
            } else {
                solver::nash_equilibrium(s, &settings.mcs)?
            };
            match fmt {
                Format::Json => print_json(&report),
                Format::Csv => {
                    print!("{}", report.csv_summary());
                    Ok(())
                }
            }
        }
        ScenarioBody::Mcwa(s) => {
            let report = if taxed {
                let (r, plan) = rule.build(s.n_users())?;
                let t = mcwa::taxed_equilibrium_with(s, &r, plan, &settings.se, &settings.iwf)?;
                McwaReport {
                    allocation: t.allocation,
                    capacities: t.capacities,
                    welfare: t.welfare,
                    converged: t.converged,
                    rounds: t.rounds,
                    max_change: None,
                    global: Some(t.global),
                    taxed_payoffs: Some(t.taxed_payoffs),
                }
            } else if optimum {
                let r = mcwa::social_optimum(s, &settings.se)?;
                McwaReport {
                    capacities: mcwa::capacities(s, &r.allocation)?,
                    allocation: r.allocation,
                    welfare: r.welfare,
                    converged: true,
                    rounds: 0,
                    max_change: None,
                    global: Some(r.global),
                    taxed_payoffs: None,
                }
            } else {
                let r = mcwa::iterative_water_filling(s, &settings.iwf)?;
                let caps = mcwa::capacities(s, &r.allocation)?;
                McwaReport {
                    welfare: caps.iter().sum(),
                    capacities: caps,
                    allocation: r.allocation,
                    converged: r.converged,
                    rounds: r.rounds,
                    max_change: Some(r.max_change),
                    global: None,
                    taxed_payoffs: None,
                }
            };
            match fmt {
                Format::Json => print_json(&report),
                Format::Csv => {
                    print!("{}", mcwa::allocation_csv(s, &report.allocation)?);
                    Ok(())
                }
            }
        }
    }
}

fn tax(fmt: Format, file: &ScenarioFile, profile: &str, rule: &RuleArgs) -> Result<()> {
    let payoffs = match &file.body {
        ScenarioBody::NormalForm(g) => {
            let p = parse_strategy_profile(profile)?;
            let idx = g.profile_index(&p)?;
            g.payoff_row(idx).to_vec()
        }
        ScenarioBody::Mcs(s) => s.user_payoffs(&parse_mcs_profile(profile, s.n_users())?)?,
        ScenarioBody::Mcwa(s) => {
            let a = parse_power_allocation(profile, s.n_users(), s.n_channels())?;
            a.validate(s, 1e-9)?;
            mcwa::capacities(s, &a)?
        }
    };
    let (r, plan) = rule.build(payoffs.len())?;
    let b: TaxBreakdown = taxed_payoffs(&payoffs, &r, plan)?;
    match fmt {
        Format::Json => print_json(&b),
        Format::Csv => {
            println!("player,payoff,tax,redistributed_income,taxed_payoff");
            for i in 0..payoffs.len() {
                println!(
                    "{},{},{},{},{}",
                    i, payoffs[i], b.taxes[i], b.redistributed_income[i], b.taxed_payoffs[i]
                );
            }
            Ok(())
        }
    }
}

fn write_out(dir: &Path, name: &str, contents: &str) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn reproduce_cmd(
    settings: &Settings,
    fmt: Format,
    which: Example,
    seed: Option<u64>,
    out: Option<&Path>,
    trials: Option<usize>,
) -> Result<()> {
    match which {
        Example::Pd => {
            let r = reproduce::pd()?;
            if fmt == Format::Json {
                print_json(&r)?;
            } else {
                print!("{}", r.render());
            }
            if let Some(dir) = out {
                write_out(dir, "pd.json", &serde_json::to_string_pretty(&r)?)?;
            }
        }
        Example::McsExample => {
            let r = reproduce::mcs_example(&settings.mcs)?;
            print!("{}", r.render());
            if let Some(dir) = out {
                write_out(dir, "mcs_example.json", &serde_json::to_string_pretty(&r)?)?;
            }
        }
        Example::McwaExample => {
            let r = reproduce::mcwa_example(&settings.iwf, &settings.se)?;
            print!("{}", r.render());
            if let Some(dir) = out {
                write_out(dir, "mcwa_example.json", &serde_json::to_string_pretty(&r)?)?;
            }
        }
        Example::Fig7 => {
            let mut cfg = sim::SimConfig::default();
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(t) = trials {
                cfg.trials_per_cell = t;
            }
            let mut solver = sim::harness_solver();
            solver.tolerance = settings.mcs.tolerance;
            solver.max_br_rounds = settings.mcs.max_br_rounds;
            let r = sim::run_simulation_with(&cfg, &solver)?;
            match out {
                Some(dir) => {
                    write_out(dir, "trials.csv", &r.trials_csv())?;
                    write_out(dir, "cells.csv", &r.cells_csv())?;
                }
                None => print!("{}", r.cells_csv()),
            }
        }
    }
    Ok(())
}

fn generate(
    kind: GenKind,
    seed: u64,
    users: Option<usize>,
    size: Option<usize>,
    reward: f64,
    cross: f64,
    out: Option<&Path>,
) -> Result<()> {
    let body = match kind {
        GenKind::Mcs => {
            let cfg = sim::SimConfig {
                n_tasks: size.unwrap_or(10),
                ..sim::SimConfig::default()
            };
            ScenarioBody::Mcs(sim::generate_mcs(&cfg, reward, users.unwrap_or(4), seed)?)
        }
        GenKind::Mcwa => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            ScenarioBody::Mcwa(mcwa::random_scenario(
                &mut rng,
                users.unwrap_or(2),
                size.unwrap_or(2),
                cross,
            )?)
        }
    };
    let file = ScenarioFile::new(
        body,
        Meta {
            seed,
            description: "generated".into(),
        },
    );
    let text = file.to_json()?;
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let settings = Settings::from_cli(&cli);
    match &cli.command {
        Command::Solve {
            scenario,
            taxed,
            optimum,
            rule,
        } => {
            let file = load_scenario(scenario)?;
            solve(&settings, cli.format, &file, *taxed, *optimum, rule)
        }
        Command::Tax {
            scenario,
            profile,
            rule,
        } => {
            let file = load_scenario(scenario)?;
            tax(cli.format, &file, profile, rule)
        }
        Command::Reproduce {
            which,
            seed,
            out,
            trials,
        } => reproduce_cmd(
            &settings,
            cli.format,
            *which,
            *seed,
            out.as_deref(),
            *trials,
        ),
        Command::Generate {
            kind,
            seed,
            users,
            size,
            reward,
            cross,
            out,
        } => generate(*kind, *seed, *users, *size, *reward, *cross, out.as_deref()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let chain: Vec<String> = e.chain().map(|c| c.to_string()).collect();
            eprintln!("{}", serde_json::json!({ "error": chain.join(": ") }));
            ExitCode::FAILURE
        }
    }
}
