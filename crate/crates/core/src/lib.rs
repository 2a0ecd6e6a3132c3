//! Taxation mechanism for steering static games to efficient, fair
//! equilibria, with solvers for normal-form games, mobile crowdsensing task
//! selection and multi-channel wireless power allocation.

pub mod error;
pub mod mcs;
pub mod mcwa;
pub mod mechanism;
pub mod normal_form;
pub mod reproduce;
pub mod scenario;
pub mod sim;

pub use error::{Error, Result};
pub use mechanism::{BudgetPlan, PayoffGame, TaxBreakdown, TaxedGame, TaxingRule};
