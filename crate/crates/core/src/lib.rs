//! Repeated bilateral trade with fixed-price mechanisms.
//!
//! The centerpiece is [`gbb::GbbSemi`], a globally budget balanced mechanism
//! that observes the seller's value and the trade outcome each round. It
//! first banks profit with [`profitmax::ProfitMax`] and then runs
//! exponential weights over near-diagonal prices with importance-weighted
//! estimates. [`oracle`] computes the hindsight benchmark, [`harness`] runs
//! experiments and [`lemmas`] checks the per-round guarantees numerically.

pub mod error;
pub mod expweights;
pub mod gbb;
pub mod harness;
pub mod lemmas;
pub mod mechanism;
pub mod oracle;
pub mod profitmax;
pub mod trade;
pub mod values;

pub use error::{Error, Result};
pub use gbb::{run_gbb_semi, run_gbb_semi_mode, surrogate_gft, GbbRun, GbbSemi, Mode, Params};
pub use mechanism::{run_mechanism, BudgetClass, Mechanism, Phase, RoundRecord};
pub use oracle::{best_fixed_price, k_star, per_round_regret, BenchmarkResult};
pub use trade::{
    gft, make_feedback, profit, trade_indicator, BudgetLedger, FeedbackModel, FeedbackPayload,
    PricePair, Valuation,
};
pub use values::{builtin_instance, load_instance, realize, InstanceSpec, ValueSequence};
