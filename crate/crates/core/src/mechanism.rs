//! The mechanism contract and the simulation loop that drives it.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trade::{self, BudgetLedger, FeedbackModel, FeedbackPayload, PricePair};
use crate::values::ValueSequence;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BudgetClass {
    /// Strong: every round has zero profit.
    Sbb,
    /// Weak: every round has nonnegative profit.
    Wbb,
    /// Global: total profit over the horizon is nonnegative.
    Gbb,
}

/// Which part of a mechanism produced a round's action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    ProfitMax,
    Phase2,
    SafetyValve,
    /// A baseline posting a fixed action.
    Fixed,
}

impl Phase {
    pub fn as_str(&self) -> &'static str {
        match self {
            Phase::ProfitMax => "profitmax",
            Phase::Phase2 => "phase2",
            Phase::SafetyValve => "safety_valve",
            Phase::Fixed => "fixed",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A repeated fixed-price mechanism.
///
/// Each round is exactly one [`propose`](Mechanism::propose) followed by one
/// [`observe`](Mechanism::observe) carrying a payload of the declared
/// [`feedback_model`](Mechanism::feedback_model). Anything else is a usage
/// error.
pub trait Mechanism {
    fn name(&self) -> String;

    fn feedback_model(&self) -> FeedbackModel;

    fn budget_class(&self) -> BudgetClass;

    /// Restarts the mechanism from round 1 with fresh randomness.
    fn reset(&mut self, seed: u64);

    /// The action for `round` (1-based).
    fn propose(&mut self, round: usize) -> Result<PricePair>;

    /// Phase of the most recently proposed action.
    fn phase(&self) -> Phase;

    fn observe(&mut self, payload: &FeedbackPayload) -> Result<()>;
}

/// Enforces the propose/observe alternation for mechanism implementations.
#[derive(Debug, Clone, Default)]
pub struct CallOrder {
    last_round: usize,
    awaiting_feedback: bool,
}

impl CallOrder {
    pub fn begin(&mut self, round: usize) -> Result<()> {
        if self.awaiting_feedback {
            return Err(Error::Usage(format!(
                "propose({round}) called before observe for round {}",
                self.last_round
            )));
        }
        if round != self.last_round + 1 {
            return Err(Error::Usage(format!(
                "propose({round}) out of order (expected round {})",
                self.last_round + 1
            )));
        }
        self.last_round = round;
        self.awaiting_feedback = true;
        Ok(())
    }

    pub fn end(&mut self, payload: &FeedbackPayload, model: FeedbackModel) -> Result<()> {
        if !self.awaiting_feedback {
            return Err(Error::Usage("observe called without a pending action".into()));
        }
        if payload.model() != Some(model) {
            return Err(Error::Usage(format!(
                "payload does not match declared feedback model {model:?}"
            )));
        }
        self.awaiting_feedback = false;
        Ok(())
    }

    pub fn reset(&mut self) {
        *self = Self::default();
    }
}

/// One audited round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub action: PricePair,
    pub trade: bool,
    pub gft: f64,
    pub profit: f64,
    pub cumulative_profit: f64,
    pub phase: Phase,
}

/// Plays `mech` against `seq`. The loop builds only the payload of the
/// mechanism's declared feedback model.
pub fn run_mechanism(
    mech: &mut dyn Mechanism,
    seq: &ValueSequence,
    seed: u64,
) -> Result<Vec<RoundRecord>> {
    mech.reset(seed);
    let model = mech.feedback_model();
    let mut ledger = BudgetLedger::default();
    let mut records = Vec::with_capacity(seq.len());
    for (i, v) in seq.iter().enumerate() {
        let round = i + 1;
        let action = mech.propose(round)?;
        let phase = mech.phase();
        let trade = trade::trade_indicator(*v, action);
        let profit = trade::profit(*v, action);
        ledger.record(profit);
        records.push(RoundRecord {
            round,
            action,
            trade,
            gft: trade::gft(*v, action),
            profit,
            cumulative_profit: ledger.cumulative_profit,
            phase,
        });
        mech.observe(&trade::make_feedback(model, *v, action))?;
    }
    Ok(records)
}

/// Posts the same weakly budget balanced action every round.
#[derive(Debug, Clone)]
pub struct ConstantPrice {
    action: PricePair,
    order: CallOrder,
}

impl ConstantPrice {
    pub fn new(action: PricePair) -> Result<Self> {
        if !action.is_wbb() {
            return Err(Error::Config(format!(
                "constant action ({}, {}) subsidizes trades",
                action.seller_price(),
                action.buyer_price()
            )));
        }
        Ok(Self {
            action,
            order: CallOrder::default(),
        })
    }

    pub fn diagonal(price: f64) -> Result<Self> {
        Self::new(PricePair::diagonal(price)?)
    }
}

impl Mechanism for ConstantPrice {
    fn name(&self) -> String {
        if self.action.seller_price() == self.action.buyer_price() {
            format!("constant:{}", self.action.seller_price())
        } else {
            format!(
                "constant:{},{}",
                self.action.seller_price(),
                self.action.buyer_price()
            )
        }
    }

    fn feedback_model(&self) -> FeedbackModel {
        FeedbackModel::OneBit
    }

    fn budget_class(&self) -> BudgetClass {
        if self.action.seller_price() == self.action.buyer_price() {
            BudgetClass::Sbb
        } else {
            BudgetClass::Wbb
        }
    }

    fn reset(&mut self, _seed: u64) {
        self.order.reset();
    }

    fn propose(&mut self, round: usize) -> Result<PricePair> {
        self.order.begin(round)?;
        Ok(self.action)
    }

    fn phase(&self) -> Phase {
        Phase::Fixed
    }

    fn observe(&mut self, payload: &FeedbackPayload) -> Result<()> {
        self.order.end(payload, FeedbackModel::OneBit)
    }
}
