//! First phase: bank profit with weakly budget balanced actions and one-bit
//! feedback until a profit threshold is reached.
//!
//! Exponential weights over a multi-scale grid of upper-left actions
//! `(p, q)` with `p <= q`. The played arm's profit `(q - p) z` is known from
//! the trade bit alone, so each round updates the played arm with a
//! loss-form importance-weighted estimate.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::expweights::{sample_index, softmax};
use crate::gbb::LogBase;
use crate::mechanism::{BudgetClass, CallOrder, Mechanism, Phase};
use crate::trade::{BudgetLedger, FeedbackModel, FeedbackPayload, PricePair};
use crate::values::{stream_rng, streams};

#[derive(Debug, Clone, PartialEq)]
pub struct ActionGrid {
    k_prime: usize,
    scales: usize,
    actions: Vec<PricePair>,
}

impl ActionGrid {
    pub fn k_prime(&self) -> usize {
        self.k_prime
    }

    /// Number of scales `ceil(log T) + 1`.
    pub fn scales(&self) -> usize {
        self.scales
    }

    pub fn actions(&self) -> &[PricePair] {
        &self.actions
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// `ceil(log T)` in the given base (0 for `T = 1`).
pub fn log_ceil(horizon: usize, base: LogBase) -> usize {
    let l = base.log(horizon as f64);
    if l <= 0.0 {
        0
    } else {
        l.ceil() as usize
    }
}

/// For each `i in 1..=K'` and scale `j in 0..=ceil(log T)`, the actions
/// `(max(i/K' - 2^-j, 0), i/K')` then `(i/K', min(i/K' + 2^-j, 1))`.
/// Duplicates from clamping are kept so the grid has exactly
/// `2 K' (ceil(log T) + 1)` entries.
pub fn build_grid(k_prime: usize, horizon: usize, base: LogBase) -> ActionGrid {
    assert!(k_prime >= 1, "K' must be positive");
    let scales = log_ceil(horizon, base) + 1;
    let mut actions = Vec::with_capacity(2 * k_prime * scales);
    for i in 1..=k_prime {
        let anchor = i as f64 / k_prime as f64;
        for j in 0..scales {
            let delta = 0.5f64.powi(j as i32);
            actions.push(PricePair::new((anchor - delta).max(0.0), anchor).unwrap());
        }
        for j in 0..scales {
            let delta = 0.5f64.powi(j as i32);
            actions.push(PricePair::new(anchor, (anchor + delta).min(1.0)).unwrap());
        }
    }
    ActionGrid {
        k_prime,
        scales,
        actions,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Step {
    Post(PricePair),
    Terminated,
}

#[derive(Debug, Clone, Copy)]
struct Pending {
    arm: usize,
    prob: f64,
}

#[derive(Debug, Clone)]
pub struct ProfitMax {
    grid: ActionGrid,
    beta_prime: f64,
    horizon: usize,
    eta: f64,
    scores: Vec<f64>,
    ledger: BudgetLedger,
    terminated: bool,
    pending: Option<Pending>,
    rng: ChaCha8Rng,
    order: CallOrder,
}

impl ProfitMax {
    pub fn new(k_prime: usize, beta_prime: f64, horizon: usize, seed: u64) -> Self {
        Self::with_base(k_prime, beta_prime, horizon, seed, LogBase::Natural)
    }

    pub fn with_base(
        k_prime: usize,
        beta_prime: f64,
        horizon: usize,
        seed: u64,
        base: LogBase,
    ) -> Self {
        assert!(horizon >= 1, "horizon must be positive");
        assert!(beta_prime > 0.0, "profit threshold must be positive");
        let grid = build_grid(k_prime, horizon, base);
        let n = grid.len() as f64;
        let eta = (n.ln() / (horizon as f64 * n)).sqrt();
        Self {
            scores: vec![0.0; grid.len()],
            grid,
            beta_prime,
            horizon,
            eta,
            ledger: BudgetLedger::default(),
            terminated: false,
            pending: None,
            rng: stream_rng(seed, streams::PROFITMAX),
            order: CallOrder::default(),
        }
    }

    pub fn grid(&self) -> &ActionGrid {
        &self.grid
    }

    pub fn beta_prime(&self) -> f64 {
        self.beta_prime
    }

    pub fn learning_rate(&self) -> f64 {
        self.eta
    }

    pub fn cumulative_profit(&self) -> f64 {
        self.ledger.cumulative_profit
    }

    pub fn rounds_used(&self) -> usize {
        self.ledger.rounds_elapsed as usize
    }

    pub fn terminated(&self) -> bool {
        self.terminated
    }

    /// Current arm distribution.
    pub fn weights(&self) -> Vec<f64> {
        softmax(self.eta, &self.scores)
    }

    /// Samples the next action, or reports that the stopping rule has fired.
    pub fn next_action(&mut self) -> Result<Step> {
        if self.terminated {
            return Ok(Step::Terminated);
        }
        if self.pending.is_some() {
            return Err(Error::Usage(
                "ProfitMax: next action requested before feedback".into(),
            ));
        }
        let w = self.weights();
        let arm = sample_index(&w, self.rng.gen::<f64>());
        self.pending = Some(Pending { arm, prob: w[arm] });
        Ok(Step::Post(self.grid.actions[arm]))
    }

    /// Consumes the trade bit of the pending action. Returns the round's
    /// profit.
    pub fn observe_trade(&mut self, trade: bool) -> Result<f64> {
        if self.terminated {
            return Err(Error::Usage("ProfitMax: step after termination".into()));
        }
        let Pending { arm, prob } = self
            .pending
            .take()
            .ok_or_else(|| Error::Usage("ProfitMax: feedback without a pending action".into()))?;
        let a = self.grid.actions[arm];
        let profit = if trade {
            a.buyer_price() - a.seller_price()
        } else {
            0.0
        };
        self.scores[arm] -= (1.0 - profit) / prob;
        self.ledger.record(profit);
        if self.ledger.cumulative_profit >= self.beta_prime || self.rounds_used() >= self.horizon {
            self.terminated = true;
        }
        Ok(profit)
    }

    /// Feeds a one-bit payload for the pending action and returns the next
    /// step.
    pub fn step(&mut self, payload: &FeedbackPayload) -> Result<Step> {
        let trade = payload
            .trade
            .ok_or_else(|| Error::Usage("ProfitMax needs the trade bit".into()))?;
        self.observe_trade(trade)?;
        self.next_action()
    }

    fn restart(&mut self, seed: u64) {
        self.scores.iter_mut().for_each(|s| *s = 0.0);
        self.ledger = BudgetLedger::default();
        self.terminated = false;
        self.pending = None;
        self.rng = stream_rng(seed, streams::PROFITMAX);
        self.order.reset();
    }
}

/// Stand-alone ProfitMax: with an infinite threshold it plays all `T` rounds.
impl Mechanism for ProfitMax {
    fn name(&self) -> String {
        "profitmax-only".into()
    }

    fn feedback_model(&self) -> FeedbackModel {
        FeedbackModel::OneBit
    }

    fn budget_class(&self) -> BudgetClass {
        BudgetClass::Wbb
    }

    fn reset(&mut self, seed: u64) {
        self.restart(seed);
    }

    fn propose(&mut self, round: usize) -> Result<PricePair> {
        self.order.begin(round)?;
        match self.next_action()? {
            Step::Post(a) => Ok(a),
            Step::Terminated => Err(Error::Usage(format!(
                "ProfitMax terminated before round {round}"
            ))),
        }
    }

    fn phase(&self) -> Phase {
        Phase::ProfitMax
    }

    fn observe(&mut self, payload: &FeedbackPayload) -> Result<()> {
        self.order.end(payload, FeedbackModel::OneBit)?;
        self.observe_trade(payload.trade.unwrap_or(false))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trade::{make_feedback, trade_indicator, Valuation};

    #[test]
    fn smallest_grid() {
        let g = build_grid(1, 2, LogBase::Natural);
        let pairs: Vec<(f64, f64)> = g
            .actions()
            .iter()
            .map(|a| (a.seller_price(), a.buyer_price()))
            .collect();
        assert_eq!(pairs, vec![(0.0, 1.0), (0.5, 1.0), (1.0, 1.0), (1.0, 1.0)]);
    }

    #[test]
    fn grid_size_formula() {
        assert_eq!(log_ceil(1_000_000, LogBase::Natural), 14);
        assert_eq!(build_grid(4, 1_000_000, LogBase::Natural).len(), 120);
        for k in 1..8 {
            for t in [1usize, 2, 3, 10, 999, 100_000] {
                let g = build_grid(k, t, LogBase::Natural);
                assert_eq!(g.len(), 2 * k * (log_ceil(t, LogBase::Natural) + 1));
                assert!(g.actions().iter().all(PricePair::is_wbb));
            }
        }
        assert_eq!(log_ceil(1024, LogBase::Two), 10);
    }

    #[test]
    fn stops_once_threshold_banked() {
        let v = Valuation::new(0.0, 1.0).unwrap();
        for seed in 0..50 {
            let mut pm = ProfitMax::new(2, 0.5, 10_000, seed);
            let mut step = pm.next_action().unwrap();
            let mut rounds = 0;
            while let Step::Post(a) = step {
                assert!(a.is_wbb());
                rounds += 1;
                step = pm
                    .step(&make_feedback(FeedbackModel::OneBit, v, a))
                    .unwrap();
            }
            assert!(pm.cumulative_profit() >= 0.5);
            assert!(rounds < 200, "seed {seed}: {rounds} rounds");
            assert_eq!(pm.rounds_used(), rounds);
            assert!(matches!(pm.observe_trade(true), Err(Error::Usage(_))));
            assert_eq!(pm.next_action().unwrap(), Step::Terminated);
        }
    }

    #[test]
    fn stops_at_horizon_without_profit() {
        let v = Valuation::new(1.0, 0.0).unwrap();
        let mut pm = ProfitMax::new(3, 1.0, 40, 7);
        let mut rounds = 0;
        while let Step::Post(a) = pm.next_action().unwrap() {
            let z = trade_indicator(v, a);
            assert_eq!(pm.observe_trade(z).unwrap(), if z { a.buyer_price() - a.seller_price() } else { 0.0 });
            rounds += 1;
        }
        assert_eq!(rounds, 40);
        assert!(pm.cumulative_profit() < 1.0);
    }

    #[test]
    fn weights_stay_normalized() {
        let v = Valuation::new(0.2, 0.9).unwrap();
        let mut pm = ProfitMax::new(4, f64::INFINITY, 5000, 3);
        while let Step::Post(a) = pm.next_action().unwrap() {
            let w = pm.weights();
            assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            pm.observe_trade(trade_indicator(v, a)).unwrap();
        }
    }

    #[test]
    fn double_request_is_usage_error() {
        let mut pm = ProfitMax::new(2, 1.0, 10, 0);
        pm.next_action().unwrap();
        assert!(matches!(pm.next_action(), Err(Error::Usage(_))));
    }
}
