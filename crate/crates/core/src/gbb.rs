//! GBB-Semi: ProfitMax for a profit cushion, then exponential weights over
//! the `K` near-diagonal arms `(k/K, (k-1)/K)` with seller-value-and-trade
//! feedback, plus a safety valve that switches to a diagonal action once the
//! cushion is nearly spent.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expweights::{sample_index, softmax};
use crate::mechanism::{run_mechanism, BudgetClass, CallOrder, Mechanism, Phase, RoundRecord};
use crate::profitmax::ProfitMax;
use crate::trade::{make_feedback, BudgetLedger, FeedbackModel, FeedbackPayload, PricePair, Valuation};
use crate::values::{stream_rng, streams, ValueSequence};

/// Action posted once the safety valve fires.
pub const VALVE_PRICE: f64 = 0.5;

/// The valve fires after a phase-2 round leaves cumulative profit at or
/// below this level.
pub const VALVE_LEVEL: f64 = 1.0;

/// Logarithm used for `log T` in the discretization formula and the
/// ProfitMax grid. `ln K` in the learning rate is always natural.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogBase {
    #[default]
    Natural,
    Two,
    Ten,
}

impl LogBase {
    pub fn log(self, x: f64) -> f64 {
        match self {
            LogBase::Natural => x.ln(),
            LogBase::Two => x.log2(),
            LogBase::Ten => x.log10(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub horizon: usize,
    /// Number of near-diagonal arms `K`.
    pub arms: usize,
    /// ProfitMax threshold `3T / (K + 1)`.
    pub beta: f64,
    /// Learning rate `sqrt(ln K / (T (K + 1)))`.
    pub eta: f64,
    /// Exploration rate `1 / (K + 1)`.
    pub gamma: f64,
    pub log_base: LogBase,
}

impl Params {
    /// `K = max(1, floor(T^{1/3} (log T)^{-2/3} / 4))` and everything that
    /// follows from it.
    pub fn from_horizon(horizon: usize) -> Result<Self> {
        Self::from_horizon_with_base(horizon, LogBase::Natural)
    }

    pub fn from_horizon_with_base(horizon: usize, base: LogBase) -> Result<Self> {
        if horizon < 2 {
            return Err(Error::Config(format!("T must be at least 2, got {horizon}")));
        }
        let t = horizon as f64;
        let raw = 0.25 * t.cbrt() * base.log(t).powf(-2.0 / 3.0);
        let arms = (raw.floor() as usize).max(1);
        let mut p = Self::with_arms(horizon, arms)?;
        p.log_base = base;
        Ok(p)
    }

    /// Parameters for an explicit `K`. With `K = 1` the learning rate uses
    /// `ln 2` in place of `ln 1 = 0`; a single arm ignores it anyway.
    pub fn with_arms(horizon: usize, arms: usize) -> Result<Self> {
        if horizon < 1 {
            return Err(Error::Config("T must be positive".into()));
        }
        if arms < 1 {
            return Err(Error::Config("K must be positive".into()));
        }
        let t = horizon as f64;
        let k1 = (arms + 1) as f64;
        let ln_k = if arms >= 2 { (arms as f64).ln() } else { 2f64.ln() };
        Ok(Self {
            horizon,
            arms,
            beta: 3.0 * t / k1,
            eta: (ln_k / (t * k1)).sqrt(),
            gamma: 1.0 / k1,
            log_base: LogBase::Natural,
        })
    }

    /// Overrides the ProfitMax threshold (diagnostics only).
    pub fn with_beta(mut self, beta: f64) -> Result<Self> {
        if beta.is_nan() || beta <= 0.0 {
            return Err(Error::Config(format!("beta must be positive, got {beta}")));
        }
        self.beta = beta;
        Ok(self)
    }
}

/// Seller price of arm `k`.
pub fn arm_high(k: usize, arms: usize) -> f64 {
    k as f64 / arms as f64
}

/// Buyer price of arm `k`.
pub fn arm_low(k: usize, arms: usize) -> f64 {
    (k - 1) as f64 / arms as f64
}

/// `(k/K, (k-1)/K)`.
pub fn near_diagonal_action(k: usize, arms: usize) -> PricePair {
    assert!((1..=arms).contains(&k), "arm {k} outside 1..={arms}");
    PricePair::new(arm_high(k, arms), arm_low(k, arms)).unwrap()
}

fn pos(x: f64) -> f64 {
    x.max(0.0)
}

/// `[b - (k-1)/K]_+ 1[s <= k/K] + [k/K - s]_+ 1[(k-1)/K <= b]`.
///
/// Exceeds the GFT of arm `k` by at most `1/K`, and at `k*` is at least the
/// benchmark GFT.
pub fn surrogate_gft(v: Valuation, k: usize, arms: usize) -> f64 {
    assert!((1..=arms).contains(&k), "arm {k} outside 1..={arms}");
    let (lo, hi) = (arm_low(k, arms), arm_high(k, arms));
    let (s, b) = (v.seller(), v.buyer());
    let left = if s <= hi { pos(b - lo) } else { 0.0 };
    let right = if lo <= b { pos(hi - s) } else { 0.0 };
    left + right
}

/// The mechanism's randomness for one phase-2 round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RoundDraw {
    /// `A = 1`: post `(1, q)` with `q ~ Unif[0, 1]`.
    RightBoundary { buyer_price: f64 },
    /// `A = 0`: post arm `k ~ w` (1-based).
    NearDiagonal { arm: usize },
}

impl RoundDraw {
    pub fn sample(rng: &mut impl Rng, gamma: f64, weights: &[f64]) -> Self {
        if rng.gen::<f64>() < gamma {
            RoundDraw::RightBoundary {
                buyer_price: rng.gen::<f64>(),
            }
        } else {
            RoundDraw::NearDiagonal {
                arm: sample_index(weights, rng.gen::<f64>()) + 1,
            }
        }
    }

    pub fn action(&self, arms: usize) -> PricePair {
        match *self {
            RoundDraw::RightBoundary { buyer_price } => PricePair::new(1.0, buyer_price).unwrap(),
            RoundDraw::NearDiagonal { arm } => near_diagonal_action(arm, arms),
        }
    }
}

/// Importance-weighted estimates `ĜFT_k` for every arm from the seller value
/// and trade bit alone:
///
/// `(1 - A/γ (1 - 1[s <= k/K ∧ (k-1)/K <= q] z))
///  + (1 - (1-A)/(1-γ) 1[k_t = k]/w_k (1 - [k/K - s]_+ z))`.
///
/// Each term is at most 1, so every estimate is at most 2.
pub fn estimate_gft(
    arms: usize,
    gamma: f64,
    weights: &[f64],
    draw: RoundDraw,
    seller_value: f64,
    trade: bool,
) -> Vec<f64> {
    let z = if trade { 1.0 } else { 0.0 };
    (1..=arms)
        .map(|k| {
            let (lo, hi) = (arm_low(k, arms), arm_high(k, arms));
            match draw {
                RoundDraw::RightBoundary { buyer_price } => {
                    let hit = if seller_value <= hi && lo <= buyer_price { z } else { 0.0 };
                    (1.0 - (1.0 - hit) / gamma) + 1.0
                }
                RoundDraw::NearDiagonal { arm } => {
                    let second = if arm == k {
                        1.0 - (1.0 - pos(hi - seller_value) * z) / ((1.0 - gamma) * weights[k - 1])
                    } else {
                        1.0
                    };
                    1.0 + second
                }
            }
        })
        .collect()
}

/// Running sums of the quantities in the exploitation inequality
/// `Σ_t (ĜFT_{k*} - <w, ĜFT>) <= ln K / η + η/2 Σ_t Σ_k w_k (2 - ĜFT_k)^2`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Phase2Trace {
    pub rounds: usize,
    /// `Σ_t <w^t, ĜFT^t>`.
    pub sum_weighted_estimate: f64,
    /// `Σ_t Σ_k w_k^t (2 - ĜFT_k^t)^2`.
    pub sum_second_moment: f64,
    /// Largest `|Σ_k w_k^t - 1|` seen.
    pub max_weight_error: f64,
    /// Largest single estimate seen.
    pub max_estimate: f64,
}

impl Phase2Trace {
    fn push(&mut self, weights: &[f64], estimates: &[f64]) {
        self.rounds += 1;
        let mut inner = 0.0;
        let mut moment = 0.0;
        for (w, g) in weights.iter().zip(estimates) {
            inner += w * g;
            moment += w * (2.0 - g) * (2.0 - g);
        }
        let round_max = estimates.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        self.max_estimate = if self.rounds == 1 {
            round_max
        } else {
            self.max_estimate.max(round_max)
        };
        self.sum_weighted_estimate += inner;
        self.sum_second_moment += moment;
        let err = (weights.iter().sum::<f64>() - 1.0).abs();
        self.max_weight_error = self.max_weight_error.max(err);
    }
}

/// Outcome of the exploitation inequality on one trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExploitationCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

impl ExploitationCheck {
    /// Relative slack `(rhs - lhs) / max(|rhs|, 1)`.
    pub fn margin(&self) -> f64 {
        (self.rhs - self.lhs) / self.rhs.abs().max(1.0)
    }
}

/// Checks the inequality for arm `k` at relative tolerance `rel_tol`.
pub fn check_exploitation(
    cumulative_estimates: &[f64],
    trace: &Phase2Trace,
    k: usize,
    eta: f64,
    rel_tol: f64,
) -> ExploitationCheck {
    let arms = cumulative_estimates.len();
    let lhs = cumulative_estimates[k - 1] - trace.sum_weighted_estimate;
    let rhs = (arms as f64).ln() / eta + 0.5 * eta * trace.sum_second_moment;
    ExploitationCheck {
        lhs,
        rhs,
        holds: lhs <= rhs + rel_tol * rhs.abs().max(1.0),
    }
}

/// Exponential-weights state for phase 2.
#[derive(Debug, Clone, PartialEq)]
pub struct Phase2State {
    /// `Σ_r ĜFT_k^r` over phase-2 rounds so far.
    pub cumulative_estimates: Vec<f64>,
    pub round: usize,
    pub ledger: BudgetLedger,
    pub safety_valve_active: bool,
}

/// What a phase-2 round posted and learned.
#[derive(Debug, Clone, PartialEq)]
pub struct Phase2Outcome {
    pub action: PricePair,
    pub trade: bool,
    pub profit: f64,
    pub weights: Vec<f64>,
    pub estimates: Vec<f64>,
}

impl Phase2State {
    /// Fresh state carrying `banked_profit` from earlier rounds.
    pub fn new(arms: usize, banked_profit: f64) -> Self {
        Self {
            cumulative_estimates: vec![0.0; arms],
            round: 0,
            ledger: BudgetLedger {
                cumulative_profit: banked_profit,
                rounds_elapsed: 0,
            },
            safety_valve_active: false,
        }
    }

    /// `w^t`, computed in the log domain.
    pub fn weights(&self, eta: f64) -> Vec<f64> {
        softmax(eta, &self.cumulative_estimates)
    }

    /// Applies the feedback `(s, z)` for an action drawn with `weights`.
    pub fn update(
        &mut self,
        params: &Params,
        weights: &[f64],
        draw: RoundDraw,
        payload: &FeedbackPayload,
    ) -> Result<Phase2Outcome> {
        if self.safety_valve_active {
            return Err(Error::Usage("phase-2 round after the safety valve fired".into()));
        }
        let (Some(s), Some(trade)) = (payload.seller_value, payload.trade) else {
            return Err(Error::Usage("phase 2 needs the seller value and trade bit".into()));
        };
        let action = draw.action(params.arms);
        let estimates = estimate_gft(params.arms, params.gamma, weights, draw, s, trade);
        for (acc, g) in self.cumulative_estimates.iter_mut().zip(&estimates) {
            *acc += g;
        }
        let profit = if trade {
            action.buyer_price() - action.seller_price()
        } else {
            0.0
        };
        self.ledger.record(profit);
        self.round += 1;
        if self.ledger.cumulative_profit <= VALVE_LEVEL {
            self.safety_valve_active = true;
        }
        Ok(Phase2Outcome {
            action,
            trade,
            profit,
            weights: weights.to_vec(),
            estimates,
        })
    }

    /// One self-contained round against value `v`: the environment reveals
    /// only `(s, z)`.
    pub fn play_round(
        &mut self,
        params: &Params,
        v: Valuation,
        draw: RoundDraw,
    ) -> Result<Phase2Outcome> {
        let weights = self.weights(params.eta);
        let payload = make_feedback(FeedbackModel::SemiSellerTrade, v, draw.action(params.arms));
        self.update(params, &weights, draw, &payload)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// ProfitMax, then phase 2, then the valve.
    #[default]
    Full,
    /// Diagnostic: skip ProfitMax and credit a virtual budget `β`. Not GBB.
    Phase2Only,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stage {
    ProfitMax,
    Phase2,
    Valve,
}

#[derive(Debug, Clone)]
struct PendingDraw {
    weights: Vec<f64>,
    draw: RoundDraw,
}

#[derive(Debug, Clone)]
pub struct GbbSemi {
    params: Params,
    mode: Mode,
    profitmax: ProfitMax,
    phase2: Phase2State,
    stage: Stage,
    last_phase: Phase,
    pending: Option<PendingDraw>,
    trace: Phase2Trace,
    t_prime: usize,
    valve_round: Option<usize>,
    current_round: usize,
    rng: ChaCha8Rng,
    order: CallOrder,
}

impl GbbSemi {
    pub fn new(params: Params, mode: Mode, seed: u64) -> Self {
        let mut mech = Self {
            params,
            mode,
            profitmax: ProfitMax::with_base(
                params.arms,
                params.beta,
                params.horizon,
                seed,
                params.log_base,
            ),
            phase2: Phase2State::new(params.arms, 0.0),
            stage: Stage::ProfitMax,
            last_phase: Phase::ProfitMax,
            pending: None,
            trace: Phase2Trace::default(),
            t_prime: 0,
            valve_round: None,
            current_round: 0,
            rng: stream_rng(seed, streams::PHASE2),
            order: CallOrder::default(),
        };
        mech.reset(seed);
        mech
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Rounds spent in ProfitMax.
    pub fn t_prime(&self) -> usize {
        self.t_prime
    }

    /// Last round played before the valve took over.
    pub fn valve_round(&self) -> Option<usize> {
        self.valve_round
    }

    pub fn phase2_state(&self) -> &Phase2State {
        &self.phase2
    }

    pub fn trace(&self) -> &Phase2Trace {
        &self.trace
    }

    pub fn current_weights(&self) -> Vec<f64> {
        self.phase2.weights(self.params.eta)
    }

    fn enter_phase2(&mut self, banked: f64) {
        self.phase2 = Phase2State::new(self.params.arms, banked);
        self.stage = Stage::Phase2;
    }
}

impl Mechanism for GbbSemi {
    fn name(&self) -> String {
        match self.mode {
            Mode::Full => "gbb-semi".into(),
            Mode::Phase2Only => "gbb-semi[phase2-only]".into(),
        }
    }

    fn feedback_model(&self) -> FeedbackModel {
        FeedbackModel::SemiSellerTrade
    }

    fn budget_class(&self) -> BudgetClass {
        BudgetClass::Gbb
    }

    fn reset(&mut self, seed: u64) {
        self.profitmax = ProfitMax::with_base(
            self.params.arms,
            self.params.beta,
            self.params.horizon,
            seed,
            self.params.log_base,
        );
        self.rng = stream_rng(seed, streams::PHASE2);
        self.pending = None;
        self.trace = Phase2Trace::default();
        self.t_prime = 0;
        self.valve_round = None;
        self.current_round = 0;
        self.order.reset();
        match self.mode {
            Mode::Full => {
                self.phase2 = Phase2State::new(self.params.arms, 0.0);
                self.stage = Stage::ProfitMax;
            }
            Mode::Phase2Only => self.enter_phase2(self.params.beta),
        }
    }

    fn propose(&mut self, round: usize) -> Result<PricePair> {
        self.order.begin(round)?;
        self.current_round = round;
        if self.stage == Stage::ProfitMax {
            match self.profitmax.next_action()? {
                crate::profitmax::Step::Post(a) => {
                    self.last_phase = Phase::ProfitMax;
                    return Ok(a);
                }
                crate::profitmax::Step::Terminated => {
                    let banked = self.profitmax.cumulative_profit();
                    self.enter_phase2(banked);
                }
            }
        }
        match self.stage {
            Stage::Phase2 => {
                let weights = self.phase2.weights(self.params.eta);
                let draw = RoundDraw::sample(&mut self.rng, self.params.gamma, &weights);
                let action = draw.action(self.params.arms);
                self.pending = Some(PendingDraw { weights, draw });
                self.last_phase = Phase::Phase2;
                Ok(action)
            }
            Stage::Valve => {
                self.last_phase = Phase::SafetyValve;
                Ok(PricePair::diagonal(VALVE_PRICE).unwrap())
            }
            Stage::ProfitMax => unreachable!("ProfitMax stage handled above"),
        }
    }

    fn phase(&self) -> Phase {
        self.last_phase
    }

    fn observe(&mut self, payload: &FeedbackPayload) -> Result<()> {
        self.order.end(payload, FeedbackModel::SemiSellerTrade)?;
        match self.last_phase {
            Phase::ProfitMax => {
                self.profitmax.observe_trade(payload.trade.unwrap_or(false))?;
                self.t_prime += 1;
                if self.profitmax.terminated() {
                    let banked = self.profitmax.cumulative_profit();
                    self.enter_phase2(banked);
                }
            }
            Phase::Phase2 => {
                let PendingDraw { weights, draw } = self
                    .pending
                    .take()
                    .ok_or_else(|| Error::Usage("no pending phase-2 draw".into()))?;
                let outcome = self.phase2.update(&self.params, &weights, draw, payload)?;
                self.trace.push(&outcome.weights, &outcome.estimates);
                if self.phase2.safety_valve_active {
                    self.stage = Stage::Valve;
                    self.valve_round = Some(self.current_round);
                }
            }
            Phase::SafetyValve | Phase::Fixed => {}
        }
        Ok(())
    }
}

/// Records plus the diagnostics the audits need.
#[derive(Debug, Clone)]
pub struct GbbRun {
    pub records: Vec<RoundRecord>,
    pub t_prime: usize,
    pub valve_round: Option<usize>,
    pub trace: Phase2Trace,
    pub cumulative_estimates: Vec<f64>,
    pub final_weights: Vec<f64>,
}

pub fn run_gbb_semi(params: Params, seq: &ValueSequence, seed: u64) -> Result<GbbRun> {
    run_gbb_semi_mode(params, Mode::Full, seq, seed)
}

pub fn run_gbb_semi_mode(
    params: Params,
    mode: Mode,
    seq: &ValueSequence,
    seed: u64,
) -> Result<GbbRun> {
    if seq.len() != params.horizon {
        return Err(Error::LengthMismatch {
            expected: params.horizon,
            actual: seq.len(),
        });
    }
    let mut mech = GbbSemi::new(params, mode, seed);
    let records = run_mechanism(&mut mech, seq, seed)?;
    Ok(GbbRun {
        records,
        t_prime: mech.t_prime(),
        valve_round: mech.valve_round(),
        trace: mech.trace().clone(),
        cumulative_estimates: mech.phase2_state().cumulative_estimates.clone(),
        final_weights: mech.current_weights(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(s: f64, b: f64) -> Valuation {
        Valuation::new(s, b).unwrap()
    }

    #[test]
    fn params_at_one_million() {
        let p = Params::from_horizon(1_000_000).unwrap();
        assert_eq!(p.arms, 4);
        assert_eq!(p.gamma, 0.2);
        assert_eq!(p.beta, 600_000.0);
        assert!((p.eta - 5.266e-4).abs() < 1e-7, "eta = {}", p.eta);
        assert_eq!(p.eta, (4f64.ln() / 5e6).sqrt());
    }

    #[test]
    fn params_small_horizon_clamps() {
        let p = Params::from_horizon(2).unwrap();
        assert_eq!(p.arms, 1);
        assert_eq!(p.eta, (2f64.ln() / 4.0).sqrt());
        assert!(Params::from_horizon(1).is_err());
        assert!(Params::from_horizon(0).is_err());
    }

    #[test]
    fn gamma_identity() {
        for t in (2..2000).chain([10_000, 123_456, 1_000_000, 10_000_000]) {
            let p = Params::from_horizon(t).unwrap();
            assert_eq!(p.gamma * (p.arms + 1) as f64, 1.0, "T = {t}");
            assert_eq!(p.beta, 3.0 * t as f64 / (p.arms + 1) as f64);
        }
    }

    #[test]
    fn log_base_changes_k() {
        let nat = Params::from_horizon(1_000_000).unwrap();
        let ten = Params::from_horizon_with_base(1_000_000, LogBase::Ten).unwrap();
        assert!(ten.arms > nat.arms);
    }

    #[test]
    fn surrogate_examples() {
        assert!((surrogate_gft(v(0.3, 0.7), 2, 5) - 0.6).abs() < 1e-15);
        assert_eq!(surrogate_gft(v(1.0, 0.0), 1, 1), 0.0);
    }

    #[test]
    fn right_boundary_estimate() {
        let w = vec![0.2; 5];
        let draw = RoundDraw::RightBoundary { buyer_price: 0.5 };
        let action = draw.action(5);
        assert_eq!(action, PricePair::new(1.0, 0.5).unwrap());
        let z = crate::trade::trade_indicator(v(0.3, 0.7), action);
        assert!(z);
        let est = estimate_gft(5, 0.2, &w, draw, 0.3, z);
        assert!((est[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn near_diagonal_estimate() {
        let w = vec![0.1, 0.5, 0.2, 0.1, 0.1];
        let draw = RoundDraw::NearDiagonal { arm: 2 };
        let action = draw.action(5);
        assert_eq!(action, PricePair::new(0.4, 0.2).unwrap());
        let z = crate::trade::trade_indicator(v(0.3, 0.7), action);
        assert!(z);
        let est = estimate_gft(5, 0.2, &w, draw, 0.3, z);
        // 1 + (1 - (1/0.8)(1/0.5)(1 - 0.1)) = 2 - 2.25
        assert!((est[1] + 0.25).abs() < 1e-12, "{}", est[1]);
        assert_eq!(est[2], 2.0);
        assert_eq!(est[0], 2.0);
    }

    #[test]
    fn play_round_sees_only_seller_value_and_trade() {
        let params = Params::with_arms(100, 5).unwrap();
        let mut st = Phase2State::new(5, 10.0);
        let out = st
            .play_round(&params, v(0.3, 0.7), RoundDraw::NearDiagonal { arm: 2 })
            .unwrap();
        assert!(out.trade);
        assert!((out.profit + 0.2).abs() < 1e-12);
        assert!((st.ledger.cumulative_profit - 9.8).abs() < 1e-12);
        assert_eq!(st.round, 1);
        let missing = FeedbackPayload {
            trade: Some(true),
            ..Default::default()
        };
        let w = st.weights(params.eta);
        assert!(matches!(
            st.update(&params, &w, RoundDraw::NearDiagonal { arm: 1 }, &missing),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn valve_blocks_further_phase2_rounds() {
        let params = Params::with_arms(100, 2).unwrap();
        let mut st = Phase2State::new(2, 1.5);
        let out = st
            .play_round(&params, v(0.2, 0.9), RoundDraw::RightBoundary { buyer_price: 0.1 })
            .unwrap();
        assert!((out.profit + 0.9).abs() < 1e-12);
        assert!(st.safety_valve_active);
        assert!(matches!(
            st.play_round(&params, v(0.2, 0.9), RoundDraw::NearDiagonal { arm: 1 }),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn no_profit_means_no_phase2() {
        let t = 300;
        let params = Params::from_horizon(t).unwrap();
        let seq = ValueSequence::new(vec![v(1.0, 0.0); t]).unwrap();
        let run = run_gbb_semi(params, &seq, 11).unwrap();
        assert_eq!(run.t_prime, t);
        assert!(run.records.iter().all(|r| r.phase == Phase::ProfitMax));
        assert_eq!(run.trace.rounds, 0);
    }

    #[test]
    fn horizon_mismatch_is_rejected() {
        let params = Params::from_horizon(10).unwrap();
        let seq = ValueSequence::new(vec![v(0.1, 0.2); 9]).unwrap();
        assert!(matches!(
            run_gbb_semi(params, &seq, 0),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn phases_follow_in_order() {
        // A small beta forces the hand-off to phase 2 and, eventually, the valve.
        let t = 5_000;
        let params = Params::with_arms(t, 4).unwrap().with_beta(3.0).unwrap();
        let seq = ValueSequence::new(
            (0..t)
                .map(|i| if i % 2 == 0 { v(0.0, 1.0) } else { v(0.9, 0.95) })
                .collect(),
        )
        .unwrap();
        let run = run_gbb_semi(params, &seq, 5).unwrap();
        let rank = |p: Phase| match p {
            Phase::ProfitMax => 0,
            Phase::Phase2 => 1,
            Phase::SafetyValve => 2,
            Phase::Fixed => 3,
        };
        assert!(run.records.windows(2).all(|w| rank(w[0].phase) <= rank(w[1].phase)));
        assert!(run.t_prime < t);
        let banked = run.records[run.t_prime - 1].cumulative_profit;
        assert!(banked >= 3.0);
        assert!(run.records.iter().any(|r| r.phase == Phase::Phase2));
        assert!(run.records.last().unwrap().cumulative_profit >= 0.0);
        if let Some(vr) = run.valve_round {
            assert!(run.records[vr - 1].cumulative_profit <= VALVE_LEVEL);
            assert!(run.records[vr..].iter().all(|r| r.phase == Phase::SafetyValve && r.profit == 0.0));
        }
    }

    #[test]
    fn repeated_runs_are_identical() {
        let t = 10_000;
        let params = Params::from_horizon(t).unwrap();
        let spec = crate::values::builtin_instance("interior-spike", t).unwrap();
        let seq = crate::values::realize(&spec, t, 42).unwrap();
        let a = run_gbb_semi_mode(params, Mode::Phase2Only, &seq, 42).unwrap();
        let b = run_gbb_semi_mode(params, Mode::Phase2Only, &seq, 42).unwrap();
        assert_eq!(a.records, b.records);
        let c = run_gbb_semi(params, &seq, 42).unwrap();
        let d = run_gbb_semi(params, &seq, 42).unwrap();
        assert_eq!(c.records, d.records);
    }
}
