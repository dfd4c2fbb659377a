//! Per-round trade arithmetic for a posted pair of prices.
//!
//! A seller with value `s` and a buyer with value `b` face a seller price `p`
//! and a buyer price `q`. Trade happens iff `s <= p` and `q <= b`; both
//! comparisons are non-strict and carry no tolerance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_unit(what: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() && (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(Error::OutOfRange { what, value })
    }
}

/// Seller and buyer values for one round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Valuation {
    s: f64,
    b: f64,
}

impl Valuation {
    pub fn new(s: f64, b: f64) -> Result<Self> {
        Ok(Self {
            s: check_unit("s", s)?,
            b: check_unit("b", b)?,
        })
    }

    pub fn seller(&self) -> f64 {
        self.s
    }

    pub fn buyer(&self) -> f64 {
        self.b
    }
}

/// A posted action: seller price `p`, buyer price `q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PricePair {
    p: f64,
    q: f64,
}

impl PricePair {
    pub fn new(p: f64, q: f64) -> Result<Self> {
        Ok(Self {
            p: check_unit("p", p)?,
            q: check_unit("q", q)?,
        })
    }

    /// `(p, p)`.
    pub fn diagonal(price: f64) -> Result<Self> {
        Self::new(price, price)
    }

    pub fn seller_price(&self) -> f64 {
        self.p
    }

    pub fn buyer_price(&self) -> f64 {
        self.q
    }

    /// Weakly budget balanced: the mechanism never pays out on a trade.
    pub fn is_wbb(&self) -> bool {
        self.p <= self.q
    }
}

/// The seven feedback models, from full information down to a single trade bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeedbackModel {
    /// `(s, b)`.
    Full,
    /// `(s, y)`: seller value and buyer intent.
    SemiSellerBuyerIntent,
    /// `(x, b)`: seller intent and buyer value.
    SemiSellerIntentBuyer,
    /// `(s, z)`: seller value and trade bit.
    SemiSellerTrade,
    /// `(z, b)`: trade bit and buyer value.
    SemiTradeBuyer,
    /// `(x, y)`.
    TwoBit,
    /// `z`.
    OneBit,
}

impl FeedbackModel {
    pub const ALL: [FeedbackModel; 7] = [
        FeedbackModel::Full,
        FeedbackModel::SemiSellerBuyerIntent,
        FeedbackModel::SemiSellerIntentBuyer,
        FeedbackModel::SemiSellerTrade,
        FeedbackModel::SemiTradeBuyer,
        FeedbackModel::TwoBit,
        FeedbackModel::OneBit,
    ];

    /// Direct edges of the information lattice: every model listed is
    /// strictly less informative than `self`.
    pub fn covers(self) -> &'static [FeedbackModel] {
        use FeedbackModel::*;
        match self {
            Full => &[SemiSellerBuyerIntent, SemiSellerIntentBuyer],
            SemiSellerBuyerIntent => &[SemiSellerTrade, TwoBit],
            SemiSellerIntentBuyer => &[SemiTradeBuyer, TwoBit],
            SemiSellerTrade | SemiTradeBuyer | TwoBit => &[OneBit],
            OneBit => &[],
        }
    }

    /// Reflexive-transitive closure of [`covers`](Self::covers).
    pub fn dominates(self, other: FeedbackModel) -> bool {
        self == other || self.covers().iter().any(|m| m.dominates(other))
    }
}

/// What the mechanism observes after a round. Unpopulated fields are `None`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FeedbackPayload {
    pub seller_value: Option<f64>,
    pub buyer_value: Option<f64>,
    pub seller_intent: Option<bool>,
    pub buyer_intent: Option<bool>,
    pub trade: Option<bool>,
}

impl FeedbackPayload {
    /// The model whose field pattern this payload has, if any.
    pub fn model(&self) -> Option<FeedbackModel> {
        use FeedbackModel::*;
        let pattern = (
            self.seller_value.is_some(),
            self.buyer_value.is_some(),
            self.seller_intent.is_some(),
            self.buyer_intent.is_some(),
            self.trade.is_some(),
        );
        match pattern {
            (true, true, false, false, false) => Some(Full),
            (true, false, false, true, false) => Some(SemiSellerBuyerIntent),
            (false, true, true, false, false) => Some(SemiSellerIntentBuyer),
            (true, false, false, false, true) => Some(SemiSellerTrade),
            (false, true, false, false, true) => Some(SemiTradeBuyer),
            (false, false, true, true, false) => Some(TwoBit),
            (false, false, false, false, true) => Some(OneBit),
            _ => None,
        }
    }

    /// Recomputes the payload `target` would have produced, using only this
    /// payload and the posted action. Returns `None` when `target` needs
    /// information this payload does not carry.
    pub fn project(&self, target: FeedbackModel, action: PricePair) -> Option<FeedbackPayload> {
        let x = self
            .seller_intent
            .or_else(|| self.seller_value.map(|s| s <= action.p));
        let y = self
            .buyer_intent
            .or_else(|| self.buyer_value.map(|b| action.q <= b));
        let z = self.trade.or_else(|| Some(x? && y?));
        let mut out = FeedbackPayload::default();
        use FeedbackModel::*;
        match target {
            Full => {
                out.seller_value = Some(self.seller_value?);
                out.buyer_value = Some(self.buyer_value?);
            }
            SemiSellerBuyerIntent => {
                out.seller_value = Some(self.seller_value?);
                out.buyer_intent = Some(y?);
            }
            SemiSellerIntentBuyer => {
                out.seller_intent = Some(x?);
                out.buyer_value = Some(self.buyer_value?);
            }
            SemiSellerTrade => {
                out.seller_value = Some(self.seller_value?);
                out.trade = Some(z?);
            }
            SemiTradeBuyer => {
                out.trade = Some(z?);
                out.buyer_value = Some(self.buyer_value?);
            }
            TwoBit => {
                out.seller_intent = Some(x?);
                out.buyer_intent = Some(y?);
            }
            OneBit => out.trade = Some(z?),
        }
        Some(out)
    }
}

/// Running profit account.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BudgetLedger {
    pub cumulative_profit: f64,
    pub rounds_elapsed: u64,
}

impl BudgetLedger {
    pub fn record(&mut self, profit: f64) {
        self.cumulative_profit += profit;
        self.rounds_elapsed += 1;
    }
}

pub fn seller_accepts(v: Valuation, a: PricePair) -> bool {
    v.s <= a.p
}

pub fn buyer_accepts(v: Valuation, a: PricePair) -> bool {
    a.q <= v.b
}

pub fn trade_indicator(v: Valuation, a: PricePair) -> bool {
    seller_accepts(v, a) && buyer_accepts(v, a)
}

/// Gains from trade, `(b - s)` on a trade and zero otherwise. Negative when a
/// subsidizing action forces a trade with `b < s`.
pub fn gft(v: Valuation, a: PricePair) -> f64 {
    if trade_indicator(v, a) {
        v.b - v.s
    } else {
        0.0
    }
}

/// The mechanism's take `(q - p)` on a trade and zero otherwise.
pub fn profit(v: Valuation, a: PricePair) -> f64 {
    if trade_indicator(v, a) {
        a.q - a.p
    } else {
        0.0
    }
}

pub fn make_feedback(model: FeedbackModel, v: Valuation, a: PricePair) -> FeedbackPayload {
    let x = seller_accepts(v, a);
    let y = buyer_accepts(v, a);
    let z = x && y;
    let mut out = FeedbackPayload::default();
    use FeedbackModel::*;
    match model {
        Full => {
            out.seller_value = Some(v.s);
            out.buyer_value = Some(v.b);
        }
        SemiSellerBuyerIntent => {
            out.seller_value = Some(v.s);
            out.buyer_intent = Some(y);
        }
        SemiSellerIntentBuyer => {
            out.seller_intent = Some(x);
            out.buyer_value = Some(v.b);
        }
        SemiSellerTrade => {
            out.seller_value = Some(v.s);
            out.trade = Some(z);
        }
        SemiTradeBuyer => {
            out.trade = Some(z);
            out.buyer_value = Some(v.b);
        }
        TwoBit => {
            out.seller_intent = Some(x);
            out.buyer_intent = Some(y);
        }
        OneBit => out.trade = Some(z),
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(s: f64, b: f64) -> Valuation {
        Valuation::new(s, b).unwrap()
    }

    fn a(p: f64, q: f64) -> PricePair {
        PricePair::new(p, q).unwrap()
    }

    #[test]
    fn trade_indicator_examples() {
        assert!(trade_indicator(v(0.2, 0.8), a(0.5, 0.5)));
        assert!(trade_indicator(v(0.5, 0.5), a(0.5, 0.5)));
        assert!(trade_indicator(v(0.8, 0.3), a(1.0, 0.0)));
        assert!(!trade_indicator(v(0.9, 0.1), a(0.5, 0.5)));
    }

    #[test]
    fn gft_examples() {
        assert!((gft(v(0.2, 0.8), a(0.5, 0.5)) - 0.6).abs() < 1e-15);
        assert_eq!(gft(v(0.2, 0.8), a(0.1, 0.5)), 0.0);
        assert!((gft(v(0.8, 0.3), a(1.0, 0.0)) + 0.5).abs() < 1e-15);
    }

    #[test]
    fn profit_examples() {
        assert!((profit(v(0.2, 0.6), a(0.3, 0.5)) - 0.2).abs() < 1e-15);
        assert!((profit(v(0.3, 0.7), a(0.4, 0.2)) + 0.2).abs() < 1e-15);
        assert_eq!(profit(v(0.9, 0.1), a(0.5, 0.5)), 0.0);
    }

    #[test]
    fn feedback_examples() {
        let fb = make_feedback(FeedbackModel::SemiSellerTrade, v(0.3, 0.5), a(1.0, 0.4));
        assert_eq!(
            fb,
            FeedbackPayload {
                seller_value: Some(0.3),
                trade: Some(true),
                ..Default::default()
            }
        );
        let fb = make_feedback(FeedbackModel::OneBit, v(0.9, 0.1), a(0.5, 0.5));
        assert_eq!(
            fb,
            FeedbackPayload {
                trade: Some(false),
                ..Default::default()
            }
        );
        let fb = make_feedback(FeedbackModel::Full, v(0.3, 0.5), a(0.0, 1.0));
        assert_eq!(
            fb,
            FeedbackPayload {
                seller_value: Some(0.3),
                buyer_value: Some(0.5),
                ..Default::default()
            }
        );
    }

    #[test]
    fn rejects_out_of_range_and_non_finite() {
        assert!(Valuation::new(1.2, 0.5).is_err());
        assert!(Valuation::new(0.5, -0.1).is_err());
        assert!(Valuation::new(f64::NAN, 0.5).is_err());
        assert!(PricePair::new(0.5, f64::INFINITY).is_err());
        assert!(Valuation::new(0.0, 1.0).is_ok());
    }

    #[test]
    fn lattice_shape() {
        use FeedbackModel::*;
        assert!(Full.dominates(OneBit));
        assert!(SemiSellerBuyerIntent.dominates(TwoBit));
        assert!(!SemiSellerTrade.dominates(TwoBit));
        assert!(!OneBit.dominates(SemiSellerTrade));
        for m in FeedbackModel::ALL {
            assert!(Full.dominates(m));
            assert!(m.dominates(OneBit));
        }
    }

    fn unit() -> impl Strategy<Value = f64> {
        prop_oneof![
            0.0..=1.0f64,
            (0u32..=20).prop_map(|i| i as f64 / 20.0),
        ]
    }

    proptest! {
        #[test]
        fn arithmetic_invariants(s in unit(), b in unit(), p in unit(), q in unit()) {
            let (val, act) = (v(s, b), a(p, q));
            if !trade_indicator(val, act) {
                prop_assert_eq!(gft(val, act), 0.0);
            }
            prop_assert!(profit(val, act).abs() <= 1.0);
            prop_assert!(gft(val, act).abs() <= 1.0);
            if p <= q {
                prop_assert!(profit(val, act) >= 0.0);
            }
        }

        #[test]
        fn payload_pattern_matches_model(s in unit(), b in unit(), p in unit(), q in unit()) {
            for m in FeedbackModel::ALL {
                let fb = make_feedback(m, v(s, b), a(p, q));
                prop_assert_eq!(fb.model(), Some(m));
                if let (Some(x), Some(y), Some(z)) = (fb.seller_intent, fb.buyer_intent, fb.trade) {
                    prop_assert_eq!(z, x && y);
                }
            }
        }

        #[test]
        fn less_informative_payloads_are_recomputable(s in unit(), b in unit(), p in unit(), q in unit()) {
            let (val, act) = (v(s, b), a(p, q));
            for hi in FeedbackModel::ALL {
                let fb = make_feedback(hi, val, act);
                for lo in FeedbackModel::ALL {
                    if hi.dominates(lo) {
                        prop_assert_eq!(fb.project(lo, act), Some(make_feedback(lo, val, act)));
                    }
                }
            }
        }
    }
}
