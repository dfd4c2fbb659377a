//! Exact expectations of the phase-2 estimates, integrating the mechanism's
//! randomness instead of sampling it.

use gbb_semi::gbb::{estimate_gft, near_diagonal_action, RoundDraw};
use gbb_semi::{surrogate_gft, trade_indicator, Valuation};
use proptest::prelude::*;

/// Surrogate written out from its definition, independently of the library.
fn surrogate_oracle(s: f64, b: f64, k: usize, arms: usize) -> f64 {
    let hi = k as f64 / arms as f64;
    let lo = (k as f64 - 1.0) / arms as f64;
    let mut total = 0.0;
    if s <= hi {
        total += (b - lo).max(0.0);
    }
    if lo <= b {
        total += (hi - s).max(0.0);
    }
    total
}

/// `E[f(ĜFT)]` over A, q and the sampled arm. The estimates are piecewise
/// constant in q with breaks only at arm edges and b, so midpoints of the
/// pieces integrate exactly.
fn expectation(
    v: Valuation,
    arms: usize,
    gamma: f64,
    weights: &[f64],
    f: impl Fn(&[f64]) -> f64,
) -> f64 {
    let mut cuts: Vec<f64> = (0..=arms).map(|i| i as f64 / arms as f64).collect();
    cuts.push(v.buyer());
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();

    let mut total = 0.0;
    for win in cuts.windows(2) {
        let (a, b) = (win[0], win[1]);
        if b <= a {
            continue;
        }
        let draw = RoundDraw::RightBoundary {
            buyer_price: 0.5 * (a + b),
        };
        let z = trade_indicator(v, draw.action(arms));
        total += gamma * (b - a) * f(&estimate_gft(arms, gamma, weights, draw, v.seller(), z));
    }
    for k in 1..=arms {
        let draw = RoundDraw::NearDiagonal { arm: k };
        let z = trade_indicator(v, near_diagonal_action(k, arms));
        total += (1.0 - gamma)
            * weights[k - 1]
            * f(&estimate_gft(arms, gamma, weights, draw, v.seller(), z));
    }
    total
}

fn round() -> impl Strategy<Value = (Valuation, usize, Vec<f64>)> {
    (2usize..=20).prop_flat_map(|arms| {
        (
            (0.0..=1.0f64, 0.0..=1.0f64),
            Just(arms),
            prop::collection::vec(0.01..1.0f64, arms),
        )
            .prop_map(|((s, b), arms, raw)| {
                let total: f64 = raw.iter().sum();
                (
                    Valuation::new(s, b).unwrap(),
                    arms,
                    raw.iter().map(|w| w / total).collect(),
                )
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn surrogate_matches_definition(s in 0.0..=1.0f64, b in 0.0..=1.0f64, arms in 1usize..=50, k in 1usize..=50) {
        let k = (k - 1) % arms + 1;
        let v = Valuation::new(s, b).unwrap();
        prop_assert_eq!(surrogate_gft(v, k, arms), surrogate_oracle(s, b, k, arms));
    }

    #[test]
    fn estimates_are_unbiased((v, arms, w) in round()) {
        let gamma = 1.0 / (arms as f64 + 1.0);
        for k in 1..=arms {
            let mean = expectation(v, arms, gamma, &w, |g| g[k - 1]);
            let target = surrogate_oracle(v.seller(), v.buyer(), k, arms);
            prop_assert!((mean - target).abs() <= 1e-9 * (1.0 + 1.0 / w[k - 1]),
                "k={} mean={} target={}", k, mean, target);
        }
    }

    #[test]
    fn second_moment_bounded((v, arms, w) in round()) {
        let gamma = 1.0 / (arms as f64 + 1.0);
        let m = expectation(v, arms, gamma, &w, |g| {
            g.iter().zip(&w).map(|(x, wk)| wk * (2.0 - x) * (2.0 - x)).sum()
        });
        prop_assert!(m <= 2.0 * arms as f64 + 2.0 + 1e-9, "moment {}", m);
    }

    #[test]
    fn estimates_never_exceed_two((v, arms, w) in round(), u in 0.0..1.0f64, pick in 0usize..20) {
        let gamma = 1.0 / (arms as f64 + 1.0);
        for draw in [
            RoundDraw::RightBoundary { buyer_price: u },
            RoundDraw::NearDiagonal { arm: pick % arms + 1 },
        ] {
            let z = trade_indicator(v, draw.action(arms));
            for g in estimate_gft(arms, gamma, &w, draw, v.seller(), z) {
                prop_assert!(g <= 2.0);
            }
        }
    }
}
