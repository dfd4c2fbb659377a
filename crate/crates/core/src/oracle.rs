//! Hindsight benchmark: the best fixed diagonal price on a realized path.
//!
//! `p -> sum_t GFT_t(p, p)` is piecewise constant with breakpoints in
//! `{0, 1} ∪ {s_t} ∪ {b_t}`, so evaluating those candidates is exact.

use crate::error::{Error, Result};
use crate::trade::{gft, PricePair, Valuation};
use crate::values::ValueSequence;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkResult {
    pub p_star: f64,
    pub gft_star: f64,
    pub per_round_gft: Vec<f64>,
}

fn diagonal(p: f64) -> PricePair {
    PricePair::diagonal(p).expect("candidate prices lie in [0, 1]")
}

/// `sum_t GFT_t(p, p)` summed in round order.
pub fn total_diagonal_gft(seq: &ValueSequence, price: f64) -> f64 {
    let a = diagonal(price);
    seq.iter().map(|v| gft(*v, a)).sum()
}

/// Best fixed diagonal price; ties go to the smallest price.
///
/// A sort-and-sweep pass scores every breakpoint in O(T log T). Candidates
/// within a rounding margin of the sweep maximum are then rescored by direct
/// in-order summation, so `gft_star` is bit-identical to the sum of
/// `per_round_gft` and the tie-break does not depend on sweep drift.
pub fn best_fixed_price(seq: &ValueSequence) -> BenchmarkResult {
    let mut candidates: Vec<f64> = Vec::with_capacity(2 * seq.len() + 2);
    candidates.push(0.0);
    candidates.push(1.0);
    let mut starts: Vec<(f64, f64)> = Vec::new();
    let mut ends: Vec<(f64, f64)> = Vec::new();
    let mut mass = 0.0;
    for v in seq {
        candidates.push(v.seller());
        candidates.push(v.buyer());
        let w = v.buyer() - v.seller();
        if w > 0.0 {
            starts.push((v.seller(), w));
            ends.push((v.buyer(), w));
            mass += w;
        }
    }
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    starts.sort_by(|a, b| a.0.total_cmp(&b.0));
    ends.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut scores = Vec::with_capacity(candidates.len());
    let (mut i, mut j) = (0, 0);
    let mut running = 0.0;
    for &c in &candidates {
        while i < starts.len() && starts[i].0 <= c {
            running += starts[i].1;
            i += 1;
        }
        while j < ends.len() && ends[j].0 < c {
            running -= ends[j].1;
            j += 1;
        }
        scores.push(running);
    }
    let best_sweep = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let margin = 1e-9 * (1.0 + mass);

    let mut best: Option<(f64, f64)> = None;
    for (&c, &score) in candidates.iter().zip(&scores) {
        if score < best_sweep - margin {
            continue;
        }
        let exact = total_diagonal_gft(seq, c);
        if best.is_none_or(|(_, g)| exact > g) {
            best = Some((c, exact));
        }
    }
    let (p_star, _) = best.expect("candidate set is nonempty");
    let a = diagonal(p_star);
    let per_round_gft: Vec<f64> = seq.iter().map(|v| gft(*v, a)).collect();
    let gft_star = per_round_gft.iter().sum();
    BenchmarkResult {
        p_star,
        gft_star,
        per_round_gft,
    }
}

/// Index of the near-diagonal arm bracketing `p_star`:
/// `max(ceil(K p*), 1)`, snapped so that `(k-1)/K <= p* <= k/K` holds for the
/// floating-point grid prices actually posted.
pub fn k_star(p_star: f64, arms: usize) -> usize {
    assert!(arms >= 1, "K must be positive");
    let kf = arms as f64;
    let mut k = ((kf * p_star).ceil() as usize).clamp(1, arms);
    while k > 1 && (k - 1) as f64 / kf > p_star {
        k -= 1;
    }
    while k < arms && (k as f64 / kf) < p_star {
        k += 1;
    }
    k
}

/// `GFT_t(p*, p*) - GFT_t(action_t)` for every round.
pub fn per_round_regret(seq: &ValueSequence, actions: &[PricePair]) -> Result<Vec<f64>> {
    if actions.len() != seq.len() {
        return Err(Error::LengthMismatch {
            expected: seq.len(),
            actual: actions.len(),
        });
    }
    let bench = best_fixed_price(seq);
    Ok(regret_against(&bench, seq.rounds(), actions))
}

pub(crate) fn regret_against(
    bench: &BenchmarkResult,
    rounds: &[Valuation],
    actions: &[PricePair],
) -> Vec<f64> {
    bench
        .per_round_gft
        .iter()
        .zip(rounds.iter().zip(actions))
        .map(|(g, (v, a))| g - gft(*v, *a))
        .collect()
}
