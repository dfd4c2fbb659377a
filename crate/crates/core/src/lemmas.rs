//! Randomized checks of the per-round guarantees behind the regret analysis:
//! discretization error of the surrogate, unbiasedness and second moment of
//! the phase-2 estimates, and the pathwise exploitation inequality.

use std::fmt;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::gbb::{
    check_exploitation, estimate_gft, near_diagonal_action, run_gbb_semi_mode, surrogate_gft, Mode,
    Params, RoundDraw,
};
use crate::oracle::{best_fixed_price, k_star};
use crate::trade::{gft, trade_indicator, PricePair, Valuation};
use crate::values::{realize, resolve_instance, stream_rng};

/// Comparison tolerance for the deterministic inequalities.
pub const EXACT_TOL: f64 = 1e-12;
/// Relative tolerance for the pathwise exploitation inequality.
pub const PATHWISE_REL_TOL: f64 = 1e-9;
/// Monte Carlo acceptance band in standard errors.
pub const MC_SIGMAS: f64 = 5.0;

const LEMMA1_STREAM: u64 = 16;
const LEMMA2_STREAM: u64 = 17;
const LEMMA4_STREAM: u64 = 18;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LemmaResult {
    pub name: &'static str,
    pub checks: usize,
    pub violations: usize,
    /// Worst observed slack; its meaning is given by `margin_kind`.
    pub worst_margin: f64,
    pub margin_kind: &'static str,
}

impl LemmaResult {
    pub fn passed(&self) -> bool {
        self.violations == 0 && self.checks > 0
    }
}

impl fmt::Display for LemmaResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<28} {} checks={} violations={} worst {}={:.6e}",
            self.name,
            if self.passed() { "PASS" } else { "FAIL" },
            self.checks,
            self.violations,
            self.margin_kind,
            self.worst_margin
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LemmaReport {
    pub results: Vec<LemmaResult>,
}

impl LemmaReport {
    pub fn passed(&self) -> bool {
        self.results.iter().all(LemmaResult::passed)
    }
}

impl fmt::Display for LemmaReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.results {
            writeln!(f, "{r}")?;
        }
        Ok(())
    }
}

fn random_unit(rng: &mut ChaCha8Rng, arms: usize) -> f64 {
    // Mix in grid points so boundary equalities get exercised.
    match rng.gen_range(0..4) {
        0 => rng.gen_range(0..=arms) as f64 / arms as f64,
        1 => rng.gen_range(0..=20) as f64 / 20.0,
        _ => rng.gen::<f64>(),
    }
}

/// Both discretization inequalities on `cases` random `(v, K, k, p)`:
/// `surrogate_k <= GFT(k/K, (k-1)/K) + 1/K <= 1 + 1/K` and
/// `surrogate_{k*(p)} >= GFT(p, p)`.
pub fn check_discretization(cases: usize, seed: u64) -> LemmaResult {
    let mut rng = stream_rng(seed, LEMMA1_STREAM);
    let mut violations = 0;
    let mut worst = f64::INFINITY;
    for _ in 0..cases {
        let arms = rng.gen_range(1..=50);
        let k = rng.gen_range(1..=arms);
        let v = Valuation::new(random_unit(&mut rng, arms), random_unit(&mut rng, arms)).unwrap();
        let inv = 1.0 / arms as f64;
        let sur = surrogate_gft(v, k, arms);
        let upper = gft(v, near_diagonal_action(k, arms)) + inv - sur;
        let ceiling = 1.0 + inv - sur;

        let p = random_unit(&mut rng, arms);
        let ks = k_star(p, arms);
        let lower = surrogate_gft(v, ks, arms) - gft(v, PricePair::diagonal(p).unwrap());

        for slack in [upper, ceiling, lower] {
            worst = worst.min(slack);
            if slack < -EXACT_TOL {
                violations += 1;
            }
        }
    }
    LemmaResult {
        name: "discretization",
        checks: 3 * cases,
        violations,
        worst_margin: worst,
        margin_kind: "min slack",
    }
}

/// A fixed round: values, arm count, exploration rate and arm weights.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundConfig {
    pub value: Valuation,
    pub arms: usize,
    pub gamma: f64,
    pub weights: Vec<f64>,
}

impl RoundConfig {
    /// `K` uniform in `[2, 20]`, `γ = 1/(K+1)`, uniform values and
    /// Dirichlet(1) weights.
    pub fn random(rng: &mut impl Rng) -> Self {
        let arms = rng.gen_range(2..=20);
        let raw: Vec<f64> = (0..arms).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
        let total: f64 = raw.iter().sum();
        RoundConfig {
            value: Valuation::new(rng.gen(), rng.gen()).unwrap(),
            arms,
            gamma: 1.0 / (arms + 1) as f64,
            weights: raw.iter().map(|x| x / total).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Welford {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    fn std_error(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        (self.m2 / (self.n - 1) as f64 / self.n as f64).sqrt()
    }
}

/// Sample means and standard errors over the round's randomness.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundMoments {
    pub estimate_mean: Vec<f64>,
    pub estimate_se: Vec<f64>,
    pub second_moment_mean: f64,
    pub second_moment_se: f64,
}

/// Replays the round `draws` times, drawing `A`, `q` and `k` afresh.
pub fn round_moments(cfg: &RoundConfig, draws: usize, rng: &mut impl Rng) -> RoundMoments {
    let mut est = vec![Welford::default(); cfg.arms];
    let mut moment = Welford::default();
    for _ in 0..draws {
        let draw = RoundDraw::sample(rng, cfg.gamma, &cfg.weights);
        let z = trade_indicator(cfg.value, draw.action(cfg.arms));
        let g = estimate_gft(cfg.arms, cfg.gamma, &cfg.weights, draw, cfg.value.seller(), z);
        let mut m = 0.0;
        for ((acc, x), w) in est.iter_mut().zip(&g).zip(&cfg.weights) {
            acc.push(*x);
            m += w * (2.0 - x) * (2.0 - x);
        }
        moment.push(m);
    }
    RoundMoments {
        estimate_mean: est.iter().map(|w| w.mean).collect(),
        estimate_se: est.iter().map(Welford::std_error).collect(),
        second_moment_mean: moment.mean,
        second_moment_se: moment.std_error(),
    }
}

/// `|mean ĜFT_k - surrogate_k| <= 5 SE` for every arm of `configs` random
/// rounds.
pub fn check_unbiasedness(configs: usize, draws: usize, seed: u64) -> LemmaResult {
    let mut rng = stream_rng(seed, LEMMA2_STREAM);
    let mut violations = 0;
    let mut checks = 0;
    let mut worst = 0.0f64;
    for _ in 0..configs {
        let cfg = RoundConfig::random(&mut rng);
        let m = round_moments(&cfg, draws, &mut rng);
        for k in 1..=cfg.arms {
            let diff = (m.estimate_mean[k - 1] - surrogate_gft(cfg.value, k, cfg.arms)).abs();
            let se = m.estimate_se[k - 1];
            checks += 1;
            if se > 0.0 {
                worst = worst.max(diff / se);
            }
            if diff > (MC_SIGMAS * se).max(EXACT_TOL) {
                violations += 1;
            }
        }
    }
    LemmaResult {
        name: "unbiasedness",
        checks,
        violations,
        worst_margin: worst,
        margin_kind: "max |z|",
    }
}

/// `mean Σ_k w_k (2 - ĜFT_k)^2 <= 2K + 2 + 5 SE` on `configs` random rounds.
pub fn check_second_moment(configs: usize, draws: usize, seed: u64) -> LemmaResult {
    let mut rng = stream_rng(seed, LEMMA4_STREAM);
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..configs {
        let cfg = RoundConfig::random(&mut rng);
        let m = round_moments(&cfg, draws, &mut rng);
        let bound = 2.0 * cfg.arms as f64 + 2.0;
        worst = worst.max(m.second_moment_mean / bound);
        if m.second_moment_mean > bound + MC_SIGMAS * m.second_moment_se {
            violations += 1;
        }
    }
    LemmaResult {
        name: "second-moment",
        checks: configs,
        violations,
        worst_margin: worst,
        margin_kind: "max mean/(2K+2)",
    }
}

/// Pathwise exploitation inequality on `runs` phase-2-only trajectories of
/// `instance` at horizon `T`, seeds `seed, seed+1, ...`. `arms` overrides
/// the `K` formula.
pub fn check_exploitation_runs(
    instance: &str,
    runs: usize,
    horizon: usize,
    arms: Option<usize>,
    seed: u64,
) -> Result<LemmaResult> {
    let params = match arms {
        Some(k) => Params::with_arms(horizon, k)?,
        None => Params::from_horizon(horizon)?,
    };
    let spec = resolve_instance(instance, horizon)?;
    let mut violations = 0;
    let mut worst = f64::INFINITY;
    for i in 0..runs {
        let run_seed = seed.wrapping_add(i as u64);
        let seq = realize(&spec, horizon, run_seed)?;
        let ks = k_star(best_fixed_price(&seq).p_star, params.arms);
        let run = run_gbb_semi_mode(params, Mode::Phase2Only, &seq, run_seed)?;
        let check = check_exploitation(
            &run.cumulative_estimates,
            &run.trace,
            ks,
            params.eta,
            PATHWISE_REL_TOL,
        );
        worst = worst.min(check.margin());
        if !check.holds {
            violations += 1;
        }
    }
    Ok(LemmaResult {
        name: "exploitation (pathwise)",
        checks: runs,
        violations,
        worst_margin: worst,
        margin_kind: "min relative slack",
    })
}

/// All four checks, sized from `trials`: `trials` discretization cases,
/// `clamp(trials / 1000, 1, 100)` Monte Carlo rounds of `10^5` draws, and
/// `clamp(trials / 2000, 1, 50)` pathwise runs at `T = 10^4` on
/// `interior-spike`.
pub fn lemma_test_suite(trials: usize, seed: u64) -> Result<LemmaReport> {
    let trials = trials.max(1);
    let mc_configs = (trials / 1000).clamp(1, 100);
    let runs = (trials / 2000).clamp(1, 50);
    Ok(LemmaReport {
        results: vec![
            check_discretization(trials, seed),
            check_unbiasedness(mc_configs, 100_000, seed),
            check_exploitation_runs("interior-spike", runs, 10_000, None, seed)?,
            check_second_moment(mc_configs, 100_000, seed),
        ],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unbiased_at_reference_round() {
        // Closed form: surrogate(0.3, 0.7; k=2, K=5) = 0.5 + 0.1.
        let cfg = RoundConfig {
            value: Valuation::new(0.3, 0.7).unwrap(),
            arms: 5,
            gamma: 0.2,
            weights: vec![0.2; 5],
        };
        let mut rng = stream_rng(3, 99);
        let m = round_moments(&cfg, 100_000, &mut rng);
        assert!((surrogate_gft(cfg.value, 2, 5) - 0.6).abs() < 1e-15);
        let diff = (m.estimate_mean[1] - 0.6).abs();
        assert!(diff <= 5.0 * m.estimate_se[1], "diff {diff} se {}", m.estimate_se[1]);
        assert!(m.second_moment_mean <= 12.0 + 5.0 * m.second_moment_se);
    }

    #[test]
    fn small_suite_passes() {
        let report = lemma_test_suite(2000, 1).unwrap();
        assert_eq!(report.results.len(), 4);
        assert!(report.passed(), "{report}");
    }

    #[test]
    fn welford_matches_two_pass() {
        let xs = [1.0, 4.0, -2.0, 8.5, 3.25];
        let mut w = Welford::default();
        xs.iter().for_each(|x| w.push(*x));
        let mean = xs.iter().sum::<f64>() / 5.0;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 4.0;
        assert!((w.mean - mean).abs() < 1e-12);
        assert!((w.std_error() - (var / 5.0).sqrt()).abs() < 1e-12);
    }
}
