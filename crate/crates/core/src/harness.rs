//! Experiment orchestration: regret against the hindsight benchmark, budget
//! audits, and summary / round-level CSV output.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gbb::{GbbSemi, Mode, Params};
use crate::mechanism::{run_mechanism, ConstantPrice, Mechanism, Phase, RoundRecord};
use crate::oracle::best_fixed_price;
use crate::profitmax::ProfitMax;
use crate::values::{self, DistributionFile, InstanceSpec};

pub const SUMMARY_HEADER: [&str; 10] = [
    "T",
    "seed",
    "mechanism",
    "total_gft",
    "benchmark_gft",
    "regret",
    "normalized_regret",
    "final_profit",
    "T_prime",
    "valve_triggered",
];

pub const ROUNDS_HEADER: [&str; 8] = ["round", "phase", "p", "q", "trade", "gft", "profit", "cum_profit"];

/// `T^{2/3} (ln T)^{2/3}`.
pub fn regret_scale(horizon: usize) -> f64 {
    let t = horizon as f64;
    (t * t.ln()).powf(2.0 / 3.0)
}

/// Which mechanism a run uses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MechanismSpec {
    GbbSemi {
        mode: Mode,
        /// Overrides `K` from the parameter formula.
        arms: Option<usize>,
        /// Overrides the ProfitMax threshold.
        beta: Option<f64>,
    },
    /// Diagonal price `p = q`.
    Constant(f64),
    ProfitMaxOnly,
}

impl MechanismSpec {
    pub fn gbb_semi() -> Self {
        MechanismSpec::GbbSemi {
            mode: Mode::Full,
            arms: None,
            beta: None,
        }
    }

    pub fn phase2_only() -> Self {
        MechanismSpec::GbbSemi {
            mode: Mode::Phase2Only,
            arms: None,
            beta: None,
        }
    }

    /// Parameters for horizon `T` after overrides (GBB-Semi and ProfitMax).
    pub fn params(&self, horizon: usize) -> Result<Params> {
        let (arms, beta) = match *self {
            MechanismSpec::GbbSemi { arms, beta, .. } => (arms, beta),
            _ => (None, None),
        };
        let mut p = match arms {
            Some(k) => Params::with_arms(horizon, k)?,
            None => Params::from_horizon(horizon)?,
        };
        if let Some(b) = beta {
            p = p.with_beta(b)?;
        }
        Ok(p)
    }

    pub fn build(&self, horizon: usize, seed: u64) -> Result<Box<dyn Mechanism + Send>> {
        Ok(match *self {
            MechanismSpec::GbbSemi { mode, .. } => {
                Box::new(GbbSemi::new(self.params(horizon)?, mode, seed))
            }
            MechanismSpec::Constant(p) => Box::new(ConstantPrice::diagonal(p)?),
            MechanismSpec::ProfitMaxOnly => {
                let params = self.params(horizon)?;
                Box::new(ProfitMax::new(params.arms, f64::INFINITY, horizon, seed))
            }
        })
    }

    pub fn label(&self) -> String {
        match *self {
            MechanismSpec::GbbSemi { mode, arms, beta } => {
                let mut s = String::from("gbb-semi");
                if mode == Mode::Phase2Only {
                    s.push_str("[phase2-only]");
                }
                if let Some(k) = arms {
                    s.push_str(&format!("[K={k}]"));
                }
                if let Some(b) = beta {
                    s.push_str(&format!("[beta={b}]"));
                }
                s
            }
            MechanismSpec::Constant(p) => format!("constant:{p}"),
            MechanismSpec::ProfitMaxOnly => "profitmax-only".into(),
        }
    }
}

impl fmt::Display for MechanismSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for MechanismSpec {
    type Err = Error;

    /// `gbb-semi`, `profitmax-only` or `constant:<p>`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gbb-semi" => Ok(Self::gbb_semi()),
            "profitmax-only" => Ok(MechanismSpec::ProfitMaxOnly),
            other => {
                let price = other
                    .strip_prefix("constant:")
                    .ok_or_else(|| Error::Config(format!("unknown mechanism '{other}'")))?;
                let p: f64 = price
                    .parse()
                    .map_err(|_| Error::Config(format!("bad constant price '{price}'")))?;
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::Config(format!("constant price {p} outside [0, 1]")));
                }
                Ok(MechanismSpec::Constant(p))
            }
        }
    }
}

/// Where the value sequences come from.
#[derive(Debug, Clone, PartialEq)]
pub enum InstanceSource {
    /// Builtin name or file path.
    Named(String),
    Spec(InstanceSpec),
}

impl InstanceSource {
    pub fn resolve(&self, horizon: usize) -> Result<InstanceSpec> {
        match self {
            InstanceSource::Named(name) => values::resolve_instance(name, horizon),
            InstanceSource::Spec(spec) => Ok(spec.clone()),
        }
    }

    pub fn label(&self) -> String {
        match self {
            InstanceSource::Named(name) => name.clone(),
            InstanceSource::Spec(spec) => spec.kind_name().to_string(),
        }
    }
}

/// One summary row per `(T, seed)` cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    #[serde(rename = "T")]
    pub horizon: usize,
    pub seed: u64,
    pub mechanism: String,
    pub total_gft: f64,
    pub benchmark_gft: f64,
    pub regret: f64,
    pub normalized_regret: f64,
    pub final_profit: f64,
    #[serde(rename = "T_prime")]
    pub t_prime: usize,
    pub valve_triggered: bool,
}

impl SummaryRow {
    pub fn from_records(
        horizon: usize,
        seed: u64,
        mechanism: String,
        records: &[RoundRecord],
        benchmark_gft: f64,
    ) -> Self {
        let total_gft: f64 = records.iter().map(|r| r.gft).sum();
        let regret = benchmark_gft - total_gft;
        SummaryRow {
            horizon,
            seed,
            mechanism,
            total_gft,
            benchmark_gft,
            regret,
            normalized_regret: regret / regret_scale(horizon),
            final_profit: records.last().map_or(0.0, |r| r.cumulative_profit),
            t_prime: records.iter().filter(|r| r.phase == Phase::ProfitMax).count(),
            valve_triggered: records.iter().any(|r| r.phase == Phase::SafetyValve),
        }
    }

    fn csv_fields(&self) -> [String; 10] {
        [
            self.horizon.to_string(),
            self.seed.to_string(),
            self.mechanism.clone(),
            self.total_gft.to_string(),
            self.benchmark_gft.to_string(),
            self.regret.to_string(),
            self.normalized_regret.to_string(),
            self.final_profit.to_string(),
            self.t_prime.to_string(),
            u8::from(self.valve_triggered).to_string(),
        ]
    }
}

/// Result of a single cell.
#[derive(Debug, Clone)]
pub struct CellResult {
    pub summary: SummaryRow,
    pub records: Vec<RoundRecord>,
}

/// Realizes values, runs the mechanism and scores it against the benchmark.
/// The same seed drives the value stream and the mechanism streams.
pub fn run_cell(
    instance: &InstanceSource,
    mechanism: &MechanismSpec,
    horizon: usize,
    seed: u64,
) -> Result<CellResult> {
    if horizon < 2 {
        return Err(Error::Config(format!("T must be at least 2, got {horizon}")));
    }
    let spec = instance.resolve(horizon)?;
    let seq = values::realize(&spec, horizon, seed)?;
    let mut mech = mechanism.build(horizon, seed)?;
    let records = run_mechanism(mech.as_mut(), &seq, seed)?;
    let bench = best_fixed_price(&seq);
    let summary = SummaryRow::from_records(horizon, seed, mechanism.label(), &records, bench.gft_star);
    Ok(CellResult { summary, records })
}

pub fn write_summary_csv(rows: &[SummaryRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(SUMMARY_HEADER)?;
    for row in rows {
        w.write_record(row.csv_fields())?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_rounds_csv(records: &[RoundRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(ROUNDS_HEADER)?;
    for r in records {
        w.write_record([
            r.round.to_string(),
            r.phase.to_string(),
            r.action.seller_price().to_string(),
            r.action.buyer_price().to_string(),
            u8::from(r.trade).to_string(),
            r.gft.to_string(),
            r.profit.to_string(),
            r.cumulative_profit.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum InstanceField {
    Named(String),
    Inline(DistributionFile),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct MechanismObject {
    name: String,
    #[serde(default)]
    phase2_only: bool,
    #[serde(default, rename = "K")]
    arms: Option<usize>,
    #[serde(default)]
    beta: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum MechanismField {
    Name(String),
    Object(MechanismObject),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    instance: InstanceField,
    #[serde(rename = "T_values")]
    t_values: Vec<usize>,
    mechanism: MechanismField,
    seeds: Vec<u64>,
    output_path: PathBuf,
    #[serde(default)]
    rounds_csv_dir: Option<PathBuf>,
    #[serde(default = "default_parallel")]
    parallel: bool,
}

fn default_parallel() -> bool {
    true
}

/// A sweep over horizons and seeds.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub instance: InstanceSource,
    pub t_values: Vec<usize>,
    pub mechanism: MechanismSpec,
    pub seeds: Vec<u64>,
    pub output_path: PathBuf,
    /// Directory for `rounds_T<T>_seed<seed>.csv` files; none by default.
    pub rounds_csv_dir: Option<PathBuf>,
    pub parallel: bool,
}

fn mechanism_from_field(field: MechanismField) -> Result<MechanismSpec> {
    match field {
        MechanismField::Name(name) => name.parse(),
        MechanismField::Object(obj) => {
            let base: MechanismSpec = obj.name.parse()?;
            match base {
                MechanismSpec::GbbSemi { .. } => Ok(MechanismSpec::GbbSemi {
                    mode: if obj.phase2_only {
                        Mode::Phase2Only
                    } else {
                        Mode::Full
                    },
                    arms: obj.arms,
                    beta: obj.beta,
                }),
                other if !obj.phase2_only && obj.arms.is_none() && obj.beta.is_none() => Ok(other),
                other => Err(Error::Config(format!(
                    "phase2_only/K/beta apply only to gbb-semi, not {other}"
                ))),
            }
        }
    }
}

impl ExperimentConfig {
    /// Parses the JSON config. Relative paths resolve against `base_dir`.
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self> {
        let file: ConfigFile = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("line {}: {e}", e.line())))?;
        let rebase = |p: PathBuf| if p.is_relative() { base_dir.join(p) } else { p };
        let instance = match file.instance {
            InstanceField::Named(name) => {
                if values::BUILTIN_NAMES.contains(&name.as_str()) {
                    InstanceSource::Named(name)
                } else {
                    InstanceSource::Named(rebase(PathBuf::from(name)).to_string_lossy().into_owned())
                }
            }
            InstanceField::Inline(dist) => InstanceSource::Spec(dist.into_spec()?),
        };
        let cfg = ExperimentConfig {
            instance,
            t_values: file.t_values,
            mechanism: mechanism_from_field(file.mechanism)?,
            seeds: file.seeds,
            output_path: rebase(file.output_path),
            rounds_csv_dir: file.rounds_csv_dir.map(rebase),
            parallel: file.parallel,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_json(&text, base)
    }

    pub fn validate(&self) -> Result<()> {
        if self.t_values.is_empty() {
            return Err(Error::Config("T_values must be nonempty".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must be nonempty".into()));
        }
        if let Some(t) = self.t_values.iter().find(|t| **t < 2) {
            return Err(Error::Config(format!("T must be at least 2, got {t}")));
        }
        for &t in &self.t_values {
            self.mechanism.params(t)?;
            self.instance.resolve(t)?;
        }
        Ok(())
    }

    /// `(T, seed)` cells in output order.
    pub fn cells(&self) -> Vec<(usize, u64)> {
        self.t_values
            .iter()
            .flat_map(|&t| self.seeds.iter().map(move |&s| (t, s)))
            .collect()
    }
}

pub fn rounds_csv_name(horizon: usize, seed: u64) -> String {
    format!("rounds_T{horizon}_seed{seed}.csv")
}

/// Runs every cell; rows come back in `(T, seed)` config order whatever the
/// completion order.
pub fn run_cells(cfg: &ExperimentConfig) -> Result<Vec<SummaryRow>> {
    if let Some(dir) = &cfg.rounds_csv_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let one = |&(t, seed): &(usize, u64)| -> Result<SummaryRow> {
        let cell = run_cell(&cfg.instance, &cfg.mechanism, t, seed)?;
        if let Some(dir) = &cfg.rounds_csv_dir {
            write_rounds_csv(&cell.records, dir.join(rounds_csv_name(t, seed)))?;
        }
        Ok(cell.summary)
    };
    let cells = cfg.cells();
    if cfg.parallel {
        cells.par_iter().map(one).collect()
    } else {
        cells.iter().map(one).collect()
    }
}

/// Path of the plotting script written next to a summary CSV.
pub fn plot_script_path(summary: &Path) -> PathBuf {
    let stem = summary
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "summary".into());
    summary.with_file_name(format!("{stem}_plot.py"))
}

/// A matplotlib script plotting mean regret against `T` on log-log axes.
pub fn plot_script(summary_csv: &Path) -> String {
    let name = summary_csv
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    format!(
        r#"#!/usr/bin/env python3
"""Mean regret vs T (log-log) from {name}."""
import csv
import math
import os
import sys
from collections import defaultdict

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

here = os.path.dirname(os.path.abspath(__file__))
path = sys.argv[1] if len(sys.argv) > 1 else os.path.join(here, "{name}")
regret = defaultdict(list)
with open(path, newline="") as f:
    for row in csv.DictReader(f):
        regret[int(row["T"])].append(float(row["regret"]))

ts = sorted(regret)
mean = [sum(regret[t]) / len(regret[t]) for t in ts]
ref = [(t * math.log(t)) ** (2.0 / 3.0) for t in ts]
scale = mean[-1] / ref[-1] if ref[-1] > 0 else 1.0

plt.loglog(ts, mean, "o-", label="mean regret")
plt.loglog(ts, [scale * r for r in ref], "--", label="T^(2/3) log^(2/3) T (scaled)")
plt.xlabel("T")
plt.ylabel("regret")
plt.legend()
plt.grid(True, which="both", alpha=0.3)
out = os.path.splitext(path)[0] + "_regret.png"
plt.savefig(out, dpi=150)
print(out)
"#
    )
}

/// Runs the sweep, writes the summary CSV and its plotting script.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<SummaryRow>> {
    cfg.validate()?;
    let rows = run_cells(cfg)?;
    if let Some(parent) = cfg.output_path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    write_summary_csv(&rows, &cfg.output_path)?;
    let script = plot_script_path(&cfg.output_path);
    fs::write(&script, plot_script(&cfg.output_path)).map_err(|e| Error::io(&script, e))?;
    Ok(rows)
}

/// Budget audit of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GbbAudit {
    pub final_profit: f64,
    pub min_running_profit: f64,
    pub min_phase1_profit: Option<f64>,
    pub phase1_nonnegative: bool,
    /// First round posted by the valve.
    pub valve_trigger_round: Option<usize>,
    pub post_valve_profit_zero: bool,
}

impl GbbAudit {
    pub fn passes(&self) -> bool {
        self.final_profit >= 0.0 && self.phase1_nonnegative && self.post_valve_profit_zero
    }
}

pub fn audit_gbb(records: &[RoundRecord]) -> GbbAudit {
    let phase1: Vec<f64> = records
        .iter()
        .filter(|r| r.phase == Phase::ProfitMax)
        .map(|r| r.profit)
        .collect();
    let min_phase1_profit = phase1.iter().cloned().reduce(f64::min);
    GbbAudit {
        final_profit: records.last().map_or(0.0, |r| r.cumulative_profit),
        min_running_profit: records
            .iter()
            .map(|r| r.cumulative_profit)
            .fold(0.0, f64::min),
        min_phase1_profit,
        phase1_nonnegative: phase1.iter().all(|p| *p >= 0.0),
        valve_trigger_round: records
            .iter()
            .find(|r| r.phase == Phase::SafetyValve)
            .map(|r| r.round),
        post_valve_profit_zero: records
            .iter()
            .filter(|r| r.phase == Phase::SafetyValve)
            .all(|r| r.profit == 0.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trade::Valuation;
    use crate::values::ValueSequence;

    fn fixed(pairs: &[(f64, f64)]) -> InstanceSource {
        InstanceSource::Spec(InstanceSpec::fixed(
            ValueSequence::new(
                pairs
                    .iter()
                    .map(|&(s, b)| Valuation::new(s, b).unwrap())
                    .collect(),
            )
            .unwrap(),
        ))
    }

    #[test]
    fn constant_at_benchmark_has_zero_regret() {
        let inst = fixed(&[(0.1, 0.9), (0.5, 0.6), (0.8, 0.3)]);
        let cell = run_cell(&inst, &MechanismSpec::Constant(0.5), 3, 0).unwrap();
        assert_eq!(cell.summary.regret, 0.0);
        assert_eq!(cell.summary.t_prime, 0);
    }

    #[test]
    fn never_trading_mechanism() {
        let t = 40;
        let inst = fixed(&vec![(0.3, 0.7); t]);
        let cell = run_cell(&inst, &MechanismSpec::Constant(0.0), t, 0).unwrap();
        assert!((cell.summary.regret - 0.4 * t as f64).abs() < 1e-9);
        assert_eq!(cell.summary.total_gft, 0.0);
    }

    #[test]
    fn summary_arithmetic() {
        let cell = run_cell(
            &InstanceSource::Named("uniform-square".into()),
            &MechanismSpec::gbb_semi(),
            2000,
            4,
        )
        .unwrap();
        let s = &cell.summary;
        assert_eq!(s.regret, s.benchmark_gft - s.total_gft);
        assert_eq!(s.t_prime, 2000);
    }

    #[test]
    fn parses_mechanisms() {
        assert_eq!("constant:0.5".parse::<MechanismSpec>().unwrap(), MechanismSpec::Constant(0.5));
        assert_eq!("gbb-semi".parse::<MechanismSpec>().unwrap(), MechanismSpec::gbb_semi());
        assert!("constant:1.5".parse::<MechanismSpec>().is_err());
        assert!("nope".parse::<MechanismSpec>().is_err());
    }

    #[test]
    fn config_parsing_and_validation() {
        let cfg = ExperimentConfig::from_json(
            r#"{"instance":"interior-spike","T_values":[100,200],
                "mechanism":{"name":"gbb-semi","phase2_only":true},
                "seeds":[1,2,3],"output_path":"out.csv"}"#,
            Path::new("/tmp/x"),
        )
        .unwrap();
        assert_eq!(cfg.cells().len(), 6);
        assert_eq!(cfg.output_path, PathBuf::from("/tmp/x/out.csv"));
        assert_eq!(cfg.mechanism, MechanismSpec::phase2_only());

        let empty = ExperimentConfig::from_json(
            r#"{"instance":"interior-spike","T_values":[100],"mechanism":"gbb-semi",
                "seeds":[],"output_path":"o.csv"}"#,
            Path::new("."),
        );
        assert!(matches!(empty, Err(Error::Config(_))));

        let inline = ExperimentConfig::from_json(
            r#"{"instance":{"kind":"correlated_iid","atoms":[{"s":0.2,"b":0.8,"w":1.0}]},
                "T_values":[50],"mechanism":"constant:0.4","seeds":[0],"output_path":"o.csv"}"#,
            Path::new("."),
        )
        .unwrap();
        assert!(matches!(inline.instance, InstanceSource::Spec(_)));

        let bad = ExperimentConfig::from_json(
            r#"{"instance":"interior-spike","T_values":[100],
                "mechanism":{"name":"constant:0.5","phase2_only":true},
                "seeds":[1],"output_path":"o.csv"}"#,
            Path::new("."),
        );
        assert!(bad.is_err());
    }

    #[test]
    fn audit_profitmax_only() {
        let cell = run_cell(
            &InstanceSource::Named("diagonal-hard".into()),
            &MechanismSpec::ProfitMaxOnly,
            3000,
            9,
        )
        .unwrap();
        let audit = audit_gbb(&cell.records);
        assert!(audit.phase1_nonnegative);
        assert!(audit.min_phase1_profit.unwrap() >= 0.0);
        assert!(audit.valve_trigger_round.is_none());
        assert!(audit.passes());
    }

    #[test]
    fn audit_flags_post_valve_profit() {
        let mk = |round, profit: f64, cum, phase| RoundRecord {
            round,
            action: crate::trade::PricePair::new(0.5, 0.5).unwrap(),
            trade: true,
            gft: 0.0,
            profit,
            cumulative_profit: cum,
            phase,
        };
        let recs = vec![
            mk(1, 0.5, 0.5, Phase::ProfitMax),
            mk(2, -0.2, 0.3, Phase::Phase2),
            mk(3, 0.0, 0.3, Phase::SafetyValve),
        ];
        let a = audit_gbb(&recs);
        assert_eq!(a.valve_trigger_round, Some(3));
        assert!(a.post_valve_profit_zero);
        assert!(a.passes());
        let mut bad = recs.clone();
        bad[2].profit = 0.1;
        assert!(!audit_gbb(&bad).post_valve_profit_zero);
    }
}
