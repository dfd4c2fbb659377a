//! Value-sequence instances: fixed adversarial paths and finite-support
//! iid distributions, plus the named registry used by experiments.

use std::fs;
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trade::Valuation;

/// Tolerance on the total mass of a distribution.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// RNG stream indices under one root seed.
pub mod streams {
    pub const VALUES: u64 = 0;
    pub const PHASE2: u64 = 1;
    pub const PROFITMAX: u64 = 2;
}

/// Seed-splitting: one ChaCha8 key per root seed, one stream per consumer.
/// Streams of the same root never overlap.
pub fn stream_rng(root: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(root);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointAtom {
    pub s: f64,
    pub b: f64,
    pub w: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginalAtom {
    pub v: f64,
    pub w: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum InstanceSpec {
    FixedSequence(ValueSequence),
    CorrelatedIid(Vec<JointAtom>),
    IndependentIid {
        seller: Vec<MarginalAtom>,
        buyer: Vec<MarginalAtom>,
    },
}

fn check_weights<I: IntoIterator<Item = f64>>(label: &str, weights: I) -> Result<()> {
    let mut total = 0.0;
    let mut count = 0usize;
    for w in weights {
        if !w.is_finite() || w < 0.0 {
            return Err(Error::InvalidInstance(format!(
                "{label}: weight {w} is negative or not finite"
            )));
        }
        total += w;
        count += 1;
    }
    if count == 0 {
        return Err(Error::InvalidInstance(format!("{label}: no atoms")));
    }
    if (total - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(Error::InvalidInstance(format!(
            "{label}: weight sum {total} != 1"
        )));
    }
    Ok(())
}

fn check_value(label: &str, what: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::InvalidInstance(format!(
            "{label}: value out of range: {what} = {value}"
        )))
    }
}

impl InstanceSpec {
    pub fn correlated(atoms: Vec<JointAtom>) -> Result<Self> {
        for atom in &atoms {
            check_value("correlated_iid", "s", atom.s)?;
            check_value("correlated_iid", "b", atom.b)?;
        }
        check_weights("correlated_iid", atoms.iter().map(|a| a.w))?;
        Ok(InstanceSpec::CorrelatedIid(atoms))
    }

    pub fn independent(seller: Vec<MarginalAtom>, buyer: Vec<MarginalAtom>) -> Result<Self> {
        for (label, atoms) in [("s_atoms", &seller), ("b_atoms", &buyer)] {
            for atom in atoms {
                check_value(label, "v", atom.v)?;
            }
            check_weights(label, atoms.iter().map(|a| a.w))?;
        }
        Ok(InstanceSpec::IndependentIid { seller, buyer })
    }

    pub fn fixed(seq: ValueSequence) -> Self {
        InstanceSpec::FixedSequence(seq)
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            InstanceSpec::FixedSequence(_) => "fixed_sequence",
            InstanceSpec::CorrelatedIid(_) => "correlated_iid",
            InstanceSpec::IndependentIid { .. } => "independent_iid",
        }
    }
}

/// A realized, nonempty value path.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueSequence(Vec<Valuation>);

impl ValueSequence {
    pub fn new(rounds: Vec<Valuation>) -> Result<Self> {
        if rounds.is_empty() {
            return Err(Error::InvalidInstance("value sequence is empty".into()));
        }
        Ok(Self(rounds))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn rounds(&self) -> &[Valuation] {
        &self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Valuation> {
        self.0.iter()
    }
}

impl<'a> IntoIterator for &'a ValueSequence {
    type Item = &'a Valuation;
    type IntoIter = std::slice::Iter<'a, Valuation>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub(crate) enum DistributionFile {
    CorrelatedIid {
        atoms: Vec<JointAtom>,
    },
    IndependentIid {
        s_atoms: Vec<MarginalAtom>,
        b_atoms: Vec<MarginalAtom>,
    },
}

impl DistributionFile {
    pub(crate) fn into_spec(self) -> Result<InstanceSpec> {
        match self {
            DistributionFile::CorrelatedIid { atoms } => InstanceSpec::correlated(atoms),
            DistributionFile::IndependentIid { s_atoms, b_atoms } => {
                InstanceSpec::independent(s_atoms, b_atoms)
            }
        }
    }
}

/// Parses a distribution from its JSON representation.
pub fn parse_distribution_json(text: &str, path: &Path) -> Result<InstanceSpec> {
    let file: DistributionFile = serde_json::from_str(text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line() as u64,
        message: e.to_string(),
    })?;
    file.into_spec()
}

fn parse_sequence_csv(text: &str, path: &Path) -> Result<ValueSequence> {
    let parse_err = |line: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    if header.iter().collect::<Vec<_>>() != ["round", "s", "b"] {
        return Err(parse_err(
            1,
            format!("expected header `round,s,b`, found `{}`", header.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    let mut rounds = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize, name: &str| -> Result<&str> {
            record
                .get(i)
                .ok_or_else(|| parse_err(line, format!("missing field `{name}`")))
        };
        let round: usize = field(0, "round")?
            .parse()
            .map_err(|e| parse_err(line, format!("round: {e}")))?;
        if round != rounds.len() + 1 {
            return Err(parse_err(
                line,
                format!("round {round} out of order (expected {})", rounds.len() + 1),
            ));
        }
        let value = |i: usize, name: &'static str| -> Result<f64> {
            let x: f64 = field(i, name)?
                .parse()
                .map_err(|e| parse_err(line, format!("{name}: {e}")))?;
            check_value(&format!("line {line}"), name, x)?;
            Ok(x)
        };
        let s = value(1, "s")?;
        let b = value(2, "b")?;
        rounds.push(Valuation::new(s, b)?);
    }
    ValueSequence::new(rounds)
}

/// Loads a fixed sequence (`round,s,b` CSV) or a distribution (JSON). The
/// format is chosen by content: a leading `{` means JSON.
pub fn load_instance(path: impl AsRef<Path>) -> Result<InstanceSpec> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if text.trim_start().starts_with('{') {
        parse_distribution_json(&text, path)
    } else {
        parse_sequence_csv(&text, path).map(InstanceSpec::FixedSequence)
    }
}

/// Writes a sequence in the `round,s,b` CSV format read by [`load_instance`].
pub fn write_sequence_csv(seq: &ValueSequence, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["round", "s", "b"])?;
    for (i, v) in seq.iter().enumerate() {
        w.write_record([
            (i + 1).to_string(),
            v.seller().to_string(),
            v.buyer().to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Draws `horizon` rounds from `spec` (identity for a fixed sequence).
pub fn realize(spec: &InstanceSpec, horizon: usize, seed: u64) -> Result<ValueSequence> {
    if horizon == 0 {
        return Err(Error::Config("horizon must be positive".into()));
    }
    let mut rng = stream_rng(seed, streams::VALUES);
    match spec {
        InstanceSpec::FixedSequence(seq) => {
            if seq.len() != horizon {
                return Err(Error::LengthMismatch {
                    expected: horizon,
                    actual: seq.len(),
                });
            }
            Ok(seq.clone())
        }
        InstanceSpec::CorrelatedIid(atoms) => {
            let index = WeightedIndex::new(atoms.iter().map(|a| a.w))
                .map_err(|e| Error::InvalidInstance(e.to_string()))?;
            let mut rounds = Vec::with_capacity(horizon);
            for _ in 0..horizon {
                let atom = atoms[index.sample(&mut rng)];
                rounds.push(Valuation::new(atom.s, atom.b)?);
            }
            ValueSequence::new(rounds)
        }
        InstanceSpec::IndependentIid { seller, buyer } => {
            let si = WeightedIndex::new(seller.iter().map(|a| a.w))
                .map_err(|e| Error::InvalidInstance(e.to_string()))?;
            let bi = WeightedIndex::new(buyer.iter().map(|a| a.w))
                .map_err(|e| Error::InvalidInstance(e.to_string()))?;
            let mut rounds = Vec::with_capacity(horizon);
            for _ in 0..horizon {
                let s = seller[si.sample(&mut rng)].v;
                let b = buyer[bi.sample(&mut rng)].v;
                rounds.push(Valuation::new(s, b)?);
            }
            ValueSequence::new(rounds)
        }
    }
}

/// Names accepted by [`builtin_instance`].
pub const BUILTIN_NAMES: [&str; 3] = ["uniform-square", "interior-spike", "diagonal-hard"];

/// Registered instance families:
///
/// * `uniform-square`: independent marginals, each uniform on the 100 points
///   `i/99`, `i = 0..=99`.
/// * `interior-spike`: `(0.3, 0.7)` and `(0.6, 0.4)` with weight 1/2 each.
///   Every price in `[0.3, 0.7]` is optimal.
/// * `diagonal-hard`: `(0.1, 0.35)` w 0.4, `(0.35, 0.6)` w 0.4 and the
///   negative-surplus atom `(0.7, 0.3)` w 0.2. The unique best fixed price is
///   0.35, the only price trading both positive atoms.
pub fn builtin_instance(name: &str, horizon: usize) -> Result<InstanceSpec> {
    if horizon == 0 {
        return Err(Error::Config("horizon must be positive".into()));
    }
    match name {
        "uniform-square" => {
            let grid: Vec<MarginalAtom> = (0..100)
                .map(|i| MarginalAtom {
                    v: i as f64 / 99.0,
                    w: 0.01,
                })
                .collect();
            InstanceSpec::independent(grid.clone(), grid)
        }
        "interior-spike" => InstanceSpec::correlated(vec![
            JointAtom { s: 0.3, b: 0.7, w: 0.5 },
            JointAtom { s: 0.6, b: 0.4, w: 0.5 },
        ]),
        "diagonal-hard" => InstanceSpec::correlated(vec![
            JointAtom { s: 0.1, b: 0.35, w: 0.4 },
            JointAtom { s: 0.35, b: 0.6, w: 0.4 },
            JointAtom { s: 0.7, b: 0.3, w: 0.2 },
        ]),
        other => Err(Error::UnknownInstance(other.to_string())),
    }
}

/// Resolves a builtin name, falling back to a file path.
pub fn resolve_instance(name_or_path: &str, horizon: usize) -> Result<InstanceSpec> {
    if BUILTIN_NAMES.contains(&name_or_path) {
        builtin_instance(name_or_path, horizon)
    } else if Path::new(name_or_path).exists() {
        load_instance(name_or_path)
    } else {
        Err(Error::UnknownInstance(name_or_path.to_string()))
    }
}
