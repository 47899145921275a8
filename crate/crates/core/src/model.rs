//! Experiment data, rank transforms, hypotheses and interval families shared by
//! every inference routine.

use std::collections::HashMap;
use std::fmt;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng;

/// Records the random reordering applied to the rows of an input file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShuffleRecord {
    pub seed: u64,
    /// `permutation[i]` is the zero-based file row placed at position `i`.
    pub permutation: Vec<usize>,
}

/// Stratum membership for a stratified experiment or matched study.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Strata {
    labels: Vec<String>,
    of_unit: Vec<usize>,
    members: Vec<Vec<usize>>,
}

impl Strata {
    fn from_labels(labels: &[String]) -> Self {
        let mut index: HashMap<&str, usize> = HashMap::new();
        let mut distinct = Vec::new();
        let mut members: Vec<Vec<usize>> = Vec::new();
        let mut of_unit = Vec::with_capacity(labels.len());
        for (i, label) in labels.iter().enumerate() {
            let s = *index.entry(label.as_str()).or_insert_with(|| {
                distinct.push(label.clone());
                members.push(Vec::new());
                distinct.len() - 1
            });
            members[s].push(i);
            of_unit.push(s);
        }
        Strata {
            labels: distinct,
            of_unit,
            members,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Stratum labels in order of first appearance.
    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Unit indices of each stratum, in unit order.
    pub fn members(&self) -> &[Vec<usize>] {
        &self.members
    }

    pub fn stratum_of(&self, unit: usize) -> usize {
        self.of_unit[unit]
    }
}

/// Sizes of one stratum: total units and treated units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StratumSize {
    pub units: usize,
    pub treated: usize,
}

impl StratumSize {
    pub fn control(&self) -> usize {
        self.units - self.treated
    }
}

/// Treatment assignments and observed outcomes of `n` units.
///
/// Unit order is the tie-breaking order for ranks: among equal outcomes the
/// unit that comes first receives the smaller rank.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentData {
    treated: Vec<bool>,
    outcomes: Vec<f64>,
    strata: Option<Strata>,
    unit_ids: Option<Vec<String>>,
    shuffle: Option<ShuffleRecord>,
}

impl ExperimentData {
    /// Completely randomized experiment.
    pub fn new(treated: Vec<bool>, outcomes: Vec<f64>) -> Result<Self> {
        Self::build(treated, outcomes, None, None)
    }

    /// Stratified experiment; `labels[i]` names the stratum of unit `i`.
    pub fn stratified(treated: Vec<bool>, outcomes: Vec<f64>, labels: Vec<String>) -> Result<Self> {
        Self::build(treated, outcomes, Some(labels), None)
    }

    fn build(
        treated: Vec<bool>,
        outcomes: Vec<f64>,
        labels: Option<Vec<String>>,
        unit_ids: Option<Vec<String>>,
    ) -> Result<Self> {
        if treated.len() != outcomes.len() {
            return Err(Error::Malformed(format!(
                "{} assignments but {} outcomes",
                treated.len(),
                outcomes.len()
            )));
        }
        if let Some((row, y)) = outcomes.iter().enumerate().find(|(_, y)| !y.is_finite()) {
            return Err(Error::NonNumericOutcome {
                row,
                value: y.to_string(),
            });
        }
        if !treated.iter().any(|&t| t) {
            return Err(Error::NoTreated);
        }
        if treated.iter().all(|&t| t) {
            return Err(Error::NoControl);
        }
        let strata = match labels {
            Some(labels) => {
                if labels.len() != treated.len() {
                    return Err(Error::Malformed("stratum labels do not match unit count".into()));
                }
                let strata = Strata::from_labels(&labels);
                for (label, members) in strata.labels.iter().zip(&strata.members) {
                    let nt = members.iter().filter(|&&i| treated[i]).count();
                    if nt == 0 || nt == members.len() {
                        return Err(Error::DegenerateStratum {
                            label: label.clone(),
                        });
                    }
                }
                Some(strata)
            }
            None => None,
        };
        Ok(ExperimentData {
            treated,
            outcomes,
            strata,
            unit_ids,
            shuffle: None,
        })
    }

    pub fn n(&self) -> usize {
        self.treated.len()
    }

    pub fn n_treated(&self) -> usize {
        self.treated.iter().filter(|&&t| t).count()
    }

    pub fn n_control(&self) -> usize {
        self.n() - self.n_treated()
    }

    pub fn treated(&self) -> &[bool] {
        &self.treated
    }

    pub fn outcomes(&self) -> &[f64] {
        &self.outcomes
    }

    pub fn strata(&self) -> Option<&Strata> {
        self.strata.as_ref()
    }

    pub fn unit_ids(&self) -> Option<&[String]> {
        self.unit_ids.as_deref()
    }

    pub fn shuffle(&self) -> Option<&ShuffleRecord> {
        self.shuffle.as_ref()
    }

    /// Per-stratum sizes; a single stratum holding every unit when unstratified.
    pub fn stratum_sizes(&self) -> Vec<StratumSize> {
        match &self.strata {
            Some(strata) => strata
                .members
                .iter()
                .map(|m| StratumSize {
                    units: m.len(),
                    treated: m.iter().filter(|&&i| self.treated[i]).count(),
                })
                .collect(),
            None => vec![StratumSize {
                units: self.n(),
                treated: self.n_treated(),
            }],
        }
    }

    /// Unit indices grouped by stratum (one group when unstratified).
    pub fn groups(&self) -> Vec<Vec<usize>> {
        match &self.strata {
            Some(strata) => strata.members.clone(),
            None => vec![(0..self.n()).collect()],
        }
    }

    /// Reorders units with a seeded uniform permutation and records it.
    pub fn shuffled(&self, seed: u64) -> Self {
        let mut perm: Vec<usize> = (0..self.n()).collect();
        let mut rng = rng::substream(seed, rng::Domain::Shuffle, 0);
        perm.shuffle(&mut rng);
        let treated = perm.iter().map(|&i| self.treated[i]).collect();
        let outcomes = perm.iter().map(|&i| self.outcomes[i]).collect();
        let labels = self
            .strata
            .as_ref()
            .map(|s| perm.iter().map(|&i| s.labels[s.of_unit[i]].clone()).collect::<Vec<_>>());
        let ids = self
            .unit_ids
            .as_ref()
            .map(|ids| perm.iter().map(|&i| ids[i].clone()).collect());
        let mut out = Self::build(treated, outcomes, labels, ids).expect("permutation preserves validity");
        // Compose with any earlier shuffle so rows still map back to the file.
        let permutation = match &self.shuffle {
            Some(prev) => perm.iter().map(|&i| prev.permutation[i]).collect(),
            None => perm,
        };
        out.shuffle = Some(ShuffleRecord { seed, permutation });
        out
    }

    /// Swaps treatment labels and negates outcomes.
    ///
    /// Individual effects are unchanged by this map, so one-sided inference
    /// for the new treated group describes the original control group.
    pub fn switch_labels_negate(&self) -> Self {
        ExperimentData {
            treated: self.treated.iter().map(|t| !t).collect(),
            outcomes: self.outcomes.iter().map(|y| -y).collect(),
            strata: self.strata.clone(),
            unit_ids: self.unit_ids.clone(),
            shuffle: self.shuffle.clone(),
        }
    }

    /// Drops stratum information.
    pub fn pooled(&self) -> Self {
        ExperimentData {
            strata: None,
            ..self.clone()
        }
    }
}

/// Free-function form of [`ExperimentData::switch_labels_negate`].
pub fn switch_labels_negate(data: &ExperimentData) -> ExperimentData {
    data.switch_labels_negate()
}

/// Options for reading an experiment from CSV.
#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    /// Shuffle rows with this seed after validation.
    pub shuffle_seed: Option<u64>,
}

/// Parses a CSV file with columns `z`, `y` and optionally `stratum`, `unit_id`.
pub fn load_experiment(csv_bytes: &[u8], options: &LoadOptions) -> Result<ExperimentData> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(csv_bytes);
    let headers = reader.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let z_col = col("z").ok_or_else(|| Error::MissingColumn("z".into()))?;
    let y_col = col("y").ok_or_else(|| Error::MissingColumn("y".into()))?;
    let s_col = col("stratum");
    let id_col = col("unit_id");

    let mut treated = Vec::new();
    let mut outcomes = Vec::new();
    let mut labels = Vec::new();
    let mut ids = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let field = |c: usize| record.get(c).unwrap_or("");
        treated.push(match field(z_col) {
            "1" => true,
            "0" => false,
            other => {
                return Err(Error::NonBinaryAssignment {
                    row: row + 1,
                    value: other.to_string(),
                })
            }
        });
        let raw = field(y_col);
        match raw.parse::<f64>() {
            Ok(y) if y.is_finite() => outcomes.push(y),
            _ => {
                return Err(Error::NonNumericOutcome {
                    row: row + 1,
                    value: raw.to_string(),
                })
            }
        }
        if let Some(c) = s_col {
            labels.push(field(c).to_string());
        }
        if let Some(c) = id_col {
            ids.push(field(c).to_string());
        }
    }
    let data = ExperimentData::build(
        treated,
        outcomes,
        s_col.map(|_| labels),
        id_col.map(|_| ids),
    )?;
    Ok(match options.shuffle_seed {
        Some(seed) => data.shuffled(seed),
        None => data,
    })
}

/// Score function applied to outcome ranks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RankTransform {
    /// `phi(r) = r`.
    Wilcoxon,
    /// `phi(r) = C(r - 1, s - 1)` for `r >= s`, else 0.
    Stephenson { s: u32 },
    /// Explicit scores for ranks `1..=len`.
    Table { scores: Vec<f64> },
}

impl RankTransform {
    /// Scores `phi(1), ..., phi(n)`.
    pub fn scores(&self, n: usize) -> Result<Vec<f64>> {
        match self {
            RankTransform::Wilcoxon => Ok((1..=n).map(|r| r as f64).collect()),
            RankTransform::Stephenson { s } => {
                if *s < 2 {
                    return Err(invalid(format!("Stephenson order must be at least 2, got {s}")));
                }
                Ok(stephenson_scores(n, *s as usize))
            }
            RankTransform::Table { scores } => {
                if scores.len() < n {
                    return Err(invalid(format!(
                        "score table has {} entries but {n} ranks are needed",
                        scores.len()
                    )));
                }
                let table = &scores[..n];
                if table.iter().any(|v| !v.is_finite()) {
                    return Err(invalid("score table contains non-finite values"));
                }
                if table.windows(2).any(|w| w[1] < w[0]) {
                    return Err(invalid("score table must be nondecreasing"));
                }
                Ok(table.to_vec())
            }
        }
    }
}

impl fmt::Display for RankTransform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RankTransform::Wilcoxon => write!(f, "wilcoxon"),
            RankTransform::Stephenson { s } => write!(f, "stephenson(s={s})"),
            RankTransform::Table { scores } => write!(f, "table({} scores)", scores.len()),
        }
    }
}

fn stephenson_scores(n: usize, s: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    if n < s {
        return out;
    }
    // Exact integer recurrence C(r, s-1) = C(r-1, s-1) * r / (r - s + 1) while
    // it fits; afterwards a multiplicative factor >= 1 keeps the scores monotone.
    let mut exact: Option<u128> = Some(1);
    let mut approx = 1.0f64;
    out[s - 1] = 1.0;
    for r in s + 1..=n {
        let top = (r - 1) as u128;
        let bottom = (r - s) as u128;
        exact = exact.and_then(|c| c.checked_mul(top)).map(|c| c / bottom);
        approx = match exact {
            Some(c) => c as f64,
            None => approx * ((r - 1) as f64 / (r - s) as f64),
        };
        out[r - 1] = approx;
    }
    out
}

/// Which units a quantile hypothesis is about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    AllUnits,
    Treated,
    Control,
}

/// The hypothesis that the `k`-th smallest effect in `scope` is at most `c`,
/// equivalently that at most `size - k` effects in `scope` exceed `c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantileHypothesis {
    pub k: usize,
    pub c: f64,
    pub scope: Scope,
}

impl QuantileHypothesis {
    pub fn new(k: usize, c: f64, scope: Scope, data: &ExperimentData) -> Result<Self> {
        let size = match scope {
            Scope::AllUnits => data.n(),
            Scope::Treated => data.n_treated(),
            Scope::Control => data.n_control(),
        };
        if k > size {
            return Err(invalid(format!("k = {k} exceeds scope size {size}")));
        }
        if c.is_nan() {
            return Err(invalid("threshold c is NaN"));
        }
        Ok(QuantileHypothesis { k, c, scope })
    }
}

/// Serializes extended reals, writing infinities as `"-inf"` / `"inf"`.
pub mod extended_real {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if *x == f64::NEG_INFINITY {
            s.serialize_str("-inf")
        } else if *x == f64::INFINITY {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*x)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(x) => Ok(x),
            Raw::Str(s) => match s.as_str() {
                "-inf" => Ok(f64::NEG_INFINITY),
                "inf" | "+inf" => Ok(f64::INFINITY),
                other => other.parse().map_err(de::Error::custom),
            },
        }
    }

    /// Display form used in CSV output.
    pub fn format(x: f64) -> String {
        if x == f64::NEG_INFINITY {
            "-inf".into()
        } else if x == f64::INFINITY {
            "inf".into()
        } else {
            format!("{x}")
        }
    }
}

/// An interval `(lower, inf)` or `[lower, inf)`.
///
/// `lower = -inf` is the uninformative whole real line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OneSidedInterval {
    #[serde(with = "extended_real")]
    pub lower: f64,
    #[serde(rename = "closed")]
    pub closed_at_lower: bool,
}

impl OneSidedInterval {
    pub const WHOLE_LINE: OneSidedInterval = OneSidedInterval {
        lower: f64::NEG_INFINITY,
        closed_at_lower: false,
    };

    pub fn open(lower: f64) -> Self {
        OneSidedInterval {
            lower,
            closed_at_lower: false,
        }
    }

    pub fn closed(lower: f64) -> Self {
        OneSidedInterval {
            lower,
            closed_at_lower: !lower.is_infinite(),
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        x > self.lower || (self.closed_at_lower && x == self.lower)
    }

    pub fn is_informative(&self) -> bool {
        self.lower > f64::NEG_INFINITY
    }

    /// Orders intervals by inclusion: `Less` means `self` is the larger set.
    pub fn cmp_inclusion(&self, other: &Self) -> std::cmp::Ordering {
        self.lower
            .total_cmp(&other.lower)
            .then_with(|| other.closed_at_lower.cmp(&self.closed_at_lower))
    }

    /// The smaller of two nested intervals.
    pub fn tighter(self, other: Self) -> Self {
        if self.cmp_inclusion(&other).is_ge() {
            self
        } else {
            other
        }
    }
}

/// What an interval family is about.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Target {
    SampleQuantilesAll,
    SampleQuantilesTreated,
    SampleQuantilesControl,
    /// `population_size = None` denotes an infinite superpopulation.
    PopulationQuantiles { population_size: Option<u64> },
}

/// Index of an entry: a rank `k` or a quantile level `beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TargetIndex {
    Rank(usize),
    Level(f64),
}

impl TargetIndex {
    pub fn rank(&self) -> Option<usize> {
        match self {
            TargetIndex::Rank(k) => Some(*k),
            TargetIndex::Level(_) => None,
        }
    }

    pub fn as_f64(&self) -> f64 {
        match self {
            TargetIndex::Rank(k) => *k as f64,
            TargetIndex::Level(b) => *b,
        }
    }
}

impl fmt::Display for TargetIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TargetIndex::Rank(k) => write!(f, "{k}"),
            TargetIndex::Level(b) => write!(f, "{b}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FamilyEntry {
    pub index: TargetIndex,
    #[serde(flatten)]
    pub interval: OneSidedInterval,
}

/// Machine-readable note attached to a result, e.g. when the error budget is
/// exhausted by a correction term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Warning {
    pub code: String,
    pub message: String,
}

impl Warning {
    pub fn new(code: &str, message: impl Into<String>) -> Self {
        Warning {
            code: code.to_string(),
            message: message.into(),
        }
    }
}

/// One-sided intervals indexed by quantile rank or level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalFamily {
    pub target: Target,
    /// Confidence (or prediction) level of the family.
    pub level: f64,
    pub simultaneous: bool,
    pub entries: Vec<FamilyEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<Warning>,
}

impl IntervalFamily {
    pub fn get(&self, index: usize) -> Option<&OneSidedInterval> {
        self.entries
            .iter()
            .find(|e| e.index.rank() == Some(index))
            .map(|e| &e.interval)
    }

    pub fn get_level(&self, beta: f64) -> Option<&OneSidedInterval> {
        self.entries
            .iter()
            .find(|e| matches!(e.index, TargetIndex::Level(b) if b == beta))
            .map(|e| &e.interval)
    }

    pub fn lower_bounds(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.interval.lower).collect()
    }

    /// True when lower bounds never decrease along the entry order.
    pub fn is_nested(&self) -> bool {
        self.entries
            .windows(2)
            .all(|w| w[0].interval.cmp_inclusion(&w[1].interval).is_le())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("interval family serializes")
    }

    /// CSV rows `index,lower,closed,simultaneous_level`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,lower,closed,simultaneous_level\n");
        let level = if self.simultaneous {
            format!("{}", self.level)
        } else {
            String::new()
        };
        for e in &self.entries {
            out.push_str(&format!(
                "{},{},{},{}\n",
                e.index,
                extended_real::format(e.interval.lower),
                e.interval.closed_at_lower,
                level
            ));
        }
        out
    }
}

/// Draw count and seed for every Monte Carlo approximation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonteCarloConfig {
    pub draws: usize,
    pub seed: u64,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        MonteCarloConfig {
            draws: 100_000,
            seed: 0,
        }
    }
}

impl MonteCarloConfig {
    pub fn new(draws: usize, seed: u64) -> Result<Self> {
        if draws == 0 {
            return Err(invalid("Monte Carlo draw count must be positive"));
        }
        Ok(MonteCarloConfig { draws, seed })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loads_minimal_file() {
        let d = load_experiment(b"z,y\n1,2.0\n0,1.0", &LoadOptions::default()).unwrap();
        assert_eq!(d.n(), 2);
        assert_eq!(d.n_treated(), 1);
        assert!(d.strata().is_none());
    }

    #[test]
    fn rejects_missing_control() {
        let err = load_experiment(b"z,y\n1,2.0\n1,1.0", &LoadOptions::default()).unwrap_err();
        assert!(matches!(err, Error::NoControl));
    }

    #[test]
    fn loads_two_strata() {
        let d = load_experiment(b"z,y,stratum\n1,1,a\n0,2,a\n1,3,b\n0,4,b", &LoadOptions::default())
            .unwrap();
        let sizes = d.stratum_sizes();
        assert_eq!(sizes.len(), 2);
        assert!(sizes.iter().all(|s| s.units == 2 && s.treated == 1));
    }

    #[test]
    fn schema_errors() {
        let opts = LoadOptions::default();
        assert!(matches!(load_experiment(b"z,x\n1,2\n0,1", &opts), Err(Error::MissingColumn(c)) if c == "y"));
        assert!(matches!(
            load_experiment(b"z,y\n2,2\n0,1", &opts),
            Err(Error::NonBinaryAssignment { row: 1, .. })
        ));
        assert!(matches!(
            load_experiment(b"z,y\n1,abc\n0,1", &opts),
            Err(Error::NonNumericOutcome { row: 1, .. })
        ));
        assert!(matches!(
            load_experiment(b"z,y,stratum\n1,1,a\n1,2,a\n1,3,b\n0,4,b", &opts),
            Err(Error::DegenerateStratum { label }) if label == "a"
        ));
    }

    #[test]
    fn shuffle_is_recorded_and_reproducible() {
        let bytes = b"z,y,unit_id\n1,1,a\n0,2,b\n1,3,c\n0,4,d\n1,5,e";
        let opts = LoadOptions {
            shuffle_seed: Some(11),
        };
        let a = load_experiment(bytes, &opts).unwrap();
        let b = load_experiment(bytes, &opts).unwrap();
        assert_eq!(a, b);
        let rec = a.shuffle().unwrap();
        assert_eq!(rec.seed, 11);
        for (pos, &row) in rec.permutation.iter().enumerate() {
            assert_eq!(a.outcomes()[pos], (row + 1) as f64);
        }
    }

    #[test]
    fn switch_labels_definition() {
        let d = ExperimentData::new(vec![true, false], vec![2.0, 1.0]).unwrap();
        let s = d.switch_labels_negate();
        assert_eq!(s.treated(), &[false, true]);
        assert_eq!(s.outcomes(), &[-2.0, -1.0]);
        assert_eq!(s.switch_labels_negate(), d);
    }

    #[test]
    fn switch_labels_keeps_strata() {
        let d = ExperimentData::stratified(
            vec![true, false, true, false],
            vec![1.0, 2.0, 3.0, 4.0],
            vec!["a".into(), "a".into(), "b".into(), "b".into()],
        )
        .unwrap();
        assert_eq!(d.switch_labels_negate().strata(), d.strata());
    }

    #[test]
    fn stephenson_matches_binomial() {
        let s = RankTransform::Stephenson { s: 3 }.scores(6).unwrap();
        assert_eq!(s, vec![0.0, 0.0, 1.0, 3.0, 6.0, 10.0]);
        let big = RankTransform::Stephenson { s: 6 }.scores(233).unwrap();
        assert_eq!(big[232], 5_363_112_216.0); // C(232, 5)
    }

    #[test]
    fn table_must_be_monotone() {
        assert!(RankTransform::Table {
            scores: vec![1.0, 0.5]
        }
        .scores(2)
        .is_err());
    }

    #[test]
    fn interval_json_uses_inf_strings() {
        let fam = IntervalFamily {
            target: Target::SampleQuantilesAll,
            level: 0.9,
            simultaneous: true,
            entries: vec![
                FamilyEntry {
                    index: TargetIndex::Rank(1),
                    interval: OneSidedInterval::WHOLE_LINE,
                },
                FamilyEntry {
                    index: TargetIndex::Rank(2),
                    interval: OneSidedInterval::closed(0.5),
                },
            ],
            warnings: vec![],
        };
        let json: serde_json::Value = serde_json::from_str(&fam.to_json()).unwrap();
        assert_eq!(json["entries"][0]["lower"], "-inf");
        assert_eq!(json["entries"][1]["lower"], 0.5);
        assert_eq!(json["entries"][1]["closed"], true);
        assert_eq!(json["target"]["kind"], "sample_quantiles_all");
        let back: IntervalFamily = serde_json::from_str(&fam.to_json()).unwrap();
        assert_eq!(back, fam);
    }

    #[test]
    fn inclusion_order() {
        let a = OneSidedInterval::closed(1.0);
        let b = OneSidedInterval::open(1.0);
        assert!(a.cmp_inclusion(&b).is_lt());
        assert_eq!(a.tighter(b), b);
        assert!(OneSidedInterval::WHOLE_LINE.cmp_inclusion(&a).is_lt());
    }
}
