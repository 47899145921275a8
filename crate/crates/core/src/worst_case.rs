//! Minimum of the rank-score statistic over composite quantile hypotheses.
//!
//! Under "at most `n - k` effects exceed `c`", the statistic is smallest when
//! the treated units with the largest outcomes carry infinite effects and every
//! other unit has effect exactly `c`. Stratified designs distribute the
//! infinite-effect slots across strata by an exact integer allocation.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::model::{ExperimentData, RankTransform, Scope};
use crate::rank::{per_stratum, stratified_statistic_of};

/// Infinite-effect slots assigned to each stratum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub counts: Vec<usize>,
    pub value: f64,
}

#[derive(Debug, Clone)]
struct StratumPrep {
    /// Treated outcomes with unit index, ascending.
    treated: Vec<(f64, usize)>,
    /// Control outcomes with unit index, ascending.
    control: Vec<(f64, usize)>,
    scores: Vec<f64>,
    /// `prefix[m] = scores[0] + ... + scores[m - 1]`.
    prefix: Vec<f64>,
}

impl StratumPrep {
    fn new(data: &ExperimentData, members: &[usize], transform: &RankTransform) -> Result<Self> {
        let mut treated = Vec::new();
        let mut control = Vec::new();
        for &i in members {
            let entry = (data.outcomes()[i], i);
            if data.treated()[i] {
                treated.push(entry);
            } else {
                control.push(entry);
            }
        }
        let by_value = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        treated.sort_by(by_value);
        control.sort_by(by_value);
        let scores = transform.scores(members.len())?;
        let mut prefix = vec![0.0; scores.len() + 1];
        for (r, s) in scores.iter().enumerate() {
            prefix[r + 1] = prefix[r] + s;
        }
        Ok(StratumPrep {
            treated,
            control,
            scores,
            prefix,
        })
    }

    /// Statistic with the `m` largest treated imputed to `-inf` and effect `c` elsewhere.
    fn value(&self, m: usize, c: f64) -> f64 {
        let kept = self.treated.len() - m;
        let mut total = self.prefix[m];
        for (q, &(y, i)) in self.treated[..kept].iter().enumerate() {
            // controls ranked below the imputed outcome y - c
            let below = self.control.partition_point(|&(yl, l)| {
                let d = y - yl;
                d > c || (d == c && l < i)
            });
            total += self.scores[m + q + below];
        }
        total
    }
}

/// Worst-case statistic evaluator prepared for one data set.
#[derive(Debug, Clone)]
pub struct WorstCase {
    strata: Vec<StratumPrep>,
    n: usize,
}

impl WorstCase {
    /// Completely randomized evaluator; strata, if any, are ignored.
    pub fn cre(data: &ExperimentData, transform: &RankTransform) -> Result<Self> {
        let all: Vec<usize> = (0..data.n()).collect();
        Ok(WorstCase {
            strata: vec![StratumPrep::new(data, &all, transform)?],
            n: data.n(),
        })
    }

    /// Within-stratum evaluator (a single stratum for unstratified data).
    pub fn stratified(data: &ExperimentData, transforms: &[RankTransform]) -> Result<Self> {
        let groups = data.groups();
        let ts = per_stratum(transforms, groups.len())?;
        let strata = groups
            .iter()
            .zip(ts)
            .map(|(g, t)| StratumPrep::new(data, g, t))
            .collect::<Result<_>>()?;
        Ok(WorstCase { strata, n: data.n() })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn n_treated(&self) -> usize {
        self.strata.iter().map(|s| s.treated.len()).sum()
    }

    pub fn n_control(&self) -> usize {
        self.n - self.n_treated()
    }

    /// Within-stratum statistic when the stratum has `m` infinite-effect slots.
    pub fn stratum_value(&self, stratum: usize, m: usize, c: f64) -> f64 {
        self.strata[stratum].value(m, c)
    }

    /// Minimum statistic over "at most `n - k` effects exceed `c`".
    pub fn min_stat(&self, k: usize, c: f64) -> f64 {
        let budget = self.n.saturating_sub(k);
        if let [only] = self.strata.as_slice() {
            return only.value(budget.min(only.treated.len()), c);
        }
        self.allocate(k, c).value
    }

    /// Optimal allocation of the `n - k` infinite-effect slots across strata.
    pub fn allocate(&self, k: usize, c: f64) -> Allocation {
        let budget = self.n.saturating_sub(k);
        let tables: Vec<Vec<f64>> = self
            .strata
            .iter()
            .map(|s| (0..=s.treated.len().min(budget)).map(|m| s.value(m, c)).collect())
            .collect();
        allocate_tables(&tables, budget)
    }

    /// Sorted distinct treated-minus-control differences within strata.
    ///
    /// The minimized statistic changes with `c` only at these points.
    pub fn jump_grid(&self) -> Vec<f64> {
        let mut grid = Vec::new();
        for s in &self.strata {
            for &(yt, _) in &s.treated {
                for &(yc, _) in &s.control {
                    grid.push(yt - yc);
                }
            }
        }
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        grid
    }
}

/// Minimizes `sum_s tables[s][m_s]` subject to `sum_s m_s <= budget`.
///
/// Uses marginal-gain greedy when every table is convex, dynamic programming
/// otherwise; both are exact.
pub fn allocate_tables(tables: &[Vec<f64>], budget: usize) -> Allocation {
    let convex = tables.iter().all(|t| {
        t.windows(3)
            .all(|w| (w[2] - w[1]) >= (w[1] - w[0]) - 1e-12 * (1.0 + w[1].abs()))
    });
    let full: usize = tables.iter().map(|t| t.len() - 1).sum();
    if full <= budget {
        let counts: Vec<usize> = tables
            .iter()
            .map(|t| {
                t.iter()
                    .enumerate()
                    .fold((0, f64::INFINITY), |acc, (m, &v)| if v < acc.1 { (m, v) } else { acc })
                    .0
            })
            .collect();
        let value = tables.iter().zip(&counts).map(|(t, &m)| t[m]).sum();
        Allocation { counts, value }
    } else if convex {
        greedy(tables, budget)
    } else {
        dynamic_program(tables, budget)
    }
}

fn greedy(tables: &[Vec<f64>], budget: usize) -> Allocation {
    let mut counts = vec![0usize; tables.len()];
    // Each table is convex, so its marginal gains are nondecreasing; merging
    // all gains in ascending order takes every stratum's steps in sequence.
    let mut steps: Vec<(f64, usize, usize)> = tables
        .iter()
        .enumerate()
        .flat_map(|(s, t)| t.windows(2).enumerate().map(move |(m, w)| (w[1] - w[0], s, m)))
        .filter(|&(gain, _, _)| gain < 0.0)
        .collect();
    steps.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used = 0;
    for (_, s, m) in steps {
        if used == budget {
            break;
        }
        if counts[s] == m {
            counts[s] += 1;
            used += 1;
        }
    }
    let value = tables.iter().zip(&counts).map(|(t, &m)| t[m]).sum();
    Allocation { counts, value }
}

fn dynamic_program(tables: &[Vec<f64>], budget: usize) -> Allocation {
    // best[b] = minimal total over processed strata using exactly b slots
    let mut best = vec![f64::INFINITY; budget + 1];
    best[0] = 0.0;
    let mut choice: Vec<Vec<usize>> = Vec::with_capacity(tables.len());
    let mut reach = 0usize;
    for t in tables {
        let mut next = vec![f64::INFINITY; budget + 1];
        let mut pick = vec![0usize; budget + 1];
        for (b, &base) in best.iter().enumerate().take(reach + 1) {
            if base == f64::INFINITY {
                continue;
            }
            for (m, &v) in t.iter().enumerate() {
                if b + m > budget {
                    break;
                }
                let cand = base + v;
                if cand < next[b + m] {
                    next[b + m] = cand;
                    pick[b + m] = m;
                }
            }
        }
        reach = (reach + t.len() - 1).min(budget);
        best = next;
        choice.push(pick);
    }
    let (mut b, value) = best
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (b, &v)| if v < acc.1 { (b, v) } else { acc });
    let mut counts = vec![0; tables.len()];
    for s in (0..tables.len()).rev() {
        counts[s] = choice[s][b];
        b -= counts[s];
    }
    Allocation { counts, value }
}

/// Minimum completely randomized statistic under "at most `n - k` effects exceed `c`".
pub fn min_stat_cre(data: &ExperimentData, transform: &RankTransform, k: usize, c: f64) -> Result<f64> {
    if k > data.n() {
        return Err(invalid(format!("k = {k} exceeds n = {}", data.n())));
    }
    Ok(WorstCase::cre(data, transform)?.min_stat(k, c))
}

/// Minimum stratified statistic under "at most `n - k` effects exceed `c`".
pub fn min_stat_scre(data: &ExperimentData, transforms: &[RankTransform], k: usize, c: f64) -> Result<f64> {
    if k > data.n() {
        return Err(invalid(format!("k = {k} exceeds n = {}", data.n())));
    }
    Ok(WorstCase::stratified(data, transforms)?.min_stat(k, c))
}

/// Largest sample handled by [`brute_force_min`].
pub const BRUTE_FORCE_MAX_UNITS: usize = 16;

/// Exhaustive minimum over effect vectors with entries in `{c, +inf}`.
///
/// For `Scope::AllUnits` at most `n - k` entries are infinite; for
/// `Scope::Treated` at most `n_t - k` treated entries are. Control effects do
/// not enter the statistic. Ranks are within strata when `data` is stratified.
pub fn brute_force_min(
    data: &ExperimentData,
    transforms: &[RankTransform],
    scope: Scope,
    k: usize,
    c: f64,
) -> Result<f64> {
    let n = data.n();
    if n > BRUTE_FORCE_MAX_UNITS {
        return Err(invalid(format!("brute force limited to {BRUTE_FORCE_MAX_UNITS} units")));
    }
    let treated: Vec<usize> = (0..n).filter(|&i| data.treated()[i]).collect();
    let cap = match scope {
        Scope::AllUnits => n.checked_sub(k),
        Scope::Treated => treated.len().checked_sub(k),
        Scope::Control => return Err(invalid("brute force covers treated and all-unit scopes")),
    }
    .ok_or_else(|| invalid("k exceeds scope size"))?;
    let mut best = f64::INFINITY;
    let mut imputed = data.outcomes().to_vec();
    for mask in 0u32..(1 << treated.len()) {
        if mask.count_ones() as usize > cap {
            continue;
        }
        for (bit, &i) in treated.iter().enumerate() {
            imputed[i] = if mask >> bit & 1 == 1 {
                f64::NEG_INFINITY
            } else {
                data.outcomes()[i] - c
            };
        }
        best = best.min(stratified_statistic_of(data, &imputed, transforms)?);
    }
    Ok(best)
}
