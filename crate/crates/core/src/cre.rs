//! Inference for completely randomized experiments: p-values, prediction
//! intervals for treated-unit effect quantiles, pooled confidence families,
//! hypergeometric-corrected intervals and bands.
//!
//! The test-inversion machinery here also serves stratified designs and the
//! sensitivity model, which differ only in their worst-case statistic and null.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::model::{
    ExperimentData, FamilyEntry, IntervalFamily, MonteCarloConfig, OneSidedInterval, QuantileHypothesis,
    RankTransform, Scope, Target, TargetIndex, Warning,
};
use crate::rank::{null_distribution, Design, NullDistribution, NullOptions, Provenance};
use crate::tail::{choose_kprime_model, choose_kprime_single, CorrectionSpec, Hypergeometric, SamplingModel};
use crate::worst_case::WorstCase;

/// How a p-value was formed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PValueMethod {
    Original,
    TreatedScope,
    BergerCorrected { k_prime: usize, correction: f64 },
    Stratified,
    Sensitivity { gamma: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PValueResult {
    pub value: f64,
    pub hypothesis: QuantileHypothesis,
    pub method: PValueMethod,
    pub statistic_min: f64,
    pub null_provenance: Provenance,
}

/// Worst-case statistic paired with a null distribution; inverts tests in `c`.
#[derive(Debug, Clone)]
pub struct Inverter<'a> {
    worst: WorstCase,
    grid: Vec<f64>,
    null: &'a NullDistribution,
}

impl<'a> Inverter<'a> {
    /// Completely randomized inverter; `null` must be built for `(n, n_t)`.
    pub fn cre(data: &ExperimentData, transform: &RankTransform, null: &'a NullDistribution) -> Result<Self> {
        let design = Design::Cre {
            n: data.n(),
            n_t: data.n_treated(),
        };
        null.check_matches(&design, std::slice::from_ref(transform))?;
        let worst = WorstCase::cre(data, transform)?;
        Ok(Self::from_parts(worst, null))
    }

    /// Within-stratum inverter; `null` must be built for the stratum sizes of `data`.
    pub fn stratified(
        data: &ExperimentData,
        transforms: &[RankTransform],
        null: &'a NullDistribution,
    ) -> Result<Self> {
        null.check_matches(&Design::of(data), transforms)?;
        let worst = WorstCase::stratified(data, transforms)?;
        Ok(Self::from_parts(worst, null))
    }

    pub(crate) fn from_parts(worst: WorstCase, null: &'a NullDistribution) -> Self {
        let grid = worst.jump_grid();
        Inverter { worst, grid, null }
    }

    pub fn n(&self) -> usize {
        self.worst.n()
    }

    pub fn n_treated(&self) -> usize {
        self.worst.n_treated()
    }

    pub fn n_control(&self) -> usize {
        self.worst.n_control()
    }

    pub fn null(&self) -> &NullDistribution {
        self.null
    }

    /// Minimum statistic under "at most `n - k` of all effects exceed `c`".
    pub fn min_stat(&self, k: usize, c: f64) -> f64 {
        self.worst.min_stat(k, c)
    }

    /// p-value for "at most `n - k` of all effects exceed `c`".
    pub fn pvalue(&self, k: usize, c: f64) -> f64 {
        self.null.survival(self.min_stat(k, c))
    }

    /// p-value for "at most `n_t - k` treated effects exceed `c`".
    pub fn pvalue_treated(&self, k: usize, c: f64) -> f64 {
        self.pvalue(self.n_control() + k, c)
    }

    /// `{c : p(k, c) > alpha}` for the all-units index `k`, an upper set in `c`.
    pub fn accept_region(&self, k: usize, alpha: f64) -> OneSidedInterval {
        self.invert(|c| self.pvalue(k, c) > alpha)
    }

    /// Prediction interval for the `k`-th smallest treated effect.
    pub fn treated_interval(&self, k: usize, alpha: f64) -> OneSidedInterval {
        if k == 0 {
            return OneSidedInterval::WHOLE_LINE;
        }
        self.accept_region(self.n_control() + k, alpha)
    }

    /// Smallest set `{c : accept(c)}` for a predicate monotone in `c`.
    ///
    /// The p-value is constant on each open gap of the jump grid and at each
    /// grid point, so the search runs over those `2M + 1` cells.
    fn invert(&self, accept: impl Fn(f64) -> bool) -> OneSidedInterval {
        let g = &self.grid;
        let cells = 2 * g.len() + 1;
        let representative = |cell: usize| -> f64 {
            if cell % 2 == 1 {
                g[cell / 2]
            } else if cell == 0 {
                f64::NEG_INFINITY
            } else if cell == cells - 1 {
                f64::INFINITY
            } else {
                let (a, b) = (g[cell / 2 - 1], g[cell / 2]);
                a + (b - a) / 2.0
            }
        };
        // first accepting cell
        let (mut lo, mut hi) = (0usize, cells);
        while lo < hi {
            let mid = (lo + hi) / 2;
            if accept(representative(mid)) {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        match lo {
            0 => OneSidedInterval::WHOLE_LINE,
            cell if cell == cells => OneSidedInterval::open(f64::INFINITY),
            cell if cell % 2 == 1 => OneSidedInterval::closed(g[cell / 2]),
            cell => OneSidedInterval::open(g[cell / 2 - 1]),
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("alpha = {alpha} outside (0, 1)")))
    }
}

/// p-value for "at most `n - k` effects exceed `c`".
pub fn pvalue_all(
    data: &ExperimentData,
    transform: &RankTransform,
    k: usize,
    c: f64,
    null: &NullDistribution,
) -> Result<PValueResult> {
    let hypothesis = QuantileHypothesis::new(k, c, Scope::AllUnits, data)?;
    let inv = Inverter::cre(data, transform, null)?;
    let t = inv.min_stat(k, c);
    Ok(PValueResult {
        value: null.survival(t),
        hypothesis,
        method: PValueMethod::Original,
        statistic_min: t,
        null_provenance: null.provenance.clone(),
    })
}

/// p-value for "at most `n_t - k` treated effects exceed `c`".
pub fn pvalue_treated(
    data: &ExperimentData,
    transform: &RankTransform,
    k: usize,
    c: f64,
    null: &NullDistribution,
) -> Result<PValueResult> {
    let hypothesis = QuantileHypothesis::new(k, c, Scope::Treated, data)?;
    let inv = Inverter::cre(data, transform, null)?;
    let t = inv.min_stat(data.n_control() + k, c);
    Ok(PValueResult {
        value: null.survival(t),
        hypothesis,
        method: PValueMethod::TreatedScope,
        statistic_min: t,
        null_provenance: null.provenance.clone(),
    })
}

/// Treated p-value at `k'` plus the chance that more than `n_t - k'` treated
/// units fall among the `n - k` largest effects, truncated at one.
pub fn pvalue_berger(
    data: &ExperimentData,
    transform: &RankTransform,
    k: usize,
    c: f64,
    k_prime: usize,
    null: &NullDistribution,
) -> Result<PValueResult> {
    let hypothesis = QuantileHypothesis::new(k, c, Scope::AllUnits, data)?;
    if k_prime > data.n_treated() {
        return Err(invalid(format!("k' = {k_prime} exceeds n_t = {}", data.n_treated())));
    }
    let inv = Inverter::cre(data, transform, null)?;
    let correction = berger_correction(data.n(), data.n_treated(), k, k_prime);
    let t = inv.min_stat(data.n_control() + k_prime, c);
    Ok(PValueResult {
        value: (null.survival(t) + correction).min(1.0),
        hypothesis,
        method: PValueMethod::BergerCorrected { k_prime, correction },
        statistic_min: t,
        null_provenance: null.provenance.clone(),
    })
}

fn berger_correction(n: usize, n_t: usize, k: usize, k_prime: usize) -> f64 {
    Hypergeometric::new(n as u64, (n - k) as u64, n_t as u64)
        .expect("valid sizes")
        .sf((n_t - k_prime) as u64)
}

fn family(target: Target, level: f64, entries: Vec<FamilyEntry>, warnings: Vec<Warning>) -> IntervalFamily {
    IntervalFamily {
        target,
        level,
        simultaneous: true,
        entries,
        warnings,
    }
}

fn rank_entries(intervals: Vec<OneSidedInterval>, first: usize) -> Vec<FamilyEntry> {
    intervals
        .into_iter()
        .enumerate()
        .map(|(i, interval)| FamilyEntry {
            index: TargetIndex::Rank(first + i),
            interval,
        })
        .collect()
}

/// Simultaneous `1 - alpha` prediction intervals for treated effect quantiles `k = 1..=n_t`.
pub fn treated_family(inv: &Inverter<'_>, alpha: f64, target: Target) -> IntervalFamily {
    let intervals: Vec<OneSidedInterval> = (1..=inv.n_treated())
        .into_par_iter()
        .map(|k| inv.treated_interval(k, alpha))
        .collect();
    family(target, 1.0 - alpha, rank_entries(intervals, 1), vec![])
}

/// Simultaneous `1 - alpha` prediction intervals for every treated effect quantile.
pub fn prediction_intervals_treated(
    data: &ExperimentData,
    transform: &RankTransform,
    alpha: f64,
    null: &NullDistribution,
) -> Result<IntervalFamily> {
    check_alpha(alpha)?;
    let inv = Inverter::cre(data, transform, null)?;
    Ok(treated_family(&inv, alpha, Target::SampleQuantilesTreated))
}

/// Null distributions for the original labels and for switched labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullPair {
    pub treated: NullDistribution,
    pub control: NullDistribution,
}

impl NullPair {
    /// Builds both nulls for the design of `data` (stratified when `data` has strata).
    pub fn for_data(data: &ExperimentData, transforms: &[RankTransform], options: &NullOptions) -> Result<Self> {
        let treated = null_distribution(&Design::of(data), transforms, options)?;
        let switched = Design::of(&data.switch_labels_negate());
        let control = if switched == treated.design {
            treated.clone()
        } else {
            null_distribution(&switched, transforms, options)?
        };
        Ok(NullPair { treated, control })
    }

    /// Completely randomized nulls, ignoring any strata of `data`.
    pub fn for_cre(data: &ExperimentData, transform: &RankTransform, options: &NullOptions) -> Result<Self> {
        Self::for_data(&data.pooled(), std::slice::from_ref(transform), options)
    }
}

/// Sorts pooled intervals from largest to smallest set and indexes them `1..=n`.
pub fn pool_intervals(mut intervals: Vec<OneSidedInterval>) -> Vec<OneSidedInterval> {
    intervals.sort_by(|a, b| a.cmp_inclusion(b));
    intervals
}

/// Pools treated-side and control-side families into intervals for all `n` effect quantiles.
pub fn pooled_family(
    treated: &Inverter<'_>,
    control: &Inverter<'_>,
    alpha: f64,
) -> IntervalFamily {
    let t = treated_family(treated, alpha, Target::SampleQuantilesTreated);
    let c = treated_family(control, alpha, Target::SampleQuantilesControl);
    let pooled = pool_intervals(
        t.entries
            .iter()
            .chain(&c.entries)
            .map(|e| e.interval)
            .collect(),
    );
    family(Target::SampleQuantilesAll, 1.0 - 2.0 * alpha, rank_entries(pooled, 1), vec![])
}

/// Simultaneous `1 - 2 alpha` intervals for all `n` effect quantiles from
/// treated-side and label-switched prediction intervals.
pub fn combine_treated_control(
    data: &ExperimentData,
    transform: &RankTransform,
    alpha: f64,
    nulls: &NullPair,
) -> Result<IntervalFamily> {
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(invalid(format!("alpha = {alpha} outside (0, 0.5)")));
    }
    let switched = data.switch_labels_negate();
    let t = Inverter::cre(data, transform, &nulls.treated)?;
    let c = Inverter::cre(&switched, transform, &nulls.control)?;
    Ok(pooled_family(&t, &c, alpha))
}

/// Original-method intervals: `{c : p(k, c) > alpha}` for each all-units index.
pub fn original_family(inv: &Inverter<'_>, ks: &[usize], alpha: f64) -> IntervalFamily {
    let entries = ks
        .par_iter()
        .map(|&k| FamilyEntry {
            index: TargetIndex::Rank(k),
            interval: inv.accept_region(k, alpha),
        })
        .collect();
    family(Target::SampleQuantilesAll, 1.0 - alpha, entries, vec![])
}

/// A confidence interval with the shifted index and correction behind it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectedInterval {
    pub interval: OneSidedInterval,
    pub k_prime: usize,
    pub correction: f64,
    pub alpha_prime: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<Warning>,
}

fn budget_warning(alpha: f64, correction: f64) -> Warning {
    Warning::new(
        "budget_exhausted",
        format!("correction {correction:.4} leaves no error budget at alpha {alpha}; interval is the whole line"),
    )
}

/// `1 - alpha` confidence interval for the `k`-th smallest effect.
pub fn ci_single(
    data: &ExperimentData,
    transform: &RankTransform,
    k: usize,
    alpha: f64,
    gamma: f64,
    null: &NullDistribution,
) -> Result<CorrectedInterval> {
    QuantileHypothesis::new(k, 0.0, Scope::AllUnits, data)?;
    let inv = Inverter::cre(data, transform, null)?;
    corrected_interval(&inv, k, alpha, gamma)
}

pub(crate) fn corrected_interval(inv: &Inverter<'_>, k: usize, alpha: f64, gamma: f64) -> Result<CorrectedInterval> {
    let (k_prime, correction) = choose_kprime_single(inv.n() as u64, inv.n_treated() as u64, k as u64, alpha, gamma)?;
    let alpha_prime = alpha - correction;
    if alpha_prime <= 0.0 {
        return Ok(CorrectedInterval {
            interval: OneSidedInterval::WHOLE_LINE,
            k_prime,
            correction,
            alpha_prime,
            warnings: vec![budget_warning(alpha, correction)],
        });
    }
    Ok(CorrectedInterval {
        interval: inv.treated_interval(k_prime, alpha_prime),
        k_prime,
        correction,
        alpha_prime,
        warnings: vec![],
    })
}

/// Integer interval `{lower, ..., upper}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountInterval {
    pub lower: usize,
    pub upper: usize,
}

/// `1 - alpha` confidence interval for the number of effects exceeding `c`.
pub fn ci_count(
    data: &ExperimentData,
    transform: &RankTransform,
    c: f64,
    alpha: f64,
    gamma: f64,
    null: &NullDistribution,
) -> Result<CountInterval> {
    let inv = Inverter::cre(data, transform, null)?;
    let n = data.n();
    let accepted: Vec<usize> = (0..=n)
        .into_par_iter()
        .map(|k| -> Result<Option<usize>> {
            let ci = corrected_interval(&inv, k, alpha, gamma)?;
            Ok(ci.interval.contains(c).then_some(n - k))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    Ok(CountInterval {
        lower: accepted.iter().copied().min().unwrap_or(n),
        upper: n,
    })
}

/// Which labeling produced an interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Treated,
    Control,
}

/// Shifted indices chosen for one labeling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SidePlan {
    pub side: Side,
    pub alpha: f64,
    pub spec: CorrectionSpec,
}

/// A simultaneous family together with the corrections it spent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimultaneousCis {
    pub family: IntervalFamily,
    pub plans: Vec<SidePlan>,
}

/// Chooses shifted indices for all-units quantiles `ks` seen through `sample` units.
pub fn plan_side(
    side: Side,
    n: usize,
    sample: usize,
    ks: &[usize],
    alpha: f64,
    gamma: f64,
    mc: MonteCarloConfig,
) -> Result<SidePlan> {
    let model = SamplingModel::WithoutReplacement {
        population: n as u64,
        sample: sample as u64,
        ks: ks.iter().map(|&k| k as u64).collect(),
    };
    Ok(SidePlan {
        side,
        alpha,
        spec: choose_kprime_model(&model, alpha, gamma, mc)?,
    })
}

/// Applies a plan: intervals for `tau_(k_j)` from treated-side quantiles at `k'_j`.
pub fn apply_plan(inv: &Inverter<'_>, plan: &SidePlan) -> (Vec<OneSidedInterval>, Vec<Warning>) {
    let alpha_prime = plan.alpha - plan.spec.correction;
    if alpha_prime <= 0.0 {
        return (
            vec![OneSidedInterval::WHOLE_LINE; plan.spec.k_primes.len()],
            vec![budget_warning(plan.alpha, plan.spec.correction)],
        );
    }
    let intervals = plan
        .spec
        .k_primes
        .par_iter()
        .map(|&kp| inv.treated_interval(kp, alpha_prime))
        .collect();
    (intervals, vec![])
}

/// Simultaneous intervals from prepared inverters and plans; with two sides
/// the tighter interval of each quantile is kept.
pub fn simultaneous_from_plans(
    sides: &[(&Inverter<'_>, &SidePlan)],
    ks: &[usize],
    alpha: f64,
) -> SimultaneousCis {
    let mut best = vec![OneSidedInterval::WHOLE_LINE; ks.len()];
    let mut warnings = Vec::new();
    for (inv, plan) in sides {
        let (intervals, w) = apply_plan(inv, plan);
        for (b, i) in best.iter_mut().zip(intervals) {
            *b = b.tighter(i);
        }
        warnings.extend(w);
    }
    let entries = ks
        .iter()
        .zip(best)
        .map(|(&k, interval)| FamilyEntry {
            index: TargetIndex::Rank(k),
            interval,
        })
        .collect();
    SimultaneousCis {
        family: family(Target::SampleQuantilesAll, 1.0 - alpha, entries, warnings),
        plans: sides.iter().map(|(_, p)| (*p).clone()).collect(),
    }
}

fn check_ks(ks: &[usize], n: usize) -> Result<()> {
    if ks.is_empty() || ks.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid("quantile indices must be nonempty and strictly increasing"));
    }
    if ks[0] == 0 || ks[ks.len() - 1] > n {
        return Err(invalid(format!("quantile indices must lie in 1..={n}")));
    }
    Ok(())
}

/// Simultaneous `1 - alpha` confidence intervals for `tau_(k_j)`.
///
/// With `combine_sides`, treated-side and label-switched intervals are each
/// built at `alpha / 2` and the tighter one is kept per quantile.
#[allow(clippy::too_many_arguments)]
pub fn simultaneous_cis(
    data: &ExperimentData,
    transform: &RankTransform,
    ks: &[usize],
    alpha: f64,
    gamma: f64,
    mc: MonteCarloConfig,
    nulls: &NullPair,
    combine_sides: bool,
) -> Result<SimultaneousCis> {
    check_alpha(alpha)?;
    check_ks(ks, data.n())?;
    let n = data.n();
    let t_inv = Inverter::cre(data, transform, &nulls.treated)?;
    if !combine_sides {
        let plan = plan_side(Side::Treated, n, data.n_treated(), ks, alpha, gamma, mc)?;
        return Ok(simultaneous_from_plans(&[(&t_inv, &plan)], ks, alpha));
    }
    let switched = data.switch_labels_negate();
    let c_inv = Inverter::cre(&switched, transform, &nulls.control)?;
    let t_plan = plan_side(Side::Treated, n, data.n_treated(), ks, alpha / 2.0, gamma, mc)?;
    let c_plan = plan_side(Side::Control, n, data.n_control(), ks, alpha / 2.0, gamma, mc)?;
    Ok(simultaneous_from_plans(
        &[(&t_inv, &t_plan), (&c_inv, &c_plan)],
        ks,
        alpha,
    ))
}

/// Step-function band over `k = 1..=n` from a simultaneous family over ranks.
///
/// Each `k` takes the interval of the largest family index not above it;
/// indices below the first get the whole line.
pub fn band(family: &IntervalFamily, n: usize) -> Result<IntervalFamily> {
    let mut steps: Vec<(usize, OneSidedInterval)> = family
        .entries
        .iter()
        .map(|e| {
            e.index
                .rank()
                .map(|k| (k, e.interval))
                .ok_or_else(|| invalid("band needs rank-indexed intervals"))
        })
        .collect::<Result<_>>()?;
    steps.sort_by_key(|s| s.0);
    let mut entries = Vec::with_capacity(n);
    let mut current = OneSidedInterval::WHOLE_LINE;
    let mut next = 0;
    for k in 1..=n {
        while next < steps.len() && steps[next].0 <= k {
            current = current.tighter(steps[next].1);
            next += 1;
        }
        entries.push(FamilyEntry {
            index: TargetIndex::Rank(k),
            interval: current,
        });
    }
    Ok(IntervalFamily {
        target: family.target.clone(),
        level: family.level,
        simultaneous: true,
        entries,
        warnings: family.warnings.clone(),
    })
}
