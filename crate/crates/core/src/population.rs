//! Confidence intervals for population effect quantiles when the experimental
//! units are a random sample: bound population quantiles by sample quantiles,
//! then bound sample quantiles by prediction intervals.

use serde::{Deserialize, Serialize};

use crate::cre::{pooled_family, Inverter, NullPair};
use crate::error::{invalid, Result};
use crate::model::{
    ExperimentData, FamilyEntry, IntervalFamily, MonteCarloConfig, OneSidedInterval, RankTransform, Target,
    TargetIndex, Warning,
};
use crate::tail::{choose_kprime_model, level_index, CorrectionSpec, SamplingModel};

/// Finite population of known size or an infinite superpopulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PopulationKind {
    Finite { size: u64 },
    Super,
}

/// Population quantile levels of interest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationTarget {
    pub kind: PopulationKind,
    pub betas: Vec<f64>,
}

impl PopulationTarget {
    pub fn new(kind: PopulationKind, betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() || betas.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("quantile levels must be nonempty and strictly increasing"));
        }
        if betas.iter().any(|b| !(0.0..=1.0).contains(b)) {
            return Err(invalid("quantile levels must lie in [0, 1]"));
        }
        Ok(PopulationTarget { kind, betas })
    }

    /// Population ranks `ceil(N beta_j)`; `None` for a superpopulation.
    pub fn ranks(&self) -> Option<Vec<u64>> {
        match self.kind {
            PopulationKind::Finite { size } => Some(self.betas.iter().map(|&b| level_index(size, b)).collect()),
            PopulationKind::Super => None,
        }
    }

    fn family_target(&self) -> Target {
        Target::PopulationQuantiles {
            population_size: match self.kind {
                PopulationKind::Finite { size } => Some(size),
                PopulationKind::Super => None,
            },
        }
    }
}

/// Which sampled units carry the sample quantiles used in the second step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleScope {
    /// All units, pooling treated and control intervals.
    All,
    /// Treated units only.
    Treated,
    /// Control units only.
    Control,
}

/// Population intervals with the shifted sample indices behind them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationCis {
    pub family: IntervalFamily,
    pub spec: CorrectionSpec,
    pub alpha_prime: f64,
}

fn check_levels(alpha: f64, split_gamma: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid(format!("alpha = {alpha} outside (0, 1)")));
    }
    if !(split_gamma > 0.0 && split_gamma < 1.0) {
        return Err(invalid(format!("split gamma = {split_gamma} outside (0, 1)")));
    }
    Ok(())
}

/// Number of sampled units whose effects carry the sample quantiles.
pub fn scope_size(data: &ExperimentData, scope: SampleScope) -> usize {
    match scope {
        SampleScope::All => data.n(),
        SampleScope::Treated => data.n_treated(),
        SampleScope::Control => data.n_control(),
    }
}

/// Chooses shifted sample indices for the sampling step.
///
/// `n` is the total number of experimental units and `sample` the number whose
/// effects carry the sample quantiles.
pub fn plan_population(
    target: &PopulationTarget,
    n: usize,
    sample: usize,
    alpha: f64,
    split_gamma: f64,
    mc: MonteCarloConfig,
) -> Result<CorrectionSpec> {
    check_levels(alpha, split_gamma)?;
    let model = match target.kind {
        PopulationKind::Finite { size } => {
            if size < n as u64 {
                return Err(invalid(format!("population size {size} below sample size {n}")));
            }
            SamplingModel::WithoutReplacement {
                population: size,
                sample: sample as u64,
                ks: target.ranks().expect("finite"),
            }
        }
        PopulationKind::Super => SamplingModel::Iid {
            sample: sample as u64,
            betas: target.betas.clone(),
        },
    };
    choose_kprime_model(&model, alpha, split_gamma, mc)
}

/// Simultaneous `1 - alpha` confidence intervals for population effect quantiles.
///
/// `split_gamma` is the share of `alpha` spent on the sampling step.
#[allow(clippy::too_many_arguments)]
pub fn population_cis(
    data: &ExperimentData,
    transforms: &[RankTransform],
    target: &PopulationTarget,
    alpha: f64,
    split_gamma: f64,
    scope: SampleScope,
    mc: MonteCarloConfig,
    nulls: &NullPair,
) -> Result<PopulationCis> {
    let spec = plan_population(target, data.n(), scope_size(data, scope), alpha, split_gamma, mc)?;
    population_cis_from_plan(data, transforms, target, alpha, scope, spec, nulls)
}

/// Second step of [`population_cis`] with shifted indices already chosen.
pub fn population_cis_from_plan(
    data: &ExperimentData,
    transforms: &[RankTransform],
    target: &PopulationTarget,
    alpha: f64,
    scope: SampleScope,
    spec: CorrectionSpec,
    nulls: &NullPair,
) -> Result<PopulationCis> {
    if spec.k_primes.len() != target.betas.len() || spec.k_primes.iter().any(|&k| k > scope_size(data, scope)) {
        return Err(invalid("shifted indices do not fit the target and sample"));
    }
    let alpha_prime = alpha - spec.correction;
    let (intervals, warnings) = if alpha_prime <= 0.0 {
        (
            vec![OneSidedInterval::WHOLE_LINE; spec.k_primes.len()],
            vec![Warning::new(
                "budget_exhausted",
                format!(
                    "sampling correction {:.4} leaves no error budget at alpha {alpha}; intervals are the whole line",
                    spec.correction
                ),
            )],
        )
    } else {
        (sample_intervals(data, transforms, scope, &spec.k_primes, alpha_prime, nulls)?, vec![])
    };
    let entries = target
        .betas
        .iter()
        .zip(intervals)
        .map(|(&b, interval)| FamilyEntry {
            index: TargetIndex::Level(b),
            interval,
        })
        .collect();
    Ok(PopulationCis {
        family: IntervalFamily {
            target: target.family_target(),
            level: 1.0 - alpha,
            simultaneous: true,
            entries,
            warnings,
        },
        spec,
        alpha_prime,
    })
}

/// Simultaneous `1 - alpha` intervals for sample quantiles at indices `k_primes`.
fn sample_intervals(
    data: &ExperimentData,
    transforms: &[RankTransform],
    scope: SampleScope,
    k_primes: &[usize],
    alpha: f64,
    nulls: &NullPair,
) -> Result<Vec<OneSidedInterval>> {
    let pick = |all: &[OneSidedInterval]| -> Vec<OneSidedInterval> {
        k_primes
            .iter()
            .map(|&k| if k == 0 { OneSidedInterval::WHOLE_LINE } else { all[k - 1] })
            .collect()
    };
    match scope {
        SampleScope::All => {
            let switched = data.switch_labels_negate();
            let t = Inverter::stratified(data, transforms, &nulls.treated)?;
            let c = Inverter::stratified(&switched, transforms, &nulls.control)?;
            let fam = pooled_family(&t, &c, alpha / 2.0);
            let all: Vec<OneSidedInterval> = fam.entries.iter().map(|e| e.interval).collect();
            Ok(pick(&all))
        }
        SampleScope::Treated => {
            let inv = Inverter::stratified(data, transforms, &nulls.treated)?;
            Ok(k_primes.iter().map(|&k| inv.treated_interval(k, alpha)).collect())
        }
        SampleScope::Control => {
            let switched = data.switch_labels_negate();
            let inv = Inverter::stratified(&switched, transforms, &nulls.control)?;
            Ok(k_primes.iter().map(|&k| inv.treated_interval(k, alpha)).collect())
        }
    }
}

/// Step band over `beta in (0, 1]` from a level-indexed family.
///
/// Entries are the band's breakpoints: the band at `beta` is the interval of the
/// largest breakpoint not above `beta`, and the whole line below the first.
pub fn population_band(family: &IntervalFamily) -> Result<IntervalFamily> {
    let mut steps: Vec<(f64, OneSidedInterval)> = family
        .entries
        .iter()
        .map(|e| match e.index {
            TargetIndex::Level(b) => Ok((b, e.interval)),
            TargetIndex::Rank(_) => Err(invalid("population band needs level-indexed intervals")),
        })
        .collect::<Result<_>>()?;
    steps.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut current = OneSidedInterval::WHOLE_LINE;
    let entries = steps
        .into_iter()
        .map(|(b, i)| {
            current = current.tighter(i);
            FamilyEntry {
                index: TargetIndex::Level(b),
                interval: current,
            }
        })
        .collect();
    Ok(IntervalFamily {
        entries,
        ..family.clone()
    })
}

/// Evaluates a band produced by [`population_band`] at level `beta`.
pub fn band_at(band: &IntervalFamily, beta: f64) -> OneSidedInterval {
    band.entries
        .iter()
        .filter(|e| e.index.as_f64() <= beta)
        .map(|e| e.interval)
        .next_back()
        .unwrap_or(OneSidedInterval::WHOLE_LINE)
}
