//! Stratified experiments and matched observational studies.
//!
//! Stratified designs use within-stratum ranks and a convolved null. Under the
//! sensitivity model the null is replaced by the worst-case tail over
//! confounders whose treatment odds within a set differ by at most `gamma`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use rand::Rng;

use crate::cre::{pooled_family, treated_family, Inverter, NullPair, PValueMethod, PValueResult};
use crate::error::{invalid, Error, Result};
use crate::model::{ExperimentData, IntervalFamily, QuantileHypothesis, RankTransform, Scope, StratumSize, Target};
use crate::rank::{
    null_distribution, score_tolerance, stratum_scores, Design, NullDistribution, NullMode, NullOptions, Provenance,
    SensitivityStructure,
};
use crate::rng::{self, Domain};
use crate::worst_case::WorstCase;

/// Stratified p-value for "at most `n - k` effects exceed `c`".
pub fn pvalue_scre(
    data: &ExperimentData,
    transforms: &[RankTransform],
    k: usize,
    c: f64,
    null: &NullDistribution,
) -> Result<PValueResult> {
    let hypothesis = QuantileHypothesis::new(k, c, Scope::AllUnits, data)?;
    let inv = Inverter::stratified(data, transforms, null)?;
    let t = inv.min_stat(k, c);
    Ok(PValueResult {
        value: null.survival(t),
        hypothesis,
        method: PValueMethod::Stratified,
        statistic_min: t,
        null_provenance: null.provenance.clone(),
    })
}

/// Simultaneous `1 - alpha` prediction intervals for treated effect quantiles
/// in a stratified experiment.
pub fn treated_intervals_scre(
    data: &ExperimentData,
    transforms: &[RankTransform],
    alpha: f64,
    null: &NullDistribution,
) -> Result<IntervalFamily> {
    check_alpha(alpha)?;
    let inv = Inverter::stratified(data, transforms, null)?;
    Ok(treated_family(&inv, alpha, Target::SampleQuantilesTreated))
}

/// Simultaneous `1 - 2 alpha` intervals for all effect quantiles of a
/// stratified experiment, pooling treated and label-switched intervals.
pub fn intervals_scre(
    data: &ExperimentData,
    transforms: &[RankTransform],
    alpha: f64,
    nulls: &NullPair,
) -> Result<IntervalFamily> {
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(invalid(format!("alpha = {alpha} outside (0, 0.5)")));
    }
    let switched = data.switch_labels_negate();
    let t = Inverter::stratified(data, transforms, &nulls.treated)?;
    let c = Inverter::stratified(&switched, transforms, &nulls.control)?;
    Ok(pooled_family(&t, &c, alpha))
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("alpha = {alpha} outside (0, 1)")))
    }
}

/// How the worst-case tail is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensitivityMode {
    /// Matched pairs: exact convolution or coupled Monte Carlo per the null options.
    Pairs,
    /// Normal approximation maximizing each set's mean; asymptotic.
    GaussianApprox,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityOptions {
    pub mode: SensitivityMode,
    pub null: NullOptions,
}

/// Bound on the odds ratio of treatment within a matched set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityModel {
    pub gamma: f64,
}

impl SensitivityModel {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma >= 1.0 && gamma.is_finite()) {
            return Err(invalid(format!("sensitivity bound must be a finite value >= 1, got {gamma}")));
        }
        Ok(SensitivityModel { gamma })
    }

    /// Builds the model from `ln(gamma)`.
    pub fn from_log(log_gamma: f64) -> Result<Self> {
        Self::new(log_gamma.exp())
    }
}

fn check_matched(strata: &[StratumSize], mode: SensitivityMode) -> Result<()> {
    if let Some(s) = strata.iter().find(|s| s.units < 2) {
        return Err(invalid(format!("matched set of size {} has no randomness", s.units)));
    }
    if strata.iter().any(|s| s.treated != 1) {
        return Err(invalid("sensitivity analysis requires exactly one treated unit per matched set"));
    }
    if mode == SensitivityMode::Pairs && strata.iter().any(|s| s.units != 2) {
        return Err(invalid("pairs mode requires every matched set to have two units"));
    }
    Ok(())
}

/// Worst-case null tail of the stratified statistic under the sensitivity model.
///
/// At `gamma = 1` this is the stratified randomization null.
pub fn worst_case_tail(
    strata: &[StratumSize],
    transforms: &[RankTransform],
    model: SensitivityModel,
    options: &SensitivityOptions,
) -> Result<NullDistribution> {
    check_matched(strata, options.mode)?;
    if model.gamma == 1.0 {
        return null_distribution(
            &Design::Scre {
                strata: strata.to_vec(),
            },
            transforms,
            &options.null,
        );
    }
    let tables = stratum_scores(transforms, strata)?;
    let structure = match options.mode {
        SensitivityMode::Pairs => SensitivityStructure::Pairs,
        SensitivityMode::GaussianApprox => SensitivityStructure::GaussianApprox,
    };
    let design = Design::Sensitivity {
        gamma: model.gamma,
        structure,
        strata: strata.to_vec(),
    };
    match options.mode {
        SensitivityMode::Pairs => pairs_tail(&tables, model.gamma, design, transforms.to_vec(), &options.null),
        SensitivityMode::GaussianApprox => Ok(gaussian_tail(&tables, model.gamma, design, transforms.to_vec())),
    }
}

fn pairs_tail(
    tables: &[Vec<f64>],
    gamma: f64,
    design: Design,
    transforms: Vec<RankTransform>,
    options: &NullOptions,
) -> Result<NullDistribution> {
    let tolerance = score_tolerance(tables);
    let p_hi = gamma / (1.0 + gamma);
    if options.mode != NullMode::MonteCarlo {
        let mut atoms: Vec<(f64, f64)> = vec![(0.0, 1.0)];
        let mut fits = true;
        for t in tables {
            let mut next = Vec::with_capacity(atoms.len() * 2);
            for &(v, w) in &atoms {
                next.push((v + t[0], w * (1.0 - p_hi)));
                next.push((v + t[1], w * p_hi));
            }
            next.sort_by(|a, b| a.0.total_cmp(&b.0));
            atoms = merge(next, tolerance);
            if atoms.len() as u64 > options.exact_cap {
                fits = false;
                break;
            }
        }
        if fits {
            return Ok(NullDistribution::from_atoms(
                atoms,
                tolerance,
                Provenance::ExactEnumeration,
                design,
                transforms,
            ));
        }
        if options.mode == NullMode::Exact {
            return Err(Error::ExactCapExceeded {
                assignments: 2f64.powi(tables.len() as i32),
                cap: options.exact_cap,
            });
        }
    }
    let mc = options.mc;
    // The same uniforms are used for every gamma, so tails are monotone in gamma.
    let draws: Vec<(f64, f64)> = (0..mc.draws as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng::substream(mc.seed, Domain::Sensitivity, r);
            let total: f64 = tables
                .iter()
                .map(|t| if rng.random::<f64>() < p_hi { t[1] } else { t[0] })
                .sum();
            (total, 1.0)
        })
        .collect();
    Ok(NullDistribution::from_atoms(
        draws,
        tolerance,
        Provenance::MonteCarlo {
            draws: mc.draws,
            seed: mc.seed,
        },
        design,
        transforms,
    ))
}

fn merge(sorted: Vec<(f64, f64)>, tolerance: f64) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(sorted.len());
    for (v, w) in sorted {
        match out.last_mut() {
            Some(last) if v - last.0 <= tolerance => last.1 += w,
            _ => out.push((v, w)),
        }
    }
    out
}

/// Mean and variance of the treated score in one set when the `b` largest
/// scores carry odds `gamma`.
pub fn set_moments(scores: &[f64], b: usize, gamma: f64) -> (f64, f64) {
    let n = scores.len();
    let denom = (n - b) as f64 + gamma * b as f64;
    let (mut m1, mut m2) = (0.0, 0.0);
    for (i, &q) in scores.iter().enumerate() {
        let w = if i >= n - b { gamma } else { 1.0 } / denom;
        m1 += w * q;
        m2 += w * q * q;
    }
    (m1, (m2 - m1 * m1).max(0.0))
}

/// Largest-mean moments of one set over `b = 1..n-1`, ties by larger variance.
pub fn worst_set_moments(scores: &[f64], gamma: f64) -> (f64, f64) {
    (1..scores.len())
        .map(|b| set_moments(scores, b, gamma))
        .fold((f64::NEG_INFINITY, 0.0), |best, cand| {
            let tol = 1e-12 * (1.0 + cand.0.abs());
            if cand.0 > best.0 + tol || ((cand.0 - best.0).abs() <= tol && cand.1 > best.1) {
                cand
            } else {
                best
            }
        })
}

fn gaussian_tail(tables: &[Vec<f64>], gamma: f64, design: Design, transforms: Vec<RankTransform>) -> NullDistribution {
    let (mean, variance) = tables
        .iter()
        .map(|t| worst_set_moments(t, gamma))
        .fold((0.0, 0.0), |acc, m| (acc.0 + m.0, acc.1 + m.1));
    // integer-valued statistics get a half-step continuity correction
    let continuity = if score_tolerance(tables) == 0.0 { 0.5 } else { 0.0 };
    NullDistribution::gaussian(mean, variance, continuity, design, transforms)
}

/// Sensitivity p-value for "at most `n_t - k` treated effects exceed `c`".
pub fn pvalue_sensitivity(
    data: &ExperimentData,
    transforms: &[RankTransform],
    k: usize,
    c: f64,
    model: SensitivityModel,
    options: &SensitivityOptions,
) -> Result<PValueResult> {
    let hypothesis = QuantileHypothesis::new(k, c, Scope::Treated, data)?;
    let null = worst_case_tail(&data.stratum_sizes(), transforms, model, options)?;
    let inv = Inverter::from_parts(WorstCase::stratified(data, transforms)?, &null);
    let t = inv.min_stat(data.n_control() + k, c);
    Ok(PValueResult {
        value: null.survival(t),
        hypothesis,
        method: PValueMethod::Sensitivity { gamma: model.gamma },
        statistic_min: t,
        null_provenance: null.provenance.clone(),
    })
}

/// Prediction intervals for treated effect quantiles at each sensitivity bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityCurve {
    pub gammas: Vec<f64>,
    pub families: Vec<IntervalFamily>,
    /// Per treated quantile `k = 1..=n_t`: largest grid bound whose interval excludes zero.
    pub max_gamma_excluding_zero: Vec<Option<f64>>,
}

/// Runs treated-side interval construction for each bound in `gammas`.
pub fn sensitivity_curve(
    data: &ExperimentData,
    transforms: &[RankTransform],
    alpha: f64,
    gammas: &[f64],
    options: &SensitivityOptions,
) -> Result<SensitivityCurve> {
    check_alpha(alpha)?;
    if gammas.is_empty() {
        return Err(invalid("sensitivity grid is empty"));
    }
    let models = gammas.iter().map(|&g| SensitivityModel::new(g)).collect::<Result<Vec<_>>>()?;
    let sizes = data.stratum_sizes();
    let worst = WorstCase::stratified(data, transforms)?;
    let families = models
        .iter()
        .map(|&m| {
            let null = worst_case_tail(&sizes, transforms, m, options)?;
            let inv = Inverter::from_parts(worst.clone(), &null);
            Ok(treated_family(&inv, alpha, Target::SampleQuantilesTreated))
        })
        .collect::<Result<Vec<_>>>()?;
    let max_gamma_excluding_zero = (0..data.n_treated())
        .map(|i| {
            gammas
                .iter()
                .zip(&families)
                .filter(|(_, f)| !f.entries[i].interval.contains(0.0))
                .map(|(&g, _)| g)
                .fold(None, |acc: Option<f64>, g| Some(acc.map_or(g, |a| a.max(g))))
        })
        .collect();
    Ok(SensitivityCurve {
        gammas: gammas.to_vec(),
        families,
        max_gamma_excluding_zero,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cre::pvalue_all;
    use crate::model::MonteCarloConfig;

    const W: RankTransform = RankTransform::Wilcoxon;

    fn labels(sizes: &[usize]) -> Vec<String> {
        sizes
            .iter()
            .enumerate()
            .flat_map(|(s, &n)| std::iter::repeat_n(format!("s{s}"), n))
            .collect()
    }

    fn pairs(diffs: &[f64]) -> ExperimentData {
        let mut z = Vec::new();
        let mut y = Vec::new();
        for &d in diffs {
            z.extend([true, false]);
            y.extend([d, 0.0]);
        }
        ExperimentData::stratified(z, y, labels(&vec![2; diffs.len()])).unwrap()
    }

    fn exact_opts(mode: SensitivityMode) -> SensitivityOptions {
        SensitivityOptions {
            mode,
            null: NullOptions::exact(),
        }
    }

    #[test]
    fn single_stratum_equals_cre() {
        let z = vec![true, false, true, false, true];
        let y = vec![0.5, 1.5, 2.0, -1.0, 3.0];
        let d = ExperimentData::new(z.clone(), y.clone()).unwrap();
        let s = ExperimentData::stratified(z, y, vec!["x".into(); 5]).unwrap();
        let g = null_distribution(&Design::of(&d), &[W], &NullOptions::exact()).unwrap();
        let gs = null_distribution(&Design::of(&s), &[W], &NullOptions::exact()).unwrap();
        for k in 0..=5 {
            for c in [-1.0, 0.5, 2.0] {
                assert_eq!(
                    pvalue_all(&d, &W, k, c, &g).unwrap().value,
                    pvalue_scre(&s, &[W], k, c, &gs).unwrap().value
                );
            }
        }
        assert_eq!(pvalue_scre(&s, &[W], 0, 0.0, &gs).unwrap().value, 1.0);
    }

    #[test]
    fn per_stratum_shift_invariance() {
        let z = vec![true, false, false, true, false, true];
        let y = vec![1.0, 0.5, 2.0, 3.0, 1.5, 0.25];
        let l = labels(&[3, 3]);
        let d = ExperimentData::stratified(z.clone(), y.clone(), l.clone()).unwrap();
        let shifted = ExperimentData::stratified(
            z,
            y.iter().enumerate().map(|(i, v)| if i < 3 { v + 100.0 } else { *v }).collect(),
            l,
        )
        .unwrap();
        let nulls = NullPair::for_data(&d, &[W], &NullOptions::exact()).unwrap();
        assert_eq!(
            intervals_scre(&d, &[W], 0.2, &nulls).unwrap(),
            intervals_scre(&shifted, &[W], 0.2, &nulls).unwrap()
        );
    }

    #[test]
    fn unit_gamma_is_randomization() {
        let sizes = vec![StratumSize { units: 2, treated: 1 }; 5];
        let a = worst_case_tail(&sizes, &[W], SensitivityModel::new(1.0).unwrap(), &exact_opts(SensitivityMode::Pairs))
            .unwrap();
        let b = null_distribution(&Design::Scre { strata: sizes }, &[W], &NullOptions::exact()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn pair_probability() {
        let sizes = vec![StratumSize { units: 2, treated: 1 }];
        let g = worst_case_tail(&sizes, &[W], SensitivityModel::new(2.0).unwrap(), &exact_opts(SensitivityMode::Pairs))
            .unwrap();
        assert!((g.survival(2.0) - 2.0 / 3.0).abs() < 1e-15);
        let big = worst_case_tail(
            &[StratumSize { units: 2, treated: 1 }; 4],
            &[W],
            SensitivityModel::new(1e6).unwrap(),
            &exact_opts(SensitivityMode::Pairs),
        )
        .unwrap();
        assert!(big.survival(8.0) > 0.9999);
    }

    #[test]
    fn gaussian_mean_grows_with_gamma() {
        let scores = [1.0, 2.0, 3.0];
        let mut last = f64::NEG_INFINITY;
        for g in [1.0, 1.3, 2.2, 4.0, 8.3, 38.4] {
            let (m, _) = worst_set_moments(&scores, g);
            assert!(m >= last);
            last = m;
        }
        assert_eq!(worst_set_moments(&scores, 1.0).0, 2.0);
    }

    #[test]
    fn sensitivity_pvalue_monotone_in_gamma() {
        let d = pairs(&[1.0, 2.0, -0.5, 3.0, 0.75, 1.5]);
        let opts = SensitivityOptions {
            mode: SensitivityMode::Pairs,
            null: NullOptions::monte_carlo(MonteCarloConfig::new(5000, 2).unwrap()),
        };
        let mut last = 0.0;
        for g in [1.0, 1.5, 2.0, 4.0] {
            let p = pvalue_sensitivity(&d, &[W], 6, 0.0, SensitivityModel::new(g).unwrap(), &opts)
                .unwrap()
                .value;
            assert!(p >= last, "gamma {g}: {p} < {last}");
            last = p;
        }
    }

    #[test]
    fn rejects_bad_shapes() {
        let sizes = vec![StratumSize { units: 3, treated: 1 }];
        assert!(worst_case_tail(&sizes, &[W], SensitivityModel::new(2.0).unwrap(), &exact_opts(SensitivityMode::Pairs)).is_err());
        let sizes = vec![StratumSize { units: 3, treated: 2 }];
        assert!(worst_case_tail(
            &sizes,
            &[W],
            SensitivityModel::new(2.0).unwrap(),
            &exact_opts(SensitivityMode::GaussianApprox)
        )
        .is_err());
        assert!(SensitivityModel::new(0.5).is_err());
        assert!((SensitivityModel::from_log(2f64.ln()).unwrap().gamma - 2.0).abs() < 1e-12);
    }

    #[test]
    fn curve_bounds_shrink_with_gamma() {
        let d = pairs(&[1.0, 2.0, 0.5, 3.0, 0.75, 1.5, 2.5, 4.0]);
        let curve = sensitivity_curve(&d, &[W], 0.1, &[1.0, 1.3, 2.2, 4.0], &exact_opts(SensitivityMode::Pairs)).unwrap();
        for k in 0..d.n_treated() {
            let lowers: Vec<f64> = curve.families.iter().map(|f| f.entries[k].interval.lower).collect();
            assert!(lowers.windows(2).all(|w| w[1] <= w[0]), "k {k}: {lowers:?}");
        }
        let single = sensitivity_curve(&d, &[W], 0.1, &[1.0], &exact_opts(SensitivityMode::Pairs)).unwrap();
        let null = null_distribution(&Design::of(&d), &[W], &NullOptions::exact()).unwrap();
        assert_eq!(single.families[0], treated_intervals_scre(&d, &[W], 0.1, &null).unwrap());
    }
}
