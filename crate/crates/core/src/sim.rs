//! Simulation studies: method comparison, budget-split sensitivity and
//! coverage audits on Gaussian potential outcomes.
//!
//! Control outcomes are `N(0, rho2)` and treated outcomes `N(2, 1 - rho2)`,
//! drawn independently, so effects are `N(2, 1)` for every `rho2`.

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal as NormalCdf};

use crate::cre::{original_family, plan_side, pooled_family, simultaneous_from_plans, Inverter, NullPair, Side, SidePlan};
use crate::error::{invalid, Result};
use crate::model::{extended_real, ExperimentData, MonteCarloConfig, OneSidedInterval, RankTransform};
use crate::population::{plan_population, population_cis_from_plan, PopulationKind, PopulationTarget, SampleScope};
use crate::rank::NullOptions;
use crate::rng::{self, Domain};
use crate::tail::{choose_kprime_single, level_index, CorrectionSpec};

/// Data-generating settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub n: usize,
    pub rho2: f64,
    pub treat_fraction: f64,
    pub replications: usize,
    pub seed: u64,
    /// When set, every unit's effect equals this constant.
    #[serde(default)]
    pub constant_effect: Option<f64>,
}

impl DgpSpec {
    pub fn new(n: usize, rho2: f64, replications: usize, seed: u64) -> Result<Self> {
        let spec = DgpSpec {
            n,
            rho2,
            treat_fraction: 0.5,
            replications,
            seed,
            constant_effect: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<()> {
        if !(self.rho2 > 0.0 && self.rho2 < 1.0) {
            return Err(invalid(format!("rho2 = {} outside (0, 1)", self.rho2)));
        }
        let nt = self.n_treated();
        if nt == 0 || nt >= self.n {
            return Err(invalid("design needs treated and control units"));
        }
        Ok(())
    }

    pub fn n_treated(&self) -> usize {
        (self.n as f64 * self.treat_fraction).round() as usize
    }

    /// Population quantile of the effect distribution at level `beta`.
    pub fn effect_quantile(&self, beta: f64) -> f64 {
        match self.constant_effect {
            Some(c) => c,
            None => 2.0 + NormalCdf::new(0.0, 1.0).expect("standard normal").inverse_cdf(beta),
        }
    }
}

/// A simulated experiment with its latent effects.
#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub data: ExperimentData,
    pub effects: Vec<f64>,
}

impl Generated {
    /// Effects sorted ascending.
    pub fn sorted_effects(&self) -> Vec<f64> {
        let mut e = self.effects.clone();
        e.sort_by(f64::total_cmp);
        e
    }
}

fn potential_outcomes<R: Rng + ?Sized>(spec: &DgpSpec, count: usize, rng: &mut R) -> Vec<(f64, f64)> {
    let y0 = Normal::new(0.0, spec.rho2.sqrt()).expect("positive variance");
    let y1 = Normal::new(2.0, (1.0 - spec.rho2).sqrt()).expect("positive variance");
    (0..count)
        .map(|_| {
            let a = y0.sample(rng);
            let b = match spec.constant_effect {
                Some(c) => a + c,
                None => y1.sample(rng),
            };
            (a, b)
        })
        .collect()
}

fn randomize<R: Rng + ?Sized>(units: &[(f64, f64)], n_t: usize, rng: &mut R) -> Generated {
    let mut treated = vec![false; units.len()];
    for i in index::sample(rng, units.len(), n_t) {
        treated[i] = true;
    }
    let outcomes = units.iter().zip(&treated).map(|(u, &t)| if t { u.1 } else { u.0 }).collect();
    Generated {
        data: ExperimentData::new(treated, outcomes).expect("design has both arms"),
        effects: units.iter().map(|u| u.1 - u.0).collect(),
    }
}

/// Replicate `replicate` of the design: fresh potential outcomes and assignment.
pub fn generate(spec: &DgpSpec, replicate: u64) -> Result<Generated> {
    spec.validate()?;
    let mut rng = rng::substream(spec.seed, Domain::Simulation, replicate);
    let units = potential_outcomes(spec, spec.n, &mut rng);
    Ok(randomize(&units, spec.n_treated(), &mut rng))
}

/// Median on the extended real line; `-inf` takes part in the ordering.
pub fn extended_median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else if v[m - 1] == v[m] || v[m - 1].is_infinite() {
        v[m - 1]
    } else if v[m].is_infinite() {
        v[m]
    } else {
        v[m - 1] + (v[m] - v[m - 1]) / 2.0
    }
}

/// Compared procedures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Method {
    /// Original all-units inversion at each index.
    M0,
    /// Pooled treated and control intervals, `alpha / 2` per side.
    M1,
    /// Corrected simultaneous intervals, both sides at `alpha / 2`.
    M2 { gamma: f64 },
}

impl Method {
    pub fn label(&self) -> String {
        match self {
            Method::M0 => "M0".into(),
            Method::M1 => "M1".into(),
            Method::M2 { gamma } => format!("M2(gamma={gamma})"),
        }
    }
}

/// Settings shared by the comparison studies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub n: usize,
    pub replications: usize,
    pub seed: u64,
    pub alpha: f64,
    pub transform: RankTransform,
    /// Quantile levels, e.g. 0.5..=0.9.
    pub quantiles: Vec<f64>,
    pub mc: MonteCarloConfig,
}

impl StudyConfig {
    /// `n = 100`, Stephenson scores with `s = 6`, `alpha = 0.1`, levels 50%..90%.
    pub fn standard(replications: usize, seed: u64, mc: MonteCarloConfig) -> Self {
        StudyConfig {
            n: 100,
            replications,
            seed,
            alpha: 0.1,
            transform: RankTransform::Stephenson { s: 6 },
            quantiles: vec![0.5, 0.6, 0.7, 0.8, 0.9],
            mc,
        }
    }

    /// Ranks `ceil(n * q)` of the quantile levels.
    pub fn ranks(&self) -> Vec<usize> {
        self.quantiles.iter().map(|&q| level_index(self.n as u64, q) as usize).collect()
    }
}

/// One cell of a study table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub rho2: f64,
    pub quantile_pct: f64,
    pub method_or_gamma: String,
    #[serde(with = "extended_real")]
    pub median_lower: f64,
    pub n_informative: usize,
}

/// Renders rows as CSV with a header.
pub fn tidy_csv(rows: &[StudyRow]) -> String {
    let mut out = String::from("rho2,quantile_pct,method_or_gamma,median_lower,n_informative\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.rho2,
            r.quantile_pct,
            r.method_or_gamma,
            extended_real::format(r.median_lower),
            r.n_informative
        ));
    }
    out
}

/// Design-level quantities shared by all replications.
struct Prepared {
    nulls: NullPair,
    plans: Vec<(Method, Option<(SidePlan, SidePlan)>)>,
}

fn prepare(config: &StudyConfig, n_t: usize, methods: &[Method]) -> Result<Prepared> {
    let n = config.n;
    let treated = vec![true; n_t].into_iter().chain(vec![false; n - n_t]).collect::<Vec<_>>();
    let shape = ExperimentData::new(treated, (0..n).map(|i| i as f64).collect())?;
    let options = NullOptions {
        mc: config.mc,
        ..Default::default()
    };
    let nulls = NullPair::for_cre(&shape, &config.transform, &options)?;
    let ks = config.ranks();
    let plans = methods
        .iter()
        .map(|&m| {
            let plan = match m {
                Method::M2 { gamma } => {
                    let half = config.alpha / 2.0;
                    Some((
                        plan_side(Side::Treated, n, n_t, &ks, half, gamma, config.mc)?,
                        plan_side(Side::Control, n, n - n_t, &ks, half, gamma, config.mc)?,
                    ))
                }
                _ => None,
            };
            Ok((m, plan))
        })
        .collect::<Result<_>>()?;
    Ok(Prepared { nulls, plans })
}

/// Lower limits for each method (outer) and quantile (inner) on one data set.
fn lower_limits(config: &StudyConfig, prepared: &Prepared, data: &ExperimentData) -> Result<Vec<Vec<f64>>> {
    let ks = config.ranks();
    let switched = data.switch_labels_negate();
    let t_inv = Inverter::cre(data, &config.transform, &prepared.nulls.treated)?;
    let c_inv = Inverter::cre(&switched, &config.transform, &prepared.nulls.control)?;
    let mut pooled: Option<Vec<OneSidedInterval>> = None;
    prepared
        .plans
        .iter()
        .map(|(m, plan)| {
            let intervals: Vec<OneSidedInterval> = match m {
                Method::M0 => original_family(&t_inv, &ks, config.alpha).entries.iter().map(|e| e.interval).collect(),
                Method::M1 => {
                    let all = pooled.get_or_insert_with(|| {
                        pooled_family(&t_inv, &c_inv, config.alpha / 2.0)
                            .entries
                            .iter()
                            .map(|e| e.interval)
                            .collect()
                    });
                    ks.iter().map(|&k| all[k - 1]).collect()
                }
                Method::M2 { .. } => {
                    let (tp, cp) = plan.as_ref().expect("planned");
                    simultaneous_from_plans(&[(&t_inv, tp), (&c_inv, cp)], &ks, config.alpha)
                        .family
                        .entries
                        .iter()
                        .map(|e| e.interval)
                        .collect()
                }
            };
            Ok(intervals.iter().map(|i| i.lower).collect())
        })
        .collect()
}

fn run_study(config: &StudyConfig, rho2s: &[f64], methods: &[Method]) -> Result<Vec<StudyRow>> {
    if config.replications == 0 {
        return Err(invalid("replications must be positive"));
    }
    let mut rows = Vec::new();
    let mut cache: Option<(usize, Prepared)> = None;
    for (ri, &rho2) in rho2s.iter().enumerate() {
        let spec = DgpSpec::new(config.n, rho2, config.replications, rng::child_seed(config.seed, ri as u64))?;
        let n_t = spec.n_treated();
        if cache.as_ref().map(|c| c.0) != Some(n_t) {
            cache = Some((n_t, prepare(config, n_t, methods)?));
        }
        let prepared = &cache.as_ref().expect("prepared").1;
        // limits[rep][method][quantile]
        let limits: Vec<Vec<Vec<f64>>> = (0..config.replications as u64)
            .into_par_iter()
            .map(|r| lower_limits(config, prepared, &generate(&spec, r)?.data))
            .collect::<Result<_>>()?;
        for (mi, m) in methods.iter().enumerate() {
            for (qi, &q) in config.quantiles.iter().enumerate() {
                let values: Vec<f64> = limits.iter().map(|l| l[mi][qi]).collect();
                rows.push(StudyRow {
                    rho2,
                    quantile_pct: (q * 100.0).round(),
                    method_or_gamma: m.label(),
                    median_lower: extended_median(&values),
                    n_informative: values.iter().filter(|v| v.is_finite()).count(),
                });
            }
        }
    }
    Ok(rows)
}

/// Median lower limits of M0, M1 and M2 (`gamma = 0.5`) per `rho2` and quantile.
pub fn method_comparison(config: &StudyConfig, rho2s: &[f64]) -> Result<Vec<StudyRow>> {
    run_study(config, rho2s, &[Method::M0, Method::M1, Method::M2 { gamma: 0.5 }])
}

/// Median lower limits of M2 for each budget split `gamma`.
pub fn gamma_study(config: &StudyConfig, rho2s: &[f64], gammas: &[f64]) -> Result<Vec<StudyRow>> {
    let methods: Vec<Method> = gammas.iter().map(|&gamma| Method::M2 { gamma }).collect();
    let mut rows = run_study(config, rho2s, &methods)?;
    for r in &mut rows {
        r.method_or_gamma = r.method_or_gamma.trim_start_matches("M2(gamma=").trim_end_matches(')').to_string();
    }
    Ok(rows)
}

/// Interval procedure audited for coverage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Procedure {
    /// Pooled treated and control intervals for all `n` quantiles, level `1 - 2 alpha`.
    PooledAll,
    /// Corrected interval for one quantile.
    Single { k: usize, gamma: f64 },
    /// Corrected simultaneous intervals.
    Simultaneous {
        ks: Vec<usize>,
        gamma: f64,
        combine_sides: bool,
    },
    /// Population quantiles of a fixed finite population sampled without replacement.
    FinitePopulation { size: u64, betas: Vec<f64>, split_gamma: f64 },
    /// Quantiles of the effect distribution under i.i.d. sampling.
    Superpopulation { betas: Vec<f64>, split_gamma: f64 },
}

/// Empirical coverage with Monte Carlo standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub replications: usize,
    pub nominal: f64,
    pub simultaneous: f64,
    pub simultaneous_se: f64,
    pub per_target: Vec<f64>,
}

impl CoverageReport {
    /// Coverage at least nominal minus `sigmas` standard errors.
    pub fn meets_nominal(&self, sigmas: f64) -> bool {
        let se = (self.nominal * (1.0 - self.nominal) / self.replications as f64).sqrt();
        self.simultaneous >= self.nominal - sigmas * se
    }
}

/// Fraction of replications whose intervals cover their targets.
pub fn coverage_audit(
    spec: &DgpSpec,
    procedure: &Procedure,
    transform: &RankTransform,
    alpha: f64,
    mc: MonteCarloConfig,
) -> Result<CoverageReport> {
    spec.validate()?;
    if spec.replications == 0 {
        return Err(invalid("replications must be positive"));
    }
    let n = spec.n;
    let n_t = spec.n_treated();
    let treated = vec![true; n_t].into_iter().chain(vec![false; n - n_t]).collect::<Vec<_>>();
    let shape = ExperimentData::new(treated, (0..n).map(|i| i as f64).collect())?;
    let nulls = NullPair::for_cre(
        &shape,
        transform,
        &NullOptions {
            mc,
            ..Default::default()
        },
    )?;
    let nominal = match procedure {
        Procedure::PooledAll => 1.0 - 2.0 * alpha,
        _ => 1.0 - alpha,
    };

    // design-level plans
    let single_plan = match procedure {
        Procedure::Single { k, gamma } => Some(choose_kprime_single(n as u64, n_t as u64, *k as u64, alpha, *gamma)?),
        _ => None,
    };
    let multi_plans: Option<Vec<SidePlan>> = match procedure {
        Procedure::Simultaneous {
            ks,
            gamma,
            combine_sides,
        } => Some(if *combine_sides {
            vec![
                plan_side(Side::Treated, n, n_t, ks, alpha / 2.0, *gamma, mc)?,
                plan_side(Side::Control, n, n - n_t, ks, alpha / 2.0, *gamma, mc)?,
            ]
        } else {
            vec![plan_side(Side::Treated, n, n_t, ks, alpha, *gamma, mc)?]
        }),
        _ => None,
    };
    let population_plan: Option<(PopulationTarget, CorrectionSpec)> = match procedure {
        Procedure::FinitePopulation {
            size,
            betas,
            split_gamma,
        } => {
            let target = PopulationTarget::new(PopulationKind::Finite { size: *size }, betas.clone())?;
            let plan = plan_population(&target, n, n, alpha, *split_gamma, mc)?;
            Some((target, plan))
        }
        Procedure::Superpopulation { betas, split_gamma } => {
            let target = PopulationTarget::new(PopulationKind::Super, betas.clone())?;
            let plan = plan_population(&target, n, n, alpha, *split_gamma, mc)?;
            Some((target, plan))
        }
        _ => None,
    };
    let population: Option<Vec<(f64, f64)>> = match procedure {
        Procedure::FinitePopulation { size, .. } => {
            if (*size as usize) < n {
                return Err(invalid("population smaller than sample"));
            }
            let mut rng = rng::substream(spec.seed, Domain::Population, u64::MAX);
            Some(potential_outcomes(spec, *size as usize, &mut rng))
        }
        _ => None,
    };
    let population_sorted: Option<Vec<f64>> = population.as_ref().map(|p| {
        let mut e: Vec<f64> = p.iter().map(|u| u.1 - u.0).collect();
        e.sort_by(f64::total_cmp);
        e
    });

    // covered[rep][target]
    let covered: Vec<Vec<bool>> = (0..spec.replications as u64)
        .into_par_iter()
        .map(|r| -> Result<Vec<bool>> {
            let g = match &population {
                Some(units) => {
                    let mut rng = rng::substream(spec.seed, Domain::Population, r);
                    let picked: Vec<(f64, f64)> =
                        index::sample(&mut rng, units.len(), n).iter().map(|i| units[i]).collect();
                    randomize(&picked, n_t, &mut rng)
                }
                None => generate(spec, r)?,
            };
            let data = &g.data;
            let sorted = g.sorted_effects();
            let t_inv = Inverter::cre(data, transform, &nulls.treated)?;
            Ok(match procedure {
                Procedure::PooledAll => {
                    let switched = data.switch_labels_negate();
                    let c_inv = Inverter::cre(&switched, transform, &nulls.control)?;
                    pooled_family(&t_inv, &c_inv, alpha)
                        .entries
                        .iter()
                        .zip(&sorted)
                        .map(|(e, &tau)| e.interval.contains(tau))
                        .collect()
                }
                Procedure::Single { k, .. } => {
                    let (kp, corr) = single_plan.expect("planned");
                    let interval = if alpha - corr <= 0.0 {
                        OneSidedInterval::WHOLE_LINE
                    } else {
                        t_inv.treated_interval(kp, alpha - corr)
                    };
                    vec![interval.contains(sorted[k - 1])]
                }
                Procedure::Simultaneous { ks, .. } => {
                    let plans = multi_plans.as_ref().expect("planned");
                    let switched = data.switch_labels_negate();
                    let c_inv = Inverter::cre(&switched, transform, &nulls.control)?;
                    let sides: Vec<(&Inverter<'_>, &SidePlan)> = plans
                        .iter()
                        .map(|p| (if p.side == Side::Treated { &t_inv } else { &c_inv }, p))
                        .collect();
                    simultaneous_from_plans(&sides, ks, alpha)
                        .family
                        .entries
                        .iter()
                        .zip(ks)
                        .map(|(e, &k)| e.interval.contains(sorted[k - 1]))
                        .collect()
                }
                Procedure::FinitePopulation { .. } | Procedure::Superpopulation { .. } => {
                    let (target, plan) = population_plan.as_ref().expect("planned");
                    let fam = population_cis_from_plan(
                        data,
                        std::slice::from_ref(transform),
                        target,
                        alpha,
                        SampleScope::All,
                        plan.clone(),
                        &nulls,
                    )?
                    .family;
                    let truths: Vec<f64> = match (&population_sorted, target.ranks()) {
                        (Some(pop), Some(ranks)) => ranks
                            .iter()
                            .map(|&k| if k == 0 { f64::NEG_INFINITY } else { pop[k as usize - 1] })
                            .collect(),
                        _ => target.betas.iter().map(|&b| spec.effect_quantile(b)).collect(),
                    };
                    fam.entries.iter().zip(truths).map(|(e, t)| e.interval.contains(t)).collect()
                }
            })
        })
        .collect::<Result<_>>()?;

    let reps = covered.len() as f64;
    let all = covered.iter().filter(|c| c.iter().all(|&b| b)).count() as f64 / reps;
    let targets = covered.first().map_or(0, |c| c.len());
    let per_target = (0..targets)
        .map(|j| covered.iter().filter(|c| c[j]).count() as f64 / reps)
        .collect();
    Ok(CoverageReport {
        replications: covered.len(),
        nominal,
        simultaneous: all,
        simultaneous_se: (all * (1.0 - all) / reps).sqrt(),
        per_target,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generate_moments() {
        let spec = DgpSpec::new(4000, 0.5, 1, 3).unwrap();
        let g = generate(&spec, 0).unwrap();
        assert_eq!(g.data.n_treated(), 2000);
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let var = |v: &[f64]| {
            let m = mean(v);
            v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
        };
        let y = g.data.outcomes();
        let y1: Vec<f64> = y.iter().zip(g.data.treated()).filter(|(_, &t)| t).map(|(v, _)| *v).collect();
        let y0: Vec<f64> = y.iter().zip(g.data.treated()).filter(|(_, &t)| !t).map(|(v, _)| *v).collect();
        // variance of a sample variance is about 2 sigma^4 / n
        let se_var = (2.0 * 0.25 / 2000.0f64).sqrt();
        assert!((var(&y0) - 0.5).abs() < 3.0 * se_var);
        assert!((var(&y1) - 0.5).abs() < 3.0 * se_var);
        assert!((mean(&g.effects) - 2.0).abs() < 3.0 / (4000f64).sqrt());
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = DgpSpec::new(20, 0.3, 1, 8).unwrap();
        assert_eq!(generate(&spec, 4).unwrap(), generate(&spec, 4).unwrap());
        assert_ne!(generate(&spec, 4).unwrap(), generate(&spec, 5).unwrap());
    }

    #[test]
    fn median_on_extended_reals() {
        let ninf = f64::NEG_INFINITY;
        assert_eq!(extended_median(&[ninf, 1.0, 2.0]), 1.0);
        assert_eq!(extended_median(&[ninf, ninf, 1.0, 2.0]), ninf);
        assert_eq!(extended_median(&[ninf, 1.0, 2.0, 3.0]), 1.5);
        assert_eq!(extended_median(&[ninf, 1.0]), ninf);
    }

    #[test]
    fn constant_effects_are_always_covered() {
        let mut spec = DgpSpec::new(16, 0.5, 30, 1).unwrap();
        spec.constant_effect = Some(1.0);
        let report = coverage_audit(
            &spec,
            &Procedure::Single { k: 12, gamma: 0.5 },
            &RankTransform::Wilcoxon,
            0.1,
            MonteCarloConfig::new(2000, 1).unwrap(),
        )
        .unwrap();
        assert!(report.simultaneous >= 0.9);
    }

    #[test]
    fn tidy_csv_header() {
        let rows = vec![StudyRow {
            rho2: 0.5,
            quantile_pct: 50.0,
            method_or_gamma: "M0".into(),
            median_lower: f64::NEG_INFINITY,
            n_informative: 0,
        }];
        let csv = tidy_csv(&rows);
        assert_eq!(csv, "rho2,quantile_pct,method_or_gamma,median_lower,n_informative\n0.5,50,M0,-inf,0\n");
    }
}
