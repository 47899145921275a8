//! Rank-score statistics and their randomization null distributions.

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{invalid, Error, Result};
use crate::model::{ExperimentData, MonteCarloConfig, RankTransform, StratumSize};
use crate::rng::{self, Domain};
use crate::tail::ln_choose;

/// Default cap on the number of assignments enumerated exactly.
pub const DEFAULT_EXACT_CAP: u64 = 1_000_000;

/// Ranks `1..=n`; ties go to the earlier position, `-inf` ranks lowest.
pub fn ranks(outcomes: &[f64]) -> Vec<usize> {
    let order = sort_order(outcomes);
    let mut out = vec![0; outcomes.len()];
    for (r, &i) in order.iter().enumerate() {
        out[i] = r + 1;
    }
    out
}

/// Unit indices sorted by outcome, ties by index.
pub(crate) fn sort_order(outcomes: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..outcomes.len()).collect();
    order.sort_by(|&a, &b| {
        outcomes[a]
            .partial_cmp(&outcomes[b])
            .expect("outcomes are never NaN")
            .then(a.cmp(&b))
    });
    order
}

/// `sum_i z_i * scores[rank_i(y) - 1]`.
pub fn statistic_with_scores(treated: &[bool], outcomes: &[f64], scores: &[f64]) -> f64 {
    debug_assert_eq!(treated.len(), outcomes.len());
    sort_order(outcomes)
        .iter()
        .enumerate()
        .filter(|(_, &i)| treated[i])
        .map(|(r, _)| scores[r])
        .sum()
}

/// Rank-score statistic of treated units.
pub fn statistic(treated: &[bool], outcomes: &[f64], transform: &RankTransform) -> Result<f64> {
    if treated.len() != outcomes.len() {
        return Err(invalid("assignment and outcome lengths differ"));
    }
    let scores = transform.scores(outcomes.len())?;
    Ok(statistic_with_scores(treated, outcomes, &scores))
}

/// Picks the transform of each stratum: one shared transform or one per stratum.
pub(crate) fn per_stratum(
    transforms: &[RankTransform],
    strata: usize,
) -> Result<Vec<&RankTransform>> {
    match transforms.len() {
        1 => Ok(vec![&transforms[0]; strata]),
        len if len == strata => Ok(transforms.iter().collect()),
        len => Err(invalid(format!(
            "{len} transforms supplied for {strata} strata"
        ))),
    }
}

/// Score tables `phi_s(1..=n_s)` of each stratum.
pub fn stratum_scores(transforms: &[RankTransform], sizes: &[StratumSize]) -> Result<Vec<Vec<f64>>> {
    per_stratum(transforms, sizes.len())?
        .into_iter()
        .zip(sizes)
        .map(|(t, s)| t.scores(s.units))
        .collect()
}

/// Sum over strata of within-stratum rank-score statistics.
pub fn stratified_statistic(data: &ExperimentData, transforms: &[RankTransform]) -> Result<f64> {
    stratified_statistic_of(data, data.outcomes(), transforms)
}

/// Stratified statistic of `data`'s assignment evaluated at other outcomes.
pub(crate) fn stratified_statistic_of(
    data: &ExperimentData,
    outcomes: &[f64],
    transforms: &[RankTransform],
) -> Result<f64> {
    let groups = data.groups();
    let scores = stratum_scores(transforms, &data.stratum_sizes())?;
    Ok(groups
        .iter()
        .zip(&scores)
        .map(|(members, sc)| {
            let z: Vec<bool> = members.iter().map(|&i| data.treated()[i]).collect();
            let y: Vec<f64> = members.iter().map(|&i| outcomes[i]).collect();
            statistic_with_scores(&z, &y, sc)
        })
        .sum())
}

/// Randomization design a null distribution refers to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Design {
    Cre { n: usize, n_t: usize },
    Scre { strata: Vec<StratumSize> },
    Sensitivity {
        gamma: f64,
        structure: SensitivityStructure,
        strata: Vec<StratumSize>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensitivityStructure {
    Pairs,
    GaussianApprox,
}

impl Design {
    /// Completely randomized when unstratified, stratified otherwise.
    pub fn of(data: &ExperimentData) -> Self {
        match data.strata() {
            None => Design::Cre {
                n: data.n(),
                n_t: data.n_treated(),
            },
            Some(_) => Design::Scre {
                strata: data.stratum_sizes(),
            },
        }
    }

    pub fn strata(&self) -> Vec<StratumSize> {
        match self {
            Design::Cre { n, n_t } => vec![StratumSize {
                units: *n,
                treated: *n_t,
            }],
            Design::Scre { strata } | Design::Sensitivity { strata, .. } => strata.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    ExactEnumeration,
    MonteCarlo { draws: usize, seed: u64 },
    /// Asymptotic normal approximation; not finite-sample exact.
    GaussianApproximation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Repr {
    /// `tail[i] = P(t >= support[i])`.
    Discrete {
        support: Vec<f64>,
        tail: Vec<f64>,
        tolerance: f64,
    },
    /// `P(t >= x) = 1 - Phi((x - continuity - mean) / sd)`.
    Gaussian {
        mean: f64,
        sd: f64,
        continuity: f64,
    },
}

/// Survival function `G(x) = P(t >= x)` of a rank-score statistic under a design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullDistribution {
    repr: Repr,
    pub provenance: Provenance,
    pub design: Design,
    pub transforms: Vec<RankTransform>,
}

impl NullDistribution {
    /// Builds a discrete distribution from weighted atoms (weights need not be normalized).
    pub(crate) fn from_atoms(
        mut atoms: Vec<(f64, f64)>,
        tolerance: f64,
        provenance: Provenance,
        design: Design,
        transforms: Vec<RankTransform>,
    ) -> Self {
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let atoms = merge_atoms(atoms, tolerance);
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        let support: Vec<f64> = atoms.iter().map(|a| a.0).collect();
        let mut tail = vec![0.0; atoms.len()];
        let mut acc = 0.0;
        for (i, (_, w)) in atoms.iter().enumerate().rev() {
            acc += w;
            tail[i] = (acc / total).min(1.0);
        }
        if let Some(first) = tail.first_mut() {
            *first = 1.0;
        }
        NullDistribution {
            repr: Repr::Discrete {
                support,
                tail,
                tolerance,
            },
            provenance,
            design,
            transforms,
        }
    }

    pub(crate) fn gaussian(
        mean: f64,
        variance: f64,
        continuity: f64,
        design: Design,
        transforms: Vec<RankTransform>,
    ) -> Self {
        NullDistribution {
            repr: Repr::Gaussian {
                mean,
                sd: variance.max(0.0).sqrt(),
                continuity,
            },
            provenance: Provenance::GaussianApproximation,
            design,
            transforms,
        }
    }

    /// `P(t >= x)`.
    pub fn survival(&self, x: f64) -> f64 {
        if x == f64::NEG_INFINITY {
            return 1.0;
        }
        match &self.repr {
            Repr::Discrete {
                support,
                tail,
                tolerance,
            } => {
                let i = support.partition_point(|&s| s < x - tolerance);
                tail.get(i).copied().unwrap_or(0.0)
            }
            Repr::Gaussian {
                mean,
                sd,
                continuity,
            } => {
                if *sd == 0.0 {
                    return if x <= *mean { 1.0 } else { 0.0 };
                }
                let normal = Normal::new(0.0, 1.0).expect("standard normal");
                normal.sf((x - continuity - mean) / sd)
            }
        }
    }

    /// Sorted support of a discrete distribution; empty for the Gaussian form.
    pub fn support(&self) -> &[f64] {
        match &self.repr {
            Repr::Discrete { support, .. } => support,
            Repr::Gaussian { .. } => &[],
        }
    }

    /// `P(t >= support[i])` for each support point.
    pub fn tail_weights(&self) -> &[f64] {
        match &self.repr {
            Repr::Discrete { tail, .. } => tail,
            Repr::Gaussian { .. } => &[],
        }
    }

    pub fn is_exact(&self) -> bool {
        self.provenance == Provenance::ExactEnumeration
    }

    /// Mean and standard deviation of the Gaussian form.
    pub fn gaussian_parameters(&self) -> Option<(f64, f64)> {
        match &self.repr {
            Repr::Gaussian { mean, sd, .. } => Some((*mean, *sd)),
            Repr::Discrete { .. } => None,
        }
    }

    /// Errors unless this distribution was built for `design` and `transforms`.
    pub fn check_matches(&self, design: &Design, transforms: &[RankTransform]) -> Result<()> {
        let strata = design.strata();
        let own = self.design.strata();
        if own != strata {
            return Err(Error::DesignMismatch(format!(
                "distribution built for {:?}, data has {:?}",
                self.design, design
            )));
        }
        let mine = per_stratum(&self.transforms, own.len())?;
        let theirs = per_stratum(transforms, strata.len())?;
        if mine != theirs {
            return Err(Error::DesignMismatch("rank transforms differ".into()));
        }
        Ok(())
    }
}

/// Combines atoms whose values lie within `tolerance` of the first of a run.
fn merge_atoms(sorted: Vec<(f64, f64)>, tolerance: f64) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(sorted.len());
    for (v, w) in sorted {
        match out.last_mut() {
            Some(last) if v - last.0 <= tolerance => last.1 += w,
            _ => out.push((v, w)),
        }
    }
    out
}

/// Tolerance for identifying equal sums: zero for integer scores.
pub(crate) fn score_tolerance(tables: &[Vec<f64>]) -> f64 {
    let integral = tables
        .iter()
        .flatten()
        .all(|v| v.fract() == 0.0 && v.abs() < 2f64.powi(50));
    if integral {
        0.0
    } else {
        let scale: f64 = tables
            .iter()
            .map(|t| t.iter().fold(0.0f64, |m, v| m.max(v.abs())) * t.len() as f64)
            .sum();
        1e-9 * scale.max(1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NullMode {
    Exact,
    MonteCarlo,
    /// Exact when within the enumeration cap, Monte Carlo otherwise.
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NullOptions {
    pub mode: NullMode,
    pub mc: MonteCarloConfig,
    pub exact_cap: u64,
}

impl Default for NullOptions {
    fn default() -> Self {
        NullOptions {
            mode: NullMode::Auto,
            mc: MonteCarloConfig::default(),
            exact_cap: DEFAULT_EXACT_CAP,
        }
    }
}

impl NullOptions {
    pub fn exact() -> Self {
        NullOptions {
            mode: NullMode::Exact,
            ..Default::default()
        }
    }

    pub fn monte_carlo(mc: MonteCarloConfig) -> Self {
        NullOptions {
            mode: NullMode::MonteCarlo,
            mc,
            ..Default::default()
        }
    }
}

/// Randomization distribution of the (stratified) statistic under `design`.
pub fn null_distribution(
    design: &Design,
    transforms: &[RankTransform],
    options: &NullOptions,
) -> Result<NullDistribution> {
    let strata = match design {
        Design::Cre { n, n_t } => {
            if *n_t > *n {
                return Err(invalid("treated count exceeds sample size"));
            }
            vec![StratumSize {
                units: *n,
                treated: *n_t,
            }]
        }
        Design::Scre { strata } => strata.clone(),
        Design::Sensitivity { .. } => {
            return Err(invalid(
                "sensitivity distributions are built by the worst-case tail routine",
            ))
        }
    };
    let tables = stratum_scores(transforms, &strata)?;
    let tolerance = score_tolerance(&tables);
    let within_cap = strata
        .iter()
        .all(|s| ln_choose(s.units as u64, s.treated as u64) <= (options.exact_cap as f64).ln() + 1e-9);
    let exact = match options.mode {
        NullMode::Exact => {
            if let Some(s) = strata
                .iter()
                .find(|s| ln_choose(s.units as u64, s.treated as u64) > (options.exact_cap as f64).ln() + 1e-9)
            {
                return Err(Error::ExactCapExceeded {
                    assignments: ln_choose(s.units as u64, s.treated as u64).exp(),
                    cap: options.exact_cap,
                });
            }
            true
        }
        NullMode::MonteCarlo => false,
        NullMode::Auto => within_cap,
    };
    let transforms = transforms.to_vec();
    if exact {
        let mut atoms: Vec<(f64, f64)> = vec![(0.0, 1.0)];
        for (s, table) in strata.iter().zip(&tables) {
            let stratum = subset_sum_distribution(table, s.treated, tolerance);
            atoms = convolve(&atoms, &stratum, tolerance);
            if atoms.len() as u64 > options.exact_cap {
                if options.mode == NullMode::Exact {
                    return Err(Error::ExactCapExceeded {
                        assignments: atoms.len() as f64,
                        cap: options.exact_cap,
                    });
                }
                return monte_carlo(design, &strata, &tables, tolerance, transforms, options.mc);
            }
        }
        Ok(NullDistribution::from_atoms(
            atoms,
            tolerance,
            Provenance::ExactEnumeration,
            design.clone(),
            transforms,
        ))
    } else {
        monte_carlo(design, &strata, &tables, tolerance, transforms, options.mc)
    }
}

/// Probability mass of the sum of a uniformly random `k`-subset of `scores`.
fn subset_sum_distribution(scores: &[f64], k: usize, tolerance: f64) -> Vec<(f64, f64)> {
    // layers[j] holds the sums of j chosen scores with their subset counts
    let mut layers: Vec<Vec<(f64, f64)>> = vec![Vec::new(); k + 1];
    layers[0].push((0.0, 1.0));
    for (i, &score) in scores.iter().enumerate() {
        let hi = k.min(i + 1);
        for j in (1..=hi).rev() {
            if layers[j - 1].is_empty() {
                continue;
            }
            let shifted: Vec<(f64, f64)> = layers[j - 1].iter().map(|&(v, w)| (v + score, w)).collect();
            let mut merged = std::mem::take(&mut layers[j]);
            merged.extend(shifted);
            merged.sort_by(|a, b| a.0.total_cmp(&b.0));
            layers[j] = merge_atoms(merged, tolerance);
        }
    }
    let total: f64 = layers[k].iter().map(|a| a.1).sum();
    layers[k].iter().map(|&(v, w)| (v, w / total)).collect()
}

fn convolve(a: &[(f64, f64)], b: &[(f64, f64)], tolerance: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for &(va, wa) in a {
        for &(vb, wb) in b {
            out.push((va + vb, wa * wb));
        }
    }
    out.sort_by(|x, y| x.0.total_cmp(&y.0));
    merge_atoms(out, tolerance)
}

fn monte_carlo(
    design: &Design,
    strata: &[StratumSize],
    tables: &[Vec<f64>],
    tolerance: f64,
    transforms: Vec<RankTransform>,
    mc: MonteCarloConfig,
) -> Result<NullDistribution> {
    if mc.draws == 0 {
        return Err(invalid("Monte Carlo draw count must be positive"));
    }
    let domain = if strata.len() == 1 {
        Domain::NullCre
    } else {
        Domain::NullStratified
    };
    let draws: Vec<f64> = (0..mc.draws as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng::substream(mc.seed, domain, r);
            strata
                .iter()
                .zip(tables)
                .map(|(s, table)| {
                    index::sample(&mut rng, s.units, s.treated)
                        .iter()
                        .map(|i| table[i])
                        .sum::<f64>()
                })
                .sum()
        })
        .collect();
    Ok(NullDistribution::from_atoms(
        draws.into_iter().map(|v| (v, 1.0)).collect(),
        tolerance,
        Provenance::MonteCarlo {
            draws: mc.draws,
            seed: mc.seed,
        },
        design.clone(),
        transforms,
    ))
}

/// Free-function form of [`NullDistribution::survival`].
pub fn survival(dist: &NullDistribution, x: f64) -> f64 {
    dist.survival(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    const W: RankTransform = RankTransform::Wilcoxon;

    fn exact_cre(n: usize, n_t: usize, t: &RankTransform) -> NullDistribution {
        null_distribution(&Design::Cre { n, n_t }, std::slice::from_ref(t), &NullOptions::exact()).unwrap()
    }

    #[test]
    fn rank_examples() {
        assert_eq!(ranks(&[3.0, 1.0, 2.0]), vec![3, 1, 2]);
        assert_eq!(ranks(&[1.0, 1.0]), vec![1, 2]);
        assert_eq!(ranks(&[f64::NEG_INFINITY, 0.0, f64::NEG_INFINITY]), vec![1, 3, 2]);
    }

    #[test]
    fn statistic_examples() {
        assert_eq!(statistic(&[true, false], &[2.0, 1.0], &W).unwrap(), 2.0);
        assert_eq!(statistic(&[true, false, false], &[5.0, 1.0, 2.0], &W).unwrap(), 3.0);
        let st = RankTransform::Stephenson { s: 2 };
        assert_eq!(statistic(&[true, true, false], &[1.0, 2.0, 3.0], &st).unwrap(), 1.0);
    }

    #[test]
    fn stratified_statistic_examples() {
        let d = ExperimentData::stratified(
            vec![true, false, true, false],
            vec![2.0, 1.0, 1.0, 2.0],
            vec!["a".into(), "a".into(), "b".into(), "b".into()],
        )
        .unwrap();
        assert_eq!(stratified_statistic(&d, &[W]).unwrap(), 3.0);
        let pooled = ExperimentData::new(vec![true, false, false], vec![5.0, 1.0, 2.0]).unwrap();
        let one = ExperimentData::stratified(
            pooled.treated().to_vec(),
            pooled.outcomes().to_vec(),
            vec!["x".into(); 3],
        )
        .unwrap();
        assert_eq!(
            stratified_statistic(&one, &[W]).unwrap(),
            statistic(pooled.treated(), pooled.outcomes(), &W).unwrap()
        );
    }

    #[test]
    fn exact_cre_examples() {
        let g = exact_cre(3, 1, &W);
        assert_eq!(g.support(), &[1.0, 2.0, 3.0]);
        assert!((g.survival(2.0) - 2.0 / 3.0).abs() < 1e-15);
        assert!((g.survival(3.0) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(g.survival(f64::NEG_INFINITY), 1.0);
        assert_eq!(g.survival(3.5), 0.0);
        assert_eq!(exact_cre(2, 1, &W).survival(2.0), 0.5);
    }

    /// Brute-force enumeration of all k-subsets.
    fn enumerate_subsets(scores: &[f64], k: usize) -> Vec<f64> {
        let n = scores.len();
        (0u32..1 << n)
            .filter(|m| m.count_ones() as usize == k)
            .map(|m| (0..n).filter(|i| m >> i & 1 == 1).map(|i| scores[i]).sum())
            .collect()
    }

    #[test]
    fn exact_matches_enumeration() {
        for t in [W, RankTransform::Stephenson { s: 3 }] {
            for n in 2..=9 {
                for k in 1..n {
                    let g = exact_cre(n, k, &t);
                    let sums = enumerate_subsets(&t.scores(n).unwrap(), k);
                    for x in g.support().iter().copied().chain([0.5, 100.0]) {
                        let expect = sums.iter().filter(|&&s| s >= x).count() as f64 / sums.len() as f64;
                        assert!((g.survival(x) - expect).abs() < 1e-12, "n={n} k={k} x={x}");
                    }
                }
            }
        }
    }

    #[test]
    fn non_integer_scores_merge_equal_sums() {
        let t = RankTransform::Table {
            scores: vec![0.1, 0.2, 0.3, 0.4],
        };
        let g = exact_cre(4, 2, &t);
        // 0.1+0.4 and 0.2+0.3 coincide
        assert_eq!(g.support().len(), 5);
        assert!((g.survival(0.5) - 4.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn scre_exact_is_convolution() {
        let design = Design::Scre {
            strata: vec![StratumSize { units: 2, treated: 1 }, StratumSize { units: 3, treated: 1 }],
        };
        let g = null_distribution(&design, &[W], &NullOptions::exact()).unwrap();
        // sums of {1,2} + {1,2,3}
        let mut sums = vec![];
        for a in [1.0, 2.0] {
            for b in [1.0, 2.0, 3.0] {
                sums.push(a + b);
            }
        }
        for x in 1..=6 {
            let expect = sums.iter().filter(|&&s| s >= x as f64).count() as f64 / 6.0;
            assert!((g.survival(x as f64) - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn monte_carlo_close_to_exact() {
        let exact = exact_cre(12, 5, &W);
        let mc = null_distribution(
            &Design::Cre { n: 12, n_t: 5 },
            &[W],
            &NullOptions::monte_carlo(MonteCarloConfig::new(20_000, 3).unwrap()),
        )
        .unwrap();
        let worst = exact
            .support()
            .iter()
            .map(|&x| (exact.survival(x) - mc.survival(x)).abs())
            .fold(0.0, f64::max);
        assert!(worst < 0.02, "sup distance {worst}");
    }

    #[test]
    fn monte_carlo_is_deterministic() {
        let opts = NullOptions::monte_carlo(MonteCarloConfig::new(2_000, 9).unwrap());
        let d = Design::Cre { n: 30, n_t: 12 };
        assert_eq!(
            null_distribution(&d, &[W], &opts).unwrap(),
            null_distribution(&d, &[W], &opts).unwrap()
        );
    }

    #[test]
    fn exact_cap_is_enforced() {
        let err = null_distribution(&Design::Cre { n: 40, n_t: 20 }, &[W], &NullOptions::exact()).unwrap_err();
        assert!(matches!(err, Error::ExactCapExceeded { .. }));
        let auto = null_distribution(
            &Design::Cre { n: 40, n_t: 20 },
            &[W],
            &NullOptions {
                mc: MonteCarloConfig::new(500, 1).unwrap(),
                ..Default::default()
            },
        )
        .unwrap();
        assert!(matches!(auto.provenance, Provenance::MonteCarlo { .. }));
    }

    #[test]
    fn json_round_trip() {
        let g = exact_cre(5, 2, &W);
        let json = serde_json::to_string(&g).unwrap();
        let back: NullDistribution = serde_json::from_str(&json).unwrap();
        assert_eq!(back, g);
    }
}
