//! Hypergeometric and binomial tails, multivariate sampling, union-event
//! correction terms, and the rules that pick shifted quantile indices.

use rand::Rng;
use rand_distr::{Binomial as BinomialSampler, Distribution, Hypergeometric as HgSampler};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{invalid, Result};
use crate::model::MonteCarloConfig;
use crate::rng::{self, Domain};

/// `ln C(n, k)`; `-inf` when `k > n`.
pub fn ln_choose(n: u64, k: u64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    if k == 0 || k == n {
        return 0.0;
    }
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

fn ln_factorial(n: u64) -> f64 {
    if n < 2 {
        0.0
    } else {
        ln_gamma(n as f64 + 1.0)
    }
}

/// Count of successes in `draws` draws without replacement from `population`
/// items of which `successes` are marked.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Hypergeometric {
    population: u64,
    successes: u64,
    draws: u64,
}

impl Hypergeometric {
    pub fn new(population: u64, successes: u64, draws: u64) -> Result<Self> {
        if successes > population || draws > population {
            return Err(invalid(format!(
                "hypergeometric parameters out of range: N={population}, K={successes}, n={draws}"
            )));
        }
        Ok(Hypergeometric {
            population,
            successes,
            draws,
        })
    }

    /// Smallest and largest attainable counts.
    pub fn support(&self) -> (u64, u64) {
        let lo = (self.draws + self.successes).saturating_sub(self.population);
        (lo, self.draws.min(self.successes))
    }

    /// Probabilities of `lo..=hi`, built by ratio recurrence from the mode and
    /// normalized to sum to one.
    pub fn pmf_table(&self) -> (u64, Vec<f64>) {
        let (lo, hi) = self.support();
        let (big_n, k, n) = (self.population as f64, self.successes as f64, self.draws as f64);
        // p(x + 1) / p(x)
        let ratio = |x: f64| (k - x) * (n - x) / ((x + 1.0) * (big_n - k - n + x + 1.0));
        let mode = (((n + 1.0) * (k + 1.0) / (big_n + 2.0)).floor() as u64).clamp(lo, hi);
        unit_mass_table(lo, hi, mode, ratio)
    }

    pub fn pmf(&self, x: u64) -> f64 {
        let (lo, table) = self.pmf_table();
        x.checked_sub(lo).and_then(|i| table.get(i as usize)).copied().unwrap_or(0.0)
    }

    pub fn ln_pmf(&self, x: u64) -> f64 {
        self.pmf(x).ln()
    }

    /// `P(X <= x)`.
    pub fn cdf(&self, x: u64) -> f64 {
        let (lo, table) = self.pmf_table();
        if x < lo {
            return 0.0;
        }
        let upto = ((x - lo) as usize + 1).min(table.len());
        if upto == table.len() {
            return 1.0;
        }
        table[..upto].iter().sum::<f64>().min(1.0)
    }

    /// `P(X > x)`, summed over the upper tail.
    pub fn sf(&self, x: u64) -> f64 {
        let (lo, table) = self.pmf_table();
        upper_tail(lo, &table, x)
    }

    /// `P(X > x)` for a signed threshold.
    pub fn sf_signed(&self, x: i64) -> f64 {
        if x < 0 {
            1.0
        } else {
            self.sf(x as u64)
        }
    }

    /// `min { x : P(X <= x) >= q }`.
    pub fn quantile(&self, q: f64) -> u64 {
        let (lo, table) = self.pmf_table();
        let mut acc = 0.0;
        for (i, p) in table.iter().enumerate().take(table.len() - 1) {
            acc += p;
            if acc >= q {
                return lo + i as u64;
            }
        }
        lo + table.len() as u64 - 1
    }

    /// `min { x : P(X > x) <= tail }`, the `1 - tail` quantile computed from the upper tail.
    pub fn upper_quantile(&self, tail: f64) -> u64 {
        let (lo, table) = self.pmf_table();
        upper_quantile_of(lo, &table, tail)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        if self.draws == 0 || self.successes == 0 {
            return 0;
        }
        if self.successes == self.population {
            return self.draws;
        }
        HgSampler::new(self.population, self.successes, self.draws)
            .expect("validated parameters")
            .sample(rng)
    }
}

/// Binomial `Bin(trials, p)` probabilities and tails.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Binomial {
    trials: u64,
    p: f64,
}

impl Binomial {
    pub fn new(trials: u64, p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(invalid(format!("binomial probability {p} outside [0, 1]")));
        }
        Ok(Binomial { trials, p })
    }

    /// Probabilities of `0..=trials`, normalized to sum to one.
    pub fn pmf_table(&self) -> Vec<f64> {
        let n = self.trials;
        if self.p == 0.0 || self.p == 1.0 {
            let mut t = vec![0.0; n as usize + 1];
            t[if self.p == 0.0 { 0 } else { n as usize }] = 1.0;
            return t;
        }
        let odds = self.p / (1.0 - self.p);
        let ratio = |x: f64| (n as f64 - x) / (x + 1.0) * odds;
        let mode = (((n + 1) as f64 * self.p).floor() as u64).min(n);
        unit_mass_table(0, n, mode, ratio).1
    }

    pub fn pmf(&self, x: u64) -> f64 {
        self.pmf_table().get(x as usize).copied().unwrap_or(0.0)
    }

    /// `P(X > x)`.
    pub fn sf(&self, x: u64) -> f64 {
        upper_tail(0, &self.pmf_table(), x)
    }

    /// `min { x : P(X > x) <= tail }`.
    pub fn upper_quantile(&self, tail: f64) -> u64 {
        upper_quantile_of(0, &self.pmf_table(), tail)
    }
}

/// Relative weights from `ratio(x) = p(x + 1) / p(x)` anchored at `mode`, normalized.
fn unit_mass_table(lo: u64, hi: u64, mode: u64, ratio: impl Fn(f64) -> f64) -> (u64, Vec<f64>) {
    let len = (hi - lo) as usize + 1;
    let mut w = vec![0.0; len];
    let m = (mode - lo) as usize;
    w[m] = 1.0;
    for i in m + 1..len {
        w[i] = w[i - 1] * ratio((lo as usize + i - 1) as f64);
    }
    for i in (0..m).rev() {
        w[i] = w[i + 1] / ratio((lo as usize + i) as f64);
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    (lo, w)
}

/// `P(X > x)` from a table starting at `lo`.
fn upper_tail(lo: u64, table: &[f64], x: u64) -> f64 {
    if x < lo {
        return 1.0;
    }
    let from = (x - lo) as usize + 1;
    if from >= table.len() {
        return 0.0;
    }
    table[from..].iter().rev().sum::<f64>().min(1.0)
}

/// `min { x : P(X > x) <= tail }` from a table starting at `lo`.
fn upper_quantile_of(lo: u64, table: &[f64], tail: f64) -> u64 {
    let mut acc = 0.0;
    let mut i = table.len() - 1;
    // acc = P(X > lo + i) as i decreases
    while i > 0 {
        let next = acc + table[i];
        if next > tail {
            break;
        }
        acc = next;
        i -= 1;
    }
    lo + i as u64
}

/// Marginal law of the number of sampled units among those above a quantile index.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Marginal {
    Hyper(Hypergeometric),
    Binom(Binomial),
}

impl Marginal {
    fn sf(&self, x: u64) -> f64 {
        match self {
            Marginal::Hyper(h) => h.sf(x),
            Marginal::Binom(b) => b.sf(x),
        }
    }

    fn upper_quantile(&self, tail: f64) -> u64 {
        match self {
            Marginal::Hyper(h) => h.upper_quantile(tail),
            Marginal::Binom(b) => b.upper_quantile(tail),
        }
    }
}

/// How sampled units relate to the ranked units whose quantiles are targeted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SamplingModel {
    /// `sample` units drawn without replacement from `population` ranked units;
    /// quantile indices `ks` refer to the population.
    WithoutReplacement {
        population: u64,
        sample: u64,
        ks: Vec<u64>,
    },
    /// `sample` i.i.d. draws; quantile levels `betas`.
    Iid { sample: u64, betas: Vec<f64> },
}

impl SamplingModel {
    pub fn sample_size(&self) -> u64 {
        match self {
            SamplingModel::WithoutReplacement { sample, .. } | SamplingModel::Iid { sample, .. } => *sample,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            SamplingModel::WithoutReplacement { ks, .. } => ks.len(),
            SamplingModel::Iid { betas, .. } => betas.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn validate(&self) -> Result<()> {
        match self {
            SamplingModel::WithoutReplacement { population, sample, ks } => {
                if sample > population {
                    return Err(invalid("sample larger than population"));
                }
                if ks.is_empty() || ks.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(invalid("quantile indices must be nonempty and strictly increasing"));
                }
                if ks.last().is_some_and(|&k| k > *population) {
                    return Err(invalid("quantile index exceeds population size"));
                }
            }
            SamplingModel::Iid { betas, .. } => {
                if betas.is_empty() || betas.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(invalid("quantile levels must be nonempty and strictly increasing"));
                }
                if betas.iter().any(|b| !(0.0..=1.0).contains(b)) {
                    return Err(invalid("quantile levels must lie in [0, 1]"));
                }
            }
        }
        Ok(())
    }

    fn marginal(&self, j: usize) -> Marginal {
        match self {
            SamplingModel::WithoutReplacement { population, sample, ks } => Marginal::Hyper(
                Hypergeometric::new(*population, population - ks[j], *sample).expect("validated"),
            ),
            SamplingModel::Iid { sample, betas } => {
                Marginal::Binom(Binomial::new(*sample, 1.0 - betas[j]).expect("validated"))
            }
        }
    }

    /// Cell sizes (or probabilities) of colors `0..=J`.
    fn draw_upper_counts<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [u32]) {
        let j_count = self.len();
        match self {
            SamplingModel::WithoutReplacement { population, sample, ks } => {
                let mut remaining_pop = *population;
                let mut remaining = *sample;
                let mut cells = vec![0u64; j_count + 1];
                for color in 0..=j_count {
                    let size = if color == 0 {
                        ks[0]
                    } else if color == j_count {
                        population - ks[j_count - 1]
                    } else {
                        ks[color] - ks[color - 1]
                    };
                    let drawn = if color == j_count {
                        remaining
                    } else {
                        Hypergeometric::new(remaining_pop, size, remaining)
                            .expect("valid conditional")
                            .sample(rng)
                    };
                    cells[color] = drawn;
                    remaining -= drawn;
                    remaining_pop -= size;
                }
                fill_upper_sums(&cells, out);
            }
            SamplingModel::Iid { sample, betas } => {
                let mut remaining = *sample;
                let mut remaining_p = 1.0f64;
                let mut cells = vec![0u64; j_count + 1];
                for color in 0..=j_count {
                    let p = if color == 0 {
                        betas[0]
                    } else if color == j_count {
                        1.0 - betas[j_count - 1]
                    } else {
                        betas[color] - betas[color - 1]
                    };
                    let drawn = if color == j_count || remaining == 0 {
                        if color == j_count {
                            remaining
                        } else {
                            0
                        }
                    } else {
                        let q = if remaining_p > 0.0 { (p / remaining_p).clamp(0.0, 1.0) } else { 1.0 };
                        BinomialSampler::new(remaining, q).expect("valid probability").sample(rng)
                    };
                    cells[color] = drawn;
                    remaining -= drawn;
                    remaining_p -= p;
                }
                fill_upper_sums(&cells, out);
            }
        }
    }
}

/// `out[j] = cells[j + 1] + ... + cells[J]`: sampled units above the `j`-th index.
fn fill_upper_sums(cells: &[u64], out: &mut [u32]) {
    let mut acc = 0u64;
    for j in (0..out.len()).rev() {
        acc += cells[j + 1];
        out[j] = acc as u32;
    }
}

/// Monte Carlo draws of the upper counts, reusable across many `k'` vectors.
#[derive(Debug, Clone)]
pub struct UpperCountDraws {
    j: usize,
    counts: Vec<u32>,
    sample: u64,
}

impl UpperCountDraws {
    pub fn draw(model: &SamplingModel, mc: MonteCarloConfig) -> Result<Self> {
        model.validate()?;
        if mc.draws == 0 {
            return Err(invalid("Monte Carlo draw count must be positive"));
        }
        let j = model.len();
        let domain = match model {
            SamplingModel::WithoutReplacement { .. } => Domain::Hypergeometric,
            SamplingModel::Iid { .. } => Domain::Multinomial,
        };
        let mut counts = vec![0u32; mc.draws * j];
        counts.par_chunks_mut(j).enumerate().for_each(|(r, out)| {
            let mut rng = rng::substream(mc.seed, domain, r as u64);
            model.draw_upper_counts(&mut rng, out);
        });
        Ok(UpperCountDraws {
            j,
            counts,
            sample: model.sample_size(),
        })
    }

    pub fn draws(&self) -> usize {
        self.counts.len() / self.j
    }

    /// Fraction of draws in which some upper count exceeds `sample - k'_j`.
    pub fn union_probability(&self, k_primes: &[usize]) -> f64 {
        assert_eq!(k_primes.len(), self.j);
        let thresholds: Vec<i64> = k_primes.iter().map(|&k| self.sample as i64 - k as i64).collect();
        let hits = self
            .counts
            .par_chunks(self.j)
            .filter(|row| row.iter().zip(&thresholds).any(|(&s, &t)| s as i64 > t))
            .count();
        hits as f64 / self.draws() as f64
    }
}

fn check_k_primes(k_primes: &[usize], model: &SamplingModel) -> Result<()> {
    if k_primes.len() != model.len() {
        return Err(invalid("one shifted index is needed per target quantile"));
    }
    if k_primes.iter().any(|&k| k as u64 > model.sample_size()) {
        return Err(invalid("shifted index exceeds sample size"));
    }
    Ok(())
}

fn union_correction(k_primes: &[usize], model: &SamplingModel, mc: MonteCarloConfig) -> Result<f64> {
    model.validate()?;
    check_k_primes(k_primes, model)?;
    if k_primes.len() == 1 {
        let x = model.sample_size() as i64 - k_primes[0] as i64;
        return Ok(if x < 0 { 1.0 } else { model.marginal(0).sf(x as u64) });
    }
    Ok(UpperCountDraws::draw(model, mc)?.union_probability(k_primes))
}

/// Probability that, for some `j`, more than `n - k'_j` of `n` units sampled
/// without replacement from `population` lie above the `k_j`-th ranked unit.
///
/// Exact for one quantile, Monte Carlo otherwise.
pub fn delta_h(k_primes: &[usize], population: u64, n: u64, ks: &[u64], mc: MonteCarloConfig) -> Result<f64> {
    union_correction(
        k_primes,
        &SamplingModel::WithoutReplacement {
            population,
            sample: n,
            ks: ks.to_vec(),
        },
        mc,
    )
}

/// I.i.d. analogue of [`delta_h`] for quantile levels `betas`.
pub fn delta_m(k_primes: &[usize], n: u64, betas: &[f64], mc: MonteCarloConfig) -> Result<f64> {
    union_correction(
        k_primes,
        &SamplingModel::Iid {
            sample: n,
            betas: betas.to_vec(),
        },
        mc,
    )
}

/// Shifted index `k'` for a single quantile and the resulting correction.
pub fn choose_kprime_single(n: u64, n_t: u64, k: u64, alpha: f64, gamma: f64) -> Result<(usize, f64)> {
    check_budget(alpha, gamma)?;
    if k > n || n_t > n {
        return Err(invalid("require k <= n and n_t <= n"));
    }
    let h = Hypergeometric::new(n, n - k, n_t)?;
    let x = h.upper_quantile(gamma * alpha);
    Ok(((n_t - x) as usize, h.sf(x)))
}

fn check_budget(alpha: f64, gamma: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid(format!("alpha = {alpha} outside (0, 1)")));
    }
    if !(0.0..1.0).contains(&gamma) {
        return Err(invalid(format!("gamma = {gamma} outside [0, 1)")));
    }
    Ok(())
}

/// How the reported correction was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrectionMethod {
    Exact,
    MonteCarlo,
    Bonferroni,
}

/// Shifted indices with the correction they cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionSpec {
    pub k_primes: Vec<usize>,
    pub correction: f64,
    pub gamma: f64,
    pub kappa: f64,
    pub method: CorrectionMethod,
}

/// Candidate `kappa` values: `1/J` and every multiple of 0.001 above it.
fn kappa_grid(j: usize) -> Vec<f64> {
    let floor = 1.0 / j as f64;
    let mut grid = vec![floor];
    grid.extend((1..=1000).map(|i| i as f64 / 1000.0).filter(|&v| v > floor + 1e-12));
    grid
}

/// Picks shifted indices `k'_j = n - q_j(1 - kappa * gamma * alpha)` with the
/// largest grid `kappa` whose union correction stays within `gamma * alpha`.
///
/// For several quantiles the correction is the smaller of a Monte Carlo
/// estimate on common draws and the Bonferroni sum of exact marginal tails.
pub fn choose_kprime_model(model: &SamplingModel, alpha: f64, gamma: f64, mc: MonteCarloConfig) -> Result<CorrectionSpec> {
    check_budget(alpha, gamma)?;
    model.validate()?;
    let j = model.len();
    let n = model.sample_size();
    let marginals: Vec<Marginal> = (0..j).map(|i| model.marginal(i)).collect();
    let plan = |kappa: f64| -> (Vec<usize>, f64) {
        let tail = kappa * gamma * alpha;
        let mut bonferroni = 0.0;
        let kp = marginals
            .iter()
            .map(|m| {
                let x = m.upper_quantile(tail);
                bonferroni += m.sf(x);
                (n - x) as usize
            })
            .collect();
        (kp, bonferroni)
    };
    if j == 1 {
        let (kp, corr) = plan(1.0);
        return Ok(CorrectionSpec {
            k_primes: kp,
            correction: corr,
            gamma,
            kappa: 1.0,
            method: CorrectionMethod::Exact,
        });
    }
    let draws = UpperCountDraws::draw(model, mc)?;
    let evaluate = |kappa: f64| -> (Vec<usize>, f64, CorrectionMethod) {
        let (kp, bonf) = plan(kappa);
        let mc_est = draws.union_probability(&kp);
        if mc_est <= bonf {
            (kp, mc_est, CorrectionMethod::MonteCarlo)
        } else {
            (kp, bonf, CorrectionMethod::Bonferroni)
        }
    };
    let grid = kappa_grid(j);
    let budget = gamma * alpha;
    // grid[lo] is feasible by the union bound; find the last feasible index
    let (mut lo, mut hi) = (0usize, grid.len());
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if evaluate(grid[mid]).1 <= budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (kp, corr, method) = evaluate(grid[lo]);
    Ok(CorrectionSpec {
        k_primes: kp,
        correction: corr,
        gamma,
        kappa: grid[lo],
        method,
    })
}

/// [`choose_kprime_model`] for sample quantiles of a completely randomized experiment.
pub fn choose_kprime_multi(
    n: u64,
    n_t: u64,
    ks: &[u64],
    alpha: f64,
    gamma: f64,
    mc: MonteCarloConfig,
) -> Result<CorrectionSpec> {
    choose_kprime_model(
        &SamplingModel::WithoutReplacement {
            population: n,
            sample: n_t,
            ks: ks.to_vec(),
        },
        alpha,
        gamma,
        mc,
    )
}

/// Population index of level `beta`: `ceil(N * beta)`.
pub fn level_index(population: u64, beta: f64) -> u64 {
    ((population as f64 * beta) - 1e-9).ceil().max(0.0) as u64
}

/// `|delta_h - delta_m|` along growing population sizes with `k_j = ceil(N beta_j)`.
pub fn delta_h_converges(
    populations: &[u64],
    n: u64,
    betas: &[f64],
    k_primes: &[usize],
    mc: MonteCarloConfig,
) -> Result<Vec<f64>> {
    let limit = delta_m(k_primes, n, betas, mc)?;
    populations
        .iter()
        .map(|&big_n| {
            let ks: Vec<u64> = betas.iter().map(|&b| level_index(big_n, b)).collect();
            Ok((delta_h(k_primes, big_n, n, &ks, mc)? - limit).abs())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mc(draws: usize) -> MonteCarloConfig {
        MonteCarloConfig::new(draws, 17).unwrap()
    }

    #[test]
    fn hypergeometric_examples() {
        let h = Hypergeometric::new(4, 2, 2).unwrap();
        assert!((h.pmf(0) - 1.0 / 6.0).abs() < 1e-14);
        assert!((h.pmf(1) - 2.0 / 3.0).abs() < 1e-14);
        assert!((h.pmf(2) - 1.0 / 6.0).abs() < 1e-14);
        assert_eq!(h.quantile(0.95), 2);
        assert_eq!(Hypergeometric::new(9, 0, 4).unwrap().pmf(0), 1.0);
    }

    #[test]
    fn pmf_sums_to_one() {
        for (big_n, k, n) in [(10u64, 3u64, 4u64), (100, 50, 50), (10_000, 2_345, 233), (10_000, 9_999, 10_000)] {
            let h = Hypergeometric::new(big_n, k, n).unwrap();
            let (lo, hi) = h.support();
            let total: f64 = (lo..=hi).map(|x| h.pmf(x)).sum();
            assert!((total - 1.0).abs() < 1e-12, "{big_n} {k} {n}: {total}");
        }
    }

    #[test]
    fn upper_quantile_agrees_with_quantile() {
        let h = Hypergeometric::new(100, 50, 50).unwrap();
        for tail in [0.5, 0.1, 0.05, 0.025, 0.001] {
            assert_eq!(h.upper_quantile(tail), h.quantile(1.0 - tail));
        }
    }

    #[test]
    fn delta_h_single_examples() {
        assert!((delta_h(&[2], 4, 2, &[2], mc(10)).unwrap() - 5.0 / 6.0).abs() < 1e-14);
        assert_eq!(delta_h(&[0], 4, 2, &[2], mc(10)).unwrap(), 0.0);
    }

    #[test]
    fn delta_m_single_examples() {
        assert!((delta_m(&[2], 2, &[0.5], mc(10)).unwrap() - 0.75).abs() < 1e-14);
        assert_eq!(delta_m(&[0], 2, &[0.5], mc(10)).unwrap(), 0.0);
    }

    #[test]
    fn kprime_single_examples() {
        // gamma = 0 removes the correction
        for k in 0..=10 {
            let (kp, corr) = choose_kprime_single(10, 4, k, 0.1, 0.0).unwrap();
            assert_eq!(kp, k.saturating_sub(6) as usize);
            assert_eq!(corr, 0.0);
        }
        assert_eq!(choose_kprime_single(10, 4, 10, 0.1, 0.5).unwrap(), (4, 0.0));
        let (kp, corr) = choose_kprime_single(100, 50, 50, 0.1, 0.5).unwrap();
        let h = Hypergeometric::new(100, 50, 50).unwrap();
        assert_eq!(kp as u64, 50 - h.quantile(0.95));
        assert!(corr <= 0.05);
    }

    #[test]
    fn multi_with_one_quantile_is_single() {
        let spec = choose_kprime_multi(100, 50, &[70], 0.1, 0.5, mc(1000)).unwrap();
        assert_eq!(spec.kappa, 1.0);
        let (kp, corr) = choose_kprime_single(100, 50, 70, 0.1, 0.5).unwrap();
        assert_eq!(spec.k_primes, vec![kp]);
        assert_eq!(spec.correction, corr);
    }

    #[test]
    fn multi_respects_budget_and_beats_bonferroni() {
        let ks = [50u64, 60, 70, 80, 90];
        let spec = choose_kprime_multi(100, 50, &ks, 0.1, 0.5, mc(20_000)).unwrap();
        assert!(spec.correction <= 0.05);
        assert!(spec.kappa >= 0.2);
        let bonf = choose_kprime_model(
            &SamplingModel::WithoutReplacement {
                population: 100,
                sample: 50,
                ks: ks.to_vec(),
            },
            0.1 / 5.0,
            0.5,
            mc(10),
        );
        assert!(bonf.is_ok());
        // shifted indices never fall below the Bonferroni choice
        for (j, &k) in ks.iter().enumerate() {
            let (kb, _) = choose_kprime_single(100, 50, k, 0.1 / 5.0, 0.5).unwrap();
            assert!(spec.k_primes[j] >= kb);
        }
    }

    #[test]
    fn level_index_rounds_up() {
        assert_eq!(level_index(80, 0.5), 40);
        assert_eq!(level_index(100, 0.55), 55);
        assert_eq!(level_index(7, 0.5), 4);
        assert_eq!(level_index(10, 0.0), 0);
    }
}
