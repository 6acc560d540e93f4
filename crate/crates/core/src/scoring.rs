//! Sample-level Gaussian scores, direction decisions, and permutation scores
//! for linear SEMs.
//!
//! A score is a sum of log residual standard deviations, so lower is better
//! and the bivariate gap estimate is `exp(2 (score_bwd − score_fwd))`.

use std::collections::HashMap;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::npreg::{fit_mean, fit_variance, residual_variance, sample_sd, SmootherSummary};
use crate::population::Fit;
use crate::rng::substream;
use crate::sem::{population_covariance, sample_linear_sem, Dataset, LinearSem, Permutation};

/// Score differences within this band are reported as ties.
pub const TIE_TOL: f64 = 1e-3;
/// Log-sd gain above which a flexible fit counts as a strict witness.
pub const WITNESS_THRESHOLD: f64 = 0.005;
const PIVOT_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Forward,
    Backward,
    Tie,
}

impl Direction {
    pub fn as_str(&self) -> &'static str {
        match self {
            Direction::Forward => "forward",
            Direction::Backward => "backward",
            Direction::Tie => "tie",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Decision rule shared by every score comparison.
pub fn decide(score_fwd: f64, score_bwd: f64) -> Direction {
    if score_fwd < score_bwd - TIE_TOL {
        Direction::Forward
    } else if score_bwd < score_fwd - TIE_TOL {
        Direction::Backward
    } else {
        Direction::Tie
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DirectionReport {
    pub score_fwd: f64,
    pub score_bwd: f64,
    pub exp_delta_sq_hat: f64,
    pub decision: Direction,
    pub fit: Fit,
    pub n: usize,
    pub smoother_fwd: SmootherSummary,
    pub smoother_bwd: SmootherSummary,
}

fn half_log_var(x: &[f64]) -> f64 {
    sample_sd(x).ln()
}

/// Score of the model `root → target` with a smoothed regression.
fn one_way(root: &[f64], target: &[f64], fit: Fit) -> Result<(f64, SmootherSummary)> {
    let m = fit_mean(root, target)?;
    let reg = match fit {
        Fit::Homoskedastic => 0.5 * residual_variance(&m).ln(),
        Fit::Heteroskedastic => {
            let v = fit_variance(&m)?;
            0.5 * v.fitted.iter().map(|s| s.ln()).sum::<f64>() / v.fitted.len() as f64
        }
    };
    Ok((half_log_var(root) + reg, m.summary()))
}

/// Compares `x → y` against `y → x` under the Gaussian score.
pub fn gaussian_direction(x: &[f64], y: &[f64], fit: Fit) -> Result<DirectionReport> {
    if x.len() != y.len() {
        return Err(Error::domain("x and y lengths differ"));
    }
    let (score_fwd, smoother_fwd) = one_way(x, y, fit)?;
    let (score_bwd, smoother_bwd) = one_way(y, x, fit)?;
    Ok(DirectionReport {
        score_fwd,
        score_bwd,
        exp_delta_sq_hat: (2.0 * (score_bwd - score_fwd)).exp(),
        decision: decide(score_fwd, score_bwd),
        fit,
        n: x.len(),
        smoother_fwd,
        smoother_bwd,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    BestLinear,
    Nonparametric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationScore {
    pub perm: Permutation,
    /// Log residual sd of node `perm[t]` given `perm[..t]`, indexed by `t`.
    pub per_node_log_sigma: Vec<f64>,
    pub total: f64,
    pub estimator: Estimator,
}

impl PermutationScore {
    fn new(perm: Permutation, per_node_log_sigma: Vec<f64>, estimator: Estimator) -> Self {
        let total = per_node_log_sigma.iter().sum();
        PermutationScore {
            perm,
            per_node_log_sigma,
            total,
            estimator,
        }
    }
}

/// Residual variances of successive regressions along `order`, by sweeping
/// the pivot out of a working copy of `cov` (Schur complements).
fn sweep_variances(cov: &DMatrix<f64>, order: &[usize]) -> Result<Vec<f64>> {
    let mut w = cov.clone();
    let p = w.nrows();
    let mut out = Vec::with_capacity(order.len());
    for &j in order {
        let pivot = w[(j, j)];
        if !(pivot > PIVOT_FLOOR * cov[(j, j)].abs().max(1.0)) || !pivot.is_finite() {
            return Err(Error::Numeric(format!("singular conditioning set at node {}", j + 1)));
        }
        out.push(pivot);
        let col: Vec<f64> = (0..p).map(|r| w[(r, j)]).collect();
        for r in 0..p {
            for c in 0..p {
                w[(r, c)] -= col[r] * col[c] / pivot;
            }
        }
    }
    Ok(out)
}

fn check_perm(p: usize, perm: &Permutation) -> Result<()> {
    if perm.len() != p {
        return Err(Error::contract(format!(
            "permutation of length {} for {} variables",
            perm.len(),
            p
        )));
    }
    Ok(())
}

/// Best-linear permutation score from the population covariance.
pub fn permutation_score_population(sem: &LinearSem, perm: &Permutation) -> Result<PermutationScore> {
    check_perm(sem.p(), perm)?;
    let cov = population_covariance(sem);
    let vars = sweep_variances(&cov, perm.order())?;
    Ok(PermutationScore::new(
        perm.clone(),
        vars.iter().map(|v| 0.5 * v.ln()).collect(),
        Estimator::BestLinear,
    ))
}

/// Σ log σ_j of the true noises.
pub fn true_total(sem: &LinearSem) -> f64 {
    sem.noises().iter().map(|n| 0.5 * n.variance().ln()).sum()
}

fn sample_covariance(data: &Dataset) -> DMatrix<f64> {
    let p = data.n_cols();
    let n = data.n_rows() as f64;
    let means: Vec<f64> = (0..p).map(|j| data.column(j).iter().sum::<f64>() / n).collect();
    let mut cov = DMatrix::zeros(p, p);
    for a in 0..p {
        for b in a..p {
            let s: f64 = data
                .column(a)
                .iter()
                .zip(data.column(b))
                .map(|(u, v)| (u - means[a]) * (v - means[b]))
                .sum::<f64>()
                / n;
            cov[(a, b)] = s;
            cov[(b, a)] = s;
        }
    }
    cov
}

/// Sample permutation score. The root term uses the unbiased variance; the
/// others use mean squared residuals. The nonparametric estimator supports
/// conditioning sets of at most one variable.
pub fn permutation_score_sample(data: &Dataset, perm: &Permutation, estimator: Estimator) -> Result<PermutationScore> {
    check_perm(data.n_cols(), perm)?;
    if data.n_rows() < 50 {
        return Err(Error::domain("permutation scores need at least 50 rows"));
    }
    let order = perm.order();
    let root = half_log_var(data.column(order[0]));
    let mut terms = vec![root];
    match estimator {
        Estimator::BestLinear => {
            let vars = sweep_variances(&sample_covariance(data), order)?;
            terms.extend(vars[1..].iter().map(|v| 0.5 * v.ln()));
        }
        Estimator::Nonparametric => {
            if order.len() > 2 {
                return Err(Error::Unsupported(format!(
                    "nonparametric scores use one regressor; this permutation conditions on up to {}",
                    order.len() - 1
                )));
            }
            if order.len() == 2 {
                let m = fit_mean(data.column(order[0]), data.column(order[1]))?;
                terms.push(0.5 * residual_variance(&m).ln());
            }
        }
    }
    Ok(PermutationScore::new(perm.clone(), terms, estimator))
}

/// Ordinary least squares residuals of `y` on an intercept and `features`.
fn ols_residuals(features: &[Vec<f64>], y: &[f64]) -> Result<Vec<f64>> {
    let n = y.len();
    let m = features.len() + 1;
    let design = DMatrix::from_fn(n, m, |i, c| if c == 0 { 1.0 } else { features[c - 1][i] });
    let yv = DVector::from_column_slice(y);
    let gram = design.transpose() * &design;
    let rhs = design.transpose() * &yv;
    let beta = match gram.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => gram
            .svd(true, true)
            .solve(&rhs, 1e-12)
            .map_err(|e| Error::Numeric(format!("least squares failed: {e}")))?,
    };
    let fitted = design * beta;
    Ok(y.iter().zip(fitted.iter()).map(|(a, b)| a - b).collect())
}

/// Standardized monomials of total degree 1..=3 in the given columns.
fn cubic_features(cols: &[&[f64]]) -> Vec<Vec<f64>> {
    let z: Vec<Vec<f64>> = cols
        .iter()
        .map(|c| {
            let n = c.len() as f64;
            let mean = c.iter().sum::<f64>() / n;
            let sd = sample_sd(c).max(f64::MIN_POSITIVE);
            c.iter().map(|v| (v - mean) / sd).collect()
        })
        .collect();
    let k = z.len();
    let n = cols[0].len();
    let mut out = Vec::new();
    for a in 0..k {
        out.push(z[a].clone());
        for b in a..k {
            out.push((0..n).map(|i| z[a][i] * z[b][i]).collect());
            for c in b..k {
                out.push((0..n).map(|i| z[a][i] * z[b][i] * z[c][i]).collect());
            }
        }
    }
    out
}

/// Squared residuals of the linear and the flexible regression of one node
/// on a conditioning set.
#[derive(Debug, Clone)]
struct RegressionPair {
    linear_sq: Vec<f64>,
    flexible_sq: Vec<f64>,
    gain: f64,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Linear vs flexible fit of `target` on `set`: local-linear smoothing for a
/// single regressor, a full cubic polynomial for several.
fn regression_pair(data: &Dataset, target: usize, set: &[usize]) -> Result<RegressionPair> {
    let y = data.column(target);
    let cols: Vec<&[f64]> = set.iter().map(|&s| data.column(s)).collect();
    let linear = ols_residuals(&cols.iter().map(|c| c.to_vec()).collect::<Vec<_>>(), y)?;
    let flexible = if set.len() == 1 {
        fit_mean(cols[0], y)?.residuals
    } else {
        ols_residuals(&cubic_features(&cols), y)?
    };
    let linear_sq: Vec<f64> = linear.iter().map(|r| r * r).collect();
    let flexible_sq: Vec<f64> = flexible.iter().map(|r| r * r).collect();
    let gain = 0.5 * (mean(&linear_sq) / mean(&flexible_sq)).ln();
    Ok(RegressionPair {
        linear_sq,
        flexible_sq,
        gain,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Theorem1Row {
    pub perm: String,
    pub population_total: f64,
    pub deviation: f64,
    pub conformable: bool,
    /// Positions `t` (1-based node labels) whose conditional mean was found
    /// nonlinear.
    pub witnesses: Vec<usize>,
    /// Σ_t of the flexible-over-linear log-sd gains.
    pub sample_gain: f64,
    /// Influence-function standard error of `sample_gain`.
    pub sample_gain_se: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StrongestGain {
    pub perm: String,
    pub gain: f64,
    pub bootstrap_se: f64,
    pub replicates: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Theorem1Report {
    pub p: usize,
    pub n: usize,
    pub seed: u64,
    pub true_total: f64,
    pub max_deviation: f64,
    pub rows: Vec<Theorem1Row>,
    /// No non-conformable permutation has a strict witness: the gap is zero.
    pub equality_case: bool,
    /// Largest sample gain among non-conformable permutations.
    pub strongest: Option<StrongestGain>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Config {
    pub n: usize,
    pub seed: u64,
    pub bootstrap: usize,
}

impl Default for Theorem1Config {
    fn default() -> Self {
        Theorem1Config {
            n: 100_000,
            seed: 0,
            bootstrap: 200,
        }
    }
}

/// Population totals over all permutations plus sample-based strict
/// witnesses.
pub fn verify_theorem1(sem: &LinearSem, cfg: &Theorem1Config) -> Result<Theorem1Report> {
    let p = sem.p();
    if p > 6 {
        return Err(Error::domain(format!("at most 6 variables, got {p}")));
    }
    let truth = true_total(sem);
    let data = sample_linear_sem(sem, cfg.n, cfg.seed)?;
    let mut cache: HashMap<(usize, u32), RegressionPair> = HashMap::new();
    let mut rows = Vec::new();
    let mut sums: Vec<Vec<(usize, u32)>> = Vec::new();
    for perm in Permutation::all(p) {
        let pop = permutation_score_population(sem, &perm)?;
        let order = perm.order();
        let mut witnesses = Vec::new();
        let mut keys = Vec::new();
        let mut gain = 0.0;
        for t in 1..p {
            let mut set: Vec<usize> = order[..t].to_vec();
            set.sort_unstable();
            let key = (order[t], set.iter().fold(0u32, |m, &s| m | (1 << s)));
            if let std::collections::hash_map::Entry::Vacant(e) = cache.entry(key) {
                e.insert(regression_pair(&data, order[t], &set)?);
            }
            let pair = &cache[&key];
            if pair.gain > WITNESS_THRESHOLD {
                witnesses.push(order[t] + 1);
            }
            gain += pair.gain;
            keys.push(key);
        }
        let se = influence_se(&keys.iter().map(|k| &cache[k]).collect::<Vec<_>>());
        rows.push(Theorem1Row {
            perm: perm.to_string(),
            population_total: pop.total,
            deviation: (pop.total - truth).abs(),
            conformable: sem.is_conformable(&perm),
            witnesses,
            sample_gain: gain,
            sample_gain_se: se,
        });
        sums.push(keys);
    }
    let max_deviation = rows.iter().map(|r| r.deviation).fold(0.0, f64::max);
    let equality_case = rows.iter().all(|r| r.conformable || r.witnesses.is_empty());
    let best = rows
        .iter()
        .enumerate()
        .filter(|(_, r)| !r.conformable)
        .max_by(|a, b| a.1.sample_gain.total_cmp(&b.1.sample_gain));
    let strongest = match best {
        Some((i, r)) if cfg.bootstrap > 1 => {
            let pairs: Vec<&RegressionPair> = sums[i].iter().map(|k| &cache[k]).collect();
            Some(StrongestGain {
                perm: r.perm.clone(),
                gain: r.sample_gain,
                bootstrap_se: bootstrap_se(&pairs, cfg.bootstrap, cfg.seed),
                replicates: cfg.bootstrap,
            })
        }
        _ => None,
    };
    Ok(Theorem1Report {
        p,
        n: cfg.n,
        seed: cfg.seed,
        true_total: truth,
        max_deviation,
        rows,
        equality_case,
        strongest,
    })
}

fn influence_se(pairs: &[&RegressionPair]) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    let n = pairs[0].linear_sq.len();
    let scale: Vec<(f64, f64)> = pairs
        .iter()
        .map(|p| (mean(&p.linear_sq), mean(&p.flexible_sq)))
        .collect();
    let psi: Vec<f64> = (0..n)
        .map(|i| {
            pairs
                .iter()
                .zip(&scale)
                .map(|(p, (a, b))| 0.5 * (p.linear_sq[i] / a - p.flexible_sq[i] / b))
                .sum()
        })
        .collect();
    sample_sd(&psi) / (n as f64).sqrt()
}

/// Row-resampling bootstrap of Σ_t ½ log(mean linear / mean flexible) with
/// the fitted residuals held fixed.
fn bootstrap_se(pairs: &[&RegressionPair], reps: usize, seed: u64) -> f64 {
    use rand::Rng;
    if pairs.is_empty() {
        return 0.0;
    }
    let n = pairs[0].linear_sq.len();
    let stats: Vec<f64> = (0..reps)
        .map(|b| {
            let mut rng = substream(seed, 1_000_000 + b as u64);
            let mut sums = vec![(0.0, 0.0); pairs.len()];
            for _ in 0..n {
                let i = rng.random_range(0..n);
                for (s, p) in sums.iter_mut().zip(pairs) {
                    s.0 += p.linear_sq[i];
                    s.1 += p.flexible_sq[i];
                }
            }
            sums.iter().map(|(a, f)| 0.5 * (a / f).ln()).sum()
        })
        .collect();
    sample_sd(&stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sem::{sample_bivariate, BivariateAnm, Mechanism};
    use crate::specfun::NoiseSpec;

    fn uniform_chain(betas: &[f64]) -> LinearSem {
        LinearSem::chain(betas, vec![NoiseSpec::uniform(1.0); betas.len() + 1]).unwrap()
    }

    #[test]
    fn decision_rule() {
        assert_eq!(decide(0.0, 0.01), Direction::Forward);
        assert_eq!(decide(0.01, 0.0), Direction::Backward);
        assert_eq!(decide(0.0, 0.0005), Direction::Tie);
    }

    #[test]
    fn population_totals_are_permutation_invariant() {
        let sem = LinearSem::random(
            4,
            vec![
                NoiseSpec::uniform(1.0),
                NoiseSpec::gaussian(0.5),
                NoiseSpec::chi1(2.0),
                NoiseSpec::uniform(0.3),
            ],
            0.7,
            3,
        )
        .unwrap();
        let truth = true_total(&sem);
        for perm in Permutation::all(4) {
            let s = permutation_score_population(&sem, &perm).unwrap();
            assert!((s.total - truth).abs() < 1e-10, "{perm}");
            assert!((s.per_node_log_sigma.iter().sum::<f64>() - s.total).abs() < 1e-15);
        }
    }

    #[test]
    fn reversed_chain_variances() {
        let sem = uniform_chain(&[2.0]);
        let rev = Permutation::new(vec![1, 0]).unwrap();
        let s = permutation_score_population(&sem, &rev).unwrap();
        let (v1, ve) = (1.0f64 / 3.0, 1.0f64 / 3.0);
        let v2 = 4.0 * v1 + ve;
        assert!((s.per_node_log_sigma[0] - 0.5 * v2.ln()).abs() < 1e-14);
        assert!((s.per_node_log_sigma[1] - 0.5 * (v1 * ve / v2).ln()).abs() < 1e-14);
    }

    #[test]
    fn sample_scores() {
        let sem = uniform_chain(&[2.0]);
        let data = sample_linear_sem(&sem, 5000, 1).unwrap();
        let id = Permutation::identity(2);
        let lin = permutation_score_sample(&data, &id, Estimator::BestLinear).unwrap();
        assert!((lin.total - true_total(&sem)).abs() < 0.02);
        let three = uniform_chain(&[1.0, 1.0]);
        let d3 = sample_linear_sem(&three, 100, 1).unwrap();
        assert!(matches!(
            permutation_score_sample(&d3, &Permutation::identity(3), Estimator::Nonparametric),
            Err(Error::Unsupported(_))
        ));
        assert!(permutation_score_sample(&d3, &Permutation::identity(2), Estimator::BestLinear).is_err());
    }

    #[test]
    fn jensen_on_het_scores() {
        let m = BivariateAnm::new(
            NoiseSpec::uniform(1.0),
            Mechanism::Linear { beta: 2.0 },
            NoiseSpec::uniform(1.0),
        );
        let d = sample_bivariate(&m, 2000, 5).unwrap();
        let homo = gaussian_direction(d.column(0), d.column(1), Fit::Homoskedastic).unwrap();
        let het = gaussian_direction(d.column(0), d.column(1), Fit::Heteroskedastic).unwrap();
        assert!(het.score_bwd <= homo.score_bwd + 1e-12);
        assert!((homo.exp_delta_sq_hat - (2.0 * (homo.score_bwd - homo.score_fwd)).exp()).abs() < 1e-12);
    }

    #[test]
    fn unit_beta_uniform_has_no_witness() {
        let sem = uniform_chain(&[1.0]);
        let r = verify_theorem1(
            &sem,
            &Theorem1Config {
                n: 20_000,
                seed: 2,
                bootstrap: 20,
            },
        )
        .unwrap();
        assert!(r.max_deviation < 1e-12);
        assert!(r.equality_case, "{:?}", r.rows);
    }

    #[test]
    fn cubic_feature_count() {
        let a = vec![0.0, 1.0, 2.0];
        let cols: Vec<&[f64]> = vec![&a, &a, &a];
        assert_eq!(cubic_features(&cols).len(), 19);
        assert_eq!(cubic_features(&cols[..1]).len(), 3);
    }
}
