//! HSIC independence test with Gaussian kernels and a permutation null, and
//! the residual-dependence direction rule built on it.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::npreg::{fit_mean_with, SmootherConfig, SmootherSummary};
use crate::rng::{child_seed, substream};
use crate::scoring::Direction;

const MIN_N: usize = 20;
/// Largest sample used for the median heuristic.
pub const MEDIAN_SUBSAMPLE: usize = 1000;
/// Samples above this size are subsampled before testing.
pub const MAX_TEST_N: usize = 5000;
/// Above this size Gram matrices are replaced by incomplete Cholesky factors.
const DENSE_LIMIT: usize = 1000;
const CHOLESKY_TOL: f64 = 1e-10;
const CHOLESKY_MAX_RANK: usize = 300;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HsicResult {
    pub statistic: f64,
    pub p_value: f64,
    pub permutations: usize,
    pub bandwidth_x: f64,
    pub bandwidth_y: f64,
    /// Number of observations actually tested (after any subsampling).
    pub n_used: usize,
}

/// Median pairwise distance over at most [`MEDIAN_SUBSAMPLE`] evenly spaced
/// points. Falls back to the median nonzero distance when more than half of
/// the distances are zero; `None` for a constant vector.
pub fn median_bandwidth(x: &[f64]) -> Option<f64> {
    let pts: Vec<f64> = if x.len() > MEDIAN_SUBSAMPLE {
        (0..MEDIAN_SUBSAMPLE)
            .map(|k| x[k * x.len() / MEDIAN_SUBSAMPLE])
            .collect()
    } else {
        x.to_vec()
    };
    let mut d = Vec::with_capacity(pts.len() * (pts.len() - 1) / 2);
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            d.push((pts[i] - pts[j]).abs());
        }
    }
    let mut med = median(&mut d)?;
    if med == 0.0 {
        d.retain(|&v| v > 0.0);
        med = median(&mut d)?;
    }
    (med > 0.0 && med.is_finite()).then_some(med)
}

fn median(v: &mut [f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    let mid = v.len() / 2;
    let (_, m, _) = v.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *m;
    if v.len() % 2 == 1 {
        Some(upper)
    } else {
        let lower = v[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Some(0.5 * (lower + upper))
    }
}

/// Kernel representation: a centered dense Gram matrix or centered
/// low-rank factors with `K ≈ G Gᵀ`.
enum Gram {
    Zero,
    Dense { n: usize, k: Vec<f64> },
    Factor { n: usize, rank: usize, g: Vec<f64> },
}

impl Gram {
    fn new(x: &[f64], sigma: Option<f64>, dense: bool) -> Self {
        let Some(sigma) = sigma else {
            return Gram::Zero;
        };
        let n = x.len();
        let c = -0.5 / (sigma * sigma);
        if dense {
            let mut k = vec![0.0; n * n];
            for i in 0..n {
                k[i * n + i] = 1.0;
                for j in i + 1..n {
                    let v = (c * (x[i] - x[j]).powi(2)).exp();
                    k[i * n + j] = v;
                    k[j * n + i] = v;
                }
            }
            // double centering; the matrix stays exactly symmetric because
            // row and column means coincide
            let rows: Vec<f64> = (0..n)
                .map(|i| k[i * n..(i + 1) * n].iter().sum::<f64>() / n as f64)
                .collect();
            let all = rows.iter().sum::<f64>() / n as f64;
            for i in 0..n {
                for j in 0..n {
                    k[i * n + j] += all - rows[i] - rows[j];
                }
            }
            for i in 0..n {
                for j in i + 1..n {
                    let s = 0.5 * (k[i * n + j] + k[j * n + i]);
                    k[i * n + j] = s;
                    k[j * n + i] = s;
                }
            }
            Gram::Dense { n, k }
        } else {
            let (rank, mut g) = incomplete_cholesky(x, c, CHOLESKY_TOL * n as f64, CHOLESKY_MAX_RANK);
            // center each column; stored row-major n × rank
            for m in 0..rank {
                let mean = (0..n).map(|i| g[i * rank + m]).sum::<f64>() / n as f64;
                for i in 0..n {
                    g[i * rank + m] -= mean;
                }
            }
            Gram::Factor { n, rank, g }
        }
    }
}

/// Pivoted incomplete Cholesky of the Gaussian Gram matrix, stopping when
/// the trace of the residual drops below `tol`. Row-major `n × rank`.
fn incomplete_cholesky(x: &[f64], c: f64, tol: f64, max_rank: usize) -> (usize, Vec<f64>) {
    let n = x.len();
    let mut diag = vec![1.0; n];
    let mut cols: Vec<Vec<f64>> = Vec::new();
    while cols.len() < max_rank.min(n) {
        let trace: f64 = diag.iter().sum();
        if trace <= tol {
            break;
        }
        let (p, &dp) = diag
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
            .unwrap();
        if dp <= 0.0 {
            break;
        }
        let root = dp.sqrt();
        let mut col = vec![0.0; n];
        for i in 0..n {
            let mut v = (c * (x[i] - x[p]).powi(2)).exp();
            for prev in &cols {
                v -= prev[i] * prev[p];
            }
            col[i] = v / root;
        }
        for i in 0..n {
            diag[i] = (diag[i] - col[i] * col[i]).max(0.0);
        }
        diag[p] = 0.0;
        cols.push(col);
    }
    let rank = cols.len();
    let mut g = vec![0.0; n * rank];
    for (m, col) in cols.iter().enumerate() {
        for i in 0..n {
            g[i * rank + m] = col[i];
        }
    }
    (rank, g)
}

/// `(1/n²) Σ_ij Kc_ij Lc_{π(i)π(j)}` for centered kernels.
fn statistic(kx: &Gram, ly: &Gram, perm: Option<&[usize]>) -> f64 {
    let idx = |i: usize| perm.map_or(i, |p| p[i]);
    match (kx, ly) {
        (Gram::Zero, _) | (_, Gram::Zero) => 0.0,
        (Gram::Dense { n, k }, Gram::Dense { k: l, .. }) => {
            let n = *n;
            let mut total = 0.0;
            for i in 0..n {
                let row = &k[i * n..(i + 1) * n];
                let lrow = &l[idx(i) * n..(idx(i) + 1) * n];
                let s: f64 = match perm {
                    None => row.iter().zip(lrow).map(|(a, b)| a * b).sum(),
                    Some(p) => row.iter().zip(p).map(|(a, &pj)| a * lrow[pj]).sum(),
                };
                total += s;
            }
            total / (n * n) as f64
        }
        (Gram::Factor { n, rank: r1, g }, Gram::Factor { rank: r2, g: f, .. }) => {
            let (n, r1, r2) = (*n, *r1, *r2);
            // ‖Gᵀ P F‖²_F
            let mut cross = vec![0.0; r1 * r2];
            for i in 0..n {
                let gi = &g[i * r1..(i + 1) * r1];
                let fi = &f[idx(i) * r2..(idx(i) + 1) * r2];
                for (a, &ga) in gi.iter().enumerate() {
                    let out = &mut cross[a * r2..(a + 1) * r2];
                    for (o, &fb) in out.iter_mut().zip(fi) {
                        *o += ga * fb;
                    }
                }
            }
            cross.iter().map(|v| v * v).sum::<f64>() / (n * n) as f64
        }
        _ => unreachable!("kernels are built with the same representation"),
    }
}

fn check(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::domain(format!("lengths differ ({} vs {})", x.len(), y.len())));
    }
    if x.len() < MIN_N {
        return Err(Error::domain(format!("HSIC needs at least {MIN_N} observations")));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::domain("HSIC inputs must be finite"));
    }
    Ok(())
}

/// Biased HSIC V-statistic with median-heuristic Gaussian kernels, computed
/// from dense Gram matrices.
pub fn hsic_statistic(x: &[f64], y: &[f64]) -> Result<f64> {
    check(x, y)?;
    let kx = Gram::new(x, median_bandwidth(x), true);
    let ly = Gram::new(y, median_bandwidth(y), true);
    Ok(statistic(&kx, &ly, None))
}

/// Same statistic from incomplete Cholesky factors, as used for large samples.
pub fn hsic_statistic_low_rank(x: &[f64], y: &[f64]) -> Result<f64> {
    check(x, y)?;
    let kx = Gram::new(x, median_bandwidth(x), false);
    let ly = Gram::new(y, median_bandwidth(y), false);
    Ok(statistic(&kx, &ly, None))
}

/// Seeded uniform subsample of `m` indices, in increasing order.
fn subsample(n: usize, m: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = substream(seed, u64::MAX);
    let (head, _) = idx.partial_shuffle(&mut rng, m);
    let mut head = head.to_vec();
    head.sort_unstable();
    head
}

/// Permutation test of independence; permutation `b` shuffles `y` with
/// substream `b + 1` of `seed`, so the result does not depend on scheduling.
pub fn hsic_test(x: &[f64], y: &[f64], permutations: usize, seed: u64) -> Result<HsicResult> {
    check(x, y)?;
    if permutations < 99 {
        return Err(Error::domain(format!(
            "at least 99 permutations are required, got {permutations}"
        )));
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = if x.len() > MAX_TEST_N {
        subsample(x.len(), MAX_TEST_N, seed)
            .into_iter()
            .map(|i| (x[i], y[i]))
            .unzip()
    } else {
        (x.to_vec(), y.to_vec())
    };
    let n = xs.len();
    let (bx, by) = (median_bandwidth(&xs), median_bandwidth(&ys));
    let dense = n <= DENSE_LIMIT;
    let kx = Gram::new(&xs, bx, dense);
    let ly = Gram::new(&ys, by, dense);
    let observed = statistic(&kx, &ly, None);
    let exceed: usize = (0..permutations)
        .into_par_iter()
        .map(|b| {
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut substream(seed, b as u64 + 1));
            usize::from(statistic(&kx, &ly, Some(&perm)) >= observed)
        })
        .sum();
    Ok(HsicResult {
        statistic: observed,
        p_value: (1 + exceed) as f64 / (permutations + 1) as f64,
        permutations,
        bandwidth_x: bx.unwrap_or(0.0),
        bandwidth_y: by.unwrap_or(0.0),
        n_used: n,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DependenceReport {
    pub decision: Direction,
    /// Test of predictor `x` against the residuals of `y` on `x`.
    pub fwd: HsicResult,
    pub bwd: HsicResult,
    pub smoother_fwd: SmootherSummary,
    pub smoother_bwd: SmootherSummary,
}

/// Regresses each variable on the other and prefers the direction whose
/// residuals look least dependent on the predictor.
pub fn direction_by_dependence(x: &[f64], y: &[f64], permutations: usize, seed: u64) -> Result<DependenceReport> {
    if x.len() < 50 {
        return Err(Error::domain("direction_by_dependence needs at least 50 observations"));
    }
    let cfg = SmootherConfig::default();
    let f = fit_mean_with(x, y, &cfg)?;
    let b = fit_mean_with(y, x, &cfg)?;
    let fwd = hsic_test(x, &f.residuals, permutations, child_seed(seed, 0))?;
    let bwd = hsic_test(y, &b.residuals, permutations, child_seed(seed, 1))?;
    let decision = if fwd.statistic < bwd.statistic {
        Direction::Forward
    } else if bwd.statistic < fwd.statistic {
        Direction::Backward
    } else {
        Direction::Tie
    };
    Ok(DependenceReport {
        decision,
        fwd,
        bwd,
        smoother_fwd: f.summary(),
        smoother_bwd: b.summary(),
    })
}
