//! Local-linear kernel regression with leave-one-out bandwidth selection.
//!
//! The smoother uses a Gaussian kernel `exp(−u²/2)` truncated at `|u| ≤ 8`.
//! Leave-one-out residuals come from the deletion identity for weighted
//! least squares, `(y_i − m_i) / (1 − l_ii)`, so each candidate bandwidth
//! costs one pass over the data.
//!
//! Two engines compute the local sums:
//!
//! * exact: observations are grouped by distinct `x` (the pair data has
//!   heavy ties), then every distinct point is visited with a sliding window;
//! * binned: for many distinct `x`, observations are linearly binned onto an
//!   equispaced grid and the sums are discrete convolutions with a tabulated
//!   kernel. Fitted values and leverages are interpolated back to the data.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const CUTOFF: f64 = 8.0;
/// Kernel mass below which a query falls back to the nearest neighbour.
const MASS_FLOOR: f64 = 1e-12;
/// Relative determinant below which the local line is not identified.
const SINGULAR_RATIO: f64 = 1e-10;
const MIN_N: usize = 20;

fn kernel(u: f64) -> f64 {
    (-0.5 * u * u).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmootherConfig {
    /// Number of log-spaced bandwidths.
    pub grid_count: usize,
    /// Smallest and largest bandwidth as multiples of sd(x).
    pub grid_lo: f64,
    pub grid_hi: f64,
    /// Largest number of distinct x values handled by the exact engine.
    pub exact_limit: usize,
    pub bins: usize,
}

impl Default for SmootherConfig {
    fn default() -> Self {
        SmootherConfig {
            grid_count: 25,
            grid_lo: 0.01,
            grid_hi: 1.0,
            exact_limit: 2500,
            bins: 4096,
        }
    }
}

impl SmootherConfig {
    fn validate(&self) -> Result<()> {
        if self.grid_count == 0
            || !(self.grid_lo > 0.0 && self.grid_hi >= self.grid_lo && self.grid_hi.is_finite())
            || self.bins < 16
        {
            return Err(Error::domain(format!("invalid smoother configuration {self:?}")));
        }
        Ok(())
    }

    /// Bandwidth candidates for a regressor with standard deviation `sd`.
    pub fn bandwidths(&self, sd: f64) -> Vec<f64> {
        if self.grid_count == 1 {
            return vec![self.grid_lo * sd];
        }
        let (a, b) = (self.grid_lo.ln(), self.grid_hi.ln());
        let step = (b - a) / (self.grid_count - 1) as f64;
        (0..self.grid_count).map(|i| (a + step * i as f64).exp() * sd).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    Exact,
    Binned,
}

/// Weighted support points: distinct x (or grid nodes) with the count and the
/// sum and sum of squares of the responses attached to each.
#[derive(Debug, Clone)]
struct Support {
    u: Vec<f64>,
    c: Vec<f64>,
    s: Vec<f64>,
    q: Vec<f64>,
}

impl Support {
    fn distinct(x: &[f64], y: &[f64]) -> (Self, Vec<usize>) {
        let mut idx: Vec<usize> = (0..x.len()).collect();
        idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(a.cmp(&b)));
        let mut sup = Support {
            u: Vec::new(),
            c: Vec::new(),
            s: Vec::new(),
            q: Vec::new(),
        };
        let mut slot = vec![0usize; x.len()];
        for &i in &idx {
            if sup.u.last() != Some(&x[i]) {
                sup.u.push(x[i]);
                sup.c.push(0.0);
                sup.s.push(0.0);
                sup.q.push(0.0);
            }
            let k = sup.u.len() - 1;
            sup.c[k] += 1.0;
            sup.s[k] += y[i];
            sup.q[k] += y[i] * y[i];
            slot[i] = k;
        }
        (sup, slot)
    }

    /// Linear binning onto `bins` equispaced nodes; returns, per observation,
    /// the left node and the interpolation weight of the right node.
    fn binned(x: &[f64], y: &[f64], bins: usize) -> (Self, Vec<(usize, f64)>) {
        let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let delta = (hi - lo) / (bins - 1) as f64;
        let u: Vec<f64> = (0..bins).map(|k| lo + delta * k as f64).collect();
        let mut sup = Support {
            u,
            c: vec![0.0; bins],
            s: vec![0.0; bins],
            q: vec![0.0; bins],
        };
        let mut loc = Vec::with_capacity(x.len());
        for (&xi, &yi) in x.iter().zip(y) {
            let pos = ((xi - lo) / delta).clamp(0.0, (bins - 1) as f64);
            let k = (pos.floor() as usize).min(bins - 2);
            let t = pos - k as f64;
            for (node, w) in [(k, 1.0 - t), (k + 1, t)] {
                sup.c[node] += w;
                sup.s[node] += w * yi;
                sup.q[node] += w * yi * yi;
            }
            loc.push((k, t));
        }
        (sup, loc)
    }
}

/// Local moments `[S0, S1, S2, T0, T1]` around a centre.
type Moments = [f64; 5];

fn accumulate(m: &mut Moments, w: f64, d: f64, count: f64, sum: f64) {
    let wc = w * count;
    m[0] += wc;
    m[1] += wc * d;
    m[2] += wc * d * d;
    m[3] += w * sum;
    m[4] += w * d * sum;
}

/// Moments at every support point, with a sliding window over sorted `u`.
fn moments_sliding(sup: &Support, h: f64) -> Vec<Moments> {
    let n = sup.u.len();
    let reach = CUTOFF * h;
    let mut out = vec![[0.0; 5]; n];
    let mut lo = 0;
    let mut hi = 0;
    for k in 0..n {
        let centre = sup.u[k];
        while sup.u[lo] < centre - reach {
            lo += 1;
        }
        while hi < n && sup.u[hi] <= centre + reach {
            hi += 1;
        }
        let m = &mut out[k];
        for j in lo..hi {
            let d = sup.u[j] - centre;
            let w = kernel(d / h);
            accumulate(m, w, d, sup.c[j], sup.s[j]);
        }
    }
    out
}

/// Moments at equispaced grid nodes via a tabulated kernel.
fn moments_grid(sup: &Support, h: f64) -> Vec<Moments> {
    let n = sup.u.len();
    let delta = sup.u[1] - sup.u[0];
    let reach = ((CUTOFF * h / delta).floor() as usize).min(n - 1);
    let table: Vec<f64> = (0..=reach).map(|j| kernel(j as f64 * delta / h)).collect();
    let mut out = vec![[0.0; 5]; n];
    for (k, m) in out.iter_mut().enumerate() {
        let a = k.saturating_sub(reach);
        let b = (k + reach).min(n - 1);
        for j in a..=b {
            if sup.c[j] == 0.0 {
                continue;
            }
            let off = j.abs_diff(k);
            let d = (j as f64 - k as f64) * delta;
            accumulate(m, table[off], d, sup.c[j], sup.s[j]);
        }
    }
    out
}

#[derive(Debug, Clone, Copy)]
struct Local {
    value: f64,
    slope: f64,
    /// Self-weight leverage `S2 / det` (kernel value 1 at the centre).
    leverage: f64,
    regular: bool,
}

fn solve_local(m: &Moments) -> Local {
    let [s0, s1, s2, t0, t1] = *m;
    let det = s0 * s2 - s1 * s1;
    if s0 < MASS_FLOOR {
        return Local {
            value: f64::NAN,
            slope: 0.0,
            leverage: f64::NAN,
            regular: false,
        };
    }
    if !(det > SINGULAR_RATIO * s0 * s2) || s2 <= 0.0 {
        return Local {
            value: t0 / s0,
            slope: 0.0,
            leverage: 1.0 / s0,
            regular: false,
        };
    }
    Local {
        value: (s2 * t0 - s1 * t1) / det,
        slope: (s0 * t1 - s1 * t0) / det,
        leverage: s2 / det,
        regular: true,
    }
}

#[derive(Debug, Clone)]
enum Predictor {
    Exact {
        sup: Support,
    },
    Grid {
        nodes: Vec<f64>,
        values: Vec<f64>,
        slopes: (f64, f64),
    },
}

/// A fitted local-linear smoother; immutable and shareable across threads.
#[derive(Debug, Clone)]
pub struct SmootherFit {
    pub x_train: Vec<f64>,
    pub y_train: Vec<f64>,
    pub bandwidth: f64,
    pub fitted: Vec<f64>,
    pub residuals: Vec<f64>,
    pub loocv_score: f64,
    pub engine: Engine,
    /// Lower bound applied to predictions (variance fits only).
    pub floor: Option<f64>,
    predictor: Predictor,
}

/// Bandwidth, engine and CV value of a fit, for reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmootherSummary {
    pub kind: String,
    pub kernel: String,
    pub bandwidth: f64,
    pub bandwidth_over_sd: f64,
    pub loocv_score: f64,
    pub engine: Engine,
}

impl SmootherFit {
    pub fn n(&self) -> usize {
        self.x_train.len()
    }

    pub fn summary(&self) -> SmootherSummary {
        SmootherSummary {
            kind: "local_linear".into(),
            kernel: "gaussian".into(),
            bandwidth: self.bandwidth,
            bandwidth_over_sd: self.bandwidth / sample_sd(&self.x_train),
            loocv_score: self.loocv_score,
            engine: self.engine,
        }
    }

    /// Local-linear prediction at `q`; outside the training range the local
    /// line at the nearest boundary is extended.
    pub fn predict(&self, q: f64) -> f64 {
        let v = match &self.predictor {
            Predictor::Exact { sup } => predict_exact(sup, self.bandwidth, q),
            Predictor::Grid { nodes, values, slopes } => predict_grid(nodes, values, *slopes, q),
        };
        match self.floor {
            Some(f) => v.max(f),
            None => v,
        }
    }

    pub fn predict_many(&self, qs: &[f64]) -> Vec<f64> {
        qs.iter().map(|&q| self.predict(q)).collect()
    }
}

fn local_at(sup: &Support, h: f64, q: f64) -> Local {
    let reach = CUTOFF * h;
    let a = sup.u.partition_point(|&u| u < q - reach);
    let b = sup.u.partition_point(|&u| u <= q + reach);
    let mut m = [0.0; 5];
    for j in a..b {
        let d = sup.u[j] - q;
        accumulate(&mut m, kernel(d / h), d, sup.c[j], sup.s[j]);
    }
    solve_local(&m)
}

fn nearest_mean(sup: &Support, q: f64) -> f64 {
    let i = sup.u.partition_point(|&u| u < q);
    let k = if i == 0 {
        0
    } else if i == sup.u.len() || (q - sup.u[i - 1]) <= (sup.u[i] - q) {
        i.min(sup.u.len()) - 1
    } else {
        i
    };
    sup.s[k] / sup.c[k]
}

fn predict_exact(sup: &Support, h: f64, q: f64) -> f64 {
    let first = sup.u[0];
    let last = sup.u[sup.u.len() - 1];
    let (centre, offset) = if q < first {
        (first, q - first)
    } else if q > last {
        (last, q - last)
    } else {
        (q, 0.0)
    };
    let loc = local_at(sup, h, centre);
    if loc.value.is_nan() {
        return nearest_mean(sup, q);
    }
    loc.value + loc.slope * offset
}

fn predict_grid(nodes: &[f64], values: &[f64], slopes: (f64, f64), q: f64) -> f64 {
    let n = nodes.len();
    if q <= nodes[0] {
        return values[0] + slopes.0 * (q - nodes[0]);
    }
    if q >= nodes[n - 1] {
        return values[n - 1] + slopes.1 * (q - nodes[n - 1]);
    }
    let delta = nodes[1] - nodes[0];
    let pos = (q - nodes[0]) / delta;
    let k = (pos.floor() as usize).min(n - 2);
    let t = pos - k as f64;
    (1.0 - t) * values[k] + t * values[k + 1]
}

pub(crate) fn sample_sd(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

fn check_inputs(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::domain(format!(
            "x and y lengths differ ({} vs {})",
            x.len(),
            y.len()
        )));
    }
    if x.len() < MIN_N {
        return Err(Error::domain(format!(
            "smoothing needs at least {MIN_N} observations, got {}",
            x.len()
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::domain("smoother inputs must be finite"));
    }
    let sd = sample_sd(x);
    if !(sd > 0.0) {
        return Err(Error::domain("regressor is constant"));
    }
    Ok(sd)
}

/// Leave-one-out mean squared error at one bandwidth, or `None` when some
/// local system is singular or some leverage reaches 1.
fn exact_cv(sup: &Support, h: f64, n: usize) -> Option<f64> {
    let mut sse = 0.0;
    for (k, m) in moments_sliding(sup, h).iter().enumerate() {
        let loc = solve_local(m);
        if !loc.regular {
            return None;
        }
        let denom = 1.0 - loc.leverage;
        if !(denom > SINGULAR_RATIO) {
            return None;
        }
        // Σ_i (y_i − m)² over the tied group
        let rss = (sup.q[k] - 2.0 * loc.value * sup.s[k] + sup.c[k] * loc.value * loc.value).max(0.0);
        sse += rss / (denom * denom);
    }
    let cv = sse / n as f64;
    cv.is_finite().then_some(cv)
}

fn grid_locals(sup: &Support, h: f64) -> Vec<Local> {
    moments_grid(sup, h).iter().map(solve_local).collect()
}

fn grid_cv(locals: &[Local], x: &[f64], y: &[f64], loc: &[(usize, f64)]) -> Option<f64> {
    let mut sse = 0.0;
    for ((&yi, &(k, t)), _) in y.iter().zip(loc).zip(x) {
        let (a, b) = (&locals[k], &locals[k + 1]);
        // nodes carrying no data weight next to an observation make the
        // bandwidth unusable, as in the exact engine
        if !a.regular && t < 1.0 || !b.regular && t > 0.0 {
            return None;
        }
        let value = if t == 0.0 {
            a.value
        } else if t == 1.0 {
            b.value
        } else {
            (1.0 - t) * a.value + t * b.value
        };
        let lev = if t == 0.0 {
            a.leverage
        } else if t == 1.0 {
            b.leverage
        } else {
            (1.0 - t) * a.leverage + t * b.leverage
        };
        let denom = 1.0 - lev;
        if !(denom > SINGULAR_RATIO) {
            return None;
        }
        sse += ((yi - value) / denom).powi(2);
    }
    let cv = sse / y.len() as f64;
    cv.is_finite().then_some(cv)
}

/// Selects the bandwidth minimizing the CV score; ties go to the larger one.
fn select(bandwidths: &[f64], mut cv: impl FnMut(f64) -> Option<f64>) -> Result<(f64, f64)> {
    let mut best: Option<(f64, f64)> = None;
    for &h in bandwidths {
        if let Some(score) = cv(h) {
            if best.is_none_or(|(b, _)| score <= b) {
                best = Some((score, h));
            }
        }
    }
    best.map(|(s, h)| (h, s))
        .ok_or_else(|| Error::Numeric("every candidate bandwidth gave a singular local fit".into()))
}

/// Fits `E[y | x]` with the default configuration.
pub fn fit_mean(x: &[f64], y: &[f64]) -> Result<SmootherFit> {
    fit_mean_with(x, y, &SmootherConfig::default())
}

pub fn fit_mean_with(x: &[f64], y: &[f64], cfg: &SmootherConfig) -> Result<SmootherFit> {
    cfg.validate()?;
    let sd = check_inputs(x, y)?;
    let bandwidths = cfg.bandwidths(sd);
    let (sup, slot) = Support::distinct(x, y);
    if sup.u.len() <= cfg.exact_limit {
        let (h, score) = select(&bandwidths, |h| exact_cv(&sup, h, x.len()))?;
        Ok(finish_exact(x, y, sup, &slot, h, score))
    } else {
        let (grid, loc) = Support::binned(x, y, cfg.bins);
        let (h, score) = select(&bandwidths, |h| grid_cv(&grid_locals(&grid, h), x, y, &loc))?;
        Ok(finish_grid(x, y, &grid, &loc, h, score))
    }
}

/// Fits at a fixed bandwidth with the exact engine; the CV score is still
/// reported (NaN when undefined).
pub fn fit_mean_at(x: &[f64], y: &[f64], bandwidth: f64) -> Result<SmootherFit> {
    check_inputs(x, y)?;
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(Error::domain(format!("bandwidth must be positive, got {bandwidth}")));
    }
    let (sup, slot) = Support::distinct(x, y);
    let score = exact_cv(&sup, bandwidth, x.len()).unwrap_or(f64::NAN);
    Ok(finish_exact(x, y, sup, &slot, bandwidth, score))
}

fn finish_exact(x: &[f64], y: &[f64], sup: Support, slot: &[usize], h: f64, score: f64) -> SmootherFit {
    let at_support: Vec<f64> = moments_sliding(&sup, h)
        .iter()
        .zip(&sup.u)
        .map(|(m, &u)| {
            let loc = solve_local(m);
            if loc.value.is_nan() {
                nearest_mean(&sup, u)
            } else {
                loc.value
            }
        })
        .collect();
    let fitted: Vec<f64> = slot.iter().map(|&k| at_support[k]).collect();
    let residuals = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
    SmootherFit {
        x_train: x.to_vec(),
        y_train: y.to_vec(),
        bandwidth: h,
        fitted,
        residuals,
        loocv_score: score,
        engine: Engine::Exact,
        floor: None,
        predictor: Predictor::Exact { sup },
    }
}

fn finish_grid(x: &[f64], y: &[f64], grid: &Support, loc: &[(usize, f64)], h: f64, score: f64) -> SmootherFit {
    let locals = grid_locals(grid, h);
    // nodes without kernel mass take the nearest populated node's mean
    let populated: Vec<usize> = (0..grid.u.len()).filter(|&k| grid.c[k] > 0.0).collect();
    let values: Vec<f64> = locals
        .iter()
        .enumerate()
        .map(|(k, l)| {
            if l.value.is_nan() {
                let i = populated.partition_point(|&p| p < k);
                let cand = [i.checked_sub(1), (i < populated.len()).then_some(i)];
                let p = cand
                    .iter()
                    .flatten()
                    .map(|&i| populated[i])
                    .min_by_key(|&p| p.abs_diff(k))
                    .unwrap_or(0);
                grid.s[p] / grid.c[p]
            } else {
                l.value
            }
        })
        .collect();
    let n = values.len();
    let slopes = (locals[0].slope, locals[n - 1].slope);
    let fitted: Vec<f64> = loc
        .iter()
        .map(|&(k, t)| (1.0 - t) * values[k] + t * values[k + 1])
        .collect();
    let residuals = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
    SmootherFit {
        x_train: x.to_vec(),
        y_train: y.to_vec(),
        bandwidth: h,
        fitted,
        residuals,
        loocv_score: score,
        engine: Engine::Binned,
        floor: None,
        predictor: Predictor::Grid {
            nodes: grid.u.clone(),
            values,
            slopes,
        },
    }
}

/// Conditional variance `E[r² | x]` from the squared residuals of `fit`,
/// floored at `max(1e−10 · Var(y), 1e−300)`.
pub fn fit_variance(fit: &SmootherFit) -> Result<SmootherFit> {
    fit_variance_with(fit, &SmootherConfig::default())
}

pub fn fit_variance_with(fit: &SmootherFit, cfg: &SmootherConfig) -> Result<SmootherFit> {
    let vy = sample_sd(&fit.y_train).powi(2);
    let floor = (1e-10 * vy).max(1e-300);
    let r2: Vec<f64> = fit.residuals.iter().map(|r| r * r).collect();
    let mut v = if r2.iter().all(|&v| v == 0.0) {
        // nothing to smooth; every bandwidth reproduces zero
        let sd = check_inputs(&fit.x_train, &r2)?;
        fit_mean_at(&fit.x_train, &r2, cfg.grid_hi * sd)?
    } else {
        fit_mean_with(&fit.x_train, &r2, cfg)?
    };
    for f in &mut v.fitted {
        *f = f.max(floor);
    }
    v.residuals = v.y_train.iter().zip(&v.fitted).map(|(a, b)| a - b).collect();
    v.floor = Some(floor);
    Ok(v)
}

/// Mean squared residual.
pub fn residual_variance(fit: &SmootherFit) -> f64 {
    fit.residuals.iter().map(|r| r * r).sum::<f64>() / fit.residuals.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn normals(n: usize, seed: u64, stream: u64) -> Vec<f64> {
        let mut rng = substream(seed, stream);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    fn uniforms(n: usize, lo: f64, hi: f64, seed: u64) -> Vec<f64> {
        let mut rng = substream(seed, 9);
        (0..n).map(|_| rng.random_range(lo..hi)).collect()
    }

    #[test]
    fn reproduces_affine_functions_at_every_bandwidth() {
        let x = uniforms(300, -3.0, 3.0, 1);
        let y: Vec<f64> = x.iter().map(|v| 1.5 - 0.7 * v).collect();
        let cfg = SmootherConfig::default();
        for h in cfg.bandwidths(sample_sd(&x)) {
            let f = fit_mean_at(&x, &y, h).unwrap();
            for (a, b) in f.fitted.iter().zip(&y) {
                assert!((a - b).abs() < 1e-8, "h={h}");
            }
            assert!((f.predict(10.0) - (1.5 - 7.0)).abs() < 1e-7);
        }
    }

    #[test]
    fn constants_are_reproduced() {
        let x = uniforms(100, 0.0, 1.0, 2);
        let y = vec![4.25; 100];
        let f = fit_mean(&x, &y).unwrap();
        assert!(f.fitted.iter().all(|v| (v - 4.25).abs() < 1e-12));
        assert!(residual_variance(&f) < 1e-20);
    }

    #[test]
    fn recovers_a_line_and_a_sine() {
        let x = normals(500, 3, 0);
        let e = normals(500, 3, 1);
        let y: Vec<f64> = x.iter().zip(&e).map(|(a, b)| 2.0 * a + 0.1 * b).collect();
        let f = fit_mean(&x, &y).unwrap();
        let q: Vec<f64> = (0..41).map(|i| -2.0 + 0.1 * i as f64).collect();
        let rmse = (q.iter().map(|&v| (f.predict(v) - 2.0 * v).powi(2)).sum::<f64>() / q.len() as f64).sqrt();
        assert!(rmse < 0.05, "{rmse}");

        let x = uniforms(2000, -2.0, 2.0, 4);
        let e = normals(2000, 4, 1);
        let y: Vec<f64> = x.iter().zip(&e).map(|(a, b)| (3.0 * a).sin() + 0.3 * b).collect();
        let f = fit_mean(&x, &y).unwrap();
        let rmse = (x
            .iter()
            .zip(&f.fitted)
            .map(|(a, m)| (m - (3.0 * a).sin()).powi(2))
            .sum::<f64>()
            / 2000.0)
            .sqrt();
        assert!(rmse < 0.08, "{rmse}");
    }

    #[test]
    fn binned_engine_agrees_with_exact() {
        let x = uniforms(4000, -2.0, 2.0, 5);
        let e = normals(4000, 5, 1);
        let y: Vec<f64> = x.iter().zip(&e).map(|(a, b)| a * a + 0.2 * b).collect();
        let exact = fit_mean_with(
            &x,
            &y,
            &SmootherConfig {
                exact_limit: 10_000,
                ..Default::default()
            },
        )
        .unwrap();
        let binned = fit_mean_with(
            &x,
            &y,
            &SmootherConfig {
                exact_limit: 10,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(exact.engine, Engine::Exact);
        assert_eq!(binned.engine, Engine::Binned);
        let rel = (residual_variance(&exact) / residual_variance(&binned) - 1.0).abs();
        assert!(rel < 0.01, "{rel}");
        assert!((exact.predict(0.3) - binned.predict(0.3)).abs() < 0.02);
    }

    #[test]
    fn bandwidth_shrinks_with_n() {
        let pick = |n: usize| {
            let x = uniforms(n, -2.0, 2.0, 6);
            let e = normals(n, 6, 1);
            let y: Vec<f64> = x.iter().zip(&e).map(|(a, b)| (2.0 * a).sin() + 0.3 * b).collect();
            fit_mean(&x, &y).unwrap().bandwidth
        };
        assert!(pick(2000) < pick(200));
    }

    #[test]
    fn interpolates_as_bandwidth_vanishes() {
        let x = uniforms(50, 0.0, 1.0, 7);
        let y = normals(50, 7, 1);
        let f = fit_mean_at(&x, &y, 1e-4).unwrap();
        for (xi, yi) in x.iter().zip(&y) {
            assert!((f.predict(*xi) - yi).abs() < 1e-6);
        }
    }

    #[test]
    fn variance_fit_tracks_scale() {
        let n = 2000;
        let x = uniforms(n, -2.0, 2.0, 8);
        let e = normals(n, 8, 1);
        let homo: Vec<f64> = x.iter().zip(&e).map(|(a, b)| a + 0.5 * b).collect();
        let v = fit_variance(&fit_mean(&x, &homo).unwrap()).unwrap();
        for q in [-1.5, -0.5, 0.0, 0.7, 1.5] {
            let r = v.predict(q) / 0.25;
            assert!((0.7..1.3).contains(&r), "q={q} ratio={r}");
        }
        let het: Vec<f64> = x.iter().zip(&e).map(|(a, b)| a * b).collect();
        let v = fit_variance(&fit_mean(&x, &het).unwrap()).unwrap();
        let grid: Vec<f64> = (0..21).map(|i| i as f64 * 0.1).collect();
        let preds = v.predict_many(&grid);
        let increasing = preds.windows(2).filter(|w| w[1] > w[0]).count();
        assert!(increasing >= 17, "{preds:?}");
        let floor = v.floor.unwrap();
        assert!(v.fitted.iter().all(|&f| f >= floor));
    }

    #[test]
    fn zero_residuals_give_the_floor() {
        let x = uniforms(60, 0.0, 1.0, 9);
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v).collect();
        let m = fit_mean(&x, &y).unwrap();
        let mut m0 = m.clone();
        m0.residuals.iter_mut().for_each(|r| *r = 0.0);
        let v = fit_variance(&m0).unwrap();
        let floor = v.floor.unwrap();
        assert!(v.fitted.iter().all(|&f| f == floor));
    }

    #[test]
    fn ties_are_handled() {
        let x: Vec<f64> = (0..400).map(|i| (i % 40) as f64).collect();
        let e = normals(400, 10, 0);
        let y: Vec<f64> = x.iter().zip(&e).map(|(a, b)| 0.1 * a + b).collect();
        let f = fit_mean(&x, &y).unwrap();
        assert!(f.bandwidth > 0.0);
        assert!(f.fitted.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(fit_mean(&[1.0; 30], &[0.0; 30]).is_err());
        assert!(fit_mean(&[1.0, 2.0], &[0.0, 1.0]).is_err());
        let x: Vec<f64> = (0..30).map(f64::from).collect();
        assert!(fit_mean(&x, &x[..29]).is_err());
    }
}
