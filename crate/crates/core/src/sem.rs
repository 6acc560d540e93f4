//! Generative models: bivariate additive / location-scale noise models and
//! multivariate linear SEMs, with seeded samplers and the population moment
//! matrix of a linear SEM.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::substream;
use crate::specfun::{power_norm, NoiseSpec};

/// Floor applied to location-scale multipliers.
pub const SCALE_FLOOR: f64 = 1e-12;

/// Cause-to-effect map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Mechanism {
    Linear {
        beta: f64,
    },
    /// `β sign(x) |x|^ν / √V(ν)`.
    Power {
        beta: f64,
        nu: f64,
    },
    /// `β |x|^ν / √V(ν)`.
    EvenPower {
        beta: f64,
        nu: f64,
    },
}

impl Mechanism {
    pub fn validate(&self) -> Result<()> {
        let (beta, nu) = match *self {
            Mechanism::Linear { beta } => (beta, 1.0),
            Mechanism::Power { beta, nu } | Mechanism::EvenPower { beta, nu } => (beta, nu),
        };
        if !beta.is_finite() || !(nu.is_finite() && nu > 0.0) {
            return Err(Error::domain(format!("invalid mechanism {self:?}")));
        }
        Ok(())
    }

    pub fn beta(&self) -> f64 {
        match *self {
            Mechanism::Linear { beta } | Mechanism::Power { beta, .. } | Mechanism::EvenPower { beta, .. } => beta,
        }
    }

    pub fn nu(&self) -> f64 {
        match *self {
            Mechanism::Linear { .. } => 1.0,
            Mechanism::Power { nu, .. } | Mechanism::EvenPower { nu, .. } => nu,
        }
    }

    /// Multiplier `c` in `c·|x|^ν`.
    pub(crate) fn coefficient(&self) -> f64 {
        match *self {
            Mechanism::Linear { beta } => beta,
            Mechanism::Power { beta, nu } | Mechanism::EvenPower { beta, nu } => {
                beta / power_norm(nu).map(f64::sqrt).unwrap_or(f64::NAN)
            }
        }
    }

    pub fn is_even(&self) -> bool {
        matches!(self, Mechanism::EvenPower { .. })
    }

    pub fn is_odd(&self) -> bool {
        !self.is_even()
    }

    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Mechanism::Linear { beta } => beta * x,
            Mechanism::Power { nu, .. } => {
                let mag = self.coefficient() * x.abs().powf(nu);
                if x < 0.0 {
                    -mag
                } else {
                    mag
                }
            }
            Mechanism::EvenPower { nu, .. } => self.coefficient() * x.abs().powf(nu),
        }
    }

    /// Preimage of `y` on the branch `sign(x) = side` (side = ±1).
    ///
    /// For odd mechanisms the branch is implied by `y` and `side` is ignored;
    /// returns `None` when `y` is not attained on the branch.
    pub(crate) fn preimage(&self, y: f64, side: f64) -> Option<f64> {
        let c = self.coefficient();
        if c == 0.0 {
            return None;
        }
        let u = y / c;
        match *self {
            Mechanism::Linear { .. } => Some(u),
            Mechanism::Power { nu, .. } => {
                let mag = u.abs().powf(1.0 / nu);
                Some(if u < 0.0 { -mag } else { mag })
            }
            Mechanism::EvenPower { nu, .. } => {
                if u < 0.0 {
                    None
                } else {
                    Some(side * u.powf(1.0 / nu))
                }
            }
        }
    }
}

/// Bivariate model `X2 = f(X1) + g(X1)·ε2` (g ≡ 1 unless `scale_fn` is set).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BivariateAnm {
    pub cause: NoiseSpec,
    pub mechanism: Mechanism,
    pub noise: NoiseSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale_fn: Option<Mechanism>,
}

impl BivariateAnm {
    pub fn new(cause: NoiseSpec, mechanism: Mechanism, noise: NoiseSpec) -> Self {
        BivariateAnm {
            cause,
            mechanism,
            noise,
            scale_fn: None,
        }
    }

    pub fn with_scale(mut self, scale_fn: Mechanism) -> Self {
        self.scale_fn = Some(scale_fn);
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.cause.validate()?;
        self.noise.validate()?;
        self.mechanism.validate()?;
        if let Some(s) = self.scale_fn {
            s.validate()?;
        }
        Ok(())
    }

    pub fn scale(&self, x1: f64) -> f64 {
        self.scale_fn.map_or(1.0, |g| g.eval(x1).max(SCALE_FLOOR))
    }
}

/// Column-major numeric table.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl Dataset {
    pub fn new(names: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(Error::contract("one name per column required"));
        }
        if let Some(first) = columns.first() {
            if columns.iter().any(|c| c.len() != first.len()) {
                return Err(Error::contract("columns must have equal length"));
            }
        }
        Ok(Dataset { names, columns })
    }

    pub fn n_rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }
}

pub fn sample_bivariate(model: &BivariateAnm, n: usize, seed: u64) -> Result<Dataset> {
    model.validate()?;
    if n < 2 {
        return Err(Error::domain("need at least two observations"));
    }
    let mut cause_rng = substream(seed, 0);
    let mut noise_rng = substream(seed, 1);
    let x1: Vec<f64> = (0..n).map(|_| model.cause.draw(&mut cause_rng)).collect();
    let x2 = x1
        .iter()
        .map(|&x| model.mechanism.eval(x) + model.scale(x) * model.noise.draw(&mut noise_rng))
        .collect();
    Dataset::new(vec!["X1".into(), "X2".into()], vec![x1, x2])
}

/// Bijection on `{0, …, p−1}`; `order[k]` is the node placed k-th.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Permutation(Vec<usize>);

impl Permutation {
    pub fn new(order: Vec<usize>) -> Result<Self> {
        let p = order.len();
        let mut seen = vec![false; p];
        for &v in &order {
            if v >= p || std::mem::replace(&mut seen[v], true) {
                return Err(Error::contract(format!("{order:?} is not a permutation")));
            }
        }
        Ok(Permutation(order))
    }

    pub fn identity(p: usize) -> Self {
        Permutation((0..p).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn order(&self) -> &[usize] {
        &self.0
    }

    /// Position of each node in the order.
    pub fn positions(&self) -> Vec<usize> {
        let mut pos = vec![0; self.0.len()];
        for (k, &v) in self.0.iter().enumerate() {
            pos[v] = k;
        }
        pos
    }

    /// All `p!` permutations in lexicographic order.
    pub fn all(p: usize) -> Vec<Permutation> {
        let mut out = Vec::new();
        let mut cur: Vec<usize> = (0..p).collect();
        loop {
            out.push(Permutation(cur.clone()));
            // next lexicographic permutation
            let Some(i) = (1..p).rev().find(|&i| cur[i - 1] < cur[i]) else {
                break;
            };
            let j = (i..p).rev().find(|&j| cur[j] > cur[i - 1]).unwrap();
            cur.swap(i - 1, j);
            cur[i..].reverse();
        }
        out
    }
}

impl std::fmt::Display for Permutation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|v| (v + 1).to_string()).collect();
        write!(f, "{}", parts.join("-"))
    }
}

/// `X_j ← Σ_k β_jk X_k + E_j` with `coeffs[j][k] = β_jk`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSem {
    order: Permutation,
    coeffs: Vec<Vec<f64>>,
    noises: Vec<NoiseSpec>,
}

impl LinearSem {
    pub fn new(order: Permutation, coeffs: Vec<Vec<f64>>, noises: Vec<NoiseSpec>) -> Result<Self> {
        let p = noises.len();
        if order.len() != p || coeffs.len() != p || coeffs.iter().any(|r| r.len() != p) {
            return Err(Error::contract("order, coefficients and noises must agree on p"));
        }
        for n in &noises {
            n.validate()?;
        }
        let pos = order.positions();
        for (j, row) in coeffs.iter().enumerate() {
            for (k, &b) in row.iter().enumerate() {
                if !b.is_finite() {
                    return Err(Error::domain(format!("coefficient β[{j}][{k}] = {b}")));
                }
                if b != 0.0 && pos[k] >= pos[j] {
                    return Err(Error::contract(format!(
                        "edge {} -> {} violates the declared order",
                        k + 1,
                        j + 1
                    )));
                }
            }
        }
        Ok(LinearSem { order, coeffs, noises })
    }

    /// Chain `X1 → X2 → … → Xp` with the given edge weights.
    pub fn chain(betas: &[f64], noises: Vec<NoiseSpec>) -> Result<Self> {
        let p = noises.len();
        if betas.len() + 1 != p {
            return Err(Error::contract("a chain on p nodes needs p − 1 weights"));
        }
        let mut coeffs = vec![vec![0.0; p]; p];
        for (j, &b) in betas.iter().enumerate() {
            coeffs[j + 1][j] = b;
        }
        LinearSem::new(Permutation::identity(p), coeffs, noises)
    }

    /// Random DAG under a random order: each ordered pair carries an edge with
    /// probability `density`, weights uniform on ±[0.5, 1.5].
    pub fn random(p: usize, noises: Vec<NoiseSpec>, density: f64, seed: u64) -> Result<Self> {
        if noises.len() != p || p == 0 {
            return Err(Error::contract("one noise law per node required"));
        }
        let mut rng = substream(seed, 0);
        let mut order: Vec<usize> = (0..p).collect();
        for i in (1..p).rev() {
            let j = rng.random_range(0..=i);
            order.swap(i, j);
        }
        let mut coeffs = vec![vec![0.0; p]; p];
        for a in 0..p {
            for b in a + 1..p {
                if rng.random::<f64>() < density {
                    let mag = 0.5 + rng.random::<f64>();
                    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                    coeffs[order[b]][order[a]] = sign * mag;
                }
            }
        }
        LinearSem::new(Permutation::new(order)?, coeffs, noises)
    }

    pub fn p(&self) -> usize {
        self.noises.len()
    }

    pub fn order(&self) -> &Permutation {
        &self.order
    }

    pub fn coeffs(&self) -> &[Vec<f64>] {
        &self.coeffs
    }

    pub fn noises(&self) -> &[NoiseSpec] {
        &self.noises
    }

    pub fn parents(&self, j: usize) -> Vec<usize> {
        (0..self.p()).filter(|&k| self.coeffs[j][k] != 0.0).collect()
    }

    /// True when every edge points forward in `perm`.
    pub fn is_conformable(&self, perm: &Permutation) -> bool {
        let pos = perm.positions();
        (0..self.p()).all(|j| self.parents(j).iter().all(|&k| pos[k] < pos[j]))
    }

    /// Relabels nodes: node `j` becomes `relabel[j]`.
    pub fn relabeled(&self, relabel: &Permutation) -> Result<Self> {
        let p = self.p();
        let map = relabel.order();
        let mut coeffs = vec![vec![0.0; p]; p];
        let mut noises = self.noises.clone();
        for j in 0..p {
            noises[map[j]] = self.noises[j];
            for k in 0..p {
                coeffs[map[j]][map[k]] = self.coeffs[j][k];
            }
        }
        let order = self.order.order().iter().map(|&v| map[v]).collect();
        LinearSem::new(Permutation::new(order)?, coeffs, noises)
    }

    /// Total effect matrix `(I − B)⁻¹`, built row by row in topological order.
    pub fn total_effects(&self) -> DMatrix<f64> {
        let p = self.p();
        let mut m = DMatrix::<f64>::zeros(p, p);
        for &j in self.order.order() {
            m[(j, j)] = 1.0;
            for k in 0..p {
                let b = self.coeffs[j][k];
                if b != 0.0 {
                    for c in 0..p {
                        m[(j, c)] += b * m[(k, c)];
                    }
                }
            }
        }
        m
    }
}

pub fn sample_linear_sem(sem: &LinearSem, n: usize, seed: u64) -> Result<Dataset> {
    if n < 2 {
        return Err(Error::domain("need at least two observations"));
    }
    let p = sem.p();
    let mut columns = vec![Vec::new(); p];
    for j in 0..p {
        let mut rng = substream(seed, j as u64);
        columns[j] = (0..n).map(|_| sem.noises[j].draw(&mut rng)).collect();
    }
    for &j in sem.order.order() {
        for k in sem.parents(j) {
            let b = sem.coeffs[j][k];
            let (src, dst) = if k < j {
                let (lo, hi) = columns.split_at_mut(j);
                (&lo[k], &mut hi[0])
            } else {
                let (lo, hi) = columns.split_at_mut(k);
                (&hi[0], &mut lo[j])
            };
            for (d, s) in dst.iter_mut().zip(src) {
                *d += b * s;
            }
        }
    }
    let names = (1..=p).map(|j| format!("X{j}")).collect();
    Dataset::new(names, columns)
}

/// `Σ = (I − B)⁻¹ D (I − B)⁻ᵀ`.
pub fn population_covariance(sem: &LinearSem) -> DMatrix<f64> {
    let m = sem.total_effects();
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        sem.p(),
        sem.noises.iter().map(NoiseSpec::variance),
    ));
    let s = &m * d * m.transpose();
    (&s + s.transpose()) * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corr(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len() as f64;
        let mx = x.iter().sum::<f64>() / n;
        let my = y.iter().sum::<f64>() / n;
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for (a, b) in x.iter().zip(y) {
            sxy += (a - mx) * (b - my);
            sxx += (a - mx) * (a - mx);
            syy += (b - my) * (b - my);
        }
        sxy / (sxx * syy).sqrt()
    }

    fn var_with_se(x: &[f64]) -> (f64, f64) {
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        let v = x.iter().map(|a| (a - m).powi(2)).sum::<f64>() / (n - 1.0);
        let m4 = x.iter().map(|a| (a - m).powi(4)).sum::<f64>() / n;
        (v, ((m4 - v * v) / n).sqrt())
    }

    #[test]
    fn mechanism_symmetries_are_exact() {
        let odd = Mechanism::Power { beta: 1.7, nu: 1.32 };
        let even = Mechanism::EvenPower { beta: -0.4, nu: 2.5 };
        for &x in &[0.0, 1e-9, 0.3, 1.0, 2.7, 13.0] {
            assert_eq!(odd.eval(-x), -odd.eval(x));
            assert_eq!(even.eval(-x), even.eval(x));
        }
        let lin = Mechanism::Linear { beta: -2.5 };
        let pow1 = Mechanism::Power { beta: -2.5, nu: 1.0 };
        for &x in &[-3.1, -0.2, 0.0, 0.7, 5.5] {
            assert_eq!(lin.eval(x), pow1.eval(x));
        }
    }

    #[test]
    fn power_preimage_inverts() {
        let m = Mechanism::Power { beta: 0.5, nu: 2.3 };
        for &x in &[-2.0, -0.1, 0.4, 3.3] {
            let back = m.preimage(m.eval(x), 1.0).unwrap();
            assert!((back - x).abs() < 1e-12);
        }
        let e = Mechanism::EvenPower { beta: 1.0, nu: 2.0 };
        assert!(e.preimage(-1.0, 1.0).is_none());
        assert!((e.preimage(e.eval(-1.5), -1.0).unwrap() + 1.5).abs() < 1e-12);
    }

    #[test]
    fn independence_at_zero_beta() {
        let m = BivariateAnm::new(
            NoiseSpec::gaussian(1.0),
            Mechanism::Linear { beta: 0.0 },
            NoiseSpec::uniform(1.0),
        );
        let d = sample_bivariate(&m, 100_000, 3).unwrap();
        assert!(corr(d.column(0), d.column(1)).abs() < 0.02);
    }

    #[test]
    fn power_model_variance_depends_only_on_beta() {
        for &(beta, nu) in &[(0.5, 0.6), (2.0, 1.8), (1.0, 3.0)] {
            let m = BivariateAnm::new(
                NoiseSpec::gaussian(1.0),
                Mechanism::Power { beta, nu },
                NoiseSpec::uniform(1.0),
            );
            let d = sample_bivariate(&m, 400_000, 17).unwrap();
            let (v, se) = var_with_se(d.column(1));
            let target = beta * beta + 1.0 / 3.0;
            assert!((v - target).abs() < 3.0 * se, "β={beta} ν={nu}: {v} vs {target} ± {se}");
        }
    }

    #[test]
    fn power_one_and_linear_give_identical_samples() {
        let a = BivariateAnm::new(
            NoiseSpec::gaussian(1.0),
            Mechanism::Power { beta: 1.3, nu: 1.0 },
            NoiseSpec::chi1(1.0),
        );
        let b = BivariateAnm {
            mechanism: Mechanism::Linear { beta: 1.3 },
            ..a
        };
        assert_eq!(
            sample_bivariate(&a, 1000, 9).unwrap(),
            sample_bivariate(&b, 1000, 9).unwrap()
        );
    }

    #[test]
    fn location_scale_sampling_uses_floored_scale() {
        let m = BivariateAnm::new(
            NoiseSpec::uniform(1.0),
            Mechanism::Linear { beta: 0.0 },
            NoiseSpec::gaussian(1.0),
        )
        .with_scale(Mechanism::Linear { beta: 1.0 });
        let d = sample_bivariate(&m, 2000, 1).unwrap();
        for (x, y) in d.column(0).iter().zip(d.column(1)) {
            if *x <= 0.0 {
                assert!(y.abs() < 1e-10);
            }
        }
    }

    #[test]
    fn permutation_validation_and_enumeration() {
        assert!(Permutation::new(vec![0, 0, 1]).is_err());
        assert!(Permutation::new(vec![0, 3, 1]).is_err());
        let all = Permutation::all(4);
        assert_eq!(all.len(), 24);
        let set: std::collections::HashSet<_> = all.iter().cloned().collect();
        assert_eq!(set.len(), 24);
        assert_eq!(Permutation::new(vec![2, 0, 1]).unwrap().to_string(), "3-1-2");
    }

    #[test]
    fn rejects_edges_against_the_order() {
        let coeffs = vec![vec![0.0, 1.0], vec![0.0, 0.0]];
        let e = LinearSem::new(Permutation::identity(2), coeffs, vec![NoiseSpec::uniform(1.0); 2]);
        assert!(matches!(e, Err(Error::Contract(_))));
    }

    #[test]
    fn covariance_closed_forms() {
        let empty = LinearSem::new(
            Permutation::identity(3),
            vec![vec![0.0; 3]; 3],
            vec![NoiseSpec::uniform(1.0), NoiseSpec::gaussian(2.0), NoiseSpec::chi1(1.0)],
        )
        .unwrap();
        let s = population_covariance(&empty);
        let expect = [1.0 / 3.0, 2.0, 2.0];
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { expect[i] } else { 0.0 };
                assert!((s[(i, j)] - e).abs() < 1e-15);
            }
        }
        let (beta, v1, v2) = (1.7, 0.5, 0.25);
        let chain = LinearSem::chain(&[beta], vec![NoiseSpec::gaussian(v1), NoiseSpec::gaussian(v2)]).unwrap();
        let s = population_covariance(&chain);
        assert!((s[(0, 0)] - v1).abs() < 1e-15);
        assert!((s[(0, 1)] - beta * v1).abs() < 1e-15);
        assert!((s[(1, 0)] - beta * v1).abs() < 1e-15);
        assert!((s[(1, 1)] - (beta * beta * v1 + v2)).abs() < 1e-14);
    }

    #[test]
    fn chain_variances_by_sampling() {
        let two = LinearSem::chain(&[1.0], vec![NoiseSpec::uniform(1.0); 2]).unwrap();
        let d = sample_linear_sem(&two, 200_000, 4).unwrap();
        let (v, se) = var_with_se(d.column(1));
        assert!((v - 2.0 / 3.0).abs() < 3.0 * se);
        let three = LinearSem::chain(&[1.0, 1.0], vec![NoiseSpec::uniform(1.0); 3]).unwrap();
        let d = sample_linear_sem(&three, 200_000, 5).unwrap();
        let (v, se) = var_with_se(d.column(2));
        assert!((v - 1.0).abs() < 3.0 * se);
    }

    #[test]
    fn empty_graph_columns_are_uncorrelated() {
        let sem = LinearSem::new(
            Permutation::identity(3),
            vec![vec![0.0; 3]; 3],
            vec![NoiseSpec::uniform(1.0); 3],
        )
        .unwrap();
        let d = sample_linear_sem(&sem, 100_000, 8).unwrap();
        for a in 0..3 {
            for b in a + 1..3 {
                assert!(corr(d.column(a), d.column(b)).abs() < 0.02);
            }
        }
    }

    #[test]
    fn relabeling_permutes_the_covariance() {
        let sem = LinearSem::random(
            4,
            vec![
                NoiseSpec::uniform(1.0),
                NoiseSpec::gaussian(0.5),
                NoiseSpec::chi1(2.0),
                NoiseSpec::uniform(0.3),
            ],
            0.8,
            21,
        )
        .unwrap();
        let relabel = Permutation::new(vec![2, 0, 3, 1]).unwrap();
        let moved = sem.relabeled(&relabel).unwrap();
        let s = population_covariance(&sem);
        let t = population_covariance(&moved);
        let map = relabel.order();
        for i in 0..4 {
            for j in 0..4 {
                assert!((s[(i, j)] - t[(map[i], map[j])]).abs() < 1e-13);
            }
        }
    }
}
