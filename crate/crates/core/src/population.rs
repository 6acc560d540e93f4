//! Population gaps Δ and exp(Δ)² for bivariate models.
//!
//! For `X2 = f(X1) + ε2` the forward (causal) fit has residual variances
//! `Var(X1)` and `Var(ε2)`; the backward fit regresses `X1` on `X2` with the
//! conditional mean, leaving `E[Var(X1 | X2)]`, and keeps `Var(X2)` for the
//! root. Everything here reduces to one outer integral over `x2` of the
//! conditional moments of `X1` given `X2 = x2`:
//!
//! * Gaussian cause, uniform noise, odd mechanism: `X1 | X2` is a truncated
//!   normal and the inner moments are closed form;
//! * everything else: the joint density slice is integrated directly
//!   ("brute force"), split into pieces on which `f` is monotone.
//!
//! The heteroskedastic flavor replaces `log E[Var(X1|X2)]` with
//! `E[log Var(X1|X2)]`.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{integrate, Tolerance};
use crate::sem::{BivariateAnm, Mechanism};
use crate::specfun::{normal_interval_mass, truncated_normal_moments, NoiseSpec, MASS_FLOOR};

/// Lower clamp for conditional variances before taking logs.
pub const VARIANCE_CLAMP: f64 = 1e-14;
const GAUSSIAN_CAUSE_SDS: f64 = 12.0;
const OUTER_SDS: f64 = 10.0;
const OUTER_MASS_TARGET: f64 = 1.0 - 1e-10;
/// Gaussian noise is cut at this many sd inside a slice.
const GAUSSIAN_NOISE_SDS: f64 = 12.0;
/// Upper cut of the χ²₁ variate inside a slice; the tail beyond is ~1e-27.
const CHI_UPPER: f64 = 120.0;

/// Noise support truncated to where the density matters, so slice integrals
/// only see the region around the peak.
fn noise_window(noise: &NoiseSpec) -> (f64, f64) {
    match *noise {
        NoiseSpec::Uniform { lo, hi } => (lo, hi),
        NoiseSpec::Gaussian { mean, variance } => {
            let w = GAUSSIAN_NOISE_SDS * variance.sqrt();
            (mean - w, mean + w)
        }
        NoiseSpec::Chi1Centered { scale } => (-1.0 / scale, (CHI_UPPER - 1.0) / scale),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Fit {
    #[serde(rename = "homo")]
    Homoskedastic,
    #[serde(rename = "het")]
    Heteroskedastic,
}

impl Fit {
    pub fn as_str(&self) -> &'static str {
        match self {
            Fit::Homoskedastic => "homo",
            Fit::Heteroskedastic => "het",
        }
    }
}

impl fmt::Display for Fit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Fit {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "homo" | "homoskedastic" => Ok(Fit::Homoskedastic),
            "het" | "heteroskedastic" => Ok(Fit::Heteroskedastic),
            _ => Err(Error::domain(format!("unknown fit flavor '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapMethod {
    ClosedForm,
    TruncatedGaussianQuadrature,
    BruteForceQuadrature,
}

impl GapMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            GapMethod::ClosedForm => "closed_form",
            GapMethod::TruncatedGaussianQuadrature => "truncated_gaussian_quadrature",
            GapMethod::BruteForceQuadrature => "brute_force_quadrature",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GapDiagnostics {
    /// Outer grid points whose conditional variance hit [`VARIANCE_CLAMP`].
    pub clamped_points: usize,
    pub outer_subdivisions: usize,
    pub outer_range: (f64, f64),
    /// Integrated density of X2 over the outer range.
    pub mass: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    /// (σ1, σ2) of the causal fit.
    pub sigma_fwd: [f64; 2],
    /// (σ1, σ2) of the anti-causal fit; for the heteroskedastic flavor the
    /// first entry is `exp(E[log Var(X1|X2)] / 2)`.
    pub sigma_bwd: [f64; 2],
    pub delta: f64,
    pub exp_delta_sq: f64,
    pub fit: Fit,
    pub method: GapMethod,
    pub diagnostics: GapDiagnostics,
}

impl GapReport {
    fn from_log_variances(
        fwd: [f64; 2],
        bwd: [f64; 2],
        fit: Fit,
        method: GapMethod,
        diagnostics: GapDiagnostics,
    ) -> Self {
        let delta = 0.5 * (bwd[0] + bwd[1] - fwd[0] - fwd[1]);
        GapReport {
            sigma_fwd: [(0.5 * fwd[0]).exp(), (0.5 * fwd[1]).exp()],
            sigma_bwd: [(0.5 * bwd[0]).exp(), (0.5 * bwd[1]).exp()],
            delta,
            exp_delta_sq: (2.0 * delta).exp(),
            fit,
            method,
            diagnostics,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RangeRule {
    /// Exact support when bounded, otherwise a tail rule.
    Auto,
    Explicit {
        lo: f64,
        hi: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub inner_abs_tol: f64,
    pub inner_rel_tol: f64,
    pub outer_range: RangeRule,
    pub inner_range: RangeRule,
    pub max_subdivisions: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig {
            abs_tol: 1e-10,
            rel_tol: 1e-8,
            inner_abs_tol: 1e-9,
            inner_rel_tol: 1e-9,
            outer_range: RangeRule::Auto,
            inner_range: RangeRule::Auto,
            max_subdivisions: 2000,
        }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = [self.abs_tol, self.rel_tol, self.inner_abs_tol, self.inner_rel_tol]
            .iter()
            .all(|t| t.is_finite() && *t > 0.0)
            && self.max_subdivisions >= 1;
        let range_ok = |r: &RangeRule| match *r {
            RangeRule::Auto => true,
            RangeRule::Explicit { lo, hi } => lo.is_finite() && hi.is_finite() && lo < hi,
        };
        if ok && range_ok(&self.outer_range) && range_ok(&self.inner_range) {
            Ok(())
        } else {
            Err(Error::domain(format!("invalid quadrature configuration {self:?}")))
        }
    }

    fn outer_tol(&self) -> Tolerance {
        Tolerance::new(self.abs_tol, self.rel_tol, self.max_subdivisions)
    }

    fn inner_tol(&self) -> Tolerance {
        Tolerance::new(self.inner_abs_tol, self.inner_rel_tol, self.max_subdivisions)
    }
}

/// Closed-form gap for `X2 = βX1 + ε2`, `X1, ε2 ~ U[−1, 1]`:
/// `exp(Δ)² = (γ² + 1)(2γ − 1) / (2γ³)` with `γ = max(|β|, 1/|β|)`.
pub fn ratio_uniform_linear(beta: f64) -> Result<GapReport> {
    if !beta.is_finite() || beta == 0.0 {
        return Err(Error::domain(format!(
            "backward model needs a finite nonzero β, got {beta}"
        )));
    }
    let b = beta.abs();
    let third_ln = (1.0f64 / 3.0).ln();
    // E[Var(X1 | X2)]
    let ln_cond_var = if b >= 1.0 {
        (2.0 * b - 1.0).ln() - 6f64.ln() - 3.0 * b.ln()
    } else {
        (2.0 - b).ln() - 6f64.ln()
    };
    let ln_var_x2 = third_ln + b.mul_add(b, 1.0).ln();
    Ok(GapReport::from_log_variances(
        [third_ln, third_ln],
        [ln_cond_var, ln_var_x2],
        Fit::Homoskedastic,
        GapMethod::ClosedForm,
        GapDiagnostics::default(),
    ))
}

/// `r(γ)` evaluated in log space.
pub fn uniform_ratio(gamma: f64) -> f64 {
    ((gamma.mul_add(gamma, 1.0)).ln() + (2.0 * gamma - 1.0).ln() - 2f64.ln() - 3.0 * gamma.ln()).exp()
}

/// Conditional moments of `X1` given `X2 = x2`, plus the density of `X2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionalStats {
    pub mean: f64,
    pub variance: f64,
    pub density: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Path {
    Truncated,
    BruteForce,
    /// β = 0: X1 independent of X2.
    Independent,
}

struct Backward<'a> {
    model: &'a BivariateAnm,
    cfg: &'a QuadratureConfig,
    path: Path,
    /// Pieces of the cause range on which the mechanism is monotone.
    pieces: Vec<(f64, f64)>,
    /// Whether each piece end is a true support boundary (not a clamp).
    hard_ends: (bool, bool),
}

#[derive(Debug, Clone, Copy)]
struct Slice {
    density: f64,
    mean: f64,
    variance: f64,
}

impl<'a> Backward<'a> {
    fn new(model: &'a BivariateAnm, cfg: &'a QuadratureConfig) -> Result<Self> {
        model.validate()?;
        cfg.validate()?;
        if model.scale_fn.is_some() {
            return Err(Error::Unsupported(
                "population gaps are computed for additive (scale-free) models".into(),
            ));
        }
        let (lo, hi, hard_ends) = match (model.cause, cfg.inner_range) {
            (NoiseSpec::Chi1Centered { .. }, _) => {
                return Err(Error::Unsupported("population gaps need a symmetric cause law".into()))
            }
            (_, RangeRule::Explicit { lo, hi }) => (lo, hi, (false, false)),
            (NoiseSpec::Uniform { lo, hi }, RangeRule::Auto) => (lo, hi, (true, true)),
            (NoiseSpec::Gaussian { variance, .. }, RangeRule::Auto) => {
                let r = GAUSSIAN_CAUSE_SDS * variance.sqrt();
                (-r, r, (false, false))
            }
        };
        let pieces = if lo < 0.0 && hi > 0.0 {
            vec![(lo, 0.0), (0.0, hi)]
        } else {
            vec![(lo, hi)]
        };
        let path = if model.mechanism.coefficient() == 0.0 {
            Path::Independent
        } else if matches!(model.cause, NoiseSpec::Gaussian { .. })
            && matches!(model.noise, NoiseSpec::Uniform { .. })
            && model.mechanism.is_odd()
            && cfg.inner_range == RangeRule::Auto
        {
            Path::Truncated
        } else {
            Path::BruteForce
        };
        Ok(Backward {
            model,
            cfg,
            path,
            pieces,
            hard_ends,
        })
    }

    fn method(&self) -> GapMethod {
        match self.path {
            Path::Truncated => GapMethod::TruncatedGaussianQuadrature,
            Path::BruteForce | Path::Independent => GapMethod::BruteForceQuadrature,
        }
    }

    fn slice(&self, x2: f64) -> Result<Slice> {
        match self.path {
            Path::Truncated => self.truncated_slice(x2),
            Path::BruteForce => self.brute_force_slice(x2),
            Path::Independent => Ok(Slice {
                density: self.model.noise.density(x2),
                mean: 0.0,
                variance: self.model.cause.variance(),
            }),
        }
    }

    /// x1-interval mapped from `f(x1) ∈ [y_lo, y_hi]` on a monotone piece,
    /// with flags telling which x end corresponds to the `y_hi` bound.
    fn preimage_interval(&self, piece: (f64, f64), y_lo: f64, y_hi: f64) -> Option<(f64, f64, bool)> {
        let mech = &self.model.mechanism;
        let (l, r) = piece;
        let (fl, fr) = (mech.eval(l), mech.eval(r));
        let (ymin, ymax) = if fl <= fr { (fl, fr) } else { (fr, fl) };
        let ya = y_lo.max(ymin);
        let yb = y_hi.min(ymax);
        if !(ya < yb) {
            return None;
        }
        let side = if r <= 0.0 { -1.0 } else { 1.0 };
        let to_x = |y: f64| {
            if y == fl {
                l
            } else if y == fr {
                r
            } else {
                mech.preimage(y, side).unwrap_or(l).clamp(l, r)
            }
        };
        let (xa, xb) = (to_x(ya), to_x(yb));
        // true when the x end produced by y_hi is the right end
        let hi_on_right = xb >= xa;
        let (lo, hi) = if xa <= xb { (xa, xb) } else { (xb, xa) };
        if !(lo < hi) {
            return None;
        }
        Some((lo, hi, hi_on_right))
    }

    fn truncated_slice(&self, x2: f64) -> Result<Slice> {
        let (lo, hi) = self.model.noise.support();
        let sd = self.model.cause.std_dev();
        let mech = &self.model.mechanism;
        let a = mech.preimage(x2 - hi, 1.0).unwrap_or(f64::NAN);
        let b = mech.preimage(x2 - lo, 1.0).unwrap_or(f64::NAN);
        let (za, zb) = if a <= b { (a / sd, b / sd) } else { (b / sd, a / sd) };
        let mass = normal_interval_mass(za, zb);
        if !(mass >= MASS_FLOOR) || !(za < zb) {
            return Ok(Slice {
                density: 0.0,
                mean: 0.0,
                variance: 0.0,
            });
        }
        match truncated_normal_moments(za, zb) {
            Ok((m, v)) => Ok(Slice {
                density: mass / (hi - lo),
                mean: sd * m,
                variance: sd * sd * v,
            }),
            Err(Error::DegenerateInterval { .. }) => Ok(Slice {
                density: 0.0,
                mean: 0.0,
                variance: 0.0,
            }),
            Err(e) => Err(e),
        }
    }

    fn brute_force_slice(&self, x2: f64) -> Result<Slice> {
        let model = self.model;
        let (el, eh) = noise_window(&model.noise);
        let singular_low = matches!(model.noise, NoiseSpec::Chi1Centered { .. });
        // x1 sub-intervals where the joint density is positive
        let mut spans: Vec<(f64, f64, Option<bool>)> = Vec::with_capacity(2);
        for &piece in &self.pieces {
            // f(x1) must lie in [x2 − eh, x2 − el]; the x2 − el end is where
            // the noise density sits at its lower support point.
            if let Some((lo, hi, hi_on_right)) = self.preimage_interval(piece, x2 - eh, x2 - el) {
                let active = x2 - el < {
                    let (fl, fr) = (model.mechanism.eval(piece.0), model.mechanism.eval(piece.1));
                    fl.max(fr)
                };
                let sing = (singular_low && active).then_some(hi_on_right);
                spans.push((lo, hi, sing));
            }
        }
        if spans.is_empty() {
            return Ok(Slice {
                density: 0.0,
                mean: 0.0,
                variance: 0.0,
            });
        }
        let shift = 0.5 * (spans[0].0 + spans[spans.len() - 1].1);
        let mut m = [0.0; 3];
        for &(lo, hi, sing) in &spans {
            let joint = |x1: f64| {
                let d = model.cause.density(x1) * model.noise.density(x2 - model.mechanism.eval(x1));
                let t = x1 - shift;
                [d, d * t, d * t * t]
            };
            let part = match sing {
                None => integrate(joint, &[lo, hi], self.cfg.inner_tol(), "conditional slice")?,
                Some(right) => {
                    // x = end ∓ u², dx = 2u du removes the inverse-sqrt singularity
                    let width = hi - lo;
                    let sub = |u: f64| {
                        let x1 = if right { hi - u * u } else { lo + u * u };
                        let v = joint(x1);
                        [2.0 * u * v[0], 2.0 * u * v[1], 2.0 * u * v[2]]
                    };
                    integrate(sub, &[0.0, width.sqrt()], self.cfg.inner_tol(), "conditional slice")?
                }
            };
            for c in 0..3 {
                m[c] += part.value[c];
            }
        }
        if !(m[0] > 0.0) {
            return Ok(Slice {
                density: 0.0,
                mean: 0.0,
                variance: 0.0,
            });
        }
        let mean = m[1] / m[0];
        Ok(Slice {
            density: m[0],
            mean: shift + mean,
            variance: (m[2] / m[0] - mean * mean).max(0.0),
        })
    }

    /// Image of the cause range under the mechanism plus the noise support.
    fn support(&self) -> (f64, f64) {
        let mech = &self.model.mechanism;
        let mut fmin = f64::INFINITY;
        let mut fmax = f64::NEG_INFINITY;
        for &(l, r) in &self.pieces {
            for x in [l, r] {
                let y = mech.eval(x);
                fmin = fmin.min(y);
                fmax = fmax.max(y);
            }
        }
        let (el, eh) = self.model.noise.support();
        let lo = if self.hard_ends.0 && self.hard_ends.1 {
            fmin + el
        } else {
            f64::NEG_INFINITY
        };
        let hi = if self.hard_ends.0 && self.hard_ends.1 {
            fmax + eh
        } else {
            f64::INFINITY
        };
        // one-sided noise support still bounds X2 from below for an even map
        let lo = if lo.is_infinite() && el.is_finite() && mech.is_even() {
            if mech.coefficient() > 0.0 {
                fmin.min(0.0) + el
            } else {
                lo
            }
        } else {
            lo
        };
        (lo, hi)
    }

    fn breakpoints(&self, lo: f64, hi: f64) -> Vec<f64> {
        let mech = &self.model.mechanism;
        let (el, eh) = self.model.noise.support();
        let mut xs = vec![0.0];
        if self.hard_ends.0 {
            xs.push(self.pieces[0].0);
        }
        if self.hard_ends.1 {
            xs.push(self.pieces[self.pieces.len() - 1].1);
        }
        let mut pts = vec![lo, hi];
        for x in xs {
            for e in [el, eh] {
                let p = mech.eval(x) + e;
                if p.is_finite() && p > lo && p < hi {
                    pts.push(p);
                }
            }
        }
        pts
    }
}

/// Mean and second moment of `f(X1)`.
fn mechanism_moments(cause: &NoiseSpec, mech: &Mechanism) -> Result<(f64, f64)> {
    let c = mech.coefficient();
    let nu = mech.nu();
    let unsupported = || Error::Unsupported("mechanism moments need a symmetric cause law".into());
    let second = c * c * cause.abs_moment(2.0 * nu).ok_or_else(unsupported)?;
    let first = if mech.is_even() {
        c * cause.abs_moment(nu).ok_or_else(unsupported)?
    } else {
        0.0
    };
    Ok((first, second))
}

/// `Var(X2)` for an additive model with a symmetric cause.
pub fn effect_variance(model: &BivariateAnm) -> Result<f64> {
    let (m1, m2) = mechanism_moments(&model.cause, &model.mechanism)?;
    Ok((m2 - m1 * m1).max(0.0) + model.noise.variance())
}

/// `E[X1 | X2 = x2]`, `Var(X1 | X2 = x2)` and `f_{X2}(x2)`.
pub fn backward_conditional_stats(model: &BivariateAnm, cfg: &QuadratureConfig, x2: f64) -> Result<ConditionalStats> {
    let bw = Backward::new(model, cfg)?;
    let s = bw.slice(x2)?;
    if !(s.density > 0.0) {
        return Err(Error::ZeroDensity(x2));
    }
    Ok(ConditionalStats {
        mean: s.mean,
        variance: s.variance,
        density: s.density,
    })
}

struct OuterIntegrals {
    mass: f64,
    mean_var: f64,
    mean_log_var: f64,
    clamped: usize,
    subdivisions: usize,
    range: (f64, f64),
}

fn outer_integrals(bw: &Backward<'_>) -> Result<OuterIntegrals> {
    let run = |lo: f64, hi: f64| -> Result<OuterIntegrals> {
        let mut clamped = 0usize;
        let mut failure: Option<Error> = None;
        let pts = bw.breakpoints(lo, hi);
        let res = integrate(
            |x2| match bw.slice(x2) {
                Ok(s) if s.density > 0.0 => {
                    let v = if s.variance < VARIANCE_CLAMP {
                        clamped += 1;
                        VARIANCE_CLAMP
                    } else {
                        s.variance
                    };
                    [s.density, s.density * s.variance, s.density * v.ln()]
                }
                Ok(_) => [0.0; 3],
                Err(e) => {
                    failure.get_or_insert(e);
                    [0.0; 3]
                }
            },
            &pts,
            bw.cfg.outer_tol(),
            "outer integral over x2",
        );
        if let Some(e) = failure {
            return Err(e);
        }
        let res = res?;
        let mass = res.value[0];
        Ok(OuterIntegrals {
            mass,
            mean_var: res.value[1] / mass,
            mean_log_var: res.value[2] / mass,
            clamped,
            subdivisions: res.subdivisions,
            range: (lo, hi),
        })
    };

    if let RangeRule::Explicit { lo, hi } = bw.cfg.outer_range {
        return run(lo, hi);
    }
    let (slo, shi) = bw.support();
    if slo.is_finite() && shi.is_finite() {
        return run(slo, shi);
    }
    let (m1, _) = mechanism_moments(&bw.model.cause, &bw.model.mechanism)?;
    let center = m1;
    let mut half = OUTER_SDS * effect_variance(bw.model)?.sqrt();
    for _ in 0..8 {
        let lo = (center - half).max(slo);
        let hi = (center + half).min(shi);
        let out = run(lo, hi)?;
        if out.mass >= OUTER_MASS_TARGET {
            return Ok(out);
        }
        half *= 1.5;
    }
    Err(Error::Numeric(
        "outer range expansion did not capture enough mass".into(),
    ))
}

/// Population gap of `model` for the chosen fit flavor.
pub fn population_gap(model: &BivariateAnm, fit: Fit, cfg: &QuadratureConfig) -> Result<GapReport> {
    let bw = Backward::new(model, cfg)?;
    let ln_var_x1 = model.cause.variance().ln();
    let ln_var_eps = model.noise.variance().ln();
    let ln_var_x2 = effect_variance(model)?.ln();
    if bw.path == Path::Independent {
        return Ok(GapReport::from_log_variances(
            [ln_var_x1, ln_var_eps],
            [ln_var_x1, ln_var_x2],
            fit,
            GapMethod::ClosedForm,
            GapDiagnostics::default(),
        ));
    }
    let out = outer_integrals(&bw)?;
    let ln_cond = match fit {
        Fit::Homoskedastic => {
            if !(out.mean_var > 0.0) {
                return Err(Error::Numeric("degenerate conditional variance".into()));
            }
            out.mean_var.ln()
        }
        Fit::Heteroskedastic => out.mean_log_var,
    };
    Ok(GapReport::from_log_variances(
        [ln_var_x1, ln_var_eps],
        [ln_cond, ln_var_x2],
        fit,
        bw.method(),
        GapDiagnostics {
            clamped_points: out.clamped,
            outer_subdivisions: out.subdivisions,
            outer_range: out.range,
            mass: out.mass,
        },
    ))
}

/// Gap for an even mechanism with a symmetric cause, where `E[X1|X2] ≡ 0`
/// and therefore `exp(Δ)² = Var(X2) / Var(ε2)`.
pub fn even_function_gap(model: &BivariateAnm) -> Result<GapReport> {
    model.validate()?;
    if !model.mechanism.is_even() {
        return Err(Error::contract("even_function_gap needs an even mechanism"));
    }
    if !model.cause.is_symmetric() {
        return Err(Error::contract("even_function_gap needs a symmetric cause law"));
    }
    if model.scale_fn.is_some() {
        return Err(Error::contract("even_function_gap is defined for additive noise"));
    }
    let ln_var_x1 = model.cause.variance().ln();
    Ok(GapReport::from_log_variances(
        [ln_var_x1, model.noise.variance().ln()],
        [ln_var_x1, effect_variance(model)?.ln()],
        Fit::Homoskedastic,
        GapMethod::ClosedForm,
        GapDiagnostics::default(),
    ))
}

/// Named model families swept by [`curve`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    UniUniLinear,
    GaUniLinear,
    GaChi2Linear,
    GaUniPower,
    GaChi2Power,
    GaGaPower,
    UniUniHet,
    GaGaPowerHet,
    /// Even power mechanism, Gaussian cause, uniform noise.
    GaUniEven,
}

impl Family {
    pub const ALL: [Family; 9] = [
        Family::UniUniLinear,
        Family::GaUniLinear,
        Family::GaChi2Linear,
        Family::GaUniPower,
        Family::GaChi2Power,
        Family::GaGaPower,
        Family::UniUniHet,
        Family::GaGaPowerHet,
        Family::GaUniEven,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Family::UniUniLinear => "uni-uni-linear",
            Family::GaUniLinear => "ga-uni-linear",
            Family::GaChi2Linear => "ga-chi2-linear",
            Family::GaUniPower => "ga-uni-power",
            Family::GaChi2Power => "ga-chi2-power",
            Family::GaGaPower => "ga-ga-power",
            Family::UniUniHet => "uni-uni-het",
            Family::GaGaPowerHet => "ga-ga-power-het",
            Family::GaUniEven => "ga-uni-even",
        }
    }

    /// Whether the swept parameter is ν (power families) rather than β.
    pub fn sweeps_nu(&self) -> bool {
        matches!(
            self,
            Family::GaUniPower | Family::GaChi2Power | Family::GaGaPower | Family::GaGaPowerHet | Family::GaUniEven
        )
    }

    pub fn default_fit(&self) -> Fit {
        match self {
            Family::UniUniHet | Family::GaGaPowerHet => Fit::Heteroskedastic,
            _ => Fit::Homoskedastic,
        }
    }
}

impl FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .iter()
            .copied()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::domain(format!("unknown scenario '{s}'")))
    }
}

/// A family with its fixed parameter (β for the power families).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub family: Family,
    pub beta: f64,
}

impl Scenario {
    pub fn new(family: Family, beta: Option<f64>) -> Self {
        let default = if family == Family::GaGaPowerHet { 2.0 } else { 1.0 };
        Scenario {
            family,
            beta: beta.unwrap_or(default),
        }
    }

    pub fn param_name(&self) -> &'static str {
        if self.family.sweeps_nu() {
            "nu"
        } else {
            "beta"
        }
    }

    /// Model at swept parameter value `param`.
    pub fn model(&self, param: f64) -> BivariateAnm {
        let std_normal = NoiseSpec::gaussian(1.0);
        let unif = NoiseSpec::uniform(1.0);
        match self.family {
            Family::UniUniLinear | Family::UniUniHet => {
                BivariateAnm::new(unif, Mechanism::Linear { beta: param }, unif)
            }
            Family::GaUniLinear => BivariateAnm::new(std_normal, Mechanism::Linear { beta: param }, unif),
            Family::GaChi2Linear => {
                BivariateAnm::new(std_normal, Mechanism::Linear { beta: param }, NoiseSpec::chi1(1.0))
            }
            Family::GaUniPower => BivariateAnm::new(
                std_normal,
                Mechanism::Power {
                    beta: self.beta,
                    nu: param,
                },
                unif,
            ),
            Family::GaChi2Power => BivariateAnm::new(
                std_normal,
                Mechanism::Power {
                    beta: self.beta,
                    nu: param,
                },
                NoiseSpec::chi1(6f64.sqrt()),
            ),
            Family::GaGaPower | Family::GaGaPowerHet => BivariateAnm::new(
                std_normal,
                Mechanism::Power {
                    beta: self.beta,
                    nu: param,
                },
                NoiseSpec::gaussian(1.0 / 3.0),
            ),
            Family::GaUniEven => BivariateAnm::new(
                std_normal,
                Mechanism::EvenPower {
                    beta: self.beta,
                    nu: param,
                },
                unif,
            ),
        }
    }

    pub fn gap(&self, param: f64, fit: Fit, cfg: &QuadratureConfig) -> Result<GapReport> {
        match (self.family, fit) {
            (Family::UniUniLinear | Family::UniUniHet, Fit::Homoskedastic) => ratio_uniform_linear(param),
            _ => population_gap(&self.model(param), fit, cfg),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub param: f64,
    pub delta: f64,
    pub exp_delta_sq: f64,
    pub method: GapMethod,
    pub fit: Fit,
}

/// One gap per grid value, evaluated in parallel on the current rayon pool;
/// rows come back in grid order.
pub fn curve(scenario: &Scenario, grid: &[f64], fit: Fit, cfg: &QuadratureConfig) -> Result<Vec<CurveRow>> {
    grid.par_iter()
        .map(|&param| {
            scenario.gap(param, fit, cfg).map(|r| CurveRow {
                param,
                delta: r.delta,
                exp_delta_sq: r.exp_delta_sq,
                method: r.method,
                fit: r.fit,
            })
        })
        .collect()
}
