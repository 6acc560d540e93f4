//! Adaptive Gauss–Kronrod (10/21) integration of vector-valued integrands and
//! fixed Gauss–Legendre rules.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::OnceLock;

use crate::error::{Error, Result};

const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_750_093_250_390,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

// Gauss weights for XGK[1], XGK[3], ..., XGK[9]
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_subdivisions: usize,
}

impl Tolerance {
    pub fn new(abs: f64, rel: f64, max_subdivisions: usize) -> Self {
        Tolerance {
            abs,
            rel,
            max_subdivisions,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Integral<const N: usize> {
    pub value: [f64; N],
    pub abs_error: f64,
    pub subdivisions: usize,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy)]
struct Segment<const N: usize> {
    lo: f64,
    hi: f64,
    value: [f64; N],
    error: f64,
}

impl<const N: usize> PartialEq for Segment<N> {
    fn eq(&self, other: &Self) -> bool {
        self.error.total_cmp(&other.error) == Ordering::Equal
    }
}

impl<const N: usize> Eq for Segment<N> {}

impl<const N: usize> PartialOrd for Segment<N> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<const N: usize> Ord for Segment<N> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod<const N: usize, F>(f: &mut F, lo: f64, hi: f64) -> Segment<N>
where
    F: FnMut(f64) -> [f64; N],
{
    let center = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let fc = f(center);
    let mut k = [0.0; N];
    let mut g = [0.0; N];
    for c in 0..N {
        k[c] = WGK[10] * fc[c];
    }
    for j in 0..10 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        for c in 0..N {
            let s = f1[c] + f2[c];
            k[c] += WGK[j] * s;
            if j % 2 == 1 {
                g[c] += WG[j / 2] * s;
            }
        }
    }
    let mut error: f64 = 0.0;
    for c in 0..N {
        k[c] *= half;
        g[c] *= half;
        error = error.max((k[c] - g[c]).abs());
    }
    if error.is_nan() {
        error = f64::INFINITY;
    }
    Segment {
        lo,
        hi,
        value: k,
        error,
    }
}

/// Integrates `f` over `[points[0], points[last]]`, splitting first at every
/// interior point in `points` (kinks and discontinuities of the integrand).
///
/// Stops when the summed error estimate falls below
/// `max(tol.abs, tol.rel · max_c |I_c|)`.
pub fn integrate<const N: usize, F>(mut f: F, points: &[f64], tol: Tolerance, context: &str) -> Result<Integral<N>>
where
    F: FnMut(f64) -> [f64; N],
{
    let mut pts: Vec<f64> = points.iter().copied().filter(|p| p.is_finite()).collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    if pts.len() < 2 {
        return Ok(Integral {
            value: [0.0; N],
            abs_error: 0.0,
            subdivisions: 0,
            evaluations: 0,
        });
    }

    let mut heap = BinaryHeap::new();
    let mut frozen: Vec<Segment<N>> = Vec::new();
    let mut evaluations = 0;
    for w in pts.windows(2) {
        if w[1] > w[0] {
            heap.push(kronrod(&mut f, w[0], w[1]));
            evaluations += 21;
        }
    }
    let mut subdivisions = heap.len();

    loop {
        let mut value = [0.0; N];
        let mut error = 0.0;
        for s in heap.iter().chain(frozen.iter()) {
            for c in 0..N {
                value[c] += s.value[c];
            }
            error += s.error;
        }
        let scale = value.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let target = tol.abs.max(tol.rel * scale);
        if error <= target {
            return Ok(Integral {
                value,
                abs_error: error,
                subdivisions,
                evaluations,
            });
        }
        let worst = match heap.pop() {
            Some(s) if subdivisions < tol.max_subdivisions => s,
            other => {
                return Err(Error::Tolerance {
                    context: context.to_string(),
                    estimate: value[0],
                    error: error.max(other.map(|s| s.error).unwrap_or(0.0)),
                    subdivisions,
                })
            }
        };
        let mid = 0.5 * (worst.lo + worst.hi);
        if mid <= worst.lo || mid >= worst.hi {
            // cannot split further in floating point
            frozen.push(worst);
            continue;
        }
        heap.push(kronrod(&mut f, worst.lo, mid));
        heap.push(kronrod(&mut f, mid, worst.hi));
        evaluations += 42;
        subdivisions += 1;
    }
}

/// Scalar convenience wrapper around [`integrate`].
pub fn integrate_scalar<F>(mut f: F, points: &[f64], tol: Tolerance, context: &str) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    integrate(|x| [f(x)], points, tol, context).map(|r| r.value[0])
}

#[derive(Debug)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

fn build_gauss_legendre(n: usize) -> GaussLegendre {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (1.0, 0.0);
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j + 1) as f64 * z * p2 - j as f64 * p3) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    GaussLegendre { nodes, weights }
}

/// Gauss–Legendre rule on `[-1, 1]`; the 16-point rule is cached.
pub fn gauss_legendre(n: usize) -> &'static GaussLegendre {
    static GL16: OnceLock<GaussLegendre> = OnceLock::new();
    assert_eq!(n, 16, "only the 16-point rule is cached");
    GL16.get_or_init(|| build_gauss_legendre(16))
}
