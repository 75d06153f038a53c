//! Small numerical kernels shared by the estimators: compensated summation,
//! adaptive Gauss–Kronrod quadrature and a bracketed Newton solver.

use crate::error::{Error, Result};

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<CompensatedSum>().value()
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
// Gauss weights for the odd-indexed Kronrod nodes (1, 3, 5, 7).
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Adaptive Gauss–Kronrod (7/15) integration over a finite interval.
///
/// Bisects the interval with the largest error estimate until the summed
/// estimate falls under `max(abs_tol, rel_tol * |I|)`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Result<f64> {
    const MAX_SEGMENTS: usize = 2000;
    let (v, e) = gk15(&f, a, b);
    let mut segments = vec![(a, b, v, e)];
    loop {
        let total: f64 = compensated_sum(segments.iter().map(|s| s.2));
        let err: f64 = segments.iter().map(|s| s.3).sum();
        if !total.is_finite() {
            return Err(Error::Domain("non-finite integrand".into()));
        }
        if err <= abs_tol.max(rel_tol * total.abs()) {
            return Ok(total);
        }
        if segments.len() >= MAX_SEGMENTS {
            return Err(Error::NoConvergence { method: "quadrature", iterations: MAX_SEGMENTS });
        }
        let worst = segments
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let (lo, hi, _, _) = segments.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            // interval collapsed to adjacent floats; accept what we have
            return Ok(total);
        }
        let (v1, e1) = gk15(&f, lo, mid);
        let (v2, e2) = gk15(&f, mid, hi);
        segments.push((lo, mid, v1, e1));
        segments.push((mid, hi, v2, e2));
    }
}

/// Integral over `[a, ∞)` via the map `x = a + t / (1 - t)`.
pub fn integrate_to_infinity<F: Fn(f64) -> f64>(f: F, a: f64, abs_tol: f64, rel_tol: f64) -> Result<f64> {
    let mapped = |t: f64| {
        let s = 1.0 - t;
        let x = a + t / s;
        let v = f(x) / (s * s);
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    integrate(mapped, 0.0, 1.0, abs_tol, rel_tol)
}

/// Outcome of [`decreasing_root`].
#[derive(Debug, Clone, Copy)]
pub struct RootOutcome {
    pub root: f64,
    pub iterations: usize,
    pub residual: f64,
}

/// Root of a strictly decreasing function on `(lower, upper)` by Newton
/// steps that fall back to bisection whenever they leave the bracket.
///
/// `fdf` returns `(f(x), f'(x))`. The search starts at `start` and grows
/// the bracket geometrically; a root beyond `upper` is reported as
/// divergence.
pub fn decreasing_root<F>(
    method: &'static str,
    fdf: F,
    start: f64,
    lower: f64,
    upper: f64,
    max_iters: usize,
) -> Result<RootOutcome>
where
    F: Fn(f64) -> (f64, f64),
{
    let mut x = start.clamp(lower * 2.0, upper / 2.0);
    let (mut fx, mut dfx) = fdf(x);
    if !fx.is_finite() {
        return Err(Error::Divergent { method, detail: format!("non-finite score at {x}") });
    }
    // establish a sign-changing bracket [lo, hi] with f(lo) > 0 > f(hi)
    let (mut lo, mut hi) = if fx > 0.0 { (x, f64::NAN) } else { (f64::NAN, x) };
    let mut probe = x;
    while lo.is_nan() || hi.is_nan() {
        probe = if lo.is_nan() { probe / 4.0 } else { probe * 4.0 };
        if probe <= lower || probe >= upper {
            return Err(Error::Divergent {
                method,
                detail: format!("root outside ({lower:e}, {upper:e})"),
            });
        }
        let (fp, _) = fdf(probe);
        if fp.is_nan() {
            return Err(Error::Divergent { method, detail: format!("NaN score at {probe}") });
        }
        if fp > 0.0 {
            lo = probe;
        } else {
            hi = probe;
        }
    }
    for it in 1..=max_iters {
        let newton = x - fx / dfx;
        let step_ok = dfx.is_finite() && dfx < 0.0 && newton > lo && newton < hi;
        let next = if step_ok { newton } else { 0.5 * (lo + hi) };
        let (fn_, dfn) = fdf(next);
        if !fn_.is_finite() {
            return Err(Error::Divergent { method, detail: format!("non-finite score at {next}") });
        }
        if fn_ > 0.0 {
            lo = next;
        } else {
            hi = next;
        }
        let moved = (next - x).abs();
        x = next;
        fx = fn_;
        dfx = dfn;
        if fx == 0.0 || moved <= 1e-15 * x.abs() || (hi - lo) <= 4.0 * f64::EPSILON * x.abs() {
            return Ok(RootOutcome { root: x, iterations: it, residual: fx });
        }
    }
    Err(Error::NoConvergence { method, iterations: max_iters })
}
