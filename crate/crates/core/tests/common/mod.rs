#![allow(dead_code)]

use phcs_core::weibull::{pdf, survival};
use phcs_core::WeibullParams;

pub fn p(a: f64, b: f64) -> WeibullParams {
    WeibullParams::new(a, b).unwrap()
}

/// Adaptive Simpson on `[a, b]`.
pub fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            return left + right + (left + right - whole) / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// `E[g(Z) | Z > c]` by Simpson in `v` with `x = c + v²`, out to where the
/// survival ratio drops below 1e-30.
pub fn truncated_mean_oracle<G: Fn(f64) -> f64>(c: f64, q: WeibullParams, g: G) -> f64 {
    let upper = ((q.beta() * c.powf(q.alpha()) + 70.0) / q.beta()).powf(1.0 / q.alpha());
    let sc = survival(c, q).unwrap();
    let f = |v: f64| {
        if v == 0.0 {
            return 0.0;
        }
        let x = c + v * v;
        g(x) * pdf(x, q).unwrap() * 2.0 * v
    };
    // split at a few scale points so Simpson sees the mass
    let vmax = (upper - c).sqrt();
    let mut total = 0.0;
    let cuts = [0.0, vmax * 1e-4, vmax * 1e-2, vmax * 0.1, vmax * 0.3, vmax];
    for w in cuts.windows(2) {
        total += simpson(&f, w[0], w[1], 1e-14);
    }
    total / sc
}
