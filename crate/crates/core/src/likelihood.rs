//! Observed-data log-likelihood, score, profile and observed information.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::censoring::PhcsSample;
use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;
use crate::weibull::WeibullParams;

/// Weighted power sums at a fixed shape:
/// `s_k = Σ (1+R_i) x_i^α ln^k x_i + R_T C^α ln^k C`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PowerSums {
    pub r: f64,
    pub sum_ln: f64,
    pub s0: f64,
    pub s1: f64,
    pub s2: f64,
}

impl PowerSums {
    pub fn at(alpha: f64, s: &PhcsSample) -> Self {
        let mut sum_ln = CompensatedSum::new();
        let mut s0 = CompensatedSum::new();
        let mut s1 = CompensatedSum::new();
        let mut s2 = CompensatedSum::new();
        let mut push = |x: f64, w: f64| {
            let lx = x.ln();
            let xa = x.powf(alpha) * w;
            s0.add(xa);
            s1.add(xa * lx);
            s2.add(xa * lx * lx);
        };
        for (&x, &rm) in s.failures().iter().zip(s.applied_removals()) {
            sum_ln.add(x.ln());
            push(x, 1.0 + rm as f64);
        }
        if s.r_t() > 0 {
            push(s.c_end(), s.r_t() as f64);
        }
        Self { r: s.r() as f64, sum_ln: sum_ln.value(), s0: s0.value(), s1: s1.value(), s2: s2.value() }
    }
}

fn check(s: &PhcsSample) -> Result<()> {
    if s.r() == 0 {
        return Err(Error::NoFailures);
    }
    Ok(())
}

pub fn loglik(p: WeibullParams, s: &PhcsSample) -> Result<f64> {
    check(s)?;
    let (a, b) = (p.alpha(), p.beta());
    let ps = PowerSums::at(a, s);
    Ok(ps.r * (a * b).ln() + (a - 1.0) * ps.sum_ln - b * ps.s0)
}

/// Gradient of [`loglik`] as `(d/dα, d/dβ)`.
pub fn score(p: WeibullParams, s: &PhcsSample) -> Result<(f64, f64)> {
    check(s)?;
    let (a, b) = (p.alpha(), p.beta());
    let ps = PowerSums::at(a, s);
    Ok((ps.r / a + ps.sum_ln - b * ps.s1, ps.r / b - ps.s0))
}

/// Maximiser of the likelihood in β at fixed α.
pub fn profile_beta(alpha: f64, s: &PhcsSample) -> Result<f64> {
    check(s)?;
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::InvalidParameter(format!("shape must be positive, got {alpha}")));
    }
    let ps = PowerSums::at(alpha, s);
    Ok(ps.r / ps.s0)
}

/// Score in α after substituting the profile β, with its derivative.
/// Strictly decreasing in α.
pub fn profile_score(alpha: f64, s: &PhcsSample) -> (f64, f64) {
    let ps = PowerSums::at(alpha, s);
    let g = ps.r / alpha + ps.sum_ln - ps.r * ps.s1 / ps.s0;
    let dg = -ps.r / (alpha * alpha) - ps.r * (ps.s2 * ps.s0 - ps.s1 * ps.s1) / (ps.s0 * ps.s0);
    (g, dg)
}

pub fn observed_info(p: WeibullParams, s: &PhcsSample) -> Result<ObservedInfo> {
    check(s)?;
    let (a, b) = (p.alpha(), p.beta());
    let ps = PowerSums::at(a, s);
    Ok(ObservedInfo {
        i_aa: ps.r / (a * a) + b * ps.s2,
        i_ab: ps.s1,
        i_bb: ps.r / (b * b),
        evaluated_at: p,
    })
}

/// Negative Hessian of the log-likelihood at a point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservedInfo {
    pub i_aa: f64,
    pub i_ab: f64,
    pub i_bb: f64,
    pub evaluated_at: WeibullParams,
}

impl ObservedInfo {
    pub fn determinant(&self) -> f64 {
        self.i_aa * self.i_bb - self.i_ab * self.i_ab
    }

    pub fn is_positive_definite(&self) -> bool {
        self.i_aa > 0.0 && self.determinant() > 0.0
    }

    /// Asymptotic covariance `[var_α, cov, var_β]`.
    pub fn covariance(&self) -> Result<[f64; 3]> {
        covariance_2x2(self.i_aa, self.i_ab, self.i_bb)
    }

    /// Normal-approximation intervals for both parameters around `estimate`.
    pub fn intervals(&self, estimate: WeibullParams, level: f64) -> Result<[Interval; 2]> {
        let [va, _, vb] = self.covariance()?;
        Ok([
            Interval::normal(estimate.alpha(), va, level)?,
            Interval::normal(estimate.beta(), vb, level)?,
        ])
    }
}

/// Closed-form inverse of a symmetric 2×2 information matrix, guarded
/// against near-singular input.
pub fn covariance_2x2(aa: f64, ab: f64, bb: f64) -> Result<[f64; 3]> {
    let det = aa * bb - ab * ab;
    let scale = aa.abs().max(ab.abs()).max(bb.abs());
    if !det.is_finite() || det < 1e-12 * scale {
        return Err(Error::SingularInformation(format!("determinant {det:e}")));
    }
    let (va, vb) = (bb / det, aa / det);
    if !(va > 0.0 && vb > 0.0) {
        return Err(Error::SingularInformation("non-positive variance".into()));
    }
    Ok([va, -ab / det, vb])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !(lower <= upper) {
            return Err(Error::InvalidParameter(format!("malformed interval ({lower}, {upper})")));
        }
        Ok(Self { lower, upper })
    }

    /// `estimate ± z_{(1+level)/2} · sqrt(variance)`.
    pub fn normal(estimate: f64, variance: f64, level: f64) -> Result<Self> {
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::InvalidParameter(format!("level must lie in (0, 1), got {level}")));
        }
        if !(variance > 0.0) {
            return Err(Error::Domain(format!("variance must be positive, got {variance}")));
        }
        let z = Normal::standard().inverse_cdf(0.5 + 0.5 * level);
        let half = z * variance.sqrt();
        Ok(Self { lower: estimate - half, upper: estimate + half })
    }

    pub fn length(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::censoring::Case;
    use crate::weibull::ln_pdf;

    fn p(a: f64, b: f64) -> WeibullParams {
        WeibullParams::new(a, b).unwrap()
    }

    fn case_two() -> PhcsSample {
        PhcsSample::new(10, 6, 0.9, vec![0.05, 0.2, 0.31, 0.6], vec![1, 0, 2, 0], Case::CaseII, 3).unwrap()
    }

    #[test]
    fn unit_exponential_single_point() {
        let s = PhcsSample::complete(vec![1.0]).unwrap();
        assert!((loglik(p(1.0, 1.0), &s).unwrap() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn complete_sample_is_sum_of_log_densities() {
        let xs = vec![0.3, 1.2, 0.7, 2.5, 0.05];
        let s = PhcsSample::complete(xs.clone()).unwrap();
        let q = p(1.3, 0.8);
        let direct: f64 = xs.iter().map(|&x| ln_pdf(x, q).unwrap()).sum();
        assert!((loglik(q, &s).unwrap() - direct).abs() < 1e-12);
    }

    #[test]
    fn profile_beta_zeroes_beta_score() {
        let s = case_two();
        let b = profile_beta(0.8, &s).unwrap();
        let (_, db) = score(p(0.8, b), &s).unwrap();
        assert!(db.abs() < 1e-12);
    }

    #[test]
    fn exponential_profile() {
        let xs = vec![0.5, 1.5, 2.0];
        let s = PhcsSample::complete(xs).unwrap();
        assert!((profile_beta(1.0, &s).unwrap() - 3.0 / 4.0).abs() < 1e-15);
    }

    #[test]
    fn profile_score_matches_full_score() {
        let s = case_two();
        for a in [0.3, 0.9, 2.2] {
            let (g, dg) = profile_score(a, &s);
            let (sa, _) = score(p(a, profile_beta(a, &s).unwrap()), &s).unwrap();
            assert!((g - sa).abs() < 1e-12);
            let h = 1e-6;
            let fd = (profile_score(a + h, &s).0 - profile_score(a - h, &s).0) / (2.0 * h);
            assert!((dg - fd).abs() < 1e-5 * dg.abs());
            assert!(dg < 0.0);
        }
    }

    #[test]
    fn info_beta_entry_is_exact() {
        let s = case_two();
        let info = observed_info(p(0.7, 1.2), &s).unwrap();
        assert_eq!(info.i_bb, 4.0 / (1.2 * 1.2));
    }

    #[test]
    fn singular_information_is_reported() {
        let info = ObservedInfo { i_aa: 1.0, i_ab: 1.0, i_bb: 1.0, evaluated_at: p(1.0, 1.0) };
        assert!(matches!(info.intervals(p(1.0, 1.0), 0.95), Err(Error::SingularInformation(_))));
    }

    #[test]
    fn normal_interval_width() {
        let iv = Interval::normal(1.0, 1.0, 0.95).unwrap();
        assert!((iv.upper - 2.959_963_984_540_054).abs() < 1e-9);
        assert!(iv.contains(1.0) && !iv.contains(3.0));
    }
}
