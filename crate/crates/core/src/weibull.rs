//! Two-parameter Weibull primitives in the rate parameterisation
//! `F(x) = 1 - exp(-beta * x^alpha)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape `alpha` and rate-style scale `beta` (units of `x^-alpha`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeibullParams {
    alpha: f64,
    beta: f64,
}

impl WeibullParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::InvalidParameter(format!("shape must be finite and positive, got {alpha}")));
        }
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::InvalidParameter(format!("scale must be finite and positive, got {beta}")));
        }
        Ok(Self { alpha, beta })
    }

    #[inline]
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    #[inline]
    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Parameters as `[alpha, beta]`.
    pub fn to_array(self) -> [f64; 2] {
        [self.alpha, self.beta]
    }
}

fn check_support(x: f64) -> Result<()> {
    if x.is_nan() || x < 0.0 {
        return Err(Error::Domain(format!("x must be nonnegative, got {x}")));
    }
    Ok(())
}

/// Density `alpha * beta * x^(alpha-1) * exp(-beta * x^alpha)`.
///
/// At `x = 0` with `alpha < 1` the density is unbounded; that point is
/// rejected as a domain error.
pub fn pdf(x: f64, p: WeibullParams) -> Result<f64> {
    check_support(x)?;
    let (a, b) = (p.alpha, p.beta);
    if x == 0.0 {
        return if a < 1.0 {
            Err(Error::Domain("density is unbounded at x = 0 for shape < 1".into()))
        } else if a == 1.0 {
            Ok(b)
        } else {
            Ok(0.0)
        };
    }
    let xa = x.powf(a);
    Ok(a * b * xa / x * (-b * xa).exp())
}

/// `ln pdf(x)` for `x > 0`.
pub fn ln_pdf(x: f64, p: WeibullParams) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("log-density needs x > 0, got {x}")));
    }
    let (a, b) = (p.alpha, p.beta);
    Ok(a.ln() + b.ln() + (a - 1.0) * x.ln() - b * x.powf(a))
}

pub fn cdf(x: f64, p: WeibullParams) -> Result<f64> {
    check_support(x)?;
    Ok(-(-p.beta * x.powf(p.alpha)).exp_m1())
}

/// Survival `1 - F(x) = exp(-beta * x^alpha)`.
pub fn survival(x: f64, p: WeibullParams) -> Result<f64> {
    check_support(x)?;
    Ok((-p.beta * x.powf(p.alpha)).exp())
}

pub fn quantile(prob: f64, p: WeibullParams) -> Result<f64> {
    if !(prob > 0.0 && prob < 1.0) {
        return Err(Error::Domain(format!("probability must lie in (0, 1), got {prob}")));
    }
    Ok((-(-prob).ln_1p() / p.beta).powf(1.0 / p.alpha))
}

/// Inverse-transform draw from the Weibull left-truncated at `lower`:
/// `(lower^alpha - ln(1 - u) / beta)^(1/alpha)`.
pub fn sample_truncated(lower: f64, p: WeibullParams, u: f64) -> Result<f64> {
    check_support(lower)?;
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::Domain(format!("uniform deviate must lie in (0, 1), got {u}")));
    }
    Ok(truncated_from_exponential(lower.powf(p.alpha), p, -(-u).ln_1p(), lower))
}

/// Same draw expressed through a unit-exponential deviate `e = -ln(1-u)`
/// and the precomputed `lower^alpha`.
#[inline]
pub(crate) fn truncated_from_exponential(lower_pow: f64, p: WeibullParams, e: f64, lower: f64) -> f64 {
    let z = (lower_pow + e / p.beta).powf(1.0 / p.alpha);
    if z > lower {
        z
    } else {
        // rounding swallowed the increment
        lower.next_up()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(a: f64, b: f64) -> WeibullParams {
        WeibullParams::new(a, b).unwrap()
    }

    #[test]
    fn construction_rejects_bad_values() {
        for (a, b) in [(0.0, 1.0), (-1.0, 1.0), (1.0, 0.0), (f64::NAN, 1.0), (1.0, f64::INFINITY)] {
            assert!(WeibullParams::new(a, b).is_err());
        }
    }

    #[test]
    fn unit_exponential_values() {
        let q = p(1.0, 1.0);
        assert!((pdf(1.0, q).unwrap() - (-1.0f64).exp()).abs() < 1e-15);
        assert!((cdf(1.0, q).unwrap() - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
        let one = quantile(1.0 - (-1.0f64).exp(), q).unwrap();
        assert!((one - 1.0).abs() < 1e-14);
    }

    #[test]
    fn density_at_origin() {
        assert_eq!(pdf(0.0, p(2.0, 1.5)).unwrap(), 0.0);
        assert!(matches!(pdf(0.0, p(0.5, 1.5)), Err(Error::Domain(_))));
        assert_eq!(cdf(0.0, p(0.5, 1.5)).unwrap(), 0.0);
    }

    #[test]
    fn negative_support_is_domain_error() {
        assert!(pdf(-0.1, p(1.0, 1.0)).is_err());
        assert!(cdf(-0.1, p(1.0, 1.0)).is_err());
        assert!(quantile(0.0, p(1.0, 1.0)).is_err());
        assert!(quantile(1.0, p(1.0, 1.0)).is_err());
    }

    #[test]
    fn density_matches_central_difference_of_cdf() {
        let q = p(0.5, 1.5);
        let h = 1e-5;
        let fd = (cdf(0.5 + h, q).unwrap() - cdf(0.5 - h, q).unwrap()) / (2.0 * h);
        assert!((pdf(0.5, q).unwrap() - fd).abs() < 1e-8);
    }

    #[test]
    fn simulation_truncation_times_are_quantiles() {
        let q = p(0.5, 1.5);
        let t_half = quantile(0.5, q).unwrap();
        let t_high = quantile(0.8, q).unwrap();
        assert!((t_half - 0.21).abs() < 5e-3, "{t_half}");
        assert!((t_high - 1.15).abs() < 5e-3, "{t_high}");
        assert!((t_half - (2f64.ln() / 1.5).powi(2)).abs() < 1e-14);
        assert!((t_high - (5f64.ln() / 1.5).powi(2)).abs() < 1e-14);
    }

    #[test]
    fn cdf_accurate_for_tiny_hazard() {
        // beta * x^alpha = 1e-20, where 1 - exp(-h) would round to zero
        let q = p(1.0, 1e-20);
        let v = cdf(1.0, q).unwrap();
        assert!((v - 1e-20).abs() < 1e-34);
    }

    #[test]
    fn cdf_approaches_one() {
        let q = p(0.5, 1.5);
        let mut last = 0.0;
        for k in 0..12 {
            let v = cdf(10f64.powi(k), q).unwrap();
            assert!(v >= last);
            last = v;
        }
        assert!(1.0 - last < 1e-12);
    }

    #[test]
    fn truncated_draws_exceed_lower() {
        let q = p(1.0, 1.0);
        assert!((sample_truncated(0.0, q, 1.0 - (-1.0f64).exp()).unwrap() - 1.0).abs() < 1e-14);
        for u in [1e-300, 1e-12, 0.3, 0.999_999] {
            assert!(sample_truncated(2.0, p(0.7, 3.0), u).unwrap() > 2.0);
            assert!(sample_truncated(1e12, p(3.0, 0.1), u).unwrap() > 1e12);
        }
    }
}
