//! Gamma-prior Bayesian estimation: Tierney–Kadane approximation,
//! random-walk Metropolis–Hastings and HPD intervals from the chain.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::{Rng, RngExt};
use rand_distr::{Open01, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::censoring::PhcsSample;
use crate::error::{Error, Result};
use crate::likelihood::{self, Interval, PowerSums};
use crate::ml::{fit_nr, SolverConfig, Sym2};
use crate::numeric::{compensated_sum, decreasing_root};
use crate::weibull::WeibullParams;

/// Independent priors `α ~ Gamma(a, b)` and `β ~ Gamma(c, d)` (rate form).
/// All four zero gives the improper prior `1/(αβ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaPriors {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl GammaPriors {
    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Result<Self> {
        for (name, v) in [("a", a), ("b", b), ("c", c), ("d", d)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParameter(format!("prior hyperparameter {name} must be >= 0, got {v}")));
            }
        }
        Ok(Self { a, b, c, d })
    }

    pub fn flat() -> Self {
        Self { a: 0.0, b: 0.0, c: 0.0, d: 0.0 }
    }

    pub fn is_flat(&self) -> bool {
        *self == Self::flat()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LossSpec {
    Sel,
    Linex { nu: f64 },
    Gel { kappa: f64 },
}

impl LossSpec {
    pub fn linex(nu: f64) -> Result<Self> {
        if nu == 0.0 || !nu.is_finite() {
            return Err(Error::InvalidParameter(format!("LINEX parameter must be finite and nonzero, got {nu}")));
        }
        Ok(Self::Linex { nu })
    }

    pub fn gel(kappa: f64) -> Result<Self> {
        if kappa == 0.0 || !kappa.is_finite() {
            return Err(Error::InvalidParameter(format!("GEL parameter must be finite and nonzero, got {kappa}")));
        }
        Ok(Self::Gel { kappa })
    }

    /// Posterior risk of `estimate` when the truth is `truth`.
    pub fn loss(&self, estimate: f64, truth: f64) -> f64 {
        match *self {
            LossSpec::Sel => (estimate - truth).powi(2),
            LossSpec::Linex { nu } => {
                let d = nu * (estimate - truth);
                d.exp() - d - 1.0
            }
            LossSpec::Gel { kappa } => {
                let q = (estimate / truth).powf(kappa);
                q - kappa * (estimate / truth).ln() - 1.0
            }
        }
    }
}

impl fmt::Display for LossSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LossSpec::Sel => f.write_str("sel"),
            LossSpec::Linex { nu } => write!(f, "linex={nu}"),
            LossSpec::Gel { kappa } => write!(f, "gel={kappa}"),
        }
    }
}

impl FromStr for LossSpec {
    type Err = Error;

    /// `sel`, `linex=<nu>` or `gel=<kappa>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        if s == "sel" {
            return Ok(LossSpec::Sel);
        }
        let (kind, value) = s
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("unknown loss '{s}' (expected sel, linex=<v> or gel=<v>)")))?;
        let v: f64 = value.trim().parse().map_err(|_| Error::Parse(format!("bad loss parameter '{value}'")))?;
        match kind.trim() {
            "linex" => LossSpec::linex(v),
            "gel" => LossSpec::gel(v),
            other => Err(Error::Parse(format!("unknown loss '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McmcConfig {
    pub n_total: usize,
    pub n_burn: usize,
    /// Proposal covariance on `(ln α, ln β)`; `None` derives it from the
    /// observed information at the MLE.
    pub proposal_cov: Option<Sym2>,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self { n_total: 6000, n_burn: 1000, proposal_cov: None }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_burn >= self.n_total {
            return Err(Error::InvalidParameter(format!(
                "burn-in ({}) must be smaller than the chain length ({})",
                self.n_burn, self.n_total
            )));
        }
        if let Some([aa, ab, bb]) = self.proposal_cov {
            if !(aa > 0.0 && aa * bb - ab * ab > 0.0) {
                return Err(Error::NotPositiveDefinite("proposal covariance".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorChain {
    pub draws: Vec<WeibullParams>,
    pub accepted: Vec<bool>,
    pub acceptance_rate: f64,
    pub burn_in: usize,
}

impl PosteriorChain {
    pub fn alphas(&self) -> Vec<f64> {
        self.draws.iter().map(|p| p.alpha()).collect()
    }

    pub fn betas(&self) -> Vec<f64> {
        self.draws.iter().map(|p| p.beta()).collect()
    }

    /// Acceptance below 5% usually means the proposal is badly scaled.
    pub fn is_stuck(&self) -> bool {
        self.acceptance_rate < 0.05
    }

    pub fn estimate(&self, loss: LossSpec) -> Result<WeibullParams> {
        WeibullParams::new(point_estimate(&self.alphas(), loss)?, point_estimate(&self.betas(), loss)?)
    }

    pub fn hpd(&self, level: f64) -> Result<[Interval; 2]> {
        Ok([hpd_interval(&self.alphas(), level)?, hpd_interval(&self.betas(), level)?])
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["iteration", "alpha", "beta", "accepted"])?;
        for (k, (p, acc)) in self.draws.iter().zip(&self.accepted).enumerate() {
            w.serialize((self.burn_in + k + 1, p.alpha(), p.beta(), u8::from(*acc)))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `ln L(α, β) + ln π(α, β)` up to an additive constant.
pub fn log_posterior_unnorm(p: WeibullParams, s: &PhcsSample, pr: &GammaPriors) -> Result<f64> {
    let (a, b) = (p.alpha(), p.beta());
    Ok(likelihood::loglik(p, s)? + (pr.a - 1.0) * a.ln() - pr.b * a + (pr.c - 1.0) * b.ln() - pr.d * b)
}

/// Bayes estimate of one parameter from posterior draws.
pub fn point_estimate(draws: &[f64], loss: LossSpec) -> Result<f64> {
    if draws.is_empty() {
        return Err(Error::EmptyChain);
    }
    let k = draws.len() as f64;
    let mean_of = |f: &dyn Fn(f64) -> f64| compensated_sum(draws.iter().map(|&x| f(x))) / k;
    Ok(match loss {
        LossSpec::Sel => mean_of(&|x| x),
        LossSpec::Linex { nu } => {
            // shift by the largest exponent so e^{-νθ} cannot overflow
            let shift = draws.iter().map(|&x| -nu * x).fold(f64::NEG_INFINITY, f64::max);
            let m = mean_of(&|x| (-nu * x - shift).exp());
            -(m.ln() + shift) / nu
        }
        LossSpec::Gel { kappa } => mean_of(&|x| x.powf(-kappa)).powf(-1.0 / kappa),
    })
}

/// Shortest window of `floor(level · s)` consecutive order statistics.
/// Ties go to the smallest starting index.
pub fn hpd_interval(draws: &[f64], level: f64) -> Result<Interval> {
    if draws.len() < 100 {
        return Err(Error::InsufficientDraws { needed: 100, got: draws.len() });
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidParameter(format!("level must lie in (0, 1), got {level}")));
    }
    let mut sorted = draws.to_vec();
    sorted.sort_by(f64::total_cmp);
    let s = sorted.len();
    let k = ((level * s as f64 + 1e-9).floor() as usize).min(s - 1);
    let mut best = 0;
    for j in 1..s - k {
        if sorted[j + k] - sorted[j] < sorted[best + k] - sorted[best] {
            best = j;
        }
    }
    Interval::new(sorted[best], sorted[best + k])
}

fn default_proposal(s: &PhcsSample) -> Result<(WeibullParams, Sym2)> {
    let mle = fit_nr(s, &SolverConfig::default())?;
    let info = likelihood::observed_info(mle.estimate, s)?;
    let [va, cab, vb] = info.covariance()?;
    let (a, b) = (mle.estimate.alpha(), mle.estimate.beta());
    let scale = 2.4f64.powi(2) / 2.0;
    Ok((mle.estimate, [scale * va / (a * a), scale * cab / (a * b), scale * vb / (b * b)]))
}

/// Random-walk Metropolis–Hastings on `(ln α, ln β)`, started at the MLE.
/// The acceptance ratio carries the Jacobian `αβ` of the log transform.
pub fn mh_sample<R: Rng + ?Sized>(
    s: &PhcsSample,
    pr: &GammaPriors,
    cfg: &McmcConfig,
    rng: &mut R,
) -> Result<PosteriorChain> {
    cfg.validate()?;
    s.require_failures(2)?;
    let (start, derived) = default_proposal(s)?;
    let [vaa, vab, vbb] = cfg.proposal_cov.unwrap_or(derived);
    // Cholesky factor of the proposal covariance
    let l11 = vaa.sqrt();
    let l21 = vab / l11;
    let l22 = (vbb - l21 * l21).sqrt();
    if !(l22 > 0.0) {
        return Err(Error::NotPositiveDefinite("proposal covariance".into()));
    }

    let log_target = |la: f64, lb: f64| -> f64 {
        match WeibullParams::new(la.exp(), lb.exp()) {
            Ok(p) => log_posterior_unnorm(p, s, pr).map(|v| v + la + lb).unwrap_or(f64::NEG_INFINITY),
            Err(_) => f64::NEG_INFINITY,
        }
    };

    let (mut la, mut lb) = (start.alpha().ln(), start.beta().ln());
    let mut cur = log_target(la, lb);
    let kept = cfg.n_total - cfg.n_burn;
    let mut draws = Vec::with_capacity(kept);
    let mut accepted = Vec::with_capacity(kept);
    let mut n_acc = 0usize;
    for it in 0..cfg.n_total {
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        let pa = la + l11 * z1;
        let pb = lb + l21 * z1 + l22 * z2;
        let prop = log_target(pa, pb);
        let u: f64 = rng.sample(Open01);
        let acc = prop.is_finite() && u.ln() < prop - cur;
        if acc {
            la = pa;
            lb = pb;
            cur = prop;
        }
        if it >= cfg.n_burn {
            if acc {
                n_acc += 1;
            }
            draws.push(WeibullParams::new(la.exp(), lb.exp())?);
            accepted.push(acc);
        }
    }
    Ok(PosteriorChain { draws, accepted, acceptance_rate: n_acc as f64 / kept as f64, burn_in: cfg.n_burn })
}

/// Hyperparameters of the kernel
/// `ln L + (A-1) ln α - Bα + (C-1) ln β - Dβ`.
#[derive(Debug, Clone, Copy)]
struct Kernel {
    a: f64,
    b: f64,
    c: f64,
    d: f64,
}

#[derive(Debug, Clone, Copy)]
struct KernelMax {
    value: f64,
    log_det_neg_hessian: f64,
}

impl Kernel {
    fn from_priors(pr: &GammaPriors) -> Self {
        Self { a: pr.a, b: pr.b, c: pr.c, d: pr.d }
    }

    fn maximise(&self, s: &PhcsSample, start: f64) -> Result<KernelMax> {
        let r = s.r() as f64;
        let wa = r + self.a - 1.0;
        let wb = r + self.c - 1.0;
        if !(wa > 0.0 && wb > 0.0) {
            return Err(Error::MaximizerOnBoundary(format!("kernel weights ({wa}, {wb}) not positive")));
        }
        let (b_h, d_h) = (self.b, self.d);
        let fdf = |alpha: f64| {
            let ps = PowerSums::at(alpha, s);
            let beta = wb / (ps.s0 + d_h);
            let g = wa / alpha + ps.sum_ln - beta * ps.s1 - b_h;
            let dg = -wa / (alpha * alpha) - beta * ps.s2 + beta * ps.s1 * ps.s1 / (ps.s0 + d_h);
            (g, dg)
        };
        let out = decreasing_root("tierney-kadane", fdf, start, 1e-6, 1e6, 500).map_err(|e| match e {
            Error::Divergent { detail, .. } => Error::MaximizerOnBoundary(detail),
            other => other,
        })?;
        let alpha = out.root;
        let ps = PowerSums::at(alpha, s);
        let beta = wb / (ps.s0 + d_h);
        let value = r * (alpha * beta).ln() + (alpha - 1.0) * ps.sum_ln - beta * ps.s0
            + (self.a - 1.0) * alpha.ln()
            - self.b * alpha
            + (self.c - 1.0) * beta.ln()
            - self.d * beta;
        let h_aa = -wa / (alpha * alpha) - beta * ps.s2;
        let h_ab = -ps.s1;
        let h_bb = -wb / (beta * beta);
        let det = h_aa * h_bb - h_ab * h_ab;
        if !(h_aa < 0.0 && det > 0.0) {
            return Err(Error::HessianNotNegativeDefinite(format!("({alpha}, {beta})")));
        }
        Ok(KernelMax { value, log_det_neg_hessian: det.ln() })
    }
}

/// Laplace-ratio approximation of a posterior expectation `E[g(θ)]`,
/// where the modified kernel absorbs `ln g`.
fn tk_log_expectation(s: &PhcsSample, star: Kernel, base_max: KernelMax, start: f64) -> Result<f64> {
    let m = star.maximise(s, start)?;
    Ok(0.5 * (base_max.log_det_neg_hessian - m.log_det_neg_hessian) + m.value - base_max.value)
}

/// Tierney–Kadane approximate Bayes estimate under `loss`.
pub fn tk_estimate(s: &PhcsSample, pr: &GammaPriors, loss: LossSpec) -> Result<WeibullParams> {
    s.require_failures(2)?;
    let base = Kernel::from_priors(pr);
    let start = crate::ml::weibull_plot_start(s).alpha();
    let base_max = base.maximise(s, start)?;

    let mut star_a = base;
    let mut star_b = base;
    match loss {
        LossSpec::Sel => {
            star_a.a += 1.0;
            star_b.c += 1.0;
        }
        LossSpec::Linex { nu } => {
            star_a.b += nu;
            star_b.d += nu;
        }
        LossSpec::Gel { kappa } => {
            star_a.a -= kappa;
            star_b.c -= kappa;
        }
    }
    let la = tk_log_expectation(s, star_a, base_max, start)?;
    let lb = tk_log_expectation(s, star_b, base_max, start)?;
    let outer = |l: f64| match loss {
        LossSpec::Sel => l.exp(),
        LossSpec::Linex { nu } => -l / nu,
        LossSpec::Gel { kappa } => (-l / kappa).exp(),
    };
    let (alpha, beta) = (outer(la), outer(lb));
    WeibullParams::new(alpha, beta)
        .map_err(|_| Error::MaximizerOnBoundary(format!("estimate ({alpha}, {beta}) outside the parameter space")))
}
