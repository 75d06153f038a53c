//! Maximum-likelihood estimation: Newton–Raphson on the profile score,
//! EM and stochastic EM, and the Louis missing-information matrix.

use rand::{Rng, RngExt};
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::censoring::PhcsSample;
use crate::error::{Error, Result};
use crate::likelihood::{self, covariance_2x2, Interval, ObservedInfo};
use crate::numeric::{compensated_sum, decreasing_root, integrate_to_infinity, CompensatedSum};
use crate::weibull::{truncated_from_exponential, WeibullParams};

const ALPHA_LOWER: f64 = 1e-6;
const ALPHA_UPPER: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub epsilon: f64,
    pub max_iters: usize,
    pub mc_points: usize,
    /// Starting point; `None` uses a Weibull-plot regression.
    pub start: Option<WeibullParams>,
    /// Number of trailing SEM iterates averaged into the estimate.
    pub sem_tail: usize,
    pub ci_level: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { epsilon: 1e-6, max_iters: 500, mc_points: 5000, start: None, sem_tail: 50, ci_level: 0.95 }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidParameter("epsilon must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("max_iters must be at least 1".into()));
        }
        if self.mc_points < 100 {
            return Err(Error::InvalidParameter("mc_points must be at least 100".into()));
        }
        if self.sem_tail == 0 {
            return Err(Error::InvalidParameter("sem_tail must be at least 1".into()));
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return Err(Error::InvalidParameter("ci_level must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "NR")]
    Nr,
    #[serde(rename = "EM")]
    Em,
    #[serde(rename = "SEM")]
    Sem,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Information {
    Observed(ObservedInfo),
    Louis(LouisInfo),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlFit {
    pub estimate: WeibullParams,
    pub method: Method,
    pub iterations: usize,
    pub converged: bool,
    pub info: Option<Information>,
    pub ci_alpha: Option<Interval>,
    pub ci_beta: Option<Interval>,
}

/// Shape from a least-squares line through the Weibull plot
/// `ln(-ln S(x))` against `ln x`, with a product-limit survival estimate.
pub fn weibull_plot_start(s: &PhcsSample) -> WeibullParams {
    let mut at_risk = s.n() as f64;
    let mut surv = 1.0;
    let mut pts = Vec::with_capacity(s.r());
    for (&x, &rm) in s.failures().iter().zip(s.applied_removals()) {
        // (k+1)-denominator keeps the last survival estimate positive
        surv *= at_risk / (at_risk + 1.0);
        pts.push((x.ln(), (-surv.ln()).ln()));
        at_risk -= 1.0 + rm as f64;
    }
    let k = pts.len() as f64;
    let mut alpha = 1.0;
    if pts.len() >= 2 {
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let slope = sxy / sxx;
        if slope.is_finite() && slope > 0.0 {
            alpha = slope.clamp(0.05, 20.0);
        }
    }
    let beta = likelihood::profile_beta(alpha, s).unwrap_or(1.0);
    WeibullParams::new(alpha, beta).unwrap_or(WeibullParams::new(1.0, 1.0).expect("unit params"))
}

fn start_point(s: &PhcsSample, cfg: &SolverConfig) -> WeibullParams {
    cfg.start.unwrap_or_else(|| weibull_plot_start(s))
}

fn observed_intervals(fit: &mut MlFit, s: &PhcsSample, level: f64) {
    if let Ok(info) = likelihood::observed_info(fit.estimate, s) {
        if let Ok([a, b]) = info.intervals(fit.estimate, level) {
            fit.ci_alpha = Some(a);
            fit.ci_beta = Some(b);
        }
        fit.info = Some(Information::Observed(info));
    }
}

/// Newton–Raphson MLE. β is profiled out, leaving a one-dimensional
/// Newton iteration on the strictly decreasing profile score in α.
pub fn fit_nr(s: &PhcsSample, cfg: &SolverConfig) -> Result<MlFit> {
    cfg.validate()?;
    s.require_failures(2)?;
    let start = start_point(s, cfg).alpha();
    let out = decreasing_root(
        "newton-raphson",
        |a| likelihood::profile_score(a, s),
        start,
        ALPHA_LOWER,
        ALPHA_UPPER,
        cfg.max_iters,
    )?;
    let alpha = out.root;
    let beta = likelihood::profile_beta(alpha, s)?;
    let estimate = WeibullParams::new(alpha, beta)
        .map_err(|_| Error::Divergent { method: "newton-raphson", detail: format!("beta = {beta}") })?;
    let mut fit = MlFit {
        estimate,
        method: Method::Nr,
        iterations: out.iterations,
        converged: true,
        info: None,
        ci_alpha: None,
        ci_beta: None,
    };
    observed_intervals(&mut fit, s, cfg.ci_level);
    Ok(fit)
}

/// `E[Z^α | Z > cutoff]`.
pub fn cond_exp_e1(cutoff: f64, p: WeibullParams) -> f64 {
    (1.0 + p.beta() * cutoff.powf(p.alpha())) / p.beta()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
}

fn exp_deviates<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Vec<f64> {
    (0..k).map(|_| rng.sample::<f64, _>(Exp1)).collect()
}

fn e2_from_deviates(cutoff: f64, p: WeibullParams, dev: &[f64]) -> McEstimate {
    let (a, b) = (p.alpha(), p.beta());
    let ca = cutoff.powf(a);
    let bca = b * ca;
    let vals = dev.iter().map(|&e| (ca + e / b).ln() / a * (1.0 - bca - e));
    let k = dev.len() as f64;
    let mean = compensated_sum(vals.clone()) / k;
    let ss = compensated_sum(vals.map(|v| (v - mean).powi(2)));
    McEstimate { mean, std_error: (ss / (k - 1.0)).sqrt() / k.sqrt() }
}

/// Monte Carlo estimate of `E[ln Z (1 - β Z^α) | Z > cutoff]` from
/// `points` truncated draws.
pub fn cond_exp_e2<R: Rng + ?Sized>(cutoff: f64, p: WeibullParams, points: usize, rng: &mut R) -> Result<McEstimate> {
    if cutoff.is_nan() || cutoff < 0.0 {
        return Err(Error::Domain(format!("cutoff must be nonnegative, got {cutoff}")));
    }
    if points < 2 {
        return Err(Error::InvalidParameter("need at least two Monte Carlo points".into()));
    }
    Ok(e2_from_deviates(cutoff, p, &exp_deviates(points, rng)))
}

/// `E[g(U)]` for `U = β Z^α` given `Z > cutoff`, i.e. `U = u0 + Exp(1)`.
fn truncated_expectation<F: Fn(f64) -> f64>(cutoff: f64, p: WeibullParams, g: F) -> Result<f64> {
    let u0 = p.beta() * cutoff.powf(p.alpha());
    integrate_to_infinity(|e| g(u0 + e) * (-e).exp(), 0.0, 1e-12, 1e-10)
}

/// `E[Z^α ln Z | Z > cutoff]` by quadrature.
pub fn cond_exp_e3(cutoff: f64, p: WeibullParams) -> Result<f64> {
    let (a, b) = (p.alpha(), p.beta());
    let lb = b.ln();
    truncated_expectation(cutoff, p, |u| u / b * (u.ln() - lb) / a)
}

/// `E[Z^α ln² Z | Z > cutoff]` by quadrature.
pub fn cond_exp_e4(cutoff: f64, p: WeibullParams) -> Result<f64> {
    let (a, b) = (p.alpha(), p.beta());
    let lb = b.ln();
    truncated_expectation(cutoff, p, |u| u / b * ((u.ln() - lb) / a).powi(2))
}

/// Cutoffs carrying unobserved lifetimes, with their multiplicities.
fn censored_groups(s: &PhcsSample) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = s
        .failures()
        .iter()
        .zip(s.applied_removals())
        .filter(|(_, &rm)| rm > 0)
        .map(|(&x, &rm)| (x, rm as f64))
        .collect();
    if s.r_t() > 0 {
        out.push((s.c_end(), s.r_t() as f64));
    }
    out
}

/// One EM trajectory: the iterates from the start up to the last update.
#[derive(Debug, Clone)]
pub struct EmPath {
    pub iterates: Vec<WeibullParams>,
    pub converged: bool,
}

/// Runs the EM recursion. Each sweep updates β from the closed-form
/// `E[Z^α | Z > c]` at `(α_k, β_k)`, then α from the Monte Carlo
/// `E[ln Z (1 - β Z^α) | Z > c]` at `(α_k, β_{k+1})`. The exponential
/// deviates behind the Monte Carlo step are drawn once per fit.
pub fn em_path<R: Rng + ?Sized>(s: &PhcsSample, cfg: &SolverConfig, rng: &mut R) -> Result<EmPath> {
    cfg.validate()?;
    s.require_failures(2)?;
    let groups = censored_groups(s);
    let deviates = if groups.is_empty() { Vec::new() } else { exp_deviates(cfg.mc_points, rng) };
    let n = s.n() as f64;
    let lnx: Vec<f64> = s.failures().iter().map(|x| x.ln()).collect();
    let sum_ln = compensated_sum(lnx.iter().copied());

    let mut cur = start_point(s, cfg);
    let mut iterates = vec![cur];
    for _ in 0..cfg.max_iters {
        let (a, b) = (cur.alpha(), cur.beta());
        let mut pow = CompensatedSum::new();
        let mut pow_ln = CompensatedSum::new();
        for (&x, &l) in s.failures().iter().zip(&lnx) {
            let xa = x.powf(a);
            pow.add(xa);
            pow_ln.add(xa * l);
        }
        let mut e1 = CompensatedSum::new();
        for &(c, w) in &groups {
            e1.add(w * cond_exp_e1(c, cur));
        }
        let b_next = n / (pow.value() + e1.value());
        let mid = WeibullParams::new(a, b_next)
            .map_err(|_| Error::DegenerateEStep(format!("beta update gave {b_next}")))?;
        let mut e2 = CompensatedSum::new();
        for &(c, w) in &groups {
            e2.add(w * e2_from_deviates(c, mid, &deviates).mean);
        }
        let denom = -sum_ln + b_next * pow_ln.value() - e2.value();
        let a_next = n / denom;
        if !(a_next.is_finite() && a_next > ALPHA_LOWER && a_next < ALPHA_UPPER) {
            return Err(Error::DegenerateEStep(format!("alpha update gave {a_next}")));
        }
        let next = WeibullParams::new(a_next, b_next)
            .map_err(|_| Error::DegenerateEStep(format!("update gave ({a_next}, {b_next})")))?;
        let step = (a_next - a).abs() + (b_next - b).abs();
        iterates.push(next);
        cur = next;
        if step < cfg.epsilon {
            return Ok(EmPath { iterates, converged: true });
        }
    }
    Ok(EmPath { iterates, converged: false })
}

fn louis_intervals(fit: &mut MlFit, s: &PhcsSample, level: f64) {
    if let Ok(info) = louis_information(fit.estimate, s) {
        if let Ok([va, _, vb]) = info.covariance() {
            fit.ci_alpha = Interval::normal(fit.estimate.alpha(), va, level).ok();
            fit.ci_beta = Interval::normal(fit.estimate.beta(), vb, level).ok();
        }
        fit.info = Some(Information::Louis(info));
    }
}

pub fn fit_em<R: Rng + ?Sized>(s: &PhcsSample, cfg: &SolverConfig, rng: &mut R) -> Result<MlFit> {
    let path = em_path(s, cfg, rng)?;
    if !path.converged {
        return Err(Error::NoConvergence { method: "em", iterations: cfg.max_iters });
    }
    let mut fit = MlFit {
        estimate: *path.iterates.last().expect("path holds the start"),
        method: Method::Em,
        iterations: path.iterates.len() - 1,
        converged: true,
        info: None,
        ci_alpha: None,
        ci_beta: None,
    };
    louis_intervals(&mut fit, s, cfg.ci_level);
    Ok(fit)
}

/// Stochastic EM. Every sweep imputes the withdrawn lifetimes from the
/// current left-truncated model and applies the closed-form complete-data
/// updates. The chain rarely meets the deterministic stopping rule; when
/// it does the final iterate is returned, otherwise it runs to
/// `max_iters` and the estimate averages the last `sem_tail` iterates.
pub fn fit_sem<R: Rng + ?Sized>(s: &PhcsSample, cfg: &SolverConfig, rng: &mut R) -> Result<MlFit> {
    cfg.validate()?;
    s.require_failures(2)?;
    let groups = censored_groups(s);
    let n = s.n() as f64;
    let lnx: Vec<f64> = s.failures().iter().map(|x| x.ln()).collect();
    let sum_ln = compensated_sum(lnx.iter().copied());

    let mut cur = start_point(s, cfg);
    let mut history = Vec::with_capacity(cfg.max_iters);
    let mut converged = false;
    let mut z = Vec::new();
    for _ in 0..cfg.max_iters {
        let (a, b) = (cur.alpha(), cur.beta());
        z.clear();
        for &(c, w) in &groups {
            let ca = c.powf(a);
            for _ in 0..w as usize {
                let e: f64 = rng.sample(Exp1);
                z.push(truncated_from_exponential(ca, cur, e, c));
            }
        }
        let mut pow = CompensatedSum::new();
        let mut pow_ln = CompensatedSum::new();
        let mut ln_all = CompensatedSum::new();
        ln_all.add(sum_ln);
        for (&x, &l) in s.failures().iter().zip(&lnx) {
            let xa = x.powf(a);
            pow.add(xa);
            pow_ln.add(xa * l);
        }
        for &v in &z {
            let l = v.ln();
            let va = v.powf(a);
            pow.add(va);
            pow_ln.add(va * l);
            ln_all.add(l);
        }
        let b_next = n / pow.value();
        let a_next = n / (-ln_all.value() + b_next * pow_ln.value());
        let next = match WeibullParams::new(a_next, b_next) {
            Ok(p) if a_next > ALPHA_LOWER && a_next < ALPHA_UPPER => p,
            _ => {
                return Err(Error::Divergent { method: "sem", detail: format!("iterate ({a_next}, {b_next})") });
            }
        };
        let step = (a_next - a).abs() + (b_next - b).abs();
        history.push(next);
        cur = next;
        if step < cfg.epsilon {
            converged = true;
            break;
        }
    }
    let tail = if converged {
        &history[history.len() - 1..]
    } else {
        &history[history.len().saturating_sub(cfg.sem_tail)..]
    };
    let k = tail.len() as f64;
    let alpha = compensated_sum(tail.iter().map(|p| p.alpha())) / k;
    let beta = compensated_sum(tail.iter().map(|p| p.beta())) / k;
    let mut fit = MlFit {
        estimate: WeibullParams::new(alpha, beta)?,
        method: Method::Sem,
        iterations: history.len(),
        converged,
        info: None,
        ci_alpha: None,
        ci_beta: None,
    };
    louis_intervals(&mut fit, s, cfg.ci_level);
    Ok(fit)
}

/// Symmetric 2×2 matrix stored as `[aa, ab, bb]`.
pub type Sym2 = [f64; 3];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LouisInfo {
    pub complete: Sym2,
    pub missing: Sym2,
    pub observed: Sym2,
    pub evaluated_at: WeibullParams,
}

impl LouisInfo {
    pub fn covariance(&self) -> Result<Sym2> {
        let [aa, ab, bb] = self.observed;
        covariance_2x2(aa, ab, bb)
    }
}

/// Information of one lifetime known only to exceed `cutoff`.
fn truncated_unit_info(cutoff: f64, p: WeibullParams) -> Result<Sym2> {
    let (a, b) = (p.alpha(), p.beta());
    let lc = cutoff.ln();
    let ca = cutoff.powf(a);
    Ok([
        1.0 / (a * a) + b * cond_exp_e4(cutoff, p)? - b * ca * lc * lc,
        cond_exp_e3(cutoff, p)? - ca * lc,
        1.0 / (b * b),
    ])
}

/// Observed information as complete minus missing information.
pub fn louis_information(p: WeibullParams, s: &PhcsSample) -> Result<LouisInfo> {
    let (a, b) = (p.alpha(), p.beta());
    let n = s.n() as f64;
    let e3 = cond_exp_e3(0.0, p)?;
    let e4 = cond_exp_e4(0.0, p)?;
    let complete = [n / (a * a) + n * b * e4, n * e3, n / (b * b)];
    let mut missing = [0.0; 3];
    for (c, w) in censored_groups(s) {
        let unit = truncated_unit_info(c, p)?;
        for k in 0..3 {
            missing[k] += w * unit[k];
        }
    }
    let observed = [complete[0] - missing[0], complete[1] - missing[1], complete[2] - missing[2]];
    if !(observed[0] > 0.0 && observed[0] * observed[2] - observed[1] * observed[1] > 0.0) {
        return Err(Error::NotPositiveDefinite(format!("observed information {observed:?}")));
    }
    Ok(LouisInfo { complete, missing, observed, evaluated_at: p })
}
