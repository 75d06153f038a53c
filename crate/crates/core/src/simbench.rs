//! Monte Carlo bench: repeated generation and estimation over cells of
//! (scheme, truth, estimators), aggregated into Avg / MSE / IL / CP.
//!
//! Replicate `i` of a cell draws from `ChaCha8Rng` seeded with the cell seed
//! on stream `i`, so results do not depend on the worker count.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bayes::{mh_sample, tk_estimate, GammaPriors, LossSpec, McmcConfig, PosteriorChain};
use crate::censoring::{generate, CensoringScheme, PhcsSample};
use crate::error::{Error, Result};
use crate::likelihood::Interval;
use crate::ml::{fit_em, fit_nr, fit_sem, MlFit, SolverConfig};
use crate::numeric::CompensatedSum;
use crate::shrinkage::{spt_estimate, wald_statistic, SptConfig};
use crate::weibull::WeibullParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriorKind {
    Informative,
    Flat,
}

/// One estimator in a cell, written as e.g. `nr`, `tk:informative:sel`,
/// `mcmc:flat:linex=-0.5` or `spt:tk:informative:gel=0.5`.
#[derive(Debug, Clone, PartialEq)]
pub enum EstimatorSpec {
    Nr,
    Em,
    Sem,
    Tk { prior: PriorKind, loss: LossSpec },
    Mcmc { prior: PriorKind, loss: LossSpec },
    Spt { base: Box<EstimatorSpec> },
}

impl EstimatorSpec {
    /// Loss used to score the estimator in the MSE column.
    pub fn scoring_loss(&self) -> LossSpec {
        match self {
            EstimatorSpec::Tk { loss, .. } | EstimatorSpec::Mcmc { loss, .. } => *loss,
            _ => LossSpec::Sel,
        }
    }
}

impl fmt::Display for EstimatorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let prior = |p: &PriorKind| match p {
            PriorKind::Informative => "informative",
            PriorKind::Flat => "flat",
        };
        match self {
            EstimatorSpec::Nr => f.write_str("nr"),
            EstimatorSpec::Em => f.write_str("em"),
            EstimatorSpec::Sem => f.write_str("sem"),
            EstimatorSpec::Tk { prior: p, loss } => write!(f, "tk:{}:{loss}", prior(p)),
            EstimatorSpec::Mcmc { prior: p, loss } => write!(f, "mcmc:{}:{loss}", prior(p)),
            EstimatorSpec::Spt { base } => write!(f, "spt:{base}"),
        }
    }
}

impl FromStr for EstimatorSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let text = s.trim().to_ascii_lowercase();
        let parts: Vec<&str> = text.split(':').collect();
        let bad = || Error::Parse(format!("unknown estimator '{s}'"));
        let prior = |p: &str| match p {
            "informative" | "inf" => Ok(PriorKind::Informative),
            "flat" | "noninformative" => Ok(PriorKind::Flat),
            _ => Err(Error::Parse(format!("unknown prior '{p}' in '{s}'"))),
        };
        match parts.as_slice() {
            ["nr"] => Ok(EstimatorSpec::Nr),
            ["em"] => Ok(EstimatorSpec::Em),
            ["sem"] => Ok(EstimatorSpec::Sem),
            ["tk", p, l] => Ok(EstimatorSpec::Tk { prior: prior(p)?, loss: l.parse()? }),
            ["mcmc", p, l] => Ok(EstimatorSpec::Mcmc { prior: prior(p)?, loss: l.parse()? }),
            ["spt", rest @ ..] if !rest.is_empty() => {
                let base: EstimatorSpec = rest.join(":").parse()?;
                match base {
                    EstimatorSpec::Nr | EstimatorSpec::Tk { .. } => Ok(EstimatorSpec::Spt { base: Box::new(base) }),
                    _ => Err(Error::Parse(format!("shrinkage needs an nr or tk base, got '{s}'"))),
                }
            }
            _ => Err(bad()),
        }
    }
}

impl Serialize for EstimatorSpec {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        ser.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for EstimatorSpec {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(de)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSpec {
    pub name: String,
    pub scheme: CensoringScheme,
    pub truth: WeibullParams,
    pub estimators: Vec<EstimatorSpec>,
    pub replications: usize,
    pub seed: u64,
    pub priors: GammaPriors,
    pub solver: SolverConfig,
    pub mcmc: McmcConfig,
    pub spt: SptConfig,
    pub level: f64,
}

impl CellSpec {
    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::Config(format!("{}: replications must be at least 1", self.name)));
        }
        if self.estimators.is_empty() {
            return Err(Error::Config(format!("{}: no estimators", self.name)));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::Config(format!("{}: level must lie in (0, 1)", self.name)));
        }
        self.solver.validate()?;
        self.mcmc.validate()?;
        self.spt.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub estimator: String,
    pub parameter: String,
    pub avg: f64,
    pub se_avg: f64,
    pub mse: f64,
    pub il: Option<f64>,
    pub cp: Option<f64>,
    pub discarded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub cell: String,
    pub replications: usize,
    pub attempted: usize,
    pub discarded: usize,
    pub rows: Vec<ReportRow>,
}

impl BenchReport {
    pub fn row(&self, estimator: &str, parameter: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.estimator == estimator && r.parameter == parameter)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["cell", "estimator", "parameter", "avg", "se_avg", "mse", "il", "cp", "discarded"])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                self.cell.clone(),
                r.estimator.clone(),
                r.parameter.clone(),
                r.avg.to_string(),
                r.se_avg.to_string(),
                r.mse.to_string(),
                opt(r.il),
                opt(r.cp),
                r.discarded.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Fixed-width table with one line per estimator.
    pub fn to_text_table(&self) -> String {
        let mut out = format!(
            "{} ({} replications, {} discarded)\n{:<32} {:>9} {:>9} {:>9} {:>9} {:>9} {:>7} {:>9} {:>7}\n",
            self.cell, self.replications, self.discarded, "estimator", "Avg(a)", "MSE(a)", "Avg(b)", "MSE(b)", "IL(a)",
            "CP(a)", "IL(b)", "CP(b)"
        );
        let fmt_opt = |v: Option<f64>, p: usize| v.map(|x| format!("{x:.p$}")).unwrap_or_else(|| "-".into());
        let mut seen = Vec::new();
        for r in &self.rows {
            if seen.contains(&r.estimator) {
                continue;
            }
            seen.push(r.estimator.clone());
            let (Some(a), Some(b)) = (self.row(&r.estimator, "alpha"), self.row(&r.estimator, "beta")) else {
                continue;
            };
            out.push_str(&format!(
                "{:<32} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>9} {:>7} {:>9} {:>7}\n",
                r.estimator,
                a.avg,
                a.mse,
                b.avg,
                b.mse,
                fmt_opt(a.il, 4),
                fmt_opt(a.cp, 2),
                fmt_opt(b.il, 4),
                fmt_opt(b.cp, 2)
            ));
        }
        out
    }
}

/// `lo <= truth <= hi`.
pub fn coverage_check(interval: (f64, f64), truth: f64) -> Result<bool> {
    let iv = Interval::new(interval.0, interval.1)?;
    Ok(iv.contains(truth))
}

/// Moment-matched gamma priors from MLEs of `k_samples` simulated complete
/// samples of size `n_past`.
pub fn elicit_priors<R: rand::Rng + ?Sized>(
    k_samples: usize,
    n_past: usize,
    truth: WeibullParams,
    rng: &mut R,
) -> Result<GammaPriors> {
    if k_samples < 2 {
        return Err(Error::InvalidParameter("need at least two past samples".into()));
    }
    let scheme = CensoringScheme::new(n_past, n_past, vec![0; n_past], f64::INFINITY)?;
    let cfg = SolverConfig::default();
    let mut alphas = Vec::with_capacity(k_samples);
    let mut betas = Vec::with_capacity(k_samples);
    let mut failures = 0usize;
    while alphas.len() < k_samples {
        let s = generate(&scheme, truth, rng)?;
        match fit_nr(&s, &cfg) {
            Ok(fit) => {
                alphas.push(fit.estimate.alpha());
                betas.push(fit.estimate.beta());
            }
            Err(e) => {
                failures += 1;
                if failures > 10 * k_samples {
                    return Err(e);
                }
            }
        }
    }
    let (a, b) = gamma_moments(&alphas)?;
    let (c, d) = gamma_moments(&betas)?;
    GammaPriors::new(a, b, c, d)
}

/// `(shape, rate)` with the sample mean and variance (K-1 denominator).
pub fn gamma_moments(xs: &[f64]) -> Result<(f64, f64)> {
    let k = xs.len() as f64;
    let mean = xs.iter().copied().collect::<CompensatedSum>().value() / k;
    let var = xs.iter().map(|x| (x - mean).powi(2)).collect::<CompensatedSum>().value() / (k - 1.0);
    if !(var > 0.0) {
        return Err(Error::DegenerateElicitation(format!("sample variance {var}")));
    }
    Ok((mean * mean / var, mean / var))
}

#[derive(Debug, Clone, Copy)]
struct EstimateOut {
    estimate: [f64; 2],
    intervals: Option<[Interval; 2]>,
}

fn ml_out(fit: &MlFit) -> EstimateOut {
    let intervals = match (fit.ci_alpha, fit.ci_beta) {
        (Some(a), Some(b)) => Some([a, b]),
        _ => None,
    };
    EstimateOut { estimate: fit.estimate.to_array(), intervals }
}

struct ReplicateContext<'a> {
    spec: &'a CellSpec,
    sample: &'a PhcsSample,
    nr: Option<MlFit>,
    chains: Vec<(PriorKind, PosteriorChain)>,
}

impl ReplicateContext<'_> {
    fn nr(&mut self) -> Result<&MlFit> {
        if self.nr.is_none() {
            self.nr = Some(fit_nr(self.sample, &self.spec.solver)?);
        }
        Ok(self.nr.as_ref().expect("just set"))
    }

    fn priors(&self, kind: PriorKind) -> GammaPriors {
        match kind {
            PriorKind::Informative => self.spec.priors,
            PriorKind::Flat => GammaPriors::flat(),
        }
    }

    fn run(&mut self, est: &EstimatorSpec, rng: &mut ChaCha8Rng) -> Result<EstimateOut> {
        let s = self.sample;
        match est {
            EstimatorSpec::Nr => Ok(ml_out(self.nr()?)),
            EstimatorSpec::Em => Ok(ml_out(&fit_em(s, &self.spec.solver, rng)?)),
            EstimatorSpec::Sem => Ok(ml_out(&fit_sem(s, &self.spec.solver, rng)?)),
            EstimatorSpec::Tk { prior, loss } => {
                let p = tk_estimate(s, &self.priors(*prior), *loss)?;
                Ok(EstimateOut { estimate: p.to_array(), intervals: None })
            }
            EstimatorSpec::Mcmc { prior, loss } => {
                // one chain per prior, shared by every loss
                if !self.chains.iter().any(|(k, _)| k == prior) {
                    let chain = mh_sample(s, &self.priors(*prior), &self.spec.mcmc, rng)?;
                    self.chains.push((*prior, chain));
                }
                let chain = &self.chains.iter().find(|(k, _)| k == prior).expect("inserted above").1;
                let p = chain.estimate(*loss)?;
                Ok(EstimateOut { estimate: p.to_array(), intervals: Some(chain.hpd(self.spec.level)?) })
            }
            EstimatorSpec::Spt { base } => {
                let unrestricted = self.run(base, rng)?.estimate;
                let nr = self.nr()?;
                let [va, _, vb] = match &nr.info {
                    Some(crate::ml::Information::Observed(info)) => info.covariance()?,
                    _ => return Err(Error::SingularInformation("no observed information at the MLE".into())),
                };
                let cfg = &self.spec.spt;
                let theta0 = [cfg.theta0_alpha, cfg.theta0_beta];
                let var = [va, vb];
                let mut out = [0.0; 2];
                for k in 0..2 {
                    let w = wald_statistic(unrestricted[k], theta0[k], var[k])?;
                    out[k] = spt_estimate(unrestricted[k], theta0[k], w, cfg);
                }
                Ok(EstimateOut { estimate: out, intervals: None })
            }
        }
    }
}

struct ReplicateResult {
    outputs: Vec<EstimateOut>,
    discarded: usize,
}

const MAX_REDRAWS: usize = 10_000;

fn run_replicate(spec: &CellSpec, index: u64) -> Result<ReplicateResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index);
    let mut discarded = 0;
    loop {
        if discarded > MAX_REDRAWS {
            return Err(Error::NoConvergence { method: "replicate redraw", iterations: MAX_REDRAWS });
        }
        let sample = match generate(&spec.scheme, spec.truth, &mut rng) {
            Ok(s) if s.r() >= 2 => s,
            Ok(_) | Err(Error::NoFailures) => {
                discarded += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let mut ctx = ReplicateContext { spec, sample: &sample, nr: None, chains: Vec::new() };
        let outputs: Result<Vec<_>> = spec.estimators.iter().map(|e| ctx.run(e, &mut rng)).collect();
        match outputs {
            Ok(outputs) => return Ok(ReplicateResult { outputs, discarded }),
            Err(_) => discarded += 1,
        }
    }
}

/// Runs every replicate of a cell on `workers` threads (0 = all cores).
pub fn run_cell(spec: &CellSpec, workers: usize) -> Result<BenchReport> {
    spec.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let results: Vec<Result<ReplicateResult>> =
        pool.install(|| (0..spec.replications as u64).into_par_iter().map(|i| run_replicate(spec, i)).collect());
    let results: Vec<ReplicateResult> = results.into_iter().collect::<Result<_>>()?;
    Ok(aggregate(spec, &results))
}

fn aggregate(spec: &CellSpec, results: &[ReplicateResult]) -> BenchReport {
    let discarded: usize = results.iter().map(|r| r.discarded).sum();
    let reps = results.len() as f64;
    let truth = spec.truth.to_array();
    let mut rows = Vec::new();
    for (e, est) in spec.estimators.iter().enumerate() {
        let loss = est.scoring_loss();
        for (k, name) in ["alpha", "beta"].into_iter().enumerate() {
            let vals: Vec<f64> = results.iter().map(|r| r.outputs[e].estimate[k]).collect();
            let avg = vals.iter().copied().collect::<CompensatedSum>().value() / reps;
            let var = if vals.len() > 1 {
                vals.iter().map(|v| (v - avg).powi(2)).collect::<CompensatedSum>().value() / (reps - 1.0)
            } else {
                0.0
            };
            let mse = vals.iter().map(|&v| loss.loss(v, truth[k])).collect::<CompensatedSum>().value() / reps;
            let ivs: Vec<Interval> = results.iter().filter_map(|r| r.outputs[e].intervals.map(|iv| iv[k])).collect();
            let (il, cp) = if ivs.is_empty() {
                (None, None)
            } else {
                let m = ivs.len() as f64;
                let il = ivs.iter().map(Interval::length).collect::<CompensatedSum>().value() / m;
                let hits = ivs.iter().filter(|iv| iv.contains(truth[k])).count() as f64;
                (Some(il), Some(100.0 * hits / m))
            };
            rows.push(ReportRow {
                estimator: est.to_string(),
                parameter: name.to_string(),
                avg,
                se_avg: (var / reps).sqrt(),
                mse,
                il,
                cp,
                discarded,
            });
        }
    }
    BenchReport {
        cell: spec.name.clone(),
        replications: results.len(),
        attempted: results.len() + discarded,
        discarded,
        rows,
    }
}

/// Declarative grid of cells read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    pub seed: u64,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default = "default_level")]
    pub level: f64,
    pub truth: TruthConfig,
    #[serde(default)]
    pub priors: Option<PriorConfig>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub mcmc: McmcConfig,
    #[serde(default)]
    pub spt: SptConfig,
    #[serde(rename = "cell")]
    pub cells: Vec<CellConfig>,
}

fn default_replications() -> usize {
    1000
}

fn default_level() -> f64 {
    0.95
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthConfig {
    pub alpha: f64,
    pub beta: f64,
}

/// Either fixed hyperparameters or an elicitation recipe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PriorConfig {
    Fixed { a: f64, b: f64, c: f64, d: f64 },
    Elicit { elicit_samples: usize, elicit_n: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellConfig {
    pub name: String,
    pub n: usize,
    pub m: usize,
    pub t_max: f64,
    pub scheme: String,
    pub estimators: Vec<EstimatorSpec>,
    #[serde(default)]
    pub replications: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl BenchConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: BenchConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::Config("replications: must be at least 1".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::Config("level: must lie in (0, 1)".into()));
        }
        WeibullParams::new(self.truth.alpha, self.truth.beta).map_err(|e| Error::Config(format!("truth: {e}")))?;
        self.solver.validate().map_err(|e| Error::Config(format!("solver: {e}")))?;
        self.mcmc.validate().map_err(|e| Error::Config(format!("mcmc: {e}")))?;
        self.spt.validate().map_err(|e| Error::Config(format!("spt: {e}")))?;
        match self.priors {
            Some(PriorConfig::Fixed { a, b, c, d }) => {
                GammaPriors::new(a, b, c, d).map_err(|e| Error::Config(format!("priors: {e}")))?;
            }
            Some(PriorConfig::Elicit { elicit_samples, elicit_n }) if elicit_samples < 2 || elicit_n < 2 => {
                return Err(Error::Config("priors: elicitation needs at least 2 samples of size 2".into()));
            }
            Some(PriorConfig::Elicit { .. }) | None => {}
        }
        if self.cells.is_empty() {
            return Err(Error::Config("cell: at least one [[cell]] is required".into()));
        }
        for (i, c) in self.cells.iter().enumerate() {
            let at = |msg: String| Error::Config(format!("cell[{i}] ({}): {msg}", c.name));
            if c.replications == Some(0) {
                return Err(at("replications: must be at least 1".into()));
            }
            if c.estimators.is_empty() {
                return Err(at("estimators: list is empty".into()));
            }
            CensoringScheme::from_shorthand(&c.scheme, c.n, c.m, c.t_max).map_err(|e| at(format!("scheme: {e}")))?;
            let needs_informative = c.estimators.iter().any(uses_informative);
            if needs_informative && self.priors.is_none() {
                return Err(at("estimators: informative prior requested but [priors] is missing".into()));
            }
        }
        Ok(())
    }

    /// Resolves every cell, eliciting priors once if requested.
    pub fn cells(&self, reps_override: Option<usize>) -> Result<Vec<CellSpec>> {
        let truth = WeibullParams::new(self.truth.alpha, self.truth.beta)?;
        let priors = match self.priors {
            Some(PriorConfig::Fixed { a, b, c, d }) => GammaPriors::new(a, b, c, d)?,
            Some(PriorConfig::Elicit { elicit_samples, elicit_n }) => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                rng.set_stream(u64::MAX);
                elicit_priors(elicit_samples, elicit_n, truth, &mut rng)?
            }
            None => GammaPriors::flat(),
        };
        if reps_override == Some(0) {
            return Err(Error::Config("replications: must be at least 1".into()));
        }
        self.cells
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let mut solver = self.solver;
                solver.ci_level = self.level;
                Ok(CellSpec {
                    name: c.name.clone(),
                    scheme: CensoringScheme::from_shorthand(&c.scheme, c.n, c.m, c.t_max)?,
                    truth,
                    estimators: c.estimators.clone(),
                    replications: reps_override.or(c.replications).unwrap_or(self.replications),
                    seed: c.seed.unwrap_or(self.seed.wrapping_add(i as u64)),
                    priors,
                    solver,
                    mcmc: self.mcmc,
                    spt: self.spt,
                    level: self.level,
                })
            })
            .collect()
    }
}

fn uses_informative(e: &EstimatorSpec) -> bool {
    match e {
        EstimatorSpec::Tk { prior, .. } | EstimatorSpec::Mcmc { prior, .. } => *prior == PriorKind::Informative,
        EstimatorSpec::Spt { base } => uses_informative(base),
        _ => false,
    }
}
