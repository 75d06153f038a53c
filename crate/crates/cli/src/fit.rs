//! `phcs fit` and its versioned result JSON.

use std::fs::File;
use std::io::{BufReader, Write};
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, ValueEnum};
use phcs_core::bayes::{mh_sample, tk_estimate, GammaPriors, LossSpec, McmcConfig};
use phcs_core::likelihood::Interval;
use phcs_core::ml::{fit_em, fit_nr, fit_sem, Information, MlFit, SolverConfig};
use phcs_core::shrinkage::{spt_estimate, wald_statistic, SptConfig, SptMode};
use phcs_core::{PhcsSample, WeibullParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::manifest::RunManifest;
use crate::{manifest_path, CliResult, Failure};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FitMethod {
    Nr,
    Em,
    Sem,
    Tk,
    Mcmc,
    Spt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PriorFlag {
    Flat,
    Informative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SptBase {
    Nr,
    Tk,
}

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    /// Sample CSV as written by `generate` or `censor`.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum)]
    method: FitMethod,
    #[arg(long, value_enum, default_value_t = PriorFlag::Flat)]
    prior: PriorFlag,
    /// Gamma hyperparameters `a,b,c,d` for the informative prior.
    #[arg(long, value_delimiter = ',')]
    hyper: Option<Vec<f64>>,
    /// `sel`, `linex=<nu>` or `gel=<kappa>`.
    #[arg(long, default_value = "sel")]
    #[serde(serialize_with = "display")]
    loss: LossSpec,
    /// Interval level.
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    #[arg(long, default_value_t = 1e-6)]
    epsilon: f64,
    #[arg(long, default_value_t = 500)]
    max_iters: usize,
    /// Monte Carlo points per conditional expectation in EM.
    #[arg(long, default_value_t = 5000)]
    mc_points: usize,
    #[arg(long, default_value_t = 6000)]
    mcmc_total: usize,
    #[arg(long, default_value_t = 1000)]
    mcmc_burn: usize,
    /// Write the post-burn-in chain here (mcmc only).
    #[arg(long)]
    chain_out: Option<PathBuf>,
    /// Unrestricted estimator for spt.
    #[arg(long, value_enum, default_value_t = SptBase::Nr)]
    spt_base: SptBase,
    #[arg(long, default_value_t = 0.5)]
    spt_lambda: f64,
    #[arg(long, default_value_t = 0.05)]
    spt_level: f64,
    #[arg(long, value_enum, default_value_t = SptModeFlag::Paper)]
    spt_mode: SptModeFlag,
    /// Result JSON path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SptModeFlag {
    Paper,
    Conventional,
}

fn display<T: std::fmt::Display, S: serde::Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(v)
}

#[derive(Debug, Serialize)]
pub struct Point {
    alpha: f64,
    beta: f64,
}

impl From<WeibullParams> for Point {
    fn from(p: WeibullParams) -> Self {
        Self { alpha: p.alpha(), beta: p.beta() }
    }
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum IntervalKind {
    Asymptotic,
    Hpd,
}

#[derive(Debug, Serialize)]
pub struct Intervals {
    kind: IntervalKind,
    level: f64,
    alpha: Interval,
    beta: Interval,
}

#[derive(Debug, Serialize)]
pub struct SampleSummary {
    n: usize,
    m: usize,
    t_max: f64,
    case: String,
    failures: usize,
    terminal_removals: usize,
}

#[derive(Debug, Serialize)]
pub struct FitResult {
    schema_version: u32,
    method: FitMethod,
    estimate: Point,
    intervals: Option<Intervals>,
    diagnostics: serde_json::Value,
    sample: SampleSummary,
    seed: u64,
}

impl FitArgs {
    fn priors(&self) -> CliResult<GammaPriors> {
        match (self.prior, &self.hyper) {
            (PriorFlag::Flat, _) => Ok(GammaPriors::flat()),
            (PriorFlag::Informative, Some(h)) => match h.as_slice() {
                &[a, b, c, d] => Ok(GammaPriors::new(a, b, c, d)?),
                _ => Err(Failure::validation("--hyper takes four values a,b,c,d")),
            },
            (PriorFlag::Informative, None) => {
                Err(Failure::validation("--prior informative requires --hyper a,b,c,d"))
            }
        }
    }

    fn solver(&self) -> SolverConfig {
        SolverConfig {
            epsilon: self.epsilon,
            max_iters: self.max_iters,
            mc_points: self.mc_points,
            ci_level: self.level,
            ..SolverConfig::default()
        }
    }

    fn mcmc(&self) -> McmcConfig {
        McmcConfig { n_total: self.mcmc_total, n_burn: self.mcmc_burn, proposal_cov: None }
    }

    fn validate(&self) -> CliResult<()> {
        self.solver().validate()?;
        self.mcmc().validate()?;
        if self.chain_out.is_some() && self.method != FitMethod::Mcmc {
            return Err(Failure::validation("--chain-out only applies to --method mcmc"));
        }
        Ok(())
    }
}

fn ml_result(fit: &MlFit, level: f64) -> (Option<Intervals>, serde_json::Value) {
    let intervals = match (fit.ci_alpha, fit.ci_beta) {
        (Some(alpha), Some(beta)) => Some(Intervals { kind: IntervalKind::Asymptotic, level, alpha, beta }),
        _ => None,
    };
    let diagnostics = serde_json::json!({
        "iterations": fit.iterations,
        "converged": fit.converged,
        "information": fit.info,
    });
    (intervals, diagnostics)
}

fn named(method: &str) -> impl Fn(phcs_core::Error) -> Failure + '_ {
    move |e| Failure::context(method, e)
}

pub fn cmd_fit(args: &FitArgs, seed: u64, started: Instant) -> CliResult<()> {
    args.validate()?;
    let file = File::open(&args.data)
        .map_err(|e| Failure::validation(format!("cannot read {}: {e}", args.data.display())))?;
    let s = PhcsSample::read_csv(BufReader::new(file))
        .map_err(|e| Failure::context(&format!("{}", args.data.display()), e))?;
    let priors = args.priors()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let (estimate, intervals, diagnostics) = match args.method {
        FitMethod::Nr => {
            let fit = fit_nr(&s, &args.solver()).map_err(named("nr"))?;
            let (iv, d) = ml_result(&fit, args.level);
            (fit.estimate, iv, d)
        }
        FitMethod::Em => {
            let fit = fit_em(&s, &args.solver(), &mut rng).map_err(named("em"))?;
            let (iv, d) = ml_result(&fit, args.level);
            (fit.estimate, iv, d)
        }
        FitMethod::Sem => {
            let fit = fit_sem(&s, &args.solver(), &mut rng).map_err(named("sem"))?;
            let (iv, d) = ml_result(&fit, args.level);
            (fit.estimate, iv, d)
        }
        FitMethod::Tk => {
            let p = tk_estimate(&s, &priors, args.loss).map_err(named("tk"))?;
            (p, None, serde_json::json!({ "prior": priors, "loss": args.loss.to_string() }))
        }
        FitMethod::Mcmc => {
            let chain = mh_sample(&s, &priors, &args.mcmc(), &mut rng).map_err(named("mcmc"))?;
            let p = chain.estimate(args.loss).map_err(named("mcmc"))?;
            let [alpha, beta] = chain.hpd(args.level).map_err(named("mcmc"))?;
            if let Some(path) = &args.chain_out {
                let mut out = std::io::BufWriter::new(
                    File::create(path)
                        .map_err(|e| Failure::validation(format!("cannot create {}: {e}", path.display())))?,
                );
                chain.write_csv(&mut out)?;
                out.flush()?;
            }
            let d = serde_json::json!({
                "prior": priors,
                "loss": args.loss.to_string(),
                "n_total": args.mcmc_total,
                "n_burn": args.mcmc_burn,
                "acceptance_rate": chain.acceptance_rate,
                "stuck": chain.is_stuck(),
            });
            (p, Some(Intervals { kind: IntervalKind::Hpd, level: args.level, alpha, beta }), d)
        }
        FitMethod::Spt => fit_spt(args, &s, &priors)?,
    };

    let result = FitResult {
        schema_version: SCHEMA_VERSION,
        method: args.method,
        estimate: estimate.into(),
        intervals,
        diagnostics,
        sample: SampleSummary {
            n: s.n(),
            m: s.m(),
            t_max: s.t_max(),
            case: s.case().to_string(),
            failures: s.r(),
            terminal_removals: s.r_t(),
        },
        seed,
    };
    let text = serde_json::to_string_pretty(&result)? + "\n";
    match &args.out {
        Some(path) => {
            std::fs::write(path, &text)
                .map_err(|e| Failure::validation(format!("cannot write {}: {e}", path.display())))?;
            let mut outputs = vec![path.clone()];
            outputs.extend(args.chain_out.clone());
            RunManifest::new(serde_json::to_value(args)?, seed, started, outputs).write(&manifest_path(path))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Shrinks the base estimate toward the T-K SEL estimate, gated by a Wald
/// test using the observed information at the MLE.
fn fit_spt(
    args: &FitArgs,
    s: &PhcsSample,
    priors: &GammaPriors,
) -> CliResult<(WeibullParams, Option<Intervals>, serde_json::Value)> {
    let nr = fit_nr(s, &args.solver()).map_err(named("spt"))?;
    let guess = tk_estimate(s, priors, LossSpec::Sel).map_err(named("spt"))?;
    let base = match args.spt_base {
        SptBase::Nr => nr.estimate,
        SptBase::Tk => tk_estimate(s, priors, args.loss).map_err(named("spt"))?,
    };
    let [va, _, vb] = match &nr.info {
        Some(Information::Observed(info)) => info.covariance().map_err(named("spt"))?,
        _ => return Err(Failure::context("spt", phcs_core::Error::SingularInformation("no observed information".into()))),
    };
    let cfg = SptConfig {
        theta0_alpha: guess.alpha(),
        theta0_beta: guess.beta(),
        lambda: args.spt_lambda,
        test_level: args.spt_level,
        mode: match args.spt_mode {
            SptModeFlag::Paper => SptMode::Paper,
            SptModeFlag::Conventional => SptMode::Conventional,
        },
    };
    cfg.validate()?;
    let wa = wald_statistic(base.alpha(), cfg.theta0_alpha, va).map_err(named("spt"))?;
    let wb = wald_statistic(base.beta(), cfg.theta0_beta, vb).map_err(named("spt"))?;
    let est = WeibullParams::new(
        spt_estimate(base.alpha(), cfg.theta0_alpha, wa, &cfg),
        spt_estimate(base.beta(), cfg.theta0_beta, wb, &cfg),
    )
    .map_err(named("spt"))?;
    let crit = cfg.critical_value();
    let d = serde_json::json!({
        "base": args.spt_base,
        "base_estimate": Point::from(base),
        "theta0": Point::from(guess),
        "lambda": cfg.lambda,
        "test_level": cfg.test_level,
        "critical_value": crit,
        "wald": { "alpha": wa, "beta": wb },
        "accepted": { "alpha": wa < crit, "beta": wb < crit },
    });
    Ok((est, None, d))
}
