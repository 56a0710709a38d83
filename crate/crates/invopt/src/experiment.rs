//! Coverage/dispersion experiment harness: replicated dataset generation,
//! chain execution, credible-region construction, and report aggregation.

use crate::datagen::{self, Family};
use crate::error::{Error, Result};
use crate::sampler::{self, Algorithm, ChainConfig, Priors};
use crate::seeding;
use crate::uncertainty;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Declarative description of one coverage experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub family: Family,
    pub algorithm: Algorithm,
    /// Decision dimension (and sphere dimension).
    pub n: usize,
    /// LP constraint rows; ignored for the QP family.
    #[serde(default)]
    pub m: usize,
    /// Observations per replication.
    #[serde(rename = "N")]
    pub n_obs: usize,
    /// `sigma^2` for algorithm 1, `kappa` for algorithm 2.
    pub noise_param: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    pub replications: usize,
    pub seed: u64,
    /// Covariance regularizer; scale-relative default when absent.
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub chain: ChainConfig,
    #[serde(default)]
    pub priors: Priors,
    /// Parallel replication bound; defaults to the available cores.
    #[serde(default)]
    pub jobs: Option<usize>,
}

fn default_alpha() -> f64 {
    0.05
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::InvalidArgument(
                "replications must be >= 1".to_string(),
            ));
        }
        if self.n < 2 {
            return Err(Error::InvalidArgument("n must be >= 2".to_string()));
        }
        if self.family == Family::Lp && self.m == 0 {
            return Err(Error::InvalidArgument(
                "LP experiments need m >= 1".to_string(),
            ));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidArgument("alpha must lie in (0,1)".to_string()));
        }
        self.chain.validate()
    }
}

/// Per-replication outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplicationResult {
    pub contained: bool,
    /// Degrees.
    pub alpha_rms: f64,
    pub psrf_final: f64,
    pub iters: usize,
}

/// Aggregated coverage report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoverageReport {
    pub family: Family,
    pub algorithm: Algorithm,
    pub n: usize,
    pub m: usize,
    #[serde(rename = "N")]
    pub n_obs: usize,
    pub noise_param: f64,
    pub alpha: f64,
    pub seed: u64,
    /// Successful replications (the coverage denominator).
    pub replications: usize,
    /// Replications dropped after an error.
    pub failures: usize,
    pub coverage: f64,
    /// Mean alpha_RMS in degrees across successful replications.
    pub alpha_rms_mean: f64,
    /// Standard deviation of alpha_RMS in degrees.
    pub alpha_rms_sd: f64,
    /// Mean per-replication chain time with chains serialized, seconds.
    pub wall_clock_s: f64,
    pub per_replication: Vec<ReplicationResult>,
}

impl CoverageReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Seed for replication `r`'s dataset.
pub fn dataset_seed(master: u64, rep: u64) -> u64 {
    seeding::derive(master, 2 * rep)
}

/// Seed for replication `r`'s chains.
pub fn chain_seed(master: u64, rep: u64) -> u64 {
    seeding::derive(master, 2 * rep + 1)
}

struct RepOutcome {
    result: ReplicationResult,
    serialized_seconds: f64,
}

fn run_replication(cfg: &ExperimentConfig, rep: u64) -> Result<RepOutcome> {
    let ds = match cfg.algorithm {
        Algorithm::Decision => datagen::generate_decision_dataset(
            cfg.family,
            cfg.n,
            cfg.m,
            cfg.n_obs,
            cfg.noise_param,
            None,
            dataset_seed(cfg.seed, rep),
        )?,
        Algorithm::Objective => datagen::generate_objective_dataset(
            cfg.family,
            cfg.n,
            cfg.m,
            cfg.n_obs,
            cfg.noise_param,
            None,
            dataset_seed(cfg.seed, rep),
        )?,
    };
    let chain_cfg = ChainConfig {
        seed: chain_seed(cfg.seed, rep),
        ..cfg.chain.clone()
    };
    let run = match cfg.algorithm {
        Algorithm::Decision => sampler::run_chain_decision(&ds, &chain_cfg, &cfg.priors)?,
        Algorithm::Objective => sampler::run_chain_objective(&ds, &chain_cfg, &cfg.priors)?,
    };
    let pooled = run.pooled_theta();
    let region = uncertainty::fit_region(&pooled, cfg.alpha, cfg.epsilon)?;
    let contained = uncertainty::region_contains(&region, &ds.theta_star);
    let rms_deg = uncertainty::alpha_rms(&pooled)?.to_degrees();
    Ok(RepOutcome {
        result: ReplicationResult {
            contained,
            alpha_rms: rms_deg,
            psrf_final: run.psrf_final,
            iters: run.total_iters,
        },
        serialized_seconds: run.serialized_seconds(),
    })
}

/// Runs the full replicated experiment. Replications execute independently
/// (parallel up to the caller's thread pool) with seeds derived per index,
/// so results do not depend on the schedule. Fails when more than 5% of
/// replications error out.
pub fn run_coverage_experiment(cfg: &ExperimentConfig) -> Result<CoverageReport> {
    cfg.validate()?;
    let outcomes: Vec<Result<RepOutcome>> = (0..cfg.replications as u64)
        .into_par_iter()
        .map(|rep| run_replication(cfg, rep))
        .collect();

    let mut per_replication = Vec::with_capacity(cfg.replications);
    let mut failures = 0usize;
    let mut times = Vec::new();
    for outcome in outcomes {
        match outcome {
            Ok(o) => {
                per_replication.push(o.result);
                times.push(o.serialized_seconds);
            }
            Err(e) => {
                failures += 1;
                eprintln!("warning: replication failed: {e}");
            }
        }
    }
    if failures * 20 > cfg.replications {
        return Err(Error::InvalidArgument(format!(
            "{failures} of {} replications failed (> 5%)",
            cfg.replications
        )));
    }
    let successes = per_replication.len();
    if successes == 0 {
        return Err(Error::InvalidArgument(
            "no successful replications".to_string(),
        ));
    }
    let contained = per_replication.iter().filter(|r| r.contained).count();
    let coverage = contained as f64 / successes as f64;
    let mean = per_replication.iter().map(|r| r.alpha_rms).sum::<f64>() / successes as f64;
    let sd = if successes > 1 {
        (per_replication
            .iter()
            .map(|r| (r.alpha_rms - mean) * (r.alpha_rms - mean))
            .sum::<f64>()
            / (successes as f64 - 1.0))
            .sqrt()
    } else {
        0.0
    };
    let wall_clock_s = times.iter().sum::<f64>() / times.len() as f64;

    Ok(CoverageReport {
        family: cfg.family,
        algorithm: cfg.algorithm,
        n: cfg.n,
        m: cfg.m,
        n_obs: cfg.n_obs,
        noise_param: cfg.noise_param,
        alpha: cfg.alpha,
        seed: cfg.seed,
        replications: successes,
        failures,
        coverage,
        alpha_rms_mean: mean,
        alpha_rms_sd: sd,
        wall_clock_s,
        per_replication,
    })
}
