//! Command-line pipeline: dataset generation, chain execution, credible
//! regions, and the replicated coverage experiment.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime failure.

use anyhow::{anyhow, Context};
use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};
use invopt::datagen::{self, Dataset, Family};
use invopt::experiment::{run_coverage_experiment, ExperimentConfig};
use invopt::geometry::UnitVector;
use invopt::sampler::{self, Algorithm, ChainConfig, McmcRun, Priors, Trace};
use invopt::uncertainty::{self, CredibleRegion};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "invopt", version, about = "Bayesian inverse optimization pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Lp,
    Qp,
}

impl From<FamilyArg> for Family {
    fn from(f: FamilyArg) -> Family {
        match f {
            FamilyArg::Lp => Family::Lp,
            FamilyArg::Qp => Family::Qp,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ErrorArg {
    Decision,
    Objective,
}

#[derive(Subcommand)]
enum Command {
    /// Generate one forward-problem instance as JSON.
    GenInstance {
        #[arg(long)]
        family: FamilyArg,
        /// Decision dimension.
        #[arg(long, default_value_t = 20)]
        n: usize,
        /// Constraint rows (LP only).
        #[arg(long, default_value_t = 75)]
        m: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a dataset under one of the two error processes.
    GenData {
        #[arg(long)]
        family: FamilyArg,
        #[arg(long)]
        error: ErrorArg,
        /// Decision dimension.
        #[arg(long, default_value_t = 20)]
        n: usize,
        /// Constraint rows (LP only).
        #[arg(long, default_value_t = 75)]
        m: usize,
        /// Number of observations.
        #[arg(long = "N")]
        n_obs: usize,
        /// Gaussian variance (decision error).
        #[arg(long)]
        sigma2: Option<f64>,
        /// vMF concentration (objective error).
        #[arg(long)]
        kappa: Option<f64>,
        /// True direction, comma-separated; defaults to e/sqrt(n).
        #[arg(long)]
        theta_star: Option<String>,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the matching Metropolis--Hastings sampler on a dataset.
    RunChain {
        #[arg(long)]
        data: PathBuf,
        /// 1 = decision-space, 2 = objective-space.
        #[arg(long)]
        algorithm: u8,
        /// Chain configuration JSON; flags override file values.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        chains: Option<usize>,
        #[arg(long)]
        block_size: Option<usize>,
        #[arg(long)]
        max_iters: Option<usize>,
        #[arg(long)]
        warmup_fraction: Option<f64>,
        #[arg(long)]
        psrf_threshold: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory for per-chain CSV traces and diagnostics.
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a credible region from trace CSVs.
    Region {
        /// Directory holding chain_*.csv traces.
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        out: PathBuf,
        /// Write the angular histogram CSV (dimension 2 only).
        #[arg(long)]
        emit_hist: Option<PathBuf>,
        #[arg(long, default_value_t = 72)]
        hist_bins: usize,
    },
    /// Test whether a direction lies in a saved region.
    Contains {
        #[arg(long)]
        region: PathBuf,
        /// Comma-separated direction.
        #[arg(long, allow_hyphen_values = true)]
        theta: String,
    },
    /// Root mean squared angular deviation of pooled trace samples.
    AlphaRms {
        #[arg(long)]
        trace: PathBuf,
    },
    /// Potential scale reduction factor across the traces in a directory.
    Psrf {
        #[arg(long)]
        trace: PathBuf,
    },
    /// Run a replicated coverage experiment from a config file.
    Coverage {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Parallel replications bound.
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        replications: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

enum CliError {
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Runtime(e)
    }
}

impl From<invopt::Error> for CliError {
    fn from(e: invopt::Error) -> Self {
        CliError::Runtime(anyhow::Error::new(e))
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(anyhow::Error::new(e))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0u8,
                _ => 1u8,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn parse_direction(s: &str) -> Result<UnitVector, CliError> {
    let coords: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Usage(format!("bad direction '{s}': {e}")))?;
    invopt::geometry::normalize(&coords)
        .map_err(|e| CliError::Usage(format!("bad direction '{s}': {e}")))
}

fn read_traces(dir: &Path) -> Result<Vec<Trace>, CliError> {
    let mut indexed = Vec::new();
    for entry in std::fs::read_dir(dir)
        .with_context(|| format!("reading trace directory {}", dir.display()))
        .map_err(CliError::Runtime)?
    {
        let entry = entry.map_err(|e| CliError::Runtime(e.into()))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(idx) = name
            .strip_prefix("chain_")
            .and_then(|rest| rest.strip_suffix(".csv"))
            .and_then(|num| num.parse::<usize>().ok())
        {
            indexed.push((idx, entry.path()));
        }
    }
    if indexed.is_empty() {
        return Err(CliError::Runtime(anyhow!(
            "no chain_*.csv traces in {}",
            dir.display()
        )));
    }
    indexed.sort_by_key(|(idx, _)| *idx);
    let mut traces = Vec::with_capacity(indexed.len());
    for (_, path) in indexed {
        let file = std::fs::File::open(&path)
            .with_context(|| format!("opening {}", path.display()))
            .map_err(CliError::Runtime)?;
        traces.push(Trace::read_csv(std::io::BufReader::new(file))?);
    }
    Ok(traces)
}

fn pooled_theta(traces: &[Trace]) -> Vec<UnitVector> {
    traces
        .iter()
        .flat_map(|t| t.theta_samples.iter().cloned())
        .collect()
}

#[derive(Serialize, Deserialize)]
struct Diagnostics {
    algorithm: u8,
    n_chains: usize,
    total_iters: usize,
    warmup: usize,
    psrf_final: f64,
    converged: bool,
    theta_accept_rates: Vec<f64>,
    nuisance_accept_rates: Vec<f64>,
    chain_seconds: Vec<f64>,
    serialized_seconds: f64,
}

fn write_run(out: &Path, run: &McmcRun) -> Result<(), CliError> {
    std::fs::create_dir_all(out)?;
    for (i, trace) in run.traces.iter().enumerate() {
        let path = out.join(format!("chain_{i}.csv"));
        let file = std::fs::File::create(&path)
            .with_context(|| format!("creating {}", path.display()))
            .map_err(CliError::Runtime)?;
        trace.write_csv(std::io::BufWriter::new(file))?;
    }
    let diag = Diagnostics {
        algorithm: run.algorithm.index(),
        n_chains: run.traces.len(),
        total_iters: run.total_iters,
        warmup: run.warmup,
        psrf_final: run.psrf_final,
        converged: run.converged,
        theta_accept_rates: run.traces.iter().map(Trace::theta_accept_rate).collect(),
        nuisance_accept_rates: run
            .traces
            .iter()
            .map(Trace::nuisance_accept_rate)
            .collect(),
        chain_seconds: run.chain_seconds.clone(),
        serialized_seconds: run.serialized_seconds(),
    };
    std::fs::write(
        out.join("diagnostics.json"),
        serde_json::to_string_pretty(&diag).map_err(|e| CliError::Runtime(e.into()))?,
    )?;
    Ok(())
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::GenInstance {
            family,
            n,
            m,
            seed,
            out,
        } => {
            let mut rng = invopt::seeding::rng_for(seed);
            let instance = match Family::from(family) {
                Family::Lp => invopt::forward::ForwardInstance::Lp(
                    invopt::forward::generate_lp_instance(n, m, &mut rng)?,
                ),
                Family::Qp => invopt::forward::ForwardInstance::Qp(
                    invopt::forward::generate_qp_instance(n, &mut rng)?,
                ),
            };
            std::fs::write(
                &out,
                serde_json::to_string(&instance).map_err(|e| CliError::Runtime(e.into()))?,
            )?;
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::GenData {
            family,
            error,
            n,
            m,
            n_obs,
            sigma2,
            kappa,
            theta_star,
            seed,
            out,
        } => {
            let theta_star = theta_star.as_deref().map(parse_direction).transpose()?;
            let ds = match error {
                ErrorArg::Decision => {
                    let sigma2 = sigma2.ok_or_else(|| {
                        CliError::Usage("--sigma2 is required with --error decision".to_string())
                    })?;
                    datagen::generate_decision_dataset(
                        family.into(),
                        n,
                        m,
                        n_obs,
                        sigma2,
                        theta_star,
                        seed,
                    )?
                }
                ErrorArg::Objective => {
                    let kappa = kappa.ok_or_else(|| {
                        CliError::Usage("--kappa is required with --error objective".to_string())
                    })?;
                    datagen::generate_objective_dataset(
                        family.into(),
                        n,
                        m,
                        n_obs,
                        kappa,
                        theta_star,
                        seed,
                    )?
                }
            };
            ds.save(&out)?;
            println!("wrote {} ({} observations)", out.display(), ds.len());
            Ok(())
        }
        Command::RunChain {
            data,
            algorithm,
            config,
            chains,
            block_size,
            max_iters,
            warmup_fraction,
            psrf_threshold,
            seed,
            out,
        } => {
            let algorithm =
                Algorithm::from_index(algorithm).map_err(|e| CliError::Usage(e.to_string()))?;
            let ds = Dataset::load(&data)?;
            #[derive(Default, Deserialize)]
            struct FileConfig {
                #[serde(flatten)]
                chain: Option<ChainConfig>,
                priors: Option<Priors>,
            }
            let file_cfg: FileConfig = match &config {
                Some(path) => serde_json::from_str(
                    &std::fs::read_to_string(path)
                        .with_context(|| format!("reading {}", path.display()))
                        .map_err(CliError::Runtime)?,
                )
                .map_err(|e| CliError::Runtime(e.into()))?,
                None => FileConfig::default(),
            };
            let mut cfg = file_cfg.chain.unwrap_or_default();
            let priors = file_cfg.priors.unwrap_or_default();
            if let Some(v) = chains {
                cfg.n_chains = v;
            }
            if let Some(v) = block_size {
                cfg.block_size = v;
            }
            if let Some(v) = max_iters {
                cfg.max_iters = v;
            }
            if let Some(v) = warmup_fraction {
                cfg.warmup_fraction = v;
            }
            if let Some(v) = psrf_threshold {
                cfg.psrf_threshold = v;
            }
            match seed {
                Some(s) => cfg.seed = s,
                None if config.is_some() => {}
                None => {
                    return Err(CliError::Usage(
                        "--seed is required (directly or via --config)".to_string(),
                    ))
                }
            }
            cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
            let run = match algorithm {
                Algorithm::Decision => sampler::run_chain_decision(&ds, &cfg, &priors)?,
                Algorithm::Objective => sampler::run_chain_objective(&ds, &cfg, &priors)?,
            };
            write_run(&out, &run)?;
            println!(
                "{} chains, {} iterations each, psrf {:.4}, converged: {}",
                run.traces.len(),
                run.total_iters,
                run.psrf_final,
                run.converged
            );
            Ok(())
        }
        Command::Region {
            trace,
            alpha,
            epsilon,
            out,
            emit_hist,
            hist_bins,
        } => {
            let traces = read_traces(&trace)?;
            let pooled = pooled_theta(&traces);
            let region = uncertainty::fit_region(&pooled, alpha, epsilon)?;
            region.save(&out)?;
            if let Some(hist_path) = emit_hist {
                if region.dim() != 2 {
                    return Err(CliError::Runtime(anyhow!(
                        "--emit-hist needs dimension 2, trace has {}",
                        region.dim()
                    )));
                }
                if hist_bins == 0 {
                    return Err(CliError::Usage("--hist-bins must be >= 1".to_string()));
                }
                let mut counts = vec![0usize; hist_bins];
                let width = 2.0 * std::f64::consts::PI / hist_bins as f64;
                for s in &pooled {
                    let angle = s.coords()[1].atan2(s.coords()[0]);
                    let mut bin = ((angle + std::f64::consts::PI) / width) as usize;
                    if bin >= hist_bins {
                        bin = hist_bins - 1;
                    }
                    counts[bin] += 1;
                }
                let mut csv = String::from("angle_radians,count\n");
                for (i, c) in counts.iter().enumerate() {
                    let center = -std::f64::consts::PI + (i as f64 + 0.5) * width;
                    csv.push_str(&format!("{center},{c}\n"));
                }
                std::fs::write(&hist_path, csv)?;
            }
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::Contains { region, theta } => {
            let region = CredibleRegion::load(&region)?;
            let theta = parse_direction(&theta)?;
            if theta.dim() != region.dim() {
                return Err(CliError::Usage(format!(
                    "direction has dimension {}, region has {}",
                    theta.dim(),
                    region.dim()
                )));
            }
            println!("{}", uncertainty::region_contains(&region, &theta));
            Ok(())
        }
        Command::AlphaRms { trace } => {
            let traces = read_traces(&trace)?;
            let pooled = pooled_theta(&traces);
            let radians = uncertainty::alpha_rms(&pooled)?;
            println!(
                "{}",
                serde_json::json!({"radians": radians, "degrees": radians.to_degrees()})
            );
            Ok(())
        }
        Command::Psrf { trace } => {
            let traces = read_traces(&trace)?;
            if traces.len() < 2 {
                return Err(CliError::Runtime(anyhow!(
                    "psrf needs at least 2 chain traces"
                )));
            }
            let h = traces[0]
                .theta_samples
                .first()
                .map(|t| t.dim())
                .ok_or_else(|| anyhow!("empty trace"))?;
            let mut per_param = Vec::new();
            let mut names = Vec::new();
            for p in 0..h {
                let chains: Vec<Vec<f64>> = traces
                    .iter()
                    .map(|t| t.theta_samples.iter().map(|s| s.coords()[p]).collect())
                    .collect();
                per_param.push(sampler::psrf(&chains)?);
                names.push(format!("theta_{}", p + 1));
            }
            let chains: Vec<Vec<f64>> = traces
                .iter()
                .map(|t| t.nuisance_samples.iter().map(|v| v.ln()).collect())
                .collect();
            per_param.push(sampler::psrf(&chains)?);
            names.push("log_nuisance".to_string());
            let max = per_param.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            println!(
                "{}",
                serde_json::json!({"max_psrf": max, "parameters": names, "per_param": per_param})
            );
            Ok(())
        }
        Command::Coverage {
            config,
            out,
            jobs,
            replications,
            seed,
        } => {
            let mut cfg: ExperimentConfig = serde_json::from_str(
                &std::fs::read_to_string(&config)
                    .with_context(|| format!("reading {}", config.display()))
                    .map_err(CliError::Runtime)?,
            )
            .map_err(|e| CliError::Usage(format!("bad experiment config: {e}")))?;
            if let Some(r) = replications {
                cfg.replications = r;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(j) = jobs {
                cfg.jobs = Some(j);
            }
            cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
            let report = match cfg.jobs {
                Some(j) if j > 0 => rayon::ThreadPoolBuilder::new()
                    .num_threads(j)
                    .build()
                    .map_err(|e| CliError::Runtime(e.into()))?
                    .install(|| run_coverage_experiment(&cfg))?,
                _ => run_coverage_experiment(&cfg)?,
            };
            std::fs::write(&out, report.to_json()?)?;
            println!(
                "coverage {:.3} over {} replications (alpha_RMS {:.2} ± {:.2} deg)",
                report.coverage, report.replications, report.alpha_rms_mean, report.alpha_rms_sd
            );
            Ok(())
        }
    }
}
