//! Metropolis--Hastings samplers for the two error processes.
//!
//! Both algorithms walk the unit hypersphere with a Gaussian proposal
//! projected back to the sphere (`z ~ N(theta, S)`, `theta_c = z/||z||`),
//! treating the proposal ratio as 1. The proposal covariance follows the
//! Haario adaptive scheme during warm-up and is frozen afterwards, so every
//! retained sample comes from a fixed kernel. The nuisance parameter
//! (`sigma` or `kappa`) is updated separately each iteration by a random
//! walk on its logarithm.
//!
//! Several chains run in lockstep blocks; after each block the controller
//! checks the potential scale reduction factor over every Cartesian
//! coordinate of `theta` plus the log nuisance, on the samples drawn since
//! the last adaptation freeze. When the check fails and the run extends,
//! adaptation reopens for the warm-up fraction of the next block (the
//! discarded prefix grows accordingly); iteration stops once the maximum
//! PSRF drops below the configured threshold or the cap is reached.

mod diagnostics;

pub use diagnostics::{max_psrf, psrf};

use crate::datagen::Dataset;
use crate::distributions::{
    gamma_log_density, half_cauchy_log_density, vmf_log_norm_const,
};
use crate::error::{Error, Result};
use crate::forward::{ForwardInstance, QpFactors};
use crate::geometry::{self, UnitVector};
use crate::recovery;
use crate::seeding;
use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use std::time::Instant;

/// Which sampler ran. Serialized as `1` (decision-space) or `2`
/// (objective-space).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Algorithm {
    /// Decision-space error: forward solves inside the loop.
    Decision,
    /// Objective-space error: inverse recoveries once, then closed-form
    /// likelihood evaluations.
    Objective,
}

impl Algorithm {
    pub fn from_index(i: u8) -> Result<Self> {
        match i {
            1 => Ok(Algorithm::Decision),
            2 => Ok(Algorithm::Objective),
            other => Err(Error::InvalidArgument(format!(
                "algorithm must be 1 or 2, got {other}"
            ))),
        }
    }

    pub fn index(self) -> u8 {
        match self {
            Algorithm::Decision => 1,
            Algorithm::Objective => 2,
        }
    }
}

impl TryFrom<u8> for Algorithm {
    type Error = Error;

    fn try_from(value: u8) -> Result<Self> {
        Algorithm::from_index(value)
    }
}

impl From<Algorithm> for u8 {
    fn from(a: Algorithm) -> u8 {
        a.index()
    }
}

/// Prior hyperparameters. The paper names the families (half-Cauchy on
/// `sigma`, Gamma on `kappa`) but not their constants; these defaults are
/// weakly informative over the experimental ranges.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Priors {
    #[serde(default = "default_hc_scale")]
    pub half_cauchy_scale: f64,
    #[serde(default = "default_gamma_shape")]
    pub gamma_shape: f64,
    #[serde(default = "default_gamma_rate")]
    pub gamma_rate: f64,
}

fn default_hc_scale() -> f64 {
    1.0
}
fn default_gamma_shape() -> f64 {
    2.0
}
fn default_gamma_rate() -> f64 {
    0.1
}

impl Default for Priors {
    fn default() -> Self {
        Self {
            half_cauchy_scale: default_hc_scale(),
            gamma_shape: default_gamma_shape(),
            gamma_rate: default_gamma_rate(),
        }
    }
}

/// Multi-chain run configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainConfig {
    #[serde(default = "default_n_chains")]
    pub n_chains: usize,
    /// Iterations between PSRF checks.
    #[serde(default = "default_block_size")]
    pub block_size: usize,
    /// Iteration cap per chain; must be a multiple of `block_size`.
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_warmup_fraction")]
    pub warmup_fraction: f64,
    #[serde(default = "default_psrf_threshold")]
    pub psrf_threshold: f64,
    /// Acceptance-rate band targeted by the warm-up adaptation.
    #[serde(default = "default_target_accept")]
    pub target_accept: (f64, f64),
    #[serde(default)]
    pub seed: u64,
}

fn default_n_chains() -> usize {
    4
}
fn default_block_size() -> usize {
    10_000
}
fn default_max_iters() -> usize {
    100_000
}
fn default_warmup_fraction() -> f64 {
    0.25
}
fn default_psrf_threshold() -> f64 {
    1.1
}
fn default_target_accept() -> (f64, f64) {
    (0.25, 0.40)
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            n_chains: default_n_chains(),
            block_size: default_block_size(),
            max_iters: default_max_iters(),
            warmup_fraction: default_warmup_fraction(),
            psrf_threshold: default_psrf_threshold(),
            target_accept: default_target_accept(),
            seed: 0,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_chains < 2 {
            return Err(Error::InvalidArgument(
                "need at least 2 chains for PSRF".to_string(),
            ));
        }
        if self.block_size < 100 {
            return Err(Error::InvalidArgument(
                "block_size must be >= 100".to_string(),
            ));
        }
        if self.max_iters < self.block_size || !self.max_iters.is_multiple_of(self.block_size) {
            return Err(Error::InvalidArgument(
                "max_iters must be a positive multiple of block_size".to_string(),
            ));
        }
        if self.warmup_fraction.is_nan()
            || self.warmup_fraction <= 0.0
            || self.warmup_fraction >= 1.0
        {
            return Err(Error::InvalidArgument(
                "warmup_fraction must lie in (0, 1)".to_string(),
            ));
        }
        if self.psrf_threshold.is_nan() || self.psrf_threshold <= 1.0 {
            return Err(Error::InvalidArgument(
                "psrf_threshold must exceed 1".to_string(),
            ));
        }
        let (lo, hi) = self.target_accept;
        if !(0.0 < lo && lo < hi && hi < 1.0) {
            return Err(Error::InvalidArgument(
                "target_accept must satisfy 0 < lo < hi < 1".to_string(),
            ));
        }
        Ok(())
    }
}

/// Post-warm-up samples of one chain.
#[derive(Debug, Clone)]
pub struct Trace {
    pub theta_samples: Vec<UnitVector>,
    /// `sigma` or `kappa` per retained iteration.
    pub nuisance_samples: Vec<f64>,
    pub accept_theta: Vec<bool>,
    pub accept_nuisance: Vec<bool>,
    /// Absolute (1-based) iteration index of the first retained row.
    pub first_iter: usize,
    /// Frozen proposal covariance.
    pub proposal_cov_final: DMatrix<f64>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.theta_samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta_samples.is_empty()
    }

    pub fn theta_accept_rate(&self) -> f64 {
        if self.accept_theta.is_empty() {
            return 0.0;
        }
        self.accept_theta.iter().filter(|&&a| a).count() as f64 / self.accept_theta.len() as f64
    }

    pub fn nuisance_accept_rate(&self) -> f64 {
        if self.accept_nuisance.is_empty() {
            return 0.0;
        }
        self.accept_nuisance.iter().filter(|&&a| a).count() as f64
            / self.accept_nuisance.len() as f64
    }

    /// Writes `iter,theta_1..theta_h,nuisance,accepted_theta,accepted_nuisance`
    /// rows, one per retained iteration, full decimal precision.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        let h = self
            .theta_samples
            .first()
            .map_or(0, |t| t.dim());
        let mut header = String::from("iter");
        for k in 1..=h {
            header.push_str(&format!(",theta_{k}"));
        }
        header.push_str(",nuisance,accepted_theta,accepted_nuisance");
        writeln!(w, "{header}")?;
        for (row, theta) in self.theta_samples.iter().enumerate() {
            let mut line = format!("{}", self.first_iter + row);
            for c in theta.coords() {
                line.push_str(&format!(",{c}"));
            }
            line.push_str(&format!(
                ",{},{},{}",
                self.nuisance_samples[row],
                self.accept_theta[row] as u8,
                self.accept_nuisance[row] as u8
            ));
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    /// Reads a trace written by [`Trace::write_csv`]. The frozen proposal
    /// covariance is not stored in the CSV and comes back as an empty matrix.
    pub fn read_csv<R: std::io::BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Io("empty trace file".to_string()))??;
        let cols: Vec<&str> = header.split(',').collect();
        if cols.len() < 5 || cols[0] != "iter" {
            return Err(Error::Io(format!("unrecognized trace header: {header}")));
        }
        let h = cols.len() - 4;
        let mut trace = Trace {
            theta_samples: Vec::new(),
            nuisance_samples: Vec::new(),
            accept_theta: Vec::new(),
            accept_nuisance: Vec::new(),
            first_iter: 0,
            proposal_cov_final: DMatrix::zeros(0, 0),
        };
        for line in lines {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != cols.len() {
                return Err(Error::Io(format!("ragged trace row: {line}")));
            }
            let iter: usize = fields[0]
                .parse()
                .map_err(|e| Error::Io(format!("bad iter field: {e}")))?;
            if trace.theta_samples.is_empty() {
                trace.first_iter = iter;
            }
            let coords: Vec<f64> = fields[1..=h]
                .iter()
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Io(format!("bad theta field: {e}")))?;
            trace.theta_samples.push(
                UnitVector::new(coords).map_err(|e| Error::Io(format!("trace row: {e}")))?,
            );
            let nuisance: f64 = fields[h + 1]
                .parse()
                .map_err(|e| Error::Io(format!("bad nuisance field: {e}")))?;
            if nuisance.is_nan() || nuisance <= 0.0 {
                return Err(Error::Io(format!(
                    "nuisance sample must be positive, got {nuisance}"
                )));
            }
            trace.nuisance_samples.push(nuisance);
            trace.accept_theta.push(fields[h + 2] == "1");
            trace.accept_nuisance.push(fields[h + 3] == "1");
        }
        Ok(trace)
    }
}

/// Outcome of a multi-chain run.
#[derive(Debug, Clone)]
pub struct McmcRun {
    pub algorithm: Algorithm,
    pub traces: Vec<Trace>,
    pub psrf_final: f64,
    /// False when the PSRF threshold was still unmet at `max_iters`.
    pub converged: bool,
    /// Iterations executed per chain.
    pub total_iters: usize,
    /// Iterations discarded per chain (warm-up and adaptation rounds).
    pub warmup: usize,
    /// Wall-clock seconds spent in each chain, for serialized-time
    /// reporting.
    pub chain_seconds: Vec<f64>,
}

impl McmcRun {
    /// Post-warm-up samples pooled across chains, in chain order.
    pub fn pooled_theta(&self) -> Vec<UnitVector> {
        self.traces
            .iter()
            .flat_map(|t| t.theta_samples.iter().cloned())
            .collect()
    }

    pub fn serialized_seconds(&self) -> f64 {
        self.chain_seconds.iter().sum()
    }
}

/// Haario base covariance: `(2.38^2 / h) (Cov(history) + 1e-8 I)`.
pub fn adapt_covariance(history: &[UnitVector], h: usize) -> Result<DMatrix<f64>> {
    if history.len() < 10 {
        return Err(Error::TooFewSamples {
            needed: 10,
            got: history.len(),
        });
    }
    let len = history.len() as f64;
    let mut mean = vec![0.0; h];
    for s in history {
        for (m, c) in mean.iter_mut().zip(s.coords()) {
            *m += c;
        }
    }
    for m in &mut mean {
        *m /= len;
    }
    let mut cov = DMatrix::zeros(h, h);
    for s in history {
        for i in 0..h {
            let di = s.coords()[i] - mean[i];
            for j in 0..=i {
                cov[(i, j)] += di * (s.coords()[j] - mean[j]);
            }
        }
    }
    for i in 0..h {
        for j in 0..=i {
            let v = cov[(i, j)] / len;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    let scale = 2.38 * 2.38 / h as f64;
    for i in 0..h {
        for j in 0..h {
            cov[(i, j)] *= scale;
        }
        cov[(i, i)] += scale * 1e-8;
    }
    Ok(cov)
}

/// One sphere-projected Gaussian proposal draw.
pub fn propose_theta<R: Rng + ?Sized>(
    current: &UnitVector,
    cov: &DMatrix<f64>,
    rng: &mut R,
) -> Result<UnitVector> {
    let chol = Cholesky::new(cov.clone()).ok_or(Error::NotPositiveDefinite)?;
    propose_from_factor(current, chol.l_dirty(), rng)
}

fn propose_from_factor<R: Rng + ?Sized>(
    current: &UnitVector,
    chol_l: &DMatrix<f64>,
    rng: &mut R,
) -> Result<UnitVector> {
    let h = current.dim();
    for _ in 0..2 {
        let xi: Vec<f64> = (0..h).map(|_| rng.sample(StandardNormal)).collect();
        let mut z = current.coords().to_vec();
        for i in 0..h {
            let mut acc = 0.0;
            for j in 0..=i {
                acc += chol_l[(i, j)] * xi[j];
            }
            z[i] += acc;
        }
        match geometry::normalize(&z) {
            Ok(u) => return Ok(u),
            Err(Error::ZeroVector) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::ZeroVector)
}

/// Model-specific pieces of the Metropolis-within-Gibbs iteration.
trait TargetModel: Send {
    /// Computes the cached likelihood state at the initial direction.
    fn init_theta(&mut self, theta: &UnitVector) -> Result<()>;
    /// Log-likelihood ratio of `proposal` against `current` at the given
    /// nuisance value, staging any per-proposal work for [`Self::commit_theta`].
    fn theta_log_ratio(
        &mut self,
        current: &UnitVector,
        proposal: &UnitVector,
        nuisance: f64,
    ) -> Result<f64>;
    /// Adopts the staged proposal state.
    fn commit_theta(&mut self);
    /// Log ratio of the full conditional of the log-nuisance at `theta`
    /// (likelihood, prior, and change-of-variables term included).
    fn nuisance_log_ratio(
        &mut self,
        theta: &UnitVector,
        log_nu: f64,
        log_nu_prop: f64,
    ) -> Result<f64>;
    /// Adopts the staged nuisance state.
    fn commit_nuisance(&mut self);
    fn initial_nuisance(&self) -> f64;
}

enum Prepared {
    Lp(crate::forward::LpInstance),
    Qp(QpFactors),
}

impl Prepared {
    fn solve_into(&self, theta: &[f64], out: &mut [f64], scratch: &mut DVector<f64>) -> Result<f64> {
        match self {
            Prepared::Lp(lp) => {
                let sol = crate::forward::solve_lp(lp, theta)?;
                out.copy_from_slice(&sol.x_star);
                Ok(sol.objective)
            }
            Prepared::Qp(f) => f.solve_into(theta, out, scratch),
        }
    }
}

/// Decision-space target: Gaussian likelihood around per-instance forward
/// solutions, half-Cauchy prior on `sigma`.
struct DecisionTarget {
    prepared: Arc<Vec<Prepared>>,
    ys: Arc<Vec<Vec<f64>>>,
    dim: usize,
    sse: f64,
    solutions: Vec<Vec<f64>>,
    pending_sse: f64,
    pending: Vec<Vec<f64>>,
    priors: Priors,
    scratch: DVector<f64>,
}

impl DecisionTarget {
    fn new(prepared: Arc<Vec<Prepared>>, ys: Arc<Vec<Vec<f64>>>, dim: usize, priors: Priors) -> Self {
        let n = ys.len();
        Self {
            prepared,
            ys,
            dim,
            sse: 0.0,
            solutions: vec![vec![0.0; dim]; n],
            pending_sse: 0.0,
            pending: vec![vec![0.0; dim]; n],
            priors,
            scratch: DVector::zeros(dim),
        }
    }

    fn solve_all(&mut self, theta: &UnitVector) -> Result<f64> {
        let mut sse = 0.0;
        for (i, p) in self.prepared.iter().enumerate() {
            p.solve_into(theta.coords(), &mut self.pending[i], &mut self.scratch)?;
            sse += self.ys[i]
                .iter()
                .zip(&self.pending[i])
                .map(|(y, x)| (y - x) * (y - x))
                .sum::<f64>();
        }
        self.pending_sse = sse;
        Ok(sse)
    }
}

impl TargetModel for DecisionTarget {
    fn init_theta(&mut self, theta: &UnitVector) -> Result<()> {
        self.solve_all(theta)?;
        self.commit_theta();
        Ok(())
    }

    fn theta_log_ratio(
        &mut self,
        _current: &UnitVector,
        proposal: &UnitVector,
        nuisance: f64,
    ) -> Result<f64> {
        let sse_prop = self.solve_all(proposal)?;
        let sigma2 = nuisance * nuisance;
        Ok(-(sse_prop - self.sse) / (2.0 * sigma2))
    }

    fn commit_theta(&mut self) {
        std::mem::swap(&mut self.solutions, &mut self.pending);
        self.sse = self.pending_sse;
    }

    fn nuisance_log_ratio(
        &mut self,
        _theta: &UnitVector,
        log_nu: f64,
        log_nu_prop: f64,
    ) -> Result<f64> {
        let total = (self.ys.len() * self.dim) as f64;
        let value = |ln_s: f64| {
            let s = ln_s.exp();
            let s2 = s * s;
            -0.5 * total * (2.0 * std::f64::consts::PI * s2).ln() - self.sse / (2.0 * s2)
                + half_cauchy_log_density(s, self.priors.half_cauchy_scale)
                + ln_s
        };
        Ok(value(log_nu_prop) - value(log_nu))
    }

    fn commit_nuisance(&mut self) {}

    fn initial_nuisance(&self) -> f64 {
        1.0
    }
}

/// Objective-space target: vMF likelihood of the recovered directions,
/// Gamma prior on `kappa`. The recovered set enters only through its
/// resultant `R = sum_i theta~_i`.
struct ObjectiveTarget {
    resultant: Arc<Vec<f64>>,
    n_obs: usize,
    h: usize,
    priors: Priors,
    cached_lnc: f64,
    pending_lnc: f64,
}

impl ObjectiveTarget {
    fn new(resultant: Arc<Vec<f64>>, n_obs: usize, h: usize, priors: Priors) -> Self {
        Self {
            resultant,
            n_obs,
            h,
            priors,
            cached_lnc: 0.0,
            pending_lnc: 0.0,
        }
    }

    fn lnc(&self, kappa: f64) -> Result<f64> {
        if self.n_obs == 0 {
            return Ok(0.0);
        }
        vmf_log_norm_const(self.h, kappa)
    }
}

impl TargetModel for ObjectiveTarget {
    fn init_theta(&mut self, _theta: &UnitVector) -> Result<()> {
        self.cached_lnc = self.lnc(self.initial_nuisance())?;
        Ok(())
    }

    fn theta_log_ratio(
        &mut self,
        current: &UnitVector,
        proposal: &UnitVector,
        nuisance: f64,
    ) -> Result<f64> {
        let diff = geometry::dot(proposal.coords(), &self.resultant)
            - geometry::dot(current.coords(), &self.resultant);
        Ok(nuisance * diff)
    }

    fn commit_theta(&mut self) {}

    fn nuisance_log_ratio(
        &mut self,
        theta: &UnitVector,
        log_nu: f64,
        log_nu_prop: f64,
    ) -> Result<f64> {
        let kappa = log_nu.exp();
        let kappa_prop = log_nu_prop.exp();
        self.pending_lnc = self.lnc(kappa_prop)?;
        let tr = geometry::dot(theta.coords(), &self.resultant);
        let n = self.n_obs as f64;
        let current = n * self.cached_lnc
            + kappa * tr
            + gamma_log_density(kappa, self.priors.gamma_shape, self.priors.gamma_rate)
            + log_nu;
        let proposed = n * self.pending_lnc
            + kappa_prop * tr
            + gamma_log_density(kappa_prop, self.priors.gamma_shape, self.priors.gamma_rate)
            + log_nu_prop;
        Ok(proposed - current)
    }

    fn commit_nuisance(&mut self) {
        self.cached_lnc = self.pending_lnc;
    }

    fn initial_nuisance(&self) -> f64 {
        self.priors.gamma_shape / self.priors.gamma_rate
    }
}

const ADAPT_EVERY: usize = 25;
const ADAPT_GAIN: f64 = 1.5;
const MULT_RANGE: (f64, f64) = (1.0 / 64.0, 64.0);
const NU_STEP_INIT: f64 = 0.1;
const NU_STEP_RANGE: (f64, f64) = (1e-3, 20.0);

struct ChainState<T: TargetModel> {
    target: T,
    rng: ChaCha8Rng,
    h: usize,
    theta: UnitVector,
    log_nu: f64,
    cov: DMatrix<f64>,
    chol_l: DMatrix<f64>,
    mult: f64,
    nu_step: f64,
    /// Absolute iteration at which the current adaptation round ends; the
    /// kernel is frozen from there until [`ChainState::resume_adaptation`].
    adapt_until: usize,
    /// Length of one adaptation round.
    adapt_len: usize,
    /// True until the first freeze; the first round keeps a short history
    /// window because early samples reflect the transit from the start
    /// point rather than the posterior.
    first_round: bool,
    iter: usize,
    history: Vec<UnitVector>,
    win_theta: (usize, usize),
    win_nu: (usize, usize),
    // full run storage, trimmed to the final warm-up at the end
    thetas: Vec<f64>,
    nuisances: Vec<f64>,
    acc_theta: Vec<bool>,
    acc_nu: Vec<bool>,
    seconds: f64,
}

impl<T: TargetModel> ChainState<T> {
    fn new(mut target: T, h: usize, cfg: &ChainConfig, seed: u64) -> Result<Self> {
        let mut rng = seeding::rng_for(seed);
        let theta = crate::distributions::sample_uniform_sphere(h, &mut rng)?;
        target.init_theta(&theta)?;
        let log_nu = target.initial_nuisance().ln();
        let cov = DMatrix::from_diagonal_element(h, h, 0.01 / h as f64);
        let chol_l = Cholesky::new(cov.clone())
            .expect("diagonal seed covariance is positive definite")
            .l();
        let adapt_len = ((cfg.warmup_fraction * cfg.block_size as f64).floor() as usize).max(1);
        Ok(Self {
            target,
            rng,
            h,
            theta,
            log_nu,
            cov,
            chol_l,
            mult: 1.0,
            nu_step: NU_STEP_INIT,
            adapt_until: adapt_len,
            adapt_len,
            first_round: true,
            iter: 0,
            history: Vec::new(),
            win_theta: (0, 0),
            win_nu: (0, 0),
            thetas: Vec::new(),
            nuisances: Vec::new(),
            acc_theta: Vec::new(),
            acc_nu: Vec::new(),
            seconds: 0.0,
        })
    }

    /// Reopens the adaptation window for one more round. Called by the
    /// controller when a PSRF check fails and the run extends; samples
    /// drawn before the new freeze point are discarded.
    ///
    /// The covariance history is seeded with samples thinned from the span
    /// since the previous freeze — a long stretch under a fixed kernel
    /// carries far more information about the slow directions than the
    /// fresh round alone.
    fn resume_adaptation(&mut self, since: usize) {
        self.adapt_until = self.iter + self.adapt_len;
        self.first_round = false;
        self.win_theta = (0, 0);
        self.win_nu = (0, 0);
        self.history.clear();
        let available = self.iter - since;
        if available > 0 {
            let take = available.min(self.adapt_len);
            let stride = (available / take).max(1);
            for k in 0..take {
                let t = since + k * stride;
                if t >= self.iter {
                    break;
                }
                self.history.push(UnitVector::new_unchecked(
                    self.thetas[t * self.h..(t + 1) * self.h].to_vec(),
                ));
            }
        }
    }

    fn adapt(&mut self, lo: f64, hi: f64) {
        // High acceptance means the walk is too timid, so the scale grows;
        // low acceptance shrinks it. Proportional control around the band
        // midpoint.
        let mid = 0.5 * (lo + hi);
        let (acc, tot) = self.win_theta;
        if tot > 0 {
            let rate = acc as f64 / tot as f64;
            self.mult = (self.mult * (ADAPT_GAIN * (rate - mid)).exp())
                .clamp(MULT_RANGE.0, MULT_RANGE.1);
        }
        if self.history.len() >= 10 {
            if let Ok(base) = adapt_covariance(&self.history, self.h) {
                let cov = base * self.mult;
                if let Some(chol) = Cholesky::new(cov.clone()) {
                    self.cov = cov;
                    self.chol_l = chol.l();
                }
            }
        }
        let (acc, tot) = self.win_nu;
        if tot > 0 {
            let rate = acc as f64 / tot as f64;
            self.nu_step = (self.nu_step * (ADAPT_GAIN * (rate - mid)).exp())
                .clamp(NU_STEP_RANGE.0, NU_STEP_RANGE.1);
        }
        self.win_theta = (0, 0);
        self.win_nu = (0, 0);
    }

    fn run_block(&mut self, iters: usize, cfg: &ChainConfig) -> Result<()> {
        let start = Instant::now();
        let (lo, hi) = cfg.target_accept;
        for _ in 0..iters {
            self.iter += 1;

            let proposal = propose_from_factor(&self.theta, &self.chol_l, &mut self.rng)?;
            let log_ratio =
                self.target
                    .theta_log_ratio(&self.theta, &proposal, self.log_nu.exp())?;
            let accept = (self.rng.random::<f64>()).ln() < log_ratio;
            if accept {
                self.target.commit_theta();
                self.theta = proposal;
            }
            self.acc_theta.push(accept);

            let step: f64 = self.rng.sample(StandardNormal);
            let log_nu_prop = self.log_nu + self.nu_step * step;
            let log_ratio = self
                .target
                .nuisance_log_ratio(&self.theta, self.log_nu, log_nu_prop)?;
            let accept_nu = (self.rng.random::<f64>()).ln() < log_ratio;
            if accept_nu {
                self.target.commit_nuisance();
                self.log_nu = log_nu_prop;
            }
            self.acc_nu.push(accept_nu);

            self.thetas.extend_from_slice(self.theta.coords());
            self.nuisances.push(self.log_nu.exp());

            if self.iter <= self.adapt_until {
                self.win_theta = (self.win_theta.0 + accept as usize, self.win_theta.1 + 1);
                self.win_nu = (self.win_nu.0 + accept_nu as usize, self.win_nu.1 + 1);
                // first round: short window, so the initial transit does
                // not inflate the estimate; later rounds: long window over
                // the seeded history plus fresh samples
                let window = if self.first_round {
                    (self.adapt_len / 2).max(100)
                } else {
                    2 * self.adapt_len
                };
                if self.history.len() >= window {
                    self.history.remove(0);
                }
                self.history.push(self.theta.clone());
                if self.iter.is_multiple_of(ADAPT_EVERY) || self.iter == self.adapt_until {
                    self.adapt(lo, hi);
                }
                if self.iter == self.adapt_until {
                    self.history = Vec::new();
                }
            }
        }
        self.seconds += start.elapsed().as_secs_f64();
        Ok(())
    }

    fn coordinate_series(&self, p: usize, from: usize) -> Vec<f64> {
        (from..self.iter)
            .map(|t| self.thetas[t * self.h + p])
            .collect()
    }

    fn log_nuisance_series(&self, from: usize) -> Vec<f64> {
        self.nuisances[from..].iter().map(|v| v.ln()).collect()
    }

    fn into_trace(self, warmup: usize) -> Trace {
        let h = self.h;
        let theta_samples = (warmup..self.iter)
            .map(|t| {
                UnitVector::new_unchecked(self.thetas[t * h..(t + 1) * h].to_vec())
            })
            .collect();
        Trace {
            theta_samples,
            nuisance_samples: self.nuisances[warmup..].to_vec(),
            accept_theta: self.acc_theta[warmup..].to_vec(),
            accept_nuisance: self.acc_nu[warmup..].to_vec(),
            first_iter: warmup + 1,
            proposal_cov_final: self.cov,
        }
    }
}

fn run_controller<T: TargetModel>(
    mut chains: Vec<ChainState<T>>,
    cfg: &ChainConfig,
    algorithm: Algorithm,
) -> Result<McmcRun> {
    let h = chains[0].h;
    let mut psrf_final = f64::INFINITY;
    let mut converged = false;
    let mut total = 0usize;

    while total < cfg.max_iters {
        let block = cfg.block_size.min(cfg.max_iters - total);
        chains
            .par_iter_mut()
            .try_for_each(|c| c.run_block(block, cfg))?;
        total += block;

        // Retained samples start at the last adaptation freeze; on the
        // first block this equals the nominal warm-up fraction.
        let warmup = chains[0].adapt_until;
        let mut params: Vec<Vec<Vec<f64>>> = Vec::with_capacity(h + 1);
        for p in 0..h {
            params.push(chains.iter().map(|c| c.coordinate_series(p, warmup)).collect());
        }
        params.push(chains.iter().map(|c| c.log_nuisance_series(warmup)).collect());
        psrf_final = max_psrf(&params)?;
        if psrf_final < cfg.psrf_threshold {
            converged = true;
            break;
        }
        if total < cfg.max_iters {
            // Not converged and extending: reopen the adaptation window for
            // the warm-up of the next block. The discard grows with it.
            for chain in &mut chains {
                chain.resume_adaptation(warmup);
            }
        }
    }

    let warmup = chains[0].adapt_until.min(total);
    let chain_seconds = chains.iter().map(|c| c.seconds).collect();
    let traces = chains.into_iter().map(|c| c.into_trace(warmup)).collect();
    Ok(McmcRun {
        algorithm,
        traces,
        psrf_final,
        converged,
        total_iters: total,
        warmup,
        chain_seconds,
    })
}

fn prepare_instances(data: &Dataset) -> Result<Arc<Vec<Prepared>>> {
    let mut prepared = Vec::with_capacity(data.len());
    for inst in data.instances() {
        prepared.push(match inst {
            ForwardInstance::Lp(lp) => Prepared::Lp(lp.clone()),
            ForwardInstance::Qp(qp) => Prepared::Qp(QpFactors::new(qp)?),
        });
    }
    Ok(Arc::new(prepared))
}

/// Algorithm 1: Metropolis--Hastings under decision-space error. Every
/// `theta` proposal re-solves all forward problems; the `sigma` walk reuses
/// the cached solutions.
pub fn run_chain_decision(data: &Dataset, cfg: &ChainConfig, priors: &Priors) -> Result<McmcRun> {
    cfg.validate()?;
    let h = data.dim();
    if h < 2 {
        return Err(Error::InvalidArgument(
            "sampling needs dimension >= 2".to_string(),
        ));
    }
    let prepared = prepare_instances(data)?;
    let ys: Arc<Vec<Vec<f64>>> = Arc::new(data.pairs().map(|(_, y)| y.to_vec()).collect());
    let chains = (0..cfg.n_chains)
        .map(|c| {
            let target =
                DecisionTarget::new(Arc::clone(&prepared), Arc::clone(&ys), h, priors.clone());
            ChainState::new(target, h, cfg, seeding::derive(cfg.seed, c as u64))
        })
        .collect::<Result<Vec<_>>>()?;
    run_controller(chains, cfg, Algorithm::Decision)
}

/// Algorithm 2: Metropolis--Hastings under objective-space error. Recovers
/// one rationalizing direction per observation up front; the MCMC loop then
/// needs no optimization.
pub fn run_chain_objective(data: &Dataset, cfg: &ChainConfig, priors: &Priors) -> Result<McmcRun> {
    cfg.validate()?;
    let h = data.dim();
    if h < 2 {
        return Err(Error::InvalidArgument(
            "sampling needs dimension >= 2".to_string(),
        ));
    }
    let mut resultant = vec![0.0; h];
    for (inst, y) in data.pairs() {
        let obs = recovery::Observation::new(inst.clone(), y.to_vec())?;
        let tilde = recovery::recover_theta(&obs)?;
        for (r, c) in resultant.iter_mut().zip(tilde.coords()) {
            *r += c;
        }
    }
    let resultant = Arc::new(resultant);
    let chains = (0..cfg.n_chains)
        .map(|c| {
            let target =
                ObjectiveTarget::new(Arc::clone(&resultant), data.len(), h, priors.clone());
            ChainState::new(target, h, cfg, seeding::derive(cfg.seed, c as u64))
        })
        .collect::<Result<Vec<_>>>()?;
    run_controller(chains, cfg, Algorithm::Objective)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{self, Family};

    fn small_cfg(seed: u64) -> ChainConfig {
        ChainConfig {
            n_chains: 2,
            block_size: 2_000,
            max_iters: 8_000,
            seed,
            ..ChainConfig::default()
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = ChainConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.n_chains = 1;
        assert!(cfg.validate().is_err());
        cfg = ChainConfig {
            warmup_fraction: 1.0,
            ..ChainConfig::default()
        };
        assert!(cfg.validate().is_err());
        cfg = ChainConfig {
            target_accept: (0.4, 0.25),
            ..ChainConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn adapt_covariance_constant_history() {
        let v = UnitVector::new(vec![1.0, 0.0, 0.0]).unwrap();
        let hist = vec![v; 12];
        let cov = adapt_covariance(&hist, 3).unwrap();
        let want = 2.38 * 2.38 / 3.0 * 1e-8;
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { want } else { 0.0 };
                assert!((cov[(i, j)] - expect).abs() < 1e-20);
            }
        }
    }

    #[test]
    fn adapt_covariance_isotropic_ring() {
        // points at geodesic radius r around the pole: tangent covariance
        // (r^2/2) on the tangent plane, scaled by 2.38^2/h
        let r = 0.05f64;
        let k = 360;
        let hist: Vec<UnitVector> = (0..k)
            .map(|j| {
                let phi = 2.0 * std::f64::consts::PI * j as f64 / k as f64;
                UnitVector::new_unchecked(vec![
                    r.sin() * phi.cos(),
                    r.sin() * phi.sin(),
                    r.cos(),
                ])
            })
            .collect();
        let cov = adapt_covariance(&hist, 3).unwrap();
        let want = 2.38 * 2.38 / 3.0 * (r * r / 2.0);
        for i in 0..2 {
            assert!(
                (cov[(i, i)] - want).abs() < 0.2 * want,
                "cov[{i}][{i}] = {}, want {want}",
                cov[(i, i)]
            );
        }
        assert!(cov[(2, 2)] < 0.05 * want);
    }

    #[test]
    fn adapt_covariance_needs_history() {
        let v = UnitVector::new(vec![1.0, 0.0]).unwrap();
        assert!(adapt_covariance(&vec![v; 9], 2).is_err());
    }

    #[test]
    fn propose_theta_unit_norm_and_degenerate_limit() {
        let mut rng = seeding::rng_for(2);
        let current = UnitVector::new(vec![0.0, 1.0, 0.0]).unwrap();
        let tiny = DMatrix::from_diagonal_element(3, 3, 1e-20);
        for _ in 0..50 {
            let p = propose_theta(&current, &tiny, &mut rng).unwrap();
            assert!((geometry::norm2(p.coords()) - 1.0).abs() < 1e-12);
            assert!(geometry::geodesic_distance(&current, &p) < 1e-8);
        }
    }

    #[test]
    fn propose_theta_step_moment() {
        // cov = 1e-4 I in h=3: tangential squared step is 2e-4 in the
        // small-angle regime, so the RMS geodesic step is sqrt(2)*1e-2.
        let mut rng = seeding::rng_for(3);
        let current = UnitVector::new(vec![1.0, 0.0, 0.0]).unwrap();
        let cov = DMatrix::from_diagonal_element(3, 3, 1e-4);
        let n = 10_000;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let p = propose_theta(&current, &cov, &mut rng).unwrap();
            sumsq += geometry::geodesic_distance(&current, &p).powi(2);
        }
        let rms = (sumsq / n as f64).sqrt();
        let want = 2.0f64.sqrt() * 1e-2;
        assert!((rms - want).abs() < 0.03 * want, "rms {rms} vs {want}");
    }

    #[test]
    fn objective_chain_concentrates_on_point_mass() {
        // all recovered directions identical => posterior piles on v
        let (ds, _) = datagen::generate_objective_dataset_with_perturbations(
            Family::Qp,
            2,
            0,
            150,
            1e9,
            None,
            77,
        )
        .unwrap();
        let run = run_chain_objective(&ds, &small_cfg(7), &Priors::default()).unwrap();
        let pooled = run.pooled_theta();
        let mean = crate::uncertainty::posterior_mean_direction(&pooled).unwrap();
        let dist = geometry::geodesic_distance(&mean, &ds.theta_star);
        assert!(dist < 1.0f64.to_radians(), "off by {} deg", dist.to_degrees());
    }

    #[test]
    fn decision_chain_recovers_direction_qp() {
        let ds =
            datagen::generate_decision_dataset(Family::Qp, 2, 0, 200, 0.05, None, 3).unwrap();
        let run = run_chain_decision(&ds, &small_cfg(11), &Priors::default()).unwrap();
        let pooled = run.pooled_theta();
        let mean = crate::uncertainty::posterior_mean_direction(&pooled).unwrap();
        let dist = geometry::geodesic_distance(&mean, &ds.theta_star);
        assert!(dist < 5.0f64.to_radians(), "off by {} deg", dist.to_degrees());
        // sigma samples strictly positive
        for t in &run.traces {
            assert!(t.nuisance_samples.iter().all(|&s| s > 0.0));
        }
    }

    #[test]
    fn objective_chain_recovers_direction_qp() {
        let ds =
            datagen::generate_objective_dataset(Family::Qp, 2, 0, 200, 10.0, None, 5).unwrap();
        let run = run_chain_objective(&ds, &small_cfg(13), &Priors::default()).unwrap();
        let mean =
            crate::uncertainty::posterior_mean_direction(&run.pooled_theta()).unwrap();
        let dist = geometry::geodesic_distance(&mean, &ds.theta_star);
        assert!(dist < 5.0f64.to_radians(), "off by {} deg", dist.to_degrees());
    }

    #[test]
    fn chains_are_bitwise_reproducible() {
        let ds =
            datagen::generate_objective_dataset(Family::Qp, 3, 0, 50, 10.0, None, 21).unwrap();
        let a = run_chain_objective(&ds, &small_cfg(9), &Priors::default()).unwrap();
        let b = run_chain_objective(&ds, &small_cfg(9), &Priors::default()).unwrap();
        assert_eq!(a.total_iters, b.total_iters);
        for (ta, tb) in a.traces.iter().zip(&b.traces) {
            assert_eq!(ta.theta_samples.len(), tb.theta_samples.len());
            for (x, y) in ta.theta_samples.iter().zip(&tb.theta_samples) {
                assert_eq!(x.coords(), y.coords());
            }
            assert_eq!(ta.nuisance_samples, tb.nuisance_samples);
        }
    }

    #[test]
    fn acceptance_rate_lands_in_band() {
        let ds =
            datagen::generate_objective_dataset(Family::Qp, 2, 0, 200, 10.0, None, 31).unwrap();
        let run = run_chain_objective(&ds, &small_cfg(17), &Priors::default()).unwrap();
        for t in &run.traces {
            let rate = t.theta_accept_rate();
            assert!((0.15..=0.5).contains(&rate), "acceptance {rate}");
        }
    }

    #[test]
    fn frozen_covariance_is_constant_after_warmup() {
        let ds =
            datagen::generate_objective_dataset(Family::Qp, 2, 0, 80, 10.0, None, 37).unwrap();
        let run = run_chain_objective(&ds, &small_cfg(19), &Priors::default()).unwrap();
        // both chains carry a finalized covariance; re-running is bitwise
        // equal, which pins the freeze
        let again = run_chain_objective(&ds, &small_cfg(19), &Priors::default()).unwrap();
        for (a, b) in run.traces.iter().zip(&again.traces) {
            assert_eq!(a.proposal_cov_final, b.proposal_cov_final);
        }
    }

    #[test]
    fn trace_csv_round_trip() {
        let ds =
            datagen::generate_objective_dataset(Family::Qp, 3, 0, 30, 10.0, None, 41).unwrap();
        let cfg = ChainConfig {
            n_chains: 2,
            block_size: 400,
            max_iters: 400,
            psrf_threshold: 50.0,
            seed: 3,
            ..ChainConfig::default()
        };
        let run = run_chain_objective(&ds, &cfg, &Priors::default()).unwrap();
        let trace = &run.traces[0];
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        let back = Trace::read_csv(std::io::BufReader::new(&buf[..])).unwrap();
        assert_eq!(back.first_iter, trace.first_iter);
        assert_eq!(back.nuisance_samples, trace.nuisance_samples);
        assert_eq!(back.accept_theta, trace.accept_theta);
        for (a, b) in back.theta_samples.iter().zip(&trace.theta_samples) {
            assert_eq!(a.coords(), b.coords());
        }
    }

    #[test]
    fn nonconvergence_is_flagged_not_fatal() {
        let ds =
            datagen::generate_objective_dataset(Family::Qp, 2, 0, 100, 10.0, None, 43).unwrap();
        let cfg = ChainConfig {
            n_chains: 2,
            block_size: 200,
            max_iters: 200,
            psrf_threshold: 1.0000001,
            seed: 1,
            ..ChainConfig::default()
        };
        let run = run_chain_objective(&ds, &cfg, &Priors::default()).unwrap();
        assert!(!run.converged);
        assert!(!run.traces[0].is_empty());
    }
}
