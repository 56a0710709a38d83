//! Synthetic dataset generation under the two error processes, with
//! deterministic per-observation seed derivation.

use crate::distributions::{self, VmfParams};
use crate::error::{Error, Result};
use crate::forward::{self, ForwardInstance};
use crate::geometry::UnitVector;
use crate::seeding;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Which error process generated (or is hypothesized to have generated) a
/// dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorModel {
    /// Additive Gaussian noise on optimal decisions.
    Decision,
    /// vMF perturbation of the direction before solving.
    Objective,
}

/// Forward-problem family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Lp,
    Qp,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Record {
    instance: ForwardInstance,
    y: Vec<f64>,
}

/// Ordered covariate-decision pairs with their generation metadata.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dataset {
    pub error_model: ErrorModel,
    /// `sigma^2` under the decision model, `kappa` under the objective model.
    pub noise_param: f64,
    pub theta_star: UnitVector,
    pub seed: u64,
    records: Vec<Record>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.theta_star.dim()
    }

    pub fn instances(&self) -> impl Iterator<Item = &ForwardInstance> {
        self.records.iter().map(|r| &r.instance)
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&ForwardInstance, &[f64])> {
        self.records.iter().map(|r| (&r.instance, r.y.as_slice()))
    }

    pub fn observation(&self, i: usize) -> (&ForwardInstance, &[f64]) {
        let r = &self.records[i];
        (&r.instance, &r.y)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let ds: Dataset = serde_json::from_str(s)?;
        ds.validate()?;
        Ok(ds)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    fn validate(&self) -> Result<()> {
        let n = self.dim();
        if n < 2 {
            return Err(Error::InvalidArgument(
                "dataset dimension must be >= 2".to_string(),
            ));
        }
        for (i, r) in self.records.iter().enumerate() {
            let d = r.instance.dim();
            if (d != 0 && d != n) || r.y.len() != n {
                return Err(Error::InvalidArgument(
                    "record dimensions disagree with theta_star".to_string(),
                ));
            }
            // under the objective model every observation is an exact
            // optimum, hence on the feasible-region boundary
            if self.error_model == ErrorModel::Objective && !on_boundary(&r.instance, &r.y) {
                return Err(Error::InvalidArgument(format!(
                    "objective-model observation {i} is not on the boundary"
                )));
            }
        }
        Ok(())
    }
}

fn on_boundary(instance: &ForwardInstance, y: &[f64]) -> bool {
    const TOL: f64 = 1e-6;
    match instance {
        ForwardInstance::Qp(qp) => {
            let mut quad = 0.0;
            for (row, &yi) in qp.q.iter().zip(y) {
                quad += yi * crate::geometry::dot(row, y);
            }
            (quad + y.iter().sum::<f64>() - 1.0).abs() <= TOL
        }
        ForwardInstance::Lp(lp) => {
            lp.a
                .iter()
                .zip(&lp.b)
                .any(|(row, &bj)| (crate::geometry::dot(row, y) - bj).abs() <= TOL)
                || y.iter().any(|&yk| (yk.abs() - 1.0).abs() <= TOL)
        }
    }
}

fn make_instance<R: Rng + ?Sized>(
    family: Family,
    n: usize,
    m: usize,
    rng: &mut R,
) -> Result<ForwardInstance> {
    Ok(match family {
        Family::Lp => ForwardInstance::Lp(forward::generate_lp_instance(n, m, rng)?),
        Family::Qp => ForwardInstance::Qp(forward::generate_qp_instance(n, rng)?),
    })
}

fn theta_star_or_default(theta_star: Option<UnitVector>, n: usize) -> Result<UnitVector> {
    match theta_star {
        Some(t) if t.dim() == n => Ok(t),
        Some(t) => Err(Error::InvalidArgument(format!(
            "theta_star has dimension {}, expected {n}",
            t.dim()
        ))),
        None => UnitVector::ones_direction(n),
    }
}

/// Generates `count` observations `y_i = x*(u_i, theta*) + eps_i` with
/// `eps_i ~ N(0, sigma2 I)` and a fresh instance per observation.
/// Observation `i` draws from the stream seeded by `derive(seed, i)`.
#[allow(clippy::too_many_arguments)]
pub fn generate_decision_dataset(
    family: Family,
    n: usize,
    m: usize,
    count: usize,
    sigma2: f64,
    theta_star: Option<UnitVector>,
    seed: u64,
) -> Result<Dataset> {
    if sigma2.is_nan() || sigma2 <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "sigma2 must be > 0, got {sigma2}"
        )));
    }
    if n < 2 {
        return Err(Error::InvalidArgument("dataset needs n >= 2".to_string()));
    }
    let theta_star = theta_star_or_default(theta_star, n)?;
    let sigma = sigma2.sqrt();
    let mut records = Vec::with_capacity(count);
    for i in 0..count {
        let mut rng = seeding::rng_for(seeding::derive(seed, i as u64));
        let instance = make_instance(family, n, m, &mut rng)?;
        let sol = instance.solve(theta_star.coords())?;
        let y: Vec<f64> = sol
            .x_star
            .iter()
            .map(|x| x + sigma * rng.sample::<f64, _>(StandardNormal))
            .collect();
        records.push(Record { instance, y });
    }
    Ok(Dataset {
        error_model: ErrorModel::Decision,
        noise_param: sigma2,
        theta_star,
        seed,
        records,
    })
}

/// Generates `count` observations `y_i = x*(u_i, theta~_i)` with
/// `theta~_i ~ vMF(theta*, kappa)`. The perturbed directions are not stored;
/// the inverse step recovers them.
#[allow(clippy::too_many_arguments)]
pub fn generate_objective_dataset(
    family: Family,
    n: usize,
    m: usize,
    count: usize,
    kappa: f64,
    theta_star: Option<UnitVector>,
    seed: u64,
) -> Result<Dataset> {
    Ok(generate_objective_dataset_with_perturbations(family, n, m, count, kappa, theta_star, seed)?.0)
}

/// Same as [`generate_objective_dataset`], additionally returning the hidden
/// perturbed directions for round-trip checks.
#[allow(clippy::too_many_arguments)]
pub fn generate_objective_dataset_with_perturbations(
    family: Family,
    n: usize,
    m: usize,
    count: usize,
    kappa: f64,
    theta_star: Option<UnitVector>,
    seed: u64,
) -> Result<(Dataset, Vec<UnitVector>)> {
    if kappa.is_nan() || kappa < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "kappa must be >= 0, got {kappa}"
        )));
    }
    if n < 2 {
        return Err(Error::InvalidArgument("dataset needs n >= 2".to_string()));
    }
    let theta_star = theta_star_or_default(theta_star, n)?;
    let vmf = VmfParams::new(theta_star.clone(), kappa)?;
    let mut records = Vec::with_capacity(count);
    let mut perturbed = Vec::with_capacity(count);
    for i in 0..count {
        let mut rng = seeding::rng_for(seeding::derive(seed, i as u64));
        let instance = make_instance(family, n, m, &mut rng)?;
        let tilde = distributions::vmf_sample(&vmf, &mut rng);
        let sol = instance.solve(tilde.coords())?;
        records.push(Record {
            instance,
            y: sol.x_star,
        });
        perturbed.push(tilde);
    }
    Ok((
        Dataset {
            error_model: ErrorModel::Objective,
            noise_param: kappa,
            theta_star,
            seed,
            records,
        },
        perturbed,
    ))
}
