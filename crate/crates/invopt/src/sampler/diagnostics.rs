//! Gelman--Rubin potential scale reduction factor.

use crate::error::{Error, Result};

/// Classical PSRF for one scalar parameter across parallel chains.
///
/// With `W` the mean within-chain sample variance and `B/n` the sample
/// variance of the chain means, returns `sqrt(var+ / W)` where
/// `var+ = ((n-1)/n) W + B/n`.
pub fn psrf(chains: &[Vec<f64>]) -> Result<f64> {
    let m = chains.len();
    if m < 2 {
        return Err(Error::InvalidArgument(format!(
            "psrf needs >= 2 chains, got {m}"
        )));
    }
    let n = chains[0].len();
    if chains.iter().any(|c| c.len() != n) {
        return Err(Error::InvalidArgument(
            "psrf needs equal-length chains".to_string(),
        ));
    }
    if n < 10 {
        return Err(Error::InvalidArgument(format!(
            "psrf needs chain length >= 10, got {n}"
        )));
    }
    let nf = n as f64;
    let mut means = Vec::with_capacity(m);
    let mut vars = Vec::with_capacity(m);
    for chain in chains {
        let mean = chain.iter().sum::<f64>() / nf;
        let var = chain.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (nf - 1.0);
        means.push(mean);
        vars.push(var);
    }
    let w = vars.iter().sum::<f64>() / m as f64;
    if w == 0.0 {
        return Err(Error::DegenerateChains);
    }
    let grand = means.iter().sum::<f64>() / m as f64;
    let b_over_n =
        means.iter().map(|x| (x - grand) * (x - grand)).sum::<f64>() / (m as f64 - 1.0);
    let var_plus = (nf - 1.0) / nf * w + b_over_n;
    Ok((var_plus / w).sqrt())
}

/// Maximum PSRF over a set of scalar parameters, each given as
/// per-chain series.
pub fn max_psrf(parameters: &[Vec<Vec<f64>>]) -> Result<f64> {
    let mut worst = f64::NEG_INFINITY;
    for chains in parameters {
        worst = worst.max(psrf(chains)?);
    }
    if worst == f64::NEG_INFINITY {
        return Err(Error::InvalidArgument("no parameters given".to_string()));
    }
    Ok(worst)
}
