//! Posterior summaries on the hypersphere: mean direction, tangent-space
//! Mahalanobis credible region at the empirical quantile, and the root mean
//! squared angular deviation.

use crate::error::{Error, Result};
use crate::geometry::{self, UnitVector};
use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Resultant-length floor below which the mean direction is treated as
/// vanished.
const RESULTANT_TOL: f64 = 1e-12;

/// An ellipsoidal credible region in the tangent space at the posterior
/// mean direction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CredibleRegion {
    pub mean_dir: UnitVector,
    pub tangent_mean: Vec<f64>,
    /// Regularized tangent covariance `Sigma + epsilon I`, row-major.
    pub cov: Vec<Vec<f64>>,
    /// Squared-Mahalanobis threshold: the empirical `(1-alpha)`-quantile.
    pub q: f64,
    pub alpha: f64,
    pub epsilon: f64,
}

/// Normalized arithmetic mean of the samples.
pub fn posterior_mean_direction(samples: &[UnitVector]) -> Result<UnitVector> {
    let first = samples.first().ok_or(Error::TooFewSamples {
        needed: 1,
        got: 0,
    })?;
    let h = first.dim();
    let mut mean = vec![0.0; h];
    for s in samples {
        for (m, c) in mean.iter_mut().zip(s.coords()) {
            *m += c;
        }
    }
    let len = samples.len() as f64;
    for m in &mut mean {
        *m /= len;
    }
    if geometry::norm2(&mean) < RESULTANT_TOL {
        return Err(Error::ZeroResultant);
    }
    geometry::normalize(&mean)
}

type TangentStats = (UnitVector, Vec<Vec<f64>>, Vec<f64>, DMatrix<f64>);

fn tangent_stats(samples: &[UnitVector]) -> Result<TangentStats> {
    let mean_dir = posterior_mean_direction(samples)?;
    let h = mean_dir.dim();
    let mut points = Vec::with_capacity(samples.len());
    for s in samples {
        points.push(geometry::log_map(&mean_dir, s)?.point);
    }
    let len = samples.len() as f64;
    let mut eta_bar = vec![0.0; h];
    for p in &points {
        for (m, c) in eta_bar.iter_mut().zip(p) {
            *m += c;
        }
    }
    for m in &mut eta_bar {
        *m /= len;
    }
    // covariance with denominator T
    let mut sigma = DMatrix::zeros(h, h);
    for p in &points {
        for i in 0..h {
            let di = p[i] - eta_bar[i];
            for j in 0..=i {
                sigma[(i, j)] += di * (p[j] - eta_bar[j]);
            }
        }
    }
    for i in 0..h {
        for j in 0..=i {
            let v = sigma[(i, j)] / len;
            sigma[(i, j)] = v;
            sigma[(j, i)] = v;
        }
    }
    Ok((mean_dir, points, eta_bar, sigma))
}

/// Fits the `(1 - alpha)` credible region from posterior samples.
///
/// Maps samples into the tangent space at the mean direction, regularizes
/// the empirical covariance with `epsilon I` (default
/// `1e-10 max(1, tr(Sigma)/h)`), and thresholds squared Mahalanobis
/// distances at the order statistic with 1-based index
/// `ceil((1 - alpha) T)`, which guarantees at least `1 - alpha` of the
/// samples fall inside.
pub fn fit_region(
    samples: &[UnitVector],
    alpha: f64,
    epsilon: Option<f64>,
) -> Result<CredibleRegion> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    let h = samples.first().map_or(0, |s| s.dim());
    if samples.len() < h + 1 {
        return Err(Error::TooFewSamples {
            needed: h + 1,
            got: samples.len(),
        });
    }
    let (mean_dir, points, eta_bar, sigma) = tangent_stats(samples)?;
    let trace: f64 = (0..h).map(|i| sigma[(i, i)]).sum();
    let epsilon = match epsilon {
        Some(e) if e > 0.0 => e,
        Some(e) => {
            return Err(Error::InvalidArgument(format!(
                "epsilon must be > 0, got {e}"
            )))
        }
        None => 1e-10 * (trace / h as f64).max(1.0),
    };
    let mut cov = sigma;
    for i in 0..h {
        cov[(i, i)] += epsilon;
    }
    let chol = Cholesky::new(cov.clone()).ok_or(Error::NotPositiveDefinite)?;

    let mut dists: Vec<f64> = points
        .iter()
        .map(|p| {
            let diff = DVector::from_iterator(h, p.iter().zip(&eta_bar).map(|(a, b)| a - b));
            let solved = chol.solve(&diff);
            diff.dot(&solved)
        })
        .collect();
    let t = dists.len();
    let rank = ((1.0 - alpha) * t as f64).ceil() as usize; // 1-based
    let rank = rank.clamp(1, t);
    dists.sort_by(|a, b| a.partial_cmp(b).expect("finite Mahalanobis distances"));
    let q = dists[rank - 1];

    Ok(CredibleRegion {
        mean_dir,
        tangent_mean: eta_bar,
        cov: (0..h)
            .map(|i| (0..h).map(|j| cov[(i, j)]).collect())
            .collect(),
        q,
        alpha,
        epsilon,
    })
}

impl CredibleRegion {
    pub fn dim(&self) -> usize {
        self.mean_dir.dim()
    }

    fn cov_matrix(&self) -> DMatrix<f64> {
        let h = self.dim();
        DMatrix::from_fn(h, h, |i, j| self.cov[i][j])
    }

    /// Squared Mahalanobis distance of `theta`'s tangent image from the
    /// tangent mean, or `None` when `theta` is antipodal to the mean
    /// direction.
    pub fn mahalanobis_sq(&self, theta: &UnitVector) -> Option<f64> {
        let eta = geometry::log_map(&self.mean_dir, theta).ok()?;
        let h = self.dim();
        let diff = DVector::from_iterator(
            h,
            eta.point.iter().zip(&self.tangent_mean).map(|(a, b)| a - b),
        );
        let chol = Cholesky::new(self.cov_matrix())?;
        let solved = chol.solve(&diff);
        Some(diff.dot(&solved))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Membership test: true iff the tangent image of `theta` falls inside the
/// ellipsoid. Antipodal points are outside by definition.
pub fn region_contains(region: &CredibleRegion, theta: &UnitVector) -> bool {
    match region.mahalanobis_sq(theta) {
        Some(d) => d <= region.q,
        None => false,
    }
}

/// Root mean squared angular deviation `sqrt(tr(Sigma) / (h - 1))` from the
/// unregularized tangent covariance, in radians.
pub fn alpha_rms(samples: &[UnitVector]) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: samples.len(),
        });
    }
    let (_, _, _, sigma) = tangent_stats(samples)?;
    let h = samples[0].dim();
    let trace: f64 = (0..h).map(|i| sigma[(i, i)]).sum();
    Ok((trace / (h as f64 - 1.0)).sqrt())
}
