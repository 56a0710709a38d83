//! Unit-hypersphere primitives: normalization, geodesic distance, the
//! logarithmic map into the affine tangent space, and the Householder
//! reflection used to rotate pole-centered samples to a mean direction.

use crate::error::{Error, Result};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Unit tolerance enforced by [`UnitVector::new`].
pub const UNIT_TOL: f64 = 1e-12;

/// A point on the unit hypersphere `S^{h-1}`.
///
/// The pipeline works on `h >= 2`; `h = 1` (the two-point sphere) is
/// admitted so one-dimensional forward problems can express recovered
/// directions.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitVector {
    coords: Vec<f64>,
}

impl UnitVector {
    /// Wraps coordinates that are already unit-norm within [`UNIT_TOL`].
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidArgument(
                "unit vector needs dimension >= 1".to_string(),
            ));
        }
        let norm = norm2(&coords);
        if (norm - 1.0).abs() > UNIT_TOL {
            return Err(Error::InvalidArgument(format!(
                "coordinates have norm {norm}, not unit within {UNIT_TOL:e}"
            )));
        }
        Ok(Self { coords })
    }

    /// Internal constructor for vectors normalized by this module.
    pub(crate) fn new_unchecked(coords: Vec<f64>) -> Self {
        debug_assert!((norm2(&coords) - 1.0).abs() <= 1e-9);
        Self { coords }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn dot(&self, other: &UnitVector) -> f64 {
        dot(&self.coords, &other.coords)
    }

    /// The standard basis vector `e_k` in dimension `h`.
    pub fn basis(h: usize, k: usize) -> Result<Self> {
        if h < 1 || k >= h {
            return Err(Error::InvalidArgument(format!(
                "basis vector e_{k} undefined for dimension {h}"
            )));
        }
        let mut coords = vec![0.0; h];
        coords[k] = 1.0;
        Ok(Self { coords })
    }

    /// The direction `e/sqrt(n)` of the all-ones vector.
    pub fn ones_direction(h: usize) -> Result<Self> {
        normalize(&vec![1.0; h])
    }
}

impl Serialize for UnitVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.coords.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for UnitVector {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let coords = Vec::<f64>::deserialize(deserializer)?;
        UnitVector::new(coords).map_err(serde::de::Error::custom)
    }
}

/// A point in the affine tangent space at `base`, satisfying
/// `(point - base) . base = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentPoint {
    pub base: UnitVector,
    pub point: Vec<f64>,
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Scales `v` to unit norm.
pub fn normalize(v: &[f64]) -> Result<UnitVector> {
    if v.is_empty() {
        return Err(Error::InvalidArgument(
            "unit vector needs dimension >= 1".to_string(),
        ));
    }
    let norm = norm2(v);
    if norm < 1e-300 {
        return Err(Error::ZeroVector);
    }
    Ok(UnitVector::new_unchecked(
        v.iter().map(|x| x / norm).collect(),
    ))
}

/// Angular distance `arccos(a . b)` in radians, in `[0, pi]`.
///
/// The dot product is clamped to `[-1, 1]` so floating-point spill cannot
/// produce a NaN.
pub fn geodesic_distance(a: &UnitVector, b: &UnitVector) -> f64 {
    a.dot(b).clamp(-1.0, 1.0).acos()
}

/// Geodesic cutoff beyond which [`log_map`] treats the input as antipodal.
pub const ANTIPODE_TOL: f64 = 1e-9;

/// Maps `theta` into the affine tangent space at `base`:
///
/// `point = base + arccos(base.theta) * t / ||t||` with
/// `t = theta - (base.theta) base`.
///
/// The Euclidean distance `||point - base||` equals the geodesic distance
/// between `theta` and `base`. At `theta = base` the tangential term is
/// defined as zero, so `point = base` exactly.
pub fn log_map(base: &UnitVector, theta: &UnitVector) -> Result<TangentPoint> {
    let cosine = base.dot(theta).clamp(-1.0, 1.0);
    let distance = cosine.acos();
    if distance >= std::f64::consts::PI - ANTIPODE_TOL {
        return Err(Error::AntipodalPoint);
    }
    let tangential: Vec<f64> = theta
        .coords()
        .iter()
        .zip(base.coords())
        .map(|(t, b)| t - cosine * b)
        .collect();
    let tnorm = norm2(&tangential);
    let point = if tnorm < 1e-14 {
        base.coords().to_vec()
    } else {
        let scale = distance / tnorm;
        base.coords()
            .iter()
            .zip(&tangential)
            .map(|(b, t)| b + scale * t)
            .collect()
    };
    Ok(TangentPoint {
        base: base.clone(),
        point,
    })
}

/// Applies the Householder reflection that maps the north pole `e_h` to
/// `mean`. The reflection is an involution and preserves norms; `mean = e_h`
/// is handled as the identity.
pub fn reflect_to(pole_sample: &[f64], mean: &UnitVector) -> Vec<f64> {
    let h = mean.dim();
    debug_assert_eq!(pole_sample.len(), h);
    // v = e_h - mean; ||v||^2 = 2 (1 - mean_h)
    let mut v: Vec<f64> = mean.coords().iter().map(|m| -m).collect();
    v[h - 1] += 1.0;
    let vv = dot(&v, &v);
    if vv < 1e-28 {
        return pole_sample.to_vec();
    }
    let scale = 2.0 * dot(&v, pole_sample) / vv;
    pole_sample
        .iter()
        .zip(&v)
        .map(|(s, vi)| s - scale * vi)
        .collect()
}
