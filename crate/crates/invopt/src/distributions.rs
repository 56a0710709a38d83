//! Densities and samplers: von Mises--Fisher on the hypersphere, isotropic
//! Gaussian observation noise, half-Cauchy and Gamma priors, and uniform
//! sphere sampling, backed by a log-space evaluation of the modified Bessel
//! function of the first kind.

use crate::error::{Error, Result};
use crate::geometry::{self, UnitVector};
use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};

/// von Mises--Fisher parameters: mean direction and concentration.
#[derive(Debug, Clone)]
pub struct VmfParams {
    pub mean: UnitVector,
    pub kappa: f64,
}

impl VmfParams {
    pub fn new(mean: UnitVector, kappa: f64) -> Result<Self> {
        if mean.dim() < 2 {
            return Err(Error::InvalidArgument(
                "vMF needs sphere dimension >= 2".to_string(),
            ));
        }
        if !kappa.is_finite() || kappa < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "vMF concentration must be finite and >= 0, got {kappa}"
            )));
        }
        Ok(Self { mean, kappa })
    }
}

/// Isotropic Gaussian parameters: mean and common variance `sigma2 > 0`.
#[derive(Debug, Clone)]
pub struct IsoGaussianParams {
    pub mean: Vec<f64>,
    pub sigma2: f64,
}

impl IsoGaussianParams {
    pub fn new(mean: Vec<f64>, sigma2: f64) -> Result<Self> {
        if !sigma2.is_finite() || sigma2 <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "variance must be finite and > 0, got {sigma2}"
            )));
        }
        Ok(Self { mean, sigma2 })
    }
}

// Lanczos approximation, g = 7, 9 coefficients.
const LANCZOS_G: f64 = 7.0;
#[allow(clippy::excessive_precision)]
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Gamma(z)` for `z > 0`.
pub fn ln_gamma(z: f64) -> f64 {
    if z < 0.5 {
        // reflection formula
        let pi = std::f64::consts::PI;
        return (pi / (pi * z).sin()).ln() - ln_gamma(1.0 - z);
    }
    let z = z - 1.0;
    let mut x = LANCZOS_COEF[0];
    for (i, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        x += c / (z + i as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (z + 0.5) * t.ln() - t + x.ln()
}

/// `ln I_nu(x)` for `nu >= 0`, `x > 0`, by the ascending power series with
/// log-space terms and log-sum-exp accumulation. Summation stops once the
/// terms are decreasing and 40 nats below the running maximum.
pub fn log_bessel_i(nu: f64, x: f64) -> Result<f64> {
    if !x.is_finite() || x <= 0.0 {
        return Err(Error::Domain(format!(
            "log_bessel_i requires x > 0, got {x}"
        )));
    }
    if !nu.is_finite() || nu < 0.0 {
        return Err(Error::Domain(format!(
            "log_bessel_i requires nu >= 0, got {nu}"
        )));
    }
    let log_half_x = (x / 2.0).ln();
    let mut terms = Vec::with_capacity(64 + (x / 2.0) as usize);
    let mut max_term = f64::NEG_INFINITY;
    let mut prev = f64::NEG_INFINITY;
    let mut k = 0usize;
    loop {
        let kf = k as f64;
        let term = (2.0 * kf + nu) * log_half_x - ln_gamma(kf + 1.0) - ln_gamma(nu + kf + 1.0);
        terms.push(term);
        if term > max_term {
            max_term = term;
        }
        if term < prev && term < max_term - 40.0 {
            break;
        }
        prev = term;
        k += 1;
    }
    let sum: f64 = terms.iter().map(|t| (t - max_term).exp()).sum();
    Ok(max_term + sum.ln())
}

/// `ln C_h(kappa)` for `kappa > 0`, the vMF normalizing constant
/// `kappa^{h/2-1} / ((2 pi)^{h/2} I_{h/2-1}(kappa))`.
pub fn vmf_log_norm_const(h: usize, kappa: f64) -> Result<f64> {
    let half = h as f64 / 2.0;
    Ok((half - 1.0) * kappa.ln()
        - half * (2.0 * std::f64::consts::PI).ln()
        - log_bessel_i(half - 1.0, kappa)?)
}

/// Log density of the uniform distribution on `S^{h-1}`, i.e. minus the log
/// surface area `2 pi^{h/2} / Gamma(h/2)`.
pub fn uniform_sphere_log_density(h: usize) -> f64 {
    let half = h as f64 / 2.0;
    -(2.0f64.ln() + half * std::f64::consts::PI.ln() - ln_gamma(half))
}

/// vMF log density at `x`. For `kappa = 0` this is the uniform log density.
pub fn vmf_log_density(x: &UnitVector, params: &VmfParams) -> Result<f64> {
    if x.dim() != params.mean.dim() {
        return Err(Error::InvalidArgument(format!(
            "dimension mismatch: {} vs {}",
            x.dim(),
            params.mean.dim()
        )));
    }
    if params.kappa == 0.0 {
        return Ok(uniform_sphere_log_density(x.dim()));
    }
    Ok(vmf_log_norm_const(x.dim(), params.kappa)? + params.kappa * params.mean.dot(x))
}

/// Mean resultant length `A_h(kappa) = I_{h/2}(kappa) / I_{h/2-1}(kappa)`.
pub fn vmf_mean_resultant_length(h: usize, kappa: f64) -> Result<f64> {
    if kappa == 0.0 {
        return Ok(0.0);
    }
    let half = h as f64 / 2.0;
    Ok((log_bessel_i(half, kappa)? - log_bessel_i(half - 1.0, kappa)?).exp())
}

fn uniform_direction<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let norm = geometry::norm2(&v);
        if norm > 1e-300 {
            return v.iter().map(|x| x / norm).collect();
        }
    }
}

/// Uniform sample on `S^{h-1}`: a normalized vector of independent standard
/// normals.
pub fn sample_uniform_sphere<R: Rng + ?Sized>(h: usize, rng: &mut R) -> Result<UnitVector> {
    if h < 2 {
        return Err(Error::InvalidArgument(format!(
            "sphere dimension must be >= 2, got {h}"
        )));
    }
    Ok(UnitVector::new_unchecked(uniform_direction(h, rng)))
}

/// Draws from the vMF distribution by the tangent-normal decomposition:
/// rejection-sample the cosine `w` against its marginal
/// `\propto e^{kappa w} (1 - w^2)^{(h-3)/2}`, attach a uniform direction
/// orthogonal to the pole, and reflect the pole to the mean direction.
pub fn vmf_sample<R: Rng + ?Sized>(params: &VmfParams, rng: &mut R) -> UnitVector {
    let h = params.mean.dim();
    let kappa = params.kappa;
    let hm1 = (h - 1) as f64;

    // Wood's envelope parameters.
    let b = hm1 / (2.0 * kappa + (4.0 * kappa * kappa + hm1 * hm1).sqrt());
    let x0 = (1.0 - b) / (1.0 + b);
    let c = kappa * x0 + hm1 * (1.0 - x0 * x0).ln();
    let beta = Beta::new(hm1 / 2.0, hm1 / 2.0).expect("valid Beta parameters");

    let w = loop {
        let z: f64 = beta.sample(rng);
        let w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z);
        let u: f64 = rng.random();
        if kappa * w + hm1 * (1.0 - x0 * w).ln() - c >= u.ln() {
            break w;
        }
    };

    let v = uniform_direction(h - 1, rng);
    let tangential = (1.0 - w * w).max(0.0).sqrt();
    let mut pole_sample: Vec<f64> = v.iter().map(|vi| tangential * vi).collect();
    pole_sample.push(w);

    let rotated = geometry::reflect_to(&pole_sample, &params.mean);
    geometry::normalize(&rotated).expect("reflected sample has unit norm")
}

/// Isotropic Gaussian log density.
pub fn gaussian_iso_log_density(y: &[f64], params: &IsoGaussianParams) -> Result<f64> {
    if y.len() != params.mean.len() {
        return Err(Error::InvalidArgument(format!(
            "dimension mismatch: {} vs {}",
            y.len(),
            params.mean.len()
        )));
    }
    let n = y.len() as f64;
    let sq: f64 = y
        .iter()
        .zip(&params.mean)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(-0.5 * n * (2.0 * std::f64::consts::PI * params.sigma2).ln() - sq / (2.0 * params.sigma2))
}

/// Half-Cauchy log density on `s > 0` with the given scale; `-inf` outside
/// the support.
pub fn half_cauchy_log_density(s: f64, scale: f64) -> f64 {
    debug_assert!(scale > 0.0);
    if s <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let r = s / scale;
    (2.0 / (std::f64::consts::PI * scale)).ln() - (1.0 + r * r).ln()
}

/// Gamma log density (shape/rate parameterization) on `k > 0`; `-inf`
/// outside the support.
pub fn gamma_log_density(k: f64, shape: f64, rate: f64) -> f64 {
    debug_assert!(shape > 0.0 && rate > 0.0);
    if k <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let mut v = shape * rate.ln() - ln_gamma(shape) - rate * k;
    if shape != 1.0 {
        v += (shape - 1.0) * k.ln();
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding;

    #[test]
    fn ln_gamma_known_values() {
        assert!((ln_gamma(1.0)).abs() < 1e-14);
        assert!((ln_gamma(2.0)).abs() < 1e-14);
        assert!((ln_gamma(5.0) - 24.0f64.ln()).abs() < 1e-12);
        // Gamma(1/2) = sqrt(pi)
        assert!((ln_gamma(0.5) - 0.5 * std::f64::consts::PI.ln()).abs() < 1e-13);
    }

    #[test]
    fn bessel_known_values() {
        // I_0(1) and I_1(1), series summed to machine precision.
        assert!((log_bessel_i(0.0, 1.0).unwrap() - 1.266_065_877_752_008_3f64.ln()).abs() < 1e-12);
        assert!((log_bessel_i(1.0, 1.0).unwrap() - 0.565_159_103_992_485f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn bessel_rejects_bad_domain() {
        assert!(log_bessel_i(0.0, 0.0).is_err());
        assert!(log_bessel_i(0.0, -1.0).is_err());
        assert!(log_bessel_i(-0.5, 1.0).is_err());
    }

    // Independent oracle: term recurrence t_{k+1} = t_k x^2 / (4 (k+1)(nu+k+1))
    // summed in linear space with explicit rescaling.
    fn series_bessel_log(nu: f64, x: f64, terms: usize) -> f64 {
        let mut log_offset = nu * (x / 2.0).ln() - ln_gamma(nu + 1.0);
        let mut term = 1.0f64;
        let mut sum = 1.0f64;
        for k in 0..terms {
            let kf = k as f64;
            term *= x * x / (4.0 * (kf + 1.0) * (nu + kf + 1.0));
            sum += term;
            if sum > 1e280 {
                log_offset += sum.ln();
                term /= sum;
                sum = 1.0;
            }
        }
        log_offset + sum.ln()
    }

    #[test]
    fn bessel_matches_series_oracle() {
        for &(nu, x) in &[(9.0, 10.0), (0.5, 3.0), (2.0, 50.0), (19.0, 500.0)] {
            let got = log_bessel_i(nu, x).unwrap();
            let want = series_bessel_log(nu, x, 2000);
            assert!(
                (got - want).abs() < 1e-10 * want.abs().max(1.0),
                "nu={nu} x={x}: {got} vs {want}"
            );
        }
    }

    #[test]
    fn bessel_recurrence_on_grid() {
        // I_{nu-1}(x) - I_{nu+1}(x) = (2 nu / x) I_nu(x), checked in log space.
        for &nu in &[1.0f64, 1.5, 2.5, 9.0, 19.0] {
            for &x in &[0.5f64, 1.0, 10.0, 100.0, 500.0] {
                let lo = log_bessel_i(nu - 1.0, x).unwrap();
                let mid = log_bessel_i(nu, x).unwrap() + (2.0 * nu / x).ln();
                let hi = log_bessel_i(nu + 1.0, x).unwrap();
                // lo should equal logsumexp(mid, hi)
                let m = mid.max(hi);
                let rhs = m + ((mid - m).exp() + (hi - m).exp()).ln();
                let rel = ((lo - rhs).exp() - 1.0).abs();
                assert!(rel < 1e-8, "nu={nu} x={x}: rel={rel:e}");
            }
        }
    }

    #[test]
    fn vmf_density_uniform_on_circle() {
        let mean = UnitVector::new(vec![1.0, 0.0]).unwrap();
        let p = VmfParams::new(mean.clone(), 0.0).unwrap();
        let x = UnitVector::new(vec![0.0, 1.0]).unwrap();
        let want = -(2.0 * std::f64::consts::PI).ln();
        assert!((vmf_log_density(&x, &p).unwrap() - want).abs() < 1e-14);
    }

    #[test]
    fn vmf_density_at_mean() {
        let mean = UnitVector::new(vec![0.0, 0.0, 1.0]).unwrap();
        let p = VmfParams::new(mean.clone(), 3.0).unwrap();
        let want = vmf_log_norm_const(3, 3.0).unwrap() + 3.0;
        assert!((vmf_log_density(&mean, &p).unwrap() - want).abs() < 1e-14);
    }

    #[test]
    fn vmf_density_h3_closed_form() {
        // For h=3, C_3(kappa) = kappa / (4 pi sinh kappa).
        let kappa = 5.0;
        let mean = UnitVector::new(vec![0.0, 0.0, 1.0]).unwrap();
        let x = crate::geometry::normalize(&[3.0f64.sqrt() / 2.0, 0.0, 0.5]).unwrap();
        let p = VmfParams::new(mean, kappa).unwrap();
        let want = (5.0 / (2.0 * std::f64::consts::PI * (5.0f64.exp() - (-5.0f64).exp()))).ln()
            + kappa * 0.5;
        assert!((vmf_log_density(&x, &p).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn vmf_density_integrates_to_one_on_circle() {
        // periodic trapezoid over the angle; exponentially accurate
        for &kappa in &[0.0f64, 5.0, 10.0] {
            let mean = UnitVector::new(vec![1.0, 0.0]).unwrap();
            let p = VmfParams::new(mean, kappa).unwrap();
            let n = 4096;
            let mut total = 0.0;
            for i in 0..n {
                let phi = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                let x = UnitVector::new_unchecked(vec![phi.cos(), phi.sin()]);
                total += vmf_log_density(&x, &p).unwrap().exp();
            }
            total *= 2.0 * std::f64::consts::PI / n as f64;
            assert!((total - 1.0).abs() < 1e-6, "kappa={kappa}: {total}");
        }
    }

    #[test]
    fn vmf_sample_resultant_length_h3() {
        let mut rng = seeding::rng_for(11);
        let mean = crate::geometry::normalize(&[1.0, -2.0, 2.0]).unwrap();
        let p = VmfParams::new(mean, 10.0).unwrap();
        let n = 20_000;
        let mut acc = vec![0.0; 3];
        for _ in 0..n {
            let s = vmf_sample(&p, &mut rng);
            for (a, c) in acc.iter_mut().zip(s.coords()) {
                *a += c;
            }
        }
        let r = crate::geometry::norm2(&acc) / n as f64;
        // coth(10) - 1/10
        let want = 1.0 / 10.0f64.tanh() - 0.1;
        assert!((r - want).abs() < 0.01, "resultant {r} vs {want}");
    }

    #[test]
    fn vmf_sample_kappa_zero_is_uniform() {
        let mut rng = seeding::rng_for(5);
        let mean = UnitVector::new(vec![0.0, 1.0]).unwrap();
        let p = VmfParams::new(mean, 0.0).unwrap();
        let n = 20_000;
        let mut acc = vec![0.0; 2];
        for _ in 0..n {
            let s = vmf_sample(&p, &mut rng);
            for (a, c) in acc.iter_mut().zip(s.coords()) {
                *a += c;
            }
        }
        let norm = crate::geometry::norm2(&acc) / n as f64;
        assert!(norm < 0.025, "mean norm {norm}");
    }

    #[test]
    fn uniform_sphere_moments() {
        let mut rng = seeding::rng_for(3);
        let h = 3;
        let n = 20_000;
        let mut mean = vec![0.0; h];
        let mut cov = vec![vec![0.0; h]; h];
        for _ in 0..n {
            let s = sample_uniform_sphere(h, &mut rng).unwrap();
            assert!((crate::geometry::norm2(s.coords()) - 1.0).abs() < 1e-12);
            for i in 0..h {
                mean[i] += s.coords()[i];
                for j in 0..h {
                    cov[i][j] += s.coords()[i] * s.coords()[j];
                }
            }
        }
        for m in &mean {
            assert!((m / n as f64).abs() < 0.025);
        }
        for i in 0..h {
            for j in 0..h {
                let want = if i == j { 1.0 / h as f64 } else { 0.0 };
                assert!((cov[i][j] / n as f64 - want).abs() < 0.02);
            }
        }
    }

    #[test]
    fn gaussian_density_examples() {
        let p = IsoGaussianParams::new(vec![0.0], 1.0).unwrap();
        let want = -0.5 * (2.0 * std::f64::consts::PI).ln();
        assert!((gaussian_iso_log_density(&[0.0], &p).unwrap() - want).abs() < 1e-14);

        let p = IsoGaussianParams::new(vec![0.0, 0.0], 1.0).unwrap();
        let want = -(2.0 * std::f64::consts::PI).ln() - 0.5;
        assert!((gaussian_iso_log_density(&[1.0, 0.0], &p).unwrap() - want).abs() < 1e-14);

        let p = IsoGaussianParams::new(vec![0.0, 0.0], 0.05).unwrap();
        let y = [0.1f64.sqrt(), 0.0];
        let want = -(2.0 * std::f64::consts::PI * 0.05).ln() - 1.0;
        assert!((gaussian_iso_log_density(&y, &p).unwrap() - want).abs() < 1e-13);
    }

    #[test]
    fn half_cauchy_examples() {
        assert!((half_cauchy_log_density(1e-300, 1.0)
            - (2.0 / std::f64::consts::PI).ln())
        .abs()
            < 1e-12);
        assert!(
            (half_cauchy_log_density(1.0, 1.0) - (1.0 / std::f64::consts::PI).ln()).abs() < 1e-14
        );
        assert_eq!(half_cauchy_log_density(-1.0, 1.0), f64::NEG_INFINITY);
        assert_eq!(half_cauchy_log_density(0.0, 1.0), f64::NEG_INFINITY);
    }

    #[test]
    fn gamma_examples() {
        // shape 1, rate 1: exponential; log density at 0+ tends to 0
        assert!((gamma_log_density(1e-12, 1.0, 1.0)).abs() < 1e-10);
        assert!((gamma_log_density(1.0, 2.0, 1.0) + 1.0).abs() < 1e-14);
        assert_eq!(gamma_log_density(0.0, 2.0, 0.1), f64::NEG_INFINITY);
    }
}
