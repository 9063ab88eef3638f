//! Gaussian reference measure of the linear part `d rho = -alpha d_s^4 rho dt + d_s(sigma dW)`.
//!
//! The drift is written with the bilaplacian directly, so the semigroup is
//! `exp(-t alpha Delta^2)` without an extra factor 1/2.  Cosine mode `k`
//! is an Ornstein-Uhlenbeck process
//!
//! ```text
//! d c_k = -alpha lambda_k^2 c_k dt + sigma sqrt(q_k) k pi d beta_k
//! ```
//!
//! with stationary variance `sigma^2 q_k lambda_k / (2 alpha lambda_k^2)`.
//! The mass mode carries no noise and no drift, so it is excluded.

use crate::error::{Error, Result};
use crate::noise::{Amplitude, NoiseKind, NoiseSpec};
use crate::spectral::SpectralBasis;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GaussianReference {
    /// `v_k` for `k = 0..K`; `v_0 = 0` (mass mode excluded).
    pub variances: Vec<f64>,
    pub alpha: f64,
    pub sigma: f64,
    /// Human-readable form of the generator.
    pub description: String,
}

pub fn gaussian_reference(alpha: f64, noise: &NoiseSpec, basis: &SpectralBasis) -> Result<GaussianReference> {
    if !(alpha > 0.0) {
        return Err(Error::NoStationaryMeasure(format!(
            "alpha = {alpha}: the linear drift has no spectral gap"
        )));
    }
    let sigma = match noise.amplitude {
        Amplitude::Additive { sigma } => sigma,
        Amplitude::Multiplicative { .. } => {
            return Err(Error::Precondition("the Gaussian reference needs additive noise".into()))
        }
    };
    let k = basis.n_modes();
    let active = if noise.conservative { noise.active_modes(k) } else { 0 };
    let mut variances = vec![0.0; k];
    for (m, v) in variances.iter_mut().enumerate().take(active + 1).skip(1) {
        let q = match &noise.kind {
            NoiseKind::QDiagonal { spectrum } => spectrum[m - 1],
            _ => 1.0,
        };
        *v = sigma * sigma * q / (2.0 * alpha * basis.eigenvalue(m));
    }
    Ok(GaussianReference {
        variances,
        alpha,
        sigma,
        description: format!(
            "A = -alpha Delta^2 (alpha = {alpha}), B = d_s(sigma Q^1/2 .) (sigma = {sigma}, {active} sine modes)"
        ),
    })
}

impl GaussianReference {
    pub fn n_modes(&self) -> usize {
        self.variances.len()
    }

    /// Stationary variances of the semi-implicit Euler-Maruyama recursion
    /// `c+ = (c + xi) / (1 + dt alpha lambda^2)` with `Var xi = 2 alpha lambda^2 v dt`.
    pub fn discrete_variances(&self, basis: &SpectralBasis, dt: f64) -> Vec<f64> {
        self.variances
            .iter()
            .enumerate()
            .map(|(k, v)| {
                let a = dt * self.alpha * basis.eigenvalue(k).powi(2);
                if a == 0.0 {
                    *v
                } else {
                    v * 2.0 / (2.0 + a)
                }
            })
            .collect()
    }

    /// Centred draw of the fluctuation coefficients (index 0 is 0).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut out = vec![0.0; self.variances.len()];
        self.sample_into(rng, &mut out);
        out
    }

    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        for (o, v) in out.iter_mut().zip(&self.variances) {
            let z: f64 = StandardNormal.sample(rng);
            *o = if *v > 0.0 { v.sqrt() * z } else { 0.0 };
        }
    }

    /// `sum_k x_k^2 / (2 v_k)` over modes with positive variance.
    pub fn neg_log_density(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.variances)
            .filter(|(_, v)| **v > 0.0)
            .map(|(c, v)| c * c / (2.0 * v))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_sigma_zero_variance() {
        let b = SpectralBasis::new(6).unwrap();
        let g = gaussian_reference(0.1, &NoiseSpec::additive_cylindrical(0.0, 0), &b).unwrap();
        assert!(g.variances.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn ratio_identity() {
        let b = SpectralBasis::new(6).unwrap();
        let g = gaussian_reference(0.1, &NoiseSpec::additive_cylindrical(1.0, 0), &b).unwrap();
        assert_eq!(g.variances[0], 0.0);
        assert!((g.variances[1] / g.variances[2] - 4.0).abs() < 1e-12);
        assert!((g.variances[1] - 1.0 / (0.2 * std::f64::consts::PI.powi(2))).abs() < 1e-12);
        assert!(g.variances.windows(2).skip(1).all(|w| w[1] < w[0]));
    }

    #[test]
    fn requires_gap_and_additive_noise() {
        let b = SpectralBasis::new(4).unwrap();
        let n = NoiseSpec::additive_cylindrical(1.0, 0);
        assert!(matches!(gaussian_reference(0.0, &n, &b), Err(Error::NoStationaryMeasure(_))));
        let m = NoiseSpec {
            amplitude: Amplitude::Multiplicative { sigma: 1.0, floor: 0.1 },
            ..n
        };
        assert!(matches!(gaussian_reference(0.1, &m, &b), Err(Error::Precondition(_))));
    }

    #[test]
    fn discrete_recursion_matches() {
        // Iterate the exact variance recursion of the scheme to stationarity.
        let b = SpectralBasis::new(5).unwrap();
        let g = gaussian_reference(0.1, &NoiseSpec::additive_cylindrical(1.0, 0), &b).unwrap();
        let dt = 1e-3;
        let dv = g.discrete_variances(&b, dt);
        for k in 1..5 {
            let l = b.eigenvalue(k);
            let d = 1.0 + dt * 0.1 * l * l;
            let mut v = 0.0;
            for _ in 0..200_000 {
                v = (v + l * dt) / (d * d);
            }
            assert!((v / dv[k] - 1.0).abs() < 1e-9, "{k}: {v} vs {}", dv[k]);
        }
    }

    #[test]
    fn samples_have_reference_variance() {
        let b = SpectralBasis::new(4).unwrap();
        let g = gaussian_reference(0.2, &NoiseSpec::additive_cylindrical(1.0, 0), &b).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 50_000;
        let mut acc = [0.0; 4];
        for _ in 0..n {
            let x = g.sample(&mut rng);
            for k in 0..4 {
                acc[k] += x[k] * x[k];
            }
        }
        assert_eq!(acc[0], 0.0);
        for k in 1..4 {
            let est = acc[k] / n as f64;
            let se = g.variances[k] * (2.0 / n as f64).sqrt();
            assert!((est - g.variances[k]).abs() < 4.0 * se);
        }
    }
}
