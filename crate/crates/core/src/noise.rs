//! Wiener increments in the spectral frame.
//!
//! The cylindrical Wiener process on `L^2(0,1)` is expanded in the
//! orthonormal sine modes `f_k = sqrt(2) sin(k pi s)`, `k = 1..=K_noise`, with
//! independent `N(0, dt)` coefficients per step.  The conservative increment
//! is `d_s(amplitude * dW)`; for additive noise the outer derivative maps sine
//! mode `k` to cosine mode `k` with factor `k pi`, so cosine mode `k` has
//! variance `lambda_k sigma^2 q_k dt`.  Multiplicative amplitudes
//! `sigma / sqrt(max(rho, floor))` are applied pointwise on the grid and the
//! flux is projected back on the sine span before the divergence.
//!
//! The divergence multiplies mode `k` by `sqrt(lambda_k)`, so the explicit
//! part of a time step has to resolve that growth. Noise modes are truncated
//! at the state's resolvable sine modes `1..K`.
//!
//! Every generator is a ChaCha8 stream selected by `(seed, stream)`; batches
//! of trajectories use one stream per trajectory index.

use crate::error::{Error, Result};
use crate::spectral::{DensityField, SpectralBasis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub const DEFAULT_NOISE_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseKind {
    /// One Brownian motion, constant in space.
    Scalar,
    /// Space-time white noise truncated at `modes` sine modes (state
    /// truncation when absent).
    Cylindrical {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        modes: Option<usize>,
    },
    /// Diagonal covariance `q_k` on sine modes `k = 1..=len`.
    QDiagonal { spectrum: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Amplitude {
    Additive { sigma: f64 },
    /// `sigma / sqrt(max(rho, floor))`.  `floor = 0` is the un-floored
    /// singular amplitude, only meaningful as a checker fixture.
    Multiplicative { sigma: f64, floor: f64 },
}

impl Amplitude {
    pub fn sigma(&self) -> f64 {
        match *self {
            Amplitude::Additive { sigma } | Amplitude::Multiplicative { sigma, .. } => sigma,
        }
    }

    pub fn is_additive(&self) -> bool {
        matches!(self, Amplitude::Additive { .. })
    }
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    #[serde(flatten)]
    pub kind: NoiseKind,
    pub amplitude: Amplitude,
    #[serde(default = "default_true")]
    pub conservative: bool,
    #[serde(default)]
    pub seed: u64,
}

impl NoiseSpec {
    pub fn additive_cylindrical(sigma: f64, seed: u64) -> Self {
        Self {
            kind: NoiseKind::Cylindrical { modes: None },
            amplitude: Amplitude::Additive { sigma },
            conservative: true,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let sigma = self.amplitude.sigma();
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::Config(format!("noise sigma must be >= 0, got {sigma}")));
        }
        if let Amplitude::Multiplicative { floor, .. } = self.amplitude {
            if !(floor >= 0.0) {
                return Err(Error::Config("noise floor must be >= 0".into()));
            }
        }
        match &self.kind {
            NoiseKind::QDiagonal { spectrum } if spectrum.iter().any(|q| !(*q >= 0.0)) => {
                Err(Error::Config("q_diagonal spectrum must be nonnegative".into()))
            }
            NoiseKind::Cylindrical { modes: Some(0) } => {
                Err(Error::Config("cylindrical noise needs at least one mode".into()))
            }
            _ => Ok(()),
        }
    }

    /// Number of active sine modes for a basis with `n_modes` cosine modes.
    pub fn active_modes(&self, n_modes: usize) -> usize {
        let cap = n_modes.saturating_sub(1);
        match &self.kind {
            NoiseKind::Scalar => 0,
            NoiseKind::Cylindrical { modes } => modes.unwrap_or(cap).min(cap),
            NoiseKind::QDiagonal { spectrum } => spectrum.len().min(cap),
        }
    }

    /// `sum_k q_k` over the active modes (the scalar kind counts as one).
    pub fn covariance_trace(&self, n_modes: usize) -> f64 {
        match &self.kind {
            NoiseKind::Scalar => 1.0,
            NoiseKind::Cylindrical { .. } => self.active_modes(n_modes) as f64,
            NoiseKind::QDiagonal { spectrum } => {
                spectrum.iter().take(self.active_modes(n_modes)).sum()
            }
        }
    }

    fn mode_scale(&self, k: usize) -> f64 {
        match &self.kind {
            NoiseKind::QDiagonal { spectrum } => spectrum[k - 1].sqrt(),
            _ => 1.0,
        }
    }
}

/// Raw Wiener increments of one step: `[beta]` for the scalar kind, or
/// `xi_k` at index `k` (index 0 unused) for modal kinds, all `N(0, dt)`
/// before covariance scaling.  Increments over consecutive steps add.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WhiteIncrement {
    pub values: Vec<f64>,
}

impl WhiteIncrement {
    pub fn add(&mut self, other: &WhiteIncrement) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
    }
}

#[derive(Debug, Clone)]
pub struct NoiseGenerator {
    spec: NoiseSpec,
    rng: ChaCha8Rng,
    n_active: usize,
    scales: Vec<f64>,
    flux: Vec<f64>,
    sine: Vec<f64>,
}

impl NoiseGenerator {
    pub fn new(spec: &NoiseSpec, basis: &SpectralBasis, stream: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(stream);
        let n_active = spec.active_modes(basis.n_modes());
        let mut scales = vec![0.0; basis.n_modes()];
        for (k, s) in scales.iter_mut().enumerate().take(n_active + 1).skip(1) {
            *s = spec.mode_scale(k);
        }
        Ok(Self {
            spec: spec.clone(),
            rng,
            n_active,
            scales,
            flux: vec![0.0; basis.n_grid()],
            sine: vec![0.0; basis.n_modes()],
        })
    }

    pub fn spec(&self) -> &NoiseSpec {
        &self.spec
    }

    pub fn white_len(&self) -> usize {
        match self.spec.kind {
            NoiseKind::Scalar => 1,
            _ => self.n_active + 1,
        }
    }

    pub fn zero_white(&self) -> WhiteIncrement {
        WhiteIncrement {
            values: vec![0.0; self.white_len()],
        }
    }

    /// Draws the raw increments of one step of length `dt`.
    pub fn white(&mut self, dt: f64) -> WhiteIncrement {
        let mut w = self.zero_white();
        self.white_into(dt, &mut w);
        w
    }

    pub fn white_into(&mut self, dt: f64, w: &mut WhiteIncrement) {
        let sd = dt.sqrt();
        let start = if matches!(self.spec.kind, NoiseKind::Scalar) { 0 } else { 1 };
        for v in w.values.iter_mut().skip(start) {
            let z: f64 = StandardNormal.sample(&mut self.rng);
            *v = sd * z;
        }
    }

    /// Cosine coefficients of the increment driven by `white`.
    pub fn increment_from_white(
        &mut self,
        basis: &SpectralBasis,
        white: &WhiteIncrement,
        rho: Option<&DensityField>,
        out: &mut [f64],
    ) -> Result<()> {
        out.iter_mut().for_each(|v| *v = 0.0);
        let sigma = self.spec.amplitude.sigma();
        let modal = !matches!(self.spec.kind, NoiseKind::Scalar);
        match (self.spec.amplitude, self.spec.conservative, modal) {
            (Amplitude::Additive { .. }, true, true) => {
                for k in 1..=self.n_active {
                    out[k] = sigma * self.scales[k] * basis.wavenumber(k) * white.values[k];
                }
                return Ok(());
            }
            (Amplitude::Additive { .. }, true, false) => return Ok(()),
            _ => {}
        }
        // Grid route: flux = amplitude(rho) * W on the grid.
        if modal {
            for k in 0..self.sine.len() {
                self.sine[k] = if k >= 1 && k <= self.n_active {
                    self.scales[k] * white.values[k]
                } else {
                    0.0
                };
            }
            basis.sine_to_grid_into(&self.sine, &mut self.flux);
        } else {
            self.flux.iter_mut().for_each(|v| *v = white.values[0]);
        }
        match self.spec.amplitude {
            Amplitude::Additive { sigma } => self.flux.iter_mut().for_each(|v| *v *= sigma),
            Amplitude::Multiplicative { sigma, floor } => {
                let rho = rho.ok_or_else(|| {
                    Error::Usage("multiplicative noise needs the current density".into())
                })?;
                for (j, (f, &r)) in self.flux.iter_mut().zip(rho.grid_values()).enumerate() {
                    let base = r.max(floor);
                    if !(base > 0.0) {
                        return Err(Error::PositivityViolation {
                            index: j,
                            position: basis.grid()[j],
                            value: r,
                        });
                    }
                    *f *= sigma / base.sqrt();
                }
            }
        }
        if self.spec.conservative {
            basis.sine_to_spectral_into(&self.flux, &mut self.sine);
            for k in 1..out.len() {
                out[k] = basis.wavenumber(k) * self.sine[k];
            }
            out[0] = 0.0;
        } else {
            basis.to_spectral_into(&self.flux, out);
        }
        Ok(())
    }

    /// One increment of `d_s(amplitude * dW)` over a step of length `dt`.
    pub fn sample_increment(
        &mut self,
        basis: &SpectralBasis,
        dt: f64,
        rho: Option<&DensityField>,
    ) -> Result<Vec<f64>> {
        if !(dt > 0.0) {
            return Err(Error::Precondition(format!("dt must be > 0, got {dt}")));
        }
        if !self.spec.amplitude.is_additive() && rho.is_none() {
            return Err(Error::Usage("multiplicative noise needs the current density".into()));
        }
        let w = self.white(dt);
        let mut out = vec![0.0; basis.n_modes()];
        self.increment_from_white(basis, &w, rho, &mut out)?;
        Ok(out)
    }
}

/// `Tr(Q* (-Delta) Q)` at the current truncation: the per-unit-time squared
/// `L^2` norm of the increment, summed over the noise modes.
pub fn ito_trace(spec: &NoiseSpec, basis: &SpectralBasis, rho: Option<&DensityField>) -> Result<f64> {
    let mut gen = NoiseGenerator::new(spec, basis, 0)?;
    let mut white = gen.zero_white();
    let mut out = vec![0.0; basis.n_modes()];
    let mut total = 0.0;
    let start = if matches!(spec.kind, NoiseKind::Scalar) { 0 } else { 1 };
    for m in start..white.values.len() {
        white.values.iter_mut().for_each(|v| *v = 0.0);
        white.values[m] = 1.0;
        gen.increment_from_white(basis, &white, rho, &mut out)?;
        total += out.iter().map(|c| c * c).sum::<f64>();
    }
    Ok(total)
}

/// Affine envelope `Tr <= c_q1 + c_q2 ||rho||^2` fitted over sample densities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceBound {
    pub c_q1: f64,
    pub c_q2: f64,
    /// Root-mean-square residual of the least-squares fit.
    pub residual: f64,
}

pub fn trace_bound_report(
    spec: &NoiseSpec,
    basis: &SpectralBasis,
    samples: &[DensityField],
) -> Result<TraceBound> {
    if spec.amplitude.sigma() == 0.0 {
        return Ok(TraceBound {
            c_q1: 0.0,
            c_q2: 0.0,
            residual: 0.0,
        });
    }
    if spec.amplitude.is_additive() {
        return Ok(TraceBound {
            c_q1: ito_trace(spec, basis, None)?,
            c_q2: 0.0,
            residual: 0.0,
        });
    }
    if samples.len() < 2 {
        return Err(Error::Precondition("trace fit needs at least two samples".into()));
    }
    let mut xs = Vec::with_capacity(samples.len());
    let mut ys = Vec::with_capacity(samples.len());
    for rho in samples {
        xs.push(rho.l2_norm().powi(2));
        ys.push(ito_trace(spec, basis, Some(rho))?);
    }
    let fit = crate::analysis::stats::linear_fit(&xs, &ys);
    let slope = fit.slope.max(0.0);
    let intercept = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| y - slope * x)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(TraceBound {
        c_q1: intercept,
        c_q2: slope,
        residual: fit.rms_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn basis() -> SpectralBasis {
        SpectralBasis::new(8).unwrap()
    }

    #[test]
    fn zero_sigma_gives_zero_field() {
        let b = basis();
        for kind in [NoiseKind::Scalar, NoiseKind::Cylindrical { modes: None }] {
            let spec = NoiseSpec {
                kind,
                amplitude: Amplitude::Additive { sigma: 0.0 },
                conservative: true,
                seed: 1,
            };
            let mut g = NoiseGenerator::new(&spec, &b, 0).unwrap();
            let inc = g.sample_increment(&b, 0.01, None).unwrap();
            assert!(inc.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn conservative_increments_have_no_mass() {
        let b = basis();
        let rho = DensityField::from_fn(&b, |s| 1.0 + 0.5 * s);
        for amplitude in [
            Amplitude::Additive { sigma: 1.0 },
            Amplitude::Multiplicative { sigma: 0.7, floor: 1e-3 },
        ] {
            for kind in [
                NoiseKind::Scalar,
                NoiseKind::Cylindrical { modes: Some(5) },
                NoiseKind::QDiagonal { spectrum: vec![1.0, 0.5, 0.25] },
            ] {
                let spec = NoiseSpec { kind, amplitude, conservative: true, seed: 3 };
                let mut g = NoiseGenerator::new(&spec, &b, 0).unwrap();
                for _ in 0..100 {
                    let inc = g.sample_increment(&b, 0.1, Some(&rho)).unwrap();
                    assert_eq!(inc[0], 0.0);
                }
            }
        }
    }

    #[test]
    fn multiplicative_without_density_is_usage_error() {
        let b = basis();
        let spec = NoiseSpec {
            kind: NoiseKind::Cylindrical { modes: None },
            amplitude: Amplitude::Multiplicative { sigma: 1.0, floor: 1e-3 },
            conservative: true,
            seed: 0,
        };
        let mut g = NoiseGenerator::new(&spec, &b, 0).unwrap();
        assert!(matches!(g.sample_increment(&b, 0.1, None), Err(Error::Usage(_))));
    }

    #[test]
    fn additive_cylindrical_mode_variance() {
        // Oracle: var(cosine mode k) = lambda_k sigma^2 dt; the sample
        // variance of n Gaussian draws has standard error var * sqrt(2/n).
        let b = basis();
        let (sigma, dt, n) = (0.8, 0.01, 100_000usize);
        let spec = NoiseSpec::additive_cylindrical(sigma, 42);
        let mut g = NoiseGenerator::new(&spec, &b, 0).unwrap();
        let mut sums = [0.0; 8];
        let mut prev = vec![0.0; 8];
        let mut lag = [0.0; 8];
        for i in 0..n {
            let inc = g.sample_increment(&b, dt, None).unwrap();
            for k in 1..8 {
                sums[k] += inc[k] * inc[k];
                if i > 0 {
                    lag[k] += inc[k] * prev[k];
                }
            }
            prev = inc;
        }
        for k in 1..8 {
            let expect = b.eigenvalue(k) * sigma * sigma * dt;
            let var = sums[k] / n as f64;
            let se = expect * (2.0 / n as f64).sqrt();
            assert!((var - expect).abs() < 3.0 * se, "mode {k}: {var} vs {expect}");
            let corr = lag[k] / (n - 1) as f64 / expect;
            assert!(corr.abs() < 4.0 / (n as f64).sqrt(), "mode {k} lag-1 corr {corr}");
        }
    }

    #[test]
    fn same_seed_same_stream_is_bit_identical() {
        let b = basis();
        let spec = NoiseSpec::additive_cylindrical(1.0, 99);
        let mut a = NoiseGenerator::new(&spec, &b, 4).unwrap();
        let mut c = NoiseGenerator::new(&spec, &b, 4).unwrap();
        let mut d = NoiseGenerator::new(&spec, &b, 5).unwrap();
        let x = a.sample_increment(&b, 0.1, None).unwrap();
        assert_eq!(x, c.sample_increment(&b, 0.1, None).unwrap());
        assert_ne!(x, d.sample_increment(&b, 0.1, None).unwrap());
    }

    #[test]
    fn additive_trace_is_eigenvalue_sum() {
        let b = SpectralBasis::new(9).unwrap();
        let spec = NoiseSpec {
            kind: NoiseKind::Cylindrical { modes: Some(8) },
            amplitude: Amplitude::Additive { sigma: 1.0 },
            conservative: true,
            seed: 0,
        };
        let expect: f64 = (1..=8).map(|k| b.eigenvalue(k)).sum();
        let rep = trace_bound_report(&spec, &b, &[]).unwrap();
        assert!((rep.c_q1 - expect).abs() < 1e-9 * expect);
        assert_eq!(rep.c_q2, 0.0);
        let zero = NoiseSpec {
            amplitude: Amplitude::Additive { sigma: 0.0 },
            ..spec
        };
        let rep = trace_bound_report(&zero, &b, &[]).unwrap();
        assert_eq!((rep.c_q1, rep.c_q2), (0.0, 0.0));
    }

    #[test]
    fn multiplicative_trace_fit_envelopes_samples() {
        use rand::{Rng, SeedableRng};
        let b = SpectralBasis::new(8).unwrap();
        let spec = NoiseSpec {
            kind: NoiseKind::Cylindrical { modes: None },
            amplitude: Amplitude::Multiplicative { sigma: 1.0, floor: 1e-3 },
            conservative: true,
            seed: 0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let samples: Vec<DensityField> = (0..100)
            .map(|_| {
                let mut c = vec![0.0; 8];
                c[0] = rng.random_range(0.5..3.0);
                for v in c.iter_mut().skip(1).take(3) {
                    *v = rng.random_range(-0.1..0.1);
                }
                DensityField::from_coeffs(&b, c).unwrap()
            })
            .collect();
        let rep = trace_bound_report(&spec, &b, &samples).unwrap();
        assert!(rep.residual.is_finite());
        for rho in &samples {
            let tr = ito_trace(&spec, &b, Some(rho)).unwrap();
            assert!(tr <= rep.c_q1 + rep.c_q2 * rho.l2_norm().powi(2) + 1e-9);
        }
    }
}
