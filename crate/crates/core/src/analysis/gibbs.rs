//! Preconditioned Crank-Nicolson sampler for `Pi(dx) ~ exp(-E(x)) gamma(dx)`.
//!
//! States are fluctuation coefficient vectors (index 0 is unused and kept at
//! zero); the mass is frozen and added back inside the energy.  The proposal
//! `x' = sqrt(1 - beta^2) x + beta xi`, `xi ~ gamma`, is gamma-reversible, so
//! the acceptance ratio only involves the energy.

use crate::analysis::gaussian::GaussianReference;
use crate::analysis::stats;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::spectral::SpectralBasis;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Acceptance below this after burn-in is a tuning failure.
pub const MIN_ACCEPTANCE: f64 = 0.01;
const ADAPT_WINDOW: usize = 50;

/// `E(x) = inverse_temperature * sum_j w V(m + x)(s_j)` on the collocation
/// grid, optionally `+inf` outside the nonnegative cone.
#[derive(Debug, Clone)]
pub struct BulkEnergy {
    basis: SpectralBasis,
    model: Model,
    mass: f64,
    inverse_temperature: f64,
    restrict_positive: bool,
}

impl BulkEnergy {
    pub fn new(basis: &SpectralBasis, model: Model, mass: f64, inverse_temperature: f64) -> Self {
        Self {
            basis: basis.clone(),
            model,
            mass,
            inverse_temperature,
            restrict_positive: false,
        }
    }

    /// Adds the indicator of `{x >= 0}` (checked on the grid).
    pub fn restricted_to_positive(mut self) -> Self {
        self.restrict_positive = true;
        self
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        let mut coeffs = x.to_vec();
        coeffs[0] = self.mass;
        let grid = match self.basis.to_grid(&coeffs) {
            Ok(g) => g,
            Err(_) => return f64::INFINITY,
        };
        if self.restrict_positive && grid.iter().any(|v| *v < 0.0) {
            return f64::INFINITY;
        }
        match self.model.potential_energy(&self.basis, &grid) {
            Ok(e) => self.inverse_temperature * e,
            Err(_) => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChainConfig {
    pub beta: f64,
    pub burn_in: usize,
    pub n_samples: usize,
    pub thin: usize,
    pub adapt: bool,
    pub target_acceptance: f64,
    pub seed: u64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            beta: 0.5,
            burn_in: 5_000,
            n_samples: 20_000,
            thin: 1,
            adapt: true,
            target_acceptance: 0.3,
            seed: 0,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::Config(format!("beta must lie in (0, 1], got {}", self.beta)));
        }
        if self.thin == 0 || self.n_samples == 0 {
            return Err(Error::Config("n_samples and thin must be >= 1".into()));
        }
        if !(self.target_acceptance > 0.0 && self.target_acceptance < 1.0) {
            return Err(Error::Config("target_acceptance must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GibbsSamples {
    /// Thinned fluctuation coefficient vectors.
    pub samples: Vec<Vec<f64>>,
    /// Post-burn-in acceptance rate.
    pub acceptance_rate: f64,
    /// Step size after adaptation.
    pub beta: f64,
    /// Per-mode effective sample size of the retained samples.
    pub ess: Vec<f64>,
    pub scheme: &'static str,
}

impl GibbsSamples {
    pub fn mode_series(&self, k: usize) -> Vec<f64> {
        self.samples.iter().map(|x| x[k]).collect()
    }
}

/// One pCN chain.  The state never moves to a proposal with infinite energy.
pub struct GibbsChain<'a> {
    reference: &'a GaussianReference,
    energy: &'a (dyn Fn(&[f64]) -> f64 + Sync),
    rng: ChaCha8Rng,
    state: Vec<f64>,
    state_energy: f64,
    proposal: Vec<f64>,
    noise: Vec<f64>,
    pub beta: f64,
    pub accepted: u64,
    pub proposed: u64,
}

impl<'a> GibbsChain<'a> {
    pub fn new(
        reference: &'a GaussianReference,
        energy: &'a (dyn Fn(&[f64]) -> f64 + Sync),
        beta: f64,
        seed: u64,
        stream: u64,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        // start from a gamma draw with finite energy; fall back to 0
        let mut state = vec![0.0; reference.n_modes()];
        for _ in 0..1000 {
            let x = reference.sample(&mut rng);
            if energy(&x).is_finite() {
                state = x;
                break;
            }
        }
        let state_energy = energy(&state);
        if !state_energy.is_finite() {
            return Err(Error::Precondition("no starting state with finite energy".into()));
        }
        let n = reference.n_modes();
        Ok(Self {
            reference,
            energy,
            rng,
            state,
            state_energy,
            proposal: vec![0.0; n],
            noise: vec![0.0; n],
            beta,
            accepted: 0,
            proposed: 0,
        })
    }

    pub fn state(&self) -> &[f64] {
        &self.state
    }

    pub fn step(&mut self) -> bool {
        self.reference.sample_into(&mut self.rng, &mut self.noise);
        let keep = (1.0 - self.beta * self.beta).sqrt();
        for ((p, x), z) in self.proposal.iter_mut().zip(&self.state).zip(&self.noise) {
            *p = keep * x + self.beta * z;
        }
        self.proposed += 1;
        let e = (self.energy)(&self.proposal);
        if !e.is_finite() {
            return false;
        }
        let log_ratio = self.state_energy - e;
        let u: f64 = self.rng.random();
        if log_ratio >= 0.0 || u.ln() < log_ratio {
            std::mem::swap(&mut self.state, &mut self.proposal);
            self.state_energy = e;
            self.accepted += 1;
            true
        } else {
            false
        }
    }
}

fn adapt(beta: f64, rate: f64, target: f64) -> f64 {
    (beta * (rate - target).exp()).clamp(1e-4, 1.0)
}

fn finish(samples: Vec<Vec<f64>>, accepted: u64, proposed: u64, beta: f64, scheme: &'static str) -> Result<GibbsSamples> {
    let rate = accepted as f64 / proposed.max(1) as f64;
    if rate < MIN_ACCEPTANCE {
        return Err(Error::TuningFailure { rate });
    }
    let n_modes = samples.first().map_or(0, |s| s.len());
    let ess = (0..n_modes)
        .map(|k| {
            let series: Vec<f64> = samples.iter().map(|x| x[k]).collect();
            stats::effective_sample_size(&series)
        })
        .collect();
    Ok(GibbsSamples {
        samples,
        acceptance_rate: rate,
        beta,
        ess,
        scheme,
    })
}

/// Runs one pCN chain on stream `stream` of `config.seed`.
pub fn gibbs_sample(
    reference: &GaussianReference,
    energy: &(dyn Fn(&[f64]) -> f64 + Sync),
    config: &ChainConfig,
    stream: u64,
) -> Result<GibbsSamples> {
    config.validate()?;
    let mut chain = GibbsChain::new(reference, energy, config.beta, config.seed, stream)?;
    let mut window = 0u64;
    for i in 0..config.burn_in {
        if chain.step() {
            window += 1;
        }
        if config.adapt && (i + 1) % ADAPT_WINDOW == 0 {
            chain.beta = adapt(chain.beta, window as f64 / ADAPT_WINDOW as f64, config.target_acceptance);
            window = 0;
        }
    }
    chain.accepted = 0;
    chain.proposed = 0;
    let mut samples = Vec::with_capacity(config.n_samples);
    for _ in 0..config.n_samples {
        for _ in 0..config.thin {
            chain.step();
        }
        samples.push(chain.state().to_vec());
    }
    finish(samples, chain.accepted, chain.proposed, chain.beta, "pcn")
}

/// Independent pCN chains on streams `0..n_chains`.
pub fn gibbs_sample_chains(
    reference: &GaussianReference,
    energy: &(dyn Fn(&[f64]) -> f64 + Sync),
    config: &ChainConfig,
    n_chains: usize,
) -> Result<Vec<GibbsSamples>> {
    crate::analysis::ensemble::map_indexed(n_chains, |i| gibbs_sample(reference, energy, config, i as u64))
        .into_iter()
        .collect()
}

/// Largest number of fluctuation modes accepted by [`rwm_sample`].
pub const RWM_MAX_MODES: usize = 4;

/// Random-walk Metropolis on the Lebesgue density `exp(-E(x)) gamma(x)`,
/// for cross-checking pCN at small truncations.  The step is scaled by the
/// reference standard deviations; `config.beta` is the relative step size.
pub fn rwm_sample(
    reference: &GaussianReference,
    energy: &(dyn Fn(&[f64]) -> f64 + Sync),
    config: &ChainConfig,
    stream: u64,
) -> Result<GibbsSamples> {
    config.validate()?;
    let active: Vec<usize> = (0..reference.n_modes())
        .filter(|&k| reference.variances[k] > 0.0)
        .collect();
    if active.len() > RWM_MAX_MODES {
        return Err(Error::Precondition(format!(
            "random-walk cross-check supports at most {RWM_MAX_MODES} modes, got {}",
            active.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(stream);
    let log_target = |x: &[f64]| -> f64 {
        let e = energy(x);
        if e.is_finite() {
            -e - reference.neg_log_density(x)
        } else {
            f64::NEG_INFINITY
        }
    };
    let mut x = vec![0.0; reference.n_modes()];
    let mut lp = log_target(&x);
    if !lp.is_finite() {
        return Err(Error::Precondition("rwm start state has infinite energy".into()));
    }
    let mut step = config.beta;
    let mut prop = x.clone();
    let mut do_step = |x: &mut Vec<f64>, lp: &mut f64, step: f64, rng: &mut ChaCha8Rng| -> bool {
        prop.copy_from_slice(x);
        for &k in &active {
            let z: f64 = StandardNormal.sample(rng);
            prop[k] += step * reference.variances[k].sqrt() * z;
        }
        let lq = log_target(&prop);
        let u: f64 = rng.random();
        if lq.is_finite() && u.ln() < lq - *lp {
            x.copy_from_slice(&prop);
            *lp = lq;
            true
        } else {
            false
        }
    };
    let mut window = 0usize;
    for i in 0..config.burn_in {
        if do_step(&mut x, &mut lp, step, &mut rng) {
            window += 1;
        }
        if config.adapt && (i + 1) % ADAPT_WINDOW == 0 {
            step = (step * (window as f64 / ADAPT_WINDOW as f64 - config.target_acceptance).exp()).clamp(1e-4, 10.0);
            window = 0;
        }
    }
    let (mut accepted, mut proposed) = (0u64, 0u64);
    let mut samples = Vec::with_capacity(config.n_samples);
    for _ in 0..config.n_samples {
        for _ in 0..config.thin {
            proposed += 1;
            if do_step(&mut x, &mut lp, step, &mut rng) {
                accepted += 1;
            }
        }
        samples.push(x.clone());
    }
    finish(samples, accepted, proposed, step, "rwm")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::gaussian::gaussian_reference;
    use crate::analysis::stats::{batch_means_se, ks_critical_1pct, ks_normal, mean};
    use crate::model::{Mobility, PotentialFamily, PotentialSpec, RegularizedBase};
    use crate::noise::NoiseSpec;

    fn reference(k: usize, alpha: f64) -> (SpectralBasis, GaussianReference) {
        let b = SpectralBasis::new(k).unwrap();
        let g = gaussian_reference(alpha, &NoiseSpec::additive_cylindrical(1.0, 0), &b).unwrap();
        (b, g)
    }

    fn second_moment(samples: &GibbsSamples, k: usize) -> (f64, f64) {
        let sq: Vec<f64> = samples.samples.iter().map(|x| x[k] * x[k]).collect();
        (mean(&sq), batch_means_se(&sq, 40))
    }

    #[test]
    fn zero_energy_reproduces_reference() {
        let (_, g) = reference(5, 0.2);
        let zero = |_: &[f64]| 0.0;
        let cfg = ChainConfig { n_samples: 100_000, burn_in: 1000, seed: 11, ..ChainConfig::default() };
        let s = gibbs_sample(&g, &zero, &cfg, 0).unwrap();
        assert_eq!(s.acceptance_rate, 1.0);
        for k in 1..5 {
            let (m, se) = second_moment(&s, k);
            assert!((m - g.variances[k]).abs() < 3.0 * se, "mode {k}: {m} vs {}", g.variances[k]);
        }
        let d = ks_normal(&s.mode_series(1), g.variances[1]);
        assert!(d < ks_critical_1pct(100_000), "KS {d}");
    }

    #[test]
    fn conjugate_gaussian_posterior() {
        // V = q/2 (r - 1)^2 at mass 1 gives E(x) = q/2 sum_k x_k^2 exactly.
        let (b, g) = reference(4, 0.1);
        let q = 3.0;
        let model = Model::new(
            PotentialSpec::new(PotentialFamily::PolynomialTest { quadratic: q, quartic: 0.0 }, 0.1),
            Mobility::default(),
        );
        let energy = BulkEnergy::new(&b, model, 1.0, 1.0);
        let e = |x: &[f64]| energy.evaluate(x);
        let cfg = ChainConfig { n_samples: 60_000, burn_in: 5000, seed: 2, ..ChainConfig::default() };
        let s = gibbs_sample(&g, &e, &cfg, 0).unwrap();
        assert!(s.acceptance_rate > 0.1);
        for k in 1..4 {
            let exact = 1.0 / (1.0 / g.variances[k] + q);
            let (m, se) = second_moment(&s, k);
            assert!((m - exact).abs() < 3.0 * se, "mode {k}: {m} vs {exact} (se {se})");
        }
        // even target, so the first coefficient has mean zero
        let c1 = s.mode_series(1);
        assert!(mean(&c1).abs() < 3.0 * batch_means_se(&c1, 40));
    }

    #[test]
    fn pcn_agrees_with_random_walk() {
        let (b, g) = reference(4, 0.3);
        let model = Model::new(
            PotentialSpec::new(PotentialFamily::Regularized { n: 10, base: RegularizedBase::P2 }, 0.3),
            Mobility::default(),
        );
        let energy = BulkEnergy::new(&b, model, 1.0, 1.0);
        let e = |x: &[f64]| energy.evaluate(x);
        let cfg = ChainConfig { n_samples: 80_000, burn_in: 5000, seed: 5, ..ChainConfig::default() };
        let p = gibbs_sample(&g, &e, &cfg, 0).unwrap();
        let r = rwm_sample(&g, &e, &ChainConfig { beta: 1.0, ..cfg }, 1).unwrap();
        for k in 1..4 {
            let (mp, sp) = second_moment(&p, k);
            let (mr, sr) = second_moment(&r, k);
            assert!((mp - mr).abs() < 3.5 * (sp * sp + sr * sr).sqrt(), "mode {k}: {mp} vs {mr}");
        }
    }

    #[test]
    fn rwm_refuses_large_truncation() {
        let (_, g) = reference(8, 0.3);
        let zero = |_: &[f64]| 0.0;
        assert!(matches!(rwm_sample(&g, &zero, &ChainConfig::default(), 0), Err(Error::Precondition(_))));
    }

    #[test]
    fn infinite_energy_is_never_accepted() {
        let (b, g) = reference(4, 0.05);
        let model = Model::new(PotentialSpec::new(PotentialFamily::SingularP2, 0.05), Mobility::default());
        let energy = BulkEnergy::new(&b, model, 1.0, 1.0).restricted_to_positive();
        let e = |x: &[f64]| energy.evaluate(x);
        let cfg = ChainConfig { n_samples: 5000, burn_in: 1000, seed: 1, ..ChainConfig::default() };
        let s = gibbs_sample(&g, &e, &cfg, 0).unwrap();
        for x in &s.samples {
            let mut c = x.clone();
            c[0] = 1.0;
            assert!(b.to_grid(&c).unwrap().iter().all(|v| *v >= 0.0));
        }
    }

    #[test]
    fn stiff_target_without_adaptation_fails_tuning() {
        let (_, g) = reference(4, 0.1);
        let stiff = |x: &[f64]| 1e8 * x.iter().map(|c| c * c).sum::<f64>();
        let cfg = ChainConfig { beta: 1.0, adapt: false, n_samples: 2000, burn_in: 100, ..ChainConfig::default() };
        assert!(matches!(gibbs_sample(&g, &stiff, &cfg, 0), Err(Error::TuningFailure { .. })));
    }

    #[test]
    fn chains_are_reproducible() {
        let (_, g) = reference(4, 0.1);
        let zero = |_: &[f64]| 0.0;
        let cfg = ChainConfig { n_samples: 100, burn_in: 10, ..ChainConfig::default() };
        let a = gibbs_sample_chains(&g, &zero, &cfg, 3).unwrap();
        let b = gibbs_sample_chains(&g, &zero, &cfg, 3).unwrap();
        assert_eq!(a, b);
        assert_ne!(a[0].samples, a[1].samples);
    }
}
