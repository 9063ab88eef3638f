//! Observable-by-observable comparison of two samplings of an invariant
//! measure.  Each side is a set of chains (trajectory time series or MCMC
//! chains); standard errors come from batch means within each chain and
//! are combined across chains as independent.

use crate::analysis::stats;
use crate::error::{Error, Result};
use crate::noise::NoiseSpec;
use serde::{Deserialize, Serialize};

pub const DEFAULT_THRESHOLD: f64 = 3.0;
pub const DEFAULT_MIN_ESS: f64 = 200.0;
const BATCHES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "observable", rename_all = "snake_case")]
pub enum Observable {
    /// `E[x_k^2]` of fluctuation coefficient `k`.
    ModeVariance { mode: usize },
    ModeMean { mode: usize },
    /// `E[tanh(x_k / scale)]`, bounded and Lipschitz.
    TanhMode { mode: usize, scale: f64 },
    /// `E[atan(|x|_{L2} / scale)]` over the fluctuation.
    AtanNorm { scale: f64 },
}

impl Observable {
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        match *self {
            Observable::ModeVariance { mode } => x[mode] * x[mode],
            Observable::ModeMean { mode } => x[mode],
            Observable::TanhMode { mode, scale } => (x[mode] / scale).tanh(),
            Observable::AtanNorm { scale } => {
                (x.iter().skip(1).map(|c| c * c).sum::<f64>().sqrt() / scale).atan()
            }
        }
    }

    pub fn label(&self) -> String {
        match *self {
            Observable::ModeVariance { mode } => format!("var_c{mode}"),
            Observable::ModeMean { mode } => format!("mean_c{mode}"),
            Observable::TanhMode { mode, scale } => format!("tanh_c{mode}_{scale}"),
            Observable::AtanNorm { scale } => format!("atan_norm_{scale}"),
        }
    }

    pub fn mode_variances(modes: impl IntoIterator<Item = usize>) -> Vec<Observable> {
        modes.into_iter().map(|mode| Observable::ModeVariance { mode }).collect()
    }
}

/// Samples of fluctuation coefficient vectors, grouped by chain.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MeasureSamples {
    pub label: String,
    pub chains: Vec<Vec<Vec<f64>>>,
}

impl MeasureSamples {
    pub fn new(label: impl Into<String>, chains: Vec<Vec<Vec<f64>>>) -> Self {
        Self {
            label: label.into(),
            chains,
        }
    }

    pub fn n_samples(&self) -> usize {
        self.chains.iter().map(Vec::len).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
    pub ess: f64,
}

/// Pooled mean with batch-means standard error per chain.
pub fn estimate(samples: &MeasureSamples, observable: &Observable) -> Estimate {
    let mut total = 0.0;
    let mut count = 0usize;
    let mut var_sum = 0.0;
    let mut ess = 0.0;
    for chain in &samples.chains {
        if chain.is_empty() {
            continue;
        }
        let values: Vec<f64> = chain.iter().map(|x| observable.evaluate(x)).collect();
        let n = values.len();
        let se = stats::batch_means_se(&values, BATCHES);
        total += values.iter().sum::<f64>();
        var_sum += (se * n as f64).powi(2);
        count += n;
        ess += stats::effective_sample_size(&values);
    }
    if count == 0 {
        return Estimate {
            mean: f64::NAN,
            se: f64::NAN,
            ess: 0.0,
        };
    }
    Estimate {
        mean: total / count as f64,
        se: var_sum.sqrt() / count as f64,
        ess,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl Verdict {
    /// Fail dominates Inconclusive, which dominates Pass.
    pub fn combine(self, other: Verdict) -> Verdict {
        use Verdict::*;
        match (self, other) {
            (Fail, _) | (_, Fail) => Fail,
            (Inconclusive, _) | (_, Inconclusive) => Inconclusive,
            _ => Pass,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObservableComparison {
    pub observable: String,
    pub first: Estimate,
    pub second: Estimate,
    /// `|mean_1 - mean_2| / sqrt(se_1^2 + se_2^2)`.
    pub z: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub first_label: String,
    pub second_label: String,
    pub threshold: f64,
    pub min_ess: f64,
    pub observables: Vec<ObservableComparison>,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompareConfig {
    pub threshold: f64,
    pub min_ess: f64,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            min_ess: DEFAULT_MIN_ESS,
        }
    }
}

/// Compares two samplings observable by observable.  Refuses to run when the
/// noise vanishes (no ergodicity, no unique invariant measure).
pub fn compare_invariant_measures(
    first: &MeasureSamples,
    second: &MeasureSamples,
    observables: &[Observable],
    noise: &NoiseSpec,
    config: &CompareConfig,
) -> Result<ComparisonReport> {
    if noise.amplitude.sigma() == 0.0 {
        return Err(Error::NoStationaryMeasure(
            "zero noise: the dynamics are not ergodic".into(),
        ));
    }
    if !noise.amplitude.is_additive() {
        return Err(Error::Precondition("measure comparison needs additive noise".into()));
    }
    let mut verdict = Verdict::Pass;
    let mut rows = Vec::with_capacity(observables.len());
    for obs in observables {
        let a = estimate(first, obs);
        let b = estimate(second, obs);
        let (z, v) = compare_estimates(&a, &b, config);
        verdict = verdict.combine(v);
        rows.push(ObservableComparison {
            observable: obs.label(),
            first: a,
            second: b,
            z,
            verdict: v,
        });
    }
    Ok(ComparisonReport {
        first_label: first.label.clone(),
        second_label: second.label.clone(),
        threshold: config.threshold,
        min_ess: config.min_ess,
        observables: rows,
        verdict,
    })
}

/// Verdict for one pair of estimates (symmetric in its arguments).
pub fn compare_estimates(a: &Estimate, b: &Estimate, config: &CompareConfig) -> (f64, Verdict) {
    let combined = (a.se * a.se + b.se * b.se).sqrt();
    let diff = (a.mean - b.mean).abs();
    let z = if combined > 0.0 {
        diff / combined
    } else if diff == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    let verdict = if a.ess.min(b.ess) < config.min_ess || diff.is_nan() {
        Verdict::Inconclusive
    } else if z <= config.threshold {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    (z, verdict)
}

/// Checks one estimate against an exact value with the same threshold rule.
pub fn compare_to_exact(a: &Estimate, exact: f64, config: &CompareConfig) -> (f64, Verdict) {
    let b = Estimate {
        mean: exact,
        se: 0.0,
        ess: f64::INFINITY,
    };
    compare_estimates(a, &b, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn gaussian_chains(sd: f64, seed: u64, chains: usize, n: usize) -> MeasureSamples {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = Normal::new(0.0, sd).unwrap();
        MeasureSamples::new(
            format!("sd{sd}"),
            (0..chains)
                .map(|_| (0..n).map(|_| vec![0.0, d.sample(&mut rng), d.sample(&mut rng)]).collect())
                .collect(),
        )
    }

    #[test]
    fn matching_measures_pass_and_different_fail() {
        let noise = NoiseSpec::additive_cylindrical(1.0, 0);
        let obs = [
            Observable::ModeVariance { mode: 1 },
            Observable::ModeVariance { mode: 2 },
            Observable::TanhMode { mode: 1, scale: 1.0 },
            Observable::AtanNorm { scale: 1.0 },
        ];
        let a = gaussian_chains(1.0, 1, 4, 5000);
        let b = gaussian_chains(1.0, 2, 2, 8000);
        let r = compare_invariant_measures(&a, &b, &obs, &noise, &CompareConfig::default()).unwrap();
        assert_eq!(r.verdict, Verdict::Pass, "{r:?}");
        let c = gaussian_chains(1.2, 3, 2, 8000);
        let r = compare_invariant_measures(&a, &c, &obs, &noise, &CompareConfig::default()).unwrap();
        assert_eq!(r.verdict, Verdict::Fail);
    }

    #[test]
    fn symmetric_in_inputs() {
        let noise = NoiseSpec::additive_cylindrical(1.0, 0);
        let obs = Observable::mode_variances(1..3);
        for (sa, sb) in [(1.0, 1.0), (1.0, 1.05), (1.0, 1.3)] {
            let a = gaussian_chains(sa, 7, 3, 3000);
            let b = gaussian_chains(sb, 8, 3, 3000);
            let ab = compare_invariant_measures(&a, &b, &obs, &noise, &CompareConfig::default()).unwrap();
            let ba = compare_invariant_measures(&b, &a, &obs, &noise, &CompareConfig::default()).unwrap();
            assert_eq!(ab.verdict, ba.verdict);
            for (x, y) in ab.observables.iter().zip(&ba.observables) {
                assert_eq!(x.z, y.z);
                assert_eq!(x.first, y.second);
            }
        }
    }

    #[test]
    fn few_samples_inconclusive() {
        let noise = NoiseSpec::additive_cylindrical(1.0, 0);
        let a = gaussian_chains(1.0, 1, 1, 50);
        let b = gaussian_chains(3.0, 2, 1, 50);
        let r = compare_invariant_measures(&a, &b, &Observable::mode_variances([1]), &noise, &CompareConfig::default())
            .unwrap();
        assert_eq!(r.verdict, Verdict::Inconclusive);
    }

    #[test]
    fn zero_noise_refused() {
        let a = gaussian_chains(1.0, 1, 1, 500);
        let err = compare_invariant_measures(
            &a,
            &a,
            &Observable::mode_variances([1]),
            &NoiseSpec::additive_cylindrical(0.0, 0),
            &CompareConfig::default(),
        );
        assert!(matches!(err, Err(Error::NoStationaryMeasure(_))));
    }

    #[test]
    fn verdict_combination() {
        use Verdict::*;
        assert_eq!(Pass.combine(Inconclusive), Inconclusive);
        assert_eq!(Inconclusive.combine(Fail), Fail);
        assert_eq!(Pass.combine(Pass), Pass);
    }
}
