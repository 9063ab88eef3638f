//! Convergence of the regularized Gibbs weights `exp(-E^n(x))` as `n` grows.
//!
//! `E^n(x) = sum_j w V^n(x(s_j))` on the collocation grid.  Since `V^n` is
//! pointwise nondecreasing in `n`, and floating-point addition, scaling and
//! `exp` are monotone, each sample weight is exactly non-increasing in `n`:
//! the scan checks this with no tolerance.  The limit weight is
//! `exp(-E(x))` on the nonnegative cone and 0 outside it.

use crate::analysis::compare::Observable;
use crate::analysis::gaussian::GaussianReference;
use crate::model::{PotentialFamily, PotentialSpec, RegularizedBase};
use crate::spectral::SpectralBasis;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Test functions `psi` for the scan; `One` is `psi = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanObservable {
    One,
    Observable(Observable),
}

impl ScanObservable {
    fn evaluate(&self, x: &[f64]) -> f64 {
        match self {
            ScanObservable::One => 1.0,
            ScanObservable::Observable(o) => o.evaluate(x),
        }
    }

    pub fn label(&self) -> String {
        match self {
            ScanObservable::One => "one".into(),
            ScanObservable::Observable(o) => o.label(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanRow {
    /// `None` for the limit measure.
    pub n: Option<u32>,
    /// `(1/N) sum_i psi(x_i) exp(-E^n(x_i))` per observable.
    pub estimates: Vec<f64>,
    /// Self-normalized expectations under `Pi^n`.
    pub normalized: Vec<f64>,
    /// Fraction of samples with nonzero weight.
    pub support_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanTable {
    pub observables: Vec<String>,
    pub rows: Vec<ScanRow>,
    pub limit: ScanRow,
    /// Samples whose weight increased somewhere along the `n` sequence.
    pub monotonicity_violations: usize,
    /// Observables (nonnegative on the sample set) whose estimates increased.
    pub estimate_violations: Vec<String>,
    /// Weight of `x = 1` at each `n`.
    pub probe_one: Vec<f64>,
    /// Weight of `x = -1` at each `n`.
    pub probe_minus_one: Vec<f64>,
    /// `estimate_n - estimate_limit` for `psi = 1`.
    pub limit_gap: Vec<f64>,
}

impl ScanTable {
    pub fn weights_monotone(&self) -> bool {
        self.monotonicity_violations == 0
    }

    pub fn estimates_monotone(&self) -> bool {
        self.estimate_violations.is_empty()
    }
}

/// Fixed set of draws `mass + xi`, `xi ~ gamma`, as full coefficient vectors.
pub fn gamma_sample_set(reference: &GaussianReference, mass: f64, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let mut x = reference.sample(&mut rng);
            x[0] = mass;
            x
        })
        .collect()
}

fn energy(basis: &SpectralBasis, pot: &PotentialSpec, grid: &[f64]) -> f64 {
    if pot.is_singular() && grid.iter().any(|v| !(*v > pot.eval_floor)) {
        return f64::INFINITY;
    }
    grid.iter().map(|&r| pot.value_unchecked(r)).sum::<f64>() * basis.weight()
}

fn weight(basis: &SpectralBasis, pot: &PotentialSpec, grid: &[f64]) -> f64 {
    (-energy(basis, pot, grid)).exp()
}

fn limit_family(base: RegularizedBase) -> PotentialFamily {
    match base {
        RegularizedBase::P2 => PotentialFamily::SingularP2,
        RegularizedBase::P3 => PotentialFamily::SingularP3,
    }
}

/// Scans `ns` (sorted ascending) over a fixed coefficient sample set.
pub fn measure_convergence_scan(
    basis: &SpectralBasis,
    samples: &[Vec<f64>],
    ns: &[u32],
    base: RegularizedBase,
    psi: &[ScanObservable],
) -> ScanTable {
    let mut ns = ns.to_vec();
    ns.sort_unstable();
    ns.dedup();
    let mut psi = psi.to_vec();
    if !psi.contains(&ScanObservable::One) {
        psi.insert(0, ScanObservable::One);
    }
    let pots: Vec<PotentialSpec> = ns
        .iter()
        .map(|&n| PotentialSpec::new(PotentialFamily::Regularized { n, base }, 0.0))
        .collect();
    let limit_pot = PotentialSpec::new(limit_family(base), 0.0);

    let grids: Vec<Vec<f64>> = samples
        .iter()
        .map(|c| basis.to_grid(c).expect("sample length matches basis"))
        .collect();
    let psi_values: Vec<Vec<f64>> = samples
        .iter()
        .map(|x| psi.iter().map(|p| p.evaluate(x)).collect())
        .collect();
    let nonnegative: Vec<bool> = (0..psi.len())
        .map(|i| psi_values.iter().all(|v| v[i] >= 0.0))
        .collect();

    let mut weights = vec![vec![0.0; samples.len()]; ns.len()];
    for (i, pot) in pots.iter().enumerate() {
        for (j, g) in grids.iter().enumerate() {
            weights[i][j] = weight(basis, pot, g);
        }
    }
    let limit_weights: Vec<f64> = grids.iter().map(|g| weight(basis, &limit_pot, g)).collect();

    let mut monotonicity_violations = 0;
    for j in 0..samples.len() {
        let ok = (1..ns.len()).all(|i| weights[i][j] <= weights[i - 1][j])
            && ns.last().is_none_or(|_| limit_weights[j] <= weights[ns.len() - 1][j]);
        if !ok {
            monotonicity_violations += 1;
        }
    }

    let row = |n: Option<u32>, w: &[f64]| -> ScanRow {
        let count = samples.len().max(1) as f64;
        let z: f64 = w.iter().sum::<f64>();
        let estimates: Vec<f64> = (0..psi.len())
            .map(|i| w.iter().zip(&psi_values).map(|(wj, v)| wj * v[i]).sum::<f64>() / count)
            .collect();
        let normalized = estimates.iter().map(|e| if z > 0.0 { e * count / z } else { f64::NAN }).collect();
        ScanRow {
            n,
            estimates,
            normalized,
            support_fraction: w.iter().filter(|x| **x > 0.0).count() as f64 / count,
        }
    };
    let rows: Vec<ScanRow> = ns.iter().zip(&weights).map(|(&n, w)| row(Some(n), w)).collect();
    let limit = row(None, &limit_weights);

    let mut estimate_violations = Vec::new();
    for (i, p) in psi.iter().enumerate() {
        if !nonnegative[i] {
            continue;
        }
        let seq: Vec<f64> = rows.iter().chain(std::iter::once(&limit)).map(|r| r.estimates[i]).collect();
        if seq.windows(2).any(|w| w[1] > w[0]) {
            estimate_violations.push(p.label());
        }
    }

    let constant = |v: f64| -> Vec<f64> {
        let mut c = vec![0.0; basis.n_modes()];
        c[0] = v;
        basis.to_grid(&c).expect("basis length")
    };
    let one = constant(1.0);
    let minus_one = constant(-1.0);
    ScanTable {
        observables: psi.iter().map(ScanObservable::label).collect(),
        limit_gap: rows.iter().map(|r| r.estimates[0] - limit.estimates[0]).collect(),
        rows,
        limit,
        monotonicity_violations,
        estimate_violations,
        probe_one: pots.iter().map(|p| weight(basis, p, &one)).collect(),
        probe_minus_one: pots.iter().map(|p| weight(basis, p, &minus_one)).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::gaussian::gaussian_reference;
    use crate::noise::NoiseSpec;

    fn setup(n: usize) -> (SpectralBasis, Vec<Vec<f64>>) {
        let b = SpectralBasis::new(16).unwrap();
        let g = gaussian_reference(0.5, &NoiseSpec::additive_cylindrical(1.0, 0), &b).unwrap();
        let s = gamma_sample_set(&g, 1.0, n, 42);
        (b, s)
    }

    #[test]
    fn probes() {
        let (b, s) = setup(10);
        let t = measure_convergence_scan(&b, &s, &[1, 2, 5, 10, 50, 200], RegularizedBase::P2, &[]);
        assert!(t.probe_one.iter().all(|w| *w == (-2.0f64).exp()));
        assert!(t.probe_minus_one.windows(2).all(|w| w[1] <= w[0]));
        assert!(*t.probe_minus_one.last().unwrap() < 1e-100);
    }

    #[test]
    fn weights_and_estimates_monotone() {
        let (b, s) = setup(2000);
        let psi = [
            ScanObservable::Observable(Observable::ModeVariance { mode: 1 }),
            ScanObservable::Observable(Observable::AtanNorm { scale: 1.0 }),
            ScanObservable::Observable(Observable::ModeMean { mode: 1 }),
        ];
        let t = measure_convergence_scan(&b, &s, &[200, 1, 5, 2, 50, 10], RegularizedBase::P2, &psi);
        assert_eq!(t.rows.iter().map(|r| r.n.unwrap()).collect::<Vec<_>>(), vec![1, 2, 5, 10, 50, 200]);
        assert!(t.weights_monotone());
        assert!(t.estimates_monotone(), "{:?}", t.estimate_violations);
        assert!(t.limit_gap.windows(2).all(|w| w[1] <= w[0]));
        assert!(t.limit_gap.iter().all(|g| *g >= 0.0));
        assert!(t.limit.support_fraction > 0.0 && t.limit.support_fraction < 1.0);
        assert_eq!(t.observables[0], "one");
    }

    #[test]
    fn regularized_weights_bound_limit_weights() {
        let (b, s) = setup(500);
        let t = measure_convergence_scan(&b, &s, &[3], RegularizedBase::P3, &[]);
        assert!(t.weights_monotone());
        assert!(t.rows[0].estimates[0] >= t.limit.estimates[0]);
    }
}
