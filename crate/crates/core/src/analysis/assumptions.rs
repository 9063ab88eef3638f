//! Sampled checks of the variational hypotheses on the truncated operators.
//!
//! The equation is written `d u = D(u) dt + B(u) dW` with `D` the full drift
//! (so `D = -A` for the operator `A` in the monotone-operator framework).
//! For random states `u, v, w` the checker evaluates
//!
//! * hemicontinuity: `lambda -> <D(u + lambda v), w>` along `lambda_0 + 2^-j`;
//! * weak monotonicity: `Q = 2 <D(u) - D(v), u - v> + |B(u) - B(v)|_HS^2`
//!   against `c |u - v|^2`, with the fitted `c = sup Q / |u - v|^2`;
//! * coercivity: `2 <D(u), u> + |B(u)|_HS^2 <= c1 |u|^2 - c2 |u|_V^2 + f`;
//! * boundedness: `|D(u)|_{V*}^2 <= c3 |u|_V^2 + f`.
//!
//! Inner products and `|.|` use the fixture geometry (`L2` on all modes, or
//! `H^-1` within a mass sector); `V = H^1` has coefficient weights
//! `1 + lambda_k`.  The time-dependent processes in the coercivity and
//! boundedness hypotheses are fitted as constants.

use crate::analysis::stats;
use crate::error::Result;
use crate::model::{Mobility, Model, PotentialFamily, PotentialSpec, RegularizedBase};
use crate::noise::{Amplitude, NoiseGenerator, NoiseKind, NoiseSpec};
use crate::spectral::{DensityField, SpectralBasis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Geometry {
    L2,
    /// Mean-zero differences only; states share the fixture mass.
    HMinus1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorFixture {
    pub model: Model,
    pub noise: NoiseSpec,
    pub geometry: Geometry,
    pub n_modes: usize,
    pub mass: f64,
    /// Radius of the `V`-ball for the fluctuation part of random states.
    pub radius: f64,
    /// Random states are shrunk towards the mass until their grid minimum
    /// exceeds this value (needed by singular amplitudes).
    pub min_density: Option<f64>,
}

impl OperatorFixture {
    /// `D = alpha Delta^2`-dissipation only (`V' = 0`), additive noise.
    pub fn linear(alpha: f64, sigma: f64, n_modes: usize) -> Self {
        Self {
            model: Model::new(
                PotentialSpec::new(PotentialFamily::PolynomialTest { quadratic: 0.0, quartic: 0.0 }, alpha),
                Mobility::default(),
            ),
            noise: NoiseSpec::additive_cylindrical(sigma, 0),
            geometry: Geometry::L2,
            n_modes,
            mass: 1.0,
            radius: 1.0,
            min_density: None,
        }
    }

    /// Convex regularized potential, constant mobility, additive noise.
    pub fn convex_regularized(n: u32, alpha: f64, sigma: f64, n_modes: usize) -> Self {
        Self {
            model: Model::new(
                PotentialSpec::new(PotentialFamily::Regularized { n, base: RegularizedBase::P2 }, alpha),
                Mobility::default(),
            ),
            noise: NoiseSpec::additive_cylindrical(sigma, 0),
            geometry: Geometry::HMinus1,
            n_modes,
            mass: 1.0,
            radius: 2.0,
            min_density: None,
        }
    }

    /// Linear drift with the un-floored amplitude `sigma / sqrt(rho)`.
    pub fn unfloored_multiplicative(alpha: f64, sigma: f64, n_modes: usize) -> Self {
        Self {
            noise: NoiseSpec {
                kind: NoiseKind::Cylindrical { modes: None },
                amplitude: Amplitude::Multiplicative { sigma, floor: 0.0 },
                conservative: true,
                seed: 0,
            },
            mass: 0.3,
            radius: 1.0,
            min_density: Some(1e-6),
            ..Self::linear(alpha, sigma, n_modes)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CheckConfig {
    pub n_triples: usize,
    pub hemicontinuity_triples: usize,
    pub refinement_levels: u32,
    /// Constant `c` the monotonicity inequality is tested against.
    pub declared_c: f64,
    pub relative_tolerance: f64,
    pub seed: u64,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self {
            n_triples: 10_000,
            hemicontinuity_triples: 200,
            refinement_levels: 20,
            declared_c: 0.0,
            relative_tolerance: 1e-9,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HemicontinuityReport {
    pub triples: usize,
    /// Largest `defect_J / defect_1` over triples.
    pub worst_ratio: f64,
    /// Largest final defect relative to `1 + |<D(u + lambda_0 v), w>|`.
    pub worst_final_defect: f64,
    pub continuous: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotonicityReport {
    pub pairs: usize,
    /// `sup Q / |u - v|^2` over all sampled and probe pairs.
    pub fitted_c: f64,
    pub declared_c: f64,
    pub violations: usize,
    /// Largest `Q - c |u - v|^2` among violations (0 if none).
    pub worst_excess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoercivityReport {
    pub q: u32,
    /// `inf -2 <D(u), u> / |u|^2` over mean-zero states (fixture geometry).
    pub c2_h: f64,
    /// Same with the `V` norm in the denominator.
    pub c2_v: f64,
    pub c1: f64,
    pub f: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundednessReport {
    pub c3: f64,
    pub f: f64,
    pub rms_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionReport {
    pub geometry: Geometry,
    pub hemicontinuity: HemicontinuityReport,
    pub monotonicity: MonotonicityReport,
    pub coercivity: CoercivityReport,
    pub boundedness: BoundednessReport,
    pub limitations: Vec<String>,
}

struct Operators<'a> {
    basis: &'a SpectralBasis,
    fixture: &'a OperatorFixture,
    noise: NoiseGenerator,
}

impl Operators<'_> {
    fn drift(&self, u: &DensityField) -> Result<Vec<f64>> {
        self.fixture.model.drift(self.basis, u)
    }

    /// Columns `B(u) e_m` over the unit noise directions.
    fn noise_columns(&mut self, u: &DensityField) -> Result<Vec<Vec<f64>>> {
        let mut white = self.noise.zero_white();
        let start = if matches!(self.fixture.noise.kind, NoiseKind::Scalar) { 0 } else { 1 };
        let mut cols = Vec::with_capacity(white.values.len());
        for m in start..white.values.len() {
            white.values.iter_mut().for_each(|v| *v = 0.0);
            white.values[m] = 1.0;
            let mut out = vec![0.0; self.basis.n_modes()];
            self.noise.increment_from_white(self.basis, &white, Some(u), &mut out)?;
            cols.push(out);
        }
        Ok(cols)
    }

    fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        match self.fixture.geometry {
            Geometry::L2 => f.iter().zip(g).map(|(a, b)| a * b).sum(),
            Geometry::HMinus1 => crate::spectral::hminus1_unchecked(self.basis, f, g),
        }
    }

    fn norm_v2(&self, f: &[f64]) -> f64 {
        let start = match self.fixture.geometry {
            Geometry::L2 => 0,
            Geometry::HMinus1 => 1,
        };
        f.iter()
            .zip(self.basis.eigenvalues())
            .skip(start)
            .map(|(c, l)| (1.0 + l) * c * c)
            .sum()
    }

    fn norm_vstar2(&self, f: &[f64]) -> f64 {
        f.iter()
            .zip(self.basis.eigenvalues())
            .map(|(c, l)| c * c / (1.0 + l))
            .sum()
    }

    fn hs_difference(&self, a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| {
                let d: Vec<f64> = x.iter().zip(y).map(|(p, q)| p - q).collect();
                self.inner(&d, &d)
            })
            .sum()
    }
}

fn random_fluctuation(basis: &SpectralBasis, radius: f64, include_mass: bool, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let k = basis.n_modes();
    let scale = radius / (k as f64).sqrt();
    (0..k)
        .map(|m| {
            if m == 0 && !include_mass {
                0.0
            } else {
                scale * rng.random_range(-1.0..1.0) / (1.0 + basis.eigenvalue(m)).sqrt()
            }
        })
        .collect()
}

fn random_state(basis: &SpectralBasis, fixture: &OperatorFixture, rng: &mut ChaCha8Rng) -> DensityField {
    let include_mass = fixture.geometry == Geometry::L2 && fixture.min_density.is_none();
    let mut x = random_fluctuation(basis, fixture.radius, include_mass, rng);
    loop {
        let mut c = x.clone();
        c[0] += fixture.mass;
        let field = DensityField::from_coeffs(basis, c).expect("basis length");
        match fixture.min_density {
            Some(floor) if field.min_value() <= floor => x.iter_mut().for_each(|v| *v *= 0.7),
            _ => return field,
        }
    }
}

fn unit(basis: &SpectralBasis, mass: f64, k: usize, eps: f64) -> DensityField {
    let mut c = vec![0.0; basis.n_modes()];
    c[0] = mass;
    c[k] += eps;
    DensityField::from_coeffs(basis, c).expect("basis length")
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn check_assumptions(fixture: &OperatorFixture, config: &CheckConfig) -> Result<AssumptionReport> {
    fixture.model.validate()?;
    fixture.noise.validate()?;
    let basis = SpectralBasis::new(fixture.n_modes)?;
    let mut ops = Operators {
        basis: &basis,
        fixture,
        noise: NoiseGenerator::new(&fixture.noise, &basis, 0)?,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mass_field = unit(&basis, fixture.mass, 0, 0.0);
    let first_fluct = match fixture.geometry {
        Geometry::L2 => 0,
        Geometry::HMinus1 => 1,
    };

    // Monotonicity over random pairs and unit-mode probe pairs.
    let mut pairs: Vec<(DensityField, DensityField)> = (first_fluct..basis.n_modes())
        .map(|k| (mass_field.clone(), unit(&basis, fixture.mass, k, 0.1)))
        .collect();
    for _ in 0..config.n_triples {
        let u = random_state(&basis, fixture, &mut rng);
        let v = random_state(&basis, fixture, &mut rng);
        pairs.push((u, v));
    }
    let mut fitted_c = f64::NEG_INFINITY;
    let mut violations = 0;
    let mut worst_excess = 0.0f64;
    for (u, v) in &pairs {
        let d = sub(u.coeffs(), v.coeffs());
        let dd = ops.inner(&d, &d);
        if dd == 0.0 {
            continue;
        }
        let dr = sub(&ops.drift(u)?, &ops.drift(v)?);
        let drift_term = 2.0 * ops.inner(&dr, &d);
        let bu = ops.noise_columns(u)?;
        let bv = ops.noise_columns(v)?;
        let hs = ops.hs_difference(&bu, &bv);
        let q = drift_term + hs;
        fitted_c = fitted_c.max(q / dd);
        let bound = config.declared_c * dd;
        let slack = config.relative_tolerance * (drift_term.abs() + hs + bound.abs());
        if q > bound + slack {
            violations += 1;
            worst_excess = worst_excess.max(q - bound);
        }
    }

    // Coercivity: mean-zero fluctuations around the mass state.
    let mut c2_h = f64::INFINITY;
    let mut c2_v = f64::INFINITY;
    let mut coercive_samples = Vec::new();
    let probes = (1..basis.n_modes()).map(|k| unit(&basis, fixture.mass, k, 1.0));
    let randoms: Vec<DensityField> = (0..config.n_triples.min(2000))
        .map(|_| {
            let mut x = random_fluctuation(&basis, fixture.radius, false, &mut rng);
            x[0] = fixture.mass;
            DensityField::from_coeffs(&basis, x).expect("basis length")
        })
        .collect();
    for state in probes.chain(randoms) {
        if fixture.min_density.is_some_and(|f| state.min_value() <= f) {
            continue;
        }
        let x = sub(state.coeffs(), mass_field.coeffs());
        let dx = ops.drift(&state)?;
        let pairing = 2.0 * ops.inner(&dx, &x);
        let h = ops.inner(&x, &x);
        let vnorm = ops.norm_v2(&x);
        c2_h = c2_h.min(-pairing / h);
        c2_v = c2_v.min(-pairing / vnorm);
        let cols = ops.noise_columns(&state)?;
        let hs: f64 = cols.iter().map(|c| ops.inner(c, c)).sum();
        coercive_samples.push((pairing + hs, h, vnorm, ops.norm_vstar2(&dx)));
    }
    let c2_for_fit = c2_v.max(0.0);
    let xs: Vec<f64> = coercive_samples.iter().map(|s| s.1).collect();
    let ys: Vec<f64> = coercive_samples.iter().map(|s| s.0 + c2_for_fit * s.2).collect();
    let fit = stats::linear_fit(&xs, &ys);
    let c1 = fit.slope.max(0.0);
    let f_coercive = xs.iter().zip(&ys).map(|(x, y)| y - c1 * x).fold(f64::NEG_INFINITY, f64::max);

    let bx: Vec<f64> = coercive_samples.iter().map(|s| s.2).collect();
    let by: Vec<f64> = coercive_samples.iter().map(|s| s.3).collect();
    let bfit = stats::linear_fit(&bx, &by);
    let c3 = bfit.slope.max(0.0);
    let f_bounded = bx.iter().zip(&by).map(|(x, y)| y - c3 * x).fold(f64::NEG_INFINITY, f64::max);

    // Hemicontinuity along dyadic refinements.
    let mut worst_ratio = 0.0f64;
    let mut worst_final = 0.0f64;
    let n_hemi = config.hemicontinuity_triples.min(config.n_triples.max(1));
    for _ in 0..n_hemi {
        let u = random_state(&basis, fixture, &mut rng);
        let v = random_fluctuation(&basis, fixture.radius, fixture.geometry == Geometry::L2, &mut rng);
        let w = random_fluctuation(&basis, fixture.radius, fixture.geometry == Geometry::L2, &mut rng);
        let lambda0: f64 = rng.random_range(0.0..1.0);
        let at = |lambda: f64, ops: &Operators| -> Result<Option<f64>> {
            let c: Vec<f64> = u.coeffs().iter().zip(&v).map(|(a, b)| a + lambda * b).collect();
            let field = DensityField::from_coeffs(&basis, c)?;
            if fixture.min_density.is_some_and(|f| field.min_value() <= f) {
                return Ok(None);
            }
            Ok(Some(ops.inner(&ops.drift(&field)?, &w)))
        };
        let Some(g0) = at(lambda0, &ops)? else { continue };
        let mut first = None;
        let mut last = 0.0;
        let mut complete = true;
        for j in 1..=config.refinement_levels {
            match at(lambda0 + 0.5f64.powi(j as i32), &ops)? {
                Some(g) => {
                    let defect = (g - g0).abs();
                    first.get_or_insert(defect);
                    last = defect;
                }
                None => {
                    complete = false;
                    break;
                }
            }
        }
        if !complete {
            continue;
        }
        let first = first.unwrap_or(0.0);
        if first > 0.0 {
            worst_ratio = worst_ratio.max(last / first);
        }
        worst_final = worst_final.max(last / (1.0 + g0.abs()));
    }

    Ok(AssumptionReport {
        geometry: fixture.geometry,
        hemicontinuity: HemicontinuityReport {
            triples: n_hemi,
            worst_ratio,
            worst_final_defect: worst_final,
            continuous: worst_ratio <= 1e-3,
        },
        monotonicity: MonotonicityReport {
            pairs: pairs.len(),
            fitted_c,
            declared_c: config.declared_c,
            violations,
            worst_excess,
        },
        coercivity: CoercivityReport {
            q: 2,
            c2_h,
            c2_v,
            c1,
            f: f_coercive,
        },
        boundedness: BoundednessReport {
            c3,
            f: f_bounded,
            rms_residual: bfit.rms_residual,
        },
        limitations: vec![
            "time-dependent terms of coercivity and boundedness are fitted as constants".into(),
            "constants are sampled suprema and infima over a finite ball, not bounds".into(),
        ],
    })
}
