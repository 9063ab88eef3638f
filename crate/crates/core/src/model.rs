//! Potentials, mobilities, chemical potential, free energy and drift.
//!
//! The singular potentials are
//!
//! * `p = 2`: `V(r) = r + 1/r`, so `V'(r) = 1 - 1/r^2`;
//! * `p = 3`: `V(r) = 1/(2 r^2)`, so `V'(r) = -1/r^3`;
//!
//! each shifted by `C r` when an additive constant `C` is configured for the
//! chemical potential.
//!
//! The regularized family `V^n` keeps the singular potential on `[1/n, inf)`
//! and replaces it below the threshold `a = 1/n` by its second-order Taylor
//! polynomial at `a`.  This extension is `C^2`, convex on all of the real
//! line (its curvature is `V''(a) > 0`), and lies below `V` on `(0, a)`
//! because `V''' < 0` there.  Differentiating the Taylor polynomial with
//! respect to its centre gives `V'''(a) (r - a)^2 / 2 <= 0`, so `V^n(r)` is
//! nondecreasing in `n` for every real `r`; for `r < 0` the quadratic term
//! grows like `n^3`, sending `V^n(r)` to `+inf`.

use crate::error::{Error, Result};
use crate::spectral::{derivative_coeffs, divergence_coeffs, DensityField, SpectralBasis};
use serde::{Deserialize, Serialize};

/// Smallest argument at which a singular potential is evaluated.
pub const DEFAULT_EVAL_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegularizedBase {
    #[default]
    P2,
    P3,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum PotentialFamily {
    SingularP2,
    SingularP3,
    Regularized {
        n: u32,
        #[serde(default)]
        base: RegularizedBase,
    },
    /// `V(r) = q (r-1)^2 / 2 + c (r-1)^4 / 4`; only used as a checker baseline.
    PolynomialTest { quadratic: f64, quartic: f64 },
}

impl PotentialFamily {
    pub fn name(&self) -> &'static str {
        match self {
            PotentialFamily::SingularP2 => "singular_p2",
            PotentialFamily::SingularP3 => "singular_p3",
            PotentialFamily::Regularized { .. } => "regularized",
            PotentialFamily::PolynomialTest { .. } => "polynomial_test",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    pub family: PotentialFamily,
    /// Gradient-energy coefficient `alpha >= 0`.
    pub alpha: f64,
    /// Additive constant `C` of the chemical potential.
    pub constant: f64,
    pub eval_floor: f64,
}

fn base_value(base: RegularizedBase, r: f64) -> f64 {
    match base {
        RegularizedBase::P2 => r + 1.0 / r,
        RegularizedBase::P3 => 0.5 / (r * r),
    }
}

fn base_d1(base: RegularizedBase, r: f64) -> f64 {
    match base {
        RegularizedBase::P2 => 1.0 - 1.0 / (r * r),
        RegularizedBase::P3 => -1.0 / (r * r * r),
    }
}

fn base_d2(base: RegularizedBase, r: f64) -> f64 {
    match base {
        RegularizedBase::P2 => 2.0 / (r * r * r),
        RegularizedBase::P3 => 3.0 / (r * r * r * r),
    }
}

impl PotentialSpec {
    pub fn new(family: PotentialFamily, alpha: f64) -> Self {
        Self {
            family,
            alpha,
            constant: 0.0,
            eval_floor: DEFAULT_EVAL_FLOOR,
        }
    }

    pub fn with_constant(mut self, constant: f64) -> Self {
        self.constant = constant;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(Error::Config(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if !(self.eval_floor > 0.0) {
            return Err(Error::Config("eval_floor must be > 0".into()));
        }
        match self.family {
            PotentialFamily::Regularized { n: 0, .. } => {
                Err(Error::Config("regularization level n must be positive".into()))
            }
            PotentialFamily::PolynomialTest { quadratic, quartic }
                if quadratic < 0.0 || quartic < 0.0 =>
            {
                Err(Error::Config("polynomial_test coefficients must be >= 0".into()))
            }
            _ => Ok(()),
        }
    }

    /// True for families that cannot be evaluated at `r <= 0`.
    pub fn is_singular(&self) -> bool {
        matches!(
            self.family,
            PotentialFamily::SingularP2 | PotentialFamily::SingularP3
        )
    }

    fn singular_base(&self) -> Option<RegularizedBase> {
        match self.family {
            PotentialFamily::SingularP2 => Some(RegularizedBase::P2),
            PotentialFamily::SingularP3 => Some(RegularizedBase::P3),
            _ => None,
        }
    }

    fn guard(&self, r: f64) -> Result<()> {
        if self.is_singular() && !(r > self.eval_floor) {
            return Err(Error::Domain {
                family: self.family.name(),
                value: r,
            });
        }
        Ok(())
    }

    /// `V(r)`, including the `C r` term.
    pub fn value(&self, r: f64) -> Result<f64> {
        self.guard(r)?;
        Ok(self.value_unchecked(r))
    }

    /// `V'(r)`, including the additive constant `C`.
    pub fn derivative(&self, r: f64) -> Result<f64> {
        self.guard(r)?;
        Ok(self.derivative_unchecked(r))
    }

    pub fn second_derivative(&self, r: f64) -> Result<f64> {
        self.guard(r)?;
        Ok(self.second_derivative_unchecked(r))
    }

    pub(crate) fn value_unchecked(&self, r: f64) -> f64 {
        let v = match self.family {
            PotentialFamily::PolynomialTest { quadratic, quartic } => {
                let x = r - 1.0;
                0.5 * quadratic * x * x + 0.25 * quartic * x * x * x * x
            }
            PotentialFamily::Regularized { n, base } => {
                let a = 1.0 / n as f64;
                if r >= a {
                    base_value(base, r)
                } else {
                    let x = r - a;
                    base_value(base, a) + base_d1(base, a) * x + 0.5 * base_d2(base, a) * x * x
                }
            }
            _ => base_value(self.singular_base().unwrap(), r),
        };
        v + self.constant * r
    }

    pub(crate) fn derivative_unchecked(&self, r: f64) -> f64 {
        let d = match self.family {
            PotentialFamily::PolynomialTest { quadratic, quartic } => {
                let x = r - 1.0;
                quadratic * x + quartic * x * x * x
            }
            PotentialFamily::Regularized { n, base } => {
                let a = 1.0 / n as f64;
                if r >= a {
                    base_d1(base, r)
                } else {
                    base_d1(base, a) + base_d2(base, a) * (r - a)
                }
            }
            _ => base_d1(self.singular_base().unwrap(), r),
        };
        d + self.constant
    }

    pub(crate) fn second_derivative_unchecked(&self, r: f64) -> f64 {
        match self.family {
            PotentialFamily::PolynomialTest { quadratic, quartic } => {
                let x = r - 1.0;
                quadratic + 3.0 * quartic * x * x
            }
            PotentialFamily::Regularized { n, base } => {
                let a = 1.0 / n as f64;
                base_d2(base, r.max(a))
            }
            _ => base_d2(self.singular_base().unwrap(), r),
        }
    }

    /// Checks every grid value against the singular-evaluation floor.
    pub(crate) fn check_grid(&self, basis: &SpectralBasis, values: &[f64]) -> Result<()> {
        if !self.is_singular() {
            return Ok(());
        }
        match values.iter().position(|&v| !(v > self.eval_floor)) {
            Some(index) => Err(Error::PositivityViolation {
                index,
                position: basis.grid()[index],
                value: values[index],
            }),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Mobility {
    /// `M(rho) = 1 / max(rho, floor)`.
    Inverse { floor: f64 },
    Constant { value: f64 },
}

impl Default for Mobility {
    fn default() -> Self {
        Mobility::Constant { value: 1.0 }
    }
}

impl Mobility {
    pub fn evaluate(&self, rho: f64) -> f64 {
        match *self {
            Mobility::Inverse { floor } => 1.0 / rho.max(floor),
            Mobility::Constant { value } => value,
        }
    }

    pub fn constant_value(&self) -> Option<f64> {
        match *self {
            Mobility::Constant { value } => Some(value),
            Mobility::Inverse { .. } => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Mobility::Inverse { floor } if !(floor > 0.0) => {
                Err(Error::Config("inverse mobility floor must be > 0".into()))
            }
            Mobility::Constant { value } if !(value > 0.0) => {
                Err(Error::Config("constant mobility must be > 0".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Scratch buffers for the allocation-free transport evaluation.
#[derive(Debug, Clone)]
pub(crate) struct Scratch {
    coeffs: Vec<f64>,
    sine: Vec<f64>,
    grid: Vec<f64>,
}

impl Scratch {
    pub(crate) fn new(basis: &SpectralBasis) -> Self {
        Self {
            coeffs: vec![0.0; basis.n_modes()],
            sine: vec![0.0; basis.n_modes()],
            grid: vec![0.0; basis.n_grid()],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub potential: PotentialSpec,
    pub mobility: Mobility,
}

impl Model {
    pub fn new(potential: PotentialSpec, mobility: Mobility) -> Self {
        Self {
            potential,
            mobility,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.potential.alpha
    }

    pub fn validate(&self) -> Result<()> {
        self.potential.validate()?;
        self.mobility.validate()
    }

    /// Grid values of `V'(rho) + C`, without the gradient term.
    pub fn local_chemical_potential(
        &self,
        basis: &SpectralBasis,
        rho: &DensityField,
    ) -> Result<Vec<f64>> {
        self.potential.check_grid(basis, rho.grid_values())?;
        Ok(rho
            .grid_values()
            .iter()
            .map(|&r| self.potential.derivative_unchecked(r))
            .collect())
    }

    /// `mu = V'(rho) + C - 2 alpha Delta rho` as a spectral field.
    pub fn chemical_potential(&self, basis: &SpectralBasis, rho: &DensityField) -> Result<DensityField> {
        let local = self.local_chemical_potential(basis, rho)?;
        let mut coeffs = basis.to_spectral(&local)?;
        let two_alpha = 2.0 * self.alpha();
        for ((c, r), l) in coeffs.iter_mut().zip(rho.coeffs()).zip(basis.eigenvalues()) {
            *c += two_alpha * l * r;
        }
        DensityField::from_coeffs(basis, coeffs)
    }

    /// Cosine coefficients of `1/2 d_s(M(rho) d_s mu)` for grid values of a
    /// local chemical potential.  Mode 0 of the output is exactly zero.
    pub(crate) fn transport_into(
        &self,
        basis: &SpectralBasis,
        rho_grid: &[f64],
        mu_grid: &[f64],
        out: &mut [f64],
        scratch: &mut Scratch,
    ) {
        basis.to_spectral_into(mu_grid, &mut scratch.coeffs);
        match self.mobility {
            Mobility::Constant { value } => {
                let half_m = 0.5 * value;
                for ((o, c), l) in out.iter_mut().zip(&scratch.coeffs).zip(basis.eigenvalues()) {
                    *o = -half_m * l * c;
                }
            }
            Mobility::Inverse { .. } => {
                for (k, (s, c)) in scratch.sine.iter_mut().zip(&scratch.coeffs).enumerate() {
                    *s = -basis.wavenumber(k) * c;
                }
                basis.sine_to_grid_into(&scratch.sine, &mut scratch.grid);
                for (f, &r) in scratch.grid.iter_mut().zip(rho_grid) {
                    *f *= self.mobility.evaluate(r);
                }
                basis.sine_to_spectral_into(&scratch.grid, &mut scratch.sine);
                for (k, (o, s)) in out.iter_mut().zip(&scratch.sine).enumerate() {
                    *o = 0.5 * basis.wavenumber(k) * s;
                }
            }
        }
        out[0] = 0.0;
    }

    /// `1/2 d_s(M(rho) d_s V'(rho)) - alpha Delta^2 rho` as cosine coefficients.
    /// The gradient-energy term enters through the bilaplacian of `rho`.
    pub fn drift(&self, basis: &SpectralBasis, rho: &DensityField) -> Result<Vec<f64>> {
        let mu = self.local_chemical_potential(basis, rho)?;
        let mut out = vec![0.0; basis.n_modes()];
        let mut scratch = Scratch::new(basis);
        self.transport_into(basis, rho.grid_values(), &mu, &mut out, &mut scratch);
        let alpha = self.alpha();
        for ((o, c), l) in out.iter_mut().zip(rho.coeffs()).zip(basis.eigenvalues()) {
            *o -= alpha * l * l * c;
        }
        out[0] = 0.0;
        Ok(out)
    }

    /// Transport term computed through the explicit derivative/divergence
    /// route for an arbitrary local chemical potential (used by the
    /// equivalence checks).
    pub fn transport_of(&self, basis: &SpectralBasis, rho: &DensityField, mu_grid: &[f64]) -> Result<Vec<f64>> {
        let mu = basis.to_spectral(mu_grid)?;
        let flux = crate::spectral::SineField::from_coeffs(derivative_coeffs(&mu));
        let mobility: Vec<f64> = rho
            .grid_values()
            .iter()
            .map(|&r| self.mobility.evaluate(r))
            .collect();
        let flux = flux.multiply_pointwise(basis, &mobility)?;
        let mut out = divergence_coeffs(flux.coeffs());
        out.iter_mut().for_each(|v| *v *= 0.5);
        Ok(out)
    }

    /// `int_0^1 V(rho) ds` by the collocation rule.
    pub fn potential_energy(&self, basis: &SpectralBasis, grid_values: &[f64]) -> Result<f64> {
        self.potential.check_grid(basis, grid_values)?;
        Ok(grid_values
            .iter()
            .map(|&r| self.potential.value_unchecked(r))
            .sum::<f64>()
            * basis.weight())
    }

    /// `int_0^1 V(rho) + alpha |d_s rho|^2 ds`.
    pub fn free_energy(&self, basis: &SpectralBasis, rho: &DensityField) -> Result<f64> {
        let bulk = self.potential_energy(basis, rho.grid_values())?;
        let gradient: f64 = rho
            .coeffs()
            .iter()
            .zip(basis.eigenvalues())
            .map(|(c, l)| l * c * c)
            .sum();
        Ok(bulk + self.alpha() * gradient)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn p2(alpha: f64) -> PotentialSpec {
        PotentialSpec::new(PotentialFamily::SingularP2, alpha)
    }

    fn reg(n: u32, base: RegularizedBase) -> PotentialSpec {
        PotentialSpec::new(PotentialFamily::Regularized { n, base }, 0.0)
    }

    #[test]
    fn singular_p2_values() {
        let v = p2(0.0);
        assert_eq!(v.value(1.0).unwrap(), 2.0);
        assert_eq!(v.derivative(1.0).unwrap(), 0.0);
        assert_eq!(v.value(2.0).unwrap(), 2.5);
        assert_eq!(v.derivative(2.0).unwrap(), 0.75);
        assert!(matches!(v.value(0.0), Err(Error::Domain { .. })));
        assert!(matches!(v.derivative(-1.0), Err(Error::Domain { .. })));
    }

    #[test]
    fn singular_p3_values() {
        let v = PotentialSpec::new(PotentialFamily::SingularP3, 0.0).with_constant(1.0);
        assert_eq!(v.value(1.0).unwrap(), 1.5);
        assert_eq!(v.derivative(1.0).unwrap(), 0.0);
        assert_eq!(v.derivative(0.5).unwrap(), 1.0 - 8.0);
    }

    #[test]
    fn regularized_extension_coefficients() {
        // Threshold values for p = 2 at a = 0.1: V = 10.1, V' = -99, V'' = 2000.
        let v = reg(10, RegularizedBase::P2);
        assert!((v.value(0.1).unwrap() - 10.1).abs() < 1e-12);
        assert!((v.derivative(0.1).unwrap() + 99.0).abs() < 1e-10);
        assert!((v.second_derivative(0.1).unwrap() - 2000.0).abs() < 1e-9);
        let x: f64 = 0.05 - 0.1;
        let expect = 10.1 - 99.0 * x + 1000.0 * x * x;
        assert!((v.value(0.05).unwrap() - expect).abs() < 1e-10);
        assert!(v.value(0.05).unwrap() <= 20.05);
        // continuity of V, V', V'' across the threshold
        let a = 0.1;
        for h in [1e-5, 1e-7] {
            let jump = (v.value(a - h).unwrap() - v.value(a + h).unwrap()).abs();
            assert!(jump <= 2.0 * h * 99.0 * 1.01);
            let jump1 = (v.derivative(a - h).unwrap() - v.derivative(a + h).unwrap()).abs();
            assert!(jump1 <= 2.0 * h * 2000.0 * 1.01);
            let jump2 = (v.second_derivative(a - h).unwrap() - v.second_derivative(a + h).unwrap()).abs();
            assert!(jump2 <= 2.0 * h * 6e4 * 1.01);
        }
        assert!(v.value(-5.0).is_ok());
    }

    #[test]
    fn convexity_sampled() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let families = [
            PotentialFamily::SingularP2,
            PotentialFamily::SingularP3,
            PotentialFamily::Regularized { n: 7, base: RegularizedBase::P2 },
            PotentialFamily::Regularized { n: 7, base: RegularizedBase::P3 },
            PotentialFamily::PolynomialTest { quadratic: 1.0, quartic: 0.5 },
        ];
        for fam in families {
            let v = PotentialSpec::new(fam, 0.0);
            for _ in 0..10_000 {
                let r = if v.is_singular() {
                    rng.random_range(1e-3..10.0)
                } else {
                    rng.random_range(-10.0..10.0)
                };
                let d2 = v.second_derivative(r).unwrap();
                if v.is_singular() {
                    assert!(d2 > 0.0);
                } else {
                    assert!(d2 >= 0.0);
                }
            }
        }
    }

    #[test]
    fn regularization_is_monotone_and_below_limit() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for base in [RegularizedBase::P2, RegularizedBase::P3] {
            let limit = PotentialSpec::new(
                match base {
                    RegularizedBase::P2 => PotentialFamily::SingularP2,
                    RegularizedBase::P3 => PotentialFamily::SingularP3,
                },
                0.0,
            );
            for _ in 0..10_000 {
                let r = rng.random_range(1e-3..3.0);
                let n = rng.random_range(1..200u32);
                let lo = reg(n, base).value(r).unwrap();
                let hi = reg(n + 1, base).value(r).unwrap();
                assert!(lo <= hi, "n={n} r={r}");
                assert!(hi <= limit.value(r).unwrap());
            }
            let mut prev = f64::NEG_INFINITY;
            for n in 1..60 {
                let v = reg(n, base).value(-1.0).unwrap();
                assert!(v > prev);
                prev = v;
            }
            assert!(prev > 1e5);
        }
    }

    #[test]
    fn chemical_potential_constant_states() {
        let b = SpectralBasis::new(8).unwrap();
        let m = Model::new(p2(0.3), Mobility::default());
        let mu = m.chemical_potential(&b, &DensityField::constant(&b, 1.0)).unwrap();
        assert!(mu.coeffs().iter().all(|c| c.abs() < 1e-15));
        let m0 = Model::new(p2(0.0), Mobility::default());
        let mu = m0.chemical_potential(&b, &DensityField::constant(&b, 2.0)).unwrap();
        assert!(mu.grid_values().iter().all(|v| (v - 0.75).abs() < 1e-14));
    }

    #[test]
    fn chemical_potential_reports_location() {
        let b = SpectralBasis::new(4).unwrap();
        let rho = DensityField::from_fn(&b, |s| (PI * s).cos());
        let err = Model::new(p2(0.0), Mobility::default())
            .chemical_potential(&b, &rho)
            .unwrap_err();
        assert!(matches!(err, Error::PositivityViolation { index, .. } if rho.grid_values()[index] <= 0.0));
    }

    #[test]
    fn chemical_potential_against_finite_differences() {
        // Oracle: mu(s) = 1 - 1/rho^2 - 2 alpha rho''(s) with rho'' from
        // centred differences of the closed form on a G = 4096 grid.
        let alpha = 0.1;
        let b = SpectralBasis::new(64).unwrap();
        let rho_fn = |s: f64| 1.0 + 0.5 * (PI * s).cos();
        let rho = DensityField::from_fn(&b, rho_fn);
        let mu = Model::new(p2(alpha), Mobility::default())
            .chemical_potential(&b, &rho)
            .unwrap();
        let h = 1.0 / 4096.0;
        let mut err: f64 = 0.0;
        for i in 1..4096 {
            let s = i as f64 * h;
            let rpp = (rho_fn(s + h) - 2.0 * rho_fn(s) + rho_fn(s - h)) / (h * h);
            let r = rho_fn(s);
            let oracle = 1.0 - 1.0 / (r * r) - 2.0 * alpha * rpp;
            err = err.max((b.evaluate(mu.coeffs(), s) - oracle).abs());
        }
        // O(h^2): pi^4/24 * h^2 * alpha * ... is ~1e-8 here
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn drift_vanishes_on_constants_and_has_no_mass() {
        let b = SpectralBasis::new(16).unwrap();
        for mobility in [Mobility::default(), Mobility::Inverse { floor: 1e-6 }] {
            let m = Model::new(p2(0.2), mobility);
            let d = m.drift(&b, &DensityField::constant(&b, 1.7)).unwrap();
            assert!(d.iter().all(|v| v.abs() < 1e-12));
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            for _ in 0..50 {
                let mut c = vec![0.0; 16];
                c[0] = 2.0;
                for v in c.iter_mut().skip(1).take(6) {
                    *v = rng.random_range(-0.1..0.1);
                }
                let rho = DensityField::from_coeffs(&b, c).unwrap();
                assert_eq!(m.drift(&b, &rho).unwrap()[0], 0.0);
            }
        }
    }

    #[test]
    fn spectral_drift_forms_agree() {
        // Inverse mobility with mu = -1/rho^2 against constant mobility 2/3
        // with mu = -1/rho^3.  Both are pseudo-spectral; the residual is the
        // aliasing/truncation error of the smooth field 2 + cos(pi s).
        let b = SpectralBasis::new(64).unwrap();
        let rho = DensityField::from_fn(&b, |s| 2.0 + (PI * s).cos());
        let inv = Model::new(p2(0.0), Mobility::Inverse { floor: 1e-12 });
        let cst = Model::new(
            PotentialSpec::new(PotentialFamily::SingularP3, 0.0),
            Mobility::Constant { value: 2.0 / 3.0 },
        );
        let a = inv.drift(&b, &rho).unwrap();
        let c = cst.drift(&b, &rho).unwrap();
        let via_route = inv
            .transport_of(&b, &rho, &inv.local_chemical_potential(&b, &rho).unwrap())
            .unwrap();
        for k in 0..64 {
            assert!((a[k] - c[k]).abs() < 1e-8, "mode {k}: {} vs {}", a[k], c[k]);
            assert!((a[k] - via_route[k]).abs() < 1e-10);
        }
    }

    #[test]
    fn free_energy_values() {
        let b = SpectralBasis::new(16).unwrap();
        let m = Model::new(p2(0.7), Mobility::default());
        assert!((m.free_energy(&b, &DensityField::constant(&b, 1.0)).unwrap() - 2.0).abs() < 1e-14);
        assert!((m.free_energy(&b, &DensityField::constant(&b, 2.0)).unwrap() - 2.5).abs() < 1e-14);
    }

    #[test]
    fn free_energy_against_adaptive_quadrature() {
        // Oracle: adaptive Simpson on the closed-form integrand
        // 1 + 0.5 cos + 1/(1 + 0.5 cos) + alpha (0.5 pi sin)^2.
        fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, whole: f64, depth: u32) -> f64 {
            let m = 0.5 * (a + b);
            let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
            let left = (m - a) / 6.0 * (f(a) + 4.0 * f(lm) + f(m));
            let right = (b - m) / 6.0 * (f(m) + 4.0 * f(rm) + f(b));
            if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
                left + right + (left + right - whole) / 15.0
            } else {
                simpson(f, a, m, tol / 2.0, left, depth - 1) + simpson(f, m, b, tol / 2.0, right, depth - 1)
            }
        }
        let alpha = 0.1;
        let f = |s: f64| {
            let r = 1.0 + 0.5 * (PI * s).cos();
            let dr = -0.5 * PI * (PI * s).sin();
            r + 1.0 / r + alpha * dr * dr
        };
        let whole = (f(0.0) + 4.0 * f(0.5) + f(1.0)) / 6.0;
        let oracle = simpson(&f, 0.0, 1.0, 1e-13, whole, 50);
        let b = SpectralBasis::new(64).unwrap();
        let rho = DensityField::from_fn(&b, |s| 1.0 + 0.5 * (PI * s).cos());
        let got = Model::new(p2(alpha), Mobility::default()).free_energy(&b, &rho).unwrap();
        assert!(((got - oracle) / oracle).abs() < 1e-8, "{got} vs {oracle}");
    }

    #[test]
    fn chemical_potential_is_energy_gradient() {
        let b = SpectralBasis::new(12).unwrap();
        let m = Model::new(
            PotentialSpec::new(PotentialFamily::Regularized { n: 10, base: RegularizedBase::P2 }, 0.05),
            Mobility::default(),
        );
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut c = vec![0.0; 12];
        c[0] = 1.0;
        for v in c.iter_mut().skip(1) {
            *v = rng.random_range(-0.2..0.2);
        }
        let mut dir = vec![0.0; 12];
        for v in dir.iter_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
        let rho = DensityField::from_coeffs(&b, c.clone()).unwrap();
        let mu = m.chemical_potential(&b, &rho).unwrap();
        let directional: f64 = mu.coeffs().iter().zip(&dir).map(|(a, b)| a * b).sum();
        let energy_at = |h: f64| {
            let shifted: Vec<f64> = c.iter().zip(&dir).map(|(a, d)| a + h * d).collect();
            m.free_energy(&b, &DensityField::from_coeffs(&b, shifted).unwrap()).unwrap()
        };
        let mut prev_err = f64::INFINITY;
        for h in [1e-2, 1e-3, 1e-4] {
            let err = ((energy_at(h) - energy_at(-h)) / (2.0 * h) - directional).abs();
            assert!(err < prev_err, "{err} at h = {h}");
            prev_err = err;
        }
        assert!(prev_err < 1e-6 * directional.abs().max(1.0), "{prev_err}");
    }

    #[test]
    fn simplified_nonlinearity_is_dissipative() {
        let b = SpectralBasis::new(8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for p in [2, 3] {
            for _ in 0..10_000 {
                let u: Vec<f64> = (0..b.n_grid()).map(|_| rng.random_range(0.05..3.0)).collect();
                let v: Vec<f64> = (0..b.n_grid()).map(|_| rng.random_range(0.05..3.0)).collect();
                let pairing: f64 = u
                    .iter()
                    .zip(&v)
                    .map(|(a, c)| (a.powi(-p) - c.powi(-p)) * (a - c))
                    .sum::<f64>()
                    * b.weight();
                assert!(pairing <= 0.0);
            }
        }
    }
}
