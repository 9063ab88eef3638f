//! Neumann cosine spectral representation on the reference domain `[0, 1]`.
//!
//! Fields are expanded in the orthonormal basis `e_0 = 1`,
//! `e_k(s) = sqrt(2) cos(k pi s)`, which satisfies a zero Neumann condition at
//! both ends.  Fluxes (first derivatives of cosine fields) live in the sine
//! basis `f_k(s) = sqrt(2) sin(k pi s)`; that representation is internal and
//! only reachable through [`derivative`] / [`divergence`].
//!
//! Collocation uses the `G` cell-centre points `s_j = (j + 1/2) / G` with equal
//! weights `1/G`.  On that grid the first `G` cosine (and sine) modes are
//! discretely orthonormal, so the least-squares projection is a single
//! weighted transpose product and is exact for fields in the span.

use crate::error::{Error, Result};
use std::f64::consts::{PI, SQRT_2};

/// Tolerance on the mean (mode-0) component accepted by [`hminus1_inner`].
pub const MEAN_ZERO_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct SpectralBasis {
    n_modes: usize,
    n_grid: usize,
    eigenvalues: Vec<f64>,
    wavenumbers: Vec<f64>,
    grid: Vec<f64>,
    // Row-major G x K tables: cos_table[j * K + k] = e_k(s_j).
    cos_table: Vec<f64>,
    sin_table: Vec<f64>,
}

impl SpectralBasis {
    /// Basis with `n_modes` cosine modes on the default oversampled grid `G = 2K`.
    pub fn new(n_modes: usize) -> Result<Self> {
        Self::with_grid(n_modes, 2 * n_modes)
    }

    pub fn with_grid(n_modes: usize, n_grid: usize) -> Result<Self> {
        if n_modes == 0 {
            return Err(Error::Config("number of modes must be positive".into()));
        }
        if n_grid < n_modes {
            return Err(Error::Config(format!(
                "grid size {n_grid} is smaller than the number of modes {n_modes}"
            )));
        }
        let wavenumbers: Vec<f64> = (0..n_modes).map(|k| k as f64 * PI).collect();
        let eigenvalues = wavenumbers.iter().map(|w| w * w).collect();
        let grid: Vec<f64> = (0..n_grid)
            .map(|j| (j as f64 + 0.5) / n_grid as f64)
            .collect();
        let mut cos_table = vec![0.0; n_grid * n_modes];
        let mut sin_table = vec![0.0; n_grid * n_modes];
        for (j, &s) in grid.iter().enumerate() {
            cos_table[j * n_modes] = 1.0;
            for k in 1..n_modes {
                let arg = k as f64 * PI * s;
                cos_table[j * n_modes + k] = SQRT_2 * arg.cos();
                sin_table[j * n_modes + k] = SQRT_2 * arg.sin();
            }
        }
        Ok(Self {
            n_modes,
            n_grid,
            eigenvalues,
            wavenumbers,
            grid,
            cos_table,
            sin_table,
        })
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn n_grid(&self) -> usize {
        self.n_grid
    }

    /// `lambda_k = (k pi)^2`.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvalue(&self, k: usize) -> f64 {
        self.eigenvalues[k]
    }

    /// `k pi`, the square root of the eigenvalue.
    pub fn wavenumber(&self, k: usize) -> f64 {
        self.wavenumbers[k]
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    /// Quadrature weight of each collocation point.
    pub fn weight(&self) -> f64 {
        1.0 / self.n_grid as f64
    }

    fn check_coeffs(&self, len: usize) -> Result<()> {
        if len != self.n_modes {
            return Err(Error::DimensionMismatch {
                expected: self.n_modes,
                got: len,
            });
        }
        Ok(())
    }

    fn check_grid(&self, len: usize) -> Result<()> {
        if len != self.n_grid {
            return Err(Error::DimensionMismatch {
                expected: self.n_grid,
                got: len,
            });
        }
        Ok(())
    }

    /// Least-squares cosine coefficients of grid values.
    pub fn to_spectral(&self, values: &[f64]) -> Result<Vec<f64>> {
        self.check_grid(values.len())?;
        let mut out = vec![0.0; self.n_modes];
        project(&self.cos_table, self.n_modes, self.weight(), values, &mut out);
        Ok(out)
    }

    /// Point values of a cosine series on the collocation grid.
    pub fn to_grid(&self, coeffs: &[f64]) -> Result<Vec<f64>> {
        self.check_coeffs(coeffs.len())?;
        let mut out = vec![0.0; self.n_grid];
        synthesize(&self.cos_table, self.n_modes, coeffs, &mut out);
        Ok(out)
    }

    /// Allocation-free transforms for the time-stepping hot path.  Slice
    /// lengths are the caller's responsibility.
    pub(crate) fn to_spectral_into(&self, values: &[f64], out: &mut [f64]) {
        project(&self.cos_table, self.n_modes, self.weight(), values, out);
    }

    pub(crate) fn to_grid_into(&self, coeffs: &[f64], out: &mut [f64]) {
        synthesize(&self.cos_table, self.n_modes, coeffs, out);
    }

    pub(crate) fn sine_to_spectral_into(&self, values: &[f64], out: &mut [f64]) {
        project(&self.sin_table, self.n_modes, self.weight(), values, out);
        out[0] = 0.0;
    }

    pub(crate) fn sine_to_grid_into(&self, coeffs: &[f64], out: &mut [f64]) {
        synthesize(&self.sin_table, self.n_modes, coeffs, out);
    }

    /// Value of `sum_k c_k e_k(s)` at an arbitrary point.
    pub fn evaluate(&self, coeffs: &[f64], s: f64) -> f64 {
        coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| c * cos_mode(k, s))
            .sum()
    }

    /// Value of `d/ds sum_k c_k e_k(s)` at an arbitrary point.
    pub fn evaluate_derivative(&self, coeffs: &[f64], s: f64) -> f64 {
        coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, c)| -c * k as f64 * PI * SQRT_2 * (k as f64 * PI * s).sin())
            .sum()
    }
}

fn cos_mode(k: usize, s: f64) -> f64 {
    if k == 0 {
        1.0
    } else {
        SQRT_2 * (k as f64 * PI * s).cos()
    }
}

fn project(table: &[f64], k_modes: usize, weight: f64, values: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|c| *c = 0.0);
    for (row, &v) in table.chunks_exact(k_modes).zip(values) {
        for (c, &t) in out.iter_mut().zip(row) {
            *c += t * v;
        }
    }
    out.iter_mut().for_each(|c| *c *= weight);
}

fn synthesize(table: &[f64], k_modes: usize, coeffs: &[f64], out: &mut [f64]) {
    for (row, v) in table.chunks_exact(k_modes).zip(out.iter_mut()) {
        *v = row.iter().zip(coeffs).map(|(t, c)| t * c).sum();
    }
}

/// A density field held simultaneously as cosine coefficients and grid values.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    coeffs: Vec<f64>,
    grid_values: Vec<f64>,
}

impl DensityField {
    pub fn from_coeffs(basis: &SpectralBasis, coeffs: Vec<f64>) -> Result<Self> {
        let grid_values = basis.to_grid(&coeffs)?;
        Ok(Self {
            coeffs,
            grid_values,
        })
    }

    /// Projects grid values onto the cosine span; the stored grid values are
    /// re-synthesized from the projection so both views agree.
    pub fn from_grid(basis: &SpectralBasis, values: &[f64]) -> Result<Self> {
        let coeffs = basis.to_spectral(values)?;
        Self::from_coeffs(basis, coeffs)
    }

    pub fn constant(basis: &SpectralBasis, value: f64) -> Self {
        let mut coeffs = vec![0.0; basis.n_modes()];
        coeffs[0] = value;
        Self {
            coeffs,
            grid_values: vec![value; basis.n_grid()],
        }
    }

    /// Samples `f` on the grid and projects.
    pub fn from_fn(basis: &SpectralBasis, f: impl Fn(f64) -> f64) -> Self {
        let values: Vec<f64> = basis.grid().iter().map(|&s| f(s)).collect();
        Self::from_grid(basis, &values).expect("grid length matches basis")
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Mutable coefficients and grid values; the caller keeps them consistent.
    pub(crate) fn parts_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.coeffs, &mut self.grid_values)
    }

    pub fn grid_values(&self) -> &[f64] {
        &self.grid_values
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn n_modes(&self) -> usize {
        self.coeffs.len()
    }

    /// `int_0^1 rho ds`, which is the mode-0 coefficient.
    pub fn mass(&self) -> f64 {
        self.coeffs[0]
    }

    pub fn min_value(&self) -> f64 {
        self.grid_values
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn is_positive(&self) -> bool {
        self.min_value() > 0.0
    }

    /// `L^2(0,1)` norm, computed from the coefficients.
    pub fn l2_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    /// Coefficients of `self - other`.
    pub fn difference(&self, other: &DensityField) -> Vec<f64> {
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a - b)
            .collect()
    }
}

/// A flux field in the sine basis.  Produced by [`derivative`] and consumed
/// by [`divergence`].
#[derive(Debug, Clone, PartialEq)]
pub struct SineField {
    coeffs: Vec<f64>,
}

impl SineField {
    pub(crate) fn from_coeffs(coeffs: Vec<f64>) -> Self {
        Self { coeffs }
    }

    pub(crate) fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Pointwise product with grid values `m(s_j)`, projected back onto the
    /// sine span (pseudo-spectral product).
    pub fn multiply_pointwise(&self, basis: &SpectralBasis, factor: &[f64]) -> Result<Self> {
        basis.check_grid(factor.len())?;
        let mut values = vec![0.0; basis.n_grid()];
        basis.sine_to_grid_into(&self.coeffs, &mut values);
        values.iter_mut().zip(factor).for_each(|(v, m)| *v *= m);
        let mut coeffs = vec![0.0; basis.n_modes()];
        basis.sine_to_spectral_into(&values, &mut coeffs);
        Ok(Self { coeffs })
    }
}

/// `d/ds`: cosine mode `k` becomes sine mode `k` with factor `-k pi`.
pub fn derivative(field: &DensityField) -> SineField {
    SineField {
        coeffs: derivative_coeffs(&field.coeffs),
    }
}

pub(crate) fn derivative_coeffs(coeffs: &[f64]) -> Vec<f64> {
    coeffs
        .iter()
        .enumerate()
        .map(|(k, c)| -(k as f64) * PI * c)
        .collect()
}

/// `d/ds` of a sine field: sine mode `k` becomes cosine mode `k` with factor
/// `k pi`.  The mode-0 coefficient of the result is exactly zero.
pub fn divergence(basis: &SpectralBasis, flux: &SineField) -> Result<DensityField> {
    basis.check_coeffs(flux.coeffs.len())?;
    DensityField::from_coeffs(basis, divergence_coeffs(&flux.coeffs))
}

pub(crate) fn divergence_coeffs(coeffs: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = coeffs
        .iter()
        .enumerate()
        .map(|(k, b)| k as f64 * PI * b)
        .collect();
    out[0] = 0.0;
    out
}

/// Spectral Laplacian: multiplication by `-lambda_k`.
pub fn laplacian(basis: &SpectralBasis, field: &DensityField) -> Result<DensityField> {
    basis.check_coeffs(field.n_modes())?;
    let coeffs = field
        .coeffs
        .iter()
        .zip(basis.eigenvalues())
        .map(|(c, l)| -l * c)
        .collect();
    DensityField::from_coeffs(basis, coeffs)
}

/// Bilaplacian: multiplication by `lambda_k^2`.
pub fn bilaplacian(basis: &SpectralBasis, field: &DensityField) -> Result<DensityField> {
    basis.check_coeffs(field.n_modes())?;
    let coeffs = field
        .coeffs
        .iter()
        .zip(basis.eigenvalues())
        .map(|(c, l)| l * l * c)
        .collect();
    DensityField::from_coeffs(basis, coeffs)
}

pub fn l2_inner(f: &[f64], g: &[f64]) -> f64 {
    f.iter().zip(g).map(|(a, b)| a * b).sum()
}

/// `<(-Delta)^{-1} f, g> = sum_{k>=1} f_k g_k / lambda_k` for mean-zero
/// coefficient vectors.
pub fn hminus1_inner(basis: &SpectralBasis, f: &[f64], g: &[f64]) -> Result<f64> {
    basis.check_coeffs(f.len())?;
    basis.check_coeffs(g.len())?;
    for (name, v) in [("f", f), ("g", g)] {
        if v[0].abs() > MEAN_ZERO_TOLERANCE {
            return Err(Error::Precondition(format!(
                "H^-1 inner product needs mean-zero fields; {name} has mean {:e}",
                v[0]
            )));
        }
    }
    Ok(hminus1_unchecked(basis, f, g))
}

pub(crate) fn hminus1_unchecked(basis: &SpectralBasis, f: &[f64], g: &[f64]) -> f64 {
    f.iter()
        .zip(g)
        .zip(basis.eigenvalues())
        .skip(1)
        .map(|((a, b), l)| a * b / l)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_coeffs(rng: &mut ChaCha8Rng, k: usize, n: usize) -> Vec<f64> {
        let mut c = vec![0.0; n];
        for v in c.iter_mut().take(k) {
            *v = rng.random_range(-1.0..1.0);
        }
        c
    }

    #[test]
    fn eigenvalues_start_at_zero_and_increase() {
        let b = SpectralBasis::new(32).unwrap();
        assert_eq!(b.eigenvalue(0), 0.0);
        assert!(b.eigenvalues().windows(2).all(|w| w[1] > w[0]));
        assert!((b.eigenvalue(1) - PI * PI).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_sizes() {
        assert!(SpectralBasis::new(0).is_err());
        assert!(SpectralBasis::with_grid(8, 7).is_err());
        let b = SpectralBasis::new(4).unwrap();
        assert_eq!(
            b.to_spectral(&[1.0; 3]),
            Err(Error::DimensionMismatch {
                expected: 8,
                got: 3
            })
        );
        assert!(b.to_grid(&[1.0; 5]).is_err());
    }

    #[test]
    fn constant_field_is_mode_zero() {
        let b = SpectralBasis::new(8).unwrap();
        let c = b.to_spectral(&vec![3.0; b.n_grid()]).unwrap();
        assert!((c[0] - 3.0).abs() < 1e-14);
        assert!(c[1..].iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn first_cosine_mode_is_unit_coefficient() {
        let b = SpectralBasis::new(8).unwrap();
        let values: Vec<f64> = b.grid().iter().map(|s| SQRT_2 * (PI * s).cos()).collect();
        let c = b.to_spectral(&values).unwrap();
        for (k, v) in c.iter().enumerate() {
            let expect = if k == 1 { 1.0 } else { 0.0 };
            assert!((v - expect).abs() < 1e-12, "mode {k}: {v}");
        }
    }

    #[test]
    fn projection_matches_dense_least_squares() {
        // Oracle: normal equations (A^T A) c = A^T g solved by Gaussian
        // elimination on the explicitly assembled collocation matrix.
        let k = 8;
        let b = SpectralBasis::with_grid(k, 20).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let coeffs = random_coeffs(&mut rng, k, k);
        let values = b.to_grid(&coeffs).unwrap();
        let a: Vec<Vec<f64>> = b
            .grid()
            .iter()
            .map(|&s| (0..k).map(|m| cos_mode(m, s)).collect())
            .collect();
        let mut normal = vec![vec![0.0; k + 1]; k];
        for r in 0..k {
            for c in 0..k {
                normal[r][c] = a.iter().map(|row| row[r] * row[c]).sum();
            }
            normal[r][k] = a.iter().zip(&values).map(|(row, v)| row[r] * v).sum();
        }
        for p in 0..k {
            for r in p + 1..k {
                let f = normal[r][p] / normal[p][p];
                for c in p..=k {
                    normal[r][c] -= f * normal[p][c];
                }
            }
        }
        let mut oracle = vec![0.0; k];
        for r in (0..k).rev() {
            let s: f64 = (r + 1..k).map(|c| normal[r][c] * oracle[c]).sum();
            oracle[r] = (normal[r][k] - s) / normal[r][r];
        }
        let got = b.to_spectral(&values).unwrap();
        let scale = coeffs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for m in 0..k {
            assert!((got[m] - oracle[m]).abs() <= 1e-12 * scale);
            assert!((got[m] - coeffs[m]).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn random_field_round_trips() {
        let b = SpectralBasis::new(8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let coeffs = random_coeffs(&mut rng, 8, 8);
        let values = b.to_grid(&coeffs).unwrap();
        let back = b.to_grid(&b.to_spectral(&values).unwrap()).unwrap();
        let sup = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (x, y) in values.iter().zip(&back) {
            assert!((x - y).abs() <= 1e-12 * sup);
        }
    }

    #[test]
    fn derivative_of_constant_vanishes() {
        let b = SpectralBasis::new(8).unwrap();
        let d = derivative(&DensityField::constant(&b, 2.5));
        assert!(d.coeffs().iter().all(|&c| c == 0.0));
    }

    #[test]
    fn derivative_and_divergence_of_first_mode() {
        let b = SpectralBasis::new(8).unwrap();
        let mut c = vec![0.0; 8];
        c[1] = 1.0;
        let f = DensityField::from_coeffs(&b, c).unwrap();
        let d = derivative(&f);
        assert!((d.coeffs()[1] + PI).abs() < 1e-15);
        assert!(d.coeffs().iter().enumerate().all(|(k, v)| k == 1 || *v == 0.0));
        // Sine synthesis reproduces -pi sqrt(2) sin(pi s).
        let mut vals = vec![0.0; b.n_grid()];
        b.sine_to_grid_into(d.coeffs(), &mut vals);
        for (v, s) in vals.iter().zip(b.grid()) {
            assert!((v + PI * SQRT_2 * (PI * s).sin()).abs() < 1e-13);
        }
        let lap = divergence(&b, &d).unwrap();
        assert!((lap.coeffs()[1] + PI * PI).abs() < 1e-13);
    }

    #[test]
    fn laplacian_matches_finite_differences() {
        // Oracle: second-order centred differences of the synthesized field on
        // a fine uniform grid, compared at interior points.
        let b = SpectralBasis::new(5).unwrap();
        let coeffs = vec![1.0, 0.3, -0.2, 0.1, 0.05];
        let f = DensityField::from_coeffs(&b, coeffs.clone()).unwrap();
        let lap = divergence(&b, &derivative(&f)).unwrap();
        let n = 4096;
        let h = 1.0 / n as f64;
        let mut max_err: f64 = 0.0;
        for i in 1..n {
            let s = i as f64 * h;
            let fd = (b.evaluate(&coeffs, s + h) - 2.0 * b.evaluate(&coeffs, s)
                + b.evaluate(&coeffs, s - h))
                / (h * h);
            max_err = max_err.max((fd - b.evaluate(lap.coeffs(), s)).abs());
        }
        let lap_direct = laplacian(&b, &f).unwrap();
        for (x, y) in lap.coeffs().iter().zip(lap_direct.coeffs()) {
            assert!((x - y).abs() < 1e-12 * (1.0 + y.abs()));
        }
        // The O(h^2) truncation term is bounded by h^2/12 max|f''''|; for this
        // field max|f''''| < 0.05 * 4^4 pi^4 * sqrt(2) * 4.
        assert!(max_err < 1e-4, "fd disagreement {max_err}");
    }

    #[test]
    fn bilaplacian_eigenrelation_and_consistency() {
        let b = SpectralBasis::new(6).unwrap();
        let mut c = vec![0.0; 6];
        c[1] = 1.0;
        let e1 = DensityField::from_coeffs(&b, c).unwrap();
        let bl = bilaplacian(&b, &e1).unwrap();
        assert!((bl.coeffs()[1] - PI.powi(4)).abs() < 1e-11);
        assert_eq!(bilaplacian(&b, &DensityField::constant(&b, 4.0)).unwrap().coeffs()[0], 0.0);

        let mixed = DensityField::from_coeffs(&b, vec![0.5, 0.1, -0.3, 0.2, 0.0, 0.07]).unwrap();
        let twice = divergence(&b, &derivative(&divergence(&b, &derivative(&mixed)).unwrap())).unwrap();
        for (x, y) in twice.coeffs().iter().zip(bilaplacian(&b, &mixed).unwrap().coeffs()) {
            assert!((x - y).abs() <= 1e-12 * y.abs().max(1.0));
        }
    }

    #[test]
    fn hminus1_identities() {
        let b = SpectralBasis::new(4).unwrap();
        let e1 = [0.0, 1.0, 0.0, 0.0];
        let e2 = [0.0, 0.0, 1.0, 0.0];
        assert!((hminus1_inner(&b, &e1, &e1).unwrap() - 1.0 / (PI * PI)).abs() < 1e-16);
        assert_eq!(hminus1_inner(&b, &e1, &e2).unwrap(), 0.0);
        assert!(matches!(
            hminus1_inner(&b, &[1e-9, 1.0, 0.0, 0.0], &e1),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn hminus1_matches_dense_solve() {
        // Oracle: solve -u'' = f with Neumann conditions on a fine
        // finite-volume grid (tridiagonal, gauge fixed by zero mean), then
        // integrate u * g by the midpoint rule.
        let b = SpectralBasis::new(6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut f = random_coeffs(&mut rng, 6, 6);
        let mut g = random_coeffs(&mut rng, 6, 6);
        f[0] = 0.0;
        g[0] = 0.0;
        let n = 4000;
        let h = 1.0 / n as f64;
        let fv: Vec<f64> = (0..n).map(|i| b.evaluate(&f, (i as f64 + 0.5) * h)).collect();
        // Flux form: F_{i+1/2} = -(u_{i+1} - u_i)/h; (F_{i+1/2} - F_{i-1/2})/h = f_i.
        // Integrate fluxes from the left wall: F_{i+1/2} = h * sum_{m<=i} f_m.
        let mut u = vec![0.0; n];
        let mut flux = 0.0;
        for i in 0..n - 1 {
            flux += h * fv[i];
            u[i + 1] = u[i] - h * flux;
        }
        let mean = u.iter().sum::<f64>() / n as f64;
        let oracle: f64 = (0..n)
            .map(|i| (u[i] - mean) * b.evaluate(&g, (i as f64 + 0.5) * h) * h)
            .sum();
        let got = hminus1_inner(&b, &f, &g).unwrap();
        assert!((got - oracle).abs() < 1e-6, "{got} vs {oracle}");
    }

    #[test]
    fn hminus1_matches_stiffness_matrix_solve() {
        // Oracle: assemble the stiffness matrix S_ij = int e_i' e_j' by
        // composite Simpson quadrature, solve S u = f on modes >= 1 by
        // Gaussian elimination and return u . g.
        let k = 6;
        let b = SpectralBasis::new(k).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let mut f = random_coeffs(&mut rng, k, k);
        let mut g = random_coeffs(&mut rng, k, k);
        f[0] = 0.0;
        g[0] = 0.0;
        let n = 20_000;
        let h = 1.0 / n as f64;
        let dmode = |m: usize, s: f64| -(m as f64) * PI * SQRT_2 * (m as f64 * PI * s).sin();
        let m = k - 1;
        let mut a = vec![vec![0.0; m + 1]; m];
        for r in 0..m {
            for c in 0..m {
                let mut acc = 0.0;
                for i in 0..=n {
                    let s = i as f64 * h;
                    let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
                    acc += w * dmode(r + 1, s) * dmode(c + 1, s);
                }
                a[r][c] = acc * h / 3.0;
            }
            a[r][m] = f[r + 1];
        }
        for p in 0..m {
            for r in p + 1..m {
                let fac = a[r][p] / a[p][p];
                for c in p..=m {
                    a[r][c] -= fac * a[p][c];
                }
            }
        }
        let mut u = vec![0.0; m];
        for r in (0..m).rev() {
            let s: f64 = (r + 1..m).map(|c| a[r][c] * u[c]).sum();
            u[r] = (a[r][m] - s) / a[r][r];
        }
        let oracle: f64 = u.iter().zip(&g[1..]).map(|(x, y)| x * y).sum();
        let got = hminus1_inner(&b, &f, &g).unwrap();
        assert!((got - oracle).abs() < 1e-10, "{got} vs {oracle}");
    }

    #[test]
    fn parseval_holds_for_in_span_fields() {
        let b = SpectralBasis::new(10).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = DensityField::from_coeffs(&b, random_coeffs(&mut rng, 10, 10)).unwrap();
        let quad: f64 = f.grid_values().iter().map(|v| v * v).sum::<f64>() * b.weight();
        assert!((quad.sqrt() - f.l2_norm()).abs() < 1e-10);
    }
}
