//! Browser bindings: density snapshots, Gaussian-vs-pCN variances and
//! regularized measure weights.  Each export has a plain Rust twin so the
//! numerics are testable off the browser.

use repton_core::analysis::compare::Observable;
use repton_core::analysis::gaussian::gaussian_reference;
use repton_core::analysis::gibbs::{gibbs_sample, BulkEnergy, ChainConfig};
use repton_core::analysis::scan::{gamma_sample_set, measure_convergence_scan, ScanObservable};
use repton_core::{
    DensityField, Mobility, Model, NoiseSpec, PotentialFamily, PotentialSpec, RegularizedBase, Simulation,
    SpectralBasis, StepperConfig,
};
use std::f64::consts::PI;
use std::sync::Arc;
use wasm_bindgen::prelude::*;

fn family(code: u32, n: u32) -> PotentialFamily {
    match code {
        0 => PotentialFamily::SingularP2,
        1 => PotentialFamily::SingularP3,
        _ => PotentialFamily::Regularized { n: n.max(1), base: RegularizedBase::P2 },
    }
}

/// Grid snapshots of one trajectory from `1 - depth cos(pi s)`, flattened
/// row-major: `frames` rows of `2 * modes` values.  Stops early on failure.
#[allow(clippy::too_many_arguments)]
pub fn snapshots(
    modes: usize,
    family_code: u32,
    n: u32,
    alpha: f64,
    sigma: f64,
    depth: f64,
    dt: f64,
    frames: usize,
    steps_per_frame: u64,
    seed: u64,
) -> Result<Vec<f64>, String> {
    let basis = Arc::new(SpectralBasis::new(modes).map_err(|e| e.to_string())?);
    let config = StepperConfig {
        dt,
        t_end: dt * (frames.saturating_sub(1) as u64 * steps_per_frame) as f64,
        positivity_floor: 0.01,
        penalty_strength: 1e4,
        ..StepperConfig::default()
    };
    let sim = Simulation::new(
        basis.clone(),
        Model::new(PotentialSpec::new(family(family_code, n), alpha), Mobility::default()),
        NoiseSpec::additive_cylindrical(sigma, seed),
        config,
    )
    .map_err(|e| e.to_string())?;
    let rho0 = DensityField::from_fn(&basis, |s| 1.0 - depth * (PI * s).cos());
    let mut out = Vec::with_capacity(frames * basis.n_grid());
    let _ = sim.run_with(&rho0, 0, |i, _, state, _| {
        if i % steps_per_frame.max(1) == 0 && state.grid_values().iter().all(|v| v.is_finite()) {
            out.extend_from_slice(state.grid_values());
        }
    });
    Ok(out)
}

/// `[analytic_1, pcn_1, analytic_2, pcn_2, ...]` for the fluctuation modes
/// under the flat energy (`tilted = false`) or the regularized bulk energy.
pub fn variance_table(modes: usize, alpha: f64, sigma: f64, n: u32, tilted: bool, samples: usize, seed: u64) -> Result<Vec<f64>, String> {
    let basis = SpectralBasis::new(modes).map_err(|e| e.to_string())?;
    let noise = NoiseSpec::additive_cylindrical(sigma, seed);
    let reference = gaussian_reference(alpha, &noise, &basis).map_err(|e| e.to_string())?;
    let model = Model::new(PotentialSpec::new(family(2, n), alpha), Mobility::default());
    let energy = BulkEnergy::new(&basis, model, 1.0, 1.0 / (sigma * sigma));
    let flat = |_: &[f64]| 0.0;
    let tilt = |x: &[f64]| energy.evaluate(x);
    let e: &(dyn Fn(&[f64]) -> f64 + Sync) = if tilted { &tilt } else { &flat };
    let config = ChainConfig {
        n_samples: samples.max(10),
        burn_in: 2_000,
        seed,
        ..ChainConfig::default()
    };
    let chain = gibbs_sample(&reference, e, &config, 0).map_err(|e| e.to_string())?;
    let mut out = Vec::with_capacity(2 * (modes - 1));
    for k in 1..modes {
        let obs = Observable::ModeVariance { mode: k };
        let mean = chain.samples.iter().map(|x| obs.evaluate(x)).sum::<f64>() / chain.samples.len() as f64;
        out.push(reference.variances[k]);
        out.push(mean);
    }
    Ok(out)
}

/// Mean weight `Z^n` per level followed by the limit weight.
pub fn scan_weights(modes: usize, alpha: f64, sigma: f64, levels: &[u32], samples: usize, seed: u64) -> Result<Vec<f64>, String> {
    let basis = SpectralBasis::new(modes).map_err(|e| e.to_string())?;
    let reference =
        gaussian_reference(alpha, &NoiseSpec::additive_cylindrical(sigma, seed), &basis).map_err(|e| e.to_string())?;
    let set = gamma_sample_set(&reference, 1.0, samples, seed);
    let table = measure_convergence_scan(&basis, &set, levels, RegularizedBase::P2, &[ScanObservable::One]);
    Ok(table
        .rows
        .iter()
        .chain(std::iter::once(&table.limit))
        .map(|r| r.estimates[0])
        .collect())
}

#[wasm_bindgen]
pub fn grid_size(modes: usize) -> usize {
    2 * modes
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn simulate_snapshots(
    modes: usize,
    family_code: u32,
    n: u32,
    alpha: f64,
    sigma: f64,
    depth: f64,
    dt: f64,
    frames: usize,
    steps_per_frame: u32,
    seed: u32,
) -> Result<Vec<f64>, JsValue> {
    snapshots(modes, family_code, n, alpha, sigma, depth, dt, frames, steps_per_frame as u64, seed as u64)
        .map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn gaussian_vs_pcn(modes: usize, alpha: f64, sigma: f64, n: u32, tilted: bool, samples: usize, seed: u32) -> Result<Vec<f64>, JsValue> {
    variance_table(modes, alpha, sigma, n, tilted, samples, seed as u64).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn measure_weights(modes: usize, alpha: f64, sigma: f64, levels: Vec<u32>, samples: usize, seed: u32) -> Result<Vec<f64>, JsValue> {
    scan_weights(modes, alpha, sigma, &levels, samples, seed as u64).map_err(|e| JsValue::from_str(&e))
}
