//! Empirical mixing: decay of `|E phi(rho1_t) - E phi(rho2_t)|` under
//! common random numbers, compared with the rate `lambda / 2` implied by a
//! fitted monotonicity constant `c = -lambda`.

use crate::analysis::ensemble;
use crate::analysis::stats;
use crate::error::Result;
use crate::integrator::Simulation;
use crate::spectral::{hminus1_unchecked, DensityField};
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixingReport {
    pub applicable: bool,
    pub reason: Option<String>,
    pub times: Vec<f64>,
    /// `|mean_i (phi(rho1_t^i) - phi(rho2_t^i))|`.
    pub differences: Vec<f64>,
    pub standard_errors: Vec<f64>,
    /// Rate fitted to `log difference` over the resolved part of the series.
    pub fitted_rate: f64,
    /// `-c / 2` from the monotonicity fit.
    pub predicted_rate: f64,
    /// `difference / |rho1_0 - rho2_0|_{-1}` at each recorded time.
    pub lipschitz_ratios: Vec<f64>,
}

/// `phi(rho) = rho_k`, the cosine coefficient of mode `k`.
pub fn mixing_diagnostic(
    sim: &Simulation,
    rho1: &DensityField,
    rho2: &DensityField,
    mode: usize,
    n_trajectories: usize,
    fitted_c: f64,
) -> Result<MixingReport> {
    let predicted = -fitted_c / 2.0;
    if !(fitted_c < 0.0) {
        return Ok(MixingReport {
            applicable: false,
            reason: Some(format!("fitted monotonicity constant {fitted_c} is not negative")),
            times: Vec::new(),
            differences: Vec::new(),
            standard_errors: Vec::new(),
            fitted_rate: f64::NAN,
            predicted_rate: predicted,
            lipschitz_ratios: Vec::new(),
        });
    }
    let a0 = sim.prepare_initial(rho1)?;
    let b0 = sim.prepare_initial(rho2)?;
    let initial = {
        let mut d = a0.difference(&b0);
        d[0] = 0.0;
        hminus1_unchecked(sim.basis(), &d, &d).sqrt()
    };
    let every = sim.config().record_every;
    let dt = sim.config().dt;
    let n_steps = sim.config().n_steps();
    let per_traj: Vec<Result<Vec<f64>>> = ensemble::map_indexed(n_trajectories, |i| {
        let mut sa = sim.stepper(i as u64)?;
        let mut sb = sim.stepper(i as u64)?;
        let mut a = a0.clone();
        let mut b = b0.clone();
        let mut diffs = vec![a.coeffs()[mode] - b.coeffs()[mode]];
        for step in 1..=n_steps {
            sa.step_in_place(&mut a)?;
            sb.step_in_place(&mut b)?;
            if step % every == 0 {
                diffs.push(a.coeffs()[mode] - b.coeffs()[mode]);
            }
        }
        Ok(diffs)
    });
    let per_traj: Vec<Vec<f64>> = per_traj.into_iter().collect::<Result<_>>()?;
    let n_rec = per_traj.first().map_or(0, Vec::len);
    let mut times = Vec::with_capacity(n_rec);
    let mut differences = Vec::with_capacity(n_rec);
    let mut ses = Vec::with_capacity(n_rec);
    for r in 0..n_rec {
        let xs: Vec<f64> = per_traj.iter().map(|d| d[r]).collect();
        times.push((r as u64 * every) as f64 * dt);
        differences.push(stats::mean(&xs).abs());
        ses.push(if xs.len() > 1 { stats::standard_error(&xs) } else { 0.0 });
    }
    // fit over the prefix where the difference is resolved above noise
    let resolved = differences
        .iter()
        .zip(&ses)
        .take_while(|(d, s)| **d > 3.0 * **s && **d > 0.0)
        .count();
    let fitted_rate = if resolved >= 2 {
        let lt: Vec<f64> = times[..resolved].to_vec();
        let ld: Vec<f64> = differences[..resolved].iter().map(|d| d.ln()).collect();
        -stats::linear_fit(&lt, &ld).slope
    } else {
        f64::NAN
    };
    let lipschitz_ratios = differences
        .iter()
        .map(|d| if initial > 0.0 { d / initial } else { 0.0 })
        .collect();
    Ok(MixingReport {
        applicable: true,
        reason: None,
        times,
        differences,
        standard_errors: ses,
        fitted_rate,
        predicted_rate: predicted,
        lipschitz_ratios,
    })
}
