//! Monte Carlo estimate of `E[sup_{t <= T} |rho_t|^2]` over a set of
//! horizons, with an affine envelope fit, and its stability when the time
//! step is halved on the same Brownian paths.

use crate::analysis::{ensemble, stats};
use crate::error::{Error, Result};
use crate::integrator::Simulation;
use crate::spectral::DensityField;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AprioriEstimate {
    pub dt: f64,
    pub horizons: Vec<f64>,
    pub mean_sup: Vec<f64>,
    pub standard_errors: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    /// Intercept raised so the line bounds every mean.
    pub envelope_intercept: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AprioriRefinement {
    pub coarse: AprioriEstimate,
    pub fine: AprioriEstimate,
    /// `|slope_coarse - slope_fine| / |slope_fine|`.
    pub relative_slope_change: f64,
}

fn horizon_steps(horizons: &[f64], dt: f64) -> Result<Vec<u64>> {
    let mut steps = Vec::with_capacity(horizons.len());
    for &t in horizons {
        let n = (t / dt).round();
        if !(t > 0.0) || ((n * dt - t).abs() > 1e-9 * t) {
            return Err(Error::Config(format!("horizon {t} is not a positive multiple of dt = {dt}")));
        }
        steps.push(n as u64);
    }
    if steps.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("horizons must be increasing".into()));
    }
    Ok(steps)
}

fn summarize(dt: f64, horizons: &[f64], sups: &[Vec<f64>]) -> AprioriEstimate {
    let mut mean_sup = Vec::with_capacity(horizons.len());
    let mut ses = Vec::with_capacity(horizons.len());
    for h in 0..horizons.len() {
        let xs: Vec<f64> = sups.iter().map(|s| s[h]).collect();
        mean_sup.push(stats::mean(&xs));
        ses.push(stats::standard_error(&xs));
    }
    let fit = stats::linear_fit(horizons, &mean_sup);
    AprioriEstimate {
        dt,
        horizons: horizons.to_vec(),
        slope: fit.slope,
        intercept: fit.intercept,
        envelope_intercept: fit.intercept + fit.max_residual.max(0.0),
        mean_sup,
        standard_errors: ses,
    }
}

/// Runs `n_trajectories` paths at `sim.config().dt` and, on the same
/// Brownian paths, at `dt / 2`.
pub fn apriori_refinement(
    sim: &Simulation,
    rho0: &DensityField,
    horizons: &[f64],
    n_trajectories: usize,
) -> Result<AprioriRefinement> {
    let dt = sim.config().dt;
    let mut fine_cfg = *sim.config();
    fine_cfg.dt = dt / 2.0;
    let fine_sim = sim.with_config(fine_cfg)?;
    let coarse_steps = horizon_steps(horizons, dt)?;
    let start = sim.prepare_initial(rho0)?;
    let per_path: Vec<Result<(Vec<f64>, Vec<f64>)>> = ensemble::map_indexed(n_trajectories, |i| {
        let mut coarse = sim.stepper(i as u64)?;
        let mut fine = fine_sim.stepper(i as u64)?;
        let mut rc = start.clone();
        let mut rf = start.clone();
        let norm2 = |r: &DensityField| r.coeffs().iter().map(|c| c * c).sum::<f64>();
        let mut sup_c = norm2(&rc);
        let mut sup_f = sup_c;
        let mut out_c = Vec::with_capacity(horizons.len());
        let mut out_f = Vec::with_capacity(horizons.len());
        let mut next = 0;
        let last = *coarse_steps.last().unwrap_or(&0);
        for step in 1..=last {
            let mut w = fine.draw_white();
            fine.step_with_white(&mut rf, &w)?;
            sup_f = sup_f.max(norm2(&rf));
            let w2 = fine.draw_white();
            fine.step_with_white(&mut rf, &w2)?;
            sup_f = sup_f.max(norm2(&rf));
            w.add(&w2);
            coarse.step_with_white(&mut rc, &w)?;
            sup_c = sup_c.max(norm2(&rc));
            if step == coarse_steps[next] {
                out_c.push(sup_c);
                out_f.push(sup_f);
                next += 1;
            }
        }
        Ok((out_c, out_f))
    });
    let mut sups_c = Vec::with_capacity(n_trajectories);
    let mut sups_f = Vec::with_capacity(n_trajectories);
    for r in per_path {
        let (c, f) = r?;
        sups_c.push(c);
        sups_f.push(f);
    }
    let coarse = summarize(dt, horizons, &sups_c);
    let fine = summarize(dt / 2.0, horizons, &sups_f);
    let relative_slope_change = (coarse.slope - fine.slope).abs() / fine.slope.abs();
    Ok(AprioriRefinement {
        coarse,
        fine,
        relative_slope_change,
    })
}
