//! Pathwise `H^-1` contraction of two solutions driven by the same noise.

use crate::error::{Error, Result};
use crate::integrator::Simulation;
use crate::spectral::{hminus1_unchecked, DensityField};
use serde::Serialize;

/// Relative mass mismatch tolerated between the two initial data.
pub const MASS_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContractionSeries {
    pub times: Vec<f64>,
    /// `|rho1 - rho2|_{-1}^2` at the recorded steps.
    pub distances: Vec<f64>,
    /// Largest `d(t_{i+1}) - d(t_i)` over all steps (recorded or not).
    pub max_upward_step: f64,
    /// `max_upward_step / d(0)`.
    pub max_relative_upward_step: f64,
    pub steps: u64,
    /// Whether the two paths stayed bit-for-bit equal.
    pub bitwise_equal: bool,
    pub failure: Option<String>,
}

impl ContractionSeries {
    pub fn is_non_increasing(&self, tolerance: f64) -> bool {
        self.failure.is_none() && self.max_upward_step <= tolerance
    }
}

/// Steps both initial data in lockstep on the same noise stream.
pub fn contraction_experiment(
    sim: &Simulation,
    rho1: &DensityField,
    rho2: &DensityField,
    stream: u64,
) -> Result<ContractionSeries> {
    if !sim.noise().amplitude.is_additive() {
        return Err(Error::Precondition("contraction needs additive noise".into()));
    }
    if !(sim.model().alpha() > 0.0) {
        return Err(Error::Precondition("contraction needs alpha > 0".into()));
    }
    let mut a = sim.prepare_initial(rho1)?;
    let mut b = sim.prepare_initial(rho2)?;
    let scale = a.mass().abs().max(b.mass().abs()).max(1.0);
    if (a.mass() - b.mass()).abs() > MASS_TOLERANCE * scale {
        return Err(Error::Precondition(format!(
            "H^-1 distance needs equal masses, got {} and {}",
            a.mass(),
            b.mass()
        )));
    }
    let basis = sim.basis();
    let dist = |a: &DensityField, b: &DensityField| {
        let d = a.difference(b);
        // masses agree; drop the rounding-level mean
        let mut d = d;
        d[0] = 0.0;
        hminus1_unchecked(basis, &d, &d)
    };
    let mut sa = sim.stepper(stream)?;
    let mut sb = sim.stepper(stream)?;
    let every = sim.config().record_every;
    let dt = sim.config().dt;
    let n = sim.config().n_steps();
    let mut d_prev = dist(&a, &b);
    let d0 = d_prev;
    let mut out = ContractionSeries {
        times: vec![0.0],
        distances: vec![d_prev],
        max_upward_step: f64::NEG_INFINITY,
        max_relative_upward_step: f64::NEG_INFINITY,
        steps: 0,
        bitwise_equal: a == b,
        failure: None,
    };
    for i in 1..=n {
        if let Err(e) = sa.step_in_place(&mut a).and_then(|_| sb.step_in_place(&mut b)) {
            out.failure = Some(e.to_string());
            break;
        }
        out.steps = i;
        let d = dist(&a, &b);
        out.max_upward_step = out.max_upward_step.max(d - d_prev);
        d_prev = d;
        if out.bitwise_equal && a != b {
            out.bitwise_equal = false;
        }
        if i % every == 0 || i == n {
            out.times.push(i as f64 * dt);
            out.distances.push(d);
        }
    }
    if out.max_upward_step == f64::NEG_INFINITY {
        out.max_upward_step = 0.0;
    }
    out.max_relative_upward_step = if d0 > 0.0 { out.max_upward_step / d0 } else { out.max_upward_step };
    Ok(out)
}
