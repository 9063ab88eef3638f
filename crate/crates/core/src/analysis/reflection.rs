//! Penalty (reflection) mass under refinement.  Each level is a stepper
//! configuration; the reported quantity is the ensemble mean of the total
//! penalty mass `int_0^T int kappa (delta - rho)_+ ds dt` accumulated by the
//! penalty ledger.

use crate::analysis::{ensemble, stats};
use crate::error::Result;
use crate::integrator::{Simulation, StepperConfig};
use crate::spectral::DensityField;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelResult {
    pub dt: f64,
    pub positivity_floor: f64,
    pub penalty_strength: f64,
    pub mean_penalty_mass: f64,
    pub standard_error: f64,
    /// Fraction of paths with any penalty activity.
    pub contact_fraction: f64,
    /// Paths that stopped early (blow-up, singular evaluation).
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReflectionSeries {
    pub label: String,
    pub levels: Vec<LevelResult>,
    /// `mass(level i + 1) / mass(level i)`.
    pub ratios: Vec<f64>,
}

impl ReflectionSeries {
    pub fn last_mass(&self) -> f64 {
        self.levels.last().map_or(f64::NAN, |l| l.mean_penalty_mass)
    }
}

/// Runs `n_trajectories` paths for each level (streams `0..n`, so levels
/// share seeds but not increments).
pub fn reflection_experiment(
    label: &str,
    sim: &Simulation,
    rho0: &DensityField,
    levels: &[StepperConfig],
    n_trajectories: usize,
) -> Result<ReflectionSeries> {
    let mut out = Vec::with_capacity(levels.len());
    for cfg in levels {
        let level_sim = sim.with_config(*cfg)?;
        let masses: Vec<(f64, bool)> = ensemble::map_indexed(n_trajectories, |i| {
            let mut total = 0.0;
            let res = level_sim.run_with(rho0, i as u64, |_, _, _, rec| total += rec.penalty_mass);
            (total, res.is_ok())
        });
        let values: Vec<f64> = masses.iter().map(|m| m.0).collect();
        out.push(LevelResult {
            dt: cfg.dt,
            positivity_floor: cfg.positivity_floor,
            penalty_strength: cfg.penalty_strength,
            mean_penalty_mass: stats::mean(&values),
            standard_error: if values.len() > 1 { stats::standard_error(&values) } else { 0.0 },
            contact_fraction: values.iter().filter(|v| **v > 0.0).count() as f64 / values.len().max(1) as f64,
            failures: masses.iter().filter(|m| !m.1).count(),
        });
    }
    let ratios = out
        .windows(2)
        .map(|w| w[1].mean_penalty_mass / w[0].mean_penalty_mass)
        .collect();
    Ok(ReflectionSeries {
        label: label.to_string(),
        levels: out,
        ratios,
    })
}

/// `base` with the time step halved `n_levels - 1` times.
pub fn dt_halving_ladder(base: StepperConfig, n_levels: usize) -> Vec<StepperConfig> {
    (0..n_levels)
        .map(|i| StepperConfig {
            dt: base.dt / 2f64.powi(i as i32),
            ..base
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Mobility, Model, PotentialFamily, PotentialSpec};
    use crate::noise::NoiseSpec;
    use crate::spectral::SpectralBasis;
    use std::sync::Arc;

    #[test]
    fn far_from_zero_has_no_penalty() {
        let s = Simulation::new(
            Arc::new(SpectralBasis::new(6).unwrap()),
            Model::new(PotentialSpec::new(PotentialFamily::SingularP3, 0.1), Mobility::default()),
            NoiseSpec::additive_cylindrical(0.01, 0),
            StepperConfig { dt: 1e-5, t_end: 1e-3, ..StepperConfig::default() },
        )
        .unwrap();
        let ladder = dt_halving_ladder(*s.config(), 2);
        assert_eq!(ladder[1].dt, 5e-6);
        let r = reflection_experiment("p3", &s, &DensityField::constant(s.basis(), 1.0), &ladder, 3).unwrap();
        assert!(r.levels.iter().all(|l| l.mean_penalty_mass == 0.0 && l.failures == 0));
    }
}
