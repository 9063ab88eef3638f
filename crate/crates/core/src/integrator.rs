//! Time stepping for the full SPDE on the fixed reference domain.
//!
//! One step of the semi-implicit Euler-Maruyama scheme solves
//!
//! ```text
//! (1 + dt alpha lambda_k^2) c_k^+ = c_k + dt T_k(rho) + xi_k
//! ```
//!
//! where `T = 1/2 d_s(M(rho) d_s mu_loc)` is the transport of the local
//! chemical potential and `xi` the conservative noise increment.  With a
//! positivity floor `delta > 0` the potential is evaluated at
//! `max(rho, delta)` and the penalty `kappa (delta - rho)_+` is subtracted
//! from `mu_loc`, so the penalty acts through the same conservative transport
//! as the drift.  Mode 0 receives exactly zero from every term, so the mass
//! coefficient is bit-for-bit constant.

use crate::error::{Error, Result};
use crate::model::{Model, Scratch};
use crate::noise::{NoiseGenerator, NoiseKind, NoiseSpec, WhiteIncrement};
use crate::spectral::{DensityField, SpectralBasis};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

pub const DEFAULT_POSITIVITY_FLOOR: f64 = 1e-4;
pub const DEFAULT_PENALTY_STRENGTH: f64 = 1e6;
/// `dt * (stiffest explicitly treated rate)` above this triggers a warning.
pub const STABILITY_CONSTANT: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Bilaplacian implicit (diagonal solve), nonlinearity explicit.
    #[default]
    SemiImplicitAlpha,
    FullyExplicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepperConfig {
    pub dt: f64,
    pub t_end: f64,
    pub scheme: Scheme,
    pub positivity_floor: f64,
    pub penalty_strength: f64,
    pub record_every: u64,
    pub moving_boundary: bool,
}

impl Default for StepperConfig {
    fn default() -> Self {
        Self {
            dt: 1e-5,
            t_end: 1.0,
            scheme: Scheme::SemiImplicitAlpha,
            positivity_floor: DEFAULT_POSITIVITY_FLOOR,
            penalty_strength: DEFAULT_PENALTY_STRENGTH,
            record_every: 100,
            moving_boundary: false,
        }
    }
}

impl StepperConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::Config(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            return Err(Error::Config(format!("t_end must be >= 0, got {}", self.t_end)));
        }
        if !(self.positivity_floor >= 0.0) {
            return Err(Error::Config("positivity_floor must be >= 0".into()));
        }
        if !(self.penalty_strength >= 0.0) {
            return Err(Error::Config("penalty_strength must be >= 0".into()));
        }
        if self.record_every == 0 {
            return Err(Error::Config("record_every must be >= 1".into()));
        }
        Ok(())
    }

    /// Number of steps needed to reach `t_end`.
    pub fn n_steps(&self) -> u64 {
        (self.t_end / self.dt).round() as u64
    }

    /// Same configuration without the positivity mechanism.
    pub fn without_penalty(mut self) -> Self {
        self.positivity_floor = 0.0;
        self.penalty_strength = 0.0;
        self
    }
}

/// Per-step output of the penalty mechanism.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepRecord {
    /// `dt * int kappa (delta - rho)_+ ds`.
    pub penalty_mass: f64,
    /// Grid indices with `rho < delta`.
    pub support: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LedgerEntry {
    pub t: f64,
    pub penalty_mass: f64,
    pub support: Vec<usize>,
}

/// Discrete approximation of the reflection measure: penalty mass
/// accumulated between recorded steps and the cells where it acted.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ReflectionLedger {
    pub entries: Vec<LedgerEntry>,
    pub total_mass: f64,
}

impl ReflectionLedger {
    pub fn cumulative(&self) -> Vec<f64> {
        self.entries
            .iter()
            .scan(0.0, |acc, e| {
                *acc += e.penalty_mass;
                Some(*acc)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Monitors {
    pub l2_norm: f64,
    pub free_energy: f64,
    pub min_value: f64,
    pub mass: f64,
}

/// Pure evaluation of the a priori-estimate monitors.  The free energy is
/// `+inf` where a singular potential cannot be evaluated.
pub fn monitors(basis: &SpectralBasis, model: &Model, state: &DensityField) -> Monitors {
    Monitors {
        l2_norm: state.l2_norm(),
        free_energy: model.free_energy(basis, state).unwrap_or(f64::INFINITY),
        min_value: state.min_value(),
        mass: state.mass(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryState {
    pub l_minus: f64,
    pub l_plus: f64,
}

impl Default for BoundaryState {
    fn default() -> Self {
        Self {
            l_minus: 0.0,
            l_plus: 1.0,
        }
    }
}

impl BoundaryState {
    pub fn length(&self) -> f64 {
        self.l_plus - self.l_minus
    }
}

/// Values entering the boundary SDE at one end of the domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeSample {
    pub rho: f64,
    /// Physical-domain `d_s mu` at the edge.
    pub dmu_ds: f64,
    /// Noise increment `sigma dW` at the edge.
    pub dw: f64,
}

/// Euler-Maruyama update
/// `dL = -(1/rho) [ (1/(2 rho)) d_s mu dt + dW / sqrt(rho) ]` at both ends.
pub fn step_boundaries(
    boundary: BoundaryState,
    minus: EdgeSample,
    plus: EdgeSample,
    dt: f64,
    step: u64,
) -> Result<BoundaryState> {
    let increment = |e: EdgeSample| -> Result<f64> {
        if !(e.rho > 0.0) {
            return Err(Error::Precondition(format!(
                "boundary update needs a positive edge density, got {}",
                e.rho
            )));
        }
        Ok(-(e.dmu_ds * dt / (2.0 * e.rho) + e.dw / e.rho.sqrt()) / e.rho)
    };
    let next = BoundaryState {
        l_minus: boundary.l_minus + increment(minus)?,
        l_plus: boundary.l_plus + increment(plus)?,
    };
    if !(next.l_minus < next.l_plus) {
        return Err(Error::BoundaryCollapse {
            step,
            l_minus: next.l_minus,
            l_plus: next.l_plus,
        });
    }
    Ok(next)
}

#[derive(Debug, Clone)]
pub struct Simulation {
    basis: Arc<SpectralBasis>,
    model: Model,
    noise: NoiseSpec,
    config: StepperConfig,
    warnings: Vec<String>,
}

impl Simulation {
    pub fn new(
        basis: Arc<SpectralBasis>,
        model: Model,
        noise: NoiseSpec,
        config: StepperConfig,
    ) -> Result<Self> {
        model.validate()?;
        noise.validate()?;
        config.validate()?;
        let mut sim = Self {
            basis,
            model,
            noise,
            config,
            warnings: Vec::new(),
        };
        if config.scheme == Scheme::FullyExplicit {
            let lmax = sim.basis.eigenvalue(sim.basis.n_modes() - 1);
            let rate = model.alpha() * lmax * lmax;
            if config.dt * rate > STABILITY_CONSTANT {
                sim.warn(format!(
                    "explicit bilaplacian: dt * alpha lambda_max^2 = {:.3e} exceeds {STABILITY_CONSTANT}",
                    config.dt * rate
                ));
            }
        }
        Ok(sim)
    }

    fn warn(&mut self, message: String) {
        log::warn!("{message}");
        self.warnings.push(message);
    }

    pub fn basis(&self) -> &SpectralBasis {
        &self.basis
    }

    pub fn basis_arc(&self) -> Arc<SpectralBasis> {
        Arc::clone(&self.basis)
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn noise(&self) -> &NoiseSpec {
        &self.noise
    }

    pub fn config(&self) -> &StepperConfig {
        &self.config
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn with_config(&self, config: StepperConfig) -> Result<Self> {
        Self::new(self.basis_arc(), self.model, self.noise.clone(), config)
    }

    pub fn with_noise(&self, noise: NoiseSpec) -> Result<Self> {
        Self::new(self.basis_arc(), self.model, noise, self.config)
    }

    /// Estimate of the stiffest rate treated explicitly at `state`.
    pub fn stiffness(&self, state: &DensityField) -> f64 {
        let basis = &self.basis;
        let lmax = basis.eigenvalue(basis.n_modes() - 1);
        let delta = self.config.positivity_floor;
        let pot = &self.model.potential;
        let worst = state
            .grid_values()
            .iter()
            .map(|&r| {
                let x = if delta > 0.0 { r.max(delta) } else { r };
                let curv = if pot.is_singular() && !(x > pot.eval_floor) {
                    f64::INFINITY
                } else {
                    pot.second_derivative_unchecked(x)
                };
                0.5 * self.model.mobility.evaluate(r) * curv
            })
            .fold(0.0f64, f64::max);
        let mut rate = worst * lmax;
        if self.config.scheme == Scheme::FullyExplicit {
            rate += self.model.alpha() * lmax * lmax;
        }
        rate
    }

    /// Projects onto the cosine span and, with a positivity floor, raises
    /// grid values to at least `2 delta` first.
    pub fn prepare_initial(&self, rho0: &DensityField) -> Result<DensityField> {
        if rho0.n_modes() != self.basis.n_modes() {
            return Err(Error::DimensionMismatch {
                expected: self.basis.n_modes(),
                got: rho0.n_modes(),
            });
        }
        let floor = 2.0 * self.config.positivity_floor;
        if floor > 0.0 && rho0.min_value() < floor {
            let raised: Vec<f64> = rho0.grid_values().iter().map(|v| v.max(floor)).collect();
            return DensityField::from_grid(&self.basis, &raised);
        }
        Ok(rho0.clone())
    }

    pub fn stepper(&self, stream: u64) -> Result<Stepper> {
        Stepper::new(self.clone(), stream)
    }

    /// Runs one trajectory, calling `observer(step, t, state)` at step 0 and
    /// after every step.  Returns the final state and step count; on failure
    /// returns the error together with the last good state.
    pub fn run_with<F>(
        &self,
        rho0: &DensityField,
        stream: u64,
        mut observer: F,
    ) -> std::result::Result<(DensityField, u64), (Error, DensityField, u64)>
    where
        F: FnMut(u64, f64, &DensityField, &StepRecord),
    {
        let start = match self.prepare_initial(rho0) {
            Ok(s) => s,
            Err(e) => return Err((e, rho0.clone(), 0)),
        };
        let mut stepper = match self.stepper(stream) {
            Ok(s) => s,
            Err(e) => return Err((e, start, 0)),
        };
        let mut state = start;
        observer(0, 0.0, &state, &StepRecord::default());
        let n = self.config.n_steps();
        for i in 1..=n {
            match stepper.step_in_place(&mut state) {
                Ok(rec) => observer(i, i as f64 * self.config.dt, &state, &rec),
                Err(e) => return Err((e, state, i - 1)),
            }
        }
        Ok((state, n))
    }

    /// Full trajectory with recorded states, monitors and reflection ledger.
    pub fn run(&self, rho0: &DensityField, stream: u64) -> Trajectory {
        let mut traj = Trajectory {
            warnings: self.warnings.clone(),
            ..Trajectory::default()
        };
        match self.prepare_initial(rho0) {
            Ok(s) => {
                let rate = self.stiffness(&s);
                if self.config.dt * rate > STABILITY_CONSTANT {
                    let msg = format!(
                        "dt * explicit stiffness = {:.3e} exceeds {STABILITY_CONSTANT} at the initial state",
                        self.config.dt * rate
                    );
                    log::warn!("{msg}");
                    traj.warnings.push(msg);
                }
            }
            Err(e) => {
                traj.failure = Some(e);
                return traj;
            }
        }
        let every = self.config.record_every;
        let n = self.config.n_steps();
        let mut pending_mass = 0.0;
        let mut pending_support: Vec<usize> = Vec::new();
        let moving = self.config.moving_boundary;
        let mut boundary = BoundaryState::default();
        let mut boundary_error = None;
        let basis = self.basis_arc();
        let model = self.model;
        let sigma = self.noise.amplitude.sigma();
        let scalar_noise = matches!(self.noise.kind, NoiseKind::Scalar);
        let dt = self.config.dt;
        // The boundary update uses its own draw of the edge noise from a
        // dedicated stream when the bulk noise is modal (modal increments
        // vanish at the edges).
        let mut edge_rng = crate::noise::NoiseGenerator::new(
            &NoiseSpec {
                kind: NoiseKind::Scalar,
                ..self.noise.clone()
            },
            &basis,
            stream,
        )
        .ok();
        let mut previous: Option<DensityField> = None;

        let result = self.run_with(rho0, stream, |i, t, state, rec| {
            if moving && boundary_error.is_none() {
                if let Some(prev) = previous.as_ref() {
                    let edge_dw = if scalar_noise {
                        edge_rng.as_mut().map(|g| g.white(dt).values[0]).unwrap_or(0.0)
                    } else {
                        0.0
                    };
                    match edge_samples(&basis, &model, prev, boundary, sigma * edge_dw)
                        .and_then(|(m, p)| step_boundaries(boundary, m, p, dt, i))
                    {
                        Ok(b) => boundary = b,
                        Err(e) => boundary_error = Some(e),
                    }
                }
                previous = Some(state.clone());
            }
            pending_mass += rec.penalty_mass;
            for &j in &rec.support {
                if !pending_support.contains(&j) {
                    pending_support.push(j);
                }
            }
            if i % every == 0 || i == n {
                traj.times.push(t);
                traj.monitors.push(monitors(&basis, &model, state));
                traj.states.push(state.clone());
                pending_support.sort_unstable();
                traj.ledger.total_mass += pending_mass;
                traj.ledger.entries.push(LedgerEntry {
                    t,
                    penalty_mass: pending_mass,
                    support: std::mem::take(&mut pending_support),
                });
                pending_mass = 0.0;
                if moving {
                    traj.boundaries.push(boundary);
                }
            }
        });
        match result {
            Ok((_, steps)) => traj.steps_taken = steps,
            Err((e, _, steps)) => {
                traj.steps_taken = steps;
                traj.failure = Some(e);
            }
        }
        if traj.failure.is_none() {
            traj.failure = boundary_error;
        }
        traj
    }

    /// Independent trajectories on streams `0..n`, ordered by stream index.
    pub fn run_batch(&self, rho0: &DensityField, n: usize) -> Vec<Trajectory> {
        crate::analysis::ensemble::map_indexed(n, |i| self.run(rho0, i as u64))
    }
}

/// Edge values for the boundary SDE from a reference-domain state.  The
/// reference derivative is rescaled by `1/(L+ - L-)`.
pub fn edge_samples(
    basis: &SpectralBasis,
    model: &Model,
    state: &DensityField,
    boundary: BoundaryState,
    edge_dw: f64,
) -> Result<(EdgeSample, EdgeSample)> {
    let mu = model.chemical_potential(basis, state)?;
    let jac = 1.0 / boundary.length();
    let sample = |s: f64| EdgeSample {
        rho: basis.evaluate(state.coeffs(), s),
        dmu_ds: jac * basis.evaluate_derivative(mu.coeffs(), s),
        dw: edge_dw,
    };
    Ok((sample(0.0), sample(1.0)))
}

/// Single-owner time stepper for one trajectory.
#[derive(Debug, Clone)]
pub struct Stepper {
    sim: Simulation,
    noise: NoiseGenerator,
    step_index: u64,
    scratch: Scratch,
    mu: Vec<f64>,
    transport: Vec<f64>,
    increment: Vec<f64>,
    white: WhiteIncrement,
    divisor: Vec<f64>,
    explicit_bilap: Vec<f64>,
}

impl Stepper {
    pub fn new(sim: Simulation, stream: u64) -> Result<Self> {
        let basis = sim.basis_arc();
        let noise = NoiseGenerator::new(&sim.noise, &basis, stream)?;
        let dt = sim.config.dt;
        let alpha = sim.model.alpha();
        let (divisor, explicit_bilap) = match sim.config.scheme {
            Scheme::SemiImplicitAlpha => (
                basis
                    .eigenvalues()
                    .iter()
                    .map(|l| 1.0 + dt * alpha * l * l)
                    .collect(),
                vec![0.0; basis.n_modes()],
            ),
            Scheme::FullyExplicit => (
                vec![1.0; basis.n_modes()],
                basis.eigenvalues().iter().map(|l| dt * alpha * l * l).collect(),
            ),
        };
        let white = noise.zero_white();
        Ok(Self {
            noise,
            step_index: 0,
            scratch: Scratch::new(&basis),
            mu: vec![0.0; basis.n_grid()],
            transport: vec![0.0; basis.n_modes()],
            increment: vec![0.0; basis.n_modes()],
            white,
            divisor,
            explicit_bilap,
            sim,
        })
    }

    pub fn steps_taken(&self) -> u64 {
        self.step_index
    }

    /// Draws the raw Wiener increments for the next step without using them.
    pub fn draw_white(&mut self) -> WhiteIncrement {
        self.noise.white(self.sim.config.dt)
    }

    pub fn step(&mut self, state: &DensityField) -> Result<(DensityField, StepRecord)> {
        let mut next = state.clone();
        let rec = self.step_in_place(&mut next)?;
        Ok((next, rec))
    }

    pub fn step_in_place(&mut self, state: &mut DensityField) -> Result<StepRecord> {
        let dt = self.sim.config.dt;
        let mut white = std::mem::take(&mut self.white);
        self.noise.white_into(dt, &mut white);
        let out = self.advance(state, &white);
        self.white = white;
        out
    }

    /// Advances using externally supplied raw increments (e.g. the sum of
    /// two half-step increments when coupling a coarse and a fine run).
    pub fn step_with_white(&mut self, state: &mut DensityField, white: &WhiteIncrement) -> Result<StepRecord> {
        self.advance(state, white)
    }

    fn advance(&mut self, state: &mut DensityField, white: &WhiteIncrement) -> Result<StepRecord> {
        self.step_index += 1;
        let sim = &self.sim;
        let basis = &*sim.basis;
        let pot = &sim.model.potential;
        let dt = sim.config.dt;
        let delta = sim.config.positivity_floor;
        let kappa = sim.config.penalty_strength;
        let mut record = StepRecord::default();
        let mut penalty_sum = 0.0;
        for (j, (m, &r)) in self.mu.iter_mut().zip(state.grid_values()).enumerate() {
            let x = if delta > 0.0 { r.max(delta) } else { r };
            if pot.is_singular() && !(x > pot.eval_floor) {
                return Err(Error::PositivityViolation {
                    index: j,
                    position: basis.grid()[j],
                    value: r,
                });
            }
            let mut v = pot.derivative_unchecked(x);
            if r < delta {
                let p = kappa * (delta - r);
                v -= p;
                penalty_sum += p;
                record.support.push(j);
            }
            *m = v;
        }
        record.penalty_mass = penalty_sum * basis.weight() * dt;

        sim.model
            .transport_into(basis, state.grid_values(), &self.mu, &mut self.transport, &mut self.scratch);
        let rho_for_noise = if sim.noise.amplitude.is_additive() { None } else { Some(&*state) };
        self.noise
            .increment_from_white(basis, white, rho_for_noise, &mut self.increment)?;

        let (coeffs, grid) = state.parts_mut();
        for k in 0..coeffs.len() {
            let rhs = coeffs[k] - self.explicit_bilap[k] * coeffs[k]
                + dt * self.transport[k]
                + self.increment[k];
            coeffs[k] = rhs / self.divisor[k];
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::BlowUp {
                step: self.step_index,
            });
        }
        basis.to_grid_into(coeffs, grid);
        Ok(record)
    }
}

/// Recorded output of [`Simulation::run`].
#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DensityField>,
    pub monitors: Vec<Monitors>,
    pub ledger: ReflectionLedger,
    pub boundaries: Vec<BoundaryState>,
    pub steps_taken: u64,
    pub failure: Option<Error>,
    pub warnings: Vec<String>,
}

impl Trajectory {
    pub fn is_complete(&self) -> bool {
        self.failure.is_none()
    }
}
