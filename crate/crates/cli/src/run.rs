//! Experiment dispatch and output files.

use crate::config::{ExperimentConfig, ExperimentKind, MobilityConfig};
use crate::error::CliError;
use repton_core::analysis::assumptions::{check_assumptions, CheckConfig};
use repton_core::analysis::compare::{compare_invariant_measures, CompareConfig, MeasureSamples, Verdict};
use repton_core::analysis::contraction::contraction_experiment;
use repton_core::analysis::ensemble;
use repton_core::analysis::gaussian::gaussian_reference;
use repton_core::analysis::gibbs::{gibbs_sample_chains, BulkEnergy, ChainConfig};
use repton_core::analysis::scan::{gamma_sample_set, measure_convergence_scan, ScanObservable};
use repton_core::{snapshot, Amplitude, DensityField, Simulation, SpectralBasis};
use serde::Serialize;
use serde_json::{json, Value};
use std::path::{Path, PathBuf};
use std::sync::Arc;

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_VERDICT: i32 = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub verdict: Option<Verdict>,
    pub incomplete: bool,
    pub files: Vec<PathBuf>,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.incomplete {
            EXIT_RUNTIME
        } else if self.verdict == Some(Verdict::Fail) {
            EXIT_VERDICT
        } else {
            EXIT_OK
        }
    }
}

struct Writer<'a> {
    dir: &'a Path,
    config: &'a ExperimentConfig,
    hash: String,
    files: Vec<PathBuf>,
}

impl Writer<'_> {
    fn header(&self) -> String {
        format!(
            "# repton {} experiment={} config_hash={} seed={} repton-core={}\n",
            env!("CARGO_PKG_VERSION"),
            self.config.kind.name(),
            self.hash,
            self.config.seed,
            repton_core::VERSION
        )
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| CliError::Io {
            path: path.clone(),
            source: e,
        })?;
        self.files.push(path);
        Ok(())
    }

    fn csv(&mut self, name: &str, columns: &[String], rows: &[Vec<String>]) -> Result<(), CliError> {
        let mut out = self.header();
        out.push_str(&columns.join(","));
        out.push('\n');
        for r in rows {
            out.push_str(&r.join(","));
            out.push('\n');
        }
        self.write(name, out.as_bytes())
    }

    fn report(&mut self, verdict: Option<Verdict>, incomplete: bool, failure: Option<String>, result: Value) -> Result<(), CliError> {
        let doc = json!({
            "experiment": self.config.kind.name(),
            "config_hash": self.hash,
            "seed": self.config.seed,
            "versions": { "repton": env!("CARGO_PKG_VERSION"), "repton-core": repton_core::VERSION },
            "verdict": verdict,
            "incomplete": incomplete,
            "failure": failure,
            "config": self.config.scientific(),
            "result": result,
        });
        let mut text = serde_json::to_string_pretty(&doc).expect("report serializes");
        text.push('\n');
        self.write("report.json", text.as_bytes())
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("result serializes")
}

fn num(x: f64) -> String {
    format!("{x}")
}

/// Runs the experiment, writing outputs into `config.output`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Outcome, CliError> {
    let dir = config.output.as_path();
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    let mut w = Writer {
        dir,
        config,
        hash: config.hash(),
        files: Vec::new(),
    };
    let result = match config.kind {
        ExperimentKind::Simulate => simulate(config, &mut w),
        ExperimentKind::Contract => contract(config, &mut w),
        ExperimentKind::Gibbs => gibbs(config, &mut w),
        ExperimentKind::Scan => scan(config, &mut w),
        ExperimentKind::Check => check(config, &mut w),
    };
    let (verdict, incomplete) = match result {
        Ok(r) => r,
        Err(CliError::Core(e)) => {
            w.report(None, true, Some(e.to_string()), Value::Null)?;
            (None, true)
        }
        Err(e) => return Err(e),
    };
    Ok(Outcome {
        verdict,
        incomplete,
        files: w.files,
    })
}

fn simulation(config: &ExperimentConfig) -> Result<(Arc<SpectralBasis>, Simulation), CliError> {
    let basis = Arc::new(SpectralBasis::new(config.n_modes)?);
    let sim = Simulation::new(
        basis.clone(),
        config.model.build(),
        config.noise.build(config.seed),
        config.stepper.build(),
    )?;
    Ok((basis, sim))
}

type Run = Result<(Option<Verdict>, bool), CliError>;

fn simulate(config: &ExperimentConfig, w: &mut Writer) -> Run {
    let (basis, sim) = simulation(config)?;
    let traj = sim.run(&config.initial.build(&basis), 0);
    let moving = config.stepper.moving_boundary;
    let mut columns: Vec<String> = ["t", "mass", "l2_norm", "free_energy", "min_value", "penalty_mass"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    if moving {
        columns.extend(["l_minus".to_string(), "l_plus".to_string()]);
    }
    if config.analysis.mode_columns {
        columns.extend((0..basis.n_modes()).map(|k| format!("c{k}")));
    }
    let mut rows = Vec::with_capacity(traj.times.len());
    for (i, t) in traj.times.iter().enumerate() {
        let m = &traj.monitors[i];
        let mut row = vec![
            num(*t),
            num(m.mass),
            num(m.l2_norm),
            num(m.free_energy),
            num(m.min_value),
            num(traj.ledger.entries[i].penalty_mass),
        ];
        if moving {
            let b = traj.boundaries[i];
            row.extend([num(b.l_minus), num(b.l_plus)]);
        }
        if config.analysis.mode_columns {
            row.extend(traj.states[i].coeffs().iter().map(|c| num(*c)));
        }
        rows.push(row);
    }
    w.csv("trajectory.csv", &columns, &rows)?;
    let ledger_rows: Vec<Vec<String>> = traj
        .ledger
        .entries
        .iter()
        .map(|e| {
            let cells: Vec<String> = e.support.iter().map(|j| j.to_string()).collect();
            vec![num(e.t), num(e.penalty_mass), cells.join(" ")]
        })
        .collect();
    w.csv("ledger.csv", &["t".into(), "penalty_mass".into(), "support".into()], &ledger_rows)?;
    if let Some(last) = traj.states.last() {
        w.write("final_state.bin", &snapshot::encode(last))?;
    }
    let incomplete = !traj.is_complete();
    w.report(
        None,
        incomplete,
        traj.failure.as_ref().map(|e| e.to_string()),
        json!({
            "steps_taken": traj.steps_taken,
            "recorded": traj.times.len(),
            "total_penalty_mass": traj.ledger.total_mass,
            "warnings": traj.warnings,
        }),
    )?;
    Ok((None, incomplete))
}

fn contract(config: &ExperimentConfig, w: &mut Writer) -> Run {
    let (basis, sim) = simulation(config)?;
    let rho1 = config.initial.build(&basis);
    let rho2 = config.analysis.second_initial.build(&basis);
    let series = contraction_experiment(&sim, &rho1, &rho2, 0)?;
    let rows: Vec<Vec<String>> = series
        .times
        .iter()
        .zip(&series.distances)
        .map(|(t, d)| vec![num(*t), num(*d)])
        .collect();
    w.csv("contraction.csv", &["t".into(), "hminus1_distance_sq".into()], &rows)?;
    let incomplete = series.failure.is_some();
    let verdict = if series.is_non_increasing(config.analysis.contraction_tolerance) {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    w.report(
        Some(verdict),
        incomplete,
        series.failure.clone(),
        json!({
            "tolerance": config.analysis.contraction_tolerance,
            "steps": series.steps,
            "max_upward_step": series.max_upward_step,
            "max_relative_upward_step": series.max_relative_upward_step,
            "bitwise_equal": series.bitwise_equal,
        }),
    )?;
    Ok((Some(verdict), incomplete))
}

fn dynamics_chains(sim: &Simulation, rho0: &DensityField, config: &ExperimentConfig) -> Result<MeasureSamples, CliError> {
    let a = &config.analysis;
    let burn = a.burn_in_steps;
    let n = sim.config().n_steps();
    let every = a.sample_every;
    let chains: Vec<Result<Vec<Vec<f64>>, repton_core::Error>> = ensemble::map_indexed(a.n_trajectories, |i| {
        let mut stepper = sim.stepper(i as u64)?;
        let mut rho = sim.prepare_initial(rho0)?;
        let mut out = Vec::with_capacity((n / every) as usize);
        for step in 1..=burn + n {
            stepper.step_in_place(&mut rho)?;
            if step > burn && (step - burn).is_multiple_of(every) {
                let mut x = rho.coeffs().to_vec();
                x[0] = 0.0;
                out.push(x);
            }
        }
        Ok(out)
    });
    let chains = chains.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(MeasureSamples::new("dynamics", chains))
}

fn gibbs(config: &ExperimentConfig, w: &mut Writer) -> Run {
    let (basis, sim) = simulation(config)?;
    let noise = sim.noise().clone();
    let value = match config.model.mobility {
        MobilityConfig::Constant { value } => value,
        MobilityConfig::Inverse { .. } => {
            return Err(repton_core::Error::Precondition("the Gibbs form needs constant mobility".into()).into())
        }
    };
    let sigma = match noise.amplitude {
        Amplitude::Additive { sigma } => sigma,
        Amplitude::Multiplicative { .. } => {
            return Err(repton_core::Error::Precondition("the Gibbs form needs additive noise".into()).into())
        }
    };
    if sigma == 0.0 {
        return Err(repton_core::Error::NoStationaryMeasure("zero noise: the dynamics are not ergodic".into()).into());
    }
    let reference = gaussian_reference(config.model.alpha, &noise, &basis)?;
    let rho0 = config.initial.build(&basis);
    let mass = sim.prepare_initial(&rho0)?.mass();
    let energy = BulkEnergy::new(&basis, *sim.model(), mass, value / (sigma * sigma));
    let e = |x: &[f64]| energy.evaluate(x);
    let a = &config.analysis;
    let chain_cfg = ChainConfig {
        beta: a.chain_beta,
        burn_in: a.chain_burn_in,
        n_samples: a.chain_samples,
        thin: a.chain_thin,
        adapt: true,
        target_acceptance: 0.3,
        seed: config.seed,
    };
    let chains = gibbs_sample_chains(&reference, &e, &chain_cfg, a.n_chains)?;
    let acceptance: Vec<f64> = chains.iter().map(|c| c.acceptance_rate).collect();
    let pcn = MeasureSamples::new("pcn", chains.into_iter().map(|c| c.samples).collect());
    let dynamics = dynamics_chains(&sim, &rho0, config)?;
    let compare = CompareConfig {
        threshold: a.threshold,
        min_ess: a.min_ess,
    };
    let report = compare_invariant_measures(&dynamics, &pcn, &a.observables, &noise, &compare)?;
    let columns: Vec<String> = [
        "observable", "dynamics_mean", "dynamics_se", "dynamics_ess", "pcn_mean", "pcn_se", "pcn_ess", "z", "verdict",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let rows: Vec<Vec<String>> = report
        .observables
        .iter()
        .map(|o| {
            vec![
                o.observable.clone(),
                num(o.first.mean),
                num(o.first.se),
                num(o.first.ess),
                num(o.second.mean),
                num(o.second.se),
                num(o.second.ess),
                num(o.z),
                to_value(&o.verdict).as_str().unwrap_or_default().to_string(),
            ]
        })
        .collect();
    w.csv("comparison.csv", &columns, &rows)?;
    w.report(
        Some(report.verdict),
        false,
        None,
        json!({
            "comparison": report,
            "inverse_temperature": value / (sigma * sigma),
            "gaussian_variances": reference.variances,
            "pcn_acceptance": acceptance,
        }),
    )?;
    Ok((Some(report.verdict), false))
}

fn scan(config: &ExperimentConfig, w: &mut Writer) -> Run {
    let basis = SpectralBasis::new(config.n_modes)?;
    let noise = config.noise.build(config.seed);
    let reference = gaussian_reference(config.model.alpha, &noise, &basis)?;
    let a = &config.analysis;
    let samples = gamma_sample_set(&reference, a.scan_mass, a.scan_samples, config.seed);
    let psi: Vec<ScanObservable> = a.observables.iter().map(|o| ScanObservable::Observable(*o)).collect();
    let table = measure_convergence_scan(&basis, &samples, &a.scan_levels, config.model.base, &psi);
    let mut columns = vec!["n".to_string(), "support_fraction".to_string()];
    for label in &table.observables {
        columns.push(format!("estimate_{label}"));
        columns.push(format!("normalized_{label}"));
    }
    let mut rows = Vec::new();
    for r in table.rows.iter().chain(std::iter::once(&table.limit)) {
        let mut row = vec![r.n.map_or("limit".to_string(), |n| n.to_string()), num(r.support_fraction)];
        for (e, m) in r.estimates.iter().zip(&r.normalized) {
            row.push(num(*e));
            row.push(num(*m));
        }
        rows.push(row);
    }
    w.csv("scan.csv", &columns, &rows)?;
    let verdict = if table.weights_monotone() && table.estimates_monotone() {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    w.report(Some(verdict), false, None, to_value(&table))?;
    Ok((Some(verdict), false))
}

fn check(config: &ExperimentConfig, w: &mut Writer) -> Run {
    let fixture = config.fixture();
    let cfg = CheckConfig {
        n_triples: config.analysis.n_triples,
        seed: config.seed,
        ..CheckConfig::default()
    };
    let report = check_assumptions(&fixture, &cfg)?;
    let verdict = if report.monotonicity.violations == 0 && report.hemicontinuity.continuous {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    let rows = vec![vec![
        num(report.monotonicity.fitted_c),
        report.monotonicity.violations.to_string(),
        num(report.coercivity.c2_h),
        num(report.coercivity.c2_v),
        num(report.boundedness.c3),
        num(report.hemicontinuity.worst_ratio),
    ]];
    let columns: Vec<String> = ["fitted_c", "violations", "c2_h", "c2_v", "c3", "hemicontinuity_ratio"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    w.csv("constants.csv", &columns, &rows)?;
    w.report(Some(verdict), false, None, to_value(&report))?;
    Ok((Some(verdict), false))
}
