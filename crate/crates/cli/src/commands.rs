//! One function per subcommand. Each returns the suite result as JSON, a
//! pass flag, and any tabular or field artifacts.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use spm_core::det::{
    det_solve, first_entrance_time, fixed_point, tube_closeness, TubeClosenessParams,
};
use spm_core::ergodics::{
    accessibility, contraction_suite, e_property_probe, empirical_invariant, lower_bound,
    occupation_average, random_pairs, CappedDistance, LipschitzFunctional, NoiseSharing,
    OccupationSpec, DEFAULT_BATCHES,
};
use spm_core::sde::simulate;
use spm_core::Field;

use crate::config::Resolved;
use crate::fields::FieldSpec;
use crate::CliError;

/// The output of one subcommand before it is written to disk.
pub struct Outcome {
    pub result: Value,
    pub parameters: Value,
    pub passed: bool,
    pub files: Vec<(String, Vec<u8>)>,
}

fn field_csv(field: &Field) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    field.write_csv(&mut buf)?;
    Ok(buf)
}

fn table_csv(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Vec<u8> {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out.into_bytes()
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("results serialise")
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateParams {
    pub x0: FieldSpec,
}

impl Default for SimulateParams {
    fn default() -> Self {
        SimulateParams {
            x0: FieldSpec::Constant(0.0),
        }
    }
}

pub fn simulate_cmd(r: &Resolved) -> Result<Outcome, CliError> {
    let p: SimulateParams = r.config.parameters()?;
    let x0 = p.x0.build(&r.grid, &r.model)?;
    let traj = simulate(&x0, &r.model, &r.solver)?;
    let mut series = Vec::new();
    traj.write_summaries_csv(&mut series)?;
    let last = traj.summaries.last().expect("initial summary");
    Ok(Outcome {
        result: json!({
            "n_steps": r.solver.n_steps(),
            "snapshots": traj.snapshots.len(),
            "terminal": to_value(last),
        }),
        parameters: to_value(&p),
        passed: true,
        files: vec![
            ("series.csv".into(), series),
            ("field_initial.csv".into(), field_csv(&x0)?),
            ("field_terminal.csv".into(), field_csv(traj.terminal())?),
        ],
    })
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeterministicParams {
    pub x0: FieldSpec,
}

impl Default for DeterministicParams {
    fn default() -> Self {
        DeterministicParams {
            x0: FieldSpec::Constant(4.0),
        }
    }
}

pub fn deterministic_cmd(r: &Resolved) -> Result<Outcome, CliError> {
    let p: DeterministicParams = r.config.parameters()?;
    let x0 = p.x0.build(&r.grid, &r.model)?;
    let g = r.model.forcing();
    let target = fixed_point(g)?;
    let traj = det_solve(&x0, g, &r.solver, r.solver.t_end)?;
    let dist = traj.distances.clone().unwrap_or_default();
    let rows = traj
        .times
        .iter()
        .zip(&traj.snapshots)
        .zip(&dist)
        .map(|((t, u), d)| {
            vec![
                t.to_string(),
                d.to_string(),
                u.norm_l2().to_string(),
                u.norm_linf().to_string(),
            ]
        });
    let series = table_csv(&["t", "distance", "l2", "linf"], rows);
    Ok(Outcome {
        result: json!({
            "T": r.solver.t_end,
            "initial_distance": dist.first(),
            "terminal_distance": dist.last(),
        }),
        parameters: to_value(&p),
        passed: true,
        files: vec![
            ("series.csv".into(), series),
            ("field_terminal.csv".into(), field_csv(traj.terminal())?),
            ("field_fixed_point.csv".into(), field_csv(&target)?),
        ],
    })
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoParams {}

pub fn fixed_point_cmd(r: &Resolved) -> Result<Outcome, CliError> {
    let p: NoParams = r.config.parameters()?;
    let g = r.model.forcing();
    let u = fixed_point(g)?;
    let v = g.inverse_laplacian();
    let plateau = u.values().iter().filter(|&&x| x == 1.0).count();
    Ok(Outcome {
        result: json!({
            "min": u.values().iter().cloned().fold(f64::INFINITY, f64::min),
            "max": u.norm_linf(),
            "plateau_nodes": plateau,
            "h": r.grid.h(),
        }),
        parameters: to_value(&p),
        passed: true,
        files: vec![
            ("field_fixed_point.csv".into(), field_csv(&u)?),
            ("field_selection.csv".into(), field_csv(&v)?),
            ("field_forcing.csv".into(), field_csv(g)?),
        ],
    })
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContractionParams {
    pub n_pairs: usize,
    pub n_paths: usize,
    pub amplitude: f64,
    /// Seed of the random initial pairs; defaults to the run seed.
    pub pair_seed: Option<u64>,
}

impl Default for ContractionParams {
    fn default() -> Self {
        ContractionParams {
            n_pairs: 20,
            n_paths: 50,
            amplitude: 4.0,
            pair_seed: None,
        }
    }
}

pub fn contraction_cmd(r: &Resolved, workers: usize) -> Result<Outcome, CliError> {
    let p: ContractionParams = r.config.parameters()?;
    let pairs = random_pairs(
        &r.grid,
        p.n_pairs,
        p.amplitude,
        p.pair_seed.unwrap_or(r.config.seed),
    );
    let report = contraction_suite(&pairs, &r.model, &r.solver, p.n_paths, workers)?;
    Ok(Outcome {
        passed: report.passed,
        result: to_value(&report),
        parameters: to_value(&p),
        files: vec![],
    })
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OccupationParams {
    pub x0: FieldSpec,
    #[serde(rename = "R")]
    pub radius: f64,
    pub delta: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub n_paths: usize,
}

impl Default for OccupationParams {
    fn default() -> Self {
        OccupationParams {
            x0: FieldSpec::Constant(4.0),
            radius: 4.0,
            delta: 0.1,
            horizon: 5.0,
            n_paths: 100,
        }
    }
}

pub fn occupation_cmd(r: &Resolved, workers: usize) -> Result<Outcome, CliError> {
    let p: OccupationParams = r.config.parameters()?;
    let spec = OccupationSpec::new(p.radius, p.delta, p.horizon)?;
    let x0 = p.x0.build(&r.grid, &r.model)?;
    let report = occupation_average(&x0, &spec, &r.model, &r.solver, p.n_paths, workers)?;
    Ok(Outcome {
        passed: report.passed,
        result: to_value(&report),
        parameters: to_value(&p),
        files: vec![],
    })
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AccessibilityParams {
    pub x0: FieldSpec,
    /// Horizon S; chosen by a pilot run of the controlled flow when absent.
    #[serde(rename = "S")]
    pub horizon: Option<f64>,
    pub delta: f64,
    #[serde(rename = "R")]
    pub radius: f64,
    pub n_paths: usize,
    /// Longest pilot run.
    pub pilot_t_max: f64,
}

impl Default for AccessibilityParams {
    fn default() -> Self {
        AccessibilityParams {
            x0: FieldSpec::Constant(3.0),
            horizon: None,
            delta: 0.1,
            radius: 4.0,
            n_paths: 400,
            pilot_t_max: 50.0,
        }
    }
}

pub fn accessibility_cmd(r: &Resolved, workers: usize) -> Result<Outcome, CliError> {
    let p: AccessibilityParams = r.config.parameters()?;
    let x0 = p.x0.build(&r.grid, &r.model)?;
    let horizon = match p.horizon {
        Some(s) => s,
        None => {
            let pilot =
                first_entrance_time(&x0, r.model.forcing(), &r.solver, p.delta, p.pilot_t_max)?;
            match pilot {
                Some(s) if s > 0.0 => s,
                // already inside: one saved interval
                Some(_) => r.solver.dt * r.solver.save_every as f64,
                None => {
                    return Ok(Outcome {
                        result: json!({
                            "inconclusive": true,
                            "reason": "the controlled flow did not enter the delta-ball within pilot_t_max",
                        }),
                        parameters: to_value(&p),
                        passed: false,
                        files: vec![],
                    })
                }
            }
        }
    };
    let report = accessibility(
        &x0, &r.model, &r.solver, horizon, p.delta, p.radius, p.n_paths, workers,
    )?;
    Ok(Outcome {
        passed: report.passed,
        result: to_value(&report),
        parameters: to_value(&p),
        files: vec![],
    })
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LowerBoundParams {
    pub x0: FieldSpec,
    pub target: FieldSpec,
    pub delta: f64,
    #[serde(rename = "T_list")]
    pub horizons: Vec<f64>,
    pub n_paths: usize,
}

impl Default for LowerBoundParams {
    fn default() -> Self {
        LowerBoundParams {
            x0: FieldSpec::Constant(3.0),
            target: FieldSpec::Named("fixed-point".into()),
            delta: 0.1,
            horizons: vec![5.0, 10.0, 20.0],
            n_paths: 100,
        }
    }
}

pub fn lower_bound_cmd(r: &Resolved, workers: usize) -> Result<Outcome, CliError> {
    let p: LowerBoundParams = r.config.parameters()?;
    let x0 = p.x0.build(&r.grid, &r.model)?;
    let target = p.target.build(&r.grid, &r.model)?;
    let report = lower_bound(
        &x0,
        &target,
        &r.model,
        &r.solver,
        p.delta,
        &p.horizons,
        p.n_paths,
        workers,
    )?;
    let d = &report.details;
    let rows = (0..p.horizons.len()).map(|i| {
        vec![
            p.horizons[i].to_string(),
            d["estimates"][i].to_string(),
            d["ci_low"][i].to_string(),
            d["ci_high"][i].to_string(),
        ]
    });
    let series = table_csv(&["T", "estimate", "ci_low", "ci_high"], rows);
    Ok(Outcome {
        passed: report.passed,
        result: to_value(&report),
        parameters: to_value(&p),
        files: vec![("series.csv".into(), series)],
    })
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EPropertyParams {
    pub n_pairs: usize,
    pub amplitude: f64,
    pub times: Vec<f64>,
    pub n_paths: usize,
    /// Cap of the functional `min(cap, ‖u‖_{-1})`.
    pub cap: f64,
    pub pair_seed: Option<u64>,
}

impl Default for EPropertyParams {
    fn default() -> Self {
        EPropertyParams {
            n_pairs: 10,
            amplitude: 3.0,
            times: vec![0.1, 0.5, 1.0, 2.0],
            n_paths: 50,
            cap: 1.0,
            pair_seed: None,
        }
    }
}

pub fn e_property_cmd(r: &Resolved, workers: usize) -> Result<Outcome, CliError> {
    let p: EPropertyParams = r.config.parameters()?;
    if !(p.cap > 0.0) {
        return Err(CliError::Config(
            "experiment.parameters.cap must be positive".into(),
        ));
    }
    let pairs = random_pairs(
        &r.grid,
        p.n_pairs,
        p.amplitude,
        p.pair_seed.unwrap_or(r.config.seed),
    );
    let f = CappedDistance::from_origin(&r.grid, p.cap);
    let fs: [&dyn LipschitzFunctional; 1] = [&f];
    let report = e_property_probe(
        &pairs, &fs, &r.model, &r.solver, &p.times, p.n_paths, workers,
    )?;
    let rows = report.details["cells"]
        .as_array()
        .map(|cells| {
            cells
                .iter()
                .map(|c| {
                    [
                        "pair",
                        "functional",
                        "t",
                        "gap",
                        "std_err",
                        "bound",
                        "holds",
                    ]
                    .iter()
                    .map(|k| c[*k].to_string())
                    .collect()
                })
                .collect::<Vec<Vec<String>>>()
        })
        .unwrap_or_default();
    let series = table_csv(
        &[
            "pair",
            "functional",
            "t",
            "gap",
            "std_err",
            "bound",
            "holds",
        ],
        rows,
    );
    Ok(Outcome {
        passed: report.passed,
        result: to_value(&report),
        parameters: to_value(&p),
        files: vec![("series.csv".into(), series)],
    })
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InvariantParams {
    pub x0_list: Vec<FieldSpec>,
    #[serde(rename = "T_long")]
    pub t_long: f64,
    /// Defaults to 20% of `T_long`.
    pub burn_in: Option<f64>,
    pub batches: usize,
    pub noise: NoiseSharing,
}

impl Default for InvariantParams {
    fn default() -> Self {
        InvariantParams {
            x0_list: vec![
                FieldSpec::Constant(-3.0),
                FieldSpec::Constant(0.0),
                FieldSpec::Constant(3.0),
            ],
            t_long: 100.0,
            burn_in: None,
            batches: DEFAULT_BATCHES,
            noise: NoiseSharing::Independent,
        }
    }
}

pub fn invariant_cmd(r: &Resolved, workers: usize) -> Result<Outcome, CliError> {
    let p: InvariantParams = r.config.parameters()?;
    let starts = p
        .x0_list
        .iter()
        .map(|s| s.build(&r.grid, &r.model))
        .collect::<Result<Vec<_>, _>>()?;
    let burn_in = p.burn_in.unwrap_or(0.2 * p.t_long);
    let report = empirical_invariant(
        &starts, &r.model, &r.solver, p.t_long, burn_in, p.batches, p.noise, workers,
    )?;
    Ok(Outcome {
        passed: report.passed,
        result: to_value(&report),
        parameters: to_value(&p),
        files: vec![],
    })
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClosenessParams {
    pub x0: FieldSpec,
    pub beta: f64,
    #[serde(rename = "R")]
    pub radius: f64,
    pub budget: usize,
    pub max_accepted: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TubeParams {
    #[serde(rename = "S")]
    pub horizon: f64,
    pub betas: Vec<f64>,
    pub n_paths: usize,
    /// Optional closeness study of noisy and controlled paths on the tube.
    pub closeness: Option<ClosenessParams>,
}

impl Default for TubeParams {
    fn default() -> Self {
        TubeParams {
            horizon: 0.5,
            betas: vec![1.0, 2.0, 4.0],
            n_paths: 10_000,
            closeness: None,
        }
    }
}

pub fn tube_cmd(r: &Resolved, workers: usize) -> Result<Outcome, CliError> {
    let p: TubeParams = r.config.parameters()?;
    if p.betas.is_empty() {
        return Err(CliError::Config(
            "experiment.parameters.betas must not be empty".into(),
        ));
    }
    let sweep = r.model.tube_sweep(
        p.horizon,
        &p.betas,
        r.solver.dt,
        p.n_paths,
        r.config.seed,
        workers,
    )?;
    let positive = sweep.estimates.iter().all(|e| e.ci_low > 0.0);
    let closeness = match &p.closeness {
        Some(c) => {
            let x0 = c.x0.build(&r.grid, &r.model)?;
            let params = TubeClosenessParams {
                horizon: p.horizon,
                beta: c.beta,
                radius: c.radius,
                budget: c.budget,
                max_accepted: c.max_accepted,
            };
            Some(tube_closeness(&x0, &r.model, &r.solver, &params, workers)?)
        }
        None => None,
    };
    let rows = sweep.betas.iter().zip(&sweep.estimates).map(|(b, e)| {
        vec![
            b.to_string(),
            e.estimate.to_string(),
            e.ci_low.to_string(),
            e.ci_high.to_string(),
            e.hits.to_string(),
        ]
    });
    let series = table_csv(&["beta", "estimate", "ci_low", "ci_high", "hits"], rows);
    Ok(Outcome {
        passed: sweep.monotone && positive,
        result: json!({ "sweep": to_value(&sweep), "closeness": to_value(&closeness) }),
        parameters: to_value(&p),
        files: vec![("series.csv".into(), series)],
    })
}
