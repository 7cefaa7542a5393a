//! Deterministic control flow `du/dt = εΔu + Δφ^ε(u) + g`, its limit
//! equilibrium `u∞ = ((−Δ)^{-1} g) ∨ 1`, the comparison principle, and the
//! closeness of noisy and controlled paths on the noise-tube event.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::{hminus1_norm, Field};
use crate::monotone::YosidaParams;
use crate::noise::{check_nondegenerate, Drift, NoiseModel, SeededNoise};
use crate::parallel;
use crate::sde::{explicit_update, integrate, integrate_coupled, step_implicit, SolverConfig};

/// One implicit step of the controlled flow: `Y − dt Δ_h F(Y) = u + dt g`.
pub fn det_step(u: &Field, g: &Field, cfg: &SolverConfig) -> Result<Field> {
    step_implicit(u, &g.scale(cfg.dt), cfg)
}

/// `((−Δ_h)^{-1} g) ∨ 1`; requires `g > 1` nodewise.
pub fn fixed_point(g: &Field) -> Result<Field> {
    check_nondegenerate(g)?;
    Ok(g.inverse_laplacian().max_with(1.0))
}

/// Stationary state of the regularised flow: `F(u) = (−Δ_h)^{-1} g` nodewise.
pub fn regularized_equilibrium(g: &Field, params: &YosidaParams) -> Field {
    g.inverse_laplacian().map(|v| params.flux_inverse(v))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetTrajectory {
    pub times: Vec<f64>,
    pub snapshots: Vec<Field>,
    /// `‖u(t) − u∞‖_{-1}` at each saved time; absent when g is degenerate
    /// and no equilibrium is defined.
    pub distances: Option<Vec<f64>>,
}

impl DetTrajectory {
    pub fn terminal(&self) -> &Field {
        self.snapshots
            .last()
            .expect("initial snapshot is always saved")
    }
}

/// Integrates the controlled flow to time `t_end`, saving every
/// `cfg.save_every` steps.
pub fn det_solve(x0: &Field, g: &Field, cfg: &SolverConfig, t_end: f64) -> Result<DetTrajectory> {
    x0.ensure_same_grid(g)?;
    let cfg = cfg.clone().with_horizon(t_end);
    let target = fixed_point(g).ok();
    let mut times = Vec::new();
    let mut snapshots = Vec::new();
    let mut distances = target.as_ref().map(|_| Vec::new());
    integrate(x0, &Drift(g), &cfg, |step, u| {
        if step.is_multiple_of(cfg.save_every) {
            times.push(step as f64 * cfg.dt);
            snapshots.push(u.clone());
            if let (Some(d), Some(t)) = (distances.as_mut(), target.as_ref()) {
                d.push(distance(u, t));
            }
        }
    })?;
    Ok(DetTrajectory {
        times,
        snapshots,
        distances,
    })
}

fn distance(u: &Field, v: &Field) -> f64 {
    let d: Vec<f64> = u
        .values()
        .iter()
        .zip(v.values())
        .map(|(a, b)| a - b)
        .collect();
    hminus1_norm(u.grid().h(), &d)
}

/// First saved time at which the controlled flow from `x0` is within
/// `radius` of u∞ in H⁻¹.
pub fn first_entrance_time(
    x0: &Field,
    g: &Field,
    cfg: &SolverConfig,
    radius: f64,
    t_max: f64,
) -> Result<Option<f64>> {
    let traj = det_solve(x0, g, cfg, t_max)?;
    let d = traj
        .distances
        .ok_or_else(|| invalid("g", "entrance time needs a non-degenerate forcing"))?;
    Ok(traj
        .times
        .iter()
        .zip(d)
        .find(|(_, d)| *d < radius)
        .map(|(t, _)| *t))
}

pub const COMPARISON_SLACK: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub t: f64,
    pub node: usize,
    /// `x_i − y_i > 0`
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub passed: bool,
    pub checked_times: usize,
    pub first_violation: Option<Violation>,
}

fn first_violation(x: &Field, y: &Field, t: f64) -> Option<Violation> {
    x.values()
        .iter()
        .zip(y.values())
        .enumerate()
        .find(|(_, (a, b))| *a - *b > COMPARISON_SLACK)
        .map(|(node, (a, b))| Violation {
            t,
            node,
            gap: a - b,
        })
}

fn ordered(x0: &Field, y0: &Field) -> Result<()> {
    x0.ensure_same_grid(y0)?;
    match x0.values().iter().zip(y0.values()).position(|(a, b)| a > b) {
        Some(node) => Err(Error::Unordered { node }),
        None => Ok(()),
    }
}

/// Runs the controlled flow from `x0 ≤ y0` and checks `u^x ≤ u^y` at every
/// saved time, with slack [`COMPARISON_SLACK`].
pub fn comparison_check(
    x0: &Field,
    y0: &Field,
    g: &Field,
    cfg: &SolverConfig,
    t_end: f64,
) -> Result<ComparisonReport> {
    ordered(x0, y0)?;
    x0.ensure_same_grid(g)?;
    let cfg = cfg.clone().with_horizon(t_end);
    let mut report = ComparisonReport {
        passed: true,
        checked_times: 0,
        first_violation: None,
    };
    integrate_coupled(x0, y0, &Drift(g), &cfg, |step, x, y| {
        if step.is_multiple_of(cfg.save_every) {
            report.checked_times += 1;
            if report.first_violation.is_none() {
                report.first_violation = first_violation(x, y, step as f64 * cfg.dt);
            }
        }
    })?;
    report.passed = report.first_violation.is_none();
    Ok(report)
}

/// The same check for the forward-Euler update with no stability bound
/// enforced. Serves as a negative control: above the bound the scheme is
/// not monotone and order is lost.
pub fn comparison_check_explicit_unchecked(
    x0: &Field,
    y0: &Field,
    g: &Field,
    params: &YosidaParams,
    dt: f64,
    n_steps: usize,
) -> Result<ComparisonReport> {
    ordered(x0, y0)?;
    let inc = g.scale(dt);
    let mut x = x0.clone();
    let mut y = y0.clone();
    let mut report = ComparisonReport {
        passed: true,
        checked_times: 1,
        first_violation: first_violation(&x, &y, 0.0),
    };
    for step in 1..=n_steps {
        x = explicit_update(&x, &inc, params, dt)?;
        y = explicit_update(&y, &inc, params, dt)?;
        report.checked_times += 1;
        if report.first_violation.is_none() {
            report.first_violation = first_violation(&x, &y, step as f64 * dt);
        }
        if !(x.norm_linf().is_finite() && y.norm_linf().is_finite()) {
            break;
        }
    }
    report.passed = report.first_violation.is_none();
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TubeClosenessParams {
    /// Horizon S.
    pub horizon: f64,
    /// Largest tube radius; the levels are β, β/2, β/4.
    pub beta: f64,
    /// L∞ radius R that the initial datum must respect.
    pub radius: f64,
    /// Number of candidate noise paths drawn.
    pub budget: usize,
    /// Cap on simulated accepted paths per level.
    pub max_accepted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TubeClosenessReport {
    pub beta: Vec<f64>,
    pub attempted: usize,
    pub accepted: Vec<usize>,
    pub distances: Vec<Vec<f64>>,
    pub mean_distance: Vec<Option<f64>>,
    /// Log-log slope of mean distance against β; `None` when fewer than two
    /// levels have accepted paths.
    pub slope_estimate: Option<f64>,
    pub inconclusive: bool,
}

/// Rejection-samples noise paths with `max_n ‖W(t_n) − t_n g‖₂ ≤ β` and
/// measures `‖X_S − u_S‖_{-1}` between the noisy and the controlled flow.
pub fn tube_closeness(
    x0: &Field,
    model: &NoiseModel,
    cfg: &SolverConfig,
    params: &TubeClosenessParams,
    workers: usize,
) -> Result<TubeClosenessReport> {
    if !(params.beta > 0.0 && params.beta <= 1.0) {
        return Err(invalid(
            "beta",
            format!("must lie in (0, 1], got {}", params.beta),
        ));
    }
    if x0.norm_linf() > params.radius {
        return Err(invalid(
            "x0",
            format!("‖x0‖_∞ exceeds R = {}", params.radius),
        ));
    }
    let g = model.forcing();
    let cfg = cfg.clone().with_horizon(params.horizon);
    cfg.validate(x0.grid())?;
    let det_terminal = integrate(x0, &Drift(g), &cfg, |_, _| {})?;

    let sups = model.tube_sups(params.horizon, cfg.dt, params.budget, cfg.seed, workers);
    let levels = [params.beta, params.beta / 2.0, params.beta / 4.0];
    let mut to_run: Vec<usize> = Vec::new();
    let mut per_level: Vec<Vec<usize>> = Vec::new();
    for &b in &levels {
        let idx: Vec<usize> = sups
            .iter()
            .enumerate()
            .filter(|(_, &s)| s <= b)
            .map(|(i, _)| i)
            .take(params.max_accepted)
            .collect();
        to_run.extend(&idx);
        per_level.push(idx);
    }
    to_run.sort_unstable();
    to_run.dedup();

    let dists = parallel::map_indexed(workers, to_run.len(), |j| {
        let seed = cfg.seed.wrapping_add(to_run[j] as u64);
        integrate(x0, &SeededNoise { model, seed }, &cfg, |_, _| {})
            .map(|xs| distance(&xs, &det_terminal))
    });
    let mut by_index = std::collections::BTreeMap::new();
    for (j, d) in dists.into_iter().enumerate() {
        by_index.insert(to_run[j], d?);
    }

    let distances: Vec<Vec<f64>> = per_level
        .iter()
        .map(|idx| idx.iter().map(|i| by_index[i]).collect())
        .collect();
    let mean_distance: Vec<Option<f64>> = distances
        .iter()
        .map(|d| (!d.is_empty()).then(|| d.iter().sum::<f64>() / d.len() as f64))
        .collect();
    let pts: Vec<(f64, f64)> = levels
        .iter()
        .zip(&mean_distance)
        .filter_map(|(b, m)| m.filter(|&m| m > 0.0).map(|m| (b.ln(), m.ln())))
        .collect();
    let slope_estimate = (pts.len() >= 2).then(|| least_squares_slope(&pts));
    Ok(TubeClosenessReport {
        beta: levels.to_vec(),
        attempted: params.budget,
        accepted: distances.iter().map(Vec::len).collect(),
        inconclusive: slope_estimate.is_none(),
        distances,
        mean_distance,
        slope_estimate,
    })
}

pub(crate) fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}
