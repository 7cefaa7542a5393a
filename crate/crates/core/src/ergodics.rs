//! Monte-Carlo harness for the ergodic theory of the regularised equation:
//! pathwise contraction, occupation of L∞ balls, accessibility of the
//! deterministic equilibrium, the time-averaged lower bound, an
//! equicontinuity probe, and cross-start comparison of long-run averages.
//!
//! Path `j` of a suite always uses seed `cfg.seed + j`; paths are evaluated
//! with [`parallel::map_indexed`] and reduced sequentially in index order, so
//! a report does not depend on the number of workers.
//!
//! Time integrals are left-endpoint sums over the saved snapshots
//! `t_k = k · save_every · dt < T`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::det::fixed_point;
use crate::error::{invalid, Result};
use crate::grid::{clip_distance_raw, Field, Grid};
use crate::monotone::varphi_functional;
use crate::noise::{Increments, NoiseModel, NoiseSpec, SeededNoise};
use crate::parallel;
use crate::sde::{hminus1_distance, integrate, integrate_coupled, SolverConfig};
use crate::stats::{batch_means, mean_se, wilson, ProbabilityEstimate, Z95};

/// Slack of the pathwise contraction check.
pub const CONTRACTION_SLACK: f64 = 1e-8;

/// Default number of batches for batch-means standard errors.
pub const DEFAULT_BATCHES: usize = 30;

/// Parameters of the occupation estimate for `C_δ(R)`, the δ-neighbourhood
/// (in H⁻¹) of the L∞ ball of radius R.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OccupationSpec {
    #[serde(rename = "R")]
    pub radius: f64,
    pub delta: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
}

impl OccupationSpec {
    pub fn new(radius: f64, delta: f64, horizon: f64) -> Result<Self> {
        let spec = OccupationSpec {
            radius,
            delta,
            horizon,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 3.0 && self.radius.is_finite()) {
            return Err(invalid("R", format!("must exceed 3, got {}", self.radius)));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(invalid(
                "delta",
                format!("must be positive, got {}", self.delta),
            ));
        }
        if !(self.horizon > 1.0 && self.horizon.is_finite()) {
            return Err(invalid("T", format!("must exceed 1, got {}", self.horizon)));
        }
        Ok(())
    }
}

/// Resolved run settings copied into every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub grid: Grid,
    pub noise: Option<NoiseSpec>,
    pub solver: SolverConfig,
}

impl ConfigEcho {
    pub fn new(model: &NoiseModel, cfg: &SolverConfig) -> Self {
        ConfigEcho {
            grid: *model.grid(),
            noise: model.spec().cloned(),
            solver: cfg.clone(),
        }
    }
}

/// Outcome of one suite.
///
/// For probability-type suites `estimate` is a proportion with a Wilson 95%
/// interval. For the scaling diagnostic it is a ratio, reported with a
/// degenerate interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErgodicsReport {
    pub suite: String,
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_paths: usize,
    pub n_timepoints: usize,
    pub passed: bool,
    pub details: Value,
    pub config: ConfigEcho,
}

impl ErgodicsReport {
    fn proportion(
        suite: &str,
        estimate: f64,
        n: usize,
        n_paths: usize,
        n_timepoints: usize,
        config: ConfigEcho,
    ) -> Self {
        let (ci_low, ci_high) = wilson(estimate, n);
        ErgodicsReport {
            suite: suite.to_string(),
            estimate,
            ci_low,
            ci_high,
            n_paths,
            n_timepoints,
            passed: false,
            details: Value::Null,
            config,
        }
    }

    /// Standard error implied by the interval half-width.
    pub fn std_err(&self) -> f64 {
        0.5 * (self.ci_high - self.ci_low) / Z95
    }
}

fn check_paths(n_paths: usize) -> Result<()> {
    if n_paths == 0 {
        return Err(invalid("n_paths", "must be positive"));
    }
    Ok(())
}

fn path_seed(cfg: &SolverConfig, j: usize) -> u64 {
    cfg.seed.wrapping_add(j as u64)
}

/// Integrates one path and returns `f` evaluated at the saved left
/// endpoints `t_k < T`.
fn left_endpoint_series<I, T>(
    x0: &Field,
    inc: &I,
    cfg: &SolverConfig,
    mut f: impl FnMut(&Field) -> T,
) -> Result<Vec<T>>
where
    I: Increments + ?Sized,
{
    let n_steps = cfg.n_steps();
    let mut out = Vec::with_capacity(n_steps / cfg.save_every + 1);
    integrate(x0, inc, cfg, |step, x| {
        if step < n_steps && step.is_multiple_of(cfg.save_every) {
            out.push(f(x));
        }
    })?;
    Ok(out)
}

/// Number of saved left endpoints in `[0, t)`.
fn timepoints_before(cfg: &SolverConfig, t: f64) -> usize {
    let steps = (t / cfg.dt).round() as usize;
    steps.div_ceil(cfg.save_every)
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Fraction of (pair, path) combinations with
/// `‖X^x_T − X^y_T‖_{-1} ≤ ‖x − y‖_{-1} + 1e-8` under common noise; the
/// details also audit every step for a nonincreasing distance.
///
/// Passes when every combination contracts and at least 99% of steps are
/// nonincreasing.
pub fn contraction_suite(
    pairs: &[(Field, Field)],
    model: &NoiseModel,
    cfg: &SolverConfig,
    n_paths: usize,
    workers: usize,
) -> Result<ErgodicsReport> {
    check_paths(n_paths)?;
    if pairs.is_empty() {
        return Err(invalid("pairs", "need at least one initial pair"));
    }
    for (x, y) in pairs {
        x.ensure_same_grid(y)?;
        x.ensure_same_grid(model.forcing())?;
    }
    cfg.validate(model.grid())?;
    let total = pairs.len() * n_paths;
    // (terminal ok, terminal excess, nonincreasing steps, steps)
    let runs = parallel::map_indexed(workers, total, |k| {
        let (p, j) = (k / n_paths, k % n_paths);
        let (x0, y0) = &pairs[p];
        let noise = SeededNoise {
            model,
            seed: path_seed(cfg, p * n_paths + j),
        };
        let d0 = hminus1_distance(x0, y0);
        let mut prev = d0;
        let mut good_steps = 0usize;
        let mut steps = 0usize;
        let (xt, yt) = integrate_coupled(x0, y0, &noise, cfg, |step, x, y| {
            if step > 0 {
                let d = hminus1_distance(x, y);
                steps += 1;
                if d <= prev + CONTRACTION_SLACK {
                    good_steps += 1;
                }
                prev = d;
            }
        })?;
        let excess = hminus1_distance(&xt, &yt) - d0;
        Ok::<_, crate::Error>((excess <= CONTRACTION_SLACK, excess, good_steps, steps))
    });
    let mut hits = 0;
    let mut worst = f64::NEG_INFINITY;
    let mut good = 0usize;
    let mut steps = 0usize;
    for r in runs {
        let (ok, excess, g, s) = r?;
        hits += ok as usize;
        worst = worst.max(excess);
        good += g;
        steps += s;
    }
    let estimate = hits as f64 / total as f64;
    let step_fraction = if steps == 0 {
        1.0
    } else {
        good as f64 / steps as f64
    };
    let mut report = ErgodicsReport::proportion(
        "contraction",
        estimate,
        total,
        total,
        cfg.n_steps() + 1,
        ConfigEcho::new(model, cfg),
    );
    report.passed = hits == total && step_fraction >= 0.99;
    report.details = json!({
        "pairs": pairs.len(),
        "paths_per_pair": n_paths,
        "slack": CONTRACTION_SLACK,
        "max_terminal_excess": worst,
        "nonincreasing_step_fraction": step_fraction,
        "steps_audited": steps,
    });
    Ok(report)
}

/// Time fraction spent in `C_δ(R)`, tested through the conservative
/// criterion `clip_distance(X_r, R) < δ`, averaged over paths.
///
/// The details carry the time mean of `(‖X_r‖_∞ − 1)₊²` as well.
pub fn occupation_average(
    x0: &Field,
    spec: &OccupationSpec,
    model: &NoiseModel,
    cfg: &SolverConfig,
    n_paths: usize,
    workers: usize,
) -> Result<ErgodicsReport> {
    spec.validate()?;
    check_paths(n_paths)?;
    x0.ensure_same_grid(model.forcing())?;
    let cfg = cfg.clone().with_horizon(spec.horizon);
    cfg.validate(x0.grid())?;
    let h = x0.grid().h();
    let runs = parallel::map_indexed(workers, n_paths, |j| {
        let noise = SeededNoise {
            model,
            seed: path_seed(&cfg, j),
        };
        left_endpoint_series(x0, &noise, &cfg, |x| {
            let inside = clip_distance_raw(h, x.values(), spec.radius) < spec.delta;
            let excess = (x.norm_linf() - 1.0).max(0.0).powi(2);
            (inside as u8 as f64, excess)
        })
    });
    let mut fractions = Vec::with_capacity(n_paths);
    let mut excess = Vec::with_capacity(n_paths);
    let mut n_timepoints = 0;
    for r in runs {
        let series = r?;
        n_timepoints = series.len();
        fractions.push(mean(&series.iter().map(|s| s.0).collect::<Vec<_>>()));
        excess.push(mean(&series.iter().map(|s| s.1).collect::<Vec<_>>()));
    }
    let estimate = mean(&fractions).clamp(0.0, 1.0);
    let ex = mean_se(&excess);
    let mut report = ErgodicsReport::proportion(
        "occupation",
        estimate,
        n_paths,
        n_paths,
        n_timepoints,
        ConfigEcho::new(model, &cfg),
    );
    report.passed = report.ci_low > 0.0;
    report.details = json!({
        "R": spec.radius,
        "delta": spec.delta,
        "T": spec.horizon,
        "excess_sq_time_mean": ex.mean,
        "excess_sq_std_err": ex.std_err,
    });
    Ok(report)
}

/// Time mean of `(‖X_r‖_∞ − 1)₊²` over `[0, T]` for each `T` in `horizons`,
/// from one set of paths run to the largest horizon.
///
/// `estimate` is the ratio of the largest to the smallest time mean; the
/// suite passes when every mean is finite and the ratio is at most 2.
pub fn energy_scaling(
    x0: &Field,
    horizons: &[f64],
    model: &NoiseModel,
    cfg: &SolverConfig,
    n_paths: usize,
    workers: usize,
) -> Result<ErgodicsReport> {
    check_paths(n_paths)?;
    let t_max = sorted_horizons(horizons)?;
    x0.ensure_same_grid(model.forcing())?;
    let cfg = cfg.clone().with_horizon(t_max);
    cfg.validate(x0.grid())?;
    let runs = parallel::map_indexed(workers, n_paths, |j| {
        let noise = SeededNoise {
            model,
            seed: path_seed(&cfg, j),
        };
        left_endpoint_series(x0, &noise, &cfg, |x| (x.norm_linf() - 1.0).max(0.0).powi(2))
    });
    let mut per_horizon: Vec<Vec<f64>> = vec![Vec::with_capacity(n_paths); horizons.len()];
    for r in runs {
        let series = r?;
        for (slot, &t) in per_horizon.iter_mut().zip(horizons) {
            slot.push(mean(&series[..timepoints_before(&cfg, t)]));
        }
    }
    let stats: Vec<_> = per_horizon.iter().map(|v| mean_se(v)).collect();
    let means: Vec<f64> = stats.iter().map(|s| s.mean).collect();
    let hi = means.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = means.iter().cloned().fold(f64::INFINITY, f64::min);
    let ratio = if lo > 0.0 {
        hi / lo
    } else if hi == 0.0 {
        1.0
    } else {
        f64::INFINITY
    };
    let finite = means.iter().all(|m| m.is_finite());
    Ok(ErgodicsReport {
        suite: "energy-scaling".into(),
        estimate: ratio,
        ci_low: ratio,
        ci_high: ratio,
        n_paths,
        n_timepoints: timepoints_before(&cfg, t_max),
        passed: finite && ratio <= 2.0,
        details: json!({
            "T": horizons,
            "time_mean": means,
            "std_err": stats.iter().map(|s| s.std_err).collect::<Vec<_>>(),
        }),
        config: ConfigEcho::new(model, &cfg),
    })
}

fn sorted_horizons(horizons: &[f64]) -> Result<f64> {
    if horizons.is_empty() {
        return Err(invalid("T_list", "need at least one horizon"));
    }
    if horizons.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
        return Err(invalid("T_list", "horizons must be positive"));
    }
    if horizons.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid("T_list", "horizons must be strictly increasing"));
    }
    Ok(*horizons.last().expect("nonempty"))
}

/// `P(‖X^{x0}_S − u∞‖_{-1} < 2δ)` with u∞ the equilibrium of the controlled
/// flow for the model's forcing. Requires `clip_distance(x0, R) < δ`.
/// Passes when the Wilson lower bound is positive.
#[allow(clippy::too_many_arguments)]
pub fn accessibility(
    x0: &Field,
    model: &NoiseModel,
    cfg: &SolverConfig,
    horizon: f64,
    delta: f64,
    radius: f64,
    n_paths: usize,
    workers: usize,
) -> Result<ErgodicsReport> {
    check_paths(n_paths)?;
    if !(delta > 0.0) {
        return Err(invalid("delta", "must be positive"));
    }
    x0.ensure_same_grid(model.forcing())?;
    let start = x0.clip_distance(radius)?;
    if !(start < delta) {
        return Err(invalid(
            "x0",
            format!(
                "clip distance {start} to the ball of radius {radius} is not below delta = {delta}"
            ),
        ));
    }
    let target = fixed_point(model.forcing())?;
    let cfg = cfg.clone().with_horizon(horizon);
    cfg.validate(x0.grid())?;
    let runs = parallel::map_indexed(workers, n_paths, |j| {
        let noise = SeededNoise {
            model,
            seed: path_seed(&cfg, j),
        };
        integrate(x0, &noise, &cfg, |_, _| {}).map(|x| hminus1_distance(&x, &target))
    });
    let mut dist = Vec::with_capacity(n_paths);
    for r in runs {
        dist.push(r?);
    }
    let hits = dist.iter().filter(|&&d| d < 2.0 * delta).count();
    let est = ProbabilityEstimate::from_hits(hits, n_paths);
    let mut report = ErgodicsReport::proportion(
        "accessibility",
        est.estimate,
        n_paths,
        n_paths,
        1,
        ConfigEcho::new(model, &cfg),
    );
    report.passed = report.ci_low > 0.0;
    report.details = json!({
        "S": horizon,
        "delta": delta,
        "R": radius,
        "hits": hits,
        "mean_distance": mean(&dist),
    });
    Ok(report)
}

/// Time fraction `(1/T) ∫_0^T 1{‖X_r − z‖_{-1} < 2δ} dr` averaged over paths,
/// for every `T` in `horizons` (same paths, nested windows).
///
/// `estimate` refers to the largest horizon. Passes when its Wilson lower
/// bound is positive and it is at least half the value at the smallest
/// horizon.
#[allow(clippy::too_many_arguments)]
pub fn lower_bound(
    x0: &Field,
    target: &Field,
    model: &NoiseModel,
    cfg: &SolverConfig,
    delta: f64,
    horizons: &[f64],
    n_paths: usize,
    workers: usize,
) -> Result<ErgodicsReport> {
    check_paths(n_paths)?;
    if !(delta > 0.0) {
        return Err(invalid("delta", "must be positive"));
    }
    let t_max = sorted_horizons(horizons)?;
    x0.ensure_same_grid(model.forcing())?;
    x0.ensure_same_grid(target)?;
    let cfg = cfg.clone().with_horizon(t_max);
    cfg.validate(x0.grid())?;
    let runs = parallel::map_indexed(workers, n_paths, |j| {
        let noise = SeededNoise {
            model,
            seed: path_seed(&cfg, j),
        };
        left_endpoint_series(x0, &noise, &cfg, |x| {
            (hminus1_distance(x, target) < 2.0 * delta) as u8 as f64
        })
    });
    let mut per_horizon: Vec<Vec<f64>> = vec![Vec::with_capacity(n_paths); horizons.len()];
    for r in runs {
        let series = r?;
        for (slot, &t) in per_horizon.iter_mut().zip(horizons) {
            slot.push(mean(&series[..timepoints_before(&cfg, t)]));
        }
    }
    let estimates: Vec<f64> = per_horizon
        .iter()
        .map(|v| mean(v).clamp(0.0, 1.0))
        .collect();
    let intervals: Vec<(f64, f64)> = estimates.iter().map(|&e| wilson(e, n_paths)).collect();
    let last = *estimates.last().expect("nonempty");
    let mut report = ErgodicsReport::proportion(
        "lower-bound",
        last,
        n_paths,
        n_paths,
        timepoints_before(&cfg, t_max),
        ConfigEcho::new(model, &cfg),
    );
    report.passed = report.ci_low > 0.0 && last >= 0.5 * estimates[0];
    report.details = json!({
        "delta": delta,
        "T": horizons,
        "estimates": estimates,
        "ci_low": intervals.iter().map(|c| c.0).collect::<Vec<_>>(),
        "ci_high": intervals.iter().map(|c| c.1).collect::<Vec<_>>(),
    });
    Ok(report)
}

/// Numerical form of the chain used in the uniqueness argument: by the
/// Markov property, `P(X_{r+S} ∈ B) ≥ γ · P(X_r ∈ C)`, so integrating over
/// `r ∈ [0, T − S]` gives
///
/// ```text
/// (1/T) ∫_0^T P(X_r ∈ B) dr  ≥  γ · (T − S)/T · (1/(T−S)) ∫_0^{T−S} P(X_r ∈ C) dr.
/// ```
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProductChain {
    pub lower_bound: f64,
    pub gamma: f64,
    pub occupation: f64,
    pub window_factor: f64,
    pub rhs: f64,
    /// Three combined standard errors.
    pub slack: f64,
    pub holds: bool,
}

/// Evaluates [`ProductChain`] from a lower-bound report over `[0, T]`, the
/// smallest accessibility estimate γ (horizon S) and an occupation report
/// over `[0, T − S]`.
pub fn product_chain(
    lower: &ErgodicsReport,
    gamma: &ErgodicsReport,
    occupation: &ErgodicsReport,
    horizon: f64,
    s: f64,
) -> ProductChain {
    let window_factor = ((horizon - s) / horizon).clamp(0.0, 1.0);
    let rhs = gamma.estimate * occupation.estimate * window_factor;
    // delta method for the product, plus the left-hand error
    let se_rhs = window_factor
        * ((occupation.estimate * gamma.std_err()).powi(2)
            + (gamma.estimate * occupation.std_err()).powi(2))
        .sqrt();
    let slack = 3.0 * (lower.std_err().powi(2) + se_rhs.powi(2)).sqrt();
    ProductChain {
        lower_bound: lower.estimate,
        gamma: gamma.estimate,
        occupation: occupation.estimate,
        window_factor,
        rhs,
        slack,
        holds: lower.estimate >= rhs - slack,
    }
}

/// A functional with a known Lipschitz constant in H⁻¹.
pub trait LipschitzFunctional: Sync {
    fn eval(&self, u: &Field) -> f64;
    fn lipschitz(&self) -> f64;
}

/// `u ↦ min(cap, ‖u − centre‖_{-1})`, Lipschitz constant 1.
#[derive(Debug, Clone, PartialEq)]
pub struct CappedDistance {
    pub centre: Field,
    pub cap: f64,
}

impl CappedDistance {
    pub fn from_origin(grid: &Grid, cap: f64) -> Self {
        CappedDistance {
            centre: grid.zeros(),
            cap,
        }
    }
}

impl LipschitzFunctional for CappedDistance {
    fn eval(&self, u: &Field) -> f64 {
        hminus1_distance(u, &self.centre).min(self.cap)
    }

    fn lipschitz(&self) -> f64 {
        1.0
    }
}

/// One cell of the equicontinuity probe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquicontinuityCell {
    pub pair: usize,
    pub functional: usize,
    pub t: f64,
    /// `|mean f(X^x_t) − mean f(X^y_t)|`
    pub gap: f64,
    pub std_err: f64,
    /// `[f]_Lip · ‖x − y‖_{-1}`
    pub bound: f64,
    pub holds: bool,
}

/// Estimates `|P_t f(x) − P_t f(y)|` with common random numbers and checks
/// it against `[f]_Lip ‖x − y‖_{-1}` plus three standard errors, for every
/// pair, functional and time. `estimate` is the fraction of cells that hold.
pub fn e_property_probe(
    pairs: &[(Field, Field)],
    functionals: &[&dyn LipschitzFunctional],
    model: &NoiseModel,
    cfg: &SolverConfig,
    times: &[f64],
    n_paths: usize,
    workers: usize,
) -> Result<ErgodicsReport> {
    check_paths(n_paths)?;
    if pairs.is_empty() || functionals.is_empty() {
        return Err(invalid("e-property", "need pairs and functionals"));
    }
    let t_max = sorted_horizons(times)?;
    for (x, y) in pairs {
        x.ensure_same_grid(y)?;
        x.ensure_same_grid(model.forcing())?;
    }
    let cfg = cfg.clone().with_horizon(t_max);
    cfg.validate(model.grid())?;
    let steps: Vec<usize> = times
        .iter()
        .map(|t| (t / cfg.dt).round() as usize)
        .collect();
    let n_f = functionals.len();
    let n_t = times.len();
    // per (pair, path): differences indexed [time][functional]
    let runs = parallel::map_indexed(workers, pairs.len() * n_paths, |k| {
        let (p, j) = (k / n_paths, k % n_paths);
        let (x0, y0) = &pairs[p];
        let noise = SeededNoise {
            model,
            seed: path_seed(&cfg, j),
        };
        let mut diffs = vec![0.0; n_t * n_f];
        integrate_coupled(x0, y0, &noise, &cfg, |step, x, y| {
            for (ti, _) in steps.iter().enumerate().filter(|(_, &s)| s == step) {
                for (fi, f) in functionals.iter().enumerate() {
                    diffs[ti * n_f + fi] = f.eval(x) - f.eval(y);
                }
            }
        })?;
        Ok::<_, crate::Error>(diffs)
    });
    let mut all = Vec::with_capacity(runs.len());
    for r in runs {
        all.push(r?);
    }
    let mut cells = Vec::with_capacity(pairs.len() * n_f * n_t);
    for (p, (x0, y0)) in pairs.iter().enumerate() {
        let d0 = hminus1_distance(x0, y0);
        for (fi, f) in functionals.iter().enumerate() {
            for (ti, &t) in times.iter().enumerate() {
                let sample: Vec<f64> = (0..n_paths)
                    .map(|j| all[p * n_paths + j][ti * n_f + fi])
                    .collect();
                let est = mean_se(&sample);
                let se = if n_paths > 1 { est.std_err } else { 0.0 };
                let gap = est.mean.abs();
                let bound = f.lipschitz() * d0;
                cells.push(EquicontinuityCell {
                    pair: p,
                    functional: fi,
                    t,
                    gap,
                    std_err: se,
                    bound,
                    holds: gap <= bound + 3.0 * se,
                });
            }
        }
    }
    let held = cells.iter().filter(|c| c.holds).count();
    let mut report = ErgodicsReport::proportion(
        "e-property",
        held as f64 / cells.len() as f64,
        cells.len(),
        n_paths,
        n_t,
        ConfigEcho::new(model, &cfg),
    );
    report.passed = held == cells.len();
    report.details = json!({ "cells": cells });
    Ok(report)
}

/// Names of the functionals in [`battery`], in order.
pub const BATTERY: [&str; 5] = ["l2", "hm1", "linf", "varphi", "mode1"];

/// `‖u‖₂, ‖u‖_{-1}, ‖u‖_∞, Σ h ψ(u_i), ⟨u, cos(πx/2)⟩`.
pub fn battery(u: &Field, mode1: &Field) -> [f64; 5] {
    [
        u.norm_l2(),
        u.norm_hminus1(),
        u.norm_linf(),
        varphi_functional(u),
        u.inner_l2(mode1).unwrap_or(f64::NAN),
    ]
}

/// How the runs from different starting points are driven.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseSharing {
    /// Every start uses seed `cfg.seed`.
    Common,
    /// Start `i` uses seed `cfg.seed + i`.
    Independent,
}

/// Long-run averages of the functional [`battery`] from each start after
/// discarding `[0, burn_in)`, with batch-means errors over `n_batches`
/// batches. For every functional and pair of starts the discrepancy
/// `|m_a − m_b| / sqrt(se_a² + se_b²)` is compared with 3; `estimate` is the
/// fraction of comparisons within that bound.
#[allow(clippy::too_many_arguments)]
pub fn empirical_invariant(
    starts: &[Field],
    model: &NoiseModel,
    cfg: &SolverConfig,
    t_long: f64,
    burn_in: f64,
    n_batches: usize,
    sharing: NoiseSharing,
    workers: usize,
) -> Result<ErgodicsReport> {
    if starts.len() < 2 {
        return Err(invalid("x_list", "need at least two initial conditions"));
    }
    if !(burn_in >= 0.0 && burn_in < t_long) {
        return Err(invalid(
            "burn_in",
            format!("must lie in [0, T_long), got {burn_in}"),
        ));
    }
    if n_batches < 2 {
        return Err(invalid("n_batches", "need at least two batches"));
    }
    for x in starts {
        x.ensure_same_grid(model.forcing())?;
    }
    let cfg = cfg.clone().with_horizon(t_long);
    cfg.validate(model.grid())?;
    let skip = timepoints_before(&cfg, burn_in);
    let mode1 = model.grid().sample(|x| (0.5 * PI * x).cos());
    let runs = parallel::map_indexed(workers, starts.len(), |i| {
        let seed = match sharing {
            NoiseSharing::Common => cfg.seed,
            NoiseSharing::Independent => path_seed(&cfg, i),
        };
        let noise = SeededNoise { model, seed };
        left_endpoint_series(&starts[i], &noise, &cfg, |x| battery(x, &mode1))
    });
    let mut means = Vec::with_capacity(starts.len());
    let mut errs = Vec::with_capacity(starts.len());
    let mut n_timepoints = 0;
    for r in runs {
        let series = r?;
        let kept = &series[skip.min(series.len())..];
        n_timepoints = kept.len();
        if kept.len() < n_batches {
            return Err(invalid(
                "T_long",
                "too few saved points after burn-in for the batch count",
            ));
        }
        let mut m = [0.0; 5];
        let mut e = [0.0; 5];
        for k in 0..5 {
            let col: Vec<f64> = kept.iter().map(|b| b[k]).collect();
            let est = batch_means(&col, n_batches);
            m[k] = est.mean;
            e[k] = est.std_err;
        }
        means.push(m);
        errs.push(e);
    }
    let mut z_scores = Vec::new();
    let mut within = 0usize;
    let mut max_z = 0.0_f64;
    for a in 0..starts.len() {
        for b in a + 1..starts.len() {
            for k in 0..5 {
                let diff = (means[a][k] - means[b][k]).abs();
                let se = (errs[a][k].powi(2) + errs[b][k].powi(2)).sqrt();
                let z = if diff == 0.0 { 0.0 } else { diff / se };
                within += (z <= 3.0) as usize;
                max_z = max_z.max(z);
                z_scores.push(json!({ "a": a, "b": b, "functional": BATTERY[k], "z": z }));
            }
        }
    }
    let cells = z_scores.len();
    let mut report = ErgodicsReport::proportion(
        "invariant",
        within as f64 / cells as f64,
        cells,
        starts.len(),
        n_timepoints,
        ConfigEcho::new(model, &cfg),
    );
    report.passed = within == cells;
    report.details = json!({
        "functionals": BATTERY,
        "burn_in": burn_in,
        "T_long": t_long,
        "batches": n_batches,
        "noise": sharing,
        "means": means,
        "std_err": errs,
        "max_z": max_z,
        "comparisons": z_scores,
    });
    Ok(report)
}

/// A smooth random field `Σ_{k≤6} a_k sin(kπ(x+1)/2)` with `a_k` uniform in
/// `[−1/k, 1/k]`, rescaled so that `‖u‖_∞ = amplitude`.
pub fn random_field(grid: &Grid, amplitude: f64, seed: u64) -> Field {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coeffs: Vec<f64> = (1..=6)
        .map(|k| rng.random_range(-1.0..=1.0) / k as f64)
        .collect();
    let u = grid.sample(|x| {
        coeffs
            .iter()
            .enumerate()
            .map(|(i, a)| a * ((i + 1) as f64 * 0.5 * PI * (x + 1.0)).sin())
            .sum()
    });
    let sup = u.norm_linf();
    if sup > 0.0 {
        u.scale(amplitude / sup)
    } else {
        u
    }
}

/// `n` independent pairs of [`random_field`]s with sup norm `amplitude`.
pub fn random_pairs(grid: &Grid, n: usize, amplitude: f64, seed: u64) -> Vec<(Field, Field)> {
    (0..n as u64)
        .map(|i| {
            let base = seed.wrapping_add(2 * i);
            (
                random_field(grid, amplitude, base),
                random_field(grid, amplitude, base.wrapping_add(1)),
            )
        })
        .collect()
}

/// `n` pairs `x ≤ y`: x is a [`random_field`] and `y = x + |z|` for another
/// random field z, so the gap vanishes wherever z does.
pub fn random_ordered_pairs(
    grid: &Grid,
    n: usize,
    amplitude: f64,
    seed: u64,
) -> Vec<(Field, Field)> {
    random_pairs(grid, n, amplitude, seed)
        .into_iter()
        .map(|(x, z)| {
            let y = x.add(&z.map(f64::abs)).expect("same grid");
            (x, y)
        })
        .collect()
}
