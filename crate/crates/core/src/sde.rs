//! Time stepping for the regularised equation
//!
//! ```text
//! dX = ε Δ X dt + Δ φ^ε(X) dt + B dW
//! ```
//!
//! The implicit step solves `Y − dt Δ_h F(Y) = X + ΔW` with the flux
//! `F(y) = ε y + φ^ε(y)` by semismooth Newton. Because F is nondecreasing
//! and piecewise affine, the step is the resolvent of a monotone operator in
//! the discrete H⁻¹ geometry, hence nonexpansive there, and it preserves the
//! nodewise order.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::{clip_distance_raw, hminus1_norm, laplacian_into, Field, Grid};
use crate::monotone::YosidaParams;
use crate::noise::{Increments, NoiseModel, SeededNoise};
use crate::tridiag;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Implicit,
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub epsilon: f64,
    pub dt: f64,
    #[serde(rename = "T")]
    pub t_end: f64,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    #[serde(default = "default_newton_tol")]
    pub newton_tol: f64,
    #[serde(default = "default_newton_max_iter")]
    pub newton_max_iter: usize,
    #[serde(default = "default_save_every")]
    pub save_every: usize,
    #[serde(default)]
    pub seed: u64,
    /// Radius R of the L∞ ball used by the `clipdist` summary.
    #[serde(default = "default_clip_radius")]
    pub clip_radius: f64,
}

fn default_scheme() -> Scheme {
    Scheme::Implicit
}
fn default_newton_tol() -> f64 {
    1e-10
}
fn default_newton_max_iter() -> usize {
    50
}
fn default_save_every() -> usize {
    1
}
fn default_clip_radius() -> f64 {
    4.0
}

impl SolverConfig {
    /// Implicit scheme with default Newton settings.
    pub fn new(epsilon: f64, dt: f64, t_end: f64) -> Self {
        SolverConfig {
            epsilon,
            dt,
            t_end,
            scheme: Scheme::Implicit,
            newton_tol: default_newton_tol(),
            newton_max_iter: default_newton_max_iter(),
            save_every: default_save_every(),
            seed: 0,
            clip_radius: default_clip_radius(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_horizon(mut self, t_end: f64) -> Self {
        self.t_end = t_end;
        self
    }

    pub fn with_save_every(mut self, save_every: usize) -> Self {
        self.save_every = save_every;
        self
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn yosida(&self) -> Result<YosidaParams> {
        YosidaParams::new(self.epsilon)
    }

    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    /// Largest stable explicit step: `h² / (2(ε + 1/ε))`.
    pub fn cfl_limit(&self, grid: &Grid) -> f64 {
        grid.h().powi(2) / (2.0 * (self.epsilon + 1.0 / self.epsilon))
    }

    pub fn validate(&self, grid: &Grid) -> Result<()> {
        self.yosida()?;
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(invalid("dt", format!("must be positive, got {}", self.dt)));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(invalid(
                "T",
                format!("must be positive, got {}", self.t_end),
            ));
        }
        if !(self.newton_tol > 0.0) {
            return Err(invalid("newton_tol", "must be positive"));
        }
        if self.newton_max_iter == 0 {
            return Err(invalid("newton_max_iter", "must be positive"));
        }
        if self.save_every == 0 {
            return Err(invalid("save_every", "must be positive"));
        }
        if !(self.clip_radius > 0.0) {
            return Err(invalid("clip_radius", "must be positive"));
        }
        if self.scheme == Scheme::Explicit {
            let limit = self.cfl_limit(grid);
            if self.dt > limit {
                return Err(Error::Cfl { dt: self.dt, limit });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonStats {
    pub iterations: usize,
    pub residual: f64,
}

/// Semismooth Newton solver for `Y − dt Δ_h F(Y) = b`, with reusable
/// workspace.
///
/// The iteration runs on the flux `W = F(Y)`. In that variable the residual
/// `F⁻¹(W) + dt (−Δ_h) W − b` is the gradient of a strictly convex,
/// piecewise quadratic function, the Jacobian `diag(1/F'(Y)) − dt Δ_h` is a
/// symmetric tridiagonal M-matrix (the Jacobian `I − dt Δ_h diag(F'(Y))` in
/// the state variable, up to column scaling), and an exact line search along
/// the Newton direction converges from any starting point.
#[derive(Debug, Clone)]
pub struct ImplicitSolver {
    h: f64,
    params: YosidaParams,
    dt: f64,
    tol: f64,
    max_iter: usize,
    flux: Vec<f64>,
    state: Vec<f64>,
    lap: Vec<f64>,
    resid: Vec<f64>,
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
    delta: Vec<f64>,
    trial: Vec<f64>,
    scratch: Vec<f64>,
}

impl ImplicitSolver {
    pub fn new(grid: &Grid, cfg: &SolverConfig) -> Result<Self> {
        cfg.validate(grid)?;
        let n = grid.n_interior();
        Ok(ImplicitSolver {
            h: grid.h(),
            params: cfg.yosida()?,
            dt: cfg.dt,
            tol: cfg.newton_tol,
            max_iter: cfg.newton_max_iter,
            flux: vec![0.0; n],
            state: vec![0.0; n],
            lap: vec![0.0; n],
            resid: vec![0.0; n],
            lower: vec![0.0; n],
            diag: vec![0.0; n],
            upper: vec![0.0; n],
            delta: vec![0.0; n],
            trial: vec![0.0; n],
            scratch: vec![0.0; n],
        })
    }

    /// Residual `F⁻¹(w) − dt Δ_h w − b` into `out`; returns its discrete L² norm.
    fn residual_into(&mut self, w: &[f64], b: &[f64], out: &mut [f64]) -> f64 {
        laplacian_into(self.h, w, &mut self.lap);
        let mut sq = 0.0;
        for i in 0..w.len() {
            let r = self.params.flux_inverse(w[i]) - self.dt * self.lap[i] - b[i];
            out[i] = r;
            sq += r * r;
        }
        (self.h * sq).sqrt()
    }

    /// Directional derivative of the convex merit along `delta` at
    /// `w + lambda·delta`, i.e. `<delta, residual>`. Leaves the residual in
    /// `self.scratch` and `w + lambda·delta` in `self.trial`.
    fn slope_at(&mut self, lambda: f64, b: &[f64]) -> (f64, f64) {
        let n = self.flux.len();
        for i in 0..n {
            self.trial[i] = self.flux[i] + lambda * self.delta[i];
        }
        let trial = std::mem::take(&mut self.trial);
        let mut out = std::mem::take(&mut self.scratch);
        let norm = self.residual_into(&trial, b, &mut out);
        let slope = self.delta.iter().zip(&out).map(|(d, r)| d * r).sum();
        self.trial = trial;
        self.scratch = out;
        (slope, norm)
    }

    fn accept_trial(&mut self) {
        std::mem::swap(&mut self.flux, &mut self.trial);
        std::mem::swap(&mut self.resid, &mut self.scratch);
    }

    /// Solves in place; `y` holds the initial guess on entry.
    pub fn solve(&mut self, b: &[f64], y: &mut [f64]) -> Result<NewtonStats> {
        let n = y.len();
        let c = self.dt / (self.h * self.h);
        for (w, &v) in self.flux.iter_mut().zip(y.iter()) {
            *w = self.params.flux(v);
        }
        let w = std::mem::take(&mut self.flux);
        let mut r = std::mem::take(&mut self.resid);
        let mut res = self.residual_into(&w, b, &mut r);
        self.flux = w;
        self.resid = r;
        let mut iterations = 0;
        while res > self.tol {
            if iterations == self.max_iter || !res.is_finite() {
                return Err(Error::NewtonDivergence {
                    iterations,
                    residual: res,
                });
            }
            iterations += 1;
            for i in 0..n {
                let yi = self.params.flux_inverse(self.flux[i]);
                self.state[i] = yi;
                self.diag[i] = 1.0 / self.params.flux_derivative(yi) + 2.0 * c;
                self.lower[i] = -c;
                self.upper[i] = -c;
                self.delta[i] = -self.resid[i];
            }
            self.lower[0] = 0.0;
            self.upper[n - 1] = 0.0;
            let mut work = std::mem::take(&mut self.trial);
            tridiag::solve_in_place(
                &self.lower,
                &self.diag,
                &self.upper,
                &mut self.delta,
                &mut work,
            )?;
            self.trial = work;

            let slope0: f64 = self.delta.iter().zip(&self.resid).map(|(d, r)| d * r).sum();
            if !(slope0 < 0.0) {
                // direction is not a descent direction only at a stationary point
                break;
            }
            let (slope1, norm1) = self.slope_at(1.0, b);
            if slope1 <= 0.0 || norm1 < res {
                self.accept_trial();
                res = norm1;
                continue;
            }
            // Exact line search: the merit is convex along the ray, so its
            // slope is nondecreasing in lambda; regula falsi on [lo, hi].
            let (mut lo, mut s_lo) = (0.0, slope0);
            let (mut hi, mut s_hi) = (1.0, slope1);
            let mut norm = res;
            for _ in 0..60 {
                let lambda = lo - s_lo * (hi - lo) / (s_hi - s_lo);
                let lambda = if lambda > lo && lambda < hi {
                    lambda
                } else {
                    0.5 * (lo + hi)
                };
                let (s, nrm) = self.slope_at(lambda, b);
                norm = nrm;
                if s.abs() <= 1e-12 * slope0.abs() || hi - lo <= 1e-14 {
                    break;
                }
                if s < 0.0 {
                    lo = lambda;
                    s_lo = s;
                } else {
                    hi = lambda;
                    s_hi = s;
                }
            }
            self.accept_trial();
            res = norm;
        }
        for (v, &w) in y.iter_mut().zip(&self.flux) {
            *v = self.params.flux_inverse(w);
        }
        if res > self.tol {
            return Err(Error::NewtonDivergence {
                iterations,
                residual: res,
            });
        }
        Ok(NewtonStats {
            iterations,
            residual: res,
        })
    }
}

/// One implicit Euler–Maruyama step from `x` with increment `dw`.
pub fn step_implicit(x: &Field, dw: &Field, cfg: &SolverConfig) -> Result<Field> {
    x.ensure_same_grid(dw)?;
    let cfg = SolverConfig {
        scheme: Scheme::Implicit,
        ..cfg.clone()
    };
    let mut solver = ImplicitSolver::new(x.grid(), &cfg)?;
    let b = x.add(dw)?;
    let mut y = x.clone();
    solver.solve(b.values(), y.values_mut())?;
    Ok(y)
}

/// One explicit Euler–Maruyama step; rejects steps above the stability bound.
pub fn step_explicit(x: &Field, dw: &Field, cfg: &SolverConfig) -> Result<Field> {
    x.ensure_same_grid(dw)?;
    let cfg = SolverConfig {
        scheme: Scheme::Explicit,
        ..cfg.clone()
    };
    cfg.validate(x.grid())?;
    explicit_update(x, dw, &cfg.yosida()?, cfg.dt)
}

/// `x + dt Δ_h F(x) + dw` without any stability check.
pub fn explicit_update(x: &Field, dw: &Field, params: &YosidaParams, dt: f64) -> Result<Field> {
    x.ensure_same_grid(dw)?;
    let mut out = vec![0.0; x.len()];
    explicit_into(x.grid().h(), params, dt, x.values(), dw.values(), &mut out);
    Ok(Field::from_raw(*x.grid(), out))
}

fn explicit_into(h: f64, params: &YosidaParams, dt: f64, x: &[f64], dw: &[f64], out: &mut [f64]) {
    let flux: Vec<f64> = x.iter().map(|&v| params.flux(v)).collect();
    laplacian_into(h, &flux, out);
    for i in 0..x.len() {
        out[i] = x[i] + dt * out[i] + dw[i];
    }
}

/// A stateful one-step map for either scheme.
#[derive(Debug, Clone)]
pub(crate) enum Stepper {
    Implicit(Box<ImplicitSolver>),
    Explicit {
        h: f64,
        params: YosidaParams,
        dt: f64,
    },
}

impl Stepper {
    pub(crate) fn new(grid: &Grid, cfg: &SolverConfig) -> Result<Self> {
        cfg.validate(grid)?;
        Ok(match cfg.scheme {
            Scheme::Implicit => Stepper::Implicit(Box::new(ImplicitSolver::new(grid, cfg)?)),
            Scheme::Explicit => Stepper::Explicit {
                h: grid.h(),
                params: cfg.yosida()?,
                dt: cfg.dt,
            },
        })
    }

    /// Advances `state` in place given `rhs = state + increment`.
    pub(crate) fn advance(&mut self, state: &mut [f64], inc: &[f64]) -> Result<()> {
        match self {
            Stepper::Implicit(solver) => {
                let b: Vec<f64> = state.iter().zip(inc).map(|(x, d)| x + d).collect();
                solver.solve(&b, state)?;
            }
            Stepper::Explicit { h, params, dt } => {
                let mut out = vec![0.0; state.len()];
                explicit_into(*h, params, *dt, state, inc, &mut out);
                state.copy_from_slice(&out);
            }
        }
        Ok(())
    }
}

/// Runs `n_steps = round(T/dt)` steps, calling `observe(step, state)` for
/// `step = 0..=n_steps`. Returns the terminal state.
pub fn integrate<I, F>(x0: &Field, inc: &I, cfg: &SolverConfig, mut observe: F) -> Result<Field>
where
    I: Increments + ?Sized,
    F: FnMut(usize, &Field),
{
    let mut stepper = Stepper::new(x0.grid(), cfg)?;
    let mut state = x0.clone();
    let mut dw = vec![0.0; x0.len()];
    observe(0, &state);
    for step in 0..cfg.n_steps() {
        inc.increment_into(step, cfg.dt, &mut dw);
        stepper.advance(state.values_mut(), &dw)?;
        observe(step + 1, &state);
    }
    Ok(state)
}

/// Two copies driven by the same increments.
pub fn integrate_coupled<I, F>(
    x0: &Field,
    y0: &Field,
    inc: &I,
    cfg: &SolverConfig,
    mut observe: F,
) -> Result<(Field, Field)>
where
    I: Increments + ?Sized,
    F: FnMut(usize, &Field, &Field),
{
    x0.ensure_same_grid(y0)?;
    let mut sx = Stepper::new(x0.grid(), cfg)?;
    let mut sy = sx.clone();
    let mut x = x0.clone();
    let mut y = y0.clone();
    let mut dw = vec![0.0; x0.len()];
    observe(0, &x, &y);
    for step in 0..cfg.n_steps() {
        inc.increment_into(step, cfg.dt, &mut dw);
        sx.advance(x.values_mut(), &dw)?;
        sy.advance(y.values_mut(), &dw)?;
        observe(step + 1, &x, &y);
    }
    Ok((x, y))
}

/// Per-step diagnostics of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub t: f64,
    pub l2: f64,
    pub linf: f64,
    pub hm1: f64,
    /// `(‖X‖_∞ − 1)₊²`
    pub excess_sq: f64,
    pub clipdist: f64,
}

impl Summary {
    pub fn of(t: f64, x: &Field, clip_radius: f64) -> Self {
        let linf = x.norm_linf();
        let h = x.grid().h();
        Summary {
            t,
            l2: x.norm_l2(),
            linf,
            hm1: hminus1_norm(h, x.values()),
            excess_sq: (linf - 1.0).max(0.0).powi(2),
            clipdist: clip_distance_raw(h, x.values(), clip_radius),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub snapshots: Vec<Field>,
    pub summaries: Vec<Summary>,
}

impl Trajectory {
    pub fn terminal(&self) -> &Field {
        self.snapshots
            .last()
            .expect("at least the initial snapshot")
    }

    /// CSV with header `t,l2,linf,hm1,excess_sq,clipdist`.
    pub fn write_summaries_csv<W: Write>(&self, w: W) -> Result<()> {
        write_summaries(&self.summaries, w)
    }
}

pub fn write_summaries<W: Write>(rows: &[Summary], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for s in rows {
        wtr.serialize(s)
            .map_err(|e| Error::Serialization(e.to_string()))?;
    }
    wtr.flush().map_err(|e| Error::Serialization(e.to_string()))
}

/// Records summaries every step and snapshots every `save_every` steps.
pub(crate) struct Recorder {
    dt: f64,
    save_every: usize,
    clip_radius: f64,
    pub(crate) traj: Trajectory,
}

impl Recorder {
    pub(crate) fn new(cfg: &SolverConfig) -> Self {
        let n = cfg.n_steps();
        Recorder {
            dt: cfg.dt,
            save_every: cfg.save_every,
            clip_radius: cfg.clip_radius,
            traj: Trajectory {
                times: Vec::with_capacity(n / cfg.save_every + 1),
                snapshots: Vec::with_capacity(n / cfg.save_every + 1),
                summaries: Vec::with_capacity(n + 1),
            },
        }
    }

    pub(crate) fn record(&mut self, step: usize, x: &Field) {
        let t = step as f64 * self.dt;
        self.traj
            .summaries
            .push(Summary::of(t, x, self.clip_radius));
        if step.is_multiple_of(self.save_every) {
            self.traj.times.push(t);
            self.traj.snapshots.push(x.clone());
        }
    }
}

/// Integrates from `x0` with the model's noise for seed `cfg.seed`.
pub fn simulate(x0: &Field, model: &NoiseModel, cfg: &SolverConfig) -> Result<Trajectory> {
    x0.ensure_same_grid(model.forcing())?;
    simulate_with(
        x0,
        &SeededNoise {
            model,
            seed: cfg.seed,
        },
        cfg,
    )
}

/// As [`simulate`] with an arbitrary increment source.
pub fn simulate_with<I: Increments + ?Sized>(
    x0: &Field,
    inc: &I,
    cfg: &SolverConfig,
) -> Result<Trajectory> {
    let mut rec = Recorder::new(cfg);
    integrate(x0, inc, cfg, |step, x| rec.record(step, x))?;
    Ok(rec.traj)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoupledTrajectory {
    pub first: Trajectory,
    pub second: Trajectory,
    /// `‖X^x_{t_n} − X^y_{t_n}‖_{-1}` for every step.
    pub distances: Vec<f64>,
}

/// Runs from `x0` and `y0` on the identical noise path (seed `cfg.seed`).
pub fn simulate_coupled(
    x0: &Field,
    y0: &Field,
    model: &NoiseModel,
    cfg: &SolverConfig,
) -> Result<CoupledTrajectory> {
    x0.ensure_same_grid(model.forcing())?;
    let mut rx = Recorder::new(cfg);
    let mut ry = Recorder::new(cfg);
    let mut distances = Vec::with_capacity(cfg.n_steps() + 1);
    let noise = SeededNoise {
        model,
        seed: cfg.seed,
    };
    integrate_coupled(x0, y0, &noise, cfg, |step, x, y| {
        rx.record(step, x);
        ry.record(step, y);
        distances.push(hminus1_distance(x, y));
    })?;
    Ok(CoupledTrajectory {
        first: rx.traj,
        second: ry.traj,
        distances,
    })
}

pub(crate) fn hminus1_distance(x: &Field, y: &Field) -> f64 {
    let d: Vec<f64> = x
        .values()
        .iter()
        .zip(y.values())
        .map(|(a, b)| a - b)
        .collect();
    hminus1_norm(x.grid().h(), &d)
}
