//! Truncated Q-Wiener noise `W^B(t) = Σ_k σ_k β_k(t) ξ_k`, the forcing
//! `g = Σ_{k≤m} c_k σ_k ξ_k`, and the noise-tube event
//! `max_n ‖W^B(t_n) − t_n g‖₂ ≤ β`.
//!
//! Normals are drawn from a ChaCha8 stream keyed by the path seed, with the
//! time-step index as stream number and the mode index as position inside
//! the stream, so every increment is a pure function of `(seed, step, mode)`.

use std::f64::consts::PI;
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::{dot, Field, Grid};
use crate::parallel;
use crate::stats::ProbabilityEstimate;

/// Relative tolerance for the discrete orthogonality of the mode profiles.
pub const ORTHOGONALITY_TOL: f64 = 1e-8;

/// Serialisable description of the constant-plus-cosine model family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    #[serde(rename = "K")]
    pub k: usize,
    pub decay: f64,
    pub c: Vec<f64>,
    #[serde(default = "default_profiles")]
    pub profiles: String,
}

fn default_profiles() -> String {
    PROFILE_FAMILY.to_string()
}

pub const PROFILE_FAMILY: &str = "constant+cosine";

impl NoiseSpec {
    pub fn build(&self, grid: &Grid) -> Result<NoiseModel> {
        if self.profiles != PROFILE_FAMILY {
            return Err(invalid(
                "noise.profiles",
                format!("unknown profile family `{}`", self.profiles),
            ));
        }
        if self.k == 0 {
            return Err(invalid("noise.K", "must be at least 1"));
        }
        if !(self.decay > 0.5) {
            return Err(invalid(
                "noise.decay",
                format!("must exceed 0.5 for a summable trace, got {}", self.decay),
            ));
        }
        if self.c.is_empty() || self.c.len() > self.k {
            return Err(invalid(
                "noise.c",
                format!("need 1..=K forcing coefficients, got {}", self.c.len()),
            ));
        }
        let profiles = constant_cosine_profiles(grid, self.k);
        let modes = profiles
            .into_iter()
            .enumerate()
            .map(|(i, profile)| Mode {
                profile,
                amplitude: ((i + 1) as f64).powf(-self.decay),
            })
            .collect();
        let model = NoiseModel::new(*grid, modes, self.c.clone())?.with_spec(self.clone());
        model.check_nondegenerate()?;
        Ok(model)
    }
}

/// ξ_1 ≡ 1 and ξ_k ≈ cos((k−1)π(x+1)/2), made orthogonal in the interior
/// grid inner product by Gram–Schmidt against the preceding profiles.
///
/// The raw cosines are only orthogonal up to the missing boundary terms
/// (relative defect of order h), which is far above [`ORTHOGONALITY_TOL`].
fn constant_cosine_profiles(grid: &Grid, k: usize) -> Vec<Field> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(k);
    for j in 0..k {
        let mut v: Vec<f64> = if j == 0 {
            vec![1.0; grid.n_interior()]
        } else {
            grid.nodes()
                .iter()
                .map(|x| (j as f64 * PI * (x + 1.0) / 2.0).cos())
                .collect()
        };
        // two passes of modified Gram–Schmidt
        for _ in 0..2 {
            for q in &out {
                let coef = dot(&v, q) / dot(q, q);
                v.iter_mut().zip(q).for_each(|(a, b)| *a -= coef * b);
            }
        }
        out.push(v);
    }
    out.into_iter()
        .map(|v| grid.field(v).expect("finite profile"))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mode {
    pub profile: Field,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    grid: Grid,
    modes: Vec<Mode>,
    forcing_coeffs: Vec<f64>,
    forcing: Field,
    spec: Option<NoiseSpec>,
}

impl NoiseModel {
    /// Checks profile orthogonality and amplitudes. Non-degeneracy of the
    /// forcing is checked separately by [`NoiseModel::check_nondegenerate`].
    pub fn new(grid: Grid, modes: Vec<Mode>, forcing_coeffs: Vec<f64>) -> Result<Self> {
        if modes.is_empty() {
            return Err(invalid("noise.K", "need at least one mode"));
        }
        if forcing_coeffs.len() > modes.len() {
            return Err(invalid("noise.c", "more forcing coefficients than modes"));
        }
        for (k, m) in modes.iter().enumerate() {
            if m.profile.grid() != &grid {
                return Err(Error::GridMismatch {
                    left: grid.n_interior(),
                    right: m.profile.grid().n_interior(),
                });
            }
            if !(m.amplitude >= 0.0 && m.amplitude.is_finite()) {
                return Err(invalid(
                    "noise.amplitude",
                    format!("mode {} has amplitude {}", k + 1, m.amplitude),
                ));
            }
        }
        for i in 0..modes.len() {
            for j in 0..i {
                let a = modes[i].profile.values();
                let b = modes[j].profile.values();
                let rel = dot(a, b).abs() / (dot(a, a) * dot(b, b)).sqrt();
                if rel > ORTHOGONALITY_TOL {
                    return Err(Error::NotOrthogonal {
                        i: j + 1,
                        j: i + 1,
                        relative: rel,
                    });
                }
            }
        }
        let mut g = vec![0.0; grid.n_interior()];
        for (m, c) in modes.iter().zip(&forcing_coeffs) {
            for (gi, xi) in g.iter_mut().zip(m.profile.values()) {
                *gi += c * m.amplitude * xi;
            }
        }
        let forcing = grid.field(g)?;
        Ok(NoiseModel {
            grid,
            modes,
            forcing_coeffs,
            forcing,
            spec: None,
        })
    }

    /// The default family with `m = 1`: ξ_1 ≡ 1, σ_k = k^{-decay}, forcing
    /// `g = c1·σ_1` constant. Rejected unless `g > 1`.
    pub fn default_model(grid: &Grid, k: usize, decay: f64, c1: f64) -> Result<Self> {
        NoiseSpec {
            k,
            decay,
            c: vec![c1],
            profiles: default_profiles(),
        }
        .build(grid)
    }

    /// A model whose single mode has zero amplitude: no noise, no forcing.
    pub fn silent(grid: &Grid) -> Self {
        NoiseModel::new(
            *grid,
            vec![Mode {
                profile: grid.constant(1.0),
                amplitude: 0.0,
            }],
            Vec::new(),
        )
        .expect("single zero mode is valid")
    }

    fn with_spec(mut self, spec: NoiseSpec) -> Self {
        self.spec = Some(spec);
        self
    }

    pub fn spec(&self) -> Option<&NoiseSpec> {
        self.spec.as_ref()
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn truncation(&self) -> usize {
        self.modes.len()
    }

    pub fn forcing_coeffs(&self) -> &[f64] {
        &self.forcing_coeffs
    }

    /// The control forcing g.
    pub fn forcing(&self) -> &Field {
        &self.forcing
    }

    /// Requires `g > 1` at every interior node.
    pub fn check_nondegenerate(&self) -> Result<()> {
        check_nondegenerate(&self.forcing)
    }

    /// `Σ_k σ_k² ‖ξ_k‖₂²`; the discarded tail beyond K is zero by construction.
    pub fn trace(&self) -> f64 {
        self.modes
            .iter()
            .map(|m| m.amplitude.powi(2) * m.profile.norm_l2().powi(2))
            .sum()
    }

    /// Discrete L² Gramian of the mode profiles.
    pub fn gramian(&self) -> Vec<Vec<f64>> {
        self.modes
            .iter()
            .map(|a| {
                self.modes
                    .iter()
                    .map(|b| a.profile.inner_l2(&b.profile).expect("same grid"))
                    .collect()
            })
            .collect()
    }

    /// Writes `ΔW^B_step = Σ_k σ_k √dt ζ_{step,k} ξ_k` into `out`.
    pub fn increment_into(&self, seed: u64, step: usize, dt: f64, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(step as u64);
        let sqdt = dt.sqrt();
        for m in &self.modes {
            let z: f64 = StandardNormal.sample(&mut rng);
            let a = m.amplitude * sqdt * z;
            if a != 0.0 {
                for (o, xi) in out.iter_mut().zip(m.profile.values()) {
                    *o += a * xi;
                }
            }
        }
    }

    pub fn increment(&self, seed: u64, step: usize, dt: f64) -> Field {
        let mut out = vec![0.0; self.grid.n_interior()];
        self.increment_into(seed, step, dt, &mut out);
        Field::from_raw(self.grid, out)
    }

    pub fn sample_path(&self, dt: f64, n_steps: usize, seed: u64) -> Result<NoisePath> {
        if !(dt > 0.0) {
            return Err(invalid("dt", format!("must be positive, got {dt}")));
        }
        let n = self.grid.n_interior();
        let mut increments = Vec::with_capacity(n_steps);
        let mut cumulative = Vec::with_capacity(n_steps + 1);
        let mut acc = vec![0.0; n];
        cumulative.push(self.grid.zeros());
        for step in 0..n_steps {
            let inc = self.increment(seed, step, dt);
            acc.iter_mut().zip(inc.values()).for_each(|(a, d)| *a += d);
            increments.push(inc);
            cumulative.push(Field::from_raw(self.grid, acc.clone()));
        }
        Ok(NoisePath {
            dt,
            times: (0..=n_steps).map(|i| i as f64 * dt).collect(),
            increments,
            cumulative,
        })
    }

    /// `max_n ‖W^B(t_n) − t_n g‖₂` over `t_n = n dt ≤ S` for one path.
    pub fn tube_sup(&self, horizon: f64, dt: f64, seed: u64) -> f64 {
        let n_steps = (horizon / dt).round() as usize;
        let n = self.grid.n_interior();
        let mut w = vec![0.0; n];
        let mut inc = vec![0.0; n];
        let g = self.forcing.values();
        let h = self.grid.h();
        let mut sup = 0.0_f64;
        for step in 0..n_steps {
            self.increment_into(seed, step, dt, &mut inc);
            w.iter_mut().zip(&inc).for_each(|(a, d)| *a += d);
            let t = (step + 1) as f64 * dt;
            let sq: f64 = w.iter().zip(g).map(|(wi, gi)| (wi - t * gi).powi(2)).sum();
            sup = sup.max((h * sq).sqrt());
        }
        sup
    }

    /// Tube sups for paths with seeds `seed, seed+1, …`, in seed order.
    pub fn tube_sups(
        &self,
        horizon: f64,
        dt: f64,
        n_samples: usize,
        seed: u64,
        workers: usize,
    ) -> Vec<f64> {
        parallel::map_indexed(workers, n_samples, |i| {
            self.tube_sup(horizon, dt, seed.wrapping_add(i as u64))
        })
    }

    /// Monte-Carlo estimate of `P(max_n ‖W^B(t_n) − t_n g‖₂ ≤ β)` with a
    /// Wilson 95% interval.
    pub fn tube_probability(
        &self,
        horizon: f64,
        beta: f64,
        dt: f64,
        n_samples: usize,
        seed: u64,
        workers: usize,
    ) -> Result<ProbabilityEstimate> {
        if !(horizon > 0.0) || !(dt > 0.0) || !(beta >= 0.0) {
            return Err(invalid(
                "tube",
                "S and dt must be positive, beta nonnegative",
            ));
        }
        let sups = self.tube_sups(horizon, dt, n_samples, seed, workers);
        Ok(ProbabilityEstimate::from_hits(
            sups.iter().filter(|&&s| s <= beta).count(),
            n_samples,
        ))
    }
}

/// Tube probabilities for several radii from one set of paths, so the
/// estimates are nested and monotone in β by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TubeSweep {
    #[serde(rename = "S")]
    pub horizon: f64,
    pub dt: f64,
    pub betas: Vec<f64>,
    pub estimates: Vec<ProbabilityEstimate>,
    /// Whether the estimates are nondecreasing in β.
    pub monotone: bool,
}

impl NoiseModel {
    pub fn tube_sweep(
        &self,
        horizon: f64,
        betas: &[f64],
        dt: f64,
        n_samples: usize,
        seed: u64,
        workers: usize,
    ) -> Result<TubeSweep> {
        if !(horizon > 0.0) || !(dt > 0.0) || betas.iter().any(|b| !(*b >= 0.0)) {
            return Err(invalid(
                "tube",
                "S and dt must be positive, beta nonnegative",
            ));
        }
        let sups = self.tube_sups(horizon, dt, n_samples, seed, workers);
        let estimates: Vec<ProbabilityEstimate> = betas
            .iter()
            .map(|&b| {
                ProbabilityEstimate::from_hits(sups.iter().filter(|&&s| s <= b).count(), n_samples)
            })
            .collect();
        let mut order: Vec<usize> = (0..betas.len()).collect();
        order.sort_by(|&a, &b| betas[a].total_cmp(&betas[b]));
        let monotone = order
            .windows(2)
            .all(|w| estimates[w[0]].estimate <= estimates[w[1]].estimate);
        Ok(TubeSweep {
            horizon,
            dt,
            betas: betas.to_vec(),
            estimates,
            monotone,
        })
    }
}

pub(crate) fn check_nondegenerate(g: &Field) -> Result<()> {
    for (i, &v) in g.values().iter().enumerate() {
        if !(v > 1.0) {
            return Err(Error::NonDegenerate {
                node: i,
                x: g.grid().node(i),
                value: v,
            });
        }
    }
    Ok(())
}

/// A materialised noise path.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePath {
    dt: f64,
    pub times: Vec<f64>,
    pub increments: Vec<Field>,
    pub cumulative: Vec<Field>,
}

impl NoisePath {
    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// CSV rows `t,node,value` of the cumulative path.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let ser = |e: csv::Error| Error::Serialization(e.to_string());
        wtr.write_record(["t", "node", "value"]).map_err(ser)?;
        for (t, f) in self.times.iter().zip(&self.cumulative) {
            for (i, v) in f.values().iter().enumerate() {
                wtr.write_record([t.to_string(), f.grid().node(i).to_string(), v.to_string()])
                    .map_err(ser)?;
            }
        }
        wtr.flush().map_err(|e| Error::Serialization(e.to_string()))
    }
}

/// Source of per-step additive increments for the time steppers.
pub trait Increments: Sync {
    fn increment_into(&self, step: usize, dt: f64, out: &mut [f64]);
}

/// Fresh Q-Wiener increments for the path with the given seed.
#[derive(Debug, Clone, Copy)]
pub struct SeededNoise<'a> {
    pub model: &'a NoiseModel,
    pub seed: u64,
}

impl Increments for SeededNoise<'_> {
    fn increment_into(&self, step: usize, dt: f64, out: &mut [f64]) {
        self.model.increment_into(self.seed, step, dt, out);
    }
}

/// The deterministic path `W(t) = t g`, i.e. increments `dt·g`.
#[derive(Debug, Clone, Copy)]
pub struct Drift<'a>(pub &'a Field);

impl Increments for Drift<'_> {
    fn increment_into(&self, _step: usize, dt: f64, out: &mut [f64]) {
        out.iter_mut()
            .zip(self.0.values())
            .for_each(|(o, g)| *o = dt * g);
    }
}

impl Increments for NoisePath {
    fn increment_into(&self, step: usize, dt: f64, out: &mut [f64]) {
        debug_assert!((dt - self.dt).abs() <= 1e-15 * dt.max(self.dt));
        out.copy_from_slice(self.increments[step].values());
    }
}
