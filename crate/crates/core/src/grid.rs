//! Uniform grid on (-1, 1) with homogeneous Dirichlet data, grid fields, and
//! the discrete L², L∞ and H⁻¹ geometry.
//!
//! The H⁻¹ inner product is defined through the discrete Dirichlet Laplacian,
//!
//! ```text
//! <u, v>_{-1} = h * Σ_i u_i ((-Δ_h)^{-1} v)_i
//! ```
//!
//! so that the duality identity `<Δ_h w, z>_{-1} = -<w, z>_{L²_h}` holds
//! exactly, up to rounding.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::tridiag;

/// Interior nodes `x_i = -1 + i h`, `i = 1..=n`, with `h = 2 / (n + 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridSpec", into = "GridSpec")]
pub struct Grid {
    n_interior: usize,
    h: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridSpec {
    n_interior: usize,
}

impl TryFrom<GridSpec> for Grid {
    type Error = Error;
    fn try_from(spec: GridSpec) -> Result<Self> {
        Grid::new(spec.n_interior)
    }
}

impl From<Grid> for GridSpec {
    fn from(grid: Grid) -> Self {
        GridSpec {
            n_interior: grid.n_interior,
        }
    }
}

impl Grid {
    pub fn new(n_interior: usize) -> Result<Self> {
        if n_interior == 0 {
            return Err(invalid("n_interior", "must be positive"));
        }
        Ok(Grid {
            n_interior,
            h: 2.0 / (n_interior as f64 + 1.0),
        })
    }

    pub fn n_interior(&self) -> usize {
        self.n_interior
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Coordinate of the interior node with zero-based index `i`.
    pub fn node(&self, i: usize) -> f64 {
        -1.0 + (i as f64 + 1.0) * self.h
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_interior).map(|i| self.node(i)).collect()
    }

    pub fn zeros(&self) -> Field {
        Field {
            grid: *self,
            values: vec![0.0; self.n_interior],
        }
    }

    pub fn constant(&self, c: f64) -> Field {
        Field {
            grid: *self,
            values: vec![c; self.n_interior],
        }
    }

    /// Samples `f` at the interior nodes.
    pub fn sample(&self, mut f: impl FnMut(f64) -> f64) -> Field {
        Field {
            grid: *self,
            values: (0..self.n_interior).map(|i| f(self.node(i))).collect(),
        }
    }

    /// Wraps `values`, checking length and finiteness.
    pub fn field(&self, values: Vec<f64>) -> Result<Field> {
        if values.len() != self.n_interior {
            return Err(Error::LengthMismatch {
                expected: self.n_interior,
                got: values.len(),
            });
        }
        if let Some(node) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { node });
        }
        Ok(Field {
            grid: *self,
            values,
        })
    }

    fn check(&self, other: &Grid) -> Result<()> {
        if self.n_interior != other.n_interior {
            return Err(Error::GridMismatch {
                left: self.n_interior,
                right: other.n_interior,
            });
        }
        Ok(())
    }
}

/// Nodal values on the interior of a [`Grid`]; both boundary values are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct FieldRepr {
    n_interior: usize,
    values: Vec<f64>,
}

impl Serialize for Field {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        FieldRepr {
            n_interior: self.grid.n_interior,
            values: self.values.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Field {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = FieldRepr::deserialize(d)?;
        let grid = Grid::new(repr.n_interior).map_err(serde::de::Error::custom)?;
        grid.field(repr.values).map_err(serde::de::Error::custom)
    }
}

impl Field {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub(crate) fn from_raw(grid: Grid, values: Vec<f64>) -> Field {
        debug_assert_eq!(values.len(), grid.n_interior);
        Field { grid, values }
    }

    pub fn ensure_same_grid(&self, other: &Field) -> Result<()> {
        self.grid.check(&other.grid)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, a: f64) -> Field {
        self.map(|v| a * v)
    }

    /// `self + a * other`.
    pub fn axpy(&self, a: f64, other: &Field) -> Result<Field> {
        self.ensure_same_grid(other)?;
        Ok(Field {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(u, v)| u + a * v)
                .collect(),
        })
    }

    pub fn add(&self, other: &Field) -> Result<Field> {
        self.axpy(1.0, other)
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.axpy(-1.0, other)
    }

    /// Nodewise maximum with a constant, `u ∨ c`.
    pub fn max_with(&self, c: f64) -> Field {
        self.map(|v| v.max(c))
    }

    /// Three-point Dirichlet Laplacian `(u_{i-1} - 2u_i + u_{i+1}) / h²`.
    pub fn laplacian(&self) -> Field {
        let mut out = vec![0.0; self.len()];
        laplacian_into(self.grid.h, &self.values, &mut out);
        Field::from_raw(self.grid, out)
    }

    /// The unique `v` with `-Δ_h v = self` and zero boundary data.
    pub fn inverse_laplacian(&self) -> Field {
        let mut out = vec![0.0; self.len()];
        tridiag::solve_dirichlet_laplacian(self.grid.h, &self.values, &mut out);
        Field::from_raw(self.grid, out)
    }

    pub fn inner_l2(&self, other: &Field) -> Result<f64> {
        self.ensure_same_grid(other)?;
        Ok(self.grid.h * dot(&self.values, &other.values))
    }

    pub fn norm_l2(&self) -> f64 {
        (self.grid.h * dot(&self.values, &self.values)).sqrt()
    }

    pub fn norm_linf(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn inner_hminus1(&self, other: &Field) -> Result<f64> {
        self.ensure_same_grid(other)?;
        let v = other.inverse_laplacian();
        Ok(self.grid.h * dot(&self.values, &v.values))
    }

    pub fn norm_hminus1(&self) -> f64 {
        hminus1_norm(self.grid.h, &self.values)
    }

    /// H⁻¹ distance `‖self - other‖_{-1}`.
    pub fn dist_hminus1(&self, other: &Field) -> Result<f64> {
        Ok(self.sub(other)?.norm_hminus1())
    }

    /// Nodewise order `self <= other`, the grid form of the H⁻¹ order.
    pub fn leq(&self, other: &Field) -> Result<bool> {
        self.ensure_same_grid(other)?;
        Ok(self.values.iter().zip(&other.values).all(|(u, v)| u <= v))
    }

    /// `‖u - clip(u, [-R, R])‖_{-1}`, an upper bound for the H⁻¹ distance
    /// from `u` to the L∞ ball of radius `R`.
    pub fn clip_distance(&self, radius: f64) -> Result<f64> {
        if !(radius > 0.0) {
            return Err(invalid("R", format!("must be positive, got {radius}")));
        }
        Ok(clip_distance_raw(self.grid.h, &self.values, radius))
    }

    /// CSV rows `x_i,value_i` preceded by an `x,value` header.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let ser = |e: csv::Error| Error::Serialization(e.to_string());
        wtr.write_record(["x", "value"]).map_err(ser)?;
        for (i, v) in self.values.iter().enumerate() {
            wtr.write_record([self.grid.node(i).to_string(), v.to_string()])
                .map_err(ser)?;
        }
        wtr.flush().map_err(|e| Error::Serialization(e.to_string()))
    }

    /// Parses the format written by [`Field::write_csv`].
    pub fn read_csv<R: Read>(r: R) -> Result<Field> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut values = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::Serialization(e.to_string()))?;
            let v: f64 = rec
                .get(1)
                .ok_or_else(|| Error::Serialization("missing value column".into()))?
                .trim()
                .parse()
                .map_err(|e: std::num::ParseFloatError| Error::Serialization(e.to_string()))?;
            values.push(v);
        }
        Grid::new(values.len())?.field(values)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn laplacian_into(h: f64, u: &[f64], out: &mut [f64]) {
    let n = u.len();
    let inv_h2 = 1.0 / (h * h);
    for i in 0..n {
        let left = if i > 0 { u[i - 1] } else { 0.0 };
        let right = if i + 1 < n { u[i + 1] } else { 0.0 };
        out[i] = (left - 2.0 * u[i] + right) * inv_h2;
    }
}

pub(crate) fn hminus1_norm(h: f64, u: &[f64]) -> f64 {
    let mut v = vec![0.0; u.len()];
    tridiag::solve_dirichlet_laplacian(h, u, &mut v);
    // (-Δ_h)^{-1} is symmetric positive definite; clamp rounding below zero.
    (h * dot(u, &v)).max(0.0).sqrt()
}

pub(crate) fn clip_distance_raw(h: f64, u: &[f64], radius: f64) -> f64 {
    let excess: Vec<f64> = u.iter().map(|&v| v - v.clamp(-radius, radius)).collect();
    if excess.iter().all(|&e| e == 0.0) {
        return 0.0;
    }
    hminus1_norm(h, &excess)
}
