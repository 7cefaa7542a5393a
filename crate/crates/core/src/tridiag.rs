//! Thomas algorithm for tridiagonal systems.
//!
//! ```text
//! lower[i] * x[i-1] + diag[i] * x[i] + upper[i] * x[i+1] = rhs[i]
//! ```
//!
//! `lower[0]` and `upper[n-1]` are ignored.

use crate::error::{Error, Result};

/// Solves the system in place: `rhs` is overwritten with the solution.
///
/// `scratch` must have the same length as `rhs`; it receives the modified
/// super-diagonal of the forward sweep. No pivoting is performed, so the
/// matrix should be diagonally dominant (every matrix assembled in this crate
/// is an M-matrix or a column-scaled one).
pub fn solve_in_place(
    lower: &[f64],
    diag: &[f64],
    upper: &[f64],
    rhs: &mut [f64],
    scratch: &mut [f64],
) -> Result<()> {
    let n = rhs.len();
    debug_assert!(lower.len() == n && diag.len() == n && upper.len() == n);
    debug_assert!(scratch.len() == n);
    if n == 0 {
        return Ok(());
    }

    let mut denom = diag[0];
    if denom == 0.0 || !denom.is_finite() {
        return Err(Error::SingularSystem { row: 0 });
    }
    scratch[0] = upper[0] / denom;
    rhs[0] /= denom;
    for i in 1..n {
        denom = diag[i] - lower[i] * scratch[i - 1];
        if denom == 0.0 || !denom.is_finite() {
            return Err(Error::SingularSystem { row: i });
        }
        scratch[i] = upper[i] / denom;
        rhs[i] = (rhs[i] - lower[i] * rhs[i - 1]) / denom;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= scratch[i] * rhs[i + 1];
    }
    Ok(())
}

/// Allocating convenience wrapper around [`solve_in_place`].
pub fn solve(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let mut x = rhs.to_vec();
    let mut scratch = vec![0.0; rhs.len()];
    solve_in_place(lower, diag, upper, &mut x, &mut scratch)?;
    Ok(x)
}

/// Solves `-Δ_h v = f` with zero Dirichlet data, `Δ_h` the 3-point stencil
/// with spacing `h`. Writes `v` into `out`.
pub(crate) fn solve_dirichlet_laplacian(h: f64, f: &[f64], out: &mut [f64]) {
    // Matrix is tridiag(-1, 2, -1) / h^2; the sweep coefficients depend only
    // on the row index and are recomputed on the fly.
    let n = f.len();
    debug_assert_eq!(out.len(), n);
    if n == 0 {
        return;
    }
    let h2 = h * h;
    // c[i] = -1/(2 + c[i-1]) with c[-1] = 0; stored back into `out` later.
    let mut c = Vec::with_capacity(n);
    let mut cprev = 0.0;
    let mut dprev = 0.0;
    for (i, fi) in f.iter().enumerate() {
        let denom = 2.0 + cprev;
        let ci = -1.0 / denom;
        let di = (fi * h2 + dprev) / denom;
        c.push(ci);
        out[i] = di;
        cprev = ci;
        dprev = di;
    }
    for i in (0..n - 1).rev() {
        out[i] -= c[i] * out[i + 1];
    }
}
