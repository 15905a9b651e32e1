//! Weighted least-squares polynomial fitting in a Chebyshev basis.
//!
//! The abscissa is mapped affinely onto `[-1, 1]` and the polynomial is
//! represented as `Σ c_j T_j(x)`. Monomials of degree ~27 are numerically
//! useless even on `[-1, 1]`; the Chebyshev basis spans the same polynomial
//! space with a well-conditioned design matrix.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Singular values below this fraction of the largest one count as zero.
const RANK_TOL: f64 = 1e-11;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChebyshevPoly {
    /// Interval mapped onto `[-1, 1]`.
    pub domain: [f64; 2],
    pub coefficients: Vec<f64>,
}

impl ChebyshevPoly {
    pub fn degree(&self) -> usize {
        self.coefficients.len().saturating_sub(1)
    }

    fn normalize(&self, x: f64) -> f64 {
        let [lo, hi] = self.domain;
        (2.0 * x - lo - hi) / (hi - lo)
    }

    pub fn eval(&self, x: f64) -> f64 {
        clenshaw(&self.coefficients, self.normalize(x))
    }
}

fn clenshaw(c: &[f64], x: f64) -> f64 {
    let (mut b1, mut b2) = (0.0, 0.0);
    for &ck in c.iter().skip(1).rev() {
        let b0 = 2.0 * x * b1 - b2 + ck;
        b2 = b1;
        b1 = b0;
    }
    c.first().copied().unwrap_or(0.0) + x * b1 - b2
}

/// `T_0(x) … T_degree(x)` by the three-term recurrence.
fn chebyshev_row(x: f64, degree: usize, out: &mut [f64]) {
    out[0] = 1.0;
    if degree >= 1 {
        out[1] = x;
    }
    for j in 2..=degree {
        out[j] = 2.0 * x * out[j - 1] - out[j - 2];
    }
}

/// Weighted least-squares fit minimising `Σ w_i (y_i − p(x_i))²`.
///
/// Points with zero weight are ignored. Columns are scaled to unit norm and
/// the system is solved through an SVD; a numerically rank-deficient design
/// is reported as an error rather than silently regularised.
pub fn fit_weighted(
    xs: &[f64],
    ys: &[f64],
    weights: &[f64],
    degree: usize,
    domain: [f64; 2],
) -> Result<ChebyshevPoly> {
    if xs.len() != ys.len() || xs.len() != weights.len() {
        return Err(Error::dim("fit inputs", xs.len(), ys.len().min(weights.len())));
    }
    if !(domain[1] > domain[0]) {
        return Err(Error::invalid(format!("empty fit domain {domain:?}")));
    }
    if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(Error::invalid("fit weights must be finite and non-negative"));
    }
    let used: Vec<usize> = (0..xs.len()).filter(|&i| weights[i] > 0.0).collect();
    let cols = degree + 1;
    if used.len() < cols {
        return Err(Error::RankDeficient(format!(
            "{} weighted points for {cols} coefficients",
            used.len()
        )));
    }

    let mut poly = ChebyshevPoly {
        domain,
        coefficients: vec![0.0; cols],
    };
    let mut a = DMatrix::<f64>::zeros(used.len(), cols);
    let mut b = DVector::<f64>::zeros(used.len());
    let mut row = vec![0.0; cols];
    for (r, &i) in used.iter().enumerate() {
        let sw = weights[i].sqrt();
        chebyshev_row(poly.normalize(xs[i]), degree, &mut row);
        for (c, v) in row.iter().enumerate() {
            a[(r, c)] = sw * v;
        }
        b[r] = sw * ys[i];
    }

    let scales: Vec<f64> = (0..cols).map(|c| a.column(c).norm()).collect();
    if let Some(c) = scales.iter().position(|&s| s == 0.0) {
        return Err(Error::RankDeficient(format!("column {c} is identically zero")));
    }
    for (c, s) in scales.iter().enumerate() {
        a.column_mut(c).scale_mut(1.0 / s);
    }

    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > RANK_TOL * smax) {
        return Err(Error::RankDeficient(format!(
            "condition number {:.3e} exceeds {:.0e}",
            smax / smin,
            1.0 / RANK_TOL
        )));
    }
    let x = svd
        .solve(&b, 0.0)
        .map_err(|e| Error::RankDeficient(e.to_string()))?;
    for (c, s) in scales.iter().enumerate() {
        poly.coefficients[c] = x[c] / s;
    }
    Ok(poly)
}
