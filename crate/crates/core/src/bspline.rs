//! Clamped cubic B-spline bases on a uniform knot grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const CUBIC: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub domain_lo: f64,
    pub domain_hi: f64,
    pub n_basis: usize,
    pub degree: usize,
}

impl BasisSpec {
    pub fn cubic(domain_lo: f64, domain_hi: f64, n_basis: usize) -> Result<Self> {
        let spec = BasisSpec {
            domain_lo,
            domain_hi,
            n_basis,
            degree: CUBIC,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.degree != CUBIC {
            return Err(Error::InvalidSpec(format!(
                "only cubic bases are supported (degree {})",
                self.degree
            )));
        }
        if !(self.domain_lo < self.domain_hi) || !self.domain_lo.is_finite() || !self.domain_hi.is_finite() {
            return Err(Error::InvalidSpec(format!(
                "domain [{}, {}] is empty",
                self.domain_lo, self.domain_hi
            )));
        }
        if self.n_basis < self.degree + 1 {
            return Err(Error::InvalidSpec(format!(
                "n_basis = {} is below degree + 1 = {}",
                self.n_basis,
                self.degree + 1
            )));
        }
        Ok(())
    }
}

/// Clamped knot vector of length `n_basis + degree + 1` with equally spaced
/// interior knots.
pub fn make_knots(spec: &BasisSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let k = spec.degree;
    let n_interior = spec.n_basis - k - 1;
    let width = spec.domain_hi - spec.domain_lo;
    let mut knots = Vec::with_capacity(spec.n_basis + k + 1);
    knots.extend(std::iter::repeat_n(spec.domain_lo, k + 1));
    for m in 1..=n_interior {
        knots.push(spec.domain_lo + width * m as f64 / (n_interior + 1) as f64);
    }
    knots.extend(std::iter::repeat_n(spec.domain_hi, k + 1));
    Ok(knots)
}

/// Index of the knot span containing `s`; `s == domain_hi` belongs to the last span.
fn find_span(knots: &[f64], n_basis: usize, degree: usize, s: f64) -> usize {
    if s >= knots[n_basis] {
        return n_basis - 1;
    }
    let (mut lo, mut hi) = (degree, n_basis);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if s < knots[mid] {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    lo
}

/// The `degree + 1` nonzero basis values at `s` (Cox-de Boor triangle)
/// together with the index of the first one.
fn nonzero_basis(knots: &[f64], spec: &BasisSpec, s: f64) -> (usize, Vec<f64>) {
    let k = spec.degree;
    let span = find_span(knots, spec.n_basis, k, s);
    let mut values = vec![0.0; k + 1];
    let mut left = vec![0.0; k + 1];
    let mut right = vec![0.0; k + 1];
    values[0] = 1.0;
    for j in 1..=k {
        left[j] = s - knots[span + 1 - j];
        right[j] = knots[span + j] - s;
        let mut saved = 0.0;
        for r in 0..j {
            let denom = right[r + 1] + left[j - r];
            let temp = if denom > 0.0 { values[r] / denom } else { 0.0 };
            values[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        values[j] = saved;
    }
    (span - k, values)
}

fn check_domain(spec: &BasisSpec, s: f64) -> Result<()> {
    if !(spec.domain_lo..=spec.domain_hi).contains(&s) {
        return Err(Error::Domain(format!(
            "point {s} lies outside [{}, {}]",
            spec.domain_lo, spec.domain_hi
        )));
    }
    Ok(())
}

pub fn eval_basis(spec: &BasisSpec, s: f64) -> Result<Vec<f64>> {
    let knots = make_knots(spec)?;
    check_domain(spec, s)?;
    let mut out = vec![0.0; spec.n_basis];
    let (first, values) = nonzero_basis(&knots, spec, s);
    out[first..first + values.len()].copy_from_slice(&values);
    Ok(out)
}

/// r x p matrix of basis values on an ascending grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub values: Matrix,
    pub grid: Vec<f64>,
}

impl DesignMatrix {
    pub fn n_points(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_basis(&self) -> usize {
        self.values.ncols()
    }
}

pub fn build_design(spec: &BasisSpec, grid: &[f64]) -> Result<DesignMatrix> {
    let knots = make_knots(spec)?;
    if grid.is_empty() {
        return Err(Error::Input("grid is empty".into()));
    }
    if let Some(w) = grid.windows(2).position(|w| !(w[0] < w[1])) {
        return Err(Error::Input(format!(
            "grid is not strictly ascending at position {}",
            w + 1
        )));
    }
    let mut values = Matrix::zeros(grid.len(), spec.n_basis);
    for (row, &s) in grid.iter().enumerate() {
        check_domain(spec, s)?;
        let (first, vals) = nonzero_basis(&knots, spec, s);
        for (offset, v) in vals.into_iter().enumerate() {
            values[(row, first + offset)] = v;
        }
    }
    Ok(DesignMatrix {
        values,
        grid: grid.to_vec(),
    })
}

/// Greville abscissae: knot averages, one per basis function.
pub fn greville(spec: &BasisSpec) -> Result<Vec<f64>> {
    let knots = make_knots(spec)?;
    let k = spec.degree;
    Ok((0..spec.n_basis)
        .map(|j| knots[j + 1..=j + k].iter().sum::<f64>() / k as f64)
        .collect())
}

/// Band of the domain represented by coefficient `j` (0-based): the interval
/// between the midpoints of neighbouring Greville abscissae. The bands tile
/// `[domain_lo, domain_hi]`.
pub fn band_of_node(spec: &BasisSpec, j: usize) -> Result<(f64, f64)> {
    if j >= spec.n_basis {
        return Err(Error::Input(format!(
            "node {j} out of range for {} basis functions",
            spec.n_basis
        )));
    }
    let g = greville(spec)?;
    let lo = if j == 0 {
        spec.domain_lo
    } else {
        0.5 * (g[j - 1] + g[j])
    };
    let hi = if j + 1 == spec.n_basis {
        spec.domain_hi
    } else {
        0.5 * (g[j] + g[j + 1])
    };
    Ok((lo, hi))
}

/// Equally spaced grid of `r` points covering `[lo, hi]`, endpoints included.
pub fn uniform_grid(lo: f64, hi: f64, r: usize) -> Vec<f64> {
    match r {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..r)
            .map(|l| {
                if l + 1 == r {
                    hi
                } else {
                    lo + (hi - lo) * l as f64 / (r - 1) as f64
                }
            })
            .collect(),
    }
}
