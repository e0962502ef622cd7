//! Primitivity and the Perron–Frobenius pair of a substitution matrix.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::substitution::RandomSubstitution;

/// Stopping threshold on the sup-norm change between normalised iterates.
pub const POWER_ITERATION_TOL: f64 = 1e-13;
const MAX_POWER_ITERATIONS: usize = 1_000_000;
const EXPANSION_MARGIN: f64 = 1e-9;

/// Perron–Frobenius data of a primitive substitution matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PerronData {
    pub matrix: Matrix,
    pub lambda: f64,
    /// Positive right eigenvector with `‖R‖₁ = 1`.
    pub right: Vec<f64>,
    pub iterations: usize,
}

impl PerronData {
    pub fn of(subst: &RandomSubstitution) -> Result<Self> {
        perron_eigen(&subst.substitution_matrix())
    }

    /// `‖M R − λ R‖_∞`.
    pub fn residual(&self) -> f64 {
        self.matrix
            .mul_vec(&self.right)
            .iter()
            .zip(&self.right)
            .map(|(mr, r)| (mr - self.lambda * r).abs())
            .fold(0.0, f64::max)
    }
}

fn boolean_product(a: &[bool], b: &[bool], d: usize) -> Vec<bool> {
    let mut out = vec![false; d * d];
    for i in 0..d {
        for k in 0..d {
            if !a[i * d + k] {
                continue;
            }
            for j in 0..d {
                out[i * d + j] |= b[k * d + j];
            }
        }
    }
    out
}

/// Whether `M^e` is entrywise positive for the Wielandt exponent `e = (d−1)² + 1`.
pub fn is_primitive(m: &Matrix) -> bool {
    let d = m.dim();
    if d == 0 || !m.is_nonnegative() {
        return false;
    }
    let support: Vec<bool> = m.rows().iter().flatten().map(|&x| x > 0.0).collect();
    let mut e = (d - 1) * (d - 1) + 1;
    let mut result: Option<Vec<bool>> = None;
    let mut base = support;
    while e > 0 {
        if e & 1 == 1 {
            result = Some(match result {
                None => base.clone(),
                Some(r) => boolean_product(&r, &base, d),
            });
        }
        e >>= 1;
        if e > 0 {
            base = boolean_product(&base, &base, d);
        }
    }
    result.is_some_and(|r| r.iter().all(|&x| x))
}

/// Perron pair by power iteration from the uniform vector.
pub fn perron_eigen(m: &Matrix) -> Result<PerronData> {
    let d = m.dim();
    perron_eigen_from(m, &vec![1.0; d])
}

/// Perron pair by power iteration from a given positive start vector.
pub fn perron_eigen_from(m: &Matrix, start: &[f64]) -> Result<PerronData> {
    if !is_primitive(m) {
        return Err(Error::NotPrimitive);
    }
    if start.len() != m.dim() || start.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::Domain(
            "start vector must be positive with one entry per letter",
        ));
    }
    let mut v = normalise(start.to_vec());
    let mut change = f64::INFINITY;
    let mut iterations = 0;
    while change >= POWER_ITERATION_TOL {
        if iterations == MAX_POWER_ITERATIONS {
            return Err(Error::NoConvergence {
                residual: change,
                iterations,
            });
        }
        let next = normalise(m.mul_vec(&v));
        change = next
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        v = next;
        iterations += 1;
    }
    let lambda = m.mul_vec(&v).iter().sum::<f64>() / v.iter().sum::<f64>();
    if lambda <= 1.0 + EXPANSION_MARGIN {
        return Err(Error::NonExpanding { lambda });
    }
    Ok(PerronData {
        matrix: m.clone(),
        lambda,
        right: v,
        iterations,
    })
}

fn normalise(mut v: Vec<f64>) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    for x in &mut v {
        *x /= s;
    }
    v
}
