//! Dense complex matrices and the handful of Hermitian primitives the solver
//! needs: Gram products, power-iteration spectral norms, the shifted inverse
//! `(I - G/alpha)^-1` via Cholesky, and its two-term Neumann approximation.

use std::ops::{Index, IndexMut};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

pub type C64 = Complex64;

/// Default tolerance of the spectral-norm estimator.
pub const SPECTRAL_TOL: f64 = 1e-9;
/// Default iteration budget of the spectral-norm estimator.
pub const SPECTRAL_MAX_ITER: usize = 10_000;

const START_SEED: u64 = 0x5EED_0001;
const PERTURB_SEED: u64 = 0x5EED_0002;

/// Complex vector with finite entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexVector {
    entries: Vec<C64>,
}

impl ComplexVector {
    pub fn new(entries: Vec<C64>) -> Result<Self> {
        if entries.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Parameter("vector has non-finite entries".into()));
        }
        Ok(Self { entries })
    }

    pub(crate) fn from_raw(entries: Vec<C64>) -> Self {
        Self { entries }
    }

    pub fn zeros(len: usize) -> Self {
        Self { entries: vec![C64::new(0.0, 0.0); len] }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.entries
    }

    pub fn into_vec(self) -> Vec<C64> {
        self.entries
    }

    pub fn iter(&self) -> std::slice::Iter<'_, C64> {
        self.entries.iter()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.entries.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// `sum_k conj(self_k) * other_k`
    pub fn dot_conj(&self, other: &ComplexVector) -> C64 {
        self.entries.iter().zip(&other.entries).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn scaled(&self, c: C64) -> ComplexVector {
        Self::from_raw(self.entries.iter().map(|z| z * c).collect())
    }
}

impl Index<usize> for ComplexVector {
    type Output = C64;
    fn index(&self, i: usize) -> &C64 {
        &self.entries[i]
    }
}

impl IndexMut<usize> for ComplexVector {
    fn index_mut(&mut self, i: usize) -> &mut C64 {
        &mut self.entries[i]
    }
}

/// Row-major dense complex matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<C64>,
}

impl ComplexMatrix {
    pub fn new(rows: usize, cols: usize, entries: Vec<C64>) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} entries for a {rows}x{cols} matrix",
                entries.len()
            )));
        }
        if entries.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Parameter("matrix has non-finite entries".into()));
        }
        Ok(Self { rows, cols, entries })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, entries: vec![C64::new(0.0, 0.0); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut entries = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                entries.push(f(i, j));
            }
        }
        Self { rows, cols, entries }
    }

    /// Diagonal matrix with real entries.
    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = C64::new(v, 0.0);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.entries
    }

    pub fn row(&self, i: usize) -> &[C64] {
        &self.entries[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> ComplexVector {
        ComplexVector::from_raw((0..self.rows).map(|i| self[(i, j)]).collect())
    }

    pub fn conj_transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            entries: self.entries.iter().map(|z| z * c).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(&self, other: &Self, f: impl Fn(C64, C64) -> C64) -> Result<Self> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::Dimension(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            entries: self.entries.iter().zip(&other.entries).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::Dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == C64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..other.cols {
                    out.entries[i * other.cols + j] += a * other[(k, j)];
                }
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, x: &ComplexVector) -> Result<ComplexVector> {
        if self.cols != x.len() {
            return Err(Error::Dimension(format!(
                "cannot multiply {}x{} by vector of length {}",
                self.rows,
                self.cols,
                x.len()
            )));
        }
        Ok(ComplexVector::from_raw(self.mul_slice(x.as_slice())))
    }

    pub(crate) fn mul_slice(&self, x: &[C64]) -> Vec<C64> {
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest `max(|Re|, |Im|)` over all entries.
    pub fn max_abs_component(&self) -> f64 {
        self.entries.iter().fold(0.0, |m, z| m.max(z.re.abs()).max(z.im.abs()))
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// Largest entrywise deviation from `conj_transpose`.
    pub fn hermitian_defect(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let mut worst: f64 = 0.0;
        for i in 0..self.rows {
            for j in i..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        worst
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.entries[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.entries[i * self.cols + j]
    }
}

/// Gram matrix `Y^H Y`.
///
/// The upper triangle is computed and mirrored, so the result is Hermitian by
/// construction and its diagonal is real and non-negative.
pub fn gram(y: &ComplexMatrix) -> Result<ComplexMatrix> {
    if y.rows() == 0 || y.cols() == 0 {
        return Err(Error::Dimension("gram of an empty matrix".into()));
    }
    let n = y.cols();
    let mut g = ComplexMatrix::zeros(n, n);
    for i in 0..n {
        let diag: f64 = (0..y.rows()).map(|b| y[(b, i)].norm_sqr()).sum();
        g[(i, i)] = C64::new(diag, 0.0);
        for j in i + 1..n {
            let v: C64 = (0..y.rows()).map(|b| y[(b, i)].conj() * y[(b, j)]).sum();
            g[(i, j)] = v;
            g[(j, i)] = v.conj();
        }
    }
    Ok(g)
}

struct PowerRun {
    estimate: f64,
    vector: Vec<C64>,
    converged: bool,
    iterations: usize,
}

fn normalize(v: &mut [C64]) -> f64 {
    let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|z| *z /= n);
    }
    n
}

fn random_unit(n: usize, seed: u64) -> Vec<C64> {
    let mut rng = rng::stream(seed);
    let mut v: Vec<C64> = (0..n)
        .map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    normalize(&mut v);
    v
}

fn power_run(a: &ComplexMatrix, mut v: Vec<C64>, tol: f64, budget: usize) -> PowerRun {
    let mut estimate: f64 = 0.0;
    for it in 1..=budget {
        let w = a.mul_slice(&v);
        let lambda: f64 = v.iter().zip(&w).map(|(x, y)| (x.conj() * y).re).sum();
        estimate = estimate.max(lambda);
        let residual = w
            .iter()
            .zip(&v)
            .map(|(y, x)| (y - x * lambda).norm_sqr())
            .sum::<f64>()
            .sqrt();
        if residual <= tol * lambda.abs() {
            return PowerRun { estimate: lambda, vector: v, converged: true, iterations: it };
        }
        let mut next = w;
        if normalize(&mut next) == 0.0 {
            // v sits in the null space; leave it to the perturbed restart.
            return PowerRun { estimate, vector: v, converged: false, iterations: it };
        }
        v = next;
    }
    PowerRun { estimate, vector: v, converged: false, iterations: budget }
}

/// Largest eigenvalue of a Hermitian PSD matrix by power iteration.
///
/// The start vector is derived from a fixed seed. After the first run (either
/// converged or stalled at half the budget) a second run starts from the first
/// run's vector plus a perturbation drawn from a secondary seed, which recovers
/// the dominant eigenvalue when the first start was orthogonal to it.
pub fn spectral_norm(a: &ComplexMatrix, tol: f64, max_iter: usize) -> Result<f64> {
    if !a.is_square() {
        return Err(Error::Dimension(format!(
            "spectral norm of a non-square {}x{} matrix",
            a.rows(),
            a.cols()
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::Parameter(format!("tolerance must be positive, got {tol}")));
    }
    let n = a.rows();
    if n == 0 || a.as_slice().iter().all(|z| *z == C64::new(0.0, 0.0)) {
        return Ok(0.0);
    }
    let half = (max_iter / 2).max(1);
    let first = power_run(a, random_unit(n, START_SEED), tol, half);

    let mut restart = first.vector.clone();
    for (x, p) in restart.iter_mut().zip(random_unit(n, PERTURB_SEED)) {
        *x += p;
    }
    normalize(&mut restart);
    let second = power_run(a, restart, tol, max_iter.saturating_sub(first.iterations).max(1));

    let best = first.estimate.max(second.estimate);
    match (first.converged, second.converged) {
        (_, true) => Ok(second.estimate.max(first.estimate)),
        (true, false) if second.estimate <= first.estimate * (1.0 + tol) => Ok(first.estimate),
        _ => Err(Error::Convergence { iterations: max_iter, best }),
    }
}

/// Spectral norm of an arbitrary matrix, `sqrt(lambda_max(A^H A))`.
pub fn operator_norm(a: &ComplexMatrix) -> Result<f64> {
    let g = gram(a)?;
    Ok(spectral_norm(&g, SPECTRAL_TOL, SPECTRAL_MAX_ITER)?.max(0.0).sqrt())
}

/// Lower-triangular Cholesky factor of a Hermitian positive-definite matrix.
pub fn cholesky(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    if !a.is_square() {
        return Err(Error::Dimension("cholesky of a non-square matrix".into()));
    }
    let n = a.rows();
    let mut l = ComplexMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::Numeric(format!("matrix not positive definite at pivot {j}")));
        }
        let d = d.sqrt();
        l[(j, j)] = C64::new(d, 0.0);
        for i in j + 1..n {
            let mut v = a[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = v / d;
        }
    }
    Ok(l)
}

/// Inverse of a Hermitian positive-definite matrix through its Cholesky factor.
pub fn hermitian_inverse(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    let l = cholesky(a)?;
    let n = a.rows();
    let mut inv = ComplexMatrix::zeros(n, n);
    let mut y = vec![C64::new(0.0, 0.0); n];
    for col in 0..n {
        // L y = e_col
        for i in 0..n {
            let mut v = if i == col { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) };
            for k in 0..i {
                v -= l[(i, k)] * y[k];
            }
            y[i] = v / l[(i, i)].re;
        }
        // L^H x = y
        for i in (0..n).rev() {
            let mut v = y[i];
            for k in i + 1..n {
                v -= l[(k, i)].conj() * inv[(k, col)];
            }
            inv[(i, col)] = v / l[(i, i)].re;
        }
    }
    for i in 0..n {
        inv[(i, i)] = C64::new(inv[(i, i)].re, 0.0);
        for j in i + 1..n {
            let avg = (inv[(i, j)] + inv[(j, i)].conj()) * 0.5;
            inv[(i, j)] = avg;
            inv[(j, i)] = avg.conj();
        }
    }
    if inv.as_slice().iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Numeric("inverse has non-finite entries".into()));
    }
    Ok(inv)
}

fn shifted(g: &ComplexMatrix, alpha: f64) -> Result<ComplexMatrix> {
    if !g.is_square() {
        return Err(Error::Dimension(format!("{}x{} matrix is not square", g.rows(), g.cols())));
    }
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::Parameter(format!("alpha must be positive and finite, got {alpha}")));
    }
    g.scaled(-1.0 / alpha).add(&ComplexMatrix::identity(g.rows()))
}

/// `(I - G/alpha)^-1` for Hermitian PSD `G` and `alpha > ||G||`.
///
/// A failed factorization means `I - G/alpha` is not positive definite, i.e.
/// `alpha <= ||G||`, and is reported as a parameter error.
pub fn invert_shifted(g: &ComplexMatrix, alpha: f64) -> Result<ComplexMatrix> {
    let a = shifted(g, alpha)?;
    hermitian_inverse(&a).map_err(|e| match e {
        Error::Numeric(_) => Error::Parameter(format!(
            "alpha = {alpha} does not exceed the spectral norm of G"
        )),
        other => other,
    })
}

/// Two-term Neumann approximation `I + G/alpha` of the shifted inverse.
pub fn neumann_two_term(g: &ComplexMatrix, alpha: f64) -> Result<ComplexMatrix> {
    if !g.is_square() {
        return Err(Error::Dimension(format!("{}x{} matrix is not square", g.rows(), g.cols())));
    }
    if !(alpha > 0.0) {
        return Err(Error::Parameter(format!("alpha must be positive, got {alpha}")));
    }
    Ok(ComplexMatrix::from_fn(g.rows(), g.cols(), |i, j| {
        let z = g[(i, j)] / alpha;
        if i == j {
            z + 1.0
        } else {
            z
        }
    }))
}

/// Upper bound `r^2 / (1 - r)`, `r = ||G||/alpha`, on the spectral-norm error of
/// the two-term Neumann approximation.
pub fn neumann_error_bound(g: &ComplexMatrix, alpha: f64) -> Result<f64> {
    let norm = spectral_norm(g, SPECTRAL_TOL, SPECTRAL_MAX_ITER)?;
    neumann_bound_from_ratio(norm / alpha)
}

pub(crate) fn neumann_bound_from_ratio(r: f64) -> Result<f64> {
    if !(r < 1.0) || r.is_nan() {
        return Err(Error::Parameter(format!(
            "Neumann bound needs ||G||/alpha < 1, got {r}"
        )));
    }
    Ok(r * r / (1.0 - r))
}
