//! Projection-onto-convex-hull joint channel estimation and data detection.
//!
//! Each iteration multiplies the current symbol iterate by the preprocessed
//! matrix `Ghat`, scales by `rho`, projects every entry onto the convex hull of
//! the constellation and re-pins the pilot slot:
//!
//! ```text
//! q~(t) = Ghat s(t-1)
//! s(t)  = prox_C(rho q~(t)),   s_1(t) = s_check
//! ```
//!
//! `Ghat` is either `gamma^-1 (I - G/alpha)^-1` (exact) or
//! `gamma^-1 (I + G/alpha)` (approximate). The biconvex objective and its
//! q-gradient are exposed for convergence diagnostics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    invert_shifted, neumann_two_term, spectral_norm, ComplexMatrix, ComplexVector, C64,
    SPECTRAL_MAX_ITER, SPECTRAL_TOL,
};
use crate::model::{Constellation, ReceivedBlock};

/// How `Ghat` is obtained from the Gram matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Cholesky-based inverse of `I - G/alpha`.
    Exact,
    /// Two-term Neumann series `I + G/alpha`.
    Approx,
}

/// Normalisation of `Ghat`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaRule {
    /// `gamma` is the largest `max(|Re|, |Im|)` entry of the unscaled matrix.
    MaxAbsEntry,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProxParams {
    /// `alpha = alpha_scale * ||G||`; must exceed one.
    pub alpha_scale: f64,
    /// `rho = 2^rho_log2`.
    pub rho_log2: i32,
    pub t_max: usize,
    pub mode: Mode,
    pub gamma_rule: GammaRule,
}

impl Default for ProxParams {
    fn default() -> Self {
        Self {
            alpha_scale: 2.0,
            rho_log2: 1,
            t_max: 5,
            mode: Mode::Exact,
            gamma_rule: GammaRule::MaxAbsEntry,
        }
    }
}

impl ProxParams {
    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_t_max(mut self, t_max: usize) -> Self {
        self.t_max = t_max;
        self
    }

    pub fn with_rho_log2(mut self, rho_log2: i32) -> Self {
        self.rho_log2 = rho_log2;
        self
    }

    pub fn with_alpha_scale(mut self, alpha_scale: f64) -> Self {
        self.alpha_scale = alpha_scale;
        self
    }

    pub fn rho(&self) -> f64 {
        2f64.powi(self.rho_log2)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_scale > 1.0) || !self.alpha_scale.is_finite() {
            return Err(Error::Parameter(format!(
                "alpha_scale must exceed 1 so that alpha > ||G||, got {}",
                self.alpha_scale
            )));
        }
        if self.t_max == 0 {
            return Err(Error::Parameter("t_max must be at least 1".into()));
        }
        if !(-30..=30).contains(&self.rho_log2) {
            return Err(Error::Parameter(format!("rho_log2 {} out of range", self.rho_log2)));
        }
        if let GammaRule::Fixed(g) = self.gamma_rule {
            if !(g > 0.0) || !g.is_finite() {
                return Err(Error::Parameter(format!("gamma must be positive, got {g}")));
            }
        }
        Ok(())
    }
}

/// Scaled iteration matrix and the constants it was built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessedMatrix {
    pub ghat: ComplexMatrix,
    pub gamma: f64,
    pub alpha: f64,
    pub mode: Mode,
    /// Spectral norm of `G` used to set `alpha`.
    pub g_norm: f64,
    gram: ComplexMatrix,
}

impl PreprocessedMatrix {
    pub fn gram(&self) -> &ComplexMatrix {
        &self.gram
    }

    /// `theta = rho / gamma`, the projection gain of the unscaled iteration.
    pub fn theta(&self, params: &ProxParams) -> f64 {
        params.rho() / self.gamma
    }

    /// Norm-promotion weight `beta = alpha (1 - 1/theta)` implied by `rho`.
    ///
    /// Returns `None` when the reconstruction falls outside `0 < beta < alpha`,
    /// where the convergence theory does not apply.
    pub fn reconstructed_beta(&self, params: &ProxParams) -> Option<f64> {
        let beta = self.alpha * (1.0 - 1.0 / self.theta(params));
        (beta > 0.0 && beta < self.alpha).then_some(beta)
    }
}

/// One row of the per-iteration diagnostics trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    /// Biconvex objective `f(q(t), s(t))` with `beta` reconstructed from `rho`
    /// (NaN when the reconstruction is invalid).
    pub objective: f64,
    /// `alpha ||s(t-1) - s(t)||`, the norm of the q-gradient.
    pub grad_residual: f64,
    /// Smallest distance of a data entry to the hull boundary.
    pub boundary_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverState {
    pub s_cur: ComplexVector,
    pub q_cur: ComplexVector,
    pub iter: usize,
    pub trace: Vec<IterationRecord>,
}

impl SolverState {
    pub fn new(s0: ComplexVector) -> Self {
        let n = s0.len();
        Self { s_cur: s0, q_cur: ComplexVector::zeros(n), iter: 0, trace: Vec::new() }
    }
}

/// Output of [`solve`].
#[derive(Debug, Clone)]
pub struct Solution {
    pub s_hat: ComplexVector,
    pub h_hat: ComplexVector,
    pub state: SolverState,
    pub pre: PreprocessedMatrix,
}

/// Builds `Ghat`, `gamma` and `alpha` from the Gram matrix.
pub fn preprocess(g: &ComplexMatrix, params: &ProxParams) -> Result<PreprocessedMatrix> {
    params.validate()?;
    if !g.is_square() {
        return Err(Error::Dimension("Gram matrix must be square".into()));
    }
    let g_norm = match spectral_norm(g, SPECTRAL_TOL, SPECTRAL_MAX_ITER) {
        Ok(v) => v,
        // Frobenius norm bounds the spectral norm from above
        Err(Error::Convergence { .. }) => g.frobenius_norm(),
        Err(e) => return Err(e),
    };
    let alpha = if g_norm > 0.0 { params.alpha_scale * g_norm } else { params.alpha_scale };
    let unscaled = match params.mode {
        Mode::Exact => invert_shifted(g, alpha).map_err(|e| match e {
            Error::Parameter(m) => Error::Numeric(m),
            other => other,
        })?,
        Mode::Approx => neumann_two_term(g, alpha)?,
    };
    let gamma = match params.gamma_rule {
        GammaRule::MaxAbsEntry => unscaled.max_abs_component(),
        GammaRule::Fixed(v) => v,
    };
    if !(gamma > 0.0) {
        return Err(Error::Numeric("preprocessed matrix is zero".into()));
    }
    Ok(PreprocessedMatrix {
        ghat: unscaled.scaled(1.0 / gamma),
        gamma,
        alpha,
        mode: params.mode,
        g_norm,
        gram: g.clone(),
    })
}

/// Initial iterate `s_check * g_1 / G_11` from the first Gram column.
pub fn init_s(g: &ComplexMatrix, s_check: C64) -> Result<ComplexVector> {
    if !g.is_square() || g.rows() == 0 {
        return Err(Error::Dimension("Gram matrix must be square and non-empty".into()));
    }
    let n = g.rows();
    let threshold = 1e-12 * g.trace().re / n as f64;
    let g11 = g[(0, 0)].re;
    if !(g11 > threshold) || g11 <= 0.0 {
        return Err(Error::DegenerateInput("no received energy in the pilot slot".into()));
    }
    Ok(ComplexVector::from_raw((0..n).map(|k| s_check * g[(k, 0)] / g11).collect()))
}

/// Biconvex objective `-1/2 q^H G q + alpha/2 ||q - s||^2 - beta/2 ||s||^2`,
/// infinite when `s` leaves the hull.
pub fn objective_gram(
    q: &ComplexVector,
    s: &ComplexVector,
    g: &ComplexMatrix,
    alpha: f64,
    beta: f64,
    c: &Constellation,
) -> f64 {
    if !s.iter().all(|z| c.in_hull(*z, 1e-12)) {
        return f64::INFINITY;
    }
    let gq = ComplexVector::from_raw(g.mul_slice(q.as_slice()));
    let quad = q.dot_conj(&gq).re;
    let diff: f64 = q.iter().zip(s.iter()).map(|(a, b)| (a - b).norm_sqr()).sum();
    -0.5 * quad + 0.5 * alpha * diff - 0.5 * beta * s.norm_sqr()
}

/// [`objective_gram`] written in terms of the received block `Y`.
pub fn objective(
    q: &ComplexVector,
    s: &ComplexVector,
    y: &ComplexMatrix,
    alpha: f64,
    beta: f64,
    c: &Constellation,
) -> Result<f64> {
    if !s.iter().all(|z| c.in_hull(*z, 1e-12)) {
        return Ok(f64::INFINITY);
    }
    let yq = y.mul_vec(q)?;
    let diff: f64 = q.iter().zip(s.iter()).map(|(a, b)| (a - b).norm_sqr()).sum();
    Ok(-0.5 * yq.norm_sqr() + 0.5 * alpha * diff - 0.5 * beta * s.norm_sqr())
}

/// Analytic q-gradient `-G q + alpha (q - s)`.
pub fn gradient_q(g: &ComplexMatrix, q: &ComplexVector, s: &ComplexVector, alpha: f64) -> ComplexVector {
    let gq = g.mul_slice(q.as_slice());
    ComplexVector::from_raw(
        gq.iter()
            .zip(q.iter().zip(s.iter()))
            .map(|(gqk, (qk, sk))| -gqk + (qk - sk) * alpha)
            .collect(),
    )
}

fn boundary_gap(s: &ComplexVector, c: &Constellation) -> f64 {
    s.iter().skip(1).map(|z| c.boundary_distance(*z)).fold(f64::INFINITY, f64::min).min(
        if s.len() <= 1 { 0.0 } else { f64::INFINITY },
    )
}

/// One iteration: matrix-vector product, scaled projection, pilot pinning.
pub fn iterate_once(
    state: SolverState,
    pre: &PreprocessedMatrix,
    c: &Constellation,
    params: &ProxParams,
    s_check: C64,
) -> SolverState {
    let rho = params.rho();
    let q_tilde = ComplexVector::from_raw(pre.ghat.mul_slice(state.s_cur.as_slice()));
    let mut s_new = ComplexVector::from_raw(q_tilde.iter().map(|q| c.project(q * rho)).collect());
    if !s_new.is_empty() {
        s_new[0] = s_check;
    }

    let grad_residual = pre.alpha
        * state
            .s_cur
            .iter()
            .zip(s_new.iter())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
    let objective = match pre.reconstructed_beta(params) {
        Some(beta) => {
            let q = q_tilde.scaled(C64::new(pre.gamma, 0.0));
            objective_gram(&q, &s_new, &pre.gram, pre.alpha, beta, c)
        }
        None => f64::NAN,
    };
    let iter = state.iter + 1;
    let mut trace = state.trace;
    trace.push(IterationRecord { iter, objective, grad_residual, boundary_gap: boundary_gap(&s_new, c) });
    SolverState { s_cur: s_new, q_cur: q_tilde, iter, trace }
}

/// Entry-wise nearest constellation point.
pub fn hard_decision(s: &ComplexVector, c: &Constellation) -> ComplexVector {
    ComplexVector::from_raw(s.iter().map(|z| c.nearest(*z)).collect())
}

/// Channel estimate `Y s / ||s||^2`.
pub fn channel_estimate(y: &ComplexMatrix, s_hat: &ComplexVector) -> Result<ComplexVector> {
    let energy = s_hat.norm_sqr();
    if !(energy > 0.0) {
        return Err(Error::DegenerateInput("zero symbol vector".into()));
    }
    Ok(y.mul_vec(s_hat)?.scaled(C64::new(1.0 / energy, 0.0)))
}

/// Full solver: preprocessing, initialisation, `t_max` iterations, hard
/// decisions and the channel estimate.
pub fn solve(
    block: &ReceivedBlock,
    c: &Constellation,
    params: &ProxParams,
    s_check: C64,
) -> Result<Solution> {
    let pre = preprocess(block.gram(), params)?;
    let mut state = SolverState::new(init_s(block.gram(), s_check)?);
    for _ in 0..params.t_max {
        state = iterate_once(state, &pre, c, params, s_check);
    }
    let s_hat = hard_decision(&state.s_cur, c);
    let h_hat = channel_estimate(block.y(), &s_hat)?;
    Ok(Solution { s_hat, h_hat, state, pre })
}
