use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    gram, invert_shifted, neumann_error_bound, neumann_two_term, spectral_norm, ComplexMatrix, C64,
    SPECTRAL_MAX_ITER, SPECTRAL_TOL,
};
use crate::model::{
    gen_rayleigh_channel, random_data_vector, snr_to_n0, transmit, Constellation, TransmissionGroundTruth,
};
use crate::prox::{gradient_q, init_s, iterate_once, preprocess, Mode, ProxParams, SolverState};
use crate::rng::{self, Purpose};

/// Settings of the convergence, boundary and approximation suites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    /// Exact-mode parameters; `t_max` is the iteration budget.
    pub params: ProxParams,
    /// Converged once `alpha ||s(t-1) - s(t)|| < grad_tol * alpha * sqrt(K+1)`.
    pub grad_tol: f64,
    pub boundary_tol: f64,
    /// Relative tolerance of the q-gradient identity.
    pub identity_tol: f64,
    pub neumann_cases: usize,
    pub neumann_ratios: Vec<f64>,
    /// Relative slack on the Neumann bound; the bound is attained for PSD `G`.
    pub neumann_slack: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            params: ProxParams::default().with_rho_log2(2).with_t_max(100).with_mode(Mode::Exact),
            grad_tol: 1e-6,
            boundary_tol: 1e-6,
            identity_tol: 1e-10,
            neumann_cases: 50,
            neumann_ratios: vec![1.1, 1.5, 2.0, 4.0],
            neumann_slack: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub suite: String,
    pub instance: usize,
    /// Seed reproducing the instance.
    pub seed: u64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TheoremReport {
    pub instances: usize,
    /// Instances whose reconstructed `beta` lies outside `(0, alpha)`.
    pub skipped: Vec<u64>,
    pub iterations_checked: usize,
    /// Largest relative objective increase seen (negative: always decreased).
    pub worst_objective_increase: f64,
    pub converged: usize,
    /// Largest `residual / threshold` at the end of each instance.
    pub worst_final_residual_ratio: f64,
    pub boundary_checked: usize,
    /// Mean fraction of data entries on the hull boundary at convergence.
    pub boundary_fraction: f64,
    pub identity_checked: usize,
    pub worst_identity_error: f64,
    pub neumann_checked: usize,
    /// Largest measured error divided by the bound.
    pub worst_neumann_ratio: f64,
    pub violations: Vec<Violation>,
}

impl TheoremReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn violations_of(&self, suite: &str) -> usize {
        self.violations.iter().filter(|v| v.suite == suite).count()
    }

    pub fn summary(&self) -> String {
        format!(
            "instances {} (skipped {}), converged {}, worst objective increase {:.3e}, worst residual ratio {:.3e}; \
             boundary checked {} (entry fraction {:.3}); identity checked {} (worst {:.3e}); \
             Neumann cases {} (worst measured/bound {:.6}); violations {}",
            self.instances,
            self.skipped.len(),
            self.converged,
            self.worst_objective_increase,
            self.worst_final_residual_ratio,
            self.boundary_checked,
            self.boundary_fraction,
            self.identity_checked,
            self.worst_identity_error,
            self.neumann_checked,
            self.worst_neumann_ratio,
            self.violations.len()
        )
    }
}

/// Runs the suites with default options.
pub fn verify_theorems(seed: u64, n_instances: usize) -> Result<TheoremReport> {
    verify_theorems_with(seed, n_instances, &VerifyOptions::default())
}

pub fn verify_theorems_with(seed: u64, n_instances: usize, opts: &VerifyOptions) -> Result<TheoremReport> {
    if opts.params.mode != Mode::Exact {
        return Err(Error::Parameter("the convergence suites need exact preprocessing".into()));
    }
    opts.params.validate()?;
    let mut report = TheoremReport {
        worst_objective_increase: f64::NEG_INFINITY,
        ..Default::default()
    };
    let mut boundary_sum = 0.0;
    for i in 0..n_instances {
        let inst_seed: u64 = rng::substream(seed, i as u64, Purpose::Instance).random();
        convergence_instance(i, inst_seed, opts, &mut report, &mut boundary_sum)?;
    }
    if report.boundary_checked > 0 {
        report.boundary_fraction = boundary_sum / report.boundary_checked as f64;
    }
    for i in 0..opts.neumann_cases {
        let inst_seed: u64 = rng::substream(seed, (n_instances + i) as u64, Purpose::Instance).random();
        neumann_case(i, inst_seed, opts, &mut report)?;
    }
    Ok(report)
}

fn violation(report: &mut TheoremReport, suite: &str, instance: usize, seed: u64, detail: String) {
    report.violations.push(Violation { suite: suite.into(), instance, seed, detail });
}

fn convergence_instance(
    index: usize,
    seed: u64,
    opts: &VerifyOptions,
    report: &mut TheoremReport,
    boundary_sum: &mut f64,
) -> Result<()> {
    let mut r = rng::stream(seed);
    let b = [4, 16][r.random_range(0..2)];
    let k = [4, 16][r.random_range(0..2)];
    let c = if r.random::<bool>() { Constellation::qpsk() } else { Constellation::bpsk() };
    let snr = r.random_range(-5.0..15.0);
    let h = gen_rayleigh_channel(b, &mut r)?;
    let s = random_data_vector(&c, k, c.pilot(), &mut r)?;
    let blk = transmit(&TransmissionGroundTruth::new(s, h, snr_to_n0(snr, &c))?, &mut r)?;
    let identity_at = r.random_range(1..=opts.params.t_max.min(5));
    report.instances += 1;

    let params = &opts.params;
    let pre = preprocess(blk.gram(), params)?;
    if pre.reconstructed_beta(params).is_none() {
        report.skipped.push(seed);
        return Ok(());
    }
    let threshold = opts.grad_tol * pre.alpha * ((k + 1) as f64).sqrt();
    let mut state = SolverState::new(init_s(blk.gram(), c.pilot())?);
    let mut last = f64::INFINITY;
    let mut converged = false;
    let mut residual = f64::INFINITY;
    let mut identity_done = false;
    for t in 1..=params.t_max {
        let prev = state.s_cur.clone();
        state = iterate_once(state, &pre, &c, params, c.pilot());
        let rec = *state.trace.last().expect("one record per iteration");
        report.iterations_checked += 1;
        let scale = last.abs().max(rec.objective.abs()).max(1.0);
        if last.is_finite() {
            let increase = (rec.objective - last) / scale;
            report.worst_objective_increase = report.worst_objective_increase.max(increase);
            if !(rec.objective <= last + 1e-12 * scale) {
                violation(
                    report,
                    "monotonicity",
                    index,
                    seed,
                    format!("objective rose from {last} to {} at iteration {t}", rec.objective),
                );
            }
        }
        last = rec.objective;

        // checked once per instance, earlier if the run converges first
        let converging = rec.grad_residual < threshold;
        if !identity_done && (t == identity_at || converging) {
            identity_done = true;
            let q = state.q_cur.scaled(C64::new(pre.gamma, 0.0));
            let grad = gradient_q(blk.gram(), &q, &state.s_cur, pre.alpha);
            let err = grad
                .iter()
                .zip(prev.iter().zip(state.s_cur.iter()))
                .map(|(g, (a, b))| (g - (a - b) * pre.alpha).norm_sqr())
                .sum::<f64>()
                .sqrt();
            let rel = err / (pre.alpha * prev.norm().max(state.s_cur.norm())).max(f64::MIN_POSITIVE);
            report.identity_checked += 1;
            report.worst_identity_error = report.worst_identity_error.max(rel);
            if !(rel <= opts.identity_tol) {
                violation(report, "gradient_identity", index, seed, format!("relative error {rel:e} at iteration {t}"));
            }
        }

        residual = rec.grad_residual;
        if residual < threshold {
            converged = true;
            break;
        }
    }
    report.worst_final_residual_ratio = report.worst_final_residual_ratio.max(residual / threshold);
    if !converged {
        violation(
            report,
            "convergence",
            index,
            seed,
            format!("residual {residual:e} above {threshold:e} after {} iterations", params.t_max),
        );
        return Ok(());
    }
    report.converged += 1;

    let data: Vec<C64> = state.s_cur.iter().skip(1).copied().collect();
    if data.iter().all(|z| *z == C64::new(0.0, 0.0)) {
        return Ok(());
    }
    let on_boundary = data.iter().filter(|z| c.boundary_distance(**z) <= opts.boundary_tol).count();
    report.boundary_checked += 1;
    *boundary_sum += on_boundary as f64 / data.len() as f64;
    if on_boundary == 0 {
        violation(report, "boundary", index, seed, "no data entry on the hull boundary".into());
    }
    Ok(())
}

fn random_psd(n: usize, r: &mut crate::rng::Stream) -> Result<ComplexMatrix> {
    let rows = n + 2;
    let a = ComplexMatrix::from_fn(rows, n, |_, _| {
        let re: f64 = r.sample(StandardNormal);
        let im: f64 = r.sample(StandardNormal);
        C64::new(re, im)
    });
    gram(&a)
}

fn neumann_case(index: usize, seed: u64, opts: &VerifyOptions, report: &mut TheoremReport) -> Result<()> {
    let mut r = rng::stream(seed);
    let n = r.random_range(2..=17);
    let g = random_psd(n, &mut r)?;
    let norm = spectral_norm(&g, SPECTRAL_TOL, SPECTRAL_MAX_ITER)?;
    let mut previous: Option<f64> = None;
    for &ratio in &opts.neumann_ratios {
        let alpha = ratio * norm;
        let exact = invert_shifted(&g, alpha)?;
        let approx = neumann_two_term(&g, alpha)?;
        let measured = spectral_norm(&exact.sub(&approx)?, SPECTRAL_TOL, SPECTRAL_MAX_ITER)?;
        let bound = neumann_error_bound(&g, alpha)?;
        report.neumann_checked += 1;
        report.worst_neumann_ratio = report.worst_neumann_ratio.max(measured / bound);
        if !(measured <= bound * (1.0 + opts.neumann_slack)) {
            violation(report, "neumann_bound", index, seed, format!("ratio {ratio}: {measured:e} > {bound:e}"));
        }
        if let Some(p) = previous {
            if measured > p * (1.0 + opts.neumann_slack) {
                violation(report, "neumann_trend", index, seed, format!("error grew to {measured:e} at ratio {ratio}"));
            }
        }
        previous = Some(measured);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suites_pass_on_small_run() {
        let rep = verify_theorems(3, 12).unwrap();
        assert!(rep.passed(), "{:?}", rep.violations);
        assert_eq!(rep.instances, 12);
        assert!(rep.skipped.is_empty());
        assert_eq!(rep.converged, 12);
        assert_eq!(rep.identity_checked, 12);
        assert_eq!(rep.neumann_checked, 50 * 4);
        assert!(rep.worst_neumann_ratio <= 1.0 + 1e-9);
        assert!(rep.boundary_fraction > 0.0);
    }

    #[test]
    fn invalid_beta_is_skipped_not_failed() {
        // rho = 1 <= gamma, so the reconstructed beta is not positive
        let opts = VerifyOptions {
            params: ProxParams::default().with_rho_log2(0).with_t_max(20),
            neumann_cases: 0,
            ..Default::default()
        };
        let rep = verify_theorems_with(5, 6, &opts).unwrap();
        assert_eq!(rep.skipped.len(), 6);
        assert!(rep.passed());
    }

    #[test]
    fn alpha_below_norm_is_rejected() {
        let opts = VerifyOptions { params: ProxParams::default().with_alpha_scale(0.5), ..Default::default() };
        assert!(matches!(verify_theorems_with(1, 1, &opts), Err(Error::Parameter(_))));
        let approx = VerifyOptions { params: ProxParams::default().with_mode(Mode::Approx), ..Default::default() };
        assert!(verify_theorems_with(1, 1, &approx).is_err());
    }
}
