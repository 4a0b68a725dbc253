//! Stationarity checks: exact and differentially private.
//!
//! A point is an alpha-SOSP when `||grad f(x)|| < alpha` and
//! `lambda_min(hessian f(x)) > -sqrt(rho alpha)` (strict inequalities; ties
//! resolve as "not stationary"). The smallest eigenvalue is estimated
//! matrix-free by power iteration on the shifted operator `v -> L v - H v`,
//! whose dominant eigenvalue is `L - lambda_min`. The private path noises the
//! gradient-norm and eigenvalue queries with Laplace draws and scans
//! candidates in order against half-thresholds, AboveThreshold style.

use rand::Rng;

use crate::error::{Error, Result};
use crate::privacy::NoisePlan;
use crate::problem::{dot, norm2, OracleSet, Point, ProblemSpec};

/// Stationarity report for one candidate point.
#[derive(Debug, Clone)]
pub struct SospReport {
    pub grad_norm: f64,
    /// Estimate of lambda_min(hessian f(x)).
    pub min_eig: f64,
    /// grad_norm plus a Laplace(C/(n eps)) draw (private path only).
    pub noisy_grad_norm: Option<f64>,
    /// min_eig plus a Laplace(L/(n eps)) draw (private path only).
    pub noisy_min_eig: Option<f64>,
    /// grad_norm < alpha and min_eig > -sqrt(rho alpha).
    pub is_sosp_exact: bool,
    /// Noisy comparisons against the half-thresholds (private path only).
    pub is_sosp_private: Option<bool>,
    pub power_iters_used: u64,
}

/// Power-method controls.
#[derive(Debug, Clone, Copy)]
pub struct EigParams {
    pub max_iters: u64,
    /// Relative Rayleigh-quotient change below which (for 3 consecutive
    /// iterations) the iteration stops.
    pub tol: f64,
}

impl Default for EigParams {
    fn default() -> Self {
        Self {
            max_iters: 40_000,
            tol: 1e-12,
        }
    }
}

/// Smallest-eigenvalue estimate via power iteration on `L I - H`.
///
/// `l_bound` must dominate the spectral radius of H. Returns the estimate and
/// the number of iterations used. `hvp` writes `H v` into its second argument.
pub fn min_eigenvalue(
    hvp: impl Fn(&[f64], &mut [f64]),
    dim: usize,
    l_bound: f64,
    max_iters: u64,
    tol: f64,
    rng: &mut impl Rng,
) -> Result<(f64, u64)> {
    min_eigenpair(hvp, dim, l_bound, max_iters, tol, rng).map(|(l, _, iters)| (l, iters))
}

/// As [`min_eigenvalue`], but also returns the unit eigenvector estimate
/// (needed by the coupling construction).
pub fn min_eigenpair(
    hvp: impl Fn(&[f64], &mut [f64]),
    dim: usize,
    l_bound: f64,
    max_iters: u64,
    tol: f64,
    rng: &mut impl Rng,
) -> Result<(f64, Vec<f64>, u64)> {
    if dim == 0 || max_iters == 0 {
        return Err(Error::Input("dim and max_iters must be >= 1".into()));
    }
    let mut v: Vec<f64> = (0..dim)
        .map(|_| rand_distr::Distribution::sample(&rand_distr::StandardNormal, rng))
        .collect();
    let nrm = norm2(&v);
    if nrm == 0.0 {
        v[0] = 1.0;
    } else {
        for c in v.iter_mut() {
            *c /= nrm;
        }
    }

    let mut buf = vec![0.0; dim];
    let mut w = vec![0.0; dim];
    let mut prev_rq = f64::INFINITY;
    let mut stable = 0u32;
    let mut iters = 0u64;
    let mut rq = 0.0;
    while iters < max_iters {
        iters += 1;
        hvp(&v, &mut buf);
        if buf.iter().any(|x| !x.is_finite()) {
            return Err(Error::Oracle(
                "hessian-vector product returned a non-finite value".into(),
            ));
        }
        for j in 0..dim {
            w[j] = l_bound * v[j] - buf[j];
        }
        // v is unit, so the Rayleigh quotient of the shifted operator is <v, w>.
        rq = dot(&v, &w);
        if (rq - prev_rq).abs() <= tol * rq.abs().max(1.0) {
            stable += 1;
            if stable >= 3 {
                break;
            }
        } else {
            stable = 0;
        }
        prev_rq = rq;
        let wn = norm2(&w);
        if wn <= f64::MIN_POSITIVE {
            // Shifted operator annihilates v: every eigenvalue of H along v
            // equals l_bound, and the Rayleigh quotient is exact.
            rq = 0.0;
            break;
        }
        for j in 0..dim {
            v[j] = w[j] / wn;
        }
    }
    Ok((l_bound - rq, v, iters))
}

/// Exact stationarity check (no privacy noise). For rho = 0 the eigenvalue
/// condition is vacuous and the check reduces to first-order stationarity.
pub fn check_sosp<O: OracleSet + ?Sized>(
    x: &Point,
    oracles: &O,
    spec: &ProblemSpec,
    alpha: f64,
    eig: &EigParams,
    rng: &mut impl Rng,
) -> Result<SospReport> {
    if !(alpha > 0.0) {
        return Err(Error::Input(format!("alpha must be positive, got {alpha}")));
    }
    let grad_norm = norm2(&oracles.full_gradient(x.as_slice()));
    if !grad_norm.is_finite() {
        return Err(Error::Oracle("full gradient is not finite".into()));
    }
    let (min_eig, iters) = min_eigenvalue(
        |v, out| oracles.hessian_vector_into(x.as_slice(), v, out),
        spec.dim,
        spec.lipschitz_grad,
        eig.max_iters,
        eig.tol,
        rng,
    )?;
    let rho = spec.lipschitz_hess;
    let eig_ok = rho == 0.0 || min_eig > -(rho * alpha).sqrt();
    Ok(SospReport {
        grad_norm,
        min_eig,
        noisy_grad_norm: None,
        noisy_min_eig: None,
        is_sosp_exact: grad_norm < alpha && eig_ok,
        is_sosp_private: None,
        power_iters_used: iters,
    })
}

/// Exact Laplace draw with the given scale b (density exp(-|x|/b)/(2b));
/// scale 0 returns 0.
pub fn laplace_draw(scale: f64, rng: &mut impl Rng) -> f64 {
    if scale == 0.0 {
        return 0.0;
    }
    loop {
        let u: f64 = rng.random::<f64>() - 0.5;
        let mag = 1.0 - 2.0 * u.abs();
        if mag > 0.0 {
            return -scale * u.signum() * mag.ln();
        }
    }
}

/// Adds fresh Laplace noise to precomputed (grad_norm, min_eig) statistics
/// and scans them in order against the half-thresholds `alpha/2` and
/// `-sqrt(rho alpha)/2`. Returns the first passing index; draws for every
/// candidate are reported for audit.
pub fn private_select_from_stats(
    stats: &[(f64, f64)],
    alpha: f64,
    rho: f64,
    scales: (f64, f64),
    rng: &mut impl Rng,
) -> (Option<usize>, Vec<(f64, f64, bool)>) {
    let grad_threshold = alpha / 2.0;
    let eig_threshold = -(rho * alpha).sqrt() / 2.0;
    let mut first = None;
    let mut noisy = Vec::with_capacity(stats.len());
    for (i, &(g, e)) in stats.iter().enumerate() {
        let ng = g + laplace_draw(scales.0, rng);
        let ne = e + laplace_draw(scales.1, rng);
        let pass = ng < grad_threshold && (rho == 0.0 || ne > eig_threshold);
        if pass && first.is_none() {
            first = Some(i);
        }
        noisy.push((ng, ne, pass));
    }
    (first, noisy)
}

/// Private selection over candidate points: computes the exact statistics for
/// each candidate, then applies `private_select_from_stats`. The scales come
/// from `laplace_scales`. Candidates are scanned in order (the selection is
/// sequential by construction); reports for all candidates are returned for
/// auditability.
#[allow(clippy::too_many_arguments)]
pub fn private_select<O: OracleSet + ?Sized>(
    candidates: &[Point],
    oracles: &O,
    spec: &ProblemSpec,
    plan: &NoisePlan,
    scales: (f64, f64),
    eig: &EigParams,
    eig_rng: &mut impl Rng,
    noise_rng: &mut impl Rng,
) -> Result<(Option<usize>, Vec<SospReport>)> {
    if candidates.is_empty() {
        return Err(Error::Input("candidate list is empty".into()));
    }
    let mut reports = Vec::with_capacity(candidates.len());
    let mut stats = Vec::with_capacity(candidates.len());
    for x in candidates {
        let r = check_sosp(x, oracles, spec, plan.alpha, eig, eig_rng)?;
        stats.push((r.grad_norm, r.min_eig));
        reports.push(r);
    }
    let (chosen, noisy) =
        private_select_from_stats(&stats, plan.alpha, spec.lipschitz_hess, scales, noise_rng);
    for (r, (ng, ne, pass)) in reports.iter_mut().zip(noisy) {
        r.noisy_grad_norm = Some(ng);
        r.noisy_min_eig = Some(ne);
        r.is_sosp_private = Some(pass);
    }
    Ok((chosen, reports))
}
