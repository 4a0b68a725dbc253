//! Synthetic strict-saddle problems with analytically certified constants.
//!
//! Every acceptance experiment runs on these problems because their
//! smoothness constants, stochastic variance, saddle locations and optimal
//! values are known in closed form. Stochasticity enters only through linear
//! per-component offsets `f_i(x) = f(x) + <b_i, x>` with `sum_i b_i = 0`, so
//! the variance bound is exact and independent of the query point.
//!
//! Constants are certified on a clamp ball of the given radius; runs that
//! leave the ball are flagged in the trace rather than aborted.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::problem::{compensated_sum, dot, norm2, OracleSet, Point, ProblemSpec};
use crate::rng::Streams;

/// Closed-form facts about a testbed problem, used as ground truth in tests.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    /// Minimum of f over the clamp ball.
    pub f_star: f64,
    /// Smallest Hessian eigenvalue at the anchor stationary point (origin).
    pub lambda_min: f64,
    /// Unit eigenvector for `lambda_min`.
    pub v1: Vec<f64>,
    /// Strict-saddle location, when the anchor is one.
    pub saddle: Option<Point>,
    /// Distance of the global minima from the origin (quartic only).
    pub minima_radius: Option<f64>,
}

/// A problem bundled with its spec, certified ball and ground truth.
#[derive(Debug, Clone)]
pub struct TestProblem<O> {
    pub spec: ProblemSpec,
    pub oracles: O,
    pub clamp_radius: f64,
    pub truth: GroundTruth,
}

// ---------------------------------------------------------------------------
// Mean-zero linear noise offsets
// ---------------------------------------------------------------------------

/// Draws n offset vectors, recenters them to sum zero, rescales so that
/// `avg ||b_i||^2 = sigma^2` exactly, and caps `max ||b_i|| <= sqrt(3) sigma`
/// so the offsets are norm-subgaussian with parameter `3 sigma^2`.
fn gen_offsets(n: usize, d: usize, sigma: f64, rng: &mut impl Rng) -> Result<Vec<f64>> {
    if sigma == 0.0 {
        return Ok(vec![0.0; n * d]);
    }
    if n < 2 {
        return Err(Error::Input(
            "need at least 2 components to recenter noise offsets with sigma > 0".into(),
        ));
    }
    let cap = 3.0f64.sqrt() * sigma;
    let per_coord = sigma / (d as f64).sqrt();
    let mut b: Vec<f64> = (0..n * d)
        .map(|_| per_coord * rng.sample::<f64, _>(StandardNormal))
        .collect();

    for _ in 0..200 {
        // Clip over-long rows slightly below the cap so the following rescale
        // has headroom.
        for i in 0..n {
            let row = &mut b[i * d..(i + 1) * d];
            let nrm = norm2(row);
            if nrm > 0.999 * cap {
                let s = 0.999 * cap / nrm;
                for v in row {
                    *v *= s;
                }
            }
        }
        // Recenter to sum exactly zero (up to round-off).
        for j in 0..d {
            let mean = compensated_sum((0..n).map(|i| b[i * d + j])) / n as f64;
            for i in 0..n {
                b[i * d + j] -= mean;
            }
        }
        // Rescale so the average squared norm is exactly sigma^2. Scaling
        // preserves the zero sum.
        let avg_sq = compensated_sum((0..n).map(|i| {
            let row = &b[i * d..(i + 1) * d];
            compensated_sum(row.iter().map(|v| v * v))
        })) / n as f64;
        if avg_sq == 0.0 {
            // Degenerate draw; re-jitter and try again.
            for v in b.iter_mut() {
                *v += per_coord * 1e-3 * rng.sample::<f64, _>(StandardNormal);
            }
            continue;
        }
        let k = sigma / avg_sq.sqrt();
        for v in b.iter_mut() {
            *v *= k;
        }
        let max_norm = (0..n)
            .map(|i| norm2(&b[i * d..(i + 1) * d]))
            .fold(0.0, f64::max);
        if max_norm <= cap * (1.0 + 1e-12) {
            return Ok(b);
        }
    }
    Err(Error::Input(
        "noise offset conditioning did not converge (degenerate n/d/sigma combination)".into(),
    ))
}

fn offsets_avg_sq(b: &[f64], n: usize, d: usize) -> f64 {
    compensated_sum((0..n).map(|i| {
        let row = &b[i * d..(i + 1) * d];
        compensated_sum(row.iter().map(|v| v * v))
    })) / n as f64
}

// ---------------------------------------------------------------------------
// Quadratic problem
// ---------------------------------------------------------------------------

/// `f(x) = 1/2 sum_j eig_j x_j^2`, `f_i(x) = f(x) + <b_i, x>`.
#[derive(Debug, Clone)]
pub struct QuadraticSaddleProblem {
    hessian_eigs: Vec<f64>,
    offsets: Vec<f64>,
    n: usize,
}

impl QuadraticSaddleProblem {
    pub fn hessian_eigs(&self) -> &[f64] {
        &self.hessian_eigs
    }

    pub fn offset(&self, i: usize) -> &[f64] {
        let d = self.hessian_eigs.len();
        &self.offsets[i * d..(i + 1) * d]
    }

    pub fn avg_offset_norm_sq(&self) -> f64 {
        offsets_avg_sq(&self.offsets, self.n, self.hessian_eigs.len())
    }

    pub fn max_offset_norm(&self) -> f64 {
        let d = self.hessian_eigs.len();
        (0..self.n)
            .map(|i| norm2(&self.offsets[i * d..(i + 1) * d]))
            .fold(0.0, f64::max)
    }
}

impl OracleSet for QuadraticSaddleProblem {
    fn dim(&self) -> usize {
        self.hessian_eigs.len()
    }
    fn n_components(&self) -> usize {
        self.n
    }
    fn objective(&self, x: &[f64]) -> f64 {
        0.5 * compensated_sum(x.iter().zip(&self.hessian_eigs).map(|(xi, l)| l * xi * xi))
    }
    fn full_gradient_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, (xi, l)) in out.iter_mut().zip(x.iter().zip(&self.hessian_eigs)) {
            *o = l * xi;
        }
    }
    fn component_gradient_into(&self, i: usize, x: &[f64], out: &mut [f64]) {
        self.full_gradient_into(x, out);
        for (o, b) in out.iter_mut().zip(self.offset(i)) {
            *o += b;
        }
    }
    fn hessian_vector_into(&self, _x: &[f64], v: &[f64], out: &mut [f64]) {
        for (o, (vi, l)) in out.iter_mut().zip(v.iter().zip(&self.hessian_eigs)) {
            *o = l * vi;
        }
    }
}

/// Builds a quadratic testbed problem with the default clamp radius 2.
pub fn make_quadratic(
    eigs: &[f64],
    sigma: f64,
    n: usize,
    seed: u64,
) -> Result<TestProblem<QuadraticSaddleProblem>> {
    make_quadratic_clamped(eigs, sigma, n, seed, 2.0)
}

pub fn make_quadratic_clamped(
    eigs: &[f64],
    sigma: f64,
    n: usize,
    seed: u64,
    clamp_radius: f64,
) -> Result<TestProblem<QuadraticSaddleProblem>> {
    if eigs.is_empty() {
        return Err(Error::Input("need at least one eigenvalue".into()));
    }
    if n == 0 {
        return Err(Error::Input("need at least one component".into()));
    }
    if !(clamp_radius > 0.0) || !clamp_radius.is_finite() {
        return Err(Error::Input(format!(
            "clamp_radius must be positive, got {clamp_radius}"
        )));
    }
    if sigma < 0.0 || !sigma.is_finite() {
        return Err(Error::Input(format!("sigma must be >= 0, got {sigma}")));
    }
    let d = eigs.len();
    let mut rng = Streams::new(seed).stream("offsets", 0);
    let offsets = gen_offsets(n, d, sigma, &mut rng)?;
    let oracles = QuadraticSaddleProblem {
        hessian_eigs: eigs.to_vec(),
        offsets,
        n,
    };

    let lambda_min = eigs.iter().copied().fold(f64::INFINITY, f64::min);
    let lambda_max = eigs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let l_const = eigs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let r = clamp_radius;
    let f_star = if lambda_min < 0.0 {
        0.5 * lambda_min * r * r
    } else {
        0.0
    };
    // f_gap covers all default start points (which stay within clamp/4).
    let r0 = r / 4.0;
    let f_start_max = 0.5 * lambda_max.max(0.0) * r0 * r0;
    let f_gap = ((f_start_max - f_star) * 1.05).max(1e-6);

    let argmin = eigs
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(j, _)| j)
        .unwrap();
    let mut v1 = vec![0.0; d];
    v1[argmin] = 1.0;

    let spec = ProblemSpec::new(d, n, l_const, 0.0, sigma, f_gap)?;
    let truth = GroundTruth {
        f_star,
        lambda_min,
        v1,
        saddle: (lambda_min < 0.0).then(|| Point::origin(d)),
        minima_radius: None,
    };
    Ok(TestProblem {
        spec,
        oracles,
        clamp_radius,
        truth,
    })
}

// ---------------------------------------------------------------------------
// Quartic problem
// ---------------------------------------------------------------------------

/// `f(x) = 1/2 x' H x + (a/4) ||x||^4` with `H = diag(-gamma, pos_eigs)`.
///
/// The origin is a strict saddle with `lambda_min = -gamma`; the global
/// minima sit at `||x|| = sqrt(gamma/a)` along the negative eigendirection
/// with `f* = -gamma^2 / (4a)`. Inside the clamp ball of radius R the
/// certified constants are `L = max|eig| + 3 a R^2` and `rho = 6 a (R + 1)`.
#[derive(Debug, Clone)]
pub struct QuarticSaddleProblem {
    eigs: Vec<f64>,
    quartic_coeff: f64,
    offsets: Vec<f64>,
    n: usize,
}

impl QuarticSaddleProblem {
    pub fn eigs(&self) -> &[f64] {
        &self.eigs
    }
    pub fn quartic_coeff(&self) -> f64 {
        self.quartic_coeff
    }
    pub fn avg_offset_norm_sq(&self) -> f64 {
        offsets_avg_sq(&self.offsets, self.n, self.eigs.len())
    }
    pub fn max_offset_norm(&self) -> f64 {
        let d = self.eigs.len();
        (0..self.n)
            .map(|i| norm2(&self.offsets[i * d..(i + 1) * d]))
            .fold(0.0, f64::max)
    }
    fn offset(&self, i: usize) -> &[f64] {
        let d = self.eigs.len();
        &self.offsets[i * d..(i + 1) * d]
    }
}

impl OracleSet for QuarticSaddleProblem {
    fn dim(&self) -> usize {
        self.eigs.len()
    }
    fn n_components(&self) -> usize {
        self.n
    }
    fn objective(&self, x: &[f64]) -> f64 {
        let quad = 0.5 * compensated_sum(x.iter().zip(&self.eigs).map(|(xi, l)| l * xi * xi));
        let sq = compensated_sum(x.iter().map(|v| v * v));
        quad + 0.25 * self.quartic_coeff * sq * sq
    }
    fn full_gradient_into(&self, x: &[f64], out: &mut [f64]) {
        let sq = compensated_sum(x.iter().map(|v| v * v));
        let a = self.quartic_coeff;
        for (o, (xi, l)) in out.iter_mut().zip(x.iter().zip(&self.eigs)) {
            *o = l * xi + a * sq * xi;
        }
    }
    fn component_gradient_into(&self, i: usize, x: &[f64], out: &mut [f64]) {
        self.full_gradient_into(x, out);
        for (o, b) in out.iter_mut().zip(self.offset(i)) {
            *o += b;
        }
    }
    fn hessian_vector_into(&self, x: &[f64], v: &[f64], out: &mut [f64]) {
        let sq = compensated_sum(x.iter().map(|u| u * u));
        let xv = dot(x, v);
        let a = self.quartic_coeff;
        for (j, o) in out.iter_mut().enumerate() {
            *o = self.eigs[j] * v[j] + a * (sq * v[j] + 2.0 * xv * x[j]);
        }
    }
}

/// Builds a quartic testbed problem with the default clamp radius
/// `3 sqrt(gamma/a)`.
pub fn make_quartic(
    gamma: f64,
    pos_eigs: &[f64],
    a: f64,
    sigma: f64,
    n: usize,
    seed: u64,
) -> Result<TestProblem<QuarticSaddleProblem>> {
    if !(gamma > 0.0 && a > 0.0) {
        return Err(Error::Input(
            "gamma and quartic coefficient must be positive".into(),
        ));
    }
    let clamp = 3.0 * (gamma / a).sqrt();
    make_quartic_clamped(gamma, pos_eigs, a, sigma, n, seed, clamp)
}

pub fn make_quartic_clamped(
    gamma: f64,
    pos_eigs: &[f64],
    a: f64,
    sigma: f64,
    n: usize,
    seed: u64,
    clamp_radius: f64,
) -> Result<TestProblem<QuarticSaddleProblem>> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::Input(format!("gamma must be positive, got {gamma}")));
    }
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::Input(format!(
            "quartic coefficient must be positive, got {a}"
        )));
    }
    if pos_eigs.iter().any(|&p| p <= 0.0 || !p.is_finite()) {
        return Err(Error::Input("pos_eigs must be positive".into()));
    }
    if n == 0 {
        return Err(Error::Input("need at least one component".into()));
    }
    let minima_radius = (gamma / a).sqrt();
    if clamp_radius < 1.05 * minima_radius {
        return Err(Error::Input(format!(
            "clamp_radius {clamp_radius} does not contain the minima at radius {minima_radius}"
        )));
    }
    let d = 1 + pos_eigs.len();
    let mut eigs = Vec::with_capacity(d);
    eigs.push(-gamma);
    eigs.extend_from_slice(pos_eigs);

    let mut rng = Streams::new(seed).stream("offsets", 0);
    let offsets = gen_offsets(n, d, sigma, &mut rng)?;
    let oracles = QuarticSaddleProblem {
        eigs: eigs.clone(),
        quartic_coeff: a,
        offsets,
        n,
    };

    let r = clamp_radius;
    let l_const = eigs.iter().fold(0.0f64, |m, v| m.max(v.abs())) + 3.0 * a * r * r;
    let rho = 6.0 * a * (r + 1.0);
    let f_star = -gamma * gamma / (4.0 * a);
    let lambda_pos_max = pos_eigs.iter().copied().fold(0.0f64, f64::max);
    // Default start points stay within clamp/4 of the origin.
    let r0 = r / 4.0;
    let f_start_max = 0.5 * lambda_pos_max * r0 * r0 + 0.25 * a * r0.powi(4);
    let f_gap = (f_start_max - f_star) * 1.05;

    let mut v1 = vec![0.0; d];
    v1[0] = 1.0;
    let spec = ProblemSpec::new(d, n, l_const, rho, sigma, f_gap)?;
    let truth = GroundTruth {
        f_star,
        lambda_min: -gamma,
        v1,
        saddle: Some(Point::origin(d)),
        minima_radius: Some(minima_radius),
    };
    Ok(TestProblem {
        spec,
        oracles,
        clamp_radius,
        truth,
    })
}

// ---------------------------------------------------------------------------
// Presets
// ---------------------------------------------------------------------------

/// Overridable preset parameters (CLI `[problem]` section).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PresetOverrides {
    pub n: Option<usize>,
    pub sigma: Option<f64>,
    pub clamp_radius: Option<f64>,
}

/// A testbed problem behind a common interface, constructed by preset id.
#[derive(Debug, Clone)]
pub enum TestbedProblem {
    Quadratic(TestProblem<QuadraticSaddleProblem>),
    Quartic(TestProblem<QuarticSaddleProblem>),
}

impl TestbedProblem {
    pub fn spec(&self) -> &ProblemSpec {
        match self {
            TestbedProblem::Quadratic(p) => &p.spec,
            TestbedProblem::Quartic(p) => &p.spec,
        }
    }

    pub fn oracles(&self) -> &dyn OracleSet {
        match self {
            TestbedProblem::Quadratic(p) => &p.oracles,
            TestbedProblem::Quartic(p) => &p.oracles,
        }
    }

    pub fn clamp_radius(&self) -> f64 {
        match self {
            TestbedProblem::Quadratic(p) => p.clamp_radius,
            TestbedProblem::Quartic(p) => p.clamp_radius,
        }
    }

    pub fn truth(&self) -> &GroundTruth {
        match self {
            TestbedProblem::Quadratic(p) => &p.truth,
            TestbedProblem::Quartic(p) => &p.truth,
        }
    }

    /// Default start point. Escape experiments start at the saddle plus a
    /// 1e-3 perturbation; everything else starts at a random point within a
    /// quarter of the clamp ball (the region `f_gap` is certified for).
    pub fn default_x0(&self, escape: bool, seed: u64) -> Point {
        let d = self.spec().dim;
        let mut rng = Streams::new(seed).stream("x0", 0);
        let mut dir: Vec<f64> = (0..d)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let nrm = norm2(&dir).max(f64::MIN_POSITIVE);
        for v in dir.iter_mut() {
            *v /= nrm;
        }
        if escape {
            if let Some(saddle) = &self.truth().saddle {
                let coords: Vec<f64> = saddle
                    .as_slice()
                    .iter()
                    .zip(&dir)
                    .map(|(s, u)| s + 1e-3 * u)
                    .collect();
                return Point::new(coords).expect("finite start point");
            }
        }
        let u: f64 = rng.random();
        let radius = 0.25 * self.clamp_radius() * u.powf(1.0 / d as f64);
        Point::new(dir.into_iter().map(|v| v * radius).collect()).expect("finite start point")
    }
}

/// Known preset ids.
pub const PRESETS: &[&str] = &["quad-2d-saddle", "quad-10d", "quartic-2d", "quartic-10d"];

/// Instantiates a named preset with optional parameter overrides.
pub fn preset(id: &str, overrides: &PresetOverrides, seed: u64) -> Result<TestbedProblem> {
    let ov_n = overrides.n;
    let ov_sigma = overrides.sigma;
    let ov_clamp = overrides.clamp_radius;
    match id {
        "quad-2d-saddle" => {
            let p = make_quadratic_clamped(
                &[1.0, -1.0],
                ov_sigma.unwrap_or(0.1),
                ov_n.unwrap_or(1000),
                seed,
                ov_clamp.unwrap_or(2.0),
            )?;
            Ok(TestbedProblem::Quadratic(p))
        }
        "quad-10d" => {
            let eigs: Vec<f64> = (0..10).map(|j| 0.5 + 0.5 * j as f64 / 9.0).collect();
            let p = make_quadratic_clamped(
                &eigs,
                ov_sigma.unwrap_or(0.1),
                ov_n.unwrap_or(10_000),
                seed,
                ov_clamp.unwrap_or(2.0),
            )?;
            Ok(TestbedProblem::Quadratic(p))
        }
        "quartic-2d" => {
            let (gamma, a) = (2.0, 0.05);
            let p = make_quartic_clamped(
                gamma,
                &[1.0],
                a,
                ov_sigma.unwrap_or(0.1),
                ov_n.unwrap_or(100_000),
                seed,
                ov_clamp.unwrap_or(1.3 * (gamma / a).sqrt()),
            )?;
            Ok(TestbedProblem::Quartic(p))
        }
        "quartic-10d" => {
            let (gamma, a) = (2.0, 0.05);
            let p = make_quartic_clamped(
                gamma,
                &[1.0; 9],
                a,
                ov_sigma.unwrap_or(0.1),
                ov_n.unwrap_or(40_000),
                seed,
                ov_clamp.unwrap_or(1.3 * (gamma / a).sqrt()),
            )?;
            Ok(TestbedProblem::Quartic(p))
        }
        other => Err(Error::Input(format!(
            "unknown preset '{other}' (known: {})",
            PRESETS.join(", ")
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Streams;

    #[test]
    fn quadratic_saddle_ground_truth() {
        // eigs (1, -1), sigma 0: lambda_min = -1, v1 = e2, f* on the ball
        // is -clamp^2 / 2.
        let p = make_quadratic(&[1.0, -1.0], 0.0, 2, 1).unwrap();
        assert_eq!(p.truth.lambda_min, -1.0);
        assert_eq!(p.truth.v1, vec![0.0, 1.0]);
        assert!((p.truth.f_star - (-0.5 * p.clamp_radius * p.clamp_radius)).abs() < 1e-12);
        assert!(p.truth.saddle.is_some());
    }

    #[test]
    fn quadratic_positive_definite_truth() {
        let p = make_quadratic(&[1.0, 1.0], 0.3, 8, 1).unwrap();
        assert_eq!(p.truth.lambda_min, 1.0);
        assert_eq!(p.truth.f_star, 0.0);
        assert!(p.truth.saddle.is_none());
    }

    #[test]
    fn offsets_hit_sigma_exactly() {
        let p = make_quadratic(&[2.0, -1.0], 0.5, 4, 7).unwrap();
        let avg = p.oracles.avg_offset_norm_sq();
        assert!(
            (avg - 0.25).abs() < 1e-12,
            "avg offset norm^2 {avg} != 0.25"
        );
        assert!(p.oracles.max_offset_norm() <= 3.0f64.sqrt() * 0.5 * (1.0 + 1e-9));
    }

    #[test]
    fn offsets_require_two_components() {
        assert!(make_quadratic(&[1.0], 0.5, 1, 0).is_err());
        assert!(make_quadratic(&[1.0], 0.0, 1, 0).is_ok());
    }

    #[test]
    fn offsets_sum_to_zero() {
        let p = make_quadratic(&[1.0, -0.5, 2.0], 0.7, 257, 3).unwrap();
        let d = 3;
        for j in 0..d {
            let s = compensated_sum((0..257).map(|i| p.oracles.offset(i)[j]));
            assert!(s.abs() < 1e-10, "offset sum in coordinate {j}: {s}");
        }
    }

    #[test]
    fn quartic_ground_truth_examples() {
        // gamma 1, pos (1), a 1: f* = -1/4 at ||x|| = 1.
        let p = make_quartic(1.0, &[1.0], 1.0, 0.0, 4, 1).unwrap();
        assert!((p.truth.f_star + 0.25).abs() < 1e-15);
        assert!((p.truth.minima_radius.unwrap() - 1.0).abs() < 1e-15);
        // The advertised optimum is attained:
        let x_star = [p.truth.minima_radius.unwrap(), 0.0];
        assert!((p.oracles.objective(&x_star) - p.truth.f_star).abs() < 1e-14);

        // gamma 2, a 1: minima at sqrt(2), f* = -1.
        let p = make_quartic(2.0, &[1.0], 1.0, 0.0, 4, 1).unwrap();
        assert!((p.truth.f_star + 1.0).abs() < 1e-15);
        assert!((p.truth.minima_radius.unwrap() - 2.0f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn quartic_origin_is_exact_saddle() {
        let p = make_quartic(1.5, &[1.0, 2.0], 0.5, 0.0, 4, 1).unwrap();
        let g = p.oracles.full_gradient(&[0.0, 0.0, 0.0]);
        assert!(norm2(&g) == 0.0);
        assert_eq!(p.truth.lambda_min, -1.5);
        // Hessian at the origin along v1 reproduces -gamma.
        let hv = p.oracles.hessian_vector(&[0.0; 3], &[1.0, 0.0, 0.0]);
        assert!((hv[0] + 1.5).abs() < 1e-15);
    }

    #[test]
    fn certified_constants_hold_on_probe_pairs() {
        let problems = [
            preset(
                "quartic-2d",
                &PresetOverrides {
                    n: Some(500),
                    ..Default::default()
                },
                5,
            )
            .unwrap(),
            preset(
                "quartic-10d",
                &PresetOverrides {
                    n: Some(500),
                    ..Default::default()
                },
                5,
            )
            .unwrap(),
            preset(
                "quad-10d",
                &PresetOverrides {
                    n: Some(500),
                    ..Default::default()
                },
                5,
            )
            .unwrap(),
        ];
        for problem in &problems {
            let spec = problem.spec();
            let d = spec.dim;
            let r = problem.clamp_radius();
            let mut rng = Streams::new(99).stream("probe", 0);
            let sample = |rng: &mut rand_chacha::ChaCha12Rng| -> Vec<f64> {
                let mut v: Vec<f64> = (0..d)
                    .map(|_| rng.sample::<f64, _>(StandardNormal))
                    .collect();
                let nrm = norm2(&v).max(f64::MIN_POSITIVE);
                let u: f64 = rng.random();
                let rad = r * u.powf(1.0 / d as f64);
                for c in v.iter_mut() {
                    *c *= rad / nrm;
                }
                v
            };
            for _ in 0..1000 {
                let x = sample(&mut rng);
                let y = sample(&mut rng);
                let dist = norm2(&x.iter().zip(&y).map(|(a, b)| a - b).collect::<Vec<_>>());
                let gx = problem.oracles().full_gradient(&x);
                let gy = problem.oracles().full_gradient(&y);
                let dg = norm2(&gx.iter().zip(&gy).map(|(a, b)| a - b).collect::<Vec<_>>());
                assert!(
                    dg <= spec.lipschitz_grad * dist * (1.0 + 1e-8) + 1e-12,
                    "smoothness violated: {dg} > L {} * {dist}",
                    spec.lipschitz_grad
                );
                let mut v = sample(&mut rng);
                let nv = norm2(&v).max(f64::MIN_POSITIVE);
                for c in v.iter_mut() {
                    *c /= nv;
                }
                let hx = problem.oracles().hessian_vector(&x, &v);
                let hy = problem.oracles().hessian_vector(&y, &v);
                let dh = norm2(&hx.iter().zip(&hy).map(|(a, b)| a - b).collect::<Vec<_>>());
                assert!(
                    dh <= spec.lipschitz_hess * dist * (1.0 + 1e-8) + 1e-12,
                    "hessian-lipschitz violated: {dh} > rho {} * {dist}",
                    spec.lipschitz_hess
                );
            }
        }
    }

    #[test]
    fn stochastic_variance_is_exact_and_state_independent() {
        let problem = preset(
            "quartic-2d",
            &PresetOverrides {
                n: Some(300),
                ..Default::default()
            },
            11,
        )
        .unwrap();
        let spec = problem.spec();
        let oracles = problem.oracles();
        for x in [[0.0, 0.0], [1.5, -0.3]] {
            let full = oracles.full_gradient(&x);
            let var = compensated_sum((0..spec.n_components).map(|i| {
                let g = oracles.component_gradient(i, &x);
                let diff: Vec<f64> = g.iter().zip(&full).map(|(a, b)| a - b).collect();
                let n2 = norm2(&diff);
                n2 * n2
            })) / spec.n_components as f64;
            assert!(
                (var - spec.stoch_sigma * spec.stoch_sigma).abs() < 1e-10,
                "variance {var} != sigma^2 {}",
                spec.stoch_sigma * spec.stoch_sigma
            );
        }
    }

    #[test]
    fn norm_subgaussian_condition_holds() {
        // avg exp(||b_i||^2 / (3 sigma^2)) < e, guaranteed by the norm cap.
        let p = make_quadratic(&[1.0, -1.0], 0.4, 500, 23).unwrap();
        let sigma_sq = 0.4 * 0.4;
        let avg = compensated_sum((0..500).map(|i| {
            let b = p.oracles.offset(i);
            let n2: f64 = b.iter().map(|v| v * v).sum();
            (n2 / (3.0 * sigma_sq)).exp()
        })) / 500.0;
        assert!(avg < std::f64::consts::E, "nSG condition failed: {avg}");
    }

    #[test]
    fn f_gap_covers_default_starts() {
        for id in PRESETS {
            let problem = preset(
                id,
                &PresetOverrides {
                    n: Some(200),
                    ..Default::default()
                },
                17,
            )
            .unwrap();
            for escape in [false, true] {
                for seed in 0..20 {
                    let x0 = problem.default_x0(escape, seed);
                    let gap = problem.oracles().objective(x0.as_slice()) - problem.truth().f_star;
                    assert!(
                        gap < problem.spec().f_gap,
                        "{id}: start gap {gap} >= f_gap {}",
                        problem.spec().f_gap
                    );
                }
            }
        }
    }

    #[test]
    fn unknown_preset_rejected() {
        assert!(preset("no-such", &PresetOverrides::default(), 0).is_err());
    }

    #[test]
    fn presets_pass_oracle_consistency() {
        use crate::problem::verify_oracle_consistency;
        for id in PRESETS {
            let problem = preset(
                id,
                &PresetOverrides {
                    n: Some(200),
                    ..Default::default()
                },
                3,
            )
            .unwrap();
            let d = problem.spec().dim;
            let r = problem.clamp_radius();
            let mut rng = Streams::new(41).stream("probes", 0);
            let probes: Vec<Point> = (0..6)
                .map(|_| {
                    let mut v: Vec<f64> = (0..d)
                        .map(|_| rng.sample::<f64, _>(StandardNormal))
                        .collect();
                    let nrm = norm2(&v).max(f64::MIN_POSITIVE);
                    let u: f64 = rng.random();
                    let rad = 0.9 * r * u.powf(1.0 / d as f64);
                    for c in v.iter_mut() {
                        *c *= rad / nrm;
                    }
                    Point::new(v).unwrap()
                })
                .collect();
            let report =
                verify_oracle_consistency(problem.oracles(), problem.spec(), &probes, 1e-6)
                    .unwrap();
            assert!(report.grad_vs_components < 1e-10, "{id}: {report:?}");
            assert!(report.grad_vs_fd < 1e-6, "{id}: {report:?}");
            assert!(report.hvp_vs_fd < 1e-6, "{id}: {report:?}");
            assert!(report.smoothness_excess <= 1e-9, "{id}: {report:?}");
            assert!(report.hessian_lipschitz_excess <= 1e-9, "{id}: {report:?}");
        }
    }

    #[test]
    fn full_batch_average_matches_full_gradient_at_dim_100() {
        use crate::problem::minibatch_gradient;
        let eigs: Vec<f64> = (0..100).map(|j| -1.0 + 2.0 * j as f64 / 99.0).collect();
        let p = make_quadratic(&eigs, 0.3, 64, 9).unwrap();
        let mut rng = Streams::new(10).stream("x", 0);
        let coords: Vec<f64> = (0..100)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let x = Point::new(coords).unwrap();
        let all: Vec<usize> = (0..64).collect();
        let avg = minibatch_gradient(&p.oracles, &all, &x).unwrap();
        let full = p.oracles.full_gradient(x.as_slice());
        let scale = norm2(&full);
        let diff: Vec<f64> = avg.iter().zip(&full).map(|(a, b)| a - b).collect();
        assert!(
            norm2(&diff) <= 1e-10 * scale.max(1.0),
            "relative deviation {} too large",
            norm2(&diff) / scale
        );
    }

    #[test]
    fn quartic_clamp_must_contain_minima() {
        assert!(make_quartic_clamped(2.0, &[1.0], 0.05, 0.0, 4, 0, 3.0).is_err());
    }

    #[test]
    fn oracles_support_concurrent_readers() {
        let problem = preset(
            "quartic-10d",
            &PresetOverrides {
                n: Some(64),
                ..Default::default()
            },
            1,
        )
        .unwrap();
        let oracles = problem.oracles();
        std::thread::scope(|s| {
            for k in 0..4u32 {
                s.spawn(move || {
                    let x = vec![0.1 * f64::from(k); 10];
                    for i in 0..64 {
                        let g = oracles.component_gradient(i, &x);
                        assert!(g.iter().all(|v| v.is_finite()));
                    }
                    let hv = oracles.hessian_vector(&x, &[1.0; 10]);
                    assert!(hv.iter().all(|v| v.is_finite()));
                });
            }
        });
    }
}
