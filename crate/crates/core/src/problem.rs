//! Finite-sum optimization problems and their oracles.
//!
//! A problem is `f(x) = avg_i f_i(x)` over `n` component functions on R^d,
//! together with the regularity constants consumed by the calibration and
//! convergence machinery. Oracles are deterministic functions of
//! `(index, point)`: all stochasticity lives in minibatch sampling and
//! injected noise, so runs are reproducible.

use crate::error::{Error, Result};

/// Regularity constants of a finite-sum problem.
///
/// `f_gap` must upper-bound `f(x0) - f(x*)` for the registered start point;
/// the testbed certifies this analytically, user-supplied problems provide it
/// on faith.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    /// Ambient dimension d.
    pub dim: usize,
    /// Number of component functions n.
    pub n_components: usize,
    /// Smoothness constant L.
    pub lipschitz_grad: f64,
    /// Hessian-Lipschitz constant rho (0 for quadratics).
    pub lipschitz_hess: f64,
    /// Stochastic-variance bound sigma.
    pub stoch_sigma: f64,
    /// Objective gap bound f_max.
    pub f_gap: f64,
}

impl ProblemSpec {
    pub fn new(
        dim: usize,
        n_components: usize,
        lipschitz_grad: f64,
        lipschitz_hess: f64,
        stoch_sigma: f64,
        f_gap: f64,
    ) -> Result<Self> {
        if dim == 0 || n_components == 0 {
            return Err(Error::Input("dim and n_components must be >= 1".into()));
        }
        for (name, v) in [
            ("lipschitz_grad", lipschitz_grad),
            ("lipschitz_hess", lipschitz_hess),
            ("stoch_sigma", stoch_sigma),
            ("f_gap", f_gap),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Input(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        if f_gap <= 0.0 {
            return Err(Error::Input(format!("f_gap must be positive, got {f_gap}")));
        }
        Ok(Self {
            dim,
            n_components,
            lipschitz_grad,
            lipschitz_hess,
            stoch_sigma,
            f_gap,
        })
    }
}

/// A point in R^d with finite coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    coords: Vec<f64>,
}

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if let Some((j, v)) = coords.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Input(format!("coordinate {j} is not finite: {v}")));
        }
        Ok(Self { coords })
    }

    pub fn origin(dim: usize) -> Self {
        Self {
            coords: vec![0.0; dim],
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.coords
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.coords
    }

    pub fn norm(&self) -> f64 {
        norm2(&self.coords)
    }
}

impl AsRef<[f64]> for Point {
    fn as_ref(&self) -> &[f64] {
        &self.coords
    }
}

/// Deterministic oracles of a finite-sum problem.
///
/// Implementations must be pure functions of their arguments so that oracle
/// evaluations are safe to invoke from multiple concurrent workers.
pub trait OracleSet: Sync {
    fn dim(&self) -> usize;
    fn n_components(&self) -> usize;

    /// f(x).
    fn objective(&self, x: &[f64]) -> f64;
    /// grad f(x), written into `out`.
    fn full_gradient_into(&self, x: &[f64], out: &mut [f64]);
    /// grad f_i(x), written into `out`.
    fn component_gradient_into(&self, i: usize, x: &[f64], out: &mut [f64]);
    /// Hessian-vector product (grad^2 f(x)) v, written into `out`.
    fn hessian_vector_into(&self, x: &[f64], v: &[f64], out: &mut [f64]);

    fn full_gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.full_gradient_into(x, &mut out);
        out
    }

    fn component_gradient(&self, i: usize, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.component_gradient_into(i, x, &mut out);
        out
    }

    fn hessian_vector(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.hessian_vector_into(x, v, &mut out);
        out
    }
}

/// Neumaier compensated accumulator.
///
/// Averages over up to 1e5 components must not lose the gradient-norm
/// precision that feeds the calibration bound.
#[derive(Debug, Clone, Copy, Default)]
pub struct Compensated {
    sum: f64,
    comp: f64,
}

impl Compensated {
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Compensated sum of a slice.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = Compensated::default();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

/// Euclidean norm with compensated accumulation.
pub fn norm2(v: &[f64]) -> f64 {
    compensated_sum(v.iter().map(|x| x * x)).sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    compensated_sum(a.iter().zip(b).map(|(x, y)| x * y))
}

/// Average of `grad f_i(x)` over a minibatch of component indices.
pub fn minibatch_gradient<O: OracleSet + ?Sized>(
    oracles: &O,
    batch: &[usize],
    x: &Point,
) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Err(Error::Input("minibatch is empty".into()));
    }
    let n = oracles.n_components();
    if let Some(&bad) = batch.iter().find(|&&i| i >= n) {
        return Err(Error::Input(format!(
            "component index {bad} out of range (n = {n})"
        )));
    }
    let d = oracles.dim();
    let mut acc = vec![Compensated::default(); d];
    let mut scratch = vec![0.0; d];
    for &i in batch {
        oracles.component_gradient_into(i, x.as_slice(), &mut scratch);
        for (a, g) in acc.iter_mut().zip(&scratch) {
            a.add(*g);
        }
    }
    let inv = 1.0 / batch.len() as f64;
    Ok(acc.iter().map(|a| a.value() * inv).collect())
}

/// Worst observed violation of each oracle consistency check.
///
/// All violations are absolute; a healthy exact-oracle problem reports
/// round-off-sized numbers for the algebraic checks and
/// finite-difference-truncation-sized numbers for the derivative checks.
#[derive(Debug, Clone, Default)]
pub struct ConsistencyReport {
    /// max over probes of ||full_gradient - avg_i component_gradient||.
    pub grad_vs_components: f64,
    /// max over probes of ||full_gradient - central finite difference of f||.
    pub grad_vs_fd: f64,
    /// max over probes/directions of ||H v - finite difference of gradients||.
    pub hvp_vs_fd: f64,
    /// max over probe pairs of ||grad f(x)-grad f(y)|| - L ||x-y||, clamped at 0.
    pub smoothness_excess: f64,
    /// max over probe pairs/directions of ||(H(x)-H(y)) v|| - rho ||x-y||, clamped at 0.
    pub hessian_lipschitz_excess: f64,
}

impl ConsistencyReport {
    pub fn max_violation(&self) -> f64 {
        [
            self.grad_vs_components,
            self.grad_vs_fd,
            self.hvp_vs_fd,
            self.smoothness_excess,
            self.hessian_lipschitz_excess,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    pub fn all_within(&self, tol: f64) -> bool {
        self.max_violation() <= tol
    }
}

fn require_finite(probe: usize, what: &str, values: &[f64]) -> Result<()> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Oracle(format!(
            "{what} returned a non-finite value at probe {probe}"
        )));
    }
    Ok(())
}

/// Finite-difference step: cube root of machine epsilon times the coordinate
/// scale, the standard truncation/round-off balance for central differences.
fn fd_step(scale: f64) -> f64 {
    f64::EPSILON.cbrt() * scale.abs().max(1.0)
}

/// Cross-checks the oracles of a problem against each other and against
/// finite differences, and checks the advertised regularity constants on
/// probe pairs. Returns the worst violation per check.
pub fn verify_oracle_consistency<O: OracleSet + ?Sized>(
    oracles: &O,
    spec: &ProblemSpec,
    probes: &[Point],
    _tol: f64,
) -> Result<ConsistencyReport> {
    if probes.is_empty() {
        return Err(Error::Input("probe list is empty".into()));
    }
    let d = spec.dim;
    let mut report = ConsistencyReport::default();

    // Direction set for hvp and Hessian-Lipschitz checks.
    let mut dirs: Vec<Vec<f64>> = Vec::new();
    let mut e0 = vec![0.0; d];
    e0[0] = 1.0;
    dirs.push(e0);
    dirs.push(vec![1.0 / (d as f64).sqrt(); d]);

    for (p, probe) in probes.iter().enumerate() {
        let x = probe.as_slice();
        if x.len() != d {
            return Err(Error::Input(format!(
                "probe {p} has dimension {} != {d}",
                x.len()
            )));
        }
        let g = oracles.full_gradient(x);
        require_finite(p, "full_gradient", &g)?;
        let f0 = oracles.objective(x);
        if !f0.is_finite() {
            return Err(Error::Oracle(format!(
                "objective returned a non-finite value at probe {p}"
            )));
        }

        // (a) full gradient versus component average.
        let all: Vec<usize> = (0..spec.n_components).collect();
        let avg = minibatch_gradient(oracles, &all, probe)?;
        let diff: Vec<f64> = g.iter().zip(&avg).map(|(a, b)| a - b).collect();
        report.grad_vs_components = report.grad_vs_components.max(norm2(&diff));

        // (b) gradient versus central finite difference of the objective.
        let mut xp = x.to_vec();
        let mut fd = vec![0.0; d];
        for j in 0..d {
            let h = fd_step(x[j]);
            xp[j] = x[j] + h;
            let fp = oracles.objective(&xp);
            xp[j] = x[j] - h;
            let fm = oracles.objective(&xp);
            xp[j] = x[j];
            if !fp.is_finite() || !fm.is_finite() {
                return Err(Error::Oracle(format!(
                    "objective returned a non-finite value at probe {p}"
                )));
            }
            fd[j] = (fp - fm) / (2.0 * h);
        }
        let diff: Vec<f64> = g.iter().zip(&fd).map(|(a, b)| a - b).collect();
        report.grad_vs_fd = report.grad_vs_fd.max(norm2(&diff));

        // (c) Hessian-vector product versus finite difference of gradients.
        for v in &dirs {
            let hv = oracles.hessian_vector(x, v);
            require_finite(p, "hessian_vector", &hv)?;
            let h = fd_step(norm2(x));
            let xf: Vec<f64> = x.iter().zip(v).map(|(a, b)| a + h * b).collect();
            let xb: Vec<f64> = x.iter().zip(v).map(|(a, b)| a - h * b).collect();
            let gf = oracles.full_gradient(&xf);
            let gb = oracles.full_gradient(&xb);
            require_finite(p, "full_gradient", &gf)?;
            require_finite(p, "full_gradient", &gb)?;
            let diff: Vec<f64> = hv
                .iter()
                .enumerate()
                .map(|(j, hvj)| hvj - (gf[j] - gb[j]) / (2.0 * h))
                .collect();
            report.hvp_vs_fd = report.hvp_vs_fd.max(norm2(&diff));
        }
    }

    // (d) empirical smoothness and Hessian-Lipschitz bounds on probe pairs.
    for pair in probes.windows(2) {
        let (x, y) = (pair[0].as_slice(), pair[1].as_slice());
        let dx: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
        let dist = norm2(&dx);
        let gx = oracles.full_gradient(x);
        let gy = oracles.full_gradient(y);
        let dg: Vec<f64> = gx.iter().zip(&gy).map(|(a, b)| a - b).collect();
        let excess = norm2(&dg) - spec.lipschitz_grad * dist;
        report.smoothness_excess = report.smoothness_excess.max(excess.max(0.0));

        for v in &dirs {
            let hxv = oracles.hessian_vector(x, v);
            let hyv = oracles.hessian_vector(y, v);
            let dh: Vec<f64> = hxv.iter().zip(&hyv).map(|(a, b)| a - b).collect();
            let excess = norm2(&dh) - spec.lipschitz_hess * dist;
            report.hessian_lipschitz_excess = report.hessian_lipschitz_excess.max(excess.max(0.0));
        }
    }

    Ok(report)
}
