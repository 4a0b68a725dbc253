//! Noisy SGD with and without per-sample gradient clipping.
//!
//! Each step samples a uniform minibatch, averages the (optionally clipped)
//! per-sample gradients, adds isotropic Gaussian noise of scale `gauss_std`,
//! and moves by `step_size` against the perturbed direction:
//! `x <- x - eta (avg_i g_i + xi)`. Runs are deterministic given
//! `(seed, plan, mode, x0)`: the minibatch stream and the Gaussian stream are
//! independent substreams of the seed, so clip and no-clip runs with the same
//! seed share all randomness and coincide bit-for-bit whenever no clipping
//! fires.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::privacy::NoisePlan;
use crate::problem::{norm2, Compensated, OracleSet, Point, ProblemSpec};
use crate::rng::Streams;

/// Whether per-sample gradients are clipped to the plan's bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Clip,
    NoClip,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Clip => "clip",
            Mode::NoClip => "no-clip",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "clip" => Ok(Mode::Clip),
            "no-clip" | "noclip" => Ok(Mode::NoClip),
            other => Err(Error::Input(format!(
                "unknown mode '{other}' (clip | no-clip)"
            ))),
        }
    }
}

/// Complete record of one run.
#[derive(Debug, Clone)]
pub struct RunTrace {
    /// Iterates x_0 ..= x_T.
    pub points: Vec<Point>,
    /// f(x_t) for t = 0 ..= T.
    pub objective: Vec<f64>,
    /// ||grad f(x_t)|| (full gradient, diagnostic only) for t = 0 ..= T.
    pub grad_norm: Vec<f64>,
    /// Per-step count of clipped samples (always 0 in no-clip mode).
    pub clip_events: Vec<u32>,
    /// Per-step max over the batch of ||grad f_i(x_t)||.
    pub max_sample_grad: Vec<f64>,
    /// Whether any iterate left the certified clamp ball.
    pub exited_ball: bool,
    pub plan: NoisePlan,
    pub seed: u64,
    pub mode: Mode,
}

impl RunTrace {
    pub fn iterations(&self) -> u64 {
        self.clip_events.len() as u64
    }
}

/// Per-step bookkeeping returned alongside the new iterate.
#[derive(Debug, Clone, Copy)]
pub struct StepRecord {
    /// Norm of the (clipped) batch-average gradient.
    pub batch_grad_norm: f64,
    /// Max over the batch of the raw per-sample gradient norm.
    pub max_sample_grad: f64,
    /// Clipped samples this step.
    pub clip_count: u32,
    /// Norm of the injected Gaussian draw.
    pub noise_norm: f64,
}

/// Samples B distinct indices uniformly over size-B subsets of 0..n
/// (Floyd's algorithm). The result is sorted, so downstream accumulation
/// order is deterministic.
pub fn sample_minibatch(n: usize, batch_size: usize, rng: &mut impl Rng) -> Result<Vec<usize>> {
    if batch_size == 0 {
        return Err(Error::Input("batch size must be >= 1".into()));
    }
    if batch_size > n {
        return Err(Error::Input(format!(
            "batch size {batch_size} exceeds n = {n}"
        )));
    }
    let mut chosen: HashSet<usize> = HashSet::with_capacity(batch_size * 2);
    let mut out = Vec::with_capacity(batch_size);
    for j in (n - batch_size)..n {
        let t = rng.random_range(0..=j);
        if chosen.insert(t) {
            out.push(t);
        } else {
            chosen.insert(j);
            out.push(j);
        }
    }
    out.sort_unstable();
    Ok(out)
}

/// `g / max(1, ||g|| / c)`: unchanged below the threshold, rescaled to norm c
/// above it.
pub fn clip_gradient(g: &[f64], c: f64) -> Vec<f64> {
    let nrm = norm2(g);
    if nrm > c {
        let s = c / nrm;
        g.iter().map(|v| v * s).collect()
    } else {
        g.to_vec()
    }
}

/// One step of noisy SGD from `x` over the given minibatch.
///
/// In clip mode each per-sample gradient is rescaled to norm at most
/// `plan.grad_bound` before averaging. The Gaussian draw is exact-distribution
/// (per-coordinate normals of standard deviation `plan.gauss_std`).
pub fn dpsgd_step<O: OracleSet + ?Sized>(
    x: &Point,
    oracles: &O,
    batch: &[usize],
    plan: &NoisePlan,
    mode: Mode,
    noise_rng: &mut impl Rng,
    iteration: u64,
) -> Result<(Point, StepRecord)> {
    let d = oracles.dim();
    let mut acc = vec![Compensated::default(); d];
    let mut scratch = vec![0.0; d];
    let mut max_sample = 0.0f64;
    let mut clip_count = 0u32;
    for &i in batch {
        oracles.component_gradient_into(i, x.as_slice(), &mut scratch);
        let nrm = norm2(&scratch);
        max_sample = max_sample.max(nrm);
        let mut scale = 1.0;
        if mode == Mode::Clip && nrm > plan.grad_bound {
            scale = plan.grad_bound / nrm;
            clip_count += 1;
        }
        for (a, g) in acc.iter_mut().zip(&scratch) {
            a.add(g * scale);
        }
    }
    let inv = 1.0 / batch.len() as f64;
    let avg: Vec<f64> = acc.iter().map(|a| a.value() * inv).collect();
    let batch_grad_norm = norm2(&avg);

    let mut noise_sq = Compensated::default();
    let eta = plan.step_size;
    let mut next = Vec::with_capacity(d);
    if plan.gauss_std > 0.0 {
        for j in 0..d {
            let z: f64 = StandardNormal.sample(noise_rng);
            let xi = plan.gauss_std * z;
            noise_sq.add(xi * xi);
            next.push(x.as_slice()[j] - eta * (avg[j] + xi));
        }
    } else {
        for j in 0..d {
            next.push(x.as_slice()[j] - eta * avg[j]);
        }
    }
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence {
            iteration,
            message: "iterate became non-finite".into(),
        });
    }
    let record = StepRecord {
        batch_grad_norm,
        max_sample_grad: max_sample,
        clip_count,
        noise_norm: noise_sq.value().sqrt(),
    };
    Ok((Point::new(next).expect("finiteness checked"), record))
}

/// Executes `plan.iterations` steps from `x0` and returns the full trace.
///
/// Identical `(seed, plan, mode, x0)` produce a bit-identical trace on one
/// platform. Iterates leaving the clamp ball set a flag rather than aborting;
/// non-finite iterates abort with a divergence error.
pub fn run<O: OracleSet + ?Sized>(
    oracles: &O,
    spec: &ProblemSpec,
    clamp_radius: Option<f64>,
    x0: &Point,
    plan: &NoisePlan,
    mode: Mode,
    seed: u64,
) -> Result<RunTrace> {
    if x0.len() != spec.dim {
        return Err(Error::Input(format!(
            "start point has dimension {}, problem has {}",
            x0.len(),
            spec.dim
        )));
    }
    if plan.batch_size == 0 || plan.batch_size > spec.n_components {
        return Err(Error::Input(format!(
            "plan batch_size {} out of range for n = {}",
            plan.batch_size, spec.n_components
        )));
    }
    let t_total = plan.iterations;
    let streams = Streams::new(seed);
    let mut batch_rng = streams.stream("batch", 0);
    let mut noise_rng = streams.stream("gauss", 0);

    let mut points = Vec::with_capacity(t_total as usize + 1);
    let mut objective = Vec::with_capacity(t_total as usize + 1);
    let mut grad_norm = Vec::with_capacity(t_total as usize + 1);
    let mut clip_events = Vec::with_capacity(t_total as usize);
    let mut max_sample_grad = Vec::with_capacity(t_total as usize);
    let mut exited_ball = false;

    let mut x = x0.clone();
    objective.push(oracles.objective(x.as_slice()));
    grad_norm.push(norm2(&oracles.full_gradient(x.as_slice())));
    if let Some(r) = clamp_radius {
        exited_ball |= x.norm() > r;
    }
    points.push(x.clone());

    for t in 0..t_total {
        let batch = sample_minibatch(spec.n_components, plan.batch_size, &mut batch_rng)?;
        let (next, record) = dpsgd_step(&x, oracles, &batch, plan, mode, &mut noise_rng, t)?;
        clip_events.push(record.clip_count);
        max_sample_grad.push(record.max_sample_grad);
        x = next;
        objective.push(oracles.objective(x.as_slice()));
        grad_norm.push(norm2(&oracles.full_gradient(x.as_slice())));
        if let Some(r) = clamp_radius {
            exited_ball |= x.norm() > r;
        }
        points.push(x.clone());
    }

    Ok(RunTrace {
        points,
        objective,
        grad_norm,
        clip_events,
        max_sample_grad,
        exited_ball,
        plan: plan.clone(),
        seed,
        mode,
    })
}
