//! Noise calibration for differentially private SGD without clipping.
//!
//! The gradient bound `C`, the Gaussian scale `Delta`, the Laplace scales for
//! private selection, and the resolver that turns an `(epsilon, delta)` budget
//! into a concrete run plan live here. The resolver breaks the circular
//! dependency among the accuracy target `alpha`, the bound `C`, the noise
//! scale `Delta`, the step size `eta` and the iteration count `T`: larger `T`
//! requires more noise, and more noise requires more iterations, so a plan
//! only exists once `alpha` is large enough.

use crate::error::{Error, Result};
use crate::problem::ProblemSpec;

/// Target differential-privacy budget and the batch size it is spent with.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrivacyBudget {
    pub epsilon: f64,
    pub delta: f64,
    pub batch_size: usize,
}

impl PrivacyBudget {
    pub fn new(epsilon: f64, delta: f64, batch_size: usize) -> Result<Self> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::Input(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::Input(format!(
                "delta must lie in (0, 1), got {delta}"
            )));
        }
        if batch_size == 0 {
            return Err(Error::Input("batch_size must be >= 1".into()));
        }
        Ok(Self {
            epsilon,
            delta,
            batch_size,
        })
    }
}

/// Absolute constants of the analysis.
///
/// The theory never pins these numerically; the defaults below are recorded
/// in every plan and trace so runs stay reproducible when they change.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constants {
    /// Constant inside the gradient bound C.
    pub c: f64,
    /// Budget-regime constant: requires epsilon < c1 T B^2 / n^2.
    pub c1: f64,
    /// Gaussian-scale constant: Delta > c2 C sqrt(T log(1/delta)) / (n eps).
    pub c2: f64,
    /// Step-size constant.
    pub c_eta: f64,
    /// Escape-episode length constant.
    pub c_escape_iters: f64,
    /// Escape-radius constant.
    pub c_escape_radius: f64,
    /// Escape objective-drop constant.
    pub c_drop: f64,
}

impl Default for Constants {
    fn default() -> Self {
        Self {
            c: 1.0,
            c1: 1.0,
            c2: 1.0,
            c_eta: 1.0,
            c_escape_iters: 4.0,
            c_escape_radius: 4.0,
            c_drop: 1.0,
        }
    }
}

impl Constants {
    /// The escape-lemma bookkeeping requires `64 c_drop / (10 c_iters) > 1`
    /// and `c_radius^2 / (c c_iters) >= 2 c_drop`.
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("c", self.c),
            ("c1", self.c1),
            ("c2", self.c2),
            ("c_eta", self.c_eta),
            ("c_escape_iters", self.c_escape_iters),
            ("c_escape_radius", self.c_escape_radius),
            ("c_drop", self.c_drop),
        ];
        for (name, v) in all {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Input(format!(
                    "constant {name} must be positive, got {v}"
                )));
            }
        }
        if 64.0 * self.c_drop / (10.0 * self.c_escape_iters) <= 1.0 {
            return Err(Error::Input(
                "constants must satisfy 64 c_drop / (10 c_escape_iters) > 1".into(),
            ));
        }
        if self.c_escape_radius * self.c_escape_radius / (self.c * self.c_escape_iters)
            < 2.0 * self.c_drop
        {
            return Err(Error::Input(
                "constants must satisfy c_escape_radius^2 / (c c_escape_iters) >= 2 c_drop".into(),
            ));
        }
        Ok(())
    }
}

/// Saddle-escape schedule: episode length, localization radius and the
/// objective drop a successful escape must deliver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EscapeSchedule {
    pub iters: u64,
    pub radius: f64,
    pub drop: f64,
}

/// Fully resolved run parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePlan {
    /// Gradient-norm bound C (also the clipping threshold in clip mode).
    pub grad_bound: f64,
    /// Per-coordinate standard deviation of the injected Gaussian noise.
    pub gauss_std: f64,
    /// Step size eta.
    pub step_size: f64,
    /// Iteration count T.
    pub iterations: u64,
    /// Stationarity target alpha.
    pub alpha: f64,
    /// Total per-step noise variance d Delta^2 + sigma^2 / B.
    pub total_noise_var: f64,
    /// Minibatch size B.
    pub batch_size: usize,
    /// Escape schedule; absent when rho = 0 (first-order mode: a small
    /// gradient alone certifies stationarity).
    pub escape: Option<EscapeSchedule>,
    /// The absolute constants the plan was resolved with.
    pub constants: Constants,
}

// ---------------------------------------------------------------------------
// Closed-form pieces
// ---------------------------------------------------------------------------

/// High-probability bound on all per-sample gradient norms over a run:
/// `C = 2 sqrt(L f_max) + c (L sqrt(log(T/delta)) + sigma sqrt(log(n T))
///    + sqrt(sigma log(1/delta)))`.
pub fn gradient_bound(spec: &ProblemSpec, iterations: u64, delta: f64, c: f64) -> f64 {
    let l = spec.lipschitz_grad;
    let sigma = spec.stoch_sigma;
    let t = iterations as f64;
    let n = spec.n_components as f64;
    2.0 * (l * spec.f_gap).sqrt()
        + c * (l * (t / delta).ln().max(0.0).sqrt()
            + sigma * (n * t).ln().max(0.0).sqrt()
            + (sigma * (1.0 / delta).ln()).sqrt())
}

/// Minimal admissible Gaussian scale for the privacy guarantee:
/// `Delta = c2 C sqrt(T log(1/delta)) / (n epsilon)`. Callers may take any
/// larger value.
pub fn gaussian_scale(
    grad_bound: f64,
    iterations: u64,
    delta: f64,
    n: usize,
    epsilon: f64,
    c2: f64,
) -> f64 {
    c2 * grad_bound * (iterations as f64 * (1.0 / delta).ln()).sqrt() / (n as f64 * epsilon)
}

/// Laplace scales for the private selection queries:
/// `(C / (n epsilon), L / (n epsilon))` for the gradient-norm and eigenvalue
/// queries respectively.
pub fn laplace_scales(grad_bound: f64, l: f64, n: usize, epsilon: f64) -> (f64, f64) {
    let ne = n as f64 * epsilon;
    (grad_bound / ne, l / ne)
}

/// Extra Gaussian floor `sqrt(sigma^2 / (d B tilde_delta))` used when the
/// gradient-concentration assumption is disabled.
pub fn nsg_floor(sigma: f64, batch_size: usize, dim: usize, tilde_delta: f64) -> f64 {
    (sigma * sigma / (dim as f64 * batch_size as f64 * tilde_delta)).sqrt()
}

/// Warns when `n` is too small for the advertised selection accuracy
/// (literal reading of the sample-size requirement with all hidden
/// constants set to one).
pub fn selection_sample_warning(spec: &ProblemSpec, budget: &PrivacyBudget) -> Option<String> {
    let bound = 1.0 / (budget.epsilon * spec.f_gap * spec.f_gap * (spec.dim as f64).sqrt());
    if (spec.n_components as f64) < bound {
        Some(format!(
            "n = {} is below the selection-accuracy sample bound {:.3e}; private selection may \
             miss the advertised additive errors",
            spec.n_components, bound
        ))
    } else {
        None
    }
}

// ---------------------------------------------------------------------------
// Resolver
// ---------------------------------------------------------------------------

/// Knobs of the plan resolver.
#[derive(Debug, Clone, Copy)]
pub struct ResolveOptions {
    /// Assume gradient concentration (default). When false, the extra
    /// no-concentration Gaussian floor is enforced.
    pub assume_gradient_concentration: bool,
    /// Per-event failure probability used by the no-concentration floor.
    pub tilde_delta: f64,
    /// The resolver picks the smallest feasible `alpha >= alpha_0` whose
    /// self-consistent total noise variance does not exceed this target.
    /// Keeping it O(1) keeps the iteration count near its noiseless scale.
    pub target_total_noise_var: f64,
}

impl Default for ResolveOptions {
    fn default() -> Self {
        Self {
            assume_gradient_concentration: true,
            tilde_delta: 0.01,
            target_total_noise_var: 1.0,
        }
    }
}

const MAX_ITERATIONS_F: f64 = 1e18;

/// Self-consistent state at a fixed alpha.
#[derive(Debug, Clone, Copy)]
struct AlphaState {
    grad_bound: f64,
    gauss_std: f64,
    step_size: f64,
    iterations: u64,
    total_noise_var: f64,
}

/// Computes (eta, T) from alpha and the current noise level, honoring the
/// step-size preconditions eta <= 1/L and eta <= 1/(sigma sqrt(T)).
fn step_and_iterations(
    spec: &ProblemSpec,
    constants: &Constants,
    alpha: f64,
    total_noise_var: f64,
) -> Option<(f64, u64)> {
    let l = spec.lipschitz_grad;
    let sigma = spec.stoch_sigma;
    let f_max = spec.f_gap;
    // L = 0 degenerates to a unit curvature scale: eta = c_eta alpha^2 / (1 + noise).
    let l_eff = if l > 0.0 { l } else { 1.0 };
    let branch1 = alpha * alpha / (l_eff * (1.0 + total_noise_var));
    let branch2 = if total_noise_var > 0.0 {
        f_max / (l_eff * total_noise_var)
    } else {
        f64::INFINITY
    };
    let mut eta = constants.c_eta * branch1.min(branch2);
    if l > 0.0 {
        eta = eta.min(1.0 / l);
    }
    if sigma > 0.0 {
        // Closed form of eta <= 1/(sigma sqrt(T)) with T = 64 f_max/(eta alpha^2).
        eta = eta.min(alpha * alpha / (64.0 * sigma * sigma * f_max));
    }
    if !(eta > 0.0) || !eta.is_finite() {
        return None;
    }
    for _ in 0..64 {
        let t_f = (64.0 * f_max / (eta * alpha * alpha)).ceil();
        if !(t_f >= 1.0) || t_f > MAX_ITERATIONS_F {
            return None;
        }
        let t = t_f as u64;
        if sigma > 0.0 {
            let cap = 1.0 / (sigma * t_f.sqrt());
            if eta > cap {
                // The ceiling on T can break the cap by a hair; shave eta.
                eta = cap * (1.0 - 1e-12);
                continue;
            }
        }
        return Some((eta, t));
    }
    None
}

/// Runs the Delta fixed point at a fixed alpha. Returns the converged
/// self-consistent state, or None when the iteration diverges (the privacy
/// requirement cannot be met at this alpha).
fn eval_alpha(
    spec: &ProblemSpec,
    budget: &PrivacyBudget,
    constants: &Constants,
    opts: &ResolveOptions,
    alpha: f64,
) -> Option<AlphaState> {
    let d = spec.dim as f64;
    let sigma = spec.stoch_sigma;
    let b = budget.batch_size as f64;
    let mut floor = sigma / b.sqrt();
    if !opts.assume_gradient_concentration {
        floor = floor.max(nsg_floor(
            sigma,
            budget.batch_size,
            spec.dim,
            opts.tilde_delta,
        ));
    }
    let scale_ref = floor.max(1.0);

    let mut gauss = floor;
    for _ in 0..4000 {
        let total = d * gauss * gauss + sigma * sigma / b;
        let (_eta, t) = step_and_iterations(spec, constants, alpha, total)?;
        let c_bound = gradient_bound(spec, t, budget.delta, constants.c);
        let required = gaussian_scale(
            c_bound,
            t,
            budget.delta,
            spec.n_components,
            budget.epsilon,
            constants.c2,
        );
        let next = (required * (1.0 + 1e-9)).max(floor);
        if next > 1e9 * scale_ref {
            return None;
        }
        if (next - gauss).abs() <= 1e-11 * gauss.max(f64::MIN_POSITIVE) {
            // Converged; re-derive everything from the final noise level and
            // confirm the privacy inequality actually holds.
            let gauss = next;
            let total = d * gauss * gauss + sigma * sigma / b;
            let (eta, t) = step_and_iterations(spec, constants, alpha, total)?;
            let c_bound = gradient_bound(spec, t, budget.delta, constants.c);
            let required = gaussian_scale(
                c_bound,
                t,
                budget.delta,
                spec.n_components,
                budget.epsilon,
                constants.c2,
            );
            if required > 0.0 && gauss <= required {
                return None;
            }
            return Some(AlphaState {
                grad_bound: c_bound,
                gauss_std: gauss,
                step_size: eta,
                iterations: t,
                total_noise_var: total,
            });
        }
        gauss = next;
    }
    None
}

/// Feasible at this alpha with noise at or below the resolver target?
fn feasible_on_target(
    spec: &ProblemSpec,
    budget: &PrivacyBudget,
    constants: &Constants,
    opts: &ResolveOptions,
    alpha: f64,
) -> Option<AlphaState> {
    let floor_noise = {
        let sigma = spec.stoch_sigma;
        let b = budget.batch_size as f64;
        sigma * sigma / b * (1.0 + spec.dim as f64)
    };
    let target = opts.target_total_noise_var.max(floor_noise * 2.0 + 1e-30);
    eval_alpha(spec, budget, constants, opts, alpha).filter(|s| s.total_noise_var <= target)
}

fn plan_from_state(
    spec: &ProblemSpec,
    budget: &PrivacyBudget,
    constants: &Constants,
    alpha: f64,
    state: AlphaState,
) -> NoisePlan {
    let rho = spec.lipschitz_hess;
    let escape = if rho > 0.0 {
        let sqrt_ra = (rho * alpha).sqrt();
        Some(EscapeSchedule {
            iters: (constants.c_escape_iters / (state.step_size * sqrt_ra)).ceil() as u64,
            radius: constants.c_escape_radius * (alpha / rho).sqrt(),
            drop: constants.c_drop * (alpha * alpha * alpha / rho).sqrt(),
        })
    } else {
        None
    };
    NoisePlan {
        grad_bound: state.grad_bound,
        gauss_std: state.gauss_std,
        step_size: state.step_size,
        iterations: state.iterations,
        alpha,
        total_noise_var: state.total_noise_var,
        batch_size: budget.batch_size,
        escape,
        constants: *constants,
    }
}

/// Resolves the circular dependency among (alpha, C, Delta, eta, T) into a
/// concrete plan.
///
/// Starting from `alpha_0 = f_max d^(1/4) / sqrt(n epsilon)`, the resolver
/// inflates alpha by 1.5 while the privacy fixed point diverges or leaves the
/// noise target, then bisects the bracket until successive alpha values agree
/// to 1e-6 relative. The budget-regime requirement `epsilon < c1 T B^2 / n^2`
/// is enforced afterwards by walking alpha back down (more iterations) when
/// necessary. Every invariant is re-verified independently by `verify_plan`
/// before the plan is returned.
pub fn resolve_plan(
    spec: &ProblemSpec,
    budget: &PrivacyBudget,
    constants: &Constants,
) -> Result<NoisePlan> {
    resolve_plan_with(spec, budget, constants, &ResolveOptions::default())
}

pub fn resolve_plan_with(
    spec: &ProblemSpec,
    budget: &PrivacyBudget,
    constants: &Constants,
    opts: &ResolveOptions,
) -> Result<NoisePlan> {
    constants.validate()?;
    if !(budget.epsilon > 0.0) || !(budget.delta > 0.0 && budget.delta < 1.0) {
        return Err(Error::Input("invalid privacy budget".into()));
    }
    if budget.batch_size == 0 || budget.batch_size > spec.n_components {
        return Err(Error::Input(format!(
            "batch_size {} out of range for n = {}",
            budget.batch_size, spec.n_components
        )));
    }

    let alpha0 = spec.f_gap * (spec.dim as f64).powf(0.25)
        / (spec.n_components as f64 * budget.epsilon).sqrt();

    // Inflate until the privacy fixed point converges within the noise target.
    let mut alpha_hi = alpha0;
    let mut hi_state = feasible_on_target(spec, budget, constants, opts, alpha_hi);
    let mut rounds = 0usize;
    while hi_state.is_none() {
        rounds += 1;
        if rounds > 200 {
            return Err(Error::Resolve(format!(
                "no feasible alpha after 200 inflation rounds (last alpha = {alpha_hi:.6e})"
            )));
        }
        alpha_hi *= 1.5;
        hi_state = feasible_on_target(spec, budget, constants, opts, alpha_hi);
    }

    // Bisect back toward the smallest feasible alpha (never below alpha_0).
    let (mut alpha, mut state) = (alpha_hi, hi_state.unwrap());
    if alpha > alpha0 {
        let mut lo = alpha / 1.5;
        let mut hi = alpha;
        for _ in 0..80 {
            if (hi - lo) <= 1e-6 * hi {
                break;
            }
            let mid = 0.5 * (lo + hi);
            match feasible_on_target(spec, budget, constants, opts, mid) {
                Some(s) => {
                    hi = mid;
                    alpha = mid;
                    state = s;
                }
                None => lo = mid,
            }
        }
    }

    // Budget-regime constraint: epsilon < c1 T B^2 / n^2, i.e. T large enough.
    let n = spec.n_components as f64;
    let b = budget.batch_size as f64;
    let t_budget = budget.epsilon * n * n / (constants.c1 * b * b);
    if (state.iterations as f64) <= t_budget {
        // Shrink alpha (raising T) until the regime constraint holds.
        let mut lo_alpha = alpha;
        let mut lo_state = None;
        for _ in 0..400 {
            lo_alpha *= 0.98;
            match eval_alpha(spec, budget, constants, opts, lo_alpha) {
                Some(s) if (s.iterations as f64) > t_budget => {
                    lo_state = Some(s);
                    break;
                }
                Some(_) => continue,
                None => break,
            }
        }
        match lo_state {
            Some(s) => {
                alpha = lo_alpha;
                state = s;
            }
            None => {
                return Err(Error::Budget(format!(
                    "epsilon = {} requires T > {:.3e} (c1 T B^2/n^2 bound) but no feasible alpha \
                     reaches it",
                    budget.epsilon, t_budget
                )));
            }
        }
    }

    let plan = plan_from_state(spec, budget, constants, alpha, state);
    let violations = verify_plan(&plan, spec, budget);
    if !violations.is_empty() {
        return Err(Error::Resolve(format!(
            "resolved plan fails invariants: {}",
            violations.join("; ")
        )));
    }
    Ok(plan)
}

/// Independently re-checks every plan invariant from scratch. Returns a list
/// of violations (empty when the plan is sound). Used as the resolver's exit
/// check and directly by tests.
pub fn verify_plan(plan: &NoisePlan, spec: &ProblemSpec, budget: &PrivacyBudget) -> Vec<String> {
    let mut out = Vec::new();
    let eta = plan.step_size;
    let t = plan.iterations;
    let alpha = plan.alpha;
    let sigma = spec.stoch_sigma;
    let l = spec.lipschitz_grad;
    let d = spec.dim as f64;
    let b = plan.batch_size as f64;
    let n = spec.n_components as f64;
    let k = &plan.constants;

    for (name, v) in [
        ("grad_bound", plan.grad_bound),
        ("gauss_std", plan.gauss_std),
        ("step_size", plan.step_size),
        ("alpha", plan.alpha),
        ("total_noise_var", plan.total_noise_var),
    ] {
        if !v.is_finite() || v < 0.0 {
            out.push(format!("{name} is not finite and nonnegative: {v}"));
        }
    }
    if !(eta > 0.0) {
        out.push(format!("step_size must be positive: {eta}"));
    }
    if t == 0 {
        out.push("iterations must be >= 1".into());
    }

    if l > 0.0 && eta > 1.0 / l * (1.0 + 1e-12) {
        out.push(format!("step_size {eta} exceeds 1/L = {}", 1.0 / l));
    }
    if sigma > 0.0 {
        let cap = 1.0 / (sigma * (t as f64).sqrt());
        if eta > cap * (1.0 + 1e-9) {
            out.push(format!("step_size {eta} exceeds 1/(sigma sqrt(T)) = {cap}"));
        }
    }

    let var_floor = sigma * sigma / b;
    if plan.gauss_std * plan.gauss_std < var_floor * (1.0 - 1e-12) {
        out.push(format!(
            "gauss_std^2 = {} below sigma^2/B = {var_floor}",
            plan.gauss_std * plan.gauss_std
        ));
    }

    let c_check = gradient_bound(spec, t, budget.delta, k.c);
    if (c_check - plan.grad_bound).abs() > 1e-9 * c_check.max(1.0) {
        out.push(format!(
            "grad_bound {} does not match formula {c_check}",
            plan.grad_bound
        ));
    }
    let required = gaussian_scale(
        plan.grad_bound,
        t,
        budget.delta,
        spec.n_components,
        budget.epsilon,
        k.c2,
    );
    if required > 0.0 && plan.gauss_std <= required {
        out.push(format!(
            "gauss_std {} not above the DP requirement {required}",
            plan.gauss_std
        ));
    }

    let t_formula = (64.0 * spec.f_gap / (eta * alpha * alpha)).ceil();
    if t_formula.is_finite() && (t as f64 - t_formula).abs() > 0.5 {
        out.push(format!(
            "iterations {t} != ceil(64 f_max/(eta alpha^2)) = {t_formula}"
        ));
    }

    let total = d * plan.gauss_std * plan.gauss_std + sigma * sigma / b;
    if (total - plan.total_noise_var).abs() > 1e-9 * total.max(1e-300) {
        out.push(format!(
            "total_noise_var {} != d Delta^2 + sigma^2/B = {total}",
            plan.total_noise_var
        ));
    }

    if 64.0 * k.c_drop / (10.0 * k.c_escape_iters) <= 1.0 {
        out.push("constants violate 64 c_drop/(10 c_escape_iters) > 1".into());
    }
    if k.c_escape_radius * k.c_escape_radius / (k.c * k.c_escape_iters) < 2.0 * k.c_drop {
        out.push("constants violate c_escape_radius^2/(c c_escape_iters) >= 2 c_drop".into());
    }

    if !(budget.epsilon < k.c1 * t as f64 * b * b / (n * n)) {
        out.push(format!(
            "epsilon {} not below c1 T B^2/n^2 = {}",
            budget.epsilon,
            k.c1 * t as f64 * b * b / (n * n)
        ));
    }

    let rho = spec.lipschitz_hess;
    match (&plan.escape, rho > 0.0) {
        (Some(esc), true) => {
            let sqrt_ra = (rho * alpha).sqrt();
            let iters = (k.c_escape_iters / (eta * sqrt_ra)).ceil();
            if (esc.iters as f64 - iters).abs() > 0.5 {
                out.push(format!("escape iters {} != {iters}", esc.iters));
            }
            let radius = k.c_escape_radius * (alpha / rho).sqrt();
            if (esc.radius - radius).abs() > 1e-9 * radius {
                out.push(format!("escape radius {} != {radius}", esc.radius));
            }
            let drop = k.c_drop * (alpha * alpha * alpha / rho).sqrt();
            if (esc.drop - drop).abs() > 1e-9 * drop {
                out.push(format!("escape drop {} != {drop}", esc.drop));
            }
        }
        (None, true) => out.push("escape schedule missing although rho > 0".into()),
        (Some(_), false) => out.push("escape schedule present although rho = 0".into()),
        (None, false) => {}
    }

    out
}

/// Builds a plan for a fixed iteration count, calibrating `C` and `Delta`
/// with the closed-form rules at that `T`. This is the practical mode used by
/// the epsilon sweep (fixed training length per epsilon, as in the reference
/// experiments) and by tests that pin `T` for runtime.
///
/// `enforce_noise_floor` applies the convergence-side premise
/// `Delta^2 >= sigma^2 / B` on top of the privacy requirement; sweeps disable
/// it so the injected noise reflects the privacy calibration alone.
pub fn fixed_t_plan(
    spec: &ProblemSpec,
    budget: &PrivacyBudget,
    constants: &Constants,
    iterations: u64,
    step_size: f64,
    alpha: f64,
    enforce_noise_floor: bool,
) -> Result<NoisePlan> {
    constants.validate()?;
    if iterations == 0 {
        return Err(Error::Input("iterations must be >= 1".into()));
    }
    if !(step_size > 0.0) || !step_size.is_finite() {
        return Err(Error::Input(format!(
            "step_size must be positive, got {step_size}"
        )));
    }
    let c_bound = gradient_bound(spec, iterations, budget.delta, constants.c);
    let required = gaussian_scale(
        c_bound,
        iterations,
        budget.delta,
        spec.n_components,
        budget.epsilon,
        constants.c2,
    );
    let floor = if enforce_noise_floor {
        spec.stoch_sigma / (budget.batch_size as f64).sqrt()
    } else {
        0.0
    };
    let gauss = (required * (1.0 + 1e-9)).max(floor);
    let total = spec.dim as f64 * gauss * gauss
        + spec.stoch_sigma * spec.stoch_sigma / budget.batch_size as f64;
    let rho = spec.lipschitz_hess;
    let escape = (rho > 0.0).then(|| {
        let sqrt_ra = (rho * alpha).sqrt();
        EscapeSchedule {
            iters: (constants.c_escape_iters / (step_size * sqrt_ra)).ceil() as u64,
            radius: constants.c_escape_radius * (alpha / rho).sqrt(),
            drop: constants.c_drop * (alpha * alpha * alpha / rho).sqrt(),
        }
    });
    Ok(NoisePlan {
        grad_bound: c_bound,
        gauss_std: gauss,
        step_size,
        iterations,
        alpha,
        total_noise_var: total,
        batch_size: budget.batch_size,
        escape,
        constants: *constants,
    })
}
