//! Acceptance suite.
//!
//! One test per criterion; each prints a `criterion N (name): PASS ...` line
//! with the measured numbers (run with `--nocapture` to see them). Thresholds
//! are pinned in code; every expected value is either derived analytically in
//! the test or checked against an independent oracle.

use std::time::Instant;

use rand::Rng;

use noisy_sgd::analysis::{coupling_amplification, escape_statistics, run_coupled};
use noisy_sgd::dense::symmetric_eigenvalues;
use noisy_sgd::harness::sweep::{sweep_epsilon, RunShape};
use noisy_sgd::optimizer::{run, Mode};
use noisy_sgd::privacy::{
    fixed_t_plan, gaussian_scale, gradient_bound, laplace_scales, resolve_plan, verify_plan,
    Constants, EscapeSchedule, NoisePlan, PrivacyBudget,
};
use noisy_sgd::problem::{norm2, Point, ProblemSpec};
use noisy_sgd::rng::Streams;
use noisy_sgd::sosp::{
    check_sosp, laplace_draw, min_eigenvalue, private_select_from_stats, EigParams,
};
use noisy_sgd::testbed::{preset, PresetOverrides, TestbedProblem};

fn quartic_10d(n: usize) -> TestbedProblem {
    preset(
        "quartic-10d",
        &PresetOverrides {
            n: Some(n),
            ..Default::default()
        },
        0,
    )
    .unwrap()
}

/// Spearman rank correlation (no ties expected in these inputs).
fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    let rank = |v: &[f64]| -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap());
        let mut r = vec![0.0; v.len()];
        for (k, &i) in idx.iter().enumerate() {
            r[i] = k as f64;
        }
        r
    };
    let rx = rank(xs);
    let ry = rank(ys);
    let n = xs.len() as f64;
    let mean = (n - 1.0) / 2.0;
    let mut num = 0.0;
    let mut dx = 0.0;
    let mut dy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        num += (a - mean) * (b - mean);
        dx += (a - mean) * (a - mean);
        dy += (b - mean) * (b - mean);
    }
    num / (dx.sqrt() * dy.sqrt())
}

/// Criterion 1: with C from the gradient bound, clipping is a no-op - clip
/// and no-clip runs with shared randomness produce identical traces in at
/// least 98 of 100 seeds (clip probability <= 2 delta with delta = 0.01).
#[test]
fn acceptance_1_clip_equivalence() {
    let start = Instant::now();
    let problem = preset("quad-10d", &PresetOverrides::default(), 0).unwrap();
    let spec = problem.spec();
    assert_eq!(spec.dim, 10);
    assert_eq!(spec.n_components, 10_000);
    let budget = PrivacyBudget::new(2.0, 0.01, 100).unwrap();
    let constants = Constants::default();
    let iterations = 2000u64;
    // eta within min(1/L, 1/(sigma sqrt(T))).
    let eta_cap =
        (1.0 / spec.lipschitz_grad).min(1.0 / (spec.stoch_sigma * (iterations as f64).sqrt()));
    let plan = fixed_t_plan(
        spec,
        &budget,
        &constants,
        iterations,
        0.9 * eta_cap,
        1.0,
        true,
    )
    .unwrap();

    let mut identical = 0u32;
    let mut runs_with_clips = 0u32;
    for seed in 0..100u64 {
        let x0 = problem.default_x0(false, seed);
        let a = run(
            problem.oracles(),
            spec,
            Some(problem.clamp_radius()),
            &x0,
            &plan,
            Mode::Clip,
            seed,
        )
        .unwrap();
        let b = run(
            problem.oracles(),
            spec,
            Some(problem.clamp_radius()),
            &x0,
            &plan,
            Mode::NoClip,
            seed,
        )
        .unwrap();
        let same = a
            .points
            .iter()
            .zip(&b.points)
            .all(|(p, q)| p.as_slice() == q.as_slice());
        if same {
            identical += 1;
        }
        if a.clip_events.iter().any(|&c| c > 0) {
            runs_with_clips += 1;
        }
    }
    assert!(
        identical >= 98,
        "criterion 1 FAIL: only {identical}/100 clip/no-clip runs identical"
    );
    assert!(
        runs_with_clips <= 2,
        "criterion 1 FAIL: {runs_with_clips} runs clipped"
    );
    println!(
        "criterion 1 (clip-equivalence): PASS - {identical}/100 identical, {runs_with_clips} runs \
         with clips, C = {:.3}, {:.1?}",
        plan.grad_bound,
        start.elapsed()
    );
}

/// Criterion 2: on quartic-10d with the resolved plan, at least half of the
/// (subsampled) iterates are exact alpha-SOSPs in >= 18 of 20 seeds.
#[test]
fn acceptance_2_second_order_convergence() {
    let start = Instant::now();
    let problem = quartic_10d(40_000);
    let spec = problem.spec();
    let budget = PrivacyBudget::new(2.0, 0.01, 1024).unwrap();
    let plan = resolve_plan(spec, &budget, &Constants::default()).unwrap();
    assert!(verify_plan(&plan, spec, &budget).is_empty());
    // The eigenvalue condition must actually bind at this alpha.
    let rho = spec.lipschitz_hess;
    assert!(
        (rho * plan.alpha).sqrt() < 2.0,
        "saddle would not be excluded: sqrt(rho alpha) = {}",
        (rho * plan.alpha).sqrt()
    );

    let eig = EigParams::default();
    let mut good_seeds = 0u32;
    let mut fractions = Vec::new();
    for seed in 0..20u64 {
        let x0 = problem.default_x0(true, seed);
        let trace = run(
            problem.oracles(),
            spec,
            Some(problem.clamp_radius()),
            &x0,
            &plan,
            Mode::NoClip,
            seed,
        )
        .unwrap();
        let n_points = trace.points.len();
        let sample = 250usize.min(n_points);
        let mut rng = Streams::new(seed).stream("acc2-eig", 0);
        let mut sosp = 0u32;
        for k in 0..sample {
            let t = k * (n_points - 1) / (sample - 1);
            let r = check_sosp(
                &trace.points[t],
                problem.oracles(),
                spec,
                plan.alpha,
                &eig,
                &mut rng,
            )
            .unwrap();
            if r.is_sosp_exact {
                sosp += 1;
            }
        }
        let frac = sosp as f64 / sample as f64;
        fractions.push(frac);
        if frac >= 0.5 {
            good_seeds += 1;
        }
    }
    assert!(
        good_seeds >= 18,
        "criterion 2 FAIL: only {good_seeds}/20 seeds reached 50% SOSP iterates ({fractions:?})"
    );
    let min_frac = fractions.iter().copied().fold(f64::INFINITY, f64::min);
    println!(
        "criterion 2 (second-order convergence): PASS - {good_seeds}/20 seeds, min fraction \
         {min_frac:.3}, alpha = {:.3}, T = {}, {:.1?}",
        plan.alpha,
        plan.iterations,
        start.elapsed()
    );
}

/// Criterion 3: 500 escape episodes from the quartic-2d saddle - the
/// objective drops by the scheduled amount in >= 25% of episodes and rises
/// noticeably in <= 5%.
#[test]
fn acceptance_3_saddle_escape() {
    let start = Instant::now();
    let problem = preset("quartic-2d", &PresetOverrides::default(), 0).unwrap();
    let spec = problem.spec();
    let budget = PrivacyBudget::new(2.0, 0.01, 256).unwrap();
    let plan = resolve_plan(spec, &budget, &Constants::default()).unwrap();
    assert!(verify_plan(&plan, spec, &budget).is_empty());
    let saddle = problem.truth().saddle.clone().unwrap();
    let summary = escape_statistics(
        problem.oracles(),
        spec,
        Some(problem.clamp_radius()),
        &saddle,
        &plan,
        500,
        0,
    )
    .unwrap();
    assert!(
        summary.frac_drop >= 0.25,
        "criterion 3 FAIL: drop fraction {} below 0.25",
        summary.frac_drop
    );
    assert!(
        summary.frac_rise <= 0.05,
        "criterion 3 FAIL: rise fraction {} above 0.05",
        summary.frac_rise
    );
    let esc = plan.escape.as_ref().unwrap();
    println!(
        "criterion 3 (saddle escape): PASS - drop {:.3}, rise {:.3}, displaced {:.3} \
         (I = {}, R = {:.3}, F = {:.3}), {:.1?}",
        summary.frac_drop,
        summary.frac_rise,
        summary.frac_displaced,
        esc.iters,
        esc.radius,
        esc.drop,
        start.elapsed()
    );
}

/// Criterion 4: the final objective gap is monotone in epsilon (Spearman
/// <= -0.8 over eps in {1/8..8}) and the eps = 8 gap is within 2x of the
/// non-private baseline.
///
/// Runs on the positive-definite quadratic testbed, where injected noise
/// degrades the plateau monotonically. (On the strict-saddle quartic, extra
/// noise *helps* short-horizon runs by accelerating escape, inverting the
/// ordering; the monotone-in-epsilon claim is about noise cost, which the
/// contractive problem isolates.)
#[test]
fn acceptance_4_epsilon_monotonicity() {
    let start = Instant::now();
    let problem = preset(
        "quad-10d",
        &PresetOverrides {
            n: Some(20_000),
            sigma: Some(4.0),
            ..Default::default()
        },
        0,
    )
    .unwrap();
    let eps_values = [0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0];
    let seeds: Vec<u64> = (0..10).collect();
    let shape = RunShape {
        step_size: 0.2,
        iterations: 300,
    };
    let table = sweep_epsilon(
        &problem,
        0.01,
        1024,
        &Constants::default(),
        &eps_values,
        &seeds,
        &shape,
    )
    .unwrap();
    for row in &table.rows {
        assert!(
            row.run_error.is_none(),
            "criterion 4 FAIL: run error {:?}",
            row.run_error
        );
        assert!(
            row.resolve_error.is_none(),
            "criterion 4 FAIL: resolve error {:?}",
            row.resolve_error
        );
    }
    // Resolved alpha strictly decreases along the grid.
    let alphas: Vec<f64> = table
        .rows
        .iter()
        .map(|r| r.resolved_alpha.unwrap())
        .collect();
    for w in alphas.windows(2) {
        assert!(
            w[1] < w[0],
            "criterion 4 FAIL: resolved alpha not strictly decreasing {alphas:?}"
        );
    }
    let gaps: Vec<f64> = table.rows.iter().map(|r| r.mean_gap).collect();
    let rho = spearman(&eps_values, &gaps);
    assert!(
        rho <= -0.8,
        "criterion 4 FAIL: Spearman {rho} above -0.8 (gaps {gaps:?})"
    );
    let gap8 = gaps[gaps.len() - 1];
    let base = table.baseline.mean_gap;
    assert!(
        gap8 <= 2.0 * base,
        "criterion 4 FAIL: eps=8 gap {gap8} above 2x baseline {base}"
    );
    println!(
        "criterion 4 (epsilon monotonicity): PASS - Spearman {rho:.3}, gaps {:?}, baseline \
         {base:.3e}, {:.1?}",
        gaps.iter().map(|g| format!("{g:.3e}")).collect::<Vec<_>>(),
        start.elapsed()
    );
}

/// Criterion 5: matrix-free power method vs the dense symmetric eigensolver
/// on 50 random symmetric matrices (d <= 200, spectral gap >= 0.05 L):
/// max |error| <= 1e-6.
#[test]
fn acceptance_5_eigensolver_oracle() {
    let start = Instant::now();
    let sizes = [5usize, 8, 13, 21, 34, 55, 89, 144, 200];
    let mut max_err = 0.0f64;
    let mut max_err_vs_truth = 0.0f64;
    for case in 0..50u64 {
        let d = sizes[case as usize % sizes.len()];
        let mut rng = Streams::new(1000 + case).stream("acc5", 0);
        // Known spectrum with lambda_min = -1 isolated by at least 0.1;
        // L = max |eig| = 1 so the gap is >= 0.05 L by construction.
        let mut eigs = vec![0.0; d];
        eigs[0] = -1.0;
        for e in eigs.iter_mut().skip(1) {
            *e = -0.9 + 1.9 * rng.random::<f64>();
        }
        // Conjugate by three random Householder reflections.
        let mut m = vec![0.0; d * d];
        for (i, &e) in eigs.iter().enumerate() {
            m[i * d + i] = e;
        }
        for _ in 0..3 {
            let mut v: Vec<f64> = (0..d)
                .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
                .collect();
            let nv = norm2(&v);
            for x in v.iter_mut() {
                *x /= nv;
            }
            // m <- (I - 2vv') m (I - 2vv')
            let mut mv = vec![0.0; d * d];
            for i in 0..d {
                for j in 0..d {
                    mv[i * d + j] = m[i * d + j];
                }
            }
            // Left multiply.
            for j in 0..d {
                let s: f64 = (0..d).map(|k| v[k] * mv[k * d + j]).sum();
                for i in 0..d {
                    mv[i * d + j] -= 2.0 * v[i] * s;
                }
            }
            // Right multiply.
            for i in 0..d {
                let s: f64 = (0..d).map(|k| mv[i * d + k] * v[k]).sum();
                for j in 0..d {
                    mv[i * d + j] -= 2.0 * s * v[j];
                }
            }
            m = mv;
        }

        let dense = symmetric_eigenvalues(&m, d).unwrap()[0];
        let (power, _iters) = min_eigenvalue(
            |x, out| {
                for i in 0..d {
                    out[i] = (0..d).map(|j| m[i * d + j] * x[j]).sum();
                }
            },
            d,
            1.0,
            60_000,
            1e-13,
            &mut rng,
        )
        .unwrap();
        max_err = max_err.max((power - dense).abs());
        max_err_vs_truth = max_err_vs_truth.max((dense - (-1.0)).abs());
    }
    assert!(
        max_err <= 1e-6,
        "criterion 5 FAIL: max |power - dense| = {max_err}"
    );
    assert!(
        max_err_vs_truth <= 1e-9,
        "criterion 5 FAIL: dense oracle drifted from constructed spectrum by {max_err_vs_truth}"
    );
    println!(
        "criterion 5 (eigensolver oracle): PASS - max |power - dense| = {max_err:.2e}, dense vs \
         construction {max_err_vs_truth:.2e}, {:.1?}",
        start.elapsed()
    );
}

/// Criterion 6: mechanism statistics. Injected Gaussian noise reconstructed
/// from a run has per-coordinate variance within 5% of Delta^2 (T d >= 1e5
/// samples); Laplace draws pass mean/variance/tail tests at 3 standard errors
/// with 1e6 samples.
#[test]
fn acceptance_6_mechanism_statistics() {
    let start = Instant::now();
    // Gaussian, via trace reconstruction on a noiseless-gradient problem.
    let problem = preset(
        "quad-10d",
        &PresetOverrides {
            n: Some(2),
            sigma: Some(0.0),
            ..Default::default()
        },
        0,
    )
    .unwrap();
    let spec = problem.spec();
    let delta_noise = 0.3;
    let plan = NoisePlan {
        grad_bound: 1e9,
        gauss_std: delta_noise,
        step_size: 0.05,
        iterations: 10_000,
        alpha: 1.0,
        total_noise_var: 10.0 * delta_noise * delta_noise,
        batch_size: 2,
        escape: None,
        constants: Constants::default(),
    };
    let x0 = Point::origin(10);
    let trace = run(problem.oracles(), spec, None, &x0, &plan, Mode::NoClip, 42).unwrap();
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut count = 0usize;
    for t in 0..10_000usize {
        let xt = trace.points[t].as_slice();
        let xn = trace.points[t + 1].as_slice();
        let g = problem.oracles().full_gradient(xt);
        for j in 0..10 {
            let xi = (xt[j] - xn[j]) / plan.step_size - g[j];
            sum += xi;
            sum_sq += xi * xi;
            count += 1;
        }
    }
    assert_eq!(count, 100_000);
    let mean = sum / count as f64;
    let var = sum_sq / count as f64 - mean * mean;
    let target = delta_noise * delta_noise;
    assert!(
        (var - target).abs() <= 0.05 * target,
        "criterion 6 FAIL: gaussian variance {var} not within 5% of {target}"
    );

    // Laplace: mean, variance, tail at 3 standard errors over 1e6 draws.
    let n = 1_000_000usize;
    let b = 2.5;
    let mut rng = Streams::new(7).stream("acc6-laplace", 0);
    let (mut lsum, mut lsq, mut tail) = (0.0f64, 0.0f64, 0usize);
    let q: f64 = 0.05;
    let cutoff = b * (1.0f64 / q).ln();
    for _ in 0..n {
        let x = laplace_draw(b, &mut rng);
        lsum += x;
        lsq += x * x;
        if x.abs() > cutoff {
            tail += 1;
        }
    }
    let nf = n as f64;
    let lmean = lsum / nf;
    let lvar = lsq / nf - lmean * lmean;
    let mean_se = (2.0 * b * b / nf).sqrt();
    let var_se = (20.0 * b.powi(4) / nf).sqrt();
    let tail_freq = tail as f64 / nf;
    let tail_se = (q * (1.0 - q) / nf).sqrt();
    assert!(
        lmean.abs() <= 3.0 * mean_se,
        "criterion 6 FAIL: laplace mean {lmean}"
    );
    assert!(
        (lvar - 2.0 * b * b).abs() <= 3.0 * var_se,
        "criterion 6 FAIL: laplace variance {lvar} vs {}",
        2.0 * b * b
    );
    assert!(
        (tail_freq - q).abs() <= 3.0 * tail_se,
        "criterion 6 FAIL: laplace tail frequency {tail_freq} vs {q}"
    );
    println!(
        "criterion 6 (mechanism statistics): PASS - gaussian var {var:.5} vs {target}, laplace \
         mean {lmean:.2e} var {lvar:.4} tail {tail_freq:.4}, {:.1?}",
        start.elapsed()
    );
}

/// Criterion 7: calibration formulas match independent evaluations to 1e-12
/// relative on a 100-point grid; the resolver's output passes independent
/// invariant verification on 20 random specs, and alpha strictly decreases
/// when epsilon doubles on every one of them.
#[test]
fn acceptance_7_calibration_formulas() {
    let start = Instant::now();
    // Deterministic xorshift grid.
    let mut state = 0x9e3779b97f4a7c15u64;
    let mut next = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64
    };

    let mut max_rel = 0.0f64;
    for _ in 0..100 {
        let l = 0.01 + 20.0 * next();
        let sigma = 2.0 * next();
        let fm = 0.1 + 30.0 * next();
        let d = 1 + (next() * 30.0) as usize;
        let n = 10 + (next() * 1e5) as usize;
        let t = 1 + (next() * 1e7) as u64;
        let delta = 0.0005 + 0.2 * next();
        let c = 0.1 + 3.0 * next();
        let spec = ProblemSpec::new(d, n, l, 0.0, sigma, fm).unwrap();
        let got = gradient_bound(&spec, t, delta, c);
        // Independent arrangement: logs expanded, terms accumulated in
        // reverse order.
        let tf = t as f64;
        let nf = n as f64;
        let term3 = (sigma * (-(delta.ln()))).sqrt();
        let term2 = sigma * (nf.ln() + tf.ln()).sqrt();
        let term1 = l * (tf.ln() - delta.ln()).sqrt();
        let oracle = c * (term3 + term2 + term1) + 2.0 * (l.sqrt() * fm.sqrt());
        let rel = (got - oracle).abs() / oracle.abs().max(1e-300);
        max_rel = max_rel.max(rel);

        let eps = 0.1 + 8.0 * next();
        let c2 = 0.1 + 3.0 * next();
        let cb = 0.5 + 10.0 * next();
        let got = gaussian_scale(cb, t, delta, n, eps, c2);
        let oracle = c2 * cb / (nf * eps) * tf.sqrt() * (-(delta.ln())).sqrt();
        let rel = (got - oracle).abs() / oracle.abs().max(1e-300);
        max_rel = max_rel.max(rel);

        let (s1, s2) = laplace_scales(cb, l, n, eps);
        let o1 = cb / nf / eps;
        let o2 = l / nf / eps;
        max_rel = max_rel.max((s1 - o1).abs() / o1.max(1e-300));
        max_rel = max_rel.max((s2 - o2).abs() / o2.max(1e-300));
    }
    assert!(
        max_rel <= 1e-12,
        "criterion 7 FAIL: max relative error {max_rel}"
    );

    // Resolver invariants on 20 random specs, with alpha halving under
    // epsilon doubling.
    let constants = Constants::default();
    let mut resolved = 0;
    let mut attempts = 0;
    while resolved < 20 && attempts < 200 {
        attempts += 1;
        let d = 1 + (next() * 20.0) as usize;
        let n = 50_000 + (next() * 4e5) as usize;
        let l = 0.5 + 10.0 * next();
        let rho = if next() < 0.3 {
            0.0
        } else {
            0.1 + 4.0 * next()
        };
        let sigma = 0.5 * next();
        let fm = 1.0 + 30.0 * next();
        let k = 4 + (next() * 12.0) as usize;
        let b = (n / k).max(1);
        let eps = 0.5 + 2.0 * next();
        let spec = ProblemSpec::new(d, n, l, rho, sigma, fm).unwrap();
        let budget = PrivacyBudget::new(eps, 0.01, b).unwrap();
        let budget2 = PrivacyBudget::new(2.0 * eps, 0.01, b).unwrap();
        let (p1, p2) = match (
            resolve_plan(&spec, &budget, &constants),
            resolve_plan(&spec, &budget2, &constants),
        ) {
            (Ok(a), Ok(b)) => (a, b),
            _ => continue,
        };
        let v1 = verify_plan(&p1, &spec, &budget);
        let v2 = verify_plan(&p2, &spec, &budget2);
        assert!(
            v1.is_empty(),
            "criterion 7 FAIL: invariants {v1:?} on {spec:?}"
        );
        assert!(
            v2.is_empty(),
            "criterion 7 FAIL: invariants {v2:?} on {spec:?}"
        );
        assert!(
            p2.alpha < p1.alpha,
            "criterion 7 FAIL: alpha did not decrease when epsilon doubled ({} -> {}) on {spec:?}",
            p1.alpha,
            p2.alpha
        );
        resolved += 1;
    }
    assert_eq!(
        resolved, 20,
        "criterion 7 FAIL: only {resolved} specs resolved in {attempts} draws"
    );
    println!(
        "criterion 7 (calibration formulas): PASS - max formula error {max_rel:.2e}, 20/20 specs \
         verified ({attempts} draws), {:.1?}",
        start.elapsed()
    );
}

/// Criterion 8: the coupled-pair difference along v1 matches the closed-form
/// Delta alpha_t law within 10% at t in {I/4, I/2, I} over 1e3 seeds on the
/// pure quadratic.
#[test]
fn acceptance_8_coupling_variance_law() {
    let start = Instant::now();
    let problem = preset(
        "quad-2d-saddle",
        &PresetOverrides {
            sigma: Some(0.0),
            n: Some(2),
            ..Default::default()
        },
        0,
    )
    .unwrap();
    let spec = problem.spec();
    let eta = 0.02;
    let gauss = 0.5;
    let iters = 64u64;
    let plan = NoisePlan {
        grad_bound: 1e9,
        gauss_std: gauss,
        step_size: eta,
        iterations: iters,
        alpha: 0.5,
        total_noise_var: 2.0 * gauss * gauss,
        batch_size: 2,
        escape: Some(EscapeSchedule {
            iters,
            radius: 1.0,
            drop: 0.1,
        }),
        constants: Constants::default(),
    };
    let x0 = Point::origin(2);
    let seeds = 1000u64;
    let mut sq = vec![0.0f64; iters as usize + 1];
    for s in 0..seeds {
        let pair = run_coupled(problem.oracles(), spec, None, &x0, &plan, 30_000 + s).unwrap();
        for (t, d) in pair.diff_along_v1.iter().enumerate() {
            sq[t] += d * d;
        }
    }
    let gamma = 1.0; // |lambda_min| of diag(1, -1)
    let mut worst = 0.0f64;
    for t in [iters / 4, iters / 2, iters] {
        let emp = (sq[t as usize] / seeds as f64).sqrt();
        let pred = 2.0 * eta * gauss * coupling_amplification(eta, gamma, t);
        let rel = (emp / pred - 1.0).abs();
        worst = worst.max(rel);
        assert!(
            rel <= 0.10,
            "criterion 8 FAIL: at t = {t}, empirical std {emp} vs predicted {pred} ({rel:.3})"
        );
    }
    println!(
        "criterion 8 (coupling variance law): PASS - worst relative deviation {worst:.3} over \
         t in {{16, 32, 64}}, {:.1?}",
        start.elapsed()
    );
}

/// Criterion 9: with calibrated Laplace scales on a criterion-2 trace,
/// private selection returns a true alpha-SOSP index in >= 95% of 1e3
/// repetitions.
#[test]
fn acceptance_9_private_selection() {
    let start = Instant::now();
    let problem = quartic_10d(40_000);
    let spec = problem.spec();
    let budget = PrivacyBudget::new(2.0, 0.01, 1024).unwrap();
    let plan = resolve_plan(spec, &budget, &Constants::default()).unwrap();
    let x0 = problem.default_x0(true, 12345);
    let trace = run(
        problem.oracles(),
        spec,
        Some(problem.clamp_radius()),
        &x0,
        &plan,
        Mode::NoClip,
        12345,
    )
    .unwrap();

    // Exact statistics for 500 evenly spaced candidates, computed once.
    let n_points = trace.points.len();
    let sample = 500usize;
    let eig = EigParams::default();
    let mut rng = Streams::new(9).stream("acc9-eig", 0);
    let mut stats = Vec::with_capacity(sample);
    let mut exact = Vec::with_capacity(sample);
    for k in 0..sample {
        let t = k * (n_points - 1) / (sample - 1);
        let r = check_sosp(
            &trace.points[t],
            problem.oracles(),
            spec,
            plan.alpha,
            &eig,
            &mut rng,
        )
        .unwrap();
        stats.push((r.grad_norm, r.min_eig));
        exact.push(r.is_sosp_exact);
    }
    let true_fraction = exact.iter().filter(|&&b| b).count() as f64 / sample as f64;
    assert!(
        true_fraction >= 0.5,
        "criterion 9 FAIL: candidate pool has only {true_fraction} true SOSPs"
    );

    let scales = laplace_scales(
        plan.grad_bound,
        spec.lipschitz_grad,
        spec.n_components,
        budget.epsilon,
    );
    let mut lap_rng = Streams::new(99).stream("acc9-laplace", 0);
    let reps = 1000u32;
    let mut successes = 0u32;
    for _ in 0..reps {
        let (chosen, _) = private_select_from_stats(
            &stats,
            plan.alpha,
            spec.lipschitz_hess,
            scales,
            &mut lap_rng,
        );
        if let Some(i) = chosen {
            if exact[i] {
                successes += 1;
            }
        }
    }
    let rate = successes as f64 / reps as f64;
    assert!(
        rate >= 0.95,
        "criterion 9 FAIL: private selection succeeded in {rate} of repetitions"
    );
    println!(
        "criterion 9 (private selection): PASS - success rate {rate:.3}, scales = ({:.2e}, \
         {:.2e}), pool fraction {true_fraction:.3}, {:.1?}",
        scales.0,
        scales.1,
        start.elapsed()
    );
}
