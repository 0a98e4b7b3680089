use salm_core::diagnostics::{efficiency_bound_check, multiplier_identity_gap};
use salm_core::inner::{run_inner, InnerLoopParams, Sampled};
use salm_core::manifold::ManifoldPoint;
use salm_core::outer::{run_outer, RunOutcome, SolverConfig};
use salm_core::problems::{
    multishape_benchmark, multishape_problem, quadratic_benchmark, shifted_quadratic,
    MultiShapeParams, ProblemDefinition,
};
use salm_core::shapes::regular_polygon;
use salm_core::stochastic::{KlField, RngStream};

fn deterministic_config(p: &ProblemDefinition) -> SolverConfig {
    let mut c = p.config.clone();
    c.termination.r_tol = 1e-7;
    c.termination.k_max = 49;
    c.termination.sample_budget = u64::MAX;
    c
}

/// Projected gradient descent on `min u^2, u >= 1`.
fn projected_gradient_oracle() -> f64 {
    let mut u: f64 = 0.0;
    for _ in 0..200 {
        u = (u - 0.25 * 2.0 * u).max(1.0);
    }
    u
}

#[test]
fn deterministic_one_dimensional_run_reaches_kkt_point() {
    let p = quadratic_benchmark(1, 0.0).unwrap();
    let out = run_outer(&p, &deterministic_config(&p), 1).unwrap();
    let oracle = projected_gradient_oracle();
    assert_eq!(oracle, 1.0);
    assert!(out.records.len() < 50);
    assert!((out.point[0] - oracle).abs() <= 1e-6, "{:?}", out.point);
    assert!((out.lambda[0] - 2.0).abs() <= 1e-5, "{:?}", out.lambda);
}

#[test]
fn noisy_one_dimensional_runs_land_near_solution() {
    let p = quadratic_benchmark(1, 0.1).unwrap();
    let hits = (0..20u64)
        .filter(|&seed| {
            let out = run_outer(&p, &p.config, 1000 + seed).unwrap();
            (out.point[0] - 1.0).abs() <= 1e-2
        })
        .count();
    assert!(hits >= 19, "{hits}/20");
}

#[test]
fn identical_seed_gives_identical_records() {
    let p = quadratic_benchmark(3, 0.1).unwrap();
    let strip = |o: RunOutcome| {
        o.records
            .into_iter()
            .map(|mut r| {
                r.wall_ms = 0.0;
                r
            })
            .collect::<Vec<_>>()
    };
    let a = strip(run_outer(&p, &p.config, 42).unwrap());
    let b = strip(run_outer(&p, &p.config, 42).unwrap());
    let c = strip(run_outer(&p, &p.config, 43).unwrap());
    assert_eq!(a, b);
    assert_ne!(a, c);
}

fn assert_log_invariants(p: &ProblemDefinition, cfg: &SolverConfig, out: &RunOutcome) {
    let al = &cfg.al;
    for pair in out.trajectory.windows(2) {
        let ratio = pair[1].mu / pair[0].mu;
        assert!(ratio == 1.0 || ratio == al.gamma, "mu ratio {ratio}");
    }
    // record k holds H_{k+1}; mu_{k+1} is the next record's mu
    for k in 1..out.records.len() {
        let mu_next = if k + 1 < out.records.len() {
            out.records[k + 1].mu
        } else {
            out.mu
        };
        if mu_next == out.records[k].mu {
            assert!(out.records[k].feasibility <= al.tau * out.records[k - 1].feasibility);
        }
    }
    for s in &out.trajectory {
        assert!(al.safeguard.contains(&s.w));
        for &i in p.constraints.partition().inequality() {
            assert!(s.lambda_next[i] >= 0.0);
        }
    }
}

#[test]
fn penalty_safeguard_and_sign_invariants_hold_on_logs() {
    for (p, seeds) in [
        (quadratic_benchmark(3, 0.1).unwrap(), 0..5u64),
        (quadratic_benchmark(1, 1.0).unwrap(), 0..5u64),
    ] {
        for seed in seeds {
            let out = run_outer(&p, &p.config, seed).unwrap();
            assert_log_invariants(&p, &p.config, &out);
        }
    }
    let m = multishape_benchmark(3, 32, KlField::default()).unwrap();
    let mut cfg = m.config.clone();
    cfg.termination.sample_budget = 200_000;
    let out = run_outer(&m, &cfg, 7).unwrap();
    assert_log_invariants(&m, &cfg, &out);
}

#[test]
fn multiplier_identity_holds_along_trajectory() {
    let p = quadratic_benchmark(3, 0.1).unwrap();
    let out = run_outer(&p, &p.config, 9).unwrap();
    for s in &out.trajectory {
        let dj = p
            .objective
            .expected(&s.u_next)
            .unwrap()
            .unwrap()
            .differential;
        assert!(multiplier_identity_gap(&dj, p.constraints.as_ref(), s).unwrap() <= 1e-10);
    }
}

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn single_shape_with_active_volume_floor() {
    let nodes = 32;
    let mut prm = MultiShapeParams::new(1, nodes, KlField::default());
    prm.amplitude = 0.0;
    prm.stochastic = false;
    prm.radii = vec![0.3];
    prm.initial_centers = prm.centers.clone();
    prm.initial_radii = vec![0.5];
    let floor = regular_polygon([0.0, 0.0], 0.4, nodes, 0.0)
        .unwrap()
        .volume();
    prm.volume_floors = Some(vec![floor]);
    prm.perimeter_caps = Some(vec![regular_polygon([0.0, 0.0], 0.6, nodes, 0.0)
        .unwrap()
        .perimeter()]);
    let p = multishape_problem(&prm).unwrap();
    let mut cfg = p.config.clone();
    cfg.termination.r_tol = 1e-6;
    cfg.termination.k_max = 30;
    cfg.termination.sample_budget = 2_000_000;
    let out = run_outer(&p, &cfg, 3).unwrap();

    // radial restriction: J(r) = w P (r - 0.3)^2 subject to vol(r) >= floor
    let s = (2.0 * std::f64::consts::PI / nodes as f64).sin();
    let r_star = bisect(|r| 0.5 * nodes as f64 * r * r * s - floor, 0.0, 1.0);
    let w = prm.tracking_weight
        * regular_polygon([0.0, 0.0], 0.3, nodes, 0.0)
            .unwrap()
            .perimeter()
        / nodes as f64;
    let lambda_star = 2.0 * w * (r_star - 0.3) / (r_star * s);

    let h = p.constraints.values(&out.point).unwrap();
    assert!(-h[0] + floor >= floor - 1e-3);
    assert!(out.lambda[0] > 0.0);
    assert!(
        (out.lambda[0] - lambda_star).abs() <= 1e-2 * lambda_star,
        "{} vs {lambda_star}",
        out.lambda[0]
    );
    let curve = &p.shapes.as_ref().unwrap().curves(&out.point).unwrap()[0];
    for n in curve.nodes() {
        let r = (n[0] - 0.5).hypot(n[1] - 0.5);
        assert!((r - r_star).abs() <= 1e-3, "{r} vs {r_star}");
    }
}

#[test]
fn tracking_expectation_matches_monte_carlo() {
    let p = multishape_benchmark(3, 16, KlField::default()).unwrap();
    let u = p.initial_point.clone();
    let exact = p.objective.expected(&u).unwrap().unwrap();
    let n = 100_000u64;
    let root = RngStream::new(11);
    let (mut sum, mut sq) = (0.0, 0.0);
    let mut grad = vec![0.0; u.len()];
    let mut grad_sq = vec![0.0; u.len()];
    for s in 0..n {
        let smp = p.objective.sample(&u, &mut root.sample(s).rng()).unwrap();
        sum += smp.value;
        sq += smp.value * smp.value;
        for (i, g) in smp.differential.iter().enumerate() {
            grad[i] += g;
            grad_sq[i] += g * g;
        }
    }
    let nf = n as f64;
    let mean = sum / nf;
    let sd = (sq / nf - mean * mean).sqrt();
    assert!(
        (mean - exact.value).abs() <= 3.0 * sd / nf.sqrt(),
        "{mean} vs {}",
        exact.value
    );
    for i in 0..u.len() {
        let m = grad[i] / nf;
        let sd = (grad_sq[i] / nf - m * m).max(0.0).sqrt();
        assert!((m - exact.differential[i]).abs() <= 4.0 * sd / nf.sqrt() + 1e-12);
    }
}

#[test]
fn objectives_are_unbiased_at_random_points() {
    use rand::Rng;
    let quad = quadratic_benchmark(3, 0.5).unwrap();
    let shape = multishape_benchmark(2, 8, KlField::default()).unwrap();
    let mut rng = RngStream::new(5).rng();
    for p in [quad, shape] {
        for _ in 0..10 {
            let mut u = p.initial_point.clone();
            for x in u.as_mut_slice() {
                *x += 0.01 * (rng.random::<f64>() - 0.5);
            }
            let u = ManifoldPoint::new(u.into_inner());
            let exact = p.objective.expected(&u).unwrap().unwrap().differential;
            let n = 100_000u64;
            let root = RngStream::new(rng.random());
            let mut mean = vec![0.0; u.len()];
            let mut sq = vec![0.0; u.len()];
            for s in 0..n {
                let g = p
                    .objective
                    .sample(&u, &mut root.sample(s).rng())
                    .unwrap()
                    .differential;
                for i in 0..u.len() {
                    mean[i] += g[i] / n as f64;
                    sq[i] += g[i] * g[i] / n as f64;
                }
            }
            for i in 0..u.len() {
                let sd = (sq[i] - mean[i] * mean[i]).max(0.0).sqrt();
                assert!((mean[i] - exact[i]).abs() <= 4.0 * sd / (n as f64).sqrt() + 1e-12);
            }
        }
    }
}

#[test]
fn efficiency_bound_holds_for_several_step_factors() {
    let sigma = 1.0;
    let p = shifted_quadratic(vec![3.0], sigma).unwrap();
    let gap = 4.5;
    for alpha in [0.5, 1.0, 1.5] {
        let params = InnerLoopParams::new(alpha, 50, 10);
        let sq: Vec<f64> = (0..200u64)
            .map(|s| {
                let r = run_inner(
                    p.manifold.as_ref(),
                    &Sampled(p.objective.as_ref()),
                    &p.initial_point,
                    &params,
                    &RngStream::new(s).outer(1),
                )
                .unwrap();
                (r.u_next[0] - 3.0).powi(2)
            })
            .collect();
        let rep = efficiency_bound_check(&sq, 1.0, gap, alpha, 50, sigma * sigma, 10).unwrap();
        assert!(rep.pass, "alpha {alpha}: {rep:?}");
    }
}

#[test]
fn sample_budget_is_never_exceeded() {
    let p = quadratic_benchmark(3, 0.1).unwrap();
    for budget in [10u64, 25, 100, 500, 7_777, 100_000] {
        let mut cfg = p.config.clone();
        cfg.termination.sample_budget = budget;
        cfg.termination.r_tol = 0.0;
        cfg.termination.k_max = 100;
        let out = run_outer(&p, &cfg, 5).unwrap();
        assert!(out.samples <= budget, "{} > {budget}", out.samples);
        assert_eq!(out.stop_reason, salm_core::outer::StopReason::SampleBudget);
        assert!(out.records.iter().all(|r| r.samples <= budget));
    }
}
