//! Statistical and structural properties of the solvers and the
//! asynchronous simulation.

mod common;

use asgd_core::linalg::{b_norm_sq, DenseMatrix};
use asgd_core::rate;
use asgd_core::rng::{derive_seed, stream};
use asgd_core::sim::{self, build_schedule, Schedule, ScheduleKind, SimParams};
use asgd_core::sketch::{draw_sketch, spectral_profile, LinearSystem, ProfileOptions, SketchDistribution};
use asgd_core::solvers::{
    async_master_update, async_worker_compute, basic_step, parallel_step, run_basic, run_parallel, RunOptions,
};
use common::*;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngSeed};
use rand::Rng;

fn config(cases: u32) -> Config {
    Config {
        cases,
        rng_seed: RngSeed::Fixed(0xd1a),
        failure_persistence: None,
        ..Config::default()
    }
}

fn null_norm(sys: &LinearSystem, x: &[f64]) -> f64 {
    b_norm_sq(&sys.null_component(x).unwrap(), sys.geometry()).unwrap().sqrt()
}

proptest! {
    #![proptest_config(config(30))]

    #[test]
    fn parallel_step_is_left_to_right_average(seed in any::<u64>(), tau in 1usize..6, omega in 0.0f64..2.0) {
        let mut rng = stream(seed, 0);
        let sys = random_system(&mut rng, 5, 4, 3, false);
        let dist = random_coordinate(&mut rng, 5);
        let x = normal_vec(&mut rng, 4);
        let samples: Vec<DenseMatrix> = (0..tau).map(|_| draw_sketch(&dist, 5, &mut rng)).collect();
        let mut acc = [0.0; 4];
        for s in &samples {
            let y = basic_step(&sys, s, &x, omega).unwrap();
            for (a, v) in acc.iter_mut().zip(&y) {
                *a += v;
            }
        }
        let want: Vec<f64> = acc.iter().map(|a| a / tau as f64).collect();
        prop_assert_eq!(parallel_step(&sys, &samples, &x, omega).unwrap(), want);
    }

    #[test]
    fn solutions_are_absorbed(seed in any::<u64>(), omega in 0.0f64..3.0, theta in 0.0f64..=1.0) {
        let mut rng = stream(seed, 0);
        let sys = random_system(&mut rng, 4, 5, 3, false);
        let dist = pair_blocks(4);
        let xs = sys.project(&normal_vec(&mut rng, 5)).unwrap();
        let r = sys.residual(&xs).unwrap();
        prop_assert!(r.iter().map(|v| v * v).sum::<f64>().sqrt() < 1e-12);
        let samples: Vec<DenseMatrix> = (0..3).map(|_| draw_sketch(&dist, 4, &mut rng)).collect();
        let close = |y: &[f64]| y.iter().zip(&xs).all(|(a, b)| (a - b).abs() < 1e-12);
        prop_assert!(close(&basic_step(&sys, &samples[0], &xs, omega).unwrap()));
        prop_assert!(close(&parallel_step(&sys, &samples, &xs, omega).unwrap()));
        let y = async_worker_compute(&sys, &samples[1], &xs, omega).unwrap();
        prop_assert!(close(&async_master_update(&xs, &y, theta).unwrap()));
    }

    #[test]
    fn iterates_stay_in_range(seed in any::<u64>()) {
        let mut rng = stream(seed, 0);
        let sys = random_system(&mut rng, 4, 6, 3, false);
        let dist = random_coordinate(&mut rng, 4);
        let x0 = sys.range_point(&normal_vec(&mut rng, 4)).unwrap();
        prop_assert!(null_norm(&sys, &x0) < 1e-10);
        let omega = rng.random_range(0.2..1.9);
        let theta = rng.random_range(0.1..1.0);
        let (mut xb, mut xp) = (x0.clone(), x0.clone());
        let mut history = vec![x0.clone(); 4];
        for t in 0..1000 {
            let s = draw_sketch(&dist, 4, &mut rng);
            xb = basic_step(&sys, &s, &xb, omega).unwrap();
            let samples: Vec<DenseMatrix> = (0..3).map(|_| draw_sketch(&dist, 4, &mut rng)).collect();
            xp = parallel_step(&sys, &samples, &xp, omega).unwrap();
            let stale = history[(t + 1) % 4].clone();
            let y = async_worker_compute(&sys, &s, &stale, omega).unwrap();
            let xa = async_master_update(&history[t % 4], &y, theta).unwrap();
            history[(t + 1) % 4] = xa.clone();
            prop_assert!(null_norm(&sys, &xb) < 1e-8);
            prop_assert!(null_norm(&sys, &xp) < 1e-8);
            prop_assert!(null_norm(&sys, &xa) < 1e-8);
        }
        let opts = RunOptions { x0: Some(x0.clone()), ..RunOptions::default() };
        let trace = run_parallel(&sys, &dist, omega, 2, 1000, seed, &opts).unwrap();
        prop_assert!(null_norm(&sys, &trace.x_final) < 1e-8);
    }
}

#[test]
fn sim_range_invariance_and_determinism() {
    let mut rng = stream(31, 0);
    let sys = random_system(&mut rng, 4, 6, 3, false);
    let dist = random_coordinate(&mut rng, 4);
    let x0 = sys.range_point(&normal_vec(&mut rng, 4)).unwrap();
    let sched = build_schedule(3, 1.5, ScheduleKind::SeededRandomWeighted, 40, 5).unwrap();
    let params = SimParams {
        x0: Some(x0),
        ..SimParams::new(0.6, 1.2, 25, 5)
    };
    let a = sim::simulate_schedule(&sys, &dist, &sched, &params).unwrap();
    assert!(a.max_null_component < 1e-8);
    assert!(a.max_realized_delay <= a.meta.delta_a);
    let b = sim::simulate_schedule(&sys, &dist, &sched, &params).unwrap();
    assert_eq!(a, b);
    let bits = |r: &sim::ConvergenceReport| r.mean_errors().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&b));
}

#[test]
fn monotone_expected_decay() {
    let mut rng = stream(32, 0);
    let sys = random_system(&mut rng, 6, 4, 4, false);
    let dist = random_coordinate(&mut rng, 6);
    let x0 = normal_vec(&mut rng, 4);
    for omega in [0.3, 1.0, 1.8] {
        let opts = RunOptions {
            x0: Some(x0.clone()),
            ..RunOptions::default()
        };
        let traces: Vec<Vec<f64>> = (0..1000u64)
            .map(|i| run_basic(&sys, &dist, omega, 15, derive_seed(32, i), &opts).unwrap().errors().collect())
            .collect();
        for k in 0..15 {
            let diffs: Vec<f64> = traces.iter().map(|t| t[k + 1] - t[k]).collect();
            let (mean, se) = mean_and_se(&diffs);
            assert!(mean <= 3.0 * se, "ω={omega} k={k}: {mean} > 3·{se}");
        }
    }
}

#[test]
fn kaczmarz_one_step_contraction() {
    let mut rng = stream(33, 0);
    let sys = random_system(&mut rng, 50, 20, 20, true);
    let dist = SketchDistribution::coordinate_row_norm(sys.a()).unwrap();
    let p = spectral_profile(&sys, &dist, &ProfileOptions::default()).unwrap();
    let rho = rate::rho_s(1.0, 1, &p).unwrap();
    assert!((rho - (1.0 - p.lambda_min_plus)).abs() < 1e-15);
    let x0 = normal_vec(&mut rng, 20);
    let opts = RunOptions {
        x0: Some(x0),
        ..RunOptions::default()
    };
    let ratios: Vec<f64> = (0..1000u64)
        .map(|i| {
            let t = run_basic(&sys, &dist, 1.0, 1, derive_seed(33, i), &opts).unwrap();
            t.records[1].error_bsq / t.records[0].error_bsq
        })
        .collect();
    let (mean, se) = mean_and_se(&ratios);
    assert!(mean <= rho + 3.0 * se, "{mean} > {rho} + 3·{se}");
}

#[test]
fn parallel_optimal_step_rate() {
    let mut rng = stream(34, 0);
    let sys = random_system(&mut rng, 8, 5, 5, false);
    let dist = random_coordinate(&mut rng, 8);
    let p = spectral_profile(&sys, &dist, &ProfileOptions::default()).unwrap();
    let x0 = normal_vec(&mut rng, 5);
    for tau in [2u32, 4, 8] {
        let omega = 1.0 / rate::xi_s(tau, &p).unwrap();
        let rho = rate::rho_s_opt(tau, &p).unwrap();
        let opts = RunOptions {
            x0: Some(x0.clone()),
            ..RunOptions::default()
        };
        let ratios: Vec<f64> = (0..2000u64)
            .map(|i| {
                let t = run_parallel(&sys, &dist, omega, tau, 1, derive_seed(34, i), &opts).unwrap();
                t.records[1].error_bsq / t.records[0].error_bsq
            })
            .collect();
        let (mean, se) = mean_and_se(&ratios);
        assert!(mean <= rho + 3.0 * se, "τ={tau}: {mean} > {rho} + 3·{se}");
    }
}

#[test]
fn bound_annotation_dominates_mean_trace() {
    let (sys, dist) = identity_system();
    let p = spectral_profile(&sys, &dist, &ProfileOptions::default()).unwrap();
    let opts = RunOptions {
        profile: Some(p),
        ..RunOptions::default()
    };
    let traces: Vec<_> = (0..4000u64)
        .map(|i| run_parallel(&sys, &dist, 1.0, 2, 8, derive_seed(35, i), &opts).unwrap())
        .collect();
    for k in 0..=8 {
        let errs: Vec<f64> = traces.iter().map(|t| t.records[k].error_bsq).collect();
        let (mean, se) = mean_and_se(&errs);
        let bound = traces[0].records[k].bound.unwrap();
        assert!((mean - bound).abs() <= 3.0 * se + 1e-12, "k={k}: {mean} vs {bound}");
    }
}

#[test]
fn strong_recursion_random_schedule() {
    let (sys, dist) = identity_system();
    let p = spectral_profile(&sys, &dist, &ProfileOptions::default()).unwrap();
    let sched = build_schedule(3, 1.5, ScheduleKind::SeededRandomWeighted, 6, 36).unwrap();
    for (theta, omega) in [(0.5, 1.0), (0.3, 1.5), (1.0, 0.8)] {
        let rep = sim::simulate_schedule(&sys, &dist, &sched, &SimParams::new(theta, omega, 10_000, 36)).unwrap();
        let c = rate::recurrence_coeffs(theta, omega, &p).unwrap();
        let slack = sim::strong_recursion_slack(&rep, c.k1, c.k2);
        // early events are deterministic here, so equality holds up to rounding
        assert!(slack <= 1e-12, "θ={theta} ω={omega}: {slack}");
        let v = sim::compare_to_bound(&rep, &p).unwrap();
        assert_eq!(v.pass, Some(true), "{v:?}");
        assert!(v.perron_roots.iter().all(|r| r.root <= v.rho_a_bound.unwrap().powf(1.0 / 5.0) + 1e-12));
    }
}

#[test]
fn no_delay_compares_against_basic_rate() {
    let (sys, dist) = identity_system();
    let p = spectral_profile(&sys, &dist, &ProfileOptions::default()).unwrap();
    let sched = build_schedule(2, 1.0, ScheduleKind::NoDelay, 6, 0).unwrap();
    let rep = sim::simulate_schedule(&sys, &dist, &sched, &SimParams::new(1.0, 0.7, 4000, 37)).unwrap();
    let v = sim::compare_to_bound(&rep, &p).unwrap();
    let basic: f64 = 1.0 - 0.7 * (2.0 - 0.7) * 0.5;
    assert!((v.bound.unwrap() - basic.powi(2)).abs() < 1e-12);
    // on this system the basic rate is exact in expectation
    assert!((v.empirical.rate - basic.powi(2)).abs() <= 3.0 * v.empirical.std_error + 1e-12);
    assert_eq!(v.pass, Some(true));
}

#[test]
fn weak_recursion_constant_delay() {
    let mut rng = stream(38, 0);
    let sys = random_system(&mut rng, 4, 3, 3, false);
    let dist = random_coordinate(&mut rng, 4);
    let p = spectral_profile(&sys, &dist, &ProfileOptions::default()).unwrap();
    let u = p.eigenvectors.clone().unwrap();
    let root_b = sys.geometry().sqrt().clone();
    let x0 = normal_vec(&mut rng, 3);
    let (delta, theta, omega) = (2usize, 0.6, 1.1);
    let sched = Schedule::constant_delay(3, delta, 5).unwrap();
    let n_events = sched.num_events();
    let trials = 4000;
    // per-trial residuals of P_{t+1} − (1−θ)P_t − θ(1−ωλ_i)P_{t−δ}
    let mut resid = vec![vec![Vec::new(); 3]; n_events];
    for trial in 0..trials {
        let params = SimParams {
            x0: Some(x0.clone()),
            record_mean_iterates: true,
            ..SimParams::new(theta, omega, 1, derive_seed(38, trial as u64))
        };
        let rep = sim::simulate_schedule(&sys, &dist, &sched, &params).unwrap();
        let its = rep.mean_iterates.unwrap();
        let coords: Vec<Vec<f64>> = its
            .iter()
            .map(|r| u.t_matvec(&root_b.matvec(r).unwrap()).unwrap())
            .collect();
        for t in 0..n_events {
            let lag = &coords[t.saturating_sub(delta)];
            for i in 0..3 {
                let want = weak(&coords[t], lag, theta, omega, p.eigenvalues[i], i);
                resid[t][i].push(coords[t + 1][i] - want);
            }
        }
    }
    for (t, per_t) in resid.iter().enumerate() {
        for (i, r) in per_t.iter().enumerate() {
            let (mean, se) = mean_and_se(r);
            assert!(mean.abs() <= 3.0 * se + 1e-12, "t={t} i={i}: {mean} vs 3·{se}");
        }
    }
}

fn weak(now: &[f64], lag: &[f64], theta: f64, omega: f64, lambda: f64, i: usize) -> f64 {
    rate::weak_recursion_step(&[now[i]], &[lag[i]], theta, omega, &[lambda]).unwrap()[0]
}
