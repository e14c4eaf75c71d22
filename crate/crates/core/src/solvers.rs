//! Update kernels and run loops for the basic and synchronous parallel
//! methods.
//!
//! Every kernel is an SGD step on the stochastic reformulation
//! `f_S(x) = ½‖Ax − b‖²_H`; the asynchronous kernels are the same step taken
//! at a stale iterate followed by a damped master update. The run loops
//! record `‖x_k − x⋆‖²_B` where `x⋆` is the B-projection of `x₀` onto the
//! solution set.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::rate;
use crate::rng::{stream, SimRng};
use crate::sketch::{draw_sketch, LinearSystem, SketchDistribution, SketchedSystem, SpectralProfile};

fn check_omega(omega: f64) -> Result<()> {
    if !(omega >= 0.0 && omega.is_finite()) {
        return Err(Error::domain("omega", omega, "must be nonnegative"));
    }
    Ok(())
}

/// `x − ω∇f_S(x)`.
pub fn basic_step(system: &LinearSystem, s: &DenseMatrix, x: &[f64], omega: f64) -> Result<Vec<f64>> {
    check_omega(omega)?;
    SketchedSystem::new(system, s)?.step(x, omega)
}

/// Average of `basic_step(x, S_i, ω)` over the samples, summed left to right.
pub fn parallel_step(system: &LinearSystem, samples: &[DenseMatrix], x: &[f64], omega: f64) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::domain("samples", 0.0, "need at least one sketch"));
    }
    let mut acc = vec![0.0; x.len()];
    for s in samples {
        let y = basic_step(system, s, x, omega)?;
        for (a, v) in acc.iter_mut().zip(&y) {
            *a += v;
        }
    }
    let tau = samples.len() as f64;
    for a in acc.iter_mut() {
        *a /= tau;
    }
    Ok(acc)
}

/// Worker side of the asynchronous scheme: a basic step at the delayed
/// iterate `x_{t−δ}`.
pub fn async_worker_compute(
    system: &LinearSystem,
    s: &DenseMatrix,
    x_delayed: &[f64],
    omega: f64,
) -> Result<Vec<f64>> {
    basic_step(system, s, x_delayed, omega)
}

/// Master side: `(1 − θ)x_t + θy`.
pub fn async_master_update(x_current: &[f64], y: &[f64], theta: f64) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::domain("theta", theta, "must lie in [0, 1]"));
    }
    if x_current.len() != y.len() {
        return Err(Error::Shape {
            op: "async_master_update",
            expected: (x_current.len(), 1),
            found: (y.len(), 1),
        });
    }
    Ok(x_current
        .iter()
        .zip(y)
        .map(|(x, y)| (1.0 - theta) * x + theta * y)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverTag {
    Basic,
    Parallel,
}

impl SolverTag {
    pub fn as_str(self) -> &'static str {
        match self {
            SolverTag::Basic => "basic",
            SolverTag::Parallel => "parallel",
        }
    }
}

/// Extra knobs for [`run_basic`] and [`run_parallel`].
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Starting point; the zero vector when `None`.
    pub x0: Option<Vec<f64>>,
    /// Record every `stride` steps (the first and last step are always
    /// recorded). `0` is treated as 1.
    pub stride: usize,
    /// When set, records carry the expected-error bound `ρ_s(ω,τ)^k e₀`.
    pub profile: Option<SpectralProfile>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub step: usize,
    /// `‖x_k − x⋆‖²_B`.
    pub error_bsq: f64,
    pub bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceMeta {
    pub solver: SolverTag,
    pub omega: f64,
    pub tau: u32,
    pub seed: u64,
    pub steps: usize,
    /// `ρ_s(ω, τ)` when a profile was supplied.
    pub rho: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub records: Vec<TraceRecord>,
    pub meta: TraceMeta,
    pub x_star: Vec<f64>,
    pub x_final: Vec<f64>,
}

impl RunTrace {
    pub fn errors(&self) -> impl Iterator<Item = f64> + '_ {
        self.records.iter().map(|r| r.error_bsq)
    }
}

/// Basic method `x_{k+1} = x_k − ω∇f_{S_k}(x_k)`, sketches from stream
/// `(seed, 0)`.
pub fn run_basic(
    system: &LinearSystem,
    dist: &SketchDistribution,
    omega: f64,
    steps: usize,
    seed: u64,
    opts: &RunOptions,
) -> Result<RunTrace> {
    run(system, dist, omega, 1, steps, seed, opts, SolverTag::Basic)
}

/// Parallel method: each step averages `τ` independent basic steps from the
/// same iterate. With `τ = 1` it consumes the generator exactly like
/// [`run_basic`].
pub fn run_parallel(
    system: &LinearSystem,
    dist: &SketchDistribution,
    omega: f64,
    tau: u32,
    steps: usize,
    seed: u64,
    opts: &RunOptions,
) -> Result<RunTrace> {
    if tau < 1 {
        return Err(Error::domain("tau", 0.0, "must be at least 1"));
    }
    run(system, dist, omega, tau, steps, seed, opts, SolverTag::Parallel)
}

#[allow(clippy::too_many_arguments)]
fn run(
    system: &LinearSystem,
    dist: &SketchDistribution,
    omega: f64,
    tau: u32,
    steps: usize,
    seed: u64,
    opts: &RunOptions,
    solver: SolverTag,
) -> Result<RunTrace> {
    check_omega(omega)?;
    dist.validate(system.rows())?;
    let n = system.dim();
    let x0 = match &opts.x0 {
        Some(x) if x.len() != n => {
            return Err(Error::Shape {
                op: "x0",
                expected: (n, 1),
                found: (x.len(), 1),
            })
        }
        Some(x) => x.clone(),
        None => vec![0.0; n],
    };
    let x_star = system.project(&x0)?;
    let e0 = system.b_dist_sq(&x0, &x_star)?;
    let rho = match &opts.profile {
        Some(p) => Some(rate::rho_s(omega, tau, p)?),
        None => None,
    };
    let bound = |k: usize| rho.map(|r| libm::pow(r, k as f64) * e0);
    let stride = opts.stride.max(1);

    let mut rng: SimRng = stream(seed, 0);
    let m = system.rows();
    let mut samples = Vec::with_capacity(tau as usize);
    let mut x = x0;
    let mut records = vec![TraceRecord {
        step: 0,
        error_bsq: e0,
        bound: bound(0),
    }];
    for k in 1..=steps {
        samples.clear();
        for _ in 0..tau {
            samples.push(draw_sketch(dist, m, &mut rng));
        }
        x = match solver {
            SolverTag::Basic => basic_step(system, &samples[0], &x, omega)?,
            SolverTag::Parallel => parallel_step(system, &samples, &x, omega)?,
        };
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("iterate"));
        }
        if k % stride == 0 || k == steps {
            records.push(TraceRecord {
                step: k,
                error_bsq: system.b_dist_sq(&x, &x_star)?,
                bound: bound(k),
            });
        }
    }
    Ok(RunTrace {
        records,
        meta: TraceMeta {
            solver,
            omega,
            tau,
            seed,
            steps,
            rho,
        },
        x_star,
        x_final: x,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sketch::{spectral_profile, ProfileOptions};

    fn e(i: usize) -> DenseMatrix {
        let mut v = [0.0; 2];
        v[i] = 1.0;
        DenseMatrix::column(&v)
    }

    fn identity(b: [f64; 2]) -> LinearSystem {
        LinearSystem::euclidean(DenseMatrix::identity(2), b.to_vec()).unwrap()
    }

    #[test]
    fn basic_step_examples() {
        let sys = identity([0.0, 0.0]);
        assert_eq!(basic_step(&sys, &e(0), &[1.0, 1.0], 1.0).unwrap(), vec![0.0, 1.0]);
        assert_eq!(basic_step(&sys, &e(1), &[3.0, -2.0], 0.0).unwrap(), vec![3.0, -2.0]);
        let sys = identity([1.0, 2.0]);
        assert_eq!(basic_step(&sys, &e(1), &[1.0, 2.0], 1.7).unwrap(), vec![1.0, 2.0]);
        assert!(basic_step(&sys, &e(1), &[1.0, 2.0], -1.0).is_err());
    }

    #[test]
    fn parallel_step_examples() {
        let sys = identity([0.0, 0.0]);
        let x = [1.0, 1.0];
        assert_eq!(parallel_step(&sys, &[e(0), e(1)], &x, 1.0).unwrap(), vec![0.5, 0.5]);
        assert_eq!(
            parallel_step(&sys, &[e(1)], &x, 0.7).unwrap(),
            basic_step(&sys, &e(1), &x, 0.7).unwrap()
        );
        assert_eq!(
            parallel_step(&sys, &[e(0), e(0), e(0)], &x, 1.0).unwrap(),
            basic_step(&sys, &e(0), &x, 1.0).unwrap()
        );
        assert!(parallel_step(&sys, &[], &x, 1.0).is_err());
    }

    #[test]
    fn async_kernels() {
        let sys = identity([0.0, 0.0]);
        assert_eq!(async_worker_compute(&sys, &e(0), &[1.0, 1.0], 1.0).unwrap(), vec![0.0, 1.0]);
        assert_eq!(async_worker_compute(&sys, &e(0), &[4.0, 1.0], 0.0).unwrap(), vec![4.0, 1.0]);
        assert_eq!(async_master_update(&[2.0, 0.0], &[0.0, 2.0], 0.5).unwrap(), vec![1.0, 1.0]);
        assert_eq!(async_master_update(&[2.0, 0.0], &[0.0, 2.0], 1.0).unwrap(), vec![0.0, 2.0]);
        assert_eq!(async_master_update(&[2.0, 0.0], &[0.0, 2.0], 0.0).unwrap(), vec![2.0, 0.0]);
        assert!(async_master_update(&[2.0, 0.0], &[0.0, 2.0], 1.5).is_err());
    }

    #[test]
    fn identity_run_zeroes_one_coordinate_per_step() {
        let sys = identity([1.0, -1.0]);
        let dist = SketchDistribution::coordinate_uniform(2).unwrap();
        let t = run_basic(&sys, &dist, 1.0, 10, 3, &RunOptions::default()).unwrap();
        assert_eq!(t.records[0].error_bsq, 2.0);
        for w in t.records.windows(2) {
            assert!(w[1].error_bsq <= w[0].error_bsq);
            assert!(w[1].error_bsq == 1.0 || w[1].error_bsq == 0.0);
        }
    }

    #[test]
    fn zero_step_size_constant_trace() {
        let sys = identity([1.0, -1.0]);
        let dist = SketchDistribution::coordinate_uniform(2).unwrap();
        let t = run_parallel(&sys, &dist, 0.0, 3, 20, 3, &RunOptions::default()).unwrap();
        assert!(t.errors().all(|v| v == 2.0));
    }

    #[test]
    fn tau_one_matches_basic() {
        let a = DenseMatrix::from_rows(&[[1.0, 2.0, 0.0], [0.0, 1.0, 1.0], [1.0, 3.0, 1.0]]).unwrap();
        let sys = LinearSystem::euclidean(a, vec![3.0, 2.0, 5.0]).unwrap();
        let dist = SketchDistribution::coordinate_uniform(3).unwrap();
        let opts = RunOptions::default();
        let b = run_basic(&sys, &dist, 1.0, 50, 11, &opts).unwrap();
        let p = run_parallel(&sys, &dist, 1.0, 1, 50, 11, &opts).unwrap();
        assert_eq!(b.records, p.records);
        assert_eq!(b.x_final, p.x_final);
    }

    #[test]
    fn stride_and_bound_annotation() {
        let sys = identity([1.0, 1.0]);
        let dist = SketchDistribution::coordinate_uniform(2).unwrap();
        let profile = spectral_profile(&sys, &dist, &ProfileOptions::default()).unwrap();
        let opts = RunOptions {
            stride: 4,
            profile: Some(profile),
            ..RunOptions::default()
        };
        let t = run_parallel(&sys, &dist, 1.0, 2, 10, 0, &opts).unwrap();
        let steps: Vec<usize> = t.records.iter().map(|r| r.step).collect();
        assert_eq!(steps, vec![0, 4, 8, 10]);
        assert_eq!(t.meta.rho, Some(0.375));
        assert!((t.records[1].bound.unwrap() - 2.0 * 0.375f64.powi(4)).abs() < 1e-15);
    }

    #[test]
    fn deterministic_per_seed() {
        let sys = identity([1.0, 1.0]);
        let dist = SketchDistribution::gaussian(1).unwrap();
        let opts = RunOptions::default();
        let a = run_parallel(&sys, &dist, 1.0, 3, 30, 5, &opts).unwrap();
        let b = run_parallel(&sys, &dist, 1.0, 3, 30, 5, &opts).unwrap();
        assert_eq!(a, b);
        let c = run_parallel(&sys, &dist, 1.0, 3, 30, 6, &opts).unwrap();
        assert_ne!(a.x_final, c.x_final);
    }

    #[test]
    fn rejects_bad_x0() {
        let sys = identity([1.0, 1.0]);
        let dist = SketchDistribution::coordinate_uniform(2).unwrap();
        let opts = RunOptions {
            x0: Some(vec![0.0; 3]),
            ..RunOptions::default()
        };
        assert!(run_basic(&sys, &dist, 1.0, 3, 0, &opts).is_err());
    }
}
