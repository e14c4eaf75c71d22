//! Logical-time simulation of the asynchronous master-worker scheme.
//!
//! Asynchrony is modelled entirely by a [`Schedule`]: an ordered list of
//! master updates, each naming the worker whose result is applied and how
//! stale the iterate behind that result is. A worker that contributes the
//! update producing `x_{t+1}` computed its step at `x_{t−δ}`, where `δ`
//! counts the master updates applied since the master last sent it an
//! iterate. Iterates before `x_0` are taken to be `x_0`.
//!
//! One unit interval is the time in which the slowest worker performs one
//! update; it contains exactly `δ_a` master updates.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::linalg::sqrt;
use crate::rate::{self, characteristic_perron_root, recurrence_coeffs, ROOT_TOL};
use crate::rng::{derive_seed, stream};
use crate::sketch::{draw_sketch, LinearSystem, SketchDistribution, SpectralProfile};
use crate::solvers::{async_master_update, async_worker_compute};

/// A worker and the number of updates it completes per unit interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WorkerConfig {
    pub id: usize,
    pub updates_per_interval: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleKind {
    /// Each worker's events are spread evenly over the interval (phases
    /// `(j + ½)/S_i`), ties going to the lower worker id. The same order
    /// repeats every interval.
    RoundRobinWeighted,
    /// Each interval is an independent random permutation of the same
    /// multiset of events.
    SeededRandomWeighted,
    /// Round-robin order, but every worker reads the current iterate
    /// (`δ = 0`).
    NoDelay,
}

impl ScheduleKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScheduleKind::RoundRobinWeighted => "round-robin-weighted",
            ScheduleKind::SeededRandomWeighted => "seeded-random-weighted",
            ScheduleKind::NoDelay => "no-delay",
        }
    }
}

/// One master update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScheduledEvent {
    pub worker: usize,
    /// `δ`: the result was computed at `x_{t−δ}`.
    pub staleness: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub kind: Option<ScheduleKind>,
    pub tau: usize,
    pub c: f64,
    pub delta_a: usize,
    pub workers: Vec<WorkerConfig>,
    /// `intervals[i]` holds the `δ_a` events of unit interval `i`.
    pub intervals: Vec<Vec<ScheduledEvent>>,
}

/// `round(cτ)` with halves rounded up.
pub fn rounded_delta_a(tau: usize, c: f64) -> usize {
    libm::floor(c * tau as f64 + 0.5) as usize
}

/// Speeds with `S_0 = 1` and the remaining `δ_a − 1` updates dealt
/// round-robin to workers `1..τ`.
pub fn allocate_speeds(tau: usize, delta_a: usize) -> Result<Vec<WorkerConfig>> {
    if tau < 2 {
        return Err(Error::domain("tau", tau as f64, "need at least 2 workers"));
    }
    if delta_a < tau {
        return Err(Error::InfeasibleSchedule {
            tau,
            delta_a,
        });
    }
    let rest = delta_a - 1;
    let others = tau - 1;
    Ok((0..tau)
        .map(|id| WorkerConfig {
            id,
            updates_per_interval: if id == 0 {
                1
            } else {
                rest / others + usize::from(id - 1 < rest % others)
            },
        })
        .collect())
}

/// Even-phase ordering of one interval's events (worker ids only).
fn round_robin_order(workers: &[WorkerConfig]) -> Vec<usize> {
    let mut slots: Vec<(f64, usize)> = workers
        .iter()
        .flat_map(|w| {
            let s = w.updates_per_interval;
            (0..s).map(move |j| ((j as f64 + 0.5) / s as f64, w.id))
        })
        .collect();
    slots.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    slots.into_iter().map(|(_, id)| id).collect()
}

/// Assigns staleness to a flat sequence of worker ids: `t − (time the
/// worker last received an iterate)`, capped at `delta_a`. Every worker
/// starts out holding `x_0`.
fn assign_staleness(order: &[usize], tau: usize, delta_a: usize) -> Vec<ScheduledEvent> {
    let mut held = vec![0usize; tau];
    order
        .iter()
        .enumerate()
        .map(|(t, &w)| {
            let staleness = (t - held[w]).min(delta_a);
            held[w] = t + 1;
            ScheduledEvent { worker: w, staleness }
        })
        .collect()
}

/// Builds `intervals` unit intervals for `τ` workers with `δ_a = round(cτ)`.
pub fn build_schedule(tau: usize, c: f64, kind: ScheduleKind, intervals: usize, seed: u64) -> Result<Schedule> {
    if !(c >= 1.0 && c.is_finite()) {
        return Err(Error::domain("c", c, "must be at least 1"));
    }
    if intervals == 0 {
        return Err(Error::domain("intervals", 0.0, "must be at least 1"));
    }
    let delta_a = rounded_delta_a(tau, c);
    let workers = allocate_speeds(tau, delta_a)?;
    let base = round_robin_order(&workers);
    let mut order = Vec::with_capacity(delta_a * intervals);
    match kind {
        ScheduleKind::RoundRobinWeighted | ScheduleKind::NoDelay => {
            for _ in 0..intervals {
                order.extend_from_slice(&base);
            }
        }
        ScheduleKind::SeededRandomWeighted => {
            let mut rng = stream(derive_seed(seed, u64::MAX), 0);
            for _ in 0..intervals {
                let mut block = base.clone();
                block.shuffle(&mut rng);
                order.extend_from_slice(&block);
            }
        }
    }
    let mut events = assign_staleness(&order, tau, delta_a);
    if kind == ScheduleKind::NoDelay {
        for e in events.iter_mut() {
            e.staleness = 0;
        }
    }
    Ok(Schedule {
        kind: Some(kind),
        tau,
        c,
        delta_a,
        workers,
        intervals: events.chunks(delta_a).map(<[_]>::to_vec).collect(),
    })
}

impl Schedule {
    /// Hand-written schedule: `events` is split into intervals of `delta_a`
    /// events (its length must be a multiple of `delta_a`).
    pub fn from_events(delta_a: usize, events: Vec<ScheduledEvent>) -> Result<Self> {
        if delta_a == 0 || events.is_empty() || !events.len().is_multiple_of(delta_a) {
            return Err(Error::domain(
                "events",
                events.len() as f64,
                "need a positive multiple of delta_a events",
            ));
        }
        if let Some(e) = events.iter().find(|e| e.staleness > delta_a) {
            return Err(Error::domain("staleness", e.staleness as f64, "exceeds delta_a"));
        }
        let tau = events.iter().map(|e| e.worker).max().unwrap_or(0) + 1;
        Ok(Self {
            kind: None,
            tau,
            c: delta_a as f64 / tau as f64,
            delta_a,
            workers: Vec::new(),
            intervals: events.chunks(delta_a).map(<[_]>::to_vec).collect(),
        })
    }

    /// Every event with the same staleness `delta`, one worker, `intervals`
    /// intervals of `delta_a` events.
    pub fn constant_delay(delta_a: usize, delta: usize, intervals: usize) -> Result<Self> {
        let events = vec![ScheduledEvent { worker: 0, staleness: delta }; delta_a * intervals];
        Self::from_events(delta_a, events)
    }

    pub fn num_events(&self) -> usize {
        self.intervals.len() * self.delta_a
    }

    pub fn events(&self) -> impl Iterator<Item = &ScheduledEvent> + '_ {
        self.intervals.iter().flatten()
    }

    pub fn max_staleness(&self) -> usize {
        self.events().map(|e| e.staleness).max().unwrap_or(0)
    }
}

/// Parameters of [`simulate_schedule`].
#[derive(Debug, Clone)]
pub struct SimParams {
    pub theta: f64,
    pub omega: f64,
    pub trials: usize,
    pub seed: u64,
    /// Starting point; the zero vector when `None`.
    pub x0: Option<Vec<f64>>,
    /// Keep the trial mean of `x_t − x⋆` for every `t`.
    pub record_mean_iterates: bool,
}

impl SimParams {
    pub fn new(theta: f64, omega: f64, trials: usize, seed: u64) -> Self {
        Self {
            theta,
            omega,
            trials,
            seed,
            x0: None,
            record_mean_iterates: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord {
    /// Index of the iterate this update produced.
    pub t: usize,
    pub worker: usize,
    pub delta: usize,
    /// Trial mean of `‖x_t − x⋆‖²_B`.
    pub mean_error: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntervalRecord {
    /// `0` is the starting point, `i` the end of unit interval `i`.
    pub interval: usize,
    pub mean_error: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimMeta {
    pub theta: f64,
    pub omega: f64,
    pub tau: usize,
    pub c: f64,
    pub delta_a: usize,
    pub seed: u64,
    pub trials: usize,
    pub schedule: Option<ScheduleKind>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub meta: SimMeta,
    pub initial_error: f64,
    /// One record per master update, `t = 1..=T`.
    pub events: Vec<EventRecord>,
    pub intervals: Vec<IntervalRecord>,
    pub max_realized_delay: usize,
    /// Largest `B`-norm of the `Null(A)` component over all trials and
    /// iterates.
    pub max_null_component: f64,
    /// Trial mean of `x_t − x⋆` for `t = 0..=T`, when requested.
    pub mean_iterates: Option<Vec<Vec<f64>>>,
}

impl ConvergenceReport {
    /// `m_t` for `t = 0..=T`.
    pub fn mean_errors(&self) -> Vec<f64> {
        core::iter::once(self.initial_error)
            .chain(self.events.iter().map(|e| e.mean_error))
            .collect()
    }

    pub fn std_errors(&self) -> Vec<f64> {
        core::iter::once(0.0)
            .chain(self.events.iter().map(|e| e.std_error))
            .collect()
    }
}

fn check_params(p: &SimParams) -> Result<()> {
    if !(0.0..=1.0).contains(&p.theta) {
        return Err(Error::domain("theta", p.theta, "must lie in [0, 1]"));
    }
    if !(p.omega >= 0.0 && p.omega.is_finite()) {
        return Err(Error::domain("omega", p.omega, "must be nonnegative"));
    }
    if p.trials == 0 {
        return Err(Error::domain("trials", 0.0, "must be at least 1"));
    }
    Ok(())
}

/// Runs `params.trials` independent trials of the asynchronous iteration
/// over `schedule`. Trial `i` draws its sketches from stream `(seed, i)`,
/// one fresh sketch per master update.
pub fn simulate_schedule(
    system: &LinearSystem,
    dist: &SketchDistribution,
    schedule: &Schedule,
    params: &SimParams,
) -> Result<ConvergenceReport> {
    check_params(params)?;
    dist.validate(system.rows())?;
    let n = system.dim();
    let m = system.rows();
    let x0 = match &params.x0 {
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
    let total = schedule.num_events();
    let events: Vec<ScheduledEvent> = schedule.events().copied().collect();
    let window = schedule.max_staleness() + 1;

    let mut sum = vec![0.0; total];
    let mut sum_sq = vec![0.0; total];
    let mut iter_sum = if params.record_mean_iterates {
        Some(vec![vec![0.0; n]; total + 1])
    } else {
        None
    };
    let mut max_null = 0.0f64;

    for trial in 0..params.trials {
        let mut rng = stream(params.seed, trial as u64);
        // ring buffer of the last `window` iterates; slots start at x_0
        let mut history = vec![x0.clone(); window];
        if let Some(acc) = iter_sum.as_mut() {
            for (a, (x, s)) in acc[0].iter_mut().zip(x0.iter().zip(&x_star)) {
                *a += x - s;
            }
        }
        for (t, ev) in events.iter().enumerate() {
            let current = &history[t % window];
            let stale = if ev.staleness > t {
                &x0
            } else {
                &history[(t - ev.staleness) % window]
            };
            let s = draw_sketch(dist, m, &mut rng);
            let y = async_worker_compute(system, &s, stale, params.omega)?;
            let next = async_master_update(current, &y, params.theta)?;
            if next.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("iterate"));
            }
            let err = system.b_dist_sq(&next, &x_star)?;
            sum[t] += err;
            sum_sq[t] += err * err;
            let null = system.null_component(&next)?;
            let null_x0 = system.null_component(&x0)?;
            let drift: Vec<f64> = null.iter().zip(&null_x0).map(|(a, b)| a - b).collect();
            max_null = max_null.max(sqrt(crate::linalg::b_norm_sq(&drift, system.geometry())?));
            if let Some(acc) = iter_sum.as_mut() {
                for (a, (x, s)) in acc[t + 1].iter_mut().zip(next.iter().zip(&x_star)) {
                    *a += x - s;
                }
            }
            history[(t + 1) % window] = next;
        }
    }

    let trials = params.trials as f64;
    let stats = |t: usize| {
        let mean = sum[t] / trials;
        let var = if params.trials > 1 {
            ((sum_sq[t] - trials * mean * mean) / (trials - 1.0)).max(0.0)
        } else {
            0.0
        };
        (mean, sqrt(var / trials))
    };
    let event_records: Vec<EventRecord> = events
        .iter()
        .enumerate()
        .map(|(t, ev)| {
            let (mean_error, std_error) = stats(t);
            EventRecord {
                t: t + 1,
                worker: ev.worker,
                delta: ev.staleness,
                mean_error,
                std_error,
            }
        })
        .collect();
    let mut interval_records = vec![IntervalRecord {
        interval: 0,
        mean_error: e0,
        std_error: 0.0,
    }];
    for i in 1..=schedule.intervals.len() {
        let (mean_error, std_error) = stats(i * schedule.delta_a - 1);
        interval_records.push(IntervalRecord {
            interval: i,
            mean_error,
            std_error,
        });
    }
    let mean_iterates = iter_sum.map(|acc| {
        acc.into_iter()
            .map(|v| v.into_iter().map(|a| a / trials).collect())
            .collect()
    });
    Ok(ConvergenceReport {
        meta: SimMeta {
            theta: params.theta,
            omega: params.omega,
            tau: schedule.tau,
            c: schedule.c,
            delta_a: schedule.delta_a,
            seed: params.seed,
            trials: params.trials,
            schedule: schedule.kind,
        },
        initial_error: e0,
        events: event_records,
        intervals: interval_records,
        max_realized_delay: schedule.max_staleness(),
        max_null_component: max_null,
        mean_iterates,
    })
}

/// Round-robin-weighted simulation with `τ` workers and `δ_a = round(cτ)`.
#[allow(clippy::too_many_arguments)]
pub fn simulate(
    system: &LinearSystem,
    dist: &SketchDistribution,
    tau: usize,
    c: f64,
    theta: f64,
    omega: f64,
    intervals: usize,
    trials: usize,
    seed: u64,
) -> Result<ConvergenceReport> {
    let schedule = build_schedule(tau, c, ScheduleKind::RoundRobinWeighted, intervals, seed)?;
    simulate_schedule(system, dist, &schedule, &SimParams::new(theta, omega, trials, seed))
}

/// Empirical contraction per unit interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitRate {
    /// `(m_K / m_0)^{1/K}`, the geometric mean of successive interval
    /// ratios of the trial-mean trace.
    pub rate: f64,
    /// Delta-method standard error from the standard error of `m_K`.
    pub std_error: f64,
    /// `K`: intervals used (the prefix before the trace hits zero).
    pub intervals_used: usize,
}

pub fn empirical_unit_rate(report: &ConvergenceReport) -> Result<UnitRate> {
    unit_rate_from_trace(&report.intervals)
}

/// [`empirical_unit_rate`] on a bare interval trace (entry 0 is the start).
pub fn unit_rate_from_trace(trace: &[IntervalRecord]) -> Result<UnitRate> {
    let first = trace.first().ok_or(Error::InsufficientData("empty interval trace"))?;
    if !(first.mean_error > 0.0) {
        return Err(Error::InsufficientData("initial error is zero"));
    }
    let k = trace
        .iter()
        .skip(1)
        .take_while(|r| r.mean_error > 0.0)
        .count();
    if k == 0 {
        return Err(Error::InsufficientData("need one interval with nonzero error"));
    }
    let last = &trace[k];
    let ratio = last.mean_error / first.mean_error;
    let rate = libm::pow(ratio, 1.0 / k as f64);
    let std_error = rate / (k as f64 * last.mean_error) * last.std_error;
    Ok(UnitRate {
        rate,
        std_error,
        intervals_used: k,
    })
}

/// Perron root of the recurrence for one realized delay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayRoot {
    pub delta: usize,
    pub root: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundVerdict {
    pub empirical: UnitRate,
    pub k1: f64,
    pub k2: f64,
    /// Theoretical per-interval rate, `None` when `K1 + K2 ≥ 1`.
    pub bound: Option<f64>,
    /// `(K2 + 1/δ_a)/(1 − K1 + 1/δ_a)`, when defined.
    pub rho_a_bound: Option<f64>,
    /// Perron roots for each distinct realized delay.
    pub perron_roots: Vec<DelayRoot>,
    /// Product of the Perron roots over the events of the last interval.
    pub interval_product: f64,
    /// `empirical ≤ bound + 3σ`; `None` without a guarantee.
    pub pass: Option<bool>,
}

impl BoundVerdict {
    pub fn label(&self) -> &'static str {
        match self.pass {
            None => "no theoretical guarantee",
            Some(true) => "pass",
            Some(false) => "fail",
        }
    }
}

/// Compares the empirical unit-interval rate with the theory.
///
/// With a delay-free schedule the recurrence collapses to
/// `E‖r_{t+1}‖² ≤ (K1 + K2) E‖r_t‖²` and the bound is `(K1 + K2)^{δ_a}`
/// (for `θ = 1` the basic-method rate `1 − ω(2−ω)λ_min⁺` per update).
/// Otherwise the bound is `ρ_a ≤ (K2 + 1/δ_a)/(1 − K1 + 1/δ_a)`.
pub fn compare_to_bound(report: &ConvergenceReport, profile: &SpectralProfile) -> Result<BoundVerdict> {
    let empirical = empirical_unit_rate(report)?;
    let coeffs = recurrence_coeffs(report.meta.theta, report.meta.omega, profile)?;
    let (k1, k2) = (coeffs.k1, coeffs.k2);
    let delta_a = report.meta.delta_a as f64;

    let mut deltas: Vec<usize> = report.events.iter().map(|e| e.delta).collect();
    deltas.sort_unstable();
    deltas.dedup();
    let mut perron_roots = Vec::with_capacity(deltas.len());
    for &delta in &deltas {
        let root = characteristic_perron_root(k1, k2, delta, ROOT_TOL)?.value;
        perron_roots.push(DelayRoot { delta, root });
    }
    let root_of = |d: usize| {
        perron_roots
            .iter()
            .find(|r| r.delta == d)
            .map(|r| r.root)
            .unwrap_or(f64::NAN)
    };
    let last_interval = report.events.len().saturating_sub(report.meta.delta_a);
    let interval_product = report.events[last_interval..]
        .iter()
        .map(|e| root_of(e.delta))
        .product();

    let rho_a_bound = if coeffs.is_contractive() {
        Some(rate::rho_a_from_coeffs(k1, k2, delta_a)?)
    } else {
        None
    };
    let bound = if !coeffs.is_contractive() {
        None
    } else if report.max_realized_delay == 0 {
        Some(libm::pow(k1 + k2, delta_a))
    } else {
        rho_a_bound
    };
    let pass = bound.map(|b| empirical.rate <= b + 3.0 * empirical.std_error);
    Ok(BoundVerdict {
        empirical,
        k1,
        k2,
        bound,
        rho_a_bound,
        perron_roots,
        interval_product,
        pass,
    })
}

/// Eventwise check of `m_{t+1} ≤ K1 m_t + K2 m_{t−δ} + 3σ_{t+1}`, with
/// `m_s = m_0` for `s < 0`. Returns the largest violation (negative when
/// every event satisfies the recursion with room to spare).
pub fn strong_recursion_slack(report: &ConvergenceReport, k1: f64, k2: f64) -> f64 {
    let m = report.mean_errors();
    let se = report.std_errors();
    let mut worst = f64::NEG_INFINITY;
    for ev in &report.events {
        let t = ev.t - 1;
        let lagged = if ev.delta > t { m[0] } else { m[t - ev.delta] };
        let rhs = k1 * m[t] + k2 * lagged + 3.0 * se[t + 1];
        worst = worst.max(m[t + 1] - rhs);
    }
    worst
}
