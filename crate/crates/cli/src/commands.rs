use asgd_core::rate::{self, AsyncChoice};
use asgd_core::sim::{self, build_schedule, ScheduleKind, SimParams};
use asgd_core::sketch::{spectral_profile, ProfileOptions};
use asgd_core::solvers::{run_basic, run_parallel, RunOptions};
use asgd_core::{Error, LinearSystem, SketchDistribution, SpectralProfile};
use serde_json::{json, Value};

use crate::error::{CliError, CliResult};
use crate::format::{num, opt_num};
use crate::io::{load_system, write_file};
use crate::output::{emit, emit_json, Cell, Table};
use crate::{
    AnalyzeArgs, Method, MinTauArgs, ProfileArgs, RatesArgs, ScheduleArg, SimulateArgs, SolveArgs, SweepArgs,
    SystemArgs, Preset,
};

fn load(args: &SystemArgs) -> CliResult<(LinearSystem, SketchDistribution)> {
    load_system(
        args.a.as_deref(),
        args.b.as_deref(),
        args.geometry.as_deref(),
        args.dist.as_deref(),
    )
}

fn system_profile(system: &LinearSystem, dist: &SketchDistribution, mc: usize, seed: u64) -> CliResult<SpectralProfile> {
    let opts = ProfileOptions {
        mc_samples: mc,
        seed,
        ..ProfileOptions::default()
    };
    Ok(spectral_profile(system, dist, &opts)?)
}

fn resolve_profile(args: &ProfileArgs) -> CliResult<SpectralProfile> {
    match (args.lambda_min, args.lambda_max) {
        (Some(lmin), Some(lmax)) => Ok(SpectralProfile::from_extremes(lmin, lmax)?),
        _ => {
            let (system, dist) = load(&args.system)?;
            system_profile(&system, &dist, args.system.mc, 0)
        }
    }
}

fn profile_meta(table: &mut Table, p: &SpectralProfile) {
    table.meta("lambda_min_plus", num(p.lambda_min_plus));
    table.meta("lambda_max", num(p.lambda_max));
    table.meta("k", num(p.k));
    table.meta("omega_star", num(p.omega_star));
    table.meta("kappa", num(p.kappa));
    table.meta("case", p.case.as_str());
}

fn dist_name(dist: &SketchDistribution) -> &'static str {
    match dist {
        SketchDistribution::Coordinate { .. } => "coordinate",
        SketchDistribution::Block { .. } => "block",
        SketchDistribution::Gaussian { .. } => "gaussian",
    }
}

pub fn analyze(args: &AnalyzeArgs) -> CliResult<()> {
    let (system, dist) = load(&args.system)?;
    let p = system_profile(&system, &dist, args.system.mc, args.seed)?;
    let doc = json!({
        "rows": system.rows(),
        "cols": system.dim(),
        "distribution": dist_name(&dist),
        "eigenvalues": p.eigenvalues.iter().map(|&v| num(v)).collect::<Vec<_>>(),
        "lambda_min_plus": num(p.lambda_min_plus),
        "lambda_max": num(p.lambda_max),
        "k": num(p.k),
        "omega_star": num(p.omega_star),
        "kappa": num(p.kappa),
        "case": p.case.as_str(),
    });
    emit_json(&doc, args.out.as_deref())
}

const CASE1_LMIN: [f64; 5] = [1e-1, 1e-2, 1e-3, 1e-4, 2e-1];
const CASE2_LMIN: [f64; 4] = [1e-2, 1e-3, 1e-4, 1e-5];
const CASE2_LMAX: [f64; 4] = [0.4, 0.3, 0.27, 0.26];
const PRESET_C: [f64; 3] = [1.0, 1.5, 2.0];

/// Spectral pairs and speed ratios of a preset grid, in row order.
pub fn preset_rows(preset: Preset) -> Vec<(f64, f64, f64)> {
    let mut rows = Vec::new();
    for c in PRESET_C {
        match preset {
            Preset::Case1 => rows.extend(CASE1_LMIN.iter().map(|&l| (l, 1.0 - l, c))),
            Preset::Case2 => {
                for l in CASE2_LMIN {
                    rows.extend(CASE2_LMAX.iter().map(|&m| (l, m, c)));
                }
            }
        }
    }
    rows
}

pub fn min_tau(args: &MinTauArgs) -> CliResult<()> {
    let mut table = Table::new(&["lambda_min_plus", "lambda_max", "c", "k", "kappa", "tau"]);
    let cases: Vec<(SpectralProfile, f64)> = match args.preset {
        Some(preset) => preset_rows(preset)
            .into_iter()
            .filter(|&(_, _, c)| args.c.is_empty() || args.c.contains(&c))
            .map(|(l, m, c)| Ok((SpectralProfile::from_extremes(l, m)?, c)))
            .collect::<CliResult<_>>()?,
        None => {
            let p = resolve_profile(&args.profile)?;
            let cs = if args.c.is_empty() { vec![1.0] } else { args.c.clone() };
            cs.into_iter().map(|c| (p.clone(), c)).collect()
        }
    };
    for (p, c) in &cases {
        let tau = rate::min_processors(p, *c, args.tau_max)?;
        table.push(vec![
            Cell::Num(p.lambda_min_plus),
            Cell::Num(p.lambda_max),
            Cell::Num(*c),
            Cell::Num(p.k),
            Cell::Num(p.kappa),
            tau.map_or(Cell::Text("none".into()), |t| Cell::Int(t as u64)),
        ]);
    }
    table.meta("tau_max", args.tau_max);
    table.meta("search_floor", 2);
    emit(&table, args.output.out.as_deref(), args.output.format)
}

/// Numerical failures become an `infeasible` cell; anything else aborts.
fn value_cell(v: asgd_core::Result<f64>) -> CliResult<Cell> {
    match v {
        Ok(x) => Ok(Cell::Num(x)),
        Err(e) if e.is_numerical() => Ok(Cell::Text("infeasible".into())),
        Err(e) => Err(e.into()),
    }
}

fn theta_cell(v: asgd_core::Result<f64>) -> Cell {
    v.map_or(Cell::Empty, Cell::Num)
}

pub fn rates(args: &RatesArgs) -> CliResult<()> {
    let p = resolve_profile(&args.profile)?;
    let mut table = Table::new(&["quantity", "theta", "omega", "value"]);
    profile_meta(&mut table, &p);
    if let Some(tau) = args.tau.filter(|_| !args.asymptotic) {
        if !(args.c >= 1.0 && args.c.is_finite()) {
            return Err(CliError::validation(format!("--c must be at least 1, got {}", args.c)));
        }
        let da = args.c * tau as f64;
        table.push(vec![
            Cell::Text("async_omega1".into()),
            theta_cell(rate::theta_opt_omega1(da, &p)),
            Cell::Num(1.0),
            value_cell(rate::u_closed_omega1(da, &p))?,
        ]);
        if p.case.uses_case1() {
            table.push(vec![
                Cell::Text("async_omega_star".into()),
                theta_cell(rate::theta_opt_omega_star(da, &p)),
                Cell::Num(p.omega_star),
                value_cell(rate::u_closed_omega_star(da, &p))?,
            ]);
        } else {
            table.push(vec![
                Cell::Text("async_omega2".into()),
                theta_cell(rate::theta_opt_omega2(da)),
                Cell::Num(2.0),
                value_cell(rate::u_closed_omega2(da, &p))?,
            ]);
        }
        let best = match rate::chi_a_opt_bound(da, &p) {
            Ok((b, choice)) => {
                table.meta(
                    "async_choice",
                    match choice {
                        AsyncChoice::OmegaOne => "omega1",
                        AsyncChoice::OmegaStar => "omega_star",
                        AsyncChoice::OmegaTwo => "omega2",
                    },
                );
                Some(b)
            }
            Err(e) if e.is_numerical() => None,
            Err(e) => return Err(e.into()),
        };
        table.push(vec![
            Cell::Text("async_best".into()),
            Cell::opt(best.and_then(|b| b.theta)),
            Cell::opt(best.and_then(|b| b.omega)),
            best.map_or(Cell::Text("infeasible".into()), |b| Cell::Num(b.value)),
        ]);
        let sync = rate::chi_s_opt(tau, &p)?;
        table.push(vec![
            Cell::Text("sync_opt".into()),
            Cell::Empty,
            Cell::Num(1.0 / rate::xi_s(tau, &p)?),
            Cell::Num(sync.value),
        ]);
        table.meta("tau", tau);
        table.meta("c", num(args.c));
        table.meta("delta_a", num(da));
        let winner = match best {
            Some(b) if b.value <= sync.value => "async",
            _ => "sync",
        };
        table.meta("better_at_tau", winner);
    }
    let lim = rate::asymptotic_limits(&p);
    table.push(vec![
        Cell::Text("async_limit".into()),
        Cell::Empty,
        Cell::Empty,
        Cell::Num(lim.async_limit),
    ]);
    table.push(vec![
        Cell::Text("sync_limit".into()),
        Cell::Empty,
        Cell::Empty,
        Cell::Num(lim.sync_limit),
    ]);
    let verdict = if lim.async_better {
        "async better asymptotically"
    } else {
        "sync better asymptotically"
    };
    table.meta("asymptotic_verdict", verdict);
    emit(&table, args.output.out.as_deref(), args.output.format)
}

pub fn solve(args: &SolveArgs) -> CliResult<()> {
    let (system, dist) = load(&args.system)?;
    if args.method == Method::Basic && args.tau != 1 {
        return Err(CliError::validation("--tau only applies to --method parallel"));
    }
    let p = system_profile(&system, &dist, args.system.mc, args.seed)?;
    let opts = RunOptions {
        x0: None,
        stride: args.stride,
        profile: Some(p.clone()),
    };
    let trace = match args.method {
        Method::Basic => run_basic(&system, &dist, args.omega, args.steps, args.seed, &opts)?,
        Method::Parallel => run_parallel(&system, &dist, args.omega, args.tau, args.steps, args.seed, &opts)?,
    };
    let mut table = Table::new(&["step", "error_bsq", "bound"]);
    for r in &trace.records {
        table.push(vec![Cell::Int(r.step as u64), Cell::Num(r.error_bsq), Cell::opt(r.bound)]);
    }
    table.meta("solver", trace.meta.solver.as_str());
    table.meta("omega", num(args.omega));
    table.meta("theta", Value::Null);
    table.meta("tau", trace.meta.tau);
    table.meta("seed", args.seed);
    table.meta("steps", args.steps);
    table.meta("rho", opt_num(trace.meta.rho));
    profile_meta(&mut table, &p);
    emit(&table, args.output.out.as_deref(), args.output.format)
}

pub fn simulate(args: &SimulateArgs) -> CliResult<()> {
    let (system, dist) = load(&args.system)?;
    let p = system_profile(&system, &dist, args.system.mc, args.seed)?;
    let kind = match args.schedule {
        ScheduleArg::RoundRobin => ScheduleKind::RoundRobinWeighted,
        ScheduleArg::Random => ScheduleKind::SeededRandomWeighted,
        ScheduleArg::NoDelay => ScheduleKind::NoDelay,
    };
    let schedule = build_schedule(args.tau, args.c, kind, args.intervals, args.seed)?;
    let params = SimParams::new(args.theta, args.omega, args.trials, args.seed);
    let report = sim::simulate_schedule(&system, &dist, &schedule, &params)?;
    let verdict = match sim::compare_to_bound(&report, &p) {
        Ok(v) => Some(v),
        Err(Error::InsufficientData(_)) => None,
        Err(e) => return Err(e.into()),
    };
    let per_interval = verdict.as_ref().and_then(|v| v.bound);

    let mut table = Table::new(&["interval", "mean_error", "bound"]);
    for r in &report.intervals {
        let bound = per_interval.map(|b| report.initial_error * b.powi(r.interval as i32));
        table.push(vec![Cell::Int(r.interval as u64), Cell::Num(r.mean_error), Cell::opt(bound)]);
    }
    table.meta("theta", num(args.theta));
    table.meta("omega", num(args.omega));
    table.meta("tau", args.tau);
    table.meta("c", num(args.c));
    table.meta("delta_a", report.meta.delta_a);
    table.meta("seed", args.seed);
    table.meta("trials", args.trials);
    table.meta("intervals", args.intervals);
    table.meta("schedule", kind.as_str());
    table.meta("max_realized_delay", report.max_realized_delay);
    profile_meta(&mut table, &p);
    let label = match &verdict {
        Some(v) => {
            table.meta("k1", num(v.k1));
            table.meta("k2", num(v.k2));
            table.meta("empirical_rate", num(v.empirical.rate));
            table.meta("empirical_std_error", num(v.empirical.std_error));
            table.meta("intervals_used", v.empirical.intervals_used);
            table.meta("bound", opt_num(v.bound));
            table.meta("rho_a_bound", opt_num(v.rho_a_bound));
            table.meta("interval_perron_product", num(v.interval_product));
            v.label()
        }
        None => "insufficient data",
    };
    table.meta("verdict", label);

    if let Some(path) = &args.events {
        let mut ev = Table::new(&["t", "worker", "delta", "error"]);
        for e in &report.events {
            ev.push(vec![
                Cell::Int(e.t as u64),
                Cell::Int(e.worker as u64),
                Cell::Int(e.delta as u64),
                Cell::Num(e.mean_error),
            ]);
        }
        write_file(path, &ev.to_csv())?;
    }
    match &verdict {
        Some(v) => eprintln!(
            "verdict: {} (rate {} ± {}, bound {})",
            v.label(),
            crate::format::fmt_g(v.empirical.rate),
            crate::format::fmt_g(v.empirical.std_error),
            crate::format::opt_cell(v.bound),
        ),
        None => eprintln!("verdict: {label}"),
    }
    emit(&table, args.output.out.as_deref(), args.output.format)
}

pub fn sweep(args: &SweepArgs) -> CliResult<()> {
    let p = resolve_profile(&args.profile)?;
    if !(args.c >= 1.0 && args.c.is_finite()) {
        return Err(CliError::validation(format!("--c must be at least 1, got {}", args.c)));
    }
    let da = args.c * args.tau as f64;
    let (n, m) = args.grid;
    let omega_max = args.omega_max.unwrap_or(1.5 * p.omega_star);
    if !(omega_max > 0.0 && omega_max.is_finite()) {
        return Err(CliError::validation(format!("--omega-max must be positive, got {omega_max}")));
    }
    let thetas = rate::linspace(1.0 / n as f64, 1.0, n);
    let omegas = rate::linspace(0.0, omega_max, m);
    let g = rate::grid_search_u(da, &p, &thetas, &omegas)?;
    let mut table = Table::new(&["theta", "omega", "U"]);
    for (i, &theta) in g.thetas.iter().enumerate() {
        for (j, &omega) in g.omegas.iter().enumerate() {
            table.push(vec![Cell::Num(theta), Cell::Num(omega), Cell::Num(g.value(i, j))]);
        }
    }
    profile_meta(&mut table, &p);
    table.meta("delta_a", num(da));
    table.meta("grid", json!([n, m]));
    table.meta("best_theta", num(g.best_theta));
    table.meta("best_omega", num(g.best_omega));
    table.meta("best_U", num(g.best_value));
    emit(&table, args.output.out.as_deref(), args.output.format)
}
