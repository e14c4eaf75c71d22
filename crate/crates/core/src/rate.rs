//! Convergence-rate theory for the synchronous and asynchronous methods.
//!
//! All quantities are functions of a [`SpectralProfile`] (really only of
//! `λ_min⁺`, `λ_max` and, for `α(ω)`, the positive spectrum), the step size
//! `ω`, the damping factor `θ`, the processor count `τ` and the maximum delay
//! `δ_a = cτ`.
//!
//! Synchronous side: `ξ_s(τ)`, `ρ_s(ω, τ)` and `χ_s_opt(τ) = ξ_s(τ)/λ_min⁺`.
//!
//! Asynchronous side: the recurrence
//!
//! ```text
//! E‖r_{t+1}‖² ≤ K1 E‖r_t‖² + K2 E‖r_{t−δ}‖²
//! ```
//!
//! with `K1 = (1−θ)(1−θ+θα)` and `K2 = θ(θ·s + (1−θ)α)`, where `s` is
//! `1 − ω(2−ω)λ_min⁺` or `1 − ω(2−ω)λ_max` depending on the regime. Its
//! per-update factor is the positive root of `γ^{δ+1} − K1 γ^δ − K2`, which
//! is bounded by `u = ((K2 + 1/δ)/(1 − K1 + 1/δ))^{1/δ}`; one unit interval
//! of `δ_a` updates contracts by at most `u^{δ_a}`, and
//! `U(θ, ω) = (1 − K1 + 1/δ_a)/(1 − K1 − K2)` bounds the iteration count.
//!
//! Two families of asynchronous complexity values are exposed:
//! [`upper_u`] substitutes `(θ, ω)` into `K1`/`K2` directly, while
//! [`u_closed_omega1`], [`u_closed_omega_star`] and [`u_closed_omega2`] are
//! the published closed-form expressions at the boundary optima. The two
//! agree at `ω = 2`; at `ω = 1` and `ω = ω⋆` the closed forms differ from the
//! direct substitution. The processor-count tables are defined in terms of
//! the closed forms, so [`chi_a_opt_bound`] and [`min_processors`] use them.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{sqrt, DenseMatrix};
use crate::sketch::{SpectralProfile, BOUNDARY_TOL};

/// Bisection tolerance for [`characteristic_perron_root`].
pub const ROOT_TOL: f64 = 1e-12;
const ROOT_MAX_ITER: usize = 200;
/// Relative slack when comparing asynchronous and synchronous complexities,
/// so that exact ties count as "not worse".
pub const TIE_REL_TOL: f64 = 1e-12;

/// Position of `ω⋆ = 2/(λ_min⁺ + λ_max)` relative to 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaseTag {
    /// `k > 1`, so `ω⋆ < 2`.
    Case1,
    /// `k < 1`, so `ω⋆ > 2`.
    Case2,
    /// `|k − 1| ≤ 1e-12`; evaluated with the Case 1 formulas.
    Boundary,
}

impl CaseTag {
    pub fn from_k(k: f64) -> Self {
        if (k - 1.0).abs() <= BOUNDARY_TOL {
            CaseTag::Boundary
        } else if k > 1.0 {
            CaseTag::Case1
        } else {
            CaseTag::Case2
        }
    }

    /// Case 1 formulas apply (Case 1 proper or the boundary).
    pub fn uses_case1(self) -> bool {
        !matches!(self, CaseTag::Case2)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CaseTag::Case1 => "case1",
            CaseTag::Case2 => "case2",
            CaseTag::Boundary => "boundary",
        }
    }
}

/// Which of the six `(K1, K2)` estimates applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// Case 1, `ω ≤ ω⋆`.
    Case1Low,
    /// Case 1, `ω⋆ < ω ≤ 2`.
    Case1Mid,
    /// Case 1, `ω > 2`.
    Case1High,
    /// Case 2, `ω ≤ 2`.
    Case2Low,
    /// Case 2, `2 < ω ≤ ω⋆`.
    Case2Mid,
    /// Case 2, `ω > ω⋆`.
    Case2High,
}

impl Regime {
    pub fn select(case: CaseTag, omega: f64, omega_star: f64) -> Self {
        if case.uses_case1() {
            if omega <= omega_star {
                Regime::Case1Low
            } else if omega <= 2.0 {
                Regime::Case1Mid
            } else {
                Regime::Case1High
            }
        } else if omega <= 2.0 {
            Regime::Case2Low
        } else if omega <= omega_star {
            Regime::Case2Mid
        } else {
            Regime::Case2High
        }
    }

    /// Whether `α(ω)` takes the `1 − ωλ_min⁺` branch.
    fn alpha_low_branch(self) -> bool {
        matches!(self, Regime::Case1Low | Regime::Case2Low | Regime::Case2Mid)
    }

    /// Whether `K2` uses `λ_max` (`t(ω)`) instead of `λ_min⁺` (`s(ω)`).
    fn uses_lambda_max(self) -> bool {
        matches!(self, Regime::Case1High | Regime::Case2Mid | Regime::Case2High)
    }
}

/// Recurrence coefficients for one `(θ, ω)` pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateCoefficients {
    pub k1: f64,
    pub k2: f64,
    pub alpha: f64,
    pub regime: Regime,
    /// The `s(ω)`/`t(ω)` factor inside `K2` is at least 1, i.e. `ω ∉ (0, 2)`.
    pub amplifying: bool,
}

impl RateCoefficients {
    pub fn sum(&self) -> f64 {
        self.k1 + self.k2
    }

    pub fn is_contractive(&self) -> bool {
        self.sum() < 1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundKind {
    /// Exact synchronous complexity `ξ_s(τ)/λ_min⁺`.
    SyncExact,
    /// Upper bound on the asynchronous complexity.
    AsyncUpperBound,
    /// `τ → ∞` limit.
    Asymptotic,
}

/// Iteration complexity measured in unit time intervals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexityBound {
    pub value: f64,
    pub kind: BoundKind,
    pub theta: Option<f64>,
    pub omega: Option<f64>,
    /// `δ_a` for asynchronous bounds, `τ` for synchronous ones.
    pub delay_or_tau: Option<f64>,
}

fn check_tau(tau: u32) -> Result<f64> {
    if tau < 1 {
        return Err(Error::domain("tau", tau as f64, "must be at least 1"));
    }
    Ok(tau as f64)
}

fn check_delta_a(delta_a: f64) -> Result<()> {
    if !(delta_a >= 1.0 && delta_a.is_finite()) {
        return Err(Error::domain("delta_a", delta_a, "must be at least 1"));
    }
    Ok(())
}

fn check_theta(theta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::domain("theta", theta, "must lie in [0, 1]"));
    }
    Ok(())
}

fn check_omega(omega: f64) -> Result<()> {
    if !(omega >= 0.0 && omega.is_finite()) {
        return Err(Error::domain("omega", omega, "must be nonnegative"));
    }
    Ok(())
}

/// `ξ_s(τ) = 1/τ + (1 − 1/τ) λ_max`.
pub fn xi_s(tau: u32, profile: &SpectralProfile) -> Result<f64> {
    let t = check_tau(tau)?;
    Ok(1.0 / t + (1.0 - 1.0 / t) * profile.lambda_max)
}

/// `ρ_s(ω, τ) = 1 − ω(2 − ω ξ_s(τ)) λ_min⁺`; values `≥ 1` mean no
/// contraction.
pub fn rho_s(omega: f64, tau: u32, profile: &SpectralProfile) -> Result<f64> {
    let xi = xi_s(tau, profile)?;
    Ok(1.0 - omega * (2.0 - omega * xi) * profile.lambda_min_plus)
}

/// `ρ_s` at its minimizer `ω = 1/ξ_s(τ)`: `1 − λ_min⁺/ξ_s(τ)`.
pub fn rho_s_opt(tau: u32, profile: &SpectralProfile) -> Result<f64> {
    Ok(1.0 - profile.lambda_min_plus / xi_s(tau, profile)?)
}

/// `χ_s_opt(τ) = ξ_s(τ)/λ_min⁺`, attained at `ω = 1/ξ_s(τ)`.
pub fn chi_s_opt(tau: u32, profile: &SpectralProfile) -> Result<ComplexityBound> {
    let xi = xi_s(tau, profile)?;
    Ok(ComplexityBound {
        value: xi / profile.lambda_min_plus,
        kind: BoundKind::SyncExact,
        theta: None,
        omega: Some(1.0 / xi),
        delay_or_tau: Some(tau as f64),
    })
}

/// `α(ω) = max_{λ_i > 0} |1 − ωλ_i|`, via its two-branch closed form.
pub fn alpha(omega: f64, profile: &SpectralProfile) -> f64 {
    if omega <= profile.omega_star {
        1.0 - omega * profile.lambda_min_plus
    } else {
        omega * profile.lambda_max - 1.0
    }
}

/// `α(ω)` as the literal maximum over the stored positive eigenvalues.
pub fn alpha_from_spectrum(omega: f64, profile: &SpectralProfile) -> f64 {
    profile
        .positive_eigenvalues()
        .map(|l| (1.0 - omega * l).abs())
        .fold(0.0, f64::max)
}

/// `K1`, `K2` and `α` for damping `θ` and step size `ω`.
pub fn recurrence_coeffs(theta: f64, omega: f64, profile: &SpectralProfile) -> Result<RateCoefficients> {
    check_theta(theta)?;
    check_omega(omega)?;
    let regime = Regime::select(profile.case, omega, profile.omega_star);
    let alpha = if regime.alpha_low_branch() {
        1.0 - omega * profile.lambda_min_plus
    } else {
        omega * profile.lambda_max - 1.0
    };
    let lambda = if regime.uses_lambda_max() {
        profile.lambda_max
    } else {
        profile.lambda_min_plus
    };
    let s = 1.0 - omega * (2.0 - omega) * lambda;
    let k1 = (1.0 - theta) * (1.0 - theta + theta * alpha);
    let k2 = theta * (theta * s + (1.0 - theta) * alpha);
    Ok(RateCoefficients {
        k1,
        k2,
        alpha,
        regime,
        amplifying: s >= 1.0,
    })
}

/// Companion matrix of `q_{t+1} = K1 q_t + K2 q_{t−δ}`: top row
/// `[K1, 0, …, 0, K2]`, identity on the sub-diagonal.
pub fn state_transition_matrix(k1: f64, k2: f64, delta: usize) -> DenseMatrix {
    let n = delta + 1;
    let mut m = DenseMatrix::zeros(n, n);
    if n == 1 {
        m[(0, 0)] = k1 + k2;
        return m;
    }
    m[(0, 0)] = k1;
    m[(0, n - 1)] = k2;
    for i in 1..n {
        m[(i, i - 1)] = 1.0;
    }
    m
}

/// `p_δ(γ) = γ^{δ+1} − K1 γ^δ − K2`.
pub fn characteristic_poly(k1: f64, k2: f64, delta: usize, gamma: f64) -> f64 {
    let g_delta = powi(gamma, delta);
    g_delta * (gamma - k1) - k2
}

fn powi(x: f64, n: usize) -> f64 {
    libm::pow(x, n as f64)
}

/// Unique positive root of the characteristic polynomial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerronRoot {
    pub value: f64,
    /// `K1 = K2 = 0`: the root is 0 and carries no rate information.
    pub degenerate: bool,
    pub iterations: usize,
}

/// Positive root of `γ^{δ+1} − K1 γ^δ − K2` by bisection.
///
/// The bracket `[max(K1, K2^{1/(δ+1)}, min(K1+K2, 1)), max(1, K1+K2)]`
/// always straddles the root: `p_δ` is nonpositive at each lower candidate
/// and nonnegative at the upper end.
pub fn characteristic_perron_root(k1: f64, k2: f64, delta: usize, tol: f64) -> Result<PerronRoot> {
    if !(k1 >= 0.0 && k2 >= 0.0 && k1.is_finite() && k2.is_finite()) {
        return Err(Error::domain("K1/K2", if k1 < 0.0 { k1 } else { k2 }, "must be finite and nonnegative"));
    }
    if !(tol > 0.0) {
        return Err(Error::domain("tol", tol, "must be positive"));
    }
    if k1 == 0.0 && k2 == 0.0 {
        return Ok(PerronRoot {
            value: 0.0,
            degenerate: true,
            iterations: 0,
        });
    }
    if delta == 0 {
        return Ok(PerronRoot {
            value: k1 + k2,
            degenerate: false,
            iterations: 0,
        });
    }
    let sum = k1 + k2;
    let mut lo = k1
        .max(libm::pow(k2, 1.0 / (delta as f64 + 1.0)))
        .max(sum.min(1.0));
    let mut hi = sum.max(1.0);
    if lo > hi {
        lo = hi;
    }
    let mut iterations = 0;
    while iterations < ROOT_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        let p = characteristic_poly(k1, k2, delta, mid);
        iterations += 1;
        if p.abs() <= tol && hi - lo <= tol {
            lo = mid;
            hi = mid;
            break;
        }
        if p > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= tol * 1e-3 {
            break;
        }
    }
    Ok(PerronRoot {
        value: 0.5 * (lo + hi),
        degenerate: false,
        iterations,
    })
}

/// Lower-bounding polynomial `g_δ(γ) = (1 + 1/δ − K1) γ^δ − (K2 + 1/δ)`.
pub fn bounding_poly(k1: f64, k2: f64, delta: f64, gamma: f64) -> f64 {
    (1.0 + 1.0 / delta - k1) * libm::pow(gamma, delta) - (k2 + 1.0 / delta)
}

/// Root of [`bounding_poly`]: `((K2 + 1/δ)/(1 − K1 + 1/δ))^{1/δ}`, an upper
/// bound on the Perron root whenever `K1 + K2 ≤ 1`.
pub fn bounding_root_u(k1: f64, k2: f64, delta: f64) -> Result<f64> {
    if !(delta >= 1.0) {
        return Err(Error::domain("delta", delta, "bounding root needs delta >= 1"));
    }
    let den = 1.0 - k1 + 1.0 / delta;
    if !(den > 0.0) {
        return Err(Error::domain("K1", k1, "needs 1 - K1 + 1/delta > 0"));
    }
    Ok(libm::pow((k2 + 1.0 / delta) / den, 1.0 / delta))
}

/// Unit-interval rate bound `u(θ, ω, δ_a)^{δ_a} = (K2 + 1/δ_a)/(1 − K1 + 1/δ_a)`.
pub fn rho_a_bound(theta: f64, omega: f64, delta_a: f64, profile: &SpectralProfile) -> Result<f64> {
    check_delta_a(delta_a)?;
    let c = recurrence_coeffs(theta, omega, profile)?;
    rho_a_from_coeffs(c.k1, c.k2, delta_a)
}

pub fn rho_a_from_coeffs(k1: f64, k2: f64, delta_a: f64) -> Result<f64> {
    check_delta_a(delta_a)?;
    let den = 1.0 - k1 + 1.0 / delta_a;
    if !(den > 0.0) {
        return Err(Error::domain("K1", k1, "needs 1 - K1 + 1/delta_a > 0"));
    }
    Ok((k2 + 1.0 / delta_a) / den)
}

/// `U(θ, ω) = (1 − K1 + 1/δ_a)/(1 − K1 − K2)` with `K1`, `K2` evaluated at
/// `(θ, ω)`. Defined only when `K1 + K2 < 1`.
pub fn upper_u(theta: f64, omega: f64, delta_a: f64, profile: &SpectralProfile) -> Result<ComplexityBound> {
    check_delta_a(delta_a)?;
    let c = recurrence_coeffs(theta, omega, profile)?;
    let value = u_from_coeffs(c.k1, c.k2, delta_a)?;
    Ok(ComplexityBound {
        value,
        kind: BoundKind::AsyncUpperBound,
        theta: Some(theta),
        omega: Some(omega),
        delay_or_tau: Some(delta_a),
    })
}

pub fn u_from_coeffs(k1: f64, k2: f64, delta_a: f64) -> Result<f64> {
    let gap = 1.0 - k1 - k2;
    if !(gap > 0.0) {
        return Err(Error::Infeasible { k1, k2 });
    }
    Ok((1.0 - k1 + 1.0 / delta_a) / gap)
}

/// Minimizer of `U(·, 1)`: `θ₁ = (√(1 + 2δ_a(1−λ_min⁺)) − 1)/(δ_a(1−λ_min⁺))`.
pub fn theta_opt_omega1(delta_a: f64, profile: &SpectralProfile) -> Result<f64> {
    check_delta_a(delta_a)?;
    let d = delta_a * (1.0 - profile.lambda_min_plus);
    if d <= 0.0 {
        // λ_min⁺ = 1: the limit of the expression
        return Ok(1.0);
    }
    Ok((sqrt(1.0 + 2.0 * d) - 1.0) / d)
}

/// `θ₂ = (√(δ_a + 1) − 1)/δ_a`, the minimizer of `U(·, 2)`.
pub fn theta_opt_omega2(delta_a: f64) -> Result<f64> {
    check_delta_a(delta_a)?;
    Ok((sqrt(delta_a + 1.0) - 1.0) / delta_a)
}

/// `θ_{ω⋆} = k(√(1 + δ_a(2−k)) − 1)/(δ_a(2−k))`.
pub fn theta_opt_omega_star(delta_a: f64, profile: &SpectralProfile) -> Result<f64> {
    check_delta_a(delta_a)?;
    let k = profile.k;
    let d = delta_a * (2.0 - k);
    if d <= 0.0 {
        return Ok(1.0);
    }
    Ok(k * (sqrt(1.0 + d) - 1.0) / d)
}

/// Closed form `[3/4 + (1 + √(1 + 2δ_a(1−λ_min⁺)))/(4δ_a)]/λ_min⁺` for
/// `U(θ₁, 1)`.
pub fn u_closed_omega1(delta_a: f64, profile: &SpectralProfile) -> Result<f64> {
    check_delta_a(delta_a)?;
    let l = profile.lambda_min_plus;
    let root = sqrt(1.0 + 2.0 * delta_a * (1.0 - l));
    Ok((0.75 + (1.0 + root) / (4.0 * delta_a)) / l)
}

/// Closed form for `U(θ_{ω⋆}, ω⋆)`:
/// `[(3λ_min⁺ + λ_max)/4 + (√(1+δ_a(2−k)) + 2(δ_a + 1 + δ_a(1−k)λ_min⁺))/(2δ_a√(1+δ_a(2−k)))]/λ_min⁺`.
pub fn u_closed_omega_star(delta_a: f64, profile: &SpectralProfile) -> Result<f64> {
    check_delta_a(delta_a)?;
    let l = profile.lambda_min_plus;
    let k = profile.k;
    let root = sqrt(1.0 + delta_a * (2.0 - k));
    let tail = (root + 2.0 * (delta_a + 1.0 + delta_a * (1.0 - k) * l)) / (2.0 * delta_a * root);
    Ok(((3.0 * l + profile.lambda_max) / 4.0 + tail) / l)
}

/// Closed form `[1/4 + λ_min⁺/2 + (1 + √(δ_a + 1))/(2δ_a)]/λ_min⁺` for
/// `U(θ₂, 2)`.
pub fn u_closed_omega2(delta_a: f64, profile: &SpectralProfile) -> Result<f64> {
    check_delta_a(delta_a)?;
    let l = profile.lambda_min_plus;
    Ok((0.25 + l / 2.0 + (1.0 + sqrt(delta_a + 1.0)) / (2.0 * delta_a)) / l)
}

/// Which boundary optimum produced [`chi_a_opt_bound`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AsyncChoice {
    /// `(θ₁, 1)`.
    OmegaOne,
    /// `(θ_{ω⋆}, ω⋆)`.
    OmegaStar,
    /// `(θ₂, 2)`.
    OmegaTwo,
}

/// Best asynchronous complexity bound for the profile's case.
///
/// Case 1 (and the boundary): `min(U(θ₁,1), U(θ_{ω⋆},ω⋆))`.
/// Case 2: `min(U(θ₂,2), U(θ₁,1))`; the `θ₁` term only matters for
/// `δ_a < 4`.
pub fn chi_a_opt_bound(delta_a: f64, profile: &SpectralProfile) -> Result<(ComplexityBound, AsyncChoice)> {
    let u1 = u_closed_omega1(delta_a, profile)?;
    let theta1 = theta_opt_omega1(delta_a, profile)?;
    let (other, theta, omega, choice) = if profile.case.uses_case1() {
        (
            u_closed_omega_star(delta_a, profile)?,
            theta_opt_omega_star(delta_a, profile)?,
            profile.omega_star,
            AsyncChoice::OmegaStar,
        )
    } else {
        (
            u_closed_omega2(delta_a, profile)?,
            theta_opt_omega2(delta_a)?,
            2.0,
            AsyncChoice::OmegaTwo,
        )
    };
    let (value, theta, omega, choice) = if other <= u1 {
        (other, theta, omega, choice)
    } else {
        (u1, theta1, 1.0, AsyncChoice::OmegaOne)
    };
    Ok((
        ComplexityBound {
            value,
            kind: BoundKind::AsyncUpperBound,
            theta: Some(theta),
            omega: Some(omega),
            delay_or_tau: Some(delta_a),
        },
        choice,
    ))
}

/// Smallest `τ ∈ [2, τ_max]` for which the asynchronous bound with
/// `δ_a = cτ` is no worse than `χ_s_opt(τ)`.
pub fn min_processors(profile: &SpectralProfile, c: f64, tau_max: u32) -> Result<Option<u32>> {
    if !(c >= 1.0 && c.is_finite()) {
        return Err(Error::domain("c", c, "must be at least 1"));
    }
    if tau_max < 2 {
        return Err(Error::domain("tau_max", tau_max as f64, "must be at least 2"));
    }
    for tau in 2..=tau_max {
        let sync = chi_s_opt(tau, profile)?.value;
        let (asy, _) = chi_a_opt_bound(c * tau as f64, profile)?;
        if asy.value <= sync * (1.0 + TIE_REL_TOL) {
            return Ok(Some(tau));
        }
    }
    Ok(None)
}

/// `τ → ∞` comparison of the two methods.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsymptoticComparison {
    /// `λ_max/λ_min⁺`.
    pub sync_limit: f64,
    /// Case 1: `(¾λ_min⁺ + ¼λ_max)/λ_min⁺`; Case 2: `(¼ + ½λ_min⁺)/λ_min⁺`.
    pub async_limit: f64,
    pub async_better: bool,
}

pub fn asymptotic_limits(profile: &SpectralProfile) -> AsymptoticComparison {
    let l = profile.lambda_min_plus;
    let sync_limit = profile.lambda_max / l;
    let async_limit = if profile.case.uses_case1() {
        (0.75 * l + 0.25 * profile.lambda_max) / l
    } else {
        (0.25 + 0.5 * l) / l
    };
    AsymptoticComparison {
        sync_limit,
        async_limit,
        async_better: async_limit < sync_limit,
    }
}

/// Runs `q_{t+1} = K1 q_t + K2 q_{t−δ}` for `steps` further terms after the
/// `δ + 1` initial values `q_0..q_δ`; returns the whole sequence.
pub fn iterate_recurrence(k1: f64, k2: f64, delta: usize, initial: &[f64], steps: usize) -> Result<Vec<f64>> {
    if initial.len() != delta + 1 {
        return Err(Error::Shape {
            op: "iterate_recurrence",
            expected: (delta + 1, 1),
            found: (initial.len(), 1),
        });
    }
    if steps == 0 {
        return Err(Error::domain("steps", 0.0, "must be at least 1"));
    }
    let mut q = Vec::with_capacity(initial.len() + steps);
    q.extend_from_slice(initial);
    for _ in 0..steps {
        let t = q.len() - 1;
        q.push(k1 * q[t] + k2 * q[t - delta]);
    }
    Ok(q)
}

/// One step of the coordinatewise mean recursion
/// `P_{t+1}^i = (1−θ)P_t^i + θ(1 − ωλ_i)P_{t−δ}^i`.
pub fn weak_recursion_step(
    p_t: &[f64],
    p_lagged: &[f64],
    theta: f64,
    omega: f64,
    eigenvalues: &[f64],
) -> Result<Vec<f64>> {
    check_theta(theta)?;
    if p_t.len() != p_lagged.len() || p_t.len() != eigenvalues.len() {
        return Err(Error::Shape {
            op: "weak_recursion_step",
            expected: (eigenvalues.len(), 1),
            found: (p_t.len().max(p_lagged.len()), 1),
        });
    }
    Ok(p_t
        .iter()
        .zip(p_lagged)
        .zip(eigenvalues)
        .map(|((&now, &lag), &l)| (1.0 - theta) * now + theta * (1.0 - omega * l) * lag)
        .collect())
}

/// Exhaustive evaluation of `U` on a `(θ, ω)` grid.
#[derive(Debug, Clone)]
pub struct GridSearch {
    pub thetas: Vec<f64>,
    pub omegas: Vec<f64>,
    /// Row-major by θ: `surface[i * omegas.len() + j] = U(thetas[i], omegas[j])`,
    /// `+∞` where infeasible.
    pub surface: Vec<f64>,
    pub best_theta: f64,
    pub best_omega: f64,
    pub best_value: f64,
    pub best_index: (usize, usize),
}

impl GridSearch {
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.surface[i * self.omegas.len() + j]
    }
}

/// Evaluates `U(θ, ω)` on every grid cell; ties in the argmin go to the
/// smallest θ index, then the smallest ω index.
pub fn grid_search_u(
    delta_a: f64,
    profile: &SpectralProfile,
    thetas: &[f64],
    omegas: &[f64],
) -> Result<GridSearch> {
    check_delta_a(delta_a)?;
    if thetas.is_empty() || omegas.is_empty() {
        return Err(Error::domain("grid", 0.0, "grids must be nonempty"));
    }
    let mut surface = vec![f64::INFINITY; thetas.len() * omegas.len()];
    let mut best = (f64::INFINITY, (0, 0));
    for (i, &theta) in thetas.iter().enumerate() {
        for (j, &omega) in omegas.iter().enumerate() {
            let value = match upper_u(theta, omega, delta_a, profile) {
                Ok(b) => b.value,
                Err(Error::Infeasible { .. }) => f64::INFINITY,
                Err(e) => return Err(e),
            };
            surface[i * omegas.len() + j] = value;
            if value < best.0 {
                best = (value, (i, j));
            }
        }
    }
    if !best.0.is_finite() {
        return Err(Error::NoFeasiblePoint);
    }
    let (i, j) = best.1;
    Ok(GridSearch {
        thetas: thetas.to_vec(),
        omegas: omegas.to_vec(),
        surface,
        best_theta: thetas[i],
        best_omega: omegas[j],
        best_value: best.0,
        best_index: best.1,
    })
}

/// `n` evenly spaced points on `[lo, hi]` (both ends included).
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prof(lmin: f64, lmax: f64) -> SpectralProfile {
        SpectralProfile::from_extremes(lmin, lmax).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn case_tags() {
        assert_eq!(prof(0.1, 0.9).case, CaseTag::Boundary);
        assert_eq!(prof(0.2, 0.9).case, CaseTag::Case1);
        assert_eq!(prof(0.01, 0.4).case, CaseTag::Case2);
        assert_eq!(prof(1e-4, 0.9999).case, CaseTag::Boundary);
    }

    #[test]
    fn xi_rho_chi_examples() {
        let p = prof(0.1, 0.9);
        assert_eq!(xi_s(1, &p).unwrap(), 1.0);
        assert!(close(xi_s(5, &p).unwrap(), 0.92, 1e-15));
        assert!(close(xi_s(1_000_000, &p).unwrap(), 0.9, 1e-6));
        assert!(xi_s(0, &p).is_err());

        assert!(close(rho_s(1.0, 1, &p).unwrap(), 0.9, 1e-15));
        assert_eq!(rho_s(0.0, 3, &p).unwrap(), 1.0);
        for tau in [1, 2, 5, 40] {
            let xi = xi_s(tau, &p).unwrap();
            assert!(close(rho_s(1.0 / xi, tau, &p).unwrap(), rho_s_opt(tau, &p).unwrap(), 1e-15));
        }

        assert!(close(chi_s_opt(1, &p).unwrap().value, 10.0, 1e-12));
        assert!(close(chi_s_opt(5, &p).unwrap().value, 9.2, 1e-12));
        let q = prof(0.01, 0.99);
        assert!(close(chi_s_opt(u32::MAX, &q).unwrap().value, 99.0, 1e-6));
    }

    #[test]
    fn rho_s_minimized_at_inverse_xi() {
        let p = prof(0.05, 0.7);
        for tau in [1, 3, 8] {
            let xi = xi_s(tau, &p).unwrap();
            let best = rho_s(1.0 / xi, tau, &p).unwrap();
            for k in 1..200 {
                let w = 2.0 / xi * k as f64 / 200.0;
                assert!(rho_s(w, tau, &p).unwrap() >= best - 1e-15);
                assert!(rho_s(w, tau, &p).unwrap() < 1.0);
            }
            assert!(rho_s(2.0 / xi, tau, &p).unwrap() >= 1.0 - 1e-15);
        }
    }

    #[test]
    fn alpha_examples() {
        let p = prof(0.1, 0.9);
        assert_eq!(alpha(0.0, &p), 1.0);
        assert!(close(alpha(1.0, &p), 0.9, 1e-15));
        let w = p.omega_star;
        assert!(close(1.0 - w * p.lambda_min_plus, w * p.lambda_max - 1.0, 1e-15));
        for k in 0..100 {
            let w = 3.0 * k as f64 / 100.0;
            assert!(close(alpha(w, &p), alpha_from_spectrum(w, &p), 1e-12));
        }
    }

    #[test]
    fn coeffs_examples() {
        let p = prof(0.1, 0.9);
        let c = recurrence_coeffs(0.5, 1.0, &p).unwrap();
        assert!(close(c.alpha, 0.9, 1e-15));
        assert!(close(c.k1, 0.475, 1e-15));
        assert!(close(c.k2, 0.45, 1e-15));
        assert_eq!(c.regime, Regime::Case1Low);

        let c = recurrence_coeffs(0.0, 1.3, &p).unwrap();
        assert_eq!((c.k1, c.k2), (1.0, 0.0));

        let c = recurrence_coeffs(1.0, 1.0, &p).unwrap();
        assert_eq!(c.k1, 0.0);
        assert!(close(c.k2, 0.9, 1e-15));
        let c = recurrence_coeffs(1.0, 2.5, &p).unwrap();
        assert!(close(c.k2, 1.0 + 2.5 * 0.5 * 0.9, 1e-12));
        assert!(c.amplifying);

        assert!(recurrence_coeffs(1.1, 1.0, &p).is_err());
        assert!(recurrence_coeffs(0.5, -1.0, &p).is_err());
    }

    #[test]
    fn regime_selection() {
        let c1 = prof(0.3, 0.9);
        let ws = c1.omega_star;
        assert_eq!(Regime::select(c1.case, ws, ws), Regime::Case1Low);
        assert_eq!(Regime::select(c1.case, 1.9, ws), Regime::Case1Mid);
        assert_eq!(Regime::select(c1.case, 2.0, ws), Regime::Case1Mid);
        assert_eq!(Regime::select(c1.case, 2.1, ws), Regime::Case1High);
        let c2 = prof(0.1, 0.4);
        let ws = c2.omega_star;
        assert_eq!(Regime::select(c2.case, 2.0, ws), Regime::Case2Low);
        assert_eq!(Regime::select(c2.case, 3.0, ws), Regime::Case2Mid);
        assert_eq!(Regime::select(c2.case, ws, ws), Regime::Case2Mid);
        assert_eq!(Regime::select(c2.case, 4.5, ws), Regime::Case2High);
    }

    #[test]
    fn regime_continuity() {
        for p in [prof(0.3, 0.9), prof(0.1, 0.9), prof(0.1, 0.4), prof(0.02, 0.3)] {
            let mut kinks = vec![p.omega_star, 2.0];
            kinks.retain(|w| *w > 0.0);
            for theta in [0.0, 0.2, 0.5, 0.9, 1.0] {
                for &w in &kinks {
                    let a = recurrence_coeffs(theta, w, &p).unwrap();
                    let b = recurrence_coeffs(theta, w * (1.0 + 1e-14), &p).unwrap();
                    assert!(close(a.k1, b.k1, 1e-12), "{theta} {w}");
                    assert!(close(a.k2, b.k2, 1e-12), "{theta} {w}");
                }
            }
        }
    }

    #[test]
    fn transition_matrix_examples() {
        assert_eq!(state_transition_matrix(0.5, 0.3, 0), DenseMatrix::from_rows(&[[0.8]]).unwrap());
        assert_eq!(
            state_transition_matrix(0.5, 0.3, 1),
            DenseMatrix::from_rows(&[[0.5, 0.3], [1.0, 0.0]]).unwrap()
        );
        let m = state_transition_matrix(0.2, 0.1, 3);
        assert_eq!(m.row(0), &[0.2, 0.0, 0.0, 0.1]);
        assert_eq!(m.row(2), &[0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn perron_root_examples() {
        assert_eq!(characteristic_perron_root(0.5, 0.3, 0, ROOT_TOL).unwrap().value, 0.8);
        let r = characteristic_perron_root(0.5, 0.3, 1, ROOT_TOL).unwrap().value;
        assert!(close(r, (0.5 + sqrt(1.45)) / 2.0, 1e-11));
        let d = characteristic_perron_root(0.0, 0.0, 3, ROOT_TOL).unwrap();
        assert!(d.degenerate && d.value == 0.0);
        // K1 + K2 > 1 gives a root above 1
        let r = characteristic_perron_root(0.7, 0.5, 4, ROOT_TOL).unwrap().value;
        assert!(r > 1.0);
        assert!(characteristic_poly(0.7, 0.5, 4, r).abs() < 1e-10);
    }

    #[test]
    fn perron_root_delta2_matches_plain_bisection() {
        // independent oracle: plain bisection on [0, 2]
        let (k1, k2) = (0.5, 0.3);
        let (mut lo, mut hi) = (0.0f64, 2.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid * mid * mid - k1 * mid * mid - k2 > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let r = characteristic_perron_root(k1, k2, 2, ROOT_TOL).unwrap().value;
        assert!(close(r, lo, 1e-10));
        assert!(close(r, 0.883_945_828_5, 1e-9));
    }

    #[test]
    fn bounding_root_examples() {
        assert!(close(bounding_root_u(0.4, 0.6, 3.0).unwrap(), 1.0, 1e-15));
        let u = bounding_root_u(0.5, 0.3, 1.0).unwrap();
        assert!(close(u, 1.3 / 1.5, 1e-15));
        assert!(u >= (0.5 + sqrt(1.45)) / 2.0);
        assert!(bounding_root_u(0.5, 0.3, 0.0).is_err());
    }

    #[test]
    fn rho_a_examples() {
        assert!(close(rho_a_from_coeffs(0.3, 0.7, 5.0).unwrap(), 1.0, 1e-15));
        assert!(close(rho_a_from_coeffs(0.475, 0.45, 4.0).unwrap(), 0.7 / 0.775, 1e-15));
        let p = prof(0.1, 0.9);
        let r = rho_a_bound(0.5, 1.0, 4.0, &p).unwrap();
        assert!(close(r, 0.7 / 0.775, 1e-15));
        let u = bounding_root_u(0.475, 0.45, 4.0).unwrap();
        assert!(close(libm::pow(u, 4.0), r, 1e-12));
    }

    #[test]
    fn upper_u_examples() {
        let p = prof(0.1, 0.9);
        assert!(close(upper_u(1.0, 1.0, 4.0, &p).unwrap().value, 12.5, 1e-12));
        assert!(matches!(upper_u(0.0, 1.0, 4.0, &p), Err(Error::Infeasible { .. })));

        // direct substitution into U(θ, ω) = (θ(1+(1−θ)ωλ) + 1/δ)/(θω(2−θω)λ)
        let th = theta_opt_omega1(4.0, &p).unwrap();
        let l = 0.1;
        let direct = (th * (1.0 + (1.0 - th) * l) + 0.25) / (th * (2.0 - th) * l);
        assert!(close(upper_u(th, 1.0, 4.0, &p).unwrap().value, direct, 1e-12));
        assert!(close(direct, 10.329455, 1e-5));
    }

    #[test]
    fn theta_examples() {
        let tiny = prof(1e-15, 0.5);
        assert!(close(theta_opt_omega1(4.0, &tiny).unwrap(), 0.5, 1e-12));
        let p = prof(0.1, 0.9);
        assert!(close(theta_opt_omega1(4.0, &p).unwrap(), (sqrt(8.2) - 1.0) / 3.6, 1e-15));
        assert!(close(theta_opt_omega1(4.0, &p).unwrap(), 0.517657, 1e-6));
        assert!(theta_opt_omega1(1e12, &p).unwrap() < 1e-5);
        assert_eq!(theta_opt_omega1(4.0, &prof(1.0, 1.0)).unwrap(), 1.0);

        assert!(close(theta_opt_omega2(3.0).unwrap(), 1.0 / 3.0, 1e-15));
        assert!(close(theta_opt_omega2(4.0).unwrap(), 0.309017, 1e-6));

        let k1 = prof(0.1, 0.9);
        assert!(close(theta_opt_omega_star(3.0, &k1).unwrap(), 1.0 / 3.0, 1e-15));
        assert!(close(theta_opt_omega_star(5.0, &k1).unwrap(), 0.289898, 1e-6));
        let k2 = prof(1.0, 1.0);
        assert_eq!(theta_opt_omega_star(5.0, &k2).unwrap(), 1.0);
        let near = prof(0.999_999, 1.0);
        assert!(close(theta_opt_omega_star(5.0, &near).unwrap(), 1.0, 1e-5));
    }

    #[test]
    fn closed_forms() {
        let p = prof(0.01, 0.4);
        assert!(close(u_closed_omega2(4.0, &p).unwrap(), 65.9508, 1e-4));
        // the ω = 2 closed form is exact
        for d in [1.0, 3.0, 4.0, 17.0, 250.0] {
            let th = theta_opt_omega2(d).unwrap();
            let direct = upper_u(th, 2.0, d, &p).unwrap().value;
            assert!(close(direct, u_closed_omega2(d, &p).unwrap(), 1e-10 * direct));
        }
        let q = prof(0.1, 0.9);
        assert!(close(u_closed_omega_star(5.0, &q).unwrap(), 8.898979, 1e-6));
        assert!(close(u_closed_omega1(4.0, &q).unwrap(), 9.914728, 1e-6));
    }

    #[test]
    fn chi_a_examples() {
        let (b, choice) = chi_a_opt_bound(4.0, &prof(0.01, 0.99)).unwrap();
        assert!(close(b.value, 93.9017, 1e-4));
        assert_eq!(choice, AsyncChoice::OmegaStar);
        assert!(close(b.omega.unwrap(), 2.0, 1e-12));

        let (b, _) = chi_a_opt_bound(5.0, &prof(0.1, 0.9)).unwrap();
        assert!(close(b.value, 8.898979, 1e-6));
        assert!(b.value < chi_s_opt(5, &prof(0.1, 0.9)).unwrap().value);

        let (b, choice) = chi_a_opt_bound(4.0, &prof(0.01, 0.4)).unwrap();
        assert!(close(b.value, 65.9508, 1e-4));
        assert_eq!(choice, AsyncChoice::OmegaTwo);
    }

    #[test]
    fn min_processors_examples() {
        assert_eq!(min_processors(&prof(0.1, 0.9), 1.0, 100_000).unwrap(), Some(5));
        assert_eq!(min_processors(&prof(0.01, 0.99), 1.0, 100_000).unwrap(), Some(4));
        assert_eq!(min_processors(&prof(0.001, 0.3), 1.0, 100_000).unwrap(), Some(95));
        assert_eq!(min_processors(&prof(0.01, 0.2), 1.0, 1000).unwrap(), None);
        assert!(min_processors(&prof(0.1, 0.9), 0.5, 10).is_err());
    }

    #[test]
    fn asymptotic_examples() {
        let a = asymptotic_limits(&prof(0.01, 0.99));
        assert!(close(a.sync_limit, 99.0, 1e-10) && close(a.async_limit, 25.5, 1e-10) && a.async_better);
        let a = asymptotic_limits(&prof(0.01, 0.4));
        assert!(close(a.sync_limit, 40.0, 1e-10) && close(a.async_limit, 25.5, 1e-10) && a.async_better);
        let a = asymptotic_limits(&prof(0.01, 0.2));
        assert!(!a.async_better);
    }

    #[test]
    fn recurrence_examples() {
        let q = iterate_recurrence(0.5, 0.3, 1, &[1.0, 1.0], 200).unwrap();
        assert!(close(q[2], 0.8, 1e-15) && close(q[3], 0.7, 1e-15));
        let n = q.len();
        assert!(close(q[n - 1] / q[n - 2], (0.5 + sqrt(1.45)) / 2.0, 1e-10));

        let q = iterate_recurrence(0.6, 0.0, 3, &[1.0; 4], 10).unwrap();
        for w in q[3..].windows(2) {
            assert!(close(w[1] / w[0], 0.6, 1e-15));
        }
        let q = iterate_recurrence(0.0, 0.7, 0, &[2.0], 5).unwrap();
        assert!(close(q[5], 2.0 * libm::pow(0.7, 5.0), 1e-15));
        assert!(iterate_recurrence(0.1, 0.1, 2, &[1.0], 3).is_err());
    }

    #[test]
    fn weak_recursion_examples() {
        let out = weak_recursion_step(&[3.0], &[5.0], 1.0, 1.0, &[1.0]).unwrap();
        assert_eq!(out, vec![0.0]);
        let out = weak_recursion_step(&[1.0], &[1.0], 0.5, 1.0, &[0.5]).unwrap();
        assert_eq!(out, vec![0.75]);
        let out = weak_recursion_step(&[1.5, -2.0], &[9.0, 9.0], 0.0, 1.0, &[0.3, 0.6]).unwrap();
        assert_eq!(out, vec![1.5, -2.0]);
        assert!(weak_recursion_step(&[1.0], &[1.0, 2.0], 0.5, 1.0, &[0.5]).is_err());
    }

    #[test]
    fn grid_search_basic() {
        let p = prof(0.1, 0.9);
        let thetas = linspace(0.01, 1.0, 100);
        let omegas = linspace(0.0, 3.0, 151);
        let g = grid_search_u(5.0, &p, &thetas, &omegas).unwrap();
        let step = 3.0 / 150.0;
        assert!(g.best_omega >= 1.0 - step && g.best_omega <= p.omega_star + step);
        assert!(matches!(
            grid_search_u(5.0, &p, &[0.0], &[1.0]),
            Err(Error::NoFeasiblePoint)
        ));
    }

    #[test]
    fn grid_theta_one_column_min_near_one() {
        let p = prof(0.2, 0.6);
        let omegas = linspace(0.05, 2.0, 400);
        let g = grid_search_u(6.0, &p, &[1.0], &omegas).unwrap();
        assert!((g.best_omega - 1.0).abs() <= 2.0 / 400.0);
    }
}
