//! Stochastic reformulation of a consistent linear system.
//!
//! For a sketch `S` drawn from a distribution `D`, with
//! `H = S (Sᵀ A B⁻¹ Aᵀ S)† Sᵀ`:
//!
//! ```text
//! f_S(x)  = ½ ‖Ax − b‖²_H
//! ∇f_S(x) = B⁻¹ Aᵀ H (Ax − b)
//! Z_S     = Aᵀ H A
//! W       = B^{-1/2} E[Z] B^{-1/2}
//! ```
//!
//! `H` is only positive semidefinite when `SᵀA` is rank deficient; nothing
//! here assumes more.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{
    dot, pseudoinverse, sqrt, sym_eig, DenseMatrix, SpdMatrix, DEFAULT_CONSISTENCY_TOL,
    DEFAULT_PINV_TOL,
};
use crate::rate::CaseTag;
use crate::rng::{stream, SimRng};

/// Eigenvalues of `W` at or below `ZERO_EIG_REL_TOL * λ_max` count as zero.
pub const ZERO_EIG_REL_TOL: f64 = 1e-9;
/// Slack allowed outside `[0, 1]` before the spectrum is rejected.
pub const SPECTRUM_SLACK: f64 = 1e-9;
/// `|k − 1|` at or below this is tagged [`CaseTag::Boundary`].
pub const BOUNDARY_TOL: f64 = 1e-12;
/// Minimum Monte Carlo sample count for the Gaussian `E[Z]` estimate.
pub const MIN_MC_SAMPLES: usize = 1000;

/// A consistent system `Ax = b` together with the SPD geometry matrix `B`.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    a: DenseMatrix,
    b: Vec<f64>,
    geometry: SpdMatrix,
    /// `B⁻¹ Aᵀ`, n x m.
    binv_at: DenseMatrix,
    /// `(A B⁻¹ Aᵀ)†`, m x m.
    gram_pinv: DenseMatrix,
}

impl LinearSystem {
    /// Validates shapes, `A ≠ 0` and consistency at the default tolerance.
    pub fn new(a: DenseMatrix, b: Vec<f64>, geometry: SpdMatrix) -> Result<Self> {
        Self::with_tolerance(a, b, geometry, DEFAULT_CONSISTENCY_TOL)
    }

    pub fn with_tolerance(a: DenseMatrix, b: Vec<f64>, geometry: SpdMatrix, tol: f64) -> Result<Self> {
        let (m, n) = a.shape();
        if b.len() != m {
            return Err(Error::Shape {
                op: "LinearSystem",
                expected: (m, 1),
                found: (b.len(), 1),
            });
        }
        if geometry.dim() != n {
            return Err(Error::Shape {
                op: "LinearSystem",
                expected: (n, n),
                found: (geometry.dim(), geometry.dim()),
            });
        }
        if b.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("right-hand side"));
        }
        if a.max_abs() == 0.0 {
            return Err(Error::ZeroMatrix);
        }
        let binv_at = geometry.inverse().matmul(&a.transpose())?;
        let mut gram = a.matmul(&binv_at)?;
        gram.symmetrize();
        let gram_pinv = pseudoinverse(&gram, DEFAULT_PINV_TOL)?;
        let sys = Self {
            a,
            b,
            geometry,
            binv_at,
            gram_pinv,
        };
        sys.check_consistent(tol)?;
        Ok(sys)
    }

    /// Identity geometry shorthand.
    pub fn euclidean(a: DenseMatrix, b: Vec<f64>) -> Result<Self> {
        let n = a.cols();
        Self::new(a, b, SpdMatrix::identity(n))
    }

    pub fn a(&self) -> &DenseMatrix {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn geometry(&self) -> &SpdMatrix {
        &self.geometry
    }

    /// Number of equations `m`.
    pub fn rows(&self) -> usize {
        self.a.rows()
    }

    /// Number of unknowns `n`.
    pub fn dim(&self) -> usize {
        self.a.cols()
    }

    /// `Ax − b`.
    pub fn residual(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut r = self.a.matvec(x)?;
        for (ri, bi) in r.iter_mut().zip(&self.b) {
            *ri -= bi;
        }
        Ok(r)
    }

    /// Residual norm of the minimum-B-norm least-squares solution.
    pub fn least_squares_residual(&self) -> Result<f64> {
        let x = self.project(&vec![0.0; self.dim()])?;
        Ok(sqrt(crate::linalg::norm_sq(&self.residual(&x)?)))
    }

    pub fn check_consistent(&self, tol: f64) -> Result<()> {
        let residual = self.least_squares_residual()?;
        if residual > tol {
            return Err(Error::Inconsistent { residual, tol });
        }
        Ok(())
    }

    /// `x⋆ = x0 − B⁻¹Aᵀ (AB⁻¹Aᵀ)† (A x0 − b)`, the B-projection onto the
    /// solution set.
    pub fn project(&self, x0: &[f64]) -> Result<Vec<f64>> {
        let r = self.residual(x0)?;
        let w = self.gram_pinv.matvec(&r)?;
        let step = self.binv_at.matvec(&w)?;
        Ok(x0.iter().zip(&step).map(|(x, s)| x - s).collect())
    }

    /// Component of `x` in `Null(A)` that is B-orthogonal to
    /// `Im(B⁻¹Aᵀ)`. Iterates started in `Im(B⁻¹Aᵀ)` keep this at zero.
    pub fn null_component(&self, x: &[f64]) -> Result<Vec<f64>> {
        let ax = self.a.matvec(x)?;
        let w = self.gram_pinv.matvec(&ax)?;
        let range = self.binv_at.matvec(&w)?;
        Ok(x.iter().zip(&range).map(|(a, b)| a - b).collect())
    }

    /// `B⁻¹ Aᵀ w`, a point of `Im(B⁻¹Aᵀ)`.
    pub fn range_point(&self, w: &[f64]) -> Result<Vec<f64>> {
        self.binv_at.matvec(w)
    }

    /// `‖x − y‖²_B`.
    pub fn b_dist_sq(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
        crate::linalg::b_norm_sq(&d, &self.geometry)
    }
}

/// A sketch applied to a particular system: everything needed to evaluate
/// `f_S`, `∇f_S` and `Z_S` for one `S`.
#[derive(Debug, Clone)]
pub struct SketchedSystem<'a> {
    system: &'a LinearSystem,
    s: &'a DenseMatrix,
    /// `Aᵀ S`, n x q.
    at_s: DenseMatrix,
    /// `(Sᵀ A B⁻¹ Aᵀ S)†`, q x q.
    m_pinv: DenseMatrix,
}

impl<'a> SketchedSystem<'a> {
    pub fn new(system: &'a LinearSystem, s: &'a DenseMatrix) -> Result<Self> {
        if s.rows() != system.rows() {
            return Err(Error::Shape {
                op: "sketch",
                expected: (system.rows(), s.cols()),
                found: s.shape(),
            });
        }
        let at_s = system.a.t_matmul(s)?;
        let binv_at_s = system.geometry.inverse().matmul(&at_s)?;
        let mut m = at_s.t_matmul(&binv_at_s)?;
        m.symmetrize();
        let m_pinv = pseudoinverse(&m, DEFAULT_PINV_TOL)?;
        Ok(Self {
            system,
            s,
            at_s,
            m_pinv,
        })
    }

    /// `M† Sᵀ (Ax − b)`.
    fn weights(&self, x: &[f64]) -> Result<Vec<f64>> {
        let r = self.system.residual(x)?;
        let sr = self.s.t_matvec(&r)?;
        self.m_pinv.matvec(&sr)
    }

    pub fn loss(&self, x: &[f64]) -> Result<f64> {
        let r = self.system.residual(x)?;
        let sr = self.s.t_matvec(&r)?;
        let w = self.m_pinv.matvec(&sr)?;
        Ok((0.5 * dot(&sr, &w)).max(0.0))
    }

    pub fn grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        let w = self.weights(x)?;
        let at_h_r = self.at_s.matvec(&w)?;
        self.system.geometry.inverse().matvec(&at_h_r)
    }

    /// `x − ω ∇f_S(x)`.
    pub fn step(&self, x: &[f64], omega: f64) -> Result<Vec<f64>> {
        let g = self.grad(x)?;
        Ok(x.iter().zip(&g).map(|(xi, gi)| xi - omega * gi).collect())
    }

    pub fn z(&self) -> Result<DenseMatrix> {
        let mut z = self.at_s.matmul(&self.m_pinv)?.matmul(&self.at_s.transpose())?;
        z.symmetrize();
        Ok(z)
    }
}

/// `Z_S = Aᵀ S (Sᵀ A B⁻¹ Aᵀ S)† Sᵀ A`.
pub fn stoch_matrix_z(system: &LinearSystem, s: &DenseMatrix) -> Result<DenseMatrix> {
    SketchedSystem::new(system, s)?.z()
}

/// `f_S(x) = ½ ‖Ax − b‖²_H`.
pub fn stoch_loss(system: &LinearSystem, s: &DenseMatrix, x: &[f64]) -> Result<f64> {
    SketchedSystem::new(system, s)?.loss(x)
}

/// `∇f_S(x) = B⁻¹ Aᵀ S (Sᵀ A B⁻¹ Aᵀ S)† Sᵀ (Ax − b)`.
pub fn stoch_grad(system: &LinearSystem, s: &DenseMatrix, x: &[f64]) -> Result<Vec<f64>> {
    SketchedSystem::new(system, s)?.grad(x)
}

/// The distribution `D` the sketches are drawn from.
#[derive(Debug, Clone, PartialEq)]
pub enum SketchDistribution {
    /// `S = e_i` with probability `weights[i]` (randomized Kaczmarz when
    /// `B = I`).
    Coordinate { weights: Vec<f64> },
    /// `S = [e_j : j ∈ blocks[k]]` with probability `weights[k]`; the blocks
    /// partition the rows.
    Block {
        blocks: Vec<Vec<usize>>,
        weights: Vec<f64>,
    },
    /// `S` is m x q with i.i.d. standard normal entries.
    Gaussian { q: usize },
}

fn check_simplex(weights: &[f64]) -> Result<()> {
    if weights.is_empty() {
        return Err(Error::InvalidDistribution("no weights"));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::InvalidDistribution("weights must be finite and nonnegative"));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidDistribution("weights must sum to 1"));
    }
    Ok(())
}

impl SketchDistribution {
    pub fn coordinate(weights: Vec<f64>) -> Result<Self> {
        check_simplex(&weights)?;
        Ok(Self::Coordinate { weights })
    }

    pub fn coordinate_uniform(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidDistribution("no rows"));
        }
        Ok(Self::Coordinate {
            weights: vec![1.0 / m as f64; m],
        })
    }

    /// `p_i ∝ ‖a_i‖²`.
    pub fn coordinate_row_norm(a: &DenseMatrix) -> Result<Self> {
        let norms: Vec<f64> = (0..a.rows()).map(|i| crate::linalg::norm_sq(a.row(i))).collect();
        let total: f64 = norms.iter().sum();
        if total == 0.0 {
            return Err(Error::ZeroMatrix);
        }
        let mut weights: Vec<f64> = norms.iter().map(|v| v / total).collect();
        renormalize(&mut weights);
        Self::coordinate(weights)
    }

    pub fn block(blocks: Vec<Vec<usize>>, weights: Vec<f64>) -> Result<Self> {
        if blocks.len() != weights.len() {
            return Err(Error::InvalidDistribution("one weight per block required"));
        }
        if blocks.iter().any(|b| b.is_empty()) {
            return Err(Error::InvalidDistribution("empty block"));
        }
        check_simplex(&weights)?;
        Ok(Self::Block { blocks, weights })
    }

    pub fn block_uniform(blocks: Vec<Vec<usize>>) -> Result<Self> {
        let k = blocks.len();
        if k == 0 {
            return Err(Error::InvalidDistribution("no blocks"));
        }
        Self::block(blocks, vec![1.0 / k as f64; k])
    }

    pub fn gaussian(q: usize) -> Result<Self> {
        if q == 0 {
            return Err(Error::InvalidDistribution("gaussian width q must be at least 1"));
        }
        Ok(Self::Gaussian { q })
    }

    /// Checks the distribution against a system with `m` rows.
    pub fn validate(&self, m: usize) -> Result<()> {
        match self {
            Self::Coordinate { weights } => {
                if weights.len() != m {
                    return Err(Error::InvalidDistribution("one coordinate weight per row required"));
                }
                check_simplex(weights)
            }
            Self::Block { blocks, weights } => {
                check_simplex(weights)?;
                let mut seen = vec![false; m];
                for &i in blocks.iter().flatten() {
                    if i >= m {
                        return Err(Error::InvalidDistribution("block index out of range"));
                    }
                    if seen[i] {
                        return Err(Error::InvalidDistribution("blocks overlap"));
                    }
                    seen[i] = true;
                }
                if seen.iter().any(|s| !s) {
                    return Err(Error::InvalidDistribution("blocks do not cover every row"));
                }
                Ok(())
            }
            Self::Gaussian { q } => {
                if *q == 0 {
                    return Err(Error::InvalidDistribution("gaussian width q must be at least 1"));
                }
                Ok(())
            }
        }
    }

    pub fn is_discrete(&self) -> bool {
        !matches!(self, Self::Gaussian { .. })
    }

    /// Support of a discrete distribution as `(probability, S)` pairs;
    /// `None` for the Gaussian variant.
    pub fn support(&self, m: usize) -> Option<Vec<(f64, DenseMatrix)>> {
        match self {
            Self::Coordinate { weights } => Some(
                weights
                    .iter()
                    .enumerate()
                    .map(|(i, &p)| (p, selector(m, &[i])))
                    .collect(),
            ),
            Self::Block { blocks, weights } => Some(
                blocks
                    .iter()
                    .zip(weights)
                    .map(|(b, &p)| (p, selector(m, b)))
                    .collect(),
            ),
            Self::Gaussian { .. } => None,
        }
    }
}

fn renormalize(w: &mut [f64]) {
    let total: f64 = w.iter().sum();
    for v in w.iter_mut() {
        *v /= total;
    }
}

/// m x |idx| matrix whose columns are `e_i` for `i` in `idx`.
fn selector(m: usize, idx: &[usize]) -> DenseMatrix {
    let mut s = DenseMatrix::zeros(m, idx.len());
    for (c, &i) in idx.iter().enumerate() {
        s[(i, c)] = 1.0;
    }
    s
}

fn pick(weights: &[f64], rng: &mut SimRng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    // rounding left u above the cumulative total: take the last positive weight
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(weights.len() - 1)
}

/// Draws one sketch `S` (m rows) from `dist`.
pub fn draw_sketch(dist: &SketchDistribution, m: usize, rng: &mut SimRng) -> DenseMatrix {
    match dist {
        SketchDistribution::Coordinate { weights } => selector(m, &[pick(weights, rng)]),
        SketchDistribution::Block { blocks, weights } => selector(m, &blocks[pick(weights, rng)]),
        SketchDistribution::Gaussian { q } => {
            let data = (0..m * q).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            DenseMatrix::from_vec(m, *q, data).expect("finite normal samples")
        }
    }
}

/// `E[Z]` and, for Monte Carlo estimates, its entrywise standard error.
#[derive(Debug, Clone)]
pub struct ExpectedZ {
    pub mean: DenseMatrix,
    /// `None` when the expectation was computed exactly.
    pub std_error: Option<DenseMatrix>,
    pub samples: usize,
}

/// `E_{S∼D}[Z_S]`: an exact weighted sum for discrete distributions, a Monte
/// Carlo average over `mc_samples` draws from stream `(seed, 0)` otherwise.
pub fn expected_z(
    system: &LinearSystem,
    dist: &SketchDistribution,
    mc_samples: usize,
    seed: u64,
) -> Result<ExpectedZ> {
    let m = system.rows();
    let n = system.dim();
    dist.validate(m)?;
    if let Some(support) = dist.support(m) {
        let mut mean = DenseMatrix::zeros(n, n);
        for (p, s) in &support {
            if *p == 0.0 {
                continue;
            }
            mean.axpy(*p, &stoch_matrix_z(system, s)?)?;
        }
        mean.symmetrize();
        return Ok(ExpectedZ {
            mean,
            std_error: None,
            samples: support.len(),
        });
    }
    if mc_samples < MIN_MC_SAMPLES {
        return Err(Error::domain(
            "mc_samples",
            mc_samples as f64,
            "gaussian sketches need at least 1000 Monte Carlo samples",
        ));
    }
    let mut rng = stream(seed, 0);
    let mut sum = DenseMatrix::zeros(n, n);
    let mut sum_sq = DenseMatrix::zeros(n, n);
    for _ in 0..mc_samples {
        let s = draw_sketch(dist, m, &mut rng);
        let z = stoch_matrix_z(system, &s)?;
        sum.axpy(1.0, &z)?;
        for i in 0..n {
            for j in 0..n {
                sum_sq[(i, j)] += z[(i, j)] * z[(i, j)];
            }
        }
    }
    let k = mc_samples as f64;
    let mut mean = sum.scale(1.0 / k);
    mean.symmetrize();
    let mut se = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mu = mean[(i, j)];
            let var = ((sum_sq[(i, j)] / k - mu * mu) * k / (k - 1.0)).max(0.0);
            se[(i, j)] = sqrt(var / k);
        }
    }
    Ok(ExpectedZ {
        mean,
        std_error: Some(se),
        samples: mc_samples,
    })
}

/// Eigen-data of `W`: the single source of truth for every rate formula.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralProfile {
    /// `λ_1 ≥ … ≥ λ_n`, all in `[0, 1]`.
    pub eigenvalues: Vec<f64>,
    /// Eigenvectors of `W` (columns) when the profile came from a system.
    pub eigenvectors: Option<DenseMatrix>,
    pub lambda_max: f64,
    /// Smallest nonzero eigenvalue.
    pub lambda_min_plus: f64,
    /// `λ_min⁺ + λ_max`.
    pub k: f64,
    /// `2 / k`.
    pub omega_star: f64,
    /// `λ_max / λ_min⁺`.
    pub kappa: f64,
    pub case: CaseTag,
}

impl SpectralProfile {
    /// Profile described only by its extreme eigenvalues, as in the
    /// processor-count tables.
    pub fn from_extremes(lambda_min_plus: f64, lambda_max: f64) -> Result<Self> {
        if !(lambda_min_plus > 0.0 && lambda_min_plus.is_finite()) {
            return Err(Error::domain("lambda_min_plus", lambda_min_plus, "must be positive"));
        }
        if !(lambda_max >= lambda_min_plus && lambda_max <= 1.0) {
            return Err(Error::domain(
                "lambda_max",
                lambda_max,
                "must satisfy lambda_min_plus <= lambda_max <= 1",
            ));
        }
        Ok(Self::build(
            vec![lambda_max, lambda_min_plus],
            None,
            lambda_min_plus,
            lambda_max,
        ))
    }

    /// Profile from a full spectrum; entries within [`SPECTRUM_SLACK`] of
    /// `[0, 1]` are clipped, anything further out is an error.
    pub fn from_eigenvalues(
        mut eigenvalues: Vec<f64>,
        eigenvectors: Option<DenseMatrix>,
        zero_tol: f64,
    ) -> Result<Self> {
        for v in eigenvalues.iter_mut() {
            if !(*v >= -SPECTRUM_SLACK && *v <= 1.0 + SPECTRUM_SLACK) {
                return Err(Error::SpectrumOutOfRange { eigenvalue: *v });
            }
            *v = v.clamp(0.0, 1.0);
        }
        eigenvalues.sort_by(|a, b| b.total_cmp(a));
        let lambda_max = eigenvalues.first().copied().unwrap_or(0.0);
        if lambda_max <= 0.0 {
            return Err(Error::DegenerateDistribution);
        }
        let cutoff = zero_tol * lambda_max;
        let lambda_min_plus = eigenvalues
            .iter()
            .copied()
            .filter(|&v| v > cutoff)
            .fold(lambda_max, f64::min);
        for v in eigenvalues.iter_mut() {
            if *v <= cutoff {
                *v = 0.0;
            }
        }
        Ok(Self::build(eigenvalues, eigenvectors, lambda_min_plus, lambda_max))
    }

    fn build(
        eigenvalues: Vec<f64>,
        eigenvectors: Option<DenseMatrix>,
        lambda_min_plus: f64,
        lambda_max: f64,
    ) -> Self {
        let k = lambda_min_plus + lambda_max;
        Self {
            eigenvalues,
            eigenvectors,
            lambda_max,
            lambda_min_plus,
            k,
            omega_star: 2.0 / k,
            kappa: lambda_max / lambda_min_plus,
            case: CaseTag::from_k(k),
        }
    }

    /// Nonzero eigenvalues only.
    pub fn positive_eigenvalues(&self) -> impl Iterator<Item = f64> + '_ {
        self.eigenvalues.iter().copied().filter(|&v| v > 0.0)
    }
}

/// Options for [`spectral_profile`].
#[derive(Debug, Clone, Copy)]
pub struct ProfileOptions {
    /// Relative zero cutoff for eigenvalues of `W`.
    pub zero_tol: f64,
    /// Monte Carlo sample count for Gaussian sketches.
    pub mc_samples: usize,
    pub seed: u64,
}

impl Default for ProfileOptions {
    fn default() -> Self {
        Self {
            zero_tol: ZERO_EIG_REL_TOL,
            mc_samples: 20_000,
            seed: 0,
        }
    }
}

/// `W = B^{-1/2} E[Z] B^{-1/2}`.
pub fn w_matrix(system: &LinearSystem, ez: &DenseMatrix) -> Result<DenseMatrix> {
    let r = system.geometry().inv_sqrt();
    let mut w = r.matmul(ez)?.matmul(r)?;
    w.symmetrize();
    Ok(w)
}

/// Spectral profile of `W` for `system` under `dist`.
pub fn spectral_profile(
    system: &LinearSystem,
    dist: &SketchDistribution,
    opts: &ProfileOptions,
) -> Result<SpectralProfile> {
    let ez = expected_z(system, dist, opts.mc_samples, opts.seed)?;
    let w = w_matrix(system, &ez.mean)?;
    let eig = sym_eig(&w)?;
    SpectralProfile::from_eigenvalues(eig.values, Some(eig.vectors), opts.zero_tol)
}
