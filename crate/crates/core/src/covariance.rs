//! Noise covariance models `q(x, y)`, their sine-basis coefficients
//! `α_ij = ∫∫ q(x, y) e_i(x) e_j(y) dx dy`, and the derived stability scalars.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::basis::{eigenfunction_unchecked, TripleProductTensor};
use crate::error::{Error, Result};
use crate::linalg::{self, CholeskyFactor};
use crate::par::{self, Exec};
use crate::quadrature::{self, smoothstep};

/// Relative tolerance of the positive-semidefiniteness check on quadrature-built α.
pub const PSD_TOL: f64 = 1e-8;

/// Default Gauss–Legendre nodes per axis for kernel quadrature.
pub const DEFAULT_KERNEL_NODES: usize = 256;

/// Default grid size for the κ search.
pub const DEFAULT_KAPPA_GRID: usize = 10_000;

/// Spatial covariance of the driving noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CovarianceModel {
    /// `q(x, y) = Σ_j q_j e_j(x) e_j(y)` with finitely many nonnegative weights.
    DiagonalSpectral { weights: Vec<f64> },
    /// Fractional Brownian field `|x|^{2H} + |y|^{2H} − |x − y|^{2H}`.
    FbmField { hurst: f64, nodes: usize },
    /// Fractional Gaussian kernel `|x − y|^{2H − 2}`; unbounded on the diagonal.
    FractionalGaussian { hurst: f64, nodes: usize },
}

impl CovarianceModel {
    /// Weights `q_j = j^{-exponent}` for `j = 1..=count`.
    pub fn power_law(exponent: f64, count: usize) -> Result<Self> {
        if exponent <= 1.0 || !exponent.is_finite() {
            return Err(Error::Invalid(format!(
                "power-law exponent must be > 1 for summable weights, got {exponent}"
            )));
        }
        if count == 0 {
            return Err(Error::Invalid(
                "power-law mode count must be positive".into(),
            ));
        }
        let weights = (1..=count).map(|j| (j as f64).powf(-exponent)).collect();
        Ok(CovarianceModel::DiagonalSpectral { weights })
    }

    pub fn weights(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Invalid(
                "spectral weights must be finite and nonnegative".into(),
            ));
        }
        Ok(CovarianceModel::DiagonalSpectral { weights })
    }

    pub fn fbm_field(hurst: f64) -> Result<Self> {
        if !(hurst > 0.0 && hurst < 1.0) {
            return Err(Error::Invalid(format!(
                "Hurst index must lie in (0, 1), got {hurst}"
            )));
        }
        Ok(CovarianceModel::FbmField {
            hurst,
            nodes: DEFAULT_KERNEL_NODES,
        })
    }

    pub fn fractional_gaussian(hurst: f64) -> Result<Self> {
        if !(hurst > 0.5 && hurst < 1.0) {
            return Err(Error::Invalid(format!(
                "fractional Gaussian kernel needs Hurst index in (1/2, 1), got {hurst}"
            )));
        }
        Ok(CovarianceModel::FractionalGaussian {
            hurst,
            nodes: DEFAULT_KERNEL_NODES,
        })
    }

    pub fn with_nodes(self, n: usize) -> Self {
        match self {
            CovarianceModel::FbmField { hurst, .. } => {
                CovarianceModel::FbmField { hurst, nodes: n }
            }
            CovarianceModel::FractionalGaussian { hurst, .. } => {
                CovarianceModel::FractionalGaussian { hurst, nodes: n }
            }
            other => other,
        }
    }

    pub fn is_diagonal(&self) -> bool {
        matches!(self, CovarianceModel::DiagonalSpectral { .. })
    }

    /// `Σ_j q_j` for diagonal models; the quantity appearing in the simplified
    /// stability condition quoted for the diagonal experiments.
    pub fn weight_sum(&self) -> Option<f64> {
        match self {
            CovarianceModel::DiagonalSpectral { weights } => Some(weights.iter().sum()),
            _ => None,
        }
    }

    /// Pointwise kernel `q(x, y)`.
    pub fn kernel(&self, x: f64, y: f64) -> f64 {
        match self {
            CovarianceModel::DiagonalSpectral { weights } => weights
                .iter()
                .enumerate()
                .map(|(j, w)| {
                    w * eigenfunction_unchecked(j + 1, x) * eigenfunction_unchecked(j + 1, y)
                })
                .sum(),
            CovarianceModel::FbmField { hurst, .. } => {
                let h2 = 2.0 * hurst;
                x.abs().powf(h2) + y.abs().powf(h2) - (x - y).abs().powf(h2)
            }
            CovarianceModel::FractionalGaussian { hurst, .. } => {
                (x - y).abs().powf(2.0 * hurst - 2.0)
            }
        }
    }

    /// Diagonal `q(x, x)`.
    pub fn diagonal(&self, x: f64) -> f64 {
        match self {
            CovarianceModel::DiagonalSpectral { weights } => weights
                .iter()
                .enumerate()
                .map(|(j, w)| {
                    let s = ((j + 1) as f64 * std::f64::consts::PI * x).sin();
                    2.0 * w * s * s
                })
                .sum(),
            CovarianceModel::FbmField { hurst, .. } => 2.0 * x.abs().powf(2.0 * hurst),
            CovarianceModel::FractionalGaussian { .. } => f64::INFINITY,
        }
    }
}

/// Symmetric `M × M` coefficient matrix α with its sampling factor.
#[derive(Debug, Clone)]
pub struct AlphaMatrix {
    pub entries: DMatrix<f64>,
    pub chol: CholeskyFactor,
    /// Smallest eigenvalue seen by the PSD check (exactly the smallest weight for diagonal models).
    pub min_eigenvalue: f64,
    /// Max-entry change when the quadrature resolution was doubled (kernel models only).
    pub refinement_delta: Option<f64>,
}

impl AlphaMatrix {
    /// Wraps an explicit symmetric matrix, running the PSD check and factorization.
    pub fn from_matrix(entries: DMatrix<f64>) -> Result<Self> {
        let n = entries.nrows();
        if n == 0 || n != entries.ncols() {
            return Err(Error::Invalid(
                "alpha must be a non-empty square matrix".into(),
            ));
        }
        for i in 0..n {
            for j in 0..i {
                if entries[(i, j)] != entries[(j, i)] {
                    return Err(Error::Invalid(format!(
                        "alpha is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        let min_eigenvalue = check_psd(&entries)?;
        let chol = linalg::cholesky(&entries)?;
        Ok(Self {
            entries,
            chol,
            min_eigenvalue,
            refinement_delta: None,
        })
    }

    pub fn m(&self) -> usize {
        self.entries.nrows()
    }

    pub fn is_diagonal(&self) -> bool {
        self.chol.is_diagonal
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i - 1, j - 1)]
    }
}

fn check_psd(a: &DMatrix<f64>) -> Result<f64> {
    let n = a.nrows();
    let is_diag = (0..n).all(|i| (0..n).all(|j| i == j || a[(i, j)] == 0.0));
    let (lo, hi) = if is_diag {
        let d: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
        let lo = d.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    } else {
        let ev = linalg::symmetric_eigenvalues(a)?;
        (ev[0], ev[n - 1])
    };
    let tolerance = PSD_TOL * hi.abs().max(f64::MIN_POSITIVE);
    if lo < -tolerance {
        return Err(Error::NotPsd {
            min_eigenvalue: lo,
            tolerance,
        });
    }
    Ok(lo)
}

/// Builds α for the first `m` modes.
///
/// Diagonal models are exact. Kernel models use tensor-product Gauss–Legendre
/// on the two triangles `y < x` and `y > x` after a smoothing change of
/// variables, evaluated at the configured node count and again at twice it;
/// the finer result is kept and the difference is recorded.
pub fn alpha_matrix(model: &CovarianceModel, m: usize) -> Result<AlphaMatrix> {
    alpha_matrix_with(model, m, Exec::default())
}

pub fn alpha_matrix_with(model: &CovarianceModel, m: usize, exec: Exec) -> Result<AlphaMatrix> {
    if m == 0 {
        return Err(Error::Domain("noise truncation M must be positive".into()));
    }
    match model {
        CovarianceModel::DiagonalSpectral { weights } => {
            let entries = DMatrix::from_fn(m, m, |i, j| {
                if i == j {
                    weights.get(i).copied().unwrap_or(0.0)
                } else {
                    0.0
                }
            });
            AlphaMatrix::from_matrix(entries)
        }
        CovarianceModel::FbmField { nodes, .. }
        | CovarianceModel::FractionalGaussian { nodes, .. } => {
            let coarse = kernel_alpha(model, m, *nodes, exec);
            let fine = kernel_alpha(model, m, 2 * nodes, exec);
            let delta = (&fine - &coarse).amax();
            let mut alpha = AlphaMatrix::from_matrix(fine)?;
            alpha.refinement_delta = Some(delta);
            Ok(alpha)
        }
    }
}

/// One quadrature pass at `nodes` points per axis.
///
/// On the triangle `0 < y < x < 1` write `x = φ(u)`, `y = x (1 − φ(v))` so that
/// `x − y = φ(u) φ(v)`; `φ` is the quintic smoothstep, which flattens the power
/// singularities at `x = 0`, `y = 0` and `x = y`. The mirror triangle is covered
/// by symmetrizing.
pub fn kernel_alpha(model: &CovarianceModel, m: usize, nodes: usize, exec: Exec) -> DMatrix<f64> {
    let rule = quadrature::gauss_legendre(nodes);
    let mapped: Vec<(f64, f64)> = rule.nodes.iter().map(|&u| smoothstep(u)).collect();
    let partials = par::map_indexed(nodes, exec, |a| {
        let (x, dx) = mapped[a];
        let wx = rule.weights[a] * dx * x;
        let ex: Vec<f64> = (1..=m).map(|i| eigenfunction_unchecked(i, x)).collect();
        let mut w_sum = DMatrix::<f64>::zeros(m, m);
        let mut ey = vec![0.0; m];
        for (b, &(t, dt)) in mapped.iter().enumerate() {
            let y = x * (1.0 - t);
            let weight = wx * rule.weights[b] * dt * model.kernel(x, y);
            if weight == 0.0 || !weight.is_finite() {
                continue;
            }
            for (i, e) in ey.iter_mut().enumerate() {
                *e = eigenfunction_unchecked(i + 1, y);
            }
            for j in 0..m {
                let s = weight * ey[j];
                for i in 0..m {
                    w_sum[(i, j)] += ex[i] * s;
                }
            }
        }
        w_sum
    });
    let mut w = DMatrix::<f64>::zeros(m, m);
    for p in &partials {
        w += p;
    }
    &w + w.transpose()
}

/// `κ = sup_x q(x, x)` by a uniform grid of `grid_n` midpoints in `(0, 1)` plus
/// one refinement pass around the grid maximizer. Infinite for kernels that
/// blow up on the diagonal.
pub fn kappa(model: &CovarianceModel, grid_n: usize) -> Result<f64> {
    if grid_n < 100 {
        return Err(Error::Domain(format!(
            "kappa grid needs >= 100 points, got {grid_n}"
        )));
    }
    if let CovarianceModel::FractionalGaussian { .. } = model {
        return Ok(f64::INFINITY);
    }
    let h = 1.0 / grid_n as f64;
    let (mut best_x, mut best) = (0.5 * h, f64::NEG_INFINITY);
    for i in 0..grid_n {
        let x = (i as f64 + 0.5) * h;
        let v = model.diagonal(x);
        if v > best {
            best = v;
            best_x = x;
        }
    }
    const REFINE: usize = 200;
    let lo = (best_x - h).max(0.0);
    let hi = (best_x + h).min(1.0);
    for i in 0..=REFINE {
        let x = lo + (hi - lo) * i as f64 / REFINE as f64;
        best = best.max(model.diagonal(x));
    }
    Ok(best)
}

/// Dense `A_j^N = (a_jki)_{k,i <= N}` for `j = 1..=m`, row-major `N × N` each.
pub(crate) fn noise_matrices(
    tensor: &TripleProductTensor,
    n: usize,
    m: usize,
) -> Vec<DMatrix<f64>> {
    (1..=m)
        .map(|j| DMatrix::from_fn(n, n, |k, i| tensor.get(j, k + 1, i + 1)))
        .collect()
}

/// The `N × N` noise Gram matrix `G = Σ_{i,j <= M} α_ij (A_i^N)ᵀ A_j^N`.
pub fn noise_gram(
    alpha: &AlphaMatrix,
    tensor: &TripleProductTensor,
    n: usize,
    m: usize,
) -> Result<DMatrix<f64>> {
    if alpha.m() < m {
        return Err(Error::Invalid(format!(
            "alpha has dimension {} < M = {m}",
            alpha.m()
        )));
    }
    if tensor.n_solution() < n || tensor.n_noise() < m {
        return Err(Error::Invalid(format!(
            "tensor covers (N, M) = ({}, {}), need ({n}, {m})",
            tensor.n_solution(),
            tensor.n_noise()
        )));
    }
    let mats = noise_matrices(tensor, n, m);
    let mut g = DMatrix::<f64>::zeros(n, n);
    if alpha.is_diagonal() {
        for (j, a) in mats.iter().enumerate() {
            let q = alpha.entries[(j, j)];
            if q != 0.0 {
                g += (a.transpose() * a) * q;
            }
        }
    } else {
        for j in 0..m {
            let mut w = DMatrix::<f64>::zeros(n, n);
            for (i, a) in mats.iter().enumerate() {
                let c = alpha.entries[(i, j)];
                if c != 0.0 {
                    w += a * c;
                }
            }
            g += w.transpose() * &mats[j];
        }
    }
    // symmetrize away rounding
    Ok((&g + g.transpose()) * 0.5)
}

/// `κ̃2`: the largest eigenvalue of the noise Gram matrix.
pub fn kappa_tilde2(
    alpha: &AlphaMatrix,
    tensor: &TripleProductTensor,
    n: usize,
    m: usize,
) -> Result<f64> {
    let g = noise_gram(alpha, tensor, n, m)?;
    linalg::lambda_max(&g)
}

/// Stand-in for `κ̃1`: `κ̃2(N, 4·max(N, M))`.
pub fn kappa_tilde1_approx(model: &CovarianceModel, n: usize, m: usize) -> Result<f64> {
    let m_large = 4 * n.max(m);
    let alpha = alpha_matrix(model, m_large)?;
    let tensor = crate::basis::build_tensor(n, m_large)?;
    kappa_tilde2(&alpha, &tensor, n, m_large)
}

/// `ρ(M)`: spectral norm of the tail block `(α_ij)_{M <= i, j <= tail_cap}`.
pub fn rho(model: &CovarianceModel, m: usize, tail_cap: usize) -> Result<f64> {
    if m == 0 {
        return Err(Error::Domain("M must be positive".into()));
    }
    if tail_cap <= m {
        return Err(Error::Domain(format!(
            "tail_cap {tail_cap} must exceed M = {m}"
        )));
    }
    match model {
        CovarianceModel::DiagonalSpectral { weights } => Ok(weights
            .iter()
            .skip(m - 1)
            .take(tail_cap - m + 1)
            .copied()
            .fold(0.0, f64::max)),
        _ => {
            let alpha = alpha_matrix(model, tail_cap)?;
            rho_from_alpha(&alpha, m)
        }
    }
}

/// Tail spectral norm of an already assembled α, using every available mode as the cap.
pub fn rho_from_alpha(alpha: &AlphaMatrix, m: usize) -> Result<f64> {
    let cap = alpha.m();
    if m == 0 || m > cap {
        return Err(Error::Domain(format!("M = {m} outside 1..={cap}")));
    }
    let size = cap - m + 1;
    let block = alpha
        .entries
        .view((m - 1, m - 1), (size, size))
        .into_owned();
    if alpha.is_diagonal() {
        return Ok(block.diagonal().iter().copied().fold(0.0, f64::max));
    }
    linalg::spectral_norm_sym(&block)
}

/// Cholesky factor of α (already computed at construction).
pub fn cholesky(alpha: &AlphaMatrix) -> &CholeskyFactor {
    &alpha.chol
}
