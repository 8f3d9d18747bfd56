//! The doubly truncated Galerkin system
//!
//! ```text
//! dU = −(Λ^N + β0 I) U dt + β1 Σ_{j<=M} A_j^N U dB_j
//! ```
//!
//! and coefficient-space helpers (projection, reconstruction, norms).

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::basis::{self, eigenfunction_unchecked, BasisSpec};
use crate::covariance::{self, AlphaMatrix, CovarianceModel};
use crate::error::{Error, Result};
use crate::quadrature;

/// Nodes used when projecting a function onto the sine basis.
pub const PROJECTION_NODES: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    pub n: usize,
    pub m: usize,
    /// Damping; the drift is `−(λ_k + β0) u_k`, so positive values stabilize.
    pub beta0: f64,
    /// Multiplicative noise amplitude, applied when stepping.
    pub beta1: f64,
    pub covariance: CovarianceModel,
}

impl SystemSpec {
    pub fn new(n: usize, m: usize, beta0: f64, beta1: f64, covariance: CovarianceModel) -> Self {
        Self {
            n,
            m,
            beta0,
            beta1,
            covariance,
        }
    }

    pub fn basis(&self) -> Result<BasisSpec> {
        BasisSpec::new(self.n.max(self.m))
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 {
            return Err(Error::Domain(format!(
                "truncations must be positive, got N={}, M={}",
                self.n, self.m
            )));
        }
        if !self.beta0.is_finite() || !self.beta1.is_finite() {
            return Err(Error::Invalid("beta0 and beta1 must be finite".into()));
        }
        Ok(())
    }
}

/// One stored entry `a_jki` of the noise matrices.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Coupling {
    k: u32,
    i: u32,
    value: f64,
}

/// Assembled system, immutable after construction.
#[derive(Debug, Clone)]
pub struct GalerkinSystem {
    pub spec: SystemSpec,
    /// Implicitly treated part of the drift, `λ_k` unless rescaled.
    laplacian: Vec<f64>,
    noise_mats: Vec<DMatrix<f64>>,
    /// Nonzeros of each `A_j` in `(k, i)` order.
    couplings: Vec<Vec<Coupling>>,
    pub alpha: AlphaMatrix,
}

impl GalerkinSystem {
    /// Builds drift, noise matrices and α from a spec.
    pub fn assemble(spec: SystemSpec) -> Result<Self> {
        spec.validate()?;
        let alpha = covariance::alpha_matrix(&spec.covariance, spec.m)?;
        Self::assemble_with_alpha(spec, alpha)
    }

    /// As [`assemble`](Self::assemble), reusing a precomputed α (its leading
    /// `M × M` block is used).
    pub fn assemble_with_alpha(spec: SystemSpec, alpha: AlphaMatrix) -> Result<Self> {
        spec.validate()?;
        let alpha = if alpha.m() == spec.m {
            alpha
        } else if alpha.m() > spec.m {
            let block = alpha.entries.view((0, 0), (spec.m, spec.m)).into_owned();
            AlphaMatrix::from_matrix(block)?
        } else {
            return Err(Error::Invalid(format!(
                "alpha has dimension {} < M = {}",
                alpha.m(),
                spec.m
            )));
        };
        let tensor = basis::build_tensor(spec.n, spec.m)?;
        let noise_mats = covariance::noise_matrices(&tensor, spec.n, spec.m);
        let laplacian = spec.basis()?.eigenvalues()[..spec.n].to_vec();
        Ok(Self::from_parts(spec, laplacian, noise_mats, alpha))
    }

    fn from_parts(
        spec: SystemSpec,
        laplacian: Vec<f64>,
        noise_mats: Vec<DMatrix<f64>>,
        alpha: AlphaMatrix,
    ) -> Self {
        let couplings = noise_mats
            .iter()
            .map(|a| {
                let n = a.nrows();
                let mut list = Vec::new();
                for k in 0..n {
                    for i in 0..n {
                        let value = a[(k, i)];
                        if value != 0.0 {
                            list.push(Coupling {
                                k: k as u32,
                                i: i as u32,
                                value,
                            });
                        }
                    }
                }
                list
            })
            .collect();
        Self {
            spec,
            laplacian,
            noise_mats,
            couplings,
            alpha,
        }
    }

    /// Multiplies the Laplacian part of the drift by `factor`, e.g. `ν/2` for
    /// the `½νΔ` form of the equation.
    pub fn with_diffusivity(mut self, factor: f64) -> Self {
        self.laplacian.iter_mut().for_each(|l| *l *= factor);
        self
    }

    /// Replaces the Laplacian part of the drift outright.
    pub fn with_laplacian(mut self, laplacian: Vec<f64>) -> Result<Self> {
        if laplacian.len() != self.spec.n {
            return Err(Error::Invalid(format!(
                "laplacian has {} entries, expected N = {}",
                laplacian.len(),
                self.spec.n
            )));
        }
        self.laplacian = laplacian;
        Ok(self)
    }

    /// Same system with different `β0`, `β1`; matrices are shared by clone.
    pub fn with_coefficients(&self, beta0: f64, beta1: f64) -> Result<Self> {
        let mut out = self.clone();
        out.spec.beta0 = beta0;
        out.spec.beta1 = beta1;
        out.spec.validate()?;
        Ok(out)
    }

    pub fn n(&self) -> usize {
        self.spec.n
    }

    pub fn m(&self) -> usize {
        self.spec.m
    }

    pub fn beta0(&self) -> f64 {
        self.spec.beta0
    }

    pub fn beta1(&self) -> f64 {
        self.spec.beta1
    }

    pub fn laplacian(&self) -> &[f64] {
        &self.laplacian
    }

    /// `λ_k + β0` for `k = 1..=N`.
    pub fn drift_diag(&self) -> Vec<f64> {
        self.laplacian.iter().map(|l| l + self.spec.beta0).collect()
    }

    pub fn noise_mats(&self) -> &[DMatrix<f64>] {
        &self.noise_mats
    }

    /// Number of stored nonzero couplings over all `j`.
    pub fn nnz(&self) -> usize {
        self.couplings.iter().map(Vec::len).sum()
    }

    /// `out = Σ_j dB_j A_j u`, accumulated in fixed `(j, k, i)` order.
    pub fn noise_action(&self, u: &[f64], db: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (list, &dbj) in self.couplings.iter().zip(db) {
            if dbj == 0.0 {
                continue;
            }
            for c in list {
                out[c.k as usize] += dbj * c.value * u[c.i as usize];
            }
        }
    }
}

/// Coefficients `(u_1, …, u_N)` in the sine basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateVector(pub Vec<f64>);

impl StateVector {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// `Σ u_k²`, equal to `∫ u(x)² dx` by Parseval.
pub fn l2_norm_sq(state: &StateVector) -> f64 {
    state.0.iter().map(|u| u * u).sum()
}

/// `u_k = ∫₀¹ u0(x) e_k(x) dx` by Gauss–Legendre with [`PROJECTION_NODES`] points.
pub fn project_function<F: Fn(f64) -> f64>(u0: F, n: usize) -> StateVector {
    let rule = quadrature::composite(PROJECTION_NODES / 8, 8);
    let values: Vec<f64> = rule.nodes.iter().map(|&x| u0(x)).collect();
    let coeffs = (1..=n)
        .map(|k| {
            rule.nodes
                .iter()
                .zip(&rule.weights)
                .zip(&values)
                .map(|((&x, &w), &v)| w * v * eigenfunction_unchecked(k, x))
                .sum()
        })
        .collect();
    StateVector(coeffs)
}

/// Truncates or zero-pads a coefficient list to length `n`.
pub fn project_coefficients(coeffs: &[f64], n: usize) -> StateVector {
    let mut v = coeffs.iter().copied().take(n).collect::<Vec<_>>();
    v.resize(n, 0.0);
    StateVector(v)
}

/// Named initial data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialData {
    /// `u0(x) = x (1 − x)`.
    PolyX1mx,
    /// `u0 = e_k`.
    Mode(usize),
    Coefficients(Vec<f64>),
}

impl InitialData {
    pub fn project(&self, n: usize) -> Result<StateVector> {
        match self {
            InitialData::PolyX1mx => Ok(project_function(|x| x * (1.0 - x), n)),
            InitialData::Mode(k) => {
                if *k == 0 {
                    return Err(Error::Domain("mode index must be >= 1".into()));
                }
                let mut v = vec![0.0; n];
                if *k <= n {
                    v[k - 1] = 1.0;
                }
                Ok(StateVector(v))
            }
            InitialData::Coefficients(c) => Ok(project_coefficients(c, n)),
        }
    }
}

/// Pointwise `Σ_k u_k √2 sin(kπx)`.
pub fn reconstruct(state: &StateVector, xs: &[f64]) -> Result<Vec<f64>> {
    xs.iter()
        .map(|&x| {
            if !(0.0..=1.0).contains(&x) {
                return Err(Error::Domain(format!("x = {x} outside [0, 1]")));
            }
            Ok(state
                .0
                .iter()
                .enumerate()
                .map(|(k, u)| u * eigenfunction_unchecked(k + 1, x))
                .sum())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{PI, SQRT_2};

    fn single_mode() -> CovarianceModel {
        CovarianceModel::weights(vec![1.0]).unwrap()
    }

    #[test]
    fn assemble_scalar() {
        let sys = GalerkinSystem::assemble(SystemSpec::new(1, 1, 0.0, 1.0, single_mode())).unwrap();
        assert_eq!(sys.drift_diag(), vec![PI * PI]);
        assert_abs_diff_eq!(
            sys.noise_mats()[0][(0, 0)],
            8.0 * SQRT_2 / (3.0 * PI),
            epsilon = 1e-15
        );
    }

    #[test]
    fn assemble_two_modes() {
        let sys = GalerkinSystem::assemble(SystemSpec::new(2, 1, 1.0, 5.0, single_mode())).unwrap();
        assert_eq!(sys.drift_diag(), vec![PI * PI + 1.0, 4.0 * PI * PI + 1.0]);
        let a = &sys.noise_mats()[0];
        // only (k, i) with 1 + k + i odd survive: (1,1) and (2,2)
        assert_eq!(a[(0, 1)], 0.0);
        assert_eq!(a[(1, 0)], 0.0);
        assert_abs_diff_eq!(
            a[(0, 0)],
            basis::triple_product_quadrature(1, 1, 1, 10_000).unwrap(),
            epsilon = 1e-10
        );
        assert_abs_diff_eq!(
            a[(1, 1)],
            basis::triple_product_quadrature(1, 2, 2, 10_000).unwrap(),
            epsilon = 1e-10
        );
        // beta1 is only stored
        let other =
            GalerkinSystem::assemble(SystemSpec::new(2, 1, 1.0, 0.0, single_mode())).unwrap();
        assert_eq!(other.noise_mats(), sys.noise_mats());
    }

    #[test]
    fn noise_mats_symmetric_and_drift_increasing() {
        let model = CovarianceModel::power_law(2.0, 10).unwrap();
        let sys = GalerkinSystem::assemble(SystemSpec::new(9, 7, 0.3, 1.0, model)).unwrap();
        for a in sys.noise_mats() {
            assert_eq!((a - a.transpose()).amax(), 0.0);
        }
        let d = sys.drift_diag();
        assert!(d.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn noise_action_matches_dense() {
        let model = CovarianceModel::power_law(2.0, 5).unwrap();
        let sys = GalerkinSystem::assemble(SystemSpec::new(6, 5, 0.0, 1.0, model)).unwrap();
        let u: Vec<f64> = (0..6).map(|k| (k as f64 * 0.7).cos()).collect();
        let db = [0.1, -0.2, 0.05, 0.3, -0.07];
        let mut out = vec![0.0; 6];
        sys.noise_action(&u, &db, &mut out);
        let uv = nalgebra::DVector::from_vec(u.clone());
        let mut dense = nalgebra::DVector::zeros(6);
        for (a, d) in sys.noise_mats().iter().zip(db) {
            dense += a * &uv * d;
        }
        for k in 0..6 {
            assert_abs_diff_eq!(out[k], dense[k], epsilon = 1e-14);
        }
    }

    #[test]
    fn projection_of_parabola() {
        let s = project_function(|x| x * (1.0 - x), 3);
        let c = 4.0 * SQRT_2 / PI.powi(3);
        assert_abs_diff_eq!(s.0[0], c, epsilon = 1e-12);
        assert_abs_diff_eq!(s.0[1], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.0[2], c / 27.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.0[0], 0.182_442_2, epsilon = 1e-7);
        assert_abs_diff_eq!(s.0[2], 0.006_757_12, epsilon = 1e-8);

        let s50 = project_function(|x| x * (1.0 - x), 50);
        assert_abs_diff_eq!(l2_norm_sq(&s50), 1.0 / 30.0, epsilon = 1e-8);

        let s21 = InitialData::PolyX1mx.project(21).unwrap();
        assert_abs_diff_eq!(
            reconstruct(&s21, &[0.25]).unwrap()[0],
            0.1875,
            epsilon = 1e-4
        );
    }

    #[test]
    fn projection_of_mode_and_zero() {
        let s = project_function(|x| eigenfunction_unchecked(1, x), 5);
        assert_abs_diff_eq!(s.0[0], 1.0, epsilon = 1e-12);
        for v in &s.0[1..] {
            assert_abs_diff_eq!(*v, 0.0, epsilon = 1e-12);
        }
        assert_eq!(project_function(|_| 0.0, 4), StateVector::zeros(4));
        assert_eq!(
            InitialData::Mode(2).project(3).unwrap().0,
            vec![0.0, 1.0, 0.0]
        );
    }

    #[test]
    fn coefficient_projection_idempotent() {
        let c = vec![1.0, -2.0, 0.5];
        let once = project_coefficients(&c, 5);
        assert_eq!(once.0, vec![1.0, -2.0, 0.5, 0.0, 0.0]);
        assert_eq!(project_coefficients(&once.0, 5), once);
        assert_eq!(project_coefficients(&c, 2).0, vec![1.0, -2.0]);
    }

    #[test]
    fn reconstruct_basics() {
        let s = StateVector(vec![1.0, 0.0, 0.0]);
        assert_abs_diff_eq!(reconstruct(&s, &[0.5]).unwrap()[0], SQRT_2, epsilon = 1e-15);
        let s = StateVector(vec![0.3, -1.2, 4.0]);
        assert_eq!(reconstruct(&s, &[0.0]).unwrap()[0], 0.0);
        assert!(reconstruct(&s, &[1.01]).is_err());
    }

    #[test]
    fn norms() {
        assert_eq!(l2_norm_sq(&StateVector(vec![3.0, 4.0])), 25.0);
        assert_eq!(l2_norm_sq(&StateVector::zeros(3)), 0.0);
    }

    #[test]
    fn parseval() {
        let rule = quadrature::composite_with_nodes(4000);
        for n in [1, 5, 12, 20] {
            let s = StateVector(
                (0..n)
                    .map(|k| ((k * 7 % 5) as f64 - 2.0) / (k as f64 + 1.0))
                    .collect(),
            );
            let q = rule.integrate(|x| reconstruct(&s, &[x]).unwrap()[0].powi(2));
            assert_abs_diff_eq!(q, l2_norm_sq(&s), epsilon = 1e-8);
        }
    }
}
