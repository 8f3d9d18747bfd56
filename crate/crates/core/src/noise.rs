//! Seeded, correlated Brownian increments `ΔB_j^n` with `E[ΔB_i ΔB_j] = τ α_ij`.
//!
//! Every noise mode `j` of path `p` draws from its own ChaCha stream keyed by
//! `(base_seed, p, j)`, and step `n` consumes the `n`-th normal of that stream.
//! Dropping modes therefore never shifts the draws of the remaining ones.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::CholeskyFactor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoisePathConfig {
    pub m: usize,
    pub tau: f64,
    pub n_steps: usize,
    pub base_seed: u64,
    pub path_index: u64,
}

impl NoisePathConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n_steps == 0 || !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::Invalid(format!(
                "noise config needs m >= 1, n_steps >= 1, tau > 0 (got m={}, n_steps={}, tau={})",
                self.m, self.n_steps, self.tau
            )));
        }
        Ok(())
    }
}

/// `M × n_steps` increments, stored mode-major so that row `j` is contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseIncrements {
    data: Vec<f64>,
    m: usize,
    n_steps: usize,
    diagonal: bool,
    pub provenance: NoisePathConfig,
}

impl NoiseIncrements {
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Whether the increments came from a diagonal covariance.
    pub fn is_diagonal(&self) -> bool {
        self.diagonal
    }

    /// Row of mode `j` (0-based).
    pub fn row(&self, j: usize) -> &[f64] {
        &self.data[j * self.n_steps..(j + 1) * self.n_steps]
    }

    /// `ΔB^n` as a fresh vector of length `M`.
    pub fn column(&self, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.m];
        self.column_into(n, &mut out);
        out
    }

    pub fn column_into(&self, n: usize, out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate().take(self.m) {
            *o = self.data[j * self.n_steps + n];
        }
    }

    pub fn get(&self, j: usize, n: usize) -> f64 {
        self.data[j * self.n_steps + n]
    }

    /// Increments driven by zero noise, for deterministic runs.
    pub fn zeros(config: NoisePathConfig) -> Self {
        Self {
            data: vec![0.0; config.m * config.n_steps],
            m: config.m,
            n_steps: config.n_steps,
            diagonal: true,
            provenance: config,
        }
    }
}

/// SplitMix64 output function.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a list of words into a 256-bit ChaCha key.
pub(crate) fn derive_key(words: &[u64]) -> [u8; 32] {
    let mut state = 0x6A09_E667_F3BC_C908u64;
    for &w in words {
        state = splitmix64(state ^ w);
    }
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    key
}

/// Independent RNG for one `(base_seed, path_index, mode)` triple.
pub fn mode_stream(base_seed: u64, path_index: u64, mode: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::from_seed(derive_key(&[base_seed, path_index]));
    rng.set_stream(mode as u64);
    rng
}

/// Draws `√τ · L ξ_n` for each step `n`, with `ξ_n` standard normal.
pub fn generate_increments(
    chol: &CholeskyFactor,
    config: &NoisePathConfig,
) -> Result<NoiseIncrements> {
    config.validate()?;
    let m = config.m;
    if chol.dim() < m {
        return Err(Error::Invalid(format!(
            "cholesky factor has dimension {} < M = {m}",
            chol.dim()
        )));
    }
    let n_steps = config.n_steps;
    let mut xi = vec![0.0; m * n_steps];
    for j in 0..m {
        let mut rng = mode_stream(config.base_seed, config.path_index, j);
        for v in &mut xi[j * n_steps..(j + 1) * n_steps] {
            *v = StandardNormal.sample(&mut rng);
        }
    }
    let sqrt_tau = config.tau.sqrt();
    let l = &chol.lower;
    let data = if chol.is_diagonal {
        for j in 0..m {
            let s = sqrt_tau * l[(j, j)];
            xi[j * n_steps..(j + 1) * n_steps]
                .iter_mut()
                .for_each(|v| *v *= s);
        }
        xi
    } else {
        let mut out = vec![0.0; m * n_steps];
        for j in 0..m {
            for p in 0..=j {
                let c = sqrt_tau * l[(j, p)];
                if c == 0.0 {
                    continue;
                }
                let src = &xi[p * n_steps..(p + 1) * n_steps];
                let dst = &mut out[j * n_steps..(j + 1) * n_steps];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += c * s;
                }
            }
        }
        out
    };
    Ok(NoiseIncrements {
        data,
        m,
        n_steps,
        diagonal: chol.is_diagonal,
        provenance: *config,
    })
}

/// Keeps the first `m_coarse` modes. Only valid for diagonal covariances, where
/// the result has exactly the law of increments generated at `m_coarse`.
pub fn restrict_increments(inc: &NoiseIncrements, m_coarse: usize) -> Result<NoiseIncrements> {
    if !inc.diagonal {
        return Err(Error::NonDiagonalRestriction);
    }
    if m_coarse == 0 || m_coarse > inc.m {
        return Err(Error::Domain(format!(
            "cannot restrict {} modes to {m_coarse}",
            inc.m
        )));
    }
    let mut provenance = inc.provenance;
    provenance.m = m_coarse;
    Ok(NoiseIncrements {
        data: inc.data[..m_coarse * inc.n_steps].to_vec(),
        m: m_coarse,
        n_steps: inc.n_steps,
        diagonal: true,
        provenance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::cholesky;
    use nalgebra::{DMatrix, DVector};

    fn diag_chol(d: &[f64]) -> CholeskyFactor {
        cholesky(&DMatrix::from_diagonal(&DVector::from_vec(d.to_vec()))).unwrap()
    }

    fn cfg(m: usize, n_steps: usize) -> NoisePathConfig {
        NoisePathConfig {
            m,
            tau: 0.01,
            n_steps,
            base_seed: 42,
            path_index: 3,
        }
    }

    #[test]
    fn deterministic() {
        let chol = diag_chol(&[1.0, 0.25]);
        let a = generate_increments(&chol, &cfg(2, 100)).unwrap();
        let b = generate_increments(&chol, &cfg(2, 100)).unwrap();
        assert_eq!(a, b);
        let mut other = cfg(2, 100);
        other.path_index = 4;
        assert_ne!(a, generate_increments(&chol, &other).unwrap());
    }

    #[test]
    fn prefix_stable_in_steps() {
        let chol = diag_chol(&[1.0, 1.0]);
        let short = generate_increments(&chol, &cfg(2, 10)).unwrap();
        let long = generate_increments(&chol, &cfg(2, 50)).unwrap();
        for j in 0..2 {
            assert_eq!(short.row(j), &long.row(j)[..10]);
        }
    }

    #[test]
    fn restriction() {
        let chol = diag_chol(&[1.0, 0.5, 0.25, 0.125]);
        let fine = generate_increments(&chol, &cfg(4, 20)).unwrap();
        let coarse = restrict_increments(&fine, 2).unwrap();
        assert_eq!(coarse.m(), 2);
        assert_eq!(coarse.row(0), fine.row(0));
        assert_eq!(coarse.row(1), fine.row(1));
        assert_eq!(restrict_increments(&fine, 4).unwrap(), fine);
        assert!(restrict_increments(&fine, 5).is_err());
        assert!(restrict_increments(&fine, 0).is_err());

        // generate-then-restrict equals generating directly at the coarse size
        let direct = generate_increments(&chol, &cfg(2, 20)).unwrap();
        assert_eq!(direct, coarse);
    }

    #[test]
    fn restriction_rejects_dense() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 1.0]);
        let chol = cholesky(&a).unwrap();
        let inc = generate_increments(&chol, &cfg(2, 5)).unwrap();
        assert_eq!(
            restrict_increments(&inc, 1),
            Err(Error::NonDiagonalRestriction)
        );
    }

    #[test]
    fn validation() {
        let chol = diag_chol(&[1.0]);
        assert!(generate_increments(&chol, &cfg(2, 5)).is_err());
        let mut c = cfg(1, 5);
        c.tau = 0.0;
        assert!(generate_increments(&chol, &c).is_err());
        assert!(generate_increments(&chol, &cfg(1, 0)).is_err());
    }
}
