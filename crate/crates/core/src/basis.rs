//! Sine eigenbasis of the Dirichlet Laplacian on `[0, 1]` and the triple-product
//! coupling tensor `a_jki = ∫ e_i e_j e_k dx`.

use std::collections::BTreeMap;
use std::f64::consts::{PI, SQRT_2};

use crate::error::{Error, Result};
use crate::quadrature;

/// The fixed one-dimensional setting: `-Δ` on `[0, 1]` with Dirichlet boundary,
/// eigenfunctions `e_k(x) = √2 sin(kπx)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BasisSpec {
    pub n_max: usize,
}

impl BasisSpec {
    pub fn new(n_max: usize) -> Result<Self> {
        if n_max == 0 {
            return Err(Error::Domain("n_max must be positive".into()));
        }
        Ok(Self { n_max })
    }

    /// `λ_k` for `k = 1..=n_max`.
    pub fn eigenvalues(&self) -> Vec<f64> {
        (1..=self.n_max).map(eigenvalue_unchecked).collect()
    }
}

fn eigenvalue_unchecked(k: usize) -> f64 {
    let k = k as f64;
    k * k * PI * PI
}

/// Dirichlet eigenvalue `λ_k = k²π²`.
pub fn eigenvalue(k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::Domain("mode index must be >= 1".into()));
    }
    Ok(eigenvalue_unchecked(k))
}

/// `e_k(x) = √2 sin(kπx)` on `[0, 1]`.
pub fn eval_eigenfunction(k: usize, x: f64) -> Result<f64> {
    if k == 0 {
        return Err(Error::Domain("mode index must be >= 1".into()));
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("x = {x} outside [0, 1]")));
    }
    Ok(eigenfunction_unchecked(k, x))
}

#[inline]
pub(crate) fn eigenfunction_unchecked(k: usize, x: f64) -> f64 {
    SQRT_2 * (k as f64 * PI * x).sin()
}

fn check_indices(i: usize, j: usize, k: usize) -> Result<()> {
    if i == 0 || j == 0 || k == 0 {
        return Err(Error::Domain(format!(
            "triple-product indices must be >= 1, got ({i}, {j}, {k})"
        )));
    }
    Ok(())
}

#[inline]
fn sorted(i: usize, j: usize, k: usize) -> (usize, usize, usize) {
    let mut v = [i, j, k];
    v.sort_unstable();
    (v[0], v[1], v[2])
}

/// Closed form on a sorted triple `a <= b <= c`; the largest index plays the
/// role of the outer mode so the result is identical for every permutation.
fn closed_form_sorted(a: usize, b: usize, c: usize) -> f64 {
    if (a + b + c).is_multiple_of(2) {
        return 0.0;
    }
    let (a, b, c) = (a as f64, b as f64, c as f64);
    let c2 = c * c;
    let d_minus = b - a;
    let d_plus = a + b;
    2.0 * SQRT_2 * c / PI * (1.0 / (c2 - d_minus * d_minus) - 1.0 / (c2 - d_plus * d_plus))
}

/// `∫₀¹ e_i e_j e_k dx` by closed form. Exactly zero when `i + j + k` is even and
/// exactly permutation invariant.
pub fn triple_product(i: usize, j: usize, k: usize) -> Result<f64> {
    check_indices(i, j, k)?;
    let (a, b, c) = sorted(i, j, k);
    Ok(closed_form_sorted(a, b, c))
}

/// Composite Gauss–Legendre evaluation of `∫₀¹ e_i e_j e_k dx` with about `nodes`
/// points. Independent of [`triple_product`].
pub fn triple_product_quadrature(i: usize, j: usize, k: usize, nodes: usize) -> Result<f64> {
    check_indices(i, j, k)?;
    if nodes < 100 {
        return Err(Error::Domain(format!(
            "need at least 100 nodes, got {nodes}"
        )));
    }
    let rule = quadrature::composite_with_nodes(nodes);
    Ok(rule.integrate(|x| {
        eigenfunction_unchecked(i, x)
            * eigenfunction_unchecked(j, x)
            * eigenfunction_unchecked(k, x)
    }))
}

/// The coupling tensor `a_jki` for `1 <= k, i <= N` and `1 <= j <= M`.
///
/// Only odd-parity values are stored, once per sorted index triple.
#[derive(Debug, Clone)]
pub struct TripleProductTensor {
    n_solution: usize,
    n_noise: usize,
    values: BTreeMap<(usize, usize, usize), f64>,
}

impl TripleProductTensor {
    pub fn n_solution(&self) -> usize {
        self.n_solution
    }

    pub fn n_noise(&self) -> usize {
        self.n_noise
    }

    fn in_range(&self, j: usize, k: usize, i: usize) -> bool {
        (1..=self.n_noise).contains(&j)
            && (1..=self.n_solution).contains(&k)
            && (1..=self.n_solution).contains(&i)
    }

    /// `a_jki`, or zero outside the stored range or for even parity.
    pub fn get(&self, j: usize, k: usize, i: usize) -> f64 {
        if !self.in_range(j, k, i) {
            return 0.0;
        }
        self.values.get(&sorted(j, k, i)).copied().unwrap_or(0.0)
    }

    /// Number of distinct sorted triples held in storage.
    pub fn stored_len(&self) -> usize {
        self.values.len()
    }

    /// Number of in-range `(j, k, i)` tuples with a stored (odd-parity) value.
    pub fn len(&self) -> usize {
        self.entries().count()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// All in-range odd-parity `(j, k, i, a_jki)`, ordered by `j`, then `k`, then `i`.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, usize, f64)> + '_ {
        let n = self.n_solution;
        (1..=self.n_noise).flat_map(move |j| {
            (1..=n).flat_map(move |k| {
                let start = if (j + k) % 2 == 0 { 1 } else { 2 };
                (start..=n)
                    .step_by(2)
                    .map(move |i| (j, k, i, self.values[&sorted(j, k, i)]))
            })
        })
    }
}

/// Assembles `a_jki` over the `(N, M)` range from the closed form.
pub fn build_tensor(n: usize, m: usize) -> Result<TripleProductTensor> {
    if n == 0 || m == 0 {
        return Err(Error::Domain(format!(
            "tensor ranges must be positive, got N={n}, M={m}"
        )));
    }
    let mut values = BTreeMap::new();
    for j in 1..=m {
        for k in 1..=n {
            for i in 1..=n {
                if (i + j + k) % 2 == 1 {
                    let key = sorted(j, k, i);
                    values
                        .entry(key)
                        .or_insert_with(|| closed_form_sorted(key.0, key.1, key.2));
                }
            }
        }
    }
    Ok(TripleProductTensor {
        n_solution: n,
        n_noise: m,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn eigenvalues() {
        assert_abs_diff_eq!(
            eigenvalue(1).unwrap(),
            9.869_604_401_089_358,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            eigenvalue(2).unwrap(),
            39.478_417_604_357_43,
            epsilon = 1e-12
        );
        assert_eq!(eigenvalue(10).unwrap(), 100.0 * PI * PI);
        assert!(eigenvalue(0).is_err());
        let ev = BasisSpec::new(50).unwrap().eigenvalues();
        assert!(ev.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn eigenfunction_values() {
        assert_abs_diff_eq!(eval_eigenfunction(1, 0.5).unwrap(), SQRT_2, epsilon = 1e-15);
        assert_abs_diff_eq!(eval_eigenfunction(2, 0.5).unwrap(), 0.0, epsilon = 1e-15);
        assert_eq!(eval_eigenfunction(1, 0.0).unwrap(), 0.0);
        for k in 1..20 {
            assert_abs_diff_eq!(eval_eigenfunction(k, 1.0).unwrap(), 0.0, epsilon = 1e-13);
        }
        assert!(eval_eigenfunction(1, 1.5).is_err());
        assert!(eval_eigenfunction(1, -0.1).is_err());
        assert!(eval_eigenfunction(0, 0.3).is_err());
    }

    #[test]
    fn orthonormality_by_quadrature() {
        let rule = quadrature::composite_with_nodes(2000);
        for i in 1..=20 {
            for j in 1..=20 {
                let v = rule
                    .integrate(|x| eigenfunction_unchecked(i, x) * eigenfunction_unchecked(j, x));
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(v, expect, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn triple_product_reference_values() {
        // 8√2/(3π) and 32√2/(15π), both confirmed by the quadrature oracle below
        let a111 = 8.0 * SQRT_2 / (3.0 * PI);
        assert_abs_diff_eq!(a111, 1.200_421_75, epsilon = 1e-8);
        assert_abs_diff_eq!(triple_product(1, 1, 1).unwrap(), a111, epsilon = 1e-14);
        assert_eq!(triple_product(1, 1, 2).unwrap(), 0.0);
        let a122 = 32.0 * SQRT_2 / (15.0 * PI);
        assert_abs_diff_eq!(triple_product(1, 2, 2).unwrap(), a122, epsilon = 1e-14);
        assert_eq!(
            triple_product(2, 1, 2).unwrap(),
            triple_product(2, 2, 1).unwrap()
        );
        assert!(triple_product(0, 1, 1).is_err());
    }

    #[test]
    fn quadrature_oracle_matches_closed_form() {
        let q111 = triple_product_quadrature(1, 1, 1, 10_000).unwrap();
        assert_abs_diff_eq!(q111, 8.0 * SQRT_2 / (3.0 * PI), epsilon = 1e-8);
        let q345 = triple_product_quadrature(3, 4, 5, 10_000).unwrap();
        assert_abs_diff_eq!(q345, triple_product(3, 4, 5).unwrap(), epsilon = 1e-10);
        assert_abs_diff_eq!(
            triple_product_quadrature(2, 2, 2, 10_000).unwrap(),
            0.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            triple_product_quadrature(1, 1, 2, 10_000).unwrap(),
            0.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            triple_product_quadrature(1, 2, 2, 10_000).unwrap(),
            32.0 * SQRT_2 / (15.0 * PI),
            epsilon = 1e-10
        );
        assert!(triple_product_quadrature(1, 1, 1, 50).is_err());
    }

    #[test]
    fn tensor_small_cases() {
        let t = build_tensor(1, 1).unwrap();
        assert_eq!(t.len(), 1);
        assert_abs_diff_eq!(t.get(1, 1, 1), 8.0 * SQRT_2 / (3.0 * PI), epsilon = 1e-15);

        let t = build_tensor(2, 2).unwrap();
        let listed: Vec<_> = t.entries().map(|(j, k, i, _)| (j, k, i)).collect();
        assert_eq!(listed, vec![(1, 1, 1), (1, 2, 2), (2, 1, 2), (2, 2, 1)]);
        assert_eq!(t.get(1, 1, 2), 0.0);
        assert_eq!(t.get(3, 1, 1), 0.0);
        assert!(build_tensor(0, 1).is_err());
        assert!(build_tensor(1, 0).is_err());
    }

    #[test]
    fn tensor_entry_count_matches_enumeration() {
        for (n, m) in [(1, 1), (3, 5), (8, 3), (12, 12)] {
            let t = build_tensor(n, m).unwrap();
            let mut expected = 0;
            for j in 1..=m {
                for k in 1..=n {
                    for i in 1..=n {
                        if (i + j + k) % 2 == 1 {
                            expected += 1;
                        }
                    }
                }
            }
            assert_eq!(t.len(), expected);
        }
    }

    proptest! {
        #[test]
        fn permutation_symmetry(i in 1usize..=30, j in 1usize..=30, k in 1usize..=30) {
            let v = triple_product(i, j, k).unwrap();
            for (a, b, c) in [(i, k, j), (j, i, k), (j, k, i), (k, i, j), (k, j, i)] {
                prop_assert_eq!(v.to_bits(), triple_product(a, b, c).unwrap().to_bits());
            }
        }

        #[test]
        fn zero_exactly_on_even_parity(i in 1usize..=40, j in 1usize..=40, k in 1usize..=40) {
            let v = triple_product(i, j, k).unwrap();
            prop_assert_eq!(v == 0.0, (i + j + k) % 2 == 0);
        }
    }
}
