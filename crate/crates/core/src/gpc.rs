//! Orthonormal polynomial bases, Gauss quadrature rules derived from
//! three-term recurrences, and moment tensors of basis products.
//!
//! All rules absorb the probability density into the weights, so weights sum
//! to one and `E[g] = sum_k w_k g(xi_k)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::scalar::{approx_f64, count, real, Scalar};
use crate::special::ln_gamma;

/// Univariate orthogonal polynomial family, identified with its density.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PolynomialFamily<T> {
    /// Probabilists' Hermite polynomials: standard normal density on the real line.
    HermiteStandardNormal,
    /// Generalized Laguerre polynomials: Gamma density
    /// `rho(x) = x^alpha e^{-x} / Gamma(alpha + 1)` on `[0, inf)`, `alpha > -1`.
    GeneralizedLaguerre { alpha: T },
}

impl<T: Scalar> PolynomialFamily<T> {
    /// Monic three-term recurrence coefficients `(a_k, b_k)` for
    /// `pi_{k+1}(x) = (x - a_k) pi_k(x) - b_k pi_{k-1}(x)`, with `b_0 = 1`
    /// because the density has unit mass.
    ///
    /// Hermite: `a_k = 0`, `b_k = k`. Generalized Laguerre:
    /// `a_k = 2k + alpha + 1`, `b_k = k (k + alpha)`.
    pub fn recurrence(&self, k: usize) -> (T, T) {
        let kf = count::<T>(k);
        match *self {
            PolynomialFamily::HermiteStandardNormal => (T::zero(), kf),
            PolynomialFamily::GeneralizedLaguerre { alpha } => {
                (kf + kf + alpha + T::one(), kf * (kf + alpha))
            }
        }
    }
}

/// Support of the parameter density.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Support {
    RealLine,
    NonNegative,
}

impl Support {
    pub fn contains(&self, xi: f64) -> bool {
        match self {
            Support::RealLine => xi.is_finite(),
            Support::NonNegative => xi.is_finite() && xi >= 0.0,
        }
    }
}

/// One-dimensional stochastic parameter space: a polynomial family together
/// with its support and closed-form density.
#[derive(Clone, Copy, Debug)]
pub struct ParameterSpace<T> {
    family: PolynomialFamily<T>,
}

impl<T: Scalar> ParameterSpace<T> {
    /// Standard normal parameter with Hermite basis.
    pub fn standard_normal() -> Self {
        Self {
            family: PolynomialFamily::HermiteStandardNormal,
        }
    }

    /// Gamma-distributed parameter (density `x^alpha e^{-x} / Gamma(alpha+1)`)
    /// with generalized Laguerre basis. Requires `alpha > -1`.
    pub fn gamma(alpha: T) -> Result<Self> {
        if alpha <= -T::one() {
            return Err(Error::Config(format!(
                "Laguerre parameter alpha must exceed -1, got {}",
                approx_f64(alpha)
            )));
        }
        Ok(Self {
            family: PolynomialFamily::GeneralizedLaguerre { alpha },
        })
    }

    pub fn family(&self) -> PolynomialFamily<T> {
        self.family
    }

    /// Number of stochastic parameters (the shipped problems all use one).
    pub fn n_xi(&self) -> usize {
        1
    }

    pub fn support(&self) -> Support {
        match self.family {
            PolynomialFamily::HermiteStandardNormal => Support::RealLine,
            PolynomialFamily::GeneralizedLaguerre { .. } => Support::NonNegative,
        }
    }

    /// Closed-form probability density at `xi`.
    pub fn density(&self, xi: T) -> T {
        match self.family {
            PolynomialFamily::HermiteStandardNormal => {
                let half = real::<T>(0.5);
                (-half * xi * xi).exp() / (T::two_pi()).sqrt()
            }
            PolynomialFamily::GeneralizedLaguerre { alpha } => {
                if xi < T::zero() {
                    return T::zero();
                }
                if xi == T::zero() {
                    // x^alpha at the endpoint: finite only for alpha = 0.
                    return if alpha == T::zero() { T::one() } else { T::zero() };
                }
                (alpha * xi.ln() - xi - ln_gamma(alpha + T::one())).exp()
            }
        }
    }
}

/// Orthonormal polynomial basis of maximum degree `p`; dimension `p + 1`.
///
/// Degrees are sorted ascending, so a degree-`p` basis is a prefix of the
/// degree-`p+1` basis and evaluations agree bit-for-bit on the shared range.
#[derive(Clone, Debug)]
pub struct Basis<T> {
    space: ParameterSpace<T>,
    degree: usize,
    rec_a: Vec<T>,
    rec_sqrt_b: Vec<T>,
    multi_indices: Vec<Vec<usize>>,
}

/// Build the orthonormal basis of maximum degree `p` for the given space.
pub fn build_basis<T: Scalar>(space: &ParameterSpace<T>, degree: usize) -> Basis<T> {
    let mut rec_a = Vec::with_capacity(degree);
    let mut rec_sqrt_b = Vec::with_capacity(degree);
    for k in 0..degree {
        let (a_k, _) = space.family().recurrence(k);
        let (_, b_next) = space.family().recurrence(k + 1);
        rec_a.push(a_k);
        rec_sqrt_b.push(b_next.sqrt());
    }
    let multi_indices = (0..=degree).map(|d| vec![d]).collect();
    Basis {
        space: *space,
        degree,
        rec_a,
        rec_sqrt_b,
        multi_indices,
    }
}

impl<T: Scalar> Basis<T> {
    pub fn space(&self) -> &ParameterSpace<T> {
        &self.space
    }

    /// Maximum polynomial degree `p`.
    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Basis dimension (`p + 1` for a single parameter).
    pub fn dim(&self) -> usize {
        self.degree + 1
    }

    /// Multi-indices `alpha(i)`; one entry per parameter (length 1 here).
    pub fn multi_indices(&self) -> &[Vec<usize>] {
        &self.multi_indices
    }

    /// Evaluate all basis polynomials at `xi` via the normalized recurrence
    /// `sqrt(b_{k+1}) psi_{k+1} = (xi - a_k) psi_k - sqrt(b_k) psi_{k-1}`.
    pub fn evaluate(&self, xi: T) -> DVector<T> {
        let mut values = DVector::zeros(self.dim());
        values[0] = T::one();
        if self.degree == 0 {
            return values;
        }
        values[1] = (xi - self.rec_a[0]) / self.rec_sqrt_b[0];
        for k in 1..self.degree {
            values[k + 1] = ((xi - self.rec_a[k]) * values[k]
                - self.rec_sqrt_b[k - 1] * values[k - 1])
                / self.rec_sqrt_b[k];
        }
        values
    }

    /// Gram matrix `E[psi psi^T]` under the given rule; identity up to the
    /// rule's exactness.
    pub fn gram_matrix(&self, rule: &QuadratureRule<T>) -> DMatrix<T> {
        let n = self.dim();
        let mut gram = DMatrix::zeros(n, n);
        for (xi, w) in rule.iter() {
            let psi = self.evaluate(xi);
            gram.ger(w, &psi, &psi, T::one());
        }
        gram
    }
}

/// Gauss quadrature rule matched to a parameter density: weights absorb the
/// density and sum to one.
#[derive(Clone, Debug)]
pub struct QuadratureRule<T> {
    nodes: Vec<T>,
    weights: Vec<T>,
    exactness_degree: usize,
}

impl<T: Scalar> QuadratureRule<T> {
    pub fn n_q(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    /// Largest polynomial degree the rule integrates exactly (`2 n_q - 1`).
    pub fn exactness_degree(&self) -> usize {
        self.exactness_degree
    }

    pub fn iter(&self) -> impl Iterator<Item = (T, T)> + '_ {
        self.nodes
            .iter()
            .copied()
            .zip(self.weights.iter().copied())
    }
}

/// Gauss rule with `n_q` nodes from the Golub-Welsch construction: nodes and
/// weights come from the symmetric tridiagonal Jacobi matrix built from the
/// family's three-term recurrence.
pub fn gauss_rule<T: Scalar>(space: &ParameterSpace<T>, n_q: usize) -> Result<QuadratureRule<T>> {
    assert!(n_q >= 1, "a quadrature rule needs at least one node");
    let family = space.family();

    let mut jacobi = DMatrix::<T>::zeros(n_q, n_q);
    for k in 0..n_q {
        let (a_k, _) = family.recurrence(k);
        jacobi[(k, k)] = a_k;
        if k + 1 < n_q {
            let (_, b_next) = family.recurrence(k + 1);
            if b_next <= T::zero() {
                return Err(Error::EigenFailure(format!(
                    "recurrence coefficient b_{} = {} is not positive",
                    k + 1,
                    approx_f64(b_next)
                )));
            }
            let off = b_next.sqrt();
            jacobi[(k, k + 1)] = off;
            jacobi[(k + 1, k)] = off;
        }
    }

    let eigen = SymmetricEigen::try_new(jacobi, T::default_epsilon(), 50_000)
        .ok_or_else(|| Error::EigenFailure("Jacobi matrix eigen iteration did not converge".into()))?;

    let mut pairs: Vec<(T, T)> = (0..n_q)
        .map(|i| {
            let q0 = eigen.eigenvectors[(0, i)];
            (eigen.eigenvalues[i], q0 * q0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("eigenvalues are finite"));

    for (i, &(_, w)) in pairs.iter().enumerate() {
        if !(w > T::zero()) {
            return Err(Error::NonPositiveWeight {
                index: i,
                value: approx_f64(w),
            });
        }
    }

    Ok(QuadratureRule {
        nodes: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1).collect(),
        exactness_degree: 2 * n_q - 1,
    })
}

/// Default node count for a study at polynomial degree `p`.
pub fn default_rule_size(p: usize) -> usize {
    (2 * p + 12).max(30)
}

/// Value types that can be averaged by quadrature.
pub trait IntegrandValue<T>: Clone {
    fn zero_like(&self) -> Self;
    /// `self += w * other`
    fn add_scaled(&mut self, w: T, other: &Self);
    fn all_finite(&self) -> bool;
}

impl<T: Scalar> IntegrandValue<T> for T {
    fn zero_like(&self) -> Self {
        T::zero()
    }
    fn add_scaled(&mut self, w: T, other: &Self) {
        *self += w * *other;
    }
    fn all_finite(&self) -> bool {
        self.is_finite()
    }
}

impl<T: Scalar> IntegrandValue<T> for DVector<T> {
    fn zero_like(&self) -> Self {
        DVector::zeros(self.len())
    }
    fn add_scaled(&mut self, w: T, other: &Self) {
        self.axpy(w, other, T::one());
    }
    fn all_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }
}

impl<T: Scalar> IntegrandValue<T> for DMatrix<T> {
    fn zero_like(&self) -> Self {
        DMatrix::zeros(self.nrows(), self.ncols())
    }
    fn add_scaled(&mut self, w: T, other: &Self) {
        crate::linalg::add_scaled(self, w, other);
    }
    fn all_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }
}

/// Expectation `E[g] = sum_k w_k g(xi_k)` of a scalar-, vector-, or
/// matrix-valued integrand. Nodes are visited in ascending order, so the
/// reduction order is deterministic.
pub fn expectation<T: Scalar, V: IntegrandValue<T>>(
    mut integrand: impl FnMut(T) -> V,
    rule: &QuadratureRule<T>,
) -> Result<V> {
    let mut acc: Option<V> = None;
    for (k, (xi, w)) in rule.iter().enumerate() {
        let value = integrand(xi);
        if !value.all_finite() {
            return Err(Error::NonFiniteIntegrand {
                node: k,
                xi: approx_f64(xi),
            });
        }
        match acc.as_mut() {
            None => {
                let mut zero = value.zero_like();
                zero.add_scaled(w, &value);
                acc = Some(zero);
            }
            Some(total) => total.add_scaled(w, &value),
        }
    }
    Ok(acc.expect("rules have at least one node"))
}

/// Dense moment tensors `G2[i][j] = E[psi_i psi_j]`,
/// `G3[i][j][k] = E[psi_i psi_j psi_k]`, `G4[i][j][k][l] = E[psi_i psi_j psi_k psi_l]`.
///
/// Entries are filled from sorted index tuples and mirrored, so the stored
/// tensors are symmetric under index permutation exactly as stored.
#[derive(Clone, Debug)]
pub struct MomentTensors<T> {
    dim: usize,
    order: usize,
    g2: DMatrix<T>,
    g3: Option<Vec<DMatrix<T>>>,
    g4: Option<Vec<Vec<DMatrix<T>>>>,
}

impl<T: Scalar> MomentTensors<T> {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn g2(&self) -> &DMatrix<T> {
        &self.g2
    }

    /// Matrix slice `G3[.][.][k]`.
    pub fn g3_slice(&self, k: usize) -> Result<&DMatrix<T>> {
        self.g3
            .as_ref()
            .map(|slices| &slices[k])
            .ok_or(Error::MomentOrderUnavailable {
                needed: 3,
                available: self.order,
            })
    }

    /// Matrix slice `G4[.][.][k][l]`.
    pub fn g4_slice(&self, k: usize, l: usize) -> Result<&DMatrix<T>> {
        self.g4
            .as_ref()
            .map(|slices| &slices[k][l])
            .ok_or(Error::MomentOrderUnavailable {
                needed: 4,
                available: self.order,
            })
    }
}

/// Compute moment tensors up to `max_order` (2, 3, or 4). The rule must be
/// exact for the largest product degree, `max_order * p`; otherwise the
/// computation is refused rather than silently approximated.
pub fn moment_tensors<T: Scalar>(
    basis: &Basis<T>,
    max_order: usize,
    rule: &QuadratureRule<T>,
) -> Result<MomentTensors<T>> {
    assert!(
        (2..=4).contains(&max_order),
        "moment tensors are supported for orders 2 through 4"
    );
    let needed = max_order * basis.degree();
    if rule.exactness_degree() < needed {
        return Err(Error::InsufficientExactness {
            needed,
            available: rule.exactness_degree(),
        });
    }

    let n = basis.dim();
    let values: Vec<DVector<T>> = rule.nodes().iter().map(|&xi| basis.evaluate(xi)).collect();
    let weights = rule.weights();

    let mut g2 = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let mut sum = T::zero();
            for (q, psi) in values.iter().enumerate() {
                sum += weights[q] * psi[i] * psi[j];
            }
            g2[(i, j)] = sum;
            g2[(j, i)] = sum;
        }
    }

    let g3 = if max_order >= 3 {
        let mut slices = vec![DMatrix::zeros(n, n); n];
        for i in 0..n {
            for j in i..n {
                for k in j..n {
                    let mut sum = T::zero();
                    for (q, psi) in values.iter().enumerate() {
                        sum += weights[q] * psi[i] * psi[j] * psi[k];
                    }
                    // Mirror over all permutations of (i, j, k).
                    slices[k][(i, j)] = sum;
                    slices[k][(j, i)] = sum;
                    slices[j][(i, k)] = sum;
                    slices[j][(k, i)] = sum;
                    slices[i][(j, k)] = sum;
                    slices[i][(k, j)] = sum;
                }
            }
        }
        Some(slices)
    } else {
        None
    };

    let g4 = if max_order >= 4 {
        let mut slices = vec![vec![DMatrix::zeros(n, n); n]; n];
        for i in 0..n {
            for j in i..n {
                for k in j..n {
                    for l in k..n {
                        let mut sum = T::zero();
                        for (q, psi) in values.iter().enumerate() {
                            sum += weights[q] * psi[i] * psi[j] * psi[k] * psi[l];
                        }
                        let quad = [i, j, k, l];
                        // Mirror over all permutations of the sorted tuple.
                        for a in 0..4 {
                            for b in 0..4 {
                                if b == a {
                                    continue;
                                }
                                for c in 0..4 {
                                    if c == a || c == b {
                                        continue;
                                    }
                                    let d = 6 - a - b - c;
                                    slices[quad[c]][quad[d]][(quad[a], quad[b])] = sum;
                                }
                            }
                        }
                    }
                }
            }
        }
        Some(slices)
    } else {
        None
    };

    Ok(MomentTensors {
        dim: n,
        order: max_order,
        g2,
        g3,
        g4,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn hermite() -> ParameterSpace<f64> {
        ParameterSpace::standard_normal()
    }

    fn laguerre(alpha: f64) -> ParameterSpace<f64> {
        ParameterSpace::gamma(alpha).unwrap()
    }

    #[test]
    fn hermite_low_degree_closed_forms() {
        let basis = build_basis(&hermite(), 2);
        let at_zero = basis.evaluate(0.0);
        assert_relative_eq!(at_zero[0], 1.0);
        assert_relative_eq!(at_zero[1], 0.0);
        assert_relative_eq!(at_zero[2], -1.0 / 2.0f64.sqrt());

        // psi_2(x) = (x^2 - 1)/sqrt(2)
        for &x in &[-1.7, 0.3, 2.5] {
            let v = basis.evaluate(x);
            assert_relative_eq!(v[1], x, max_relative = 1e-15);
            assert_relative_eq!(v[2], (x * x - 1.0) / 2.0f64.sqrt(), max_relative = 1e-14);
        }
    }

    #[test]
    fn hermite_gram_is_identity() {
        let basis = build_basis(&hermite(), 5);
        let rule = gauss_rule(&hermite(), 30).unwrap();
        let gram = basis.gram_matrix(&rule);
        for i in 0..6 {
            for j in 0..6 {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!(
                    (gram[(i, j)] - expected).abs() < 1e-12,
                    "gram[{i}][{j}] = {}",
                    gram[(i, j)]
                );
            }
        }
    }

    #[test]
    fn laguerre_gram_is_identity_against_independent_rule() {
        // Oracle rule of exactness degree >= 6 checks the degree-3 basis.
        let space = laguerre(0.5);
        let basis = build_basis(&space, 3);
        let rule = gauss_rule(&space, 20).unwrap();
        let gram = basis.gram_matrix(&rule);
        for i in 0..4 {
            for j in 0..4 {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!(
                    (gram[(i, j)] - expected).abs() < 1e-12,
                    "gram[{i}][{j}] = {}",
                    gram[(i, j)]
                );
            }
        }
    }

    #[test]
    fn basis_nesting_is_exact() {
        for space in [hermite(), laguerre(0.5)] {
            let rule = gauss_rule(&space, 17).unwrap();
            for p in 0..9 {
                let small = build_basis(&space, p);
                let large = build_basis(&space, p + 1);
                for &xi in rule.nodes() {
                    let vs = small.evaluate(xi);
                    let vl = large.evaluate(xi);
                    for i in 0..=p {
                        assert_eq!(vs[i].to_bits(), vl[i].to_bits());
                    }
                }
            }
        }
    }

    #[test]
    fn hermite_two_point_rule_is_plus_minus_one() {
        let rule = gauss_rule(&hermite(), 2).unwrap();
        assert_relative_eq!(rule.nodes()[0], -1.0, epsilon = 1e-14);
        assert_relative_eq!(rule.nodes()[1], 1.0, epsilon = 1e-14);
        assert_relative_eq!(rule.weights()[0], 0.5, epsilon = 1e-14);
        assert_relative_eq!(rule.weights()[1], 0.5, epsilon = 1e-14);
    }

    #[test]
    fn weights_sum_to_one() {
        let rule = gauss_rule(&hermite(), 30).unwrap();
        let total: f64 = rule.weights().iter().sum();
        assert!((total - 1.0).abs() < 1e-13);

        let rule = gauss_rule(&laguerre(0.5), 25).unwrap();
        let total: f64 = rule.weights().iter().sum();
        assert!((total - 1.0).abs() < 1e-13);
    }

    #[test]
    fn laguerre_first_moment_matches_gamma_mean() {
        let rule = gauss_rule(&laguerre(0.5), 20).unwrap();
        let mean = expectation(|xi: f64| xi, &rule).unwrap();
        assert!((mean - 1.5).abs() < 1e-12, "E[xi] = {mean}");
    }

    /// Closed-form moments of the standard normal: odd vanish, even are
    /// double factorials.
    fn normal_moment(m: usize) -> f64 {
        if m % 2 == 1 {
            0.0
        } else {
            let mut value = 1.0;
            let mut k = m as i64 - 1;
            while k > 1 {
                value *= k as f64;
                k -= 2;
            }
            value
        }
    }

    /// Closed-form moments of the Gamma(alpha + 1) density: rising factorials.
    fn gamma_moment(alpha: f64, m: usize) -> f64 {
        (0..m).map(|i| alpha + 1.0 + i as f64).product()
    }

    #[test]
    fn quadrature_exactness_on_monomials() {
        for n_q in [1usize, 2, 3, 5, 9, 16] {
            let rule = gauss_rule(&hermite(), n_q).unwrap();
            for m in 0..=rule.exactness_degree().min(24) {
                let got = expectation(|xi: f64| xi.powi(m as i32), &rule).unwrap();
                let expected = normal_moment(m);
                let scale = normal_moment(m + m % 2).max(1.0);
                assert!(
                    (got - expected).abs() <= 1e-10 * scale,
                    "hermite n_q={n_q} m={m}: {got} vs {expected}"
                );
            }

            let alpha = 0.5;
            let rule = gauss_rule(&laguerre(alpha), n_q).unwrap();
            for m in 0..=rule.exactness_degree().min(20) {
                let got = expectation(|xi: f64| xi.powi(m as i32), &rule).unwrap();
                let expected = gamma_moment(alpha, m);
                assert!(
                    (got - expected).abs() <= 1e-10 * expected.max(1.0),
                    "laguerre n_q={n_q} m={m}: {got} vs {expected}"
                );
            }
        }
    }

    #[test]
    fn expectation_trivial_and_lognormal() {
        let rule = gauss_rule(&hermite(), 30).unwrap();
        assert_relative_eq!(expectation(|_| 1.0f64, &rule).unwrap(), 1.0);
        assert!((expectation(|xi: f64| xi * xi, &rule).unwrap() - 1.0).abs() < 1e-12);

        // E[exp(a xi)] = exp(a^2 / 2) for standard normal xi.
        let a = 0.25f64;
        let expected = (a * a / 2.0).exp();
        let got = expectation(|xi: f64| (a * xi).exp(), &rule).unwrap();
        assert!((got - expected).abs() < 1e-13, "{got} vs {expected}");

        // Cross-check against a finer oracle rule.
        let oracle = gauss_rule(&hermite(), 50).unwrap();
        let fine = expectation(|xi: f64| (a * xi).exp(), &oracle).unwrap();
        assert!((got - fine).abs() < 1e-13);
    }

    #[test]
    fn expectation_rejects_non_finite_integrands() {
        let rule = gauss_rule(&hermite(), 5).unwrap();
        let err = expectation(|xi: f64| 1.0 / (xi - rule.nodes()[2]), &rule).unwrap_err();
        match err {
            Error::NonFiniteIntegrand { node, .. } => assert_eq!(node, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn moment_tensors_match_known_values() {
        let basis = build_basis(&hermite(), 4);
        let rule = gauss_rule(&hermite(), 30).unwrap();
        let tensors = moment_tensors(&basis, 4, &rule).unwrap();

        for i in 0..5 {
            for j in 0..5 {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((tensors.g2()[(i, j)] - expected).abs() < 1e-12);
            }
        }

        // E[psi_1 psi_1 psi_2] = sqrt(2)
        let g3_2 = tensors.g3_slice(2).unwrap();
        assert!((g3_2[(1, 1)] - 2.0f64.sqrt()).abs() < 1e-12);

        // G3[0][i][j] = delta_ij because psi_0 is the constant 1.
        let g3_0 = tensors.g3_slice(0).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((g3_0[(i, j)] - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn moment_tensors_are_exactly_permutation_symmetric() {
        let space = laguerre(0.5);
        let basis = build_basis(&space, 3);
        let rule = gauss_rule(&space, 12).unwrap();
        let tensors = moment_tensors(&basis, 4, &rule).unwrap();
        let n = basis.dim();

        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let base = tensors.g3_slice(k).unwrap()[(i, j)];
                    assert_eq!(base.to_bits(), tensors.g3_slice(i).unwrap()[(j, k)].to_bits());
                    assert_eq!(base.to_bits(), tensors.g3_slice(j).unwrap()[(k, i)].to_bits());
                    for l in 0..n {
                        let g4 = tensors.g4_slice(k, l).unwrap()[(i, j)];
                        assert_eq!(g4.to_bits(), tensors.g4_slice(i, j).unwrap()[(k, l)].to_bits());
                        assert_eq!(g4.to_bits(), tensors.g4_slice(l, j).unwrap()[(i, k)].to_bits());
                        assert_eq!(g4.to_bits(), tensors.g4_slice(j, i).unwrap()[(l, k)].to_bits());
                    }
                }
            }
        }
    }

    #[test]
    fn moment_tensors_refuse_insufficient_rules() {
        let basis = build_basis(&hermite(), 6);
        let rule = gauss_rule(&hermite(), 5).unwrap(); // exactness 9 < 24
        match moment_tensors(&basis, 4, &rule) {
            Err(Error::InsufficientExactness { needed, available }) => {
                assert_eq!(needed, 24);
                assert_eq!(available, 9);
            }
            other => panic!("expected exactness refusal, got {other:?}"),
        }
    }

    #[test]
    fn density_is_normalized() {
        // Integrate the closed-form density against plain midpoint sums on a
        // wide truncation; this checks the density itself, independent of the
        // Gauss weights.
        let space = hermite();
        let n = 40_000;
        let (lo, hi) = (-12.0f64, 12.0);
        let h = (hi - lo) / n as f64;
        let mass: f64 = (0..n)
            .map(|i| space.density(lo + (i as f64 + 0.5) * h) * h)
            .sum();
        assert!((mass - 1.0).abs() < 1e-9, "normal mass {mass}");

        let space = laguerre(0.5);
        let n = 400_000;
        let (lo, hi) = (0.0f64, 60.0);
        let h = (hi - lo) / n as f64;
        let mass: f64 = (0..n)
            .map(|i| space.density(lo + (i as f64 + 0.5) * h) * h)
            .sum();
        assert!((mass - 1.0).abs() < 1e-5, "gamma mass {mass}");
        assert!((0..n).all(|i| space.density(lo + (i as f64 + 0.5) * h) >= 0.0));
    }
}
