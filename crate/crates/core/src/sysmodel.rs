//! Parameterized linear systems `A(xi) u(xi) = f(xi)`: pointwise evaluation,
//! spectral solutions over a polynomial basis, and gPC expansions of the
//! operator and right-hand side.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::gpc::{expectation, Basis, QuadratureRule};
use crate::scalar::Scalar;

type MatrixFn<T> = Arc<dyn Fn(T) -> DMatrix<T> + Send + Sync>;
type VectorFn<T> = Arc<dyn Fn(T) -> DVector<T> + Send + Sync>;

/// A parameterized linear system given by pointwise evaluators of the matrix
/// and right-hand side. Evaluators must be pure; distinct parameter values may
/// be evaluated concurrently.
#[derive(Clone)]
pub struct ParamSystem<T> {
    n_x: usize,
    eval_a: MatrixFn<T>,
    eval_f: VectorFn<T>,
    spd: bool,
}

impl<T: Scalar> ParamSystem<T> {
    pub fn new(
        n_x: usize,
        eval_a: impl Fn(T) -> DMatrix<T> + Send + Sync + 'static,
        eval_f: impl Fn(T) -> DVector<T> + Send + Sync + 'static,
        spd: bool,
    ) -> Self {
        Self {
            n_x,
            eval_a: Arc::new(eval_a),
            eval_f: Arc::new(eval_f),
            spd,
        }
    }

    /// One-dimensional system `a(xi) u = f(xi)` with a positive coefficient,
    /// used for the divergence studies.
    pub fn scalar(
        a_fn: impl Fn(T) -> T + Send + Sync + 'static,
        f_fn: impl Fn(T) -> T + Send + Sync + 'static,
    ) -> Self {
        Self::new(
            1,
            move |xi| DMatrix::from_element(1, 1, a_fn(xi)),
            move |xi| DVector::from_element(1, f_fn(xi)),
            true,
        )
    }

    /// State dimension.
    pub fn n_x(&self) -> usize {
        self.n_x
    }

    /// Whether `A(xi)` is symmetric positive definite on the whole support.
    pub fn is_spd(&self) -> bool {
        self.spd
    }

    pub fn eval_a(&self, xi: T) -> DMatrix<T> {
        (self.eval_a)(xi)
    }

    pub fn eval_f(&self, xi: T) -> DVector<T> {
        (self.eval_f)(xi)
    }
}

impl<T> std::fmt::Debug for ParamSystem<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ParamSystem")
            .field("n_x", &self.n_x)
            .field("spd", &self.spd)
            .finish()
    }
}

/// Spectral solution: one coefficient block of length `n_x` per basis
/// polynomial, concatenated into a single vector.
#[derive(Clone, Debug)]
pub struct SpectralSolution<T> {
    basis: Basis<T>,
    n_x: usize,
    coeffs: DVector<T>,
}

impl<T: Scalar> SpectralSolution<T> {
    pub fn new(basis: Basis<T>, n_x: usize, coeffs: DVector<T>) -> Self {
        assert_eq!(
            coeffs.len(),
            n_x * basis.dim(),
            "coefficient vector must hold one block per basis polynomial"
        );
        Self { basis, n_x, coeffs }
    }

    pub fn zero(basis: Basis<T>, n_x: usize) -> Self {
        let len = n_x * basis.dim();
        Self::new(basis, n_x, DVector::zeros(len))
    }

    pub fn basis(&self) -> &Basis<T> {
        &self.basis
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn n_blocks(&self) -> usize {
        self.basis.dim()
    }

    pub fn coeffs(&self) -> &DVector<T> {
        &self.coeffs
    }

    /// Coefficient block `u_i`.
    pub fn block(&self, i: usize) -> DVector<T> {
        self.coeffs.rows(i * self.n_x, self.n_x).into_owned()
    }

    /// Evaluate `u~(xi) = sum_i u_i psi_i(xi)`.
    pub fn evaluate(&self, xi: T) -> DVector<T> {
        let psi = self.basis.evaluate(xi);
        let mut out = DVector::zeros(self.n_x);
        for i in 0..self.basis.dim() {
            out.axpy(psi[i], &self.coeffs.rows(i * self.n_x, self.n_x), T::one());
        }
        out
    }
}

/// Residual `r(xi) = f(xi) - A(xi) u~(xi)` of a spectral solution.
pub fn evaluate_residual<T: Scalar>(
    sys: &ParamSystem<T>,
    sol: &SpectralSolution<T>,
    xi: T,
) -> DVector<T> {
    let mut r = sys.eval_f(xi);
    let a = sys.eval_a(xi);
    let u = sol.evaluate(xi);
    r.gemv(-T::one(), &a, &u, T::one());
    r
}

/// gPC expansion of the operator and right-hand side:
/// `A(xi) ~= sum_l A_l psi_l(xi)` with `A_l = E[A psi_l]`, and analogously
/// `f_l = E[f psi_l]`.
#[derive(Clone, Debug)]
pub struct OperatorExpansion<T> {
    a_coeffs: Vec<DMatrix<T>>,
    f_coeffs: Vec<DVector<T>>,
    basis: Basis<T>,
    expansion_basis: Basis<T>,
    reconstruction_error: T,
}

impl<T: Scalar> OperatorExpansion<T> {
    /// Number of operator expansion terms.
    pub fn n_a(&self) -> usize {
        self.a_coeffs.len()
    }

    /// Number of right-hand-side expansion terms.
    pub fn n_b(&self) -> usize {
        self.f_coeffs.len()
    }

    pub fn a_coeff(&self, l: usize) -> &DMatrix<T> {
        &self.a_coeffs[l]
    }

    pub fn f_coeff(&self, l: usize) -> &DVector<T> {
        &self.f_coeffs[l]
    }

    /// Solution basis the expansion was built for.
    pub fn basis(&self) -> &Basis<T> {
        &self.basis
    }

    /// Enlarged basis holding the expansion polynomials themselves.
    pub fn expansion_basis(&self) -> &Basis<T> {
        &self.expansion_basis
    }

    /// Largest relative reconstruction error of `sum_l A_l psi_l` against
    /// `A(xi)` over the construction rule's nodes.
    pub fn reconstruction_error(&self) -> T {
        self.reconstruction_error
    }

    /// Reconstruct `sum_l A_l psi_l(xi)`.
    pub fn reconstruct_a(&self, xi: T) -> DMatrix<T> {
        let psi = self.expansion_basis.evaluate(xi);
        let (n, m) = (self.a_coeffs[0].nrows(), self.a_coeffs[0].ncols());
        let mut out = DMatrix::zeros(n, m);
        for (l, coeff) in self.a_coeffs.iter().enumerate() {
            crate::linalg::add_scaled(&mut out, psi[l], coeff);
        }
        out
    }
}

/// Expand the operator and right-hand side in the basis's polynomial family,
/// keeping `n_a` operator terms and `n_b` right-hand-side terms. The largest
/// relative reconstruction mismatch over the rule's nodes is recorded on the
/// result; a large value flags insufficient truncation, it is not fatal.
pub fn expand_operator<T: Scalar>(
    sys: &ParamSystem<T>,
    basis: &Basis<T>,
    rule: &QuadratureRule<T>,
    n_a: usize,
    n_b: usize,
) -> Result<OperatorExpansion<T>> {
    assert!(n_a >= 1 && n_b >= 1, "expansions need at least one term");
    let max_terms = n_a.max(n_b);
    let expansion_basis = crate::gpc::build_basis(basis.space(), max_terms - 1);

    let mut a_coeffs = Vec::with_capacity(n_a);
    for l in 0..n_a {
        let coeff = expectation(
            |xi| {
                let psi = expansion_basis.evaluate(xi);
                sys.eval_a(xi) * psi[l]
            },
            rule,
        )?;
        a_coeffs.push(coeff);
    }

    let mut f_coeffs = Vec::with_capacity(n_b);
    for l in 0..n_b {
        let coeff = expectation(
            |xi| {
                let psi = expansion_basis.evaluate(xi);
                sys.eval_f(xi) * psi[l]
            },
            rule,
        )?;
        f_coeffs.push(coeff);
    }

    let expansion = OperatorExpansion {
        a_coeffs,
        f_coeffs,
        basis: basis.clone(),
        expansion_basis,
        reconstruction_error: T::zero(),
    };

    let mut max_err = T::zero();
    let mut max_norm = T::zero();
    for &xi in rule.nodes() {
        let exact = sys.eval_a(xi);
        let diff = &exact - expansion.reconstruct_a(xi);
        max_err = max_err.max(diff.norm());
        max_norm = max_norm.max(exact.norm());
    }
    let rel = if max_norm > T::zero() {
        max_err / max_norm
    } else {
        max_err
    };

    Ok(OperatorExpansion {
        reconstruction_error: rel,
        ..expansion
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gpc::{build_basis, gauss_rule, ParameterSpace};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn hermite_basis(p: usize) -> Basis<f64> {
        build_basis(&ParameterSpace::standard_normal(), p)
    }

    #[test]
    fn constant_block_evaluates_to_constant() {
        let basis = hermite_basis(3);
        let v = DVector::from_vec(vec![2.0, -1.0]);
        let mut coeffs = DVector::zeros(8);
        coeffs.rows_mut(0, 2).copy_from(&v);
        let sol = SpectralSolution::new(basis, 2, coeffs);
        for &xi in &[-2.0, 0.0, 1.3] {
            let u = sol.evaluate(xi);
            assert_eq!(u, v); // psi_0 is identically one
        }
    }

    #[test]
    fn linear_block_scales_with_xi() {
        let basis = hermite_basis(1);
        let v = DVector::from_vec(vec![3.0, 0.5]);
        let mut coeffs = DVector::zeros(4);
        coeffs.rows_mut(2, 2).copy_from(&v);
        let sol = SpectralSolution::new(basis, 2, coeffs);
        for &xi in &[-1.0, 0.25, 2.0] {
            let u = sol.evaluate(xi);
            assert!((u[0] - 3.0 * xi).abs() < 1e-15);
            assert!((u[1] - 0.5 * xi).abs() < 1e-15);
        }
    }

    #[test]
    fn evaluation_matches_naive_block_summation() {
        let basis = hermite_basis(5);
        let n_x = 4;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let coeffs = DVector::from_fn(n_x * basis.dim(), |_, _| rng.random::<f64>() - 0.5);
        let sol = SpectralSolution::new(basis.clone(), n_x, coeffs.clone());

        let rule = gauss_rule(&ParameterSpace::standard_normal(), 7).unwrap();
        for &xi in rule.nodes() {
            let psi = basis.evaluate(xi);
            let mut naive = DVector::zeros(n_x);
            for i in 0..basis.dim() {
                for r in 0..n_x {
                    naive[r] += coeffs[i * n_x + r] * psi[i];
                }
            }
            let fast = sol.evaluate(xi);
            for r in 0..n_x {
                assert!((fast[r] - naive[r]).abs() <= 1e-14 * naive[r].abs().max(1.0));
            }
        }
    }

    #[test]
    fn residual_of_zero_solution_is_rhs() {
        let sys = ParamSystem::scalar(|_| 2.0, |xi: f64| xi.exp());
        let sol = SpectralSolution::zero(hermite_basis(2), 1);
        for &xi in &[-1.0, 0.0, 0.7] {
            let r = evaluate_residual(&sys, &sol, xi);
            assert!((r[0] - xi.exp()).abs() < 1e-15);
        }
    }

    #[test]
    fn scalar_constant_system_has_zero_residual_at_exact_solution() {
        // a = 2, f = 1, u0 = 0.5 solves the system for every xi.
        let sys = ParamSystem::scalar(|_| 2.0, |_| 1.0);
        let basis = hermite_basis(3);
        let mut coeffs = DVector::zeros(4);
        coeffs[0] = 0.5;
        let sol = SpectralSolution::new(basis, 1, coeffs);
        for &xi in &[-3.0, 0.0, 2.2] {
            let r = evaluate_residual(&sys, &sol, xi);
            assert!(r[0].abs() < 1e-15);
        }
    }

    #[test]
    fn residual_is_affine_in_the_coefficients() {
        let sys = ParamSystem::new(
            2,
            |xi: f64| DMatrix::from_row_slice(2, 2, &[2.0 + xi * xi, 0.3, 0.3, 1.5]),
            |xi: f64| DVector::from_vec(vec![xi.exp(), 1.0]),
            true,
        );
        let basis = hermite_basis(3);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u = DVector::from_fn(8, |_, _| rng.random::<f64>());
        let v = DVector::from_fn(8, |_, _| rng.random::<f64>() - 0.5);

        let sol_u = SpectralSolution::new(basis.clone(), 2, u.clone());
        let sol_uv = SpectralSolution::new(basis.clone(), 2, &u + &v);
        let sol_v = SpectralSolution::new(basis.clone(), 2, v);

        for &xi in &[-1.4, 0.0, 0.9] {
            let lhs = evaluate_residual(&sys, &sol_uv, xi);
            // r(u + v) = r(u) - A (psi^T x I) v
            let mut rhs = evaluate_residual(&sys, &sol_u, xi);
            let a = sys.eval_a(xi);
            rhs.gemv(-1.0, &a, &sol_v.evaluate(xi), 1.0);
            for r in 0..2 {
                assert!((lhs[r] - rhs[r]).abs() < 1e-13 * rhs[r].abs().max(1.0));
            }
        }
    }

    #[test]
    fn expansion_of_constant_operator_is_the_leading_term() {
        let a0 = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let a0c = a0.clone();
        let sys = ParamSystem::new(
            2,
            move |_| a0c.clone(),
            |_| DVector::from_vec(vec![1.0, 2.0]),
            true,
        );
        let basis = hermite_basis(3);
        let rule = gauss_rule(&ParameterSpace::standard_normal(), 30).unwrap();
        let exp = expand_operator(&sys, &basis, &rule, 5, 3).unwrap();

        assert!((exp.a_coeff(0) - &a0).norm() < 1e-13);
        for l in 1..5 {
            assert!(exp.a_coeff(l).norm() < 1e-13, "term {l} should vanish");
        }
        assert!(exp.reconstruction_error() < 1e-13);
    }

    #[test]
    fn lognormal_scalar_expansion_matches_closed_form() {
        // a(xi) = exp(s xi) has Hermite coefficients exp(s^2/2) s^l / sqrt(l!).
        let s = 0.3f64;
        let sys = ParamSystem::scalar(move |xi: f64| (s * xi).exp(), |_| 1.0);
        let basis = hermite_basis(4);
        let rule = gauss_rule(&ParameterSpace::standard_normal(), 60).unwrap();
        let exp = expand_operator(&sys, &basis, &rule, 9, 1).unwrap();

        let mut factorial = 1.0f64;
        for l in 0..9 {
            if l > 0 {
                factorial *= l as f64;
            }
            let expected = (s * s / 2.0).exp() * s.powi(l as i32) / factorial.sqrt();
            let got = exp.a_coeff(l)[(0, 0)];
            assert!(
                (got - expected).abs() < 1e-12,
                "coefficient {l}: {got} vs {expected}"
            );
        }
    }

    #[test]
    fn rhs_expansion_picks_out_basis_directions() {
        // f(xi) = psi_3(xi) v  =>  f_3 = v, all other coefficients vanish.
        let basis = hermite_basis(5);
        let eval_basis = basis.clone();
        let v = DVector::from_vec(vec![1.0, -2.0]);
        let vc = v.clone();
        let sys = ParamSystem::new(
            2,
            |_| DMatrix::identity(2, 2),
            move |xi| &vc * eval_basis.evaluate(xi)[3],
            true,
        );
        let rule = gauss_rule(&ParameterSpace::standard_normal(), 30).unwrap();
        let exp = expand_operator(&sys, &basis, &rule, 1, 6).unwrap();
        for l in 0..6 {
            let diff = if l == 3 {
                (exp.f_coeff(l) - &v).norm()
            } else {
                exp.f_coeff(l).norm()
            };
            assert!(diff < 1e-12, "term {l}");
        }
    }

    #[test]
    fn polynomial_operator_reconstruction_is_exact() {
        // A(xi) affine in xi and n_a > degree: reconstruction error at nodes
        // is pure roundoff.
        let sys = ParamSystem::new(
            2,
            |xi: f64| DMatrix::from_row_slice(2, 2, &[3.0 + xi, 0.0, 0.0, 2.0 - 0.5 * xi]),
            |_| DVector::from_vec(vec![1.0, 1.0]),
            false,
        );
        let basis = hermite_basis(2);
        let rule = gauss_rule(&ParameterSpace::standard_normal(), 20).unwrap();
        let exp = expand_operator(&sys, &basis, &rule, 4, 1).unwrap();
        assert!(exp.reconstruction_error() < 1e-14);
    }
}
