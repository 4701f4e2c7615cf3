//! Spectral projections for parameterized linear systems: stochastic
//! Galerkin, pseudo-spectral, and the weighted least-squares Petrov-Galerkin
//! family, with both quadrature and analytic (gPC-expansion) assembly paths.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fem::QoIOperator;
use crate::gpc::{Basis, MomentTensors, QuadratureRule};
use crate::scalar::{approx_f64, real, Scalar};
use crate::sysmodel::{OperatorExpansion, ParamSystem, SpectralSolution};

/// Weighting function `M(xi)` of the least-squares residual minimization.
/// Each choice targets a different error norm.
#[derive(Clone, Debug)]
pub enum WeightingScheme<T> {
    /// `M = C^{-1}` with `A = C C^T`: minimizes the energy norm of the
    /// solution error. Requires a symmetric positive definite operator.
    EnergyCholesky,
    /// `M = I`: minimizes the l2 norm of the residual.
    Identity,
    /// `M = A^{-1}`: minimizes the l2 norm of the solution error.
    OperatorInverse,
    /// `M = F A^{-1}`: minimizes the l2 norm of the error in the outputs.
    GoalOriented(QoIOperator<T>),
}

impl<T: Scalar> WeightingScheme<T> {
    /// Apply the weighting at one quadrature node: returns `(M A, M f)`.
    /// Factorizations are used throughout; no inverse is formed.
    fn apply(
        &self,
        node: usize,
        xi: T,
        a: &DMatrix<T>,
        f: &DVector<T>,
    ) -> Result<(DMatrix<T>, DVector<T>)> {
        let fail = |reason: &str| Error::NodeFactorization {
            node,
            xi: approx_f64(xi),
            reason: reason.into(),
        };
        match self {
            WeightingScheme::Identity => Ok((a.clone(), f.clone())),
            WeightingScheme::EnergyCholesky => {
                let chol = Cholesky::new(a.clone())
                    .ok_or_else(|| fail("Cholesky factorization failed (matrix not SPD)"))?;
                let l = chol.l();
                let ma = l
                    .solve_lower_triangular(a)
                    .ok_or_else(|| fail("triangular solve failed"))?;
                let mf = l
                    .solve_lower_triangular(f)
                    .ok_or_else(|| fail("triangular solve failed"))?;
                Ok((ma, mf))
            }
            WeightingScheme::OperatorInverse => {
                let lu = a.clone().lu();
                let ma = lu.solve(a).ok_or_else(|| fail("LU solve failed (singular matrix)"))?;
                let mf = lu.solve(f).ok_or_else(|| fail("LU solve failed (singular matrix)"))?;
                Ok((ma, mf))
            }
            WeightingScheme::GoalOriented(qoi) => {
                let lu = a.clone().lu();
                let inv_a = lu.solve(a).ok_or_else(|| fail("LU solve failed (singular matrix)"))?;
                let inv_f = lu.solve(f).ok_or_else(|| fail("LU solve failed (singular matrix)"))?;
                let fmat = qoi.evaluate(xi);
                Ok((&fmat * inv_a, fmat * inv_f))
            }
        }
    }
}

/// Assembled quadratic form of the weighted residual:
/// `|M r(x)|^2 = x^T T1 x - 2 T2^T x + T3`.
#[derive(Clone, Debug)]
pub struct NormalEquations<T> {
    t1: DMatrix<T>,
    t2: DVector<T>,
    t3: T,
    n_x: usize,
    n_psi: usize,
}

impl<T: Scalar> NormalEquations<T> {
    pub fn t1(&self) -> &DMatrix<T> {
        &self.t1
    }

    pub fn t2(&self) -> &DVector<T> {
        &self.t2
    }

    pub fn t3(&self) -> T {
        self.t3
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn n_psi(&self) -> usize {
        self.n_psi
    }

    pub fn dim(&self) -> usize {
        self.n_x * self.n_psi
    }
}

/// Quadratic objective `x^T T1 x - 2 T2^T x + T3` at a coefficient vector.
pub fn objective_value<T: Scalar>(ne: &NormalEquations<T>, x: &DVector<T>) -> T {
    assert_eq!(x.len(), ne.dim(), "coefficient vector has the wrong length");
    (&ne.t1 * x).dot(x) - real::<T>(2.0) * ne.t2.dot(x) + ne.t3
}

/// Assemble the normal equations of the weighted least-squares problem by
/// quadrature:
/// `T1 = E[psi psi^T (x) (MA)^T (MA)]`, `T2 = E[psi (x) (MA)^T M f]`,
/// `T3 = E[(Mf)^T M f]`.
pub fn assemble_normal_equations<T: Scalar>(
    sys: &ParamSystem<T>,
    basis: &Basis<T>,
    rule: &QuadratureRule<T>,
    weighting: &WeightingScheme<T>,
) -> Result<NormalEquations<T>> {
    if matches!(weighting, WeightingScheme::EnergyCholesky) && !sys.is_spd() {
        return Err(Error::SpdViolation(
            "energy weighting requires a symmetric positive definite operator".into(),
        ));
    }
    if let WeightingScheme::GoalOriented(qoi) = weighting {
        if qoi.n_x() != sys.n_x() {
            return Err(Error::DimensionMismatch(format!(
                "output functional acts on {} states, system has {}",
                qoi.n_x(),
                sys.n_x()
            )));
        }
    }

    let n_x = sys.n_x();
    let n_psi = basis.dim();
    let dim = n_x * n_psi;
    let mut t1 = DMatrix::zeros(dim, dim);
    let mut t2 = DVector::zeros(dim);
    let mut t3 = T::zero();
    let half = real::<T>(0.5);

    for (k, (xi, w)) in rule.iter().enumerate() {
        let a = sys.eval_a(xi);
        let f = sys.eval_f(xi);
        let (ma, mf) = weighting.apply(k, xi, &a, &f)?;

        let mut b = ma.tr_mul(&ma);
        // Exact symmetry of the accumulated T1.
        let bt = b.transpose();
        b += &bt;
        b *= half;

        let c = ma.tr_mul(&mf);
        let psi = basis.evaluate(xi);

        for i in 0..n_psi {
            for j in i..n_psi {
                let scale = w * psi[i] * psi[j];
                crate::linalg::add_scaled_view(
                    t1.view_mut((i * n_x, j * n_x), (n_x, n_x)),
                    scale,
                    &b,
                );
            }
            t2.rows_mut(i * n_x, n_x).axpy(w * psi[i], &c, T::one());
        }
        t3 += w * mf.dot(&mf);
    }

    // Mirror the strict upper block triangle.
    for i in 1..n_psi {
        for j in 0..i {
            for r in 0..n_x {
                for c in 0..n_x {
                    t1[(i * n_x + r, j * n_x + c)] = t1[(j * n_x + c, i * n_x + r)];
                }
            }
        }
    }

    Ok(NormalEquations {
        t1,
        t2,
        t3,
        n_x,
        n_psi,
    })
}

/// Result of a least-squares projection solve.
#[derive(Clone, Debug)]
pub struct LspgSolve<T> {
    pub solution: SpectralSolution<T>,
    /// Optimal objective value `T3 - T2^T u`.
    pub objective: T,
    /// Cheap two-norm condition estimate of `T1` from the Cholesky diagonal
    /// (absent for the conjugate-gradient path).
    pub condition_estimate: Option<T>,
    /// Set when the condition estimate exceeds 1e14. The solve still
    /// proceeds; no regularization is applied.
    pub conditioning_warning: bool,
}

/// Threshold above which a conditioning warning is attached.
pub const CONDITION_WARN_THRESHOLD: f64 = 1e14;

/// Solve the normal equations by symmetric factorization with one step of
/// iterative refinement.
pub fn solve_lspg<T: Scalar>(
    ne: &NormalEquations<T>,
    basis: &Basis<T>,
) -> Result<LspgSolve<T>> {
    assert_eq!(basis.dim(), ne.n_psi(), "basis does not match the assembled equations");

    let chol = Cholesky::new(ne.t1.clone()).ok_or_else(|| {
        let eigs = ne.t1.clone().symmetric_eigenvalues();
        let smallest = eigs.iter().cloned().fold(T::max_value().unwrap(), T::min);
        Error::SingularSystem {
            smallest_pivot: approx_f64(smallest),
        }
    })?;

    let mut u = chol.solve(&ne.t2);
    for _ in 0..2 {
        let mut residual = ne.t2.clone();
        residual.gemv(-T::one(), &ne.t1, &u, T::one());
        u += chol.solve(&residual);
    }

    let l = chol.l();
    let mut dmin = T::max_value().unwrap();
    let mut dmax = T::zero();
    for i in 0..l.nrows() {
        dmin = dmin.min(l[(i, i)]);
        dmax = dmax.max(l[(i, i)]);
    }
    let cond = (dmax / dmin) * (dmax / dmin);

    let objective = ne.t3 - ne.t2.dot(&u);
    Ok(LspgSolve {
        solution: SpectralSolution::new(basis.clone(), ne.n_x(), u),
        objective,
        condition_estimate: Some(cond),
        conditioning_warning: approx_f64(cond) > CONDITION_WARN_THRESHOLD,
    })
}

/// Solve the normal equations with plain conjugate gradients (relative
/// residual tolerance on `T2`); intended for the timing studies.
pub fn solve_lspg_cg<T: Scalar>(
    ne: &NormalEquations<T>,
    basis: &Basis<T>,
    rel_tol: T,
    max_iter: usize,
) -> Result<LspgSolve<T>> {
    assert_eq!(basis.dim(), ne.n_psi(), "basis does not match the assembled equations");
    let dim = ne.dim();
    let target = ne.t2.norm() * rel_tol;

    let mut x = DVector::zeros(dim);
    let mut r = ne.t2.clone();
    let mut p = r.clone();
    let mut rs = r.dot(&r);

    let mut iter = 0;
    while rs.sqrt() > target && iter < max_iter {
        let ap = &ne.t1 * &p;
        let denom = p.dot(&ap);
        if !(denom > T::zero()) {
            return Err(Error::SingularSystem {
                smallest_pivot: approx_f64(denom),
            });
        }
        let alpha = rs / denom;
        x.axpy(alpha, &p, T::one());
        r.axpy(-alpha, &ap, T::one());
        let rs_new = r.dot(&r);
        p = &r + &p * (rs_new / rs);
        rs = rs_new;
        iter += 1;
    }

    let objective = ne.t3 - ne.t2.dot(&x);
    Ok(LspgSolve {
        solution: SpectralSolution::new(basis.clone(), ne.n_x(), x),
        objective,
        condition_estimate: None,
        conditioning_warning: false,
    })
}

/// Assemble the stochastic Galerkin system
/// `E[psi psi^T (x) A] u = E[psi (x) f]` by quadrature.
pub fn assemble_galerkin<T: Scalar>(
    sys: &ParamSystem<T>,
    basis: &Basis<T>,
    rule: &QuadratureRule<T>,
) -> Result<(DMatrix<T>, DVector<T>)> {
    let n_x = sys.n_x();
    let n_psi = basis.dim();
    let dim = n_x * n_psi;
    let mut matrix = DMatrix::zeros(dim, dim);
    let mut rhs = DVector::zeros(dim);

    for (xi, w) in rule.iter() {
        let a = sys.eval_a(xi);
        let f = sys.eval_f(xi);
        let psi = basis.evaluate(xi);
        for i in 0..n_psi {
            for j in 0..n_psi {
                let scale = w * psi[i] * psi[j];
                crate::linalg::add_scaled_view(
                    matrix.view_mut((i * n_x, j * n_x), (n_x, n_x)),
                    scale,
                    &a,
                );
            }
            rhs.rows_mut(i * n_x, n_x).axpy(w * psi[i], &f, T::one());
        }
    }
    Ok((matrix, rhs))
}

/// LU solve of a coupled system with one step of iterative refinement.
pub fn solve_linear_system<T: Scalar>(matrix: &DMatrix<T>, rhs: &DVector<T>) -> Result<DVector<T>> {
    let lu = matrix.clone().lu();
    let mut u = lu.solve(rhs).ok_or_else(|| {
        let upper = lu.u();
        let mut smallest = T::max_value().unwrap();
        for i in 0..upper.nrows() {
            smallest = smallest.min(upper[(i, i)].abs());
        }
        Error::SingularSystem {
            smallest_pivot: approx_f64(smallest),
        }
    })?;
    // One step of iterative refinement keeps the algebraic residual near
    // machine precision even for moderately conditioned systems.
    let mut residual = rhs.clone();
    residual.gemv(-T::one(), matrix, &u, T::one());
    if let Some(correction) = lu.solve(&residual) {
        u += correction;
    }
    Ok(u)
}

/// Stochastic Galerkin projection: enforce `E[psi (x) r] = 0`. Valid for
/// non-SPD operators too; no optimality is implied there.
pub fn solve_stochastic_galerkin<T: Scalar>(
    sys: &ParamSystem<T>,
    basis: &Basis<T>,
    rule: &QuadratureRule<T>,
) -> Result<SpectralSolution<T>> {
    let (matrix, rhs) = assemble_galerkin(sys, basis, rule)?;
    let u = solve_linear_system(&matrix, &rhs)?;
    Ok(SpectralSolution::new(basis.clone(), sys.n_x(), u))
}

/// Pseudo-spectral projection approximated by quadrature:
/// `u_i = sum_k w_k psi_i(xi_k) A(xi_k)^{-1} f(xi_k)`. One LU factorization
/// per node, reused across all basis indices.
pub fn solve_pseudospectral<T: Scalar>(
    sys: &ParamSystem<T>,
    basis: &Basis<T>,
    rule: &QuadratureRule<T>,
) -> Result<SpectralSolution<T>> {
    let n_x = sys.n_x();
    let n_psi = basis.dim();
    let mut coeffs = DVector::zeros(n_x * n_psi);

    for (k, (xi, w)) in rule.iter().enumerate() {
        let a = sys.eval_a(xi);
        let f = sys.eval_f(xi);
        let lu = a.lu();
        let u_k = lu.solve(&f).ok_or_else(|| Error::NodeFactorization {
            node: k,
            xi: approx_f64(xi),
            reason: "LU solve failed (singular matrix)".into(),
        })?;
        let psi = basis.evaluate(xi);
        for i in 0..n_psi {
            coeffs.rows_mut(i * n_x, n_x).axpy(w * psi[i], &u_k, T::one());
        }
    }
    Ok(SpectralSolution::new(basis.clone(), n_x, coeffs))
}

/// Warning threshold on the recorded gPC reconstruction error of an analytic
/// assembly input.
pub const TRUNCATION_WARN_TOL: f64 = 1e-8;

/// Analytically assembled Galerkin system.
#[derive(Clone, Debug)]
pub struct AnalyticSystem<T> {
    pub matrix: DMatrix<T>,
    pub rhs: DVector<T>,
    /// Reconstruction error recorded on the operator expansion.
    pub truncation_error: T,
}

impl<T: Scalar> AnalyticSystem<T> {
    pub fn truncation_warning(&self) -> bool {
        approx_f64(self.truncation_error) > TRUNCATION_WARN_TOL
    }
}

/// Assemble the Galerkin matrix from the operator's gPC expansion and the
/// order-3 moment tensors: block `(i, j)` is `sum_l G3[i][j][l] A_l`.
pub fn assemble_analytic_sg<T: Scalar>(
    exp: &OperatorExpansion<T>,
    tensors: &MomentTensors<T>,
) -> Result<AnalyticSystem<T>> {
    let n_psi = exp.basis().dim();
    let needed = n_psi.max(exp.n_a()).max(exp.n_b());
    if tensors.dim() < needed {
        return Err(Error::TensorTooSmall {
            needed,
            available: tensors.dim(),
        });
    }

    let n_x = exp.a_coeff(0).nrows();
    let dim = n_x * n_psi;
    let mut matrix = DMatrix::zeros(dim, dim);
    for l in 0..exp.n_a() {
        let slice = tensors.g3_slice(l)?;
        let a_l = exp.a_coeff(l);
        for i in 0..n_psi {
            for j in 0..n_psi {
                let scale = slice[(i, j)];
                if scale != T::zero() {
                    crate::linalg::add_scaled_view(
                        matrix.view_mut((i * n_x, j * n_x), (n_x, n_x)),
                        scale,
                        a_l,
                    );
                }
            }
        }
    }

    let g2 = tensors.g2();
    let mut rhs = DVector::zeros(dim);
    for i in 0..n_psi {
        for l in 0..exp.n_b() {
            let scale = g2[(i, l)];
            if scale != T::zero() {
                rhs.rows_mut(i * n_x, n_x).axpy(scale, exp.f_coeff(l), T::one());
            }
        }
    }

    Ok(AnalyticSystem {
        matrix,
        rhs,
        truncation_error: exp.reconstruction_error(),
    })
}

/// Analytically assembled normal equations for the identity weighting.
#[derive(Clone, Debug)]
pub struct AnalyticNormalEquations<T> {
    pub normal_equations: NormalEquations<T>,
    pub truncation_error: T,
}

impl<T: Scalar> AnalyticNormalEquations<T> {
    pub fn truncation_warning(&self) -> bool {
        approx_f64(self.truncation_error) > TRUNCATION_WARN_TOL
    }
}

/// Assemble `T1`, `T2`, `T3` of the residual-minimizing projection from the
/// gPC expansions and the order-4 moment tensors: the `(i, j)` block of `T1`
/// is the double sum `sum_k sum_l G4[i][j][k][l] A_k^T A_l` over all
/// `n_a^2` coefficient pairs.
pub fn assemble_analytic_lspg_ata<T: Scalar>(
    exp: &OperatorExpansion<T>,
    tensors: &MomentTensors<T>,
) -> Result<AnalyticNormalEquations<T>> {
    let n_psi = exp.basis().dim();
    let needed = n_psi.max(exp.n_a()).max(exp.n_b());
    if tensors.dim() < needed {
        return Err(Error::TensorTooSmall {
            needed,
            available: tensors.dim(),
        });
    }

    let n_x = exp.a_coeff(0).nrows();
    let dim = n_x * n_psi;
    let mut t1 = DMatrix::zeros(dim, dim);
    for k in 0..exp.n_a() {
        for l in 0..exp.n_a() {
            let slice = tensors.g4_slice(k, l)?;
            let prod = exp.a_coeff(k).tr_mul(exp.a_coeff(l));
            for i in 0..n_psi {
                for j in 0..n_psi {
                    let scale = slice[(i, j)];
                    if scale != T::zero() {
                        crate::linalg::add_scaled_view(
                            t1.view_mut((i * n_x, j * n_x), (n_x, n_x)),
                            scale,
                            &prod,
                        );
                    }
                }
            }
        }
    }
    // The double sum is symmetric only up to roundoff; restore it exactly.
    let t1t = t1.transpose();
    t1 += &t1t;
    t1 *= real::<T>(0.5);

    let mut t2 = DVector::zeros(dim);
    for k in 0..exp.n_a() {
        let slice = tensors.g3_slice(k)?;
        for l in 0..exp.n_b() {
            let v = exp.a_coeff(k).tr_mul(exp.f_coeff(l));
            for i in 0..n_psi {
                let scale = slice[(i, l)];
                if scale != T::zero() {
                    t2.rows_mut(i * n_x, n_x).axpy(scale, &v, T::one());
                }
            }
        }
    }

    let g2 = tensors.g2();
    let mut t3 = T::zero();
    for k in 0..exp.n_b() {
        for l in 0..exp.n_b() {
            t3 += g2[(k, l)] * exp.f_coeff(k).dot(exp.f_coeff(l));
        }
    }

    Ok(AnalyticNormalEquations {
        normal_equations: NormalEquations {
            t1,
            t2,
            t3,
            n_x,
            n_psi,
        },
        truncation_error: exp.reconstruction_error(),
    })
}

/// Galerkin residual `E[psi (x) r(u~)]` evaluated by quadrature.
pub fn galerkin_residual<T: Scalar>(
    sys: &ParamSystem<T>,
    sol: &SpectralSolution<T>,
    rule: &QuadratureRule<T>,
) -> Result<DVector<T>> {
    let n_x = sys.n_x();
    let n_psi = sol.basis().dim();
    let mut acc = DVector::zeros(n_x * n_psi);
    for (xi, w) in rule.iter() {
        let r = crate::sysmodel::evaluate_residual(sys, sol, xi);
        let psi = sol.basis().evaluate(xi);
        for i in 0..n_psi {
            acc.rows_mut(i * n_x, n_x).axpy(w * psi[i], &r, T::one());
        }
    }
    Ok(acc)
}

/// Petrov-Galerkin residual `E[phi^T (Mf - (psi^T(x)MA) u)]` with test basis
/// `phi_i = psi_i (x) MA`, evaluated node by node; the test basis is never
/// materialized.
pub fn petrov_galerkin_residual<T: Scalar>(
    sys: &ParamSystem<T>,
    sol: &SpectralSolution<T>,
    rule: &QuadratureRule<T>,
    weighting: &WeightingScheme<T>,
) -> Result<DVector<T>> {
    let n_x = sys.n_x();
    let n_psi = sol.basis().dim();
    let mut acc = DVector::zeros(n_x * n_psi);
    for (k, (xi, w)) in rule.iter().enumerate() {
        let a = sys.eval_a(xi);
        let f = sys.eval_f(xi);
        let (ma, mf) = weighting.apply(k, xi, &a, &f)?;
        let mut mr = mf;
        mr.gemv(-T::one(), &ma, &sol.evaluate(xi), T::one());
        let contribution = ma.tr_mul(&mr);
        let psi = sol.basis().evaluate(xi);
        for i in 0..n_psi {
            acc.rows_mut(i * n_x, n_x)
                .axpy(w * psi[i], &contribution, T::one());
        }
    }
    Ok(acc)
}
