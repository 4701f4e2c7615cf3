//! Weighted norms, the four relative error measures, the reference-solution
//! oracle, and stability-constant estimation with norm-equivalence auditing.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fem::QoIOperator;
use crate::gpc::{gauss_rule, ParameterSpace, PolynomialFamily, QuadratureRule};
use crate::scalar::{approx_f64, real, Scalar};
use crate::special::{gamma_quantile, normal_quantile};
use crate::sysmodel::{ParamSystem, SpectralSolution};

/// Weight `Theta` of a squared norm `E[v^T Theta v]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormWeight {
    /// `Theta = A`: energy norm; requires a symmetric positive definite operator.
    Energy,
    /// `Theta = A^T A`: the norm the residual induces on the solution error.
    OperatorSquared,
    /// `Theta = I`: plain l2 norm.
    Euclidean,
    /// `Theta = F^T F`: output seminorm.
    Goal,
}

impl NormWeight {
    pub const ALL: [NormWeight; 4] = [
        NormWeight::Energy,
        NormWeight::OperatorSquared,
        NormWeight::Euclidean,
        NormWeight::Goal,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            NormWeight::Energy => "A",
            NormWeight::OperatorSquared => "AtA",
            NormWeight::Euclidean => "2",
            NormWeight::Goal => "FtF",
        }
    }
}

/// Squared weighted norm `E[v^T Theta v]` of a parameter-dependent vector,
/// evaluated by quadrature.
pub fn weighted_norm_sq<T: Scalar>(
    mut v: impl FnMut(T) -> DVector<T>,
    weight: NormWeight,
    sys: &ParamSystem<T>,
    qoi: Option<&QoIOperator<T>>,
    rule: &QuadratureRule<T>,
) -> Result<T> {
    if weight == NormWeight::Energy && !sys.is_spd() {
        return Err(Error::SpdViolation(
            "the energy norm requires a symmetric positive definite operator".into(),
        ));
    }
    if weight == NormWeight::Goal && qoi.is_none() {
        return Err(Error::Config(
            "the output seminorm requires an output functional".into(),
        ));
    }
    crate::gpc::expectation(
        |xi| {
            let x = v(xi);
            match weight {
                NormWeight::Euclidean => x.dot(&x),
                NormWeight::Energy => {
                    let ax = sys.eval_a(xi) * &x;
                    ax.dot(&x)
                }
                NormWeight::OperatorSquared => {
                    let ax = sys.eval_a(xi) * &x;
                    ax.dot(&ax)
                }
                NormWeight::Goal => {
                    let fx = qoi.expect("checked above").apply(xi, &x);
                    fx.dot(&fx)
                }
            }
        },
        rule,
    )
}

/// Exact per-node samples `u(xi_k) = A(xi_k)^{-1} f(xi_k)` on a reference
/// rule, together with the matrices and norms the error measures need.
#[derive(Clone, Debug)]
pub struct ReferenceSolution<T> {
    rule: QuadratureRule<T>,
    samples: Vec<DVector<T>>,
    mats: Vec<DMatrix<T>>,
    norm_u_sq: T,
    norm_u_energy_sq: Option<T>,
    norm_f_sq: T,
    max_rel_residual: T,
    spd: bool,
    n_x: usize,
}

impl<T: Scalar> ReferenceSolution<T> {
    pub fn rule(&self) -> &QuadratureRule<T> {
        &self.rule
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn sample(&self, k: usize) -> &DVector<T> {
        &self.samples[k]
    }

    pub fn matrix(&self, k: usize) -> &DMatrix<T> {
        &self.mats[k]
    }

    pub fn is_spd(&self) -> bool {
        self.spd
    }

    /// `E[u^T u]`
    pub fn norm_u_sq(&self) -> T {
        self.norm_u_sq
    }

    /// `E[u^T A u]` for SPD systems.
    pub fn norm_u_energy_sq(&self) -> Option<T> {
        self.norm_u_energy_sq
    }

    /// `E[f^T f]` (which also equals `E[u^T A^T A u]`).
    pub fn norm_f_sq(&self) -> T {
        self.norm_f_sq
    }

    /// Largest relative residual `|f - A u| / |f|` over the samples.
    pub fn max_rel_residual(&self) -> T {
        self.max_rel_residual
    }
}

/// Solve the system exactly (per node) on the reference rule.
pub fn reference_solution<T: Scalar>(
    sys: &ParamSystem<T>,
    rule: &QuadratureRule<T>,
) -> Result<ReferenceSolution<T>> {
    let mut samples = Vec::with_capacity(rule.n_q());
    let mut mats = Vec::with_capacity(rule.n_q());
    let mut norm_u_sq = T::zero();
    let mut norm_u_energy_sq = T::zero();
    let mut norm_f_sq = T::zero();
    let mut max_rel_residual = T::zero();

    for (k, (xi, w)) in rule.iter().enumerate() {
        let a = sys.eval_a(xi);
        let f = sys.eval_f(xi);
        let lu = a.clone().lu();
        let mut u = lu.solve(&f).ok_or_else(|| Error::NodeFactorization {
            node: k,
            xi: approx_f64(xi),
            reason: "LU solve failed (singular matrix)".into(),
        })?;
        // One refinement step keeps each sample's residual near roundoff.
        let mut residual = f.clone();
        residual.gemv(-T::one(), &a, &u, T::one());
        if let Some(correction) = lu.solve(&residual) {
            u += correction;
        }
        let mut check = f.clone();
        check.gemv(-T::one(), &a, &u, T::one());
        let f_norm = f.norm();
        if f_norm > T::zero() {
            max_rel_residual = max_rel_residual.max(check.norm() / f_norm);
        }

        norm_u_sq += w * u.dot(&u);
        norm_f_sq += w * f.dot(&f);
        if sys.is_spd() {
            let au = &a * &u;
            norm_u_energy_sq += w * au.dot(&u);
        }

        samples.push(u);
        mats.push(a);
    }

    Ok(ReferenceSolution {
        rule: rule.clone(),
        samples,
        mats,
        norm_u_sq,
        norm_u_energy_sq: sys.is_spd().then_some(norm_u_energy_sq),
        norm_f_sq,
        max_rel_residual,
        spd: sys.is_spd(),
        n_x: sys.n_x(),
    })
}

/// The four relative error measures of a spectral solution (squared relative
/// norms). The energy measure is present only for SPD systems; the output
/// measure only when a functional is supplied.
#[derive(Clone, Debug)]
pub struct ErrorReport<T> {
    pub eta_a: Option<T>,
    pub eta_r: T,
    pub eta_e: T,
    pub eta_q: Option<T>,
    pub assembly_seconds: f64,
    pub solve_seconds: f64,
}

/// Evaluate the error measures of `sol` against the reference samples:
/// `eta_r = |e|^2_{AtA} / |f|^2_2`, `eta_e = |e|^2_2 / |u|^2_2`,
/// `eta_A = |e|^2_A / |u|^2_A`, `eta_Q = |Fe|^2_2 / |Fu|^2_2`.
pub fn error_report<T: Scalar>(
    sol: &SpectralSolution<T>,
    reference: &ReferenceSolution<T>,
    qoi: Option<&QoIOperator<T>>,
) -> Result<ErrorReport<T>> {
    if sol.n_x() != reference.n_x() {
        return Err(Error::DimensionMismatch(format!(
            "solution has {} states, reference has {}",
            sol.n_x(),
            reference.n_x()
        )));
    }

    let mut num_e = T::zero();
    let mut num_r = T::zero();
    let mut num_a = T::zero();
    let mut num_q = T::zero();
    let mut den_q = T::zero();

    for (k, (xi, w)) in reference.rule.iter().enumerate() {
        let u = &reference.samples[k];
        let e = u - sol.evaluate(xi);
        num_e += w * e.dot(&e);
        let ae = &reference.mats[k] * &e;
        num_r += w * ae.dot(&ae);
        if reference.spd {
            num_a += w * ae.dot(&e);
        }
        if let Some(f_op) = qoi {
            let fe = f_op.apply(xi, &e);
            num_q += w * fe.dot(&fe);
            let fu = f_op.apply(xi, u);
            den_q += w * fu.dot(&fu);
        }
    }

    if !(reference.norm_f_sq > T::zero()) {
        return Err(Error::ZeroDenominator {
            quantity: "right-hand side norm",
        });
    }
    if !(reference.norm_u_sq > T::zero()) {
        return Err(Error::ZeroDenominator {
            quantity: "solution norm",
        });
    }

    let eta_a = match reference.norm_u_energy_sq {
        Some(den) if den > T::zero() => Some(num_a / den),
        Some(_) => {
            return Err(Error::ZeroDenominator {
                quantity: "solution energy norm",
            })
        }
        None => None,
    };
    let eta_q = match qoi {
        Some(_) => {
            if !(den_q > T::zero()) {
                return Err(Error::ZeroDenominator {
                    quantity: "output norm",
                });
            }
            Some(num_q / den_q)
        }
        None => None,
    };

    Ok(ErrorReport {
        eta_a,
        eta_r: num_r / reference.norm_f_sq,
        eta_e: num_e / reference.norm_u_sq,
        eta_q,
        assembly_seconds: 0.0,
        solve_seconds: 0.0,
    })
}

/// A stability-constant entry: finite value or unbounded (a zero singular
/// value in the denominator).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CBound<T> {
    Finite(T),
    Unbounded,
}

impl<T: Scalar> CBound<T> {
    pub fn is_finite(&self) -> bool {
        matches!(self, CBound::Finite(_))
    }

    pub fn value(&self) -> Option<T> {
        match self {
            CBound::Finite(v) => Some(*v),
            CBound::Unbounded => None,
        }
    }
}

/// Singular-value extremes of `A(xi)` and `F(xi)` over a sample set, and the
/// norm-equivalence constants they induce.
///
/// The extremes are sample estimates, never exact essential bounds: the
/// shipped operators are unbounded over the full parameter range.
#[derive(Clone, Debug)]
pub struct StabilityEstimate<T> {
    sigma_min_a: T,
    sigma_max_a: T,
    sigma_f: Option<(T, T)>,
    n_outputs: Option<usize>,
    state_dim: usize,
    sample_count: usize,
}

impl<T: Scalar> StabilityEstimate<T> {
    pub fn sigma_min_a(&self) -> T {
        self.sigma_min_a
    }

    pub fn sigma_max_a(&self) -> T {
        self.sigma_max_a
    }

    /// `(sigma_min, sigma_max)` of the output functional, when present.
    pub fn sigma_f(&self) -> Option<(T, T)> {
        self.sigma_f
    }

    pub fn sample_count(&self) -> usize {
        self.sample_count
    }

    pub fn n_outputs(&self) -> Option<usize> {
        self.n_outputs
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    /// Stability constant `C` in `|x|^2_{Theta'} <= C |x|^2_{Theta}`.
    /// Diagonal entries are exactly one. Entries that divide by a zero
    /// singular value are unbounded; entries needing an absent functional
    /// return `None`.
    pub fn constant(&self, theta: NormWeight, theta_prime: NormWeight) -> Option<CBound<T>> {
        use NormWeight::*;
        if theta == theta_prime {
            return Some(CBound::Finite(T::one()));
        }
        let smin_a = self.sigma_min_a;
        let smax_a = self.sigma_max_a;
        let ratio = |num: T, den: T| {
            if den > T::zero() {
                Some(CBound::Finite(num / den))
            } else {
                Some(CBound::Unbounded)
            }
        };
        match (theta, theta_prime) {
            (Energy, OperatorSquared) => Some(CBound::Finite(smax_a)),
            (Energy, Euclidean) => ratio(T::one(), smin_a),
            (Energy, Goal) => {
                let (_, smax_f) = self.sigma_f?;
                ratio(smax_f * smax_f, smin_a)
            }
            (OperatorSquared, Energy) => ratio(T::one(), smin_a),
            (OperatorSquared, Euclidean) => ratio(T::one(), smin_a * smin_a),
            (OperatorSquared, Goal) => {
                let (_, smax_f) = self.sigma_f?;
                ratio(smax_f * smax_f, smin_a * smin_a)
            }
            (Euclidean, Energy) => Some(CBound::Finite(smax_a)),
            (Euclidean, OperatorSquared) => Some(CBound::Finite(smax_a * smax_a)),
            (Euclidean, Goal) => {
                let (_, smax_f) = self.sigma_f?;
                Some(CBound::Finite(smax_f * smax_f))
            }
            (Goal, Energy) => {
                let (smin_f, _) = self.sigma_f?;
                ratio(smax_a, smin_f * smin_f)
            }
            (Goal, OperatorSquared) => {
                let (smin_f, _) = self.sigma_f?;
                ratio(smax_a * smax_a, smin_f * smin_f)
            }
            (Goal, Euclidean) => {
                let (smin_f, _) = self.sigma_f?;
                ratio(T::one(), smin_f * smin_f)
            }
            _ => unreachable!("diagonal handled above"),
        }
    }

    /// Full 4x4 table in the order (Energy, OperatorSquared, Euclidean, Goal),
    /// rows indexed by `Theta` and columns by `Theta'`.
    pub fn table(&self) -> [[Option<CBound<T>>; 4]; 4] {
        let mut out = [[None; 4]; 4];
        for (i, &theta) in NormWeight::ALL.iter().enumerate() {
            for (j, &theta_prime) in NormWeight::ALL.iter().enumerate() {
                out[i][j] = self.constant(theta, theta_prime);
            }
        }
        out
    }
}

/// Estimate singular-value extremes over a sample set of parameter values.
/// When the functional has fewer outputs than states its null space is
/// nontrivial, so `sigma_min(F)` is exactly zero regardless of the samples.
pub fn stability_constants<T: Scalar>(
    sys: &ParamSystem<T>,
    qoi: Option<&QoIOperator<T>>,
    samples: &[T],
) -> Result<StabilityEstimate<T>> {
    if samples.is_empty() {
        return Err(Error::Config(
            "stability estimation needs a nonempty sample set".into(),
        ));
    }

    let mut smin_a = T::max_value().unwrap();
    let mut smax_a = T::zero();
    let mut smin_f = T::max_value().unwrap();
    let mut smax_f = T::zero();

    for &xi in samples {
        let a = sys.eval_a(xi);
        let sv = a.singular_values();
        for &s in sv.iter() {
            smin_a = smin_a.min(s);
            smax_a = smax_a.max(s);
        }
        if let Some(f_op) = qoi {
            let f = f_op.evaluate(xi);
            let sv = f.singular_values();
            for &s in sv.iter() {
                smin_f = smin_f.min(s);
                smax_f = smax_f.max(s);
            }
        }
    }

    let sigma_f = qoi.map(|f_op| {
        if f_op.n_outputs() < sys.n_x() {
            (T::zero(), smax_f)
        } else {
            (smin_f, smax_f)
        }
    });

    Ok(StabilityEstimate {
        sigma_min_a: smin_a,
        sigma_max_a: smax_a,
        sigma_f,
        n_outputs: qoi.map(|f_op| f_op.n_outputs()),
        state_dim: sys.n_x(),
        sample_count: samples.len(),
    })
}

/// Parameter samples for the stability estimate: the rule's nodes plus an
/// equispaced probe grid over the central 99.99% probability mass. The grid
/// count should be even so symmetric zeros of odd functionals are not probed
/// exactly.
pub fn probe_points<T: Scalar>(
    space: &ParameterSpace<T>,
    rule: &QuadratureRule<T>,
    grid: usize,
) -> Vec<T> {
    let mut points: Vec<T> = rule.nodes().to_vec();
    if grid == 0 {
        return points;
    }
    let tail = 5e-5;
    let (lo, hi) = match space.family() {
        PolynomialFamily::HermiteStandardNormal => {
            let z = normal_quantile(1.0 - tail);
            (-z, z)
        }
        PolynomialFamily::GeneralizedLaguerre { alpha } => {
            let shape = approx_f64(alpha) + 1.0;
            (gamma_quantile(shape, tail), gamma_quantile(shape, 1.0 - tail))
        }
    };
    let step = (hi - lo) / (grid - 1) as f64;
    for i in 0..grid {
        points.push(real::<T>(lo + step * i as f64));
    }
    points
}

/// Outcome of a norm-equivalence audit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AuditVerdict {
    Satisfied,
    Violated,
    /// The stability constant is unbounded; nothing to check.
    UnboundedSkipped,
}

#[derive(Clone, Debug)]
pub struct AuditOutcome<T> {
    pub verdict: AuditVerdict,
    /// Realized ratio `|e|^2_{Theta'} / |e|^2_{Theta}`.
    pub ratio: Option<T>,
    /// The estimated stability constant, when finite.
    pub bound: Option<T>,
}

fn error_norm_sq<T: Scalar>(
    sol: &SpectralSolution<T>,
    reference: &ReferenceSolution<T>,
    weight: NormWeight,
    qoi: Option<&QoIOperator<T>>,
) -> Result<T> {
    if weight == NormWeight::Energy && !reference.spd {
        return Err(Error::SpdViolation(
            "the energy norm requires a symmetric positive definite operator".into(),
        ));
    }
    if weight == NormWeight::Goal && qoi.is_none() {
        return Err(Error::Config(
            "the output seminorm requires an output functional".into(),
        ));
    }
    let mut total = T::zero();
    for (k, (xi, w)) in reference.rule.iter().enumerate() {
        let e = &reference.samples[k] - sol.evaluate(xi);
        let term = match weight {
            NormWeight::Euclidean => e.dot(&e),
            NormWeight::Energy => {
                let ae = &reference.mats[k] * &e;
                ae.dot(&e)
            }
            NormWeight::OperatorSquared => {
                let ae = &reference.mats[k] * &e;
                ae.dot(&ae)
            }
            NormWeight::Goal => {
                let fe = qoi.expect("checked above").apply(xi, &e);
                fe.dot(&fe)
            }
        };
        total += w * term;
    }
    Ok(total)
}

/// Check the pointwise norm bound `|e|^2_{Theta'} <= C |e|^2_{Theta}` for the
/// solution error of `sol`, against the sampled stability estimate.
pub fn audit_norm_equivalence<T: Scalar>(
    sol: &SpectralSolution<T>,
    reference: &ReferenceSolution<T>,
    estimate: &StabilityEstimate<T>,
    theta: NormWeight,
    theta_prime: NormWeight,
    qoi: Option<&QoIOperator<T>>,
) -> Result<AuditOutcome<T>> {
    let bound = estimate
        .constant(theta, theta_prime)
        .ok_or_else(|| Error::Config("the requested entry needs an output functional".into()))?;

    let c = match bound {
        CBound::Unbounded => {
            return Ok(AuditOutcome {
                verdict: AuditVerdict::UnboundedSkipped,
                ratio: None,
                bound: None,
            })
        }
        CBound::Finite(c) => c,
    };

    let denom = error_norm_sq(sol, reference, theta, qoi)?;
    let numer = error_norm_sq(sol, reference, theta_prime, qoi)?;
    if !(denom > T::zero()) {
        // A vanishing Theta-error with nonvanishing Theta'-error violates any
        // finite bound; both vanishing satisfies it trivially.
        let verdict = if numer > T::zero() {
            AuditVerdict::Violated
        } else {
            AuditVerdict::Satisfied
        };
        return Ok(AuditOutcome {
            verdict,
            ratio: None,
            bound: Some(c),
        });
    }

    let ratio = numer / denom;
    Ok(AuditOutcome {
        verdict: if ratio <= c {
            AuditVerdict::Satisfied
        } else {
            AuditVerdict::Violated
        },
        ratio: Some(ratio),
        bound: Some(c),
    })
}

/// Reference rule sized for a study rule: at least twice the node count.
pub fn reference_rule<T: Scalar>(
    space: &ParameterSpace<T>,
    study_rule: &QuadratureRule<T>,
) -> Result<QuadratureRule<T>> {
    gauss_rule(space, 2 * study_rule.n_q())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::GKind;
    use crate::gpc::{build_basis, gauss_rule};
    use nalgebra::DMatrix;

    fn hermite() -> ParameterSpace<f64> {
        ParameterSpace::standard_normal()
    }

    fn spd_system() -> ParamSystem<f64> {
        ParamSystem::new(
            2,
            |xi: f64| {
                let s = (0.3 * xi).exp();
                DMatrix::from_row_slice(2, 2, &[2.0 * s, 0.4, 0.4, 1.0 + 0.5 * s])
            },
            |xi: f64| DVector::from_vec(vec![1.0, (0.2 * xi).exp()]),
            true,
        )
    }

    #[test]
    fn weighted_norms_trivial_cases() {
        let sys = spd_system();
        let rule = gauss_rule(&hermite(), 20).unwrap();

        let zero = weighted_norm_sq(
            |_| DVector::zeros(2),
            NormWeight::OperatorSquared,
            &sys,
            None,
            &rule,
        )
        .unwrap();
        assert_eq!(zero, 0.0);

        let c = DVector::from_vec(vec![3.0, -4.0]);
        let l2 = weighted_norm_sq(|_| c.clone(), NormWeight::Euclidean, &sys, None, &rule).unwrap();
        assert!((l2 - 25.0).abs() < 1e-12);
    }

    #[test]
    fn operator_squared_norm_of_exact_solution_is_rhs_norm() {
        // |A^{-1} f|^2_{AtA} = E[f^T f]
        let sys = spd_system();
        let rule = gauss_rule(&hermite(), 25).unwrap();
        let lhs = weighted_norm_sq(
            |xi| {
                let a = sys.eval_a(xi);
                a.lu().solve(&sys.eval_f(xi)).unwrap()
            },
            NormWeight::OperatorSquared,
            &sys,
            None,
            &rule,
        )
        .unwrap();
        let rhs = crate::gpc::expectation(
            |xi: f64| {
                let f = sys.eval_f(xi);
                f.dot(&f)
            },
            &rule,
        )
        .unwrap();
        assert!((lhs - rhs).abs() < 1e-11 * rhs);
    }

    #[test]
    fn energy_norm_requires_spd() {
        let sys = ParamSystem::new(
            1,
            |_| DMatrix::from_element(1, 1, 1.0),
            |_| DVector::from_element(1, 1.0),
            false,
        );
        let rule = gauss_rule(&hermite(), 5).unwrap();
        assert!(matches!(
            weighted_norm_sq(
                |_| DVector::from_element(1, 1.0),
                NormWeight::Energy,
                &sys,
                None,
                &rule
            ),
            Err(Error::SpdViolation(_))
        ));
    }

    #[test]
    fn reference_solution_identity_and_scalar() {
        let rule = gauss_rule(&hermite(), 10).unwrap();

        let sys = ParamSystem::new(
            2,
            |_| DMatrix::identity(2, 2),
            |xi: f64| DVector::from_vec(vec![xi, 1.0]),
            true,
        );
        let reference = reference_solution(&sys, &rule).unwrap();
        for (k, (xi, _)) in rule.iter().enumerate() {
            let expected = DVector::from_vec(vec![xi, 1.0]);
            assert!((reference.sample(k) - expected).norm() < 1e-14);
        }

        let sys = ParamSystem::scalar(|xi: f64| (0.5 * xi).exp(), |_| 1.0);
        let reference = reference_solution(&sys, &rule).unwrap();
        for (k, (xi, _)) in rule.iter().enumerate() {
            assert!((reference.sample(k)[0] - (-0.5 * xi).exp()).abs() < 1e-13);
        }
        assert!(reference.max_rel_residual() < 1e-12);
    }

    #[test]
    fn error_report_trivial_solutions() {
        let basis = build_basis(&hermite(), 2);
        let rule = gauss_rule(&hermite(), 20).unwrap();

        // A = I and f = psi_1 v: the exact solution lies in the basis.
        let v = DVector::from_vec(vec![1.0, 2.0]);
        let vc = v.clone();
        let eval_basis = basis.clone();
        let sys = ParamSystem::new(
            2,
            |_| DMatrix::identity(2, 2),
            move |xi| &vc * eval_basis.evaluate(xi)[1],
            true,
        );
        let reference = reference_solution(&sys, &rule).unwrap();

        let mut coeffs = DVector::zeros(6);
        coeffs.rows_mut(2, 2).copy_from(&v);
        let interpolant = SpectralSolution::new(basis.clone(), 2, coeffs);
        let report = error_report(&interpolant, &reference, None).unwrap();
        assert!(report.eta_e < 1e-25);
        assert!(report.eta_r < 1e-25);
        assert!(report.eta_a.unwrap() < 1e-25);

        let zero = SpectralSolution::zero(basis, 2);
        let report = error_report(&zero, &reference, None).unwrap();
        assert!((report.eta_e - 1.0).abs() < 1e-13);
    }

    #[test]
    fn stability_table_structure() {
        let sys = spd_system();
        let rule = gauss_rule(&hermite(), 16).unwrap();
        let samples = probe_points(&hermite(), &rule, 32);

        // Rank-deficient functional: 1 output < 2 states.
        let qoi = QoIOperator::random_functional(1, 2, GKind::Sin, 5);
        let est = stability_constants(&sys, Some(&qoi), &samples).unwrap();
        let (smin_f, _) = est.sigma_f().unwrap();
        assert_eq!(smin_f, 0.0);
        for &theta_prime in &[
            NormWeight::Energy,
            NormWeight::OperatorSquared,
            NormWeight::Euclidean,
        ] {
            assert_eq!(
                est.constant(NormWeight::Goal, theta_prime),
                Some(CBound::Unbounded)
            );
        }
        for &theta in &NormWeight::ALL {
            assert_eq!(est.constant(theta, theta), Some(CBound::Finite(1.0)));
        }

        // Square full-rank functional: everything finite.
        let qoi = QoIOperator::random_functional(2, 2, GKind::Sin, 5);
        let est = stability_constants(&sys, Some(&qoi), &samples).unwrap();
        for row in est.table() {
            for entry in row {
                assert!(entry.unwrap().is_finite());
            }
        }
    }

    #[test]
    fn constant_multiple_of_identity_has_known_constants() {
        let sys = ParamSystem::new(
            2,
            |_| DMatrix::identity(2, 2) * 2.0,
            |_| DVector::from_vec(vec![1.0, 1.0]),
            true,
        );
        let est = stability_constants(&sys, None, &[0.0, 1.0, -1.0]).unwrap();
        assert!((est.sigma_min_a() - 2.0).abs() < 1e-14);
        assert!((est.sigma_max_a() - 2.0).abs() < 1e-14);
        // Theta = A, Theta' = AtA: C = sigma_max(A) = 2.
        match est.constant(NormWeight::Energy, NormWeight::OperatorSquared) {
            Some(CBound::Finite(c)) => assert!((c - 2.0).abs() < 1e-14),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn enlarging_the_sample_set_is_monotone() {
        let sys = spd_system();
        let small: Vec<f64> = vec![-1.0, 0.0, 1.0];
        let mut large = small.clone();
        large.extend([-3.0, -2.0, 2.0, 3.0]);
        let est_small = stability_constants(&sys, None, &small).unwrap();
        let est_large = stability_constants(&sys, None, &large).unwrap();
        assert!(est_large.sigma_max_a() >= est_small.sigma_max_a());
        assert!(est_large.sigma_min_a() <= est_small.sigma_min_a());
    }

    #[test]
    fn audit_diagonal_and_unbounded() {
        let sys = spd_system();
        let rule = gauss_rule(&hermite(), 20).unwrap();
        let reference = reference_solution(&sys, &rule).unwrap();
        let basis = build_basis(&hermite(), 1);
        let ne = crate::projection::assemble_normal_equations(
            &sys,
            &basis,
            &rule,
            &crate::projection::WeightingScheme::Identity,
        )
        .unwrap();
        let sol = crate::projection::solve_lspg(&ne, &basis).unwrap().solution;

        let est = stability_constants(&sys, None, &probe_points(&hermite(), &rule, 32)).unwrap();
        let outcome = audit_norm_equivalence(
            &sol,
            &reference,
            &est,
            NormWeight::Euclidean,
            NormWeight::Euclidean,
            None,
        )
        .unwrap();
        assert_eq!(outcome.verdict, AuditVerdict::Satisfied);
        assert!((outcome.ratio.unwrap() - 1.0).abs() < 1e-12);

        let qoi = QoIOperator::random_functional(1, 2, GKind::Xi, 9);
        let est = stability_constants(&sys, Some(&qoi), &probe_points(&hermite(), &rule, 32))
            .unwrap();
        let outcome = audit_norm_equivalence(
            &sol,
            &reference,
            &est,
            NormWeight::Goal,
            NormWeight::Euclidean,
            Some(&qoi),
        )
        .unwrap();
        assert_eq!(outcome.verdict, AuditVerdict::UnboundedSkipped);
    }

    #[test]
    fn audit_energy_to_euclidean_respects_sampled_bound() {
        let sys = spd_system();
        let rule = gauss_rule(&hermite(), 24).unwrap();
        let reference = reference_solution(&sys, &rule).unwrap();
        let basis = build_basis(&hermite(), 2);
        let sol = crate::projection::solve_stochastic_galerkin(&sys, &basis, &rule).unwrap();
        let est = stability_constants(&sys, None, &probe_points(&hermite(), &rule, 64)).unwrap();

        let outcome = audit_norm_equivalence(
            &sol,
            &reference,
            &est,
            NormWeight::Energy,
            NormWeight::Euclidean,
            None,
        )
        .unwrap();
        let ratio = outcome.ratio.unwrap();
        let bound = outcome.bound.unwrap();
        // 5% slack absorbs sampling error of the sigma estimate.
        assert!(
            ratio <= bound * 1.05,
            "ratio {ratio} exceeds sampled bound {bound}"
        );
    }
}
