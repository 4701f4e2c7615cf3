//! The shipped benchmark problems: three stochastic diffusion variants, a
//! convection-dominated convection-diffusion problem, and a scalar toy system
//! for divergence studies.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{
    apply_dirichlet, assemble_convection_diffusion, assemble_diffusion, assemble_mass,
    assemble_rhs_full, FieldForm, Mesh, QoIOperator, RandomFieldKL,
};
use crate::gpc::ParameterSpace;
use crate::scalar::{real, Scalar};
use crate::sysmodel::ParamSystem;

/// Viscosity of the convection-diffusion benchmark.
pub const CONVDIFF_VISCOSITY: f64 = 1.0 / 200.0;

/// Growth rate of the scalar toy coefficient `a(xi) = exp(0.3 xi)`.
pub const SCALAR_TOY_RATE: f64 = 0.3;

/// Benchmark problem selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    /// Lognormal diffusion coefficient, deterministic unit forcing, Hermite basis.
    Diffusion1,
    /// Lognormal diffusion coefficient, forcing `exp(xi) |xi - 1|`, Hermite basis.
    Diffusion2,
    /// Gamma-distributed parameter, coefficient with a sine perturbation,
    /// forcing `log10(xi) |xi - 1|`, Laguerre basis.
    Diffusion3,
    /// Convection-dominated flow with streamline-diffusion stabilization and
    /// an inhomogeneous hot wall; not symmetric positive definite.
    Convdiff,
    /// Scalar system `exp(0.3 xi) u = exp(xi) |xi - 1|`.
    ScalarToy,
}

impl ProblemKind {
    pub const ALL: [ProblemKind; 5] = [
        ProblemKind::Diffusion1,
        ProblemKind::Diffusion2,
        ProblemKind::Diffusion3,
        ProblemKind::Convdiff,
        ProblemKind::ScalarToy,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            ProblemKind::Diffusion1 => "diffusion1",
            ProblemKind::Diffusion2 => "diffusion2",
            ProblemKind::Diffusion3 => "diffusion3",
            ProblemKind::Convdiff => "convdiff",
            ProblemKind::ScalarToy => "scalar_toy",
        }
    }

    /// Whether the operator is symmetric positive definite on the support.
    pub fn is_spd(&self) -> bool {
        !matches!(self, ProblemKind::Convdiff)
    }
}

impl std::str::FromStr for ProblemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ProblemKind::ALL
            .iter()
            .copied()
            .find(|k| k.label() == s)
            .ok_or_else(|| Error::Config(format!("unknown problem '{s}'")))
    }
}

/// Coefficient-field parameters shared by the diffusion and
/// convection-diffusion benchmarks.
#[derive(Clone, Copy, Debug)]
pub struct FieldParams<T> {
    pub mu: T,
    pub sigma: T,
    pub corr_len: T,
}

impl<T: Scalar> FieldParams<T> {
    /// Defaults used by the shipped studies: mean 1, deviation 0.25,
    /// correlation length 2.
    pub fn defaults() -> Self {
        Self {
            mu: T::one(),
            sigma: real::<T>(0.25),
            corr_len: real::<T>(2.0),
        }
    }
}

/// A fully assembled benchmark problem.
#[derive(Clone, Debug)]
pub struct Problem<T> {
    pub kind: ProblemKind,
    pub system: ParamSystem<T>,
    pub space: ParameterSpace<T>,
    pub mesh: Option<Mesh<T>>,
    mass_interior: Option<DMatrix<T>>,
}

impl<T: Scalar> Problem<T> {
    /// Spatial-average output functional `f(xi)^T M` on the interior unknowns.
    /// Only available for the meshed problems with a plain interior
    /// right-hand side.
    pub fn spatial_average_qoi(&self) -> Result<QoIOperator<T>> {
        let mass = self.mass_interior.clone().ok_or_else(|| {
            Error::Config(format!(
                "problem '{}' does not support the spatial-average output",
                self.kind.label()
            ))
        })?;
        let sys = self.system.clone();
        Ok(QoIOperator::spatial_average(mass, move |xi| sys.eval_f(xi)))
    }
}

fn kink_forcing<T: Scalar>(xi: T) -> T {
    xi.exp() * (xi - T::one()).abs()
}

fn log10_kink_forcing<T: Scalar>(xi: T) -> T {
    // log10(xi) |xi - 1|; singular only at xi = 0, which Gauss-Laguerre
    // nodes never hit (they are strictly interior).
    xi.ln() / real::<T>(std::f64::consts::LN_10) * (xi - T::one()).abs()
}

/// Paper hot-wall boundary data: one on the right wall and the right half of
/// the bottom wall, zero elsewhere.
pub fn hot_wall_data<T: Scalar>(x: T, y: T) -> T {
    if x == T::one() || (y == -T::one() && x >= T::zero()) {
        T::one()
    } else {
        T::zero()
    }
}

/// Build a benchmark problem on an `n_el x n_el` mesh (ignored by the scalar
/// toy).
pub fn build_problem<T: Scalar>(
    kind: ProblemKind,
    n_el: usize,
    field: &FieldParams<T>,
) -> Result<Problem<T>> {
    match kind {
        ProblemKind::Diffusion1 => {
            diffusion_problem(kind, n_el, field, FieldForm::Lognormal, |_| T::one())
        }
        ProblemKind::Diffusion2 => {
            diffusion_problem(kind, n_el, field, FieldForm::Lognormal, kink_forcing)
        }
        ProblemKind::Diffusion3 => {
            diffusion_problem(kind, n_el, field, FieldForm::GammaSine, log10_kink_forcing)
        }
        ProblemKind::Convdiff => convdiff_problem(n_el, field),
        ProblemKind::ScalarToy => {
            let rate = real::<T>(SCALAR_TOY_RATE);
            Ok(Problem {
                kind,
                system: ParamSystem::scalar(move |xi: T| (rate * xi).exp(), kink_forcing),
                space: ParameterSpace::standard_normal(),
                mesh: None,
                mass_interior: None,
            })
        }
    }
}

fn diffusion_problem<T: Scalar>(
    kind: ProblemKind,
    n_el: usize,
    field: &FieldParams<T>,
    form: FieldForm,
    forcing: impl Fn(T) -> T + Send + Sync + Copy + 'static,
) -> Result<Problem<T>> {
    let mesh = Mesh::unit_square(n_el);
    let rf = RandomFieldKL::new(&mesh, field.mu, field.sigma, field.corr_len, form)?;
    let space = match form {
        FieldForm::Lognormal => ParameterSpace::standard_normal(),
        FieldForm::GammaSine => ParameterSpace::gamma(real::<T>(0.5))?,
    };

    // Spatial part of the load is parameter independent; assemble it once.
    let base_full = assemble_rhs_full(&mesh, |_, _| T::one());
    let base = mesh.restrict_interior_vec(&base_full);
    let mass_interior = mesh.restrict_interior(&assemble_mass(&mesh));

    let mesh_a = mesh.clone();
    let eval_a =
        move |xi: T| assemble_diffusion(&mesh_a, &rf, xi).expect("exponential field is positive");
    let eval_f = move |xi: T| &base * forcing(xi);

    Ok(Problem {
        kind,
        system: ParamSystem::new(mesh.n_interior(), eval_a, eval_f, true),
        space,
        mesh: Some(mesh),
        mass_interior: Some(mass_interior),
    })
}

fn convdiff_problem<T: Scalar>(n_el: usize, field: &FieldParams<T>) -> Result<Problem<T>> {
    let mesh = Mesh::rectangle((-T::one(), T::one()), (-T::one(), T::one()), n_el);
    let rf = RandomFieldKL::new(&mesh, field.mu, field.sigma, field.corr_len, FieldForm::Lognormal)?;

    let angle = std::f64::consts::PI / 6.0;
    let velocity = (-real::<T>(angle.sin()), real::<T>(angle.cos()));
    let eps = real::<T>(CONVDIFF_VISCOSITY);

    let mesh_a = mesh.clone();
    let n_nodes = mesh.n_nodes();
    let full = ParamSystem::new(
        n_nodes,
        move |xi| {
            assemble_convection_diffusion(&mesh_a, &rf, eps, velocity, xi)
                .expect("exponential field is positive")
        },
        move |_| DVector::zeros(n_nodes),
        false,
    );
    let system = apply_dirichlet(&mesh, &full, hot_wall_data);

    Ok(Problem {
        kind: ProblemKind::Convdiff,
        system,
        space: ParameterSpace::standard_normal(),
        mesh: Some(mesh),
        mass_interior: None,
    })
}
