//! Bilinear (Q1) finite elements on a structured rectangle: stiffness, mass,
//! convection and streamline-diffusion assembly, the leading eigenfunction of
//! the separable exponential covariance (Nystrom), and the output functionals
//! used by the benchmark problems.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::{approx_f64, count, real, Scalar};
use crate::sysmodel::ParamSystem;

/// Structured quadrilateral mesh on `[x0, x1] x [y0, y1]` with `n_el` elements
/// per dimension and lexicographic node numbering.
#[derive(Clone, Debug)]
pub struct Mesh<T> {
    n_el: usize,
    x_range: (T, T),
    y_range: (T, T),
    coords: Vec<(T, T)>,
    elements: Vec<[usize; 4]>,
    interior: Vec<usize>,
    boundary: Vec<usize>,
    interior_index: Vec<Option<usize>>,
}

impl<T: Scalar> Mesh<T> {
    /// Unit square `[0, 1]^2`.
    pub fn unit_square(n_el: usize) -> Self {
        Self::rectangle((T::zero(), T::one()), (T::zero(), T::one()), n_el)
    }

    pub fn rectangle(x_range: (T, T), y_range: (T, T), n_el: usize) -> Self {
        assert!(n_el >= 1, "mesh needs at least one element per dimension");
        let n = n_el + 1;
        let hx = (x_range.1 - x_range.0) / count::<T>(n_el);
        let hy = (y_range.1 - y_range.0) / count::<T>(n_el);

        let mut coords = Vec::with_capacity(n * n);
        for iy in 0..n {
            for ix in 0..n {
                coords.push((
                    x_range.0 + count::<T>(ix) * hx,
                    y_range.0 + count::<T>(iy) * hy,
                ));
            }
        }

        // Counterclockwise corner ordering per element.
        let mut elements = Vec::with_capacity(n_el * n_el);
        for ey in 0..n_el {
            for ex in 0..n_el {
                let n00 = ey * n + ex;
                elements.push([n00, n00 + 1, n00 + n + 1, n00 + n]);
            }
        }

        let mut interior = Vec::new();
        let mut boundary = Vec::new();
        let mut interior_index = vec![None; n * n];
        for iy in 0..n {
            for ix in 0..n {
                let idx = iy * n + ix;
                if ix == 0 || ix == n_el || iy == 0 || iy == n_el {
                    boundary.push(idx);
                } else {
                    interior_index[idx] = Some(interior.len());
                    interior.push(idx);
                }
            }
        }

        Self {
            n_el,
            x_range,
            y_range,
            coords,
            elements,
            interior,
            boundary,
            interior_index,
        }
    }

    pub fn n_el(&self) -> usize {
        self.n_el
    }

    pub fn n_nodes(&self) -> usize {
        self.coords.len()
    }

    pub fn n_interior(&self) -> usize {
        self.interior.len()
    }

    pub fn coords(&self, node: usize) -> (T, T) {
        self.coords[node]
    }

    pub fn elements(&self) -> &[[usize; 4]] {
        &self.elements
    }

    pub fn interior_nodes(&self) -> &[usize] {
        &self.interior
    }

    pub fn boundary_nodes(&self) -> &[usize] {
        &self.boundary
    }

    pub fn interior_index(&self, node: usize) -> Option<usize> {
        self.interior_index[node]
    }

    pub fn element_size(&self) -> (T, T) {
        let hx = (self.x_range.1 - self.x_range.0) / count::<T>(self.n_el);
        let hy = (self.y_range.1 - self.y_range.0) / count::<T>(self.n_el);
        (hx, hy)
    }

    pub fn x_range(&self) -> (T, T) {
        self.x_range
    }

    pub fn y_range(&self) -> (T, T) {
        self.y_range
    }

    /// Domain area.
    pub fn area(&self) -> T {
        (self.x_range.1 - self.x_range.0) * (self.y_range.1 - self.y_range.0)
    }

    /// Restrict a full (all-node) matrix to interior rows and columns.
    pub fn restrict_interior(&self, full: &DMatrix<T>) -> DMatrix<T> {
        let n = self.n_interior();
        DMatrix::from_fn(n, n, |i, j| full[(self.interior[i], self.interior[j])])
    }

    /// Restrict a full (all-node) vector to interior entries.
    pub fn restrict_interior_vec(&self, full: &DVector<T>) -> DVector<T> {
        DVector::from_fn(self.n_interior(), |i, _| full[self.interior[i]])
    }
}

/// Reference Q1 shape functions and derivatives at a point of `[-1,1]^2`.
fn shape<T: Scalar>(xi: T, eta: T) -> ([T; 4], [T; 4], [T; 4]) {
    let quarter = real::<T>(0.25);
    let one = T::one();
    let n = [
        quarter * (one - xi) * (one - eta),
        quarter * (one + xi) * (one - eta),
        quarter * (one + xi) * (one + eta),
        quarter * (one - xi) * (one + eta),
    ];
    let d_xi = [
        -quarter * (one - eta),
        quarter * (one - eta),
        quarter * (one + eta),
        -quarter * (one + eta),
    ];
    let d_eta = [
        -quarter * (one - xi),
        -quarter * (one + xi),
        quarter * (one + xi),
        quarter * (one - xi),
    ];
    (n, d_xi, d_eta)
}

/// 2x2 Gauss points on the reference square (weight one each).
fn gauss_2x2<T: Scalar>() -> [(T, T); 4] {
    let g = real::<T>(1.0 / 3.0f64.sqrt());
    [(-g, -g), (g, -g), (g, g), (-g, g)]
}

/// Assemble the full (boundary included) stiffness matrix
/// `K_ij = int coeff grad(phi_i) . grad(phi_j)` with 2x2 Gauss per element.
pub fn assemble_stiffness_full<T: Scalar>(
    mesh: &Mesh<T>,
    mut coeff: impl FnMut(T, T) -> T,
) -> DMatrix<T> {
    let n = mesh.n_nodes();
    let (hx, hy) = mesh.element_size();
    let det = hx * hy * real::<T>(0.25);
    let sx = real::<T>(2.0) / hx;
    let sy = real::<T>(2.0) / hy;
    let mut k = DMatrix::zeros(n, n);

    for el in mesh.elements() {
        let (x0, y0) = mesh.coords(el[0]);
        let mut k_el = [[T::zero(); 4]; 4];
        for (gx, gy) in gauss_2x2::<T>() {
            let (_, d_xi, d_eta) = shape(gx, gy);
            let x = x0 + hx * (gx + T::one()) * real::<T>(0.5);
            let y = y0 + hy * (gy + T::one()) * real::<T>(0.5);
            let a = coeff(x, y);
            for i in 0..4 {
                for j in 0..4 {
                    let grad =
                        sx * d_xi[i] * sx * d_xi[j] + sy * d_eta[i] * sy * d_eta[j];
                    k_el[i][j] += a * grad * det;
                }
            }
        }
        for i in 0..4 {
            for j in 0..4 {
                k[(el[i], el[j])] += k_el[i][j];
            }
        }
    }
    k
}

/// Mass matrix `M_ij = int phi_i phi_j` over all nodes (2x2 Gauss is exact
/// for the bilinear products).
pub fn assemble_mass<T: Scalar>(mesh: &Mesh<T>) -> DMatrix<T> {
    let n = mesh.n_nodes();
    let (hx, hy) = mesh.element_size();
    let det = hx * hy * real::<T>(0.25);
    let mut m = DMatrix::zeros(n, n);

    for el in mesh.elements() {
        for (gx, gy) in gauss_2x2::<T>() {
            let (nf, _, _) = shape(gx, gy);
            for i in 0..4 {
                for j in 0..4 {
                    m[(el[i], el[j])] += nf[i] * nf[j] * det;
                }
            }
        }
    }
    m
}

/// Load vector `[f]_i = int f phi_i` over all nodes.
pub fn assemble_rhs_full<T: Scalar>(mesh: &Mesh<T>, mut f: impl FnMut(T, T) -> T) -> DVector<T> {
    let n = mesh.n_nodes();
    let (hx, hy) = mesh.element_size();
    let det = hx * hy * real::<T>(0.25);
    let mut rhs = DVector::zeros(n);

    for el in mesh.elements() {
        let (x0, y0) = mesh.coords(el[0]);
        for (gx, gy) in gauss_2x2::<T>() {
            let (nf, _, _) = shape(gx, gy);
            let x = x0 + hx * (gx + T::one()) * real::<T>(0.5);
            let y = y0 + hy * (gy + T::one()) * real::<T>(0.5);
            let fv = f(x, y);
            for i in 0..4 {
                rhs[el[i]] += fv * nf[i] * det;
            }
        }
    }
    rhs
}

/// Convection matrix `C_ij = int (w . grad(phi_j)) phi_i` for a constant
/// velocity, over all nodes.
pub fn assemble_convection_full<T: Scalar>(mesh: &Mesh<T>, velocity: (T, T)) -> DMatrix<T> {
    let n = mesh.n_nodes();
    let (hx, hy) = mesh.element_size();
    let det = hx * hy * real::<T>(0.25);
    let sx = real::<T>(2.0) / hx;
    let sy = real::<T>(2.0) / hy;
    let mut c = DMatrix::zeros(n, n);

    for el in mesh.elements() {
        for (gx, gy) in gauss_2x2::<T>() {
            let (nf, d_xi, d_eta) = shape(gx, gy);
            for i in 0..4 {
                for j in 0..4 {
                    let conv = velocity.0 * sx * d_xi[j] + velocity.1 * sy * d_eta[j];
                    c[(el[i], el[j])] += conv * nf[i] * det;
                }
            }
        }
    }
    c
}

/// Interior-node diffusion stiffness for a parameterized coefficient field;
/// refuses non-positive coefficient samples because they break symmetric
/// positive definiteness.
pub fn assemble_diffusion<T: Scalar>(
    mesh: &Mesh<T>,
    field: &RandomFieldKL<T>,
    xi: T,
) -> Result<DMatrix<T>> {
    let full = assemble_diffusion_full(mesh, field, xi)?;
    Ok(mesh.restrict_interior(&full))
}

/// Full-node diffusion stiffness for a parameterized coefficient field.
pub fn assemble_diffusion_full<T: Scalar>(
    mesh: &Mesh<T>,
    field: &RandomFieldKL<T>,
    xi: T,
) -> Result<DMatrix<T>> {
    let mut bad: Option<(T, T)> = None;
    let full = assemble_stiffness_full(mesh, |x, y| {
        let a = field.eval(x, y, xi);
        if !(a > T::zero()) && bad.is_none() {
            bad = Some((x, y));
        }
        a
    });
    if let Some((x, y)) = bad {
        return Err(Error::NonPositiveField {
            x: approx_f64(x),
            y: approx_f64(y),
            xi: approx_f64(xi),
        });
    }
    Ok(full)
}

/// Full-node convection-diffusion operator
/// `A(xi) = eps D(a(xi)) + C + S` with streamline-diffusion stabilization on
/// elements whose Peclet number exceeds one.
pub fn assemble_convection_diffusion<T: Scalar>(
    mesh: &Mesh<T>,
    field: &RandomFieldKL<T>,
    eps: T,
    velocity: (T, T),
    xi: T,
) -> Result<DMatrix<T>> {
    let speed = (velocity.0 * velocity.0 + velocity.1 * velocity.1).sqrt();
    assert!(speed > T::zero(), "convection velocity must be nonzero");

    let diffusion = assemble_diffusion_full(mesh, field, xi)?;
    let convection = assemble_convection_full(mesh, velocity);
    let mut a = diffusion * eps + convection;

    // Streamline-diffusion term, elementwise:
    // delta = (h / (2 |w|)) (1 - 1/Pe) when Pe = |w| h / (2 eps a_mean) > 1.
    let n = mesh.n_nodes();
    let (hx, hy) = mesh.element_size();
    let det = hx * hy * real::<T>(0.25);
    let sx = real::<T>(2.0) / hx;
    let sy = real::<T>(2.0) / hy;
    let h = hx.max(hy);
    let mut s = DMatrix::<T>::zeros(n, n);

    for el in mesh.elements() {
        let (x0, y0) = mesh.coords(el[0]);
        let points = gauss_2x2::<T>();
        let mut a_mean = T::zero();
        for &(gx, gy) in &points {
            let x = x0 + hx * (gx + T::one()) * real::<T>(0.5);
            let y = y0 + hy * (gy + T::one()) * real::<T>(0.5);
            a_mean += field.eval(x, y, xi);
        }
        a_mean /= real::<T>(4.0);

        let peclet = speed * h / (real::<T>(2.0) * eps * a_mean);
        if peclet <= T::one() {
            continue;
        }
        let delta = h / (real::<T>(2.0) * speed) * (T::one() - T::one() / peclet);

        for &(gx, gy) in &points {
            let (_, d_xi, d_eta) = shape(gx, gy);
            for i in 0..4 {
                for j in 0..4 {
                    let wi = velocity.0 * sx * d_xi[i] + velocity.1 * sy * d_eta[i];
                    let wj = velocity.0 * sx * d_xi[j] + velocity.1 * sy * d_eta[j];
                    s[(el[i], el[j])] += delta * wi * wj * det;
                }
            }
        }
    }

    a += s;
    Ok(a)
}

/// Reduce a full-node system to interior unknowns, lifting inhomogeneous
/// Dirichlet data into the right-hand side:
/// `f_int <- f_int - A_int,bnd g_D`.
pub fn apply_dirichlet<T: Scalar>(
    mesh: &Mesh<T>,
    full: &ParamSystem<T>,
    g_d: impl Fn(T, T) -> T,
) -> ParamSystem<T> {
    assert_eq!(
        full.n_x(),
        mesh.n_nodes(),
        "the full system must be posed on all mesh nodes"
    );
    let interior: Vec<usize> = mesh.interior_nodes().to_vec();
    let boundary: Vec<usize> = mesh.boundary_nodes().to_vec();
    let g_values: Vec<T> = boundary
        .iter()
        .map(|&b| {
            let (x, y) = mesh.coords(b);
            g_d(x, y)
        })
        .collect();
    let n_int = interior.len();

    let sys_a = full.clone();
    let interior_a = interior.clone();
    let eval_a = move |xi: T| {
        let a = sys_a.eval_a(xi);
        DMatrix::from_fn(n_int, n_int, |i, j| a[(interior_a[i], interior_a[j])])
    };

    let sys_f = full.clone();
    let interior_f = interior;
    let eval_f = move |xi: T| {
        let a = sys_f.eval_a(xi);
        let f = sys_f.eval_f(xi);
        DVector::from_fn(n_int, |i, _| {
            let row = interior_f[i];
            let mut value = f[row];
            for (b, &g) in boundary.iter().zip(&g_values) {
                value -= a[(row, *b)] * g;
            }
            value
        })
    };

    ParamSystem::new(n_int, eval_a, eval_f, full.is_spd())
}

/// Leading eigenpair of the 1D exponential-covariance operator
/// `(K v)(s) = int exp(-|s - t| / c) v(t) dt` on the mesh's x node line,
/// by Nystrom discretization with trapezoid weights. The eigenfunction is
/// normalized to unit discrete L2 norm and sign-fixed so its integral is
/// nonnegative.
pub fn kl_first_eigenfunction<T: Scalar>(mesh: &Mesh<T>, corr_len: T) -> Result<(DVector<T>, T)> {
    assert!(corr_len > T::zero(), "correlation length must be positive");
    let n = mesh.n_el() + 1;
    let (x0, x1) = mesh.x_range();
    let h = (x1 - x0) / count::<T>(mesh.n_el());
    let t: Vec<T> = (0..n).map(|i| x0 + count::<T>(i) * h).collect();
    let w: Vec<T> = (0..n)
        .map(|i| {
            if i == 0 || i == n - 1 {
                h * real::<T>(0.5)
            } else {
                h
            }
        })
        .collect();

    let mut b = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let r = (t[i] - t[j]).abs();
            b[(i, j)] = (w[i] * w[j]).sqrt() * (-r / corr_len).exp();
        }
    }

    let eigen = SymmetricEigen::try_new(b, T::default_epsilon(), 50_000).ok_or_else(|| {
        Error::EigenFailure("Nystrom covariance eigen iteration did not converge".into())
    })?;

    let mut best = 0;
    for i in 1..n {
        if eigen.eigenvalues[i] > eigen.eigenvalues[best] {
            best = i;
        }
    }
    let lambda = eigen.eigenvalues[best];

    let mut v = DVector::zeros(n);
    for i in 0..n {
        v[i] = eigen.eigenvectors[(i, best)] / w[i].sqrt();
    }
    // The eigenvector is unit-norm, so v already has unit discrete L2 norm;
    // fix the sign so the integral is nonnegative.
    let integral: T = (0..n).map(|i| w[i] * v[i]).fold(T::zero(), |acc, x| acc + x);
    if integral < T::zero() {
        v.neg_mut();
    }

    Ok((v, lambda))
}

/// Functional form of the random coefficient field.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FieldForm {
    /// `a(x, xi) = exp(mu + sigma a1(x) xi)`
    Lognormal,
    /// `a(x, xi) = exp(mu + sigma a1(x) xi + 0.01 sin(xi))`
    GammaSine,
}

/// Random coefficient field built from the leading KL eigenfunction of the
/// separable exponential covariance: `a1(x) = v1(x_1) v1(x_2)`.
#[derive(Clone, Debug)]
pub struct RandomFieldKL<T> {
    mu: T,
    sigma: T,
    corr_len: T,
    form: FieldForm,
    line_start: T,
    line_step: T,
    v1: DVector<T>,
    eigenvalue: T,
}

impl<T: Scalar> RandomFieldKL<T> {
    pub fn new(mesh: &Mesh<T>, mu: T, sigma: T, corr_len: T, form: FieldForm) -> Result<Self> {
        let (x0, x1) = mesh.x_range();
        let (y0, y1) = mesh.y_range();
        assert!(
            x0 == y0 && x1 == y1,
            "the separable KL construction uses one node line for both dimensions"
        );
        let (v1, eigenvalue) = kl_first_eigenfunction(mesh, corr_len)?;
        let step = (x1 - x0) / count::<T>(mesh.n_el());
        Ok(Self {
            mu,
            sigma,
            corr_len,
            form,
            line_start: x0,
            line_step: step,
            v1,
            eigenvalue,
        })
    }

    pub fn mu(&self) -> T {
        self.mu
    }

    pub fn sigma(&self) -> T {
        self.sigma
    }

    pub fn corr_len(&self) -> T {
        self.corr_len
    }

    pub fn form(&self) -> FieldForm {
        self.form
    }

    /// 1D eigenfunction values on the node line.
    pub fn v1(&self) -> &DVector<T> {
        &self.v1
    }

    /// Nystrom eigenvalue of the 1D covariance factor.
    pub fn eigenvalue(&self) -> T {
        self.eigenvalue
    }

    fn interp_v1(&self, x: T) -> T {
        let n = self.v1.len();
        let u = (x - self.line_start) / self.line_step;
        let mut i = u.floor().to_usize().unwrap_or(0);
        if i + 1 >= n {
            i = n - 2;
        }
        let frac = u - count::<T>(i);
        self.v1[i] * (T::one() - frac) + self.v1[i + 1] * frac
    }

    /// First KL eigenfunction at a point of the domain.
    pub fn a1_at(&self, x: T, y: T) -> T {
        self.interp_v1(x) * self.interp_v1(y)
    }

    /// Nodal values of `a1` on a mesh.
    pub fn a1_nodal(&self, mesh: &Mesh<T>) -> DVector<T> {
        DVector::from_fn(mesh.n_nodes(), |i, _| {
            let (x, y) = mesh.coords(i);
            self.a1_at(x, y)
        })
    }

    /// Coefficient sample `a(x, xi)`.
    pub fn eval(&self, x: T, y: T, xi: T) -> T {
        let a1 = self.a1_at(x, y);
        let exponent = match self.form {
            FieldForm::Lognormal => self.mu + self.sigma * a1 * xi,
            FieldForm::GammaSine => {
                self.mu + self.sigma * a1 * xi + real::<T>(0.01) * xi.sin()
            }
        };
        exponent.exp()
    }
}

/// Scalar factor `g(xi)` of the random output functional.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GKind {
    /// `g(xi) = xi`
    Xi,
    /// `g(xi) = sin(xi)`
    Sin,
    /// `g(xi) = exp(xi) |xi - 1|`
    ExpAbs,
}

impl GKind {
    pub fn eval<T: Scalar>(&self, xi: T) -> T {
        match self {
            GKind::Xi => xi,
            GKind::Sin => xi.sin(),
            GKind::ExpAbs => xi.exp() * (xi - T::one()).abs(),
        }
    }
}

type VectorFn<T> = Arc<dyn Fn(T) -> DVector<T> + Send + Sync>;

#[derive(Clone)]
enum QoiKind<T> {
    /// `F(xi) = g(xi) G` with `G` drawn once, uniformly on [0, 1], from a
    /// recorded seed.
    Random { g: GKind, matrix: DMatrix<T> },
    /// `F(xi) = f(xi)^T M` with the mass matrix restricted to the unknowns.
    SpatialAverage { mass: DMatrix<T>, rhs: VectorFn<T> },
}

/// Linear output functional `F(xi): R^{n_x} -> R^{n_o}`.
#[derive(Clone)]
pub struct QoIOperator<T> {
    n_o: usize,
    n_x: usize,
    kind: QoiKind<T>,
}

impl<T: Scalar> QoIOperator<T> {
    /// Random functional `F(xi) = g(xi) G`. The matrix `G` is generated once
    /// from `seed` with a counter-based generator, so studies are reproducible
    /// across platforms and polynomial degrees.
    pub fn random_functional(n_o: usize, n_x: usize, g: GKind, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut matrix = DMatrix::zeros(n_o, n_x);
        for r in 0..n_o {
            for c in 0..n_x {
                matrix[(r, c)] = real::<T>(rng.random::<f64>());
            }
        }
        Self {
            n_o,
            n_x,
            kind: QoiKind::Random { g, matrix },
        }
    }

    /// Spatial-average functional `F(xi) = f(xi)^T M` (one output).
    pub fn spatial_average(
        mass_interior: DMatrix<T>,
        rhs_interior: impl Fn(T) -> DVector<T> + Send + Sync + 'static,
    ) -> Self {
        let n_x = mass_interior.nrows();
        Self {
            n_o: 1,
            n_x,
            kind: QoiKind::SpatialAverage {
                mass: mass_interior,
                rhs: Arc::new(rhs_interior),
            },
        }
    }

    pub fn n_outputs(&self) -> usize {
        self.n_o
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    /// Evaluate the functional matrix at `xi`.
    pub fn evaluate(&self, xi: T) -> DMatrix<T> {
        match &self.kind {
            QoiKind::Random { g, matrix } => matrix * g.eval(xi),
            QoiKind::SpatialAverage { mass, rhs } => {
                let weights = mass * rhs(xi);
                DMatrix::from_iterator(1, weights.len(), weights.iter().copied())
            }
        }
    }

    /// Apply the functional to a state vector without forming the matrix.
    pub fn apply(&self, xi: T, v: &DVector<T>) -> DVector<T> {
        match &self.kind {
            QoiKind::Random { g, matrix } => matrix * v * g.eval(xi),
            QoiKind::SpatialAverage { mass, rhs } => {
                let f = rhs(xi);
                DVector::from_element(1, (mass * f).dot(v))
            }
        }
    }
}

impl<T> std::fmt::Debug for QoIOperator<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("QoIOperator")
            .field("n_o", &self.n_o)
            .field("n_x", &self.n_x)
            .finish()
    }
}
