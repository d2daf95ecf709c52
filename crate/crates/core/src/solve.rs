//! Linear-element elasticity on a node-duplicated connectivity: assembly of
//! `∫ w(e(u))`, the Dirichlet equilibrium solve, and the total energy
//! `E_ε(u) = ∫ w(e(u)) dx + G·H¹(S_u \ F_ε)`.

use alloc::vec;
use alloc::vec::Vec;

use crate::grid::{apply_bc, Connectivity, CrackState, DirichletMap, GridError, Mesh};
use crate::linalg::{masked_pcg, CgOptions, LinearOperator};
use crate::material::{elastic_density, stiffness_form, Material, StrainTensor};
use crate::BoundaryCondition;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SolveError {
    #[error("triangle {0} has zero area")]
    DegenerateTriangle(usize),
    #[error("regularization must be non-negative and finite (got {0})")]
    InvalidRegularization(f64),
    #[error("solver stopped after {iterations} iterations at relative residual {residual:e}")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("displacement field does not match the crack state's connectivity")]
    MismatchedConnectivity,
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Relative residual at which CG stops.
    pub tolerance: f64,
    /// Iteration cap as a multiple of the free degree-of-freedom count.
    pub max_iter_factor: usize,
    /// Volumetric regularization `ρ`; adds `ρ·h²·Σ|u|²` to the energy so fully
    /// cut fragments stay determined.
    pub rho: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { tolerance: 1e-8, max_iter_factor: 50, rho: 1e-8 }
    }
}

/// Per-shape element data: `strain = B·u_local`, `K = area·Bᵀ Q B`.
#[derive(Debug, Clone)]
pub(crate) struct ElementKernel {
    key: [u64; 4],
    pub(crate) area: f64,
    pub(crate) b: [[f64; 6]; 3],
    pub(crate) k: [[f64; 6]; 6],
}

impl ElementKernel {
    pub(crate) fn strain(&self, u: &[f64; 6]) -> StrainTensor {
        let s: [f64; 3] = core::array::from_fn(|r| (0..6).map(|c| self.b[r][c] * u[c]).sum());
        StrainTensor::new(s[0], s[1], s[2])
    }
}

/// Shape kernels for every triangle of a mesh. Triangles with congruent
/// placement share a kernel.
#[derive(Debug, Clone)]
pub(crate) struct Kernels {
    pub(crate) kernels: Vec<ElementKernel>,
    pub(crate) of_triangle: Vec<u32>,
}

impl Kernels {
    pub(crate) fn new(mesh: &Mesh, material: &Material) -> Result<Self, SolveError> {
        let q = stiffness_form(material);
        let mut kernels: Vec<ElementKernel> = Vec::new();
        let mut of_triangle = Vec::with_capacity(mesh.triangles.len());
        for (t, tri) in mesh.triangles.iter().enumerate() {
            let p = [mesh.nodes[tri[0]], mesh.nodes[tri[1]], mesh.nodes[tri[2]]];
            let (e1, e2) = (p[1] - p[0], p[2] - p[0]);
            let key = [e1.x.to_bits(), e1.y.to_bits(), e2.x.to_bits(), e2.y.to_bits()];
            if let Some(i) = kernels.iter().position(|k| k.key == key) {
                of_triangle.push(i as u32);
                continue;
            }
            let det = e1.x * e2.y - e2.x * e1.y;
            if det.abs() <= f64::EPSILON * (e1.dot(e1) + e2.dot(e2)) {
                return Err(SolveError::DegenerateTriangle(t));
            }
            let area = 0.5 * det.abs();
            // barycentric gradients ∇φ_i = (y_j − y_k, x_k − x_j) / det
            let mut grad = [[0.0; 2]; 3];
            for i in 0..3 {
                let (j, k) = ((i + 1) % 3, (i + 2) % 3);
                grad[i] = [(p[j].y - p[k].y) / det, (p[k].x - p[j].x) / det];
            }
            let mut b = [[0.0; 6]; 3];
            for i in 0..3 {
                b[0][2 * i] = grad[i][0];
                b[1][2 * i + 1] = grad[i][1];
                b[2][2 * i] = 0.5 * grad[i][1];
                b[2][2 * i + 1] = 0.5 * grad[i][0];
            }
            let mut k = [[0.0; 6]; 6];
            for r in 0..6 {
                for c in 0..6 {
                    let mut acc = 0.0;
                    for a in 0..3 {
                        for bb in 0..3 {
                            acc += b[a][r] * q[a][bb] * b[bb][c];
                        }
                    }
                    k[r][c] = area * acc;
                }
            }
            of_triangle.push(kernels.len() as u32);
            kernels.push(ElementKernel { key, area, b, k });
        }
        Ok(Kernels { kernels, of_triangle })
    }

    pub(crate) fn of(&self, t: usize) -> &ElementKernel {
        &self.kernels[self.of_triangle[t] as usize]
    }
}

/// The quadratic energy `½ xᵀ K x` on a connectivity, applied matrix-free.
///
/// Vectors are laid out as `x[2·copy + component]`.
#[derive(Debug, Clone)]
pub struct QuadraticSystem<'a> {
    conn: &'a Connectivity,
    kernels: Kernels,
    /// Per-triangle stiffness factor; empty means 1 everywhere.
    scale: Vec<f64>,
    /// Diagonal shift `2ρh²` from the regularization.
    shift: f64,
}

/// Assembles `Σ_T area·w(e_T) + ρ·h²·Σ|u|²` on `conn`.
pub fn assemble<'a>(
    mesh: &Mesh,
    conn: &'a Connectivity,
    material: &Material,
    rho: f64,
) -> Result<QuadraticSystem<'a>, SolveError> {
    if !(rho.is_finite() && rho >= 0.0) {
        return Err(SolveError::InvalidRegularization(rho));
    }
    let h = mesh.spacing();
    Ok(QuadraticSystem { conn, kernels: Kernels::new(mesh, material)?, scale: Vec::new(), shift: 2.0 * rho * h * h })
}

impl<'a> QuadraticSystem<'a> {
    /// Multiplies each triangle's stiffness by `scale[t]`.
    pub fn with_scale(mut self, scale: Vec<f64>) -> Self {
        debug_assert_eq!(scale.len(), self.conn.tri_dofs.len());
        self.scale = scale;
        self
    }

    pub fn connectivity(&self) -> &Connectivity {
        self.conn
    }

    fn factor(&self, t: usize) -> f64 {
        if self.scale.is_empty() {
            1.0
        } else {
            self.scale[t]
        }
    }

    fn gather(&self, t: usize, x: &[f64]) -> [f64; 6] {
        let d = self.conn.tri_dofs[t];
        [x[2 * d[0]], x[2 * d[0] + 1], x[2 * d[1]], x[2 * d[1] + 1], x[2 * d[2]], x[2 * d[2] + 1]]
    }

    /// `½ xᵀ K x`, including the regularization.
    pub fn energy(&self, x: &[f64]) -> f64 {
        self.elastic_energy(x) + self.regularization_energy(x)
    }

    /// `Σ_T factor_T · area_T · w(e_T)`.
    pub fn elastic_energy(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for t in 0..self.conn.tri_dofs.len() {
            let ker = self.kernels.of(t);
            let u = self.gather(t, x);
            let mut e = 0.0;
            for r in 0..6 {
                let mut row = 0.0;
                for c in 0..6 {
                    row += ker.k[r][c] * u[c];
                }
                e += u[r] * row;
            }
            acc += 0.5 * self.factor(t) * e;
        }
        acc
    }

    pub fn regularization_energy(&self, x: &[f64]) -> f64 {
        0.5 * self.shift * x.iter().map(|v| v * v).sum::<f64>()
    }

    /// Constant strain of triangle `t` under `x`.
    pub fn strain(&self, t: usize, x: &[f64]) -> StrainTensor {
        self.kernels.of(t).strain(&self.gather(t, x))
    }
}

impl LinearOperator for QuadraticSystem<'_> {
    fn dim(&self) -> usize {
        2 * self.conn.num_dofs()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (yi, xi) in y.iter_mut().zip(x) {
            *yi = self.shift * xi;
        }
        for (t, d) in self.conn.tri_dofs.iter().enumerate() {
            let ker = self.kernels.of(t);
            let f = self.factor(t);
            let u = self.gather(t, x);
            for r in 0..6 {
                let mut acc = 0.0;
                for c in 0..6 {
                    acc += ker.k[r][c] * u[c];
                }
                y[2 * d[r / 2] + r % 2] += f * acc;
            }
        }
    }

    fn diagonal(&self) -> Vec<f64> {
        let mut diag = vec![self.shift; self.dim()];
        for (t, d) in self.conn.tri_dofs.iter().enumerate() {
            let ker = self.kernels.of(t);
            let f = self.factor(t);
            for r in 0..6 {
                diag[2 * d[r / 2] + r % 2] += f * ker.k[r][r];
            }
        }
        diag
    }
}

/// Per-copy displacement vectors, the discrete `u`.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementField {
    pub values: Vec<[f64; 2]>,
    /// Relative residual reported by the solver.
    pub residual: f64,
    pub iterations: usize,
}

impl DisplacementField {
    pub fn from_flat(x: &[f64], residual: f64, iterations: usize) -> Self {
        DisplacementField { values: x.chunks_exact(2).map(|c| [c[0], c[1]]).collect(), residual, iterations }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.values.iter().flat_map(|v| v.iter().copied()).collect()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Largest displacement magnitude.
    pub fn max_norm(&self) -> f64 {
        self.values.iter().map(|v| libm::hypot(v[0], v[1])).fold(0.0, f64::max)
    }

    /// Carries a field onto another connectivity of the same mesh by matching
    /// triangle corners. Where copies merge, the last corner visited wins.
    pub fn transfer(&self, from: &Connectivity, to: &Connectivity) -> Vec<f64> {
        let mut x = vec![0.0; 2 * to.num_dofs()];
        for (a, b) in from.tri_dofs.iter().zip(&to.tri_dofs) {
            for k in 0..3 {
                let v = self.values[a[k]];
                x[2 * b[k]] = v[0];
                x[2 * b[k] + 1] = v[1];
            }
        }
        x
    }
}

/// Minimizes the assembled energy with the pinned copies held at their
/// Dirichlet values. `initial` (flat layout) seeds the free copies; without
/// it the affine lift of the boundary data is used.
pub fn equilibrium(
    system: &QuadraticSystem<'_>,
    bc: &DirichletMap,
    initial: Option<&[f64]>,
    opts: &SolverOptions,
) -> Result<DisplacementField, SolveError> {
    let n = system.dim();
    let mut x = match initial {
        Some(init) if init.len() == n => init.to_vec(),
        Some(_) => return Err(SolveError::MismatchedConnectivity),
        None => bc.values.iter().flat_map(|v| v.iter().copied()).collect(),
    };
    if bc.pinned.len() * 2 != n {
        return Err(SolveError::MismatchedConnectivity);
    }
    let mut free = vec![false; n];
    for (c, &p) in bc.pinned.iter().enumerate() {
        if p {
            x[2 * c] = bc.values[c][0];
            x[2 * c + 1] = bc.values[c][1];
        } else {
            free[2 * c] = true;
            free[2 * c + 1] = true;
        }
    }
    let nfree = free.iter().filter(|&&f| f).count();
    let out = masked_pcg(
        system,
        &free,
        &mut x,
        CgOptions { tolerance: opts.tolerance, max_iterations: opts.max_iter_factor.saturating_mul(nfree.max(1)) },
    );
    if !out.converged {
        return Err(SolveError::NotConverged { iterations: out.iterations, residual: out.residual });
    }
    Ok(DisplacementField::from_flat(&x, out.residual, out.iterations))
}

/// Elastic, surface and total energy of a crack state.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnergyBreakdown {
    /// `∫ w(e(u))`, without the regularization term.
    pub elastic: f64,
    /// `G · H¹(S_u \ F_ε)`: only emergent edges are charged.
    pub surface: f64,
    pub total: f64,
    /// Solver residual of the field the energy was evaluated at.
    pub residual: f64,
    /// `ρ·h²·Σ|u|²`, reported for diagnostics only.
    pub regularization: f64,
}

/// Evaluates `E_ε(u)` for a field on the connectivity of `state`.
pub fn total_energy(
    u: &DisplacementField,
    state: &CrackState,
    mesh: &Mesh,
    conn: &Connectivity,
    material: &Material,
    rho: f64,
) -> Result<EnergyBreakdown, SolveError> {
    if !conn.matches(state) || u.len() != conn.num_dofs() {
        return Err(SolveError::MismatchedConnectivity);
    }
    let system = assemble(mesh, conn, material, rho)?;
    let x = u.to_flat();
    let elastic = (0..mesh.num_triangles())
        .map(|t| system.kernels.of(t).area * elastic_density(&system.strain(t, &x), material))
        .sum::<f64>();
    let surface = material.griffith() * state.emergent_length(mesh);
    Ok(EnergyBreakdown {
        elastic,
        surface,
        total: elastic + surface,
        residual: u.residual,
        regularization: system.regularization_energy(&x),
    })
}

/// A solved crack state.
#[derive(Debug, Clone, PartialEq)]
pub struct Equilibrium {
    pub state: CrackState,
    pub conn: Connectivity,
    pub u: DisplacementField,
    pub energy: EnergyBreakdown,
}

/// Builds the connectivity of `state`, solves for equilibrium under `bc` and
/// evaluates its energy. `warm` seeds the solver from an earlier solution on
/// the same mesh.
pub fn solve_state(
    mesh: &Mesh,
    state: &CrackState,
    bc: &BoundaryCondition,
    material: &Material,
    opts: &SolverOptions,
    warm: Option<(&Connectivity, &DisplacementField)>,
) -> Result<Equilibrium, SolveError> {
    let conn = Connectivity::for_state(mesh, state)?;
    let dirichlet = apply_bc(mesh, &conn, bc);
    let initial = warm.map(|(c, u)| u.transfer(c, &conn));
    let system = assemble(mesh, &conn, material, opts.rho)?;
    let u = equilibrium(&system, &dirichlet, initial.as_deref(), opts)?;
    let energy = total_energy(&u, state, mesh, &conn, material, opts.rho)?;
    Ok(Equilibrium { state: state.clone(), conn, u, energy })
}
