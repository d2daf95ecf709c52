//! Ambrosio-Tortorelli regularization of the fracture energy.
//!
//! On the uncracked mesh the jump set is replaced by a nodal field
//! `v ∈ [0,1]` (1 intact, 0 broken) and the energy becomes
//!
//! ```text
//! ∫ (v² + k)·w(e(u)) + G·∫ (η|∇v|² + (1−v)²/(4η))
//! ```
//!
//! The surface integrand of the optimal 1-D profile `v = 1 − exp(−d/(2η))`
//! integrates to exactly 1 per unit crack length. Pre-cracks are imposed by
//! pinning `v = 0` on their nodes; the surface integral is reported outside
//! a tube of radius `2η` around them so that only emergent damage is charged.
//!
//! Quadrature is vertex-lumped: `v²` and `(1−v)²` are averaged over each
//! triangle's corners, which keeps both partial problems exactly quadratic.

use alloc::vec;
use alloc::vec::Vec;

use crate::damage::CellLengths;
use crate::geometry::{point_segment_distance, CellLattice};
use crate::grid::{apply_bc, BoundaryCondition, Connectivity, EdgeSet, GridError, Mesh};
use crate::linalg::{masked_pcg, CgOptions, LinearOperator};
use crate::material::{elastic_density, Material};
use crate::solve::{assemble, equilibrium, DisplacementField, EnergyBreakdown, SolveError, SolverOptions};

/// Sweep cap for alternate minimization.
pub const MAX_SWEEPS: usize = 200;
/// Relative decrease (of the first-sweep energy) below which sweeps stop.
pub const SWEEP_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PhaseFieldError {
    #[error("eta = {eta} is below twice the grid spacing ({min})")]
    EtaTooSmall { eta: f64, min: f64 },
    #[error("k_eta must lie in (0, 1e-6] (got {0})")]
    InvalidResidualStiffness(f64),
    #[error("the phase-field backend needs a positive Griffith constant")]
    ZeroGriffith,
    #[error("phase field has {got} values for {expected} nodes")]
    WrongLength { expected: usize, got: usize },
    #[error("phase field value {value} at node {node} is outside [0, 1]")]
    OutOfRange { node: usize, value: f64 },
    #[error("alternate minimization increased the energy from {before} to {after} at sweep {sweep}")]
    EnergyIncrease { sweep: usize, before: f64, after: f64 },
    #[error("phase-field solve did not converge")]
    NotConverged,
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Regularization width and residual stiffness.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AtParams {
    eta: f64,
    k_eta: f64,
}

impl AtParams {
    pub const MAX_K_ETA: f64 = 1e-6;

    /// Validates `eta ≥ 2h` and `0 < k_eta ≤ 1e-6` for grid spacing `h`.
    pub fn new(eta: f64, k_eta: f64, spacing: f64) -> Result<Self, PhaseFieldError> {
        let min = 2.0 * spacing;
        if !(eta.is_finite() && eta >= min * (1.0 - 1e-12)) {
            return Err(PhaseFieldError::EtaTooSmall { eta, min });
        }
        if !(k_eta > 0.0 && k_eta <= Self::MAX_K_ETA) {
            return Err(PhaseFieldError::InvalidResidualStiffness(k_eta));
        }
        Ok(AtParams { eta, k_eta })
    }

    /// `eta = 2h`, `k_eta = 1e-6`.
    pub fn default_for(spacing: f64) -> Self {
        AtParams { eta: 2.0 * spacing, k_eta: Self::MAX_K_ETA }
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn k_eta(&self) -> f64 {
        self.k_eta
    }
}

/// Nodal damage variable on the uncracked mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseField {
    pub v: Vec<f64>,
}

impl PhaseField {
    pub fn intact(mesh: &Mesh) -> Self {
        PhaseField { v: vec![1.0; mesh.num_nodes()] }
    }

    pub fn check(&self, mesh: &Mesh) -> Result<(), PhaseFieldError> {
        if self.v.len() != mesh.num_nodes() {
            return Err(PhaseFieldError::WrongLength { expected: mesh.num_nodes(), got: self.v.len() });
        }
        match self.v.iter().position(|v| !(0.0..=1.0).contains(v)) {
            Some(node) => Err(PhaseFieldError::OutOfRange { node, value: self.v[node] }),
            None => Ok(()),
        }
    }

    pub fn min(&self) -> f64 {
        self.v.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Endpoints of the pre-crack edges, sorted.
pub fn precrack_nodes(mesh: &Mesh, precracks: &EdgeSet) -> Vec<usize> {
    let mut nodes: Vec<usize> = precracks.iter().flat_map(|e| mesh.interior_edges[e].nodes).collect();
    nodes.sort_unstable();
    nodes.dedup();
    nodes
}

/// Triangles whose centroid lies within `radius` of a pre-crack edge.
pub fn tube_mask(mesh: &Mesh, precracks: &EdgeSet, radius: f64) -> Vec<bool> {
    let mut mask = vec![false; mesh.num_triangles()];
    let h = mesh.spacing();
    let reach = libm::ceil(radius / h) as i64 + 1;
    for e in precracks.iter() {
        let [a, b] = mesh.interior_edges[e].nodes;
        let (pa, pb) = (mesh.nodes[a], mesh.nodes[b]);
        let (ga, gb) = (mesh.grid[a], mesh.grid[b]);
        for i in ga[0].min(gb[0]) - reach..=ga[0].max(gb[0]) + reach {
            for j in ga[1].min(gb[1]) - reach..=ga[1].max(gb[1]) + reach {
                let Some(node) = mesh.node_at([i, j]) else { continue };
                for &t in mesh.node_triangles(node) {
                    if !mask[t] && point_segment_distance(mesh.triangle_centroid(t), pa, pb) <= radius {
                        mask[t] = true;
                    }
                }
            }
        }
    }
    mask
}

/// Gradients of the three barycentric hat functions of triangle `t`.
fn hat_gradients(mesh: &Mesh, t: usize) -> [[f64; 2]; 3] {
    let [a, b, c] = mesh.triangles[t].map(|i| mesh.nodes[i]);
    let det = (b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y);
    [
        [(b.y - c.y) / det, (c.x - b.x) / det],
        [(c.y - a.y) / det, (a.x - c.x) / det],
        [(a.y - b.y) / det, (b.x - a.x) / det],
    ]
}

/// Per-triangle geometry reused across sweeps.
struct Geometry {
    area: Vec<f64>,
    gradients: Vec<[[f64; 2]; 3]>,
    /// `area · ∇φ_i · ∇φ_j`.
    stiffness: Vec<[[f64; 3]; 3]>,
}

impl Geometry {
    fn new(mesh: &Mesh) -> Self {
        let mut area = Vec::with_capacity(mesh.num_triangles());
        let mut gradients = Vec::with_capacity(mesh.num_triangles());
        let mut stiffness = Vec::with_capacity(mesh.num_triangles());
        for t in 0..mesh.num_triangles() {
            let a = mesh.triangle_area(t);
            let g = hat_gradients(mesh, t);
            let mut s = [[0.0; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    s[i][j] = a * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
                }
            }
            area.push(a);
            gradients.push(g);
            stiffness.push(s);
        }
        Geometry { area, gradients, stiffness }
    }

    /// Surface density without `G`: `η A|∇v|² + (A/3)Σ(1−v_i)²/(4η)`.
    fn surface_density(&self, mesh: &Mesh, t: usize, v: &[f64], eta: f64) -> f64 {
        let vt = mesh.triangles[t].map(|i| v[i]);
        // differences against the first corner keep constant fields exact
        let d = [vt[1] - vt[0], vt[2] - vt[0]];
        let g = &self.gradients[t];
        let gx = d[0] * g[1][0] + d[1] * g[2][0];
        let gy = d[0] * g[1][1] + d[1] * g[2][1];
        let well: f64 = vt.iter().map(|x| (1.0 - x) * (1.0 - x)).sum();
        self.area[t] * (eta * (gx * gx + gy * gy) + well / (12.0 * eta))
    }
}

fn mean_square(mesh: &Mesh, t: usize, v: &[f64]) -> f64 {
    mesh.triangles[t].iter().map(|&i| v[i] * v[i]).sum::<f64>() / 3.0
}

/// Elastic density `w(e(u))` per triangle for a field on the uncracked mesh.
fn densities(mesh: &Mesh, conn: &Connectivity, material: &Material, u: &[f64]) -> Result<Vec<f64>, SolveError> {
    let system = assemble(mesh, conn, material, 0.0)?;
    Ok((0..mesh.num_triangles()).map(|t| elastic_density(&system.strain(t, u), material)).collect())
}

/// Elastic part, full surface part and tube-excluded surface part.
fn energy_parts(
    mesh: &Mesh,
    geo: &Geometry,
    w: &[f64],
    v: &[f64],
    params: &AtParams,
    material: &Material,
    tube: &[bool],
) -> (f64, f64, f64) {
    let (mut elastic, mut surface, mut outside) = (0.0, 0.0, 0.0);
    for t in 0..mesh.num_triangles() {
        elastic += (params.k_eta + mean_square(mesh, t, v)) * geo.area[t] * w[t];
        let s = material.griffith() * geo.surface_density(mesh, t, v, params.eta);
        surface += s;
        if !tube[t] {
            outside += s;
        }
    }
    (elastic, surface, outside)
}

/// Evaluates the regularized energy. `elastic` is the first integral,
/// `surface` the second integral outside the pre-crack tube.
pub fn at_energy(
    u: &DisplacementField,
    field: &PhaseField,
    params: &AtParams,
    material: &Material,
    mesh: &Mesh,
    precracks: &EdgeSet,
) -> Result<EnergyBreakdown, PhaseFieldError> {
    field.check(mesh)?;
    let conn = Connectivity::uncracked(mesh);
    if u.len() != conn.num_dofs() {
        return Err(SolveError::MismatchedConnectivity.into());
    }
    let geo = Geometry::new(mesh);
    let w = densities(mesh, &conn, material, &u.to_flat())?;
    let tube = tube_mask(mesh, precracks, 2.0 * params.eta);
    let (elastic, _, surface) = energy_parts(mesh, &geo, &w, &field.v, params, material, &tube);
    Ok(EnergyBreakdown { elastic, surface, total: elastic + surface, residual: u.residual, regularization: 0.0 })
}

/// The `v`-subproblem for fixed `u`: `M = diag(Σ_T (2A/3)(w_T + G/(4η))) + 2Gη·L`.
struct DamageOperator<'a> {
    mesh: &'a Mesh,
    geo: &'a Geometry,
    diag_mass: Vec<f64>,
    coupling: f64,
}

impl LinearOperator for DamageOperator<'_> {
    fn dim(&self) -> usize {
        self.diag_mass.len()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for ((yi, xi), m) in y.iter_mut().zip(x).zip(&self.diag_mass) {
            *yi = m * xi;
        }
        for (t, tri) in self.mesh.triangles.iter().enumerate() {
            let s = &self.geo.stiffness[t];
            for i in 0..3 {
                let mut acc = 0.0;
                for j in 0..3 {
                    acc += s[i][j] * x[tri[j]];
                }
                y[tri[i]] += self.coupling * acc;
            }
        }
    }

    fn diagonal(&self) -> Vec<f64> {
        let mut d = self.diag_mass.clone();
        for (t, tri) in self.mesh.triangles.iter().enumerate() {
            for i in 0..3 {
                d[tri[i]] += self.coupling * self.geo.stiffness[t][i][i];
            }
        }
        d
    }
}

/// Augments a linear operator with one extra unknown fixed at 1, turning
/// `M v = b` into a homogeneous masked problem.
struct Affine<'a, A> {
    inner: &'a A,
    rhs: &'a [f64],
}

impl<A: LinearOperator> LinearOperator for Affine<'_, A> {
    fn dim(&self) -> usize {
        self.inner.dim() + 1
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.inner.dim();
        self.inner.apply(&x[..n], &mut y[..n]);
        let s = x[n];
        for (yi, b) in y[..n].iter_mut().zip(self.rhs) {
            *yi -= b * s;
        }
        y[n] = -self.rhs.iter().zip(&x[..n]).map(|(b, v)| b * v).sum::<f64>();
    }

    fn diagonal(&self) -> Vec<f64> {
        let mut d = self.inner.diagonal();
        d.push(0.0);
        d
    }
}

/// Output of alternate minimization.
#[derive(Debug, Clone, PartialEq)]
pub struct AtResult {
    pub u: DisplacementField,
    pub field: PhaseField,
    /// Reported energy: elastic plus tube-excluded surface.
    pub energy: EnergyBreakdown,
    /// Minimized functional (surface including the tube) after each sweep,
    /// starting with the equilibrium for the initial field.
    pub history: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
    pub tube: Vec<bool>,
}

/// Alternates exact convex solves in `u` (fixed `v`) and `v` (fixed `u`).
///
/// `v` starts at 1 except on pre-crack nodes, where it is pinned to 0. It is
/// held at 1 on boundary nodes, where the displacement is prescribed.
pub fn alternate_minimize(
    mesh: &Mesh,
    precracks: &EdgeSet,
    bc: &BoundaryCondition,
    material: &Material,
    params: &AtParams,
    opts: &SolverOptions,
) -> Result<AtResult, PhaseFieldError> {
    let g = material.griffith();
    if !(g > 0.0) {
        return Err(PhaseFieldError::ZeroGriffith);
    }
    for e in precracks.iter() {
        mesh.check_edge(e)?;
    }
    let n = mesh.num_nodes();
    let conn = Connectivity::uncracked(mesh);
    let dirichlet = apply_bc(mesh, &conn, bc);
    let geo = Geometry::new(mesh);
    let tube = tube_mask(mesh, precracks, 2.0 * params.eta);
    let pinned = precrack_nodes(mesh, precracks);

    let mut v = vec![1.0; n];
    for &i in &pinned {
        v[i] = 0.0;
    }
    // v = 1 on the Dirichlet boundary, where the discrete model cannot break either
    let mut free: Vec<bool> = (0..=n).map(|i| i < n && !mesh.is_boundary_node(i)).collect();
    for &i in &pinned {
        free[i] = false;
    }
    free[n] = false;

    // rhs of the v-problem: (G/(2η))·Σ_{T∋i} A/3
    let mut rhs = vec![0.0; n];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        for &i in tri {
            rhs[i] += g / (2.0 * params.eta) * geo.area[t] / 3.0;
        }
    }

    let solve_u = |v: &[f64], warm: Option<&[f64]>| -> Result<Vec<f64>, SolveError> {
        let scale = (0..mesh.num_triangles()).map(|t| params.k_eta + mean_square(mesh, t, v)).collect();
        let system = assemble(mesh, &conn, material, opts.rho)?.with_scale(scale);
        Ok(equilibrium(&system, &dirichlet, warm, opts)?.to_flat())
    };
    let functional = |u: &[f64], v: &[f64]| -> Result<f64, SolveError> {
        let w = densities(mesh, &conn, material, u)?;
        let (e, s, _) = energy_parts(mesh, &geo, &w, v, params, material, &tube);
        Ok(e + s)
    };

    let mut u = solve_u(&v, None)?;
    let initial = functional(&u, &v)?;
    let mut history = vec![initial];
    let mut converged = false;
    let mut sweeps = 0;
    let slack = |e: f64| 1e-9 * e.abs().max(1e-300) + 1e-14;

    while sweeps < MAX_SWEEPS {
        sweeps += 1;
        // v-step
        let w = densities(mesh, &conn, material, &u)?;
        let mut diag_mass = vec![0.0; n];
        for (t, tri) in mesh.triangles.iter().enumerate() {
            for &i in tri {
                diag_mass[i] += 2.0 * geo.area[t] / 3.0 * (w[t] + g / (4.0 * params.eta));
            }
        }
        let op = DamageOperator { mesh, geo: &geo, diag_mass, coupling: 2.0 * g * params.eta };
        let aug = Affine { inner: &op, rhs: &rhs };
        let mut x = v.clone();
        x.push(1.0);
        let out = masked_pcg(
            &aug,
            &free,
            &mut x,
            CgOptions { tolerance: opts.tolerance, max_iterations: opts.max_iter_factor.saturating_mul(n.max(1)) },
        );
        if !out.converged {
            return Err(PhaseFieldError::NotConverged);
        }
        x.truncate(n);
        for (i, xi) in x.iter_mut().enumerate() {
            *xi = if free[i] { xi.clamp(0.0, 1.0) } else { v[i] };
        }
        v = x;
        // u-step
        u = solve_u(&v, Some(&u))?;
        let e = functional(&u, &v)?;
        let before = *history.last().expect("history starts non-empty");
        if e > before + slack(initial) {
            return Err(PhaseFieldError::EnergyIncrease { sweep: sweeps, before, after: e });
        }
        history.push(e);
        if before - e <= SWEEP_TOLERANCE * initial {
            converged = true;
            break;
        }
    }

    let field = PhaseField { v };
    let u = DisplacementField::from_flat(&u, 0.0, 0);
    let w = densities(mesh, &conn, material, &u.to_flat())?;
    let (elastic, _, surface) = energy_parts(mesh, &geo, &w, &field.v, params, material, &tube);
    Ok(AtResult {
        u,
        field,
        energy: EnergyBreakdown { elastic, surface, total: elastic + surface, ..Default::default() },
        history,
        sweeps,
        converged,
        tube,
    })
}

/// Surface integral (without `G`) per cell outside the pre-crack tube, in
/// length units. Triangles are assigned to cells by centroid.
pub fn at_emergent_lengths(
    field: &PhaseField,
    params: &AtParams,
    lattice: &CellLattice,
    mesh: &Mesh,
    precracks: &EdgeSet,
) -> CellLengths {
    let geo = Geometry::new(mesh);
    let tube = tube_mask(mesh, precracks, 2.0 * params.eta);
    let mut lengths = CellLengths::empty(lattice);
    for t in 0..mesh.num_triangles() {
        if !tube[t] {
            let s = geo.surface_density(mesh, t, &field.v, params.eta);
            lengths.add(lattice, mesh.triangle_centroid(t), s);
        }
    }
    lengths
}
