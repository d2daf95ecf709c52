//! Active cells and damaged area.
//!
//! A cell is active when its emergent crack length reaches `ε·l`. Summing
//! over cells gives `G·M(ε,l)·l·ε ≤ G·H¹(S_u \ F_ε) ≤ E_ε(u) ≤ B` for any
//! upper bound `B`, hence `M(ε,l) ≤ B/(ε·G·l)` and a damaged area
//! `ε²·M(ε,l) ≤ ε·B/(G·l)`.
//!
//! Closed cells overlap on their boundaries, so every emergent edge is
//! assigned to exactly one cell: the lexicographically smallest origin whose
//! closed square contains the edge midpoint. Edges outside every cell are
//! tallied separately.

use alloc::vec::Vec;

use crate::geometry::{CellLattice, Vec2};
use crate::grid::{CrackState, Mesh};
use crate::material::Material;
use crate::solve::EnergyBreakdown;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DamageError {
    #[error("threshold length factor l must be positive (got {0})")]
    NonPositiveL(f64),
    #[error("damage report (E = {report}) and energy (E = {energy}) come from different runs")]
    MismatchedRun { report: f64, energy: f64 },
}

/// Emergent crack length per lattice cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellLengths {
    pub epsilon: f64,
    pub origins: Vec<Vec2>,
    pub per_cell: Vec<f64>,
    /// Length that falls in no cell.
    pub outside: f64,
}

impl CellLengths {
    pub fn empty(lattice: &CellLattice) -> Self {
        CellLengths {
            epsilon: lattice.epsilon(),
            origins: lattice.cells().iter().map(|c| c.origin).collect(),
            per_cell: alloc::vec![0.0; lattice.len()],
            outside: 0.0,
        }
    }

    /// Adds `length` to the cell owning `point`.
    pub fn add(&mut self, lattice: &CellLattice, point: Vec2, length: f64) {
        match assign_cell(lattice, point) {
            Some(c) => self.per_cell[c] += length,
            None => self.outside += length,
        }
    }

    pub fn in_cells(&self) -> f64 {
        self.per_cell.iter().fold(0.0, |a, b| a + b)
    }

    pub fn total(&self) -> f64 {
        self.in_cells() + self.outside
    }
}

/// Lexicographically smallest cell whose closed square contains `point`.
pub fn assign_cell(lattice: &CellLattice, point: Vec2) -> Option<usize> {
    let eps = lattice.epsilon();
    let tol = 1e-9 * eps;
    let (fx, fy) = (libm::floor(point.x / eps) as i64, libm::floor(point.y / eps) as i64);
    let mut best: Option<usize> = None;
    for m in [fx - 1, fx, fx + 1] {
        for n in [fy - 1, fy, fy + 1] {
            let Some(c) = lattice.find([m, n]) else { continue };
            let o = lattice.cells()[c].origin;
            let inside = point.x >= o.x - tol
                && point.x <= o.x + eps + tol
                && point.y >= o.y - tol
                && point.y <= o.y + eps + tol;
            if inside && best.is_none_or(|b| c < b) {
                best = Some(c);
            }
        }
    }
    best
}

/// `H¹(S_u(z))` for every cell `z`, from the emergent edges of `state`.
pub fn emergent_per_cell(state: &CrackState, mesh: &Mesh, lattice: &CellLattice) -> CellLengths {
    let mut lengths = CellLengths::empty(lattice);
    for e in state.emergent().iter() {
        lengths.add(lattice, mesh.edge_midpoint(e), mesh.interior_edges[e].length);
    }
    lengths
}

/// Per-run damage summary for one threshold `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct DamageReport {
    pub epsilon: f64,
    pub l: f64,
    pub per_cell: Vec<(Vec2, f64)>,
    pub outside: f64,
    /// Origins of active cells.
    pub active: Vec<Vec2>,
    /// `M(ε,l)`.
    pub m_count: usize,
    /// `ε²·M(ε,l)`.
    pub damaged_area: f64,
    /// `E_ε(u)` of the run the lengths came from.
    pub energy_total: Option<f64>,
    /// `B/(G·l)` for the upper bound `B` the caller supplied.
    pub bound_rhs: Option<f64>,
}

impl DamageReport {
    pub fn with_energy(mut self, total: f64) -> Self {
        self.energy_total = Some(total);
        self
    }

    /// Emergent length inside the cell union.
    pub fn length_in_cells(&self) -> f64 {
        self.per_cell.iter().fold(0.0, |a, (_, v)| a + v)
    }

    /// `ε·M(ε,l)`.
    pub fn eps_times_m(&self) -> f64 {
        self.epsilon * self.m_count as f64
    }
}

/// Marks cells with emergent length `≥ ε·l` as active.
///
/// The comparison allows a relative `1e-12` of floating-point slack so that a
/// chain of edges summing to exactly `ε·l` counts.
pub fn classify_active(lengths: &CellLengths, l: f64) -> Result<DamageReport, DamageError> {
    if !(l.is_finite() && l > 0.0) {
        return Err(DamageError::NonPositiveL(l));
    }
    let eps = lengths.epsilon;
    let threshold = eps * l * (1.0 - 1e-12);
    let per_cell: Vec<(Vec2, f64)> = lengths.origins.iter().copied().zip(lengths.per_cell.iter().copied()).collect();
    let active: Vec<Vec2> = per_cell.iter().filter(|(_, v)| *v >= threshold).map(|(o, _)| *o).collect();
    let m_count = active.len();
    Ok(DamageReport {
        epsilon: eps,
        l,
        per_cell,
        outside: lengths.outside,
        active,
        m_count,
        damaged_area: eps * eps * m_count as f64,
        energy_total: None,
        bound_rhs: None,
    })
}

/// Every side of the bound chain for one run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainVerdict {
    /// `G·M(ε,l)·l·ε`.
    pub active_lower: f64,
    /// `G·Σ_z H¹(S_u(z))`.
    pub cell_surface: f64,
    pub surface: f64,
    pub total: f64,
    /// Caller's upper bound `B ≥ E_ε(u)`.
    pub bound: f64,
    pub m_count: usize,
    /// `(1/ε)·B/(G·l)`.
    pub m_bound: f64,
    pub damaged_area: f64,
    /// `ε·B/(G·l)`.
    pub area_bound: f64,
    /// `G·M·l·ε ≤ G·Σ_z H¹(S_u(z)) ≤ surface`.
    pub lower_holds: bool,
    /// `surface ≤ total`.
    pub surface_holds: bool,
    /// `total ≤ B`, `M ≤ m_bound`, `area ≤ area_bound`.
    pub bound_holds: bool,
}

impl ChainVerdict {
    pub fn pass(&self) -> bool {
        self.lower_holds && self.surface_holds && self.bound_holds
    }
}

/// Absolute slack in the chain comparisons.
pub const CHAIN_SLACK: f64 = 1e-9;

/// Evaluates the chain `G·M·l·ε ≤ G·H¹ ≤ E_ε ≤ B` and the resulting bounds on
/// `M(ε,l)` and the damaged area.
pub fn check_bound_chain(
    report: &DamageReport,
    energy: &EnergyBreakdown,
    material: &Material,
    bound: f64,
) -> Result<ChainVerdict, DamageError> {
    if let Some(t) = report.energy_total {
        if t != energy.total {
            return Err(DamageError::MismatchedRun { report: t, energy: energy.total });
        }
    }
    let g = material.griffith();
    let (eps, l) = (report.epsilon, report.l);
    let active_lower = g * report.m_count as f64 * l * eps;
    let cell_surface = g * report.length_in_cells();
    let (m_bound, area_bound) =
        if g > 0.0 { (bound / (eps * g * l), eps * bound / (g * l)) } else { (f64::INFINITY, f64::INFINITY) };
    let m = report.m_count as f64;
    Ok(ChainVerdict {
        active_lower,
        cell_surface,
        surface: energy.surface,
        total: energy.total,
        bound,
        m_count: report.m_count,
        m_bound,
        damaged_area: report.damaged_area,
        area_bound,
        lower_holds: active_lower <= cell_surface + CHAIN_SLACK && cell_surface <= energy.surface + CHAIN_SLACK,
        surface_holds: energy.surface <= energy.total + CHAIN_SLACK,
        bound_holds: energy.total <= bound + CHAIN_SLACK
            && m <= m_bound * (1.0 + 1e-12)
            && report.damaged_area <= area_bound * (1.0 + 1e-12),
    })
}

/// RMS distance of active-cell centers from their total-least-squares line,
/// in units of `ε`. `None` with fewer than two active cells.
pub fn straightness(report: &DamageReport) -> Option<f64> {
    let m = report.active.len();
    if m < 2 {
        return None;
    }
    let half = 0.5 * report.epsilon;
    let centers: Vec<Vec2> = report.active.iter().map(|o| *o + Vec2::new(half, half)).collect();
    let mean = centers.iter().fold(Vec2::ZERO, |a, &c| a + c) * (1.0 / m as f64);
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for c in &centers {
        let d = *c - mean;
        sxx += d.x * d.x;
        syy += d.y * d.y;
        sxy += d.x * d.y;
    }
    let (sxx, syy, sxy) = (sxx / m as f64, syy / m as f64, sxy / m as f64);
    // smallest eigenvalue of the scatter matrix = mean squared normal offset
    let lo = 0.5 * (sxx + syy) - libm::hypot(0.5 * (sxx - syy), sxy);
    Some(libm::sqrt(lo.max(0.0)) / report.epsilon)
}
