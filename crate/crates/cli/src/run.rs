//! Experiment orchestration: one scale, single runs and sweeps.

use std::collections::BTreeMap;
use std::time::Instant;

use microfrac_core::damage::{
    check_bound_chain, classify_active, emergent_per_cell, straightness, CellLengths, ChainVerdict, DamageReport,
};
use microfrac_core::geometry::{build_lattice, place_precracks_with_overrides, CellLattice};
use microfrac_core::grid::{build_grid, rasterize_cracks, CrackState, EdgeSet, Mesh};
use microfrac_core::minimize::{
    baseline_energy, candidate_edges, delta_certificate, exhaustive_oracle, greedy_propagate, CandidatePolicy,
    MinimizeResult, Problem,
};
use microfrac_core::phasefield::{alternate_minimize, at_emergent_lengths, AtParams};
use microfrac_core::{DamageError, EnergyBreakdown, GeometryError, GridError, MinimizeError, PhaseFieldError};
use rayon::prelude::*;

use crate::config::{Backend, ConfigError, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("configuration: {0}")]
    Config(#[from] ConfigError),
    #[error("epsilon {epsilon}: {error}")]
    Geometry { epsilon: f64, error: GeometryError },
    #[error("epsilon {epsilon}: {error}")]
    Grid { epsilon: f64, error: GridError },
    #[error("epsilon {epsilon}: {error}")]
    Minimize { epsilon: f64, error: MinimizeError },
    #[error("epsilon {epsilon}: {error}")]
    PhaseField { epsilon: f64, error: PhaseFieldError },
    #[error("epsilon {epsilon}: {error}")]
    Damage { epsilon: f64, error: DamageError },
    #[error("pattern_override: cell {cell:?} is not in the lattice at epsilon {epsilon}")]
    UnknownOverrideCell { cell: [i64; 2], epsilon: f64 },
    #[error("{0}")]
    Usage(String),
    #[error("worker pool: {0}")]
    Pool(String),
}

/// A lattice, its mesh and the rasterized pre-cracks for one `ε`.
#[derive(Debug, Clone)]
pub struct Instance {
    pub epsilon: f64,
    pub lattice: CellLattice,
    pub mesh: Mesh,
    pub precracks: EdgeSet,
    /// Rasterized over polyline length.
    pub raster_ratio: Option<f64>,
}

pub fn prepare(cfg: &RunConfig, epsilon: f64) -> Result<Instance, RunError> {
    let lattice =
        build_lattice(cfg.domain()?, epsilon).map_err(|source| RunError::Geometry { epsilon, error: source })?;
    let mesh = build_grid(&lattice, cfg.cell_resolution).map_err(|source| RunError::Grid { epsilon, error: source })?;
    let (precracks, raster_ratio) = match cfg.pattern() {
        None => (EdgeSet::new(), None),
        Some(pattern) => {
            let mut overrides = BTreeMap::new();
            for (cell, p) in cfg.overrides() {
                let idx = lattice.find(cell).ok_or(RunError::UnknownOverrideCell { cell, epsilon })?;
                overrides.insert(idx, p);
            }
            let geometry = place_precracks_with_overrides(&lattice, &pattern, &overrides)
                .map_err(|source| RunError::Geometry { epsilon, error: source })?;
            let r = rasterize_cracks(&geometry, &mesh).map_err(|source| RunError::Grid { epsilon, error: source })?;
            let ratio = r.length_ratio();
            (r.edges, Some(ratio))
        }
    };
    Ok(Instance { epsilon, lattice, mesh, precracks, raster_ratio })
}

/// Outcome of minimizing at one scale.
#[derive(Debug, Clone)]
pub struct ScaleRun {
    pub instance: Instance,
    pub backend: Backend,
    pub baseline: EnergyBreakdown,
    pub achieved: EnergyBreakdown,
    /// Emergent edges of the discrete backend (empty for the phase field).
    pub emergent: EdgeSet,
    pub lengths: CellLengths,
    pub delta_certificate: Option<f64>,
    pub converged: bool,
    pub steps: usize,
    pub wall_ms: f64,
}

impl ScaleRun {
    pub fn emergent_length(&self) -> f64 {
        self.lengths.total()
    }

    pub fn state(&self) -> CrackState {
        CrackState::new(&self.instance.mesh, self.instance.precracks.clone(), self.emergent.clone())
            .expect("edges come from the same mesh")
    }
}

fn problem<'a>(
    inst: &'a Instance,
    bc: &'a microfrac_core::BoundaryCondition,
    material: &'a microfrac_core::Material,
) -> Problem<'a> {
    Problem { mesh: &inst.mesh, precracks: &inst.precracks, bc, material }
}

/// Unbroken edges of the pre-cracked state: the search space of every
/// candidate policy.
pub fn search_space(inst: &Instance) -> EdgeSet {
    let state = CrackState::new(&inst.mesh, inst.precracks.clone(), EdgeSet::new()).expect("valid pre-cracks");
    candidate_edges(&inst.mesh, &state, CandidatePolicy::All)
}

/// Runs the configured backend at one scale. With `with_oracle`, the discrete
/// backend also runs the exhaustive oracle when the search space has at most
/// `candidate_cap` edges and records the `δ` certificate.
pub fn run_scale(cfg: &RunConfig, epsilon: f64, with_oracle: bool) -> Result<ScaleRun, RunError> {
    let start = Instant::now();
    let inst = prepare(cfg, epsilon)?;
    let (bc, material) = (cfg.bc(), cfg.material());
    let p = problem(&inst, &bc, &material);
    let minimize = |source| RunError::Minimize { epsilon, error: source };
    let baseline = baseline_energy(&p, &cfg.solver()).map_err(minimize)?;

    let run = match cfg.backend {
        Backend::Discrete => {
            let result = greedy_propagate(&p, &cfg.minimizer()).map_err(minimize)?;
            let space = search_space(&inst);
            let delta = if with_oracle && space.len() <= cfg.candidate_cap {
                let oracle = exhaustive_oracle(&p, &space, &cfg.solver()).map_err(minimize)?;
                Some(delta_certificate(&result, &oracle).map_err(minimize)?)
            } else {
                None
            };
            let MinimizeResult { state, energy, history, .. } = result;
            let lengths = emergent_per_cell(&state, &inst.mesh, &inst.lattice);
            ScaleRun {
                backend: Backend::Discrete,
                baseline,
                achieved: energy,
                emergent: state.emergent().clone(),
                lengths,
                delta_certificate: delta,
                converged: true,
                steps: history.len() - 1,
                wall_ms: 0.0,
                instance: inst,
            }
        }
        Backend::PhaseField => {
            let h = inst.mesh.spacing();
            let params = match cfg.eta {
                Some(eta) => AtParams::new(eta, cfg.k_eta, h),
                None => AtParams::new(2.0 * h, cfg.k_eta, h),
            }
            .map_err(|source| RunError::PhaseField { epsilon, error: source })?;
            let at = alternate_minimize(&inst.mesh, &inst.precracks, &bc, &material, &params, &cfg.solver())
                .map_err(|source| RunError::PhaseField { epsilon, error: source })?;
            let lengths = at_emergent_lengths(&at.field, &params, &inst.lattice, &inst.mesh, &inst.precracks);
            ScaleRun {
                backend: Backend::PhaseField,
                baseline,
                achieved: at.energy,
                emergent: EdgeSet::new(),
                lengths,
                delta_certificate: None,
                converged: at.converged,
                steps: at.sweeps,
                wall_ms: 0.0,
                instance: inst,
            }
        }
    };
    Ok(ScaleRun { wall_ms: start.elapsed().as_secs_f64() * 1e3, ..run })
}

/// One `(ε, l)` result row.
#[derive(Debug, Clone)]
pub struct Row {
    pub epsilon: f64,
    pub l: f64,
    pub n_cells: usize,
    pub coverage_ratio: f64,
    pub baseline_total: f64,
    pub achieved_total: f64,
    pub surface: f64,
    pub emergent_length: f64,
    pub report: DamageReport,
    pub verdict: ChainVerdict,
    pub straightness: Option<f64>,
    pub wall_time_ms: f64,
    pub delta_certificate: Option<f64>,
}

impl Row {
    pub fn m_count(&self) -> usize {
        self.report.m_count
    }

    pub fn eps_times_m(&self) -> f64 {
        self.report.eps_times_m()
    }

    pub fn damaged_area(&self) -> f64 {
        self.report.damaged_area
    }

    /// `ε·B/(G·l)`.
    pub fn area_bound_rhs(&self) -> f64 {
        self.verdict.area_bound
    }

    pub fn chain_pass(&self) -> bool {
        self.verdict.pass()
    }
}

/// Upper bound `B` used in the chain: the largest achieved total.
pub fn sweep_bound(runs: &[ScaleRun]) -> f64 {
    runs.iter().map(|r| r.achieved.total).fold(0.0, f64::max)
}

/// Rows ordered by `ε` descending, then `l` ascending.
pub fn rows(cfg: &RunConfig, runs: &[ScaleRun], bound: f64) -> Result<Vec<Row>, RunError> {
    let material = cfg.material();
    let mut out = Vec::new();
    let mut runs: Vec<&ScaleRun> = runs.iter().collect();
    runs.sort_by(|a, b| b.instance.epsilon.total_cmp(&a.instance.epsilon));
    for run in runs {
        let epsilon = run.instance.epsilon;
        for &l in &cfg.l_values {
            let damage = |source| RunError::Damage { epsilon, error: source };
            let report = classify_active(&run.lengths, l).map_err(damage)?.with_energy(run.achieved.total);
            let verdict = check_bound_chain(&report, &run.achieved, &material, bound).map_err(damage)?;
            let straight = straightness(&report);
            out.push(Row {
                epsilon,
                l,
                n_cells: run.instance.lattice.len(),
                coverage_ratio: run.instance.lattice.coverage_ratio(),
                baseline_total: run.baseline.total,
                achieved_total: run.achieved.total,
                surface: run.achieved.surface,
                emergent_length: run.emergent_length(),
                report: DamageReport { bound_rhs: Some(bound / (material.griffith() * l)), ..report },
                verdict,
                straightness: straight,
                wall_time_ms: run.wall_ms,
                delta_certificate: run.delta_certificate,
            });
        }
    }
    Ok(out)
}

/// Results of a sweep; `failure` holds the first error in `ε` order, in
/// which case `runs` has only the scales before it.
#[derive(Debug)]
pub struct Sweep {
    pub runs: Vec<ScaleRun>,
    pub failure: Option<RunError>,
}

impl Sweep {
    pub fn converged(&self) -> bool {
        self.failure.is_none() && self.runs.iter().all(|r| r.converged)
    }
}

/// Runs every `ε` of the configuration on a pool of `workers` threads
/// (0 for one per core). Results come back in `ε` order.
pub fn run_sweep(cfg: &RunConfig, workers: usize, with_oracle: bool) -> Result<Sweep, RunError> {
    let pool =
        rayon::ThreadPoolBuilder::new().num_threads(workers).build().map_err(|e| RunError::Pool(e.to_string()))?;
    let results: Vec<Result<ScaleRun, RunError>> =
        pool.install(|| cfg.epsilons.par_iter().map(|&eps| run_scale(cfg, eps, with_oracle)).collect());
    let mut runs = Vec::new();
    for r in results {
        match r {
            Ok(run) => runs.push(run),
            Err(e) => return Ok(Sweep { runs, failure: Some(e) }),
        }
    }
    Ok(Sweep { runs, failure: None })
}
