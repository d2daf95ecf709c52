//! Minimization of `E_ε` over crack states that contain the pre-cracks.
//!
//! * [`exhaustive_oracle`] enumerates every subset of a small candidate set
//!   and returns the exact discrete minimizer.
//! * [`greedy_propagate`] breaks one edge at a time, always the one with the
//!   most negative energy change, until no single break pays off.
//! * [`delta_certificate`] measures how far a result is above the oracle,
//!   i.e. the smallest `δ` for which it is a `δ`-approximate minimizer.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::grid::{fan_classes, BoundaryCondition, CrackState, EdgeSet, GridError, Mesh};
use crate::linalg::cholesky_solve;
use crate::material::{elastic_density, Material};
use crate::solve::{solve_state, DisplacementField, EnergyBreakdown, Equilibrium, Kernels, SolveError, SolverOptions};
use crate::Connectivity;

/// Largest candidate set [`exhaustive_oracle`] accepts (`2¹⁶` solves).
pub const ORACLE_CAP: usize = 16;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MinimizeError {
    #[error("{count} candidate edges exceed the exhaustive search cap of {cap}")]
    TooManyCandidates { count: usize, cap: usize },
    #[error("unknown candidate policy `{0}` (expected `all` or `tip-neighborhood(r)`)")]
    UnknownPolicy(String),
    #[error("results come from different instances")]
    MismatchedInstances,
    #[error("result energy is below the oracle minimum by {0:e}; candidate sets differ")]
    BelowOracle(f64),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Which unbroken edges a search may break next.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CandidatePolicy {
    /// Every unbroken interior edge.
    All,
    /// Unbroken interior edges within `r` edge-adjacency steps of a broken
    /// edge; `r = 1` means sharing a node with one.
    TipNeighborhood(usize),
}

impl FromStr for CandidatePolicy {
    type Err = MinimizeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s == "all" {
            return Ok(CandidatePolicy::All);
        }
        s.strip_prefix("tip-neighborhood(")
            .and_then(|rest| rest.strip_suffix(')'))
            .and_then(|r| r.trim().parse::<usize>().ok())
            .filter(|&r| r >= 1)
            .map(CandidatePolicy::TipNeighborhood)
            .ok_or_else(|| MinimizeError::UnknownPolicy(s.into()))
    }
}

impl fmt::Display for CandidatePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CandidatePolicy::All => write!(f, "all"),
            CandidatePolicy::TipNeighborhood(r) => write!(f, "tip-neighborhood({r})"),
        }
    }
}

/// Unbroken interior edges eligible under `policy`, ascending.
pub fn candidate_edges(mesh: &Mesh, state: &CrackState, policy: CandidatePolicy) -> EdgeSet {
    let unbroken = |e: &usize| !state.is_broken(*e);
    match policy {
        CandidatePolicy::All => (0..mesh.num_interior_edges()).filter(unbroken).collect(),
        CandidatePolicy::TipNeighborhood(r) => {
            // node distance from the broken set; an edge qualifies when one
            // endpoint is within r − 1 of it
            let mut dist = vec![usize::MAX; mesh.num_nodes()];
            let mut frontier = Vec::new();
            for e in state.broken().iter() {
                for v in mesh.interior_edges[e].nodes {
                    if dist[v] != 0 {
                        dist[v] = 0;
                        frontier.push(v);
                    }
                }
            }
            for d in 1..r {
                let mut next = Vec::new();
                for &v in &frontier {
                    for &w in mesh.node_neighbors(v) {
                        if dist[w] == usize::MAX {
                            dist[w] = d;
                            next.push(w);
                        }
                    }
                }
                frontier = next;
            }
            (0..mesh.num_interior_edges())
                .filter(unbroken)
                .filter(|&e| mesh.interior_edges[e].nodes.iter().any(|&v| dist[v] < r))
                .collect()
        }
    }
}

/// How greedy search prices a single candidate break.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Evaluation {
    /// Full equilibrium solve per candidate.
    Global,
    /// Re-solve only the copies within `rings` node rings of the candidate,
    /// everything else frozen. The relief found this way never exceeds the
    /// true relief, so accepted moves always lower the global energy.
    Local { rings: usize },
    /// `Global` up to [`MinimizerOptions::auto_global_dofs`] unknowns,
    /// `Local { rings: 2 }` above.
    Auto,
}

impl FromStr for Evaluation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "global" => Ok(Evaluation::Global),
            "auto" => Ok(Evaluation::Auto),
            other => other
                .strip_prefix("local(")
                .and_then(|r| r.strip_suffix(')'))
                .and_then(|r| r.trim().parse::<usize>().ok())
                .filter(|&r| r >= 1)
                .map(|rings| Evaluation::Local { rings })
                .ok_or_else(|| format!("unknown evaluation `{other}`")),
        }
    }
}

impl fmt::Display for Evaluation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Evaluation::Global => write!(f, "global"),
            Evaluation::Local { rings } => write!(f, "local({rings})"),
            Evaluation::Auto => write!(f, "auto"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinimizerOptions {
    pub policy: CandidatePolicy,
    pub solver: SolverOptions,
    /// Greedy stops when no break lowers the energy by more than this.
    pub stop_threshold: f64,
    /// Upper bound on accepted greedy moves; `None` for unbounded.
    pub max_steps: Option<usize>,
    pub evaluation: Evaluation,
    pub auto_global_dofs: usize,
}

impl Default for MinimizerOptions {
    fn default() -> Self {
        MinimizerOptions {
            policy: CandidatePolicy::TipNeighborhood(1),
            solver: SolverOptions::default(),
            stop_threshold: 1e-10,
            max_steps: None,
            evaluation: Evaluation::Auto,
            auto_global_dofs: 5000,
        }
    }
}

/// One minimization instance: mesh, pre-crack edges, loading and material.
#[derive(Debug, Clone, Copy)]
pub struct Problem<'a> {
    pub mesh: &'a Mesh,
    pub precracks: &'a EdgeSet,
    pub bc: &'a BoundaryCondition,
    pub material: &'a Material,
}

impl Problem<'_> {
    /// Hash identifying the instance, used to refuse cross-instance comparisons.
    pub fn fingerprint(&self) -> u64 {
        let mut h = Fnv::new();
        h.write(self.mesh.num_nodes() as u64);
        h.write(self.mesh.num_triangles() as u64);
        h.write(self.mesh.spacing().to_bits());
        for e in self.precracks.iter() {
            h.write(e as u64);
        }
        for v in self.bc.matrix.iter().flatten() {
            h.write(v.to_bits());
        }
        h.write(self.bc.offset.x.to_bits());
        h.write(self.bc.offset.y.to_bits());
        h.write(self.material.lambda().to_bits());
        h.write(self.material.mu().to_bits());
        h.write(self.material.griffith().to_bits());
        h.finish()
    }

    fn precrack_state(&self) -> CrackState {
        CrackState::new(self.mesh, self.precracks.clone(), EdgeSet::new())
            .expect("pre-crack edges were validated against the mesh")
    }

    fn solve(
        &self,
        state: &CrackState,
        opts: &SolverOptions,
        warm: Option<&Equilibrium>,
    ) -> Result<Equilibrium, SolveError> {
        solve_state(self.mesh, state, self.bc, self.material, opts, warm.map(|w| (&w.conn, &w.u)))
    }
}

struct Fnv(u64);

impl Fnv {
    fn new() -> Self {
        Fnv(0xcbf2_9ce4_8422_2325)
    }
    fn write(&mut self, v: u64) {
        for b in v.to_le_bytes() {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0100_0000_01b3);
        }
    }
    fn finish(&self) -> u64 {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinimizeResult {
    pub state: CrackState,
    pub conn: Connectivity,
    pub u: DisplacementField,
    pub energy: EnergyBreakdown,
    /// Gap to the exact discrete minimum, when known.
    pub delta_certificate: Option<f64>,
    /// Global equilibrium solves performed.
    pub evaluations: usize,
    /// Local patch solves performed (greedy with local evaluation).
    pub local_solves: usize,
    /// Total energy after each accepted step, starting with the baseline.
    pub history: Vec<f64>,
    pub instance: u64,
}

impl MinimizeResult {
    fn from_equilibrium(eq: Equilibrium, instance: u64) -> Self {
        MinimizeResult {
            history: vec![eq.energy.total],
            state: eq.state,
            conn: eq.conn,
            u: eq.u,
            energy: eq.energy,
            delta_certificate: None,
            evaluations: 1,
            local_solves: 0,
            instance,
        }
    }
}

fn check_precracks(problem: &Problem<'_>) -> Result<(), MinimizeError> {
    for e in problem.precracks.iter() {
        problem.mesh.check_edge(e)?;
    }
    Ok(())
}

/// Equilibrium with exactly the pre-cracks broken. Its energy has no surface
/// part and bounds `inf E_ε` from above.
pub fn baseline(problem: &Problem<'_>, opts: &SolverOptions) -> Result<Equilibrium, MinimizeError> {
    check_precracks(problem)?;
    Ok(problem.solve(&problem.precrack_state(), opts, None)?)
}

pub fn baseline_energy(problem: &Problem<'_>, opts: &SolverOptions) -> Result<EnergyBreakdown, MinimizeError> {
    baseline(problem, opts).map(|eq| eq.energy)
}

/// Equilibrium energy of the same mesh and loading with nothing broken.
pub fn uncracked_energy(problem: &Problem<'_>, opts: &SolverOptions) -> Result<EnergyBreakdown, MinimizeError> {
    Ok(problem.solve(&CrackState::uncracked(), opts, None)?.energy)
}

fn energy_tie_tolerance(reference: f64) -> f64 {
    1e-12 * reference.abs().max(1.0)
}

/// Exact minimizer of `E_ε` over `precracks ∪ S` for every `S ⊆ candidates`.
///
/// Ties within `1e-12` (relative) go to the smaller emergent length, then to
/// the lexicographically smaller edge list.
pub fn exhaustive_oracle(
    problem: &Problem<'_>,
    candidates: &EdgeSet,
    opts: &SolverOptions,
) -> Result<MinimizeResult, MinimizeError> {
    check_precracks(problem)?;
    let cands: Vec<usize> = candidates.iter().filter(|&e| !problem.precracks.contains(e)).collect();
    if cands.len() > ORACLE_CAP {
        return Err(MinimizeError::TooManyCandidates { count: cands.len(), cap: ORACLE_CAP });
    }
    for &e in &cands {
        problem.mesh.check_edge(e)?;
    }
    let base = baseline(problem, opts)?;
    let mesh = problem.mesh;
    let mut best = base.clone();
    let mut best_len = 0.0;
    let mut evaluations = 1;
    for mask in 1u32..(1u32 << cands.len()) {
        let emergent: EdgeSet =
            cands.iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, &e)| e).collect();
        let state = CrackState::new(mesh, problem.precracks.clone(), emergent)?;
        let eq = problem.solve(&state, opts, Some(&base))?;
        evaluations += 1;
        let total = eq.energy.total;
        let tol = energy_tie_tolerance(best.energy.total);
        let len = eq.state.emergent_length(mesh);
        let better = if total < best.energy.total - tol {
            true
        } else if total <= best.energy.total + tol {
            len < best_len - 1e-15
                || (len <= best_len + 1e-15 && eq.state.emergent().as_slice() < best.state.emergent().as_slice())
        } else {
            false
        };
        if better {
            best = eq;
            best_len = len;
        }
    }
    let mut result = MinimizeResult::from_equilibrium(best, problem.fingerprint());
    result.history = vec![base.energy.total];
    if result.state != base.state {
        result.history.push(result.energy.total);
    }
    result.evaluations = evaluations;
    result.delta_certificate = Some(0.0);
    Ok(result)
}

/// Number of displacement copies `node` would have with `extra` also broken.
fn classes_with(mesh: &Mesh, state: &CrackState, node: usize, extra: usize, buf: &mut Vec<usize>) -> usize {
    fan_classes(mesh, node, |e| e == extra || state.is_broken(e), buf)
}

fn current_classes(conn: &Connectivity, mesh: &Mesh, node: usize) -> usize {
    let mut seen: Vec<usize> = Vec::new();
    for &t in mesh.node_triangles(node) {
        let k = mesh.triangles[t].iter().position(|&v| v == node).unwrap();
        let d = conn.tri_dofs[t][k];
        if !seen.contains(&d) {
            seen.push(d);
        }
    }
    seen.len()
}

/// Whether breaking `edge` splits a fan at one of its free endpoints. If it
/// does not, the admissible displacements are unchanged and the break can
/// only add surface energy.
fn break_opens(mesh: &Mesh, cur: &Equilibrium, edge: usize, buf: &mut Vec<usize>) -> bool {
    mesh.interior_edges[edge].nodes.iter().any(|&v| {
        !mesh.is_boundary_node(v) && classes_with(mesh, &cur.state, v, edge, buf) > current_classes(&cur.conn, mesh, v)
    })
}

/// Elastic relief from breaking `edge` when only copies near the edge may
/// move. Returns `None` if the local system is numerically singular.
fn local_relief(
    mesh: &Mesh,
    material: &Material,
    kernels: &Kernels,
    shift: f64,
    cur: &Equilibrium,
    edge: usize,
    rings: usize,
) -> Option<f64> {
    let ends = mesh.interior_edges[edge].nodes;

    // free nodes: non-boundary nodes within `rings` steps of the edge
    let mut depth: BTreeMap<usize, usize> = BTreeMap::new();
    let mut frontier: Vec<usize> = ends.to_vec();
    for &v in &frontier {
        depth.insert(v, 0);
    }
    for d in 1..=rings {
        let mut next = Vec::new();
        for &v in &frontier {
            for &w in mesh.node_neighbors(v) {
                if let alloc::collections::btree_map::Entry::Vacant(slot) = depth.entry(w) {
                    slot.insert(d);
                    next.push(w);
                }
            }
        }
        frontier = next;
    }
    let is_free = |v: usize| depth.contains_key(&v) && !mesh.is_boundary_node(v);

    let mut patch: Vec<usize> =
        depth.keys().filter(|&&v| is_free(v)).flat_map(|&v| mesh.node_triangles(v).iter().copied()).collect();
    patch.sort_unstable();
    patch.dedup();

    // new fan labels at the edge endpoints
    let mut labels = [Vec::new(), Vec::new()];
    for (i, &v) in ends.iter().enumerate() {
        classes_with(mesh, &cur.state, v, edge, &mut labels[i]);
    }

    #[derive(PartialEq, Eq, PartialOrd, Ord, Clone, Copy)]
    enum Key {
        Split(usize, usize),
        Copy(usize),
    }
    let mut keys: BTreeMap<Key, usize> = BTreeMap::new();
    // corner → Some(local index) or None (frozen)
    let mut corner_local: Vec<[Option<usize>; 3]> = Vec::with_capacity(patch.len());
    let mut x0: Vec<f64> = Vec::new();
    for &t in &patch {
        let mut slots = [None; 3];
        for k in 0..3 {
            let v = mesh.triangles[t][k];
            if !is_free(v) {
                continue;
            }
            let key = match ends.iter().position(|&e| e == v) {
                Some(i) => {
                    let pos = mesh.node_triangles(v).iter().position(|&s| s == t).unwrap();
                    Key::Split(v, labels[i][pos])
                }
                None => Key::Copy(cur.conn.tri_dofs[t][k]),
            };
            let next = keys.len();
            let idx = *keys.entry(key).or_insert_with(|| {
                let u = cur.u.values[cur.conn.tri_dofs[t][k]];
                x0.push(u[0]);
                x0.push(u[1]);
                next
            });
            slots[k] = Some(idx);
        }
        corner_local.push(slots);
    }
    let n = 2 * keys.len();
    if n == 0 {
        return Some(0.0);
    }
    let mut a = vec![0.0; n * n];
    let mut rhs = vec![0.0; n];
    for i in 0..n {
        a[i * n + i] += shift;
    }
    for (pi, &t) in patch.iter().enumerate() {
        let ker = kernels.of(t);
        let slots = corner_local[pi];
        let frozen: [f64; 6] = core::array::from_fn(|r| {
            let k = r / 2;
            if slots[k].is_some() {
                0.0
            } else {
                cur.u.values[cur.conn.tri_dofs[t][k]][r % 2]
            }
        });
        for r in 0..6 {
            let Some(lr) = slots[r / 2] else { continue };
            let gr = 2 * lr + r % 2;
            for c in 0..6 {
                match slots[c / 2] {
                    Some(lc) => a[gr * n + 2 * lc + c % 2] += ker.k[r][c],
                    None => rhs[gr] -= ker.k[r][c] * frozen[c],
                }
            }
        }
    }
    if !cholesky_solve(&mut a, n, &mut rhs) {
        return None;
    }
    let x = rhs;
    let patch_energy = |vals: &[f64]| -> f64 {
        patch
            .iter()
            .enumerate()
            .map(|(pi, &t)| {
                let slots = corner_local[pi];
                let u: [f64; 6] = core::array::from_fn(|r| match slots[r / 2] {
                    Some(l) => vals[2 * l + r % 2],
                    None => cur.u.values[cur.conn.tri_dofs[t][r / 2]][r % 2],
                });
                let ker = kernels.of(t);
                ker.area * elastic_density(&ker.strain(&u), material)
            })
            .sum()
    };
    Some((patch_energy(&x0) - patch_energy(&x)).max(0.0))
}

/// Single-edge greedy descent on `E_ε` starting from the pre-crack baseline.
///
/// Each step prices every candidate break, accepts the most negative change
/// (lowest edge index on ties) and re-solves globally. It stops when no
/// break lowers the total energy by more than `stop_threshold`.
pub fn greedy_propagate(problem: &Problem<'_>, opts: &MinimizerOptions) -> Result<MinimizeResult, MinimizeError> {
    let mesh = problem.mesh;
    let base = baseline(problem, &opts.solver)?;
    let mut evaluations = 1;
    let mut local_solves = 0;
    let mut history = vec![base.energy.total];
    let mut cur = base;
    let griffith = problem.material.griffith();

    let evaluation = match opts.evaluation {
        Evaluation::Auto if 2 * cur.conn.num_dofs() <= opts.auto_global_dofs => Evaluation::Global,
        Evaluation::Auto => Evaluation::Local { rings: 2 },
        other => other,
    };
    let kernels = Kernels::new(mesh, problem.material)?;
    let h = mesh.spacing();
    let shift = 2.0 * opts.solver.rho * h * h;
    let mut buf = Vec::new();

    let mut steps = 0;
    loop {
        if opts.max_steps.is_some_and(|m| steps >= m) {
            break;
        }
        let candidates = candidate_edges(mesh, &cur.state, opts.policy);
        let mut best: Option<(f64, usize, Option<Equilibrium>)> = None;
        for e in candidates.iter() {
            let cost = griffith * mesh.interior_edges[e].length;
            if !break_opens(mesh, &cur, e, &mut buf) {
                // no relief possible: change = cost ≥ 0
                continue;
            }
            let (delta, solved) = match evaluation {
                Evaluation::Local { rings } => {
                    local_solves += 1;
                    match local_relief(mesh, problem.material, &kernels, shift, &cur, e, rings) {
                        Some(relief) => (cost - relief, None),
                        None => {
                            let eq = problem.solve(&cur.state.with_emergent(e), &opts.solver, Some(&cur))?;
                            evaluations += 1;
                            (eq.energy.total - cur.energy.total, Some(eq))
                        }
                    }
                }
                _ => {
                    let eq = problem.solve(&cur.state.with_emergent(e), &opts.solver, Some(&cur))?;
                    evaluations += 1;
                    (eq.energy.total - cur.energy.total, Some(eq))
                }
            };
            if delta < -opts.stop_threshold && best.as_ref().is_none_or(|b| delta < b.0) {
                best = Some((delta, e, solved));
            }
        }
        let Some((_, edge, solved)) = best else { break };
        let next = match solved {
            Some(eq) => eq,
            None => {
                evaluations += 1;
                problem.solve(&cur.state.with_emergent(edge), &opts.solver, Some(&cur))?
            }
        };
        if next.energy.total >= cur.energy.total {
            // local pricing promised a decrease the global solve cannot confirm
            break;
        }
        history.push(next.energy.total);
        cur = next;
        steps += 1;
    }

    let mut result = MinimizeResult::from_equilibrium(cur, problem.fingerprint());
    result.history = history;
    result.evaluations = evaluations;
    result.local_solves = local_solves;
    Ok(result)
}

/// `result.total − oracle.total`: the smallest `δ` making `result` a
/// `δ`-approximate minimizer of the oracle's instance.
pub fn delta_certificate(result: &MinimizeResult, oracle: &MinimizeResult) -> Result<f64, MinimizeError> {
    if result.instance != oracle.instance {
        return Err(MinimizeError::MismatchedInstances);
    }
    let gap = result.energy.total - oracle.energy.total;
    if gap < -energy_tie_tolerance(oracle.energy.total) {
        return Err(MinimizeError::BelowOracle(-gap));
    }
    Ok(gap.max(0.0))
}
