//! Structured triangular mesh with breakable interior edges.
//!
//! Every lattice cell is split into `n × n` square pixels and every pixel into
//! two right triangles along its main diagonal. Broken edges are realized by
//! duplicating nodes: around each node, the incident triangles are grouped
//! into classes connected through unbroken edges, and every class gets its
//! own displacement copy. A broken edge only opens when this actually
//! separates a fan, so the continuous field always stays representable.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;

use crate::geometry::{CellLattice, CrackGeometry, Vec2};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GridError {
    #[error("cell resolution must be at least 2 (got {0})")]
    ResolutionTooSmall(usize),
    #[error("cannot mesh an empty lattice")]
    EmptyLattice,
    #[error("edge {0} does not exist in the mesh")]
    EdgeOutOfRange(usize),
    #[error("edge {0} is a boundary edge and cannot break")]
    NotInteriorEdge(usize),
    #[error("edge {0} is listed both as pre-crack and as emergent")]
    OverlappingSets(usize),
    #[error(
        "polyline {polyline} of cell {cell} comes within {distance} grid spacings of the cell \
         boundary; at least one spacing is required"
    )]
    PrecrackNearCellBoundary { cell: usize, polyline: usize, distance: f64 },
    #[error("crack segment refers to cell {0}, which is not part of the mesh")]
    UnknownCell(usize),
    #[error("connectivity was built for a different crack set")]
    MismatchedConnectivity,
}

/// A sorted set of interior-edge indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct EdgeSet(Vec<usize>);

impl EdgeSet {
    pub fn new() -> Self {
        EdgeSet(Vec::new())
    }

    pub fn contains(&self, edge: usize) -> bool {
        self.0.binary_search(&edge).is_ok()
    }

    /// Returns `false` if the edge was already present.
    pub fn insert(&mut self, edge: usize) -> bool {
        match self.0.binary_search(&edge) {
            Ok(_) => false,
            Err(pos) => {
                self.0.insert(pos, edge);
                true
            }
        }
    }

    pub fn remove(&mut self, edge: usize) -> bool {
        match self.0.binary_search(&edge) {
            Ok(pos) => {
                self.0.remove(pos);
                true
            }
            Err(_) => false,
        }
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn union(&self, other: &EdgeSet) -> EdgeSet {
        self.iter().chain(other.iter()).collect()
    }

    pub fn is_subset(&self, other: &EdgeSet) -> bool {
        self.iter().all(|e| other.contains(e))
    }

    pub fn is_disjoint(&self, other: &EdgeSet) -> bool {
        self.iter().all(|e| !other.contains(e))
    }

    /// Sum of the lengths of the member edges.
    pub fn length(&self, mesh: &Mesh) -> f64 {
        self.iter().map(|e| mesh.interior_edges[e].length).fold(0.0, |a, b| a + b)
    }
}

impl FromIterator<usize> for EdgeSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        let mut v: Vec<usize> = iter.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        EdgeSet(v)
    }
}

/// An edge shared by two triangles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub nodes: [usize; 2],
    pub length: f64,
    pub triangles: [usize; 2],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryEdge {
    pub nodes: [usize; 2],
    pub length: f64,
    pub triangle: usize,
}

/// Conforming triangulation of the union of lattice cells.
#[derive(Debug, Clone)]
pub struct Mesh {
    epsilon: f64,
    resolution: usize,
    spacing: f64,
    cells: Vec<[i64; 2]>,
    pub nodes: Vec<Vec2>,
    /// Integer grid coordinates: `nodes[i] = grid[i] · h`.
    pub grid: Vec<[i64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    pub interior_edges: Vec<Edge>,
    pub boundary_edges: Vec<BoundaryEdge>,
    boundary_node: Vec<bool>,
    node_triangles: Vec<Vec<usize>>,
    node_edges: Vec<Vec<usize>>,
    node_neighbors: Vec<Vec<usize>>,
    node_lookup: BTreeMap<[i64; 2], usize>,
    edge_lookup: BTreeMap<[usize; 2], usize>,
}

/// Meshes every lattice cell with `n × n` pixels, two triangles per pixel.
///
/// Nodes are numbered row by row (by `y`, then `x`); nodes on shared cell
/// boundaries are shared.
pub fn build_grid(lattice: &CellLattice, n: usize) -> Result<Mesh, GridError> {
    if n < 2 {
        return Err(GridError::ResolutionTooSmall(n));
    }
    if lattice.is_empty() {
        return Err(GridError::EmptyLattice);
    }
    let epsilon = lattice.epsilon();
    let spacing = epsilon / n as f64;
    let ni = n as i64;

    // pixels keyed by [j, i] so iteration is row-major
    let mut pixels = BTreeSet::new();
    for cell in lattice.cells() {
        let [m, k] = cell.index;
        for b in 0..ni {
            for a in 0..ni {
                pixels.insert([k * ni + b, m * ni + a]);
            }
        }
    }
    let mut corners = BTreeSet::new();
    for &[j, i] in &pixels {
        for (di, dj) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
            corners.insert([j + dj, i + di]);
        }
    }
    let mut node_lookup = BTreeMap::new();
    let mut nodes = Vec::with_capacity(corners.len());
    let mut grid = Vec::with_capacity(corners.len());
    for (idx, &[j, i]) in corners.iter().enumerate() {
        node_lookup.insert([i, j], idx);
        nodes.push(Vec2::new(i as f64 * spacing, j as f64 * spacing));
        grid.push([i, j]);
    }

    let mut triangles = Vec::with_capacity(2 * pixels.len());
    for &[j, i] in &pixels {
        let p00 = node_lookup[&[i, j]];
        let p10 = node_lookup[&[i + 1, j]];
        let p11 = node_lookup[&[i + 1, j + 1]];
        let p01 = node_lookup[&[i, j + 1]];
        triangles.push([p00, p10, p11]);
        triangles.push([p00, p11, p01]);
    }

    let mut edge_tris: BTreeMap<[usize; 2], Vec<usize>> = BTreeMap::new();
    for (t, tri) in triangles.iter().enumerate() {
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            edge_tris.entry([a.min(b), a.max(b)]).or_default().push(t);
        }
    }
    let mut interior_edges = Vec::new();
    let mut boundary_edges = Vec::new();
    let mut edge_lookup = BTreeMap::new();
    let mut boundary_node = vec![false; nodes.len()];
    let mut node_edges = vec![Vec::new(); nodes.len()];
    let mut node_neighbors = vec![Vec::new(); nodes.len()];
    for (&[a, b], tris) in &edge_tris {
        let length = (nodes[b] - nodes[a]).norm();
        node_neighbors[a].push(b);
        node_neighbors[b].push(a);
        match tris.as_slice() {
            [t0, t1] => {
                let e = interior_edges.len();
                interior_edges.push(Edge { nodes: [a, b], length, triangles: [*t0, *t1] });
                edge_lookup.insert([a, b], e);
                node_edges[a].push(e);
                node_edges[b].push(e);
            }
            [t] => {
                boundary_edges.push(BoundaryEdge { nodes: [a, b], length, triangle: *t });
                boundary_node[a] = true;
                boundary_node[b] = true;
            }
            _ => unreachable!("structured mesh edge with {} triangles", tris.len()),
        }
    }
    let mut node_triangles = vec![Vec::new(); nodes.len()];
    for (t, tri) in triangles.iter().enumerate() {
        for &v in tri {
            node_triangles[v].push(t);
        }
    }
    for nb in &mut node_neighbors {
        nb.sort_unstable();
    }

    Ok(Mesh {
        epsilon,
        resolution: n,
        spacing,
        cells: lattice.cells().iter().map(|c| c.index).collect(),
        nodes,
        grid,
        triangles,
        interior_edges,
        boundary_edges,
        boundary_node,
        node_triangles,
        node_edges,
        node_neighbors,
        node_lookup,
        edge_lookup,
    })
}

impl Mesh {
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Pixels per cell side.
    pub fn resolution(&self) -> usize {
        self.resolution
    }

    /// Grid spacing `h = ε / n`.
    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn num_interior_edges(&self) -> usize {
        self.interior_edges.len()
    }

    pub fn is_boundary_node(&self, node: usize) -> bool {
        self.boundary_node[node]
    }

    /// Triangles containing `node`, ascending.
    pub fn node_triangles(&self, node: usize) -> &[usize] {
        &self.node_triangles[node]
    }

    /// Interior edges incident to `node`.
    pub fn node_edges(&self, node: usize) -> &[usize] {
        &self.node_edges[node]
    }

    /// Nodes joined to `node` by an edge, ascending.
    pub fn node_neighbors(&self, node: usize) -> &[usize] {
        &self.node_neighbors[node]
    }

    pub fn node_at(&self, grid: [i64; 2]) -> Option<usize> {
        self.node_lookup.get(&grid).copied()
    }

    /// Interior edge joining two nodes, if any.
    pub fn edge_between(&self, a: usize, b: usize) -> Option<usize> {
        self.edge_lookup.get(&[a.min(b), a.max(b)]).copied()
    }

    pub fn edge_midpoint(&self, edge: usize) -> Vec2 {
        let [a, b] = self.interior_edges[edge].nodes;
        (self.nodes[a] + self.nodes[b]) * 0.5
    }

    /// Signed area of a triangle (positive for counter-clockwise).
    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        let (p, q, r) = (self.nodes[a], self.nodes[b], self.nodes[c]);
        0.5 * ((q.x - p.x) * (r.y - p.y) - (r.x - p.x) * (q.y - p.y))
    }

    pub fn triangle_centroid(&self, t: usize) -> Vec2 {
        let [a, b, c] = self.triangles[t];
        (self.nodes[a] + self.nodes[b] + self.nodes[c]) * (1.0 / 3.0)
    }

    pub fn area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    /// Lattice indices `[m, n]` of the meshed cells, in lattice order.
    pub fn cells(&self) -> &[[i64; 2]] {
        &self.cells
    }

    pub fn check_edge(&self, edge: usize) -> Result<(), GridError> {
        if edge < self.interior_edges.len() {
            Ok(())
        } else {
            Err(GridError::EdgeOutOfRange(edge))
        }
    }
}

/// Broken interior edges, split into the prescribed pre-cracks `F_ε` and the
/// emergent edges `S_u \ F_ε`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CrackState {
    precrack: EdgeSet,
    emergent: EdgeSet,
}

impl CrackState {
    pub fn new(mesh: &Mesh, precrack: EdgeSet, emergent: EdgeSet) -> Result<Self, GridError> {
        for e in precrack.iter().chain(emergent.iter()) {
            mesh.check_edge(e)?;
        }
        if let Some(e) = emergent.iter().find(|&e| precrack.contains(e)) {
            return Err(GridError::OverlappingSets(e));
        }
        Ok(CrackState { precrack, emergent })
    }

    pub fn uncracked() -> Self {
        CrackState::default()
    }

    pub fn precrack(&self) -> &EdgeSet {
        &self.precrack
    }

    pub fn emergent(&self) -> &EdgeSet {
        &self.emergent
    }

    /// The discrete jump set: pre-cracks plus emergent edges.
    pub fn broken(&self) -> EdgeSet {
        self.precrack.union(&self.emergent)
    }

    pub fn is_broken(&self, edge: usize) -> bool {
        self.precrack.contains(edge) || self.emergent.contains(edge)
    }

    /// Same pre-cracks, one more emergent edge. Pre-crack edges are ignored.
    pub fn with_emergent(&self, edge: usize) -> Self {
        let mut next = self.clone();
        if !self.precrack.contains(edge) {
            next.emergent.insert(edge);
        }
        next
    }

    pub fn emergent_length(&self, mesh: &Mesh) -> f64 {
        self.emergent.length(mesh)
    }
}

/// Output of [`rasterize_cracks`].
#[derive(Debug, Clone, PartialEq)]
pub struct Rasterization {
    pub edges: EdgeSet,
    /// Length of the input polylines.
    pub polyline_length: f64,
    /// Length of the returned edge set.
    pub raster_length: f64,
}

impl Rasterization {
    /// `raster_length / polyline_length`; 1 for an empty input.
    pub fn length_ratio(&self) -> f64 {
        if self.polyline_length == 0.0 {
            1.0
        } else {
            self.raster_length / self.polyline_length
        }
    }
}

/// Snaps every pre-crack polyline onto the mesh.
///
/// Vertices snap to the nearest grid node and consecutive snapped vertices are
/// joined by a 4-connected staircase that stays closest to the straight
/// segment, so each polyline becomes a connected chain of horizontal and
/// vertical edges. A polyline closer than one spacing `h` to its cell
/// boundary is rejected because its snapped chain could touch the boundary.
pub fn rasterize_cracks(f: &CrackGeometry, mesh: &Mesh) -> Result<Rasterization, GridError> {
    let n = mesh.resolution as i64;
    let h = mesh.spacing;
    let mut edges = BTreeSet::new();
    let mut polyline_length = 0.0;

    let mut start = 0;
    while start < f.segments.len() {
        let key = (f.segments[start].cell, f.segments[start].polyline);
        let mut end = start;
        while end < f.segments.len() && (f.segments[end].cell, f.segments[end].polyline) == key {
            end += 1;
        }
        let segs = &f.segments[start..end];
        start = end;

        let (cell, polyline) = key;
        let [cm, cn] = *mesh.cells.get(cell).ok_or(GridError::UnknownCell(cell))?;
        let mut vertices = Vec::with_capacity(segs.len() + 1);
        vertices.push(segs[0].start);
        vertices.extend(segs.iter().map(|s| s.end));
        polyline_length += segs.iter().map(|s| s.length()).sum::<f64>();

        let local: Vec<(f64, f64)> =
            vertices.iter().map(|p| (p.x / h - (cm * n) as f64, p.y / h - (cn * n) as f64)).collect();
        let nf = n as f64;
        let closest = local.iter().map(|&(x, y)| x.min(y).min(nf - x).min(nf - y)).fold(f64::INFINITY, f64::min);
        if closest < 1.0 - 1e-9 {
            return Err(GridError::PrecrackNearCellBoundary { cell, polyline, distance: closest });
        }
        let snapped: Vec<[i64; 2]> = local
            .iter()
            .map(|&(x, y)| {
                let a = (libm::round(x) as i64).clamp(1, n - 1);
                let b = (libm::round(y) as i64).clamp(1, n - 1);
                [cm * n + a, cn * n + b]
            })
            .collect();
        for w in snapped.windows(2) {
            staircase(w[0], w[1], |p, q| {
                let a = mesh.node_lookup[&p];
                let b = mesh.node_lookup[&q];
                let e = mesh.edge_between(a, b).expect("staircase between interior cell nodes uses interior edges");
                edges.insert(e);
            });
        }
    }
    let edges: EdgeSet = edges.into_iter().collect();
    let raster_length = edges.length(mesh);
    Ok(Rasterization { edges, polyline_length, raster_length })
}

/// 4-connected grid walk from `a` to `b`, reporting each unit step.
fn staircase(a: [i64; 2], b: [i64; 2], mut step: impl FnMut([i64; 2], [i64; 2])) {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let (sx, sy) = (dx.signum(), dy.signum());
    // perpendicular offset of p from the segment, scaled by its length
    let off = |p: [i64; 2]| ((p[0] - a[0]) * dy - (p[1] - a[1]) * dx).abs();
    let mut cur = a;
    while cur != b {
        let nx = [cur[0] + sx, cur[1]];
        let ny = [cur[0], cur[1] + sy];
        let next = if cur[0] == b[0] {
            ny
        } else if cur[1] == b[1] || off(nx) <= off(ny) {
            nx
        } else {
            ny
        };
        step(cur, next);
        cur = next;
    }
}

/// Node-duplicated connectivity of a mesh under a set of broken edges.
///
/// Displacement degrees of freedom live on *copies*: copy `c` belongs to node
/// `dof_node[c]`, and triangle `t` uses copies `tri_dofs[t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Connectivity {
    pub tri_dofs: Vec<[usize; 3]>,
    pub dof_node: Vec<usize>,
    broken: EdgeSet,
}

/// Groups the triangles around `node` into classes joined by unbroken
/// edges. `labels[k]` receives the class of `mesh.node_triangles(node)[k]`;
/// classes are numbered by their smallest triangle. Returns the class count.
pub fn fan_classes(mesh: &Mesh, node: usize, is_broken: impl Fn(usize) -> bool, labels: &mut Vec<usize>) -> usize {
    let tris = &mesh.node_triangles[node];
    let k = tris.len();
    let mut parent: Vec<usize> = (0..k).collect();
    fn root(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for &e in &mesh.node_edges[node] {
        if is_broken(e) {
            continue;
        }
        let [t0, t1] = mesh.interior_edges[e].triangles;
        let (Some(a), Some(b)) = (tris.iter().position(|&t| t == t0), tris.iter().position(|&t| t == t1)) else {
            continue;
        };
        let (ra, rb) = (root(&mut parent, a), root(&mut parent, b));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    labels.clear();
    labels.resize(k, usize::MAX);
    let mut class_of_root = vec![usize::MAX; k];
    let mut count = 0;
    for i in 0..k {
        let r = root(&mut parent, i);
        if class_of_root[r] == usize::MAX {
            class_of_root[r] = count;
            count += 1;
        }
        labels[i] = class_of_root[r];
    }
    count
}

/// Splits nodes so that triangles on opposite sides of broken edges use
/// distinct displacement copies.
pub fn break_edges(mesh: &Mesh, broken: &EdgeSet) -> Result<Connectivity, GridError> {
    for e in broken.iter() {
        mesh.check_edge(e)?;
    }
    let mut tri_dofs = vec![[usize::MAX; 3]; mesh.triangles.len()];
    let mut dof_node = Vec::with_capacity(mesh.nodes.len());
    let mut labels = Vec::new();
    for node in 0..mesh.nodes.len() {
        let classes = fan_classes(mesh, node, |e| broken.contains(e), &mut labels);
        let base = dof_node.len();
        dof_node.extend(core::iter::repeat_n(node, classes));
        for (k, &t) in mesh.node_triangles[node].iter().enumerate() {
            let corner = mesh.triangles[t].iter().position(|&v| v == node).unwrap();
            tri_dofs[t][corner] = base + labels[k];
        }
    }
    Ok(Connectivity { tri_dofs, dof_node, broken: broken.clone() })
}

impl Connectivity {
    pub fn for_state(mesh: &Mesh, state: &CrackState) -> Result<Self, GridError> {
        break_edges(mesh, &state.broken())
    }

    pub fn uncracked(mesh: &Mesh) -> Self {
        break_edges(mesh, &EdgeSet::new()).expect("empty edge set is always valid")
    }

    /// Number of displacement copies.
    pub fn num_dofs(&self) -> usize {
        self.dof_node.len()
    }

    pub fn broken(&self) -> &EdgeSet {
        &self.broken
    }

    pub fn matches(&self, state: &CrackState) -> bool {
        self.broken == state.broken()
    }

    /// Number of connected pieces when triangles sharing a copy are joined.
    pub fn components(&self) -> usize {
        let n = self.dof_node.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn root(parent: &mut [usize], mut i: usize) -> usize {
            while parent[i] != i {
                parent[i] = parent[parent[i]];
                i = parent[i];
            }
            i
        }
        for tri in &self.tri_dofs {
            for k in 1..3 {
                let (a, b) = (root(&mut parent, tri[0]), root(&mut parent, tri[k]));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
        (0..n).filter(|&i| root(&mut parent, i) == i).count()
    }

    /// For a connectivity obtained from a superset of broken edges, maps each
    /// of its copies to the copy of `self` it refines. `None` if `finer` is
    /// not a refinement of `self`.
    pub fn refinement_map(&self, finer: &Connectivity) -> Option<Vec<usize>> {
        if finer.tri_dofs.len() != self.tri_dofs.len() {
            return None;
        }
        let mut map = vec![usize::MAX; finer.num_dofs()];
        for (fine, coarse) in finer.tri_dofs.iter().zip(&self.tri_dofs) {
            for k in 0..3 {
                let slot = &mut map[fine[k]];
                if *slot == usize::MAX {
                    *slot = coarse[k];
                } else if *slot != coarse[k] {
                    return None;
                }
            }
        }
        Some(map)
    }
}

/// Affine boundary displacement `u₀(x) = A·x + b`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BoundaryCondition {
    pub matrix: [[f64; 2]; 2],
    pub offset: Vec2,
}

impl BoundaryCondition {
    pub fn new(matrix: [[f64; 2]; 2], offset: Vec2) -> Self {
        BoundaryCondition { matrix, offset }
    }

    pub fn zero() -> Self {
        BoundaryCondition::default()
    }

    /// `u₀ = diag(t, 0)·x`.
    pub fn uniaxial(t: f64) -> Self {
        BoundaryCondition::new([[t, 0.0], [0.0, 0.0]], Vec2::ZERO)
    }

    pub fn scaled(&self, t: f64) -> Self {
        let m = self.matrix;
        BoundaryCondition::new([[m[0][0] * t, m[0][1] * t], [m[1][0] * t, m[1][1] * t]], self.offset * t)
    }

    pub fn is_finite(&self) -> bool {
        self.matrix.iter().flatten().all(|v| v.is_finite()) && self.offset.is_finite()
    }

    pub fn eval(&self, x: Vec2) -> [f64; 2] {
        let m = self.matrix;
        [m[0][0] * x.x + m[0][1] * x.y + self.offset.x, m[1][0] * x.x + m[1][1] * x.y + self.offset.y]
    }

    pub fn is_zero(&self) -> bool {
        self.matrix.iter().flatten().all(|&v| v == 0.0) && self.offset == Vec2::ZERO
    }
}

/// Pinned copies and their prescribed values.
///
/// `values` holds `u₀` evaluated at every copy's node; for free copies it is
/// just the affine lift used as a starting guess.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletMap {
    pub pinned: Vec<bool>,
    pub values: Vec<[f64; 2]>,
}

impl DirichletMap {
    pub fn num_pinned(&self) -> usize {
        self.pinned.iter().filter(|&&p| p).count()
    }
}

/// Pins every copy of every node on the outer boundary of the meshed region
/// to `u₀`.
pub fn apply_bc(mesh: &Mesh, conn: &Connectivity, bc: &BoundaryCondition) -> DirichletMap {
    let pinned = conn.dof_node.iter().map(|&v| mesh.boundary_node[v]).collect();
    let values = conn.dof_node.iter().map(|&v| bc.eval(mesh.nodes[v])).collect();
    DirichletMap { pinned, values }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_lattice, place_precracks, Domain, PreCrackPattern};

    /// One cell `[1/3, 2/3]²`.
    pub(crate) fn single_cell(n: usize) -> Mesh {
        let lattice = build_lattice(Domain::unit_square(), 1.0 / 3.0).unwrap();
        assert_eq!(lattice.len(), 1);
        build_grid(&lattice, n).unwrap()
    }

    #[test]
    fn two_by_two_mesh_audit() {
        let mesh = single_cell(2);
        assert_eq!(mesh.num_nodes(), 9);
        assert_eq!(mesh.num_triangles(), 8);
        assert_eq!(mesh.num_interior_edges(), 8);
        assert_eq!(mesh.boundary_edges.len(), 8);
        for e in &mesh.interior_edges {
            assert_ne!(e.triangles[0], e.triangles[1]);
            let [a, b] = e.nodes;
            assert_eq!(e.length, (mesh.nodes[b] - mesh.nodes[a]).norm());
        }
        for t in 0..mesh.num_triangles() {
            assert!(mesh.triangle_area(t) > 0.0);
        }
        assert!((mesh.area() - 1.0 / 9.0).abs() < 1e-15);
        // only the center node is off the boundary
        assert_eq!((0..9).filter(|&v| !mesh.is_boundary_node(v)).count(), 1);
    }

    #[test]
    fn adjacent_cells_share_nodes() {
        // two cells side by side: m ∈ {1, 2}, n = 1
        let d = Domain::new(Vec2::ZERO, 1.0, 0.75).unwrap();
        let lattice = build_lattice(d, 0.25).unwrap();
        assert_eq!(lattice.len(), 2);
        let mesh = build_grid(&lattice, 2).unwrap();
        assert_eq!(mesh.num_nodes(), 5 * 3);
        let mut seen = BTreeSet::new();
        assert!(mesh.grid.iter().all(|g| seen.insert(*g)));
    }

    #[test]
    fn build_grid_errors() {
        let lattice = build_lattice(Domain::unit_square(), 0.25).unwrap();
        assert_eq!(build_grid(&lattice, 1).unwrap_err(), GridError::ResolutionTooSmall(1));
        let empty = build_lattice(Domain::unit_square(), 1.0).unwrap();
        assert_eq!(build_grid(&empty, 4).unwrap_err(), GridError::EmptyLattice);
    }

    fn hsegment(y: f64) -> PreCrackPattern {
        PreCrackPattern::new(vec![vec![Vec2::new(0.25, y), Vec2::new(0.75, y)]])
    }

    #[test]
    fn horizontal_rasterization() {
        let lattice = build_lattice(Domain::unit_square(), 0.25).unwrap();
        let mesh = build_grid(&lattice, 8).unwrap();
        let f = place_precracks(&lattice, &hsegment(0.5)).unwrap();
        let r = rasterize_cracks(&f, &mesh).unwrap();
        assert_eq!(r.edges.len(), 4 * 4);
        for e in r.edges.iter() {
            let [a, b] = mesh.interior_edges[e].nodes;
            assert_eq!(mesh.grid[a][1], mesh.grid[b][1]);
        }
        let per_cell = r.raster_length / 4.0;
        assert!((per_cell - 0.5 * 0.25).abs() < 1e-15);
        assert!((r.length_ratio() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rasterization_edge_cases() {
        let lattice = build_lattice(Domain::unit_square(), 0.25).unwrap();
        let mesh = build_grid(&lattice, 8).unwrap();
        let r = rasterize_cracks(&CrackGeometry::default(), &mesh).unwrap();
        assert!(r.edges.is_empty());
        // 0.1·ε from the bottom edge, h = ε/8
        let f = place_precracks(&lattice, &hsegment(0.1)).unwrap();
        assert!(matches!(
            rasterize_cracks(&f, &mesh),
            Err(GridError::PrecrackNearCellBoundary { cell: 0, polyline: 0, .. })
        ));
    }

    #[test]
    fn diagonal_rasterization_is_a_chain() {
        let lattice = build_lattice(Domain::unit_square(), 0.25).unwrap();
        let mesh = build_grid(&lattice, 16).unwrap();
        let pattern = PreCrackPattern::new(vec![vec![Vec2::new(0.2, 0.3), Vec2::new(0.7, 0.6), Vec2::new(0.4, 0.8)]]);
        let f = place_precracks(&lattice, &pattern).unwrap();
        let r = rasterize_cracks(&f, &mesh).unwrap();
        let ratio = r.length_ratio();
        assert!((0.8..=core::f64::consts::SQRT_2 + 1e-12).contains(&ratio), "{ratio}");
        // every edge stays off the cell boundaries
        let n = 16i64;
        for e in r.edges.iter() {
            for v in mesh.interior_edges[e].nodes {
                let [i, j] = mesh.grid[v];
                assert!(i.rem_euclid(n) != 0 && j.rem_euclid(n) != 0);
            }
        }
        assert_eq!(r, rasterize_cracks(&f, &mesh).unwrap());
    }

    #[test]
    fn staircase_reaches_target_monotonically() {
        let mut steps = Vec::new();
        staircase([0, 0], [3, -2], |p, q| steps.push((p, q)));
        assert_eq!(steps.len(), 5);
        assert_eq!(steps.last().unwrap().1, [3, -2]);
        for (p, q) in steps {
            assert_eq!((q[0] - p[0]).abs() + (q[1] - p[1]).abs(), 1);
        }
    }

    #[test]
    fn empty_crack_set_is_identity() {
        let mesh = single_cell(2);
        let conn = Connectivity::uncracked(&mesh);
        assert_eq!(conn.num_dofs(), mesh.num_nodes());
        for (t, tri) in conn.tri_dofs.iter().enumerate() {
            assert_eq!(tri, &mesh.triangles[t]);
        }
    }

    #[test]
    fn isolated_edge_does_not_split() {
        let mesh = single_cell(4);
        // an edge between two interior nodes
        let e = (0..mesh.num_interior_edges())
            .find(|&e| mesh.interior_edges[e].nodes.iter().all(|&v| !mesh.is_boundary_node(v)))
            .unwrap();
        let conn = break_edges(&mesh, &[e].into_iter().collect()).unwrap();
        assert_eq!(conn.num_dofs(), mesh.num_nodes());
        // two consecutive edges through an interior node split that node
        let [a, b] = mesh.interior_edges[e].nodes;
        let (ga, gb) = (mesh.grid[a], mesh.grid[b]);
        let next = [2 * gb[0] - ga[0], 2 * gb[1] - ga[1]];
        let c = mesh.node_at(next).unwrap();
        let e2 = mesh.edge_between(b, c).unwrap();
        let conn = break_edges(&mesh, &[e, e2].into_iter().collect()).unwrap();
        assert_eq!(conn.num_dofs(), mesh.num_nodes() + 1);
        assert_eq!(conn.dof_node.iter().filter(|&&v| v == b).count(), 2);
    }

    #[test]
    fn edge_through_boundary_node_splits_it() {
        let mesh = single_cell(2);
        let center = (0..9).find(|&v| !mesh.is_boundary_node(v)).unwrap();
        let e = mesh.node_edges(center)[0];
        let conn = break_edges(&mesh, &[e].into_iter().collect()).unwrap();
        // the boundary endpoint splits, the center fan stays connected
        assert_eq!(conn.num_dofs(), mesh.num_nodes() + 1);
        let [t0, t1] = mesh.interior_edges[e].triangles;
        let shared: Vec<_> = conn.tri_dofs[t0].iter().filter(|d| conn.tri_dofs[t1].contains(d)).collect();
        assert_eq!(shared.len(), 1);
    }

    #[test]
    fn pixel_cut_out_floats() {
        let mesh = single_cell(4);
        // pixel with lower-left grid corner (cell origin + (1,1))
        let g0 = mesh.grid[0];
        let corner = |di: i64, dj: i64| mesh.node_at([g0[0] + 1 + di, g0[1] + 1 + dj]).unwrap();
        let ring = [(0, 0, 1, 0), (1, 0, 1, 1), (1, 1, 0, 1), (0, 1, 0, 0)];
        let broken: EdgeSet =
            ring.iter().map(|&(a, b, c, d)| mesh.edge_between(corner(a, b), corner(c, d)).unwrap()).collect();
        let conn = break_edges(&mesh, &broken).unwrap();
        assert_eq!(Connectivity::uncracked(&mesh).components(), 1);
        assert_eq!(conn.components(), 2);
    }

    #[test]
    fn break_edges_rejects_unknown_edges() {
        let mesh = single_cell(2);
        let bad: EdgeSet = [99].into_iter().collect();
        assert_eq!(break_edges(&mesh, &bad).unwrap_err(), GridError::EdgeOutOfRange(99));
    }

    #[test]
    fn crack_state_validation() {
        let mesh = single_cell(2);
        let a: EdgeSet = [1, 2].into_iter().collect();
        let b: EdgeSet = [2, 3].into_iter().collect();
        assert_eq!(CrackState::new(&mesh, a.clone(), b).unwrap_err(), GridError::OverlappingSets(2));
        let s = CrackState::new(&mesh, a, [3].into_iter().collect()).unwrap();
        assert_eq!(s.broken().as_slice(), &[1, 2, 3]);
        assert_eq!(s.with_emergent(1), s);
    }

    #[test]
    fn boundary_conditions() {
        let mesh = single_cell(2);
        let conn = Connectivity::uncracked(&mesh);
        let zero = apply_bc(&mesh, &conn, &BoundaryCondition::zero());
        assert_eq!(zero.num_pinned(), 8);
        assert!(zero.values.iter().all(|v| *v == [0.0, 0.0]));

        let uni = BoundaryCondition::uniaxial(0.1);
        assert_eq!(uni.eval(Vec2::new(1.0, 0.5)), [0.1, 0.0]);
        let shear = BoundaryCondition::new([[0.0, 0.1], [0.0, 0.0]], Vec2::ZERO);
        assert_eq!(shear.eval(Vec2::new(0.5, 1.0)), [0.1, 0.0]);

        // copies of a split boundary node carry identical values
        let center = (0..9).find(|&v| !mesh.is_boundary_node(v)).unwrap();
        let e = mesh.node_edges(center)[0];
        let conn = break_edges(&mesh, &[e].into_iter().collect()).unwrap();
        let map = apply_bc(&mesh, &conn, &uni);
        for (c, &v) in conn.dof_node.iter().enumerate() {
            assert_eq!(map.pinned[c], mesh.is_boundary_node(v));
            assert_eq!(map.values[c], uni.eval(mesh.nodes[v]));
        }
    }

    #[test]
    fn refinement_is_monotone_on_small_mesh() {
        let mesh = single_cell(2);
        let m = mesh.num_interior_edges();
        for mask in 0u32..(1 << m) {
            let k1: EdgeSet = (0..m).filter(|&e| mask & (1 << e) != 0).collect();
            let c1 = break_edges(&mesh, &k1).unwrap();
            for extra in 0..m {
                let mut k2 = k1.clone();
                if !k2.insert(extra) {
                    continue;
                }
                let c2 = break_edges(&mesh, &k2).unwrap();
                let map = c1.refinement_map(&c2).expect("K1 ⊆ K2 refines");
                assert!(c2.num_dofs() >= c1.num_dofs());
                // the embedding of K1 fields is injective: every K1 copy is hit
                let mut hit = vec![false; c1.num_dofs()];
                for &d in &map {
                    hit[d] = true;
                }
                assert!(hit.iter().all(|&h| h));
            }
        }
    }

    #[test]
    fn area_preserved_by_duplication() {
        let mesh = single_cell(4);
        let all: EdgeSet = (0..mesh.num_interior_edges()).collect();
        let conn = break_edges(&mesh, &all).unwrap();
        assert_eq!(conn.components(), mesh.num_triangles());
        let area: f64 = conn
            .tri_dofs
            .iter()
            .map(|tri| {
                let p: Vec<Vec2> = tri.iter().map(|&d| mesh.nodes[conn.dof_node[d]]).collect();
                0.5 * ((p[1].x - p[0].x) * (p[2].y - p[0].y) - (p[2].x - p[0].x) * (p[1].y - p[0].y))
            })
            .sum();
        assert_eq!(area, mesh.area());
    }
}
