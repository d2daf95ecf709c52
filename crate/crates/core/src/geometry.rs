//! The `ε`-cell lattice over a rectangular domain and the scaled pre-crack
//! distribution `F_ε = ⋃ (z + ε F_z)`.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::fmt;
use core::ops::{Add, Mul, Sub};

/// A point or vector in the plane.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn norm(self) -> f64 {
        libm::hypot(self.x, self.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, rhs: f64) -> Vec2 {
        Vec2::new(self.x * rhs, self.y * rhs)
    }
}

/// Distance from `p` to the segment `a`–`b`.
pub fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let d = b - a;
    let len2 = d.dot(d);
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(d) / len2).clamp(0.0, 1.0);
    (p - (a + d * t)).norm()
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeometryError {
    #[error("domain width and height must be positive and finite (got {width} x {height})")]
    InvalidDomain { width: f64, height: f64 },
    #[error("epsilon must be positive and finite (got {0})")]
    InvalidEpsilon(f64),
    #[error("invalid pre-crack pattern: {0}")]
    InvalidPattern(PatternViolation),
    #[error("pattern override refers to cell {cell}, but the lattice has {cells} cells")]
    UnknownCell { cell: usize, cells: usize },
}

/// The open rectangle `origin + (0,width) × (0,height)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Domain {
    origin: Vec2,
    width: f64,
    height: f64,
}

impl Domain {
    pub fn new(origin: Vec2, width: f64, height: f64) -> Result<Self, GeometryError> {
        let ok = origin.is_finite() && width.is_finite() && height.is_finite() && width > 0.0 && height > 0.0;
        if !ok {
            return Err(GeometryError::InvalidDomain { width, height });
        }
        Ok(Domain { origin, width, height })
    }

    pub fn unit_square() -> Self {
        Domain { origin: Vec2::ZERO, width: 1.0, height: 1.0 }
    }

    pub fn origin(&self) -> Vec2 {
        self.origin
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn height(&self) -> f64 {
        self.height
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }
}

/// One lattice cell `D_z = z + εY` with `z = (εm, εn)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeCell {
    pub index: [i64; 2],
    pub origin: Vec2,
}

/// The cells `z + εY` (Y the closed unit square) contained in the open domain.
#[derive(Debug, Clone, PartialEq)]
pub struct CellLattice {
    epsilon: f64,
    cells: Vec<LatticeCell>,
    domain: Domain,
}

/// Relative slack used when deciding whether a closed cell touches the
/// domain boundary. Cells closer than this to `∂Ω` count as touching.
const BOUNDARY_SLACK: f64 = 1e-9;

/// Enumerates `Z(ε,Ω)`: every `z = (εm, εn)` whose closed cell lies inside the
/// open domain, sorted lexicographically by origin.
pub fn build_lattice(domain: Domain, epsilon: f64) -> Result<CellLattice, GeometryError> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(GeometryError::InvalidEpsilon(epsilon));
    }
    let slack = BOUNDARY_SLACK * epsilon;
    let axis = |lo: f64, len: f64| -> Vec<i64> {
        let hi = lo + len;
        let first = libm::floor(lo / epsilon) as i64 - 1;
        let last = libm::ceil(hi / epsilon) as i64 + 1;
        (first..=last)
            .filter(|&m| {
                let a = m as f64 * epsilon;
                let b = (m + 1) as f64 * epsilon;
                a > lo + slack && b < hi - slack
            })
            .collect()
    };
    let xs = axis(domain.origin.x, domain.width);
    let ys = axis(domain.origin.y, domain.height);
    let mut cells = Vec::with_capacity(xs.len() * ys.len());
    for &m in &xs {
        for &n in &ys {
            cells.push(LatticeCell { index: [m, n], origin: Vec2::new(m as f64 * epsilon, n as f64 * epsilon) });
        }
    }
    Ok(CellLattice { epsilon, cells, domain })
}

impl CellLattice {
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn cells(&self) -> &[LatticeCell] {
        &self.cells
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    /// `N(ε)`.
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// `N(ε)·ε² / A(Ω)`.
    pub fn coverage_ratio(&self) -> f64 {
        self.cells.len() as f64 * self.epsilon * self.epsilon / self.domain.area()
    }

    /// Position of the cell with lattice index `[m, n]`, if present.
    pub fn find(&self, index: [i64; 2]) -> Option<usize> {
        self.cells.binary_search_by(|c| c.index.cmp(&index)).ok()
    }

    pub fn center(&self, cell: usize) -> Vec2 {
        let h = 0.5 * self.epsilon;
        self.cells[cell].origin + Vec2::new(h, h)
    }
}

/// `N(ε)·ε² / A(Ω)` for `lattice`.
pub fn coverage_ratio(lattice: &CellLattice) -> f64 {
    lattice.coverage_ratio()
}

/// A unit-cell crack pattern `F_z`: polylines in `(0,1)²` coordinates.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PreCrackPattern {
    pub polylines: Vec<Vec<Vec2>>,
}

/// First invariant of [`PreCrackPattern`] that a pattern breaks.
#[derive(Debug, Clone, PartialEq)]
pub enum PatternViolation {
    NoCurves,
    TooFewVertices { polyline: usize, count: usize },
    NonFiniteVertex { polyline: usize, vertex: usize },
    VertexNotInterior { polyline: usize, vertex: usize, point: Vec2 },
    ZeroLength { polyline: usize },
}

impl fmt::Display for PatternViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PatternViolation::NoCurves => write!(f, "pattern has no polylines"),
            PatternViolation::TooFewVertices { polyline, count } => {
                write!(f, "polyline {polyline} has {count} vertices, need at least 2")
            }
            PatternViolation::NonFiniteVertex { polyline, vertex } => {
                write!(f, "polyline {polyline} vertex {vertex} is not finite")
            }
            PatternViolation::VertexNotInterior { polyline, vertex, point } => write!(
                f,
                "polyline {polyline} vertex {vertex} at ({}, {}) is not strictly inside (0,1)^2",
                point.x, point.y
            ),
            PatternViolation::ZeroLength { polyline } => {
                write!(f, "polyline {polyline} has zero total length")
            }
        }
    }
}

fn polyline_length(points: &[Vec2]) -> f64 {
    points.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
}

impl PreCrackPattern {
    pub fn new(polylines: Vec<Vec<Vec2>>) -> Self {
        PreCrackPattern { polylines }
    }

    /// Builds a pattern from flat `[x0, y0, x1, y1, ...]` coordinate arrays.
    /// Returns `None` if an array has odd length.
    pub fn from_flat(arrays: &[Vec<f64>]) -> Option<Self> {
        let mut polylines = Vec::with_capacity(arrays.len());
        for a in arrays {
            if a.len() % 2 != 0 {
                return None;
            }
            polylines.push(a.chunks(2).map(|c| Vec2::new(c[0], c[1])).collect());
        }
        Some(PreCrackPattern { polylines })
    }

    pub fn validate(&self) -> Result<(), PatternViolation> {
        if self.polylines.is_empty() {
            return Err(PatternViolation::NoCurves);
        }
        for (pi, line) in self.polylines.iter().enumerate() {
            if line.len() < 2 {
                return Err(PatternViolation::TooFewVertices { polyline: pi, count: line.len() });
            }
            for (vi, &p) in line.iter().enumerate() {
                if !p.is_finite() {
                    return Err(PatternViolation::NonFiniteVertex { polyline: pi, vertex: vi });
                }
                if !(p.x > 0.0 && p.x < 1.0 && p.y > 0.0 && p.y < 1.0) {
                    return Err(PatternViolation::VertexNotInterior { polyline: pi, vertex: vi, point: p });
                }
            }
            if polyline_length(line) <= 0.0 {
                return Err(PatternViolation::ZeroLength { polyline: pi });
            }
        }
        Ok(())
    }

    /// Total length in unit-cell coordinates.
    pub fn length(&self) -> f64 {
        self.polylines.iter().map(|l| polyline_length(l)).fold(0.0, |a, b| a + b)
    }
}

/// Checks the [`PreCrackPattern`] invariants.
pub fn validate_pattern(pattern: &PreCrackPattern) -> Result<(), PatternViolation> {
    pattern.validate()
}

/// One straight piece of `F_ε` in global coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrackSegment {
    pub start: Vec2,
    pub end: Vec2,
    /// Index of the owning cell in the lattice.
    pub cell: usize,
    /// Index of the polyline within the owning cell's pattern.
    pub polyline: usize,
}

impl CrackSegment {
    pub fn length(&self) -> f64 {
        (self.end - self.start).norm()
    }
}

/// The pre-crack set `F_ε` realized as global segments.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CrackGeometry {
    pub segments: Vec<CrackSegment>,
    pub total_length: f64,
}

/// Maps the same unit-cell pattern into every cell: `p ↦ z + εp`.
pub fn place_precracks(lattice: &CellLattice, pattern: &PreCrackPattern) -> Result<CrackGeometry, GeometryError> {
    place_precracks_with_overrides(lattice, pattern, &BTreeMap::new())
}

/// Like [`place_precracks`], but cells listed in `overrides` (keyed by cell
/// position in the lattice) use their own pattern.
pub fn place_precracks_with_overrides(
    lattice: &CellLattice,
    pattern: &PreCrackPattern,
    overrides: &BTreeMap<usize, PreCrackPattern>,
) -> Result<CrackGeometry, GeometryError> {
    pattern.validate().map_err(GeometryError::InvalidPattern)?;
    for (&cell, p) in overrides {
        if cell >= lattice.len() {
            return Err(GeometryError::UnknownCell { cell, cells: lattice.len() });
        }
        p.validate().map_err(GeometryError::InvalidPattern)?;
    }
    let eps = lattice.epsilon;
    let mut segments = Vec::new();
    for (ci, cell) in lattice.cells.iter().enumerate() {
        let pat = overrides.get(&ci).unwrap_or(pattern);
        for (pi, line) in pat.polylines.iter().enumerate() {
            for w in line.windows(2) {
                segments.push(CrackSegment {
                    start: cell.origin + w[0] * eps,
                    end: cell.origin + w[1] * eps,
                    cell: ci,
                    polyline: pi,
                });
            }
        }
    }
    let total_length = segments.iter().map(CrackSegment::length).fold(0.0, |a, b| a + b);
    Ok(CrackGeometry { segments, total_length })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn seg(a: (f64, f64), b: (f64, f64)) -> PreCrackPattern {
        PreCrackPattern::new(vec![vec![Vec2::new(a.0, a.1), Vec2::new(b.0, b.1)]])
    }

    #[test]
    fn pattern_validation() {
        assert_eq!(seg((0.25, 0.5), (0.75, 0.5)).validate(), Ok(()));
        assert!(matches!(
            seg((0.0, 0.5), (0.5, 0.5)).validate(),
            Err(PatternViolation::VertexNotInterior { polyline: 0, vertex: 0, .. })
        ));
        assert_eq!(PreCrackPattern::default().validate(), Err(PatternViolation::NoCurves));
        assert_eq!(seg((0.5, 0.5), (0.5, 0.5)).validate(), Err(PatternViolation::ZeroLength { polyline: 0 }));
        let short = PreCrackPattern::new(vec![vec![Vec2::new(0.5, 0.5)]]);
        assert!(matches!(short.validate(), Err(PatternViolation::TooFewVertices { .. })));
    }

    #[test]
    fn lattice_examples() {
        let d = Domain::unit_square();
        let l = build_lattice(d, 0.25).unwrap();
        let origins: Vec<_> = l.cells().iter().map(|c| (c.origin.x, c.origin.y)).collect();
        assert_eq!(origins, vec![(0.25, 0.25), (0.25, 0.5), (0.5, 0.25), (0.5, 0.5)]);
        assert_eq!(build_lattice(d, 0.125).unwrap().len(), 36);
        assert_eq!(build_lattice(d, 1.0).unwrap().len(), 0);
        assert!(build_lattice(d, 0.0).is_err());
        assert!(build_lattice(d, -1.0).is_err());
    }

    #[test]
    fn coverage_examples() {
        let d = Domain::unit_square();
        assert_eq!(coverage_ratio(&build_lattice(d, 0.25).unwrap()), 0.25);
        assert_eq!(coverage_ratio(&build_lattice(d, 0.125).unwrap()), 0.5625);
        let r = coverage_ratio(&build_lattice(d, 1.0 / 64.0).unwrap());
        assert!((r - (62.0f64 / 64.0) * (62.0 / 64.0)).abs() < 1e-15);
    }

    #[test]
    fn lattice_on_offset_domain() {
        let d = Domain::new(Vec2::new(-0.3, 0.1), 1.0, 0.5).unwrap();
        let l = build_lattice(d, 0.2).unwrap();
        for c in l.cells() {
            assert!(c.origin.x > -0.3 && c.origin.x + 0.2 < 0.7);
            assert!(c.origin.y > 0.1 && c.origin.y + 0.2 < 0.6);
        }
        // m ∈ {-1,0,1,2}, n ∈ {1}
        assert_eq!(l.len(), 4);
    }

    #[test]
    fn precrack_placement() {
        let l = build_lattice(Domain::unit_square(), 0.25).unwrap();
        let g = place_precracks(&l, &seg((0.25, 0.5), (0.75, 0.5))).unwrap();
        assert_eq!(g.segments.len(), 4);
        let s = g.segments[0];
        assert_eq!(s.start, Vec2::new(0.3125, 0.375));
        assert_eq!(s.end, Vec2::new(0.4375, 0.375));
        assert!((g.total_length - 0.5).abs() < 1e-15);

        let empty = build_lattice(Domain::unit_square(), 1.0).unwrap();
        let g = place_precracks(&empty, &seg((0.25, 0.5), (0.75, 0.5))).unwrap();
        assert!(g.segments.is_empty());
        assert_eq!(g.total_length, 0.0);

        assert!(place_precracks(&l, &seg((0.0, 0.5), (0.5, 0.5))).is_err());
    }

    #[test]
    fn overrides_replace_single_cells() {
        let l = build_lattice(Domain::unit_square(), 0.25).unwrap();
        let mut ov = BTreeMap::new();
        ov.insert(2, seg((0.5, 0.2), (0.5, 0.8)));
        let g = place_precracks_with_overrides(&l, &seg((0.25, 0.5), (0.75, 0.5)), &ov).unwrap();
        let c2: Vec<_> = g.segments.iter().filter(|s| s.cell == 2).collect();
        assert_eq!(c2.len(), 1);
        assert_eq!(c2[0].start.x, c2[0].end.x);
        ov.insert(9, seg((0.5, 0.2), (0.5, 0.8)));
        assert!(matches!(
            place_precracks_with_overrides(&l, &seg((0.25, 0.5), (0.75, 0.5)), &ov),
            Err(GeometryError::UnknownCell { cell: 9, .. })
        ));
    }
}
