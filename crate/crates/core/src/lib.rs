//! Discrete Mumford-Shah fracture energies on periodically microfractured
//! elastic bodies.
//!
//! The body is a rectangle tiled by a lattice of `ε`-cells, each carrying a
//! scaled copy of a unit-cell pre-crack pattern. Displacements live on a
//! structured triangular mesh whose interior edges can break; broken edges
//! release displacement continuity by duplicating nodes. The total energy of
//! a crack state is the equilibrium elastic energy plus `G` times the length
//! of the *emergent* (non pre-crack) broken edges.
//!
//! On top of that model the crate provides
//!
//! * [`minimize`]: an exhaustive oracle for tiny instances, greedy crack
//!   propagation at scale, and `δ` certificates comparing the two,
//! * [`damage`]: per-cell emergent crack lengths, active-cell counts and the
//!   bound chain `G·M(ε,l)·l·ε ≤ G·H¹(S_u \ F_ε) ≤ E_ε(u) ≤ B`,
//! * [`phasefield`]: an Ambrosio-Tortorelli backend used to cross-check the
//!   discrete energies.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod damage;
pub mod geometry;
pub mod grid;
pub mod linalg;
pub mod material;
pub mod minimize;
pub mod phasefield;
pub mod solve;

pub use damage::{CellLengths, ChainVerdict, DamageError, DamageReport};
pub use geometry::{CellLattice, CrackGeometry, Domain, GeometryError, PreCrackPattern, Vec2};
pub use grid::{BoundaryCondition, Connectivity, CrackState, DirichletMap, EdgeSet, GridError, Mesh};
pub use material::{Material, MaterialError, StrainTensor};
pub use minimize::{CandidatePolicy, MinimizeError, MinimizeResult, MinimizerOptions, Problem};
pub use phasefield::{AtParams, AtResult, PhaseField, PhaseFieldError};
pub use solve::{DisplacementField, EnergyBreakdown, SolveError, SolverOptions};
