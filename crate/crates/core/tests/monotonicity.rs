//! Enlarging the crack set never raises the equilibrium elastic energy.

use microfrac_core::geometry::{build_lattice, Domain};
use microfrac_core::grid::{build_grid, BoundaryCondition, CrackState, EdgeSet};
use microfrac_core::solve::solve_state;
use microfrac_core::{Material, SolverOptions};

#[test]
fn every_single_edge_extension_lowers_elastic_energy() {
    let lattice = build_lattice(Domain::unit_square(), 1.0 / 3.0).unwrap();
    let mesh = build_grid(&lattice, 2).unwrap();
    assert_eq!(mesh.num_interior_edges(), 8);
    let m = Material::new(1.0, 1.0, 1.0).unwrap();
    let bc = BoundaryCondition::uniaxial(0.1);
    let opts = SolverOptions::default();
    let elastic: Vec<f64> = (0u32..256)
        .map(|mask| {
            let em: EdgeSet = (0..8).filter(|i| mask & (1 << i) != 0).collect();
            let state = CrackState::new(&mesh, EdgeSet::new(), em).unwrap();
            solve_state(&mesh, &state, &bc, &m, &opts, None).unwrap().energy.elastic
        })
        .collect();
    let mut pairs = 0;
    for k1 in 0u32..256 {
        for i in 0..8 {
            if k1 & (1 << i) == 0 {
                let k2 = k1 | (1 << i);
                assert!(elastic[k2 as usize] <= elastic[k1 as usize] + 1e-9, "{k1:08b} -> {k2:08b}");
                pairs += 1;
            }
        }
    }
    assert_eq!(pairs, 8 * 128);
}
