use microfrac_core::geometry::{build_lattice, place_precracks, Domain, PreCrackPattern, Vec2};
use microfrac_core::grid::{build_grid, rasterize_cracks, BoundaryCondition, CrackState, EdgeSet};
use microfrac_core::material::{elastic_density, sym_grad};
use microfrac_core::minimize::{baseline_energy, uncracked_energy, Problem};
use microfrac_core::solve::solve_state;
use microfrac_core::{Material, SolverOptions};

fn vertical_slit() -> PreCrackPattern {
    PreCrackPattern::new(vec![vec![Vec2::new(0.5, 0.25), Vec2::new(0.5, 0.75)]])
}

#[test]
fn energy_scales_quadratically_with_load() {
    let lattice = build_lattice(Domain::unit_square(), 0.25).unwrap();
    let mesh = build_grid(&lattice, 8).unwrap();
    let pre = rasterize_cracks(&place_precracks(&lattice, &vertical_slit()).unwrap(), &mesh).unwrap().edges;
    let m = Material::new(1.0, 1.0, 1.0).unwrap();
    let state = CrackState::new(&mesh, pre, EdgeSet::new()).unwrap();
    let opts = SolverOptions { tolerance: 1e-12, ..Default::default() };
    let base = solve_state(&mesh, &state, &BoundaryCondition::uniaxial(1.0), &m, &opts, None).unwrap();
    for t in [0.1, 0.5, 3.0] {
        let eq = solve_state(&mesh, &state, &BoundaryCondition::uniaxial(t), &m, &opts, None).unwrap();
        let expect = t * t * base.energy.elastic;
        assert!((eq.energy.elastic - expect).abs() <= 1e-9 * expect, "t = {t}");
    }
}

#[test]
fn uncracked_affine_solution_is_exact() {
    let lattice = build_lattice(Domain::unit_square(), 0.125).unwrap();
    let mesh = build_grid(&lattice, 8).unwrap();
    let a = [[0.02, -0.01], [0.03, -0.015]];
    let bc = BoundaryCondition::new(a, Vec2::new(0.1, 0.2));
    let m = Material::new(1.5, 0.8, 1.0).unwrap();
    let eq = solve_state(&mesh, &CrackState::uncracked(), &bc, &m, &SolverOptions::default(), None).unwrap();
    for (c, &node) in eq.conn.dof_node.iter().enumerate() {
        let exact = bc.eval(mesh.nodes[node]);
        let u = eq.u.values[c];
        assert!((u[0] - exact[0]).abs() <= 1e-10 && (u[1] - exact[1]).abs() <= 1e-10);
    }
    let expect = mesh.area() * elastic_density(&sym_grad(a), &m);
    assert!((eq.energy.elastic - expect).abs() <= 1e-9 * expect);
}

#[test]
fn baselines_are_bounded_across_scales() {
    let m = Material::new(1.0, 1.0, 1.0).unwrap();
    let bc = BoundaryCondition::uniaxial(0.1);
    let opts = SolverOptions::default();
    for k in [4, 8, 16, 32] {
        let lattice = build_lattice(Domain::unit_square(), 1.0 / k as f64).unwrap();
        let mesh = build_grid(&lattice, 8).unwrap();
        let pre = rasterize_cracks(&place_precracks(&lattice, &vertical_slit()).unwrap(), &mesh).unwrap().edges;
        let p = Problem { mesh: &mesh, precracks: &pre, bc: &bc, material: &m };
        let base = baseline_energy(&p, &opts).unwrap();
        let intact = uncracked_energy(&p, &opts).unwrap();
        assert_eq!(base.surface, 0.0);
        assert!(base.total <= intact.total + 1e-6, "1/{k}: {} > {}", base.total, intact.total);
    }
}
