//! Configuration, result files, figures and the binary's exit status.

use std::fs;
use std::path::Path;
use std::process::Command;

use microfrac::app;
use microfrac::config::parse_config;
use microfrac::output::{parse_manifest, COLUMNS};
use microfrac_core::damage::DamageReport;
use microfrac_core::geometry::{build_lattice, Domain, Vec2};
use microfrac_core::grid::{build_grid, CrackState};

const SLIT: &str = "pattern = [[0.5, 0.25, 0.5, 0.75]]\n";

fn cfg(text: &str) -> microfrac::config::RunConfig {
    parse_config(text).unwrap()
}

fn csv_rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(Result::unwrap).collect()
}

fn column(header: &csv::StringRecord, name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap()
}

#[test]
fn config_errors_name_their_key() {
    for (text, key) in [
        ("epsilon = 0.25\ngriffith = -1.0\n", "griffith"),
        ("epsilon_list = []\n", "epsilon_list"),
        ("epsilon = 0.25\nepsilom = 3\n", "epsilom"),
        ("epsilon = 0.25\ncell_resolution = \"eight\"\n", "cell_resolution"),
        ("epsilon = 0.25\nbackend = \"spectral\"\n", "backend"),
    ] {
        let err = parse_config(text).unwrap_err();
        assert_eq!(err.key, key, "{text}");
    }
}

#[test]
fn huge_griffith_leaves_no_active_cells() {
    let dir = tempfile::tempdir().unwrap();
    let c = cfg(&format!(
        "epsilon = 0.25\ncell_resolution = 4\ngriffith = 1e6\nbc_matrix = [[1.0, 0.0], [0.0, 0.0]]\n{SLIT}"
    ));
    let out = app::solve(&c, dir.path(), false, false).unwrap();
    assert!(out.ok);
    assert_eq!(out.rows.len(), 1);
    assert_eq!(out.rows[0].m_count(), 0);
    assert!(out.rows[0].chain_pass());
}

#[test]
fn zero_load_gives_zero_energy() {
    let dir = tempfile::tempdir().unwrap();
    let c = cfg(&format!("epsilon = 0.25\ncell_resolution = 4\nbc_matrix = [[0.0, 0.0], [0.0, 0.0]]\n{SLIT}"));
    let out = app::solve(&c, dir.path(), false, false).unwrap();
    let rows = csv_rows(&dir.path().join(app::RESULTS));
    assert_eq!(rows.len(), 1);
    assert_eq!(&rows[0][5], "0");
    assert_eq!(&rows[0][8], "0");
    assert_eq!(out.rows[0].achieved_total, 0.0);
}

#[test]
fn oracle_sized_solve_records_nonnegative_delta() {
    let dir = tempfile::tempdir().unwrap();
    let c = cfg(
        "epsilon = 0.3333333333333333\ncell_resolution = 2\ngriffith = 0.01\nbc_matrix = [[1.0, 0.0], [0.0, 0.0]]\n",
    );
    let out = app::solve(&c, dir.path(), false, true).unwrap();
    let delta = out.rows[0].delta_certificate.unwrap();
    assert!(delta >= 0.0);
    let mut rdr = csv::Reader::from_path(dir.path().join(app::RESULTS)).unwrap();
    let header = rdr.headers().unwrap().clone();
    let row = rdr.records().next().unwrap().unwrap();
    assert_eq!(row[column(&header, "delta_certificate")].parse::<f64>().unwrap(), delta);
}

#[test]
fn oracle_refuses_large_search_spaces() {
    let dir = tempfile::tempdir().unwrap();
    let c = cfg(&format!("epsilon = 0.25\ncell_resolution = 4\n{SLIT}"));
    assert!(app::solve(&c, dir.path(), false, true).is_err());
}

#[test]
fn solve_needs_a_single_scale() {
    let dir = tempfile::tempdir().unwrap();
    let c = cfg("epsilon_list = [0.25, 0.125]\n");
    assert!(app::solve(&c, dir.path(), false, false).is_err());
}

fn sweep_config(griffith: f64) -> String {
    format!(
        "epsilon_list = [0.25, 0.125]\ncell_resolution = 4\ngriffith = {griffith}\n\
         bc_matrix = [[1.0, 0.0], [0.0, 0.0]]\nl_list = [0.5, 0.1, 0.25]\nevaluation = \"local(2)\"\n{SLIT}"
    )
}

#[test]
fn sweep_rows_are_ordered_and_satisfy_the_chain() {
    let dir = tempfile::tempdir().unwrap();
    let c = cfg(&sweep_config(0.15));
    let out = app::sweep(&c, dir.path(), 2, false).unwrap();
    assert!(out.ok);
    let mut rdr = csv::Reader::from_path(dir.path().join(app::RESULTS)).unwrap();
    let header = rdr.headers().unwrap().clone();
    assert_eq!(header.iter().collect::<Vec<_>>(), COLUMNS);
    let rows: Vec<_> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 6);
    let key: Vec<(f64, f64)> = rows.iter().map(|r| (r[0].parse().unwrap(), r[1].parse().unwrap())).collect();
    assert_eq!(key, [(0.25, 0.1), (0.25, 0.25), (0.25, 0.5), (0.125, 0.1), (0.125, 0.25), (0.125, 0.5)]);
    assert!(out.rows.iter().any(|r| r.m_count() > 0), "the fixture should crack");
    for r in &rows {
        let f = |name: &str| r[column(&header, name)].parse::<f64>().unwrap();
        assert!(f("eps_times_m") <= f("achieved_total") / (0.15 * f("l")) + 1e-12);
        assert_eq!(&r[column(&header, "chain_pass")], "true");
        assert_eq!(&r[column(&header, "wall_time_ms")], "");
    }
}

#[test]
fn huge_griffith_sweep_is_undamaged() {
    let dir = tempfile::tempdir().unwrap();
    let out = app::sweep(&cfg(&sweep_config(1e6)), dir.path(), 1, false).unwrap();
    assert!(out.ok);
    assert!(out.rows.iter().all(|r| r.m_count() == 0 && r.chain_pass()));
}

#[test]
fn reruns_are_byte_identical() {
    let c = cfg(&sweep_config(0.15));
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    app::sweep(&c, a.path(), 1, false).unwrap();
    app::sweep(&c, b.path(), 3, false).unwrap();
    for name in [app::RESULTS, app::MANIFEST] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
}

#[test]
fn manifest_round_trips_through_the_config_parser() {
    let dir = tempfile::tempdir().unwrap();
    let c = cfg(&format!(
        "{}k_eta = 5e-7\nseed = 9\n[[pattern_override]]\ncell = [1, 1]\npolylines = [[0.25, 0.5, 0.75, 0.5]]\n",
        sweep_config(0.15)
    ));
    let out = app::sweep(&c, dir.path(), 1, false).unwrap();
    let text = fs::read_to_string(dir.path().join(app::MANIFEST)).unwrap();
    let m = parse_manifest(&text).unwrap();
    assert_eq!(m.config, c);
    assert_eq!(m.command, "sweep");
    assert_eq!(m.scales.len(), 2);
    assert_eq!(m.chains.len(), out.rows.len());
    assert_eq!(m.scales[0].achieved_total, out.rows[0].achieved_total);
    assert_eq!(m.bound, out.rows.iter().map(|r| r.achieved_total).fold(0.0, f64::max));
    let again = parse_manifest(&microfrac::output::Manifest { ..m.clone() }.to_toml()).unwrap();
    assert_eq!(again, m);
}

#[test]
fn render_reproduces_the_solve_figure() {
    let dir = tempfile::tempdir().unwrap();
    let c = cfg(&format!(
        "epsilon = 0.25\ncell_resolution = 4\ngriffith = 0.05\nbc_matrix = [[1.0, 0.0], [0.0, 0.0]]\n{SLIT}"
    ));
    app::solve(&c, dir.path(), false, false).unwrap();
    let redraw = dir.path().join("redraw");
    let text = fs::read_to_string(dir.path().join(app::MANIFEST)).unwrap();
    let files = app::render(&text, &redraw).unwrap();
    assert_eq!(files, [redraw.join(app::FIGURE)]);
    assert_eq!(fs::read(dir.path().join(app::FIGURE)).unwrap(), fs::read(redraw.join(app::FIGURE)).unwrap());
}

fn rects_of_class(doc: &roxmltree::Document, class: &str) -> usize {
    doc.descendants().filter(|n| n.has_tag_name("rect") && n.attribute("class") == Some(class)).count()
}

fn report(origins: Vec<Vec2>, active: Vec<Vec2>) -> DamageReport {
    DamageReport {
        epsilon: 0.25,
        l: 0.5,
        per_cell: origins.into_iter().map(|o| (o, 0.0)).collect(),
        outside: 0.0,
        m_count: active.len(),
        damaged_area: 0.0625 * active.len() as f64,
        active,
        energy_total: None,
        bound_rhs: None,
    }
}

#[test]
fn empty_state_draws_only_the_grid() {
    let lattice = build_lattice(Domain::unit_square(), 0.25).unwrap();
    let mesh = build_grid(&lattice, 4).unwrap();
    let origins = lattice.cells().iter().map(|c| c.origin).collect();
    let svg = microfrac::svg::render_svg(&CrackState::uncracked(), &report(origins, vec![]), &mesh, &lattice);
    let doc = roxmltree::Document::parse(&svg).unwrap();
    assert_eq!(doc.root_element().tag_name().name(), "svg");
    assert_eq!(rects_of_class(&doc, "cell"), lattice.len());
    let filled = doc
        .descendants()
        .filter(|n| n.has_tag_name("rect") && n.parent().and_then(|p| p.attribute("id")) == Some("active"));
    assert_eq!(filled.count(), 0);
    let emergent = doc.descendants().find(|n| n.attribute("id") == Some("emergent")).unwrap();
    assert_eq!(emergent.children().filter(|n| n.is_element()).count(), 0);
    let caption = doc.descendants().find(|n| n.attribute("id") == Some("caption")).unwrap();
    assert!(caption.text().unwrap().contains("M(ε,l) = 0"));
}

#[test]
fn one_active_cell_fills_one_rectangle() {
    let lattice = build_lattice(Domain::unit_square(), 0.25).unwrap();
    let mesh = build_grid(&lattice, 4).unwrap();
    let origins: Vec<Vec2> = lattice.cells().iter().map(|c| c.origin).collect();
    let one = vec![origins[2]];
    let svg = microfrac::svg::render_svg(&CrackState::uncracked(), &report(origins, one), &mesh, &lattice);
    let doc = roxmltree::Document::parse(&svg).unwrap();
    let filled: Vec<_> = doc
        .descendants()
        .filter(|n| n.has_tag_name("rect") && n.parent().and_then(|p| p.attribute("id")) == Some("active"))
        .collect();
    assert_eq!(filled.len(), 1);
    assert!(doc.descendants().any(|n| n.attribute("id") == Some("legend")));
}

#[test]
fn solve_figure_is_well_formed() {
    let dir = tempfile::tempdir().unwrap();
    let c = cfg(&format!(
        "epsilon = 0.25\ncell_resolution = 4\ngriffith = 0.05\nbc_matrix = [[1.0, 0.0], [0.0, 0.0]]\n{SLIT}"
    ));
    let out = app::solve(&c, dir.path(), false, false).unwrap();
    let svg = fs::read_to_string(dir.path().join(app::FIGURE)).unwrap();
    let doc = roxmltree::Document::parse(&svg).unwrap();
    let filled = doc
        .descendants()
        .filter(|n| n.has_tag_name("rect") && n.parent().and_then(|p| p.attribute("id")) == Some("active"))
        .count();
    assert_eq!(filled, out.rows[0].m_count());
    let pre = doc.descendants().filter(|n| n.has_tag_name("line") && n.attribute("class") == Some("precrack"));
    assert!(pre.count() > 0);
}

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_microfrac"))
}

#[test]
fn binary_exit_status_follows_the_contract() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.toml");
    fs::write(&good, format!("epsilon = 0.25\ncell_resolution = 4\ngriffith = 1e6\n{SLIT}")).unwrap();
    let st = binary().args(["solve", "--config"]).arg(&good).arg("--out").arg(dir.path().join("g")).status().unwrap();
    assert!(st.success());

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "epsilon = 0.25\ngriffith = -1.0\n").unwrap();
    let out = binary().args(["solve", "--config"]).arg(&bad).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("griffith"));

    let lat = binary().args(["lattice", "--config"]).arg(&good).output().unwrap();
    assert!(lat.status.success());
    assert_eq!(String::from_utf8_lossy(&lat.stdout), "epsilon,n_cells,coverage_ratio\n0.25,4,0.25\n");
}

#[test]
fn failed_sweep_flushes_partial_results() {
    let dir = tempfile::tempdir().unwrap();
    // With the domain shifted to (0.3, 0.3), cell [2, 2] exists at ε = 1/4
    // but not at ε = 1/8, so the second scale fails.
    let c = cfg(&format!(
        "domain_origin = [0.3, 0.3]\n{}[[pattern_override]]\ncell = [2, 2]\npolylines = [[0.25, 0.5, 0.75, 0.5]]\n",
        sweep_config(0.15)
    ));
    let err = app::sweep(&c, dir.path(), 1, false).unwrap_err();
    assert!(err.to_string().contains("pattern_override"));
    let rows = csv_rows(&dir.path().join(app::RESULTS));
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| &r[0] == "0.25"));
    let path = dir.path().join("c.toml");
    fs::write(&path, microfrac::config::RunConfig::to_table(&c).to_string()).unwrap();
    let st = binary().args(["sweep", "--config"]).arg(&path).arg("--out").arg(dir.path().join("b")).status().unwrap();
    assert!(!st.success());
    assert!(dir.path().join("b").join(app::RESULTS).exists());
}
