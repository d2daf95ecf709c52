//! Subcommand bodies, shared by the binary and the tests.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use microfrac_core::damage::{classify_active, CellLengths};
use microfrac_core::geometry::build_lattice;
use microfrac_core::minimize::ORACLE_CAP;
use microfrac_core::{CrackState, EdgeSet};

use crate::config::RunConfig;
use crate::output::{parse_manifest, write_csv_file, Manifest};
use crate::run::{prepare, rows, run_scale, run_sweep, search_space, sweep_bound, Row, RunError, ScaleRun};
use crate::svg::render_svg;

pub const RESULTS: &str = "results.csv";
pub const MANIFEST: &str = "manifest.toml";
pub const FIGURE: &str = "damage.svg";

/// What a command left behind and whether it succeeded in the sense of the
/// exit status: every run converged and every chain check passed.
#[derive(Debug)]
pub struct Outcome {
    pub ok: bool,
    pub rows: Vec<Row>,
    pub files: Vec<PathBuf>,
}

/// `N(ε)` and coverage ratio per configured `ε`, one line each.
pub fn lattice_report(cfg: &RunConfig) -> Result<String, RunError> {
    let domain = cfg.domain()?;
    let mut s = String::from("epsilon,n_cells,coverage_ratio\n");
    for &eps in &cfg.epsilons {
        let lattice =
            build_lattice(domain, eps).map_err(|source| RunError::Geometry { epsilon: eps, error: source })?;
        let _ = writeln!(
            s,
            "{},{},{}",
            crate::output::num(eps),
            lattice.len(),
            crate::output::num(lattice.coverage_ratio())
        );
    }
    Ok(s)
}

fn single(cfg: &RunConfig, command: &str) -> Result<(f64, f64), RunError> {
    match (cfg.epsilons.as_slice(), cfg.l_values.as_slice()) {
        ([eps], [l]) => Ok((*eps, *l)),
        _ => Err(RunError::Usage(format!("{command} needs exactly one epsilon and one l; use sweep for lists"))),
    }
}

fn figure_name(runs: &[ScaleRun], cfg: &RunConfig, scale: usize, l: usize) -> String {
    if runs.len() == 1 && cfg.l_values.len() == 1 {
        FIGURE.to_string()
    } else {
        format!("damage_e{scale}_l{l}.svg")
    }
}

fn write_outputs(
    cfg: &RunConfig,
    command: &str,
    out: &Path,
    runs: &[ScaleRun],
    timing: bool,
    with_delta: bool,
) -> anyhow::Result<(Vec<Row>, Vec<PathBuf>)> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let bound = sweep_bound(runs);
    let rows = rows(cfg, runs, bound)?;
    let mut files = Vec::new();
    let csv = out.join(RESULTS);
    write_csv_file(&csv, &rows, timing, with_delta)?;
    files.push(csv);
    let manifest = out.join(MANIFEST);
    fs::write(&manifest, Manifest::new(cfg, command, bound, runs, &rows).to_toml())?;
    files.push(manifest);
    let mut ordered: Vec<&ScaleRun> = runs.iter().collect();
    ordered.sort_by(|a, b| b.instance.epsilon.total_cmp(&a.instance.epsilon));
    for (i, run) in ordered.iter().enumerate() {
        for (j, row) in rows.iter().filter(|r| r.epsilon == run.instance.epsilon).enumerate() {
            let inst = &run.instance;
            let path = out.join(figure_name(runs, cfg, i, j));
            fs::write(&path, render_svg(&run.state(), &row.report, &inst.mesh, &inst.lattice))?;
            files.push(path);
        }
    }
    Ok((rows, files))
}

/// One `(ε, l)` run. With `oracle`, the exhaustive oracle is required: the
/// search space must fit `candidate_cap`.
pub fn solve(cfg: &RunConfig, out: &Path, timing: bool, oracle: bool) -> anyhow::Result<Outcome> {
    let command = if oracle { "oracle" } else { "solve" };
    let (eps, _) = single(cfg, command)?;
    if oracle {
        let n = search_space(&prepare(cfg, eps)?).len();
        if n > cfg.candidate_cap.min(ORACLE_CAP) {
            return Err(RunError::Usage(format!(
                "oracle: search space has {n} edges, more than candidate_cap = {}",
                cfg.candidate_cap
            ))
            .into());
        }
    }
    let run = match run_scale(cfg, eps, true) {
        Ok(run) => run,
        Err(e) => {
            fs::create_dir_all(out)?;
            write_csv_file(&out.join(RESULTS), &[], timing, true)?;
            return Err(e.into());
        }
    };
    let converged = run.converged;
    let runs = [run];
    let (rows, files) = write_outputs(cfg, command, out, &runs, timing, true)?;
    let ok = converged && rows.iter().all(Row::chain_pass);
    Ok(Outcome { ok, rows, files })
}

/// Every `(ε, l)` pair. A failing scale stops the sweep; rows of the scales
/// before it are still written and the error is returned.
pub fn sweep(cfg: &RunConfig, out: &Path, workers: usize, timing: bool) -> anyhow::Result<Outcome> {
    let result = run_sweep(cfg, workers, false)?;
    let converged = result.converged();
    let (rows, files) = write_outputs(cfg, "sweep", out, &result.runs, timing, false)?;
    if let Some(e) = result.failure {
        return Err(e.into());
    }
    let ok = converged && rows.iter().all(Row::chain_pass);
    Ok(Outcome { ok, rows, files })
}

/// Redraws the figures of a manifest without re-running the minimizer.
pub fn render(manifest_text: &str, out: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let manifest = parse_manifest(manifest_text)?;
    let cfg = &manifest.config;
    fs::create_dir_all(out)?;
    let single = manifest.scales.len() == 1 && cfg.l_values.len() == 1;
    let mut files = Vec::new();
    for (i, scale) in manifest.scales.iter().enumerate() {
        let inst = prepare(cfg, scale.epsilon)?;
        let emergent: EdgeSet = scale.emergent_edges.iter().copied().collect();
        let state = CrackState::new(&inst.mesh, inst.precracks.clone(), emergent)
            .context("manifest edges do not fit the configured mesh")?;
        anyhow::ensure!(scale.per_cell.len() == inst.lattice.len(), "manifest cell count does not match the lattice");
        let lengths = CellLengths {
            per_cell: scale.per_cell.clone(),
            outside: scale.outside,
            ..CellLengths::empty(&inst.lattice)
        };
        for (j, &l) in cfg.l_values.iter().enumerate() {
            let report = classify_active(&lengths, l)
                .map_err(|source| RunError::Damage { epsilon: scale.epsilon, error: source })?;
            let name = if single { FIGURE.to_string() } else { format!("damage_e{i}_l{j}.svg") };
            let path = out.join(name);
            fs::write(&path, render_svg(&state, &report, &inst.mesh, &inst.lattice))?;
            files.push(path);
        }
    }
    Ok(files)
}
