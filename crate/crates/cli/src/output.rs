//! Result files: `results.csv` and the run manifest.

use std::fs;
use std::io;
use std::path::Path;

use toml::{Table, Value};

use crate::config::{from_table, ConfigError, RunConfig};
use crate::run::{Row, ScaleRun};

pub const COLUMNS: [&str; 15] = [
    "epsilon",
    "l",
    "n_cells",
    "coverage_ratio",
    "baseline_total",
    "achieved_total",
    "surface",
    "emergent_length",
    "m_count",
    "eps_times_m",
    "damaged_area",
    "area_bound_rhs",
    "chain_pass",
    "straightness",
    "wall_time_ms",
];

/// Shortest round-trip decimal form, with `-0` printed as `0`.
pub fn num(x: f64) -> String {
    if x == 0.0 {
        "0".to_string()
    } else {
        format!("{x}")
    }
}

/// Writes rows in the given order. `timing` fills `wall_time_ms`, which is
/// otherwise left blank so reruns are byte-identical. `with_delta` appends a
/// `delta_certificate` column.
pub fn write_csv<W: io::Write>(out: W, rows: &[Row], timing: bool, with_delta: bool) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = COLUMNS.to_vec();
    if with_delta {
        header.push("delta_certificate");
    }
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            num(r.epsilon),
            num(r.l),
            r.n_cells.to_string(),
            num(r.coverage_ratio),
            num(r.baseline_total),
            num(r.achieved_total),
            num(r.surface),
            num(r.emergent_length),
            r.m_count().to_string(),
            num(r.eps_times_m()),
            num(r.damaged_area()),
            num(r.area_bound_rhs()),
            r.chain_pass().to_string(),
            r.straightness.map(num).unwrap_or_default(),
            if timing { format!("{:.1}", r.wall_time_ms) } else { String::new() },
        ];
        if with_delta {
            rec.push(r.delta_certificate.map(num).unwrap_or_default());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv_file(path: &Path, rows: &[Row], timing: bool, with_delta: bool) -> anyhow::Result<()> {
    let file = fs::File::create(path)?;
    write_csv(io::BufWriter::new(file), rows, timing, with_delta)?;
    Ok(())
}

/// What a manifest records about one scale.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleRecord {
    pub epsilon: f64,
    pub baseline_total: f64,
    pub elastic: f64,
    pub surface: f64,
    pub achieved_total: f64,
    pub converged: bool,
    pub steps: usize,
    pub delta_certificate: Option<f64>,
    pub emergent_edges: Vec<usize>,
    /// Emergent length per lattice cell, in lattice order.
    pub per_cell: Vec<f64>,
    pub outside: f64,
}

impl ScaleRecord {
    pub fn from_run(run: &ScaleRun) -> Self {
        ScaleRecord {
            epsilon: run.instance.epsilon,
            baseline_total: run.baseline.total,
            elastic: run.achieved.elastic,
            surface: run.achieved.surface,
            achieved_total: run.achieved.total,
            converged: run.converged,
            steps: run.steps,
            delta_certificate: run.delta_certificate,
            emergent_edges: run.emergent.iter().collect(),
            per_cell: run.lengths.per_cell.clone(),
            outside: run.lengths.outside,
        }
    }
}

/// Chain verdict summary for one row.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainRecord {
    pub epsilon: f64,
    pub l: f64,
    pub m_count: usize,
    pub m_bound: f64,
    pub damaged_area: f64,
    pub area_bound: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub config: RunConfig,
    pub command: String,
    /// `B` used in the chain.
    pub bound: f64,
    pub scales: Vec<ScaleRecord>,
    pub chains: Vec<ChainRecord>,
}

impl Manifest {
    pub fn new(config: &RunConfig, command: &str, bound: f64, runs: &[ScaleRun], rows: &[Row]) -> Self {
        Manifest {
            config: config.clone(),
            command: command.to_string(),
            bound,
            scales: runs.iter().map(ScaleRecord::from_run).collect(),
            chains: rows
                .iter()
                .map(|r| ChainRecord {
                    epsilon: r.epsilon,
                    l: r.l,
                    m_count: r.m_count(),
                    m_bound: r.verdict.m_bound,
                    damaged_area: r.damaged_area(),
                    area_bound: r.area_bound_rhs(),
                    pass: r.chain_pass(),
                })
                .collect(),
        }
    }

    pub fn to_toml(&self) -> String {
        let mut run = Table::new();
        run.insert("command".into(), Value::String(self.command.clone()));
        run.insert("bound".into(), Value::Float(self.bound));
        let scales = self
            .scales
            .iter()
            .map(|s| {
                let mut t = Table::new();
                t.insert("epsilon".into(), Value::Float(s.epsilon));
                t.insert("baseline_total".into(), Value::Float(s.baseline_total));
                t.insert("elastic".into(), Value::Float(s.elastic));
                t.insert("surface".into(), Value::Float(s.surface));
                t.insert("achieved_total".into(), Value::Float(s.achieved_total));
                t.insert("converged".into(), Value::Boolean(s.converged));
                t.insert("steps".into(), Value::Integer(s.steps as i64));
                if let Some(d) = s.delta_certificate {
                    t.insert("delta_certificate".into(), Value::Float(d));
                }
                t.insert(
                    "emergent_edges".into(),
                    Value::Array(s.emergent_edges.iter().map(|&e| Value::Integer(e as i64)).collect()),
                );
                t.insert("per_cell".into(), Value::Array(s.per_cell.iter().map(|&x| Value::Float(x)).collect()));
                t.insert("outside".into(), Value::Float(s.outside));
                Value::Table(t)
            })
            .collect();
        run.insert("scale".into(), Value::Array(scales));
        let chains = self
            .chains
            .iter()
            .map(|c| {
                let mut t = Table::new();
                t.insert("epsilon".into(), Value::Float(c.epsilon));
                t.insert("l".into(), Value::Float(c.l));
                t.insert("m_count".into(), Value::Integer(c.m_count as i64));
                t.insert("m_bound".into(), Value::Float(c.m_bound));
                t.insert("damaged_area".into(), Value::Float(c.damaged_area));
                t.insert("area_bound".into(), Value::Float(c.area_bound));
                t.insert("pass".into(), Value::Boolean(c.pass));
                Value::Table(t)
            })
            .collect();
        run.insert("chain".into(), Value::Array(chains));
        let mut doc = self.config.to_table();
        doc.insert("run".into(), Value::Table(run));
        toml::to_string(&doc).expect("tables of plain values serialize")
    }
}

fn field<'a>(t: &'a Table, key: &str) -> Result<&'a Value, ConfigError> {
    t.get(key).ok_or_else(|| ConfigError { key: format!("run.{key}"), reason: "missing".into() })
}

fn as_f64(t: &Table, key: &str) -> Result<f64, ConfigError> {
    match field(t, key)? {
        Value::Float(f) => Ok(*f),
        Value::Integer(i) => Ok(*i as f64),
        _ => Err(ConfigError { key: format!("run.{key}"), reason: "expected a number".into() }),
    }
}

fn bad(key: &str) -> ConfigError {
    ConfigError { key: format!("run.{key}"), reason: "malformed".into() }
}

/// Splits a manifest into its configuration and run record.
pub fn parse_manifest(text: &str) -> Result<Manifest, ConfigError> {
    let mut doc: Table = text
        .parse()
        .map_err(|e: toml::de::Error| ConfigError { key: "<syntax>".into(), reason: e.message().into() })?;
    let run = match doc.remove("run") {
        Some(Value::Table(t)) => t,
        _ => return Err(ConfigError { key: "run".into(), reason: "missing run table".into() }),
    };
    let config = from_table(&doc)?;
    let command = field(&run, "command")?.as_str().ok_or_else(|| bad("command"))?.to_string();
    let bound = as_f64(&run, "bound")?;
    let mut scales = Vec::new();
    for s in field(&run, "scale")?.as_array().ok_or_else(|| bad("scale"))? {
        let t = s.as_table().ok_or_else(|| bad("scale"))?;
        let floats = |key: &str| -> Result<Vec<f64>, ConfigError> {
            field(t, key)?
                .as_array()
                .ok_or_else(|| bad(key))?
                .iter()
                .map(|v| v.as_float().or_else(|| v.as_integer().map(|i| i as f64)).ok_or_else(|| bad(key)))
                .collect()
        };
        scales.push(ScaleRecord {
            epsilon: as_f64(t, "epsilon")?,
            baseline_total: as_f64(t, "baseline_total")?,
            elastic: as_f64(t, "elastic")?,
            surface: as_f64(t, "surface")?,
            achieved_total: as_f64(t, "achieved_total")?,
            converged: field(t, "converged")?.as_bool().ok_or_else(|| bad("converged"))?,
            steps: field(t, "steps")?.as_integer().ok_or_else(|| bad("steps"))? as usize,
            delta_certificate: t.get("delta_certificate").and_then(|v| v.as_float()),
            emergent_edges: field(t, "emergent_edges")?
                .as_array()
                .ok_or_else(|| bad("emergent_edges"))?
                .iter()
                .map(|v| v.as_integer().map(|i| i as usize).ok_or_else(|| bad("emergent_edges")))
                .collect::<Result<_, _>>()?,
            per_cell: floats("per_cell")?,
            outside: as_f64(t, "outside")?,
        });
    }
    let mut chains = Vec::new();
    for c in field(&run, "chain")?.as_array().ok_or_else(|| bad("chain"))? {
        let t = c.as_table().ok_or_else(|| bad("chain"))?;
        chains.push(ChainRecord {
            epsilon: as_f64(t, "epsilon")?,
            l: as_f64(t, "l")?,
            m_count: field(t, "m_count")?.as_integer().ok_or_else(|| bad("m_count"))? as usize,
            m_bound: as_f64(t, "m_bound")?,
            damaged_area: as_f64(t, "damaged_area")?,
            area_bound: as_f64(t, "area_bound")?,
            pass: field(t, "pass")?.as_bool().ok_or_else(|| bad("pass"))?,
        });
    }
    Ok(Manifest { config, command, bound, scales, chains })
}
