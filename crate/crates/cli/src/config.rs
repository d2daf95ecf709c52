//! Run configuration: a strict TOML schema.
//!
//! Every key is optional except that at least one of `epsilon` and
//! `epsilon_list` must be given. Unknown keys, wrong types and values outside
//! the module preconditions are rejected with an error naming the key.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use microfrac_core::geometry::{PatternViolation, PreCrackPattern};
use microfrac_core::minimize::{CandidatePolicy, Evaluation, ORACLE_CAP};
use microfrac_core::{BoundaryCondition, Domain, Material, MinimizerOptions, SolverOptions, Vec2};
use toml::{Table, Value};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{key}: {reason}")]
pub struct ConfigError {
    pub key: String,
    pub reason: String,
}

impl ConfigError {
    fn new(key: &str, reason: impl Into<String>) -> Self {
        ConfigError { key: key.to_string(), reason: reason.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    Discrete,
    PhaseField,
}

impl FromStr for Backend {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "discrete" => Ok(Backend::Discrete),
            "phasefield" => Ok(Backend::PhaseField),
            other => Err(format!("unknown backend {other:?} (expected discrete or phasefield)")),
        }
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Backend::Discrete => "discrete",
            Backend::PhaseField => "phasefield",
        })
    }
}

/// A cell-specific pattern, keyed by integer cell index `[m, n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternOverride {
    pub cell: [i64; 2],
    pub polylines: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub domain_origin: [f64; 2],
    pub domain_width: f64,
    pub domain_height: f64,
    /// Sorted descending, no duplicates.
    pub epsilons: Vec<f64>,
    pub cell_resolution: usize,
    /// Flat `[x0, y0, x1, y1, ...]` polylines in unit-cell coordinates.
    /// `None` means no pre-cracks.
    pub pattern: Option<Vec<Vec<f64>>>,
    pub pattern_overrides: Vec<PatternOverride>,
    pub lambda: f64,
    pub mu: f64,
    pub griffith: f64,
    pub bc_matrix: [[f64; 2]; 2],
    pub bc_offset: [f64; 2],
    /// Sorted ascending, no duplicates.
    pub l_values: Vec<f64>,
    pub backend: Backend,
    pub solver_tolerance: f64,
    pub solver_max_iter_factor: usize,
    pub rho: f64,
    pub policy: CandidatePolicy,
    /// Largest search space for which `solve` also runs the exhaustive oracle.
    pub candidate_cap: usize,
    pub greedy_threshold: f64,
    pub max_steps: Option<usize>,
    pub evaluation: Evaluation,
    /// `None` means `2h`.
    pub eta: Option<f64>,
    pub k_eta: f64,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// 0 means one worker per available core.
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let solver = SolverOptions::default();
        let min = MinimizerOptions::default();
        RunConfig {
            domain_origin: [0.0, 0.0],
            domain_width: 1.0,
            domain_height: 1.0,
            epsilons: Vec::new(),
            cell_resolution: 8,
            pattern: None,
            pattern_overrides: Vec::new(),
            lambda: 1.0,
            mu: 1.0,
            griffith: 1.0,
            bc_matrix: [[0.1, 0.0], [0.0, 0.0]],
            bc_offset: [0.0, 0.0],
            l_values: vec![0.25],
            backend: Backend::Discrete,
            solver_tolerance: solver.tolerance,
            solver_max_iter_factor: solver.max_iter_factor,
            rho: solver.rho,
            policy: min.policy,
            candidate_cap: 12,
            greedy_threshold: min.stop_threshold,
            max_steps: None,
            evaluation: min.evaluation,
            eta: None,
            k_eta: 1e-6,
            seed: 0,
            output_dir: PathBuf::from("out"),
            workers: 0,
        }
    }
}

const KEYS: &[&str] = &[
    "domain_origin",
    "domain_width",
    "domain_height",
    "epsilon",
    "epsilon_list",
    "cell_resolution",
    "pattern",
    "pattern_override",
    "lambda",
    "mu",
    "griffith",
    "bc_matrix",
    "bc_offset",
    "l",
    "l_list",
    "backend",
    "solver_tolerance",
    "solver_max_iter_factor",
    "rho",
    "policy",
    "candidate_cap",
    "greedy_threshold",
    "max_steps",
    "evaluation",
    "eta",
    "k_eta",
    "seed",
    "output_dir",
    "workers",
];

fn float(key: &str, v: &Value) -> Result<f64, ConfigError> {
    let x = match v {
        Value::Float(f) => *f,
        Value::Integer(i) => *i as f64,
        other => return Err(ConfigError::new(key, format!("expected a number, found {}", other.type_str()))),
    };
    if !x.is_finite() {
        return Err(ConfigError::new(key, "must be finite"));
    }
    Ok(x)
}

fn integer(key: &str, v: &Value) -> Result<i64, ConfigError> {
    match v {
        Value::Integer(i) => Ok(*i),
        other => Err(ConfigError::new(key, format!("expected an integer, found {}", other.type_str()))),
    }
}

fn count(key: &str, v: &Value) -> Result<usize, ConfigError> {
    let i = integer(key, v)?;
    usize::try_from(i).map_err(|_| ConfigError::new(key, "must be non-negative"))
}

fn string<'a>(key: &str, v: &'a Value) -> Result<&'a str, ConfigError> {
    v.as_str().ok_or_else(|| ConfigError::new(key, format!("expected a string, found {}", v.type_str())))
}

fn array<'a>(key: &str, v: &'a Value) -> Result<&'a Vec<Value>, ConfigError> {
    v.as_array().ok_or_else(|| ConfigError::new(key, format!("expected an array, found {}", v.type_str())))
}

fn floats(key: &str, v: &Value) -> Result<Vec<f64>, ConfigError> {
    array(key, v)?.iter().map(|x| float(key, x)).collect()
}

fn pair(key: &str, v: &Value) -> Result<[f64; 2], ConfigError> {
    let xs = floats(key, v)?;
    <[f64; 2]>::try_from(xs.as_slice())
        .map_err(|_| ConfigError::new(key, format!("expected 2 numbers, found {}", xs.len())))
}

fn positive(key: &str, x: f64) -> Result<f64, ConfigError> {
    if x > 0.0 {
        Ok(x)
    } else {
        Err(ConfigError::new(key, format!("must be positive (got {x})")))
    }
}

fn polylines(key: &str, v: &Value) -> Result<Vec<Vec<f64>>, ConfigError> {
    let lines: Vec<Vec<f64>> = array(key, v)?.iter().map(|l| floats(key, l)).collect::<Result<_, _>>()?;
    let pattern = PreCrackPattern::from_flat(&lines)
        .ok_or_else(|| ConfigError::new(key, "every polyline needs an even number of coordinates"))?;
    pattern.validate().map_err(|e: PatternViolation| ConfigError::new(key, e.to_string()))?;
    Ok(lines)
}

/// Sorted, deduplicated list from a scalar key and a list key.
fn scalar_or_list(table: &Table, scalar: &str, list: &str, descending: bool) -> Result<Option<Vec<f64>>, ConfigError> {
    let mut out = match (table.get(scalar), table.get(list)) {
        (Some(_), Some(_)) => return Err(ConfigError::new(list, format!("give either {scalar} or {list}, not both"))),
        (Some(v), None) => vec![positive(scalar, float(scalar, v)?)?],
        (None, Some(v)) => {
            let xs = floats(list, v)?;
            if xs.is_empty() {
                return Err(ConfigError::new(list, "must not be empty"));
            }
            for &x in &xs {
                positive(list, x)?;
            }
            xs
        }
        (None, None) => return Ok(None),
    };
    out.sort_by(|a, b| if descending { b.total_cmp(a) } else { a.total_cmp(b) });
    out.dedup();
    Ok(Some(out))
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let table: Table =
        text.parse().map_err(|e: toml::de::Error| ConfigError::new("<syntax>", e.message().to_string()))?;
    from_table(&table)
}

pub fn from_table(table: &Table) -> Result<RunConfig, ConfigError> {
    for key in table.keys() {
        if !KEYS.contains(&key.as_str()) {
            return Err(ConfigError::new(key, "unknown key"));
        }
    }
    let mut c = RunConfig::default();
    let get = |k: &str| table.get(k);

    if let Some(v) = get("domain_origin") {
        c.domain_origin = pair("domain_origin", v)?;
    }
    if let Some(v) = get("domain_width") {
        c.domain_width = positive("domain_width", float("domain_width", v)?)?;
    }
    if let Some(v) = get("domain_height") {
        c.domain_height = positive("domain_height", float("domain_height", v)?)?;
    }
    c.epsilons = scalar_or_list(table, "epsilon", "epsilon_list", true)?
        .ok_or_else(|| ConfigError::new("epsilon", "missing (give epsilon or epsilon_list)"))?;
    if let Some(v) = get("cell_resolution") {
        c.cell_resolution = count("cell_resolution", v)?;
        if c.cell_resolution < 2 {
            return Err(ConfigError::new("cell_resolution", "must be at least 2"));
        }
    }
    if let Some(v) = get("pattern") {
        c.pattern = Some(polylines("pattern", v)?);
    }
    if let Some(v) = get("pattern_override") {
        let key = "pattern_override";
        for entry in array(key, v)? {
            let t = entry
                .as_table()
                .ok_or_else(|| ConfigError::new(key, "entries must be tables with cell and polylines"))?;
            for k in t.keys() {
                if k != "cell" && k != "polylines" {
                    return Err(ConfigError::new(&format!("{key}.{k}"), "unknown key"));
                }
            }
            let cell_v = t.get("cell").ok_or_else(|| ConfigError::new(key, "entry without cell"))?;
            let cell: Vec<i64> = array("pattern_override.cell", cell_v)?
                .iter()
                .map(|x| integer("pattern_override.cell", x))
                .collect::<Result<_, _>>()?;
            let cell = <[i64; 2]>::try_from(cell.as_slice())
                .map_err(|_| ConfigError::new("pattern_override.cell", "expected 2 integers"))?;
            let lines = t.get("polylines").ok_or_else(|| ConfigError::new(key, "entry without polylines"))?;
            let polylines = polylines("pattern_override.polylines", lines)?;
            if c.pattern_overrides.iter().any(|o| o.cell == cell) {
                return Err(ConfigError::new(key, format!("cell {cell:?} overridden twice")));
            }
            c.pattern_overrides.push(PatternOverride { cell, polylines });
        }
        c.pattern_overrides.sort_by_key(|o| o.cell);
        if c.pattern.is_none() {
            return Err(ConfigError::new(key, "needs a base pattern"));
        }
    }
    if let Some(v) = get("lambda") {
        c.lambda = float("lambda", v)?;
    }
    if let Some(v) = get("mu") {
        c.mu = float("mu", v)?;
    }
    if let Some(v) = get("griffith") {
        c.griffith = float("griffith", v)?;
    }
    Material::new(c.lambda, c.mu, c.griffith).map_err(|e| {
        let key = match e {
            microfrac_core::MaterialError::NonPositiveMu(_) => "mu",
            microfrac_core::MaterialError::Indefinite { .. } => "lambda",
            microfrac_core::MaterialError::NegativeGriffith(_) => "griffith",
            microfrac_core::MaterialError::NonFinite => "lambda",
        };
        ConfigError::new(key, e.to_string())
    })?;
    if let Some(v) = get("bc_matrix") {
        let rows = array("bc_matrix", v)?;
        if rows.len() != 2 {
            return Err(ConfigError::new("bc_matrix", "expected a 2x2 array"));
        }
        c.bc_matrix = [pair("bc_matrix", &rows[0])?, pair("bc_matrix", &rows[1])?];
    }
    if let Some(v) = get("bc_offset") {
        c.bc_offset = pair("bc_offset", v)?;
    }
    if let Some(ls) = scalar_or_list(table, "l", "l_list", false)? {
        c.l_values = ls;
    }
    if let Some(v) = get("backend") {
        c.backend = string("backend", v)?.parse().map_err(|e: String| ConfigError::new("backend", e))?;
    }
    if let Some(v) = get("solver_tolerance") {
        c.solver_tolerance = positive("solver_tolerance", float("solver_tolerance", v)?)?;
    }
    if let Some(v) = get("solver_max_iter_factor") {
        c.solver_max_iter_factor = count("solver_max_iter_factor", v)?;
        if c.solver_max_iter_factor == 0 {
            return Err(ConfigError::new("solver_max_iter_factor", "must be at least 1"));
        }
    }
    if let Some(v) = get("rho") {
        c.rho = float("rho", v)?;
        if c.rho < 0.0 {
            return Err(ConfigError::new("rho", "must be non-negative"));
        }
    }
    if let Some(v) = get("policy") {
        c.policy = string("policy", v)?
            .parse()
            .map_err(|e: microfrac_core::MinimizeError| ConfigError::new("policy", e.to_string()))?;
    }
    if let Some(v) = get("candidate_cap") {
        c.candidate_cap = count("candidate_cap", v)?;
        if c.candidate_cap > ORACLE_CAP {
            return Err(ConfigError::new("candidate_cap", format!("must be at most {ORACLE_CAP}")));
        }
    }
    if let Some(v) = get("greedy_threshold") {
        c.greedy_threshold = float("greedy_threshold", v)?;
        if c.greedy_threshold < 0.0 {
            return Err(ConfigError::new("greedy_threshold", "must be non-negative"));
        }
    }
    if let Some(v) = get("max_steps") {
        c.max_steps = Some(count("max_steps", v)?);
    }
    if let Some(v) = get("evaluation") {
        c.evaluation = string("evaluation", v)?.parse().map_err(|e: String| ConfigError::new("evaluation", e))?;
    }
    if let Some(v) = get("eta") {
        c.eta = Some(positive("eta", float("eta", v)?)?);
    }
    if let Some(v) = get("k_eta") {
        c.k_eta = float("k_eta", v)?;
        if !(c.k_eta > 0.0 && c.k_eta <= 1e-6) {
            return Err(ConfigError::new("k_eta", "must lie in (0, 1e-6]"));
        }
    }
    if let Some(v) = get("seed") {
        c.seed = u64::try_from(integer("seed", v)?).map_err(|_| ConfigError::new("seed", "must be non-negative"))?;
    }
    if let Some(v) = get("output_dir") {
        c.output_dir = PathBuf::from(string("output_dir", v)?);
    }
    if let Some(v) = get("workers") {
        c.workers = count("workers", v)?;
    }
    // eta ≥ 2h must hold at every scale
    if let Some(eta) = c.eta {
        for &eps in &c.epsilons {
            let h = eps / c.cell_resolution as f64;
            if eta < 2.0 * h * (1.0 - 1e-12) {
                return Err(ConfigError::new("eta", format!("must be at least 2h = {} at epsilon {eps}", 2.0 * h)));
            }
        }
    }
    c.domain()?;
    Ok(c)
}

impl RunConfig {
    pub fn domain(&self) -> Result<Domain, ConfigError> {
        Domain::new(Vec2::new(self.domain_origin[0], self.domain_origin[1]), self.domain_width, self.domain_height)
            .map_err(|e| ConfigError::new("domain_width", e.to_string()))
    }

    pub fn material(&self) -> Material {
        Material::new(self.lambda, self.mu, self.griffith).expect("validated at parse time")
    }

    pub fn bc(&self) -> BoundaryCondition {
        BoundaryCondition::new(self.bc_matrix, Vec2::new(self.bc_offset[0], self.bc_offset[1]))
    }

    pub fn solver(&self) -> SolverOptions {
        SolverOptions { tolerance: self.solver_tolerance, max_iter_factor: self.solver_max_iter_factor, rho: self.rho }
    }

    pub fn minimizer(&self) -> MinimizerOptions {
        MinimizerOptions {
            policy: self.policy,
            solver: self.solver(),
            stop_threshold: self.greedy_threshold,
            max_steps: self.max_steps,
            evaluation: self.evaluation,
            ..Default::default()
        }
    }

    pub fn pattern(&self) -> Option<PreCrackPattern> {
        self.pattern.as_ref().map(|p| PreCrackPattern::from_flat(p).expect("validated at parse time"))
    }

    pub fn overrides(&self) -> BTreeMap<[i64; 2], PreCrackPattern> {
        self.pattern_overrides
            .iter()
            .map(|o| (o.cell, PreCrackPattern::from_flat(&o.polylines).expect("validated at parse time")))
            .collect()
    }

    /// Canonical table with every key spelled out; parses back to `self`.
    pub fn to_table(&self) -> Table {
        let f = |x: f64| Value::Float(x);
        let fl = |xs: &[f64]| Value::Array(xs.iter().map(|&x| Value::Float(x)).collect());
        let lines = |ls: &[Vec<f64>]| Value::Array(ls.iter().map(|l| fl(l)).collect());
        let mut t = Table::new();
        t.insert("domain_origin".into(), fl(&self.domain_origin));
        t.insert("domain_width".into(), f(self.domain_width));
        t.insert("domain_height".into(), f(self.domain_height));
        t.insert("epsilon_list".into(), fl(&self.epsilons));
        t.insert("cell_resolution".into(), Value::Integer(self.cell_resolution as i64));
        if let Some(p) = &self.pattern {
            t.insert("pattern".into(), lines(p));
        }
        if !self.pattern_overrides.is_empty() {
            let entries = self
                .pattern_overrides
                .iter()
                .map(|o| {
                    let mut e = Table::new();
                    e.insert("cell".into(), Value::Array(o.cell.iter().map(|&i| Value::Integer(i)).collect()));
                    e.insert("polylines".into(), lines(&o.polylines));
                    Value::Table(e)
                })
                .collect();
            t.insert("pattern_override".into(), Value::Array(entries));
        }
        t.insert("lambda".into(), f(self.lambda));
        t.insert("mu".into(), f(self.mu));
        t.insert("griffith".into(), f(self.griffith));
        t.insert("bc_matrix".into(), Value::Array(self.bc_matrix.iter().map(|r| fl(r)).collect()));
        t.insert("bc_offset".into(), fl(&self.bc_offset));
        t.insert("l_list".into(), fl(&self.l_values));
        t.insert("backend".into(), Value::String(self.backend.to_string()));
        t.insert("solver_tolerance".into(), f(self.solver_tolerance));
        t.insert("solver_max_iter_factor".into(), Value::Integer(self.solver_max_iter_factor as i64));
        t.insert("rho".into(), f(self.rho));
        t.insert("policy".into(), Value::String(self.policy.to_string()));
        t.insert("candidate_cap".into(), Value::Integer(self.candidate_cap as i64));
        t.insert("greedy_threshold".into(), f(self.greedy_threshold));
        if let Some(m) = self.max_steps {
            t.insert("max_steps".into(), Value::Integer(m as i64));
        }
        t.insert("evaluation".into(), Value::String(self.evaluation.to_string()));
        if let Some(eta) = self.eta {
            t.insert("eta".into(), f(eta));
        }
        t.insert("k_eta".into(), f(self.k_eta));
        t.insert("seed".into(), Value::Integer(self.seed as i64));
        t.insert("output_dir".into(), Value::String(self.output_dir.display().to_string()));
        t.insert("workers".into(), Value::Integer(self.workers as i64));
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config("epsilon = 0.25").unwrap();
        assert_eq!(c.epsilons, vec![0.25]);
        assert_eq!(c.cell_resolution, 8);
        assert_eq!(c.l_values, vec![0.25]);
        assert_eq!(c.backend, Backend::Discrete);
        assert_eq!(c.griffith, 1.0);
        assert_eq!(c.pattern, None);
    }

    #[test]
    fn errors_name_the_key() {
        let cases = [
            ("epsilon = 0.25\ngriffith = -1", "griffith"),
            ("epsilon_list = []", "epsilon_list"),
            ("epsilon = 0.25\nepsilon_list = [0.1]", "epsilon_list"),
            ("griffith = 1.0", "epsilon"),
            ("epsilon = 0.25\ngrifith = 1.0", "grifith"),
            ("epsilon = 0.25\nmu = \"one\"", "mu"),
            ("epsilon = -0.25", "epsilon"),
            ("epsilon = 0.25\ncell_resolution = 1", "cell_resolution"),
            ("epsilon = 0.25\nl = 0", "l"),
            ("epsilon = 0.25\nbackend = \"fem\"", "backend"),
            ("epsilon = 0.25\npolicy = \"nearest\"", "policy"),
            ("epsilon = 0.25\npattern = [[0.0, 0.5, 0.5, 0.5]]", "pattern"),
            ("epsilon = 0.25\npattern = [[0.25, 0.5, 0.5]]", "pattern"),
            ("epsilon = 0.25\nk_eta = 0.1", "k_eta"),
            ("epsilon = 0.25\neta = 0.001", "eta"),
            ("epsilon = 0.25\ncandidate_cap = 40", "candidate_cap"),
            ("epsilon = 0.25\nmu = 1.0\nlambda = -3.0", "lambda"),
            (
                "epsilon = 0.25\n[[pattern_override]]\ncell = [1, 1]\npolylines = [[0.2, 0.2, 0.7, 0.7]]\ncolor = 1",
                "pattern_override.color",
            ),
        ];
        for (text, key) in cases {
            let err = parse_config(text).unwrap_err();
            assert_eq!(err.key, key, "{text}: {err}");
        }
    }

    #[test]
    fn lists_are_sorted() {
        let c = parse_config("epsilon_list = [0.125, 0.25, 0.0625]\nl_list = [0.5, 0.1, 0.25]").unwrap();
        assert_eq!(c.epsilons, vec![0.25, 0.125, 0.0625]);
        assert_eq!(c.l_values, vec![0.1, 0.25, 0.5]);
    }

    #[test]
    fn canonical_table_round_trips() {
        let text = r#"
            epsilon_list = [0.25, 0.125]
            l_list = [0.1, 0.5]
            pattern = [[0.5, 0.25, 0.5, 0.75]]
            griffith = 0.3
            bc_matrix = [[1, 0], [0, 0.5]]
            max_steps = 7
            eta = 0.07
            evaluation = "local(3)"
            policy = "all"
            [[pattern_override]]
            cell = [2, 1]
            polylines = [[0.2, 0.2, 0.8, 0.8], [0.3, 0.7, 0.4, 0.6]]
        "#;
        let c = parse_config(text).unwrap();
        let again = from_table(&c.to_table()).unwrap();
        assert_eq!(c, again);
        let text = toml::to_string(&c.to_table()).unwrap();
        assert_eq!(parse_config(&text).unwrap(), c);
    }
}
