//! Scenario files: TOML documents naming one analysis kind, its parameters
//! and an optional sweep grid, plus the sweep runner behind the CLI.
//!
//! Angles in scenario files are degrees; they are converted at this boundary.

mod kinds;
mod section;
mod table;

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use sha2::{Digest, Sha256};
use toml::{Table, Value};

pub use kinds::Kind;
pub use table::{emit, format_number, write_table, Format, ResultTable, Row};

use section::{ConfigError, Section};

/// Largest grid a single scenario may request.
pub const MAX_GRID_POINTS: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot access `{}`: {reason}", path.display())]
    Io { path: PathBuf, reason: String },

    #[error("{}parse error: {message}", at(*line, *column))]
    Parse {
        message: String,
        line: Option<usize>,
        column: Option<usize>,
    },

    #[error("{}unknown kind `{found}`; valid kinds are: {}", at(*line, None), valid.join(", "))]
    UnknownKind {
        found: String,
        valid: Vec<&'static str>,
        line: Option<usize>,
    },

    #[error("missing required parameter `{field}`: {hint}")]
    MissingParameter { field: String, hint: String },

    #[error("{}invalid `{field}`: {reason}", at(*line, None))]
    Invalid {
        field: String,
        reason: String,
        line: Option<usize>,
    },
}

fn at(line: Option<usize>, column: Option<usize>) -> String {
    match (line, column) {
        (Some(l), Some(c)) => format!("line {l}, column {c}: "),
        (Some(l), None) => format!("line {l}: "),
        _ => String::new(),
    }
}

impl ScenarioError {
    pub fn is_io(&self) -> bool {
        matches!(self, ScenarioError::Io { .. })
    }

    fn from_config(err: ConfigError, text: &str) -> Self {
        match err {
            ConfigError::Missing { field, hint } => ScenarioError::MissingParameter { field, hint },
            ConfigError::Invalid { field, reason } => ScenarioError::Invalid {
                line: field_line(text, &field),
                field,
                reason,
            },
        }
    }
}

/// One sweep dimension over a numeric parameter addressed by dotted path.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepAxis {
    pub parameter: String,
    pub start: f64,
    pub stop: f64,
    pub steps: usize,
    /// Excludes `start`: the grid is `start + i·(stop − start)/steps` for
    /// `i = 1..=steps`. Otherwise both ends are included.
    pub open_start: bool,
}

impl SweepAxis {
    pub fn values(&self) -> Vec<f64> {
        let span = self.stop - self.start;
        if self.open_start {
            let n = self.steps as f64;
            (1..=self.steps)
                .map(|i| if i == self.steps { self.stop } else { self.start + span * i as f64 / n })
                .collect()
        } else if self.steps == 1 {
            vec![self.start]
        } else {
            let n = (self.steps - 1) as f64;
            (0..self.steps)
                .map(|i| if i == self.steps - 1 { self.stop } else { self.start + span * i as f64 / n })
                .collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputSpec {
    pub path: Option<PathBuf>,
    pub format: Format,
}

/// A validated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub kind: Kind,
    pub name: Option<String>,
    pub sweep: Vec<SweepAxis>,
    pub output: OutputSpec,
    params: Table,
    sha256: String,
}

pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let bytes = std::fs::read(path).map_err(|e| ScenarioError::Io {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let text = String::from_utf8(bytes).map_err(|e| ScenarioError::Parse {
        message: format!("file is not UTF-8 ({e})"),
        line: None,
        column: None,
    })?;
    parse_scenario(&text)
}

pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let mut doc: Table = text.parse().map_err(|e: toml::de::Error| {
        let (line, column) = match e.span() {
            Some(span) => {
                let (l, c) = line_col(text, span.start);
                (Some(l), Some(c))
            }
            None => (None, None),
        };
        ScenarioError::Parse {
            message: e.message().to_string(),
            line,
            column,
        }
    })?;
    let cfg = |e| ScenarioError::from_config(e, text);

    let kind = match doc.remove("kind") {
        None => {
            return Err(ScenarioError::MissingParameter {
                field: "kind".into(),
                hint: format!("one of {}", Kind::names().join(", ")),
            })
        }
        Some(Value::String(s)) => Kind::parse(&s).ok_or_else(|| ScenarioError::UnknownKind {
            found: s.clone(),
            valid: Kind::names(),
            line: field_line(text, "kind"),
        })?,
        Some(_) => {
            return Err(cfg(ConfigError::invalid("kind", "must be a string")));
        }
    };
    let name = match doc.remove("name") {
        None => None,
        Some(Value::String(s)) => Some(s),
        Some(_) => return Err(cfg(ConfigError::invalid("name", "must be a string"))),
    };
    let output = parse_output(doc.remove("output")).map_err(cfg)?;
    let sweep = parse_sweep(doc.remove("sweep"), &doc).map_err(cfg)?;

    let grid: usize = sweep
        .iter()
        .try_fold(1usize, |acc, ax| acc.checked_mul(ax.steps))
        .filter(|&n| n <= MAX_GRID_POINTS)
        .ok_or_else(|| cfg(ConfigError::invalid("sweep", format!("grid exceeds {MAX_GRID_POINTS} points"))))?;
    debug_assert!(grid >= 1);

    // full validation at the base point
    kinds::build(kind, &doc).map_err(cfg)?;

    Ok(Scenario {
        kind,
        name,
        sweep,
        output,
        params: doc,
        sha256: hex::encode(Sha256::digest(text.as_bytes())),
    })
}

fn parse_output(value: Option<Value>) -> Result<OutputSpec, ConfigError> {
    let mut spec = OutputSpec {
        path: None,
        format: Format::Csv,
    };
    let Some(value) = value else { return Ok(spec) };
    let Value::Table(table) = value else {
        return Err(ConfigError::invalid("output", "must be a table"));
    };
    let sec = Section::new("output", &table);
    if let Some(p) = sec.string("path")? {
        spec.path = Some(PathBuf::from(p));
    }
    if let Some(f) = sec.string("format")? {
        spec.format = Format::parse(&f)
            .ok_or_else(|| ConfigError::invalid("output.format", format!("`{f}` is not one of csv, jsonl")))?;
    }
    sec.finish()?;
    Ok(spec)
}

fn parse_sweep(value: Option<Value>, params: &Table) -> Result<Vec<SweepAxis>, ConfigError> {
    let Some(value) = value else { return Ok(Vec::new()) };
    let Value::Array(items) = value else {
        return Err(ConfigError::invalid("sweep", "must be an array of tables ([[sweep]])"));
    };
    let mut axes = Vec::with_capacity(items.len());
    for (i, item) in items.iter().enumerate() {
        let Value::Table(t) = item else {
            return Err(ConfigError::invalid("sweep", "must be an array of tables ([[sweep]])"));
        };
        let sec = Section::new(&format!("sweep.{i}"), t);
        let parameter = sec.req_string("parameter")?;
        let start = sec.req_f64("start")?;
        let stop = sec.req_f64("stop")?;
        let steps = sec.req_count("steps")?;
        if steps == 0 {
            return Err(ConfigError::invalid(&sec.key_path("steps"), "must be >= 1"));
        }
        let open_start = sec.bool("open_start")?.unwrap_or(false);
        sec.finish()?;
        match lookup(params, &parameter) {
            Some(Value::Float(_)) | Some(Value::Integer(_)) => {}
            _ => {
                return Err(ConfigError::invalid(
                    &sec.key_path("parameter"),
                    format!("`{parameter}` does not name a numeric parameter of this scenario"),
                ))
            }
        }
        if axes.iter().any(|a: &SweepAxis| a.parameter == parameter) {
            return Err(ConfigError::invalid(
                &sec.key_path("parameter"),
                format!("`{parameter}` is swept twice"),
            ));
        }
        axes.push(SweepAxis {
            parameter,
            start,
            stop,
            steps,
            open_start,
        });
    }
    Ok(axes)
}

/// Resolves a dotted path; numeric segments index arrays.
fn lookup<'a>(table: &'a Table, path: &str) -> Option<&'a Value> {
    let mut parts = path.split('.');
    let mut cur = table.get(parts.next()?)?;
    for part in parts {
        cur = match cur {
            Value::Table(t) => t.get(part)?,
            Value::Array(a) => a.get(part.parse::<usize>().ok()?)?,
            _ => return None,
        };
    }
    Some(cur)
}

fn lookup_mut<'a>(table: &'a mut Table, path: &str) -> Option<&'a mut Value> {
    let mut parts = path.split('.');
    let mut cur = table.get_mut(parts.next()?)?;
    for part in parts {
        cur = match cur {
            Value::Table(t) => t.get_mut(part)?,
            Value::Array(a) => a.get_mut(part.parse::<usize>().ok()?)?,
            _ => return None,
        };
    }
    Some(cur)
}

impl Scenario {
    /// Hex SHA-256 of the scenario file contents.
    pub fn sha256(&self) -> &str {
        &self.sha256
    }

    /// Grid points in row order: the first axis varies slowest.
    pub fn grid(&self) -> Vec<Vec<f64>> {
        let mut points = vec![Vec::new()];
        for axis in &self.sweep {
            let values = axis.values();
            points = points
                .into_iter()
                .flat_map(|p| {
                    values.iter().map(move |&v| {
                        let mut q = p.clone();
                        q.push(v);
                        q
                    })
                })
                .collect();
        }
        points
    }

    pub fn columns(&self) -> Vec<String> {
        self.sweep
            .iter()
            .map(|a| a.parameter.clone())
            .chain(self.kind.columns().iter().map(|c| c.to_string()))
            .collect()
    }

    /// Rows produced at one grid point; failures become rows carrying an
    /// error code.
    pub fn evaluate_point(&self, point: &[f64]) -> Vec<Row> {
        let mut params = self.params.clone();
        for (axis, &v) in self.sweep.iter().zip(point) {
            if let Some(slot) = lookup_mut(&mut params, &axis.parameter) {
                *slot = Value::Float(v);
            }
        }
        let prefix: Vec<Option<f64>> = point.iter().map(|&v| Some(v)).collect();
        let width = self.kind.columns().len();
        let rows = match kinds::build(self.kind, &params) {
            Ok(model) => model.evaluate(),
            Err(e) => vec![kinds::Outcome::failed(width, e.code())],
        };
        rows.into_iter()
            .map(|o| {
                let mut cells = prefix.clone();
                cells.extend(o.cells);
                Row::new(cells, o.error_code)
            })
            .collect()
    }

    pub fn provenance(&self) -> Vec<(String, String)> {
        let mut p = vec![
            ("tsagrid_version".to_string(), env!("CARGO_PKG_VERSION").to_string()),
            ("scenario_sha256".to_string(), self.sha256.clone()),
            ("kind".to_string(), self.kind.name().to_string()),
        ];
        if let Some(name) = &self.name {
            p.push(("name".to_string(), name.clone()));
        }
        p
    }
}

/// Evaluates every grid point, on `threads` workers when given. Row order is
/// independent of the thread count.
pub fn run_sweep(scn: &Scenario, threads: Option<usize>) -> Result<ResultTable, ScenarioError> {
    let points = scn.grid();
    let eval = || -> Vec<Vec<Row>> { points.par_iter().map(|p| scn.evaluate_point(p)).collect() };
    let chunks = match threads {
        Some(0) => {
            return Err(ScenarioError::Invalid {
                field: "threads".into(),
                reason: "must be >= 1".into(),
                line: None,
            })
        }
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| ScenarioError::Invalid {
                field: "threads".into(),
                reason: e.to_string(),
                line: None,
            })?
            .install(eval),
        None => eval(),
    };
    Ok(ResultTable {
        columns: scn.columns(),
        rows: chunks.into_iter().flatten().collect(),
        provenance: scn.provenance(),
    })
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map_or(0, |s| s.chars().count()) + 1;
    (line, col)
}

/// Best-effort source line of a dotted field path such as `fault.location`
/// or `sweep.1.steps`.
fn field_line(text: &str, field: &str) -> Option<usize> {
    let parts: Vec<&str> = field.split('.').collect();
    // `[[table]]` entries are addressed by a numeric segment after the name
    for split in (0..parts.len()).rev() {
        let (header, rest) = parts.split_at(split);
        let (header, nth) = match header.last().and_then(|s| s.parse::<usize>().ok()) {
            Some(n) => (&header[..header.len() - 1], n),
            None => (header, 0),
        };
        let Some(key) = rest.first() else { continue };
        if let Some(line) = find_key(text, &header.join("."), nth, key) {
            return Some(line);
        }
    }
    None
}

fn find_key(text: &str, header: &str, nth: usize, key: &str) -> Option<usize> {
    let mut in_table = header.is_empty();
    let mut seen = 0usize;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(h) = line.strip_prefix('[') {
            let h = h.trim_start_matches('[');
            let name = h.split(']').next().unwrap_or("").trim();
            in_table = false;
            if name == header {
                if seen == nth {
                    in_table = true;
                }
                seen += 1;
            }
            continue;
        }
        if in_table {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim().trim_matches('"') == key {
                    return Some(i + 1);
                }
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL_FAULT: &str = r#"
kind = "line_fault"

[line]
preset = "benchmark_400km"

[system]
source_emf = { magnitude = 25000.0, angle_deg = 0.0 }
load_impedance = { magnitude = 330.0, angle_deg = 25.841932763167126 }
"#;

    #[test]
    fn minimal_line_fault_loads() {
        let scn = parse_scenario(MINIMAL_FAULT).unwrap();
        assert_eq!(scn.kind, Kind::LineFault);
        assert_eq!(scn.grid(), vec![Vec::<f64>::new()]);
        assert_eq!(scn.sha256().len(), 64);
    }

    #[test]
    fn unknown_kind_lists_valid_kinds() {
        let err = parse_scenario("kind = \"foo\"\n").unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, ScenarioError::UnknownKind { line: Some(1), .. }));
        for k in Kind::names() {
            assert!(msg.contains(k), "{msg}");
        }
    }

    #[test]
    fn missing_propagation_speed_is_explicit() {
        let text = r#"
kind = "event_location"
[[anchor]]
id = "A"
x_km = 0.0
y_km = 0.0
[[anchor]]
id = "B"
x_km = 100.0
y_km = 0.0
[[anchor]]
id = "C"
x_km = 0.0
y_km = 100.0
[event]
x_km = 20.0
y_km = 30.0
t_s = 0.0
"#;
        let err = parse_scenario(text).unwrap_err();
        match err {
            ScenarioError::MissingParameter { field, .. } => assert_eq!(field, "propagation.v_e_km_per_s"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn syntax_errors_carry_positions() {
        let err = parse_scenario("kind = \"line_fault\"\n[line\n").unwrap_err();
        assert!(matches!(err, ScenarioError::Parse { line: Some(2), .. }), "{err:?}");
    }

    #[test]
    fn field_errors_carry_lines() {
        let text = MINIMAL_FAULT.replace("preset = \"benchmark_400km\"", "preset = \"benchmark_400km\"\nlength_km = -5.0");
        let err = parse_scenario(&text).unwrap_err();
        match err {
            ScenarioError::Invalid { field, line, .. } => {
                assert_eq!(field, "line.length_km");
                assert_eq!(line, Some(6));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = MINIMAL_FAULT.replace("[system]", "[system]\nlaod = 3.0");
        let err = parse_scenario(&text).unwrap_err();
        assert!(err.to_string().contains("system.laod"), "{err}");
    }

    #[test]
    fn sweep_must_target_existing_numbers() {
        let text = format!("{MINIMAL_FAULT}\n[[sweep]]\nparameter = \"attack.dtheta_s_deg\"\nstart = 0.0\nstop = 1.0\nsteps = 2\n");
        let err = parse_scenario(&text).unwrap_err();
        assert!(matches!(err, ScenarioError::Invalid { line: Some(12), .. }), "{err:?}");
        let text = format!("{MINIMAL_FAULT}\n[[sweep]]\nparameter = \"system.load_impedance.magnitude\"\nstart = 100.0\nstop = 300.0\nsteps = 0\n");
        assert!(parse_scenario(&text).is_err());
    }

    #[test]
    fn axis_values() {
        let ax = |start, stop, steps, open_start| SweepAxis {
            parameter: "p".into(),
            start,
            stop,
            steps,
            open_start,
        };
        assert_eq!(ax(0.0, 1.0, 1, false).values(), vec![0.0]);
        assert_eq!(ax(0.0, 1.0, 3, false).values(), vec![0.0, 0.5, 1.0]);
        assert_eq!(ax(-180.0, 180.0, 4, true).values(), vec![-90.0, 0.0, 90.0, 180.0]);
        assert_eq!(ax(-180.0, 180.0, 73, true).values().len(), 73);
    }

    #[test]
    fn grid_is_lexicographic() {
        let text = format!(
            "{MINIMAL_FAULT}\n[attack]\ndtheta_s_deg = 0.0\ndtheta_r_deg = 0.0\n\
             [[sweep]]\nparameter = \"attack.dtheta_s_deg\"\nstart = 0.0\nstop = 10.0\nsteps = 2\n\
             [[sweep]]\nparameter = \"attack.dtheta_r_deg\"\nstart = 0.0\nstop = 20.0\nsteps = 3\n"
        );
        let scn = parse_scenario(&text).unwrap();
        let g = scn.grid();
        assert_eq!(g.len(), 6);
        assert_eq!(g[0], vec![0.0, 0.0]);
        assert_eq!(g[1], vec![0.0, 10.0]);
        assert_eq!(g[3], vec![10.0, 0.0]);
    }

    #[test]
    fn oversized_grid_rejected() {
        let text = format!(
            "{MINIMAL_FAULT}\n[attack]\ndtheta_s_deg = 0.0\ndtheta_r_deg = 0.0\n\
             [[sweep]]\nparameter = \"attack.dtheta_s_deg\"\nstart = 0.0\nstop = 10.0\nsteps = 100000\n\
             [[sweep]]\nparameter = \"attack.dtheta_r_deg\"\nstart = 0.0\nstop = 20.0\nsteps = 100000\n"
        );
        assert!(parse_scenario(&text).is_err());
    }

    #[test]
    fn thread_count_does_not_change_output() {
        let text = format!(
            "{MINIMAL_FAULT}\n[fault]\nlocation = 0.5\nresistance = 100.0\n[attack]\ndtheta_r_deg = 0.0\n\
             [[sweep]]\nparameter = \"attack.dtheta_r_deg\"\nstart = -180.0\nstop = 180.0\nsteps = 24\nopen_start = true\n"
        );
        let scn = parse_scenario(&text).unwrap();
        let one = run_sweep(&scn, Some(1)).unwrap();
        let four = run_sweep(&scn, Some(4)).unwrap();
        assert_eq!(one, four);
        assert_eq!(one.rows.len(), 24);
        assert!(run_sweep(&scn, Some(0)).is_err());
    }

    #[test]
    fn point_failures_become_rows() {
        let text = format!(
            "{MINIMAL_FAULT}\n[fault]\nlocation = 0.5\nresistance = 100.0\n\
             [[sweep]]\nparameter = \"fault.location\"\nstart = 0.5\nstop = 1.5\nsteps = 2\n"
        );
        let scn = parse_scenario(&text).unwrap();
        let table = run_sweep(&scn, None).unwrap();
        assert_eq!(table.rows.len(), 2);
        assert_eq!(table.rows[0].error_code, None);
        assert_eq!(table.rows[1].error_code.as_deref(), Some("invalid_parameter"));
        assert!(table.rows[1].cells[1..].iter().all(|c| c.is_none()));
    }
}
