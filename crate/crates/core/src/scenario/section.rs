//! Typed access to one TOML table, tracking which keys were consumed so that
//! misspelled keys are reported instead of ignored.

use std::cell::RefCell;
use std::f64::consts::PI;

use toml::{Table, Value};

use crate::phasor::Complex;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum ConfigError {
    Missing { field: String, hint: String },
    Invalid { field: String, reason: String },
}

impl ConfigError {
    pub(crate) fn invalid(field: &str, reason: impl Into<String>) -> Self {
        ConfigError::Invalid {
            field: field.to_string(),
            reason: reason.into(),
        }
    }

    pub(crate) fn missing(field: &str, hint: impl Into<String>) -> Self {
        ConfigError::Missing {
            field: field.to_string(),
            hint: hint.into(),
        }
    }

    pub(crate) fn code(&self) -> &'static str {
        match self {
            ConfigError::Missing { .. } => "missing_parameter",
            ConfigError::Invalid { .. } => "invalid_parameter",
        }
    }
}

pub(crate) type CfgResult<T> = std::result::Result<T, ConfigError>;

pub(crate) struct Section<'a> {
    path: String,
    table: &'a Table,
    used: RefCell<Vec<String>>,
}

impl<'a> Section<'a> {
    pub(crate) fn new(path: &str, table: &'a Table) -> Self {
        Section {
            path: path.to_string(),
            table,
            used: RefCell::new(Vec::new()),
        }
    }

    pub(crate) fn key_path(&self, key: &str) -> String {
        if self.path.is_empty() {
            key.to_string()
        } else {
            format!("{}.{key}", self.path)
        }
    }

    fn get(&self, key: &str) -> Option<&'a Value> {
        self.used.borrow_mut().push(key.to_string());
        self.table.get(key)
    }

    pub(crate) fn f64(&self, key: &str) -> CfgResult<Option<f64>> {
        self.get(key).map(|v| number(v, &self.key_path(key))).transpose()
    }

    pub(crate) fn req_f64(&self, key: &str) -> CfgResult<f64> {
        self.f64(key)?
            .ok_or_else(|| ConfigError::missing(&self.key_path(key), "a number is required"))
    }

    /// Non-negative integer; integral floats are accepted so sweeps can drive it.
    pub(crate) fn count(&self, key: &str) -> CfgResult<Option<usize>> {
        let field = self.key_path(key);
        match self.get(key) {
            None => Ok(None),
            Some(Value::Integer(i)) if *i >= 0 => Ok(Some(*i as usize)),
            Some(Value::Float(f)) if f.fract() == 0.0 && *f >= 0.0 && *f < 9.0e15 => Ok(Some(*f as usize)),
            Some(_) => Err(ConfigError::invalid(&field, "must be a non-negative integer")),
        }
    }

    pub(crate) fn req_count(&self, key: &str) -> CfgResult<usize> {
        self.count(key)?
            .ok_or_else(|| ConfigError::missing(&self.key_path(key), "an integer is required"))
    }

    pub(crate) fn string(&self, key: &str) -> CfgResult<Option<String>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(_) => Err(ConfigError::invalid(&self.key_path(key), "must be a string")),
        }
    }

    pub(crate) fn req_string(&self, key: &str) -> CfgResult<String> {
        self.string(key)?
            .ok_or_else(|| ConfigError::missing(&self.key_path(key), "a string is required"))
    }

    pub(crate) fn bool(&self, key: &str) -> CfgResult<Option<bool>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Boolean(b)) => Ok(Some(*b)),
            Some(_) => Err(ConfigError::invalid(&self.key_path(key), "must be true or false")),
        }
    }

    /// `[re, im]` or `{ magnitude = …, angle_deg = … }`.
    pub(crate) fn complex(&self, key: &str) -> CfgResult<Option<Complex>> {
        let field = self.key_path(key);
        let Some(v) = self.get(key) else { return Ok(None) };
        match v {
            Value::Array(a) if a.len() == 2 => {
                let re = number(&a[0], &format!("{field}.0"))?;
                let im = number(&a[1], &format!("{field}.1"))?;
                Ok(Some(Complex::new(re, im)))
            }
            Value::Table(t) => {
                let sec = Section::new(&field, t);
                let mag = sec.req_f64("magnitude")?;
                let ang = sec.req_f64("angle_deg")?;
                sec.finish()?;
                Ok(Some(Complex::from_polar(mag, ang * PI / 180.0)))
            }
            _ => Err(ConfigError::invalid(
                &field,
                "expected [re, im] or { magnitude = …, angle_deg = … }",
            )),
        }
    }

    pub(crate) fn req_complex(&self, key: &str) -> CfgResult<Complex> {
        self.complex(key)?.ok_or_else(|| {
            ConfigError::missing(&self.key_path(key), "expected [re, im] or { magnitude, angle_deg }")
        })
    }

    pub(crate) fn f64_array(&self, key: &str) -> CfgResult<Option<Vec<f64>>> {
        let field = self.key_path(key);
        match self.get(key) {
            None => Ok(None),
            Some(Value::Array(a)) => a
                .iter()
                .enumerate()
                .map(|(i, v)| number(v, &format!("{field}.{i}")))
                .collect::<CfgResult<Vec<_>>>()
                .map(Some),
            Some(_) => Err(ConfigError::invalid(&field, "must be an array of numbers")),
        }
    }

    pub(crate) fn table(&self, key: &str) -> CfgResult<Option<Section<'a>>> {
        let field = self.key_path(key);
        match self.get(key) {
            None => Ok(None),
            Some(Value::Table(t)) => Ok(Some(Section::new(&field, t))),
            Some(_) => Err(ConfigError::invalid(&field, "must be a table")),
        }
    }

    pub(crate) fn req_table(&self, key: &str) -> CfgResult<Section<'a>> {
        self.table(key)?
            .ok_or_else(|| ConfigError::missing(&self.key_path(key), format!("a [{key}] table is required")))
    }

    /// Entries of a `[[key]]` array of tables; absent means empty.
    pub(crate) fn tables(&self, key: &str) -> CfgResult<Vec<Section<'a>>> {
        let field = self.key_path(key);
        match self.get(key) {
            None => Ok(Vec::new()),
            Some(Value::Array(a)) => a
                .iter()
                .enumerate()
                .map(|(i, v)| match v {
                    Value::Table(t) => Ok(Section::new(&format!("{field}.{i}"), t)),
                    _ => Err(ConfigError::invalid(&field, format!("must be written as [[{key}]] tables"))),
                })
                .collect(),
            Some(_) => Err(ConfigError::invalid(&field, format!("must be written as [[{key}]] tables"))),
        }
    }

    /// Fails on the first key that was never read.
    pub(crate) fn finish(&self) -> CfgResult<()> {
        let used = self.used.borrow();
        match self.table.keys().find(|k| !used.iter().any(|u| u == *k)) {
            Some(k) => Err(ConfigError::invalid(&self.key_path(k), "unknown key")),
            None => Ok(()),
        }
    }
}

fn number(v: &Value, field: &str) -> CfgResult<f64> {
    let x = match v {
        Value::Float(f) => *f,
        Value::Integer(i) => *i as f64,
        _ => return Err(ConfigError::invalid(field, "must be a number")),
    };
    if x.is_finite() {
        Ok(x)
    } else {
        Err(ConfigError::invalid(field, "must be finite"))
    }
}

pub(crate) fn deg(x: f64) -> f64 {
    x * PI / 180.0
}

pub(crate) fn to_deg(x: f64) -> f64 {
    x * 180.0 / PI
}
