//! Tabular and structured output shared by every subcommand.

use std::fmt::Write as _;

use serde_json::{json, Map, Value};

use gradkit::spectra::FitResult;

#[derive(Clone, Debug)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Str(String),
    Empty,
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Str(v.to_string())
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Str(v.to_string())
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::Num)
    }
}

impl Cell {
    fn text(&self) -> String {
        match self {
            Cell::Num(v) => v.to_string(),
            Cell::Int(v) => v.to_string(),
            Cell::Str(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Num(v) if v.is_finite() => json!(v),
            Cell::Num(_) | Cell::Empty => Value::Null,
            Cell::Int(v) => json!(v),
            Cell::Str(s) => json!(s),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(headers: &[&str]) -> Self {
        Self {
            headers: headers.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.headers.len());
        self.rows.push(row);
    }

    pub fn csv(&self) -> String {
        let mut out = self.headers.join(",");
        out.push('\n');
        for r in &self.rows {
            let cells: Vec<String> = r.iter().map(Cell::text).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn json(&self) -> Value {
        Value::Array(
            self.rows
                .iter()
                .map(|r| {
                    let obj: Map<String, Value> = self
                        .headers
                        .iter()
                        .zip(r)
                        .map(|(h, c)| (h.clone(), c.json()))
                        .collect();
                    Value::Object(obj)
                })
                .collect(),
        )
    }
}

pub enum Output {
    Table(Table),
    /// Free text plus its structured equivalent.
    Document { text: String, json: Value },
}

impl Output {
    pub fn render(&self, as_json: bool) -> String {
        match (self, as_json) {
            (Output::Table(t), false) => t.csv(),
            (Output::Table(t), true) => pretty(&t.json()),
            (Output::Document { text, .. }, false) => text.clone(),
            (Output::Document { json, .. }, true) => pretty(json),
        }
    }
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serialisable");
    s.push('\n');
    s
}

pub fn fit_json(fit: &FitResult) -> Value {
    let errors = fit.std_errors();
    let params: Map<String, Value> = fit
        .names
        .iter()
        .zip(&fit.values)
        .zip(&errors)
        .map(|((n, v), e)| (n.clone(), json!({ "value": v, "std_error": e })))
        .collect();
    let derived: Map<String, Value> = fit
        .derived
        .iter()
        .map(|(n, (v, e))| (n.clone(), json!({ "value": v, "std_error": e })))
        .collect();
    let cov: Vec<Vec<f64>> = (0..fit.covariance.nrows())
        .map(|i| fit.covariance.row(i).iter().copied().collect())
        .collect();
    json!({
        "parameters": params,
        "derived": derived,
        "covariance": cov,
        "chi2_per_dof": fit.chi2_per_dof,
        "iterations": fit.iterations,
    })
}

/// `key=value` lines prefixed with `# ` so they can trail a geometry file.
pub fn comment_block(pairs: &[(&str, String)]) -> String {
    let mut out = String::new();
    for (k, v) in pairs {
        let _ = writeln!(out, "# {k}={v}");
    }
    out
}
