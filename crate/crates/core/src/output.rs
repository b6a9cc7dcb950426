//! CSV tables with a commented metadata block.

use nalgebra::{DMatrix, DVector};

pub const SCHEMA_VERSION: u32 = 1;

/// Provenance written above every table.
#[derive(Clone, Debug, PartialEq)]
pub struct Metadata {
    pub command: String,
    pub config_hash: String,
    pub seed: Option<u64>,
    pub tolerances: Vec<(String, f64)>,
}

/// Shortest round-trip representation, in exponent form for very small or
/// very large magnitudes.
pub fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 {
        "0".into()
    } else if (1e-4..1e15).contains(&a) || !v.is_finite() {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self { name: name.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    /// Long layout `quantity,i,j,value` with 1-based indices.
    pub fn tidy(name: &str) -> Self {
        Self::new(name, &["quantity", "i", "j", "value"])
    }

    pub fn row(&mut self, cells: Vec<String>) {
        debug_assert_eq!(cells.len(), self.columns.len());
        self.rows.push(cells);
    }

    pub fn entry(&mut self, quantity: &str, i: Option<usize>, j: Option<usize>, value: f64) {
        let idx = |k: Option<usize>| k.map(|k| (k + 1).to_string()).unwrap_or_default();
        self.row(vec![quantity.into(), idx(i), idx(j), fmt_f64(value)]);
    }

    pub fn scalar(&mut self, quantity: &str, value: f64) {
        self.entry(quantity, None, None, value);
    }

    pub fn flag(&mut self, quantity: &str, value: bool) {
        self.scalar(quantity, if value { 1.0 } else { 0.0 });
    }

    pub fn vector(&mut self, quantity: &str, v: &DVector<f64>) {
        for (i, x) in v.iter().enumerate() {
            self.entry(quantity, Some(i), None, *x);
        }
    }

    /// Row-major entries `(i, j)`.
    pub fn matrix(&mut self, quantity: &str, m: &DMatrix<f64>) {
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                self.entry(quantity, Some(i), Some(j), m[(i, j)]);
            }
        }
    }

    pub fn render(&self, meta: &Metadata) -> String {
        let mut s = String::new();
        s.push_str(&format!("# schema: pa-contracts/{}/v{SCHEMA_VERSION}\n", self.name));
        s.push_str(&format!("# command: {}\n", meta.command));
        s.push_str(&format!("# config_sha256: {}\n", meta.config_hash));
        match meta.seed {
            Some(seed) => s.push_str(&format!("# seed: {seed}\n")),
            None => s.push_str("# seed: none\n"),
        }
        let tol: Vec<String> = meta.tolerances.iter().map(|(k, v)| format!("{k}={}", fmt_f64(*v))).collect();
        s.push_str(&format!("# tolerances: {}\n", tol.join(";")));
        s.push_str(&self.columns.join(","));
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }
}
