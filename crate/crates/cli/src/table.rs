//! Typed report tables with CSV, JSON, and markdown rendering.
//!
//! Floats render in shortest round-trip form (always with a decimal point
//! or exponent), so `parse(emit(table)) == table` holds cell for cell and
//! repeated runs produce byte-identical files.

use serde::{Deserialize, Serialize};

/// One table cell. `Null` marks a metric that is undefined on its input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Null,
    Int(i64),
    Float(f64),
    Str(String),
}

impl Cell {
    pub fn render(&self) -> String {
        match self {
            Cell::Null => String::new(),
            Cell::Int(i) => format!("{i}"),
            // Debug formatting keeps a trailing ".0" on integral floats,
            // which the parser needs to tell Float from Int.
            Cell::Float(f) => format!("{f:?}"),
            Cell::Str(s) => s.clone(),
        }
    }

    pub fn parse(s: &str) -> Cell {
        if s.is_empty() {
            return Cell::Null;
        }
        if let Ok(i) = s.parse::<i64>() {
            return Cell::Int(i);
        }
        if let Ok(f) = s.parse::<f64>() {
            return Cell::Float(f);
        }
        Cell::Str(s.to_string())
    }

    pub fn opt_float(v: Option<f64>) -> Cell {
        v.map_or(Cell::Null, Cell::Float)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::Int(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Str(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Str(v)
    }
}

/// A named table with a fixed column set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Table {
        Table {
            name: name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len(), "table {}", self.name);
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
        w.write_record(&self.columns).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row.iter().map(|c| c.render())).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8")
    }

    pub fn from_csv(name: &str, text: &str) -> anyhow::Result<Table> {
        let mut r = csv::ReaderBuilder::new().from_reader(text.as_bytes());
        let columns: Vec<String> =
            r.headers()?.iter().map(|h| h.to_string()).collect();
        let mut rows = Vec::new();
        for record in r.records() {
            let record = record?;
            rows.push(record.iter().map(Cell::parse).collect());
        }
        Ok(Table { name: name.to_string(), columns, rows })
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("### {}\n\n", self.name));
        out.push_str(&format!("| {} |\n", self.columns.join(" | ")));
        out.push_str(&format!(
            "|{}\n",
            self.columns.iter().map(|_| " --- |").collect::<String>()
        ));
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|c| c.render()).collect();
            out.push_str(&format!("| {} |\n", cells.join(" | ")));
        }
        out.push('\n');
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("table serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Table {
        let mut t = Table::new("demo", &["method", "n", "nll", "auroc"]);
        t.push(vec!["mean_prob".into(), 10usize.into(), 0.5.into(), Cell::opt_float(None)]);
        t.push(vec!["median_prob".into(), 10usize.into(), 2.0.into(), Cell::opt_float(Some(0.75))]);
        t
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let t = sample();
        let back = Table::from_csv("demo", &t.to_csv()).unwrap();
        assert_eq!(t, back);
    }

    #[test]
    fn integral_floats_stay_floats() {
        assert_eq!(Cell::Float(2.0).render(), "2.0");
        assert_eq!(Cell::parse("2.0"), Cell::Float(2.0));
        assert_eq!(Cell::parse("2"), Cell::Int(2));
        assert_eq!(Cell::parse(""), Cell::Null);
    }

    #[test]
    fn json_round_trip_is_exact() {
        let t = sample();
        let back: Table = serde_json::from_str(&t.to_json()).unwrap();
        assert_eq!(t, back);
    }

    #[test]
    fn markdown_contains_all_cells() {
        let md = sample().to_markdown();
        assert!(md.contains("| mean_prob | 10 | 0.5 |  |"));
        assert!(md.contains("| median_prob | 10 | 2.0 | 0.75 |"));
    }
}
