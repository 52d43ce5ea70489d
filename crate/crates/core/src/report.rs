//! Deterministic text output: 12-significant-digit numbers and small CSV tables.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Formats a number with 12 significant digits in scientific notation.
pub fn fmt_num(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    format!("{x:.11e}")
}

/// Column-named table of numbers written as CSV.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl CsvTable {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        CsvTable { header: header.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{}", self.header.join(","))?;
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| fmt_num(*v)).collect();
            writeln!(out, "{}", cells.join(","))?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(fmt_num(1.0 / 3.0), "3.33333333333e-1");
        assert_eq!(fmt_num(0.0), "0");
        let back: f64 = fmt_num(123.456789012345).parse().unwrap();
        assert!((back - 123.456789012).abs() < 1e-9);
    }

    #[test]
    fn table_round_trip() {
        let mut t = CsvTable::new(["x", "v"]);
        t.push(vec![1.0, -0.5]);
        assert_eq!(t.to_csv_string(), "x,v\n1.00000000000e0,-5.00000000000e-1\n");
        assert_eq!(t.column("v"), Some(vec![-0.5]));
    }
}
