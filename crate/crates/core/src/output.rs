//! Plot-ready CSV and JSON artifacts.
//!
//! Every CSV starts with one header row whose column names carry their unit
//! in brackets (`[au]`, `[fs]`, `[1]` for dimensionless). Numbers are written
//! with 15 significant digits (`{:.14e}`), integers and booleans verbatim.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::angular::Basis;
use crate::dynamics::{FieldTrace, TimeGrid};
use crate::optim::{IterationRecord, RootScanReport};
use crate::units::UNITS;
use crate::Result;

pub const CONVERGENCE_FILE: &str = "convergence.csv";
pub const DYNAMICS_FILE: &str = "dynamics.csv";
pub const SUMMARY_FILE: &str = "summary.json";

pub fn fmt_num(x: f64) -> String {
    format!("{:.16e}", x)
}

/// Minimal CSV builder: a header row, then rows of pre-formatted cells.
#[derive(Debug, Clone, Default)]
pub struct CsvTable {
    text: String,
    columns: usize,
}

impl CsvTable {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        let mut t = CsvTable {
            text: String::new(),
            columns: header.len(),
        };
        t.push_cells(header.iter().map(|s| s.as_ref().to_string()));
        t
    }

    fn push_cells(&mut self, cells: impl Iterator<Item = String>) {
        let mut n = 0;
        for (i, c) in cells.enumerate() {
            if i > 0 {
                self.text.push(',');
            }
            self.text.push_str(&c);
            n += 1;
        }
        debug_assert_eq!(n, self.columns, "row width differs from header");
        self.text.push('\n');
    }

    pub fn row(&mut self, cells: Vec<String>) {
        self.push_cells(cells.into_iter());
    }

    pub fn numbers(&mut self, values: &[f64]) {
        self.push_cells(values.iter().map(|&v| fmt_num(v)));
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, &self.text)?;
        Ok(())
    }
}

/// Per-iteration table. Wall time is left out so reruns are byte-identical.
pub fn convergence_table(records: &[IterationRecord]) -> CsvTable {
    let mut t = CsvTable::new(&[
        "iteration",
        "fidelity[1]",
        "running_cost[1]",
        "total_cost[1]",
        "delta_cost[1]",
        "max_abs_field[au]",
        "total_variation[au]",
        "fallback_events",
        "held_steps",
        "negative_steps",
        "monotone",
    ]);
    for r in records {
        t.row(vec![
            r.iteration.to_string(),
            fmt_num(r.fidelity),
            fmt_num(r.running_cost),
            fmt_num(r.total_cost),
            fmt_num(r.delta_cost),
            fmt_num(r.max_field),
            fmt_num(r.total_variation),
            r.fallback_events.to_string(),
            r.held_steps.to_string(),
            r.negative_steps.to_string(),
            r.monotone.to_string(),
        ]);
    }
    t
}

/// Guess and optimized samples of one channel at step midpoints.
pub fn field_table(grid: &TimeGrid, guess: &FieldTrace, optimized: &FieldTrace, channel: usize) -> CsvTable {
    let mut t = CsvTable::new(&["t[au]", "t[fs]", "e_guess[au]", "e_opt[au]"]);
    for (n, time) in grid.midpoints().enumerate() {
        t.numbers(&[
            time,
            UNITS.au_to_fs(time),
            guess.channel(channel)[n],
            optimized.channel(channel)[n],
        ]);
    }
    t
}

/// Column names of dynamics.csv for a basis.
pub fn dynamics_header(basis: &Basis) -> Vec<String> {
    let mut h = vec!["t[au]".to_string(), "t[fs]".to_string()];
    h.extend(basis.states().iter().map(|s| format!("pop_j{}_m{}[1]", s.j, s.m)));
    h.extend(
        ["cos_theta[1]", "cos2_theta[1]", "cos2_theta_p[1]", "cos2_theta_c[1]", "jz_measure[1]"]
            .iter()
            .map(|s| s.to_string()),
    );
    h
}

pub fn root_scan_table(report: &RootScanReport) -> CsvTable {
    let mut t = CsvTable::new(&["lambda[au]", "x[1]", "root[au]"]);
    for (l, x, r) in report.rows() {
        t.numbers(&[l, x, r]);
    }
    t
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

/// Human-readable two-column listing used by the CLI.
pub fn key_values(pairs: &[(&str, String)]) -> String {
    let width = pairs.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    let mut s = String::new();
    for (k, v) in pairs {
        let _ = writeln!(s, "{:width$}  {}", k, v, width = width);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        assert_eq!(fmt_num(1.0 / 3.0), "3.3333333333333331e-1");
        assert_eq!(fmt_num(1.0 / 3.0).parse::<f64>().unwrap(), 1.0 / 3.0);
        assert_eq!(fmt_num(-2.5e-3), "-2.5000000000000001e-3");
        assert_eq!(fmt_num(0.0), "0.0000000000000000e0");
    }

    #[test]
    fn header_then_rows() {
        let mut t = CsvTable::new(&["a[au]", "b[1]"]);
        t.numbers(&[1.0, 2.0]);
        let lines: Vec<&str> = t.as_str().lines().collect();
        assert_eq!(lines[0], "a[au],b[1]");
        assert_eq!(lines[1].split(',').count(), 2);
    }

    #[test]
    fn every_dynamics_column_declares_a_unit() {
        let b = Basis::full(2);
        let h = dynamics_header(&b);
        assert_eq!(h.len(), 2 + 9 + 5);
        assert!(h.iter().all(|c| c.ends_with(']')));
    }
}
