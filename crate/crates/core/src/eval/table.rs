//! Model × budget tables of aggregated scores.

use std::fmt::Write as _;

use super::metrics::Summary;
use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "model,budget,mean,ci95";

#[derive(Clone, Debug, PartialEq)]
pub struct ResultTable {
    pub title: String,
    pub budgets: Vec<usize>,
    /// `(model, one summary per budget)`.
    pub rows: Vec<(String, Vec<Summary>)>,
}

impl ResultTable {
    pub fn new(title: &str, budgets: Vec<usize>) -> Self {
        Self { title: title.to_string(), budgets, rows: Vec::new() }
    }

    pub fn push_row(&mut self, model: &str, cells: Vec<Summary>) -> Result<()> {
        if cells.len() != self.budgets.len() {
            return Err(Error::ShapeMismatch { expected: vec![self.budgets.len()], got: vec![cells.len()] });
        }
        self.rows.push((model.to_string(), cells));
        Ok(())
    }

    pub fn models(&self) -> impl Iterator<Item = &str> {
        self.rows.iter().map(|(m, _)| m.as_str())
    }

    pub fn row(&self, model: &str) -> Option<&[Summary]> {
        self.rows.iter().find(|(m, _)| m == model).map(|(_, c)| c.as_slice())
    }

    pub fn cell(&self, model: &str, budget: usize) -> Option<Summary> {
        let j = self.budgets.iter().position(|&b| b == budget)?;
        self.row(model).map(|r| r[j])
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{CSV_HEADER}\n");
        for (model, cells) in &self.rows {
            for (b, c) in self.budgets.iter().zip(cells) {
                let _ = writeln!(out, "{model},{b},{},{}", c.mean, c.ci95);
            }
        }
        out
    }

    /// Parses [`ResultTable::to_csv`] output. Measurement counts are not
    /// stored and come back as 0.
    pub fn from_csv(title: &str, text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(CSV_HEADER) {
            return Err(Error::Parse(format!("expected header `{CSV_HEADER}`")));
        }
        let mut table = Self::new(title, Vec::new());
        let mut entries: Vec<(String, usize, Summary)> = Vec::new();
        for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let f: Vec<&str> = line.split(',').collect();
            let bad = || Error::Parse(format!("line {}: `{line}`", i + 2));
            if f.len() != 4 {
                return Err(bad());
            }
            let budget = f[1].parse().map_err(|_| bad())?;
            let mean = f[2].parse().map_err(|_| bad())?;
            let ci95 = f[3].parse().map_err(|_| bad())?;
            if !table.budgets.contains(&budget) {
                table.budgets.push(budget);
            }
            entries.push((f[0].to_string(), budget, Summary { mean, ci95, n: 0 }));
        }
        let mut models: Vec<String> = Vec::new();
        for (m, ..) in &entries {
            if !models.contains(m) {
                models.push(m.clone());
            }
        }
        for m in models {
            let cells = table
                .budgets
                .iter()
                .map(|&b| {
                    entries
                        .iter()
                        .find(|(em, eb, _)| *em == m && *eb == b)
                        .map(|e| e.2)
                        .ok_or_else(|| Error::Parse(format!("no cell for {m} at budget {b}")))
                })
                .collect::<Result<Vec<_>>>()?;
            table.rows.push((m, cells));
        }
        Ok(table)
    }

    /// Fixed-width text layout: one row per model, `mean ± ci` per budget.
    pub fn to_text(&self, decimals: usize) -> String {
        let fmt = |s: &Summary| format!("{:.*} ± {:.*}", decimals, s.mean, decimals, s.ci95);
        let name_w = self.rows.iter().map(|(m, _)| m.chars().count()).max().unwrap_or(5).max(5);
        let cell_w = self
            .rows
            .iter()
            .flat_map(|(_, c)| c.iter().map(|s| fmt(s).chars().count()))
            .max()
            .unwrap_or(8)
            .max(8);
        let mut out = format!("{}\n", self.title);
        let _ = write!(out, "{:<name_w$}", "model");
        for b in &self.budgets {
            let _ = write!(out, " | {:>cell_w$}", b);
        }
        out.push('\n');
        out.push_str(&"-".repeat(name_w + self.budgets.len() * (cell_w + 3)));
        out.push('\n');
        for (m, cells) in &self.rows {
            let _ = write!(out, "{m:<name_w$}");
            for c in cells {
                let _ = write!(out, " | {:>cell_w$}", fmt(c));
            }
            out.push('\n');
        }
        out
    }
}
