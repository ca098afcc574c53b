//! Per-iteration cost traces and their CSV form.

use std::io::{self, Write};

/// One cost evaluation: the total plus its two constituent terms
/// (their meaning depends on the engine and is carried in the header).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostRow {
    pub iteration: usize,
    pub total: f64,
    pub term_a: f64,
    pub term_b: f64,
}

/// Cost trace of a run. Row 0 is the state right after initialization;
/// row i is the state after sweep i.
#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    /// Column names following "iteration" in the CSV.
    pub header: [&'static str; 3],
    pub rows: Vec<CostRow>,
    /// KL fit term after the final sweep.
    pub final_kl: f64,
    pub iterations_run: usize,
}

impl FitReport {
    pub fn new(header: [&'static str; 3]) -> Self {
        FitReport {
            header,
            rows: Vec::new(),
            final_kl: 0.0,
            iterations_run: 0,
        }
    }

    pub fn push(&mut self, total: f64, term_a: f64, term_b: f64) {
        self.rows.push(CostRow {
            iteration: self.rows.len(),
            total,
            term_a,
            term_b,
        });
    }

    /// Totals in iteration order.
    pub fn cost_trace(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.total).collect()
    }

    /// True when consecutive totals never rise by more than the relative
    /// slack (the descent property of the pure-mode engines).
    pub fn is_non_increasing(&self, rel_slack: f64) -> bool {
        self.rows
            .windows(2)
            .all(|w| w[1].total <= w[0].total + rel_slack * (1.0 + w[0].total.abs()))
    }

    /// One row per iteration; floats printed in shortest round-trip form
    /// so the CSV parses back to the exact same values.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(
            out,
            "iteration,{},{},{}",
            self.header[0], self.header[1], self.header[2]
        )?;
        for row in &self.rows {
            writeln!(
                out,
                "{},{},{},{}",
                row.iteration, row.total, row.term_a, row.term_b
            )?;
        }
        Ok(())
    }
}
