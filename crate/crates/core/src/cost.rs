//! Work accounting: per-run ledgers, averages over independent runs and
//! cost comparison tables.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the work of one sample is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum WorkModel {
    /// Seconds spent in the solver.
    #[default]
    Wallclock,
    /// Cells times time steps; reproducible across machines.
    Deterministic,
}

impl std::fmt::Display for WorkModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            WorkModel::Wallclock => "wallclock",
            WorkModel::Deterministic => "deterministic",
        })
    }
}

impl std::str::FromStr for WorkModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wallclock" => Ok(WorkModel::Wallclock),
            "deterministic" => Ok(WorkModel::Deterministic),
            other => Err(Error::config(format!("unknown work model `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub level: usize,
    /// `None` when the level is not stratified.
    pub stratum: Option<usize>,
    pub count: usize,
    pub avg_work: f64,
}

impl LedgerEntry {
    pub fn cost(&self) -> f64 {
        self.avg_work * self.count as f64
    }
}

/// Samples and average work of one run, per level and stratum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostLedger {
    pub method: String,
    pub entries: Vec<LedgerEntry>,
}

impl CostLedger {
    pub fn new(method: impl Into<String>) -> Self {
        Self {
            method: method.into(),
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, level: usize, stratum: Option<usize>, count: usize, avg_work: f64) {
        self.entries.push(LedgerEntry {
            level,
            stratum,
            count,
            avg_work,
        });
    }

    /// `sum_l sum_i w_{i,l} n_{i,l}`.
    pub fn total(&self) -> f64 {
        self.entries.iter().map(LedgerEntry::cost).sum()
    }

    pub fn samples(&self) -> usize {
        self.entries.iter().map(|e| e.count).sum()
    }
}

/// Mean total cost over independent runs of one method.
pub fn aggregate(ledgers: &[CostLedger]) -> Result<f64> {
    if ledgers.is_empty() {
        return Err(Error::domain("cannot average the cost of zero runs"));
    }
    Ok(ledgers.iter().map(CostLedger::total).sum::<f64>() / ledgers.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostCell {
    pub method: String,
    pub cost: f64,
    /// `C(MC) / C(method)`, when MC is in the table.
    pub saving_vs_mc: Option<f64>,
    /// `C(MLMC) / C(method)`, when plain MLMC is in the table.
    pub saving_vs_mlmc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostRow {
    pub eps: f64,
    pub cells: Vec<CostCell>,
}

/// Mean costs per tolerance and method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostTable {
    pub methods: Vec<String>,
    pub rows: Vec<CostRow>,
}

pub const MC_LABEL: &str = "mc";
pub const MLMC_LABEL: &str = "mlmc";

/// Builds the comparison table from `(eps, method, mean cost)` triples.
/// Methods keep their order of first appearance; rows are sorted by
/// decreasing tolerance.
pub fn comparison_table(aggregates: &[(f64, String, f64)]) -> CostTable {
    let mut methods: Vec<String> = Vec::new();
    for (_, m, _) in aggregates {
        if !methods.contains(m) {
            methods.push(m.clone());
        }
    }
    let mut by_eps: BTreeMap<u64, Vec<(String, f64)>> = BTreeMap::new();
    for (eps, m, c) in aggregates {
        by_eps.entry(eps.to_bits()).or_default().push((m.clone(), *c));
    }
    let mut rows: Vec<CostRow> = by_eps
        .into_iter()
        .map(|(bits, entries)| {
            let lookup = |label: &str| entries.iter().find(|(m, _)| m == label).map(|(_, c)| *c);
            let (mc, mlmc) = (lookup(MC_LABEL), lookup(MLMC_LABEL));
            let cells = methods
                .iter()
                .filter_map(|m| {
                    lookup(m).map(|cost| CostCell {
                        method: m.clone(),
                        cost,
                        saving_vs_mc: mc.map(|b| b / cost),
                        saving_vs_mlmc: mlmc.map(|b| b / cost),
                    })
                })
                .collect();
            CostRow {
                eps: f64::from_bits(bits),
                cells,
            }
        })
        .collect();
    rows.sort_by(|a, b| b.eps.total_cmp(&a.eps));
    CostTable { methods, rows }
}

impl CostTable {
    pub fn cost(&self, eps: f64, method: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.eps == eps)?
            .cells
            .iter()
            .find(|c| c.method == method)
            .map(|c| c.cost)
    }

    /// Long-format CSV: `eps, method, cost, saving_vs_mc, saving_vs_mlmc`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        w.write_record(["eps", "method", "cost", "saving_vs_mc", "saving_vs_mlmc"])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for row in &self.rows {
            for c in &row.cells {
                w.write_record([
                    row.eps.to_string(),
                    c.method.clone(),
                    c.cost.to_string(),
                    opt(c.saving_vs_mc),
                    opt(c.saving_vs_mlmc),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// `(eps, cost)` series per method, for log-log plots.
    pub fn plot_series(&self) -> BTreeMap<String, Vec<(f64, f64)>> {
        let mut series: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
        for row in &self.rows {
            for c in &row.cells {
                series.entry(c.method.clone()).or_default().push((row.eps, c.cost));
            }
        }
        series
    }

    /// One CSV block per method (`method, eps, cost`), sorted by tolerance.
    pub fn write_plot_data<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        w.write_record(["method", "eps", "cost"])?;
        for (method, mut points) in self.plot_series() {
            points.sort_by(|a, b| a.0.total_cmp(&b.0));
            for (eps, cost) in points {
                w.write_record([method.clone(), eps.to_string(), cost.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_entry_total() {
        let mut l = CostLedger::new("mlmc");
        l.push(0, None, 100, 2.0);
        assert_eq!(l.total(), 200.0);
        assert_eq!(aggregate(&[l]).unwrap(), 200.0);
    }

    #[test]
    fn aggregate_mixed_runs() {
        let mut a = CostLedger::new("smlmc");
        a.push(0, Some(0), 10, 1.5);
        a.push(0, Some(1), 30, 1.0);
        a.push(1, Some(0), 4, 6.0);
        let mut b = CostLedger::new("smlmc");
        b.push(0, Some(0), 12, 1.5);
        let mut c = CostLedger::new("smlmc");
        c.push(0, Some(0), 2, 0.5);
        c.push(2, Some(1), 1, 100.0);
        // 15 + 30 + 24 = 69, 18, 1 + 100 = 101
        let mean = aggregate(&[a.clone(), b, c]).unwrap();
        assert!((mean - (69.0 + 18.0 + 101.0) / 3.0).abs() < 1e-12);
        assert_eq!(aggregate(&[a.clone(), a.clone()]).unwrap(), a.total());
        assert!(aggregate(&[]).is_err());
    }

    #[test]
    fn table_ratios() {
        let t = comparison_table(&[
            (0.01, "mc".into(), 100.0),
            (0.01, "mlmc".into(), 10.0),
            (0.005, "mlmc".into(), 40.0),
        ]);
        assert_eq!(t.rows[0].eps, 0.01);
        let row = &t.rows[0];
        assert_eq!(row.cells[1].saving_vs_mc, Some(10.0));
        assert_eq!(row.cells[1].saving_vs_mlmc, Some(1.0));
        assert_eq!(t.rows[1].cells.len(), 1);
        assert_eq!(t.rows[1].cells[0].saving_vs_mc, None);
        assert_eq!(t.cost(0.005, "mlmc"), Some(40.0));
        let single = comparison_table(&[(0.01, "mlmc".into(), 3.0)]);
        assert_eq!(single.rows[0].cells[0].saving_vs_mlmc, Some(1.0));
    }

    #[test]
    fn table_csv() {
        let t = comparison_table(&[(0.01, "mc".into(), 100.0), (0.01, "mlmc".into(), 10.0)]);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "eps,method,cost,saving_vs_mc,saving_vs_mlmc\n0.01,mc,100,1,0.1\n0.01,mlmc,10,10,1\n"
        );
        let mut buf = Vec::new();
        t.write_plot_data(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("method,eps,cost\nmc,0.01,100\n"));
    }
}
