//! Run reports and experiment output files.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cdf::CdfEstimate;
use crate::cost::WorkModel;
use crate::error::Result;
use crate::estimators::EstimatorRun;
use crate::models::ModelKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Completed,
    Failed,
}

/// Sup-norm distances to the reference CDF.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceError {
    pub raw: f64,
    pub processed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub model: ModelKind,
    pub method: String,
    pub eps: f64,
    pub run: usize,
    pub seed: u64,
    pub work_model: WorkModel,
    pub status: RunStatus,
    pub error: Option<String>,
    pub warnings: Vec<String>,
    pub cost: Option<f64>,
    pub sampling_variance: Option<f64>,
    pub reference_error: Option<ReferenceError>,
    pub outcome: Option<EstimatorRun>,
}

impl RunReport {
    pub fn completed(
        model: ModelKind,
        run: usize,
        work_model: WorkModel,
        outcome: EstimatorRun,
        reference_error: Option<ReferenceError>,
    ) -> Self {
        Self {
            model,
            method: outcome.method.label(),
            eps: outcome.eps,
            run,
            seed: outcome.seed,
            work_model,
            status: RunStatus::Completed,
            error: None,
            warnings: outcome.warnings(),
            cost: Some(outcome.cost()),
            sampling_variance: Some(outcome.sampling_variance()),
            reference_error,
            outcome: Some(outcome),
        }
    }

    pub fn failed(
        model: ModelKind,
        method: String,
        eps: f64,
        run: usize,
        seed: u64,
        work_model: WorkModel,
        error: String,
    ) -> Self {
        Self {
            model,
            method,
            eps,
            run,
            seed,
            work_model,
            status: RunStatus::Failed,
            error: Some(error),
            warnings: Vec::new(),
            cost: None,
            sampling_variance: None,
            reference_error: None,
            outcome: None,
        }
    }

    pub fn is_failed(&self) -> bool {
        self.status == RunStatus::Failed
    }

    /// File stem shared by the JSON report and the CDF table of this run.
    pub fn stem(&self) -> String {
        format!("{}_eps{}_run{:03}", self.method, self.eps, self.run)
    }
}

/// Root-mean-square reference error over the runs of one method and
/// tolerance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub eps: f64,
    pub method: String,
    pub runs: usize,
    pub rmse_raw: f64,
    pub rmse_processed: f64,
}

pub fn write_accuracy_csv(rows: &[AccuracyRow], path: &Path) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)?;
    w.write_record(["eps", "method", "runs", "rmse_raw", "rmse_processed"])?;
    for r in rows {
        w.write_record([
            r.eps.to_string(),
            r.method.clone(),
            r.runs.to_string(),
            r.rmse_raw.to_string(),
            r.rmse_processed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Layout of an output directory.
#[derive(Debug, Clone)]
pub struct OutputLayout {
    pub root: PathBuf,
}

impl OutputLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn create(&self) -> Result<()> {
        fs::create_dir_all(self.runs_dir())?;
        fs::create_dir_all(self.cdf_dir())?;
        Ok(())
    }

    pub fn runs_dir(&self) -> PathBuf {
        self.root.join("runs")
    }

    pub fn cdf_dir(&self) -> PathBuf {
        self.root.join("cdf")
    }

    pub fn report_path(&self, report: &RunReport) -> PathBuf {
        self.runs_dir().join(format!("{}.json", report.stem()))
    }

    pub fn cdf_path(&self, report: &RunReport) -> PathBuf {
        self.cdf_dir().join(format!("{}.csv", report.stem()))
    }

    pub fn cost_table(&self) -> PathBuf {
        self.root.join("cost_table.csv")
    }

    pub fn accuracy_table(&self) -> PathBuf {
        self.root.join("accuracy.csv")
    }

    pub fn plot_data(&self) -> PathBuf {
        self.root.join("plot_data.csv")
    }

    pub fn reference(&self) -> PathBuf {
        self.root.join("reference.json")
    }

    pub fn reference_csv(&self) -> PathBuf {
        self.root.join("reference.csv")
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("config.toml")
    }

    pub fn write_report(&self, report: &RunReport, reference: Option<&CdfEstimate>) -> Result<()> {
        write_json(&self.report_path(report), report)?;
        if let Some(run) = &report.outcome {
            let file = fs::File::create(self.cdf_path(report))?;
            run.estimate.write_csv(reference, BufWriter::new(file))?;
        }
        Ok(())
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = fs::File::create(path)?;
    serde_json::to_writer_pretty(BufWriter::new(file), value)?;
    Ok(())
}
