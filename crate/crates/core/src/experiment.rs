//! The experiment protocol: for every tolerance and run index, plain MLMC,
//! MC reusing its finest samples, the smoothed variants and the stratified
//! variants, all seeded with `seed + run`.

use std::collections::BTreeMap;
use std::fs;
use std::hash::Hasher;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cdf::{sup_distance, ReferenceCdf};
use crate::config::ExperimentConfig;
use crate::cost::{comparison_table, CostTable};
use crate::error::Result;
use crate::estimators::{run_mc, run_mlmc, run_smlmc, EstimatorKind, EstimatorRun, Method};
use crate::report::{write_accuracy_csv, write_json, AccuracyRow, OutputLayout, ReferenceError, RunReport};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlannedRun {
    pub eps: f64,
    pub run: usize,
    pub seed: u64,
    pub method: Method,
}

/// Every run of the experiment, in execution order.
pub fn plan(config: &ExperimentConfig) -> Vec<PlannedRun> {
    let methods = config.expanded_methods();
    let mut out = Vec::new();
    for &eps in &config.eps {
        for run in 0..config.n_real {
            let seed = config.seed.wrapping_add(run as u64);
            out.extend(methods.iter().map(|&method| PlannedRun { eps, run, seed, method }));
        }
    }
    out
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub plot_data: bool,
}

#[derive(Debug, Clone)]
pub struct ExperimentSummary {
    pub reports: Vec<RunReport>,
    pub table: CostTable,
    pub accuracy: Vec<AccuracyRow>,
}

impl ExperimentSummary {
    pub fn failures(&self) -> usize {
        self.reports.iter().filter(|r| r.is_failed()).count()
    }
}

/// Runs one planned estimator. MC needs the plain MLMC run of the same
/// tolerance and seed.
pub fn execute(config: &ExperimentConfig, planned: &PlannedRun, mlmc: Option<&EstimatorRun>) -> Result<EstimatorRun> {
    let model = config.model_spec();
    let dist = config.distribution()?;
    let rc = config.run_config(planned.method, planned.eps, planned.seed);
    match planned.method.kind {
        EstimatorKind::Mc => {
            let base = mlmc.ok_or_else(|| crate::Error::domain("plain MLMC run missing or failed"))?;
            run_mc(&model, &dist, &config.nodes, &rc, base)
        }
        EstimatorKind::Mlmc => run_mlmc(&model, &dist, &config.nodes, &rc),
        EstimatorKind::Smlmc => {
            let strata = config.stratification(planned.method.strata)?;
            run_smlmc(&model, &dist, &config.nodes, &strata, &rc)
        }
    }
}

/// Runs the whole experiment, writing reports into `out` as they complete.
/// Failed runs are reported and skipped; `progress` sees every report.
pub fn run_experiment(
    config: &ExperimentConfig,
    out: &Path,
    options: &RunOptions,
    mut progress: impl FnMut(&RunReport),
) -> Result<ExperimentSummary> {
    config.validate()?;
    let layout = OutputLayout::new(out);
    layout.create()?;
    fs::write(layout.config(), config.to_toml_string()?)?;
    let reference = if config.reference.compare {
        Some(load_or_compute_reference(config, &layout)?)
    } else {
        None
    };

    let mut reports = Vec::new();
    let mut last_mlmc: Option<(f64, u64, EstimatorRun)> = None;
    for planned in plan(config) {
        let base = last_mlmc
            .as_ref()
            .filter(|(eps, seed, _)| *eps == planned.eps && *seed == planned.seed)
            .map(|(_, _, run)| run);
        let report = match execute(config, &planned, base) {
            Ok(run) => {
                let error = reference.as_ref().map(|r| reference_error(&run, r)).transpose()?;
                if planned.method == Method::mlmc(crate::smoothing::SmootherKind::None) {
                    last_mlmc = Some((planned.eps, planned.seed, run.clone()));
                }
                RunReport::completed(config.model, planned.run, config.work_model, run, error)
            }
            Err(e) => RunReport::failed(
                config.model,
                planned.method.label(),
                planned.eps,
                planned.run,
                planned.seed,
                config.work_model,
                e.to_string(),
            ),
        };
        layout.write_report(&report, reference.as_ref().map(|r| &r.estimate))?;
        progress(&report);
        reports.push(report);
    }

    let table = comparison_table(&mean_costs(&reports));
    table.write_csv(fs::File::create(layout.cost_table())?)?;
    if options.plot_data {
        table.write_plot_data(fs::File::create(layout.plot_data())?)?;
    }
    let accuracy = accuracy_rows(&reports);
    if reference.is_some() {
        write_accuracy_csv(&accuracy, &layout.accuracy_table())?;
    }
    Ok(ExperimentSummary {
        reports,
        table,
        accuracy,
    })
}

fn reference_error(run: &EstimatorRun, reference: &ReferenceCdf) -> Result<ReferenceError> {
    Ok(ReferenceError {
        raw: sup_distance(run.estimate.raw_curve(), reference.estimate.raw_curve())?,
        processed: sup_distance(run.estimate.processed_curve(), reference.estimate.raw_curve())?,
    })
}

/// `(eps, method, mean cost)` over the completed runs, in first-seen order.
pub fn mean_costs(reports: &[RunReport]) -> Vec<(f64, String, f64)> {
    let mut order: Vec<(u64, String)> = Vec::new();
    let mut sums: BTreeMap<(u64, String), (f64, usize)> = BTreeMap::new();
    for r in reports.iter().filter(|r| !r.is_failed()) {
        let key = (r.eps.to_bits(), r.method.clone());
        if !sums.contains_key(&key) {
            order.push(key.clone());
        }
        let entry = sums.entry(key).or_insert((0.0, 0));
        entry.0 += r.cost.unwrap_or(0.0);
        entry.1 += 1;
    }
    order
        .into_iter()
        .map(|key| {
            let (sum, n) = sums[&key];
            (f64::from_bits(key.0), key.1, sum / n as f64)
        })
        .collect()
}

fn accuracy_rows(reports: &[RunReport]) -> Vec<AccuracyRow> {
    let mut order: Vec<(u64, String)> = Vec::new();
    let mut acc: BTreeMap<(u64, String), (f64, f64, usize)> = BTreeMap::new();
    for r in reports {
        let Some(e) = r.reference_error else { continue };
        let key = (r.eps.to_bits(), r.method.clone());
        if !acc.contains_key(&key) {
            order.push(key.clone());
        }
        let entry = acc.entry(key).or_insert((0.0, 0.0, 0));
        entry.0 += e.raw * e.raw;
        entry.1 += e.processed * e.processed;
        entry.2 += 1;
    }
    order
        .into_iter()
        .map(|key| {
            let (raw, processed, n) = acc[&key];
            AccuracyRow {
                eps: f64::from_bits(key.0),
                method: key.1,
                runs: n,
                rmse_raw: (raw / n as f64).sqrt(),
                rmse_processed: (processed / n as f64).sqrt(),
            }
        })
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct CachedReference {
    checksum: String,
    reference: ReferenceCdf,
}

/// Identifies the inputs that determine the reference CDF.
pub fn reference_checksum(config: &ExperimentConfig) -> Result<String> {
    let key = serde_json::to_string(&(
        config.model_spec(),
        config.input,
        config.nodes,
        config.reference_settings(),
    ))?;
    // FNV-1a, stable across platforms and releases
    let mut h = Fnv1a::default();
    h.write(key.as_bytes());
    Ok(format!("{:016x}", h.finish()))
}

struct Fnv1a(u64);

impl Default for Fnv1a {
    fn default() -> Self {
        Fnv1a(0xcbf2_9ce4_8422_2325)
    }
}

impl Hasher for Fnv1a {
    fn finish(&self) -> u64 {
        self.0
    }

    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= u64::from(b);
            self.0 = self.0.wrapping_mul(0x0100_0000_01b3);
        }
    }
}

/// Returns the cached reference in `layout` when its checksum matches,
/// otherwise computes and caches it.
pub fn load_or_compute_reference(config: &ExperimentConfig, layout: &OutputLayout) -> Result<ReferenceCdf> {
    let checksum = reference_checksum(config)?;
    let path = layout.reference();
    if let Ok(text) = fs::read_to_string(&path) {
        if let Ok(cached) = serde_json::from_str::<CachedReference>(&text) {
            if cached.checksum == checksum {
                return Ok(cached.reference);
            }
        }
    }
    let reference = crate::cdf::reference_cdf(
        &config.model_spec(),
        &config.distribution()?,
        &config.nodes,
        config.reference_settings(),
    )?;
    fs::create_dir_all(&layout.root)?;
    write_json(&path, &CachedReference { checksum, reference: reference.clone() })?;
    reference
        .estimate
        .write_csv(None, fs::File::create(layout.reference_csv())?)?;
    Ok(reference)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ModelKind;

    #[test]
    fn plan_order_and_seeds() {
        let mut c = ExperimentConfig::preset(ModelKind::Diffusion);
        c.eps = vec![0.01, 0.005];
        c.n_real = 2;
        c.strata = vec![8];
        let p = plan(&c);
        assert_eq!(p.len(), 2 * 2 * 6);
        let labels: Vec<String> = p[..6].iter().map(|r| r.method.label()).collect();
        assert_eq!(labels, ["mlmc", "mc", "mlmc+giles", "mlmc+kde", "smlmc-r8", "smlmc+kde-r8"]);
        assert!(p[..6].iter().all(|r| r.seed == c.seed && r.eps == 0.01));
        assert!(p[6..12].iter().all(|r| r.seed == c.seed + 1 && r.run == 1));
        assert_eq!(p[12].eps, 0.005);
    }

    #[test]
    fn checksum_tracks_reference_inputs() {
        let a = ExperimentConfig::preset(ModelKind::Diffusion);
        let mut b = a.clone();
        b.n_real = 3;
        assert_eq!(reference_checksum(&a).unwrap(), reference_checksum(&b).unwrap());
        b.reference.anchors = 33;
        assert_ne!(reference_checksum(&a).unwrap(), reference_checksum(&b).unwrap());
    }
}
