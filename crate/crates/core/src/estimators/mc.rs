use rayon::prelude::*;

use super::{ceil_count, EstimatorKind, EstimatorRun, LevelState, Method, RunConfig, StopDecision};
use crate::cdf::{indicator, CdfEstimate, EstimateMeta, NodeGrid};
use crate::cost::CostLedger;
use crate::error::{Error, Result};
use crate::inputs::{Stratification, TruncatedLognormal};
use crate::models::ModelSpec;
use crate::rng::{StreamKey, SubStream};

/// Single-level Monte Carlo on the finest mesh of a plain MLMC run.
///
/// Uses `N = ceil(2 eps^-2 max_n V[I_n(Q)])` samples, the variance being
/// estimated from the fine samples of that finest level. Those samples are
/// reused first; the remainder continues the same random stream. The cost
/// is the fine-solve work of all `N` samples.
pub fn run_mc(
    model: &ModelSpec,
    dist: &TruncatedLognormal,
    grid: &NodeGrid,
    config: &RunConfig,
    mlmc: &EstimatorRun,
) -> Result<EstimatorRun> {
    config.validate()?;
    if mlmc.method.kind != EstimatorKind::Mlmc || mlmc.finest.is_empty() {
        return Err(Error::domain("Monte Carlo needs the finest samples of a plain MLMC run"));
    }
    let level = mlmc.l_max;
    let nodes = grid.nodes();
    let reuse = &mlmc.finest;
    let var = fine_variance(&nodes, reuse.iter().map(|s| s.0));
    let max_var = var.iter().copied().fold(0.0, f64::max);
    let needed = ceil_count(2.0 * max_var / (config.eps * config.eps)).max(1);

    let strata = Stratification::single(dist);
    let stream = SubStream::new(config.seed, StreamKey::new(level, 0));
    let cells = config.hierarchy.cells(level);
    let fresh: Vec<(f64, f64)> = (reuse.len()..needed.max(reuse.len()))
        .into_par_iter()
        .map(|j| {
            let w = strata.sample_stratum(dist, 0, stream.uniform(j as u64))?;
            let q = model.evaluate(w, cells, config.work_model)?;
            Ok((q.value, q.work))
        })
        .collect::<Result<_>>()?;
    let samples: Vec<(f64, f64)> = reuse.iter().copied().chain(fresh).take(needed).collect();

    let count = samples.len() as f64;
    let mut raw = vec![0.0; nodes.len()];
    for &(q, _) in &samples {
        for (f, &node) in raw.iter_mut().zip(&nodes) {
            *f += indicator(node, q);
        }
    }
    raw.iter_mut().for_each(|f| *f /= count);
    let avg_work = samples.iter().map(|s| s.1).sum::<f64>() / count;
    let var_fine = fine_variance(&nodes, samples.iter().map(|s| s.0));

    let method = Method::MC;
    let mut ledger = CostLedger::new(method.label());
    ledger.push(level, None, samples.len(), avg_work);
    let state = LevelState {
        level,
        cells,
        counts: vec![samples.len()],
        n_total: samples.len(),
        avg_work,
        stratum_avg_work: vec![avg_work],
        bandwidth: None,
        mean_g: raw.clone(),
        mean_indicator: raw.clone(),
        var_g: var_fine.clone(),
        var_indicator: var_fine.clone(),
        estimator_var_g: var_fine.iter().map(|v| v / count).collect(),
        estimator_var_indicator: var_fine.iter().map(|v| v / count).collect(),
        var_fine_indicator: var_fine,
        history: vec![samples.len()],
    };
    let estimate = CdfEstimate::new(
        *grid,
        raw,
        EstimateMeta {
            method: method.label(),
            eps: Some(config.eps),
            seed: Some(config.seed),
        },
    )?;
    Ok(EstimatorRun {
        method,
        eps: config.eps,
        seed: config.seed,
        estimate,
        levels: vec![state],
        ledger,
        l_max: level,
        stop: StopDecision::LevelCap,
        finest: Vec::new(),
    })
}

/// Biased variance of `1{Q <= q_n}` per node.
fn fine_variance(nodes: &[f64], values: impl Iterator<Item = f64> + Clone) -> Vec<f64> {
    let n = values.clone().count() as f64;
    nodes
        .iter()
        .map(|&node| {
            let p = values.clone().map(|q| indicator(node, q)).sum::<f64>() / n;
            p * (1.0 - p)
        })
        .collect()
}
