use rayon::prelude::*;

use super::{required_samples_smlmc, stopping_check, EstimatorKind, EstimatorRun, LevelState, Method, RunConfig, StopDecision};
use crate::cdf::{indicator, CdfEstimate, EstimateMeta, NodeGrid};
use crate::cost::CostLedger;
use crate::error::{Error, Result};
use crate::inputs::{proportional_allocation, Stratification, TruncatedLognormal};
use crate::models::{sample_pair, LevelPair, ModelSpec};
use crate::rng::{StreamKey, SubStream};
use crate::smoothing::{calibrate_bandwidth, Bandwidth, Smoother};

/// Running first and second moments per node.
#[derive(Debug, Clone)]
struct Moments {
    sum: Vec<f64>,
    sq: Vec<f64>,
}

impl Moments {
    fn new(nodes: usize) -> Self {
        Self {
            sum: vec![0.0; nodes],
            sq: vec![0.0; nodes],
        }
    }

    #[inline]
    fn add(&mut self, n: usize, x: f64) {
        self.sum[n] += x;
        self.sq[n] += x * x;
    }

    fn mean(&self, count: usize) -> Vec<f64> {
        self.sum.iter().map(|s| s / count as f64).collect()
    }

    /// Variance with the `1/N` divisor.
    fn var(&self, count: usize) -> Vec<f64> {
        let c = count as f64;
        self.sum
            .iter()
            .zip(&self.sq)
            .map(|(s, q)| {
                let m = s / c;
                (q / c - m * m).max(0.0)
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
struct StratumState {
    pairs: Vec<LevelPair>,
    work_sum: f64,
    g: Moments,
    ind: Moments,
    fine: Moments,
}

impl StratumState {
    fn new(nodes: usize) -> Self {
        Self {
            pairs: Vec::new(),
            work_sum: 0.0,
            g: Moments::new(nodes),
            ind: Moments::new(nodes),
            fine: Moments::new(nodes),
        }
    }

    fn count(&self) -> usize {
        self.pairs.len()
    }

    fn avg_work(&self) -> f64 {
        self.work_sum / self.count() as f64
    }
}

/// Fixed inputs of a run.
struct Context<'a> {
    model: &'a ModelSpec,
    dist: &'a TruncatedLognormal,
    strata: &'a Stratification,
    nodes: Vec<f64>,
    smoother: Smoother,
    config: &'a RunConfig,
}

impl Context<'_> {
    /// Coupled samples with indices `start..end` of stratum `i` at `level`.
    fn draw(&self, level: usize, i: usize, start: usize, end: usize) -> Result<Vec<LevelPair>> {
        let stream = SubStream::new(self.config.seed, StreamKey::new(level, i));
        (start..end)
            .into_par_iter()
            .map(|j| {
                let w = self.strata.sample_stratum(self.dist, i, stream.uniform(j as u64))?;
                sample_pair(self.model, &self.config.hierarchy, w, level, self.config.work_model)
            })
            .collect()
    }
}

struct Level {
    level: usize,
    strata: Vec<StratumState>,
    bandwidth: Option<Bandwidth>,
    history: Vec<usize>,
}

impl Level {
    fn n_total(&self) -> usize {
        self.strata.iter().map(StratumState::count).sum()
    }

    /// Folds new samples of stratum `i` into the statistics.
    fn absorb(&mut self, ctx: &Context<'_>, i: usize, pairs: Vec<LevelPair>) {
        let delta = self.bandwidth.as_ref().map_or(1.0, |b| b.value);
        let st = &mut self.strata[i];
        for p in &pairs {
            st.work_sum += p.work();
            for (n, &node) in ctx.nodes.iter().enumerate() {
                let fine = indicator(node, p.fine);
                let diff = fine - p.coarse.map_or(0.0, |c| indicator(node, c));
                let g = if ctx.smoother.is_smoothing() {
                    ctx.smoother.eval(node, p.fine, delta) - p.coarse.map_or(0.0, |c| ctx.smoother.eval(node, c, delta))
                } else {
                    diff
                };
                st.fine.add(n, fine);
                st.ind.add(n, diff);
                st.g.add(n, g);
            }
        }
        st.pairs.extend(pairs);
    }

    /// Draws samples of stratum `i` until it holds `target`.
    fn top_up(&mut self, ctx: &Context<'_>, i: usize, target: usize) -> Result<bool> {
        let have = self.strata[i].count();
        if target <= have {
            return Ok(false);
        }
        let pairs = ctx.draw(self.level, i, have, target)?;
        self.absorb(ctx, i, pairs);
        Ok(true)
    }

    fn within_var_g(&self) -> Vec<Vec<f64>> {
        self.strata.iter().map(|s| s.g.var(s.count())).collect()
    }

    fn stratum_work(&self) -> Vec<f64> {
        self.strata.iter().map(StratumState::avg_work).collect()
    }

    /// `sum_i p_i mean_i` per node.
    fn stratified_mean(&self, probs: &[f64], pick: impl Fn(&StratumState) -> &Moments) -> Vec<f64> {
        let nodes = pick(&self.strata[0]).sum.len();
        let mut out = vec![0.0; nodes];
        for (s, &p) in self.strata.iter().zip(probs) {
            for (o, m) in out.iter_mut().zip(pick(s).mean(s.count())) {
                *o += p * m;
            }
        }
        out
    }

    /// `sum_i p_i^2 var_i / n_i` per node.
    fn estimator_var(&self, probs: &[f64], pick: impl Fn(&StratumState) -> &Moments) -> Vec<f64> {
        let nodes = pick(&self.strata[0]).sum.len();
        let mut out = vec![0.0; nodes];
        for (s, &p) in self.strata.iter().zip(probs) {
            let n = s.count() as f64;
            for (o, v) in out.iter_mut().zip(pick(s).var(s.count())) {
                *o += p * p * v / n;
            }
        }
        out
    }

    /// Variance of a single unstratified sample, recovered from the
    /// stratum statistics by the law of total variance.
    fn total_var(&self, probs: &[f64], pick: impl Fn(&StratumState) -> &Moments) -> Vec<f64> {
        let mean = self.stratified_mean(probs, &pick);
        let mut second = vec![0.0; mean.len()];
        for (s, &p) in self.strata.iter().zip(probs) {
            let c = s.count();
            let m = pick(s).mean(c);
            let v = pick(s).var(c);
            for n in 0..second.len() {
                second[n] += p * (v[n] + m[n] * m[n]);
            }
        }
        second.iter().zip(&mean).map(|(s, m)| (s - m * m).max(0.0)).collect()
    }

    fn state(&self, ctx: &Context<'_>) -> LevelState {
        let probs = ctx.strata.probs();
        let counts: Vec<usize> = self.strata.iter().map(StratumState::count).collect();
        let n_total = self.n_total();
        let work: f64 = self.strata.iter().map(|s| s.work_sum).sum();
        LevelState {
            level: self.level,
            cells: ctx.config.hierarchy.cells(self.level),
            counts,
            n_total,
            avg_work: work / n_total as f64,
            stratum_avg_work: self.stratum_work(),
            bandwidth: self.bandwidth.clone(),
            mean_g: self.stratified_mean(probs, |s| &s.g),
            mean_indicator: self.stratified_mean(probs, |s| &s.ind),
            var_g: self.total_var(probs, |s| &s.g),
            var_indicator: self.total_var(probs, |s| &s.ind),
            var_fine_indicator: self.total_var(probs, |s| &s.fine),
            estimator_var_g: self.estimator_var(probs, |s| &s.g),
            estimator_var_indicator: self.estimator_var(probs, |s| &s.ind),
            history: self.history.clone(),
        }
    }
}

/// Warmup count of each stratum: `warmup` split proportionally, with at
/// least `floor` per stratum.
pub(crate) fn warmup_counts(warmup: usize, strata: &Stratification, floor: usize) -> Result<Vec<usize>> {
    if strata.len() == 1 {
        return Ok(vec![warmup.max(floor)]);
    }
    Ok(proportional_allocation(warmup.max(strata.len()), strata)?
        .into_iter()
        .map(|n| n.max(floor))
        .collect())
}

/// Plain (`r = 1`) multilevel estimator, smoothed or not.
pub fn run_mlmc(model: &ModelSpec, dist: &TruncatedLognormal, grid: &NodeGrid, config: &RunConfig) -> Result<EstimatorRun> {
    run_multilevel(model, dist, grid, &Stratification::single(dist), config)
}

/// Stratified multilevel estimator.
pub fn run_smlmc(
    model: &ModelSpec,
    dist: &TruncatedLognormal,
    grid: &NodeGrid,
    strata: &Stratification,
    config: &RunConfig,
) -> Result<EstimatorRun> {
    run_multilevel(model, dist, grid, strata, config)
}

/// Level-adaptive estimator: adds levels until the bias proxy drops below
/// `eps / sqrt(2)`, sizing every level from the current variance and work
/// estimates. One stratum gives plain MLMC.
pub fn run_multilevel(
    model: &ModelSpec,
    dist: &TruncatedLognormal,
    grid: &NodeGrid,
    strata: &Stratification,
    config: &RunConfig,
) -> Result<EstimatorRun> {
    config.validate()?;
    let ctx = Context {
        model,
        dist,
        strata,
        nodes: grid.nodes(),
        smoother: Smoother::new(config.smoother, config.giles_degree)?,
        config,
    };
    let r = strata.len();
    let method = if r == 1 {
        Method::mlmc(config.smoother)
    } else {
        Method::smlmc(config.smoother, r)
    };
    let warm = warmup_counts(config.warmup, strata, config.stratum_floor)?;
    let factor = config.budget_factor();
    let mut levels: Vec<Level> = Vec::new();
    let mut stop = StopDecision::Continue;

    for level in 0..=config.hierarchy.l_star {
        let mut current = Level {
            level,
            strata: (0..r).map(|_| StratumState::new(ctx.nodes.len())).collect(),
            bandwidth: None,
            history: Vec::new(),
        };
        let warmup: Vec<Vec<LevelPair>> = (0..r).map(|i| ctx.draw(level, i, 0, warm[i])).collect::<Result<_>>()?;
        if ctx.smoother.is_smoothing() {
            let pooled: Vec<f64> = warmup.iter().flatten().map(|p| p.fine).collect();
            current.bandwidth = Some(calibrate_bandwidth(&ctx.smoother, &pooled, &ctx.nodes, config.eps, config.bandwidth_rule)?);
        }
        for (i, pairs) in warmup.into_iter().enumerate() {
            current.absorb(&ctx, i, pairs);
        }
        current.history.push(current.n_total());
        levels.push(current);

        // size the new level first, then revisit the coarser ones
        let order = std::iter::once(level).chain(0..level);
        for l in order {
            let var: Vec<Vec<Vec<f64>>> = levels.iter().map(Level::within_var_g).collect();
            let work: Vec<Vec<f64>> = levels.iter().map(Level::stratum_work).collect();
            let required = required_samples_smlmc(&var, strata.probs(), &work, config.eps, factor)?;
            let mut grew = false;
            for (i, &target) in required[l].iter().enumerate() {
                grew |= levels[l].top_up(&ctx, i, target)?;
            }
            if grew {
                let n = levels[l].n_total();
                levels[l].history.push(n);
            }
        }

        let bias = levels[level].stratified_mean(strata.probs(), |s| &s.ind);
        stop = stopping_check(level, &bias, config.eps, config.hierarchy.l_star);
        if stop != StopDecision::Continue {
            break;
        }
    }
    if levels.is_empty() {
        return Err(Error::domain("no level was run"));
    }

    let states: Vec<LevelState> = levels.iter().map(|l| l.state(&ctx)).collect();
    let mut raw = vec![0.0; ctx.nodes.len()];
    for s in &states {
        for (f, g) in raw.iter_mut().zip(&s.mean_g) {
            *f += g;
        }
    }
    let mut ledger = CostLedger::new(method.label());
    for l in &levels {
        for (i, s) in l.strata.iter().enumerate() {
            ledger.push(l.level, (r > 1).then_some(i), s.count(), s.avg_work());
        }
    }
    let l_max = levels.len() - 1;
    let finest = if method.kind == EstimatorKind::Mlmc {
        levels[l_max].strata[0].pairs.iter().map(|p| (p.fine, p.fine_work)).collect()
    } else {
        Vec::new()
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
        levels: states,
        ledger,
        l_max,
        stop,
        finest,
    })
}
