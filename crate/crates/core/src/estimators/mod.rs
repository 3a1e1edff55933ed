//! Monte Carlo, multilevel and stratified multilevel CDF estimators.
//!
//! All multilevel variants share one engine: plain MLMC is the engine run
//! with a single stratum, so the two coincide sample for sample when
//! `r = 1`.

mod engine;
mod mc;

use serde::{Deserialize, Serialize};

use crate::cdf::CdfEstimate;
use crate::cost::{CostLedger, WorkModel};
use crate::error::{Error, Result};
use crate::models::MeshHierarchy;
use crate::smoothing::{Bandwidth, BandwidthRule, SmootherKind};

pub use engine::{run_mlmc, run_multilevel, run_smlmc};
pub use mc::run_mc;

/// Warmup samples per level for plain MLMC without and with smoothing.
pub const WARMUP_PLAIN: usize = 200;
pub const WARMUP_SMOOTHED: usize = 50;
/// Warmup samples per level for stratified runs, before the per-stratum
/// floor is applied.
pub const WARMUP_STRATIFIED_PLAIN: usize = 100;
pub const WARMUP_STRATIFIED_SMOOTHED: usize = 25;
pub const STRATUM_FLOOR: usize = 2;
/// Default smoothness parameter of the polynomial smoother.
pub const GILES_DEGREE: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Mc,
    Mlmc,
    Smlmc,
}

/// An estimator together with its smoother and number of strata.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Method {
    pub kind: EstimatorKind,
    pub smoother: SmootherKind,
    pub strata: usize,
}

impl Method {
    pub const MC: Method = Method {
        kind: EstimatorKind::Mc,
        smoother: SmootherKind::None,
        strata: 1,
    };

    pub fn mlmc(smoother: SmootherKind) -> Self {
        Self {
            kind: EstimatorKind::Mlmc,
            smoother,
            strata: 1,
        }
    }

    pub fn smlmc(smoother: SmootherKind, strata: usize) -> Self {
        Self {
            kind: EstimatorKind::Smlmc,
            smoother,
            strata,
        }
    }

    /// `mc`, `mlmc`, `mlmc+kde`, `smlmc-r8`, `smlmc+kde-r8`, ...
    pub fn label(&self) -> String {
        let base = match self.kind {
            EstimatorKind::Mc => "mc",
            EstimatorKind::Mlmc => "mlmc",
            EstimatorKind::Smlmc => "smlmc",
        };
        let mut s = base.to_string();
        if self.smoother != SmootherKind::None {
            s.push('+');
            s.push_str(&self.smoother.to_string());
        }
        if self.kind == EstimatorKind::Smlmc {
            s.push_str(&format!("-r{}", self.strata));
        }
        s
    }

    /// Warmup count per level for this method.
    pub fn default_warmup(&self) -> usize {
        let smoothed = self.smoother != SmootherKind::None;
        match (self.kind, smoothed) {
            (EstimatorKind::Smlmc, false) => WARMUP_STRATIFIED_PLAIN,
            (EstimatorKind::Smlmc, true) => WARMUP_STRATIFIED_SMOOTHED,
            (_, false) => WARMUP_PLAIN,
            (_, true) => WARMUP_SMOOTHED,
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.label())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::config(format!("unknown method `{s}`"));
        let (head, strata) = match s.rsplit_once("-r") {
            Some((head, r)) => (head, Some(r.parse::<usize>().map_err(|_| bad())?)),
            None => (s, None),
        };
        let (base, smoother) = match head.split_once('+') {
            Some((b, sm)) => (
                b,
                match sm {
                    "giles" => SmootherKind::Giles,
                    "kde" => SmootherKind::Kde,
                    _ => return Err(bad()),
                },
            ),
            None => (head, SmootherKind::None),
        };
        match (base, strata) {
            ("mc", None) if smoother == SmootherKind::None => Ok(Method::MC),
            ("mlmc", None) => Ok(Method::mlmc(smoother)),
            ("smlmc", Some(r)) if r >= 1 => Ok(Method::smlmc(smoother, r)),
            _ => Err(bad()),
        }
    }
}

/// Settings of one estimator run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub eps: f64,
    pub hierarchy: MeshHierarchy,
    pub smoother: SmootherKind,
    pub giles_degree: usize,
    pub bandwidth_rule: BandwidthRule,
    /// `N_l^0`; split over the strata in stratified runs.
    pub warmup: usize,
    /// Minimum warmup per stratum.
    pub stratum_floor: usize,
    pub seed: u64,
    pub work_model: WorkModel,
}

impl RunConfig {
    /// Defaults for `method`.
    pub fn for_method(method: Method, eps: f64, hierarchy: MeshHierarchy, seed: u64, work_model: WorkModel) -> Self {
        Self {
            eps,
            hierarchy,
            smoother: method.smoother,
            giles_degree: GILES_DEGREE,
            bandwidth_rule: BandwidthRule::Max,
            warmup: method.default_warmup(),
            stratum_floor: STRATUM_FLOOR,
            seed,
            work_model,
        }
    }

    /// 4 with smoothing (sampling error at most `eps^2 / 4`), 2 without.
    pub fn budget_factor(&self) -> f64 {
        if self.smoother == SmootherKind::None {
            2.0
        } else {
            4.0
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::config("eps must be positive"));
        }
        if self.warmup < 2 {
            return Err(Error::config("at least two warmup samples per level are needed"));
        }
        if self.stratum_floor < 1 {
            return Err(Error::config("the per-stratum warmup floor must be at least 1"));
        }
        Ok(())
    }
}

/// Rounds a sample count up, ignoring relative excess below `1e-12` left
/// by floating point.
fn ceil_count(x: f64) -> usize {
    if !(x > 0.0) {
        return 0;
    }
    (x * (1.0 - 1e-12)).ceil() as usize
}

fn check_inputs(eps: f64, factor: f64) -> Result<()> {
    if !(eps > 0.0) || !(factor > 0.0) {
        return Err(Error::domain("tolerance and budget factor must be positive"));
    }
    Ok(())
}

/// `N_l = ceil(max_n f eps^-2 sqrt(V_{n,l} / w_l) sum_k sqrt(V_{n,k} w_k))`.
///
/// `var[l][n]` is the per-sample variance at level `l` and node `n`.
pub fn required_samples_mlmc(var: &[Vec<f64>], work: &[f64], eps: f64, factor: f64) -> Result<Vec<usize>> {
    let var: Vec<Vec<Vec<f64>>> = var.iter().map(|v| vec![v.clone()]).collect();
    let work: Vec<Vec<f64>> = work.iter().map(|&w| vec![w]).collect();
    Ok(required_samples_smlmc(&var, &[1.0], &work, eps, factor)?
        .into_iter()
        .map(|n| n[0])
        .collect())
}

/// `n_{i,l} = ceil(max_n f eps^-2 sqrt(V_{n,l,i} p_i^2 / w_{i,l})
/// sum_k sum_j sqrt(V_{n,k,j} p_j^2 w_{j,k}))`.
///
/// `var[l][i][n]` is the within-stratum variance, `work[l][i]` the average
/// work per sample.
pub fn required_samples_smlmc(
    var: &[Vec<Vec<f64>>],
    probs: &[f64],
    work: &[Vec<f64>],
    eps: f64,
    factor: f64,
) -> Result<Vec<Vec<usize>>> {
    check_inputs(eps, factor)?;
    if var.len() != work.len() {
        return Err(Error::domain("variance and work tables differ in levels"));
    }
    let r = probs.len();
    for (l, (v, w)) in var.iter().zip(work).enumerate() {
        if v.len() != r || w.len() != r {
            return Err(Error::domain(format!("level {l} does not have {r} strata")));
        }
        if let Some(x) = w.iter().find(|&&x| !(x > 0.0)) {
            return Err(Error::domain(format!("work at level {l} must be positive, got {x}")));
        }
        if v.iter().flatten().any(|x| !(*x >= 0.0)) {
            return Err(Error::domain(format!("negative or undefined variance at level {l}")));
        }
    }
    let nodes = var.first().and_then(|v| v.first()).map_or(0, Vec::len);
    let scale = factor / (eps * eps);
    // sum_k sum_j sqrt(V p^2 w) per node
    let totals: Vec<f64> = (0..nodes)
        .map(|n| {
            var.iter()
                .zip(work)
                .map(|(v, w)| (0..r).map(|j| (v[j][n] * probs[j] * probs[j] * w[j]).sqrt()).sum::<f64>())
                .sum()
        })
        .collect();
    Ok(var
        .iter()
        .zip(work)
        .map(|(v, w)| {
            (0..r)
                .map(|i| {
                    let best = (0..nodes)
                        .map(|n| scale * (v[i][n] * probs[i] * probs[i] / w[i]).sqrt() * totals[n])
                        .fold(0.0, f64::max);
                    ceil_count(best)
                })
                .collect()
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopDecision {
    Continue,
    /// The bias proxy fell below `eps / sqrt(2)`.
    Converged,
    /// The finest admissible level was reached first.
    LevelCap,
}

/// Stops once `L >= 1` and `max_n |I_n(Y_L)| <= eps / sqrt(2)`, or at
/// `L = l_star`.
pub fn stopping_check(level: usize, mean_indicator: &[f64], eps: f64, l_star: usize) -> StopDecision {
    let bias = mean_indicator.iter().map(|m| m.abs()).fold(0.0, f64::max);
    if level >= 1 && bias <= eps / std::f64::consts::SQRT_2 {
        StopDecision::Converged
    } else if level >= l_star {
        StopDecision::LevelCap
    } else {
        StopDecision::Continue
    }
}

/// Diagnostics of one level at the end of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelState {
    pub level: usize,
    pub cells: usize,
    /// Samples per stratum.
    pub counts: Vec<usize>,
    pub n_total: usize,
    pub avg_work: f64,
    pub stratum_avg_work: Vec<f64>,
    pub bandwidth: Option<Bandwidth>,
    /// Level estimator of the (smoothed) correction per node.
    pub mean_g: Vec<f64>,
    /// Level estimator of the indicator correction per node.
    pub mean_indicator: Vec<f64>,
    /// Per-sample variance of the (smoothed) correction.
    pub var_g: Vec<f64>,
    /// Per-sample variance of the indicator correction.
    pub var_indicator: Vec<f64>,
    /// Per-sample variance of the fine indicator.
    pub var_fine_indicator: Vec<f64>,
    /// Variance of the level estimator of the (smoothed) correction.
    pub estimator_var_g: Vec<f64>,
    /// Variance of the level estimator of the indicator correction.
    pub estimator_var_indicator: Vec<f64>,
    /// Total sample count after the warmup and after every top-up.
    pub history: Vec<usize>,
}

/// Result of one estimator run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorRun {
    pub method: Method,
    pub eps: f64,
    pub seed: u64,
    pub estimate: CdfEstimate,
    pub levels: Vec<LevelState>,
    pub ledger: CostLedger,
    pub l_max: usize,
    pub stop: StopDecision,
    /// Fine QoI values and fine work at the finest level, in sample order;
    /// kept for plain MLMC runs so that MC can reuse them.
    #[serde(skip)]
    pub finest: Vec<(f64, f64)>,
}

impl EstimatorRun {
    pub fn cost(&self) -> f64 {
        self.ledger.total()
    }

    pub fn warnings(&self) -> Vec<String> {
        match self.stop {
            StopDecision::LevelCap if self.method.kind != EstimatorKind::Mc => vec![format!(
                "bias criterion not met before the level cap {}",
                self.l_max
            )],
            _ => Vec::new(),
        }
    }

    /// `max_n sum_l Var[level estimator]`, the realised sampling error.
    pub fn sampling_variance(&self) -> f64 {
        let nodes = self.estimate.grid.len();
        (0..nodes)
            .map(|n| self.levels.iter().map(|s| s.estimator_var_g[n]).sum::<f64>())
            .fold(0.0, f64::max)
    }
}
