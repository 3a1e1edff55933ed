//! Smooth replacements for the indicator `1{Q <= q}` and calibration of
//! their bandwidth.
//!
//! Two smoothers are available. The moment-matched polynomial `g_G` of
//! degree `d + 1` equals one left of `-1`, zero right of `1`, and reproduces
//! the first `d` moments of the indicator on `[-1, 1]`; it is applied to
//! `(Q - q) / delta`. The Gaussian kernel CDF `g_K = Phi` is applied to
//! `(q - Q) / delta`.

use serde::{Deserialize, Serialize};

use crate::cdf::indicator;
use crate::error::{Error, Result};
use crate::models::LevelPair;

/// Beyond this argument the Gaussian CDF is taken as exactly 0 or 1.
const GAUSSIAN_CUTOFF: f64 = 8.0;
/// Lower end of the bandwidth search bracket relative to the sample range.
const BRACKET_LOW: f64 = 1e-6;
/// Relative width at which the bisection on `log(delta)` stops.
const BRACKET_RTOL: f64 = 1e-3;
/// Log-spaced points scanned for the first crossing before bisecting.
const SCAN_POINTS: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GilesPolynomial {
    degree: usize,
    /// Ascending powers of `s`.
    coeffs: Vec<f64>,
}

impl GilesPolynomial {
    /// Builds the polynomial for smoothness parameter `degree` by solving the
    /// `(degree + 2)`-dimensional system of endpoint and moment conditions.
    pub fn new(degree: usize) -> Result<Self> {
        let n = degree + 2;
        let mut a = vec![vec![0.0; n]; n];
        let mut b = vec![0.0; n];
        // g(1) = 0
        a[0].iter_mut().for_each(|x| *x = 1.0);
        // g(-1) = 1
        for (j, x) in a[1].iter_mut().enumerate() {
            *x = if j % 2 == 0 { 1.0 } else { -1.0 };
        }
        b[1] = 1.0;
        // int_{-1}^{1} s^k g(s) ds = (-1)^k / (k + 1)
        for k in 0..degree {
            for (j, x) in a[k + 2].iter_mut().enumerate() {
                let m = k + j;
                *x = if m % 2 == 0 { 2.0 / (m + 1) as f64 } else { 0.0 };
            }
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            b[k + 2] = sign / (k + 1) as f64;
        }
        let coeffs = solve_dense(a, b)?;
        let poly = Self { degree, coeffs };
        if (poly.eval_polynomial(1.0)).abs() > 1e-10 || (poly.eval_polynomial(-1.0) - 1.0).abs() > 1e-10 {
            return Err(Error::numerical("smoothing polynomial violates its endpoint conditions"));
        }
        Ok(poly)
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    fn eval_polynomial(&self, s: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * s + c)
    }

    /// The polynomial on `[-1, 1]`, extended by 1 on the left and 0 on the
    /// right.
    pub fn eval(&self, s: f64) -> f64 {
        if s < -1.0 {
            1.0
        } else if s > 1.0 {
            0.0
        } else {
            self.eval_polynomial(s)
        }
    }
}

/// Gaussian elimination with partial pivoting for the small moment systems.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        if a[pivot][col].abs() < 1e-14 {
            return Err(Error::numerical("singular moment system"));
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            let (top, bottom) = a.split_at_mut(row);
            for (x, p) in bottom[0][col..].iter_mut().zip(&top[col][col..]) {
                *x -= f * p;
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let tail: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row][row];
    }
    Ok(x)
}

/// Standard normal CDF, truncated to exactly 0 / 1 beyond `|s| = 8`.
pub fn eval_gaussian_cdf(s: f64) -> f64 {
    if s <= -GAUSSIAN_CUTOFF {
        0.0
    } else if s >= GAUSSIAN_CUTOFF {
        1.0
    } else {
        0.5 * libm::erfc(-s * std::f64::consts::FRAC_1_SQRT_2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SmootherKind {
    None,
    Giles,
    Kde,
}

impl std::fmt::Display for SmootherKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SmootherKind::None => "none",
            SmootherKind::Giles => "giles",
            SmootherKind::Kde => "kde",
        })
    }
}

/// How the indicator `1{Q <= q_n}` is evaluated for one sample.
#[derive(Debug, Clone, PartialEq)]
pub enum Smoother {
    Indicator,
    Giles(GilesPolynomial),
    Gaussian,
}

impl Smoother {
    pub fn new(kind: SmootherKind, giles_degree: usize) -> Result<Self> {
        Ok(match kind {
            SmootherKind::None => Smoother::Indicator,
            SmootherKind::Giles => Smoother::Giles(GilesPolynomial::new(giles_degree)?),
            SmootherKind::Kde => Smoother::Gaussian,
        })
    }

    pub fn kind(&self) -> SmootherKind {
        match self {
            Smoother::Indicator => SmootherKind::None,
            Smoother::Giles(_) => SmootherKind::Giles,
            Smoother::Gaussian => SmootherKind::Kde,
        }
    }

    pub fn is_smoothing(&self) -> bool {
        !matches!(self, Smoother::Indicator)
    }

    /// Smoothed `1{q <= node}`. The bandwidth is ignored by the plain
    /// indicator.
    #[inline]
    pub fn eval(&self, node: f64, q: f64, bandwidth: f64) -> f64 {
        match self {
            Smoother::Indicator => indicator(node, q),
            Smoother::Giles(p) => p.eval((q - node) / bandwidth),
            Smoother::Gaussian => eval_gaussian_cdf((node - q) / bandwidth),
        }
    }
}

/// Smoothed contribution `g_n(Y_l)` of one coupled sample: fine minus
/// coarse, or the fine term alone at level 0.
pub fn smoothed_term(smoother: &Smoother, bandwidth: f64, node: f64, pair: &LevelPair) -> f64 {
    let fine = smoother.eval(node, pair.fine, bandwidth);
    match pair.coarse {
        Some(coarse) => fine - smoother.eval(node, coarse, bandwidth),
        None => fine,
    }
}

/// How the per-node bandwidths of a level are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BandwidthRule {
    /// Largest per-node value: strongest smoothing.
    #[default]
    Max,
    /// Smallest per-node value: smoothing bias at most `eps / 2` at every
    /// node where the discrepancy grows with the bandwidth.
    Min,
}

/// Calibrated bandwidth of one level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bandwidth {
    pub kind: SmootherKind,
    pub rule: BandwidthRule,
    /// Per-node values combined by `rule`.
    pub value: f64,
    pub per_node: Vec<f64>,
    /// Nodes at which the target discrepancy was not reached inside the
    /// search bracket.
    pub capped_nodes: usize,
}

/// `|sum_j [g(Q_j; q, delta) - 1{Q_j <= q}]| / N`.
pub fn smoothing_discrepancy(smoother: &Smoother, samples: &[f64], node: f64, bandwidth: f64) -> f64 {
    let sum: f64 = samples
        .iter()
        .map(|&q| smoother.eval(node, q, bandwidth) - indicator(node, q))
        .sum();
    sum.abs() / samples.len() as f64
}

/// Finds, for every node, the bandwidth at which the smoothing discrepancy
/// of `samples` reaches `eps / 2`, and combines them by `rule`.
///
/// The search runs on `log(delta)` over `[1e-6 R, R]`, `R` being the sample
/// range: a coarse scan finds the first point where the discrepancy exceeds
/// `eps / 2`, and bisection then narrows the crossing, keeping the end whose
/// discrepancy is at most `eps / 2`. Nodes whose discrepancy stays below
/// the target on the whole bracket get `R`.
pub fn calibrate_bandwidth(
    smoother: &Smoother,
    samples: &[f64],
    nodes: &[f64],
    eps: f64,
    rule: BandwidthRule,
) -> Result<Bandwidth> {
    if samples.is_empty() {
        return Err(Error::domain("bandwidth calibration needs samples"));
    }
    if !(eps > 0.0) {
        return Err(Error::domain("tolerance must be positive"));
    }
    if !smoother.is_smoothing() {
        return Err(Error::domain("the plain indicator has no bandwidth"));
    }
    let (lo, hi) = samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &q| (a.min(q), b.max(q)));
    let mut range = hi - lo;
    if !(range > 0.0) {
        // identical samples: fall back to the node span
        range = match (nodes.first(), nodes.last()) {
            (Some(a), Some(b)) if b > a => b - a,
            _ => 1.0,
        };
    }
    let target = 0.5 * eps;
    let (d_min, d_max) = (BRACKET_LOW * range, range);
    let mut capped_nodes = 0;
    let per_node: Vec<f64> = nodes
        .iter()
        .map(|&node| {
            let disc = |d: f64| smoothing_discrepancy(smoother, samples, node, d);
            // The discrepancy need not be monotone in delta, so locate the
            // first scan point above the target and bisect below it.
            let (log_min, log_max) = (d_min.ln(), d_max.ln());
            let step = (log_max - log_min) / SCAN_POINTS as f64;
            let Some(k) = (0..=SCAN_POINTS).find(|&k| disc((log_min + k as f64 * step).exp()) > target) else {
                capped_nodes += 1;
                return d_max;
            };
            if k == 0 {
                return d_min;
            }
            let (mut a, mut b) = (log_min + (k - 1) as f64 * step, log_min + k as f64 * step);
            while b - a > BRACKET_RTOL {
                let mid = 0.5 * (a + b);
                if disc(mid.exp()) <= target {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            a.exp()
        })
        .collect();
    let value = match rule {
        BandwidthRule::Max => per_node.iter().copied().fold(0.0, f64::max),
        BandwidthRule::Min => per_node.iter().copied().fold(f64::INFINITY, f64::min),
    };
    Ok(Bandwidth {
        kind: smoother.kind(),
        rule,
        value,
        per_node,
        capped_nodes,
    })
}
