//! The random input: a truncated lognormal law, exact inverse-CDF sampling,
//! stratification of its support and per-stratum sample allocation.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::to_unit_interval;

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal CDF.
pub(crate) fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}

/// Standard normal survival function, accurate in the upper tail.
pub(crate) fn normal_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x * std::f64::consts::FRAC_1_SQRT_2)
}

fn normal_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Lognormal law with log-scale location `mu` and scale `sigma`, truncated
/// to `[w_lo, w_hi]`. A lower bound of zero is allowed; the support is then
/// `(0, w_hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TruncatedLognormalParams", into = "TruncatedLognormalParams")]
pub struct TruncatedLognormal {
    mu: f64,
    sigma: f64,
    w_lo: f64,
    w_hi: f64,
    // standardized log bounds
    z_lo: f64,
    z_hi: f64,
    // the normalizing mass is evaluated in the tail where it is accurate
    upper_tail: bool,
    mass: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncatedLognormalParams {
    pub mu: f64,
    pub sigma: f64,
    pub w_lo: f64,
    pub w_hi: f64,
}

impl TryFrom<TruncatedLognormalParams> for TruncatedLognormal {
    type Error = Error;

    fn try_from(p: TruncatedLognormalParams) -> Result<Self> {
        TruncatedLognormal::new(p.mu, p.sigma, p.w_lo, p.w_hi)
    }
}

impl From<TruncatedLognormal> for TruncatedLognormalParams {
    fn from(d: TruncatedLognormal) -> Self {
        Self {
            mu: d.mu,
            sigma: d.sigma,
            w_lo: d.w_lo,
            w_hi: d.w_hi,
        }
    }
}

impl TruncatedLognormal {
    pub fn new(mu: f64, sigma: f64, w_lo: f64, w_hi: f64) -> Result<Self> {
        if !(mu.is_finite() && sigma.is_finite() && w_lo.is_finite() && w_hi.is_finite()) {
            return Err(Error::domain("truncated lognormal parameters must be finite"));
        }
        if sigma <= 0.0 {
            return Err(Error::domain(format!("sigma must be positive, got {sigma}")));
        }
        if w_lo < 0.0 || w_hi <= w_lo {
            return Err(Error::domain(format!(
                "truncation bounds must satisfy 0 <= w_lo < w_hi, got [{w_lo}, {w_hi}]"
            )));
        }
        let z_lo = if w_lo == 0.0 {
            f64::NEG_INFINITY
        } else {
            (w_lo.ln() - mu) / sigma
        };
        let z_hi = (w_hi.ln() - mu) / sigma;
        let upper_tail = z_lo > 0.0;
        let mass = if upper_tail {
            normal_sf(z_lo) - normal_sf(z_hi)
        } else {
            normal_cdf(z_hi) - normal_cdf(z_lo)
        };
        if !(mass > 0.0) {
            return Err(Error::domain("truncation interval carries no probability mass"));
        }
        Ok(Self {
            mu,
            sigma,
            w_lo,
            w_hi,
            z_lo,
            z_hi,
            upper_tail,
            mass,
        })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn w_lo(&self) -> f64 {
        self.w_lo
    }

    pub fn w_hi(&self) -> f64 {
        self.w_hi
    }

    fn standardize(&self, w: f64) -> f64 {
        (w.ln() - self.mu) / self.sigma
    }

    /// Probability density; zero outside the support.
    pub fn pdf(&self, w: f64) -> f64 {
        if w < self.w_lo || w > self.w_hi || w <= 0.0 {
            return 0.0;
        }
        normal_pdf(self.standardize(w)) / (self.sigma * w * self.mass)
    }

    /// CDF expressed in the standardized log variable `z`.
    fn cdf_z(&self, z: f64) -> f64 {
        let v = if self.upper_tail {
            (normal_sf(self.z_lo) - normal_sf(z)) / self.mass
        } else {
            (normal_cdf(z) - normal_cdf(self.z_lo)) / self.mass
        };
        v.clamp(0.0, 1.0)
    }

    pub fn cdf(&self, w: f64) -> f64 {
        if w <= self.w_lo {
            0.0
        } else if w >= self.w_hi {
            1.0
        } else {
            self.cdf_z(self.standardize(w))
        }
    }

    /// Quantile function. The root is found in the standardized log variable
    /// by Newton iteration safeguarded with bisection.
    pub fn inverse_cdf(&self, u: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&u) {
            return Err(Error::domain(format!("probability {u} outside [0, 1]")));
        }
        if u == 0.0 {
            return Ok(self.w_lo);
        }
        if u == 1.0 {
            return Ok(self.w_hi);
        }
        let mut lo = if self.z_lo.is_finite() {
            self.z_lo
        } else {
            self.standardize(f64::MIN_POSITIVE)
        };
        let mut hi = self.z_hi;
        let mut z = 0.5 * (lo + hi);
        for _ in 0..200 {
            let f = self.cdf_z(z) - u;
            if f == 0.0 {
                break;
            }
            if f > 0.0 {
                hi = z;
            } else {
                lo = z;
            }
            let slope = normal_pdf(z) / self.mass;
            let newton = z - f / slope;
            let next = if slope > 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if (next - z).abs() <= 1e-15 * (1.0 + z.abs()) || hi - lo <= 1e-15 * (1.0 + z.abs()) {
                z = next;
                break;
            }
            z = next;
        }
        Ok((self.mu + self.sigma * z).exp().clamp(self.w_lo, self.w_hi))
    }

    /// One draw by inverse-CDF transform of a uniform variate.
    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> f64 {
        let u = to_unit_interval(rng.next_u64());
        self.inverse_cdf(u).expect("uniform variate lies in (0, 1]")
    }
}

/// A partition of the support into contiguous strata `(b_{i-1}, b_i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stratification {
    boundaries: Vec<f64>,
    // CDF at each boundary; exactly 0 and 1 at the ends
    cumulative: Vec<f64>,
    probs: Vec<f64>,
}

impl Stratification {
    /// Strata with the given boundaries, which must start at `w_lo`, end at
    /// `w_hi` and increase strictly.
    pub fn from_boundaries(dist: &TruncatedLognormal, boundaries: Vec<f64>) -> Result<Self> {
        if boundaries.len() < 2 {
            return Err(Error::domain("a stratification needs at least two boundaries"));
        }
        if boundaries[0] != dist.w_lo() || *boundaries.last().unwrap() != dist.w_hi() {
            return Err(Error::domain("strata must cover the whole support"));
        }
        if boundaries.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::domain("stratum boundaries must increase strictly"));
        }
        let cumulative: Vec<f64> = boundaries.iter().map(|&b| dist.cdf(b)).collect();
        let probs: Vec<f64> = cumulative.windows(2).map(|c| c[1] - c[0]).collect();
        if let Some(i) = probs.iter().position(|&p| !(p > 0.0)) {
            return Err(Error::domain(format!("stratum {i} has zero probability")));
        }
        Ok(Self {
            boundaries,
            cumulative,
            probs,
        })
    }

    /// `r` strata of equal width.
    pub fn equal_width(dist: &TruncatedLognormal, r: usize) -> Result<Self> {
        if r == 0 {
            return Err(Error::domain("number of strata must be at least 1"));
        }
        let (lo, hi) = (dist.w_lo(), dist.w_hi());
        let width = (hi - lo) / r as f64;
        let mut boundaries: Vec<f64> = (0..=r).map(|i| lo + i as f64 * width).collect();
        boundaries[r] = hi;
        Self::from_boundaries(dist, boundaries)
    }

    /// The trivial one-stratum partition.
    pub fn single(dist: &TruncatedLognormal) -> Self {
        Self::equal_width(dist, 1).expect("one stratum is always valid")
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn bounds(&self, i: usize) -> (f64, f64) {
        (self.boundaries[i], self.boundaries[i + 1])
    }

    /// Draws from the law conditioned on stratum `i` (zero-based) using the
    /// uniform variate `u` in `(0, 1]`.
    pub fn sample_stratum(&self, dist: &TruncatedLognormal, i: usize, u: f64) -> Result<f64> {
        if i >= self.len() {
            return Err(Error::domain(format!(
                "stratum index {i} out of range for {} strata",
                self.len()
            )));
        }
        let (c_lo, c_hi) = (self.cumulative[i], self.cumulative[i + 1]);
        let target = (c_lo + u * (c_hi - c_lo)).clamp(c_lo, c_hi);
        let w = dist.inverse_cdf(target)?;
        let (b_lo, b_hi) = self.bounds(i);
        Ok(if w <= b_lo { b_lo.next_up().min(b_hi) } else { w.min(b_hi) })
    }

    /// Conditional density of stratum `i`.
    pub fn conditional_pdf(&self, dist: &TruncatedLognormal, i: usize, w: f64) -> f64 {
        let (lo, hi) = self.bounds(i);
        let inside = if i == 0 { w >= lo && w <= hi } else { w > lo && w <= hi };
        if inside {
            dist.pdf(w) / self.probs[i]
        } else {
            0.0
        }
    }
}

/// Splits `total` samples in proportion to `weights` (which sum to one):
/// floor, then hand the remainder to the largest fractional parts, then make
/// every count at least one by taking from the largest count.
fn allocate(total: usize, weights: &[f64]) -> Vec<usize> {
    let raw: Vec<f64> = weights.iter().map(|&a| total as f64 * a).collect();
    let mut counts: Vec<usize> = raw.iter().map(|&x| x.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut remainder = total.saturating_sub(assigned);
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = raw[a] - raw[a].floor();
        let fb = raw[b] - raw[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if remainder == 0 {
            break;
        }
        counts[i] += 1;
        remainder -= 1;
    }
    while let Some(empty) = counts.iter().position(|&c| c == 0) {
        let largest = (0..counts.len())
            .max_by(|&a, &b| counts[a].cmp(&counts[b]).then(b.cmp(&a)))
            .unwrap();
        counts[largest] -= 1;
        counts[empty] += 1;
    }
    counts
}

/// Proportional allocation `n_i ~ N p_i`.
pub fn proportional_allocation(total: usize, strata: &Stratification) -> Result<Vec<usize>> {
    if total < strata.len() {
        return Err(Error::domain(format!(
            "cannot allocate {total} samples over {} strata",
            strata.len()
        )));
    }
    Ok(allocate(total, strata.probs()))
}

/// Optimal allocation `n_i ~ sigma_i p_i`. Falls back to proportional
/// allocation when every `sigma_i` is zero.
pub fn optimal_allocation(
    total: usize,
    strata: &Stratification,
    sigmas: &[f64],
) -> Result<Vec<usize>> {
    if sigmas.len() != strata.len() {
        return Err(Error::domain("one standard deviation per stratum is required"));
    }
    if sigmas.iter().any(|&s| !(s >= 0.0)) {
        return Err(Error::domain("standard deviations must be non-negative"));
    }
    let weighted: Vec<f64> = sigmas
        .iter()
        .zip(strata.probs())
        .map(|(&s, &p)| s * p)
        .collect();
    let norm: f64 = weighted.iter().sum();
    if norm == 0.0 {
        return proportional_allocation(total, strata);
    }
    if total < strata.len() {
        return Err(Error::domain(format!(
            "cannot allocate {total} samples over {} strata",
            strata.len()
        )));
    }
    let alpha: Vec<f64> = weighted.iter().map(|w| w / norm).collect();
    Ok(allocate(total, &alpha))
}

/// Sample statistics of a quantity within one stratum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StratumStats {
    pub mean: f64,
    pub var: f64,
    pub count: usize,
}

impl StratumStats {
    /// Mean and biased (1/n) variance; the variance is zero for fewer than
    /// two values.
    pub fn from_values(values: &[f64]) -> Self {
        let count = values.len();
        if count == 0 {
            return Self {
                mean: 0.0,
                var: 0.0,
                count,
            };
        }
        let mean = values.iter().sum::<f64>() / count as f64;
        let var = if count <= 1 {
            0.0
        } else {
            values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / count as f64
        };
        Self { mean, var, count }
    }
}

/// Variance of the stratified mean estimator, `sum_i sigma_i^2 p_i^2 / n_i`.
pub fn stratified_estimator_variance(stats: &[StratumStats], probs: &[f64], counts: &[usize]) -> f64 {
    stats
        .iter()
        .zip(probs)
        .zip(counts)
        .map(|((s, &p), &n)| s.var * p * p / n as f64)
        .sum()
}

/// Variance of the stratified estimator under proportional allocation,
/// `(1/N) sum_i sigma_i^2 p_i`.
pub fn proportional_variance(stats: &[StratumStats], probs: &[f64], total: usize) -> f64 {
    stats.iter().zip(probs).map(|(s, &p)| s.var * p).sum::<f64>() / total as f64
}

/// Variance of a plain Monte Carlo mean with `total` samples, with the
/// population variance rebuilt from stratum statistics by the law of total
/// variance.
pub fn plain_mc_variance(stats: &[StratumStats], probs: &[f64], total: usize) -> f64 {
    let mean: f64 = stats.iter().zip(probs).map(|(s, &p)| s.mean * p).sum();
    let within: f64 = stats.iter().zip(probs).map(|(s, &p)| s.var * p).sum();
    let between: f64 = stats
        .iter()
        .zip(probs)
        .map(|(s, &p)| p * (s.mean - mean) * (s.mean - mean))
        .sum();
    (within + between) / total as f64
}
