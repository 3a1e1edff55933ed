//! Node grids, CDF estimates at the nodes, spline interpolation, sup-norm
//! distances and a deterministic reference CDF.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inputs::TruncatedLognormal;
use crate::models::{thomas_solve, ModelKind, ModelSpec};

/// Density of the evaluation grid used for sup-norms, relative to the nodes.
pub const DENSE_FACTOR: usize = 10;

/// `1{Q <= q_n}`.
#[inline]
pub fn indicator(node: f64, q: f64) -> f64 {
    if q <= node {
        1.0
    } else {
        0.0
    }
}

/// `S + 1` equidistant interpolation nodes on `[a, b]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeGrid {
    pub a: f64,
    pub b: f64,
    /// Number of intervals `S`.
    pub intervals: usize,
}

impl NodeGrid {
    pub fn new(a: f64, b: f64, intervals: usize) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(Error::domain(format!("invalid node interval [{a}, {b}]")));
        }
        if intervals < 3 {
            return Err(Error::domain("a cubic spline needs at least four nodes"));
        }
        Ok(Self { a, b, intervals })
    }

    pub fn preset(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Diffusion => Self { a: 14.0, b: 28.0, intervals: 28 },
            ModelKind::Burgers => Self { a: 15.0, b: 65.0, intervals: 100 },
        }
    }

    pub fn spacing(&self) -> f64 {
        (self.b - self.a) / self.intervals as f64
    }

    pub fn len(&self) -> usize {
        self.intervals + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn node(&self, n: usize) -> f64 {
        if n == self.intervals {
            self.b
        } else {
            self.a + n as f64 * self.spacing()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.len()).map(|n| self.node(n)).collect()
    }

    /// Points at `DENSE_FACTOR` times the node density, endpoints included.
    pub fn dense_points(&self) -> Vec<f64> {
        let m = self.intervals * DENSE_FACTOR;
        let step = (self.b - self.a) / m as f64;
        (0..=m)
            .map(|k| if k == m { self.b } else { self.a + k as f64 * step })
            .collect()
    }
}

/// Natural cubic spline through `(x_i, y_i)`, constant outside the data
/// range.
#[derive(Debug, Clone, PartialEq)]
pub struct CubicSpline {
    xs: Vec<f64>,
    ys: Vec<f64>,
    /// Second derivatives at the knots.
    m: Vec<f64>,
}

impl CubicSpline {
    pub fn natural(xs: &[f64], ys: &[f64]) -> Result<Self> {
        let n = xs.len();
        if n != ys.len() {
            return Err(Error::domain("spline abscissae and values differ in length"));
        }
        if n < 4 {
            return Err(Error::domain("a cubic spline needs at least four nodes"));
        }
        if xs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::domain("spline abscissae must be strictly increasing"));
        }
        let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
        // interior second derivatives m_1..m_{n-2}; m_0 = m_{n-1} = 0
        let k = n - 2;
        let diag: Vec<f64> = (0..k).map(|i| 2.0 * (h[i] + h[i + 1])).collect();
        let off: Vec<f64> = (1..k).map(|i| h[i]).collect();
        let rhs: Vec<f64> = (0..k)
            .map(|i| 6.0 * ((ys[i + 2] - ys[i + 1]) / h[i + 1] - (ys[i + 1] - ys[i]) / h[i]))
            .collect();
        let interior = thomas_solve(&off, &diag, &off, &rhs)?;
        let mut m = Vec::with_capacity(n);
        m.push(0.0);
        m.extend(interior);
        m.push(0.0);
        Ok(Self {
            xs: xs.to_vec(),
            ys: ys.to_vec(),
            m,
        })
    }

    /// Spline through values at the nodes of `grid`.
    pub fn on_grid(grid: &NodeGrid, values: &[f64]) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::domain(format!(
                "expected {} node values, got {}",
                grid.len(),
                values.len()
            )));
        }
        Self::natural(&grid.nodes(), values)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return self.ys[0];
        }
        if x >= self.xs[n - 1] {
            return self.ys[n - 1];
        }
        let i = self.xs.partition_point(|&v| v <= x).clamp(1, n - 1) - 1;
        let (x0, x1) = (self.xs[i], self.xs[i + 1]);
        let h = x1 - x0;
        let (a, b) = ((x1 - x) / h, (x - x0) / h);
        a * self.ys[i]
            + b * self.ys[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0
    }
}

/// Least-squares nondecreasing fit (pool adjacent violators, unit weights).
pub fn isotonic(values: &[f64]) -> Vec<f64> {
    // blocks of (sum, count)
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(values.len());
    for &v in values {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (s1, c1) = blocks[blocks.len() - 1];
            let (s0, c0) = blocks[blocks.len() - 2];
            if s0 / c0 as f64 > s1 / c1 as f64 {
                blocks.pop();
                *blocks.last_mut().unwrap() = (s0 + s1, c0 + c1);
            } else {
                break;
            }
        }
    }
    blocks
        .into_iter()
        .flat_map(|(s, c)| std::iter::repeat_n(s / c as f64, c))
        .collect()
}

/// Isotonic projection followed by clipping to `[0, 1]`.
pub fn post_process(raw: &[f64]) -> Vec<f64> {
    isotonic(raw).into_iter().map(|v| v.clamp(0.0, 1.0)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateMeta {
    pub method: String,
    pub eps: Option<f64>,
    pub seed: Option<u64>,
}

/// A CDF estimated at the nodes of a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfEstimate {
    pub grid: NodeGrid,
    pub raw: Vec<f64>,
    pub processed: Vec<f64>,
    pub meta: EstimateMeta,
}

/// Node values on a grid, the argument of [`sup_distance`].
#[derive(Debug, Clone, Copy)]
pub struct Curve<'a> {
    pub grid: &'a NodeGrid,
    pub values: &'a [f64],
}

impl CdfEstimate {
    pub fn new(grid: NodeGrid, raw: Vec<f64>, meta: EstimateMeta) -> Result<Self> {
        if raw.len() != grid.len() {
            return Err(Error::domain(format!(
                "expected {} node values, got {}",
                grid.len(),
                raw.len()
            )));
        }
        let processed = post_process(&raw);
        Ok(Self {
            grid,
            raw,
            processed,
            meta,
        })
    }

    pub fn raw_curve(&self) -> Curve<'_> {
        Curve {
            grid: &self.grid,
            values: &self.raw,
        }
    }

    pub fn processed_curve(&self) -> Curve<'_> {
        Curve {
            grid: &self.grid,
            values: &self.processed,
        }
    }

    /// Spline of the post-processed values.
    pub fn spline(&self) -> Result<CubicSpline> {
        CubicSpline::on_grid(&self.grid, &self.processed)
    }

    /// Largest change made by post-processing.
    pub fn clip_adjustment(&self) -> f64 {
        self.raw
            .iter()
            .zip(&self.processed)
            .map(|(r, p)| (r - p).abs())
            .fold(0.0, f64::max)
    }

    /// CSV with columns `q, raw, processed, reference, abs_error`, the error
    /// being that of the raw values. Reference columns are empty without a
    /// reference.
    pub fn write_csv<W: Write>(&self, reference: Option<&CdfEstimate>, out: W) -> Result<()> {
        if let Some(r) = reference {
            check_same_domain(&self.grid, &r.grid)?;
        }
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        w.write_record(["q", "raw", "processed", "reference", "abs_error"])?;
        for n in 0..self.grid.len() {
            let q = self.grid.node(n).to_string();
            let raw = self.raw[n].to_string();
            let processed = self.processed[n].to_string();
            let (reference, err) = match reference {
                Some(r) => (r.raw[n].to_string(), (self.raw[n] - r.raw[n]).abs().to_string()),
                None => (String::new(), String::new()),
            };
            w.write_record([q, raw, processed, reference, err])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_same_domain(a: &NodeGrid, b: &NodeGrid) -> Result<()> {
    if a.a != b.a || a.b != b.b {
        return Err(Error::domain(format!(
            "domains differ: [{}, {}] vs [{}, {}]",
            a.a, a.b, b.a, b.b
        )));
    }
    Ok(())
}

/// `max |A - B|` between the spline interpolants of two node curves on the
/// dense evaluation grid of `A`.
pub fn sup_distance(a: Curve<'_>, b: Curve<'_>) -> Result<f64> {
    check_same_domain(a.grid, b.grid)?;
    let sa = CubicSpline::on_grid(a.grid, a.values)?;
    let sb = CubicSpline::on_grid(b.grid, b.values)?;
    let dense = if a.grid.intervals >= b.grid.intervals {
        a.grid.dense_points()
    } else {
        b.grid.dense_points()
    };
    Ok(dense
        .into_iter()
        .map(|q| (sa.eval(q) - sb.eval(q)).abs())
        .fold(0.0, f64::max))
}

/// Resolution of the reference CDF.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSettings {
    /// Mesh used for the anchor solves.
    pub mesh_cells: usize,
    /// Input values at which the QoI is computed; uniform on the support.
    pub anchors: usize,
    /// Cells of the input quadrature.
    pub quadrature_cells: usize,
}

impl ReferenceSettings {
    pub fn validate(&self) -> Result<()> {
        if self.anchors < 7 || self.anchors.is_multiple_of(2) {
            return Err(Error::config("reference anchors must be odd and at least 7"));
        }
        if self.quadrature_cells < 2 || self.mesh_cells < 2 {
            return Err(Error::config("reference resolution too small"));
        }
        Ok(())
    }
}

/// Deterministic CDF of the QoI of a scalar-input model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceCdf {
    pub estimate: CdfEstimate,
    pub settings: ReferenceSettings,
    pub anchor_inputs: Vec<f64>,
    pub anchor_qoi: Vec<f64>,
    /// Sup-norm change at the nodes when every second anchor is dropped.
    pub anchor_halving_change: f64,
}

/// Computes `F(q_n)` by integrating `f_W` against `1{Q(w) <= q_n}`, with
/// `Q(w)` the spline interpolant of QoI values at uniformly spaced anchor
/// inputs solved on a fine mesh.
pub fn reference_cdf(
    model: &ModelSpec,
    dist: &TruncatedLognormal,
    grid: &NodeGrid,
    settings: ReferenceSettings,
) -> Result<ReferenceCdf> {
    settings.validate()?;
    let k = settings.anchors;
    let (lo, hi) = (dist.w_lo(), dist.w_hi());
    let inputs: Vec<f64> = (0..k)
        .map(|j| if j + 1 == k { hi } else { lo + (hi - lo) * j as f64 / (k - 1) as f64 })
        .collect();
    let qoi = inputs
        .par_iter()
        .map(|&w| {
            let sol = model.solve(w.max(f64::MIN_POSITIVE), settings.mesh_cells)?;
            Ok(crate::models::qoi(&sol.values, sol.dx, model.qoi_scale, sol.grid))
        })
        .collect::<Result<Vec<f64>>>()?;
    let fine = integrate_cdf(dist, grid, &inputs, &qoi, settings.quadrature_cells)?;
    let half_inputs: Vec<f64> = inputs.iter().step_by(2).copied().collect();
    let half_qoi: Vec<f64> = qoi.iter().step_by(2).copied().collect();
    let coarse = integrate_cdf(dist, grid, &half_inputs, &half_qoi, settings.quadrature_cells)?;
    let change = fine
        .iter()
        .zip(&coarse)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let estimate = CdfEstimate::new(
        *grid,
        fine,
        EstimateMeta {
            method: "reference".into(),
            eps: None,
            seed: None,
        },
    )?;
    Ok(ReferenceCdf {
        estimate,
        settings,
        anchor_inputs: inputs,
        anchor_qoi: qoi,
        anchor_halving_change: change,
    })
}

fn integrate_cdf(
    dist: &TruncatedLognormal,
    grid: &NodeGrid,
    inputs: &[f64],
    qoi: &[f64],
    cells: usize,
) -> Result<Vec<f64>> {
    let spline = CubicSpline::natural(inputs, qoi)?;
    let (lo, hi) = (dist.w_lo(), dist.w_hi());
    let width = (hi - lo) / cells as f64;
    let mut mass: Vec<(f64, f64)> = Vec::with_capacity(cells);
    let mut left_cdf = 0.0;
    for j in 0..cells {
        let right = if j + 1 == cells { hi } else { lo + (j + 1) as f64 * width };
        let right_cdf = dist.cdf(right);
        let mid = lo + (j as f64 + 0.5) * width;
        mass.push((spline.eval(mid), right_cdf - left_cdf));
        left_cdf = right_cdf;
    }
    mass.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut cumulative = Vec::with_capacity(cells);
    let mut acc = 0.0;
    for &(_, p) in &mass {
        acc += p;
        cumulative.push(acc);
    }
    Ok(grid
        .nodes()
        .into_iter()
        .map(|q| {
            let idx = mass.partition_point(|m| m.0 <= q);
            if idx == 0 {
                0.0
            } else {
                cumulative[idx - 1].min(1.0)
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indicator_is_closed_on_the_right() {
        assert_eq!(indicator(1.0, 1.0), 1.0);
        assert_eq!(indicator(1.0, 1.0 + 1e-9), 0.0);
        assert_eq!(indicator(1.0, -1e300), 1.0);
    }

    #[test]
    fn preset_grids() {
        let d = NodeGrid::preset(ModelKind::Diffusion);
        assert_eq!(d.len(), 29);
        assert_eq!(d.spacing(), 0.5);
        assert_eq!(d.node(28), 28.0);
        let b = NodeGrid::preset(ModelKind::Burgers);
        assert_eq!(b.len(), 101);
        assert_eq!(b.spacing(), 0.5);
        assert_eq!(b.dense_points().len(), 1001);
        assert!(NodeGrid::new(0.0, 1.0, 2).is_err());
        assert!(NodeGrid::new(1.0, 1.0, 5).is_err());
    }

    #[test]
    fn spline_interpolates_and_reproduces_lines() {
        let grid = NodeGrid::new(0.0, 3.0, 6).unwrap();
        let vals: Vec<f64> = grid.nodes().iter().map(|x| (x * 1.3).sin()).collect();
        let s = CubicSpline::on_grid(&grid, &vals).unwrap();
        for (x, v) in grid.nodes().iter().zip(&vals) {
            assert!((s.eval(*x) - v).abs() < 1e-14);
        }
        let lin: Vec<f64> = grid.nodes().iter().map(|x| 2.0 * x - 1.0).collect();
        let s = CubicSpline::on_grid(&grid, &lin).unwrap();
        for q in grid.dense_points() {
            assert!((s.eval(q) - (2.0 * q - 1.0)).abs() < 1e-13);
        }
        let c = CubicSpline::on_grid(&grid, &[0.3; 7]).unwrap();
        assert_eq!(c.eval(1.234), 0.3);
        // clamped outside
        assert_eq!(s.eval(-5.0), -1.0);
        assert_eq!(s.eval(9.0), 5.0);
        assert!(CubicSpline::natural(&[0.0, 1.0, 2.0], &[0.0; 3]).is_err());
    }

    #[test]
    fn spline_matches_dense_oracle() {
        // independent oracle: full (n x n) natural-spline system solved densely
        let xs = [0.0, 0.4, 1.1, 1.5, 2.7, 3.0];
        let ys = [0.2, -0.1, 0.8, 0.5, 0.9, 1.4];
        let n = xs.len();
        let mut a = nalgebra::DMatrix::<f64>::zeros(n, n);
        let mut r = nalgebra::DVector::<f64>::zeros(n);
        a[(0, 0)] = 1.0;
        a[(n - 1, n - 1)] = 1.0;
        for i in 1..n - 1 {
            let (h0, h1) = (xs[i] - xs[i - 1], xs[i + 1] - xs[i]);
            a[(i, i - 1)] = h0;
            a[(i, i)] = 2.0 * (h0 + h1);
            a[(i, i + 1)] = h1;
            r[i] = 6.0 * ((ys[i + 1] - ys[i]) / h1 - (ys[i] - ys[i - 1]) / h0);
        }
        let m = a.lu().solve(&r).unwrap();
        let s = CubicSpline::natural(&xs, &ys).unwrap();
        for k in 0..=300 {
            let x = 3.0 * k as f64 / 300.0;
            let i = (0..n - 1).find(|&i| x <= xs[i + 1]).unwrap();
            let h = xs[i + 1] - xs[i];
            let (p, q) = ((xs[i + 1] - x) / h, (x - xs[i]) / h);
            let v = p * ys[i] + q * ys[i + 1] + ((p.powi(3) - p) * m[i] + (q.powi(3) - q) * m[i + 1]) * h * h / 6.0;
            assert!((s.eval(x) - v).abs() < 1e-12);
        }
    }

    #[test]
    fn isotonic_projection() {
        assert_eq!(isotonic(&[1.0, 3.0, 2.0, 4.0]), vec![1.0, 2.5, 2.5, 4.0]);
        assert_eq!(isotonic(&[3.0, 2.0, 1.0]), vec![2.0, 2.0, 2.0]);
        let p = post_process(&[-0.02, 0.1, 0.05, 0.9, 1.03]);
        let expected = [0.0, 0.075, 0.075, 0.9, 1.0];
        assert!(p.iter().zip(expected).all(|(a, b)| (a - b).abs() < 1e-15));
    }

    #[test]
    fn sup_distance_examples() {
        let g = NodeGrid::new(0.0, 1.0, 4).unwrap();
        let zero = [0.0; 5];
        let one = [1.0; 5];
        let lin: Vec<f64> = g.nodes();
        let half = [0.5; 5];
        assert_eq!(sup_distance(Curve { grid: &g, values: &zero }, Curve { grid: &g, values: &zero }).unwrap(), 0.0);
        assert_eq!(sup_distance(Curve { grid: &g, values: &zero }, Curve { grid: &g, values: &one }).unwrap(), 1.0);
        let d = sup_distance(Curve { grid: &g, values: &lin }, Curve { grid: &g, values: &half }).unwrap();
        assert!((d - 0.5).abs() < 1e-14);
        let other = NodeGrid::new(0.0, 2.0, 4).unwrap();
        assert!(sup_distance(Curve { grid: &g, values: &zero }, Curve { grid: &other, values: &zero }).is_err());
    }

    #[test]
    fn csv_layout() {
        let g = NodeGrid::new(0.0, 1.0, 3).unwrap();
        let meta = EstimateMeta {
            method: "mc".into(),
            eps: Some(0.1),
            seed: Some(1),
        };
        let e = CdfEstimate::new(g, vec![0.0, 0.5, 0.4, 1.0], meta.clone()).unwrap();
        let r = CdfEstimate::new(g, vec![0.0, 0.25, 0.5, 1.0], meta).unwrap();
        let mut buf = Vec::new();
        e.write_csv(Some(&r), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "q,raw,processed,reference,abs_error");
        assert_eq!(lines[2], "0.3333333333333333,0.5,0.45,0.25,0.25");
        assert!(!text.contains('\r'));
        assert!((e.clip_adjustment() - 0.05).abs() < 1e-15);
    }

    #[test]
    fn reference_for_a_linear_qoi() {
        // Burgers at t = 0 is not available, so check the integration step
        // alone: Q(w) = w gives F(q) = P(W <= q).
        let dist = TruncatedLognormal::new(3.0, 3.0, 1.0, 4.0).unwrap();
        let grid = NodeGrid::new(0.5, 4.5, 16).unwrap();
        let inputs: Vec<f64> = (0..9).map(|j| 1.0 + 3.0 * j as f64 / 8.0).collect();
        let f = integrate_cdf(&dist, &grid, &inputs, &inputs, 1 << 16).unwrap();
        for (q, v) in grid.nodes().iter().zip(&f) {
            assert!((v - dist.cdf(*q)).abs() < 1e-4, "q={q}: {v} vs {}", dist.cdf(*q));
        }
    }
}
