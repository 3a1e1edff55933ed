//! PDE testbeds mapping a scalar input and a mesh level to a quantity of
//! interest, with coupled fine/coarse evaluation.

pub mod burgers;
pub mod diffusion;
pub mod tridiag;

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cost::WorkModel;
use crate::error::{Error, Result};

pub use burgers::{godunov_flux, solve_burgers, BurgersField};
pub use diffusion::{solve_diffusion, DiffusionField};
pub use tridiag::thomas_solve;

/// Geometric mesh hierarchy `M_l = m0 * factor^l`, `l = 0..=l_star`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshHierarchy {
    pub m0: usize,
    pub factor: usize,
    pub l_star: usize,
}

impl MeshHierarchy {
    pub fn new(m0: usize, factor: usize, l_star: usize) -> Result<Self> {
        if m0 < 2 {
            return Err(Error::domain("the coarsest mesh needs more than one cell"));
        }
        if factor < 2 {
            return Err(Error::domain("refinement factor must be at least 2"));
        }
        let h = Self { m0, factor, l_star };
        h.cells_checked(l_star)
            .ok_or_else(|| Error::domain("mesh hierarchy overflows"))?;
        Ok(h)
    }

    fn cells_checked(&self, level: usize) -> Option<usize> {
        let scale = self.factor.checked_pow(u32::try_from(level).ok()?)?;
        self.m0.checked_mul(scale)
    }

    /// Number of cells at `level`.
    pub fn cells(&self, level: usize) -> usize {
        self.cells_checked(level).expect("level within hierarchy")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Diffusion,
    Burgers,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Diffusion => "diffusion",
            ModelKind::Burgers => "burgers",
        })
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "diffusion" => Ok(ModelKind::Diffusion),
            "burgers" => Ok(ModelKind::Burgers),
            other => Err(Error::config(format!("unknown model `{other}`"))),
        }
    }
}

/// How the time step follows the mesh.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeStepRule {
    /// `dt = ratio * dx`.
    DtOverDx(f64),
    /// `dt = cfl * dx / max|u|`.
    Cfl(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub final_time: f64,
    pub qoi_scale: f64,
    pub domain_length: f64,
    pub time_step: TimeStepRule,
}

impl ModelSpec {
    pub fn diffusion() -> Self {
        Self {
            kind: ModelKind::Diffusion,
            final_time: 0.2,
            qoi_scale: 10.0,
            domain_length: diffusion::LENGTH,
            time_step: TimeStepRule::DtOverDx(1.0),
        }
    }

    pub fn burgers() -> Self {
        Self {
            kind: ModelKind::Burgers,
            final_time: 0.5,
            qoi_scale: 10.0,
            domain_length: burgers::LENGTH,
            time_step: TimeStepRule::Cfl(0.9),
        }
    }

    pub fn preset(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Diffusion => Self::diffusion(),
            ModelKind::Burgers => Self::burgers(),
        }
    }

    pub fn solve(&self, input: f64, cells: usize) -> Result<Solution> {
        match (self.kind, self.time_step) {
            (ModelKind::Diffusion, TimeStepRule::DtOverDx(ratio)) => {
                let f = solve_diffusion(input, cells, self.final_time, ratio)?;
                Ok(Solution {
                    grid: Grid::Nodes,
                    dx: f.dx,
                    steps: f.steps,
                    values: f.values,
                })
            }
            (ModelKind::Burgers, TimeStepRule::Cfl(cfl)) => {
                let f = solve_burgers(input, cells, self.final_time, cfl)?;
                Ok(Solution {
                    grid: Grid::Cells,
                    dx: f.dx,
                    steps: f.steps,
                    values: f.values,
                })
            }
            (kind, rule) => Err(Error::config(format!("time-step rule {rule:?} does not apply to {kind}"))),
        }
    }

    /// Quantity of interest at `cells` cells together with the work spent.
    pub fn evaluate(&self, input: f64, cells: usize, work_model: WorkModel) -> Result<QoiSample> {
        let start = (work_model == WorkModel::Wallclock).then(Instant::now);
        let sol = self.solve(input, cells)?;
        let value = qoi(&sol.values, sol.dx, self.qoi_scale, sol.grid);
        let work = match work_model {
            WorkModel::Deterministic => (cells * sol.steps) as f64,
            WorkModel::Wallclock => start.map_or(0.0, |t| t.elapsed().as_secs_f64()),
        };
        Ok(QoiSample { value, work })
    }
}

/// Where the discrete values live.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Grid {
    /// `cells + 1` nodes including the boundaries; trapezoid rule.
    Nodes,
    /// `cells` cell averages; midpoint rule.
    Cells,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub grid: Grid,
    pub dx: f64,
    pub steps: usize,
    pub values: Vec<f64>,
}

impl Solution {
    pub fn coordinates(&self) -> Vec<f64> {
        match self.grid {
            Grid::Nodes => (0..self.values.len()).map(|j| j as f64 * self.dx).collect(),
            Grid::Cells => (0..self.values.len()).map(|i| (i as f64 + 0.5) * self.dx).collect(),
        }
    }
}

/// `scale * int u^2 dx` by the quadrature natural to the grid.
pub fn qoi(values: &[f64], dx: f64, scale: f64, grid: Grid) -> f64 {
    let sum_sq: f64 = values.iter().map(|u| u * u).sum();
    let integral = match grid {
        Grid::Cells => sum_sq * dx,
        Grid::Nodes => {
            let (first, last) = (values[0], values[values.len() - 1]);
            (sum_sq - 0.5 * (first * first + last * last)) * dx
        }
    };
    scale * integral
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QoiSample {
    pub value: f64,
    pub work: f64,
}

/// One coupled sample `(Q_{M_l}, Q_{M_{l-1}})` computed from a single input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelPair {
    pub level: usize,
    pub input_w: f64,
    pub fine: f64,
    pub coarse: Option<f64>,
    pub fine_work: f64,
    pub coarse_work: f64,
}

impl LevelPair {
    pub fn work(&self) -> f64 {
        self.fine_work + self.coarse_work
    }
}

pub fn sample_pair(
    model: &ModelSpec,
    hierarchy: &MeshHierarchy,
    input_w: f64,
    level: usize,
    work_model: WorkModel,
) -> Result<LevelPair> {
    if level > hierarchy.l_star {
        return Err(Error::domain(format!(
            "level {level} exceeds the hierarchy cap {}",
            hierarchy.l_star
        )));
    }
    let fine = model.evaluate(input_w, hierarchy.cells(level), work_model)?;
    let coarse = if level > 0 {
        Some(model.evaluate(input_w, hierarchy.cells(level - 1), work_model)?)
    } else {
        None
    };
    Ok(LevelPair {
        level,
        input_w,
        fine: fine.value,
        coarse: coarse.map(|c| c.value),
        fine_work: fine.work,
        coarse_work: coarse.map_or(0.0, |c| c.work),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hierarchy_cells() {
        let h = MeshHierarchy::new(16, 2, 7).unwrap();
        assert_eq!(h.cells(0), 16);
        assert_eq!(h.cells(7), 2048);
        for l in 1..=7 {
            assert_eq!(h.cells(l - 1) * 2, h.cells(l));
        }
        assert!(MeshHierarchy::new(1, 2, 3).is_err());
        assert!(MeshHierarchy::new(16, 1, 3).is_err());
    }

    #[test]
    fn qoi_quadratures() {
        assert_eq!(qoi(&[0.0; 9], 0.5, 10.0, Grid::Nodes), 0.0);
        assert!((qoi(&[1.0; 9], 0.5, 10.0, Grid::Nodes) - 40.0).abs() < 1e-12);
        assert!((qoi(&[1.0; 8], 0.5, 10.0, Grid::Cells) - 40.0).abs() < 1e-12);
        let cells = 1024;
        let dx = 4.0 / cells as f64;
        let steady: Vec<f64> = (0..=cells).map(|j| (j as f64 * dx - 2.0) / 2.0).collect();
        assert!((qoi(&steady, dx, 10.0, Grid::Nodes) - 40.0 / 3.0).abs() < 1e-4);
    }

    #[test]
    fn level_zero_has_no_coarse_value() {
        let h = MeshHierarchy::new(16, 2, 3).unwrap();
        let p = sample_pair(&ModelSpec::diffusion(), &h, 2.0, 0, WorkModel::Deterministic).unwrap();
        assert!(p.coarse.is_none());
        assert_eq!(p.coarse_work, 0.0);
        assert!(sample_pair(&ModelSpec::diffusion(), &h, 2.0, 4, WorkModel::Deterministic).is_err());
    }

    #[test]
    fn coupled_values_share_the_input() {
        let h = MeshHierarchy::new(32, 2, 4).unwrap();
        let m = ModelSpec::burgers();
        let p = sample_pair(&m, &h, 1.25, 3, WorkModel::Deterministic).unwrap();
        let fine = m.evaluate(p.input_w, h.cells(3), WorkModel::Deterministic).unwrap();
        let coarse = m.evaluate(p.input_w, h.cells(2), WorkModel::Deterministic).unwrap();
        assert_eq!(p.fine, fine.value);
        assert_eq!(p.coarse, Some(coarse.value));
    }

    #[test]
    fn diffusion_qoi_range() {
        let h = MeshHierarchy::new(16, 2, 7).unwrap();
        let m = ModelSpec::diffusion();
        for level in [0, 3, 6] {
            for k in 0..=12 {
                let d = 1.0 + 0.25 * k as f64;
                let q = m.evaluate(d, h.cells(level), WorkModel::Deterministic).unwrap().value;
                assert!((14.0..=28.0).contains(&q), "level {level}, D={d}: Q={q}");
            }
        }
    }

    #[test]
    fn burgers_qoi_range_and_exact_limit() {
        let h = MeshHierarchy::new(32, 2, 7).unwrap();
        let m = ModelSpec::burgers();
        for k in 0..=8 {
            let u1 = 0.25 * k as f64;
            let q = m.evaluate(u1, h.cells(5), WorkModel::Deterministic).unwrap().value;
            assert!((15.0..=65.0).contains(&q), "U1={u1}: Q={q}");
            let exact = burgers::exact_qoi(u1, 0.5);
            assert!((q - exact).abs() < 0.5, "U1={u1}: Q={q} exact={exact}");
        }
    }
}
