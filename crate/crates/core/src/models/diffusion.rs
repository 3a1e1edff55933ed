//! Linear diffusion on `(0, 4)` with Dirichlet data `u(0) = -1`, `u(4) = 1`
//! and initial front `tanh((x - 2) / 0.05)`, discretized with central
//! differences in space and Crank-Nicolson in time (with a Rannacher
//! start-up).

use super::tridiag::ToeplitzTridiag;
use crate::error::{Error, Result};

pub const LENGTH: f64 = 4.0;
pub const LEFT_VALUE: f64 = -1.0;
pub const RIGHT_VALUE: f64 = 1.0;
const FRONT_CENTER: f64 = 2.0;
const FRONT_WIDTH: f64 = 0.05;
// Crank-Nicolson steps replaced by implicit Euler half steps at start-up
const STARTUP_STEPS: usize = 2;

/// Nodal solution on `x_j = j dx`, `j = 0..=cells`, boundary nodes included.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionField {
    pub values: Vec<f64>,
    pub dx: f64,
    pub steps: usize,
}

impl DiffusionField {
    pub fn node(&self, j: usize) -> f64 {
        j as f64 * self.dx
    }
}

pub fn initial_value(x: f64) -> f64 {
    ((x - FRONT_CENTER) / FRONT_WIDTH).tanh()
}

/// Advances the problem to `final_time` on `cells` cells with time step
/// `dt = dt_over_dx * dx`; the last step is shortened to land on the final
/// time.
pub fn solve_diffusion(
    diffusivity: f64,
    cells: usize,
    final_time: f64,
    dt_over_dx: f64,
) -> Result<DiffusionField> {
    if cells < 2 {
        return Err(Error::domain("diffusion solver needs at least 2 cells"));
    }
    if !(diffusivity > 0.0) || !(final_time >= 0.0) || !(dt_over_dx > 0.0) {
        return Err(Error::domain("diffusivity, final time and step ratio must be positive"));
    }
    let dx = LENGTH / cells as f64;
    let mut u: Vec<f64> = (0..=cells).map(|j| initial_value(j as f64 * dx)).collect();
    u[0] = LEFT_VALUE;
    u[cells] = RIGHT_VALUE;

    let dt = dt_over_dx * dx;
    let steps = if final_time == 0.0 {
        0
    } else {
        ((final_time / dt) - 1e-9).ceil().max(1.0) as usize
    };
    let last_dt = final_time - (steps.saturating_sub(1)) as f64 * dt;

    let interior = cells - 1;
    let mut rhs = vec![0.0; interior];
    let cn = |step_dt: f64| -> Result<(f64, ToeplitzTridiag)> {
        let r = diffusivity * step_dt / (dx * dx);
        Ok((r, ToeplitzTridiag::new(interior, -0.5 * r, 1.0 + r, -0.5 * r)?))
    };
    let euler = |step_dt: f64| -> Result<(f64, ToeplitzTridiag)> {
        let r = diffusivity * step_dt / (dx * dx);
        Ok((r, ToeplitzTridiag::new(interior, -r, 1.0 + 2.0 * r, -r)?))
    };
    let regular = cn(dt)?;
    let last = if (last_dt - dt).abs() > 1e-14 * dt {
        Some(cn(last_dt)?)
    } else {
        None
    };

    for step in 0..steps {
        let step_dt = if step + 1 == steps { last_dt } else { dt };
        if step < STARTUP_STEPS {
            // Rannacher start: two implicit Euler half steps damp the stiff
            // modes excited by the non-smooth data
            let (r, system) = euler(0.5 * step_dt)?;
            for _ in 0..2 {
                rhs.copy_from_slice(&u[1..cells]);
                rhs[0] += r * LEFT_VALUE;
                rhs[interior - 1] += r * RIGHT_VALUE;
                system.solve_in_place(&mut rhs);
                u[1..cells].copy_from_slice(&rhs);
            }
            continue;
        }
        let (r, system) = match (&last, step + 1 == steps) {
            (Some(l), true) => l,
            _ => &regular,
        };
        let half = 0.5 * r;
        for (i, r) in rhs.iter_mut().enumerate() {
            let j = i + 1;
            *r = u[j] + half * (u[j - 1] - 2.0 * u[j] + u[j + 1]);
        }
        // boundary values at both time levels
        rhs[0] += half * LEFT_VALUE;
        rhs[interior - 1] += half * RIGHT_VALUE;
        system.solve_in_place(&mut rhs);
        u[1..cells].copy_from_slice(&rhs);
    }

    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("diffusion solution is not finite"));
    }
    Ok(DiffusionField { values: u, dx, steps })
}
