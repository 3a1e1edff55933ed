//! Inviscid Burgers equation on `(0, 2)` with inflow `u(0) = 2`, outflow
//! `u(2) = 0` and piecewise-constant initial data, discretized with the
//! first-order Godunov finite-volume scheme.

use crate::error::{Error, Result};

pub const LENGTH: f64 = 2.0;
pub const LEFT_VALUE: f64 = 2.0;
pub const RIGHT_VALUE: f64 = 0.0;
const JUMP_AT: f64 = 1.0;

#[inline]
fn flux(u: f64) -> f64 {
    0.5 * u * u
}

/// Exact Godunov flux for `f(u) = u^2 / 2`.
#[inline]
pub fn godunov_flux(u_left: f64, u_right: f64) -> f64 {
    if u_left >= u_right {
        // shock: upwind by the sign of the shock speed
        if u_left + u_right > 0.0 {
            flux(u_left)
        } else {
            flux(u_right)
        }
    } else if u_left > 0.0 {
        flux(u_left)
    } else if u_right < 0.0 {
        flux(u_right)
    } else {
        0.0
    }
}

/// Cell averages at centers `(i + 1/2) dx`.
#[derive(Debug, Clone, PartialEq)]
pub struct BurgersField {
    pub values: Vec<f64>,
    pub dx: f64,
    pub steps: usize,
}

pub fn initial_state(inflow_state: f64, cells: usize) -> Vec<f64> {
    let dx = LENGTH / cells as f64;
    (0..cells)
        .map(|i| {
            if (i as f64 + 0.5) * dx <= JUMP_AT {
                inflow_state
            } else {
                0.0
            }
        })
        .collect()
}

/// One conservative update with ghost cells holding the boundary values.
/// Returns the fluxes through the left and right boundaries.
pub fn godunov_step(u: &mut [f64], fluxes: &mut Vec<f64>, dt_over_dx: f64) -> (f64, f64) {
    let n = u.len();
    fluxes.clear();
    fluxes.push(godunov_flux(LEFT_VALUE, u[0]));
    for i in 1..n {
        fluxes.push(godunov_flux(u[i - 1], u[i]));
    }
    fluxes.push(godunov_flux(u[n - 1], RIGHT_VALUE));
    for i in 0..n {
        u[i] -= dt_over_dx * (fluxes[i + 1] - fluxes[i]);
    }
    (fluxes[0], fluxes[n])
}

/// Advances to `final_time` with `dt = cfl dx / max(|u|, inflow)`; the last
/// step is clipped to land on the final time.
pub fn solve_burgers(inflow_state: f64, cells: usize, final_time: f64, cfl: f64) -> Result<BurgersField> {
    if cells < 2 {
        return Err(Error::domain("Burgers solver needs at least 2 cells"));
    }
    if !(cfl > 0.0 && cfl <= 1.0) {
        return Err(Error::domain(format!("CFL number must lie in (0, 1], got {cfl}")));
    }
    let dx = LENGTH / cells as f64;
    let mut u = initial_state(inflow_state, cells);
    let mut fluxes = Vec::with_capacity(cells + 1);
    let mut t = 0.0;
    let mut steps = 0;
    while t < final_time * (1.0 - 1e-14) {
        let speed = u
            .iter()
            .fold(LEFT_VALUE.abs().max(RIGHT_VALUE.abs()), |m, v| m.max(v.abs()));
        let mut dt = cfl * dx / speed;
        if t + dt > final_time {
            dt = final_time - t;
        }
        if dt * speed > dx * (1.0 + 1e-12) {
            return Err(Error::numerical("CFL condition violated"));
        }
        godunov_step(&mut u, &mut fluxes, dt / dx);
        t += dt;
        steps += 1;
    }
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("Burgers solution is not finite"));
    }
    Ok(BurgersField { values: u, dx, steps })
}

/// Exact value of `10 * int u^2 dx` at time `t <= 1`, before the two
/// shocks collide. Used only as a test oracle.
#[cfg(test)]
pub(crate) fn exact_qoi(inflow_state: f64, t: f64) -> f64 {
    let u1 = inflow_state;
    let left_shock = 0.5 * (LEFT_VALUE + u1) * t;
    let right_shock = JUMP_AT + 0.5 * u1 * t;
    10.0 * (LEFT_VALUE * LEFT_VALUE * left_shock + u1 * u1 * (right_shock - left_shock))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coarsen(fine: &[f64]) -> Vec<f64> {
        fine.chunks(2).map(|c| 0.5 * (c[0] + c[1])).collect()
    }

    fn l1(a: &[f64], b: &[f64], dx: f64) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() * dx
    }

    #[test]
    fn flux_table() {
        for u in [-1.5, -0.2, 0.0, 0.7, 2.0] {
            assert_eq!(godunov_flux(u, u), 0.5 * u * u);
        }
        assert_eq!(godunov_flux(2.0, 0.0), 2.0);
        assert_eq!(godunov_flux(-1.0, 1.0), 0.0);
        assert_eq!(godunov_flux(1.0, 2.0), 0.5);
        assert_eq!(godunov_flux(-2.0, -1.0), 0.5);
        assert_eq!(godunov_flux(0.0, -1.0), 0.5);
        // stationary shock tie
        assert_eq!(godunov_flux(1.0, -1.0), 0.5);
    }

    #[test]
    fn mass_grows_at_inflow_rate() {
        let cells = 400;
        let t = 0.3;
        let f = solve_burgers(0.0, cells, t, 0.9).unwrap();
        let mass: f64 = f.values.iter().sum::<f64>() * f.dx;
        assert!((mass - 2.0 * t).abs() < 1e-6, "{mass}");
    }

    #[test]
    fn conservation_per_step() {
        let cells = 128;
        let dx = LENGTH / cells as f64;
        let mut u = initial_state(1.3, cells);
        let mut fl = Vec::new();
        for _ in 0..200 {
            let before: f64 = u.iter().sum::<f64>() * dx;
            let dt = 0.9 * dx / 2.0;
            let (left, right) = godunov_step(&mut u, &mut fl, dt / dx);
            let after: f64 = u.iter().sum::<f64>() * dx;
            assert!((after - before - (left - right) * dt).abs() < 1e-12);
        }
    }

    #[test]
    fn maximum_principle() {
        for k in 0..=20 {
            let u1 = 0.1 * k as f64;
            let f = solve_burgers(u1, 200, 0.5, 0.9).unwrap();
            assert!(f.values.iter().all(|&v| (0.0..=2.0).contains(&v)));
        }
    }

    /// Least-squares slope of log2(error) against refinement index; the
    /// shock position relative to the cell faces makes single ratios noisy.
    pub(crate) fn observed_order(errors: &[f64]) -> f64 {
        let n = errors.len() as f64;
        let xs: Vec<f64> = (0..errors.len()).map(|k| k as f64).collect();
        let ys: Vec<f64> = errors.iter().map(|e| e.log2()).collect();
        let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
        -sxy / sxx
    }

    #[test]
    fn first_order_self_convergence() {
        for u1 in [0.5, 1.0, 1.7] {
            let fields: Vec<_> = [128, 256, 512, 1024, 2048]
                .iter()
                .map(|&m| solve_burgers(u1, m, 0.5, 0.9).unwrap())
                .collect();
            let errors: Vec<f64> = fields
                .windows(2)
                .map(|w| l1(&w[0].values, &coarsen(&w[1].values), w[0].dx))
                .collect();
            let order = observed_order(&errors);
            assert!((0.6..=1.1).contains(&order), "U1={u1}: order {order}");
        }
    }

    #[test]
    fn exact_qoi_endpoints() {
        assert!((exact_qoi(0.0, 0.5) - 20.0).abs() < 1e-12);
        assert!((exact_qoi(2.0, 0.5) - 60.0).abs() < 1e-12);
    }
}
