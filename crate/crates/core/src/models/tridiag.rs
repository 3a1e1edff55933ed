use crate::error::{Error, Result};

/// Solves a tridiagonal system with the Thomas algorithm.
///
/// `lower[i]` multiplies `x[i]` in row `i + 1` and `upper[i]` multiplies
/// `x[i + 1]` in row `i`, so both off-diagonals have length `n - 1`.
pub fn thomas_solve(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    if lower.len() + 1 != n || upper.len() + 1 != n || rhs.len() != n {
        return Err(Error::domain("tridiagonal system has inconsistent dimensions"));
    }
    let mut c_prime = vec![0.0; n];
    let mut x = vec![0.0; n];
    let mut pivot = diag[0];
    if pivot == 0.0 {
        return Err(Error::numerical("zero pivot in Thomas algorithm"));
    }
    if n > 1 {
        c_prime[0] = upper[0] / pivot;
    }
    x[0] = rhs[0] / pivot;
    for i in 1..n {
        pivot = diag[i] - lower[i - 1] * c_prime[i - 1];
        if pivot == 0.0 || !pivot.is_finite() {
            return Err(Error::numerical(format!("zero pivot in Thomas algorithm at row {i}")));
        }
        if i + 1 < n {
            c_prime[i] = upper[i] / pivot;
        }
        x[i] = (rhs[i] - lower[i - 1] * x[i - 1]) / pivot;
    }
    for i in (0..n - 1).rev() {
        x[i] -= c_prime[i] * x[i + 1];
    }
    Ok(x)
}

/// Constant-coefficient variant used by the Crank-Nicolson stepper. The
/// forward sweep factors are precomputed once per step size.
#[derive(Debug, Clone)]
pub(crate) struct ToeplitzTridiag {
    sub: f64,
    c_prime: Vec<f64>,
    inv_pivot: Vec<f64>,
}

impl ToeplitzTridiag {
    pub(crate) fn new(n: usize, sub: f64, diag: f64, sup: f64) -> Result<Self> {
        let mut c_prime = vec![0.0; n];
        let mut inv_pivot = vec![0.0; n];
        let mut prev = 0.0;
        for i in 0..n {
            let pivot = diag - if i > 0 { sub * prev } else { 0.0 };
            if pivot == 0.0 || !pivot.is_finite() {
                return Err(Error::numerical(format!("zero pivot in Thomas algorithm at row {i}")));
            }
            inv_pivot[i] = 1.0 / pivot;
            c_prime[i] = sup / pivot;
            prev = c_prime[i];
        }
        Ok(Self { sub, c_prime, inv_pivot })
    }

    /// Solves in place: `x` holds the right-hand side on entry.
    pub(crate) fn solve_in_place(&self, x: &mut [f64]) {
        let n = x.len();
        if n == 0 {
            return;
        }
        x[0] *= self.inv_pivot[0];
        for i in 1..n {
            x[i] = (x[i] - self.sub * x[i - 1]) * self.inv_pivot[i];
        }
        for i in (0..n - 1).rev() {
            x[i] -= self.c_prime[i] * x[i + 1];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_returns_rhs() {
        let rhs = vec![1.0, -2.0, 3.5, 0.25];
        let x = thomas_solve(&[0.0; 3], &[1.0; 4], &[0.0; 3], &rhs).unwrap();
        assert_eq!(x, rhs);
    }

    #[test]
    fn two_by_two() {
        let x = thomas_solve(&[1.0], &[2.0, 2.0], &[1.0], &[3.0, 3.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_pivot_is_reported() {
        assert!(matches!(
            thomas_solve(&[1.0], &[0.0, 1.0], &[1.0], &[1.0, 1.0]),
            Err(Error::Numerical(_))
        ));
        assert!(thomas_solve(&[1.0, 1.0], &[1.0; 2], &[1.0], &[1.0; 2]).is_err());
    }

    #[test]
    fn toeplitz_matches_general() {
        let n = 17;
        let rhs: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).sin()).collect();
        let general = thomas_solve(&vec![-0.4; n - 1], &vec![1.8; n], &vec![-0.4; n - 1], &rhs).unwrap();
        let t = ToeplitzTridiag::new(n, -0.4, 1.8, -0.4).unwrap();
        let mut x = rhs.clone();
        t.solve_in_place(&mut x);
        for (a, b) in x.iter().zip(&general) {
            assert!((a - b).abs() < 1e-14);
        }
    }
}
