//! Small linear-algebra kernels: Jacobi-preconditioned conjugate gradients on
//! a masked subspace and a dense Cholesky solve for local patches.

use alloc::vec;
use alloc::vec::Vec;

/// A symmetric linear map on `R^dim`.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
    fn diagonal(&self) -> Vec<f64>;
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOptions {
    /// Stop once `‖r‖ ≤ tolerance · ‖b‖`.
    pub tolerance: f64,
    pub max_iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOutcome {
    pub iterations: usize,
    /// Final `‖r‖ / ‖b‖` (0 when `b = 0`).
    pub residual: f64,
    pub converged: bool,
}

/// Minimizes `½ xᵀAx` over the entries with `free[i]`, holding the others at
/// their current values in `x`. Free entries of `x` are the starting guess.
///
/// Solves `A_ff x_f = −A_fp x_p` with Jacobi-preconditioned CG. The energy
/// never increases from the starting guess.
pub fn masked_pcg<A: LinearOperator>(op: &A, free: &[bool], x: &mut [f64], opts: CgOptions) -> CgOutcome {
    let n = op.dim();
    debug_assert_eq!(free.len(), n);
    debug_assert_eq!(x.len(), n);
    let mut tmp = vec![0.0; n];

    // right-hand side b = −(A x_p) restricted to free entries
    let mut xp: Vec<f64> = x.iter().zip(free).map(|(&v, &f)| if f { 0.0 } else { v }).collect();
    op.apply(&xp, &mut tmp);
    let bnorm = libm::sqrt(tmp.iter().zip(free).filter(|(_, &f)| f).map(|(v, _)| v * v).sum::<f64>());
    if bnorm == 0.0 {
        for (v, &f) in x.iter_mut().zip(free) {
            if f {
                *v = 0.0;
            }
        }
        return CgOutcome { iterations: 0, residual: 0.0, converged: true };
    }

    let inv_diag: Vec<f64> =
        op.diagonal().iter().zip(free).map(|(&d, &f)| if f && d > 0.0 { 1.0 / d } else { 0.0 }).collect();

    op.apply(x, &mut tmp);
    let mut r: Vec<f64> = tmp.iter().zip(free).map(|(&v, &f)| if f { -v } else { 0.0 }).collect();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, b)| a * b).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut residual = norm(&r) / bnorm;
    let mut iterations = 0;
    let ap = &mut xp;
    while residual > opts.tolerance && iterations < opts.max_iterations {
        op.apply(&p, ap);
        for (v, &f) in ap.iter_mut().zip(free) {
            if !f {
                *v = 0.0;
            }
        }
        let pap = dot(&p, ap);
        if !(pap > 0.0) {
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        iterations += 1;
        residual = norm(&r) / bnorm;
    }
    CgOutcome { iterations, residual, converged: residual <= opts.tolerance }
}

/// Solves `A x = b` in place for a dense symmetric positive-definite `A`
/// (row-major, `n × n`). `b` is overwritten by `x`. Returns `false` if a
/// pivot is not positive relative to the matrix scale.
pub fn cholesky_solve(a: &mut [f64], n: usize, b: &mut [f64]) -> bool {
    let scale = (0..n).map(|i| a[i * n + i].abs()).fold(0.0, f64::max);
    let floor = scale * 1e-14;
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > floor) {
            return false;
        }
        let d = libm::sqrt(d);
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
    }
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= a[i * n + k] * b[k];
        }
        b[i] = s / a[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= a[k * n + i] * b[k];
        }
        b[i] = s / a[i * n + i];
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    /// 1-D Dirichlet Laplacian `tridiag(-1, 2, -1)`.
    struct Laplace1d(usize);

    impl LinearOperator for Laplace1d {
        fn dim(&self) -> usize {
            self.0
        }
        fn apply(&self, x: &[f64], y: &mut [f64]) {
            let n = self.0;
            for i in 0..n {
                let l = if i > 0 { x[i - 1] } else { 0.0 };
                let r = if i + 1 < n { x[i + 1] } else { 0.0 };
                y[i] = 2.0 * x[i] - l - r;
            }
        }
        fn diagonal(&self) -> Vec<f64> {
            vec![2.0; self.0]
        }
    }

    #[test]
    fn pcg_recovers_linear_profile() {
        // pin both ends; the discrete harmonic interpolant is linear
        let n = 50;
        let mut x = vec![0.0; n];
        x[0] = 1.0;
        x[n - 1] = 3.0;
        let mut free = vec![true; n];
        free[0] = false;
        free[n - 1] = false;
        let out = masked_pcg(&Laplace1d(n), &free, &mut x, CgOptions { tolerance: 1e-12, max_iterations: 1000 });
        assert!(out.converged);
        for (i, v) in x.iter().enumerate() {
            let exact = 1.0 + 2.0 * i as f64 / (n - 1) as f64;
            assert!((v - exact).abs() < 1e-10);
        }
    }

    #[test]
    fn pcg_zero_rhs() {
        let mut x = vec![5.0; 10];
        x[0] = 0.0;
        let mut free = vec![true; 10];
        free[0] = false;
        let out = masked_pcg(&Laplace1d(10), &free, &mut x, CgOptions { tolerance: 1e-8, max_iterations: 1 });
        assert!(out.converged);
        assert!(x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn pcg_reports_budget_exhaustion() {
        let n = 200;
        let mut x = vec![0.0; n];
        x[0] = 1.0;
        let mut free = vec![true; n];
        free[0] = false;
        let out = masked_pcg(&Laplace1d(n), &free, &mut x, CgOptions { tolerance: 1e-14, max_iterations: 3 });
        assert!(!out.converged);
        assert_eq!(out.iterations, 3);
        assert!(out.residual > 1e-14);
    }

    #[test]
    fn cholesky_small_system() {
        let mut a = vec![4.0, 2.0, 0.0, 2.0, 5.0, 1.0, 0.0, 1.0, 3.0];
        let x = [1.0, -2.0, 0.5];
        let mut b = vec![4.0 * 1.0 - 4.0, 2.0 - 10.0 + 0.5, -2.0 + 1.5];
        assert!(cholesky_solve(&mut a, 3, &mut b));
        for i in 0..3 {
            assert!((b[i] - x[i]).abs() < 1e-14);
        }
        let mut singular = vec![1.0, 1.0, 1.0, 1.0];
        let mut rhs = vec![1.0, 1.0];
        assert!(!cholesky_solve(&mut singular, 2, &mut rhs));
    }
}
