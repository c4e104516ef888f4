//! Dense box-constrained quadratic programming by a primal active-set method.
//!
//! Solves `min 0.5 x'Hx + g'x  s.t.  lo <= x <= hi` for a symmetric positive
//! (semi-)definite `H`. Bounds are handled as the working set, so components
//! at a bound are set to the bound value exactly rather than clipped after
//! the fact. The Gauss-Newton Hessians produced by the condensed optimal
//! control problem are strictly positive definite (the input penalty adds to
//! every diagonal), but a small escalating regularization covers
//! semi-definite corner cases.

use nalgebra::{Cholesky, DMatrix, DVector};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QpError {
    #[error("active-set iteration limit reached")]
    MaxIterations,
    #[error("Hessian factorization failed even with regularization")]
    NumericalBreakdown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BoundState {
    Free,
    Lower,
    Upper,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: DVector<f64>,
    /// Infinity norm of the projected-gradient KKT residual.
    pub kkt_residual: f64,
    pub iterations: usize,
}

pub fn solve_box_qp(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
    warm_start: Option<&DVector<f64>>,
) -> Result<QpSolution, QpError> {
    let n = g.len();
    assert_eq!(h.nrows(), n);
    assert_eq!(h.ncols(), n);
    assert_eq!(lo.len(), n);
    assert_eq!(hi.len(), n);

    // Box feasibility is trivially restored, so an infeasible warm start is
    // just clamped.
    let mut x = warm_start.cloned().unwrap_or_else(|| DVector::zeros(n));
    let mut status = vec![BoundState::Free; n];
    for i in 0..n {
        debug_assert!(lo[i] < hi[i]);
        if x[i] <= lo[i] {
            x[i] = lo[i];
            status[i] = BoundState::Lower;
        } else if x[i] >= hi[i] {
            x[i] = hi[i];
            status[i] = BoundState::Upper;
        }
    }

    // The dual tolerance must stay far below the 1e-6 KKT target even for
    // large gradients; gradient noise on ill-conditioned condensed Hessians
    // can exceed it, so re-releases are capped per variable instead of
    // loosening the tolerance. The working-set minimizer is detected by the
    // free-coordinate gradient, not the step size: one Newton step kills
    // the gradient to backward error, while step size cannot separate
    // noise from signal on stiff coordinates.
    let scale = 1.0 + g.amax();
    let dual_tol = 1e-10 * scale;
    let grad_tol = 1e-9 * scale;
    let max_iters = 40 + 20 * n;
    let mut releases = vec![0u8; n];

    let mut iterations = 0;
    loop {
        iterations += 1;
        if iterations > max_iters {
            return Err(QpError::MaxIterations);
        }

        let grad = h * &x + g;
        let free: Vec<usize> = (0..n)
            .filter(|&i| status[i] == BoundState::Free)
            .collect();

        // Step to the minimizer over the current working set.
        let mut p = DVector::zeros(n);
        let mut grad_free = 0.0f64;
        if !free.is_empty() {
            let nf = free.len();
            let mut h_ff = DMatrix::zeros(nf, nf);
            let mut rhs = DVector::zeros(nf);
            for (a, &i) in free.iter().enumerate() {
                rhs[a] = -grad[i];
                grad_free = grad_free.max(grad[i].abs());
                for (b, &j) in free.iter().enumerate() {
                    h_ff[(a, b)] = h[(i, j)];
                }
            }
            let sol = factor_solve(h_ff, rhs)?;
            for (a, &i) in free.iter().enumerate() {
                p[i] = sol[a];
            }
        }

        if grad_free <= grad_tol {
            // At the working-set minimizer: check bound multipliers and
            // release the worst violator. A variable bouncing between
            // release and re-blocking is gradient noise, not a descent
            // direction; it stops being a release candidate after two
            // releases.
            let mut worst: Option<(usize, f64)> = None;
            for i in 0..n {
                if releases[i] >= 2 {
                    continue;
                }
                let viol = match status[i] {
                    BoundState::Lower => -grad[i],
                    BoundState::Upper => grad[i],
                    BoundState::Free => continue,
                };
                if viol > dual_tol && worst.is_none_or(|(_, w)| viol > w) {
                    worst = Some((i, viol));
                }
            }
            match worst {
                Some((i, _)) => {
                    status[i] = BoundState::Free;
                    releases[i] += 1;
                    continue;
                }
                None => {
                    let kkt = projected_gradient_norm(&x, &grad, lo, hi);
                    return Ok(QpSolution {
                        x,
                        kkt_residual: kkt,
                        iterations,
                    });
                }
            }
        }

        // Ratio test against the bounds along p.
        let mut alpha = 1.0f64;
        let mut blocker: Option<(usize, BoundState)> = None;
        for &i in &free {
            if p[i] > 0.0 {
                let a = (hi[i] - x[i]) / p[i];
                if a < alpha {
                    alpha = a;
                    blocker = Some((i, BoundState::Upper));
                }
            } else if p[i] < 0.0 {
                let a = (lo[i] - x[i]) / p[i];
                if a < alpha {
                    alpha = a;
                    blocker = Some((i, BoundState::Lower));
                }
            }
        }
        alpha = alpha.max(0.0);
        for &i in &free {
            x[i] += alpha * p[i];
        }
        if let Some((i, side)) = blocker {
            // Land exactly on the bound.
            x[i] = match side {
                BoundState::Upper => hi[i],
                BoundState::Lower => lo[i],
                BoundState::Free => unreachable!(),
            };
            status[i] = side;
        }
    }
}

fn factor_solve(mut h_ff: DMatrix<f64>, rhs: DVector<f64>) -> Result<DVector<f64>, QpError> {
    if let Some(chol) = Cholesky::new(h_ff.clone()) {
        return Ok(chol.solve(&rhs));
    }
    let n = h_ff.nrows();
    let base = h_ff.trace().abs().max(1.0) / n as f64;
    let mut reg = 1e-12 * base;
    for _ in 0..8 {
        let mut h_reg = h_ff.clone();
        for i in 0..n {
            h_reg[(i, i)] += reg;
        }
        if let Some(chol) = Cholesky::new(h_reg) {
            return Ok(chol.solve(&rhs));
        }
        reg *= 100.0;
    }
    // Keep the borrow checker honest about the original matrix being moved.
    h_ff.fill(0.0);
    Err(QpError::NumericalBreakdown)
}

/// ||x - clamp(x - grad, lo, hi)||_inf: zero exactly at a KKT point.
pub fn projected_gradient_norm(
    x: &DVector<f64>,
    grad: &DVector<f64>,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let projected = (x[i] - grad[i]).clamp(lo[i], hi[i]);
        worst = worst.max((x[i] - projected).abs());
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unbounded(n: usize) -> (DVector<f64>, DVector<f64>) {
        (DVector::repeat(n, -1e12), DVector::repeat(n, 1e12))
    }

    #[test]
    fn unconstrained_two_variable() {
        // min 0.5 x'Hx + g'x with H = [[2,0],[0,4]], g = (-2, -8):
        // minimizer (1, 2).
        let h = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 4.0]);
        let g = DVector::from_row_slice(&[-2.0, -8.0]);
        let (lo, hi) = unbounded(2);
        let sol = solve_box_qp(&h, &g, &lo, &hi, None).unwrap();
        assert_relative_eq!(sol.x[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(sol.x[1], 2.0, epsilon = 1e-12);
        assert!(sol.kkt_residual < 1e-10);
    }

    #[test]
    fn active_upper_bound() {
        let h = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 4.0]);
        let g = DVector::from_row_slice(&[-2.0, -8.0]);
        let lo = DVector::from_row_slice(&[0.0, 0.0]);
        let hi = DVector::from_row_slice(&[1.0, 1.5]);
        let sol = solve_box_qp(&h, &g, &lo, &hi, None).unwrap();
        assert_eq!(sol.x[1], 1.5); // exactly on the bound
        assert_relative_eq!(sol.x[0], 1.0, epsilon = 1e-12);
    }

    /// Enumerate all lower/free/upper combinations and pick the best
    /// KKT-consistent candidate. Brute-force oracle for small problems.
    pub(crate) fn brute_force_box_qp(
        h: &DMatrix<f64>,
        g: &DVector<f64>,
        lo: &DVector<f64>,
        hi: &DVector<f64>,
    ) -> DVector<f64> {
        let n = g.len();
        let mut best: Option<(f64, DVector<f64>)> = None;
        let combos = 3usize.pow(n as u32);
        'combo: for c in 0..combos {
            let mut kind = Vec::with_capacity(n);
            let mut rem = c;
            for _ in 0..n {
                kind.push(rem % 3);
                rem /= 3;
            }
            let free: Vec<usize> = (0..n).filter(|&i| kind[i] == 0).collect();
            let mut x = DVector::zeros(n);
            for i in 0..n {
                x[i] = match kind[i] {
                    1 => lo[i],
                    2 => hi[i],
                    _ => 0.0,
                };
            }
            if !free.is_empty() {
                let nf = free.len();
                let mut h_ff = DMatrix::zeros(nf, nf);
                let mut rhs = DVector::zeros(nf);
                for (a, &i) in free.iter().enumerate() {
                    rhs[a] = -g[i];
                    for j in 0..n {
                        if kind[j] != 0 {
                            rhs[a] -= h[(i, j)] * x[j];
                        }
                    }
                    for (b, &j) in free.iter().enumerate() {
                        h_ff[(a, b)] = h[(i, j)];
                    }
                }
                match Cholesky::new(h_ff) {
                    Some(chol) => {
                        let sol = chol.solve(&rhs);
                        for (a, &i) in free.iter().enumerate() {
                            x[i] = sol[a];
                        }
                    }
                    None => continue 'combo,
                }
            }
            // Primal feasibility.
            for &i in &free {
                if x[i] < lo[i] - 1e-9 || x[i] > hi[i] + 1e-9 {
                    continue 'combo;
                }
            }
            // Dual feasibility.
            let grad = h * &x + g;
            for i in 0..n {
                match kind[i] {
                    1 if grad[i] < -1e-9 => continue 'combo,
                    2 if grad[i] > 1e-9 => continue 'combo,
                    _ => {}
                }
            }
            let obj = 0.5 * (h * &x).dot(&x) + g.dot(&x);
            if best.as_ref().is_none_or(|(b, _)| obj < *b) {
                best = Some((obj, x));
            }
        }
        best.expect("brute force found no KKT candidate").1
    }

    #[test]
    fn random_two_variable_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..200 {
            let a = DMatrix::from_fn(2, 2, |_, _| rng.random::<f64>() * 2.0 - 1.0);
            let h = &a * a.transpose() + DMatrix::identity(2, 2) * 0.3;
            let g = DVector::from_fn(2, |_, _| rng.random::<f64>() * 4.0 - 2.0);
            let lo = DVector::from_row_slice(&[0.0, 0.0]);
            let hi = DVector::from_row_slice(&[1.0, 1.0]);
            let sol = solve_box_qp(&h, &g, &lo, &hi, None).unwrap();
            let oracle = brute_force_box_qp(&h, &g, &lo, &hi);
            let diff = (&sol.x - &oracle).amax();
            assert!(diff < 1e-10, "solver/oracle mismatch {diff}: {:?} vs {:?}", sol.x, oracle);
        }
    }

    #[test]
    fn infeasible_warm_start_matches_cold_start() {
        let h = DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 2.0]);
        let g = DVector::from_row_slice(&[-4.0, 1.0]);
        let lo = DVector::from_row_slice(&[0.0, 0.0]);
        let hi = DVector::from_row_slice(&[1.0, 1.0]);
        let cold = solve_box_qp(&h, &g, &lo, &hi, None).unwrap();
        let warm_point = DVector::from_row_slice(&[7.0, -3.0]);
        let warm = solve_box_qp(&h, &g, &lo, &hi, Some(&warm_point)).unwrap();
        assert!((cold.x - warm.x).amax() < 1e-12);
    }

    #[test]
    fn semidefinite_hessian_is_regularized() {
        // Rank-one Hessian; solution along the null direction is pinned by
        // the bounds.
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let g = DVector::from_row_slice(&[-1.0, -1.0]);
        let lo = DVector::from_row_slice(&[0.0, 0.0]);
        let hi = DVector::from_row_slice(&[0.4, 0.4]);
        let sol = solve_box_qp(&h, &g, &lo, &hi, None).unwrap();
        assert_eq!(sol.x[0], 0.4);
        assert_eq!(sol.x[1], 0.4);
    }
}
