use super::sparse::CsrMatrix;
use crate::error::{Error, Result};
use crate::scalar::{dot, norm2, Real};

#[derive(Debug, Clone)]
pub struct CgSolution<T> {
    pub x: Vec<T>,
    pub iterations: usize,
    /// ‖b − Ax‖ / ‖b‖ recomputed from the returned `x`.
    pub relative_residual: T,
}

/// Jacobi-preconditioned conjugate gradients for a symmetric positive definite matrix.
pub fn solve_spd<T: Real>(a: &CsrMatrix<T>, b: &[T], tol: T, max_iter: usize) -> Result<CgSolution<T>> {
    solve_spd_from(a, b, None, tol, max_iter)
}

/// As [`solve_spd`], optionally starting from `x0`.
pub fn solve_spd_from<T: Real>(
    a: &CsrMatrix<T>,
    b: &[T],
    x0: Option<&[T]>,
    tol: T,
    max_iter: usize,
) -> Result<CgSolution<T>> {
    let n = a.dim();
    if b.len() != n || x0.is_some_and(|x| x.len() != n) {
        return Err(Error::ShapeMismatch(format!("system of size {n}, rhs of size {}", b.len())));
    }
    let bnorm = norm2(b);
    if bnorm == T::zero() {
        return Ok(CgSolution {
            x: vec![T::zero(); n],
            iterations: 0,
            relative_residual: T::zero(),
        });
    }
    let diag = a.diagonal();
    if let Some(i) = diag.iter().position(|&d| !(d > T::zero())) {
        return Err(Error::NotSpd(format!("diagonal entry {i} is {}", diag[i])));
    }
    let inv_diag: Vec<T> = diag.iter().map(|&d| T::one() / d).collect();

    let mut x = x0.map_or_else(|| vec![T::zero(); n], <[T]>::to_vec);
    let mut r = b.to_vec();
    if x0.is_some() {
        let ax = a.matvec(&x);
        for (ri, axi) in r.iter_mut().zip(&ax) {
            *ri -= *axi;
        }
    }
    let mut z: Vec<T> = r.iter().zip(&inv_diag).map(|(&ri, &d)| ri * d).collect();
    let mut p = z.clone();
    let mut ap = vec![T::zero(); n];
    let mut rz = dot(&r, &z);
    let target = tol * bnorm;

    let mut iterations = 0;
    let mut rnorm = norm2(&r);
    while rnorm > target {
        if iterations == max_iter {
            let res = true_residual(a, b, &x) / bnorm;
            return Err(Error::NoConvergence {
                context: "conjugate gradients".into(),
                iterations,
                residual: res.as_f64(),
            });
        }
        a.matvec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > T::zero()) {
            return Err(Error::NotSpd(format!("p^T A p = {pap} at iteration {iterations}")));
        }
        let step = rz / pap;
        let (mut rz_next, mut rr) = (T::zero(), T::zero());
        for ((((xi, ri), zi), &pi), (&api, &di)) in
            x.iter_mut().zip(r.iter_mut()).zip(z.iter_mut()).zip(&p).zip(ap.iter().zip(&inv_diag))
        {
            *xi += step * pi;
            *ri -= step * api;
            *zi = *ri * di;
            rz_next += *ri * *zi;
            rr += *ri * *ri;
        }
        let beta = rz_next / rz;
        rz = rz_next;
        rnorm = rr.sqrt();
        for (pi, &zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
        iterations += 1;
    }
    let relative_residual = true_residual(a, b, &x) / bnorm;
    Ok(CgSolution {
        x,
        iterations,
        relative_residual,
    })
}

fn true_residual<T: Real>(a: &CsrMatrix<T>, b: &[T], x: &[T]) -> T {
    let ax = a.matvec(x);
    b.iter()
        .zip(&ax)
        .map(|(&bi, &yi)| (bi - yi) * (bi - yi))
        .sum::<T>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_in_one_iteration() {
        let a = CsrMatrix::from_dense(&[
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ])
        .unwrap();
        let b = [1.0, -2.0, 3.5];
        let sol = solve_spd(&a, &b, 1e-14, 10).unwrap();
        assert_eq!(sol.iterations, 1);
        assert_eq!(sol.x, b.to_vec());
    }

    #[test]
    fn two_by_two_matches_inverse() {
        // [[4,1],[1,3]]^{-1} (1,2) = (1/11, 7/11)
        let a = CsrMatrix::<f64>::from_dense(&[vec![4.0, 1.0], vec![1.0, 3.0]]).unwrap();
        let sol = solve_spd(&a, &[1.0, 2.0], 1e-14, 10).unwrap();
        assert!((sol.x[0] - 1.0 / 11.0).abs() < 1e-14);
        assert!((sol.x[1] - 7.0 / 11.0).abs() < 1e-14);
        assert!(sol.relative_residual <= 1e-14);
    }

    #[test]
    fn indefinite_matrix_detected() {
        // Eigenvalues 3 and -1.
        let a = CsrMatrix::from_dense(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(matches!(solve_spd(&a, &[1.0, -1.0], 1e-12, 10), Err(Error::NotSpd(_))));
    }

    #[test]
    fn exhausted_budget_reports_residual() {
        let n: usize = 50;
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| match i.abs_diff(j) {
                        0 => 2.0,
                        1 => -1.0,
                        _ => 0.0,
                    })
                    .collect()
            })
            .collect();
        let a = CsrMatrix::from_dense(&rows).unwrap();
        let b = vec![1.0; n];
        match solve_spd(&a, &b, 1e-14, 3) {
            Err(Error::NoConvergence { iterations, residual, .. }) => {
                assert_eq!(iterations, 3);
                assert!(residual > 1e-14);
            }
            other => panic!("expected no-convergence, got {other:?}"),
        }
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let a = CsrMatrix::from_dense(&[vec![4.0, 1.0], vec![1.0, 3.0]]).unwrap();
        let sol = solve_spd(&a, &[0.0, 0.0], 1e-12, 10).unwrap();
        assert_eq!(sol.x, vec![0.0, 0.0]);
    }
}
