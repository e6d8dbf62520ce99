//! Small dense helpers shared by the error terms and the solver.

use nalgebra::{DMatrix, DVector, SMatrix};

/// Inverse of a symmetric matrix with eigenvalues floored at `floor`.
/// Returns the inverse and the number of eigenvalues that were floored.
pub fn floored_inverse(m: &DMatrix<f64>, floor: f64) -> (DMatrix<f64>, usize) {
    let sym = symmetrized(m);
    let eig = sym.symmetric_eigen();
    let mut floored = 0;
    let inv_vals = eig.eigenvalues.map(|v| {
        if v < floor {
            floored += 1;
            1.0 / floor
        } else {
            1.0 / v
        }
    });
    let q = &eig.eigenvectors;
    let inv = q * DMatrix::from_diagonal(&inv_vals) * q.transpose();
    (symmetrized(&inv), floored)
}

pub fn floored_inverse_static<const N: usize>(
    m: &SMatrix<f64, N, N>,
    floor: f64,
) -> SMatrix<f64, N, N> {
    let d = DMatrix::from_column_slice(N, N, m.as_slice());
    let (inv, _) = floored_inverse(&d, floor);
    SMatrix::from_column_slice(inv.as_slice())
}

/// A solution of `M x = b` for symmetric PSD `M` and `b` in its range, by
/// Cholesky with diagonal pivoting. Pivots below `rel_tol` times the largest
/// diagonal end the factorization; the remaining unknowns are set to zero.
pub fn solve_semidefinite(m: &DMatrix<f64>, b: &DVector<f64>, rel_tol: f64) -> DVector<f64> {
    let n = m.nrows();
    // Column-major, lower triangle only; `at(i, j)` with `i ≥ j`.
    let mut a = symmetrized(m).as_slice().to_vec();
    let at = |i: usize, j: usize| i + j * n;
    let mut perm: Vec<usize> = (0..n).collect();
    let cut = rel_tol * (0..n).map(|i| a[at(i, i)]).fold(0.0, f64::max);
    let mut rank = 0;
    while rank < n {
        let k = rank;
        let p = (k..n).max_by(|&i, &j| a[at(i, i)].total_cmp(&a[at(j, j)])).unwrap();
        if a[at(p, p)] <= cut {
            break;
        }
        if p != k {
            perm.swap(k, p);
            for j in 0..k {
                a.swap(at(k, j), at(p, j));
            }
            a.swap(at(k, k), at(p, p));
            for i in k + 1..p {
                a.swap(at(i, k), at(p, i));
            }
            for i in p + 1..n {
                a.swap(at(i, k), at(i, p));
            }
        }
        let d = a[at(k, k)].sqrt();
        a[at(k, k)] = d;
        let (head, tail) = a.split_at_mut((k + 1) * n);
        let col_k = &mut head[k * n..];
        col_k[k + 1..].iter_mut().for_each(|v| *v /= d);
        for j in k + 1..n {
            let ljk = col_k[j];
            let col_j = &mut tail[(j - k - 1) * n..(j - k) * n];
            for (x, l) in col_j[j..].iter_mut().zip(&col_k[j..]) {
                *x -= l * ljk;
            }
        }
        rank += 1;
    }
    let l = DMatrix::from_column_slice(n, n, &a).view((0, 0), (rank, rank)).lower_triangle();
    let y = DVector::from_fn(rank, |i, _| b[perm[i]]);
    let z = l.solve_lower_triangular(&y).expect("positive pivots");
    let x1 = l.tr_solve_lower_triangular(&z).expect("positive pivots");
    let mut x = DVector::zeros(n);
    for i in 0..rank {
        x[perm[i]] = x1[i];
    }
    x
}

pub fn symmetrized(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    symmetrized(m)
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floored_inverse_of_spd_is_inverse() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let (inv, n) = floored_inverse(&m, 1e-12);
        assert_eq!(n, 0);
        assert!((&m * inv - DMatrix::identity(2, 2)).norm() < 1e-14);
    }

    #[test]
    fn semidefinite_solve_in_range() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let b = nalgebra::DVector::from_vec(vec![3.0, 3.0]);
        let x = solve_semidefinite(&m, &b, 1e-12);
        assert!((&m * &x - b).amax() < 1e-12);
    }

    #[test]
    fn semidefinite_solve_with_pivoting() {
        // Rank 2 in 4 unknowns, with the large pivots away from the front.
        let v = DMatrix::from_row_slice(4, 2, &[0.1, 0.0, 1.0, 2.0, -3.0, 0.5, 0.2, 4.0]);
        let m = &v * v.transpose();
        let b = &m * DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0]);
        let x = solve_semidefinite(&m, &b, 1e-12);
        assert!((&m * &x - b).amax() < 1e-10);
    }

    #[test]
    fn singular_direction_is_floored() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let (inv, n) = floored_inverse(&m, 1e-6);
        assert_eq!(n, 1);
        assert!((inv[(1, 1)] - 1e6).abs() < 1e-6);
    }
}
