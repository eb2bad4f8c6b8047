//! Dense linear algebra used by the geometry, probe and mediation code:
//! Householder least squares with collinearity detection, Cholesky solves,
//! and symmetric eigenvalues (tridiagonalization + implicit QL).

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::scalar::{compensated_sum, Scalar};

pub fn dot<T: Scalar>(a: ArrayView1<T>, b: ArrayView1<T>) -> T {
    a.iter().zip(b.iter()).map(|(&x, &y)| x * y).sum()
}

pub fn norm<T: Scalar>(a: ArrayView1<T>) -> T {
    dot(a, a).sqrt()
}

/// Column means with compensated accumulation.
pub fn column_means<T: Scalar>(x: ArrayView2<T>) -> Array1<T> {
    let n = T::from_usize_lossy(x.nrows());
    x.axis_iter(Axis(1))
        .map(|col| compensated_sum(col.iter().copied()) / n)
        .collect()
}

/// Relative threshold below which a Householder pivot marks its column as
/// lying in the span of the preceding columns.
fn rank_tolerance<T: Scalar>() -> T {
    T::epsilon().sqrt() * T::lit(1e-2)
}

/// Result of an ordinary least-squares fit.
#[derive(Debug, Clone)]
pub struct LeastSquares<T: Scalar> {
    pub coefficients: Array1<T>,
    pub residuals: Array1<T>,
    /// Upper-triangular factor of the design (k × k).
    pub r: Array2<T>,
}

impl<T: Scalar> LeastSquares<T> {
    pub fn residual_sum_of_squares(&self) -> T {
        compensated_sum(self.residuals.iter().map(|&r| r * r))
    }

    /// Diagonal of (XᵀX)⁻¹, from R⁻¹R⁻ᵀ.
    pub fn inverse_gram_diagonal(&self) -> Array1<T> {
        let rinv = upper_triangular_inverse(self.r.view());
        rinv.axis_iter(Axis(0))
            .map(|row| row.iter().map(|&v| v * v).sum())
            .collect()
    }
}

/// Least squares `min ‖Xb − y‖` by Householder QR. Any column whose pivot
/// collapses relative to its own norm is reported by name.
pub fn least_squares<T: Scalar>(
    design: ArrayView2<T>,
    names: &[String],
    y: ArrayView1<T>,
) -> Result<LeastSquares<T>> {
    let (n, k) = design.dim();
    if y.len() != n {
        return Err(Error::LengthMismatch {
            what: "response".into(),
            expected: n,
            actual: y.len(),
        });
    }
    if names.len() != k {
        return Err(Error::LengthMismatch {
            what: "column names".into(),
            expected: k,
            actual: names.len(),
        });
    }
    if k > n {
        return Err(Error::Collinear {
            columns: names[n..].to_vec(),
        });
    }
    let mut a = design.to_owned();
    let mut b = y.to_owned();
    let col_norms: Vec<T> = design.axis_iter(Axis(1)).map(norm).collect();
    let tol = rank_tolerance::<T>();
    let mut collinear = Vec::new();

    let mut row = 0;
    for j in 0..k {
        let alpha = norm(a.slice(s![row.., j]));
        if col_norms[j] == T::zero() || alpha <= tol * col_norms[j] {
            collinear.push(names[j].clone());
            continue;
        }
        let sign = if a[[row, j]] >= T::zero() {
            T::one()
        } else {
            -T::one()
        };
        let mut v = a.slice(s![row.., j]).to_owned();
        v[0] += sign * alpha;
        let vnorm2 = dot(v.view(), v.view());
        // reflect the trailing columns and the response
        for c in j..k {
            let proj = dot(v.view(), a.slice(s![row.., c])) * T::lit(2.0) / vnorm2;
            for (i, &vi) in v.iter().enumerate() {
                a[[row + i, c]] -= proj * vi;
            }
        }
        let proj = dot(v.view(), b.slice(s![row..])) * T::lit(2.0) / vnorm2;
        for (i, &vi) in v.iter().enumerate() {
            b[row + i] -= proj * vi;
        }
        row += 1;
    }
    if !collinear.is_empty() {
        return Err(Error::Collinear { columns: collinear });
    }

    let r = a.slice(s![..k, ..k]).to_owned();
    let mut coef = Array1::zeros(k);
    for i in (0..k).rev() {
        let mut acc = b[i];
        for c in (i + 1)..k {
            acc -= r[[i, c]] * coef[c];
        }
        coef[i] = acc / r[[i, i]];
    }
    let fitted = design.dot(&coef);
    let residuals = &y - &fitted;
    Ok(LeastSquares {
        coefficients: coef,
        residuals,
        r: upper_triangular(r),
    })
}

fn upper_triangular<T: Scalar>(mut r: Array2<T>) -> Array2<T> {
    let k = r.nrows();
    for i in 0..k {
        for j in 0..i {
            r[[i, j]] = T::zero();
        }
    }
    r
}

fn upper_triangular_inverse<T: Scalar>(r: ArrayView2<T>) -> Array2<T> {
    let k = r.nrows();
    let mut inv = Array2::zeros((k, k));
    for col in 0..k {
        for i in (0..=col).rev() {
            let mut acc = if i == col { T::one() } else { T::zero() };
            for c in (i + 1)..=col {
                acc -= r[[i, c]] * inv[[c, col]];
            }
            inv[[i, col]] = acc / r[[i, i]];
        }
    }
    inv
}

/// Orthonormal basis (h × k) for the column span of `a` via Householder QR.
/// Columns whose pivot vanishes are dropped.
pub fn orthonormal_basis<T: Scalar>(a: ArrayView2<T>) -> Array2<T> {
    let (h, k) = a.dim();
    let mut work = a.to_owned();
    let col_norms: Vec<T> = a.axis_iter(Axis(1)).map(norm).collect();
    let tol = rank_tolerance::<T>();
    let mut reflectors: Vec<(usize, Array1<T>)> = Vec::new();
    let mut row = 0;
    for j in 0..k {
        if row >= h {
            break;
        }
        let alpha = norm(work.slice(s![row.., j]));
        if col_norms[j] == T::zero() || alpha <= tol * col_norms[j] {
            continue;
        }
        let sign = if work[[row, j]] >= T::zero() {
            T::one()
        } else {
            -T::one()
        };
        let mut v = work.slice(s![row.., j]).to_owned();
        v[0] += sign * alpha;
        let vnorm2 = dot(v.view(), v.view());
        for c in j..k {
            let proj = dot(v.view(), work.slice(s![row.., c])) * T::lit(2.0) / vnorm2;
            for (i, &vi) in v.iter().enumerate() {
                work[[row + i, c]] -= proj * vi;
            }
        }
        reflectors.push((row, v));
        row += 1;
    }
    // Q = H_1 H_2 ... H_r applied to the first r unit vectors
    let rank = reflectors.len();
    let mut q = Array2::zeros((h, rank));
    for c in 0..rank {
        q[[c, c]] = T::one();
    }
    for (offset, v) in reflectors.iter().rev() {
        let vnorm2 = dot(v.view(), v.view());
        for c in 0..rank {
            let proj = dot(v.view(), q.slice(s![*offset.., c])) * T::lit(2.0) / vnorm2;
            for (i, &vi) in v.iter().enumerate() {
                q[[offset + i, c]] -= proj * vi;
            }
        }
    }
    q
}

/// Solves `A x = b` for symmetric positive-definite `A`.
pub fn cholesky_solve<T: Scalar>(a: ArrayView2<T>, b: ArrayView1<T>) -> Result<Array1<T>> {
    let n = a.nrows();
    let mut l = Array2::<T>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut acc = a[[i, j]];
            for k in 0..j {
                acc -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if acc <= T::zero() || !acc.is_finite() {
                    return Err(Error::Solver(format!(
                        "matrix not positive definite at pivot {i}"
                    )));
                }
                l[[i, i]] = acc.sqrt();
            } else {
                l[[i, j]] = acc / l[[j, j]];
            }
        }
    }
    let mut z = Array1::zeros(n);
    for i in 0..n {
        let mut acc = b[i];
        for k in 0..i {
            acc -= l[[i, k]] * z[k];
        }
        z[i] = acc / l[[i, i]];
    }
    let mut x = Array1::zeros(n);
    for i in (0..n).rev() {
        let mut acc = z[i];
        for k in (i + 1)..n {
            acc -= l[[k, i]] * x[k];
        }
        x[i] = acc / l[[i, i]];
    }
    Ok(x)
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn symmetric_eigenvalues<T: Scalar>(a: ArrayView2<T>) -> Result<Vec<T>> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: a.ncols(),
        });
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let (mut d, mut e) = tridiagonalize(a.to_owned());
    implicit_ql(&mut d, &mut e)?;
    d.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
    Ok(d)
}

/// Householder reduction to tridiagonal form (values only). Returns the
/// diagonal and the sub-diagonal, with `e[i]` coupling rows `i-1` and `i`.
fn tridiagonalize<T: Scalar>(mut z: Array2<T>) -> (Vec<T>, Vec<T>) {
    let n = z.nrows();
    let mut d = vec![T::zero(); n];
    let mut e = vec![T::zero(); n];
    for i in (1..n).rev() {
        let l = i - 1;
        let mut h = T::zero();
        if l > 0 {
            let scale: T = (0..i).map(|k| z[[i, k]].abs()).sum();
            if scale == T::zero() {
                e[i] = z[[i, l]];
            } else {
                for k in 0..i {
                    z[[i, k]] /= scale;
                    h += z[[i, k]] * z[[i, k]];
                }
                let f = z[[i, l]];
                let g = if f >= T::zero() { -h.sqrt() } else { h.sqrt() };
                e[i] = scale * g;
                h -= f * g;
                z[[i, l]] = f - g;
                let mut f = T::zero();
                for j in 0..i {
                    let mut g = T::zero();
                    for k in 0..=j {
                        g += z[[j, k]] * z[[i, k]];
                    }
                    for k in (j + 1)..i {
                        g += z[[k, j]] * z[[i, k]];
                    }
                    e[j] = g / h;
                    f += e[j] * z[[i, j]];
                }
                let hh = f / (h + h);
                for j in 0..i {
                    let f = z[[i, j]];
                    let g = e[j] - hh * f;
                    e[j] = g;
                    for k in 0..=j {
                        let zik = z[[i, k]];
                        z[[j, k]] -= f * e[k] + g * zik;
                    }
                }
            }
        } else {
            e[i] = z[[i, l]];
        }
        d[i] = h;
    }
    e[0] = T::zero();
    for (i, di) in d.iter_mut().enumerate() {
        *di = z[[i, i]];
    }
    (d, e)
}

fn implicit_ql<T: Scalar>(d: &mut [T], e: &mut [T]) -> Result<()> {
    let n = d.len();
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = T::zero();
    let eps = T::epsilon();
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m < n - 1 {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= eps * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(Error::Solver(
                    "eigenvalue iteration did not converge".into(),
                ));
            }
            let mut g = (d[l + 1] - d[l]) / (T::lit(2.0) * e[l]);
            let mut r = g.hypot(T::one());
            g = d[m] - d[l] + e[l] / (g + if g >= T::zero() { r.abs() } else { -r.abs() });
            let (mut s, mut c, mut p) = (T::one(), T::one(), T::zero());
            let mut i = m as isize - 1;
            let mut underflow = false;
            while i >= l as isize {
                let iu = i as usize;
                let f = s * e[iu];
                let b = c * e[iu];
                r = f.hypot(g);
                e[iu + 1] = r;
                if r == T::zero() {
                    d[iu + 1] -= p;
                    e[m] = T::zero();
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[iu + 1] - p;
                r = (d[iu] - g) * s + T::lit(2.0) * c * b;
                p = s * r;
                d[iu + 1] = g + p;
                g = c * r - b;
                i -= 1;
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = T::zero();
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Cyclic Jacobi rotations: slow, simple, and independent of the QL path.
    fn jacobi_eigenvalues(mut a: Array2<f64>) -> Vec<f64> {
        let n = a.nrows();
        for _ in 0..100 {
            let off: f64 = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| a[[i, j]] * a[[i, j]])
                .sum();
            if off < 1e-26 {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    if a[[p, q]].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * a[[p, q]]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[[k, p]];
                        let akq = a[[k, q]];
                        a[[k, p]] = c * akp - s * akq;
                        a[[k, q]] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[[p, k]];
                        let aqk = a[[q, k]];
                        a[[p, k]] = c * apk - s * aqk;
                        a[[q, k]] = s * apk + c * aqk;
                    }
                }
            }
        }
        let mut d: Vec<f64> = (0..n).map(|i| a[[i, i]]).collect();
        d.sort_by(|x, y| x.partial_cmp(y).unwrap());
        d
    }

    fn random_symmetric(n: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = Array2::from_shape_fn((n, n), |_| rng.random::<f64>() - 0.5);
        b.t().dot(&b) + &b + &b.t()
    }

    #[test]
    fn eigenvalues_match_jacobi_oracle() {
        for (n, seed) in [(1, 1), (2, 2), (5, 3), (12, 4), (30, 5)] {
            let a = random_symmetric(n, seed);
            let ql = symmetric_eigenvalues(a.view()).unwrap();
            let jac = jacobi_eigenvalues(a.clone());
            for (x, y) in ql.iter().zip(&jac) {
                assert!((x - y).abs() < 1e-9 * (1.0 + y.abs()), "{x} vs {y}");
            }
        }
    }

    #[test]
    fn eigenvalues_of_diagonal_and_repeated() {
        let a = Array2::from_diag(&array![3.0, 1.0, 1.0, 0.0]);
        assert_eq!(
            symmetric_eigenvalues(a.view()).unwrap(),
            vec![0.0, 1.0, 1.0, 3.0]
        );
    }

    #[test]
    fn least_squares_recovers_exact_coefficients() {
        let x = array![[1.0f64, 0.0], [1.0, 1.0], [1.0, 2.0], [1.0, 3.0]];
        let y = array![1.0, 3.0, 5.0, 7.0];
        let names = vec!["intercept".to_string(), "x".to_string()];
        let fit = least_squares(x.view(), &names, y.view()).unwrap();
        assert!((fit.coefficients[0] - 1.0).abs() < 1e-12);
        assert!((fit.coefficients[1] - 2.0).abs() < 1e-12);
        assert!(fit.residual_sum_of_squares() < 1e-24);
        // (XᵀX)⁻¹ for this design: [[7/10, -3/10], [-3/10, 1/5]]
        let diag = fit.inverse_gram_diagonal();
        assert!((diag[0] - 0.7).abs() < 1e-12 && (diag[1] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn least_squares_names_collinear_columns() {
        let x = array![[1.0, 2.0, 0.5], [1.0, 2.0, 1.5], [1.0, 2.0, 2.0]];
        let names = vec!["intercept".into(), "const".into(), "x".into()];
        match least_squares(x.view(), &names, array![1.0, 2.0, 3.0].view()) {
            Err(Error::Collinear { columns }) => assert_eq!(columns, vec!["const".to_string()]),
            other => panic!("expected collinearity error, got {other:?}"),
        }
    }

    #[test]
    fn orthonormal_basis_spans_input() {
        let a = array![
            [1.0f64, 1.0, 2.0],
            [0.0, 1.0, 1.0],
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 1.0]
        ];
        let q = orthonormal_basis(a.view());
        // third column = first + second
        assert_eq!(q.ncols(), 2);
        let qtq = q.t().dot(&q);
        for i in 0..2 {
            for j in 0..2 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((qtq[[i, j]] - want).abs() < 1e-12);
            }
        }
        let proj = q.dot(&q.t()).dot(&a);
        for (x, y) in proj.iter().zip(a.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn cholesky_solves_spd_system() {
        let a = array![[4.0f64, 2.0], [2.0, 3.0]];
        let x = cholesky_solve(a.view(), array![2.0, 1.0].view()).unwrap();
        assert!((x[0] - 0.5).abs() < 1e-12 && x[1].abs() < 1e-12);
        assert!(cholesky_solve(
            array![[1.0, 2.0], [2.0, 1.0]].view(),
            array![1.0, 1.0].view()
        )
        .is_err());
    }
}
