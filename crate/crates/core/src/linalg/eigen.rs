//! Symmetric eigendecomposition: Householder reduction to tridiagonal form
//! followed by the implicit QL iteration (the EISPACK tred2/tql2 pair).

use super::Mat;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Leading eigenpairs of a symmetric matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct EigenResult<T> {
    /// Sorted descending.
    pub values: Vec<T>,
    /// `n × k`; column `j` is the unit eigenvector for `values[j]`, with its
    /// largest-magnitude entry positive (ties go to the lowest index).
    pub vectors: Mat<T>,
}

/// Top-`k` eigenpairs of a symmetric positive semidefinite matrix.
///
/// Equal eigenvalues keep the order in which the solver produced them.
/// Returned eigenvalues in `[-PSD_TOL, 0)` are clamped to zero; anything
/// more negative is rejected.
pub fn sym_eig_topk<T: Scalar>(a: &Mat<T>, k: usize) -> Result<EigenResult<T>> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::ShapeMismatch {
            op: "sym_eig_topk",
            left: a.shape(),
            right: (n, n),
        });
    }
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!(
            "sym_eig_topk: k = {k} outside 1..={n}"
        )));
    }
    a.ensure_finite("sym_eig_topk input")?;
    check_symmetric(a)?;

    let (values, rows) = tridiagonal_ql(a)?;

    let mut order: Vec<usize> = (0..n).collect();
    // stable: ties keep solver order
    order.sort_by(|&x, &y| values[y].partial_cmp(&values[x]).expect("finite eigenvalues"));

    let psd_tol = T::of(T::PSD_TOL);
    let mut top_values = Vec::with_capacity(k);
    let mut vectors = Mat::zeros(n, k);
    for (col, &idx) in order.iter().take(k).enumerate() {
        let mut lambda = values[idx];
        if lambda < -psd_tol {
            return Err(Error::NotPsd(lambda.as_f64()));
        }
        if lambda < T::zero() {
            lambda = T::zero();
        }
        top_values.push(lambda);

        let v = rows.row(idx);
        let norm = v.iter().map(|&x| x * x).sum::<T>().sqrt();
        let mut lead = 0;
        for (i, &x) in v.iter().enumerate() {
            if x.abs() > v[lead].abs() {
                lead = i;
            }
        }
        let sign = if v[lead] < T::zero() { -T::one() } else { T::one() };
        for (i, &x) in v.iter().enumerate() {
            vectors.set(i, col, sign * x / norm);
        }
    }
    vectors.ensure_finite("sym_eig_topk")?;
    Ok(EigenResult {
        values: top_values,
        vectors,
    })
}

fn check_symmetric<T: Scalar>(a: &Mat<T>) -> Result<()> {
    let tol = T::of(T::SYMMETRY_TOL);
    for i in 0..a.rows() {
        for j in 0..i {
            let gap = (a.at(i, j) - a.at(j, i)).abs();
            if gap > tol {
                return Err(Error::NotSymmetric {
                    row: i,
                    col: j,
                    gap: gap.as_f64(),
                });
            }
        }
    }
    Ok(())
}

/// All eigenpairs, unsorted. Eigenvector `i` is row `i` of the returned matrix.
fn tridiagonal_ql<T: Scalar>(a: &Mat<T>) -> Result<(Vec<T>, Mat<T>)> {
    let n = a.rows();
    let mut v: Vec<Vec<T>> = (0..n).map(|i| a.row(i).to_vec()).collect();
    let mut d = vec![T::zero(); n];
    let mut e = vec![T::zero(); n];
    householder_tridiagonalize(&mut v, &mut d, &mut e);

    // QL rotations act on eigenvector columns; keep them as rows instead so
    // every update walks contiguous memory.
    let mut w = Mat::from_fn(n, n, |i, k| v[k][i]);
    drop(v);
    implicit_ql(&mut d, &mut e, &mut w)?;
    Ok((d, w))
}

fn householder_tridiagonalize<T: Scalar>(v: &mut [Vec<T>], d: &mut [T], e: &mut [T]) {
    let n = d.len();
    let zero = T::zero();
    d.copy_from_slice(&v[n - 1]);

    for i in (1..n).rev() {
        let mut scale = zero;
        let mut h = zero;
        for &dk in d.iter().take(i) {
            scale += dk.abs();
        }
        if scale == zero {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[i - 1][j];
                v[i][j] = zero;
                v[j][i] = zero;
            }
        } else {
            for dk in d.iter_mut().take(i) {
                *dk /= scale;
                h += *dk * *dk;
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > zero {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = zero;
            }

            for j in 0..i {
                f = d[j];
                v[j][i] = f;
                g = e[j] + v[j][j] * f;
                for k in j + 1..i {
                    g += v[k][j] * d[k];
                    e[k] += v[k][j] * f;
                }
                e[j] = g;
            }
            f = zero;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    let delta = f * e[k] + g * d[k];
                    v[k][j] -= delta;
                }
                d[j] = v[i - 1][j];
                v[i][j] = zero;
            }
        }
        d[i] = h;
    }

    // accumulate transformations
    for i in 0..n.saturating_sub(1) {
        v[n - 1][i] = v[i][i];
        v[i][i] = T::one();
        let h = d[i + 1];
        if h != zero {
            for k in 0..=i {
                d[k] = v[k][i + 1] / h;
            }
            for j in 0..=i {
                let mut g = zero;
                for row in v.iter().take(i + 1) {
                    g += row[i + 1] * row[j];
                }
                for k in 0..=i {
                    let delta = g * d[k];
                    v[k][j] -= delta;
                }
            }
        }
        for row in v.iter_mut().take(i + 1) {
            row[i + 1] = zero;
        }
    }
    for j in 0..n {
        d[j] = v[n - 1][j];
        v[n - 1][j] = zero;
    }
    v[n - 1][n - 1] = T::one();
    e[0] = zero;
}

/// `w` holds eigenvectors as rows.
fn implicit_ql<T: Scalar>(d: &mut [T], e: &mut [T], w: &mut Mat<T>) -> Result<()> {
    let n = d.len();
    let zero = T::zero();
    let one = T::one();
    let two = T::of(2.0);
    let eps = T::epsilon();
    let max_iter = 60 * n.max(1);

    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = zero;

    let mut f = zero;
    let mut tst1 = zero;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > max_iter {
                    return Err(Error::NonFinite("eigensolver failed to converge".into()));
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (two * e[l]);
                let mut r = p.hypot(one);
                if p < zero {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = one;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = zero;
                let mut s2 = zero;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    rotate_rows(w, i, c, s);
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if !(e[l].abs() > eps * tst1) {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = zero;
    }
    Ok(())
}

/// Plane rotation mixing eigenvector rows `i` and `i + 1`.
#[inline]
fn rotate_rows<T: Scalar>(w: &mut Mat<T>, i: usize, c: T, s: T) {
    let n = w.cols();
    let data = w.as_mut_slice();
    let (head, tail) = data.split_at_mut((i + 1) * n);
    let lo = &mut head[i * n..];
    let hi = &mut tail[..n];
    for (x, y) in lo.iter_mut().zip(hi.iter_mut()) {
        let h = *y;
        *y = s * *x + c * h;
        *x = c * *x - s * h;
    }
}
