//! Dense kernels used by the Gaussian model and PCA.
//!
//! Matrices are row-major `ndarray` arrays. Matrix products go through
//! `ndarray`'s GEMM; the factorizations are written out here.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};

const CHOLESKY_BLOCK: usize = 64;

/// Column means of `m` (rows are samples).
pub fn column_means(m: ArrayView2<'_, f64>) -> Array1<f64> {
    let n = m.nrows() as f64;
    m.sum_axis(Axis(0)) / n
}

/// Sample covariance `(X - mean)ᵀ (X - mean) / (n - 1)`.
pub fn sample_covariance(m: ArrayView2<'_, f64>, mean: ArrayView1<'_, f64>) -> Array2<f64> {
    let n = m.nrows();
    let centered = &m - &mean.insert_axis(Axis(0));
    let mut cov = centered.t().dot(&centered);
    cov /= (n - 1) as f64;
    symmetrize(&mut cov);
    cov
}

/// Overwrite `a` with `(a + aᵀ) / 2`.
pub fn symmetrize(a: &mut Array2<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (a[[i, j]] + a[[j, i]]);
            a[[i, j]] = v;
            a[[j, i]] = v;
        }
    }
}

fn cholesky_unblocked(
    a: &mut Array2<f64>,
    original_diag: &[f64],
    offset: usize,
    size: usize,
) -> Result<(), usize> {
    let n = a.nrows() as f64;
    for j in offset..offset + size {
        let mut diag = a[[j, j]];
        for k in offset..j {
            diag -= a[[j, k]] * a[[j, k]];
        }
        // a pivot that has cancelled down to rounding level is singular
        if !(diag > original_diag[j] * n * f64::EPSILON) || !diag.is_finite() {
            return Err(j);
        }
        let ljj = diag.sqrt();
        a[[j, j]] = ljj;
        for i in j + 1..offset + size {
            let mut v = a[[i, j]];
            for k in offset..j {
                v -= a[[i, k]] * a[[j, k]];
            }
            a[[i, j]] = v / ljj;
        }
    }
    Ok(())
}

/// In-place lower Cholesky factorization `A = L Lᵀ` (right-looking, blocked).
///
/// On success the strict upper triangle is zeroed. On failure returns the
/// index of the first pivot that is non-positive or has cancelled to within
/// `n·eps` of its original diagonal entry.
pub fn cholesky_in_place(a: &mut Array2<f64>) -> Result<(), usize> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "cholesky needs a square matrix");
    let original_diag = a.diag().to_vec();
    let mut k = 0;
    while k < n {
        let kb = CHOLESKY_BLOCK.min(n - k);
        cholesky_unblocked(a, &original_diag, k, kb)?;
        let rest = k + kb;
        if rest < n {
            // Panel: A21 <- A21 · L11⁻ᵀ, row by row.
            let l11 = a.slice(s![k..rest, k..rest]).to_owned();
            let mut panel = a.slice_mut(s![rest.., k..rest]);
            for mut row in panel.rows_mut() {
                for j in 0..kb {
                    let mut v = row[j];
                    for t in 0..j {
                        v -= row[t] * l11[[j, t]];
                    }
                    row[j] = v / l11[[j, j]];
                }
            }
            let panel = a.slice(s![rest.., k..rest]).to_owned();
            let mut trailing = a.slice_mut(s![rest.., rest..]);
            general_mat_mul(-1.0, &panel, &panel.t(), 1.0, &mut trailing);
        }
        k = rest;
    }
    for i in 0..n {
        for j in i + 1..n {
            a[[i, j]] = 0.0;
        }
    }
    Ok(())
}

/// Solve `L x = b` in place for lower-triangular `L`.
pub fn solve_lower_in_place(l: ArrayView2<'_, f64>, b: &mut [f64]) {
    let n = l.nrows();
    debug_assert_eq!(b.len(), n);
    for i in 0..n {
        let row = l.row(i);
        let row = row.as_slice().expect("row-major factor");
        let dot: f64 = row[..i].iter().zip(&b[..i]).map(|(x, y)| x * y).sum();
        b[i] = (b[i] - dot) / row[i];
    }
}

/// Inverse of a lower-triangular matrix (also lower-triangular).
pub fn invert_lower(l: ArrayView2<'_, f64>) -> Array2<f64> {
    let n = l.nrows();
    // Row i of L⁻¹ is built from rows j < i: (L⁻¹)_{i,·} = (e_i - Σ_{k<i} L_{ik} (L⁻¹)_{k,·}) / L_ii.
    let mut inv = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        let mut row = Array1::<f64>::zeros(i + 1);
        row[i] = 1.0;
        for k in 0..i {
            let lik = l[[i, k]];
            if lik != 0.0 {
                let prev = inv.slice(s![k, ..=k]);
                row.slice_mut(s![..=k]).scaled_add(-lik, &prev);
            }
        }
        row /= l[[i, i]];
        inv.slice_mut(s![i, ..=i]).assign(&row);
    }
    inv
}

/// `(L Lᵀ)⁻¹ = L⁻ᵀ L⁻¹` from a Cholesky factor.
pub fn spd_inverse_from_cholesky(l: ArrayView2<'_, f64>) -> Array2<f64> {
    let linv = invert_lower(l);
    let mut out = linv.t().dot(&linv);
    symmetrize(&mut out);
    out
}

/// Eigendecomposition of a symmetric matrix.
///
/// Returns eigenvalues in non-increasing order and the matching eigenvectors
/// as the columns of the second matrix. Householder tridiagonalization
/// followed by the implicit QL algorithm.
pub fn symmetric_eigen(a: ArrayView2<'_, f64>) -> (Array1<f64>, Array2<f64>) {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "eigen needs a square matrix");
    if n == 0 {
        return (Array1::zeros(0), Array2::zeros((0, 0)));
    }
    let mut v = a.to_owned();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tridiagonalize(&mut v, &mut d, &mut e);
    ql_implicit(&mut v, &mut d, &mut e);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[j].total_cmp(&d[i]).then(i.cmp(&j)));
    let values = Array1::from_iter(order.iter().map(|&i| d[i]));
    let mut vectors = Array2::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        vectors.column_mut(dst).assign(&v.column(src));
    }
    (values, vectors)
}

fn tridiagonalize(v: &mut Array2<f64>, d: &mut [f64], e: &mut [f64]) {
    let n = d.len();
    for j in 0..n {
        d[j] = v[[n - 1, j]];
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for dk in d.iter().take(i) {
            scale += dk.abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[[i - 1, j]];
                v[[i, j]] = 0.0;
                v[[j, i]] = 0.0;
            }
        } else {
            for dk in d.iter_mut().take(i) {
                *dk /= scale;
                h += *dk * *dk;
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = 0.0;
            }
            for j in 0..i {
                f = d[j];
                v[[j, i]] = f;
                g = e[j] + v[[j, j]] * f;
                for k in j + 1..i {
                    g += v[[k, j]] * d[k];
                    e[k] += v[[k, j]] * f;
                }
                e[j] = g;
            }
            f = 0.0;
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
                    v[[k, j]] -= f * e[k] + g * d[k];
                }
                d[j] = v[[i - 1, j]];
                v[[i, j]] = 0.0;
            }
        }
        d[i] = h;
    }
    for i in 0..n - 1 {
        v[[n - 1, i]] = v[[i, i]];
        v[[i, i]] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[[k, i + 1]] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[[k, i + 1]] * v[[k, j]];
                }
                for k in 0..=i {
                    v[[k, j]] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[[k, i + 1]] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[[n - 1, j]];
        v[[n - 1, j]] = 0.0;
    }
    v[[n - 1, n - 1]] = 1.0;
    e[0] = 0.0;
}

fn ql_implicit(v: &mut Array2<f64>, d: &mut [f64], e: &mut [f64]) {
    let n = d.len();
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    let eps = f64::EPSILON;
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
            loop {
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
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
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
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
                    for k in 0..n {
                        h = v[[k, i + 1]];
                        v[[k, i + 1]] = s * v[[k, i]] + c * h;
                        v[[k, i]] = c * v[[k, i]] - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
}
