//! Dense least squares via Householder QR.

use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone, Debug)]
pub struct LeastSquares<T> {
    pub coefficients: Array1<T>,
    pub rss: T,
    /// `(X'X)^{-1}`, used for classical standard errors.
    pub xtx_inv: Array2<T>,
}

/// Minimizes `||b - A c||^2`. Fails with a rank error when a column is
/// numerically dependent on the previous ones.
pub fn least_squares<T: Real>(a: ArrayView2<'_, T>, b: &[T]) -> Result<LeastSquares<T>> {
    let (n, k) = a.dim();
    if b.len() != n {
        return Err(Error::Shape(format!("design has {n} rows, target has {}", b.len())));
    }
    if k > n {
        return Err(Error::Rank(format!("{k} columns but only {n} rows")));
    }
    let mut cols: Vec<Vec<T>> = (0..k).map(|j| a.column(j).to_vec()).collect();
    let mut rhs = b.to_vec();
    let col_scale = cols
        .iter()
        .map(|c| c.iter().map(|v| *v * *v).sum::<T>().sqrt())
        .fold(T::zero(), T::max);
    let tol = T::epsilon() * T::lit(n.max(k) as f64 * 10.0) * col_scale.max(T::min_positive_value());

    let mut r = Array2::<T>::zeros((k, k));
    for j in 0..k {
        let norm = cols[j][j..].iter().map(|v| *v * *v).sum::<T>().sqrt();
        if norm <= tol {
            return Err(Error::Rank(format!("design column {j} is collinear with earlier columns")));
        }
        let alpha = if cols[j][j] > T::zero() { -norm } else { norm };
        let mut v: Vec<T> = cols[j][j..].to_vec();
        v[0] -= alpha;
        let vnorm2: T = v.iter().map(|x| *x * *x).sum();
        let two = T::lit(2.0);
        let reflect = |target: &mut [T]| {
            let dot: T = v.iter().zip(target.iter()).map(|(a, b)| *a * *b).sum();
            let f = two * dot / vnorm2;
            target.iter_mut().zip(&v).for_each(|(t, vi)| *t -= f * *vi);
        };
        for col in cols.iter_mut().skip(j) {
            reflect(&mut col[j..]);
        }
        reflect(&mut rhs[j..]);
        for (i, col) in cols.iter().enumerate().skip(j) {
            r[[j, i]] = col[j];
        }
    }

    let mut coef = Array1::<T>::zeros(k);
    for i in (0..k).rev() {
        let mut s = rhs[i];
        for j in i + 1..k {
            s -= r[[i, j]] * coef[j];
        }
        coef[i] = s / r[[i, i]];
    }
    let rss: T = rhs[k..].iter().map(|v| *v * *v).sum();

    // R^{-1} by back substitution, then (X'X)^{-1} = R^{-1} R^{-T}
    let mut rinv = Array2::<T>::zeros((k, k));
    for c in 0..k {
        for i in (0..=c).rev() {
            let mut s = if i == c { T::one() } else { T::zero() };
            for j in i + 1..=c {
                s -= r[[i, j]] * rinv[[j, c]];
            }
            rinv[[i, c]] = s / r[[i, i]];
        }
    }
    let xtx_inv = rinv.dot(&rinv.t());
    Ok(LeastSquares { coefficients: coef, rss, xtx_inv })
}

/// Weighted least squares: minimizes `sum_i w_i (b_i - a_i c)^2`.
pub fn weighted_least_squares<T: Real>(a: ArrayView2<'_, T>, b: &[T], w: &[T]) -> Result<LeastSquares<T>> {
    if w.len() != b.len() {
        return Err(Error::Shape(format!("{} weights for {} rows", w.len(), b.len())));
    }
    if w.iter().any(|v| *v < T::zero() || !v.is_finite()) {
        return Err(Error::Weight("weights must be finite and non-negative".into()));
    }
    let sw: Vec<T> = w.iter().map(|v| v.sqrt()).collect();
    let mut scaled = a.to_owned();
    for (mut row, s) in scaled.rows_mut().into_iter().zip(&sw) {
        row.mapv_inplace(|v| v * *s);
    }
    let rhs: Vec<T> = b.iter().zip(&sw).map(|(v, s)| *v * *s).collect();
    least_squares(scaled.view(), &rhs)
}

/// Prepends a column of ones.
pub fn with_intercept<T: Real>(a: ArrayView2<'_, T>) -> Array2<T> {
    let (n, k) = a.dim();
    let mut out = Array2::<T>::ones((n, k + 1));
    out.slice_mut(ndarray::s![.., 1..]).assign(&a);
    out
}
