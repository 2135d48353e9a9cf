//! Householder QR least squares.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Ordinary least-squares fit of `y` on the columns of a design matrix.
#[derive(Debug, Clone)]
pub struct LeastSquares<T> {
    n: usize,
    coef: Vec<T>,
    /// Q^T y; entries past the column count are the residual components.
    qty: Vec<T>,
    /// Upper-triangular R, row-major p×p.
    r: Vec<T>,
}

impl<T: Scalar> LeastSquares<T> {
    /// Factorizes the column-major `m × p` design `columns` and solves for `y`.
    ///
    /// Fails when the design is rank deficient: a pivot falls below
    /// `m·ε` relative to the largest column norm.
    pub fn fit(columns: &[Vec<T>], y: &[T]) -> Result<Self> {
        let p = columns.len();
        let m = y.len();
        if p == 0 {
            return Err(Error::Argument("design matrix has no columns".into()));
        }
        if m < p {
            return Err(Error::Numerical(format!(
                "underdetermined system: {m} observations for {p} coefficients"
            )));
        }
        if columns.iter().any(|c| c.len() != m) {
            return Err(Error::Argument("design columns differ in length".into()));
        }
        let mut a: Vec<Vec<T>> = columns.to_vec();
        let mut b = y.to_vec();
        let scale = a.iter().map(|c| norm(c)).fold(T::zero(), |acc, v| acc.max(v));
        let tol = scale * T::epsilon() * T::from_count(m);
        let mut r = vec![T::zero(); p * p];

        for k in 0..p {
            let alpha_norm = norm(&a[k][k..]);
            if alpha_norm <= tol {
                return Err(Error::Numerical(format!(
                    "singular design matrix: column {k} is linearly dependent on earlier columns"
                )));
            }
            let x0 = a[k][k];
            let alpha = if x0 >= T::zero() { -alpha_norm } else { alpha_norm };
            let mut v: Vec<T> = a[k][k..].to_vec();
            v[0] -= alpha;
            let vnorm2: T = v.iter().map(|&e| e * e).sum();
            let two = T::lit(2.0);
            if vnorm2 > T::zero() {
                for col in a.iter_mut().skip(k + 1) {
                    reflect(&v, vnorm2, two, &mut col[k..]);
                }
                reflect(&v, vnorm2, two, &mut b[k..]);
            }
            r[k * p + k] = alpha;
            for j in k + 1..p {
                r[k * p + j] = a[j][k];
            }
        }

        let mut coef = vec![T::zero(); p];
        for i in (0..p).rev() {
            let mut s = b[i];
            for j in i + 1..p {
                s -= r[i * p + j] * coef[j];
            }
            coef[i] = s / r[i * p + i];
        }
        Ok(LeastSquares { n: m, coef, qty: b, r })
    }

    pub fn coefficients(&self) -> &[T] {
        &self.coef
    }

    pub fn observations(&self) -> usize {
        self.n
    }

    pub fn parameters(&self) -> usize {
        self.coef.len()
    }

    /// Residual sum of squares of the full model.
    pub fn rss(&self) -> T {
        self.prefix_rss(self.coef.len())
    }

    /// Residual sum of squares of the model using only the first `j` columns.
    ///
    /// Valid because the first `j` reflections depend only on those columns
    /// and later reflections preserve the norm of rows `j..`.
    pub fn prefix_rss(&self, j: usize) -> T {
        self.qty[j..].iter().map(|&e| e * e).sum()
    }

    /// Diagonal of (XᵀX)⁻¹ = R⁻¹R⁻ᵀ.
    pub fn inverse_gram_diagonal(&self) -> Vec<T> {
        let p = self.coef.len();
        // R⁻¹ is upper triangular; build it column by column.
        let mut inv = vec![T::zero(); p * p];
        for c in 0..p {
            for i in (0..=c).rev() {
                let mut s = if i == c { T::one() } else { T::zero() };
                for j in i + 1..=c {
                    s -= self.r[i * p + j] * inv[j * p + c];
                }
                inv[i * p + c] = s / self.r[i * p + i];
            }
        }
        (0..p)
            .map(|i| (i..p).map(|c| inv[i * p + c] * inv[i * p + c]).sum())
            .collect()
    }

    /// Classical standard errors with σ² = RSS / (n − p).
    pub fn standard_errors(&self) -> Vec<T> {
        let dof = T::from_count(self.n - self.coef.len());
        let sigma2 = self.rss() / dof;
        self.inverse_gram_diagonal()
            .into_iter()
            .map(|d| (sigma2 * d).sqrt())
            .collect()
    }
}

fn norm<T: Scalar>(v: &[T]) -> T {
    // scaled to avoid overflow on large-magnitude columns
    let big = v.iter().fold(T::zero(), |acc, &e| acc.max(e.abs()));
    if big == T::zero() {
        return T::zero();
    }
    let s: T = v.iter().map(|&e| (e / big) * (e / big)).sum();
    big * s.sqrt()
}

fn reflect<T: Scalar>(v: &[T], vnorm2: T, two: T, target: &mut [T]) {
    let dot: T = v.iter().zip(target.iter()).map(|(&a, &b)| a * b).sum();
    let f = two * dot / vnorm2;
    for (t, &vi) in target.iter_mut().zip(v) {
        *t -= f * vi;
    }
}
