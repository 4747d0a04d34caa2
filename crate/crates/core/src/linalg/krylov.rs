use super::sparse::{dot, norm2, SparseMatrix};
use super::SparsityPattern;
use std::sync::Arc;
use crate::error::{Error, Result};

/// Incomplete LU factorization without fill-in on the pattern of `A`.
#[derive(Debug, Clone)]
pub struct Ilu0 {
    pattern: Arc<SparsityPattern>,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    diag: Vec<usize>,
    values: Vec<f64>,
}

impl Ilu0 {
    pub fn new(a: &SparseMatrix) -> Result<Ilu0> {
        let p = a.pattern();
        let n = a.nrows();
        let row_ptr = p.row_ptr().to_vec();
        let col_idx = p.col_idx().to_vec();
        let mut values = a.values().to_vec();
        let mut diag = vec![usize::MAX; n];
        for i in 0..n {
            diag[i] = p.find(i, i).ok_or_else(|| Error::LinearSolver {
                reason: format!("ILU(0): missing diagonal in row {i}"),
                residual: f64::NAN,
            })?;
        }
        // position lookup for the current row
        let mut pos = vec![usize::MAX; n];
        for i in 0..n {
            for k in row_ptr[i]..row_ptr[i + 1] {
                pos[col_idx[k]] = k;
            }
            for k in row_ptr[i]..diag[i] {
                let j = col_idx[k];
                let pivot = values[diag[j]];
                if pivot == 0.0 {
                    return Err(Error::LinearSolver {
                        reason: format!("ILU(0): zero pivot in row {j}"),
                        residual: f64::NAN,
                    });
                }
                let l = values[k] / pivot;
                values[k] = l;
                for m in (diag[j] + 1)..row_ptr[j + 1] {
                    let q = pos[col_idx[m]];
                    if q != usize::MAX {
                        values[q] -= l * values[m];
                    }
                }
            }
            for k in row_ptr[i]..row_ptr[i + 1] {
                pos[col_idx[k]] = usize::MAX;
            }
        }
        Ok(Ilu0 {
            pattern: p.clone(),
            row_ptr,
            col_idx,
            diag,
            values,
        })
    }

    /// Pattern of the factorized matrix.
    pub fn pattern(&self) -> &Arc<SparsityPattern> {
        &self.pattern
    }

    /// Solves `(LU)^T x = b` in place.
    pub fn apply_transpose(&self, x: &mut [f64]) {
        let n = x.len();
        for i in 0..n {
            let xi = x[i] / self.values[self.diag[i]];
            x[i] = xi;
            for k in (self.diag[i] + 1)..self.row_ptr[i + 1] {
                x[self.col_idx[k]] -= self.values[k] * xi;
            }
        }
        for i in (0..n).rev() {
            let xi = x[i];
            for k in self.row_ptr[i]..self.diag[i] {
                x[self.col_idx[k]] -= self.values[k] * xi;
            }
        }
    }

    /// Solves `LU x = b` in place.
    pub fn apply(&self, x: &mut [f64]) {
        let n = x.len();
        for i in 0..n {
            let mut s = x[i];
            for k in self.row_ptr[i]..self.diag[i] {
                s -= self.values[k] * x[self.col_idx[k]];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (self.diag[i] + 1)..self.row_ptr[i + 1] {
                s -= self.values[k] * x[self.col_idx[k]];
            }
            x[i] = s / self.values[self.diag[i]];
        }
    }
}

/// Right-preconditioned restarted GMRES for the operator `apply` (`y = A x`)
/// with preconditioner `precond` (in place). Returns the final true residual
/// norm and the number of iterations; `x` holds the initial guess on entry.
pub fn gmres<A, P>(
    apply: A,
    precond: P,
    b: &[f64],
    x: &mut [f64],
    rtol: f64,
    restart: usize,
    max_iter: usize,
) -> (f64, usize)
where
    A: Fn(&[f64], &mut [f64]),
    P: Fn(&mut [f64]),
{
    let n = b.len();
    let target = rtol * norm2(b);
    let mut total = 0;
    let mut ax = vec![0.0; n];
    loop {
        apply(x, &mut ax);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let beta = norm2(&r);
        if beta <= target || total >= max_iter {
            log::trace!("GMRES: {total} iterations, residual {beta:e}");
            return (beta, total);
        }
        let mut v: Vec<Vec<f64>> = Vec::with_capacity(restart + 1);
        v.push(r.iter().map(|x| x / beta).collect());
        let mut h = vec![vec![0.0; restart]; restart + 1];
        let mut cs = vec![0.0; restart];
        let mut sn = vec![0.0; restart];
        let mut g = vec![0.0; restart + 1];
        g[0] = beta;
        let mut k_used = 0;
        let mut w = vec![0.0; n];
        for k in 0..restart {
            let mut z = v[k].clone();
            precond(&mut z);
            apply(&z, &mut w);
            for j in 0..=k {
                let hjk = dot(&w, &v[j]);
                h[j][k] = hjk;
                for (wi, vi) in w.iter_mut().zip(&v[j]) {
                    *wi -= hjk * vi;
                }
            }
            let hn = norm2(&w);
            h[k + 1][k] = hn;
            for j in 0..k {
                let t = cs[j] * h[j][k] + sn[j] * h[j + 1][k];
                h[j + 1][k] = -sn[j] * h[j][k] + cs[j] * h[j + 1][k];
                h[j][k] = t;
            }
            let d = (h[k][k] * h[k][k] + h[k + 1][k] * h[k + 1][k]).sqrt();
            if d == 0.0 {
                break;
            }
            cs[k] = h[k][k] / d;
            sn[k] = h[k + 1][k] / d;
            h[k][k] = d;
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            k_used = k + 1;
            total += 1;
            if g[k + 1].abs() <= 0.5 * target || hn == 0.0 || total >= max_iter {
                break;
            }
            v.push(w.iter().map(|x| x / hn).collect());
        }
        // back substitution for the Krylov coefficients
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for j in (i + 1)..k_used {
                s -= h[i][j] * y[j];
            }
            y[i] = s / h[i][i];
        }
        let mut update = vec![0.0; n];
        for (j, yj) in y.iter().enumerate() {
            for (u, vj) in update.iter_mut().zip(&v[j]) {
                *u += yj * vj;
            }
        }
        precond(&mut update);
        for (xi, ui) in x.iter_mut().zip(&update) {
            *xi += ui;
        }
        if k_used == 0 {
            apply(x, &mut ax);
            return (norm2(&b.iter().zip(&ax).map(|(b, a)| b - a).collect::<Vec<_>>()), total);
        }
    }
}
