//! Sparse matrices and the linear solvers used by Newton and the adjoint
//! sweep.

mod krylov;
mod sparse;

pub use krylov::{gmres, Ilu0};
pub use sparse::{dot, norm2, SparseMatrix, SparsityPattern};

use std::sync::Arc;

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::MatMut;

use crate::error::{Error, Result};

/// Which solver to use for a system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    /// Sparse LU.
    Direct,
    /// Restarted GMRES with ILU(0) preconditioning.
    Iterative,
    /// LU up to `AUTO_DIRECT_LIMIT` unknowns, GMRES above with LU as
    /// fallback.
    Auto,
}

pub const AUTO_DIRECT_LIMIT: usize = 1_000;

/// Solver with cached symbolic factorization.
pub struct LinearSolver {
    kind: SolverKind,
    /// relative residual target of the iterative solver
    pub rtol: f64,
    pub restart: usize,
    pub max_iter: usize,
    symbolic: Option<(Arc<SparsityPattern>, SymbolicLu<usize>)>,
    precond: Option<Precond>,
}

/// ILU(0) kept across solves with the same sparsity pattern until GMRES
/// needs clearly more iterations than right after the factorization.
struct Precond {
    ilu: Ilu0,
    fresh_iters: Option<usize>,
}

impl std::fmt::Debug for LinearSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LinearSolver")
            .field("kind", &self.kind)
            .field("rtol", &self.rtol)
            .finish()
    }
}

/// Residual bound for direct solves.
pub const DIRECT_RTOL: f64 = 1e-12;

impl LinearSolver {
    pub fn new(kind: SolverKind) -> LinearSolver {
        LinearSolver {
            kind,
            rtol: 1e-12,
            restart: 30,
            max_iter: 3000,
            symbolic: None,
            precond: None,
        }
    }

    pub fn with_rtol(mut self, rtol: f64) -> LinearSolver {
        self.rtol = rtol;
        self
    }

    fn use_direct(&self, n: usize) -> bool {
        match self.kind {
            SolverKind::Direct => true,
            SolverKind::Iterative => false,
            SolverKind::Auto => n <= AUTO_DIRECT_LIMIT,
        }
    }

    /// Solves `A x = b`.
    pub fn solve(&mut self, a: &SparseMatrix, b: &[f64]) -> Result<Vec<f64>> {
        self.solve_impl(a, b, false)
    }

    /// Solves `A^T x = b`.
    pub fn solve_transpose(&mut self, a: &SparseMatrix, b: &[f64]) -> Result<Vec<f64>> {
        self.solve_impl(a, b, true)
    }

    fn solve_impl(&mut self, a: &SparseMatrix, b: &[f64], transpose: bool) -> Result<Vec<f64>> {
        let n = a.nrows();
        if a.ncols() != n || b.len() != n {
            return Err(Error::LinearSolver {
                reason: format!("dimension mismatch: {}x{} with rhs {}", n, a.ncols(), b.len()),
                residual: f64::NAN,
            });
        }
        let bnorm = norm2(b);
        if bnorm == 0.0 {
            return Ok(vec![0.0; n]);
        }
        if self.use_direct(n) {
            return self.direct(a, b, transpose, bnorm);
        }
        match self.iterative(a, b, bnorm, transpose) {
            Err(e) if self.kind == SolverKind::Auto => {
                log::warn!("{e}; retrying with LU");
                self.direct(a, b, transpose, bnorm)
            }
            r => r,
        }
    }

    fn iterative(&mut self, a: &SparseMatrix, b: &[f64], bnorm: f64, transpose: bool) -> Result<Vec<f64>> {
        let mut rebuilt = false;
        loop {
            let stale = match &self.precond {
                Some(p) => !Arc::ptr_eq(p.ilu.pattern(), a.pattern()),
                None => true,
            };
            if stale {
                self.precond = Some(Precond {
                    ilu: Ilu0::new(a)?,
                    fresh_iters: None,
                });
                rebuilt = true;
            }
            let p = self.precond.as_mut().unwrap();
            let mut x = vec![0.0; b.len()];
            let (res, iters) = if transpose {
                gmres(
                    |v, y| a.mul_vec_transpose_into(v, y),
                    |v| p.ilu.apply_transpose(v),
                    b,
                    &mut x,
                    self.rtol,
                    self.restart,
                    self.max_iter,
                )
            } else {
                gmres(
                    |v, y| a.mul_vec_into(v, y),
                    |v| p.ilu.apply(v),
                    b,
                    &mut x,
                    self.rtol,
                    self.restart,
                    self.max_iter,
                )
            };
            let converged = res <= self.rtol * bnorm;
            let fresh = *p.fresh_iters.get_or_insert(iters);
            if converged {
                if iters > 2 * fresh + 10 {
                    self.precond = None;
                }
                return Ok(x);
            }
            if rebuilt {
                return Err(Error::LinearSolver {
                    reason: format!("GMRES did not converge in {} iterations", self.max_iter),
                    residual: res,
                });
            }
            self.precond = None;
        }
    }

    fn direct(&mut self, a: &SparseMatrix, b: &[f64], transpose: bool, bnorm: f64) -> Result<Vec<f64>> {
        let p = a.pattern().clone();
        let n = a.nrows();
        // the row-compressed arrays of A are the column-compressed arrays of A^T
        let sym = SymbolicSparseColMatRef::new_checked(n, n, p.row_ptr(), None, p.col_idx());
        let at = SparseColMatRef::new(sym, a.values());
        let reuse = matches!(&self.symbolic, Some((q, _)) if Arc::ptr_eq(q, &p) || **q == *p);
        if !reuse {
            let s = SymbolicLu::try_new(sym).map_err(|e| Error::LinearSolver {
                reason: format!("symbolic LU: {e:?}"),
                residual: f64::NAN,
            })?;
            self.symbolic = Some((p.clone(), s));
        }
        let symbolic = self.symbolic.as_ref().unwrap().1.clone();
        let lu = Lu::try_new_with_symbolic(symbolic, at).map_err(|e| Error::LinearSolver {
            reason: format!("LU factorization: {e:?}"),
            residual: f64::NAN,
        })?;
        let apply = |v: &[f64]| if transpose { a.mul_vec_transpose(v) } else { a.mul_vec(v) };
        let solve = |rhs: &mut [f64]| {
            let m = MatMut::from_column_major_slice_mut(rhs, n, 1);
            if transpose {
                lu.solve_in_place(m);
            } else {
                lu.solve_transpose_in_place(m);
            }
        };
        let mut x = b.to_vec();
        solve(&mut x);
        let mut res = norm2(&residual(&apply(&x), b));
        for _ in 0..3 {
            if !(res > DIRECT_RTOL * bnorm) {
                break;
            }
            let mut r = residual(&apply(&x), b);
            solve(&mut r);
            for (xi, di) in x.iter_mut().zip(&r) {
                *xi += di;
            }
            res = norm2(&residual(&apply(&x), b));
        }
        if !res.is_finite() || res > DIRECT_RTOL * bnorm {
            return Err(Error::LinearSolver {
                reason: "LU solve did not reach the residual bound (singular or ill-conditioned)".into(),
                residual: res,
            });
        }
        Ok(x)
    }
}

/// `b - Ax` given `Ax`.
fn residual(ax: &[f64], b: &[f64]) -> Vec<f64> {
    b.iter().zip(ax).map(|(b, a)| b - a).collect()
}

/// Sets the number of threads used inside factorizations.
pub fn set_threads(threads: usize) {
    if threads > 1 {
        faer::set_global_parallelism(faer::Par::rayon(threads));
    } else {
        faer::set_global_parallelism(faer::Par::Seq);
    }
}
