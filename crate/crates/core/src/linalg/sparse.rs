use std::sync::Arc;

/// Compressed row structure with sorted, unique column indices per row.
#[derive(Debug, Clone, PartialEq)]
pub struct SparsityPattern {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
}

impl SparsityPattern {
    /// Builds a pattern from per-row column lists. Lists are sorted and
    /// deduplicated here.
    pub fn from_rows(ncols: usize, rows: &[Vec<usize>]) -> SparsityPattern {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for r in rows {
            let mut r = r.clone();
            r.sort_unstable();
            r.dedup();
            debug_assert!(r.last().map_or(true, |&c| c < ncols));
            col_idx.extend_from_slice(&r);
            row_ptr.push(col_idx.len());
        }
        SparsityPattern {
            nrows: rows.len(),
            ncols,
            row_ptr,
            col_idx,
        }
    }

    /// Expands a scalar node-coupling pattern to `ncomp` interleaved
    /// components (unknown `ncomp * i + c`), every component coupled to every
    /// other one. `rows` must be sorted and unique.
    pub fn from_scalar_rows(rows: &[Vec<u32>], ncomp: usize) -> SparsityPattern {
        let n = rows.len() * ncomp;
        let nnz: usize = rows.iter().map(|r| r.len()).sum::<usize>() * ncomp * ncomp;
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::with_capacity(nnz);
        row_ptr.push(0);
        for r in rows {
            for _ in 0..ncomp {
                for &j in r {
                    for d in 0..ncomp {
                        col_idx.push(ncomp * j as usize + d);
                    }
                }
                row_ptr.push(col_idx.len());
            }
        }
        SparsityPattern {
            nrows: n,
            ncols: n,
            row_ptr,
            col_idx,
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn row(&self, i: usize) -> &[usize] {
        &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    /// Position of entry `(i, j)` in the value array.
    #[inline]
    pub fn find(&self, i: usize, j: usize) -> Option<usize> {
        let start = self.row_ptr[i];
        self.col_idx[start..self.row_ptr[i + 1]]
            .binary_search(&j)
            .ok()
            .map(|p| start + p)
    }
}

/// CSR matrix over a shared pattern.
#[derive(Debug, Clone)]
pub struct SparseMatrix {
    pattern: Arc<SparsityPattern>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn zeros(pattern: Arc<SparsityPattern>) -> SparseMatrix {
        let values = vec![0.0; pattern.nnz()];
        SparseMatrix { pattern, values }
    }

    pub fn from_values(pattern: Arc<SparsityPattern>, values: Vec<f64>) -> SparseMatrix {
        assert_eq!(pattern.nnz(), values.len());
        SparseMatrix { pattern, values }
    }

    pub fn identity(n: usize) -> SparseMatrix {
        let rows: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        let pattern = Arc::new(SparsityPattern::from_rows(n, &rows));
        SparseMatrix {
            pattern,
            values: vec![1.0; n],
        }
    }

    /// Sums duplicate triplets.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> SparseMatrix {
        let mut rows = vec![Vec::new(); nrows];
        for &(i, j, _) in triplets {
            rows[i].push(j);
        }
        let pattern = Arc::new(SparsityPattern::from_rows(ncols, &rows));
        let mut m = SparseMatrix::zeros(pattern);
        for &(i, j, v) in triplets {
            m.add(i, j, v);
        }
        m
    }

    pub fn from_dense(a: &[Vec<f64>]) -> SparseMatrix {
        let ncols = a.first().map_or(0, |r| r.len());
        let mut t = Vec::new();
        for (i, row) in a.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    t.push((i, j, v));
                }
            }
        }
        SparseMatrix::from_triplets(a.len(), ncols, &t)
    }

    pub fn pattern(&self) -> &Arc<SparsityPattern> {
        &self.pattern
    }

    pub fn nrows(&self) -> usize {
        self.pattern.nrows
    }

    pub fn ncols(&self) -> usize {
        self.pattern.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Adds `v` to entry `(i, j)`, which must be in the pattern.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        match self.pattern.find(i, j) {
            Some(p) => self.values[p] += v,
            None => panic!("entry ({i}, {j}) not in sparsity pattern"),
        }
    }

    /// Adds a 2x2 block at rows `2 fi, 2 fi + 1` and columns `2 fj, 2 fj + 1`
    /// of an interleaved two-component matrix whose paired rows share their
    /// column structure.
    #[inline]
    pub fn add_block2(&mut self, fi: usize, fj: usize, b: &[[f64; 2]; 2]) {
        let (r0, c0) = (2 * fi, 2 * fj);
        let p = match self.pattern.find(r0, c0) {
            Some(p) => p,
            None => panic!("block ({fi}, {fj}) not in sparsity pattern"),
        };
        let stride = self.pattern.row_ptr[r0 + 1] - self.pattern.row_ptr[r0];
        debug_assert_eq!(self.pattern.col_idx[p + 1], c0 + 1);
        debug_assert_eq!(self.pattern.col_idx[p + stride], c0);
        self.values[p] += b[0][0];
        self.values[p + 1] += b[0][1];
        self.values[p + stride] += b[1][0];
        self.values[p + stride + 1] += b[1][1];
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.pattern.find(i, j).map_or(0.0, |p| self.values[p])
    }

    /// Iterator over `(column, value)` of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.pattern.row_ptr[i]..self.pattern.row_ptr[i + 1];
        self.pattern.col_idx[r.clone()]
            .iter()
            .copied()
            .zip(self.values[r].iter().copied())
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows()];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols());
        let p = &self.pattern;
        for (i, yi) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in p.row_ptr[i]..p.row_ptr[i + 1] {
                s += self.values[k] * x[p.col_idx[k]];
            }
            *yi = s;
        }
    }

    /// `y = A^T x`
    pub fn mul_vec_transpose(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.ncols()];
        self.mul_vec_transpose_into(x, &mut y);
        y
    }

    pub fn mul_vec_transpose_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.nrows());
        let p = &self.pattern;
        y.iter_mut().for_each(|v| *v = 0.0);
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for k in p.row_ptr[i]..p.row_ptr[i + 1] {
                y[p.col_idx[k]] += self.values[k] * xi;
            }
        }
    }

    pub fn transpose(&self) -> SparseMatrix {
        let p = &self.pattern;
        let mut count = vec![0usize; p.ncols + 1];
        for &j in &p.col_idx {
            count[j + 1] += 1;
        }
        for j in 0..p.ncols {
            count[j + 1] += count[j];
        }
        let row_ptr = count.clone();
        let mut next = count;
        let mut col_idx = vec![0usize; p.nnz()];
        let mut values = vec![0.0; p.nnz()];
        for i in 0..p.nrows {
            for k in p.row_ptr[i]..p.row_ptr[i + 1] {
                let j = p.col_idx[k];
                col_idx[next[j]] = i;
                values[next[j]] = self.values[k];
                next[j] += 1;
            }
        }
        SparseMatrix {
            pattern: Arc::new(SparsityPattern {
                nrows: p.ncols,
                ncols: p.nrows,
                row_ptr,
                col_idx,
            }),
            values,
        }
    }

    /// Replaces the rows and columns of flagged unknowns by the identity.
    pub fn apply_dirichlet(&mut self, flags: &[bool]) {
        let p = self.pattern.clone();
        for i in 0..p.nrows {
            for k in p.row_ptr[i]..p.row_ptr[i + 1] {
                let j = p.col_idx[k];
                if flags[i] || flags[j] {
                    self.values[k] = if i == j { 1.0 } else { 0.0 };
                }
            }
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut a = vec![vec![0.0; self.ncols()]; self.nrows()];
        for (i, row) in a.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] += v;
            }
        }
        a
    }
}

pub fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}
