//! Per-space data reused by every assembly on a fixed space: quadrature
//! weights per cell, the local-to-global block map through the constraint
//! expansions, and the state-independent scalar operators.

use super::element::{face_point, gauss_1d, Quadrature, ShapeTable};
use super::field::{face_measure, shape_at, CellGeometry};
use super::FeSpace;

/// One contribution of a local pair `(i, j)` to the global scalar block
/// `blk` in block row `row`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PairEntry {
    pub row: u32,
    pub blk: u32,
    pub w: f64,
}

#[derive(Debug)]
pub(crate) struct AssemblyCache {
    pub quad: Quadrature,
    pub table: ShapeTable,
    /// `jxw[cell * nq + q]`
    pub jxw: Vec<f64>,
    /// scalar (node-coupling) CSR structure of the free unknowns
    pub blk_ptr: Vec<u32>,
    pub blk_col: Vec<u32>,
    /// scalar mass, stiffness and Robin boundary mass on that structure
    pub mass: Vec<f64>,
    pub lap: Vec<f64>,
    pub robin: Vec<f64>,
    pair_off: Vec<u32>,
    pairs: Vec<PairEntry>,
}

pub(crate) fn n_quad(order: usize) -> usize {
    order + 2
}

impl AssemblyCache {
    pub fn new(space: &FeSpace) -> AssemblyCache {
        let nl = space.n_local();
        let quad = Quadrature::tensor(n_quad(space.order()));
        let table = ShapeTable::new(space.order(), &quad.points);
        let nq = quad.len();
        let pattern = space.pattern();
        let nf = space.n_free();
        let rp = pattern.row_ptr();
        let ci = pattern.col_idx();
        let mut blk_ptr = Vec::with_capacity(nf + 1);
        let mut blk_col = Vec::with_capacity(ci.len() / 4);
        for f in 0..nf {
            blk_ptr.push(blk_col.len() as u32);
            blk_col.extend(ci[rp[2 * f]..rp[2 * f + 1]].iter().step_by(2).map(|&c| (c / 2) as u32));
        }
        blk_ptr.push(blk_col.len() as u32);
        let nb = blk_col.len();

        let n_cells = space.n_cells();
        let mut jxw = Vec::with_capacity(n_cells * nq);
        let mut pair_off = Vec::with_capacity(n_cells * nl * nl + 1);
        let mut pairs = Vec::with_capacity(n_cells * nl * nl);
        let mut mass = vec![0.0; nb];
        let mut lap = vec![0.0; nb];
        let mut grads = vec![[0.0; 2]; nq * nl];
        let mut me = vec![0.0; nl * nl];
        let mut le = vec![0.0; nl * nl];
        let mesh = space.mesh();
        for c in 0..n_cells {
            let geo = CellGeometry::new(&mesh.cell_coords(c), &quad);
            jxw.extend_from_slice(&geo.jxw);
            for q in 0..nq {
                for j in 0..nl {
                    grads[q * nl + j] = geo.grad(q, table.grad(q, j));
                }
            }
            me.iter_mut().for_each(|v| *v = 0.0);
            le.iter_mut().for_each(|v| *v = 0.0);
            for q in 0..nq {
                let w = geo.jxw[q];
                let s = &table.values[q * nl..(q + 1) * nl];
                let g = &grads[q * nl..(q + 1) * nl];
                for i in 0..nl {
                    for j in 0..nl {
                        me[i * nl + j] += w * s[i] * s[j];
                        le[i * nl + j] += w * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
                    }
                }
            }
            let nodes = space.cell_nodes(c);
            for (i, &ni) in nodes.iter().enumerate() {
                for (j, &nj) in nodes.iter().enumerate() {
                    pair_off.push(pairs.len() as u32);
                    for &(fi, wi) in space.expansion(ni as usize) {
                        let row = &blk_col[blk_ptr[fi as usize] as usize..blk_ptr[fi as usize + 1] as usize];
                        for &(fj, wj) in space.expansion(nj as usize) {
                            let b = blk_ptr[fi as usize] as usize
                                + row.binary_search(&fj).expect("block missing from pattern");
                            let w = wi * wj;
                            mass[b] += w * me[i * nl + j];
                            lap[b] += w * le[i * nl + j];
                            pairs.push(PairEntry {
                                row: fi,
                                blk: b as u32,
                                w,
                            });
                        }
                    }
                }
            }
        }
        pair_off.push(pairs.len() as u32);

        let mut cache = AssemblyCache {
            quad,
            table,
            jxw,
            blk_ptr,
            blk_col,
            mass,
            lap,
            robin: vec![0.0; nb],
            pair_off,
            pairs,
        };

        let (s1, w1) = gauss_1d(n_quad(space.order()));
        let mut re = vec![0.0; nl * nl];
        let mut robin = vec![0.0; nb];
        for (c, f) in space.robin_faces() {
            let coords = mesh.cell_coords(c);
            re.iter_mut().for_each(|v| *v = 0.0);
            for (s, ws) in s1.iter().zip(&w1) {
                let (vals, _) = shape_at(space.order(), face_point(f, *s));
                let ds = ws * face_measure(&coords, f, *s);
                for i in 0..nl {
                    for j in 0..nl {
                        re[i * nl + j] += vals[i] * vals[j] * ds;
                    }
                }
            }
            for i in 0..nl {
                for j in 0..nl {
                    for e in cache.pairs(c, nl, i, j) {
                        robin[e.blk as usize] += e.w * re[i * nl + j];
                    }
                }
            }
        }
        cache.robin = robin;
        cache
    }

    pub fn nq(&self) -> usize {
        self.quad.len()
    }

    #[inline]
    pub fn cell_jxw(&self, cell: usize) -> &[f64] {
        let nq = self.nq();
        &self.jxw[cell * nq..(cell + 1) * nq]
    }

    /// Global contributions of the local pair `(i, j)` of `cell`.
    #[inline]
    pub fn pairs(&self, cell: usize, nl: usize, i: usize, j: usize) -> &[PairEntry] {
        let k = (cell * nl + i) * nl + j;
        &self.pairs[self.pair_off[k] as usize..self.pair_off[k + 1] as usize]
    }

    /// Position of the `(theta, theta)` entry of scalar block `blk` in the
    /// interleaved two-component value array, and the row stride.
    #[inline]
    pub fn position(&self, row: u32, blk: u32) -> (usize, usize) {
        let start = self.blk_ptr[row as usize] as usize;
        let len = self.blk_ptr[row as usize + 1] as usize - start;
        (4 * start + 2 * (blk as usize - start), 2 * len)
    }
}
