use super::element::{local_nodes, shape_values};
use super::{FeSpace, LocalField, N_COMP};
use crate::error::{Error, Result};
use crate::linalg::SparseMatrix;
use crate::mesh::CHILD_OFFSETS;

fn same_mesh(a: &FeSpace, b: &FeSpace) -> Result<()> {
    if a.mesh().id() != b.mesh().id() {
        return Err(Error::MeshMismatch(format!(
            "spaces live on meshes {} and {}",
            a.mesh().id(),
            b.mesh().id()
        )));
    }
    Ok(())
}

fn check_len(space: &FeSpace, v: &[f64]) -> Result<()> {
    if v.len() != N_COMP * space.n_free() {
        return Err(Error::MeshMismatch(format!(
            "vector of length {} does not fit a space with {} unknowns",
            v.len(),
            N_COMP * space.n_free()
        )));
    }
    Ok(())
}

/// Applies a scalar free-to-free matrix to both components of an interleaved
/// vector.
pub(crate) fn apply_scalar(m: &SparseMatrix, v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; N_COMP * m.nrows()];
    for i in 0..m.nrows() {
        for (j, w) in m.row(i) {
            for c in 0..N_COMP {
                out[N_COMP * i + c] += w * v[N_COMP * j + c];
            }
        }
    }
    out
}

/// Transposed action of a scalar matrix on an interleaved vector.
pub(crate) fn apply_scalar_transpose(m: &SparseMatrix, v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; N_COMP * m.ncols()];
    for i in 0..m.nrows() {
        for (j, w) in m.row(i) {
            for c in 0..N_COMP {
                out[N_COMP * j + c] += w * v[N_COMP * i + c];
            }
        }
    }
    out
}

/// Exact embedding of a cG(1) function into cG(2) on the same mesh.
pub fn embed_cg1_to_cg2(v: &[f64], from: &FeSpace, to: &FeSpace) -> Result<Vec<f64>> {
    same_mesh(from, to)?;
    if from.order() != 1 || to.order() != 2 {
        return Err(Error::MeshMismatch("embedding needs a cG(1) and a cG(2) space".into()));
    }
    transfer(v, from, to)
}

/// Vertex values of a cG(2) function as a cG(1) function. Hanging vertices
/// take the values dictated by the cG(1) constraints.
pub fn restrict_cg2_to_cg1(v: &[f64], from: &FeSpace, to: &FeSpace) -> Result<Vec<f64>> {
    same_mesh(from, to)?;
    check_len(from, v)?;
    if from.order() != 2 || to.order() != 1 {
        return Err(Error::MeshMismatch("restriction needs a cG(2) and a cG(1) space".into()));
    }
    let hi = from.expand(v);
    let (n_hi, n_lo) = (from.n_nodes(), to.n_nodes());
    // vertex nodes are numbered identically and first in both spaces
    let mut lo = vec![0.0; N_COMP * n_lo];
    for c in 0..N_COMP {
        lo[c * n_lo..(c + 1) * n_lo].copy_from_slice(&hi[c * n_hi..c * n_hi + n_lo]);
    }
    Ok(to.restrict(&lo))
}

/// Patchwise biquadratic interpolation of a cG(1) function: on each 2x2
/// patch the nine nodal values define one biquadratic on the parent cell,
/// returned as exact per-cell order-2 coefficients on the fine cells.
pub fn patch_interp_cg1_to_cg2(v: &[f64], space: &FeSpace) -> Result<LocalField> {
    check_len(space, v)?;
    if space.order() != 1 {
        return Err(Error::MeshMismatch("patch interpolation acts on cG(1)".into()));
    }
    let mesh = space.mesh();
    let groups = mesh.patch_groups();
    if groups.len() * 4 != mesh.n_cells() {
        return Err(Error::PatchStructure(format!(
            "{} of {} cells are not in complete 2x2 patches",
            mesh.n_cells() - 4 * groups.len(),
            mesh.n_cells()
        )));
    }
    let fine = LocalField::from_free(space, v);
    let mut out = LocalField::zeros(2, mesh.n_cells());
    let q2_nodes = local_nodes(2);
    // parent shape values at the order-2 nodes of each child
    let tables: Vec<Vec<[f64; 9]>> = (0..4)
        .map(|ci| {
            q2_nodes
                .iter()
                .map(|xi| {
                    let off = CHILD_OFFSETS[ci];
                    shape_values(2, [0.5 * (xi[0] + off[0]), 0.5 * (xi[1] + off[1])])
                })
                .collect()
        })
        .collect();
    for g in &groups {
        for comp in 0..N_COMP {
            let c = |k: usize| fine.cell(g[k], comp);
            // parent vertices, face midpoints, center
            let parent = [
                c(0)[0],
                c(1)[1],
                c(2)[2],
                c(3)[3],
                c(0)[1],
                c(1)[2],
                c(2)[3],
                c(3)[0],
                c(0)[2],
            ];
            for (ci, &cell) in g.iter().enumerate() {
                let dst = out.cell_mut(cell, comp);
                for (k, t) in tables[ci].iter().enumerate() {
                    dst[k] = (0..9).map(|j| t[j] * parent[j]).sum();
                }
            }
        }
    }
    Ok(out)
}

/// Reference coordinates inside the root cell of a point given by local
/// coordinates of an active cell.
fn to_root(path: &[u8], mut xi: [f64; 2]) -> [f64; 2] {
    for &ci in path.iter().rev() {
        let off = CHILD_OFFSETS[ci as usize];
        xi = [0.5 * (xi[0] + off[0]), 0.5 * (xi[1] + off[1])];
    }
    xi
}

/// Nodal interpolation of functions of `from` into `to` as a scalar matrix
/// acting on free values. Exact when `to` is a refinement of `from` with
/// order at least that of `from`.
pub fn transfer_matrix(from: &FeSpace, to: &FeSpace) -> Result<SparseMatrix> {
    if from.mesh().family() != to.mesh().family() {
        return Err(Error::MeshMismatch("meshes do not share a coarse mesh".into()));
    }
    let src_mesh = from.mesh();
    let dst_mesh = to.mesh();
    let mut done = vec![false; to.n_free()];
    let mut triplets = Vec::new();
    let nodes = local_nodes(to.order());
    for c in 0..to.n_cells() {
        let cell_nodes = to.cell_nodes(c);
        let mut path = None;
        for (j, &node) in cell_nodes.iter().enumerate() {
            let Some(f) = to.free_index(node as usize) else { continue };
            if done[f] {
                continue;
            }
            done[f] = true;
            let (root, p) = path.get_or_insert_with(|| dst_mesh.path(c));
            let xi_root = to_root(p, nodes[j]);
            let (sc, xi) = src_mesh.locate(*root, xi_root);
            let vals = shape_values(from.order(), xi);
            for (k, &sn) in from.cell_nodes(sc).iter().enumerate() {
                if vals[k] == 0.0 {
                    continue;
                }
                for &(sf, w) in from.expansion(sn as usize) {
                    triplets.push((f, sf as usize, vals[k] * w));
                }
            }
        }
    }
    let mut m = SparseMatrix::from_triplets(to.n_free(), from.n_free(), &triplets);
    for v in m.values_mut() {
        if v.abs() < 1e-15 {
            *v = 0.0;
        }
    }
    Ok(m)
}

/// Nodal interpolation of an interleaved free vector from one space into
/// another on a related mesh.
pub fn transfer(v: &[f64], from: &FeSpace, to: &FeSpace) -> Result<Vec<f64>> {
    check_len(from, v)?;
    if from.mesh().id() == to.mesh().id() && from.order() == to.order() {
        return Ok(v.to_vec());
    }
    let m = transfer_matrix(from, to)?;
    Ok(apply_scalar(&m, v))
}

/// Function affine in time on `[t0, t1]` with values `start` at `t0` and
/// `end` at `t1`.
#[derive(Debug, Clone)]
pub struct TimeAffine {
    pub t0: f64,
    pub t1: f64,
    pub start: LocalField,
    pub end: LocalField,
}

impl TimeAffine {
    pub fn at(&self, t: f64) -> LocalField {
        let s = (t - self.t0) / (self.t1 - self.t0);
        self.start.lin_comb(1.0 - s, &self.end, s)
    }

    /// Interpolant minus a field constant in time, `i_k z - z_n`.
    pub fn minus(&self, base: &LocalField) -> TimeAffine {
        TimeAffine {
            t0: self.t0,
            t1: self.t1,
            start: self.start.sub(base),
            end: self.end.sub(base),
        }
    }

    /// Integral over `[t0, t1]` as a field.
    pub fn integral(&self) -> LocalField {
        self.start.lin_comb(0.5 * (self.t1 - self.t0), &self.end, 0.5 * (self.t1 - self.t0))
    }
}

/// Linear interpolation in time between two piecewise constant values,
/// both already represented on the evaluation mesh.
pub fn temporal_linear_interp(start: &LocalField, end: &LocalField, t0: f64, t1: f64) -> TimeAffine {
    TimeAffine {
        t0,
        t1,
        start: start.clone(),
        end: end.clone(),
    }
}
