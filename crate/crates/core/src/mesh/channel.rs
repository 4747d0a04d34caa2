//! Channel with two cooled recesses, the geometry of the flame benchmark.

use super::{BoundaryMarker, Mesh};
use crate::error::{Error, Result};

/// Parameters of the notched channel `(0,length) x (0,height)` with the
/// recesses `[notch_x0,notch_x1] x [0,notch_depth]` and
/// `[notch_x0,notch_x1] x [height-notch_depth,height]` removed.
///
/// The defaults reproduce a coarse mesh of 896 cells with 985 vertices and
/// 1880 edges (64 x 16 cells of size 0.9375, 2 x 16 x 4 removed).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelGeometry {
    pub length: f64,
    pub height: f64,
    pub notch_x0: f64,
    pub notch_x1: f64,
    pub notch_depth: f64,
    pub initial_h: f64,
}

impl Default for ChannelGeometry {
    fn default() -> Self {
        ChannelGeometry {
            length: 60.0,
            height: 15.0,
            notch_x0: 15.0,
            notch_x1: 30.0,
            notch_depth: 3.75,
            initial_h: 0.9375,
        }
    }
}

impl ChannelGeometry {
    pub fn build(&self) -> Result<Mesh> {
        build_channel_geometry(
            self.length,
            self.height,
            self.notch_x0,
            self.notch_x1,
            self.notch_depth,
            self.initial_h,
        )
    }

    /// Measure of the domain.
    pub fn area(&self) -> f64 {
        self.length * self.height - 2.0 * (self.notch_x1 - self.notch_x0) * self.notch_depth
    }
}

fn blocks(len: f64, size: f64, what: &str) -> Result<usize> {
    let n = len / size;
    let r = n.round();
    if len < 0.0 || (n - r).abs() > 1e-9 * n.max(1.0) {
        return Err(Error::Geometry(format!(
            "{what} = {len} is not a multiple of the patch size 2*initial_h = {size}"
        )));
    }
    Ok(r as usize)
}

/// Builds the all-quad mesh of the notched channel. Cells have size
/// `initial_h` and come in 2x2 patches (the mesh is one global refinement of
/// a macro mesh of size `2 * initial_h`). Faces on `x = 0` are Dirichlet,
/// the recess walls are Robin, everything else is Neumann.
pub fn build_channel_geometry(
    length: f64,
    height: f64,
    notch_x0: f64,
    notch_x1: f64,
    notch_depth: f64,
    initial_h: f64,
) -> Result<Mesh> {
    if !(initial_h > 0.0) {
        return Err(Error::Geometry("initial_h must be positive".into()));
    }
    if !(0.0 < notch_x0 && notch_x0 < notch_x1 && notch_x1 < length) {
        return Err(Error::Geometry(format!(
            "need 0 < notch_x0 < notch_x1 < length, got {notch_x0}, {notch_x1}, {length}"
        )));
    }
    if !(notch_depth >= 0.0 && 2.0 * notch_depth < height) {
        return Err(Error::Geometry(format!(
            "need 0 <= 2*notch_depth < height, got depth {notch_depth}, height {height}"
        )));
    }
    let size = 2.0 * initial_h;
    let nx = blocks(length, size, "length")?;
    let ny = blocks(height, size, "height")?;
    let i0 = blocks(notch_x0, size, "notch_x0")?;
    let i1 = blocks(notch_x1, size, "notch_x1")?;
    let jd = blocks(notch_depth, size, "notch_depth")?;

    let removed = |i: usize, j: usize| i >= i0 && i < i1 && (j < jd || j >= ny - jd);
    let mut index = vec![usize::MAX; (nx + 1) * (ny + 1)];
    let mut vertices = Vec::new();
    let mut cells = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            if removed(i, j) {
                continue;
            }
            let mut cell = [0usize; 4];
            for (k, (di, dj)) in [(0, 0), (1, 0), (1, 1), (0, 1)].into_iter().enumerate() {
                let g = (j + dj) * (nx + 1) + i + di;
                if index[g] == usize::MAX {
                    index[g] = vertices.len();
                    vertices.push([(i + di) as f64 * size, (j + dj) as f64 * size]);
                }
                cell[k] = index[g];
            }
            cells.push(cell);
        }
    }

    let tol = 1e-9 * size;
    let marker = move |a: [f64; 2], b: [f64; 2]| {
        let m = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
        if a[0].abs() < tol && b[0].abs() < tol {
            BoundaryMarker::Dirichlet
        } else if notch_depth > 0.0
            && m[0] > notch_x0 - tol
            && m[0] < notch_x1 + tol
            && (m[1] < notch_depth + tol || m[1] > height - notch_depth - tol)
        {
            BoundaryMarker::Robin
        } else {
            BoundaryMarker::Neumann
        }
    };
    let mesh = Mesh::new(vertices, cells, marker)?;
    Ok(mesh.refine_global())
}
