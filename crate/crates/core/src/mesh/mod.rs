//! Quadrilateral meshes with boundary markers, 2x2 patch structure and
//! 1-irregular hanging nodes.
//!
//! A [`Mesh`] keeps its whole refinement forest: every cell ever created is a
//! node of the tree, the active (leaf) cells form the triangulation. Meshes are
//! immutable; [`Mesh::refine`] returns a new mesh sharing the root cells, so
//! meshes of one family can exchange data through the tree (see
//! [`crate::fespace::transfer`]).
//!
//! Local conventions (counter-clockwise):
//! - vertex 0..3 at reference points (-1,-1), (1,-1), (1,1), (-1,1)
//! - face f runs from vertex f to vertex (f+1) % 4
//! - child i of a cell contains the parent's vertex i at its own local vertex i

mod channel;
mod partition;

pub use channel::{build_channel_geometry, ChannelGeometry};
pub use partition::TimePartition;

use std::collections::{HashMap, HashSet};
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};

const NONE: u32 = u32::MAX;

static NEXT_MESH_ID: AtomicU64 = AtomicU64::new(1);

fn next_id() -> u64 {
    NEXT_MESH_ID.fetch_add(1, Ordering::Relaxed)
}

/// Boundary condition class of a boundary face.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryMarker {
    Dirichlet,
    Robin,
    Neumann,
}

/// Reference offsets of the four children inside the parent cell.
pub(crate) const CHILD_OFFSETS: [[f64; 2]; 4] = [[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]];

#[derive(Debug, Clone, Copy)]
struct TreeCell {
    vertices: [u32; 4],
    parent: u32,
    first_child: u32,
    child_index: u8,
    level: u8,
}

#[inline]
pub(crate) fn edge_key(a: usize, b: usize) -> u64 {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    ((lo as u64) << 32) | hi as u64
}

/// Quadrilateral triangulation with a refinement tree.
#[derive(Debug, Clone)]
pub struct Mesh {
    id: u64,
    family: u64,
    vertices: Vec<[f64; 2]>,
    tree: Vec<TreeCell>,
    n_roots: usize,
    active: Vec<u32>,
    active_index: Vec<u32>,
    edge_midpoints: HashMap<u64, u32>,
    boundary: HashMap<u64, BoundaryMarker>,
}

impl Mesh {
    /// Builds a conforming mesh from quads given as counter-clockwise vertex
    /// lists. Every face not shared by two cells is a boundary face and gets
    /// the marker returned by `marker(a, b)` for its end points.
    pub fn new<F>(vertices: Vec<[f64; 2]>, cells: Vec<[usize; 4]>, marker: F) -> Result<Mesh>
    where
        F: Fn([f64; 2], [f64; 2]) -> BoundaryMarker,
    {
        if cells.is_empty() {
            return Err(Error::Geometry("mesh without cells".into()));
        }
        for (c, cell) in cells.iter().enumerate() {
            for &v in cell {
                if v >= vertices.len() {
                    return Err(Error::Geometry(format!("cell {c} references unknown vertex {v}")));
                }
            }
            let x = cell.map(|v| vertices[v]);
            for i in 0..4 {
                let p = x[(i + 3) % 4];
                let q = x[i];
                let r = x[(i + 1) % 4];
                let cross = (q[0] - p[0]) * (r[1] - q[1]) - (q[1] - p[1]) * (r[0] - q[0]);
                if cross <= 0.0 {
                    return Err(Error::Geometry(format!(
                        "cell {c} is not a convex counter-clockwise quad"
                    )));
                }
            }
        }
        let mut face_count: HashMap<u64, usize> = HashMap::new();
        for cell in &cells {
            for f in 0..4 {
                *face_count.entry(edge_key(cell[f], cell[(f + 1) % 4])).or_default() += 1;
            }
        }
        let mut boundary = HashMap::new();
        for cell in &cells {
            for f in 0..4 {
                let (a, b) = (cell[f], cell[(f + 1) % 4]);
                match face_count[&edge_key(a, b)] {
                    1 => {
                        boundary.insert(edge_key(a, b), marker(vertices[a], vertices[b]));
                    }
                    2 => {}
                    _ => {
                        return Err(Error::Geometry(format!(
                            "face ({a},{b}) shared by more than two cells"
                        )))
                    }
                }
            }
        }
        let tree: Vec<TreeCell> = cells
            .iter()
            .map(|c| TreeCell {
                vertices: c.map(|v| v as u32),
                parent: NONE,
                first_child: NONE,
                child_index: 0,
                level: 0,
            })
            .collect();
        let n = tree.len();
        Ok(Mesh {
            id: next_id(),
            family: next_id(),
            vertices,
            tree,
            n_roots: n,
            active: (0..n as u32).collect(),
            active_index: (0..n as u32).collect(),
            edge_midpoints: HashMap::new(),
            boundary,
        })
    }

    /// Uniform `nx` x `ny` mesh of the rectangle `[x0,x1] x [y0,y1]`.
    pub fn rectangle<F>(x0: f64, x1: f64, y0: f64, y1: f64, nx: usize, ny: usize, marker: F) -> Result<Mesh>
    where
        F: Fn([f64; 2], [f64; 2]) -> BoundaryMarker,
    {
        let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
        for j in 0..=ny {
            for i in 0..=nx {
                vertices.push([
                    x0 + (x1 - x0) * i as f64 / nx as f64,
                    y0 + (y1 - y0) * j as f64 / ny as f64,
                ]);
            }
        }
        let id = |i: usize, j: usize| j * (nx + 1) + i;
        let mut cells = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                cells.push([id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)]);
            }
        }
        Mesh::new(vertices, cells, marker)
    }

    /// Unique id of this mesh instance.
    pub fn id(&self) -> u64 {
        self.id
    }

    /// Id shared by all meshes refined from the same root cells.
    pub fn family(&self) -> u64 {
        self.family
    }

    pub fn n_cells(&self) -> usize {
        self.active.len()
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn vertex(&self, v: usize) -> [f64; 2] {
        self.vertices[v]
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn cell_vertices(&self, cell: usize) -> [usize; 4] {
        self.tree[self.active[cell] as usize].vertices.map(|v| v as usize)
    }

    pub fn cell_coords(&self, cell: usize) -> [[f64; 2]; 4] {
        self.cell_vertices(cell).map(|v| self.vertices[v])
    }

    /// Refinement generation of an active cell (0 for root cells).
    pub fn level(&self, cell: usize) -> usize {
        self.tree[self.active[cell] as usize].level as usize
    }

    pub fn max_level(&self) -> usize {
        (0..self.n_cells()).map(|c| self.level(c)).max().unwrap_or(0)
    }

    pub fn cell_area(&self, cell: usize) -> f64 {
        // bilinear map: area is exact with the 2-point rule
        let g = 1.0 / 3f64.sqrt();
        let x = self.cell_coords(cell);
        let mut area = 0.0;
        for &xi in &[-g, g] {
            for &eta in &[-g, g] {
                area += jacobian_det(&x, [xi, eta]);
            }
        }
        area
    }

    pub fn cell_center(&self, cell: usize) -> [f64; 2] {
        let x = self.cell_coords(cell);
        [
            0.25 * (x[0][0] + x[1][0] + x[2][0] + x[3][0]),
            0.25 * (x[0][1] + x[1][1] + x[2][1] + x[3][1]),
        ]
    }

    pub fn total_area(&self) -> f64 {
        (0..self.n_cells()).map(|c| self.cell_area(c)).sum()
    }

    /// Marker of the boundary face `(a, b)`, `None` for interior faces.
    pub fn boundary_marker(&self, a: usize, b: usize) -> Option<BoundaryMarker> {
        self.boundary.get(&edge_key(a, b)).copied()
    }

    /// Boundary faces of active cells as `(cell, local face, marker)`.
    pub fn boundary_faces(&self) -> Vec<(usize, usize, BoundaryMarker)> {
        let mut out = Vec::new();
        for c in 0..self.n_cells() {
            let v = self.cell_vertices(c);
            for f in 0..4 {
                if let Some(m) = self.boundary_marker(v[f], v[(f + 1) % 4]) {
                    out.push((c, f, m));
                }
            }
        }
        out
    }

    /// Midpoint vertex of the edge `(a, b)` if that edge has been split.
    pub fn edge_midpoint(&self, a: usize, b: usize) -> Option<usize> {
        self.edge_midpoints.get(&edge_key(a, b)).map(|&m| m as usize)
    }

    /// Hanging vertex on face `f` of an active cell: the face has been split
    /// by the finer neighbour.
    pub fn hanging_vertex(&self, cell: usize, f: usize) -> Option<usize> {
        let v = self.cell_vertices(cell);
        self.edge_midpoint(v[f], v[(f + 1) % 4])
    }

    /// Groups of four active siblings, listed in child order.
    pub fn patch_groups(&self) -> Vec<[usize; 4]> {
        let mut seen = HashSet::new();
        let mut groups = Vec::new();
        for c in 0..self.n_cells() {
            let t = self.tree[self.active[c] as usize];
            if t.parent == NONE || !seen.insert(t.parent) {
                continue;
            }
            let first = self.tree[t.parent as usize].first_child;
            let kids: Vec<u32> = (0..4).map(|i| self.active_index[(first + i) as usize]).collect();
            if kids.iter().all(|&k| k != NONE) {
                groups.push([kids[0] as usize, kids[1] as usize, kids[2] as usize, kids[3] as usize]);
            }
        }
        groups
    }

    /// True if every active cell belongs to a complete group of four active
    /// siblings.
    pub fn has_patch_structure(&self) -> bool {
        self.patch_groups().len() * 4 == self.n_cells()
    }

    /// Vertices of the parent of an active cell, if it has one.
    pub fn parent_vertices(&self, cell: usize) -> Option<[usize; 4]> {
        let t = self.tree[self.active[cell] as usize];
        (t.parent != NONE).then(|| self.tree[t.parent as usize].vertices.map(|v| v as usize))
    }

    /// Position of an active cell among its siblings.
    pub fn child_index(&self, cell: usize) -> usize {
        self.tree[self.active[cell] as usize].child_index as usize
    }

    /// Root cell and child-index path from the root down to an active cell.
    pub(crate) fn path(&self, cell: usize) -> (usize, Vec<u8>) {
        let mut t = self.active[cell];
        let mut path = Vec::new();
        while self.tree[t as usize].parent != NONE {
            path.push(self.tree[t as usize].child_index);
            t = self.tree[t as usize].parent;
        }
        path.reverse();
        (t as usize, path)
    }

    /// Locates a point given in reference coordinates of a root cell: returns
    /// the active cell containing it and the local reference coordinates.
    pub(crate) fn locate(&self, root: usize, mut xi: [f64; 2]) -> (usize, [f64; 2]) {
        let mut t = root;
        loop {
            let cell = self.tree[t];
            if cell.first_child == NONE {
                return (self.active_index[t] as usize, xi);
            }
            let right = xi[0] >= 0.0;
            let top = xi[1] >= 0.0;
            let child = match (right, top) {
                (false, false) => 0,
                (true, false) => 1,
                (true, true) => 2,
                (false, true) => 3,
            };
            let off = CHILD_OFFSETS[child];
            xi = [2.0 * xi[0] - off[0], 2.0 * xi[1] - off[1]];
            t = (cell.first_child + child as u32) as usize;
        }
    }

    /// Number of roots of the refinement forest.
    pub fn n_roots(&self) -> usize {
        self.n_roots
    }

    /// Refines the marked cells. Marking is closed first: a marked cell drags
    /// its three siblings along, and cells are added until every face is at
    /// most 1-irregular.
    pub fn refine(&self, marked: &[usize]) -> Mesh {
        let mut flag = vec![false; self.n_cells()];
        for &c in marked {
            flag[c] = true;
        }
        if !flag.iter().any(|&f| f) {
            return self.clone();
        }
        self.close_marking(&mut flag);

        let mut mesh = self.clone();
        mesh.id = next_id();
        let mut new_active = Vec::with_capacity(self.n_cells() + 3 * flag.iter().filter(|&&f| f).count());
        for (c, &t) in self.active.iter().enumerate() {
            if flag[c] {
                let first = mesh.split(t as usize);
                new_active.extend(first..first + 4);
            } else {
                new_active.push(t);
            }
        }
        mesh.active = new_active;
        mesh.active_index = vec![NONE; mesh.tree.len()];
        for (i, &t) in mesh.active.iter().enumerate() {
            mesh.active_index[t as usize] = i as u32;
        }
        mesh
    }

    /// Refines every active cell once.
    pub fn refine_global(&self) -> Mesh {
        let all: Vec<usize> = (0..self.n_cells()).collect();
        self.refine(&all)
    }

    fn siblings(&self, cell: usize) -> Option<[usize; 4]> {
        let t = self.tree[self.active[cell] as usize];
        if t.parent == NONE {
            return None;
        }
        let first = self.tree[t.parent as usize].first_child;
        let s = [0u32, 1, 2, 3].map(|i| self.active_index[(first + i) as usize]);
        if s.contains(&NONE) {
            None
        } else {
            Some(s.map(|x| x as usize))
        }
    }

    fn close_marking(&self, flag: &mut [bool]) {
        let mut faces: HashMap<u64, Vec<u32>> = HashMap::with_capacity(2 * self.n_cells());
        for c in 0..self.n_cells() {
            let v = self.cell_vertices(c);
            for f in 0..4 {
                faces.entry(edge_key(v[f], v[(f + 1) % 4])).or_default().push(c as u32);
            }
        }
        loop {
            let mut changed = false;
            for c in 0..self.n_cells() {
                if flag[c] {
                    if let Some(sib) = self.siblings(c) {
                        for s in sib {
                            if !flag[s] {
                                flag[s] = true;
                                changed = true;
                            }
                        }
                    }
                }
            }
            for c in 0..self.n_cells() {
                if flag[c] {
                    continue;
                }
                let v = self.cell_vertices(c);
                'faces: for f in 0..4 {
                    let (a, b) = (v[f], v[(f + 1) % 4]);
                    let Some(m) = self.edge_midpoint(a, b) else { continue };
                    for half in [edge_key(a, m), edge_key(m, b)] {
                        if let Some(cs) = faces.get(&half) {
                            if cs.iter().any(|&n| n as usize != c && flag[n as usize]) {
                                flag[c] = true;
                                changed = true;
                                break 'faces;
                            }
                        }
                    }
                }
            }
            if !changed {
                break;
            }
        }
    }

    fn midpoint_vertex(&mut self, a: usize, b: usize) -> u32 {
        let key = edge_key(a, b);
        if let Some(&m) = self.edge_midpoints.get(&key) {
            return m;
        }
        let (pa, pb) = (self.vertices[a], self.vertices[b]);
        let m = self.vertices.len() as u32;
        self.vertices.push([0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]);
        self.edge_midpoints.insert(key, m);
        if let Some(marker) = self.boundary.get(&key).copied() {
            self.boundary.insert(edge_key(a, m as usize), marker);
            self.boundary.insert(edge_key(m as usize, b), marker);
        }
        m
    }

    fn split(&mut self, t: usize) -> u32 {
        let parent = self.tree[t];
        let v = parent.vertices.map(|x| x as usize);
        let m: Vec<u32> = (0..4).map(|f| self.midpoint_vertex(v[f], v[(f + 1) % 4])).collect();
        let x = v.map(|i| self.vertices[i]);
        let center = self.vertices.len() as u32;
        self.vertices.push([
            0.25 * (x[0][0] + x[1][0] + x[2][0] + x[3][0]),
            0.25 * (x[0][1] + x[1][1] + x[2][1] + x[3][1]),
        ]);
        let pv = parent.vertices;
        let kids = [
            [pv[0], m[0], center, m[3]],
            [m[0], pv[1], m[1], center],
            [center, m[1], pv[2], m[2]],
            [m[3], center, m[2], pv[3]],
        ];
        let first = self.tree.len() as u32;
        for (i, k) in kids.into_iter().enumerate() {
            self.tree.push(TreeCell {
                vertices: k,
                parent: t as u32,
                first_child: NONE,
                child_index: i as u8,
                level: parent.level + 1,
            });
        }
        self.tree[t].first_child = first;
        first
    }

    /// Checks that every face is at most 1-irregular.
    pub fn is_one_irregular(&self) -> bool {
        for c in 0..self.n_cells() {
            let v = self.cell_vertices(c);
            for f in 0..4 {
                let (a, b) = (v[f], v[(f + 1) % 4]);
                if let Some(m) = self.edge_midpoint(a, b) {
                    if self.edge_midpoint(a, m).is_some() || self.edge_midpoint(m, b).is_some() {
                        return false;
                    }
                }
            }
        }
        true
    }

    /// Number of distinct vertices used by active cells.
    pub fn n_active_vertices(&self) -> usize {
        let mut used = vec![false; self.vertices.len()];
        for c in 0..self.n_cells() {
            for v in self.cell_vertices(c) {
                used[v] = true;
            }
        }
        used.iter().filter(|&&u| u).count()
    }

    /// Number of distinct faces of active cells (a split face counts as its
    /// two halves).
    pub fn n_active_edges(&self) -> usize {
        let mut edges = HashSet::new();
        for c in 0..self.n_cells() {
            let v = self.cell_vertices(c);
            for f in 0..4 {
                edges.insert(edge_key(v[f], v[(f + 1) % 4]));
            }
        }
        // faces of coarse cells that are split count through their halves
        edges
            .iter()
            .filter(|&&k| !self.edge_midpoints.contains_key(&k))
            .count()
    }
}

/// Determinant of the bilinear map of a quad at reference point `xi`.
pub(crate) fn jacobian_det(x: &[[f64; 2]; 4], xi: [f64; 2]) -> f64 {
    let j = bilinear_jacobian(x, xi);
    j[0][0] * j[1][1] - j[0][1] * j[1][0]
}

/// Jacobian `d x / d xi` of the bilinear map, `j[row = x comp][col = xi comp]`.
pub(crate) fn bilinear_jacobian(x: &[[f64; 2]; 4], xi: [f64; 2]) -> [[f64; 2]; 2] {
    let (s, t) = (xi[0], xi[1]);
    let ds = [-(1.0 - t) * 0.25, (1.0 - t) * 0.25, (1.0 + t) * 0.25, -(1.0 + t) * 0.25];
    let dt = [-(1.0 - s) * 0.25, -(1.0 + s) * 0.25, (1.0 + s) * 0.25, (1.0 - s) * 0.25];
    let mut j = [[0.0; 2]; 2];
    for v in 0..4 {
        for d in 0..2 {
            j[d][0] += x[v][d] * ds[v];
            j[d][1] += x[v][d] * dt[v];
        }
    }
    j
}

/// Physical point of the bilinear map at reference point `xi`.
pub(crate) fn bilinear_map(x: &[[f64; 2]; 4], xi: [f64; 2]) -> [f64; 2] {
    let (s, t) = (xi[0], xi[1]);
    let n = [
        0.25 * (1.0 - s) * (1.0 - t),
        0.25 * (1.0 + s) * (1.0 - t),
        0.25 * (1.0 + s) * (1.0 + t),
        0.25 * (1.0 - s) * (1.0 + t),
    ];
    let mut p = [0.0; 2];
    for v in 0..4 {
        p[0] += n[v] * x[v][0];
        p[1] += n[v] * x[v][1];
    }
    p
}
