//! Scalar continuous Lagrange spaces cG(p), p in {1, 2}, on quadrilateral
//! meshes with hanging-node and Dirichlet constraints.
//!
//! Every geometric node (vertex, and for p = 2 also face midpoint and cell
//! center) carries a node value. Hanging nodes are constrained,
//! `g_i = sum_j c_ij g_j`, with masters that are never constrained
//! themselves. The remaining "free" nodes are the unknowns of the linear
//! systems; Dirichlet nodes are free nodes with fixed values.
//!
//! Vector fields `(theta, Y)` are stored blocked: `[theta nodes..., Y nodes...]`.

mod assembly;
pub mod element;
mod field;
mod interp;

pub use field::{CellGeometry, LocalField};
pub(crate) use assembly::n_quad;
pub(crate) use field::{face_measure as field_face_measure, shape_at as field_shape_at};
pub(crate) use interp::{apply_scalar, apply_scalar_transpose};
pub use interp::{
    embed_cg1_to_cg2, patch_interp_cg1_to_cg2, restrict_cg2_to_cg1, temporal_linear_interp,
    transfer, transfer_matrix, TimeAffine,
};

use std::collections::HashMap;
use std::sync::{Arc, OnceLock};

use crate::error::{Error, Result};
use crate::linalg::SparsityPattern;
use crate::mesh::{edge_key, BoundaryMarker, Mesh};
use element::n_local;

const NONE: u32 = u32::MAX;

/// Number of solution components (theta, Y).
pub const N_COMP: usize = 2;

/// A cG(p) space on one mesh.
#[derive(Debug)]
pub struct FeSpace {
    mesh: Arc<Mesh>,
    order: usize,
    cell_nodes: Vec<u32>,
    coords: Vec<[f64; 2]>,
    node_to_free: Vec<u32>,
    n_free: usize,
    exp_offsets: Vec<u32>,
    exp_entries: Vec<(u32, f64)>,
    dirichlet: Vec<bool>,
    robin_faces: Vec<(u32, u8)>,
    pattern: OnceLock<Arc<SparsityPattern>>,
    assembly: OnceLock<assembly::AssemblyCache>,
}

impl FeSpace {
    pub fn new(mesh: Arc<Mesh>, order: usize) -> Result<FeSpace> {
        if !(1..=2).contains(&order) {
            return Err(Error::Config(format!("unsupported element order {order}")));
        }
        let nl = n_local(order);
        let n_cells = mesh.n_cells();
        let mut vertex_node = vec![NONE; mesh.n_vertices()];
        let mut coords: Vec<[f64; 2]> = Vec::new();
        let mut cell_nodes = vec![NONE; n_cells * nl];

        for c in 0..n_cells {
            for (j, v) in mesh.cell_vertices(c).into_iter().enumerate() {
                if vertex_node[v] == NONE {
                    vertex_node[v] = coords.len() as u32;
                    coords.push(mesh.vertex(v));
                }
                cell_nodes[c * nl + j] = vertex_node[v];
            }
        }

        let mut constraints: HashMap<u32, Vec<(u32, f64)>> = HashMap::new();
        if order == 1 {
            for c in 0..n_cells {
                let v = mesh.cell_vertices(c);
                for f in 0..4 {
                    if let Some(m) = mesh.hanging_vertex(c, f) {
                        let (a, b) = (v[f], v[(f + 1) % 4]);
                        constraints.insert(
                            vertex_node[m],
                            vec![(vertex_node[a], 0.5), (vertex_node[b], 0.5)],
                        );
                    }
                }
            }
        } else {
            let mut edge_node: HashMap<u64, u32> = HashMap::new();
            for c in 0..n_cells {
                let v = mesh.cell_vertices(c);
                for f in 0..4 {
                    let (a, b) = (v[f], v[(f + 1) % 4]);
                    let node = match mesh.edge_midpoint(a, b) {
                        Some(m) => vertex_node[m],
                        None => *edge_node.entry(edge_key(a, b)).or_insert_with(|| {
                            let pa = mesh.vertex(a);
                            let pb = mesh.vertex(b);
                            coords.push([0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]);
                            (coords.len() - 1) as u32
                        }),
                    };
                    cell_nodes[c * nl + 4 + f] = node;
                }
                cell_nodes[c * nl + 8] = coords.len() as u32;
                coords.push(mesh.cell_center(c));
            }
            for c in 0..n_cells {
                let v = mesh.cell_vertices(c);
                for f in 0..4 {
                    let (a, b) = (v[f], v[(f + 1) % 4]);
                    if let Some(m) = mesh.edge_midpoint(a, b) {
                        let (na, nm, nb) = (vertex_node[a], vertex_node[m], vertex_node[b]);
                        let near_a = edge_node[&edge_key(a, m)];
                        let near_b = edge_node[&edge_key(m, b)];
                        constraints.insert(near_a, vec![(na, 0.375), (nm, 0.75), (nb, -0.125)]);
                        constraints.insert(near_b, vec![(na, -0.125), (nm, 0.75), (nb, 0.375)]);
                    }
                }
            }
        }

        // resolve chains so that masters are never constrained
        let keys: Vec<u32> = constraints.keys().copied().collect();
        loop {
            let mut changed = false;
            for &k in &keys {
                let entries = constraints[&k].clone();
                if entries.iter().any(|(m, _)| constraints.contains_key(m)) {
                    let mut resolved: Vec<(u32, f64)> = Vec::new();
                    for (m, w) in entries {
                        match constraints.get(&m) {
                            Some(sub) => {
                                for &(s, ws) in sub {
                                    resolved.push((s, w * ws));
                                }
                            }
                            None => resolved.push((m, w)),
                        }
                    }
                    resolved.sort_by_key(|e| e.0);
                    let mut merged: Vec<(u32, f64)> = Vec::with_capacity(resolved.len());
                    for (m, w) in resolved {
                        match merged.last_mut() {
                            Some(last) if last.0 == m => last.1 += w,
                            _ => merged.push((m, w)),
                        }
                    }
                    constraints.insert(k, merged);
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }

        let n_nodes = coords.len();
        let mut node_to_free = vec![NONE; n_nodes];
        let mut n_free = 0usize;
        for (i, slot) in node_to_free.iter_mut().enumerate() {
            if !constraints.contains_key(&(i as u32)) {
                *slot = n_free as u32;
                n_free += 1;
            }
        }
        // bandwidth-reducing renumbering of the free nodes
        {
            let mut adj: Vec<Vec<u32>> = vec![Vec::new(); n_free];
            let mut frees: Vec<u32> = Vec::with_capacity(3 * nl);
            for c in 0..n_cells {
                frees.clear();
                for &node in &cell_nodes[c * nl..(c + 1) * nl] {
                    match constraints.get(&node) {
                        Some(list) => frees.extend(list.iter().map(|&(m, _)| node_to_free[m as usize])),
                        None => frees.push(node_to_free[node as usize]),
                    }
                }
                for &i in &frees {
                    adj[i as usize].extend(frees.iter().copied().filter(|&j| j != i));
                }
            }
            for a in &mut adj {
                a.sort_unstable();
                a.dedup();
            }
            let perm = reverse_cuthill_mckee(&adj);
            let mut new_index = vec![0u32; n_free];
            for (new, &old) in perm.iter().enumerate() {
                new_index[old as usize] = new as u32;
            }
            for slot in node_to_free.iter_mut().filter(|s| **s != NONE) {
                *slot = new_index[*slot as usize];
            }
        }

        let mut exp_offsets = Vec::with_capacity(n_nodes + 1);
        let mut exp_entries = Vec::with_capacity(n_nodes);
        exp_offsets.push(0u32);
        for i in 0..n_nodes {
            match constraints.get(&(i as u32)) {
                Some(list) => {
                    for &(m, w) in list {
                        exp_entries.push((node_to_free[m as usize], w));
                    }
                }
                None => exp_entries.push((node_to_free[i], 1.0)),
            }
            exp_offsets.push(exp_entries.len() as u32);
        }

        let mut dirichlet = vec![false; n_nodes];
        let mut robin_faces = Vec::new();
        for (c, f, marker) in mesh.boundary_faces() {
            match marker {
                BoundaryMarker::Dirichlet => {
                    dirichlet[cell_nodes[c * nl + f] as usize] = true;
                    dirichlet[cell_nodes[c * nl + (f + 1) % 4] as usize] = true;
                    if order == 2 {
                        dirichlet[cell_nodes[c * nl + 4 + f] as usize] = true;
                    }
                }
                BoundaryMarker::Robin => robin_faces.push((c as u32, f as u8)),
                BoundaryMarker::Neumann => {}
            }
        }

        Ok(FeSpace {
            mesh,
            order,
            cell_nodes,
            coords,
            node_to_free,
            n_free,
            exp_offsets,
            exp_entries,
            dirichlet,
            robin_faces,
            pattern: OnceLock::new(),
            assembly: OnceLock::new(),
        })
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn n_local(&self) -> usize {
        n_local(self.order)
    }

    /// Number of nodes, constrained ones included (scalar).
    pub fn n_nodes(&self) -> usize {
        self.coords.len()
    }

    /// Number of unknowns of the scalar space after hanging-node elimination.
    pub fn n_free(&self) -> usize {
        self.n_free
    }

    pub fn n_cells(&self) -> usize {
        self.mesh.n_cells()
    }

    pub fn cell_nodes(&self, cell: usize) -> &[u32] {
        let nl = self.n_local();
        &self.cell_nodes[cell * nl..(cell + 1) * nl]
    }

    pub fn node_coords(&self, node: usize) -> [f64; 2] {
        self.coords[node]
    }

    /// Free index of a node, `None` for hanging nodes.
    pub fn free_index(&self, node: usize) -> Option<usize> {
        let f = self.node_to_free[node];
        (f != NONE).then_some(f as usize)
    }

    pub fn is_constrained(&self, node: usize) -> bool {
        self.node_to_free[node] == NONE
    }

    /// `(free index, weight)` pairs expressing a node through free nodes.
    pub fn expansion(&self, node: usize) -> &[(u32, f64)] {
        &self.exp_entries[self.exp_offsets[node] as usize..self.exp_offsets[node + 1] as usize]
    }

    pub fn is_dirichlet(&self, node: usize) -> bool {
        self.dirichlet[node]
    }

    /// Dirichlet flag per free index.
    pub fn dirichlet_free(&self) -> Vec<bool> {
        let mut out = vec![false; self.n_free];
        for (i, &d) in self.dirichlet.iter().enumerate() {
            if d {
                if let Some(f) = self.free_index(i) {
                    out[f] = true;
                }
            }
        }
        out
    }

    /// Robin faces as `(cell, local face)`.
    pub fn robin_faces(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.robin_faces.iter().map(|&(c, f)| (c as usize, f as usize))
    }

    /// Node values (scalar) from free values.
    pub fn expand_scalar(&self, free: &[f64]) -> Vec<f64> {
        (0..self.n_nodes())
            .map(|i| self.expansion(i).iter().map(|&(f, w)| w * free[f as usize]).sum())
            .collect()
    }

    /// Free values (scalar) read off node values.
    pub fn restrict_scalar(&self, nodes: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_free];
        for (i, &v) in nodes.iter().enumerate() {
            if let Some(f) = self.free_index(i) {
                out[f] = v;
            }
        }
        out
    }

    /// Two-component node vector from an interleaved free vector
    /// (`2 * free + comp`).
    pub fn expand(&self, free: &[f64]) -> Vec<f64> {
        let n = self.n_nodes();
        let mut out = vec![0.0; N_COMP * n];
        for i in 0..n {
            for &(f, w) in self.expansion(i) {
                for c in 0..N_COMP {
                    out[c * n + i] += w * free[N_COMP * f as usize + c];
                }
            }
        }
        out
    }

    /// Interleaved free vector from a two-component node vector.
    pub fn restrict(&self, nodes: &[f64]) -> Vec<f64> {
        let n = self.n_nodes();
        let mut out = vec![0.0; N_COMP * self.n_free];
        for i in 0..n {
            if let Some(f) = self.free_index(i) {
                for c in 0..N_COMP {
                    out[N_COMP * f + c] = nodes[c * n + i];
                }
            }
        }
        out
    }

    /// Re-evaluates hanging node values from their masters.
    pub fn distribute(&self, nodes: &mut [f64]) {
        let free = self.restrict(nodes);
        nodes.copy_from_slice(&self.expand(&free));
    }

    /// Nodal interpolation of a vector function.
    pub fn interpolate<F: Fn([f64; 2]) -> [f64; 2]>(&self, f: F) -> Vec<f64> {
        let n = self.n_nodes();
        let mut out = vec![0.0; N_COMP * n];
        for i in 0..n {
            let v = f(self.coords[i]);
            for c in 0..N_COMP {
                out[c * n + i] = v[c];
            }
        }
        self.distribute(&mut out);
        out
    }

    /// Overwrites Dirichlet node values with `g`.
    pub fn apply_dirichlet<F: Fn([f64; 2]) -> [f64; 2]>(&self, nodes: &mut [f64], g: F) {
        let n = self.n_nodes();
        for i in 0..n {
            if self.dirichlet[i] {
                let v = g(self.coords[i]);
                for c in 0..N_COMP {
                    nodes[c * n + i] = v[c];
                }
            }
        }
    }

    pub(crate) fn assembly(&self) -> &assembly::AssemblyCache {
        self.assembly.get_or_init(|| assembly::AssemblyCache::new(self))
    }

    /// Sparsity of the interleaved two-component system on free unknowns.
    pub fn pattern(&self) -> &Arc<SparsityPattern> {
        self.pattern.get_or_init(|| {
            let nl = self.n_local();
            let mut rows: Vec<Vec<u32>> = vec![Vec::new(); self.n_free];
            let mut frees: Vec<u32> = Vec::with_capacity(nl * 3);
            for c in 0..self.n_cells() {
                frees.clear();
                for &node in self.cell_nodes(c) {
                    frees.extend(self.expansion(node as usize).iter().map(|e| e.0));
                }
                frees.sort_unstable();
                frees.dedup();
                for &i in &frees {
                    rows[i as usize].extend_from_slice(&frees);
                }
            }
            for r in &mut rows {
                r.sort_unstable();
                r.dedup();
            }
            Arc::new(SparsityPattern::from_scalar_rows(&rows, N_COMP))
        })
    }
}

/// Reverse Cuthill-McKee ordering of a symmetric graph; returns the old
/// index of every new position.
fn reverse_cuthill_mckee(adj: &[Vec<u32>]) -> Vec<u32> {
    let n = adj.len();
    let mut seen = vec![false; n];
    let mut order: Vec<u32> = Vec::with_capacity(n);
    let mut by_degree: Vec<u32> = (0..n as u32).collect();
    by_degree.sort_by_key(|&i| (adj[i as usize].len(), i));
    let mut queue = std::collections::VecDeque::new();
    let mut next: Vec<u32> = Vec::new();
    for &start in &by_degree {
        if seen[start as usize] {
            continue;
        }
        seen[start as usize] = true;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            order.push(i);
            next.clear();
            next.extend(adj[i as usize].iter().copied().filter(|&j| !seen[j as usize]));
            next.sort_by_key(|&j| (adj[j as usize].len(), j));
            for &j in &next {
                seen[j as usize] = true;
                queue.push_back(j);
            }
        }
    }
    order.reverse();
    order
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{BoundaryMarker, ChannelGeometry, Mesh};

    fn square(n: usize) -> Arc<Mesh> {
        Arc::new(
            Mesh::rectangle(0.0, 1.0, 0.0, 1.0, n, n, |a, b| {
                if a[0] == 0.0 && b[0] == 0.0 {
                    BoundaryMarker::Dirichlet
                } else {
                    BoundaryMarker::Neumann
                }
            })
            .unwrap(),
        )
    }

    #[test]
    fn channel_dof_counts_match_grid_caption() {
        let mesh = Arc::new(ChannelGeometry::default().build().unwrap());
        let q1 = FeSpace::new(mesh.clone(), 1).unwrap();
        let q2 = FeSpace::new(mesh, 2).unwrap();
        assert_eq!(2 * q1.n_nodes(), 1970);
        assert_eq!(2 * q2.n_nodes(), 7522);
    }

    #[test]
    fn hanging_nodes_are_constrained() {
        let mesh = square(2);
        let fine = Arc::new(mesh.refine(&[0, 1, 2, 3]).refine(&[0]));
        assert!(fine.is_one_irregular());
        for order in 1..=2 {
            let space = FeSpace::new(fine.clone(), order).unwrap();
            let constrained = (0..space.n_nodes()).filter(|&i| space.is_constrained(i)).count();
            // a refined 2x2 block in the corner of a 4x4 grid splits four
            // coarse faces
            let expected = if order == 1 { 4 } else { 8 };
            assert_eq!(constrained, expected, "order {order}");
            for i in 0..space.n_nodes() {
                for &(f, _) in space.expansion(i) {
                    assert!(f != NONE);
                }
            }
        }
    }

    #[test]
    fn interpolation_of_bilinear_is_consistent_with_constraints() {
        let mesh = square(2);
        let fine = Arc::new(mesh.refine(&[0, 1, 2, 3]).refine(&[0]));
        for order in 1..=2 {
            let space = FeSpace::new(fine.clone(), order).unwrap();
            let f = |x: [f64; 2]| [1.0 + 2.0 * x[0] - x[1] + 3.0 * x[0] * x[1], x[0]];
            let v = space.interpolate(f);
            let n = space.n_nodes();
            for i in 0..n {
                let e = f(space.node_coords(i));
                assert!((v[i] - e[0]).abs() < 1e-13);
                assert!((v[n + i] - e[1]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn dirichlet_nodes_on_left_edge() {
        let space = FeSpace::new(square(3), 2).unwrap();
        let count = (0..space.n_nodes()).filter(|&i| space.is_dirichlet(i)).count();
        assert_eq!(count, 7);
    }
}
