//! Residuals of the dG(0) step tested with arbitrary (possibly
//! time-affine, discontinuous, higher order) weights, optionally localized
//! by the cG(1) partition of unity.

use super::assemble::assemble_step;
use super::Problem;
use crate::fespace::element::{face_point, gauss_1d, Quadrature, ShapeTable};
use crate::fespace::{field_face_measure, field_shape_at, CellGeometry, FeSpace, LocalField, TimeAffine};
use crate::linalg::SparseMatrix;
use crate::mesh::{BoundaryMarker, Mesh};

/// Value of the solution before the interval.
#[derive(Debug, Clone, Copy)]
pub enum Previous<'a> {
    /// discrete state of the previous interval on the current mesh
    Field(&'a LocalField),
    /// the exact initial data of the problem
    Initial,
}

/// Weighted residual: the total and, if requested, its split over the cG(1)
/// partition of unity (indexed by free scalar cG(1) unknowns).
#[derive(Debug, Clone, Default)]
pub struct Localized {
    pub total: f64,
    pub dof: Option<Vec<f64>>,
}

struct Tables {
    quad: Quadrature,
    t1: ShapeTable,
    t2: ShapeTable,
}

impl Tables {
    fn new(max_order: usize) -> Tables {
        let quad = Quadrature::tensor(max_order + 2);
        let t1 = ShapeTable::new(1, &quad.points);
        let t2 = ShapeTable::new(2, &quad.points);
        Tables { quad, t1, t2 }
    }

    fn table(&self, order: usize) -> &ShapeTable {
        if order == 1 {
            &self.t1
        } else {
            &self.t2
        }
    }
}

/// Value and physical gradient of a field at quadrature point `q`.
#[inline]
fn eval(f: &LocalField, cell: usize, tabs: &Tables, geo: &CellGeometry, q: usize) -> ([f64; 2], [[f64; 2]; 2]) {
    let (v, g) = f.eval_table(cell, tabs.table(f.order()), q);
    (v, [geo.grad(q, g[0]), geo.grad(q, g[1])])
}

#[inline]
fn dot2(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// Accumulates `A0 chi_i + A1 . grad chi_i` into the PU indicators.
struct PuAccumulator<'a> {
    space: &'a FeSpace,
    dof: Vec<f64>,
}

impl PuAccumulator<'_> {
    #[inline]
    fn add(&mut self, cell: usize, tabs: &Tables, geo: &CellGeometry, q: usize, a0: f64, a1: [f64; 2]) {
        let nodes = self.space.cell_nodes(cell);
        for (j, &node) in nodes.iter().enumerate() {
            let g = geo.grad(q, tabs.t1.grad(q, j));
            let v = geo.jxw[q] * (a0 * tabs.t1.value(q, j) + dot2(a1, g));
            for &(f, w) in self.space.expansion(node as usize) {
                self.dof[f as usize] += w * v;
            }
        }
    }

    fn add_point(&mut self, cell: usize, xi: [f64; 2], v: f64) {
        let (vals, _) = field_shape_at(1, xi);
        for (j, &node) in self.space.cell_nodes(cell).iter().enumerate() {
            for &(f, w) in self.space.expansion(node as usize) {
                self.dof[f as usize] += w * vals[j] * v;
            }
        }
    }
}

fn check_pu(mesh: &Mesh, pu: Option<&FeSpace>) {
    if let Some(s) = pu {
        assert_eq!(s.order(), 1, "the partition of unity is cG(1)");
        assert_eq!(s.mesh().id(), mesh.id(), "partition of unity on another mesh");
    }
}

fn robin_faces(mesh: &Mesh) -> Vec<(usize, usize)> {
    mesh.boundary_faces()
        .into_iter()
        .filter(|f| f.2 == BoundaryMarker::Robin)
        .map(|(c, f, _)| (c, f))
        .collect()
}

/// Primal weighted residual on one interval,
/// `-[(U - U_prev, w(t_{n-1}^+)) + int_{I_n} a(U)(w) dt]`, where the weight
/// is affine in time and all fields live on `mesh`.
#[allow(clippy::too_many_arguments)]
pub fn primal_residual(
    mesh: &Mesh,
    problem: &Problem,
    u: &LocalField,
    prev: Previous<'_>,
    k: f64,
    weight: &TimeAffine,
    pu: Option<&FeSpace>,
) -> Localized {
    check_pu(mesh, pu);
    let p = &problem.params;
    let mut max_order = u.order().max(weight.start.order()).max(weight.end.order());
    if let Previous::Field(f) = prev {
        max_order = max_order.max(f.order());
    }
    let tabs = Tables::new(max_order);
    let mut acc = pu.map(|s| PuAccumulator {
        space: s,
        dof: vec![0.0; s.n_free()],
    });
    let mut total = 0.0;
    let inv_le = 1.0 / p.le;
    for c in 0..mesh.n_cells() {
        let geo = CellGeometry::new(&mesh.cell_coords(c), &tabs.quad);
        for q in 0..tabs.quad.len() {
            let (uv, ug) = eval(u, c, &tabs, &geo, q);
            let pv = match prev {
                Previous::Field(f) => eval(f, c, &tabs, &geo, q).0,
                Previous::Initial => (problem.initial)(geo.x[q]),
            };
            let (ws, gs) = eval(&weight.start, c, &tabs, &geo, q);
            let (we, ge) = eval(&weight.end, c, &tabs, &geo, q);
            let wb = [0.5 * (ws[0] + we[0]), 0.5 * (ws[1] + we[1])];
            let gb = [
                [0.5 * (gs[0][0] + ge[0][0]), 0.5 * (gs[0][1] + ge[0][1])],
                [0.5 * (gs[1][0] + ge[1][0]), 0.5 * (gs[1][1] + ge[1][1])],
            ];
            let om = problem.reaction(uv);
            let a0 = -((uv[0] - pv[0]) * ws[0]
                + (uv[1] - pv[1]) * ws[1]
                + k * (dot2(ug[0], gb[0]) + inv_le * dot2(ug[1], gb[1]) + om * (wb[1] - wb[0])));
            total += geo.jxw[q] * a0;
            if let Some(acc) = acc.as_mut() {
                let a1 = [
                    -k * (ug[0][0] * wb[0] + inv_le * ug[1][0] * wb[1]),
                    -k * (ug[0][1] * wb[0] + inv_le * ug[1][1] * wb[1]),
                ];
                acc.add(c, &tabs, &geo, q, a0, a1);
            }
        }
    }
    if problem.robin {
        let (s1, w1) = gauss_1d(max_order + 2);
        for (c, f) in robin_faces(mesh) {
            let coords = mesh.cell_coords(c);
            for (s, ws1) in s1.iter().zip(&w1) {
                let xi = face_point(f, *s);
                let ds = ws1 * field_face_measure(&coords, f, *s);
                let theta = u.eval(c, xi)[0];
                let wb = 0.5 * (weight.start.eval(c, xi)[0] + weight.end.eval(c, xi)[0]);
                let v = -k * p.robin_k * theta * wb * ds;
                total += v;
                if let Some(acc) = acc.as_mut() {
                    acc.add_point(c, xi, v);
                }
            }
        }
    }
    Localized {
        total,
        dof: acc.map(|a| a.dof),
    }
}

/// Adjoint weighted residual on one interval,
/// `int_{I_n} J'(U)(w) - a'(U)(w, Z) dt - (w(t_n^-), Z - Z_next)`, with
/// `Z_next` the adjoint value of the following interval (zero after the
/// last one).
#[allow(clippy::too_many_arguments)]
pub fn adjoint_residual(
    mesh: &Mesh,
    problem: &Problem,
    u: &LocalField,
    z: &LocalField,
    z_next: Option<&LocalField>,
    k: f64,
    weight: &TimeAffine,
    pu: Option<&FeSpace>,
) -> Localized {
    check_pu(mesh, pu);
    let p = &problem.params;
    let mut max_order = u
        .order()
        .max(z.order())
        .max(weight.start.order())
        .max(weight.end.order());
    if let Some(f) = z_next {
        max_order = max_order.max(f.order());
    }
    let tabs = Tables::new(max_order);
    let mut acc = pu.map(|s| PuAccumulator {
        space: s,
        dof: vec![0.0; s.n_free()],
    });
    let scale = problem.goal_scale();
    let inv_le = 1.0 / p.le;
    let mut total = 0.0;
    for c in 0..mesh.n_cells() {
        let geo = CellGeometry::new(&mesh.cell_coords(c), &tabs.quad);
        for q in 0..tabs.quad.len() {
            let (uv, _) = eval(u, c, &tabs, &geo, q);
            let (zv, zg) = eval(z, c, &tabs, &geo, q);
            let znv = z_next.map_or([0.0; 2], |f| eval(f, c, &tabs, &geo, q).0);
            let (ws, gs) = eval(&weight.start, c, &tabs, &geo, q);
            let (we, ge) = eval(&weight.end, c, &tabs, &geo, q);
            let wb = [0.5 * (ws[0] + we[0]), 0.5 * (ws[1] + we[1])];
            let gb = [
                [0.5 * (gs[0][0] + ge[0][0]), 0.5 * (gs[0][1] + ge[0][1])],
                [0.5 * (gs[1][0] + ge[1][0]), 0.5 * (gs[1][1] + ge[1][1])],
            ];
            let d = problem.goal_density_derivative(uv);
            let (dt, dy) = problem.reaction_jacobian(uv);
            let a0 = k * scale * dot2(d, wb)
                - k * (dot2(gb[0], zg[0])
                    + inv_le * dot2(gb[1], zg[1])
                    + (dt * wb[0] + dy * wb[1]) * (zv[1] - zv[0]))
                - (we[0] * (zv[0] - znv[0]) + we[1] * (zv[1] - znv[1]));
            total += geo.jxw[q] * a0;
            if let Some(acc) = acc.as_mut() {
                let a1 = [
                    -k * (wb[0] * zg[0][0] + inv_le * wb[1] * zg[1][0]),
                    -k * (wb[0] * zg[0][1] + inv_le * wb[1] * zg[1][1]),
                ];
                acc.add(c, &tabs, &geo, q, a0, a1);
            }
        }
    }
    if problem.robin {
        let (s1, w1) = gauss_1d(max_order + 2);
        for (c, f) in robin_faces(mesh) {
            let coords = mesh.cell_coords(c);
            for (s, ws1) in s1.iter().zip(&w1) {
                let xi = face_point(f, *s);
                let ds = ws1 * field_face_measure(&coords, f, *s);
                let zt = z.eval(c, xi)[0];
                let wb = 0.5 * (weight.start.eval(c, xi)[0] + weight.end.eval(c, xi)[0]);
                let v = -k * p.robin_k * wb * zt * ds;
                total += v;
                if let Some(acc) = acc.as_mut() {
                    acc.add_point(c, xi, v);
                }
            }
        }
    }
    Localized {
        total,
        dof: acc.map(|a| a.dof),
    }
}

/// Residual `F(w) - A(u, w)` restricted to one interval.
pub fn residual_form(
    mesh: &Mesh,
    problem: &Problem,
    u: &LocalField,
    prev: Previous<'_>,
    k: f64,
    weight: &TimeAffine,
) -> f64 {
    primal_residual(mesh, problem, u, prev, k, weight, None).total
}

/// One-step Jacobian `M + k a'(u)` on the free unknowns of `space`.
pub fn jacobian_form(space: &FeSpace, problem: &Problem, u: &[f64], k: f64) -> SparseMatrix {
    assemble_step(space, problem, u, u, k, true)
        .jacobian
        .expect("Jacobian requested")
}

/// `J'(u)(w)` on one interval for a time-affine weight.
pub fn goal_derivative(mesh: &Mesh, problem: &Problem, u: &LocalField, k: f64, weight: &TimeAffine) -> f64 {
    let max_order = u.order().max(weight.start.order()).max(weight.end.order());
    let tabs = Tables::new(max_order);
    let mut total = 0.0;
    for c in 0..mesh.n_cells() {
        let geo = CellGeometry::new(&mesh.cell_coords(c), &tabs.quad);
        for q in 0..tabs.quad.len() {
            let (uv, _) = eval(u, c, &tabs, &geo, q);
            let (ws, _) = eval(&weight.start, c, &tabs, &geo, q);
            let (we, _) = eval(&weight.end, c, &tabs, &geo, q);
            let d = problem.goal_density_derivative(uv);
            total += geo.jxw[q] * (d[0] * (ws[0] + we[0]) + d[1] * (ws[1] + we[1])) * 0.5;
        }
    }
    total * k * problem.goal_scale()
}
