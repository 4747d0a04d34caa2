use super::element::{n_local, shape, Quadrature, ShapeTable};
use super::{FeSpace, N_COMP};
use crate::mesh::{bilinear_jacobian, bilinear_map};

/// Two-component field given by per-cell Lagrange coefficients of order 1
/// or 2. Need not be continuous across cells, which makes it the common
/// currency for patch interpolants, transferred fields and differences of
/// fields of different order.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalField {
    order: usize,
    n_local: usize,
    /// `coeffs[(cell * N_COMP + comp) * n_local + j]`
    coeffs: Vec<f64>,
}

impl LocalField {
    pub fn zeros(order: usize, n_cells: usize) -> LocalField {
        let nl = n_local(order);
        LocalField {
            order,
            n_local: nl,
            coeffs: vec![0.0; n_cells * N_COMP * nl],
        }
    }

    /// Gathers cell coefficients from a two-component node vector.
    pub fn from_nodes(space: &FeSpace, nodes: &[f64]) -> LocalField {
        let n = space.n_nodes();
        assert_eq!(nodes.len(), N_COMP * n);
        let mut f = LocalField::zeros(space.order(), space.n_cells());
        let nl = f.n_local;
        for c in 0..space.n_cells() {
            for (j, &node) in space.cell_nodes(c).iter().enumerate() {
                for comp in 0..N_COMP {
                    f.coeffs[(c * N_COMP + comp) * nl + j] = nodes[comp * n + node as usize];
                }
            }
        }
        f
    }

    /// Same from an interleaved free vector.
    pub fn from_free(space: &FeSpace, free: &[f64]) -> LocalField {
        LocalField::from_nodes(space, &space.expand(free))
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn n_local(&self) -> usize {
        self.n_local
    }

    pub fn n_cells(&self) -> usize {
        self.coeffs.len() / (N_COMP * self.n_local)
    }

    /// Coefficients of one cell and component.
    pub fn cell(&self, cell: usize, comp: usize) -> &[f64] {
        let s = (cell * N_COMP + comp) * self.n_local;
        &self.coeffs[s..s + self.n_local]
    }

    pub fn cell_mut(&mut self, cell: usize, comp: usize) -> &mut [f64] {
        let s = (cell * N_COMP + comp) * self.n_local;
        &mut self.coeffs[s..s + self.n_local]
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Exact representation in order 2.
    pub fn elevate(&self) -> LocalField {
        if self.order == 2 {
            return self.clone();
        }
        let nodes = super::element::local_nodes(2);
        let mut out = LocalField::zeros(2, self.n_cells());
        let tables: Vec<[f64; 9]> = nodes
            .iter()
            .map(|&xi| super::element::shape_values(1, xi))
            .collect();
        for c in 0..self.n_cells() {
            for comp in 0..N_COMP {
                let src = self.cell(c, comp);
                let dst = out.cell_mut(c, comp);
                for (k, t) in tables.iter().enumerate() {
                    dst[k] = (0..4).map(|j| t[j] * src[j]).sum();
                }
            }
        }
        out
    }

    /// `a * self + b * other`, raising the order if needed.
    pub fn lin_comb(&self, a: f64, other: &LocalField, b: f64) -> LocalField {
        assert_eq!(self.n_cells(), other.n_cells(), "fields live on different meshes");
        let (x, y) = if self.order == other.order {
            (self.clone(), other.clone())
        } else {
            (self.elevate(), other.elevate())
        };
        let coeffs = x
            .coeffs
            .iter()
            .zip(&y.coeffs)
            .map(|(u, v)| a * u + b * v)
            .collect();
        LocalField { coeffs, ..x }
    }

    /// `self - other`
    pub fn sub(&self, other: &LocalField) -> LocalField {
        self.lin_comb(1.0, other, -1.0)
    }

    pub fn scaled(&self, a: f64) -> LocalField {
        LocalField {
            coeffs: self.coeffs.iter().map(|v| a * v).collect(),
            ..self.clone()
        }
    }

    /// Value at reference point `xi` of `cell`.
    pub fn eval(&self, cell: usize, xi: [f64; 2]) -> [f64; 2] {
        let v = super::element::shape_values(self.order, xi);
        let mut out = [0.0; 2];
        for (comp, o) in out.iter_mut().enumerate() {
            *o = self.cell(cell, comp).iter().zip(&v).map(|(c, s)| c * s).sum();
        }
        out
    }

    /// Values and reference gradients at tabulated points.
    #[inline]
    pub fn eval_table(&self, cell: usize, table: &ShapeTable, q: usize) -> ([f64; 2], [[f64; 2]; 2]) {
        debug_assert_eq!(table.order, self.order);
        let mut val = [0.0; 2];
        let mut grad = [[0.0; 2]; 2];
        for comp in 0..N_COMP {
            let c = self.cell(cell, comp);
            for (j, &cj) in c.iter().enumerate() {
                val[comp] += cj * table.value(q, j);
                let g = table.grad(q, j);
                grad[comp][0] += cj * g[0];
                grad[comp][1] += cj * g[1];
            }
        }
        (val, grad)
    }

    /// True if every coefficient is zero.
    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0.0)
    }
}

/// Geometric factors of one cell at the points of a quadrature rule.
#[derive(Debug, Clone)]
pub struct CellGeometry {
    /// Jacobian determinant times quadrature weight.
    pub jxw: Vec<f64>,
    /// physical coordinates
    pub x: Vec<[f64; 2]>,
    jac: Vec<[[f64; 2]; 2]>,
    det: Vec<f64>,
}

impl CellGeometry {
    pub fn new(coords: &[[f64; 2]; 4], quad: &Quadrature) -> CellGeometry {
        let n = quad.len();
        let mut g = CellGeometry {
            jxw: Vec::with_capacity(n),
            x: Vec::with_capacity(n),
            jac: Vec::with_capacity(n),
            det: Vec::with_capacity(n),
        };
        for (xi, w) in quad.points.iter().zip(&quad.weights) {
            let j = bilinear_jacobian(coords, *xi);
            let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
            g.jxw.push(det * w);
            g.det.push(det);
            g.jac.push(j);
            g.x.push(bilinear_map(coords, *xi));
        }
        g
    }

    /// Maps a reference gradient to physical coordinates at point `q`.
    #[inline]
    pub fn grad(&self, q: usize, r: [f64; 2]) -> [f64; 2] {
        let j = &self.jac[q];
        let d = self.det[q];
        [(j[1][1] * r[0] - j[1][0] * r[1]) / d, (-j[0][1] * r[0] + j[0][0] * r[1]) / d]
    }
}

/// Reference tangent of face `f` with respect to its parameter.
pub(crate) fn face_tangent(f: usize) -> [f64; 2] {
    match f {
        0 => [1.0, 0.0],
        1 => [0.0, 1.0],
        2 => [-1.0, 0.0],
        _ => [0.0, -1.0],
    }
}

/// Length element of face `f` at parameter `s`.
pub(crate) fn face_measure(coords: &[[f64; 2]; 4], f: usize, s: f64) -> f64 {
    let xi = super::element::face_point(f, s);
    let j = bilinear_jacobian(coords, xi);
    let t = face_tangent(f);
    let dx = j[0][0] * t[0] + j[0][1] * t[1];
    let dy = j[1][0] * t[0] + j[1][1] * t[1];
    (dx * dx + dy * dy).sqrt()
}

/// Shape values and reference gradients at one point.
pub(crate) fn shape_at(order: usize, xi: [f64; 2]) -> ([f64; 9], [[f64; 2]; 9]) {
    let mut v = [0.0; 9];
    let mut g = [[0.0; 2]; 9];
    shape(order, xi, &mut v, &mut g);
    (v, g)
}
