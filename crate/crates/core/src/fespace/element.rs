//! Reference square `[-1,1]^2`: Gauss rules and tensor Lagrange shape
//! functions of order 1 and 2.
//!
//! Local node numbering: vertices 0..3 counter-clockwise from (-1,-1), then
//! for order 2 the face midpoints of faces 0..3 and the cell center.

/// 1D Gauss-Legendre rule on `[-1, 1]` with `n` points (1..=5).
pub fn gauss_1d(n: usize) -> (Vec<f64>, Vec<f64>) {
    match n {
        1 => (vec![0.0], vec![2.0]),
        2 => {
            let g = 1.0 / 3f64.sqrt();
            (vec![-g, g], vec![1.0, 1.0])
        }
        3 => {
            let g = (0.6f64).sqrt();
            (vec![-g, 0.0, g], vec![5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0])
        }
        4 => {
            let a = (3.0 / 7.0 - 2.0 / 7.0 * (6.0f64 / 5.0).sqrt()).sqrt();
            let b = (3.0 / 7.0 + 2.0 / 7.0 * (6.0f64 / 5.0).sqrt()).sqrt();
            let wa = (18.0 + 30f64.sqrt()) / 36.0;
            let wb = (18.0 - 30f64.sqrt()) / 36.0;
            (vec![-b, -a, a, b], vec![wb, wa, wa, wb])
        }
        5 => {
            let a = (5.0 - 2.0 * (10.0f64 / 7.0).sqrt()).sqrt() / 3.0;
            let b = (5.0 + 2.0 * (10.0f64 / 7.0).sqrt()).sqrt() / 3.0;
            let wa = (322.0 + 13.0 * 70f64.sqrt()) / 900.0;
            let wb = (322.0 - 13.0 * 70f64.sqrt()) / 900.0;
            (vec![-b, -a, 0.0, a, b], vec![wb, wa, 128.0 / 225.0, wa, wb])
        }
        _ => panic!("no Gauss rule with {n} points"),
    }
}

/// Tensor Gauss rule on the reference square.
#[derive(Debug, Clone)]
pub struct Quadrature {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    pub n_1d: usize,
}

impl Quadrature {
    pub fn tensor(n: usize) -> Quadrature {
        let (x, w) = gauss_1d(n);
        let mut points = Vec::with_capacity(n * n);
        let mut weights = Vec::with_capacity(n * n);
        for j in 0..n {
            for i in 0..n {
                points.push([x[i], x[j]]);
                weights.push(w[i] * w[j]);
            }
        }
        Quadrature { points, weights, n_1d: n }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Number of local nodes of the order-`p` element.
pub const fn n_local(order: usize) -> usize {
    (order + 1) * (order + 1)
}

/// Tensor index `(ix, iy)` of local node `j` for the order-2 element.
const Q2_INDEX: [(usize, usize); 9] = [
    (0, 0),
    (2, 0),
    (2, 2),
    (0, 2),
    (1, 0),
    (2, 1),
    (1, 2),
    (0, 1),
    (1, 1),
];
const Q1_INDEX: [(usize, usize); 4] = [(0, 0), (1, 0), (1, 1), (0, 1)];

/// Reference coordinates of the local nodes.
pub fn local_nodes(order: usize) -> &'static [[f64; 2]] {
    const Q1: [[f64; 2]; 4] = [[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]];
    const Q2: [[f64; 2]; 9] = [
        [-1.0, -1.0],
        [1.0, -1.0],
        [1.0, 1.0],
        [-1.0, 1.0],
        [0.0, -1.0],
        [1.0, 0.0],
        [0.0, 1.0],
        [-1.0, 0.0],
        [0.0, 0.0],
    ];
    match order {
        1 => &Q1,
        2 => &Q2,
        _ => panic!("unsupported order {order}"),
    }
}

fn lagrange_1d(order: usize, s: f64) -> ([f64; 3], [f64; 3]) {
    match order {
        1 => ([0.5 * (1.0 - s), 0.5 * (1.0 + s), 0.0], [-0.5, 0.5, 0.0]),
        2 => (
            [0.5 * s * (s - 1.0), 1.0 - s * s, 0.5 * s * (s + 1.0)],
            [s - 0.5, -2.0 * s, s + 0.5],
        ),
        _ => panic!("unsupported order {order}"),
    }
}

/// Values and reference gradients of all local shape functions at `xi`.
pub fn shape(order: usize, xi: [f64; 2], values: &mut [f64], grads: &mut [[f64; 2]]) {
    let (lx, dx) = lagrange_1d(order, xi[0]);
    let (ly, dy) = lagrange_1d(order, xi[1]);
    let index: &[(usize, usize)] = if order == 1 { &Q1_INDEX } else { &Q2_INDEX };
    for (j, &(ix, iy)) in index.iter().enumerate() {
        values[j] = lx[ix] * ly[iy];
        grads[j] = [dx[ix] * ly[iy], lx[ix] * dy[iy]];
    }
}

/// Shape function values only.
pub fn shape_values(order: usize, xi: [f64; 2]) -> [f64; 9] {
    let mut v = [0.0; 9];
    let mut g = [[0.0; 2]; 9];
    shape(order, xi, &mut v, &mut g);
    v
}

/// Shape functions tabulated at the points of a quadrature rule.
#[derive(Debug, Clone)]
pub struct ShapeTable {
    pub order: usize,
    pub n_local: usize,
    /// `values[q * n_local + j]`
    pub values: Vec<f64>,
    /// reference gradients, same layout
    pub grads: Vec<[f64; 2]>,
}

impl ShapeTable {
    pub fn new(order: usize, points: &[[f64; 2]]) -> ShapeTable {
        let nl = n_local(order);
        let mut values = vec![0.0; points.len() * nl];
        let mut grads = vec![[0.0; 2]; points.len() * nl];
        for (q, &xi) in points.iter().enumerate() {
            shape(
                order,
                xi,
                &mut values[q * nl..(q + 1) * nl],
                &mut grads[q * nl..(q + 1) * nl],
            );
        }
        ShapeTable {
            order,
            n_local: nl,
            values,
            grads,
        }
    }

    #[inline]
    pub fn value(&self, q: usize, j: usize) -> f64 {
        self.values[q * self.n_local + j]
    }

    #[inline]
    pub fn grad(&self, q: usize, j: usize) -> [f64; 2] {
        self.grads[q * self.n_local + j]
    }
}

/// Reference point on face `f` at face parameter `s` in `[-1, 1]`, running
/// from vertex `f` to vertex `f + 1`.
pub fn face_point(f: usize, s: f64) -> [f64; 2] {
    match f {
        0 => [s, -1.0],
        1 => [1.0, s],
        2 => [-s, 1.0],
        3 => [-1.0, -s],
        _ => panic!("quad has four faces"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_rules_integrate_polynomials() {
        for n in 1..=5 {
            let (x, w) = gauss_1d(n);
            for deg in 0..2 * n {
                let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((q - exact).abs() < 1e-14, "n={n} deg={deg}");
            }
        }
    }

    #[test]
    fn shape_functions_partition_unity_and_nodality() {
        for order in 1..=2 {
            let nodes = local_nodes(order);
            for (i, &xi) in nodes.iter().enumerate() {
                let v = shape_values(order, xi);
                for j in 0..n_local(order) {
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!((v[j] - expect).abs() < 1e-15);
                }
            }
            let q = Quadrature::tensor(order + 2);
            let t = ShapeTable::new(order, &q.points);
            for p in 0..q.len() {
                let s: f64 = (0..t.n_local).map(|j| t.value(p, j)).sum();
                let g: [f64; 2] = (0..t.n_local).fold([0.0, 0.0], |a, j| {
                    [a[0] + t.grad(p, j)[0], a[1] + t.grad(p, j)[1]]
                });
                assert!((s - 1.0).abs() < 1e-15);
                assert!(g[0].abs() < 1e-14 && g[1].abs() < 1e-14);
            }
        }
    }
}
