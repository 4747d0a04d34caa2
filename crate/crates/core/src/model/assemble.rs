use super::Problem;
use crate::error::Result;
use crate::fespace::element::{Quadrature, ShapeTable};
use crate::fespace::{n_quad, CellGeometry, FeSpace, N_COMP};
use crate::linalg::{LinearSolver, SolverKind, SparseMatrix};

/// Residual `G(u)(phi_i)` of one dG(0) step and optionally its Jacobian, on
/// interleaved free unknowns, before Dirichlet rows are touched.
#[derive(Debug, Clone)]
pub struct StepSystem {
    pub residual: Vec<f64>,
    pub jacobian: Option<SparseMatrix>,
}

/// Gathers the local node values of an interleaved free vector.
fn gather(space: &FeSpace, cell: usize, free: &[f64], out: &mut [f64]) {
    let nl = space.n_local();
    for (j, &node) in space.cell_nodes(cell).iter().enumerate() {
        let mut v = [0.0; N_COMP];
        for &(f, w) in space.expansion(node as usize) {
            for (c, vc) in v.iter_mut().enumerate() {
                *vc += w * free[N_COMP * f as usize + c];
            }
        }
        for c in 0..N_COMP {
            out[c * nl + j] = v[c];
        }
    }
}

/// Assembles `G(u)(phi) = (u - u_prev, phi) + k a(u)(phi)` for all basis
/// functions `phi`, where `a` collects diffusion, reaction and the Robin
/// term.
pub fn assemble_step(
    space: &FeSpace,
    problem: &Problem,
    u: &[f64],
    u_prev: &[f64],
    k: f64,
    with_jacobian: bool,
) -> StepSystem {
    let ac = space.assembly();
    let nf = space.n_free();
    let nl = space.n_local();
    let p = &problem.params;
    let kappa = if problem.robin { p.robin_k } else { 0.0 };
    let dy = 1.0 / p.le;

    let mut residual = vec![0.0; N_COMP * nf];
    let mut values = if with_jacobian {
        vec![0.0; space.pattern().nnz()]
    } else {
        Vec::new()
    };
    for f in 0..nf {
        let (start, end) = (ac.blk_ptr[f] as usize, ac.blk_ptr[f + 1] as usize);
        let stride = 2 * (end - start);
        let mut r = [0.0; 2];
        for b in start..end {
            let col = 2 * ac.blk_col[b] as usize;
            let m = ac.mass[b];
            let at = m + k * (ac.lap[b] + kappa * ac.robin[b]);
            let ay = m + k * dy * ac.lap[b];
            r[0] += at * u[col] - m * u_prev[col];
            r[1] += ay * u[col + 1] - m * u_prev[col + 1];
            if with_jacobian {
                let pos = 4 * start + 2 * (b - start);
                values[pos] = at;
                values[pos + stride + 1] = ay;
            }
        }
        residual[2 * f] = r[0];
        residual[2 * f + 1] = r[1];
    }

    if problem.reaction {
        let table = &ac.table;
        let nq = ac.nq();
        let mut ul = vec![0.0; N_COMP * nl];
        let mut re = vec![0.0; N_COMP * nl];
        let mut rt = vec![0.0; nl * nl];
        let mut ry = vec![0.0; nl * nl];
        for c in 0..space.n_cells() {
            gather(space, c, u, &mut ul);
            let jxw = ac.cell_jxw(c);
            re.iter_mut().for_each(|v| *v = 0.0);
            if with_jacobian {
                rt.iter_mut().for_each(|v| *v = 0.0);
                ry.iter_mut().for_each(|v| *v = 0.0);
            }
            for q in 0..nq {
                let s = &table.values[q * nl..(q + 1) * nl];
                let mut uv = [0.0; 2];
                for j in 0..nl {
                    uv[0] += ul[j] * s[j];
                    uv[1] += ul[nl + j] * s[j];
                }
                let w = jxw[q];
                let (om, dt, dyv) = problem.reaction_with_jacobian(uv);
                let om = k * w * om;
                for i in 0..nl {
                    re[i] -= om * s[i];
                    re[nl + i] += om * s[i];
                }
                if with_jacobian {
                    for i in 0..nl {
                        let a = k * w * dt * s[i];
                        let b = k * w * dyv * s[i];
                        for j in 0..nl {
                            rt[i * nl + j] += a * s[j];
                            ry[i * nl + j] += b * s[j];
                        }
                    }
                }
            }
            scatter(space, c, &re, &[], &mut residual, None);
            if with_jacobian {
                for i in 0..nl {
                    for j in 0..nl {
                        let (t, y) = (rt[i * nl + j], ry[i * nl + j]);
                        if t == 0.0 && y == 0.0 {
                            continue;
                        }
                        for e in ac.pairs(c, nl, i, j) {
                            let (pos, stride) = ac.position(e.row, e.blk);
                            values[pos] -= e.w * t;
                            values[pos + 1] -= e.w * y;
                            values[pos + stride] += e.w * t;
                            values[pos + stride + 1] += e.w * y;
                        }
                    }
                }
            }
        }
    }

    let jacobian = with_jacobian.then(|| SparseMatrix::from_values(space.pattern().clone(), values));
    StepSystem { residual, jacobian }
}

/// Adds a cell vector and matrix (local layout `comp * nl + j`) into the
/// global free system through the constraint expansions.
fn scatter(
    space: &FeSpace,
    cell: usize,
    re: &[f64],
    ke: &[f64],
    residual: &mut [f64],
    jac: Option<&mut SparseMatrix>,
) {
    let nl = space.n_local();
    let ld = N_COMP * nl;
    let nodes = space.cell_nodes(cell);
    for (i, &ni) in nodes.iter().enumerate() {
        for &(fi, wi) in space.expansion(ni as usize) {
            for c in 0..N_COMP {
                residual[N_COMP * fi as usize + c] += wi * re[c * nl + i];
            }
        }
    }
    if let Some(jac) = jac {
        for (i, &ni) in nodes.iter().enumerate() {
            for &(fi, wi) in space.expansion(ni as usize) {
                for (j, &nj) in nodes.iter().enumerate() {
                    let local = [
                        [ke[i * ld + j], ke[i * ld + nl + j]],
                        [ke[(nl + i) * ld + j], ke[(nl + i) * ld + nl + j]],
                    ];
                    if local == [[0.0; 2]; 2] {
                        continue;
                    }
                    for &(fj, wj) in space.expansion(nj as usize) {
                        let w = wi * wj;
                        let b = [
                            [w * local[0][0], w * local[0][1]],
                            [w * local[1][0], w * local[1][1]],
                        ];
                        jac.add_block2(fi as usize, fj as usize, &b);
                    }
                }
            }
        }
    }
}

/// `int_Omega g(u) dx` for the (unscaled) goal density.
pub fn goal_on_interval(space: &FeSpace, problem: &Problem, u: &[f64]) -> f64 {
    let nl = space.n_local();
    let ac = space.assembly();
    let table = &ac.table;
    let mut ul = vec![0.0; N_COMP * nl];
    let mut total = 0.0;
    for c in 0..space.n_cells() {
        let jxw = ac.cell_jxw(c);
        gather(space, c, u, &mut ul);
        for q in 0..ac.nq() {
            let mut uv = [0.0; 2];
            for j in 0..nl {
                let s = table.value(q, j);
                uv[0] += ul[j] * s;
                uv[1] += ul[nl + j] * s;
            }
            total += jxw[q] * problem.goal_density(uv);
        }
    }
    total
}

/// `J = 1/(T |Omega|) sum_n k_n int g(u_n)` from per-interval states.
pub fn evaluate_goal<'a, I>(problem: &Problem, intervals: I) -> f64
where
    I: IntoIterator<Item = (f64, &'a FeSpace, &'a [f64])>,
{
    let mut j = 0.0;
    for (k, space, u) in intervals {
        j += k * goal_on_interval(space, problem, u);
    }
    j * problem.goal_scale()
}

/// Vector `J'(u_n)(phi_i) = k/(T|Omega|) int g'(u_n) . phi_i`.
pub fn assemble_goal_derivative(space: &FeSpace, problem: &Problem, u: &[f64], k: f64) -> Vec<f64> {
    let nl = space.n_local();
    let ac = space.assembly();
    let table = &ac.table;
    let mut ul = vec![0.0; N_COMP * nl];
    let mut re = vec![0.0; N_COMP * nl];
    let mut out = vec![0.0; N_COMP * space.n_free()];
    let scale = k * problem.goal_scale();
    for c in 0..space.n_cells() {
        let jxw = ac.cell_jxw(c);
        gather(space, c, u, &mut ul);
        re.iter_mut().for_each(|v| *v = 0.0);
        for q in 0..ac.nq() {
            let mut uv = [0.0; 2];
            for j in 0..nl {
                let s = table.value(q, j);
                uv[0] += ul[j] * s;
                uv[1] += ul[nl + j] * s;
            }
            let d = problem.goal_density_derivative(uv);
            for i in 0..nl {
                let s = table.value(q, i) * jxw[q] * scale;
                re[i] += d[0] * s;
                re[nl + i] += d[1] * s;
            }
        }
        scatter(space, c, &re, &[], &mut out, None);
    }
    out
}

/// Mass matrix of the two-component space.
pub(crate) fn assemble_mass(space: &FeSpace) -> SparseMatrix {
    let ac = space.assembly();
    let mut values = vec![0.0; space.pattern().nnz()];
    for f in 0..space.n_free() {
        let (start, end) = (ac.blk_ptr[f] as usize, ac.blk_ptr[f + 1] as usize);
        let stride = 2 * (end - start);
        for b in start..end {
            let pos = 4 * start + 2 * (b - start);
            values[pos] = ac.mass[b];
            values[pos + stride + 1] = ac.mass[b];
        }
    }
    SparseMatrix::from_values(space.pattern().clone(), values)
}

/// Interleaved free vector with the Dirichlet values of the problem and
/// zeros elsewhere, plus the Dirichlet flags per unknown.
pub(crate) fn dirichlet_vector(space: &FeSpace, problem: &Problem) -> (Vec<f64>, Vec<bool>) {
    let flags_scalar = space.dirichlet_free();
    let mut x = vec![0.0; N_COMP * space.n_free()];
    let mut flags = vec![false; N_COMP * space.n_free()];
    for (f, &d) in flags_scalar.iter().enumerate() {
        if d {
            for c in 0..N_COMP {
                x[N_COMP * f + c] = problem.dirichlet[c];
                flags[N_COMP * f + c] = true;
            }
        }
    }
    (x, flags)
}

/// L2 projection of the initial data with the Dirichlet values imposed.
pub fn l2_project_initial(space: &FeSpace, problem: &Problem) -> Result<Vec<f64>> {
    let nl = space.n_local();
    let quad = Quadrature::tensor(n_quad(space.order()) + 1);
    let table = ShapeTable::new(space.order(), &quad.points);
    let mut b = vec![0.0; N_COMP * space.n_free()];
    let mut re = vec![0.0; N_COMP * nl];
    for c in 0..space.n_cells() {
        let geo = CellGeometry::new(&space.mesh().cell_coords(c), &quad);
        re.iter_mut().for_each(|v| *v = 0.0);
        for q in 0..quad.len() {
            let u0 = (problem.initial)(geo.x[q]);
            for i in 0..nl {
                let s = geo.jxw[q] * table.value(q, i);
                re[i] += u0[0] * s;
                re[nl + i] += u0[1] * s;
            }
        }
        scatter(space, c, &re, &[], &mut b, None);
    }
    let mut m = assemble_mass(space);
    let (x0, flags) = dirichlet_vector(space, problem);
    let mx0 = m.mul_vec(&x0);
    let mut r: Vec<f64> = b.iter().zip(&mx0).map(|(b, a)| b - a).collect();
    for (ri, &d) in r.iter_mut().zip(&flags) {
        if d {
            *ri = 0.0;
        }
    }
    m.apply_dirichlet(&flags);
    let dx = LinearSolver::new(SolverKind::Auto).solve(&m, &r)?;
    Ok(x0.iter().zip(&dx).map(|(a, b)| a + b).collect())
}
