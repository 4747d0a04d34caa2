//! Forward Newton sweep for the primal problem and backward linear sweep for
//! the adjoint, over a time partition with one mesh per interval.

mod store;

pub use store::{checksum, read_index, StorageMode, VectorStore};

use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};
use crate::fespace::{apply_scalar, apply_scalar_transpose, transfer_matrix, FeSpace, N_COMP};
use crate::linalg::{norm2, LinearSolver, SolverKind, SparseMatrix};
use crate::mesh::{Mesh, TimePartition};
use crate::model::{
    assemble_goal_derivative, assemble_mass, assemble_step, dirichlet_vector, goal_on_interval, jacobian_form,
    l2_project_initial, Problem,
};

/// Newton iteration controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonSettings {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_iter: usize,
    /// number of step halvings tried before giving up
    pub max_halvings: usize,
    /// smallest relative residual demanded from the iterative linear solver
    /// in one Newton step
    pub linear_forcing: f64,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        NewtonSettings {
            abs_tol: 1e-10,
            rel_tol: 1e-12,
            max_iter: 20,
            max_halvings: 8,
            linear_forcing: 1e-4,
        }
    }
}

/// Everything the sweeps need besides the problem and the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSettings {
    pub newton: NewtonSettings,
    pub solver: SolverKind,
    pub storage: StorageMode,
}

impl Default for SweepSettings {
    fn default() -> Self {
        SweepSettings {
            newton: NewtonSettings::default(),
            solver: SolverKind::Auto,
            storage: StorageMode::default(),
        }
    }
}

type SpaceKey = (u64, usize);

#[derive(Default)]
struct Cache {
    spaces: Vec<(SpaceKey, Arc<FeSpace>)>,
    transfers: Vec<((SpaceKey, SpaceKey), Arc<SparseMatrix>)>,
}

const CACHE_CAPACITY: usize = 6;

fn lru_get<K: PartialEq + Copy, V: Clone>(list: &mut Vec<(K, V)>, key: K) -> Option<V> {
    let pos = list.iter().position(|(k, _)| *k == key)?;
    let e = list.remove(pos);
    let v = e.1.clone();
    list.insert(0, e);
    Some(v)
}

fn lru_put<K, V>(list: &mut Vec<(K, V)>, key: K, v: V) {
    list.insert(0, (key, v));
    list.truncate(CACHE_CAPACITY);
}

/// A time partition together with the meshes its intervals refer to.
/// Finite element spaces and transfer operators are built on demand and
/// kept in a small cache.
pub struct SpaceTimeGrid {
    partition: TimePartition,
    meshes: Vec<Arc<Mesh>>,
    cache: Mutex<Cache>,
}

impl std::fmt::Debug for SpaceTimeGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpaceTimeGrid")
            .field("intervals", &self.partition.len())
            .field("meshes", &self.meshes.len())
            .finish()
    }
}

impl SpaceTimeGrid {
    pub fn new(partition: TimePartition, meshes: Vec<Arc<Mesh>>) -> Result<SpaceTimeGrid> {
        if let Some(&bad) = partition.mesh_indices().iter().find(|&&i| i >= meshes.len()) {
            return Err(Error::Config(format!(
                "interval refers to mesh {bad}, only {} given",
                meshes.len()
            )));
        }
        if meshes.iter().any(|m| m.family() != meshes[0].family()) {
            return Err(Error::MeshMismatch("interval meshes must share their coarse mesh".into()));
        }
        Ok(SpaceTimeGrid {
            partition,
            meshes,
            cache: Mutex::new(Cache::default()),
        })
    }

    /// `m` equal steps on `[0, final_time]`, one mesh for all.
    pub fn uniform(mesh: Arc<Mesh>, final_time: f64, m: usize) -> Result<SpaceTimeGrid> {
        SpaceTimeGrid::new(TimePartition::uniform(final_time, m)?, vec![mesh])
    }

    pub fn partition(&self) -> &TimePartition {
        &self.partition
    }

    pub fn meshes(&self) -> &[Arc<Mesh>] {
        &self.meshes
    }

    pub fn len(&self) -> usize {
        self.partition.len()
    }

    pub fn is_empty(&self) -> bool {
        self.partition.is_empty()
    }

    /// Mesh of interval `n`.
    pub fn mesh(&self, n: usize) -> &Arc<Mesh> {
        &self.meshes[self.partition.mesh_index(n)]
    }

    /// Space of order `order` on the mesh of interval `n`.
    pub fn space(&self, n: usize, order: usize) -> Result<Arc<FeSpace>> {
        self.space_on(self.mesh(n), order)
    }

    pub fn space_on(&self, mesh: &Arc<Mesh>, order: usize) -> Result<Arc<FeSpace>> {
        let key = (mesh.id(), order);
        if let Some(s) = lru_get(&mut self.cache.lock().unwrap().spaces, key) {
            return Ok(s);
        }
        let s = Arc::new(FeSpace::new(mesh.clone(), order)?);
        lru_put(&mut self.cache.lock().unwrap().spaces, key, s.clone());
        Ok(s)
    }

    /// Scalar transfer operator between two spaces, `None` for the
    /// identity.
    pub fn transfer_op(&self, from: &FeSpace, to: &FeSpace) -> Result<Option<Arc<SparseMatrix>>> {
        let a = (from.mesh().id(), from.order());
        let b = (to.mesh().id(), to.order());
        if a == b {
            return Ok(None);
        }
        if let Some(m) = lru_get(&mut self.cache.lock().unwrap().transfers, (a, b)) {
            return Ok(Some(m));
        }
        let m = Arc::new(transfer_matrix(from, to)?);
        lru_put(&mut self.cache.lock().unwrap().transfers, (a, b), m.clone());
        Ok(Some(m))
    }

    /// Interpolates an interleaved vector from one space into another.
    pub fn transfer(&self, v: &[f64], from: &FeSpace, to: &FeSpace) -> Result<Vec<f64>> {
        Ok(match self.transfer_op(from, to)? {
            None => v.to_vec(),
            Some(m) => apply_scalar(&m, v),
        })
    }

    /// Adjoint of [`SpaceTimeGrid::transfer`]: maps a dual vector on `to`
    /// back to `from`.
    pub fn transfer_transpose(&self, v: &[f64], from: &FeSpace, to: &FeSpace) -> Result<Vec<f64>> {
        Ok(match self.transfer_op(from, to)? {
            None => v.to_vec(),
            Some(m) => apply_scalar_transpose(&m, v),
        })
    }
}

/// dG(0) solution: one coefficient vector per interval on the space of order
/// `order` over the interval's mesh.
#[derive(Debug)]
pub struct Trajectory {
    order: usize,
    store: VectorStore,
    initial: Option<Vec<f64>>,
    goal: Option<f64>,
    newton_iterations: usize,
}

impl Trajectory {
    /// An empty trajectory of `m` intervals to be filled with
    /// [`Trajectory::put`].
    pub fn new(order: usize, m: usize, mode: &StorageMode) -> Result<Trajectory> {
        Ok(Trajectory {
            order,
            store: VectorStore::new(mode, m)?,
            initial: None,
            goal: None,
            newton_iterations: 0,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.store.len()
    }

    pub fn is_empty(&self) -> bool {
        self.store.is_empty()
    }

    pub fn get(&self, n: usize) -> Result<Vec<f64>> {
        self.store.get(n)
    }

    pub fn put(&mut self, n: usize, mesh_id: u64, v: &[f64]) -> Result<()> {
        self.store.put(n, mesh_id, v)
    }

    pub fn mesh_id(&self, n: usize) -> u64 {
        self.store.mesh_id(n)
    }

    /// Discrete initial value on the mesh of the first interval.
    pub fn initial(&self) -> Option<&[f64]> {
        self.initial.as_deref()
    }

    pub fn set_initial(&mut self, v: Vec<f64>) {
        self.initial = Some(v);
    }

    /// Goal value accumulated during the primal sweep.
    pub fn goal(&self) -> Option<f64> {
        self.goal
    }

    pub fn newton_iterations(&self) -> usize {
        self.newton_iterations
    }

    pub fn is_spilled(&self) -> bool {
        self.store.is_spilled()
    }

    pub fn store(&self) -> &VectorStore {
        &self.store
    }
}

fn zero_flagged(v: &mut [f64], flags: &[bool]) {
    for (x, &d) in v.iter_mut().zip(flags) {
        if d {
            *x = 0.0;
        }
    }
}

/// Newton's method for one dG(0) step. `u` holds the initial guess and is
/// overwritten with the solution; returns the iteration count.
#[allow(clippy::too_many_arguments)]
fn newton_step(
    space: &FeSpace,
    problem: &Problem,
    u: &mut Vec<f64>,
    prev: &[f64],
    k: f64,
    flags: &[bool],
    settings: &NewtonSettings,
    solver: &mut LinearSolver,
    interval: usize,
) -> Result<usize> {
    let sys = assemble_step(space, problem, u, prev, k, true);
    let mut r = sys.residual;
    let mut jac = sys.jacobian.expect("Jacobian requested");
    zero_flagged(&mut r, flags);
    let r0 = norm2(&r);
    let tol = settings.abs_tol.max(settings.rel_tol * r0);
    let mut rn = r0;
    for it in 0..=settings.max_iter {
        if rn <= tol {
            return Ok(it);
        }
        if it == settings.max_iter {
            break;
        }
        jac.apply_dirichlet(flags);
        let neg: Vec<f64> = r.iter().map(|x| -x).collect();
        // inexact Newton: the linear residual only has to stay below what
        // the next nonlinear residual needs
        solver.rtol = (0.1 * tol / rn).max(settings.linear_forcing);
        let du = solver.solve(&jac, &neg)?;
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..=settings.max_halvings {
            let trial: Vec<f64> = u.iter().zip(&du).map(|(a, b)| a + lambda * b).collect();
            let mut rt = assemble_step(space, problem, &trial, prev, k, false).residual;
            zero_flagged(&mut rt, flags);
            let nt = norm2(&rt);
            if nt.is_finite() && nt < (1.0 - 1e-4 * lambda) * rn {
                accepted = Some((trial, rt, nt));
                break;
            }
            lambda *= 0.5;
        }
        let Some((trial, rt, nt)) = accepted else {
            return Err(Error::NewtonDivergence {
                interval,
                residual: rn,
                iterations: it + 1,
            });
        };
        *u = trial;
        r = rt;
        rn = nt;
        if rn > tol {
            jac = assemble_step(space, problem, u, prev, k, true)
                .jacobian
                .expect("Jacobian requested");
        }
        log::trace!("interval {interval} Newton {} residual {rn:e} step {lambda}", it + 1);
    }
    Err(Error::NewtonDivergence {
        interval,
        residual: rn,
        iterations: settings.max_iter,
    })
}

/// Solves the primal problem forward in time with cG(`order`) elements.
/// The initial value is the L2 projection of the initial data onto the first
/// mesh; each step starts Newton from the previous solution transferred to
/// the current mesh. The goal is accumulated on the fly.
pub fn solve_primal(
    grid: &SpaceTimeGrid,
    problem: &Problem,
    order: usize,
    settings: &SweepSettings,
) -> Result<Trajectory> {
    let m = grid.len();
    let s0 = grid.space(0, order)?;
    let len_hint = N_COMP * s0.n_free();
    let mode = settings.storage.resolve(m, len_hint);
    let mut traj = Trajectory::new(order, m, &mode)?;
    let u0 = l2_project_initial(&s0, problem)?;
    let mut solver = LinearSolver::new(settings.solver);
    let mut prev_space = s0;
    let mut prev = u0.clone();
    traj.set_initial(u0);
    let mut goal = 0.0;
    for n in 0..m {
        let space = grid.space(n, order)?;
        let k = grid.partition().step(n);
        let prev_here = grid.transfer(&prev, &prev_space, &space)?;
        let (x0, flags) = dirichlet_vector(&space, problem);
        let mut u = prev_here.clone();
        for (i, &d) in flags.iter().enumerate() {
            if d {
                u[i] = x0[i];
            }
        }
        let its = newton_step(
            &space,
            problem,
            &mut u,
            &prev_here,
            k,
            &flags,
            &settings.newton,
            &mut solver,
            n,
        )?;
        traj.newton_iterations += its;
        goal += k * goal_on_interval(&space, problem, &u);
        traj.put(n, space.mesh().id(), &u)?;
        if n % 64 == 0 {
            log::debug!("primal interval {n}/{m}: {its} Newton iterations");
        }
        prev = u;
        prev_space = space;
    }
    traj.goal = Some(goal * problem.goal_scale());
    Ok(traj)
}

/// Goal value of the primal solution without keeping the trajectory.
pub fn goal_only(grid: &SpaceTimeGrid, problem: &Problem, order: usize, settings: &SweepSettings) -> Result<f64> {
    let s = SweepSettings {
        storage: StorageMode::Discard,
        ..settings.clone()
    };
    Ok(solve_primal(grid, problem, order, &s)?.goal.expect("goal accumulated"))
}

/// Solves the discrete adjoint backward in time with cG(`order`) elements,
/// linearized at the primal trajectory (embedded into the adjoint order when
/// the orders differ). With `K_n = M + k A'(u_n)` and `P` the transfer from
/// mesh `n` to mesh `n+1`:
/// `K_n^T z_n = J'(u_n) + P^T M_{n+1} z_{n+1}`, `z_{M+1} = 0`.
pub fn solve_adjoint(
    grid: &SpaceTimeGrid,
    problem: &Problem,
    primal: &Trajectory,
    order: usize,
    settings: &SweepSettings,
) -> Result<Trajectory> {
    let m = grid.len();
    if primal.len() != m {
        return Err(Error::MeshMismatch(format!(
            "primal trajectory has {} intervals, grid {m}",
            primal.len()
        )));
    }
    let len_hint = N_COMP * grid.space(m - 1, order)?.n_free();
    let mode = settings.storage.resolve(m, len_hint);
    let mut traj = Trajectory::new(order, m, &mode)?;
    let mut solver = LinearSolver::new(settings.solver);
    let mut next: Option<(Arc<FeSpace>, Vec<f64>)> = None;
    let mut mass: Option<(u64, SparseMatrix)> = None;
    for n in (0..m).rev() {
        let space = grid.space(n, order)?;
        let k = grid.partition().step(n);
        let u = primal.get(n)?;
        let u = if primal.order() == order {
            u
        } else {
            let pspace = grid.space(n, primal.order())?;
            grid.transfer(&u, &pspace, &space)?
        };
        let mut jac = jacobian_form(&space, problem, &u, k);
        let mut rhs = assemble_goal_derivative(&space, problem, &u, k);
        if let Some((nspace, z)) = &next {
            let id = nspace.mesh().id();
            if mass.as_ref().map(|m| m.0) != Some(id) {
                mass = Some((id, assemble_mass(nspace)));
            }
            let mz = mass.as_ref().unwrap().1.mul_vec(z);
            let back = grid.transfer_transpose(&mz, &space, nspace)?;
            for (r, b) in rhs.iter_mut().zip(&back) {
                *r += b;
            }
        }
        let (_, flags) = dirichlet_vector(&space, problem);
        zero_flagged(&mut rhs, &flags);
        jac.apply_dirichlet(&flags);
        let z = solver.solve_transpose(&jac, &rhs)?;
        traj.put(n, space.mesh().id(), &z)?;
        if n % 64 == 0 {
            log::debug!("adjoint interval {n}/{m}: |z| = {:e}", norm2(&z));
        }
        next = Some((space, z));
    }
    Ok(traj)
}
