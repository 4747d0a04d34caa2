//! Fixed-fraction marking in time and space, refinement of the space-time
//! grid, the adaptive loop driven by the primal cG(1)/cG(1) estimator, and
//! global refinement studies.

mod study;

pub use study::{global_grid, run_study, Reference, StudyConfig, StudyRow};

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::estimator::{estimate, EstimatorInput, EstimatorVariant, Which};
use crate::fespace::{FeSpace, N_COMP};
use crate::mesh::{Mesh, TimePartition};
use crate::model::{omega, Problem};
use crate::timestep::{solve_adjoint, solve_primal, SpaceTimeGrid, SweepSettings, Trajectory};

/// Controls of the adaptive loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkingConfig {
    /// share of time intervals bisected per loop
    pub time_fraction: f64,
    /// share of cells refined per interval and loop
    pub space_fraction: f64,
    /// number of refinement loops after the initial solve
    pub max_loops: usize,
    /// stop as soon as `|eta|` falls below this value
    pub tolerance: f64,
}

impl Default for MarkingConfig {
    fn default() -> Self {
        MarkingConfig {
            time_fraction: 0.5,
            space_fraction: 0.33,
            max_loops: 3,
            tolerance: 0.0,
        }
    }
}

impl MarkingConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, f) in [("time_fraction", self.time_fraction), ("space_fraction", self.space_fraction)] {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::Config(format!("{name} = {f} is not in [0, 1]")));
            }
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::Config(format!("tolerance = {} must be nonnegative", self.tolerance)));
        }
        Ok(())
    }
}

/// `ceil(fraction * count)`, ignoring rounding noise in the product.
pub fn marked_count(count: usize, fraction: f64) -> usize {
    let x = fraction * count as f64;
    let c = x.round();
    let n = if (x - c).abs() <= 1e-9 * x.max(1.0) { c } else { x.ceil() };
    (n.max(0.0) as usize).min(count)
}

/// Indices of the `ceil(fraction * len)` largest entries by modulus, ties
/// going to the smaller index. Returned in increasing order.
pub fn mark_fraction(indicators: &[f64], fraction: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..indicators.len()).collect();
    order.sort_by(|&a, &b| indicators[b].abs().total_cmp(&indicators[a].abs()).then(a.cmp(&b)));
    order.truncate(marked_count(indicators.len(), fraction));
    order.sort_unstable();
    order
}

/// Intervals to bisect.
pub fn mark_time(interval_indicators: &[f64], fraction: f64) -> Vec<usize> {
    mark_fraction(interval_indicators, fraction)
}

/// Cells to refine, per interval.
pub fn mark_space(cell_indicators: &[Vec<f64>], fraction: f64) -> Vec<Vec<usize>> {
    cell_indicators.iter().map(|c| mark_fraction(c, fraction)).collect()
}

/// Refines every interval mesh by its marked cells and bisects the marked
/// intervals. Both halves of a bisected interval keep the refined mesh of
/// their parent. Intervals that shared a mesh and have the same marks keep
/// sharing it.
pub fn refine_grid(grid: &SpaceTimeGrid, time_marked: &[usize], space_marked: &[Vec<usize>]) -> Result<SpaceTimeGrid> {
    let m = grid.len();
    if space_marked.len() != m {
        return Err(Error::MeshMismatch(format!(
            "{} spatial markings for {m} intervals",
            space_marked.len()
        )));
    }
    let mut bisect = vec![false; m];
    for &n in time_marked {
        *bisect.get_mut(n).ok_or_else(|| Error::Config(format!("marked interval {n} out of range")))? = true;
    }
    let mut meshes: Vec<Arc<Mesh>> = Vec::new();
    let mut made: Vec<((usize, &[usize]), usize)> = Vec::new();
    let mut steps = Vec::with_capacity(m + time_marked.len());
    let mut index = Vec::with_capacity(m + time_marked.len());
    for n in 0..m {
        let key = (grid.partition().mesh_index(n), space_marked[n].as_slice());
        let id = match made.iter().find(|(k, _)| *k == key) {
            Some(&(_, id)) => id,
            None => {
                let old = grid.mesh(n);
                let mesh = if key.1.is_empty() {
                    old.clone()
                } else {
                    Arc::new(old.refine(key.1))
                };
                meshes.push(mesh);
                made.push((key, meshes.len() - 1));
                meshes.len() - 1
            }
        };
        let k = grid.partition().step(n);
        if bisect[n] {
            steps.extend([0.5 * k, 0.5 * k]);
            index.extend([id, id]);
        } else {
            steps.push(k);
            index.push(id);
        }
    }
    SpaceTimeGrid::new(TimePartition::new(steps, index)?, meshes)
}

/// Primal cG(1) unknowns summed over all intervals.
pub fn space_time_dofs(grid: &SpaceTimeGrid) -> Result<usize> {
    (0..grid.len()).map(|n| Ok(N_COMP * grid.space(n, 1)?.n_free())).sum()
}

/// Mean number of cells per interval.
pub fn mean_cells(grid: &SpaceTimeGrid) -> f64 {
    (0..grid.len()).map(|n| grid.mesh(n).n_cells()).sum::<usize>() as f64 / grid.len() as f64
}

/// One pass of the adaptive loop.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopRecord {
    pub iteration: usize,
    pub m: usize,
    pub mean_cells: f64,
    pub dofs: usize,
    pub j: f64,
    pub eta: f64,
    pub eta_k: f64,
    pub eta_h: f64,
    /// `J_ref - J`, if a reference is known
    pub error: Option<f64>,
}

/// Result of the adaptive loop. On failure the records of the completed
/// loops are kept together with the error.
#[derive(Debug)]
pub struct AdaptOutcome {
    pub records: Vec<LoopRecord>,
    /// grid and primal solution of the last completed loop
    pub grid: Option<SpaceTimeGrid>,
    pub primal: Option<Trajectory>,
    pub failure: Option<Error>,
}

/// Solve, estimate with the primal cG(1)/cG(1) estimator, mark and refine,
/// up to `config.max_loops` times after the initial solve.
pub fn adaptive_loop(
    grid: SpaceTimeGrid,
    problem: &Problem,
    config: &MarkingConfig,
    settings: &SweepSettings,
    j_ref: Option<f64>,
) -> AdaptOutcome {
    let mut out = AdaptOutcome {
        records: Vec::new(),
        grid: None,
        primal: None,
        failure: None,
    };
    if let Err(e) = config.validate() {
        out.failure = Some(e);
        return out;
    }
    let mut grid = grid;
    for iteration in 0..=config.max_loops {
        match adapt_step(&grid, problem, settings, j_ref, iteration) {
            Ok((record, primal, cells, intervals)) => {
                log::info!(
                    "adaptive loop {iteration}: M = {}, N = {:.1}, J = {:.9e}, eta = {:.3e}",
                    record.m,
                    record.mean_cells,
                    record.j,
                    record.eta
                );
                let done = iteration == config.max_loops || record.eta.abs() < config.tolerance;
                out.records.push(record);
                if done {
                    out.primal = Some(primal);
                    out.grid = Some(grid);
                    return out;
                }
                drop(primal);
                let time = mark_time(&intervals, config.time_fraction);
                let space = mark_space(&cells, config.space_fraction);
                match refine_grid(&grid, &time, &space) {
                    Ok(g) => grid = g,
                    Err(e) => {
                        out.failure = Some(e);
                        return out;
                    }
                }
            }
            Err(e) => {
                log::error!("adaptive loop {iteration} failed: {e}");
                out.failure = Some(e);
                return out;
            }
        }
    }
    unreachable!("the last iteration returns")
}

type StepResult = (LoopRecord, Trajectory, Vec<Vec<f64>>, Vec<f64>);

fn adapt_step(
    grid: &SpaceTimeGrid,
    problem: &Problem,
    settings: &SweepSettings,
    j_ref: Option<f64>,
    iteration: usize,
) -> Result<StepResult> {
    let primal = solve_primal(grid, problem, 1, settings)?;
    let adjoint = solve_adjoint(grid, problem, &primal, 1, settings)?;
    let input = EstimatorInput::new(grid, problem, EstimatorVariant::Cg1Cg1, &primal, &adjoint)?;
    let eta = estimate(input, Which::Primal)?.primal.expect("requested");
    drop(adjoint);
    let cells = (0..grid.len())
        .map(|n| Ok(eta.cells(n, &*grid.space(n, 1)?)))
        .collect::<Result<Vec<_>>>()?;
    let j = primal.goal().expect("goal accumulated");
    let record = LoopRecord {
        iteration,
        m: grid.len(),
        mean_cells: mean_cells(grid),
        dofs: space_time_dofs(grid)?,
        j,
        eta: eta.total(),
        eta_k: eta.eta_k(),
        eta_h: eta.eta_h(),
        error: j_ref.map(|r| r - j),
    };
    Ok((record, primal, cells, eta.intervals()))
}

/// Position of the reaction front: the `x` coordinate of the vertex with the
/// largest reaction rate, together with that rate.
pub fn front_position(space: &FeSpace, u: &[f64], problem: &Problem) -> (f64, f64) {
    let nodes = space.expand(u);
    let n = space.n_nodes();
    let mut best = (f64::NAN, f64::NEG_INFINITY);
    for i in 0..n {
        let w = omega(nodes[i], nodes[n + i], &problem.params);
        if w > best.1 {
            best = (space.node_coords(i)[0], w);
        }
    }
    best
}

/// Share of the finest cells of `mesh` whose center lies within `band` of
/// `x_front` in `x`.
pub fn finest_cells_near_front(mesh: &Mesh, x_front: f64, band: f64) -> f64 {
    let top = mesh.max_level();
    let mut finest = 0usize;
    let mut near = 0usize;
    for c in 0..mesh.n_cells() {
        if mesh.level(c) == top {
            finest += 1;
            if (mesh.cell_center(c)[0] - x_front).abs() <= band {
                near += 1;
            }
        }
    }
    near as f64 / finest.max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::BoundaryMarker;
    use proptest::prelude::*;

    #[test]
    fn fixed_fraction_examples() {
        let eta = [3.0, 1.0, 2.0, 5.0];
        assert_eq!(mark_time(&eta, 0.5), vec![0, 3]);
        assert_eq!(mark_time(&eta, 1.0), vec![0, 1, 2, 3]);
        assert!(mark_time(&eta, 0.0).is_empty());
        assert_eq!(mark_time(&[-4.0, 1.0, 2.0], 0.34), vec![0, 2]);
    }

    #[test]
    fn ties_go_to_the_smaller_id() {
        let eta = vec![1.0; 10];
        assert_eq!(mark_space(&[eta], 0.33), vec![vec![0, 1, 2, 3]]);
        assert_eq!(mark_fraction(&[2.0, -2.0, 2.0, 1.0], 0.5), vec![0, 1]);
    }

    #[test]
    fn marked_counts() {
        assert_eq!(marked_count(256, 0.5), 128);
        assert_eq!(marked_count(896, 0.33), 296);
        assert_eq!(marked_count(100, 0.33), 33);
        assert_eq!(marked_count(3, 0.5), 2);
        assert_eq!(marked_count(0, 0.5), 0);
    }

    #[test]
    fn invalid_fractions_are_rejected() {
        let c = MarkingConfig {
            time_fraction: 1.5,
            ..MarkingConfig::default()
        };
        assert!(c.validate().is_err());
        assert!(MarkingConfig::default().validate().is_ok());
    }

    fn square() -> Arc<Mesh> {
        Arc::new(
            Mesh::rectangle(0.0, 1.0, 0.0, 1.0, 2, 2, |_, _| BoundaryMarker::Dirichlet)
                .unwrap()
                .refine_global(),
        )
    }

    #[test]
    fn bisected_intervals_inherit_the_refined_mesh() {
        let grid = SpaceTimeGrid::uniform(square(), 1.0, 4).unwrap();
        let space = vec![vec![0], vec![], vec![0], vec![5]];
        let g = refine_grid(&grid, &[1, 3], &space).unwrap();
        assert_eq!(g.len(), 6);
        assert_eq!(g.partition().steps(), &[0.25, 0.125, 0.125, 0.25, 0.125, 0.125]);
        // intervals 0 and 2 had the same mesh and marks
        assert_eq!(g.meshes().len(), 3);
        assert!(Arc::ptr_eq(g.mesh(0), g.mesh(3)));
        assert!(Arc::ptr_eq(g.mesh(1), grid.mesh(1)));
        assert!(Arc::ptr_eq(g.mesh(4), g.mesh(5)));
        // a marked cell drags its three siblings along
        assert_eq!(g.mesh(4).n_cells(), 16 + 4 * 3);
        assert!((g.partition().final_time() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_loops_records_the_initial_solve() {
        let grid = SpaceTimeGrid::uniform(square(), 0.1, 2).unwrap();
        let problem = Problem::heat(0.1);
        let config = MarkingConfig {
            max_loops: 0,
            ..MarkingConfig::default()
        };
        let out = adaptive_loop(grid, &problem, &config, &SweepSettings::default(), None);
        assert!(out.failure.is_none());
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.records[0].m, 2);
        assert_eq!(out.grid.unwrap().len(), 2);
    }

    #[test]
    fn loop_grows_intervals_by_half() {
        let grid = SpaceTimeGrid::uniform(square(), 0.1, 4).unwrap();
        let problem = Problem::heat(0.1);
        let config = MarkingConfig {
            max_loops: 2,
            ..MarkingConfig::default()
        };
        let out = adaptive_loop(grid, &problem, &config, &SweepSettings::default(), Some(0.0));
        assert!(out.failure.is_none());
        let m: Vec<usize> = out.records.iter().map(|r| r.m).collect();
        assert_eq!(m, vec![4, 6, 9]);
        assert!(out.records.iter().all(|r| r.error == Some(-r.j)));
        assert!(out.records[1].mean_cells > out.records[0].mean_cells);
    }

    #[test]
    fn failures_keep_partial_records() {
        let grid = SpaceTimeGrid::uniform(square(), 0.1, 2).unwrap();
        let problem = Problem::heat(0.1);
        let config = MarkingConfig {
            max_loops: 2,
            ..MarkingConfig::default()
        };
        let mut settings = SweepSettings::default();
        settings.newton.max_iter = 0;
        let out = adaptive_loop(grid, &problem, &config, &settings, None);
        assert!(out.records.is_empty());
        assert!(matches!(out.failure, Some(Error::NewtonDivergence { .. })));
    }

    #[test]
    fn front_is_located_at_the_largest_rate() {
        let mesh = Arc::new(Mesh::rectangle(0.0, 20.0, 0.0, 2.0, 20, 2, |_, _| BoundaryMarker::Neumann).unwrap());
        let space = FeSpace::new(mesh.clone(), 1).unwrap();
        let problem = Problem::combustion(Default::default(), 1.0, 40.0);
        let u = space.restrict(&space.interpolate(|x| crate::model::initial_values([x[0] + 3.0, x[1]], 1.0)));
        let (x, w) = front_position(&space, &u, &problem);
        assert!(w > 0.0);
        assert!((x - 6.0).abs() <= 1.0, "{x}");
        let refined = mesh.refine(&[5, 6, 25, 26]);
        assert_eq!(finest_cells_near_front(&refined, 6.0, 1.0), 1.0);
        assert_eq!(finest_cells_near_front(&refined, 15.0, 1.0), 0.0);
    }

    proptest! {
        #[test]
        fn marking_selects_the_largest(values in proptest::collection::vec(-10.0f64..10.0, 1..60), fraction in 0.0f64..=1.0) {
            let marked = mark_fraction(&values, fraction);
            prop_assert_eq!(marked.len(), marked_count(values.len(), fraction));
            let smallest_marked = marked.iter().map(|&i| values[i].abs()).fold(f64::INFINITY, f64::min);
            for i in 0..values.len() {
                if !marked.contains(&i) {
                    prop_assert!(values[i].abs() <= smallest_marked);
                }
            }
        }
    }
}
