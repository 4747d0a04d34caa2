use std::sync::Arc;

use crate::error::{Error, Result};
use crate::estimator::{combine_full, effectivity, estimate, EstimatorInput, EstimatorVariant, IndicatorField, Which};
use crate::mesh::Mesh;
use crate::model::Problem;
use crate::timestep::{goal_only, solve_adjoint, solve_primal, SpaceTimeGrid, SweepSettings, Trajectory};

/// Where the reference goal value comes from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Reference {
    /// known value, e.g. from a closed form
    Known(f64),
    /// cG(1) solution one global refinement beyond the finest level
    Refined,
}

/// A ladder of global refinements in space and time.
#[derive(Debug, Clone)]
pub struct StudyConfig {
    /// mesh of level 1
    pub base_mesh: Arc<Mesh>,
    /// intervals on level 1
    pub m0: usize,
    pub final_time: f64,
    pub levels: usize,
    pub variants: Vec<EstimatorVariant>,
    pub reference: Reference,
}

/// One line of the study table.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyRow {
    pub variant: EstimatorVariant,
    pub level: usize,
    pub m: usize,
    pub n: usize,
    /// goal of the cG(1) solution
    pub j: f64,
    pub j_ref: f64,
    pub j_error_vs_ref: f64,
    pub eta_k: f64,
    pub eta_h: f64,
    pub eta_total: f64,
    /// primal estimator without localization
    pub eta_global: f64,
    pub eta_adj_total: f64,
    pub eta_adj_global: f64,
    pub eta_full: f64,
    /// primal effectivity
    pub i_eff: f64,
}

/// Uniform grid of `level` (1-based): `level - 1` global refinements of the
/// base mesh and `m0 * 2^(level-1)` intervals.
pub fn global_grid(base: &Arc<Mesh>, m0: usize, final_time: f64, level: usize) -> Result<SpaceTimeGrid> {
    if level == 0 {
        return Err(Error::Config("levels are counted from 1".into()));
    }
    let mut mesh = base.clone();
    for _ in 1..level {
        mesh = Arc::new(mesh.refine_global());
    }
    SpaceTimeGrid::uniform(mesh, final_time, m0 << (level - 1))
}

/// Runs every variant on every level and compares with the reference goal.
/// The error is always measured for the cG(1) primal solution.
pub fn run_study(problem: &Problem, config: &StudyConfig, settings: &SweepSettings) -> Result<Vec<StudyRow>> {
    if config.variants.is_empty() || config.levels == 0 {
        return Err(Error::Config("a study needs at least one level and one variant".into()));
    }
    let j_ref = match config.reference {
        Reference::Known(v) => v,
        Reference::Refined => {
            let grid = global_grid(&config.base_mesh, config.m0, config.final_time, config.levels + 1)?;
            log::info!("reference run: M = {}, N = {}", grid.len(), grid.mesh(0).n_cells());
            goal_only(&grid, problem, 1, settings)?
        }
    };
    let mut rows = Vec::new();
    for level in 1..=config.levels {
        let grid = global_grid(&config.base_mesh, config.m0, config.final_time, level)?;
        log::info!("level {level}: M = {}, N = {}", grid.len(), grid.mesh(0).n_cells());
        let u1 = solve_primal(&grid, problem, 1, settings)?;
        let j = u1.goal().expect("goal accumulated");
        let mut u2: Option<Trajectory> = None;
        for &variant in &config.variants {
            let primal = if variant.primal_order() == 1 {
                &u1
            } else {
                if u2.is_none() {
                    u2 = Some(solve_primal(&grid, problem, 2, settings)?);
                }
                u2.as_ref().unwrap()
            };
            let z = solve_adjoint(&grid, problem, primal, variant.adjoint_order(), settings)?;
            let input = EstimatorInput::new(&grid, problem, variant, primal, &z)?;
            let est = estimate(input, Which::Both)?;
            let (p, a) = (est.primal.expect("requested"), est.adjoint.expect("requested"));
            let row = make_row(variant, level, &grid, j, j_ref, &p, &a)?;
            log::info!(
                "level {level} {variant}: error {:.3e}, eta {:.3e}, eta* {:.3e}, I_eff {:.3}",
                row.j_error_vs_ref,
                row.eta_total,
                row.eta_adj_total,
                row.i_eff
            );
            rows.push(row);
        }
    }
    Ok(rows)
}

fn make_row(
    variant: EstimatorVariant,
    level: usize,
    grid: &SpaceTimeGrid,
    j: f64,
    j_ref: f64,
    primal: &IndicatorField,
    adjoint: &IndicatorField,
) -> Result<StudyRow> {
    let full = combine_full(primal, adjoint)?;
    let error = j_ref - j;
    Ok(StudyRow {
        variant,
        level,
        m: grid.len(),
        n: grid.mesh(0).n_cells(),
        j,
        j_ref,
        j_error_vs_ref: error,
        eta_k: primal.eta_k(),
        eta_h: primal.eta_h(),
        eta_total: primal.total(),
        eta_global: primal.global_total(),
        eta_adj_total: adjoint.total(),
        eta_adj_global: adjoint.global_total(),
        eta_full: full.total(),
        i_eff: effectivity(primal.total(), error),
    })
}
