//! Command line driver: `solve`, `estimate`, `study` and `adapt`.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::Parser;

use crate::adapt::{
    adaptive_loop, finest_cells_near_front, front_position, global_grid, run_study, space_time_dofs, Reference,
    StudyConfig,
};
use crate::error::{Error, Result};
use crate::estimator::{estimate, EstimatorInput, EstimatorVariant, Which};
use crate::fespace::FeSpace;
use crate::io::{
    fmt_float, parse_variant_list, write_adapt_csv, write_csv, write_fields, write_mesh, write_study_csv, CurvePoint,
    Mode, PointField, RunConfig,
};
use crate::model::{omega, Problem};
use crate::timestep::{goal_only, solve_adjoint, solve_primal, SpaceTimeGrid, Trajectory};

#[derive(Debug, Parser)]
#[command(name = "flame-dwr", version, about = "Space-time goal-oriented adaptivity for a flame in a cooled channel")]
struct Args {
    /// solve, estimate, study or adapt
    #[arg(value_name = "MODE")]
    mode_arg: Option<String>,
    /// same as the positional MODE
    #[arg(long)]
    mode: Option<String>,
    /// sectioned key = value configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// estimator variant(s): cg1cg1, cg1cg2, cg2cg2, a comma separated list or all
    #[arg(long)]
    variant: Option<String>,
    /// number of global refinement levels (the finest level for solve and estimate)
    #[arg(long)]
    levels: Option<usize>,
    /// output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// threads used inside factorizations
    #[arg(long)]
    threads: Option<usize>,
}

/// Exit status for configuration problems.
pub const EXIT_CONFIG: i32 = 2;
/// Exit status for failed computations.
pub const EXIT_FAILURE: i32 = 1;

/// Runs the program on `argv` (including the program name) and returns the
/// exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).try_init();
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { 0 };
        }
    };
    let config = match build_config(&args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    crate::linalg::set_threads(config.threads);
    match execute(&config) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::ConfigParse { .. } | Error::MissingKey(_) | Error::Config(_) | Error::Geometry(_) => EXIT_CONFIG,
                _ => EXIT_FAILURE,
            }
        }
    }
}

fn build_config(args: &Args) -> Result<RunConfig> {
    let mut c = match &args.config {
        Some(p) => RunConfig::from_file(p).map_err(|e| match e {
            Error::Io(io) => Error::Config(format!("cannot read {}: {io}", p.display())),
            e => e,
        })?,
        None => RunConfig::default(),
    };
    let mode = match (&args.mode_arg, &args.mode) {
        (Some(a), Some(b)) if a != b => {
            return Err(Error::Config(format!("mode given twice: '{a}' and '{b}'")));
        }
        (Some(m), _) | (None, Some(m)) => Some(m),
        (None, None) => None,
    };
    if let Some(m) = mode {
        c.mode = m.parse()?;
    }
    if let Some(v) = &args.variant {
        c.variants = parse_variant_list(v)?;
    }
    if let Some(l) = args.levels {
        c.levels = l;
    }
    if let Some(o) = &args.out {
        c.output = o.clone();
    }
    if let Some(t) = args.threads {
        c.threads = t.max(1);
    }
    c.validate()?;
    Ok(c)
}

fn execute(c: &RunConfig) -> Result<()> {
    fs::create_dir_all(&c.output)?;
    match c.mode {
        Mode::Solve => solve_mode(c),
        Mode::Estimate => estimate_mode(c),
        Mode::Study => study_mode(c),
        Mode::Adapt => adapt_mode(c),
    }
}

fn finest_grid(c: &RunConfig) -> Result<SpaceTimeGrid> {
    global_grid(&c.base_mesh()?, c.intervals, c.final_time, c.levels)
}

fn snapshot_intervals(c: &RunConfig, m: usize) -> Vec<usize> {
    if c.vtk_every == 0 {
        return Vec::new();
    }
    let mut v: Vec<usize> = (0..m).step_by(c.vtk_every).collect();
    if v.last() != Some(&(m - 1)) {
        v.push(m - 1);
    }
    v
}

/// `theta`, `Y` and the reaction rate at the cG(1) nodes.
fn state_fields(space: &FeSpace, u: &[f64], problem: &Problem) -> [Vec<f64>; 3] {
    let nodes = space.expand(u);
    let n = space.n_nodes();
    let (theta, y) = nodes.split_at(n);
    let w = theta.iter().zip(y).map(|(&t, &y)| omega(t, y, &problem.params)).collect();
    [theta.to_vec(), y.to_vec(), w]
}

fn write_state(path: &Path, space: &FeSpace, u: &[f64], problem: &Problem, extra: &[PointField<'_>], cells: &[(&str, &[f64])]) -> Result<()> {
    let [theta, y, w] = state_fields(space, u, problem);
    let mut points = vec![
        PointField { name: "theta", values: &theta },
        PointField { name: "Y", values: &y },
        PointField { name: "omega", values: &w },
    ];
    points.extend_from_slice(extra);
    write_fields(path, space, &points, cells)
}

/// cG(1) representative of a primal trajectory value.
fn cg1_value(grid: &SpaceTimeGrid, traj: &Trajectory, n: usize) -> Result<Vec<f64>> {
    let u = traj.get(n)?;
    if traj.order() == 1 {
        return Ok(u);
    }
    crate::fespace::restrict_cg2_to_cg1(&u, &*grid.space(n, traj.order())?, &*grid.space(n, 1)?)
}

fn solve_mode(c: &RunConfig) -> Result<()> {
    let problem = c.problem();
    let grid = finest_grid(c)?;
    let order = if c.variants == [EstimatorVariant::Cg2Cg2] { 2 } else { 1 };
    let u = solve_primal(&grid, &problem, order, &c.sweep)?;
    let j = u.goal().expect("goal accumulated");
    println!("J = {}", fmt_float(j));
    let mut header = vec!["M", "N", "order", "J"];
    let mut row = vec![grid.len().to_string(), grid.mesh(0).n_cells().to_string(), order.to_string(), fmt_float(j)];
    if let Some(r) = c.known_reference() {
        println!("J_ref = {}, error = {}", fmt_float(r), fmt_float(r - j));
        header.extend(["J_ref", "J_error_vs_ref"]);
        row.extend([fmt_float(r), fmt_float(r - j)]);
    }
    write_csv(&c.output.join("solve.csv"), &header, &[row])?;
    for n in snapshot_intervals(c, grid.len()) {
        let space = grid.space(n, 1)?;
        let v = cg1_value(&grid, &u, n)?;
        write_state(&c.output.join(format!("fields_{n}.vtk")), &space, &v, &problem, &[], &[])?;
    }
    Ok(())
}

fn estimate_mode(c: &RunConfig) -> Result<()> {
    let problem = c.problem();
    let grid = finest_grid(c)?;
    let several = c.variants.len() > 1;
    let mut totals = Vec::new();
    let mut u1: Option<Trajectory> = None;
    for &variant in &c.variants {
        let dir = if several { c.output.join(variant.name()) } else { c.output.clone() };
        fs::create_dir_all(&dir)?;
        let owned;
        let primal = if variant.primal_order() == 1 {
            if u1.is_none() {
                u1 = Some(solve_primal(&grid, &problem, 1, &c.sweep)?);
            }
            u1.as_ref().unwrap()
        } else {
            owned = solve_primal(&grid, &problem, 2, &c.sweep)?;
            &owned
        };
        let z = solve_adjoint(&grid, &problem, primal, variant.adjoint_order(), &c.sweep)?;
        let est = estimate(EstimatorInput::new(&grid, &problem, variant, primal, &z)?, Which::Both)?;
        let full = est.full()?;
        let (p, a) = (est.primal.unwrap(), est.adjoint.unwrap());
        let j = primal.goal().expect("goal accumulated");
        println!(
            "{variant}: J = {}, eta = {} (eta_k {}, eta_h {}), eta* = {}, full = {}",
            fmt_float(j),
            fmt_float(p.total()),
            fmt_float(p.eta_k()),
            fmt_float(p.eta_h()),
            fmt_float(a.total()),
            fmt_float(full.total())
        );
        totals.push(vec![
            variant.to_string(),
            grid.len().to_string(),
            grid.mesh(0).n_cells().to_string(),
            fmt_float(j),
            fmt_float(p.eta_k()),
            fmt_float(p.eta_h()),
            fmt_float(p.total()),
            fmt_float(p.global_total()),
            fmt_float(a.total()),
            fmt_float(full.total()),
        ]);
        let rows: Vec<Vec<String>> = (0..grid.len())
            .map(|n| {
                let (t0, t1) = grid.partition().interval(n);
                vec![
                    n.to_string(),
                    fmt_float(t0),
                    fmt_float(t1),
                    fmt_float(p.interval(n)),
                    fmt_float(a.interval(n)),
                ]
            })
            .collect();
        write_csv(&dir.join("intervals.csv"), &["n", "t0", "t1", "eta", "eta_adj"], &rows)?;
        for n in snapshot_intervals(c, grid.len()) {
            let space = grid.space(n, 1)?;
            let eta = space.expand_scalar(&p.dof(n));
            let cells = p.cells(n, &space);
            let v = cg1_value(&grid, primal, n)?;
            write_state(
                &dir.join(format!("fields_{n}.vtk")),
                &space,
                &v,
                &problem,
                &[PointField { name: "eta", values: &eta }],
                &[("eta_cell", &cells)],
            )?;
        }
    }
    write_csv(
        &c.output.join("estimate.csv"),
        &["variant", "M", "N", "J", "eta_k", "eta_h", "eta_total", "eta_global", "eta_adj_total", "eta_full"],
        &totals,
    )
}

fn reference(c: &RunConfig) -> Reference {
    match c.known_reference() {
        Some(v) => Reference::Known(v),
        None => Reference::Refined,
    }
}

fn study_mode(c: &RunConfig) -> Result<()> {
    let problem = c.problem();
    let config = StudyConfig {
        base_mesh: c.base_mesh()?,
        m0: c.intervals,
        final_time: c.final_time,
        levels: c.levels,
        variants: c.variants.clone(),
        reference: reference(c),
    };
    let rows = run_study(&problem, &config, &c.sweep)?;
    let path = c.output.join("table.csv");
    write_study_csv(&path, &rows)?;
    print!("{}", fs::read_to_string(&path)?);
    Ok(())
}

fn adapt_mode(c: &RunConfig) -> Result<()> {
    let problem = c.problem();
    let base = c.base_mesh()?;
    let j_ref = match c.known_reference() {
        Some(v) => v,
        None => goal_only(&global_grid(&base, c.intervals, c.final_time, c.levels + 1)?, &problem, 1, &c.sweep)?,
    };
    let mut points = Vec::new();
    for level in 1..=c.levels {
        let grid = global_grid(&base, c.intervals, c.final_time, level)?;
        let j = goal_only(&grid, &problem, 1, &c.sweep)?;
        points.push(CurvePoint {
            kind: "global",
            step: level,
            m: grid.len(),
            n: grid.mesh(0).n_cells() as f64,
            dofs: space_time_dofs(&grid)?,
            j,
            eta: None,
            error: Some(j_ref - j),
        });
    }
    let grid = global_grid(&base, c.intervals, c.final_time, 1)?;
    let out = adaptive_loop(grid, &problem, &c.marking, &c.sweep, Some(j_ref));
    points.extend(out.records.iter().map(CurvePoint::adaptive));
    write_adapt_csv(&c.output.join("adapt.csv"), &points)?;
    if let (Some(grid), Some(u)) = (&out.grid, &out.primal) {
        for n in snapshot_intervals(c, grid.len()) {
            let space = grid.space(n, 1)?;
            write_mesh(&c.output.join(format!("mesh_{n}.vtk")), &space)?;
            let v = u.get(n)?;
            let (x, _) = front_position(&space, &v, &problem);
            log::info!(
                "interval {n}: front at x = {x:.2}, {:.0}% of the finest cells within 5 of it",
                100.0 * finest_cells_near_front(space.mesh(), x, 5.0)
            );
            write_state(&c.output.join(format!("fields_{n}.vtk")), &space, &v, &problem, &[], &[])?;
        }
    }
    match out.failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}
