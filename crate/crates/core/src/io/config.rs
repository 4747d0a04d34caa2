//! Run configuration: a sectioned `key = value` file (TOML syntax) on top
//! of built-in defaults for the channel flame.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;

use crate::adapt::MarkingConfig;
use crate::error::{Error, Result};
use crate::estimator::EstimatorVariant;
use crate::linalg::SolverKind;
use crate::mesh::{BoundaryMarker, ChannelGeometry, Mesh};
use crate::model::{ModelParams, Problem};
use crate::timestep::{StorageMode, SweepSettings};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Solve,
    Estimate,
    Study,
    Adapt,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Mode> {
        match s {
            "solve" => Ok(Mode::Solve),
            "estimate" => Ok(Mode::Estimate),
            "study" => Ok(Mode::Study),
            "adapt" => Ok(Mode::Adapt),
            _ => Err(Error::Config(format!(
                "unknown mode '{s}' (expected solve, estimate, study or adapt)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    /// flame in the notched channel
    Combustion,
    /// heat equation with known solution on the unit square
    Heat,
}

/// Reference goal value for error columns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReferenceSpec {
    /// closed form where known, otherwise one level beyond the finest
    Auto,
    Refined,
    Value(f64),
}

/// Everything one invocation needs.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub mode: Mode,
    pub problem: ProblemKind,
    pub variants: Vec<EstimatorVariant>,
    pub levels: usize,
    pub output: PathBuf,
    pub threads: usize,
    pub reference: ReferenceSpec,
    pub geometry: ChannelGeometry,
    /// cells per side of the heat problem's square on level 1
    pub heat_cells: usize,
    pub model: ModelParams,
    pub final_time: f64,
    /// intervals on level 1
    pub intervals: usize,
    pub marking: MarkingConfig,
    pub sweep: SweepSettings,
    /// write every this many intervals to VTK, 0 for none
    pub vtk_every: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: Mode::Study,
            problem: ProblemKind::Combustion,
            variants: EstimatorVariant::ALL.to_vec(),
            levels: 1,
            output: PathBuf::from("out"),
            threads: 1,
            reference: ReferenceSpec::Auto,
            geometry: ChannelGeometry::default(),
            heat_cells: 4,
            model: ModelParams::default(),
            final_time: 60.0,
            intervals: 256,
            marking: MarkingConfig::default(),
            sweep: SweepSettings::default(),
            vtk_every: 32,
        }
    }
}

impl RunConfig {
    /// Defaults overridden by the file contents.
    pub fn from_str(text: &str) -> Result<RunConfig> {
        let file: FileConfig = toml::from_str(text).map_err(|e| convert_error(text, e))?;
        let mut c = RunConfig::default();
        file.apply(&mut c)?;
        c.validate()?;
        Ok(c)
    }

    pub fn from_file(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)?;
        RunConfig::from_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 {
            return Err(Error::Config("levels must be at least 1".into()));
        }
        if !(self.final_time > 0.0) || self.intervals == 0 {
            return Err(Error::Config("need final_time > 0 and intervals > 0".into()));
        }
        if self.variants.is_empty() {
            return Err(Error::Config("no estimator variant selected".into()));
        }
        if self.heat_cells == 0 || self.heat_cells % 2 == 1 {
            return Err(Error::Config("heat cells must be a positive even number".into()));
        }
        self.marking.validate()
    }

    /// Step of level 1.
    pub fn step(&self) -> f64 {
        self.final_time / self.intervals as f64
    }

    pub fn problem(&self) -> Problem {
        match self.problem {
            ProblemKind::Combustion => Problem::combustion(self.model, self.final_time, self.geometry.area()),
            ProblemKind::Heat => Problem::heat(self.final_time),
        }
    }

    /// Mesh of level 1.
    pub fn base_mesh(&self) -> Result<Arc<Mesh>> {
        Ok(Arc::new(match self.problem {
            ProblemKind::Combustion => self.geometry.build()?,
            // built once refined so that the level 1 mesh has 2x2 patches
            ProblemKind::Heat => {
                let n = self.heat_cells / 2;
                Mesh::rectangle(0.0, 1.0, 0.0, 1.0, n, n, |_, _| BoundaryMarker::Dirichlet)?.refine_global()
            }
        }))
    }

    /// Reference value known without computation.
    pub fn known_reference(&self) -> Option<f64> {
        match (self.reference, self.problem) {
            (ReferenceSpec::Value(v), _) => Some(v),
            (ReferenceSpec::Auto, ProblemKind::Heat) => Some(Problem::heat_exact_goal(self.final_time)),
            _ => None,
        }
    }
}

fn convert_error(text: &str, e: toml::de::Error) -> Error {
    let message = e.message().to_string();
    let line = e.span().map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
    if let Some(rest) = message.strip_prefix("missing field `") {
        let key = rest.split('`').next().unwrap_or_default();
        // the span of a missing field covers its table
        let section = e
            .span()
            .and_then(|s| text.get(s.start..s.end))
            .and_then(|t| t.trim_start().strip_prefix('['))
            .and_then(|t| t.split(']').next())
            .map(|s| s.trim().to_string());
        return Error::MissingKey(match section {
            Some(s) if !s.is_empty() => format!("{s}.{key}"),
            _ => key.to_string(),
        });
    }
    Error::ConfigParse {
        line: line.unwrap_or(0),
        message,
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    run: Option<RunSection>,
    problem: Option<ProblemSection>,
    model: Option<ModelSection>,
    geometry: Option<GeometrySection>,
    heat: Option<HeatSection>,
    marking: Option<MarkingSection>,
    solver: Option<SolverSection>,
    output: Option<OutputSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunSection {
    mode: Option<String>,
    variant: Option<VariantList>,
    levels: Option<usize>,
    threads: Option<usize>,
    reference: Option<ReferenceValue>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum VariantList {
    One(String),
    Many(Vec<String>),
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum ReferenceValue {
    Value(f64),
    Name(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemSection {
    kind: Option<String>,
    final_time: Option<f64>,
    intervals: Option<usize>,
    step: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelSection {
    le: Option<f64>,
    alpha: Option<f64>,
    beta: Option<f64>,
    robin_k: Option<f64>,
    denom_floor: Option<f64>,
}

/// A geometry is given completely or not at all.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GeometrySection {
    length: f64,
    height: f64,
    notch_x0: f64,
    notch_x1: f64,
    notch_depth: f64,
    initial_h: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeatSection {
    cells: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MarkingSection {
    time_fraction: Option<f64>,
    space_fraction: Option<f64>,
    max_loops: Option<usize>,
    tolerance: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SolverSection {
    linear: Option<String>,
    newton_tol: Option<f64>,
    newton_max_iter: Option<usize>,
    storage: Option<String>,
    storage_dir: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutputSection {
    dir: Option<PathBuf>,
    vtk_every: Option<usize>,
}

fn set<T>(target: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *target = v;
    }
}

impl FileConfig {
    fn apply(self, c: &mut RunConfig) -> Result<()> {
        if let Some(r) = self.run {
            if let Some(m) = r.mode {
                c.mode = m.parse()?;
            }
            if let Some(v) = r.variant {
                c.variants = parse_variants(&v)?;
            }
            set(&mut c.levels, r.levels);
            set(&mut c.threads, r.threads);
            if let Some(r) = r.reference {
                c.reference = match r {
                    ReferenceValue::Value(v) => ReferenceSpec::Value(v),
                    ReferenceValue::Name(s) if s == "auto" => ReferenceSpec::Auto,
                    ReferenceValue::Name(s) if s == "refined" => ReferenceSpec::Refined,
                    ReferenceValue::Name(s) => {
                        return Err(Error::Config(format!(
                            "reference must be a number, 'auto' or 'refined', got '{s}'"
                        )))
                    }
                };
            }
        }
        if let Some(p) = self.problem {
            if let Some(kind) = p.kind {
                c.problem = match kind.as_str() {
                    "combustion" => ProblemKind::Combustion,
                    "heat" => ProblemKind::Heat,
                    _ => return Err(Error::Config(format!("unknown problem kind '{kind}'"))),
                };
                if c.problem == ProblemKind::Heat && p.final_time.is_none() {
                    c.final_time = 0.1;
                }
                if c.problem == ProblemKind::Heat && p.intervals.is_none() && p.step.is_none() {
                    c.intervals = 4;
                }
            }
            set(&mut c.final_time, p.final_time);
            match (p.intervals, p.step) {
                (Some(m), Some(k)) => {
                    if (k * m as f64 - c.final_time).abs() > 1e-10 * c.final_time {
                        return Err(Error::Config(format!(
                            "step * intervals = {} differs from final_time = {}",
                            k * m as f64,
                            c.final_time
                        )));
                    }
                    c.intervals = m;
                }
                (Some(m), None) => c.intervals = m,
                (None, Some(k)) => {
                    let m = (c.final_time / k).round();
                    if !(k > 0.0) || (m * k - c.final_time).abs() > 1e-10 * c.final_time {
                        return Err(Error::Config(format!(
                            "step {k} does not divide final_time {}",
                            c.final_time
                        )));
                    }
                    c.intervals = m as usize;
                }
                (None, None) => {}
            }
        }
        if let Some(m) = self.model {
            set(&mut c.model.le, m.le);
            set(&mut c.model.alpha, m.alpha);
            set(&mut c.model.beta, m.beta);
            set(&mut c.model.robin_k, m.robin_k);
            set(&mut c.model.denom_floor, m.denom_floor);
            if !(c.model.le > 0.0) {
                return Err(Error::Config("le must be positive".into()));
            }
        }
        if let Some(g) = self.geometry {
            c.geometry = ChannelGeometry {
                length: g.length,
                height: g.height,
                notch_x0: g.notch_x0,
                notch_x1: g.notch_x1,
                notch_depth: g.notch_depth,
                initial_h: g.initial_h,
            };
        }
        if let Some(h) = self.heat {
            c.heat_cells = h.cells;
        }
        if let Some(m) = self.marking {
            set(&mut c.marking.time_fraction, m.time_fraction);
            set(&mut c.marking.space_fraction, m.space_fraction);
            set(&mut c.marking.max_loops, m.max_loops);
            set(&mut c.marking.tolerance, m.tolerance);
        }
        if let Some(s) = self.solver {
            if let Some(l) = s.linear {
                c.sweep.solver = match l.as_str() {
                    "auto" => SolverKind::Auto,
                    "direct" => SolverKind::Direct,
                    "iterative" => SolverKind::Iterative,
                    _ => return Err(Error::Config(format!("unknown linear solver '{l}'"))),
                };
            }
            set(&mut c.sweep.newton.abs_tol, s.newton_tol);
            set(&mut c.sweep.newton.max_iter, s.newton_max_iter);
            if let Some(st) = s.storage {
                c.sweep.storage = match st.as_str() {
                    "auto" => StorageMode::default(),
                    "memory" => StorageMode::Memory,
                    "disk" => StorageMode::Disk(s.storage_dir),
                    _ => return Err(Error::Config(format!("unknown storage mode '{st}'"))),
                };
            }
        }
        if let Some(o) = self.output {
            set(&mut c.output, o.dir);
            set(&mut c.vtk_every, o.vtk_every);
        }
        Ok(())
    }
}

fn parse_variants(v: &VariantList) -> Result<Vec<EstimatorVariant>> {
    match v {
        VariantList::One(s) => parse_variant_list(s),
        VariantList::Many(list) => list.iter().map(|s| s.parse()).collect(),
    }
}

/// `all` or a comma separated list of variant names.
pub fn parse_variant_list(s: &str) -> Result<Vec<EstimatorVariant>> {
    if s.trim() == "all" {
        return Ok(EstimatorVariant::ALL.to_vec());
    }
    s.split(',').map(|v| v.trim().parse()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = RunConfig::from_str("").unwrap();
        assert_eq!(c.intervals, 256);
        assert_eq!(c.step(), 0.234375);
        assert_eq!(c.variants.len(), 3);
        assert_eq!(c.marking, MarkingConfig::default());
    }

    #[test]
    fn sections_override_defaults() {
        let c = RunConfig::from_str(
            "[run]\nmode = \"adapt\"\nvariant = \"cg1cg2\"\nlevels = 2\n\n[problem]\nfinal_time = 30.0\nstep = 0.25\n\n[marking]\nspace_fraction = 0.2\n",
        )
        .unwrap();
        assert_eq!(c.mode, Mode::Adapt);
        assert_eq!(c.variants, vec![EstimatorVariant::Cg1Cg2]);
        assert_eq!(c.intervals, 120);
        assert_eq!(c.marking.space_fraction, 0.2);
        assert_eq!(c.marking.time_fraction, 0.5);
    }

    #[test]
    fn unknown_key_reports_its_line() {
        let err = RunConfig::from_str("[run]\nlevels = 2\nlevles = 3\n").unwrap_err();
        match err {
            Error::ConfigParse { line, message } => {
                assert_eq!(line, 3);
                assert!(message.contains("levles"));
            }
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn syntax_error_reports_its_line() {
        let err = RunConfig::from_str("[run]\nlevels = 2\n\nmode = = x\n").unwrap_err();
        assert!(matches!(err, Error::ConfigParse { line: 4, .. }), "{err:?}");
    }

    #[test]
    fn incomplete_geometry_names_the_missing_key() {
        let err = RunConfig::from_str(
            "[geometry]\nlength = 60.0\nheight = 15.0\nnotch_x0 = 15.0\nnotch_x1 = 30.0\ninitial_h = 0.9375\n",
        )
        .unwrap_err();
        match err {
            Error::MissingKey(k) => assert_eq!(k, "geometry.notch_depth"),
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn inconsistent_partition_is_rejected() {
        assert!(RunConfig::from_str("[problem]\nfinal_time = 60.0\nintervals = 256\nstep = 0.25\n").is_err());
        assert!(RunConfig::from_str("[problem]\nfinal_time = 1.0\nstep = 0.3\n").is_err());
        assert!(RunConfig::from_str("[marking]\ntime_fraction = 2.0\n").is_err());
    }

    #[test]
    fn heat_problem_defaults() {
        let c = RunConfig::from_str("[problem]\nkind = \"heat\"\n").unwrap();
        assert_eq!(c.problem, ProblemKind::Heat);
        assert_eq!(c.final_time, 0.1);
        assert_eq!(c.known_reference(), Some(Problem::heat_exact_goal(0.1)));
        assert_eq!(c.base_mesh().unwrap().n_cells(), 16);
    }

    #[test]
    fn variant_lists() {
        assert_eq!(parse_variant_list("all").unwrap().len(), 3);
        assert_eq!(
            parse_variant_list("cg1cg1, cg2cg2").unwrap(),
            vec![EstimatorVariant::Cg1Cg1, EstimatorVariant::Cg2Cg2]
        );
        assert!(parse_variant_list("cg1cg3").is_err());
    }
}
