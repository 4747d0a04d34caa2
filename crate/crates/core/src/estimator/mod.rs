//! Dual weighted residual estimators for the dG(0) trajectories: temporal
//! and spatial parts of the primal and adjoint estimators in three
//! variants, localized by the dG(0)cG(1) partition of unity.
//!
//! On interval `I_n = (t_{n-1}, t_n]` the piecewise constant adjoint value
//! `Z_n` belongs to the left end point, the primal value `U_n` to the right
//! one. The temporal interpolant `i_k Z` therefore runs from `Z_n` at
//! `t_{n-1}` to `Z_{n+1}` at `t_n` (with `Z_{M+1} = 0`), and `i_k U` from
//! `U_{n-1}` to `U_n`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fespace::{patch_interp_cg1_to_cg2, restrict_cg2_to_cg1, FeSpace, LocalField, TimeAffine};
use crate::model::{adjoint_residual, primal_residual, Localized, Previous, Problem};
use crate::timestep::{SpaceTimeGrid, Trajectory};

/// Which discrete solutions enter the estimator and how the weights are
/// approximated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EstimatorVariant {
    /// cG(1) primal and adjoint, spatial weights by patchwise biquadratic
    /// interpolation
    Cg1Cg1,
    /// cG(1) primal, cG(2) adjoint
    Cg1Cg2,
    /// cG(2) primal and adjoint, linearized at their cG(1) interpolants
    Cg2Cg2,
}

impl EstimatorVariant {
    pub const ALL: [EstimatorVariant; 3] = [
        EstimatorVariant::Cg1Cg1,
        EstimatorVariant::Cg1Cg2,
        EstimatorVariant::Cg2Cg2,
    ];

    pub fn primal_order(self) -> usize {
        match self {
            EstimatorVariant::Cg2Cg2 => 2,
            _ => 1,
        }
    }

    pub fn adjoint_order(self) -> usize {
        match self {
            EstimatorVariant::Cg1Cg1 => 1,
            _ => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EstimatorVariant::Cg1Cg1 => "cg1cg1",
            EstimatorVariant::Cg1Cg2 => "cg1cg2",
            EstimatorVariant::Cg2Cg2 => "cg2cg2",
        }
    }
}

impl fmt::Display for EstimatorVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['_', '/', '-'], "").as_str() {
            "cg1cg1" => Ok(EstimatorVariant::Cg1Cg1),
            "cg1cg2" => Ok(EstimatorVariant::Cg1Cg2),
            "cg2cg2" => Ok(EstimatorVariant::Cg2Cg2),
            _ => Err(Error::Config(format!("unknown estimator variant '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightKind {
    Temporal,
    Spatial,
}

/// Localized indicators `eta_i^n` over the free cG(1) unknowns of each
/// interval, split into temporal and spatial parts, together with the
/// unlocalized values of the same residuals.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IndicatorField {
    pub temporal: Vec<Vec<f64>>,
    pub spatial: Vec<Vec<f64>>,
    pub global_temporal: Vec<f64>,
    pub global_spatial: Vec<f64>,
}

impl IndicatorField {
    pub fn len(&self) -> usize {
        self.temporal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.temporal.is_empty()
    }

    fn push(&mut self, temporal: Localized, spatial: Localized) {
        self.global_temporal.push(temporal.total);
        self.global_spatial.push(spatial.total);
        self.temporal.push(temporal.dof.expect("localized"));
        self.spatial.push(spatial.dof.expect("localized"));
    }

    /// `eta_i^n`, temporal plus spatial part.
    pub fn dof(&self, n: usize) -> Vec<f64> {
        self.temporal[n].iter().zip(&self.spatial[n]).map(|(a, b)| a + b).collect()
    }

    /// `eta^n = sum_i eta_i^n`.
    pub fn interval(&self, n: usize) -> f64 {
        self.temporal[n].iter().sum::<f64>() + self.spatial[n].iter().sum::<f64>()
    }

    pub fn intervals(&self) -> Vec<f64> {
        (0..self.len()).map(|n| self.interval(n)).collect()
    }

    /// Localized temporal total.
    pub fn eta_k(&self) -> f64 {
        self.temporal.iter().flatten().sum()
    }

    /// Localized spatial total.
    pub fn eta_h(&self) -> f64 {
        self.spatial.iter().flatten().sum()
    }

    pub fn total(&self) -> f64 {
        self.eta_k() + self.eta_h()
    }

    /// Unlocalized total, computed with the weights alone.
    pub fn global_total(&self) -> f64 {
        self.global_temporal.iter().sum::<f64>() + self.global_spatial.iter().sum::<f64>()
    }

    pub fn global_eta_k(&self) -> f64 {
        self.global_temporal.iter().sum()
    }

    pub fn global_eta_h(&self) -> f64 {
        self.global_spatial.iter().sum()
    }

    /// Cell indicators `eta_K^n` of interval `n` on the cG(1) space of that
    /// interval.
    pub fn cells(&self, n: usize, pu: &FeSpace) -> Vec<f64> {
        cell_indicators(pu, &self.dof(n))
    }

    /// Elementwise `a * self + b * other`.
    pub fn lin_comb(&self, a: f64, other: &IndicatorField, b: f64) -> Result<IndicatorField> {
        let same = self.len() == other.len()
            && (0..self.len()).all(|n| {
                self.temporal[n].len() == other.temporal[n].len() && self.spatial[n].len() == other.spatial[n].len()
            });
        if !same {
            return Err(Error::MeshMismatch("indicator fields on different grids".into()));
        }
        let mix = |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(u, v)| a * u + b * v).collect() };
        Ok(IndicatorField {
            temporal: self.temporal.iter().zip(&other.temporal).map(|(x, y)| mix(x, y)).collect(),
            spatial: self.spatial.iter().zip(&other.spatial).map(|(x, y)| mix(x, y)).collect(),
            global_temporal: mix(&self.global_temporal, &other.global_temporal),
            global_spatial: mix(&self.global_spatial, &other.global_spatial),
        })
    }
}

/// `eta_K = sum of the values at the four vertices of K`, hanging vertices
/// taking their constrained values.
pub fn cell_indicators(pu: &FeSpace, dof: &[f64]) -> Vec<f64> {
    assert_eq!(pu.order(), 1);
    (0..pu.n_cells())
        .map(|c| {
            pu.cell_nodes(c)
                .iter()
                .map(|&node| pu.expansion(node as usize).iter().map(|&(f, w)| w * dof[f as usize]).sum::<f64>())
                .sum()
        })
        .collect()
}

/// Weighted number of cells touching each free cG(1) unknown, so that
/// `sum_K eta_K = sum_i m_i eta_i`.
pub fn multiplicities(pu: &FeSpace) -> Vec<f64> {
    let mut m = vec![0.0; pu.n_free()];
    for c in 0..pu.n_cells() {
        for &node in pu.cell_nodes(c) {
            for &(f, w) in pu.expansion(node as usize) {
                m[f as usize] += w;
            }
        }
    }
    m
}

/// Aggregated view of an indicator field.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub cells: Vec<Vec<f64>>,
    pub intervals: Vec<f64>,
    pub eta_k: f64,
    pub eta_h: f64,
    pub total: f64,
}

pub fn aggregate(field: &IndicatorField, grid: &SpaceTimeGrid) -> Result<Aggregate> {
    let cells = (0..field.len())
        .map(|n| Ok(field.cells(n, &*grid.space(n, 1)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Aggregate {
        cells,
        intervals: field.intervals(),
        eta_k: field.eta_k(),
        eta_h: field.eta_h(),
        total: field.total(),
    })
}

/// `1/2 (eta + eta*)`, elementwise.
pub fn combine_full(primal: &IndicatorField, adjoint: &IndicatorField) -> Result<IndicatorField> {
    primal.lin_comb(0.5, adjoint, 0.5)
}

/// `I_eff = eta / (J(u_ref) - J(u_kh))`.
pub fn effectivity(eta: f64, error: f64) -> f64 {
    eta / error
}

/// Trajectories entering one estimator evaluation.
#[derive(Clone, Copy)]
pub struct EstimatorInput<'a> {
    pub grid: &'a SpaceTimeGrid,
    pub problem: &'a Problem,
    pub variant: EstimatorVariant,
    pub primal: &'a Trajectory,
    pub adjoint: &'a Trajectory,
}

impl<'a> EstimatorInput<'a> {
    pub fn new(
        grid: &'a SpaceTimeGrid,
        problem: &'a Problem,
        variant: EstimatorVariant,
        primal: &'a Trajectory,
        adjoint: &'a Trajectory,
    ) -> Result<EstimatorInput<'a>> {
        let mismatch = |what: String| Error::VariantMismatch {
            variant: variant.to_string(),
            what,
        };
        if primal.order() != variant.primal_order() {
            return Err(mismatch(format!(
                "a cG({}) primal trajectory, got cG({})",
                variant.primal_order(),
                primal.order()
            )));
        }
        if adjoint.order() != variant.adjoint_order() {
            return Err(mismatch(format!(
                "a cG({}) adjoint trajectory, got cG({})",
                variant.adjoint_order(),
                adjoint.order()
            )));
        }
        if primal.len() != grid.len() || adjoint.len() != grid.len() {
            return Err(mismatch(format!("trajectories with {} intervals", grid.len())));
        }
        if primal.initial().is_none() {
            return Err(mismatch("the initial value of the primal trajectory".into()));
        }
        Ok(EstimatorInput {
            grid,
            problem,
            variant,
            primal,
            adjoint,
        })
    }
}

/// Weights of one interval, all represented on the mesh of that interval.
#[derive(Debug, Clone)]
pub struct IntervalWeights {
    pub temporal: TimeAffine,
    pub spatial: TimeAffine,
}

impl IntervalWeights {
    pub fn get(&self, kind: WeightKind) -> &TimeAffine {
        match kind {
            WeightKind::Temporal => &self.temporal,
            WeightKind::Spatial => &self.spatial,
        }
    }
}

/// cG(1) representatives of the primal and adjoint value of one interval
/// plus the higher order originals where they exist.
struct Slice {
    space: Arc<FeSpace>,
    u_lo: Vec<f64>,
    z_lo: Vec<f64>,
    u_hi: Option<Vec<f64>>,
    z_hi: Option<Vec<f64>>,
}

/// Streams the trajectories forward and builds the per-interval fields.
struct Walker<'a> {
    input: EstimatorInput<'a>,
    /// cG(1) primal value before the current interval, on its own mesh
    prev: Option<(Arc<FeSpace>, Vec<f64>)>,
    current: Option<Slice>,
}

/// Everything the residual evaluations of one interval need.
struct IntervalFields {
    pu: Arc<FeSpace>,
    k: f64,
    t0: f64,
    t1: f64,
    u: LocalField,
    /// `None` on the first interval: the exact initial data
    prev: Option<LocalField>,
    /// cG(1) primal value before the interval (initial value on `I_1`)
    u_before: LocalField,
    z: LocalField,
    z_next: Option<LocalField>,
    u_lo: Vec<f64>,
    z_lo: Vec<f64>,
    /// cG(2) originals and their space, where they exist
    u_hi: Option<Vec<f64>>,
    z_hi: Option<Vec<f64>>,
    p2: Option<Arc<FeSpace>>,
}

impl<'a> Walker<'a> {
    fn new(input: EstimatorInput<'a>) -> Walker<'a> {
        Walker {
            input,
            prev: None,
            current: None,
        }
    }

    fn lo(&self, v: Vec<f64>, n: usize, order: usize) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
        if order == 1 {
            return Ok((v, None));
        }
        let grid = self.input.grid;
        let lo = restrict_cg2_to_cg1(&v, &*grid.space(n, 2)?, &*grid.space(n, 1)?)?;
        Ok((lo, Some(v)))
    }

    fn load(&self, n: usize) -> Result<Slice> {
        let (u_lo, u_hi) = self.lo(self.input.primal.get(n)?, n, self.input.primal.order())?;
        let (z_lo, z_hi) = self.lo(self.input.adjoint.get(n)?, n, self.input.adjoint.order())?;
        Ok(Slice {
            space: self.input.grid.space(n, 1)?,
            u_lo,
            z_lo,
            u_hi,
            z_hi,
        })
    }

    fn interval(&mut self, n: usize) -> Result<IntervalFields> {
        let grid = self.input.grid;
        let m = grid.len();
        if n == 0 {
            let init = self.input.primal.initial().expect("checked").to_vec();
            let (lo, _) = self.lo(init, 0, self.input.primal.order())?;
            self.prev = Some((grid.space(0, 1)?, lo));
        }
        let cur = match self.current.take() {
            Some(s) => s,
            None => self.load(n)?,
        };
        let next = if n + 1 < m { Some(self.load(n + 1)?) } else { None };
        let pu = cur.space.clone();
        let (prev_space, prev_lo) = self.prev.as_ref().expect("set on the first interval");
        let before = grid.transfer(prev_lo, prev_space, &pu)?;
        let u_before = LocalField::from_free(&pu, &before);
        let u = LocalField::from_free(&pu, &cur.u_lo);
        let z = LocalField::from_free(&pu, &cur.z_lo);
        let z_next = match &next {
            Some(s) => Some(LocalField::from_free(&pu, &grid.transfer(&s.z_lo, &s.space, &pu)?)),
            None => None,
        };
        let p2 = match cur.u_hi.is_some() || cur.z_hi.is_some() {
            true => Some(grid.space(n, 2)?),
            false => None,
        };
        let (t0, t1) = grid.partition().interval(n);
        let fields = IntervalFields {
            pu: pu.clone(),
            k: grid.partition().step(n),
            t0,
            t1,
            prev: (n > 0).then(|| u_before.clone()),
            u_before,
            u,
            z,
            z_next,
            u_lo: cur.u_lo.clone(),
            z_lo: cur.z_lo,
            u_hi: cur.u_hi,
            z_hi: cur.z_hi,
            p2,
        };
        self.prev = Some((pu, cur.u_lo));
        self.current = next;
        Ok(fields)
    }
}

impl IntervalFields {
    /// `v_hi - v_lo` with the cG(2) original, or the patchwise biquadratic
    /// interpolant if there is none.
    fn spatial(&self, hi: &Option<Vec<f64>>, lo: &[f64], lo_field: &LocalField) -> Result<LocalField> {
        Ok(match hi {
            Some(hi) => LocalField::from_free(self.p2.as_deref().expect("cG(2) space"), hi).sub(lo_field),
            None => patch_interp_cg1_to_cg2(lo, &self.pu)?.sub(lo_field),
        })
    }

    fn primal_weights(&self) -> Result<IntervalWeights> {
        let zero = LocalField::zeros(1, self.u.n_cells());
        let end = match &self.z_next {
            Some(zn) => zn.sub(&self.z),
            None => self.z.scaled(-1.0),
        };
        let spatial = self.spatial(&self.z_hi, &self.z_lo, &self.z)?;
        Ok(IntervalWeights {
            temporal: affine(zero, end, self.t0, self.t1),
            spatial: affine(spatial.clone(), spatial, self.t0, self.t1),
        })
    }

    fn adjoint_weights(&self) -> Result<IntervalWeights> {
        let zero = LocalField::zeros(1, self.u.n_cells());
        let spatial = self.spatial(&self.u_hi, &self.u_lo, &self.u)?;
        Ok(IntervalWeights {
            temporal: affine(self.u_before.sub(&self.u), zero, self.t0, self.t1),
            spatial: affine(spatial.clone(), spatial, self.t0, self.t1),
        })
    }

    fn primal(&self, problem: &Problem, w: &TimeAffine) -> Localized {
        let prev = match &self.prev {
            Some(p) => Previous::Field(p),
            None => Previous::Initial,
        };
        primal_residual(self.pu.mesh(), problem, &self.u, prev, self.k, w, Some(&self.pu))
    }

    fn adjoint(&self, problem: &Problem, w: &TimeAffine) -> Localized {
        adjoint_residual(
            self.pu.mesh(),
            problem,
            &self.u,
            &self.z,
            self.z_next.as_ref(),
            self.k,
            w,
            Some(&self.pu),
        )
    }
}

fn affine(start: LocalField, end: LocalField, t0: f64, t1: f64) -> TimeAffine {
    TimeAffine { t0, t1, start, end }
}

/// Primal weights `i_k Z - Z` and the spatial weight of the variant, per
/// interval.
pub fn build_primal_weights(input: EstimatorInput<'_>) -> Result<Vec<IntervalWeights>> {
    let mut w = Walker::new(input);
    (0..input.grid.len())
        .map(|n| Ok(w.interval(n)?.primal_weights()?))
        .collect()
}

/// Adjoint weights `i_k U - U` and the spatial weight of the variant, per
/// interval.
pub fn build_adjoint_weights(input: EstimatorInput<'_>) -> Result<Vec<IntervalWeights>> {
    let mut w = Walker::new(input);
    (0..input.grid.len())
        .map(|n| Ok(w.interval(n)?.adjoint_weights()?))
        .collect()
}

/// Which estimators to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    Primal,
    Adjoint,
    Both,
}

/// Primal and adjoint indicator fields of one variant.
#[derive(Debug, Clone, Default)]
pub struct Estimate {
    pub primal: Option<IndicatorField>,
    pub adjoint: Option<IndicatorField>,
}

impl Estimate {
    pub fn full(&self) -> Result<IndicatorField> {
        match (&self.primal, &self.adjoint) {
            (Some(p), Some(a)) => combine_full(p, a),
            _ => Err(Error::Config("the full estimator needs primal and adjoint parts".into())),
        }
    }
}

/// Evaluates the requested estimators in one forward pass over the
/// trajectories.
pub fn estimate(input: EstimatorInput<'_>, which: Which) -> Result<Estimate> {
    let mut walker = Walker::new(input);
    let mut primal = matches!(which, Which::Primal | Which::Both).then(IndicatorField::default);
    let mut adjoint = matches!(which, Which::Adjoint | Which::Both).then(IndicatorField::default);
    for n in 0..input.grid.len() {
        let f = walker.interval(n)?;
        if let Some(field) = primal.as_mut() {
            let w = f.primal_weights()?;
            field.push(f.primal(input.problem, &w.temporal), f.primal(input.problem, &w.spatial));
        }
        if let Some(field) = adjoint.as_mut() {
            let w = f.adjoint_weights()?;
            field.push(f.adjoint(input.problem, &w.temporal), f.adjoint(input.problem, &w.spatial));
        }
        if n % 128 == 0 {
            log::debug!("estimator {} interval {n}/{}", input.variant, input.grid.len());
        }
    }
    Ok(Estimate { primal, adjoint })
}

/// Primal indicators `F(w chi_i^n) - A(u, w chi_i^n)`.
pub fn evaluate_primal(input: EstimatorInput<'_>) -> Result<IndicatorField> {
    Ok(estimate(input, Which::Primal)?.primal.expect("requested"))
}

/// Adjoint indicators `J'(u)(w chi_i^n) - A'(u)(w chi_i^n, z)`.
pub fn evaluate_adjoint(input: EstimatorInput<'_>) -> Result<IndicatorField> {
    Ok(estimate(input, Which::Adjoint)?.adjoint.expect("requested"))
}
