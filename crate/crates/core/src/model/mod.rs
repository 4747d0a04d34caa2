//! The thermo-diffusive combustion model: Arrhenius reaction rate, boundary
//! and initial data, goal functionals, and the dG(0) step forms. A linear
//! heat problem with known solution shares the same machinery.

mod assemble;
mod forms;

pub use assemble::{
    assemble_goal_derivative, assemble_step, evaluate_goal, goal_on_interval, l2_project_initial,
    StepSystem,
};
pub(crate) use assemble::{assemble_mass, dirichlet_vector};
pub use forms::{
    adjoint_residual, goal_derivative, jacobian_form, primal_residual, residual_form, Localized,
    Previous,
};

use std::f64::consts::PI;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

/// Parameters of the reaction-diffusion system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    /// Lewis number
    pub le: f64,
    /// gas expansion
    pub alpha: f64,
    /// activation energy
    pub beta: f64,
    /// heat loss coefficient on the cooled walls, `d_n theta = -robin_k theta`
    pub robin_k: f64,
    /// lower bound for `1 + alpha (theta - 1)`
    pub denom_floor: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            le: 1.0,
            alpha: 0.8,
            beta: 10.0,
            robin_k: 0.1,
            denom_floor: 1e-8,
        }
    }
}

static CLAMP_WARNED: AtomicBool = AtomicBool::new(false);

#[inline]
fn denominator(theta: f64, p: &ModelParams) -> (f64, bool) {
    let d = 1.0 + p.alpha * (theta - 1.0);
    if d <= p.denom_floor {
        if !CLAMP_WARNED.swap(true, Ordering::Relaxed) {
            log::warn!(
                "Arrhenius denominator {d:e} below floor {:e} at theta = {theta}; clamping",
                p.denom_floor
            );
        }
        (p.denom_floor, true)
    } else {
        (d, false)
    }
}

/// Arrhenius reaction rate `beta^2/(2 Le) Y exp(beta (theta-1) / (1 + alpha (theta-1)))`.
#[inline]
pub fn omega(theta: f64, y: f64, p: &ModelParams) -> f64 {
    let (d, _) = denominator(theta, p);
    p.beta * p.beta / (2.0 * p.le) * y * (p.beta * (theta - 1.0) / d).exp()
}

/// Partial derivatives `(d omega / d theta, d omega / d Y)`.
#[inline]
pub fn omega_jacobian(theta: f64, y: f64, p: &ModelParams) -> (f64, f64) {
    let (d, clamped) = denominator(theta, p);
    let dy = p.beta * p.beta / (2.0 * p.le) * (p.beta * (theta - 1.0) / d).exp();
    let dtheta = if clamped { 0.0 } else { dy * y * p.beta / (d * d) };
    (dtheta, dy)
}

/// `omega` together with its partial derivatives, sharing one exponential.
#[inline]
pub fn omega_with_jacobian(theta: f64, y: f64, p: &ModelParams) -> (f64, f64, f64) {
    let (d, clamped) = denominator(theta, p);
    let c = p.beta * p.beta / (2.0 * p.le);
    let e = (p.beta * (theta - 1.0) / d).exp();
    let dy = c * e;
    let dtheta = if clamped { 0.0 } else { dy * y * p.beta / (d * d) };
    (c * y * e, dtheta, dy)
}

/// Goal functional density, integrated over space-time and divided by
/// `T |Omega|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Goal {
    /// the reaction rate `omega(theta, Y)`
    ReactionRate,
    /// `w_theta theta + w_Y Y`
    MeanValue { weights: [f64; 2] },
}

pub type InitialData = Arc<dyn Fn([f64; 2]) -> [f64; 2] + Send + Sync>;

/// Everything defining one space-time problem apart from the
/// discretization.
#[derive(Clone)]
pub struct Problem {
    pub params: ModelParams,
    /// reaction term switched on
    pub reaction: bool,
    /// Robin term switched on
    pub robin: bool,
    pub final_time: f64,
    /// measure of the domain
    pub area: f64,
    pub goal: Goal,
    pub initial: InitialData,
    /// constant values of `(theta, Y)` on Dirichlet faces
    pub dirichlet: [f64; 2],
}

impl std::fmt::Debug for Problem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Problem")
            .field("params", &self.params)
            .field("reaction", &self.reaction)
            .field("robin", &self.robin)
            .field("final_time", &self.final_time)
            .field("area", &self.area)
            .field("goal", &self.goal)
            .field("dirichlet", &self.dirichlet)
            .finish()
    }
}

/// Initial flame profile: burnt for `x <= 9`, exponential tails ahead.
pub fn initial_values(x: [f64; 2], le: f64) -> [f64; 2] {
    if x[0] <= 9.0 {
        [1.0, 0.0]
    } else {
        [(9.0 - x[0]).exp(), 1.0 - (le * (9.0 - x[0])).exp()]
    }
}

impl Problem {
    /// The flame in the channel: fixed burnt state on the inlet, cooled
    /// recess walls, goal = space-time mean reaction rate.
    pub fn combustion(params: ModelParams, final_time: f64, area: f64) -> Problem {
        let le = params.le;
        Problem {
            params,
            reaction: true,
            robin: true,
            final_time,
            area,
            goal: Goal::ReactionRate,
            initial: Arc::new(move |x| initial_values(x, le)),
            dirichlet: [1.0, 0.0],
        }
    }

    /// Heat equation on the unit square with solution
    /// `exp(-2 pi^2 t) sin(pi x) sin(pi y)` in `theta` and `Y = 0`;
    /// goal = space-time mean of `theta`.
    pub fn heat(final_time: f64) -> Problem {
        Problem {
            params: ModelParams::default(),
            reaction: false,
            robin: false,
            final_time,
            area: 1.0,
            goal: Goal::MeanValue { weights: [1.0, 0.0] },
            initial: Arc::new(|x| [(PI * x[0]).sin() * (PI * x[1]).sin(), 0.0]),
            dirichlet: [0.0, 0.0],
        }
    }

    /// Exact goal value of the heat problem.
    pub fn heat_exact_goal(final_time: f64) -> f64 {
        let a = 2.0 * PI * PI;
        4.0 / (PI * PI) * (1.0 - (-a * final_time).exp()) / (a * final_time)
    }

    /// Scaling `1 / (T |Omega|)` of the goal.
    pub fn goal_scale(&self) -> f64 {
        1.0 / (self.final_time * self.area)
    }

    #[inline]
    pub fn reaction(&self, u: [f64; 2]) -> f64 {
        if self.reaction {
            omega(u[0], u[1], &self.params)
        } else {
            0.0
        }
    }

    #[inline]
    pub fn reaction_jacobian(&self, u: [f64; 2]) -> (f64, f64) {
        if self.reaction {
            omega_jacobian(u[0], u[1], &self.params)
        } else {
            (0.0, 0.0)
        }
    }

    #[inline]
    pub fn reaction_with_jacobian(&self, u: [f64; 2]) -> (f64, f64, f64) {
        if self.reaction {
            omega_with_jacobian(u[0], u[1], &self.params)
        } else {
            (0.0, 0.0, 0.0)
        }
    }

    /// Unscaled goal density.
    #[inline]
    pub fn goal_density(&self, u: [f64; 2]) -> f64 {
        match self.goal {
            Goal::ReactionRate => omega(u[0], u[1], &self.params),
            Goal::MeanValue { weights } => weights[0] * u[0] + weights[1] * u[1],
        }
    }

    /// Gradient of the unscaled goal density.
    #[inline]
    pub fn goal_density_derivative(&self, u: [f64; 2]) -> [f64; 2] {
        match self.goal {
            Goal::ReactionRate => {
                let (a, b) = omega_jacobian(u[0], u[1], &self.params);
                [a, b]
            }
            Goal::MeanValue { weights } => weights,
        }
    }
}
