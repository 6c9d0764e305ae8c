//! Fixed-step RK4 relaxation of the kinetic system to its steady state.

use crate::config::{ModelParams, NumericsParams};
use crate::error::ModelError;
use crate::kinetics::{max_norm, KineticSystem, LossForm, MixtureState};

/// Safety factor in `dt = SAFETY / (eta * rho_total)`.
pub const DT_SAFETY: f64 = 0.5;

/// Largest per-species mass drift accepted on a converged run.
pub const MASS_DRIFT_TOL: f64 = 1e-9;

/// Default step for a run with total density `rho_total`.
pub fn stable_dt(eta: f64, rho_total: f64) -> f64 {
    DT_SAFETY / (eta * rho_total)
}

#[derive(Clone, Debug)]
pub struct RelaxationResult {
    pub final_state: MixtureState,
    /// Residual reached `tol` and species masses were conserved.
    pub converged: bool,
    /// Max-norm of the right-hand side at exit.
    pub residual: f64,
    pub t_final: f64,
    pub steps: usize,
    pub dt: f64,
    /// `|rho_p(t_final) - rho_p(0)|` per population.
    pub mass_drift: Vec<f64>,
}

impl RelaxationResult {
    pub fn mass_conserved(&self) -> bool {
        self.mass_drift.iter().all(|&d| d <= MASS_DRIFT_TOL)
    }
}

/// Scratch buffers for RK4 stages.
struct Rk4 {
    k: [Vec<Vec<f64>>; 4],
    stage: Vec<Vec<f64>>,
}

impl Rk4 {
    fn new(classes: &[usize]) -> Self {
        let zeros = || classes.iter().map(|&n| vec![0.0; n]).collect::<Vec<_>>();
        Self { k: [zeros(), zeros(), zeros(), zeros()], stage: zeros() }
    }

    /// Advances `f` by `dt`, assuming `self.k[0]` already holds `rhs(f)`.
    fn advance(&mut self, system: &KineticSystem, f: &mut [Vec<f64>], dt: f64) {
        let [k1, k2, k3, k4] = &mut self.k;
        fill_stage(&mut self.stage, f, k1, 0.5 * dt);
        system.derivative_into(&self.stage, k2);
        fill_stage(&mut self.stage, f, k2, 0.5 * dt);
        system.derivative_into(&self.stage, k3);
        fill_stage(&mut self.stage, f, k3, dt);
        system.derivative_into(&self.stage, k4);
        for (p, fp) in f.iter_mut().enumerate() {
            for (j, v) in fp.iter_mut().enumerate() {
                *v += dt / 6.0 * (k1[p][j] + 2.0 * k2[p][j] + 2.0 * k3[p][j] + k4[p][j]);
            }
        }
    }
}

fn fill_stage(stage: &mut [Vec<f64>], f: &[Vec<f64>], k: &[Vec<f64>], h: f64) {
    for ((s, fp), kp) in stage.iter_mut().zip(f).zip(k) {
        for ((sv, fv), kv) in s.iter_mut().zip(fp).zip(kp) {
            *sv = fv + h * kv;
        }
    }
}

/// One classical RK4 step of `system` from `state`.
///
/// The step is stable for `dt <= stable_dt(eta, rho_total)`.
pub fn step(system: &KineticSystem, state: &MixtureState, dt: f64) -> Result<MixtureState, ModelError> {
    system.check_dimensions(state.as_slices())?;
    let mut rk = Rk4::new(&state.classes());
    let mut f = state.as_slices().to_vec();
    system.derivative_into(&f, &mut rk.k[0]);
    rk.advance(system, &mut f, dt);
    let next = MixtureState::from_raw(f);
    if !next.is_finite() {
        return Err(ModelError::NumericalFailure { t: dt });
    }
    Ok(next)
}

/// Integrates `system` from `initial` until the right-hand side max-norm drops
/// to `numerics.tol` or the time reaches `numerics.t_max`.
///
/// `observer` sees `(t, state, residual)` before every step and at exit.
/// Non-convergence is reported through `converged = false`; only non-finite
/// values abort.
pub fn relax_with<F>(
    system: &KineticSystem,
    initial: &MixtureState,
    numerics: &NumericsParams,
    mut observer: F,
) -> Result<RelaxationResult, ModelError>
where
    F: FnMut(f64, &MixtureState, f64),
{
    system.check_dimensions(initial.as_slices())?;
    let initial_mass = initial.densities();
    let rho_total: f64 = initial_mass.iter().sum();
    let dt = match numerics.dt {
        Some(dt) => dt,
        None if rho_total > 0.0 => stable_dt(system.eta(), rho_total),
        None => 0.0,
    };

    let mut rk = Rk4::new(&initial.classes());
    let mut state = initial.clone();
    let mut t = 0.0;
    let mut steps = 0usize;
    system.derivative_into(state.as_slices(), &mut rk.k[0]);
    let mut residual = max_norm(&rk.k[0]);

    loop {
        observer(t, &state, residual);
        if residual <= numerics.tol || t >= numerics.t_max || dt == 0.0 {
            break;
        }
        rk.advance(system, state.as_mut_slices(), dt);
        steps += 1;
        t = steps as f64 * dt;
        if !state.is_finite() {
            return Err(ModelError::NumericalFailure { t });
        }
        system.derivative_into(state.as_slices(), &mut rk.k[0]);
        residual = max_norm(&rk.k[0]);
    }

    let mass_drift: Vec<f64> =
        state.densities().iter().zip(&initial_mass).map(|(now, then)| (now - then).abs()).collect();
    let mut result = RelaxationResult {
        final_state: state,
        converged: false,
        residual,
        t_final: t,
        steps,
        dt,
        mass_drift,
    };
    result.converged = residual <= numerics.tol && result.mass_conserved();
    if !result.mass_conserved() {
        log::debug!("mass drift {:?} exceeds {MASS_DRIFT_TOL}", result.mass_drift);
    }
    Ok(result)
}

pub fn relax(system: &KineticSystem, initial: &MixtureState, numerics: &NumericsParams) -> Result<RelaxationResult, ModelError> {
    relax_with(system, initial, numerics, |_, _, _| {})
}

/// Relaxes `initial` with the well-balanced operator of `params`, building the
/// tables at the occupancy fixed by the initial masses.
pub fn relax_to_equilibrium(
    params: &ModelParams,
    initial: &MixtureState,
    numerics: &NumericsParams,
) -> Result<RelaxationResult, ModelError> {
    let system = KineticSystem::for_densities(params, &initial.densities(), LossForm::WellBalanced)?;
    relax(&system, initial, numerics)
}
