//! Closed-form free-phase equilibria for `alpha = 1` (so `Q = 0`).
//!
//! Below the critical occupancy (`R = 1 - P <= 1/2`) no vehicle sits in a
//! class slower than the trucks' top class, all trucks travel at their top
//! speed, and the car distribution follows from a chain of quadratics solved
//! class by class, the last class closing the car mass.

use crate::config::SpeedLattice;
use crate::error::ModelError;

/// Occupancy at which the free phase ends: `(1/2)^(1/gamma)`.
pub fn critical_space(gamma: f64) -> f64 {
    0.5f64.powf(1.0 / gamma)
}

/// Largest equilibrium flux, reached by cars alone at the critical occupancy.
pub fn max_flux(gamma: f64, v_max: f64, rho_max_cars: f64) -> f64 {
    v_max * rho_max_cars * critical_space(gamma)
}

#[derive(Clone, Debug, PartialEq)]
pub struct FreePhaseEquilibrium {
    pub f_cars: Vec<f64>,
    pub f_trucks: Vec<f64>,
    /// `R <= 1/2`; the distributions are empty otherwise.
    pub valid: bool,
    /// Total equilibrium flux, vehicles/h.
    pub flux: f64,
}

/// Largest root of `-r x^2 + b x + c = 0` with `r >= 0`, `c >= 0`.
///
/// Uses the cancellation-free branch: `(b + sqrt(D)) / (2r)` when `b >= 0`,
/// `2c / (sqrt(D) - b)` otherwise. The second form stays finite as `r -> 0`.
pub fn largest_root(r: f64, b: f64, c: f64) -> Result<f64, ModelError> {
    let disc = b * b + 4.0 * r * c;
    if disc < 0.0 || disc.is_nan() {
        return Err(ModelError::NegativeDiscriminant(disc));
    }
    let sq = disc.sqrt();
    if b >= 0.0 {
        if r == 0.0 {
            // linear equation b x + c = 0 with b >= 0, c >= 0
            return Ok(if b == 0.0 { 0.0 } else { -c / b });
        }
        Ok((b + sq) / (2.0 * r))
    } else {
        Ok(2.0 * c / (sq - b))
    }
}

/// Free-phase equilibrium of cars on `cars` and trucks on the prefix lattice
/// `trucks`, with `r = 1 - P`.
pub fn free_phase_equilibrium(
    rho_cars: f64,
    rho_trucks: f64,
    cars: &SpeedLattice,
    trucks: &SpeedLattice,
    r: f64,
) -> Result<FreePhaseEquilibrium, ModelError> {
    if !trucks.is_prefix_of(cars) {
        return Err(ModelError::LatticeNesting { candidate: cars.len(), field: trucks.len() });
    }
    let (n_c, n_t) = (cars.len(), trucks.len());
    if r > 0.5 {
        return Ok(FreePhaseEquilibrium { f_cars: vec![], f_trucks: vec![], valid: false, flux: f64::NAN });
    }

    let mut f_trucks = vec![0.0; n_t];
    f_trucks[n_t - 1] = rho_trucks;
    let mut f_cars = vec![0.0; n_c];
    let top_t = n_t - 1;
    let rho = rho_cars + rho_trucks;

    if rho_cars > 0.0 && r > 0.0 && n_c > n_t {
        // cars at the trucks' top speed
        let b = (2.0 * r - 1.0) * rho_cars - rho_trucks;
        f_cars[top_t] = largest_root(r, b, r * rho_cars * rho_trucks)?;
        // interior car classes above it
        let mut below = f_cars[top_t];
        for j in top_t + 1..n_c - 1 {
            let c_j = if j == top_t + 1 {
                f_cars[top_t] * rho
            } else {
                f_cars[j - 1] * (rho_cars - (below - f_cars[j - 1]))
            };
            let b = (1.0 - 3.0 * r) * below + (2.0 * r - 1.0) * rho_cars - r * rho_trucks;
            f_cars[j] = largest_root(r, b, (1.0 - r) * c_j)?;
            below += f_cars[j];
        }
        f_cars[n_c - 1] = rho_cars - below;
    } else {
        f_cars[n_c - 1] = rho_cars;
    }

    let flux = rho_trucks * trucks.v_max()
        + f_cars[top_t..].iter().zip(&cars.speeds()[top_t..]).map(|(f, v)| f * v).sum::<f64>();
    Ok(FreePhaseEquilibrium { f_cars, f_trucks, valid: true, flux })
}

/// Stable equilibrium of one population on two speed classes with
/// `alpha = gamma = 1`, where `R = rho / rho_max`.
pub fn single_pop_equilibrium_two_speeds(rho: f64, rho_max: f64) -> (f64, f64) {
    let r = rho / rho_max;
    if r <= 0.5 {
        (0.0, rho)
    } else {
        let f1 = (2.0 * r - 1.0) * rho / r;
        (f1, rho - f1)
    }
}
