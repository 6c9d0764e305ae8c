//! Model and numerics configuration.
//!
//! Units are kilometres and hours throughout: vehicle lengths in km, speeds in
//! km/h, densities in vehicles/km. With lengths in km the jam density of a
//! population is exactly `1 / length`.

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

/// Relative tolerance accepted between a stored `rho_max` and `1 / length`.
///
/// Hand-written configs usually round the jam density (83.3 for 12 m trucks).
pub const RHO_MAX_REL_TOL: f64 = 1e-3;

/// Ordered speed classes of one population, in km/h.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SpeedLattice {
    speeds: Vec<f64>,
}

impl SpeedLattice {
    pub fn new(speeds: Vec<f64>) -> Result<Self, ConfigError> {
        if speeds.len() < 2 {
            return Err(ConfigError::invalid(
                "speeds",
                format!("a lattice needs at least 2 speed classes, got {}", speeds.len()),
            ));
        }
        if speeds[0] != 0.0 {
            return Err(ConfigError::invalid("speeds", "the first speed class must be 0"));
        }
        if speeds.iter().any(|v| !v.is_finite()) {
            return Err(ConfigError::invalid("speeds", "speeds must be finite"));
        }
        if speeds.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ConfigError::invalid("speeds", "speeds must be strictly increasing"));
        }
        Ok(Self { speeds })
    }

    /// `n` equispaced classes `v_j = j / (n - 1) * v_max`, `j = 0..n`.
    pub fn equispaced(n: usize, v_max: f64) -> Result<Self, ConfigError> {
        if n < 2 {
            return Err(ConfigError::invalid("classes", format!("need at least 2 classes, got {n}")));
        }
        if !(v_max > 0.0 && v_max.is_finite()) {
            return Err(ConfigError::invalid("v_max", format!("must be positive, got {v_max}")));
        }
        let speeds = (0..n).map(|j| j as f64 / (n - 1) as f64 * v_max).collect();
        Self::new(speeds)
    }

    /// The lattice made of the first `n` classes of `self`.
    pub fn prefix(&self, n: usize) -> Result<Self, ConfigError> {
        if n > self.len() {
            return Err(ConfigError::invalid(
                "classes",
                format!("prefix of {n} classes requested from a lattice of {}", self.len()),
            ));
        }
        Self::new(self.speeds[..n].to_vec())
    }

    pub fn speeds(&self) -> &[f64] {
        &self.speeds
    }

    pub fn len(&self) -> usize {
        self.speeds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.speeds.is_empty()
    }

    pub fn v_max(&self) -> f64 {
        self.speeds[self.speeds.len() - 1]
    }

    pub fn is_prefix_of(&self, other: &SpeedLattice) -> bool {
        self.len() <= other.len() && other.speeds[..self.len()] == self.speeds[..]
    }

    /// Whether one of the two lattices is a prefix of the other.
    pub fn nested_with(&self, other: &SpeedLattice) -> bool {
        self.is_prefix_of(other) || other.is_prefix_of(self)
    }

    pub fn is_equispaced(&self) -> bool {
        let n = self.len();
        let v_max = self.v_max();
        self.speeds
            .iter()
            .enumerate()
            .all(|(j, &v)| (v - j as f64 / (n - 1) as f64 * v_max).abs() <= 1e-12 * v_max)
    }
}

impl TryFrom<Vec<f64>> for SpeedLattice {
    type Error = ConfigError;

    fn try_from(speeds: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(speeds)
    }
}

impl From<SpeedLattice> for Vec<f64> {
    fn from(lattice: SpeedLattice) -> Self {
        lattice.speeds
    }
}

/// Physical description of one vehicle class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationSpec {
    pub name: String,
    /// Vehicle length in km.
    pub length: f64,
    pub lattice: SpeedLattice,
    /// Jam density, always `1 / length`.
    pub rho_max: f64,
}

impl PopulationSpec {
    pub fn new(name: impl Into<String>, length: f64, lattice: SpeedLattice) -> Result<Self, ConfigError> {
        if !(length > 0.0 && length.is_finite()) {
            return Err(ConfigError::invalid("length", format!("must be positive, got {length}")));
        }
        Ok(Self { name: name.into(), length, lattice, rho_max: 1.0 / length })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub alpha: f64,
    pub gamma: f64,
    pub eta: f64,
    pub populations: Vec<PopulationSpec>,
}

impl ModelParams {
    /// Reference mixture: 4 m cars on {0, 50, 100} km/h, 12 m trucks on {0, 50} km/h,
    /// `alpha = gamma = eta = 1`.
    pub fn reference_mixture() -> Self {
        Self::two_populations(3, 2, 100.0).expect("reference lattices are valid")
    }

    /// Reference lengths with `n_cars` equispaced car classes up to `v_max` and
    /// the first `n_trucks` of them for trucks.
    pub fn two_populations(n_cars: usize, n_trucks: usize, v_max: f64) -> Result<Self, ConfigError> {
        let cars = SpeedLattice::equispaced(n_cars, v_max)?;
        let trucks = cars.prefix(n_trucks)?;
        let params = Self {
            alpha: 1.0,
            gamma: 1.0,
            eta: 1.0,
            populations: vec![
                PopulationSpec::new("cars", 0.004, cars)?,
                PopulationSpec::new("trucks", 0.012, trucks)?,
            ],
        };
        params.validate()?;
        Ok(params)
    }

    /// One population with `n` equispaced classes and jam density `rho_max`.
    pub fn single_population(n: usize, v_max: f64, rho_max: f64) -> Result<Self, ConfigError> {
        if !(rho_max > 0.0 && rho_max.is_finite()) {
            return Err(ConfigError::invalid("rho_max", format!("must be positive, got {rho_max}")));
        }
        let params = Self {
            alpha: 1.0,
            gamma: 1.0,
            eta: 1.0,
            populations: vec![PopulationSpec::new(
                "vehicles",
                1.0 / rho_max,
                SpeedLattice::equispaced(n, v_max)?,
            )?],
        };
        params.validate()?;
        Ok(params)
    }

    /// Checks every hard invariant and returns the soft ones that failed as warnings.
    pub fn validate(&self) -> Result<Vec<String>, ConfigError> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(ConfigError::invalid("alpha", format!("must lie in [0, 1], got {}", self.alpha)));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(ConfigError::invalid("gamma", format!("must be positive, got {}", self.gamma)));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(ConfigError::invalid("eta", format!("must be positive, got {}", self.eta)));
        }
        if self.populations.is_empty() || self.populations.len() > 2 {
            return Err(ConfigError::invalid(
                "populations",
                format!("expected one or two populations, got {}", self.populations.len()),
            ));
        }
        for pop in &self.populations {
            if !(pop.length > 0.0 && pop.length.is_finite()) {
                return Err(ConfigError::invalid(
                    "length",
                    format!("population '{}' must have a positive length", pop.name),
                ));
            }
            let expected = 1.0 / pop.length;
            if (pop.rho_max - expected).abs() > RHO_MAX_REL_TOL * expected {
                return Err(ConfigError::invalid(
                    "rho_max",
                    format!(
                        "population '{}' stores rho_max = {} but 1/length = {expected}",
                        pop.name, pop.rho_max
                    ),
                ));
            }
        }

        let mut warnings = Vec::new();
        let first = &self.populations[0];
        if !first.lattice.is_equispaced() {
            warnings.push(format!("lattice of '{}' is not equispaced", first.name));
        }
        if let [cars, trucks] = &self.populations[..] {
            if !trucks.lattice.is_prefix_of(&cars.lattice) {
                return Err(ConfigError::invalid(
                    "speeds",
                    format!(
                        "lattice of '{}' is not a prefix of the lattice of '{}'",
                        trucks.name, cars.name
                    ),
                ));
            }
            if cars.length > trucks.length {
                warnings.push(format!(
                    "'{}' are longer than '{}' ({} > {} km)",
                    cars.name, trucks.name, cars.length, trucks.length
                ));
            }
        }
        Ok(warnings)
    }

    pub fn lengths(&self) -> Vec<f64> {
        self.populations.iter().map(|p| p.length).collect()
    }
}

impl Default for ModelParams {
    fn default() -> Self {
        Self::reference_mixture()
    }
}

/// Numerical knobs for relaxation and sweeps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NumericsParams {
    /// Fixed time step; `None` selects `0.5 / (eta * rho_total)` per run.
    pub dt: Option<f64>,
    /// Equilibrium tolerance on the max-norm of the right-hand side.
    pub tol: f64,
    pub t_max: f64,
    pub seed: u64,
    /// Number of intervals of the uniform occupancy grid on [0, 1].
    pub s_steps: usize,
    pub samples_per_s: usize,
}

impl NumericsParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if let Some(dt) = self.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(ConfigError::invalid("dt", format!("must be positive, got {dt}")));
            }
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(ConfigError::invalid("tol", format!("must be positive, got {}", self.tol)));
        }
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return Err(ConfigError::invalid("t_max", format!("must be positive, got {}", self.t_max)));
        }
        if self.s_steps < 2 {
            return Err(ConfigError::invalid("s_steps", format!("must be at least 2, got {}", self.s_steps)));
        }
        if self.samples_per_s < 1 {
            return Err(ConfigError::invalid("samples_per_s", "must be at least 1"));
        }
        Ok(())
    }
}

impl Default for NumericsParams {
    fn default() -> Self {
        Self { dt: None, tol: 1e-10, t_max: 1000.0, seed: 0, s_steps: 200, samples_per_s: 3 }
    }
}

/// A validated configuration document.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Config {
    pub model: ModelParams,
    pub numerics: NumericsParams,
}

// On-disk layout. Lattices may be given explicitly or as a class count, in which
// case later populations take a prefix of the first population's lattice.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigDoc {
    model: ModelDoc,
    #[serde(default)]
    numerics: NumericsDoc,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    #[serde(default = "one")]
    alpha: f64,
    #[serde(default = "one")]
    gamma: f64,
    #[serde(default = "one")]
    eta: f64,
    populations: Vec<PopulationDoc>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PopulationDoc {
    name: String,
    length: f64,
    speeds: Option<Vec<f64>>,
    classes: Option<usize>,
    v_max: Option<f64>,
    rho_max: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, default)]
struct NumericsDoc {
    dt: Option<f64>,
    tol: f64,
    t_max: f64,
    seed: u64,
    s_steps: usize,
    samples_per_s: usize,
}

impl Default for NumericsDoc {
    fn default() -> Self {
        let d = NumericsParams::default();
        Self {
            dt: d.dt,
            tol: d.tol,
            t_max: d.t_max,
            seed: d.seed,
            s_steps: d.s_steps,
            samples_per_s: d.samples_per_s,
        }
    }
}

fn one() -> f64 {
    1.0
}

/// Parses and validates a JSON configuration document.
///
/// Soft invariant violations (car/truck ordering, non-equispaced lattices) are
/// logged and returned alongside the config.
pub fn load_config(text: &str) -> Result<(Config, Vec<String>), ConfigError> {
    let doc: ConfigDoc = serde_json::from_str(text)?;

    let mut populations: Vec<PopulationSpec> = Vec::with_capacity(doc.model.populations.len());
    for pop in doc.model.populations {
        let lattice = match (pop.speeds, pop.classes, pop.v_max) {
            (Some(speeds), None, None) => SpeedLattice::new(speeds)?,
            (None, Some(n), Some(v_max)) => SpeedLattice::equispaced(n, v_max)?,
            (None, Some(n), None) => match populations.first() {
                Some(first) => first.lattice.prefix(n)?,
                None => {
                    return Err(ConfigError::invalid(
                        "v_max",
                        format!("population '{}' needs v_max or explicit speeds", pop.name),
                    ))
                }
            },
            _ => {
                return Err(ConfigError::invalid(
                    "speeds",
                    format!(
                        "population '{}' must give either `speeds` or `classes` (with optional `v_max`)",
                        pop.name
                    ),
                ))
            }
        };
        let mut spec = PopulationSpec::new(pop.name, pop.length, lattice)?;
        if let Some(stored) = pop.rho_max {
            // checked against 1/length in validate(), then replaced by the exact value
            spec.rho_max = stored;
        }
        populations.push(spec);
    }

    let model = ModelParams {
        alpha: doc.model.alpha,
        gamma: doc.model.gamma,
        eta: doc.model.eta,
        populations,
    };
    let warnings = model.validate()?;
    let mut model = model;
    for pop in &mut model.populations {
        pop.rho_max = 1.0 / pop.length;
    }

    let n = doc.numerics;
    let numerics = NumericsParams {
        dt: n.dt,
        tol: n.tol,
        t_max: n.t_max,
        seed: n.seed,
        s_steps: n.s_steps,
        samples_per_s: n.samples_per_s,
    };
    numerics.validate()?;

    for w in &warnings {
        log::warn!("{w}");
    }
    Ok((Config { model, numerics }, warnings))
}

/// Fraction of road occupied: `sum_p rho_p * l_p`.
pub fn occupancy(densities: &[f64], specs: &[PopulationSpec]) -> f64 {
    densities.iter().zip(specs).map(|(rho, spec)| rho * spec.length).sum()
}

/// Non-negative densities whose occupancy lies in [0, 1].
pub fn admissible(densities: &[f64], specs: &[PopulationSpec]) -> bool {
    if densities.len() != specs.len() || densities.iter().any(|&rho| !(rho.is_finite() && rho >= 0.0)) {
        return false;
    }
    let s = occupancy(densities, specs);
    (0.0..=1.0).contains(&s)
}
