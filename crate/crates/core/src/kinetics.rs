//! Collision operators and macroscopic moments of the space-homogeneous model.
//!
//! For population `p` and outcome class `j`
//!
//! ```text
//! df^p_j/dt = eta * [ sum_q sum_{h,k} T^{pq}_{j,hk} f^p_h f^q_k  -  f^p_j * L ]
//! ```
//!
//! where `L = sum_q sum_k f^q_k` is evaluated on the current state
//! (well-balanced form). The naive form freezes `L` to the initial density,
//! which is analytically equivalent but turns the conserved mass into an
//! unstable equilibrium of the discrete dynamics.

use crate::config::{occupancy, ModelParams, SpeedLattice};
use crate::error::ModelError;
use crate::tables::{GameTables, InteractionTable, TransitionProbabilities};

/// Per-population distributions `f^p_j` in vehicles/km.
#[derive(Clone, Debug, PartialEq)]
pub struct MixtureState {
    f: Vec<Vec<f64>>,
}

impl MixtureState {
    /// Validated state: every entry finite and non-negative.
    pub fn new(f: Vec<Vec<f64>>) -> Result<Self, ModelError> {
        for (p, dist) in f.iter().enumerate() {
            for (j, &v) in dist.iter().enumerate() {
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(ModelError::NegativeDistribution { population: p, class: j, value: v });
                }
            }
        }
        Ok(Self { f })
    }

    /// Wraps raw values without validation, e.g. intermediate integrator stages.
    pub fn from_raw(f: Vec<Vec<f64>>) -> Self {
        Self { f }
    }

    pub fn zeros(classes: &[usize]) -> Self {
        Self { f: classes.iter().map(|&n| vec![0.0; n]).collect() }
    }

    /// Mass `rho` spread evenly over the classes of each population.
    pub fn uniform(densities: &[f64], classes: &[usize]) -> Result<Self, ModelError> {
        Self::new(densities.iter().zip(classes).map(|(&rho, &n)| vec![rho / n as f64; n]).collect())
    }

    pub fn populations(&self) -> usize {
        self.f.len()
    }

    pub fn population(&self, p: usize) -> &[f64] {
        &self.f[p]
    }

    pub fn as_slices(&self) -> &[Vec<f64>] {
        &self.f
    }

    pub fn as_mut_slices(&mut self) -> &mut [Vec<f64>] {
        &mut self.f
    }

    pub fn into_inner(self) -> Vec<Vec<f64>> {
        self.f
    }

    pub fn classes(&self) -> Vec<usize> {
        self.f.iter().map(Vec::len).collect()
    }

    pub fn densities(&self) -> Vec<f64> {
        self.f.iter().map(|d| d.iter().sum()).collect()
    }

    pub fn total_density(&self) -> f64 {
        self.f.iter().flatten().sum()
    }

    pub fn is_finite(&self) -> bool {
        self.f.iter().flatten().all(|v| v.is_finite())
    }

    pub fn min_entry(&self) -> f64 {
        self.f.iter().flatten().copied().fold(f64::INFINITY, f64::min)
    }

    /// Largest absolute entrywise difference.
    pub fn max_abs_diff(&self, other: &MixtureState) -> f64 {
        self.f
            .iter()
            .flatten()
            .zip(other.f.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// How the loss term weighs the outgoing class.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LossForm {
    /// `f_j * sum_k f_k` on the current state.
    WellBalanced,
    /// `f_j * rho` with `rho` frozen at the nominal initial density.
    Naive { rho: f64 },
}

/// Right-hand side of the kinetic system for a fixed occupancy.
#[derive(Clone, Debug)]
pub struct KineticSystem {
    tables: GameTables,
    eta: f64,
    loss: LossForm,
}

impl KineticSystem {
    pub fn new(tables: GameTables, eta: f64, loss: LossForm) -> Self {
        Self { tables, eta, loss }
    }

    /// Builds the tables at the occupancy fixed by `densities`.
    pub fn for_densities(params: &ModelParams, densities: &[f64], loss: LossForm) -> Result<Self, ModelError> {
        if densities.len() != params.populations.len() {
            return Err(ModelError::DimensionMismatch {
                expected: params.populations.len(),
                got: densities.len(),
            });
        }
        if !crate::config::admissible(densities, &params.populations) {
            return Err(ModelError::Inadmissible(densities.to_vec()));
        }
        // rounding can push a jam-density mixture a hair above 1
        let s = occupancy(densities, &params.populations).min(1.0);
        let probs = TransitionProbabilities::at_occupancy(s, params.alpha, params.gamma)?;
        let lattices: Vec<&SpeedLattice> = params.populations.iter().map(|p| &p.lattice).collect();
        let tables = GameTables::build(&lattices, probs)?;
        Ok(Self::new(tables, params.eta, loss))
    }

    pub fn tables(&self) -> &GameTables {
        &self.tables
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn loss(&self) -> LossForm {
        self.loss
    }

    pub fn classes(&self) -> Vec<usize> {
        (0..self.tables.populations()).map(|p| self.tables.classes(p)).collect()
    }

    /// Checks that `f` has one vector per population with the table sizes.
    pub fn check_dimensions(&self, f: &[Vec<f64>]) -> Result<(), ModelError> {
        let npop = self.tables.populations();
        if f.len() != npop {
            return Err(ModelError::DimensionMismatch { expected: npop, got: f.len() });
        }
        for (p, dist) in f.iter().enumerate() {
            let n = self.tables.classes(p);
            if dist.len() != n {
                return Err(ModelError::DimensionMismatch { expected: n, got: dist.len() });
            }
        }
        Ok(())
    }

    /// Writes `df/dt` into `out`. Dimensions must already match.
    pub fn derivative_into(&self, f: &[Vec<f64>], out: &mut [Vec<f64>]) {
        let field_mass = match self.loss {
            LossForm::WellBalanced => f.iter().flatten().sum::<f64>(),
            LossForm::Naive { rho } => rho,
        };
        for (p, out_p) in out.iter_mut().enumerate() {
            out_p.iter_mut().for_each(|v| *v = 0.0);
            let f_p = &f[p];
            for (q, f_q) in f.iter().enumerate() {
                scatter_gain(self.tables.block(p, q), f_p, f_q, out_p);
            }
            for (o, &fj) in out_p.iter_mut().zip(f_p) {
                *o = self.eta * (*o - fj * field_mass);
            }
        }
    }

    pub fn derivative(&self, state: &MixtureState) -> Result<Vec<Vec<f64>>, ModelError> {
        let f = state.as_slices();
        self.check_dimensions(f)?;
        let mut out: Vec<Vec<f64>> = f.iter().map(|d| vec![0.0; d.len()]).collect();
        self.derivative_into(f, &mut out);
        Ok(out)
    }

    /// Max-norm of the right-hand side.
    pub fn residual(&self, state: &MixtureState) -> Result<f64, ModelError> {
        Ok(max_norm(&self.derivative(state)?))
    }
}

/// Gain contributions of one table, iterating encounters and scattering into
/// the at most three reachable outcome classes.
fn scatter_gain(table: &InteractionTable, candidates: &[f64], field: &[f64], out: &mut [f64]) {
    for (h, &fh) in candidates.iter().enumerate() {
        if fh == 0.0 {
            continue;
        }
        for (k, &fk) in field.iter().enumerate() {
            let weight = fh * fk;
            if weight == 0.0 {
                continue;
            }
            for (j, prob) in table.outcomes(h, k).iter() {
                out[j] += prob * weight;
            }
        }
    }
}

pub fn max_norm(v: &[Vec<f64>]) -> f64 {
    v.iter().flatten().fold(0.0, |m, x| m.max(x.abs()))
}

fn single_table_system(f: &[f64], table: &InteractionTable, eta: f64, loss: LossForm) -> Result<Vec<f64>, ModelError> {
    if table.candidate_classes() != table.field_classes() {
        return Err(ModelError::DimensionMismatch {
            expected: table.candidate_classes(),
            got: table.field_classes(),
        });
    }
    let system = KineticSystem::new(GameTables::from_blocks(vec![vec![table.clone()]]), eta, loss);
    let mut out = vec![vec![0.0; f.len()]];
    let f = [f.to_vec()];
    system.check_dimensions(&f)?;
    system.derivative_into(&f, &mut out);
    Ok(out.pop().expect("one population"))
}

/// Single-population right-hand side in well-balanced form.
pub fn rhs_single(f: &[f64], table: &InteractionTable, eta: f64) -> Result<Vec<f64>, ModelError> {
    single_table_system(f, table, eta, LossForm::WellBalanced)
}

/// Single-population right-hand side with the loss frozen at `rho`.
pub fn rhs_single_naive(f: &[f64], table: &InteractionTable, eta: f64, rho: f64) -> Result<Vec<f64>, ModelError> {
    single_table_system(f, table, eta, LossForm::Naive { rho })
}

/// Two-population (or any-population) right-hand side in well-balanced form.
pub fn rhs_two_population(state: &MixtureState, tables: &GameTables, eta: f64) -> Result<Vec<Vec<f64>>, ModelError> {
    KineticSystem::new(tables.clone(), eta, LossForm::WellBalanced).derivative(state)
}

/// Density, flux and mean speed of one population or of the whole mixture.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PopulationMoments {
    /// vehicles/km
    pub rho: f64,
    /// vehicles/h
    pub q: f64,
    /// km/h; `None` when the population is absent.
    pub u: Option<f64>,
}

impl PopulationMoments {
    fn new(rho: f64, q: f64) -> Self {
        Self { rho, q, u: (rho > 0.0).then(|| q / rho) }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Moments {
    pub populations: Vec<PopulationMoments>,
    pub total: PopulationMoments,
}

pub fn moments(state: &MixtureState, lattices: &[&SpeedLattice]) -> Result<Moments, ModelError> {
    if lattices.len() != state.populations() {
        return Err(ModelError::DimensionMismatch { expected: state.populations(), got: lattices.len() });
    }
    let mut populations = Vec::with_capacity(lattices.len());
    for (f, lattice) in state.as_slices().iter().zip(lattices) {
        if f.len() != lattice.len() {
            return Err(ModelError::DimensionMismatch { expected: lattice.len(), got: f.len() });
        }
        let rho: f64 = f.iter().sum();
        let q: f64 = f.iter().zip(lattice.speeds()).map(|(fj, v)| fj * v).sum();
        populations.push(PopulationMoments::new(rho, q));
    }
    let rho = populations.iter().map(|m| m.rho).sum();
    let q = populations.iter().map(|m| m.q).sum();
    Ok(Moments { populations, total: PopulationMoments::new(rho, q) })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(n: usize, s: f64) -> InteractionTable {
        InteractionTable::from_sizes(n, n, TransitionProbabilities::at_occupancy(s, 1.0, 1.0).unwrap()).unwrap()
    }

    #[test]
    fn free_equilibrium_of_two_classes_is_fixed() {
        for &rho in &[0.1, 0.3, 0.5] {
            let rhs = rhs_single(&[0.0, rho], &table(2, rho), 1.0).unwrap();
            assert_eq!(rhs, vec![0.0, 0.0]);
        }
    }

    #[test]
    fn vacuum_is_fixed() {
        assert_eq!(rhs_single(&[0.0; 3], &table(3, 0.0), 1.0).unwrap(), vec![0.0; 3]);
        assert_eq!(rhs_single_naive(&[0.0; 3], &table(3, 0.0), 1.0, 0.4).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn naive_matches_on_constraint_manifold() {
        let f = [0.1, 0.25, 0.05];
        let rho: f64 = f.iter().sum();
        let t = table(3, rho);
        let wb = rhs_single(&f, &t, 1.0).unwrap();
        let naive = rhs_single_naive(&f, &t, 1.0, rho).unwrap();
        for (a, b) in wb.iter().zip(&naive) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn naive_mass_decays_below_nominal() {
        let rho = 0.3;
        let eps = 1e-3;
        let f = [0.1 * (1.0 - eps), 0.2 * (1.0 - eps)];
        let y: f64 = f.iter().sum();
        let rhs = rhs_single_naive(&f, &table(2, rho), 1.0, rho).unwrap();
        let dy: f64 = rhs.iter().sum();
        assert!(dy < 0.0);
        assert!((dy - (y - rho) * y).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        assert!(matches!(
            rhs_single(&[0.1, 0.2], &table(3, 0.3), 1.0),
            Err(ModelError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn empty_population_reduces_to_single() {
        let cars = SpeedLattice::equispaced(3, 100.0).unwrap();
        let trucks = cars.prefix(2).unwrap();
        let probs = TransitionProbabilities::at_occupancy(0.35, 1.0, 1.0).unwrap();
        let tables = GameTables::build(&[&cars, &trucks], probs).unwrap();
        let fc = vec![10.0, 30.0, 47.5];
        let state = MixtureState::new(vec![fc.clone(), vec![0.0, 0.0]]).unwrap();
        let two = rhs_two_population(&state, &tables, 1.0).unwrap();
        let one = rhs_single(&fc, tables.block(0, 0), 1.0).unwrap();
        assert_eq!(two[0], one);
        assert_eq!(two[1], vec![0.0, 0.0]);
    }

    #[test]
    fn moments_examples() {
        let cars = SpeedLattice::equispaced(3, 100.0).unwrap();
        let trucks = cars.prefix(2).unwrap();

        let state = MixtureState::new(vec![vec![0.0, 0.0, 125.0], vec![0.0, 0.0]]).unwrap();
        let m = moments(&state, &[&cars, &trucks]).unwrap();
        assert_eq!(m.populations[0], PopulationMoments { rho: 125.0, q: 12500.0, u: Some(100.0) });
        assert_eq!(m.populations[1].u, None);
        assert_eq!(m.total.u, Some(100.0));

        let empty = MixtureState::zeros(&[3, 2]);
        let m = moments(&empty, &[&cars, &trucks]).unwrap();
        assert_eq!((m.total.rho, m.total.q, m.total.u), (0.0, 0.0, None));

        let rho_t = 16.5;
        let state = MixtureState::new(vec![vec![0.0; 3], vec![0.0, rho_t]]).unwrap();
        let m = moments(&state, &[&cars, &trucks]).unwrap();
        assert_eq!(m.populations[1].q, 50.0 * rho_t);
    }

    #[test]
    fn negative_states_rejected() {
        assert!(MixtureState::new(vec![vec![0.1, -1e-9]]).is_err());
        assert!(MixtureState::new(vec![vec![f64::NAN]]).is_err());
    }

    #[test]
    fn inadmissible_densities_rejected() {
        let params = ModelParams::reference_mixture();
        assert!(matches!(
            KineticSystem::for_densities(&params, &[250.0, 1.0], LossForm::WellBalanced),
            Err(ModelError::Inadmissible(_))
        ));
    }
}
