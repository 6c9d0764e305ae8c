//! Fundamental-diagram datasets: occupancy sweeps over deterministic or random
//! mixtures, their scatter statistics, and the macroscopic comparison model.

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{occupancy, ModelParams, NumericsParams, PopulationSpec};
use crate::integrator::relax_to_equilibrium;
use crate::kinetics::{moments, MixtureState};
use crate::oracle::critical_space;

/// Number of intervals of the default occupancy grid.
pub const DEFAULT_S_STEPS: usize = 200;
/// Number of density bins for scatter statistics.
pub const DEFAULT_DENSITY_BINS: usize = 50;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagramPoint {
    pub s: f64,
    pub rho_c: f64,
    pub rho_t: f64,
    pub rho_total: f64,
    pub q_c: f64,
    pub q_t: f64,
    pub q_total: f64,
    pub u_c: Option<f64>,
    pub u_t: Option<f64>,
    pub u_total: Option<f64>,
    pub converged: bool,
    pub residual: f64,
    pub t_final: f64,
    pub sample_id: usize,
    pub combo_label: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepMode {
    /// The three fixed occupancy splits: cars-heavy, even, trucks-heavy.
    Table2,
    /// Uniformly random split of each occupancy between the two classes.
    Random,
    /// First population alone.
    SinglePop,
    /// Random mixtures of two classes with equal lengths (the cars' length).
    AblationSpeeds,
    /// Random mixtures of two classes with equal lattices (the cars' lattice).
    AblationLengths,
    /// Random mixtures fed to the two-class Greenshields-type macroscopic flux.
    Macroscopic,
}

impl SweepMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepMode::Table2 => "table2",
            SweepMode::Random => "random",
            SweepMode::SinglePop => "single-pop",
            SweepMode::AblationSpeeds => "ablation-speeds",
            SweepMode::AblationLengths => "ablation-lengths",
            SweepMode::Macroscopic => "macroscopic",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub mode: SweepMode,
    pub s_grid: Vec<f64>,
    pub samples_per_s: usize,
    pub seed: u64,
    /// Overrides of the model's probability law.
    pub gamma: Option<f64>,
    pub alpha: Option<f64>,
}

impl SweepSpec {
    /// `steps + 1` uniformly spaced occupancies on [0, 1].
    pub fn uniform(mode: SweepMode, steps: usize, samples_per_s: usize, seed: u64) -> Self {
        Self { mode, s_grid: uniform_grid(steps), samples_per_s, seed, gamma: None, alpha: None }
    }

    pub fn from_numerics(mode: SweepMode, numerics: &NumericsParams) -> Self {
        Self::uniform(mode, numerics.s_steps, numerics.samples_per_s, numerics.seed)
    }

    /// Model actually swept: overrides applied, ablations on a copy.
    pub fn effective_params(&self, base: &ModelParams) -> ModelParams {
        let mut params = base.clone();
        if let Some(g) = self.gamma {
            params.gamma = g;
        }
        if let Some(a) = self.alpha {
            params.alpha = a;
        }
        match self.mode {
            SweepMode::SinglePop => params.populations.truncate(1),
            SweepMode::AblationSpeeds if params.populations.len() == 2 => {
                let length = params.populations[0].length;
                params.populations[1].length = length;
                params.populations[1].rho_max = 1.0 / length;
            }
            SweepMode::AblationLengths if params.populations.len() == 2 => {
                params.populations[1].lattice = params.populations[0].lattice.clone();
            }
            _ => {}
        }
        params
    }
}

pub fn uniform_grid(steps: usize) -> Vec<f64> {
    (0..=steps).map(|i| i as f64 / steps as f64).collect()
}

/// Labeled `(rho_c, rho_t)` mixture.
#[derive(Clone, Debug, PartialEq)]
pub struct Mixture {
    pub label: &'static str,
    pub rho_c: f64,
    pub rho_t: f64,
}

/// The three fixed splits of occupancy `s`: cars-heavy (2:1), even, trucks-heavy (1:2).
pub fn table2_mixtures(s: f64, length_c: f64, length_t: f64) -> [Mixture; 3] {
    [
        Mixture { label: "cars-heavy", rho_c: 2.0 * s / (3.0 * length_c), rho_t: s / (3.0 * length_t) },
        Mixture { label: "even", rho_c: s / (2.0 * length_c), rho_t: s / (2.0 * length_t) },
        Mixture { label: "trucks-heavy", rho_c: s / (3.0 * length_c), rho_t: 2.0 * s / (3.0 * length_t) },
    ]
}

/// Occupancy split by `theta`: cars take `theta * s`, trucks the rest.
pub fn split_mixture(s: f64, theta: f64, length_c: f64, length_t: f64) -> (f64, f64) {
    (theta * s / length_c, (1.0 - theta) * s / length_t)
}

/// `count` random mixtures of occupancy `s`, reproducible from `(seed, s)`.
///
/// Each occupancy value owns its own ChaCha stream, so the draws do not depend
/// on evaluation order.
pub fn random_mixtures(s: f64, count: usize, seed: u64, length_c: f64, length_t: f64) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(s.to_bits());
    (0..count)
        .map(|_| {
            let theta: f64 = rng.random();
            split_mixture(s, theta, length_c, length_t)
        })
        .collect()
}

/// Macroscopic fluxes `F_p = rho_p (1 - s) V_p` and their sum.
pub fn macroscopic_flux(rho_1: f64, rho_2: f64, lengths: (f64, f64), v_max: (f64, f64)) -> (f64, f64, f64) {
    let s = rho_1 * lengths.0 + rho_2 * lengths.1;
    let f1 = rho_1 * (1.0 - s) * v_max.0;
    let f2 = rho_2 * (1.0 - s) * v_max.1;
    (f1, f2, f1 + f2)
}

/// Salt separating the initial-state streams from the mixture draws.
const INIT_SALT: u64 = 0x5eed_1417_a11c_e5e5;

struct Task {
    s: f64,
    sample_id: usize,
    label: &'static str,
    densities: Vec<f64>,
    initial: Vec<Vec<f64>>,
}

/// Random distribution with the given masses, one draw per class.
fn random_state(rng: &mut ChaCha8Rng, densities: &[f64], classes: &[usize]) -> Vec<Vec<f64>> {
    densities
        .iter()
        .zip(classes)
        .map(|(&rho, &n)| {
            let w: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 1e-3).collect();
            let total: f64 = w.iter().sum();
            w.into_iter().map(|x| rho * x / total).collect()
        })
        .collect()
}

fn build_tasks(spec: &SweepSpec, params: &ModelParams) -> Vec<Task> {
    let pops = &params.populations;
    let classes: Vec<usize> = pops.iter().map(|p| p.lattice.len()).collect();
    let mut tasks = Vec::new();
    for &s in &spec.s_grid {
        let mixtures: Vec<(&'static str, Vec<f64>)> = match spec.mode {
            SweepMode::SinglePop => (0..spec.samples_per_s).map(|_| ("single", vec![s / pops[0].length])).collect(),
            SweepMode::Table2 => table2_mixtures(s, pops[0].length, pops[1].length)
                .into_iter()
                .map(|m| (m.label, vec![m.rho_c, m.rho_t]))
                .collect(),
            _ => random_mixtures(s, spec.samples_per_s, spec.seed, pops[0].length, pops[1].length)
                .into_iter()
                .map(|(rho_c, rho_t)| ("random", vec![rho_c, rho_t]))
                .collect(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ INIT_SALT);
        rng.set_stream(s.to_bits());
        for (sample_id, (label, densities)) in mixtures.into_iter().enumerate() {
            let initial = random_state(&mut rng, &densities, &classes);
            tasks.push(Task { s, sample_id, label, densities, initial });
        }
    }
    tasks
}

fn macroscopic_point(task: &Task, pops: &[PopulationSpec]) -> DiagramPoint {
    let (rho_c, rho_t) = (task.densities[0], task.densities[1]);
    let (v_c, v_t) = (pops[0].lattice.v_max(), pops[1].lattice.v_max());
    let (q_c, q_t, q_total) = macroscopic_flux(rho_c, rho_t, (pops[0].length, pops[1].length), (v_c, v_t));
    let speed = |rho: f64, q: f64| (rho > 0.0).then(|| q / rho);
    DiagramPoint {
        s: task.s,
        rho_c,
        rho_t,
        rho_total: rho_c + rho_t,
        q_c,
        q_t,
        q_total,
        u_c: speed(rho_c, q_c),
        u_t: speed(rho_t, q_t),
        u_total: speed(rho_c + rho_t, q_total),
        converged: true,
        residual: 0.0,
        t_final: 0.0,
        sample_id: task.sample_id,
        combo_label: task.label.to_string(),
    }
}

fn kinetic_point(task: &Task, params: &ModelParams, numerics: &NumericsParams) -> DiagramPoint {
    let lattices: Vec<_> = params.populations.iter().map(|p| &p.lattice).collect();
    let rho_c = task.densities[0];
    let rho_t = task.densities.get(1).copied().unwrap_or(0.0);
    let mut point = DiagramPoint {
        s: task.s,
        rho_c,
        rho_t,
        rho_total: rho_c + rho_t,
        q_c: f64::NAN,
        q_t: f64::NAN,
        q_total: f64::NAN,
        u_c: None,
        u_t: None,
        u_total: None,
        converged: false,
        residual: f64::NAN,
        t_final: f64::NAN,
        sample_id: task.sample_id,
        combo_label: task.label.to_string(),
    };
    let outcome = MixtureState::new(task.initial.clone())
        .and_then(|init| relax_to_equilibrium(params, &init, numerics))
        .and_then(|res| moments(&res.final_state, &lattices).map(|m| (res, m)));
    match outcome {
        Ok((res, m)) => {
            point.q_c = m.populations[0].q;
            point.u_c = m.populations[0].u;
            if let Some(t) = m.populations.get(1) {
                point.q_t = t.q;
                point.u_t = t.u;
            } else {
                point.q_t = 0.0;
            }
            point.q_total = m.total.q;
            point.u_total = m.total.u;
            point.converged = res.converged;
            point.residual = res.residual;
            point.t_final = res.t_final;
        }
        Err(e) => log::warn!("s = {}, sample {}: {e}", task.s, task.sample_id),
    }
    point
}

/// Relaxes every mixture of the sweep and returns one point per mixture,
/// sorted by `(s, sample_id)`. `jobs` caps the worker threads (0 = all cores).
pub fn run_sweep(spec: &SweepSpec, base: &ModelParams, numerics: &NumericsParams, jobs: usize) -> Vec<DiagramPoint> {
    let params = spec.effective_params(base);
    if params.populations.len() < 2 && spec.mode != SweepMode::SinglePop {
        log::warn!("mode {} needs two populations", spec.mode.as_str());
        return Vec::new();
    }
    let tasks = build_tasks(spec, &params);
    let eval = |task: &Task| match spec.mode {
        SweepMode::Macroscopic => macroscopic_point(task, &params.populations),
        _ => kinetic_point(task, &params, numerics),
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build();
    let mut points: Vec<DiagramPoint> = match pool {
        Ok(pool) => pool.install(|| tasks.par_iter().map(eval).collect()),
        Err(e) => {
            log::warn!("falling back to a sequential sweep: {e}");
            tasks.iter().map(eval).collect()
        }
    };
    points.sort_by(|a, b| a.s.partial_cmp(&b.s).unwrap_or(Ordering::Equal).then(a.sample_id.cmp(&b.sample_id)));
    points
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Free,
    Congested,
}

/// Flux statistics of the points of one phase in one total-density bin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinStats {
    pub lo: f64,
    pub hi: f64,
    pub phase: Phase,
    pub count: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub std_dev: f64,
    /// Largest flux range among points of the bin sharing the same total
    /// density, i.e. the spread not explained by the density trend.
    pub fixed_density_range: f64,
}

impl BinStats {
    pub fn range(&self) -> f64 {
        self.max - self.min
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScatterReport {
    pub bin_width: f64,
    pub s_c: f64,
    pub bins: Vec<BinStats>,
    /// Bins left out for holding fewer than two points: `(lo, phase, count)`.
    pub skipped: Vec<(f64, Phase, usize)>,
}

impl ScatterReport {
    pub fn max_range(&self, phase: Phase) -> Option<f64> {
        self.bins.iter().filter(|b| b.phase == phase).map(BinStats::range).reduce(f64::max)
    }

    pub fn min_range(&self, phase: Phase) -> Option<f64> {
        self.bins.iter().filter(|b| b.phase == phase).map(BinStats::range).reduce(f64::min)
    }

    /// Largest fixed-density range over all bins.
    pub fn max_fixed_density_range(&self) -> Option<f64> {
        self.bins.iter().map(|b| b.fixed_density_range).reduce(f64::max)
    }
}

/// Per-bin flux statistics over `bins` uniform total-density bins on
/// `[0, rho_max]`, split by phase at the critical occupancy `s_c`. Only
/// converged points take part.
pub fn scatter_statistics(points: &[DiagramPoint], bins: usize, rho_max: f64, s_c: f64) -> ScatterReport {
    let width = rho_max / bins as f64;
    let mut groups: Vec<[Vec<(f64, f64)>; 2]> = vec![[Vec::new(), Vec::new()]; bins];
    for p in points.iter().filter(|p| p.converged && p.q_total.is_finite()) {
        let idx = ((p.rho_total / width) as usize).min(bins - 1);
        let phase = usize::from(p.s > s_c);
        groups[idx][phase].push((p.rho_total, p.q_total));
    }
    let mut report = ScatterReport { bin_width: width, s_c, bins: Vec::new(), skipped: Vec::new() };
    for (i, group) in groups.iter().enumerate() {
        for (phase, pairs) in [Phase::Free, Phase::Congested].into_iter().zip(group) {
            let lo = i as f64 * width;
            if pairs.len() < 2 {
                if !pairs.is_empty() {
                    report.skipped.push((lo, phase, pairs.len()));
                }
                continue;
            }
            let values: Vec<f64> = pairs.iter().map(|&(_, q)| q).collect();
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            report.bins.push(BinStats {
                lo,
                hi: lo + width,
                phase,
                count: values.len(),
                mean,
                min: values.iter().copied().fold(f64::INFINITY, f64::min),
                max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                std_dev: var.sqrt(),
                fixed_density_range: fixed_density_range(pairs),
            });
        }
    }
    report
}

/// Largest `q` range over groups of `(rho, q)` pairs with equal `rho`.
fn fixed_density_range(pairs: &[(f64, f64)]) -> f64 {
    let mut sorted = pairs.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    sorted
        .chunk_by(|a, b| a.0 == b.0)
        .map(|g| g[g.len() - 1].1 - g[0].1)
        .fold(0.0, f64::max)
}

/// Scatter statistics with the default binning over the cars' jam density
/// and the critical occupancy of `params`.
pub fn default_scatter(points: &[DiagramPoint], params: &ModelParams) -> ScatterReport {
    scatter_statistics(
        points,
        DEFAULT_DENSITY_BINS,
        params.populations[0].rho_max,
        critical_space(params.gamma),
    )
}

/// Occupancy of a point recomputed from its densities.
pub fn point_occupancy(point: &DiagramPoint, params: &ModelParams) -> f64 {
    let densities: Vec<f64> = [point.rho_c, point.rho_t].into_iter().take(params.populations.len()).collect();
    occupancy(&densities, &params.populations)
}
