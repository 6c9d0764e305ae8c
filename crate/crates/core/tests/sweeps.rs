use kinmix::diagrams::*;
use kinmix::oracle::critical_space;
use kinmix::*;

fn reference() -> (ModelParams, NumericsParams) {
    (ModelParams::reference_mixture(), NumericsParams { s_steps: 100, ..NumericsParams::default() })
}

#[test]
fn points_satisfy_occupancy_and_flux_identities() {
    let (base, numerics) = reference();
    for mode in [SweepMode::Table2, SweepMode::Random, SweepMode::Macroscopic] {
        let spec = SweepSpec::from_numerics(mode, &numerics);
        let params = spec.effective_params(&base);
        for p in run_sweep(&spec, &base, &numerics, 1) {
            assert!((point_occupancy(&p, &params) - p.s).abs() <= 1e-12, "{mode:?} s={}", p.s);
            if p.q_total.is_finite() {
                assert!((p.q_c + p.q_t - p.q_total).abs() <= 1e-9 * p.q_total.abs().max(1.0));
            }
        }
    }
}

#[test]
fn worker_count_does_not_change_results() {
    let (base, numerics) = reference();
    let spec = SweepSpec::from_numerics(SweepMode::Random, &numerics);
    let one = run_sweep(&spec, &base, &numerics, 1);
    let four = run_sweep(&spec, &base, &numerics, 4);
    assert_eq!(one.len(), 303);
    for (a, b) in one.iter().zip(&four) {
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
    }
}

#[test]
fn slow_class_is_not_affected_in_free_flow_with_equal_lengths() {
    let (base, numerics) = reference();
    let spec = SweepSpec::from_numerics(SweepMode::AblationSpeeds, &numerics);
    let s_c = critical_space(base.gamma);
    let v_t = base.populations[1].lattice.v_max();
    let mut checked = 0;
    for p in run_sweep(&spec, &base, &numerics, 0).iter().filter(|p| p.converged && p.s <= s_c) {
        if let Some(u) = p.u_t {
            assert!((u - v_t).abs() <= 1e-6 * v_t, "s={} u_T={u}", p.s);
            checked += 1;
        }
    }
    assert!(checked > 100);
}

#[test]
fn equal_lattices_flow_freely_at_top_speed() {
    let (base, numerics) = reference();
    let spec = SweepSpec::from_numerics(SweepMode::AblationLengths, &numerics);
    let s_c = critical_space(base.gamma);
    let v_max = base.populations[0].lattice.v_max();
    for p in run_sweep(&spec, &base, &numerics, 0).iter().filter(|p| p.converged && p.s < s_c && p.rho_total > 0.0) {
        assert!((p.u_total.unwrap() - v_max).abs() <= 1e-6 * v_max, "s={}", p.s);
    }
}

#[test]
fn congested_flux_is_multivalued_in_density() {
    let (base, numerics) = reference();
    let s_c = critical_space(base.gamma);
    let spec = SweepSpec::from_numerics(SweepMode::Random, &numerics);
    let congested: Vec<DiagramPoint> =
        run_sweep(&spec, &base, &numerics, 0).into_iter().filter(|p| p.converged && p.s > s_c).collect();
    let width = base.populations[0].rho_max / DEFAULT_DENSITY_BINS as f64;
    let mut widest = 0.0f64;
    for a in &congested {
        for b in &congested {
            if (a.rho_total - b.rho_total).abs() <= width {
                widest = widest.max((a.q_total - b.q_total).abs());
            }
        }
    }
    assert!(widest > 1000.0, "{widest}");
}

/// Largest jump between consecutive slopes of the flux-occupancy curve.
fn max_slope_jump(points: &[&DiagramPoint]) -> f64 {
    let slopes: Vec<f64> = points.windows(2).map(|w| (w[1].q_total - w[0].q_total) / (w[1].s - w[0].s)).collect();
    slopes.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max)
}

#[test]
fn kinetic_flux_has_a_kink_where_the_macroscopic_one_is_smooth() {
    let (base, numerics) = reference();
    let sweep = |mode| {
        let spec = SweepSpec::from_numerics(mode, &numerics);
        run_sweep(&spec, &base, &numerics, 0)
    };
    let kinetic = sweep(SweepMode::Table2);
    let kinetic: Vec<&DiagramPoint> = kinetic.iter().filter(|p| p.combo_label == "even").collect();
    let peak = kinetic.iter().max_by(|a, b| a.q_total.total_cmp(&b.q_total)).unwrap();
    assert!((peak.s - 0.5).abs() <= 0.01);

    // macroscopic fluxes along the same even split
    let pops = &base.populations;
    let macro_points: Vec<DiagramPoint> = kinetic
        .iter()
        .map(|p| {
            let (_, _, q) = macroscopic_flux(p.rho_c, p.rho_t, (pops[0].length, pops[1].length), (100.0, 50.0));
            DiagramPoint { q_total: q, ..(*p).clone() }
        })
        .collect();
    let macro_refs: Vec<&DiagramPoint> = macro_points.iter().collect();
    let kinetic_jump = max_slope_jump(&kinetic);
    let macro_jump = max_slope_jump(&macro_refs);
    assert!(kinetic_jump > 100.0 * macro_jump, "{kinetic_jump} vs {macro_jump}");
}

#[test]
fn single_population_sweep_matches_two_speed_formula() {
    let params = ModelParams::single_population(2, 1.0, 1.0).unwrap();
    let numerics = NumericsParams { s_steps: 20, samples_per_s: 2, ..NumericsParams::default() };
    let spec = SweepSpec::from_numerics(SweepMode::SinglePop, &numerics);
    let points = run_sweep(&spec, &params, &numerics, 0);
    assert_eq!(points.len(), 42);
    for p in points.iter().filter(|p| p.converged) {
        let (_, fast) = kinmix::oracle::single_pop_equilibrium_two_speeds(p.rho_total, 1.0);
        assert!((p.q_total - fast).abs() <= 1e-8, "rho={} q={}", p.rho_total, p.q_total);
    }
}
