use kinmix::integrator::relax_with;
use kinmix::oracle::{critical_space, free_phase_equilibrium};
use kinmix::*;

#[test]
fn relaxation_matches_free_phase_oracle_on_finer_lattices() {
    for (n_c, n_t) in [(4, 2), (5, 2), (4, 3), (6, 3)] {
        let params = ModelParams::two_populations(n_c, n_t, 100.0).unwrap();
        let (cars, trucks) = (&params.populations[0], &params.populations[1]);
        for (x_c, x_t) in [(0.1, 0.1), (0.3, 0.15), (0.05, 0.4), (0.45, 0.0)] {
            let densities = [x_c / cars.length, x_t / trucks.length];
            let init = MixtureState::uniform(&densities, &[n_c, n_t]).unwrap();
            let res = relax_to_equilibrium(&params, &init, &NumericsParams::default()).unwrap();
            assert!(res.converged);
            let eq = free_phase_equilibrium(densities[0], densities[1], &cars.lattice, &trucks.lattice, x_c + x_t).unwrap();
            for (a, b) in res.final_state.population(0).iter().zip(&eq.f_cars) {
                assert!((a - b).abs() <= 1e-6, "{n_c}/{n_t} ({x_c}, {x_t}): {a} vs {b}");
            }
            for (a, b) in res.final_state.population(1).iter().zip(&eq.f_trucks) {
                assert!((a - b).abs() <= 1e-6);
            }
        }
    }
}

#[test]
fn residual_tail_is_monotone() {
    let params = ModelParams::reference_mixture();
    let init = MixtureState::uniform(&[40.0, 20.0], &[3, 2]).unwrap();
    let system = KineticSystem::for_densities(&params, &[40.0, 20.0], LossForm::WellBalanced).unwrap();
    let mut residuals = Vec::new();
    let res = relax_with(&system, &init, &NumericsParams::default(), |_, _, r| residuals.push(r)).unwrap();
    assert!(res.converged);
    let tail = &residuals[residuals.len() / 2..];
    assert!(tail.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn trucks_travel_at_top_speed_below_the_critical_space() {
    let params = ModelParams::reference_mixture();
    let s_c = critical_space(params.gamma);
    for theta in [0.1, 0.5, 0.9] {
        let s = 0.9 * s_c;
        let densities = [theta * s / 0.004, (1.0 - theta) * s / 0.012];
        let init = MixtureState::uniform(&densities, &[3, 2]).unwrap();
        let res = relax_to_equilibrium(&params, &init, &NumericsParams::default()).unwrap();
        assert!(res.final_state.population(1)[0].abs() <= 1e-9);
        assert!(res.final_state.population(0)[0].abs() <= 1e-9);
    }
}

#[test]
fn config_document_drives_a_relaxation() {
    let text = r#"{
        "model": {
            "alpha": 1.0, "gamma": 1.0, "eta": 1.0,
            "populations": [
                {"name": "cars", "length": 0.004, "speeds": [0, 50, 100]},
                {"name": "trucks", "length": 0.012, "classes": 2}
            ]
        },
        "numerics": {"tol": 1e-10, "t_max": 1000}
    }"#;
    let (config, warnings) = load_config(text).unwrap();
    assert!(warnings.is_empty());
    let init = MixtureState::uniform(&[50.0, 16.667], &[3, 2]).unwrap();
    let res = relax_to_equilibrium(&config.model, &init, &config.numerics).unwrap();
    assert!(res.converged);
    let f = res.final_state;
    assert!((f.population(0)[1] - 10.76).abs() < 0.01);
    assert!((f.population(0)[2] - 39.24).abs() < 0.01);
    assert!((f.population(1)[1] - 16.667).abs() < 1e-9);
}
