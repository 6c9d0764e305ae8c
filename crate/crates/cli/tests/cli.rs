use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn kinmix(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kinmix")).args(args).current_dir(dir).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn oracle_value(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key},")))
        .unwrap_or_else(|| panic!("{key} missing in {text}"))
        .parse()
        .unwrap()
}

#[test]
fn naive_relaxation_loses_its_mass() {
    let dir = tempfile::tempdir().unwrap();
    let o = kinmix(&["relax", "--rho-c", "0.3", "--single", "--n", "2", "--naive", "--perturb", "1e-6", "--out", "t.csv"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    let text = fs::read_to_string(dir.path().join("t.csv")).unwrap();
    let last: Vec<f64> = text.lines().last().unwrap().split(',').map(|c| c.parse().unwrap()).collect();
    // t, residual, f_1, f_2, rho, q, q_total
    assert!(last[4] < 0.003, "{last:?}");
    assert!(dir.path().join("t.csv.manifest.json").exists());
}

#[test]
fn mixture_relaxation_puts_trucks_on_top() {
    let dir = tempfile::tempdir().unwrap();
    let o = kinmix(&["relax", "--rho-c", "50", "--rho-t", "16.667", "--every", "50", "--out", "t.csv"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(dir.path().join("t.csv")).unwrap();
    let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
    assert_eq!(&header[2..7], ["f_cars_1", "f_cars_2", "f_cars_3", "f_trucks_1", "f_trucks_2"]);
    let last: Vec<f64> = text.lines().last().unwrap().split(',').map(|c| c.parse().unwrap()).collect();
    assert!(last[5].abs() < 1e-9 && (last[6] - 16.667).abs() < 1e-9);
    assert!((last[3] - 10.76).abs() < 0.01);
}

#[test]
fn invalid_input_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(kinmix(&["relax", "--rho-c", "-5"], dir.path()).status.code(), Some(2));
    assert_eq!(kinmix(&["relax", "--rho-c", "200", "--rho-t", "50"], dir.path()).status.code(), Some(2));
    assert_eq!(kinmix(&["sweep", "--mode", "sideways"], dir.path()).status.code(), Some(2));
    assert_eq!(kinmix(&["oracle", "--alpha", "1.5"], dir.path()).status.code(), Some(2));
    fs::write(dir.path().join("bad.json"), r#"{"model": {"populations": []}, "extra": 1}"#).unwrap();
    assert_eq!(kinmix(&["--config", "bad.json", "oracle"], dir.path()).status.code(), Some(2));
}

#[test]
fn oracle_reports_critical_space_and_equilibrium() {
    let dir = tempfile::tempdir().unwrap();
    let text = stdout(&kinmix(&["oracle", "--gamma", "1"], dir.path()));
    assert_eq!(oracle_value(&text, "s_c"), 0.5);
    assert_eq!(oracle_value(&text, "q_max"), 12500.0);

    let text = stdout(&kinmix(&["oracle", "--gamma", "1", "--rho-c", "50", "--rho-t", "16.667", "--s", "0.4"], dir.path()));
    assert!((oracle_value(&text, "f_cars_2") - 10.76).abs() < 0.01);
    assert!((oracle_value(&text, "f_cars_3") - 39.24).abs() < 0.01);

    let o = kinmix(&["oracle", "--s", "0.7", "--rho-c", "100", "--rho-t", "20"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("valid,false"));
    assert!(String::from_utf8_lossy(&o.stderr).contains("valid=false"));
}

#[test]
fn config_file_is_read_and_flags_override_it() {
    let dir = tempfile::tempdir().unwrap();
    let doc = r#"{
        "model": {"gamma": 0.5, "populations": [
            {"name": "cars", "length": 0.004, "classes": 4, "v_max": 100},
            {"name": "trucks", "length": 0.012, "classes": 3}
        ]},
        "numerics": {"seed": 3}
    }"#;
    fs::write(dir.path().join("c.json"), doc).unwrap();
    let text = stdout(&kinmix(&["--config", "c.json", "oracle"], dir.path()));
    assert!((oracle_value(&text, "s_c") - 0.25).abs() < 1e-15);
    let text = stdout(&kinmix(&["--config", "c.json", "oracle", "--gamma", "1"], dir.path()));
    assert_eq!(oracle_value(&text, "s_c"), 0.5);
}

#[test]
fn sweep_csv_has_the_fixed_schema() {
    let dir = tempfile::tempdir().unwrap();
    let o = kinmix(&["sweep", "--mode", "table2", "--steps", "10", "--out", "d.csv", "--scatter", "bins.csv"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let text = fs::read_to_string(dir.path().join("d.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "s,rho_c,rho_t,rho_total,q_c,q_t,q_total,u_c,u_t,u_total,converged,residual,t_final,sample_id,combo_label"
    );
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 33);
    assert!(rows.iter().all(|r| r.len() == 15));
    // empty road: no mean speed
    assert_eq!(&rows[0][7..10], ["nan", "nan", "nan"]);
    let s: &str = rows[4][0];
    assert_eq!(s, "1.0000000000000001e-1");
    assert_eq!(s.parse::<f64>().unwrap(), 0.1);
    assert!(fs::read_to_string(dir.path().join("bins.csv")).unwrap().contains("fixed_density_range"));
}

#[test]
fn job_count_does_not_change_the_output() {
    let dir = tempfile::tempdir().unwrap();
    for (jobs, out) in [("1", "one.csv"), ("3", "three.csv")] {
        let o = kinmix(&["sweep", "--mode", "random", "--steps", "40", "--seed", "11", "--jobs", jobs, "--out", out], dir.path());
        assert_eq!(o.status.code(), Some(0));
    }
    assert_eq!(fs::read(dir.path().join("one.csv")).unwrap(), fs::read(dir.path().join("three.csv")).unwrap());
}

#[test]
fn replaying_a_manifest_reproduces_the_bytes() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.json"), r#"{"model": {"populations": [
        {"name": "cars", "length": 0.004, "speeds": [0, 50, 80, 100]},
        {"name": "trucks", "length": 0.012, "classes": 2}]}}"#)
    .unwrap();
    let runs: [&[&str]; 3] = [
        &["--config", "c.json", "sweep", "--mode", "random", "--steps", "30", "--samples", "2", "--seed", "5", "--out", "a.csv"],
        &["relax", "--rho-c", "80", "--rho-t", "10", "--every", "25", "--out", "b.csv"],
        &["oracle", "--rho-c", "30", "--rho-t", "10", "--out", "c.csv"],
    ];
    for args in runs {
        assert_eq!(kinmix(args, dir.path()).status.code(), Some(0));
    }
    // the replay must not depend on the config file still being there
    fs::remove_file(dir.path().join("c.json")).unwrap();
    for name in ["a.csv", "b.csv", "c.csv"] {
        let manifest = format!("{name}.manifest.json");
        let copy = format!("replayed-{name}");
        let o = kinmix(&["replay", "--manifest", &manifest, "--out", &copy], dir.path());
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        assert_eq!(fs::read(dir.path().join(name)).unwrap(), fs::read(dir.path().join(&copy)).unwrap(), "{name}");
    }
}

#[test]
fn gamma_one_half_sweep_peaks_at_a_quarter() {
    let dir = tempfile::tempdir().unwrap();
    let o = kinmix(&["sweep", "--mode", "table2", "--gamma", "0.5", "--nc", "4", "--nt", "3", "--steps", "40"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let best = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').collect::<Vec<_>>())
        .filter(|r| r[14] == "even")
        .max_by(|a, b| a[6].parse::<f64>().unwrap().total_cmp(&b[6].parse::<f64>().unwrap()))
        .unwrap();
    assert_eq!(best[0].parse::<f64>().unwrap(), 0.25);
}
