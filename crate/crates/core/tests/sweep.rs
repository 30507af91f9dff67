use std::time::Instant;

use delayrc::capacity::memory_capacity;
use delayrc::error::Error;
use delayrc::reservoir::{harvest, InputSequence};
use delayrc::sweep::{
    fmt9, ranks, run_sweep, spearman, spectra_only, Axis, ExperimentConfig, Scale, SweepResult,
};
use proptest::prelude::*;

fn axis(name: &str, min: f64, max: f64, count: usize) -> Axis {
    Axis {
        name: name.into(),
        min,
        max,
        count,
        scale: Scale::Linear,
    }
}

/// Short harvests so capacity sweeps stay in the seconds range.
fn small_capacity_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.laser.kappa = 0.1;
    cfg.laser.t_lk = 1.0;
    cfg.reservoir.n_virtual = 5;
    cfg.reservoir.clock_cycle = 10.0;
    cfg.reservoir.tau_ratio = Some(1.41);
    cfg.data.rows = 3000;
    cfg.data.buffer = 200;
    cfg.data.transient = 100.0;
    cfg.capacity.d_max = 2;
    cfg.capacity.max_delay = 30;
    cfg.run.eigenvalues = 20;
    cfg
}

fn csv_of(r: &SweepResult) -> String {
    let mut buf = Vec::new();
    r.write_csv(&mut buf).unwrap();
    String::from_utf8(buf).unwrap()
}

#[test]
fn no_axes_gives_one_record() {
    let mut cfg = small_capacity_config();
    cfg.data.rows = 500;
    let r = run_sweep(&cfg).unwrap();
    assert_eq!(r.records.len(), 1);
    let rec = &r.records[0];
    assert!(rec.errors.is_empty(), "{:?}", rec.errors);
    assert!(rec.mc.is_some() && rec.lambda_hat.is_some());
    assert_eq!(rec.mc_degree.as_ref().unwrap().len(), 2);
    assert_eq!(r.schema, 1);
}

#[test]
fn sweep_csv_is_reproducible_across_pool_sizes() {
    let mut cfg = small_capacity_config();
    cfg.data.rows = 400;
    cfg.axes = vec![axis("pump", -0.05, 0.05, 2), axis("kappa", 0.1, 0.2, 2)];
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| csv_of(&run_sweep(&cfg).unwrap()))
    };
    let a = run(1);
    assert_eq!(a, run(1));
    assert_eq!(a, run(3));
    let lines: Vec<&str> = a.lines().collect();
    assert_eq!(lines.len(), 5);
    assert_eq!(
        lines[0],
        "index,pump,kappa,clock_cycle_used,tau_used,mc,mc1,mc2,phi_hat,lambda_hat,nrmse_train,nrmse_test,error"
    );
    // first axis varies slowest
    assert!(lines[1].starts_with("0,-0.05,0.1,"));
    assert!(lines[2].starts_with("1,-0.05,0.2,"));
    assert!(lines[3].starts_with("2,0.05,0.1,"));
}

#[test]
fn failing_points_are_recorded_and_the_rest_completes() {
    let mut cfg = small_capacity_config();
    cfg.run.capacity = false;
    // pump values up to -kappa do not reach the lasing threshold
    cfg.axes = vec![axis("pump", -0.2, 0.05, 6)];
    let r = run_sweep(&cfg).unwrap();
    assert_eq!(r.records.len(), 6);
    assert_eq!(r.failures(), 3);
    assert!(r.records[..3]
        .iter()
        .all(|x| x.errors[0].starts_with("spectrum:")));
    assert!(r.records[3..]
        .iter()
        .all(|x| x.lambda_hat.is_some() && x.errors.is_empty()));
    let csv = csv_of(&r);
    assert!(csv.lines().nth(1).unwrap().contains("spectrum:"));
}

#[test]
fn swept_capacities_respect_node_count() {
    let mut cfg = small_capacity_config();
    cfg.data.rows = 20_000;
    cfg.run.spectra = false;
    cfg.axes = vec![axis("pump", -0.05, 0.05, 2)];
    let r = run_sweep(&cfg).unwrap();
    for rec in &r.records {
        let mc = rec.mc.unwrap();
        assert!(mc > 0.5 && mc <= 5.05, "{mc}");
    }
}

#[test]
fn spectra_only_sweep_is_far_cheaper_than_capacity() {
    let mut cfg = ExperimentConfig::default();
    cfg.laser.t_lk = 1.0;
    cfg.laser.tau = 500.0;
    cfg.reservoir.n_virtual = 50;
    cfg.reservoir.clock_cycle = 350.0;
    cfg.run.capacity = false;
    cfg.axes = vec![axis("kappa", 0.05, 0.2, 50), axis("pump", -0.045, 0.1, 50)];
    assert!(spectra_only(&cfg));
    let start = Instant::now();
    let r = run_sweep(&cfg).unwrap();
    let spectra_time = start.elapsed().as_secs_f64();
    assert_eq!(r.records.len(), 2500);
    assert_eq!(r.failures(), 0);

    // one capacity point at the same operating point on a short harvest,
    // scaled linearly to 20000 rows plus the 5000-input buffer
    let mut cap = cfg.clone();
    cap.axes.clear();
    cap.laser.kappa = 0.1;
    cap.laser.pump = -0.095;
    let setup = cap.point(0).unwrap();
    let (rows, buffer) = (400, 100);
    let start = Instant::now();
    let inputs = InputSequence::uniform(buffer + rows, -1.0, 1.0, 1);
    let mut hc = setup.harvest_config(&cap.data, buffer);
    hc.transient = 0.0;
    let states = harvest(&setup.laser, &setup.clocking().unwrap(), &inputs, &hc).unwrap();
    memory_capacity(&states, &inputs.values, buffer, &cap.capacity).unwrap();
    let per_point = start.elapsed().as_secs_f64() * 25_000.0 / (rows + buffer) as f64;
    let capacity_time = per_point * 2500.0;
    assert!(
        capacity_time > 100.0 * spectra_time,
        "spectra {spectra_time:.3}s vs capacity estimate {capacity_time:.0}s"
    );
}

#[test]
fn config_layers_and_overrides() {
    let text = r#"{
  "laser": { "kappa": 0.1, "pump": -0.095 },
  "reservoir": { "n_virtual": 50, "clock_cycle": 100 },
  "axes": [ { "name": "t_lk", "min": 0.1, "max": 100, "count": 4, "scale": "log" } ]
}"#;
    let cfg = ExperimentConfig::load(text, false, &[]).unwrap();
    assert_eq!(cfg.laser.eta, 0.01);
    assert_eq!(cfg.laser.d_noise, 1e-7);
    assert_eq!(cfg.data.rows, 20_000);
    let v = cfg.axes[0].values();
    assert_eq!(v.len(), 4);
    assert!((v[1] - 1.0).abs() < 1e-12 && (v[3] - 100.0).abs() < 1e-12);

    let paper = ExperimentConfig::load(text, true, &[]).unwrap();
    assert_eq!((paper.data.rows, paper.data.buffer), (250_000, 100_000));
    assert_eq!((paper.capacity.d_max, paper.capacity.max_delay), (5, 500));
    assert_eq!(paper.laser.kappa, 0.1);

    let over = ["laser.kappa=0.2".to_string(), "run.refine=true".to_string()];
    let cfg = ExperimentConfig::load(text, false, &over).unwrap();
    assert_eq!(cfg.laser.kappa, 0.2);
    assert!(cfg.run.refine);
    assert!(ExperimentConfig::load(text, false, &["laser.kappa".to_string()]).is_err());
}

#[test]
fn config_errors_point_at_lines() {
    let line = |text: &str| match ExperimentConfig::from_json(text) {
        Err(Error::Config { line, .. }) => line,
        other => panic!("expected a config error, got {other:?}"),
    };
    assert_eq!(
        line("{\n  \"laser\": {\n    \"kapa\": 0.1\n  }\n}"),
        Some(3)
    );
    assert_eq!(
        line("{\n  \"axes\": [\n    {\"name\": \"colour\", \"min\": 0, \"max\": 1, \"count\": 2}\n  ]\n}"),
        Some(3)
    );
    assert_eq!(
        line("{\n\n  \"axes\": [{\"name\": \"t_lk\", \"min\": 0, \"max\": 1, \"count\": 2, \"scale\": \"log\"}]\n}"),
        Some(3)
    );
    assert_eq!(
        line("{\n  \"reservoir\": {\n    \"n_virtual\": 0\n  }\n}"),
        Some(3)
    );
    assert_eq!(line("{\"schema\": 2}"), Some(1));
}

#[test]
fn grid_points_snap_to_the_integration_step() {
    let mut cfg = ExperimentConfig::default();
    cfg.reservoir.n_virtual = 3;
    cfg.reservoir.clock_cycle = 1.0;
    cfg.reservoir.tau_ratio = Some(1.41);
    let p = cfg.point(0).unwrap();
    assert!((p.theta - 0.33).abs() < 1e-12);
    assert!((p.clock_cycle - 0.99).abs() < 1e-12);
    assert!((p.laser.tau - 1.4).abs() < 1e-12);
    assert_eq!(p.seeds, cfg.seeds.for_point(0));
    assert_eq!(cfg.seeds.for_point(5).mask, cfg.seeds.mask ^ 5);
}

#[test]
fn nine_significant_digits() {
    assert_eq!(fmt9(0.75), "0.75");
    assert_eq!(fmt9(220.0), "220");
    assert_eq!(fmt9(2.0 / 3.0), "0.666666667");
    assert_eq!(fmt9(-1234.56789012), "-1234.56789");
    assert_eq!(fmt9(1e-7), "1.00000000e-7");
    assert_eq!(fmt9(0.0), "0");
}

proptest! {
    #[test]
    fn spearman_sees_monotone_maps(v in prop::collection::vec(-1e3..1e3f64, 3..40)) {
        let distinct = {
            let mut s = v.clone();
            s.sort_by(f64::total_cmp);
            s.windows(2).all(|w| w[0] < w[1])
        };
        prop_assume!(distinct);
        let up: Vec<f64> = v.iter().map(|x| x.powi(3) + 2.0).collect();
        let down: Vec<f64> = v.iter().map(|x| -x.powi(3)).collect();
        prop_assert!((spearman(&v, &up).unwrap() - 1.0).abs() < 1e-12);
        let r = ranks(&v);
        prop_assert!((r.iter().sum::<f64>() - (v.len() * (v.len() + 1)) as f64 / 2.0).abs() < 1e-9);
        prop_assert!((spearman(&v, &down).unwrap() + 1.0).abs() < 1e-12);
    }
}
