use approx::assert_relative_eq;
use delayrc::dde::{InitialCondition, LaserParams, SystemState};
use delayrc::reservoir::{
    build_drive, fit_linear, harvest, nrmse, HarvestConfig, InputSequence, ReadoutConfig,
    ReservoirClocking,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

fn small_harvest(eta: f64, seed: u64) -> delayrc::reservoir::StateMatrix {
    let params = LaserParams {
        kappa: 0.1,
        tau: 3.0,
        t_lk: 1.0,
        eta,
        ..Default::default()
    };
    let clocking = ReservoirClocking::random(5, 0.4, 1).unwrap();
    let inputs = InputSequence::uniform(300, -1.0, 1.0, 2);
    let cfg = HarvestConfig {
        buffer: 50,
        transient: 200.0,
        noise_seed: seed,
        ..Default::default()
    };
    harvest(&params, &clocking, &inputs, &cfg).unwrap()
}

#[test]
fn drive_follows_mask_pattern() {
    let c = ReservoirClocking::new(0.5, vec![-1.0, 2.0]).unwrap();
    let d = build_drive(&[0.5, -0.25], &c, 10.0).unwrap();
    let expect = [(10.1, -0.5), (10.6, 1.0), (11.1, 0.25), (11.6, -0.5)];
    for (t, v) in expect {
        assert_eq!(d.value_at(t), v);
    }
    assert_eq!(d.value_at(9.9), 0.0);
    assert_eq!(d.value_at(12.1), 0.0);
    assert_eq!(d.end(), 12.0);
}

#[test]
fn zero_coupling_on_the_ecm_is_flat() {
    let (kappa, pump) = (0.1, 0.05);
    let a_sq = (pump + kappa) / (1.0 - 2.0 * kappa);
    let params = LaserParams {
        kappa,
        pump,
        tau: 3.0,
        eta: 0.0,
        d_noise: 0.0,
        ..Default::default()
    };
    let clocking = ReservoirClocking::random(4, 0.5, 3).unwrap();
    let inputs = InputSequence::uniform(60, -1.0, 1.0, 4);
    let cfg = HarvestConfig {
        buffer: 10,
        transient: 10.0,
        noise_seed: 0,
        init: InitialCondition::Constant(SystemState::new(a_sq.sqrt(), 0.0, -kappa)),
    };
    let s = harvest(&params, &clocking, &inputs, &cfg).unwrap();
    assert_eq!((s.rows(), s.cols()), (50, 4));
    assert!(s.matrix().iter().all(|v| (v - a_sq).abs() < 1e-12));
}

#[test]
fn inputs_move_every_virtual_node() {
    let s = small_harvest(0.01, 5);
    let c = s.centered();
    for col in c.matrix().column_iter() {
        assert!(col.norm_squared() / c.rows() as f64 > 0.0);
    }
    let flat = small_harvest(0.0, 5);
    let spread = |m: &DMatrix<f64>| m.max() - m.min();
    assert!(spread(s.matrix()) > 10.0 * spread(flat.matrix()));
}

#[test]
fn harvest_is_reproducible_per_seed() {
    let a = small_harvest(0.01, 7);
    assert_eq!(a, small_harvest(0.01, 7));
    assert_ne!(a.matrix(), small_harvest(0.01, 8).matrix());
    assert_eq!(a.meta.noise_seed, Some(7));
    assert_eq!(a.meta.input_seed, Some(2));
    assert_eq!(a.meta.mask_seed, Some(1));
}

#[test]
fn short_input_is_rejected() {
    let params = LaserParams::default();
    let clocking = ReservoirClocking::random(2, 0.1, 0).unwrap();
    let inputs = InputSequence::uniform(10, -1.0, 1.0, 0);
    let cfg = HarvestConfig {
        buffer: 10,
        transient: 0.0,
        ..Default::default()
    };
    assert!(harvest(&params, &clocking, &inputs, &cfg).is_err());
}

proptest! {
    #[test]
    fn consistent_system_is_recovered(seed in any::<u64>(), rows in 8usize..60, cols in 1usize..6) {
        let x = random_matrix(rows, cols, seed);
        let w: DVector<f64> = DVector::from_fn(cols, |i, _| i as f64 - 1.5);
        let y: Vec<f64> = (&x * &w).iter().map(|v| v + 0.75).collect();
        let fit = fit_linear(&x, &y, &ReadoutConfig::default()).unwrap();
        for (a, b) in fit.weights.iter().zip(w.iter()) {
            prop_assert!((a - b).abs() < 1e-9);
        }
        prop_assert!((fit.bias.unwrap() - 0.75).abs() < 1e-9);
    }

    #[test]
    fn bias_absorbs_target_shift(seed in any::<u64>(), shift in -50.0..50.0f64) {
        let x = random_matrix(40, 3, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        let y: Vec<f64> = (0..40).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let shifted: Vec<f64> = y.iter().map(|v| v + shift).collect();
        let cfg = ReadoutConfig::default();
        let a = fit_linear(&x, &y, &cfg).unwrap();
        let b = fit_linear(&x, &shifted, &cfg).unwrap();
        for (p, q) in a.weights.iter().zip(b.weights.iter()) {
            prop_assert!((p - q).abs() < 1e-9);
        }
        prop_assert!((b.bias.unwrap() - a.bias.unwrap() - shift).abs() < 1e-9);
    }

    #[test]
    fn residual_is_orthogonal_to_features(seed in any::<u64>(), bias in any::<bool>()) {
        let x = random_matrix(50, 4, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(!seed);
        let y: Vec<f64> = (0..50).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let fit = fit_linear(&x, &y, &ReadoutConfig { lambda: 0.0, bias }).unwrap();
        let pred = fit.predict_matrix(&x).unwrap();
        let r = DVector::from_iterator(50, y.iter().zip(&pred).map(|(t, p)| t - p));
        for col in x.column_iter() {
            prop_assert!(col.dot(&r).abs() < 1e-9);
        }
        if bias {
            prop_assert!(r.sum().abs() < 1e-9);
        }
    }

    #[test]
    fn nrmse_of_constant_offset(seed in any::<u64>(), c in -5.0..5.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t: Vec<f64> = (0..100).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y: Vec<f64> = t.iter().map(|v| v + c).collect();
        let mean = t.iter().sum::<f64>() / 100.0;
        let std = (t.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 100.0).sqrt();
        let e = nrmse(&y, &t).unwrap();
        prop_assert!((e - c.abs() / std).abs() < 1e-9 * (1.0 + e));
        prop_assert_eq!(nrmse(&t, &t).unwrap(), 0.0);
    }
}

#[test]
fn ridge_matches_normal_equations() {
    let x = random_matrix(30, 3, 9);
    let y: Vec<f64> = (0..30).map(|i| (i as f64 * 0.37).sin()).collect();
    let lambda = 0.5;
    let fit = fit_linear(
        &x,
        &y,
        &ReadoutConfig {
            lambda,
            bias: false,
        },
    )
    .unwrap();
    let gram = x.transpose() * &x + DMatrix::identity(3, 3) * lambda;
    let direct = gram
        .lu()
        .solve(&(x.transpose() * DVector::from_vec(y)))
        .unwrap();
    for (a, b) in fit.weights.iter().zip(direct.iter()) {
        assert_relative_eq!(a, b, epsilon = 1e-12);
    }
}
