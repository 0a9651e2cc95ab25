mod common;

use cdkf::measurement_update::MeasurementModel;
use cdkf::models::{
    sample_measurement_noise, simulate_dataset, CoordinatedTurn, IllCondModel, RadarModel,
    SimulatedDataset,
};
use cdkf::ode::{euler_maruyama_path, euler_maruyama_simulate};
use cdkf::time_update::LinearProcess;
use nalgebra::{dmatrix, dvector, DMatrix, DVector};

#[test]
fn radar_jacobian_matches_central_differences() {
    let radar = RadarModel::new();
    let mut rng = common::rng(17);
    for _ in 0..100 {
        let mut x = common::gaussian_vector(&mut rng, 7) * 2000.0;
        x[6] = 0.05;
        let analytic = radar.jacobian(1, &x).unwrap();
        let numeric = common::central_difference(|y| RadarModel::observe(y).unwrap(), &x);
        let scale = analytic.amax();
        assert!((analytic - numeric).amax() < 1e-5 * scale);
    }
}

fn sample_cov(draws: &[DVector<f64>]) -> DMatrix<f64> {
    let m = draws[0].len();
    let mut acc = DMatrix::zeros(m, m);
    for d in draws {
        acc += d * d.transpose();
    }
    acc / draws.len() as f64
}

#[test]
fn gaussian_radar_noise_has_nominal_covariance() {
    let radar = RadarModel::new();
    let mut rng = common::rng(1);
    let draws: Vec<_> = (0..100_000).map(|_| sample_measurement_noise(&radar, &mut rng)).collect();
    let cov = sample_cov(&draws);
    for i in 0..3 {
        let want = radar.noise_cov()[(i, i)];
        assert!((cov[(i, i)] / want - 1.0).abs() < 0.05);
    }
}

#[test]
fn glint_noise_matches_mixture_moment() {
    let nominal = RadarModel::new().noise_cov().clone();
    let radar = RadarModel::with_glint(0.25, 100.0).unwrap();
    let mixture = &nominal * 25.75;
    assert!(common::rel_diff(radar.noise_cov(), &mixture) < 1e-14);
    let mut rng = common::rng(2);
    let draws: Vec<_> = (0..100_000).map(|_| sample_measurement_noise(&radar, &mut rng)).collect();
    let cov = sample_cov(&draws);
    for i in 0..3 {
        assert!((cov[(i, i)] / mixture[(i, i)] - 1.0).abs() < 0.10);
    }
    let again: Vec<_> = {
        let mut rng = common::rng(2);
        (0..10).map(|_| sample_measurement_noise(&radar, &mut rng)).collect()
    };
    assert_eq!(&again[..], &draws[..10]);
}

#[test]
fn brownian_variance_grows_with_time() {
    let walk = LinearProcess::new(dmatrix![0.0], dmatrix![1.0], dmatrix![1.0]).unwrap();
    let x0 = dvector![0.0];
    let ends: Vec<f64> = (0..10_000u64)
        .map(|s| euler_maruyama_simulate(&walk, &x0, 0.0, 2.0, 0.05, &mut common::rng(s)).unwrap()[0])
        .collect();
    let var = ends.iter().map(|e| e * e).sum::<f64>() / ends.len() as f64;
    assert!((var / 2.0 - 1.0).abs() < 0.05, "variance {var}");
}

#[test]
fn euler_maruyama_mean_is_weakly_consistent() {
    let a: f64 = -0.8;
    let model = LinearProcess::new(dmatrix![a], dmatrix![1.0], dmatrix![0.5]).unwrap();
    let x0 = dvector![2.0];
    let n = 10_000;
    let ends: Vec<f64> = (0..n as u64)
        .map(|s| euler_maruyama_simulate(&model, &x0, 0.0, 1.0, 1e-3, &mut common::rng(1000 + s)).unwrap()[0])
        .collect();
    let mean = ends.iter().sum::<f64>() / n as f64;
    let var = ends.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let se = (var / n as f64).sqrt();
    assert!((mean - 2.0 * a.exp()).abs() < 3.0 * se, "mean {mean}, se {se}");
}

#[test]
fn noise_free_turn_keeps_speed_and_radius() {
    let ct = CoordinatedTurn::with_intensities(0.0, 0.0);
    let x0 = CoordinatedTurn::initial_mean();
    let omega = x0[6];
    let path = euler_maruyama_path(&ct, &x0, 0.0, 150.0, 5e-4, &mut common::rng(0)).unwrap();
    let centre = (x0[0] - x0[3] / omega, x0[2] + x0[1] / omega);
    let radius0 = (x0[0] - centre.0).hypot(x0[2] - centre.1);
    for (_, x) in path.iter().step_by(1000) {
        let speed = x[1].hypot(x[3]);
        assert!((speed - 150.0).abs() < 0.5, "speed {speed}");
        let radius = (x[0] - centre.0).hypot(x[2] - centre.1);
        assert!((radius - radius0).abs() < 1e-3 * radius0);
        assert_eq!(x[4], x0[4]);
    }
}

#[test]
fn conditioning_degrades_as_delta_shrinks() {
    // For the 2x2 innovation matrix S = H Hᵀ + δ² I the determinant is
    // δ²(20 + 2δ + 2δ²); forming it from the entries would cancel.
    let mut last = 0.0;
    for k in 1..=14 {
        let d = 10f64.powi(-k);
        let sensor = IllCondModel::new(d).unwrap();
        let h = sensor.matrix();
        let s = h * h.transpose() + sensor.noise_cov();
        let expected = dmatrix![7.0 + d * d, 7.0 + d; 7.0 + d, 7.0 + 2.0 * d + 2.0 * d * d];
        assert!((&s - expected).amax() < 1e-14);
        let trace = s[(0, 0)] + s[(1, 1)];
        let det = d * d * (20.0 + 2.0 * d + 2.0 * d * d);
        let big = 0.5 * (trace + (trace * trace - 4.0 * det).sqrt());
        let cond = big * big / det;
        assert!(cond > last, "delta {d:e}: {cond}");
        last = cond;
    }
}

fn radar_dataset(seed: u64) -> SimulatedDataset {
    simulate_dataset(
        &CoordinatedTurn::new(),
        &RadarModel::new(),
        &CoordinatedTurn::initial_mean(),
        &CoordinatedTurn::initial_cov(),
        2.0,
        20,
        1e-3,
        seed,
    )
    .unwrap()
}

#[test]
fn dataset_files_round_trip_exactly() {
    let data = radar_dataset(31);
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("d.csv");
    let json = dir.path().join("d.json");
    data.save(&csv, &json).unwrap();
    let back = SimulatedDataset::load(&csv, &json).unwrap();
    assert_eq!(back, data);
    assert_eq!(back.manifest().noise, "radar-gaussian");
}

#[test]
fn datasets_depend_only_on_seed() {
    assert_eq!(radar_dataset(4), radar_dataset(4));
    assert_ne!(radar_dataset(4).truth, radar_dataset(5).truth);
}
