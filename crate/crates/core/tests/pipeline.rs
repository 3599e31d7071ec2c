use std::fs::File;
use std::io::{BufReader, BufWriter};

use mvlab::diagnostics::{sup_sq_error, w2_domination_gap};
use mvlab::drivers::{aggregate_to_coarse, brownian_increments, DriverPath, NoiseStream};
use mvlab::models::{from_catalog, MeanFieldOU, MeanFieldOUParams};
use mvlab::mvsde::{build_uniform_partition, StateVector};
use mvlab::schemes::{euler_particle_system, picard_iterate};
use serde_json::{json, Map};

#[test]
fn dumped_driver_replays_the_same_run() {
    let model = MeanFieldOU::new(MeanFieldOUParams::default()).unwrap();
    let grid = build_uniform_partition(1.0, 64).unwrap();
    let driver = brownian_increments(&grid, 300, 1, &NoiseStream::new(5)).unwrap();
    let x0 = StateVector::scalar(0.7).unwrap();
    let first = euler_particle_system(&model, &x0, &grid, 300, &driver).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("driver.bin");
    driver.write_to(BufWriter::new(File::create(&path).unwrap())).unwrap();
    let bytes = std::fs::metadata(&path).unwrap().len();
    assert_eq!(bytes, 6 + 24 + 8 * (300 * 64 + 300 * 64));
    let replayed = DriverPath::read_from(BufReader::new(File::open(&path).unwrap()), grid.clone()).unwrap();
    let second = euler_particle_system(&model, &x0, &grid, 300, &replayed).unwrap();
    assert_eq!(first.states(), second.states());
}

#[test]
fn two_dimensional_kernel_model_runs_end_to_end() {
    let mut params = Map::new();
    params.insert("dim".into(), json!(2));
    params.insert("strength".into(), json!(0.8));
    let model = from_catalog("mckean_kernel:attraction", &params).unwrap();
    let fine = build_uniform_partition(0.5, 32).unwrap();
    let coarse = build_uniform_partition(0.5, 8).unwrap();
    let driver = brownian_increments(&fine, 200, 2, &NoiseStream::new(8)).unwrap();
    let x0 = StateVector::new(vec![1.0, -0.5]).unwrap();
    let fine_run = euler_particle_system(model.as_ref(), &x0, &fine, 200, &driver).unwrap();
    let coarse_run = euler_particle_system(model.as_ref(), &x0, &coarse, 200, &aggregate_to_coarse(&driver, &coarse).unwrap()).unwrap();
    let err = sup_sq_error(&coarse_run, &fine_run).unwrap();
    assert!(err > 0.0 && err < 0.05, "{err}");
    assert!(w2_domination_gap(&coarse_run, &fine_run).unwrap() <= 1e-10);

    let picard = picard_iterate(model.as_ref(), &x0, &fine, 200, &driver, 12, 1e-12).unwrap();
    let last = picard.iterates.last().unwrap();
    assert!(sup_sq_error(last, &fine_run).unwrap() < 1e-12);
}
