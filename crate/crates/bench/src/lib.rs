//! Shared fixtures for the benchmarks.

use chrono::NaiveDate;
use mtbench_core::data::{generate_synthetic, Collection, SyntheticSpec, SyntheticTask};

/// A drifted collection of `n_tasks` tasks with `size` records each.
pub fn collection(n_tasks: usize, size: usize, seed: u64) -> Collection {
    let date = |y| NaiveDate::from_ymd_opt(y, 1, 1).unwrap();
    let tasks = (0..n_tasks)
        .map(|i| SyntheticTask {
            name: format!("t{i}"),
            size,
            rho: 0.9,
            start: date(2010),
            end: date(2015),
        })
        .collect();
    let spec = SyntheticSpec {
        tasks,
        noise: 0.05,
        drift: 1.0,
        shared_fraction: 0.2,
        sharpness: 6.0,
        active_fraction: 0.5,
        fingerprint: Default::default(),
    };
    generate_synthetic(&spec, seed).expect("valid spec")
}
