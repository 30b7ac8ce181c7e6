//! Path ensembles and pointwise statistics.
//!
//! Reductions always run over paths in ascending index order, so statistics
//! do not depend on how the paths were scheduled.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::sdde::{
    simulate_merton_path, simulate_path, MertonModel, NoiseStream, Path, SchemeConfig, SddeModel,
};
use crate::special::norm_quantile;

/// Simulated paths on a shared lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub seed: u64,
    pub times: Vec<f64>,
    /// One entry per path index; `None` when the path could not be simulated.
    pub paths: Vec<Option<Vec<f64>>>,
    /// Indices left out of statistics (non-positive or failed paths).
    pub excluded: Vec<usize>,
    /// Error of every path that failed outright.
    pub failures: Vec<(usize, Error)>,
}

impl Ensemble {
    /// Assemble from per-index simulation outcomes, in index order.
    pub fn from_outcomes(seed: u64, times: Vec<f64>, outcomes: Vec<Result<Path>>) -> Result<Self> {
        if outcomes.is_empty() {
            return Err(Error::BadParameters("ensemble needs at least one path".into()));
        }
        let n = outcomes.len();
        let mut paths = Vec::with_capacity(n);
        let mut excluded = Vec::new();
        let mut failures = Vec::new();
        for (i, outcome) in outcomes.into_iter().enumerate() {
            match outcome {
                Ok(path) => {
                    if path.is_flagged() {
                        excluded.push(i);
                    }
                    paths.push(Some(path.values));
                }
                Err(e) => {
                    excluded.push(i);
                    failures.push((i, e));
                    paths.push(None);
                }
            }
        }
        if excluded.len() == n {
            return Err(Error::AllPathsExcluded { n });
        }
        Ok(Self {
            seed,
            times,
            paths,
            excluded,
            failures,
        })
    }

    pub fn n_paths(&self) -> usize {
        self.paths.len()
    }

    pub fn n_included(&self) -> usize {
        self.paths.len() - self.excluded.len()
    }

    /// Paths that enter the statistics, in index order.
    pub fn included(&self) -> impl Iterator<Item = (usize, &[f64])> + '_ {
        self.paths.iter().enumerate().filter_map(move |(i, p)| {
            if self.excluded.binary_search(&i).is_ok() {
                None
            } else {
                p.as_deref().map(|v| (i, v))
            }
        })
    }

    /// Pointwise mean, with compensated summation so that identical values
    /// average to themselves.
    pub fn mean_path(&self) -> Vec<f64> {
        let n = self.n_included() as f64;
        let mut acc = alloc::vec![(0.0, 0.0); self.times.len()];
        for (_, p) in self.included() {
            for ((sum, comp), &v) in acc.iter_mut().zip(p) {
                let t = *sum + v;
                *comp += if sum.abs() >= v.abs() { (*sum - t) + v } else { (v - t) + *sum };
                *sum = t;
            }
        }
        acc.iter().map(|(sum, comp)| (sum + comp) / n).collect()
    }

    /// Sample standard deviation (zero for a single included path).
    pub fn stddev_path(&self) -> Vec<f64> {
        let n = self.n_included();
        let mean = self.mean_path();
        if n < 2 {
            return alloc::vec![0.0; mean.len()];
        }
        let mut acc = alloc::vec![0.0; mean.len()];
        for (_, p) in self.included() {
            for ((a, v), m) in acc.iter_mut().zip(p).zip(&mean) {
                *a += (v - m) * (v - m);
            }
        }
        acc.iter().map(|s| libm::sqrt(s / (n - 1) as f64)).collect()
    }

    /// Normal-approximation band `mean ± z sd / sqrt(n)` for a two-sided
    /// confidence `level` in `(0, 1)`.
    pub fn confidence_band(&self, level: f64) -> (Vec<f64>, Vec<f64>) {
        let z = norm_quantile(0.5 * (1.0 + level));
        let root_n = libm::sqrt(self.n_included() as f64);
        let mean = self.mean_path();
        let sd = self.stddev_path();
        mean.iter()
            .zip(&sd)
            .map(|(m, s)| (m - z * s / root_n, m + z * s / root_n))
            .unzip()
    }
}

/// Simulate `n_paths` delayed paths with `stream_id = 0..n_paths`.
pub fn run_ensemble(model: &SddeModel, scheme: &SchemeConfig, n_paths: usize, seed: u64) -> Result<Ensemble> {
    let outcomes = (0..n_paths)
        .map(|i| simulate_path(model, scheme, NoiseStream::new(seed, i as u64)))
        .collect();
    Ensemble::from_outcomes(seed, lattice(scheme), outcomes)
}

pub fn run_merton_ensemble(model: &MertonModel, scheme: &SchemeConfig, n_paths: usize, seed: u64) -> Result<Ensemble> {
    let outcomes = (0..n_paths)
        .map(|i| simulate_merton_path(model, scheme, NoiseStream::new(seed, i as u64)))
        .collect();
    Ensemble::from_outcomes(seed, lattice(scheme), outcomes)
}

pub fn lattice(scheme: &SchemeConfig) -> Vec<f64> {
    (0..=scheme.steps).map(|n| scheme.time(n)).collect()
}
