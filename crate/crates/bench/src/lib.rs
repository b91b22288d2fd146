//! Shared workloads for the benchmarks.

use tlforest::forest::TreeCount;
use tlforest::synth::SynthConfig;
use tlforest::{Dataset, ForestParams};

/// Multi-fidelity data with `n_low` cheap and `n_high` expensive labels.
pub fn multifidelity(n_low: usize, n_high: usize) -> Dataset {
    SynthConfig::multifidelity(n_low, n_high, 11)
        .generate()
        .expect("valid synth config")
}

pub fn energies(counts: [usize; 3]) -> Dataset {
    SynthConfig::correlated_energies(counts, 12)
        .generate()
        .expect("valid synth config")
}

pub fn params(trees: usize) -> ForestParams {
    ForestParams::default().with_trees(TreeCount::Fixed(trees)).with_seed(3)
}

/// Evenly spread probe points in the unit cube.
pub fn probes(d: usize, n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| (0..d).map(|j| ((i * 7 + j * 3) % n) as f64 / n as f64).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn workloads_build() {
        let ds = multifidelity(50, 20);
        assert_eq!(probes(ds.n_features(), 8).len(), 8);
        assert!(tlforest::train_forest(&ds, &["y_high"], &params(4)).is_ok());
        assert_eq!(energies([30, 10, 10]).tasks().len(), 3);
    }
}
