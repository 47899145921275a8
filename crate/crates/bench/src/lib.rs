//! Benchmark fixtures. The benchmarks themselves live in `benches/`.

use itq_core::sim::{generate, DgpSpec};
use itq_core::ExperimentData;

/// A simulated completely randomized experiment with half the units treated.
pub fn experiment(n: usize, seed: u64) -> ExperimentData {
    let spec = DgpSpec::new(n, 0.5, 1, seed).expect("valid design");
    generate(&spec, 0).expect("valid design").data
}
