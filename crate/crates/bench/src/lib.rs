//! Fixtures shared by the benchmarks.

use palign_core::{sample_instance, ModelParams, PlantedInstance};

/// Deterministic planted instance for a model/size pair.
pub fn instance(params: &ModelParams, seed: u64) -> PlantedInstance {
    sample_instance(params, seed).expect("valid benchmark parameters")
}

/// Mid-range alignment workloads: `(label, params)`.
pub fn alignment_cases() -> Vec<(&'static str, ModelParams)> {
    vec![
        ("er_n10_m5", ModelParams::er(10, 5, 0.3, 0.8)),
        ("gauss_n10_m5", ModelParams::gaussian(10, 5, 0.8)),
        ("gauss_n12_m6", ModelParams::gaussian(12, 6, 0.9)),
    ]
}
