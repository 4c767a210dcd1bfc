//! Shared fixtures for the pipeline benchmarks.

use shillbench::dataset::InteractionDataset;

pub fn explicit_medium() -> InteractionDataset {
    shillbench::synth::uniform_explicit("bench", 300, 200, 9000, 11)
}

pub fn implicit_medium() -> InteractionDataset {
    let d = explicit_medium();
    shillbench::dataset::convert_to_implicit(&d, Some(3.0)).expect("convertible")
}
