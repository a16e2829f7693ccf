//! Shared fixtures for the benchmarks.

use vafactor_core::synth::{generate, population_standardizer, random_params, ParamScales, SynthConfig, SynthData};
use vafactor_core::RngStream;

/// Model-generated dataset with `n` training and `n / 2` target rows.
pub fn fixture(n: usize, p: usize, k: usize, l: usize, seed: u64) -> SynthData {
    let mut rng = RngStream::new(seed, 0);
    let params = random_params(l, p, k, &ParamScales::default(), &mut rng).expect("valid dimensions");
    let csmf = vec![1.0 / l as f64; l];
    let std = population_standardizer(&params, &csmf);
    let cfg = SynthConfig {
        n_training: n,
        n_target: n / 2,
        training_csmf: csmf.clone(),
        target_csmf: csmf,
        symptom_missing: 0.1,
        demog_missing: 0.05,
    };
    generate(&params, &std, &cfg, &mut rng).expect("valid config")
}
