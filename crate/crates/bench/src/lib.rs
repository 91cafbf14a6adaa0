//! Fixtures shared by the benchmarks.

use subpert::series::generate;
use subpert::spectral::RankPolicy;
use subpert::trajectory::embed;
use subpert::{PerturbationPair, SeriesSpec};

/// Two-cosine signal with white noise, window L = N/2.
pub fn cosine_pair(n: usize) -> PerturbationPair {
    let signal = SeriesSpec::Oscillating {
        terms: vec![
            subpert::series::OscTerm { amplitude: 1.0, frequency: 0.07, phase: 0.0 },
            subpert::series::OscTerm { amplitude: 0.5, frequency: 0.21, phase: 0.3 },
        ],
    };
    let f = generate(&signal, n, Some(0)).unwrap().values;
    let e = generate(&SeriesSpec::white_noise(), n, Some(1)).unwrap().values;
    let l = n / 2;
    PerturbationPair::new(embed(&f, l).unwrap(), embed(&e, l).unwrap(), RankPolicy::Known(4)).unwrap()
}

pub fn noise(n: usize, seed: u64) -> Vec<f64> {
    generate(&SeriesSpec::white_noise(), n, Some(seed)).unwrap().values
}
