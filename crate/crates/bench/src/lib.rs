//! Criterion benchmarks for `pigo-core`. Run them with
//! `cargo bench -p pigo-bench`.

use pigo_core::{OptimizerState, Stream};

/// Runs `iterations` ask/evaluate/tell steps on OneMax and returns the
/// final number of objective evaluations.
pub fn onemax_steps(mut opt: OptimizerState, seed: u64, iterations: u64) -> u64 {
    let n = opt.n() as f64;
    let root = Stream::new(seed);
    for t in 0..iterations {
        let xs = opt.ask(&root.child(t));
        let f: Vec<f64> = xs.iter().map(|x| n - x.count_ones() as f64).collect();
        opt.tell(&xs, &f).expect("finite objective values");
    }
    opt.f_calls()
}
