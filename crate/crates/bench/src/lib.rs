//! Shared inputs for the benchmarks.

use hardgen_core::{sample_ru, Instance, ProblemKind};

/// RU selection instance with `p = n / 2` and `N = n`.
pub fn selection(n: usize, seed: u64) -> Instance {
    sample_ru(ProblemKind::Selection { n, p: n / 2 }, n, 100.0, seed, false).expect("valid sizes")
}

/// RU asymmetric TSP instance with `N = m`.
pub fn tsp(m: usize, seed: u64) -> Instance {
    sample_ru(ProblemKind::Tsp { m }, m, 100.0, seed, false).expect("valid sizes")
}
