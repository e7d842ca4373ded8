//! Small hand-checkable instances used by tests, benches and docs.

use crate::instance::{Instance, ProblemKind};
use crate::problems::Solution;

/// Choose 2 of 4 items under two scenarios; the robust optimum is items 1 and
/// 4 with value 8.
pub fn two_scenario_selection() -> Instance {
    Instance::new(
        ProblemKind::Selection { n: 4, p: 2 },
        100.0,
        vec![vec![4.0, 1.0, 9.0, 2.0], vec![4.0, 7.0, 4.0, 4.0]],
    )
    .expect("fixture is valid")
}

/// The same instance after a budget-1 modification that raises the robust
/// optimum to 10 while keeping items 1 and 4 optimal.
pub fn hardened_two_scenario_selection() -> Instance {
    Instance::new(
        ProblemKind::Selection { n: 4, p: 2 },
        100.0,
        vec![vec![3.0, 2.0, 10.0, 1.0], vec![5.0, 6.0, 3.0, 5.0]],
    )
    .expect("fixture is valid")
}

/// Hitting-set style master problem: ground set of 7 elements, candidate sets
/// {1,2,3}, {3,4,5}, {6,7}, two scenarios with seed costs 1/7 and budget 1 on
/// a cost cap of 1. The master optimum is 1.
pub fn hitting_set_master() -> (Instance, Vec<Solution>) {
    let n = 7;
    let inst = Instance::new(
        ProblemKind::Selection { n, p: 1 },
        1.0,
        vec![vec![1.0 / 7.0; n], vec![1.0 / 7.0; n]],
    )
    .expect("fixture is valid");
    let sets: [&[usize]; 3] = [&[0, 1, 2], &[2, 3, 4], &[5, 6]];
    let pool = sets
        .iter()
        .map(|s| Solution::from_indices(n, s.iter().copied()))
        .collect();
    (inst, pool)
}
