//! Nominal-problem plugins.
//!
//! Every robust method in the crate talks to the nominal problem only through
//! [`NominalProblem`]: a nominal solver, an LP relaxation, a rounding rule,
//! and (at desk scale) enumeration of the feasible set. Adding a problem means
//! implementing the trait; nothing in the generators has to change.

mod selection;
mod tsp;

pub use selection::Selection;
pub use tsp::{held_karp, Tour, Tsp, HELD_KARP_MAX_NODES};

use crate::error::Result;
use crate::instance::ProblemKind;
use crate::lp::{LpModel, Relation, Row};

/// A binary solution vector `x in {0,1}^n`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Solution(Vec<bool>);

impl Solution {
    pub fn new(bits: Vec<bool>) -> Self {
        Self(bits)
    }

    pub fn from_indices(n: usize, ones: impl IntoIterator<Item = usize>) -> Self {
        let mut bits = vec![false; n];
        for k in ones {
            bits[k] = true;
        }
        Self(bits)
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Indices of the ones, ascending.
    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().enumerate().filter_map(|(k, &b)| b.then_some(k))
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn dot(&self, costs: &[f64]) -> f64 {
        self.ones().map(|k| costs[k]).sum()
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }
}

/// Linear description of a relaxation of `X` over variables `x_0..x_{n-1}`,
/// always together with the box `0 <= x <= 1`.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub rows: Vec<Row>,
}

impl LinearSystem {
    /// Adds the rows to `model`, mapping column `k` to `vars[k]`.
    pub fn add_to_model(&self, model: &mut LpModel, vars: &[usize]) {
        for row in &self.rows {
            let coeffs = row.coeffs.iter().map(|&(k, a)| (vars[k], a)).collect();
            model.add_row(coeffs, row.relation, row.rhs);
        }
    }
}

pub trait NominalProblem: Send + Sync {
    /// Length of cost and solution vectors.
    fn dim(&self) -> usize;

    /// An optimal `x in X` for `costs` and its value; deterministic ties.
    fn solve_nominal(&self, costs: &[f64]) -> Result<(Solution, f64)>;

    /// A polyhedron whose LP minimum equals the nominal minimum for every cost
    /// vector, if the problem has one.
    fn polyhedron(&self) -> Option<LinearSystem>;

    /// The LP relaxation used by the rounding heuristic.
    fn relaxation(&self) -> LinearSystem;

    /// Turns a fractional point of the relaxation into a feasible solution.
    fn round(&self, fractional: &[f64]) -> Solution;

    /// All of `X`, each solution once, in a fixed order. Fails with a scale
    /// error when `X` is too large to enumerate.
    fn enumerate_feasible(&self) -> Result<Box<dyn Iterator<Item = Solution> + '_>>;

    fn is_feasible(&self, x: &Solution) -> bool;
}

pub fn problem_for(kind: ProblemKind) -> Box<dyn NominalProblem> {
    match kind {
        ProblemKind::Selection { n, p } => Box::new(Selection::new(n, p)),
        ProblemKind::Tsp { m } => Box::new(Tsp::new(m)),
    }
}

pub(crate) fn unit_row(coeffs: Vec<(usize, f64)>, relation: Relation, rhs: f64) -> Row {
    Row { coeffs, relation, rhs }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::{solve_lp, Sense};
    use crate::rng::Rng;

    fn random_costs(rng: &mut Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.uniform_inclusive(100) as f64).collect()
    }

    #[test]
    fn nominal_is_no_worse_than_random_feasible_points() {
        let mut rng = Rng::new(17);
        for kind in [ProblemKind::Selection { n: 9, p: 4 }, ProblemKind::Tsp { m: 6 }] {
            let prob = problem_for(kind);
            let all: Vec<Solution> = prob.enumerate_feasible().unwrap().collect();
            for _ in 0..20 {
                let c = random_costs(&mut rng, prob.dim());
                let (x, v) = prob.solve_nominal(&c).unwrap();
                assert!(prob.is_feasible(&x));
                assert_eq!(x.dot(&c), v);
                for _ in 0..50 {
                    let y = &all[rng.uniform_inclusive(all.len() as u64 - 1) as usize];
                    assert!(v <= y.dot(&c) + 1e-9);
                }
            }
        }
    }

    #[test]
    fn selection_polyhedron_has_integral_minimum() {
        let prob = Selection::new(10, 4);
        let poly = prob.polyhedron().unwrap();
        let mut rng = Rng::new(5);
        for _ in 0..100 {
            let c = random_costs(&mut rng, 10);
            let mut lp = LpModel::new(Sense::Minimize);
            let xs: Vec<usize> = c.iter().map(|&v| lp.add_var(v, 0.0, 1.0)).collect();
            poly.add_to_model(&mut lp, &xs);
            let out = solve_lp(&lp).unwrap();
            let (_, v) = prob.solve_nominal(&c).unwrap();
            assert!((out.objective - v).abs() < 1e-7);
        }
        assert!(Tsp::new(5).polyhedron().is_none());
    }

    #[test]
    fn rounding_is_always_feasible() {
        let mut rng = Rng::new(23);
        for kind in [
            ProblemKind::Selection { n: 11, p: 3 },
            ProblemKind::Tsp { m: 3 },
            ProblemKind::Tsp { m: 7 },
        ] {
            let prob = problem_for(kind);
            for _ in 0..300 {
                let frac: Vec<f64> = (0..prob.dim()).map(|_| rng.uniform_f64()).collect();
                assert!(prob.is_feasible(&prob.round(&frac)));
            }
        }
    }
}
