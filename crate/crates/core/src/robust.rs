//! Solvers for the min-max robust problem `min_x max_j c^j x`.
//!
//! The exact solvers are deterministic depth-first branch-and-bound codes.
//! Their node counts are the crate's machine-independent hardness measure, so
//! nothing in them depends on timing or thread scheduling.

use std::time::Duration;

use crate::deadline::Deadline;
use crate::error::{Error, Result};
use crate::instance::{midpoint, Instance, ProblemKind};
use crate::lp::{solve_lp, LpModel, Relation, Sense};
use crate::problems::{held_karp, problem_for, NominalProblem, Selection, Solution, Tour, HELD_KARP_MAX_NODES};

const INT_TOL: f64 = 1e-6;
/// A node is pruned when its bound cannot beat the incumbent by more than this.
const PRUNE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct RobustResult {
    pub x: Solution,
    /// `max_j c^j x`, recomputed from the scenarios.
    pub value: f64,
    /// Proven lower bound on the robust optimum (the LP value for the
    /// heuristic, `value` once the exact search finishes).
    pub lower_bound: f64,
    pub nodes: u64,
    pub lp_solves: u64,
    pub wall_time: f64,
    pub proven_optimal: bool,
}

pub fn robust_value(costs: &[Vec<f64>], x: &Solution) -> f64 {
    costs.iter().map(|c| x.dot(c)).fold(f64::NEG_INFINITY, f64::max)
}

/// Exact robust optimum of `instance` under an optional wall-clock limit.
pub fn solve_exact(instance: &Instance, limit: Option<Duration>) -> Result<RobustResult> {
    solve_exact_costs(instance.kind(), instance.costs(), Deadline::new(limit))
}

/// As [`solve_exact`] for a bare scenario matrix.
pub fn solve_exact_costs(kind: ProblemKind, costs: &[Vec<f64>], deadline: Deadline) -> Result<RobustResult> {
    let clock = Deadline::none();
    let mut search = Search {
        costs,
        deadline,
        best: None,
        nodes: 0,
        lp_solves: 0,
    };
    let finished = match kind {
        ProblemKind::Selection { n, p } => search.run_selection(n, p),
        ProblemKind::Tsp { m } => search.run_tsp(m),
    };
    let (nodes, lp_solves) = (search.nodes, search.lp_solves);
    let Some((x, value)) = search.best else {
        return match finished {
            Err(Error::TimeLimitNoIncumbent) | Ok(()) => Err(Error::TimeLimitNoIncumbent),
            Err(e) => Err(e),
        };
    };
    let mut result = RobustResult {
        x,
        value,
        lower_bound: value,
        nodes,
        lp_solves,
        wall_time: clock.elapsed(),
        proven_optimal: true,
    };
    match finished {
        Ok(()) => Ok(result),
        Err(Error::TimeLimitNoIncumbent) => {
            result.proven_optimal = false;
            result.lower_bound = f64::NEG_INFINITY;
            Err(Error::RobustTimeLimit(Box::new(result)))
        }
        Err(e) => Err(e),
    }
}

/// LP relaxation of the epigraph model, rounded to a feasible solution.
pub fn solve_heuristic(instance: &Instance) -> Result<RobustResult> {
    solve_heuristic_costs(instance.kind(), instance.costs())
}

pub fn solve_heuristic_costs(kind: ProblemKind, costs: &[Vec<f64>]) -> Result<RobustResult> {
    let clock = Deadline::none();
    let prob = problem_for(kind);
    let n = prob.dim();
    let mut lp = LpModel::new(Sense::Minimize);
    let t = lp.add_free_var(1.0);
    let xs: Vec<usize> = (0..n).map(|_| lp.add_var(0.0, 0.0, 1.0)).collect();
    for c in costs {
        let mut row = vec![(t, 1.0)];
        row.extend(xs.iter().zip(c).filter(|(_, &v)| v != 0.0).map(|(&x, &v)| (x, -v)));
        lp.add_row(row, Relation::Ge, 0.0);
    }
    prob.relaxation().add_to_model(&mut lp, &xs);
    let out = solve_lp(&lp)?.into_optimal()?;
    let frac: Vec<f64> = xs.iter().map(|&x| out.primal[x]).collect();
    let x = prob.round(&frac);
    Ok(RobustResult {
        value: robust_value(costs, &x),
        x,
        lower_bound: out.objective,
        nodes: 0,
        lp_solves: 1,
        wall_time: clock.elapsed(),
        proven_optimal: false,
    })
}

/// Robust values of every feasible solution, ascending.
pub fn sorted_objective_vector(instance: &Instance) -> Result<Vec<f64>> {
    let prob = problem_for(instance.kind());
    let mut values: Vec<f64> = prob
        .enumerate_feasible()?
        .map(|x| robust_value(instance.costs(), &x))
        .collect();
    values.sort_by(f64::total_cmp);
    Ok(values)
}

/// Lower bound used at a TSP search node whose path prefix is `path`
/// (starting at node 0): for every scenario, the prefix cost plus the cheapest
/// allowed outgoing arc of the last node and of every unvisited node; the
/// maximum over scenarios. For a complete path this is the tour's robust value.
pub fn tsp_path_bound(m: usize, costs: &[Vec<f64>], path: &[usize]) -> f64 {
    let mut visited = vec![false; m];
    for &v in path {
        visited[v] = true;
    }
    let last = *path.last().expect("path starts at node 0");
    let unvisited: Vec<usize> = (0..m).filter(|&v| !visited[v]).collect();
    costs
        .iter()
        .map(|c| {
            let prefix: f64 = path.windows(2).map(|w| c[w[0] * m + w[1]]).sum();
            if unvisited.is_empty() {
                return prefix + c[last * m];
            }
            let out_last = unvisited.iter().map(|&v| c[last * m + v]).fold(f64::INFINITY, f64::min);
            let rest: f64 = unvisited
                .iter()
                .map(|&u| {
                    unvisited
                        .iter()
                        .filter(|&&v| v != u)
                        .chain(std::iter::once(&0))
                        .map(|&v| c[u * m + v])
                        .fold(f64::INFINITY, f64::min)
                })
                .sum();
            prefix + out_last + rest
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

struct Search<'a> {
    costs: &'a [Vec<f64>],
    deadline: Deadline,
    best: Option<(Solution, f64)>,
    nodes: u64,
    lp_solves: u64,
}

impl Search<'_> {
    fn offer(&mut self, x: Solution) {
        let v = robust_value(self.costs, &x);
        if self.best.as_ref().is_none_or(|(_, b)| v < *b) {
            self.best = Some((x, v));
        }
    }

    fn prunes(&self, bound: f64) -> bool {
        self.best.as_ref().is_some_and(|(_, b)| bound >= b - PRUNE_TOL)
    }

    fn tick(&mut self) -> Result<()> {
        if self.deadline.expired() {
            return Err(Error::TimeLimitNoIncumbent);
        }
        self.nodes += 1;
        Ok(())
    }

    fn run_selection(&mut self, n: usize, p: usize) -> Result<()> {
        let prob = Selection::new(n, p);
        if !self.costs.is_empty() {
            let (x, _) = prob.solve_nominal(&midpoint(self.costs))?;
            self.offer(x);
        }
        let mut lp = LpModel::new(Sense::Minimize);
        let t = lp.add_free_var(1.0);
        let xs: Vec<usize> = (0..n).map(|_| lp.add_var(0.0, 0.0, 1.0)).collect();
        for c in self.costs {
            let mut row = vec![(t, 1.0)];
            row.extend(xs.iter().zip(c).filter(|(_, &v)| v != 0.0).map(|(&x, &v)| (x, -v)));
            lp.add_row(row, Relation::Ge, 0.0);
        }
        lp.add_row(xs.iter().map(|&x| (x, 1.0)).collect(), Relation::Eq, p as f64);
        let mut fixed = vec![None; n];
        self.selection_node(&prob, &mut lp, &xs, &mut fixed)
    }

    fn selection_node(
        &mut self,
        prob: &Selection,
        lp: &mut LpModel,
        xs: &[usize],
        fixed: &mut [Option<bool>],
    ) -> Result<()> {
        self.tick()?;
        for (&x, f) in xs.iter().zip(fixed.iter()) {
            match f {
                Some(true) => lp.set_bounds(x, 1.0, 1.0),
                Some(false) => lp.set_bounds(x, 0.0, 0.0),
                None => lp.set_bounds(x, 0.0, 1.0),
            }
        }
        let out = solve_lp(lp)?;
        self.lp_solves += 1;
        if !out.is_optimal() || self.prunes(out.objective) {
            return Ok(());
        }
        let frac: Vec<f64> = xs.iter().map(|&x| out.primal[x]).collect();
        self.offer(prob.round(&frac));

        let mut branch: Option<(usize, f64)> = None;
        for (k, &f) in frac.iter().enumerate() {
            let dist = f.min(1.0 - f);
            if fixed[k].is_none() && dist > INT_TOL && branch.is_none_or(|(_, d)| dist > d) {
                branch = Some((k, dist));
            }
        }
        let Some((k, _)) = branch else {
            return Ok(());
        };
        let up_first = frac[k] >= 0.5;
        let ones = fixed.iter().filter(|f| **f == Some(true)).count();
        let open = fixed.iter().filter(|f| f.is_none()).count();
        for value in [up_first, !up_first] {
            if self.prunes(out.objective) {
                break;
            }
            let ones = ones + usize::from(value);
            if ones > prob.p() || ones + open - 1 < prob.p() {
                continue;
            }
            fixed[k] = Some(value);
            let res = self.selection_node(prob, lp, xs, fixed);
            fixed[k] = None;
            res?;
        }
        Ok(())
    }

    fn run_tsp(&mut self, m: usize) -> Result<()> {
        let mid = midpoint(self.costs);
        if m <= HELD_KARP_MAX_NODES && !self.costs.is_empty() {
            let (tour, _) = held_karp(m, &mid)?;
            self.offer(tour.to_solution());
        }
        let mut path = vec![0];
        let mut visited = vec![false; m];
        visited[0] = true;
        self.tsp_node(m, &mid, &mut path, &mut visited)
    }

    fn tsp_node(&mut self, m: usize, mid: &[f64], path: &mut Vec<usize>, visited: &mut [bool]) -> Result<()> {
        self.tick()?;
        let bound = tsp_path_bound(m, self.costs, path);
        if path.len() == m {
            let tour = Tour::new(path.clone()).expect("path is a permutation");
            self.offer(tour.to_solution());
            return Ok(());
        }
        if self.prunes(bound) {
            return Ok(());
        }
        let last = *path.last().unwrap();
        let mut next: Vec<usize> = (0..m).filter(|&v| !visited[v]).collect();
        next.sort_by(|&a, &b| mid[last * m + a].total_cmp(&mid[last * m + b]).then(a.cmp(&b)));
        for v in next {
            if self.prunes(bound) {
                break;
            }
            path.push(v);
            visited[v] = true;
            let res = self.tsp_node(m, mid, path, visited);
            visited[v] = false;
            path.pop();
            res?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{hardened_two_scenario_selection, two_scenario_selection};
    use crate::instance::sample_ru;

    fn items(x: &Solution) -> Vec<usize> {
        x.ones().map(|k| k + 1).collect()
    }

    fn enumeration_optimum(inst: &Instance) -> f64 {
        sorted_objective_vector(inst).unwrap()[0]
    }

    #[test]
    fn robust_values_of_fixture_solutions() {
        let inst = two_scenario_selection();
        assert_eq!(robust_value(inst.costs(), &Solution::from_indices(4, [0, 3])), 8.0);
        assert_eq!(robust_value(inst.costs(), &Solution::from_indices(4, [1, 3])), 11.0);
        let hard = hardened_two_scenario_selection();
        assert_eq!(robust_value(hard.costs(), &Solution::from_indices(4, [0, 3])), 10.0);
    }

    #[test]
    fn exact_on_fixtures() {
        let r = solve_exact(&two_scenario_selection(), None).unwrap();
        assert_eq!((items(&r.x), r.value), (vec![1, 4], 8.0));
        assert!(r.proven_optimal && r.nodes >= 1);
        let r = solve_exact(&hardened_two_scenario_selection(), None).unwrap();
        assert_eq!((items(&r.x), r.value), (vec![1, 4], 10.0));
    }

    #[test]
    fn sorted_vectors_of_fixtures() {
        assert_eq!(
            sorted_objective_vector(&two_scenario_selection()).unwrap(),
            vec![8.0, 11.0, 11.0, 11.0, 11.0, 13.0]
        );
        assert_eq!(
            sorted_objective_vector(&hardened_two_scenario_selection()).unwrap(),
            vec![10.0, 11.0, 11.0, 11.0, 12.0, 13.0]
        );
        let single = Instance::new(ProblemKind::Selection { n: 3, p: 1 }, 10.0, vec![vec![1.0, 2.0, 3.0]]).unwrap();
        assert_eq!(sorted_objective_vector(&single).unwrap(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn single_scenario_matches_nominal() {
        for seed in 0..20 {
            for kind in [ProblemKind::Selection { n: 9, p: 4 }, ProblemKind::Tsp { m: 6 }] {
                let inst = sample_ru(kind, 1, 100.0, seed, false).unwrap();
                let (_, v) = problem_for(kind).solve_nominal(&inst.costs()[0]).unwrap();
                assert_eq!(solve_exact(&inst, None).unwrap().value, v);
            }
        }
    }

    #[test]
    fn exact_matches_enumeration_small() {
        for seed in 0..25 {
            let sel = sample_ru(ProblemKind::Selection { n: 8, p: 4 }, 4, 100.0, seed, false).unwrap();
            assert_eq!(solve_exact(&sel, None).unwrap().value, enumeration_optimum(&sel));
            let tsp = sample_ru(ProblemKind::Tsp { m: 5 }, 3, 100.0, seed, false).unwrap();
            assert_eq!(solve_exact(&tsp, None).unwrap().value, enumeration_optimum(&tsp));
        }
    }

    /// Every completion of a prefix costs at least the prefix bound.
    #[test]
    fn tsp_bound_is_valid_below_every_prefix() {
        let m = 6;
        let tours: Vec<Tour> = crate::problems::Tsp::new(m)
            .enumerate_feasible()
            .unwrap()
            .map(|x| Tour::from_solution(m, &x).unwrap())
            .collect();
        for seed in 0..10 {
            let inst = sample_ru(ProblemKind::Tsp { m }, 3, 100.0, seed, false).unwrap();
            for tour in &tours {
                let v = robust_value(inst.costs(), &tour.to_solution());
                for len in 1..=m {
                    let b = tsp_path_bound(m, inst.costs(), &tour.order()[..len]);
                    assert!(b <= v + 1e-9, "prefix {:?}: bound {b} > {v}", &tour.order()[..len]);
                }
                assert!((tsp_path_bound(m, inst.costs(), tour.order()) - v).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn heuristic_brackets_exact() {
        for seed in 0..30 {
            for kind in [ProblemKind::Selection { n: 10, p: 5 }, ProblemKind::Tsp { m: 6 }] {
                let inst = sample_ru(kind, 3, 100.0, seed, false).unwrap();
                let h = solve_heuristic(&inst).unwrap();
                let e = solve_exact(&inst, None).unwrap();
                assert!(!h.proven_optimal);
                assert!(problem_for(kind).is_feasible(&h.x));
                assert!(h.lower_bound <= e.value + 1e-7 && e.value <= h.value);
            }
        }
    }

    #[test]
    fn heuristic_single_scenario_is_optimal() {
        let inst = sample_ru(ProblemKind::Selection { n: 12, p: 5 }, 1, 100.0, 3, false).unwrap();
        assert_eq!(solve_heuristic(&inst).unwrap().value, solve_exact(&inst, None).unwrap().value);
    }

    #[test]
    fn node_counts_are_reproducible() {
        let inst = sample_ru(ProblemKind::Selection { n: 14, p: 7 }, 8, 100.0, 9, false).unwrap();
        let a = solve_exact(&inst, None).unwrap();
        let b = solve_exact(&inst, None).unwrap();
        assert_eq!((a.nodes, a.lp_solves, &a.x), (b.nodes, b.lp_solves, &b.x));
    }

    #[test]
    fn zero_time_limit_reports_incumbent() {
        let inst = sample_ru(ProblemKind::Selection { n: 20, p: 10 }, 10, 100.0, 1, false).unwrap();
        match solve_exact(&inst, Some(Duration::ZERO)) {
            Err(Error::RobustTimeLimit(r)) => {
                assert!(!r.proven_optimal);
                assert_eq!(r.value, robust_value(inst.costs(), &r.x));
            }
            other => panic!("expected a time-limit error, got {other:?}"),
        }
    }
}
