//! The outer "maximize the robust objective" problem.
//!
//! [`mro_generate`] alternates between a master problem over a finite pool of
//! candidate solutions, which picks scenarios from the uncertainty boxes, and
//! a robust solve on those scenarios, which either certifies them or adds a
//! new candidate to the pool.

use std::collections::HashSet;
use std::time::Duration;

use serde::Serialize;

use crate::colgen::colgen_master;
use crate::deadline::Deadline;
use crate::error::{Error, Result};
use crate::instance::{Instance, ProblemKind};
use crate::lp::{solve_lp, LpModel, Relation, Sense};
use crate::problems::Solution;
use crate::robust::{robust_value, solve_exact_costs, solve_heuristic_costs, RobustResult};
use crate::uncertainty::{build_uncertainty, UncertaintyBox};

/// Assignment counts up to this size are enumerated instead of searched.
const ENUMERATION_LIMIT: f64 = 1e4;
const IMPROVE_TOL: f64 = 1e-9;
const GAP_TOL: f64 = 1e-6;
const ALTERNATING_MAX_ROUNDS: usize = 10_000;

/// Distinct candidate solutions in insertion order.
#[derive(Debug, Clone, Default)]
pub struct CandidatePool {
    items: Vec<Solution>,
    seen: HashSet<Solution>,
}

impl CandidatePool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_solutions(xs: impl IntoIterator<Item = Solution>) -> Self {
        let mut pool = Self::new();
        for x in xs {
            pool.insert(x);
        }
        pool
    }

    /// Adds `x` unless it is already present; returns whether it was new.
    pub fn insert(&mut self, x: Solution) -> bool {
        if self.seen.contains(&x) {
            return false;
        }
        self.seen.insert(x.clone());
        self.items.push(x);
        true
    }

    pub fn contains(&self, x: &Solution) -> bool {
        self.seen.contains(x)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn solutions(&self) -> &[Solution] {
        &self.items
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MasterSolution {
    /// One cost vector per scenario, each inside its box.
    pub scenarios: Vec<Vec<f64>>,
    /// `assignment[j]` is the scenario serving candidate `j`.
    pub assignment: Vec<usize>,
    pub objective: f64,
    /// Objective after each improving step of the solver.
    pub trace: Vec<f64>,
}

/// For each candidate the scenario maximizing its cost, lowest index on ties,
/// together with `min_j max_i c^i x^j`.
pub fn best_assignment(pool: &CandidatePool, scenarios: &[Vec<f64>]) -> (Vec<usize>, f64) {
    let mut t = f64::INFINITY;
    let assignment = pool
        .solutions()
        .iter()
        .map(|x| {
            let mut best = (0, f64::NEG_INFINITY);
            for (i, c) in scenarios.iter().enumerate() {
                let v = x.dot(c);
                if v > best.1 {
                    best = (i, v);
                }
            }
            t = t.min(best.1);
            best.0
        })
        .collect();
    (assignment, t)
}

/// Clamps every coefficient into its box; fixed coefficients become exact.
pub(crate) fn snap(boxes: &[UncertaintyBox], scenarios: &mut [Vec<f64>]) {
    for (b, c) in boxes.iter().zip(scenarios.iter_mut()) {
        b.clamp(c);
    }
}

/// `max t` s.t. `t <= c^{a(j)} x^j` for every candidate with an assigned
/// scenario, each used `c^i` in its box. Unused scenarios are copied from
/// `base`. Returns `None` for the objective when nothing is assigned.
fn assignment_lp(
    pool: &CandidatePool,
    boxes: &[UncertaintyBox],
    assignment: &[Option<usize>],
    base: &[Vec<f64>],
) -> Result<(Option<f64>, Vec<Vec<f64>>)> {
    let mut scenarios = base.to_vec();
    if assignment.iter().all(Option::is_none) {
        return Ok((None, scenarios));
    }
    let mut lp = LpModel::new(Sense::Maximize);
    let t = lp.add_free_var(1.0);
    let mut vars: Vec<Option<Vec<usize>>> = vec![None; boxes.len()];
    for &i in assignment.iter().flatten() {
        if vars[i].is_none() {
            vars[i] = Some(boxes[i].add_to_model(&mut lp));
        }
    }
    for (x, a) in pool.solutions().iter().zip(assignment) {
        if let Some(i) = a {
            let cv = vars[*i].as_ref().unwrap();
            let mut row = vec![(t, 1.0)];
            row.extend(x.ones().map(|k| (cv[k], -1.0)));
            lp.add_row(row, Relation::Le, 0.0);
        }
    }
    let out = solve_lp(&lp)?.into_optimal()?;
    for (i, v) in vars.iter().enumerate() {
        if let Some(v) = v {
            scenarios[i] = v.iter().map(|&var| out.primal[var]).collect();
        }
    }
    snap(boxes, &mut scenarios);
    Ok((Some(out.objective), scenarios))
}

fn finish(pool: &CandidatePool, scenarios: Vec<Vec<f64>>, trace: Vec<f64>) -> MasterSolution {
    let (assignment, objective) = best_assignment(pool, &scenarios);
    MasterSolution {
        scenarios,
        assignment,
        objective,
        trace,
    }
}

/// Alternating heuristic for the master problem: assign every candidate its
/// worst scenario, re-optimize the scenarios for that assignment, repeat while
/// the objective improves.
pub fn master_solve_alternating(
    pool: &CandidatePool,
    boxes: &[UncertaintyBox],
    init: &[Vec<f64>],
) -> Result<MasterSolution> {
    assert!(!pool.is_empty(), "master problem needs a candidate");
    let mut scenarios = init.to_vec();
    let (mut assignment, mut z) = best_assignment(pool, &scenarios);
    let mut trace = vec![z];
    for _ in 0..ALTERNATING_MAX_ROUNDS {
        let fixed: Vec<Option<usize>> = assignment.iter().map(|&i| Some(i)).collect();
        let (value, next) = assignment_lp(pool, boxes, &fixed, &scenarios)?;
        if value.unwrap() <= z + IMPROVE_TOL {
            break;
        }
        let (a, z_next) = best_assignment(pool, &next);
        if z_next <= z + IMPROVE_TOL {
            break;
        }
        scenarios = next;
        assignment = a;
        z = z_next;
        trace.push(z);
    }
    Ok(finish(pool, scenarios, trace))
}

/// Globally optimal master solution. Small assignment spaces are enumerated;
/// larger ones are searched depth-first over candidates, bounding each node by
/// the LP in which the unassigned candidates are dropped. `init` fills the
/// scenarios no candidate uses and seeds the alternating heuristic that
/// provides the first incumbent.
pub fn master_solve_exact(
    pool: &CandidatePool,
    boxes: &[UncertaintyBox],
    init: &[Vec<f64>],
    deadline: Deadline,
) -> Result<MasterSolution> {
    let seed = master_solve_alternating(pool, boxes, init)?;
    let mut search = MasterSearch {
        pool,
        boxes,
        init,
        deadline,
        best: (seed.objective, seed.scenarios),
        trace: vec![seed.objective],
    };
    let (k, n) = (pool.len(), boxes.len());
    let finished = if (n as f64).powi(k as i32) <= ENUMERATION_LIMIT {
        search.enumerate(k, n)
    } else {
        let (caps, order) = search.caps();
        let mut partial = vec![None; k];
        search.branch(&mut partial, &caps, &order)
    };
    let MasterSearch { best, trace, .. } = search;
    let sol = finish(pool, best.1, trace);
    match finished {
        Ok(()) => Ok(sol),
        Err(Error::TimeLimitNoIncumbent) => Err(Error::MasterTimeLimit(Box::new(sol))),
        Err(e) => Err(e),
    }
}

struct MasterSearch<'a> {
    pool: &'a CandidatePool,
    boxes: &'a [UncertaintyBox],
    init: &'a [Vec<f64>],
    deadline: Deadline,
    best: (f64, Vec<Vec<f64>>),
    trace: Vec<f64>,
}

impl MasterSearch<'_> {
    fn check_time(&self) -> Result<()> {
        if self.deadline.expired() {
            Err(Error::TimeLimitNoIncumbent)
        } else {
            Ok(())
        }
    }

    fn offer(&mut self, value: f64, scenarios: Vec<Vec<f64>>) {
        if value > self.best.0 + IMPROVE_TOL {
            self.best = (value, scenarios);
            self.trace.push(value);
        }
    }

    fn enumerate(&mut self, k: usize, n: usize) -> Result<()> {
        let mut digits = vec![0usize; k];
        loop {
            self.check_time()?;
            let a: Vec<Option<usize>> = digits.iter().map(|&i| Some(i)).collect();
            let (v, sc) = assignment_lp(self.pool, self.boxes, &a, self.init)?;
            self.offer(v.unwrap(), sc);
            // Odometer increment, last candidate fastest.
            let Some(pos) = (0..k).rev().find(|&j| digits[j] + 1 < n) else {
                return Ok(());
            };
            digits[pos] += 1;
            digits[pos + 1..].iter_mut().for_each(|d| *d = 0);
        }
    }

    fn branch(&mut self, partial: &mut [Option<usize>], caps: &[Vec<f64>], order: &[Vec<usize>]) -> Result<()> {
        self.check_time()?;
        let (bound, scenarios) = assignment_lp(self.pool, self.boxes, partial, self.init)?;
        let open: Vec<usize> = (0..partial.len()).filter(|&j| partial[j].is_none()).collect();
        // No scenario can push an open candidate above its cap.
        let cap = open
            .iter()
            .map(|&j| caps[j].iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .fold(f64::INFINITY, f64::min);
        let bound = bound.map_or(cap, |b| b.min(cap));
        if bound <= self.best.0 + IMPROVE_TOL {
            return Ok(());
        }
        let Some(&j) = open.first() else {
            self.offer(bound, scenarios);
            return Ok(());
        };
        // If the node's scenarios already serve every open candidate at the
        // bound, the worst-scenario assignment completes it optimally.
        if bound.is_finite() && open.iter().all(|&j| robust_value(&scenarios, &self.pool.solutions()[j]) >= bound - IMPROVE_TOL) {
            self.offer(bound, scenarios);
            return Ok(());
        }
        for &i in &order[j] {
            if caps[j][i] <= self.best.0 + IMPROVE_TOL {
                continue;
            }
            partial[j] = Some(i);
            let res = self.branch(partial, caps, order);
            partial[j] = None;
            res?;
        }
        Ok(())
    }

    /// `caps[j][i]`: the largest cost candidate `j` can have under box `i`.
    /// `order[j]`: scenarios by decreasing cap, lowest index on ties.
    fn caps(&self) -> (Vec<Vec<f64>>, Vec<Vec<usize>>) {
        let caps: Vec<Vec<f64>> = self
            .pool
            .solutions()
            .iter()
            .map(|x| self.boxes.iter().map(|b| box_cap(b, x)).collect())
            .collect();
        let order = caps
            .iter()
            .map(|c| {
                let mut idx: Vec<usize> = (0..c.len()).collect();
                idx.sort_by(|&a, &b| c[b].total_cmp(&c[a]).then(a.cmp(&b)));
                idx
            })
            .collect();
        (caps, order)
    }
}

/// `max c.x` over the box: lower bounds everywhere, then as much of the
/// remaining sum as the support of `x` can absorb.
pub fn box_cap(b: &UncertaintyBox, x: &Solution) -> f64 {
    let spare = b.target_sum() - b.lower().iter().sum::<f64>();
    let base: f64 = x.ones().map(|k| b.lower()[k]).sum();
    let room: f64 = x.ones().map(|k| b.upper()[k] - b.lower()[k]).sum();
    base + spare.max(0.0).min(room)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MasterKind {
    Exact,
    Alternating,
    Colgen,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum InnerKind {
    Exact,
    Heuristic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    TimeLimit,
    RepeatCandidate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MroIteration {
    /// Master objective. A bound on the MRO optimum unless the master is the
    /// alternating heuristic.
    pub upper_bound: f64,
    /// Robust value of the master's scenarios as reported by the inner solver.
    pub lower_bound: f64,
    /// Best inner value seen so far.
    pub best_lower_bound: f64,
    /// Scenarios the run would output if it stopped here.
    pub incumbent: Vec<Vec<f64>>,
    /// Inner solution, as 0-based indices of its ones.
    pub new_x: Vec<usize>,
    /// Master solver's own progress (alternating rounds or RMP values).
    pub master_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MroRun {
    pub master: MasterKind,
    pub inner: InnerKind,
    pub budget: f64,
    /// Inner value on the seed scenarios.
    pub seed_value: f64,
    pub iterations: Vec<MroIteration>,
    pub stop: StopReason,
    pub pool_size: usize,
    pub wall_time: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct MroOptions {
    pub master: MasterKind,
    pub inner: InnerKind,
    pub time_limit: Option<Duration>,
}

fn inner_solve(kind: ProblemKind, inner: InnerKind, costs: &[Vec<f64>], deadline: Deadline) -> Result<RobustResult> {
    match inner {
        InnerKind::Exact => solve_exact_costs(kind, costs, deadline),
        InnerKind::Heuristic => solve_heuristic_costs(kind, costs),
    }
}

/// Hardens `instance` within budget `budget`. The time limit is checked
/// between iterations only; a limit hit inside a master or inner solve ends
/// the run with the best scenarios found so far.
pub fn mro_generate(instance: &Instance, budget: f64, opts: MroOptions) -> Result<(Instance, MroRun)> {
    let deadline = Deadline::new(opts.time_limit);
    let boxes = build_uncertainty(instance, budget)?;
    let kind = instance.kind();
    let seed_costs = instance.costs().to_vec();

    let seed = match inner_solve(kind, opts.inner, &seed_costs, deadline) {
        Ok(r) => r,
        Err(Error::RobustTimeLimit(r)) => *r,
        Err(e) => return Err(e),
    };
    let mut pool = CandidatePool::new();
    pool.insert(seed.x.clone());
    let mut best = (seed.value, seed_costs.clone());
    let mut run = MroRun {
        master: opts.master,
        inner: opts.inner,
        budget,
        seed_value: seed.value,
        iterations: Vec::new(),
        stop: StopReason::TimeLimit,
        pool_size: 1,
        wall_time: 0.0,
    };

    loop {
        if deadline.expired() {
            run.stop = StopReason::TimeLimit;
            break;
        }
        let mut timed_out = false;
        let master = match opts.master {
            MasterKind::Exact => match master_solve_exact(&pool, &boxes, &seed_costs, deadline) {
                Err(Error::MasterTimeLimit(m)) => {
                    timed_out = true;
                    *m
                }
                other => other?,
            },
            MasterKind::Alternating => master_solve_alternating(&pool, &boxes, &seed_costs)?,
            MasterKind::Colgen => colgen_master(&pool, &boxes)?,
        };
        let inner = match inner_solve(kind, opts.inner, &master.scenarios, deadline) {
            Ok(r) => r,
            Err(Error::RobustTimeLimit(_)) => {
                run.stop = StopReason::TimeLimit;
                break;
            }
            Err(e) => return Err(e),
        };
        match opts.inner {
            InnerKind::Exact => {
                if inner.value > best.0 + IMPROVE_TOL {
                    best = (inner.value, master.scenarios.clone());
                }
            }
            // Heuristic values are not lower bounds; keep the latest scenarios.
            InnerKind::Heuristic => best = (inner.value, master.scenarios.clone()),
        }
        run.iterations.push(MroIteration {
            upper_bound: master.objective,
            lower_bound: inner.value,
            best_lower_bound: best.0,
            incumbent: best.1.clone(),
            new_x: inner.x.ones().collect(),
            master_trace: master.trace.clone(),
        });
        if timed_out {
            run.stop = StopReason::TimeLimit;
            break;
        }
        if opts.inner == InnerKind::Exact && master.objective - best.0 <= GAP_TOL {
            run.stop = StopReason::Converged;
            break;
        }
        if !pool.insert(inner.x) {
            run.stop = StopReason::RepeatCandidate;
            break;
        }
    }
    run.pool_size = pool.len();
    run.wall_time = deadline.elapsed();
    let hardened = instance.with_costs(best.1)?;
    Ok((hardened, run))
}

/// Exact robust value of every candidate under `scenarios`, minimized: the
/// master objective of a given scenario set.
pub fn pool_value(pool: &CandidatePool, scenarios: &[Vec<f64>]) -> f64 {
    pool.solutions()
        .iter()
        .map(|x| robust_value(scenarios, x))
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{hitting_set_master, two_scenario_selection};
    use crate::instance::sample_ru;
    use crate::problems::problem_for;
    use crate::rng::Rng;

    fn fixture_boxes() -> (Instance, Vec<UncertaintyBox>) {
        let inst = two_scenario_selection();
        let boxes = build_uncertainty(&inst, 1.0).unwrap();
        (inst, boxes)
    }

    #[test]
    fn pool_rejects_duplicates() {
        let mut pool = CandidatePool::new();
        assert!(pool.insert(Solution::from_indices(4, [0, 3])));
        assert!(!pool.insert(Solution::from_indices(4, [0, 3])));
        assert!(pool.insert(Solution::from_indices(4, [0, 1])));
        assert_eq!(pool.len(), 2);
    }

    #[test]
    fn single_candidate_master() {
        let (inst, boxes) = fixture_boxes();
        let pool = CandidatePool::from_solutions([Solution::from_indices(4, [0, 3])]);
        let exact = master_solve_exact(&pool, &boxes, inst.costs(), Deadline::none()).unwrap();
        assert!((exact.objective - 10.0).abs() < 1e-9);
        let alt = master_solve_alternating(&pool, &boxes, inst.costs()).unwrap();
        assert!((alt.objective - 10.0).abs() < 1e-9);
        assert_eq!(alt.trace.len(), 2);
        for (b, c) in boxes.iter().zip(&exact.scenarios) {
            assert!(b.contains(c, 1e-7));
        }
    }

    #[test]
    fn zero_budget_master_is_static() {
        let inst = two_scenario_selection();
        let boxes = build_uncertainty(&inst, 0.0).unwrap();
        let pool = CandidatePool::from_solutions(problem_for(inst.kind()).enumerate_feasible().unwrap());
        let want = pool_value(&pool, inst.costs());
        let exact = master_solve_exact(&pool, &boxes, inst.costs(), Deadline::none()).unwrap();
        assert_eq!(exact.objective, want);
        let alt = master_solve_alternating(&pool, &boxes, inst.costs()).unwrap();
        assert_eq!((alt.objective, alt.trace.len()), (want, 1));
        assert_eq!(alt.scenarios, inst.costs());
    }

    #[test]
    fn hitting_set_master_reaches_one() {
        let (inst, xs) = hitting_set_master();
        let boxes = build_uncertainty(&inst, 1.0).unwrap();
        let pool = CandidatePool::from_solutions(xs);
        let m = master_solve_exact(&pool, &boxes, inst.costs(), Deadline::none()).unwrap();
        assert!((m.objective - 1.0).abs() < 1e-6, "{}", m.objective);
    }

    fn random_pool(rng: &mut Rng, n: usize, p: usize, k: usize) -> CandidatePool {
        let all: Vec<Solution> = problem_for(ProblemKind::Selection { n, p }).enumerate_feasible().unwrap().collect();
        let mut pool = CandidatePool::new();
        while pool.len() < k {
            pool.insert(all[rng.uniform_inclusive(all.len() as u64 - 1) as usize].clone());
        }
        pool
    }

    /// Brute force over assignments agrees with the searched master, and the
    /// heuristic never beats it.
    #[test]
    fn branch_and_bound_matches_enumeration() {
        let mut rng = Rng::new(11);
        for trial in 0..8 {
            let inst = sample_ru(ProblemKind::Selection { n: 7, p: 3 }, 3, 20.0, trial, false).unwrap();
            let boxes = build_uncertainty(&inst, 3.0).unwrap();
            let pool = random_pool(&mut rng, 7, 3, 9);
            let mut s = MasterSearch {
                pool: &pool,
                boxes: &boxes,
                init: inst.costs(),
                deadline: Deadline::none(),
                best: (f64::NEG_INFINITY, inst.costs().to_vec()),
                trace: Vec::new(),
            };
            s.enumerate(pool.len(), boxes.len()).unwrap();
            let brute = s.best.0;
            let searched = master_solve_exact(&pool, &boxes, inst.costs(), Deadline::none()).unwrap();
            assert!((searched.objective - brute).abs() < 1e-6, "{} vs {brute}", searched.objective);
            let alt = master_solve_alternating(&pool, &boxes, inst.costs()).unwrap();
            assert!(alt.objective <= brute + 1e-6);
            assert!(alt.trace.windows(2).all(|w| w[1] >= w[0]));
        }
    }

    #[test]
    fn generate_on_fixture() {
        let inst = two_scenario_selection();
        let opts = MroOptions {
            master: MasterKind::Exact,
            inner: InnerKind::Exact,
            time_limit: None,
        };
        let (hard, run) = mro_generate(&inst, 1.0, opts).unwrap();
        assert_eq!(run.stop, StopReason::Converged);
        let v = crate::robust::solve_exact(&hard, None).unwrap().value;
        assert!(v >= 10.0 - 1e-6);
        let boxes = build_uncertainty(&inst, 1.0).unwrap();
        let full = CandidatePool::from_solutions(problem_for(inst.kind()).enumerate_feasible().unwrap());
        let oracle = master_solve_exact(&full, &boxes, inst.costs(), Deadline::none()).unwrap().objective;
        assert!((v - oracle).abs() < 1e-6, "{v} vs {oracle}");
    }

    #[test]
    fn zero_budget_generation_is_identity() {
        let inst = sample_ru(ProblemKind::Selection { n: 8, p: 4 }, 4, 100.0, 5, false).unwrap();
        for master in [MasterKind::Exact, MasterKind::Alternating, MasterKind::Colgen] {
            let opts = MroOptions {
                master,
                inner: InnerKind::Exact,
                time_limit: None,
            };
            let (hard, run) = mro_generate(&inst, 0.0, opts).unwrap();
            assert_eq!(hard.costs(), inst.costs());
            assert_eq!(run.iterations.len(), 1);
        }
    }
}
