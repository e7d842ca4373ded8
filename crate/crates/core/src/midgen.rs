//! Hardening by the midpoint proxy: choose scenarios so that a solution
//! optimal for the averaged scenario does as badly as possible in its worst
//! scenario. Selection only, since optimality of `x` for the midpoint is
//! written through the dual of the selection polyhedron.
//!
//! The bilinear terms are linearized and the binaries `x`, `λ` are branched on
//! depth-first. Products `t_i λ_i` only need their upper envelope (the
//! objective pushes them up), but the products `c_ik x_k` appear in the
//! strong-duality row, so they carry the full McCormick envelope; with only the
//! upper half the duality row could be met by an `x` that is not optimal for
//! the midpoint.

use std::time::Duration;

use serde::Serialize;

use crate::deadline::Deadline;
use crate::error::{Error, Result};
use crate::instance::{midpoint, Instance, ProblemKind};
use crate::lp::{solve_lp, LpModel, LpStatus, Relation, Sense};
use crate::mro::{mro_generate, snap, MroOptions};
use crate::problems::{NominalProblem, Selection, Solution};
use crate::robust::{robust_value, solve_exact};
use crate::uncertainty::{build_uncertainty, UncertaintyBox};

const INT_TOL: f64 = 1e-6;
const PRUNE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct MidResult {
    pub instance: Instance,
    /// `max_i c^i x̂`, recomputed on the output scenarios.
    pub value: f64,
    pub x_hat: Solution,
    pub nodes: u64,
    pub lp_solves: u64,
    pub wall_time: f64,
    pub proven_optimal: bool,
}

/// Variable layout of the linearized model.
struct MidModel {
    lp: LpModel,
    x: Vec<usize>,
    lambda: Vec<usize>,
    c: Vec<Vec<usize>>,
    // Only inspected by tests.
    #[allow(dead_code)]
    t: Vec<usize>,
    #[allow(dead_code)]
    q: Vec<usize>,
    #[allow(dead_code)]
    r: Vec<Vec<usize>>,
}

fn mid_build(boxes: &[UncertaintyBox], p: usize) -> MidModel {
    let n = boxes[0].len();
    let mut lp = LpModel::new(Sense::Maximize);
    let x: Vec<usize> = (0..n).map(|_| lp.add_var(0.0, 0.0, 1.0)).collect();
    let lambda: Vec<usize> = boxes.iter().map(|_| lp.add_var(0.0, 0.0, 1.0)).collect();
    let c: Vec<Vec<usize>> = boxes.iter().map(|b| b.add_to_model(&mut lp)).collect();
    let t: Vec<usize> = boxes.iter().map(|_| lp.add_var(0.0, 0.0, f64::INFINITY)).collect();
    let q: Vec<usize> = boxes
        .iter()
        .map(|b| lp.add_var(1.0, 0.0, b.upper().iter().sum()))
        .collect();
    let r: Vec<Vec<usize>> = boxes
        .iter()
        .map(|b| b.upper().iter().map(|&u| lp.add_var(0.0, 0.0, u)).collect())
        .collect();
    let alpha = lp.add_var(0.0, 0.0, f64::INFINITY);
    let beta: Vec<usize> = (0..n).map(|_| lp.add_var(0.0, 0.0, f64::INFINITY)).collect();

    for (i, b) in boxes.iter().enumerate() {
        let big_m: f64 = b.upper().iter().sum();
        lp.add_row(vec![(q[i], 1.0), (t[i], -1.0)], Relation::Le, 0.0);
        lp.add_row(vec![(q[i], 1.0), (lambda[i], -big_m)], Relation::Le, 0.0);
        let mut row = vec![(t[i], 1.0)];
        row.extend(r[i].iter().map(|&v| (v, -1.0)));
        lp.add_row(row, Relation::Eq, 0.0);
        for k in 0..n {
            let (lo, hi) = (b.lower()[k], b.upper()[k]);
            let (rv, cv, xv) = (r[i][k], c[i][k], x[k]);
            lp.add_row(vec![(rv, 1.0), (cv, -1.0), (xv, -lo)], Relation::Le, -lo);
            lp.add_row(vec![(rv, 1.0), (xv, -hi)], Relation::Le, 0.0);
            lp.add_row(vec![(rv, 1.0), (cv, -1.0), (xv, -hi)], Relation::Ge, -hi);
            lp.add_row(vec![(rv, 1.0), (xv, -lo)], Relation::Ge, 0.0);
        }
    }
    lp.add_row(lambda.iter().map(|&v| (v, 1.0)).collect(), Relation::Eq, 1.0);

    // Primal value of the summed scenario equals the dual value of the
    // selection LP, with dual feasibility below.
    let mut row: Vec<(usize, f64)> = r.iter().flatten().map(|&v| (v, 1.0)).collect();
    row.push((alpha, -(p as f64)));
    row.extend(beta.iter().map(|&v| (v, 1.0)));
    lp.add_row(row, Relation::Eq, 0.0);
    lp.add_row(x.iter().map(|&v| (v, 1.0)).collect(), Relation::Eq, p as f64);
    for k in 0..n {
        let mut row = vec![(alpha, 1.0), (beta[k], -1.0)];
        row.extend(c.iter().map(|ci| (ci[k], -1.0)));
        lp.add_row(row, Relation::Le, 0.0);
    }

    MidModel { lp, x, lambda, c, t, q, r }
}

struct Incumbent {
    costs: Vec<Vec<f64>>,
    x: Solution,
    value: f64,
}

struct MidSearch<'a> {
    model: MidModel,
    boxes: &'a [UncertaintyBox],
    problem: Selection,
    deadline: Deadline,
    best: Incumbent,
    nodes: u64,
    lp_solves: u64,
}

impl MidSearch<'_> {
    fn branch_var(&self, primal: &[f64]) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64, f64)> = None;
        for group in [&self.model.x, &self.model.lambda] {
            for &v in group.iter() {
                let val = primal[v];
                let frac = (val - val.floor()).min(val.ceil() - val);
                if frac > INT_TOL && best.is_none_or(|(_, _, f)| frac > f + 1e-12) {
                    best = Some((v, val, frac));
                }
            }
            if let Some((v, val, _)) = best {
                return Some((v, val));
            }
        }
        None
    }

    /// Checks an integral relaxation point and keeps it if it improves.
    fn consider(&mut self, primal: &[f64]) -> Result<()> {
        let x = Solution::new(self.model.x.iter().map(|&v| primal[v] > 0.5).collect());
        let mut costs: Vec<Vec<f64>> = self
            .model
            .c
            .iter()
            .map(|vs| vs.iter().map(|&v| primal[v]).collect())
            .collect();
        snap(self.boxes, &mut costs);
        let (_, opt) = self.problem.solve_nominal(&midpoint(&costs))?;
        if x.dot(&midpoint(&costs)) > opt + 1e-6 * (1.0 + opt.abs()) {
            return Err(Error::Numerical(format!(
                "relaxation solution is not optimal for the midpoint ({} > {opt})",
                x.dot(&midpoint(&costs))
            )));
        }
        let value = robust_value(&costs, &x);
        if value > self.best.value + PRUNE_TOL {
            self.best = Incumbent { costs, x, value };
        }
        Ok(())
    }

    fn node(&mut self) -> Result<()> {
        if self.deadline.expired() {
            return Err(Error::TimeLimitNoIncumbent);
        }
        self.nodes += 1;
        self.lp_solves += 1;
        let out = solve_lp(&self.model.lp)?;
        match out.status {
            LpStatus::Infeasible => return Ok(()),
            LpStatus::Unbounded => return Err(Error::LpStatus("unbounded")),
            LpStatus::Optimal => {}
        }
        if out.objective <= self.best.value + PRUNE_TOL {
            return Ok(());
        }
        let Some((v, val)) = self.branch_var(&out.primal) else {
            return self.consider(&out.primal);
        };
        let (lo, hi) = (self.model.lp.lower()[v], self.model.lp.upper()[v]);
        let children = if val >= 0.5 { [1.0, 0.0] } else { [0.0, 1.0] };
        for fix in children {
            self.model.lp.set_bounds(v, fix, fix);
            let res = self.node();
            self.model.lp.set_bounds(v, lo, hi);
            res?;
        }
        Ok(())
    }
}

/// Maximizes `max_i c^i x̂(c)` over scenarios in their boxes, where `x̂(c)` is
/// a selection optimal for the averaged scenario. On timeout the best point
/// found so far is returned inside [`Error::MidTimeLimit`].
pub fn mid_generate(instance: &Instance, budget: f64, time_limit: Option<Duration>) -> Result<MidResult> {
    let ProblemKind::Selection { n, p } = instance.kind() else {
        return Err(Error::Unsupported("the midpoint generator handles selection only".into()));
    };
    let deadline = Deadline::new(time_limit);
    let boxes = build_uncertainty(instance, budget)?;
    let problem = Selection::new(n, p);
    let seed = instance.costs().to_vec();
    let (x, _) = problem.solve_nominal(&midpoint(&seed))?;
    let value = robust_value(&seed, &x);
    let mut search = MidSearch {
        model: mid_build(&boxes, p),
        boxes: &boxes,
        problem,
        deadline,
        best: Incumbent { costs: seed, x, value },
        nodes: 0,
        lp_solves: 0,
    };
    let finished = search.node();
    let Incumbent { costs, x, value } = search.best;
    let result = MidResult {
        instance: instance.with_costs(costs)?,
        value,
        x_hat: x,
        nodes: search.nodes,
        lp_solves: search.lp_solves,
        wall_time: search.deadline.elapsed(),
        proven_optimal: finished.is_ok(),
    };
    match finished {
        Ok(()) => Ok(result),
        Err(Error::TimeLimitNoIncumbent) => Err(Error::MidTimeLimit(Box::new(result))),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MidQualityReport {
    pub budget: f64,
    pub original_value: f64,
    pub original_nodes: u64,
    pub mid_value: f64,
    pub mid_nodes: u64,
    pub mro_value: f64,
    pub mro_nodes: u64,
    pub mid_node_ratio: f64,
    pub mro_node_ratio: f64,
    pub mid_time: f64,
    pub mro_time: f64,
}

impl MidQualityReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Hardens `instance` by both the midpoint proxy and the iterative method and
/// compares the robust optima and node counts of the results.
pub fn mid_quality_report(instance: &Instance, budget: f64, mro: MroOptions) -> Result<MidQualityReport> {
    let original = solve_exact(instance, None)?;
    let mid = mid_generate(instance, budget, None)?;
    let mid_eval = solve_exact(&mid.instance, None)?;
    let (mro_instance, mro_run) = mro_generate(instance, budget, mro)?;
    let mro_eval = solve_exact(&mro_instance, None)?;
    Ok(MidQualityReport {
        budget,
        original_value: original.value,
        original_nodes: original.nodes,
        mid_value: mid_eval.value,
        mid_nodes: mid_eval.nodes,
        mro_value: mro_eval.value,
        mro_nodes: mro_eval.nodes,
        mid_node_ratio: mid_eval.nodes as f64 / original.nodes as f64,
        mro_node_ratio: mro_eval.nodes as f64 / original.nodes as f64,
        mid_time: mid.wall_time,
        mro_time: mro_run.wall_time,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::two_scenario_selection;
    use crate::instance::sample_ru;
    use crate::mro::{InnerKind, MasterKind};
    use crate::problems::problem_for;

    /// For every selection `x` and scenario `j`: maximize `c^j x` subject to
    /// `x` being no worse than any other selection on the summed scenario.
    fn oracle(inst: &Instance, budget: f64) -> f64 {
        let boxes = build_uncertainty(inst, budget).unwrap();
        let all: Vec<Solution> = problem_for(inst.kind()).enumerate_feasible().unwrap().collect();
        let mut best = f64::NEG_INFINITY;
        for x in &all {
            for j in 0..boxes.len() {
                let mut lp = LpModel::new(Sense::Maximize);
                let c: Vec<Vec<usize>> = boxes.iter().map(|b| b.add_to_model(&mut lp)).collect();
                for k in x.ones() {
                    lp.set_objective(c[j][k], 1.0);
                }
                for y in &all {
                    let mut row = Vec::new();
                    for ci in &c {
                        row.extend(x.ones().map(|k| (ci[k], 1.0)));
                        row.extend(y.ones().map(|k| (ci[k], -1.0)));
                    }
                    lp.add_row(row, Relation::Le, 0.0);
                }
                let out = solve_lp(&lp).unwrap();
                if out.status == LpStatus::Optimal {
                    best = best.max(out.objective);
                }
            }
        }
        best
    }

    fn check_output(inst: &Instance, budget: f64, res: &MidResult) {
        let boxes = build_uncertainty(inst, budget).unwrap();
        for (b, c) in boxes.iter().zip(res.instance.costs()) {
            assert!(b.contains(c, 1e-7));
        }
        let ProblemKind::Selection { n, p } = inst.kind() else { unreachable!() };
        let mid = res.instance.midpoint();
        let (_, opt) = Selection::new(n, p).solve_nominal(&mid).unwrap();
        assert!((res.x_hat.dot(&mid) - opt).abs() < 1e-6);
        assert!((robust_value(res.instance.costs(), &res.x_hat) - res.value).abs() < 1e-12);
    }

    #[test]
    fn zero_budget_returns_the_seed() {
        let inst = two_scenario_selection();
        let res = mid_generate(&inst, 0.0, None).unwrap();
        assert_eq!(res.instance.costs(), inst.costs());
        // Items {1,4} and {2,4} tie on the midpoint; the worse one counts.
        let mid = inst.midpoint();
        let (_, opt) = Selection::new(4, 2).solve_nominal(&mid).unwrap();
        let want = problem_for(inst.kind())
            .enumerate_feasible()
            .unwrap()
            .filter(|x| x.dot(&mid) <= opt + 1e-9)
            .map(|x| robust_value(inst.costs(), &x))
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!((res.value, want), (11.0, 11.0));
    }

    #[test]
    fn small_instance_matches_enumeration() {
        let inst = two_scenario_selection();
        let res = mid_generate(&inst, 1.0, None).unwrap();
        check_output(&inst, 1.0, &res);
        assert!(res.proven_optimal);
        assert!((res.value - oracle(&inst, 1.0)).abs() < 1e-6, "{}", res.value);
    }

    #[test]
    fn random_instances_match_enumeration() {
        for seed in 0..12u64 {
            let n = 4 + seed as usize % 3;
            let kind = ProblemKind::Selection { n, p: n / 2 };
            let inst = sample_ru(kind, 1 + seed as usize % 3, 20.0, seed, false).unwrap();
            let budget = [1.0, 2.5, 4.0][seed as usize % 3];
            let res = mid_generate(&inst, budget, None).unwrap();
            check_output(&inst, budget, &res);
            let want = oracle(&inst, budget);
            assert!((res.value - want).abs() < 1e-6, "seed {seed}: {} vs {want}", res.value);
        }
    }

    #[test]
    fn linearization_is_exact_at_binary_points() {
        let inst = sample_ru(ProblemKind::Selection { n: 5, p: 2 }, 2, 20.0, 3, false).unwrap();
        let boxes = build_uncertainty(&inst, 2.0).unwrap();
        let mut m = mid_build(&boxes, 2);
        let (x, _) = Selection::new(5, 2).solve_nominal(&inst.midpoint()).unwrap();
        for (&v, &bit) in m.x.iter().zip(x.bits()) {
            let fix = if bit { 1.0 } else { 0.0 };
            m.lp.set_bounds(v, fix, fix);
        }
        m.lp.set_bounds(m.lambda[1], 1.0, 1.0);
        let out = solve_lp(&m.lp).unwrap().into_optimal().unwrap();
        let pr = &out.primal;
        for i in 0..2 {
            let lam = pr[m.lambda[i]];
            assert!((pr[m.q[i]] - pr[m.t[i]] * lam).abs() < 1e-7);
            for k in 0..5 {
                assert!((pr[m.r[i][k]] - pr[m.c[i][k]] * pr[m.x[k]]).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn tsp_is_unsupported() {
        let inst = sample_ru(ProblemKind::Tsp { m: 4 }, 2, 10.0, 1, false).unwrap();
        assert!(matches!(mid_generate(&inst, 1.0, None), Err(Error::Unsupported(_))));
    }

    #[test]
    fn time_limit_keeps_an_incumbent() {
        let inst = sample_ru(ProblemKind::Selection { n: 12, p: 6 }, 6, 100.0, 9, false).unwrap();
        match mid_generate(&inst, 20.0, Some(Duration::ZERO)) {
            Err(Error::MidTimeLimit(res)) => {
                assert!(!res.proven_optimal);
                check_output(&inst, 20.0, &res);
            }
            other => panic!("expected a time-limit error, got {other:?}"),
        }
    }

    #[test]
    fn quality_report_on_small_instance() {
        let inst = two_scenario_selection();
        let opts = MroOptions {
            master: MasterKind::Exact,
            inner: InnerKind::Exact,
            time_limit: None,
        };
        let rep = mid_quality_report(&inst, 1.0, opts).unwrap();
        assert!(rep.mid_value >= 8.0 - 1e-6 && rep.mro_value >= 8.0 - 1e-6);
        let zero = mid_quality_report(&inst, 0.0, opts).unwrap();
        assert_eq!((zero.mid_node_ratio, zero.mro_node_ratio), (1.0, 1.0));
        assert!(rep.to_json().contains("\"mro_node_ratio\""));
    }
}
