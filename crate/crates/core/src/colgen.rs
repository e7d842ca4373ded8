//! Column generation for the relaxed master problem.
//!
//! Each candidate `x^j` keeps its own copy of every scenario box. A column for
//! `j` is one cost vector `d <= c^i` drawn for one scenario `i`; the restricted
//! master mixes columns convexly and links them to shared scenario vectors
//! `c^i`. The relaxation is at least the exact master value.

use crate::error::{Error, Result};
use crate::lp::{solve_lp, LpModel, Relation, Sense};
use crate::mro::{best_assignment, snap, CandidatePool, MasterSolution};
use crate::problems::Solution;
use crate::uncertainty::UncertaintyBox;

pub const COLUMN_CAP: usize = 10_000;
const PRICE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub owner: usize,
    pub scenario: usize,
    /// Contribution `d_k` to scenario `scenario`; zero off the owner's support.
    pub d: Vec<f64>,
    /// The box point that generated `d`.
    pub cost: Vec<f64>,
}

/// Shadow prices of the restricted master. `pi[i][j][k]` is zero for items
/// outside candidate `j`, which have no linking row.
#[derive(Debug, Clone, PartialEq)]
pub struct RmpDuals {
    pub gamma: Vec<f64>,
    pub delta: Vec<f64>,
    pub pi: Vec<Vec<Vec<f64>>>,
}

impl RmpDuals {
    pub fn zeros(scenarios: usize, candidates: usize, n: usize) -> Self {
        Self {
            gamma: vec![0.0; candidates],
            delta: vec![0.0; candidates],
            pi: vec![vec![vec![0.0; n]; candidates]; scenarios],
        }
    }
}

#[derive(Debug, Clone)]
pub struct RmpSolution {
    pub value: f64,
    pub alpha: Vec<f64>,
    pub scenarios: Vec<Vec<f64>>,
    pub duals: RmpDuals,
}

/// `sum_k d_k (x_k gamma_j - pi_ijk) - delta_j`.
pub fn reduced_cost(col: &Column, x: &Solution, duals: &RmpDuals) -> f64 {
    let (i, j) = (col.scenario, col.owner);
    let mut rc = -duals.delta[j];
    for (k, &d) in col.d.iter().enumerate() {
        let xk = if x.bits()[k] { 1.0 } else { 0.0 };
        rc += d * (xk * duals.gamma[j] - duals.pi[i][j][k]);
    }
    rc
}

/// For every candidate, its worst scenario `i*` (judged at the box points of
/// [`centre`]) contributes two columns: the box's upper bounds on the
/// candidate's support, and the box point itself. The second column keeps the
/// first restricted master feasible.
pub fn initial_columns(pool: &CandidatePool, boxes: &[UncertaintyBox]) -> Vec<Column> {
    let centres: Vec<Vec<f64>> = boxes.iter().map(centre).collect();
    let (worst, _) = best_assignment(pool, &centres);
    let mut cols = Vec::new();
    for (j, (x, &i)) in pool.solutions().iter().zip(&worst).enumerate() {
        let upper = boxes[i].upper().to_vec();
        let on_support = |c: &[f64]| -> Vec<f64> { c.iter().zip(x.bits()).map(|(&v, &b)| if b { v } else { 0.0 }).collect() };
        cols.push(Column {
            owner: j,
            scenario: i,
            d: on_support(&upper),
            cost: upper.clone(),
        });
        let fallback = Column {
            owner: j,
            scenario: i,
            d: on_support(&centres[i]),
            cost: centres[i].clone(),
        };
        if fallback.d != cols.last().unwrap().d {
            cols.push(fallback);
        }
    }
    cols
}

/// A fixed point of the box: lower bounds raised left to right until the
/// target sum is met. Equals the seed costs for a fixed box.
fn centre(b: &UncertaintyBox) -> Vec<f64> {
    let mut c = b.lower().to_vec();
    let mut missing = b.target_sum() - c.iter().sum::<f64>();
    for (v, &u) in c.iter_mut().zip(b.upper()) {
        if missing <= 0.0 {
            break;
        }
        let step = (u - *v).min(missing);
        *v += step;
        missing -= step;
    }
    c
}

/// LP relaxation of the restricted master over `columns`.
pub fn rmp_solve(pool: &CandidatePool, columns: &[Column], boxes: &[UncertaintyBox]) -> Result<RmpSolution> {
    let (k_count, n_scen) = (pool.len(), boxes.len());
    let n = boxes.first().map_or(0, UncertaintyBox::len);
    let mut lp = LpModel::new(Sense::Maximize);
    let t = lp.add_free_var(1.0);
    let cvars: Vec<Vec<usize>> = boxes.iter().map(|b| b.add_to_model(&mut lp)).collect();
    let alpha: Vec<usize> = columns.iter().map(|_| lp.add_var(0.0, 0.0, f64::INFINITY)).collect();

    let mut gamma_rows = Vec::with_capacity(k_count);
    let mut delta_rows = Vec::with_capacity(k_count);
    for (j, x) in pool.solutions().iter().enumerate() {
        let mut row = vec![(t, 1.0)];
        let mut conv = Vec::new();
        for (col, &a) in columns.iter().zip(&alpha).filter(|(c, _)| c.owner == j) {
            row.push((a, -x.dot(&col.d)));
            conv.push((a, 1.0));
        }
        gamma_rows.push(lp.add_row(row, Relation::Le, 0.0));
        delta_rows.push(lp.add_row(conv, Relation::Eq, 1.0));
    }
    let mut pi_rows = vec![vec![vec![None; n]; k_count]; n_scen];
    for (i, cv) in cvars.iter().enumerate() {
        for (j, x) in pool.solutions().iter().enumerate() {
            for k in x.ones() {
                let mut row: Vec<(usize, f64)> = columns
                    .iter()
                    .zip(&alpha)
                    .filter(|(c, _)| c.owner == j && c.scenario == i && c.d[k] != 0.0)
                    .map(|(c, &a)| (a, c.d[k]))
                    .collect();
                row.push((cv[k], -1.0));
                pi_rows[i][j][k] = Some(lp.add_row(row, Relation::Le, 0.0));
            }
        }
    }

    let out = solve_lp(&lp)?;
    if !out.is_optimal() {
        return Err(Error::Numerical(format!("restricted master is {:?}", out.status)));
    }
    let mut scenarios: Vec<Vec<f64>> = cvars.iter().map(|cv| cv.iter().map(|&v| out.primal[v]).collect()).collect();
    snap(boxes, &mut scenarios);
    let pi = pi_rows
        .iter()
        .map(|per_j| {
            per_j
                .iter()
                .map(|per_k| per_k.iter().map(|r| r.map_or(0.0, |r| out.duals[r])).collect())
                .collect()
        })
        .collect();
    Ok(RmpSolution {
        value: out.objective,
        alpha: alpha.iter().map(|&a| out.primal[a]).collect(),
        scenarios,
        duals: RmpDuals {
            gamma: gamma_rows.iter().map(|&r| out.duals[r]).collect(),
            delta: delta_rows.iter().map(|&r| out.duals[r]).collect(),
            pi,
        },
    })
}

/// Most positive reduced-cost column for candidate `j`, one LP per scenario;
/// `None` unless it exceeds the pricing tolerance.
pub fn price(j: usize, x: &Solution, duals: &RmpDuals, boxes: &[UncertaintyBox]) -> Result<Option<(Column, f64)>> {
    let mut best: Option<(Column, f64)> = None;
    for (i, b) in boxes.iter().enumerate() {
        let mut lp = LpModel::new(Sense::Maximize);
        let cv = b.add_to_model(&mut lp);
        let support: Vec<usize> = x.ones().collect();
        let dv: Vec<usize> = support
            .iter()
            .map(|&k| lp.add_var(duals.gamma[j] - duals.pi[i][j][k], 0.0, f64::INFINITY))
            .collect();
        for (&k, &d) in support.iter().zip(&dv) {
            lp.add_row(vec![(d, 1.0), (cv[k], -1.0)], Relation::Le, 0.0);
        }
        let out = solve_lp(&lp)?.into_optimal()?;
        let rc = out.objective - duals.delta[j];
        if best.as_ref().is_none_or(|(_, r)| rc > *r) {
            let mut d = vec![0.0; x.len()];
            for (&k, &v) in support.iter().zip(&dv) {
                d[k] = out.primal[v];
            }
            let col = Column {
                owner: j,
                scenario: i,
                d,
                cost: cv.iter().map(|&v| out.primal[v]).collect(),
            };
            best = Some((col, rc));
        }
    }
    Ok(best.filter(|(_, rc)| *rc > PRICE_TOL))
}

/// Column generation to convergence. The returned objective is the final
/// restricted-master value and `trace` holds the value after every round.
pub fn colgen_master(pool: &CandidatePool, boxes: &[UncertaintyBox]) -> Result<MasterSolution> {
    assert!(!pool.is_empty(), "master problem needs a candidate");
    let mut columns = initial_columns(pool, boxes);
    let mut trace = Vec::new();
    loop {
        let rmp = rmp_solve(pool, &columns, boxes)?;
        trace.push(rmp.value);
        let mut added = false;
        for (j, x) in pool.solutions().iter().enumerate() {
            if let Some((col, _)) = price(j, x, &rmp.duals, boxes)? {
                if reduced_cost(&col, x, &rmp.duals) > PRICE_TOL && !columns.contains(&col) {
                    columns.push(col);
                    added = true;
                }
            }
        }
        if columns.len() > COLUMN_CAP {
            return Err(Error::ColumnCap(COLUMN_CAP));
        }
        if !added {
            let mut assignment = vec![0; pool.len()];
            let mut weight = vec![f64::NEG_INFINITY; pool.len()];
            for (col, &a) in columns.iter().zip(&rmp.alpha) {
                if a > weight[col.owner] {
                    weight[col.owner] = a;
                    assignment[col.owner] = col.scenario;
                }
            }
            return Ok(MasterSolution {
                scenarios: rmp.scenarios,
                assignment,
                objective: rmp.value,
                trace,
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deadline::Deadline;
    use crate::fixtures::{hitting_set_master, two_scenario_selection};
    use crate::instance::{sample_ru, ProblemKind};
    use crate::mro::{master_solve_exact, pool_value};
    use crate::uncertainty::build_uncertainty;

    #[test]
    fn zero_duals_price_nothing() {
        let (inst, xs) = hitting_set_master();
        let boxes = build_uncertainty(&inst, 1.0).unwrap();
        let duals = RmpDuals::zeros(2, xs.len(), 7);
        for (j, x) in xs.iter().enumerate() {
            assert!(price(j, x, &duals, &boxes).unwrap().is_none());
            for col in initial_columns(&CandidatePool::from_solutions(xs.clone()), &boxes) {
                assert_eq!(reduced_cost(&col, x, &duals), 0.0);
            }
        }
    }

    #[test]
    fn unit_gamma_pushes_mass_onto_support() {
        let inst = two_scenario_selection();
        let boxes = build_uncertainty(&inst, 1.0).unwrap();
        let x = Solution::from_indices(4, [0, 3]);
        let mut duals = RmpDuals::zeros(2, 1, 4);
        duals.gamma[0] = 1.0;
        let (col, rc) = price(0, &x, &duals, &boxes).unwrap().unwrap();
        // Scenario 2 can reach 5 + 5 on items 1 and 4; scenario 1 only 5 + 3.
        assert_eq!(col.scenario, 1);
        assert!((rc - 10.0).abs() < 1e-9);
        assert!((reduced_cost(&col, &x, &duals) - rc).abs() < 1e-9);
    }

    #[test]
    fn single_candidate_matches_exact_master() {
        let inst = two_scenario_selection();
        let boxes = build_uncertainty(&inst, 1.0).unwrap();
        let pool = CandidatePool::from_solutions([Solution::from_indices(4, [0, 3])]);
        let cg = colgen_master(&pool, &boxes).unwrap();
        let ex = master_solve_exact(&pool, &boxes, inst.costs(), Deadline::none()).unwrap();
        assert!((cg.objective - ex.objective).abs() < 1e-6);
    }

    #[test]
    fn hitting_set_relaxation_reaches_one() {
        let (inst, xs) = hitting_set_master();
        let boxes = build_uncertainty(&inst, 1.0).unwrap();
        let cg = colgen_master(&CandidatePool::from_solutions(xs), &boxes).unwrap();
        assert!(cg.objective >= 1.0 - 1e-6);
        assert!(cg.trace.windows(2).all(|w| w[1] >= w[0] - 1e-9));
    }

    #[test]
    fn zero_budget_value_is_static() {
        let inst = sample_ru(ProblemKind::Selection { n: 6, p: 3 }, 3, 100.0, 4, false).unwrap();
        let boxes = build_uncertainty(&inst, 0.0).unwrap();
        let pool = CandidatePool::from_solutions(
            crate::problems::problem_for(inst.kind()).enumerate_feasible().unwrap().take(5),
        );
        let cg = colgen_master(&pool, &boxes).unwrap();
        assert!((cg.objective - pool_value(&pool, inst.costs())).abs() < 1e-6);
    }

    /// The solver's own reduced costs agree with the closed form.
    #[test]
    fn reduced_costs_match_lp() {
        let inst = sample_ru(ProblemKind::Selection { n: 6, p: 3 }, 3, 30.0, 8, false).unwrap();
        let boxes = build_uncertainty(&inst, 4.0).unwrap();
        let pool = CandidatePool::from_solutions(
            crate::problems::problem_for(inst.kind()).enumerate_feasible().unwrap().step_by(4),
        );
        let cols = initial_columns(&pool, &boxes);
        let rmp = rmp_solve(&pool, &cols, &boxes).unwrap();
        for col in &cols {
            let rc = reduced_cost(col, &pool.solutions()[col.owner], &rmp.duals);
            assert!(rc <= 1e-7, "basis column with positive reduced cost {rc}");
        }
    }
}
