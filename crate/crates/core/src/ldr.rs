//! Linear decision rules for selection.
//!
//! The worst-case scenario choice `lambda^i(x)` is restricted to affine maps
//! `lambda^i_0 + sum_k lambda^i_k x_k`. Dualizing the three "for all x"
//! families over the selection polytope gives one LP, except that the rule
//! coefficients multiply the scenario costs. The products are resolved by
//! alternating between an LP with the costs fixed and one with the rule fixed.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::instance::{Instance, ProblemKind};
use crate::lp::{solve_lp, LpModel, Relation, Sense};
use crate::mro::snap;
use crate::uncertainty::{build_uncertainty, UncertaintyBox};

/// Bounds on the free rule coefficients that keep every block LP bounded.
pub const SOFT_BOUND: f64 = 1e6;
const IMPROVE_TOL: f64 = 1e-9;

/// Row `row` gets `coeff * lambda_var * c_var`.
#[derive(Debug, Clone, Copy)]
pub struct Bilinear {
    pub row: usize,
    pub lambda: usize,
    pub c: usize,
    pub coeff: f64,
}

/// Row indices of the dualized system, grouped by family.
#[derive(Debug, Clone, Default)]
pub struct LdrRows {
    /// Dual constraints of the `x_k` columns of the inner minimization.
    pub item: Vec<usize>,
    /// Dual constraints of the `y_kl` product columns, index `k * n + l`.
    pub product: Vec<usize>,
    /// The rule sums to at most one.
    pub total: usize,
    pub total_item: Vec<usize>,
    /// Each rule component is nonnegative.
    pub nonneg: Vec<usize>,
    pub nonneg_item: Vec<usize>,
}

/// The LP with every bilinear entry removed and listed separately.
#[derive(Debug, Clone)]
pub struct LdrTemplate {
    pub lp: LpModel,
    pub bilinear: Vec<Bilinear>,
    /// `lambda[i][0]` is the constant term, `lambda[i][1 + k]` item `k`.
    pub lambda: Vec<Vec<usize>>,
    pub c: Vec<Vec<usize>>,
    pub rows: LdrRows,
}

pub fn ldr_build(instance: &Instance, boxes: &[UncertaintyBox]) -> Result<LdrTemplate> {
    let ProblemKind::Selection { n, p } = instance.kind() else {
        return Err(Error::Unsupported(
            "decision rules need a polyhedral description of the feasible set; only selection has one".into(),
        ));
    };
    let scen = boxes.len();
    let p = p as f64;
    let mut lp = LpModel::new(Sense::Maximize);
    let lambda: Vec<Vec<usize>> = (0..scen)
        .map(|_| (0..=n).map(|_| lp.add_var(0.0, -SOFT_BOUND, SOFT_BOUND)).collect())
        .collect();
    let xi: Vec<usize> = (0..n * n).map(|_| lp.add_var(0.0, 0.0, f64::INFINITY)).collect();
    let zeta: Vec<usize> = (0..n * n).map(|_| lp.add_var(-1.0, 0.0, f64::INFINITY)).collect();
    let theta: Vec<usize> = (0..n).map(|_| lp.add_var(-1.0, 0.0, f64::INFINITY)).collect();
    let eta = lp.add_free_var(p);
    let pi = lp.add_free_var(0.0);
    let rho: Vec<usize> = (0..n).map(|_| lp.add_var(0.0, 0.0, f64::INFINITY)).collect();
    let alpha: Vec<usize> = (0..scen).map(|_| lp.add_free_var(0.0)).collect();
    let beta: Vec<Vec<usize>> = (0..scen)
        .map(|_| (0..n).map(|_| lp.add_var(0.0, 0.0, f64::INFINITY)).collect())
        .collect();
    let c: Vec<Vec<usize>> = boxes.iter().map(|b| b.add_to_model(&mut lp)).collect();

    let mut rows = LdrRows::default();
    let mut bilinear = Vec::new();
    for k in 0..n {
        let mut row = Vec::new();
        for l in 0..n {
            row.extend([(xi[k * n + l], 1.0), (xi[l * n + k], 1.0), (zeta[k * n + l], -1.0), (zeta[l * n + k], -1.0)]);
        }
        row.extend([(eta, 1.0), (theta[k], -1.0)]);
        let r = lp.add_row(row, Relation::Le, 0.0);
        for i in 0..scen {
            bilinear.push(Bilinear { row: r, lambda: lambda[i][0], c: c[i][k], coeff: -1.0 });
        }
        rows.item.push(r);
    }
    for k in 0..n {
        for l in 0..n {
            let r = lp.add_row(vec![(xi[k * n + l], -2.0), (zeta[k * n + l], 1.0)], Relation::Le, 0.0);
            for i in 0..scen {
                bilinear.push(Bilinear { row: r, lambda: lambda[i][1 + l], c: c[i][k], coeff: -1.0 });
            }
            rows.product.push(r);
        }
    }
    let mut total: Vec<(usize, f64)> = lambda.iter().map(|li| (li[0], 1.0)).collect();
    total.push((pi, p));
    total.extend(rho.iter().map(|&r| (r, 1.0)));
    rows.total = lp.add_row(total, Relation::Le, 1.0);
    for k in 0..n {
        let mut row = vec![(pi, 1.0), (rho[k], 1.0)];
        row.extend(lambda.iter().map(|li| (li[1 + k], -1.0)));
        rows.total_item.push(lp.add_row(row, Relation::Ge, 0.0));
    }
    for i in 0..scen {
        let mut row = vec![(lambda[i][0], 1.0), (alpha[i], p)];
        row.extend(beta[i].iter().map(|&b| (b, -1.0)));
        rows.nonneg.push(lp.add_row(row, Relation::Ge, 0.0));
    }
    for i in 0..scen {
        for k in 0..n {
            let row = vec![(alpha[i], 1.0), (beta[i][k], -1.0), (lambda[i][1 + k], -1.0)];
            rows.nonneg_item.push(lp.add_row(row, Relation::Le, 0.0));
        }
    }
    Ok(LdrTemplate {
        lp,
        bilinear,
        lambda,
        c,
        rows,
    })
}

impl LdrTemplate {
    /// The LP in the rule and dual variables with the costs fixed.
    pub fn fix_c(&self, costs: &[Vec<f64>]) -> LpModel {
        let mut lp = self.lp.clone();
        for b in &self.bilinear {
            let (i, k) = self.locate_c(b.c);
            lp.push_coeff(b.row, b.lambda, b.coeff * costs[i][k]);
        }
        for (cv, ci) in self.c.iter().zip(costs) {
            for (&v, &val) in cv.iter().zip(ci) {
                lp.set_bounds(v, val, val);
            }
        }
        lp
    }

    /// The LP in the costs and dual variables with the rule fixed.
    pub fn fix_lambda(&self, rule: &[Vec<f64>]) -> LpModel {
        let mut lp = self.lp.clone();
        for b in &self.bilinear {
            let (i, l) = self.locate_lambda(b.lambda);
            lp.push_coeff(b.row, b.c, b.coeff * rule[i][l]);
        }
        for (lv, li) in self.lambda.iter().zip(rule) {
            for (&v, &val) in lv.iter().zip(li) {
                lp.set_bounds(v, val, val);
            }
        }
        lp
    }

    fn locate_c(&self, var: usize) -> (usize, usize) {
        let first = self.c[0][0];
        let n = self.c[0].len();
        ((var - first) / n, (var - first) % n)
    }

    /// Rule coefficients are the first variables of the model.
    fn locate_lambda(&self, var: usize) -> (usize, usize) {
        let m = self.lambda[0].len();
        (var / m, var % m)
    }

    fn read(&self, vars: &[Vec<usize>], primal: &[f64]) -> Vec<Vec<f64>> {
        vars.iter().map(|vs| vs.iter().map(|&v| primal[v]).collect()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LdrRun {
    /// Objective after every half-step, rule block first.
    pub trace: Vec<f64>,
    /// Objective of the returned rule and scenarios.
    pub t: f64,
    pub rounds: usize,
    /// `rule[i][0]` constant, `rule[i][1 + k]` item `k`.
    pub rule: Vec<Vec<f64>>,
    /// A block solution reached the soft bounds and was discarded.
    pub hit_soft_bound: bool,
}

fn touches_soft_bound(rule: &[Vec<f64>]) -> bool {
    rule.iter().flatten().any(|v| v.abs() >= SOFT_BOUND * (1.0 - 1e-9))
}

/// Hardens `instance` by block alternation on the decision-rule LP, starting
/// from the seed costs. Stops when a full round improves the objective by at
/// most 1e-9, or after `max_iters` rounds.
pub fn ldr_solve(instance: &Instance, budget: f64, max_iters: usize) -> Result<(Instance, LdrRun)> {
    let boxes = build_uncertainty(instance, budget)?;
    let template = ldr_build(instance, &boxes)?;
    let mut costs = instance.costs().to_vec();
    let scen = boxes.len();
    let n = instance.n();
    // Constant uniform rule, in force until the first rule block succeeds.
    let uniform: Vec<Vec<f64>> = (0..scen)
        .map(|_| {
            let mut r = vec![0.0; n + 1];
            r[0] = 1.0 / scen as f64;
            r
        })
        .collect();
    let mut rule = uniform.clone();
    let mut run = LdrRun {
        trace: Vec::new(),
        t: f64::NEG_INFINITY,
        rounds: 0,
        rule: rule.clone(),
        hit_soft_bound: false,
    };
    let c_block = |rule: &[Vec<f64>], run: &mut LdrRun| -> Result<Vec<Vec<f64>>> {
        let out = solve_lp(&template.fix_lambda(rule))?.into_optimal()?;
        let mut next = template.read(&template.c, &out.primal);
        snap(&boxes, &mut next);
        run.trace.push(out.objective);
        run.t = out.objective;
        run.rule = rule.to_vec();
        Ok(next)
    };
    for _ in 0..max_iters {
        let out = solve_lp(&template.fix_c(&costs))?.into_optimal()?;
        let next_rule = template.read(&template.lambda, &out.primal);
        if touches_soft_bound(&next_rule) {
            run.hit_soft_bound = true;
            break;
        }
        rule = next_rule;
        run.trace.push(out.objective);
        let before = run.t;
        costs = c_block(&rule, &mut run)?;
        run.rounds += 1;
        if run.t > before + IMPROVE_TOL {
            continue;
        }
        // Stalled. The rule block can tie onto a rule that is weaker in the
        // cost block than the uniform one; retry from there if it helps.
        let lp = template.fix_lambda(&uniform);
        let out = solve_lp(&lp)?.into_optimal()?;
        if out.objective <= run.t + IMPROVE_TOL {
            break;
        }
        costs = c_block(&uniform, &mut run)?;
    }
    if run.rounds == 0 {
        costs = c_block(&rule, &mut run)?;
    }
    Ok((instance.with_costs(costs)?, run))
}
