//! Dense bounded-variable primal simplex.
//!
//! Every linear program in the crate (scenario LPs, relaxations, restricted
//! master problems, decision-rule blocks, midpoint relaxations) goes through
//! [`solve_lp`]. Models are small, so the basis inverse is kept explicitly and
//! refreshed from scratch every few dozen pivots.

mod simplex;

pub use simplex::solve_lp;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone)]
pub struct Row {
    pub coeffs: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

#[derive(Debug, Clone)]
pub struct LpModel {
    sense: Sense,
    objective: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    rows: Vec<Row>,
}

impl LpModel {
    pub fn new(sense: Sense) -> Self {
        Self {
            sense,
            objective: Vec::new(),
            lower: Vec::new(),
            upper: Vec::new(),
            rows: Vec::new(),
        }
    }

    /// Adds a variable with bounds `[lower, upper]` (infinite allowed).
    pub fn add_var(&mut self, objective: f64, lower: f64, upper: f64) -> usize {
        self.objective.push(objective);
        self.lower.push(lower);
        self.upper.push(upper);
        self.objective.len() - 1
    }

    pub fn add_free_var(&mut self, objective: f64) -> usize {
        self.add_var(objective, f64::NEG_INFINITY, f64::INFINITY)
    }

    /// Adds a row; repeated column indices are summed.
    pub fn add_row(&mut self, coeffs: Vec<(usize, f64)>, relation: Relation, rhs: f64) -> usize {
        self.rows.push(Row { coeffs, relation, rhs });
        self.rows.len() - 1
    }

    /// Adds `coeff * x_var` to row `row`.
    pub fn push_coeff(&mut self, row: usize, var: usize, coeff: f64) {
        self.rows[row].coeffs.push((var, coeff));
    }

    pub fn set_objective(&mut self, var: usize, coeff: f64) {
        self.objective[var] = coeff;
    }

    pub fn set_bounds(&mut self, var: usize, lower: f64, upper: f64) {
        self.lower[var] = lower;
        self.upper[var] = upper;
    }

    pub fn sense(&self) -> Sense {
        self.sense
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        for (j, (&c, (&l, &u))) in self.objective.iter().zip(self.lower.iter().zip(&self.upper)).enumerate() {
            if !c.is_finite() {
                return Err(Error::Invariant(format!("objective coefficient of variable {j} is not finite")));
            }
            if l.is_nan() || u.is_nan() || l > u || l == f64::INFINITY || u == f64::NEG_INFINITY {
                return Err(Error::Invariant(format!("variable {j} has invalid bounds [{l}, {u}]")));
            }
        }
        for (i, row) in self.rows.iter().enumerate() {
            if !row.rhs.is_finite() {
                return Err(Error::Invariant(format!("row {i} has a non-finite right-hand side")));
            }
            for &(j, a) in &row.coeffs {
                if j >= n || !a.is_finite() {
                    return Err(Error::Invariant(format!("row {i} has an invalid entry ({j}, {a})")));
                }
            }
        }
        Ok(())
    }

    /// Row activities `a_i . x`.
    pub fn activities(&self, x: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.coeffs.iter().map(|&(j, a)| a * x[j]).sum())
            .collect()
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Result of [`solve_lp`].
///
/// Duals are shadow prices in the model's own sense: `duals[i]` is the rate of
/// change of the optimal objective per unit increase of row `i`'s right-hand
/// side. For a maximization, `<=` rows get nonnegative and `>=` rows
/// nonpositive multipliers; the signs flip for a minimization.
#[derive(Debug, Clone)]
pub struct LpOutcome {
    pub status: LpStatus,
    pub objective: f64,
    pub primal: Vec<f64>,
    pub duals: Vec<f64>,
    /// `c_j - duals . A_j` for every structural variable.
    pub reduced_costs: Vec<f64>,
    pub iterations: usize,
}

impl LpOutcome {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }

    /// Returns `self` if optimal, an error otherwise.
    pub fn into_optimal(self) -> Result<Self> {
        match self.status {
            LpStatus::Optimal => Ok(self),
            LpStatus::Infeasible => Err(Error::LpStatus("infeasible")),
            LpStatus::Unbounded => Err(Error::LpStatus("unbounded")),
        }
    }

    /// `b . y` plus the bound terms of the reduced costs.
    pub fn dual_objective(&self, model: &LpModel) -> f64 {
        let mut total: f64 = model.rows.iter().zip(&self.duals).map(|(r, y)| r.rhs * y).sum();
        let flip = if model.sense == Sense::Maximize { -1.0 } else { 1.0 };
        for (j, &d) in self.reduced_costs.iter().enumerate() {
            // In minimization terms a positive reduced cost prices the lower
            // bound and a negative one the upper bound.
            let dm = flip * d;
            if dm.abs() <= 1e-12 {
                continue;
            }
            let bound = if dm > 0.0 { model.lower[j] } else { model.upper[j] };
            // An infinite bound with a nonzero price is dual infeasible up to
            // round-off; fall back to the primal value.
            total += d * if bound.is_finite() { bound } else { self.primal[j] };
        }
        total
    }

    /// Checks primal feasibility, dual sign consistency and the duality gap at
    /// the stated tolerances. Returns a description of the first violation.
    pub fn certify(&self, model: &LpModel) -> std::result::Result<(), String> {
        if self.status != LpStatus::Optimal {
            return Err(format!("status is {:?}", self.status));
        }
        let rhs_norm = model.rows.iter().map(|r| r.rhs.abs()).fold(0.0, f64::max);
        let tol = 1e-7 * (1.0 + rhs_norm);
        for (j, &v) in self.primal.iter().enumerate() {
            if v < model.lower[j] - tol || v > model.upper[j] + tol {
                return Err(format!("variable {j} = {v} violates [{}, {}]", model.lower[j], model.upper[j]));
            }
        }
        for (i, (row, act)) in model.rows.iter().zip(model.activities(&self.primal)).enumerate() {
            let bad = match row.relation {
                Relation::Le => act > row.rhs + tol,
                Relation::Ge => act < row.rhs - tol,
                Relation::Eq => (act - row.rhs).abs() > tol,
            };
            if bad {
                return Err(format!("row {i} activity {act} violates {:?} {}", row.relation, row.rhs));
            }
        }
        let flip = if model.sense == Sense::Maximize { 1.0 } else { -1.0 };
        for (i, (row, &y)) in model.rows.iter().zip(&self.duals).enumerate() {
            // Shadow price sign: relaxing the row may only help.
            let s = flip * y;
            let bad = match row.relation {
                Relation::Le => s < -1e-7,
                Relation::Ge => s > 1e-7,
                Relation::Eq => false,
            };
            if bad {
                return Err(format!("dual {y} of {:?} row {i} has the wrong sign", row.relation));
            }
        }
        let gap = (self.objective - self.dual_objective(model)).abs();
        if gap > 1e-6 * (1.0 + self.objective.abs()) {
            return Err(format!("duality gap {gap} at objective {}", self.objective));
        }
        Ok(())
    }
}
