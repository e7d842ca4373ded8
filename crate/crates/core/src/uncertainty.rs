//! Per-scenario uncertainty boxes: coefficient intervals plus a fixed total.

use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::lp::{LpModel, Relation};

const SUM_TOL: f64 = 1e-9;

/// `{ c : lower <= c <= upper, sum(c) = target_sum }`.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
    target_sum: f64,
}

impl UncertaintyBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, target_sum: f64) -> Result<Self> {
        Self::checked(0, lower, upper, target_sum)
    }

    fn checked(scenario: usize, lower: Vec<f64>, upper: Vec<f64>, target_sum: f64) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Invariant("box bound vectors differ in length".into()));
        }
        if let Some(k) = (0..lower.len()).find(|&k| !(0.0 <= lower[k] && lower[k] <= upper[k])) {
            return Err(Error::Invariant(format!(
                "box bounds out of order at coefficient {}: [{}, {}]",
                k + 1,
                lower[k],
                upper[k]
            )));
        }
        let (min, max): (f64, f64) = (lower.iter().sum(), upper.iter().sum());
        let slack = SUM_TOL * target_sum.abs().max(1.0);
        if target_sum < min - slack || target_sum > max + slack {
            return Err(Error::EmptyBox {
                scenario,
                target: target_sum,
                min,
                max,
            });
        }
        Ok(Self {
            lower,
            upper,
            target_sum,
        })
    }

    /// The box `{c}`.
    pub fn singleton(c: &[f64]) -> Self {
        Self {
            lower: c.to_vec(),
            upper: c.to_vec(),
            target_sum: c.iter().sum(),
        }
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn target_sum(&self) -> f64 {
        self.target_sum
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    /// Every coefficient is pinned.
    pub fn is_fixed(&self) -> bool {
        self.lower.iter().zip(&self.upper).all(|(l, u)| l == u)
    }

    pub fn contains(&self, c: &[f64], tol: f64) -> bool {
        c.len() == self.len()
            && c.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(&v, (&l, &u))| v >= l - tol && v <= u + tol)
            && (c.iter().sum::<f64>() - self.target_sum).abs() <= tol * (self.len() as f64).max(1.0)
    }

    /// Pull `c` back inside the coefficient bounds (removes LP round-off).
    pub fn clamp(&self, c: &mut [f64]) {
        for (v, (&l, &u)) in c.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *v = v.clamp(l, u);
        }
    }

    /// Add one bounded variable per coefficient plus the sum row; returns the
    /// variable indices.
    pub fn add_to_model(&self, model: &mut LpModel) -> Vec<usize> {
        let vars: Vec<usize> = self
            .lower
            .iter()
            .zip(&self.upper)
            .map(|(&l, &u)| model.add_var(0.0, l, u))
            .collect();
        if !self.is_fixed() {
            model.add_row(vars.iter().map(|&v| (v, 1.0)).collect(), Relation::Eq, self.target_sum);
        }
        vars
    }
}

/// One box per scenario: `[max(c - b, 0), min(c + b, C)]` around the seed
/// costs with the seed total preserved. TSP self-loops stay pinned at zero.
pub fn build_uncertainty(instance: &Instance, budget: f64) -> Result<Vec<UncertaintyBox>> {
    if !(budget.is_finite() && budget >= 0.0) {
        return Err(Error::Invariant(format!("budget must be finite and >= 0, got {budget}")));
    }
    let kind = instance.kind();
    let cap = instance.max_cost();
    instance
        .costs()
        .iter()
        .enumerate()
        .map(|(i, seed)| {
            let (lower, upper) = seed
                .iter()
                .enumerate()
                .map(|(k, &c)| {
                    if kind.is_pinned_zero(k) {
                        (0.0, 0.0)
                    } else {
                        ((c - budget).max(0.0), (c + budget).min(cap).max(c))
                    }
                })
                .unzip();
            UncertaintyBox::checked(i, lower, upper, seed.iter().sum())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::instance::{sample_ru, ProblemKind};
    use proptest::prelude::*;

    #[test]
    fn bounds_follow_budget_formula() {
        let boxes = build_uncertainty(&fixtures::two_scenario_selection(), 1.0).unwrap();
        assert_eq!(boxes[0].lower(), &[3.0, 0.0, 8.0, 1.0]);
        assert_eq!(boxes[0].upper(), &[5.0, 2.0, 10.0, 3.0]);
        assert_eq!(boxes[0].target_sum(), 16.0);
        assert_eq!(boxes[1].target_sum(), 19.0);
    }

    #[test]
    fn zero_budget_gives_singletons() {
        let inst = fixtures::two_scenario_selection();
        let boxes = build_uncertainty(&inst, 0.0).unwrap();
        for (b, c) in boxes.iter().zip(inst.costs()) {
            assert_eq!(b.lower(), c.as_slice());
            assert_eq!(b.upper(), c.as_slice());
            assert!(b.is_fixed());
        }
    }

    #[test]
    fn upper_bound_is_clamped_at_max_cost() {
        let inst = Instance::new(ProblemKind::Selection { n: 2, p: 1 }, 100.0, vec![vec![100.0, 50.0]]).unwrap();
        let boxes = build_uncertainty(&inst, 5.0).unwrap();
        assert_eq!(boxes[0].upper(), &[100.0, 55.0]);
        assert_eq!(boxes[0].lower(), &[95.0, 45.0]);
    }

    #[test]
    fn tsp_diagonal_is_pinned() {
        let inst = sample_ru(ProblemKind::Tsp { m: 4 }, 2, 100.0, 5, false).unwrap();
        for b in build_uncertainty(&inst, 20.0).unwrap() {
            for u in 0..4 {
                assert_eq!((b.lower()[u * 5], b.upper()[u * 5]), (0.0, 0.0));
            }
        }
    }

    #[test]
    fn empty_box_is_rejected() {
        assert!(matches!(
            UncertaintyBox::new(vec![0.0, 0.0], vec![1.0, 1.0], 3.0),
            Err(Error::EmptyBox { .. })
        ));
        assert!(UncertaintyBox::new(vec![2.0], vec![1.0], 1.5).is_err());
    }

    #[test]
    fn negative_budget_is_rejected() {
        assert!(build_uncertainty(&fixtures::two_scenario_selection(), -1.0).is_err());
    }

    proptest! {
        #[test]
        fn seed_costs_are_members_and_boxes_nest(seed in any::<u64>(), b in 0.0f64..30.0, extra in 0.0f64..30.0) {
            let inst = sample_ru(ProblemKind::Selection { n: 7, p: 3 }, 3, 100.0, seed, false).unwrap();
            let small = build_uncertainty(&inst, b).unwrap();
            let big = build_uncertainty(&inst, b + extra).unwrap();
            for ((s, l), c) in small.iter().zip(&big).zip(inst.costs()) {
                prop_assert!(s.contains(c, 1e-12));
                for k in 0..c.len() {
                    prop_assert!(l.lower()[k] <= s.lower()[k] && s.upper()[k] <= l.upper()[k]);
                }
            }
        }
    }
}
