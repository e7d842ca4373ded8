use super::{unit_row, LinearSystem, NominalProblem, Solution};
use crate::error::{Error, Result};
use crate::lp::Relation;

/// Largest feasible set `enumerate_feasible` will produce.
const ENUMERATION_LIMIT: u128 = 1_000_000;

/// Pick exactly `p` of `n` items.
#[derive(Debug, Clone, Copy)]
pub struct Selection {
    n: usize,
    p: usize,
}

impl Selection {
    pub fn new(n: usize, p: usize) -> Self {
        assert!(p >= 1 && p <= n, "selection needs 1 <= p <= n");
        Self { n, p }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Indices of the `p` largest values, ties to the lowest index.
    fn top_p(&self, values: &[f64]) -> Solution {
        let mut idx: Vec<usize> = (0..self.n).collect();
        idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
        Solution::from_indices(self.n, idx.into_iter().take(self.p))
    }
}

pub(crate) fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc.saturating_mul((n - i) as u128) / (i as u128 + 1))
}

impl NominalProblem for Selection {
    fn dim(&self) -> usize {
        self.n
    }

    /// The `p` cheapest items, ties to the lowest index.
    fn solve_nominal(&self, costs: &[f64]) -> Result<(Solution, f64)> {
        let neg: Vec<f64> = costs.iter().map(|c| -c).collect();
        let x = self.top_p(&neg);
        let v = x.dot(costs);
        Ok((x, v))
    }

    fn polyhedron(&self) -> Option<LinearSystem> {
        Some(self.relaxation())
    }

    fn relaxation(&self) -> LinearSystem {
        LinearSystem {
            rows: vec![unit_row((0..self.n).map(|k| (k, 1.0)).collect(), Relation::Eq, self.p as f64)],
        }
    }

    fn round(&self, fractional: &[f64]) -> Solution {
        self.top_p(fractional)
    }

    fn enumerate_feasible(&self) -> Result<Box<dyn Iterator<Item = Solution> + '_>> {
        let count = binomial(self.n, self.p);
        if count > ENUMERATION_LIMIT {
            return Err(Error::Scale(format!(
                "C({}, {}) = {count} selections exceeds the enumeration limit",
                self.n, self.p
            )));
        }
        Ok(Box::new(Combinations::new(self.n, self.p)))
    }

    fn is_feasible(&self, x: &Solution) -> bool {
        x.len() == self.n && x.count() == self.p
    }
}

/// `p`-subsets of `0..n` in lexicographic order.
struct Combinations {
    n: usize,
    idx: Vec<usize>,
    done: bool,
}

impl Combinations {
    fn new(n: usize, p: usize) -> Self {
        Self {
            n,
            idx: (0..p).collect(),
            done: false,
        }
    }
}

impl Iterator for Combinations {
    type Item = Solution;

    fn next(&mut self) -> Option<Solution> {
        if self.done {
            return None;
        }
        let out = Solution::from_indices(self.n, self.idx.iter().copied());
        let p = self.idx.len();
        match (0..p).rev().find(|&i| self.idx[i] < self.n - p + i) {
            Some(i) => {
                self.idx[i] += 1;
                for j in i + 1..p {
                    self.idx[j] = self.idx[j - 1] + 1;
                }
            }
            None => self.done = true,
        }
        Some(out)
    }
}
