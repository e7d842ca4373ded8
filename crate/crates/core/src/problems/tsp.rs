use super::{unit_row, LinearSystem, NominalProblem, Solution};
use crate::error::{Error, Result};
use crate::lp::Relation;

/// Node limit of the Held-Karp table (2^(m-1) * (m-1) entries).
pub const HELD_KARP_MAX_NODES: usize = 18;
const ENUMERATION_MAX_NODES: usize = 8;

/// Asymmetric TSP on the complete digraph with `m` nodes. Arc `u -> v` is
/// coefficient `u * m + v`.
#[derive(Debug, Clone, Copy)]
pub struct Tsp {
    m: usize,
}

impl Tsp {
    pub fn new(m: usize) -> Self {
        assert!(m >= 3, "tsp needs at least 3 nodes");
        Self { m }
    }

    pub fn nodes(&self) -> usize {
        self.m
    }
}

/// A directed Hamiltonian cycle written as the visiting order from node 0.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Tour(Vec<usize>);

impl Tour {
    /// `order` must be a permutation of `0..m` beginning with 0.
    pub fn new(order: Vec<usize>) -> Option<Self> {
        let m = order.len();
        let mut seen = vec![false; m];
        if order.first() != Some(&0) {
            return None;
        }
        for &v in &order {
            if v >= m || std::mem::replace(&mut seen[v], true) {
                return None;
            }
        }
        Some(Self(order))
    }

    pub fn order(&self) -> &[usize] {
        &self.0
    }

    pub fn arcs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let m = self.0.len();
        (0..m).map(move |i| (self.0[i], self.0[(i + 1) % m]))
    }

    pub fn cost(&self, costs: &[f64]) -> f64 {
        let m = self.0.len();
        self.arcs().map(|(u, v)| costs[u * m + v]).sum()
    }

    pub fn to_solution(&self) -> Solution {
        let m = self.0.len();
        Solution::from_indices(m * m, self.arcs().map(|(u, v)| u * m + v))
    }

    /// Decodes an arc vector; `None` unless it is a single Hamiltonian cycle.
    pub fn from_solution(m: usize, x: &Solution) -> Option<Self> {
        if x.len() != m * m || x.count() != m {
            return None;
        }
        let mut succ = vec![usize::MAX; m];
        for k in x.ones() {
            let (u, v) = (k / m, k % m);
            if u == v || succ[u] != usize::MAX {
                return None;
            }
            succ[u] = v;
        }
        let mut order = Vec::with_capacity(m);
        let mut cur = 0;
        for _ in 0..m {
            order.push(cur);
            cur = succ[cur];
            if cur == usize::MAX {
                return None;
            }
        }
        (cur == 0).then_some(())?;
        Tour::new(order)
    }
}

/// Held-Karp dynamic program. Among optimal tours the lexicographically
/// smallest visiting order is returned.
pub fn held_karp(m: usize, costs: &[f64]) -> Result<(Tour, f64)> {
    if m > HELD_KARP_MAX_NODES {
        return Err(Error::Scale(format!(
            "Held-Karp supports at most {HELD_KARP_MAX_NODES} nodes, got {m}"
        )));
    }
    assert!(m >= 3 && costs.len() == m * m);
    let k = m - 1;
    let full = (1usize << k) - 1;
    let arc = |u: usize, v: usize| costs[u * m + v];
    // togo[mask * k + (j - 1)]: cheapest completion from node j when the
    // nodes in `mask` (bit v-1 for node v) have been visited, j included.
    let mut togo = vec![f64::INFINITY; (full + 1) * k];
    for j in 1..m {
        togo[full * k + j - 1] = arc(j, 0);
    }
    for mask in (1..full).rev() {
        for j in 1..m {
            if mask & (1 << (j - 1)) == 0 {
                continue;
            }
            let mut best = f64::INFINITY;
            for v in 1..m {
                let bit = 1 << (v - 1);
                if mask & bit == 0 {
                    best = best.min(arc(j, v) + togo[(mask | bit) * k + v - 1]);
                }
            }
            togo[mask * k + j - 1] = best;
        }
    }
    let value = (1..m)
        .map(|v| arc(0, v) + togo[(1 << (v - 1)) * k + v - 1])
        .fold(f64::INFINITY, f64::min);

    let eps = 1e-9 * (1.0 + value.abs());
    let mut order = vec![0];
    let (mut mask, mut cur, mut remaining) = (0usize, 0usize, value);
    while order.len() < m {
        let next = (1..m)
            .filter(|&v| mask & (1 << (v - 1)) == 0)
            .find(|&v| {
                let bit = 1 << (v - 1);
                arc(cur, v) + togo[(mask | bit) * k + v - 1] <= remaining + eps
            })
            .expect("an optimal successor exists");
        let bit = 1 << (next - 1);
        remaining = togo[(mask | bit) * k + next - 1];
        mask |= bit;
        cur = next;
        order.push(next);
    }
    let tour = Tour(order);
    let exact = tour.cost(costs);
    Ok((tour, exact))
}

impl NominalProblem for Tsp {
    fn dim(&self) -> usize {
        self.m * self.m
    }

    fn solve_nominal(&self, costs: &[f64]) -> Result<(Solution, f64)> {
        let (tour, v) = held_karp(self.m, costs)?;
        Ok((tour.to_solution(), v))
    }

    fn polyhedron(&self) -> Option<LinearSystem> {
        None
    }

    /// Assignment relaxation: unit in- and out-degree, no self-loops, no
    /// subtour elimination.
    fn relaxation(&self) -> LinearSystem {
        let m = self.m;
        let mut rows = Vec::with_capacity(3 * m);
        for u in 0..m {
            rows.push(unit_row((0..m).filter(|&v| v != u).map(|v| (u * m + v, 1.0)).collect(), Relation::Eq, 1.0));
        }
        for v in 0..m {
            rows.push(unit_row((0..m).filter(|&u| u != v).map(|u| (u * m + v, 1.0)).collect(), Relation::Eq, 1.0));
        }
        for u in 0..m {
            rows.push(unit_row(vec![(u * m + u, 1.0)], Relation::Eq, 0.0));
        }
        LinearSystem { rows }
    }

    /// Greedy arc insertion: arcs in order of decreasing fractional value
    /// (ties to the lowest index) are accepted when they keep every node at
    /// out- and in-degree at most one without closing a short cycle. Leftover
    /// path fragments are joined by lowest index.
    fn round(&self, fractional: &[f64]) -> Solution {
        let m = self.m;
        let mut succ = vec![OPEN; m];
        let mut pred = vec![OPEN; m];
        let mut placed = 0;

        let mut arcs: Vec<usize> = (0..m * m).filter(|&k| k / m != k % m).collect();
        arcs.sort_by(|&a, &b| fractional[b].total_cmp(&fractional[a]).then(a.cmp(&b)));
        for k in arcs {
            let (u, v) = (k / m, k % m);
            if can_link(u, v, &succ, &pred, placed) {
                succ[u] = v;
                pred[v] = u;
                placed += 1;
            }
        }
        while placed < m {
            let (u, v) = (0..m)
                .filter(|&u| succ[u] == OPEN)
                .find_map(|u| (0..m).find(|&v| can_link(u, v, &succ, &pred, placed)).map(|v| (u, v)))
                .expect("open path fragments can always be joined");
            succ[u] = v;
            pred[v] = u;
            placed += 1;
        }
        Solution::from_indices(m * m, (0..m).map(|u| u * m + succ[u]))
    }

    fn enumerate_feasible(&self) -> Result<Box<dyn Iterator<Item = Solution> + '_>> {
        if self.m > ENUMERATION_MAX_NODES {
            return Err(Error::Scale(format!(
                "tour enumeration supports at most {ENUMERATION_MAX_NODES} nodes, got {}",
                self.m
            )));
        }
        Ok(Box::new(Permutations::new(self.m).map(|order| Tour(order).to_solution())))
    }

    fn is_feasible(&self, x: &Solution) -> bool {
        Tour::from_solution(self.m, x).is_some()
    }
}

const OPEN: usize = usize::MAX;

/// Arc `u -> v` fits if `u` has no successor, `v` no predecessor, and it does
/// not close a cycle before all `m` arcs are placed.
fn can_link(u: usize, v: usize, succ: &[usize], pred: &[usize], placed: usize) -> bool {
    if u == v || succ[u] != OPEN || pred[v] != OPEN {
        return false;
    }
    let mut end = v;
    while succ[end] != OPEN {
        end = succ[end];
    }
    end != u || placed + 1 == succ.len()
}

/// Visiting orders `0, pi(1), ..., pi(m-1)` in lexicographic order.
struct Permutations {
    cur: Option<Vec<usize>>,
}

impl Permutations {
    fn new(m: usize) -> Self {
        Self {
            cur: Some((0..m).collect()),
        }
    }
}

impl Iterator for Permutations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let out = self.cur.clone()?;
        let p = self.cur.as_mut()?;
        // Next permutation of p[1..].
        let n = p.len();
        match (1..n - 1).rev().find(|&i| p[i] < p[i + 1]) {
            Some(i) => {
                let j = (i + 1..n).rev().find(|&j| p[j] > p[i]).expect("successor exists");
                p.swap(i, j);
                p[i + 1..].reverse();
            }
            None => self.cur = None,
        }
        Some(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn random_matrix(rng: &mut Rng, m: usize) -> Vec<f64> {
        (0..m * m)
            .map(|k| if k / m == k % m { 0.0 } else { rng.uniform_inclusive(100) as f64 })
            .collect()
    }

    fn brute_force(m: usize, c: &[f64]) -> f64 {
        Permutations::new(m)
            .map(|o| Tour(o).cost(c))
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn uniform_triangle() {
        let mut c = vec![1.0; 9];
        for u in 0..3 {
            c[u * 4] = 0.0;
        }
        let (_, v) = held_karp(3, &c).unwrap();
        assert_eq!(v, 3.0);
    }

    #[test]
    fn direction_matters() {
        let mut c = vec![10.0; 9];
        for u in 0..3 {
            c[u * 4] = 0.0;
        }
        c[1] = 1.0; // 0 -> 1
        c[5] = 1.0; // 1 -> 2
        c[6] = 1.0; // 2 -> 0
        let (tour, v) = held_karp(3, &c).unwrap();
        assert_eq!(v, 3.0);
        assert_eq!(tour.order(), &[0, 1, 2]);
    }

    #[test]
    fn ties_resolve_to_smallest_order() {
        let c: Vec<f64> = (0..16).map(|k| if k / 4 == k % 4 { 0.0 } else { 1.0 }).collect();
        assert_eq!(held_karp(4, &c).unwrap().0.order(), &[0, 1, 2, 3]);
    }

    #[test]
    fn matches_enumeration_up_to_eight_nodes() {
        let mut rng = Rng::new(99);
        for m in 3..=8 {
            for _ in 0..50 {
                let c = random_matrix(&mut rng, m);
                let (tour, v) = held_karp(m, &c).unwrap();
                assert_eq!(v, brute_force(m, &c));
                assert_eq!(tour.cost(&c), v);
            }
        }
    }

    #[test]
    fn rejects_too_many_nodes() {
        assert!(matches!(held_karp(19, &vec![0.0; 361]), Err(Error::Scale(_))));
    }

    #[test]
    fn enumeration_counts() {
        assert_eq!(Tsp::new(3).enumerate_feasible().unwrap().count(), 2);
        assert_eq!(Tsp::new(8).enumerate_feasible().unwrap().count(), 5040);
        assert!(Tsp::new(9).enumerate_feasible().is_err());
        let all: Vec<Solution> = Tsp::new(5).enumerate_feasible().unwrap().collect();
        let mut sorted = all.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), all.len());
    }

    #[test]
    fn rounding_keeps_integral_tours() {
        let t = Tsp::new(4);
        let tour = Tour::new(vec![0, 2, 1, 3]).unwrap();
        let x = tour.to_solution();
        assert_eq!(t.round(&x.as_f64()), x);
    }

    #[test]
    fn rounding_breaks_two_cycles() {
        // Assignment-style point made of two 2-cycles: 0<->1, 2<->3.
        let t = Tsp::new(4);
        let mut frac = vec![0.0; 16];
        frac[1] = 1.0;
        frac[4] = 1.0;
        frac[11] = 1.0;
        frac[14] = 1.0;
        let x = t.round(&frac);
        assert!(t.is_feasible(&x));
    }

    #[test]
    fn decoding_rejects_subtours() {
        let x = Solution::from_indices(16, [1, 4, 11, 14]);
        assert!(Tour::from_solution(4, &x).is_none());
        assert!(Tour::new(vec![1, 0, 2]).is_none());
        assert!(Tour::new(vec![0, 1, 1]).is_none());
    }
}
