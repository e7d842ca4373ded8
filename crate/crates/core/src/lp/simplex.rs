use super::{LpModel, LpOutcome, LpStatus, Relation, Sense};
use crate::error::{Error, Result};

const FEAS_TOL: f64 = 1e-7;
const OPT_TOL: f64 = 1e-9;
/// Bound slack granted in the first pass of the two-pass ratio test.
const HARRIS_TOL: f64 = 1e-9;
const DEGENERATE_LIMIT: usize = 500;
const MAX_RETRIES: usize = 3;
/// (pivot tolerance relative to the largest entry of the pivot column,
/// refactorization interval) per attempt. Later attempts restart from scratch
/// with more conservative pivoting.
const ATTEMPTS: [(f64, usize); 3] = [(1e-9, 64), (1e-6, 16), (1e-4, 8)];

/// Solves `model` with a two-phase bounded-variable primal simplex.
///
/// Dantzig pricing is used until 500 degenerate pivots have been made, after
/// which Bland's rule takes over for the rest of the solve. Optimal solutions
/// are certified (primal residuals, dual signs, duality gap); a certificate
/// failure triggers a refactorization and further pivoting. If that does not
/// help, the solve restarts with a stricter pivot threshold, and failure of
/// every attempt is reported as [`Error::Numerical`].
pub fn solve_lp(model: &LpModel) -> Result<LpOutcome> {
    model.validate()?;
    let mut last = None;
    for &(pivot_tol, refactor_every) in &ATTEMPTS {
        let mut solver = Solver::new(model, pivot_tol, refactor_every);
        match solver.solve() {
            Err(Error::Numerical(why)) => last = Some(why),
            other => return other,
        }
    }
    Err(Error::Numerical(last.unwrap_or_default()))
}

enum PhaseEnd {
    Optimal,
    Unbounded,
}

struct Solver<'a> {
    model: &'a LpModel,
    m: usize,
    n: usize,
    cols: Vec<Vec<(usize, f64)>>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    b: Vec<f64>,
    x: Vec<f64>,
    basis: Vec<usize>,
    /// Basis position of each column, `usize::MAX` when nonbasic.
    pos: Vec<usize>,
    binv: Vec<f64>,
    cost: Vec<f64>,
    iterations: usize,
    degenerate: usize,
    bland: bool,
    since_refactor: usize,
    max_iterations: usize,
    pivot_tol: f64,
    refactor_every: usize,
}

const NONBASIC: usize = usize::MAX;

impl<'a> Solver<'a> {
    fn new(model: &'a LpModel, pivot_tol: f64, refactor_every: usize) -> Self {
        let m = model.num_rows();
        let n = model.num_vars();
        let ncols = n + 2 * m;

        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (i, row) in model.rows().iter().enumerate() {
            for &(j, a) in &row.coeffs {
                match cols[j].last_mut() {
                    Some((r, v)) if *r == i => *v += a,
                    _ => cols[j].push((i, a)),
                }
            }
        }
        for col in cols.iter_mut() {
            col.retain(|&(_, a)| a != 0.0);
        }

        let mut lo = model.lower().to_vec();
        let mut hi = model.upper().to_vec();
        let mut x: Vec<f64> = lo
            .iter()
            .zip(&hi)
            .map(|(&l, &u)| if l > 0.0 { l } else if u < 0.0 { u } else { 0.0 })
            .collect();
        let b: Vec<f64> = model.rows().iter().map(|r| r.rhs).collect();

        let mut residual = b.clone();
        for (j, col) in cols.iter().enumerate() {
            if x[j] != 0.0 {
                for &(i, a) in col {
                    residual[i] -= a * x[j];
                }
            }
        }

        let mut basis = Vec::with_capacity(m);
        let mut pos = vec![NONBASIC; ncols];
        let mut binv = vec![0.0; m * m];
        for (i, row) in model.rows().iter().enumerate() {
            let (slo, shi) = match row.relation {
                Relation::Le => (0.0, f64::INFINITY),
                Relation::Ge => (f64::NEG_INFINITY, 0.0),
                Relation::Eq => (0.0, 0.0),
            };
            cols.push(vec![(i, 1.0)]);
            lo.push(slo);
            hi.push(shi);
            x.push(0.0);
        }
        for (i, &r) in residual.iter().enumerate() {
            let slack = n + i;
            let art = n + m + i;
            let sign = if r >= 0.0 { 1.0 } else { -1.0 };
            cols.push(vec![(i, sign)]);
            if r >= lo[slack] && r <= hi[slack] {
                x[slack] = r;
                basis.push(slack);
                pos[slack] = i;
                binv[i * m + i] = 1.0;
                lo.push(0.0);
                hi.push(0.0);
                x.push(0.0);
            } else {
                basis.push(art);
                pos[art] = i;
                binv[i * m + i] = sign;
                lo.push(0.0);
                hi.push(f64::INFINITY);
                x.push(r.abs());
            }
        }

        Self {
            model,
            m,
            n,
            cols,
            lo,
            hi,
            b,
            x,
            basis,
            pos,
            binv,
            cost: vec![0.0; ncols],
            iterations: 0,
            degenerate: 0,
            bland: false,
            since_refactor: 0,
            max_iterations: 20_000 + 200 * (m + n),
            pivot_tol,
            refactor_every,
        }
    }

    fn ncols(&self) -> usize {
        self.cols.len()
    }

    fn solve(&mut self) -> Result<LpOutcome> {
        let art_start = self.n + self.m;
        let needs_phase_one = (art_start..self.ncols()).any(|j| self.pos[j] != NONBASIC);
        if needs_phase_one {
            for j in art_start..self.ncols() {
                self.cost[j] = if self.hi[j] > 0.0 { 1.0 } else { 0.0 };
            }
            // Phase one is bounded below by zero.
            let _ = self.run_phase()?;
            let infeasibility: f64 = (art_start..self.ncols()).map(|j| self.x[j].max(0.0)).sum();
            let b_norm = self.b.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if infeasibility > FEAS_TOL * (1.0 + b_norm) {
                return Ok(self.outcome(LpStatus::Infeasible));
            }
            for j in art_start..self.ncols() {
                self.hi[j] = 0.0;
                self.cost[j] = 0.0;
                if self.pos[j] == NONBASIC {
                    self.x[j] = 0.0;
                }
            }
            self.refactor()?;
        }

        let flip = match self.model.sense() {
            Sense::Minimize => 1.0,
            Sense::Maximize => -1.0,
        };
        for (j, &c) in self.model.objective().iter().enumerate() {
            self.cost[j] = flip * c;
        }

        let mut retries = 0;
        loop {
            match self.run_phase()? {
                PhaseEnd::Unbounded => return Ok(self.outcome(LpStatus::Unbounded)),
                PhaseEnd::Optimal => {
                    let out = self.outcome(LpStatus::Optimal);
                    match out.certify(self.model) {
                        Ok(()) => return Ok(out),
                        Err(why) if retries >= MAX_RETRIES => return Err(Error::Numerical(why)),
                        Err(_) => {
                            retries += 1;
                            self.refactor()?;
                        }
                    }
                }
            }
        }
    }

    /// Pivots on the current cost vector until optimal or unbounded.
    fn run_phase(&mut self) -> Result<PhaseEnd> {
        let mut confirmed = false;
        loop {
            if self.iterations > self.max_iterations {
                return Err(Error::Numerical(format!("iteration limit {} reached", self.max_iterations)));
            }
            if self.since_refactor >= self.refactor_every {
                self.refactor()?;
            }
            let y = self.duals();
            let Some((q, dir)) = self.price(&y) else {
                if confirmed {
                    return Ok(PhaseEnd::Optimal);
                }
                // Re-price on a fresh factorization before declaring optimality.
                self.refactor()?;
                confirmed = true;
                continue;
            };
            confirmed = false;
            let alpha = self.ftran(q);
            match self.ratio_test(q, dir, &alpha) {
                None => return Ok(PhaseEnd::Unbounded),
                Some((theta, row)) => self.pivot(q, dir, theta, row, &alpha),
            }
        }
    }

    fn duals(&self) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for (i, &bv) in self.basis.iter().enumerate() {
            let c = self.cost[bv];
            if c != 0.0 {
                let row = &self.binv[i * m..(i + 1) * m];
                for (yr, &v) in y.iter_mut().zip(row) {
                    *yr += c * v;
                }
            }
        }
        y
    }

    fn reduced_cost(&self, j: usize, y: &[f64]) -> f64 {
        self.cost[j] - self.cols[j].iter().map(|&(r, a)| y[r] * a).sum::<f64>()
    }

    fn price(&self, y: &[f64]) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64, f64)> = None;
        for j in 0..self.ncols() {
            if self.pos[j] != NONBASIC || self.lo[j] == self.hi[j] {
                continue;
            }
            let d = self.reduced_cost(j, y);
            let dir = if d < -OPT_TOL && self.x[j] < self.hi[j] {
                1.0
            } else if d > OPT_TOL && self.x[j] > self.lo[j] {
                -1.0
            } else {
                continue;
            };
            if self.bland {
                return Some((j, dir));
            }
            if best.is_none_or(|(_, _, s)| d.abs() > s) {
                best = Some((j, dir, d.abs()));
            }
        }
        best.map(|(j, dir, _)| (j, dir))
    }

    fn ftran(&self, j: usize) -> Vec<f64> {
        let m = self.m;
        let mut alpha = vec![0.0; m];
        for &(r, a) in &self.cols[j] {
            for (i, al) in alpha.iter_mut().enumerate() {
                *al += self.binv[i * m + r] * a;
            }
        }
        alpha
    }

    /// Returns the step length and the blocking basis row (`None` for a bound
    /// flip of the entering variable), or `None` if the ray is unbounded.
    fn ratio_test(&self, q: usize, dir: f64, alpha: &[f64]) -> Option<(f64, Option<usize>)> {
        let flip = if dir > 0.0 {
            self.hi[q] - self.x[q]
        } else {
            self.x[q] - self.lo[q]
        };

        let scale = alpha.iter().fold(1.0f64, |a, v| a.max(v.abs()));
        let pivot_tol = self.pivot_tol * scale;
        // Rate of change of each basic variable per unit step.
        let rate = |i: usize| -dir * alpha[i];
        let limit = |i: usize, slack: f64| -> Option<f64> {
            let bv = self.basis[i];
            let r = rate(i);
            if r < -pivot_tol && self.lo[bv].is_finite() {
                Some(((self.x[bv] - self.lo[bv] + slack) / -r).max(0.0))
            } else if r > pivot_tol && self.hi[bv].is_finite() {
                Some(((self.hi[bv] - self.x[bv] + slack) / r).max(0.0))
            } else {
                None
            }
        };

        if self.bland {
            let mut best: Option<(f64, usize)> = None;
            for i in 0..self.m {
                if let Some(t) = limit(i, 0.0) {
                    let better = match best {
                        None => true,
                        Some((bt, bi)) => {
                            t < bt - 1e-12 || (t <= bt + 1e-12 && self.basis[i] < self.basis[bi])
                        }
                    };
                    if better {
                        best = Some((t, i));
                    }
                }
            }
            return match best {
                Some((t, _)) if flip <= t => Some((flip, None)),
                Some((t, i)) => Some((t, Some(i))),
                None if flip.is_finite() => Some((flip, None)),
                None => None,
            };
        }

        let mut theta_max = f64::INFINITY;
        for i in 0..self.m {
            if let Some(t) = limit(i, HARRIS_TOL) {
                theta_max = theta_max.min(t);
            }
        }
        if flip <= theta_max {
            return flip.is_finite().then_some((flip, None));
        }
        let mut chosen: Option<(usize, f64)> = None;
        for i in 0..self.m {
            if let Some(t) = limit(i, 0.0) {
                if t <= theta_max && chosen.is_none_or(|(_, a)| alpha[i].abs() > a) {
                    chosen = Some((i, alpha[i].abs()));
                }
            }
        }
        let (row, _) = chosen?;
        Some((limit(row, 0.0).unwrap_or(0.0), Some(row)))
    }

    fn pivot(&mut self, q: usize, dir: f64, theta: f64, row: Option<usize>, alpha: &[f64]) {
        self.iterations += 1;
        if theta <= 1e-12 {
            self.degenerate += 1;
            if self.degenerate > DEGENERATE_LIMIT {
                self.bland = true;
            }
        }
        if theta != 0.0 {
            self.x[q] += dir * theta;
            for (i, &a) in alpha.iter().enumerate() {
                if a != 0.0 {
                    let bv = self.basis[i];
                    self.x[bv] -= dir * theta * a;
                }
            }
        }
        let Some(r) = row else {
            // Bound flip: snap exactly onto the bound.
            self.x[q] = if dir > 0.0 { self.hi[q] } else { self.lo[q] };
            return;
        };

        let leaving = self.basis[r];
        self.x[leaving] = if -dir * alpha[r] < 0.0 {
            self.lo[leaving]
        } else {
            self.hi[leaving]
        };
        self.pos[leaving] = NONBASIC;
        self.basis[r] = q;
        self.pos[q] = r;

        let m = self.m;
        let piv = alpha[r];
        let (before, rest) = self.binv.split_at_mut(r * m);
        let (prow, after) = rest.split_at_mut(m);
        for v in prow.iter_mut() {
            *v /= piv;
        }
        for (i, chunk) in before.chunks_mut(m).chain(after.chunks_mut(m)).enumerate() {
            let ai = alpha[if i < r { i } else { i + 1 }];
            if ai != 0.0 {
                for (v, &p) in chunk.iter_mut().zip(prow.iter()) {
                    *v -= ai * p;
                }
            }
        }
        self.since_refactor += 1;
    }

    /// Rebuilds the basis inverse from scratch and recomputes basic values.
    fn refactor(&mut self) -> Result<()> {
        let m = self.m;
        self.since_refactor = 0;
        if m == 0 {
            return Ok(());
        }
        let mut mat = vec![0.0; m * m];
        for (k, &bv) in self.basis.iter().enumerate() {
            for &(r, a) in &self.cols[bv] {
                mat[r * m + k] = a;
            }
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for c in 0..m {
            let p = (c..m)
                .max_by(|&a, &b| mat[a * m + c].abs().total_cmp(&mat[b * m + c].abs()))
                .unwrap_or(c);
            let pv = mat[p * m + c];
            if pv.abs() < 1e-11 {
                return Err(Error::Numerical("singular basis during refactorization".into()));
            }
            if p != c {
                for k in 0..m {
                    mat.swap(p * m + k, c * m + k);
                    inv.swap(p * m + k, c * m + k);
                }
            }
            for k in 0..m {
                mat[c * m + k] /= pv;
                inv[c * m + k] /= pv;
            }
            for r in 0..m {
                if r == c {
                    continue;
                }
                let f = mat[r * m + c];
                if f != 0.0 {
                    for k in 0..m {
                        mat[r * m + k] -= f * mat[c * m + k];
                        inv[r * m + k] -= f * inv[c * m + k];
                    }
                }
            }
        }
        self.binv = inv;

        let mut rhs = self.b.clone();
        for j in 0..self.ncols() {
            if self.pos[j] == NONBASIC && self.x[j] != 0.0 {
                for &(r, a) in &self.cols[j] {
                    rhs[r] -= a * self.x[j];
                }
            }
        }
        for i in 0..m {
            let v: f64 = (0..m).map(|r| self.binv[i * m + r] * rhs[r]).sum();
            self.x[self.basis[i]] = v;
        }
        Ok(())
    }

    fn outcome(&self, status: LpStatus) -> LpOutcome {
        let n = self.n;
        let primal: Vec<f64> = self.x[..n].to_vec();
        if status != LpStatus::Optimal {
            return LpOutcome {
                status,
                objective: f64::NAN,
                primal,
                duals: vec![0.0; self.m],
                reduced_costs: vec![0.0; n],
                iterations: self.iterations,
            };
        }
        let flip = match self.model.sense() {
            Sense::Minimize => 1.0,
            Sense::Maximize => -1.0,
        };
        let y = self.duals();
        let reduced_costs = (0..n).map(|j| flip * self.reduced_cost(j, &y)).collect();
        LpOutcome {
            status,
            objective: self.model.evaluate(&primal),
            primal,
            duals: y.iter().map(|v| flip * v).collect(),
            reduced_costs,
            iterations: self.iterations,
        }
    }
}
