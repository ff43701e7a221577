//! Dense linear programming core: a bounded-variable primal simplex with a
//! two-phase start and Bland's rule as anti-cycling fallback.
//!
//! Problems are stated as
//!
//! ```text
//!     minimize    c·x
//!     subject to  row_lo_i ≤ A_i·x ≤ row_up_i     (rows)
//!                 lo_j ≤ x_j ≤ up_j               (variable bounds)
//! ```
//!
//! Equalities are rows with `row_lo == row_up`. Infinite bounds are allowed.
//! Sizes here stay in the low thousands, so a dense tableau with full
//! pricing is the simplest thing that is fast enough.

use crate::{Error, Result};

/// A dense LP in row-bounded form.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    /// Objective coefficients, length `n`.
    pub objective: Vec<f64>,
    /// Row-major constraint matrix, `rows.len()` rows of length `n`.
    pub rows: Vec<Vec<f64>>,
    /// Per-row lower bounds (`-inf` for one-sided).
    pub row_lower: Vec<f64>,
    /// Per-row upper bounds (`+inf` for one-sided).
    pub row_upper: Vec<f64>,
    /// Per-variable lower bounds.
    pub lower: Vec<f64>,
    /// Per-variable upper bounds.
    pub upper: Vec<f64>,
}

/// Optimal basic solution of a [`LinearProgram`].
#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

const FEAS_TOL: f64 = 1e-9;
const COST_TOL: f64 = 1e-10;
const PIVOT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy)]
enum StepOutcome {
    BoundFlip,
    Pivot(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum VarStatus {
    Basic,
    AtLower,
    AtUpper,
    /// Free variable resting at zero.
    AtZero,
}

/// Solves the program, returning an optimal vertex.
pub fn solve(lp: &LinearProgram) -> Result<LpSolution> {
    let n = lp.objective.len();
    let m = lp.rows.len();
    for row in &lp.rows {
        if row.len() != n {
            return Err(Error::DimensionMismatch(row.len(), n));
        }
    }
    if lp.lower.len() != n || lp.upper.len() != n {
        return Err(Error::DimensionMismatch(lp.lower.len(), n));
    }
    if lp.row_lower.len() != m || lp.row_upper.len() != m {
        return Err(Error::DimensionMismatch(lp.row_lower.len(), m));
    }
    for j in 0..n {
        if lp.lower[j] > lp.upper[j] + FEAS_TOL {
            return Err(Error::Infeasible);
        }
    }

    // Columns: n structural + m row slacks; row i reads A_i·x + s_i = 0 with
    // s_i ∈ [-row_up_i, -row_lo_i].
    let total = n + m;
    let mut lower = Vec::with_capacity(total);
    let mut upper = Vec::with_capacity(total);
    lower.extend_from_slice(&lp.lower);
    upper.extend_from_slice(&lp.upper);
    for i in 0..m {
        if lp.row_lower[i] > lp.row_upper[i] + FEAS_TOL {
            return Err(Error::Infeasible);
        }
        lower.push(-lp.row_upper[i]);
        upper.push(-lp.row_lower[i]);
    }

    let mut tab = Tableau::new(lp, &lower, &upper);
    tab.phase1()?;
    tab.phase2(&lp.objective)?;

    let x = tab.values[..n].to_vec();
    let objective = lp
        .objective
        .iter()
        .zip(&x)
        .map(|(c, v)| c * v)
        .sum();
    Ok(LpSolution {
        x,
        objective,
        iterations: tab.iterations,
    })
}

struct Tableau {
    m: usize,
    total: usize,
    /// `B^{-1} [A | I]`, row-major, m x total.
    t: Vec<f64>,
    /// current value of every column's variable
    values: Vec<f64>,
    status: Vec<VarStatus>,
    basis: Vec<usize>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    iterations: usize,
}

impl Tableau {
    fn new(lp: &LinearProgram, lower: &[f64], upper: &[f64]) -> Self {
        let n = lp.objective.len();
        let m = lp.rows.len();
        let total = n + m;
        let mut t = vec![0.0; m * total];
        for i in 0..m {
            t[i * total..i * total + n].copy_from_slice(&lp.rows[i]);
            t[i * total + n + i] = 1.0;
        }
        // nonbasic start for structurals: the finite bound nearest zero
        let mut status = Vec::with_capacity(total);
        let mut values = vec![0.0; total];
        for j in 0..total {
            let (lo, up) = (lower[j], upper[j]);
            let st = if j >= n {
                VarStatus::Basic
            } else if lo.is_infinite() && up.is_infinite() {
                VarStatus::AtZero
            } else if lo.is_finite() && (up.is_infinite() || lo.abs() <= up.abs()) {
                VarStatus::AtLower
            } else {
                VarStatus::AtUpper
            };
            values[j] = match st {
                VarStatus::AtLower => lo,
                VarStatus::AtUpper => up,
                _ => 0.0,
            };
            status.push(st);
        }
        // slack basis absorbs the structural start: s_i = -A_i x_N
        let basis: Vec<usize> = (n..total).collect();
        for i in 0..m {
            let mut v = 0.0;
            for j in 0..n {
                v += lp.rows[i][j] * values[j];
            }
            values[n + i] = -v;
        }
        Self {
            m,
            total,
            t,
            values,
            status,
            basis,
            lower: lower.to_vec(),
            upper: upper.to_vec(),
            iterations: 0,
        }
    }

    /// Drives basic variables inside their bounds by minimizing the total
    /// bound violation (composite phase 1 with implicit artificial costs).
    fn phase1(&mut self) -> Result<()> {
        let max_iter = 50 * (self.m + self.total) + 1000;
        let mut stall = 0usize;
        loop {
            let infeas = self.infeasibility();
            if infeas <= FEAS_TOL {
                return Ok(());
            }
            if self.iterations > max_iter {
                return Err(Error::Numerical("phase-1 iteration cap exceeded".into()));
            }
            // gradient of the infeasibility sum wrt each basic variable
            let mut duals = vec![0.0; self.m];
            for (i, &bi) in self.basis.iter().enumerate() {
                let v = self.values[bi];
                if v < self.lower[bi] - FEAS_TOL {
                    duals[i] = -1.0;
                } else if v > self.upper[bi] + FEAS_TOL {
                    duals[i] = 1.0;
                }
            }
            let bland = stall > self.total;
            let Some((j, dir)) = self.price_phase1(&duals, bland) else {
                return Err(Error::Infeasible);
            };
            let before = infeas;
            let _ = self.step(j, dir, true)?;
            if self.infeasibility() >= before - FEAS_TOL * 0.01 {
                stall += 1;
            } else {
                stall = 0;
            }
        }
    }

    fn infeasibility(&self) -> f64 {
        self.basis
            .iter()
            .map(|&bi| {
                let v = self.values[bi];
                (self.lower[bi] - v).max(0.0) + (v - self.upper[bi]).max(0.0)
            })
            .sum()
    }

    /// Reduced cost of the phase-1 objective for nonbasic column j is
    /// `-duals · T_col_j`; pick an improving (column, direction).
    fn price_phase1(&self, duals: &[f64], bland: bool) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64, f64)> = None;
        for j in 0..self.total {
            if self.status[j] == VarStatus::Basic {
                continue;
            }
            let mut d = 0.0;
            for i in 0..self.m {
                if duals[i] != 0.0 {
                    d += duals[i] * self.t[i * self.total + j];
                }
            }
            // moving x_j by +1 changes basics by -col, so d(infeas)/dx_j = -d
            let grad = -d;
            let can_up = self.status[j] != VarStatus::AtUpper;
            let can_down = self.status[j] != VarStatus::AtLower;
            if grad < -COST_TOL && can_up {
                if bland {
                    return Some((j, 1.0));
                }
                if best.is_none() || -grad > best.unwrap().2 {
                    best = Some((j, 1.0, -grad));
                }
            } else if grad > COST_TOL && can_down {
                if bland {
                    return Some((j, -1.0));
                }
                if best.is_none() || grad > best.unwrap().2 {
                    best = Some((j, -1.0, grad));
                }
            }
        }
        best.map(|(j, dir, _)| (j, dir))
    }

    fn phase2(&mut self, objective: &[f64]) -> Result<()> {
        let n = objective.len();
        let cost = |j: usize| -> f64 {
            if j < n {
                objective[j]
            } else {
                0.0
            }
        };
        // reduced-cost row, kept consistent across pivots
        let mut red = vec![0.0; self.total];
        let rebuild = |tab: &Tableau, red: &mut Vec<f64>| {
            let mut duals = vec![0.0; tab.m];
            for (i, &bi) in tab.basis.iter().enumerate() {
                duals[i] = cost(bi);
            }
            for j in 0..tab.total {
                let mut yt = 0.0;
                for i in 0..tab.m {
                    if duals[i] != 0.0 {
                        yt += duals[i] * tab.t[i * tab.total + j];
                    }
                }
                red[j] = cost(j) - yt;
            }
        };
        rebuild(self, &mut red);
        let max_iter = 200 * (self.m + self.total) + 2000;
        let mut stall = 0usize;
        let mut since_rebuild = 0usize;
        let mut last_obj = f64::INFINITY;
        loop {
            if self.iterations > max_iter {
                return Err(Error::Numerical("phase-2 iteration cap exceeded".into()));
            }
            let bland = stall > self.total;
            let mut best: Option<(usize, f64, f64)> = None;
            'price: for j in 0..self.total {
                if self.status[j] == VarStatus::Basic {
                    continue;
                }
                let r = red[j];
                let can_up = self.status[j] != VarStatus::AtUpper;
                let can_down = self.status[j] != VarStatus::AtLower;
                let (dir, mag) = if r < -COST_TOL && can_up {
                    (1.0, -r)
                } else if r > COST_TOL && can_down {
                    (-1.0, r)
                } else {
                    continue;
                };
                if bland {
                    best = Some((j, dir, mag));
                    break 'price;
                }
                if best.is_none() || mag > best.unwrap().2 {
                    best = Some((j, dir, mag));
                }
            }
            let Some((j, dir, _)) = best else {
                return Ok(()); // optimal
            };
            match self.step(j, dir, false)? {
                StepOutcome::BoundFlip => {}
                StepOutcome::Pivot(r) => {
                    // update the cost row from the (normalized) pivot row
                    let factor = red[j];
                    if factor != 0.0 {
                        let prow = &self.t[r * self.total..(r + 1) * self.total];
                        for (dst, src) in red.iter_mut().zip(prow) {
                            *dst -= factor * src;
                        }
                        red[j] = 0.0;
                    }
                    since_rebuild += 1;
                    if since_rebuild >= 300 {
                        rebuild(self, &mut red);
                        since_rebuild = 0;
                    }
                }
            }
            let obj: f64 = (0..n).map(|j| objective[j] * self.values[j]).sum();
            if obj >= last_obj - 1e-13 {
                stall += 1;
            } else {
                stall = 0;
            }
            last_obj = obj;
        }
    }

    /// Moves nonbasic column `j` in `dir`, performing either a bound flip or
    /// a pivot. In phase 1 (`relaxed`), basic variables outside their bounds
    /// may travel back to the violated bound and block there.
    fn step(&mut self, j: usize, dir: f64, relaxed: bool) -> Result<StepOutcome> {
        self.iterations += 1;
        let total = self.total;
        // ratio test
        let mut theta = self.upper[j] - self.lower[j]; // bound-flip distance
        if !theta.is_finite() {
            theta = f64::INFINITY;
        }
        let mut leaving: Option<(usize, f64)> = None; // (basis position, new value)
        for i in 0..self.m {
            let a = self.t[i * total + j] * dir;
            if a.abs() <= PIVOT_TOL {
                continue;
            }
            let bi = self.basis[i];
            let v = self.values[bi];
            // basic moves by -a * theta
            let (lo, up) = (self.lower[bi], self.upper[bi]);
            let target = if a > 0.0 {
                // basic decreases: a violated-above basic blocks at its upper
                // bound, a violated-below one never blocks (its violation
                // grows linearly; pricing already accounted for that)
                if relaxed && v > up + FEAS_TOL {
                    up
                } else if relaxed && v < lo - FEAS_TOL {
                    f64::NAN
                } else {
                    lo
                }
            } else {
                // basic increases: mirror image
                if relaxed && v < lo - FEAS_TOL {
                    lo
                } else if relaxed && v > up + FEAS_TOL {
                    f64::NAN
                } else {
                    up
                }
            };
            if !target.is_finite() {
                continue;
            }
            let room = if a > 0.0 { v - target } else { target - v };
            let t_i = (room / a.abs()).max(0.0);
            if t_i < theta - 1e-15 {
                theta = t_i;
                leaving = Some((i, target));
            } else if t_i <= theta + 1e-15 && leaving.is_some() {
                // Bland-friendly tie break: smallest variable index leaves
                let (cur, _) = leaving.unwrap();
                if self.basis[i] < self.basis[cur] {
                    leaving = Some((i, target));
                }
            }
        }
        if theta.is_infinite() {
            return Err(Error::Unbounded);
        }
        // apply the move
        let delta = theta * dir;
        self.values[j] += delta;
        for i in 0..self.m {
            let a = self.t[i * total + j];
            if a != 0.0 {
                let bi = self.basis[i];
                self.values[bi] -= a * delta;
            }
        }
        match leaving {
            None => {
                // bound flip
                self.status[j] = if dir > 0.0 {
                    VarStatus::AtUpper
                } else {
                    VarStatus::AtLower
                };
                // snap to the exact bound to avoid drift
                let snapped = if dir > 0.0 { self.upper[j] } else { self.lower[j] };
                let correction = snapped - self.values[j];
                if correction != 0.0 {
                    self.values[j] = snapped;
                    for i in 0..self.m {
                        let a = self.t[i * total + j];
                        if a != 0.0 {
                            let bi = self.basis[i];
                            self.values[bi] -= a * correction;
                        }
                    }
                }
                Ok(StepOutcome::BoundFlip)
            }
            Some((r, target)) => {
                let out = self.basis[r];
                self.values[out] = target;
                self.status[out] = if target == self.lower[out] {
                    VarStatus::AtLower
                } else {
                    VarStatus::AtUpper
                };
                self.pivot(r, j);
                self.status[j] = VarStatus::Basic;
                self.basis[r] = j;
                Ok(StepOutcome::Pivot(r))
            }
        }
    }

    fn pivot(&mut self, r: usize, j: usize) {
        let total = self.total;
        let pivot = self.t[r * total + j];
        let inv = 1.0 / pivot;
        for v in &mut self.t[r * total..(r + 1) * total] {
            *v *= inv;
        }
        let (head, rest) = self.t.split_at_mut(r * total);
        let (prow, tail) = rest.split_at_mut(total);
        for (i, chunk) in head
            .chunks_exact_mut(total)
            .chain(tail.chunks_exact_mut(total))
            .enumerate()
        {
            let _ = i;
            let factor = chunk[j];
            if factor != 0.0 {
                for (dst, src) in chunk.iter_mut().zip(prow.iter()) {
                    *dst -= factor * src;
                }
                chunk[j] = 0.0;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};

    fn lp(
        objective: Vec<f64>,
        rows: Vec<Vec<f64>>,
        row_lower: Vec<f64>,
        row_upper: Vec<f64>,
        lower: Vec<f64>,
        upper: Vec<f64>,
    ) -> LinearProgram {
        LinearProgram {
            objective,
            rows,
            row_lower,
            row_upper,
            lower,
            upper,
        }
    }

    #[test]
    fn minimizes_single_variable_above_floor() {
        // min x s.t. x >= 1
        let p = lp(
            vec![1.0],
            vec![vec![1.0]],
            vec![1.0],
            vec![f64::INFINITY],
            vec![f64::NEG_INFINITY],
            vec![f64::INFINITY],
        );
        let sol = solve(&p).unwrap();
        assert_abs_diff_eq!(sol.x[0], 1.0, epsilon = 1e-9);
    }

    #[test]
    fn handles_equality_row() {
        // min x + y s.t. x + y = 2, 0 <= x,y <= 3
        let p = lp(
            vec![1.0, 1.0],
            vec![vec![1.0, 1.0]],
            vec![2.0],
            vec![2.0],
            vec![0.0, 0.0],
            vec![3.0, 3.0],
        );
        let sol = solve(&p).unwrap();
        assert_abs_diff_eq!(sol.x[0] + sol.x[1], 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(sol.objective, 2.0, epsilon = 1e-9);
    }

    #[test]
    fn detects_infeasible() {
        // x <= -1 and x >= 1
        let p = lp(
            vec![1.0],
            vec![vec![1.0], vec![1.0]],
            vec![f64::NEG_INFINITY, 1.0],
            vec![-1.0, f64::INFINITY],
            vec![f64::NEG_INFINITY],
            vec![f64::INFINITY],
        );
        assert!(matches!(solve(&p), Err(Error::Infeasible)));
    }

    #[test]
    fn detects_unbounded() {
        let p = lp(
            vec![-1.0],
            vec![vec![1.0]],
            vec![0.0],
            vec![f64::INFINITY],
            vec![0.0],
            vec![f64::INFINITY],
        );
        assert!(matches!(solve(&p), Err(Error::Unbounded)));
    }

    #[test]
    fn degenerate_redundant_rows_terminate() {
        // duplicated constraints around the optimum
        let p = lp(
            vec![1.0, 2.0],
            vec![
                vec![1.0, 1.0],
                vec![1.0, 1.0],
                vec![2.0, 2.0],
                vec![1.0, 0.0],
            ],
            vec![1.0, 1.0, 2.0, 0.0],
            vec![f64::INFINITY; 4],
            vec![0.0, 0.0],
            vec![10.0, 10.0],
        );
        let sol = solve(&p).unwrap();
        assert_abs_diff_eq!(sol.objective, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(sol.x[0], 1.0, epsilon = 1e-9);
    }

    /// Brute-force oracle: enumerate all candidate active sets (rows pinned
    /// at a bound plus variables pinned at a bound), solve the square system,
    /// keep the best feasible vertex.
    fn vertex_enumeration(p: &LinearProgram) -> Option<(Vec<f64>, f64)> {
        use nalgebra::{DMatrix, DVector};
        let n = p.objective.len();
        // candidate equations: (normal vector, rhs)
        let mut eqs: Vec<(Vec<f64>, f64)> = Vec::new();
        for (i, row) in p.rows.iter().enumerate() {
            if p.row_lower[i].is_finite() {
                eqs.push((row.clone(), p.row_lower[i]));
            }
            if p.row_upper[i].is_finite() && p.row_upper[i] != p.row_lower[i] {
                eqs.push((row.clone(), p.row_upper[i]));
            }
        }
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            if p.lower[j].is_finite() {
                eqs.push((e.clone(), p.lower[j]));
            }
            if p.upper[j].is_finite() && p.upper[j] != p.lower[j] {
                eqs.push((e.clone(), p.upper[j]));
            }
        }
        let feasible = |x: &[f64]| -> bool {
            for j in 0..n {
                if x[j] < p.lower[j] - 1e-7 || x[j] > p.upper[j] + 1e-7 {
                    return false;
                }
            }
            for (i, row) in p.rows.iter().enumerate() {
                let v: f64 = row.iter().zip(x).map(|(a, b)| a * b).sum();
                if v < p.row_lower[i] - 1e-7 || v > p.row_upper[i] + 1e-7 {
                    return false;
                }
            }
            true
        };
        let mut best: Option<(Vec<f64>, f64)> = None;
        let k = eqs.len();
        let mut idx: Vec<usize> = (0..n).collect();
        loop {
            // solve the n x n system from eqs[idx]
            let a = DMatrix::from_fn(n, n, |r, c| eqs[idx[r]].0[c]);
            let b = DVector::from_fn(n, |r, _| eqs[idx[r]].1);
            if let Some(x) = a.lu().solve(&b) {
                let xs: Vec<f64> = x.iter().copied().collect();
                if xs.iter().all(|v| v.is_finite()) && feasible(&xs) {
                    let obj: f64 = p.objective.iter().zip(&xs).map(|(c, v)| c * v).sum();
                    if best.is_none() || obj < best.as_ref().unwrap().1 - 0.0 {
                        best = Some((xs, obj));
                    }
                }
            }
            // next combination
            let mut i = n;
            loop {
                if i == 0 {
                    return best;
                }
                i -= 1;
                if idx[i] + (n - i) < k {
                    idx[i] += 1;
                    for l in i + 1..n {
                        idx[l] = idx[l - 1] + 1;
                    }
                    break;
                }
            }
        }
    }

    #[test]
    fn matches_vertex_enumeration_on_random_tiny_lps() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
        let mut solved = 0;
        while solved < 100 {
            let n = rng.random_range(2..=4usize);
            let m = rng.random_range(1..=5usize);
            let objective: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let rows: Vec<Vec<f64>> = (0..m)
                .map(|_| (0..n).map(|_| rng.random_range(-2.0..2.0)).collect())
                .collect();
            let mut row_lower = Vec::new();
            let mut row_upper = Vec::new();
            for _ in 0..m {
                match rng.random_range(0..3) {
                    0 => {
                        row_lower.push(f64::NEG_INFINITY);
                        row_upper.push(rng.random_range(-1.0..3.0));
                    }
                    1 => {
                        row_lower.push(rng.random_range(-3.0..1.0));
                        row_upper.push(f64::INFINITY);
                    }
                    _ => {
                        let v = rng.random_range(-1.0..1.0);
                        row_lower.push(v);
                        row_upper.push(v);
                    }
                }
            }
            let lower: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..0.0)).collect();
            let upper: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..4.0)).collect();
            let p = lp(objective, rows, row_lower, row_upper, lower, upper);
            let oracle = vertex_enumeration(&p);
            match solve(&p) {
                Ok(sol) => {
                    let oracle = oracle.expect("simplex found a solution, oracle must too");
                    assert!(
                        (sol.objective - oracle.1).abs() <= 1e-9 * (1.0 + oracle.1.abs()),
                        "simplex {} vs oracle {}",
                        sol.objective,
                        oracle.1
                    );
                    solved += 1;
                }
                Err(Error::Infeasible) => {
                    assert!(oracle.is_none(), "oracle found {oracle:?} but simplex infeasible");
                }
                Err(Error::Unbounded) => {} // oracle cannot certify unboundedness
                Err(e) => panic!("unexpected error {e:?}"),
            }
        }
    }

    #[test]
    fn respects_variable_bounds_and_negative_costs() {
        // min -x - 2y, x,y in [0, 1], x + y <= 1.5
        let p = lp(
            vec![-1.0, -2.0],
            vec![vec![1.0, 1.0]],
            vec![f64::NEG_INFINITY],
            vec![1.5],
            vec![0.0, 0.0],
            vec![1.0, 1.0],
        );
        let sol = solve(&p).unwrap();
        assert_abs_diff_eq!(sol.x[1], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(sol.x[0], 0.5, epsilon = 1e-9);
    }
}
