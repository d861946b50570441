//! Dense two-phase tableau simplex for `minimize cᵀx  s.t.  Ax ≤ b, x ≥ 0`.
//!
//! Pricing is Dantzig's most-negative reduced cost; after a run of degenerate
//! pivots the solver switches to Bland's smallest-index rule, which cannot
//! cycle. Row multipliers (duals) are read off the slack columns of the final
//! objective row.

use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-11;
const COST_TOL: f64 = 1e-10;
const FEAS_TOL: f64 = 1e-8;
const MAX_PIVOTS: usize = 100_000;
const DEGENERATE_STREAK: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub c: Vec<f64>,
    /// Constraint rows, each of length `c.len()`.
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    /// Multiplier of each constraint row; non-positive at optimality.
    pub duals: Vec<f64>,
    pub objective: f64,
    pub pivots: usize,
}

struct Tableau {
    rows: usize,
    cols: usize,
    /// `(rows + 1) × (cols + 1)`, row-major; the last row is the objective
    /// and the last column the right-hand side.
    data: Vec<f64>,
    basis: Vec<usize>,
    pivots: usize,
}

impl Tableau {
    fn width(&self) -> usize {
        self.cols + 1
    }

    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.width() + c]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.at(r, self.cols)
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let w = self.width();
        let inv = 1.0 / self.data[row * w + col];
        for v in &mut self.data[row * w..(row + 1) * w] {
            *v *= inv;
        }
        let pivot_row: Vec<f64> = self.data[row * w..(row + 1) * w].to_vec();
        for r in 0..=self.rows {
            if r == row {
                continue;
            }
            let factor = self.data[r * w + col];
            if factor == 0.0 {
                continue;
            }
            let target = &mut self.data[r * w..(r + 1) * w];
            for (t, &p) in target.iter_mut().zip(&pivot_row) {
                *t -= factor * p;
            }
            target[col] = 0.0;
        }
        self.basis[row] = col;
        self.pivots += 1;
    }

    /// Sets the objective row to `costs` and prices out the basic columns.
    fn set_objective(&mut self, costs: &[f64]) {
        let w = self.width();
        let obj = self.rows * w;
        self.data[obj..obj + w].fill(0.0);
        self.data[obj..obj + costs.len()].copy_from_slice(costs);
        for r in 0..self.rows {
            let cb = costs.get(self.basis[r]).copied().unwrap_or(0.0);
            if cb != 0.0 {
                for c in 0..w {
                    self.data[obj + c] -= cb * self.data[r * w + c];
                }
            }
        }
    }

    /// Runs simplex iterations over columns `< limit`.
    fn optimize(&mut self, limit: usize) -> Result<()> {
        let mut degenerate = 0usize;
        loop {
            if self.pivots > MAX_PIVOTS {
                return Err(Error::Solver(format!("simplex exceeded {MAX_PIVOTS} pivots")));
            }
            let bland = degenerate >= DEGENERATE_STREAK;
            let obj = self.rows;
            let mut entering = None;
            let mut best = -COST_TOL;
            for c in 0..limit {
                let rc = self.at(obj, c);
                if rc < best {
                    entering = Some(c);
                    if bland {
                        break;
                    }
                    best = rc;
                }
            }
            let Some(col) = entering else { return Ok(()) };

            // Harris two-pass ratio test: bound the step with a small
            // feasibility slack, then take the largest pivot within it.
            let col_max = (0..self.rows).map(|r| self.at(r, col)).fold(0.0f64, f64::max);
            let piv_tol = PIVOT_TOL.max(1e-9 * col_max);
            let mut bound = f64::INFINITY;
            for r in 0..self.rows {
                let a = self.at(r, col);
                if a > piv_tol {
                    bound = bound.min((self.rhs(r).max(0.0) + FEAS_TOL) / a);
                }
            }
            if !bound.is_finite() {
                return Err(Error::Solver("linear program is unbounded".into()));
            }
            let mut leaving: Option<(usize, f64)> = None;
            for r in 0..self.rows {
                let a = self.at(r, col);
                if a > piv_tol && self.rhs(r).max(0.0) / a <= bound {
                    let better = match leaving {
                        None => true,
                        Some((lr, _)) => {
                            let la = self.at(lr, col);
                            if bland {
                                self.basis[r] < self.basis[lr]
                            } else {
                                a > la
                            }
                        }
                    };
                    if better {
                        leaving = Some((r, self.rhs(r).max(0.0) / a));
                    }
                }
            }
            let (row, ratio) = leaving.expect("bound is attained");
            if ratio <= 1e-14 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            self.pivot(row, col);
        }
    }
}

/// Solves `min cᵀx s.t. Ax ≤ b, x ≥ 0`.
pub fn solve(lp: &LinearProgram) -> Result<LpSolution> {
    let n = lp.c.len();
    let m = lp.a.len();
    if lp.b.len() != m {
        return Err(Error::Dimension { expected: m, found: lp.b.len() });
    }
    if let Some(row) = lp.a.iter().find(|r| r.len() != n) {
        return Err(Error::Dimension { expected: n, found: row.len() });
    }
    if lp.c.iter().chain(&lp.b).chain(lp.a.iter().flatten()).any(|v| !v.is_finite()) {
        return Err(Error::Solver("non-finite coefficient in linear program".into()));
    }

    let negative: Vec<usize> = (0..m).filter(|&i| lp.b[i] < 0.0).collect();
    let n_art = negative.len();
    let cols = n + m + n_art;
    let w = cols + 1;
    let mut data = vec![0.0; (m + 1) * w];
    let mut basis = vec![0; m];
    let mut art = 0;
    for i in 0..m {
        let sign = if lp.b[i] < 0.0 { -1.0 } else { 1.0 };
        let row = &mut data[i * w..(i + 1) * w];
        for (j, &a) in lp.a[i].iter().enumerate() {
            row[j] = sign * a;
        }
        row[n + i] = sign;
        row[cols] = sign * lp.b[i];
        if sign < 0.0 {
            row[n + m + art] = 1.0;
            basis[i] = n + m + art;
            art += 1;
        } else {
            basis[i] = n + i;
        }
    }
    let mut tab = Tableau { rows: m, cols, data, basis, pivots: 0 };

    if n_art > 0 {
        let mut phase1 = vec![0.0; cols];
        phase1[n + m..].fill(1.0);
        tab.set_objective(&phase1);
        tab.optimize(cols)?;
        let infeasibility = -tab.rhs(m);
        let scale = lp.b.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
        if infeasibility > FEAS_TOL * scale {
            return Err(Error::Solver(format!(
                "linear program is infeasible (phase-one residual {infeasibility})"
            )));
        }
        // Drive zero-level artificials out of the basis where possible.
        for r in 0..m {
            if tab.basis[r] >= n + m {
                if let Some(c) = (0..n + m).find(|&c| tab.at(r, c).abs() > 1e-9) {
                    tab.pivot(r, c);
                }
            }
        }
    }

    let mut costs = vec![0.0; cols];
    costs[..n].copy_from_slice(&lp.c);
    tab.set_objective(&costs);
    tab.optimize(n + m)?;

    let mut x = vec![0.0; n];
    for r in 0..m {
        if tab.basis[r] < n {
            x[tab.basis[r]] = tab.rhs(r).max(0.0);
        }
    }
    let duals = (0..m).map(|i| -tab.at(m, n + i)).collect();
    let objective = lp.c.iter().zip(&x).map(|(c, x)| c * x).sum();
    Ok(LpSolution { x, duals, objective, pivots: tab.pivots })
}

/// Solves the program through its dual `min bᵀy s.t. −Aᵀy ≤ c, y ≥ 0`.
///
/// When `c ≥ 0` the dual starts feasible at `y = 0`, skipping phase one, and
/// it has one row per primal variable, which is much smaller when the primal
/// has many more constraints than variables. The primal solution is
/// recovered from the dual's row multipliers.
pub fn solve_via_dual(lp: &LinearProgram) -> Result<LpSolution> {
    let n = lp.c.len();
    let m = lp.a.len();
    let a_dual: Vec<Vec<f64>> = (0..n).map(|j| lp.a.iter().map(|row| -row[j]).collect()).collect();
    let dual = LinearProgram { c: lp.b.clone(), a: a_dual, b: lp.c.clone() };
    let sol = solve(&dual)?;
    let x: Vec<f64> = sol.duals.iter().map(|&pi| (-pi).max(0.0)).collect();
    let duals = sol.x.iter().map(|&y| -y).collect();
    let objective = lp.c.iter().zip(&x).map(|(c, x)| c * x).sum();
    debug_assert_eq!(x.len(), n);
    debug_assert_eq!(sol.x.len(), m);
    Ok(LpSolution { x, duals, objective, pivots: sol.pivots })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Brute-force vertex enumeration for two-variable programs.
    fn brute_force_2d(lp: &LinearProgram) -> f64 {
        let mut rows = lp.a.clone();
        let mut rhs = lp.b.clone();
        rows.push(vec![-1.0, 0.0]);
        rhs.push(0.0);
        rows.push(vec![0.0, -1.0]);
        rhs.push(0.0);
        let mut best = f64::INFINITY;
        for i in 0..rows.len() {
            for j in i + 1..rows.len() {
                let det = rows[i][0] * rows[j][1] - rows[i][1] * rows[j][0];
                if det.abs() < 1e-12 {
                    continue;
                }
                let x = (rhs[i] * rows[j][1] - rows[i][1] * rhs[j]) / det;
                let y = (rows[i][0] * rhs[j] - rhs[i] * rows[j][0]) / det;
                let feasible = rows.iter().zip(&rhs).all(|(r, b)| r[0] * x + r[1] * y <= b + 1e-9);
                if feasible {
                    best = best.min(lp.c[0] * x + lp.c[1] * y);
                }
            }
        }
        best
    }

    #[test]
    fn textbook_maximization() {
        // max 3x + 5y s.t. x ≤ 4, 2y ≤ 12, 3x + 2y ≤ 18 → (2, 6), value 36.
        let lp = LinearProgram {
            c: vec![-3.0, -5.0],
            a: vec![vec![1.0, 0.0], vec![0.0, 2.0], vec![3.0, 2.0]],
            b: vec![4.0, 12.0, 18.0],
        };
        let sol = solve(&lp).unwrap();
        assert_relative_eq!(sol.x[0], 2.0, epsilon = 1e-12);
        assert_relative_eq!(sol.x[1], 6.0, epsilon = 1e-12);
        assert_relative_eq!(sol.objective, -36.0, epsilon = 1e-12);
        // Known shadow prices (0, 1.5, 1) for the maximization, negated here.
        assert_relative_eq!(sol.duals[0], 0.0, epsilon = 1e-12);
        assert_relative_eq!(sol.duals[1], -1.5, epsilon = 1e-12);
        assert_relative_eq!(sol.duals[2], -1.0, epsilon = 1e-12);
        let strong: f64 = sol.duals.iter().zip(&lp.b).map(|(y, b)| y * b).sum();
        assert_relative_eq!(strong, sol.objective, epsilon = 1e-12);
    }

    #[test]
    fn phase_one_with_equality() {
        // min x + 2y s.t. x + y = 1 (as two inequalities), x ≤ 0.3.
        let lp = LinearProgram {
            c: vec![1.0, 2.0],
            a: vec![vec![1.0, 1.0], vec![-1.0, -1.0], vec![1.0, 0.0]],
            b: vec![1.0, -1.0, 0.3],
        };
        let sol = solve(&lp).unwrap();
        assert_relative_eq!(sol.x[0], 0.3, epsilon = 1e-12);
        assert_relative_eq!(sol.x[1], 0.7, epsilon = 1e-12);
        assert_relative_eq!(sol.objective, brute_force_2d(&lp), epsilon = 1e-12);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let infeasible = LinearProgram {
            c: vec![1.0, 1.0],
            a: vec![vec![1.0, 1.0], vec![-1.0, -1.0]],
            b: vec![1.0, -2.0],
        };
        assert!(matches!(solve(&infeasible), Err(Error::Solver(_))));
        let unbounded = LinearProgram { c: vec![-1.0, 0.0], a: vec![vec![0.0, 1.0]], b: vec![1.0] };
        assert!(matches!(solve(&unbounded), Err(Error::Solver(_))));
    }

    #[test]
    fn dual_route_matches_primal() {
        // Minimax fit: min u s.t. |r_j·w| ≤ u, Σw = 1, w ≥ 0.
        let residuals = [[1.0, -2.0, 0.5], [-0.3, 1.0, 2.0], [2.0, 0.1, -1.0], [0.4, 0.4, -0.2]];
        let mut a = Vec::new();
        let mut b = Vec::new();
        for r in &residuals {
            a.push(vec![r[0], r[1], r[2], -1.0]);
            a.push(vec![-r[0], -r[1], -r[2], -1.0]);
            b.extend([0.0, 0.0]);
        }
        a.push(vec![1.0, 1.0, 1.0, 0.0]);
        a.push(vec![-1.0, -1.0, -1.0, 0.0]);
        b.extend([1.0, -1.0]);
        let lp = LinearProgram { c: vec![0.0, 0.0, 0.0, 1.0], a, b };
        let primal = solve(&lp).unwrap();
        let dual = solve_via_dual(&lp).unwrap();
        assert_relative_eq!(primal.objective, dual.objective, epsilon = 1e-10);
        let u_direct = residuals
            .iter()
            .map(|r| (r[0] * dual.x[0] + r[1] * dual.x[1] + r[2] * dual.x[2]).abs())
            .fold(0.0, f64::max);
        assert_relative_eq!(u_direct, dual.objective, epsilon = 1e-10);
        assert_relative_eq!(dual.x[..3].iter().sum::<f64>(), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn random_two_variable_programs_match_enumeration() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let rows = rng.random_range(1..6);
            let lp = LinearProgram {
                c: vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)],
                a: (0..rows)
                    .map(|_| vec![rng.random_range(-1.0..2.0), rng.random_range(-1.0..2.0)])
                    .chain([vec![1.0, 1.0]])
                    .collect(),
                b: (0..rows).map(|_| rng.random_range(-0.5..3.0)).chain([5.0]).collect(),
            };
            let oracle = brute_force_2d(&lp);
            match solve(&lp) {
                Ok(sol) => assert_relative_eq!(sol.objective, oracle, epsilon = 1e-9),
                Err(_) => assert!(oracle.is_infinite(), "solver failed on a feasible program"),
            }
        }
    }
}
