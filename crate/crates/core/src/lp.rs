//! Small dense linear programs: two-phase tableau simplex with Bland's
//! pivoting rule, which never cycles and makes the chosen vertex
//! deterministic.

use std::fmt;

/// Pivot elements and reduced costs below this are treated as zero.
pub const LP_TOL: f64 = 1e-10;
const MAX_PIVOTS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cmp {
    Le,
    Ge,
    Eq,
}

impl fmt::Display for Cmp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Cmp::Le => "<=",
            Cmp::Ge => ">=",
            Cmp::Eq => "=",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub name: String,
    pub coeffs: Vec<(usize, f64)>,
    pub cmp: Cmp,
    pub rhs: f64,
}

/// `min objective . x` subject to the constraints and `x >= 0`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpFailure {
    Infeasible,
    Unbounded,
    PivotLimit,
}

impl LpFailure {
    pub fn as_str(self) -> &'static str {
        match self {
            LpFailure::Infeasible => "infeasible",
            LpFailure::Unbounded => "unbounded",
            LpFailure::PivotLimit => "pivot limit reached",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub pivots: usize,
}

impl LinearProgram {
    pub fn new(n_vars: usize) -> Self {
        Self {
            objective: vec![0.0; n_vars],
            constraints: Vec::new(),
        }
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add(&mut self, name: impl Into<String>, coeffs: Vec<(usize, f64)>, cmp: Cmp, rhs: f64) {
        self.constraints.push(Constraint {
            name: name.into(),
            coeffs,
            cmp,
            rhs,
        });
    }

    pub fn solve(&self) -> Result<LpSolution, LpFailure> {
        Tableau::build(self).solve(self)
    }
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    n_struct: usize,
    n_cols: usize,
    first_artificial: usize,
    pivots: usize,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Self {
        let n = lp.n_vars();
        let m = lp.constraints.len();
        // normalise to nonnegative right-hand sides
        let norm: Vec<(Vec<f64>, Cmp, f64)> = lp
            .constraints
            .iter()
            .map(|c| {
                let mut a = vec![0.0; n];
                for &(j, v) in &c.coeffs {
                    a[j] += v;
                }
                if c.rhs < 0.0 {
                    let flipped = match c.cmp {
                        Cmp::Le => Cmp::Ge,
                        Cmp::Ge => Cmp::Le,
                        Cmp::Eq => Cmp::Eq,
                    };
                    (a.into_iter().map(|v| -v).collect(), flipped, -c.rhs)
                } else {
                    (a, c.cmp, c.rhs)
                }
            })
            .collect();
        let n_slack = norm.iter().filter(|r| r.1 != Cmp::Eq).count();
        let n_art = norm.iter().filter(|r| r.1 != Cmp::Le).count();
        let first_artificial = n + n_slack;
        let n_cols = first_artificial + n_art;
        let mut rows = Vec::with_capacity(m);
        let mut basis = Vec::with_capacity(m);
        let (mut s, mut a) = (n, first_artificial);
        for (coeffs, cmp, rhs) in norm {
            let mut row = vec![0.0; n_cols + 1];
            row[..n].copy_from_slice(&coeffs);
            row[n_cols] = rhs;
            match cmp {
                Cmp::Le => {
                    row[s] = 1.0;
                    basis.push(s);
                    s += 1;
                }
                Cmp::Ge => {
                    row[s] = -1.0;
                    row[a] = 1.0;
                    basis.push(a);
                    s += 1;
                    a += 1;
                }
                Cmp::Eq => {
                    row[a] = 1.0;
                    basis.push(a);
                    a += 1;
                }
            }
            rows.push(row);
        }
        Self {
            rows,
            basis,
            n_struct: n,
            n_cols,
            first_artificial,
            pivots: 0,
        }
    }

    fn reduced_costs(&self, cost: &[f64]) -> Vec<f64> {
        let mut d: Vec<f64> = (0..=self.n_cols).map(|j| cost.get(j).copied().unwrap_or(0.0)).collect();
        d[self.n_cols] = 0.0;
        for (r, &b) in self.basis.iter().enumerate() {
            let cb = cost.get(b).copied().unwrap_or(0.0);
            if cb != 0.0 {
                for (dj, tj) in d.iter_mut().zip(&self.rows[r]) {
                    *dj -= cb * tj;
                }
            }
        }
        d
    }

    fn pivot(&mut self, r: usize, col: usize, d: &mut [f64]) {
        let p = self.rows[r][col];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[col];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                row[col] = 0.0;
            }
        }
        let f = d[col];
        if f != 0.0 {
            for (v, pv) in d.iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
            d[col] = 0.0;
        }
        self.basis[r] = col;
        self.pivots += 1;
    }

    /// Bland's rule simplex over columns `< allowed`.
    fn run(&mut self, d: &mut [f64], allowed: usize) -> Result<(), LpFailure> {
        loop {
            if self.pivots > MAX_PIVOTS {
                return Err(LpFailure::PivotLimit);
            }
            let Some(col) = (0..allowed).find(|&j| d[j] < -LP_TOL) else {
                return Ok(());
            };
            let rhs = self.n_cols;
            let mut best: Option<(usize, f64)> = None;
            for (r, row) in self.rows.iter().enumerate() {
                if row[col] > LP_TOL {
                    let ratio = row[rhs] / row[col];
                    best = match best {
                        None => Some((r, ratio)),
                        Some((br, bq)) => {
                            if ratio < bq - LP_TOL || (ratio <= bq + LP_TOL && self.basis[r] < self.basis[br]) {
                                Some((r, ratio))
                            } else {
                                Some((br, bq))
                            }
                        }
                    };
                }
            }
            let Some((r, _)) = best else {
                return Err(LpFailure::Unbounded);
            };
            self.pivot(r, col, d);
        }
    }

    fn solve(mut self, lp: &LinearProgram) -> Result<LpSolution, LpFailure> {
        let rhs = self.n_cols;
        if self.first_artificial < self.n_cols {
            let mut phase1 = vec![0.0; self.n_cols];
            for c in phase1.iter_mut().skip(self.first_artificial) {
                *c = 1.0;
            }
            let mut d = self.reduced_costs(&phase1);
            self.run(&mut d, self.n_cols)?;
            let infeasibility: f64 = self
                .basis
                .iter()
                .zip(&self.rows)
                .filter(|(b, _)| **b >= self.first_artificial)
                .map(|(_, row)| row[rhs])
                .sum();
            let scale = 1.0 + lp.constraints.iter().map(|c| c.rhs.abs()).fold(0.0, f64::max);
            if infeasibility > 1e-9 * scale {
                return Err(LpFailure::Infeasible);
            }
            // drive remaining (zero-valued) artificials out of the basis
            for r in 0..self.rows.len() {
                if self.basis[r] >= self.first_artificial {
                    if let Some(col) = (0..self.first_artificial).find(|&j| self.rows[r][j].abs() > LP_TOL) {
                        let mut dummy = vec![0.0; self.n_cols + 1];
                        self.pivot(r, col, &mut dummy);
                    }
                }
            }
        }
        let mut d = self.reduced_costs(&lp.objective);
        self.run(&mut d, self.first_artificial)?;
        let mut x = vec![0.0; self.n_struct];
        for (r, &b) in self.basis.iter().enumerate() {
            if b < self.n_struct {
                x[b] = self.rows[r][rhs];
            }
        }
        let objective = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
        Ok(LpSolution {
            x,
            objective,
            pivots: self.pivots,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn textbook_maximisation() {
        // max 3x + 5y  s.t. x <= 4, 2y <= 12, 3x + 2y <= 18  ->  36 at (2, 6)
        let mut lp = LinearProgram::new(2);
        lp.objective = vec![-3.0, -5.0];
        lp.add("a", vec![(0, 1.0)], Cmp::Le, 4.0);
        lp.add("b", vec![(1, 2.0)], Cmp::Le, 12.0);
        lp.add("c", vec![(0, 3.0), (1, 2.0)], Cmp::Le, 18.0);
        let s = lp.solve().unwrap();
        assert_relative_eq!(s.objective, -36.0, epsilon = 1e-9);
        assert_relative_eq!(s.x[0], 2.0, epsilon = 1e-9);
        assert_relative_eq!(s.x[1], 6.0, epsilon = 1e-9);
    }

    #[test]
    fn ge_and_eq_rows_need_phase_one() {
        // min x + y  s.t. x + 2y >= 4, x - y = 1  ->  x = 2, y = 1
        let mut lp = LinearProgram::new(2);
        lp.objective = vec![1.0, 1.0];
        lp.add("g", vec![(0, 1.0), (1, 2.0)], Cmp::Ge, 4.0);
        lp.add("e", vec![(0, 1.0), (1, -1.0)], Cmp::Eq, 1.0);
        let s = lp.solve().unwrap();
        assert_relative_eq!(s.objective, 3.0, epsilon = 1e-9);
    }

    #[test]
    fn negative_rhs_is_normalised() {
        // min b  s.t. -b - x <= -1, x <= 0.25  ->  b = 0.75
        let mut lp = LinearProgram::new(2);
        lp.objective = vec![1.0, 0.0];
        lp.add("p", vec![(0, -1.0), (1, -1.0)], Cmp::Le, -1.0);
        lp.add("q", vec![(1, 1.0)], Cmp::Le, 0.25);
        let s = lp.solve().unwrap();
        assert_relative_eq!(s.objective, 0.75, epsilon = 1e-9);
    }

    #[test]
    fn detects_infeasible_and_unbounded() {
        let mut lp = LinearProgram::new(1);
        lp.objective = vec![1.0];
        lp.add("lo", vec![(0, 1.0)], Cmp::Ge, 2.0);
        lp.add("hi", vec![(0, 1.0)], Cmp::Le, 1.0);
        assert_eq!(lp.solve(), Err(LpFailure::Infeasible));

        let mut lp = LinearProgram::new(1);
        lp.objective = vec![-1.0];
        lp.add("lo", vec![(0, 1.0)], Cmp::Ge, 0.0);
        assert_eq!(lp.solve(), Err(LpFailure::Unbounded));
    }

    #[test]
    fn degenerate_problem_terminates() {
        // classic cycling example under the largest-coefficient rule
        let mut lp = LinearProgram::new(4);
        lp.objective = vec![-0.75, 150.0, -0.02, 6.0];
        lp.add("r1", vec![(0, 0.25), (1, -60.0), (2, -0.04), (3, 9.0)], Cmp::Le, 0.0);
        lp.add("r2", vec![(0, 0.5), (1, -90.0), (2, -0.02), (3, 3.0)], Cmp::Le, 0.0);
        lp.add("r3", vec![(2, 1.0)], Cmp::Le, 1.0);
        let s = lp.solve().unwrap();
        assert_relative_eq!(s.objective, -0.05, epsilon = 1e-9);
    }

    #[test]
    fn agrees_with_reference_solver_on_random_programs() {
        use microlp::{ComparisonOp, OptimizationDirection, Problem};
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let n = rng.gen_range(1..=5);
            let m = rng.gen_range(1..=5);
            let mut lp = LinearProgram::new(n);
            let mut reference = Problem::new(OptimizationDirection::Minimize);
            lp.objective = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let vars: Vec<_> = lp
                .objective
                .iter()
                .map(|c| reference.add_var(*c, (0.0, f64::INFINITY)))
                .collect();
            for r in 0..m {
                let coeffs: Vec<(usize, f64)> = (0..n).map(|j| (j, rng.gen_range(0.0..3.0))).collect();
                let rhs = rng.gen_range(1.0..10.0);
                lp.add(format!("r{r}"), coeffs.clone(), Cmp::Le, rhs);
                let expr: Vec<_> = coeffs.iter().map(|(j, v)| (vars[*j], *v)).collect();
                reference.add_constraint(&expr[..], ComparisonOp::Le, rhs);
            }
            let ours = lp.solve();
            let theirs = reference.solve().ok().and_then(|o| o.into_solution().ok());
            match (ours, theirs) {
                (Ok(a), Some(b)) => assert!((a.objective - b.objective()).abs() < 1e-6),
                (Err(LpFailure::Unbounded), None) => {}
                (a, b) => panic!("disagreement: {a:?} vs {:?}", b.map(|s| s.objective())),
            }
        }
    }
}
