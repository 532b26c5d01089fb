//! Dense-tableau primal simplex for packing-form linear programs:
//! maximize `c·x` subject to `A x <= b`, `x >= 0`, with `b >= 0`.
//!
//! The slack basis is feasible for `b >= 0`, so no phase one is needed.
//! Pivoting uses the steepest reduced cost and switches to Bland's rule for
//! good after a run of degenerate pivots.

use thiserror::Error;

const EPS: f64 = 1e-10;
const PIVOT_TOL: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-9;
const COST_TOL: f64 = 1e-11;
const DEGENERATE_SWITCH: usize = 50;

#[derive(Debug, Error, PartialEq)]
pub enum LpError {
    #[error("right-hand side of row {0} is negative")]
    NegativeRhs(usize),
    #[error("objective is unbounded")]
    Unbounded,
    #[error("simplex iteration limit reached")]
    IterationLimit,
}

/// `sum coeffs <= rhs` over sparse `(column, coefficient)` terms.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PackingLp {
    pub objective: Vec<f64>,
    pub rows: Vec<Row>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub pivots: usize,
}

impl PackingLp {
    pub fn new(num_vars: usize) -> Self {
        Self { objective: vec![0.0; num_vars], rows: Vec::new() }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_row(&mut self, coeffs: Vec<(usize, f64)>, rhs: f64) {
        self.rows.push(Row { coeffs, rhs });
    }

    pub fn solve(&self) -> Result<LpSolution, LpError> {
        let n = self.num_vars();
        let m = self.rows.len();
        for (i, r) in self.rows.iter().enumerate() {
            if r.rhs < -EPS {
                return Err(LpError::NegativeRhs(i));
            }
        }
        if n == 0 {
            return Ok(LpSolution { x: Vec::new(), objective: 0.0, pivots: 0 });
        }

        let width = n + m + 1;
        let rhs_col = n + m;
        // Row m is the objective row holding negated reduced costs. Rows are
        // scaled to unit max coefficient; this leaves x unchanged.
        let mut t = vec![0.0; (m + 1) * width];
        for (i, r) in self.rows.iter().enumerate() {
            let row = &mut t[i * width..(i + 1) * width];
            for &(j, a) in &r.coeffs {
                row[j] += a;
            }
            let scale = row[..n].iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
            let scale = if scale > 0.0 { 1.0 / scale } else { 1.0 };
            for v in &mut row[..n] {
                *v *= scale;
            }
            row[n + i] = 1.0;
            row[rhs_col] = r.rhs.max(0.0) * scale;
        }
        for j in 0..n {
            t[m * width + j] = -self.objective[j];
        }
        let cost_tol = COST_TOL * self.objective.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
        let mut basis: Vec<usize> = (n..n + m).collect();

        let max_pivots = 50 * (n + m) + 1000;
        let mut pivots = 0;
        let mut degenerate_run = 0;
        loop {
            let bland = degenerate_run >= DEGENERATE_SWITCH;
            let obj = &t[m * width..(m + 1) * width];
            let entering = if bland {
                obj[..n + m].iter().position(|&v| v < -cost_tol)
            } else {
                let mut best = None;
                let mut best_val = -cost_tol;
                for (j, &v) in obj[..n + m].iter().enumerate() {
                    if v < best_val {
                        best_val = v;
                        best = Some(j);
                    }
                }
                best
            };
            let Some(e) = entering else { break };

            // Two-pass ratio test: bound the step with a small feasibility
            // allowance, then pick the best-conditioned row under the bound.
            let mut bound = f64::INFINITY;
            for i in 0..m {
                let a = t[i * width + e];
                if a > PIVOT_TOL {
                    bound = bound.min((t[i * width + rhs_col] + FEAS_TOL) / a);
                }
            }
            if bound == f64::INFINITY {
                return Err(LpError::Unbounded);
            }
            let mut leaving: Option<usize> = None;
            for i in 0..m {
                let a = t[i * width + e];
                if a > PIVOT_TOL && t[i * width + rhs_col] / a <= bound {
                    let better = match leaving {
                        None => true,
                        Some(l) if bland => basis[i] < basis[l],
                        Some(l) => a > t[l * width + e],
                    };
                    if better {
                        leaving = Some(i);
                    }
                }
            }
            let r = leaving.expect("bounding row qualifies");
            let step = t[r * width + rhs_col] / t[r * width + e];
            if step <= FEAS_TOL {
                degenerate_run += 1;
            } else if !bland {
                degenerate_run = 0;
            }

            pivot(&mut t, width, r, e);
            basis[r] = e;
            for i in 0..m {
                let v = &mut t[i * width + rhs_col];
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
            pivots += 1;
            if pivots > max_pivots {
                return Err(LpError::IterationLimit);
            }
        }

        let mut x = vec![0.0; n];
        for (i, &b) in basis.iter().enumerate() {
            if b < n {
                x[b] = t[i * width + rhs_col].max(0.0);
            }
        }
        let objective = x.iter().zip(&self.objective).map(|(a, b)| a * b).sum();
        Ok(LpSolution { x, objective, pivots })
    }
}

fn pivot(t: &mut [f64], width: usize, r: usize, e: usize) {
    let p = t[r * width + e];
    for v in &mut t[r * width..(r + 1) * width] {
        *v /= p;
    }
    let (before, rest) = t.split_at_mut(r * width);
    let (prow, after) = rest.split_at_mut(width);
    let eliminate = |row: &mut [f64]| {
        let f = row[e];
        if f.abs() > 0.0 {
            for (v, &pv) in row.iter_mut().zip(prow.iter()) {
                *v -= f * pv;
                if v.abs() < 1e-13 {
                    *v = 0.0;
                }
            }
            row[e] = 0.0;
        }
    };
    for row in before.chunks_mut(width) {
        eliminate(row);
    }
    for row in after.chunks_mut(width) {
        eliminate(row);
    }
}
