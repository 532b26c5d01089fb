use std::cmp::Ordering;

use super::{P1Problem, RoundedSolution, SolverError, Usage};

/// Largest number of per-client choice combinations `exact_solve` accepts.
pub const DEFAULT_EXACT_BUDGET: f64 = (1u64 << 20) as f64;

pub fn exact_solve(p1: &P1Problem) -> Result<RoundedSolution, SolverError> {
    exact_solve_with_budget(p1, DEFAULT_EXACT_BUDGET)
}

/// Branch and bound over clients, each taking one of its triples or none.
/// Budget is the product over clients of (candidates + 1).
pub fn exact_solve_with_budget(p1: &P1Problem, budget: f64) -> Result<RoundedSolution, SolverError> {
    let combinations: f64 = (0..p1.num_clients()).map(|i| (p1.client_candidates(i).len() + 1) as f64).product();
    if combinations > budget {
        return Err(SolverError::BudgetExceeded { combinations, budget });
    }

    // Only positive-weight triples can improve on leaving a client out.
    let mut clients: Vec<(usize, Vec<usize>)> = (0..p1.num_clients())
        .map(|i| {
            let mut opts: Vec<usize> = p1.client_candidates(i).iter().copied().filter(|&v| p1.weight(v) > 0.0).collect();
            opts.sort_by(|&a, &b| p1.weight(b).partial_cmp(&p1.weight(a)).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
            (i, opts)
        })
        .filter(|(_, o)| !o.is_empty())
        .collect();
    clients.sort_by(|a, b| p1.weight(b.1[0]).partial_cmp(&p1.weight(a.1[0])).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0)));

    let mut suffix = vec![0.0; clients.len() + 1];
    for d in (0..clients.len()).rev() {
        suffix[d] = suffix[d + 1] + p1.weight(clients[d].1[0]);
    }

    let mut search = Search { p1, clients: &clients, suffix, usage: Usage::new(p1), path: Vec::new(), best: Vec::new(), best_value: 0.0 };
    search.descend(0, 0.0);
    Ok(RoundedSolution::from_chosen(p1, search.best))
}

struct Search<'a> {
    p1: &'a P1Problem,
    clients: &'a [(usize, Vec<usize>)],
    suffix: Vec<f64>,
    usage: Usage,
    path: Vec<usize>,
    best: Vec<usize>,
    best_value: f64,
}

impl Search<'_> {
    fn descend(&mut self, depth: usize, value: f64) {
        if value > self.best_value {
            self.best_value = value;
            self.best = self.path.clone();
        }
        if depth == self.clients.len() || value + self.suffix[depth] <= self.best_value {
            return;
        }
        for &v in &self.clients[depth].1 {
            if self.usage.fits(self.p1, v) {
                self.usage.add(self.p1, v);
                self.path.push(v);
                self.descend(depth + 1, value + self.p1.weight(v));
                self.path.pop();
                self.usage.remove(self.p1, v);
            }
        }
        self.descend(depth + 1, value);
    }
}
