use std::cmp::Ordering;

use super::{solve_lp_relaxation, P1Problem, RoundedSolution, SolverError, Usage};

/// Rounds the relaxation one client at a time.
///
/// Each pass re-solves the relaxation with the accepted triples pinned and
/// the dropped ones removed, then walks the undecided candidates by
/// `weight * theta` (descending; ties by weight, then candidate order). The
/// first candidate that still fits is accepted; candidates that no longer
/// fit are dropped, and a client whose candidates are all dropped is
/// rejected. Candidates with non-positive weight stay in the list, so every
/// client that fits ends up admitted.
///
/// When the single best candidate beats the result and was not taken, the
/// rounding is repeated with that candidate accepted first and the better
/// of the two runs is returned.
pub fn greedy_round(p1: &P1Problem) -> Result<RoundedSolution, SolverError> {
    let first = round_from(p1, None)?;
    let empty = Usage::new(p1);
    let top = (0..p1.len()).filter(|&v| p1.weight(v) > 0.0 && empty.fits(p1, v)).max_by(|&a, &b| {
        p1.weight(a).partial_cmp(&p1.weight(b)).unwrap_or(Ordering::Equal).then(b.cmp(&a))
    });
    match top {
        Some(v) if p1.weight(v) > first.objective && !first.chosen.contains(&v) => {
            let second = round_from(p1, Some(v))?;
            Ok(if second.objective > first.objective { second } else { first })
        }
        _ => Ok(first),
    }
}

fn round_from(p1: &P1Problem, seed: Option<usize>) -> Result<RoundedSolution, SolverError> {
    let n = p1.len();
    let mut usage = Usage::new(p1);
    let mut accepted: Vec<usize> = Vec::new();
    let mut removed = vec![false; n];
    let mut decided = vec![false; p1.num_clients()];
    if let Some(v) = seed {
        usage.add(p1, v);
        accepted.push(v);
        decided[p1.candidates()[v].client] = true;
    }
    let mut theta: Option<Vec<f64>> = None;

    loop {
        let mut open: Vec<usize> =
            (0..n).filter(|&v| !removed[v] && !decided[p1.candidates()[v].client]).collect();
        if open.is_empty() {
            break;
        }
        let th = match theta.take() {
            Some(t) => t,
            None => solve_lp_relaxation(p1, &accepted, &removed)?,
        };
        let key = |v: usize| p1.weight(v) * th[v];
        open.sort_by(|&a, &b| {
            key(b)
                .partial_cmp(&key(a))
                .unwrap_or(Ordering::Equal)
                .then(p1.weight(b).partial_cmp(&p1.weight(a)).unwrap_or(Ordering::Equal))
                .then(a.cmp(&b))
        });

        let mut dropped_support = false;
        let mut chosen = None;
        for v in open {
            let client = p1.candidates()[v].client;
            if decided[client] {
                continue;
            }
            if usage.fits(p1, v) {
                chosen = Some(v);
                break;
            }
            removed[v] = true;
            dropped_support |= th[v] > 0.0;
            if p1.client_candidates(client).iter().all(|&w| removed[w]) {
                decided[client] = true;
            }
        }
        let Some(v) = chosen else { break };
        usage.add(p1, v);
        accepted.push(v);
        decided[p1.candidates()[v].client] = true;
        // The previous relaxation stays optimal after pinning a variable it
        // already had at one, as long as nothing it used was dropped.
        if th[v] >= 1.0 - 1e-12 && !dropped_support {
            theta = Some(th);
        }
    }
    Ok(RoundedSolution::from_chosen(p1, accepted))
}
