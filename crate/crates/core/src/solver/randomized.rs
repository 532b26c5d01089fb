use rand::Rng;

use super::{solve_lp_relaxation, P1Problem, RoundedSolution, SolverError, Usage};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RoundingScore {
    /// Sample by `theta`; leftover mass `1 - sum theta` means no triple.
    Theta,
    /// Sample by positive `weight * theta`, normalized per client.
    WeightedTheta,
}

/// Solves the relaxation once and samples with [`RoundingScore::Theta`].
pub fn randomized_rounding<R: Rng + ?Sized>(p1: &P1Problem, rng: &mut R) -> Result<RoundedSolution, SolverError> {
    let theta = solve_lp_relaxation(p1, &[], &[])?;
    Ok(round_fractional(p1, &theta, RoundingScore::Theta, rng))
}

/// Solves the relaxation once and samples with [`RoundingScore::WeightedTheta`].
pub fn weighted_randomized_rounding<R: Rng + ?Sized>(
    p1: &P1Problem,
    rng: &mut R,
) -> Result<RoundedSolution, SolverError> {
    let theta = solve_lp_relaxation(p1, &[], &[])?;
    Ok(round_fractional(p1, &theta, RoundingScore::WeightedTheta, rng))
}

/// Samples at most one triple per client from `theta`, then keeps the
/// samples that fit, in client order.
pub fn round_fractional<R: Rng + ?Sized>(
    p1: &P1Problem,
    theta: &[f64],
    score: RoundingScore,
    rng: &mut R,
) -> RoundedSolution {
    let mut usage = Usage::new(p1);
    let mut chosen = Vec::new();
    for i in 0..p1.num_clients() {
        let vars = p1.client_candidates(i);
        let weights: Vec<f64> = vars
            .iter()
            .map(|&v| match score {
                RoundingScore::Theta => theta[v].max(0.0),
                RoundingScore::WeightedTheta => (p1.weight(v) * theta[v]).max(0.0),
            })
            .collect();
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            continue;
        }
        let scale = match score {
            RoundingScore::Theta => total.max(1.0),
            RoundingScore::WeightedTheta => total,
        };
        let mut draw = rng.gen::<f64>() * scale;
        let mut pick = None;
        for (&v, &w) in vars.iter().zip(&weights) {
            if draw < w {
                pick = Some(v);
                break;
            }
            draw -= w;
        }
        if let Some(v) = pick {
            if usage.fits(p1, v) {
                usage.add(p1, v);
                chosen.push(v);
            }
        }
    }
    RoundedSolution::from_chosen(p1, chosen)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::testing::cand;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_path_client() -> P1Problem {
        P1Problem::new(0.0, 1, vec![1], vec![10.0, 10.0], vec![cand(0, 0, 0, 1.0, 0.0, 1.0, &[0]), cand(0, 0, 1, 1.0, 0.0, 1.0, &[1])])
    }

    #[test]
    fn integral_theta_is_kept() {
        let p1 = two_path_client();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            assert_eq!(round_fractional(&p1, &[0.0, 1.0], RoundingScore::Theta, &mut rng).chosen, vec![1]);
            assert_eq!(round_fractional(&p1, &[1.0, 0.0], RoundingScore::WeightedTheta, &mut rng).chosen, vec![0]);
        }
    }

    #[test]
    fn half_half_matches_declared_distribution() {
        let p1 = two_path_client();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 10_000;
        let mut counts = [0usize; 2];
        for _ in 0..n {
            let s = round_fractional(&p1, &[0.5, 0.5], RoundingScore::Theta, &mut rng);
            counts[s.chosen[0]] += 1;
        }
        let expected = n as f64 / 2.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // 1 degree of freedom, p = 0.001.
        assert!(chi2 < 10.83, "chi2 = {chi2}, counts = {counts:?}");
    }

    #[test]
    fn residual_mass_means_no_admission() {
        let p1 = two_path_client();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 10_000;
        let empty = (0..n).filter(|_| round_fractional(&p1, &[0.2, 0.2], RoundingScore::Theta, &mut rng).chosen.is_empty()).count();
        let expected = 0.6 * n as f64;
        let var = n as f64 * 0.6 * 0.4;
        assert!((empty as f64 - expected).abs() < 4.0 * var.sqrt());
    }

    #[test]
    fn weighted_rounding_empty_when_all_weights_nonpositive() {
        let p1 = P1Problem::new(5.0, 1, vec![1], vec![10.0], vec![cand(0, 0, 0, 1.0, 1.0, 1.0, &[0]), cand(0, 0, 1, 2.0, 1.0, 1.0, &[0])]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(weighted_randomized_rounding(&p1, &mut rng).unwrap().chosen.is_empty());
        assert!(round_fractional(&p1, &[0.5, 0.5], RoundingScore::WeightedTheta, &mut rng).chosen.is_empty());
    }

    #[test]
    fn infeasible_samples_dropped_in_client_order() {
        let p1 = P1Problem::new(0.0, 2, vec![1], vec![10.0], vec![cand(0, 0, 0, 1.0, 0.0, 1.0, &[0]), cand(1, 0, 0, 9.0, 0.0, 1.0, &[0])]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(round_fractional(&p1, &[1.0, 1.0], RoundingScore::Theta, &mut rng).chosen, vec![0]);
    }
}
