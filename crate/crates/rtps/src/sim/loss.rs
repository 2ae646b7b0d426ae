//! Parameterized per-hop loss: independent random loss plus a collision
//! term that grows with the number of traffic streams sharing the hop.

use rand::Rng;

/// Loss parameters. `per_hop_loss` is sampled independently for every
/// transmission on every hop; `collision_beta` is the pairwise collision
/// coefficient between streams active on the same hop.
#[derive(Debug, Clone, Copy)]
pub struct LossModel {
    pub per_hop_loss: f64,
    pub collision_beta: f64,
}

impl LossModel {
    pub const NONE: LossModel = LossModel {
        per_hop_loss: 0.0,
        collision_beta: 0.0,
    };

    /// Loss probability for one transmission with `n_active` streams on the
    /// hop: `1 - (1 - p) * (1 - beta)^(n_active - 1)`.
    pub fn loss_probability(&self, n_active: u32) -> f64 {
        let survive =
            (1.0 - self.per_hop_loss) * (1.0 - self.collision_beta).powi(n_active as i32 - 1);
        1.0 - survive
    }

    /// Samples one transmission. Never draws from the RNG when the loss
    /// probability is exactly zero, so loss-free runs consume no entropy.
    pub fn sample_loss<R: Rng>(&self, n_active: u32, rng: &mut R) -> bool {
        let p = self.loss_probability(n_active);
        if p <= 0.0 {
            return false;
        }
        rng.random::<f64>() < p
    }
}

/// Converts a whole-path loss rate into the per-hop probability that yields
/// it over `links` traversals: `1 - (1 - path)^(1/links)`.
pub fn per_hop_from_path_loss(path_loss: f64, links: usize) -> f64 {
    if path_loss <= 0.0 || links == 0 {
        return 0.0;
    }
    1.0 - (1.0 - path_loss).powf(1.0 / links as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_parameters_never_lose() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in 1..50 {
            assert!(!LossModel::NONE.sample_loss(n, &mut rng));
        }
    }

    #[test]
    fn collision_closed_form() {
        // p = 0, beta = 0.02, three active streams -> 1 - 0.98^2 = 0.0396.
        let model = LossModel {
            per_hop_loss: 0.0,
            collision_beta: 0.02,
        };
        assert!((model.loss_probability(3) - 0.0396).abs() < 1e-12);
    }

    #[test]
    fn empirical_rate_matches_parameter() {
        let model = LossModel {
            per_hop_loss: 0.1,
            collision_beta: 0.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 10_000;
        let lost = (0..n).filter(|_| model.sample_loss(1, &mut rng)).count();
        let rate = lost as f64 / n as f64;
        assert!((rate - 0.1).abs() < 0.01, "empirical rate {rate}");
    }

    #[test]
    fn path_loss_conversion_round_trips() {
        let per_hop = per_hop_from_path_loss(0.05, 11);
        let survive = (1.0 - per_hop).powi(11);
        assert!((1.0 - survive - 0.05).abs() < 1e-12);
        assert_eq!(per_hop_from_path_loss(0.0, 11), 0.0);
    }
}
