use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Bag, Instance, Segment};

/// How many short texts go into one pseudo-long text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PseudoLongConfig {
    pub k_min: usize,
    pub k_max: usize,
    pub seed: u64,
}

impl Default for PseudoLongConfig {
    fn default() -> Self {
        Self {
            k_min: 3,
            k_max: 10,
            seed: 0,
        }
    }
}

/// Concatenates `k ~ U[k_min, k_max]` short texts drawn from `pool` (without
/// replacement when the pool is large enough). Each segment keeps its own label;
/// the bag has none.
pub fn make_pseudo_long<R: Rng + ?Sized>(
    pool: &[Instance],
    cfg: &PseudoLongConfig,
    rng: &mut R,
) -> Bag {
    assert!(!pool.is_empty(), "pseudo-long pool is empty");
    assert!(1 <= cfg.k_min && cfg.k_min <= cfg.k_max, "need 1 <= k_min <= k_max");
    let k = rng.gen_range(cfg.k_min..=cfg.k_max);
    let picks: Vec<usize> = if pool.len() >= k {
        sample(rng, pool.len(), k).into_vec()
    } else {
        (0..k).map(|_| rng.gen_range(0..pool.len())).collect()
    };
    Bag {
        segments: picks
            .into_iter()
            .map(|i| Segment {
                tokens: pool[i].tokens.clone(),
                label: Some(pool[i].label),
            })
            .collect(),
        label: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pool(n: usize) -> Vec<Instance> {
        (0..n)
            .map(|i| Instance {
                tokens: vec![i as u32 + 2, 7],
                label: i % 2,
            })
            .collect()
    }

    #[test]
    fn k_of_one_is_the_short_text() {
        let p = pool(5);
        let cfg = PseudoLongConfig { k_min: 1, k_max: 1, seed: 0 };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let bag = make_pseudo_long(&p, &cfg, &mut rng);
        assert_eq!(bag.len(), 1);
        let src = p.iter().find(|i| i.tokens == bag.segments[0].tokens).unwrap();
        assert_eq!(bag.segments[0].label, Some(src.label));
        assert_eq!(bag.label, None);
    }

    #[test]
    fn exhausts_pool_without_replacement() {
        let p = pool(3);
        let cfg = PseudoLongConfig { k_min: 3, k_max: 3, seed: 0 };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let bag = make_pseudo_long(&p, &cfg, &mut rng);
        let mut firsts: Vec<u32> = bag.segments.iter().map(|s| s.tokens[0]).collect();
        firsts.sort();
        assert_eq!(firsts, vec![2, 3, 4]);
    }

    #[test]
    fn small_pool_samples_with_replacement() {
        let p = pool(2);
        let cfg = PseudoLongConfig { k_min: 5, k_max: 5, seed: 0 };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(make_pseudo_long(&p, &cfg, &mut rng).len(), 5);
    }

    #[test]
    fn seeded_runs_repeat() {
        let p = pool(20);
        let cfg = PseudoLongConfig::default();
        let a = make_pseudo_long(&p, &cfg, &mut ChaCha8Rng::seed_from_u64(11));
        let b = make_pseudo_long(&p, &cfg, &mut ChaCha8Rng::seed_from_u64(11));
        assert_eq!(a, b);
        assert!((3..=10).contains(&a.len()));
    }
}
