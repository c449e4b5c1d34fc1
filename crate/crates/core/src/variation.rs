//! Cauchy weight mutation and offspring sampling.

use rand::Rng as _;
use rand_distr::{Cauchy, Distribution};
use serde::{Deserialize, Serialize};

use crate::environment::{BehaviorFunction, BehaviorVector};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::genotype::Genotype;
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MutationConfig {
    /// Multiplier applied to each standard Cauchy draw.
    pub scale: f64,
    /// Probability that any given weight is perturbed.
    pub per_weight_prob: f64,
    pub offspring_count: usize,
}

impl Default for MutationConfig {
    fn default() -> Self {
        Self {
            scale: 0.05,
            per_weight_prob: 1.0,
            offspring_count: 30,
        }
    }
}

impl MutationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "mutation scale must be positive and finite, got {}",
                self.scale
            )));
        }
        if !(self.per_weight_prob > 0.0 && self.per_weight_prob <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "per_weight_prob must be in (0, 1], got {}",
                self.per_weight_prob
            )));
        }
        if self.offspring_count < 2 {
            return Err(Error::too_few("offspring set", 2, self.offspring_count));
        }
        Ok(())
    }
}

/// Adds `scale · c`, `c ~ Cauchy(0, 1)`, to each selected weight. Draws that
/// would make a weight non-finite are discarded and redrawn.
pub fn mutate(g: &Genotype, cfg: &MutationConfig, seed: u64) -> Genotype {
    let mut rng = seed::rng(seed);
    let cauchy = Cauchy::new(0.0, 1.0).expect("unit Cauchy");
    let weights = g
        .weights()
        .iter()
        .map(|&w| {
            if cfg.per_weight_prob < 1.0 && !rng.random_bool(cfg.per_weight_prob) {
                return w;
            }
            loop {
                let next = w + cfg.scale * cauchy.sample(&mut rng);
                if next.is_finite() {
                    break next;
                }
            }
        })
        .collect();
    Genotype::from_parts_unchecked(g.shape().clone(), weights)
}

/// The sampled neighbourhood of one parent, evaluated through a behavior function.
#[derive(Clone, Debug, PartialEq)]
pub struct OffspringSet {
    pub parent: Genotype,
    pub children: Vec<Genotype>,
    pub behaviors: Vec<BehaviorVector>,
}

impl OffspringSet {
    pub fn len(&self) -> usize {
        self.children.len()
    }

    pub fn is_empty(&self) -> bool {
        self.children.is_empty()
    }
}

/// Child `i` is mutated with the seed derived from `(seed, i)`, so the set
/// does not depend on evaluation order.
pub fn sample_neighbors<F: BehaviorFunction + ?Sized>(
    g: &Genotype,
    cfg: &MutationConfig,
    phi: &F,
    seed: u64,
    exec: Exec,
) -> Result<OffspringSet> {
    if cfg.offspring_count < 2 {
        return Err(Error::too_few("offspring set", 2, cfg.offspring_count));
    }
    let evaluated = exec.try_map(cfg.offspring_count, |i| {
        let child = mutate(g, cfg, seed::derive(seed, &[i as u64]));
        let b = phi.behavior(&child)?;
        Ok::<_, Error>((child, b))
    })?;
    let (children, behaviors) = evaluated.into_iter().unzip();
    Ok(OffspringSet {
        parent: g.clone(),
        children,
        behaviors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::AnalyticLandscape;
    use crate::genotype::NetworkShape;
    use std::sync::Arc;

    fn genotype(len_hint: usize, seed: u64) -> Genotype {
        let shape = Arc::new(NetworkShape::new(len_hint, vec![], 1).unwrap());
        Genotype::xavier(shape, seed)
    }

    #[test]
    fn tiny_scale_is_identity_to_machine_precision() {
        let g = genotype(10, 1);
        let cfg = MutationConfig {
            scale: 1e-300,
            ..Default::default()
        };
        let c = mutate(&g, &cfg, 5);
        for (a, b) in c.weights().iter().zip(g.weights()) {
            assert!((a - b).abs() < 1e-250);
        }
    }

    #[test]
    fn same_seed_same_child() {
        let g = genotype(20, 2);
        let cfg = MutationConfig::default();
        assert_eq!(mutate(&g, &cfg, 9), mutate(&g, &cfg, 9));
        assert_ne!(mutate(&g, &cfg, 9), mutate(&g, &cfg, 10));
    }

    #[test]
    fn half_of_unit_cauchy_draws_exceed_one() {
        // P(|c| > 1) = 1/2 for the standard Cauchy; median |c| = 1.
        let shape = Arc::new(NetworkShape::new(99_999, vec![], 1).unwrap());
        let g = Genotype::zeros(shape);
        let cfg = MutationConfig {
            scale: 1.0,
            per_weight_prob: 1.0,
            offspring_count: 2,
        };
        let c = mutate(&g, &cfg, 77);
        let mut abs: Vec<f64> = c.weights().iter().map(|v| v.abs()).collect();
        let frac = abs.iter().filter(|&&v| v > 1.0).count() as f64 / abs.len() as f64;
        assert!((frac - 0.5).abs() < 0.01, "fraction {frac}");
        abs.sort_by(f64::total_cmp);
        let median = abs[abs.len() / 2];
        assert!((0.9..=1.1).contains(&median), "median {median}");
    }

    #[test]
    fn per_weight_prob_masks_weights() {
        let g = genotype(2000, 3);
        let cfg = MutationConfig {
            per_weight_prob: 0.25,
            ..Default::default()
        };
        let c = mutate(&g, &cfg, 1);
        let changed = c
            .weights()
            .iter()
            .zip(g.weights())
            .filter(|(a, b)| a != b)
            .count() as f64
            / g.len() as f64;
        assert!((changed - 0.25).abs() < 0.04, "changed {changed}");
    }

    #[test]
    fn validate_rejects_bad_configs() {
        assert!(MutationConfig::default().validate().is_ok());
        for bad in [
            MutationConfig {
                scale: 0.0,
                ..Default::default()
            },
            MutationConfig {
                per_weight_prob: 0.0,
                ..Default::default()
            },
            MutationConfig {
                per_weight_prob: 1.5,
                ..Default::default()
            },
            MutationConfig {
                offspring_count: 1,
                ..Default::default()
            },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn offspring_set_size_and_order_independence() {
        let g = genotype(6, 4);
        let cfg = MutationConfig::default();
        let phi = AnalyticLandscape::linear_identity(2);
        let a = sample_neighbors(&g, &cfg, &phi, 42, Exec::Parallel).unwrap();
        let b = sample_neighbors(&g, &cfg, &phi, 42, Exec::Sequential).unwrap();
        assert_eq!(a.len(), 30);
        assert_eq!(a, b);
    }

    #[test]
    fn constant_landscape_children_agree() {
        let g = genotype(6, 4);
        let phi = AnalyticLandscape::Constant {
            value: vec![0.3, 0.7],
        };
        let set = sample_neighbors(&g, &MutationConfig::default(), &phi, 1, Exec::Sequential).unwrap();
        assert!(set.behaviors.iter().all(|b| b == &set.behaviors[0]));
    }
}
