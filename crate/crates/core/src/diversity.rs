//! Diversity metrics used to rank offspring during a walk, and the bounded
//! archive of past behaviors some of them compare against.
//!
//! All metrics return larger values for more novel candidates.

use std::collections::VecDeque;
use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::environment::BehaviorVector;
use crate::error::{Error, Result};
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchiveEntry {
    pub behavior: BehaviorVector,
    pub insertion_step: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchiveConfig {
    pub capacity: usize,
    pub admission_prob: f64,
}

impl Default for ArchiveConfig {
    fn default() -> Self {
        Self {
            capacity: 1200,
            admission_prob: 0.10,
        }
    }
}

/// FIFO archive with random admission. When full, the oldest entry is evicted.
#[derive(Clone, Debug, PartialEq)]
pub struct Archive {
    entries: VecDeque<ArchiveEntry>,
    capacity: usize,
    admission_prob: f64,
}

impl Archive {
    pub fn new(capacity: usize, admission_prob: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&admission_prob) {
            return Err(Error::InvalidParameter(format!(
                "admission probability must be in [0, 1], got {admission_prob}"
            )));
        }
        Ok(Self {
            entries: VecDeque::with_capacity(capacity.min(4096)),
            capacity,
            admission_prob,
        })
    }

    pub fn from_config(cfg: &ArchiveConfig) -> Result<Self> {
        Self::new(cfg.capacity, cfg.admission_prob)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn entries(&self) -> impl ExactSizeIterator<Item = &ArchiveEntry> {
        self.entries.iter()
    }

    pub fn behaviors(&self) -> impl ExactSizeIterator<Item = &BehaviorVector> {
        self.entries.iter().map(|e| &e.behavior)
    }

    /// Unconditionally appends, evicting the oldest entry when over capacity.
    pub fn push(&mut self, behavior: BehaviorVector, step: usize) {
        if self.capacity == 0 {
            return;
        }
        debug_assert!(self.entries.back().is_none_or(|e| e.insertion_step <= step));
        self.entries.push_back(ArchiveEntry {
            behavior,
            insertion_step: step,
        });
        while self.entries.len() > self.capacity {
            self.entries.pop_front();
        }
    }

    /// Admits `behavior` with the archive's admission probability. Returns
    /// whether it was admitted.
    pub fn maybe_admit<R: Rng + ?Sized>(
        &mut self,
        behavior: BehaviorVector,
        step: usize,
        rng: &mut R,
    ) -> bool {
        let admit = rng.random::<f64>() < self.admission_prob;
        if admit {
            self.push(behavior, step);
        }
        admit
    }

    pub fn maybe_admit_seeded(&mut self, behavior: BehaviorVector, step: usize, seed: u64) -> bool {
        self.maybe_admit(behavior, step, &mut seed::rng(seed))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KdeConfig {
    /// Isotropic bandwidth `h`; the bandwidth matrix is `h² I`.
    pub bandwidth: f64,
    /// Discount base `λ`: an archived point of age `a` is weighted by `λ^a`.
    pub discount: f64,
}

impl Default for KdeConfig {
    fn default() -> Self {
        Self {
            bandwidth: 0.5,
            discount: 1.0,
        }
    }
}

impl KdeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth > 0.0 && self.bandwidth.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "KDE bandwidth must be positive, got {}",
                self.bandwidth
            )));
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "KDE discount must be in (0, 1], got {}",
                self.discount
            )));
        }
        Ok(())
    }

    pub fn weight(&self, age: usize) -> f64 {
        if self.discount == 1.0 {
            1.0
        } else {
            self.discount.powi(age.min(i32::MAX as usize) as i32)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DiversityMetricKind {
    Knn { k: usize, use_archive: bool },
    ParentDistance,
    AncestorChain,
    Kde(KdeConfig),
}

impl DiversityMetricKind {
    /// Parses a configuration key: `knn`, `knn_noarchive`, `parent`, `ancestors` or `kde`.
    pub fn from_key(key: &str, k: usize, kde: &KdeConfig) -> Result<Self> {
        let kind = match key {
            "knn" => DiversityMetricKind::Knn { k, use_archive: true },
            "knn_noarchive" => DiversityMetricKind::Knn {
                k,
                use_archive: false,
            },
            "parent" => DiversityMetricKind::ParentDistance,
            "ancestors" => DiversityMetricKind::AncestorChain,
            "kde" => DiversityMetricKind::Kde(kde.clone()),
            other => return Err(Error::Config(format!("unknown diversity metric `{other}`"))),
        };
        kind.validate()?;
        Ok(kind)
    }

    pub fn key(&self) -> &'static str {
        match self {
            DiversityMetricKind::Knn {
                use_archive: true, ..
            } => "knn",
            DiversityMetricKind::Knn {
                use_archive: false, ..
            } => "knn_noarchive",
            DiversityMetricKind::ParentDistance => "parent",
            DiversityMetricKind::AncestorChain => "ancestors",
            DiversityMetricKind::Kde(_) => "kde",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DiversityMetricKind::Knn { k: 0, .. } => {
                Err(Error::InvalidParameter("k must be at least 1".into()))
            }
            DiversityMetricKind::Kde(cfg) => cfg.validate(),
            _ => Ok(()),
        }
    }
}

fn checked_distance(a: &BehaviorVector, b: &BehaviorVector) -> Result<f64> {
    a.try_distance(b)
}

/// Sum of distances to the `k` nearest members of `pool`. Equal distances are
/// ordered by position in `pool`.
pub fn knn_from_pool<'a>(
    candidate: &BehaviorVector,
    pool: impl IntoIterator<Item = &'a BehaviorVector>,
    k: usize,
) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    let mut dists = pool
        .into_iter()
        .enumerate()
        .map(|(i, b)| Ok((checked_distance(candidate, b)?, i)))
        .collect::<Result<Vec<_>>>()?;
    if dists.is_empty() {
        return Err(Error::EmptyPool);
    }
    let take = k.min(dists.len());
    let by_dist = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if take < dists.len() {
        dists.select_nth_unstable_by(take - 1, by_dist);
    }
    let mut nearest = dists[..take].to_vec();
    nearest.sort_by(by_dist);
    Ok(nearest.iter().map(|d| d.0).sum())
}

/// KNN novelty against `peers` (which must not contain the candidate) and,
/// optionally, the archive.
pub fn knn_novelty(
    candidate: &BehaviorVector,
    peers: &[BehaviorVector],
    archive: Option<&Archive>,
    k: usize,
) -> Result<f64> {
    let archived = archive.into_iter().flat_map(|a| a.behaviors());
    knn_from_pool(candidate, peers.iter().chain(archived), k)
}

pub fn parent_distance(candidate: &BehaviorVector, parent: &BehaviorVector) -> Result<f64> {
    checked_distance(candidate, parent)
}

/// Sum of distances to every ancestor in the chain.
pub fn ancestor_chain_distance(candidate: &BehaviorVector, ancestors: &[BehaviorVector]) -> Result<f64> {
    if ancestors.is_empty() {
        return Err(Error::too_few("ancestor chain", 1, 0));
    }
    ancestors.iter().map(|a| checked_distance(candidate, a)).sum()
}

/// Isotropic Gaussian kernel with bandwidth matrix `h² I` evaluated at `diff`.
pub fn gaussian_kernel(diff: &[f64], bandwidth: f64) -> f64 {
    let d = diff.len() as f64;
    let sq: f64 = diff.iter().map(|v| v * v).sum();
    let norm = (2.0 * PI).powf(-d / 2.0) * bandwidth.powf(-d);
    norm * (-0.5 * sq / (bandwidth * bandwidth)).exp()
}

/// Negated, discounted mean kernel density at `candidate`. `pool` yields
/// `(behavior, age)` pairs.
pub fn kde_from_pool<'a>(
    candidate: &BehaviorVector,
    pool: impl IntoIterator<Item = (&'a BehaviorVector, usize)>,
    cfg: &KdeConfig,
) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    let mut diff = vec![0.0; candidate.dim()];
    for (b, age) in pool {
        if b.dim() != candidate.dim() {
            return Err(Error::DimensionMismatch {
                left: candidate.dim(),
                right: b.dim(),
            });
        }
        for ((d, c), y) in diff.iter_mut().zip(candidate.iter()).zip(b.iter()) {
            *d = c - y;
        }
        total -= gaussian_kernel(&diff, cfg.bandwidth) * cfg.weight(age);
        count += 1;
    }
    if count == 0 {
        return Err(Error::EmptyPool);
    }
    Ok(total / count as f64)
}

/// KDE novelty against `peers` (age 0, candidate excluded) and the archive,
/// whose entries are aged relative to `current_step`.
pub fn kde_novelty(
    candidate: &BehaviorVector,
    peers: &[BehaviorVector],
    archive: Option<&Archive>,
    cfg: &KdeConfig,
    current_step: usize,
) -> Result<f64> {
    let archived = archive
        .into_iter()
        .flat_map(|a| a.entries())
        .map(|e| (&e.behavior, current_step.saturating_sub(e.insertion_step)));
    kde_from_pool(candidate, peers.iter().map(|p| (p, 0)).chain(archived), cfg)
}

/// What a walk knows when scoring the offspring of its current parent.
#[derive(Clone, Copy, Debug)]
pub struct ScoreContext<'a> {
    pub parent: &'a BehaviorVector,
    /// Behaviors of every parent so far, oldest first, including the current one.
    pub ancestors: &'a [BehaviorVector],
    pub archive: &'a Archive,
    pub step: usize,
}

/// Scores every child. Each child's pool is its siblings plus, where the
/// metric uses one, the archive.
pub fn score_offspring(
    kind: &DiversityMetricKind,
    children: &[BehaviorVector],
    ctx: &ScoreContext<'_>,
) -> Result<Vec<f64>> {
    let siblings = |i: usize| {
        children
            .iter()
            .enumerate()
            .filter(move |&(j, _)| j != i)
            .map(|(_, b)| b)
    };
    children
        .iter()
        .enumerate()
        .map(|(i, child)| match kind {
            DiversityMetricKind::Knn { k, use_archive } => {
                let archived = use_archive
                    .then_some(ctx.archive)
                    .into_iter()
                    .flat_map(|a| a.behaviors());
                knn_from_pool(child, siblings(i).chain(archived), *k)
            }
            DiversityMetricKind::ParentDistance => parent_distance(child, ctx.parent),
            DiversityMetricKind::AncestorChain => ancestor_chain_distance(child, ctx.ancestors),
            DiversityMetricKind::Kde(cfg) => {
                let archived = ctx
                    .archive
                    .entries()
                    .map(|e| (&e.behavior, ctx.step.saturating_sub(e.insertion_step)));
                kde_from_pool(child, siblings(i).map(|b| (b, 0)).chain(archived), cfg)
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bv(x: f64, y: f64) -> BehaviorVector {
        BehaviorVector::from([x, y])
    }

    #[test]
    fn knn_single_point() {
        let got = knn_novelty(&bv(3.0, 4.0), &[bv(0.0, 0.0)], None, 1).unwrap();
        assert_eq!(got, 5.0);
    }

    #[test]
    fn knn_empty_pool_errors() {
        assert!(matches!(
            knn_novelty(&bv(0.0, 0.0), &[], None, 3),
            Err(Error::EmptyPool)
        ));
        let archive = Archive::new(5, 1.0).unwrap();
        assert!(matches!(
            knn_novelty(&bv(0.0, 0.0), &[], Some(&archive), 3),
            Err(Error::EmptyPool)
        ));
    }

    #[test]
    fn knn_uses_archive_only_when_given() {
        let mut archive = Archive::new(5, 1.0).unwrap();
        archive.push(bv(0.0, 1.0), 0);
        let peers = [bv(0.0, 10.0)];
        assert_eq!(
            knn_novelty(&bv(0.0, 0.0), &peers, Some(&archive), 1).unwrap(),
            1.0
        );
        assert_eq!(knn_novelty(&bv(0.0, 0.0), &peers, None, 1).unwrap(), 10.0);
    }

    #[test]
    fn parent_and_chain_distances() {
        assert_eq!(parent_distance(&bv(1.0, 1.0), &bv(1.0, 1.0)).unwrap(), 0.0);
        assert_eq!(
            parent_distance(&bv(1.0, 1.0), &bv(0.0, 0.0)).unwrap(),
            2f64.sqrt()
        );
        assert_eq!(
            ancestor_chain_distance(&bv(1.0, 0.0), &[bv(0.0, 0.0), bv(1.0, 0.0)]).unwrap(),
            1.0
        );
        assert_eq!(
            ancestor_chain_distance(&bv(4.0, 2.0), &[bv(1.0, -2.0)]).unwrap(),
            parent_distance(&bv(4.0, 2.0), &bv(1.0, -2.0)).unwrap()
        );
        assert!(ancestor_chain_distance(&bv(0.0, 0.0), &[]).is_err());
        assert!(parent_distance(&bv(0.0, 0.0), &BehaviorVector::from([0.0])).is_err());
    }

    #[test]
    fn kde_at_own_location() {
        // (2π)^{-1} |h² I|^{-1/2} with h = 0.5 is 4 / (2π)
        let cfg = KdeConfig::default();
        let got = kde_novelty(&bv(0.3, 0.3), &[bv(0.3, 0.3)], None, &cfg, 0).unwrap();
        assert!((got + 4.0 / (2.0 * PI)).abs() < 1e-15);
        assert!((got + std::f64::consts::FRAC_2_PI).abs() < 1e-12);
    }

    #[test]
    fn kde_far_away_is_zero() {
        let cfg = KdeConfig::default();
        let got = kde_novelty(&bv(1e6, 1e6), &[bv(0.0, 0.0), bv(1.0, 0.0)], None, &cfg, 0).unwrap();
        assert_eq!(got, 0.0);
    }

    #[test]
    fn kde_prefers_midpoint() {
        let cfg = KdeConfig::default();
        let pool = [bv(0.0, 0.0), bv(2.0, 0.0)];
        let mid = kde_novelty(&bv(1.0, 0.0), &pool, None, &cfg, 0).unwrap();
        let end = kde_novelty(&bv(0.0, 0.0), &pool, None, &cfg, 0).unwrap();
        assert!(mid > end);
    }

    #[test]
    fn kde_discount_weights_archive_by_age() {
        let cfg = KdeConfig {
            bandwidth: 0.5,
            discount: 0.5,
        };
        let mut archive = Archive::new(10, 1.0).unwrap();
        archive.push(bv(0.0, 0.0), 2);
        let recent = kde_novelty(&bv(0.0, 0.0), &[], Some(&archive), &cfg, 2).unwrap();
        let old = kde_novelty(&bv(0.0, 0.0), &[], Some(&archive), &cfg, 4).unwrap();
        assert!((old - recent * 0.25).abs() < 1e-15);
        assert!(KdeConfig {
            bandwidth: 0.5,
            discount: 0.0
        }
        .validate()
        .is_err());
        assert!(KdeConfig {
            bandwidth: -1.0,
            discount: 1.0
        }
        .validate()
        .is_err());
    }

    #[test]
    fn archive_fifo_cap() {
        let mut a = Archive::new(2, 1.0).unwrap();
        for s in 0..3 {
            assert!(a.maybe_admit_seeded(bv(s as f64, 0.0), s, s as u64));
        }
        assert_eq!(a.len(), 2);
        let steps: Vec<_> = a.entries().map(|e| e.insertion_step).collect();
        assert_eq!(steps, vec![1, 2]);
    }

    #[test]
    fn archive_zero_probability_rejects_all() {
        let mut a = Archive::new(10, 0.0).unwrap();
        for s in 0..100 {
            assert!(!a.maybe_admit_seeded(bv(0.0, 0.0), s, s as u64));
        }
        assert!(a.is_empty());
        assert!(Archive::new(1, 1.5).is_err());
    }

    #[test]
    fn archive_admission_rate() {
        let mut a = Archive::new(100_000, 0.10).unwrap();
        let mut rng = seed::rng(2024);
        let admitted = (0..10_000)
            .filter(|&s| a.maybe_admit(bv(0.0, 0.0), s, &mut rng))
            .count();
        assert!((admitted as f64 / 1e4 - 0.10).abs() < 0.01, "{admitted}");
        assert_eq!(a.len(), admitted);
    }

    #[test]
    fn metric_keys_round_trip() {
        let kde = KdeConfig::default();
        for key in ["knn", "knn_noarchive", "parent", "ancestors", "kde"] {
            assert_eq!(DiversityMetricKind::from_key(key, 15, &kde).unwrap().key(), key);
        }
        assert!(DiversityMetricKind::from_key("curiosity", 15, &kde).is_err());
        assert!(DiversityMetricKind::from_key("knn", 0, &kde).is_err());
    }

    #[test]
    fn score_offspring_excludes_self() {
        let children = [bv(0.0, 0.0), bv(1.0, 0.0), bv(3.0, 0.0)];
        let archive = Archive::new(10, 1.0).unwrap();
        let parent = bv(0.0, 0.0);
        let ctx = ScoreContext {
            parent: &parent,
            ancestors: std::slice::from_ref(&parent),
            archive: &archive,
            step: 0,
        };
        let knn = DiversityMetricKind::Knn {
            k: 1,
            use_archive: true,
        };
        assert_eq!(
            score_offspring(&knn, &children, &ctx).unwrap(),
            vec![1.0, 1.0, 2.0]
        );
        let par = DiversityMetricKind::ParentDistance;
        assert_eq!(
            score_offspring(&par, &children, &ctx).unwrap(),
            vec![0.0, 1.0, 3.0]
        );
    }

    fn arb_points(n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<(f64, f64)>> {
        proptest::collection::vec((-10.0f64..10.0, -10.0f64..10.0), n)
    }

    proptest! {
        #[test]
        fn metrics_are_translation_invariant(
            cand in (-10.0f64..10.0, -10.0f64..10.0),
            pool in arb_points(1..20),
            t in (-100.0f64..100.0, -100.0f64..100.0),
            k in 1usize..6,
        ) {
            let shift = [t.0, t.1];
            let c = bv(cand.0, cand.1);
            let p: Vec<_> = pool.iter().map(|&(x, y)| bv(x, y)).collect();
            let ct = c.translated(&shift);
            let pt: Vec<_> = p.iter().map(|b| b.translated(&shift)).collect();
            let tol = 1e-9;
            let a = knn_novelty(&c, &p, None, k).unwrap();
            let b = knn_novelty(&ct, &pt, None, k).unwrap();
            prop_assert!((a - b).abs() <= tol * a.max(1.0));
            let a = ancestor_chain_distance(&c, &p).unwrap();
            let b = ancestor_chain_distance(&ct, &pt).unwrap();
            prop_assert!((a - b).abs() <= tol * a.max(1.0));
            let a = parent_distance(&c, &p[0]).unwrap();
            let b = parent_distance(&ct, &pt[0]).unwrap();
            prop_assert!((a - b).abs() <= tol * a.max(1.0));
            let cfg = KdeConfig::default();
            let a = kde_novelty(&c, &p, None, &cfg, 0).unwrap();
            let b = kde_novelty(&ct, &pt, None, &cfg, 0).unwrap();
            prop_assert!((a - b).abs() <= 1e-9);
        }

        #[test]
        fn kde_monotone_along_ray(
            origin in (-5.0f64..5.0, -5.0f64..5.0),
            angle in 0.0f64..std::f64::consts::TAU,
            r1 in 0.0f64..3.0,
            dr in 0.0f64..3.0,
        ) {
            let cfg = KdeConfig::default();
            let pool = [bv(origin.0, origin.1)];
            let at = |r: f64| bv(origin.0 + r * angle.cos(), origin.1 + r * angle.sin());
            let near = kde_novelty(&at(r1), &pool, None, &cfg, 0).unwrap();
            let far = kde_novelty(&at(r1 + dr), &pool, None, &cfg, 0).unwrap();
            prop_assert!(far >= near);
        }

        #[test]
        fn knn_with_large_k_sums_all(cand in (-10.0f64..10.0, -10.0f64..10.0), pool in arb_points(1..25)) {
            let c = bv(cand.0, cand.1);
            let p: Vec<_> = pool.iter().map(|&(x, y)| bv(x, y)).collect();
            let total: f64 = p.iter().map(|b| c.distance(b)).sum();
            let got = knn_novelty(&c, &p, None, p.len() + 3).unwrap();
            prop_assert!((got - total).abs() <= 1e-9 * total.max(1.0));
        }
    }
}
