//! Single-state walks on a behavior landscape.
//!
//! Each step samples the offspring of the current parent, measures the
//! offspring set, scores the children with a diversity metric and then picks
//! the next parent according to the walk kind.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::diversity::{score_offspring, Archive, DiversityMetricKind, ScoreContext};
use crate::environment::{BehaviorFunction, BehaviorVector};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::genotype::Genotype;
use crate::metrics::{self, MetricReport, DEFAULT_EPSILON};
use crate::niche::NicheGrid;
use crate::seed;
use crate::variation::{sample_neighbors, MutationConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WalkKind {
    /// Always the best-scoring child.
    Selective,
    /// Best-scoring child among those outside the parent's niche.
    SelectiveNiche,
    /// Uniform over the best `top_fraction` of children.
    Adaptive { top_fraction: f64 },
    /// Uniform over all children.
    Random,
}

impl WalkKind {
    pub fn validate(&self) -> Result<()> {
        match self {
            WalkKind::Adaptive { top_fraction } if !(*top_fraction > 0.0 && *top_fraction <= 1.0) => Err(
                Error::InvalidParameter(format!("top_fraction must be in (0, 1], got {top_fraction}")),
            ),
            _ => Ok(()),
        }
    }

    /// Fraction of children eligible to become the next parent.
    pub fn effective_top_fraction(&self, offspring: usize) -> f64 {
        match self {
            WalkKind::Selective | WalkKind::SelectiveNiche => 1.0 / offspring as f64,
            WalkKind::Adaptive { top_fraction } => *top_fraction,
            WalkKind::Random => 1.0,
        }
    }

    /// Selection pressure in `[0, 1)`; larger is more selective.
    pub fn pressure(&self, offspring: usize) -> f64 {
        1.0 - self.effective_top_fraction(offspring)
    }
}

impl fmt::Display for WalkKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WalkKind::Selective => write!(f, "selective"),
            WalkKind::SelectiveNiche => write!(f, "selective_niche"),
            WalkKind::Adaptive { top_fraction } => write!(f, "adaptive({top_fraction})"),
            WalkKind::Random => write!(f, "random"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WalkConfig {
    pub kind: WalkKind,
    pub length: usize,
    pub metric: DiversityMetricKind,
    pub mutation: MutationConfig,
    pub seed: u64,
}

impl WalkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.length == 0 {
            return Err(Error::InvalidParameter("walk length must be at least 1".into()));
        }
        self.kind.validate()?;
        self.metric.validate()?;
        self.mutation.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Selection {
    Child(usize),
    Retain,
}

impl Selection {
    pub fn child(self) -> Option<usize> {
        match self {
            Selection::Child(i) => Some(i),
            Selection::Retain => None,
        }
    }
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> Option<usize> {
    values
        .iter()
        .enumerate()
        .fold(None, |best: Option<(usize, f64)>, (i, &v)| match best {
            Some((_, bv)) if bv >= v => best,
            _ => Some((i, v)),
        })
        .map(|(i, _)| i)
}

pub fn step_selective(scores: &[f64]) -> Selection {
    argmax(scores).map_or(Selection::Retain, Selection::Child)
}

/// Best-scoring child whose niche differs from the parent's, or retain the
/// parent when every child stayed in its niche.
pub fn step_selective_niche(parent_niche: usize, child_niches: &[usize], scores: &[f64]) -> Selection {
    debug_assert_eq!(child_niches.len(), scores.len());
    scores
        .iter()
        .zip(child_niches)
        .enumerate()
        .filter(|&(_, (_, &n))| n != parent_niche)
        .fold(None, |best: Option<(usize, f64)>, (i, (&v, _))| match best {
            Some((_, bv)) if bv >= v => best,
            _ => Some((i, v)),
        })
        .map_or(Selection::Retain, |(i, _)| Selection::Child(i))
}

/// Number of children that pass the adaptive threshold.
pub fn qualifier_count(top_fraction: f64, m: usize) -> usize {
    // Guard against 1/m · m landing a hair above an integer.
    let q = (top_fraction * m as f64 - 1e-9).ceil();
    (q.max(1.0) as usize).min(m)
}

/// Indices of the `⌈top_fraction · m⌉` best children, best first. Ties at
/// the threshold go to lower indices.
pub fn adaptive_qualifiers(scores: &[f64], top_fraction: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(qualifier_count(top_fraction, scores.len()));
    order
}

pub fn step_adaptive<R: rand::Rng + ?Sized>(scores: &[f64], top_fraction: f64, rng: &mut R) -> Selection {
    let qualifiers = adaptive_qualifiers(scores, top_fraction);
    if qualifiers.is_empty() {
        return Selection::Retain;
    }
    Selection::Child(qualifiers[rng.random_range(0..qualifiers.len())])
}

pub fn step_random<R: rand::Rng + ?Sized>(offspring: usize, rng: &mut R) -> Selection {
    if offspring == 0 {
        return Selection::Retain;
    }
    Selection::Child(rng.random_range(0..offspring))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WalkStep {
    pub parent_digest: String,
    pub parent_behavior: BehaviorVector,
    pub report: MetricReport,
    pub selection: Selection,
    /// Diversity scores of every child; absent for random walks.
    pub scores: Option<Vec<f64>>,
    pub archive_len: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WalkRecord {
    pub config: WalkConfig,
    pub steps: Vec<WalkStep>,
    /// Steps on which the parent was kept.
    pub stalls: usize,
    pub final_parent: Genotype,
    pub final_behavior: BehaviorVector,
}

impl WalkRecord {
    pub fn series(&self, f: impl Fn(&MetricReport) -> f64) -> Vec<f64> {
        self.steps.iter().map(|s| f(&s.report)).collect()
    }
}

const STREAM_OFFSPRING: u64 = 0;
const STREAM_SELECT: u64 = 1;
const STREAM_ARCHIVE: u64 = 2;

/// Runs one walk of `cfg.length` steps from `start`.
///
/// `archive` is updated in place: after each step the new parent's behavior
/// is offered to it. Offspring evaluation uses `exec`.
pub fn run_walk<F: BehaviorFunction + ?Sized>(
    cfg: &WalkConfig,
    phi: &F,
    start: Genotype,
    grid: &NicheGrid,
    archive: &mut Archive,
    exec: Exec,
) -> Result<WalkRecord> {
    cfg.validate()?;
    let mut parent = start;
    let mut parent_b = phi.behavior(&parent)?;
    let mut ancestors = vec![parent_b.clone()];
    let mut steps = Vec::with_capacity(cfg.length);
    let mut stalls = 0;

    for i in 0..cfg.length {
        let step_seed = seed::derive(cfg.seed, &[i as u64]);
        let offspring = sample_neighbors(
            &parent,
            &cfg.mutation,
            phi,
            seed::derive(step_seed, &[STREAM_OFFSPRING]),
            exec,
        )?;
        let report = metrics::report(&parent_b, &offspring.behaviors, grid, DEFAULT_EPSILON)?;

        let scores = match cfg.kind {
            WalkKind::Random => None,
            _ => {
                let ctx = ScoreContext {
                    parent: &parent_b,
                    ancestors: &ancestors,
                    archive,
                    step: i,
                };
                Some(score_offspring(&cfg.metric, &offspring.behaviors, &ctx)?)
            }
        };

        let mut rng = seed::rng_at(step_seed, &[STREAM_SELECT]);
        let selection = match (&cfg.kind, &scores) {
            (WalkKind::Selective, Some(s)) => step_selective(s),
            (WalkKind::SelectiveNiche, Some(s)) => {
                let niches: Vec<usize> = offspring.behaviors.iter().map(|b| grid.niche(b)).collect();
                step_selective_niche(grid.niche(&parent_b), &niches, s)
            }
            (WalkKind::Adaptive { top_fraction }, Some(s)) => step_adaptive(s, *top_fraction, &mut rng),
            (WalkKind::Random, _) => step_random(offspring.len(), &mut rng),
            (_, None) => unreachable!("scores are computed for every non-random walk"),
        };

        steps.push(WalkStep {
            parent_digest: parent.digest(),
            parent_behavior: parent_b.clone(),
            report,
            selection,
            scores,
            archive_len: archive.len(),
        });

        match selection {
            Selection::Child(c) => {
                let mut off = offspring;
                parent = off.children.swap_remove(c);
                parent_b = off.behaviors.swap_remove(c);
            }
            Selection::Retain => stalls += 1,
        }
        ancestors.push(parent_b.clone());
        archive.maybe_admit(
            parent_b.clone(),
            i,
            &mut seed::rng_at(step_seed, &[STREAM_ARCHIVE]),
        );
    }

    Ok(WalkRecord {
        config: cfg.clone(),
        steps,
        stalls,
        final_parent: parent,
        final_behavior: parent_b,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diversity::KdeConfig;
    use crate::environment::{AnalyticLandscape, PointPushWorld};
    use crate::genotype::NetworkShape;
    use proptest::prelude::*;
    use std::sync::Arc;

    #[test]
    fn selective_examples() {
        assert_eq!(step_selective(&[1.0, 9.0, 3.0]), Selection::Child(1));
        assert_eq!(step_selective(&[2.0, 2.0, 2.0]), Selection::Child(0));
        assert_eq!(step_selective(&[]), Selection::Retain);
    }

    #[test]
    fn niche_selective_examples() {
        assert_eq!(
            step_selective_niche(4, &[4, 4, 4], &[1.0, 2.0, 3.0]),
            Selection::Retain
        );
        assert_eq!(
            step_selective_niche(4, &[4, 7, 4], &[9.0, 0.5, 8.0]),
            Selection::Child(1)
        );
        assert_eq!(
            step_selective_niche(0, &[1, 0, 2, 3], &[1.0, 9.0, 5.0, 5.0]),
            Selection::Child(2)
        );
    }

    #[test]
    fn adaptive_extremes() {
        let scores: Vec<f64> = (0..30).map(|i| ((i * 7) % 30) as f64).collect();
        let mut rng = seed::rng(1);
        assert_eq!(
            step_adaptive(&scores, 1.0 / 30.0, &mut rng),
            step_selective(&scores)
        );
        assert_eq!(adaptive_qualifiers(&scores, 1.0).len(), 30);
        assert_eq!(adaptive_qualifiers(&scores, 0.5).len(), 15);
        assert_eq!(qualifier_count(0.25, 30), 8);
        assert_eq!(qualifier_count(1e-6, 30), 1);
    }

    #[test]
    fn adaptive_full_fraction_is_uniform() {
        let scores = vec![0.0, 5.0, 1.0, 3.0];
        let mut rng = seed::rng(3);
        let mut counts = [0usize; 4];
        for _ in 0..40_000 {
            counts[step_adaptive(&scores, 1.0, &mut rng).child().unwrap()] += 1;
        }
        assert!(counts.iter().all(|&c| (c as f64 / 40_000.0 - 0.25).abs() < 0.02));
    }

    #[test]
    fn random_step_uniform_and_deterministic() {
        assert_eq!(step_random(1, &mut seed::rng(0)), Selection::Child(0));
        let mut rng = seed::rng(9);
        let mut counts = [0usize; 5];
        for _ in 0..10_000 {
            counts[step_random(5, &mut rng).child().unwrap()] += 1;
        }
        assert!(
            counts.iter().all(|&c| (c as f64 / 1e4 - 0.2).abs() < 0.02),
            "{counts:?}"
        );
        let a: Vec<_> = (0..10)
            .map(|_| 0)
            .scan(seed::rng(4), |r, _| Some(step_random(30, r)))
            .collect();
        let b: Vec<_> = (0..10)
            .map(|_| 0)
            .scan(seed::rng(4), |r, _| Some(step_random(30, r)))
            .collect();
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn adaptive_matches_sort_threshold_oracle(
            scores in proptest::collection::vec(-100.0f64..100.0, 1..40),
            frac in 0.01f64..=1.0,
        ) {
            let got = adaptive_qualifiers(&scores, frac);
            let q = got.len();
            prop_assert_eq!(q, ((frac * scores.len() as f64) - 1e-9).ceil().clamp(1.0, scores.len() as f64) as usize);
            // every qualifier scores at least as high as every non-qualifier
            let min_in = got.iter().map(|&i| scores[i]).fold(f64::INFINITY, f64::min);
            let max_out = (0..scores.len()).filter(|i| !got.contains(i)).map(|i| scores[i]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(min_in >= max_out);
        }
    }

    fn linear_setup() -> (AnalyticLandscape, Genotype, NicheGrid) {
        let shape = Arc::new(NetworkShape::new(4, vec![3], 2).unwrap());
        let g = Genotype::xavier(shape, 5);
        let grid = NicheGrid::new(vec![(-3.0, 3.0); 2], vec![10, 10]).unwrap();
        (AnalyticLandscape::linear_identity(2), g, grid)
    }

    fn cfg(kind: WalkKind, metric: DiversityMetricKind) -> WalkConfig {
        WalkConfig {
            kind,
            length: 12,
            metric,
            mutation: MutationConfig::default(),
            seed: 77,
        }
    }

    #[test]
    fn walk_length_and_determinism() {
        let (phi, g, grid) = linear_setup();
        let c = cfg(
            WalkKind::Selective,
            DiversityMetricKind::Knn {
                k: 3,
                use_archive: true,
            },
        );
        let mut a1 = Archive::new(1200, 0.1).unwrap();
        let mut a2 = Archive::new(1200, 0.1).unwrap();
        let r1 = run_walk(&c, &phi, g.clone(), &grid, &mut a1, Exec::Parallel).unwrap();
        let r2 = run_walk(&c, &phi, g, &grid, &mut a2, Exec::Sequential).unwrap();
        assert_eq!(r1.steps.len(), 12);
        assert_eq!(r1, r2);
        assert_eq!(a1, a2);
    }

    #[test]
    fn single_step_walk_evaluates_one_offspring_set() {
        let world = PointPushWorld::default();
        let shape = Arc::new(world.network_shape(vec![32, 32]).unwrap());
        let mut c = cfg(
            WalkKind::Selective,
            DiversityMetricKind::Kde(KdeConfig::default()),
        );
        c.length = 1;
        let grid = NicheGrid::unit_square(10).unwrap();
        let mut archive = Archive::new(1200, 0.1).unwrap();
        let r = run_walk(
            &c,
            &world,
            Genotype::xavier(shape, 1),
            &grid,
            &mut archive,
            Exec::Sequential,
        )
        .unwrap();
        assert_eq!(r.steps.len(), 1);
        assert_eq!(r.steps[0].scores.as_ref().unwrap().len(), 30);
    }

    #[test]
    fn constant_landscape_has_zero_evolvability() {
        let (_, g, grid) = linear_setup();
        let phi = AnalyticLandscape::Constant {
            value: vec![0.5, 0.5],
        };
        for kind in [
            WalkKind::Selective,
            WalkKind::SelectiveNiche,
            WalkKind::Adaptive { top_fraction: 0.3 },
            WalkKind::Random,
        ] {
            let mut archive = Archive::new(10, 1.0).unwrap();
            let r = run_walk(
                &cfg(kind.clone(), DiversityMetricKind::ParentDistance),
                &phi,
                g.clone(),
                &grid,
                &mut archive,
                Exec::Sequential,
            )
            .unwrap();
            assert!(r
                .steps
                .iter()
                .all(|s| s.report.evolvability_expected == 0.0 && s.report.evolvability_max == 0.0));
            if kind == WalkKind::SelectiveNiche {
                assert_eq!(r.stalls, 12);
            }
        }
    }

    #[test]
    fn random_walk_never_scores() {
        let (phi, g, grid) = linear_setup();
        let mut archive = Archive::new(10, 1.0).unwrap();
        let r = run_walk(
            &cfg(
                WalkKind::Random,
                DiversityMetricKind::Knn {
                    k: 3,
                    use_archive: true,
                },
            ),
            &phi,
            g,
            &grid,
            &mut archive,
            Exec::Sequential,
        )
        .unwrap();
        assert!(r.steps.iter().all(|s| s.scores.is_none()));
    }

    #[test]
    fn adaptive_one_over_m_agrees_with_selective() {
        let (phi, g, grid) = linear_setup();
        let metric = DiversityMetricKind::Knn {
            k: 5,
            use_archive: true,
        };
        let mut a = Archive::new(100, 0.5).unwrap();
        let mut b = Archive::new(100, 0.5).unwrap();
        let sel = run_walk(
            &cfg(WalkKind::Selective, metric.clone()),
            &phi,
            g.clone(),
            &grid,
            &mut a,
            Exec::Sequential,
        )
        .unwrap();
        let ada = run_walk(
            &cfg(
                WalkKind::Adaptive {
                    top_fraction: 1.0 / 30.0,
                },
                metric,
            ),
            &phi,
            g,
            &grid,
            &mut b,
            Exec::Sequential,
        )
        .unwrap();
        assert_eq!(sel.steps, ada.steps);
    }

    #[test]
    fn chosen_child_is_one_mutation_away() {
        let (phi, g, grid) = linear_setup();
        let c = cfg(
            WalkKind::Adaptive { top_fraction: 0.5 },
            DiversityMetricKind::AncestorChain,
        );
        let mut archive = Archive::new(100, 0.1).unwrap();
        let r = run_walk(&c, &phi, g.clone(), &grid, &mut archive, Exec::Sequential).unwrap();
        // replay: the recorded parent at step i+1 is the chosen child of step i
        let mut parent = g;
        for (i, step) in r.steps.iter().enumerate() {
            assert_eq!(step.parent_digest, parent.digest());
            let step_seed = seed::derive(c.seed, &[i as u64]);
            let child_idx = step.selection.child().unwrap();
            let child_seed = seed::derive(seed::derive(step_seed, &[STREAM_OFFSPRING]), &[child_idx as u64]);
            parent = crate::variation::mutate(&parent, &c.mutation, child_seed);
        }
        assert_eq!(parent, r.final_parent);
    }

    #[test]
    fn invalid_configs_rejected() {
        let (phi, g, grid) = linear_setup();
        let mut archive = Archive::new(10, 1.0).unwrap();
        let mut c = cfg(
            WalkKind::Adaptive { top_fraction: 0.0 },
            DiversityMetricKind::ParentDistance,
        );
        assert!(run_walk(&c, &phi, g.clone(), &grid, &mut archive, Exec::Sequential).is_err());
        c.kind = WalkKind::Selective;
        c.length = 0;
        assert!(run_walk(&c, &phi, g, &grid, &mut archive, Exec::Sequential).is_err());
    }
}
