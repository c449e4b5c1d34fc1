//! Sensitivity and evolvability of a genotype, estimated from a sample of
//! its offspring.
//!
//! Pairwise estimators iterate over unordered pairs. The mean over ordered
//! pairs `θ′ ≠ θ″` with weight `1/(m(m−1))` is the same number, since every
//! unordered pair appears twice.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::environment::BehaviorVector;
use crate::error::{Error, Result};
use crate::niche::NicheGrid;

/// Protected-division constant for the dissimila ratios.
pub const DEFAULT_EPSILON: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub ls_max: f64,
    pub ls_expected: f64,
    pub evolvability_max: f64,
    pub evolvability_expected: f64,
    pub niche_coverage: f64,
    pub ratio_r: f64,
    pub ratio_r_star: f64,
}

fn require(children: &[BehaviorVector], what: &'static str, needed: usize) -> Result<()> {
    if children.len() < needed {
        return Err(Error::too_few(what, needed, children.len()));
    }
    let dim = children[0].dim();
    if let Some(b) = children.iter().find(|b| b.dim() != dim) {
        return Err(Error::DimensionMismatch {
            left: dim,
            right: b.dim(),
        });
    }
    Ok(())
}

fn parent_distances<'a>(
    parent: &'a BehaviorVector,
    children: &'a [BehaviorVector],
) -> impl Iterator<Item = Result<f64>> + 'a {
    children.iter().map(move |c| parent.try_distance(c))
}

pub fn local_sensitivity_max(parent: &BehaviorVector, children: &[BehaviorVector]) -> Result<f64> {
    require(children, "local sensitivity", 1)?;
    parent_distances(parent, children).try_fold(0.0, |m, d| Ok(f64::max(m, d?)))
}

pub fn local_sensitivity_expected(parent: &BehaviorVector, children: &[BehaviorVector]) -> Result<f64> {
    require(children, "local sensitivity", 1)?;
    let total: f64 = parent_distances(parent, children).sum::<Result<f64>>()?;
    Ok(total / children.len() as f64)
}

fn pairwise(children: &[BehaviorVector]) -> impl Iterator<Item = f64> + '_ {
    children
        .iter()
        .enumerate()
        .flat_map(move |(i, a)| children[i + 1..].iter().map(move |b| a.distance(b)))
}

/// Mean distance over all pairs of distinct children.
pub fn evolvability_expected(children: &[BehaviorVector]) -> Result<f64> {
    require(children, "evolvability", 2)?;
    let m = children.len() as f64;
    Ok(pairwise(children).sum::<f64>() / (m * (m - 1.0) / 2.0))
}

/// Diameter of the offspring cloud.
pub fn evolvability_max(children: &[BehaviorVector]) -> Result<f64> {
    require(children, "evolvability", 2)?;
    Ok(pairwise(children).fold(0.0, f64::max))
}

/// Fraction of the grid's niches occupied by at least one child.
pub fn niche_coverage(children: &[BehaviorVector], grid: &NicheGrid) -> Result<f64> {
    require(children, "niche coverage", 1)?;
    if children[0].dim() != grid.dim() {
        return Err(Error::DimensionMismatch {
            left: children[0].dim(),
            right: grid.dim(),
        });
    }
    let occupied: HashSet<usize> = children.iter().map(|b| grid.niche(b)).collect();
    Ok(occupied.len() as f64 / grid.cell_count() as f64)
}

/// Mean pairwise distance within one generation.
pub fn population_evolvability(generation: &[BehaviorVector]) -> Result<f64> {
    evolvability_expected(generation)
}

/// `(r, r*)`: diameter over maximum parent distance, and mean pairwise
/// distance over mean parent distance, each with `epsilon` added to the
/// denominator.
pub fn dissimila_ratios(
    parent: &BehaviorVector,
    children: &[BehaviorVector],
    epsilon: f64,
) -> Result<(f64, f64)> {
    require(children, "dissimila ratio", 2)?;
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::InvalidParameter("epsilon must be positive".into()));
    }
    let r = evolvability_max(children)? / (local_sensitivity_max(parent, children)? + epsilon);
    let r_star = evolvability_expected(children)? / (local_sensitivity_expected(parent, children)? + epsilon);
    Ok((r, r_star))
}

/// Largest sampled local sensitivity over a batch of parents.
pub fn global_sensitivity(samples: &[(BehaviorVector, Vec<BehaviorVector>)]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::too_few("global sensitivity sample", 1, 0));
    }
    samples
        .iter()
        .try_fold(0.0, |m, (p, c)| Ok(f64::max(m, local_sensitivity_max(p, c)?)))
}

pub fn report(
    parent: &BehaviorVector,
    children: &[BehaviorVector],
    grid: &NicheGrid,
    epsilon: f64,
) -> Result<MetricReport> {
    let (ratio_r, ratio_r_star) = dissimila_ratios(parent, children, epsilon)?;
    Ok(MetricReport {
        ls_max: local_sensitivity_max(parent, children)?,
        ls_expected: local_sensitivity_expected(parent, children)?,
        evolvability_max: evolvability_max(children)?,
        evolvability_expected: evolvability_expected(children)?,
        niche_coverage: niche_coverage(children, grid)?,
        ratio_r,
        ratio_r_star,
    })
}
