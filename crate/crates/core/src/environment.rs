//! Behavior functions: mappings from genotypes to behavior vectors.
//!
//! [`PointPushWorld`] is a deterministic episodic task in which a disc-shaped
//! agent, driven by the decoded policy, may push a disc-shaped block around a
//! bounded arena. The behavior of a genotype is the final block position.
//! [`AnalyticLandscape`] provides closed-form behavior functions used as
//! test oracles.

use std::ops::Deref;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genotype::{Genotype, NetworkShape, Policy};
use crate::seed;

/// A point in behavior space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BehaviorVector(Vec<f64>);

impl BehaviorVector {
    pub fn new(components: Vec<f64>) -> Self {
        Self(components)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Euclidean distance. Panics on a dimension mismatch; use
    /// [`BehaviorVector::try_distance`] where dimensions are not already checked.
    pub fn distance(&self, other: &BehaviorVector) -> f64 {
        assert_eq!(self.dim(), other.dim(), "behavior dimension mismatch");
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn try_distance(&self, other: &BehaviorVector) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                left: self.dim(),
                right: other.dim(),
            });
        }
        Ok(self.distance(other))
    }

    pub fn translated(&self, by: &[f64]) -> Self {
        Self(self.0.iter().zip(by).map(|(a, t)| a + t).collect())
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self(self.0.iter().map(|a| a * s).collect())
    }
}

impl Deref for BehaviorVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for BehaviorVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

impl<const N: usize> From<[f64; N]> for BehaviorVector {
    fn from(v: [f64; N]) -> Self {
        Self(v.to_vec())
    }
}

/// The genotype → behavior mapping φ.
pub trait BehaviorFunction: Sync {
    fn behavior(&self, g: &Genotype) -> Result<BehaviorVector>;

    fn behavior_dim(&self) -> usize;
}

impl<T: BehaviorFunction + ?Sized> BehaviorFunction for &T {
    fn behavior(&self, g: &Genotype) -> Result<BehaviorVector> {
        (**self).behavior(g)
    }

    fn behavior_dim(&self) -> usize {
        (**self).behavior_dim()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EpisodeTrace {
    pub observations: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub step_count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PointPushWorld {
    pub arena_min: [f64; 2],
    pub arena_max: [f64; 2],
    pub agent_start: [f64; 2],
    pub block_start: [f64; 2],
    pub agent_radius: f64,
    pub block_radius: f64,
    /// Distance moved per unit action per step.
    pub step_size: f64,
    pub max_steps: usize,
}

impl Default for PointPushWorld {
    fn default() -> Self {
        Self {
            arena_min: [0.0, 0.0],
            arena_max: [1.0, 1.0],
            agent_start: [0.2, 0.5],
            block_start: [0.5, 0.5],
            agent_radius: 0.04,
            block_radius: 0.06,
            step_size: 0.02,
            max_steps: 50,
        }
    }
}

impl PointPushWorld {
    pub const OBSERVATION_DIM: usize = 8;
    pub const ACTION_DIM: usize = 2;

    pub fn validate(&self) -> Result<()> {
        let inside = |p: [f64; 2], strict: bool| {
            (0..2).all(|k| {
                if strict {
                    self.arena_min[k] < p[k] && p[k] < self.arena_max[k]
                } else {
                    self.arena_min[k] <= p[k] && p[k] <= self.arena_max[k]
                }
            })
        };
        let all_finite = self
            .arena_min
            .iter()
            .chain(&self.arena_max)
            .chain(&self.agent_start)
            .chain(&self.block_start)
            .chain([&self.agent_radius, &self.block_radius, &self.step_size])
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::Config("world parameters must be finite".into()));
        }
        if (0..2).any(|k| self.arena_min[k] >= self.arena_max[k]) {
            return Err(Error::Config("arena_min must be below arena_max".into()));
        }
        if !inside(self.block_start, true) {
            return Err(Error::Config(
                "block_start must lie strictly inside the arena".into(),
            ));
        }
        if !inside(self.agent_start, false) {
            return Err(Error::Config("agent_start must lie inside the arena".into()));
        }
        if self.agent_radius <= 0.0 || self.block_radius <= 0.0 {
            return Err(Error::Config("radii must be positive".into()));
        }
        if self.step_size <= 0.0 || self.max_steps == 0 {
            return Err(Error::Config("step_size and max_steps must be positive".into()));
        }
        Ok(())
    }

    /// Network shape this world expects for the given hidden layers.
    pub fn network_shape(&self, hidden_dims: Vec<usize>) -> Result<NetworkShape> {
        NetworkShape::new(Self::OBSERVATION_DIM, hidden_dims, Self::ACTION_DIM)
    }

    fn check_shape(&self, g: &Genotype) -> Result<()> {
        let shape = g.shape();
        if shape.input_dim() != Self::OBSERVATION_DIM || shape.output_dim() != Self::ACTION_DIM {
            return Err(Error::Config(format!(
                "push world needs an {}-input, {}-output network, got {shape}",
                Self::OBSERVATION_DIM,
                Self::ACTION_DIM
            )));
        }
        Ok(())
    }

    fn clamp(&self, p: &mut [f64; 2]) {
        for ((v, lo), hi) in p.iter_mut().zip(self.arena_min).zip(self.arena_max) {
            *v = v.clamp(lo, hi);
        }
    }

    fn simulate(&self, g: &Genotype, mut trace: Option<&mut EpisodeTrace>) -> Result<BehaviorVector> {
        self.check_shape(g)?;
        let policy = Policy::decode(g);
        let mut agent = self.agent_start;
        let mut block = self.block_start;
        let contact = self.agent_radius + self.block_radius;
        for _ in 0..self.max_steps {
            let obs = [
                agent[0],
                agent[1],
                block[0],
                block[1],
                agent[0] - block[0],
                agent[1] - block[1],
                block[0] - self.block_start[0],
                block[1] - self.block_start[1],
            ];
            let action = policy.forward(&obs)?;
            agent[0] += self.step_size * action[0];
            agent[1] += self.step_size * action[1];
            self.clamp(&mut agent);

            let dx = block[0] - agent[0];
            let dy = block[1] - agent[1];
            let dist = (dx * dx + dy * dy).sqrt();
            if dist < contact {
                let (nx, ny) = if dist > 0.0 {
                    (dx / dist, dy / dist)
                } else {
                    // Coincident centers: push along the motion direction, or +x if idle.
                    let norm = (action[0] * action[0] + action[1] * action[1]).sqrt();
                    if norm > 0.0 {
                        (action[0] / norm, action[1] / norm)
                    } else {
                        (1.0, 0.0)
                    }
                };
                let overlap = contact - dist;
                block[0] += nx * overlap;
                block[1] += ny * overlap;
                self.clamp(&mut block);
            }

            if let Some(t) = trace.as_deref_mut() {
                t.observations.push(obs.to_vec());
                t.actions.push(action);
                t.step_count += 1;
            }
        }
        Ok(BehaviorVector(block.to_vec()))
    }

    /// Runs one episode and returns the final block position with the full trace.
    pub fn rollout(&self, g: &Genotype) -> Result<(BehaviorVector, EpisodeTrace)> {
        let mut trace = EpisodeTrace::default();
        let b = self.simulate(g, Some(&mut trace))?;
        Ok((b, trace))
    }
}

impl BehaviorFunction for PointPushWorld {
    fn behavior(&self, g: &Genotype) -> Result<BehaviorVector> {
        self.simulate(g, None)
    }

    fn behavior_dim(&self) -> usize {
        2
    }
}

/// Closed-form behavior functions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnalyticLandscape {
    /// Every genotype maps to `value`.
    Constant { value: Vec<f64> },
    /// `φ(θ) = Aθ + b`. Rows of `matrix` may be shorter than the genotype;
    /// only the leading weights are read.
    Linear { matrix: Vec<Vec<f64>>, offset: Vec<f64> },
    /// `φ_j(θ) = Σ_i sin(c_ji θ_i)` over the leading weights.
    Sinusoid { coefficients: Vec<Vec<f64>> },
}

impl AnalyticLandscape {
    /// `φ(θ) = (θ_0, …, θ_{dim-1})`.
    pub fn linear_identity(dim: usize) -> Self {
        let matrix = (0..dim)
            .map(|r| (0..dim).map(|c| if r == c { 1.0 } else { 0.0 }).collect())
            .collect();
        AnalyticLandscape::Linear {
            matrix,
            offset: vec![0.0; dim],
        }
    }

    /// Sinusoid with coefficients uniform in `[-scale, scale]`.
    pub fn random_sinusoid(dim: usize, terms: usize, scale: f64, seed: u64) -> Self {
        let mut rng = seed::rng(seed);
        let coefficients = (0..dim)
            .map(|_| (0..terms).map(|_| rng.random_range(-scale..=scale)).collect())
            .collect();
        AnalyticLandscape::Sinusoid { coefficients }
    }

    pub fn dim(&self) -> usize {
        match self {
            AnalyticLandscape::Constant { value } => value.len(),
            AnalyticLandscape::Linear { offset, .. } => offset.len(),
            AnalyticLandscape::Sinusoid { coefficients } => coefficients.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            AnalyticLandscape::Constant { value } => !value.is_empty(),
            AnalyticLandscape::Linear { matrix, offset } => {
                !offset.is_empty() && matrix.len() == offset.len()
            }
            AnalyticLandscape::Sinusoid { coefficients } => !coefficients.is_empty(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(
                "analytic landscape needs a non-empty output and matching matrix rows".into(),
            ))
        }
    }
}

pub fn analytic_behavior(kind: &AnalyticLandscape, g: &Genotype) -> BehaviorVector {
    let w = g.weights();
    let out = match kind {
        AnalyticLandscape::Constant { value } => value.clone(),
        AnalyticLandscape::Linear { matrix, offset } => matrix
            .iter()
            .zip(offset)
            .map(|(row, b)| b + row.iter().zip(w).map(|(a, t)| a * t).sum::<f64>())
            .collect(),
        AnalyticLandscape::Sinusoid { coefficients } => coefficients
            .iter()
            .map(|row| row.iter().zip(w).map(|(c, t)| (c * t).sin()).sum())
            .collect(),
    };
    BehaviorVector(out)
}

impl BehaviorFunction for AnalyticLandscape {
    fn behavior(&self, g: &Genotype) -> Result<BehaviorVector> {
        Ok(analytic_behavior(self, g))
    }

    fn behavior_dim(&self) -> usize {
        self.dim()
    }
}

/// Any behavior function selectable from a configuration file.
#[derive(Clone, Debug, PartialEq)]
pub enum Environment {
    PointPush(PointPushWorld),
    Analytic(AnalyticLandscape),
}

impl BehaviorFunction for Environment {
    fn behavior(&self, g: &Genotype) -> Result<BehaviorVector> {
        match self {
            Environment::PointPush(w) => w.behavior(g),
            Environment::Analytic(a) => a.behavior(g),
        }
    }

    fn behavior_dim(&self) -> usize {
        match self {
            Environment::PointPush(w) => w.behavior_dim(),
            Environment::Analytic(a) => a.behavior_dim(),
        }
    }
}
