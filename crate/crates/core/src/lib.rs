//! Behavior-landscape analysis for neuroevolution.
//!
//! The crate generates single-state walks over a genotype → behavior mapping
//! under different amounts of selection pressure and different diversity
//! metrics, measures local sensitivity and evolvability of each visited
//! genotype, and estimates long-sighted (`l`-step) evolvability through a
//! Markov chain over behavior-space niches.
//!
//! Module map:
//!
//! * [`genotype`]: flat weight vectors and the feed-forward policies they decode to.
//! * [`environment`]: behavior functions (a deterministic push task and analytic landscapes).
//! * [`variation`]: Cauchy mutation and offspring sampling.
//! * [`diversity`]: novelty metrics and the bounded archive.
//! * [`metrics`]: sensitivity, evolvability and dissimila ratios.
//! * [`walk`]: selective, niche-selective, adaptive and random walks.
//! * [`markov`]: niche transition matrices and `l`-evolvability.
//! * [`stats`]: confidence intervals, Spearman and Kruskal-Wallis.
//! * [`experiment`]: configuration, batch orchestration and output files.

pub mod diversity;
pub mod environment;
pub mod error;
pub mod exec;
pub mod experiment;
pub mod genotype;
pub mod markov;
pub mod metrics;
pub mod niche;
pub mod seed;
pub mod stats;
pub mod variation;
pub mod walk;

pub use environment::{BehaviorFunction, BehaviorVector};
pub use error::{Error, Result};
pub use exec::Exec;
pub use genotype::{Genotype, NetworkShape, Policy};
pub use niche::NicheGrid;
