//! Long-sighted evolvability on a discretized behavior space.
//!
//! Offspring placement is modelled as a Markov chain over niches: `T[i][j]`
//! is the probability that a solution in niche `i` produces a child in niche
//! `j`. A genotype's children define the initial distribution `D`. Its
//! `l`-evolvability is the expected fraction of niches visited by `U`
//! simulated lineages, each followed for `l` generations (generation 1 is
//! drawn from `D`, later generations from `T`). With `l = 1` this is the
//! expected niche coverage of `U` children.
//!
//! Rows of `T` that were never observed are treated as absorbing.

use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::environment::BehaviorFunction;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::genotype::Genotype;
use crate::niche::NicheGrid;
use crate::seed::{self, Rng};
use crate::variation::{mutate, MutationConfig};

const ROW_TOLERANCE: f64 = 1e-9;

/// Raw niche → niche child counts. Can be updated one observation at a time.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TransitionCounts {
    n: usize,
    counts: Vec<u64>,
}

impl TransitionCounts {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            counts: vec![0; n * n],
        }
    }

    pub fn niches(&self) -> usize {
        self.n
    }

    pub fn record(&mut self, from: usize, to: usize) {
        assert!(from < self.n && to < self.n, "niche index out of range");
        self.counts[from * self.n + to] += 1;
    }

    pub fn get(&self, from: usize, to: usize) -> u64 {
        self.counts[from * self.n + to]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Row-normalized probabilities.
    pub fn to_matrix(&self) -> TransitionMatrix {
        let rows = (0..self.n)
            .map(|i| {
                let row = &self.counts[i * self.n..(i + 1) * self.n];
                let total: u64 = row.iter().sum();
                let probs = if total == 0 {
                    vec![0.0; self.n]
                } else {
                    row.iter().map(|&c| c as f64 / total as f64).collect()
                };
                (row.to_vec(), probs, total > 0)
            })
            .collect::<Vec<_>>();
        let mut counts = Vec::with_capacity(self.n);
        let mut probabilities = Vec::with_capacity(self.n);
        let mut observed = Vec::with_capacity(self.n);
        for (c, p, o) in rows {
            counts.push(c);
            probabilities.push(p);
            observed.push(o);
        }
        TransitionMatrix {
            counts,
            probabilities,
            observed,
        }
    }
}

/// Row-stochastic niche transition matrix. Unobserved rows hold zeros.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TransitionFile", into = "TransitionFile")]
pub struct TransitionMatrix {
    counts: Vec<Vec<u64>>,
    probabilities: Vec<Vec<f64>>,
    observed: Vec<bool>,
}

/// On-disk form: row-major probabilities and counts.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TransitionFile {
    niches: usize,
    observed: Vec<bool>,
    probabilities: Vec<Vec<f64>>,
    #[serde(default)]
    counts: Option<Vec<Vec<u64>>>,
}

impl From<TransitionMatrix> for TransitionFile {
    fn from(t: TransitionMatrix) -> Self {
        TransitionFile {
            niches: t.n(),
            observed: t.observed,
            probabilities: t.probabilities,
            counts: Some(t.counts),
        }
    }
}

impl TryFrom<TransitionFile> for TransitionMatrix {
    type Error = Error;

    fn try_from(f: TransitionFile) -> Result<Self> {
        let n = f.niches;
        let counts = f.counts.unwrap_or_else(|| vec![vec![0; n]; n]);
        if f.observed.len() != n || counts.len() != n || counts.iter().any(|r| r.len() != n) {
            return Err(Error::Malformed("transition file dimensions disagree".into()));
        }
        let t = TransitionMatrix::from_rows(f.probabilities)?;
        if t.observed != f.observed {
            return Err(Error::Malformed(
                "observed flags disagree with probability rows".into(),
            ));
        }
        Ok(TransitionMatrix { counts, ..t })
    }
}

impl TransitionMatrix {
    /// Builds a matrix from probability rows. An all-zero row is unobserved;
    /// every other row must be non-negative and sum to one.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::Malformed("transition matrix has no rows".into()));
        }
        let mut observed = Vec::with_capacity(n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Malformed(format!(
                    "row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                return Err(Error::Malformed(format!(
                    "row {i} has a negative or non-finite entry"
                )));
            }
            let sum: f64 = row.iter().sum();
            if sum == 0.0 {
                observed.push(false);
            } else if (sum - 1.0).abs() <= ROW_TOLERANCE {
                observed.push(true);
            } else {
                return Err(Error::Malformed(format!("row {i} sums to {sum}")));
            }
        }
        Ok(Self {
            counts: vec![vec![0; n]; n],
            probabilities: rows,
            observed,
        })
    }

    pub fn identity(n: usize) -> Self {
        let rows = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        Self::from_rows(rows).expect("identity is row-stochastic")
    }

    pub fn uniform(n: usize) -> Self {
        Self::from_rows(vec![vec![1.0 / n as f64; n]; n]).expect("uniform is row-stochastic")
    }

    pub fn n(&self) -> usize {
        self.probabilities.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.probabilities[i]
    }

    pub fn counts_row(&self, i: usize) -> &[u64] {
        &self.counts[i]
    }

    pub fn is_observed(&self, i: usize) -> bool {
        self.observed[i]
    }

    pub fn observed_rows(&self) -> usize {
        self.observed.iter().filter(|&&o| o).count()
    }

    /// Share of recorded transitions that stay in their niche.
    pub fn diagonal_mass(&self) -> f64 {
        let total: u64 = self.counts.iter().flatten().sum();
        if total == 0 {
            return 0.0;
        }
        let diag: u64 = (0..self.n()).map(|i| self.counts[i][i]).sum();
        diag as f64 / total as f64
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Sampling tables for a chain. Cumulative rows make each draw a binary search.
struct Chain {
    n: usize,
    cumulative: Vec<Vec<f64>>,
    observed: Vec<bool>,
    initial: Vec<f64>,
}

fn cumulative(p: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    p.iter()
        .map(|v| {
            acc += v;
            acc
        })
        .collect()
}

fn draw(cum: &[f64], rng: &mut Rng) -> usize {
    let total = *cum.last().expect("non-empty distribution");
    let u = rng.random::<f64>() * total;
    // First index with cum > u; that cell has positive mass since u >= cum[i-1].
    cum.partition_point(|&c| c <= u).min(cum.len() - 1)
}

impl Chain {
    fn new(t: &TransitionMatrix, d: &[f64]) -> Result<Self> {
        validate_distribution(d, t.n())?;
        Ok(Self {
            n: t.n(),
            cumulative: t.probabilities.iter().map(|r| cumulative(r)).collect(),
            observed: t.observed.clone(),
            initial: cumulative(d),
        })
    }

    /// Runs `lineages` chains of `generations` states. Returns distinct states
    /// visited and the number of steps that hit an unobserved row.
    fn run(&self, generations: usize, lineages: usize, rng: &mut Rng) -> (usize, usize) {
        let mut seen = vec![false; self.n];
        let mut distinct = 0;
        let mut absorbed = 0;
        for _ in 0..lineages {
            let mut state = draw(&self.initial, rng);
            for gen in 0..generations {
                if gen > 0 {
                    if self.observed[state] {
                        state = draw(&self.cumulative[state], rng);
                    } else {
                        absorbed += 1;
                    }
                }
                if !seen[state] {
                    seen[state] = true;
                    distinct += 1;
                }
            }
        }
        (distinct, absorbed)
    }
}

fn validate_distribution(d: &[f64], n: usize) -> Result<()> {
    if d.len() != n {
        return Err(Error::DimensionMismatch {
            left: d.len(),
            right: n,
        });
    }
    if d.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(Error::InvalidParameter(
            "distribution has a negative entry".into(),
        ));
    }
    let sum: f64 = d.iter().sum();
    if (sum - 1.0).abs() > ROW_TOLERANCE {
        return Err(Error::InvalidParameter(format!("distribution sums to {sum}")));
    }
    Ok(())
}

pub fn one_hot(n: usize, i: usize) -> Vec<f64> {
    let mut d = vec![0.0; n];
    d[i] = 1.0;
    d
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DescendantSample {
    pub coverage: f64,
    pub distinct: usize,
    /// Steps that landed in an unobserved (absorbing) row.
    pub absorbed: usize,
}

/// One simulation of `lineages` descendant chains over `generations` generations.
pub fn simulate_descendants(
    t: &TransitionMatrix,
    d: &[f64],
    generations: usize,
    lineages: usize,
    seed: u64,
) -> Result<DescendantSample> {
    if generations == 0 || lineages == 0 {
        return Err(Error::InvalidParameter("l and U must be at least 1".into()));
    }
    let chain = Chain::new(t, d)?;
    let (distinct, absorbed) = chain.run(generations, lineages, &mut seed::rng(seed));
    Ok(DescendantSample {
        coverage: distinct as f64 / t.n() as f64,
        distinct,
        absorbed,
    })
}

/// Exact expected coverage of `lineages` independent draws from `d`.
pub fn expected_coverage(d: &[f64], lineages: usize) -> f64 {
    let u = lineages.min(i32::MAX as usize) as i32;
    d.iter().map(|p| 1.0 - (1.0 - p).powi(u)).sum::<f64>() / d.len() as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LEvolvabilityParams {
    /// Generations followed per lineage.
    pub l: usize,
    /// Lineages per simulation.
    pub lineages: usize,
    pub repeats: usize,
    /// Mutants drawn to estimate the child distribution.
    pub sample_size: usize,
}

impl Default for LEvolvabilityParams {
    fn default() -> Self {
        Self {
            l: 2,
            lineages: 30,
            repeats: 200,
            sample_size: 30,
        }
    }
}

impl LEvolvabilityParams {
    pub fn validate(&self) -> Result<()> {
        if self.l == 0 || self.lineages == 0 || self.repeats == 0 || self.sample_size == 0 {
            return Err(Error::InvalidParameter(
                "l, lineages, repeats and sample_size must all be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LEvolvabilityEstimate {
    pub mean_coverage: f64,
    pub std_error: f64,
    pub l: usize,
    pub lineages: usize,
    pub repeats: usize,
    pub absorbed: usize,
}

/// Mean and standard error of coverage over `params.repeats` simulations
/// started from `d`. `sample_size` is not used here.
pub fn l_evolvability_from_distribution(
    t: &TransitionMatrix,
    d: &[f64],
    params: &LEvolvabilityParams,
    seed: u64,
    exec: Exec,
) -> Result<LEvolvabilityEstimate> {
    params.validate()?;
    let chain = Chain::new(t, d)?;
    let runs = exec.map(params.repeats, |r| {
        chain.run(params.l, params.lineages, &mut seed::rng_at(seed, &[r as u64]))
    });
    let n = t.n() as f64;
    let cov: Vec<f64> = runs.iter().map(|&(k, _)| k as f64 / n).collect();
    let reps = cov.len() as f64;
    let mean = cov.iter().sum::<f64>() / reps;
    let std_error = if cov.len() > 1 {
        let var = cov.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (reps - 1.0);
        (var / reps).sqrt()
    } else {
        0.0
    };
    Ok(LEvolvabilityEstimate {
        mean_coverage: mean,
        std_error,
        l: params.l,
        lineages: params.lineages,
        repeats: params.repeats,
        absorbed: runs.iter().map(|&(_, a)| a).sum(),
    })
}

/// Empirical niche histogram of `sample_size` mutants of `g`.
pub fn child_distribution<F: BehaviorFunction + ?Sized>(
    g: &Genotype,
    grid: &NicheGrid,
    phi: &F,
    mutation: &MutationConfig,
    sample_size: usize,
    seed: u64,
    exec: Exec,
) -> Result<Vec<f64>> {
    if sample_size == 0 {
        return Err(Error::InvalidParameter("sample_size must be at least 1".into()));
    }
    let niches = exec.try_map(sample_size, |i| {
        let child = mutate(g, mutation, seed::derive(seed, &[i as u64]));
        phi.behavior(&child).map(|b| grid.niche(&b))
    })?;
    let mut d = vec![0.0; grid.cell_count()];
    for n in niches {
        d[n] += 1.0;
    }
    d.iter_mut().for_each(|p| *p /= sample_size as f64);
    Ok(d)
}

/// Child distribution of `g` followed by [`l_evolvability_from_distribution`].
#[allow(clippy::too_many_arguments)]
pub fn l_evolvability<F: BehaviorFunction + ?Sized>(
    g: &Genotype,
    grid: &NicheGrid,
    t: &TransitionMatrix,
    phi: &F,
    mutation: &MutationConfig,
    params: &LEvolvabilityParams,
    seed: u64,
    exec: Exec,
) -> Result<LEvolvabilityEstimate> {
    params.validate()?;
    if t.n() != grid.cell_count() {
        return Err(Error::DimensionMismatch {
            left: t.n(),
            right: grid.cell_count(),
        });
    }
    let d = child_distribution(
        g,
        grid,
        phi,
        mutation,
        params.sample_size,
        seed::derive(seed, &[0]),
        exec,
    )?;
    l_evolvability_from_distribution(t, &d, params, seed::derive(seed, &[1]), exec)
}

#[derive(Clone, Debug)]
pub struct TransitionEstimate {
    pub matrix: TransitionMatrix,
    /// Niches that hold an elite, in discovery order.
    pub discovered: Vec<usize>,
    pub evaluations: usize,
}

impl TransitionEstimate {
    /// Fewer than two niches were ever reached.
    pub fn is_degenerate(&self) -> bool {
        self.discovered.len() < 2
    }
}

/// Explores the grid with one elite per niche and counts where children land.
///
/// Each iteration picks a uniformly random occupied niche, mutates its elite,
/// records the parent → child niche transition, and stores the child as the
/// elite of its niche if that niche was empty. `budget` counts mutations;
/// the initial genotypes are evaluated on top of it.
pub fn estimate_transition_matrix<F: BehaviorFunction + ?Sized>(
    grid: &NicheGrid,
    phi: &F,
    initial: &[Genotype],
    mutation: &MutationConfig,
    budget: usize,
    seed: u64,
) -> Result<TransitionEstimate> {
    let n = grid.cell_count();
    if budget < n {
        return Err(Error::InvalidParameter(format!(
            "budget {budget} is below the niche count {n}"
        )));
    }
    if initial.is_empty() {
        return Err(Error::too_few("initial genotypes", 1, 0));
    }
    let mut elites: Vec<Option<Genotype>> = vec![None; n];
    let mut discovered = Vec::new();
    for g in initial {
        let cell = grid.niche(&phi.behavior(g)?);
        if elites[cell].is_none() {
            elites[cell] = Some(g.clone());
            discovered.push(cell);
        }
    }
    let mut counts = TransitionCounts::new(n);
    let mut rng = seed::rng_at(seed, &[u64::MAX]);
    for it in 0..budget {
        let from = discovered[rng.random_range(0..discovered.len())];
        let parent = elites[from].as_ref().expect("discovered niches hold an elite");
        let child = mutate(parent, mutation, seed::derive(seed, &[it as u64]));
        let to = grid.niche(&phi.behavior(&child)?);
        counts.record(from, to);
        if elites[to].is_none() {
            elites[to] = Some(child);
            discovered.push(to);
        }
    }
    Ok(TransitionEstimate {
        matrix: counts.to_matrix(),
        discovered,
        evaluations: budget + initial.len(),
    })
}
