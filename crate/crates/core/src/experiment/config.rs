use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::diversity::{ArchiveConfig, DiversityMetricKind, KdeConfig};
use crate::environment::{AnalyticLandscape, Environment, PointPushWorld};
use crate::error::{Error, Result};
use crate::genotype::NetworkShape;
use crate::markov::LEvolvabilityParams;
use crate::metrics::MetricReport;
use crate::niche::NicheGrid;
use crate::variation::MutationConfig;
use crate::walk::WalkKind;

/// Named default sets. `Desk` finishes in minutes; `Paper` is the full-size batch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    #[default]
    Desk,
    Paper,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvironmentSpec {
    PointPush {
        #[serde(default)]
        world: PointPushWorld,
        hidden: Vec<usize>,
    },
    /// Genotypes are `genotype_len` free parameters fed to `landscape`.
    Analytic {
        landscape: AnalyticLandscape,
        genotype_len: usize,
    },
}

impl EnvironmentSpec {
    pub fn build(&self) -> Result<(Environment, Arc<NetworkShape>)> {
        match self {
            EnvironmentSpec::PointPush { world, hidden } => {
                world.validate()?;
                let shape = world.network_shape(hidden.clone())?;
                Ok((Environment::PointPush(world.clone()), Arc::new(shape)))
            }
            EnvironmentSpec::Analytic {
                landscape,
                genotype_len,
            } => {
                landscape.validate()?;
                if *genotype_len == 0 {
                    return Err(Error::Config("genotype_len must be at least 1".into()));
                }
                // One output unit: `genotype_len` weights plus a trailing bias.
                let shape = NetworkShape::new(*genotype_len, vec![], 1)?;
                Ok((Environment::Analytic(landscape.clone()), Arc::new(shape)))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WalkSettings {
    pub length: usize,
    /// Neighbors used by the knn metrics.
    pub k: usize,
    pub mutation: MutationConfig,
    pub kde: KdeConfig,
    pub archive: ArchiveConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PressureSweepSettings {
    pub metric: String,
    pub levels: Vec<WalkKind>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricComparisonSettings {
    pub walk: WalkKind,
    pub metrics: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkovSettings {
    /// Mutations spent estimating the transition matrix.
    pub budget: usize,
    /// Random genotypes seeding the niche exploration.
    pub initial_genotypes: usize,
    /// Random genotypes whose l-evolvability is tabulated.
    pub genotypes: usize,
    pub l_values: Vec<usize>,
    pub lineages: usize,
    pub repeats: usize,
    pub sample_size: usize,
    /// Load the matrix from this file instead of estimating it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transition_file: Option<PathBuf>,
}

impl MarkovSettings {
    pub fn params(&self, l: usize) -> LEvolvabilityParams {
        LEvolvabilityParams {
            l,
            lineages: self.lineages,
            repeats: self.repeats,
            sample_size: self.sample_size,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DissimilaSettings {
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub environment: EnvironmentSpec,
    pub grid: NicheGrid,
    pub runs_per_config: usize,
    pub global_seed: u64,
    pub output_dir: PathBuf,
    /// Worker threads; 0 uses every available core.
    pub parallelism: usize,
    /// Report field tracked in the summary series and statistics.
    pub measure: Measure,
    pub walk: WalkSettings,
    pub pressure_sweep: PressureSweepSettings,
    pub metric_comparison: MetricComparisonSettings,
    pub markov: MarkovSettings,
    pub dissimila: DissimilaSettings,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    LsMax,
    LsExpected,
    EvolvabilityMax,
    EvolvabilityExpected,
    NicheCoverage,
    R,
    RStar,
}

impl Measure {
    pub fn of(self, r: &MetricReport) -> f64 {
        match self {
            Measure::LsMax => r.ls_max,
            Measure::LsExpected => r.ls_expected,
            Measure::EvolvabilityMax => r.evolvability_max,
            Measure::EvolvabilityExpected => r.evolvability_expected,
            Measure::NicheCoverage => r.niche_coverage,
            Measure::R => r.ratio_r,
            Measure::RStar => r.ratio_r_star,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Measure::LsMax => "ls_max",
            Measure::LsExpected => "ls_expected",
            Measure::EvolvabilityMax => "evolvability_max",
            Measure::EvolvabilityExpected => "evolvability_expected",
            Measure::NicheCoverage => "niche_coverage",
            Measure::R => "r",
            Measure::RStar => "r_star",
        }
    }
}

impl ExperimentConfig {
    pub fn profile(profile: Profile) -> Self {
        let (runs, length, levels) = match profile {
            Profile::Desk => (
                10,
                25,
                vec![
                    WalkKind::Selective,
                    WalkKind::Adaptive { top_fraction: 0.25 },
                    WalkKind::Adaptive { top_fraction: 0.5 },
                    WalkKind::Random,
                ],
            ),
            Profile::Paper => (
                50,
                50,
                vec![
                    WalkKind::Selective,
                    WalkKind::Adaptive { top_fraction: 0.1 },
                    WalkKind::Adaptive { top_fraction: 0.25 },
                    WalkKind::Adaptive { top_fraction: 0.5 },
                    WalkKind::Adaptive { top_fraction: 0.75 },
                    WalkKind::Random,
                ],
            ),
        };
        Self {
            environment: EnvironmentSpec::PointPush {
                world: PointPushWorld::default(),
                hidden: vec![32, 32],
            },
            grid: NicheGrid::unit_square(10).expect("10x10 grid is valid"),
            runs_per_config: runs,
            global_seed: 0,
            output_dir: PathBuf::from("out"),
            parallelism: 0,
            measure: Measure::EvolvabilityExpected,
            walk: WalkSettings {
                length,
                k: 15,
                mutation: MutationConfig::default(),
                kde: KdeConfig::default(),
                archive: ArchiveConfig::default(),
            },
            pressure_sweep: PressureSweepSettings {
                metric: "knn".into(),
                levels,
            },
            metric_comparison: MetricComparisonSettings {
                walk: WalkKind::Selective,
                metrics: ["knn", "knn_noarchive", "parent", "ancestors", "kde"]
                    .map(String::from)
                    .to_vec(),
            },
            markov: MarkovSettings {
                budget: 10_000,
                initial_genotypes: 10,
                genotypes: 10,
                l_values: vec![1, 2, 3],
                lineages: 30,
                repeats: 200,
                sample_size: 30,
                transition_file: None,
            },
            dissimila: DissimilaSettings { samples: 100 },
        }
    }

    /// Profile defaults with the TOML document `text` merged over them.
    pub fn from_toml(text: &str, profile: Profile) -> Result<Self> {
        let overrides: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let mut base =
            toml::Table::try_from(Self::profile(profile)).map_err(|e| Error::Config(e.to_string()))?;
        merge(&mut base, overrides);
        let cfg: Self = toml::Value::Table(base)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, profile: Profile) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text, profile)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let (env, _) = self.environment.build()?;
        use crate::environment::BehaviorFunction;
        if env.behavior_dim() != self.grid.dim() {
            return Err(Error::Config(format!(
                "grid has {} dimensions but behaviors have {}",
                self.grid.dim(),
                env.behavior_dim()
            )));
        }
        if self.runs_per_config == 0 {
            return Err(Error::Config("runs_per_config must be at least 1".into()));
        }
        if self.walk.length == 0 {
            return Err(Error::Config("walk length must be at least 1".into()));
        }
        self.walk.mutation.validate()?;
        self.walk.kde.validate()?;
        crate::diversity::Archive::from_config(&self.walk.archive)?;
        for kind in &self.pressure_sweep.levels {
            kind.validate()?;
        }
        self.metric_comparison.walk.validate()?;
        self.metric(&self.pressure_sweep.metric)?;
        for m in &self.metric_comparison.metrics {
            self.metric(m)?;
        }
        let m = &self.markov;
        if m.l_values.is_empty() || m.l_values.contains(&0) {
            return Err(Error::Config(
                "markov.l_values must be non-empty and positive".into(),
            ));
        }
        self.markov.params(1).validate()?;
        if m.transition_file.is_none() && m.initial_genotypes == 0 {
            return Err(Error::Config(
                "markov.initial_genotypes must be at least 1".into(),
            ));
        }
        Ok(())
    }

    pub fn metric(&self, key: &str) -> Result<DiversityMetricKind> {
        DiversityMetricKind::from_key(key, self.walk.k, &self.walk.kde)
    }

    /// Worker count with 0 resolved to the machine's parallelism.
    pub fn jobs(&self) -> usize {
        match self.parallelism {
            0 => std::thread::available_parallelism().map_or(1, |n| n.get()),
            n => n,
        }
    }
}

/// Recursive table merge; `over` wins on scalars and arrays.
fn merge(base: &mut toml::Table, over: toml::Table) {
    for (key, value) in over {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}
