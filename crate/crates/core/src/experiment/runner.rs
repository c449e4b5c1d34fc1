use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::diversity::{Archive, ArchiveConfig};
use crate::environment::BehaviorVector;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::genotype::Genotype;
use crate::metrics::MetricReport;
use crate::niche::NicheGrid;
use crate::seed;
use crate::walk::{run_walk, Selection, WalkConfig};

use super::config::{EnvironmentSpec, ExperimentConfig};

/// Stream index for a run's starting genotype; walk steps use small indices.
const START_STREAM: u64 = u64::MAX;

/// One walk configuration of a batch; every run of it shares everything but the seed.
#[derive(Clone, Debug)]
pub struct BatchEntry {
    pub walk_kind: String,
    pub metric: String,
    pub pressure: f64,
    pub walk: WalkConfig,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutcome {
    pub config_index: usize,
    pub run_index: usize,
    pub reports: Vec<MetricReport>,
    /// Chosen child per step; `None` when the parent was retained.
    pub selected: Vec<Option<usize>>,
    pub archive_len: Vec<usize>,
    pub stalls: usize,
    pub final_genotype: Genotype,
    pub final_behavior: BehaviorVector,
    /// Loaded from a state file instead of being run.
    pub resumed: bool,
}

/// Everything that determines a run's result.
#[derive(Serialize)]
struct RunSpec<'a> {
    environment: &'a EnvironmentSpec,
    grid: &'a NicheGrid,
    archive: &'a ArchiveConfig,
    walk: &'a WalkConfig,
    start_seed: u64,
}

#[derive(Serialize, Deserialize)]
struct RunState {
    spec: serde_json::Value,
    reports: Vec<MetricReport>,
    selected: Vec<Option<usize>>,
    archive_len: Vec<usize>,
    stalls: usize,
    /// Hex of the binary genotype encoding.
    final_genotype: String,
    final_behavior: BehaviorVector,
}

pub fn run_seed(global_seed: u64, config_index: usize, run_index: usize) -> u64 {
    seed::derive(global_seed, &[config_index as u64, run_index as u64])
}

fn state_path(dir: &Path, config_index: usize, run_index: usize) -> PathBuf {
    dir.join(format!("run-c{config_index:03}-r{run_index:04}.json"))
}

/// Runs every entry `cfg.runs_per_config` times, in parallel over runs.
///
/// With `state_dir`, each finished run is persisted there and later calls
/// reuse any state whose recorded inputs match; unreadable or stale state is
/// recomputed. Results are ordered by entry, then run.
pub fn run_batch(
    cfg: &ExperimentConfig,
    entries: &[BatchEntry],
    state_dir: Option<&Path>,
    exec: Exec,
) -> Result<Vec<Vec<RunOutcome>>> {
    let (env, shape) = cfg.environment.build()?;
    if let Some(dir) = state_dir {
        fs::create_dir_all(dir)?;
    }
    let runs = cfg.runs_per_config;
    let flat = exec.try_map(entries.len() * runs, |idx| {
        let (c, r) = (idx / runs, idx % runs);
        let mut walk = entries[c].walk.clone();
        walk.seed = run_seed(cfg.global_seed, c, r);
        let start_seed = seed::derive(walk.seed, &[START_STREAM]);
        let spec = serde_json::to_value(RunSpec {
            environment: &cfg.environment,
            grid: &cfg.grid,
            archive: &cfg.walk.archive,
            walk: &walk,
            start_seed,
        })?;
        let path = state_dir.map(|d| state_path(d, c, r));
        if let Some(outcome) = path.as_deref().and_then(|p| load_state(p, &spec, c, r)) {
            return Ok(outcome);
        }

        let start = Genotype::xavier(shape.clone(), start_seed);
        let mut archive = Archive::from_config(&cfg.walk.archive)?;
        let record = run_walk(&walk, &env, start, &cfg.grid, &mut archive, Exec::Sequential)?;
        let outcome = RunOutcome {
            config_index: c,
            run_index: r,
            reports: record.steps.iter().map(|s| s.report.clone()).collect(),
            selected: record
                .steps
                .iter()
                .map(|s| match s.selection {
                    Selection::Child(i) => Some(i),
                    Selection::Retain => None,
                })
                .collect(),
            archive_len: record.steps.iter().map(|s| s.archive_len).collect(),
            stalls: record.stalls,
            final_genotype: record.final_parent,
            final_behavior: record.final_behavior,
            resumed: false,
        };
        if let Some(p) = &path {
            save_state(p, spec, &outcome)?;
        }
        Ok::<_, Error>(outcome)
    })?;

    let mut grouped: Vec<Vec<RunOutcome>> = (0..entries.len()).map(|_| Vec::with_capacity(runs)).collect();
    for o in flat {
        grouped[o.config_index].push(o);
    }
    Ok(grouped)
}

fn load_state(path: &Path, spec: &serde_json::Value, c: usize, r: usize) -> Option<RunOutcome> {
    let text = fs::read_to_string(path).ok()?;
    let state: RunState = serde_json::from_str(&text).ok()?;
    if &state.spec != spec {
        return None;
    }
    let bytes = hex::decode(&state.final_genotype).ok()?;
    let final_genotype = Genotype::from_bytes(&bytes).ok()?;
    let len = state.reports.len();
    if state.selected.len() != len || state.archive_len.len() != len {
        return None;
    }
    Some(RunOutcome {
        config_index: c,
        run_index: r,
        reports: state.reports,
        selected: state.selected,
        archive_len: state.archive_len,
        stalls: state.stalls,
        final_genotype,
        final_behavior: state.final_behavior,
        resumed: true,
    })
}

fn save_state(path: &Path, spec: serde_json::Value, o: &RunOutcome) -> Result<()> {
    let state = RunState {
        spec,
        reports: o.reports.clone(),
        selected: o.selected.clone(),
        archive_len: o.archive_len.clone(),
        stalls: o.stalls,
        final_genotype: hex::encode(o.final_genotype.to_bytes()),
        final_behavior: o.final_behavior.clone(),
    };
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, serde_json::to_vec(&state)?)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::AnalyticLandscape;
    use crate::experiment::config::Profile;
    use crate::walk::WalkKind;

    fn small_config() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::profile(Profile::Desk);
        cfg.environment = EnvironmentSpec::Analytic {
            landscape: AnalyticLandscape::random_sinusoid(2, 6, 3.0, 4),
            genotype_len: 6,
        };
        cfg.grid = NicheGrid::new(vec![(-6.0, 6.0); 2], vec![6, 6]).unwrap();
        cfg.runs_per_config = 3;
        cfg.walk.length = 5;
        cfg.walk.mutation.offspring_count = 8;
        cfg
    }

    fn entries(cfg: &ExperimentConfig) -> Vec<BatchEntry> {
        [WalkKind::Selective, WalkKind::Random]
            .into_iter()
            .map(|kind| BatchEntry {
                walk_kind: kind.to_string(),
                metric: "knn".into(),
                pressure: kind.pressure(8),
                walk: WalkConfig {
                    kind,
                    length: cfg.walk.length,
                    metric: cfg.metric("knn").unwrap(),
                    mutation: cfg.walk.mutation.clone(),
                    seed: 0,
                },
            })
            .collect()
    }

    #[test]
    fn batch_shape_and_exec_independence() {
        let cfg = small_config();
        let e = entries(&cfg);
        let seq = run_batch(&cfg, &e, None, Exec::Sequential).unwrap();
        let par = run_batch(&cfg, &e, None, Exec::Parallel).unwrap();
        assert_eq!(seq, par);
        assert_eq!(seq.len(), 2);
        for (c, runs) in seq.iter().enumerate() {
            assert_eq!(runs.len(), 3);
            for (r, o) in runs.iter().enumerate() {
                assert_eq!((o.config_index, o.run_index), (c, r));
                assert_eq!(o.reports.len(), 5);
            }
        }
        assert_ne!(seq[0][0].reports, seq[0][1].reports);
    }

    #[test]
    fn state_files_resume_identically() {
        let cfg = small_config();
        let e = entries(&cfg);
        let dir = tempfile::tempdir().unwrap();
        let first = run_batch(&cfg, &e, Some(dir.path()), Exec::Parallel).unwrap();
        assert!(first.iter().flatten().all(|o| !o.resumed));

        fs::remove_file(state_path(dir.path(), 1, 2)).unwrap();
        fs::write(state_path(dir.path(), 0, 1), b"{ truncated").unwrap();
        let second = run_batch(&cfg, &e, Some(dir.path()), Exec::Sequential).unwrap();
        let resumed: Vec<(usize, usize)> = second
            .iter()
            .flatten()
            .filter(|o| !o.resumed)
            .map(|o| (o.config_index, o.run_index))
            .collect();
        assert_eq!(resumed, vec![(0, 1), (1, 2)]);
        let strip = |v: Vec<Vec<RunOutcome>>| {
            v.into_iter()
                .flatten()
                .map(|mut o| {
                    o.resumed = false;
                    o
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(strip(first), strip(second));
    }

    #[test]
    fn stale_state_is_recomputed() {
        let mut cfg = small_config();
        let e = entries(&cfg);
        let dir = tempfile::tempdir().unwrap();
        run_batch(&cfg, &e, Some(dir.path()), Exec::Sequential).unwrap();
        cfg.global_seed = 1;
        let again = run_batch(&cfg, &e, Some(dir.path()), Exec::Sequential).unwrap();
        assert!(again.iter().flatten().all(|o| !o.resumed));
    }
}
