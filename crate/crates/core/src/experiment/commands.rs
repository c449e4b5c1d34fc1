use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::environment::BehaviorFunction;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::genotype::Genotype;
use crate::markov::{
    self, estimate_transition_matrix, expected_coverage, l_evolvability_from_distribution, TransitionMatrix,
};
use crate::metrics::{self, DEFAULT_EPSILON};
use crate::seed;
use crate::stats::{self, Correlation, KruskalWallis};
use crate::variation::sample_neighbors;
use crate::walk::{WalkConfig, WalkKind};

use super::config::ExperimentConfig;
use super::runner::{run_batch, BatchEntry, RunOutcome};

/// Seed domains that keep the commands' random streams apart.
const MARKOV_DOMAIN: u64 = 0x6d61_726b;
const DISSIMILA_DOMAIN: u64 = 0x6469_7373;

#[derive(Debug, Serialize, Deserialize)]
struct SeriesRow {
    walk_kind: String,
    metric: String,
    step: usize,
    mean: f64,
    ci95: f64,
    run_count: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct RunRow {
    walk_kind: String,
    metric: String,
    run: usize,
    step: usize,
    ls_max: f64,
    ls_expected: f64,
    evolvability_max: f64,
    evolvability_expected: f64,
    niche_coverage: f64,
    r: f64,
    r_star: f64,
    selected: Option<usize>,
    archive_len: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub walk_kind: String,
    pub metric: String,
    pub pressure: f64,
    pub final_mean: f64,
    pub final_ci95: f64,
    pub run_count: usize,
    pub stalls: usize,
    /// The tracked measure at the last step of every run.
    pub final_values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PressureSweepStats {
    pub measure: String,
    pub final_step: usize,
    /// Pressure of each run against its final value; absent when either side is constant.
    pub spearman: Option<Correlation>,
    pub groups: Vec<GroupSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricComparisonStats {
    pub measure: String,
    pub final_step: usize,
    pub kruskal_wallis: KruskalWallis,
    pub groups: Vec<GroupSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkovStats {
    pub niches: usize,
    pub estimated: bool,
    pub evaluations: usize,
    pub discovered: usize,
    pub observed_rows: usize,
    pub diagonal_mass: f64,
    pub degenerate: bool,
    pub rows: Vec<LEvolvabilityRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LEvolvabilityRow {
    /// `genotype` or `niche`.
    pub source: String,
    /// Genotype digest or niche index.
    pub id: String,
    pub niche: usize,
    /// Distinct niches among the sampled children over the niche count; absent for niche rows.
    pub child_coverage: Option<f64>,
    pub expected_child_coverage: f64,
    /// `(l, mean coverage, standard error)`.
    pub l_evolvability: Vec<(usize, f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DissimilaRow {
    pub digest: String,
    pub ls_max: f64,
    pub ls_expected: f64,
    pub evolvability_max: f64,
    pub evolvability_expected: f64,
    pub r: f64,
    pub r_star: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DissimilaStats {
    pub samples: usize,
    pub global_sensitivity: f64,
    pub rows: Vec<DissimilaRow>,
}

/// Command outputs live in `<output_dir>/<command>/`.
pub fn command_dir(cfg: &ExperimentConfig, command: &str) -> PathBuf {
    cfg.output_dir.join(command)
}

fn prepare(cfg: &ExperimentConfig, command: &str) -> Result<PathBuf> {
    let dir = command_dir(cfg, command);
    fs::create_dir_all(&dir)?;
    let mut echo = cfg.clone();
    echo.parallelism = 0;
    fs::write(dir.join("config.toml"), echo.to_toml()?)?;
    Ok(dir)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Malformed(format!("{other:?}")),
    }
}

fn walk_config(cfg: &ExperimentConfig, kind: WalkKind, metric: &str) -> Result<WalkConfig> {
    Ok(WalkConfig {
        kind,
        length: cfg.walk.length,
        metric: cfg.metric(metric)?,
        mutation: cfg.walk.mutation.clone(),
        seed: 0,
    })
}

/// Writes `series.csv` and `runs.csv` and summarizes each entry's final step.
fn write_batch(
    cfg: &ExperimentConfig,
    dir: &Path,
    entries: &[BatchEntry],
    batch: &[Vec<RunOutcome>],
) -> Result<Vec<GroupSummary>> {
    let mut series = csv::Writer::from_path(dir.join("series.csv")).map_err(csv_err)?;
    let mut runs = csv::Writer::from_path(dir.join("runs.csv")).map_err(csv_err)?;
    let mut groups = Vec::with_capacity(entries.len());
    let last = cfg.walk.length - 1;
    for (entry, outcomes) in entries.iter().zip(batch) {
        let per_run: Vec<Vec<f64>> = outcomes
            .iter()
            .map(|o| o.reports.iter().map(|r| cfg.measure.of(r)).collect())
            .collect();
        let summary = stats::summarize(&per_run)?;
        for step in 0..summary.mean.len() {
            series
                .serialize(SeriesRow {
                    walk_kind: entry.walk_kind.clone(),
                    metric: entry.metric.clone(),
                    step,
                    mean: summary.mean[step],
                    ci95: summary.ci95_half_width[step],
                    run_count: summary.run_count,
                })
                .map_err(csv_err)?;
        }
        for o in outcomes {
            for (step, rep) in o.reports.iter().enumerate() {
                runs.serialize(RunRow {
                    walk_kind: entry.walk_kind.clone(),
                    metric: entry.metric.clone(),
                    run: o.run_index,
                    step,
                    ls_max: rep.ls_max,
                    ls_expected: rep.ls_expected,
                    evolvability_max: rep.evolvability_max,
                    evolvability_expected: rep.evolvability_expected,
                    niche_coverage: rep.niche_coverage,
                    r: rep.ratio_r,
                    r_star: rep.ratio_r_star,
                    selected: o.selected[step],
                    archive_len: o.archive_len[step],
                })
                .map_err(csv_err)?;
            }
        }
        groups.push(GroupSummary {
            walk_kind: entry.walk_kind.clone(),
            metric: entry.metric.clone(),
            pressure: entry.pressure,
            final_mean: summary.mean[last],
            final_ci95: summary.ci95_half_width[last],
            run_count: summary.run_count,
            stalls: outcomes.iter().map(|o| o.stalls).sum(),
            final_values: per_run.iter().map(|s| s[last]).collect(),
        });
    }
    series.flush()?;
    runs.flush()?;
    Ok(groups)
}

/// Walks at each configured pressure level, then correlates pressure with
/// the final-step measure across all runs.
pub fn pressure_sweep(cfg: &ExperimentConfig, exec: Exec) -> Result<PressureSweepStats> {
    let levels = &cfg.pressure_sweep.levels;
    if levels.len() < 2 {
        return Err(Error::Config("pressure_sweep needs at least two levels".into()));
    }
    let m = cfg.walk.mutation.offspring_count;
    let metric = &cfg.pressure_sweep.metric;
    let entries = levels
        .iter()
        .map(|kind| {
            Ok(BatchEntry {
                walk_kind: kind.to_string(),
                metric: metric.clone(),
                pressure: kind.pressure(m),
                walk: walk_config(cfg, kind.clone(), metric)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let dir = prepare(cfg, "pressure-sweep")?;
    let batch = run_batch(cfg, &entries, Some(&dir.join("state")), exec)?;
    let groups = write_batch(cfg, &dir, &entries, &batch)?;

    let (x, y): (Vec<f64>, Vec<f64>) = groups
        .iter()
        .flat_map(|g| g.final_values.iter().map(move |&v| (g.pressure, v)))
        .unzip();
    let spearman = match stats::spearman(&x, &y) {
        Ok(c) => Some(c),
        Err(Error::UndefinedCorrelation | Error::TooFew { .. }) => None,
        Err(e) => return Err(e),
    };
    let out = PressureSweepStats {
        measure: cfg.measure.name().into(),
        final_step: cfg.walk.length - 1,
        spearman,
        groups,
    };
    write_json(&dir.join("stats.json"), &out)?;
    Ok(out)
}

/// Walks under each configured diversity metric, then tests the final-step
/// measure for a difference between metrics.
pub fn metric_comparison(cfg: &ExperimentConfig, exec: Exec) -> Result<MetricComparisonStats> {
    let metrics = &cfg.metric_comparison.metrics;
    if metrics.len() < 2 {
        return Err(Error::Config(
            "metric_comparison needs at least two metrics".into(),
        ));
    }
    let kind = &cfg.metric_comparison.walk;
    let m = cfg.walk.mutation.offspring_count;
    let entries = metrics
        .iter()
        .map(|metric| {
            Ok(BatchEntry {
                walk_kind: kind.to_string(),
                metric: metric.clone(),
                pressure: kind.pressure(m),
                walk: walk_config(cfg, kind.clone(), metric)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let dir = prepare(cfg, "metric-comparison")?;
    let batch = run_batch(cfg, &entries, Some(&dir.join("state")), exec)?;
    let groups = write_batch(cfg, &dir, &entries, &batch)?;
    let finals: Vec<Vec<f64>> = groups.iter().map(|g| g.final_values.clone()).collect();
    let out = MetricComparisonStats {
        measure: cfg.measure.name().into(),
        final_step: cfg.walk.length - 1,
        kruskal_wallis: stats::kruskal_wallis(&finals)?,
        groups,
    };
    write_json(&dir.join("stats.json"), &out)?;
    Ok(out)
}

/// Estimates (or loads) the niche transition matrix and tabulates
/// l-evolvability for sampled genotypes and for every niche.
pub fn markov_estimate(cfg: &ExperimentConfig, exec: Exec) -> Result<MarkovStats> {
    let (env, shape) = cfg.environment.build()?;
    let grid = &cfg.grid;
    let mk = &cfg.markov;
    let n = grid.cell_count();
    let base = seed::derive(cfg.global_seed, &[MARKOV_DOMAIN]);

    let (t, evaluations, discovered, degenerate) = match &mk.transition_file {
        Some(path) => {
            let t = TransitionMatrix::load(path)?;
            if t.n() != n {
                return Err(Error::Config(format!(
                    "{} has {} niches but the grid has {n}",
                    path.display(),
                    t.n()
                )));
            }
            let observed = t.observed_rows();
            (t, 0, observed, false)
        }
        None => {
            let initial: Vec<Genotype> = (0..mk.initial_genotypes)
                .map(|i| Genotype::xavier(shape.clone(), seed::derive(base, &[0, i as u64])))
                .collect();
            let est = estimate_transition_matrix(
                grid,
                &env,
                &initial,
                &cfg.walk.mutation,
                mk.budget,
                seed::derive(base, &[1]),
            )?;
            if est.is_degenerate() {
                eprintln!("warning: exploration reached fewer than two niches; the matrix is degenerate");
            }
            let degenerate = est.is_degenerate();
            (est.matrix, est.evaluations, est.discovered.len(), degenerate)
        }
    };
    let dir = prepare(cfg, "markov-estimate")?;
    t.save(&dir.join("transition.json"))?;

    let genotypes: Vec<Genotype> = (0..mk.genotypes)
        .map(|i| Genotype::xavier(shape.clone(), seed::derive(base, &[2, i as u64])))
        .collect();
    let row_count = genotypes.len() + n;
    let rows = exec.try_map(row_count, |i| -> Result<LEvolvabilityRow> {
        let row_seed = seed::derive(base, &[3, i as u64]);
        let (source, id, niche, d, child_coverage) = if i < genotypes.len() {
            let g = &genotypes[i];
            let niche = grid.niche(&env.behavior(g)?);
            let d = markov::child_distribution(
                g,
                grid,
                &env,
                &cfg.walk.mutation,
                mk.sample_size,
                seed::derive(row_seed, &[0]),
                Exec::Sequential,
            )?;
            let seen = d.iter().filter(|&&p| p > 0.0).count() as f64 / n as f64;
            ("genotype", g.digest(), niche, d, Some(seen))
        } else {
            let niche = i - genotypes.len();
            ("niche", niche.to_string(), niche, markov::one_hot(n, niche), None)
        };
        let l_evolvability = mk
            .l_values
            .iter()
            .map(|&l| {
                let est = l_evolvability_from_distribution(
                    &t,
                    &d,
                    &mk.params(l),
                    seed::derive(row_seed, &[1, l as u64]),
                    Exec::Sequential,
                )?;
                Ok((l, est.mean_coverage, est.std_error))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(LEvolvabilityRow {
            source: source.into(),
            id,
            niche,
            child_coverage,
            expected_child_coverage: expected_coverage(&d, mk.lineages),
            l_evolvability,
        })
    })?;

    let mut w = csv::Writer::from_path(dir.join("l_evolvability.csv")).map_err(csv_err)?;
    let mut header: Vec<String> = [
        "source",
        "id",
        "niche",
        "child_coverage",
        "expected_child_coverage",
    ]
    .map(String::from)
    .to_vec();
    for l in &mk.l_values {
        header.push(format!("l{l}"));
        header.push(format!("l{l}_se"));
    }
    w.write_record(&header).map_err(csv_err)?;
    for r in &rows {
        let mut rec = vec![
            r.source.clone(),
            r.id.clone(),
            r.niche.to_string(),
            r.child_coverage.map(|c| c.to_string()).unwrap_or_default(),
            r.expected_child_coverage.to_string(),
        ];
        for &(_, mean, se) in &r.l_evolvability {
            rec.push(mean.to_string());
            rec.push(se.to_string());
        }
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;

    let mut niches = csv::Writer::from_path(dir.join("niches.csv")).map_err(csv_err)?;
    niches
        .write_record(["niche", "coords", "observed", "visits", "self_transition"])
        .map_err(csv_err)?;
    for i in 0..n {
        let coords: Vec<String> = grid.coords_of_index(i).iter().map(|c| c.to_string()).collect();
        niches
            .write_record([
                i.to_string(),
                coords.join(" "),
                t.is_observed(i).to_string(),
                t.counts_row(i).iter().sum::<u64>().to_string(),
                t.row(i)[i].to_string(),
            ])
            .map_err(csv_err)?;
    }
    niches.flush()?;

    let out = MarkovStats {
        niches: n,
        estimated: mk.transition_file.is_none(),
        evaluations,
        discovered,
        observed_rows: t.observed_rows(),
        diagonal_mass: t.diagonal_mass(),
        degenerate,
        rows,
    };
    write_json(&dir.join("stats.json"), &out)?;
    Ok(out)
}

/// Samples random genotypes and ranks them by `r*`; low values flag
/// dissimila (sensitive but not evolvable).
pub fn dissimila_scan(cfg: &ExperimentConfig, exec: Exec) -> Result<DissimilaStats> {
    let samples = cfg.dissimila.samples;
    if samples == 0 {
        return Err(Error::Config("dissimila.samples must be at least 1".into()));
    }
    let (env, shape) = cfg.environment.build()?;
    let base = seed::derive(cfg.global_seed, &[DISSIMILA_DOMAIN]);
    let measured = exec.try_map(samples, |i| {
        let g = Genotype::xavier(shape.clone(), seed::derive(base, &[0, i as u64]));
        let parent = env.behavior(&g)?;
        let off = sample_neighbors(
            &g,
            &cfg.walk.mutation,
            &env,
            seed::derive(base, &[1, i as u64]),
            Exec::Sequential,
        )?;
        let rep = metrics::report(&parent, &off.behaviors, &cfg.grid, DEFAULT_EPSILON)?;
        let row = DissimilaRow {
            digest: g.digest(),
            ls_max: rep.ls_max,
            ls_expected: rep.ls_expected,
            evolvability_max: rep.evolvability_max,
            evolvability_expected: rep.evolvability_expected,
            r: rep.ratio_r,
            r_star: rep.ratio_r_star,
        };
        Ok::<_, Error>((row, (parent, off.behaviors)))
    })?;
    let (mut rows, neighborhoods): (Vec<DissimilaRow>, Vec<_>) = measured.into_iter().unzip();
    let global_sensitivity = metrics::global_sensitivity(&neighborhoods)?;
    rows.sort_by(|a, b| a.r_star.total_cmp(&b.r_star));

    let dir = prepare(cfg, "dissimila-scan")?;
    let mut w = csv::Writer::from_path(dir.join("dissimila.csv")).map_err(csv_err)?;
    for r in &rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    let out = DissimilaStats {
        samples,
        global_sensitivity,
        rows,
    };
    #[derive(Serialize)]
    struct Summary<'a> {
        samples: usize,
        global_sensitivity: f64,
        r_star_min: f64,
        r_star_max: f64,
        lowest: &'a [DissimilaRow],
    }
    write_json(
        &dir.join("stats.json"),
        &Summary {
            samples,
            global_sensitivity,
            r_star_min: out.rows[0].r_star,
            r_star_max: out.rows[out.rows.len() - 1].r_star,
            lowest: &out.rows[..out.rows.len().min(10)],
        },
    )?;
    Ok(out)
}
