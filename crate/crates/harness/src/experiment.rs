//! Trial pipeline, resumable sweeps and the population-c.d.f. check.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use cpsize::bounds::{
    bound_classification, bound_regression, bound_theorem1, mu_fn, BoundQuery, BoundResult, SlackMode, SlackSpec,
};
use cpsize::calibration::{estimate_coverage_and_size, predict_set, CalibrationSet, TestPoint, TrialDraw};
use cpsize::cdf_models::{population_cdf_mc, training_cdf, CdfEstimate, TrainingCdfMode};
use cpsize::dataio::{generate_synthetic, load_csv, split_dataset, Dataset};
use cpsize::learners::{draw_model, train_classifier, train_regressor, Model, ModelEnsemble, TrainConfig};
use cpsize::scalar::mean_and_se;
use cpsize::scores::{gamma_closed_form, nc_score, LabelSpace, ScoreSpec, Target};
use cpsize::seed::{derive_seed, rng_from, Rng};
use log::{info, warn};
use rand::Rng as _;
use rayon::prelude::*;

use crate::config::{DataSource, ExperimentConfig, GridPoint, SlackModeName, Task};
use crate::error::{Error, Result};
use crate::records::{read_records, write_records_atomic, write_summary, TrialRecord};

/// Seed-path labels for the independent streams of a trial.
const POOL: u64 = 1;
const TRAIN: u64 = 2;
const DOUBLY: u64 = 3;
const DRAWS: u64 = 4;

pub fn trial_seed(master: u64, trial: usize) -> u64 {
    derive_seed(master, &[trial as u64])
}

fn stage(stage: &'static str, context: impl Into<String>) -> impl FnOnce(cpsize::Error) -> Error {
    let context = context.into();
    move |source| Error::Stage {
        stage,
        context,
        source,
    }
}

/// Train/calibration/test pool of one trial. Smaller grid sizes use prefixes.
pub struct TrialData {
    pub train: Dataset,
    pub cal: Dataset,
    pub test: Dataset,
}

pub fn load_source(cfg: &ExperimentConfig) -> Result<Option<Dataset>> {
    match &cfg.data {
        DataSource::Csv { path, schema } => Ok(Some(load_csv(path, *schema).map_err(stage("load", path.display().to_string()))?)),
        DataSource::Synthetic { .. } => Ok(None),
    }
}

pub fn trial_data(cfg: &ExperimentConfig, source: Option<&Dataset>, seed: u64) -> Result<TrialData> {
    let (n_tr, n_cal) = (cfg.max_n_tr(), cfg.max_n_cal());
    let total = n_tr + n_cal + cfg.n_test;
    let pool_seed = derive_seed(seed, &[POOL]);
    let generated;
    let data = match (&cfg.data, source) {
        (_, Some(d)) => d,
        (DataSource::Synthetic { generator }, None) => {
            generated = generate_synthetic(*generator, total, pool_seed).map_err(stage("generate", format!("seed {seed}")))?;
            &generated
        }
        (DataSource::Csv { path, .. }, None) => {
            return Err(Error::Config(format!("csv source {} not loaded", path.display())));
        }
    };
    let split = split_dataset(data, n_tr, n_cal, cfg.n_test, pool_seed).map_err(stage("split", format!("seed {seed}")))?;
    Ok(TrialData {
        train: split.train,
        cal: split.cal,
        test: split.test,
    })
}

/// A trained ensemble and the training-set summaries the bounds need.
pub struct TrainedModel {
    pub ensemble: ModelEnsemble,
    pub cdf_averaged: CdfEstimate<f64>,
    pub cdf_doubly: CdfEstimate<f64>,
    /// Ensemble-averaged training accuracy; `None` for regression.
    pub p_tr_hat: Option<f64>,
}

fn predict(m: &Model<'_>, x: &&[f64]) -> cpsize::Result<Target<f64>> {
    m.predict(x)
}

pub fn train_model(cfg: &ExperimentConfig, data: &TrialData, n_tr: usize, seed: u64) -> Result<TrainedModel> {
    let ctx = format!("n_tr {n_tr}, seed {seed}");
    let train = data.train.prefix(n_tr);
    let tcfg = TrainConfig {
        seed: derive_seed(seed, &[TRAIN, n_tr as u64]),
        ..cfg.train.clone()
    };
    let ensemble = match cfg.task {
        Task::Classification => train_classifier(&train, &tcfg),
        Task::Regression => train_regressor(&train, &tcfg),
    }
    .map_err(stage("train", ctx.clone()))?;
    if ensemble.metadata.single_class {
        warn!("training data for {ctx} has a single class");
    }
    let spec = cfg.score_spec()?;
    let points: Vec<(&[f64], Target<f64>)> = train.iter().map(|(x, y)| (x, *y)).collect();
    let models: Vec<Model<'_>> = ensemble.models().collect();
    let cdf_averaged = training_cdf(&models, &points, &spec, TrainingCdfMode::Averaged, predict)
        .map_err(stage("training cdf", ctx.clone()))?;
    let mut rng = rng_from(seed, &[DOUBLY, n_tr as u64]);
    let draws: Vec<Model<'_>> = (0..points.len()).map(|_| draw_model(&ensemble, &mut rng)).collect();
    let cdf_doubly = training_cdf(&draws, &points, &spec, TrainingCdfMode::DoublyEmpirical, predict)
        .map_err(stage("training cdf", ctx.clone()))?;
    // Training c.d.f. is Pr[score < r], so at r = 1 it is the accuracy.
    let p_tr_hat = matches!(cfg.task, Task::Classification).then(|| cdf_averaged.eval(1.0));
    Ok(TrainedModel {
        ensemble,
        cdf_averaged,
        cdf_doubly,
        p_tr_hat,
    })
}

/// Calibration and test scores for one conformal trial.
pub fn conformal_draw(
    spec: &ScoreSpec<f64>,
    ensemble: &ModelEnsemble,
    cal: &Dataset,
    test: &Dataset,
    per_point: bool,
    rng: &mut Rng,
) -> cpsize::Result<(TrialDraw<f64>, Vec<Target<f64>>)> {
    let shared = draw_model(ensemble, rng);
    let pick = |rng: &mut Rng| if per_point { draw_model(ensemble, rng) } else { shared };
    let mut scores = Vec::with_capacity(cal.len());
    for (x, y) in cal.iter() {
        let m = pick(rng);
        scores.push(nc_score(spec, &m.predict(x)?, y)?);
    }
    let mut tests = Vec::with_capacity(test.len());
    let mut truths = Vec::with_capacity(test.len());
    for (x, y) in test.iter() {
        let m = pick(rng);
        let prediction = m.predict(x)?;
        tests.push(TestPoint {
            score: nc_score(spec, &prediction, y)?,
            prediction,
        });
        truths.push(*y);
    }
    Ok((
        TrialDraw {
            calibration: CalibrationSet::new(scores, spec.r_max)?,
            tests,
        },
        truths,
    ))
}

pub struct Bounds {
    pub thm1: BoundResult<f64>,
    pub cls_or_reg: BoundResult<f64>,
    pub cor1: BoundResult<f64>,
}

/// Slack for the doubly empirical c.d.f.: μ on top of whatever the
/// configured mode adds for the model-to-population gap.
pub fn corollary_slack(cfg: &ExperimentConfig, n_tr: usize) -> Result<SlackSpec<f64>> {
    Ok(match cfg.slack_mode {
        SlackModeName::OracleZero => SlackSpec::resolve(
            SlackMode::Manual {
                value: mu_fn(cfg.delta, n_tr)? / (n_tr as f64).sqrt(),
                confidence: 1.0 - cfg.delta,
            },
            n_tr,
        )?,
        _ => SlackSpec::resolve(
            SlackMode::CorollaryBetaMu {
                c: cfg.c,
                delta: cfg.delta,
            },
            n_tr,
        )?,
    })
}

pub fn evaluate_bounds(cfg: &ExperimentConfig, model: &TrainedModel, point: &GridPoint) -> Result<Bounds> {
    let spec = cfg.score_spec()?;
    let slack = SlackSpec::resolve(cfg.slack_mode.mode(cfg.c, cfg.delta), point.n_tr)?;
    let gamma = gamma_closed_form(spec.kind, spec.space)?;
    let query = |cdf: &CdfEstimate<f64>, slack: SlackSpec<f64>| BoundQuery {
        n_tr: point.n_tr,
        n_cal: point.n_cal,
        alpha: point.alpha,
        cdf: cdf.clone(),
        gamma: gamma.clone(),
        slack,
        r_max: spec.r_max,
        tail_mode: cfg.tail_mode,
    };
    let ctx = || format!("{} ({})", point.key(), cfg.tail_mode);
    let thm1 = bound_theorem1(&query(&model.cdf_averaged, slack)).map_err(stage("bound", ctx()))?;
    let cls_or_reg = match (spec.space, model.p_tr_hat) {
        (LabelSpace::Discrete { k }, Some(p_hat)) => bound_classification(p_hat, k, point.n_cal, point.alpha, &slack),
        (LabelSpace::Interval { lo, hi }, _) => bound_regression(
            &model.cdf_averaged,
            cfg.p,
            lo,
            hi,
            point.n_cal,
            point.alpha,
            &slack,
            point.n_tr,
            cfg.tail_mode,
        ),
        _ => unreachable!("classification models always carry a training accuracy"),
    }
    .map_err(stage("bound", ctx()))?;
    let cor1 = bound_theorem1(&query(&model.cdf_doubly, corollary_slack(cfg, point.n_tr)?)).map_err(stage("bound", ctx()))?;
    Ok(Bounds { thm1, cls_or_reg, cor1 })
}

/// One full trial at `point`, given the trial's data and trained model.
pub fn run_trial_with(
    cfg: &ExperimentConfig,
    point: &GridPoint,
    seed: u64,
    data: &TrialData,
    model: &TrainedModel,
) -> Result<TrialRecord> {
    let start = Instant::now();
    let spec = cfg.score_spec()?;
    let ctx = || format!("{} seed {seed}", point.key());
    let cal = data.cal.prefix(point.n_cal);
    let mut rng = rng_from(
        seed,
        &[DRAWS, point.n_tr as u64, point.n_cal as u64, point.alpha_index as u64],
    );
    let (draw, truths) =
        conformal_draw(&spec, &model.ensemble, &cal, &data.test, cfg.per_point_draws, &mut rng).map_err(stage("score", ctx()))?;
    let q = draw.calibration.conformal_quantile(point.alpha).map_err(stage("quantile", ctx()))?;
    let norm = spec.space.size();
    let mut covered = Vec::with_capacity(draw.tests.len());
    let mut sizes = Vec::with_capacity(draw.tests.len());
    for (t, y) in draw.tests.iter().zip(&truths) {
        let set = predict_set(&spec, &t.prediction, q).map_err(stage("predict set", ctx()))?;
        covered.push(if set.contains(y) { 1.0 } else { 0.0 });
        sizes.push(set.size(&spec.space) / norm);
    }
    let (coverage, coverage_se) = mean_and_se(&covered);
    let (mean_size_norm, size_se) = mean_and_se(&sizes);
    let b = evaluate_bounds(cfg, model, point)?;
    Ok(TrialRecord {
        seed,
        n_tr: point.n_tr,
        n_cal: point.n_cal,
        alpha: point.alpha,
        coverage,
        coverage_se,
        mean_size_norm,
        size_se,
        bound_thm1: b.thm1.normalized_bound,
        bound_cls_or_reg: b.cls_or_reg.normalized_bound,
        bound_cor1: b.cor1.normalized_bound,
        r_min: b.thm1.r_min,
        slack_mode: cfg.slack_mode.as_str().to_string(),
        tail_mode: cfg.tail_mode,
        clamped: b.thm1.clamped,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

/// Runs trial `trial` at `point` from scratch.
pub fn run_trial(cfg: &ExperimentConfig, point: &GridPoint, trial: usize) -> Result<TrialRecord> {
    let source = load_source(cfg)?;
    let seed = trial_seed(cfg.seed, trial);
    let data = trial_data(cfg, source.as_ref(), seed)?;
    let model = train_model(cfg, &data, point.n_tr, seed)?;
    run_trial_with(cfg, point, seed, &data, &model)
}

/// Worker count from `CPSIZE_WORKERS`, defaulting to the available cores.
pub fn worker_count() -> usize {
    std::env::var("CPSIZE_WORKERS")
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

pub struct SweepOutput {
    pub records: Vec<TrialRecord>,
    pub records_path: PathBuf,
    pub summary_path: PathBuf,
    /// Grid points computed by this call (the rest were resumed from disk).
    pub computed: Vec<String>,
}

pub fn point_path(out_dir: &Path, point: &GridPoint) -> PathBuf {
    out_dir.join("points").join(format!("{}.csv", point.key()))
}

fn load_point(cfg: &ExperimentConfig, point: &GridPoint, path: &Path) -> Option<Vec<TrialRecord>> {
    let recs = read_records(path).ok()?;
    let ok = recs.len() == cfg.n_trials
        && recs.iter().enumerate().all(|(t, r)| {
            r.n_tr == point.n_tr
                && r.n_cal == point.n_cal
                && r.alpha == point.alpha
                && r.seed == trial_seed(cfg.seed, t)
                && r.slack_mode == cfg.slack_mode.as_str()
                && r.tail_mode == cfg.tail_mode
        });
    ok.then_some(recs)
}

/// Cartesian grid × trials, resumable per grid point.
///
/// Each finished grid point is written to `points/<key>.csv`; points whose
/// file is already complete are not recomputed. Trained ensembles are shared
/// across the `(n_cal, α)` points of each `(n_tr, trial)`.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepOutput> {
    cfg.validate()?;
    let out_dir = &cfg.out_dir;
    fs::create_dir_all(out_dir.join("points"))?;
    let grid = cfg.grid();
    let mut done: HashMap<String, Vec<TrialRecord>> = HashMap::new();
    for p in &grid {
        if let Some(recs) = load_point(cfg, p, &point_path(out_dir, p)) {
            done.insert(p.key(), recs);
        }
    }
    let missing: Vec<GridPoint> = grid.iter().filter(|p| !done.contains_key(&p.key())).copied().collect();
    info!("{} of {} grid points to compute", missing.len(), grid.len());

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count())
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let source = load_source(cfg)?;

    let mut failures: Vec<String> = Vec::new();
    if !missing.is_empty() {
        let trials: Vec<usize> = (0..cfg.n_trials).collect();
        let needed_tr: Vec<usize> = {
            let mut v: Vec<usize> = missing.iter().map(|p| p.n_tr).collect();
            v.sort_unstable();
            v.dedup();
            v
        };
        // Per trial: data pool, then one model per needed n_tr.
        type Trained = (Arc<TrialData>, HashMap<usize, Result<TrainedModel, String>>);
        let per_trial: Vec<Result<Trained, String>> = pool.install(|| {
            trials
                .par_iter()
                .map(|&t| {
                    let seed = trial_seed(cfg.seed, t);
                    let data = trial_data(cfg, source.as_ref(), seed).map_err(|e| e.to_string())?;
                    let models = needed_tr
                        .par_iter()
                        .map(|&n_tr| (n_tr, train_model(cfg, &data, n_tr, seed).map_err(|e| e.to_string())))
                        .collect();
                    Ok((Arc::new(data), models))
                })
                .collect()
        });
        let results: Vec<(GridPoint, Result<Vec<TrialRecord>, String>)> = pool.install(|| {
            missing
                .par_iter()
                .map(|p| {
                    let recs = (0..cfg.n_trials)
                        .map(|t| {
                            let (data, models) = per_trial[t].as_ref().map_err(|e| format!("trial {t}: {e}"))?;
                            let model = models[&p.n_tr].as_ref().map_err(|e| format!("trial {t}: {e}"))?;
                            run_trial_with(cfg, p, trial_seed(cfg.seed, t), data, model).map_err(|e| format!("trial {t}: {e}"))
                        })
                        .collect::<Result<Vec<_>, String>>();
                    (*p, recs)
                })
                .collect()
        });
        for (p, res) in results {
            match res {
                Ok(recs) => {
                    write_records_atomic(&point_path(out_dir, &p), &recs)?;
                    done.insert(p.key(), recs);
                }
                Err(e) => failures.push(format!("{}: {e}", p.key())),
            }
        }
    }
    if !failures.is_empty() {
        fs::write(out_dir.join("failures.txt"), failures.join("\n") + "\n")?;
        return Err(Error::Sweep(failures));
    }
    let records: Vec<TrialRecord> = grid.iter().flat_map(|p| done.remove(&p.key()).expect("all points done")).collect();
    let records_path = out_dir.join("records.csv");
    let summary_path = out_dir.join("summary.csv");
    write_records_atomic(&records_path, &records)?;
    write_summary(&summary_path, &records)?;
    Ok(SweepOutput {
        records,
        records_path,
        summary_path,
        computed: missing.iter().map(|p| p.key()).collect(),
    })
}

/// Empirical inefficiency for a fixed training set against the bound computed
/// from a Monte Carlo population c.d.f. with no slack.
#[derive(Debug, Clone, Copy)]
pub struct PopulationCheck {
    pub bound: BoundResult<f64>,
    pub mean_size: f64,
    pub size_se: f64,
    pub coverage: f64,
    pub coverage_se: f64,
}

/// Trains on trial `trial`'s training set, estimates the population c.d.f.
/// from `n_population` fresh (model, point) draws and compares the resulting
/// oracle-slack bound with `reps` fresh calibration/test rounds.
/// Needs a synthetic data source.
pub fn population_check(
    cfg: &ExperimentConfig,
    point: &GridPoint,
    trial: usize,
    n_population: usize,
    reps: usize,
) -> Result<PopulationCheck> {
    let mut out = population_checks(cfg, std::slice::from_ref(point), trial, n_population, reps)?;
    Ok(out.remove(0))
}

/// [`population_check`] for several grid points sharing one `n_tr`: the model
/// and population c.d.f. are computed once.
pub fn population_checks(
    cfg: &ExperimentConfig,
    points: &[GridPoint],
    trial: usize,
    n_population: usize,
    reps: usize,
) -> Result<Vec<PopulationCheck>> {
    let generator = match cfg.data {
        DataSource::Synthetic { generator } => generator,
        DataSource::Csv { .. } => return Err(Error::Config("population check needs a synthetic source".into())),
    };
    let Some(first) = points.first() else {
        return Ok(Vec::new());
    };
    if points.iter().any(|p| p.n_tr != first.n_tr) {
        return Err(Error::Config("population checks need a single n_tr".into()));
    }
    let spec = cfg.score_spec()?;
    let seed = trial_seed(cfg.seed, trial);
    let data = trial_data(cfg, None, seed)?;
    let model = train_model(cfg, &data, first.n_tr, seed)?;
    let ens = &model.ensemble;

    let held_out = generate_synthetic(generator, n_population, derive_seed(seed, &[5])).map_err(stage("generate", "held-out"))?;
    let mut next = 0usize;
    let cdf = population_cdf_mc(
        |rng| draw_model(ens, rng),
        |_| {
            let i = next;
            next += 1;
            Ok((held_out.features[i].as_slice(), held_out.targets[i]))
        },
        predict,
        &spec,
        n_population,
        derive_seed(seed, &[6]),
    )
    .map_err(stage("population cdf", format!("n_tr {}", first.n_tr)))?;
    let gamma = gamma_closed_form(spec.kind, spec.space)?;

    points
        .iter()
        .map(|point| {
            let bound = bound_theorem1(&BoundQuery {
                n_tr: point.n_tr,
                n_cal: point.n_cal,
                alpha: point.alpha,
                cdf: cdf.clone(),
                gamma: gamma.clone(),
                slack: SlackSpec::oracle(),
                r_max: spec.r_max,
                tail_mode: cfg.tail_mode,
            })
            .map_err(stage("bound", point.key()))?;
            let n_cal = point.n_cal;
            let n_test = cfg.n_test;
            let est = estimate_coverage_and_size(
                &spec,
                point.alpha,
                |_, rng| {
                    let fresh = generate_synthetic(generator, n_cal + n_test, rng.random())?;
                    let cal = fresh.prefix(n_cal);
                    let test = fresh.subset(&(n_cal..n_cal + n_test).collect::<Vec<_>>(), fresh.provenance.clone());
                    Ok(conformal_draw(&spec, ens, &cal, &test, cfg.per_point_draws, rng)?.0)
                },
                reps,
                derive_seed(seed, &[7, point.n_cal as u64, point.alpha_index as u64]),
            )
            .map_err(stage("coverage", point.key()))?;
            Ok(PopulationCheck {
                bound,
                mean_size: est.mean_normalized_size,
                size_se: est.size_se,
                coverage: est.coverage,
                coverage_se: est.coverage_se,
            })
        })
        .collect()
}
