//! Scenario simulation and Monte Carlo driving.
//!
//! Truth is propagated without process noise; maneuvers come either from the
//! class Markov chain or from an explicit model schedule. Frames combine
//! Bernoulli detections with Gaussian sensor noise and uniform Poisson
//! clutter, each drawn from its own seed-derived stream (see [`crate::seed`]).

use std::time::Instant;

use nalgebra::{Matrix3, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::filter::{FilterConfig, FilterModel, TrajectoryEstimate, Tracker, UpdateDiagnostics};
use crate::metrics::{evaluate_run, MetricConfig, MetricSeries};
use crate::models::{
    ClassId, ClassRegistry, ClutterModel, Measurement, SensorModel, StateVector,
};
use crate::seed;

#[derive(Debug, Clone, PartialEq)]
pub enum Maneuver {
    /// Models drawn from the class switch matrix, starting at `initial_model`.
    Markov { initial_model: usize },
    /// `schedule[i]` is the model used to move into the `i`-th state; entry 0
    /// is the model at birth. Must have one entry per alive scan.
    Explicit(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetSpec {
    pub name: String,
    pub class_id: ClassId,
    pub birth_time: usize,
    /// Last scan at which the target exists.
    pub death_time: usize,
    pub initial: StateVector,
    pub maneuver: Maneuver,
}

#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub duration: usize,
    pub dt: f64,
    pub targets: Vec<TargetSpec>,
    pub classes: ClassRegistry,
    pub sensor: SensorModel,
    pub clutter: ClutterModel,
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.duration < 1 {
            return Err(Error::config("duration must be >= 1"));
        }
        for t in &self.targets {
            if !(1 <= t.birth_time && t.birth_time <= t.death_time && t.death_time <= self.duration) {
                return Err(Error::config(format!(
                    "target '{}': need 1 <= birth ({}) <= death ({}) <= duration ({})",
                    t.name, t.birth_time, t.death_time, self.duration
                )));
            }
            let class = self.classes.get(t.class_id)?;
            match &t.maneuver {
                Maneuver::Markov { initial_model } if *initial_model >= class.num_models() => {
                    return Err(Error::config(format!(
                        "target '{}': initial model {initial_model} not in class '{}'",
                        t.name, class.name
                    )));
                }
                Maneuver::Explicit(s) => {
                    let len = t.death_time - t.birth_time + 1;
                    if s.len() != len {
                        return Err(Error::config(format!(
                            "target '{}': schedule has {} entries, target lives {len} scans",
                            t.name,
                            s.len()
                        )));
                    }
                    if s.iter().any(|&r| r >= class.num_models()) {
                        return Err(Error::config(format!(
                            "target '{}': schedule uses unknown model",
                            t.name
                        )));
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruthTrack {
    pub name: String,
    pub class_id: ClassId,
    pub birth: usize,
    pub states: Vec<StateVector>,
    pub models: Vec<usize>,
}

impl TruthTrack {
    pub fn length(&self) -> usize {
        self.states.len()
    }

    pub fn death(&self) -> usize {
        self.birth + self.states.len() - 1
    }

    pub fn alive_at(&self, t: usize) -> bool {
        self.birth <= t && t <= self.death()
    }

    pub fn state_at(&self, t: usize) -> Option<&StateVector> {
        t.checked_sub(self.birth).and_then(|i| self.states.get(i))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub duration: usize,
    pub tracks: Vec<TruthTrack>,
}

impl GroundTruth {
    pub fn count_by_class(&self, t: usize, num_classes: usize) -> Vec<usize> {
        let mut out = vec![0; num_classes];
        for tr in self.tracks.iter().filter(|tr| tr.alive_at(t)) {
            out[tr.class_id.0] += 1;
        }
        out
    }
}

/// Detections and clutter of one scan.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementFrame {
    pub time: usize,
    pub measurements: Vec<Measurement>,
    /// Index of the originating truth track, `None` for clutter. Test-only
    /// bookkeeping; the filter never reads it.
    pub provenance: Option<Vec<Option<usize>>>,
}

impl MeasurementFrame {
    pub fn new(time: usize, measurements: Vec<Measurement>) -> Self {
        Self {
            time,
            measurements,
            provenance: None,
        }
    }
}

/// Noiseless truth for every configured target.
pub fn generate_truth(cfg: &ScenarioConfig) -> Result<GroundTruth> {
    cfg.validate()?;
    let mut tracks = Vec::with_capacity(cfg.targets.len());
    for (i, t) in cfg.targets.iter().enumerate() {
        let class = cfg.classes.get(t.class_id)?;
        let len = t.death_time - t.birth_time + 1;
        let mut rng = seed::stream(cfg.seed, seed::MANEUVER, i as u64);
        let models: Vec<usize> = match &t.maneuver {
            Maneuver::Explicit(s) => s.clone(),
            Maneuver::Markov { initial_model } => {
                let mut seq = Vec::with_capacity(len);
                let mut r = *initial_model;
                seq.push(r);
                for _ in 1..len {
                    let u: f64 = rng.random();
                    let row = class.switch.row(r);
                    let mut acc = 0.0;
                    let mut next = row.len() - 1;
                    for (j, p) in row.iter().enumerate() {
                        acc += p;
                        if u < acc {
                            next = j;
                            break;
                        }
                    }
                    r = next;
                    seq.push(r);
                }
                seq
            }
        };
        let mut states = Vec::with_capacity(len);
        let mut x = t.initial;
        states.push(x);
        for &r in &models[1..] {
            x = class.models[r].transition * x;
            states.push(x);
        }
        tracks.push(TruthTrack {
            name: t.name.clone(),
            class_id: t.class_id,
            birth: t.birth_time,
            states,
            models,
        });
    }
    Ok(GroundTruth {
        duration: cfg.duration,
        tracks,
    })
}

fn noise_factor(r: &Matrix3<f64>) -> Matrix3<f64> {
    match r.cholesky() {
        Some(c) => c.l(),
        None => {
            let eig = SymmetricEigen::new(*r);
            let sqrt = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
            eig.eigenvectors * Matrix3::from_diagonal(&sqrt)
        }
    }
}

/// Measurement frame at scan `t`.
///
/// Targets sitting exactly at the sensor have no defined radar measurement
/// and are not detected on that scan.
pub fn generate_frame(
    truth: &GroundTruth,
    t: usize,
    sensor: &SensorModel,
    clutter: &ClutterModel,
    classes: &ClassRegistry,
    seed: u64,
) -> Result<MeasurementFrame> {
    let mut detect_rng = seed::stream(seed, seed::DETECTION, t as u64);
    let mut noise_rng = seed::stream(seed, seed::NOISE, t as u64);
    let mut clutter_rng = seed::stream(seed, seed::CLUTTER, t as u64);
    let mut order_rng = seed::stream(seed, seed::ORDER, t as u64);
    let factor = noise_factor(&sensor.noise);

    let mut items: Vec<(Measurement, Option<usize>)> = Vec::new();
    for (i, track) in truth.tracks.iter().enumerate() {
        let Some(x) = track.state_at(t) else { continue };
        let p_d = classes.get(track.class_id)?.p_detect;
        let u: f64 = detect_rng.random();
        let n = Measurement::from_fn(|_, _| noise_rng.sample(StandardNormal));
        if u >= p_d {
            continue;
        }
        let Ok(z) = sensor.measure(x) else { continue };
        items.push((sensor.canonicalize(z + factor * n), Some(i)));
    }

    if clutter.rate > 0.0 {
        let count = Poisson::new(clutter.rate)
            .map_err(|e| Error::param(format!("clutter rate: {e}")))?
            .sample(&mut clutter_rng) as usize;
        for _ in 0..count {
            let z = Measurement::from_fn(|axis, _| {
                let [lo, hi] = clutter.region.bounds[axis];
                clutter_rng.random_range(lo..hi)
            });
            items.push((z, None));
        }
    }
    items.shuffle(&mut order_rng);
    let (measurements, provenance) = items.into_iter().unzip();
    Ok(MeasurementFrame {
        time: t,
        measurements,
        provenance: Some(provenance),
    })
}

/// All frames of a scenario, scans `1..=duration`.
pub fn generate_frames(cfg: &ScenarioConfig, truth: &GroundTruth, seed: u64) -> Result<Vec<MeasurementFrame>> {
    (1..=cfg.duration)
        .map(|t| generate_frame(truth, t, &cfg.sensor, &cfg.clutter, &cfg.classes, seed))
        .collect()
}

#[derive(Debug, Clone)]
pub struct MonteCarloOptions {
    pub runs: usize,
    /// Reuse the scenario seed's truth for every run instead of redrawing.
    pub hold_truth_fixed: bool,
    /// Keep per-scan estimates of every run (memory heavy).
    pub keep_estimates: bool,
    /// Worker threads; `None` uses the global pool.
    pub workers: Option<usize>,
}

impl Default for MonteCarloOptions {
    fn default() -> Self {
        Self {
            runs: 1,
            hold_truth_fixed: false,
            keep_estimates: false,
            workers: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub run: usize,
    pub seed: u64,
    /// Wall-clock seconds spent in the filter recursion.
    pub elapsed_s: f64,
    pub truth: GroundTruth,
    pub series: MetricSeries,
    pub estimates: Option<Vec<Vec<TrajectoryEstimate>>>,
    pub diagnostics: UpdateDiagnostics,
}

/// Per-scan aggregates over all runs. Index `t - 1` holds scan `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub mean_tm: Vec<f64>,
    /// Root-mean-square over runs of the per-scan trajectory metric.
    pub rms_tm: Vec<f64>,
    /// `[class][scan]`
    pub mean_est_card: Vec<Vec<f64>>,
    pub mean_true_card: Vec<Vec<f64>>,
    /// Pooled fraction of correctly classified matches; NaN with no matches.
    pub class_acc: Vec<Vec<f64>>,
    pub mean_elapsed_s: f64,
}

#[derive(Debug, Clone)]
pub struct RunResults {
    pub runs: Vec<RunOutput>,
    pub aggregate: Aggregate,
}

/// A single filter pass over given frames; returns per-scan estimates,
/// elapsed seconds and diagnostics.
pub fn run_filter(
    model: &FilterModel,
    fcfg: &FilterConfig,
    frames: &[MeasurementFrame],
) -> Result<(Vec<Vec<TrajectoryEstimate>>, f64, UpdateDiagnostics)> {
    let mut tracker = Tracker::new(model.clone(), fcfg.clone())?;
    let start = Instant::now();
    let mut out = Vec::with_capacity(frames.len());
    for frame in frames {
        out.push(tracker.step(frame)?);
    }
    Ok((out, start.elapsed().as_secs_f64(), tracker.diagnostics))
}

fn single_run(
    cfg: &ScenarioConfig,
    model: &FilterModel,
    fcfg: &FilterConfig,
    mcfg: &MetricConfig,
    opts: &MonteCarloOptions,
    run: usize,
) -> Result<RunOutput> {
    let run_seed = seed::run_seed(cfg.seed, run);
    let truth = if opts.hold_truth_fixed {
        generate_truth(cfg)?
    } else {
        generate_truth(&ScenarioConfig {
            seed: run_seed,
            ..cfg.clone()
        })?
    };
    let frames = generate_frames(cfg, &truth, run_seed)?;
    let (estimates, elapsed_s, diagnostics) = run_filter(model, fcfg, &frames)?;
    let series = evaluate_run(&estimates, &truth, mcfg, cfg.classes.len());
    Ok(RunOutput {
        run,
        seed: run_seed,
        elapsed_s,
        truth,
        series,
        estimates: opts.keep_estimates.then_some(estimates),
        diagnostics,
    })
}

/// Runs `opts.runs` independent passes (in parallel) and aggregates them.
pub fn run_monte_carlo(
    cfg: &ScenarioConfig,
    model: &FilterModel,
    fcfg: &FilterConfig,
    mcfg: &MetricConfig,
    opts: &MonteCarloOptions,
) -> Result<RunResults> {
    if opts.runs < 1 {
        return Err(Error::config("runs must be >= 1"));
    }
    cfg.validate()?;
    fcfg.validate()?;
    let job = || -> Result<Vec<RunOutput>> {
        (0..opts.runs)
            .into_par_iter()
            .map(|r| single_run(cfg, model, fcfg, mcfg, opts, r))
            .collect()
    };
    let runs = match opts.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::config(format!("worker pool: {e}")))?
            .install(job)?,
        None => job()?,
    };
    let aggregate = aggregate(&runs, cfg.duration, cfg.classes.len());
    Ok(RunResults { runs, aggregate })
}

pub fn aggregate(runs: &[RunOutput], duration: usize, num_classes: usize) -> Aggregate {
    let n = runs.len() as f64;
    let per_scan = |f: &dyn Fn(&RunOutput, usize) -> f64| -> Vec<f64> {
        (0..duration).map(|i| runs.iter().map(|r| f(r, i)).sum::<f64>() / n).collect()
    };
    let mean_tm = per_scan(&|r, i| r.series.tm[i]);
    let rms_tm = per_scan(&|r, i| r.series.tm[i].powi(2)).into_iter().map(f64::sqrt).collect();
    let mean_est_card = (0..num_classes)
        .map(|c| per_scan(&|r, i| r.series.est_card[i][c] as f64))
        .collect();
    let mean_true_card = (0..num_classes)
        .map(|c| per_scan(&|r, i| r.series.true_card[i][c] as f64))
        .collect();
    let class_acc = (0..num_classes)
        .map(|c| {
            (0..duration)
                .map(|i| {
                    let correct: usize = runs.iter().map(|r| r.series.class_correct[i][c]).sum();
                    let matched: usize = runs.iter().map(|r| r.series.class_matched[i][c]).sum();
                    if matched == 0 {
                        f64::NAN
                    } else {
                        correct as f64 / matched as f64
                    }
                })
                .collect()
        })
        .collect();
    Aggregate {
        mean_tm,
        rms_tm,
        mean_est_card,
        mean_true_card,
        class_acc,
        mean_elapsed_s: runs.iter().map(|r| r.elapsed_s).sum::<f64>() / n,
    }
}
