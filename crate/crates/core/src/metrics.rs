//! Evaluation: trajectory metric, cardinality and classification accuracy.
//!
//! The trajectory metric here is a per-time-step assignment approximation of
//! the LP trajectory metric. At evaluation scan `k` the estimated trajectories
//! reported at `k` are compared with the true trajectories alive at `k` over
//! their whole histories. For each time `t ≤ k` the states present at `t` on
//! both sides are optimally assigned with cut-off cost `min(d, c)^p`; every
//! cardinality mismatch costs `c^p` and every change of assignment partner
//! between `t-1` and `t` costs `γ^p / 2` per side. The reported error is the
//! `p`-th root of the mean per-time cost over the times where anything exists.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::assignment;
use crate::filter::TrajectoryEstimate;
use crate::models::StateVector;
use crate::simulator::GroundTruth;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricConfig {
    pub order: f64,
    pub cutoff: f64,
    pub switch_cost: f64,
    /// Include velocity components in the base distance.
    #[serde(default)]
    pub use_velocity: bool,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            order: 2.0,
            cutoff: 100.0,
            switch_cost: 1.0,
            use_velocity: false,
        }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> crate::Result<()> {
        if !(self.order >= 1.0) || !(self.cutoff > 0.0) || !(self.switch_cost >= 0.0) {
            return Err(crate::Error::config(
                "metric needs order >= 1, cutoff > 0, switch_cost >= 0",
            ));
        }
        Ok(())
    }

    fn distance(&self, a: &StateVector, b: &StateVector) -> f64 {
        let d = a - b;
        if self.use_velocity {
            d.norm()
        } else {
            (d[0] * d[0] + d[2] * d[2] + d[4] * d[4]).sqrt()
        }
    }
}

/// A trajectory seen by the metric: birth time plus consecutive states.
#[derive(Debug, Clone, Copy)]
pub struct TrackView<'a> {
    pub birth: usize,
    pub states: &'a [StateVector],
}

impl TrackView<'_> {
    fn at(&self, t: usize) -> Option<&StateVector> {
        t.checked_sub(self.birth).and_then(|i| self.states.get(i))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricOutcome {
    pub error: f64,
    /// At the final time: `x[i]` is matched to `y[j]` (distance below cutoff).
    pub final_assignment: Vec<Option<usize>>,
}

/// Distance between two trajectory sets over times `1..=until`.
pub fn trajectory_set_distance(
    x: &[TrackView],
    y: &[TrackView],
    until: usize,
    cfg: &MetricConfig,
) -> MetricOutcome {
    let p = cfg.order;
    let cp = cfg.cutoff.powf(p);
    let gp = cfg.switch_cost.powf(p);
    let mut total = 0.0;
    let mut active = 0usize;
    let mut prev_x: Vec<Option<usize>> = vec![None; x.len()];
    let mut prev_y: Vec<Option<usize>> = vec![None; y.len()];

    for t in 1..=until {
        let xs: Vec<usize> = (0..x.len()).filter(|&i| x[i].at(t).is_some()).collect();
        let ys: Vec<usize> = (0..y.len()).filter(|&j| y[j].at(t).is_some()).collect();
        let mut cur_x = vec![None; x.len()];
        let mut cur_y = vec![None; y.len()];
        if xs.is_empty() && ys.is_empty() {
            prev_x = cur_x;
            prev_y = cur_y;
            continue;
        }
        active += 1;
        let mut cost = DMatrix::zeros(xs.len(), ys.len());
        let mut raw = DMatrix::zeros(xs.len(), ys.len());
        for (a, &i) in xs.iter().enumerate() {
            for (b, &j) in ys.iter().enumerate() {
                let d = cfg.distance(x[i].at(t).unwrap(), y[j].at(t).unwrap());
                raw[(a, b)] = d;
                cost[(a, b)] = d.min(cfg.cutoff).powf(p);
            }
        }
        let (assign, matched_cost) = assignment::solve(&cost);
        let mismatch = xs.len().abs_diff(ys.len()) as f64;
        for (a, b) in assign.iter().enumerate() {
            if let Some(b) = *b {
                if raw[(a, b)] < cfg.cutoff {
                    cur_x[xs[a]] = Some(ys[b]);
                    cur_y[ys[b]] = Some(xs[a]);
                }
            }
        }
        let changed = |prev: &[Option<usize>], cur: &[Option<usize>]| {
            prev.iter()
                .zip(cur)
                .filter(|(p, c)| matches!((p, c), (Some(a), Some(b)) if a != b))
                .count()
        };
        let switches = 0.5 * (changed(&prev_x, &cur_x) + changed(&prev_y, &cur_y)) as f64;
        total += matched_cost + cp * mismatch + gp * switches;
        prev_x = cur_x;
        prev_y = cur_y;
    }
    let error = if active == 0 {
        0.0
    } else {
        (total / active as f64).powf(1.0 / p)
    };
    MetricOutcome {
        error,
        final_assignment: prev_x,
    }
}

/// Truth tracks alive at `k`, restricted to times `<= k`.
fn alive_truth_views(truth: &GroundTruth, k: usize) -> (Vec<usize>, Vec<TrackView<'_>>) {
    let idx: Vec<usize> = (0..truth.tracks.len()).filter(|&i| truth.tracks[i].alive_at(k)).collect();
    let views = idx
        .iter()
        .map(|&i| {
            let tr = &truth.tracks[i];
            TrackView {
                birth: tr.birth,
                states: &tr.states[..=(k - tr.birth)],
            }
        })
        .collect();
    (idx, views)
}

fn estimate_views(estimates: &[TrajectoryEstimate], k: usize) -> Vec<TrackView<'_>> {
    estimates
        .iter()
        .map(|e| TrackView {
            birth: e.birth,
            states: &e.states[..e.states.len().min((k + 1).saturating_sub(e.birth))],
        })
        .collect()
}

/// Metric at scan `k` between the estimates reported at `k` and the truth
/// alive at `k`. The assignment maps alive-truth position → estimate index.
pub fn trajectory_metric(
    estimates: &[TrajectoryEstimate],
    truth: &GroundTruth,
    k: usize,
    cfg: &MetricConfig,
) -> MetricOutcome {
    let (_, tv) = alive_truth_views(truth, k);
    let ev = estimate_views(estimates, k);
    trajectory_set_distance(&tv, &ev, k, cfg)
}

/// Per-class `(estimated, true)` counts at scan `k`.
pub fn cardinality_stats(
    estimates: &[TrajectoryEstimate],
    truth: &GroundTruth,
    k: usize,
    num_classes: usize,
) -> (Vec<usize>, Vec<usize>) {
    let mut est = vec![0; num_classes];
    for e in estimates {
        est[e.class_id.0] += 1;
    }
    (est, truth.count_by_class(k, num_classes))
}

/// Per-class `(correct, matched)` over the matched pairs of `assignment`
/// (alive-truth position → estimate), indexed by true class.
pub fn classification_accuracy(
    estimates: &[TrajectoryEstimate],
    truth: &GroundTruth,
    k: usize,
    assignment: &[Option<usize>],
    num_classes: usize,
) -> (Vec<usize>, Vec<usize>) {
    let (idx, _) = alive_truth_views(truth, k);
    let mut correct = vec![0; num_classes];
    let mut matched = vec![0; num_classes];
    for (pos, est) in assignment.iter().enumerate() {
        if let Some(j) = est {
            let c = truth.tracks[idx[pos]].class_id;
            matched[c.0] += 1;
            if estimates[*j].class_id == c {
                correct[c.0] += 1;
            }
        }
    }
    (correct, matched)
}

/// Per-scan evaluation of one run. Index `t - 1` holds scan `t`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricSeries {
    pub tm: Vec<f64>,
    /// `[scan][class]`
    pub true_card: Vec<Vec<usize>>,
    pub est_card: Vec<Vec<usize>>,
    pub class_correct: Vec<Vec<usize>>,
    pub class_matched: Vec<Vec<usize>>,
    /// `[scan][truth track]`: `Some(correct)` if the track was matched.
    pub track_class_ok: Vec<Vec<Option<bool>>>,
}

pub fn evaluate_run(
    estimates: &[Vec<TrajectoryEstimate>],
    truth: &GroundTruth,
    cfg: &MetricConfig,
    num_classes: usize,
) -> MetricSeries {
    let mut s = MetricSeries::default();
    for (i, est) in estimates.iter().enumerate() {
        let k = i + 1;
        let outcome = trajectory_metric(est, truth, k, cfg);
        let (ec, tc) = cardinality_stats(est, truth, k, num_classes);
        let (correct, matched) =
            classification_accuracy(est, truth, k, &outcome.final_assignment, num_classes);
        let (idx, _) = alive_truth_views(truth, k);
        let mut per_track = vec![None; truth.tracks.len()];
        for (pos, j) in outcome.final_assignment.iter().enumerate() {
            if let Some(j) = j {
                let tr = &truth.tracks[idx[pos]];
                per_track[idx[pos]] = Some(est[*j].class_id == tr.class_id);
            }
        }
        s.tm.push(outcome.error);
        s.est_card.push(ec);
        s.true_card.push(tc);
        s.class_correct.push(correct);
        s.class_matched.push(matched);
        s.track_class_ok.push(per_track);
    }
    s
}
