//! The GM-JTC-TPHD recursion.
//!
//! One scan is `predict → update → reduce → extract`:
//!
//! - [`predict`] scales each class's mass by its survival probability,
//!   expands every model hypothesis over the class's Markov switch matrix and
//!   appends a predicted state to each trajectory Gaussian, then adds births.
//! - [`update`] keeps a misdetection copy of every component and adds one
//!   detection term per (measurement, component). Class weights are
//!   normalised against clutter and *all* components of *all* classes, so
//!   classes compete for each measurement. The Kalman gain acts on the whole
//!   active window, smoothing past states.
//! - [`reduce`] prunes, collapses model banks, absorbs near-duplicates and
//!   caps the per-class component count.
//! - [`extract`] reports the `round(Σ ω_c)` heaviest components.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Matrix3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{
    ClassId, ClassRegistry, ClutterModel, Measurement, SensorModel, StateMatrix, StateVector,
    STATE_DIM,
};
use crate::simulator::MeasurementFrame;
use crate::trajectory::{
    append_predicted_state, lscan_window, make_birth_components, moment_match, symmetrize,
    BirthModel, GaussianTrajectory, ModelHypothesis, PhdState, TrajectoryComponent,
};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// How a predicted model bank treats the `|M|²` (previous, next) model pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ModelMerge {
    /// One hypothesis per pair; banks collapse by model id during reduction.
    #[default]
    PairExact,
    /// Moment-match the pairs sharing a next model right after prediction.
    ImmMerge,
}

/// Which components [`extract`] reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Estimator {
    /// The `round(Σ ω_c)` heaviest components.
    #[default]
    TopN,
    /// Every component with `ω_c > threshold`.
    Threshold { threshold: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterConfig {
    /// L-scan window; `None` keeps the full joint covariance.
    pub l_scan: Option<usize>,
    pub prune_threshold: f64,
    /// Mahalanobis-squared gate used by absorption.
    pub absorb_threshold: f64,
    /// Per-class component cap.
    pub max_components: usize,
    pub model_merge: ModelMerge,
    pub estimator: Estimator,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            l_scan: Some(5),
            prune_threshold: 1e-5,
            absorb_threshold: 4.0,
            max_components: 50,
            model_merge: ModelMerge::PairExact,
            estimator: Estimator::TopN,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.l_scan == Some(0) {
            return Err(Error::config("l_scan must be >= 1"));
        }
        if !(self.prune_threshold >= 0.0) {
            return Err(Error::config("prune_threshold must be >= 0"));
        }
        if !(self.absorb_threshold > 0.0) {
            return Err(Error::config("absorb_threshold must be > 0"));
        }
        if self.max_components < 1 {
            return Err(Error::config("max_components must be >= 1"));
        }
        Ok(())
    }

    fn window(&self) -> usize {
        self.l_scan.unwrap_or(usize::MAX)
    }
}

/// Everything the filter needs to know about the world.
#[derive(Debug, Clone)]
pub struct FilterModel {
    pub classes: ClassRegistry,
    pub birth: BirthModel,
    pub sensor: SensorModel,
    pub clutter: ClutterModel,
}

/// Counters for the numerical fallbacks taken during an update.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct UpdateDiagnostics {
    /// Hypotheses whose innovation covariance could not be factorised (or
    /// whose geometry was singular); they contribute no detection terms.
    pub singular_hypotheses: usize,
    /// Measurements for which clutter and every component had zero density.
    pub unexplained_measurements: usize,
}

impl std::ops::AddAssign for UpdateDiagnostics {
    fn add_assign(&mut self, rhs: Self) {
        self.singular_hypotheses += rhs.singular_hypotheses;
        self.unexplained_measurements += rhs.unexplained_measurements;
    }
}

/// One reported trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryEstimate {
    pub birth: usize,
    pub length: usize,
    /// State means from `birth` to `birth + length - 1`.
    pub states: Vec<StateVector>,
    pub class_id: ClassId,
    /// Share of this class among the co-located components of all classes.
    pub class_prob: f64,
    pub weight: f64,
    pub label: u64,
}

impl TrajectoryEstimate {
    pub fn end_time(&self) -> usize {
        self.birth + self.length - 1
    }

    /// State at absolute time `t`, if the trajectory covers it.
    pub fn state_at(&self, t: usize) -> Option<&StateVector> {
        t.checked_sub(self.birth).and_then(|i| self.states.get(i))
    }
}

fn check_classes(state: &PhdState, classes: &ClassRegistry) -> Result<()> {
    if state.per_class.len() != classes.len() {
        return Err(Error::config(format!(
            "state has {} class partitions but the registry has {} classes",
            state.per_class.len(),
            classes.len()
        )));
    }
    for (c, comps) in state.per_class.iter().enumerate() {
        if let Some(bad) = comps.iter().find(|comp| comp.class_id != ClassId(c)) {
            return Err(Error::config(format!(
                "component of class {} stored under class {c}",
                bad.class_id
            )));
        }
        if !comps.is_empty() {
            classes.get(ClassId(c))?;
        }
    }
    Ok(())
}

/// Prediction from `k-1` to `k`.
pub fn predict(
    state: &PhdState,
    birth: &BirthModel,
    classes: &ClassRegistry,
    cfg: &FilterConfig,
) -> Result<PhdState> {
    check_classes(state, classes)?;
    let k = state.time + 1;
    let window = cfg.window();
    let mut out = PhdState::empty(k, classes.len());

    for (c, comps) in state.per_class.iter().enumerate() {
        if comps.is_empty() {
            continue;
        }
        let spec = classes.get(ClassId(c))?;
        let predicted = &mut out.per_class[c];
        for comp in comps {
            let mut bank = Vec::with_capacity(comp.bank.len() * spec.num_models());
            for h in &comp.bank {
                if h.model >= spec.num_models() {
                    return Err(Error::config(format!(
                        "class '{}' has no model {}",
                        spec.name, h.model
                    )));
                }
                for (r, model) in spec.models.iter().enumerate() {
                    let g = append_predicted_state(&h.gauss, &model.transition, &model.noise)?;
                    bank.push(ModelHypothesis {
                        model: r,
                        weight: h.weight * spec.switch[(h.model, r)],
                        gauss: lscan_window(&g, window),
                        prev_model: Some(h.model),
                    });
                }
            }
            if cfg.model_merge == ModelMerge::ImmMerge {
                bank = collapse_by_model(bank)?;
            }
            predicted.push(TrajectoryComponent {
                class_id: comp.class_id,
                weight: spec.p_survive * comp.weight,
                label: comp.label,
                bank,
            });
        }
    }

    for b in make_birth_components(birth, k)? {
        let c = b.class_id.0;
        if c >= classes.len() {
            return Err(Error::config(format!("birth model refers to unknown class {c}")));
        }
        if b.bank.len() != classes.get(b.class_id)?.num_models() {
            return Err(Error::config(format!(
                "birth entry for class {c} has {} model weights, class has {} models",
                b.bank.len(),
                classes.get(b.class_id)?.num_models()
            )));
        }
        out.per_class[c].push(b);
    }
    Ok(out)
}

/// Moment-matches hypotheses sharing a model id; output sorted by model id.
fn collapse_by_model(bank: Vec<ModelHypothesis>) -> Result<Vec<ModelHypothesis>> {
    let mut models: Vec<usize> = bank.iter().map(|h| h.model).collect();
    models.sort_unstable();
    models.dedup();
    if models.len() == bank.len() {
        let mut bank = bank;
        bank.sort_by_key(|h| h.model);
        return Ok(bank);
    }
    let mut out = Vec::with_capacity(models.len());
    for r in models {
        let parts: Vec<(f64, &GaussianTrajectory)> = bank
            .iter()
            .filter(|h| h.model == r && h.weight > 0.0)
            .map(|h| (h.weight, &h.gauss))
            .collect();
        if parts.is_empty() {
            continue;
        }
        let (w, gauss) = moment_match(&parts)?;
        out.push(ModelHypothesis {
            model: r,
            weight: w,
            gauss,
            prev_model: None,
        });
    }
    Ok(out)
}

/// Neumaier-compensated sum.
fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// `ln Σ exp(x_i)` over finite-or-`-inf` terms.
fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + compensated_sum(terms.iter().map(|t| (t - max).exp())).ln()
}

/// Measurement-independent part of a hypothesis update.
struct HypothesisGain {
    zbar: Measurement,
    s_inv: Matrix3<f64>,
    log_norm: f64,
    gain: DMatrix<f64>,
    cov: Arc<DMatrix<f64>>,
}

fn hypothesis_gain(g: &GaussianTrajectory, sensor: &SensorModel) -> Option<HypothesisGain> {
    let (m_last, p_last) = g.last_state();
    let (zbar, h) = sensor.linearize(&m_last).ok()?;
    let mut s = h * p_last * h.transpose() + sensor.noise;
    s = (s + s.transpose()) * 0.5;
    let chol = s.cholesky()?;
    let log_det = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    if !log_det.is_finite() {
        return None;
    }
    let s_inv = chol.inverse();

    let p = g.active_cov();
    let n = p.nrows();
    let off = n - STATE_DIM;
    let hd = DMatrix::from_column_slice(3, STATE_DIM, h.as_slice());
    // P[:, k] Hᵀ  (n × 3)
    let pht = p.columns(off, STATE_DIM) * hd.transpose();
    let gain = &pht * DMatrix::from_column_slice(3, 3, s_inv.as_slice());
    // P - K (P[:, k] Hᵀ)ᵀ
    let mut cov = p.clone();
    cov.gemm(-1.0, &gain, &pht.transpose(), 1.0);
    symmetrize(&mut cov);
    Some(HypothesisGain {
        zbar,
        s_inv,
        log_norm: -0.5 * (3.0 * LN_2PI + log_det),
        gain,
        cov: Arc::new(cov),
    })
}

struct PreparedComponent<'a> {
    comp: &'a TrajectoryComponent,
    log_pd_w: f64,
    gains: Vec<Option<HypothesisGain>>,
}

/// Measurement update. See the module docs for the weight equations.
pub fn update(
    state: &PhdState,
    frame: &MeasurementFrame,
    sensor: &SensorModel,
    clutter: &ClutterModel,
    classes: &ClassRegistry,
) -> Result<(PhdState, UpdateDiagnostics)> {
    update_with_floor(state, frame, sensor, clutter, classes, 0.0)
}

/// Like [`update`] but detection terms with posterior weight below `floor`
/// are never materialised. With `floor` equal to the prune threshold this is
/// exactly `update` followed by component-level pruning of those terms.
pub(crate) fn update_with_floor(
    state: &PhdState,
    frame: &MeasurementFrame,
    sensor: &SensorModel,
    clutter: &ClutterModel,
    classes: &ClassRegistry,
    floor: f64,
) -> Result<(PhdState, UpdateDiagnostics)> {
    check_classes(state, classes)?;
    if frame.time != state.time {
        return Err(Error::param(format!(
            "frame time {} does not match state time {}",
            frame.time, state.time
        )));
    }
    let mut diag = UpdateDiagnostics::default();
    let mut out = PhdState::empty(state.time, classes.len());

    // misdetection terms
    for (c, comps) in state.per_class.iter().enumerate() {
        if comps.is_empty() {
            continue;
        }
        let q = 1.0 - classes.get(ClassId(c))?.p_detect;
        out.per_class[c].extend(comps.iter().map(|comp| TrajectoryComponent {
            weight: q * comp.weight,
            ..comp.clone()
        }));
    }

    // measurement-independent quantities, in class-major order
    let mut prepared: Vec<PreparedComponent> = Vec::new();
    for (c, comps) in state.per_class.iter().enumerate() {
        if comps.is_empty() {
            continue;
        }
        let p_d = classes.get(ClassId(c))?.p_detect;
        for comp in comps {
            if p_d == 0.0 || comp.weight == 0.0 {
                continue;
            }
            let gains: Vec<_> = comp
                .bank
                .iter()
                .map(|h| {
                    let g = hypothesis_gain(&h.gauss, sensor);
                    if g.is_none() {
                        diag.singular_hypotheses += 1;
                    }
                    g
                })
                .collect();
            prepared.push(PreparedComponent {
                comp,
                log_pd_w: p_d.ln() + comp.weight.ln(),
                gains,
            });
        }
    }

    let mut log_q = Vec::new();
    let mut log_terms = Vec::new();
    let mut log_num = vec![f64::NEG_INFINITY; prepared.len()];
    let mut innovations: Vec<Vec<Option<Measurement>>> = Vec::with_capacity(prepared.len());
    let mut log_q_all: Vec<Vec<f64>> = Vec::with_capacity(prepared.len());

    for z in &frame.measurements {
        innovations.clear();
        log_q_all.clear();
        for (j, pc) in prepared.iter().enumerate() {
            log_q.clear();
            log_terms.clear();
            let mut nus = Vec::with_capacity(pc.gains.len());
            for (h, gain) in pc.comp.bank.iter().zip(&pc.gains) {
                match gain {
                    Some(g) if h.weight > 0.0 => {
                        let nu = sensor.innovation(z, &g.zbar);
                        let lq = g.log_norm - 0.5 * (nu.transpose() * g.s_inv * nu)[(0, 0)];
                        log_q.push(lq);
                        log_terms.push(h.weight.ln() + lq);
                        nus.push(Some(nu));
                    }
                    _ => {
                        log_q.push(f64::NEG_INFINITY);
                        nus.push(None);
                    }
                }
            }
            let log_phi = log_sum_exp(&log_terms);
            log_num[j] = pc.log_pd_w + log_phi;
            innovations.push(nus);
            log_q_all.push(log_q.clone());
        }

        let kappa = clutter.intensity(z);
        let mut den_terms = Vec::with_capacity(prepared.len() + 1);
        den_terms.push(kappa.ln());
        den_terms.extend_from_slice(&log_num);
        let log_den = log_sum_exp(&den_terms);
        if log_den == f64::NEG_INFINITY {
            diag.unexplained_measurements += 1;
            continue;
        }

        for (j, pc) in prepared.iter().enumerate() {
            if log_num[j] == f64::NEG_INFINITY {
                continue;
            }
            let weight = (log_num[j] - log_den).exp();
            if weight == 0.0 || weight < floor {
                continue;
            }
            let log_phi = log_num[j] - pc.log_pd_w;
            let mut bank = Vec::with_capacity(pc.comp.bank.len());
            for (i, h) in pc.comp.bank.iter().enumerate() {
                let (Some(g), Some(nu)) = (&pc.gains[i], &innovations[j][i]) else {
                    continue;
                };
                let w = (h.weight.ln() + log_q_all[j][i] - log_phi).exp();
                let mut mean = h.gauss.active_mean().clone();
                mean.gemv(1.0, &g.gain, &DVector::from_column_slice(nu.as_slice()), 1.0);
                bank.push(ModelHypothesis {
                    model: h.model,
                    weight: w,
                    gauss: h.gauss.with_active(mean, Arc::clone(&g.cov)),
                    prev_model: h.prev_model,
                });
            }
            out.per_class[pc.comp.class_id.0].push(TrajectoryComponent {
                class_id: pc.comp.class_id,
                weight,
                label: pc.comp.label,
                bank,
            });
        }
    }
    Ok((out, diag))
}

/// Drops components with `ω_c < threshold`, and bank hypotheses with
/// `ω_r < threshold` (renormalising the bank).
pub fn prune(state: &PhdState, threshold: f64) -> PhdState {
    let per_class = state
        .per_class
        .iter()
        .map(|comps| {
            comps
                .iter()
                .filter(|c| c.weight >= threshold && c.weight > 0.0)
                .map(|c| {
                    let mut bank: Vec<_> =
                        c.bank.iter().filter(|h| h.weight >= threshold && h.weight > 0.0).cloned().collect();
                    if bank.is_empty() {
                        if let Some(best) = c.bank.iter().max_by(|a, b| a.weight.total_cmp(&b.weight)) {
                            bank.push(best.clone());
                        }
                    }
                    let total: f64 = bank.iter().map(|h| h.weight).sum();
                    if total != 1.0 {
                        for h in &mut bank {
                            h.weight /= total;
                        }
                    }
                    TrajectoryComponent { bank, ..c.clone() }
                })
                .collect()
        })
        .collect();
    PhdState {
        time: state.time,
        per_class,
    }
}

/// Collapses each bank to one hypothesis per model id.
pub fn collapse_banks(state: &PhdState) -> Result<PhdState> {
    let mut out = PhdState::empty(state.time, state.per_class.len());
    for (c, comps) in state.per_class.iter().enumerate() {
        for comp in comps {
            out.per_class[c].push(TrajectoryComponent {
                bank: collapse_by_model(comp.bank.clone())?,
                ..comp.clone()
            });
        }
    }
    Ok(out)
}

fn weight_order(comps: &[TrajectoryComponent]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..comps.len()).collect();
    idx.sort_by(|&a, &b| {
        comps[b]
            .weight
            .total_cmp(&comps[a].weight)
            .then(comps[a].birth().cmp(&comps[b].birth()))
    });
    idx
}

fn mahalanobis_sq(d: &StateVector, cov: &StateMatrix) -> Option<f64> {
    let chol = cov.cholesky()?;
    Some(d.dot(&chol.solve(d)))
}

/// Merges components of the same class and `(β, ζ)` whose newest-state
/// means are within Mahalanobis-squared distance `threshold` of the
/// heaviest remaining component.
pub fn absorb(state: &PhdState, threshold: f64) -> Result<PhdState> {
    let mut out = PhdState::empty(state.time, state.per_class.len());
    for (c, comps) in state.per_class.iter().enumerate() {
        let moments: Vec<_> = comps.iter().map(|x| x.last_state_moments()).collect();
        let mut remaining = weight_order(comps);
        while let Some(&lead) = remaining.first() {
            let (birth, length) = (comps[lead].birth(), comps[lead].length());
            let m_lead = moments[lead].0;
            let (group, rest): (Vec<usize>, Vec<usize>) = remaining.iter().partition(|&&j| {
                j == lead
                    || (comps[j].birth() == birth
                        && comps[j].length() == length
                        && mahalanobis_sq(&(moments[j].0 - m_lead), &moments[j].1)
                            .is_some_and(|d| d <= threshold))
            });
            remaining = rest;
            out.per_class[c].push(merge_components(comps, &group)?);
        }
    }
    Ok(out)
}

fn merge_components(comps: &[TrajectoryComponent], group: &[usize]) -> Result<TrajectoryComponent> {
    let lead = &comps[group[0]];
    if group.len() == 1 {
        return Ok(lead.clone());
    }
    if let Some(&bad) = group.iter().find(|&&j| comps[j].class_id != lead.class_id) {
        return Err(Error::InvalidMerge(format!(
            "classes {} and {} cannot merge",
            lead.class_id, comps[bad].class_id
        )));
    }
    let total: f64 = group.iter().map(|&j| comps[j].weight).sum();
    let mut models: Vec<usize> = group
        .iter()
        .flat_map(|&j| comps[j].bank.iter().map(|h| h.model))
        .collect();
    models.sort_unstable();
    models.dedup();
    let mut bank = Vec::with_capacity(models.len());
    for r in models {
        let parts: Vec<(f64, &GaussianTrajectory)> = group
            .iter()
            .flat_map(|&j| {
                comps[j]
                    .bank
                    .iter()
                    .filter(move |h| h.model == r)
                    .map(move |h| (comps[j].weight * h.weight, &h.gauss))
            })
            .filter(|(w, _)| *w > 0.0)
            .collect();
        if parts.is_empty() {
            continue;
        }
        let (w, gauss) = moment_match(&parts)?;
        bank.push(ModelHypothesis {
            model: r,
            weight: w / total,
            gauss,
            prev_model: None,
        });
    }
    Ok(TrajectoryComponent {
        class_id: lead.class_id,
        weight: total,
        label: lead.label,
        bank,
    })
}

/// Keeps the `max_components` heaviest components of every class.
pub fn cap(state: &PhdState, max_components: usize) -> PhdState {
    let per_class = state
        .per_class
        .iter()
        .map(|comps| {
            weight_order(comps)
                .into_iter()
                .take(max_components)
                .map(|i| comps[i].clone())
                .collect()
        })
        .collect();
    PhdState {
        time: state.time,
        per_class,
    }
}

/// Mixture reduction: prune, bank collapse, absorb, cap.
pub fn reduce(state: &PhdState, cfg: &FilterConfig) -> Result<PhdState> {
    let pruned = prune(state, cfg.prune_threshold);
    let collapsed = collapse_banks(&pruned)?;
    let absorbed = absorb(&collapsed, cfg.absorb_threshold)?;
    Ok(cap(&absorbed, cfg.max_components))
}

/// Estimated number of alive trajectories, `round(Σ ω_c)`.
pub fn estimated_count(state: &PhdState) -> usize {
    let total = compensated_sum(state.components().map(|c| c.weight));
    total.round().max(0.0) as usize
}

/// Trajectory estimates and their classes.
pub fn extract(state: &PhdState, cfg: &FilterConfig) -> Vec<TrajectoryEstimate> {
    let all: Vec<&TrajectoryComponent> = state.components().collect();
    let mut order: Vec<usize> = (0..all.len()).collect();
    order.sort_by(|&a, &b| {
        all[b]
            .weight
            .total_cmp(&all[a].weight)
            .then(all[a].birth().cmp(&all[b].birth()))
            .then(all[a].label.cmp(&all[b].label))
            .then(all[a].class_id.cmp(&all[b].class_id))
    });
    let selected: Vec<usize> = match cfg.estimator {
        Estimator::TopN => order.into_iter().take(estimated_count(state)).collect(),
        Estimator::Threshold { threshold } => {
            order.into_iter().filter(|&i| all[i].weight > threshold).collect()
        }
    };
    if selected.is_empty() {
        return Vec::new();
    }
    let moments: Vec<_> = all.iter().map(|c| c.last_state_moments()).collect();

    selected
        .into_iter()
        .map(|i| {
            let comp = all[i];
            let (m_i, p_i) = &moments[i];
            let (mut same, mut group) = (0.0, 0.0);
            for (j, other) in all.iter().enumerate() {
                let near = j == i
                    || (other.birth() == comp.birth()
                        && other.length() == comp.length()
                        && mahalanobis_sq(&(moments[j].0 - m_i), p_i)
                            .is_some_and(|d| d <= cfg.absorb_threshold));
                if near {
                    group += other.weight;
                    if other.class_id == comp.class_id {
                        same += other.weight;
                    }
                }
            }
            let mean = comp.trajectory_mean();
            let states = mean
                .as_slice()
                .chunks_exact(STATE_DIM)
                .map(StateVector::from_column_slice)
                .collect();
            TrajectoryEstimate {
                birth: comp.birth(),
                length: comp.length(),
                states,
                class_id: comp.class_id,
                class_prob: if group > 0.0 { same / group } else { 1.0 },
                weight: comp.weight,
                label: comp.label,
            }
        })
        .collect()
}

/// One full recursion step.
pub fn step(
    state: &PhdState,
    frame: &MeasurementFrame,
    model: &FilterModel,
    cfg: &FilterConfig,
) -> Result<(PhdState, Vec<TrajectoryEstimate>, UpdateDiagnostics)> {
    if frame.time != state.time + 1 {
        return Err(Error::param(format!(
            "frame time {} does not follow state time {}",
            frame.time, state.time
        )));
    }
    let predicted = predict(state, &model.birth, &model.classes, cfg)?;
    let (updated, diag) = update_with_floor(
        &predicted,
        frame,
        &model.sensor,
        &model.clutter,
        &model.classes,
        cfg.prune_threshold,
    )?;
    let reduced = reduce(&updated, cfg)?;
    let estimates = extract(&reduced, cfg);
    Ok((reduced, estimates, diag))
}

/// Convenience driver holding the state between scans.
#[derive(Debug, Clone)]
pub struct Tracker {
    pub model: FilterModel,
    pub cfg: FilterConfig,
    pub state: PhdState,
    pub diagnostics: UpdateDiagnostics,
}

impl Tracker {
    pub fn new(model: FilterModel, cfg: FilterConfig) -> Result<Self> {
        cfg.validate()?;
        let state = PhdState::empty(0, model.classes.len());
        Ok(Self {
            model,
            cfg,
            state,
            diagnostics: UpdateDiagnostics::default(),
        })
    }

    pub fn step(&mut self, frame: &MeasurementFrame) -> Result<Vec<TrajectoryEstimate>> {
        let (next, estimates, diag) = step(&self.state, frame, &self.model, &self.cfg)?;
        self.state = next;
        self.diagnostics += diag;
        Ok(estimates)
    }
}
