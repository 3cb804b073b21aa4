//! Trajectory Gaussians and the mixture components built from them.
//!
//! A [`GaussianTrajectory`] is a joint Gaussian over a whole state sequence
//! `x^{β:β+ζ-1}`. Under the L-scan approximation only the trailing window of
//! states keeps a joint covariance; older states are frozen point estimates.
//! With an unbounded window the frozen prefix is empty and the covariance
//! spans the full `ζ·6` stacked state.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::models::{ClassId, StateMatrix, StateVector, STATE_DIM};

const N: usize = STATE_DIM;

/// Forces exact symmetry: `(P + Pᵀ) / 2`.
pub(crate) fn symmetrize(p: &mut DMatrix<f64>) {
    let n = p.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (p[(i, j)] + p[(j, i)]);
            p[(i, j)] = v;
            p[(j, i)] = v;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianTrajectory {
    birth: usize,
    /// Frozen state means, oldest first, `STATE_DIM` values per state.
    frozen: Arc<Vec<f64>>,
    /// Mean of the active window, oldest first.
    mean: DVector<f64>,
    /// Joint covariance of the active window.
    cov: Arc<DMatrix<f64>>,
}

impl GaussianTrajectory {
    /// A single-state trajectory born at `birth`.
    pub fn new(birth: usize, mean: StateVector, cov: StateMatrix) -> Result<Self> {
        Self::from_parts(
            birth,
            Vec::new(),
            DVector::from_column_slice(mean.as_slice()),
            DMatrix::from_column_slice(N, N, cov.as_slice()),
        )
    }

    pub fn from_parts(
        birth: usize,
        frozen: Vec<f64>,
        mean: DVector<f64>,
        mut cov: DMatrix<f64>,
    ) -> Result<Self> {
        if birth < 1 {
            return Err(Error::param("birth time must be >= 1"));
        }
        if !frozen.len().is_multiple_of(N) || !mean.len().is_multiple_of(N) || mean.is_empty() {
            return Err(Error::param(format!(
                "trajectory mean sizes must be non-empty multiples of {N}"
            )));
        }
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(Error::param(format!(
                "covariance is {}x{} but active mean has {} entries",
                cov.nrows(),
                cov.ncols(),
                mean.len()
            )));
        }
        let scale = cov.amax().max(1.0);
        if (&cov - cov.transpose()).amax() > 1e-10 * scale {
            return Err(Error::param("trajectory covariance is not symmetric"));
        }
        symmetrize(&mut cov);
        Ok(Self {
            birth,
            frozen: Arc::new(frozen),
            mean,
            cov: Arc::new(cov),
        })
    }

    pub fn birth(&self) -> usize {
        self.birth
    }

    /// Number of states ζ.
    pub fn length(&self) -> usize {
        (self.frozen.len() + self.mean.len()) / N
    }

    /// Time step of the newest state.
    pub fn end_time(&self) -> usize {
        self.birth + self.length() - 1
    }

    pub fn active_states(&self) -> usize {
        self.mean.len() / N
    }

    pub fn frozen_states(&self) -> usize {
        self.frozen.len() / N
    }

    pub fn frozen_prefix(&self) -> &[f64] {
        &self.frozen
    }

    pub fn active_mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn active_cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Stacked mean over the whole trajectory, oldest state first.
    pub fn full_mean(&self) -> DVector<f64> {
        let mut out = DVector::zeros(self.frozen.len() + self.mean.len());
        out.as_mut_slice()[..self.frozen.len()].copy_from_slice(&self.frozen);
        out.as_mut_slice()[self.frozen.len()..].copy_from_slice(self.mean.as_slice());
        out
    }

    /// Mean of the `i`-th state (0 = birth state).
    pub fn state(&self, i: usize) -> StateVector {
        let nf = self.frozen_states();
        if i < nf {
            StateVector::from_column_slice(&self.frozen[i * N..(i + 1) * N])
        } else {
            let j = (i - nf) * N;
            StateVector::from_column_slice(&self.mean.as_slice()[j..j + N])
        }
    }

    /// Marginal of the newest state: bottom block of the mean and the
    /// bottom-right block of the covariance.
    pub fn last_state(&self) -> (StateVector, StateMatrix) {
        let off = self.mean.len() - N;
        let m = StateVector::from_column_slice(&self.mean.as_slice()[off..]);
        let p = StateMatrix::from_fn(|i, j| self.cov[(off + i, off + j)]);
        (m, p)
    }

    pub(crate) fn with_active(&self, mean: DVector<f64>, cov: Arc<DMatrix<f64>>) -> Self {
        debug_assert_eq!(mean.len(), self.mean.len());
        Self {
            birth: self.birth,
            frozen: Arc::clone(&self.frozen),
            mean,
            cov,
        }
    }

    fn same_shape(&self, other: &Self) -> bool {
        self.birth == other.birth
            && self.frozen.len() == other.frozen.len()
            && self.mean.len() == other.mean.len()
    }
}

/// Extends a trajectory by one predicted state.
///
/// The new joint covariance is `[[P, P1], [P1ᵀ, P2]]` with
/// `P1 = P[:, last]·Fᵀ` and `P2 = F·P[last, last]·Fᵀ + Q`.
pub fn append_predicted_state(
    g: &GaussianTrajectory,
    f: &StateMatrix,
    q: &StateMatrix,
) -> Result<GaussianTrajectory> {
    let n = g.mean.len();
    if g.cov.nrows() != n {
        return Err(Error::param("trajectory mean/covariance size mismatch"));
    }
    let off = n - N;
    let ft = f.transpose();

    let mut mean = DVector::zeros(n + N);
    mean.rows_mut(0, n).copy_from(&g.mean);
    let last = StateVector::from_column_slice(&g.mean.as_slice()[off..]);
    mean.rows_mut(n, N).copy_from(&(f * last));

    let mut cov = DMatrix::zeros(n + N, n + N);
    cov.view_mut((0, 0), (n, n)).copy_from(&*g.cov);
    // P1 = P[:, last] Fᵀ
    let p_col = g.cov.columns(off, N);
    let p1 = p_col * ft;
    cov.view_mut((0, n), (n, N)).copy_from(&p1);
    cov.view_mut((n, 0), (N, n)).copy_from(&p1.transpose());
    let corner = StateMatrix::from_fn(|i, j| g.cov[(off + i, off + j)]);
    let p2 = f * corner * ft + q;
    cov.view_mut((n, n), (N, N)).copy_from(&p2);
    symmetrize(&mut cov);

    Ok(GaussianTrajectory {
        birth: g.birth,
        frozen: Arc::clone(&g.frozen),
        mean,
        cov: Arc::new(cov),
    })
}

/// Marginal (mean, covariance) of the newest state.
pub fn last_state_marginal(g: &GaussianTrajectory) -> (StateVector, StateMatrix) {
    g.last_state()
}

/// L-scan approximation: keeps the joint Gaussian over the last `window`
/// states only and freezes older states at their current means.
pub fn lscan_window(g: &GaussianTrajectory, window: usize) -> GaussianTrajectory {
    let window = window.max(1);
    let active = g.active_states();
    if active <= window {
        return g.clone();
    }
    let drop = (active - window) * N;
    let keep = window * N;
    let mut frozen = Vec::with_capacity(g.frozen.len() + drop);
    frozen.extend_from_slice(&g.frozen);
    frozen.extend_from_slice(&g.mean.as_slice()[..drop]);
    let mean = g.mean.rows(drop, keep).into_owned();
    let cov = g.cov.view((drop, drop), (keep, keep)).into_owned();
    GaussianTrajectory {
        birth: g.birth,
        frozen: Arc::new(frozen),
        mean,
        cov: Arc::new(cov),
    }
}

/// Moment-matched merge of weighted trajectory Gaussians of identical shape.
///
/// Frozen prefixes are averaged with the same weights; the active covariance
/// gets the usual spread-of-means term. Returns the total weight and the
/// merged Gaussian.
pub fn moment_match(parts: &[(f64, &GaussianTrajectory)]) -> Result<(f64, GaussianTrajectory)> {
    let (_, first) = *parts
        .first()
        .ok_or_else(|| Error::InvalidMerge("nothing to merge".into()))?;
    if let Some((_, g)) = parts.iter().find(|(_, g)| !g.same_shape(first)) {
        return Err(Error::InvalidMerge(format!(
            "shape mismatch: (β={}, ζ={}) vs (β={}, ζ={})",
            first.birth,
            first.length(),
            g.birth,
            g.length()
        )));
    }
    if parts.iter().any(|(w, _)| !(*w >= 0.0) || !w.is_finite()) {
        return Err(Error::InvalidMerge("weights must be finite and >= 0".into()));
    }
    let total: f64 = parts.iter().map(|(w, _)| w).sum();
    if !(total > 0.0) {
        return Err(Error::InvalidMerge("total weight must be > 0".into()));
    }
    let live: Vec<_> = parts.iter().filter(|(w, _)| *w > 0.0).collect();
    if live.len() == 1 {
        return Ok((total, live[0].1.clone()));
    }

    let n = first.mean.len();
    let mut mean = DVector::zeros(n);
    for (w, g) in &live {
        mean.axpy(*w / total, &g.mean, 1.0);
    }
    let mut cov = DMatrix::zeros(n, n);
    for (w, g) in &live {
        let a = *w / total;
        let d = &g.mean - &mean;
        cov += &*g.cov * a;
        cov.ger(a, &d, &d, 1.0);
    }
    symmetrize(&mut cov);

    let frozen = if first.frozen.is_empty() || live.iter().all(|(_, g)| Arc::ptr_eq(&g.frozen, &first.frozen)) {
        Arc::clone(&first.frozen)
    } else {
        let mut f = vec![0.0; first.frozen.len()];
        for (w, g) in &live {
            let a = *w / total;
            for (o, v) in f.iter_mut().zip(g.frozen.iter()) {
                *o += a * v;
            }
        }
        Arc::new(f)
    };

    Ok((
        total,
        GaussianTrajectory {
            birth: first.birth,
            frozen,
            mean,
            cov: Arc::new(cov),
        },
    ))
}

/// One motion-model hypothesis inside a component's bank.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelHypothesis {
    pub model: usize,
    pub weight: f64,
    pub gauss: GaussianTrajectory,
    /// Model of the hypothesis this one was predicted from.
    pub prev_model: Option<usize>,
}

/// Moment-matched merge of two hypotheses with external weights `wa`, `wb`.
/// The result carries weight `wa + wb` and the model id of the heavier input.
pub fn merge_pair(
    a: &ModelHypothesis,
    wa: f64,
    b: &ModelHypothesis,
    wb: f64,
) -> Result<ModelHypothesis> {
    if !a.gauss.same_shape(&b.gauss) {
        return Err(Error::InvalidMerge(format!(
            "cannot merge (β={}, ζ={}) with (β={}, ζ={})",
            a.gauss.birth,
            a.gauss.length(),
            b.gauss.birth,
            b.gauss.length()
        )));
    }
    let (w, gauss) = moment_match(&[(wa, &a.gauss), (wb, &b.gauss)])?;
    let model = if wa >= wb { a.model } else { b.model };
    let prev_model = if wa == 0.0 {
        b.prev_model
    } else if wb == 0.0 {
        a.prev_model
    } else {
        None
    };
    Ok(ModelHypothesis {
        model,
        weight: w,
        gauss,
        prev_model,
    })
}

/// One term of the class-augmented trajectory PHD.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryComponent {
    pub class_id: ClassId,
    /// ω_c: expected number of trajectories this term stands for.
    pub weight: f64,
    /// Creation tag inherited through predict/update; used as a track id.
    pub label: u64,
    pub bank: Vec<ModelHypothesis>,
}

impl TrajectoryComponent {
    pub fn birth(&self) -> usize {
        self.bank[0].gauss.birth()
    }

    pub fn length(&self) -> usize {
        self.bank[0].gauss.length()
    }

    pub fn bank_weight(&self) -> f64 {
        self.bank.iter().map(|h| h.weight).sum()
    }

    /// Bank-collapsed marginal of the newest state.
    pub fn last_state_moments(&self) -> (StateVector, StateMatrix) {
        let total = self.bank_weight();
        let mut m = StateVector::zeros();
        let parts: Vec<_> = self.bank.iter().map(|h| (h.weight / total, h.gauss.last_state())).collect();
        for (a, (mi, _)) in &parts {
            m += mi * *a;
        }
        let mut p = StateMatrix::zeros();
        for (a, (mi, pi)) in &parts {
            let d = mi - m;
            p += (pi + d * d.transpose()) * *a;
        }
        (m, p)
    }

    /// Bank-weighted mean of the full stacked trajectory.
    pub fn trajectory_mean(&self) -> DVector<f64> {
        let total = self.bank_weight();
        let mut out = DVector::zeros(self.length() * N);
        for h in &self.bank {
            out.axpy(h.weight / total, &h.gauss.full_mean(), 1.0);
        }
        out
    }
}

/// Current filter state: time step and the mixture, partitioned by class.
#[derive(Debug, Clone, PartialEq)]
pub struct PhdState {
    pub time: usize,
    /// `per_class[c]` holds the components of class `ClassId(c)`.
    pub per_class: Vec<Vec<TrajectoryComponent>>,
}

impl PhdState {
    pub fn empty(time: usize, num_classes: usize) -> Self {
        Self {
            time,
            per_class: vec![Vec::new(); num_classes],
        }
    }

    pub fn components(&self) -> impl Iterator<Item = &TrajectoryComponent> {
        self.per_class.iter().flatten()
    }

    pub fn num_components(&self) -> usize {
        self.per_class.iter().map(Vec::len).sum()
    }

    pub fn class_mass(&self, class: ClassId) -> f64 {
        self.per_class
            .get(class.0)
            .map(|v| v.iter().map(|c| c.weight).sum())
            .unwrap_or(0.0)
    }

    /// Expected number of alive trajectories, Σ ω_c over everything.
    pub fn total_mass(&self) -> f64 {
        self.components().map(|c| c.weight).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BirthEntry {
    pub weight: f64,
    pub model_weights: Vec<f64>,
    pub mean: StateVector,
    pub cov: StateMatrix,
}

/// Gaussian-mixture birth intensity, one list of entries per class.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BirthModel {
    pub per_class: Vec<Vec<BirthEntry>>,
}

impl BirthModel {
    pub fn new(per_class: Vec<Vec<BirthEntry>>) -> Result<Self> {
        for (c, entries) in per_class.iter().enumerate() {
            for (j, e) in entries.iter().enumerate() {
                if !(e.weight >= 0.0) || !e.weight.is_finite() {
                    return Err(Error::param(format!("birth entry {c}/{j}: negative weight")));
                }
                if e.model_weights.iter().any(|&w| !(w >= 0.0)) {
                    return Err(Error::param(format!("birth entry {c}/{j}: negative model weight")));
                }
                let s: f64 = e.model_weights.iter().sum();
                if (s - 1.0).abs() > 1e-9 {
                    return Err(Error::param(format!(
                        "birth entry {c}/{j}: model weights sum to {s}"
                    )));
                }
            }
        }
        Ok(Self { per_class })
    }

    pub fn class_mass(&self, class: ClassId) -> f64 {
        self.per_class
            .get(class.0)
            .map(|v| v.iter().map(|e| e.weight).sum())
            .unwrap_or(0.0)
    }
}

/// Creation tag for the `entry`-th birth of class `class` at step `k`.
pub fn birth_label(k: usize, class: ClassId, entry: usize) -> u64 {
    ((k as u64) << 32) | ((class.0 as u64 & 0xffff) << 16) | (entry as u64 & 0xffff)
}

/// Birth components at step `k`: `β = k`, `ζ = 1`, one hypothesis per model
/// of the class, all sharing the entry's Gaussian.
pub fn make_birth_components(birth: &BirthModel, k: usize) -> Result<Vec<TrajectoryComponent>> {
    let mut out = Vec::new();
    for (c, entries) in birth.per_class.iter().enumerate() {
        for (j, e) in entries.iter().enumerate() {
            let gauss = GaussianTrajectory::new(k, e.mean, e.cov)?;
            let bank = e
                .model_weights
                .iter()
                .enumerate()
                .map(|(r, &w)| ModelHypothesis {
                    model: r,
                    weight: w,
                    gauss: gauss.clone(),
                    prev_model: None,
                })
                .collect();
            out.push(TrajectoryComponent {
                class_id: ClassId(c),
                weight: e.weight,
                label: birth_label(k, ClassId(c), j),
                bank,
            });
        }
    }
    Ok(out)
}
