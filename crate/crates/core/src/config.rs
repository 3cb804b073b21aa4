//! JSON experiment document: scenario, classes, sensor, clutter, birth,
//! filter, metric and Monte Carlo sections in one file.
//!
//! Angles in the document are given in degrees where the key says so
//! (`turn_rate_deg`, `noise_std_deg`); everything else is SI.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{Estimator, FilterConfig, FilterModel, ModelMerge};
use crate::metrics::MetricConfig;
use crate::models::{
    ClassId, ClassRegistry, ClutterModel, Measurement, MeasurementMatrix, MeasurementRegion,
    MotionModel, SensorModel, StateMatrix, StateVector, TargetClassSpec,
};
use crate::simulator::{Maneuver, ScenarioConfig, TargetSpec};
use crate::trajectory::{BirthEntry, BirthModel};

/// The bundled six-target plane/UAV scenario.
pub const TABLE1_SCENARIO: &str = include_str!("../scenarios/table1.json");

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentFile {
    pub scenario: ScenarioSection,
    pub classes: Vec<ClassSection>,
    pub sensor: SensorSection,
    pub clutter: ClutterSection,
    pub birth: Vec<BirthSection>,
    #[serde(default)]
    pub filter: FilterSection,
    #[serde(default)]
    pub metric: MetricConfig,
    #[serde(default)]
    pub monte_carlo: MonteCarloSection,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub duration: usize,
    #[serde(default = "one")]
    pub dt: f64,
    #[serde(default)]
    pub seed: u64,
    pub targets: Vec<TargetSection>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TargetSection {
    pub name: String,
    pub class: String,
    pub birth: usize,
    pub death: usize,
    pub initial: [f64; 6],
    #[serde(default)]
    pub maneuver: ManeuverSection,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, rename_all = "kebab-case", tag = "kind")]
pub enum ManeuverSection {
    Markov {
        #[serde(default)]
        initial_model: usize,
    },
    Explicit {
        schedule: Vec<usize>,
    },
}

impl Default for ManeuverSection {
    fn default() -> Self {
        ManeuverSection::Markov { initial_model: 0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ClassSection {
    pub name: String,
    pub p_survive: f64,
    pub p_detect: f64,
    /// Process noise intensity σ_v².
    pub sigma_v_sq: f64,
    pub models: Vec<ModelSection>,
    pub switch: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, rename_all = "kebab-case", tag = "kind")]
pub enum ModelSection {
    Cv,
    Ct { turn_rate_deg: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, rename_all = "kebab-case", tag = "kind")]
pub enum SensorSection {
    /// Azimuth/elevation/range; angles' standard deviations in degrees.
    Radar { noise_std_deg: [f64; 2], range_std: f64 },
    /// Position-only linear sensor.
    Linear { noise_std: [f64; 3] },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ClutterSection {
    pub rate: f64,
    /// Per-axis `[lo, hi]`; defaults to the radar volume up to 10 km.
    #[serde(default)]
    pub bounds: Option<[[f64; 2]; 3]>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BirthSection {
    pub class: String,
    pub weight: f64,
    pub model_weights: Vec<f64>,
    pub mean: [f64; 6],
    /// Per-component standard deviations; covariance is `diag(std)²`.
    pub std: [f64; 6],
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FilterSection {
    /// `null` disables the L-scan window.
    #[serde(default = "default_l")]
    pub l_scan: Option<usize>,
    #[serde(default = "default_prune")]
    pub prune_threshold: f64,
    #[serde(default = "default_absorb")]
    pub absorb_threshold: f64,
    #[serde(default = "default_jmax")]
    pub max_components: usize,
    #[serde(default)]
    pub model_merge: ModelMerge,
    #[serde(default)]
    pub estimator: Estimator,
}

fn default_l() -> Option<usize> {
    Some(5)
}
fn default_prune() -> f64 {
    1e-5
}
fn default_absorb() -> f64 {
    4.0
}
fn default_jmax() -> usize {
    50
}

impl Default for FilterSection {
    fn default() -> Self {
        Self {
            l_scan: default_l(),
            prune_threshold: default_prune(),
            absorb_threshold: default_absorb(),
            max_components: default_jmax(),
            model_merge: ModelMerge::default(),
            estimator: Estimator::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloSection {
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default)]
    pub hold_truth_fixed: bool,
}

fn default_runs() -> usize {
    1
}

impl Default for MonteCarloSection {
    fn default() -> Self {
        Self {
            runs: default_runs(),
            hold_truth_fixed: false,
        }
    }
}

/// Everything built from an [`ExperimentFile`].
#[derive(Debug, Clone)]
pub struct Experiment {
    pub scenario: ScenarioConfig,
    pub model: FilterModel,
    pub filter: FilterConfig,
    pub metric: MetricConfig,
    pub runs: usize,
    pub hold_truth_fixed: bool,
}

/// A configuration problem, with the 1-based line it was traced to if any.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

/// First line mentioning `"key"`, for diagnostics of semantic errors.
fn locate(text: &str, key: &str) -> Option<usize> {
    let needle = format!("\"{key}\"");
    text.lines().position(|l| l.contains(&needle)).map(|i| i + 1)
}

impl Experiment {
    /// Parses and validates a JSON document.
    pub fn from_json(text: &str) -> std::result::Result<Self, ConfigError> {
        let file: ExperimentFile = serde_json::from_str(text).map_err(|e| ConfigError {
            line: Some(e.line()),
            message: e.to_string(),
        })?;
        file.build().map_err(|(key, e)| ConfigError {
            line: key.and_then(|k| locate(text, k)),
            message: e.to_string(),
        })
    }

    pub fn table1() -> Self {
        Self::from_json(TABLE1_SCENARIO).expect("bundled scenario is valid")
    }
}

type BuildResult<T> = std::result::Result<T, (Option<&'static str>, Error)>;

fn at<T>(key: &'static str, r: Result<T>) -> BuildResult<T> {
    r.map_err(|e| (Some(key), e))
}

impl ExperimentFile {
    fn build(&self) -> BuildResult<Experiment> {
        if self.scenario.duration < 1 {
            return Err((Some("duration"), Error::config("duration must be >= 1")));
        }
        if !(self.scenario.dt > 0.0) {
            return Err((Some("dt"), Error::config("dt must be > 0")));
        }
        let classes = at("classes", self.build_classes())?;
        let class_id = |name: &str| {
            classes
                .find(name)
                .ok_or_else(|| Error::config(format!("unknown class '{name}'")))
        };

        let sensor = at(
            "sensor",
            match &self.sensor {
                SensorSection::Radar {
                    noise_std_deg,
                    range_std,
                } => {
                    let a = noise_std_deg[0] * PI / 180.0;
                    let e = noise_std_deg[1] * PI / 180.0;
                    SensorModel::radar(MeasurementMatrix::from_diagonal(&Measurement::new(
                        a * a,
                        e * e,
                        range_std * range_std,
                    )))
                }
                SensorSection::Linear { noise_std } => SensorModel::linear_position(
                    MeasurementMatrix::from_diagonal(&Measurement::from_fn(|i, _| noise_std[i] * noise_std[i])),
                ),
            },
        )?;

        let region = at(
            "clutter",
            match (&self.clutter.bounds, &self.sensor) {
                (Some(b), _) => MeasurementRegion::new(*b),
                (None, SensorSection::Radar { .. }) => MeasurementRegion::radar(10_000.0),
                (None, SensorSection::Linear { .. }) => Err(Error::config(
                    "clutter.bounds is required for the linear sensor",
                )),
            },
        )?;
        let clutter = at("clutter", ClutterModel::new(self.clutter.rate, region))?;

        let mut per_class = vec![Vec::new(); classes.len()];
        for b in &self.birth {
            let c = at("birth", class_id(&b.class))?;
            per_class[c.0].push(BirthEntry {
                weight: b.weight,
                model_weights: b.model_weights.clone(),
                mean: StateVector::from_row_slice(&b.mean),
                cov: StateMatrix::from_diagonal(&StateVector::from_fn(|i, _| b.std[i] * b.std[i])),
            });
        }
        let birth = at("birth", BirthModel::new(per_class))?;
        for (c, entries) in birth.per_class.iter().enumerate() {
            let n = at("birth", classes.get(ClassId(c)))?.num_models();
            if entries.iter().any(|e| e.model_weights.len() != n) {
                return Err((
                    Some("model_weights"),
                    Error::config(format!("birth model_weights must have {n} entries")),
                ));
            }
        }

        let mut targets = Vec::with_capacity(self.scenario.targets.len());
        for t in &self.scenario.targets {
            targets.push(TargetSpec {
                name: t.name.clone(),
                class_id: at("targets", class_id(&t.class))?,
                birth_time: t.birth,
                death_time: t.death,
                initial: StateVector::from_row_slice(&t.initial),
                maneuver: match &t.maneuver {
                    ManeuverSection::Markov { initial_model } => Maneuver::Markov {
                        initial_model: *initial_model,
                    },
                    ManeuverSection::Explicit { schedule } => Maneuver::Explicit(schedule.clone()),
                },
            });
        }
        let scenario = ScenarioConfig {
            duration: self.scenario.duration,
            dt: self.scenario.dt,
            targets,
            classes: classes.clone(),
            sensor: sensor.clone(),
            clutter,
            seed: self.scenario.seed,
        };
        at("targets", scenario.validate())?;

        let filter = FilterConfig {
            l_scan: self.filter.l_scan,
            prune_threshold: self.filter.prune_threshold,
            absorb_threshold: self.filter.absorb_threshold,
            max_components: self.filter.max_components,
            model_merge: self.filter.model_merge,
            estimator: self.filter.estimator,
        };
        at("filter", filter.validate())?;
        at("metric", self.metric.validate())?;
        if self.monte_carlo.runs < 1 {
            return Err((Some("runs"), Error::config("runs must be >= 1")));
        }

        Ok(Experiment {
            scenario,
            model: FilterModel {
                classes,
                birth,
                sensor,
                clutter,
            },
            filter,
            metric: self.metric,
            runs: self.monte_carlo.runs,
            hold_truth_fixed: self.monte_carlo.hold_truth_fixed,
        })
    }

    fn build_classes(&self) -> Result<ClassRegistry> {
        let dt = self.scenario.dt;
        let mut out = Vec::with_capacity(self.classes.len());
        for (i, c) in self.classes.iter().enumerate() {
            if self.classes[..i].iter().any(|o| o.name == c.name) {
                return Err(Error::config(format!("duplicate class '{}'", c.name)));
            }
            let models = c
                .models
                .iter()
                .enumerate()
                .map(|(r, m)| match m {
                    ModelSection::Cv => MotionModel::constant_velocity(r, dt, c.sigma_v_sq),
                    ModelSection::Ct { turn_rate_deg } => {
                        MotionModel::coordinated_turn(r, turn_rate_deg * PI / 180.0, dt, c.sigma_v_sq)
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            let n = models.len();
            if c.switch.len() != n || c.switch.iter().any(|row| row.len() != n) {
                return Err(Error::config(format!(
                    "class '{}': switch must be {n}x{n}",
                    c.name
                )));
            }
            let switch = DMatrix::from_row_iterator(n, n, c.switch.iter().flatten().copied());
            out.push(TargetClassSpec::new(
                ClassId(i),
                c.name.clone(),
                models,
                switch,
                c.p_survive,
                c.p_detect,
            )?);
        }
        ClassRegistry::new(out)
    }
}
