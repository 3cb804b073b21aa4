use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use jtc_tphd::config::{Experiment, TABLE1_SCENARIO};
use jtc_tphd::filter::FilterConfig;
use jtc_tphd::metrics::evaluate_run;
use jtc_tphd::models::Measurement;
use jtc_tphd::simulator::{
    aggregate, generate_frames, generate_truth, run_filter, run_monte_carlo, MeasurementFrame,
    MonteCarloOptions, RunOutput, RunResults,
};
use jtc_tphd::Error;
use serde_json::{json, Value};

use crate::output::{digest, json_num, num, write_json, Table};

/// A failed command and its exit status.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Io(String),
    Numerical(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Io(_) => 3,
            Failure::Numerical(_) => 4,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(m) | Failure::Io(m) | Failure::Numerical(m) => f.write_str(m),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::InvalidParameter(_) => Failure::Config(e.to_string()),
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

fn io(path: &Path) -> impl Fn(std::io::Error) -> Failure + '_ {
    move |e| Failure::Io(format!("{}: {e}", path.display()))
}

struct Loaded {
    exp: Experiment,
    /// The document with command-line overrides applied, for the digest.
    doc: Value,
}

impl Loaded {
    fn digest(&self) -> String {
        digest(&self.doc)
    }
}

fn load(config: Option<&Path>, seed: Option<u64>) -> Result<Loaded, Failure> {
    let (text, name) = match config {
        Some(p) => (
            std::fs::read_to_string(p).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?,
            p.display().to_string(),
        ),
        None => (TABLE1_SCENARIO.to_string(), "bundled scenario".into()),
    };
    let mut exp = Experiment::from_json(&text).map_err(|e| Failure::Config(format!("{name}: {e}")))?;
    let mut doc: Value = serde_json::from_str(&text).map_err(|e| Failure::Config(format!("{name}: {e}")))?;
    if let Some(s) = seed {
        exp.scenario.seed = s;
        doc["scenario"]["seed"] = json!(s);
    }
    Ok(Loaded { exp, doc })
}

fn set(doc: &mut Value, section: &str, key: &str, v: Value) {
    if !doc[section].is_object() {
        doc[section] = json!({});
    }
    doc[section][key] = v;
}

fn make_dir(out: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(out).map_err(io(out))
}

pub fn simulate(config: Option<&Path>, out: &Path, seed: Option<u64>) -> Result<(), Failure> {
    let l = load(config, seed)?;
    let scenario = &l.exp.scenario;
    let truth = generate_truth(scenario)?;
    let frames = generate_frames(scenario, &truth, scenario.seed)?;
    make_dir(out)?;

    let path = out.join("truth.csv");
    let mut t = Table::create(&path, &["target", "name", "class", "scan", "model", "x", "vx", "y", "vy", "z", "vz"])
        .map_err(io(&path))?;
    for (i, track) in truth.tracks.iter().enumerate() {
        let class = &scenario.classes.get(track.class_id)?.name;
        for (k, (x, m)) in track.states.iter().zip(&track.models).enumerate() {
            let mut row = vec![
                i.to_string(),
                track.name.clone(),
                class.clone(),
                (track.birth + k).to_string(),
                m.to_string(),
            ];
            row.extend(x.iter().map(|v| num(*v)));
            t.row(row).map_err(io(&path))?;
        }
    }
    t.finish().map_err(io(&path))?;

    let path = out.join("frames.csv");
    let mut t = Table::create(&path, &["scan", "index", "z1", "z2", "z3", "source"]).map_err(io(&path))?;
    for f in &frames {
        let sources = f.provenance.clone().unwrap_or_default();
        for (j, z) in f.measurements.iter().enumerate() {
            let source = sources.get(j).copied().flatten().map(|s| s.to_string()).unwrap_or_default();
            t.row([
                f.time.to_string(),
                j.to_string(),
                num(z[0]),
                num(z[1]),
                num(z[2]),
                source,
            ])
            .map_err(io(&path))?;
        }
    }
    t.finish().map_err(io(&path))?;
    println!(
        "simulated {} scans, {} targets, {} measurements -> {}",
        scenario.duration,
        truth.tracks.len(),
        frames.iter().map(|f| f.measurements.len()).sum::<usize>(),
        out.display()
    );
    Ok(())
}

/// Reads a frames.csv; scans without rows become empty frames.
fn read_frames(path: &Path, duration: usize) -> Result<Vec<MeasurementFrame>, Failure> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => Failure::Io(format!("{}: {e}", path.display())),
        _ => Failure::Config(format!("{}: {e}", path.display())),
    })?;
    let mut frames: Vec<MeasurementFrame> = (1..=duration).map(|t| MeasurementFrame::new(t, Vec::new())).collect();
    let bad = |line: u64, msg: String| Failure::Config(format!("{}: line {line}: {msg}", path.display()));
    let headers = reader
        .headers()
        .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?
        .clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| bad(1, format!("missing column '{name}'")))
    };
    let cols = [column("scan")?, column("z1")?, column("z2")?, column("z3")?];
    for record in reader.records() {
        let record = record.map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize| record.get(cols[i]).unwrap_or("");
        let scan: usize = field(0).parse().map_err(|e| bad(line, format!("scan: {e}")))?;
        if scan < 1 || scan > duration {
            return Err(bad(line, format!("scan {scan} outside 1..={duration}")));
        }
        let mut z = Measurement::zeros();
        for (axis, col) in (1..4).enumerate() {
            z[axis] = field(col)
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| bad(line, format!("z{}: not a finite number", axis + 1)))?;
        }
        frames[scan - 1].measurements.push(z);
    }
    Ok(frames)
}

pub struct TrackArgs<'a> {
    pub config: Option<&'a Path>,
    pub out: &'a Path,
    pub seed: Option<u64>,
    pub runs: Option<usize>,
    pub l_scan: Option<Option<usize>>,
    pub frames: Option<&'a Path>,
    pub workers: Option<usize>,
}

pub fn track(a: &TrackArgs) -> Result<(), Failure> {
    let mut l = load(a.config, a.seed)?;
    if let Some(runs) = a.runs {
        l.exp.runs = runs;
        set(&mut l.doc, "monte_carlo", "runs", json!(runs));
    }
    if let Some(window) = a.l_scan {
        l.exp.filter.l_scan = window;
        set(&mut l.doc, "filter", "l_scan", json!(window));
    }
    if l.exp.runs < 1 {
        return Err(Failure::Config("runs must be >= 1".into()));
    }
    let e = &l.exp;

    let results = match a.frames {
        Some(path) => {
            if e.runs != 1 {
                return Err(Failure::Config("--frames tracks a single recorded stream; use --runs 1".into()));
            }
            let frames = read_frames(path, e.scenario.duration)?;
            let truth = generate_truth(&e.scenario)?;
            let (estimates, elapsed_s, diagnostics) = run_filter(&e.model, &e.filter, &frames)?;
            let series = evaluate_run(&estimates, &truth, &e.metric, e.scenario.classes.len());
            let runs = vec![RunOutput {
                run: 0,
                seed: e.scenario.seed,
                elapsed_s,
                truth,
                series,
                estimates: Some(estimates),
                diagnostics,
            }];
            let aggregate = aggregate(&runs, e.scenario.duration, e.scenario.classes.len());
            RunResults { runs, aggregate }
        }
        None => run_monte_carlo(
            &e.scenario,
            &e.model,
            &e.filter,
            &e.metric,
            &MonteCarloOptions {
                runs: e.runs,
                hold_truth_fixed: e.hold_truth_fixed,
                keep_estimates: true,
                workers: a.workers,
            },
        )?,
    };

    make_dir(a.out)?;
    write_estimates(a.out, e, &results)?;
    write_metrics(a.out, e, &results)?;
    let summary = summary(&l, &results);
    let path = a.out.join("summary.json");
    write_json(&path, &summary).map_err(io(&path))?;
    println!(
        "tracked {} run(s), mean TM {:.3}, mean {:.3}s per run -> {}",
        results.runs.len(),
        mean(&results.aggregate.mean_tm),
        results.aggregate.mean_elapsed_s,
        a.out.display()
    );
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

fn class_name(e: &Experiment, c: usize) -> &str {
    e.scenario.classes.iter().nth(c).map_or("", |s| s.name.as_str())
}

fn write_estimates(out: &Path, e: &Experiment, results: &RunResults) -> Result<(), Failure> {
    let path = out.join("estimates.csv");
    let mut t = Table::create(
        &path,
        &[
            "run", "scan", "track_id", "birth", "length", "class", "class_prob", "weight", "x", "vx", "y", "vy", "z",
            "vz", "trajectory",
        ],
    )
    .map_err(io(&path))?;
    let tpath = out.join("trajectories.csv");
    let mut traj = Table::create(&tpath, &["run", "track_id", "scan", "x", "vx", "y", "vy", "z", "vz"])
        .map_err(io(&tpath))?;
    let last = e.scenario.duration;
    for run in &results.runs {
        let Some(per_scan) = &run.estimates else { continue };
        for (i, ests) in per_scan.iter().enumerate() {
            let scan = i + 1;
            for est in ests {
                let mut row = vec![
                    run.run.to_string(),
                    scan.to_string(),
                    est.label.to_string(),
                    est.birth.to_string(),
                    est.length.to_string(),
                    class_name(e, est.class_id.0).to_string(),
                    num(est.class_prob),
                    num(est.weight),
                ];
                let x = est.states.last().copied().unwrap_or_default();
                row.extend(x.iter().map(|v| num(*v)));
                row.push(if scan == last {
                    format!("trajectories.csv#run={}&track_id={}", run.run, est.label)
                } else {
                    String::new()
                });
                t.row(row).map_err(io(&path))?;
                if scan == last {
                    for (k, x) in est.states.iter().enumerate() {
                        let mut r = vec![run.run.to_string(), est.label.to_string(), (est.birth + k).to_string()];
                        r.extend(x.iter().map(|v| num(*v)));
                        traj.row(r).map_err(io(&tpath))?;
                    }
                }
            }
        }
    }
    t.finish().map_err(io(&path))?;
    traj.finish().map_err(io(&tpath))
}

fn write_metrics(out: &Path, e: &Experiment, results: &RunResults) -> Result<(), Failure> {
    let path = out.join("metrics.csv");
    let mut t = Table::create(&path, &["run", "scan", "metric", "class", "value"]).map_err(io(&path))?;
    for run in &results.runs {
        let s = &run.series;
        for i in 0..s.tm.len() {
            let (r, scan) = (run.run.to_string(), (i + 1).to_string());
            t.row([r.as_str(), &scan, "tm", "", &num(s.tm[i])]).map_err(io(&path))?;
            for c in 0..e.scenario.classes.len() {
                let name = class_name(e, c);
                let acc = if s.class_matched[i][c] == 0 {
                    f64::NAN
                } else {
                    s.class_correct[i][c] as f64 / s.class_matched[i][c] as f64
                };
                for (metric, value) in [
                    ("true_card", s.true_card[i][c].to_string()),
                    ("est_card", s.est_card[i][c].to_string()),
                    ("class_matched", s.class_matched[i][c].to_string()),
                    ("class_acc", num(acc)),
                ] {
                    t.row([r.as_str(), &scan, metric, name, &value]).map_err(io(&path))?;
                }
            }
        }
    }
    t.finish().map_err(io(&path))
}

fn summary(l: &Loaded, results: &RunResults) -> Value {
    let e = &l.exp;
    let agg = &results.aggregate;
    let series = |v: &[f64]| Value::Array(v.iter().map(|x| json_num(*x)).collect());
    let mut card = BTreeMap::new();
    let mut acc = BTreeMap::new();
    for c in 0..e.scenario.classes.len() {
        let name = class_name(e, c).to_string();
        card.insert(
            name.clone(),
            json!({ "true": series(&agg.mean_true_card[c]), "estimated": series(&agg.mean_est_card[c]) }),
        );
        acc.insert(name, series(&agg.class_acc[c]));
    }
    let total: f64 = results.runs.iter().map(|r| r.elapsed_s).sum();
    json!({
        "scenario_digest": l.digest(),
        "runs": results.runs.len(),
        "seed": e.scenario.seed,
        "l_scan": e.filter.l_scan,
        "per_scan": {
            "tm": series(&agg.mean_tm),
            "rms_tm": series(&agg.rms_tm),
            "card_by_class": card,
            "class_acc": acc,
        },
        "timing_seconds": {
            "mean_per_run": json_num(agg.mean_elapsed_s),
            "total_filter": json_num(total),
        },
    })
}

pub fn sweep(
    config: Option<&Path>,
    out: &Path,
    seed: Option<u64>,
    runs: Option<usize>,
    windows: &[usize],
    workers: Option<usize>,
) -> Result<(), Failure> {
    if windows.is_empty() {
        return Err(Failure::Config("--l-scan needs at least one window length".into()));
    }
    if windows.contains(&0) {
        return Err(Failure::Config("window lengths must be >= 1".into()));
    }
    let mut l = load(config, seed)?;
    if let Some(r) = runs {
        l.exp.runs = r;
    }
    let e = &l.exp;
    let opts = MonteCarloOptions {
        runs: e.runs,
        hold_truth_fixed: e.hold_truth_fixed,
        keep_estimates: false,
        workers,
    };
    make_dir(out)?;
    let path = out.join("lsweep.csv");
    let mut sweep = Table::create(&path, &["l_scan", "scan", "mean_tm", "rms_tm"]).map_err(io(&path))?;
    let tpath = out.join("timing.csv");
    let mut timing = Table::create(&tpath, &["l_scan", "mean_seconds_per_run"]).map_err(io(&tpath))?;
    for &window in windows {
        let cfg = FilterConfig {
            l_scan: Some(window),
            ..e.filter.clone()
        };
        let res = run_monte_carlo(&e.scenario, &e.model, &cfg, &e.metric, &opts)?;
        let agg = &res.aggregate;
        for (i, (m, r)) in agg.mean_tm.iter().zip(&agg.rms_tm).enumerate() {
            sweep
                .row([window.to_string(), (i + 1).to_string(), num(*m), num(*r)])
                .map_err(io(&path))?;
        }
        timing
            .row([window.to_string(), num(agg.mean_elapsed_s)])
            .map_err(io(&tpath))?;
        println!(
            "L={window}: mean RMS TM {:.3}, {:.3}s per run",
            mean(&agg.rms_tm),
            agg.mean_elapsed_s
        );
    }
    sweep.finish().map_err(io(&path))?;
    timing.finish().map_err(io(&tpath))
}
