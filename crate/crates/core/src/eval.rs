//! Metrics, response probes, matched evaluation episodes and CSV output.

use std::fs;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;

use crate::controllers::{run_episode_with, Controller, RunLog, Task};
use crate::dataset::{horizon, run_world, AgentRange, GenConfig};
use crate::error::{Error, Result};
use crate::nn::{Arch, MlpParams};
use crate::rng::rng_for;
use crate::sensing::{build_frame, sense_all, FlatComm, InputKind, BL, BR, FC, INTENSITY_MAX};
use crate::world::{target_colour, WorldConfig, WorldState, ROBOT_LENGTH};

/// Coefficient of determination `1 − SS_res / SS_tot`.
pub fn r2_score(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() || target.len() < 2 {
        return Err(Error::shape("r2 needs two equal-length vectors of at least two values"));
    }
    let mean = target.iter().sum::<f64>() / target.len() as f64;
    let ss_tot: f64 = target.iter().map(|y| (y - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::Undefined("r2 of a constant target".into()));
    }
    let ss_res: f64 = pred.iter().zip(target).map(|(p, y)| (y - p).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Quantile of ascending `sorted` by linear interpolation between closest
/// ranks: position `h = (n − 1)·p`.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricRow {
    pub step: usize,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    pub d10: f64,
    pub d90: f64,
    pub mean: f64,
}

impl MetricRow {
    fn from_sample(step: usize, mut xs: Vec<f64>) -> Self {
        xs.sort_by(f64::total_cmp);
        MetricRow {
            step,
            median: quantile(&xs, 0.5),
            q25: quantile(&xs, 0.25),
            q75: quantile(&xs, 0.75),
            d10: quantile(&xs, 0.1),
            d90: quantile(&xs, 0.9),
            mean: xs.iter().sum::<f64>() / xs.len() as f64,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricSeries {
    pub rows: Vec<MetricRow>,
}

impl MetricSeries {
    pub fn final_median(&self) -> Option<f64> {
        self.rows.last().map(|r| r.median)
    }

    pub fn csv(&self) -> Csv {
        let mut csv = Csv::new(&["step", "median", "q25", "q75", "d10", "d90"]);
        for r in &self.rows {
            csv.push(r.step, &[r.median, r.q25, r.q75, r.d10, r.d90]);
        }
        csv
    }

    pub fn mean_csv(&self) -> Csv {
        let mut csv = Csv::new(&["step", "mean"]);
        for r in &self.rows {
            csv.push(r.step, &[r.mean]);
        }
        csv
    }
}

fn longest(logs: &[RunLog]) -> usize {
    logs.iter().map(|l| l.steps.len()).max().unwrap_or(0)
}

/// Per-step distance-from-goal aggregates over the moving robots of every run.
/// Step `t` is the state after `t` steps, for `t` in `0..=horizon`; runs that
/// ended earlier hold their final state.
pub fn distance_stats(logs: &[RunLog]) -> Result<MetricSeries> {
    if logs.is_empty() {
        return Err(Error::EmptySplit("no runs to aggregate".into()));
    }
    let rows = (0..=longest(logs))
        .map(|t| {
            let sample: Vec<f64> = logs
                .iter()
                .flat_map(|log| {
                    let n = log.n_agents;
                    log.errors_at(t).into_iter().enumerate().filter(move |(i, _)| *i != 0 && *i + 1 != n).map(|(_, e)| e)
                })
                .collect();
            MetricRow::from_sample(t, sample)
        })
        .collect();
    Ok(MetricSeries { rows })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WrongColourRow {
    pub step: usize,
    /// Wrongly coloured robots divided by the number of runs.
    pub per_run: f64,
    /// Wrongly coloured robots divided by the number of robots.
    pub fraction: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct WrongColourSeries {
    pub rows: Vec<WrongColourRow>,
}

impl WrongColourSeries {
    pub fn csv(&self) -> Csv {
        let mut csv = Csv::new(&["step", "wrong_per_run", "wrong_fraction"]);
        for r in &self.rows {
            csv.push(r.step, &[r.per_run, r.fraction]);
        }
        csv
    }
}

/// Shown colour of every robot compared with its half of the row, per step.
pub fn wrong_colour_rate(logs: &[RunLog]) -> WrongColourSeries {
    if logs.is_empty() {
        return WrongColourSeries::default();
    }
    let total: usize = logs.iter().map(|l| l.n_agents).sum();
    let rows = (0..=longest(logs))
        .map(|t| {
            let wrong: usize = logs
                .iter()
                .map(|log| {
                    let n = log.n_agents;
                    log.colours_at(t).iter().enumerate().filter(|&(i, &c)| c != target_colour(i, n)).count()
                })
                .sum();
            WrongColourRow { step: t, per_run: wrong as f64 / logs.len() as f64, fraction: wrong as f64 / total as f64 }
        })
        .collect();
    WrongColourSeries { rows }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    /// (fpr, tpr), from (0, 0) to (1, 1).
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

impl RocCurve {
    pub fn csv(&self) -> Csv {
        let mut csv = Csv::new(&["point", "fpr", "tpr"]);
        for (k, (f, t)) in self.points.iter().enumerate() {
            csv.push(k, &[*f, *t]);
        }
        csv
    }
}

/// ROC by sweeping the threshold down through the distinct scores; tied
/// scores move both rates at once. The area is accumulated in integer pair
/// counts, so it equals the tie-corrected Mann-Whitney statistic.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<RocCurve> {
    if scores.len() != labels.len() {
        return Err(Error::shape("scores and labels differ in length"));
    }
    let pos = labels.iter().filter(|&&l| l).count() as u64;
    let neg = labels.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Undefined("ROC needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp, mut twice_area) = (0u64, 0u64, 0u64);
    let mut k = 0;
    while k < order.len() {
        let s = scores[order[k]];
        let (tp0, fp0) = (tp, fp);
        while k < order.len() && scores[order[k]] == s {
            if labels[order[k]] {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        twice_area += (fp - fp0) * (tp + tp0);
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    Ok(RocCurve { points, auc: twice_area as f64 / (2 * pos * neg) as f64 })
}

/// Which side of a probed robot sees a neighbour.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeAxis {
    FrontOnly,
    RearOnly,
}

impl std::str::FromStr for ProbeAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "front_only" | "front" => Ok(ProbeAxis::FrontOnly),
            "rear_only" | "rear" => Ok(ProbeAxis::RearOnly),
            _ => Err(Error::config(format!("unknown probe axis `{s}`"))),
        }
    }
}

/// `n` evenly spaced values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect(),
    }
}

/// Sensing probe grid: 0 to 4500 in steps of 10.
pub fn default_sensing_grid() -> Vec<f64> {
    linspace(0.0, 4500.0, 451)
}

/// Synthetic frame with intensity `x` on the front centre sensor or on both
/// rear sensors. The communication view mirrors the proximity view and the
/// received messages are 0.
pub fn probe_frame(axis: ProbeAxis, x: f64) -> crate::sensing::SensorFrame {
    let mut pv = [0.0; 7];
    match axis {
        ProbeAxis::FrontOnly => pv[FC] = x,
        ProbeAxis::RearOnly => {
            pv[BL] = x;
            pv[BR] = x;
        }
    }
    build_frame(pv, FlatComm { prox_comm: pv, rx_left: 0.0, rx_right: 0.0 })
}

/// Speed decided for each grid intensity.
pub fn probe_sensing(controller: &Controller, axis: ProbeAxis, grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    grid.iter().map(|&x| Ok((x, controller.speed_from_frame(&probe_frame(axis, x))?))).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositionPoint {
    pub x: f64,
    pub mean: f64,
    pub std: f64,
}

/// Moves one robot between two stationary ones and records the speed it
/// decides. Each grid position is measured `jitters` times with the pose
/// perturbed by Uniform[−0.5, 0.5] cm (drawn in antithetic pairs).
pub fn probe_position(
    controller: &Controller,
    left_x: f64,
    right_x: f64,
    grid: &[f64],
    jitters: usize,
    seed: u64,
) -> Result<Vec<PositionPoint>> {
    if !(left_x < right_x - 2.0 * ROBOT_LENGTH) {
        return Err(Error::config("the two stationary robots leave no room for a third"));
    }
    if jitters == 0 {
        return Err(Error::config("at least one measurement per position is needed"));
    }
    let cfg = WorldConfig::default().without_noise();
    let (lo, hi) = (left_x + ROBOT_LENGTH, right_x - ROBOT_LENGTH);
    grid.iter()
        .map(|&x| {
            let mut rng = rng_for(seed, 0);
            let mut eps = Vec::with_capacity(jitters);
            while eps.len() < jitters {
                let e: f64 = rng.random_range(-0.5..=0.5);
                eps.push(e);
                if eps.len() < jitters {
                    eps.push(-e);
                }
            }
            let speeds = eps
                .iter()
                .map(|e| {
                    let world = WorldState::with_positions(&cfg, &[left_x, (x + e).clamp(lo, hi), right_x], 0)?;
                    let frames = sense_all(&world, &[0.0; 3])?;
                    Ok(controller.decide(&world, &frames)?[1].speed)
                })
                .collect::<Result<Vec<f64>>>()?;
            let mean = speeds.iter().sum::<f64>() / speeds.len() as f64;
            let var = speeds.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / speeds.len() as f64;
            Ok(PositionPoint { x, mean, std: var.sqrt() })
        })
        .collect()
}

/// Evaluation episodes: the same (seed, run) always spawns the same row.
#[derive(Debug, Clone)]
pub struct EvalSetup {
    pub n_runs: u64,
    pub n_agents: AgentRange,
    pub world: WorldConfig,
    pub seed: u64,
}

impl EvalSetup {
    fn gen(&self) -> GenConfig {
        GenConfig {
            controller: crate::controllers::ControllerKind::Expert,
            n_runs: self.n_runs,
            n_agents: self.n_agents,
            world: self.world.clone(),
            seed: self.seed,
        }
    }

    pub fn world(&self, run_id: u64) -> Result<WorldState> {
        run_world(&self.gen(), run_id)
    }
}

/// Runs every evaluation episode for the full horizon (no early stop).
pub fn run_episodes(setup: &EvalSetup, controller: &Controller) -> Result<Vec<RunLog>> {
    (0..setup.n_runs)
        .into_par_iter()
        .map(|run_id| {
            let world = setup.world(run_id)?;
            let h = horizon(controller.task(), setup.world.max_steps, world.n_agents());
            run_episode_with(world, controller, h, false)
        })
        .collect()
}

/// Speeds a network would have decided along recorded trajectories, feeding
/// it the messages it emitted itself on the previous step.
pub fn replay_speeds(model: &MlpParams, kind: InputKind, logs: &[RunLog]) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for log in logs {
        let n = log.n_agents;
        let mut tx = vec![0.0; n];
        for step in &log.steps {
            let mut next = vec![0.0; n];
            for i in 0..n {
                let mut x: Vec<f64> = step.frames[i].view(kind).iter().map(|v| v / INTENSITY_MAX).collect();
                if model.arch == Arch::SingleComm {
                    x.push(if i > 0 { tx[i - 1] } else { 0.0 });
                    x.push(if i + 1 < n { tx[i + 1] } else { 0.0 });
                }
                let y = model.predict(&x)?;
                if let Some(c) = model.arch.message_channel() {
                    next[i] = y[c];
                }
                if i != 0 && i + 1 != n {
                    out.push(y[0]);
                }
            }
            tx = next;
        }
    }
    Ok(out)
}

/// Speeds the recorded controller decided for the moving robots, in the order
/// [`replay_speeds`] produces.
pub fn recorded_speeds(logs: &[RunLog]) -> Vec<f64> {
    logs.iter()
        .flat_map(|log| {
            let n = log.n_agents;
            log.steps.iter().flat_map(move |s| s.speeds[1..n - 1].to_vec())
        })
        .collect()
}

/// Blue-probability scores and true memberships of every decision in the logs.
pub fn colour_scores(logs: &[RunLog]) -> Result<(Vec<f64>, Vec<bool>)> {
    let (mut scores, mut labels) = (Vec::new(), Vec::new());
    for log in logs {
        let n = log.n_agents;
        for step in &log.steps {
            let probs = step
                .colour_probs
                .as_ref()
                .ok_or_else(|| Error::config("controller reports no colour probabilities"))?;
            for (i, &p) in probs.iter().enumerate() {
                scores.push(p);
                labels.push(target_colour(i, n).label() == 1);
            }
        }
    }
    Ok((scores, labels))
}

#[derive(Debug, Clone, PartialEq)]
pub enum SweepResult {
    Distance(MetricSeries),
    WrongColour(WrongColourSeries),
}

/// The chosen aggregate for each row length in `ns`.
pub fn scalability_sweep(controller: &Controller, ns: &[usize], setup: &EvalSetup) -> Result<Vec<(usize, SweepResult)>> {
    ns.iter()
        .map(|&n| {
            let s = EvalSetup { n_agents: AgentRange::fixed(n), ..setup.clone() };
            let logs = run_episodes(&s, controller)?;
            let r = match controller.task() {
                Task::Distribute => SweepResult::Distance(distance_stats(&logs)?),
                Task::Colour => SweepResult::WrongColour(wrong_colour_rate(&logs)),
            };
            Ok((n, r))
        })
        .collect()
}

/// Tabular output with a header row. The first column is an integer index;
/// the rest are printed with 9 significant digits.
#[derive(Debug, Clone, PartialEq)]
pub struct Csv {
    pub header: Vec<String>,
    pub rows: Vec<(usize, Vec<f64>)>,
}

pub fn fmt_num(v: f64) -> String {
    format!("{v:.8e}")
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Csv { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, index: usize, values: &[f64]) {
        self.rows.push((index, values.to_vec()));
    }

    pub fn render(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for (k, vals) in &self.rows {
            out.push_str(&k.to_string());
            for v in vals {
                out.push(',');
                out.push_str(&fmt_num(*v));
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Csv> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Decode { line: 1, message: "missing header".into() })?;
        let mut csv = Csv { header: header.split(',').map(str::to_string).collect(), rows: Vec::new() };
        for (k, line) in lines.enumerate() {
            let bad = |m: String| Error::Decode { line: k + 2, message: m };
            let mut cells = line.split(',');
            let idx = cells.next().unwrap_or("").parse::<usize>().map_err(|e| bad(e.to_string()))?;
            let vals = cells.map(|c| c.parse::<f64>().map_err(|e| bad(e.to_string()))).collect::<Result<_>>()?;
            csv.rows.push((idx, vals));
        }
        Ok(csv)
    }
}

pub fn emit_csv(csv: &Csv, path: &Path) -> Result<()> {
    fs::write(path, csv.render())?;
    Ok(())
}
