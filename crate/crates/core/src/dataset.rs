//! Demonstration datasets: generation, JSON-Lines storage, run-level splits
//! and the sequence views used by the communication pipelines.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha1::{Digest, Sha1};

use crate::controllers::{run_episode, Controller, ControllerKind, Task};
use crate::error::{Error, Result};
use crate::nn::SequenceBatch;
use crate::rng::{rng_for, KEY_N_AGENTS, KEY_SPLIT};
use crate::sensing::{InputKind, INTENSITY_MAX};
use crate::world::{AvgGap, WorldConfig, WorldState};

/// One (run, step, agent) row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunRecord {
    pub run_id: u64,
    pub step: usize,
    pub agent_id: usize,
    pub pose_x: f64,
    pub prox_values: [f64; 7],
    pub prox_comm: [f64; 7],
    pub rx_left: f64,
    pub rx_right: f64,
    pub motor_target: f64,
    pub tx_message: f64,
    pub colour: u8,
    pub goal_x: f64,
    pub n_agents: usize,
    pub avg_gap: f64,
}

impl RunRecord {
    pub fn is_dead(&self) -> bool {
        self.agent_id == 0 || self.agent_id + 1 == self.n_agents
    }

    /// Raw sensing for `kind`, in intensity units.
    pub fn sensing(&self, kind: InputKind) -> Vec<f64> {
        match kind {
            InputKind::ProxValues => self.prox_values.to_vec(),
            InputKind::ProxComm => self.prox_comm.to_vec(),
            InputKind::AllSensors => self.prox_values.iter().chain(&self.prox_comm).copied().collect(),
        }
    }
}

/// Inclusive range for the number of robots per run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentRange {
    pub min: usize,
    pub max: usize,
}

impl AgentRange {
    pub fn fixed(n: usize) -> Self {
        AgentRange { min: n, max: n }
    }
}

impl Default for AgentRange {
    fn default() -> Self {
        AgentRange { min: 5, max: 10 }
    }
}

impl FromStr for AgentRange {
    type Err = Error;

    /// Accepts `7`, `5-10` or `5..=10`.
    fn from_str(s: &str) -> Result<Self> {
        let parse = |t: &str| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| Error::config(format!("bad agent count `{t}`")))
        };
        let range = if let Some((a, b)) = s.split_once("..=").or_else(|| s.split_once('-')) {
            AgentRange { min: parse(a)?, max: parse(b)? }
        } else {
            AgentRange::fixed(parse(s)?)
        };
        if range.min > range.max {
            return Err(Error::config(format!("empty agent range `{s}`")));
        }
        Ok(range)
    }
}

impl fmt::Display for AgentRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.min == self.max {
            write!(f, "{}", self.min)
        } else {
            write!(f, "{}-{}", self.min, self.max)
        }
    }
}

#[derive(Debug, Clone)]
pub struct GenConfig {
    pub controller: ControllerKind,
    pub n_runs: u64,
    pub n_agents: AgentRange,
    /// Per-run physics; `n_agents` is overwritten from the range and
    /// `avg_gap` may be `variable`.
    pub world: WorldConfig,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            controller: ControllerKind::Expert,
            n_runs: 1000,
            n_agents: AgentRange::default(),
            world: WorldConfig::default().with_gap(AvgGap::Variable),
            seed: 0,
        }
    }
}

/// Sidecar stored next to each dataset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub n_runs: u64,
    pub seed: u64,
    pub controller: String,
    pub n_agents: AgentRange,
    pub avg_gap: AvgGap,
    pub motor_noise_rel: f64,
    pub max_steps: usize,
    pub n_records: usize,
    pub content_hash: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub records: Vec<RunRecord>,
    pub meta: DatasetMeta,
}

fn controller_for_generation(kind: ControllerKind) -> Result<Controller> {
    match kind {
        ControllerKind::Expert | ControllerKind::Manual | ControllerKind::ManualColour => {
            Controller::build(kind, None, InputKind::ProxValues)
        }
        other => Err(Error::UnknownController(format!(
            "{other} (datasets are generated with expert, manual or manual-colour)"
        ))),
    }
}

/// Number of robots and world for one run. Identical for every controller
/// given the same (seed, run_id).
pub fn run_world(cfg: &GenConfig, run_id: u64) -> Result<WorldState> {
    let run_seed = cfg.seed ^ run_id;
    let n = rng_for(run_seed, KEY_N_AGENTS).random_range(cfg.n_agents.min..=cfg.n_agents.max);
    let world_cfg = cfg.world.clone().with_agents(n);
    WorldState::spawn(&world_cfg, run_seed)
}

/// Episode horizon for a task: the step cap, or N for colouring rows longer than it.
pub fn horizon(task: Task, max_steps: usize, n_agents: usize) -> usize {
    match task {
        Task::Distribute => max_steps,
        Task::Colour => max_steps.max(n_agents),
    }
}

fn records_for_run(cfg: &GenConfig, controller: &Controller, run_id: u64) -> Result<Vec<RunRecord>> {
    let world = run_world(cfg, run_id)?;
    let n = world.n_agents();
    let log = run_episode(world, controller, horizon(controller.task(), cfg.world.max_steps, n))?;
    let mut out = Vec::with_capacity(log.steps.len() * n);
    for s in &log.steps {
        for i in 0..n {
            let f = &s.frames[i];
            out.push(RunRecord {
                run_id,
                step: s.step,
                agent_id: i,
                pose_x: s.positions[i],
                prox_values: f.prox_values,
                prox_comm: f.prox_comm,
                rx_left: f.rx_left,
                rx_right: f.rx_right,
                motor_target: s.speeds[i],
                tx_message: s.tx[i],
                colour: s.decided_colours[i].label(),
                goal_x: log.goals[i],
                n_agents: n,
                avg_gap: log.spawn_gap,
            });
        }
    }
    Ok(out)
}

/// Runs `n_runs` episodes (in parallel) and assembles them ordered by
/// (run_id, step, agent_id).
pub fn generate_dataset(cfg: &GenConfig) -> Result<Dataset> {
    if cfg.n_agents.min > cfg.n_agents.max {
        return Err(Error::config("empty agent range"));
    }
    if let AvgGap::Fixed(g) = cfg.world.avg_gap {
        if !(g > 0.0) {
            return Err(Error::config("empty gap range"));
        }
    }
    let controller = controller_for_generation(cfg.controller)?;
    let runs: Vec<Vec<RunRecord>> = (0..cfg.n_runs)
        .into_par_iter()
        .map(|run_id| records_for_run(cfg, &controller, run_id))
        .collect::<Result<_>>()?;
    let records: Vec<RunRecord> = runs.into_iter().flatten().collect();
    let meta = DatasetMeta {
        n_runs: cfg.n_runs,
        seed: cfg.seed,
        controller: cfg.controller.name().to_string(),
        n_agents: cfg.n_agents,
        avg_gap: cfg.world.avg_gap,
        motor_noise_rel: cfg.world.motor_noise_rel,
        max_steps: cfg.world.max_steps,
        n_records: records.len(),
        content_hash: content_hash(encode_records(&records).as_bytes()),
    };
    Ok(Dataset { records, meta })
}

/// One JSON object per line, in the given order.
pub fn encode_records(records: &[RunRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("records always serialise"));
        out.push('\n');
    }
    out
}

pub fn decode_records(text: &str) -> Result<Vec<RunRecord>> {
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: RunRecord = serde_json::from_str(line).map_err(|e| Error::Decode { line: k + 1, message: e.to_string() })?;
        if rec.colour > 1 {
            return Err(Error::Decode { line: k + 1, message: format!("colour must be 0 or 1, got {}", rec.colour) });
        }
        out.push(rec);
    }
    Ok(out)
}

/// Git-style blob hash: SHA-1 over `blob <len>\0` followed by the bytes.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha1::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// `data.jsonl` → `data.meta.json`.
pub fn meta_path(path: &Path) -> PathBuf {
    path.with_extension("meta.json")
}

pub fn write_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    fs::write(path, encode_records(&dataset.records))?;
    fs::write(meta_path(path), serde_json::to_string_pretty(&dataset.meta)? + "\n")?;
    Ok(())
}

pub fn read_records(path: &Path) -> Result<Vec<RunRecord>> {
    decode_records(&fs::read_to_string(path)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub val_frac: f64,
    pub test_frac: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(seed: u64) -> Self {
        SplitSpec { train_frac: 0.6, val_frac: 0.2, test_frac: 0.2, seed }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<u64>,
    pub val: Vec<u64>,
    pub test: Vec<u64>,
}

/// Shuffles whole runs and cuts them ⌊train·n⌋ / ⌊val·n⌋ / remainder.
pub fn shuffle_split(run_ids: &[u64], spec: &SplitSpec) -> Result<Split> {
    let fracs = [spec.train_frac, spec.val_frac, spec.test_frac];
    if fracs.iter().any(|f| !(0.0..=1.0).contains(f)) || (fracs.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::config("split fractions must be in [0, 1] and sum to 1"));
    }
    let mut ids: Vec<u64> = run_ids.to_vec();
    ids.sort_unstable();
    ids.dedup();
    if ids.len() < 5 {
        return Err(Error::EmptySplit(format!("need at least 5 runs to split, have {}", ids.len())));
    }
    ids.shuffle(&mut rng_for(spec.seed, KEY_SPLIT));
    let n = ids.len() as f64;
    let n_train = (spec.train_frac * n).floor() as usize;
    let n_val = (spec.val_frac * n).floor() as usize;
    let test = ids.split_off(n_train + n_val);
    let val = ids.split_off(n_train);
    Ok(Split { train: ids, val, test })
}

/// One run's records grouped as `[step][agent]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Run {
    pub run_id: u64,
    pub n_agents: usize,
    pub steps: Vec<Vec<RunRecord>>,
}

/// Groups records by run, checking that every step has one record per agent.
pub fn group_runs(records: &[RunRecord]) -> Result<BTreeMap<u64, Run>> {
    let mut by_run: BTreeMap<u64, BTreeMap<usize, Vec<RunRecord>>> = BTreeMap::new();
    for r in records {
        by_run.entry(r.run_id).or_default().entry(r.step).or_default().push(r.clone());
    }
    let mut out = BTreeMap::new();
    for (run_id, steps) in by_run {
        let mut grouped = Vec::with_capacity(steps.len());
        let mut n_agents = None;
        for (_, mut agents) in steps {
            agents.sort_by_key(|r| r.agent_id);
            let n = agents[0].n_agents;
            let complete = agents.len() == n && agents.iter().enumerate().all(|(i, r)| r.agent_id == i && r.n_agents == n);
            if !complete || n_agents.is_some_and(|m| m != n) {
                return Err(Error::config(format!("run {run_id} has an incomplete or inconsistent step")));
            }
            n_agents = Some(n);
            grouped.push(agents);
        }
        out.insert(run_id, Run { run_id, n_agents: n_agents.unwrap_or(0), steps: grouped });
    }
    Ok(out)
}

/// What a sequence is supervised on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SequenceTarget {
    /// Motor target from the chosen sensing; the two end robots are masked.
    Speed(InputKind),
    /// Colour label from no sensing at all; every robot is supervised.
    Colour,
}

/// Sliding windows of `seq_len` consecutive steps with stride 1.
pub fn build_sequences(run: &Run, seq_len: usize, target: SequenceTarget) -> Vec<SequenceBatch> {
    let n = run.n_agents;
    if seq_len == 0 || run.steps.len() < seq_len {
        return Vec::new();
    }
    let mask: Vec<bool> = (0..n)
        .map(|i| match target {
            SequenceTarget::Speed(_) => i != 0 && i + 1 != n,
            SequenceTarget::Colour => true,
        })
        .collect();
    run.steps
        .windows(seq_len)
        .map(|window| {
            let inputs = window
                .iter()
                .map(|agents| {
                    agents
                        .iter()
                        .map(|r| match target {
                            SequenceTarget::Speed(kind) => r.sensing(kind).iter().map(|v| v / INTENSITY_MAX).collect(),
                            SequenceTarget::Colour => Vec::new(),
                        })
                        .collect()
                })
                .collect();
            let targets = window
                .iter()
                .map(|agents| {
                    agents
                        .iter()
                        .map(|r| match target {
                            SequenceTarget::Speed(_) => r.motor_target,
                            SequenceTarget::Colour => f64::from(r.colour),
                        })
                        .collect()
                })
                .collect();
            SequenceBatch { seq_len, n_agents: n, n_real: n, inputs, targets, mask: mask.clone() }
        })
        .collect()
}

/// Extends the agent axis to `n_max` with silent, unsupervised slots.
pub fn pad_to_max(batch: &SequenceBatch, n_max: usize) -> Result<SequenceBatch> {
    batch.validate()?;
    if batch.n_agents > n_max {
        return Err(Error::shape(format!("{} agents exceed the padding size {n_max}", batch.n_agents)));
    }
    let width = batch.inputs.first().and_then(|s| s.first()).map_or(0, Vec::len);
    let extra = n_max - batch.n_agents;
    let mut out = batch.clone();
    out.n_agents = n_max;
    for step in &mut out.inputs {
        step.extend(std::iter::repeat_n(vec![0.0; width], extra));
    }
    for step in &mut out.targets {
        step.extend(std::iter::repeat_n(0.0, extra));
    }
    out.mask.extend(std::iter::repeat_n(false, extra));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controllers::expert_velocity;
    use crate::world::{Pose1D, MAX_SPEED};

    fn small(controller: ControllerKind, n_runs: u64) -> GenConfig {
        GenConfig { controller, n_runs, seed: 11, ..GenConfig::default() }
    }

    #[test]
    fn empty_dataset() {
        let ds = generate_dataset(&small(ControllerKind::Expert, 0)).unwrap();
        assert!(ds.records.is_empty());
        assert_eq!(encode_records(&ds.records), "");
        assert_eq!(ds.meta.content_hash, "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
        assert!(decode_records("").unwrap().is_empty());
    }

    #[test]
    fn records_are_ordered_and_complete() {
        let ds = generate_dataset(&small(ControllerKind::Expert, 12)).unwrap();
        let runs = group_runs(&ds.records).unwrap();
        assert_eq!(runs.len(), 12);
        for run in runs.values() {
            assert!((5..=10).contains(&run.n_agents));
            assert!(!run.steps.is_empty() && run.steps.len() <= 40);
        }
        let keys: Vec<_> = ds.records.iter().map(|r| (r.run_id, r.step, r.agent_id)).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        assert!(ds.records.iter().all(|r| r.motor_target.abs() <= MAX_SPEED));
    }

    #[test]
    fn expert_targets_recompute_from_pose() {
        let ds = generate_dataset(&small(ControllerKind::Expert, 5)).unwrap();
        for r in &ds.records {
            let expected = if r.is_dead() { 0.0 } else { expert_velocity(Pose1D { x: r.pose_x }, r.goal_x) };
            assert_eq!(r.motor_target, expected);
        }
    }

    #[test]
    fn generation_is_reproducible() {
        let cfg = small(ControllerKind::Manual, 6);
        let a = encode_records(&generate_dataset(&cfg).unwrap().records);
        let b = encode_records(&generate_dataset(&cfg).unwrap().records);
        assert_eq!(a, b);
    }

    #[test]
    fn noise_free_expert_ends_on_goal() {
        let mut cfg = small(ControllerKind::Expert, 20);
        cfg.n_agents = AgentRange::fixed(5);
        cfg.world = cfg.world.without_noise();
        let runs = group_runs(&generate_dataset(&cfg).unwrap().records).unwrap();
        for run in runs.values() {
            // The run stops inside the tolerance; the last recorded command lands exactly.
            for r in run.steps.last().unwrap() {
                assert_eq!(r.pose_x + r.motor_target * 0.1, r.goal_x);
            }
        }
    }

    #[test]
    fn network_controllers_cannot_generate() {
        let cfg = small(ControllerKind::NetComm, 1);
        assert!(matches!(generate_dataset(&cfg), Err(Error::UnknownController(_))));
    }

    #[test]
    fn missing_field_names_its_line() {
        let ds = generate_dataset(&small(ControllerKind::Expert, 1)).unwrap();
        let text = encode_records(&ds.records[..3]);
        let lines: Vec<&str> = text.lines().collect();
        let broken = lines[1].replace("\"motor_target\"", "\"motor_targ\"");
        let bad = format!("{}\n{}\n{}\n", lines[0], broken, lines[2]);
        match decode_records(&bad) {
            Err(Error::Decode { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected decode error, got {other:?}"),
        }
    }

    #[test]
    fn split_sizes() {
        let ids: Vec<u64> = (0..1000).collect();
        let s = shuffle_split(&ids, &SplitSpec::new(3)).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (600, 200, 200));
        assert_eq!(s, shuffle_split(&ids, &SplitSpec::new(3)).unwrap());
        let s7 = shuffle_split(&(0..7).collect::<Vec<_>>(), &SplitSpec::new(0)).unwrap();
        assert_eq!((s7.train.len(), s7.val.len(), s7.test.len()), (4, 1, 2));
        assert!(shuffle_split(&[0, 1, 2, 3], &SplitSpec::new(0)).is_err());
    }

    #[test]
    fn sequences_overlap_by_one_step() {
        let ds = generate_dataset(&small(ControllerKind::Expert, 3)).unwrap();
        let runs = group_runs(&ds.records).unwrap();
        let run = runs.values().find(|r| r.steps.len() >= 3).unwrap();
        let seqs = build_sequences(run, 2, SequenceTarget::Speed(InputKind::ProxValues));
        assert_eq!(seqs.len(), run.steps.len() - 1);
        assert_eq!(seqs[0].inputs[1], seqs[1].inputs[0]);
        assert!(!seqs[0].mask[0] && seqs[0].mask[1] && !seqs[0].mask[run.n_agents - 1]);
        let colour = build_sequences(run, 2, SequenceTarget::Colour);
        assert!(colour[0].mask.iter().all(|&m| m));
        assert!(colour[0].inputs[0][0].is_empty());
    }

    #[test]
    fn short_runs_give_no_sequences() {
        let run = Run { run_id: 0, n_agents: 3, steps: vec![Vec::new()] };
        assert!(build_sequences(&run, 2, SequenceTarget::Colour).is_empty());
    }

    #[test]
    fn padding() {
        let ds = generate_dataset(&small(ControllerKind::Expert, 2)).unwrap();
        let run = group_runs(&ds.records).unwrap().into_values().next().unwrap();
        let seq = build_sequences(&run, 2, SequenceTarget::Speed(InputKind::AllSensors)).remove(0);
        assert_eq!(pad_to_max(&seq, seq.n_agents).unwrap(), seq);
        let padded = pad_to_max(&seq, 12).unwrap();
        assert_eq!(padded.n_real, seq.n_agents);
        assert_eq!(padded.inputs[0][11], vec![0.0; 14]);
        assert!(!padded.mask[11]);
        assert!(pad_to_max(&seq, seq.n_agents - 1).is_err());
    }

    #[test]
    fn agent_range_parsing() {
        assert_eq!("5-10".parse::<AgentRange>().unwrap(), AgentRange { min: 5, max: 10 });
        assert_eq!("5..=10".parse::<AgentRange>().unwrap(), AgentRange { min: 5, max: 10 });
        assert_eq!("7".parse::<AgentRange>().unwrap(), AgentRange::fixed(7));
        assert!("9-4".parse::<AgentRange>().is_err());
    }
}
