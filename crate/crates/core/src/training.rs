//! The three imitation pipelines: per-record regression for the distributed
//! network and two-step unrolled training for the two message-passing networks.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{build_sequences, group_runs, pad_to_max, read_records, shuffle_split, RunRecord, SequenceTarget, SplitSpec};
use crate::error::{Error, Result};
use crate::nn::{
    adam_step, commnet_backward, commnet_unroll, save_checkpoint, sequence_loss, AdamState, Arch, MlpParams,
    SequenceBatch, SequenceLoss, SEQ_LEN,
};
use crate::rng::{rng_for, sub_seed, KEY_EPOCH, KEY_INIT, KEY_VAL_COMM};
use crate::sensing::{InputKind, INTENSITY_MAX};

/// Smallest agent axis the sequence pipelines pad to.
pub const N_MAX: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pipeline {
    Distributed,
    Comm,
    Colour,
}

impl Pipeline {
    pub fn name(self) -> &'static str {
        match self {
            Pipeline::Distributed => "distributed",
            Pipeline::Comm => "comm",
            Pipeline::Colour => "colour",
        }
    }

    pub fn arch(self) -> Arch {
        match self {
            Pipeline::Distributed => Arch::Distributed,
            Pipeline::Comm => Arch::SingleComm,
            Pipeline::Colour => Arch::Colour,
        }
    }

    /// (epochs, learning rate, batch size)
    pub fn defaults(self) -> (usize, f64, usize) {
        match self {
            Pipeline::Distributed => (50, 0.01, 100),
            Pipeline::Comm => (500, 0.001, 10),
            Pipeline::Colour => (100, 0.001, 10),
        }
    }
}

impl FromStr for Pipeline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Pipeline::Distributed, Pipeline::Comm, Pipeline::Colour]
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::config(format!("unknown pipeline `{s}`")))
    }
}

impl fmt::Display for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainConfig {
    pub pipeline: Pipeline,
    /// Ignored by the colour pipeline.
    pub input_kind: InputKind,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub dataset: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainConfigFile {
    pipeline: Pipeline,
    input_kind: Option<InputKind>,
    epochs: Option<usize>,
    lr: Option<f64>,
    batch_size: Option<usize>,
    seed: Option<u64>,
    dataset: Option<PathBuf>,
    checkpoint: Option<PathBuf>,
}

impl TrainConfig {
    pub fn new(pipeline: Pipeline) -> Self {
        let (epochs, lr, batch_size) = pipeline.defaults();
        TrainConfig {
            pipeline,
            input_kind: InputKind::ProxValues,
            epochs,
            lr,
            batch_size,
            seed: 0,
            dataset: None,
            checkpoint: None,
        }
    }

    pub fn with_input(mut self, kind: InputKind) -> Self {
        self.input_kind = kind;
        self
    }

    /// Parses a JSON document; fields left out take the pipeline's defaults.
    pub fn from_json(text: &str) -> Result<Self> {
        let f: TrainConfigFile = serde_json::from_str(text)?;
        let d = TrainConfig::new(f.pipeline);
        let cfg = TrainConfig {
            pipeline: f.pipeline,
            input_kind: f.input_kind.unwrap_or(d.input_kind),
            epochs: f.epochs.unwrap_or(d.epochs),
            lr: f.lr.unwrap_or(d.lr),
            batch_size: f.batch_size.unwrap_or(d.batch_size),
            seed: f.seed.unwrap_or(d.seed),
            dataset: f.dataset,
            checkpoint: f.checkpoint,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be positive"));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::config("lr must be a finite non-negative number"));
        }
        Ok(())
    }

    /// Network input width implied by the pipeline and input kind.
    pub fn input_width(&self) -> usize {
        self.pipeline.arch().input_width(self.input_kind.width())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LossCurve {
    pub epochs: Vec<EpochLoss>,
}

impl LossCurve {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn first(&self) -> Option<&EpochLoss> {
        self.epochs.first()
    }

    pub fn last(&self) -> Option<&EpochLoss> {
        self.epochs.last()
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters with the lowest validation loss.
    pub best: MlpParams,
    pub best_epoch: usize,
    /// Parameters after the last epoch.
    pub last: MlpParams,
    pub curve: LossCurve,
}

/// Runs the pipeline named in `cfg` on the dataset file it points to.
pub fn train(cfg: &TrainConfig) -> Result<TrainOutcome> {
    let path = cfg
        .dataset
        .as_deref()
        .ok_or_else(|| Error::config("no dataset path given"))?;
    let records = read_records(path)?;
    train_records(cfg, &records)
}

pub fn train_records(cfg: &TrainConfig, records: &[RunRecord]) -> Result<TrainOutcome> {
    match cfg.pipeline {
        Pipeline::Distributed => train_distributed(cfg, records),
        Pipeline::Comm => train_comm(cfg, records),
        Pipeline::Colour => train_colour(cfg, records),
    }
}

struct Splits {
    train: Vec<RunRecord>,
    val: Vec<RunRecord>,
}

fn split_records(cfg: &TrainConfig, records: &[RunRecord]) -> Result<Splits> {
    let mut ids: Vec<u64> = records.iter().map(|r| r.run_id).collect();
    ids.dedup();
    let split = shuffle_split(&ids, &SplitSpec::new(cfg.seed))?;
    let pick = |set: &[u64]| {
        let set: std::collections::HashSet<u64> = set.iter().copied().collect();
        records.iter().filter(|r| set.contains(&r.run_id)).cloned().collect::<Vec<_>>()
    };
    Ok(Splits { train: pick(&split.train), val: pick(&split.val) })
}

fn init_params(cfg: &TrainConfig) -> Result<MlpParams> {
    MlpParams::init(cfg.pipeline.arch(), cfg.input_width(), sub_seed(cfg.seed, KEY_INIT))
}

fn epoch_order(seed: u64, epoch: usize, n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_for(seed, KEY_EPOCH + epoch as u64));
    order
}

fn keep_if_best(
    cfg: &TrainConfig,
    params: &MlpParams,
    epoch: usize,
    val: f64,
    best: &mut Option<(f64, usize, MlpParams)>,
) -> Result<()> {
    if best.as_ref().is_none_or(|(b, _, _)| val < *b) {
        *best = Some((val, epoch, params.clone()));
        if let Some(path) = &cfg.checkpoint {
            save_checkpoint(params, path)?;
        }
    }
    Ok(())
}

fn finish(params: MlpParams, curve: LossCurve, best: Option<(f64, usize, MlpParams)>) -> TrainOutcome {
    let (best_epoch, best) = match best {
        Some((_, e, p)) => (e, p),
        None => (0, params.clone()),
    };
    TrainOutcome { best, best_epoch, last: params, curve }
}

type Sample = (Vec<f64>, f64);

fn samples(records: &[RunRecord], kind: InputKind) -> Vec<Sample> {
    records
        .iter()
        .filter(|r| !r.is_dead())
        .map(|r| (r.sensing(kind).iter().map(|v| v / INTENSITY_MAX).collect(), r.motor_target))
        .collect()
}

fn mse_over(params: &MlpParams, data: &[Sample]) -> Result<f64> {
    let mut total = 0.0;
    for (x, y) in data {
        total += (params.predict(x)?[0] - y).powi(2);
    }
    Ok(total / data.len() as f64)
}

/// Mini-batch Adam on (sensing → motor target) pairs of the moving robots.
pub fn train_distributed(cfg: &TrainConfig, records: &[RunRecord]) -> Result<TrainOutcome> {
    cfg.validate()?;
    let Splits { train, val } = split_records(cfg, records)?;
    let train = samples(&train, cfg.input_kind);
    let val = samples(&val, cfg.input_kind);
    if train.is_empty() || val.is_empty() {
        return Err(Error::EmptySplit("no moving-robot records in the train or validation split".into()));
    }
    let mut params = init_params(cfg)?;
    let mut adam = AdamState::new(&params, cfg.lr);
    let mut curve = LossCurve::default();
    let mut best = None;
    for epoch in 0..cfg.epochs {
        let order = epoch_order(cfg.seed, epoch, train.len());
        let mut epoch_loss = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let mut grads = params.zero_grads();
            let scale = 1.0 / chunk.len() as f64;
            for &k in chunk {
                let (x, y) = &train[k];
                let (out, tape) = params.forward(x)?;
                let err = out[0] - y;
                epoch_loss += err * err;
                let (g, _) = params.backward(&tape, &[2.0 * err * scale])?;
                grads.add_assign(&g);
            }
            if !epoch_loss.is_finite() {
                return Err(Error::NonFinite { epoch: epoch + 1, batch: b + 1 });
            }
            adam_step(&mut params, &grads, &mut adam)?;
        }
        let val_loss = mse_over(&params, &val)?;
        if !val_loss.is_finite() {
            return Err(Error::NonFinite { epoch: epoch + 1, batch: 0 });
        }
        curve.epochs.push(EpochLoss { epoch: epoch + 1, train_loss: epoch_loss / train.len() as f64, val_loss });
        keep_if_best(cfg, &params, epoch + 1, val_loss, &mut best)?;
    }
    Ok(finish(params, curve, best))
}

fn sequences(records: &[RunRecord], target: SequenceTarget) -> Result<Vec<SequenceBatch>> {
    let runs = group_runs(records)?;
    let n_max = runs.values().map(|r| r.n_agents).max().unwrap_or(0).max(N_MAX);
    let mut out = Vec::new();
    for run in runs.values() {
        for seq in build_sequences(run, SEQ_LEN, target) {
            out.push(pad_to_max(&seq, n_max)?);
        }
    }
    Ok(out)
}

/// Zero sentinels around a uniform draw for every real robot; padding stays silent.
pub fn random_init_comm(batch: &SequenceBatch, rng: &mut impl Rng) -> Vec<f64> {
    let mut comm = vec![0.0; batch.n_agents + 2];
    for slot in comm.iter_mut().skip(1).take(batch.n_real) {
        *slot = rng.random::<f64>();
    }
    comm
}

fn sequence_val_loss(params: &MlpParams, val: &[SequenceBatch], loss: SequenceLoss, seed: u64) -> Result<f64> {
    let mut rng = rng_for(seed, KEY_VAL_COMM);
    let (mut total, mut count) = (0.0, 0usize);
    for seq in val {
        let init = random_init_comm(seq, &mut rng);
        let unroll = commnet_unroll(params, seq, &init)?;
        total += sequence_loss(&unroll.outputs, seq, loss).0;
        count += seq.active_count();
    }
    Ok(total / count.max(1) as f64)
}

fn train_sequences(cfg: &TrainConfig, records: &[RunRecord], target: SequenceTarget, loss: SequenceLoss) -> Result<TrainOutcome> {
    cfg.validate()?;
    let Splits { train, val } = split_records(cfg, records)?;
    let train = sequences(&train, target)?;
    let val = sequences(&val, target)?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::EmptySplit("no two-step sequences in the train or validation split".into()));
    }
    let mut params = init_params(cfg)?;
    let mut adam = AdamState::new(&params, cfg.lr);
    let mut curve = LossCurve::default();
    let mut best = None;
    for epoch in 0..cfg.epochs {
        let order = epoch_order(cfg.seed, epoch, train.len());
        let mut comm_rng = rng_for(sub_seed(cfg.seed, KEY_VAL_COMM), KEY_EPOCH + epoch as u64);
        let (mut epoch_loss, mut epoch_count) = (0.0, 0usize);
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let mut pending = Vec::with_capacity(chunk.len());
            let mut count = 0usize;
            for &k in chunk {
                let seq = &train[k];
                let init = random_init_comm(seq, &mut comm_rng);
                let unroll = commnet_unroll(&params, seq, &init)?;
                let (l, upstream) = sequence_loss(&unroll.outputs, seq, loss);
                epoch_loss += l;
                count += seq.active_count();
                pending.push((unroll, upstream));
            }
            if !epoch_loss.is_finite() {
                return Err(Error::NonFinite { epoch: epoch + 1, batch: b + 1 });
            }
            epoch_count += count;
            if count == 0 {
                continue;
            }
            let scale = 1.0 / count as f64;
            let mut grads = params.zero_grads();
            for (unroll, mut upstream) in pending {
                upstream.iter_mut().flatten().flatten().for_each(|g| *g *= scale);
                grads.add_assign(&commnet_backward(&params, &unroll, &upstream)?);
            }
            adam_step(&mut params, &grads, &mut adam)?;
        }
        let val_loss = sequence_val_loss(&params, &val, loss, cfg.seed)?;
        if !val_loss.is_finite() {
            return Err(Error::NonFinite { epoch: epoch + 1, batch: 0 });
        }
        let train_loss = epoch_loss / epoch_count.max(1) as f64;
        curve.epochs.push(EpochLoss { epoch: epoch + 1, train_loss, val_loss });
        keep_if_best(cfg, &params, epoch + 1, val_loss, &mut best)?;
    }
    Ok(finish(params, curve, best))
}

/// Two-step unrolled training of the speed + message network (squared error
/// on the speed of the moving robots at both steps).
pub fn train_comm(cfg: &TrainConfig, records: &[RunRecord]) -> Result<TrainOutcome> {
    train_sequences(cfg, records, SequenceTarget::Speed(cfg.input_kind), SequenceLoss::Mse)
}

/// Two-step unrolled training of the colour + message network (cross entropy
/// on the colour of every robot at both steps).
pub fn train_colour(cfg: &TrainConfig, records: &[RunRecord]) -> Result<TrainOutcome> {
    train_sequences(cfg, records, SequenceTarget::Colour, SequenceLoss::Bce)
}

/// `epoch,train_loss,val_loss` rows.
pub fn loss_csv(curve: &LossCurve) -> String {
    let mut out = String::from("epoch,train_loss,val_loss\n");
    for e in &curve.epochs {
        out.push_str(&format!("{},{:.8e},{:.8e}\n", e.epoch, e.train_loss, e.val_loss));
    }
    out
}

pub fn write_loss_csv(curve: &LossCurve, path: &Path) -> Result<()> {
    fs::write(path, loss_csv(curve))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controllers::ControllerKind;
    use crate::dataset::{generate_dataset, AgentRange, GenConfig};
    use crate::nn::load_checkpoint;
    use crate::world::{AvgGap, WorldConfig};

    fn expert_records(n_runs: u64, n: usize, gap: AvgGap) -> Vec<RunRecord> {
        let cfg = GenConfig {
            controller: ControllerKind::Expert,
            n_runs,
            n_agents: AgentRange::fixed(n),
            world: WorldConfig::default().with_gap(gap),
            seed: 5,
        };
        generate_dataset(&cfg).unwrap().records
    }

    fn quick(pipeline: Pipeline, epochs: usize) -> TrainConfig {
        TrainConfig { epochs, ..TrainConfig::new(pipeline) }
    }

    #[test]
    fn defaults_per_pipeline() {
        assert_eq!(Pipeline::Distributed.defaults(), (50, 0.01, 100));
        assert_eq!(Pipeline::Comm.defaults(), (500, 0.001, 10));
        assert_eq!(Pipeline::Colour.defaults(), (100, 0.001, 10));
        let cfg = TrainConfig::from_json(r#"{"pipeline": "comm", "input_kind": "all_sensors", "seed": 4}"#).unwrap();
        assert_eq!((cfg.epochs, cfg.lr, cfg.batch_size, cfg.seed), (500, 0.001, 10, 4));
        assert_eq!(cfg.input_width(), 16);
        assert!(TrainConfig::from_json(r#"{"pipeline": "comm", "bogus": 1}"#).is_err());
    }

    #[test]
    fn fits_a_constant() {
        let mut records = expert_records(100, 5, AvgGap::Fixed(8.0));
        records.iter_mut().for_each(|r| r.motor_target = 3.0);
        let out = train_distributed(&quick(Pipeline::Distributed, 50), &records).unwrap();
        assert_eq!(out.curve.len(), 50);
        assert!(out.curve.last().unwrap().train_loss < 1e-3, "{:?}", out.curve.last());
    }

    #[test]
    fn zero_learning_rate_changes_nothing() {
        let records = expert_records(6, 5, AvgGap::Fixed(8.0));
        let cfg = TrainConfig { lr: 0.0, ..quick(Pipeline::Distributed, 3) };
        let out = train_distributed(&cfg, &records).unwrap();
        assert_eq!(out.last, init_params(&cfg).unwrap());
        let first = out.curve.first().unwrap().val_loss;
        assert!(out.curve.epochs.iter().all(|e| e.val_loss == first));

        let cfg = TrainConfig { lr: 0.0, ..quick(Pipeline::Colour, 2) };
        let out = train_colour(&cfg, &records).unwrap();
        assert_eq!(out.last, init_params(&cfg).unwrap());
        assert_eq!(out.curve.epochs[0].val_loss, out.curve.epochs[1].val_loss);
    }

    #[test]
    fn message_head_receives_gradient() {
        let records = expert_records(6, 5, AvgGap::Fixed(20.0));
        let cfg = TrainConfig { batch_size: 1_000_000, ..quick(Pipeline::Comm, 1) }.with_input(InputKind::AllSensors);
        let before = init_params(&cfg).unwrap();
        let out = train_comm(&cfg, &records).unwrap();
        let (w0, w1) = (&before.layers[2].weight, &out.last.layers[2].weight);
        assert!((0..w0.cols).any(|c| w0.get(1, c) != w1.get(1, c)));
    }

    #[test]
    fn all_blue_labels_fit() {
        let mut records = expert_records(10, 5, AvgGap::Variable);
        records.iter_mut().for_each(|r| r.colour = 1);
        let cfg = TrainConfig { lr: 0.01, ..quick(Pipeline::Colour, 60) };
        let out = train_colour(&cfg, &records).unwrap();
        assert!(out.curve.last().unwrap().train_loss < 0.01, "{:?}", out.curve.last());
    }

    #[test]
    fn too_few_runs_is_an_error() {
        let records = expert_records(3, 5, AvgGap::Fixed(8.0));
        assert!(matches!(train_distributed(&quick(Pipeline::Distributed, 1), &records), Err(Error::EmptySplit(_))));
        assert!(matches!(train_comm(&quick(Pipeline::Comm, 1), &[]), Err(Error::EmptySplit(_))));
    }

    #[test]
    fn training_is_deterministic_and_checkpoints_the_best() {
        let records = expert_records(8, 6, AvgGap::Fixed(10.0));
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = quick(Pipeline::Comm, 3).with_input(InputKind::ProxComm);
        cfg.checkpoint = Some(dir.path().join("m.json"));
        let a = train_comm(&cfg, &records).unwrap();
        let b = train_comm(&cfg, &records).unwrap();
        assert_eq!(a.curve, b.curve);
        assert_eq!(load_checkpoint(cfg.checkpoint.as_ref().unwrap()).unwrap(), a.best);
        let best_val = a.curve.epochs[a.best_epoch - 1].val_loss;
        assert!(a.curve.epochs.iter().all(|e| e.val_loss >= best_val));
    }

    #[test]
    fn loss_csv_layout() {
        let curve = LossCurve { epochs: vec![EpochLoss { epoch: 1, train_loss: 0.5, val_loss: 0.25 }] };
        assert_eq!(loss_csv(&curve), "epoch,train_loss,val_loss\n1,5.00000000e-1,2.50000000e-1\n");
    }
}
