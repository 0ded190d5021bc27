//! Command-line front end: gen, train, simulate, eval and probe.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::controllers::{run_episode_with, Controller, ControllerKind, RunLog, Task};
use crate::dataset::{generate_dataset, meta_path, write_dataset, AgentRange, GenConfig};
use crate::error::{Error, Result};
use crate::eval::{
    colour_scores, default_sensing_grid, distance_stats, emit_csv, fmt_num, linspace, probe_position, probe_sensing,
    r2_score, recorded_speeds, replay_speeds, roc_auc, run_episodes, scalability_sweep, wrong_colour_rate, Csv,
    EvalSetup, ProbeAxis, SweepResult,
};
use crate::nn::{load_checkpoint, save_checkpoint, Arch, MlpParams};
use crate::sensing::InputKind;
use crate::training::{train, write_loss_csv, Pipeline, TrainConfig};
use crate::world::{AvgGap, WorldConfig, WorldState, ROBOT_LENGTH};

#[derive(Debug, Parser)]
#[command(name = "swarmline", version, about = "Robot-row simulator, demonstrations, imitation training and evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a demonstration dataset (JSON Lines plus a .meta.json sidecar)
    Gen(GenArgs),
    /// Train one of the three networks on a dataset
    Train(TrainArgs),
    /// Run one episode and write its trace
    Simulate(SimulateArgs),
    /// Run matched evaluation episodes and write metric CSVs
    Eval(EvalArgs),
    /// Probe a controller's response to synthetic sensing or positions
    Probe(ProbeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GenController {
    Expert,
    Manual,
    ManualColour,
}

impl From<GenController> for ControllerKind {
    fn from(c: GenController) -> Self {
        match c {
            GenController::Expert => ControllerKind::Expert,
            GenController::Manual => ControllerKind::Manual,
            GenController::ManualColour => ControllerKind::ManualColour,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct WorldArgs {
    /// Number of robots: a count (`5`) or an inclusive range (`5-10`)
    #[arg(long, default_value = "5-10")]
    pub n_agents: AgentRange,
    /// Mean spawn gap in cm, or `variable` for a per-run draw from [5, 24)
    #[arg(long, default_value = "variable")]
    pub avg_gap: AvgGap,
    /// Disable the multiplicative motor noise
    #[arg(long)]
    pub no_noise: bool,
}

impl WorldArgs {
    fn world(&self) -> WorldConfig {
        let w = WorldConfig::default().with_gap(self.avg_gap);
        if self.no_noise {
            w.without_noise()
        } else {
            w
        }
    }
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, value_enum, default_value = "expert")]
    pub controller: GenController,
    #[arg(long, default_value_t = 1000)]
    pub runs: u64,
    #[command(flatten)]
    pub world: WorldArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "dataset.jsonl")]
    pub out: PathBuf,
    /// Worker threads (defaults to all cores); output does not depend on it
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_parser = parse_pipeline)]
    pub pipeline: Option<Pipeline>,
    #[arg(long, value_parser = parse_input)]
    pub input: Option<InputKind>,
    /// JSON training config; flags override its fields
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Checkpoint path; the loss curve goes next to it as `<stem>.loss.csv`
    #[arg(long, default_value = "model.json")]
    pub out: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value = "expert", value_parser = parse_controller)]
    pub controller: ControllerKind,
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Sensing view; inferred from the checkpoint when omitted
    #[arg(long, value_parser = parse_input)]
    pub input: Option<InputKind>,
    #[arg(long, default_value_t = 5)]
    pub n_agents: usize,
    #[arg(long, default_value = "variable")]
    pub avg_gap: AvgGap,
    #[arg(long)]
    pub no_noise: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 40)]
    pub steps: usize,
    #[arg(long, default_value = "trace.csv")]
    pub trace_out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    /// Equal spacing between the two end robots
    #[value(name = "distribute", alias = "1")]
    Distribute,
    /// Colour the first half blue and the rest red
    #[value(name = "colour", alias = "2")]
    Colour,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, value_enum, default_value = "distribute")]
    pub task: TaskArg,
    /// Learned controller checkpoint
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, value_parser = parse_input)]
    pub input: Option<InputKind>,
    /// Comma-separated baseline controllers (default: expert,manual or manual-colour)
    #[arg(long, value_delimiter = ',', value_parser = parse_controller)]
    pub baselines: Option<Vec<ControllerKind>>,
    #[arg(long, default_value_t = 100)]
    pub runs: u64,
    #[command(flatten)]
    pub world: WorldArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also sweep these row lengths (comma-separated)
    #[arg(long, value_delimiter = ',')]
    pub sweep: Option<Vec<usize>>,
    #[arg(long, default_value = "eval")]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProbeKind {
    Sensing,
    Position,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    #[arg(long, value_enum)]
    pub kind: ProbeKind,
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Non-network controller to probe (manual for sensing; expert or manual for position)
    #[arg(long, value_parser = parse_controller)]
    pub controller: Option<ControllerKind>,
    #[arg(long, value_parser = parse_input)]
    pub input: Option<InputKind>,
    /// Number of grid points over [0, 4500] (sensing) or between the two fixed robots (position)
    #[arg(long)]
    pub points: Option<usize>,
    #[arg(long, default_value_t = 100)]
    pub jitters: usize,
    #[arg(long, default_value_t = 0.0)]
    pub left_x: f64,
    #[arg(long, default_value_t = 60.0)]
    pub right_x: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "probe.csv")]
    pub out: PathBuf,
}

fn parse_pipeline(s: &str) -> std::result::Result<Pipeline, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_input(s: &str) -> std::result::Result<InputKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_controller(s: &str) -> std::result::Result<ControllerKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Exit status for a finished command: 0, 1 for runtime failures, 2 for usage errors.
pub fn exit_code(result: &Result<()>) -> i32 {
    match result {
        Ok(()) => 0,
        Err(e) if e.is_usage() => 2,
        Err(_) => 1,
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen(a) => with_jobs(a.jobs, || cmd_gen(&a)),
        Command::Train(a) => cmd_train(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Eval(a) => with_jobs(a.jobs, || cmd_eval(&a)),
        Command::Probe(a) => cmd_probe(&a),
    }
}

fn with_jobs(jobs: Option<usize>, f: impl FnOnce() -> Result<()> + Send) -> Result<()> {
    match jobs {
        None => f(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::config(e.to_string()))?
            .install(f),
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(())
}

pub fn cmd_gen(a: &GenArgs) -> Result<()> {
    let cfg = GenConfig {
        controller: a.controller.into(),
        n_runs: a.runs,
        n_agents: a.world.n_agents,
        world: a.world.world(),
        seed: a.seed,
    };
    let ds = generate_dataset(&cfg)?;
    ensure_parent(&a.out)?;
    write_dataset(&ds, &a.out)?;
    println!("runs: {}", ds.meta.n_runs);
    println!("records: {}", ds.meta.n_records);
    println!("hash: {}", ds.meta.content_hash);
    println!("wrote {} and {}", a.out.display(), meta_path(&a.out).display());
    Ok(())
}

/// `model.json` → `model.loss.csv`.
pub fn loss_path(checkpoint: &Path) -> PathBuf {
    checkpoint.with_extension("loss.csv")
}

pub fn cmd_train(a: &TrainArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(path) => TrainConfig::from_json(&fs::read_to_string(path)?)?,
        None => TrainConfig::new(a.pipeline.ok_or_else(|| Error::config("--pipeline or --config is required"))?),
    };
    if let Some(p) = a.pipeline {
        if p != cfg.pipeline {
            let (epochs, lr, batch_size) = p.defaults();
            cfg = TrainConfig { pipeline: p, epochs, lr, batch_size, ..cfg };
        }
    }
    if let Some(k) = a.input {
        cfg.input_kind = k;
    }
    if let Some(v) = a.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = a.lr {
        cfg.lr = v;
    }
    if let Some(v) = a.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(d) = &a.dataset {
        cfg.dataset = Some(d.clone());
    }
    cfg.checkpoint = None;
    cfg.validate()?;
    let out = train(&cfg)?;
    ensure_parent(&a.out)?;
    save_checkpoint(&out.best, &a.out)?;
    write_loss_csv(&out.curve, &loss_path(&a.out))?;
    let arch = cfg.pipeline.arch();
    println!("arch: {} {}->{}->{}->{}", arch, out.best.input_width(), 10, 10, arch.output_width());
    if let (Some(first), Some(last)) = (out.curve.first(), out.curve.last()) {
        println!("val loss: epoch 1 {} / epoch {} {}", fmt_num(first.val_loss), last.epoch, fmt_num(last.val_loss));
    }
    println!("best epoch: {}", out.best_epoch);
    println!("wrote {} and {}", a.out.display(), loss_path(&a.out).display());
    Ok(())
}

/// Sensing view a checkpoint was trained on, given its input width.
pub fn infer_input(model: &MlpParams, requested: Option<InputKind>) -> Result<InputKind> {
    let sensing = match model.arch {
        Arch::Distributed => model.input_width(),
        Arch::SingleComm => model.input_width().saturating_sub(2),
        Arch::Colour => return Ok(requested.unwrap_or(InputKind::ProxValues)),
    };
    match requested {
        Some(k) if k.width() == sensing => Ok(k),
        Some(k) => Err(Error::shape(format!("model expects {sensing} sensing values, {k} has {}", k.width()))),
        None => match sensing {
            7 => Ok(InputKind::ProxValues),
            14 => Ok(InputKind::AllSensors),
            w => Err(Error::shape(format!("no sensing view has {w} values"))),
        },
    }
}

fn model_kind(arch: Arch) -> ControllerKind {
    match arch {
        Arch::Distributed => ControllerKind::NetDistributed,
        Arch::SingleComm => ControllerKind::NetComm,
        Arch::Colour => ControllerKind::NetColour,
    }
}

fn build_controller(kind: ControllerKind, model: Option<&Path>, input: Option<InputKind>) -> Result<Controller> {
    match (kind.needs_model(), model) {
        (Some(_), None) => Err(Error::config(format!("controller `{kind}` needs --model"))),
        (Some(_), Some(path)) => {
            let params = load_checkpoint(path)?;
            let input = infer_input(&params, input)?;
            Controller::build(kind, Some(params), input)
        }
        (None, _) => Controller::build(kind, None, input.unwrap_or(InputKind::ProxValues)),
    }
}

pub fn trace_csv(log: &RunLog) -> String {
    let mut out = String::from("step,agent,x,goal,speed,tx_message,colour\n");
    for s in &log.steps {
        for i in 0..log.n_agents {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                s.step,
                i,
                fmt_num(s.positions[i]),
                fmt_num(log.goals[i]),
                fmt_num(s.speeds[i]),
                fmt_num(s.tx[i]),
                s.colours[i].label()
            ));
        }
    }
    let t = log.steps.len();
    for i in 0..log.n_agents {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            t,
            i,
            fmt_num(log.final_positions[i]),
            fmt_num(log.goals[i]),
            fmt_num(0.0),
            fmt_num(0.0),
            log.final_colours[i].label()
        ));
    }
    out
}

pub fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    let controller = build_controller(a.controller, a.model.as_deref(), a.input)?;
    let mut world_cfg = WorldConfig::default().with_agents(a.n_agents).with_gap(a.avg_gap);
    if a.no_noise {
        world_cfg = world_cfg.without_noise();
    }
    let world = WorldState::spawn(&world_cfg, a.seed)?;
    let log = run_episode_with(world, &controller, a.steps, false)?;
    ensure_parent(&a.trace_out)?;
    fs::write(&a.trace_out, trace_csv(&log))?;
    let final_err = log.final_errors();
    let movers = &final_err[1..final_err.len() - 1];
    println!("steps: {}", log.steps.len());
    match log.converged_at {
        Some(t) => println!("solved at step {t}"),
        None => println!("not solved within {} steps", a.steps),
    }
    println!("max mover error: {}", fmt_num(movers.iter().copied().fold(0.0, f64::max)));
    println!("wrote {}", a.trace_out.display());
    Ok(())
}

#[derive(Debug, Default, Serialize)]
struct ControllerSummary {
    final_median: Option<f64>,
    final_mean: Option<f64>,
    r2_vs_expert: Option<f64>,
    final_wrong_per_run: Option<f64>,
    final_wrong_fraction: Option<f64>,
    auc: Option<f64>,
}

pub fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let task = match a.task {
        TaskArg::Distribute => Task::Distribute,
        TaskArg::Colour => Task::Colour,
    };
    let mut controllers: Vec<(String, Controller)> = Vec::new();
    let baselines = a.baselines.clone().unwrap_or_else(|| match task {
        Task::Distribute => vec![ControllerKind::Expert, ControllerKind::Manual],
        Task::Colour => vec![ControllerKind::ManualColour],
    });
    for kind in baselines {
        let c = build_controller(kind, a.model.as_deref(), a.input)?;
        controllers.push((kind.name().to_string(), c));
    }
    if let Some(path) = &a.model {
        let params = load_checkpoint(path)?;
        let kind = model_kind(params.arch);
        if !controllers.iter().any(|(name, _)| name == kind.name()) {
            controllers.push((kind.name().to_string(), build_controller(kind, Some(path), a.input)?));
        }
    }
    for (name, c) in &controllers {
        if c.task() != task {
            let expected = match task {
                Task::Distribute => "a spacing controller",
                Task::Colour => "a colouring controller",
            };
            return Err(Error::Arch { expected: expected.into(), found: name.clone() });
        }
    }
    let setup = EvalSetup { n_runs: a.runs, n_agents: a.world.n_agents, world: a.world.world(), seed: a.seed };
    fs::create_dir_all(&a.out_dir)?;
    let expert_logs = match task {
        Task::Distribute => Some(run_episodes(&setup, &Controller::Expert)?),
        Task::Colour => None,
    };
    let mut summary = BTreeMap::new();
    for (name, controller) in &controllers {
        let logs = run_episodes(&setup, controller)?;
        let mut s = ControllerSummary::default();
        match task {
            Task::Distribute => {
                let series = distance_stats(&logs)?;
                emit_csv(&series.csv(), &a.out_dir.join(format!("distance_{name}.csv")))?;
                emit_csv(&series.mean_csv(), &a.out_dir.join(format!("distance_mean_{name}.csv")))?;
                s.final_median = series.final_median();
                s.final_mean = series.rows.last().map(|r| r.mean);
                let model = match controller {
                    Controller::NetDistributed { model, kind } | Controller::NetComm { model, kind } => Some((model, *kind)),
                    _ => None,
                };
                if let (Some((model, kind)), Some(expert)) = (model, &expert_logs) {
                    let pred = replay_speeds(model, kind, expert)?;
                    s.r2_vs_expert = r2_score(&pred, &recorded_speeds(expert)).ok();
                }
            }
            Task::Colour => {
                let series = wrong_colour_rate(&logs);
                emit_csv(&series.csv(), &a.out_dir.join(format!("wrong_colour_{name}.csv")))?;
                s.final_wrong_per_run = series.rows.last().map(|r| r.per_run);
                s.final_wrong_fraction = series.rows.last().map(|r| r.fraction);
                if let Controller::NetColour { .. } = controller {
                    let (scores, labels) = colour_scores(&logs)?;
                    let roc = roc_auc(&scores, &labels)?;
                    emit_csv(&roc.csv(), &a.out_dir.join(format!("roc_{name}.csv")))?;
                    s.auc = Some(roc.auc);
                }
            }
        }
        if let Some(ns) = &a.sweep {
            for (n, r) in scalability_sweep(controller, ns, &setup)? {
                let csv = match r {
                    SweepResult::Distance(m) => m.csv(),
                    SweepResult::WrongColour(w) => w.csv(),
                };
                emit_csv(&csv, &a.out_dir.join(format!("sweep_{name}_n{n}.csv")))?;
            }
        }
        println!("{name}: {}", serde_json::to_string(&s)?);
        summary.insert(name.clone(), s);
    }
    fs::write(a.out_dir.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    println!("wrote metrics to {}", a.out_dir.display());
    Ok(())
}

pub fn cmd_probe(a: &ProbeArgs) -> Result<()> {
    let controller = match (&a.model, a.controller) {
        (Some(path), _) => {
            let params = load_checkpoint(path)?;
            build_controller(model_kind(params.arch), Some(path), a.input)?
        }
        (None, Some(kind)) => build_controller(kind, None, a.input)?,
        (None, None) => return Err(Error::config("--model or --controller is required")),
    };
    let csv = match a.kind {
        ProbeKind::Sensing => {
            let grid = match a.points {
                Some(n) => linspace(0.0, 4500.0, n),
                None => default_sensing_grid(),
            };
            let front = probe_sensing(&controller, ProbeAxis::FrontOnly, &grid)?;
            let rear = probe_sensing(&controller, ProbeAxis::RearOnly, &grid)?;
            let mut csv = Csv::new(&["point", "intensity", "speed_front_only", "speed_rear_only"]);
            for (k, ((x, f), (_, r))) in front.iter().zip(&rear).enumerate() {
                csv.push(k, &[*x, *f, *r]);
            }
            csv
        }
        ProbeKind::Position => {
            let grid = linspace(a.left_x + ROBOT_LENGTH, a.right_x - ROBOT_LENGTH, a.points.unwrap_or(101));
            let pts = probe_position(&controller, a.left_x, a.right_x, &grid, a.jitters, a.seed)?;
            let mut csv = Csv::new(&["point", "x", "mean_speed", "std_speed"]);
            for (k, p) in pts.iter().enumerate() {
                csv.push(k, &[p.x, p.mean, p.std]);
            }
            csv
        }
    };
    ensure_parent(&a.out)?;
    emit_csv(&csv, &a.out)?;
    println!("wrote {} points to {}", csv.rows.len(), a.out.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> std::result::Result<Cli, clap::Error> {
        Cli::try_parse_from(std::iter::once("swarmline").chain(args.iter().copied()))
    }

    #[test]
    fn gen_defaults() {
        let Command::Gen(g) = parse(&["gen"]).unwrap().command else { panic!() };
        assert_eq!(g.controller, GenController::Expert);
        assert_eq!(g.runs, 1000);
        assert_eq!(g.world.n_agents, AgentRange { min: 5, max: 10 });
        assert_eq!(g.world.avg_gap, AvgGap::Variable);
    }

    #[test]
    fn bad_values_are_usage_errors() {
        let e = parse(&["gen", "--controller", "bogus"]).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        let e = parse(&["probe", "--kind", "bogus"]).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert_eq!(exit_code(&Err(Error::Arch { expected: "a".into(), found: "b".into() })), 2);
        assert_eq!(exit_code(&Err(Error::config("x"))), 1);
    }

    #[test]
    fn simulate_and_probe_defaults() {
        let Command::Simulate(s) = parse(&["simulate"]).unwrap().command else { panic!() };
        assert_eq!(s.steps, 40);
        let Command::Probe(p) = parse(&["probe", "--kind", "sensing", "--controller", "manual"]).unwrap().command else {
            panic!()
        };
        assert_eq!(p.jitters, 100);
        assert!(p.points.is_none());
    }

    #[test]
    fn input_inference() {
        let m = MlpParams::zeros(Arch::SingleComm, 16);
        assert_eq!(infer_input(&m, None).unwrap(), InputKind::AllSensors);
        let m = MlpParams::zeros(Arch::Distributed, 7);
        assert_eq!(infer_input(&m, Some(InputKind::ProxComm)).unwrap(), InputKind::ProxComm);
        assert!(matches!(infer_input(&m, Some(InputKind::AllSensors)), Err(Error::Shape(_))));
    }

    #[test]
    fn trace_has_a_row_per_agent_and_state() {
        let cfg = WorldConfig::default().with_agents(5).without_noise();
        let log = run_episode_with(WorldState::spawn(&cfg, 1).unwrap(), &Controller::Expert, 3, false).unwrap();
        let text = trace_csv(&log);
        assert_eq!(text.lines().count(), 1 + 4 * 5);
    }
}
