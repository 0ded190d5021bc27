//! Controllers for both tasks and the closed-loop episode runner.
//!
//! Every controller maps the current world (and each agent's sensor frame) to
//! one decision per agent: a wheel speed, a message to transmit on the next
//! step and, for the colouring task, an LED colour.

use std::str::FromStr;

use crate::error::{Error, Result};
use crate::nn::{Arch, MlpParams};
use crate::sensing::{sense_all, InputKind, SensorFrame, INTENSITY_MAX};
use crate::world::{target_colour, Colour, Pose1D, WorldState, MAX_SPEED};


/// Proportional gain of the expert on the signed distance (equals 1/dt).
pub const EXPERT_GAIN: f64 = 10.0;
/// Proportional gain of the hand-written sensor controller.
pub const MANUAL_KP: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlDecision {
    pub speed: f64,
    pub tx_message: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColourDecision {
    pub colour_prob_blue: f64,
    pub colour: Colour,
    pub tx_message: f64,
}

fn clamp_speed(v: f64) -> f64 {
    v.clamp(-MAX_SPEED, MAX_SPEED)
}

/// Omniscient controller: signed distance to the goal times 10, saturated at
/// the maximum wheel speed. Within one step of the goal it lands exactly on it.
pub fn expert_velocity(pose: Pose1D, goal: f64) -> f64 {
    clamp_speed(EXPERT_GAIN * (goal - pose.x))
}

/// Proportional controller on the front/rear intensity difference.
///
/// Each side takes the maximum over its sensors in the chosen view; the error
/// is normalised by the full-scale intensity and mapped to cm/s.
pub fn manual_p_velocity(frame: &SensorFrame, kind: InputKind) -> f64 {
    let view = frame.view(kind);
    let (front_idx, rear_idx) = kind.sides();
    let side_max = |idx: &[usize]| idx.iter().map(|&k| view[k]).fold(0.0, f64::max);
    let error = (side_max(&rear_idx) - side_max(&front_idx)) / INTENSITY_MAX;
    clamp_speed(MANUAL_KP * error * MAX_SPEED)
}

/// One decision of the hand-written colouring protocol.
///
/// `c_left` / `c_right` are the counters heard from each side, with 0 meaning
/// nothing was heard. Returns the counter to transmit and the LED colour.
pub fn manual_colour_step(c_left: u32, c_right: u32, n_agents: usize) -> (u32, Colour) {
    use Colour::{Blue, Red};
    let half = (n_agents / 2) as u32;
    if n_agents % 2 == 1 {
        if c_left == 0 {
            if c_right > half {
                (c_right - 1, Blue)
            } else if c_right == half {
                (c_right + 1, Blue)
            } else {
                (c_right + 1, Red)
            }
        } else if c_right == 0 {
            if c_left > half {
                (c_left - 1, Red)
            } else if c_left == half {
                (c_left + 1, Blue)
            } else {
                (c_left + 1, Blue)
            }
        } else if c_left > c_right {
            (c_right + 1, Red)
        } else {
            (c_left + 1, Blue)
        }
    } else if c_left == 0 {
        if c_right > half {
            (c_right, Blue)
        } else {
            (c_right + 1, Red)
        }
    } else if c_right == 0 {
        if c_left < half {
            (c_left + 1, Blue)
        } else {
            (c_left, Red)
        }
    } else if c_left > c_right {
        (c_right + 1, Red)
    } else if c_left < c_right {
        (c_left + 1, Blue)
    } else {
        (c_left, Red)
    }
}

/// Sensing as fed to the networks: intensities scaled to [0, 1].
pub fn network_sensing(view: &[f64]) -> Vec<f64> {
    view.iter().map(|v| v / INTENSITY_MAX).collect()
}

fn expect_model(model: &MlpParams, arch: Arch, width: usize) -> Result<()> {
    if model.arch != arch {
        return Err(Error::Arch { expected: arch.name().into(), found: model.arch.name().into() });
    }
    if model.input_width() != width {
        return Err(Error::shape(format!(
            "{arch} model takes {} inputs, the chosen sensing needs {width}",
            model.input_width()
        )));
    }
    Ok(())
}

pub fn learned_distributed(frame: &SensorFrame, kind: InputKind, model: &MlpParams) -> Result<ControlDecision> {
    expect_model(model, Arch::Distributed, kind.width())?;
    let out = model.predict(&network_sensing(frame.view(kind)))?;
    Ok(ControlDecision { speed: clamp_speed(out[0]), tx_message: 0.0 })
}

pub fn learned_comm(
    frame: &SensorFrame,
    rx_left: f64,
    rx_right: f64,
    kind: InputKind,
    model: &MlpParams,
) -> Result<ControlDecision> {
    expect_model(model, Arch::SingleComm, kind.width() + 2)?;
    let mut x = network_sensing(frame.view(kind));
    x.push(rx_left);
    x.push(rx_right);
    let out = model.predict(&x)?;
    Ok(ControlDecision { speed: clamp_speed(out[0]), tx_message: out[1] })
}

pub fn learned_colour(rx_left: f64, rx_right: f64, model: &MlpParams) -> Result<ColourDecision> {
    expect_model(model, Arch::Colour, 2)?;
    let out = model.predict(&[rx_left, rx_right])?;
    Ok(colour_decision(out[0], out[1]))
}

fn colour_decision(prob_blue: f64, tx_message: f64) -> ColourDecision {
    let colour = if prob_blue >= 0.5 { Colour::Blue } else { Colour::Red };
    ColourDecision { colour_prob_blue: prob_blue, colour, tx_message }
}

/// Which task a controller solves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    /// Spread the movers evenly between the two dead robots.
    Distribute,
    /// Colour the first half of the row blue and the rest red.
    Colour,
}

/// Controller designations accepted on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ControllerKind {
    Expert,
    Manual,
    ManualColour,
    NetDistributed,
    NetComm,
    NetColour,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 6] = [
        ControllerKind::Expert,
        ControllerKind::Manual,
        ControllerKind::ManualColour,
        ControllerKind::NetDistributed,
        ControllerKind::NetComm,
        ControllerKind::NetColour,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ControllerKind::Expert => "expert",
            ControllerKind::Manual => "manual",
            ControllerKind::ManualColour => "manual-colour",
            ControllerKind::NetDistributed => "net-distributed",
            ControllerKind::NetComm => "net-comm",
            ControllerKind::NetColour => "net-colour",
        }
    }

    pub fn needs_model(self) -> Option<Arch> {
        match self {
            ControllerKind::NetDistributed => Some(Arch::Distributed),
            ControllerKind::NetComm => Some(Arch::SingleComm),
            ControllerKind::NetColour => Some(Arch::Colour),
            _ => None,
        }
    }
}

impl FromStr for ControllerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ControllerKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownController(s.to_string()))
    }
}

impl std::fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone)]
pub enum Controller {
    Expert,
    Manual { kind: InputKind },
    ManualColour,
    NetDistributed { model: MlpParams, kind: InputKind },
    NetComm { model: MlpParams, kind: InputKind },
    NetColour { model: MlpParams },
}

/// Everything one agent decided on one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentDecision {
    pub speed: f64,
    pub tx_message: f64,
    /// Colour to show from the next step on; `None` keeps the current colour.
    pub colour: Option<Colour>,
    pub colour_prob_blue: Option<f64>,
}

impl Controller {
    /// Builds a controller from its designation. Network designations need a
    /// model of the matching architecture.
    pub fn build(kind: ControllerKind, model: Option<MlpParams>, input: InputKind) -> Result<Self> {
        let take = |arch: Arch| -> Result<MlpParams> {
            let model = model.clone().ok_or_else(|| {
                Error::config(format!("controller `{kind}` needs a model checkpoint"))
            })?;
            if model.arch != arch {
                return Err(Error::Arch { expected: arch.name().into(), found: model.arch.name().into() });
            }
            let width = arch.input_width(input.width());
            if model.input_width() != width {
                return Err(Error::shape(format!(
                    "model takes {} inputs but {input} needs {width}",
                    model.input_width()
                )));
            }
            Ok(model)
        };
        Ok(match kind {
            ControllerKind::Expert => Controller::Expert,
            ControllerKind::Manual => Controller::Manual { kind: input },
            ControllerKind::ManualColour => Controller::ManualColour,
            ControllerKind::NetDistributed => Controller::NetDistributed { model: take(Arch::Distributed)?, kind: input },
            ControllerKind::NetComm => Controller::NetComm { model: take(Arch::SingleComm)?, kind: input },
            ControllerKind::NetColour => Controller::NetColour { model: take(Arch::Colour)? },
        })
    }

    pub fn kind(&self) -> ControllerKind {
        match self {
            Controller::Expert => ControllerKind::Expert,
            Controller::Manual { .. } => ControllerKind::Manual,
            Controller::ManualColour => ControllerKind::ManualColour,
            Controller::NetDistributed { .. } => ControllerKind::NetDistributed,
            Controller::NetComm { .. } => ControllerKind::NetComm,
            Controller::NetColour { .. } => ControllerKind::NetColour,
        }
    }

    pub fn task(&self) -> Task {
        match self {
            Controller::ManualColour | Controller::NetColour { .. } => Task::Colour,
            _ => Task::Distribute,
        }
    }

    /// Speed a moving robot decides from a sensor frame alone.
    pub fn speed_from_frame(&self, frame: &SensorFrame) -> Result<f64> {
        match self {
            Controller::Manual { kind } => Ok(manual_p_velocity(frame, *kind)),
            Controller::NetDistributed { model, kind } => Ok(learned_distributed(frame, *kind, model)?.speed),
            Controller::NetComm { model, kind } => Ok(learned_comm(frame, frame.rx_left, frame.rx_right, *kind, model)?.speed),
            other => Err(Error::config(format!("controller `{}` does not map sensing to a speed", other.kind()))),
        }
    }

    /// Decisions for every agent given this step's sensor frames.
    pub fn decide(&self, world: &WorldState, frames: &[SensorFrame]) -> Result<Vec<AgentDecision>> {
        let n = world.n_agents();
        let mut out = Vec::with_capacity(n);
        for (i, (agent, frame)) in world.agents.iter().zip(frames).enumerate() {
            let mut d = AgentDecision { speed: 0.0, tx_message: 0.0, colour: None, colour_prob_blue: None };
            match self {
                Controller::Expert => {
                    if !agent.is_dead {
                        d.speed = expert_velocity(agent.pose, world.goals[i]);
                    }
                    d.colour = Some(target_colour(i, n));
                }
                Controller::Manual { kind } => {
                    if !agent.is_dead {
                        d.speed = manual_p_velocity(frame, *kind);
                    }
                }
                Controller::ManualColour => {
                    let (msg, colour) = manual_colour_agent(i, n, frame, agent.tx_message, agent.colour);
                    d.tx_message = msg;
                    d.colour = Some(colour);
                }
                Controller::NetDistributed { model, kind } => {
                    if !agent.is_dead {
                        d.speed = learned_distributed(frame, *kind, model)?.speed;
                    }
                }
                Controller::NetComm { model, kind } => {
                    let c = learned_comm(frame, frame.rx_left, frame.rx_right, *kind, model)?;
                    d.tx_message = c.tx_message;
                    if !agent.is_dead {
                        d.speed = c.speed;
                    }
                }
                Controller::NetColour { model } => {
                    let c = learned_colour(frame.rx_left, frame.rx_right, model)?;
                    d.tx_message = c.tx_message;
                    d.colour = Some(c.colour);
                    d.colour_prob_blue = Some(c.colour_prob_blue);
                }
            }
            out.push(d);
        }
        Ok(out)
    }
}

/// The colouring protocol as run by one robot inside the row.
///
/// The two end robots keep transmitting 1 and show the colour of their half.
/// An inner robot that has heard nothing from either side yet keeps silent
/// and keeps its colour; otherwise it follows [`manual_colour_step`].
fn manual_colour_agent(i: usize, n: usize, frame: &SensorFrame, last_tx: f64, colour: Colour) -> (f64, Colour) {
    if i == 0 || i + 1 == n {
        return (1.0, target_colour(i, n));
    }
    let counter = |v: f64| v.max(0.0).round() as u32;
    let (c_left, c_right) = (counter(frame.rx_left), counter(frame.rx_right));
    if c_left == 0 && c_right == 0 {
        return (last_tx, colour);
    }
    let (msg, colour) = manual_colour_step(c_left, c_right, n);
    (f64::from(msg), colour)
}

/// The row as it was at the start of one step, plus what every agent decided.
#[derive(Debug, Clone, PartialEq)]
pub struct StepLog {
    pub step: usize,
    pub positions: Vec<f64>,
    pub frames: Vec<SensorFrame>,
    /// Colours shown during this step.
    pub colours: Vec<Colour>,
    pub speeds: Vec<f64>,
    pub tx: Vec<f64>,
    /// Colours decided this step (shown from the next step on).
    pub decided_colours: Vec<Colour>,
    pub colour_probs: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub n_agents: usize,
    pub spawn_gap: f64,
    pub goals: Vec<f64>,
    pub steps: Vec<StepLog>,
    /// Step index at which the task was first found solved, if it was.
    pub converged_at: Option<usize>,
    /// State after the episode ended (equal to the last logged state on early stop).
    pub final_positions: Vec<f64>,
    pub final_colours: Vec<Colour>,
}

impl RunLog {
    /// Positions after `t` steps; past the end of the episode the final state is held.
    pub fn positions_at(&self, t: usize) -> &[f64] {
        self.steps.get(t).map_or(&self.final_positions, |s| &s.positions)
    }

    pub fn colours_at(&self, t: usize) -> &[Colour] {
        self.steps.get(t).map_or(&self.final_colours, |s| &s.colours)
    }

    /// Absolute goal error of every agent after `t` steps.
    pub fn errors_at(&self, t: usize) -> Vec<f64> {
        self.positions_at(t)
            .iter()
            .zip(&self.goals)
            .map(|(x, g)| (x - g).abs())
            .collect()
    }

    pub fn final_errors(&self) -> Vec<f64> {
        self.errors_at(usize::MAX)
    }
}

fn solved(world: &WorldState, task: Task) -> bool {
    match task {
        Task::Distribute => world.is_converged(),
        Task::Colour => world.colours_correct(),
    }
}

/// Runs sense → receive last step's messages → decide → transmit → move,
/// stopping once the task is solved or after `horizon` steps.
pub fn run_episode(world: WorldState, controller: &Controller, horizon: usize) -> Result<RunLog> {
    run_episode_with(world, controller, horizon, true)
}

/// As [`run_episode`]; with `stop_when_solved = false` the full horizon is run.
pub fn run_episode_with(
    mut world: WorldState,
    controller: &Controller,
    horizon: usize,
    stop_when_solved: bool,
) -> Result<RunLog> {
    let task = controller.task();
    let mut log = RunLog {
        n_agents: world.n_agents(),
        spawn_gap: world.spawn_gap,
        goals: world.goals.clone(),
        steps: Vec::with_capacity(horizon),
        converged_at: None,
        final_positions: Vec::new(),
        final_colours: Vec::new(),
    };
    for t in 0..horizon {
        let tx_prev: Vec<f64> = world.agents.iter().map(|a| a.tx_message).collect();
        let frames = sense_all(&world, &tx_prev)?;
        let decisions = controller.decide(&world, &frames)?;
        let is_solved = solved(&world, task);
        let colours = world.colours();
        let speeds: Vec<f64> = decisions.iter().map(|d| d.speed).collect();
        let tx: Vec<f64> = decisions.iter().map(|d| d.tx_message).collect();
        let decided_colours = decisions
            .iter()
            .zip(&colours)
            .map(|(d, &c)| d.colour.unwrap_or(c))
            .collect::<Vec<_>>();
        let colour_probs = decisions
            .iter()
            .map(|d| d.colour_prob_blue)
            .collect::<Option<Vec<f64>>>();
        log.steps.push(StepLog {
            step: t,
            positions: world.positions(),
            frames,
            colours,
            speeds: speeds.clone(),
            tx: tx.clone(),
            decided_colours: decided_colours.clone(),
            colour_probs,
        });
        if is_solved && log.converged_at.is_none() {
            log.converged_at = Some(t);
            if stop_when_solved {
                break;
            }
        }
        world.step(&speeds)?;
        for ((agent, m), c) in world.agents.iter_mut().zip(tx).zip(decided_colours) {
            agent.tx_message = m;
            agent.colour = c;
        }
    }
    log.final_positions = world.positions();
    log.final_colours = world.colours();
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensing::{build_frame, flatten_events, BL, BR, FC};
    use crate::world::WorldConfig;

    fn frame(front: f64, rear: f64) -> SensorFrame {
        let mut pv = [0.0; 7];
        pv[FC] = front;
        pv[BL] = rear;
        pv[BR] = rear;
        build_frame(pv, flatten_events(&[]))
    }

    #[test]
    fn expert_examples() {
        assert_eq!(expert_velocity(Pose1D { x: 4.0 }, 4.0), 0.0);
        assert_eq!(expert_velocity(Pose1D { x: 0.0 }, 1.0), 10.0);
        assert_eq!(expert_velocity(Pose1D { x: 0.0 }, 3.0), 16.6);
        assert_eq!(expert_velocity(Pose1D { x: 3.0 }, 0.0), -16.6);
    }

    #[test]
    fn manual_p_examples() {
        assert_eq!(manual_p_velocity(&frame(1000.0, 1000.0), InputKind::ProxValues), 0.0);
        assert_eq!(manual_p_velocity(&frame(4505.0, 0.0), InputKind::ProxValues), -16.6);
        let v = manual_p_velocity(&frame(0.0, 450.5), InputKind::ProxValues);
        assert!((v - 8.3).abs() < 1e-12);
    }

    #[test]
    fn colour_protocol_examples() {
        assert_eq!(manual_colour_step(0, 3, 5), (2, Colour::Blue));
        assert_eq!(manual_colour_step(2, 2, 5), (3, Colour::Blue));
        assert_eq!(manual_colour_step(3, 3, 6), (3, Colour::Red));
        // bootstrap from the ends
        assert_eq!(manual_colour_step(0, 0, 5), (1, Colour::Red));
        assert_eq!(manual_colour_step(1, 0, 6), (2, Colour::Blue));
    }

    #[test]
    fn zero_models_stand_still() {
        let f = frame(300.0, 20.0);
        let d = learned_distributed(&f, InputKind::ProxValues, &MlpParams::zeros(Arch::Distributed, 7)).unwrap();
        assert_eq!(d, ControlDecision { speed: 0.0, tx_message: 0.0 });
        let c = learned_comm(&f, 0.3, 0.9, InputKind::AllSensors, &MlpParams::zeros(Arch::SingleComm, 16)).unwrap();
        assert_eq!(c, ControlDecision { speed: 0.0, tx_message: 0.5 });
        let col = learned_colour(0.2, 0.1, &MlpParams::zeros(Arch::Colour, 2)).unwrap();
        assert_eq!(col.colour_prob_blue, 0.5);
        assert_eq!(col.colour, Colour::Blue);
        assert_eq!(colour_decision(0.49, 0.0).colour, Colour::Red);
    }

    #[test]
    fn learned_adapters_check_shapes() {
        let f = frame(0.0, 0.0);
        let d7 = MlpParams::zeros(Arch::Distributed, 7);
        assert!(learned_distributed(&f, InputKind::AllSensors, &d7).is_err());
        assert!(matches!(learned_colour(0.0, 0.0, &d7), Err(Error::Arch { .. })));
        assert!(learned_comm(&f, 0.0, 0.0, InputKind::ProxValues, &d7).is_err());
    }

    #[test]
    fn designations_parse() {
        for k in ControllerKind::ALL {
            assert_eq!(k.name().parse::<ControllerKind>().unwrap(), k);
        }
        assert!(matches!("bogus".parse::<ControllerKind>(), Err(Error::UnknownController(_))));
        let err = Controller::build(ControllerKind::NetColour, Some(MlpParams::zeros(Arch::Distributed, 7)), InputKind::ProxValues);
        assert!(matches!(err, Err(Error::Arch { .. })));
    }

    #[test]
    fn zero_speed_controller_keeps_the_row_still() {
        let cfg = WorldConfig::default();
        let world = WorldState::spawn(&cfg, 3).unwrap();
        let start = world.positions();
        let ctl = Controller::NetDistributed { model: MlpParams::zeros(Arch::Distributed, 7), kind: InputKind::ProxValues };
        let log = run_episode(world, &ctl, 40).unwrap();
        assert_eq!(log.steps.len(), 40);
        assert!(log.steps.iter().all(|s| s.positions == start));
    }

    #[test]
    fn expert_lands_exactly() {
        let cfg = WorldConfig::default().with_agents(6).without_noise();
        let world = WorldState::spawn(&cfg, 21).unwrap();
        let log = run_episode(world, &Controller::Expert, 40).unwrap();
        assert!(log.converged_at.is_some());
        assert!(log.final_errors().iter().all(|&e| e == 0.0));
    }

    #[test]
    fn messages_arrive_one_step_late() {
        let cfg = WorldConfig::default().with_agents(5).without_noise();
        let world = WorldState::with_positions(&cfg, &[0.0, 20.0, 40.0, 60.0, 80.0], 0).unwrap();
        let log = run_episode_with(world, &Controller::ManualColour, 3, false).unwrap();
        assert!(log.steps[0].frames.iter().all(|f| f.rx_left == 0.0 && f.rx_right == 0.0));
        assert_eq!(log.steps[0].tx[0], 1.0);
        assert_eq!(log.steps[1].frames[1].rx_left, 1.0);
    }
}
