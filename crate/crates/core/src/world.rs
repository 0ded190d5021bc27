//! The one-dimensional robot row.
//!
//! Robots sit on the x-axis, all facing +x. The first and last robot never move
//! and act as walls; everyone in between is a mover. Positions are the centres
//! of the robot bodies, so two neighbours touch when their centres are exactly
//! one body length apart.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub const CONTROL_DT: f64 = 0.1;
pub const MAX_SPEED: f64 = 16.6;
pub const ROBOT_LENGTH: f64 = 10.9;
pub const WHEEL_BASE: f64 = 9.4;
pub const MOTOR_NOISE_REL: f64 = 0.027;
pub const MAX_STEPS: usize = 40;
pub const GOAL_TOLERANCE: f64 = 0.5;

/// Bounds of the per-run gap draw when the average gap is `variable`.
pub const VARIABLE_GAP_RANGE: (f64, f64) = (5.0, 24.0);

/// Average surface gap used at spawn.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AvgGap {
    Fixed(f64),
    /// A fresh gap is drawn per run from [`VARIABLE_GAP_RANGE`].
    Variable,
}

impl Serialize for AvgGap {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            AvgGap::Fixed(g) => s.serialize_f64(*g),
            AvgGap::Variable => s.serialize_str("variable"),
        }
    }
}

impl<'de> Deserialize<'de> for AvgGap {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(g) => Ok(AvgGap::Fixed(g)),
            Raw::Text(t) if t == "variable" => Ok(AvgGap::Variable),
            Raw::Text(t) => Err(serde::de::Error::custom(format!(
                "avg_gap must be a number or \"variable\", got \"{t}\""
            ))),
        }
    }
}

impl std::str::FromStr for AvgGap {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "variable" {
            return Ok(AvgGap::Variable);
        }
        s.parse::<f64>()
            .map(AvgGap::Fixed)
            .map_err(|_| Error::config(format!("invalid avg_gap `{s}`")))
    }
}

impl std::fmt::Display for AvgGap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AvgGap::Fixed(g) => write!(f, "{g}"),
            AvgGap::Variable => f.write_str("variable"),
        }
    }
}

/// Physical and bookkeeping parameters of one world.
///
/// `motor_noise_rel = 0` switches the motor noise off entirely; no random
/// numbers are drawn in that case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldConfig {
    pub n_agents: usize,
    pub avg_gap: AvgGap,
    pub dt: f64,
    pub max_speed: f64,
    pub robot_length: f64,
    pub wheel_base: f64,
    pub motor_noise_rel: f64,
    pub max_steps: usize,
    pub goal_tolerance: f64,
    pub rng_seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            n_agents: 5,
            avg_gap: AvgGap::Fixed(8.0),
            dt: CONTROL_DT,
            max_speed: MAX_SPEED,
            robot_length: ROBOT_LENGTH,
            wheel_base: WHEEL_BASE,
            motor_noise_rel: MOTOR_NOISE_REL,
            max_steps: MAX_STEPS,
            goal_tolerance: GOAL_TOLERANCE,
            rng_seed: 0,
        }
    }
}

impl WorldConfig {
    pub fn with_agents(mut self, n_agents: usize) -> Self {
        self.n_agents = n_agents;
        self
    }

    pub fn with_gap(mut self, avg_gap: AvgGap) -> Self {
        self.avg_gap = avg_gap;
        self
    }

    pub fn without_noise(mut self) -> Self {
        self.motor_noise_rel = 0.0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_agents < 3 {
            return Err(Error::config(format!(
                "n_agents must be at least 3, got {}",
                self.n_agents
            )));
        }
        let positive = [
            ("dt", self.dt),
            ("max_speed", self.max_speed),
            ("robot_length", self.robot_length),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.goal_tolerance.is_finite() && self.goal_tolerance >= 0.0) {
            return Err(Error::config("goal_tolerance must be non-negative"));
        }
        if !(self.motor_noise_rel.is_finite() && self.motor_noise_rel >= 0.0) {
            return Err(Error::config("motor_noise_rel must be non-negative"));
        }
        if let AvgGap::Fixed(g) = self.avg_gap {
            if !(g.is_finite() && g > 0.0) {
                return Err(Error::config(format!("avg_gap must be positive, got {g}")));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: WorldConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Colour {
    Red,
    Blue,
}

impl Colour {
    /// Dataset label: 1 for blue, 0 for red.
    pub fn label(self) -> u8 {
        match self {
            Colour::Blue => 1,
            Colour::Red => 0,
        }
    }

    pub fn from_label(label: u8) -> Self {
        if label == 1 {
            Colour::Blue
        } else {
            Colour::Red
        }
    }
}

/// Colour an agent must show: the first ceil(N/2) agents are blue, so for odd
/// rows the central agent belongs to the blue group.
pub fn target_colour(index: usize, n_agents: usize) -> Colour {
    if index < n_agents.div_ceil(2) {
        Colour::Blue
    } else {
        Colour::Red
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose1D {
    pub x: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub pose: Pose1D,
    pub target_speed: f64,
    pub colour: Colour,
    pub tx_message: f64,
    pub is_dead: bool,
}

/// Centre positions for a row whose surface gaps are `gaps`, with the first
/// robot at x = 0.
pub fn place_from_gaps(gaps: &[f64], robot_length: f64) -> Vec<f64> {
    let mut xs = Vec::with_capacity(gaps.len() + 1);
    xs.push(0.0);
    let mut x = 0.0;
    for g in gaps {
        x += g + robot_length;
        xs.push(x);
    }
    xs
}

/// Evenly spaced goals between the two extremes; the extremes map to themselves.
pub fn compute_goals(positions: &[f64]) -> Vec<f64> {
    let n = positions.len();
    match n {
        0 => Vec::new(),
        1 => positions.to_vec(),
        _ => {
            let first = positions[0];
            let last = positions[n - 1];
            let spacing = (last - first) / (n - 1) as f64;
            let mut goals: Vec<f64> = (0..n).map(|i| first + i as f64 * spacing).collect();
            goals[n - 1] = last;
            goals
        }
    }
}

#[derive(Debug, Clone)]
pub struct WorldState {
    pub config: WorldConfig,
    pub agents: Vec<AgentState>,
    pub goals: Vec<f64>,
    pub step: usize,
    /// Gap actually used at spawn (the drawn value when the config says `variable`).
    pub spawn_gap: f64,
    rng: ChaCha8Rng,
}

impl WorldState {
    /// Spawns a row. Gaps are drawn from Uniform[0, 2·avg_gap), colours are
    /// drawn uniformly, and every agent starts transmitting 0.
    pub fn spawn(config: &WorldConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let avg_gap = match config.avg_gap {
            AvgGap::Fixed(g) => g,
            AvgGap::Variable => rng.random_range(VARIABLE_GAP_RANGE.0..VARIABLE_GAP_RANGE.1),
        };
        let gaps: Vec<f64> = (1..config.n_agents)
            .map(|_| rng.random_range(0.0..2.0 * avg_gap))
            .collect();
        let positions = place_from_gaps(&gaps, config.robot_length);
        let colours: Vec<Colour> = (0..config.n_agents)
            .map(|_| if rng.random::<bool>() { Colour::Blue } else { Colour::Red })
            .collect();
        let mut world = Self::from_positions(config, &positions, rng)?;
        for (agent, colour) in world.agents.iter_mut().zip(colours) {
            agent.colour = colour;
        }
        world.spawn_gap = avg_gap;
        Ok(world)
    }

    /// Builds a world from explicit centre positions (ascending, non-overlapping).
    pub fn with_positions(config: &WorldConfig, positions: &[f64], seed: u64) -> Result<Self> {
        Self::from_positions(config, positions, ChaCha8Rng::seed_from_u64(seed))
    }

    fn from_positions(config: &WorldConfig, positions: &[f64], rng: ChaCha8Rng) -> Result<Self> {
        let n = positions.len();
        if n < 2 {
            return Err(Error::config("a world needs at least two robots"));
        }
        for w in positions.windows(2) {
            if !(w[1] - w[0] >= config.robot_length - 1e-9) {
                return Err(Error::config(format!(
                    "robots overlap: centres {} and {} closer than {}",
                    w[0], w[1], config.robot_length
                )));
            }
        }
        let mut config = config.clone();
        config.n_agents = n;
        let agents = positions
            .iter()
            .enumerate()
            .map(|(i, &x)| AgentState {
                pose: Pose1D { x },
                target_speed: 0.0,
                colour: Colour::Red,
                tx_message: 0.0,
                is_dead: i == 0 || i == n - 1,
            })
            .collect();
        let spawn_gap = match config.avg_gap {
            AvgGap::Fixed(g) => g,
            AvgGap::Variable => f64::NAN,
        };
        Ok(WorldState {
            goals: compute_goals(positions),
            config,
            agents,
            step: 0,
            spawn_gap,
            rng,
        })
    }

    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn positions(&self) -> Vec<f64> {
        self.agents.iter().map(|a| a.pose.x).collect()
    }

    pub fn colours(&self) -> Vec<Colour> {
        self.agents.iter().map(|a| a.colour).collect()
    }

    /// Surface gap to the robot in front (+x), if there is one.
    pub fn front_gap(&self, i: usize) -> Option<f64> {
        let next = self.agents.get(i + 1)?;
        Some(next.pose.x - self.agents[i].pose.x - self.config.robot_length)
    }

    /// Surface gap to the robot behind (−x), if there is one.
    pub fn rear_gap(&self, i: usize) -> Option<f64> {
        let prev = self.agents.get(i.checked_sub(1)?)?;
        Some(self.agents[i].pose.x - prev.pose.x - self.config.robot_length)
    }

    /// Absolute distance from goal of every agent.
    pub fn goal_errors(&self) -> Vec<f64> {
        self.agents
            .iter()
            .zip(&self.goals)
            .map(|(a, g)| (a.pose.x - g).abs())
            .collect()
    }

    /// True iff every mover is within `goal_tolerance` of its goal (inclusive).
    pub fn is_converged(&self) -> bool {
        let tol = self.config.goal_tolerance;
        self.agents
            .iter()
            .zip(&self.goals)
            .filter(|(a, _)| !a.is_dead)
            .all(|(a, g)| (a.pose.x - g).abs() <= tol)
    }

    pub fn colours_correct(&self) -> bool {
        let n = self.n_agents();
        self.agents
            .iter()
            .enumerate()
            .all(|(i, a)| a.colour == target_colour(i, n))
    }

    /// Advances the world by one control step.
    ///
    /// Commanded speeds are clamped to ±max_speed, perturbed multiplicatively
    /// by the motor noise and integrated. Overlaps are then removed by pushing
    /// movers back to surface contact, which keeps the ordering invariant.
    pub fn step(&mut self, speeds: &[f64]) -> Result<()> {
        if speeds.len() != self.agents.len() {
            return Err(Error::config(format!(
                "expected {} speeds, got {}",
                self.agents.len(),
                speeds.len()
            )));
        }
        let cfg = &self.config;
        for (agent, &speed) in self.agents.iter_mut().zip(speeds) {
            if agent.is_dead {
                agent.target_speed = 0.0;
                continue;
            }
            let commanded = if speed.is_finite() {
                speed.clamp(-cfg.max_speed, cfg.max_speed)
            } else {
                0.0
            };
            agent.target_speed = commanded;
            let actual = if cfg.motor_noise_rel > 0.0 {
                let z: f64 = self.rng.sample(StandardNormal);
                commanded * (1.0 + cfg.motor_noise_rel * z)
            } else {
                commanded
            };
            agent.pose.x += actual * cfg.dt;
        }
        self.resolve_collisions();
        self.step += 1;
        Ok(())
    }

    fn resolve_collisions(&mut self) {
        let n = self.agents.len();
        let len = self.config.robot_length;
        for i in 1..n - 1 {
            let min_x = self.agents[i - 1].pose.x + len;
            if self.agents[i].pose.x < min_x {
                self.agents[i].pose.x = min_x;
            }
        }
        for i in (1..n - 1).rev() {
            let max_x = self.agents[i + 1].pose.x - len;
            if self.agents[i].pose.x > max_x {
                self.agents[i].pose.x = max_x;
            }
        }
    }
}
