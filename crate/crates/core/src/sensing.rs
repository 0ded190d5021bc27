//! Horizontal IR proximity sensing and proximity communication.
//!
//! In the 1D row only the front-centre sensor can see the robot ahead and the
//! two rear sensors see the robot behind; the four oblique front sensors always
//! read 0. Communication uses the same sensors with a longer range.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::world::WorldState;

pub const PROX_RANGE: f64 = 14.0;
pub const COMM_RANGE: f64 = 48.0;
pub const INTENSITY_MAX: f64 = 4505.0;

pub const FLL: usize = 0;
pub const FL: usize = 1;
pub const FC: usize = 2;
pub const FR: usize = 3;
pub const FRR: usize = 4;
pub const BL: usize = 5;
pub const BR: usize = 6;

pub const FRONT_SENSORS: [usize; 5] = [FLL, FL, FC, FR, FRR];
pub const REAR_SENSORS: [usize; 2] = [BL, BR];

/// Seven intensities ordered `[fll, fl, fc, fr, frr, bl, br]`.
pub type ProxArray = [f64; 7];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorModel {
    pub prox_range: f64,
    pub comm_range: f64,
    pub intensity_max: f64,
}

impl Default for SensorModel {
    fn default() -> Self {
        SensorModel {
            prox_range: PROX_RANGE,
            comm_range: COMM_RANGE,
            intensity_max: INTENSITY_MAX,
        }
    }
}

/// Linear ramp from `INTENSITY_MAX` at contact down to 0 at `range`.
pub fn intensity(distance: f64, range: f64) -> Result<f64> {
    if distance.is_nan() || distance < 0.0 {
        return Err(Error::Contract(format!(
            "sensed distance must be non-negative, got {distance}"
        )));
    }
    Ok((INTENSITY_MAX * (1.0 - distance / range)).clamp(0.0, INTENSITY_MAX))
}

// Collision clamping can leave gaps a few ulps below zero.
fn gap_intensity(gap: f64, range: f64) -> f64 {
    intensity(gap.max(0.0), range).unwrap_or(0.0)
}

/// The seven proximity readings of agent `i`.
pub fn read_prox_values(world: &WorldState, i: usize) -> ProxArray {
    let mut values = [0.0; 7];
    if let Some(gap) = world.front_gap(i) {
        values[FC] = gap_intensity(gap, PROX_RANGE);
    }
    if let Some(gap) = world.rear_gap(i) {
        let v = gap_intensity(gap, PROX_RANGE);
        values[BL] = v;
        values[BR] = v;
    }
    values
}

/// One received message and which of the receiver's sensors picked it up.
#[derive(Debug, Clone, PartialEq)]
pub struct CommEvent {
    pub rx_payload: f64,
    pub intensities: ProxArray,
}

impl CommEvent {
    fn lights_rear(&self) -> bool {
        REAR_SENSORS.iter().any(|&k| self.intensities[k] > 0.0)
    }

    fn lights_front(&self) -> bool {
        FRONT_SENSORS.iter().any(|&k| self.intensities[k] > 0.0)
    }
}

/// Delivers every agent's payload to the neighbours within communication range.
///
/// `tx` holds what each agent transmitted on the previous step. Agent `i`
/// receives at most two events: one from the robot in front (lighting `fc`)
/// and one from the robot behind (lighting `bl` and `br`).
pub fn exchange_comm(world: &WorldState, tx: &[f64]) -> Result<Vec<Vec<CommEvent>>> {
    let n = world.n_agents();
    if tx.len() != n {
        return Err(Error::config(format!("expected {n} payloads, got {}", tx.len())));
    }
    let events = (0..n)
        .map(|i| {
            let mut received = Vec::with_capacity(2);
            if let Some(gap) = world.rear_gap(i) {
                let v = gap_intensity(gap, COMM_RANGE);
                if v > 0.0 {
                    let mut intensities = [0.0; 7];
                    intensities[BL] = v;
                    intensities[BR] = v;
                    received.push(CommEvent { rx_payload: tx[i - 1], intensities });
                }
            }
            if let Some(gap) = world.front_gap(i) {
                let v = gap_intensity(gap, COMM_RANGE);
                if v > 0.0 {
                    let mut intensities = [0.0; 7];
                    intensities[FC] = v;
                    received.push(CommEvent { rx_payload: tx[i + 1], intensities });
                }
            }
            received
        })
        .collect();
    Ok(events)
}

/// Communication events collapsed into a single intensity array plus the two
/// payloads. A missing neighbour reads as 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlatComm {
    pub prox_comm: ProxArray,
    pub rx_left: f64,
    pub rx_right: f64,
}

pub fn flatten_events(events: &[CommEvent]) -> FlatComm {
    let mut prox_comm = [0.0; 7];
    let mut rx_left = 0.0;
    let mut rx_right = 0.0;
    for ev in events {
        for (slot, &v) in prox_comm.iter_mut().zip(&ev.intensities) {
            *slot = f64::max(*slot, v);
        }
        if ev.lights_rear() {
            rx_left = ev.rx_payload;
        }
        if ev.lights_front() {
            rx_right = ev.rx_payload;
        }
    }
    FlatComm { prox_comm, rx_left, rx_right }
}

/// What a single agent perceives on one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorFrame {
    pub prox_values: ProxArray,
    pub prox_comm: ProxArray,
    pub rx_left: f64,
    pub rx_right: f64,
    pub all_sensors: [f64; 14],
}

impl SensorFrame {
    pub fn view(&self, kind: InputKind) -> &[f64] {
        match kind {
            InputKind::ProxValues => &self.prox_values,
            InputKind::ProxComm => &self.prox_comm,
            InputKind::AllSensors => &self.all_sensors,
        }
    }
}

pub fn build_frame(prox_values: ProxArray, flat: FlatComm) -> SensorFrame {
    let mut all_sensors = [0.0; 14];
    all_sensors[..7].copy_from_slice(&prox_values);
    all_sensors[7..].copy_from_slice(&flat.prox_comm);
    SensorFrame {
        prox_values,
        prox_comm: flat.prox_comm,
        rx_left: flat.rx_left,
        rx_right: flat.rx_right,
        all_sensors,
    }
}

/// Senses the whole row, delivering `tx` (last step's transmissions).
pub fn sense_all(world: &WorldState, tx: &[f64]) -> Result<Vec<SensorFrame>> {
    let events = exchange_comm(world, tx)?;
    Ok(events
        .iter()
        .enumerate()
        .map(|(i, evs)| build_frame(read_prox_values(world, i), flatten_events(evs)))
        .collect())
}

/// Which sensing view a controller consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputKind {
    ProxValues,
    ProxComm,
    AllSensors,
}

impl InputKind {
    pub const ALL: [InputKind; 3] = [InputKind::ProxValues, InputKind::ProxComm, InputKind::AllSensors];

    pub fn width(self) -> usize {
        match self {
            InputKind::ProxValues | InputKind::ProxComm => 7,
            InputKind::AllSensors => 14,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            InputKind::ProxValues => "prox_values",
            InputKind::ProxComm => "prox_comm",
            InputKind::AllSensors => "all_sensors",
        }
    }

    /// Indices of the front-facing and rear-facing entries of this view.
    pub fn sides(self) -> (Vec<usize>, Vec<usize>) {
        let offsets: &[usize] = match self {
            InputKind::ProxValues | InputKind::ProxComm => &[0],
            InputKind::AllSensors => &[0, 7],
        };
        let front = offsets
            .iter()
            .flat_map(|o| FRONT_SENSORS.iter().map(move |k| k + o))
            .collect();
        let rear = offsets
            .iter()
            .flat_map(|o| REAR_SENSORS.iter().map(move |k| k + o))
            .collect();
        (front, rear)
    }
}

impl std::str::FromStr for InputKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        InputKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::config(format!("unknown input kind `{s}`")))
    }
}

impl std::fmt::Display for InputKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}
