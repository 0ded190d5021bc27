//! Browser bindings: run a robot row, run the colouring protocol, and trace
//! the sensor and manual-controller response curves. Every export returns a
//! JSON string.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use swarmline::controllers::{run_episode_with, Controller, RunLog};
use swarmline::eval::{linspace, probe_sensing, ProbeAxis};
use swarmline::sensing::{intensity, InputKind, COMM_RANGE, PROX_RANGE};
use swarmline::world::{target_colour, AvgGap, WorldConfig, WorldState};

#[derive(Serialize)]
struct Episode {
    goals: Vec<f64>,
    positions: Vec<Vec<f64>>,
    colours: Vec<Vec<u8>>,
    targets: Vec<u8>,
    converged_at: Option<usize>,
}

#[derive(Serialize)]
struct Curves {
    distance: Vec<f64>,
    prox: Vec<f64>,
    comm: Vec<f64>,
    intensity: Vec<f64>,
    speed_front: Vec<f64>,
    speed_rear: Vec<f64>,
}

fn to_js(e: impl std::fmt::Display) -> JsValue {
    JsValue::from_str(&e.to_string())
}

fn episode(log: &RunLog, horizon: usize) -> Episode {
    let n = log.n_agents;
    Episode {
        goals: log.goals.clone(),
        positions: (0..=horizon).map(|t| log.positions_at(t).to_vec()).collect(),
        colours: (0..=horizon).map(|t| log.colours_at(t).iter().map(|c| c.label()).collect()).collect(),
        targets: (0..n).map(|i| target_colour(i, n).label()).collect(),
        converged_at: log.converged_at,
    }
}

fn world(n_agents: usize, gap: f64, noise: bool, seed: u32) -> Result<WorldState, JsValue> {
    let avg = if gap > 0.0 { AvgGap::Fixed(gap) } else { AvgGap::Variable };
    let mut cfg = WorldConfig::default().with_agents(n_agents).with_gap(avg);
    if !noise {
        cfg = cfg.without_noise();
    }
    WorldState::spawn(&cfg, u64::from(seed)).map_err(to_js)
}

/// Runs `steps` control steps of the expert (`"expert"`) or the manual
/// proportional controller (`"manual"`). A non-positive `gap` draws a
/// variable average gap.
#[wasm_bindgen]
pub fn simulate(controller: &str, n_agents: usize, gap: f64, noise: bool, seed: u32, steps: usize) -> Result<String, JsValue> {
    let ctl = match controller {
        "expert" => Controller::Expert,
        "manual" => Controller::Manual { kind: InputKind::ProxValues },
        other => return Err(JsValue::from_str(&format!("unknown controller {other}"))),
    };
    let log = run_episode_with(world(n_agents, gap, noise, seed)?, &ctl, steps, false).map_err(to_js)?;
    serde_json::to_string(&episode(&log, steps)).map_err(to_js)
}

/// Runs the hand-written colouring protocol from random initial colours.
#[wasm_bindgen]
pub fn colour_protocol(n_agents: usize, seed: u32, steps: usize) -> Result<String, JsValue> {
    let w = world(n_agents, 8.0, false, seed)?;
    let log = run_episode_with(w, &Controller::ManualColour, steps, false).map_err(to_js)?;
    serde_json::to_string(&episode(&log, steps)).map_err(to_js)
}

/// Sensor intensity against surface distance, and the manual controller's
/// speed when only the front or only the rear sensors see that intensity.
#[wasm_bindgen]
pub fn response_curves(points: usize) -> Result<String, JsValue> {
    let distance = linspace(0.0, COMM_RANGE.max(PROX_RANGE), points);
    let ramp = |range: f64| distance.iter().map(|&d| intensity(d, range)).collect::<Result<Vec<_>, _>>();
    let levels = linspace(0.0, 4500.0, points);
    let manual = Controller::Manual { kind: InputKind::ProxValues };
    let speeds = |axis| probe_sensing(&manual, axis, &levels).map(|v| v.into_iter().map(|(_, s)| s).collect());
    let curves = Curves {
        prox: ramp(PROX_RANGE).map_err(to_js)?,
        comm: ramp(COMM_RANGE).map_err(to_js)?,
        speed_front: speeds(ProbeAxis::FrontOnly).map_err(to_js)?,
        speed_rear: speeds(ProbeAxis::RearOnly).map_err(to_js)?,
        distance,
        intensity: levels,
    };
    serde_json::to_string(&curves).map_err(to_js)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expert_row_lands_on_goals() {
        let out: serde_json::Value = serde_json::from_str(&simulate("expert", 6, 8.0, false, 3, 60).unwrap()).unwrap();
        let goals = out["goals"].as_array().unwrap();
        let last = out["positions"].as_array().unwrap().last().unwrap().as_array().unwrap();
        for (g, x) in goals.iter().zip(last) {
            assert_eq!(g.as_f64(), x.as_f64());
        }
    }

    #[test]
    fn protocol_reaches_targets() {
        let out: serde_json::Value = serde_json::from_str(&colour_protocol(9, 1, 12).unwrap()).unwrap();
        assert_eq!(out["colours"].as_array().unwrap().last().unwrap(), &out["targets"]);
    }

    #[test]
    fn curves_have_requested_length() {
        let out: serde_json::Value = serde_json::from_str(&response_curves(50).unwrap()).unwrap();
        assert_eq!(out["speed_front"].as_array().unwrap().len(), 50);
        assert_eq!(out["prox"][0].as_f64(), Some(4505.0));
    }
}
