use proptest::prelude::*;
use swarmline::controllers::{run_episode_with, Controller};
use swarmline::world::{AvgGap, WorldConfig, WorldState, MAX_SPEED, MOTOR_NOISE_REL, ROBOT_LENGTH};

#[test]
fn spawn_gap_mean_matches_the_target() {
    let cfg = WorldConfig::default().with_agents(10).with_gap(AvgGap::Fixed(8.0));
    let mut gaps = Vec::new();
    for seed in 0..2000 {
        let w = WorldState::spawn(&cfg, seed).unwrap();
        gaps.extend((0..9).map(|i| w.front_gap(i).unwrap()));
    }
    let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
    assert!((7.8..=8.2).contains(&mean), "mean gap {mean}");
    assert!(gaps.iter().all(|&g| (0.0..16.0 + 1e-9).contains(&g)));
}

#[test]
fn motor_noise_is_unbiased_with_the_configured_spread() {
    let cfg = WorldConfig::default();
    let mut z = Vec::new();
    for seed in 0..200 {
        let mut w = WorldState::with_positions(&cfg, &[0.0, 500.0, 1000.0], seed).unwrap();
        for _ in 0..50 {
            let before = w.positions()[1];
            w.step(&[0.0, 10.0, 0.0]).unwrap();
            let moved = w.positions()[1] - before;
            z.push((moved / 1.0 - 1.0) / MOTOR_NOISE_REL);
        }
    }
    let n = z.len() as f64;
    let mean = z.iter().sum::<f64>() / n;
    let std = (z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    assert!(mean.abs() < 0.05, "mean {mean}");
    assert!((std - 1.0).abs() < 0.05, "std {std}");
}

#[test]
fn colours_are_drawn_fairly() {
    let cfg = WorldConfig::default().with_agents(10);
    let blue: usize = (0..500)
        .map(|s| WorldState::spawn(&cfg, s).unwrap().colours().iter().filter(|c| c.label() == 1).count())
        .sum();
    let frac = blue as f64 / 5000.0;
    assert!((0.47..=0.53).contains(&frac), "{frac}");
}

proptest! {
    #[test]
    fn stepping_keeps_the_row_ordered(
        n in 3usize..9,
        seed in 0u64..1000,
        speeds in prop::collection::vec(-40.0f64..40.0, 9 * 6),
    ) {
        let cfg = WorldConfig::default().with_agents(n);
        let mut w = WorldState::spawn(&cfg, seed).unwrap();
        let (first, last) = (w.positions()[0], w.positions()[n - 1]);
        for chunk in speeds.chunks(9).take(6) {
            w.step(&chunk[..n]).unwrap();
            let after = w.positions();
            prop_assert_eq!(after[0], first);
            prop_assert_eq!(after[n - 1], last);
            for (a, &v) in w.agents.iter().zip(&chunk[..n]) {
                prop_assert!(a.target_speed.abs() <= MAX_SPEED);
                if !a.is_dead {
                    prop_assert_eq!(a.target_speed, v.clamp(-MAX_SPEED, MAX_SPEED));
                }
            }
            for pair in after.windows(2) {
                prop_assert!(pair[1] - pair[0] >= ROBOT_LENGTH - 1e-9);
            }
        }
    }

    #[test]
    fn goals_are_evenly_spaced_between_the_ends(n in 3usize..12, seed in 0u64..500) {
        let cfg = WorldConfig::default().with_agents(n).with_gap(AvgGap::Variable);
        let w = WorldState::spawn(&cfg, seed).unwrap();
        let step = (w.goals[n - 1] - w.goals[0]) / (n - 1) as f64;
        prop_assert!(step >= ROBOT_LENGTH - 1e-9);
        for i in 0..n {
            prop_assert!((w.goals[i] - (w.goals[0] + step * i as f64)).abs() < 1e-9);
        }
        prop_assert_eq!(w.goals[0], w.positions()[0]);
        prop_assert_eq!(w.goals[n - 1], w.positions()[n - 1]);
    }

    #[test]
    fn noise_free_expert_never_collides_and_lands_exactly(n in 3usize..11, seed in 0u64..2000) {
        let cfg = WorldConfig::default().with_agents(n).with_gap(AvgGap::Variable).without_noise();
        let w = WorldState::spawn(&cfg, seed).unwrap();
        let log = run_episode_with(w, &Controller::Expert, 200, false).unwrap();
        for s in &log.steps {
            for i in 1..n - 1 {
                let free = s.positions[i] + s.speeds[i] * 0.1;
                let next = log.steps.get(s.step + 1).map_or(log.final_positions[i], |x| x.positions[i]);
                prop_assert_eq!(free, next);
            }
        }
        prop_assert!(log.final_errors().iter().all(|&e| e == 0.0));
    }
}
