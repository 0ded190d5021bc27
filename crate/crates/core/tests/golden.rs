//! Frozen outputs for fixed seeds. A change here means the random streams or
//! the numerics moved and every stored dataset and checkpoint is stale.

use swarmline::nn::{Arch, MlpParams};
use swarmline::world::{AvgGap, WorldConfig, WorldState};

#[test]
fn spawn_seed_42() {
    let cfg = WorldConfig::default().with_agents(5).with_gap(AvgGap::Fixed(8.0));
    let w = WorldState::spawn(&cfg, 42).unwrap();
    assert_eq!(w.positions(), [0.0, 21.810339076906743, 47.91474559966649, 65.6550080453708, 86.59277638452825]);
    assert_eq!(w.goals, [0.0, 21.648194096132062, 43.296388192264125, 64.94458228839619, 86.59277638452825]);
    let labels: Vec<u8> = w.colours().iter().map(|c| c.label()).collect();
    assert_eq!(labels, [1, 0, 1, 0, 0]);

    let mut w = w;
    w.step(&[0.0, 16.6, -16.6, 5.0, 0.0]).unwrap();
    assert_eq!(w.positions(), [0.0, 23.360390729992677, 46.22268676123056, 66.1703512713436, 86.59277638452825]);
}

#[test]
fn variable_gap_seed_42() {
    let cfg = WorldConfig::default().with_agents(7).with_gap(AvgGap::Variable);
    let w = WorldState::spawn(&cfg, 42).unwrap();
    assert_eq!(w.spawn_gap, 17.956027653826755);
    assert_eq!(
        w.positions(),
        [0.0, 45.02634299783723, 71.27933570214965, 104.70914143722686, 125.97314078639528, 142.25847203013467, 164.22084164341533]
    );
}

#[test]
fn network_init_seed_42() {
    let cases = [
        (Arch::Distributed, 7, 0.13750059693515215, vec![0.06123151819415601], vec![0.17021991805390746]),
        (
            Arch::SingleComm,
            16,
            0.09094809615333566,
            vec![-0.03443409629728117, -0.13955608442622153],
            vec![-0.22298016928675823, 0.5208592678094084],
        ),
        (
            Arch::Colour,
            2,
            0.2572400621041192,
            vec![-0.01753857370963796, -0.2982658826223958],
            vec![0.49359216696049346, 0.3867336656417501],
        ),
    ];
    for (arch, width, w00, bias, out) in cases {
        let p = MlpParams::init(arch, width, 42).unwrap();
        let x: Vec<f64> = (0..width).map(|k| (k as f64 + 1.0) / 10.0).collect();
        assert_eq!(p.layers[0].weight.data[0], w00, "{arch}");
        assert_eq!(p.layers[2].bias, bias, "{arch}");
        assert_eq!(p.predict(&x).unwrap(), out, "{arch}");
    }
}
