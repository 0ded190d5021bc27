use super::mlp::{Layer, MlpGrads, MlpParams};
use crate::error::{Error, Result};

/// Moment estimates for Adam, laid out like the parameters they track.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Layer>,
    pub v: Vec<Layer>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub lr: f64,
}

impl AdamState {
    pub fn new(params: &MlpParams, lr: f64) -> Self {
        let zeros = params.zero_grads().layers;
        AdamState {
            m: zeros.clone(),
            v: zeros,
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            lr,
        }
    }
}

fn same_shape(a: &[Layer], b: &[Layer]) -> bool {
    a.len() == b.len()
        && a.iter().zip(b).all(|(x, y)| {
            x.weight.rows == y.weight.rows
                && x.weight.cols == y.weight.cols
                && x.bias.len() == y.bias.len()
        })
}

/// One bias-corrected Adam update.
pub fn adam_step(params: &mut MlpParams, grads: &MlpGrads, state: &mut AdamState) -> Result<()> {
    if !same_shape(&params.layers, &grads.layers) || !same_shape(&params.layers, &state.m) {
        return Err(Error::shape("parameters, gradients and optimizer state differ in shape"));
    }
    state.t += 1;
    let (b1, b2) = (state.beta1, state.beta2);
    let bc1 = 1.0 - b1.powi(state.t as i32);
    let bc2 = 1.0 - b2.powi(state.t as i32);
    for (k, layer) in params.layers.iter_mut().enumerate() {
        let g = &grads.layers[k];
        let m = &mut state.m[k];
        let v = &mut state.v[k];
        let theta = layer.weight.data.iter_mut().chain(layer.bias.iter_mut());
        let grad = g.weight.data.iter().chain(&g.bias);
        let mom1 = m.weight.data.iter_mut().chain(m.bias.iter_mut());
        let mom2 = v.weight.data.iter_mut().chain(v.bias.iter_mut());
        for (((p, &gi), mi), vi) in theta.zip(grad).zip(mom1).zip(mom2) {
            *mi = b1 * *mi + (1.0 - b1) * gi;
            *vi = b2 * *vi + (1.0 - b2) * gi * gi;
            let m_hat = *mi / bc1;
            let v_hat = *vi / bc2;
            *p -= state.lr * m_hat / (v_hat.sqrt() + state.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::matrix::Matrix;
    use crate::nn::mlp::Arch;

    fn scalar_params(theta: f64) -> MlpParams {
        // Only the first weight is used as the optimisation variable.
        let mut p = MlpParams::zeros(Arch::Distributed, 1);
        p.layers[0].weight = Matrix::from_vec(10, 1, {
            let mut d = vec![0.0; 10];
            d[0] = theta;
            d
        })
        .unwrap();
        p
    }

    fn grad_on_first(p: &MlpParams, g: f64) -> MlpGrads {
        let mut grads = p.zero_grads();
        grads.layers[0].weight.data[0] = g;
        grads
    }

    #[test]
    fn first_step_moves_by_lr_against_the_gradient() {
        for g in [3.0, -0.02, 1e-3] {
            let mut p = scalar_params(1.0);
            let mut st = AdamState::new(&p, 0.01);
            let grads = grad_on_first(&p, g);
            adam_step(&mut p, &grads, &mut st).unwrap();
            let delta = p.layers[0].weight.data[0] - 1.0;
            assert!((delta + 0.01 * g.signum()).abs() < 1e-6, "g={g} delta={delta}");
        }
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = MlpParams::init(Arch::Colour, 2, 5).unwrap();
        let before = p.clone();
        let mut st = AdamState::new(&p, 0.1);
        let zero = p.zero_grads();
        adam_step(&mut p, &zero, &mut st).unwrap();
        assert_eq!(p, before);
        assert_eq!(st.t, 1);
    }

    #[test]
    fn minimises_a_quadratic() {
        // Start at 1: from 0 the lr-bounded steps only cover ~2.8 in 500 updates.
        let mut p = scalar_params(1.0);
        let mut st = AdamState::new(&p, 0.01);
        for _ in 0..500 {
            let theta = p.layers[0].weight.data[0];
            let g = 2.0 * (theta - 3.0);
            let grads = grad_on_first(&p, g);
            adam_step(&mut p, &grads, &mut st).unwrap();
        }
        let theta = p.layers[0].weight.data[0];
        assert!((theta - 3.0).abs() < 0.05, "theta = {theta}");
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut p = MlpParams::init(Arch::Distributed, 7, 1).unwrap();
        let q = MlpParams::init(Arch::Distributed, 14, 1).unwrap();
        let mut st = AdamState::new(&p, 0.01);
        assert!(adam_step(&mut p, &q.zero_grads(), &mut st).is_err());
    }
}
