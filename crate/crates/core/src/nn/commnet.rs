//! Two-step static unroll of the shared per-agent network.
//!
//! Every agent runs the same parameters. At step `t` agent `i` sees its own
//! sensing plus the messages its left and right neighbours emitted at `t − 1`.
//! Messages live in a vector with one slot per agent and a zero sentinel at
//! each end, so the extreme agents always hear 0 from outside the row.
//! Gradients reach the message head only through the next step's inputs.

use super::loss::bce_term;
use super::mlp::{MlpGrads, MlpParams, Tape};
use crate::error::{Error, Result};

pub const SEQ_LEN: usize = 2;

/// All agents of one run over `seq_len` consecutive steps.
///
/// Slots `n_real..n_agents` are padding: they have zero sensing, never
/// transmit, and never contribute to the loss.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceBatch {
    pub seq_len: usize,
    pub n_agents: usize,
    pub n_real: usize,
    /// `[step][agent]` sensing vector (empty for the colour network).
    pub inputs: Vec<Vec<Vec<f64>>>,
    /// `[step][agent]` target speed or colour label.
    pub targets: Vec<Vec<f64>>,
    /// Whether the agent's output enters the loss.
    pub mask: Vec<bool>,
}

impl SequenceBatch {
    pub fn validate(&self) -> Result<()> {
        let ok = self.n_real <= self.n_agents
            && self.inputs.len() == self.seq_len
            && self.targets.len() == self.seq_len
            && self.mask.len() == self.n_agents
            && self.inputs.iter().all(|s| s.len() == self.n_agents)
            && self.targets.iter().all(|s| s.len() == self.n_agents);
        if ok {
            Ok(())
        } else {
            Err(Error::shape("sequence batch has inconsistent dimensions"))
        }
    }

    /// Number of (step, agent) pairs that enter the loss.
    pub fn active_count(&self) -> usize {
        self.seq_len * self.mask.iter().filter(|&&m| m).count()
    }
}

/// Forward result of [`commnet_unroll`].
#[derive(Debug, Clone)]
pub struct Unroll {
    /// `[step][agent]` network outputs; padding slots hold zeros.
    pub outputs: Vec<Vec<Vec<f64>>>,
    /// `[step]` message vector consumed at that step (length `n_agents + 2`).
    pub comm_in: Vec<Vec<f64>>,
    tapes: Vec<Vec<Option<Tape>>>,
    n_real: usize,
    sensing_width: usize,
}

fn message_channel(params: &MlpParams) -> Result<usize> {
    params
        .arch
        .message_channel()
        .ok_or_else(|| Error::Arch {
            expected: "single_comm or colour".into(),
            found: params.arch.name().into(),
        })
}

/// Runs the shared network over both steps of `batch`.
///
/// `init_comm` has `n_agents + 2` entries; the first and last are sentinels and
/// must be 0.
pub fn commnet_unroll(params: &MlpParams, batch: &SequenceBatch, init_comm: &[f64]) -> Result<Unroll> {
    batch.validate()?;
    let msg_ch = message_channel(params)?;
    let n = batch.n_agents;
    if init_comm.len() != n + 2 {
        return Err(Error::shape(format!(
            "message vector needs {} slots, got {}",
            n + 2,
            init_comm.len()
        )));
    }
    if init_comm[0] != 0.0 || init_comm[n + 1] != 0.0 {
        return Err(Error::Contract("message sentinels must be 0".into()));
    }
    let sensing_width = params.input_width() - 2;
    let out_width = params.output_width();

    let mut comm = init_comm.to_vec();
    // Padding never transmits.
    for slot in comm.iter_mut().take(n + 1).skip(batch.n_real + 1) {
        *slot = 0.0;
    }
    let mut outputs = Vec::with_capacity(batch.seq_len);
    let mut comm_in = Vec::with_capacity(batch.seq_len);
    let mut tapes = Vec::with_capacity(batch.seq_len);
    for t in 0..batch.seq_len {
        let mut step_out = vec![vec![0.0; out_width]; n];
        let mut step_tapes = vec![None; n];
        let mut next = vec![0.0; n + 2];
        for i in 0..batch.n_real {
            let sensing = &batch.inputs[t][i];
            if sensing.len() != sensing_width {
                return Err(Error::shape(format!(
                    "agent {i} sensing has {} values, network expects {sensing_width}",
                    sensing.len()
                )));
            }
            let mut x = Vec::with_capacity(sensing_width + 2);
            x.extend_from_slice(sensing);
            x.push(comm[i]);
            x.push(comm[i + 2]);
            let (out, tape) = params.forward(&x)?;
            next[i + 1] = out[msg_ch];
            step_out[i] = out;
            step_tapes[i] = Some(tape);
        }
        comm_in.push(std::mem::replace(&mut comm, next));
        outputs.push(step_out);
        tapes.push(step_tapes);
    }
    Ok(Unroll { outputs, comm_in, tapes, n_real: batch.n_real, sensing_width })
}

/// Backpropagation through both steps, accumulating into one gradient.
pub fn commnet_backward(params: &MlpParams, unroll: &Unroll, upstream: &[Vec<Vec<f64>>]) -> Result<MlpGrads> {
    commnet_backward_with(params, unroll, upstream, false)
}

/// As [`commnet_backward`]; with `sever_comm` the gradient flowing from a
/// step's message inputs back into the previous step's message outputs is
/// dropped.
pub fn commnet_backward_with(
    params: &MlpParams,
    unroll: &Unroll,
    upstream: &[Vec<Vec<f64>>],
    sever_comm: bool,
) -> Result<MlpGrads> {
    let msg_ch = message_channel(params)?;
    let steps = unroll.tapes.len();
    if upstream.len() != steps || params.input_width() != unroll.sensing_width + 2 {
        return Err(Error::shape("upstream gradients do not match the unroll"));
    }
    let n = unroll.outputs.first().map_or(0, Vec::len);
    let mut grads = params.zero_grads();
    // Gradient on each agent's message output at the step being processed.
    let mut msg_grad = vec![0.0; n];
    let left_in = unroll.sensing_width;
    let right_in = unroll.sensing_width + 1;
    for t in (0..steps).rev() {
        if upstream[t].len() != n {
            return Err(Error::shape(format!("upstream step {t} has wrong agent count")));
        }
        let mut prev_msg_grad = vec![0.0; n];
        for i in 0..unroll.n_real {
            let tape = unroll.tapes[t][i]
                .as_ref()
                .ok_or_else(|| Error::shape("missing tape entry"))?;
            let mut up = upstream[t][i].clone();
            if up.len() != params.output_width() {
                return Err(Error::shape("upstream gradient has wrong width"));
            }
            up[msg_ch] += msg_grad[i];
            let (g, dx) = params.backward(tape, &up)?;
            grads.add_assign(&g);
            if t > 0 && !sever_comm {
                if i > 0 {
                    prev_msg_grad[i - 1] += dx[left_in];
                }
                if i + 1 < unroll.n_real {
                    prev_msg_grad[i + 1] += dx[right_in];
                }
            }
        }
        msg_grad = prev_msg_grad;
    }
    Ok(grads)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SequenceLoss {
    /// Squared error on output 0 (speed).
    Mse,
    /// Cross entropy on output 0 (blue probability).
    Bce,
}

/// Summed loss over the active (step, agent) pairs of one sequence, with the
/// matching upstream gradients (also of the sum). Only output 0 is supervised.
pub fn sequence_loss(
    outputs: &[Vec<Vec<f64>>],
    batch: &SequenceBatch,
    kind: SequenceLoss,
) -> (f64, Vec<Vec<Vec<f64>>>) {
    let mut total = 0.0;
    let upstream = outputs
        .iter()
        .enumerate()
        .map(|(t, step)| {
            step.iter()
                .enumerate()
                .map(|(i, out)| {
                    let mut g = vec![0.0; out.len()];
                    if i < batch.n_real && batch.mask[i] {
                        let (p, y) = (out[0], batch.targets[t][i]);
                        let (l, d) = match kind {
                            SequenceLoss::Mse => ((p - y).powi(2), 2.0 * (p - y)),
                            SequenceLoss::Bce => bce_term(p, y),
                        };
                        total += l;
                        g[0] = d;
                    }
                    g
                })
                .collect()
        })
        .collect();
    (total, upstream)
}
