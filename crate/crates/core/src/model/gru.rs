//! GRU cell and bidirectional sequence encoder with hand-written backward
//! passes.
//!
//! ```text
//! z  = σ(W_z x + U_z h + b_z)
//! r  = σ(W_r x + U_r h + b_r)
//! h̃  = tanh(W_h x + U_h (r ⊙ h) + b_h)
//! h' = (1 − z) ⊙ h + z ⊙ h̃
//! ```

use super::params::{BiGruParams, GruParams};
use crate::error::{Error, Result};
use crate::linalg::{sigmoid, Matrix};

/// One GRU step. Fails when `x` or `h_prev` disagree with the gate shapes.
pub fn gru_step(x: &[f64], h_prev: &[f64], gates: &GruParams) -> Result<Vec<f64>> {
    if x.len() != gates.input_size() || h_prev.len() != gates.hidden_size() {
        return Err(Error::Dimension(format!(
            "gru_step: input {} / state {} against gates {}×{}",
            x.len(),
            h_prev.len(),
            gates.hidden_size(),
            gates.input_size()
        )));
    }
    Ok(step(x, h_prev, gates).h)
}

#[derive(Debug, Clone)]
pub(crate) struct StepCache {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub z: Vec<f64>,
    pub r: Vec<f64>,
    pub n: Vec<f64>,
    pub h: Vec<f64>,
}

pub(crate) fn step(x: &[f64], h_prev: &[f64], g: &GruParams) -> StepCache {
    let mut az = g.b_z.data.clone();
    g.w_z.matvec_acc(x, &mut az);
    g.u_z.matvec_acc(h_prev, &mut az);
    let z: Vec<f64> = az.into_iter().map(sigmoid).collect();

    let mut ar = g.b_r.data.clone();
    g.w_r.matvec_acc(x, &mut ar);
    g.u_r.matvec_acc(h_prev, &mut ar);
    let r: Vec<f64> = ar.into_iter().map(sigmoid).collect();

    let rh: Vec<f64> = r.iter().zip(h_prev).map(|(a, b)| a * b).collect();
    let mut ah = g.b_h.data.clone();
    g.w_h.matvec_acc(x, &mut ah);
    g.u_h.matvec_acc(&rh, &mut ah);
    let n: Vec<f64> = ah.into_iter().map(f64::tanh).collect();

    let h = (0..n.len())
        .map(|i| (1.0 - z[i]) * h_prev[i] + z[i] * n[i])
        .collect();
    StepCache {
        x: x.to_vec(),
        h_prev: h_prev.to_vec(),
        z,
        r,
        n,
        h,
    }
}

/// Accumulates gate gradients into `grads` and input gradient into `dx`;
/// returns the gradient with respect to `h_prev`.
pub(crate) fn step_backward(c: &StepCache, dh: &[f64], g: &GruParams, grads: &mut GruParams, dx: &mut [f64]) -> Vec<f64> {
    let k = dh.len();
    let mut dh_prev: Vec<f64> = (0..k).map(|i| dh[i] * (1.0 - c.z[i])).collect();

    let da_h: Vec<f64> = (0..k)
        .map(|i| dh[i] * c.z[i] * (1.0 - c.n[i] * c.n[i]))
        .collect();
    let da_z: Vec<f64> = (0..k)
        .map(|i| dh[i] * (c.n[i] - c.h_prev[i]) * c.z[i] * (1.0 - c.z[i]))
        .collect();

    let rh: Vec<f64> = c.r.iter().zip(&c.h_prev).map(|(a, b)| a * b).collect();
    grads.w_h.outer_acc(&da_h, &c.x);
    grads.u_h.outer_acc(&da_h, &rh);
    grads.b_h.data.iter_mut().zip(&da_h).for_each(|(b, d)| *b += d);
    g.w_h.tmatvec_acc(&da_h, dx);
    let mut drh = vec![0.0; k];
    g.u_h.tmatvec_acc(&da_h, &mut drh);

    let da_r: Vec<f64> = (0..k)
        .map(|i| drh[i] * c.h_prev[i] * c.r[i] * (1.0 - c.r[i]))
        .collect();
    for i in 0..k {
        dh_prev[i] += drh[i] * c.r[i];
    }

    accumulate_gate(&da_r, c, &g.w_r, &g.u_r, &mut grads.w_r, &mut grads.u_r, &mut grads.b_r, dx, &mut dh_prev);
    accumulate_gate(&da_z, c, &g.w_z, &g.u_z, &mut grads.w_z, &mut grads.u_z, &mut grads.b_z, dx, &mut dh_prev);
    dh_prev
}

#[allow(clippy::too_many_arguments)]
fn accumulate_gate(
    da: &[f64],
    c: &StepCache,
    w: &Matrix,
    u: &Matrix,
    gw: &mut Matrix,
    gu: &mut Matrix,
    gb: &mut Matrix,
    dx: &mut [f64],
    dh_prev: &mut [f64],
) {
    gw.outer_acc(da, &c.x);
    gu.outer_acc(da, &c.h_prev);
    gb.data.iter_mut().zip(da).for_each(|(b, d)| *b += d);
    w.tmatvec_acc(da, dx);
    u.tmatvec_acc(da, dh_prev);
}

#[derive(Debug, Clone)]
pub(crate) struct BiGruCache {
    pub forward: Vec<StepCache>,
    /// Indexed by position, not by processing order.
    pub backward: Vec<StepCache>,
}

/// Encode a sequence; each output is `[forward_t ; backward_t]`.
pub(crate) fn bigru_forward(p: &BiGruParams, inputs: &[Vec<f64>]) -> (Vec<Vec<f64>>, BiGruCache) {
    let k = p.forward.hidden_size();
    let n = inputs.len();
    let mut fwd = Vec::with_capacity(n);
    let mut h = vec![0.0; k];
    for x in inputs {
        let c = step(x, &h, &p.forward);
        h = c.h.clone();
        fwd.push(c);
    }
    let mut bwd: Vec<Option<StepCache>> = vec![None; n];
    let mut h = vec![0.0; k];
    for t in (0..n).rev() {
        let c = step(&inputs[t], &h, &p.backward);
        h = c.h.clone();
        bwd[t] = Some(c);
    }
    let bwd: Vec<StepCache> = bwd.into_iter().map(|c| c.expect("every position visited")).collect();
    let states = fwd
        .iter()
        .zip(&bwd)
        .map(|(f, b)| f.h.iter().chain(&b.h).copied().collect())
        .collect();
    (
        states,
        BiGruCache {
            forward: fwd,
            backward: bwd,
        },
    )
}

/// Given gradients on every output state, accumulate parameter gradients
/// and return gradients on the inputs.
pub(crate) fn bigru_backward(
    p: &BiGruParams,
    cache: &BiGruCache,
    d_states: &[Vec<f64>],
    grads: &mut BiGruParams,
) -> Vec<Vec<f64>> {
    let k = p.forward.hidden_size();
    let n = d_states.len();
    let input = p.forward.input_size();
    let mut dx = vec![vec![0.0; input]; n];

    let mut carry = vec![0.0; k];
    for t in (0..n).rev() {
        let dh: Vec<f64> = d_states[t][..k].iter().zip(&carry).map(|(a, b)| a + b).collect();
        carry = step_backward(&cache.forward[t], &dh, &p.forward, &mut grads.forward, &mut dx[t]);
    }
    let mut carry = vec![0.0; k];
    for t in 0..n {
        let dh: Vec<f64> = d_states[t][k..].iter().zip(&carry).map(|(a, b)| a + b).collect();
        carry = step_backward(&cache.backward[t], &dh, &p.backward, &mut grads.backward, &mut dx[t]);
    }
    dx
}
