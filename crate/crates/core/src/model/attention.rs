//! Additive attention: `u_i = tanh(W h_i + b)`, `score_i = u_i · c`,
//! masked softmax over real positions, pooled vector `Σ α_i h_i`.

use super::params::AttentionParams;
use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, softmax, Matrix};

/// Attention of one context row over `states`. Masked positions (`false`)
/// get weight exactly 0.
pub fn attend(
    states: &[Vec<f64>],
    proj_w: &Matrix,
    proj_b: &[f64],
    context_row: &[f64],
    mask: &[bool],
) -> Result<(Vec<f64>, Vec<f64>)> {
    if mask.len() != states.len() {
        return Err(Error::Dimension("mask length differs from state count".into()));
    }
    if !mask.iter().any(|&m| m) {
        return Err(Error::invalid("attention over an all-padding sequence"));
    }
    if proj_w.rows != proj_b.len() || proj_w.rows != context_row.len() {
        return Err(Error::Dimension("projection and context disagree".into()));
    }
    if states.iter().any(|s| s.len() != proj_w.cols) {
        return Err(Error::Dimension("state width differs from projection".into()));
    }
    let real: Vec<usize> = (0..states.len()).filter(|&i| mask[i]).collect();
    let scores: Vec<f64> = real
        .iter()
        .map(|&i| {
            let mut u = proj_b.to_vec();
            proj_w.matvec_acc(&states[i], &mut u);
            u.iter_mut().for_each(|v| *v = v.tanh());
            dot(&u, context_row)
        })
        .collect();
    let alpha = softmax(&scores);
    let mut weights = vec![0.0; states.len()];
    let mut pooled = vec![0.0; proj_w.cols];
    for (&i, &a) in real.iter().zip(&alpha) {
        weights[i] = a;
        axpy(a, &states[i], &mut pooled);
    }
    Ok((weights, pooled))
}

#[derive(Debug, Clone)]
pub(crate) struct AttentionCache {
    /// Projected states, one per real position.
    pub u: Vec<Vec<f64>>,
    /// One weight vector per context row.
    pub weights: Vec<Vec<f64>>,
}

/// Attend every context row over the same (all real) states. Returns the
/// pooled vector per context row.
pub(crate) fn attend_all(att: &AttentionParams, states: &[Vec<f64>]) -> (Vec<Vec<f64>>, AttentionCache) {
    let u: Vec<Vec<f64>> = states
        .iter()
        .map(|h| {
            let mut u = att.proj_b.data.clone();
            att.proj_w.matvec_acc(h, &mut u);
            u.iter_mut().for_each(|v| *v = v.tanh());
            u
        })
        .collect();
    let width = states.first().map_or(0, Vec::len);
    let mut weights = Vec::with_capacity(att.context.rows);
    let mut pooled = Vec::with_capacity(att.context.rows);
    for l in 0..att.context.rows {
        let ctx = att.context.row(l);
        let scores: Vec<f64> = u.iter().map(|ui| dot(ui, ctx)).collect();
        let alpha = softmax(&scores);
        let mut p = vec![0.0; width];
        for (a, h) in alpha.iter().zip(states) {
            axpy(*a, h, &mut p);
        }
        weights.push(alpha);
        pooled.push(p);
    }
    (pooled, AttentionCache { u, weights })
}

/// Backpropagate gradients on the pooled vectors (`None` for context rows
/// that received no gradient). Accumulates parameter gradients and returns
/// gradients on the states.
pub(crate) fn attend_all_backward(
    att: &AttentionParams,
    cache: &AttentionCache,
    states: &[Vec<f64>],
    d_pooled: &[Option<Vec<f64>>],
    grads: &mut AttentionParams,
) -> Vec<Vec<f64>> {
    let n = states.len();
    let width = states.first().map_or(0, Vec::len);
    let da_dim = att.proj_w.rows;
    let mut d_states = vec![vec![0.0; width]; n];
    let mut d_u = vec![vec![0.0; da_dim]; n];

    for (l, dp) in d_pooled.iter().enumerate() {
        let Some(dp) = dp else { continue };
        let alpha = &cache.weights[l];
        let d_alpha: Vec<f64> = states.iter().map(|h| dot(dp, h)).collect();
        let mean: f64 = alpha.iter().zip(&d_alpha).map(|(a, d)| a * d).sum();
        let ctx = att.context.row(l).to_vec();
        let g_ctx = grads.context.row_mut(l);
        for i in 0..n {
            axpy(alpha[i], dp, &mut d_states[i]);
            let d_score = alpha[i] * (d_alpha[i] - mean);
            if d_score != 0.0 {
                axpy(d_score, &cache.u[i], g_ctx);
                axpy(d_score, &ctx, &mut d_u[i]);
            }
        }
    }
    for i in 0..n {
        let da: Vec<f64> = d_u[i]
            .iter()
            .zip(&cache.u[i])
            .map(|(d, u)| d * (1.0 - u * u))
            .collect();
        grads.proj_w.outer_acc(&da, &states[i]);
        grads.proj_b.data.iter_mut().zip(&da).for_each(|(b, d)| *b += d);
        att.proj_w.tmatvec_acc(&da, &mut d_states[i]);
    }
    d_states
}
