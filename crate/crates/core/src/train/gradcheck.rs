//! Central-difference verification of the analytic gradients.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::loss::{loss_and_gradients, LossOptions, TrainingExample};
use crate::error::{Error, Result};
use crate::model::{ModelDims, ModelParams, Mode};
use crate::text::structure_ids;

/// Denominator floor of the relative error, so coordinates whose true
/// gradient is essentially zero are judged on absolute error.
pub const REL_ERROR_FLOOR: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    pub n_coords: usize,
    pub eps: f64,
    pub l2_lambda: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            n_coords: 500,
            eps: 1e-4,
            l2_lambda: 1e-3,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CoordinateCheck {
    pub tensor: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub n_checked: usize,
    pub max_rel_error: f64,
    pub worst: Option<CoordinateCheck>,
    /// Largest relative error seen in each tensor, in checkpoint order.
    pub per_tensor: Vec<(String, f64)>,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Small dimensions for fast checks: well under 5000 parameters.
pub fn toy_dims() -> ModelDims {
    ModelDims {
        vocab_size: 12,
        embed_dim: 6,
        hidden: 4,
        attention: 4,
        n_labels: 4,
    }
}

/// Random parameters and a two-document batch with ragged sentences.
pub fn toy_problem(mode: Mode, seed: u64) -> Result<(ModelParams, Vec<TrainingExample>)> {
    let dims = toy_dims();
    let labels = (0..dims.n_labels).map(|i| format!("L{i}")).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ModelParams::init(mode, dims, labels, &mut rng)?;
    for m in params.tensors_mut() {
        // Non-zero biases exercise every term.
        for v in m.data.iter_mut() {
            if *v == 0.0 {
                *v = rng.gen_range(-0.1..0.1);
            }
        }
    }
    params.embedding.row_mut(0).fill(0.0);
    let docs = [
        (vec![2u32, 3, 4, 5, 6, 7, 8], vec![1.0, 0.0, 1.0, 0.0]),
        (vec![9u32, 10, 11, 2, 1], vec![0.0, 1.0, 0.0, 1.0]),
    ];
    let batch = docs
        .into_iter()
        .map(|(ids, target)| TrainingExample {
            doc: structure_ids(&ids, 3, 3),
            target,
        })
        .collect();
    Ok((params, batch))
}

/// Compare analytic gradients with central differences of the loss.
pub fn grad_check(params: &ModelParams, batch: &[TrainingExample], cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    let (_, analytic) = loss_and_gradients(params, batch, &LossOptions::exact(cfg.l2_lambda))?;
    grad_check_against(params, batch, &analytic, cfg)
}

/// Same as [`grad_check`] but with caller-supplied analytic gradients.
pub fn grad_check_against(
    params: &ModelParams,
    batch: &[TrainingExample],
    analytic: &ModelParams,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport> {
    if analytic.dims() != params.dims() {
        return Err(Error::Dimension("gradient shapes differ from parameters".into()));
    }
    let opts = LossOptions::exact(cfg.l2_lambda);
    let coords = choose_coordinates(params, cfg.n_coords, cfg.seed);
    let names: Vec<String> = params.tensors().into_iter().map(|(n, _, _)| n).collect();
    let grad_values: Vec<Vec<f64>> = analytic.tensors().into_iter().map(|(_, m, _)| m.data.clone()).collect();
    let mut per_tensor: Vec<(String, f64)> = names.iter().map(|n| (n.clone(), 0.0)).collect();
    let mut probe = params.clone();
    let mut worst: Option<CoordinateCheck> = None;

    for &(t, i) in &coords {
        let original = probe.tensors_mut()[t].data[i];
        probe.tensors_mut()[t].data[i] = original + cfg.eps;
        let (plus, _) = loss_and_gradients(&probe, batch, &opts)?;
        probe.tensors_mut()[t].data[i] = original - cfg.eps;
        let (minus, _) = loss_and_gradients(&probe, batch, &opts)?;
        probe.tensors_mut()[t].data[i] = original;

        let numeric = (plus - minus) / (2.0 * cfg.eps);
        let a = grad_values[t][i];
        let rel = relative_error(a, numeric);
        if !rel.is_finite() {
            return Err(Error::NonFiniteGradient(format!("{}[{i}]", names[t])));
        }
        per_tensor[t].1 = per_tensor[t].1.max(rel);
        if worst.as_ref().is_none_or(|w| rel > w.rel_error) {
            worst = Some(CoordinateCheck {
                tensor: names[t].clone(),
                index: i,
                analytic: a,
                numeric,
                rel_error: rel,
            });
        }
    }
    Ok(GradCheckReport {
        n_checked: coords.len(),
        max_rel_error: worst.as_ref().map_or(0.0, |w| w.rel_error),
        worst,
        per_tensor,
    })
}

/// At least `n` coordinates (or all of them, if fewer exist) covering every
/// tensor. The padding embedding row is skipped since its gradient is
/// pinned to zero.
fn choose_coordinates(params: &ModelParams, n: usize, seed: u64) -> Vec<(usize, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tensors = params.tensors();
    let skip_pad = params.embedding.cols;
    let eligible: Vec<usize> = tensors
        .iter()
        .enumerate()
        .map(|(t, (_, m, _))| if t == 0 { m.len() - skip_pad } else { m.len() })
        .collect();
    let total: usize = eligible.iter().sum();
    let mut out = Vec::new();
    for (t, &len) in eligible.iter().enumerate() {
        if len == 0 {
            continue;
        }
        let share = (n * len).div_ceil(total.max(1)).clamp(1, len);
        let offset = if t == 0 { skip_pad } else { 0 };
        let mut picked: Vec<usize> = sample(&mut rng, len, share).into_iter().map(|i| i + offset).collect();
        picked.sort_unstable();
        out.extend(picked.into_iter().map(|i| (t, i)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_is_small() {
        let (params, _) = toy_problem(Mode::Hlan, 1).unwrap();
        assert!(params.n_parameters() <= 5000);
    }

    #[test]
    fn covers_every_tensor_with_enough_coordinates() {
        let (params, _) = toy_problem(Mode::Hlan, 1).unwrap();
        let coords = choose_coordinates(&params, 500, 3);
        assert!(coords.len() >= 500.min(params.n_parameters() - params.embedding.cols));
        let n_tensors = params.tensors().len();
        for t in 0..n_tensors {
            assert!(coords.iter().any(|&(c, _)| c == t), "tensor {t} unsampled");
        }
        assert!(coords.iter().all(|&(t, i)| t != 0 || i >= params.embedding.cols));
    }

    #[test]
    fn analytic_gradients_match_central_differences() {
        for mode in [Mode::Han, Mode::Hlan] {
            let (params, batch) = toy_problem(mode, 11).unwrap();
            let report = grad_check(&params, &batch, &GradCheckConfig::default()).unwrap();
            assert!(report.n_checked >= 500);
            assert!(report.max_rel_error < 1e-4, "{mode:?}: {:?}", report.worst);
        }
    }

    #[test]
    fn corrupted_gradients_are_caught() {
        let (params, batch) = toy_problem(Mode::Hlan, 11).unwrap();
        let cfg = GradCheckConfig::default();
        let (_, mut g) = loss_and_gradients(&params, &batch, &LossOptions::exact(cfg.l2_lambda)).unwrap();
        for m in g.tensors_mut() {
            m.data.iter_mut().for_each(|v| *v *= 2.0);
        }
        let report = grad_check_against(&params, &batch, &g, &cfg).unwrap();
        assert!(report.max_rel_error > 0.3, "{}", report.max_rel_error);
    }
}
