//! Hierarchical attention network (HAN) and its label-wise variant (HLAN).

mod attention;
mod forward;
mod gru;
mod params;

pub use attention::attend;
pub use forward::{forward, logits, predict_codes, AttentionMap, PredictionSet};
pub use gru::gru_step;
pub use params::{AttentionParams, BiGruParams, GruParams, ModelDims, ModelParams, Mode, TensorRole};

pub(crate) use forward::{backward, forward_internal, Dropout};
