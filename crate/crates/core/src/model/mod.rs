//! The fusion network: stacked LSTM → multi-head self-attention → residual
//! layer norm → dropout → flattened classifier head.

mod attention;
mod forward;
mod head;
mod lstm;
mod norm;
mod params;
mod serialize;

pub use attention::{
    attention_summary, multi_head_attention, project_qkv, scaled_dot_attention, HeadCache, MhaCache,
};
pub use forward::{
    forward, forward_sample, predict, ForwardOutput, ForwardTrace, Mode, Prediction, SampleTrace,
};
pub use head::{classify, sigmoid, softmax};
pub use lstm::{lstm_cell_step, lstm_layer_forward, stacked_lstm_forward, Gate, LstmCache};
pub use norm::{fuse_and_normalize, NormCache, LAYER_NORM_EPS};
pub use params::{
    Architecture, ClassifierParams, LayerNormParams, LstmLayerParams, MhaParams, ModelParams,
    DEFAULT_FORGET_BIAS,
};
pub use serialize::{decode_model, encode_model, load_model, save_model, SQFM_MAGIC, SQFM_VERSION};
