//! Twin-stream crop embedding, two-layer peephole LSTM and corner regression.

mod config;
mod model;
mod params;

pub use config::{ConvBlock, NetworkConfig, LSTM_LAYERS};
pub use model::{
    crop_pair_batch, lstm_step, unrolled_loss, LayerState, LstmLayerParams, LstmLayerVars, LstmState, NetView,
    PairRequest, StateVars, Unroll,
};
pub use params::{infer_config, LayerIdx, LstmIdx, NetworkParams, ParamLayout, GATE_F, GATE_I, GATE_O, GATE_Z};
