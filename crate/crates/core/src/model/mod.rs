//! DeepConv-QK-LSTM and the classical DeepConv-LSTM baseline.
//!
//! Windows pass through a stack of valid 1-D convolutions with ReLU, then
//! dropout, then one or more recurrent layers (dropout before each), and a
//! linear head reads the final hidden state. In a QK-LSTM layer every gate
//! pre-activation is `sum_j kappa_g([h; x], z_j) * beta_g[j]` over trainable
//! landmarks `z_j` shared by the gates, with a per-gate kernel scaling `w_g`.

mod cells;
mod config;
mod network;
mod params;

pub use cells::{
    classical_lstm_cell_backward, classical_lstm_cell_forward, gate_values, qklstm_cell_backward, qklstm_cell_forward,
    CellState, GateValues, LstmCellCache, QkCellCache,
};
pub use config::{CellKind, ModelConfig, Pooling, MAX_CONV_LAYERS};
pub use network::{
    argmax, qklstm_layer_forward, recurrent_backward, recurrent_forward, ForwardCache, LayerOutput, Model, StepCaches,
};
pub use params::{
    count_params, group_thousands, init_params, lstm_layer_params, qklstm_layer_params, ConvLayer, Gate, HeadParams,
    LstmParams, NetworkParams, ParamCount, QkLstmParams, RecurrentParams, GATES,
};
