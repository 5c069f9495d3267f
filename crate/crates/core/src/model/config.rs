use crate::error::{Error, Result};
use crate::qkernel::MAX_BLOCK_QUBITS;

pub const MAX_CONV_LAYERS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellKind {
    /// Gates are linear combinations of quantum kernel values against landmarks.
    Quantum,
    /// Affine gates, the Fed-LSTM baseline.
    Classical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pooling {
    /// Classifier reads the final hidden state.
    Last,
    /// Classifier reads the time average of the hidden states.
    Mean,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub input_channels: usize,
    pub window: usize,
    pub conv_layers: usize,
    pub conv_filters: usize,
    pub conv_width: usize,
    pub recurrent_layers: usize,
    pub hidden: usize,
    pub landmarks: usize,
    pub block_size: usize,
    pub kernel_depth: usize,
    pub classes: usize,
    pub dropout: f64,
    pub gate_bias: bool,
    pub cell: CellKind,
    pub pooling: Pooling,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_channels: 3,
            window: 100,
            conv_layers: 1,
            conv_filters: 64,
            conv_width: 11,
            recurrent_layers: 2,
            hidden: 64,
            landmarks: 16,
            block_size: 4,
            kernel_depth: 0,
            classes: 8,
            dropout: 0.5,
            gate_bias: false,
            cell: CellKind::Quantum,
            pooling: Pooling::Last,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidArgument(msg));
        if self.input_channels == 0 || self.window == 0 {
            return fail("input channels and window length must be >= 1".into());
        }
        if self.conv_layers > MAX_CONV_LAYERS {
            return fail(format!("at most {MAX_CONV_LAYERS} conv layers supported"));
        }
        if self.conv_layers > 0 && (self.conv_filters == 0 || self.conv_width == 0) {
            return fail("conv filters and width must be >= 1".into());
        }
        if self.recurrent_layers == 0 || self.hidden == 0 {
            return fail("need at least one recurrent layer with hidden size >= 1".into());
        }
        if self.cell == CellKind::Quantum && self.landmarks == 0 {
            return fail("landmark count must be >= 1".into());
        }
        if self.block_size == 0 || self.block_size > MAX_BLOCK_QUBITS {
            return fail(format!("block size must lie in 1..={MAX_BLOCK_QUBITS}"));
        }
        if self.classes < 2 {
            return fail("need at least two classes".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout {} must lie in [0, 1)", self.dropout));
        }
        if self.window < self.min_window() {
            return Err(Error::WindowTooShort {
                len: self.window,
                width: self.min_window(),
            });
        }
        Ok(())
    }

    /// Shortest window the conv stack accepts.
    pub fn min_window(&self) -> usize {
        self.conv_layers * self.conv_width.saturating_sub(1) + 1
    }

    /// Sequence length seen by the recurrent layers.
    pub fn feature_steps(&self) -> usize {
        self.window + 1 - self.min_window()
    }

    /// Channel count entering the first recurrent layer.
    pub fn feature_channels(&self) -> usize {
        if self.conv_layers == 0 {
            self.input_channels
        } else {
            self.conv_filters
        }
    }

    /// Input width of recurrent layer `layer`.
    pub fn recurrent_input(&self, layer: usize) -> usize {
        if layer == 0 {
            self.feature_channels()
        } else {
            self.hidden
        }
    }

    pub fn conv_input(&self, layer: usize) -> usize {
        if layer == 0 {
            self.input_channels
        } else {
            self.conv_filters
        }
    }
}
