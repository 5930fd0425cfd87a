//! Recurrent sequence regression.
//!
//! Three interchangeable cells share one parameter layout: a simple tanh
//! recurrence, a standard LSTM and a ReLU recurrence whose recurrent matrix
//! starts as the identity. Every model reads a sequence from a zero state and
//! predicts the target with a linear readout of the final hidden state.
//! Training minimizes mean squared error with exact backpropagation through
//! time, optional global-norm clipping and plain gradient descent.

mod bptt;
mod checkpoint;
mod forward;
mod metrics;
mod params;
mod tasks;
mod train;

pub use bptt::{
    accumulate_sequence, backward, bptt_gradients, gradients_and_loss, Gradients,
    ACCUMULATION_BLOCK,
};
pub use checkpoint::{Checkpoint, Preprocessing, CHECKPOINT_VERSION};
pub use forward::{predict, rnn_forward, rnn_forward_from, ForwardTrace};
pub use metrics::{loss_mse, pearson_correlation};
pub use params::{
    rnn_init, rnn_init_with_stddev, CellKind, RnnParams, DEFAULT_INIT_STDDEV, LSTM_FORGET_BIAS,
    TENSOR_NAMES,
};
pub use tasks::SyntheticTask;
pub use train::{
    clip_gradients, sgd_step, train, train_tolerant, BatchMode, ClipNorm, DivergenceInfo,
    EpochRecord, Loss, TrainConfig, TrainRun, TrainingCurve, DEFAULT_CLIP_NORM,
};
