//! Simultaneous training of network weights and binary hyper-parameters.
//!
//! A small fully connected classifier is gated by a mask `M` drawn from a
//! Bernoulli distribution. Each weight update uses the gradient of the
//! mini-batch loss under sampled masks, and the same losses, ranked, drive
//! the natural gradient update of the mask distribution.

mod data;
mod net;
mod train;

pub use data::{gen_spiral_dataset, load_csv_dataset, raw_spirals, spiral_point, Dataset, SplitData, Standardization};
pub use net::{logits, loss, loss_and_grad, GatingKind, GatingMode, NetWeights};
pub use train::{
    evaluate_mask, moving_average, predict_fixed, threshold_mask, train_simultaneous, weight_update, Evaluation,
    HistoryPoint, NeuroOptimizer, TrainConfig, TrainOutput, TrainSummary, MOVING_AVERAGE_WINDOW,
};
