//! The compact convolutional PD/HC classifier.
//!
//! Two temporal convolutions build frequency filters, a depthwise
//! convolution spanning all electrodes mixes them spatially, and two
//! depthwise-separable dilated blocks widen the temporal receptive field
//! before a linear read-out.

mod model;
mod ops;
mod train;

pub use model::{softmax, Pdnex, PdnexConfig, PdnexTrace, MIN_SAMPLES};
pub use ops::{depthwise_conv, dilated_conv};
pub use train::{
    cosine_lr, evaluate, train_classifier, ClassifierModel, MetricLevel, Metrics, TrainConfig, CLASSIFIER_KIND,
};

#[cfg(test)]
mod tests;
