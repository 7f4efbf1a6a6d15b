//! Operator vocabulary of the network: convolution in all its grouped and
//! dilated forms, channel shuffle, bilinear upsampling, channel
//! concatenation and slicing, ReLU, batch normalization and the two-class
//! softmax. Each op has a plain function and a tape [`Operator`].

mod activation;
mod batchnorm;
mod concat;
mod conv;
mod shuffle;
mod upsample;

use std::sync::Arc;

pub use activation::{relu, softmax2, Relu, Softmax2};
pub use batchnorm::{
    batch_norm, batch_statistics, BatchNormEval, BatchNormTrain, BnMode, RunningStats, BN_EPS, BN_MOMENTUM,
};
pub use concat::{concat_channels, slice_channels, Concat, SliceChannels};
pub use conv::{conv2d, conv2d_backward, Conv2d, ConvGrads, ConvSpec};
pub use shuffle::{channel_shuffle, shuffle_index, ChannelShuffle};
pub use upsample::{bilinear_upsample, bilinear_upsample_adjoint, Upsample};

use crate::autograd::{NodeId, Operator, Tape};
use crate::error::Result;

impl Tape {
    pub fn conv2d(&mut self, x: NodeId, weights: NodeId, bias: Option<NodeId>, spec: ConvSpec) -> Result<NodeId> {
        let mut inputs = vec![x, weights];
        inputs.extend(bias);
        self.apply(Conv2d { spec }, &inputs)
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId> {
        self.apply(Relu, &[x])
    }

    pub fn channel_shuffle(&mut self, x: NodeId, groups: usize) -> Result<NodeId> {
        self.apply(ChannelShuffle { groups }, &[x])
    }

    pub fn upsample(&mut self, x: NodeId, factor: usize) -> Result<NodeId> {
        if factor == 1 {
            return Ok(x);
        }
        self.apply(Upsample { factor }, &[x])
    }

    pub fn concat(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Concat, &[a, b])
    }

    pub fn slice_channels(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        self.apply(SliceChannels { start, len }, &[x])
    }

    pub fn softmax2(&mut self, logits: NodeId) -> Result<NodeId> {
        self.apply(Softmax2, &[logits])
    }

    pub fn batch_norm_train(&mut self, x: NodeId, gamma: NodeId, beta: NodeId) -> Result<NodeId> {
        self.apply(BatchNormTrain, &[x, gamma, beta])
    }

    pub fn batch_norm_eval(&mut self, x: NodeId, gamma: NodeId, beta: NodeId, stats: &RunningStats) -> Result<NodeId> {
        let op = BatchNormEval {
            mean: Arc::new(stats.mean.clone()),
            var: Arc::new(stats.var.clone()),
        };
        self.apply_arc(Arc::new(op) as Arc<dyn Operator>, &[x, gamma, beta])
    }
}
