//! The trainable codec: encoder, shared-codebook quantizer, decoder.
//!
//! Training minimizes `(1 - cos(x, x_hat)) + alpha |sg(x_c) - x_hat_c|^2 + beta |x_c - sg(x_hat_c)|^2`
//! where `x_c` is the encoder output and `x_hat_c` its quantized reconstruction.

mod codec;
mod io;
mod mlp;
mod optim;
mod train;

pub use codec::{
    autoencoder_loss_and_grad, compress, compute_loss, cosine_distortion, decode_feature, decompress, encode_feature, feature_indices,
    index_histogram, latent_subvectors, loss_and_grad, reconstruct, reconstruct_all, BatchGradient,
    CodecArchitecture, CodecGrads, CodecParams, LossBreakdown, TermMask,
};
pub use io::{load_params, save_params, PARAMS_MAGIC};
pub use mlp::{Activation, Dense, Mlp};
pub use optim::{Optimizer, OptimizerKind};
pub use train::{train, train_continuous, EpochLog, StepOutcome, TrainConfig, TrainOutcome, Trainer};
