//! Compression of embedding vectors through an autoencoder whose latent grid is product
//! quantized with a single codebook shared by every subspace and position, followed by
//! Huffman coding of the codeword indices.

pub mod baselines;
pub mod cli;
pub mod config;
pub mod entropy;
pub mod error;
pub mod eval;
pub mod format;
pub mod kmeans;
pub mod model;
pub mod pq;
pub mod store;

pub use error::{Error, Result};
