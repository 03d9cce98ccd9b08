//! Train the shared-codebook codec, then compress and decompress one held-out feature.
//!
//! `cargo run --release --example train_codec`

use pqvae::entropy::{build_smoothed_dictionary, DictMode};
use pqvae::model::{compress, decompress, index_histogram, train, Activation, CodecArchitecture, TrainConfig};
use pqvae::pq::PQConfig;
use pqvae::store::{generate_synthetic, split_with, SplitMode, SyntheticSpec};

fn main() -> pqvae::Result<()> {
    let (ds, _) = generate_synthetic(&SyntheticSpec { dim: 64, num_classes: 8, per_class_count: 100, cluster_spread: 0.1, seed: 7 })?;
    let (tr, te) = split_with(&ds, 0.8, 1, SplitMode::Stratified)?;
    let (xtr, xte) = (tr.to_array(), te.to_array());

    let arch = CodecArchitecture::mirrored(64, &[128], Activation::Silu, PQConfig::new(2, 2, 16, 4, 16)?);
    let out = train(xtr.view(), &arch, &TrainConfig { epochs: 20, seed: 3, ..Default::default() })?;
    for log in out.epochs.iter().step_by(5) {
        println!(
            "epoch {:>2}: loss {:.4} (cos {:.4}), perplexity {:.2}, reinit {}",
            log.epoch, log.loss.total, log.loss.cosine_term, log.perplexity, log.reinitialized
        );
    }

    let dict = build_smoothed_dictionary(&index_histogram(xtr.view(), &out.params)?)?;
    let x = xte.row(0).to_vec();
    let cf = compress(&x, &out.params, &dict, DictMode::External)?;
    let x_hat = decompress(&cf, &out.params, &dict)?;
    println!(
        "feature 0: {} payload bits, distortion {:.4}",
        cf.payload_bits,
        pqvae::eval::distortion(&x, &x_hat)?
    );
    Ok(())
}
