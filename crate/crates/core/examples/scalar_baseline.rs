//! Fit a Lloyd-Max scalar quantizer and report raw and Huffman-coded rates.
//!
//! `cargo run --release --example scalar_baseline`

use pqvae::baselines::{sq_rates, train_scalar_quantizer};
use pqvae::eval::evaluate_scalar;
use pqvae::store::{generate_synthetic, split_with, SplitMode, SyntheticSpec};

fn main() -> pqvae::Result<()> {
    let (ds, text) = generate_synthetic(&SyntheticSpec { dim: 64, num_classes: 8, per_class_count: 100, cluster_spread: 0.1, seed: 7 })?;
    let (tr, te) = split_with(&ds, 0.8, 1, SplitMode::Stratified)?;
    let (xtr, xte) = (tr.to_array(), te.to_array());

    for bits in 1..=4u8 {
        let fit = train_scalar_quantizer(xtr.view(), bits, 0)?;
        let rate = sq_rates(xtr.view(), &fit.quantizer)?;
        let (p, _) = evaluate_scalar("", &fit.quantizer, xtr.view(), xte.view(), te.labels(), Some(&text), true)?;
        println!(
            "{bits} bits: raw {:.2} bpd, coded {:.3} bpd, mse {:.5} -> {:.5}, distortion {:.4}, accuracy {:.3}",
            rate.raw_bpd,
            rate.coded_bpd,
            fit.mse_trace[0],
            fit.mse_trace.last().unwrap(),
            p.distortion,
            p.accuracy.unwrap()
        );
    }
    Ok(())
}
