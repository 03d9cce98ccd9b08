//! Zero-shot classification by cosine similarity to text embeddings, before and after
//! compression.
//!
//! `cargo run --release --example zero_shot`

use pqvae::entropy::build_smoothed_dictionary;
use pqvae::eval::{evaluate_codec, zero_shot_classify};
use pqvae::model::{index_histogram, train, Activation, CodecArchitecture, TrainConfig};
use pqvae::pq::PQConfig;
use pqvae::store::{generate_synthetic, split_with, SplitMode, SyntheticSpec};

fn main() -> pqvae::Result<()> {
    let (ds, text) = generate_synthetic(&SyntheticSpec { dim: 64, num_classes: 8, per_class_count: 100, cluster_spread: 0.6, seed: 11 })?;
    let (tr, te) = split_with(&ds, 0.8, 1, SplitMode::Stratified)?;
    let (xtr, xte) = (tr.to_array(), te.to_array());

    let raw = zero_shot_classify(xte.view(), te.labels(), &text)?;
    println!("raw accuracy {:.3}", raw.accuracy);

    for k in [2usize, 4, 16] {
        let arch = CodecArchitecture::mirrored(64, &[128], Activation::Silu, PQConfig::new(2, 2, 16, 4, k)?);
        let params = train(xtr.view(), &arch, &TrainConfig { epochs: 15, seed: 3, ..Default::default() })?.params;
        let dict = build_smoothed_dictionary(&index_histogram(xtr.view(), &params)?)?;
        let (p, recon) = evaluate_codec("pqvae_shared", "", &params, &dict, xte.view(), te.labels(), Some(&text))?;
        let zs = zero_shot_classify(recon.view(), te.labels(), &text)?;
        let per_class: Vec<String> = zs.per_class.iter().map(|a| a.map_or("-".into(), |v| format!("{v:.2}"))).collect();
        println!("K={k:>2}: {:.4} bpd, accuracy {:.3}, per class [{}]", p.bpd, p.accuracy.unwrap(), per_class.join(" "));
    }
    Ok(())
}
