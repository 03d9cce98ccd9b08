//! Save and reload every artifact a trained codec needs, then inspect them by magic.
//!
//! `cargo run --release --example model_files`

use pqvae::entropy::{build_smoothed_dictionary, EntropyDictionary};
use pqvae::cli::inspect;
use pqvae::model::{index_histogram, train, Activation, CodecArchitecture, CodecParams, TrainConfig};
use pqvae::pq::PQConfig;
use pqvae::store::{generate_synthetic, SyntheticSpec};

fn main() -> pqvae::Result<()> {
    let (ds, _) = generate_synthetic(&SyntheticSpec { dim: 16, num_classes: 4, per_class_count: 40, cluster_spread: 0.2, seed: 2 })?;
    let x = ds.to_array();
    let arch = CodecArchitecture::mirrored(16, &[32], Activation::Silu, PQConfig::new(1, 2, 8, 2, 8)?);
    let params = train(x.view(), &arch, &TrainConfig { epochs: 3, seed: 1, ..Default::default() })?.params;
    let dict = build_smoothed_dictionary(&index_histogram(x.view(), &params)?)?;

    let dir = std::env::temp_dir().join("pqvae_model_files_example");
    std::fs::create_dir_all(&dir)?;
    params.save(&dir.join("model.pqm"))?;
    params.codebook.save(&dir.join("codebook.pqc"))?;
    dict.save(&dir.join("dictionary.pqd"))?;

    assert_eq!(CodecParams::load(&dir.join("model.pqm"))?, params);
    assert_eq!(EntropyDictionary::load(&dir.join("dictionary.pqd"))?.id(), dict.id());
    for f in ["model.pqm", "codebook.pqc", "dictionary.pqd"] {
        print!("{}", inspect(&dir.join(f))?);
    }
    Ok(())
}
