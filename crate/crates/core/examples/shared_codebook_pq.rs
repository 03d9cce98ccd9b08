//! Quantize a latent grid with one codebook shared by every subspace and position.
//!
//! `cargo run --example shared_codebook_pq`

use ndarray::Array2;
use pqvae::pq::{dequantize, fixed_index_bits, quantize, LatentGrid, PQConfig, SharedCodebook};
use rand::{Rng, SeedableRng};

fn main() -> pqvae::Result<()> {
    let cfg = PQConfig::new(2, 2, 8, 4, 16)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let codewords = Array2::from_shape_fn((cfg.k, cfg.d_sub()), |_| rng.random_range(-1.0..1.0));
    let cb = SharedCodebook::new(cfg, codewords)?;

    let latent = LatentGrid::new(cfg.h, cfg.w, cfg.c, (0..cfg.latent_len()).map(|_| rng.random_range(-1.0..1.0)).collect())?;
    let z = quantize(&latent, &cb)?;
    let q = dequantize(&z, &cb)?;
    println!("config {cfg}: {} indices, {} bits uncoded", z.indices().len(), fixed_index_bits(&cfg));
    println!("indices {:?}", z.indices());
    println!("squared error {:.4}", latent.squared_distance(&q));
    println!("index histogram {:?}", z.histogram(cfg.k));
    println!("codebook hash {:016x}", cb.content_hash());
    Ok(())
}
