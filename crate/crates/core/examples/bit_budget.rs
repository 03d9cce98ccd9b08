//! Hold the uncoded index budget fixed and trade subspace count against codebook size.
//! Also shows why a per-position VQ cannot meet the same budget on a fine grid.
//!
//! `cargo run --release --example bit_budget`

use pqvae::baselines::{vqvae_feasibility, PerPositionVQConfig};
use pqvae::entropy::build_smoothed_dictionary;
use pqvae::eval::{budget_matched_config, evaluate_codec};
use pqvae::model::{index_histogram, train, Activation, CodecArchitecture, TrainConfig};
use pqvae::pq::fixed_index_bits;
use pqvae::store::{generate_factorial, split_with, FactorialSpec, SplitMode};

fn main() -> pqvae::Result<()> {
    let budget = 48;
    let spec = FactorialSpec { dim: 64, factors: 8, options: 8, count: 1000, spread: 0.1, seed: 7 };
    let (ds, _) = generate_factorial(&spec)?;
    let (tr, te) = split_with(&ds, 0.8, 1, SplitMode::ByRow)?;
    let (xtr, xte) = (tr.to_array(), te.to_array());

    for d in [1usize, 2, 4] {
        let pq = budget_matched_config(2, 2, 16, d, budget)?;
        let arch = CodecArchitecture::mirrored(64, &[128], Activation::Silu, pq);
        let params = train(xtr.view(), &arch, &TrainConfig { epochs: 15, seed: 3, ..Default::default() })?.params;
        let dict = build_smoothed_dictionary(&index_histogram(xtr.view(), &params)?)?;
        let (p, _) = evaluate_codec("pqvae_shared", "", &params, &dict, xte.view(), None, None)?;
        println!("d={d} K={:<5} {} fixed bits, coded {:.1} bits, distortion {:.4}", pq.k, fixed_index_bits(&pq), p.payload_bits, p.distortion);
    }

    match vqvae_feasibility(600, 5, 5) {
        Ok(k) => println!("per-position VQ at 600 bits on 5x5 needs K = {k}"),
        Err(e) => println!("{e}"),
    }
    if let Err(e) = PerPositionVQConfig::new(5, 5, 16, 1 << 24, 600) {
        println!("rejected: {e}");
    }
    Ok(())
}
