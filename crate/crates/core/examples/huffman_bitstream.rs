//! Build a canonical Huffman dictionary from index counts, code an index tensor into a
//! container, and parse it back.
//!
//! `cargo run --example huffman_bitstream`

use pqvae::entropy::{build_smoothed_dictionary, decode, encode, CompressedFeature, DictMode};
use pqvae::pq::{IndexTensor, PQConfig};

fn main() -> pqvae::Result<()> {
    let cfg = PQConfig::new(2, 2, 8, 4, 8)?;
    // skewed usage, as a trained codebook tends to produce
    let indices: Vec<u32> = (0..16u32).map(|i| [0, 0, 0, 1, 0, 2, 1, 0, 3, 0, 0, 1, 7, 0, 2, 0][i as usize]).collect();
    let z = IndexTensor::new(cfg.h, cfg.w, cfg.d, indices)?;
    let hist = z.histogram(cfg.k);
    let dict = build_smoothed_dictionary(&hist)?;
    println!("code lengths {:?}", dict.code_lengths());

    for mode in [DictMode::External, DictMode::Inline] {
        let cf = encode(&z, &cfg, &dict, 0xfeed, mode)?;
        let bytes = cf.to_bytes();
        let parsed = CompressedFeature::from_bytes(&bytes)?;
        assert_eq!(decode(&parsed, &dict)?.indices(), z.indices());
        println!(
            "{mode:?}: payload {} bits ({:.3} bits/index vs {} fixed), container {} bytes, overhead {} bits",
            cf.payload_bits,
            f64::from(cf.payload_bits) / 16.0,
            cfg.bits_per_index(),
            bytes.len(),
            cf.overhead_bits()
        );
    }
    Ok(())
}
