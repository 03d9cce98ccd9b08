//! Generate a clustered embedding set with matching text rows, split it, and write both
//! files to a temporary directory.
//!
//! `cargo run --example synthetic_dataset`

use pqvae::store::{generate_synthetic, load_dataset, save_dataset, save_text_embeddings, split_with, SplitMode, SyntheticSpec};

fn main() -> pqvae::Result<()> {
    let spec = SyntheticSpec { dim: 32, num_classes: 4, per_class_count: 50, cluster_spread: 0.2, seed: 1 };
    let (ds, text) = generate_synthetic(&spec)?;
    println!("{} rows of dim {}, {} classes", ds.count(), ds.dim(), text.num_classes());

    let (train, test) = split_with(&ds, 0.8, 7, SplitMode::Stratified)?;
    println!("stratified split: {} train / {} test", train.count(), test.count());
    let (seen, unseen) = split_with(&ds, 0.5, 7, SplitMode::ByLabel)?;
    println!("label split: {} / {} rows over disjoint classes", seen.count(), unseen.count());

    let dir = std::env::temp_dir().join("pqvae_synthetic_example");
    std::fs::create_dir_all(&dir)?;
    save_dataset(&train, &dir.join("train.emb"))?;
    save_text_embeddings(&text, &dir.join("text.txe"))?;
    let back = load_dataset(&dir.join("train.emb"))?;
    assert_eq!(back.content_hash(), train.content_hash());
    println!("wrote {} (hash {:016x})", dir.display(), back.content_hash());
    Ok(())
}
