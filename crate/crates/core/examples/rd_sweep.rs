//! Sweep codec and baseline configurations, then pick the cheapest one under a distortion
//! ceiling.
//!
//! `cargo run --release --example rd_sweep`

use pqvae::eval::{emit_report, run_sweep, ReportMeta, Scheme, SweepCell, SweepData, SweepSpec};
use pqvae::model::{Activation, CodecArchitecture, TrainConfig};
use pqvae::pq::PQConfig;
use pqvae::store::{generate_synthetic, split_with, SplitMode, SyntheticSpec};

fn main() -> pqvae::Result<()> {
    let (ds, text) = generate_synthetic(&SyntheticSpec { dim: 64, num_classes: 8, per_class_count: 100, cluster_spread: 0.1, seed: 7 })?;
    let (tr, te) = split_with(&ds, 0.8, 1, SplitMode::Stratified)?;
    let (xtr, xte) = (tr.to_array(), te.to_array());

    let train = TrainConfig { epochs: 15, seed: 3, ..Default::default() };
    let mut cells = Vec::new();
    for scheme in [Scheme::PqvaeShared, Scheme::KmeansPq] {
        for k in [4usize, 16] {
            let arch = CodecArchitecture::mirrored(64, &[128], Activation::Silu, PQConfig::new(2, 2, 16, 4, k)?);
            cells.push(SweepCell { scheme, arch, train: train.clone(), sq_bits: 0, sq_entropy: false });
        }
    }
    let arch = cells[0].arch.clone();
    cells.push(SweepCell { scheme: Scheme::ScalarQ, arch, train: train.clone(), sq_bits: 1, sq_entropy: true });

    let spec = SweepSpec { cells, d_max: Some(0.05) };
    let data = SweepData { train: xtr.view(), test: xte.view(), test_labels: te.labels(), text: Some(&text) };
    let report = run_sweep(&spec, data)?;
    for (i, p) in report.points.iter().enumerate() {
        println!("cell {i}: {:<16} {:.5} bpd  D {:.4}  acc {:.3}", p.scheme, p.bpd, p.distortion, p.accuracy.unwrap_or(f64::NAN));
    }
    println!("{:?}", report.selection);

    let dir = std::env::temp_dir().join("pqvae_sweep_example");
    std::fs::create_dir_all(&dir)?;
    let meta = ReportMeta { seed: 3, dataset_hash: format!("{:016x}", ds.content_hash()), timestamp: None };
    emit_report(&report.points, Some(&report.selection), &meta, &dir, "sweep")?;
    println!("wrote {}", dir.join("sweep.csv").display());
    Ok(())
}
