//! Comparison schemes: learned scalar quantization, per-position VQ feasibility, and the
//! k-means product-quantized autoencoder.

use std::path::Path;

use ndarray::ArrayView2;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::entropy::build_dictionary;
use crate::error::{config_err, format_err, Error, Result};
use crate::format::{read_file, to_f32_grid, write_file, ByteReader, ByteWriter};
use crate::kmeans::{train_shared_codebook, KMeansParams};
use crate::model::{latent_subvectors, train_continuous, CodecArchitecture, TrainConfig, TrainOutcome};
use crate::pq::{ceil_log2, PQConfig};

pub const SQ_MAGIC: &[u8; 4] = b"SQZ1";

/// Largest per-position codebook the VQ baseline agrees to train.
pub const MAX_VQ_CODEBOOK: u64 = 1 << 16;

/// Samples fed to Lloyd-Max; larger inputs are subsampled with the training seed.
const MAX_SQ_SAMPLES: usize = 1 << 20;

/// Shared per-dimension scalar quantizer. Features are mapped into `[-0.5, 0.5]` by
/// `u = (x - offset) * scale` and snapped to the nearest level.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarQuantizer {
    bits_per_dim: u8,
    scale: f64,
    offset: f64,
    levels: Vec<f64>,
}

impl ScalarQuantizer {
    pub fn new(bits_per_dim: u8, scale: f64, offset: f64, levels: Vec<f64>) -> Result<Self> {
        if !(1..=16).contains(&bits_per_dim) {
            return Err(config_err!("bits per dimension must be in 1..=16, got {bits_per_dim}"));
        }
        if levels.len() != 1usize << bits_per_dim {
            return Err(config_err!("{} bits need {} levels, got {}", bits_per_dim, 1usize << bits_per_dim, levels.len()));
        }
        if !(scale.is_finite() && scale > 0.0 && offset.is_finite()) {
            return Err(config_err!("affine map needs a positive finite scale and finite offset"));
        }
        if levels.iter().any(|l| !(-0.5..=0.5).contains(l)) {
            return Err(config_err!("levels must lie in [-0.5, 0.5]"));
        }
        if levels.windows(2).any(|p| p[0] >= p[1]) {
            return Err(config_err!("levels must be strictly increasing"));
        }
        Ok(Self { bits_per_dim, scale, offset, levels })
    }

    pub fn bits_per_dim(&self) -> u8 {
        self.bits_per_dim
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    /// Rate before entropy coding.
    pub fn raw_bpd(&self) -> f64 {
        f64::from(self.bits_per_dim)
    }

    fn to_unit(&self, x: f64) -> f64 {
        ((x - self.offset) * self.scale).clamp(-0.5, 0.5)
    }

    /// Index of the nearest level to `u`; a value exactly between two levels takes the lower.
    fn nearest(&self, u: f64) -> u32 {
        self.levels.windows(2).take_while(|p| 0.5 * (p[0] + p[1]) < u).count() as u32
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        w.bytes(SQ_MAGIC).u8(self.bits_per_dim).f32(self.scale as f32).f32(self.offset as f32);
        w.f32s(self.levels.iter().map(|&l| l as f32));
        w.into_inner()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes, "SQZ1");
        r.expect_magic(SQ_MAGIC)?;
        let bits = r.u8()?;
        if !(1..=16).contains(&bits) {
            return Err(format_err!("SQZ1: bits per dimension {bits} out of range"));
        }
        let scale = f64::from(r.f32()?);
        let offset = f64::from(r.f32()?);
        let levels = r.f32s(1usize << bits)?.into_iter().map(f64::from).collect();
        r.finish()?;
        Self::new(bits, scale, offset, levels).map_err(|e| format_err!("SQZ1: {e}"))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&read_file(path)?)
    }
}

/// Per-dimension level indices of `x`.
pub fn sq_quantize(x: &[f64], q: &ScalarQuantizer) -> Vec<u32> {
    x.iter().map(|&v| q.nearest(q.to_unit(v))).collect()
}

/// Feature-space values of level indices.
pub fn sq_dequantize(indices: &[u32], q: &ScalarQuantizer) -> Result<Vec<f64>> {
    indices
        .iter()
        .map(|&i| {
            let level = q.levels.get(i as usize).ok_or_else(|| Error::Range(format!("level index {i}")))?;
            Ok(level / q.scale + q.offset)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct ScalarFit {
    pub quantizer: ScalarQuantizer,
    /// Mean squared error in the unit domain, before the first update and after every one.
    pub mse_trace: Vec<f64>,
}

/// Fit a scalar quantizer to every entry of `features` by Lloyd-Max iteration.
pub fn train_scalar_quantizer(features: ArrayView2<'_, f64>, bits_per_dim: u8, seed: u64) -> Result<ScalarFit> {
    if !(1..=16).contains(&bits_per_dim) {
        return Err(config_err!("bits per dimension must be in 1..=16, got {bits_per_dim}"));
    }
    let mut values: Vec<f64> = features.iter().copied().collect();
    if values.is_empty() {
        return Err(config_err!("no values to fit a scalar quantizer to"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite feature value".into()));
    }
    let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let n_levels = 1usize << bits_per_dim;

    if hi - lo <= 0.0 || !((hi - lo) as f32).is_normal() {
        let quantizer = ScalarQuantizer::new(bits_per_dim, 1.0, to_f32_grid(lo), constant_levels(n_levels))?;
        return Ok(ScalarFit { quantizer, mse_trace: vec![0.0] });
    }
    let scale = to_f32_grid(1.0 / (hi - lo));
    let offset = to_f32_grid(0.5 * (lo + hi));

    if values.len() > MAX_SQ_SAMPLES {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        values = sample(&mut rng, values.len(), MAX_SQ_SAMPLES).into_iter().map(|i| values[i]).collect();
    }
    let mut u: Vec<f64> = values.iter().map(|&x| ((x - offset) * scale).clamp(-0.5, 0.5)).collect();
    u.sort_by(f64::total_cmp);
    let (levels, mse_trace) = lloyd_max(&u, n_levels, 200, 1e-10);
    let levels = finalize_levels(levels);
    Ok(ScalarFit { quantizer: ScalarQuantizer::new(bits_per_dim, scale, offset, levels)?, mse_trace })
}

/// Uniform cell centres with the one nearest zero moved onto zero.
fn constant_levels(n: usize) -> Vec<f64> {
    let mut levels: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64 - 0.5).collect();
    let nearest = (0..n).min_by(|&a, &b| levels[a].abs().total_cmp(&levels[b].abs())).unwrap();
    levels[nearest] = 0.0;
    levels
}

/// Lloyd-Max on sorted samples. Cell sums come from prefix sums, so each iteration is
/// `O(levels * log samples)`.
fn lloyd_max(sorted: &[f64], n_levels: usize, max_iters: usize, tol: f64) -> (Vec<f64>, Vec<f64>) {
    let n = sorted.len();
    let mut s1 = Vec::with_capacity(n + 1);
    let mut s2 = Vec::with_capacity(n + 1);
    s1.push(0.0);
    s2.push(0.0);
    for &v in sorted {
        s1.push(s1.last().unwrap() + v);
        s2.push(s2.last().unwrap() + v * v);
    }
    // cell j holds samples [b[j], b[j+1]); boundaries are midpoints, ties go to the lower cell
    let bounds = |levels: &[f64]| -> Vec<usize> {
        let mut b = Vec::with_capacity(levels.len() + 1);
        b.push(0);
        for p in levels.windows(2) {
            let m = 0.5 * (p[0] + p[1]);
            b.push(sorted.partition_point(|&v| v <= m));
        }
        b.push(n);
        b
    };
    let mse = |levels: &[f64], b: &[usize]| -> f64 {
        let mut total = 0.0;
        for (j, &l) in levels.iter().enumerate() {
            let (a, e) = (b[j], b[j + 1]);
            let cnt = (e - a) as f64;
            total += (s2[e] - s2[a]) - 2.0 * l * (s1[e] - s1[a]) + cnt * l * l;
        }
        (total / n as f64).max(0.0)
    };

    let mut levels: Vec<f64> = (0..n_levels)
        .map(|j| {
            let q = ((j as f64 + 0.5) / n_levels as f64 * n as f64) as usize;
            sorted[q.min(n - 1)]
        })
        .collect();
    spread_duplicates(&mut levels);
    let mut b = bounds(&levels);
    let mut trace = vec![mse(&levels, &b)];
    for _ in 0..max_iters {
        let mut moved = 0.0f64;
        for j in 0..n_levels {
            let (a, e) = (b[j], b[j + 1]);
            if e > a {
                let c = (s1[e] - s1[a]) / (e - a) as f64;
                moved = moved.max((c - levels[j]).abs());
                levels[j] = c;
            }
        }
        b = bounds(&levels);
        trace.push(mse(&levels, &b));
        if moved < tol {
            break;
        }
    }
    (levels, trace)
}

/// Replace repeated initial levels (from repeated sample values) by points strictly between
/// their neighbours.
fn spread_duplicates(levels: &mut [f64]) {
    let n = levels.len();
    for j in 1..n {
        if levels[j] <= levels[j - 1] {
            let upper = levels[j + 1..].iter().copied().find(|&v| v > levels[j - 1]).unwrap_or(0.5);
            let upper = if upper > levels[j - 1] { upper } else { levels[j - 1] + 1e-6 };
            levels[j] = levels[j - 1] + (upper - levels[j - 1]) / (n - j + 1) as f64;
        }
    }
}

/// Snap to `f32`, clamp into range, and keep the order strict after rounding.
fn finalize_levels(mut levels: Vec<f64>) -> Vec<f64> {
    for l in levels.iter_mut() {
        *l = to_f32_grid(l.clamp(-0.5, 0.5));
    }
    for j in 1..levels.len() {
        if levels[j] <= levels[j - 1] {
            levels[j] = f64::from(next_up(levels[j - 1] as f32));
        }
    }
    levels
}

fn next_up(x: f32) -> f32 {
    if x == 0.0 {
        f32::from_bits(1)
    } else if x > 0.0 {
        f32::from_bits(x.to_bits() + 1)
    } else {
        f32::from_bits(x.to_bits() - 1)
    }
}

/// Rates of a scalar quantizer over a set of features.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarRate {
    /// Bits per dimension without entropy coding.
    pub raw_bpd: f64,
    /// Huffman-coded bits per dimension with a dictionary fit to the same indices.
    pub coded_bpd: f64,
    /// Exact Huffman-coded bit total over all features.
    pub coded_bits: u64,
}

pub fn sq_rates(features: ArrayView2<'_, f64>, q: &ScalarQuantizer) -> Result<ScalarRate> {
    let mut hist = vec![0u64; q.levels.len()];
    for row in features.outer_iter() {
        for v in row.iter() {
            hist[q.nearest(q.to_unit(*v)) as usize] += 1;
        }
    }
    let entries: u64 = hist.iter().sum();
    if entries == 0 {
        return Err(config_err!("no features to rate"));
    }
    let coded_bits = build_dictionary(&hist)?.cost(&hist)?;
    Ok(ScalarRate { raw_bpd: q.raw_bpd(), coded_bpd: coded_bits as f64 / entries as f64, coded_bits })
}

/// Codebook size a per-position VQ needs to spend `budget_bits` over an `h x w` grid.
pub fn vqvae_feasibility(budget_bits: u64, h: usize, w: usize) -> Result<u64> {
    let positions = (h * w) as u64;
    if positions == 0 {
        return Err(config_err!("grid must have at least one position"));
    }
    let bits = budget_bits / positions;
    1u64.checked_shl(bits as u32)
        .filter(|_| bits < 64)
        .ok_or_else(|| Error::Range(format!("2^{bits} codewords does not fit in 64 bits")))
}

/// One codeword per spatial position, covering all `c` channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PerPositionVQConfig {
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub k: usize,
}

impl PerPositionVQConfig {
    /// Checks that `K` codewords fit `budget_bits` and stay trainable.
    pub fn new(h: usize, w: usize, c: usize, k: usize, budget_bits: u64) -> Result<Self> {
        let cfg = Self { h, w, c, k };
        let pq = cfg.pq_config()?;
        let cost = u64::from(ceil_log2(k as u64)) * pq.positions() as u64;
        if cost > budget_bits {
            return Err(config_err!("{h}x{w} positions at ceil(log2 {k}) bits cost {cost} bits, over the {budget_bits}-bit budget"));
        }
        if k as u64 > MAX_VQ_CODEBOOK {
            let needed = vqvae_feasibility(budget_bits, h, w).map(|n| n.to_string()).unwrap_or_else(|_| "too many".into());
            return Err(config_err!(
                "per-position VQ with K = {k} refused: {budget_bits} bits / ({h}x{w}) positions = {} bits per position, \
                 i.e. {needed} codewords; the limit is {MAX_VQ_CODEBOOK}",
                budget_bits / (h * w) as u64
            ));
        }
        Ok(cfg)
    }

    /// The equivalent product-quantizer layout: a single subspace per position.
    pub fn pq_config(&self) -> Result<PQConfig> {
        PQConfig::new(self.h, self.w, self.c, 1, self.k)
    }
}

/// Autoencoder trained without quantization, then a shared codebook fit by k-means to its
/// latent subvectors. Produces parameters usable by the same compression pipeline.
pub fn train_kmeans_pq(data: ArrayView2<'_, f64>, arch: &CodecArchitecture, cfg: &TrainConfig) -> Result<TrainOutcome> {
    let mut outcome = train_continuous(data, arch, cfg)?;
    let subvectors = latent_subvectors(data, &outcome.params);
    let (codebook, km) = train_shared_codebook(arch.pq, subvectors.view(), cfg.seed, &KMeansParams::default())?;
    outcome.params.codebook = codebook;
    outcome.init_mse = Some(km.final_mse());
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use ndarray::Array2;
    use rand::Rng;

    use super::*;

    fn uniform(n: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, 4), |_| rng.random_range(-0.5..0.5))
    }

    #[test]
    fn one_bit_uniform_levels() {
        let fit = train_scalar_quantizer(uniform(5000, 1).view(), 1, 0).unwrap();
        let l = fit.quantizer.levels();
        assert!((l[0] + 0.25).abs() < 1e-2 && (l[1] - 0.25).abs() < 1e-2, "{l:?}");
    }

    #[test]
    fn mse_trace_never_increases() {
        let data = uniform(2000, 2).mapv(|v: f64| v * v * v);
        for bits in 1..=4 {
            let fit = train_scalar_quantizer(data.view(), bits, 0).unwrap();
            for p in fit.mse_trace.windows(2) {
                assert!(p[1] <= p[0] + 1e-15, "{bits} bits: {p:?}");
            }
        }
    }

    #[test]
    fn more_bits_lower_mse() {
        let data = uniform(2000, 3);
        let one = train_scalar_quantizer(data.view(), 1, 0).unwrap();
        let two = train_scalar_quantizer(data.view(), 2, 0).unwrap();
        assert_eq!(two.quantizer.levels().len(), 4);
        assert!(two.mse_trace.last() < one.mse_trace.last());
    }

    #[test]
    fn constant_input() {
        let data = Array2::from_elem((10, 3), 0.7);
        let q = train_scalar_quantizer(data.view(), 2, 0).unwrap().quantizer;
        assert_eq!(q.levels().len(), 4);
        let back = sq_dequantize(&sq_quantize(&[0.7, 0.7], &q), &q).unwrap();
        assert!(back.iter().all(|&v| (v - to_f32_grid(0.7)).abs() < 1e-12), "{back:?}");
    }

    #[test]
    fn ties_go_to_lower_level() {
        let q = ScalarQuantizer::new(1, 1.0, 0.0, vec![-0.25, 0.25]).unwrap();
        assert_eq!(sq_quantize(&[0.0, 0.25, -0.25, 0.1], &q), vec![0, 1, 0, 1]);
    }

    #[test]
    fn round_trip_error_bounded_by_half_gap() {
        let data = uniform(500, 4);
        let q = train_scalar_quantizer(data.view(), 3, 0).unwrap().quantizer;
        let half_gap = q.levels().windows(2).map(|p| p[1] - p[0]).fold(0.0, f64::max) / 2.0;
        let x: Vec<f64> = data.iter().copied().collect();
        let back = sq_dequantize(&sq_quantize(&x, &q), &q).unwrap();
        for (a, b) in x.iter().zip(&back) {
            let inner_lo = q.levels()[0] / q.scale() + q.offset();
            let inner_hi = q.levels()[7] / q.scale() + q.offset();
            if (inner_lo..=inner_hi).contains(a) {
                assert!((a - b).abs() * q.scale() <= half_gap + 1e-12);
            }
        }
    }

    #[test]
    fn file_round_trip() {
        let q = train_scalar_quantizer(uniform(300, 5).view(), 2, 0).unwrap().quantizer;
        let bytes = q.to_bytes();
        let back = ScalarQuantizer::from_bytes(&bytes).unwrap();
        assert_eq!(back, q);
        assert_eq!(back.to_bytes(), bytes);
        assert!(ScalarQuantizer::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn raw_rate_is_bits_per_dim() {
        let data = uniform(100, 6);
        for bits in [1, 2, 3] {
            let q = train_scalar_quantizer(data.view(), bits, 0).unwrap().quantizer;
            let r = sq_rates(data.view(), &q).unwrap();
            assert_eq!(r.raw_bpd, f64::from(bits));
            assert!(r.coded_bpd <= r.raw_bpd + 1e-12);
        }
    }

    #[test]
    fn feasibility_arithmetic() {
        assert_eq!(vqvae_feasibility(600, 5, 5).unwrap(), 1 << 24);
        assert_eq!(vqvae_feasibility(25, 5, 5).unwrap(), 2);
        assert!(matches!(vqvae_feasibility(6400, 1, 1), Err(Error::Range(_))));
    }

    #[test]
    fn per_position_guard() {
        assert!(PerPositionVQConfig::new(2, 2, 16, 4096, 48).is_ok());
        let err = PerPositionVQConfig::new(5, 5, 128, 1 << 24, 600).unwrap_err();
        assert!(err.to_string().contains("16777216"), "{err}");
        assert!(PerPositionVQConfig::new(2, 2, 16, 8192, 48).is_err());
    }
}
