//! Product quantization against a single codebook shared by every spatial position and every
//! subspace of the latent grid.
//!
//! A latent grid of shape `h x w x c` is treated as `h*w` channel vectors of length `c`. Each
//! channel is cut into `d` contiguous subvectors of length `d_sub = c / d`, and every subvector
//! is replaced by the index of its nearest codeword (squared Euclidean distance, lowest index on
//! ties). Indices are laid out position-major, subspace-minor.

use std::fmt;

use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::error::{config_err, format_err, Error, Result};
use crate::format::{fnv1a64, to_f32_grid, ByteReader, ByteWriter};

pub const CODEBOOK_MAGIC: &[u8; 4] = b"PQC1";
const CODEBOOK_VERSION: u16 = 1;

/// Shape of the latent grid and of its product quantizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PQConfig {
    pub h: usize,
    pub w: usize,
    /// Channel width at each position.
    pub c: usize,
    /// Number of subspaces each channel is split into.
    pub d: usize,
    /// Codebook size.
    pub k: usize,
}

impl PQConfig {
    pub fn new(h: usize, w: usize, c: usize, d: usize, k: usize) -> Result<Self> {
        let cfg = Self { h, w, c, d, k };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.h == 0 || self.w == 0 || self.c == 0 || self.d == 0 || self.k == 0 {
            return Err(config_err!("all of h, w, c, d, K must be positive: {self}"));
        }
        if self.c % self.d != 0 {
            return Err(config_err!("channel width {} is not divisible by {} subspaces", self.c, self.d));
        }
        if self.k > u32::MAX as usize {
            return Err(config_err!("codebook size {} exceeds u32 indices", self.k));
        }
        Ok(())
    }

    pub fn d_sub(&self) -> usize {
        self.c / self.d
    }

    pub fn positions(&self) -> usize {
        self.h * self.w
    }

    /// Number of reals in a latent grid, `h*w*c`.
    pub fn latent_len(&self) -> usize {
        self.h * self.w * self.c
    }

    /// Number of indices per feature, `h*w*d`.
    pub fn symbols(&self) -> usize {
        self.h * self.w * self.d
    }

    /// `ceil(log2 K)`.
    pub fn bits_per_index(&self) -> u32 {
        ceil_log2(self.k as u64)
    }
}

impl fmt::Display for PQConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{} d={} K={}", self.h, self.w, self.c, self.d, self.k)
    }
}

/// Nearest row of `rows` to `x` by squared distance, lowest index on ties. A candidate is
/// abandoned once its partial sum reaches the best distance so far, which cannot change the
/// result.
pub(crate) fn nearest_row(rows: ArrayView2<'_, f64>, x: &[f64]) -> (u32, f64) {
    let n = x.len();
    let mut best = (0u32, f64::INFINITY);
    let mut visit = |k: usize, row: &[f64]| {
        let mut dist = 0.0;
        for (a, b) in x.iter().zip(row) {
            let t = a - b;
            dist += t * t;
            if dist >= best.1 {
                return;
            }
        }
        if dist < best.1 {
            best = (k as u32, dist);
        }
    };
    match rows.as_slice() {
        Some(flat) if n > 0 => flat.chunks_exact(n).enumerate().for_each(|(k, r)| visit(k, r)),
        _ => rows.outer_iter().enumerate().for_each(|(k, r)| visit(k, &r.to_vec())),
    }
    best
}

pub fn ceil_log2(n: u64) -> u32 {
    assert!(n > 0);
    n.next_power_of_two().trailing_zeros()
}

/// Fixed-length cost of one index tensor: `h * w * d * ceil(log2 K)` bits.
pub fn fixed_index_bits(config: &PQConfig) -> u64 {
    (config.h * config.w * config.d) as u64 * u64::from(config.bits_per_index())
}

/// `K` codewords of length `d_sub`.
#[derive(Debug, Clone, PartialEq)]
pub struct SharedCodebook {
    config: PQConfig,
    codewords: Array2<f64>,
}

impl SharedCodebook {
    pub fn new(config: PQConfig, codewords: Array2<f64>) -> Result<Self> {
        config.validate()?;
        if codewords.dim() != (config.k, config.d_sub()) {
            return Err(config_err!(
                "codebook shape {:?} does not match K={} x d_sub={}",
                codewords.dim(),
                config.k,
                config.d_sub()
            ));
        }
        if codewords.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("codebook has non-finite entries".into()));
        }
        Ok(Self { config, codewords })
    }

    pub fn config(&self) -> &PQConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.config.k
    }

    pub fn is_empty(&self) -> bool {
        self.config.k == 0
    }

    pub fn codewords(&self) -> ArrayView2<'_, f64> {
        self.codewords.view()
    }

    pub fn codewords_mut(&mut self) -> &mut Array2<f64> {
        &mut self.codewords
    }

    pub fn codeword(&self, k: usize) -> ArrayView1<'_, f64> {
        self.codewords.row(k)
    }

    /// Snap every codeword entry onto the `f32` grid.
    pub fn round_to_f32(&mut self) {
        self.codewords.mapv_inplace(to_f32_grid);
    }

    /// Index of the nearest codeword and its squared distance. Lowest index wins ties.
    pub fn nearest(&self, sub: &[f64]) -> (u32, f64) {
        debug_assert_eq!(sub.len(), self.config.d_sub());
        nearest_row(self.codewords.view(), sub)
    }

    /// Quantize a flat latent buffer of length `h*w*c`, returning `h*w*d` indices.
    pub fn quantize_slice(&self, latent: &[f64]) -> Vec<u32> {
        latent.chunks_exact(self.config.d_sub()).map(|s| self.nearest(s).0).collect()
    }

    /// Write the codewords selected by `indices` into `out` (length `indices.len() * d_sub`).
    pub fn dequantize_into(&self, indices: &[u32], out: &mut [f64]) -> Result<()> {
        let ds = self.config.d_sub();
        for (&idx, chunk) in indices.iter().zip(out.chunks_exact_mut(ds)) {
            let idx = idx as usize;
            if idx >= self.config.k {
                return Err(Error::Range(format!("index {idx} >= codebook size {}", self.config.k)));
            }
            for (o, &v) in chunk.iter_mut().zip(self.codewords.row(idx).iter()) {
                *o = v;
            }
        }
        Ok(())
    }

    fn payload_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        w.f32s(self.codewords.iter().map(|&v| v as f32));
        w.into_inner()
    }

    /// FNV-1a over the little-endian `f32` codeword payload. Bitstreams pin this value.
    pub fn content_hash(&self) -> u64 {
        fnv1a64(&self.payload_bytes())
    }

    /// `PQC1` serialization.
    pub fn to_bytes(&self) -> Vec<u8> {
        let payload = self.payload_bytes();
        let mut w = ByteWriter::new();
        w.bytes(CODEBOOK_MAGIC).u16(CODEBOOK_VERSION);
        write_config(&mut w, &self.config);
        w.bytes(&payload).u64(fnv1a64(&payload));
        w.into_inner()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes, "PQC1");
        let cb = Self::read_from(&mut r)?;
        r.finish()?;
        Ok(cb)
    }

    pub(crate) fn read_from(r: &mut ByteReader<'_>) -> Result<Self> {
        r.expect_magic(CODEBOOK_MAGIC)?;
        let version = r.u16()?;
        if version != CODEBOOK_VERSION {
            return Err(format_err!("PQC1: unsupported version {version}"));
        }
        let config = read_config(r).map_err(|e| format_err!("PQC1: {e}"))?;
        let n = config.k.checked_mul(config.d_sub()).ok_or_else(|| format_err!("PQC1: size overflow"))?;
        let start = r.position();
        let values = r.f32s(n)?;
        let hash = fnv1a64(r.since(start));
        let stored = r.u64()?;
        if stored != hash {
            return Err(format_err!("PQC1: payload hash {hash:#018x} != stored {stored:#018x}"));
        }
        let codewords = Array2::from_shape_vec((config.k, config.d_sub()), values.into_iter().map(f64::from).collect())
            .expect("shape checked");
        Self::new(config, codewords).map_err(|e| format_err!("PQC1: {e}"))
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        crate::format::write_file(path, &self.to_bytes())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_bytes(&crate::format::read_file(path)?)
    }
}

pub(crate) fn write_config(w: &mut ByteWriter, cfg: &PQConfig) {
    for v in [cfg.h, cfg.w, cfg.c, cfg.d, cfg.k] {
        w.u32(v as u32);
    }
}

pub(crate) fn read_config(r: &mut ByteReader<'_>) -> Result<PQConfig> {
    let h = r.u32()? as usize;
    let w = r.u32()? as usize;
    let c = r.u32()? as usize;
    let d = r.u32()? as usize;
    let k = r.u32()? as usize;
    PQConfig::new(h, w, c, d, k)
}

/// An `h x w x c` real tensor, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentGrid {
    pub h: usize,
    pub w: usize,
    pub c: usize,
    data: Vec<f64>,
}

impl LatentGrid {
    pub fn new(h: usize, w: usize, c: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != h * w * c {
            return Err(config_err!("{} values for a {h}x{w}x{c} grid", data.len()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerics { param: "latent".into(), detail: "non-finite entry".into() });
        }
        Ok(Self { h, w, c, data })
    }

    pub fn zeros(config: &PQConfig) -> Self {
        Self { h: config.h, w: config.w, c: config.c, data: vec![0.0; config.latent_len()] }
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Channel vector at flat position `i`.
    pub fn channel(&self, i: usize) -> &[f64] {
        &self.data[i * self.c..(i + 1) * self.c]
    }

    pub fn squared_distance(&self, other: &LatentGrid) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b) * (a - b)).sum()
    }

    fn check(&self, cfg: &PQConfig) -> Result<()> {
        if (self.h, self.w, self.c) != (cfg.h, cfg.w, cfg.c) {
            return Err(config_err!(
                "latent {}x{}x{} does not match codebook config {cfg}",
                self.h,
                self.w,
                self.c
            ));
        }
        Ok(())
    }
}

/// `h x w x d` codeword indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct IndexTensor {
    pub h: usize,
    pub w: usize,
    pub d: usize,
    indices: Vec<u32>,
}

impl IndexTensor {
    pub fn new(h: usize, w: usize, d: usize, indices: Vec<u32>) -> Result<Self> {
        if indices.len() != h * w * d {
            return Err(config_err!("{} indices for a {h}x{w}x{d} tensor", indices.len()));
        }
        Ok(Self { h, w, d, indices })
    }

    pub fn zeros(config: &PQConfig) -> Self {
        Self { h: config.h, w: config.w, d: config.d, indices: vec![0; config.symbols()] }
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn into_indices(self) -> Vec<u32> {
        self.indices
    }

    /// Histogram over `k` symbols; indices at or above `k` are ignored.
    pub fn histogram(&self, k: usize) -> Vec<u64> {
        let mut hist = vec![0u64; k];
        for &i in &self.indices {
            if let Some(slot) = hist.get_mut(i as usize) {
                *slot += 1;
            }
        }
        hist
    }
}

/// Nearest-codeword indices for every subvector of `latent`.
pub fn quantize(latent: &LatentGrid, cb: &SharedCodebook) -> Result<IndexTensor> {
    latent.check(cb.config())?;
    let cfg = cb.config();
    IndexTensor::new(cfg.h, cfg.w, cfg.d, cb.quantize_slice(latent.data()))
}

/// Concatenate the selected codewords back into an `h x w x c` grid.
pub fn dequantize(z: &IndexTensor, cb: &SharedCodebook) -> Result<LatentGrid> {
    let cfg = cb.config();
    if (z.h, z.w, z.d) != (cfg.h, cfg.w, cfg.d) {
        return Err(config_err!("index tensor {}x{}x{} does not match {cfg}", z.h, z.w, z.d));
    }
    let mut out = LatentGrid::zeros(cfg);
    cb.dequantize_into(z.indices(), &mut out.data)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use ndarray::array;

    use super::*;

    fn cb2(codewords: Array2<f64>, h: usize, w: usize, d: usize) -> SharedCodebook {
        let (k, ds) = codewords.dim();
        SharedCodebook::new(PQConfig::new(h, w, ds * d, d, k).unwrap(), codewords).unwrap()
    }

    #[test]
    fn nearest_codeword_example() {
        let cb = cb2(array![[0.0, 0.0], [1.0, 1.0]], 1, 1, 1);
        let x = LatentGrid::new(1, 1, 2, vec![0.9, 0.8]).unwrap();
        assert_eq!(quantize(&x, &cb).unwrap().indices(), &[1]);
    }

    #[test]
    fn exact_codeword_and_tie_break() {
        let cb = cb2(array![[0.0, 0.0], [5.0, 5.0], [2.0, 0.0]], 1, 1, 1);
        let x = LatentGrid::new(1, 1, 2, vec![0.0, 0.0]).unwrap();
        let z = quantize(&x, &cb).unwrap();
        assert_eq!(z.indices(), &[0]);
        assert_eq!(dequantize(&z, &cb).unwrap().squared_distance(&x), 0.0);
        // (1, 0) is at distance 1 from both codeword 0 and codeword 2
        let tie = LatentGrid::new(1, 1, 2, vec![1.0, 0.0]).unwrap();
        assert_eq!(quantize(&tie, &cb).unwrap().indices(), &[0]);
    }

    #[test]
    fn zeros_dequantize_to_tiled_codeword_zero() {
        let cb = cb2(array![[1.5, -2.0], [3.0, 3.0]], 2, 1, 3);
        let z = IndexTensor::zeros(cb.config());
        let x = dequantize(&z, &cb).unwrap();
        for i in 0..2 {
            assert_eq!(x.channel(i), &[1.5, -2.0, 1.5, -2.0, 1.5, -2.0]);
        }
    }

    #[test]
    fn out_of_range_index() {
        let cb = cb2(array![[0.0], [1.0]], 1, 1, 1);
        let z = IndexTensor::new(1, 1, 1, vec![2]).unwrap();
        assert!(matches!(dequantize(&z, &cb), Err(Error::Range(_))));
    }

    #[test]
    fn mismatched_latent_is_config_error() {
        let cb = cb2(array![[0.0, 0.0]], 1, 1, 1);
        let x = LatentGrid::new(1, 1, 4, vec![0.0; 4]).unwrap();
        assert!(matches!(quantize(&x, &cb), Err(Error::Config(_))));
    }

    #[test]
    fn fixed_bits() {
        assert_eq!(fixed_index_bits(&PQConfig::new(5, 5, 128, 8, 8).unwrap()), 600);
        assert_eq!(fixed_index_bits(&PQConfig::new(1, 1, 1, 1, 2).unwrap()), 1);
        assert_eq!(fixed_index_bits(&PQConfig::new(5, 5, 128, 1, 1 << 24).unwrap()), 600);
        assert_eq!(fixed_index_bits(&PQConfig::new(1, 1, 4, 2, 5).unwrap()), 6);
    }

    #[test]
    fn config_validation() {
        assert!(PQConfig::new(5, 5, 128, 3, 8).is_err());
        assert!(PQConfig::new(5, 5, 128, 8, 0).is_err());
        assert_eq!(PQConfig::new(5, 5, 128, 8, 8).unwrap().d_sub(), 16);
    }

    #[test]
    fn codebook_file_round_trip_and_hash_check() {
        let mut cb = cb2(array![[0.1, 0.2], [0.3, -0.4], [1e-3, 7.0]], 2, 2, 2);
        cb.round_to_f32();
        let bytes = cb.to_bytes();
        let back = SharedCodebook::from_bytes(&bytes).unwrap();
        assert_eq!(back, cb);
        assert_eq!(back.to_bytes(), bytes);
        let mut bad = bytes.clone();
        let n = bad.len();
        bad[n - 10] ^= 1;
        assert!(matches!(SharedCodebook::from_bytes(&bad), Err(Error::Format(_))));
    }
}
