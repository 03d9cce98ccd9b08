//! Embedding datasets, class text-embedding matrices and their `EMB1`/`TXE1` files.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic "EMB1" | version u16 = 1 | flags u16 | dim u32 | count u64 | count*dim f32
//!   | [labels: count*u32] | [names: u32 name_count, then (u32 len, UTF-8 bytes)*]
//! ```
//!
//! flags bit 0 marks labels, bit 1 marks names. `TXE1` files share the layout; the labels bit
//! is never set for them.

use std::collections::BTreeSet;
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{config_err, format_err, Error, Result};
use crate::format::{fnv1a64, read_file, write_file, ByteReader, ByteWriter};

pub const EMB_MAGIC: &[u8; 4] = b"EMB1";
pub const TXE_MAGIC: &[u8; 4] = b"TXE1";
const VERSION: u16 = 1;
const FLAG_LABELS: u16 = 1;
const FLAG_NAMES: u16 = 2;

/// A set of `dim`-dimensional feature vectors, optionally labelled.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingDataset {
    dim: usize,
    vectors: Vec<f32>,
    labels: Option<Vec<u32>>,
    label_names: Option<Vec<String>>,
}

impl EmbeddingDataset {
    /// Build a dataset from a row-major `count x dim` buffer, checking every invariant.
    pub fn new(
        dim: usize,
        vectors: Vec<f32>,
        labels: Option<Vec<u32>>,
        label_names: Option<Vec<String>>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Data("dimension must be positive".into()));
        }
        if vectors.len() % dim != 0 {
            return Err(Error::Data(format!(
                "{} values do not form rows of dimension {dim}",
                vectors.len()
            )));
        }
        let ds = Self { dim, vectors, labels, label_names };
        ds.validate()?;
        Ok(ds)
    }

    fn validate(&self) -> Result<()> {
        if let Some(i) = self.vectors.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite value in row {}, column {}",
                i / self.dim,
                i % self.dim
            )));
        }
        if let Some(labels) = &self.labels {
            if labels.len() != self.count() {
                return Err(Error::Data(format!(
                    "{} labels for {} vectors",
                    labels.len(),
                    self.count()
                )));
            }
            if let Some(names) = &self.label_names {
                if let Some(&bad) = labels.iter().find(|&&l| l as usize >= names.len()) {
                    return Err(Error::Data(format!(
                        "label {bad} has no name ({} names)",
                        names.len()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.vectors.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.vectors.chunks_exact(self.dim)
    }

    /// Vectors widened to `f64`, one row per vector.
    pub fn to_array(&self) -> Array2<f64> {
        Array2::from_shape_vec((self.count(), self.dim), self.vectors.iter().map(|&v| f64::from(v)).collect())
            .expect("length checked at construction")
    }

    pub fn vectors(&self) -> &[f32] {
        &self.vectors
    }

    pub fn labels(&self) -> Option<&[u32]> {
        self.labels.as_deref()
    }

    pub fn label_names(&self) -> Option<&[String]> {
        self.label_names.as_deref()
    }

    /// The subset of rows at `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut vectors = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            vectors.extend_from_slice(self.row(i));
        }
        Self {
            dim: self.dim,
            vectors,
            labels: self.labels.as_ref().map(|l| indices.iter().map(|&i| l[i]).collect()),
            label_names: self.label_names.clone(),
        }
    }

    /// Copy with every row scaled to unit Euclidean norm. Zero rows are rejected.
    pub fn l2_normalized(&self) -> Result<Self> {
        let mut out = self.clone();
        for (i, row) in out.vectors.chunks_exact_mut(self.dim).enumerate() {
            let norm = row.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(Error::DegenerateNorm(format!("row {i} has zero norm")));
            }
            for v in row.iter_mut() {
                *v = (f64::from(*v) / norm) as f32;
            }
        }
        Ok(out)
    }

    /// Replace the vectors, keeping labels and names. `vectors` must have the same shape.
    pub fn with_vectors(&self, vectors: Vec<f32>) -> Result<Self> {
        if vectors.len() != self.vectors.len() {
            return Err(Error::Data(format!(
                "replacement has {} values, dataset has {}",
                vectors.len(),
                self.vectors.len()
            )));
        }
        Self::new(self.dim, vectors, self.labels.clone(), self.label_names.clone())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        encode_matrix(EMB_MAGIC, self.dim, &self.vectors, self.labels.as_deref(), self.label_names.as_deref())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let raw = decode_matrix(bytes, EMB_MAGIC, "EMB1")?;
        Self::new(raw.dim, raw.vectors, raw.labels, raw.names)
    }

    /// FNV-1a of the canonical serialization; used to pin datasets in reports.
    pub fn content_hash(&self) -> u64 {
        fnv1a64(&self.to_bytes())
    }
}

/// One text embedding per class, used as zero-shot classifier weights.
#[derive(Debug, Clone, PartialEq)]
pub struct TextEmbeddingMatrix {
    dim: usize,
    rows: Vec<f32>,
    class_names: Vec<String>,
}

impl TextEmbeddingMatrix {
    pub fn new(dim: usize, rows: Vec<f32>, class_names: Vec<String>) -> Result<Self> {
        if dim == 0 || rows.is_empty() || rows.len() % dim != 0 {
            return Err(Error::Data(format!(
                "{} values do not form a non-empty matrix of dimension {dim}",
                rows.len()
            )));
        }
        let n = rows.len() / dim;
        if !class_names.is_empty() && class_names.len() != n {
            return Err(Error::Data(format!("{} class names for {n} rows", class_names.len())));
        }
        for (i, row) in rows.chunks_exact(dim).enumerate() {
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Data(format!("text row {i} has non-finite entries")));
            }
            if row.iter().all(|&v| v == 0.0) {
                return Err(Error::Data(format!("text row {i} has zero norm")));
            }
        }
        Ok(Self { dim, rows, class_names })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.rows.len() / self.dim
    }

    pub fn row(&self, class: usize) -> &[f32] {
        &self.rows[class * self.dim..(class + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.rows.chunks_exact(self.dim)
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let names = (!self.class_names.is_empty()).then_some(self.class_names.as_slice());
        encode_matrix(TXE_MAGIC, self.dim, &self.rows, None, names)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let raw = decode_matrix(bytes, TXE_MAGIC, "TXE1")?;
        if raw.labels.is_some() {
            return Err(format_err!("TXE1: labels flag must not be set"));
        }
        Self::new(raw.dim, raw.vectors, raw.names.unwrap_or_default())
    }
}

struct RawMatrix {
    dim: usize,
    vectors: Vec<f32>,
    labels: Option<Vec<u32>>,
    names: Option<Vec<String>>,
}

/// Header fields of an `EMB1`/`TXE1` file, for inspection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatrixHeader {
    pub magic: [u8; 4],
    pub version: u16,
    pub flags: u16,
    pub dim: u32,
    pub count: u64,
}

fn encode_matrix(
    magic: &[u8; 4],
    dim: usize,
    values: &[f32],
    labels: Option<&[u32]>,
    names: Option<&[String]>,
) -> Vec<u8> {
    let mut flags = 0;
    if labels.is_some() {
        flags |= FLAG_LABELS;
    }
    if names.is_some() {
        flags |= FLAG_NAMES;
    }
    let mut w = ByteWriter::new();
    w.bytes(magic)
        .u16(VERSION)
        .u16(flags)
        .u32(dim as u32)
        .u64((values.len() / dim) as u64)
        .f32s(values.iter().copied());
    if let Some(labels) = labels {
        for &l in labels {
            w.u32(l);
        }
    }
    if let Some(names) = names {
        w.u32(names.len() as u32);
        for n in names {
            w.string(n);
        }
    }
    w.into_inner()
}

pub fn read_matrix_header(bytes: &[u8]) -> Result<MatrixHeader> {
    let mut r = ByteReader::new(bytes, "embedding header");
    let magic: [u8; 4] = r.take(4)?.try_into().unwrap();
    Ok(MatrixHeader { magic, version: r.u16()?, flags: r.u16()?, dim: r.u32()?, count: r.u64()? })
}

fn decode_matrix(bytes: &[u8], magic: &[u8; 4], what: &'static str) -> Result<RawMatrix> {
    let mut r = ByteReader::new(bytes, what);
    r.expect_magic(magic)?;
    let version = r.u16()?;
    if version != VERSION {
        return Err(format_err!("{what}: unsupported version {version}"));
    }
    let flags = r.u16()?;
    if flags & !(FLAG_LABELS | FLAG_NAMES) != 0 {
        return Err(format_err!("{what}: unknown flag bits {flags:#06x}"));
    }
    let dim = r.u32()? as usize;
    if dim == 0 {
        return Err(format_err!("{what}: zero dimension"));
    }
    let count = usize::try_from(r.u64()?).map_err(|_| format_err!("{what}: count overflows"))?;
    let n_values = count
        .checked_mul(dim)
        .ok_or_else(|| format_err!("{what}: {count} x {dim} overflows"))?;
    let vectors = r.f32s(n_values)?;
    let labels = if flags & FLAG_LABELS != 0 {
        Some((0..count).map(|_| r.u32()).collect::<Result<Vec<_>>>()?)
    } else {
        None
    };
    let names = if flags & FLAG_NAMES != 0 {
        let n = r.u32()? as usize;
        Some((0..n).map(|_| r.string()).collect::<Result<Vec<_>>>()?)
    } else {
        None
    };
    r.finish()?;
    Ok(RawMatrix { dim, vectors, labels, names })
}

pub fn load_dataset(path: &Path) -> Result<EmbeddingDataset> {
    EmbeddingDataset::from_bytes(&read_file(path)?)
}

pub fn save_dataset(ds: &EmbeddingDataset, path: &Path) -> Result<()> {
    write_file(path, &ds.to_bytes())
}

pub fn load_text_embeddings(path: &Path) -> Result<TextEmbeddingMatrix> {
    TextEmbeddingMatrix::from_bytes(&read_file(path)?)
}

pub fn save_text_embeddings(text: &TextEmbeddingMatrix, path: &Path) -> Result<()> {
    write_file(path, &text.to_bytes())
}

/// Parameters of a clustered synthetic dataset.
///
/// `cluster_spread` is the RMS Euclidean norm of the per-vector noise, so each coordinate gets
/// Gaussian noise with standard deviation `cluster_spread / sqrt(dim)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub dim: usize,
    pub num_classes: usize,
    pub per_class_count: usize,
    pub cluster_spread: f64,
    pub seed: u64,
}

/// Draw a clustered dataset around orthonormal class anchors; the anchors double as the text
/// embeddings. Rows are ordered class by class.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(EmbeddingDataset, TextEmbeddingMatrix)> {
    if spec.dim == 0 || spec.num_classes == 0 || spec.per_class_count == 0 {
        return Err(config_err!("dim, classes and per-class count must all be positive"));
    }
    if !(spec.cluster_spread >= 0.0 && spec.cluster_spread.is_finite()) {
        return Err(config_err!("cluster spread must be a finite non-negative number"));
    }
    if spec.num_classes > spec.dim {
        return Err(config_err!(
            "{} classes cannot have orthogonal anchors in {} dimensions",
            spec.num_classes,
            spec.dim
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let anchors = random_orthonormal_rows(spec.num_classes, spec.dim, &mut rng);
    let anchors_f32: Vec<f32> = anchors.iter().map(|&v| v as f32).collect();

    let sigma = spec.cluster_spread / (spec.dim as f64).sqrt();
    let n = spec.num_classes * spec.per_class_count;
    let mut vectors = Vec::with_capacity(n * spec.dim);
    let mut labels = Vec::with_capacity(n);
    for class in 0..spec.num_classes {
        let anchor = &anchors[class * spec.dim..(class + 1) * spec.dim];
        for _ in 0..spec.per_class_count {
            for &a in anchor {
                let noise: f64 = StandardNormal.sample(&mut rng);
                vectors.push((a + sigma * noise) as f32);
            }
            labels.push(class as u32);
        }
    }
    let names: Vec<String> = (0..spec.num_classes).map(|c| format!("class_{c}")).collect();
    let ds = EmbeddingDataset::new(spec.dim, vectors, Some(labels), Some(names.clone()))?;
    let text = TextEmbeddingMatrix::new(spec.dim, anchors_f32, names)?;
    Ok((ds, text))
}

/// Parameters of [`generate_factorial`].
#[derive(Debug, Clone, PartialEq)]
pub struct FactorialSpec {
    pub dim: usize,
    /// Number of independent factors summed into each vector.
    pub factors: usize,
    /// Choices per factor.
    pub options: usize,
    pub count: usize,
    /// RMS norm of the additive noise, as in [`SyntheticSpec`].
    pub spread: f64,
    pub seed: u64,
}

/// Draw vectors that sum one orthonormal anchor from each factor, plus noise. The number of
/// distinct noiseless vectors is `options^factors`, so no codebook can memorize them whole.
/// Labels are the option chosen for factor 0, whose anchors are returned as text embeddings.
pub fn generate_factorial(spec: &FactorialSpec) -> Result<(EmbeddingDataset, TextEmbeddingMatrix)> {
    if spec.dim == 0 || spec.factors == 0 || spec.options == 0 || spec.count == 0 {
        return Err(config_err!("dim, factors, options and count must all be positive"));
    }
    if !(spec.spread >= 0.0 && spec.spread.is_finite()) {
        return Err(config_err!("spread must be a finite non-negative number"));
    }
    let anchors_needed = spec.factors * spec.options;
    if anchors_needed > spec.dim {
        return Err(config_err!("{anchors_needed} orthogonal anchors do not fit in {} dimensions", spec.dim));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let anchors = random_orthonormal_rows(anchors_needed, spec.dim, &mut rng);
    let sigma = spec.spread / (spec.dim as f64).sqrt();
    let mut vectors = Vec::with_capacity(spec.count * spec.dim);
    let mut labels = Vec::with_capacity(spec.count);
    let mut row = vec![0.0f64; spec.dim];
    for _ in 0..spec.count {
        row.iter_mut().for_each(|v| {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v = sigma * z
        });
        for f in 0..spec.factors {
            let o = rng.random_range(0..spec.options);
            if f == 0 {
                labels.push(o as u32);
            }
            let a = &anchors[(f * spec.options + o) * spec.dim..][..spec.dim];
            row.iter_mut().zip(a).for_each(|(v, &a)| *v += a);
        }
        vectors.extend(row.iter().map(|&v| v as f32));
    }
    let names: Vec<String> = (0..spec.options).map(|o| format!("option_{o}")).collect();
    let text: Vec<f32> = anchors[..spec.options * spec.dim].iter().map(|&v| v as f32).collect();
    let ds = EmbeddingDataset::new(spec.dim, vectors, Some(labels), Some(names.clone()))?;
    Ok((ds, TextEmbeddingMatrix::new(spec.dim, text, names)?))
}

/// `n` orthonormal rows in `dim` dimensions by Gram-Schmidt on Gaussian draws.
fn random_orthonormal_rows(n: usize, dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut basis: Vec<f64> = Vec::with_capacity(n * dim);
    while basis.len() < n * dim {
        let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut *rng)).collect();
        // two passes keep the basis orthogonal to working precision
        for _ in 0..2 {
            for b in basis.chunks_exact(dim) {
                let p: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-8 {
            continue;
        }
        basis.extend(v.iter().map(|x| x / norm));
    }
    basis
}

/// How `split` partitions a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SplitMode {
    /// Partition the label set when labels exist (no class in both sides), else permute rows.
    #[default]
    Auto,
    /// Partition the label set; requires labels.
    ByLabel,
    /// Random row permutation, ignoring labels.
    ByRow,
    /// Per-class row split, so every class appears on both sides where it has ≥ 2 rows.
    Stratified,
}

impl std::str::FromStr for SplitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(Self::Auto),
            "label" | "by_label" => Ok(Self::ByLabel),
            "row" | "by_row" => Ok(Self::ByRow),
            "stratified" => Ok(Self::Stratified),
            other => Err(config_err!("unknown split mode {other:?}")),
        }
    }
}

/// Split into (train, validation). Rows keep their original relative order on each side.
pub fn split(
    ds: &EmbeddingDataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(EmbeddingDataset, EmbeddingDataset)> {
    split_with(ds, train_fraction, seed, SplitMode::Auto)
}

pub fn split_with(
    ds: &EmbeddingDataset,
    train_fraction: f64,
    seed: u64,
    mode: SplitMode,
) -> Result<(EmbeddingDataset, EmbeddingDataset)> {
    if ds.count() < 2 {
        return Err(config_err!("cannot split a dataset of {} rows", ds.count()));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(config_err!("train fraction {train_fraction} is outside (0, 1)"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mode = match (mode, ds.labels()) {
        (SplitMode::Auto, Some(_)) => SplitMode::ByLabel,
        (SplitMode::Auto, None) => SplitMode::ByRow,
        (SplitMode::ByLabel | SplitMode::Stratified, None) => {
            return Err(config_err!("{mode:?} split needs labels"))
        }
        (m, _) => m,
    };
    let mut in_train = vec![false; ds.count()];
    match mode {
        SplitMode::ByLabel => {
            let labels = ds.labels().unwrap();
            let mut classes: Vec<u32> = labels.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
            let n_train = (train_fraction * classes.len() as f64).round() as usize;
            if n_train == 0 || n_train == classes.len() {
                return Err(config_err!(
                    "fraction {train_fraction} of {} classes leaves one side empty",
                    classes.len()
                ));
            }
            classes.shuffle(&mut rng);
            let train_classes: BTreeSet<u32> = classes[..n_train].iter().copied().collect();
            for (flag, l) in in_train.iter_mut().zip(labels) {
                *flag = train_classes.contains(l);
            }
        }
        SplitMode::ByRow => {
            let n_train = (train_fraction * ds.count() as f64).round() as usize;
            if n_train == 0 || n_train == ds.count() {
                return Err(config_err!(
                    "fraction {train_fraction} of {} rows leaves one side empty",
                    ds.count()
                ));
            }
            let mut order: Vec<usize> = (0..ds.count()).collect();
            order.shuffle(&mut rng);
            for &i in &order[..n_train] {
                in_train[i] = true;
            }
        }
        SplitMode::Stratified => {
            let labels = ds.labels().unwrap();
            let classes: BTreeSet<u32> = labels.iter().copied().collect();
            for class in classes {
                let mut rows: Vec<usize> = (0..ds.count()).filter(|&i| labels[i] == class).collect();
                rows.shuffle(&mut rng);
                let n_train = ((train_fraction * rows.len() as f64).round() as usize)
                    .clamp(usize::from(rows.len() >= 2), rows.len().saturating_sub(1).max(1));
                for &i in &rows[..n_train] {
                    in_train[i] = true;
                }
            }
            if in_train.iter().all(|&t| t) || in_train.iter().all(|&t| !t) {
                return Err(config_err!("stratified split left one side empty"));
            }
        }
        SplitMode::Auto => unreachable!(),
    }
    let train: Vec<usize> = (0..ds.count()).filter(|&i| in_train[i]).collect();
    let val: Vec<usize> = (0..ds.count()).filter(|&i| !in_train[i]).collect();
    Ok((ds.select(&train), ds.select(&val)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cosine(a: &[f32], b: &[f32]) -> f64 {
        let dot: f64 = a.iter().zip(b).map(|(&x, &y)| f64::from(x) * f64::from(y)).sum();
        let na: f64 = a.iter().map(|&x| f64::from(x).powi(2)).sum();
        let nb: f64 = b.iter().map(|&x| f64::from(x).powi(2)).sum();
        dot / (na * nb).sqrt()
    }

    #[test]
    fn reads_header_and_floats() {
        let mut w = ByteWriter::new();
        w.bytes(b"EMB1").u16(1).u16(0).u32(4).u64(2);
        w.f32s((0..8).map(|i| i as f32));
        let ds = EmbeddingDataset::from_bytes(w.as_slice()).unwrap();
        assert_eq!((ds.dim(), ds.count()), (4, 2));
        assert_eq!(ds.row(1), &[4.0, 5.0, 6.0, 7.0]);
        assert!(ds.labels().is_none());
    }

    #[test]
    fn bad_magic_and_truncation() {
        let mut bytes = EmbeddingDataset::new(2, vec![1.0, 2.0], None, None).unwrap().to_bytes();
        let truncated = &bytes[..bytes.len() - 1];
        assert!(matches!(EmbeddingDataset::from_bytes(truncated), Err(Error::Format(_))));
        bytes[..4].copy_from_slice(b"XXXX");
        assert!(matches!(EmbeddingDataset::from_bytes(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn non_finite_is_data_error() {
        let mut w = ByteWriter::new();
        w.bytes(b"EMB1").u16(1).u16(0).u32(2).u64(1).f32(1.0).f32(f32::NAN);
        assert!(matches!(EmbeddingDataset::from_bytes(w.as_slice()), Err(Error::Data(_))));
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let (ds, text) = generate_synthetic(&SyntheticSpec {
            dim: 768,
            num_classes: 2,
            per_class_count: 5,
            cluster_spread: 0.3,
            seed: 9,
        })
        .unwrap();
        assert_eq!(ds.count(), 10);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.emb");
        save_dataset(&ds, &p).unwrap();
        let first = std::fs::read(&p).unwrap();
        let back = load_dataset(&p).unwrap();
        assert_eq!(back, ds);
        save_dataset(&back, &p).unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), first);

        let t = TextEmbeddingMatrix::from_bytes(&text.to_bytes()).unwrap();
        assert_eq!(t.to_bytes(), text.to_bytes());
    }

    #[test]
    fn zero_spread_vectors_equal_anchors() {
        let spec = SyntheticSpec { dim: 8, num_classes: 2, per_class_count: 3, cluster_spread: 0.0, seed: 1 };
        let (ds, text) = generate_synthetic(&spec).unwrap();
        for (row, &l) in ds.rows().zip(ds.labels().unwrap()) {
            assert_eq!(row, text.row(l as usize));
            assert_eq!(1.0 - cosine(row, text.row(l as usize)), 0.0);
        }
    }

    #[test]
    fn anchors_are_orthonormal() {
        let spec = SyntheticSpec { dim: 16, num_classes: 16, per_class_count: 1, cluster_spread: 0.1, seed: 4 };
        let (_, text) = generate_synthetic(&spec).unwrap();
        for i in 0..16 {
            for j in 0..16 {
                let d: f64 = text.row(i).iter().zip(text.row(j)).map(|(&a, &b)| f64::from(a) * f64::from(b)).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((d - want).abs() < 1e-6, "({i},{j}) -> {d}");
            }
        }
    }

    #[test]
    fn small_spread_is_separable_by_brute_force() {
        let spec = SyntheticSpec { dim: 8, num_classes: 2, per_class_count: 100, cluster_spread: 0.05, seed: 1 };
        let (ds, text) = generate_synthetic(&spec).unwrap();
        let correct = ds
            .rows()
            .zip(ds.labels().unwrap())
            .filter(|(row, &l)| {
                let s0 = cosine(row, text.row(0));
                let s1 = cosine(row, text.row(1));
                u32::from(s1 > s0) == l
            })
            .count();
        assert_eq!(correct, 200);
    }

    #[test]
    fn synthetic_is_deterministic_and_checks_config() {
        let spec = SyntheticSpec { dim: 8, num_classes: 2, per_class_count: 100, cluster_spread: 0.05, seed: 1 };
        assert_eq!(generate_synthetic(&spec).unwrap(), generate_synthetic(&spec).unwrap());
        let too_many = SyntheticSpec { num_classes: 9, ..spec };
        assert!(matches!(generate_synthetic(&too_many), Err(Error::Config(_))));
    }

    fn labelled(classes: usize, per_class: usize) -> EmbeddingDataset {
        let spec = SyntheticSpec {
            dim: classes.max(2),
            num_classes: classes,
            per_class_count: per_class,
            cluster_spread: 0.1,
            seed: 3,
        };
        generate_synthetic(&spec).unwrap().0
    }

    #[test]
    fn label_split_partitions_classes() {
        let ds = labelled(10, 4);
        let (train, val) = split(&ds, 0.8, 7).unwrap();
        let tl: BTreeSet<u32> = train.labels().unwrap().iter().copied().collect();
        let vl: BTreeSet<u32> = val.labels().unwrap().iter().copied().collect();
        assert_eq!((tl.len(), vl.len()), (8, 2));
        assert!(tl.is_disjoint(&vl));
        assert_eq!(train.count() + val.count(), 40);
        assert_eq!(split(&ds, 0.8, 7).unwrap(), (train, val));
    }

    #[test]
    fn row_split_is_exhaustive() {
        let ds = EmbeddingDataset::new(1, (0..100).map(|i| i as f32).collect(), None, None).unwrap();
        let (a, b) = split(&ds, 0.5, 11).unwrap();
        assert_eq!((a.count(), b.count()), (50, 50));
        let mut union: Vec<f32> = a.vectors().iter().chain(b.vectors()).copied().collect();
        union.sort_by(f32::total_cmp);
        assert_eq!(union, ds.vectors());
    }

    #[test]
    fn split_rejects_empty_side() {
        let ds = labelled(3, 2);
        assert!(matches!(split(&ds, 0.1, 0), Err(Error::Config(_))));
        assert!(matches!(split(&ds, 1.0, 0), Err(Error::Config(_))));
    }

    #[test]
    fn stratified_keeps_every_class_on_both_sides() {
        let ds = labelled(4, 10);
        let (train, val) = split_with(&ds, 0.75, 2, SplitMode::Stratified).unwrap();
        assert_eq!((train.count(), val.count()), (32, 8));
        let vl: BTreeSet<u32> = val.labels().unwrap().iter().copied().collect();
        assert_eq!(vl.len(), 4);
    }
}
