//! Distortion, zero-shot classification, rate-distortion points, configuration sweeps and
//! reports.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::Serialize;

use crate::baselines::{sq_dequantize, sq_quantize, train_kmeans_pq, train_scalar_quantizer, ScalarQuantizer};
use crate::entropy::{build_dictionary, build_smoothed_dictionary, DictMode, EntropyDictionary};
use crate::error::{config_err, Error, Result};
use crate::format::{fnv1a64, write_file};
use crate::model::{compress, decompress, index_histogram, train, CodecArchitecture, CodecParams, TrainConfig};
use crate::pq::PQConfig;
use crate::store::TextEmbeddingMatrix;

/// `1 - cos(x, x_hat)`.
pub fn distortion(x: &[f64], x_hat: &[f64]) -> Result<f64> {
    crate::model::cosine_distortion(x, x_hat)
}

/// Mean distortion between matching rows.
pub fn mean_distortion(x: ArrayView2<'_, f64>, x_hat: ArrayView2<'_, f64>) -> Result<f64> {
    if x.dim() != x_hat.dim() {
        return Err(config_err!("shape mismatch: {:?} vs {:?}", x.dim(), x_hat.dim()));
    }
    if x.nrows() == 0 {
        return Err(config_err!("no rows"));
    }
    let per_row: Vec<Result<f64>> = (0..x.nrows())
        .into_par_iter()
        .map(|i| distortion(&x.row(i).to_vec(), &x_hat.row(i).to_vec()))
        .collect();
    let mut total = 0.0;
    for d in per_row {
        total += d?;
    }
    Ok(total / x.nrows() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZeroShot {
    pub accuracy: f64,
    /// Accuracy per class; `None` for classes with no examples.
    pub per_class: Vec<Option<f64>>,
    pub predictions: Vec<u32>,
}

/// Class whose text row has the highest cosine similarity to each feature. Ties go to the
/// lowest class index.
pub fn predict(features: ArrayView2<'_, f64>, text: &TextEmbeddingMatrix) -> Result<Vec<u32>> {
    if features.ncols() != text.dim() {
        return Err(config_err!("features have {} dims, text embeddings {}", features.ncols(), text.dim()));
    }
    let unit: Vec<Vec<f64>> = text
        .rows()
        .map(|r| {
            let n = r.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>().sqrt();
            r.iter().map(|&v| f64::from(v) / n).collect()
        })
        .collect();
    (0..features.nrows())
        .into_par_iter()
        .map(|i| {
            let x = features.row(i);
            let norm = x.dot(&x).sqrt();
            if norm == 0.0 || !norm.is_finite() {
                return Err(Error::DegenerateNorm(format!("feature {i} has norm {norm}")));
            }
            let mut best = (0u32, f64::NEG_INFINITY);
            for (c, t) in unit.iter().enumerate() {
                let score = x.iter().zip(t).map(|(a, b)| a * b).sum::<f64>() / norm;
                if score > best.1 {
                    best = (c as u32, score);
                }
            }
            Ok(best.0)
        })
        .collect()
}

/// Zero-shot accuracy of `features` against `labels`.
pub fn zero_shot_classify(features: ArrayView2<'_, f64>, labels: Option<&[u32]>, text: &TextEmbeddingMatrix) -> Result<ZeroShot> {
    let labels = labels.ok_or_else(|| config_err!("zero-shot classification needs labels"))?;
    if labels.len() != features.nrows() {
        return Err(config_err!("{} labels for {} features", labels.len(), features.nrows()));
    }
    if features.nrows() == 0 {
        return Err(config_err!("no features to classify"));
    }
    let classes = text.num_classes();
    if let Some(&bad) = labels.iter().find(|&&l| l as usize >= classes) {
        return Err(config_err!("label {bad} has no text embedding ({classes} classes)"));
    }
    let predictions = predict(features, text)?;
    let mut hits = vec![0usize; classes];
    let mut seen = vec![0usize; classes];
    for (&p, &l) in predictions.iter().zip(labels) {
        seen[l as usize] += 1;
        hits[l as usize] += usize::from(p == l);
    }
    let accuracy = hits.iter().sum::<usize>() as f64 / labels.len() as f64;
    let per_class = hits.iter().zip(&seen).map(|(&h, &s)| (s > 0).then(|| h as f64 / s as f64)).collect();
    Ok(ZeroShot { accuracy, per_class, predictions })
}

/// Bits per pixel of an image whose feature costs `total_bits`.
pub fn bits_to_bpp(total_bits: u64, image_height: u32, image_width: u32) -> f64 {
    total_bits as f64 / (f64::from(image_height) * f64::from(image_width))
}

/// Published operating point of an image codec or of the feature codec at image scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ImageCodecReference {
    pub dataset: &'static str,
    pub method: &'static str,
    pub bpp: f64,
    pub accuracy: f64,
}

/// External reference points, quoted and never recomputed.
pub const IMAGE_CODEC_REFERENCES: &[ImageCodecReference] = &[
    ImageCodecReference { dataset: "OxfordPets", method: "PQVAE-shared", bpp: 2.29e-3, accuracy: 0.8356 },
    ImageCodecReference { dataset: "OxfordPets", method: "PQVAE-shared", bpp: 3.43e-3, accuracy: 0.8733 },
    ImageCodecReference { dataset: "OxfordPets", method: "Cheng2020-anchor", bpp: 96.1e-3, accuracy: 0.8628 },
    ImageCodecReference { dataset: "Food101", method: "PQVAE-shared", bpp: 1.723e-3, accuracy: 0.7847 },
    ImageCodecReference { dataset: "Food101", method: "Cheng2020-anchor", bpp: 87.5e-3, accuracy: 0.7411 },
];

/// One measured operating point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RDPoint {
    pub scheme: String,
    /// `payload_bits / k`.
    pub bpd: f64,
    /// Mean payload bits per feature, `total_payload_bits / features`.
    pub payload_bits: f64,
    /// Mean container bits per feature beyond the payload.
    pub overhead_bits: f64,
    pub distortion: f64,
    pub accuracy: Option<f64>,
    /// FNV-1a 64 of the configuration description, hex.
    pub config_hash: String,
    pub total_payload_bits: u64,
    pub features: u64,
    pub config: String,
}

impl RDPoint {
    /// Point with rate fields filled from exact totals; distortion and accuracy start empty.
    pub fn new(scheme: &str, config: &str, dim: usize, total_payload: u64, total_overhead: u64, n: usize) -> Self {
        let payload_bits = total_payload as f64 / n as f64;
        Self {
            scheme: scheme.into(),
            bpd: payload_bits / dim as f64,
            payload_bits,
            overhead_bits: total_overhead as f64 / n as f64,
            distortion: 0.0,
            accuracy: None,
            config_hash: config_hash(config),
            total_payload_bits: total_payload,
            features: n as u64,
            config: config.into(),
        }
    }
}

pub fn config_hash(description: &str) -> String {
    format!("{:016x}", fnv1a64(description.as_bytes()))
}

/// Compress every row of `test`, decompress it, and measure rate, distortion and (with labels
/// and text embeddings) zero-shot accuracy of the reconstructions.
pub fn evaluate_codec(
    scheme: &str,
    config: &str,
    params: &CodecParams,
    dict: &EntropyDictionary,
    test: ArrayView2<'_, f64>,
    labels: Option<&[u32]>,
    text: Option<&TextEmbeddingMatrix>,
) -> Result<(RDPoint, Array2<f64>)> {
    let n = test.nrows();
    if n == 0 {
        return Err(config_err!("no evaluation rows"));
    }
    let per_row: Vec<Result<(u64, u64, Vec<f64>)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let x = test.row(i).to_vec();
            let cf = compress(&x, params, dict, DictMode::External)?;
            let x_hat = decompress(&cf, params, dict)?;
            Ok((u64::from(cf.payload_bits), cf.overhead_bits(), x_hat))
        })
        .collect();
    let mut recon = Array2::zeros(test.dim());
    let (mut payload, mut overhead) = (0u64, 0u64);
    for (i, r) in per_row.into_iter().enumerate() {
        let (p, o, x_hat) = r?;
        payload += p;
        overhead += o;
        recon.row_mut(i).assign(&ndarray::ArrayView1::from(&x_hat));
    }
    let mut point = RDPoint::new(scheme, config, test.ncols(), payload, overhead, n);
    point.distortion = mean_distortion(test, recon.view())?;
    point.accuracy = accuracy_if_possible(recon.view(), labels, text)?;
    Ok((point, recon))
}

/// Rate and distortion of a scalar quantizer. With `entropy_coded`, indices are Huffman coded
/// with a dictionary fit to `train`; otherwise every dimension costs `bits_per_dim`.
pub fn evaluate_scalar(
    config: &str,
    q: &ScalarQuantizer,
    train: ArrayView2<'_, f64>,
    test: ArrayView2<'_, f64>,
    labels: Option<&[u32]>,
    text: Option<&TextEmbeddingMatrix>,
    entropy_coded: bool,
) -> Result<(RDPoint, Array2<f64>)> {
    let n = test.nrows();
    if n == 0 {
        return Err(config_err!("no evaluation rows"));
    }
    let levels = q.levels().len();
    let mut recon = Array2::zeros(test.dim());
    let mut test_hist = vec![0u64; levels];
    for (i, row) in test.outer_iter().enumerate() {
        let idx = sq_quantize(&row.to_vec(), q);
        idx.iter().for_each(|&j| test_hist[j as usize] += 1);
        recon.row_mut(i).assign(&ndarray::Array1::from(sq_dequantize(&idx, q)?));
    }
    let (scheme, payload) = if entropy_coded {
        let mut train_hist = vec![1u64; levels];
        for v in train.iter() {
            train_hist[sq_quantize(&[*v], q)[0] as usize] += 1;
        }
        ("scalar_q_huffman", build_dictionary(&train_hist)?.cost(&test_hist)?)
    } else {
        ("scalar_q", u64::from(q.bits_per_dim()) * (n * test.ncols()) as u64)
    };
    let mut point = RDPoint::new(scheme, config, test.ncols(), payload, 0, n);
    point.distortion = mean_distortion(test, recon.view())?;
    point.accuracy = accuracy_if_possible(recon.view(), labels, text)?;
    Ok((point, recon))
}

fn accuracy_if_possible(recon: ArrayView2<'_, f64>, labels: Option<&[u32]>, text: Option<&TextEmbeddingMatrix>) -> Result<Option<f64>> {
    match (labels, text) {
        (Some(l), Some(t)) => Ok(Some(zero_shot_classify(recon, Some(l), t)?.accuracy)),
        _ => Ok(None),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    PqvaeShared,
    KmeansPq,
    ScalarQ,
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pqvae_shared" => Ok(Self::PqvaeShared),
            "kmeans_pq" => Ok(Self::KmeansPq),
            "scalar_q" => Ok(Self::ScalarQ),
            other => Err(config_err!("unknown scheme {other:?} (expected pqvae_shared, kmeans_pq or scalar_q)")),
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::PqvaeShared => "pqvae_shared",
            Self::KmeansPq => "kmeans_pq",
            Self::ScalarQ => "scalar_q",
        })
    }
}

/// One configuration of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub scheme: Scheme,
    /// Used by the codec schemes.
    pub arch: CodecArchitecture,
    pub train: TrainConfig,
    /// Used by `scalar_q`.
    pub sq_bits: u8,
    /// Huffman-code scalar indices instead of reporting the raw rate.
    pub sq_entropy: bool,
}

impl SweepCell {
    /// Canonical text form; its hash identifies the cell in reports.
    pub fn describe(&self) -> String {
        let t = &self.train;
        match self.scheme {
            Scheme::ScalarQ => format!("scheme=scalar_q bits={} entropy={} seed={}", self.sq_bits, self.sq_entropy, t.seed),
            scheme => {
                let a = &self.arch;
                format!(
                    "scheme={scheme} input={} enc={:?} dec={:?} act={} pq={} alpha={} beta={} lr={} batch={} epochs={} seed={} opt={} reinit={} kmeans_init={}",
                    a.input_dim, a.encoder_hidden, a.decoder_hidden, a.activation, a.pq, t.alpha, t.beta,
                    t.learning_rate, t.batch_size, t.epochs, t.seed, t.optimizer, t.reinit_period, t.kmeans_init
                )
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub cells: Vec<SweepCell>,
    /// Distortion ceiling of the rate-minimization problem.
    pub d_max: Option<f64>,
}

/// Outcome of picking the cheapest cell that meets the distortion ceiling.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Selection {
    /// `winner` and the other admissible cells, cheapest first.
    Winner { winner: usize, runner_ups: Vec<usize> },
    /// No cell meets the ceiling.
    Infeasible { d_max: f64, best_distortion: f64 },
    /// No ceiling was given.
    Unconstrained,
}

/// Minimum-bpd point with distortion at most `d_max`. Ties in rate go to the lower
/// distortion, then the earlier point.
pub fn select_min_rate(points: &[RDPoint], d_max: Option<f64>) -> Selection {
    let Some(d_max) = d_max else { return Selection::Unconstrained };
    let mut ok: Vec<usize> = (0..points.len()).filter(|&i| points[i].distortion <= d_max).collect();
    if ok.is_empty() {
        let best_distortion = points.iter().map(|p| p.distortion).fold(f64::INFINITY, f64::min);
        return Selection::Infeasible { d_max, best_distortion };
    }
    ok.sort_by(|&a, &b| {
        let (pa, pb) = (&points[a], &points[b]);
        pa.bpd.total_cmp(&pb.bpd).then(pa.distortion.total_cmp(&pb.distortion)).then(a.cmp(&b))
    });
    Selection::Winner { winner: ok[0], runner_ups: ok[1..].to_vec() }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub points: Vec<RDPoint>,
    pub selection: Selection,
}

/// Data a sweep trains and evaluates on.
#[derive(Debug, Clone, Copy)]
pub struct SweepData<'a> {
    pub train: ArrayView2<'a, f64>,
    pub test: ArrayView2<'a, f64>,
    pub test_labels: Option<&'a [u32]>,
    pub text: Option<&'a TextEmbeddingMatrix>,
}

/// Train every cell on `data.train` and measure it on `data.test`. Cells run in parallel;
/// points keep cell order.
pub fn run_sweep(spec: &SweepSpec, data: SweepData<'_>) -> Result<SweepReport> {
    if spec.cells.is_empty() {
        return Err(config_err!("sweep has no cells"));
    }
    let points: Vec<Result<RDPoint>> = spec.cells.par_iter().map(|cell| run_cell(cell, data).map(|(p, _)| p)).collect();
    let points = points.into_iter().collect::<Result<Vec<_>>>()?;
    let selection = select_min_rate(&points, spec.d_max);
    Ok(SweepReport { points, selection })
}

/// Trained state of one cell.
#[derive(Debug, Clone)]
pub enum CellModel {
    Codec { params: CodecParams, dict: EntropyDictionary },
    Scalar(ScalarQuantizer),
}

/// Train one cell and evaluate it.
pub fn run_cell(cell: &SweepCell, data: SweepData<'_>) -> Result<(RDPoint, CellModel)> {
    let config = cell.describe();
    match cell.scheme {
        Scheme::ScalarQ => {
            let q = train_scalar_quantizer(data.train, cell.sq_bits, cell.train.seed)?.quantizer;
            let (p, _) = evaluate_scalar(&config, &q, data.train, data.test, data.test_labels, data.text, cell.sq_entropy)?;
            Ok((p, CellModel::Scalar(q)))
        }
        scheme => {
            let outcome = match scheme {
                Scheme::PqvaeShared => train(data.train, &cell.arch, &cell.train)?,
                _ => train_kmeans_pq(data.train, &cell.arch, &cell.train)?,
            };
            let dict = build_smoothed_dictionary(&index_histogram(data.train, &outcome.params)?)?;
            let name = scheme.to_string();
            let (p, _) = evaluate_codec(&name, &config, &outcome.params, &dict, data.test, data.test_labels, data.text)?;
            Ok((p, CellModel::Codec { params: outcome.params, dict }))
        }
    }
}

/// Product-quantizer layout spending exactly `budget_bits` on an `h x w x c` grid split into
/// `d` subspaces.
pub fn budget_matched_config(h: usize, w: usize, c: usize, d: usize, budget_bits: u64) -> Result<PQConfig> {
    let slots = (h * w * d) as u64;
    if slots == 0 || budget_bits % slots != 0 {
        return Err(config_err!("{budget_bits} bits do not divide evenly over {h}x{w}x{d} indices"));
    }
    let bits = budget_bits / slots;
    if bits > 24 {
        return Err(config_err!("{bits} bits per index means a codebook of 2^{bits} codewords"));
    }
    PQConfig::new(h, w, c, d, 1usize << bits)
}

pub const CSV_HEADER: &str = "scheme,bpd,payload_bits,overhead_bits,distortion,accuracy,config_hash";

pub fn to_csv(points: &[RDPoint]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for p in points {
        let acc = p.accuracy.map(|a| a.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{},{},{},{},{},{}", p.scheme, p.bpd, p.payload_bits, p.overhead_bits, p.distortion, acc, p.config_hash);
    }
    out
}

/// Run metadata wrapped around the points in the JSON report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportMeta {
    pub seed: u64,
    pub dataset_hash: String,
    /// Supplied by the caller; left out of reports by default so they stay reproducible.
    pub timestamp: Option<String>,
}

#[derive(Serialize)]
struct JsonReport<'a> {
    #[serde(flatten)]
    meta: &'a ReportMeta,
    points: &'a [RDPoint],
    #[serde(skip_serializing_if = "Option::is_none")]
    selection: Option<&'a Selection>,
}

/// Write `<stem>.csv` and `<stem>.json` under `dir`. Returns both paths.
pub fn emit_report(
    points: &[RDPoint],
    selection: Option<&Selection>,
    meta: &ReportMeta,
    dir: &Path,
    stem: &str,
) -> Result<(PathBuf, PathBuf)> {
    let csv = dir.join(format!("{stem}.csv"));
    let json = dir.join(format!("{stem}.json"));
    write_file(&csv, to_csv(points).as_bytes())?;
    let body = serde_json::to_string_pretty(&JsonReport { meta, points, selection })
        .map_err(|e| Error::Data(format!("report serialization: {e}")))?;
    write_file(&json, format!("{body}\n").as_bytes())?;
    Ok((csv, json))
}

#[cfg(test)]
mod tests {
    use ndarray::array;

    use super::*;

    fn text2() -> TextEmbeddingMatrix {
        TextEmbeddingMatrix::new(2, vec![1.0, 0.0, 0.0, 1.0], vec!["a".into(), "b".into()]).unwrap()
    }

    fn point(bpd: f64, distortion: f64) -> RDPoint {
        let mut p = RDPoint::new("x", &format!("{bpd}"), 1, (bpd * 10.0) as u64, 0, 10);
        p.distortion = distortion;
        p
    }

    #[test]
    fn distortion_basics() {
        assert_eq!(distortion(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((distortion(&[1.0, 2.0], &[-1.0, -2.0]).unwrap() - 2.0).abs() < 1e-12);
        assert!(distortion(&[1.0, 2.0], &[3.0, 6.0]).unwrap().abs() < 1e-12);
        assert!(matches!(distortion(&[0.0, 0.0], &[1.0, 0.0]), Err(Error::DegenerateNorm(_))));
    }

    #[test]
    fn zero_shot_basis_and_ties() {
        let f = array![[1.0, 0.0], [1.0, 1.0], [0.2, 0.9]];
        let zs = zero_shot_classify(f.view(), Some(&[0, 0, 1]), &text2()).unwrap();
        assert_eq!(zs.predictions, vec![0, 0, 1]);
        assert_eq!(zs.accuracy, 1.0);
        assert_eq!(zs.per_class, vec![Some(1.0), Some(1.0)]);
    }

    #[test]
    fn zero_shot_needs_labels() {
        let f = array![[1.0, 0.0]];
        assert!(matches!(zero_shot_classify(f.view(), None, &text2()), Err(Error::Config(_))));
        assert!(matches!(zero_shot_classify(f.view(), Some(&[2]), &text2()), Err(Error::Config(_))));
    }

    #[test]
    fn bpp_conversion() {
        assert!((bits_to_bpp(400, 336, 336) - 400.0 / 112_896.0).abs() < 1e-18);
        assert!((bits_to_bpp(400, 336, 336) - 3.54e-3).abs() < 5e-6);
        assert_eq!(bits_to_bpp(0, 336, 336), 0.0);
    }

    #[test]
    fn min_rate_selection() {
        assert_eq!(select_min_rate(&[point(1.0, 0.0)], Some(0.0)), Selection::Winner { winner: 0, runner_ups: vec![] });
        let pts = [point(2.0, 0.005), point(1.0, 0.01)];
        assert_eq!(select_min_rate(&pts, Some(0.02)), Selection::Winner { winner: 1, runner_ups: vec![0] });
        assert_eq!(select_min_rate(&pts, Some(0.006)), Selection::Winner { winner: 0, runner_ups: vec![] });
        assert_eq!(select_min_rate(&pts, Some(0.001)), Selection::Infeasible { d_max: 0.001, best_distortion: 0.005 });
        assert_eq!(select_min_rate(&pts, None), Selection::Unconstrained);
    }

    #[test]
    fn csv_layout() {
        let mut p = point(0.5, 0.1);
        p.accuracy = Some(0.75);
        let csv = to_csv(&[p.clone(), point(1.0, 0.2)]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines[1], format!("x,0.5,0.5,0,0.1,0.75,{}", p.config_hash));
        assert!(lines[2].contains(",0.2,,"));
    }

    #[test]
    fn budget_matching() {
        assert_eq!(budget_matched_config(2, 2, 16, 2, 48).unwrap().k, 64);
        assert_eq!(budget_matched_config(5, 5, 128, 8, 600).unwrap().k, 8);
        assert!(budget_matched_config(2, 2, 16, 3, 48).is_err());
        assert!(budget_matched_config(2, 2, 16, 5, 48).is_err());
    }
}
