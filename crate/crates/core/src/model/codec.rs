use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::mlp::{Activation, Dense, Mlp};
use crate::entropy::{self, CompressedFeature, DictMode, EntropyDictionary};
use crate::error::{config_err, Error, Result};
use crate::format::to_f32_grid;
use crate::pq::{self, IndexTensor, LatentGrid, PQConfig, SharedCodebook};

/// Layer widths of the encoder and decoder plus the latent product quantizer.
///
/// Encoder: `input_dim -> encoder_hidden... -> h*w*c`. Decoder: `h*w*c -> decoder_hidden... ->
/// input_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct CodecArchitecture {
    pub input_dim: usize,
    pub encoder_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
    pub activation: Activation,
    pub pq: PQConfig,
}

impl CodecArchitecture {
    /// One hidden layer of the given width on each side, mirrored.
    pub fn mirrored(input_dim: usize, hidden: &[usize], activation: Activation, pq: PQConfig) -> Self {
        let mut decoder_hidden = hidden.to_vec();
        decoder_hidden.reverse();
        Self { input_dim, encoder_hidden: hidden.to_vec(), decoder_hidden, activation, pq }
    }

    /// `k -> 2048 -> 5*5*128` with 8 subspaces and an 8-entry codebook (600 bits per feature).
    pub fn reference(input_dim: usize) -> Self {
        let pq = PQConfig { h: 5, w: 5, c: 128, d: 8, k: 8 };
        Self::mirrored(input_dim, &[2048], Activation::Silu, pq)
    }

    pub fn validate(&self) -> Result<()> {
        self.pq.validate()?;
        if self.input_dim == 0 {
            return Err(config_err!("input dimension must be positive"));
        }
        if self.encoder_hidden.iter().chain(&self.decoder_hidden).any(|&w| w == 0) {
            return Err(config_err!("hidden widths must be positive"));
        }
        Ok(())
    }

    pub fn encoder_widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim];
        w.extend(&self.encoder_hidden);
        w.push(self.pq.latent_len());
        w
    }

    pub fn decoder_widths(&self) -> Vec<usize> {
        let mut w = vec![self.pq.latent_len()];
        w.extend(&self.decoder_hidden);
        w.push(self.input_dim);
        w
    }
}

/// Every learnable tensor of the codec.
#[derive(Debug, Clone, PartialEq)]
pub struct CodecParams {
    pub arch: CodecArchitecture,
    pub encoder: Mlp,
    pub decoder: Mlp,
    pub codebook: SharedCodebook,
}

impl CodecParams {
    /// Glorot-initialized networks and a codebook drawn uniformly from `[-1/K, 1/K]`.
    pub fn init(arch: &CodecArchitecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let encoder = Mlp::glorot(&arch.encoder_widths(), arch.activation, &mut rng);
        let decoder = Mlp::glorot(&arch.decoder_widths(), arch.activation, &mut rng);
        let bound = 1.0 / arch.pq.k as f64;
        let codewords =
            Array2::from_shape_fn((arch.pq.k, arch.pq.d_sub()), |_| to_f32_grid(rng.random_range(-bound..=bound)));
        let codebook = SharedCodebook::new(arch.pq, codewords)?;
        Ok(Self { arch: arch.clone(), encoder, decoder, codebook })
    }

    /// All-zero networks and codebook.
    pub fn zeros(arch: &CodecArchitecture) -> Result<Self> {
        arch.validate()?;
        let encoder = Mlp::zeros(&arch.encoder_widths(), arch.activation);
        let decoder = Mlp::zeros(&arch.decoder_widths(), arch.activation);
        let codebook = SharedCodebook::new(arch.pq, Array2::zeros((arch.pq.k, arch.pq.d_sub())))?;
        Ok(Self { arch: arch.clone(), encoder, decoder, codebook })
    }

    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        self.encoder.validate("encoder")?;
        self.decoder.validate("decoder")?;
        if self.encoder.input_dim() != self.arch.input_dim || self.encoder.output_dim() != self.arch.pq.latent_len() {
            return Err(config_err!("encoder shape does not match the architecture"));
        }
        if self.decoder.input_dim() != self.arch.pq.latent_len() || self.decoder.output_dim() != self.arch.input_dim {
            return Err(config_err!("decoder shape does not match the architecture"));
        }
        if self.codebook.config() != &self.arch.pq {
            return Err(config_err!("codebook config does not match the architecture"));
        }
        Ok(())
    }

    pub fn pq(&self) -> &PQConfig {
        &self.arch.pq
    }

    /// Named mutable views of every parameter tensor, in a fixed order.
    pub fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out = Vec::new();
        for (prefix, net) in [("encoder", &mut self.encoder), ("decoder", &mut self.decoder)] {
            for (l, layer) in net.layers.iter_mut().enumerate() {
                out.push((format!("{prefix}.{l}.weight"), layer.weight.as_slice_mut().expect("standard layout")));
                out.push((format!("{prefix}.{l}.bias"), layer.bias.as_slice_mut().expect("standard layout")));
            }
        }
        out.push(("codebook".into(), self.codebook.codewords_mut().as_slice_mut().expect("standard layout")));
        out
    }

    /// Snap every parameter onto the `f32` grid.
    pub fn round_to_f32(&mut self) {
        for (_, t) in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v = to_f32_grid(*v));
        }
    }
}

/// Gradients with the same layout as [`CodecParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct CodecGrads {
    pub encoder: Vec<Dense>,
    pub decoder: Vec<Dense>,
    pub codebook: Array2<f64>,
}

impl CodecGrads {
    pub fn zeros_like(params: &CodecParams) -> Self {
        let z = |net: &Mlp| net.layers.iter().map(|l| Dense::zeros(l.inputs(), l.outputs())).collect();
        Self {
            encoder: z(&params.encoder),
            decoder: z(&params.decoder),
            codebook: Array2::zeros(params.codebook.codewords().dim()),
        }
    }

    /// Named views in the same order as [`CodecParams::tensors_mut`].
    pub fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::new();
        for (prefix, net) in [("encoder", &self.encoder), ("decoder", &self.decoder)] {
            for (l, layer) in net.iter().enumerate() {
                out.push((format!("{prefix}.{l}.weight"), layer.weight.as_slice().expect("standard layout")));
                out.push((format!("{prefix}.{l}.bias"), layer.bias.as_slice().expect("standard layout")));
            }
        }
        out.push(("codebook".into(), self.codebook.as_slice().expect("standard layout")));
        out
    }

    fn check_finite(&self) -> Result<()> {
        for (name, t) in self.tensors() {
            if let Some(i) = t.iter().position(|v| !v.is_finite()) {
                return Err(Error::Numerics { param: name, detail: format!("non-finite gradient at element {i}") });
            }
        }
        Ok(())
    }
}

/// The three loss terms, averaged over a batch.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize)]
pub struct LossBreakdown {
    /// `1 - cos(x, x_hat)`, in `[0, 2]`.
    pub cosine_term: f64,
    /// `|sg(x_c) - x_hat_c|^2` summed over latent entries.
    pub codebook_term: f64,
    /// `|x_c - sg(x_hat_c)|^2` summed over latent entries.
    pub commitment_term: f64,
    pub total: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl LossBreakdown {
    fn from_terms(cosine_term: f64, codebook_term: f64, commitment_term: f64, alpha: f64, beta: f64) -> Self {
        Self {
            cosine_term,
            codebook_term,
            commitment_term,
            total: cosine_term + alpha * codebook_term + beta * commitment_term,
            alpha,
            beta,
        }
    }
}

/// Which loss terms contribute gradient. Loss values are always reported in full.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TermMask {
    pub cosine: bool,
    pub codebook: bool,
    pub commitment: bool,
}

impl TermMask {
    pub const ALL: Self = Self { cosine: true, codebook: true, commitment: true };
    pub const COSINE: Self = Self { cosine: true, codebook: false, commitment: false };
    pub const CODEBOOK: Self = Self { cosine: false, codebook: true, commitment: false };
    pub const COMMITMENT: Self = Self { cosine: false, codebook: false, commitment: true };
}

impl Default for TermMask {
    fn default() -> Self {
        Self::ALL
    }
}

/// `1 - x.y / (|x| |y|)`, clamped to `[0, 2]`.
pub fn cosine_distortion(x: &[f64], y: &[f64]) -> Result<f64> {
    let (dot, nx, ny) = dot_norms(x, y);
    if nx == 0.0 || ny == 0.0 {
        return Err(Error::DegenerateNorm("cosine distortion of a zero-norm vector".into()));
    }
    Ok((1.0 - dot / (nx * ny).sqrt()).clamp(0.0, 2.0))
}

fn dot_norms(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let mut dot = 0.0;
    let mut nx = 0.0;
    let mut ny = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        dot += a * b;
        nx += a * a;
        ny += b * b;
    }
    (dot, nx, ny)
}

fn check_finite(values: &[f64], what: &str) -> Result<()> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerics { param: what.into(), detail: "non-finite activation".into() });
    }
    Ok(())
}

/// Encoder forward pass, reshaped to the latent grid.
pub fn encode_feature(x: &[f64], params: &CodecParams) -> Result<LatentGrid> {
    if x.len() != params.arch.input_dim {
        return Err(config_err!("feature has {} dims, codec expects {}", x.len(), params.arch.input_dim));
    }
    check_finite(x, "input")?;
    let out = params.encoder.forward(ArrayView1::from(x));
    check_finite(out.as_slice().unwrap(), "encoder output")?;
    let pq = params.pq();
    LatentGrid::new(pq.h, pq.w, pq.c, out.to_vec())
}

/// Decoder forward pass back to feature space.
pub fn decode_feature(latent: &LatentGrid, params: &CodecParams) -> Result<Vec<f64>> {
    if latent.data().len() != params.pq().latent_len() {
        return Err(config_err!("latent has {} entries, codec expects {}", latent.data().len(), params.pq().latent_len()));
    }
    let out = params.decoder.forward(ArrayView1::from(latent.data()));
    check_finite(out.as_slice().unwrap(), "decoder output")?;
    Ok(out.to_vec())
}

/// Encode, quantize, de-quantize and decode one feature in memory.
pub fn reconstruct(x: &[f64], params: &CodecParams) -> Result<Vec<f64>> {
    let latent = encode_feature(x, params)?;
    let z = pq::quantize(&latent, &params.codebook)?;
    decode_feature(&pq::dequantize(&z, &params.codebook)?, params)
}

/// Indices of one feature.
pub fn feature_indices(x: &[f64], params: &CodecParams) -> Result<IndexTensor> {
    pq::quantize(&encode_feature(x, params)?, &params.codebook)
}

/// Loss of one feature through the full pipeline.
pub fn compute_loss(x: &[f64], params: &CodecParams, alpha: f64, beta: f64) -> Result<LossBreakdown> {
    let latent = encode_feature(x, params)?;
    let z = pq::quantize(&latent, &params.codebook)?;
    let quantized = pq::dequantize(&z, &params.codebook)?;
    let x_hat = decode_feature(&quantized, params)?;
    let (dot, nx, ny) = dot_norms(x, &x_hat);
    if nx == 0.0 {
        return Err(Error::DegenerateNorm("input feature has zero norm".into()));
    }
    if ny == 0.0 {
        return Err(Error::DegenerateNorm("reconstruction has zero norm".into()));
    }
    let cosine = (1.0 - dot / (nx * ny).sqrt()).clamp(0.0, 2.0);
    let sq = latent.squared_distance(&quantized);
    Ok(LossBreakdown::from_terms(cosine, sq, sq, alpha, beta))
}

/// Batch loss and straight-through gradients.
#[derive(Debug, Clone)]
pub struct BatchGradient {
    pub loss: LossBreakdown,
    pub grads: CodecGrads,
    /// Codeword assignment counts over the batch.
    pub usage: Vec<u64>,
    /// Encoder outputs of the batch, row per sample.
    pub latents: Array2<f64>,
}

/// Mean loss over the rows of `batch` and its gradient.
///
/// The quantizer is crossed with the straight-through estimator: the decoder-input gradient
/// of the cosine term is handed to the encoder unchanged. The codebook term moves only the
/// codewords, the commitment term only the encoder, and neither reaches the decoder.
pub fn loss_and_grad(
    batch: ArrayView2<'_, f64>,
    params: &CodecParams,
    alpha: f64,
    beta: f64,
    mask: TermMask,
) -> Result<BatchGradient> {
    batch_gradient(batch, params, alpha, beta, mask, true)
}

/// Cosine loss and gradient of the continuous autoencoder, with the quantizer removed. The
/// codebook gradient is zero and `usage` is all zeros.
pub fn autoencoder_loss_and_grad(batch: ArrayView2<'_, f64>, params: &CodecParams) -> Result<BatchGradient> {
    batch_gradient(batch, params, 0.0, 0.0, TermMask::COSINE, false)
}

fn batch_gradient(
    batch: ArrayView2<'_, f64>,
    params: &CodecParams,
    alpha: f64,
    beta: f64,
    mask: TermMask,
    quantize: bool,
) -> Result<BatchGradient> {
    let (n, k) = batch.dim();
    if n == 0 {
        return Err(config_err!("empty batch"));
    }
    if k != params.arch.input_dim {
        return Err(config_err!("batch has {k} columns, codec expects {}", params.arch.input_dim));
    }
    let batch = batch.as_standard_layout();
    let batch = batch.view();
    let pq = *params.pq();
    let ds = pq.d_sub();
    let inv_n = 1.0 / n as f64;

    let enc = params.encoder.forward_batch(batch);
    let latents = enc.output().clone();
    check_finite(latents.as_slice().unwrap(), "encoder output")?;

    let rows: Vec<(Vec<u32>, Vec<f64>)> = if !quantize {
        (0..n).map(|i| (Vec::new(), latents.row(i).to_vec())).collect()
    } else {
        (0..n)
        .into_par_iter()
        .map(|i| {
            let row = latents.row(i);
            let row = row.as_slice().expect("standard layout");
            let idx = params.codebook.quantize_slice(row);
            let mut q = vec![0.0; row.len()];
            params.codebook.dequantize_into(&idx, &mut q).expect("indices come from this codebook");
            (idx, q)
        })
        .collect()
    };
    let mut quantized = Array2::zeros(latents.dim());
    let mut usage = vec![0u64; pq.k];
    for (i, (idx, q)) in rows.iter().enumerate() {
        quantized.row_mut(i).assign(&ArrayView1::from(q.as_slice()));
        idx.iter().for_each(|&j| usage[j as usize] += 1);
    }

    let dec = params.decoder.forward_batch(quantized.view());
    let x_hat = dec.output();
    check_finite(x_hat.as_slice().unwrap(), "decoder output")?;

    let mut cosine_sum = 0.0;
    let mut grad_xhat = Array2::zeros(x_hat.dim());
    for i in 0..n {
        let x = batch.row(i);
        let y = x_hat.row(i);
        let (dot, nx2, ny2) = dot_norms(x.as_slice().unwrap(), y.as_slice().unwrap());
        if nx2 == 0.0 {
            return Err(Error::DegenerateNorm(format!("batch row {i} has zero norm")));
        }
        if ny2 == 0.0 {
            return Err(Error::DegenerateNorm(format!("reconstruction of batch row {i} has zero norm")));
        }
        let (nx, ny) = (nx2.sqrt(), ny2.sqrt());
        let cos = dot / (nx * ny);
        cosine_sum += (1.0 - cos).clamp(0.0, 2.0);
        // d(1 - cos)/dy = -(x / (|x||y|) - cos * y / |y|^2)
        let mut g = grad_xhat.row_mut(i);
        for ((gj, &xj), &yj) in g.iter_mut().zip(x.iter()).zip(y.iter()) {
            *gj = -(xj / (nx * ny) - cos * yj / ny2) * inv_n;
        }
    }
    let diff = &latents - &quantized;
    let sq_sum: f64 = diff.iter().map(|v| v * v).sum();
    let loss = LossBreakdown::from_terms(cosine_sum * inv_n, sq_sum * inv_n, sq_sum * inv_n, alpha, beta);

    let mut grads = CodecGrads::zeros_like(params);
    let mut grad_latent = Array2::<f64>::zeros(latents.dim());
    if mask.cosine {
        let (dec_grads, grad_q) = params.decoder.backward(&dec, grad_xhat);
        grads.decoder = dec_grads;
        // straight-through: d/dx_c := d/dx_hat_c
        grad_latent += &grad_q;
    }
    if mask.commitment && beta != 0.0 {
        grad_latent.scaled_add(2.0 * beta * inv_n, &diff);
    }
    if mask.codebook && alpha != 0.0 {
        let scale = 2.0 * alpha * inv_n;
        for (i, (idx, _)) in rows.iter().enumerate() {
            let d_row = diff.row(i);
            for (j, &code) in idx.iter().enumerate() {
                let mut g = grads.codebook.row_mut(code as usize);
                // d/dc |s - c|^2 = 2 (c - s) = -2 diff
                for (gv, &dv) in g.iter_mut().zip(d_row.slice(ndarray::s![j * ds..(j + 1) * ds]).iter()) {
                    *gv -= scale * dv;
                }
            }
        }
    }
    if mask.cosine || (mask.commitment && beta != 0.0) {
        let (enc_grads, _) = params.encoder.backward(&enc, grad_latent);
        grads.encoder = enc_grads;
    }
    grads.check_finite()?;
    Ok(BatchGradient { loss, grads, usage, latents })
}

/// Encoder outputs for every row of `x`, reshaped to subvectors of length `d_sub`.
pub fn latent_subvectors(x: ArrayView2<'_, f64>, params: &CodecParams) -> Array2<f64> {
    let latents = params.encoder.forward_batch(x).output().clone();
    let ds = params.pq().d_sub();
    let n = latents.len() / ds;
    latents.into_shape_with_order((n, ds)).expect("latent length divisible by d_sub")
}

/// Encode, quantize and entropy-code one feature.
pub fn compress(x: &[f64], params: &CodecParams, dict: &EntropyDictionary, mode: DictMode) -> Result<CompressedFeature> {
    let z = feature_indices(x, params)?;
    entropy::encode(&z, params.pq(), dict, params.codebook.content_hash(), mode)
}

/// Entropy-decode, de-quantize and decode one feature.
pub fn decompress(cf: &CompressedFeature, params: &CodecParams, dict: &EntropyDictionary) -> Result<Vec<f64>> {
    let z = entropy::decode_checked(cf, dict, &params.codebook)?;
    decode_feature(&pq::dequantize(&z, &params.codebook)?, params)
}

/// Histogram of codeword usage over all features of `x`.
pub fn index_histogram(x: ArrayView2<'_, f64>, params: &CodecParams) -> Result<Vec<u64>> {
    let per_row: Vec<Result<IndexTensor>> =
        (0..x.nrows()).into_par_iter().map(|i| feature_indices(&x.row(i).to_vec(), params)).collect();
    let mut hist = vec![0u64; params.pq().k];
    for z in per_row {
        for &i in z?.indices() {
            hist[i as usize] += 1;
        }
    }
    Ok(hist)
}

/// Reconstruct every row of `x` through the in-memory pipeline.
pub fn reconstruct_all(x: ArrayView2<'_, f64>, params: &CodecParams) -> Result<Array2<f64>> {
    let rows: Vec<Result<Vec<f64>>> = (0..x.nrows()).into_par_iter().map(|i| reconstruct(&x.row(i).to_vec(), params)).collect();
    let mut out = Array2::zeros((x.nrows(), params.arch.input_dim));
    for (mut dst, row) in out.axis_iter_mut(Axis(0)).zip(rows) {
        dst.assign(&Array1::from(row?));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use ndarray::array;

    use super::*;
    use crate::entropy::build_smoothed_dictionary;

    fn toy_arch() -> CodecArchitecture {
        CodecArchitecture::mirrored(6, &[5], Activation::Tanh, PQConfig::new(1, 1, 4, 2, 4).unwrap())
    }

    fn toy_batch() -> Array2<f64> {
        array![
            [0.5, -0.2, 0.9, 0.1, -0.7, 0.3],
            [-0.4, 0.8, 0.2, -0.6, 0.1, 0.5],
            [0.3, 0.3, -0.5, 0.7, 0.2, -0.1],
        ]
    }

    #[test]
    fn zero_encoder_gives_zero_latent() {
        let params = CodecParams::zeros(&toy_arch()).unwrap();
        let latent = encode_feature(&[1.0; 6], &params).unwrap();
        assert!(latent.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn wrong_input_length_is_config_error() {
        let params = CodecParams::init(&toy_arch(), 0).unwrap();
        assert!(matches!(encode_feature(&[1.0; 5], &params), Err(Error::Config(_))));
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let arch = toy_arch();
        assert_eq!(CodecParams::init(&arch, 9).unwrap(), CodecParams::init(&arch, 9).unwrap());
        assert_ne!(CodecParams::init(&arch, 9).unwrap(), CodecParams::init(&arch, 10).unwrap());
    }

    #[test]
    fn cosine_distortion_extremes() {
        let x = [1.0, 2.0, -3.0];
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        let scaled: Vec<f64> = x.iter().map(|v| 4.0 * v).collect();
        assert!(cosine_distortion(&x, &scaled).unwrap().abs() < 1e-12);
        assert!((cosine_distortion(&x, &neg).unwrap() - 2.0).abs() < 1e-12);
        assert!((cosine_distortion(&[1.0, 0.0], &[0.0, 1.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(cosine_distortion(&x, &[0.0; 3]), Err(Error::DegenerateNorm(_))));
    }

    #[test]
    fn perfect_reconstruction_has_zero_loss() {
        // identity encoder and decoder over a 2-dim latent whose codebook holds the input exactly
        let pq = PQConfig::new(1, 1, 2, 2, 2).unwrap();
        let arch = CodecArchitecture::mirrored(2, &[], Activation::Identity, pq);
        let mut params = CodecParams::zeros(&arch).unwrap();
        params.encoder.layers[0].weight = Array2::eye(2);
        params.decoder.layers[0].weight = Array2::eye(2);
        params.codebook.codewords_mut().assign(&array![[0.5], [-1.5]]);
        let loss = compute_loss(&[0.5, -1.5], &params, 1.0, 0.25).unwrap();
        assert_eq!(loss.total, 0.0);

        // off-codebook input: latent terms appear, and alpha = beta = 0 leaves only the cosine
        let loss = compute_loss(&[0.4, -1.0], &params, 0.0, 0.0).unwrap();
        let expected_sq = 0.1f64.powi(2) + 0.5f64.powi(2);
        assert!((loss.codebook_term - expected_sq).abs() < 1e-12);
        assert_eq!(loss.total, loss.cosine_term);
    }

    #[test]
    fn zero_reconstruction_is_degenerate() {
        let params = CodecParams::zeros(&toy_arch()).unwrap();
        assert!(matches!(compute_loss(&[1.0; 6], &params, 1.0, 1.0), Err(Error::DegenerateNorm(_))));
    }

    #[test]
    fn batch_loss_matches_single_feature_loss() {
        let params = CodecParams::init(&toy_arch(), 4).unwrap();
        let batch = toy_batch();
        let g = loss_and_grad(batch.view(), &params, 0.7, 0.3, TermMask::ALL).unwrap();
        let mean = batch
            .outer_iter()
            .map(|r| compute_loss(r.as_slice().unwrap(), &params, 0.7, 0.3).unwrap().total)
            .sum::<f64>()
            / 3.0;
        assert!((g.loss.total - mean).abs() < 1e-12);
        assert_eq!(g.usage.iter().sum::<u64>(), 3 * 2);
    }

    #[test]
    fn stop_gradients_are_exact() {
        let params = CodecParams::init(&toy_arch(), 5).unwrap();
        let batch = toy_batch();
        let cb = loss_and_grad(batch.view(), &params, 1.0, 1.0, TermMask::CODEBOOK).unwrap().grads;
        assert!(cb.encoder.iter().chain(&cb.decoder).all(|l| l.weight.iter().chain(l.bias.iter()).all(|&v| v == 0.0)));
        assert!(cb.codebook.iter().any(|&v| v != 0.0));
        let cm = loss_and_grad(batch.view(), &params, 1.0, 1.0, TermMask::COMMITMENT).unwrap().grads;
        assert!(cm.codebook.iter().all(|&v| v == 0.0));
        assert!(cm.decoder.iter().all(|l| l.weight.iter().chain(l.bias.iter()).all(|&v| v == 0.0)));
        assert!(cm.encoder.iter().any(|l| l.weight.iter().any(|&v| v != 0.0)));
    }

    #[test]
    fn codebook_gradient_closed_form() {
        let params = CodecParams::init(&toy_arch(), 6).unwrap();
        let batch = toy_batch();
        let alpha = 0.8;
        let g = loss_and_grad(batch.view(), &params, alpha, 0.0, TermMask::CODEBOOK).unwrap();
        let ds = params.pq().d_sub();
        let mut expected = Array2::<f64>::zeros((4, ds));
        for row in g.latents.outer_iter() {
            for s in row.as_slice().unwrap().chunks(ds) {
                let (j, _) = params.codebook.nearest(s);
                for t in 0..ds {
                    expected[[j as usize, t]] += -2.0 * alpha * (s[t] - params.codebook.codewords()[[j as usize, t]]) / 3.0;
                }
            }
        }
        for (a, b) in g.grads.codebook.iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut params = CodecParams::init(&toy_arch(), 7).unwrap();
        params.decoder.layers[0].weight[[0, 0]] = f64::NAN;
        let err = loss_and_grad(toy_batch().view(), &params, 1.0, 1.0, TermMask::ALL).unwrap_err();
        assert!(matches!(err, Error::Numerics { .. }), "{err}");
    }

    #[test]
    fn compress_round_trip_matches_reconstruct() {
        let params = CodecParams::init(&toy_arch(), 8).unwrap();
        let batch = toy_batch();
        let dict = build_smoothed_dictionary(&index_histogram(batch.view(), &params).unwrap()).unwrap();
        for row in batch.outer_iter() {
            let x = row.as_slice().unwrap();
            for mode in [DictMode::External, DictMode::Inline] {
                let cf = compress(x, &params, &dict, mode).unwrap();
                assert_eq!(decompress(&cf, &params, &dict).unwrap(), reconstruct(x, &params).unwrap());
            }
        }
    }
}
