//! Oracles shared by the integration tests. None of them call into the code under test
//! beyond reading parameter values.
#![allow(dead_code)]

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use ndarray::{Array2, ArrayView2};
use pqvae::model::{Activation, CodecParams, Mlp};

/// Index of the nearest codeword by squared Euclidean distance; ties go to the lowest index.
pub fn brute_nearest(codewords: ArrayView2<'_, f64>, sub: &[f64]) -> u32 {
    let mut best = 0usize;
    let mut best_d = f64::INFINITY;
    for k in 0..codewords.nrows() {
        let d: f64 = (0..sub.len()).map(|j| (sub[j] - codewords[[k, j]]).powi(2)).sum();
        if d < best_d {
            best_d = d;
            best = k;
        }
    }
    best as u32
}

/// Total Huffman-coded length of a symbol multiset, from pairwise merges on a binary heap.
/// A lone used symbol costs one bit per occurrence.
pub fn reference_huffman_cost(histogram: &[u64]) -> u64 {
    let mut heap: BinaryHeap<Reverse<u64>> = histogram.iter().copied().filter(|&c| c > 0).map(Reverse).collect();
    if heap.len() == 1 {
        return heap.pop().unwrap().0;
    }
    let mut cost = 0;
    while heap.len() > 1 {
        let a = heap.pop().unwrap().0;
        let b = heap.pop().unwrap().0;
        cost += a + b;
        heap.push(Reverse(a + b));
    }
    cost
}

fn act(a: Activation, z: f64) -> f64 {
    match a {
        Activation::Identity => z,
        Activation::Tanh => z.tanh(),
        Activation::Silu => z / (1.0 + (-z).exp()),
    }
}

/// Plain forward pass written from the layer weights.
pub fn mlp_forward(net: &Mlp, x: &[f64]) -> Vec<f64> {
    let mut a = x.to_vec();
    let last = net.layers.len() - 1;
    for (l, layer) in net.layers.iter().enumerate() {
        let mut z = vec![0.0; layer.weight.nrows()];
        for (o, zo) in z.iter_mut().enumerate() {
            *zo = layer.bias[o] + (0..a.len()).map(|i| layer.weight[[o, i]] * a[i]).sum::<f64>();
        }
        if l != last {
            z.iter_mut().for_each(|v| *v = act(net.activation, *v));
        }
        a = z;
    }
    a
}

fn cosine(x: &[f64], y: &[f64]) -> f64 {
    let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let nx: f64 = x.iter().map(|a| a * a).sum::<f64>().sqrt();
    let ny: f64 = y.iter().map(|a| a * a).sum::<f64>().sqrt();
    dot / (nx * ny)
}

/// Frozen quantities of the training loss at a base parameter point.
pub struct Frozen {
    /// Encoder outputs at the base point.
    pub latents: Vec<Vec<f64>>,
    /// Codeword indices at the base point.
    pub assignments: Vec<Vec<usize>>,
    /// Quantized latents at the base point.
    pub quantized: Vec<Vec<f64>>,
}

pub fn freeze(params: &CodecParams, batch: ArrayView2<'_, f64>) -> Frozen {
    let cw = params.codebook.codewords();
    let ds = cw.ncols();
    let mut out = Frozen { latents: vec![], assignments: vec![], quantized: vec![] };
    for row in batch.outer_iter() {
        let lat = mlp_forward(&params.encoder, row.as_slice().unwrap());
        let idx: Vec<usize> = lat.chunks(ds).map(|s| brute_nearest(cw, s) as usize).collect();
        let q: Vec<f64> = idx.iter().flat_map(|&k| cw.row(k).to_vec()).collect();
        out.latents.push(lat);
        out.assignments.push(idx);
        out.quantized.push(q);
    }
    out
}

/// Differentiable surrogate whose gradient at the base point is the straight-through training
/// gradient: the decoder sees `e(x) - e0(x) + q0`, the codebook term pulls the frozen
/// assignments toward the frozen latents, the commitment term pulls the encoder toward `q0`.
pub fn surrogate_loss(params: &CodecParams, batch: ArrayView2<'_, f64>, frozen: &Frozen, alpha: f64, beta: f64) -> f64 {
    let cw = params.codebook.codewords();
    let ds = cw.ncols();
    let mut total = 0.0;
    for (i, row) in batch.outer_iter().enumerate() {
        let x = row.as_slice().unwrap();
        let lat = mlp_forward(&params.encoder, x);
        let dec_in: Vec<f64> = (0..lat.len()).map(|j| lat[j] - frozen.latents[i][j] + frozen.quantized[i][j]).collect();
        let x_hat = mlp_forward(&params.decoder, &dec_in);
        let mut loss = 1.0 - cosine(x, &x_hat);
        for (s, &k) in frozen.assignments[i].iter().enumerate() {
            for t in 0..ds {
                loss += alpha * (frozen.latents[i][s * ds + t] - cw[[k, t]]).powi(2);
            }
        }
        for j in 0..lat.len() {
            loss += beta * (lat[j] - frozen.quantized[i][j]).powi(2);
        }
        total += loss;
    }
    total / batch.nrows() as f64
}

/// Central differences of the surrogate for every parameter, grouped like
/// `CodecParams::tensors_mut`.
pub fn numeric_gradient(params: &CodecParams, batch: ArrayView2<'_, f64>, alpha: f64, beta: f64, step: f64) -> Vec<(String, Vec<f64>)> {
    let frozen = freeze(params, batch);
    let mut work = params.clone();
    let groups: Vec<(String, usize)> = work.tensors_mut().iter().map(|(n, t)| (n.clone(), t.len())).collect();
    let mut out = Vec::new();
    for (g, (name, len)) in groups.into_iter().enumerate() {
        let mut grad = vec![0.0; len];
        for (j, gj) in grad.iter_mut().enumerate() {
            let orig = work.tensors_mut()[g].1[j];
            work.tensors_mut()[g].1[j] = orig + step;
            let up = surrogate_loss(&work, batch, &frozen, alpha, beta);
            work.tensors_mut()[g].1[j] = orig - step;
            let down = surrogate_loss(&work, batch, &frozen, alpha, beta);
            work.tensors_mut()[g].1[j] = orig;
            *gj = (up - down) / (2.0 * step);
        }
        out.push((name, grad));
    }
    out
}

/// `|a - n| / max(|a|, |n|)`, zero when both vanish.
pub fn relative_error(a: &[f64], n: &[f64]) -> f64 {
    let diff = a.iter().zip(n).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nn = n.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nn);
    if scale < 1e-14 {
        0.0
    } else {
        diff / scale
    }
}

pub fn random_batch(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
}
