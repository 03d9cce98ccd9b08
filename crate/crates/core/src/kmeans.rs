//! Lloyd's k-means with k-means++ seeding, and dead-codeword re-initialization.

use std::collections::HashSet;

use ndarray::{Array2, ArrayView2, Axis};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{config_err, Error, Result};
use crate::pq::{PQConfig, SharedCodebook};

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansParams {
    pub max_iters: usize,
    /// Stop once the Euclidean norm of the total centroid movement falls below this.
    pub tol: f64,
    /// Size of the perturbation applied to duplicated centroids when `K` exceeds the number
    /// of distinct samples.
    pub jitter: f64,
}

impl Default for KMeansParams {
    fn default() -> Self {
        Self { max_iters: 50, tol: 1e-6, jitter: 1e-3 }
    }
}

#[derive(Debug, Clone)]
pub struct KMeansOutcome {
    pub centroids: Array2<f64>,
    pub assignments: Vec<u32>,
    /// Mean squared quantization error after each assignment step, ending with the error of
    /// the returned centroids. Non-increasing.
    pub mse_trace: Vec<f64>,
    pub iterations: usize,
    /// Set when `K` exceeded the number of distinct samples and some centroids are jittered
    /// duplicates.
    pub padded_with_jitter: bool,
}

impl KMeansOutcome {
    pub fn final_mse(&self) -> f64 {
        *self.mse_trace.last().expect("trace is never empty")
    }
}

/// Index of the nearest centroid (lowest index on ties) and its squared distance.
pub fn nearest_centroid(centroids: ArrayView2<'_, f64>, x: &[f64]) -> (u32, f64) {
    crate::pq::nearest_row(centroids, x)
}

/// Assign every row of `samples` to its nearest centroid; returns assignments and the MSE.
pub fn assign(samples: ArrayView2<'_, f64>, centroids: ArrayView2<'_, f64>) -> (Vec<u32>, f64) {
    let dim = samples.ncols();
    let flat = samples.as_standard_layout();
    let pairs: Vec<(u32, f64)> = flat
        .as_slice()
        .expect("standard layout")
        .par_chunks(dim.max(1))
        .map(|x| nearest_centroid(centroids, x))
        .collect();
    let sse: f64 = pairs.iter().map(|p| p.1).sum();
    let n = samples.nrows().max(1) as f64;
    (pairs.into_iter().map(|p| p.0).collect(), sse / n)
}

/// Cluster the rows of `samples` into `k` centroids.
pub fn train_kmeans(
    samples: ArrayView2<'_, f64>,
    k: usize,
    seed: u64,
    params: &KMeansParams,
) -> Result<KMeansOutcome> {
    let (n, dim) = samples.dim();
    if n == 0 || dim == 0 {
        return Err(config_err!("k-means needs a non-empty sample set"));
    }
    if k == 0 {
        return Err(config_err!("k-means needs K >= 1"));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("k-means samples contain non-finite values".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let distinct = distinct_rows(samples);
    let padded = k > distinct.len();
    let mut centroids = if padded {
        pad_with_jitter(samples, &distinct, k, params.jitter, &mut rng)
    } else {
        kmeans_plus_plus(samples, k, &mut rng)
    };

    let mut mse_trace = Vec::new();
    let mut iterations = 0;
    let mut assignments;
    loop {
        let (a, mse) = assign(samples, centroids.view());
        assignments = a;
        mse_trace.push(mse);
        if iterations == params.max_iters {
            break;
        }
        iterations += 1;
        let updated = update_centroids(samples, &assignments, &centroids);
        let movement = (&updated - &centroids).mapv(|v| v * v).sum().sqrt();
        centroids = updated;
        if movement < params.tol {
            let (a, mse) = assign(samples, centroids.view());
            assignments = a;
            mse_trace.push(mse);
            break;
        }
    }
    Ok(KMeansOutcome { centroids, assignments, mse_trace, iterations, padded_with_jitter: padded })
}

/// Train a shared codebook for `config` from subvector samples (rows of length `d_sub`).
pub fn train_shared_codebook(
    config: PQConfig,
    samples: ArrayView2<'_, f64>,
    seed: u64,
    params: &KMeansParams,
) -> Result<(SharedCodebook, KMeansOutcome)> {
    config.validate()?;
    if samples.ncols() != config.d_sub() {
        return Err(config_err!("samples have {} columns, d_sub is {}", samples.ncols(), config.d_sub()));
    }
    let outcome = train_kmeans(samples, config.k, seed, params)?;
    let mut cb = SharedCodebook::new(config, outcome.centroids.clone())?;
    cb.round_to_f32();
    Ok((cb, outcome))
}

fn distinct_rows(samples: ArrayView2<'_, f64>) -> Vec<usize> {
    let mut seen = HashSet::new();
    samples
        .outer_iter()
        .enumerate()
        .filter(|(_, row)| seen.insert(row.iter().map(|v| v.to_bits()).collect::<Vec<u64>>()))
        .map(|(i, _)| i)
        .collect()
}

fn kmeans_plus_plus(samples: ArrayView2<'_, f64>, k: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let (n, dim) = samples.dim();
    let mut centroids = Array2::zeros((k, dim));
    let first = rng.random_range(0..n);
    centroids.row_mut(0).assign(&samples.row(first));
    let mut d2: Vec<f64> = samples
        .outer_iter()
        .map(|x| x.iter().zip(samples.row(first).iter()).map(|(a, b)| (a - b) * (a - b)).sum())
        .collect();
    for j in 1..k {
        // distinct rows >= k, so some sample is still at positive distance
        let pick = WeightedIndex::new(&d2).map(|w| w.sample(rng)).unwrap_or_else(|_| {
            d2.iter().position(|&d| d > 0.0).unwrap_or(0)
        });
        centroids.row_mut(j).assign(&samples.row(pick));
        let c = centroids.row(j);
        for (dist, x) in d2.iter_mut().zip(samples.outer_iter()) {
            let nd: f64 = x.iter().zip(c.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
            if nd < *dist {
                *dist = nd;
            }
        }
    }
    centroids
}

fn pad_with_jitter(
    samples: ArrayView2<'_, f64>,
    distinct: &[usize],
    k: usize,
    jitter: f64,
    rng: &mut ChaCha8Rng,
) -> Array2<f64> {
    let dim = samples.ncols();
    let mut centroids = Array2::zeros((k, dim));
    for j in 0..k {
        let src = distinct[j % distinct.len()];
        centroids.row_mut(j).assign(&samples.row(src));
        if j >= distinct.len() {
            let offset = jitter_vector(dim, jitter, rng);
            centroids.row_mut(j).iter_mut().zip(offset).for_each(|(c, o)| *c += o);
        }
    }
    centroids
}

/// Random offset with Euclidean norm at most `bound`.
fn jitter_vector(dim: usize, bound: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let per = bound / (dim as f64).sqrt();
    (0..dim).map(|_| rng.random_range(-1.0..=1.0) * per).collect()
}

fn update_centroids(samples: ArrayView2<'_, f64>, assignments: &[u32], old: &Array2<f64>) -> Array2<f64> {
    let mut sums = Array2::<f64>::zeros(old.dim());
    let mut counts = vec![0usize; old.nrows()];
    for (x, &a) in samples.outer_iter().zip(assignments) {
        let a = a as usize;
        counts[a] += 1;
        let mut row = sums.row_mut(a);
        row += &x;
    }
    for (k, mut row) in sums.axis_iter_mut(Axis(0)).enumerate() {
        if counts[k] == 0 {
            row.assign(&old.row(k));
        } else {
            row /= counts[k] as f64;
        }
    }
    sums
}

/// Replace every codeword with zero usage by a random donor subvector plus a perturbation of
/// norm at most `jitter`. Returns the new codebook and the replaced indices.
pub fn reinit_dead_codewords(
    cb: &SharedCodebook,
    usage_counts: &[u64],
    donors: ArrayView2<'_, f64>,
    seed: u64,
    jitter: f64,
) -> Result<(SharedCodebook, Vec<usize>)> {
    if usage_counts.len() != cb.len() {
        return Err(config_err!("{} usage counts for {} codewords", usage_counts.len(), cb.len()));
    }
    let dead: Vec<usize> = (0..cb.len()).filter(|&k| usage_counts[k] == 0).collect();
    let mut out = cb.clone();
    if dead.is_empty() || donors.nrows() == 0 {
        return Ok((out, Vec::new()));
    }
    if donors.ncols() != cb.config().d_sub() {
        return Err(config_err!("donors have {} columns, d_sub is {}", donors.ncols(), cb.config().d_sub()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = donors.ncols();
    for &k in &dead {
        let donor = donors.row(rng.random_range(0..donors.nrows()));
        let offset = jitter_vector(dim, jitter, &mut rng);
        let mut row = out.codewords_mut().row_mut(k);
        for ((c, &d), o) in row.iter_mut().zip(donor.iter()).zip(offset) {
            *c = d + o;
        }
    }
    out.round_to_f32();
    Ok((out, dead))
}

/// `exp` of the Shannon entropy of the usage distribution; 1 means a single live codeword.
pub fn perplexity(usage_counts: &[u64]) -> f64 {
    let total: u64 = usage_counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let h: f64 = usage_counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total as f64;
            -p * p.ln()
        })
        .sum();
    h.exp()
}
