//! End-to-end training of the shared-codebook codec.

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::codec::{autoencoder_loss_and_grad, latent_subvectors, loss_and_grad, CodecArchitecture, CodecParams, LossBreakdown, TermMask};
use super::optim::{Optimizer, OptimizerKind};
use crate::error::{config_err, Result};
use crate::kmeans::{perplexity, reinit_dead_codewords, train_shared_codebook, KMeansParams};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Weight of the codebook term.
    pub alpha: f64,
    /// Weight of the commitment term.
    pub beta: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    /// Re-initialize unused codewords every this many epochs; 0 disables.
    pub reinit_period: usize,
    /// Norm bound of the perturbation added to donor subvectors on re-initialization.
    pub reinit_jitter: f64,
    /// Seed the codebook with k-means over the initial encoder outputs.
    pub kmeans_init: bool,
    /// Cap on the number of training rows fed to the k-means initialization.
    pub kmeans_rows: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 0.25,
            learning_rate: 1e-3,
            batch_size: 64,
            epochs: 30,
            seed: 0,
            optimizer: OptimizerKind::Adam,
            reinit_period: 1,
            reinit_jitter: 1e-3,
            kmeans_init: true,
            kmeans_rows: 2048,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(config_err!("learning rate must be positive"));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(config_err!("batch size and epochs must be positive"));
        }
        if !(self.alpha >= 0.0 && self.beta >= 0.0) {
            return Err(config_err!("alpha and beta must be non-negative"));
        }
        if !(self.reinit_jitter >= 0.0) {
            return Err(config_err!("reinit jitter must be non-negative"));
        }
        Ok(())
    }
}

/// Result of a single optimizer step.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub loss: LossBreakdown,
    pub usage: Vec<u64>,
}

/// Parameters plus optimizer state.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub params: CodecParams,
    optimizer: Optimizer,
    cfg: TrainConfig,
    quantize: bool,
}

impl Trainer {
    pub fn new(mut params: CodecParams, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        params.validate()?;
        let optimizer = Optimizer::new(cfg.optimizer, cfg.learning_rate, &mut params);
        Ok(Self { params, optimizer, cfg, quantize: true })
    }

    /// Trainer for the continuous autoencoder: the quantizer is bypassed and only the cosine
    /// term is optimized. The codebook is left untouched.
    pub fn continuous(params: CodecParams, cfg: TrainConfig) -> Result<Self> {
        Ok(Self { quantize: false, ..Self::new(params, cfg)? })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    /// One gradient step on `batch`.
    pub fn step(&mut self, batch: ArrayView2<'_, f64>) -> Result<StepOutcome> {
        let g = if self.quantize {
            loss_and_grad(batch, &self.params, self.cfg.alpha, self.cfg.beta, TermMask::ALL)?
        } else {
            autoencoder_loss_and_grad(batch, &self.params)?
        };
        self.optimizer.step(&mut self.params, &g.grads);
        Ok(StepOutcome { loss: g.loss, usage: g.usage })
    }

    /// Replace codewords with zero `usage` by encoder outputs of `donor_rows`.
    pub fn reinit_dead(&mut self, usage: &[u64], donor_rows: ArrayView2<'_, f64>, seed: u64) -> Result<Vec<usize>> {
        let donors = latent_subvectors(donor_rows, &self.params);
        let (cb, replaced) =
            reinit_dead_codewords(&self.params.codebook, usage, donors.view(), seed, self.cfg.reinit_jitter)?;
        self.params.codebook = cb;
        self.optimizer.reset_codewords(&replaced, self.params.pq().d_sub());
        Ok(replaced)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Batch-size weighted mean of the step losses.
    pub loss: LossBreakdown,
    pub usage: Vec<u64>,
    pub perplexity: f64,
    pub reinitialized: usize,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: CodecParams,
    pub epochs: Vec<EpochLog>,
    /// Quantization MSE of the k-means codebook initialization, when used.
    pub init_mse: Option<f64>,
}

/// Train a codec on the rows of `data`.
pub fn train(data: ArrayView2<'_, f64>, arch: &CodecArchitecture, cfg: &TrainConfig) -> Result<TrainOutcome> {
    check_inputs(data, arch, cfg)?;
    let data = data.as_standard_layout().into_owned();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = CodecParams::init(arch, rng.random())?;

    let mut order: Vec<usize> = (0..data.nrows()).collect();
    let mut init_mse = None;
    if cfg.kmeans_init {
        order.shuffle(&mut rng);
        let rows: Vec<usize> = order.iter().copied().take(cfg.kmeans_rows.max(1)).collect();
        let sample = data.select(Axis(0), &rows);
        let subvectors = latent_subvectors(sample.view(), &params);
        let (cb, outcome) = train_shared_codebook(arch.pq, subvectors.view(), rng.random(), &KMeansParams::default())?;
        params.codebook = cb;
        init_mse = Some(outcome.final_mse());
    }

    let mut trainer = Trainer::new(params, cfg.clone())?;
    let epochs = run_epochs(&mut trainer, data.view(), &mut order, &mut rng)?;
    Ok(TrainOutcome { params: trainer.params, epochs, init_mse })
}

/// Train the encoder and decoder as a plain autoencoder, ignoring the quantizer.
pub fn train_continuous(data: ArrayView2<'_, f64>, arch: &CodecArchitecture, cfg: &TrainConfig) -> Result<TrainOutcome> {
    check_inputs(data, arch, cfg)?;
    let data = data.as_standard_layout().into_owned();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let params = CodecParams::init(arch, rng.random())?;
    let mut order: Vec<usize> = (0..data.nrows()).collect();
    let mut trainer = Trainer::continuous(params, cfg.clone())?;
    let epochs = run_epochs(&mut trainer, data.view(), &mut order, &mut rng)?;
    Ok(TrainOutcome { params: trainer.params, epochs, init_mse: None })
}

fn check_inputs(data: ArrayView2<'_, f64>, arch: &CodecArchitecture, cfg: &TrainConfig) -> Result<()> {
    cfg.validate()?;
    if data.nrows() == 0 {
        return Err(config_err!("no training rows"));
    }
    if data.ncols() != arch.input_dim {
        return Err(config_err!("training data has {} columns, architecture expects {}", data.ncols(), arch.input_dim));
    }
    Ok(())
}

fn run_epochs(
    trainer: &mut Trainer,
    data: ArrayView2<'_, f64>,
    order: &mut [usize],
    rng: &mut ChaCha8Rng,
) -> Result<Vec<EpochLog>> {
    let cfg = trainer.cfg.clone();
    let k = trainer.params.pq().k;
    let mut epochs = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        order.sort_unstable();
        order.shuffle(rng);
        let mut usage = vec![0u64; k];
        let mut acc = [0.0f64; 3];
        for chunk in order.chunks(cfg.batch_size) {
            let batch = data.select(Axis(0), chunk);
            let out = trainer.step(batch.view())?;
            let w = chunk.len() as f64;
            acc[0] += w * out.loss.cosine_term;
            acc[1] += w * out.loss.codebook_term;
            acc[2] += w * out.loss.commitment_term;
            usage.iter_mut().zip(&out.usage).for_each(|(u, &c)| *u += c);
        }
        let n = data.nrows() as f64;
        let (cos, cb, cm) = (acc[0] / n, acc[1] / n, acc[2] / n);
        let loss = LossBreakdown {
            cosine_term: cos,
            codebook_term: cb,
            commitment_term: cm,
            total: cos + cfg.alpha * cb + cfg.beta * cm,
            alpha: cfg.alpha,
            beta: cfg.beta,
        };
        let mut reinitialized = 0;
        if cfg.reinit_period > 0 && epoch % cfg.reinit_period == 0 && epoch < cfg.epochs && trainer.quantize {
            let donor_rows: Vec<usize> = (0..cfg.batch_size.max(64).min(data.nrows()))
                .map(|_| rng.random_range(0..data.nrows()))
                .collect();
            let donors: Array2<f64> = data.select(Axis(0), &donor_rows);
            reinitialized = trainer.reinit_dead(&usage, donors.view(), rng.random())?.len();
        }
        epochs.push(EpochLog { epoch, loss, perplexity: perplexity(&usage), usage, reinitialized });
    }
    Ok(epochs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Activation;
    use crate::pq::PQConfig;
    use crate::store::{generate_synthetic, SyntheticSpec};

    fn data() -> Array2<f64> {
        let spec = SyntheticSpec { dim: 8, num_classes: 4, per_class_count: 30, cluster_spread: 0.1, seed: 2 };
        let (ds, _) = generate_synthetic(&spec).unwrap();
        Array2::from_shape_vec((ds.count(), 8), ds.vectors().iter().map(|&v| v as f64).collect()).unwrap()
    }

    fn arch() -> CodecArchitecture {
        CodecArchitecture::mirrored(8, &[16], Activation::Silu, PQConfig::new(1, 1, 4, 2, 8).unwrap())
    }

    #[test]
    fn loss_decreases_and_runs_are_reproducible() {
        let cfg = TrainConfig { epochs: 20, batch_size: 16, learning_rate: 5e-3, seed: 1, ..Default::default() };
        let a = train(data().view(), &arch(), &cfg).unwrap();
        let first = a.epochs.first().unwrap().loss.total;
        let last = a.epochs.last().unwrap().loss.total;
        assert!(last < 0.5 * first, "{first} -> {last}");
        let b = train(data().view(), &arch(), &cfg).unwrap();
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn column_mismatch_is_config_error() {
        let arch = CodecArchitecture::mirrored(9, &[4], Activation::Silu, PQConfig::new(1, 1, 4, 2, 8).unwrap());
        assert!(matches!(train(data().view(), &arch, &TrainConfig::default()), Err(crate::Error::Config(_))));
    }
}
