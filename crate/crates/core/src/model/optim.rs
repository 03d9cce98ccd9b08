use super::codec::{CodecGrads, CodecParams};
use crate::error::{config_err, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OptimizerKind {
    #[default]
    Adam,
    Sgd,
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adam" => Ok(Self::Adam),
            "sgd" => Ok(Self::Sgd),
            other => Err(config_err!("unknown optimizer {other:?}")),
        }
    }
}

impl std::fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Adam => "adam",
            Self::Sgd => "sgd",
        })
    }
}

/// First-order optimizer over every tensor of [`CodecParams`].
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, params: &mut CodecParams) -> Self {
        let shapes: Vec<usize> = params.tensors_mut().iter().map(|(_, t)| t.len()).collect();
        let zeros = || shapes.iter().map(|&n| vec![0.0; n]).collect::<Vec<_>>();
        Self { kind, lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m: zeros(), v: zeros() }
    }

    /// Apply one update, then snap parameters back onto the `f32` grid.
    pub fn step(&mut self, params: &mut CodecParams, grads: &CodecGrads) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let grad_tensors = grads.tensors();
        for (i, ((_, p), (_, g))) in params.tensors_mut().into_iter().zip(grad_tensors).enumerate() {
            match self.kind {
                OptimizerKind::Sgd => {
                    for (pv, &gv) in p.iter_mut().zip(g) {
                        *pv -= self.lr * gv;
                    }
                }
                OptimizerKind::Adam => {
                    let (m, v) = (&mut self.m[i], &mut self.v[i]);
                    for j in 0..p.len() {
                        m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g[j];
                        v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g[j] * g[j];
                        let mh = m[j] / bc1;
                        let vh = v[j] / bc2;
                        p[j] -= self.lr * mh / (vh.sqrt() + self.eps);
                    }
                }
            }
        }
        params.round_to_f32();
    }

    /// Forget the moment estimates of codebook rows that were re-initialized.
    pub fn reset_codewords(&mut self, rows: &[usize], d_sub: usize) {
        if let (Some(m), Some(v)) = (self.m.last_mut(), self.v.last_mut()) {
            for &r in rows {
                m[r * d_sub..(r + 1) * d_sub].fill(0.0);
                v[r * d_sub..(r + 1) * d_sub].fill(0.0);
            }
        }
    }
}
