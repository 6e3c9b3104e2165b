//! Mini-batch gradients, the training loop and loss-curve output.

use std::io::Write;
use std::path::Path;

use ndarray::{Array2, Array4};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::{AdamConfig, AdamState};
use super::loss::{data_loss, weight_penalty_grad, LossConfig, LossTerms};
use super::network::{NetworkConfig, NetworkParams};
use super::tensor::{real, Real};
use crate::error::{Error, Result};
use crate::patch::{augment, AugmentSpec, PatchPair};
use crate::seed;

/// One training example: input `[c_in][S][S][F]`, target `[3][S][S][2F]`, fluid mask `[S][S]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample<T> {
    pub lr: Array4<T>,
    pub hr: Array4<T>,
    pub mask: Array2<bool>,
}

impl From<&PatchPair> for Sample<f32> {
    fn from(p: &PatchPair) -> Self {
        Sample {
            lr: p.lr.clone(),
            hr: p.hr.clone(),
            mask: p.mask.clone(),
        }
    }
}

/// Batch-mean loss (with weight penalty) and its gradient. Samples run in
/// parallel; per-sample gradients are summed in batch order.
pub fn batch_gradient<T: Real>(
    params: &NetworkParams<T>,
    batch: &[Sample<T>],
    cfg: &LossConfig,
) -> Result<(LossTerms, NetworkParams<T>)> {
    if batch.is_empty() {
        return Err(Error::InvalidConfig("empty batch".into()));
    }
    let per_sample: Vec<(LossTerms, NetworkParams<T>)> = batch
        .par_iter()
        .map(|s| {
            let (pred, cache) = params.forward_cached(&s.lr)?;
            let (terms, g) = data_loss(&pred, &s.hr, &s.mask, cfg, true)?;
            Ok((
                terms,
                params.backward(&cache, &g.expect("gradient requested")),
            ))
        })
        .collect::<Result<_>>()?;
    let inv: T = real(1.0 / batch.len() as f64);
    let mut grads = weight_penalty_grad(params, cfg.lambda_nn);
    let mut terms = Vec::with_capacity(batch.len());
    for (t, g) in &per_sample {
        grads.add_scaled(g, inv);
        terms.push(*t);
    }
    for (i, l) in grads.layers.iter().enumerate() {
        if l.w.iter().chain(&l.b).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("gradient of layer {i}")));
        }
    }
    let mut mean = LossTerms::mean(cfg, &terms);
    let penalty = cfg.lambda_nn * params.weight_norm_sq();
    mean = LossTerms::assemble(cfg, mean.mse_fluid, mean.mse_nonfluid, mean.mp, penalty);
    Ok((mean, grads))
}

/// Per-sample losses without gradients, in input order.
pub fn evaluate_losses<T: Real>(
    params: &NetworkParams<T>,
    samples: &[Sample<T>],
    cfg: &LossConfig,
) -> Result<Vec<LossTerms>> {
    let penalty = cfg.lambda_nn * params.weight_norm_sq();
    samples
        .par_iter()
        .map(|s| {
            let pred = params.forward(&s.lr)?;
            let (t, _) = data_loss(&pred, &s.hr, &s.mask, cfg, false)?;
            Ok(LossTerms::assemble(
                cfg,
                t.mse_fluid,
                t.mse_nonfluid,
                t.mp,
                penalty,
            ))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub network: NetworkConfig,
    pub loss: LossConfig,
    pub adam: AdamConfig,
    /// random rotation/flip/negation/swap per sample and epoch
    pub augment: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            network: NetworkConfig::default(),
            loss: LossConfig::default(),
            adam: AdamConfig::default(),
            augment: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        self.loss.validate()?;
        self.adam.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_total: f64,
    pub train_mse_fluid: f64,
    pub train_mse_nonfluid: f64,
    pub train_mp: f64,
    /// mean validation total; NaN without a validation set
    pub val_total: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// parameters of the epoch with the lowest validation (or training) loss
    pub best: NetworkParams<f32>,
    pub best_epoch: usize,
    pub last: NetworkParams<f32>,
    pub curve: Vec<EpochRecord>,
    /// training loss of the initial parameters on the unaugmented training set
    pub initial: LossTerms,
}

/// Train from seeded He initialization (or `init`). Mini-batches are reshuffled
/// every epoch from `seed`; the final partial batch is kept.
pub fn train(
    train_set: &[PatchPair],
    val_set: &[PatchPair],
    cfg: &TrainConfig,
    seed: u64,
    init: Option<NetworkParams<f32>>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::InvalidConfig("training set is empty".into()));
    }
    let mut batch_size = cfg.adam.batch_size;
    if train_set.len() < batch_size {
        log::warn!(
            "training set of {} is smaller than batch size {batch_size}; clamping",
            train_set.len()
        );
        batch_size = train_set.len();
    }
    let mut params = match init {
        Some(p) => {
            if p.config != cfg.network {
                return Err(Error::InvalidConfig(
                    "initial parameters do not match the network config".into(),
                ));
            }
            p
        }
        None => NetworkParams::init(cfg.network, seed::derive(seed, "srnet-init"))?,
    };
    let plain: Vec<Sample<f32>> = train_set.iter().map(Sample::from).collect();
    let val: Vec<Sample<f32>> = val_set.iter().map(Sample::from).collect();
    let initial = LossTerms::mean(&cfg.loss, &evaluate_losses(&params, &plain, &cfg.loss)?);
    log::info!("initial training loss {:.6e}", initial.total);

    let mut adam = AdamState::new(&params);
    let mut curve = Vec::with_capacity(cfg.adam.epochs);
    let mut best = (f64::INFINITY, params.clone(), 0);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 0..cfg.adam.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(seed::mix(seed, &[0x5eed, epoch as u64]));
        order.shuffle(&mut rng);
        let mut sums = [0.0f64; 4];
        for chunk in order.chunks(batch_size) {
            let batch: Vec<Sample<f32>> = chunk
                .iter()
                .map(|&i| {
                    if cfg.augment {
                        Sample::from(&augment(&train_set[i], &AugmentSpec::random(&mut rng)))
                    } else {
                        plain[i].clone()
                    }
                })
                .collect();
            let (terms, grads) = batch_gradient(&params, &batch, &cfg.loss)?;
            let w = chunk.len() as f64;
            sums[0] += w * terms.mse_fluid;
            sums[1] += w * terms.mse_nonfluid;
            sums[2] += w * terms.mp;
            sums[3] += w * terms.weight_penalty;
            adam.step(&mut params, &grads, &cfg.adam);
        }
        let n = train_set.len() as f64;
        let t = LossTerms::assemble(
            &cfg.loss,
            sums[0] / n,
            sums[1] / n,
            sums[2] / n,
            sums[3] / n,
        );
        let val_total = if val.is_empty() {
            f64::NAN
        } else {
            LossTerms::mean(&cfg.loss, &evaluate_losses(&params, &val, &cfg.loss)?).total
        };
        if !params.is_finite() {
            return Err(Error::NonFinite(format!("parameters after epoch {epoch}")));
        }
        let score = if val.is_empty() { t.total } else { val_total };
        if score < best.0 {
            best = (score, params.clone(), epoch);
        }
        log::info!("epoch {epoch}: train {:.6e} val {:.6e}", t.total, val_total);
        curve.push(EpochRecord {
            epoch,
            train_total: t.total,
            train_mse_fluid: t.mse_fluid,
            train_mse_nonfluid: t.mse_nonfluid,
            train_mp: t.mp,
            val_total,
        });
    }
    let (_, best_params, best_epoch) = best;
    Ok(TrainOutcome {
        best: if curve.is_empty() {
            params.clone()
        } else {
            best_params
        },
        best_epoch,
        last: params,
        curve,
        initial,
    })
}

/// CSV with header `epoch,train_total,train_mse_fluid,train_mse_nonfluid,train_mp,val_total`.
pub fn write_loss_curve(path: impl AsRef<Path>, curve: &[EpochRecord]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(
        f,
        "epoch,train_total,train_mse_fluid,train_mse_nonfluid,train_mp,val_total"
    )?;
    for r in curve {
        writeln!(
            f,
            "{},{:e},{:e},{:e},{:e},{:e}",
            r.epoch,
            r.train_total,
            r.train_mse_fluid,
            r.train_mse_nonfluid,
            r.train_mp,
            r.val_total
        )?;
    }
    f.flush()?;
    Ok(())
}
