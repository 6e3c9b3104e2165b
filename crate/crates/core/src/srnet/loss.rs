//! Region-split MSE plus the magnitude-projected L1 term and a weight penalty.

use ndarray::{Array2, Array4};
use serde::{Deserialize, Serialize};

use super::network::NetworkParams;
use super::tensor::{real, Real};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub alpha: f64,
    pub beta: f64,
    pub lambda_nn: f64,
    pub eps_dir: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            alpha: 0.8,
            beta: 0.5,
            lambda_nn: 5e-7,
            eps_dir: 1e-8,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) || !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::InvalidConfig(
                "alpha and beta must lie in [0, 1]".into(),
            ));
        }
        if !(self.lambda_nn >= 0.0) || !(self.eps_dir > 0.0) {
            return Err(Error::InvalidConfig(
                "lambda_nn must be >= 0 and eps_dir > 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub mse_fluid: f64,
    pub mse_nonfluid: f64,
    pub mp: f64,
    pub weight_penalty: f64,
    pub total: f64,
}

impl LossTerms {
    pub fn assemble(
        cfg: &LossConfig,
        mse_fluid: f64,
        mse_nonfluid: f64,
        mp: f64,
        weight_penalty: f64,
    ) -> LossTerms {
        LossTerms {
            mse_fluid,
            mse_nonfluid,
            mp,
            weight_penalty,
            total: cfg.alpha * (mse_fluid + mse_nonfluid) + (1.0 - cfg.alpha) * mp + weight_penalty,
        }
    }

    /// Component-wise mean; `total` is re-assembled from the means.
    pub fn mean(cfg: &LossConfig, terms: &[LossTerms]) -> LossTerms {
        let n = terms.len().max(1) as f64;
        let s = |f: fn(&LossTerms) -> f64| terms.iter().map(f).sum::<f64>() / n;
        LossTerms::assemble(
            cfg,
            s(|t| t.mse_fluid),
            s(|t| t.mse_nonfluid),
            s(|t| t.mp),
            s(|t| t.weight_penalty),
        )
    }
}

/// Per-voxel projected L1 pair for true `v` and predicted `p`.
/// cosθ uses `max(‖v‖‖p‖, eps)` in the denominator.
pub fn projected_l1(v: [f64; 3], p: [f64; 3], eps: f64) -> (f64, f64) {
    let a = norm(v);
    let b = norm(p);
    let c = dot(v, p) / (a * b).max(eps);
    ((a - b * c).abs(), (b - a * c).abs())
}

fn norm(v: [f64; 3]) -> f64 {
    dot(v, v).sqrt()
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Gradient of `β L1_I + (1−β) L1_II` with respect to the prediction `p`.
fn projected_l1_grad(v: [f64; 3], p: [f64; 3], beta: f64, eps: f64) -> [f64; 3] {
    let a = norm(v);
    let b = norm(p);
    let d = dot(v, p);
    let db = if b > 0.0 { p.map(|x| x / b) } else { [0.0; 3] };
    let (c, dc) = if a * b > eps {
        let den = a * b;
        let c = d / den;
        (
            c,
            [0, 1, 2].map(|k| v[k] / den - d * a * db[k] / (den * den)),
        )
    } else {
        (d / eps, v.map(|x| x / eps))
    };
    let s1 = sign(a - b * c);
    let s2 = sign(b - a * c);
    [0, 1, 2]
        .map(|k| beta * (-s1 * (c * db[k] + b * dc[k])) + (1.0 - beta) * s2 * (db[k] - a * dc[k]))
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Data terms for one patch and their gradient with respect to `pred`.
/// `pred`, `target` are `[3][S][S][T]`; `mask` is `[S][S]` and holds for every frame.
pub fn data_loss<T: Real>(
    pred: &Array4<T>,
    target: &Array4<T>,
    mask: &Array2<bool>,
    cfg: &LossConfig,
    want_grad: bool,
) -> Result<(LossTerms, Option<Array4<T>>)> {
    let (nc, s0, s1, nt) = pred.dim();
    if pred.dim() != target.dim() || nc != 3 || mask.dim() != (s0, s1) {
        return Err(Error::ShapeMismatch(format!(
            "prediction {:?}, target {:?}, mask {:?}",
            pred.shape(),
            target.shape(),
            mask.shape()
        )));
    }
    let n_fluid_vox = mask.iter().filter(|&&m| m).count();
    let n_f = (n_fluid_vox * nt) as f64;
    let n_nf = ((s0 * s1 - n_fluid_vox) * nt) as f64;
    if n_fluid_vox == 0 {
        log::warn!("patch without fluid voxels: projected L1 term set to 0");
    }
    let (mut sq_f, mut sq_nf, mut mp) = (0.0, 0.0, 0.0);
    let mut grad = want_grad.then(|| Array4::<T>::zeros(pred.dim()));
    let alpha = cfg.alpha;
    for i in 0..s0 {
        for j in 0..s1 {
            let fluid = mask[[i, j]];
            for t in 0..nt {
                let p = [0, 1, 2].map(|c| pred[[c, i, j, t]].to_f64().unwrap());
                let v = [0, 1, 2].map(|c| target[[c, i, j, t]].to_f64().unwrap());
                let diff = [0, 1, 2].map(|c| p[c] - v[c]);
                let sq = dot(diff, diff);
                let mut g = [0.0; 3];
                if fluid {
                    sq_f += sq;
                    let (l1, l2) = projected_l1(v, p, cfg.eps_dir);
                    mp += cfg.beta * l1 + (1.0 - cfg.beta) * l2;
                    if grad.is_some() {
                        let gm = projected_l1_grad(v, p, cfg.beta, cfg.eps_dir);
                        g = [0, 1, 2]
                            .map(|c| alpha * 2.0 * diff[c] / n_f + (1.0 - alpha) * gm[c] / n_f);
                    }
                } else {
                    sq_nf += sq;
                    g = diff.map(|d| alpha * 2.0 * d / n_nf);
                }
                if let Some(gr) = grad.as_mut() {
                    for c in 0..3 {
                        gr[[c, i, j, t]] = real(g[c]);
                    }
                }
            }
        }
    }
    let avg = |s: f64, n: f64| if n > 0.0 { s / n } else { 0.0 };
    let terms = LossTerms::assemble(cfg, avg(sq_f, n_f), avg(sq_nf, n_nf), avg(mp, n_f), 0.0);
    Ok((terms, grad))
}

/// Total loss for one patch including `λ_nn‖w‖²`.
pub fn loss_total<T: Real>(
    pred: &Array4<T>,
    target: &Array4<T>,
    mask: &Array2<bool>,
    cfg: &LossConfig,
    params: &NetworkParams<T>,
) -> Result<LossTerms> {
    let (t, _) = data_loss(pred, target, mask, cfg, false)?;
    Ok(LossTerms::assemble(
        cfg,
        t.mse_fluid,
        t.mse_nonfluid,
        t.mp,
        cfg.lambda_nn * params.weight_norm_sq(),
    ))
}

/// Gradient of `λ_nn‖w‖²`: `2λ_nn·w` on kernels, zero on biases.
pub fn weight_penalty_grad<T: Real>(params: &NetworkParams<T>, lambda_nn: f64) -> NetworkParams<T> {
    let mut g = NetworkParams::zeros(params.config);
    let s: T = real(2.0 * lambda_nn);
    for (gl, pl) in g.layers.iter_mut().zip(&params.layers) {
        gl.w.iter_mut().zip(&pl.w).for_each(|(a, &w)| *a = s * w);
    }
    g
}
