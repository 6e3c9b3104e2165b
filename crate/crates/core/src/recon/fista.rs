//! L1-regularized least squares in the Haar domain by (accelerated) proximal gradient.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::haar::HaarTransform3D;
use super::operator::LinearOperator;
use crate::error::{Error, Result};
use crate::grid::ComplexVolume;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FistaConfig {
    /// absolute regularization weight; overrides `lambda_scale` when set
    pub lambda_cs: Option<f64>,
    /// `λ = lambda_scale · max|Eᴴy|` when `lambda_cs` is unset
    pub lambda_scale: f64,
    pub n_iter: usize,
    pub step_size: f64,
    /// stop early once the relative objective change over 10 iterations drops below this; 0 disables
    pub tolerance: f64,
    pub haar_levels: usize,
    /// `false` runs plain ISTA
    pub momentum: bool,
    /// reset the momentum when it points against the last proximal step
    pub adaptive_restart: bool,
}

impl Default for FistaConfig {
    fn default() -> Self {
        FistaConfig {
            lambda_cs: None,
            lambda_scale: 0.2,
            n_iter: 60,
            step_size: 1.0,
            tolerance: 0.0,
            haar_levels: 2,
            momentum: true,
            adaptive_restart: true,
        }
    }
}

impl FistaConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if let Some(l) = self.lambda_cs {
            if !(l >= 0.0) {
                return bad("lambda_cs must be >= 0");
            }
        }
        if !(self.lambda_scale >= 0.0) {
            return bad("lambda_scale must be >= 0");
        }
        if !(self.step_size > 0.0) {
            return bad("step_size must be > 0");
        }
        if !(self.tolerance >= 0.0) {
            return bad("tolerance must be >= 0");
        }
        if self.n_iter == 0 {
            return bad("n_iter must be >= 1");
        }
        Ok(())
    }
}

/// Objective terms after an iteration; iteration 0 is the starting point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveRecord {
    pub iteration: usize,
    pub data_term: f64,
    pub l1_term: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct FistaResult {
    pub x: ComplexVolume,
    pub lambda: f64,
    pub history: Vec<ObjectiveRecord>,
}

impl FistaResult {
    pub fn final_objective(&self) -> f64 {
        self.history.last().map(|r| r.total).unwrap_or(0.0)
    }

    /// `|F_K − F_{K−w}| / |F_K|`
    pub fn relative_change(&self, window: usize) -> f64 {
        let n = self.history.len();
        if n <= window {
            return f64::INFINITY;
        }
        let a = self.history[n - 1].total;
        let b = self.history[n - 1 - window].total;
        if a == 0.0 && b == 0.0 {
            0.0
        } else {
            (a - b).abs() / a.abs().max(f64::MIN_POSITIVE)
        }
    }
}

/// `c·max(1 − t/|c|, 0)`
pub fn soft_threshold(c: Complex64, t: f64) -> Complex64 {
    let m = c.norm();
    if m <= t {
        Complex64::new(0.0, 0.0)
    } else {
        c * (1.0 - t / m)
    }
}

fn sq_residual(ex: &[ComplexVolume], y: &[ComplexVolume]) -> f64 {
    ex.iter()
        .zip(y)
        .map(|(a, b)| {
            a.iter()
                .zip(b.iter())
                .map(|(p, q)| (p - q).norm_sqr())
                .sum::<f64>()
        })
        .sum()
}

fn l1(c: &ComplexVolume) -> f64 {
    c.iter().map(|z| z.norm()).sum()
}

/// `Re⟨z − x_new, x_new − x_old⟩ > 0`
fn momentum_opposes_step(z: &ComplexVolume, x_new: &ComplexVolume, x_old: &ComplexVolume) -> bool {
    let mut acc = 0.0;
    ndarray::Zip::from(z)
        .and(x_new)
        .and(x_old)
        .for_each(|&zz, &xn, &xo| {
            acc += ((zz - xn).conj() * (xn - xo)).re;
        });
    acc > 0.0
}

/// `a + w·(a − b)` elementwise over lists of volumes.
fn extrapolate(a: &[ComplexVolume], b: &[ComplexVolume], w: f64) -> Vec<ComplexVolume> {
    a.iter()
        .zip(b)
        .map(|(p, q)| {
            let mut out = p.clone();
            out.zip_mut_with(q, |o, &qq| *o += (*o - qq) * w);
            out
        })
        .collect()
}

/// Minimize `½‖Ex − y‖² + λ‖Ψx‖₁` from `x0 = 0`.
///
/// `E z` is carried along by linearity so each iteration costs one forward
/// and one adjoint application.
pub fn fista_reconstruct<O: LinearOperator>(
    y: &[ComplexVolume],
    op: &O,
    cfg: &FistaConfig,
) -> Result<FistaResult> {
    cfg.validate()?;
    if y.len() != op.n_outputs() {
        return Err(Error::ShapeMismatch(format!(
            "{} data volumes for {} outputs",
            y.len(),
            op.n_outputs()
        )));
    }
    let d = op.image_dims();
    let haar = HaarTransform3D::new(d, cfg.haar_levels)?;
    let ehy = op.adjoint(y);
    let lambda = match cfg.lambda_cs {
        Some(l) => l,
        None => cfg.lambda_scale * ehy.iter().map(|z| z.norm()).fold(0.0, f64::max),
    };
    let tau = cfg.step_size;
    let thresh = lambda * tau;

    let mut x = ComplexVolume::zeros((d[0], d[1], d[2]));
    let mut ex: Vec<ComplexVolume> = y
        .iter()
        .map(|v| ComplexVolume::zeros(v.raw_dim()))
        .collect();
    let mut z = x.clone();
    let mut ez = ex.clone();
    let mut t = 1.0f64;

    let initial_data = 0.5 * sq_residual(&ex, y);
    let mut history = vec![ObjectiveRecord {
        iteration: 0,
        data_term: initial_data,
        l1_term: 0.0,
        total: initial_data,
    }];
    let initial = initial_data;

    for k in 1..=cfg.n_iter {
        let resid: Vec<ComplexVolume> = ez.iter().zip(y).map(|(a, b)| a - b).collect();
        let grad = op.adjoint(&resid);
        let mut c = z.clone();
        c.zip_mut_with(&grad, |v, &g| *v -= g * tau);
        haar.forward_inplace(&mut c);
        c.mapv_inplace(|v| soft_threshold(v, thresh));
        let l1_term = lambda * l1(&c);
        haar.inverse_inplace(&mut c);
        let x_new = c;
        let ex_new = op.apply(&x_new);

        let data_term = 0.5 * sq_residual(&ex_new, y);
        let total = data_term + l1_term;
        if !total.is_finite() || (initial > 0.0 && total > 10.0 * initial) {
            return Err(Error::Diverged {
                iteration: k,
                objective: total,
                initial,
            });
        }
        history.push(ObjectiveRecord {
            iteration: k,
            data_term,
            l1_term,
            total,
        });

        if cfg.adaptive_restart && momentum_opposes_step(&z, &x_new, &x) {
            t = 1.0;
        }
        let w = if cfg.momentum {
            let t_new = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let w = (t - 1.0) / t_new;
            t = t_new;
            w
        } else {
            0.0
        };
        let mut z_new = x_new.clone();
        z_new.zip_mut_with(&x, |o, &xo| *o += (*o - xo) * w);
        ez = extrapolate(&ex_new, &ex, w);
        z = z_new;
        x = x_new;
        ex = ex_new;

        if cfg.tolerance > 0.0 && k >= 10 {
            let a = history[k].total;
            let b = history[k - 10].total;
            if (a - b).abs() <= cfg.tolerance * a.abs() {
                break;
            }
        }
    }

    Ok(FistaResult { x, lambda, history })
}
