//! Bias-corrected Adam.

use serde::{Deserialize, Serialize};

use super::network::NetworkParams;
use super::tensor::{real, Real};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub epochs: usize,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 2e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            batch_size: 32,
            epochs: 160,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0)
            || !(0.0..1.0).contains(&self.beta1)
            || !(0.0..1.0).contains(&self.beta2)
            || !(self.eps > 0.0)
        {
            return Err(Error::InvalidConfig(
                "Adam needs lr >= 0, betas in [0,1), eps > 0".into(),
            ));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: NetworkParams<T>,
    pub v: NetworkParams<T>,
    pub step: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(params: &NetworkParams<T>) -> Self {
        AdamState {
            m: NetworkParams::zeros(params.config),
            v: NetworkParams::zeros(params.config),
            step: 0,
        }
    }

    pub fn step(
        &mut self,
        params: &mut NetworkParams<T>,
        grads: &NetworkParams<T>,
        cfg: &AdamConfig,
    ) {
        self.step += 1;
        let (b1, b2): (T, T) = (real(cfg.beta1), real(cfg.beta2));
        let one = T::one();
        let c1: T = real(1.0 - cfg.beta1.powi(self.step as i32));
        let c2: T = real(1.0 - cfg.beta2.powi(self.step as i32));
        let (lr, eps): (T, T) = (real(cfg.lr), real(cfg.eps));
        let layers = params
            .layers
            .iter_mut()
            .zip(&grads.layers)
            .zip(self.m.layers.iter_mut().zip(self.v.layers.iter_mut()));
        for ((p, g), (m, v)) in layers {
            let pw = p.w.iter_mut().chain(p.b.iter_mut());
            let gw = g.w.iter().chain(&g.b);
            let mw = m.w.iter_mut().chain(m.b.iter_mut());
            let vw = v.w.iter_mut().chain(v.b.iter_mut());
            for (((x, &gi), mi), vi) in pw.zip(gw).zip(mw).zip(vw) {
                *mi = b1 * *mi + (one - b1) * gi;
                *vi = b2 * *vi + (one - b2) * gi * gi;
                let mh = *mi / c1;
                let vh = *vi / c2;
                *x = *x - lr * mh / (vh.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::srnet::NetworkConfig;

    fn cfg() -> NetworkConfig {
        NetworkConfig {
            filters: 2,
            n_res_lr: 1,
            n_res_hr: 1,
            ..Default::default()
        }
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = NetworkParams::<f32>::init(cfg(), 1).unwrap();
        let p0 = p.clone();
        let mut s = AdamState::new(&p);
        let g = NetworkParams::zeros(p.config);
        for _ in 0..3 {
            s.step(&mut p, &g, &AdamConfig::default());
        }
        assert_eq!(p, p0);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut p = NetworkParams::<f64>::init(cfg(), 1).unwrap();
        let p0 = p.clone();
        let mut g = NetworkParams::zeros(p.config);
        for i in 0..g.n_params() {
            g.set(i, if i % 3 == 0 { 0.7 } else { -2.5 });
        }
        let c = AdamConfig::default();
        AdamState::new(&p).step(&mut p, &g, &c);
        for i in 0..p.n_params() {
            let d = p.get(i) - p0.get(i);
            assert!((d + c.lr * g.get(i).signum()).abs() < 1e-10);
        }
    }

    #[test]
    fn deterministic() {
        let run = || {
            let mut p = NetworkParams::<f32>::init(cfg(), 4).unwrap();
            let mut s = AdamState::new(&p);
            for k in 0..5 {
                let mut g = NetworkParams::zeros(p.config);
                for i in 0..g.n_params() {
                    g.set(i, ((i * 7 + k) % 11) as f32 - 5.0);
                }
                s.step(&mut p, &g, &AdamConfig::default());
            }
            p
        };
        assert_eq!(run(), run());
    }
}
