//! Residual network: head conv, LR residual blocks, temporal upsampling,
//! HR residual blocks and a 1×1×1 projection to three velocity components.

use ndarray::{Array4, ArrayD, IxDyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::layers::{
    leaky_relu, leaky_relu_backward, upsample_time, upsample_time_backward, ConvLayer,
};
use super::tensor::{real, Padded, Real};
use crate::container::{ArrayData, Container};
use crate::error::{Error, Result};
use crate::patch::N_INPUT_CHANNELS;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkConfig {
    pub c_in: usize,
    pub c_out: usize,
    pub filters: usize,
    pub n_res_lr: usize,
    pub n_res_hr: usize,
    pub leaky_slope: f64,
    /// add the temporally upsampled input velocities (first `c_out` channels) to the output
    pub velocity_skip: bool,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            c_in: N_INPUT_CHANNELS,
            c_out: 3,
            filters: 32,
            n_res_lr: 6,
            n_res_hr: 3,
            leaky_slope: 0.2,
            velocity_skip: true,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.c_in == 0
            || self.c_out == 0
            || self.filters == 0
            || self.n_res_lr == 0
            || self.n_res_hr == 0
        {
            return Err(Error::InvalidConfig(
                "network channel and block counts must be >= 1".into(),
            ));
        }
        if !(self.leaky_slope >= 0.0 && self.leaky_slope < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "leaky slope {} outside [0,1)",
                self.leaky_slope
            )));
        }
        if self.velocity_skip && self.c_out > self.c_in {
            return Err(Error::InvalidConfig(
                "velocity skip needs c_out <= c_in".into(),
            ));
        }
        Ok(())
    }

    pub fn n_layers(&self) -> usize {
        2 + 2 * (self.n_res_lr + self.n_res_hr)
    }

    /// Receptive-field half-width along a spatial axis, in voxels.
    pub fn spatial_reach(&self) -> usize {
        1 + 2 * (self.n_res_lr + self.n_res_hr)
    }
}

/// Layers in order: head, LR blocks (two convs each), HR blocks, tail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams<T> {
    pub config: NetworkConfig,
    pub layers: Vec<ConvLayer<T>>,
}

impl<T: Real> NetworkParams<T> {
    pub fn zeros(config: NetworkConfig) -> Self {
        let f = config.filters;
        let mut layers = vec![ConvLayer::zeros(f, config.c_in, 3)];
        for _ in 0..2 * (config.n_res_lr + config.n_res_hr) {
            layers.push(ConvLayer::zeros(f, f, 3));
        }
        layers.push(ConvLayer::zeros(config.c_out, f, 1));
        NetworkParams { config, layers }
    }

    /// He-normal weights, zero biases. With the velocity skip the final layer
    /// starts at zero, so the untrained network is linear interpolation.
    pub fn init(config: NetworkConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut p = Self::zeros(config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = p.layers.len();
        let trained = if config.velocity_skip { n - 1 } else { n };
        for layer in &mut p.layers[..trained] {
            let fan_in = (layer.c_in * layer.k * layer.k * layer.k) as f64;
            let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("positive std");
            layer
                .w
                .iter_mut()
                .for_each(|w| *w = real(normal.sample(&mut rng)));
        }
        Ok(p)
    }

    pub fn head(&self) -> &ConvLayer<T> {
        &self.layers[0]
    }

    pub fn tail(&self) -> &ConvLayer<T> {
        self.layers.last().expect("non-empty")
    }

    pub fn tail_mut(&mut self) -> &mut ConvLayer<T> {
        self.layers.last_mut().expect("non-empty")
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Σ w² over kernels only.
    pub fn weight_norm_sq(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.w.iter())
            .map(|w| w.to_f64().unwrap().powi(2))
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.w.iter().chain(&l.b).all(|v| v.is_finite()))
    }

    /// Flat parameter access in a fixed order (weights then bias per layer).
    pub fn get(&self, idx: usize) -> T {
        let mut i = idx;
        for l in &self.layers {
            if i < l.w.len() {
                return l.w[i];
            }
            i -= l.w.len();
            if i < l.b.len() {
                return l.b[i];
            }
            i -= l.b.len();
        }
        panic!("parameter index {idx} out of range")
    }

    pub fn set(&mut self, idx: usize, v: T) {
        let mut i = idx;
        for l in &mut self.layers {
            if i < l.w.len() {
                l.w[i] = v;
                return;
            }
            i -= l.w.len();
            if i < l.b.len() {
                l.b[i] = v;
                return;
            }
            i -= l.b.len();
        }
        panic!("parameter index {idx} out of range")
    }

    /// `self += s · other`, parameter-wise.
    pub fn add_scaled(&mut self, other: &NetworkParams<T>, s: T) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.w.iter_mut().zip(&b.w).for_each(|(x, &y)| *x += s * y);
            a.b.iter_mut().zip(&b.b).for_each(|(x, &y)| *x += s * y);
        }
    }

    pub fn scale(&mut self, s: T) {
        for l in &mut self.layers {
            l.w.iter_mut()
                .chain(l.b.iter_mut())
                .for_each(|x| *x = *x * s);
        }
    }

    pub fn cast<U: Real>(&self) -> NetworkParams<U> {
        let c = |v: &Vec<T>| v.iter().map(|x| real::<U>(x.to_f64().unwrap())).collect();
        NetworkParams {
            config: self.config,
            layers: self
                .layers
                .iter()
                .map(|l| ConvLayer {
                    c_out: l.c_out,
                    c_in: l.c_in,
                    k: l.k,
                    w: c(&l.w),
                    b: c(&l.b),
                })
                .collect(),
        }
    }
}

impl NetworkParams<f32> {
    /// One array per tensor (`layer_NN_w` as `[out][in][k][k][k]`, `layer_NN_b`)
    /// plus the config under the `network` metadata key.
    pub fn to_container(&self) -> Result<Container> {
        let mut c = Container::new();
        for (i, l) in self.layers.iter().enumerate() {
            let w = ArrayD::from_shape_vec(IxDyn(&[l.c_out, l.c_in, l.k, l.k, l.k]), l.w.clone())
                .expect("consistent kernel shape");
            c.push(format!("layer_{i:02}_w"), ArrayData::F32(w));
            c.push(
                format!("layer_{i:02}_b"),
                ArrayData::F32(ArrayD::from_shape_vec(IxDyn(&[l.c_out]), l.b.clone()).unwrap()),
            );
        }
        c.set_meta("network", self.config)?;
        Ok(c)
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let config: NetworkConfig = c.meta("network")?;
        config.validate()?;
        let mut p = Self::zeros(config);
        for (i, l) in p.layers.iter_mut().enumerate() {
            let w = c.f32(&format!("layer_{i:02}_w"))?;
            let b = c.f32(&format!("layer_{i:02}_b"))?;
            if w.shape() != [l.c_out, l.c_in, l.k, l.k, l.k] || b.shape() != [l.c_out] {
                return Err(Error::ShapeMismatch(format!(
                    "layer {i}: kernel {:?}, bias {:?}",
                    w.shape(),
                    b.shape()
                )));
            }
            l.w = w.iter().copied().collect();
            l.b = b.iter().copied().collect();
        }
        if !p.is_finite() {
            return Err(Error::NonFinite("network parameters".into()));
        }
        Ok(p)
    }
}

struct BlockCache<T> {
    input: Padded<T>,
    pre: Padded<T>,
    act: Padded<T>,
}

/// Intermediate activations kept for the backward pass.
pub struct ForwardCache<T> {
    input: Padded<T>,
    head_pre: Padded<T>,
    lr_blocks: Vec<BlockCache<T>>,
    hr_blocks: Vec<BlockCache<T>>,
    tail_input: Padded<T>,
}

fn run_blocks<T: Real>(
    layers: &[ConvLayer<T>],
    mut x: Padded<T>,
    slope: T,
    cache: Option<&mut Vec<BlockCache<T>>>,
) -> Padded<T> {
    let mut store = Vec::new();
    for pair in layers.chunks(2) {
        let pre = pair[0].forward(&x);
        let act = leaky_relu(&pre, slope);
        let mut out = pair[1].forward(&act);
        out.data.iter_mut().zip(&x.data).for_each(|(o, &i)| *o += i);
        if cache.is_some() {
            store.push(BlockCache { input: x, pre, act });
        }
        x = out;
    }
    if let Some(c) = cache {
        *c = store;
    }
    x
}

fn blocks_backward<T: Real>(
    layers: &[ConvLayer<T>],
    grads: &mut [ConvLayer<T>],
    cache: &[BlockCache<T>],
    mut g: Padded<T>,
    slope: T,
) -> Padded<T> {
    for (b, bc) in cache.iter().enumerate().rev() {
        let g_act = layers[2 * b + 1].backward(&bc.act, &g, &mut grads[2 * b + 1]);
        let g_pre = leaky_relu_backward(&bc.pre, &g_act, slope);
        let g_in = layers[2 * b].backward(&bc.input, &g_pre, &mut grads[2 * b]);
        g.data
            .iter_mut()
            .zip(&g_in.data)
            .for_each(|(a, &d)| *a += d);
    }
    g
}

impl<T: Real> NetworkParams<T> {
    fn ranges(&self) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let lr = 1..1 + 2 * self.config.n_res_lr;
        let hr = lr.end..lr.end + 2 * self.config.n_res_hr;
        (lr, hr)
    }

    fn check_input(&self, x: &Array4<T>) -> Result<()> {
        let (c, _, _, nt) = x.dim();
        if c != self.config.c_in {
            return Err(Error::ShapeMismatch(format!(
                "input has {c} channels, network expects {}",
                self.config.c_in
            )));
        }
        if nt < 2 {
            return Err(Error::ShapeMismatch(
                "input needs at least two frames".into(),
            ));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network input".into()));
        }
        Ok(())
    }

    fn forward_impl(
        &self,
        x: &Array4<T>,
        keep: bool,
    ) -> Result<(Padded<T>, Option<ForwardCache<T>>)> {
        self.check_input(x)?;
        let slope: T = real(self.config.leaky_slope);
        let (lr, hr) = self.ranges();
        let input = Padded::from_array(x);
        let head_pre = self.head().forward(&input);
        let h = leaky_relu(&head_pre, slope);
        let mut lr_cache = Vec::new();
        let h = run_blocks(&self.layers[lr], h, slope, keep.then_some(&mut lr_cache));
        let h = upsample_time(&h);
        let mut hr_cache = Vec::new();
        let h = run_blocks(&self.layers[hr], h, slope, keep.then_some(&mut hr_cache));
        let mut y = self.tail().forward(&h);
        if self.config.velocity_skip {
            let c = self.config.c_out;
            let n = input.channel_len();
            let v = Padded {
                channels: c,
                dims: input.dims,
                data: input.data[..c * n].to_vec(),
            };
            let up = upsample_time(&v);
            y.data.iter_mut().zip(&up.data).for_each(|(a, &b)| *a += b);
        }
        let cache = keep.then(|| ForwardCache {
            input,
            head_pre,
            lr_blocks: lr_cache,
            hr_blocks: hr_cache,
            tail_input: h,
        });
        Ok((y, cache))
    }

    /// `[c_in][S][S][F]` → `[c_out][S][S][2F]`.
    pub fn forward(&self, x: &Array4<T>) -> Result<Array4<T>> {
        Ok(self.forward_impl(x, false)?.0.to_array())
    }

    pub fn forward_cached(&self, x: &Array4<T>) -> Result<(Array4<T>, ForwardCache<T>)> {
        let (y, c) = self.forward_impl(x, true)?;
        Ok((y.to_array(), c.expect("cache requested")))
    }

    /// Parameter gradients for output gradient `gy` (shape of the forward output).
    pub fn backward(&self, cache: &ForwardCache<T>, gy: &Array4<T>) -> NetworkParams<T> {
        let slope: T = real(self.config.leaky_slope);
        let (lr, hr) = self.ranges();
        let mut grads = NetworkParams::zeros(self.config);
        let n = self.layers.len();
        let g = Padded::from_array(gy);
        let g = self
            .tail()
            .backward(&cache.tail_input, &g, &mut grads.layers[n - 1]);
        let g = blocks_backward(
            &self.layers[hr.clone()],
            &mut grads.layers[hr],
            &cache.hr_blocks,
            g,
            slope,
        );
        let g = upsample_time_backward(&g);
        let g = blocks_backward(
            &self.layers[lr.clone()],
            &mut grads.layers[lr],
            &cache.lr_blocks,
            g,
            slope,
        );
        let g = leaky_relu_backward(&cache.head_pre, &g, slope);
        self.head().backward(&cache.input, &g, &mut grads.layers[0]);
        grads
    }
}
