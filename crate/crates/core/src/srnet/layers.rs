//! Convolution, leaky ReLU and temporal upsampling with their adjoints.

use serde::{Deserialize, Serialize};

use super::tensor::{real, Padded, Real};

/// Kernel `[out][in][k][k][k]` (k = 1 or 3) and bias `[out]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvLayer<T> {
    pub c_out: usize,
    pub c_in: usize,
    pub k: usize,
    pub w: Vec<T>,
    pub b: Vec<T>,
}

impl<T: Real> ConvLayer<T> {
    pub fn zeros(c_out: usize, c_in: usize, k: usize) -> Self {
        assert!(k == 1 || k == 3, "kernel size must be 1 or 3");
        ConvLayer {
            c_out,
            c_in,
            k,
            w: vec![T::zero(); c_out * c_in * k * k * k],
            b: vec![T::zero(); c_out],
        }
    }

    /// Flat-index offsets of each kernel row; a row covers `k` consecutive taps
    /// along the last axis, centred on the offset.
    fn row_offsets(&self, x: &Padded<T>) -> Vec<isize> {
        if self.k == 1 {
            return vec![0];
        }
        let (s0, s1) = x.strides();
        let mut v = Vec::with_capacity(9);
        for a in -1isize..=1 {
            for b in -1isize..=1 {
                v.push(a * s0 as isize + b * s1 as isize);
            }
        }
        v
    }

    fn taps(&self) -> usize {
        self.k * self.k * self.k
    }

    fn row_weights(&self, o: usize, i: usize, r: usize) -> [T; 3] {
        let base = (o * self.c_in + i) * self.taps();
        if self.k == 1 {
            [T::zero(), self.w[base], T::zero()]
        } else {
            [
                self.w[base + 3 * r],
                self.w[base + 3 * r + 1],
                self.w[base + 3 * r + 2],
            ]
        }
    }

    pub fn forward(&self, x: &Padded<T>) -> Padded<T> {
        assert_eq!(x.channels, self.c_in);
        let mut y = Padded::zeros(self.c_out, x.dims);
        let (lo, hi) = x.interior_span();
        let len = hi - lo;
        let rows = self.row_offsets(x);
        for o in 0..self.c_out {
            let out = &mut y.channel_mut(o)[lo..hi];
            out.fill(self.b[o]);
            for i in 0..self.c_in {
                let xin = x.channel(i);
                for (r, &off) in rows.iter().enumerate() {
                    let w = self.row_weights(o, i, r);
                    let s = (lo as isize + off) as usize;
                    if self.k == 1 {
                        axpy(out, &xin[s..s + len], w[1]);
                    } else {
                        axpy3(out, &xin[s - 1..s + len + 1], w);
                    }
                }
            }
        }
        y.zero_border();
        y
    }

    /// Accumulate parameter gradients into `grad` and return the input gradient.
    /// `gy` must have a zero border.
    pub fn backward(&self, x: &Padded<T>, gy: &Padded<T>, grad: &mut ConvLayer<T>) -> Padded<T> {
        let mut gx = Padded::zeros(self.c_in, x.dims);
        let (lo, hi) = x.interior_span();
        let len = hi - lo;
        let rows = self.row_offsets(x);
        let taps = self.taps();
        for o in 0..self.c_out {
            let g = &gy.channel(o)[lo..hi];
            grad.b[o] += sum(g);
            for i in 0..self.c_in {
                let xin = x.channel(i);
                let base = (o * self.c_in + i) * taps;
                for (r, &off) in rows.iter().enumerate() {
                    let s = (lo as isize + off) as usize;
                    if self.k == 1 {
                        grad.w[base] += dot(g, &xin[s..s + len]);
                    } else {
                        let d = dot3(g, &xin[s - 1..s + len + 1]);
                        for c in 0..3 {
                            grad.w[base + 3 * r + c] += d[c];
                        }
                    }
                }
            }
        }
        for i in 0..self.c_in {
            let gxi = gx.channel_mut(i);
            for o in 0..self.c_out {
                let g = gy.channel(o);
                for (r, &off) in rows.iter().enumerate() {
                    let w = self.row_weights(o, i, r);
                    let s = (lo as isize + off) as usize;
                    let dst = &mut gxi[s..s + len];
                    if self.k == 1 {
                        axpy(dst, &g[lo..hi], w[1]);
                    } else {
                        // gx[s+m] += w0 g[m+1] + w1 g[m] + w2 g[m-1]; the dropped ends land on the border
                        axpy3(dst, &g[lo - 1..hi + 1], [w[2], w[1], w[0]]);
                    }
                }
            }
        }
        gx.zero_border();
        gx
    }
}

const LANES: usize = 8;

fn axpy<T: Real>(out: &mut [T], x: &[T], w: T) {
    for (d, &s) in out.iter_mut().zip(x) {
        *d += w * s;
    }
}

/// `out[j] += w0 x[j] + w1 x[j+1] + w2 x[j+2]`, `x.len() == out.len() + 2`.
fn axpy3<T: Real>(out: &mut [T], x: &[T], w: [T; 3]) {
    let n = out.len();
    let (x0, x1, x2) = (&x[..n], &x[1..n + 1], &x[2..n + 2]);
    for (((d, &a), &b), &c) in out.iter_mut().zip(x0).zip(x1).zip(x2) {
        *d += w[0] * a + w[1] * b + w[2] * c;
    }
}

fn sum<T: Real>(g: &[T]) -> T {
    let mut acc = [T::zero(); LANES];
    let chunks = g.chunks_exact(LANES);
    let rest = chunks.remainder();
    for c in chunks {
        for l in 0..LANES {
            acc[l] += c[l];
        }
    }
    acc.iter()
        .copied()
        .chain(rest.iter().copied())
        .fold(T::zero(), |a, b| a + b)
}

fn dot<T: Real>(g: &[T], x: &[T]) -> T {
    let mut acc = [T::zero(); LANES];
    let n = g.len() / LANES * LANES;
    for (cg, cx) in g[..n].chunks_exact(LANES).zip(x[..n].chunks_exact(LANES)) {
        for l in 0..LANES {
            acc[l] += cg[l] * cx[l];
        }
    }
    let tail = g[n..]
        .iter()
        .zip(&x[n..])
        .fold(T::zero(), |a, (&p, &q)| a + p * q);
    acc.iter().copied().fold(T::zero(), |a, b| a + b) + tail
}

/// `[Σ g[j] x[j], Σ g[j] x[j+1], Σ g[j] x[j+2]]`, `x.len() == g.len() + 2`.
fn dot3<T: Real>(g: &[T], x: &[T]) -> [T; 3] {
    let n = g.len();
    [dot(g, &x[..n]), dot(g, &x[1..n + 1]), dot(g, &x[2..n + 2])]
}

pub fn leaky_relu<T: Real>(x: &Padded<T>, slope: T) -> Padded<T> {
    let mut y = x.clone();
    y.data.iter_mut().for_each(|v| {
        if *v < T::zero() {
            *v = *v * slope;
        }
    });
    y
}

/// Gradient through leaky ReLU evaluated at pre-activation `x`.
pub fn leaky_relu_backward<T: Real>(x: &Padded<T>, gy: &Padded<T>, slope: T) -> Padded<T> {
    let mut g = gy.clone();
    g.data.iter_mut().zip(&x.data).for_each(|(gv, &xv)| {
        if xv < T::zero() {
            *gv = *gv * slope;
        }
    });
    g
}

/// Double the last axis: `out[2i] = in[i]`, `out[2i+1]` is the midpoint of
/// `in[i]` and `in[i+1]`, the final frame is extrapolated linearly from the last two.
pub fn upsample_time<T: Real>(x: &Padded<T>) -> Padded<T> {
    let [d0, d1, n] = x.dims;
    assert!(n >= 2, "temporal upsampling needs at least two frames");
    let mut y = Padded::zeros(x.channels, [d0, d1, 2 * n]);
    let half: T = real(0.5);
    let (a15, a05): (T, T) = (real(1.5), real(0.5));
    let (xs0, xs1) = x.strides();
    let (ys0, ys1) = y.strides();
    for ch in 0..x.channels {
        let xin = x.channel(ch).to_vec();
        let out = y.channel_mut(ch);
        for a in 1..=d0 {
            for b in 1..=d1 {
                let xr = &xin[a * xs0 + b * xs1 + 1..a * xs0 + b * xs1 + 1 + n];
                let yr = &mut out[a * ys0 + b * ys1 + 1..a * ys0 + b * ys1 + 1 + 2 * n];
                for i in 0..n {
                    yr[2 * i] = xr[i];
                    yr[2 * i + 1] = if i + 1 < n {
                        half * (xr[i] + xr[i + 1])
                    } else {
                        a15 * xr[n - 1] - a05 * xr[n - 2]
                    };
                }
            }
        }
    }
    y
}

pub fn upsample_time_backward<T: Real>(gy: &Padded<T>) -> Padded<T> {
    let [d0, d1, n2] = gy.dims;
    let n = n2 / 2;
    let mut gx = Padded::zeros(gy.channels, [d0, d1, n]);
    let half: T = real(0.5);
    let (a15, a05): (T, T) = (real(1.5), real(0.5));
    let (xs0, xs1) = gx.strides();
    let (ys0, ys1) = gy.strides();
    for ch in 0..gy.channels {
        let g = gy.channel(ch).to_vec();
        let out = gx.channel_mut(ch);
        for a in 1..=d0 {
            for b in 1..=d1 {
                let gr = &g[a * ys0 + b * ys1 + 1..a * ys0 + b * ys1 + 1 + n2];
                let xr = &mut out[a * xs0 + b * xs1 + 1..a * xs0 + b * xs1 + 1 + n];
                for i in 0..n {
                    xr[i] += gr[2 * i];
                    if i + 1 < n {
                        xr[i] += half * gr[2 * i + 1];
                        xr[i + 1] += half * gr[2 * i + 1];
                    } else {
                        xr[n - 1] += a15 * gr[2 * n - 1];
                        xr[n - 2] = xr[n - 2] - a05 * gr[2 * n - 1];
                    }
                }
            }
        }
    }
    gx
}
