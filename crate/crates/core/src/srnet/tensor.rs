//! Channel-major activations with a one-voxel zero border around each channel volume.

use ndarray::Array4;
use num_traits::{Float, FromPrimitive};

/// Scalar type for the network: `f32` for training, `f64` for gradient checks.
pub trait Real:
    Float
    + FromPrimitive
    + Send
    + Sync
    + std::fmt::Debug
    + std::iter::Sum
    + std::ops::AddAssign
    + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

pub(crate) fn real<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("representable")
}

/// `[channel][d0+2][d1+2][d2+2]`, border entries are kept at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Padded<T> {
    pub channels: usize,
    pub dims: [usize; 3],
    pub data: Vec<T>,
}

impl<T: Real> Padded<T> {
    pub fn zeros(channels: usize, dims: [usize; 3]) -> Self {
        let len = (dims[0] + 2) * (dims[1] + 2) * (dims[2] + 2);
        Padded {
            channels,
            dims,
            data: vec![T::zero(); channels * len],
        }
    }

    pub fn channel_len(&self) -> usize {
        (self.dims[0] + 2) * (self.dims[1] + 2) * (self.dims[2] + 2)
    }

    /// Strides of the first two padded axes.
    pub fn strides(&self) -> (usize, usize) {
        let s1 = self.dims[2] + 2;
        (s1 * (self.dims[1] + 2), s1)
    }

    /// First and one-past-last flat index spanning every interior voxel.
    pub fn interior_span(&self) -> (usize, usize) {
        let (s0, s1) = self.strides();
        let base = s0 + s1 + 1;
        (base, self.channel_len() - base)
    }

    pub fn channel(&self, c: usize) -> &[T] {
        let n = self.channel_len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [T] {
        let n = self.channel_len();
        &mut self.data[c * n..(c + 1) * n]
    }

    fn index(&self, a: usize, b: usize, c: usize) -> usize {
        let (s0, s1) = self.strides();
        (a + 1) * s0 + (b + 1) * s1 + c + 1
    }

    pub fn get(&self, ch: usize, a: usize, b: usize, c: usize) -> T {
        self.channel(ch)[self.index(a, b, c)]
    }

    pub fn set(&mut self, ch: usize, a: usize, b: usize, c: usize, v: T) {
        let i = self.index(a, b, c);
        self.channel_mut(ch)[i] = v;
    }

    /// Reset every border entry to zero.
    pub fn zero_border(&mut self) {
        let [d0, d1, d2] = self.dims;
        let (s0, s1) = self.strides();
        for ch in 0..self.channels {
            let v = self.channel_mut(ch);
            for a in 0..d0 + 2 {
                for b in 0..d1 + 2 {
                    let row = a * s0 + b * s1;
                    if a == 0 || b == 0 || a == d0 + 1 || b == d1 + 1 {
                        v[row..row + d2 + 2].fill(T::zero());
                    } else {
                        v[row] = T::zero();
                        v[row + d2 + 1] = T::zero();
                    }
                }
            }
        }
    }

    pub fn from_array(a: &Array4<T>) -> Self {
        let (c, d0, d1, d2) = a.dim();
        let mut p = Padded::zeros(c, [d0, d1, d2]);
        for ((ch, i, j, k), &v) in a.indexed_iter() {
            p.set(ch, i, j, k, v);
        }
        p
    }

    pub fn to_array(&self) -> Array4<T> {
        let [d0, d1, d2] = self.dims;
        Array4::from_shape_fn((self.channels, d0, d1, d2), |(ch, i, j, k)| {
            self.get(ch, i, j, k)
        })
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_border() {
        let a = Array4::from_shape_fn((2, 3, 2, 4), |(c, i, j, k)| {
            (c * 100 + i * 10 + j * 4 + k) as f64 + 1.0
        });
        let mut p = Padded::from_array(&a);
        assert_eq!(p.to_array(), a);
        let interior: f64 = a.iter().sum();
        assert_eq!(p.data.iter().sum::<f64>(), interior);
        p.data.iter_mut().for_each(|v| *v = 1.0);
        p.zero_border();
        assert_eq!(p.data.iter().sum::<f64>(), (2 * 3 * 2 * 4) as f64);
        let (lo, hi) = p.interior_span();
        assert_eq!(lo, p.strides().0 + p.strides().1 + 1);
        assert_eq!(hi - 1, p.index(2, 1, 3));
    }
}
