use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::neural::Activation;
use crate::scalar::Real;

/// Fully connected network with a scalar linear output.
///
/// Parameters are stored flat: for each layer `l`, the `out×in` weight
/// matrix (row-major) followed by the `out` biases.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Mlp<T: Real> {
    /// Layer widths from input to output; the last entry is 1.
    pub sizes: Vec<usize>,
    pub activation: Activation,
    pub params: Vec<T>,
}

pub(crate) struct MlpCache<T> {
    /// `acts[0]` is the input, `acts[l+1]` the output of layer `l`.
    acts: Vec<Vec<T>>,
}

impl<T: Real> Mlp<T> {
    /// Zero-initialized network.
    pub fn new(input: usize, hidden: &[usize], activation: Activation) -> Self {
        let mut sizes = vec![input];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let count = sizes.windows(2).map(|w| w[1] * w[0] + w[1]).sum();
        Mlp {
            sizes,
            activation,
            params: vec![T::zero(); count],
        }
    }

    pub fn input_width(&self) -> usize {
        self.sizes[0]
    }

    fn layers(&self) -> usize {
        self.sizes.len() - 1
    }

    fn offset(&self, layer: usize) -> usize {
        self.sizes[..layer + 1]
            .windows(2)
            .map(|w| w[1] * w[0] + w[1])
            .sum()
    }

    /// Weights uniform on ±√(3/fan_in) (variance 1/fan_in); biases zero.
    pub fn initialize<R: Rng>(&mut self, rng: &mut R) {
        for l in 0..self.layers() {
            let (fan_in, out) = (self.sizes[l], self.sizes[l + 1]);
            let limit = (3.0 / fan_in as f64).sqrt();
            let off = self.offset(l);
            for p in &mut self.params[off..off + out * fan_in] {
                *p = T::of(rng.random_range(-limit..limit));
            }
            for p in &mut self.params[off + out * fan_in..off + out * fan_in + out] {
                *p = T::zero();
            }
        }
    }

    fn layer_forward(&self, l: usize, input: &[T], out: &mut Vec<T>) {
        let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
        let off = self.offset(l);
        let w = &self.params[off..off + n_out * n_in];
        let b = &self.params[off + n_out * n_in..off + n_out * n_in + n_out];
        out.clear();
        let last = l + 1 == self.layers();
        for j in 0..n_out {
            let row = &w[j * n_in..(j + 1) * n_in];
            let mut z = b[j];
            for (wi, xi) in row.iter().zip(input) {
                z = z + *wi * *xi;
            }
            out.push(if last { z } else { self.activation.apply(z) });
        }
    }

    pub fn forward(&self, x: &[T]) -> T {
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        for l in 0..self.layers() {
            self.layer_forward(l, &cur, &mut next);
            std::mem::swap(&mut cur, &mut next);
        }
        cur[0]
    }

    pub(crate) fn forward_cached(&self, x: &[T]) -> (T, MlpCache<T>) {
        let mut acts = Vec::with_capacity(self.layers() + 1);
        acts.push(x.to_vec());
        for l in 0..self.layers() {
            let mut out = Vec::new();
            self.layer_forward(l, &acts[l], &mut out);
            acts.push(out);
        }
        let y = acts[self.layers()][0];
        (y, MlpCache { acts })
    }

    /// Accumulates `dy · ∂ŷ/∂θ` into `grad`.
    pub(crate) fn backward(&self, cache: &MlpCache<T>, dy: T, grad: &mut [T]) {
        let mut delta = vec![dy];
        for l in (0..self.layers()).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = self.offset(l);
            let input = &cache.acts[l];
            for j in 0..n_out {
                let d = delta[j];
                if d == T::zero() {
                    continue;
                }
                let g = &mut grad[off + j * n_in..off + (j + 1) * n_in];
                for (gi, xi) in g.iter_mut().zip(input) {
                    *gi = *gi + d * *xi;
                }
                grad[off + n_out * n_in + j] = grad[off + n_out * n_in + j] + d;
            }
            if l == 0 {
                break;
            }
            let w = &self.params[off..off + n_out * n_in];
            let mut prev = vec![T::zero(); n_in];
            for j in 0..n_out {
                let d = delta[j];
                if d == T::zero() {
                    continue;
                }
                for (p, wi) in prev.iter_mut().zip(&w[j * n_in..(j + 1) * n_in]) {
                    *p = *p + d * *wi;
                }
            }
            for (p, &a) in prev.iter_mut().zip(input) {
                *p = *p * self.activation.derivative_from_output(a);
            }
            delta = prev;
        }
    }
}
