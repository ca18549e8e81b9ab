use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Cell {
    /// `h_t = tanh(W_x x_t + W_h h_{t-1} + b)`.
    Elman,
    Lstm,
}

impl Cell {
    fn gates(self) -> usize {
        match self {
            Cell::Elman => 1,
            Cell::Lstm => 4,
        }
    }
}

/// Stacked recurrent network read out from the top layer's last hidden state.
///
/// Per layer the flat parameter vector holds `W_x` (G·H × in), `W_h`
/// (G·H × H) and `b` (G·H), where G is 1 for Elman and 4 for LSTM with gate
/// blocks ordered input, forget, output, candidate. The linear read-out
/// `W_o` (H) and `b_o` come last.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Rnn<T: Real> {
    pub cell: Cell,
    pub input: usize,
    pub hidden: usize,
    pub layers: usize,
    pub params: Vec<T>,
}

struct Layout {
    wx: usize,
    wh: usize,
    b: usize,
    n_in: usize,
}

/// Per-layer, per-step values kept for backpropagation through time.
struct StepCache<T> {
    input: Vec<T>,
    h: Vec<T>,
    c: Vec<T>,
    /// Activated gates `[i, f, o, g]` (LSTM only).
    gates: Vec<T>,
}

pub(crate) struct RnnCache<T> {
    steps: Vec<Vec<StepCache<T>>>,
}

fn sigmoid<T: Real>(z: T) -> T {
    T::one() / (T::one() + (-z).exp())
}

impl<T: Real> Rnn<T> {
    pub fn new(cell: Cell, input: usize, hidden: usize, layers: usize) -> Self {
        let g = cell.gates();
        let mut count = 0;
        for l in 0..layers {
            let n_in = if l == 0 { input } else { hidden };
            count += g * hidden * (n_in + hidden + 1);
        }
        count += hidden + 1;
        Rnn {
            cell,
            input,
            hidden,
            layers,
            params: vec![T::zero(); count],
        }
    }

    fn layout(&self, layer: usize) -> Layout {
        let g = self.cell.gates();
        let h = self.hidden;
        let mut off = 0;
        for l in 0..layer {
            let n_in = if l == 0 { self.input } else { h };
            off += g * h * (n_in + h + 1);
        }
        let n_in = if layer == 0 { self.input } else { h };
        Layout {
            wx: off,
            wh: off + g * h * n_in,
            b: off + g * h * (n_in + h),
            n_in,
        }
    }

    fn readout_offset(&self) -> usize {
        self.params.len() - self.hidden - 1
    }

    /// Weights uniform on ±√(3/fan_in), biases zero except the LSTM forget gate.
    pub fn initialize<R: Rng>(&mut self, rng: &mut R, forget_bias: f64) {
        let g = self.cell.gates();
        let h = self.hidden;
        for l in 0..self.layers {
            let lay = self.layout(l);
            let lx = (3.0 / lay.n_in as f64).sqrt();
            let lh = (3.0 / h as f64).sqrt();
            for p in &mut self.params[lay.wx..lay.wh] {
                *p = T::of(rng.random_range(-lx..lx));
            }
            for p in &mut self.params[lay.wh..lay.b] {
                *p = T::of(rng.random_range(-lh..lh));
            }
            for (k, p) in self.params[lay.b..lay.b + g * h].iter_mut().enumerate() {
                let forget = self.cell == Cell::Lstm && (h..2 * h).contains(&k);
                *p = if forget { T::of(forget_bias) } else { T::zero() };
            }
        }
        let ro = self.readout_offset();
        let lo = (3.0 / h as f64).sqrt();
        for p in &mut self.params[ro..ro + h] {
            *p = T::of(rng.random_range(-lo..lo));
        }
        self.params[ro + h] = T::zero();
    }

    /// Runs one layer over a sequence of inputs.
    fn layer_forward(&self, l: usize, inputs: Vec<Vec<T>>) -> Vec<StepCache<T>> {
        let lay = self.layout(l);
        let h = self.hidden;
        let g = self.cell.gates();
        let p = &self.params;
        let mut h_prev = vec![T::zero(); h];
        let mut c_prev = vec![T::zero(); h];
        let mut out = Vec::with_capacity(inputs.len());
        for x in inputs {
            let mut z = p[lay.b..lay.b + g * h].to_vec();
            for (k, zk) in z.iter_mut().enumerate() {
                let wx = &p[lay.wx + k * lay.n_in..lay.wx + (k + 1) * lay.n_in];
                let wh = &p[lay.wh + k * h..lay.wh + (k + 1) * h];
                let mut s = *zk;
                for (w, v) in wx.iter().zip(&x) {
                    s = s + *w * *v;
                }
                for (w, v) in wh.iter().zip(&h_prev) {
                    s = s + *w * *v;
                }
                *zk = s;
            }
            let step = match self.cell {
                Cell::Elman => {
                    let hn: Vec<T> = z.iter().map(|v| v.tanh()).collect();
                    StepCache {
                        input: x,
                        h: hn,
                        c: Vec::new(),
                        gates: Vec::new(),
                    }
                }
                Cell::Lstm => {
                    let mut gates = Vec::with_capacity(4 * h);
                    gates.extend(z[..3 * h].iter().map(|&v| sigmoid(v)));
                    gates.extend(z[3 * h..].iter().map(|v| v.tanh()));
                    let c: Vec<T> = (0..h)
                        .map(|j| gates[h + j] * c_prev[j] + gates[j] * gates[3 * h + j])
                        .collect();
                    let hn: Vec<T> = (0..h).map(|j| gates[2 * h + j] * c[j].tanh()).collect();
                    StepCache {
                        input: x,
                        h: hn,
                        c,
                        gates,
                    }
                }
            };
            h_prev.clone_from(&step.h);
            if self.cell == Cell::Lstm {
                c_prev.clone_from(&step.c);
            }
            out.push(step);
        }
        out
    }

    pub(crate) fn forward_cached(&self, sequence: &[&[T]]) -> (T, RnnCache<T>) {
        let mut inputs: Vec<Vec<T>> = sequence.iter().map(|r| r.to_vec()).collect();
        let mut steps = Vec::with_capacity(self.layers);
        for l in 0..self.layers {
            let layer = self.layer_forward(l, inputs);
            inputs = layer.iter().map(|s| s.h.clone()).collect();
            steps.push(layer);
        }
        let last = &steps[self.layers - 1][sequence.len() - 1].h;
        let ro = self.readout_offset();
        let mut y = self.params[ro + self.hidden];
        for (w, v) in self.params[ro..ro + self.hidden].iter().zip(last) {
            y = y + *w * *v;
        }
        (y, RnnCache { steps })
    }

    pub fn forward(&self, sequence: &[&[T]]) -> T {
        self.forward_cached(sequence).0
    }

    /// Top-layer hidden state after the last step.
    pub fn final_hidden(&self, sequence: &[&[T]]) -> Vec<T> {
        let (_, cache) = self.forward_cached(sequence);
        cache.steps[self.layers - 1][sequence.len() - 1].h.clone()
    }

    /// Backpropagation through time; accumulates `dy · ∂ŷ/∂θ` into `grad`.
    pub(crate) fn backward(&self, cache: &RnnCache<T>, dy: T, grad: &mut [T]) {
        let h = self.hidden;
        let g = self.cell.gates();
        let steps = cache.steps[0].len();
        let ro = self.readout_offset();
        let top = &cache.steps[self.layers - 1][steps - 1].h;
        for j in 0..h {
            grad[ro + j] = grad[ro + j] + dy * top[j];
        }
        grad[ro + h] = grad[ro + h] + dy;
        // upstream gradient w.r.t. each step's hidden output
        let mut dh_ext: Vec<Vec<T>> = vec![vec![T::zero(); h]; steps];
        for j in 0..h {
            dh_ext[steps - 1][j] = dy * self.params[ro + j];
        }
        for l in (0..self.layers).rev() {
            let lay = self.layout(l);
            let layer = &cache.steps[l];
            let mut dh_next = vec![T::zero(); h];
            let mut dc_next = vec![T::zero(); h];
            let mut dx_all: Vec<Vec<T>> = vec![vec![T::zero(); lay.n_in]; steps];
            for t in (0..steps).rev() {
                let s = &layer[t];
                let dh: Vec<T> = (0..h).map(|j| dh_ext[t][j] + dh_next[j]).collect();
                let mut dz = vec![T::zero(); g * h];
                match self.cell {
                    Cell::Elman => {
                        for j in 0..h {
                            dz[j] = dh[j] * (T::one() - s.h[j] * s.h[j]);
                        }
                    }
                    Cell::Lstm => {
                        let (gi, gf, go, gg) = (&s.gates[..h], &s.gates[h..2 * h], &s.gates[2 * h..3 * h], &s.gates[3 * h..]);
                        for j in 0..h {
                            let tc = s.c[j].tanh();
                            let dc = dc_next[j] + dh[j] * go[j] * (T::one() - tc * tc);
                            let c_prev = if t > 0 { layer[t - 1].c[j] } else { T::zero() };
                            dz[j] = dc * gg[j] * gi[j] * (T::one() - gi[j]);
                            dz[h + j] = dc * c_prev * gf[j] * (T::one() - gf[j]);
                            dz[2 * h + j] = dh[j] * tc * go[j] * (T::one() - go[j]);
                            dz[3 * h + j] = dc * gi[j] * (T::one() - gg[j] * gg[j]);
                            dc_next[j] = dc * gf[j];
                        }
                    }
                }
                let h_prev: &[T] = if t > 0 { &layer[t - 1].h } else { &[] };
                let mut dh_prev = vec![T::zero(); h];
                for (k, &d) in dz.iter().enumerate() {
                    if d == T::zero() {
                        continue;
                    }
                    let wx = lay.wx + k * lay.n_in;
                    for (i, &xv) in s.input.iter().enumerate() {
                        grad[wx + i] = grad[wx + i] + d * xv;
                        dx_all[t][i] = dx_all[t][i] + d * self.params[wx + i];
                    }
                    let wh = lay.wh + k * h;
                    for i in 0..h {
                        if t > 0 {
                            grad[wh + i] = grad[wh + i] + d * h_prev[i];
                        }
                        dh_prev[i] = dh_prev[i] + d * self.params[wh + i];
                    }
                    grad[lay.b + k] = grad[lay.b + k] + d;
                }
                dh_next = dh_prev;
            }
            dh_ext = dx_all;
        }
    }
}
