//! Dense feed-forward network over a flat parameter vector.
//!
//! Layout per layer: weights row-major (`out × in`), then biases. Hidden
//! layers use `tanh`; the output layer is linear.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "head")]
pub enum Head {
    /// Softmax cross-entropy over `k` classes.
    Softmax { k: usize },
    /// Squared loss on a scalar output, clipped to `[lo, hi]` at prediction time.
    Regression { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub head: Head,
}

impl Architecture {
    pub fn output_dim(&self) -> usize {
        match self.head {
            Head::Softmax { k } => k,
            Head::Regression { .. } => 1,
        }
    }

    /// Layer widths including input and output.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden.len() + 2);
        w.push(self.input_dim);
        w.extend_from_slice(&self.hidden);
        w.push(self.output_dim());
        w
    }

    pub fn n_params(&self) -> usize {
        self.widths().windows(2).map(|w| w[1] * w[0] + w[1]).sum()
    }

    pub fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() == self.input_dim {
            Ok(())
        } else {
            Err(Error::Dimension {
                expected: self.input_dim,
                got: x.len(),
            })
        }
    }

    /// Activations of every layer; the last entry holds the raw outputs.
    pub fn forward(&self, params: &[f64], x: &[f64]) -> Vec<Vec<f64>> {
        let widths = self.widths();
        let n_layers = widths.len() - 1;
        let mut acts = Vec::with_capacity(widths.len());
        acts.push(x.to_vec());
        let mut off = 0;
        for l in 0..n_layers {
            let (n_in, n_out) = (widths[l], widths[l + 1]);
            let w = &params[off..off + n_in * n_out];
            let b = &params[off + n_in * n_out..off + n_in * n_out + n_out];
            off += n_in * n_out + n_out;
            let prev = &acts[l];
            let mut z: Vec<f64> = (0..n_out)
                .map(|o| b[o] + w[o * n_in..(o + 1) * n_in].iter().zip(prev).map(|(a, c)| a * c).sum::<f64>())
                .collect();
            if l + 1 < n_layers {
                z.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(z);
        }
        acts
    }

    pub fn raw_output(&self, params: &[f64], x: &[f64]) -> Vec<f64> {
        self.forward(params, x).pop().expect("output layer")
    }

    /// Mean loss over the batch and its gradient with respect to `params`.
    pub fn loss_and_grad(&self, params: &[f64], xs: &[&[f64]], ys: &[f64]) -> (f64, Vec<f64>) {
        let widths = self.widths();
        let n_layers = widths.len() - 1;
        let mut grad = vec![0.0; params.len()];
        let mut loss = 0.0;
        let offsets: Vec<usize> = widths
            .windows(2)
            .scan(0, |off, w| {
                let o = *off;
                *off += w[0] * w[1] + w[1];
                Some(o)
            })
            .collect();
        for (x, &y) in xs.iter().zip(ys) {
            let acts = self.forward(params, x);
            let out = &acts[n_layers];
            let (l, mut delta) = output_loss(self.head, out, y);
            loss += l;
            for layer in (0..n_layers).rev() {
                let (n_in, n_out) = (widths[layer], widths[layer + 1]);
                let off = offsets[layer];
                let prev = &acts[layer];
                for o in 0..n_out {
                    let d = delta[o];
                    let row = &mut grad[off + o * n_in..off + (o + 1) * n_in];
                    row.iter_mut().zip(prev).for_each(|(g, a)| *g += d * a);
                    grad[off + n_in * n_out + o] += d;
                }
                if layer > 0 {
                    let w = &params[off..off + n_in * n_out];
                    delta = (0..n_in)
                        .map(|i| {
                            let back: f64 = (0..n_out).map(|o| w[o * n_in + i] * delta[o]).sum();
                            back * (1.0 - prev[i] * prev[i])
                        })
                        .collect();
                }
            }
        }
        let scale = 1.0 / xs.len() as f64;
        grad.iter_mut().for_each(|g| *g *= scale);
        (loss * scale, grad)
    }
}

/// Loss at one output and its derivative with respect to the raw outputs.
fn output_loss(head: Head, out: &[f64], y: f64) -> (f64, Vec<f64>) {
    match head {
        Head::Softmax { .. } => {
            let m = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = out.iter().map(|v| (v - m).exp()).collect();
            let z: f64 = exps.iter().sum();
            let label = y as usize;
            let loss = z.ln() + m - out[label];
            let delta = exps
                .iter()
                .enumerate()
                .map(|(i, e)| e / z - if i == label { 1.0 } else { 0.0 })
                .collect();
            (loss, delta)
        }
        Head::Regression { .. } => {
            let r = out[0] - y;
            (0.5 * r * r, vec![r])
        }
    }
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}
