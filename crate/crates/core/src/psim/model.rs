//! One-hidden-layer ReLU network with softmax cross-entropy.
//!
//! Parameters are four tensors: `w1 [input, hidden]`, `b1 [hidden]`,
//! `w2 [hidden, classes]`, `b2 [classes]`, all row-major.

use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::error::Result;
use crate::tensor::DenseTensor;

use super::data::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MlpShape {
    pub input: usize,
    pub hidden: usize,
    pub classes: usize,
}

impl MlpShape {
    pub fn tensor_dims(&self) -> [Vec<usize>; 4] {
        [
            vec![self.input, self.hidden],
            vec![self.hidden],
            vec![self.hidden, self.classes],
            vec![self.classes],
        ]
    }

    pub fn matches(&self, params: &[DenseTensor]) -> bool {
        params.len() == 4 && params.iter().zip(self.tensor_dims()).all(|(p, d)| p.dims() == d)
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<DenseTensor>> {
        let glorot = |fan_in: usize, fan_out: usize, rng: &mut R| {
            let a = (6.0 / (fan_in + fan_out) as f32).sqrt();
            let dist = Uniform::new_inclusive(-a, a).expect("finite bound");
            (0..fan_in * fan_out).map(|_| dist.sample(rng)).collect::<Vec<f32>>()
        };
        let [d1, d2, d3, d4] = self.tensor_dims();
        Ok(vec![
            DenseTensor::new(d1, glorot(self.input, self.hidden, rng))?,
            DenseTensor::zeros(d2)?,
            DenseTensor::new(d3, glorot(self.hidden, self.classes, rng))?,
            DenseTensor::zeros(d4)?,
        ])
    }

    fn logits(&self, params: &[DenseTensor], x: &[f32], hidden: &mut [f32], out: &mut [f32]) {
        let (w1, b1, w2, b2) = (params[0].data(), params[1].data(), params[2].data(), params[3].data());
        hidden.copy_from_slice(b1);
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let row = &w1[i * self.hidden..(i + 1) * self.hidden];
            for (h, &w) in hidden.iter_mut().zip(row) {
                *h += xi * w;
            }
        }
        for h in hidden.iter_mut() {
            *h = h.max(0.0);
        }
        out.copy_from_slice(b2);
        for (j, &a) in hidden.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            let row = &w2[j * self.classes..(j + 1) * self.classes];
            for (o, &w) in out.iter_mut().zip(row) {
                *o += a * w;
            }
        }
    }

    /// Mean loss over `batch` and the mean gradient per parameter tensor.
    pub fn loss_and_grads(
        &self,
        params: &[DenseTensor],
        data: &Dataset,
        batch: &[usize],
    ) -> (f64, Vec<Vec<f32>>) {
        let (h, c) = (self.hidden, self.classes);
        let w2 = params[2].data();
        let mut grads = vec![
            vec![0.0f32; self.input * h],
            vec![0.0f32; h],
            vec![0.0f32; h * c],
            vec![0.0f32; c],
        ];
        let mut hidden = vec![0.0f32; h];
        let mut probs = vec![0.0f32; c];
        let mut dhidden = vec![0.0f32; h];
        let scale = 1.0 / batch.len() as f32;
        let mut loss = 0.0f64;

        for &idx in batch {
            let x = data.row(idx);
            let label = data.labels[idx];
            self.logits(params, x, &mut hidden, &mut probs);
            let max = probs.iter().copied().fold(f32::NEG_INFINITY, f32::max);
            let mut z = 0.0f32;
            for p in probs.iter_mut() {
                *p = (*p - max).exp();
                z += *p;
            }
            for p in probs.iter_mut() {
                *p /= z;
            }
            loss -= f64::from(probs[label].max(f32::MIN_POSITIVE).ln());

            // dlogits = (softmax - onehot) / batch
            probs[label] -= 1.0;
            for p in probs.iter_mut() {
                *p *= scale;
            }
            for (g, &d) in grads[3].iter_mut().zip(&probs) {
                *g += d;
            }
            for j in 0..h {
                let a = hidden[j];
                let w_row = &w2[j * c..(j + 1) * c];
                let mut back = 0.0f32;
                for k in 0..c {
                    back += w_row[k] * probs[k];
                }
                dhidden[j] = if a > 0.0 { back } else { 0.0 };
                if a != 0.0 {
                    let g_row = &mut grads[2][j * c..(j + 1) * c];
                    for (g, &d) in g_row.iter_mut().zip(&probs) {
                        *g += a * d;
                    }
                }
            }
            for (g, &d) in grads[1].iter_mut().zip(&dhidden) {
                *g += d;
            }
            for (i, &xi) in x.iter().enumerate() {
                let g_row = &mut grads[0][i * h..(i + 1) * h];
                for (g, &d) in g_row.iter_mut().zip(&dhidden) {
                    *g += xi * d;
                }
            }
        }
        (loss / batch.len() as f64, grads)
    }

    pub fn accuracy(&self, params: &[DenseTensor], data: &Dataset) -> f64 {
        let mut hidden = vec![0.0f32; self.hidden];
        let mut out = vec![0.0f32; self.classes];
        let correct = (0..data.len())
            .filter(|&i| {
                self.logits(params, data.row(i), &mut hidden, &mut out);
                let pred = out
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
                    .map(|(k, _)| k)
                    .unwrap_or(0);
                pred == data.labels[i]
            })
            .count();
        correct as f64 / data.len() as f64
    }
}
