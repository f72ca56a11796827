use rand::Rng;

use super::data::Sample;

/// A differentiable model with a flat parameter vector.
pub trait Model: Send + Sync {
    fn num_params(&self) -> usize;

    /// Fresh parameters.
    fn init(&self, rng: &mut dyn rand::RngCore) -> Vec<f64>;

    /// Mean loss and its gradient over `batch`.
    fn loss_grad(&self, w: &[f64], batch: &[&Sample]) -> (f64, Vec<f64>);

    /// Mean loss over `batch`.
    fn loss(&self, w: &[f64], batch: &[&Sample]) -> f64 {
        self.loss_grad(w, batch).0
    }

    fn predict(&self, w: &[f64], features: &[f64]) -> usize;
}

/// One hidden tanh layer followed by a softmax output with cross-entropy loss.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub inputs: usize,
    pub hidden: usize,
    pub classes: usize,
}

impl Default for Mlp {
    fn default() -> Self {
        Self {
            inputs: 64,
            hidden: 32,
            classes: 10,
        }
    }
}

struct Layout {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    end: usize,
}

impl Mlp {
    pub fn new(inputs: usize, hidden: usize, classes: usize) -> Self {
        Self {
            inputs,
            hidden,
            classes,
        }
    }

    fn layout(&self) -> Layout {
        let w1 = 0;
        let b1 = w1 + self.hidden * self.inputs;
        let w2 = b1 + self.hidden;
        let b2 = w2 + self.classes * self.hidden;
        Layout {
            w1,
            b1,
            w2,
            b2,
            end: b2 + self.classes,
        }
    }

    fn forward(&self, w: &[f64], x: &[f64], h: &mut [f64], logits: &mut [f64]) {
        let l = self.layout();
        for (j, hj) in h.iter_mut().enumerate() {
            let row = &w[l.w1 + j * self.inputs..l.w1 + (j + 1) * self.inputs];
            let z: f64 = row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + w[l.b1 + j];
            *hj = z.tanh();
        }
        for (c, out) in logits.iter_mut().enumerate() {
            let row = &w[l.w2 + c * self.hidden..l.w2 + (c + 1) * self.hidden];
            *out = row.iter().zip(h.iter()).map(|(a, b)| a * b).sum::<f64>() + w[l.b2 + c];
        }
    }
}

/// Turns logits into probabilities in place and returns `log Σ exp`.
fn softmax(logits: &mut [f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|z| (z - max).exp()).sum();
    let lse = max + sum.ln();
    for z in logits.iter_mut() {
        *z = (*z - lse).exp();
    }
    lse
}

impl Model for Mlp {
    fn num_params(&self) -> usize {
        self.layout().end
    }

    fn init(&self, rng: &mut dyn rand::RngCore) -> Vec<f64> {
        let l = self.layout();
        let mut w = vec![0.0; l.end];
        let a1 = (6.0 / (self.inputs + self.hidden) as f64).sqrt();
        let a2 = (6.0 / (self.hidden + self.classes) as f64).sqrt();
        for v in &mut w[l.w1..l.b1] {
            *v = rng.random_range(-a1..a1);
        }
        for v in &mut w[l.w2..l.b2] {
            *v = rng.random_range(-a2..a2);
        }
        w
    }

    fn loss_grad(&self, w: &[f64], batch: &[&Sample]) -> (f64, Vec<f64>) {
        let l = self.layout();
        let mut grad = vec![0.0; l.end];
        if batch.is_empty() {
            return (0.0, grad);
        }
        let mut h = vec![0.0; self.hidden];
        let mut p = vec![0.0; self.classes];
        let mut dh = vec![0.0; self.hidden];
        let mut loss = 0.0;
        for s in batch {
            self.forward(w, &s.features, &mut h, &mut p);
            let target = p[s.label];
            loss += softmax(&mut p) - target;
            p[s.label] -= 1.0;
            // p now holds dL/dlogits.
            dh.iter_mut().for_each(|v| *v = 0.0);
            for (c, dc) in p.iter().enumerate() {
                let row = l.w2 + c * self.hidden;
                for j in 0..self.hidden {
                    grad[row + j] += dc * h[j];
                    dh[j] += dc * w[row + j];
                }
                grad[l.b2 + c] += dc;
            }
            for j in 0..self.hidden {
                let dz = dh[j] * (1.0 - h[j] * h[j]);
                let row = l.w1 + j * self.inputs;
                for (g, x) in grad[row..row + self.inputs].iter_mut().zip(&s.features) {
                    *g += dz * x;
                }
                grad[l.b1 + j] += dz;
            }
        }
        let n = batch.len() as f64;
        grad.iter_mut().for_each(|g| *g /= n);
        (loss / n, grad)
    }

    fn loss(&self, w: &[f64], batch: &[&Sample]) -> f64 {
        if batch.is_empty() {
            return 0.0;
        }
        let mut h = vec![0.0; self.hidden];
        let mut z = vec![0.0; self.classes];
        let total: f64 = batch
            .iter()
            .map(|s| {
                self.forward(w, &s.features, &mut h, &mut z);
                let target = z[s.label];
                softmax(&mut z) - target
            })
            .sum();
        total / batch.len() as f64
    }

    fn predict(&self, w: &[f64], features: &[f64]) -> usize {
        let mut h = vec![0.0; self.hidden];
        let mut z = vec![0.0; self.classes];
        self.forward(w, features, &mut h, &mut z);
        z.iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (c, v)| {
                if *v > best.1 {
                    (c, *v)
                } else {
                    best
                }
            })
            .0
    }
}

/// `½‖w − w*‖²`, independent of the data.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    pub optimum: Vec<f64>,
}

impl Model for Quadratic {
    fn num_params(&self) -> usize {
        self.optimum.len()
    }

    fn init(&self, _rng: &mut dyn rand::RngCore) -> Vec<f64> {
        vec![0.0; self.optimum.len()]
    }

    fn loss_grad(&self, w: &[f64], _batch: &[&Sample]) -> (f64, Vec<f64>) {
        let grad: Vec<f64> = w.iter().zip(&self.optimum).map(|(a, b)| a - b).collect();
        let loss = 0.5 * grad.iter().map(|g| g * g).sum::<f64>();
        (loss, grad)
    }

    fn predict(&self, _w: &[f64], _features: &[f64]) -> usize {
        0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn samples(n: usize, rng: &mut ChaCha8Rng) -> Vec<Sample> {
        (0..n)
            .map(|i| Sample {
                features: (0..64).map(|_| rng.random::<f64>()).collect(),
                label: i % 10,
            })
            .collect()
    }

    #[test]
    fn parameter_count() {
        assert_eq!(Mlp::default().num_params(), 2410);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let model = Mlp::default();
        let w = model.init(&mut rng);
        let data = samples(5, &mut rng);
        let batch: Vec<&Sample> = data.iter().collect();
        let (loss, grad) = model.loss_grad(&w, &batch);
        assert!((loss - model.loss(&w, &batch)).abs() < 1e-12);
        let step = 1e-5;
        let mut worst: f64 = 0.0;
        for k in (0..w.len()).step_by(7) {
            let mut wp = w.clone();
            wp[k] += step;
            let mut wm = w.clone();
            wm[k] -= step;
            let fd = (model.loss(&wp, &batch) - model.loss(&wm, &batch)) / (2.0 * step);
            let err = (fd - grad[k]).abs() / fd.abs().max(grad[k].abs()).max(1e-3);
            worst = worst.max(err);
        }
        assert!(worst <= 1e-4, "worst relative error {worst}");
    }

    #[test]
    fn quadratic_gradient_is_offset() {
        let q = Quadratic {
            optimum: vec![1.0, -2.0],
        };
        let (loss, g) = q.loss_grad(&[3.0, 0.0], &[]);
        assert_eq!(g, vec![2.0, 2.0]);
        assert_eq!(loss, 4.0);
    }
}
