use crate::error::Result;
use crate::seqmodel::ModelParams;

/// Adam with bias correction. Moment estimates share the parameter layout.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: ModelParams,
    v: ModelParams,
    t: i32,
}

impl Adam {
    pub fn new(params: &ModelParams, learning_rate: f64, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        Adam {
            learning_rate,
            beta1,
            beta2,
            epsilon,
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    pub fn step(&mut self, params: &mut ModelParams, grad: &ModelParams) -> Result<()> {
        self.t += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        let lr = self.learning_rate;
        let eps = self.epsilon;
        let g = grad.blocks();
        let mut p = params.blocks_mut();
        let mut m = self.m.blocks_mut();
        let mut v = self.v.blocks_mut();
        if g.len() != p.len() {
            return Err(crate::Error::Shape("gradient and parameters differ in layout".into()));
        }
        for (((pb, gb), mb), vb) in p.iter_mut().zip(&g).zip(m.iter_mut()).zip(v.iter_mut()) {
            if pb.1.shape() != gb.1.shape() {
                return Err(crate::Error::Shape(format!("gradient block {}", gb.0)));
            }
            for (((x, &gi), mi), vi) in
                pb.1.data
                    .iter_mut()
                    .zip(&gb.1.data)
                    .zip(mb.1.data.iter_mut())
                    .zip(vb.1.data.iter_mut())
            {
                *mi = b1 * *mi + (1.0 - b1) * gi;
                *vi = b2 * *vi + (1.0 - b2) * gi * gi;
                *x -= lr * (*mi / c1) / ((*vi / c2).sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Rescales `grad` to norm `max_norm` when it is larger. Returns the norm
/// before clipping.
pub fn clip_global_norm(grad: &mut ModelParams, max_norm: f64) -> f64 {
    let norm = grad.global_norm();
    if norm > max_norm {
        let scale = max_norm / norm;
        for (_, m) in grad.blocks_mut() {
            m.data.iter_mut().for_each(|x| *x *= scale);
        }
    }
    norm
}
