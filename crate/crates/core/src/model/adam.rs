use super::checkpoint::Checkpoint;
use super::params::ModelParams;
use crate::Result;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

impl Checkpoint {
    /// One bias-corrected Adam update in place; increments `step`.
    pub fn apply_adam(&mut self, grads: &ModelParams<f32>) -> Result<()> {
        self.params.check_same_shape(grads)?;
        let t = (self.step + 1) as i32;
        let lr = self.config.learning_rate;
        // lr * m_hat / (sqrt(v_hat) + eps) with both corrections folded in
        let c1 = 1.0 - ADAM_BETA1.powi(t);
        let c2 = 1.0 - ADAM_BETA2.powi(t);
        let (b1, b2) = (ADAM_BETA1 as f32, ADAM_BETA2 as f32);
        let (lr, c1, c2, eps) = (lr as f32, c1 as f32, c2 as f32, ADAM_EPSILON as f32);
        let params = self.params.tensors_mut();
        let m = self.first_moment.tensors_mut();
        let v = self.second_moment.tensors_mut();
        for ((((_, p), (_, m)), (_, v)), (_, g)) in params.into_iter().zip(m).zip(v).zip(grads.tensors()) {
            let it = p.data_mut().iter_mut().zip(m.data_mut()).zip(v.data_mut()).zip(g.data());
            for (((p, m), v), &g) in it {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        self.step += 1;
        Ok(())
    }
}

/// Functional form of [`Checkpoint::apply_adam`].
pub fn adam_step(checkpoint: &Checkpoint, grads: &ModelParams<f32>) -> Result<Checkpoint> {
    let mut next = checkpoint.clone();
    next.apply_adam(grads)?;
    Ok(next)
}
