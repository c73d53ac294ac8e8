//! Non-centered RMSProp with global gradient-norm clipping.

use super::NetError;

/// Update rule, per parameter, after clipping the whole gradient vector to
/// `clip_norm`:
///
/// ```text
/// sq    <- decay * sq + (1 - decay) * g^2
/// param <- param - lr * g / sqrt(sq + eps)
/// ```
///
/// The epsilon sits inside the square root.
#[derive(Debug, Clone)]
pub struct RmsProp {
    lr: f64,
    decay: f64,
    eps: f64,
    clip_norm: f64,
    sq: Vec<f64>,
}

impl RmsProp {
    pub fn new(n_params: usize, lr: f64, decay: f64, eps: f64, clip_norm: f64) -> Result<Self, NetError> {
        let bad = |msg: String| Err(NetError::BadOptimizer { msg });
        if !(lr.is_finite() && lr > 0.0) {
            return bad(format!("learning rate {lr}"));
        }
        if !(0.0..1.0).contains(&decay) {
            return bad(format!("decay {decay} outside [0, 1)"));
        }
        if !(eps.is_finite() && eps > 0.0) {
            return bad(format!("epsilon {eps}"));
        }
        if !(clip_norm.is_finite() && clip_norm > 0.0) {
            return bad(format!("clip norm {clip_norm}"));
        }
        Ok(RmsProp { lr, decay, eps, clip_norm, sq: vec![0.0; n_params] })
    }

    /// Applies one update in place. A non-finite gradient aborts the update
    /// before anything (parameters or accumulator) is touched.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<(), NetError> {
        assert_eq!(params.len(), self.sq.len(), "parameter count changed under the optimizer");
        assert_eq!(grads.len(), self.sq.len(), "gradient length mismatch");
        let sq_norm: f64 = grads.iter().map(|g| g * g).sum();
        if !sq_norm.is_finite() {
            return Err(NetError::NonFiniteGradient);
        }
        let norm = sq_norm.sqrt();
        let scale = if norm > self.clip_norm { self.clip_norm / norm } else { 1.0 };
        for i in 0..params.len() {
            let g = grads[i] * scale;
            self.sq[i] = self.decay * self.sq[i] + (1.0 - self.decay) * g * g;
            params[i] -= self.lr * g / (self.sq[i] + self.eps).sqrt();
        }
        Ok(())
    }

    /// Squared-gradient accumulator, exposed for inspection in tests.
    pub fn accumulator(&self) -> &[f64] {
        &self.sq
    }
}
