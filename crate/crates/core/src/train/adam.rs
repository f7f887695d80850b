use crate::error::{Error, Result};
use crate::graph::Gradients;
use crate::params::ParameterSet;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Adam with bias correction, no weight decay.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam<T> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Steps taken.
    pub t: u64,
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(params: &ParameterSet<T>, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        let zeros = || params.iter().map(|(_, p)| Tensor::zeros(p.tensor.shape())).collect();
        Adam {
            lr,
            beta1,
            beta2,
            eps,
            t: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    /// One update. Parameters without a gradient are left untouched.
    pub fn step(&mut self, params: &mut ParameterSet<T>, grads: &Gradients<T>) -> Result<()> {
        if grads.len() != self.m.len() || params.len() != self.m.len() {
            return Err(Error::Shape(format!(
                "optimizer tracks {} tensors, got {} parameters and {} gradients",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        self.t += 1;
        let b1 = T::from_f64_lossy(self.beta1);
        let b2 = T::from_f64_lossy(self.beta2);
        let c1 = T::one() - b1;
        let c2 = T::one() - b2;
        let bc1 = 1.0 - self.beta1.powf(self.t as f64);
        let bc2 = 1.0 - self.beta2.powf(self.t as f64);
        let step = T::from_f64_lossy(self.lr / bc1);
        let inv_bc2 = T::from_f64_lossy(1.0 / bc2);
        let eps = T::from_f64_lossy(self.eps);
        let ids: Vec<_> = params.ids().collect();
        for (k, id) in ids.into_iter().enumerate() {
            let Some(g) = grads.param(id) else { continue };
            let p = params.get_mut(id);
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for (((pv, &gv), mv), vv) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mv = b1 * *mv + c1 * gv;
                *vv = b2 * *vv + c2 * gv * gv;
                *pv -= step * *mv / ((*vv * inv_bc2).sqrt() + eps);
            }
        }
        Ok(())
    }
}
