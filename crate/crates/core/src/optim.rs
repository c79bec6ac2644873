use crate::diffcore::ParamStore;
use crate::error::{Error, Result};

/// Adam with bias correction. Parameters whose name starts with a
/// registered prefix use a scaled learning rate.
#[derive(Clone, Debug)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    groups: Vec<(String, f64)>,
    mean: ParamStore,
    sq: ParamStore,
    steps: u64,
}

impl Adam {
    pub fn new(like: &ParamStore, lr: f64) -> Result<Self> {
        if !(lr > 0.0) {
            return Err(Error::Config(format!("learning rate must be positive, got {lr}")));
        }
        Ok(Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            groups: Vec::new(),
            mean: like.zeros_like(),
            sq: like.zeros_like(),
            steps: 0,
        })
    }

    /// Multiply the learning rate of every parameter under `prefix` by `scale`.
    pub fn with_group(mut self, prefix: &str, scale: f64) -> Result<Self> {
        if !(scale >= 0.0) {
            return Err(Error::Config(format!("learning-rate scale must be non-negative, got {scale}")));
        }
        self.groups.push((prefix.to_string(), scale));
        Ok(self)
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    fn scale_for(&self, name: &str) -> f64 {
        self.groups
            .iter()
            .find(|(p, _)| name.starts_with(p.as_str()))
            .map_or(1.0, |(_, s)| *s)
    }

    pub fn step(&mut self, params: &mut ParamStore, grads: &ParamStore) -> Result<()> {
        if !params.same_layout(grads) || !params.same_layout(&self.sq) {
            return Err(Error::Architecture("gradient layout differs from parameters".into()));
        }
        self.steps += 1;
        let k = self.steps.min(i32::MAX as u64) as i32;
        let c1 = 1.0 - self.beta1.powi(k);
        let c2 = 1.0 - self.beta2.powi(k);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let rates: Vec<f64> = params.names().map(|n| self.lr * self.scale_for(n)).collect();
        let layers = params.iter_mut().zip(grads.iter()).zip(self.mean.iter_mut()).zip(self.sq.iter_mut());
        for (((((_, p), (_, g)), (_, m)), (_, v)), lr) in layers.zip(rates) {
            let cells = p.data_mut().iter_mut().zip(g.data()).zip(m.data_mut()).zip(v.data_mut());
            for (((pv, &gv), mv), vv) in cells {
                *mv = b1 * *mv + (1.0 - b1) * gv;
                *vv = b2 * *vv + (1.0 - b2) * gv * gv;
                *pv -= lr * (*mv / c1) / ((*vv / c2).sqrt() + eps);
            }
        }
        Ok(())
    }
}
