use super::network::Gradients;
use super::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    Adam { beta1: f64, beta2: f64, eps: f64 },
    Sgd,
}

impl Optimizer {
    pub fn adam() -> Self {
        Self::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl std::str::FromStr for Optimizer {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "adam" => Ok(Self::adam()),
            "sgd" => Ok(Self::Sgd),
            other => Err(format!("unknown optimizer `{other}` (adam|sgd)")),
        }
    }
}

impl std::fmt::Display for Optimizer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Adam { .. } => f.write_str("adam"),
            Self::Sgd => f.write_str("sgd"),
        }
    }
}

/// Moments of parameters whose gradient stays zero decay geometrically into
/// the subnormal range, where float arithmetic is very slow; they are zeroed
/// instead (the skipped update is below 1e-290 in size).
fn flush(x: f64) -> f64 {
    if x.is_subnormal() {
        0.0
    } else {
        x
    }
}

/// Optimizer together with its per-parameter moment buffers.
pub struct OptimizerState {
    kind: Optimizer,
    lr: f64,
    step: u64,
    m: Gradients,
    v: Gradients,
}

impl OptimizerState {
    pub fn new(kind: Optimizer, lr: f64, shape_like: &Gradients) -> Self {
        let zeros = || -> Gradients {
            shape_like
                .iter()
                .map(|l| l.iter().map(|t| Tensor::zeros(t.shape())).collect())
                .collect()
        };
        let (m, v) = match kind {
            Optimizer::Adam { .. } => (zeros(), zeros()),
            Optimizer::Sgd => (Vec::new(), Vec::new()),
        };
        Self { kind, lr, step: 0, m, v }
    }

    /// Applies one update in place.
    pub fn apply<'a>(&mut self, params: impl Iterator<Item = &'a mut Vec<Tensor>>, grads: &Gradients) {
        self.step += 1;
        match self.kind {
            Optimizer::Sgd => {
                for (layer, g) in params.zip(grads) {
                    for (p, gt) in layer.iter_mut().zip(g) {
                        for (pv, gv) in p.data_mut().iter_mut().zip(gt.data()) {
                            *pv -= self.lr * gv;
                        }
                    }
                }
            }
            Optimizer::Adam { beta1, beta2, eps } => {
                let t = self.step as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for (li, layer) in params.enumerate() {
                    for (pi, p) in layer.iter_mut().enumerate() {
                        let g = grads[li][pi].data();
                        let m = self.m[li][pi].data_mut();
                        let v = self.v[li][pi].data_mut();
                        for (j, pv) in p.data_mut().iter_mut().enumerate() {
                            m[j] = flush(beta1 * m[j] + (1.0 - beta1) * g[j]);
                            v[j] = flush(beta2 * v[j] + (1.0 - beta2) * g[j] * g[j]);
                            let mhat = m[j] / c1;
                            let vhat = v[j] / c2;
                            *pv -= self.lr * mhat / (vhat.sqrt() + eps);
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_adam_step_moves_by_lr() {
        // With bias correction the first step is lr * g / (|g| + eps).
        let mut params = vec![vec![Tensor::from_vec(&[2], vec![1.0, -1.0])]];
        let grads = vec![vec![Tensor::from_vec(&[2], vec![0.5, -4.0])]];
        let mut st = OptimizerState::new(Optimizer::adam(), 0.1, &grads);
        st.apply(params.iter_mut(), &grads);
        let p = params[0][0].data();
        assert!((p[0] - 0.9).abs() < 1e-7);
        assert!((p[1] - -0.9).abs() < 1e-7);
    }

    #[test]
    fn sgd_step() {
        let mut params = vec![vec![Tensor::from_vec(&[1], vec![1.0])]];
        let grads = vec![vec![Tensor::from_vec(&[1], vec![2.0])]];
        let mut st = OptimizerState::new(Optimizer::Sgd, 0.25, &grads);
        st.apply(params.iter_mut(), &grads);
        assert_eq!(params[0][0].data(), &[0.5]);
    }
}
