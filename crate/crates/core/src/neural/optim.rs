use serde::{Deserialize, Serialize};

use super::layer::Params;
use super::tensor::Scalar;
use super::NnError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Optimizer {
    Sgd { lr: f64 },
    Adam { lr: f64, beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adam(lr: f64) -> Self {
        Optimizer::Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// `t` is the 1-based step count (used by Adam's bias correction).
    pub fn step<T: Scalar>(&self, params: &mut Params<T>, t: u64) -> Result<(), NnError> {
        match *self {
            Optimizer::Sgd { lr } => sgd_step(params, lr),
            Optimizer::Adam {
                lr,
                beta1,
                beta2,
                eps,
            } => adam_step(params, lr, beta1, beta2, eps, t),
        }
    }
}

fn finish<T: Scalar>(params: &mut Params<T>) {
    params.zero_grad();
    params.version += 1;
}

/// `w -= lr * g`, then gradients are zeroed.
pub fn sgd_step<T: Scalar>(params: &mut Params<T>, lr: f64) -> Result<(), NnError> {
    if !params.has_grad {
        return Err(NnError::NoGradient);
    }
    let lr = T::lit(lr);
    for (w, &g) in params
        .weight
        .data_mut()
        .iter_mut()
        .zip(params.grad_weight.data())
    {
        *w = *w - lr * g;
    }
    for (b, &g) in params.bias.data_mut().iter_mut().zip(params.grad_bias.data()) {
        *b = *b - lr * g;
    }
    finish(params);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn adam_update<T: Scalar>(
    w: &mut [T],
    g: &[T],
    m: &mut [T],
    v: &mut [T],
    lr: T,
    b1: T,
    b2: T,
    eps: T,
    c1: T,
    c2: T,
) {
    let one = T::one();
    for i in 0..w.len() {
        m[i] = b1 * m[i] + (one - b1) * g[i];
        v[i] = b2 * v[i] + (one - b2) * g[i] * g[i];
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        w[i] = w[i] - lr * m_hat / (v_hat.sqrt() + eps);
    }
}

/// Adam with bias correction `1 - beta^t`; gradients are zeroed afterwards.
pub fn adam_step<T: Scalar>(
    params: &mut Params<T>,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
) -> Result<(), NnError> {
    if !params.has_grad {
        return Err(NnError::NoGradient);
    }
    let t = t.max(1) as i32;
    let c1 = T::lit(1.0 - beta1.powi(t));
    let c2 = T::lit(1.0 - beta2.powi(t));
    let (lr, b1, b2, eps) = (T::lit(lr), T::lit(beta1), T::lit(beta2), T::lit(eps));
    let p = &mut *params;
    adam_update(
        p.weight.data_mut(),
        p.grad_weight.data(),
        p.m_weight.data_mut(),
        p.v_weight.data_mut(),
        lr,
        b1,
        b2,
        eps,
        c1,
        c2,
    );
    adam_update(
        p.bias.data_mut(),
        p.grad_bias.data(),
        p.m_bias.data_mut(),
        p.v_bias.data_mut(),
        lr,
        b1,
        b2,
        eps,
        c1,
        c2,
    );
    finish(params);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_params(w: f64, g: f64) -> Params<f64> {
        let mut p = Params::zeros(vec![1], vec![1]);
        p.weight.data_mut()[0] = w;
        p.grad_weight.data_mut()[0] = g;
        p.has_grad = true;
        p
    }

    #[test]
    fn sgd_one_step() {
        let mut p = scalar_params(1.0, 0.5);
        sgd_step(&mut p, 0.1).unwrap();
        assert!((p.weight.data()[0] - 0.95).abs() < 1e-15);
        assert_eq!(p.grad_weight.data()[0], 0.0);
        assert!(!p.has_grad());
    }

    #[test]
    fn zero_gradient_leaves_params() {
        for opt in [Optimizer::Sgd { lr: 0.1 }, Optimizer::adam(0.01)] {
            let mut p = scalar_params(1.0, 0.0);
            p.bias.data_mut()[0] = 0.25;
            opt.step(&mut p, 1).unwrap();
            assert_eq!(p.weight.data()[0], 1.0);
            assert_eq!(p.bias.data()[0], 0.25);
        }
    }

    #[test]
    fn adam_first_step_is_lr() {
        let mut p = scalar_params(0.0, 1.0);
        adam_step(&mut p, 0.001, 0.9, 0.999, 1e-8, 1).unwrap();
        assert!((p.weight.data()[0] + 0.001).abs() < 1e-6);
    }

    #[test]
    fn missing_gradient_errors() {
        let mut p: Params<f64> = Params::zeros(vec![1], vec![1]);
        assert_eq!(sgd_step(&mut p, 0.1), Err(NnError::NoGradient));
        assert_eq!(adam_step(&mut p, 0.1, 0.9, 0.999, 1e-8, 1), Err(NnError::NoGradient));
    }
}
