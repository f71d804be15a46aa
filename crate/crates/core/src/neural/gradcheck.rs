//! Central finite-difference verification of `backward` in 64-bit.
//!
//! The scalar objective is `L = sum(r * layer(x))` with a seeded random
//! projection `r`, so `dL/dy = r`. Relative error is
//! `|analytic - numeric| / max(|analytic|, |numeric|, REL_FLOOR)`; the floor
//! keeps exact-zero gradients (dead ReLUs, pooled-out inputs) from dividing
//! rounding noise by zero.

use super::layer::{Layer, LayerSpec};
use super::loss::{loss_bce, loss_mse};
use super::tensor::Tensor;
use super::NnError;
use crate::rng::SeededRng;

pub const REL_FLOOR: f64 = 1e-3;
/// Inputs closer than this many step sizes to a ReLU or max-pool kink are resampled.
pub const KINK_MARGIN: f64 = 10.0;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// A small batched input shape suitable for checking `spec`.
pub fn default_check_shape(spec: &LayerSpec) -> Vec<usize> {
    match spec {
        LayerSpec::Conv2d { in_ch, .. } => vec![2, *in_ch, 6, 6],
        LayerSpec::Conv1d { in_ch, .. } => vec![2, *in_ch, 8],
        LayerSpec::MaxPool2d { .. } => vec![2, 2, 6, 6],
        LayerSpec::MaxPool1d { .. } => vec![2, 2, 8],
        LayerSpec::Dense { inputs, .. } => vec![3, *inputs],
        LayerSpec::Relu | LayerSpec::Sigmoid => vec![2, 10],
        LayerSpec::Flatten | LayerSpec::NearestUpsample2d { .. } => vec![2, 2, 3, 3],
        LayerSpec::Reshape { shape } => vec![2, shape.iter().product()],
    }
}

fn random_tensor(shape: &[usize], rng: &mut SeededRng, lo: f64, hi: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.uniform_range(lo, hi)).collect())
        .expect("shape matches data")
}

/// Smallest distance from `x` to a point where the layer is not differentiable.
fn kink_distance(layer: &Layer<f64>, x: &Tensor<f64>) -> f64 {
    match layer.spec() {
        LayerSpec::Relu => x.data().iter().fold(f64::INFINITY, |m, v| m.min(v.abs())),
        LayerSpec::MaxPool2d { k, stride } | LayerSpec::MaxPool1d { k, stride } => {
            let is_2d = matches!(layer.spec(), LayerSpec::MaxPool2d { .. });
            let ins = layer.in_shape();
            let outs = layer.out_shape();
            let (c, h, w) = if is_2d { (ins[0], ins[1], ins[2]) } else { (ins[0], 1, ins[1]) };
            let (oh, ow) = if is_2d { (outs[1], outs[2]) } else { (1, outs[1]) };
            let (kh, sh) = if is_2d { (*k, *stride) } else { (1, 1) };
            let mut best = f64::INFINITY;
            for plane in 0..x.batch() * c {
                let base = plane * h * w;
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut vals: Vec<f64> = Vec::with_capacity(kh * k);
                        for ki in 0..kh {
                            for kj in 0..*k {
                                vals.push(x.data()[base + (oy * sh + ki) * w + ox * stride + kj]);
                            }
                        }
                        vals.sort_by(|a, b| b.total_cmp(a));
                        if vals.len() > 1 {
                            best = best.min(vals[0] - vals[1]);
                        }
                    }
                }
            }
            best
        }
        _ => f64::INFINITY,
    }
}

fn param_slot(layer: &mut Layer<f64>, which: usize, i: usize) -> &mut f64 {
    let p = layer.params_mut().expect("params present");
    let t = if which == 0 { &mut p.weight } else { &mut p.bias };
    &mut t.data_mut()[i]
}

fn objective(layer: &Layer<f64>, x: &Tensor<f64>, r: &Tensor<f64>) -> Result<f64, NnError> {
    let (y, _) = layer.forward(x)?;
    Ok(y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum())
}

/// Max relative error between `backward` and central differences with step
/// `h`, over every input element and every parameter.
pub fn grad_check_with_shape(
    spec: &LayerSpec,
    input_shape: &[usize],
    seed: u64,
    h: f64,
) -> Result<f64, NnError> {
    let mut rng = SeededRng::new(seed);
    let mut layer = Layer::<f64>::build(spec.clone(), &input_shape[1..], rng.next_u64())?;
    if let Some(p) = layer.params_mut() {
        for b in p.bias.data_mut() {
            *b = rng.uniform_range(-0.5, 0.5);
        }
    }
    let (lo, hi) = match spec {
        LayerSpec::Sigmoid => (-3.0, 3.0),
        _ => (-1.0, 1.0),
    };
    let mut x = random_tensor(input_shape, &mut rng, lo, hi);
    let mut tries = 0;
    while kink_distance(&layer, &x) <= KINK_MARGIN * h {
        tries += 1;
        if tries > 1000 {
            return Err(NnError::BadSpec("could not sample away from kinks".into()));
        }
        x = random_tensor(input_shape, &mut rng, lo, hi);
    }

    let (y, cache) = layer.forward(&x)?;
    let r = random_tensor(y.shape(), &mut rng, -1.0, 1.0);
    let dx = layer.backward(&cache, &r)?;
    let analytic_params = layer
        .params()
        .map(|p| (p.grad_weight.clone(), p.grad_bias.clone()));

    let mut worst: f64 = 0.0;
    let mut xp = x.clone();
    for i in 0..x.len() {
        let orig = xp.data()[i];
        xp.data_mut()[i] = orig + h;
        let up = objective(&layer, &xp, &r)?;
        xp.data_mut()[i] = orig - h;
        let down = objective(&layer, &xp, &r)?;
        xp.data_mut()[i] = orig;
        worst = worst.max(relative_error(dx.data()[i], (up - down) / (2.0 * h)));
    }

    if let Some((gw, gb)) = analytic_params {
        for which in 0..2 {
            let analytic = if which == 0 { &gw } else { &gb };
            for i in 0..analytic.len() {
                let orig = *param_slot(&mut layer, which, i);
                *param_slot(&mut layer, which, i) = orig + h;
                let up = objective(&layer, &x, &r)?;
                *param_slot(&mut layer, which, i) = orig - h;
                let down = objective(&layer, &x, &r)?;
                *param_slot(&mut layer, which, i) = orig;
                worst = worst.max(relative_error(analytic.data()[i], (up - down) / (2.0 * h)));
            }
        }
    }
    Ok(worst)
}

/// [`grad_check_with_shape`] on [`default_check_shape`].
pub fn grad_check(spec: &LayerSpec, seed: u64, h: f64) -> Result<f64, NnError> {
    grad_check_with_shape(spec, &default_check_shape(spec), seed, h)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Bce,
    Mse,
}

/// Finite-difference check of a loss gradient with respect to its prediction.
pub fn grad_check_loss(kind: LossKind, n: usize, seed: u64, h: f64) -> Result<f64, NnError> {
    let mut rng = SeededRng::new(seed);
    let (pred, target) = match kind {
        LossKind::Bce => {
            let p = random_tensor(&[n], &mut rng, 0.05, 0.95);
            let y = Tensor::new(
                vec![n],
                (0..n).map(|_| if rng.uniform() < 0.5 { 0.0 } else { 1.0 }).collect(),
            )?;
            (p, y)
        }
        LossKind::Mse => (
            random_tensor(&[n], &mut rng, -1.0, 1.0),
            random_tensor(&[n], &mut rng, -1.0, 1.0),
        ),
    };
    let eval = |p: &Tensor<f64>| match kind {
        LossKind::Bce => loss_bce(p, &target),
        LossKind::Mse => loss_mse(p, &target),
    };
    let (_, grad) = eval(&pred)?;
    let mut worst: f64 = 0.0;
    let mut p = pred.clone();
    for i in 0..n {
        let orig = p.data()[i];
        p.data_mut()[i] = orig + h;
        let up = eval(&p)?.0;
        p.data_mut()[i] = orig - h;
        let down = eval(&p)?.0;
        p.data_mut()[i] = orig;
        worst = worst.max(relative_error(grad.data()[i], (up - down) / (2.0 * h)));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv2d_example() {
        let spec = LayerSpec::Conv2d { in_ch: 2, out_ch: 3, kernel: 3, stride: 1, pad: 1 };
        let err = grad_check_with_shape(&spec, &[1, 2, 6, 6], 1, 1e-5).unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn smooth_layers_are_tight() {
        assert!(grad_check(&LayerSpec::Sigmoid, 2, 1e-5).unwrap() < 1e-6);
        assert!(grad_check(&LayerSpec::Dense { inputs: 5, outputs: 4 }, 3, 1e-5).unwrap() < 1e-6);
    }

    #[test]
    fn losses() {
        assert!(grad_check_loss(LossKind::Bce, 8, 1, 1e-5).unwrap() < 1e-6);
        assert!(grad_check_loss(LossKind::Mse, 8, 1, 1e-5).unwrap() < 1e-6);
    }

    #[test]
    fn detects_a_wrong_gradient() {
        assert!(relative_error(1.0, 1.1) > 0.05);
        assert_eq!(relative_error(0.0, 1e-12), 1e-9);
    }
}
