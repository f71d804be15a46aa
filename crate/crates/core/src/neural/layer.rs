use serde::{Deserialize, Serialize};

use super::tensor::{Scalar, Tensor};
use super::NnError;
use crate::rng::SeededRng;

/// Layer description. Per-sample shapes are `[C, H, W]` for 2-D layers,
/// `[C, L]` for 1-D layers and `[F]` for dense layers; the batch dimension is
/// implicit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerSpec {
    Conv2d {
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    },
    Conv1d {
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    },
    MaxPool2d {
        k: usize,
        stride: usize,
    },
    MaxPool1d {
        k: usize,
        stride: usize,
    },
    Dense {
        inputs: usize,
        outputs: usize,
    },
    Relu,
    Sigmoid,
    Flatten,
    Reshape {
        shape: Vec<usize>,
    },
    NearestUpsample2d {
        factor: usize,
    },
}

/// `floor((input + 2 * pad - kernel) / stride) + 1`, rejecting empty outputs.
pub fn conv_output_len(
    input: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
) -> Result<usize, NnError> {
    if kernel == 0 || stride == 0 {
        return Err(NnError::InvalidShape(
            "kernel and stride must be >= 1".into(),
        ));
    }
    let padded = input + 2 * pad;
    if padded < kernel {
        return Err(NnError::InvalidShape(format!(
            "kernel {kernel} larger than padded input {padded}: output would be empty"
        )));
    }
    Ok((padded - kernel) / stride + 1)
}

impl LayerSpec {
    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::Conv2d { .. } => "Conv2d",
            LayerSpec::Conv1d { .. } => "Conv1d",
            LayerSpec::MaxPool2d { .. } => "MaxPool2d",
            LayerSpec::MaxPool1d { .. } => "MaxPool1d",
            LayerSpec::Dense { .. } => "Dense",
            LayerSpec::Relu => "Relu",
            LayerSpec::Sigmoid => "Sigmoid",
            LayerSpec::Flatten => "Flatten",
            LayerSpec::Reshape { .. } => "Reshape",
            LayerSpec::NearestUpsample2d { .. } => "NearestUpsample2d",
        }
    }

    pub fn has_params(&self) -> bool {
        matches!(
            self,
            LayerSpec::Conv2d { .. } | LayerSpec::Conv1d { .. } | LayerSpec::Dense { .. }
        )
    }

    /// `(weight shape, bias shape, fan_in)` for parameterised layers.
    pub fn param_shapes(&self) -> Option<(Vec<usize>, Vec<usize>, usize)> {
        match *self {
            LayerSpec::Conv2d {
                in_ch,
                out_ch,
                kernel,
                ..
            } => Some((
                vec![out_ch, in_ch, kernel, kernel],
                vec![out_ch],
                in_ch * kernel * kernel,
            )),
            LayerSpec::Conv1d {
                in_ch,
                out_ch,
                kernel,
                ..
            } => Some((vec![out_ch, in_ch, kernel], vec![out_ch], in_ch * kernel)),
            LayerSpec::Dense { inputs, outputs } => {
                Some((vec![outputs, inputs], vec![outputs], inputs))
            }
            _ => None,
        }
    }

    /// Per-sample output shape, or `InvalidShape` when the input does not fit
    /// or any spatial dimension would be empty.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>, NnError> {
        let bad = |what: &str| {
            Err(NnError::InvalidShape(format!(
                "{} expects {what}, got {input:?}",
                self.name()
            )))
        };
        match *self {
            LayerSpec::Conv2d {
                in_ch,
                out_ch,
                kernel,
                stride,
                pad,
            } => {
                let &[c, h, w] = input else { return bad("[C, H, W]") };
                if c != in_ch || in_ch == 0 || out_ch == 0 {
                    return bad(&format!("{in_ch} input channels"));
                }
                Ok(vec![
                    out_ch,
                    conv_output_len(h, kernel, stride, pad)?,
                    conv_output_len(w, kernel, stride, pad)?,
                ])
            }
            LayerSpec::Conv1d {
                in_ch,
                out_ch,
                kernel,
                stride,
                pad,
            } => {
                let &[c, l] = input else { return bad("[C, L]") };
                if c != in_ch || in_ch == 0 || out_ch == 0 {
                    return bad(&format!("{in_ch} input channels"));
                }
                Ok(vec![out_ch, conv_output_len(l, kernel, stride, pad)?])
            }
            LayerSpec::MaxPool2d { k, stride } => {
                let &[c, h, w] = input else { return bad("[C, H, W]") };
                Ok(vec![
                    c,
                    conv_output_len(h, k, stride, 0)?,
                    conv_output_len(w, k, stride, 0)?,
                ])
            }
            LayerSpec::MaxPool1d { k, stride } => {
                let &[c, l] = input else { return bad("[C, L]") };
                Ok(vec![c, conv_output_len(l, k, stride, 0)?])
            }
            LayerSpec::Dense { inputs, outputs } => {
                if input != [inputs] || outputs == 0 {
                    return bad(&format!("[{inputs}]"));
                }
                Ok(vec![outputs])
            }
            LayerSpec::Relu | LayerSpec::Sigmoid => Ok(input.to_vec()),
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
            LayerSpec::Reshape { ref shape } => {
                if shape.iter().product::<usize>() != input.iter().product::<usize>() {
                    return bad(&format!("{} elements", shape.iter().product::<usize>()));
                }
                Ok(shape.clone())
            }
            LayerSpec::NearestUpsample2d { factor } => {
                let &[c, h, w] = input else { return bad("[C, H, W]") };
                if factor == 0 {
                    return bad("factor >= 1");
                }
                Ok(vec![c, h * factor, w * factor])
            }
        }
    }
}

/// Weights, biases, their gradient accumulators and Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<T = f32> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    pub grad_weight: Tensor<T>,
    pub grad_bias: Tensor<T>,
    pub(crate) m_weight: Tensor<T>,
    pub(crate) v_weight: Tensor<T>,
    pub(crate) m_bias: Tensor<T>,
    pub(crate) v_bias: Tensor<T>,
    pub(crate) has_grad: bool,
    /// Bumped by every optimizer step; caches from older versions are stale.
    pub(crate) version: u64,
}

impl<T: Scalar> Params<T> {
    pub fn zeros(weight_shape: Vec<usize>, bias_shape: Vec<usize>) -> Self {
        let w = Tensor::zeros(weight_shape);
        let b = Tensor::zeros(bias_shape);
        Self {
            grad_weight: w.clone(),
            grad_bias: b.clone(),
            m_weight: w.clone(),
            v_weight: w.clone(),
            m_bias: b.clone(),
            v_bias: b.clone(),
            weight: w,
            bias: b,
            has_grad: false,
            version: 0,
        }
    }

    pub fn has_grad(&self) -> bool {
        self.has_grad
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn zero_grad(&mut self) {
        self.grad_weight.fill(T::zero());
        self.grad_bias.fill(T::zero());
        self.has_grad = false;
    }

    pub fn count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    /// Marks parameters as externally modified so outstanding caches go stale.
    pub fn touch(&mut self) {
        self.version += 1;
    }
}

/// He-uniform initialisation: weights `~ U(-b, b)` with `b = sqrt(6 / fan_in)`
/// drawn in row-major order from a stream seeded by `seed`; biases zero.
/// Returns `None` for layers without parameters.
pub fn init_params<T: Scalar>(spec: &LayerSpec, seed: u64) -> Result<Option<Params<T>>, NnError> {
    let Some((ws, bs, fan_in)) = spec.param_shapes() else {
        return Ok(None);
    };
    if fan_in == 0 || ws.contains(&0) {
        return Err(NnError::BadSpec(format!("{spec:?} has an empty dimension")));
    }
    let bound = (6.0 / fan_in as f64).sqrt();
    let mut rng = SeededRng::new(seed);
    let mut p = Params::zeros(ws, bs);
    for w in p.weight.data_mut() {
        *w = T::lit(rng.uniform_range(-bound, bound));
    }
    Ok(Some(p))
}

#[derive(Debug, Clone)]
enum CacheData<T> {
    Input(Tensor<T>),
    Output(Tensor<T>),
    Argmax {
        indices: Vec<usize>,
        in_shape: Vec<usize>,
    },
    InShape(Vec<usize>),
}

/// What `backward` needs from the matching `forward` call.
#[derive(Debug, Clone)]
pub struct Cache<T = f32> {
    layer: &'static str,
    version: u64,
    data: CacheData<T>,
}

#[derive(Debug, Clone, Copy)]
struct ConvGeom {
    c_in: usize,
    h: usize,
    w: usize,
    c_out: usize,
    kh: usize,
    kw: usize,
    sh: usize,
    sw: usize,
    ph: usize,
    pw: usize,
    oh: usize,
    ow: usize,
}

impl ConvGeom {
    fn cols(&self) -> usize {
        self.c_in * self.kh * self.kw
    }

    fn positions(&self) -> usize {
        self.oh * self.ow
    }

    fn in_len(&self) -> usize {
        self.c_in * self.h * self.w
    }

    fn out_len(&self) -> usize {
        self.c_out * self.positions()
    }
}

fn im2col<T: Scalar>(x: &[T], g: &ConvGeom, col: &mut [T]) {
    let p = g.positions();
    for ci in 0..g.c_in {
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (ci * g.kh + ki) * g.kw + kj;
                let dst = &mut col[row * p..(row + 1) * p];
                for oy in 0..g.oh {
                    let iy = (oy * g.sh + ki) as isize - g.ph as isize;
                    for ox in 0..g.ow {
                        let ix = (ox * g.sw + kj) as isize - g.pw as isize;
                        dst[oy * g.ow + ox] = if iy >= 0
                            && (iy as usize) < g.h
                            && ix >= 0
                            && (ix as usize) < g.w
                        {
                            x[(ci * g.h + iy as usize) * g.w + ix as usize]
                        } else {
                            T::zero()
                        };
                    }
                }
            }
        }
    }
}

fn col2im<T: Scalar>(col: &[T], g: &ConvGeom, dx: &mut [T]) {
    let p = g.positions();
    for ci in 0..g.c_in {
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (ci * g.kh + ki) * g.kw + kj;
                let src = &col[row * p..(row + 1) * p];
                for oy in 0..g.oh {
                    let iy = (oy * g.sh + ki) as isize - g.ph as isize;
                    if iy < 0 || iy as usize >= g.h {
                        continue;
                    }
                    for ox in 0..g.ow {
                        let ix = (ox * g.sw + kj) as isize - g.pw as isize;
                        if ix >= 0 && (ix as usize) < g.w {
                            dx[(ci * g.h + iy as usize) * g.w + ix as usize] += src[oy * g.ow + ox];
                        }
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct PoolGeom {
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    sh: usize,
    sw: usize,
    oh: usize,
    ow: usize,
}

/// A layer spec bound to its input shape and (for conv/dense) parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T = f32> {
    spec: LayerSpec,
    in_shape: Vec<usize>,
    out_shape: Vec<usize>,
    params: Option<Params<T>>,
}

impl<T: Scalar> Layer<T> {
    pub fn build(spec: LayerSpec, in_shape: &[usize], seed: u64) -> Result<Self, NnError> {
        let out_shape = spec.output_shape(in_shape)?;
        let params = init_params(&spec, seed)?;
        Ok(Self {
            spec,
            in_shape: in_shape.to_vec(),
            out_shape,
            params,
        })
    }

    pub fn spec(&self) -> &LayerSpec {
        &self.spec
    }

    pub fn in_shape(&self) -> &[usize] {
        &self.in_shape
    }

    pub fn out_shape(&self) -> &[usize] {
        &self.out_shape
    }

    pub fn params(&self) -> Option<&Params<T>> {
        self.params.as_ref()
    }

    pub fn params_mut(&mut self) -> Option<&mut Params<T>> {
        self.params.as_mut()
    }

    fn version(&self) -> u64 {
        self.params.as_ref().map_or(0, |p| p.version)
    }

    fn conv_geom(&self) -> ConvGeom {
        match self.spec {
            LayerSpec::Conv2d {
                in_ch,
                out_ch,
                kernel,
                stride,
                pad,
            } => ConvGeom {
                c_in: in_ch,
                h: self.in_shape[1],
                w: self.in_shape[2],
                c_out: out_ch,
                kh: kernel,
                kw: kernel,
                sh: stride,
                sw: stride,
                ph: pad,
                pw: pad,
                oh: self.out_shape[1],
                ow: self.out_shape[2],
            },
            LayerSpec::Conv1d {
                in_ch,
                out_ch,
                kernel,
                stride,
                pad,
            } => ConvGeom {
                c_in: in_ch,
                h: 1,
                w: self.in_shape[1],
                c_out: out_ch,
                kh: 1,
                kw: kernel,
                sh: 1,
                sw: stride,
                ph: 0,
                pw: pad,
                oh: 1,
                ow: self.out_shape[1],
            },
            _ => unreachable!("not a convolution"),
        }
    }

    fn pool_geom(&self) -> PoolGeom {
        match self.spec {
            LayerSpec::MaxPool2d { k, stride } => PoolGeom {
                c: self.in_shape[0],
                h: self.in_shape[1],
                w: self.in_shape[2],
                kh: k,
                kw: k,
                sh: stride,
                sw: stride,
                oh: self.out_shape[1],
                ow: self.out_shape[2],
            },
            LayerSpec::MaxPool1d { k, stride } => PoolGeom {
                c: self.in_shape[0],
                h: 1,
                w: self.in_shape[1],
                kh: 1,
                kw: k,
                sh: 1,
                sw: stride,
                oh: 1,
                ow: self.out_shape[1],
            },
            _ => unreachable!("not a pooling layer"),
        }
    }

    fn check_input(&self, input: &Tensor<T>) -> Result<usize, NnError> {
        if input.shape().is_empty() || input.sample_shape() != self.in_shape.as_slice() {
            return Err(NnError::ShapeMismatch(format!(
                "{} expects [N, {:?}], got {:?}",
                self.spec.name(),
                self.in_shape,
                input.shape()
            )));
        }
        Ok(input.batch())
    }

    fn out_tensor_shape(&self, n: usize) -> Vec<usize> {
        let mut s = vec![n];
        s.extend_from_slice(&self.out_shape);
        s
    }

    /// Computes the layer output and the cache for [`backward`](Self::backward).
    pub fn forward(&self, input: &Tensor<T>) -> Result<(Tensor<T>, Cache<T>), NnError> {
        let n = self.check_input(input)?;
        let out_shape = self.out_tensor_shape(n);
        let (out, data) = match &self.spec {
            LayerSpec::Conv2d { .. } | LayerSpec::Conv1d { .. } => {
                let g = self.conv_geom();
                let p = self.params.as_ref().expect("conv has params");
                let mut out = Tensor::zeros(out_shape);
                let mut col = vec![T::zero(); g.cols() * g.positions()];
                for s in 0..n {
                    let x = &input.data()[s * g.in_len()..(s + 1) * g.in_len()];
                    im2col(x, &g, &mut col);
                    let y = &mut out.data_mut()[s * g.out_len()..(s + 1) * g.out_len()];
                    T::gemm(
                        g.c_out,
                        g.cols(),
                        g.positions(),
                        p.weight.data(),
                        false,
                        &col,
                        false,
                        T::zero(),
                        y,
                    );
                    for (co, row) in y.chunks_exact_mut(g.positions()).enumerate() {
                        let b = p.bias.data()[co];
                        row.iter_mut().for_each(|v| *v += b);
                    }
                }
                (out, CacheData::Input(input.clone()))
            }
            LayerSpec::MaxPool2d { .. } | LayerSpec::MaxPool1d { .. } => {
                let g = self.pool_geom();
                let mut out = Tensor::zeros(out_shape);
                let mut indices = Vec::with_capacity(out.len());
                let x = input.data();
                let y = out.data_mut();
                let mut o = 0;
                for s in 0..n {
                    for c in 0..g.c {
                        let base = (s * g.c + c) * g.h * g.w;
                        for oy in 0..g.oh {
                            for ox in 0..g.ow {
                                let mut best = base + oy * g.sh * g.w + ox * g.sw;
                                for ki in 0..g.kh {
                                    for kj in 0..g.kw {
                                        let idx = base + (oy * g.sh + ki) * g.w + ox * g.sw + kj;
                                        // Strict comparison keeps the first maximum.
                                        if x[idx] > x[best] {
                                            best = idx;
                                        }
                                    }
                                }
                                y[o] = x[best];
                                indices.push(best);
                                o += 1;
                            }
                        }
                    }
                }
                (
                    out,
                    CacheData::Argmax {
                        indices,
                        in_shape: input.shape().to_vec(),
                    },
                )
            }
            LayerSpec::Dense { inputs, outputs } => {
                let p = self.params.as_ref().expect("dense has params");
                let mut out = Tensor::zeros(out_shape);
                T::gemm(
                    n,
                    *inputs,
                    *outputs,
                    input.data(),
                    false,
                    p.weight.data(),
                    true,
                    T::zero(),
                    out.data_mut(),
                );
                for row in out.data_mut().chunks_exact_mut(*outputs) {
                    for (v, &b) in row.iter_mut().zip(p.bias.data()) {
                        *v += b;
                    }
                }
                (out, CacheData::Input(input.clone()))
            }
            LayerSpec::Relu => {
                let data = input
                    .data()
                    .iter()
                    .map(|&x| if x > T::zero() { x } else { T::zero() })
                    .collect();
                (Tensor::new(out_shape, data)?, CacheData::Input(input.clone()))
            }
            LayerSpec::Sigmoid => {
                let hi = T::one() - T::epsilon();
                let lo = T::min_positive_value();
                let data = input
                    .data()
                    .iter()
                    .map(|&x| {
                        let s = if x >= T::zero() {
                            T::one() / (T::one() + (-x).exp())
                        } else {
                            let e = x.exp();
                            e / (T::one() + e)
                        };
                        s.max(lo).min(hi)
                    })
                    .collect();
                let out = Tensor::new(out_shape, data)?;
                (out.clone(), CacheData::Output(out))
            }
            LayerSpec::Flatten | LayerSpec::Reshape { .. } => (
                input.clone().reshape(out_shape)?,
                CacheData::InShape(input.shape().to_vec()),
            ),
            LayerSpec::NearestUpsample2d { factor } => {
                let f = *factor;
                let (c, h, w) = (self.in_shape[0], self.in_shape[1], self.in_shape[2]);
                let mut out = Tensor::zeros(out_shape);
                let x = input.data();
                let y = out.data_mut();
                let (oh, ow) = (h * f, w * f);
                for plane in 0..n * c {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            y[(plane * oh + oy) * ow + ox] = x[(plane * h + oy / f) * w + ox / f];
                        }
                    }
                }
                (out, CacheData::InShape(input.shape().to_vec()))
            }
        };
        if !out.all_finite() {
            return Err(NnError::NonFinite(self.spec.name()));
        }
        Ok((
            out,
            Cache {
                layer: self.spec.name(),
                version: self.version(),
                data,
            },
        ))
    }

    /// Returns the gradient with respect to the input and accumulates
    /// parameter gradients.
    pub fn backward(&mut self, cache: &Cache<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        if cache.layer != self.spec.name() || cache.version != self.version() {
            return Err(NnError::StaleCache(self.spec.name()));
        }
        let n = grad_out.batch();
        if grad_out.sample_shape() != self.out_shape.as_slice() {
            return Err(NnError::ShapeMismatch(format!(
                "{} grad_out expected [N, {:?}], got {:?}",
                self.spec.name(),
                self.out_shape,
                grad_out.shape()
            )));
        }
        let mut in_shape = vec![n];
        in_shape.extend_from_slice(&self.in_shape);
        let stale = || NnError::StaleCache(self.spec.name());

        let grad_in = match (&self.spec, &cache.data) {
            (LayerSpec::Conv2d { .. } | LayerSpec::Conv1d { .. }, CacheData::Input(x)) => {
                if x.batch() != n {
                    return Err(stale());
                }
                let g = self.conv_geom();
                let p = self.params.as_mut().expect("conv has params");
                let mut dx = Tensor::zeros(in_shape);
                let mut col = vec![T::zero(); g.cols() * g.positions()];
                let mut dcol = vec![T::zero(); g.cols() * g.positions()];
                for s in 0..n {
                    let xs = &x.data()[s * g.in_len()..(s + 1) * g.in_len()];
                    let dy = &grad_out.data()[s * g.out_len()..(s + 1) * g.out_len()];
                    im2col(xs, &g, &mut col);
                    T::gemm(
                        g.c_out,
                        g.positions(),
                        g.cols(),
                        dy,
                        false,
                        &col,
                        true,
                        T::one(),
                        p.grad_weight.data_mut(),
                    );
                    for (co, row) in dy.chunks_exact(g.positions()).enumerate() {
                        p.grad_bias.data_mut()[co] += row.iter().fold(T::zero(), |a, &v| a + v);
                    }
                    T::gemm(
                        g.cols(),
                        g.c_out,
                        g.positions(),
                        p.weight.data(),
                        true,
                        dy,
                        false,
                        T::zero(),
                        &mut dcol,
                    );
                    col2im(
                        &dcol,
                        &g,
                        &mut dx.data_mut()[s * g.in_len()..(s + 1) * g.in_len()],
                    );
                }
                p.has_grad = true;
                dx
            }
            (
                LayerSpec::MaxPool2d { .. } | LayerSpec::MaxPool1d { .. },
                CacheData::Argmax {
                    indices,
                    in_shape: cached,
                },
            ) => {
                if *cached != in_shape || indices.len() != grad_out.len() {
                    return Err(stale());
                }
                let mut dx = Tensor::zeros(in_shape);
                for (&idx, &g) in indices.iter().zip(grad_out.data()) {
                    dx.data_mut()[idx] += g;
                }
                dx
            }
            (LayerSpec::Dense { inputs, outputs }, CacheData::Input(x)) => {
                if x.batch() != n {
                    return Err(stale());
                }
                let p = self.params.as_mut().expect("dense has params");
                T::gemm(
                    *outputs,
                    n,
                    *inputs,
                    grad_out.data(),
                    true,
                    x.data(),
                    false,
                    T::one(),
                    p.grad_weight.data_mut(),
                );
                for row in grad_out.data().chunks_exact(*outputs) {
                    for (gb, &g) in p.grad_bias.data_mut().iter_mut().zip(row) {
                        *gb += g;
                    }
                }
                let mut dx = Tensor::zeros(in_shape);
                T::gemm(
                    n,
                    *outputs,
                    *inputs,
                    grad_out.data(),
                    false,
                    p.weight.data(),
                    false,
                    T::zero(),
                    dx.data_mut(),
                );
                p.has_grad = true;
                dx
            }
            (LayerSpec::Relu, CacheData::Input(x)) => {
                if x.len() != grad_out.len() {
                    return Err(stale());
                }
                let data = x
                    .data()
                    .iter()
                    .zip(grad_out.data())
                    .map(|(&x, &g)| if x > T::zero() { g } else { T::zero() })
                    .collect();
                Tensor::new(in_shape, data)?
            }
            (LayerSpec::Sigmoid, CacheData::Output(y)) => {
                if y.len() != grad_out.len() {
                    return Err(stale());
                }
                let data = y
                    .data()
                    .iter()
                    .zip(grad_out.data())
                    .map(|(&s, &g)| g * s * (T::one() - s))
                    .collect();
                Tensor::new(in_shape, data)?
            }
            (LayerSpec::Flatten | LayerSpec::Reshape { .. }, CacheData::InShape(s)) => {
                if *s != in_shape {
                    return Err(stale());
                }
                grad_out.clone().reshape(in_shape)?
            }
            (LayerSpec::NearestUpsample2d { factor }, CacheData::InShape(s)) => {
                if *s != in_shape {
                    return Err(stale());
                }
                let f = *factor;
                let (c, h, w) = (self.in_shape[0], self.in_shape[1], self.in_shape[2]);
                let (oh, ow) = (h * f, w * f);
                let mut dx = Tensor::zeros(in_shape);
                let dy = grad_out.data();
                let d = dx.data_mut();
                for plane in 0..n * c {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            d[(plane * h + oy / f) * w + ox / f] += dy[(plane * oh + oy) * ow + ox];
                        }
                    }
                }
                dx
            }
            _ => return Err(stale()),
        };
        Ok(grad_in)
    }
}
