use super::{ModelConfig, ModelError, Variant};
use crate::neural::{LayerSpec, Network, NnError, Optimizer, Tape, Tensor};
use crate::rng::stage_seed;

fn infer_shape(input: &[usize], specs: &[LayerSpec]) -> Result<Vec<usize>, ModelError> {
    let mut shape = input.to_vec();
    for s in specs {
        shape = s.output_shape(&shape)?;
    }
    Ok(shape)
}

/// `blocks` x `[Conv3x3, ReLU, Conv3x3, ReLU, MaxPool2x2]` with channel
/// widths `base, 2 base, 4 base, ...`, then `Flatten`.
pub fn conv_tower(in_channels: usize, blocks: usize, base_width: usize) -> Vec<LayerSpec> {
    let mut specs = Vec::with_capacity(blocks * 5 + 1);
    let mut c = in_channels;
    for b in 0..blocks {
        let w = base_width << b;
        specs.extend([
            LayerSpec::Conv2d { in_ch: c, out_ch: w, kernel: 3, stride: 1, pad: 1 },
            LayerSpec::Relu,
            LayerSpec::Conv2d { in_ch: w, out_ch: w, kernel: 3, stride: 1, pad: 1 },
            LayerSpec::Relu,
            LayerSpec::MaxPool2d { k: 2, stride: 2 },
        ]);
        c = w;
    }
    specs.push(LayerSpec::Flatten);
    specs
}

/// Conv tower, then `Dense(hidden) -> ReLU -> Dense(1) -> Sigmoid`.
pub fn mini_cnn_layers(cfg: &ModelConfig) -> Result<Vec<LayerSpec>, ModelError> {
    let mut specs = conv_tower(cfg.history_shape[0], cfg.blocks, cfg.base_width);
    let features = infer_shape(&cfg.history_shape, &specs)?[0];
    specs.extend([
        LayerSpec::Dense { inputs: features, outputs: cfg.hidden_dim },
        LayerSpec::Relu,
        LayerSpec::Dense { inputs: cfg.hidden_dim, outputs: 1 },
        LayerSpec::Sigmoid,
    ]);
    Ok(specs)
}

/// `ceil(blocks / 2)` x `[Conv1d k3, ReLU, Conv1d k3, ReLU, MaxPool1d 2]`
/// over `[latent_dim, seq_len]`, then `Flatten -> Dense(1) -> Sigmoid`.
pub fn cnn1d_layers(cfg: &ModelConfig) -> Result<Vec<LayerSpec>, ModelError> {
    let mut specs = Vec::new();
    let mut c = cfg.latent_dim;
    for b in 0..cfg.cnn1d_blocks() {
        let w = cfg.base_width << b;
        specs.extend([
            LayerSpec::Conv1d { in_ch: c, out_ch: w, kernel: 3, stride: 1, pad: 1 },
            LayerSpec::Relu,
            LayerSpec::Conv1d { in_ch: w, out_ch: w, kernel: 3, stride: 1, pad: 1 },
            LayerSpec::Relu,
            LayerSpec::MaxPool1d { k: 2, stride: 2 },
        ]);
        c = w;
    }
    specs.push(LayerSpec::Flatten);
    let features = infer_shape(&[cfg.latent_dim, cfg.seq_len], &specs)?[0];
    specs.extend([LayerSpec::Dense { inputs: features, outputs: 1 }, LayerSpec::Sigmoid]);
    Ok(specs)
}

/// Encoder `[Conv3x3, ReLU, MaxPool2x2]` blocks then `Flatten -> Dense(latent)`;
/// decoder `Dense -> ReLU -> Reshape` then mirrored `[Upsample x2, Conv3x3]`
/// blocks ending in a 3-channel `Sigmoid`.
pub fn cae_layers(cfg: &ModelConfig) -> Result<(Vec<LayerSpec>, Vec<LayerSpec>), ModelError> {
    if cfg.cae_blocks == 0 {
        return Err(ModelError::BadConfig("cae_blocks must be >= 1".into()));
    }
    let widths: Vec<usize> = (0..cfg.cae_blocks).map(|b| cfg.cae_base_width << b).collect();
    let mut encoder = Vec::new();
    let mut c = cfg.subchart_shape[0];
    for &w in &widths {
        encoder.extend([
            LayerSpec::Conv2d { in_ch: c, out_ch: w, kernel: 3, stride: 1, pad: 1 },
            LayerSpec::Relu,
            LayerSpec::MaxPool2d { k: 2, stride: 2 },
        ]);
        c = w;
    }
    let bottleneck = infer_shape(&cfg.subchart_shape, &encoder)?;
    let flat: usize = bottleneck.iter().product();
    encoder.extend([
        LayerSpec::Flatten,
        LayerSpec::Dense { inputs: flat, outputs: cfg.latent_dim },
    ]);

    let mut decoder = vec![
        LayerSpec::Dense { inputs: cfg.latent_dim, outputs: flat },
        LayerSpec::Relu,
        LayerSpec::Reshape { shape: bottleneck },
    ];
    for b in (0..widths.len()).rev() {
        let out = if b == 0 { cfg.subchart_shape[0] } else { widths[b - 1] };
        decoder.extend([
            LayerSpec::NearestUpsample2d { factor: 2 },
            LayerSpec::Conv2d { in_ch: widths[b], out_ch: out, kernel: 3, stride: 1, pad: 1 },
            if b == 0 { LayerSpec::Sigmoid } else { LayerSpec::Relu },
        ]);
    }
    let restored = infer_shape(&[cfg.latent_dim], &decoder)?;
    if restored != cfg.subchart_shape {
        return Err(ModelError::BadConfig(format!(
            "decoder restores {restored:?}, expected {:?}; sub-chart height and width must be divisible by 2^cae_blocks",
            cfg.subchart_shape
        )));
    }
    Ok((encoder, decoder))
}

/// Inputs for one batch: the history images (or latent sequences) and, for
/// the two-stream model, the pattern crops.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub primary: Tensor<f32>,
    pub secondary: Option<Tensor<f32>>,
}

/// History tower and pattern tower whose flattened features are concatenated
/// and classified by a dense head.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoStream {
    pub history: Network,
    pub pattern: Network,
    pub head: Network,
}

impl TwoStream {
    /// Width of the history tower's features (the first block of head inputs).
    pub fn history_features(&self) -> usize {
        self.history.output_shape()[0]
    }

    fn fuse(&self, inputs: &Inputs) -> Result<(Tensor<f32>, Tape, Tape), ModelError> {
        let pattern_in = inputs.secondary.as_ref().ok_or_else(|| {
            NnError::ShapeMismatch("two-stream model needs pattern images".into())
        })?;
        let (fh, th) = self.history.forward(&inputs.primary)?;
        let (fp, tp) = self.pattern.forward(pattern_in)?;
        Ok((concat_rows(&fh, &fp)?, th, tp))
    }
}

fn concat_rows(a: &Tensor<f32>, b: &Tensor<f32>) -> Result<Tensor<f32>, NnError> {
    let n = a.batch();
    if b.batch() != n {
        return Err(NnError::ShapeMismatch(format!(
            "stream batches differ: {} vs {}",
            n,
            b.batch()
        )));
    }
    let (fa, fb) = (a.sample_shape()[0], b.sample_shape()[0]);
    let mut data = Vec::with_capacity(n * (fa + fb));
    for i in 0..n {
        data.extend_from_slice(&a.data()[i * fa..(i + 1) * fa]);
        data.extend_from_slice(&b.data()[i * fb..(i + 1) * fb]);
    }
    Tensor::new(vec![n, fa + fb], data)
}

fn split_rows(g: &Tensor<f32>, first: usize) -> Result<(Tensor<f32>, Tensor<f32>), NnError> {
    let n = g.batch();
    let f = g.sample_shape()[0];
    let mut a = Vec::with_capacity(n * first);
    let mut b = Vec::with_capacity(n * (f - first));
    for row in g.data().chunks_exact(f) {
        a.extend_from_slice(&row[..first]);
        b.extend_from_slice(&row[first..]);
    }
    Ok((Tensor::new(vec![n, first], a)?, Tensor::new(vec![n, f - first], b)?))
}

pub enum ClassifierTape {
    Single(Tape),
    Two { history: Tape, pattern: Tape, head: Tape },
}

/// A strength classifier ending in a single sigmoid unit.
#[derive(Debug, Clone, PartialEq)]
pub enum Classifier {
    MiniCnn(Network),
    TwoStream(TwoStream),
    Cnn1d(Network),
}

impl Classifier {
    pub fn build(cfg: &ModelConfig) -> Result<Self, ModelError> {
        match cfg.variant {
            Variant::MiniCnn => Ok(Classifier::MiniCnn(Network::build(
                &cfg.history_shape,
                &mini_cnn_layers(cfg)?,
                stage_seed(cfg.seed, "minicnn"),
            )?)),
            Variant::TwoStream => {
                let history = Network::build(
                    &cfg.history_shape,
                    &conv_tower(cfg.history_shape[0], cfg.blocks, cfg.base_width),
                    stage_seed(cfg.seed, "history"),
                )?;
                let pattern = Network::build(
                    &cfg.pattern_shape,
                    &conv_tower(cfg.pattern_shape[0], cfg.blocks, cfg.base_width),
                    stage_seed(cfg.seed, "pattern"),
                )?;
                let fused = history.output_shape()[0] + pattern.output_shape()[0];
                let head = Network::build(
                    &[fused],
                    &[
                        LayerSpec::Dense { inputs: fused, outputs: cfg.fusion_dim },
                        LayerSpec::Relu,
                        LayerSpec::Dense { inputs: cfg.fusion_dim, outputs: 1 },
                        LayerSpec::Sigmoid,
                    ],
                    stage_seed(cfg.seed, "head"),
                )?;
                Ok(Classifier::TwoStream(TwoStream { history, pattern, head }))
            }
            Variant::Cnn1d => Ok(Classifier::Cnn1d(Network::build(
                &[cfg.latent_dim, cfg.seq_len],
                &cnn1d_layers(cfg)?,
                stage_seed(cfg.seed, "cnn1d"),
            )?)),
            Variant::Cae => Err(ModelError::WrongVariant(Variant::Cae)),
        }
    }

    pub fn needs_pattern(&self) -> bool {
        matches!(self, Classifier::TwoStream(_))
    }

    fn networks(&self) -> Vec<&Network> {
        match self {
            Classifier::MiniCnn(n) | Classifier::Cnn1d(n) => vec![n],
            Classifier::TwoStream(t) => vec![&t.history, &t.pattern, &t.head],
        }
    }

    fn networks_mut(&mut self) -> Vec<&mut Network> {
        match self {
            Classifier::MiniCnn(n) | Classifier::Cnn1d(n) => vec![n],
            Classifier::TwoStream(t) => vec![&mut t.history, &mut t.pattern, &mut t.head],
        }
    }

    pub fn param_count(&self) -> usize {
        self.networks().iter().map(|n| n.param_count()).sum()
    }

    /// Probabilities `[N, 1]` and the tape for [`backward`](Self::backward).
    pub fn forward(&self, inputs: &Inputs) -> Result<(Tensor<f32>, ClassifierTape), ModelError> {
        match self {
            Classifier::MiniCnn(n) | Classifier::Cnn1d(n) => {
                let (y, tape) = n.forward(&inputs.primary)?;
                Ok((y, ClassifierTape::Single(tape)))
            }
            Classifier::TwoStream(t) => {
                let (fused, history, pattern) = t.fuse(inputs)?;
                let (y, head) = t.head.forward(&fused)?;
                Ok((y, ClassifierTape::Two { history, pattern, head }))
            }
        }
    }

    /// Pre-sigmoid outputs `[N, 1]`.
    pub fn logits(&self, inputs: &Inputs) -> Result<Tensor<f32>, ModelError> {
        match self {
            Classifier::MiniCnn(n) | Classifier::Cnn1d(n) => {
                Ok(n.infer_prefix(&inputs.primary, n.layers().len() - 1)?)
            }
            Classifier::TwoStream(t) => {
                let (fused, _, _) = t.fuse(inputs)?;
                Ok(t.head.infer_prefix(&fused, t.head.layers().len() - 1)?)
            }
        }
    }

    /// Probability of the positive (strong) class per sample.
    pub fn predict(&self, inputs: &Inputs) -> Result<Vec<f64>, ModelError> {
        let (y, _) = self.forward(inputs)?;
        Ok(y.data().iter().map(|&p| f64::from(p)).collect())
    }

    pub fn backward(&mut self, tape: &ClassifierTape, grad: &Tensor<f32>) -> Result<(), ModelError> {
        match (self, tape) {
            (Classifier::MiniCnn(n) | Classifier::Cnn1d(n), ClassifierTape::Single(tape)) => {
                n.backward(tape, grad)?;
            }
            (Classifier::TwoStream(t), ClassifierTape::Two { history, pattern, head }) => {
                let g = t.head.backward(head, grad)?;
                let (gh, gp) = split_rows(&g, t.history_features())?;
                t.history.backward(history, &gh)?;
                t.pattern.backward(pattern, &gp)?;
            }
            _ => return Err(NnError::StaleCache("Classifier").into()),
        }
        Ok(())
    }

    pub fn step(&mut self, opt: &Optimizer, t: u64) -> Result<(), ModelError> {
        for n in self.networks_mut() {
            n.step(opt, t)?;
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        for n in self.networks_mut() {
            n.zero_grad();
        }
    }

    /// Layer parameters of every sub-network, in order.
    pub fn export_params(&self) -> Vec<Vec<Tensor<f32>>> {
        self.networks()
            .iter()
            .flat_map(|n| n.export_params())
            .collect()
    }

    pub fn import_params(&mut self, layers: &[Vec<Tensor<f32>>]) -> Result<(), ModelError> {
        let total: usize = self.networks().iter().map(|n| n.layers().len()).sum();
        if total != layers.len() {
            return Err(NnError::ShapeMismatch(format!(
                "checkpoint has {} layers, model has {total}",
                layers.len()
            ))
            .into());
        }
        let mut offset = 0;
        for n in self.networks_mut() {
            let k = n.layers().len();
            n.import_params(&layers[offset..offset + k])?;
            offset += k;
        }
        Ok(())
    }
}

/// Convolutional autoencoder over RGB sub-charts.
#[derive(Debug, Clone, PartialEq)]
pub struct Autoencoder {
    pub encoder: Network,
    pub decoder: Network,
}

impl Autoencoder {
    pub fn build(cfg: &ModelConfig) -> Result<Self, ModelError> {
        let (enc, dec) = cae_layers(cfg)?;
        Ok(Self {
            encoder: Network::build(&cfg.subchart_shape, &enc, stage_seed(cfg.seed, "encoder"))?,
            decoder: Network::build(&[cfg.latent_dim], &dec, stage_seed(cfg.seed, "decoder"))?,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder.output_shape()[0]
    }

    pub fn encode(&self, images: &Tensor<f32>) -> Result<Tensor<f32>, ModelError> {
        Ok(self.encoder.infer(images)?)
    }

    pub fn reconstruct(&self, images: &Tensor<f32>) -> Result<Tensor<f32>, ModelError> {
        Ok(self.decoder.infer(&self.encoder.infer(images)?)?)
    }

    pub fn forward(&self, images: &Tensor<f32>) -> Result<(Tensor<f32>, Tape, Tape), ModelError> {
        let (z, te) = self.encoder.forward(images)?;
        let (y, td) = self.decoder.forward(&z)?;
        Ok((y, te, td))
    }

    pub fn backward(&mut self, enc: &Tape, dec: &Tape, grad: &Tensor<f32>) -> Result<(), ModelError> {
        let gz = self.decoder.backward(dec, grad)?;
        self.encoder.backward(enc, &gz)?;
        Ok(())
    }

    pub fn step(&mut self, opt: &Optimizer, t: u64) -> Result<(), ModelError> {
        self.encoder.step(opt, t)?;
        self.decoder.step(opt, t)?;
        Ok(())
    }

    pub fn export_params(&self) -> Vec<Vec<Tensor<f32>>> {
        let mut out = self.encoder.export_params();
        out.extend(self.decoder.export_params());
        out
    }

    pub fn import_params(&mut self, layers: &[Vec<Tensor<f32>>]) -> Result<(), ModelError> {
        let k = self.encoder.layers().len();
        if layers.len() != k + self.decoder.layers().len() {
            return Err(NnError::ShapeMismatch(format!(
                "checkpoint has {} layers, autoencoder has {}",
                layers.len(),
                k + self.decoder.layers().len()
            ))
            .into());
        }
        self.encoder.import_params(&layers[..k])?;
        self.decoder.import_params(&layers[k..])?;
        Ok(())
    }
}
