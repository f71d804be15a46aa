use serde::{Deserialize, Serialize};

use super::{
    Autoencoder, Classifier, ClassifierDataset, ClassifierSample, DcpDataset, ModelConfig,
    ModelError, SplitSizes, TrainConfig, Variant,
};
use crate::metrics::{evaluate, EvalReport};
use crate::neural::{loss_bce, loss_mse, stack, Optimizer, Tensor, BCE_EPS};
use crate::rng::{stage_seed, SeededRng};

const EVAL_CHUNK: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    pub val_f1: f64,
    pub val_auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Epoch 0 is the untrained model.
    pub history: Vec<EpochRecord>,
    pub test: EvalReport,
    pub split: SplitSizes,
}

fn predict(model: &Classifier, ds: &ClassifierDataset, idx: &[usize]) -> Result<Vec<f64>, ModelError> {
    let mut out = Vec::with_capacity(idx.len());
    for chunk in idx.chunks(EVAL_CHUNK) {
        out.extend(model.predict(&ds.inputs(chunk)?)?);
    }
    Ok(out)
}

fn mean_bce(probs: &[f64], labels: &[bool]) -> f64 {
    let total: f64 = probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
            if y {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    total / probs.len().max(1) as f64
}

/// Metrics and mean BCE of `model` on the samples `idx`.
pub fn evaluate_classifier(
    model: &Classifier,
    ds: &ClassifierDataset,
    idx: &[usize],
    threshold: f64,
) -> Result<(EvalReport, f64), ModelError> {
    let probs = predict(model, ds, idx)?;
    let labels = ds.labels(idx);
    Ok((evaluate(&probs, &labels, threshold)?, mean_bce(&probs, &labels)))
}

/// Minibatch training with BCE. Each epoch reshuffles the training partition
/// with a seed derived from `cfg.seed` and the epoch number.
pub fn train(
    model: &mut Classifier,
    ds: &ClassifierDataset,
    cfg: &TrainConfig,
) -> Result<TrainReport, ModelError> {
    cfg.validate()?;
    if model.needs_pattern() && ds.secondary_shape.is_none() {
        return Err(ModelError::BadConfig("two-stream model needs pattern images".into()));
    }
    let split = ds.split(&cfg.split, cfg.seed)?;
    let opt = cfg.optimizer();
    let mut history = Vec::with_capacity(cfg.epochs + 1);
    let record = |model: &Classifier, epoch: usize, train_loss: f64| -> Result<EpochRecord, ModelError> {
        let (val, val_loss) = evaluate_classifier(model, ds, &split.val, cfg.threshold)?;
        Ok(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            val_accuracy: val.accuracy,
            val_f1: val.f1,
            val_auc: val.auc,
        })
    };
    let (_, initial_loss) = evaluate_classifier(model, ds, &split.train, cfg.threshold)?;
    history.push(record(model, 0, initial_loss)?);

    let mut step = 0u64;
    for epoch in 1..=cfg.epochs {
        let mut order = split.train.clone();
        SeededRng::new(stage_seed(cfg.seed, &format!("epoch:{epoch}"))).shuffle(&mut order);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let inputs = ds.inputs(batch)?;
            let (prob, tape) = model.forward(&inputs)?;
            let (loss, grad) = loss_bce(&prob, &ds.targets(batch))?;
            if !loss.is_finite() {
                return Err(crate::neural::NnError::NonFinite("training loss").into());
            }
            model.backward(&tape, &grad)?;
            step += 1;
            model.step(&opt, step)?;
            loss_sum += f64::from(loss) * batch.len() as f64;
        }
        history.push(record(model, epoch, loss_sum / order.len() as f64)?);
    }
    let (test, _) = evaluate_classifier(model, ds, &split.test, cfg.threshold)?;
    Ok(TrainReport {
        history,
        test,
        split: split.sizes(),
    })
}

/// Autoencoder settings for the decomposition pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DcpConfig {
    pub cae_epochs: usize,
    pub cae_batch: usize,
    pub cae_lr: f64,
    /// Upper bound on the sub-charts used to fit the autoencoder; a seeded
    /// subsample is drawn when the training partition has more.
    pub max_cae_images: usize,
}

impl Default for DcpConfig {
    fn default() -> Self {
        Self {
            cae_epochs: 10,
            cae_batch: 32,
            cae_lr: 1e-3,
            max_cae_images: 2048,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DcpOutcome {
    pub cae: Autoencoder,
    pub classifier: Classifier,
    /// Mean reconstruction MSE over the fitting set after each epoch; index 0
    /// is the untrained autoencoder.
    pub cae_mse: Vec<f64>,
    /// `[N, latent_dim, seq_len]`.
    pub latent_shape: [usize; 3],
    pub report: TrainReport,
}

fn reconstruction_mse(cae: &Autoencoder, images: &Tensor<f32>) -> Result<f64, ModelError> {
    let mut total = 0.0;
    for start in (0..images.batch()).step_by(EVAL_CHUNK) {
        let rows: Vec<usize> = (start..(start + EVAL_CHUNK).min(images.batch())).collect();
        let x = images.select_batch(&rows);
        let (loss, _) = loss_mse(&cae.reconstruct(&x)?, &x)?;
        total += f64::from(loss) * rows.len() as f64;
    }
    Ok(total / images.batch() as f64)
}

/// Fits the autoencoder on training-partition sub-charts, encodes every
/// sample into a `[latent_dim, seq_len]` sequence and trains the 1-D CNN on
/// those sequences using the same split.
pub fn train_dcp(
    ds: &DcpDataset,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    dcp: &DcpConfig,
) -> Result<DcpOutcome, ModelError> {
    train_cfg.validate()?;
    if dcp.cae_batch == 0 || dcp.max_cae_images == 0 || !(dcp.cae_lr.is_finite() && dcp.cae_lr > 0.0) {
        return Err(ModelError::BadConfig("autoencoder batch, lr and image cap must be positive".into()));
    }
    if ds.subchart_shape != model_cfg.subchart_shape {
        return Err(ModelError::BadConfig(format!(
            "dataset sub-charts are {:?}, model expects {:?}",
            ds.subchart_shape, model_cfg.subchart_shape
        )));
    }
    if let Some(s) = ds.samples.iter().find(|s| s.subcharts.len() != model_cfg.seq_len) {
        return Err(ModelError::BadConfig(format!(
            "sample has {} sub-charts, model expects {}",
            s.subcharts.len(),
            model_cfg.seq_len
        )));
    }
    let split = ds.split(&train_cfg.split, train_cfg.seed)?;

    let mut pool: Vec<&[f32]> = split
        .train
        .iter()
        .flat_map(|&i| ds.samples[i].subcharts.iter().map(Vec::as_slice))
        .collect();
    if pool.len() > dcp.max_cae_images {
        SeededRng::new(stage_seed(train_cfg.seed, "cae-subsample")).shuffle(&mut pool);
        pool.truncate(dcp.max_cae_images);
    }
    let images = stack(&ds.subchart_shape, &pool)?;

    let mut cae = Autoencoder::build(&ModelConfig {
        variant: Variant::Cae,
        ..model_cfg.clone()
    })?;
    let opt = Optimizer::adam(dcp.cae_lr);
    let mut cae_mse = vec![reconstruction_mse(&cae, &images)?];
    let mut step = 0u64;
    for epoch in 1..=dcp.cae_epochs {
        let mut order: Vec<usize> = (0..images.batch()).collect();
        SeededRng::new(stage_seed(train_cfg.seed, &format!("cae-epoch:{epoch}"))).shuffle(&mut order);
        for batch in order.chunks(dcp.cae_batch) {
            let x = images.select_batch(batch);
            let (y, te, td) = cae.forward(&x)?;
            let (_, grad) = loss_mse(&y, &x)?;
            cae.backward(&te, &td, &grad)?;
            step += 1;
            cae.step(&opt, step)?;
        }
        cae_mse.push(reconstruction_mse(&cae, &images)?);
    }

    let latent = cae.latent_dim();
    let seq = model_cfg.seq_len;
    let mut samples = Vec::with_capacity(ds.len());
    for s in &ds.samples {
        let rows: Vec<&[f32]> = s.subcharts.iter().map(Vec::as_slice).collect();
        let z = cae.encode(&stack(&ds.subchart_shape, &rows)?)?;
        let mut seq_major = vec![0.0f32; latent * seq];
        for (t, zt) in z.data().chunks_exact(latent).enumerate() {
            for (c, &v) in zt.iter().enumerate() {
                seq_major[c * seq + t] = v;
            }
        }
        samples.push(ClassifierSample {
            primary: seq_major,
            secondary: None,
            label: s.label,
            member: s.member.clone(),
            order: s.order,
        });
    }
    let latents = ClassifierDataset {
        primary_shape: vec![latent, seq],
        secondary_shape: None,
        samples,
    };
    let mut classifier = Classifier::build(&ModelConfig {
        variant: Variant::Cnn1d,
        ..model_cfg.clone()
    })?;
    let report = train(&mut classifier, &latents, train_cfg)?;
    Ok(DcpOutcome {
        cae,
        classifier,
        cae_mse,
        latent_shape: [latents.len(), latent, seq],
        report,
    })
}
