use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::augment::{augment, TrainSample};
use super::checkpoint::Checkpoint;
use super::config::TrainConfig;
use super::loss::keypoint_loss;
use super::optim::{adamw_step, AdamW, OptimizerState};
use super::schedule::one_cycle_lr;
use super::targets::assign_targets;
use crate::autodiff::{Tape, Tensor};
use crate::dataio::{LabelRegistry, Sample};
use crate::error::{LmptError, Result};
use crate::model::{LmptModel, ModelConfig};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMetrics {
    /// 1-based.
    pub epoch: usize,
    pub mean_loss: f64,
    /// Rate used by the epoch's last step.
    pub lr: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<S> {
    /// Parameters already rounded to checkpoint precision.
    pub model: LmptModel<S>,
    pub checkpoint: Checkpoint,
    pub metrics: Vec<EpochMetrics>,
}

/// Writes `epoch,mean_loss,lr` rows.
pub fn metrics_csv(metrics: &[EpochMetrics]) -> String {
    let mut out = String::from("epoch,mean_loss,lr\n");
    for m in metrics {
        out.push_str(&format!("{},{},{}\n", m.epoch, m.mean_loss, m.lr));
    }
    out
}

/// Normalizes raw samples for training.
pub fn prepare_samples<S: Scalar>(samples: &[Sample<S>]) -> Result<Vec<TrainSample<S>>> {
    samples.iter().map(|s| TrainSample::from_sample(s).map(|(t, _)| t)).collect()
}

/// Loss and parameter gradients for one sample conditioned on its species.
pub fn sample_gradients<S: Scalar>(
    model: &LmptModel<S>,
    sample: &TrainSample<S>,
    registry: &LabelRegistry,
) -> Result<(S, Vec<Tensor<S>>)> {
    let condition = registry.condition_of(&sample.species)?;
    let targets = assign_targets(&sample.cloud, &sample.landmarks, registry)?;
    let hier = model.hierarchy(&sample.cloud)?;
    let mut tape = Tape::new();
    let p = model.params().bind(&mut tape, true);
    let logits = model.forward_on_tape(&mut tape, &p, &hier, Some(condition))?;
    let loss = keypoint_loss(&mut tape, logits, &targets)?;
    let grads = tape.backward(loss)?;
    Ok((tape.value(loss).item(), p.iter().map(|&v| grads.get(v)).collect()))
}

/// Owns a model and its optimizer state.
#[derive(Debug, Clone)]
pub struct Trainer<S> {
    model: LmptModel<S>,
    state: OptimizerState<S>,
    config: TrainConfig,
    registry: LabelRegistry,
}

impl<S: Scalar> Trainer<S> {
    pub fn new(model: LmptModel<S>, config: TrainConfig, registry: LabelRegistry) -> Result<Self> {
        config.validate()?;
        let mc = model.config();
        if mc.num_classes != registry.num_classes() {
            return Err(LmptError::Config(format!(
                "model has {} classes, registry {}",
                mc.num_classes,
                registry.num_classes()
            )));
        }
        if mc.num_conditions != registry.num_conditions() {
            return Err(LmptError::Config(format!(
                "model has {} conditions, registry {} species",
                mc.num_conditions,
                registry.num_conditions()
            )));
        }
        let state = OptimizerState::new(model.params());
        Ok(Self { model, state, config, registry })
    }

    pub fn model(&self) -> &LmptModel<S> {
        &self.model
    }

    pub fn into_model(self) -> LmptModel<S> {
        self.model
    }

    /// Mean loss over `batch`, then one AdamW step on the mean gradient.
    /// Samples may be processed in parallel; their gradients are summed in
    /// batch order so the result does not depend on scheduling.
    pub fn batch_step(&mut self, batch: &[TrainSample<S>], lr: f64) -> Result<f64> {
        if batch.is_empty() {
            return Err(LmptError::EmptySet);
        }
        let model = &self.model;
        let registry = &self.registry;
        let results: Vec<(S, Vec<Tensor<S>>)> =
            batch.par_iter().map(|s| sample_gradients(model, s, registry)).collect::<Result<_>>()?;
        let inv = S::one() / S::of_usize(batch.len());
        let mut results = results.into_iter();
        let (first_loss, mut total) = results.next().expect("non-empty batch");
        let mut loss = first_loss;
        for (l, grads) in results {
            loss += l;
            for (acc, g) in total.iter_mut().zip(&grads) {
                for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                    *a += *b;
                }
            }
        }
        for g in &mut total {
            for v in g.data_mut() {
                *v *= inv;
            }
        }
        let hp = AdamW { lr, betas: self.config.betas, eps: self.config.eps, weight_decay: self.config.weight_decay };
        adamw_step(self.model.params_mut(), &total, &mut self.state, &hp)?;
        let mean = (loss * inv).to_f64_lossless();
        if !mean.is_finite() {
            return Err(LmptError::Numerical(format!("batch loss is {mean}")));
        }
        Ok(mean)
    }
}

/// Full training run. The model is initialized from `train_config.seed`;
/// shuffling and augmentation draws come from the same seed, so a run is
/// bitwise reproducible.
pub fn train<S: Scalar>(
    train_config: &TrainConfig,
    model_config: &ModelConfig,
    dataset: &[TrainSample<S>],
    registry: &LabelRegistry,
) -> Result<TrainOutcome<S>> {
    train_with_progress(train_config, model_config, dataset, registry, |_| {})
}

/// [`train`] with a callback after every epoch.
pub fn train_with_progress<S: Scalar>(
    train_config: &TrainConfig,
    model_config: &ModelConfig,
    dataset: &[TrainSample<S>],
    registry: &LabelRegistry,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<TrainOutcome<S>> {
    if dataset.is_empty() {
        return Err(LmptError::EmptySet);
    }
    for s in dataset {
        registry
            .condition_of(&s.species)
            .map_err(|_| LmptError::Schema(format!("sample {}: species {} is not registered", s.id, s.species)))?;
    }
    let model = LmptModel::new(model_config.clone(), train_config.seed)?;
    let mut trainer = Trainer::new(model, train_config.clone(), registry.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(train_config.seed ^ 0x5E_ED0F_7A1E);
    let per_epoch = dataset.len().div_ceil(train_config.batch_size);
    let total = train_config.epochs * per_epoch;
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut metrics = Vec::with_capacity(train_config.epochs);
    let mut step = 0;
    for epoch in 1..=train_config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut lr = 0.0;
        for chunk in order.chunks(train_config.batch_size) {
            let seeds: Vec<u64> = chunk.iter().map(|_| rng.gen()).collect();
            let batch = chunk
                .iter()
                .zip(&seeds)
                .map(|(&i, &seed)| augment(&dataset[i], &train_config.augment, registry, seed))
                .collect::<Result<Vec<_>>>()?;
            lr = one_cycle_lr(step, total, train_config.peak_lr, &train_config.schedule)?;
            loss_sum += trainer.batch_step(&batch, lr)? * batch.len() as f64;
            step += 1;
        }
        let m = EpochMetrics { epoch, mean_loss: loss_sum / dataset.len() as f64, lr };
        on_epoch(&m);
        metrics.push(m);
    }
    let mut model = trainer.into_model();
    let checkpoint = Checkpoint::new(model_config.clone(), train_config.clone(), registry.clone(), model.params());
    model.params_mut().assign_from(&checkpoint.params.cast())?;
    Ok(TrainOutcome { model, checkpoint, metrics })
}
