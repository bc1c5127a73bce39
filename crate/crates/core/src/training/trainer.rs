use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::loss::{combined_loss, label_mask, LossSettings};
use crate::dataset::SceneRecord;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, QueryBatch, RangeUdf};
use crate::pointnet::Hierarchy;
use crate::tensor::{adam_step, AdamConfig, AdamState, Graph, ParamSet, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_scenes: usize,
    /// Queries drawn from each scene per step.
    pub queries_per_scene: usize,
    /// Size of each scene's input cloud.
    pub surface_points: usize,
    pub epochs: usize,
    pub lr: f64,
    /// Linear learning-rate ramp over the first steps.
    #[serde(default)]
    pub warmup_steps: usize,
    /// ℓ1 clamp on predicted and target distances; `None` disables it.
    pub clamp: Option<f64>,
    /// Learned log-variance weighting of the two losses.
    pub uncertainty: bool,
    /// Share of queries whose semantic label is used.
    pub label_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_scenes: 4,
            queries_per_scene: 50_000,
            surface_points: 10_000,
            epochs: 1,
            lr: 1e-3,
            warmup_steps: 0,
            clamp: Some(0.1),
            uncertainty: true,
            label_fraction: 1.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_scenes == 0 || self.queries_per_scene == 0 || self.surface_points == 0 {
            return Err(Error::Validation("batch, query and cloud sizes must be at least 1".into()));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Validation(format!("invalid learning rate {}", self.lr)));
        }
        if let Some(c) = self.clamp {
            if !(c > 0.0) {
                return Err(Error::Validation(format!("clamp must be positive, got {c}")));
            }
        }
        if !(0.0..=1.0).contains(&self.label_fraction) {
            return Err(Error::Validation(format!(
                "label fraction {} outside [0, 1]",
                self.label_fraction
            )));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            ..AdamConfig::default()
        }
    }

    /// Optimizer settings for update number `step` (0-based).
    pub fn adam_at(&self, step: u64) -> AdamConfig {
        let ramp = if self.warmup_steps == 0 {
            1.0
        } else {
            ((step + 1) as f64 / self.warmup_steps as f64).min(1.0)
        };
        AdamConfig {
            lr: self.lr * ramp,
            ..AdamConfig::default()
        }
    }

    fn loss_settings(&self) -> LossSettings {
        LossSettings {
            clamp: self.clamp,
            uncertainty: self.uncertainty,
        }
    }
}

/// A scene with everything that does not depend on the weights precomputed:
/// the encoder hierarchy and every query's neighbor rows.
#[derive(Debug, Clone)]
pub struct PreparedScene {
    pub cloud: Vec<[f32; 3]>,
    pub hierarchy: Hierarchy,
    pub queries: Vec<[f32; 3]>,
    pub targets: Vec<f32>,
    pub labels: Vec<u32>,
    pub mask: Vec<bool>,
    /// Row-major `queries × K`.
    pub neighbors: Vec<u32>,
    pub k: usize,
}

impl PreparedScene {
    pub fn new(record: &SceneRecord, model: &ModelConfig, label_fraction: f64) -> Result<Self> {
        let hierarchy = Hierarchy::build(&record.cloud, &model.encoder, record.hierarchy_seed)?;
        let samples: Vec<_> = record.queries.iter().copied().collect();
        if samples.is_empty() {
            return Err(Error::EmptySet("scene without queries".into()));
        }
        if record.queries.class_count as usize > model.classes {
            return Err(Error::Validation(format!(
                "scene has {} classes, model predicts {}",
                record.queries.class_count, model.classes
            )));
        }
        let queries: Vec<[f32; 3]> = samples.iter().map(|s| s.position).collect();
        let tree = crate::pointnet::KdTree::from_f32(&record.cloud);
        let q64: Vec<_> = queries.iter().map(|&q| crate::geom::vec3::to_f64(q)).collect();
        let neighbors = tree.knn_many(&q64, model.k)?;
        Ok(PreparedScene {
            cloud: record.cloud.clone(),
            hierarchy,
            targets: samples.iter().map(|s| s.udf).collect(),
            labels: samples.iter().map(|s| s.label).collect(),
            mask: label_mask(record.queries.seed, samples.len(), label_fraction),
            queries,
            neighbors,
            k: model.k,
        })
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }
}

/// Loss values of one step, averaged over the scenes of the batch.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub total: f64,
    pub l1: f64,
    /// Mean over the scenes that had labeled queries.
    pub ce: Option<f64>,
    pub s1: f64,
    pub s2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub steps: usize,
    pub total: f64,
    pub l1: f64,
    pub ce: Option<f64>,
}

/// Everything needed to resume or reuse a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model_config: ModelConfig,
    pub train_config: TrainConfig,
    pub params: ParamSet<f32>,
    pub adam: AdamState<f32>,
    pub epoch: usize,
    /// Steps taken; together with the config seed this fixes every later
    /// random draw.
    pub step: u64,
}

impl Checkpoint {
    pub fn model(&self) -> Result<RangeUdf<f32>> {
        RangeUdf::from_params(self.model_config.clone(), self.params.clone())
    }
}

fn mix(seed: u64, a: u64, b: u64) -> u64 {
    let mut x = seed ^ a.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ b.wrapping_mul(0xc2b2_ae3d_27d4_eb4f);
    x ^= x >> 33;
    x = x.wrapping_mul(0xff51_afd7_ed55_8ccd);
    x ^ (x >> 33)
}

struct SceneResult {
    grads: Vec<Option<Tensor<f32>>>,
    total: f64,
    l1: f64,
    ce: Option<f64>,
}

/// Owns the model and optimizer state across steps.
#[derive(Debug, Clone)]
pub struct Trainer {
    model: RangeUdf<f32>,
    adam: AdamState<f32>,
    config: TrainConfig,
    epoch: usize,
    step: u64,
}

impl Trainer {
    pub fn new(model: RangeUdf<f32>, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let adam = AdamState::new(model.params().as_slice());
        Ok(Trainer {
            model,
            adam,
            config,
            epoch: 0,
            step: 0,
        })
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self> {
        ckpt.train_config.validate()?;
        let model = ckpt.model()?;
        Ok(Trainer {
            model,
            adam: ckpt.adam,
            config: ckpt.train_config,
            epoch: ckpt.epoch,
            step: ckpt.step,
        })
    }

    pub fn model(&self) -> &RangeUdf<f32> {
        &self.model
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn config_mut(&mut self) -> &mut TrainConfig {
        &mut self.config
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn epochs_done(&self) -> usize {
        self.epoch
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut params = self.model.params().clone();
        params.zero_grad();
        Checkpoint {
            model_config: self.model.config().clone(),
            train_config: self.config.clone(),
            params,
            adam: self.adam.clone(),
            epoch: self.epoch,
            step: self.step,
        }
    }

    fn scene_pass(&self, scene: &PreparedScene, slot: usize) -> Result<SceneResult> {
        let k = self.model.config().k;
        if scene.k != k {
            return Err(Error::Validation(format!(
                "scene prepared for K={}, model uses K={k}",
                scene.k
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(mix(self.config.seed, self.step, slot as u64));
        let n = scene.len();
        let picked: Vec<usize> = if self.config.queries_per_scene >= n {
            (0..n).collect()
        } else {
            let mut v = index::sample(&mut rng, n, self.config.queries_per_scene).into_vec();
            v.sort_unstable();
            v
        };
        let queries: Vec<[f32; 3]> = picked.iter().map(|&i| scene.queries[i]).collect();
        let targets: Vec<f32> = picked.iter().map(|&i| scene.targets[i]).collect();
        let labels: Vec<u32> = picked.iter().map(|&i| scene.labels[i]).collect();
        let mask: Vec<bool> = picked.iter().map(|&i| scene.mask[i]).collect();
        let neighbors: Vec<u32> = picked
            .iter()
            .flat_map(|&i| scene.neighbors[i * k..(i + 1) * k].iter().copied())
            .collect();

        let mut g = Graph::new();
        let vars = self.model.params().bind(&mut g, true);
        let feats = self.model.encode(&mut g, &vars, &scene.hierarchy)?;
        let batch = QueryBatch {
            queries: &queries,
            neighbors: &neighbors,
            cloud: &scene.cloud,
        };
        let out = self.model.heads(&mut g, &vars, feats, &batch, false)?;
        let (s1, s2) = self.model.uncertainty_indices();
        let parts = combined_loss(
            &mut g,
            out.distance,
            &targets,
            out.logits,
            &labels,
            Some(&mask),
            (vars[s1], vars[s2]),
            self.config.loss_settings(),
        )?;
        let total = g.value(parts.total).data()[0] as f64;
        if !total.is_finite() {
            return Err(Error::Validation(format!("loss became {total} at step {}", self.step)));
        }
        let l1 = g.value(parts.l1).data()[0] as f64;
        let ce = parts.ce.map(|c| g.value(c).data()[0] as f64);
        let mut grads = g.backward(parts.total)?;
        Ok(SceneResult {
            grads: vars.iter().map(|v| grads.take(*v)).collect(),
            total,
            l1,
            ce,
        })
    }

    /// One optimizer update over a batch of scenes.
    pub fn step(&mut self, scenes: &[&PreparedScene]) -> Result<StepStats> {
        if scenes.is_empty() {
            return Err(Error::EmptySet("training step without scenes".into()));
        }
        let results: Vec<SceneResult> = scenes
            .par_iter()
            .enumerate()
            .map(|(slot, s)| self.scene_pass(s, slot))
            .collect::<Result<_>>()?;
        let inv = 1.0 / results.len() as f32;
        let params = self.model.params_mut();
        params.zero_grad();
        for r in &results {
            for (p, gr) in params.as_mut_slice().iter_mut().zip(&r.grads) {
                if let Some(gr) = gr {
                    for (d, &s) in p.grad.data_mut().iter_mut().zip(gr.data()) {
                        *d += s * inv;
                    }
                }
            }
        }
        adam_step(params.as_mut_slice(), &mut self.adam, &self.config.adam_at(self.step));
        self.step += 1;
        let n = results.len() as f64;
        let ces: Vec<f64> = results.iter().filter_map(|r| r.ce).collect();
        let (s1, s2) = self.model.uncertainty_indices();
        let p = self.model.params();
        Ok(StepStats {
            total: results.iter().map(|r| r.total).sum::<f64>() / n,
            l1: results.iter().map(|r| r.l1).sum::<f64>() / n,
            ce: (!ces.is_empty()).then(|| ces.iter().sum::<f64>() / ces.len() as f64),
            s1: p.get(s1).value.data()[0] as f64,
            s2: p.get(s2).value.data()[0] as f64,
        })
    }

    /// One pass over all scenes in a seeded random order.
    pub fn epoch(&mut self, scenes: &[PreparedScene]) -> Result<EpochStats> {
        self.epoch_capped(scenes, usize::MAX)
    }

    /// Like [`Trainer::epoch`] but stops after `max_steps` batches; the
    /// epoch counts as done either way.
    pub fn epoch_capped(&mut self, scenes: &[PreparedScene], max_steps: usize) -> Result<EpochStats> {
        if max_steps == 0 {
            return Err(Error::Validation("an epoch needs at least one step".into()));
        }
        if scenes.is_empty() {
            return Err(Error::EmptySet("training on an empty dataset".into()));
        }
        let mut order: Vec<usize> = (0..scenes.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix(self.config.seed, u64::MAX, self.epoch as u64)));
        let mut sums = (0.0, 0.0, 0.0, 0usize);
        let mut steps = 0;
        for chunk in order.chunks(self.config.batch_scenes).take(max_steps) {
            let batch: Vec<&PreparedScene> = chunk.iter().map(|&i| &scenes[i]).collect();
            let s = self.step(&batch)?;
            sums.0 += s.total;
            sums.1 += s.l1;
            if let Some(ce) = s.ce {
                sums.2 += ce;
                sums.3 += 1;
            }
            steps += 1;
        }
        self.epoch += 1;
        Ok(EpochStats {
            epoch: self.epoch,
            steps,
            total: sums.0 / steps as f64,
            l1: sums.1 / steps as f64,
            ce: (sums.3 > 0).then(|| sums.2 / sums.3 as f64),
        })
    }
}

/// Trains for `config.epochs` epochs, reporting after each one.
pub fn fit(
    model: RangeUdf<f32>,
    scenes: &[PreparedScene],
    config: TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats, &Trainer) -> Result<()>,
) -> Result<Checkpoint> {
    if scenes.is_empty() {
        return Err(Error::EmptySet("training on an empty dataset".into()));
    }
    let epochs = config.epochs;
    let mut trainer = Trainer::new(model, config)?;
    for _ in 0..epochs {
        let stats = trainer.epoch(scenes)?;
        log::info!(
            "epoch {} steps {} loss {:.6} l1 {:.6}",
            stats.epoch,
            stats.steps,
            stats.total,
            stats.l1
        );
        on_epoch(&stats, &trainer)?;
    }
    Ok(trainer.checkpoint())
}
