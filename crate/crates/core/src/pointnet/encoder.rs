//! Four-level local-aggregation encoder with a mirrored nearest-neighbor
//! upsampling decoder, producing one feature vector per input point.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::kdtree::KdTree;
use crate::error::{Error, Result};
use crate::geom::vec3::{self, Vec3};
use crate::tensor::{Activation, AttPool, Dense, Graph, ParamSet, Scalar, Tensor, Var};

pub const LEVELS: usize = 4;
/// Width of the relative-position encoding p_i ⊕ p_j ⊕ (p_i − p_j) ⊕ |p_i − p_j|.
pub const RELPOS_WIDTH: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    /// Width of the per-point embedding of raw coordinates.
    pub input_width: usize,
    /// Output width of each encoder level.
    pub widths: [usize; LEVELS],
    /// Neighborhood size inside each level.
    pub neighbors: usize,
    /// Point-count reduction between consecutive levels.
    pub ratio: usize,
    pub feature_width: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            input_width: 8,
            widths: [32, 64, 128, 256],
            neighbors: 8,
            ratio: 4,
            feature_width: 32,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_width == 0 || self.feature_width == 0 || self.widths.contains(&0) {
            return Err(Error::Validation("encoder widths must be positive".into()));
        }
        if self.neighbors == 0 {
            return Err(Error::Validation("encoder neighborhood must be at least 1".into()));
        }
        if self.ratio < 2 {
            return Err(Error::Validation("encoder downsampling ratio must be at least 2".into()));
        }
        Ok(())
    }

    /// Smallest cloud that still leaves one point at the coarsest level.
    pub fn min_points(&self) -> usize {
        self.ratio.pow(LEVELS as u32 - 1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct LevelLayout {
    relpos: Dense,
    pool: AttPool,
    out: Dense,
}

/// Positions of the encoder's weights inside a [`ParamSet`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncoderLayout {
    config: EncoderConfig,
    input: Dense,
    levels: Vec<LevelLayout>,
    bottleneck: Dense,
    /// `up[l]` fuses the upsampled coarser features with level `l`'s skip.
    up: Vec<Dense>,
    head: Dense,
}

impl EncoderLayout {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        config: &EncoderConfig,
        params: &mut ParamSet<T>,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        let input = params.dense("enc.input", 3, config.input_width, rng);
        let mut levels = Vec::with_capacity(LEVELS);
        let mut d_in = config.input_width;
        for (l, &w) in config.widths.iter().enumerate() {
            levels.push(LevelLayout {
                relpos: params.dense(&format!("enc.l{l}.relpos"), RELPOS_WIDTH, d_in, rng),
                pool: params.att_pool(&format!("enc.l{l}.pool"), 2 * d_in, rng),
                out: params.dense(&format!("enc.l{l}.out"), 2 * d_in, w, rng),
            });
            d_in = w;
        }
        let top = config.widths[LEVELS - 1];
        let bottleneck = params.dense("dec.l3", top, top, rng);
        let mut up = Vec::with_capacity(LEVELS - 1);
        for l in 0..LEVELS - 1 {
            let coarse = if l == LEVELS - 2 { top } else { config.widths[l + 1] };
            let w = config.widths[l];
            up.push(params.dense(&format!("dec.l{l}"), coarse + w, w, rng));
        }
        let head = params.dense("dec.head", config.widths[0], config.feature_width, rng);
        Ok(EncoderLayout {
            config: config.clone(),
            input,
            levels,
            bottleneck,
            up,
            head,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    /// `(fan_in, fan_out)` of every dense layer, in creation order.
    pub fn dense_shapes(&self) -> Vec<(usize, usize)> {
        let mut out = vec![(self.input.fan_in, self.input.fan_out)];
        for l in &self.levels {
            out.push((l.relpos.fan_in, l.relpos.fan_out));
            out.push((l.out.fan_in, l.out.fan_out));
        }
        out.push((self.bottleneck.fan_in, self.bottleneck.fan_out));
        out.extend(self.up.iter().map(|d| (d.fan_in, d.fan_out)));
        out.push((self.head.fan_in, self.head.fan_out));
        out
    }

    /// Per-point features (`N × feature_width`) for the cloud behind `hier`.
    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, vars: &[Var], hier: &Hierarchy) -> Result<Var> {
        let positions: Vec<T> = hier.levels[0]
            .positions
            .iter()
            .flat_map(|p| p.iter().map(|&c| T::from_f32(c)))
            .collect();
        let x = g.constant(Tensor::matrix(hier.len(), 3, positions)?);
        let mut feats = self.input.apply(g, vars, x, Activation::Leaky)?;
        let mut skips = Vec::with_capacity(LEVELS);
        for (l, (layout, level)) in self.levels.iter().zip(&hier.levels).enumerate() {
            if l > 0 {
                feats = g.gather(feats, level.parent.clone())?;
            }
            let rel: Vec<T> = level.relpos.iter().map(|&v| T::from_f32(v)).collect();
            let rel = g.constant(Tensor::matrix(level.neighbors.len(), RELPOS_WIDTH, rel)?);
            let rel = layout.relpos.apply(g, vars, rel, Activation::Leaky)?;
            let nf = g.gather(feats, level.neighbors.clone())?;
            let cat = g.concat(&[rel, nf])?;
            let pooled = layout.pool.apply(g, vars, cat, level.k)?;
            feats = layout.out.apply(g, vars, pooled, Activation::Leaky)?;
            skips.push(feats);
        }
        let mut d = self.bottleneck.apply(g, vars, skips[LEVELS - 1], Activation::Leaky)?;
        for l in (0..LEVELS - 1).rev() {
            let coarse = g.gather(d, hier.levels[l].upsample.clone())?;
            let cat = g.concat(&[coarse, skips[l]])?;
            d = self.up[l].apply(g, vars, cat, Activation::Leaky)?;
        }
        self.head.apply(g, vars, d, Activation::None)
    }
}

/// Neighborhood structure of one level of the hierarchy.
#[derive(Debug, Clone, PartialEq)]
pub struct Level {
    pub positions: Vec<[f32; 3]>,
    /// For levels above 0, the row in the previous level each point came from.
    pub parent: Vec<u32>,
    /// Row-major `len × k` neighbor rows within this level.
    pub neighbors: Vec<u32>,
    pub k: usize,
    /// Row-major `len·k × 10` relative-position encodings.
    pub relpos: Vec<f32>,
    /// For levels below the top, the nearest point of the next coarser level.
    pub upsample: Vec<u32>,
}

/// Everything about a cloud the encoder needs that does not depend on the
/// weights: the random subsets, in-level neighborhoods and upsampling maps.
#[derive(Debug, Clone, PartialEq)]
pub struct Hierarchy {
    pub levels: Vec<Level>,
}

impl Hierarchy {
    pub fn build(positions: &[[f32; 3]], config: &EncoderConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        if positions.len() < config.min_points() {
            return Err(Error::Validation(format!(
                "encoder needs at least {} points, got {}",
                config.min_points(),
                positions.len()
            )));
        }
        if positions.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::Validation("point cloud contains non-finite coordinates".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut levels: Vec<Level> = Vec::with_capacity(LEVELS);
        let mut current: Vec<[f32; 3]> = positions.to_vec();
        let mut parent: Vec<u32> = Vec::new();
        for l in 0..LEVELS {
            if l > 0 {
                let prev = &levels[l - 1].positions;
                let keep = (prev.len() / config.ratio).max(1);
                let mut pick: Vec<u32> = (0..prev.len() as u32).collect();
                pick.shuffle(&mut rng);
                pick.truncate(keep);
                pick.sort_unstable();
                current = pick.iter().map(|&i| prev[i as usize]).collect();
                parent = pick;
            }
            let tree = KdTree::from_f32(&current);
            let k = config.neighbors.min(current.len());
            let pts: Vec<Vec3> = tree.points().to_vec();
            let neighbors = tree.knn_many(&pts, k)?;
            let mut relpos = Vec::with_capacity(neighbors.len() * RELPOS_WIDTH);
            for (row, &j) in neighbors.iter().enumerate() {
                let pi = current[row / k];
                let pj = current[j as usize];
                let d = [pi[0] - pj[0], pi[1] - pj[1], pi[2] - pj[2]];
                let len = vec3::norm(vec3::to_f64(d)) as f32;
                relpos.extend_from_slice(&pi);
                relpos.extend_from_slice(&pj);
                relpos.extend_from_slice(&d);
                relpos.push(len);
            }
            levels.push(Level {
                positions: current.clone(),
                parent: std::mem::take(&mut parent),
                neighbors,
                k,
                relpos,
                upsample: Vec::new(),
            });
        }
        for l in 0..LEVELS - 1 {
            let coarse = KdTree::from_f32(&levels[l + 1].positions);
            let fine: Vec<Vec3> = levels[l].positions.iter().map(|&p| vec3::to_f64(p)).collect();
            levels[l].upsample = coarse.knn_many(&fine, 1)?;
        }
        Ok(Hierarchy { levels })
    }

    pub fn len(&self) -> usize {
        self.levels[0].positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn level_sizes(&self) -> Vec<usize> {
        self.levels.iter().map(|l| l.positions.len()).collect()
    }
}
