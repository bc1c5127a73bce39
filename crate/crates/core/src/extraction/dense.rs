use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::DistanceField;
use crate::geom::vec3::{self, Vec3};
use crate::{Error, Result};

const MIN_GRADIENT: f64 = 1e-8;

/// Moves `q` to `q - d ∇d/|∇d|`, clamped to the unit cube. `None` when the
/// gradient vanishes at a point off the surface.
pub fn project_step(q: Vec3, d: f64, grad: Vec3) -> Option<Vec3> {
    if d == 0.0 {
        return Some(q);
    }
    let n = vec3::norm(grad);
    if !(n > MIN_GRADIENT) || !d.is_finite() {
        return None;
    }
    let step = vec3::scale(grad, d / n);
    Some(clamp_cube(vec3::sub(q, step)))
}

/// One projection step for each point against `field`.
pub fn project_points(field: &dyn DistanceField, points: &[Vec3]) -> Result<Vec<Option<Vec3>>> {
    if points.is_empty() {
        return Ok(Vec::new());
    }
    let (d, g) = field.distances_and_gradients(points)?;
    Ok(points
        .iter()
        .zip(d.iter().zip(&g))
        .map(|(&q, (&d, &g))| project_step(q, d, g))
        .collect())
}

fn clamp_cube(p: Vec3) -> Vec3 {
    p.map(|c| c.clamp(-0.5, 0.5))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DenseConfig {
    /// Samples farther than this from the surface are dropped before projecting.
    pub threshold: f64,
    pub iters: usize,
    /// Projected points are kept only below this residual.
    pub accept: f64,
    pub max_rounds: usize,
    /// Candidates drawn per round.
    pub batch: usize,
    pub seed: u64,
}

impl Default for DenseConfig {
    fn default() -> Self {
        DenseConfig {
            threshold: 0.1,
            iters: 5,
            accept: 0.005,
            max_rounds: 50,
            batch: 65_536,
            seed: 0,
        }
    }
}

impl DenseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0) || !(self.accept > 0.0) {
            return Err(Error::Validation(
                "threshold and accept must be positive".into(),
            ));
        }
        if self.batch == 0 || self.max_rounds == 0 {
            return Err(Error::Validation("batch and max_rounds must be positive".into()));
        }
        Ok(())
    }
}

/// Points projected onto the zero set of a distance field.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DensePoints {
    pub positions: Vec<Vec3>,
    /// Field value at each position after the last projection.
    pub residuals: Vec<f64>,
    pub labels: Option<Vec<u32>>,
    /// Candidates that passed the threshold and were projected.
    pub projected: usize,
    pub rounds: usize,
}

impl DensePoints {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions_f32(&self) -> Vec<[f32; 3]> {
        self.positions.iter().map(|&p| vec3::to_f32(p)).collect()
    }
}

/// Samples the cube, projects candidates near the surface onto it, and
/// multiplies survivors with Gaussian re-noising until `n_min` points
/// converge.
pub fn extract_dense_points(
    field: &dyn DistanceField,
    n_min: usize,
    config: &DenseConfig,
) -> Result<DensePoints> {
    config.validate()?;
    if n_min == 0 {
        return Err(Error::Validation("n_min must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let noise = Normal::new(0.0, config.threshold / 3.0)
        .map_err(|e| Error::Validation(e.to_string()))?;
    let mut out = DensePoints::default();
    for round in 0..config.max_rounds {
        out.rounds = round + 1;
        let candidates: Vec<Vec3> = if out.positions.is_empty() {
            (0..config.batch)
                .map(|_| std::array::from_fn(|_| rng.random::<f64>() - 0.5))
                .collect()
        } else {
            (0..config.batch)
                .map(|_| {
                    let base = out.positions[rng.random_range(0..out.positions.len())];
                    clamp_cube(std::array::from_fn(|a| base[a] + noise.sample(&mut rng)))
                })
                .collect()
        };
        let d = field.distances(&candidates)?;
        let mut pts: Vec<Vec3> = candidates
            .into_iter()
            .zip(d)
            .filter(|&(_, d)| d < config.threshold)
            .map(|(p, _)| p)
            .collect();
        out.projected += pts.len();
        for _ in 0..config.iters {
            pts = project_points(field, &pts)?.into_iter().flatten().collect();
        }
        let residuals = if pts.is_empty() {
            Vec::new()
        } else {
            field.distances(&pts)?
        };
        for (p, r) in pts.into_iter().zip(residuals) {
            if r < config.accept {
                out.positions.push(p);
                out.residuals.push(r);
            }
        }
        log::debug!(
            "dense extraction round {}: {} points accepted",
            out.rounds,
            out.positions.len()
        );
        if out.positions.len() >= n_min {
            return Ok(out);
        }
    }
    Err(Error::Extraction(format!(
        "only {} of {} points converged after {} rounds",
        out.positions.len(),
        n_min,
        out.rounds
    )))
}
