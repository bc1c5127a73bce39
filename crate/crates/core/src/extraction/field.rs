use crate::geom::vec3::{self, Vec3};
use crate::model::{FeatureCloud, RangeUdf};
use crate::Result;

/// A non-negative distance field that can be queried in batches.
pub trait DistanceField: Sync {
    fn distances(&self, points: &[Vec3]) -> Result<Vec<f64>>;

    fn distances_and_gradients(&self, points: &[Vec3]) -> Result<(Vec<f64>, Vec<Vec3>)>;
}

/// `| |q - c| - r |`
#[derive(Debug, Clone, Copy)]
pub struct SphereField {
    pub center: Vec3,
    pub radius: f64,
}

impl SphereField {
    pub fn new(center: Vec3, radius: f64) -> Self {
        SphereField { center, radius }
    }

    fn eval(&self, q: Vec3) -> (f64, Vec3) {
        let v = vec3::sub(q, self.center);
        let r = vec3::norm(v);
        let s = r - self.radius;
        if r == 0.0 {
            return (s.abs(), [0.0; 3]);
        }
        (s.abs(), vec3::scale(v, s.signum() / r))
    }
}

impl DistanceField for SphereField {
    fn distances(&self, points: &[Vec3]) -> Result<Vec<f64>> {
        Ok(points.iter().map(|&q| self.eval(q).0).collect())
    }

    fn distances_and_gradients(&self, points: &[Vec3]) -> Result<(Vec<f64>, Vec<Vec3>)> {
        Ok(points.iter().map(|&q| self.eval(q)).unzip())
    }
}

/// `|n·q - offset|` for a unit normal `n`.
#[derive(Debug, Clone, Copy)]
pub struct PlaneField {
    pub normal: Vec3,
    pub offset: f64,
}

impl PlaneField {
    pub fn new(normal: Vec3, offset: f64) -> Self {
        let n = vec3::norm(normal);
        PlaneField {
            normal: vec3::scale(normal, 1.0 / n),
            offset,
        }
    }

    fn eval(&self, q: Vec3) -> (f64, Vec3) {
        let s = vec3::dot(self.normal, q) - self.offset;
        (s.abs(), vec3::scale(self.normal, s.signum()))
    }
}

impl DistanceField for PlaneField {
    fn distances(&self, points: &[Vec3]) -> Result<Vec<f64>> {
        Ok(points.iter().map(|&q| self.eval(q).0).collect())
    }

    fn distances_and_gradients(&self, points: &[Vec3]) -> Result<(Vec<f64>, Vec<Vec3>)> {
        Ok(points.iter().map(|&q| self.eval(q)).unzip())
    }
}

/// The same distance everywhere; has no surface.
#[derive(Debug, Clone, Copy)]
pub struct ConstantField(pub f64);

impl DistanceField for ConstantField {
    fn distances(&self, points: &[Vec3]) -> Result<Vec<f64>> {
        Ok(vec![self.0; points.len()])
    }

    fn distances_and_gradients(&self, points: &[Vec3]) -> Result<(Vec<f64>, Vec<Vec3>)> {
        Ok((vec![self.0; points.len()], vec![[0.0; 3]; points.len()]))
    }
}

/// How a [`ModelField`] differentiates the network.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GradientMode {
    Autodiff,
    /// Central differences with step `h`.
    FiniteDifference(f64),
}

/// The distance output of a trained network over one encoded cloud.
pub struct ModelField<'a> {
    pub model: &'a RangeUdf<f32>,
    pub cloud: &'a FeatureCloud,
    pub gradient: GradientMode,
}

impl<'a> ModelField<'a> {
    pub fn new(model: &'a RangeUdf<f32>, cloud: &'a FeatureCloud) -> Self {
        ModelField {
            model,
            cloud,
            gradient: GradientMode::Autodiff,
        }
    }

    pub fn with_gradient(mut self, mode: GradientMode) -> Self {
        self.gradient = mode;
        self
    }
}

impl DistanceField for ModelField<'_> {
    fn distances(&self, points: &[Vec3]) -> Result<Vec<f64>> {
        let q: Vec<[f32; 3]> = points.iter().map(|&p| vec3::to_f32(p)).collect();
        let d = self.model.distances(self.cloud, &q)?;
        Ok(d.into_iter().map(f64::from).collect())
    }

    fn distances_and_gradients(&self, points: &[Vec3]) -> Result<(Vec<f64>, Vec<Vec3>)> {
        let q: Vec<[f32; 3]> = points.iter().map(|&p| vec3::to_f32(p)).collect();
        match self.gradient {
            GradientMode::Autodiff => {
                let (d, g) = self.model.distance_with_gradient(self.cloud, &q)?;
                Ok((d.into_iter().map(f64::from).collect(), g))
            }
            GradientMode::FiniteDifference(h) => {
                let mut probes = Vec::with_capacity(points.len() * 7);
                for &p in points {
                    probes.push(vec3::to_f32(p));
                    for axis in 0..3 {
                        for sign in [1.0, -1.0] {
                            let mut s = p;
                            s[axis] += sign * h;
                            probes.push(vec3::to_f32(s));
                        }
                    }
                }
                let d = self.model.distances(self.cloud, &probes)?;
                let mut values = Vec::with_capacity(points.len());
                let mut grads = Vec::with_capacity(points.len());
                for row in d.chunks(7) {
                    values.push(row[0] as f64);
                    let mut g = [0.0; 3];
                    for (axis, gi) in g.iter_mut().enumerate() {
                        *gi = (row[1 + 2 * axis] as f64 - row[2 + 2 * axis] as f64) / (2.0 * h);
                    }
                    grads.push(g);
                }
                Ok((values, grads))
            }
        }
    }
}
