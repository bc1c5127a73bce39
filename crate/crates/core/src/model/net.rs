use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::{ModelConfig, RangeInput, POOLED_WIDTH, RANGE_WIDTH, SEM_HIDDEN, UDF_HIDDEN};
use crate::error::{Error, Result};
use crate::geom::vec3::{self, Vec3};
use crate::pointnet::{EncoderLayout, Hierarchy, KdTree};
use crate::tensor::{Activation, AttPool, Dense, Graph, ParamSet, Scalar, Tensor, Var};

/// Queries evaluated per graph during inference.
const CHUNK: usize = 2048;

/// Output bias of a freshly initialized distance head.
pub const INITIAL_DISTANCE: f64 = 0.0;

#[derive(Debug, Clone, PartialEq, Eq)]
struct HeadLayout {
    range: Dense,
    udf_pool: AttPool,
    udf_proj: Dense,
    udf_head: [Dense; 4],
    sem_pool: AttPool,
    sem_proj: Dense,
    sem_head: [Dense; 3],
    s1: usize,
    s2: usize,
}

/// All weights of the network together with the layout that gives them meaning.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeUdf<T: Scalar = f32> {
    config: ModelConfig,
    params: ParamSet<T>,
    encoder: EncoderLayout,
    heads: HeadLayout,
}

/// A query, its K nearest cloud points and their features.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborBundle {
    pub query: [f32; 3],
    pub positions: Vec<[f32; 3]>,
    /// `K × feature_width`, row-aligned with `positions`.
    pub features: Tensor<f32>,
}

impl NeighborBundle {
    pub fn k(&self) -> usize {
        self.positions.len()
    }

    fn check(&self) -> Result<()> {
        if self.positions.is_empty() {
            return Err(Error::EmptySet("neighbor bundle has no neighbors".into()));
        }
        if self.features.rows() != self.positions.len() {
            return Err(Error::Shape(format!(
                "{} feature rows for {} neighbor positions",
                self.features.rows(),
                self.positions.len()
            )));
        }
        Ok(())
    }
}

/// Queries with their neighbor rows into a cloud, ready for the heads.
#[derive(Debug, Clone, Copy)]
pub struct QueryBatch<'a> {
    pub queries: &'a [[f32; 3]],
    /// Row-major `queries.len() × K` indices into `cloud`.
    pub neighbors: &'a [u32],
    pub cloud: &'a [[f32; 3]],
}

/// Graph nodes produced by the two heads.
#[derive(Debug, Clone, Copy)]
pub struct HeadOutput {
    /// `Q × 1`, non-negative.
    pub distance: Var,
    /// `Q × C`.
    pub logits: Var,
    /// The `Q·K × w` range-MLP input; a gradient leaf when query gradients were requested.
    pub range_input: Var,
}

/// A cloud with its per-point features, ready for queries.
#[derive(Debug, Clone)]
pub struct FeatureCloud {
    pub positions: Vec<[f32; 3]>,
    pub features: Tensor<f32>,
    tree: KdTree,
}

impl FeatureCloud {
    pub fn new(positions: Vec<[f32; 3]>, features: Tensor<f32>) -> Result<Self> {
        if features.rows() != positions.len() {
            return Err(Error::Shape(format!(
                "{} feature rows for {} points",
                features.rows(),
                positions.len()
            )));
        }
        let tree = KdTree::from_f32(&positions);
        Ok(FeatureCloud {
            positions,
            features,
            tree,
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn knn(&self, queries: &[[f32; 3]], k: usize) -> Result<Vec<u32>> {
        let qs: Vec<Vec3> = queries.iter().map(|&q| vec3::to_f64(q)).collect();
        self.tree.knn_many(&qs, k)
    }

    pub fn bundle(&self, query: [f32; 3], k: usize) -> Result<NeighborBundle> {
        let idx = self.tree.knn(vec3::to_f64(query), k)?;
        let w = self.features.cols();
        let mut feats = Vec::with_capacity(k * w);
        for &i in &idx {
            feats.extend_from_slice(self.features.row(i as usize));
        }
        Ok(NeighborBundle {
            query,
            positions: idx.iter().map(|&i| self.positions[i as usize]).collect(),
            features: Tensor::matrix(k, w, feats)?,
        })
    }
}

/// Distances and semantic logits for a set of queries.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub distances: Vec<f32>,
    /// `Q × C`.
    pub logits: Tensor<f32>,
}

impl Prediction {
    pub fn labels(&self) -> Vec<u32> {
        (0..self.logits.rows()).map(|r| argmax(self.logits.row(r))).collect()
    }
}

fn argmax(row: &[f32]) -> u32 {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best as u32
}

/// Builds the `Q·K × w` range-MLP input for the chosen ablation.
pub fn range_input<T: Scalar>(mode: RangeInput, batch: &QueryBatch) -> Result<Tensor<T>> {
    let q = batch.queries.len();
    if q == 0 || !batch.neighbors.len().is_multiple_of(q) {
        return Err(Error::Shape(format!(
            "{} neighbor rows for {q} queries",
            batch.neighbors.len()
        )));
    }
    let k = batch.neighbors.len() / q;
    let w = mode.width();
    let mut data = Vec::with_capacity(q * k * w);
    for (row, &j) in batch.neighbors.iter().enumerate() {
        let qq = batch.queries[row / k];
        let p = *batch
            .cloud
            .get(j as usize)
            .ok_or_else(|| Error::Shape(format!("neighbor {j} outside a cloud of {}", batch.cloud.len())))?;
        if mode == RangeInput::Full {
            data.extend((0..3).map(|a| T::from_f32(qq[a] - p[a])));
        }
        if mode != RangeInput::NeighborOnly {
            data.extend(qq.iter().map(|&c| T::from_f32(c)));
        }
        data.extend(p.iter().map(|&c| T::from_f32(c)));
    }
    Tensor::matrix(q * k, w, data)
}

impl<T: Scalar> RangeUdf<T> {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let encoder = EncoderLayout::new(&config.encoder, &mut params, &mut rng)?;
        let [h1, h2, h3] = UDF_HIDDEN;
        let [s_a, s_b] = SEM_HIDDEN;
        let heads = HeadLayout {
            range: params.dense("range", config.range_input.width(), RANGE_WIDTH, &mut rng),
            udf_pool: params.att_pool("udf.pool", config.udf_width(), &mut rng),
            udf_proj: params.dense("udf.proj", config.udf_width(), POOLED_WIDTH, &mut rng),
            udf_head: [
                params.dense("udf.fc1", POOLED_WIDTH, h1, &mut rng),
                params.dense("udf.fc2", h1, h2, &mut rng),
                params.dense("udf.fc3", h2, h3, &mut rng),
                params.dense("udf.out", h3, 1, &mut rng),
            ],
            sem_pool: params.att_pool("sem.pool", config.sem_width(), &mut rng),
            sem_proj: params.dense("sem.proj", config.sem_width(), POOLED_WIDTH, &mut rng),
            sem_head: [
                params.dense("sem.fc1", POOLED_WIDTH, s_a, &mut rng),
                params.dense("sem.fc2", s_a, s_b, &mut rng),
                params.dense("sem.out", s_b, config.classes, &mut rng),
            ],
            s1: params.push("loss.s1", Tensor::zeros(vec![1])),
            s2: params.push("loss.s2", Tensor::zeros(vec![1])),
        };
        // Start the distance output flat at the ReLU kink, where the gradient
        // takes the positive branch: every positive target pulls it up and
        // no seed begins with a dead output.
        let out = heads.udf_head[3];
        params.as_mut_slice()[out.w].value.fill(T::of(0.0));
        params.as_mut_slice()[out.b].value.fill(T::of(INITIAL_DISTANCE));
        Ok(RangeUdf {
            config,
            params,
            encoder,
            heads,
        })
    }

    /// Rebuilds a model around existing weights, checking names and shapes.
    pub fn from_params(config: ModelConfig, params: ParamSet<T>) -> Result<Self> {
        let mut model = RangeUdf::new(config, 0)?;
        if model.params.len() != params.len() {
            return Err(Error::Validation(format!(
                "expected {} parameter tensors, got {}",
                model.params.len(),
                params.len()
            )));
        }
        for (want, got) in model.params.iter().zip(params.iter()) {
            if want.name != got.name || want.value.shape() != got.value.shape() {
                return Err(Error::Validation(format!(
                    "parameter {} {:?} does not match expected {} {:?}",
                    got.name,
                    got.value.shape(),
                    want.name,
                    want.value.shape()
                )));
            }
        }
        model.params = params;
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }

    pub fn encoder(&self) -> &EncoderLayout {
        &self.encoder
    }

    pub fn cast<U: Scalar>(&self) -> RangeUdf<U> {
        RangeUdf {
            config: self.config.clone(),
            params: self.params.cast(),
            encoder: self.encoder.clone(),
            heads: self.heads.clone(),
        }
    }

    /// Index of the two log-variance scalars inside the parameter set.
    pub fn uncertainty_indices(&self) -> (usize, usize) {
        (self.heads.s1, self.heads.s2)
    }

    /// `(fan_in, fan_out)` of the head layers: range MLP, distance stack,
    /// semantic stack.
    pub fn head_shapes(&self) -> Vec<(usize, usize)> {
        let h = &self.heads;
        std::iter::once(&h.range)
            .chain(std::iter::once(&h.udf_proj))
            .chain(h.udf_head.iter())
            .chain(std::iter::once(&h.sem_proj))
            .chain(h.sem_head.iter())
            .map(|d| (d.fan_in, d.fan_out))
            .collect()
    }

    pub fn pool_widths(&self) -> (usize, usize) {
        (self.heads.udf_pool.dim, self.heads.sem_pool.dim)
    }

    pub fn encode<G: Scalar>(&self, g: &mut Graph<G>, vars: &[Var], hier: &Hierarchy) -> Result<Var> {
        self.encoder.forward(g, vars, hier)
    }

    /// R_k^q for every row of a range-input matrix.
    pub fn range_rows(&self, g: &mut Graph<T>, vars: &[Var], input: Var) -> Result<Var> {
        self.heads.range.apply(g, vars, input, Activation::Leaky)
    }

    /// Pools `R ⊕ F` over each group of K rows into the interpolated feature.
    pub fn interpolate(&self, g: &mut Graph<T>, vars: &[Var], range: Var, feats: Var) -> Result<Var> {
        let cat = g.concat(&[range, feats])?;
        let pooled = self.heads.udf_pool.apply(g, vars, cat, self.config.k)?;
        self.heads.udf_proj.apply(g, vars, pooled, Activation::Leaky)
    }

    /// Distance stack ending in a rectifier.
    pub fn regress(&self, g: &mut Graph<T>, vars: &[Var], fu: Var) -> Result<Var> {
        let [a, b, c, out] = &self.heads.udf_head;
        let mut x = a.apply(g, vars, fu, Activation::Leaky)?;
        x = b.apply(g, vars, x, Activation::Leaky)?;
        x = c.apply(g, vars, x, Activation::Leaky)?;
        out.apply(g, vars, x, Activation::Relu)
    }

    /// Semantic logits from `p_k ⊕ F_k` rows, plus `q` rows for the ablation.
    pub fn semantics(
        &self,
        g: &mut Graph<T>,
        vars: &[Var],
        positions: Var,
        feats: Var,
        query_rows: Option<Var>,
    ) -> Result<Var> {
        let cat = match (self.config.sem_with_q, query_rows) {
            (false, _) => g.concat(&[positions, feats])?,
            (true, Some(q)) => g.concat(&[positions, feats, q])?,
            (true, None) => {
                return Err(Error::Validation(
                    "semantic branch configured with query positions but none given".into(),
                ))
            }
        };
        let pooled = self.heads.sem_pool.apply(g, vars, cat, self.config.k)?;
        let [a, b, out] = &self.heads.sem_head;
        let mut x = self.heads.sem_proj.apply(g, vars, pooled, Activation::Leaky)?;
        x = a.apply(g, vars, x, Activation::Leaky)?;
        x = b.apply(g, vars, x, Activation::Leaky)?;
        out.apply(g, vars, x, Activation::None)
    }

    /// Both heads for a batch whose neighbor features are rows of `features`.
    pub fn heads(
        &self,
        g: &mut Graph<T>,
        vars: &[Var],
        features: Var,
        batch: &QueryBatch,
        track_query: bool,
    ) -> Result<HeadOutput> {
        let fk = g.gather(features, batch.neighbors.to_vec())?;
        self.heads_on_rows(g, vars, fk, batch, track_query)
    }

    /// Both heads when the `Q·K × F` neighbor feature rows are already on the graph.
    pub fn heads_on_rows(
        &self,
        g: &mut Graph<T>,
        vars: &[Var],
        fk: Var,
        batch: &QueryBatch,
        track_query: bool,
    ) -> Result<HeadOutput> {
        let (distance, rin) = self.distance_on_rows(g, vars, fk, batch, track_query)?;
        let pk = g.constant(neighbor_positions(batch));
        let qrows = if self.config.sem_with_q {
            Some(g.constant(repeated_queries(batch, self.config.k)))
        } else {
            None
        };
        let logits = self.semantics(g, vars, pk, fk, qrows)?;
        Ok(HeadOutput {
            distance,
            logits,
            range_input: rin,
        })
    }

    /// The distance branch alone; returns the distance node and the range input.
    pub fn distance_on_rows(
        &self,
        g: &mut Graph<T>,
        vars: &[Var],
        fk: Var,
        batch: &QueryBatch,
        track_query: bool,
    ) -> Result<(Var, Var)> {
        self.check_batch(batch)?;
        let rin = range_input::<T>(self.config.range_input, batch)?;
        let rin = if track_query { g.param(rin) } else { g.constant(rin) };
        let r = self.range_rows(g, vars, rin)?;
        let fu = self.interpolate(g, vars, r, fk)?;
        Ok((self.regress(g, vars, fu)?, rin))
    }

    fn check_batch(&self, batch: &QueryBatch) -> Result<()> {
        if batch.queries.is_empty() {
            return Err(Error::EmptySet("no queries".into()));
        }
        if batch.neighbors.len() != batch.queries.len() * self.config.k {
            return Err(Error::Shape(format!(
                "{} neighbor indices for {} queries at K={}",
                batch.neighbors.len(),
                batch.queries.len(),
                self.config.k
            )));
        }
        Ok(())
    }

    /// Sums the per-row gradient of the range input back onto each query.
    pub fn query_gradients(&self, rin_grad: Option<&Tensor<T>>, queries: usize) -> Vec<[f64; 3]> {
        let k = self.config.k;
        let mut out = vec![[0.0; 3]; queries];
        let Some(gr) = rin_grad else { return out };
        let w = gr.cols();
        // columns that carry q: the relative block (+q) and the absolute q block
        let blocks: &[usize] = match self.config.range_input {
            RangeInput::Full => &[0, 3],
            RangeInput::WithoutRelative => &[0],
            RangeInput::NeighborOnly => &[],
        };
        for (row, vals) in gr.data().chunks(w).enumerate() {
            let q = &mut out[row / k];
            for &b in blocks {
                for a in 0..3 {
                    q[a] += vals[b + a].as_f64();
                }
            }
        }
        out
    }

    /// Single-query versions of each head stage, for inspection and tests.
    pub fn encode_range(&self, q: [f32; 3], p: [f32; 3]) -> Result<Vec<T>> {
        let mut g = Graph::new();
        let vars = self.params.bind(&mut g, false);
        let batch = QueryBatch {
            queries: &[q],
            neighbors: &[0],
            cloud: &[p],
        };
        let rin = g.constant(range_input::<T>(self.config.range_input, &batch)?);
        let r = self.range_rows(&mut g, &vars, rin)?;
        Ok(g.value(r).data().to_vec())
    }

    #[allow(clippy::type_complexity)]
    fn bundle_graph(&self, bundle: &NeighborBundle) -> Result<(Graph<T>, Vec<Var>, Var, Var, Var)> {
        bundle.check()?;
        if bundle.k() != self.config.k {
            return Err(Error::Shape(format!(
                "bundle of {} neighbors for a model with K={}",
                bundle.k(),
                self.config.k
            )));
        }
        let mut g = Graph::new();
        let vars = self.params.bind(&mut g, false);
        let neighbors: Vec<u32> = (0..bundle.k() as u32).collect();
        let batch = QueryBatch {
            queries: std::slice::from_ref(&bundle.query),
            neighbors: &neighbors,
            cloud: &bundle.positions,
        };
        let rin = g.constant(range_input::<T>(self.config.range_input, &batch)?);
        let fk = g.constant(bundle.features.cast());
        let pk = g.constant(neighbor_positions(&batch));
        Ok((g, vars, rin, fk, pk))
    }

    pub fn interpolate_udf(&self, bundle: &NeighborBundle) -> Result<Vec<T>> {
        let (mut g, vars, rin, fk, _) = self.bundle_graph(bundle)?;
        let r = self.range_rows(&mut g, &vars, rin)?;
        let fu = self.interpolate(&mut g, &vars, r, fk)?;
        Ok(g.value(fu).data().to_vec())
    }

    pub fn regress_distance(&self, fu: &[T]) -> Result<T> {
        let mut g = Graph::new();
        let vars = self.params.bind(&mut g, false);
        let x = g.constant(Tensor::matrix(1, fu.len(), fu.to_vec())?);
        let d = self.regress(&mut g, &vars, x)?;
        Ok(g.value(d).data()[0])
    }

    pub fn segment_semantics(&self, bundle: &NeighborBundle) -> Result<Vec<T>> {
        let (mut g, vars, _, fk, pk) = self.bundle_graph(bundle)?;
        let q = if self.config.sem_with_q {
            let rows: Vec<T> = (0..bundle.k())
                .flat_map(|_| bundle.query.iter().map(|&c| T::from_f32(c)))
                .collect();
            Some(g.constant(Tensor::matrix(bundle.k(), 3, rows)?))
        } else {
            None
        };
        let s = self.semantics(&mut g, &vars, pk, fk, q)?;
        Ok(g.value(s).data().to_vec())
    }
}

fn neighbor_positions<T: Scalar>(batch: &QueryBatch) -> Tensor<T> {
    let data = batch
        .neighbors
        .iter()
        .flat_map(|&j| batch.cloud[j as usize].map(T::from_f32))
        .collect();
    Tensor::matrix(batch.neighbors.len(), 3, data).expect("three columns")
}

fn repeated_queries<T: Scalar>(batch: &QueryBatch, k: usize) -> Tensor<T> {
    let data = batch
        .queries
        .iter()
        .flat_map(|q| std::iter::repeat_n(q.map(T::from_f32), k).flatten())
        .collect();
    Tensor::matrix(batch.queries.len() * k, 3, data).expect("three columns")
}

/// Inverse-distance weighting of neighbor features: the fixed-weight
/// interpolation that cannot tell apart queries with equal weights.
pub fn idw_baseline_interpolate(bundle: &NeighborBundle) -> Result<Vec<f32>> {
    bundle.check()?;
    let weights: Vec<f64> = bundle
        .positions
        .iter()
        .map(|&p| 1.0 / (vec3::dist(vec3::to_f64(bundle.query), vec3::to_f64(p)) + 1e-8))
        .collect();
    let total: f64 = weights.iter().sum();
    let w = bundle.features.cols();
    let mut out = vec![0.0f64; w];
    for (k, wk) in weights.iter().enumerate() {
        for (o, &f) in out.iter_mut().zip(bundle.features.row(k)) {
            *o += wk / total * f as f64;
        }
    }
    Ok(out.into_iter().map(|v| v as f32).collect())
}

impl RangeUdf<f32> {
    /// Per-point features of a cloud; `seed` fixes the random subsets.
    pub fn features(&self, positions: &[[f32; 3]], seed: u64) -> Result<FeatureCloud> {
        let hier = Hierarchy::build(positions, &self.config.encoder, seed)?;
        let mut g = Graph::new();
        let vars = self.params.bind(&mut g, false);
        let f = self.encode(&mut g, &vars, &hier)?;
        let features = g.value(f).clone();
        FeatureCloud::new(positions.to_vec(), features)
    }

    fn chunk_graph(
        &self,
        fc: &FeatureCloud,
        queries: &[[f32; 3]],
        semantics: bool,
        track_query: bool,
    ) -> Result<(Graph<f32>, Var, Option<Var>, Var)> {
        let k = self.config.k;
        let neighbors = fc.knn(queries, k)?;
        let w = fc.features.cols();
        let mut rows = Vec::with_capacity(neighbors.len() * w);
        for &j in &neighbors {
            rows.extend_from_slice(fc.features.row(j as usize));
        }
        let mut g = Graph::new();
        let vars = self.params.bind(&mut g, false);
        let fk = g.constant(Tensor::matrix(neighbors.len(), w, rows)?);
        let batch = QueryBatch {
            queries,
            neighbors: &neighbors,
            cloud: &fc.positions,
        };
        if semantics {
            let out = self.heads_on_rows(&mut g, &vars, fk, &batch, false)?;
            Ok((g, out.distance, Some(out.logits), out.range_input))
        } else {
            let (d, rin) = self.distance_on_rows(&mut g, &vars, fk, &batch, track_query)?;
            Ok((g, d, None, rin))
        }
    }

    /// Distances and logits for every query, evaluated in parallel chunks.
    pub fn predict(&self, fc: &FeatureCloud, queries: &[[f32; 3]]) -> Result<Prediction> {
        let c = self.config.classes;
        if queries.is_empty() {
            return Ok(Prediction {
                distances: Vec::new(),
                logits: Tensor::zeros(vec![0, c]),
            });
        }
        let parts: Vec<(Vec<f32>, Vec<f32>)> = queries
            .par_chunks(CHUNK)
            .map(|chunk| {
                let (g, d, logits, _) = self.chunk_graph(fc, chunk, true, false)?;
                let logits = logits.expect("semantic branch requested");
                Ok((g.value(d).data().to_vec(), g.value(logits).data().to_vec()))
            })
            .collect::<Result<_>>()?;
        let mut distances = Vec::with_capacity(queries.len());
        let mut logits = Vec::with_capacity(queries.len() * c);
        for (d, l) in parts {
            distances.extend(d);
            logits.extend(l);
        }
        Ok(Prediction {
            distances,
            logits: Tensor::matrix(queries.len(), c, logits)?,
        })
    }

    /// Distances only, skipping the semantic branch.
    pub fn distances(&self, fc: &FeatureCloud, queries: &[[f32; 3]]) -> Result<Vec<f32>> {
        let parts: Vec<Vec<f32>> = queries
            .par_chunks(CHUNK)
            .map(|chunk| {
                let (g, d, _, _) = self.chunk_graph(fc, chunk, false, false)?;
                Ok(g.value(d).data().to_vec())
            })
            .collect::<Result<_>>()?;
        Ok(parts.concat())
    }

    /// Distances and their gradients with respect to the query positions.
    pub fn distance_with_gradient(&self, fc: &FeatureCloud, queries: &[[f32; 3]]) -> Result<(Vec<f32>, Vec<[f64; 3]>)> {
        let parts: Vec<(Vec<f32>, Vec<[f64; 3]>)> = queries
            .par_chunks(CHUNK)
            .map(|chunk| {
                let (mut g, d, _, rin) = self.chunk_graph(fc, chunk, false, true)?;
                let values = g.value(d).data().to_vec();
                let s = g.sum(d);
                let grads = g.backward(s)?;
                Ok((values, self.query_gradients(grads.get(rin), chunk.len())))
            })
            .collect::<Result<_>>()?;
        let mut d = Vec::with_capacity(queries.len());
        let mut gr = Vec::with_capacity(queries.len());
        for (a, b) in parts {
            d.extend(a);
            gr.extend(b);
        }
        Ok((d, gr))
    }
}
