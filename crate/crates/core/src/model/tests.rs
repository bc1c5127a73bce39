use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::tensor::{grad_check, GradCheckOptions, Graph, Tensor, Var};

fn small_config(classes: usize) -> ModelConfig {
    ModelConfig {
        classes,
        ..ModelConfig::default()
    }
}

fn random_bundle(rng: &mut ChaCha8Rng, k: usize) -> NeighborBundle {
    let mut p = || [rng.random_range(-0.5..0.5f32), rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)];
    let query = p();
    let positions = (0..k).map(|_| p()).collect();
    let feats = (0..k * 32).map(|_| rng.random_range(-1.0..1.0f32)).collect();
    NeighborBundle {
        query,
        positions,
        features: Tensor::matrix(k, 32, feats).unwrap(),
    }
}

fn permuted(b: &NeighborBundle, perm: &[usize]) -> NeighborBundle {
    let mut feats = Vec::new();
    for &i in perm {
        feats.extend_from_slice(b.features.row(i));
    }
    NeighborBundle {
        query: b.query,
        positions: perm.iter().map(|&i| b.positions[i]).collect(),
        features: Tensor::matrix(perm.len(), 32, feats).unwrap(),
    }
}

/// Random output-layer weights, since fresh models start with a flat output.
fn randomize_output<T: crate::tensor::Scalar>(m: &mut RangeUdf<T>, bias: f64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = m.params().iter().position(|p| p.name == "udf.out.w").unwrap();
    for v in m.params_mut().as_mut_slice()[w].value.data_mut() {
        *v = T::of(rng.random_range(-0.4..0.4));
    }
    m.params_mut().as_mut_slice()[w + 1].value.fill(T::of(bias));
}

fn cloud(n: usize, seed: u64) -> Vec<[f32; 3]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| [rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)])
        .collect()
}

#[test]
fn fresh_distance_head_is_flat_and_active() {
    let m = RangeUdf::<f32>::new(small_config(3), 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..20 {
        let b = random_bundle(&mut rng, 4);
        let d = m.regress_distance(&m.interpolate_udf(&b).unwrap()).unwrap();
        assert!((d as f64 - INITIAL_DISTANCE).abs() < 1e-7);
    }
}

#[test]
fn head_dimensions() {
    let m = RangeUdf::<f32>::new(small_config(5), 0).unwrap();
    assert_eq!(
        m.head_shapes(),
        vec![(9, 32), (64, 32), (32, 512), (512, 32), (32, 32), (32, 1), (35, 32), (32, 64), (64, 32), (32, 5)]
    );
    assert_eq!(m.pool_widths(), (64, 35));
    let ablated = RangeUdf::<f32>::new(
        ModelConfig {
            range_input: RangeInput::WithoutRelative,
            sem_with_q: true,
            ..small_config(5)
        },
        0,
    )
    .unwrap();
    assert_eq!(ablated.head_shapes()[0], (6, 32));
    assert_eq!(ablated.pool_widths(), (64, 38));
}

#[test]
fn range_encoding() {
    let mut m = RangeUdf::<f64>::new(small_config(3), 1).unwrap();
    let q = [0.1, 0.2, 0.3];
    let a = m.encode_range(q, q).unwrap();
    let b = m.encode_range(q, [0.1, -0.2, 0.0]).unwrap();
    assert_eq!(a.len(), 32);
    assert_ne!(a, b);
    let batch = QueryBatch {
        queries: &[q],
        neighbors: &[0],
        cloud: &[[0.4, 0.5, 0.6]],
    };
    let rin: Tensor<f64> = range_input(RangeInput::Full, &batch).unwrap();
    assert_eq!(rin.shape(), &[1, 9]);
    let expect = [0.1f32 - 0.4, 0.2 - 0.5, 0.3 - 0.6, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6];
    for (x, e) in rin.data().iter().zip(expect) {
        assert_eq!(*x, e as f64);
    }
    for p in m.params_mut().as_mut_slice() {
        p.value.fill(0.0);
    }
    assert!(m.encode_range(q, [0.0; 3]).unwrap().iter().all(|&v| v == 0.0));
}

#[test]
fn interpolation_is_a_set_function_but_sees_the_query() {
    let m = RangeUdf::<f32>::new(small_config(3), 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let b = random_bundle(&mut rng, 4);
    let base = m.interpolate_udf(&b).unwrap();
    assert_eq!(base.len(), 32);
    let p = m.interpolate_udf(&permuted(&b, &[2, 0, 3, 1])).unwrap();
    for (x, y) in base.iter().zip(&p) {
        assert!((x - y).abs() < 1e-6);
    }
    let mut moved = b.clone();
    moved.query[2] += 0.05;
    assert_ne!(m.interpolate_udf(&moved).unwrap(), base);
    let empty = NeighborBundle {
        query: b.query,
        positions: vec![],
        features: Tensor::zeros(vec![0, 32]),
    };
    assert!(matches!(m.interpolate_udf(&empty), Err(crate::Error::EmptySet(_))));
}

#[test]
fn distance_is_never_negative() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for seed in 0..10 {
        let mut m = RangeUdf::<f32>::new(small_config(3), seed).unwrap();
        randomize_output(&mut m, -0.2, seed);
        for _ in 0..1000 {
            let fu: Vec<f32> = (0..32).map(|_| rng.random_range(-3.0..3.0)).collect();
            assert!(m.regress_distance(&fu).unwrap() >= 0.0);
        }
    }
    let mut m = RangeUdf::<f32>::new(small_config(3), 0).unwrap();
    let out_bias = m
        .params()
        .iter()
        .position(|p| p.name == "udf.out.b")
        .unwrap();
    m.params_mut().as_mut_slice()[out_bias].value.fill(-1e6);
    assert_eq!(m.regress_distance(&[0.5; 32]).unwrap(), 0.0);
}

#[test]
fn semantics_ignore_query_and_order() {
    let m = RangeUdf::<f32>::new(small_config(4), 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let b = random_bundle(&mut rng, 4);
    let base = m.segment_semantics(&b).unwrap();
    assert_eq!(base.len(), 4);
    let mut moved = b.clone();
    moved.query = [0.4, -0.4, 0.1];
    assert_eq!(m.segment_semantics(&moved).unwrap(), base);
    let p = m.segment_semantics(&permuted(&b, &[3, 2, 1, 0])).unwrap();
    for (x, y) in base.iter().zip(&p) {
        assert!((x - y).abs() < 1e-6);
    }
    let with_q = RangeUdf::<f32>::new(
        ModelConfig {
            sem_with_q: true,
            ..small_config(4)
        },
        5,
    )
    .unwrap();
    assert_ne!(with_q.segment_semantics(&moved).unwrap(), with_q.segment_semantics(&b).unwrap());
}

#[test]
fn idw_limits() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut b = random_bundle(&mut rng, 4);
    b.query = b.positions[0];
    let out = idw_baseline_interpolate(&b).unwrap();
    for (o, f) in out.iter().zip(b.features.row(0)) {
        assert!((o - f).abs() < 1e-5);
    }
    b.query = [0.0; 3];
    b.positions = vec![[0.1, 0.0, 0.0], [-0.1, 0.0, 0.0], [0.0, 0.1, 0.0], [0.0, 0.0, -0.1]];
    let out = idw_baseline_interpolate(&b).unwrap();
    for (c, o) in out.iter().enumerate() {
        let mean = (0..4).map(|r| b.features.row(r)[c]).sum::<f32>() / 4.0;
        assert!((o - mean).abs() < 1e-6);
    }
}

#[test]
fn batched_prediction_matches_single_queries() {
    let m = RangeUdf::<f32>::new(small_config(3), 8).unwrap();
    let pts = cloud(256, 9);
    let fc = m.features(&pts, 0).unwrap();
    let queries = cloud(12, 10);
    let all = m.predict(&fc, &queries).unwrap();
    assert_eq!(all.logits.shape(), &[12, 3]);
    for (i, q) in queries.iter().enumerate() {
        let one = m.predict(&fc, &[*q]).unwrap();
        assert!(one.distances[0] >= 0.0);
        assert!((one.distances[0] - all.distances[i]).abs() <= 1e-6 * (1.0 + all.distances[i].abs()));
        for (a, b) in one.logits.data().iter().zip(all.logits.row(i)) {
            assert!((a - b).abs() <= 1e-5 * (1.0 + b.abs()));
        }
    }
}

#[test]
fn query_gradient_matches_differences() {
    let mut m = RangeUdf::<f32>::new(small_config(3), 11).unwrap();
    // lift the output bias so the rectifier is active
    randomize_output(&mut m, 1.0, 11);
    let pts = cloud(256, 12);
    let fc = m.features(&pts, 0).unwrap();
    let m64 = m.cast::<f64>();
    let queries = cloud(6, 13);
    let (_, grads) = m.distance_with_gradient(&fc, &queries).unwrap();
    let h = 1e-4;
    for (q, gr) in queries.iter().zip(&grads) {
        let nb = fc.bundle(*q, 4).unwrap();
        for a in 0..3 {
            let mut hi = nb.clone();
            let mut lo = nb.clone();
            hi.query[a] += h as f32;
            lo.query[a] -= h as f32;
            let dh = m64.regress_distance(&m64.interpolate_udf(&hi).unwrap()).unwrap();
            let dl = m64.regress_distance(&m64.interpolate_udf(&lo).unwrap()).unwrap();
            let step = (hi.query[a] - lo.query[a]) as f64;
            let numeric = (dh - dl) / step;
            assert!(
                (numeric - gr[a]).abs() < 2e-2 * (1.0 + numeric.abs()),
                "axis {a}: numeric {numeric} analytic {}",
                gr[a]
            );
        }
    }
}

/// Loss through both heads with the encoder output frozen; `vars` holds a
/// placeholder for every encoder parameter.
fn head_loss(
    model: &RangeUdf<f64>,
    values: &[Tensor<f64>],
    head_from: usize,
    feats: &Tensor<f64>,
    batch: &QueryBatch,
    targets: &[f64],
    labels: &[u32],
) -> (f64, Vec<bool>, Vec<Var>, Graph<f64>, Var) {
    let mut g = Graph::new();
    let dummy = g.constant(Tensor::zeros(vec![1]));
    let mut vars = vec![dummy; head_from];
    vars.extend(values.iter().map(|v| g.param(v.clone())));
    let f = g.constant(feats.clone());
    let out = model.heads(&mut g, &vars, f, batch, false).unwrap();
    let t = g.constant(Tensor::matrix(targets.len(), 1, targets.to_vec()).unwrap());
    let l1 = g.l1(out.distance, t).unwrap();
    let ce = g.cross_entropy(out.logits, labels, None).unwrap();
    let total = g.add(l1, ce).unwrap();
    (g.value(total).data()[0], g.kink_pattern(), vars, g, total)
}

#[test]
fn head_stack_gradient_check() {
    for seed in 0..2u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let mut model = RangeUdf::<f64>::new(small_config(3), seed).unwrap();
        randomize_output(&mut model, 0.5, seed);
        let head_from = model.params().iter().position(|p| p.name == "range.w").unwrap();
        let values: Vec<Tensor<f64>> = model.params().iter().skip(head_from).map(|p| p.value.clone()).collect();
        let pts = cloud(10, seed);
        let feats = Tensor::matrix(10, 32, (0..320).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let queries = cloud(2, seed + 50);
        let neighbors = vec![0, 3, 5, 7, 1, 2, 8, 9];
        let batch = QueryBatch {
            queries: &queries,
            neighbors: &neighbors,
            cloud: &pts,
        };
        let targets = [0.02, 0.3];
        let labels = [1, 2];
        let (_, _, vars, g, total) = head_loss(&model, &values, head_from, &feats, &batch, &targets, &labels);
        let grads = g.backward(total).unwrap();
        let analytic: Vec<Tensor<f64>> = vars[head_from..]
            .iter()
            .zip(&values)
            .map(|(v, x)| grads.get(*v).cloned().unwrap_or_else(|| Tensor::zeros(x.shape().to_vec())))
            .collect();
        let opts = GradCheckOptions {
            step: 1e-3,
            max_per_tensor: 64,
            ..GradCheckOptions::default()
        };
        let report = grad_check(&values, &analytic, opts, |p| {
            let (l, k, ..) = head_loss(&model, p, head_from, &feats, &batch, &targets, &labels);
            Ok((l, k))
        })
        .unwrap();
        assert!(report.checked > 500, "{report:?}");
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }
}
