mod common;

use common::{random_examples, random_features, tiny_schema, tiny_tower};
use posdistill::distill::{DistillConfig, DistillVariant};
use posdistill::method::Method;
use posdistill::model::{
    concat_features, cross_layer, dcn_forward, din_pool, student_forward, teacher_forward, Batch, Components,
    CrossLayer, FeatureSchema, Network, TowerConfig,
};
use posdistill::nn::{grad_check, FinalActivation, Mlp, ParamStore, Tape};
use posdistill::rng::stream;
use posdistill::tensor::Tensor;
use proptest::prelude::*;

fn attention(store: &mut ParamStore, d: usize, zero: bool) -> Mlp {
    let mlp = Mlp::register(store, "attn", 4 * d, &[3, 1], FinalActivation::Linear, &mut stream(4, "attn")).unwrap();
    if zero {
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            store.value_mut(id).values_mut().fill(0.0);
        }
    }
    mlp
}

fn pool(store: &ParamStore, mlp: &Mlp, items: &[Vec<f64>], lens: &[usize], targets: &[Vec<f64>]) -> Vec<f64> {
    let mut t = Tape::new(store);
    let b = if items.is_empty() {
        let d = targets[0].len();
        t.constant(0, d, vec![]).unwrap()
    } else {
        t.constant(items.len(), items[0].len(), items.concat()).unwrap()
    };
    let tg = t.constant(targets.len(), targets[0].len(), targets.concat()).unwrap();
    let out = din_pool(&mut t, b, lens, tg, mlp, true).unwrap();
    t.value(out).to_vec()
}

#[test]
fn din_empty_sequence_pools_to_zero() {
    let mut store = ParamStore::new();
    let mlp = attention(&mut store, 2, false);
    assert_eq!(pool(&store, &mlp, &[], &[0], &[vec![0.3, -0.7]]), vec![0.0, 0.0]);
}

#[test]
fn din_identical_items_return_that_item() {
    let mut store = ParamStore::new();
    let mlp = attention(&mut store, 2, false);
    let e = vec![0.25, -1.5];
    let out = pool(&store, &mlp, &[e.clone(), e.clone()], &[2], &[vec![1.0, 2.0]]);
    for (o, x) in out.iter().zip(&e) {
        assert!((o - x).abs() < 1e-15);
    }
}

#[test]
fn din_zero_attention_is_uniform_average() {
    let mut store = ParamStore::new();
    let mlp = attention(&mut store, 2, true);
    let out = pool(&store, &mlp, &[vec![1.0, 0.0], vec![0.0, 3.0]], &[2], &[vec![0.5, 0.5]]);
    assert_eq!(out, vec![0.5, 1.5]);
}

#[test]
fn din_rejects_segment_lengths_that_do_not_cover_items() {
    let mut store = ParamStore::new();
    let mlp = attention(&mut store, 2, false);
    let mut t = Tape::new(&store);
    let b = t.constant(3, 2, vec![0.0; 6]).unwrap();
    let tg = t.constant(1, 2, vec![0.0; 2]).unwrap();
    assert!(din_pool(&mut t, b, &[2], tg, &mlp, true).is_err());
}

fn cross(x0: &[f64], xl: &[f64], w: &[f64], b: &[f64]) -> Vec<f64> {
    let store = ParamStore::new();
    let n = x0.len();
    let mut t = Tape::new(&store);
    let x0v = t.constant(1, n, x0.to_vec()).unwrap();
    let xlv = t.constant(1, n, xl.to_vec()).unwrap();
    let wv = t.constant(n, 1, w.to_vec()).unwrap();
    let bv = t.constant(1, n, b.to_vec()).unwrap();
    let o = cross_layer(&mut t, x0v, xlv, wv, bv).unwrap();
    t.value(o).to_vec()
}

#[test]
fn cross_layer_examples() {
    assert_eq!(cross(&[1.0, 2.0], &[3.0, -4.0], &[0.0, 0.0], &[0.0, 0.0]), vec![3.0, -4.0]);
    assert_eq!(cross(&[1.0, 0.0], &[1.0, 0.0], &[1.0, 0.0], &[0.0, 0.0]), vec![2.0, 0.0]);
    assert_eq!(cross(&[0.0, 0.0], &[3.0, 1.0], &[0.7, -0.2], &[0.5, 0.25]), vec![3.5, 1.25]);
}

#[test]
fn cross_layer_dim_mismatch_is_error() {
    let store = ParamStore::new();
    let mut t = Tape::new(&store);
    let x = t.constant(1, 3, vec![0.0; 3]).unwrap();
    let w = t.constant(2, 1, vec![0.0; 2]).unwrap();
    let b = t.constant(1, 3, vec![0.0; 3]).unwrap();
    assert!(cross_layer(&mut t, x, x, w, b).is_err());
}

#[test]
fn dcn_examples() {
    let mut store = ParamStore::new();
    let w = store.insert("w", Tensor::new(vec![3, 1], vec![1.0, 2.0, -1.0]).unwrap()).unwrap();
    let b = store.insert("b", Tensor::vector(vec![0.1, 0.2, 0.3])).unwrap();
    let wz = store.insert("wz", Tensor::zeros(vec![3, 1])).unwrap();
    let bz = store.insert("bz", Tensor::zeros(vec![3])).unwrap();
    let mut t = Tape::new(&store);
    let f1 = t.constant(1, 1, vec![1.0]).unwrap();
    let f2 = t.constant(1, 2, vec![2.0, 3.0]).unwrap();

    let none = dcn_forward(&mut t, &[f1, f2], &[]).unwrap();
    assert_eq!(t.value(none), &[1.0, 2.0, 3.0]);
    let ident = dcn_forward(&mut t, &[f1, f2], &[CrossLayer { w: wz, b: bz }]).unwrap();
    assert_eq!(t.value(ident), &[1.0, 2.0, 3.0]);
    // xᵀw = 1 + 4 − 3 = 2 → x0·2 + b + x0
    let one = dcn_forward(&mut t, &[f1, f2], &[CrossLayer { w, b }]).unwrap();
    let expect = [3.1, 6.2, 9.3];
    for (o, e) in t.value(one).iter().zip(expect) {
        assert!((o - e).abs() < 1e-12);
    }
}

#[test]
fn concat_examples_and_gradient() {
    let store = ParamStore::new();
    let mut t = Tape::new(&store);
    let a = t.constant(1, 1, vec![1.0]).unwrap();
    let b = t.constant(1, 2, vec![2.0, 3.0]).unwrap();
    let h = concat_features(&mut t, a, b).unwrap();
    assert_eq!(t.value(h), &[1.0, 2.0, 3.0]);
    let za = t.constant(1, 2, vec![0.0; 2]).unwrap();
    let zb = t.constant(1, 3, vec![0.0; 3]).unwrap();
    let z = concat_features(&mut t, za, zb).unwrap();
    assert_eq!(t.value(z), &[0.0; 5]);
    let s = t.sum(h);
    let g = t.backward(s).unwrap();
    assert_eq!(g.wrt(a).unwrap(), &[1.0]);
    assert_eq!(g.wrt(b).unwrap(), &[1.0, 1.0]);
}

fn distill_net(schema: &FeatureSchema, tower: &TowerConfig, seed: u64) -> (Network, ParamStore) {
    Network::init(schema, tower, Method::Distill(DistillConfig::default()).components(), seed).unwrap()
}

#[test]
fn zero_weight_towers_output_one_half() {
    let schema = tiny_schema();
    let tower = tiny_tower();
    let (net, mut params) = distill_net(&schema, &tower, 0);
    let ids: Vec<_> = params.ids().filter(|&id| params.name(id).starts_with("teacher") || params.name(id).starts_with("student")).collect();
    for id in ids {
        params.value_mut(id).values_mut().fill(0.0);
    }
    let ex = random_examples(&schema, 5, 1);
    let batch = Batch::from_examples(&ex);
    let mut t = Tape::new(&params);
    let base = net.base_forward(&mut t, &batch).unwrap();
    let (tw, table) = net.teacher().unwrap();
    let yt = teacher_forward(&mut t, base.h_s, &batch.positions, table, tw).unwrap();
    let ys = student_forward(&mut t, base.h_s, net.student().unwrap()).unwrap();
    assert!(t.value(yt.prob).iter().all(|&p| p == 0.5));
    assert!(t.value(ys.prob).iter().all(|&p| p == 0.5));
    assert_eq!(t.shape(yt.z), t.shape(ys.z));
}

#[test]
fn teacher_is_position_sensitive() {
    let schema = FeatureSchema::default();
    let (net, params) = distill_net(&schema, &TowerConfig::default(), 3);
    let ex = random_examples(&schema, 1, 2);
    let batch = Batch::from_examples(&ex);
    let mut t = Tape::new(&params);
    let base = net.base_forward(&mut t, &batch).unwrap();
    let (tw, table) = net.teacher().unwrap();
    let a = teacher_forward(&mut t, base.h_s, &[1], table, tw).unwrap();
    let b = teacher_forward(&mut t, base.h_s, &[9], table, tw).unwrap();
    assert_ne!(t.value(a.prob), t.value(b.prob));
    let bad = teacher_forward(&mut t, base.h_s, &[11], table, tw);
    assert!(bad.is_err());
}

#[test]
fn student_is_deterministic() {
    let schema = FeatureSchema::default();
    let (net, params) = distill_net(&schema, &TowerConfig::default(), 3);
    let ex = random_examples(&schema, 3, 2);
    let run = || {
        let batch = Batch::from_examples(&ex);
        let mut t = Tape::new(&params);
        let base = net.base_forward(&mut t, &batch).unwrap();
        let y = student_forward(&mut t, base.h_s, net.student().unwrap()).unwrap();
        t.value(y.prob).to_vec()
    };
    assert_eq!(run(), run());
}

#[test]
fn towers_are_finite_on_1000_random_examples() {
    let schema = FeatureSchema::default();
    let (net, params) = distill_net(&schema, &TowerConfig::default(), 7);
    let ex = random_examples(&schema, 1000, 11);
    let batch = Batch::from_examples(&ex);
    let mut t = Tape::new(&params);
    let base = net.base_forward(&mut t, &batch).unwrap();
    let (tw, table) = net.teacher().unwrap();
    let yt = teacher_forward(&mut t, base.h_s, &batch.positions, table, tw).unwrap();
    let ys = student_forward(&mut t, base.h_s, net.student().unwrap()).unwrap();
    for v in [yt.prob, ys.prob] {
        assert!(t.value(v).iter().all(|p| p.is_finite() && *p > 0.0 && *p < 1.0));
    }
    for v in [yt.z, ys.z, base.h_s] {
        assert!(t.value(v).iter().all(|p| p.is_finite()));
    }
}

#[test]
fn full_graph_gradient_check() {
    let schema = tiny_schema();
    let tower = tiny_tower();
    for variant in [DistillVariant::Logit, DistillVariant::Feature] {
        // Finite differences see the teacher path inside the distill term,
        // so the check runs on the undetached graph.
        let method = Method::Distill(DistillConfig {
            teacher_stop_gradient: false,
            ..DistillConfig::new(variant, 0.7).unwrap()
        });
        for seed in 0..3 {
            let (net, mut params) = Network::init(&schema, &tower, method.components(), seed).unwrap();
            let ex = random_examples(&schema, 6, seed);
            let batch = Batch::from_examples(&ex);
            let err = grad_check(
                |t: &mut Tape| {
                    let mut rng = stream(seed, "gc");
                    Ok(method.objective(t, &net, &batch, &mut rng)?.0)
                },
                &mut params,
                1e-5,
            )
            .unwrap();
            assert!(err < 1e-4, "{variant:?} seed {seed}: {err}");
        }
    }
}

#[test]
fn bind_rejects_unknown_and_missing_parameters() {
    let schema = tiny_schema();
    let tower = tiny_tower();
    let comps = Components {
        student: true,
        ..Default::default()
    };
    let (_, mut params) = Network::init(&schema, &tower, comps, 0).unwrap();
    assert!(Network::bind(&schema, &tower, comps, &params).is_ok());
    let with_pos = Components {
        position: true,
        ..comps
    };
    let e = Network::bind(&schema, &tower, with_pos, &params).unwrap_err();
    assert!(e.to_string().contains("pos.emb"), "{e}");
    params.insert("extra.w", Tensor::zeros(vec![1])).unwrap();
    let e = Network::bind(&schema, &tower, comps, &params).unwrap_err();
    assert!(e.to_string().contains("extra.w"), "{e}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn attention_weights_sum_to_one(seed in 0u64..10_000) {
        let schema = FeatureSchema::default();
        let (net, params) = distill_net(&schema, &TowerConfig::default(), seed % 5);
        let mut rng = stream(seed, "prop/features");
        let feats: Vec<_> = (0..4).map(|_| random_features(&mut rng, &schema)).collect();
        let batch = Batch::from_features(&feats);
        let mut t = Tape::new(&params);
        let base = net.base_forward(&mut t, &batch).unwrap();
        let w = t.pool_weights(base.h_din).unwrap();
        let mut off = 0;
        for f in &feats {
            let n = f.behaviors.len();
            if n > 0 {
                let s: f64 = w[off..off + n].iter().sum();
                prop_assert!((s - 1.0).abs() < 1e-12, "sum {}", s);
            }
            off += n;
        }
    }
}
