use posdistill::nn::{grad_check, AdamConfig, AdamState, Dense, FinalActivation, Mlp, ParamStore, Tape};
use posdistill::rng::stream;
use posdistill::tensor::Tensor;
use proptest::prelude::*;
use rand::Rng;

const EPS: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn random_input(seed: u64, rows: usize, cols: usize) -> Vec<f64> {
    let mut rng = stream(seed, "test/input");
    (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn labels(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = stream(seed, "test/labels");
    (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { 0.0 }).collect()
}

#[test]
fn dense_sigmoid_ce_gradients_over_ten_seeds() {
    for seed in 0..10 {
        let mut store = ParamStore::new();
        let mlp = Mlp::register(&mut store, "m", 5, &[4, 1], FinalActivation::Linear, &mut stream(seed, "p")).unwrap();
        let x = random_input(seed, 6, 5);
        let y = labels(seed, 6);
        let err = grad_check(
            |t: &mut Tape| {
                let xv = t.constant(6, 5, x.clone())?;
                let out = mlp.forward(t, xv)?;
                let p = t.sigmoid(out);
                let yv = t.constant(6, 1, y.clone())?;
                let l = t.bce(p, yv, 1e-7)?;
                Ok(t.mean(l))
            },
            &mut store,
            EPS,
        )
        .unwrap();
        assert!(err < TOL, "seed {seed}: {err}");
    }
}

#[test]
fn embedding_gradients_over_ten_seeds() {
    for seed in 0..10 {
        let mut store = ParamStore::new();
        let tab = store.insert_uniform("emb", vec![7, 3], 3, &mut stream(seed, "p")).unwrap();
        let idx = [0usize, 3, 3, 6, 1];
        let target = random_input(seed, 5, 3);
        let err = grad_check(
            |t: &mut Tape| {
                let tv = t.param(tab);
                let e = t.gather(tv, &idx)?;
                let c = t.constant(5, 3, target.clone())?;
                let d = t.sub(e, c)?;
                let sq = t.mul(d, d)?;
                Ok(t.mean(sq))
            },
            &mut store,
            EPS,
        )
        .unwrap();
        assert!(err < TOL, "seed {seed}: {err}");
    }
}

#[test]
fn embedding_lookup_examples() {
    let mut store = ParamStore::new();
    let tab = store
        .insert("t", Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]))
        .unwrap();
    let mut t = Tape::new(&store);
    let tv = t.param(tab);
    let row1 = t.gather(tv, &[1]).unwrap();
    let row0 = t.gather(tv, &[0]).unwrap();
    assert_eq!(t.value(row1), &[3.0, 4.0]);
    assert_eq!(t.value(row0), &[1.0, 2.0]);
    let s = t.sum(row1);
    let g = t.backward(s).unwrap();
    assert_eq!(g.wrt(tv).unwrap(), &[0.0, 0.0, 1.0, 1.0]);
}

#[test]
fn out_of_range_lookup_names_index_and_vocab() {
    let mut store = ParamStore::new();
    let tab = store.insert("t", Tensor::zeros(vec![4, 2])).unwrap();
    let mut t = Tape::new(&store);
    let tv = t.param(tab);
    let msg = t.gather(tv, &[4]).unwrap_err().to_string();
    assert!(msg.contains('4') && msg.contains("vocabulary size 4"), "{msg}");
}

#[test]
fn adam_lr_zero_is_bitwise_noop() {
    let mut store = ParamStore::new();
    let mlp = Mlp::register(&mut store, "m", 3, &[2, 1], FinalActivation::Linear, &mut stream(1, "p")).unwrap();
    let before: Vec<Tensor> = store.ids().map(|id| store.value(id).clone()).collect();
    let grads = {
        let mut t = Tape::new(&store);
        let x = t.constant(2, 3, vec![0.3, -0.2, 0.9, 1.0, 0.5, -0.4]).unwrap();
        let o = mlp.forward(&mut t, x).unwrap();
        let s = t.sum(o);
        t.backward(s).unwrap()
    };
    store.accumulate(&grads);
    let mut state = AdamState::new(&store);
    state.step(&mut store, &AdamConfig { lr: 0.0, ..AdamConfig::default() });
    let after: Vec<Tensor> = store.ids().map(|id| store.value(id).clone()).collect();
    assert_eq!(before, after);
    assert_eq!(state.step_count(), 1);
}

#[test]
fn forward_is_deterministic() {
    let mut store = ParamStore::new();
    let d = Dense::register(&mut store, "d", 4, 3, &mut stream(9, "p")).unwrap();
    let x = random_input(2, 5, 4);
    let run = || {
        let mut t = Tape::new(&store);
        let xv = t.constant(5, 4, x.clone()).unwrap();
        let o = d.forward(&mut t, xv).unwrap();
        t.value(o).to_vec()
    };
    assert_eq!(run(), run());
}

#[test]
fn inference_shares_a_frozen_store_across_threads() {
    let mut store = ParamStore::new();
    let d = Dense::register(&mut store, "d", 4, 3, &mut stream(9, "p")).unwrap();
    let x = random_input(2, 5, 4);
    let serial = {
        let mut t = Tape::new(&store);
        let xv = t.constant(5, 4, x.clone()).unwrap();
        let o = d.forward(&mut t, xv).unwrap();
        t.value(o).to_vec()
    };
    std::thread::scope(|s| {
        let hs: Vec<_> = (0..4)
            .map(|_| {
                s.spawn(|| {
                    let mut t = Tape::new(&store);
                    let xv = t.constant(5, 4, x.clone()).unwrap();
                    let o = d.forward(&mut t, xv).unwrap();
                    t.value(o).to_vec()
                })
            })
            .collect();
        for h in hs {
            assert_eq!(h.join().unwrap(), serial);
        }
    });
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn backward_is_linear_in_the_loss(seed in 0u64..1000, rows in 1usize..6) {
        let mut store = ParamStore::new();
        let mlp = Mlp::register(&mut store, "m", 3, &[4, 2], FinalActivation::Linear, &mut stream(seed, "p")).unwrap();
        let x = random_input(seed, rows, 3);
        // loss_a = Σ out, loss_b = Σ relu(out)²
        let grads = |which: u8| {
            let mut t = Tape::new(&store);
            let xv = t.constant(rows, 3, x.clone()).unwrap();
            let o = mlp.forward(&mut t, xv).unwrap();
            let a = t.sum(o);
            let r = t.relu(o);
            let r2 = t.mul(r, r).unwrap();
            let b = t.sum(r2);
            let loss = match which {
                0 => a,
                1 => b,
                _ => t.add(a, b).unwrap(),
            };
            let g = t.backward(loss).unwrap();
            g.params().map(|(_, v)| v.to_vec()).collect::<Vec<_>>()
        };
        let (ga, gb, gs) = (grads(0), grads(1), grads(2));
        for ((a, b), s) in ga.iter().zip(&gb).zip(&gs) {
            for ((x, y), z) in a.iter().zip(b).zip(s) {
                prop_assert!((x + y - z).abs() <= 1e-12 * (1.0 + z.abs()));
            }
        }
    }

    #[test]
    fn sigmoid_stays_in_open_interval(x in -700.0f64..700.0) {
        let s = posdistill::nn::sigmoid(x);
        prop_assert!(s.is_finite() && (0.0..=1.0).contains(&s));
    }
}
