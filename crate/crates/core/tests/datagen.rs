use std::path::Path;

use posdistill::data::{
    click_probability, empirical_ctr_by_position, generate, load_jsonl, load_split, propensities, sample_click,
    write_jsonl, write_split, GenConfig, RelevanceModel,
};
use posdistill::eval::{auc, relevance_auc};
use posdistill::model::FeatureSchema;
use posdistill::rng::stream;
use serde::{Deserialize, Serialize};

#[derive(Debug, Serialize, Deserialize, PartialEq)]
struct CtrGolden {
    n: usize,
    seed: u64,
    eta: f64,
    ctr: Vec<f64>,
    first_over_last: f64,
}

fn golden_path() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/ctr_by_position_1e6.json")
}

#[test]
fn million_impression_ctr_matches_golden() {
    let schema = FeatureSchema::default();
    let gen = GenConfig {
        n_train: 1_000_000,
        n_validation: 0,
        n_test: 0,
        ..GenConfig::default()
    };
    let split = generate(&schema, &gen).unwrap();
    let rows = empirical_ctr_by_position(&split.train, schema.num_positions);
    let ctr: Vec<f64> = rows.iter().map(|r| r.ctr.unwrap()).collect();
    let measured = CtrGolden {
        n: gen.n_train,
        seed: gen.seed,
        eta: gen.eta,
        first_over_last: ctr[0] / ctr[9],
        ctr,
    };
    if std::env::var_os("POSDISTILL_BLESS").is_some() {
        std::fs::create_dir_all(golden_path().parent().unwrap()).unwrap();
        std::fs::write(golden_path(), serde_json::to_string_pretty(&measured).unwrap() + "\n").unwrap();
    }
    let golden: CtrGolden = serde_json::from_str(&std::fs::read_to_string(golden_path()).unwrap()).unwrap();
    assert_eq!(measured, golden);
    assert!(golden.first_over_last > 3.0);
    assert!(golden.ctr.windows(2).all(|w| w[1] < w[0]), "{:?}", golden.ctr);
}

#[test]
fn propensity_limits() {
    assert_eq!(propensities(0.0, 10), vec![1.0; 10]);
    let p = propensities(1.0, 4);
    assert_eq!(p[0], 1.0);
    assert!((p[2] - 1.0 / 3.0).abs() < 1e-15);
    let p = propensities(0.7, 10);
    assert!(p.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn click_replay_matches_examination_model() {
    let schema = FeatureSchema::default();
    let gen = GenConfig {
        n_train: 100,
        n_validation: 0,
        n_test: 0,
        ..GenConfig::default()
    };
    let split = generate(&schema, &gen).unwrap();
    let prop = propensities(gen.eta, schema.num_positions);
    for e in split.train.iter().take(5) {
        let rel = e.rel.unwrap();
        let p = prop[e.pos] * rel;
        assert_eq!(click_probability(&prop, e.pos, rel), p);
        let n = 100_000;
        let mut rng = stream(e.id, "test/replay");
        let hits = (0..n).filter(|_| sample_click(&mut rng, &prop, e.pos, rel)).count();
        let se = (p * (1.0 - p) / n as f64).sqrt();
        let freq = hits as f64 / n as f64;
        assert!((freq - p).abs() <= 3.0 * se, "pos {} rel {rel}: {freq} vs {p}", e.pos);
    }
}

#[test]
fn same_seed_gives_identical_bytes() {
    let schema = FeatureSchema::default();
    let gen = GenConfig {
        n_train: 3000,
        n_validation: 300,
        n_test: 300,
        seed: 9,
        ..GenConfig::default()
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    write_split(a.path(), &generate(&schema, &gen).unwrap()).unwrap();
    write_split(b.path(), &generate(&schema, &gen).unwrap()).unwrap();
    for f in ["train.jsonl", "validation.jsonl", "test.jsonl", "manifest.json"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let other = generate(&schema, &GenConfig { seed: 10, ..gen }).unwrap();
    assert_ne!(other.train, generate(&schema, &gen).unwrap().train);
}

#[test]
fn round_trip_preserves_metrics() {
    let schema = FeatureSchema::default();
    let gen = GenConfig {
        n_train: 2000,
        n_validation: 200,
        n_test: 500,
        ..GenConfig::default()
    };
    let split = generate(&schema, &gen).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_split(dir.path(), &split).unwrap();
    let back = load_split(dir.path(), &schema).unwrap();
    assert_eq!(back.manifest, split.manifest);

    let model = RelevanceModel::draw(&schema, &gen);
    let metric = |d: &[posdistill::data::Example]| {
        let s: Vec<f64> = d.iter().map(|e| model.logit(&e.features)).collect();
        let y: Vec<bool> = d.iter().map(|e| e.click).collect();
        let r: Vec<f64> = d.iter().map(|e| e.rel.unwrap()).collect();
        (auc(&s, &y).unwrap().to_bits(), relevance_auc(&s, &r).unwrap().to_bits())
    };
    assert_eq!(metric(&split.test), metric(&back.test));

    let path = dir.path().join("again.jsonl");
    write_jsonl(&path, &back.test).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(dir.path().join("test.jsonl")).unwrap());
    assert_eq!(load_jsonl(&path, &schema).unwrap().len(), 500);
}

#[test]
fn position_correlates_with_relevance() {
    let schema = FeatureSchema::default();
    let split = generate(
        &schema,
        &GenConfig {
            n_train: 20_000,
            n_validation: 0,
            n_test: 0,
            ..GenConfig::default()
        },
    )
    .unwrap();
    let mean_rel = |k: usize| {
        let v: Vec<f64> = split.train.iter().filter(|e| e.pos == k).map(|e| e.rel.unwrap()).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    assert!(mean_rel(0) > mean_rel(9));
}
