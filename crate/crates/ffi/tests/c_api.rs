use std::ffi::{CStr, CString};
use std::path::Path;
use std::ptr;

use posdistill::checkpoint::Checkpoint;
use posdistill::data::{generate, GenConfig};
use posdistill::distill::{fit, TrainConfig};
use posdistill::model::{FeatureSchema, TowerConfig};
use posdistill::ModelName;
use posdistill_ffi::*;

fn small_checkpoint(dir: &Path, name: ModelName) -> (std::path::PathBuf, Vec<f64>, posdistill::data::Dataset) {
    let schema = FeatureSchema::default();
    let gen = GenConfig {
        n_train: 400,
        n_validation: 50,
        n_test: 60,
        ..GenConfig::default()
    };
    let split = generate(&schema, &gen).unwrap();
    let cfg = TrainConfig {
        epochs: 1,
        batch_size: 64,
        ..TrainConfig::default()
    };
    let method = posdistill::config::RunConfig::default().method(name);
    let t = fit(&method, &split.train, &split.validation, &schema, &TowerConfig::default(), &cfg).unwrap();
    let expected = t.serve_examples(&split.test).unwrap();
    let path = dir.join(format!("{name}.json"));
    Checkpoint::from_trained(&t).save(&path).unwrap();
    (path, expected, split.test)
}

fn last_error() -> String {
    let p = pd_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn load_serve_free_matches_rust_serving() {
    let dir = tempfile::tempdir().unwrap();
    for name in [ModelName::Ours, ModelName::Pal] {
        let (path, expected, test) = small_checkpoint(dir.path(), name);
        let cpath = CString::new(path.to_str().unwrap()).unwrap();
        let mut model: *mut PdModel = ptr::null_mut();
        assert_eq!(unsafe { pd_model_load(cpath.as_ptr(), &mut model) }, PdStatus::Ok);
        assert!(pd_last_error().is_null());

        let mut schema = PdSchema::default();
        assert_eq!(unsafe { pd_model_schema(model, &mut schema) }, PdStatus::Ok);
        assert_eq!((schema.user_fields, schema.ctx_fields, schema.ad_fields), (2, 2, 3));
        assert_eq!(schema.num_positions, 10);

        let flat = |f: fn(&posdistill::data::Features) -> &Vec<usize>| -> Vec<usize> {
            test.iter().flat_map(|e| f(&e.features).iter().copied()).collect()
        };
        let user = flat(|f| &f.user);
        let ctx = flat(|f| &f.ctx);
        let ad = flat(|f| &f.ad);
        let beh = flat(|f| &f.behaviors);
        let lens: Vec<usize> = test.iter().map(|e| e.features.behaviors.len()).collect();
        let mut out = vec![0.0; test.len()];
        let st = unsafe {
            pd_model_serve(
                model,
                test.len(),
                user.as_ptr(),
                ctx.as_ptr(),
                ad.as_ptr(),
                beh.as_ptr(),
                lens.as_ptr(),
                out.as_mut_ptr(),
            )
        };
        assert_eq!(st, PdStatus::Ok);
        assert_eq!(out, expected);
        unsafe { pd_model_free(model) };
    }
}

#[test]
fn out_of_vocab_feature_is_invalid_argument() {
    let dir = tempfile::tempdir().unwrap();
    let (path, _, _) = small_checkpoint(dir.path(), ModelName::Backbone);
    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    let mut model: *mut PdModel = ptr::null_mut();
    assert_eq!(unsafe { pd_model_load(cpath.as_ptr(), &mut model) }, PdStatus::Ok);
    let (user, ctx, ad, lens) = ([0usize, 9999], [0usize, 0], [0usize, 0, 0], [0usize]);
    let mut out = [0.0];
    let st = unsafe {
        pd_model_serve(model, 1, user.as_ptr(), ctx.as_ptr(), ad.as_ptr(), ptr::null(), lens.as_ptr(), out.as_mut_ptr())
    };
    assert_eq!(st, PdStatus::InvalidArgument);
    assert!(last_error().contains("user[1]"), "{}", last_error());
    unsafe { pd_model_free(model) };
}

#[test]
fn missing_and_corrupt_checkpoints() {
    let mut model: *mut PdModel = ptr::null_mut();
    let missing = CString::new("/nonexistent/ck.json").unwrap();
    assert_eq!(unsafe { pd_model_load(missing.as_ptr(), &mut model) }, PdStatus::Io);
    assert!(last_error().contains("/nonexistent/ck.json"));
    assert!(model.is_null());

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"format\": \"something-else\"}").unwrap();
    let bad = CString::new(bad.to_str().unwrap()).unwrap();
    assert_eq!(unsafe { pd_model_load(bad.as_ptr(), &mut model) }, PdStatus::Artifact);

    assert_eq!(unsafe { pd_model_load(ptr::null(), &mut model) }, PdStatus::NullPointer);
    unsafe { pd_model_free(ptr::null_mut()) };
}

#[test]
fn metrics() {
    let scores = [0.8, 0.6, 0.4, 0.2];
    let labels = [1u8, 0, 1, 0];
    let mut v = 0.0;
    assert_eq!(unsafe { pd_auc(scores.as_ptr(), labels.as_ptr(), 4, &mut v) }, PdStatus::Ok);
    assert_eq!(v, 0.75);
    assert_eq!(unsafe { pd_logloss([0.5; 2].as_ptr(), labels.as_ptr(), 2, &mut v) }, PdStatus::Ok);
    assert!((v - std::f64::consts::LN_2).abs() < 1e-12);
    assert_eq!(
        unsafe { pd_auc(scores.as_ptr(), [1u8; 4].as_ptr(), 4, &mut v) },
        PdStatus::AucUndefined
    );
    assert!(last_error().contains("AUC undefined"));
}

#[test]
fn header_compiles_as_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/posdistill.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for sym in ["pd_model_load", "pd_model_free", "pd_model_serve", "pd_auc", "pd_logloss", "pd_last_error", "typedef struct PdModel PdModel"] {
        assert!(text.contains(sym), "{sym} missing from header");
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        format!(
            "#include \"{}\"\nint main(void) {{ PdModel *m = 0; return pd_model_load(\"x\", &m) == PD_STATUS_OK; }}\n",
            header.display()
        ),
    )
    .unwrap();
    match std::process::Command::new("cc").arg("-fsyntax-only").arg("-Wall").arg(&src).status() {
        Ok(st) => assert!(st.success(), "header failed to compile"),
        Err(_) => eprintln!("no C compiler found; skipping syntax check"),
    }
}
