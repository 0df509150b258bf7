use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use raven_core::data::{generate_synthetic, write_dataset, SyntheticSpec};
use raven_core::model::{shift_embedding, ModelConfig, RavenModel as CoreModel};
use raven_core::training::{evaluate, MetricsOptions};
use raven_ffi::*;

struct Fixture {
    dir: tempfile::TempDir,
    core: CoreModel,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let spec = SyntheticSpec {
            train_size: 6,
            valid_size: 2,
            test_size: 12,
            ..SyntheticSpec::default()
        };
        let splits = generate_synthetic(&spec).unwrap();
        write_dataset(&dir.path().join("test.jsonl"), &splits.test).unwrap();
        let cfg = ModelConfig {
            visual_hidden: 4,
            acoustic_hidden: 4,
            utterance_hidden: 6,
            seed: 8,
            ..ModelConfig::new(spec.embedding_dim, spec.visual_dim, spec.acoustic_dim)
        };
        let core = CoreModel::new(cfg).unwrap();
        core.save(&dir.path().join("model.ckpt")).unwrap();
        Fixture { dir, core }
    }

    fn c_path(&self, name: &str) -> CString {
        CString::new(self.dir.path().join(name).to_str().unwrap()).unwrap()
    }
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(raven_last_error()) }.to_str().unwrap().to_string()
}

unsafe fn load(f: &Fixture) -> (*mut RavenModel, *mut RavenDataset) {
    let mut model = ptr::null_mut();
    assert_eq!(raven_model_load(f.c_path("model.ckpt").as_ptr(), &mut model), RavenStatus::Ok);
    let mut data = ptr::null_mut();
    assert_eq!(raven_dataset_load(f.c_path("test.jsonl").as_ptr(), model, &mut data), RavenStatus::Ok);
    (model, data)
}

#[test]
fn predictions_match_the_library_bitwise() {
    let f = Fixture::new();
    let utts = raven_core::data::load_dataset(&f.dir.path().join("test.jsonl"), &Default::default()).unwrap();
    unsafe {
        let (model, data) = load(&f);
        assert_eq!(raven_dataset_len(data), 12);
        let mut dim = 0;
        assert_eq!(raven_model_output_dim(model, &mut dim), RavenStatus::Ok);
        assert_eq!(dim, 1);
        for (i, u) in utts.iter().enumerate() {
            let mut out = [0.0f64; 1];
            assert_eq!(raven_model_predict(model, data, i, out.as_mut_ptr(), 1), RavenStatus::Ok);
            assert_eq!(out[0].to_bits(), f.core.predict(u).unwrap().output[0].to_bits());
        }

        let mut m = std::mem::zeroed::<RavenMetrics>();
        assert_eq!(raven_model_evaluate(model, data, 2, &mut m), RavenStatus::Ok);
        let want = evaluate(&f.core, &utts, 1, &MetricsOptions::default()).unwrap();
        assert_eq!(m.count, 12);
        assert_eq!(m.mae, want.metrics.mae);
        assert_eq!(m.loss, want.loss);
        assert_eq!(m.has_acc7, 1);
        assert_eq!(m.acc7, want.metrics.acc7.unwrap());
        assert_eq!(m.has_pearson, i32::from(want.metrics.pearson.is_some()));

        raven_dataset_free(data);
        raven_model_free(model);
    }
    assert_eq!(last_error(), "");
}

#[test]
fn errors_set_status_and_message() {
    let f = Fixture::new();
    unsafe {
        let mut model = ptr::null_mut();
        assert_eq!(raven_model_load(ptr::null(), &mut model), RavenStatus::InvalidArgument);
        assert!(last_error().contains("null"));
        assert!(model.is_null());

        let missing = f.c_path("missing.ckpt");
        assert_eq!(raven_model_load(missing.as_ptr(), &mut model), RavenStatus::Io);
        assert!(last_error().contains("missing.ckpt"), "{}", last_error());

        std::fs::write(f.dir.path().join("junk.ckpt"), b"not a checkpoint").unwrap();
        assert_eq!(raven_model_load(f.c_path("junk.ckpt").as_ptr(), &mut model), RavenStatus::Parse);

        let (model, data) = load(&f);
        let mut out = [0.0f64; 1];
        assert_eq!(raven_model_predict(model, data, 99, out.as_mut_ptr(), 1), RavenStatus::IndexOutOfRange);
        assert!(last_error().contains("99"));
        assert_eq!(raven_model_predict(model, data, 0, out.as_mut_ptr(), 0), RavenStatus::BufferTooSmall);
        assert_eq!(raven_model_predict(ptr::null(), data, 0, out.as_mut_ptr(), 1), RavenStatus::InvalidArgument);
        assert_eq!(raven_model_set_beta(model, -1.0), RavenStatus::InvalidArgument);
        assert_eq!(raven_model_set_beta(model, 0.0), RavenStatus::Ok);

        std::fs::write(f.dir.path().join("bad.jsonl"), "{\"id\": 3}\n").unwrap();
        let mut bad = ptr::null_mut();
        assert_eq!(raven_dataset_load(f.c_path("bad.jsonl").as_ptr(), model, &mut bad), RavenStatus::Parse);
        assert!(last_error().contains("line 1"), "{}", last_error());
        assert!(bad.is_null());
        assert_eq!(raven_dataset_len(ptr::null()), 0);

        raven_dataset_free(data);
        raven_model_free(model);
        raven_model_free(ptr::null_mut());
        raven_dataset_free(ptr::null_mut());
    }
}

#[test]
fn shift_embedding_matches_library() {
    let e = [0.3, -1.2, 0.5];
    let h = [2.0, 1.0, -4.0];
    let mut out = [0.0; 3];
    let mut alpha = 0.0;
    unsafe {
        assert_eq!(
            raven_shift_embedding(e.as_ptr(), h.as_ptr(), 3, 0.5, out.as_mut_ptr(), &mut alpha),
            RavenStatus::Ok
        );
    }
    let (want, a) = shift_embedding(&e, &h, 0.5).unwrap();
    assert_eq!(out.to_vec(), want);
    assert_eq!(alpha, a);
    assert!(alpha < 1.0);
    unsafe {
        assert_eq!(
            raven_shift_embedding(e.as_ptr(), h.as_ptr(), 0, 0.5, out.as_mut_ptr(), &mut alpha),
            RavenStatus::InvalidArgument
        );
        assert_eq!(
            raven_shift_embedding(e.as_ptr(), h.as_ptr(), 3, f64::NAN, out.as_mut_ptr(), &mut alpha),
            RavenStatus::InvalidArgument
        );
    }
}

#[test]
fn version_is_package_version() {
    let v = unsafe { CStr::from_ptr(raven_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

fn header() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include/raven.h")
}

#[test]
fn header_declares_the_interface() {
    let text = std::fs::read_to_string(header()).unwrap();
    for name in [
        "typedef struct RavenModel RavenModel;",
        "typedef struct RavenDataset RavenDataset;",
        "RAVEN_STATUS_OK = 0",
        "RAVEN_STATUS_PANIC = 7",
        "RavenStatus raven_model_load(const char *path, RavenModel **out);",
        "RavenStatus raven_model_predict(",
        "RavenStatus raven_shift_embedding(",
        "const char *raven_last_error(void);",
        "int32_t has_acc2;",
    ] {
        assert!(text.contains(name), "missing `{name}`");
    }
}

const C_PROGRAM: &str = r#"
#include <math.h>
#include <stdio.h>
#include "raven.h"

int main(void) {
    double e[2] = {3.0, 4.0}, h[2] = {0.0, 10.0}, out[2], alpha;
    if (raven_shift_embedding(e, h, 2, 1.0, out, &alpha) != RAVEN_STATUS_OK) return 1;
    /* beta * |e| = 5 < |h| = 10, so alpha = 0.5 */
    if (fabs(alpha - 0.5) > 1e-15 || out[0] != 3.0 || fabs(out[1] - 9.0) > 1e-15) return 2;
    RavenModel *m = NULL;
    if (raven_model_load(NULL, &m) != RAVEN_STATUS_INVALID_ARGUMENT) return 3;
    printf("%s\n", raven_last_error());
    return 0;
}
"#;

fn compiler() -> Option<&'static str> {
    ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| Command::new(c).arg("--version").output().is_ok_and(|o| o.status.success()))
}

#[test]
fn c_program_links_against_the_static_library() {
    let Some(cc) = compiler() else {
        eprintln!("no C compiler found; skipping");
        return;
    };
    // tests/<name>-<hash> lives in target/<profile>/deps.
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().unwrap().parent().unwrap();
    let lib = profile_dir.join("libraven_ffi.a");
    if !lib.exists() {
        eprintln!("{} not built; skipping", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    let bin = dir.path().join("main");
    std::fs::write(&src, C_PROGRAM).unwrap();
    let status = Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-I"])
        .arg(header().parent().unwrap())
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success(), "C compilation failed");
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "C program exited with {:?}", out.status.code());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "path is null");
}
