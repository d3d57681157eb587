use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use riskgrad::corpus::FeaturizerConfig;
use riskgrad::risk_model::{save_checkpoint, Checkpoint, ModelConfig, RiskModel};
use riskgrad_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(rg_last_error()) }
        .to_string_lossy()
        .into_owned()
}

fn tiny_checkpoint(dir: &Path, featurizer: Option<FeaturizerConfig>) -> CString {
    let cfg = ModelConfig {
        input_dim: 16,
        latent_dim: 2,
        categories: 3,
        hidden: 4,
        seed: 5,
        ..ModelConfig::default()
    };
    let path = dir.join("m.json");
    let ckpt = Checkpoint {
        model: RiskModel::new(cfg).unwrap(),
        featurizer,
    };
    save_checkpoint(&ckpt, &path).unwrap();
    CString::new(path.to_str().unwrap()).unwrap()
}

#[test]
fn model_lifecycle_and_scoring() {
    let dir = tempfile::tempdir().unwrap();
    let fz = FeaturizerConfig {
        dim: 16,
        ..FeaturizerConfig::default()
    };
    let path = tiny_checkpoint(dir.path(), Some(fz));
    let mut model = ptr::null_mut();
    unsafe {
        assert_eq!(rg_model_load(path.as_ptr(), &mut model), RgStatus::Ok);
        assert_eq!(rg_model_categories(model), 3);
        assert_eq!(rg_model_input_dim(model), 16);

        let prompt = CString::new("how to bake bread").unwrap();
        let response = CString::new("RESPONSE(x)").unwrap();
        let mut d = [0.0f64; 3];
        assert_eq!(
            rg_model_score_text(model, prompt.as_ptr(), response.as_ptr(), d.as_mut_ptr(), 3),
            RgStatus::Ok
        );
        assert!(d.iter().all(|&v| v > 0.0 && v < 1.0));

        let lib = riskgrad::refine::ModelScorer::new(
            riskgrad::risk_model::load_checkpoint(Path::new(path.to_str().unwrap()))
                .unwrap()
                .model,
            fz,
            riskgrad::refine::RiskSource::Latent,
        )
        .unwrap();
        use riskgrad::refine::RiskScorer;
        let expected = lib.score("how to bake bread", "RESPONSE(x)").unwrap();
        assert_eq!(expected.as_slice(), &d);

        let h = [0.25f64; 16];
        let mut d2 = [0.0f64; 3];
        assert_eq!(
            rg_model_score_features(model, h.as_ptr(), 16, d2.as_mut_ptr(), 3),
            RgStatus::Ok
        );
        assert_eq!(
            rg_model_score_features(model, h.as_ptr(), 15, d2.as_mut_ptr(), 3),
            RgStatus::Shape
        );
        assert!(last_error().contains("16"));
        assert_eq!(
            rg_model_score_features(model, h.as_ptr(), 16, d2.as_mut_ptr(), 2),
            RgStatus::Shape
        );
        rg_model_free(model);
        rg_model_free(ptr::null_mut());
    }
}

#[test]
fn embedding_checkpoints_reject_text() {
    let dir = tempfile::tempdir().unwrap();
    let path = tiny_checkpoint(dir.path(), None);
    let mut model = ptr::null_mut();
    unsafe {
        assert_eq!(rg_model_load(path.as_ptr(), &mut model), RgStatus::Ok);
        let s = CString::new("x").unwrap();
        let mut d = [0.0; 3];
        assert_eq!(
            rg_model_score_text(model, s.as_ptr(), s.as_ptr(), d.as_mut_ptr(), 3),
            RgStatus::Unsupported
        );
        rg_model_free(model);
    }
}

#[test]
fn load_errors() {
    let mut model = ptr::null_mut();
    let missing = CString::new("/no/such/checkpoint.json").unwrap();
    unsafe {
        assert_eq!(rg_model_load(missing.as_ptr(), &mut model), RgStatus::Io);
        assert!(model.is_null());
        assert!(!last_error().is_empty());
        assert_eq!(
            rg_model_load(ptr::null(), &mut model),
            RgStatus::NullArgument
        );
        assert_eq!(
            rg_model_load(missing.as_ptr(), ptr::null_mut()),
            RgStatus::NullArgument
        );
        assert_eq!(rg_model_categories(ptr::null()), 0);
        let bad = [0xffu8, 0xfe, 0];
        assert_eq!(
            rg_model_load(bad.as_ptr().cast(), &mut model),
            RgStatus::InvalidUtf8
        );
    }
}

#[test]
fn effort_and_textgrad() {
    let t = rg_thresholds_default();
    assert_eq!((t.tau, t.tau_low, t.tau_high), (0.3, 0.5, 0.8));
    let mut e = RgEffort::Minor;
    unsafe {
        for (d, want) in [
            (0.80, RgEffort::Critical),
            (0.5, RgEffort::Mild),
            (0.49, RgEffort::Minor),
        ] {
            assert_eq!(rg_effort_of(d, t, &mut e), RgStatus::Ok);
            assert_eq!(e, want);
        }
        assert_eq!(rg_effort_of(1.5, t, &mut e), RgStatus::InvalidInput);
        assert!(last_error().contains("1.5"));

        let names: Vec<CString> = ["violence", "drugs"]
            .iter()
            .map(|n| CString::new(*n).unwrap())
            .collect();
        let ptrs: Vec<*const std::ffi::c_char> = names.iter().map(|n| n.as_ptr()).collect();
        let risk = [0.85, 0.1];
        let mut out = ptr::null_mut();
        assert_eq!(
            rg_textgrad_render(risk.as_ptr(), ptrs.as_ptr(), 2, t, &mut out),
            RgStatus::Ok
        );
        assert_eq!(
            CStr::from_ptr(out).to_str().unwrap(),
            "[RISK] category=\"violence\"; intensity=0.85; effort=CRITICAL; instruction=Remove or fundamentally rewrite all content enabling this risk."
        );
        rg_string_free(out);

        let safe = [0.1, 0.2];
        assert_eq!(
            rg_textgrad_render(safe.as_ptr(), ptrs.as_ptr(), 2, t, &mut out),
            RgStatus::Ok
        );
        assert_eq!(CStr::from_ptr(out).to_bytes(), b"");
        rg_string_free(out);
        rg_string_free(ptr::null_mut());
    }
}

#[test]
fn special_functions() {
    let mut v = f64::NAN;
    unsafe {
        assert_eq!(rg_kl_beta(1.0, 1.0, &mut v), RgStatus::Ok);
        assert_eq!(v, 0.0);
        assert_eq!(rg_kl_beta(2.0, 1.0, &mut v), RgStatus::Ok);
        assert!((v - (2f64.ln() - 0.5)).abs() < 1e-12);
        assert_eq!(rg_kl_beta(-1.0, 1.0, &mut v), RgStatus::Domain);
        assert_eq!(rg_digamma(1.0, &mut v), RgStatus::Ok);
        assert!((v + 0.577_215_664_901_532_9).abs() < 1e-12);
        assert_eq!(rg_digamma(0.0, &mut v), RgStatus::Domain);
        assert_eq!(rg_digamma(1.0, ptr::null_mut()), RgStatus::NullArgument);
    }
}

#[test]
fn header_compiles_as_c() {
    let header_dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let header = header_dir.join("riskgrad.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for symbol in [
        "typedef struct RgModel RgModel;",
        "RG_STATUS_OK = 0",
        "rg_model_load",
        "rg_model_score_text",
        "rg_textgrad_render",
        "rg_last_error",
        "rg_string_free",
    ] {
        assert!(text.contains(symbol), "header lacks {symbol}");
    }
    let Ok(cc) = which_cc() else {
        eprintln!("no C compiler found; skipping compile check");
        return;
    };
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        r#"#include "riskgrad.h"
int probe(const char *path) {
    RgModel *m = NULL;
    if (rg_model_load(path, &m) != RG_STATUS_OK) { return (int)rg_last_error()[0]; }
    double d[64];
    RgStatus s = rg_model_score_text(m, "p", "r", d, rg_model_categories(m));
    rg_model_free(m);
    return (int)s;
}
"#,
    )
    .unwrap();
    let status = Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(&header_dir)
        .arg(&src)
        .status()
        .unwrap();
    assert!(status.success());
}

fn which_cc() -> Result<&'static str, ()> {
    for cc in ["cc", "gcc", "clang"] {
        if Command::new(cc).arg("--version").output().is_ok() {
            return Ok(cc);
        }
    }
    Err(())
}
