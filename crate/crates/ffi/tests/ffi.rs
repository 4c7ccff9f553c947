use sgrpo::synth::{generate_corpus, render_structured_completion, write_corpus, CorpusSpec, FeatureSpec, RenderStyle};
use sgrpo::SubScoreVector;
use sgrpo_ffi::*;
use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

fn last_error() -> String {
    let p = sgrpo_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn gaussian_reward_and_errors() {
    let mut out = 0.0;
    assert_eq!(unsafe { sgrpo_gaussian_reward(3.0, 2.0, 0.5, &mut out) }, SgrpoStatus::Ok);
    assert!((out - (-2.0f64).exp()).abs() < 1e-15);

    assert_eq!(unsafe { sgrpo_gaussian_reward(3.0, 2.0, 0.0, &mut out) }, SgrpoStatus::Config);
    assert!(last_error().contains("sigma"));
    assert_eq!(unsafe { sgrpo_gaussian_reward(3.0, 2.0, 0.5, ptr::null_mut()) }, SgrpoStatus::NullPointer);
}

#[test]
fn advantages() {
    let r = [1.0, 2.0, 3.0];
    let mut a = [0.0; 3];
    assert_eq!(unsafe { sgrpo_normalize_advantages(r.as_ptr(), 3, 1e-8, a.as_mut_ptr()) }, SgrpoStatus::Ok);
    let e = 1.5f64.sqrt();
    assert!((a[0] + e).abs() < 1e-12 && a[1].abs() < 1e-12 && (a[2] - e).abs() < 1e-12);
}

#[test]
fn mgas_factor() {
    let p = sgrpo_mgas_default_params();
    assert_eq!((p.phi_minus, p.phi_plus, p.c, p.beta, p.clamp), (0.8, 1.2, 0.5, 1.0, 1));
    let mut s = 0.0;
    assert_eq!(unsafe { sgrpo_mgas_scale_factor(0.5, 1.0, &p, &mut s) }, SgrpoStatus::Ok);
    assert!((s - 1.2).abs() < 1e-15);
    assert_eq!(unsafe { sgrpo_mgas_scale_factor(0.5, 0.0, ptr::null(), &mut s) }, SgrpoStatus::Ok);
    assert_eq!(s, 1.0);
    let bad = SgrpoMgasParams { phi_minus: 1.5, ..p };
    assert_eq!(unsafe { sgrpo_mgas_scale_factor(0.5, 1.0, &bad, &mut s) }, SgrpoStatus::Config);
}

#[test]
fn correlations() {
    let x = [1.0, 2.0, 2.0, 3.0];
    let y = [1.0, 2.0, 3.0, 3.0];
    let mut t = 0.0;
    assert_eq!(unsafe { sgrpo_kendall_tau_b(x.as_ptr(), y.as_ptr(), 4, &mut t) }, SgrpoStatus::Ok);
    assert!((t - 0.8).abs() < 1e-12);
    let mut r = 0.0;
    assert_eq!(unsafe { sgrpo_spearman_rho(x.as_ptr(), y.as_ptr(), 4, &mut r) }, SgrpoStatus::Ok);
    assert!((r - 0.8333333333333335).abs() < 1e-12);
    let c = [2.0; 4];
    assert_eq!(unsafe { sgrpo_kendall_tau_b(c.as_ptr(), y.as_ptr(), 4, &mut t) }, SgrpoStatus::Undefined);
    assert_eq!(unsafe { sgrpo_spearman_rho(x.as_ptr(), y.as_ptr(), 1, &mut r) }, SgrpoStatus::Undefined);
}

#[test]
fn completion_handle() {
    let v = SubScoreVector([0, 3, 1, 0, 4, 2]);
    let text = CString::new(render_structured_completion(&v, RenderStyle::Full)).unwrap();
    let mut c = ptr::null_mut();
    assert_eq!(unsafe { sgrpo_completion_parse(text.as_ptr(), &mut c) }, SgrpoStatus::Ok);
    assert_eq!(unsafe { sgrpo_completion_format_valid(c) }, 1);
    let (mut val, mut present) = (0.0, 0);
    assert_eq!(unsafe { sgrpo_completion_score(c, 4, &mut val, &mut present) }, SgrpoStatus::Ok);
    assert_eq!((val, present), (4.0, 1));
    assert_eq!(unsafe { sgrpo_completion_score(c, 6, &mut val, &mut present) }, SgrpoStatus::Config);

    let mut out = SgrpoRewardBreakdown::default();
    let st = unsafe { sgrpo_completion_reward(c, v.0.as_ptr(), ptr::null(), 0.5, 0.5, &mut out) };
    assert_eq!(st, SgrpoStatus::Ok);
    assert_eq!(out.r_final, 4.0);
    unsafe { sgrpo_completion_free(c) };

    let text = CString::new(render_structured_completion(&v, RenderStyle::Malformed)).unwrap();
    assert_eq!(unsafe { sgrpo_completion_parse(text.as_ptr(), &mut c) }, SgrpoStatus::Ok);
    assert_eq!(unsafe { sgrpo_completion_format_valid(c) }, 0);
    assert_eq!(unsafe { sgrpo_completion_score(c, 5, &mut val, &mut present) }, SgrpoStatus::Ok);
    assert_eq!(present, 0);
    unsafe { sgrpo_completion_free(c) };
    unsafe { sgrpo_completion_free(ptr::null_mut()) };
}

#[test]
fn invalid_utf8_is_reported() {
    let bytes = [0xffu8, 0xfe, 0];
    let mut c = ptr::null_mut();
    let st = unsafe { sgrpo_completion_parse(bytes.as_ptr().cast(), &mut c) };
    assert_eq!(st, SgrpoStatus::InvalidUtf8);
    assert!(c.is_null());
}

fn corpus_file(dir: &std::path::Path) -> PathBuf {
    let cases = generate_corpus(&CorpusSpec {
        n: 30,
        tier_mix: [0.3, 0.3, 0.4],
        noise_levels: vec![0.0],
        features: FeatureSpec::default(),
        seed: 5,
    })
    .unwrap();
    let p = dir.join("corpus.jsonl");
    write_corpus(&cases, &p).unwrap();
    p
}

#[test]
fn trainer_handle() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = CString::new(corpus_file(dir.path()).to_str().unwrap()).unwrap();
    let cfg = CString::new("steps = 10\nsdw_interval = 4\nseed = 3\n").unwrap();
    let mut t = ptr::null_mut();
    assert_eq!(unsafe { sgrpo_trainer_new(cfg.as_ptr(), corpus.as_ptr(), &mut t) }, SgrpoStatus::Ok);
    let mut refreshed = Vec::new();
    for _ in 0..8 {
        let mut m = SgrpoStepMetrics::default();
        assert_eq!(unsafe { sgrpo_trainer_step(t, &mut m) }, SgrpoStatus::Ok);
        assert!(m.loss.is_finite() && m.mean_reward >= 0.0);
        if m.weights_refreshed == 1 {
            refreshed.push(m.step);
        }
    }
    assert_eq!(refreshed, vec![4, 8]);
    assert_eq!(unsafe { sgrpo_trainer_steps_done(t) }, 8);
    let mut w = [0.0; 6];
    assert_eq!(unsafe { sgrpo_trainer_weights(t, w.as_mut_ptr()) }, SgrpoStatus::Ok);
    assert!((w.iter().sum::<f64>() - 7.0).abs() < 1e-12);

    let features = vec![0.0; 36];
    let mut counts = [9u32; 6];
    assert_eq!(unsafe { sgrpo_trainer_predict(t, features.as_ptr(), 36, counts.as_mut_ptr()) }, SgrpoStatus::Ok);
    assert!(counts.iter().all(|c| *c <= 4));
    assert_eq!(unsafe { sgrpo_trainer_predict(t, features.as_ptr(), 5, counts.as_mut_ptr()) }, SgrpoStatus::Config);

    let ck = CString::new(dir.path().join("ck.json").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { sgrpo_trainer_save_checkpoint(t, ck.as_ptr()) }, SgrpoStatus::Ok);
    let loaded = sgrpo::train::Checkpoint::load(dir.path().join("ck.json")).unwrap();
    assert_eq!(loaded.step, 8);
    unsafe { sgrpo_trainer_free(t) };
}

#[test]
fn trainer_config_errors_are_listed() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = CString::new(corpus_file(dir.path()).to_str().unwrap()).unwrap();
    let cfg = CString::new("group_size = 1\nbogus = 3\n").unwrap();
    let mut t = ptr::null_mut();
    assert_eq!(unsafe { sgrpo_trainer_new(cfg.as_ptr(), corpus.as_ptr(), &mut t) }, SgrpoStatus::Config);
    let msg = last_error();
    assert!(msg.contains("bogus") && msg.contains("group_size"), "{msg}");
    assert!(t.is_null());

    let missing = CString::new("/nonexistent/corpus.jsonl").unwrap();
    assert_eq!(unsafe { sgrpo_trainer_new(ptr::null(), missing.as_ptr(), &mut t) }, SgrpoStatus::Io);
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/sgrpo.h")).unwrap();
    for name in [
        "sgrpo_last_error",
        "sgrpo_gaussian_reward",
        "sgrpo_normalize_advantages",
        "sgrpo_mgas_scale_factor",
        "sgrpo_kendall_tau_b",
        "sgrpo_spearman_rho",
        "sgrpo_completion_parse",
        "sgrpo_completion_reward",
        "sgrpo_trainer_new",
        "sgrpo_trainer_step",
        "sgrpo_trainer_free",
        "typedef struct SgrpoTrainer SgrpoTrainer",
        "SGRPO_STATUS_UNDEFINED = 6",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
}

/// Compiles and runs a small C program against the header and static library.
#[test]
fn c_program_links_against_header() {
    let Ok(cc) = which_cc() else {
        eprintln!("no C compiler found; skipping");
        return;
    };
    let target_dir = std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf();
    let lib = target_dir.join("libsgrpo_ffi.a");
    assert!(lib.exists(), "{} missing", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    std::fs::write(
        &src,
        r#"
#include <stdio.h>
#include <math.h>
#include "sgrpo.h"
int main(void) {
    double out = 0.0;
    if (sgrpo_gaussian_reward(3.0, 2.0, 0.5, &out) != SGRPO_STATUS_OK) return 1;
    if (fabs(out - exp(-2.0)) > 1e-15) return 2;
    if (sgrpo_gaussian_reward(1.0, 1.0, -1.0, &out) != SGRPO_STATUS_CONFIG) return 3;
    if (sgrpo_last_error() == NULL) return 4;
    SgrpoCompletion *c = NULL;
    const char *text = "<think>Step 1: false prediction.</think>"
        "<false_prediction>1</false_prediction><omission_of_finding>0</omission_of_finding>"
        "<incorrect_location>0</incorrect_location><incorrect_severity>0</incorrect_severity>"
        "<absence_of_comparison>0</absence_of_comparison><omission_of_comparison>0</omission_of_comparison>";
    if (sgrpo_completion_parse(text, &c) != SGRPO_STATUS_OK) return 5;
    if (sgrpo_completion_format_valid(c) != 1) return 6;
    uint32_t gt[6] = {1, 0, 0, 0, 0, 0};
    SgrpoRewardBreakdown r;
    if (sgrpo_completion_reward(c, gt, NULL, 0.5, 0.5, &r) != SGRPO_STATUS_OK) return 7;
    sgrpo_completion_free(c);
    printf("%.17g\n", r.r_final);
    return 0;
}
"#,
    )
    .unwrap();
    let exe = dir.path().join("smoke");
    let status = Command::new(&cc)
        .arg(&src)
        .arg(format!("-I{}", concat!(env!("CARGO_MANIFEST_DIR"), "/include")))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C compilation failed");
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "smoke program exited with {:?}", out.status);
    // One of six reasoning cues, valid format, perfect accuracy.
    let value: f64 = String::from_utf8(out.stdout).unwrap().trim().parse().unwrap();
    assert!((value - (1.0 / 6.0 + 1.0 + 2.0)).abs() < 1e-12);
}

fn which_cc() -> Result<String, ()> {
    for cc in ["cc", "gcc", "clang"] {
        if Command::new(cc).arg("--version").output().is_ok_and(|o| o.status.success()) {
            return Ok(cc.to_string());
        }
    }
    Err(())
}
