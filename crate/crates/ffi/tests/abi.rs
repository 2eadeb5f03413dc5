use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use w2lab_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(w2_last_error()).to_string_lossy().into_owned() }
}

#[test]
fn schedule_round_trip_through_json() {
    unsafe {
        let mut s = ptr::null_mut();
        assert_eq!(w2_schedule_harmonic(3, &mut s), W2Status::Ok);
        assert_eq!(w2_schedule_n_steps(s), 3);
        let mut times = [0.0; 4];
        assert_eq!(w2_schedule_times(s, times.as_mut_ptr(), 4), W2Status::Ok);
        assert_eq!(times, [0.25, 0.5, 0.75, 1.0]);
        let mut short = [0.0; 2];
        assert_eq!(w2_schedule_betas(s, short.as_mut_ptr(), 2), W2Status::BufferTooSmall);

        let mut json = ptr::null_mut();
        assert_eq!(w2_schedule_to_json(s, &mut json), W2Status::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(w2_schedule_from_json(json, &mut back), W2Status::Ok);
        let mut betas = [0.0; 3];
        assert_eq!(w2_schedule_betas(back, betas.as_mut_ptr(), 3), W2Status::Ok);
        assert_eq!(betas, [0.5, 1.0 / 3.0, 0.25]);

        let mut audit = ptr::null_mut();
        assert_eq!(w2_schedule_audit_json(s, &mut audit), W2Status::Ok);
        assert!(CStr::from_ptr(audit).to_str().unwrap().contains("\"max_beta\":0.5"));

        w2_string_free(audit);
        w2_string_free(json);
        w2_schedule_free(back);
        w2_schedule_free(s);
    }
}

#[test]
fn errors_carry_status_and_message() {
    unsafe {
        let mut s = ptr::null_mut();
        assert_eq!(w2_schedule_constant(4, 1.5, 0.0, &mut s), W2Status::Validation);
        assert!(s.is_null());
        assert!(last_error().contains("beta"), "{}", last_error());
        assert_eq!(w2_schedule_harmonic(3, ptr::null_mut()), W2Status::NullPointer);
        let bad = CString::new("{\"betas\":[0.5],\"times\":[0.3,1.0],\"delta\":0}").unwrap();
        assert_eq!(w2_schedule_from_json(bad.as_ptr(), &mut s), W2Status::Validation);
        assert!(last_error().contains("invariant"), "{}", last_error());
        assert_eq!(w2_schedule_n_steps(ptr::null()), 0);
        w2_schedule_free(ptr::null_mut());
        w2_target_free(ptr::null_mut());
        w2_string_free(ptr::null_mut());
    }
}

#[test]
fn exact_w2_and_sampler() {
    unsafe {
        let mut s = ptr::null_mut();
        let mut t = ptr::null_mut();
        assert_eq!(w2_schedule_harmonic(9, &mut s), W2Status::Ok);
        let mean = [0.0, 0.0];
        assert_eq!(w2_target_gaussian(mean.as_ptr(), 2, 1.0, &mut t), W2Status::Ok);
        let mu_hat = [3.0, 0.0];
        let (mut w, mut ws) = (0.0, 0.0);
        assert_eq!(
            w2_exact_w2(s, t, mu_hat.as_ptr(), 2, ptr::null(), &mut w, &mut ws),
            W2Status::Ok
        );
        assert!((w - 0.3).abs() < 1e-12);
        assert_eq!(w, ws);

        let model = CString::new(
            r#"{"kind":"perturbed","profile":{"kind":"constant","eps":0.1},"mode":"constant_vector","u":[1.0,0.0]}"#,
        )
        .unwrap();
        let mut wp = 0.0;
        let status = w2_exact_w2(s, t, mu_hat.as_ptr(), 2, model.as_ptr(), &mut wp, &mut ws);
        assert_eq!(status, W2Status::Ok, "{}", last_error());
        assert!(wp != w);

        let mut buf = vec![0.0; 20];
        assert_eq!(
            w2_ddpm_run(s, t, mu_hat.as_ptr(), 2, 10, 5, ptr::null(), buf.as_mut_ptr(), 20),
            W2Status::Ok
        );
        let mut again = vec![0.0; 20];
        w2_ddpm_run(s, t, mu_hat.as_ptr(), 2, 10, 5, ptr::null(), again.as_mut_ptr(), 20);
        assert_eq!(buf, again);
        assert_eq!(
            w2_ddpm_run(s, t, mu_hat.as_ptr(), 2, 11, 5, ptr::null(), buf.as_mut_ptr(), 20),
            W2Status::BufferTooSmall
        );

        let y = [0.5, -1.0];
        let mut score = [0.0; 2];
        assert_eq!(w2_target_score(t, 0.3, y.as_ptr(), 2, score.as_mut_ptr()), W2Status::Ok);
        assert_eq!(score, [-0.5, 1.0]);

        w2_target_free(t);
        w2_schedule_free(s);
    }
}

#[test]
fn mixture_target_and_dimension_checks() {
    unsafe {
        let w = [0.5, 0.5];
        let m = [1.0, 0.0, -1.0, 0.0];
        let v = [0.5, 0.5];
        let mut t = ptr::null_mut();
        assert_eq!(w2_target_mixture(w.as_ptr(), m.as_ptr(), v.as_ptr(), 2, 2, &mut t), W2Status::Ok);
        assert_eq!(w2_target_dim(t), 2);
        let y = [0.0, 0.0];
        let mut out = [1.0; 2];
        assert_eq!(w2_target_score(t, 0.5, y.as_ptr(), 2, out.as_mut_ptr()), W2Status::Ok);
        assert!(out[0].abs() < 1e-15 && out[1].abs() < 1e-15);
        assert_eq!(w2_target_score(t, 0.5, y.as_ptr(), 1, out.as_mut_ptr()), W2Status::Validation);

        let mut s = ptr::null_mut();
        w2_schedule_harmonic(4, &mut s);
        let (mut a, mut b) = (0.0, 0.0);
        assert_eq!(w2_exact_w2(s, t, y.as_ptr(), 2, ptr::null(), &mut a, &mut b), W2Status::Validation);
        w2_schedule_free(s);
        w2_target_free(t);
    }
}

#[test]
fn bound_evaluation_statuses() {
    let params = std::fs::read_to_string(
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/bounds_gaussian_harmonic.json"),
    )
    .unwrap();
    let params = CString::new(params).unwrap();
    let (mut v, mut known) = (0.0, false);
    unsafe {
        let id = CString::new("two_sided_lipschitz").unwrap();
        assert_eq!(w2_bound_evaluate(id.as_ptr(), params.as_ptr(), &mut v, &mut known), W2Status::Ok);
        assert!(v > 0.0 && known);
        let id = CString::new("one_sided_lipschitz").unwrap();
        assert_eq!(
            w2_bound_evaluate(id.as_ptr(), params.as_ptr(), &mut v, &mut known),
            W2Status::Hypothesis
        );
        let id = CString::new("no_such_bound").unwrap();
        assert_eq!(
            w2_bound_evaluate(id.as_ptr(), params.as_ptr(), &mut v, &mut known),
            W2Status::Validation
        );
    }
}

#[test]
fn version_is_static() {
    let v = unsafe { CStr::from_ptr(w2_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

/// Compiles and runs the C example against the generated header and the
/// static library when a C compiler is available.
#[test]
fn c_program_links_against_header() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let target_dir = std::env::var_os("CARGO_TARGET_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| dir.join("../../target"));
    let exe = std::env::current_exe().unwrap();
    // tests/abi-<hash> lives in <target>/<profile>/deps
    let profile_dir = exe.parent().and_then(|p| p.parent()).map(PathBuf::from).unwrap_or(target_dir.join("debug"));
    let lib = profile_dir.join("libw2lab_ffi.a");
    if !lib.exists() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: static library or C compiler unavailable");
        return;
    }
    let out = std::env::temp_dir().join(format!("w2lab_demo_{}", std::process::id()));
    let status = Command::new("cc")
        .arg(dir.join("examples/demo.c"))
        .arg("-I")
        .arg(dir.join("include"))
        .arg(&lib)
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success(), "C example failed to compile");
    let run = Command::new(&out).output().unwrap();
    let _ = std::fs::remove_file(&out);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert!(String::from_utf8_lossy(&run.stdout).contains("exact W2 = 0.3"));
}
