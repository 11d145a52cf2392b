use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use posefuse_ffi::*;

fn last_error() -> String {
    let p = pf_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn crc_check_value() {
    let s = b"123456789";
    assert_eq!(unsafe { pf_crc32(s.as_ptr(), s.len()) }, 0xCBF4_3926);
    assert_eq!(unsafe { pf_crc32(ptr::null(), 0) }, 0);
}

#[test]
fn encode_decode_roundtrip() {
    let payload = [1u8, 2, 3, 4, 5];
    let mut len = 0usize;
    let st = unsafe { pf_encode_message(2, payload.as_ptr(), payload.len(), ptr::null_mut(), 0, &mut len) };
    assert_eq!(st, PfStatus::BufferTooSmall);
    assert_eq!(len, payload.len() + 12);

    let mut msg = vec![0u8; len];
    let st = unsafe { pf_encode_message(2, payload.as_ptr(), payload.len(), msg.as_mut_ptr(), msg.len(), &mut len) };
    assert_eq!(st, PfStatus::Ok);

    let (mut t, mut out, mut out_len) = (0u8, [0u8; 16], 0usize);
    let st = unsafe { pf_decode_message(msg.as_ptr(), msg.len(), &mut t, out.as_mut_ptr(), out.len(), &mut out_len) };
    assert_eq!(st, PfStatus::Ok);
    assert_eq!((t, &out[..out_len]), (2, &payload[..]));

    msg[9] ^= 0x10;
    let st = unsafe { pf_decode_message(msg.as_ptr(), msg.len(), &mut t, out.as_mut_ptr(), out.len(), &mut out_len) };
    assert_eq!(st, PfStatus::CrcMismatch);
    assert!(last_error().contains("crc"));

    let st = unsafe { pf_decode_message(msg.as_ptr(), msg.len() - 1, &mut t, out.as_mut_ptr(), out.len(), &mut out_len) };
    assert_eq!(st, PfStatus::Truncated);
    let st = unsafe { pf_encode_message(9, ptr::null(), 0, out.as_mut_ptr(), out.len(), &mut out_len) };
    assert_eq!(st, PfStatus::UnknownType);
}

#[test]
fn gp_handle_lifecycle() {
    let mut gp = ptr::null_mut();
    assert_eq!(unsafe { pf_gp_new(0.2, 1.0, 0.0, 1, &mut gp) }, PfStatus::Ok);
    for (x, y) in [(0.2, 1.0), (0.7, -0.5)] {
        assert_eq!(unsafe { pf_gp_add(gp, &x, y) }, PfStatus::Ok);
    }
    assert_eq!(unsafe { pf_gp_len(gp) }, 2);
    let (mut m, mut v) = (0.0, 0.0);
    assert_eq!(unsafe { pf_gp_posterior(gp, &0.2, &mut m, &mut v) }, PfStatus::Ok);
    assert!((m - 1.0).abs() < 1e-8 && v < 1e-9);
    let mut ei = -1.0;
    assert_eq!(unsafe { pf_gp_expected_improvement(gp, &0.45, 1.0, &mut ei) }, PfStatus::Ok);
    assert!(ei >= 0.0);
    assert_eq!(unsafe { pf_gp_add(gp, &1.5, 0.0) }, PfStatus::InvalidArgument);
    assert_eq!(unsafe { pf_gp_posterior(ptr::null(), &0.2, &mut m, &mut v) }, PfStatus::NullPointer);
    unsafe { pf_gp_free(gp) };
    unsafe { pf_gp_free(ptr::null_mut()) };

    assert_eq!(unsafe { pf_gp_new(-1.0, 1.0, 0.0, 1, &mut gp) }, PfStatus::InvalidArgument);
}

#[test]
fn average_precision_example() {
    let hits = [1u8, 0, 1];
    let mut ap = 0.0;
    assert_eq!(unsafe { pf_average_precision(hits.as_ptr(), 3, 2, &mut ap) }, PfStatus::Ok);
    assert!((ap - 0.833_333_333_333_333_3).abs() < 1e-9);
}

#[test]
fn config_handle() {
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { pf_config_from_json(ptr::null(), &mut cfg) }, PfStatus::Ok);
    assert_eq!(unsafe { pf_config_set_seed(cfg, 42) }, PfStatus::Ok);
    let mut len = 0usize;
    assert_eq!(unsafe { pf_config_to_json(cfg, ptr::null_mut(), 0, &mut len) }, PfStatus::BufferTooSmall);
    let mut buf = vec![0u8; len];
    assert_eq!(unsafe { pf_config_to_json(cfg, buf.as_mut_ptr(), len, &mut len) }, PfStatus::Ok);
    let text = String::from_utf8(buf).unwrap();
    assert!(text.contains("\"seed\": 42"));
    unsafe { pf_config_free(cfg) };

    let bad = CString::new(r#"{"nope": true}"#).unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { pf_config_from_json(bad.as_ptr(), &mut cfg) }, PfStatus::Config);
    assert!(cfg.is_null());
    assert!(last_error().contains("nope"));
}

#[test]
fn run_manifest_missing_file() {
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { pf_config_from_json(ptr::null(), &mut cfg) }, PfStatus::Ok);
    let m = CString::new("/nonexistent/manifest.json").unwrap();
    let out = CString::new(std::env::temp_dir().join("pf-none").to_str().unwrap()).unwrap();
    let mut map = 0.0;
    let st = unsafe { pf_run_manifest(cfg, m.as_ptr(), out.as_ptr(), &mut map) };
    assert_ne!(st, PfStatus::Ok);
    unsafe { pf_config_free(cfg) };
}

#[test]
fn header_compiles_as_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/posefuse.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for sym in ["pf_gp_new", "pf_decode_message", "PF_STATUS_CRC_MISMATCH", "typedef struct PfGp PfGp"] {
        assert!(text.contains(sym), "{sym} missing from header");
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        format!(
            "#include \"{}\"\nint main(void) {{ PfGp *gp = 0; return pf_gp_new(0.2, 1.0, 0.0, 1, &gp) == PF_STATUS_OK ? 0 : 1; }}\n",
            header.display()
        ),
    )
    .unwrap();
    match Command::new("cc").args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only"]).arg(&src).status() {
        Ok(s) => assert!(s.success(), "header failed to compile"),
        Err(_) => eprintln!("no C compiler found; header syntax not checked"),
    }
}
