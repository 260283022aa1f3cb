use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use tutorsim_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

unsafe fn take(p: *mut c_char) -> String {
    let s = CStr::from_ptr(p).to_str().unwrap().to_string();
    ts_string_free(p);
    s
}

unsafe fn last_error() -> String {
    CStr::from_ptr(ts_last_error()).to_str().unwrap().to_string()
}

#[test]
fn solve_generated_problem_through_c_api() {
    unsafe {
        let spec = c(r#"{"domain_id":"fraction_arithmetic","seed":3,"params":{"kind":"multiply"}}"#);
        let mut g: *mut TsGraph = ptr::null_mut();
        assert_eq!(ts_graph_generate(spec.as_ptr(), &mut g), TsStatus::Ok);

        let mut json = ptr::null_mut();
        assert_eq!(ts_graph_to_json(g, &mut json), TsStatus::Ok);
        let doc = take(json);
        let mut g2: *mut TsGraph = ptr::null_mut();
        assert_eq!(ts_graph_load(c(&doc).as_ptr(), &mut g2), TsStatus::Ok);
        let mut json2 = ptr::null_mut();
        ts_graph_to_json(g2, &mut json2);
        assert_eq!(take(json2), doc);
        ts_graph_free(g2);

        let mut cur: *mut TsCursor = ptr::null_mut();
        assert_eq!(ts_cursor_new(g, &mut cur), TsStatus::Ok);
        ts_graph_free(g);

        let mut reward = 0;
        let wrong = c(r#"{"selection":"answer_num","action_type":"UpdateTextField","input":"-999"}"#);
        let mut before = ptr::null_mut();
        ts_cursor_state_json(cur, &mut before);
        let before = take(before);
        assert_eq!(ts_cursor_apply(cur, wrong.as_ptr(), &mut reward), TsStatus::Ok);
        assert_eq!(reward, -1);
        let mut after = ptr::null_mut();
        ts_cursor_state_json(cur, &mut after);
        assert_eq!(take(after), before);

        let mut done = false;
        let mut steps = 0;
        while !done {
            let mut demo = ptr::null_mut();
            assert_eq!(ts_cursor_get_demo(cur, &mut demo), TsStatus::Ok);
            let demo = c(&take(demo));
            assert_eq!(ts_cursor_check(cur, demo.as_ptr(), &mut reward), TsStatus::Ok);
            assert_eq!(reward, 1);
            assert_eq!(ts_cursor_apply(cur, demo.as_ptr(), &mut reward), TsStatus::Ok);
            assert_eq!(ts_cursor_is_done(cur, &mut done), TsStatus::Ok);
            steps += 1;
        }
        assert_eq!(steps, 3);
        let mut demo = ptr::null_mut();
        assert_eq!(ts_cursor_get_demo(cur, &mut demo), TsStatus::NoDemo);
        assert!(!last_error().is_empty());
        ts_cursor_free(cur);
    }
}

#[test]
fn errors_are_reported_not_raised() {
    unsafe {
        let mut g: *mut TsGraph = ptr::null_mut();
        assert_eq!(ts_graph_load(ptr::null(), &mut g), TsStatus::NullArgument);
        assert_eq!(ts_graph_load(c("{").as_ptr(), &mut g), TsStatus::Parse);
        assert!(last_error().contains("line"));
        assert!(g.is_null());
        let bad = c(r#"{"domain_id":"nope","seed":1}"#);
        assert_eq!(ts_graph_generate(bad.as_ptr(), &mut g), TsStatus::Generate);
        let bytes = [0xffu8, 0];
        assert_eq!(
            ts_graph_load(bytes.as_ptr() as *const c_char, &mut g),
            TsStatus::InvalidUtf8
        );
        let mut done = false;
        assert_eq!(ts_cursor_is_done(ptr::null(), &mut done), TsStatus::NullArgument);
        ts_graph_free(ptr::null_mut());
        ts_cursor_free(ptr::null_mut());
        ts_string_free(ptr::null_mut());
    }
}

#[test]
fn matcher_entry_point() {
    unsafe {
        let mut m = false;
        let numeric = c(r#"{"mode":"numeric","reference":"0.5","tolerance":"0.01","witness":"0.5"}"#);
        assert_eq!(
            ts_matches(numeric.as_ptr(), c("1/2").as_ptr(), ptr::null(), &mut m),
            TsStatus::Ok
        );
        assert!(m);
        assert_eq!(
            ts_matches(numeric.as_ptr(), c("0.6").as_ptr(), ptr::null(), &mut m),
            TsStatus::Ok
        );
        assert!(!m);
        let ctx = c(r#"{"mode":"exact","reference":"${answer_den}","witness":"8"}"#);
        let state = c(
            r#"{"problem_id":"p","widgets":{"answer_den":{"widget_id":"answer_den","kind":"text_field","value":"8"}}}"#,
        );
        assert_eq!(
            ts_matches(ctx.as_ptr(), c("8").as_ptr(), state.as_ptr(), &mut m),
            TsStatus::Ok
        );
        assert!(m);
        let invalid = c(r#"{"mode":"exact","reference":"1","tolerance":"0.1","witness":"1"}"#);
        assert_eq!(
            ts_matches(invalid.as_ptr(), c("1").as_ptr(), ptr::null(), &mut m),
            TsStatus::Parse
        );
    }
}

#[test]
fn header_declares_api_and_compiles() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/tutorsim.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for f in [
        "ts_last_error",
        "ts_string_free",
        "ts_graph_load",
        "ts_graph_generate",
        "ts_graph_to_json",
        "ts_graph_free",
        "ts_cursor_new",
        "ts_cursor_free",
        "ts_cursor_state_json",
        "ts_cursor_check",
        "ts_cursor_apply",
        "ts_cursor_get_demo",
        "ts_cursor_is_done",
        "ts_matches",
        "TS_STATUS_OK",
    ] {
        assert!(text.contains(f), "header lacks {f}");
    }
    // syntax check only when a C compiler is around
    if let Ok(out) = Command::new("cc")
        .args(["-fsyntax-only", "-x", "c", "-std=c99"])
        .arg(&header)
        .output()
    {
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
}
