//! Exit-code and output conventions of the `cogc` binary.

use std::io::Write;
use std::process::Command;

fn cogc() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cogc"))
}

fn temp_program(body: &str) -> tempfile::NamedTempFile {
    let mut f = tempfile::Builder::new().suffix(".cogc").tempfile().unwrap();
    f.write_all(body.as_bytes()).unwrap();
    f
}

#[test]
fn check_accepts_and_exits_zero() {
    let f = temp_program("(def id (forall) (fn (x u32) u32 x))");
    let out = cogc().args(["check", f.path().to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
}

#[test]
fn check_rejects_with_span_carrying_error() {
    let f = temp_program("(def bad (forall) (fn (b (rec wr (n u8))) u8 5))");
    let out = cogc().args(["check", f.path().to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    // file:line:col: error[CODE]: message
    assert!(stderr.contains(".cogc:"), "{stderr}");
    assert!(stderr.contains("error[discard]"), "{stderr}");
}

#[test]
fn run_on_ill_typed_file_exits_one() {
    let f = temp_program("(def bad (forall) (fn (v (variant (A u8) (B u8))) u8 (esac v)))");
    let out = cogc()
        .args(["run", f.path().to_str().unwrap(), "--fn", "bad", "--arg", "1"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn run_evaluates_and_prints_json() {
    let f = temp_program("(def main (forall) (fn (x u8) u8 (op + x 1)))");
    let out = cogc()
        .args(["run", f.path().to_str().unwrap(), "--fn", "main", "--arg", "41"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(
        String::from_utf8_lossy(&out.stdout).trim(),
        r#"{"lit":42,"ty":"u8"}"#
    );
}

#[test]
fn oracle_failure_exits_two() {
    // an abstract function with no registered implementation makes the
    // update run fail, which the oracle reports
    let f = temp_program(
        "(absdef mystery (forall) (fn (x u8) u8))
         (def main (forall) (fn (x u8) u8 (app (funref mystery) x)))",
    );
    let out = cogc()
        .args(["oracle", f.path().to_str().unwrap(), "--fn", "main", "--arg", "1"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let verdict: serde_json::Value =
        serde_json::from_slice(&out.stdout).expect("verdict is JSON");
    assert_eq!(verdict["pass"], serde_json::json!(false));
}

#[test]
fn oracle_pass_exits_zero_with_verdict() {
    let f = temp_program(
        "(def main (forall) (fn (r (rec wr (n u8))) (rec wr (n u8))
           (take x n y r (put x n (op + y 1)))))",
    );
    let out = cogc()
        .args([
            "oracle",
            f.path().to_str().unwrap(),
            "--fn",
            "main",
            "--arg",
            r#"{"rec":{"n":5}}"#,
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let verdict: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(verdict["pass"], serde_json::json!(true));
    assert_eq!(verdict["w_out"], serde_json::json!([0]));
}

#[test]
fn usage_error_exits_three() {
    let out = cogc().args(["frobnicate"]).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
    let out = cogc().args(["run", "/nonexistent.cogc", "--fn", "f", "--arg", "1"]).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn fuel_env_var_is_honoured() {
    let f = temp_program("(def main (forall) (fn (x u8) u8 (op + (op + x 1) 1)))");
    let out = cogc()
        .env("COGC_FUEL", "1")
        .args(["run", f.path().to_str().unwrap(), "--fn", "main", "--arg", "1"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("budget"));
}

#[test]
fn emit_c_writes_both_files() {
    let dir = tempfile::tempdir().unwrap();
    let f = temp_program("(def main (forall) (fn (x u8) u8 x))");
    let out = cogc()
        .args([
            "emit-c",
            f.path().to_str().unwrap(),
            "-o",
            dir.path().to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stem = f.path().file_stem().unwrap().to_string_lossy().to_string();
    assert!(dir.path().join(format!("{stem}.c")).exists());
    assert!(dir.path().join(format!("{stem}_driver.c")).exists());
}
