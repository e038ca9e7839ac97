#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

pub fn provmatch() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_provmatch"));
    cmd.env_remove("PROVMATCH_CONFIG_DIR");
    cmd
}

pub fn run(args: &[&str]) -> Output {
    provmatch().args(args).output().expect("binary runs")
}

/// Runs and insists on success, returning stdout.
pub fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "provmatch {args:?} failed with {:?}\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// `key: value` line from command output.
pub fn field<'a>(stdout: &'a str, key: &str) -> &'a str {
    stdout
        .lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix(": ")))
        .unwrap_or_else(|| panic!("no `{key}` line in\n{stdout}"))
}
