use std::process::Command;

fn svmamba(args: &[&str], dir: &std::path::Path) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_svmamba")).args(args).current_dir(dir).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stdout).into_owned())
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(svmamba(&["no-such-command"], dir.path()).0, 2);
    assert_eq!(svmamba(&["eig"], dir.path()).0, 2);
    assert_eq!(svmamba(&["traverse", "--image", "missing.ppm"], dir.path()).0, 2);
    assert_eq!(svmamba(&["eig", "--fixture", "bogus:1"], dir.path()).0, 2);
}

#[test]
fn eig_on_fixture_passes() {
    let dir = tempfile::tempdir().unwrap();
    let (code, stdout) = svmamba(&["eig", "--fixture", "grid:6x7", "--m", "3"], dir.path());
    assert_eq!(code, 0, "{stdout}");
    assert!(stdout.contains("eigenvalues_match_oracle=pass"), "{stdout}");
}

#[test]
fn traverse_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _) = svmamba(&["traverse", "--m", "2", "--out", "t"], dir.path());
    assert_eq!(code, 0);
    for name in ["t.plan.txt", "t.order0_asc.ppm", "t.order1_desc.ppm", "t.report.txt"] {
        assert!(dir.path().join(name).exists(), "{name} missing");
    }
}
