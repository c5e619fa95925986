use std::path::PathBuf;
use std::process::Command;

/// Runs python/smoke_test.py against the cdylib cargo built alongside this test.
#[test]
fn python_smoke_script() {
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().and_then(|p| p.parent()).unwrap();
    let lib = ["libqubo_bo_py.so", "libqubo_bo_py.dylib", "qubo_bo_py.dll"]
        .iter()
        .map(|n| profile_dir.join(n))
        .find(|p| p.exists())
        .expect("cdylib is built with the test target");
    let script = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../python/smoke_test.py");
    let out = match Command::new("python3").arg(&script).env("QUBO_BO_PY_LIB", &lib).output() {
        Ok(out) => out,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            eprintln!("python3 not found, skipping");
            return;
        }
        Err(e) => panic!("{e}"),
    };
    assert!(
        out.status.success(),
        "{}\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8_lossy(&out.stdout).contains("smoke test passed"));
}
