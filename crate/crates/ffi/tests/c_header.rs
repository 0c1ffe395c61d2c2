//! Compiles tests/c/smoke.c against the generated header and the static
//! library, then runs it.

use std::env;
use std::path::{Path, PathBuf};
use std::process::Command;

fn staticlib() -> PathBuf {
    // The test binary lives next to the library artifacts in target/<profile>/deps.
    let exe = env::current_exe().unwrap();
    let deps = exe.parent().unwrap();
    [deps.join("libmanet_ffi.a"), deps.parent().unwrap().join("libmanet_ffi.a")]
        .into_iter()
        .find(|p| p.exists())
        .expect("libmanet_ffi.a not built")
}

#[test]
fn c_program_links_and_runs() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let out = Path::new(env!("CARGO_TARGET_TMPDIR")).join("manet_c_smoke");
    let compiler = env::var("CC").unwrap_or_else(|_| "cc".into());
    let status = Command::new(&compiler)
        .args(["-std=c99", "-Wall", "-Werror", "-I"])
        .arg(root.join("include"))
        .arg(root.join("tests/c/smoke.c"))
        .arg(staticlib())
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&out)
        .status()
        .unwrap_or_else(|e| panic!("running {compiler}: {e}"));
    assert!(status.success(), "C compile failed");
    let run = Command::new(&out).output().unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert_eq!(String::from_utf8_lossy(&run.stdout), "c smoke ok\n");
}
