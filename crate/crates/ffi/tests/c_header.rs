//! Compiles and runs a C program against the generated header and the static
//! library. Skipped when no C compiler is on the path.

use std::path::{Path, PathBuf};
use std::process::Command;

const PROGRAM: &str = r#"
#include <stdio.h>
#include <string.h>
#include "ris_semcom.h"

int main(void) {
    RscSpec *spec = NULL;
    if (rsc_spec_from_toml("scenario.bogus = 1\n", &spec) != RSC_STATUS_CONFIG) return 1;
    if (rsc_last_error() == NULL || strstr(rsc_last_error(), "bogus") == NULL) return 2;
    if (rsc_spec_from_toml("experiment.channel_mode = \"blocked\"\nexperiment.freeze_channel = true\n", &spec) != RSC_STATUS_OK) return 3;
    uint8_t idx[1];
    double rate = 0.0;
    if (rsc_oracle(spec, 1, idx, 1, &rate) != RSC_STATUS_OK || !(rate > 0.0)) return 4;
    rsc_spec_free(spec);
    printf("ok %s %u %f\n", rsc_version(), idx[0], rate);
    return 0;
}
"#;

fn compiler() -> Option<&'static str> {
    ["cc", "gcc", "clang"].into_iter().find(|c| Command::new(c).arg("--version").output().is_ok_and(|o| o.status.success()))
}

/// The static library sits next to the test binary's parent directory.
fn static_lib() -> Option<PathBuf> {
    let exe = std::env::current_exe().ok()?;
    let profile_dir = exe.parent()?.parent()?;
    let lib = profile_dir.join("libris_semcom_ffi.a");
    lib.exists().then_some(lib)
}

#[test]
fn header_compiles_and_links() {
    let Some(cc) = compiler() else {
        eprintln!("no C compiler, skipping");
        return;
    };
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(&src, PROGRAM).unwrap();

    let syntax = Command::new(cc).args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"]).arg(&include).arg(&src).output().unwrap();
    assert!(syntax.status.success(), "{}", String::from_utf8_lossy(&syntax.stderr));

    let Some(lib) = static_lib() else {
        eprintln!("static library not built, skipping link step");
        return;
    };
    let exe = dir.path().join("main");
    let link = Command::new(cc)
        .args(["-std=c99", "-I"])
        .arg(&include)
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .output()
        .unwrap();
    assert!(link.status.success(), "{}", String::from_utf8_lossy(&link.stderr));
    let run = Command::new(&exe).output().unwrap();
    assert!(run.status.success(), "exit {:?}", run.status.code());
    assert!(String::from_utf8_lossy(&run.stdout).starts_with("ok "));
}
