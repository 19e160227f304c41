//! Compiles and runs a small C program against the generated header and the
//! static library. Skipped when no C compiler is on PATH.

use std::path::{Path, PathBuf};
use std::process::Command;

const PROGRAM: &str = r#"
#include <stdio.h>
#include <string.h>
#include "attnparse.h"

int main(int argc, char **argv) {
    if (argc < 2) return 10;
    ApArchive *a = NULL;
    if (ap_archive_open(argv[1], &a) != AP_STATUS_OK) {
        fprintf(stderr, "%s\n", ap_last_error());
        return 1;
    }
    size_t z = 0;
    if (ap_archive_sentence_length(a, 0, &z) != AP_STATUS_OK) return 2;
    char *tree = NULL;
    if (ap_decode_head(a, 0, 1, 1, AP_MEASURE_HELLINGER, NULL, 0, &tree) != AP_STATUS_OK) return 3;
    ApHead heads[2] = {{0, 1, 1}, {0, 2, 1}};
    const ApArchive *handles[1] = {a};
    char *ens = NULL;
    if (ap_ensemble_parse(handles, 1, heads, 2, 0, AP_MEASURE_JENSEN_SHANNON, false, NULL, 0, &ens) != AP_STATUS_OK) return 4;
    if (ap_archive_sentence_length(a, 999, &z) != AP_STATUS_OUT_OF_RANGE) return 5;
    printf("%zu %zu %zu\n%s\n%s\n", ap_archive_num_layers(a), ap_archive_num_heads(a), ap_archive_num_sentences(a), tree, ens);
    ap_string_free(tree);
    ap_string_free(ens);
    ap_archive_free(a);
    return 0;
}
"#;

fn compiler() -> Option<String> {
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    Command::new(&cc)
        .arg("--version")
        .output()
        .ok()
        .filter(|o| o.status.success())
        .map(|_| cc)
}

/// `target/<profile>`, derived from this test binary's location.
fn profile_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn c_program_links_and_runs() {
    let Some(cc) = compiler() else {
        eprintln!("no C compiler; skipping");
        return;
    };
    let crate_dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let lib = profile_dir().join("libattnparse_ffi.a");
    assert!(lib.exists(), "static library missing at {}", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    let exe = dir.path().join("main");
    std::fs::write(&src, PROGRAM).unwrap();
    let status = Command::new(&cc)
        .args(["-std=c99", "-Wall", "-Wextra", "-Werror", "-I"])
        .arg(crate_dir.join("include"))
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C build failed");
    let archive = crate_dir.join("../core/tests/fixtures/enc-small.atna");
    let out = Command::new(&exe).arg(archive).output().unwrap();
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("2 3 10"));
    assert!(lines.next().unwrap().starts_with("(X "));
    assert!(lines.next().unwrap().starts_with("(X "));
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/attnparse.h")).unwrap();
    let source = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("src/lib.rs")).unwrap();
    let exports: Vec<&str> = source
        .split("extern \"C\" fn ")
        .skip(1)
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 14);
    for name in exports {
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
}
