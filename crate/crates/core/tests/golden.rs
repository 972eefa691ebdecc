//! Byte-level pins on report output. Regenerate with `WATTLENS_BLESS=1`.

mod common;

#[test]
fn outputs_match_committed_goldens() {
    let golden = common::crate_dir().join("fixtures/golden");
    let dir = tempfile::tempdir().unwrap();
    let files = common::golden_run(dir.path()).unwrap();
    assert!(files.len() > 10);

    if std::env::var_os("WATTLENS_BLESS").is_some() {
        let _ = std::fs::remove_dir_all(&golden);
        for f in &files {
            let dest = golden.join(f);
            std::fs::create_dir_all(dest.parent().unwrap()).unwrap();
            std::fs::copy(dir.path().join(f), dest).unwrap();
        }
    }
    let diff = common::golden_diff(&files, dir.path(), &golden);
    assert!(diff.is_empty(), "differs from golden: {diff:?}");
}

#[test]
fn repeated_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let fa = common::golden_run(a.path()).unwrap();
    let fb = common::golden_run(b.path()).unwrap();
    assert_eq!(fa, fb);
    assert!(common::golden_diff(&fa, a.path(), b.path()).is_empty());
}
