#![allow(dead_code)]

pub mod synthetic;

use std::path::{Path, PathBuf};

pub fn toy_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../toy")
}

/// Set to rewrite the committed toy data and frozen fixtures.
pub const REGENERATE: &str = "LIR_REGENERATE_FIXTURES";

pub fn regenerate() -> bool {
    std::env::var_os(REGENERATE).is_some()
}

/// Compares `contents` with the committed file, or rewrites it when
/// regenerating.
pub fn check_fixture(path: &Path, contents: &[u8]) {
    if regenerate() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(path, contents).unwrap();
        return;
    }
    let committed = std::fs::read(path)
        .unwrap_or_else(|e| panic!("{}: {e} (set {REGENERATE}=1 to create it)", path.display()));
    assert!(committed == contents, "{} differs from the regenerated contents", path.display());
}

pub fn copy_dir(from: &Path, to: &Path) {
    std::fs::create_dir_all(to).unwrap();
    for entry in std::fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        let target = to.join(entry.file_name());
        if entry.file_type().unwrap().is_dir() {
            copy_dir(&entry.path(), &target);
        } else {
            std::fs::copy(entry.path(), target).unwrap();
        }
    }
}

/// A scratch working directory holding copies of the toy data and configs.
pub fn toy_workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    for sub in ["data", "configs"] {
        copy_dir(&toy_dir().join(sub), &dir.path().join(sub));
    }
    dir
}

pub struct Outcome {
    pub code: Option<i32>,
    pub stdout: String,
    pub stderr: String,
}

impl Outcome {
    pub fn ok(&self) -> bool {
        self.code == Some(0)
    }

    #[track_caller]
    pub fn expect_ok(self) -> Self {
        assert!(self.ok(), "lir failed ({:?}):\n{}", self.code, self.stderr);
        self
    }
}

/// Runs the `lir` binary in `cwd`.
pub fn lir(cwd: &Path, args: &[&str]) -> Outcome {
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_lir"))
        .current_dir(cwd)
        .args(args)
        .output()
        .expect("spawning lir");
    Outcome {
        code: out.status.code(),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

pub const BI_KINDS: [&str; 3] = ["dense", "sparse", "multi"];

/// fit → index → search for every bi-encoder kind, then cross-encoder fit
/// and re-rank of the dense run. `extra` is appended to every invocation.
pub fn run_toy_pipeline(cwd: &Path, extra: &[&str]) {
    let stage = |name: &str, configs: &[String]| {
        let mut args = vec![name];
        for c in configs {
            args.extend(["--config", c.as_str()]);
        }
        args.extend_from_slice(extra);
        lir(cwd, &args).expect_ok();
    };
    for kind in BI_KINDS {
        stage("fit", &[format!("configs/{kind}/fit.yaml")]);
        stage("index", &[format!("configs/{kind}/index.yaml")]);
        stage("search", &[format!("configs/{kind}/search.yaml")]);
    }
    stage("fit", &["configs/cross/fit.yaml".into()]);
    stage("re_rank", &["configs/cross/re_rank.yaml".into()]);
}

/// fit-free pipeline on the 8-doc corpus with seeded, untrained models.
pub fn run_tiny_pipeline(cwd: &Path, extra: &[&str]) {
    for (stage, configs) in [
        ("index", &["configs/tiny/model.yaml", "configs/tiny/index.yaml"][..]),
        ("search", &["configs/tiny/model.yaml", "configs/tiny/search.yaml"][..]),
        ("re_rank", &["configs/tiny/re_rank.yaml"][..]),
    ] {
        let mut args = vec![stage];
        for c in configs {
            args.extend(["--config", c]);
        }
        args.extend_from_slice(extra);
        lir(cwd, &args).expect_ok();
    }
}

/// Every file under `root`, relative path to contents, sorted by path.
pub fn snapshot(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<(PathBuf, Vec<u8>)>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                out.push((path.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&path).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(root, root, &mut out);
    out.sort();
    out
}
