//! CLI contract tests: exit codes, dry-run behavior, run-directory naming,
//! override plumbing, and byte-level reproducibility of whole runs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn forge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_deprofile-forge"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_config() -> String {
    fixture("run.toml").to_str().unwrap().to_string()
}

fn stderr_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

/// All files under `dir`, keyed by path relative to it.
fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(current) = stack.pop() {
        for entry in std::fs::read_dir(&current).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let relative = path.strip_prefix(dir).unwrap().to_str().unwrap().to_string();
                files.insert(relative, std::fs::read(&path).unwrap());
            }
        }
    }
    files
}

fn single_run_dir(out_dir: &Path) -> PathBuf {
    let mut entries: Vec<PathBuf> =
        std::fs::read_dir(out_dir).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(entries.len(), 1, "expected exactly one run directory in {out_dir:?}");
    entries.pop().unwrap()
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(forge(&["--help"]).status.code(), Some(0));
    assert_eq!(forge(&["--version"]).status.code(), Some(0));
    assert_eq!(forge(&["prompt", "--help"]).status.code(), Some(0));
}

#[test]
fn unknown_flag_is_usage_error() {
    let output = forge(&["run", "--config", &run_config(), "--bogus"]);
    assert_eq!(output.status.code(), Some(1));
    assert!(stderr_of(&output).contains("--bogus"));
}

#[test]
fn missing_config_is_usage_error() {
    let output = forge(&["run"]);
    assert_eq!(output.status.code(), Some(1));
    assert!(stderr_of(&output).contains("--config"));
}

#[test]
fn malformed_override_is_usage_error() {
    let output = forge(&["run", "--config", &run_config(), "--set", "no-equals-here"]);
    assert_eq!(output.status.code(), Some(1), "stderr: {}", stderr_of(&output));
}

#[test]
fn corrupt_input_is_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let corrupt = dir.path().join("broken.jsonl");
    std::fs::write(&corrupt, "{this is not json\n").unwrap();
    let out_dir = dir.path().join("out");
    let output = forge(&[
        "ingest",
        "--config",
        &run_config(),
        "--set",
        &format!("paths.counseling={}", corrupt.display()),
        "--set",
        &format!("paths.out_dir={}", out_dir.display()),
    ]);
    assert_eq!(output.status.code(), Some(2), "stderr: {}", stderr_of(&output));
    let stderr = stderr_of(&output);
    assert!(stderr.contains("broken.jsonl:1"), "error must name file and line: {stderr}");
}

#[test]
fn missing_stage_input_is_data_error() {
    let dir = tempfile::tempdir().unwrap();
    // `match` without a prior ingest: the error names the absent artifact.
    let output = forge(&[
        "match",
        "--config",
        &run_config(),
        "--set",
        &format!("paths.out_dir={}", dir.path().display()),
    ]);
    assert_eq!(output.status.code(), Some(2), "stderr: {}", stderr_of(&output));
    let stderr = stderr_of(&output);
    assert!(
        stderr.contains("missing input") && stderr.contains("ingest/counseling.jsonl"),
        "error must name the missing file: {stderr}"
    );
}

#[test]
fn unreachable_embed_backend_is_backend_error() {
    let dir = tempfile::tempdir().unwrap();
    // Swap the embed slot to an HTTP backend nothing listens on. Every stage
    // before eval still runs on deterministic mocks.
    let output = forge(&[
        "run",
        "--config",
        &run_config(),
        "--set",
        &format!("paths.out_dir={}", dir.path().display()),
        "--set",
        "random_free=false",
        "--set",
        "backends.specs.embed.provider=http",
        "--set",
        "backends.specs.embed.endpoint=http://127.0.0.1:9/v1/embeddings",
        "--set",
        "backends.specs.embed.model=none",
    ]);
    assert_eq!(output.status.code(), Some(3), "stderr: {}", stderr_of(&output));
    assert!(stderr_of(&output).contains("backend"));
}

#[test]
fn nondeterministic_backend_under_random_free_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    // Same swap but with the fixture's random_free=true left in place: the
    // config is rejected before any stage runs.
    let output = forge(&[
        "run",
        "--config",
        &run_config(),
        "--set",
        &format!("paths.out_dir={}", dir.path().display()),
        "--set",
        "backends.specs.embed.provider=http",
        "--set",
        "backends.specs.embed.endpoint=http://127.0.0.1:9/v1/embeddings",
        "--set",
        "backends.specs.embed.model=none",
    ]);
    assert_eq!(output.status.code(), Some(2), "stderr: {}", stderr_of(&output));
    assert!(stderr_of(&output).contains("random_free"));
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0, "no artifacts on reject");
}

#[test]
fn dry_run_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let output = forge(&[
        "run",
        "--config",
        &run_config(),
        "--set",
        &format!("paths.out_dir={}", dir.path().display()),
        "--dry-run",
    ]);
    assert_eq!(output.status.code(), Some(0), "stderr: {}", stderr_of(&output));
    assert_eq!(
        std::fs::read_dir(dir.path()).unwrap().count(),
        0,
        "dry run must not create any artifact"
    );
}

#[test]
fn reruns_are_byte_identical() {
    let first_dir = tempfile::tempdir().unwrap();
    let second_dir = tempfile::tempdir().unwrap();
    for dir in [&first_dir, &second_dir] {
        let output = forge(&[
            "run",
            "--config",
            &run_config(),
            "--set",
            &format!("paths.out_dir={}", dir.path().display()),
        ]);
        assert_eq!(output.status.code(), Some(0), "stderr: {}", stderr_of(&output));
    }
    let first_run = single_run_dir(first_dir.path());
    let second_run = single_run_dir(second_dir.path());
    // The output location is not part of the run identity, so both runs get
    // the same hash directory name.
    assert_eq!(first_run.file_name(), second_run.file_name());

    let first = snapshot(&first_run);
    let second = snapshot(&second_run);
    assert_eq!(
        first.keys().collect::<Vec<_>>(),
        second.keys().collect::<Vec<_>>(),
        "file sets differ"
    );
    for (path, bytes) in &first {
        assert_eq!(bytes, &second[path], "artifact {path} differs between reruns");
    }
    assert!(first.len() >= 20, "full run should produce many artifacts, got {}", first.len());
}

#[test]
fn tag_override_gets_its_own_run_dir() {
    let dir = tempfile::tempdir().unwrap();
    let out_override = format!("paths.out_dir={}", dir.path().display());
    for tags in ["basic", "full"] {
        let output = forge(&[
            "run",
            "--config",
            &run_config(),
            "--set",
            &out_override,
            "--set",
            &format!("prompt.tags={tags}"),
        ]);
        assert_eq!(output.status.code(), Some(0), "tags {tags}: {}", stderr_of(&output));
    }
    let runs: Vec<PathBuf> =
        std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(runs.len(), 2, "each tag override claims its own run directory");

    let prompts_of = |tag_list: &str| -> String {
        for run in &runs {
            let raw = std::fs::read_to_string(run.join("prompt/prompts.jsonl")).unwrap();
            let first: serde_json::Value = serde_json::from_str(raw.lines().next().unwrap()).unwrap();
            if first["tags"] == tag_list {
                return raw;
            }
        }
        panic!("no run with tags {tag_list}");
    };
    let basic = prompts_of("B,R,P");
    let full = prompts_of("B,R,P,S,A,C,T");
    assert!(!basic.contains("Life-Event Timeline Cards"));
    assert!(full.contains("Life-Event Timeline Cards"));
}

#[test]
fn prompt_tags_flag_equals_set_override() {
    let dir = tempfile::tempdir().unwrap();
    let out_override = format!("paths.out_dir={}", dir.path().display());
    let seeded = forge(&[
        "run",
        "--config",
        &run_config(),
        "--set",
        &out_override,
        "--set",
        "prompt.tags=basic_st",
    ]);
    assert_eq!(seeded.status.code(), Some(0), "stderr: {}", stderr_of(&seeded));
    let run_dir = single_run_dir(dir.path());
    let before = std::fs::read(run_dir.join("prompt/prompts.jsonl")).unwrap();

    // The --tags flag is shorthand for the same override, so it must land in
    // the same run directory and regenerate identical prompts.
    let reran = forge(&[
        "prompt",
        "--config",
        &run_config(),
        "--set",
        &out_override,
        "--tags",
        "basic_st",
    ]);
    assert_eq!(reran.status.code(), Some(0), "stderr: {}", stderr_of(&reran));
    assert_eq!(
        std::fs::read_dir(dir.path()).unwrap().count(),
        1,
        "flag and override must hash to the same run directory"
    );
    let after = std::fs::read(run_dir.join("prompt/prompts.jsonl")).unwrap();
    assert_eq!(before, after);
}
