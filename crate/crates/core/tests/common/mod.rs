//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

/// Brute-force c-TF-IDF from concatenated topic token lists:
/// tf * ln(1 + A / f) with A the mean list length and f the count over all lists.
pub fn oracle_ctfidf(topics: &[(String, Vec<String>)]) -> Vec<(String, Vec<(String, f64)>)> {
    let total: usize = topics.iter().map(|(_, toks)| toks.len()).sum();
    let a = total as f64 / topics.len() as f64;
    let count = |toks: &[String], t: &str| toks.iter().filter(|x| x.as_str() == t).count();
    topics
        .iter()
        .map(|(label, toks)| {
            let mut distinct: Vec<String> = toks.clone();
            distinct.sort();
            distinct.dedup();
            let scores = distinct
                .into_iter()
                .map(|t| {
                    let tf = count(toks, &t) as f64;
                    let f: usize = topics.iter().map(|(_, other)| count(other, &t)).sum();
                    let s = tf * (a / f as f64).ln_1p();
                    (t, s)
                })
                .collect();
            (label.clone(), scores)
        })
        .collect()
}

/// Highest `m` scores, ties by ascending token.
pub fn oracle_top(scores: &[(String, f64)], m: usize) -> Vec<String> {
    let mut v = scores.to_vec();
    v.sort_by(|x, y| y.1.partial_cmp(&x.1).unwrap().then(x.0.cmp(&y.0)));
    v.into_iter().take(m).map(|(t, _)| t).collect()
}

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/demo")
}

pub fn copy_dir(from: &Path, to: &Path) {
    fs::create_dir_all(to).unwrap();
    for entry in fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        let target = to.join(entry.file_name());
        if entry.file_type().unwrap().is_dir() {
            copy_dir(&entry.path(), &target);
        } else {
            fs::copy(entry.path(), target).unwrap();
        }
    }
}

/// Runs the CLI with a clean environment for the pipeline's variables.
pub fn cli(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_prompttopic"))
        .current_dir(dir)
        .args(args)
        .env_remove("PT_CACHE_DIR")
        .env_remove("PT_LLM_ENDPOINT")
        .env_remove("PT_LLM_API_KEY")
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

/// Every artifact under `out`, excluding the response cache, as (relative path, bytes).
pub fn artifacts(out: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    collect(out, out, &mut files);
    files.sort();
    files
}

fn collect(root: &Path, dir: &Path, files: &mut Vec<(String, Vec<u8>)>) {
    for entry in fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        if p.file_name().is_some_and(|n| n == "cache") {
            continue;
        }
        if p.is_dir() {
            collect(root, &p, files);
        } else {
            let rel = p.strip_prefix(root).unwrap().display().to_string();
            files.push((rel, fs::read(&p).unwrap()));
        }
    }
}
